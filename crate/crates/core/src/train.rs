//! UAE training: the Monte-Carlo objective, Frobenius-norm control, the
//! minibatch Adam loop with best-validation restore, and transfer modes.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nets::{backward, BatchTape, DecoderFamily, UaeModel};
use crate::optim::{adam_update, AdamState};
use crate::par;
use crate::rng::{derive_seed, Rng};

// Stream tags; each consumer of randomness gets its own derived seed so runs
// are restartable per epoch.
const STREAM_SHUFFLE: u64 = 0x5348_5546;
const STREAM_NOISE: u64 = 0x4E4F_4953;
const STREAM_VALID: u64 = 0x5641_4C44;

/// Multiplier grid for the Frobenius-penalty line search, tried in order;
/// the first multiplier whose best-validation model satisfies
/// `||W||_F <= 1.05 k` wins.
pub const PENALTY_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

/// Slack factor accepted on the norm bound.
pub const NORM_SLACK: f64 = 1.05;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience_epochs: usize,
    pub sigma: f64,
    /// Frobenius bound k; 0 disables the constraint.
    pub norm_bound_k: f64,
    pub penalty_multiplier: f64,
    pub freeze_encoder: bool,
    pub freeze_decoder: bool,
    pub seed: u64,
    pub decoder_family: DecoderFamily,
}

impl TrainConfig {
    /// Paper-default hyperparameters: Adam at 1e-3, batch 100, 200 epochs,
    /// sigma 0.1, patience equal to the epoch budget.
    pub fn defaults(seed: u64) -> Self {
        Self {
            lr: 1e-3,
            batch_size: 100,
            max_epochs: 200,
            patience_epochs: 200,
            sigma: 0.1,
            norm_bound_k: 0.0,
            penalty_multiplier: 0.0,
            freeze_encoder: false,
            freeze_decoder: false,
            seed,
            decoder_family: DecoderFamily::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.freeze_encoder && self.freeze_decoder {
            return Err(Error::Validation(
                "freeze_encoder and freeze_decoder cannot both be set".into(),
            ));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Validation(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if self.norm_bound_k < 0.0 || self.penalty_multiplier < 0.0 {
            return Err(Error::Validation(
                "norm bound and penalty multiplier must be non-negative".into(),
            ));
        }
        if self.max_epochs > 0 && (!self.sigma.is_finite() || self.sigma <= 0.0) {
            return Err(Error::Validation(
                "sigma must be positive during training (0 is evaluation-only)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Early,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Early => "early",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub frob_w: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub stopped: StopReason,
}

impl TrainReport {
    pub fn final_frob_w(&self) -> Option<f64> {
        self.epochs.get(self.best_epoch).map(|e| e.frob_w)
    }
}

fn validate_unit_range(batch: &Matrix, what: &str) -> Result<()> {
    for (i, v) in batch.as_slice().iter().enumerate() {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::Validation(format!(
                "bernoulli decoder requires {what} in [0,1]; found {v} at flat index {i}"
            )));
        }
    }
    Ok(())
}

/// Forwards every row of `batch` with the matching noise row, in chunk order.
fn batch_tapes(model: &UaeModel, batch: &Matrix, noise: &Matrix) -> Result<BatchTape> {
    if batch.cols() != model.signal_dim() {
        return Err(Error::Dimension(format!(
            "batch width {} does not match model signal dimension {}",
            batch.cols(),
            model.signal_dim()
        )));
    }
    assert_eq!(noise.rows(), batch.rows(), "noise rows");
    assert_eq!(noise.cols(), model.measurement_count(), "noise cols");
    let chunks = par::map_chunks(batch.rows(), par::CHUNK_SIZE, |range| {
        range
            .map(|i| {
                model
                    .forward_example(batch.row(i), noise.row(i))
                    .expect("shapes validated above")
            })
            .collect::<Vec<_>>()
    });
    Ok(BatchTape {
        examples: chunks.into_iter().flatten().collect(),
    })
}

fn mean_nll(model: &UaeModel, tape: &BatchTape) -> f64 {
    let partials = par::map_chunks(tape.examples.len(), par::CHUNK_SIZE, |range| {
        tape.examples[range]
            .iter()
            .map(|ex| model.example_nll(ex))
            .sum::<f64>()
    });
    partials.into_iter().sum::<f64>() / tape.batch_size() as f64
}

/// Single-sample Monte-Carlo estimate of the negated variational bound:
/// the mean negative log-likelihood of each row under one reparameterized
/// measurement draw.
pub fn uae_loss(model: &UaeModel, batch: &Matrix, rng: &mut Rng) -> Result<(f64, BatchTape)> {
    let noise = draw_noise(batch.rows(), model.measurement_count(), rng);
    uae_loss_with_noise(model, batch, &noise)
}

/// Same objective with the noise draws fixed by the caller; the gradient
/// checks differentiate through this path.
pub fn uae_loss_with_noise(
    model: &UaeModel,
    batch: &Matrix,
    noise: &Matrix,
) -> Result<(f64, BatchTape)> {
    if batch.rows() == 0 {
        return Err(Error::Validation("empty batch".into()));
    }
    if model.decoder.family == DecoderFamily::Bernoulli {
        validate_unit_range(batch, "data")?;
    }
    let tape = batch_tapes(model, batch, noise)?;
    Ok((mean_nll(model, &tape), tape))
}

/// Draws a `rows x cols` matrix of standard normals, row by row.
pub fn draw_noise(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let mut noise = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for v in noise.row_mut(i) {
            *v = rng.standard_normal();
        }
    }
    noise
}

/// Squared-hinge Frobenius penalty: `multiplier * max(0, ||W||_F - k)^2`.
pub fn frobenius_penalty(w: &Matrix, k: f64, multiplier: f64) -> f64 {
    if multiplier == 0.0 || k <= 0.0 {
        return 0.0;
    }
    let excess = (w.frobenius_norm() - k).max(0.0);
    multiplier * excess * excess
}

/// The constrained objective of the norm-bounded UAE.
pub fn constrained_loss(uae_loss: f64, w: &Matrix, k: f64, multiplier: f64) -> f64 {
    uae_loss + frobenius_penalty(w, k, multiplier)
}

/// Adds the penalty gradient (w.r.t. W, laid out row-major at the start of
/// the flat parameter vector) into `grads`.
fn add_penalty_grad(w: &Matrix, k: f64, multiplier: f64, grads: &mut [f64]) {
    if multiplier == 0.0 || k <= 0.0 {
        return;
    }
    let norm = w.frobenius_norm();
    if norm <= k || norm == 0.0 {
        return;
    }
    // d/dW [mult (||W|| - k)^2] = 2 mult (||W|| - k) W / ||W||
    let coef = 2.0 * multiplier * (norm - k) / norm;
    for (g, v) in grads.iter_mut().zip(w.as_slice()) {
        *g += coef * v;
    }
}

/// Mean validation objective under noise drawn from the dedicated validation
/// stream. The stream restarts at every call, so epoch-to-epoch comparisons
/// see identical draws. The Frobenius penalty is included: model selection
/// has to honor the same constraint the optimizer does, otherwise the best
/// epoch is systematically one where W had drifted past the bound.
fn validation_loss(model: &UaeModel, valid: &Matrix, cfg: &TrainConfig) -> Result<f64> {
    let mut rng = Rng::new(derive_seed(cfg.seed, STREAM_VALID));
    let noise = draw_noise(valid.rows(), model.measurement_count(), &mut rng);
    let (loss, _) = uae_loss_with_noise(model, valid, &noise)?;
    Ok(constrained_loss(
        loss,
        &model.channel.encoder.w,
        cfg.norm_bound_k,
        cfg.penalty_multiplier,
    ))
}

/// Minibatch Adam on the constrained objective. Shuffling and noise are
/// reseeded per epoch from `config.seed`; the returned model carries the
/// parameters of the best validation epoch; frozen components are never
/// touched.
pub fn fit(mut model: UaeModel, data: &Dataset, cfg: &TrainConfig) -> Result<(UaeModel, TrainReport)> {
    cfg.validate()?;
    if data.train.cols() != model.signal_dim() {
        return Err(Error::Dimension(format!(
            "training data width {} does not match model signal dimension {}",
            data.train.cols(),
            model.signal_dim()
        )));
    }
    if data.valid.rows() == 0 {
        return Err(Error::Validation("fit requires a non-empty validation split".into()));
    }
    model.channel.sigma = cfg.sigma;
    model.decoder.family = cfg.decoder_family;
    if cfg.decoder_family == DecoderFamily::Bernoulli {
        crate::nets::DecoderNet::new(model.decoder.mlp.clone(), cfg.decoder_family)?;
        validate_unit_range(&data.train, "training data")?;
        validate_unit_range(&data.valid, "validation data")?;
    }

    if cfg.max_epochs == 0 {
        let valid_loss = validation_loss(&model, &data.valid, cfg)?;
        return Ok((
            model,
            TrainReport {
                epochs: Vec::new(),
                best_epoch: 0,
                best_valid_loss: valid_loss,
                stopped: StopReason::MaxEpochs,
            },
        ));
    }
    if data.train.rows() == 0 {
        return Err(Error::Validation("fit requires a non-empty training split".into()));
    }

    let n_train = data.train.rows();
    let m = model.measurement_count();
    let enc_len = model.encoder_param_count();
    let total_len = model.param_count();

    let mut params = model.params();
    let mut adam = AdamState::new(total_len, cfg.lr);

    let mut best_params = params.clone();
    let mut best_valid = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut epochs = Vec::with_capacity(cfg.max_epochs);
    let mut stopped = StopReason::MaxEpochs;

    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        let mut shuffle_rng = Rng::new(derive_seed(derive_seed(cfg.seed, STREAM_SHUFFLE), epoch as u64));
        shuffle_rng.shuffle(&mut order);
        let mut noise_rng = Rng::new(derive_seed(derive_seed(cfg.seed, STREAM_NOISE), epoch as u64));

        let mut loss_weighted = 0.0;
        for (step, batch_idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.train.gather_rows(batch_idx);
            let noise = draw_noise(batch.rows(), m, &mut noise_rng);
            let (data_loss, tape) = uae_loss_with_noise(&model, &batch, &noise)?;
            let step_loss = constrained_loss(
                data_loss,
                &model.channel.encoder.w,
                cfg.norm_bound_k,
                cfg.penalty_multiplier,
            );
            if !step_loss.is_finite() {
                return Err(Error::Training(format!(
                    "loss became non-finite at epoch {epoch}, step {step}"
                )));
            }
            loss_weighted += step_loss * batch.rows() as f64;

            let mut grads = backward(&model, &tape)?;
            // the penalty only touches W, the first block of the flat layout
            add_penalty_grad(
                &model.channel.encoder.w,
                cfg.norm_bound_k,
                cfg.penalty_multiplier,
                &mut grads,
            );
            if cfg.freeze_encoder {
                grads[..enc_len].fill(0.0);
            }
            if cfg.freeze_decoder {
                grads[enc_len..].fill(0.0);
            }
            adam_update(&mut params, &grads, &mut adam).map_err(|e| {
                Error::Training(format!("epoch {epoch}, step {step}: {e}"))
            })?;
            model.set_params(&params);
        }

        let train_loss = loss_weighted / n_train as f64;
        let valid_loss = validation_loss(&model, &data.valid, cfg)?;
        if !valid_loss.is_finite() {
            return Err(Error::Training(format!(
                "validation loss became non-finite at epoch {epoch}"
            )));
        }
        epochs.push(EpochStats {
            epoch,
            train_loss,
            valid_loss,
            frob_w: model.channel.encoder.w.frobenius_norm(),
        });

        if valid_loss < best_valid {
            best_valid = valid_loss;
            best_epoch = epoch;
            best_params.copy_from_slice(&params);
        } else if epoch - best_epoch >= cfg.patience_epochs {
            stopped = StopReason::Early;
            break;
        }
    }

    model.set_params(&best_params);
    Ok((
        model,
        TrainReport {
            epochs,
            best_epoch,
            best_valid_loss: best_valid,
            stopped,
        },
    ))
}

/// Runs `fit` over [`PENALTY_GRID`], returning the first (smallest)
/// multiplier whose best-validation model satisfies the norm bound with
/// [`NORM_SLACK`]. With `k = 0`, or with a frozen encoder (the penalty
/// cannot move a frozen W), this is a single unconstrained fit.
pub fn fit_with_line_search(
    model: &UaeModel,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(UaeModel, TrainReport, f64)> {
    if cfg.norm_bound_k == 0.0 || cfg.freeze_encoder {
        let mut plain = cfg.clone();
        plain.penalty_multiplier = 0.0;
        let (trained, report) = fit(model.clone(), data, &plain)?;
        return Ok((trained, report, 0.0));
    }
    for &multiplier in &PENALTY_GRID {
        let mut attempt = cfg.clone();
        attempt.penalty_multiplier = multiplier;
        let (trained, report) = fit(model.clone(), data, &attempt)?;
        let norm = trained.channel.encoder.w.frobenius_norm();
        if norm <= NORM_SLACK * cfg.norm_bound_k {
            return Ok((trained, report, multiplier));
        }
    }
    Err(Error::Training(format!(
        "no multiplier in {PENALTY_GRID:?} brought ||W||_F within {NORM_SLACK} * {}",
        cfg.norm_bound_k
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMode {
    /// Source encoder kept, decoder retrained on the target domain.
    SourceEncoder,
    /// Source decoder kept, encoder retrained on the target domain.
    SourceDecoder,
}

impl TransferMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" => Ok(TransferMode::SourceEncoder),
            "sd" => Ok(TransferMode::SourceDecoder),
            other => Err(Error::Validation(format!("unknown transfer mode '{other}'"))),
        }
    }
}

/// Retrains the non-frozen half of `source` on the target dataset.
pub fn transfer_fit(
    source: &UaeModel,
    target: &Dataset,
    mode: TransferMode,
    cfg: &TrainConfig,
) -> Result<(UaeModel, TrainReport)> {
    if target.train.cols() != source.signal_dim() {
        return Err(Error::Validation(format!(
            "target dimension {} does not match source model dimension {}",
            target.train.cols(),
            source.signal_dim()
        )));
    }
    let mut cfg = cfg.clone();
    // the decoder is the source's: its output family travels with it
    cfg.decoder_family = source.decoder.family;
    match mode {
        TransferMode::SourceEncoder => {
            cfg.freeze_encoder = true;
            cfg.freeze_decoder = false;
        }
        TransferMode::SourceDecoder => {
            cfg.freeze_encoder = false;
            cfg.freeze_decoder = true;
        }
    }
    fit(source.clone(), target, &cfg)
}

/// Result of one architecture's gradient check.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub description: String,
    pub param_count: usize,
    pub max_rel_err: f64,
}

/// Compares backprop against central finite differences on `count` random
/// architectures at step `h`, returning per-architecture worst relative
/// errors. The denominator is floored at 1e-4, which turns the tolerance
/// into an absolute bound of `tol * 1e-4` for near-zero gradients.
pub fn gradcheck_random_architectures(count: usize, seed: u64, h: f64) -> Result<Vec<GradCheck>> {
    use crate::nets::{
        DecoderNet, Encoder, GaussianChannel, Mlp, MlpSpec, OutputActivation,
    };
    use crate::optim::{finite_diff_grad, relative_error};

    let mut out = Vec::with_capacity(count);
    for arch in 0..count {
        let mut rng = Rng::new(derive_seed(seed, 1000 + arch as u64));
        let n = 3 + rng.below(6); // 3..=8
        let m = 1 + rng.below(n.min(5));
        let family = if arch % 2 == 0 {
            DecoderFamily::Gaussian
        } else {
            DecoderFamily::Bernoulli
        };
        let out_act = if family == DecoderFamily::Bernoulli || rng.below(2) == 0 {
            OutputActivation::Sigmoid
        } else {
            OutputActivation::Identity
        };
        let with_acquisition = rng.below(2) == 0;
        let sigma = rng.uniform_in(0.1, 0.5);

        let encoder = if with_acquisition {
            let l = 2 + rng.below(5);
            let hidden = 4 + rng.below(13); // <= 16
            let acq = Mlp::random_init(
                MlpSpec::new(vec![n, hidden, l], OutputActivation::Identity)?,
                &mut rng,
            );
            let w_data = (0..m * l).map(|_| rng.normal(0.0, (1.0 / l as f64).sqrt())).collect();
            Encoder::with_acquisition(Matrix::from_vec(m, l, w_data)?, acq)?
        } else {
            let w_data = (0..m * n).map(|_| rng.normal(0.0, (1.0 / n as f64).sqrt())).collect();
            Encoder::linear(Matrix::from_vec(m, n, w_data)?)
        };
        let hidden = 4 + rng.below(13);
        let mut dec = Mlp::random_init(MlpSpec::new(vec![m, hidden, n], out_act)?, &mut rng);
        // non-zero biases so every bias gradient is exercised off its init
        for layer in &mut dec.layers {
            for b in &mut layer.bias {
                *b = rng.normal(0.0, 0.1);
            }
        }
        let model = UaeModel::new(
            GaussianChannel::new(encoder, sigma)?,
            DecoderNet::new(dec, family)?,
        )?;

        let batch_rows = 3;
        let mut data = Vec::with_capacity(batch_rows * n);
        for _ in 0..batch_rows * n {
            data.push(rng.uniform_in(0.05, 0.95));
        }
        let batch = Matrix::from_vec(batch_rows, n, data)?;
        let noise = draw_noise(batch_rows, m, &mut rng);

        let params = model.params();
        let (_, tape) = uae_loss_with_noise(&model, &batch, &noise)?;
        let analytic = backward(&model, &tape)?;

        let probe = std::cell::RefCell::new(model.clone());
        let numeric = finite_diff_grad(
            |p: &[f64]| {
                let mut m = probe.borrow_mut();
                m.set_params(p);
                uae_loss_with_noise(&m, &batch, &noise).map(|(l, _)| l).unwrap_or(f64::NAN)
            },
            &params,
            h,
        )?;

        let max_rel_err = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| relative_error(*a, *b, 1e-4))
            .fold(0.0f64, f64::max);
        out.push(GradCheck {
            description: format!(
                "n={n} m={m} acq={} family={} sigma={sigma:.2}",
                with_acquisition,
                family.as_str()
            ),
            param_count: params.len(),
            max_rel_err,
        });
    }
    Ok(out)
}
