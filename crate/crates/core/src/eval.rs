//! Metrics and experiment-level procedures: per-image l2 error, the kNN
//! probe, subspace angles, and the PCA-vs-UAE comparison on the 2-D mixture.

use crate::baselines::pca_fit;
use crate::data::{make_two_gaussian_mixture, Dataset, MixtureParams};
use crate::eigen::sym_eig_topm;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm2, Matrix};
use crate::nets::{
    DecoderFamily, DecoderNet, Encoder, GaussianChannel, Mlp, MlpSpec, OutputActivation, UaeModel,
};
use crate::par;
use crate::rng::{derive_seed, Rng};
use crate::train::{fit_with_line_search, TrainConfig};

/// One row of the results table.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub method: String,
    pub m: usize,
    pub mean_l2_per_image: f64,
    pub std_err: f64,
    pub n_test: usize,
}

impl EvalReport {
    pub fn csv_header() -> &'static str {
        "method,m,seed,mean_l2_per_image,std_err,n_test"
    }

    pub fn csv_row(&self, seed: u64) -> String {
        format!(
            "{},{},{seed},{},{},{}",
            self.method,
            self.m,
            crate::data::fmt_float(self.mean_l2_per_image),
            crate::data::fmt_float(self.std_err),
            self.n_test
        )
    }
}

/// Mean over rows of the Euclidean distance between matching rows, and the
/// standard error of that mean (0 for a single row).
pub fn l2_per_image(x: &Matrix, x_hat: &Matrix) -> Result<(f64, f64)> {
    if x.shape() != x_hat.shape() {
        return Err(Error::Dimension(format!(
            "l2_per_image: {:?} vs {:?}",
            x.shape(),
            x_hat.shape()
        )));
    }
    let n = x.rows();
    if n == 0 {
        return Err(Error::Validation("l2_per_image on zero rows".into()));
    }
    let norms = par::map_items(n, |i| {
        let diff: Vec<f64> = x.row(i).iter().zip(x_hat.row(i)).map(|(a, b)| a - b).collect();
        norm2(&diff)
    });
    let mean = par::sum_items(n, |i| norms[i]) / n as f64;
    let std_err = if n < 2 {
        0.0
    } else {
        let var = par::sum_items(n, |i| (norms[i] - mean) * (norms[i] - mean)) / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Ok((mean, std_err))
}

/// Majority label among the k nearest Euclidean neighbors. Distance ties
/// break toward the lower training index; vote ties toward the smaller
/// label.
pub fn knn_predict(
    train_z: &Matrix,
    train_labels: &[u32],
    test_z: &Matrix,
    k: usize,
) -> Result<Vec<u32>> {
    let n_train = train_z.rows();
    if n_train == 0 {
        return Err(Error::Validation("knn_predict with an empty training set".into()));
    }
    if train_labels.len() != n_train {
        return Err(Error::Validation(format!(
            "{} labels for {n_train} training rows",
            train_labels.len()
        )));
    }
    if k == 0 || k > n_train {
        return Err(Error::Validation(format!(
            "k = {k} must be in 1..={n_train}"
        )));
    }
    if test_z.cols() != train_z.cols() {
        return Err(Error::Dimension(format!(
            "knn_predict: test width {} vs train width {}",
            test_z.cols(),
            train_z.cols()
        )));
    }
    Ok(par::map_items(test_z.rows(), |q| {
        let query = test_z.row(q);
        let mut dists: Vec<(f64, usize)> = (0..n_train)
            .map(|i| {
                let d2: f64 = train_z
                    .row(i)
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, i)
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut votes: Vec<(u32, usize)> = Vec::new();
        for &(_, idx) in dists.iter().take(k) {
            let label = train_labels[idx];
            match votes.iter_mut().find(|(l, _)| *l == label) {
                Some((_, c)) => *c += 1,
                None => votes.push((label, 1)),
            }
        }
        votes
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .unwrap()
            .0
    }))
}

pub fn classification_accuracy(predicted: &[u32], truth: &[u32]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / predicted.len().max(1) as f64
}

/// Orthonormalizes the rows of `a` by modified Gram-Schmidt; errors if the
/// rows are (numerically) rank deficient.
fn orthonormal_rows(a: &Matrix) -> Result<Matrix> {
    let m = a.rows();
    let mut q = a.clone();
    for i in 0..m {
        // double pass for numerical orthogonality
        for _ in 0..2 {
            for j in 0..i {
                let proj = dot(q.row(i), q.row(j));
                let qj = q.row(j).to_vec();
                for (v, w) in q.row_mut(i).iter_mut().zip(&qj) {
                    *v -= proj * w;
                }
            }
        }
        let norm = norm2(q.row(i));
        let original = norm2(a.row(i)).max(1e-300);
        if norm <= 1e-10 * original || norm == 0.0 {
            return Err(Error::Validation(format!(
                "rows are rank deficient: row {i} of {m} collapses under orthogonalization"
            )));
        }
        for v in q.row_mut(i) {
            *v /= norm;
        }
    }
    Ok(q)
}

/// Largest principal angle (degrees) between the row spaces of `a` and `b`.
///
/// Both inputs are orthonormalized, then the angle is taken from the sines:
/// the singular values of `Qb (I - Qa^T Qa)` are `sin(theta_i)`
/// (Bjorck-Golub), and `asin` stays well conditioned at the small angles the
/// subspace-agreement checks care about, where the cosine route would lose
/// half the significant digits.
pub fn principal_angle(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.cols() != b.cols() || a.rows() != b.rows() {
        return Err(Error::Dimension(format!(
            "principal_angle: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let qa = orthonormal_rows(a)?;
    let qb = orthonormal_rows(b)?;
    // D = Qb - (Qb Qa^T) Qa, the part of Qb outside span(Qa)
    let cross = qb.matmul(&qa.transpose())?;
    let mut d = qb.clone();
    d.add_scaled_mut(&cross.matmul(&qa)?, -1.0);
    let square = d.matmul(&d.transpose())?;
    let (eigs, _) = sym_eig_topm(&square, 1)?;
    let sin_sq = eigs[0].clamp(0.0, 1.0);
    Ok(sin_sq.sqrt().asin().to_degrees())
}

/// Configuration of the 2-D mixture comparison (PCA + closed-form linear
/// decoder against a UAE with linear encoder and MLP decoder).
#[derive(Debug, Clone)]
pub struct MixtureCompareConfig {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub m: usize,
    pub sigma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decoder_hidden: Vec<usize>,
    pub mixture: MixtureParams,
    pub seed: u64,
}

impl MixtureCompareConfig {
    pub fn defaults(seed: u64) -> Self {
        Self {
            n_train: 100,
            n_valid: 100,
            n_test: 500,
            m: 1,
            sigma: 0.1,
            epochs: 600,
            batch_size: 25,
            lr: 3e-3,
            decoder_hidden: vec![64, 64],
            mixture: MixtureParams::default(),
            seed,
        }
    }
}

/// The PCA branch: project to m dimensions, decode with the least-squares
/// linear map fitted on the training projections.
pub struct LinearDecodedPca {
    pub pca: crate::baselines::PcaModel,
    /// n x m slope matrix and intercept, fitted by least squares.
    pub slope: Matrix,
    pub intercept: Vec<f64>,
}

impl LinearDecodedPca {
    /// Fits the projection on `train` and the decoder `x ~ A t + b` by
    /// ordinary least squares (computed from moments; the normal-equation
    /// route serves as the test oracle).
    pub fn fit(train: &Matrix, m: usize) -> Result<Self> {
        let pca = pca_fit(train, m)?;
        let t = pca.project_rows(train);
        let n_rows = train.rows();
        let dim = train.cols();

        // moments of t
        let t_mean = t.mean_row();
        let mut t_cov = Matrix::zeros(m, m); // biased covariance of projections
        for i in 0..n_rows {
            let row = t.row(i);
            for r in 0..m {
                for c in 0..m {
                    t_cov.set(
                        r,
                        c,
                        t_cov.get(r, c) + (row[r] - t_mean[r]) * (row[c] - t_mean[c]),
                    );
                }
            }
        }
        t_cov.scale_mut(1.0 / n_rows as f64);

        let x_mean = train.mean_row();
        let mut cross = Matrix::zeros(dim, m); // Cov(x, t)
        for i in 0..n_rows {
            let (xr, tr) = (train.row(i), t.row(i));
            for r in 0..dim {
                for c in 0..m {
                    cross.set(
                        r,
                        c,
                        cross.get(r, c) + (xr[r] - x_mean[r]) * (tr[c] - t_mean[c]),
                    );
                }
            }
        }
        cross.scale_mut(1.0 / n_rows as f64);

        // slope = Cov(x,t) Cov(t,t)^-1 via the eigendecomposition of the
        // m x m covariance (m is 1 or 2 here)
        let (evals, evecs) = sym_eig_topm(&t_cov, m)?;
        let mut inv = Matrix::zeros(m, m);
        for (k, &ev) in evals.iter().enumerate() {
            if ev.abs() < 1e-12 {
                return Err(Error::Numeric(
                    "projection covariance is singular; cannot fit the linear decoder".into(),
                ));
            }
            let v = evecs.row(k);
            for r in 0..m {
                for c in 0..m {
                    inv.set(r, c, inv.get(r, c) + v[r] * v[c] / ev);
                }
            }
        }
        let slope = cross.matmul(&inv)?;
        let slope_t_mean = slope.matvec(&t_mean);
        let intercept = x_mean
            .iter()
            .zip(&slope_t_mean)
            .map(|(xm, st)| xm - st)
            .collect();
        Ok(Self { pca, slope, intercept })
    }

    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        let t = self.pca.project(x);
        let at = self.slope.matvec(&t);
        at.iter().zip(&self.intercept).map(|(v, b)| v + b).collect()
    }
}

/// Noiseless reconstructions `g(W f(x))` for every row.
pub fn reconstruct_rows_noiseless(model: &UaeModel, data: &Matrix) -> Result<Matrix> {
    if data.cols() != model.signal_dim() {
        return Err(Error::Dimension(format!(
            "reconstruct: width {} vs model {}",
            data.cols(),
            model.signal_dim()
        )));
    }
    let rows = par::map_items(data.rows(), |i| {
        let mean = model
            .channel
            .encoder
            .encode_mean(data.row(i))
            .expect("validated width");
        model.decoder.decode(&mean).expect("model invariant")
    });
    Matrix::from_rows(&rows)
}

/// Reconstructions through the noisy channel, with measurement noise drawn
/// from `eval_seed` (row by row, in order).
pub fn reconstruct_rows_noisy(model: &UaeModel, data: &Matrix, eval_seed: u64) -> Result<Matrix> {
    if data.cols() != model.signal_dim() {
        return Err(Error::Dimension(format!(
            "reconstruct: width {} vs model {}",
            data.cols(),
            model.signal_dim()
        )));
    }
    let mut rng = Rng::new(eval_seed);
    let noise = crate::train::draw_noise(data.rows(), model.measurement_count(), &mut rng);
    let rows = par::map_items(data.rows(), |i| {
        let mean = model
            .channel
            .encoder
            .encode_mean(data.row(i))
            .expect("validated width");
        let y: Vec<f64> = mean
            .iter()
            .zip(noise.row(i))
            .map(|(mu, z)| mu + model.channel.sigma * z)
            .collect();
        model.decoder.decode(&y).expect("model invariant")
    });
    Matrix::from_rows(&rows)
}

/// Trains both branches on the two-Gaussian mixture and reports test l2 for
/// (PCA + linear decoder, UAE). Test-time encodings are noiseless for both
/// so the comparison isolates the learned projections and decoders.
pub fn mixture_projection_comparison(cfg: &MixtureCompareConfig) -> Result<(EvalReport, EvalReport)> {
    let mut data_rng = Rng::new(derive_seed(cfg.seed, 0xF1));
    let train = make_two_gaussian_mixture(cfg.n_train, cfg.mixture, &mut data_rng);
    let valid = make_two_gaussian_mixture(cfg.n_valid, cfg.mixture, &mut data_rng);
    let test = make_two_gaussian_mixture(cfg.n_test, cfg.mixture, &mut data_rng);
    let dataset = Dataset::new(train, valid, test);

    // PCA branch
    let pca = LinearDecodedPca::fit(&dataset.train, cfg.m)?;
    let pca_recon =
        Matrix::from_rows(&par::map_items(dataset.test.rows(), |i| {
            pca.reconstruct(dataset.test.row(i))
        }))?;
    let (pca_mean, pca_se) = l2_per_image(&dataset.test, &pca_recon)?;

    // UAE branch: linear encoder, MLP decoder, gaussian family
    let n = dataset.dim();
    let mut init_rng = Rng::new(derive_seed(cfg.seed, 0xF2));
    let w = Matrix::from_vec(
        cfg.m,
        n,
        (0..cfg.m * n)
            .map(|_| init_rng.normal(0.0, (1.0 / n as f64).sqrt()))
            .collect(),
    )?;
    let mut sizes = vec![cfg.m];
    sizes.extend_from_slice(&cfg.decoder_hidden);
    sizes.push(n);
    let dec = Mlp::random_init(MlpSpec::new(sizes, OutputActivation::Identity)?, &mut init_rng);
    let model = UaeModel::new(
        GaussianChannel::new(Encoder::linear(w), cfg.sigma)?,
        DecoderNet::new(dec, DecoderFamily::Gaussian)?,
    )?;

    let mut tc = TrainConfig::defaults(derive_seed(cfg.seed, 0xF3));
    tc.lr = cfg.lr;
    tc.batch_size = cfg.batch_size;
    tc.max_epochs = cfg.epochs;
    tc.patience_epochs = cfg.epochs;
    tc.sigma = cfg.sigma;
    tc.norm_bound_k = ((cfg.m * n) as f64).sqrt();
    let (trained, _report, _mult) = fit_with_line_search(&model, &dataset, &tc)?;

    let uae_recon = reconstruct_rows_noiseless(&trained, &dataset.test)?;
    let (uae_mean, uae_se) = l2_per_image(&dataset.test, &uae_recon)?;

    Ok((
        EvalReport {
            method: "pca".into(),
            m: cfg.m,
            mean_l2_per_image: pca_mean,
            std_err: pca_se,
            n_test: dataset.test.rows(),
        },
        EvalReport {
            method: "uae".into(),
            m: cfg.m,
            mean_l2_per_image: uae_mean,
            std_err: uae_se,
            n_test: dataset.test.rows(),
        },
    ))
}
