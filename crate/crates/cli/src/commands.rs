//! Subcommand implementations. Every command resolves its full
//! configuration, writes the run manifest first, then produces artifacts.

use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;

use uae_core::baselines::{
    lasso_recover_batch, pairwise_scatter, pca_fit, random_gaussian_matrix, LassoConfig,
};
use uae_core::checkpoint::{load_checkpoint, save_checkpoint};
use uae_core::data::{
    append_csv, fmt_float, load_idx_images, load_idx_labels, make_blob_images, quantize_unit,
    save_idx_images, save_idx_labels, split_rows, split_rows_by_counts, write_csv,
    write_matrix_csv, write_pgm_grid,
    write_train_report_csv, Dataset, SplitFractions,
};
use uae_core::eigen::sym_eig_topm;
use uae_core::error::{Error, Result};
use uae_core::eval::{
    classification_accuracy, knn_predict, l2_per_image, principal_angle,
    reconstruct_rows_noisy, EvalReport,
};
use uae_core::matrix::Matrix;
use uae_core::nets::{
    DecoderFamily, DecoderNet, Encoder, GaussianChannel, Mlp, MlpSpec, OutputActivation, UaeModel,
};
use uae_core::rng::{derive_seed, Rng};
use uae_core::sampler::{sample_chain, ChainConfig};
use uae_core::train::{fit, fit_with_line_search, transfer_fit, TrainConfig, TransferMode};

use crate::manifest::RunManifest;

const STREAM_INIT: u64 = 0x494E_4954;
const STREAM_EVAL_VALID: u64 = 0x4556_4C31;
const STREAM_EVAL_TEST: u64 = 0x4556_4C32;

enum SplitSpec {
    Fractions(SplitFractions),
    /// Exact row counts, e.g. "50000:10000:10000".
    Counts(usize, usize, usize),
}

fn parse_split(s: &str) -> Result<SplitSpec> {
    let raw: Vec<&str> = s.split(':').collect();
    if raw.len() != 3 {
        return Err(Error::Validation(format!(
            "split must be train:valid:test, got '{s}'"
        )));
    }
    if raw.iter().all(|p| !p.contains('.')) {
        let counts: Vec<usize> = raw
            .iter()
            .map(|p| {
                p.parse::<usize>()
                    .map_err(|_| Error::Validation(format!("bad split counts '{s}'")))
            })
            .collect::<Result<_>>()?;
        return Ok(SplitSpec::Counts(counts[0], counts[1], counts[2]));
    }
    let parts: Vec<f64> = raw
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| Error::Validation(format!("bad split '{s}'"))))
        .collect::<Result<_>>()?;
    if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!("split fractions '{s}' must sum to 1")));
    }
    Ok(SplitSpec::Fractions(SplitFractions::new(parts[1], parts[2])?))
}

fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() || s == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Validation(format!("bad layer size list '{s}'")))
        })
        .collect()
}

fn parse_output_activation(s: &str) -> Result<OutputActivation> {
    match s {
        "identity" => Ok(OutputActivation::Identity),
        "sigmoid" => Ok(OutputActivation::Sigmoid),
        other => Err(Error::Validation(format!("unknown output activation '{other}'"))),
    }
}

fn load_dataset(data: &Path, labels: Option<&Path>, split: &str) -> Result<Dataset> {
    let images = load_idx_images(data)?;
    let labels = labels.map(load_idx_labels).transpose()?;
    match parse_split(split)? {
        SplitSpec::Fractions(f) => split_rows(images, labels, f),
        SplitSpec::Counts(train, valid, test) => {
            split_rows_by_counts(images, labels, train, valid, test)
        }
    }
}

/// Square image side for PGM output; errors when n is not a perfect square.
fn image_side(n: usize) -> Result<usize> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(Error::Validation(format!(
            "signal dimension {n} is not a square image; cannot render PGM"
        )));
    }
    Ok(side)
}

#[allow(clippy::too_many_arguments)]
fn build_model(
    n: usize,
    m: usize,
    acquisition_sizes: &[usize],
    decoder_hidden: &[usize],
    decoder_out: OutputActivation,
    family: DecoderFamily,
    sigma: f64,
    seed: u64,
    random_encoder_seed: Option<u64>,
) -> Result<UaeModel> {
    let mut init_rng = Rng::new(derive_seed(seed, STREAM_INIT));
    let encoder = if acquisition_sizes.is_empty() {
        let w = match random_encoder_seed {
            // unit-variance entries: the random-projection encoder
            Some(s) => random_gaussian_matrix(m, n, &mut Rng::new(s)),
            None => {
                let std = (1.0 / n as f64).sqrt();
                Matrix::from_vec(m, n, (0..m * n).map(|_| init_rng.normal(0.0, std)).collect())?
            }
        };
        Encoder::linear(w)
    } else {
        let l = *acquisition_sizes.last().unwrap();
        let mut sizes = vec![n];
        sizes.extend_from_slice(acquisition_sizes);
        let acq = Mlp::random_init(MlpSpec::new(sizes, OutputActivation::Identity)?, &mut init_rng);
        let w = match random_encoder_seed {
            Some(s) => random_gaussian_matrix(m, l, &mut Rng::new(s)),
            None => {
                let std = (1.0 / l as f64).sqrt();
                Matrix::from_vec(m, l, (0..m * l).map(|_| init_rng.normal(0.0, std)).collect())?
            }
        };
        Encoder::with_acquisition(w, acq)?
    };
    let mut dec_sizes = vec![m];
    dec_sizes.extend_from_slice(decoder_hidden);
    dec_sizes.push(n);
    let dec = Mlp::random_init(MlpSpec::new(dec_sizes, decoder_out)?, &mut init_rng);
    UaeModel::new(
        GaussianChannel::new(encoder, sigma)?,
        DecoderNet::new(dec, family)?,
    )
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// IDX image file holding the signals.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional IDX label file (carried through the splits).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// train:valid:test fractions over the data file, in row order.
    #[arg(long, default_value = "0.8:0.1:0.1")]
    pub split: String,
    /// Number of measurements.
    #[arg(long)]
    pub m: usize,
    /// Measurement noise std.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    /// Early-stopping patience in epochs (default: the epoch budget).
    #[arg(long)]
    pub patience: Option<usize>,
    /// Frobenius bound on W. Default: sqrt(m*n), the expected norm of a
    /// random Gaussian matrix. 0 disables the constraint.
    #[arg(long)]
    pub norm_k: Option<f64>,
    /// Fixed penalty multiplier; when absent, the documented line search
    /// over {0.1, 1, 10, 100} picks it.
    #[arg(long)]
    pub penalty_multiplier: Option<f64>,
    #[arg(long, default_value_t = false)]
    pub freeze_encoder: bool,
    #[arg(long, default_value_t = false)]
    pub freeze_decoder: bool,
    /// Seed for a frozen unit-variance Gaussian W (the RP-UAE ablation is
    /// `--freeze-encoder --random-encoder-seed <s>`).
    #[arg(long)]
    pub random_encoder_seed: Option<u64>,
    #[arg(long, default_value = "gaussian")]
    pub decoder_family: String,
    /// Decoder output activation.
    #[arg(long, default_value = "sigmoid")]
    pub decoder_out: String,
    /// Decoder hidden sizes, comma separated ("none" for a linear decoder).
    #[arg(long, default_value = "500,500")]
    pub decoder_hidden: String,
    /// Acquisition net sizes "hidden...,l" (absent: linear encoder, l = n).
    #[arg(long)]
    pub acquisition_sizes: Option<String>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.data, args.labels.as_deref(), &args.split)?;
    let n = dataset.dim();
    let norm_k = args.norm_k.unwrap_or_else(|| ((args.m * n) as f64).sqrt());
    let family = DecoderFamily::parse(&args.decoder_family)?;
    let decoder_out = parse_output_activation(&args.decoder_out)?;
    let decoder_hidden = parse_sizes(&args.decoder_hidden)?;
    let acquisition_sizes = match &args.acquisition_sizes {
        Some(s) => parse_sizes(s)?,
        None => Vec::new(),
    };
    let patience = args.patience.unwrap_or(args.epochs);

    let mut manifest = RunManifest::new(
        "train",
        args.seed,
        json!({
            "data": args.data.display().to_string(),
            "labels": args.labels.as_ref().map(|p| p.display().to_string()),
            "split": args.split,
            "m": args.m,
            "n": n,
            "sigma": args.sigma,
            "epochs": args.epochs,
            "lr": args.lr,
            "batch": args.batch,
            "patience": patience,
            "norm_k": norm_k,
            "penalty_multiplier": args.penalty_multiplier,
            "freeze_encoder": args.freeze_encoder,
            "freeze_decoder": args.freeze_decoder,
            "random_encoder_seed": args.random_encoder_seed,
            "decoder_family": args.decoder_family,
            "decoder_out": args.decoder_out,
            "decoder_hidden": decoder_hidden,
            "acquisition_sizes": acquisition_sizes,
        }),
    );
    manifest.add_input(&args.data)?;
    if let Some(labels) = &args.labels {
        manifest.add_input(labels)?;
    }
    manifest.add_output("checkpoint.uae");
    manifest.add_output("train_report.csv");
    manifest.write(&args.out)?;

    let model = build_model(
        n,
        args.m,
        &acquisition_sizes,
        &decoder_hidden,
        decoder_out,
        family,
        args.sigma,
        args.seed,
        args.random_encoder_seed,
    )?;

    let mut cfg = TrainConfig::defaults(args.seed);
    cfg.lr = args.lr;
    cfg.batch_size = args.batch;
    cfg.max_epochs = args.epochs;
    cfg.patience_epochs = patience;
    cfg.sigma = args.sigma;
    cfg.norm_bound_k = norm_k;
    cfg.freeze_encoder = args.freeze_encoder;
    cfg.freeze_decoder = args.freeze_decoder;
    cfg.decoder_family = family;

    let (trained, report, multiplier) = match args.penalty_multiplier {
        Some(multiplier) => {
            cfg.penalty_multiplier = multiplier;
            let (model, report) = fit(model, &dataset, &cfg)?;
            (model, report, multiplier)
        }
        None => fit_with_line_search(&model, &dataset, &cfg)?,
    };

    save_checkpoint(&trained, args.seed, &args.out.join("checkpoint.uae"))?;
    write_train_report_csv(&args.out.join("train_report.csv"), &report)?;
    println!(
        "train: {} epochs, best epoch {} (valid objective {:.6}), ||W||_F = {:.4} (bound {:.4}), multiplier {}",
        report.epochs.len(),
        report.best_epoch,
        report.best_valid_loss,
        trained.channel.encoder.w.frobenius_norm(),
        norm_k,
        multiplier,
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "0.8:0.1:0.1")]
    pub split: String,
    /// Consistency check against the checkpoint's measurement count.
    #[arg(long)]
    pub m: Option<usize>,
    /// Seed for the fresh measurement noise used at evaluation.
    #[arg(long, default_value_t = 1000)]
    pub eval_seed: u64,
    /// Label written to the method column.
    #[arg(long, default_value = "uae")]
    pub method_name: String,
    /// Render the first K test images and their reconstructions as a PGM.
    #[arg(long)]
    pub pgm_count: Option<usize>,
    /// Also append the report row to this shared CSV.
    #[arg(long)]
    pub append: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (model, _train_seed) = load_checkpoint(&args.checkpoint)?;
    if let Some(m) = args.m {
        if m != model.measurement_count() {
            return Err(Error::Validation(format!(
                "--m {m} does not match the checkpoint's {} measurements",
                model.measurement_count()
            )));
        }
    }
    let dataset = load_dataset(&args.data, None, &args.split)?;
    if dataset.dim() != model.signal_dim() {
        return Err(Error::Validation(format!(
            "data dimension {} does not match the checkpoint's {}",
            dataset.dim(),
            model.signal_dim()
        )));
    }

    let mut manifest = RunManifest::new(
        "eval",
        args.eval_seed,
        json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "data": args.data.display().to_string(),
            "split": args.split,
            "m": model.measurement_count(),
            "eval_seed": args.eval_seed,
            "method_name": args.method_name,
            "pgm_count": args.pgm_count,
            "append": args.append.as_ref().map(|p| p.display().to_string()),
        }),
    );
    manifest.add_input(&args.checkpoint)?;
    manifest.add_input(&args.data)?;
    manifest.add_output("eval_report.csv");
    if args.pgm_count.is_some() {
        manifest.add_output("reconstructions.pgm");
    }
    manifest.write(&args.out)?;

    let recon = reconstruct_rows_noisy(&model, &dataset.test, args.eval_seed)?;
    let (mean, std_err) = l2_per_image(&dataset.test, &recon)?;
    let report = EvalReport {
        method: args.method_name.clone(),
        m: model.measurement_count(),
        mean_l2_per_image: mean,
        std_err,
        n_test: dataset.test.rows(),
    };
    let row = report.csv_row(args.eval_seed);
    write_csv(
        &args.out.join("eval_report.csv"),
        EvalReport::csv_header(),
        std::slice::from_ref(&row),
    )?;
    if let Some(shared) = &args.append {
        append_csv(shared, EvalReport::csv_header(), std::slice::from_ref(&row))?;
    }

    if let Some(count) = args.pgm_count {
        let side = image_side(dataset.dim())?;
        let k = count.min(dataset.test.rows());
        let mut tiles: Vec<&[f64]> = Vec::with_capacity(2 * k);
        for i in 0..k {
            tiles.push(dataset.test.row(i));
        }
        for i in 0..k {
            tiles.push(recon.row(i));
        }
        write_pgm_grid(&args.out.join("reconstructions.pgm"), &tiles, side, k)?;
    }
    println!(
        "eval: method {} m {} -> l2 per image {:.6} (se {:.6}) over {} test points",
        report.method, report.m, mean, std_err, report.n_test
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct LassoArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "0.8:0.1:0.1")]
    pub split: String,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// Seed of the random Gaussian measurement matrix.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub eval_seed: u64,
    /// Candidate data-term weights, tuned on the validation split.
    #[arg(long, default_value = "0.01,0.1,1,10")]
    pub lambda_grid: String,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub append: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn noisy_measurements(data: &Matrix, w: &Matrix, sigma: f64, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed);
    let mut out = Matrix::zeros(data.rows(), w.rows());
    for i in 0..data.rows() {
        let mean = w.matvec(data.row(i));
        for (o, mu) in out.row_mut(i).iter_mut().zip(&mean) {
            *o = mu + sigma * rng.standard_normal();
        }
    }
    out
}

pub fn cmd_lasso(args: &LassoArgs) -> Result<()> {
    let dataset = load_dataset(&args.data, None, &args.split)?;
    let n = dataset.dim();
    let grid: Vec<f64> = args
        .lambda_grid
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("bad lambda grid '{}'", args.lambda_grid)))
        })
        .collect::<Result<_>>()?;
    if grid.is_empty() {
        return Err(Error::Validation("empty lambda grid".into()));
    }

    let mut manifest = RunManifest::new(
        "lasso",
        args.seed,
        json!({
            "data": args.data.display().to_string(),
            "split": args.split,
            "m": args.m,
            "n": n,
            "sigma": args.sigma,
            "eval_seed": args.eval_seed,
            "lambda_grid": grid,
            "max_iters": args.max_iters,
            "tol": args.tol,
        }),
    );
    manifest.add_input(&args.data)?;
    manifest.add_output("lasso_report.csv");
    manifest.write(&args.out)?;

    let w = random_gaussian_matrix(args.m, n, &mut Rng::new(args.seed));
    let y_valid = noisy_measurements(
        &dataset.valid,
        &w,
        args.sigma,
        derive_seed(args.eval_seed, STREAM_EVAL_VALID),
    );

    let mut best: Option<(f64, f64)> = None; // (lambda, valid error)
    for &lambda in &grid {
        let mut cfg = LassoConfig::new(lambda)?;
        cfg.max_iters = args.max_iters;
        cfg.tol = args.tol;
        let recon = lasso_recover_batch(&y_valid, &w, &cfg)?;
        let (err, _) = l2_per_image(&dataset.valid, &recon)?;
        println!("lasso: lambda {lambda} -> valid l2 {err:.6}");
        if best.is_none_or(|(_, e)| err < e) {
            best = Some((lambda, err));
        }
    }
    let (lambda, _) = best.unwrap();

    let y_test = noisy_measurements(
        &dataset.test,
        &w,
        args.sigma,
        derive_seed(args.eval_seed, STREAM_EVAL_TEST),
    );
    let mut cfg = LassoConfig::new(lambda)?;
    cfg.max_iters = args.max_iters;
    cfg.tol = args.tol;
    let recon = lasso_recover_batch(&y_test, &w, &cfg)?;
    let (mean, std_err) = l2_per_image(&dataset.test, &recon)?;

    let header = "method,m,seed,lambda,mean_l2_per_image,std_err,n_test";
    let row = format!(
        "lasso,{},{},{},{},{},{}",
        args.m,
        args.eval_seed,
        fmt_float(lambda),
        fmt_float(mean),
        fmt_float(std_err),
        dataset.test.rows()
    );
    write_csv(&args.out.join("lasso_report.csv"), header, std::slice::from_ref(&row))?;
    if let Some(shared) = &args.append {
        let report = EvalReport {
            method: "lasso".into(),
            m: args.m,
            mean_l2_per_image: mean,
            std_err,
            n_test: dataset.test.rows(),
        };
        append_csv(
            shared,
            EvalReport::csv_header(),
            std::slice::from_ref(&report.csv_row(args.eval_seed)),
        )?;
    }
    println!(
        "lasso: m {} tuned lambda {lambda} -> test l2 per image {mean:.6} (se {std_err:.6})",
        args.m
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct PcaArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "0.8:0.1:0.1")]
    pub split: String,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 3)]
    pub knn_k: usize,
    /// Row cap for the pairwise-scatter diagnostic (it is O(N^2 n^2)).
    #[arg(long, default_value_t = 256)]
    pub scatter_rows: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_pca(args: &PcaArgs) -> Result<()> {
    let dataset = load_dataset(&args.data, args.labels.as_deref(), &args.split)?;

    let mut manifest = RunManifest::new(
        "pca",
        args.seed,
        json!({
            "data": args.data.display().to_string(),
            "labels": args.labels.as_ref().map(|p| p.display().to_string()),
            "split": args.split,
            "m": args.m,
            "knn_k": args.knn_k,
            "scatter_rows": args.scatter_rows,
        }),
    );
    manifest.add_input(&args.data)?;
    if let Some(labels) = &args.labels {
        manifest.add_input(labels)?;
    }
    manifest.add_output("pca_components.csv");
    manifest.add_output("pca_report.csv");
    manifest.write(&args.out)?;

    let pca = pca_fit(&dataset.train, args.m)?;
    write_matrix_csv(&args.out.join("pca_components.csv"), &pca.components)?;

    // second route to the same subspace: the top eigenvectors of the
    // pairwise-difference scatter must agree with the PCA components
    let diag_rows = dataset.train.rows().min(args.scatter_rows);
    let scatter = pairwise_scatter(&dataset.train.slice_rows(0, diag_rows));
    let scatter_pca = pca_fit(&dataset.train.slice_rows(0, diag_rows), args.m)?;
    let (_, scatter_eig) = sym_eig_topm(&scatter, args.m)?;
    let angle = principal_angle(&scatter_pca.components, &scatter_eig)?;

    let accuracy = match (&dataset.train_labels, &dataset.test_labels) {
        (Some(train_labels), Some(test_labels)) if !test_labels.is_empty() => {
            let train_proj = pca.project_rows(&dataset.train);
            let test_proj = pca.project_rows(&dataset.test);
            let preds = knn_predict(&train_proj, train_labels, &test_proj, args.knn_k)?;
            Some(classification_accuracy(&preds, test_labels))
        }
        _ => None,
    };

    let header = "method,m,knn_k,knn_accuracy,scatter_angle_deg,top_eigenvalue";
    let row = format!(
        "pca,{},{},{},{},{}",
        args.m,
        args.knn_k,
        accuracy.map_or(String::new(), fmt_float),
        fmt_float(angle),
        fmt_float(pca.eigenvalues[0])
    );
    write_csv(&args.out.join("pca_report.csv"), header, std::slice::from_ref(&row))?;
    println!(
        "pca: m {} scatter-angle {angle:.2e} deg knn accuracy {}",
        args.m,
        accuracy.map_or("n/a".into(), |a| format!("{a:.4}"))
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 64)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    #[arg(long, default_value_t = 0.0)]
    pub decoder_sample_std: f64,
    /// Every coordinate of the chain's starting point.
    #[arg(long, default_value_t = 0.5)]
    pub x0_value: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Also render the samples as a PGM grid with this many columns.
    #[arg(long)]
    pub pgm_cols: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let (model, _) = load_checkpoint(&args.checkpoint)?;
    let mut manifest = RunManifest::new(
        "sample",
        args.seed,
        json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "burn_in": args.burn_in,
            "n_samples": args.n_samples,
            "thin": args.thin,
            "decoder_sample_std": args.decoder_sample_std,
            "x0_value": args.x0_value,
            "pgm_cols": args.pgm_cols,
        }),
    );
    manifest.add_input(&args.checkpoint)?;
    manifest.add_output("samples.csv");
    if args.pgm_cols.is_some() {
        manifest.add_output("samples.pgm");
    }
    manifest.write(&args.out)?;

    let cfg = ChainConfig {
        burn_in: args.burn_in,
        n_samples: args.n_samples,
        thin: args.thin,
        decoder_sample_std: args.decoder_sample_std,
        seed: args.seed,
    };
    let x0 = vec![args.x0_value; model.signal_dim()];
    let samples = sample_chain(&x0, &model, &cfg)?;
    write_matrix_csv(&args.out.join("samples.csv"), &samples)?;
    if let Some(cols) = args.pgm_cols {
        let side = image_side(model.signal_dim())?;
        let tiles: Vec<&[f64]> = (0..samples.rows()).map(|i| samples.row(i)).collect();
        write_pgm_grid(&args.out.join("samples.pgm"), &tiles, side, cols)?;
    }
    println!(
        "sample: {} states of dimension {} after burn-in {}",
        samples.rows(),
        samples.cols(),
        args.burn_in
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    /// Source-domain checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Target-domain IDX images.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "0.8:0.1:0.1")]
    pub split: String,
    /// "se" keeps the source encoder, "sd" the source decoder.
    #[arg(long)]
    pub mode: String,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Noise std; default: the value stored in the source checkpoint.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_transfer(args: &TransferArgs) -> Result<()> {
    let (source, _) = load_checkpoint(&args.checkpoint)?;
    let mode = TransferMode::parse(&args.mode)?;
    let dataset = load_dataset(&args.data, None, &args.split)?;
    let sigma = args.sigma.unwrap_or(source.channel.sigma);
    let patience = args.patience.unwrap_or(args.epochs);

    let mut manifest = RunManifest::new(
        "transfer",
        args.seed,
        json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "data": args.data.display().to_string(),
            "split": args.split,
            "mode": args.mode,
            "epochs": args.epochs,
            "lr": args.lr,
            "batch": args.batch,
            "patience": patience,
            "sigma": sigma,
        }),
    );
    manifest.add_input(&args.checkpoint)?;
    manifest.add_input(&args.data)?;
    manifest.add_output("checkpoint.uae");
    manifest.add_output("train_report.csv");
    manifest.write(&args.out)?;

    let mut cfg = TrainConfig::defaults(args.seed);
    cfg.lr = args.lr;
    cfg.batch_size = args.batch;
    cfg.max_epochs = args.epochs;
    cfg.patience_epochs = patience;
    cfg.sigma = sigma;
    cfg.decoder_family = source.decoder.family;
    let (trained, report) = transfer_fit(&source, &dataset, mode, &cfg)?;

    save_checkpoint(&trained, args.seed, &args.out.join("checkpoint.uae"))?;
    write_train_report_csv(&args.out.join("train_report.csv"), &report)?;
    println!(
        "transfer ({}): best epoch {} valid objective {:.6}",
        args.mode, report.best_epoch, report.best_valid_loss
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct DimreduceArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// IDX labels; required for the classification probe.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "0.8:0.1:0.1")]
    pub split: String,
    /// Projection dimension.
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    #[arg(long, default_value = "128,128")]
    pub decoder_hidden: String,
    #[arg(long, default_value_t = 3)]
    pub knn_k: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_dimreduce(args: &DimreduceArgs) -> Result<()> {
    let dataset = load_dataset(&args.data, Some(&args.labels), &args.split)?;
    let n = dataset.dim();
    let decoder_hidden = parse_sizes(&args.decoder_hidden)?;

    let mut manifest = RunManifest::new(
        "dimreduce",
        args.seed,
        json!({
            "data": args.data.display().to_string(),
            "labels": args.labels.display().to_string(),
            "split": args.split,
            "m": args.m,
            "n": n,
            "sigma": args.sigma,
            "epochs": args.epochs,
            "lr": args.lr,
            "batch": args.batch,
            "decoder_hidden": decoder_hidden,
            "knn_k": args.knn_k,
        }),
    );
    manifest.add_input(&args.data)?;
    manifest.add_input(&args.labels)?;
    manifest.add_output("projections_uae.csv");
    manifest.add_output("projections_pca.csv");
    manifest.add_output("dimreduce_report.csv");
    manifest.write(&args.out)?;

    let train_labels = dataset.train_labels.clone().ok_or_else(|| {
        Error::Validation("dimreduce needs labels on the training split".into())
    })?;
    let test_labels = dataset
        .test_labels
        .clone()
        .ok_or_else(|| Error::Validation("dimreduce needs labels on the test split".into()))?;

    // UAE projections: linear encoder trained jointly with an MLP decoder
    let model = build_model(
        n,
        args.m,
        &[],
        &decoder_hidden,
        OutputActivation::Sigmoid,
        DecoderFamily::Gaussian,
        args.sigma,
        args.seed,
        None,
    )?;
    let mut cfg = TrainConfig::defaults(args.seed);
    cfg.lr = args.lr;
    cfg.batch_size = args.batch;
    cfg.max_epochs = args.epochs;
    cfg.patience_epochs = args.epochs;
    cfg.sigma = args.sigma;
    cfg.norm_bound_k = ((args.m * n) as f64).sqrt();
    let (trained, _, _) = fit_with_line_search(&model, &dataset, &cfg)?;

    let project = |data: &Matrix| -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = (0..data.rows())
            .map(|i| trained.channel.encoder.encode_mean(data.row(i)))
            .collect::<Result<_>>()?;
        Matrix::from_rows(&rows)
    };
    let uae_train_proj = project(&dataset.train)?;
    let uae_test_proj = project(&dataset.test)?;
    let uae_preds = knn_predict(&uae_train_proj, &train_labels, &uae_test_proj, args.knn_k)?;
    let uae_acc = classification_accuracy(&uae_preds, &test_labels);

    let pca = pca_fit(&dataset.train, args.m)?;
    let pca_train_proj = pca.project_rows(&dataset.train);
    let pca_test_proj = pca.project_rows(&dataset.test);
    let pca_preds = knn_predict(&pca_train_proj, &train_labels, &pca_test_proj, args.knn_k)?;
    let pca_acc = classification_accuracy(&pca_preds, &test_labels);

    write_matrix_csv(&args.out.join("projections_uae.csv"), &uae_test_proj)?;
    write_matrix_csv(&args.out.join("projections_pca.csv"), &pca_test_proj)?;
    let header = "method,m,knn_k,accuracy,n_test";
    let rows = vec![
        format!("uae,{},{},{},{}", args.m, args.knn_k, fmt_float(uae_acc), test_labels.len()),
        format!("pca,{},{},{},{}", args.m, args.knn_k, fmt_float(pca_acc), test_labels.len()),
    ];
    write_csv(&args.out.join("dimreduce_report.csv"), header, &rows)?;
    println!(
        "dimreduce: m {} knn@{} accuracy uae {:.4} vs pca {:.4}",
        args.m, args.knn_k, uae_acc, pca_acc
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Number of random architectures to check.
    #[arg(long, default_value_t = 5)]
    pub archs: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "gradcheck",
        args.seed,
        json!({ "archs": args.archs, "h": args.h, "tol": args.tol }),
    );
    manifest.add_output("gradcheck.csv");
    manifest.write(&args.out)?;

    let checks = uae_core::train::gradcheck_random_architectures(args.archs, args.seed, args.h)?;
    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (i, c) in checks.iter().enumerate() {
        let pass = c.max_rel_err < args.tol;
        if !pass {
            failures += 1;
        }
        println!(
            "gradcheck {i}: {} ({} params) max rel err {:.3e} -> {}",
            c.description,
            c.param_count,
            c.max_rel_err,
            if pass { "pass" } else { "FAIL" }
        );
        rows.push(format!(
            "{i},{},{},{},{}",
            c.description.replace(' ', ";"),
            c.param_count,
            fmt_float(c.max_rel_err),
            pass
        ));
    }
    write_csv(
        &args.out.join("gradcheck.csv"),
        "arch,description,params,max_rel_err,pass",
        &rows,
    )?;
    if failures > 0 {
        return Err(Error::Numeric(format!(
            "{failures} of {} architectures failed the finite-difference check",
            checks.len()
        )));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Dataset kind; currently "blobs" (Gaussian-bump images, quadrant labels).
    #[arg(long, default_value = "blobs")]
    pub kind: String,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 8)]
    pub side: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if args.kind != "blobs" {
        return Err(Error::Validation(format!(
            "unknown synthetic dataset kind '{}'",
            args.kind
        )));
    }
    let mut manifest = RunManifest::new(
        "synth",
        args.seed,
        json!({ "kind": args.kind, "count": args.count, "side": args.side }),
    );
    manifest.add_output("images.idx");
    manifest.add_output("labels.idx");
    manifest.write(&args.out)?;

    let (images, labels) = make_blob_images(args.count, args.side, &mut Rng::new(args.seed));
    let bytes = quantize_unit(images.as_slice())?;
    save_idx_images(&args.out.join("images.idx"), args.count, args.side, args.side, &bytes)?;
    let label_bytes: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    save_idx_labels(&args.out.join("labels.idx"), &label_bytes)?;
    println!(
        "synth: wrote {} {}x{} images with quadrant labels",
        args.count, args.side, args.side
    );
    Ok(())
}
