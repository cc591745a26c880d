//! The Gibbs Markov chain that turns a trained model into an implicit
//! generative sampler: alternate a measurement draw with a decoder draw.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::nets::UaeModel;
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub n_samples: usize,
    /// Record every `thin`-th state after burn-in (>= 1).
    pub thin: usize,
    /// Std of the decoder draw around `g(y)`; 0 keeps the mean decoding.
    pub decoder_sample_std: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            n_samples: 64,
            thin: 10,
            decoder_sample_std: 0.0,
            seed: 0,
        }
    }
}

/// One transition: `y ~ N(W f(x), sigma^2 I)` then
/// `x' = g(y) + std_dec * N(0, I)`. Draw order: the m measurement normals,
/// then (when `std_dec > 0`) the n decoder normals.
pub fn gibbs_step(
    x: &[f64],
    model: &UaeModel,
    std_dec: f64,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (y, _z) = model.channel.sample_measurement(x, rng)?;
    let mut x_next = model.decoder.decode(&y)?;
    if std_dec > 0.0 {
        for v in &mut x_next {
            *v += std_dec * rng.standard_normal();
        }
    }
    Ok((x_next, y))
}

/// Runs the chain for `burn_in + n_samples * thin` transitions from `x0`,
/// recording every `thin`-th state after burn-in. Returns an
/// `n_samples x n` matrix.
pub fn sample_chain(x0: &[f64], model: &UaeModel, cfg: &ChainConfig) -> Result<Matrix> {
    if cfg.n_samples == 0 || cfg.thin == 0 {
        return Err(crate::error::Error::Validation(
            "sample_chain needs n_samples >= 1 and thin >= 1".into(),
        ));
    }
    let n = model.signal_dim();
    let mut rng = Rng::new(cfg.seed);
    let mut x = x0.to_vec();
    for _ in 0..cfg.burn_in {
        (x, _) = gibbs_step(&x, model, cfg.decoder_sample_std, &mut rng)?;
    }
    let mut out = Matrix::zeros(cfg.n_samples, n);
    for s in 0..cfg.n_samples {
        for _ in 0..cfg.thin {
            (x, _) = gibbs_step(&x, model, cfg.decoder_sample_std, &mut rng)?;
        }
        out.row_mut(s).copy_from_slice(&x);
    }
    Ok(out)
}

/// Closed-form stationary moments of the scalar linear-Gaussian chain
/// `x' = a (w x + sigma z) + b + std_dec z'`, valid for `|a w| < 1`:
/// mean `b / (1 - a w)`, variance `(a^2 sigma^2 + std_dec^2) / (1 - a^2 w^2)`.
pub fn scalar_chain_fixed_point(a: f64, w: f64, b: f64, sigma: f64, std_dec: f64) -> (f64, f64) {
    assert!((a * w).abs() < 1.0, "chain is not contracting");
    let mean = b / (1.0 - a * w);
    let var = (a * a * sigma * sigma + std_dec * std_dec) / (1.0 - a * a * w * w);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{
        DecoderFamily, DecoderNet, Encoder, GaussianChannel, Mlp, MlpSpec, OutputActivation,
    };

    /// Scalar model: y = w x + sigma z, decode = a y + b.
    fn scalar_model(w: f64, a: f64, b: f64, sigma: f64) -> UaeModel {
        let enc = Encoder::linear(Matrix::from_vec(1, 1, vec![w]).unwrap());
        let mut dec = Mlp::random_init(
            MlpSpec::new(vec![1, 1], OutputActivation::Identity).unwrap(),
            &mut Rng::new(0),
        );
        dec.layers[0].weights = Matrix::from_vec(1, 1, vec![a]).unwrap();
        dec.layers[0].bias = vec![b];
        UaeModel::new(
            GaussianChannel::new(enc, sigma).unwrap(),
            DecoderNet::new(dec, DecoderFamily::Gaussian).unwrap(),
        )
        .unwrap()
    }

    fn identity_model(n: usize, sigma: f64) -> UaeModel {
        let enc = Encoder::linear(Matrix::identity(n));
        let mut dec = Mlp::random_init(
            MlpSpec::new(vec![n, n], OutputActivation::Identity).unwrap(),
            &mut Rng::new(0),
        );
        dec.layers[0].weights = Matrix::identity(n);
        dec.layers[0].bias = vec![0.0; n];
        UaeModel::new(
            GaussianChannel::new(enc, sigma).unwrap(),
            DecoderNet::new(dec, DecoderFamily::Gaussian).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_step_collapses_to_the_deterministic_map() {
        let model = scalar_model(0.5, 2.0, 0.25, 0.0);
        let (x_next, y) = gibbs_step(&[1.0], &model, 0.0, &mut Rng::new(1)).unwrap();
        assert_eq!(y, vec![0.5]);
        assert_eq!(x_next, vec![1.25]);
    }

    #[test]
    fn fixed_seed_gives_identical_trajectories() {
        let model = scalar_model(0.9, 0.5, 0.1, 0.3);
        let cfg = ChainConfig {
            burn_in: 10,
            n_samples: 20,
            thin: 2,
            decoder_sample_std: 0.2,
            seed: 77,
        };
        let a = sample_chain(&[0.0], &model, &cfg).unwrap();
        let b = sample_chain(&[0.0], &model, &cfg).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn degenerate_config_is_one_step() {
        let model = scalar_model(0.5, 1.0, 0.0, 0.0);
        let cfg = ChainConfig {
            burn_in: 0,
            n_samples: 1,
            thin: 1,
            decoder_sample_std: 0.0,
            seed: 3,
        };
        let samples = sample_chain(&[2.0], &model, &cfg).unwrap();
        let (step, _) = gibbs_step(&[2.0], &model, 0.0, &mut Rng::new(3)).unwrap();
        assert_eq!(samples.row(0), &step[..]);
    }

    #[test]
    fn identity_model_is_a_random_walk_with_linear_variance_growth() {
        // x_{t+1} = x_t + sigma z + std_dec z': after T steps the displacement
        // variance is T (sigma^2 + std_dec^2).
        let (sigma, std_dec) = (0.1, 0.05);
        let model = identity_model(1, sigma);
        let steps = 1000;
        let chains = 200;
        let mut sq = 0.0;
        for c in 0..chains {
            let mut rng = Rng::new(1000 + c);
            let mut x = vec![0.0];
            for _ in 0..steps {
                (x, _) = gibbs_step(&x, &model, std_dec, &mut rng).unwrap();
            }
            sq += x[0] * x[0];
        }
        let var = sq / chains as f64;
        let expect = steps as f64 * (sigma * sigma + std_dec * std_dec);
        assert!(
            (var - expect).abs() < 0.2 * expect,
            "variance {var} vs expected {expect}"
        );
    }

    #[test]
    fn scalar_chain_matches_fixed_point_moments() {
        let (a, w, b, sigma, std_dec) = (0.6, 0.9, 0.5, 0.3, 0.2);
        let model = scalar_model(w, a, b, sigma);
        let cfg = ChainConfig {
            burn_in: 2000,
            n_samples: 100_000,
            thin: 1,
            decoder_sample_std: std_dec,
            seed: 5,
        };
        let samples = sample_chain(&[10.0], &model, &cfg).unwrap();
        let n = samples.rows() as f64;
        let mean = samples.as_slice().iter().sum::<f64>() / n;
        let var = samples
            .as_slice()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        let (mean_expect, var_expect) = scalar_chain_fixed_point(a, w, b, sigma, std_dec);
        assert!(
            (mean - mean_expect).abs() < 0.1 * mean_expect.abs(),
            "mean {mean} vs {mean_expect}"
        );
        assert!(
            (var - var_expect).abs() < 0.1 * var_expect,
            "var {var} vs {var_expect}"
        );
    }

    #[test]
    fn two_chains_from_distant_starts_agree() {
        let (a, w, b, sigma, std_dec) = (0.5, 0.8, 1.0, 0.4, 0.1);
        let model = scalar_model(w, a, b, sigma);
        let run = |x0: f64, seed: u64| {
            let cfg = ChainConfig {
                burn_in: 2000,
                n_samples: 20_000,
                thin: 1,
                decoder_sample_std: std_dec,
                seed,
            };
            let s = sample_chain(&[x0], &model, &cfg).unwrap();
            let n = s.rows() as f64;
            let mean = s.as_slice().iter().sum::<f64>() / n;
            let var = s.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            // autocorrelated samples: inflate the naive standard error by the
            // integrated autocorrelation time (1+rho)/(1-rho) for an AR(1)
            let rho = a * w;
            let se = (var / n * (1.0 + rho) / (1.0 - rho)).sqrt();
            (mean, se)
        };
        let (m1, se1) = run(-50.0, 21);
        let (m2, se2) = run(50.0, 22);
        let combined = (se1 * se1 + se2 * se2).sqrt();
        assert!(
            (m1 - m2).abs() < 3.0 * combined,
            "chains disagree: {m1} vs {m2} (3se = {})",
            3.0 * combined
        );
    }

    #[test]
    fn sigmoid_decoder_keeps_states_in_unit_cube() {
        let mut rng = Rng::new(44);
        let n = 4;
        let enc = Encoder::linear(Matrix::from_vec(
            2,
            n,
            (0..2 * n).map(|_| rng.standard_normal()).collect(),
        )
        .unwrap());
        let dec = Mlp::random_init(
            MlpSpec::new(vec![2, 6, n], OutputActivation::Sigmoid).unwrap(),
            &mut rng,
        );
        let model = UaeModel::new(
            GaussianChannel::new(enc, 0.5).unwrap(),
            DecoderNet::new(dec, DecoderFamily::Bernoulli).unwrap(),
        )
        .unwrap();
        let cfg = ChainConfig {
            burn_in: 50,
            n_samples: 200,
            thin: 1,
            decoder_sample_std: 0.0, // mean decoding: states are sigmoid outputs
            seed: 12,
        };
        let samples = sample_chain(&[0.5; 4], &model, &cfg).unwrap();
        for v in samples.as_slice() {
            assert!(v.is_finite() && *v > 0.0 && *v < 1.0, "state {v}");
        }
    }

    #[test]
    fn trajectory_length_is_exact() {
        // burn_in + n_samples * thin transitions consume a deterministic
        // number of rng draws; replaying them by hand must land on the same
        // final state.
        let model = scalar_model(0.7, 0.4, 0.2, 0.25);
        let cfg = ChainConfig {
            burn_in: 7,
            n_samples: 5,
            thin: 3,
            decoder_sample_std: 0.0,
            seed: 9,
        };
        let samples = sample_chain(&[1.0], &model, &cfg).unwrap();
        let mut rng = Rng::new(cfg.seed);
        let mut x = vec![1.0];
        for _ in 0..(cfg.burn_in + cfg.n_samples * cfg.thin) {
            (x, _) = gibbs_step(&x, &model, 0.0, &mut rng).unwrap();
        }
        assert_eq!(samples.row(cfg.n_samples - 1), &x[..]);
    }
}
