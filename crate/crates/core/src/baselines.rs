//! Baselines: PCA by eigendecomposition, the pairwise-difference scatter
//! operator, random Gaussian sensing matrices, and LASSO recovery via ISTA.

use crate::eigen::sym_eig_topm;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::par;
use crate::rng::Rng;

/// Principal components of a dataset: row-orthonormal `components` (m x n)
/// and the matching eigenvalues of the biased covariance, descending.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Projects a signal onto the principal subspace.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        self.components.matvec(&centered)
    }

    /// Reconstruction `mean + C^T t` from a projection `t`.
    pub fn reconstruct(&self, t: &[f64]) -> Vec<f64> {
        let back = self.components.matvec_t(t);
        back.iter().zip(&self.mean).map(|(v, m)| v + m).collect()
    }

    /// Projects every row of a matrix.
    pub fn project_rows(&self, data: &Matrix) -> Matrix {
        let rows = par::map_items(data.rows(), |i| self.project(data.row(i)));
        Matrix::from_rows(&rows).expect("uniform projection width")
    }
}

/// The exact double sum over ordered pairs `sum_{i,j} (x_i - x_j)(x_i - x_j)^T`
/// (pairs with i = j contribute zero). Equals `2 N^2 Cov(D)` with the biased
/// covariance, which is what links it to PCA.
pub fn pairwise_scatter(data: &Matrix) -> Matrix {
    let (n_rows, dim) = data.shape();
    let mut scatter = Matrix::zeros(dim, dim);
    let mut diff = vec![0.0; dim];
    for i in 0..n_rows {
        for j in 0..n_rows {
            let (xi, xj) = (data.row(i), data.row(j));
            for (d, (a, b)) in diff.iter_mut().zip(xi.iter().zip(xj)) {
                *d = a - b;
            }
            for r in 0..dim {
                let dr = diff[r];
                if dr == 0.0 {
                    continue;
                }
                let row = scatter.row_mut(r);
                for (s, dc) in row.iter_mut().zip(&diff) {
                    *s += dr * dc;
                }
            }
        }
    }
    scatter
}

/// Biased covariance `(1/N) sum (x - mean)(x - mean)^T`.
pub fn covariance(data: &Matrix) -> Matrix {
    let (n_rows, dim) = data.shape();
    let mean = data.mean_row();
    let mut cov = Matrix::zeros(dim, dim);
    let mut centered = vec![0.0; dim];
    for i in 0..n_rows {
        for (c, (v, m)) in centered.iter_mut().zip(data.row(i).iter().zip(&mean)) {
            *c = v - m;
        }
        for r in 0..dim {
            let cr = centered[r];
            if cr == 0.0 {
                continue;
            }
            let row = cov.row_mut(r);
            for (s, cc) in row.iter_mut().zip(&centered) {
                *s += cr * cc;
            }
        }
    }
    cov.scale_mut(1.0 / n_rows.max(1) as f64);
    cov
}

/// PCA via eigendecomposition of the mean-centered covariance.
pub fn pca_fit(data: &Matrix, m: usize) -> Result<PcaModel> {
    let (n_rows, dim) = data.shape();
    if n_rows < 2 {
        return Err(Error::Validation(format!(
            "PCA needs at least 2 points, got {n_rows}"
        )));
    }
    if m > dim {
        return Err(Error::Validation(format!(
            "cannot extract {m} components from {dim}-dimensional data"
        )));
    }
    let cov = covariance(data);
    let (eigenvalues, components) = sym_eig_topm(&cov, m)?;
    Ok(PcaModel {
        mean: data.mean_row(),
        components,
        eigenvalues,
    })
}

/// An `m x n` matrix of i.i.d. standard normal entries. Unit variance: the
/// expected Frobenius norm is `sqrt(m n)`, which is what the learned
/// encoders' norm bound is calibrated against.
pub fn random_gaussian_matrix(m: usize, n: usize, rng: &mut Rng) -> Matrix {
    let data = (0..m * n).map(|_| rng.standard_normal()).collect();
    Matrix::from_vec(m, n, data).expect("sized by construction")
}

/// `sign(v) * max(|v| - t, 0)`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct LassoConfig {
    /// Weight of the squared data term in `||x||_1 + lambda ||y - Wx||^2`.
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop when the iterate change falls below this in the infinity norm.
    pub tol: f64,
    /// Proximal step; `None` selects `1 / (2 lambda L)` with `L` the largest
    /// eigenvalue of `W^T W` from power iteration.
    pub step_size: Option<f64>,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::Validation(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            lambda,
            max_iters: 20_000,
            tol: 1e-10,
            step_size: None,
        })
    }
}

/// Largest eigenvalue of `W^T W` by power iteration on the smaller Gram
/// matrix.
pub fn largest_gram_eigenvalue(w: &Matrix) -> Result<f64> {
    let (m, n) = w.shape();
    // W W^T and W^T W share their nonzero spectrum; iterate on the smaller.
    let gram = if m <= n {
        w.matmul(&w.transpose())?
    } else {
        w.transpose().matmul(w)?
    };
    let size = gram.rows();
    if size == 0 {
        return Ok(0.0);
    }
    let mut v = vec![1.0 / (size as f64).sqrt(); size];
    let mut prev = 0.0;
    for _ in 0..10_000 {
        let gv = gram.matvec(&v);
        let norm = dot(&gv, &gv).sqrt();
        if norm == 0.0 {
            return Ok(0.0); // zero matrix
        }
        for (vi, gi) in v.iter_mut().zip(&gv) {
            *vi = gi / norm;
        }
        let estimate = dot(&v, &gram.matvec(&v));
        if (estimate - prev).abs() <= 1e-12 * estimate.abs().max(1.0) {
            return Ok(estimate);
        }
        prev = estimate;
    }
    Err(Error::Numeric(
        "power iteration on W^T W did not converge".into(),
    ))
}

/// Value of the LASSO objective `||x||_1 + lambda ||y - W x||^2`.
pub fn lasso_objective(x: &[f64], y: &[f64], w: &Matrix, lambda: f64) -> f64 {
    let wx = w.matvec(x);
    let resid: f64 = y.iter().zip(&wx).map(|(a, b)| (a - b) * (a - b)).sum();
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    l1 + lambda * resid
}

/// ISTA for the LASSO objective with basis B = I, starting from x = 0.
///
/// Iterates `x <- soft_threshold(x + 2 lambda s W^T (y - W x), s)` with step
/// `s = 1 / (2 lambda L)`, `L` the largest eigenvalue of `W^T W`.
pub fn lasso_recover(y: &[f64], w: &Matrix, cfg: &LassoConfig) -> Result<Vec<f64>> {
    let (m, n) = w.shape();
    if y.len() != m {
        return Err(Error::Dimension(format!(
            "lasso_recover: {} measurements for a {m}x{n} matrix",
            y.len()
        )));
    }
    let step = match cfg.step_size {
        Some(s) => {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::Validation(format!("step_size must be positive, got {s}")));
            }
            s
        }
        None => {
            let lipschitz = largest_gram_eigenvalue(w)?;
            if lipschitz <= 0.0 {
                return Ok(vec![0.0; n]); // W = 0: the l1 term alone is minimized at 0
            }
            1.0 / (2.0 * cfg.lambda * lipschitz)
        }
    };
    let mut x = vec![0.0; n];
    for _ in 0..cfg.max_iters {
        let wx = w.matvec(&x);
        let resid: Vec<f64> = y.iter().zip(&wx).map(|(a, b)| a - b).collect();
        let grad_step = w.matvec_t(&resid);
        let mut max_change = 0.0f64;
        for i in 0..n {
            let next = soft_threshold(x[i] + 2.0 * cfg.lambda * step * grad_step[i], step);
            max_change = max_change.max((next - x[i]).abs());
            x[i] = next;
        }
        if max_change < cfg.tol {
            break;
        }
    }
    Ok(x)
}

/// Recovers every row of `measurements` independently (embarrassingly
/// parallel across test points).
pub fn lasso_recover_batch(
    measurements: &Matrix,
    w: &Matrix,
    cfg: &LassoConfig,
) -> Result<Matrix> {
    // resolve the step once so the power iteration is shared across points
    let mut shared = cfg.clone();
    if shared.step_size.is_none() {
        let lipschitz = largest_gram_eigenvalue(w)?;
        if lipschitz <= 0.0 {
            return Ok(Matrix::zeros(measurements.rows(), w.cols()));
        }
        shared.step_size = Some(1.0 / (2.0 * shared.lambda * lipschitz));
    }
    let rows = par::map_items(measurements.rows(), |i| {
        lasso_recover(measurements.row(i), w, &shared).expect("shapes checked by caller")
    });
    Matrix::from_rows(&rows)
}
