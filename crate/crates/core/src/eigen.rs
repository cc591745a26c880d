//! Symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Each sweep visits every off-diagonal pair (p, q) in row order and applies
//! the plane rotation that zeroes `a[p][q]`, accumulating rotations into the
//! eigenvector matrix. Convergence is quadratic once the off-diagonal mass is
//! small; 100 sweeps is far beyond what any symmetric matrix of desk size
//! needs.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const SYMMETRY_TOL: f64 = 1e-9;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues and unit eigenvectors of the symmetric matrix `s`, restricted
/// to the `m` largest eigenvalues in descending order.
///
/// Returned vectors are rows of an `m x n` matrix. Sign convention: in each
/// vector, the first component of largest absolute value is non-negative.
pub fn sym_eig_topm(s: &Matrix, m: usize) -> Result<(Vec<f64>, Matrix)> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::Validation(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if m > n {
        return Err(Error::Validation(format!(
            "requested {m} eigenpairs from a {n}x{n} matrix"
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (s.get(i, j) - s.get(j, i)).abs() > SYMMETRY_TOL {
                return Err(Error::Validation(format!(
                    "matrix is not symmetric at ({i},{j}): {} vs {}",
                    s.get(i, j),
                    s.get(j, i)
                )));
            }
        }
    }

    let (values, vectors) = jacobi(s)?;

    // Sort descending by eigenvalue; vectors[k] is the k-th column of V.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());

    let mut top_values = Vec::with_capacity(m);
    let mut top_vectors = Matrix::zeros(m, n);
    for (rank, &k) in order.iter().take(m).enumerate() {
        top_values.push(values[k]);
        let row = top_vectors.row_mut(rank);
        for (i, r) in row.iter_mut().enumerate() {
            *r = vectors.get(i, k);
        }
        fix_sign(row);
    }
    Ok((top_values, top_vectors))
}

/// Flips the vector if its entry of largest magnitude (first such entry on
/// ties) is negative.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += 2.0 * a.get(i, j) * a.get(i, j);
        }
    }
    sum.sqrt()
}

/// Full Jacobi eigendecomposition. Returns unsorted eigenvalues and the
/// matrix whose columns are the matching eigenvectors.
fn jacobi(s: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = s.rows();
    let mut a = s.clone();
    // Work on the exactly-symmetric average so rotations stay orthogonal.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, avg);
            a.set(j, i, avg);
        }
    }
    let mut v = Matrix::identity(n);
    // Convergence threshold scales with the matrix so large-magnitude inputs
    // (pairwise scatters grow like N^2) terminate cleanly.
    let threshold = OFF_DIAGONAL_TOL * a.frobenius_norm().max(1.0);

    for _sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= threshold {
            let values = (0..n).map(|i| a.get(i, i)).collect();
            return Ok((values, v));
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                // tan of the rotation angle, the root of t^2 + 2t*theta - 1
                // with smaller magnitude.
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s_ = t * c;

                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s_ * akq);
                    a.set(k, q, s_ * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s_ * aqk);
                    a.set(q, k, s_ * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s_ * vkq);
                    v.set(k, q, s_ * vkp + c * vkq);
                }
            }
        }
    }

    if off_diagonal_norm(&a) <= threshold {
        let values = (0..n).map(|i| a.get(i, i)).collect();
        return Ok((values, v));
    }
    Err(Error::Numeric(format!(
        "Jacobi eigendecomposition did not converge in {MAX_SWEEPS} sweeps \
         (off-diagonal norm {:.3e})",
        off_diagonal_norm(&a)
    )))
}

#[cfg(test)]
// index-style loops are deliberate in the hand-written oracles below
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_symmetric(n: usize, rng: &mut Rng) -> Matrix {
        let mut s = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.standard_normal();
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        s
    }

    #[test]
    fn diagonal_matrix_top_eigenpair() {
        let s = Matrix::from_vec(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let (values, vectors) = sym_eig_topm(&s, 1).unwrap();
        assert!((values[0] - 3.0).abs() < 1e-12);
        assert!((vectors.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(vectors.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_hand_solved() {
        // det([[2-l,1],[1,2-l]]) = 0  =>  l in {3, 1}, vectors (1,1) and (1,-1).
        let s = Matrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let (values, vectors) = sym_eig_topm(&s, 2).unwrap();
        let r = 1.0 / 2.0f64.sqrt();
        assert!((values[0] - 3.0).abs() < 1e-12);
        assert!((values[1] - 1.0).abs() < 1e-12);
        assert!((vectors.get(0, 0) - r).abs() < 1e-10);
        assert!((vectors.get(0, 1) - r).abs() < 1e-10);
        assert!((vectors.get(1, 0) - r).abs() < 1e-10);
        assert!((vectors.get(1, 1) + r).abs() < 1e-10);
    }

    #[test]
    fn spectral_reconstruction_of_random_symmetric() {
        let mut rng = Rng::new(42);
        let s = random_symmetric(6, &mut rng);
        let (values, vectors) = sym_eig_topm(&s, 6).unwrap();
        // s = sum_k lambda_k v_k v_k^T
        let mut recon = Matrix::zeros(6, 6);
        for (k, &value) in values.iter().enumerate() {
            let v = vectors.row(k);
            for i in 0..6 {
                for j in 0..6 {
                    recon.set(i, j, recon.get(i, j) + value * v[i] * v[j]);
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                assert!(
                    (recon.get(i, j) - s.get(i, j)).abs() < 1e-8,
                    "({i},{j}): {} vs {}",
                    recon.get(i, j),
                    s.get(i, j)
                );
            }
        }
    }

    #[test]
    fn eigenpairs_satisfy_definition_and_ordering() {
        let mut rng = Rng::new(7);
        for trial in 0..5 {
            let n = 3 + trial;
            let s = random_symmetric(n, &mut rng);
            let (values, vectors) = sym_eig_topm(&s, n).unwrap();
            for w in values.windows(2) {
                assert!(w[0] >= w[1] - 1e-12);
            }
            for k in 0..n {
                let v = vectors.row(k);
                let sv = s.matvec(v);
                for i in 0..n {
                    assert!(
                        (sv[i] - values[k] * v[i]).abs() < 1e-8,
                        "eigenpair {k} residual at {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_non_symmetric_input() {
        let s = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.1, 1.0]).unwrap();
        assert!(matches!(sym_eig_topm(&s, 1), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_m_larger_than_n() {
        let s = Matrix::identity(3);
        assert!(sym_eig_topm(&s, 4).is_err());
    }
}
