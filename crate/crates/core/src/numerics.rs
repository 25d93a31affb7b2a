//! Dense linear algebra primitives: SVD, truncation, Moore-Penrose
//! pseudo-inverse and minimal-norm least squares.
//!
//! Matrices are `nalgebra::DMatrix<f64>` (column-major). Every operation is a
//! pure function of its inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{precondition, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative gap below which two neighbouring singular values are treated as a
/// tie at a truncation boundary.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Thin singular value decomposition `a = u * diag(sigma) * v^T`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left singular vectors, `rows x k` with `k = min(rows, cols)`.
    pub u: Matrix,
    /// Singular values, descending.
    pub sigma: Vector,
    /// Right singular vectors, `cols x k`.
    pub v: Matrix,
}

/// Leading `r` singular triplets.
#[derive(Debug, Clone)]
pub struct Truncated {
    pub u: Matrix,
    pub sigma: Vector,
    pub v: Matrix,
    /// Set when `sigma[r-1]` and `sigma[r]` coincide, so the rank-`r`
    /// subspace is not unique and the routine's ordering decided it.
    pub tie_warning: bool,
}

/// Fails on the first NaN or infinite entry.
pub fn ensure_finite(a: &Matrix) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn ensure_nonempty(a: &Matrix) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return precondition(format!("empty {}x{} matrix", a.nrows(), a.ncols()));
    }
    Ok(())
}

fn max_sweeps(a: &Matrix) -> usize {
    200 * a.nrows().max(a.ncols()).max(10)
}

fn no_convergence(a: &Matrix) -> Error {
    let fro = a.norm();
    let max_abs = a.amax();
    // ||A||_F / max|a_ij| is a crude but cheap spread indicator; the true
    // condition number is unavailable without a converged SVD.
    let condition = if max_abs > 0.0 { fro / max_abs } else { 0.0 };
    Error::SvdNoConvergence {
        rows: a.nrows(),
        cols: a.ncols(),
        condition,
    }
}

/// Full thin SVD with descending singular values.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    ensure_nonempty(a)?;
    ensure_finite(a)?;
    let dec = a
        .clone()
        .try_svd(true, true, f64::EPSILON, max_sweeps(a))
        .ok_or_else(|| no_convergence(a))?;
    let u = dec.u.expect("u requested");
    let v = dec.v_t.expect("v requested").transpose();
    Ok(SvdResult {
        u,
        sigma: dec.singular_values,
        v,
    })
}

/// Left singular vectors and singular values only; skips accumulating V.
pub fn left_singular(a: &Matrix) -> Result<(Matrix, Vector)> {
    ensure_nonempty(a)?;
    ensure_finite(a)?;
    let dec = a
        .clone()
        .try_svd(true, false, f64::EPSILON, max_sweeps(a))
        .ok_or_else(|| no_convergence(a))?;
    Ok((dec.u.expect("u requested"), dec.singular_values))
}

/// Keeps the first `r` columns/values of each factor.
pub fn truncate(s: &SvdResult, r: usize) -> Result<Truncated> {
    let k = s.sigma.len();
    if r == 0 || r > k {
        return precondition(format!("truncation rank {r} outside 1..={k}"));
    }
    Ok(Truncated {
        u: s.u.columns(0, r).into_owned(),
        sigma: s.sigma.rows(0, r).into_owned(),
        v: s.v.columns(0, r).into_owned(),
        tie_warning: boundary_tie(&s.sigma, r),
    })
}

/// True when `sigma[r-1] == sigma[r]` within [`TIE_TOLERANCE`] relative to
/// the largest singular value.
pub fn boundary_tie(sigma: &Vector, r: usize) -> bool {
    if r == 0 || r >= sigma.len() {
        return false;
    }
    let scale = sigma[0].max(f64::MIN_POSITIVE);
    (sigma[r - 1] - sigma[r]).abs() <= TIE_TOLERANCE * scale
}

/// Relative singular-value cutoff `max(rows, cols) * eps`.
pub fn default_rtol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

/// Number of singular values above `rtol * sigma_max`.
pub fn numerical_rank(sigma: &Vector, rows: usize, cols: usize, rtol: Option<f64>) -> usize {
    if sigma.is_empty() || sigma[0] == 0.0 {
        return 0;
    }
    let cutoff = rtol.unwrap_or_else(|| default_rtol(rows, cols)) * sigma[0];
    sigma.iter().filter(|&&s| s > cutoff).count()
}

/// Moore-Penrose pseudo-inverse. Singular values at or below
/// `rtol * sigma_max` are treated as zero; `rtol` defaults to
/// `max(rows, cols) * eps`.
pub fn pseudo_inverse(a: &Matrix, rtol: Option<f64>) -> Result<Matrix> {
    let s = svd(a)?;
    Ok(pinv_from_svd(&s, a.nrows(), a.ncols(), rtol))
}

pub(crate) fn pinv_from_svd(s: &SvdResult, rows: usize, cols: usize, rtol: Option<f64>) -> Matrix {
    let k = numerical_rank(&s.sigma, rows, cols, rtol);
    let mut out = Matrix::zeros(cols, rows);
    if k == 0 {
        return out;
    }
    // V_k * diag(1/sigma_k) * U_k^T
    let mut vs = s.v.columns(0, k).into_owned();
    for (j, mut col) in vs.column_iter_mut().enumerate() {
        col /= s.sigma[j];
    }
    vs.mul_to(&s.u.columns(0, k).transpose(), &mut out);
    out
}

/// Minimal-Frobenius-norm solution of `min_M ||M * z_in - target||_F`,
/// i.e. `M = target * z_in^+`.
pub fn min_norm_right_solve(z_in: &Matrix, target: &Matrix) -> Result<Matrix> {
    if z_in.ncols() != target.ncols() {
        return Err(Error::Dimension {
            context: "min_norm_right_solve",
            expected: format!("{} columns", z_in.ncols()),
            actual: format!("{} columns", target.ncols()),
        });
    }
    ensure_finite(target)?;
    Ok(target * pseudo_inverse(z_in, None)?)
}

/// Solves `a x = b` for square invertible `a`, via LU with partial pivoting.
pub fn solve_square(a: &Matrix, b: &Matrix, what: &str) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return precondition(format!("{what}: expected a square matrix"));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(what.to_string()))
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

/// `||a - b||_F / ||b||_F`, falling back to the absolute norm when `b = 0`.
pub fn rel_fro(a: &Matrix, b: &Matrix) -> f64 {
    let den = b.norm();
    let num = (a - b).norm();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn check_svd(a: &Matrix, s: &SvdResult) {
        let k = a.nrows().min(a.ncols());
        assert_eq!(s.sigma.len(), k);
        for i in 1..k {
            assert!(s.sigma[i - 1] >= s.sigma[i]);
        }
        assert!(s.sigma.iter().all(|&x| x >= 0.0));
        assert!(rel_fro(&(s.u.transpose() * &s.u), &identity(k)) <= 1e-12);
        assert!(rel_fro(&(s.v.transpose() * &s.v), &identity(k)) <= 1e-12);
        let rec = &s.u * Matrix::from_diagonal(&s.sigma) * s.v.transpose();
        assert!(rel_fro(&rec, a) <= 1e-10);
    }

    #[test]
    fn svd_of_diagonal() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 2.0]));
        let s = svd(&a).unwrap();
        assert_eq!(s.sigma.as_slice(), &[3.0, 2.0]);
        assert!(rel_fro(&s.u.abs(), &identity(2)) < 1e-15);
        assert!(rel_fro(&s.v.abs(), &identity(2)) < 1e-15);
        check_svd(&a, &s);
    }

    #[test]
    fn svd_of_permutation() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = svd(&a).unwrap();
        assert!((s.sigma[0] - 1.0).abs() < 1e-15 && (s.sigma[1] - 1.0).abs() < 1e-15);
        check_svd(&a, &s);
    }

    #[test]
    fn svd_random_reconstruction() {
        for (r, c, seed) in [(5, 3, 1), (3, 5, 2), (10, 6, 3), (6, 10, 4), (40, 40, 5)] {
            let a = random(r, c, seed);
            let s = svd(&a).unwrap();
            check_svd(&a, &s);
            let rec = &s.u * Matrix::from_diagonal(&s.sigma) * s.v.transpose();
            assert!(rel_fro(&rec, &a) <= 1e-12, "{r}x{c}");
        }
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = random(3, 3, 9);
        a[(1, 2)] = f64::NAN;
        assert!(matches!(svd(&a), Err(Error::NonFinite { row: 1, col: 2 })));
    }

    #[test]
    fn truncate_full_and_partial() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 2.0, 1.0]));
        let s = svd(&a).unwrap();
        let full = truncate(&s, 3).unwrap();
        assert_eq!(full.u, s.u);
        assert_eq!(full.sigma, s.sigma);
        assert_eq!(full.v, s.v);
        let t = truncate(&s, 2).unwrap();
        assert_eq!(t.sigma.as_slice(), &[3.0, 2.0]);
        assert!(!t.tie_warning);
        assert!(truncate(&s, 0).is_err());
        assert!(truncate(&s, 4).is_err());
    }

    #[test]
    fn truncate_flags_ties() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 2.0, 2.0]));
        let s = svd(&a).unwrap();
        assert!(truncate(&s, 2).unwrap().tie_warning);
        assert!(!truncate(&s, 1).unwrap().tie_warning);
        assert!(!truncate(&s, 3).unwrap().tie_warning);
    }

    #[test]
    fn pinv_diagonal_with_zero() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let p = pseudo_inverse(&a, None).unwrap();
        let expected = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.0]));
        assert!((p - expected).norm() < 1e-15);
    }

    #[test]
    fn pinv_orthogonal_is_transpose() {
        let q = random(6, 6, 11).qr().q();
        let p = pseudo_inverse(&q, None).unwrap();
        assert!(rel_fro(&p, &q.transpose()) < 1e-12);
    }

    #[test]
    fn pinv_penrose_conditions() {
        for (r, c, seed) in [(3, 7, 21), (10, 6, 22), (6, 10, 23)] {
            let a = random(r, c, seed);
            let p = pseudo_inverse(&a, None).unwrap();
            let apa = &a * &p * &a;
            let pap = &p * &a * &p;
            let ap = &a * &p;
            let pa = &p * &a;
            assert!(rel_fro(&apa, &a) <= 1e-12);
            assert!(rel_fro(&pap, &p) <= 1e-10);
            assert!(rel_fro(&ap.transpose(), &ap) <= 1e-10);
            assert!(rel_fro(&pa.transpose(), &pa) <= 1e-10);
        }
    }

    #[test]
    fn min_norm_identity_input() {
        let t = random(4, 5, 31);
        let m = min_norm_right_solve(&identity(5), &t).unwrap();
        assert!(rel_fro(&m, &t) < 1e-14);
    }

    #[test]
    fn min_norm_full_row_rank_matches_normal_equations() {
        let z = random(4, 12, 32);
        let m_true = random(3, 4, 33);
        let t = &m_true * &z;
        let m = min_norm_right_solve(&z, &t).unwrap();
        assert!(rel_fro(&(&m * &z), &t) < 1e-12);
        // normal equations: M = T Z^T (Z Z^T)^{-1}
        let zzt = &z * z.transpose();
        let rhs = (&t * z.transpose()).transpose();
        let normal = solve_square(&zzt, &rhs, "zzt").unwrap().transpose();
        assert!(rel_fro(&m, &normal) < 1e-10);
    }

    #[test]
    fn min_norm_rank_deficient_has_no_null_component() {
        // z = W C with rank 2 < 4 rows
        let w = random(4, 2, 41);
        let c = random(2, 9, 42);
        let z = &w * &c;
        let t = random(3, 9, 43);
        let m = min_norm_right_solve(&z, &t).unwrap();
        // the rows of M must lie in range(z): M = M P_range
        let (u, sigma) = left_singular(&z).unwrap();
        let k = numerical_rank(&sigma, 4, 9, None);
        assert_eq!(k, 2);
        let uk = u.columns(0, k).into_owned();
        let proj = &uk * uk.transpose();
        assert!(rel_fro(&(&m * &proj), &m) < 1e-10);
        // independent SVD-based construction: T V_k S_k^-1 U_k^T
        let s = svd(&z).unwrap();
        let mut vs = s.v.columns(0, k).into_owned();
        for j in 0..k {
            vs.column_mut(j).scale_mut(1.0 / s.sigma[j]);
        }
        let oracle = &t * vs * s.u.columns(0, k).transpose();
        assert!(rel_fro(&m, &oracle) < 1e-10);
    }

    #[test]
    fn min_norm_rejects_column_mismatch() {
        let z = random(3, 4, 1);
        let t = random(2, 5, 2);
        assert!(matches!(
            min_norm_right_solve(&z, &t),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn min_norm_is_minimal_among_minimizers() {
        let w = random(5, 3, 51);
        let z = &w * random(3, 8, 52);
        let t = random(2, 8, 53);
        let m = min_norm_right_solve(&z, &t).unwrap();
        let base = m.norm();
        // perturbations with delta * z = 0 live on the left null space of z
        let s = svd(&z).unwrap();
        let k = numerical_rank(&s.sigma, 5, 8, None);
        // basis of null(z^T): eigenvectors of z z^T with ~zero eigenvalue
        let eig = (&z * z.transpose()).symmetric_eigen();
        let null: Vec<_> = (0..5)
            .filter(|&i| eig.eigenvalues[i].abs() < 1e-10)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        assert_eq!(null.len(), 5 - k);
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        for _ in 0..100 {
            let mut delta = Matrix::zeros(2, 5);
            for n in &null {
                let coeffs = Vector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
                delta += coeffs * n.transpose();
            }
            assert!((&delta * &z).norm() < 1e-10);
            assert!((&m + &delta).norm() >= base - 1e-12);
        }
    }
}
