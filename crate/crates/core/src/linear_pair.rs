//! Optimal linear autoencoders, latent-space maps and the composed PAIR
//! forward/inverse surrogates.
//!
//! Two fitting routes are provided. The Bayes route works from known second
//! moments `Gamma = L L^T`; the empirical route works from raw sample
//! matrices. Sample matrices are used as-is: no centering, and no `1/(N-1)`
//! scaling since that factor cancels inside every projector and map.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::numerics::{
    self, default_rtol, identity, left_singular, min_norm_right_solve, solve_square, Matrix, Vector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Bayes,
    Empirical,
}

/// Linear encoder/decoder pair with `encoder * decoder = I_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAutoencoder {
    /// `r x n`
    pub encoder: Matrix,
    /// `n x r`
    pub decoder: Matrix,
    pub latent_dim: usize,
    pub mode: FitMode,
    /// `r x r`, identity unless a mixing matrix was supplied.
    pub mixing: Matrix,
    /// The leading basis was chosen among tied singular values.
    pub tie_warning: bool,
}

impl LinearAutoencoder {
    pub fn input_dim(&self) -> usize {
        self.decoder.nrows()
    }

    /// Builds `E = K^-1 U_r^T`, `D = U_r K` from an orthonormal basis `U_r`.
    fn from_basis(
        basis: Matrix,
        mixing: Option<&Matrix>,
        mode: FitMode,
        tie_warning: bool,
    ) -> Result<Self> {
        let r = basis.ncols();
        let (encoder, decoder, mixing) = match mixing {
            None => (basis.transpose(), basis, identity(r)),
            Some(k) => {
                if k.nrows() != r || k.ncols() != r {
                    return Err(Error::Dimension {
                        context: "mixing matrix",
                        expected: format!("{r}x{r}"),
                        actual: format!("{}x{}", k.nrows(), k.ncols()),
                    });
                }
                let s = numerics::svd(k)?;
                let cutoff = default_rtol(r, r) * s.sigma[0];
                if s.sigma[r - 1] <= cutoff {
                    return precondition("mixing matrix K is singular");
                }
                let enc = solve_square(k, &basis.transpose(), "mixing matrix K")?;
                (enc, &basis * k, k.clone())
            }
        };
        Ok(Self {
            encoder,
            decoder,
            latent_dim: r,
            mode,
            mixing,
            tie_warning,
        })
    }

    pub fn encode(&self, x: &Vector) -> Result<Vector> {
        check_len("encode", self.encoder.ncols(), x.len())?;
        Ok(&self.encoder * x)
    }

    pub fn decode(&self, z: &Vector) -> Result<Vector> {
        check_len("decode", self.latent_dim, z.len())?;
        Ok(&self.decoder * z)
    }

    /// Encodes every column.
    pub fn encode_all(&self, samples: &Matrix) -> Result<Matrix> {
        check_len("encode_all", self.encoder.ncols(), samples.nrows())?;
        Ok(&self.encoder * samples)
    }

    /// `D E`, the full-space reconstruction operator.
    pub fn projector(&self) -> Matrix {
        &self.decoder * &self.encoder
    }
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        });
    }
    Ok(())
}

/// Left singular basis of an `n x N` sample matrix, shared by empirical
/// autoencoders of every latent size.
#[derive(Debug, Clone)]
pub struct EmpiricalBasis {
    pub u: Matrix,
    pub sigma: Vector,
    rows: usize,
    cols: usize,
}

impl EmpiricalBasis {
    pub fn new(samples: &Matrix) -> Result<Self> {
        let (rows, cols) = samples.shape();
        let (u, sigma) = left_singular(samples)?;
        Ok(Self {
            u,
            sigma,
            rows,
            cols,
        })
    }

    /// Largest latent size the data supports.
    pub fn max_rank(&self) -> usize {
        numerics::numerical_rank(&self.sigma, self.rows, self.cols, None)
    }

    /// Top-`r` autoencoder; minimizes `||(DE - I) X||_F` over rank-`r` maps.
    pub fn autoencoder(&self, r: usize, mixing: Option<&Matrix>) -> Result<LinearAutoencoder> {
        if r == 0 || r > self.rows.min(self.cols) {
            return precondition(format!(
                "latent dimension {r} outside 1..={}",
                self.rows.min(self.cols)
            ));
        }
        check_rank(&self.sigma, r, self.rows, self.cols)?;
        let basis = self.u.columns(0, r).into_owned();
        LinearAutoencoder::from_basis(
            basis,
            mixing,
            FitMode::Empirical,
            numerics::boundary_tie(&self.sigma, r),
        )
    }
}

/// Empirical autoencoder from the top-`r` left singular vectors of the
/// `n x N` sample matrix.
pub fn fit_empirical_autoencoder(
    samples: &Matrix,
    r: usize,
    mixing: Option<&Matrix>,
) -> Result<LinearAutoencoder> {
    let (n, count) = samples.shape();
    if r == 0 || r > n.min(count) {
        return precondition(format!("latent dimension {r} outside 1..={}", n.min(count)));
    }
    EmpiricalBasis::new(samples)?.autoencoder(r, mixing)
}

fn check_rank(sigma: &Vector, r: usize, rows: usize, cols: usize) -> Result<()> {
    let cutoff = default_rtol(rows, cols) * sigma[0];
    if sigma[r - 1] <= cutoff {
        return Err(Error::RankExceeded {
            requested: r,
            sigma: sigma[r - 1],
        });
    }
    Ok(())
}

/// Bayes-optimal autoencoder from a full-rank factor `L` of the second
/// moment `Gamma = L L^T`: `D E = U_{L,r} U_{L,r}^T`, the minimal-norm
/// minimizer of `||Y L - L||_F` over rank-`r` `Y`.
pub fn fit_bayes_autoencoder(
    l_factor: &Matrix,
    r: usize,
    mixing: Option<&Matrix>,
) -> Result<LinearAutoencoder> {
    let n = l_factor.nrows();
    if l_factor.ncols() != n {
        return precondition("second-moment factor must be square");
    }
    if r == 0 || r > n {
        return precondition(format!("latent dimension {r} outside 1..={n}"));
    }
    let (u, sigma) = left_singular(l_factor)?;
    let cutoff = default_rtol(n, n) * sigma[0];
    if sigma[n - 1] <= cutoff {
        return Err(Error::RankDeficientFactor {
            sigma_min: sigma[n - 1],
            cutoff,
        });
    }
    let basis = u.columns(0, r).into_owned();
    LinearAutoencoder::from_basis(
        basis,
        mixing,
        FitMode::Bayes,
        numerics::boundary_tie(&sigma, r),
    )
}

/// Symmetric positive definite check: relative asymmetry at most `1e-10`
/// and a successful Cholesky factorization.
pub fn check_spd(g: &Matrix, what: &str) -> Result<()> {
    if g.nrows() != g.ncols() {
        return Err(Error::NotSpd(format!("{what} is not square")));
    }
    numerics::ensure_finite(g)?;
    let asym = (g - g.transpose()).norm();
    if asym > 1e-10 * g.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::NotSpd(format!("{what} is not symmetric")));
    }
    if g.clone().cholesky().is_none() {
        return Err(Error::NotSpd(format!("{what} is not positive definite")));
    }
    Ok(())
}

/// Eigen-decomposition of an SPD matrix, eigenvalues descending.
/// For `Gamma = L L^T` this yields `U_L` and `Sigma_L^2`.
pub fn spd_eigen(g: &Matrix) -> (Matrix, Vector) {
    let sym = (g + g.transpose()) * 0.5;
    let SymmetricEigen {
        eigenvectors,
        eigenvalues,
    } = sym.symmetric_eigen();
    let n = eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    let u = Matrix::from_fn(n, n, |i, j| eigenvectors[(i, order[j])]);
    let vals = Vector::from_fn(n, |i, _| eigenvalues[order[i]]);
    (u, vals)
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky_factor(g: &Matrix) -> Result<Matrix> {
    check_spd(g, "second moment")?;
    Ok(g.clone().cholesky().expect("checked").l())
}

/// `E_b A Gamma_x E_x^T (E_x Gamma_x E_x^T)^-1`, the Bayes-optimal forward
/// latent map.
pub fn bayes_forward_map(
    ae_x: &LinearAutoencoder,
    ae_b: &LinearAutoencoder,
    a: &Matrix,
    gamma_x: &Matrix,
) -> Result<Matrix> {
    check_operator(ae_x, ae_b, a)?;
    check_spd(gamma_x, "gamma_x")?;
    let ex = &ae_x.encoder;
    let g_ex_t = gamma_x * ex.transpose();
    let gram = ex * &g_ex_t;
    ensure_invertible(&gram, "E_x Gamma_x E_x^T (E_x must have full row rank)")?;
    let rhs = &ae_b.encoder * a * &g_ex_t;
    // M gram = rhs  <=>  gram^T M^T = rhs^T
    Ok(solve_square(&gram.transpose(), &rhs.transpose(), "E_x Gamma_x E_x^T")?.transpose())
}

/// `E_x Gamma_x A^T E_b^T (E_b Gamma_b E_b^T)^-1` with
/// `Gamma_b = A Gamma_x A^T + Gamma_eps`, the Bayes-optimal inverse latent map.
pub fn bayes_inverse_map(
    ae_x: &LinearAutoencoder,
    ae_b: &LinearAutoencoder,
    a: &Matrix,
    gamma_x: &Matrix,
    gamma_eps: &Matrix,
) -> Result<Matrix> {
    check_operator(ae_x, ae_b, a)?;
    check_spd(gamma_x, "gamma_x")?;
    check_spd(gamma_eps, "gamma_eps")?;
    if gamma_eps.nrows() != a.nrows() {
        return Err(Error::Dimension {
            context: "gamma_eps",
            expected: a.nrows().to_string(),
            actual: gamma_eps.nrows().to_string(),
        });
    }
    let gamma_b = observation_moment(a, gamma_x, gamma_eps);
    let eb = &ae_b.encoder;
    let gram = eb * &gamma_b * eb.transpose();
    ensure_invertible(&gram, "E_b Gamma_b E_b^T (E_b must have full row rank)")?;
    let rhs = &ae_x.encoder * gamma_x * a.transpose() * eb.transpose();
    Ok(solve_square(&gram.transpose(), &rhs.transpose(), "E_b Gamma_b E_b^T")?.transpose())
}

/// `A Gamma_x A^T + Gamma_eps`.
pub fn observation_moment(a: &Matrix, gamma_x: &Matrix, gamma_eps: &Matrix) -> Matrix {
    let g = a * gamma_x * a.transpose() + gamma_eps;
    (&g + g.transpose()) * 0.5
}

fn ensure_invertible(g: &Matrix, what: &str) -> Result<()> {
    let s = numerics::svd(g)?;
    let k = s.sigma.len();
    if s.sigma[k - 1] <= default_rtol(k, k) * s.sigma[0] {
        return Err(Error::Singular(what.to_string()));
    }
    Ok(())
}

fn check_operator(ae_x: &LinearAutoencoder, ae_b: &LinearAutoencoder, a: &Matrix) -> Result<()> {
    if a.ncols() != ae_x.input_dim() || a.nrows() != ae_b.input_dim() {
        return Err(Error::Dimension {
            context: "forward operator",
            expected: format!("{}x{}", ae_b.input_dim(), ae_x.input_dim()),
            actual: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    Ok(())
}

/// Forward and inverse maps between the two latent spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMap {
    /// `r_b x r_x`
    pub forward: Matrix,
    /// `r_x x r_b`
    pub inverse: Matrix,
    pub mode: FitMode,
}

impl LatentMap {
    pub fn new(forward: Matrix, inverse: Matrix, mode: FitMode) -> Result<Self> {
        if forward.nrows() != inverse.ncols() || forward.ncols() != inverse.nrows() {
            return Err(Error::Dimension {
                context: "latent maps",
                expected: format!("inverse {}x{}", forward.ncols(), forward.nrows()),
                actual: format!("{}x{}", inverse.nrows(), inverse.ncols()),
            });
        }
        numerics::ensure_finite(&forward)?;
        numerics::ensure_finite(&inverse)?;
        Ok(Self {
            forward,
            inverse,
            mode,
        })
    }

    pub fn r_x(&self) -> usize {
        self.forward.ncols()
    }

    pub fn r_b(&self) -> usize {
        self.forward.nrows()
    }
}

/// Minimal-norm least-squares maps `M = Z_b Z_x^+`, `M^+ = Z_x Z_b^+` from
/// paired latent codes (one pair per column).
pub fn fit_empirical_latent_maps(z_x: &Matrix, z_b: &Matrix) -> Result<LatentMap> {
    if z_x.ncols() == 0 {
        return precondition("no paired samples");
    }
    if z_x.ncols() != z_b.ncols() {
        return Err(Error::Dimension {
            context: "paired latent codes",
            expected: format!("{} columns", z_x.ncols()),
            actual: format!("{} columns", z_b.ncols()),
        });
    }
    let forward = min_norm_right_solve(z_x, z_b)?;
    let inverse = min_norm_right_solve(z_b, z_x)?;
    LatentMap::new(forward, inverse, FitMode::Empirical)
}

/// Two autoencoders joined by latent maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub ae_x: LinearAutoencoder,
    pub ae_b: LinearAutoencoder,
    pub maps: LatentMap,
}

impl PairModel {
    pub fn new(ae_x: LinearAutoencoder, ae_b: LinearAutoencoder, maps: LatentMap) -> Result<Self> {
        if maps.r_x() != ae_x.latent_dim || maps.r_b() != ae_b.latent_dim {
            return Err(Error::Dimension {
                context: "pair model latent dims",
                expected: format!("r_x={}, r_b={}", ae_x.latent_dim, ae_b.latent_dim),
                actual: format!("r_x={}, r_b={}", maps.r_x(), maps.r_b()),
            });
        }
        Ok(Self { ae_x, ae_b, maps })
    }

    /// Fits both autoencoders on their own sample sets and the maps on the
    /// paired set.
    pub fn fit_empirical(
        unpaired_x: &Matrix,
        unpaired_b: &Matrix,
        paired_x: &Matrix,
        paired_b: &Matrix,
        r_x: usize,
        r_b: usize,
    ) -> Result<Self> {
        let ae_x = fit_empirical_autoencoder(unpaired_x, r_x, None)?;
        let ae_b = fit_empirical_autoencoder(unpaired_b, r_b, None)?;
        let maps =
            fit_empirical_latent_maps(&ae_x.encode_all(paired_x)?, &ae_b.encode_all(paired_b)?)?;
        Self::new(ae_x, ae_b, maps)
    }

    /// `D_b M E_x x`
    pub fn forward_apply(&self, x: &Vector) -> Result<Vector> {
        let z = self.ae_x.encode(x)?;
        self.ae_b.decode(&(&self.maps.forward * z))
    }

    /// `D_x M^+ E_b b`
    pub fn inverse_apply(&self, b: &Vector) -> Result<Vector> {
        let z = self.ae_b.encode(b)?;
        self.ae_x.decode(&(&self.maps.inverse * z))
    }

    /// Column-wise [`Self::forward_apply`].
    pub fn forward_apply_all(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.ae_x.encode_all(x)?;
        Ok(&self.ae_b.decoder * (&self.maps.forward * z))
    }

    /// Column-wise [`Self::inverse_apply`].
    pub fn inverse_apply_all(&self, b: &Matrix) -> Result<Matrix> {
        let z = self.ae_b.encode_all(b)?;
        Ok(&self.ae_x.decoder * (&self.maps.inverse * z))
    }
}

pub fn pair_forward_apply(model: &PairModel, x: &Vector) -> Result<Vector> {
    model.forward_apply(x)
}

pub fn pair_inverse_apply(model: &PairModel, b: &Vector) -> Result<Vector> {
    model.inverse_apply(b)
}

/// Dense surrogates `(P, P^+) = (D_b M E_x, D_x M^+ E_b)`.
pub fn materialize_surrogates(model: &PairModel) -> (Matrix, Matrix) {
    let p = &model.ae_b.decoder * (&model.maps.forward * &model.ae_x.encoder);
    let p_dag = &model.ae_x.decoder * (&model.maps.inverse * &model.ae_b.encoder);
    (p, p_dag)
}

/// Closed-form Bayes surrogates built from eigendecompositions of
/// `Gamma_x` and `Gamma_b = A Gamma_x A^T + Gamma_eps`:
///
/// ```text
/// P   = U_b U_b^T A U_x U_x^T
/// P^+ = U_x S_x^2 U_x^T A^T U_b S_b^-2 U_b^T
/// ```
///
/// with `U_x, S_x^2` (resp. `U_b, S_b^2`) the leading `r_x` (resp. `r_b`)
/// eigenpairs.
pub fn closed_form_bayes_surrogates(
    a: &Matrix,
    gamma_x: &Matrix,
    gamma_eps: &Matrix,
    r_x: usize,
    r_b: usize,
) -> Result<(Matrix, Matrix)> {
    check_spd(gamma_x, "gamma_x")?;
    check_spd(gamma_eps, "gamma_eps")?;
    let (q, n) = a.shape();
    if gamma_x.nrows() != n || gamma_eps.nrows() != q {
        return Err(Error::Dimension {
            context: "closed-form surrogates",
            expected: format!("gamma_x {n}x{n}, gamma_eps {q}x{q}"),
            actual: format!("{0}x{0}, {1}x{1}", gamma_x.nrows(), gamma_eps.nrows()),
        });
    }
    if r_x == 0 || r_x > n || r_b == 0 || r_b > q {
        return precondition(format!("ranks ({r_x}, {r_b}) outside (1..={n}, 1..={q})"));
    }
    let gamma_b = observation_moment(a, gamma_x, gamma_eps);
    let (ux_full, lx) = spd_eigen(gamma_x);
    let (ub_full, lb) = spd_eigen(&gamma_b);
    let ux = ux_full.columns(0, r_x).into_owned();
    let ub = ub_full.columns(0, r_b).into_owned();

    let p = &ub * (ub.transpose() * a * &ux) * ux.transpose();

    let mut ux_s2 = ux.clone();
    for j in 0..r_x {
        ux_s2.column_mut(j).scale_mut(lx[j]);
    }
    let mut ub_sinv2 = ub.clone();
    for j in 0..r_b {
        ub_sinv2.column_mut(j).scale_mut(1.0 / lb[j]);
    }
    let p_dag = ux_s2 * (ux.transpose() * a.transpose() * &ub) * ub_sinv2.transpose();
    Ok((p, p_dag))
}

/// Bayes PAIR model composed from [`fit_bayes_autoencoder`] and the two
/// Bayes latent maps. Factors of `Gamma_x` and `Gamma_b` come from Cholesky.
pub fn fit_bayes_pair(
    a: &Matrix,
    gamma_x: &Matrix,
    gamma_eps: &Matrix,
    r_x: usize,
    r_b: usize,
    mixing_x: Option<&Matrix>,
    mixing_b: Option<&Matrix>,
) -> Result<PairModel> {
    let gamma_b = observation_moment(a, gamma_x, gamma_eps);
    let ae_x = fit_bayes_autoencoder(&cholesky_factor(gamma_x)?, r_x, mixing_x)?;
    let ae_b = fit_bayes_autoencoder(&cholesky_factor(&gamma_b)?, r_b, mixing_b)?;
    let forward = bayes_forward_map(&ae_x, &ae_b, a, gamma_x)?;
    let inverse = bayes_inverse_map(&ae_x, &ae_b, a, gamma_x, gamma_eps)?;
    let maps = LatentMap::new(forward, inverse, FitMode::Bayes)?;
    PairModel::new(ae_x, ae_b, maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rel_fro;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let g = random(n, n, rng);
        &g * g.transpose() + identity(n) * 0.5
    }

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_row_slice(v))
    }

    fn assert_projector(ae: &LinearAutoencoder) {
        let p = ae.projector();
        assert!(rel_fro(&(&p * &p), &p) <= 1e-10);
        assert!(rel_fro(&p.transpose(), &p) <= 1e-10);
        assert!(rel_fro(&(&ae.encoder * &ae.decoder), &identity(ae.latent_dim)) <= 1e-10);
    }

    #[test]
    fn empirical_ae_on_diagonal_samples() {
        let x = diag(&[3.0, 2.0, 1.0]);
        let ae = fit_empirical_autoencoder(&x, 2, None).unwrap();
        assert!((ae.projector() - diag(&[1.0, 1.0, 0.0])).norm() < 1e-12);
        assert_projector(&ae);
        // Eckart-Young: trailing sigma^2 = 1
        let err = ((ae.projector() - identity(3)) * &x).norm_squared();
        assert!((err - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_ae_full_rank_reproduces_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(6, 4, &mut rng);
        let ae = fit_empirical_autoencoder(&x, 4, None).unwrap();
        assert!(rel_fro(&(ae.projector() * &x), &x) <= 1e-10);
    }

    #[test]
    fn empirical_ae_rejects_rank_beyond_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(6, 2, &mut rng) * random(2, 10, &mut rng);
        match fit_empirical_autoencoder(&x, 3, None) {
            Err(Error::RankExceeded {
                requested: 3,
                sigma,
            }) => assert!(sigma < 1e-10),
            other => panic!("unexpected {other:?}"),
        }
        assert!(fit_empirical_autoencoder(&x, 0, None).is_err());
        assert!(fit_empirical_autoencoder(&x, 7, None).is_err());
    }

    #[test]
    fn empirical_ae_rejects_singular_mixing() {
        let x = diag(&[3.0, 2.0, 1.0]);
        let k = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            fit_empirical_autoencoder(&x, 2, Some(&k)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn mixing_matrix_keeps_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(8, 20, &mut rng);
        let k = random(3, 3, &mut rng) + identity(3) * 3.0;
        let plain = fit_empirical_autoencoder(&x, 3, None).unwrap();
        let mixed = fit_empirical_autoencoder(&x, 3, Some(&k)).unwrap();
        assert!(rel_fro(&mixed.projector(), &plain.projector()) < 1e-10);
        assert!(rel_fro(&(&mixed.encoder * &mixed.decoder), &identity(3)) < 1e-10);
    }

    #[test]
    fn bayes_ae_simple_cases() {
        let ae = fit_bayes_autoencoder(&identity(4), 4, None).unwrap();
        assert!(rel_fro(&ae.projector(), &identity(4)) < 1e-12);
        let ae = fit_bayes_autoencoder(&diag(&[2.0, 1.0]), 1, None).unwrap();
        assert!((ae.projector() - diag(&[1.0, 0.0])).norm() < 1e-12);
        assert_projector(&ae);
    }

    #[test]
    fn bayes_ae_rejects_rank_deficient_factor() {
        let l = diag(&[1.0, 0.0, 2.0]);
        assert!(matches!(
            fit_bayes_autoencoder(&l, 1, None),
            Err(Error::RankDeficientFactor { .. })
        ));
    }

    #[test]
    fn bayes_ae_beats_random_rank2_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gamma = random_spd(5, &mut rng);
        let l = cholesky_factor(&gamma).unwrap();
        let ae = fit_bayes_autoencoder(&l, 2, None).unwrap();
        let y = ae.projector();
        let best = (&y * &l - &l).norm_squared();
        // Eckart-Young value from the eigenvalues of gamma
        let (_, ev) = spd_eigen(&gamma);
        let tail: f64 = ev.iter().skip(2).sum();
        assert!((best - tail).abs() <= 1e-10 * tail.max(1.0));
        for _ in 0..10_000 {
            let cand = random(5, 2, &mut rng) * random(2, 5, &mut rng);
            let obj = (&cand * &l - &l).norm_squared();
            assert!(obj >= best - 1e-9);
        }
        // minimal norm: the orthogonal projector has ||Y||_F^2 = r
        assert!((y.norm_squared() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn forward_map_identity_encoder_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(3, 4, &mut rng);
        let ae_x = fit_bayes_autoencoder(&identity(4), 4, None).unwrap();
        let ae_b = fit_bayes_autoencoder(&diag(&[3.0, 2.0, 1.0]), 2, None).unwrap();
        for gamma_x in [identity(4), random_spd(4, &mut rng)] {
            let m = bayes_forward_map(&ae_x, &ae_b, &a, &gamma_x).unwrap();
            let expected = &ae_b.encoder * &a;
            assert!(rel_fro(&m, &expected) < 1e-10);
        }
    }

    #[test]
    fn inverse_map_scalar_shrinkage() {
        let sigma2 = 0.25;
        let n = 3;
        let ae = fit_bayes_autoencoder(&identity(n), n, None).unwrap();
        let m = bayes_inverse_map(
            &ae,
            &ae,
            &identity(n),
            &identity(n),
            &(identity(n) * sigma2),
        )
        .unwrap();
        assert!(rel_fro(&m, &(identity(n) / (1.0 + sigma2))) < 1e-12);
    }

    #[test]
    fn inverse_map_rejects_non_spd_noise() {
        let ae = fit_bayes_autoencoder(&identity(2), 2, None).unwrap();
        let bad = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            bayes_inverse_map(&ae, &ae, &identity(2), &identity(2), &bad),
            Err(Error::NotSpd(_))
        ));
        let indefinite = diag(&[1.0, -1.0]);
        assert!(matches!(
            bayes_inverse_map(&ae, &ae, &identity(2), &identity(2), &indefinite),
            Err(Error::NotSpd(_))
        ));
    }

    #[test]
    fn empirical_maps_simple_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = random(3, 10, &mut rng);
        let maps = fit_empirical_latent_maps(&z, &z).unwrap();
        assert!(rel_fro(&maps.forward, &identity(3)) < 1e-10);
        assert!(rel_fro(&maps.inverse, &identity(3)) < 1e-10);

        let zx = random(4, 4, &mut rng);
        let zb = random(2, 4, &mut rng);
        let maps = fit_empirical_latent_maps(&zx, &zb).unwrap();
        let inv = zx.clone().try_inverse().unwrap();
        assert!(rel_fro(&maps.forward, &(&zb * inv)) < 1e-10);

        let zx = random(3, 15, &mut rng);
        let zb = random(5, 15, &mut rng);
        let maps = fit_empirical_latent_maps(&zx, &zb).unwrap();
        let normal = &zb * zx.transpose() * (&zx * zx.transpose()).try_inverse().unwrap();
        assert!(rel_fro(&maps.forward, &normal) < 1e-10);
    }

    #[test]
    fn empirical_maps_preconditions() {
        let zx = Matrix::zeros(2, 0);
        assert!(fit_empirical_latent_maps(&zx, &zx).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(2, 3, &mut rng);
        let b = random(2, 4, &mut rng);
        assert!(matches!(
            fit_empirical_latent_maps(&a, &b),
            Err(Error::Dimension { .. })
        ));
    }

    fn identity_model(m: Matrix, m_dag: Matrix) -> PairModel {
        let (q, n) = m.shape();
        let ae_x = fit_bayes_autoencoder(&identity(n), n, None).unwrap();
        let ae_b = fit_bayes_autoencoder(&identity(q), q, None).unwrap();
        PairModel::new(
            ae_x,
            ae_b,
            LatentMap::new(m, m_dag, FitMode::Bayes).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn apply_with_identity_autoencoders() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random(3, 4, &mut rng);
        let model = identity_model(a.clone(), Matrix::zeros(4, 3));
        let x = Vector::from_fn(4, |_, _| rng.sample(StandardNormal));
        let y = pair_forward_apply(&model, &x).unwrap();
        assert!((y - &a * &x).norm() < 1e-12);
        assert_eq!(
            pair_forward_apply(&model, &Vector::zeros(4))
                .unwrap()
                .norm(),
            0.0
        );
        assert!(pair_forward_apply(&model, &Vector::zeros(3)).is_err());

        let model = identity_model(Matrix::zeros(3, 3), identity(3));
        let b = Vector::from_fn(3, |_, _| rng.sample(StandardNormal));
        assert!((pair_inverse_apply(&model, &b).unwrap() - &b).norm() < 1e-12);
        assert_eq!(
            pair_inverse_apply(&model, &Vector::zeros(3))
                .unwrap()
                .norm(),
            0.0
        );
    }

    #[test]
    fn apply_matches_dense_surrogates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(6, 30, &mut rng);
        let a = random(5, 6, &mut rng);
        let b = &a * &x + random(5, 30, &mut rng) * 0.05;
        let model = PairModel::fit_empirical(&x, &b, &x, &b, 4, 3).unwrap();
        let (p, p_dag) = materialize_surrogates(&model);
        for j in 0..5 {
            let xj = x.column(j).into_owned();
            let bj = b.column(j).into_owned();
            let fwd = pair_forward_apply(&model, &xj).unwrap();
            let inv = pair_inverse_apply(&model, &bj).unwrap();
            assert!((&fwd - &p * &xj).norm() <= 1e-12 * fwd.norm().max(1.0));
            assert!((&inv - &p_dag * &bj).norm() <= 1e-12 * inv.norm().max(1.0));
        }
    }

    #[test]
    fn closed_form_without_compression() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random(4, 5, &mut rng);
        let gx = random_spd(5, &mut rng);
        let ge = random_spd(4, &mut rng) * 0.1;
        let (p, p_dag) = closed_form_bayes_surrogates(&a, &gx, &ge, 5, 4).unwrap();
        assert!(rel_fro(&p, &a) < 1e-10);
        let gb = observation_moment(&a, &gx, &ge);
        let expected = &gx * a.transpose() * gb.try_inverse().unwrap();
        assert!(rel_fro(&p_dag, &expected) < 1e-10);
    }

    #[test]
    fn closed_form_matches_composition_under_mixing() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random(5, 6, &mut rng);
        let gx = random_spd(6, &mut rng);
        let ge = random_spd(5, &mut rng) * 0.2;
        let (p, p_dag) = closed_form_bayes_surrogates(&a, &gx, &ge, 3, 2).unwrap();
        let kx = random(3, 3, &mut rng) + identity(3) * 2.0;
        let kb = random(2, 2, &mut rng) + identity(2) * 2.0;
        let model = fit_bayes_pair(&a, &gx, &ge, 3, 2, Some(&kx), Some(&kb)).unwrap();
        let (pc, pc_dag) = materialize_surrogates(&model);
        assert!(rel_fro(&pc, &p) < 1e-10);
        assert!(rel_fro(&pc_dag, &p_dag) < 1e-10);
    }

    #[test]
    fn noiseless_empirical_recovers_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = random(5, 5, &mut rng) + identity(5) * 3.0;
        let x = random(5, 40, &mut rng);
        let b = &a * &x;
        let model = PairModel::fit_empirical(&x, &b, &x, &b, 5, 5).unwrap();
        let (p, p_dag) = materialize_surrogates(&model);
        assert!(rel_fro(&p, &a) < 1e-8);
        let cond = {
            let s = numerics::svd(&a).unwrap();
            s.sigma[0] / s.sigma[4]
        };
        assert!(rel_fro(&p_dag, &a.try_inverse().unwrap()) < 1e-6 * cond);
    }

    #[test]
    fn spd_eigen_sorted_descending() {
        let (u, l) = spd_eigen(&diag(&[1.0, 3.0, 2.0]));
        assert_eq!(l.as_slice(), &[3.0, 2.0, 1.0]);
        assert!((u[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }
}
