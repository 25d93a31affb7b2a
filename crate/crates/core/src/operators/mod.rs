//! Linear forward models with adjoints, and the additive noise model.

mod blur;
mod noise;
mod radon;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

pub use blur::GaussianBlur;
pub use noise::{add_noise, NoiseMode, NoiseSpec};
pub use radon::Radon;

/// Refuse to materialize operators with more entries than this.
pub const MATERIALIZE_LIMIT: usize = 100_000_000;

/// Parameter record sufficient to rebuild an operator exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorDescriptor {
    Identity {
        n: usize,
    },
    GaussianBlur {
        height: usize,
        width: usize,
        ksize: usize,
        sigma: f64,
    },
    Radon {
        n: usize,
        n_angles: usize,
        n_detectors: usize,
    },
}

impl OperatorDescriptor {
    pub fn build(&self) -> Result<Box<dyn LinearOperator>> {
        Ok(match *self {
            OperatorDescriptor::Identity { n } => Box::new(IdentityOperator { n }),
            OperatorDescriptor::GaussianBlur {
                height,
                width,
                ksize,
                sigma,
            } => Box::new(GaussianBlur::new(height, width, ksize, sigma)?),
            OperatorDescriptor::Radon {
                n,
                n_angles,
                n_detectors,
            } => Box::new(Radon::new(n, n_angles, n_detectors)?),
        })
    }
}

/// A matrix-free linear map `R^in_dim -> R^out_dim` with its transpose.
pub trait LinearOperator: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&self, x: &Vector) -> Vector;
    fn apply_adjoint(&self, y: &Vector) -> Vector;
    fn descriptor(&self) -> OperatorDescriptor;

    /// Applies the operator to every column.
    fn apply_columns(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.out_dim(), x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            out.set_column(j, &self.apply(&col.into_owned()));
        }
        out
    }
}

fn check_input(op: &dyn LinearOperator, len: usize, adjoint: bool) {
    let expected = if adjoint { op.out_dim() } else { op.in_dim() };
    assert_eq!(len, expected, "operator input length");
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator {
    pub n: usize,
}

impl LinearOperator for IdentityOperator {
    fn in_dim(&self) -> usize {
        self.n
    }
    fn out_dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &Vector) -> Vector {
        check_input(self, x.len(), false);
        x.clone()
    }
    fn apply_adjoint(&self, y: &Vector) -> Vector {
        check_input(self, y.len(), true);
        y.clone()
    }
    fn descriptor(&self) -> OperatorDescriptor {
        OperatorDescriptor::Identity { n: self.n }
    }
}

/// Dense matrix whose column `j` is `op.apply(e_j)`.
pub fn materialize(op: &dyn LinearOperator) -> Result<Matrix> {
    let entries = op.in_dim().saturating_mul(op.out_dim());
    if entries > MATERIALIZE_LIMIT {
        return Err(Error::TooLarge {
            entries,
            limit: MATERIALIZE_LIMIT,
        });
    }
    let n = op.in_dim();
    let mut out = Matrix::zeros(op.out_dim(), n);
    let mut e = Vector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        out.set_column(j, &op.apply(&e));
        e[j] = 0.0;
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vector {
        Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// `|<Ax, y> - <x, A^T y>| / (||Ax|| ||y||)`
    pub fn adjoint_gap(op: &dyn LinearOperator, rng: &mut ChaCha8Rng) -> f64 {
        let x = random_vector(op.in_dim(), rng);
        let y = random_vector(op.out_dim(), rng);
        let ax = op.apply(&x);
        let aty = op.apply_adjoint(&y);
        (ax.dot(&y) - x.dot(&aty)).abs() / (ax.norm() * y.norm())
    }

    pub fn linearity_gap(op: &dyn LinearOperator, rng: &mut ChaCha8Rng) -> f64 {
        let x = random_vector(op.in_dim(), rng);
        let z = random_vector(op.in_dim(), rng);
        let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let lhs = op.apply(&(&x * alpha + &z * beta));
        let rhs = op.apply(&x) * alpha + op.apply(&z) * beta;
        (&lhs - &rhs).norm() / rhs.norm()
    }
}
