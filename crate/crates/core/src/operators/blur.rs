use crate::error::{precondition, Result};
use crate::numerics::Vector;

use super::{check_input, LinearOperator, OperatorDescriptor};

/// 2-D convolution with a sampled Gaussian kernel, normalized to unit sum,
/// with zero padding outside the image.
///
/// The kernel anchor sits at `(ksize / 2, ksize / 2)`; for an even size that
/// is the lower-right cell of the central 2x2 block. The Gaussian is centered
/// on the anchor. Images are flattened row-major.
#[derive(Debug, Clone)]
pub struct GaussianBlur {
    height: usize,
    width: usize,
    ksize: usize,
    sigma: f64,
    kernel: Vec<f64>,
}

impl GaussianBlur {
    pub fn new(height: usize, width: usize, ksize: usize, sigma: f64) -> Result<Self> {
        if ksize == 0 || ksize > height.min(width) {
            return precondition(format!(
                "kernel size {ksize} must be in 1..={}",
                height.min(width)
            ));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return precondition(format!("blur sigma must be positive, got {sigma}"));
        }
        let anchor = (ksize / 2) as f64;
        let g: Vec<f64> = (0..ksize)
            .map(|u| {
                let d = u as f64 - anchor;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let mut kernel: Vec<f64> = (0..ksize * ksize)
            .map(|idx| g[idx / ksize] * g[idx % ksize])
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        Ok(Self {
            height,
            width,
            ksize,
            sigma,
            kernel,
        })
    }

    /// Default 8x8 kernel with `sigma = 10`.
    pub fn with_defaults(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, 8, 10.0)
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn anchor(&self) -> usize {
        self.ksize / 2
    }

    fn sweep(&self, input: &[f64], out: &mut [f64], sign: isize) {
        let (h, w, k) = (self.height as isize, self.width as isize, self.ksize);
        let a = self.anchor() as isize;
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for u in 0..k {
                    // forward: source row i - (u - a); adjoint: i + (u - a)
                    let si = i - sign * (u as isize - a);
                    if si < 0 || si >= h {
                        continue;
                    }
                    let row = &self.kernel[u * k..(u + 1) * k];
                    for (v, &kv) in row.iter().enumerate() {
                        let sj = j - sign * (v as isize - a);
                        if sj >= 0 && sj < w {
                            acc += kv * input[(si * w + sj) as usize];
                        }
                    }
                }
                out[(i * w + j) as usize] = acc;
            }
        }
    }
}

impl LinearOperator for GaussianBlur {
    fn in_dim(&self) -> usize {
        self.height * self.width
    }

    fn out_dim(&self) -> usize {
        self.height * self.width
    }

    fn apply(&self, x: &Vector) -> Vector {
        check_input(self, x.len(), false);
        let mut out = Vector::zeros(self.out_dim());
        self.sweep(x.as_slice(), out.as_mut_slice(), 1);
        out
    }

    fn apply_adjoint(&self, y: &Vector) -> Vector {
        check_input(self, y.len(), true);
        let mut out = Vector::zeros(self.in_dim());
        self.sweep(y.as_slice(), out.as_mut_slice(), -1);
        out
    }

    fn descriptor(&self) -> OperatorDescriptor {
        OperatorDescriptor::GaussianBlur {
            height: self.height,
            width: self.width,
            ksize: self.ksize,
            sigma: self.sigma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::materialize;
    use super::super::test_support::*;
    use super::*;
    use crate::numerics::rel_fro;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_preserved_in_interior() {
        let op = GaussianBlur::with_defaults(16, 16).unwrap();
        let out = op.apply(&Vector::from_element(256, 0.7));
        let a = op.anchor();
        for i in 0..16 {
            for j in 0..16 {
                let v = out[i * 16 + j];
                // fully interior when every source pixel i - (u - a) is inside
                let interior = i >= 7 - a && i + a < 16 && j >= 7 - a && j + a < 16;
                if interior {
                    assert!((v - 0.7).abs() < 1e-14);
                } else {
                    assert!(v < 0.7);
                }
            }
        }
    }

    #[test]
    fn impulse_response_is_kernel_stamp() {
        let op = GaussianBlur::with_defaults(28, 28).unwrap();
        let mut x = Vector::zeros(784);
        x[14 * 28 + 14] = 1.0;
        let out = op.apply(&x);
        let a = op.anchor();
        for u in 0..8 {
            for v in 0..8 {
                let (i, j) = (14 + u - a, 14 + v - a);
                assert_eq!(out[i * 28 + j], op.kernel()[u * 8 + v]);
            }
        }
        assert!((out.sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn adjoint_and_linearity() {
        let op = GaussianBlur::with_defaults(28, 28).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            assert!(adjoint_gap(&op, &mut rng) <= 1e-10);
            assert!(linearity_gap(&op, &mut rng) <= 1e-12);
        }
    }

    #[test]
    fn materialized_rows_sum_to_at_most_one() {
        let op = GaussianBlur::new(4, 4, 3, 1.0).unwrap();
        let m = materialize(&op).unwrap();
        assert_eq!(m.shape(), (16, 16));
        // kernel-sum oracle: row (i, j) sums the kernel cells whose source
        // pixel lies inside the image
        for i in 0..4 {
            for j in 0..4 {
                let row_sum: f64 = m.row(i * 4 + j).sum();
                let mut oracle = 0.0;
                for u in 0..3 {
                    for v in 0..3 {
                        let (si, sj) = (i as isize - u as isize + 1, j as isize - v as isize + 1);
                        if (0..4).contains(&si) && (0..4).contains(&sj) {
                            oracle += op.kernel()[u * 3 + v];
                        }
                    }
                }
                assert!((row_sum - oracle).abs() < 1e-14);
                assert!(row_sum <= 1.0 + 1e-14);
                if (1..3).contains(&i) && (1..3).contains(&j) {
                    assert!((row_sum - 1.0).abs() < 1e-14);
                }
            }
        }
        let op8 = GaussianBlur::new(8, 8, 4, 10.0).unwrap();
        let m8 = materialize(&op8).unwrap();
        assert!(m8.row_iter().all(|r| r.sum() <= 1.0 + 1e-14));
    }

    #[test]
    fn odd_symmetric_kernel_gives_symmetric_matrix() {
        let op = GaussianBlur::new(12, 12, 5, 2.0).unwrap();
        let m = materialize(&op).unwrap();
        assert!(rel_fro(&m.transpose(), &m) <= 1e-12);
    }

    #[test]
    fn rejects_oversized_kernel() {
        assert!(GaussianBlur::new(6, 6, 8, 10.0).is_err());
        assert!(GaussianBlur::new(6, 6, 3, 0.0).is_err());
    }
}
