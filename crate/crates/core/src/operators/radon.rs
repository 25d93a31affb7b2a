use std::f64::consts::{PI, SQRT_2};

use crate::error::{precondition, Result};
use crate::numerics::Vector;

use super::{check_input, LinearOperator, OperatorDescriptor};

/// Parallel-beam line-integral operator.
///
/// Angles are uniform in `[0, pi)`; `n_detectors` bins of width
/// `sqrt(2) n / n_detectors` span the image diagonal. Each pixel (unit area)
/// is projected along the detector axis and its value split linearly between
/// the two nearest bin centers, divided by the bin width. Sinograms are
/// stored angle-major: entry `angle * n_detectors + bin`.
#[derive(Debug, Clone)]
pub struct Radon {
    n: usize,
    n_angles: usize,
    n_detectors: usize,
    /// (sinogram row, pixel, weight), sorted by row then pixel.
    weights: Vec<(u32, u32, f64)>,
}

impl Radon {
    pub fn new(n: usize, n_angles: usize, n_detectors: usize) -> Result<Self> {
        if n < 4 {
            return precondition(format!("image size {n} must be at least 4"));
        }
        if n_angles == 0 || n_detectors == 0 {
            return precondition("need at least one angle and one detector");
        }
        let bin = Self::bin_width_for(n, n_detectors);
        let half_span = 0.5 * SQRT_2 * n as f64;
        let center = (n as f64 - 1.0) / 2.0;
        let mut weights = Vec::with_capacity(2 * n * n * n_angles);
        for a in 0..n_angles {
            let theta = PI * a as f64 / n_angles as f64;
            let (s, c) = theta.sin_cos();
            let row0 = (a * n_detectors) as u32;
            let mut per_angle: Vec<(u32, u32, f64)> = Vec::with_capacity(2 * n * n);
            for i in 0..n {
                let y = center - i as f64;
                for j in 0..n {
                    let x = j as f64 - center;
                    let proj = x * c + y * s;
                    // fractional bin coordinate, bin k centered at k + 0.5
                    let t = (proj + half_span) / bin - 0.5;
                    let k0 = t.floor();
                    let frac = t - k0;
                    let pixel = (i * n + j) as u32;
                    for (k, w) in [(k0 as isize, 1.0 - frac), (k0 as isize + 1, frac)] {
                        if w > 0.0 && k >= 0 && (k as usize) < n_detectors {
                            per_angle.push((row0 + k as u32, pixel, w / bin));
                        }
                    }
                }
            }
            per_angle.sort_by_key(|&(r, p, _)| (r, p));
            weights.extend(per_angle);
        }
        Ok(Self {
            n,
            n_angles,
            n_detectors,
            weights,
        })
    }

    fn bin_width_for(n: usize, n_detectors: usize) -> f64 {
        SQRT_2 * n as f64 / n_detectors as f64
    }

    pub fn bin_width(&self) -> f64 {
        Self::bin_width_for(self.n, self.n_detectors)
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    /// Splatting weights as `(sinogram row, pixel, weight)`.
    pub fn weights(&self) -> &[(u32, u32, f64)] {
        &self.weights
    }
}

impl LinearOperator for Radon {
    fn in_dim(&self) -> usize {
        self.n * self.n
    }

    fn out_dim(&self) -> usize {
        self.n_angles * self.n_detectors
    }

    fn apply(&self, x: &Vector) -> Vector {
        check_input(self, x.len(), false);
        let mut out = Vector::zeros(self.out_dim());
        for &(r, p, w) in &self.weights {
            out[r as usize] += w * x[p as usize];
        }
        out
    }

    fn apply_adjoint(&self, y: &Vector) -> Vector {
        check_input(self, y.len(), true);
        let mut out = Vector::zeros(self.in_dim());
        for &(r, p, w) in &self.weights {
            out[p as usize] += w * y[r as usize];
        }
        out
    }

    fn descriptor(&self) -> OperatorDescriptor {
        OperatorDescriptor::Radon {
            n: self.n,
            n_angles: self.n_angles,
            n_detectors: self.n_detectors,
        }
    }
}
