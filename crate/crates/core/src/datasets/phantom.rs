//! Randomized Shepp-Logan head phantoms.
//!
//! Base configuration is the ten-ellipse modified Shepp-Logan table (Toft's
//! high-contrast intensities), whose values already lie in `[0, 1]`.

use std::f64::consts::PI;

use rand::Rng;

/// One ellipse: intensity, semi-axes, center and rotation in degrees, all in
/// the `[-1, 1]^2` image frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

const fn e(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Ellipse {
    Ellipse {
        intensity,
        a,
        b,
        x0,
        y0,
        phi_deg,
    }
}

pub const MODIFIED_SHEPP_LOGAN: [Ellipse; 10] = [
    e(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    e(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    e(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    e(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    e(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    e(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    e(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    e(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    e(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    e(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Default relative jitter.
pub const DEFAULT_JITTER: f64 = 0.1;

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = (self.phi_deg * PI / 180.0).sin_cos();
        let dx = x - self.x0;
        let dy = y - self.y0;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }

    /// Applies uniform relative jitter: axes and intensity scale by
    /// `1 + jitter * U(-1, 1)`, the center moves by up to `jitter` times the
    /// semi-axes, the rotation by up to `jitter * 90` degrees. The result is
    /// shrunk if needed to stay inside the unit disk.
    fn jittered<R: Rng + ?Sized>(&self, jitter: f64, rng: &mut R) -> Ellipse {
        let mut u = || jitter * rng.gen_range(-1.0..=1.0);
        let mut out = Ellipse {
            intensity: self.intensity * (1.0 + u()),
            a: self.a * (1.0 + u()),
            b: self.b * (1.0 + u()),
            x0: self.x0 + u() * self.a,
            y0: self.y0 + u() * self.b,
            phi_deg: self.phi_deg + u() * 90.0,
        };
        let reach = out.x0.hypot(out.y0) + out.a.max(out.b);
        if reach > 1.0 {
            let center = out.x0.hypot(out.y0);
            let room = (1.0 - center).max(0.0);
            let shrink = if out.a.max(out.b) > 0.0 {
                room / out.a.max(out.b)
            } else {
                1.0
            };
            out.a *= shrink;
            out.b *= shrink;
        }
        out
    }
}

/// Rasterizes ellipses onto an `n x n` grid (row-major, row 0 at the top),
/// sampling each pixel at its center, then clips to `[0, 1]`.
pub fn render(ellipses: &[Ellipse], n: usize) -> Vec<f64> {
    let mut img = vec![0.0; n * n];
    for i in 0..n {
        let y = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
        for j in 0..n {
            let x = (2.0 * j as f64 + 1.0) / n as f64 - 1.0;
            let v: f64 = ellipses
                .iter()
                .filter(|el| el.contains(x, y))
                .map(|el| el.intensity)
                .sum();
            img[i * n + j] = v.clamp(0.0, 1.0);
        }
    }
    img
}

/// One randomized phantom; `jitter = 0` reproduces the canonical table.
pub fn generate_shepp_logan<R: Rng + ?Sized>(n: usize, rng: &mut R, jitter: f64) -> Vec<f64> {
    assert!(n >= 16, "phantom size must be at least 16");
    assert!((0.0..=1.0).contains(&jitter), "jitter must lie in [0, 1]");
    if jitter == 0.0 {
        return render(&MODIFIED_SHEPP_LOGAN, n);
    }
    let table: Vec<Ellipse> = MODIFIED_SHEPP_LOGAN
        .iter()
        .map(|el| el.jittered(jitter, rng))
        .collect();
    render(&table, n)
}
