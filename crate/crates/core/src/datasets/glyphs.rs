//! Synthetic typed-letter images used as out-of-distribution probes.
//!
//! Capital letters A-J are stored as straight strokes on a 5x7 grid
//! (x in 0..=4, y in 0..=6, y pointing down) and rendered as a single bright
//! anti-aliased shape on a black frame.

use rand::Rng;

use super::ImageStack;

type Stroke = ((f64, f64), (f64, f64));

const fn s(x0: f64, y0: f64, x1: f64, y1: f64) -> Stroke {
    ((x0, y0), (x1, y1))
}

pub const LETTERS: [&[Stroke]; 10] = [
    // A
    &[s(0., 6., 2., 0.), s(2., 0., 4., 6.), s(1., 4., 3., 4.)],
    // B
    &[
        s(0., 0., 0., 6.),
        s(0., 0., 3., 0.),
        s(3., 0., 4., 1.),
        s(4., 1., 4., 2.),
        s(4., 2., 3., 3.),
        s(0., 3., 3., 3.),
        s(3., 3., 4., 4.),
        s(4., 4., 4., 5.),
        s(4., 5., 3., 6.),
        s(3., 6., 0., 6.),
    ],
    // C
    &[
        s(4., 1., 3., 0.),
        s(3., 0., 1., 0.),
        s(1., 0., 0., 1.),
        s(0., 1., 0., 5.),
        s(0., 5., 1., 6.),
        s(1., 6., 3., 6.),
        s(3., 6., 4., 5.),
    ],
    // D
    &[
        s(0., 0., 0., 6.),
        s(0., 0., 2., 0.),
        s(2., 0., 4., 2.),
        s(4., 2., 4., 4.),
        s(4., 4., 2., 6.),
        s(2., 6., 0., 6.),
    ],
    // E
    &[
        s(0., 0., 0., 6.),
        s(0., 0., 4., 0.),
        s(0., 3., 3., 3.),
        s(0., 6., 4., 6.),
    ],
    // F
    &[s(0., 0., 0., 6.), s(0., 0., 4., 0.), s(0., 3., 3., 3.)],
    // G
    &[
        s(4., 1., 3., 0.),
        s(3., 0., 1., 0.),
        s(1., 0., 0., 1.),
        s(0., 1., 0., 5.),
        s(0., 5., 1., 6.),
        s(1., 6., 3., 6.),
        s(3., 6., 4., 5.),
        s(4., 5., 4., 3.),
        s(4., 3., 2., 3.),
    ],
    // H
    &[s(0., 0., 0., 6.), s(4., 0., 4., 6.), s(0., 3., 4., 3.)],
    // I
    &[s(1., 0., 3., 0.), s(2., 0., 2., 6.), s(1., 6., 3., 6.)],
    // J
    &[
        s(2., 0., 4., 0.),
        s(4., 0., 4., 5.),
        s(4., 5., 3., 6.),
        s(3., 6., 1., 6.),
        s(1., 6., 0., 5.),
    ],
];

fn segment_distance(px: f64, py: f64, (a, b): Stroke) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (px - a.0 - t * dx).hypot(py - a.1 - t * dy)
}

/// Renders one letter with pixel scale `scale` (pixels per grid unit),
/// stroke width `thickness` (pixels) and top-left grid origin `(ox, oy)`.
pub fn render_letter(
    letter: usize,
    n: usize,
    scale: f64,
    thickness: f64,
    origin: (f64, f64),
) -> Vec<f64> {
    let strokes: Vec<Stroke> = LETTERS[letter]
        .iter()
        .map(|&((x0, y0), (x1, y1))| {
            (
                (origin.0 + x0 * scale, origin.1 + y0 * scale),
                (origin.0 + x1 * scale, origin.1 + y1 * scale),
            )
        })
        .collect();
    let mut img = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (px, py) = (j as f64 + 0.5, i as f64 + 0.5);
            let d = strokes
                .iter()
                .map(|&st| segment_distance(px, py, st))
                .fold(f64::INFINITY, f64::min);
            img[i * n + j] = (0.5 * thickness + 0.5 - d).clamp(0.0, 1.0);
        }
    }
    img
}

/// `count` random glyphs on an `n x n` frame.
pub fn make_ood_glyphs<R: Rng + ?Sized>(count: usize, n: usize, rng: &mut R) -> ImageStack {
    let mut pixels = Vec::with_capacity(count * n * n);
    for _ in 0..count {
        let letter = rng.gen_range(0..LETTERS.len());
        // glyph height 6 * scale covers 75-90% of the frame
        let scale = n as f64 * rng.gen_range(0.75..0.9) / 6.0;
        let thickness = n as f64 * rng.gen_range(0.09..0.16);
        let (w, h) = (4.0 * scale, 6.0 * scale);
        let margin = 0.5 * thickness + 1.0;
        let ox = rng.gen_range(margin..(n as f64 - w - margin).max(margin + 1e-9));
        let oy = rng.gen_range(margin..(n as f64 - h - margin).max(margin + 1e-9));
        pixels.extend(render_letter(letter, n, scale, thickness, (ox, oy)));
    }
    ImageStack {
        height: n,
        width: n,
        count,
        pixels,
    }
}
