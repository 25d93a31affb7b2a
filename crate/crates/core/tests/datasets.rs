use pair_core::datasets::{data_dir, load_image_file, make_ood_glyphs, ImageStack};
use pair_core::seeding::rng_from;

fn nearest(query: &[f64], pool: &ImageStack, exclude: Option<usize>) -> f64 {
    (0..pool.count)
        .filter(|&k| Some(k) != exclude)
        .map(|k| {
            query
                .iter()
                .zip(pool.image(k))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

#[test]
fn glyphs_sit_farther_from_mnist_than_mnist_itself() {
    let test = load_image_file(&data_dir().join("mnist/t10k-images-idx3-ubyte.gz")).unwrap();
    let reference = test.select(200..test.count).unwrap();
    let glyphs = make_ood_glyphs(200, 28, &mut rng_from(5));

    let within = (0..200)
        .map(|k| nearest(test.image(k), &reference, None))
        .sum::<f64>()
        / 200.0;
    let across = (0..200)
        .map(|k| nearest(glyphs.image(k), &reference, None))
        .sum::<f64>()
        / 200.0;
    assert!(across > within, "glyph {across:.3} vs mnist {within:.3}");

    // sanity on the distance itself: an image is at distance zero from itself
    assert_eq!(nearest(test.image(0), &test, None), 0.0);
    assert!(nearest(test.image(0), &test, Some(0)) > 0.0);
}

#[test]
fn glyph_pixels_match_mnist_range() {
    let glyphs = make_ood_glyphs(50, 28, &mut rng_from(6));
    glyphs.validate().unwrap();
    assert!(glyphs.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
    for k in 0..glyphs.count {
        let lit = glyphs.image(k).iter().filter(|&&p| p > 0.5).count();
        assert!(
            lit > 20 && lit < 28 * 28 / 2,
            "glyph {k} lights {lit} pixels"
        );
    }
}
