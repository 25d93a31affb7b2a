//! Phantom and sinogram generation, IDX ingestion and synthetic OOD glyphs.

pub mod glyphs;
pub mod idx;
pub mod phantom;

use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::operators::{add_noise, LinearOperator, NoiseSpec, OperatorDescriptor};
use crate::seeding::{derive_seed, rng_from};

pub use glyphs::make_ood_glyphs;
pub use idx::{load_idx, IdxData};
pub use phantom::generate_shepp_logan;

/// Stack of equally sized greyscale images, image-major, each row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    pub height: usize,
    pub width: usize,
    pub count: usize,
    pub pixels: Vec<f64>,
}

impl ImageStack {
    pub fn new(height: usize, width: usize, count: usize, pixels: Vec<f64>) -> Result<Self> {
        let stack = Self {
            height,
            width,
            count,
            pixels,
        };
        stack.validate()?;
        Ok(stack)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return precondition("image stack is empty");
        }
        if self.pixels.len() != self.count * self.pixel_count() {
            return Err(Error::Dimension {
                context: "image stack",
                expected: (self.count * self.pixel_count()).to_string(),
                actual: self.pixels.len().to_string(),
            });
        }
        if let Some(p) = self.pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return precondition(format!("pixel value {p} outside [0, 1]"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn image(&self, k: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.pixels[k * n..(k + 1) * n]
    }

    pub fn select(&self, range: Range<usize>) -> Result<ImageStack> {
        if range.end > self.count || range.is_empty() {
            return precondition(format!(
                "range {range:?} outside stack of {} images",
                self.count
            ));
        }
        let n = self.pixel_count();
        Ok(ImageStack {
            height: self.height,
            width: self.width,
            count: range.len(),
            pixels: self.pixels[range.start * n..range.end * n].to_vec(),
        })
    }

    /// One image per column.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_column_slice(self.pixel_count(), self.count, &self.pixels)
    }

    /// Inverse of [`Self::to_matrix`]; values are not range-checked so that
    /// noisy observations can be carried in the same container.
    pub fn from_matrix(height: usize, width: usize, m: &Matrix) -> ImageStack {
        assert_eq!(m.nrows(), height * width);
        ImageStack {
            height,
            width,
            count: m.ncols(),
            pixels: m.as_slice().to_vec(),
        }
    }
}

/// Sample counts per partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleCounts {
    pub unpaired_b: usize,
    pub unpaired_x: usize,
    pub paired: usize,
    pub test: usize,
}

impl BundleCounts {
    pub const FULL: BundleCounts = BundleCounts {
        unpaired_b: 10_000,
        unpaired_x: 8_000,
        paired: 8_000,
        test: 2_000,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    UnpairedB,
    UnpairedX,
    Paired,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 4] = [
        Partition::UnpairedB,
        Partition::UnpairedX,
        Partition::Paired,
        Partition::Test,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Partition::UnpairedB => "unpaired_b",
            Partition::UnpairedX => "unpaired_x",
            Partition::Paired => "paired",
            Partition::Test => "test",
        }
    }
}

/// Generation record stored alongside a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleProvenance {
    pub image_size: usize,
    pub operator: OperatorDescriptor,
    pub noise: NoiseSpec,
    pub counts: BundleCounts,
    pub master_seed: u64,
    pub jitter: f64,
}

/// Four disjoint partitions of a simulated CT data set. Matrices hold one
/// sample per column.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub unpaired_b: Matrix,
    pub unpaired_x: Matrix,
    pub paired_x: Matrix,
    pub paired_b: Matrix,
    pub test_x: Matrix,
    pub test_b: Matrix,
    pub provenance: BundleProvenance,
}

impl DatasetBundle {
    /// Seeds of every generated sample, tagged by partition.
    pub fn sample_seeds(&self) -> Vec<(Partition, usize, u64)> {
        sample_seeds(self.provenance.master_seed, &self.provenance.counts)
    }
}

pub fn sample_seeds(master_seed: u64, counts: &BundleCounts) -> Vec<(Partition, usize, u64)> {
    Partition::ALL
        .iter()
        .flat_map(|&p| {
            let n = partition_count(counts, p);
            (0..n).map(move |i| (p, i, derive_seed(master_seed, p.tag(), i as u64)))
        })
        .collect()
}

fn partition_count(c: &BundleCounts, p: Partition) -> usize {
    match p {
        Partition::UnpairedB => c.unpaired_b,
        Partition::UnpairedX => c.unpaired_x,
        Partition::Paired => c.paired,
        Partition::Test => c.test,
    }
}

/// Phantom `i` of a partition, and (optionally) its noisy sinogram, from the
/// sample's own derived seed.
fn simulate(
    n: usize,
    op: &dyn LinearOperator,
    noise: &NoiseSpec,
    jitter: f64,
    seed: u64,
    with_sinogram: bool,
) -> (Vector, Option<Vector>) {
    let mut rng = rng_from(seed);
    let x = Vector::from_vec(generate_shepp_logan(n, &mut rng, jitter));
    let b = with_sinogram.then(|| add_noise(&op.apply(&x), noise, &mut rng));
    (x, b)
}

fn stack_columns(rows: usize, cols: Vec<Vector>) -> Matrix {
    let mut m = Matrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Builds the four partitions. Unpaired-b phantoms are discarded after
/// simulation and unpaired-x phantoms are never simulated; every sample
/// draws from `derive_seed(master_seed, partition, index)`.
pub fn build_ct_bundle(
    n: usize,
    op: &dyn LinearOperator,
    noise: &NoiseSpec,
    counts: BundleCounts,
    master_seed: u64,
    jitter: f64,
) -> Result<DatasetBundle> {
    noise.validate()?;
    if op.in_dim() != n * n {
        return Err(Error::Dimension {
            context: "ct bundle operator",
            expected: (n * n).to_string(),
            actual: op.in_dim().to_string(),
        });
    }
    if n < 16 {
        return precondition(format!("phantom size {n} must be at least 16"));
    }
    let q = op.out_dim();
    let gen = |p: Partition, with_x: bool, with_b: bool| -> (Matrix, Matrix) {
        let count = partition_count(&counts, p);
        let samples: Vec<(Vector, Option<Vector>)> = (0..count)
            .into_par_iter()
            .map(|i| {
                let seed = derive_seed(master_seed, p.tag(), i as u64);
                simulate(n, op, noise, jitter, seed, with_b)
            })
            .collect();
        let (xs, bs): (Vec<_>, Vec<_>) = samples.into_iter().unzip();
        let xm = if with_x {
            stack_columns(n * n, xs)
        } else {
            Matrix::zeros(n * n, 0)
        };
        let bm = stack_columns(q, bs.into_iter().flatten().collect());
        (xm, bm)
    };
    let (_, unpaired_b) = gen(Partition::UnpairedB, false, true);
    let (unpaired_x, _) = gen(Partition::UnpairedX, true, false);
    let (paired_x, paired_b) = gen(Partition::Paired, true, true);
    let (test_x, test_b) = gen(Partition::Test, true, true);
    Ok(DatasetBundle {
        unpaired_b,
        unpaired_x,
        paired_x,
        paired_b,
        test_x,
        test_b,
        provenance: BundleProvenance {
            image_size: n,
            operator: op.descriptor(),
            noise: *noise,
            counts,
            master_seed,
            jitter,
        },
    })
}

/// Dataset root: `$PAIR_DATA_DIR` if set, otherwise `data/` at the workspace
/// root.
pub fn data_dir() -> PathBuf {
    std::env::var_os("PAIR_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// Loads an IDX image file, mapping absence to an actionable error.
pub fn load_image_file(path: &Path) -> Result<ImageStack> {
    if !path.exists() {
        return Err(Error::MissingData(format!(
            "{} not found. Place the MNIST IDX files (train-images-idx3-ubyte, \
             t10k-images-idx3-ubyte, optionally .gz) under $PAIR_DATA_DIR/mnist, \
             or run scripts/mnist_from_npm.py to build the bundled 10k subset",
            path.display()
        )));
    }
    load_idx(path)?
        .into_images()
        .ok_or_else(|| Error::Config(format!("{} holds labels, not images", path.display())))
}

/// Loads a directory of external OOD images stored as IDX files (for
/// example a converted notMNIST subset), concatenated in file-name order.
pub fn load_ood_directory(dir: &Path) -> Result<ImageStack> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|f| f.to_str())
                .is_some_and(|f| f.contains("idx3"))
        })
        .collect();
    files.sort();
    let mut out: Option<ImageStack> = None;
    for f in files {
        let s = load_image_file(&f)?;
        out = Some(match out {
            None => s,
            Some(mut acc) => {
                if (acc.height, acc.width) != (s.height, s.width) {
                    return precondition("OOD images differ in size");
                }
                acc.count += s.count;
                acc.pixels.extend(s.pixels);
                acc
            }
        });
    }
    out.ok_or_else(|| Error::MissingData(format!("no IDX image files in {}", dir.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Radon;
    use std::collections::HashSet;

    #[test]
    fn stack_matrix_roundtrip() {
        let stack = ImageStack::new(2, 2, 3, (0..12).map(|v| v as f64 / 11.0).collect()).unwrap();
        let m = stack.to_matrix();
        assert_eq!(m.shape(), (4, 3));
        assert_eq!(m[(1, 2)], stack.image(2)[1]);
        assert_eq!(ImageStack::from_matrix(2, 2, &m), stack);
        assert!(ImageStack::new(2, 2, 1, vec![0.0, 1.5, 0.0, 0.0]).is_err());
        assert!(ImageStack::new(2, 2, 0, vec![]).is_err());
    }

    #[test]
    fn bundle_shapes_and_determinism() {
        let op = Radon::new(16, 6, 12).unwrap();
        let counts = BundleCounts {
            unpaired_b: 5,
            unpaired_x: 4,
            paired: 3,
            test: 2,
        };
        let noise = NoiseSpec::relative(0.05);
        let a = build_ct_bundle(16, &op, &noise, counts, 7, 0.1).unwrap();
        assert_eq!(a.unpaired_b.shape(), (72, 5));
        assert_eq!(a.unpaired_x.shape(), (256, 4));
        assert_eq!(a.paired_x.ncols(), a.paired_b.ncols());
        assert_eq!(a.test_x.ncols(), 2);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| build_ct_bundle(16, &op, &noise, counts, 7, 0.1).unwrap());
        for (p, q) in [
            (&a.unpaired_b, &b.unpaired_b),
            (&a.unpaired_x, &b.unpaired_x),
            (&a.paired_b, &b.paired_b),
            (&a.test_x, &b.test_x),
        ] {
            assert!(p
                .iter()
                .zip(q.iter())
                .all(|(u, v)| u.to_bits() == v.to_bits()));
        }
        // paired noise is exactly 5% of the clean sinogram
        let clean = op.apply(&a.paired_x.column(0).into_owned());
        let noisy = a.paired_b.column(0).into_owned();
        assert!(((&noisy - &clean).norm() / clean.norm() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn pairs_only_bundle() {
        let op = Radon::new(16, 4, 8).unwrap();
        let counts = BundleCounts {
            unpaired_b: 0,
            unpaired_x: 0,
            paired: 3,
            test: 0,
        };
        let bundle = build_ct_bundle(16, &op, &NoiseSpec::none(), counts, 1, 0.1).unwrap();
        assert_eq!(bundle.unpaired_b.ncols(), 0);
        assert_eq!(bundle.paired_b.ncols(), 3);
    }

    #[test]
    fn partition_seeds_are_unique() {
        let seeds = sample_seeds(2024, &BundleCounts::FULL);
        assert_eq!(seeds.len(), 28_000);
        let unique: HashSet<u64> = seeds.iter().map(|s| s.2).collect();
        assert_eq!(unique.len(), seeds.len());
    }
}
