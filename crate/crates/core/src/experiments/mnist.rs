use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{
    ExperimentConfig, ExperimentKind, MnistSettings, OodSettings, TrainingSettings,
};
use super::persist::{save_model, SavedModel};
use super::{fmt_f64, write_csv, write_run_record};
use crate::datasets::{data_dir, load_image_file, load_ood_directory, make_ood_glyphs, ImageStack};
use crate::error::{Error, Result};
use crate::linear_pair::{fit_empirical_latent_maps, LatentMap};
use crate::metrics::{
    auroc, fit_baseline, mean_relative_error, ood_score, pair_metrics_columns, relative_error,
    MetricKind, PairCodec, PairMetrics,
};
use crate::neural::{
    decode_batch, encode_batch, forward_layers, train_autoencoder, train_end_to_end, ConvNetSpec,
    LrPhase, Tensor, TrainConfig, TrainOutcome,
};
use crate::numerics::{Matrix, Vector};
use crate::operators::{add_noise, GaussianBlur, LinearOperator, NoiseSpec};
use crate::seeding::{derive_seed, derived_rng};

const SIDE: usize = 28;

pub fn blur_operator(m: &MnistSettings) -> Result<GaussianBlur> {
    GaussianBlur::new(SIDE, SIDE, m.blur_ksize, m.blur_sigma)
}

/// Clean images and their blurred, noisy observations, one per column.
#[derive(Debug, Clone)]
pub struct MnistData {
    pub train_x: Matrix,
    pub train_b: Matrix,
    pub test_x: Matrix,
    pub test_b: Matrix,
}

fn find_idx(dir: &Path, stem: &str) -> PathBuf {
    let plain = dir.join(stem);
    if plain.exists() {
        plain
    } else {
        dir.join(format!("{stem}.gz"))
    }
}

fn leading(stack: ImageStack, count: usize, what: &str) -> Result<Matrix> {
    if (stack.height, stack.width) != (SIDE, SIDE) {
        return Err(Error::Config(format!(
            "{what} images are {}x{}, expected 28x28",
            stack.height, stack.width
        )));
    }
    if stack.count < count {
        return Err(Error::MissingData(format!(
            "{what} file holds {} images, {count} requested",
            stack.count
        )));
    }
    Ok(stack.select(0..count)?.to_matrix())
}

/// Blurs each column and adds noise drawn from `derive_seed(seed, tag, j)`.
pub fn observe(
    op: &dyn LinearOperator,
    x: &Matrix,
    noise: &NoiseSpec,
    seed: u64,
    tag: &str,
) -> Matrix {
    let cols: Vec<Vector> = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let clean = op.apply(&x.column(j).into_owned());
            add_noise(&clean, noise, &mut derived_rng(seed, tag, j as u64))
        })
        .collect();
    Matrix::from_columns(&cols)
}

/// Leading `train`/`test` MNIST images and their observations.
pub fn load_mnist(m: &MnistSettings, noise: &NoiseSpec, seed: u64) -> Result<MnistData> {
    let dir = m
        .data_dir
        .clone()
        .unwrap_or_else(|| data_dir().join("mnist"));
    let train_x = leading(
        load_image_file(&find_idx(&dir, "train-images-idx3-ubyte"))?,
        m.train,
        "training",
    )?;
    let test_x = leading(
        load_image_file(&find_idx(&dir, "t10k-images-idx3-ubyte"))?,
        m.test,
        "test",
    )?;
    let op = blur_operator(m)?;
    Ok(MnistData {
        train_b: observe(&op, &train_x, noise, seed, "mnist_train_noise"),
        test_b: observe(&op, &test_x, noise, seed, "mnist_test_noise"),
        train_x,
        test_x,
    })
}

fn tensor(m: &Matrix) -> Result<Tensor> {
    Tensor::from_columns(m, 1, SIDE, SIDE)
}

/// Two convolutional autoencoders joined by linear latent maps.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralPair {
    pub spec: ConvNetSpec,
    pub params_x: Vec<f64>,
    pub params_b: Vec<f64>,
    pub maps: LatentMap,
}

impl PairCodec for NeuralPair {
    fn encode_x(&self, x: &Matrix) -> Result<Matrix> {
        encode_batch(&self.spec, &self.params_x, &tensor(x)?)
    }

    fn decode_x(&self, z: &Matrix) -> Result<Matrix> {
        Ok(decode_batch(&self.spec, &self.params_x, z)?.to_columns())
    }

    fn encode_b(&self, b: &Matrix) -> Result<Matrix> {
        encode_batch(&self.spec, &self.params_b, &tensor(b)?)
    }

    fn decode_b(&self, z: &Matrix) -> Result<Matrix> {
        Ok(decode_batch(&self.spec, &self.params_b, z)?.to_columns())
    }
}

impl NeuralPair {
    /// `d_x(M^+ e_b(b))` for every column.
    pub fn inverse_apply_all(&self, b: &Matrix) -> Result<Matrix> {
        let z = self.encode_b(b)?;
        self.decode_x(&(&self.maps.inverse * z))
    }

    /// `d_b(M e_x(x))` for every column.
    pub fn forward_apply_all(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.encode_x(x)?;
        self.decode_b(&(&self.maps.forward * z))
    }

    /// Latent maps fitted on the given pairs.
    pub fn fit_maps(&self, x: &Matrix, b: &Matrix) -> Result<LatentMap> {
        fit_empirical_latent_maps(&self.encode_x(x)?, &self.encode_b(b)?)
    }

    pub fn with_maps(&self, maps: LatentMap) -> Self {
        Self {
            maps,
            ..self.clone()
        }
    }
}

fn train_config(t: &TrainingSettings, seed: u64, tag: &str) -> TrainConfig {
    TrainConfig::scaled(t.epochs, t.batch_size, derive_seed(seed, tag, 0))
}

/// Refinement of `epochs` epochs: the first 60% at 1e-3, the rest at 1e-4.
fn refine_config(t: &TrainingSettings, seed: u64, index: u64) -> TrainConfig {
    let epochs = t.refine_epochs;
    let split = epochs * 3 / 5;
    let lr_schedule = [(0, split, 1e-3), (split, epochs, 1e-4)]
        .into_iter()
        .filter(|(s, e, _)| e > s)
        .map(|(start, end, lr)| LrPhase { start, end, lr })
        .collect();
    TrainConfig {
        epochs,
        lr_schedule,
        batch_size: t.batch_size,
        seed: derive_seed(seed, "e2e_refine", index),
        adam: Default::default(),
    }
}

/// Trains both autoencoders concurrently on all training images and fits
/// the latent maps on every training pair.
pub fn train_neural_pair(
    data: &MnistData,
    training: &TrainingSettings,
    seed: u64,
) -> Result<(NeuralPair, TrainOutcome, TrainOutcome)> {
    let spec = ConvNetSpec::mnist_autoencoder();
    let tx = tensor(&data.train_x)?;
    let tb = tensor(&data.train_b)?;
    let (ox, ob) = rayon::join(
        || train_autoencoder(&spec, &tx, &train_config(training, seed, "ae_x")),
        || train_autoencoder(&spec, &tb, &train_config(training, seed, "ae_b")),
    );
    let (ox, ob) = (ox?, ob?);
    let (zx, zb) = (
        encode_batch(&spec, &ox.params, &tx)?,
        encode_batch(&spec, &ob.params, &tb)?,
    );
    for (name, z) in [("x", &zx), ("b", &zb)] {
        let dead = (0..z.nrows())
            .filter(|&i| z.row(i).iter().all(|&v| v == 0.0))
            .count();
        if dead > 0 {
            log::warn!("{name} autoencoder: {dead} of {} latent coordinates are zero on every training image", z.nrows());
        }
    }
    let maps = fit_empirical_latent_maps(&zx, &zb)?;
    let pair = NeuralPair {
        spec,
        params_x: ox.params.clone(),
        params_b: ob.params.clone(),
        maps,
    };
    Ok((pair, ox, ob))
}

fn column_errors(pred: &Matrix, truth: &Matrix) -> Result<Vec<f64>> {
    (0..truth.ncols())
        .map(|j| relative_error(&pred.column(j).into_owned(), &truth.column(j).into_owned()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct MnistReport {
    pub pair: NeuralPair,
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub loss_x: Vec<f64>,
    pub loss_b: Vec<f64>,
}

fn expect_mnist(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    cfg.validate()?;
    if cfg.kind != kind {
        return Err(Error::Config(format!(
            "config kind {} cannot drive the {} command",
            cfg.kind.name(),
            kind.name()
        )));
    }
    Ok(())
}

/// Trains the PAIR network, evaluates `d_x(M^+ e_b(b))` on the test set and
/// writes `mnist_errors.csv`, `loss_curves.csv` and the model under `model/`.
pub fn run_mnist_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<MnistReport> {
    expect_mnist(cfg, ExperimentKind::Mnist)?;
    std::fs::create_dir_all(out)?;
    let m = cfg.mnist.as_ref().expect("validated");
    let t = cfg.training.as_ref().expect("validated");
    let data = load_mnist(m, &cfg.noise, cfg.seed)?;
    let (pair, ox, ob) = train_neural_pair(&data, t, cfg.seed)?;
    let pred = pair.inverse_apply_all(&data.test_b)?;
    let errors = column_errors(&pred, &data.test_x)?;
    let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
    log::info!("mnist: mean relative error {mean_error:.4}");

    let rows: Vec<Vec<String>> = errors
        .iter()
        .enumerate()
        .map(|(j, e)| vec![j.to_string(), fmt_f64(*e)])
        .collect();
    write_csv(
        &out.join("mnist_errors.csv"),
        &["sample_id", "rel_error"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = ox
        .loss_curve
        .iter()
        .zip(&ob.loss_curve)
        .enumerate()
        .map(|(e, (lx, lb))| vec![(e + 1).to_string(), fmt_f64(*lx), fmt_f64(*lb)])
        .collect();
    write_csv(
        &out.join("loss_curves.csv"),
        &["epoch", "loss_x", "loss_b"],
        &rows,
    )?;
    save_model(
        &SavedModel::Neural(pair.clone()),
        &out.join("model"),
        &serde_json::to_value(cfg)?,
    )?;
    write_run_record(
        out,
        "mnist",
        cfg,
        &["mnist_errors.csv", "loss_curves.csv", "model/"],
    )?;
    Ok(MnistReport {
        pair,
        errors,
        mean_error,
        loss_x: ox.loss_curve,
        loss_b: ob.loss_curve,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2eRow {
    pub j: usize,
    pub pair_error: f64,
    pub e2e_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2eReport {
    pub rows: Vec<E2eRow>,
    pub skipped: Vec<usize>,
}

/// PAIR (maps refitted on the first `J` pairs) against an end-to-end
/// network grown along the `J` grid: cold start at the first `J`, then a
/// warm-started refinement on all `J` pairs at every later grid point.
pub fn e2e_comparison(
    cfg: &ExperimentConfig,
    data: &MnistData,
    pair: &NeuralPair,
) -> Result<E2eReport> {
    let t = cfg.training.as_ref().expect("validated");
    let grid = &cfg.e2e.as_ref().expect("validated").j_grid;
    let spec = ConvNetSpec::mnist_autoencoder();
    let available = data.train_x.ncols();
    let test_b = tensor(&data.test_b)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut e2e_params: Option<Vec<f64>> = None;
    for (k, &j) in grid.iter().enumerate() {
        if j > available {
            log::warn!("J = {j} exceeds the {available} available pairs; row skipped");
            skipped.push(j);
            continue;
        }
        let xj = data.train_x.columns(0, j).into_owned();
        let bj = data.train_b.columns(0, j).into_owned();
        let pair_j = pair.with_maps(pair.fit_maps(&xj, &bj)?);
        let pair_error =
            mean_relative_error(&pair_j.inverse_apply_all(&data.test_b)?, &data.test_x)?;

        let cfg_j = match e2e_params {
            None => train_config(t, cfg.seed, "e2e"),
            Some(_) => refine_config(t, cfg.seed, k as u64),
        };
        let trained = train_end_to_end(
            &spec,
            &tensor(&bj)?,
            &tensor(&xj)?,
            &cfg_j,
            e2e_params.as_deref(),
        )?;
        let pred =
            forward_layers(&spec, &trained.params, &test_b, 0, spec.layers.len())?.to_columns();
        let e2e_error = mean_relative_error(&pred, &data.test_x)?;
        log::info!("J = {j}: pair {pair_error:.4}, end-to-end {e2e_error:.4}");
        e2e_params = Some(trained.params);
        rows.push(E2eRow {
            j,
            pair_error,
            e2e_error,
        });
    }
    Ok(E2eReport { rows, skipped })
}

/// Trains the PAIR network, runs [`e2e_comparison`] and writes
/// `e2e_comparison.csv`.
pub fn run_e2e_comparison(cfg: &ExperimentConfig, out: &Path) -> Result<E2eReport> {
    expect_mnist(cfg, ExperimentKind::E2e)?;
    std::fs::create_dir_all(out)?;
    let data = load_mnist(cfg.mnist.as_ref().expect("validated"), &cfg.noise, cfg.seed)?;
    let (pair, _, _) =
        train_neural_pair(&data, cfg.training.as_ref().expect("validated"), cfg.seed)?;
    let report = e2e_comparison(cfg, &data, &pair)?;
    write_e2e_csv(&report, out)?;
    write_run_record(out, "e2e", cfg, &["e2e_comparison.csv"])?;
    Ok(report)
}

pub fn write_e2e_csv(report: &E2eReport, out: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| vec![r.j.to_string(), fmt_f64(r.pair_error), fmt_f64(r.e2e_error)])
        .collect();
    write_csv(
        &out.join("e2e_comparison.csv"),
        &["j", "pair_error", "e2e_error"],
        &rows,
    )
}

#[derive(Debug, Clone)]
pub struct OodReport {
    pub in_metrics: Vec<PairMetrics>,
    pub out_metrics: Vec<PairMetrics>,
    /// Per metric, in `MetricKind::ALL` order: AUROC of out vs in, and of
    /// the two interleaved halves of the in-set.
    pub auroc: Vec<(MetricKind, f64, f64)>,
    pub in_flagged: f64,
    pub out_flagged: f64,
}

impl OodReport {
    pub fn auroc_of(&self, kind: MetricKind) -> (f64, f64) {
        let (_, a, n) = self
            .auroc
            .iter()
            .find(|(k, _, _)| *k == kind)
            .expect("all metrics");
        (*a, *n)
    }
}

fn ood_images(o: &OodSettings, seed: u64) -> Result<Matrix> {
    let stack = match &o.ood_dir {
        Some(dir) => {
            let s = load_ood_directory(dir)?;
            if s.count < o.out_count {
                return Err(Error::MissingData(format!(
                    "{} holds {} OOD images, {} requested",
                    dir.display(),
                    s.count,
                    o.out_count
                )));
            }
            s.select(0..o.out_count)?
        }
        None => make_ood_glyphs(o.out_count, SIDE, &mut derived_rng(seed, "ood_glyphs", 0)),
    };
    leading(stack, o.out_count, "OOD")
}

fn defined(ms: &[PairMetrics], kind: MetricKind) -> Vec<f64> {
    ms.iter().filter_map(|m| m.get(kind)).collect()
}

/// The five metrics on PAIR reconstructions of the first `in_count` test
/// observations and of `out_count` out-of-distribution observations.
pub fn ood_experiment(
    cfg: &ExperimentConfig,
    data: &MnistData,
    pair: &NeuralPair,
) -> Result<OodReport> {
    let m = cfg.mnist.as_ref().expect("validated");
    let o = cfg.ood.as_ref().expect("validated");
    let op = blur_operator(m)?;
    let metrics_for = |b: &Matrix| -> Result<Vec<PairMetrics>> {
        let x_pred = pair.inverse_apply_all(b)?;
        pair_metrics_columns(
            pair,
            &pair.maps.forward,
            &pair.maps.inverse,
            b,
            &x_pred,
            o.metric_form,
        )
    };
    let baseline = fit_baseline(&metrics_for(&data.train_b)?)?;
    let in_b = data.test_b.columns(0, o.in_count).into_owned();
    let out_x = ood_images(o, cfg.seed)?;
    let out_b = observe(&op, &out_x, &cfg.noise, cfg.seed, "ood_noise");
    let in_metrics = metrics_for(&in_b)?;
    let out_metrics = metrics_for(&out_b)?;

    let mut table = Vec::new();
    for kind in MetricKind::ALL {
        let ins = defined(&in_metrics, kind);
        let outs = defined(&out_metrics, kind);
        let evens: Vec<f64> = ins.iter().step_by(2).copied().collect();
        let odds: Vec<f64> = ins.iter().skip(1).step_by(2).copied().collect();
        let score = if ins.is_empty() || outs.is_empty() {
            f64::NAN
        } else {
            auroc(&ins, &outs)?
        };
        let null = if evens.is_empty() || odds.is_empty() {
            f64::NAN
        } else {
            auroc(&evens, &odds)?
        };
        table.push((kind, score, null));
    }
    let flagged = |ms: &[PairMetrics]| {
        ms.iter()
            .filter(|m| ood_score(&baseline, m, o.threshold).flagged)
            .count() as f64
            / ms.len() as f64
    };
    Ok(OodReport {
        in_flagged: flagged(&in_metrics),
        out_flagged: flagged(&out_metrics),
        in_metrics,
        out_metrics,
        auroc: table,
    })
}

pub fn write_ood_csv(report: &OodReport, out: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for (set, ms) in [("in", &report.in_metrics), ("out", &report.out_metrics)] {
        for (j, m) in ms.iter().enumerate() {
            for kind in MetricKind::ALL {
                let value = m.get(kind).map_or_else(|| "nan".to_string(), fmt_f64);
                rows.push(vec![
                    set.to_string(),
                    j.to_string(),
                    kind.name().to_string(),
                    value,
                ]);
            }
        }
    }
    write_csv(
        &out.join("ood_metrics.csv"),
        &["set", "sample_id", "metric", "value"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = report
        .auroc
        .iter()
        .map(|(k, a, n)| vec![k.name().to_string(), fmt_f64(*a), fmt_f64(*n)])
        .collect();
    write_csv(
        &out.join("ood_auroc.csv"),
        &["metric", "auroc", "null_auroc"],
        &rows,
    )?;
    let rows = vec![
        vec![
            "in".to_string(),
            report.in_metrics.len().to_string(),
            fmt_f64(report.in_flagged),
        ],
        vec![
            "out".to_string(),
            report.out_metrics.len().to_string(),
            fmt_f64(report.out_flagged),
        ],
    ];
    write_csv(
        &out.join("ood_summary.csv"),
        &["set", "count", "flagged_fraction"],
        &rows,
    )
}

/// Trains the PAIR network, runs [`ood_experiment`] and writes
/// `ood_metrics.csv`, `ood_auroc.csv` and `ood_summary.csv`.
pub fn run_ood_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<OodReport> {
    expect_mnist(cfg, ExperimentKind::Ood)?;
    std::fs::create_dir_all(out)?;
    let data = load_mnist(cfg.mnist.as_ref().expect("validated"), &cfg.noise, cfg.seed)?;
    let (pair, _, _) =
        train_neural_pair(&data, cfg.training.as_ref().expect("validated"), cfg.seed)?;
    let report = ood_experiment(cfg, &data, &pair)?;
    write_ood_csv(&report, out)?;
    write_run_record(
        out,
        "ood",
        cfg,
        &["ood_metrics.csv", "ood_auroc.csv", "ood_summary.csv"],
    )?;
    Ok(report)
}
