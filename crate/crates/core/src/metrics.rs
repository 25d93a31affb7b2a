//! Relative errors, the five PAIR consistency metrics, training baselines
//! and out-of-distribution scoring.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::linear_pair::PairModel;
use crate::numerics::{Matrix, Vector};

/// `||x_pred - x_true|| / ||x_true||`.
pub fn relative_error(x_pred: &Vector, x_true: &Vector) -> Result<f64> {
    if x_pred.len() != x_true.len() {
        return Err(Error::Dimension {
            context: "relative error",
            expected: x_true.len().to_string(),
            actual: x_pred.len().to_string(),
        });
    }
    let denom = x_true.norm();
    if denom == 0.0 {
        return Err(Error::Undefined("relative error against a zero reference"));
    }
    Ok((x_pred - x_true).norm() / denom)
}

/// Mean of the column-wise relative errors.
pub fn mean_relative_error(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::Dimension {
            context: "mean relative error",
            expected: format!("{:?}", truth.shape()),
            actual: format!("{:?}", pred.shape()),
        });
    }
    if truth.ncols() == 0 {
        return precondition("no samples to average");
    }
    let mut total = 0.0;
    for j in 0..truth.ncols() {
        total += relative_error(&pred.column(j).into_owned(), &truth.column(j).into_owned())?;
    }
    Ok(total / truth.ncols() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    AeBRel,
    AeXRel,
    ResidualRel,
    LatentXRel,
    LatentBRel,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::AeBRel,
        MetricKind::AeXRel,
        MetricKind::ResidualRel,
        MetricKind::LatentXRel,
        MetricKind::LatentBRel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::AeBRel => "ae_b_rel",
            MetricKind::AeXRel => "ae_x_rel",
            MetricKind::ResidualRel => "residual_rel",
            MetricKind::LatentXRel => "latent_x_rel",
            MetricKind::LatentBRel => "latent_b_rel",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn is_latent(self) -> bool {
        matches!(self, MetricKind::LatentXRel | MetricKind::LatentBRel)
    }
}

/// How the two autoencoder metrics are formed. `Difference` measures
/// reconstruction error; `NoSubtraction` reports `||d(e(v))|| / ||v||`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoencoderMetricForm {
    #[default]
    Difference,
    NoSubtraction,
}

/// The five metrics; `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub ae_b_rel: Option<f64>,
    pub ae_x_rel: Option<f64>,
    pub residual_rel: Option<f64>,
    pub latent_x_rel: Option<f64>,
    pub latent_b_rel: Option<f64>,
}

impl PairMetrics {
    pub fn get(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::AeBRel => self.ae_b_rel,
            MetricKind::AeXRel => self.ae_x_rel,
            MetricKind::ResidualRel => self.residual_rel,
            MetricKind::LatentXRel => self.latent_x_rel,
            MetricKind::LatentBRel => self.latent_b_rel,
        }
    }
}

fn ratio(num: f64, denom: f64) -> Option<f64> {
    (denom > 0.0).then(|| num / denom)
}

/// Batched encoders and decoders (one sample per column) for both spaces.
pub trait PairCodec {
    fn encode_x(&self, x: &Matrix) -> Result<Matrix>;
    fn decode_x(&self, z: &Matrix) -> Result<Matrix>;
    fn encode_b(&self, b: &Matrix) -> Result<Matrix>;
    fn decode_b(&self, z: &Matrix) -> Result<Matrix>;
}

impl PairCodec for PairModel {
    fn encode_x(&self, x: &Matrix) -> Result<Matrix> {
        self.ae_x.encode_all(x)
    }

    fn decode_x(&self, z: &Matrix) -> Result<Matrix> {
        Ok(&self.ae_x.decoder * z)
    }

    fn encode_b(&self, b: &Matrix) -> Result<Matrix> {
        self.ae_b.encode_all(b)
    }

    fn decode_b(&self, z: &Matrix) -> Result<Matrix> {
        Ok(&self.ae_b.decoder * z)
    }
}

struct Parts<'a> {
    b: &'a Matrix,
    x: &'a Matrix,
    b_rec: Matrix,
    x_rec: Matrix,
    b_pred: Matrix,
    z_b: Matrix,
    z_x: Matrix,
    m_zx: Matrix,
    mdag_zb: Matrix,
}

fn assemble(p: &Parts, form: AutoencoderMetricForm) -> Vec<PairMetrics> {
    (0..p.b.ncols())
        .map(|j| {
            let b = p.b.column(j);
            let x = p.x.column(j);
            let (ae_b_num, ae_x_num) = match form {
                AutoencoderMetricForm::Difference => (
                    (p.b_rec.column(j) - b).norm(),
                    (p.x_rec.column(j) - x).norm(),
                ),
                AutoencoderMetricForm::NoSubtraction => {
                    (p.b_rec.column(j).norm(), p.x_rec.column(j).norm())
                }
            };
            PairMetrics {
                ae_b_rel: ratio(ae_b_num, b.norm()),
                ae_x_rel: ratio(ae_x_num, x.norm()),
                residual_rel: ratio((p.b_pred.column(j) - b).norm(), b.norm()),
                latent_x_rel: ratio(
                    (p.mdag_zb.column(j) - p.z_x.column(j)).norm(),
                    p.z_x.column(j).norm(),
                ),
                latent_b_rel: ratio(
                    (p.m_zx.column(j) - p.z_b.column(j)).norm(),
                    p.z_b.column(j).norm(),
                ),
            }
        })
        .collect()
}

/// Metrics for every column pair `(b_j, x_pred_j)`.
pub fn pair_metrics_columns(
    codec: &dyn PairCodec,
    m: &Matrix,
    m_dag: &Matrix,
    b: &Matrix,
    x_pred: &Matrix,
    form: AutoencoderMetricForm,
) -> Result<Vec<PairMetrics>> {
    if b.ncols() != x_pred.ncols() {
        return Err(Error::Dimension {
            context: "metric pairs",
            expected: format!("{} columns", b.ncols()),
            actual: format!("{} columns", x_pred.ncols()),
        });
    }
    let z_b = codec.encode_b(b)?;
    let z_x = codec.encode_x(x_pred)?;
    if m.shape() != (z_b.nrows(), z_x.nrows()) || m_dag.shape() != (z_x.nrows(), z_b.nrows()) {
        return Err(Error::Dimension {
            context: "latent maps for metrics",
            expected: format!("M {}x{}", z_b.nrows(), z_x.nrows()),
            actual: format!("M {:?}, M^+ {:?}", m.shape(), m_dag.shape()),
        });
    }
    let m_zx = m * &z_x;
    let parts = Parts {
        b,
        x: x_pred,
        b_rec: codec.decode_b(&z_b)?,
        x_rec: codec.decode_x(&z_x)?,
        b_pred: codec.decode_b(&m_zx)?,
        mdag_zb: m_dag * &z_b,
        z_b,
        z_x,
        m_zx,
    };
    Ok(assemble(&parts, form))
}

/// The five metrics for one `(b, x_pred)` pair from per-vector callables.
#[allow(clippy::too_many_arguments)]
pub fn pair_metrics<EB, DB, EX, DX>(
    encode_b: EB,
    decode_b: DB,
    encode_x: EX,
    decode_x: DX,
    m: &Matrix,
    m_dag: &Matrix,
    b: &Vector,
    x_pred: &Vector,
) -> Result<PairMetrics>
where
    EB: Fn(&Vector) -> Result<Vector>,
    DB: Fn(&Vector) -> Result<Vector>,
    EX: Fn(&Vector) -> Result<Vector>,
    DX: Fn(&Vector) -> Result<Vector>,
{
    let z_b = encode_b(b)?;
    let z_x = encode_x(x_pred)?;
    if m.ncols() != z_x.len() || m_dag.ncols() != z_b.len() {
        return Err(Error::Dimension {
            context: "latent maps for metrics",
            expected: format!("M with {} columns, M^+ with {}", z_x.len(), z_b.len()),
            actual: format!("M {:?}, M^+ {:?}", m.shape(), m_dag.shape()),
        });
    }
    let m_zx = m * &z_x;
    let col = |v: Vector| Matrix::from_column_slice(v.len(), 1, v.as_slice());
    let bm = col(b.clone());
    let xm = col(x_pred.clone());
    let parts = Parts {
        b: &bm,
        x: &xm,
        b_rec: col(decode_b(&z_b)?),
        x_rec: col(decode_x(&z_x)?),
        b_pred: col(decode_b(&m_zx)?),
        mdag_zb: col(m_dag * &z_b),
        z_b: col(z_b),
        z_x: col(z_x),
        m_zx: col(m_zx),
    };
    Ok(assemble(&parts, AutoencoderMetricForm::Difference)[0])
}

/// Linear-model metrics evaluated through the dense projectors `D E` and the
/// materialized forward surrogate.
pub fn linear_pair_metrics_materialized(
    model: &PairModel,
    p_forward: &Matrix,
    b: &Vector,
    x_pred: &Vector,
) -> Result<PairMetrics> {
    let z_b = model.ae_b.encode(b)?;
    let z_x = model.ae_x.encode(x_pred)?;
    let pb = model.ae_b.projector();
    let px = model.ae_x.projector();
    Ok(PairMetrics {
        ae_b_rel: ratio((&pb * b - b).norm(), b.norm()),
        ae_x_rel: ratio((&px * x_pred - x_pred).norm(), x_pred.norm()),
        residual_rel: ratio((p_forward * x_pred - b).norm(), b.norm()),
        latent_x_rel: ratio((&model.maps.inverse * &z_b - &z_x).norm(), z_x.norm()),
        latent_b_rel: ratio((&model.maps.forward * &z_x - &z_b).norm(), z_b.norm()),
    })
}

/// Minimum number of training samples behind a baseline.
pub const MIN_BASELINE_SAMPLES: usize = 30;
/// Default OOD threshold, as a percentile of the latent-metric baselines.
pub const DEFAULT_OOD_PERCENTILE: f64 = 99.0;

/// Sorted training-set values of each metric.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineDistribution {
    sorted: Vec<(MetricKind, Vec<f64>)>,
}

/// Builds the baseline from training-set metrics; undefined entries are
/// left out of their metric's sample.
pub fn fit_baseline(metrics: &[PairMetrics]) -> Result<BaselineDistribution> {
    let mut sorted = Vec::new();
    for kind in MetricKind::ALL {
        let mut v: Vec<f64> = metrics.iter().filter_map(|m| m.get(kind)).collect();
        if v.len() < MIN_BASELINE_SAMPLES {
            return precondition(format!(
                "baseline for {} needs at least {MIN_BASELINE_SAMPLES} defined samples, got {}",
                kind.name(),
                v.len()
            ));
        }
        v.sort_by(f64::total_cmp);
        sorted.push((kind, v));
    }
    Ok(BaselineDistribution { sorted })
}

impl BaselineDistribution {
    pub fn samples(&self, kind: MetricKind) -> &[f64] {
        &self
            .sorted
            .iter()
            .find(|(k, _)| *k == kind)
            .expect("every metric is present")
            .1
    }

    /// Value at percentile `p` in `[0, 100]`, linear between order
    /// statistics at positions `p/100 * (n - 1)`.
    pub fn percentile(&self, kind: MetricKind, p: f64) -> f64 {
        let s = self.samples(kind);
        let pos = (p.clamp(0.0, 100.0) / 100.0) * (s.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
    }

    /// Inverse of [`Self::percentile`]; values repeated in the sample map to
    /// the middle of their run.
    pub fn percentile_of(&self, kind: MetricKind, value: f64) -> f64 {
        let s = self.samples(kind);
        let n = s.len();
        let below = s.partition_point(|&v| v < value);
        let at_or_below = s.partition_point(|&v| v <= value);
        if at_or_below == 0 {
            return 0.0;
        }
        if below == n {
            return 100.0;
        }
        let pos = if at_or_below > below {
            0.5 * (below + at_or_below - 1) as f64
        } else {
            let (i, j) = (below - 1, below);
            i as f64 + (value - s[i]) / (s[j] - s[i])
        };
        100.0 * pos / (n - 1) as f64
    }

    /// CSV with one row per metric: name followed by the sorted values.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (kind, v) in &self.sorted {
            out.push_str(kind.name());
            for x in v {
                write!(out, ",{x:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let mut fields = line.split(',');
            let name = fields.next().unwrap_or_default();
            let kind = MetricKind::from_name(name)
                .ok_or_else(|| Error::Config(format!("unknown metric {name:?} in baseline")))?;
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Config(format!("bad baseline value for {name}: {e}")))?;
            if values.windows(2).any(|w| w[0] > w[1]) || values.len() < MIN_BASELINE_SAMPLES {
                return Err(Error::Config(format!(
                    "baseline row {name} is unsorted or short"
                )));
            }
            rows.push((kind, values));
        }
        rows.sort_by_key(|(k, _)| *k);
        if rows.iter().map(|(k, _)| *k).ne(MetricKind::ALL) {
            return Err(Error::Config("baseline must list each metric once".into()));
        }
        Ok(Self { sorted: rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodScore {
    /// Percentile of each metric in [`MetricKind::ALL`] order.
    pub percentiles: [Option<f64>; 5],
    pub flagged: bool,
}

/// Percentiles of `m` within the baseline; flags when a latent metric lies
/// above the `threshold` percentile.
pub fn ood_score(baseline: &BaselineDistribution, m: &PairMetrics, threshold: f64) -> OodScore {
    let mut percentiles = [None; 5];
    let mut flagged = false;
    for (slot, kind) in percentiles.iter_mut().zip(MetricKind::ALL) {
        *slot = m.get(kind).map(|v| baseline.percentile_of(kind, v));
        if kind.is_latent() && slot.is_some_and(|p| p > threshold) {
            flagged = true;
        }
    }
    OodScore {
        percentiles,
        flagged,
    }
}

/// Area under the ROC curve for separating `out_scores` (positives, higher)
/// from `in_scores`, via the Mann-Whitney statistic with midranks.
pub fn auroc(in_scores: &[f64], out_scores: &[f64]) -> Result<f64> {
    if in_scores.is_empty() || out_scores.is_empty() {
        return precondition("auroc needs nonempty score sets");
    }
    if in_scores.iter().chain(out_scores).any(|v| !v.is_finite()) {
        return precondition("auroc scores must be finite");
    }
    let mut all: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|&v| (v, false))
        .chain(out_scores.iter().map(|&v| (v, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_out = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks are 1-based; the tie group i..=j shares the average
        let midrank = 0.5 * ((i + 1) + (j + 1)) as f64;
        rank_sum_out += midrank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (n_in, n_out) = (in_scores.len() as f64, out_scores.len() as f64);
    let u = rank_sum_out - n_out * (n_out + 1.0) / 2.0;
    Ok(u / (n_in * n_out))
}
