use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::BundleCounts;
use crate::error::{Error, Result};
use crate::metrics::{AutoencoderMetricForm, DEFAULT_OOD_PERCENTILE};
use crate::operators::NoiseSpec;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GenCt,
    CtRankSweep,
    Mnist,
    E2e,
    Ood,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GenCt => "gen_ct",
            ExperimentKind::CtRankSweep => "ct_rank_sweep",
            ExperimentKind::Mnist => "mnist",
            ExperimentKind::E2e => "e2e",
            ExperimentKind::Ood => "ood",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtGeometry {
    pub image_size: usize,
    pub n_angles: usize,
    pub n_detectors: usize,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    crate::datasets::phantom::DEFAULT_JITTER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistSettings {
    /// Leading images taken from the training file.
    pub train: usize,
    /// Leading images taken from the test file.
    pub test: usize,
    #[serde(default = "default_ksize")]
    pub blur_ksize: usize,
    #[serde(default = "default_sigma")]
    pub blur_sigma: f64,
    /// Directory holding the IDX files; defaults to `<data dir>/mnist`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
}

fn default_ksize() -> usize {
    8
}

fn default_sigma() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs of each warm-started refinement (first 60% at 1e-3, rest 1e-4).
    #[serde(default = "default_refine")]
    pub refine_epochs: usize,
}

fn default_refine() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E2eSettings {
    /// Increasing numbers of supervised pairs.
    pub j_grid: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodSettings {
    pub in_count: usize,
    pub out_count: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub metric_form: AutoencoderMetricForm,
    /// Directory of IDX images replacing the synthetic glyphs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood_dir: Option<PathBuf>,
}

fn default_threshold() -> f64 {
    DEFAULT_OOD_PERCENTILE
}

/// One experiment, fully resolved. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ct: Option<CtGeometry>,
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<BundleCounts>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ranks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist: Option<MnistSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2e: Option<E2eSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood: Option<OodSettings>,
}

fn need<'a, T>(field: &'a Option<T>, name: &str, kind: ExperimentKind) -> Result<&'a T> {
    field.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "{} experiments need a `{name}` section",
            kind.name()
        ))
    })
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        Self::from_value(value)
    }

    /// Accepts a config or a `run.json` record (which embeds one).
    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let value = match value {
            serde_json::Value::Object(mut map)
                if map.contains_key("config") && map.contains_key("command") =>
            {
                map.remove("config").expect("checked")
            }
            other => other,
        };
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Config("config lacks an integer `schema_version`".into()))?;
        if found != CONFIG_SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion {
                found: found as u32,
                supported: CONFIG_SCHEMA_VERSION,
            });
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        match self.kind {
            ExperimentKind::GenCt | ExperimentKind::CtRankSweep => {
                let ct = need(&self.ct, "ct", self.kind)?;
                let counts = need(&self.counts, "counts", self.kind)?;
                if ct.image_size < 16 || ct.n_angles == 0 || ct.n_detectors == 0 {
                    return bad(
                        "ct geometry needs image_size >= 16 and positive angles/detectors".into(),
                    );
                }
                if !(0.0..=1.0).contains(&ct.jitter) {
                    return bad(format!("jitter {} outside [0, 1]", ct.jitter));
                }
                if counts.test == 0
                    || counts.paired == 0
                    || counts.unpaired_b == 0
                    || counts.unpaired_x == 0
                {
                    return bad("every partition count must be positive".into());
                }
                if self.kind == ExperimentKind::CtRankSweep
                    && (self.ranks.is_empty() || self.ranks.contains(&0))
                {
                    return bad("rank sweep needs a nonempty list of positive ranks".into());
                }
            }
            ExperimentKind::Mnist | ExperimentKind::E2e | ExperimentKind::Ood => {
                let m = need(&self.mnist, "mnist", self.kind)?;
                let t = need(&self.training, "training", self.kind)?;
                if m.train == 0 || m.test == 0 {
                    return bad("mnist train and test counts must be positive".into());
                }
                if m.blur_ksize == 0 || m.blur_ksize > 28 || !(m.blur_sigma > 0.0) {
                    return bad("blur kernel must be 1..=28 wide with positive sigma".into());
                }
                if t.batch_size == 0 {
                    return bad("batch_size must be positive".into());
                }
                if self.kind == ExperimentKind::E2e {
                    let e = need(&self.e2e, "e2e", self.kind)?;
                    if e.j_grid.is_empty()
                        || e.j_grid.contains(&0)
                        || e.j_grid.windows(2).any(|w| w[0] >= w[1])
                    {
                        return bad("j_grid must be strictly increasing positive counts".into());
                    }
                }
                if self.kind == ExperimentKind::Ood {
                    let o = need(&self.ood, "ood", self.kind)?;
                    if o.in_count == 0 || o.out_count == 0 || o.in_count > m.test {
                        return bad("ood counts must be positive and in_count <= mnist.test".into());
                    }
                    if !(0.0..=100.0).contains(&o.threshold) {
                        return bad(format!("threshold {} outside [0, 100]", o.threshold));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = r#"{
        "schema_version": 1,
        "kind": "ct_rank_sweep",
        "seed": 3,
        "ct": { "image_size": 16, "n_angles": 6, "n_detectors": 23 },
        "noise": { "mode": "relative_norm", "level": 0.05 },
        "counts": { "unpaired_b": 40, "unpaired_x": 30, "paired": 30, "test": 10 },
        "ranks": [5, 10]
    }"#;

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> Result<ExperimentConfig> {
        let mut v: serde_json::Value = serde_json::from_str(SWEEP).unwrap();
        f(&mut v);
        ExperimentConfig::from_value(v)
    }

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = ExperimentConfig::from_json(SWEEP).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::CtRankSweep);
        assert_eq!(
            cfg.ct.unwrap().jitter,
            crate::datasets::phantom::DEFAULT_JITTER
        );
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            edit(|v| v["colour"] = 1.into()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            edit(|v| v["ct"]["pixels"] = 1.into()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn schema_version_is_checked() {
        assert!(matches!(
            edit(|v| v["schema_version"] = 7.into()),
            Err(Error::SchemaVersion {
                found: 7,
                supported: 1
            })
        ));
        assert!(matches!(
            edit(|v| {
                v.as_object_mut().unwrap().remove("schema_version");
            }),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn semantic_checks() {
        assert!(edit(|v| v["ranks"] = serde_json::json!([0, 5])).is_err());
        assert!(edit(|v| v["ranks"] = serde_json::json!([])).is_err());
        assert!(edit(|v| v["counts"]["test"] = 0.into()).is_err());
        assert!(edit(|v| v["ct"]["jitter"] = 2.0.into()).is_err());
        assert!(edit(|v| v["noise"]["level"] = (-1.0).into()).is_err());
        assert!(edit(|v| {
            v.as_object_mut().unwrap().remove("ct");
        })
        .is_err());
    }

    #[test]
    fn mnist_kinds_need_their_sections() {
        let base = serde_json::json!({
            "schema_version": 1,
            "kind": "e2e",
            "seed": 1,
            "noise": { "mode": "fixed_variance", "level": 0.01 },
            "mnist": { "train": 10, "test": 5 },
            "training": { "epochs": 2, "batch_size": 4 },
        });
        assert!(ExperimentConfig::from_value(base.clone()).is_err());
        let mut ok = base.clone();
        ok["e2e"] = serde_json::json!({ "j_grid": [2, 5] });
        let cfg = ExperimentConfig::from_value(ok.clone()).unwrap();
        assert_eq!(cfg.training.unwrap().refine_epochs, 25);
        ok["e2e"] = serde_json::json!({ "j_grid": [5, 5] });
        assert!(ExperimentConfig::from_value(ok).is_err());
    }

    #[test]
    fn run_record_is_accepted() {
        let cfg = ExperimentConfig::from_json(SWEEP).unwrap();
        let record = serde_json::json!({
            "command": "rank-sweep",
            "library_version": "0.1.0",
            "csv_schema_version": 1,
            "config": serde_json::to_value(&cfg).unwrap(),
            "outputs": ["rank_sweep.csv"],
        });
        assert_eq!(ExperimentConfig::from_value(record).unwrap(), cfg);
    }
}
