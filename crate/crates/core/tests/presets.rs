use std::path::{Path, PathBuf};

use pair_core::experiments::ExperimentConfig;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn presets() -> Vec<PathBuf> {
    let mut out = Vec::new();
    for scale in ["desk", "full"] {
        for entry in std::fs::read_dir(configs_dir().join(scale)).unwrap() {
            out.push(entry.unwrap().path());
        }
    }
    out.sort();
    out
}

fn schema() -> jsonschema::Validator {
    let text = std::fs::read_to_string(configs_dir().join("schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

#[test]
fn presets_conform_to_the_schema() {
    let validator = schema();
    let files = presets();
    assert_eq!(files.len(), 10);
    for path in files {
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let errors: Vec<String> = validator
            .iter_errors(&value)
            .map(|e| e.to_string())
            .collect();
        assert!(errors.is_empty(), "{}: {errors:?}", path.display());
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn schema_and_parser_reject_the_same_mistakes() {
    let validator = schema();
    let good: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(configs_dir().join("desk/ood.json")).unwrap(),
    )
    .unwrap();
    let mistakes: [fn(&mut serde_json::Value); 5] = [
        |v| v["unknown"] = 1.into(),
        |v| v["training"]["batch_size"] = 0.into(),
        |v| v["noise"]["mode"] = "loud".into(),
        |v| {
            v.as_object_mut().unwrap().remove("ood");
        },
        |v| v["ood"]["threshold"] = 101.0.into(),
    ];
    for (k, mistake) in mistakes.iter().enumerate() {
        let mut bad = good.clone();
        mistake(&mut bad);
        assert!(!validator.is_valid(&bad), "schema accepted mistake {k}");
        assert!(
            ExperimentConfig::from_value(bad).is_err(),
            "parser accepted mistake {k}"
        );
    }
}

#[test]
fn serialized_configs_conform_to_the_schema() {
    let validator = schema();
    for path in presets() {
        let cfg = ExperimentConfig::load(&path).unwrap();
        let value = serde_json::to_value(&cfg).unwrap();
        assert!(validator.is_valid(&value), "{}", path.display());
    }
}
