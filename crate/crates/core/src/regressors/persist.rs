//! Self-describing JSON model files:
//! `{format_version, kind, hyperparameters, parameters[, provenance]}`.
//!
//! Floats are written in shortest round-trip form and parsed back exactly, so a
//! reloaded model predicts bit-identically.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::gbt::{GbtModel, RegressionTree};
use super::linear::LinearModel;
use super::svr::{Kernel, SvrModel};
use super::{ModelKind, RegressionModel};
use crate::dataset::SplitStrategy;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Train/test split a model was fitted on, so evaluation can rebuild the same
/// held-out partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitProvenance {
    /// Hex SHA-256 of the dataset CSV bytes.
    pub dataset_hash: String,
    pub n_samples: usize,
    pub ratio: f64,
    pub seed: u64,
    pub strategy: SplitStrategy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredModel {
    pub model: RegressionModel,
    pub provenance: Option<SplitProvenance>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope<H, P> {
    format_version: u32,
    kind: ModelKind,
    hyperparameters: H,
    parameters: P,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<SplitProvenance>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoHyper {}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SvrHyper {
    kernel: Kernel,
    c: f64,
    epsilon: f64,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SvrState {
    support_x: Vec<f64>,
    dual_coefs: Vec<f64>,
    bias: f64,
    x_mean: f64,
    x_std: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GbtHyper {
    rounds: usize,
    learning_rate: f64,
    lambda: f64,
    max_depth: usize,
    min_child_count: usize,
    min_split_gain: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GbtState {
    base_score: f64,
    trees: Vec<RegressionTree>,
}

fn envelope<H: Serialize, P: Serialize>(
    kind: ModelKind,
    hyperparameters: H,
    parameters: P,
    provenance: Option<&SplitProvenance>,
) -> Result<String> {
    let env = Envelope {
        format_version: FORMAT_VERSION,
        kind,
        hyperparameters,
        parameters,
        provenance: provenance.cloned(),
    };
    let mut text = serde_json::to_string_pretty(&env)
        .map_err(|e| Error::ModelFormat(format!("cannot serialize model: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn to_json(model: &RegressionModel, provenance: Option<&SplitProvenance>) -> Result<String> {
    match model {
        RegressionModel::Linear(m) => envelope(ModelKind::Lr, NoHyper {}, m, provenance),
        RegressionModel::Svr(m) => envelope(
            ModelKind::Svr,
            SvrHyper {
                kernel: m.kernel,
                c: m.c,
                epsilon: m.epsilon,
                gamma: m.gamma,
            },
            SvrState {
                support_x: m.support_x.clone(),
                dual_coefs: m.dual_coefs.clone(),
                bias: m.bias,
                x_mean: m.x_mean,
                x_std: m.x_std,
            },
            provenance,
        ),
        RegressionModel::Gbt(m) => envelope(
            ModelKind::Gbt,
            GbtHyper {
                rounds: m.trees.len(),
                learning_rate: m.learning_rate,
                lambda: m.lambda,
                max_depth: m.max_depth,
                min_child_count: m.min_child_count,
                min_split_gain: m.min_split_gain,
            },
            GbtState {
                base_score: m.base_score,
                trees: m.trees.clone(),
            },
            provenance,
        ),
    }
}

fn part<T: DeserializeOwned>(value: Value, what: &str) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::ModelFormat(format!("{what}: {e}")))
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::ModelFormat(format!("{name} is not finite")))
    }
}

pub fn from_json(text: &str) -> Result<StoredModel> {
    let raw: Value =
        serde_json::from_str(text).map_err(|e| Error::ModelFormat(format!("invalid JSON: {e}")))?;
    let version = raw
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::ModelFormat("missing `format_version`".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::VersionMismatch {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let env: Envelope<Value, Value> = part(raw, "model file")?;
    let model = match env.kind {
        ModelKind::Lr => {
            let _: NoHyper = part(env.hyperparameters, "hyperparameters")?;
            let m: LinearModel = part(env.parameters, "parameters")?;
            finite("slope", m.slope)?;
            finite("intercept", m.intercept)?;
            RegressionModel::Linear(m)
        }
        ModelKind::Svr => {
            let h: SvrHyper = part(env.hyperparameters, "hyperparameters")?;
            let s: SvrState = part(env.parameters, "parameters")?;
            if s.support_x.len() != s.dual_coefs.len() {
                return Err(Error::ModelFormat(
                    "support_x and dual_coefs differ in length".into(),
                ));
            }
            if [s.x_std, h.gamma, h.c]
                .iter()
                .any(|v| v.is_nan() || *v <= 0.0)
            {
                return Err(Error::ModelFormat("x_std, gamma and c must be > 0".into()));
            }
            for v in s.support_x.iter().chain(&s.dual_coefs) {
                finite("support vector", *v)?;
            }
            finite("bias", s.bias)?;
            finite("x_mean", s.x_mean)?;
            RegressionModel::Svr(SvrModel {
                kernel: h.kernel,
                support_x: s.support_x,
                dual_coefs: s.dual_coefs,
                bias: s.bias,
                gamma: h.gamma,
                epsilon: h.epsilon,
                c: h.c,
                x_mean: s.x_mean,
                x_std: s.x_std,
            })
        }
        ModelKind::Gbt => {
            let h: GbtHyper = part(env.hyperparameters, "hyperparameters")?;
            let s: GbtState = part(env.parameters, "parameters")?;
            if h.rounds != s.trees.len() {
                return Err(Error::ModelFormat(format!(
                    "{} rounds declared but {} trees stored",
                    h.rounds,
                    s.trees.len()
                )));
            }
            for tree in &s.trees {
                tree.validate()?;
                if tree.depth() > h.max_depth {
                    return Err(Error::ModelFormat("tree deeper than max_depth".into()));
                }
            }
            finite("base_score", s.base_score)?;
            finite("learning_rate", h.learning_rate)?;
            RegressionModel::Gbt(GbtModel {
                base_score: s.base_score,
                trees: s.trees,
                learning_rate: h.learning_rate,
                lambda: h.lambda,
                max_depth: h.max_depth,
                min_child_count: h.min_child_count,
                min_split_gain: h.min_split_gain,
            })
        }
    };
    Ok(StoredModel {
        model,
        provenance: env.provenance,
    })
}

pub fn save_model(model: &RegressionModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(model, None)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RegressionModel> {
    Ok(load_stored(path)?.model)
}

pub fn save_stored(stored: &StoredModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(&stored.model, stored.provenance.as_ref())?)?;
    Ok(())
}

pub fn load_stored(path: impl AsRef<Path>) -> Result<StoredModel> {
    from_json(&fs::read_to_string(path)?)
}

/// Loads a model file and checks that it holds the expected kind.
pub fn load_model_as(path: impl AsRef<Path>, expected: ModelKind) -> Result<RegressionModel> {
    let model = load_model(path)?;
    if model.kind() != expected {
        return Err(Error::KindMismatch {
            expected: expected.to_string(),
            found: model.kind().to_string(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::gbt::Node;

    fn svr() -> RegressionModel {
        RegressionModel::Svr(SvrModel {
            kernel: Kernel::Rbf,
            support_x: vec![-1.2, 0.1, 1.0 / 3.0],
            dual_coefs: vec![0.5, -0.25, -0.25],
            bias: 27.743,
            gamma: 1.0,
            epsilon: 0.05,
            c: 10.0,
            x_mean: 8280.0,
            x_std: 4780.5,
        })
    }

    #[test]
    fn layout_is_self_describing() {
        let text = to_json(&svr(), None).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["kind"], "svr");
        assert_eq!(v["hyperparameters"]["c"], 10.0);
        assert_eq!(v["parameters"]["bias"], 27.743);
        assert!(v.get("provenance").is_none());
    }

    #[test]
    fn golden_linear_file() {
        let model = RegressionModel::Linear(LinearModel {
            slope: 0.000_512_5,
            intercept: 24.1,
        });
        let golden = "{\n  \"format_version\": 1,\n  \"kind\": \"lr\",\n  \"hyperparameters\": {},\n  \"parameters\": {\n    \"slope\": 0.0005125,\n    \"intercept\": 24.1\n  }\n}\n";
        assert_eq!(to_json(&model, None).unwrap(), golden);
        assert_eq!(from_json(golden).unwrap().model, model);
    }

    #[test]
    fn round_trip_with_provenance() {
        let gbt = RegressionModel::Gbt(GbtModel {
            base_score: 30.1,
            trees: vec![RegressionTree {
                nodes: vec![
                    Node::Split {
                        threshold: 1e3,
                        left: 1,
                        right: 2,
                    },
                    Node::Leaf { value: -0.1 },
                    Node::Leaf { value: 0.2 },
                ],
            }],
            learning_rate: 0.3,
            lambda: 1.0,
            max_depth: 6,
            min_child_count: 1,
            min_split_gain: 0.0,
        });
        let provenance = SplitProvenance {
            dataset_hash: "ab".repeat(32),
            n_samples: 7095,
            ratio: 0.75,
            seed: 42,
            strategy: SplitStrategy::Shuffled,
        };
        let text = to_json(&gbt, Some(&provenance)).unwrap();
        let back = from_json(&text).unwrap();
        assert_eq!(back.model, gbt);
        assert_eq!(back.provenance, Some(provenance));
    }

    #[test]
    fn structured_errors() {
        let text = to_json(&svr(), None).unwrap();
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(
            from_json(&bumped),
            Err(Error::VersionMismatch {
                found: 9,
                expected: 1
            })
        ));
        let truncated = &text[..text.len() / 2];
        assert!(matches!(from_json(truncated), Err(Error::ModelFormat(_))));
        let wrong_kind = text.replace("\"kind\": \"svr\"", "\"kind\": \"gbt\"");
        assert!(matches!(from_json(&wrong_kind), Err(Error::ModelFormat(_))));
        let unknown_kind = text.replace("\"kind\": \"svr\"", "\"kind\": \"knn\"");
        assert!(matches!(
            from_json(&unknown_kind),
            Err(Error::ModelFormat(_))
        ));
        let ragged = text.replace("-0.25,\n      -0.25", "-0.25");
        assert!(matches!(from_json(&ragged), Err(Error::ModelFormat(_))));
        let cyclic = r#"{"format_version":1,"kind":"gbt","hyperparameters":{"rounds":1,"learning_rate":0.3,"lambda":1.0,"max_depth":6,"min_child_count":1,"min_split_gain":0.0},"parameters":{"base_score":1.0,"trees":[{"nodes":[{"type":"split","threshold":1.0,"left":0,"right":0}]}]}}"#;
        assert!(matches!(from_json(cyclic), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn kind_check_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&svr(), &path).unwrap();
        assert!(load_model_as(&path, ModelKind::Svr).is_ok());
        assert!(matches!(
            load_model_as(&path, ModelKind::Gbt),
            Err(Error::KindMismatch { .. })
        ));
    }
}
