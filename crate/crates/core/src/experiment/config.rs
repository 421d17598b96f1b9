//! Experiment configuration: JSON schema, validation, and hashing.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{FamilySpec, Graph, GraphJson, Vertex};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config does not match the schema at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("unknown experiment {0:?} (see `list-experiments`)")]
    UnknownExperiment(String),
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("experiment {experiment}: {message}")]
    Invalid { experiment: String, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Graph selector: a named family or an inline graph document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Family(FamilySpec),
    Inline(GraphJson),
}

/// Which process drives the experiment.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ProcessSpec {
    /// Reinforced walk with uniform initial weight `a` or per-edge weights.
    Lrrw {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_e: Option<Vec<f64>>,
    },
    /// Jump process with fixed or Gamma(a,1) i.i.d. initial rates.
    Vrjp { j: JSpec },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum JSpec {
    Fixed(f64),
    /// i.i.d. `Gamma(a, 1)` rates drawn per replica.
    GammaA(f64),
}

/// Free-form numeric knobs; each experiment validates and defaults the ones
/// it uses (documented in `list-experiments`).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ms: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub graph: GraphSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vertex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessSpec>,
    #[serde(default)]
    pub params: Params,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Replica parallelism; 0 means all available cores.
    #[serde(default)]
    pub parallelism: usize,
}

impl ExperimentConfig {
    /// Parses a config document, reporting the JSON path of schema errors.
    pub fn from_json_str(s: &str) -> Result<ExperimentConfig, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Builds the configured graph, applying the process's edge weights and
    /// the optional start-vertex override.
    pub fn build_graph(&self) -> Result<Graph, ConfigError> {
        let mut g = match &self.graph {
            GraphSpec::Family(spec) => {
                let w = match &self.process {
                    Some(ProcessSpec::Lrrw { a: Some(a), .. }) => *a,
                    Some(ProcessSpec::Vrjp { j: JSpec::Fixed(j) }) => *j,
                    _ => 1.0,
                };
                spec.build(w).map_err(|e| ConfigError::Graph(e.to_string()))?
            }
            GraphSpec::Inline(json) => {
                Graph::from_json(json).map_err(|e| ConfigError::Graph(e.to_string()))?
            }
        };
        if let Some(ProcessSpec::Lrrw { a_e: Some(ws), .. }) = &self.process {
            g.set_weights(ws).map_err(|e| ConfigError::Graph(e.to_string()))?;
        }
        if let Some(v0) = self.v0 {
            g = g.with_v0(v0).map_err(|e| ConfigError::Graph(e.to_string()))?;
        }
        Ok(g)
    }

    /// Human-readable graph tag for run records and CSV rows.
    pub fn graph_id(&self) -> String {
        match &self.graph {
            GraphSpec::Family(spec) => spec.to_string(),
            GraphSpec::Inline(_) => "inline".to_string(),
        }
    }

    /// The scalar process parameter (`a` or fixed/Gamma `J`), if any.
    pub fn process_scalar(&self) -> Option<f64> {
        match &self.process {
            Some(ProcessSpec::Lrrw { a, .. }) => *a,
            Some(ProcessSpec::Vrjp { j: JSpec::Fixed(j) }) => Some(*j),
            Some(ProcessSpec::Vrjp { j: JSpec::GammaA(a) }) => Some(*a),
            None => None,
        }
    }

    /// Stable hash of the canonical serialized config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        hex_digest(&h.finalize())
    }

    pub fn invalid(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { experiment: self.experiment.clone(), message: message.into() }
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_family_config() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{
                "experiment": "polya",
                "graph": {"path": {"n": 3}},
                "v0": 1,
                "process": {"lrrw": {"a": 2.0}},
                "params": {"horizon": 1000, "replicas": 10},
                "seed": 7
            }"#,
        )
        .unwrap();
        let g = cfg.build_graph().unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.v0(), 1);
        assert_eq!(g.weight(0), 2.0);
        assert_eq!(cfg.graph_id(), "path(3)");
        assert_eq!(cfg.process_scalar(), Some(2.0));
    }

    #[test]
    fn parses_inline_graph_and_vrjp() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{
                "experiment": "vrjp-timechange",
                "graph": {"vertices": 2, "edges": [[0, 1, 0.5]], "v0": 0},
                "process": {"vrjp": {"j": {"fixed": 0.5}}},
                "seed": 1
            }"#,
        )
        .unwrap();
        let g = cfg.build_graph().unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(cfg.graph_id(), "inline");
    }

    #[test]
    fn schema_errors_carry_paths() {
        let err = ExperimentConfig::from_json_str(
            r#"{"experiment": "polya", "graph": {"path": {"n": 3}}, "seed": 1,
                "params": {"nonsense": 4}}"#,
        )
        .unwrap_err();
        match err {
            ConfigError::Schema { path, .. } => assert!(path.contains("params")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_json_str(
            r#"{"experiment": "polya", "graph": {"path": {"n": 3}}, "seed": 1}"#,
        )
        .unwrap();
        let b = ExperimentConfig::from_json_str(
            r#"{"experiment": "polya", "graph": {"path": {"n": 3}}, "seed": 2}"#,
        )
        .unwrap();
        assert_eq!(a.hash(), a.hash());
        assert_ne!(a.hash(), b.hash());
    }
}
