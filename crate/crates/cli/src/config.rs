//! Experiment configuration files.
//!
//! One TOML document with five tables. Matrices are row-major arrays:
//!
//! ```toml
//! [model]
//! n = 2
//! m = 1
//! A = [-0.5, 0.1, 0.0, -20.0]
//! B = [0.0, 1.0]
//! C = [0.0, 0.0, 0.0, 6.5]
//!
//! [graph]
//! N = 2
//! adjacency = [0, 1, 1, 0]
//! undirected = true
//!
//! [protocol]
//! variant = "UndirectedStatic"
//! k1 = 1.0
//! k2 = 1.0
//! mu = 2.0
//! gamma = 0.0
//! c0 = 1.0            # or one value per agent
//!
//! [simulation]
//! h = 1e-3
//! T = 10.0
//! output_stride = 10
//! master_seed = 1
//! M = 100
//! x0 = "uniform(-2,2)" # or an explicit N*n array
//!
//! [output]
//! directory = "out"
//! ```

use std::path::Path;

use consensus_core::graph::WeightedDigraph;
use consensus_core::protocol::{ProtocolSpec, ProtocolVariant};
use consensus_core::riccati::SystemModel;
use consensus_core::sim::{sample_initial_state, DEFAULT_BLOWUP_THRESHOLD};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("key `{path}`: {message}")]
    BadValue { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub const EMIT_KINDS: [&str; 7] = ["trajectories", "ms_curves", "rate_fit", "gains", "inputs", "lyapunov", "validation"];

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub n: usize,
    pub m: usize,
    pub A: Vec<f64>,
    pub B: Vec<f64>,
    pub C: Vec<f64>,
    /// A published or hand-derived `P`, reported with its residual.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_P: Option<Vec<f64>>,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphBlock {
    pub N: usize,
    pub adjacency: Vec<f64>,
    pub undirected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrArray {
    Scalar(f64),
    Array(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolBlock {
    pub variant: String,
    pub k1: f64,
    pub k2: f64,
    pub mu: f64,
    pub gamma: f64,
    pub c0: ScalarOrArray,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Explicit(Vec<f64>),
    /// `"uniform(lo,hi)"`, drawn from the master seed.
    Sampler(String),
}

fn default_blowup() -> f64 {
    DEFAULT_BLOWUP_THRESHOLD
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    pub h: f64,
    pub T: f64,
    pub output_stride: usize,
    pub master_seed: u64,
    pub M: usize,
    pub x0: InitialState,
    #[serde(default = "default_blowup")]
    pub blowup_threshold: f64,
    #[serde(default)]
    pub open_loop: bool,
}

fn default_trajectories() -> usize {
    1
}

fn default_emit() -> Vec<String> {
    EMIT_KINDS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Number of paths, from index 0, written as trajectory CSVs.
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_emit")]
    pub emit: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: None, trajectories: default_trajectories(), emit: default_emit() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub graph: GraphBlock,
    pub protocol: ProtocolBlock,
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Parses a config document, naming the offending key on failure.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().message().to_string();
        if let Some(field) = message.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            let full = if path == "." || path.is_empty() { field.to_string() } else { format!("{path}.{field}") };
            ConfigError::MissingKey(full)
        } else {
            ConfigError::BadValue { path, message: e.inner().to_string().trim_end().to_string() }
        }
    })?;
    cfg.check()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
    parse_config(&text)
}

/// Parses `"uniform(lo,hi)"`.
pub fn parse_sampler(spec: &str) -> Result<(f64, f64), ConfigError> {
    let bad = || ConfigError::BadValue {
        path: "simulation.x0".into(),
        message: format!("expected an array or \"uniform(lo,hi)\", got \"{spec}\""),
    };
    let inner = spec.trim().strip_prefix("uniform(").and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
    let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn expect_len(path: &str, got: usize, want: usize) -> Result<(), ConfigError> {
    if got != want {
        return Err(ConfigError::BadValue { path: path.into(), message: format!("has {got} entries, expected {want}") });
    }
    Ok(())
}

impl ExperimentConfig {
    /// Cross-checks every dimension and name before anything is computed.
    pub fn check(&self) -> Result<(), ConfigError> {
        let (n, m, agents) = (self.model.n, self.model.m, self.graph.N);
        if n == 0 || m == 0 {
            return Err(ConfigError::Invalid("model.n and model.m must be positive".into()));
        }
        if agents < 2 {
            return Err(ConfigError::Invalid("graph.N must be at least 2".into()));
        }
        expect_len("model.A", self.model.A.len(), n * n)?;
        expect_len("model.B", self.model.B.len(), n * m)?;
        expect_len("model.C", self.model.C.len(), n * n)?;
        if let Some(p) = &self.model.reference_P {
            expect_len("model.reference_P", p.len(), n * n)?;
        }
        expect_len("graph.adjacency", self.graph.adjacency.len(), agents * agents)?;
        let graph = self.digraph()?;
        if graph.is_undirected() != self.graph.undirected {
            return Err(ConfigError::BadValue {
                path: "graph.undirected".into(),
                message: format!(
                    "flag is {} but the adjacency matrix is {}symmetric",
                    self.graph.undirected,
                    if graph.is_undirected() { "" } else { "not " }
                ),
            });
        }
        self.variant()?;
        if let ScalarOrArray::Array(c0) = &self.protocol.c0 {
            expect_len("protocol.c0", c0.len(), agents)?;
        }
        match &self.simulation.x0 {
            InitialState::Explicit(x0) => expect_len("simulation.x0", x0.len(), agents * n)?,
            InitialState::Sampler(s) => {
                parse_sampler(s)?;
            }
        }
        if self.simulation.M == 0 {
            return Err(ConfigError::BadValue { path: "simulation.M".into(), message: "must be at least 1".into() });
        }
        if self.output.trajectories > self.simulation.M {
            return Err(ConfigError::BadValue {
                path: "output.trajectories".into(),
                message: format!("asks for {} paths but M = {}", self.output.trajectories, self.simulation.M),
            });
        }
        if let Some(bad) = self.output.emit.iter().find(|e| !EMIT_KINDS.contains(&e.as_str())) {
            return Err(ConfigError::BadValue {
                path: "output.emit".into(),
                message: format!("unknown output `{bad}`, expected one of {}", EMIT_KINDS.join(", ")),
            });
        }
        self.system_model()?;
        Ok(())
    }

    pub fn emits(&self, kind: &str) -> bool {
        self.output.emit.iter().any(|e| e == kind)
    }

    pub fn variant(&self) -> Result<ProtocolVariant, ConfigError> {
        self.protocol
            .variant
            .parse()
            .map_err(|e: consensus_core::protocol::ProtocolError| ConfigError::BadValue {
                path: "protocol.variant".into(),
                message: e.to_string(),
            })
    }

    pub fn system_model(&self) -> Result<SystemModel, ConfigError> {
        let (n, m) = (self.model.n, self.model.m);
        SystemModel::new(
            DMatrix::from_row_slice(n, n, &self.model.A),
            DMatrix::from_row_slice(n, m, &self.model.B),
            DMatrix::from_row_slice(n, n, &self.model.C),
            self.graph.N,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn digraph(&self) -> Result<WeightedDigraph, ConfigError> {
        WeightedDigraph::from_row_major(self.graph.N, &self.graph.adjacency)
            .map_err(|e| ConfigError::BadValue { path: "graph.adjacency".into(), message: e.to_string() })
    }

    pub fn reference_p(&self) -> Option<DMatrix<f64>> {
        let n = self.model.n;
        self.model.reference_P.as_ref().map(|p| DMatrix::from_row_slice(n, n, p))
    }

    pub fn protocol_spec(&self) -> Result<ProtocolSpec, ConfigError> {
        let c0 = match &self.protocol.c0 {
            ScalarOrArray::Scalar(c) => vec![*c; self.graph.N],
            ScalarOrArray::Array(c) => c.clone(),
        };
        Ok(ProtocolSpec {
            variant: self.variant()?,
            k1: self.protocol.k1,
            k2: self.protocol.k2,
            mu: self.protocol.mu,
            gamma: self.protocol.gamma,
            c0,
        })
    }

    /// Explicit `x0`, or the seeded uniform draw.
    pub fn initial_state(&self) -> Result<Vec<f64>, ConfigError> {
        match &self.simulation.x0 {
            InitialState::Explicit(x0) => Ok(x0.clone()),
            InitialState::Sampler(s) => {
                let (lo, hi) = parse_sampler(s)?;
                Ok(sample_initial_state(self.simulation.master_seed, lo, hi, self.graph.N * self.model.n))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Overwrites the scalar at dotted `key` in a config document, keeping the
/// type of the existing value.
pub fn override_scalar(text: &str, key: &str, value: &str) -> Result<String, ConfigError> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut parts = key.split('.').peekable();
    let mut table = &mut doc;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            let slot = table.get_mut(part).ok_or_else(|| ConfigError::MissingKey(key.to_string()))?;
            let bad = |kind: &str| ConfigError::BadValue { path: key.into(), message: format!("`{value}` is not {kind}") };
            *slot = match slot {
                toml::Value::Integer(_) => toml::Value::Integer(value.trim().parse().map_err(|_| bad("an integer"))?),
                toml::Value::Float(_) => toml::Value::Float(value.trim().parse().map_err(|_| bad("a number"))?),
                toml::Value::Boolean(_) => toml::Value::Boolean(value.trim().parse().map_err(|_| bad("a boolean"))?),
                toml::Value::String(_) => toml::Value::String(value.to_string()),
                _ => {
                    return Err(ConfigError::BadValue { path: key.into(), message: "is not a scalar".into() });
                }
            };
            return Ok(toml::to_string(&doc).expect("table serializes"));
        }
        table = match table.get_mut(part) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(ConfigError::MissingKey(key.to_string())),
        };
    }
    Err(ConfigError::MissingKey(key.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SMALL: &str = r#"
[model]
n = 1
m = 1
A = [0.0]
B = [1.0]
C = [0.5]

[graph]
N = 2
adjacency = [0, 1, 1, 0]
undirected = true

[protocol]
variant = "UndirectedStatic"
k1 = 1.0
k2 = 1.0
mu = 2.0
gamma = 0.0
c0 = 1.0

[simulation]
h = 0.01
T = 1.0
output_stride = 10
master_seed = 3
M = 4
x0 = "uniform(-2,2)"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = parse_config(SMALL).unwrap();
        assert_eq!(cfg.protocol_spec().unwrap().c0, vec![1.0, 1.0]);
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.initial_state().unwrap(), cfg.initial_state().unwrap());
    }

    #[test]
    fn missing_key_is_named() {
        let text = SMALL.replace("A = [0.0]\n", "");
        match parse_config(&text) {
            Err(ConfigError::MissingKey(k)) => assert_eq!(k, "model.A"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SMALL.replace("undirected = true", "undirected = true\ncolour = 1");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn dimensions_and_flags_are_cross_checked() {
        assert!(parse_config(&SMALL.replace("B = [1.0]", "B = [1.0, 2.0]")).is_err());
        assert!(parse_config(&SMALL.replace("adjacency = [0, 1, 1, 0]", "adjacency = [0, 1, 0, 0]")).is_err());
        assert!(parse_config(&SMALL.replace("\"UndirectedStatic\"", "\"Nope\"")).is_err());
        assert!(parse_config(&SMALL.replace("\"uniform(-2,2)\"", "[1.0]")).is_err());
        assert!(parse_config(&SMALL.replace("\"uniform(-2,2)\"", "\"uniform(2,-2)\"")).is_err());
        assert!(parse_config(&SMALL.replace("c0 = 1.0", "c0 = [1.0, 2.0, 3.0]")).is_err());
    }

    #[test]
    fn scalar_overrides_keep_types() {
        let text = override_scalar(SMALL, "protocol.gamma", "0.5").unwrap();
        assert_eq!(parse_config(&text).unwrap().protocol.gamma, 0.5);
        let text = override_scalar(SMALL, "simulation.M", "7").unwrap();
        assert_eq!(parse_config(&text).unwrap().simulation.M, 7);
        assert!(override_scalar(SMALL, "simulation.M", "7.5").is_err());
        assert!(matches!(override_scalar(SMALL, "protocol.nope", "1"), Err(ConfigError::MissingKey(_))));
        assert!(override_scalar(SMALL, "model.A", "1").is_err());
    }
}
