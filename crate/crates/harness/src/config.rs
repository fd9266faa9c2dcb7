//! Experiment configuration: a versioned JSON schema with field-level
//! validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use shadows_core::estimators::Observable;
use shadows_core::linalg::MatrixJson;
use shadows_core::pauli::PauliLetter;
use shadows_core::povm::Povm;
use shadows_core::process::{ChannelSourceDescriptor, InputEnsemble};
use shadows_core::protocol::Protocol;
use shadows_core::sources::SourceDescriptor;

pub const CONFIG_SCHEMA: &str = "shadow-config/1";

#[derive(Debug, Error)]
#[error("config error at `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Pauli,
    Clifford,
    Process,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableEntry {
    pub id: String,
    #[serde(flatten)]
    pub observable: Observable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: String,
    pub protocol: ProtocolKind,
    /// Qubit count for the pauli/clifford protocols.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubits: Option<usize>,
    /// System dimension for the process protocol (2 or 4; default 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_source: Option<ChannelSourceDescriptor>,
    /// Process input ensemble; defaults to the six Pauli eigenstates at d = 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<Vec<MatrixJson>>,
    pub observables: Vec<ObservableEntry>,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    /// Overrides the planned round count when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds_override: Option<usize>,
    /// Batch count for the median-of-means comparator (default 10).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("cannot read config: {e}")))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError::new("<json>", format!("cannot parse config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != CONFIG_SCHEMA {
            return Err(ConfigError::new(
                "schema",
                format!("expected {CONFIG_SCHEMA:?}, found {:?}", self.schema),
            ));
        }
        if self.epsilon <= 0.0 {
            return Err(ConfigError::new("epsilon", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ConfigError::new("delta", "must lie in (0, 1)"));
        }
        if self.trials == 0 {
            return Err(ConfigError::new("trials", "must be at least 1"));
        }
        if self.observables.is_empty() {
            return Err(ConfigError::new("observables", "must not be empty"));
        }
        if let Some(0) = self.rounds_override {
            return Err(ConfigError::new("rounds_override", "must be at least 1"));
        }
        if let Some(0) = self.batches {
            return Err(ConfigError::new("batches", "must be at least 1"));
        }
        match self.protocol {
            ProtocolKind::Pauli | ProtocolKind::Clifford => {
                let n = self
                    .qubits
                    .ok_or_else(|| ConfigError::new("qubits", "required for this protocol"))?;
                if n == 0 || n > shadows_core::pauli::DEFAULT_DENSE_CAP {
                    return Err(ConfigError::new(
                        "qubits",
                        format!(
                            "must be in 1..={}",
                            shadows_core::pauli::DEFAULT_DENSE_CAP
                        ),
                    ));
                }
                let source = self
                    .source
                    .as_ref()
                    .ok_or_else(|| ConfigError::new("source", "required for this protocol"))?;
                if matches!(source, SourceDescriptor::Custom { .. }) {
                    return Err(ConfigError::new(
                        "source",
                        "custom sources are not serializable into configs",
                    ));
                }
                if let Some(source_dim) = descriptor_dim(source) {
                    if source_dim != 1usize << n {
                        return Err(ConfigError::new(
                            "source",
                            format!(
                                "source prepares dimension-{source_dim} states; \
                                 the protocol measures dimension {} \
                                 (the GHZ source always emits single-qubit rounds)",
                                1usize << n
                            ),
                        ));
                    }
                }
                if self.channel_source.is_some() {
                    return Err(ConfigError::new(
                        "channel_source",
                        "only valid for the process protocol",
                    ));
                }
                let dim = 1usize << n;
                for entry in &self.observables {
                    if entry.observable.dim() != dim {
                        return Err(ConfigError::new(
                            "observables",
                            format!(
                                "observable {:?} has dimension {}, protocol needs {dim}",
                                entry.id,
                                entry.observable.dim()
                            ),
                        ));
                    }
                }
            }
            ProtocolKind::Process => {
                let d = self.d.unwrap_or(2);
                if d != 2 && d != 4 {
                    return Err(ConfigError::new("d", "process dimension must be 2 or 4"));
                }
                if self.channel_source.is_none() {
                    return Err(ConfigError::new(
                        "channel_source",
                        "required for the process protocol",
                    ));
                }
                if matches!(
                    self.channel_source,
                    Some(ChannelSourceDescriptor::Custom { .. })
                ) {
                    return Err(ConfigError::new(
                        "channel_source",
                        "custom channel sources are not serializable into configs",
                    ));
                }
                if self.source.is_some() {
                    return Err(ConfigError::new(
                        "source",
                        "only valid for the pauli/clifford protocols",
                    ));
                }
                if self.ensemble.is_none() && d != 2 {
                    return Err(ConfigError::new(
                        "ensemble",
                        "an explicit ensemble is required when d != 2",
                    ));
                }
                for entry in &self.observables {
                    if entry.observable.dim() != d * d {
                        return Err(ConfigError::new(
                            "observables",
                            format!(
                                "process observable {:?} must act on dimension d² = {}",
                                entry.id,
                                d * d
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// The measurement protocol for state experiments.
    pub fn build_protocol(&self) -> Result<Protocol, ConfigError> {
        match self.protocol {
            ProtocolKind::Pauli => Ok(Protocol::pauli(self.qubits.unwrap_or(1))),
            ProtocolKind::Clifford => Ok(Protocol::clifford(self.qubits.unwrap_or(1))),
            ProtocolKind::Process => Err(ConfigError::new(
                "protocol",
                "process experiments do not use a state protocol",
            )),
        }
    }

    pub fn process_dim(&self) -> usize {
        self.d.unwrap_or(2)
    }

    /// Input ensemble for process experiments (default: Pauli-6 at d = 2).
    pub fn build_ensemble(&self) -> Result<InputEnsemble, ConfigError> {
        match &self.ensemble {
            Some(states) => InputEnsemble::from_json(states)
                .map_err(|e| ConfigError::new("ensemble", e.to_string())),
            None => Ok(InputEnsemble::pauli6()),
        }
    }

    /// Output measurement POVM for process experiments: random-Pauli-basis
    /// effects on log2(d) qubits.
    pub fn build_process_measurement(&self) -> Result<Povm, ConfigError> {
        let d = self.process_dim();
        let n = d.trailing_zeros() as usize;
        Povm::pauli_bases(n).map_err(|e| ConfigError::new("d", e.to_string()))
    }

    pub fn batches(&self) -> usize {
        self.batches.unwrap_or(10)
    }
}

/// Hilbert-space dimension a source descriptor prepares, when it is fixed by
/// the descriptor itself.
fn descriptor_dim(source: &SourceDescriptor) -> Option<usize> {
    match source {
        SourceDescriptor::Iid { state } => Some(state.0.len()),
        SourceDescriptor::DriftLinear { from, .. } => Some(from.0.len()),
        SourceDescriptor::ParityFlip { state_a, .. } => Some(state_a.0.len()),
        SourceDescriptor::LastOutcomeEcho { state_0, .. } => Some(state_0.0.len()),
        SourceDescriptor::WorstCaseSign { observable, .. } => Some(observable.0.len()),
        SourceDescriptor::Ghz { .. } => Some(2),
        SourceDescriptor::Custom { .. } => None,
    }
}

/// A few convenience states for hand-written configs and tests.
pub fn ket_state(bit: usize) -> MatrixJson {
    let projector = shadows_core::povm::eigenprojector(PauliLetter::Z, bit);
    MatrixJson::from_matrix(&projector)
}
