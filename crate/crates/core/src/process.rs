//! Shadow process tomography under adaptive channels.
//!
//! A channel round prepares a random input σ_j from an IC ensemble, applies
//! the (history-dependent) channel, and measures a fixed IC POVM. The pairs
//! (j, k) are outcomes of the bipartite POVM {(d/L)·σ_j^T ⊗ E_k} on the
//! normalized Choi state, so state-shadow machinery transfers verbatim; the
//! estimation target is the time-averaged Choi matrix.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    sample_born, MeasurementRecord, Outcome, RecordMeta, RecordedRound, RngStreamSpec,
    StreamPurpose, RECORD_SCHEMA,
};
use crate::error::{Result, ShadowError};
use crate::estimators::{truncate, EstimateDiagnostics, EstimateResult};
use crate::linalg::{self, c, cr, CMat, CVec, DenseHermitian, DensityMatrix, MatrixJson};
use crate::pauli::{traceless_decompose, PauliLetter};
use crate::povm::{dual_frame, frame_superoperator, Povm};
use crate::protocol::ProtocolDraw;
use crate::sources::Trajectory;

/// A quantum channel in Kraus form.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    dim: usize,
    kraus: Vec<CMat>,
}

impl Channel {
    /// Validates completeness Σ K†K = 1 to 1e-10.
    pub fn new(kraus: Vec<CMat>) -> Result<Self> {
        let dim = match kraus.first() {
            Some(k) => k.nrows(),
            None => return Err(ShadowError::IncompleteKraus("no Kraus operators".into())),
        };
        let mut sum = linalg::zeros(dim);
        for k in &kraus {
            if k.nrows() != dim || k.ncols() != dim {
                return Err(ShadowError::IncompleteKraus(
                    "Kraus operators have inconsistent shapes".into(),
                ));
            }
            sum += k.adjoint() * k;
        }
        let dev = linalg::max_abs_diff(&sum, &linalg::identity(dim));
        if dev > 1e-10 {
            return Err(ShadowError::IncompleteKraus(format!(
                "Σ K†K deviates from identity by {dev:.3e}"
            )));
        }
        Ok(Self { dim, kraus })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = linalg::zeros(self.dim);
        for k in &self.kraus {
            out += k * rho * k.adjoint();
        }
        out
    }

    pub fn identity(d: usize) -> Self {
        Self::new(vec![linalg::identity(d)]).expect("identity is complete")
    }

    /// Single-qubit depolarizing channel with error probability p.
    pub fn depolarizing(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ShadowError::NonPositiveInput {
                name: "depolarizing probability in [0,1]",
                value: p,
            });
        }
        let mut kraus = vec![linalg::identity(2).scale((1.0 - 0.75 * p).sqrt())];
        for letter in [PauliLetter::X, PauliLetter::Y, PauliLetter::Z] {
            kraus.push(letter.matrix().scale((0.25 * p).sqrt()));
        }
        Self::new(kraus)
    }

    pub fn bit_flip(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ShadowError::NonPositiveInput {
                name: "bit-flip probability in [0,1]",
                value: p,
            });
        }
        Self::new(vec![
            linalg::identity(2).scale((1.0 - p).sqrt()),
            PauliLetter::X.matrix().scale(p.sqrt()),
        ])
    }

    /// Unitary rotation about Z: diag(1, e^{iθ}).
    pub fn rz(theta: f64) -> Self {
        let mut u = linalg::identity(2);
        u[(1, 1)] = c(theta.cos(), theta.sin());
        Self::new(vec![u]).expect("unitary is complete")
    }
}

/// Serializable channel families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChannelDescriptor {
    Identity { d: usize },
    Depolarizing { p: f64 },
    BitFlip { p: f64 },
    Rz { theta: f64 },
    Kraus { operators: Vec<MatrixJson> },
}

impl ChannelDescriptor {
    pub fn build(&self) -> Result<Channel> {
        match self {
            ChannelDescriptor::Identity { d } => Ok(Channel::identity(*d)),
            ChannelDescriptor::Depolarizing { p } => Channel::depolarizing(*p),
            ChannelDescriptor::BitFlip { p } => Channel::bit_flip(*p),
            ChannelDescriptor::Rz { theta } => Ok(Channel::rz(*theta)),
            ChannelDescriptor::Kraus { operators } => Channel::new(
                operators
                    .iter()
                    .map(|m| m.to_matrix())
                    .collect::<Result<Vec<_>>>()?,
            ),
        }
    }
}

/// Normalized Choi state ρ_Λ = (I⊗Λ)(|Ω⟩⟨Ω|) on dimension d².
pub fn choi(channel: &Channel) -> Result<DensityMatrix> {
    let d = channel.dim();
    let scale = cr(1.0 / (d as f64).sqrt());
    let mut rho = linalg::zeros(d * d);
    for k in channel.kraus() {
        // (1 ⊗ K)|Ω⟩ = (1/√d) Σ_i |i⟩ ⊗ K|i⟩
        let mut w = CVec::zeros(d * d);
        for i in 0..d {
            for r in 0..d {
                w[i * d + r] = k[(r, i)] * scale;
            }
        }
        rho += &w * w.adjoint();
    }
    DensityMatrix::new(rho)
}

/// Uniform IC ensemble of input states averaging to the maximally mixed
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEnsemble {
    states: Vec<DensityMatrix>,
}

impl InputEnsemble {
    pub fn new(states: Vec<DensityMatrix>) -> Result<Self> {
        let d = match states.first() {
            Some(s) => s.dim(),
            None => {
                return Err(ShadowError::EnsembleNotBalanced("no input states".into()));
            }
        };
        let mut avg = linalg::zeros(d);
        for s in &states {
            if s.dim() != d {
                return Err(ShadowError::DimensionMismatch {
                    expected: d,
                    found: s.dim(),
                });
            }
            avg += s.matrix();
        }
        avg = avg.scale(1.0 / states.len() as f64);
        let dev = linalg::max_abs_diff(&avg, &linalg::identity(d).scale(1.0 / d as f64));
        if dev > 1e-10 {
            return Err(ShadowError::EnsembleNotBalanced(format!(
                "(1/L)Σσ_j deviates from 1/d by {dev:.3e}"
            )));
        }
        Ok(Self { states })
    }

    /// The six Pauli eigenstates (d = 2, L = 6).
    pub fn pauli6() -> Self {
        let mut states = Vec::with_capacity(6);
        for basis in [PauliLetter::X, PauliLetter::Y, PauliLetter::Z] {
            for z in 0..2 {
                states.push(
                    DensityMatrix::new(crate::povm::eigenprojector(basis, z))
                        .expect("projectors are states"),
                );
            }
        }
        Self::new(states).expect("Pauli eigenstates average to 1/2")
    }

    /// Computational-basis states: balanced but not IC (for failure paths).
    pub fn computational(d: usize) -> Self {
        let states = (0..d)
            .map(|i| {
                let mut ket = CVec::zeros(d);
                ket[i] = Complex64::new(1.0, 0.0);
                DensityMatrix::pure(&ket).expect("basis states")
            })
            .collect();
        Self::new(states).expect("basis states average to 1/d")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    pub fn to_json(&self) -> Vec<MatrixJson> {
        self.states
            .iter()
            .map(|s| MatrixJson::from_matrix(s.matrix()))
            .collect()
    }

    pub fn from_json(states: &[MatrixJson]) -> Result<Self> {
        Self::new(
            states
                .iter()
                .map(|m| DensityMatrix::new(m.to_matrix()?))
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

/// The bipartite process POVM {(d/L)·σ_j^T ⊗ E_k}, flat index j·M + k.
/// Fails if the combined frame is rank-deficient (not IC on d⁴).
pub fn process_povm(ensemble: &InputEnsemble, povm: &Povm) -> Result<Povm> {
    let d = ensemble.dim();
    if povm.dim() != d {
        return Err(ShadowError::DimensionMismatch {
            expected: d,
            found: povm.dim(),
        });
    }
    let weight = d as f64 / ensemble.len() as f64;
    let mut effects = Vec::with_capacity(ensemble.len() * povm.len());
    for sigma in ensemble.states() {
        let sigma_t = sigma.matrix().transpose().scale(weight);
        for e in povm.effects() {
            effects.push(linalg::kron(&sigma_t, e));
        }
    }
    let bipartite = Povm::new(effects)?;
    let frame = frame_superoperator(&bipartite);
    if !frame.is_informationally_complete() {
        let vals = frame.eigenvalues();
        return Err(ShadowError::NotInformationallyComplete { min_eig: vals[0] });
    }
    Ok(bipartite)
}

/// History of a process experiment: ordered (input index, outcome) pairs.
/// Input indices are visible to the adversary only after the round runs.
#[derive(Debug, Clone, Default)]
pub struct ProcessHistory {
    rounds: Vec<(usize, usize)>,
}

impl ProcessHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, input: usize, outcome: usize) {
        self.rounds.push((input, outcome));
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn rounds(&self) -> &[(usize, usize)] {
        &self.rounds
    }

    /// Parity of the sum of past measurement outcomes k.
    pub fn outcome_parity(&self) -> usize {
        self.rounds.iter().map(|(_, k)| *k).sum::<usize>() % 2
    }
}

/// Serializable description of a built-in channel source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChannelSourceDescriptor {
    Iid {
        channel: ChannelDescriptor,
    },
    /// θ_t sweeps linearly from start to end over the planned rounds.
    RzDrift {
        theta_start: f64,
        theta_end: f64,
        total_rounds: usize,
    },
    /// Even past-outcome parity applies `even`, odd applies `odd`.
    ParityConditioned {
        even: ChannelDescriptor,
        odd: ChannelDescriptor,
    },
    Custom {
        name: String,
    },
}

/// A predictable channel process: Λ_t depends only on past rounds, never on
/// the current round's input index.
pub trait ChannelSource: Send + Sync {
    fn next_channel(&self, history: &ProcessHistory) -> Result<Channel>;
    fn dim(&self) -> usize;
    fn descriptor(&self) -> ChannelSourceDescriptor;
}

pub struct IidChannelSource {
    channel: Channel,
    descriptor: ChannelSourceDescriptor,
}

impl IidChannelSource {
    pub fn new(descriptor: ChannelDescriptor) -> Result<Self> {
        Ok(Self {
            channel: descriptor.build()?,
            descriptor: ChannelSourceDescriptor::Iid { channel: descriptor },
        })
    }
}

impl ChannelSource for IidChannelSource {
    fn next_channel(&self, _history: &ProcessHistory) -> Result<Channel> {
        Ok(self.channel.clone())
    }

    fn dim(&self) -> usize {
        self.channel.dim()
    }

    fn descriptor(&self) -> ChannelSourceDescriptor {
        self.descriptor.clone()
    }
}

pub struct RzDriftChannelSource {
    theta_start: f64,
    theta_end: f64,
    total_rounds: usize,
}

impl RzDriftChannelSource {
    pub fn new(theta_start: f64, theta_end: f64, total_rounds: usize) -> Result<Self> {
        if total_rounds == 0 {
            return Err(ShadowError::NonPositiveInput {
                name: "total_rounds",
                value: 0.0,
            });
        }
        Ok(Self {
            theta_start,
            theta_end,
            total_rounds,
        })
    }
}

impl ChannelSource for RzDriftChannelSource {
    fn next_channel(&self, history: &ProcessHistory) -> Result<Channel> {
        let t = history.len() + 1;
        let s = (t as f64 / self.total_rounds as f64).min(1.0);
        Ok(Channel::rz(self.theta_start + s * (self.theta_end - self.theta_start)))
    }

    fn dim(&self) -> usize {
        2
    }

    fn descriptor(&self) -> ChannelSourceDescriptor {
        ChannelSourceDescriptor::RzDrift {
            theta_start: self.theta_start,
            theta_end: self.theta_end,
            total_rounds: self.total_rounds,
        }
    }
}

pub struct ParityConditionedChannelSource {
    even: Channel,
    odd: Channel,
    descriptor: ChannelSourceDescriptor,
}

impl ParityConditionedChannelSource {
    pub fn new(even: ChannelDescriptor, odd: ChannelDescriptor) -> Result<Self> {
        let even_ch = even.build()?;
        let odd_ch = odd.build()?;
        if even_ch.dim() != odd_ch.dim() {
            return Err(ShadowError::DimensionMismatch {
                expected: even_ch.dim(),
                found: odd_ch.dim(),
            });
        }
        Ok(Self {
            even: even_ch,
            odd: odd_ch,
            descriptor: ChannelSourceDescriptor::ParityConditioned { even, odd },
        })
    }
}

impl ChannelSource for ParityConditionedChannelSource {
    fn next_channel(&self, history: &ProcessHistory) -> Result<Channel> {
        Ok(if history.outcome_parity() == 0 {
            self.even.clone()
        } else {
            self.odd.clone()
        })
    }

    fn dim(&self) -> usize {
        self.even.dim()
    }

    fn descriptor(&self) -> ChannelSourceDescriptor {
        self.descriptor.clone()
    }
}

pub fn build_channel_source(
    descriptor: &ChannelSourceDescriptor,
) -> Result<Box<dyn ChannelSource>> {
    match descriptor {
        ChannelSourceDescriptor::Iid { channel } => {
            Ok(Box::new(IidChannelSource::new(channel.clone())?))
        }
        ChannelSourceDescriptor::RzDrift {
            theta_start,
            theta_end,
            total_rounds,
        } => Ok(Box::new(RzDriftChannelSource::new(
            *theta_start,
            *theta_end,
            *total_rounds,
        )?)),
        ChannelSourceDescriptor::ParityConditioned { even, odd } => Ok(Box::new(
            ParityConditionedChannelSource::new(even.clone(), odd.clone())?,
        )),
        ChannelSourceDescriptor::Custom { name } => Err(ShadowError::UnknownRule(name.clone())),
    }
}

/// Runs the process acquisition loop. Per round: fix Λ_t from history, draw
/// the input index, apply, measure. Returns the (j, k) record and the
/// realized Choi trajectory.
pub fn run_process_acquisition(
    source: &dyn ChannelSource,
    ensemble: &InputEnsemble,
    povm: &Povm,
    rounds: usize,
    streams: RngStreamSpec,
) -> Result<(MeasurementRecord, Trajectory)> {
    if rounds == 0 {
        return Err(ShadowError::NonPositiveInput {
            name: "rounds",
            value: 0.0,
        });
    }
    let d = ensemble.dim();
    if source.dim() != d || povm.dim() != d {
        return Err(ShadowError::DimensionMismatch {
            expected: d,
            found: source.dim().max(povm.dim()),
        });
    }
    let mut input_rng = streams.rng(StreamPurpose::Input);
    let mut outcome_rng = streams.rng(StreamPurpose::Outcome);

    let mut history = ProcessHistory::new();
    let mut trajectory = Trajectory::new();
    let mut recorded = Vec::with_capacity(rounds);

    for t in 1..=rounds {
        // the channel is fixed before the input index is drawn
        let channel = source.next_channel(&history)?;
        let j = input_rng.gen_range(0..ensemble.len());
        let out_state = channel.apply(ensemble.states()[j].matrix());
        let probs: Vec<f64> = povm
            .effects()
            .iter()
            .map(|e| (e * &out_state).diagonal().sum().re)
            .collect();
        let k = sample_born(&probs, &mut outcome_rng)?;

        recorded.push(RecordedRound {
            t,
            draw: ProtocolDraw::FixedPovm,
            k: Outcome::Pair(j, k),
        });
        history.push(j, k);
        trajectory.push(choi(&channel)?);
    }

    let meta = RecordMeta {
        schema: RECORD_SCHEMA.into(),
        protocol: "process".into(),
        dim: d,
        rounds,
        master_seed: streams.master_seed,
        trial: streams.trial,
        source: serde_json::to_value(source.descriptor())?,
    };
    Ok((
        MeasurementRecord {
            meta,
            rounds: recorded,
        },
        trajectory,
    ))
}

use rand::Rng;

/// Truncated-mean estimate of the time-averaged Choi expectation
/// (1/N)Σ tr(O ρ_{Λ_t}) from a process record.
pub fn estimate_process(
    record: &MeasurementRecord,
    observable: &DenseHermitian,
    ensemble: &InputEnsemble,
    povm: &Povm,
    threshold_value: f64,
) -> Result<EstimateResult> {
    if record.is_empty() {
        return Err(ShadowError::EmptyRecord);
    }
    if threshold_value < 0.0 {
        return Err(ShadowError::NegativeThreshold(threshold_value));
    }
    let d = ensemble.dim();
    if observable.dim() != d * d {
        return Err(ShadowError::DimensionMismatch {
            expected: d * d,
            found: observable.dim(),
        });
    }
    let bipartite = process_povm(ensemble, povm)?;
    let duals = dual_frame(&bipartite)?;
    let (o0, mu) = traceless_decompose(observable);
    // precompute x_{jk} = tr(O₀ ρ̂_{jk}) for all L·M outcome pairs
    let values: Vec<f64> = duals
        .shadows()
        .iter()
        .map(|shadow| o0.expectation_of(shadow.matrix()))
        .collect();

    let m = povm.len();
    let n = record.len() as f64;
    let mut hits = 0usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for round in &record.rounds {
        let (j, k) = round.k.pair()?;
        let flat = j * m + k;
        if flat >= values.len() {
            return Err(ShadowError::OutcomeOutOfRange {
                outcome: flat,
                space: values.len(),
            });
        }
        let x = values[flat];
        if x.abs() > threshold_value {
            hits += 1;
        }
        let y = truncate(x, threshold_value)?;
        sum += y;
        sum_sq += y * y;
    }
    let mean = sum / n;
    Ok(EstimateResult {
        o_hat: mean + mu,
        o_bar: None,
        abs_error: None,
        diagnostics: EstimateDiagnostics {
            rounds: record.len(),
            truncation_hits: hits,
            y_variance: (sum_sq / n - mean * mean).max(0.0),
            threshold: threshold_value,
        },
    })
}

/// |Σ_{jk} p_{jk}·tr(Oρ̂_{jk}) − tr(O ρ_Λ)| at one history: the channel-side
/// martingale centering identity, by exact outcome enumeration.
pub fn process_centering_gap(
    source: &dyn ChannelSource,
    ensemble: &InputEnsemble,
    povm: &Povm,
    history: &ProcessHistory,
    observable: &DenseHermitian,
) -> Result<f64> {
    let bipartite = process_povm(ensemble, povm)?;
    let duals = dual_frame(&bipartite)?;
    let channel = source.next_channel(history)?;
    let l = ensemble.len() as f64;
    let m = povm.len();
    let mut expected = 0.0;
    for (j, sigma) in ensemble.states().iter().enumerate() {
        let out_state = channel.apply(sigma.matrix());
        for (k, e) in povm.effects().iter().enumerate() {
            let p = (e * &out_state).diagonal().sum().re / l;
            expected += p * observable.expectation_of(duals.shadow(j * m + k).matrix());
        }
    }
    let target = observable.expectation(&choi(&channel)?);
    Ok((expected - target).abs())
}
