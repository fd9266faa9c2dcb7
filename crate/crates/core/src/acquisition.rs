//! The sequential data-acquisition loop and measurement-record persistence.
//!
//! Per round: draw the measurement setting from a trusted RNG stream, query
//! the source for ρ_t given the recorded history, sample the outcome by
//! Born's rule, append. Records persist as JSONL (header line + one line per
//! round) and store the draws explicitly, so any observable can be estimated
//! from the file alone.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShadowError};
use crate::protocol::{Protocol, ProtocolDraw};
use crate::sources::{History, StateSource, Trajectory};

pub const RECORD_SCHEMA: &str = "shadow-record/1";

/// Independent, reproducible RNG substreams: one ChaCha key per master seed,
/// one nonce per (trial, purpose). Identical specs replay identical bytes
/// regardless of thread schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStreamSpec {
    pub master_seed: u64,
    pub trial: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Measurement-setting randomness.
    Draw = 0,
    /// Born-rule outcome sampling.
    Outcome = 1,
    /// Input-state index for process experiments.
    Input = 2,
}

impl RngStreamSpec {
    pub fn new(master_seed: u64, trial: u64) -> Self {
        Self { master_seed, trial }
    }

    pub fn rng(&self, purpose: StreamPurpose) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        // 8 purpose slots per trial keeps streams disjoint
        rng.set_stream(self.trial.wrapping_mul(8) + purpose as u64);
        rng
    }
}

/// A measurement outcome: a plain index, or an (input, outcome) pair for
/// process experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Index(usize),
    Pair(usize, usize),
}

impl Outcome {
    pub fn index(&self) -> Result<usize> {
        match self {
            Outcome::Index(k) => Ok(*k),
            Outcome::Pair(..) => Err(ShadowError::MalformedRecord(
                "expected a plain outcome, found an (input, outcome) pair".into(),
            )),
        }
    }

    pub fn pair(&self) -> Result<(usize, usize)> {
        match self {
            Outcome::Pair(j, k) => Ok((*j, *k)),
            Outcome::Index(_) => Err(ShadowError::MalformedRecord(
                "expected an (input, outcome) pair, found a plain outcome".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedRound {
    pub t: usize,
    pub draw: ProtocolDraw,
    pub k: Outcome,
}

/// Record header: everything needed to re-run or post-process the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub schema: String,
    pub protocol: String,
    /// Hilbert-space dimension of the measured system.
    pub dim: usize,
    pub rounds: usize,
    pub master_seed: u64,
    pub trial: u64,
    /// Descriptor of the state or channel source (opaque JSON).
    pub source: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub meta: RecordMeta,
    pub rounds: Vec<RecordedRound>,
}

impl MeasurementRecord {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// 1..N contiguity and header/row agreement.
    pub fn validate(&self) -> Result<()> {
        if self.meta.schema != RECORD_SCHEMA {
            return Err(ShadowError::SchemaVersionMismatch {
                expected: RECORD_SCHEMA.into(),
                found: self.meta.schema.clone(),
            });
        }
        if self.rounds.len() != self.meta.rounds {
            return Err(ShadowError::MalformedRecord(format!(
                "header says {} rounds, file has {}",
                self.meta.rounds,
                self.rounds.len()
            )));
        }
        for (i, round) in self.rounds.iter().enumerate() {
            if round.t != i + 1 {
                return Err(ShadowError::MalformedRecord(format!(
                    "round index {} at position {} (expected {})",
                    round.t,
                    i,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Samples an index from an unnormalized Born distribution after checking
/// normalization to 1e-8.
pub fn sample_born<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(ShadowError::NonNormalizedBornDistribution { total });
    }
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p.max(0.0); // clamp roundoff negatives
        if u < acc {
            return Ok(k);
        }
    }
    Ok(probs.len() - 1)
}

/// Runs the full acquisition loop; returns the record plus the realized
/// trajectory (simulation-side ground truth for ō).
pub fn run_acquisition(
    source: &dyn StateSource,
    protocol: &Protocol,
    rounds: usize,
    streams: RngStreamSpec,
) -> Result<(MeasurementRecord, Trajectory)> {
    if rounds == 0 {
        return Err(ShadowError::NonPositiveInput {
            name: "rounds",
            value: 0.0,
        });
    }
    if source.dim() != protocol.dim() {
        return Err(ShadowError::DimensionMismatch {
            expected: protocol.dim(),
            found: source.dim(),
        });
    }
    let mut draw_rng = streams.rng(StreamPurpose::Draw);
    let mut outcome_rng = streams.rng(StreamPurpose::Outcome);

    let mut history = History::new();
    let mut trajectory = Trajectory::new();
    let mut recorded = Vec::with_capacity(rounds);

    for t in 1..=rounds {
        // the setting never depends on the source's strategy
        let draw = protocol.draw(&mut draw_rng);
        let rho = source.next_state(&history)?;
        let effects = protocol.conditional_effects(&draw);
        let probs: Vec<f64> = effects
            .iter()
            .map(|e| (e * rho.matrix()).diagonal().sum().re)
            .collect();
        let k = sample_born(&probs, &mut outcome_rng)?;

        recorded.push(RecordedRound {
            t,
            draw: draw.clone(),
            k: Outcome::Index(k),
        });
        history.push(draw, k);
        trajectory.push(rho);
    }

    let meta = RecordMeta {
        schema: RECORD_SCHEMA.into(),
        protocol: protocol.name().into(),
        dim: protocol.dim(),
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

/// Writes a record as JSONL: header line, then one line per round.
pub fn save_record(path: &Path, record: &MeasurementRecord) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &record.meta)?;
    w.write_all(b"\n")?;
    for round in &record.rounds {
        serde_json::to_writer(&mut w, round)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads and validates a JSONL record; never silently accepts truncation.
pub fn load_record(path: &Path) -> Result<MeasurementRecord> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| ShadowError::MalformedRecord("empty record file".into()))??;
    let meta: RecordMeta = serde_json::from_str(&header)?;
    if meta.schema != RECORD_SCHEMA {
        return Err(ShadowError::SchemaVersionMismatch {
            expected: RECORD_SCHEMA.into(),
            found: meta.schema,
        });
    }
    let mut rounds = Vec::with_capacity(meta.rounds);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rounds.push(serde_json::from_str::<RecordedRound>(&line)?);
    }
    let record = MeasurementRecord { meta, rounds };
    record.validate()?;
    Ok(record)
}
