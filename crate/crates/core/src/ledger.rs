//! Append-only store of precedents.
//!
//! A precedent stream is identified by a (preparation, measurement) key pair.
//! Keys are SHA-256 digests of a canonical text form in which every float is
//! written with 12 significant digits, so two preparations share a stream iff
//! their circuits agree to that precision. Records are never modified or
//! removed once appended.
//!
//! On disk a ledger is line-delimited JSON: one header line followed by one
//! record per line.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::qcore::{compose, project, transform, CMatrix, DensityMatrix, C64, Povm, UnitaryTransform};

const HEADER_FORMAT: &str = "precedent-ledger";
const HEADER_VERSION: u32 = 1;

macro_rules! digest_key {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub [u8; 32]);

        impl $name {
            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), &self.to_hex()[..12])
            }
        }

        impl FromStr for $name {
            type Err = hex::FromHexError;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                let mut out = [0u8; 32];
                hex::decode_to_slice(s, &mut out)?;
                Ok(Self(out))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

digest_key!(
    /// Digest of a canonical [`PreparationSpec`].
    PreparationKey
);
digest_key!(
    /// Digest of a canonical [`Povm`].
    MeasurementKey
);

/// Identifies one precedent stream.
pub type StreamId = (PreparationKey, MeasurementKey);

/// Complex matrices in JSON as rows of `[re, im]` pairs.
pub mod matrix_json {
    use super::*;
    use crate::qcore::C64;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(CMatrix::from_fn(n, m, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
    }
}

/// One preparation step applied to the running state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PrepStep {
    Transform(#[serde(with = "matrix_json")] CMatrix),
    Project(#[serde(with = "matrix_json")] CMatrix),
    Compose(PreparationSpec),
}

/// A system label: start from `|initial⟩` in dimension `dim`, then apply `steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreparationSpec {
    pub dim: usize,
    #[serde(default)]
    pub initial: usize,
    #[serde(default)]
    pub steps: Vec<PrepStep>,
}

impl PreparationSpec {
    pub fn basis(dim: usize, initial: usize) -> Self {
        Self {
            dim,
            initial,
            steps: Vec::new(),
        }
    }

    pub fn then(mut self, step: PrepStep) -> Self {
        self.steps.push(step);
        self
    }

    /// Runs the steps through the state operations.
    pub fn replay(&self) -> Result<DensityMatrix> {
        if self.dim == 0 || self.initial >= self.dim {
            return Err(Error::InvalidPreparation(format!(
                "initial index {} invalid for dimension {}",
                self.initial, self.dim
            )));
        }
        let mut rho = DensityMatrix::basis(self.dim, self.initial)?;
        for (i, step) in self.steps.iter().enumerate() {
            let wrap = |e: Error| Error::InvalidPreparation(format!("step {i}: {e}"));
            rho = match step {
                PrepStep::Transform(m) => {
                    let u = UnitaryTransform::new(m.clone()).map_err(wrap)?;
                    transform(&rho, &u).map_err(wrap)?
                }
                PrepStep::Project(f) => project(&rho, f).map_err(wrap)?,
                PrepStep::Compose(other) => compose(&rho, &other.replay().map_err(wrap)?),
            };
        }
        Ok(rho)
    }

    /// Final dimension after all compositions.
    pub fn output_dim(&self) -> usize {
        self.steps.iter().fold(self.dim, |d, s| match s {
            PrepStep::Compose(o) => d * o.output_dim(),
            _ => d,
        })
    }

    fn write_canonical(&self, out: &mut String) {
        write!(out, "prep{{dim={};initial={};steps=[", self.dim, self.initial).unwrap();
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            match step {
                PrepStep::Transform(m) => {
                    out.push_str("transform:");
                    write_matrix(out, m);
                }
                PrepStep::Project(m) => {
                    out.push_str("project:");
                    write_matrix(out, m);
                }
                PrepStep::Compose(o) => {
                    out.push_str("compose:");
                    o.write_canonical(out);
                }
            }
        }
        out.push_str("]}");
    }

    pub fn canonical_form(&self) -> String {
        let mut s = String::new();
        self.write_canonical(&mut s);
        s
    }
}

/// How a preparation is mapped to its precedent stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyMode {
    /// Same circuit at 12 significant digits.
    #[default]
    Syntactic,
    /// Same resulting density matrix, entries rounded to 12 decimal places.
    Semantic,
}

/// Float text with 12 significant digits; both zeros print as `0`.
pub fn canonical_float(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.11e}")
    }
}

fn write_matrix(out: &mut String, m: &CMatrix) {
    write!(out, "{}x{}(", m.nrows(), m.ncols()).unwrap();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i + j > 0 {
                out.push(',');
            }
            let z = m[(i, j)];
            write!(out, "{}:{}", canonical_float(z.re), canonical_float(z.im)).unwrap();
        }
    }
    out.push(')');
}

fn sha256(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

/// Key of the stream a preparation belongs to. Fails if the spec does not
/// replay to a valid state.
pub fn canonical_key(spec: &PreparationSpec) -> Result<PreparationKey> {
    spec.replay()?;
    Ok(PreparationKey(sha256(&spec.canonical_form())))
}

/// Key under the chosen [`KeyMode`].
pub fn preparation_key(spec: &PreparationSpec, mode: KeyMode) -> Result<PreparationKey> {
    match mode {
        KeyMode::Syntactic => canonical_key(spec),
        KeyMode::Semantic => {
            // Entries lie in [-1, 1]; snapping to an absolute 1e-12 grid keeps
            // round-off residue (e.g. 1e-17 where 0 is exact) from splitting keys.
            let snap = |x: f64| {
                let r = (x * 1e12).round() / 1e12;
                if r == 0.0 { 0.0 } else { r }
            };
            let rho = spec
                .replay()?
                .matrix()
                .map(|z| C64::new(snap(z.re), snap(z.im)));
            let mut s = String::from("state:");
            write_matrix(&mut s, &rho);
            Ok(PreparationKey(sha256(&s)))
        }
    }
}

pub fn measurement_key(m: &Povm) -> MeasurementKey {
    let mut s = format!("povm{{dim={};outcomes={};effects=[", m.dim(), m.n_outcomes());
    for (i, e) in m.effects().iter().enumerate() {
        if i > 0 {
            s.push(';');
        }
        write_matrix(&mut s, e);
    }
    s.push_str("]}");
    MeasurementKey(sha256(&s))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecedentRecord {
    pub prep_key: PreparationKey,
    pub meas_key: MeasurementKey,
    pub outcome: usize,
    pub seq_no: u64,
    pub wall_time: DateTime<Utc>,
}

/// All outcomes of one stream, in order, with per-outcome counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stream {
    outcomes: Vec<usize>,
    counts: Vec<u64>,
}

impl Stream {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[usize] {
        &self.outcomes
    }

    /// Counts indexed by outcome; trailing never-seen outcomes are absent.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    fn push(&mut self, outcome: usize) {
        if outcome >= self.counts.len() {
            self.counts.resize(outcome + 1, 0);
        }
        self.counts[outcome] += 1;
        self.outcomes.push(outcome);
    }

    /// Uniform draw from the multiset. Reads only the counts, so any two
    /// streams with equal counts give identical draws for the same RNG state.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        sample_from_counts(&self.counts, rng)
    }
}

/// Draws index `i` with probability `counts[i] / Σ counts`.
pub fn sample_from_counts<R: Rng + ?Sized>(counts: &[u64], rng: &mut R) -> Option<usize> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let mut r = rng.random_range(0..total);
    for (i, &c) in counts.iter().enumerate() {
        if r < c {
            return Some(i);
        }
        r -= c;
    }
    unreachable!("draw below total always lands in a bin")
}

/// Owned snapshot returned by [`Ledger::precedent_ensemble`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrecedentEnsemble {
    pub outcomes: Vec<usize>,
    pub counts: BTreeMap<usize, u64>,
}

#[derive(Debug, Clone, Default)]
pub struct Ledger {
    records: Vec<PrecedentRecord>,
    streams: HashMap<StreamId, Stream>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PrecedentRecord] {
        &self.records
    }

    /// Appends an outcome and returns its per-stream sequence number.
    pub fn record_outcome(
        &mut self,
        prep_key: PreparationKey,
        meas_key: MeasurementKey,
        outcome: usize,
        n_outcomes: usize,
    ) -> Result<u64> {
        if outcome >= n_outcomes {
            return Err(Error::OutcomeOutOfRange {
                outcome,
                n_outcomes,
            });
        }
        let stream = self.streams.entry((prep_key, meas_key)).or_default();
        let seq_no = stream.len() as u64;
        stream.push(outcome);
        self.records.push(PrecedentRecord {
            prep_key,
            meas_key,
            outcome,
            seq_no,
            wall_time: Utc::now(),
        });
        Ok(seq_no)
    }

    pub fn stream(&self, prep_key: &PreparationKey, meas_key: &MeasurementKey) -> Option<&Stream> {
        self.streams.get(&(*prep_key, *meas_key))
    }

    /// Number of precedents for a stream; zero for a novel system.
    pub fn precedent_count(&self, prep_key: &PreparationKey, meas_key: &MeasurementKey) -> usize {
        self.stream(prep_key, meas_key).map_or(0, Stream::len)
    }

    pub fn precedent_ensemble(
        &self,
        prep_key: &PreparationKey,
        meas_key: &MeasurementKey,
    ) -> PrecedentEnsemble {
        let Some(stream) = self.stream(prep_key, meas_key) else {
            return PrecedentEnsemble::default();
        };
        PrecedentEnsemble {
            outcomes: stream.outcomes.clone(),
            counts: stream
                .counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i, c))
                .collect(),
        }
    }

    /// Stream ids in key order.
    pub fn stream_ids(&self) -> Vec<StreamId> {
        let mut ids: Vec<StreamId> = self.streams.keys().copied().collect();
        ids.sort();
        ids
    }

    fn push_loaded(&mut self, record: PrecedentRecord) -> std::result::Result<(), String> {
        let stream = self
            .streams
            .entry((record.prep_key, record.meas_key))
            .or_default();
        let expected = stream.len() as u64;
        if record.seq_no != expected {
            return Err(format!(
                "seq_no {} breaks stream order (expected {expected})",
                record.seq_no
            ));
        }
        stream.push(record.outcome);
        self.records.push(record);
        Ok(())
    }

    /// Writes the ledger to `path` through a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("jsonl.tmp");
        let ctx = |what: &str| format!("{what} {}", tmp.display());
        let file = File::create(&tmp).map_err(|e| Error::io(ctx("creating"), e))?;
        let mut w = BufWriter::new(file);
        let header = Header {
            format: HEADER_FORMAT.into(),
            version: HEADER_VERSION,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n").map_err(|e| Error::io(ctx("writing"), e))?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(ctx("writing"), e))?;
        }
        let file = w
            .into_inner()
            .map_err(|e| Error::io(ctx("flushing"), e.into_error()))?;
        file.sync_all().map_err(|e| Error::io(ctx("syncing"), e))?;
        fs::rename(&tmp, path)
            .map_err(|e| Error::io(format!("renaming into {}", path.display()), e))
    }

    /// Reads a ledger written by [`Ledger::save`]. Errors name the offending line.
    pub fn load(path: &Path) -> Result<Self> {
        let file =
            File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let corrupt = |line: usize, message: String| Error::CorruptLedger {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut ledger = Ledger::new();
        let mut saw_header = false;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| corrupt(line_no, e.to_string()))?;
            if !saw_header {
                let h: Header =
                    serde_json::from_str(&line).map_err(|e| corrupt(line_no, format!("bad header: {e}")))?;
                if h.format != HEADER_FORMAT || h.version != HEADER_VERSION {
                    return Err(corrupt(
                        line_no,
                        format!("unsupported ledger format {} v{}", h.format, h.version),
                    ));
                }
                saw_header = true;
                continue;
            }
            let record: PrecedentRecord =
                serde_json::from_str(&line).map_err(|e| corrupt(line_no, e.to_string()))?;
            ledger
                .push_loaded(record)
                .map_err(|m| corrupt(line_no, m))?;
        }
        if !saw_header {
            return Err(corrupt(1, "missing header".into()));
        }
        Ok(ledger)
    }
}
