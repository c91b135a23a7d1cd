//! Precedence measurement engine.
//!
//! For a stream with `n` recorded precedents and threshold `T`:
//! - `n = 0`: the outcome comes from the freedom source;
//! - `1 ≤ n < T`: the outcome comes from the build-up policy;
//! - `n ≥ T`: the outcome is a uniform draw from the precedent multiset.
//!
//! Every outcome, whatever its regime, is appended to the ledger and becomes
//! a precedent for the next measurement.

pub mod mdl;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{
    measurement_key, preparation_key, KeyMode, Ledger, MeasurementKey, PreparationKey,
    PreparationSpec, StreamId,
};
use crate::qcore::{born_probabilities, Povm};

pub use mdl::{simplest_rule_induct, RuleClass, RuleDescription};

pub const DEFAULT_THRESHOLD: u64 = 1000;

/// How outcomes are produced while `1 ≤ n < T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Buildup {
    /// Uniform draw from the precedents so far (a Pólya urn).
    Urn,
    /// Draw from the Born probabilities.
    BornOracle,
    /// Continue the minimum-description-length rule induced from the precedents.
    SimplestRule,
}

/// Where outcomes of unprecedented measurements come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Freedom {
    Uniform,
    /// Outcomes read in order from a user-supplied sequence.
    SeededExternal(Vec<usize>),
    /// Uniform over an allowed set.
    Masked(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Precedent count at which sampling from precedents takes over.
    pub threshold: u64,
    pub buildup: Buildup,
    pub freedom: Freedom,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            buildup: Buildup::BornOracle,
            freedom: Freedom::Uniform,
        }
    }
}

impl PolicyConfig {
    pub fn new(threshold: u64, buildup: Buildup, freedom: Freedom) -> Result<Self> {
        let policy = Self {
            threshold,
            buildup,
            freedom,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threshold < 1 {
            return Err(Error::InvalidPolicy("threshold_T must be at least 1".into()));
        }
        match &self.freedom {
            Freedom::Masked(set) if set.is_empty() => Err(Error::EmptyMask),
            Freedom::SeededExternal(seq) if seq.is_empty() => Err(Error::InvalidPolicy(
                "seeded_external needs a nonempty outcome sequence".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn regime(&self, precedents: u64) -> Regime {
        if precedents == 0 {
            Regime::Freedom
        } else if precedents < self.threshold {
            Regime::Buildup
        } else {
            Regime::Precedence
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Freedom,
    Buildup,
    Precedence,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Freedom => "freedom",
            Regime::Buildup => "buildup",
            Regime::Precedence => "precedence",
        }
    }
}

/// Draws index `i` with probability `probs[i]`.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = probs.iter().sum();
    if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || !(total > 0.0) {
        return Err(Error::InvalidDistribution(format!("{probs:?}")));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // Rounding left u at the top edge: return the last outcome with mass.
    Ok(probs.iter().rposition(|&p| p > 0.0).expect("total > 0"))
}

/// One build-up step, independent of any ledger.
///
/// `prefix` holds the precedents so far; its length must be in `1..T`.
pub fn buildup_step<R: Rng + ?Sized>(
    policy: &PolicyConfig,
    prefix: &[usize],
    n_outcomes: usize,
    born: Option<&[f64]>,
    rng: &mut R,
) -> Result<usize> {
    if prefix.is_empty() || prefix.len() as u64 >= policy.threshold {
        return Err(Error::InvalidPrefix(format!(
            "build-up needs 1 <= precedents < {}, got {}",
            policy.threshold,
            prefix.len()
        )));
    }
    match policy.buildup {
        Buildup::Urn => {
            let mut counts = vec![0u64; n_outcomes];
            for &x in prefix {
                *counts.get_mut(x).ok_or(Error::OutcomeOutOfRange {
                    outcome: x,
                    n_outcomes,
                })? += 1;
            }
            Ok(crate::ledger::sample_from_counts(&counts, rng).expect("nonempty prefix"))
        }
        Buildup::BornOracle => {
            let born = born.ok_or(Error::MissingBornVector)?;
            sample_categorical(born, rng)
        }
        Buildup::SimplestRule => {
            let window = &prefix[..prefix.len().min(mdl::MAX_PREFIX)];
            let rule = simplest_rule_induct(window, n_outcomes)?;
            Ok(rule.next_outcome(prefix.len(), rng))
        }
    }
}

/// Everything the engine needs about one (preparation, measurement) pair.
#[derive(Debug, Clone)]
pub struct MeasurementTarget {
    pub prep_key: PreparationKey,
    pub meas_key: MeasurementKey,
    pub n_outcomes: usize,
    pub born: Vec<f64>,
}

impl MeasurementTarget {
    pub fn new(spec: &PreparationSpec, m: &Povm, mode: KeyMode) -> Result<Self> {
        let rho = spec.replay()?;
        if rho.dim() != m.dim() {
            return Err(Error::DimensionMismatch {
                expected: m.dim(),
                found: rho.dim(),
            });
        }
        Ok(Self {
            prep_key: preparation_key(spec, mode)?,
            meas_key: measurement_key(m),
            n_outcomes: m.n_outcomes(),
            born: born_probabilities(&rho, m)?,
        })
    }

    pub fn stream_id(&self) -> StreamId {
        (self.prep_key, self.meas_key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub outcome: usize,
    pub regime: Regime,
}

/// Stateful part of a policy: the external-sequence cursor and a cache of the
/// rule induced from a full 64-outcome window.
#[derive(Debug, Clone)]
pub struct PrecedenceEngine {
    policy: PolicyConfig,
    external_cursor: usize,
    rule_cache: Option<(StreamId, RuleDescription)>,
}

impl PrecedenceEngine {
    pub fn new(policy: PolicyConfig) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            policy,
            external_cursor: 0,
            rule_cache: None,
        })
    }

    pub fn policy(&self) -> &PolicyConfig {
        &self.policy
    }

    /// Outcome for a measurement with no precedent.
    pub fn freedom_source<R: Rng + ?Sized>(&mut self, n_outcomes: usize, rng: &mut R) -> Result<usize> {
        if n_outcomes == 0 {
            return Err(Error::InvalidMeasurement("no outcomes".into()));
        }
        match &self.policy.freedom {
            Freedom::Uniform => Ok(rng.random_range(0..n_outcomes)),
            Freedom::Masked(allowed) => {
                let mut allowed = allowed.clone();
                allowed.sort_unstable();
                allowed.dedup();
                if allowed.is_empty() {
                    return Err(Error::EmptyMask);
                }
                if let Some(&bad) = allowed.iter().find(|&&a| a >= n_outcomes) {
                    return Err(Error::OutcomeOutOfRange {
                        outcome: bad,
                        n_outcomes,
                    });
                }
                Ok(allowed[rng.random_range(0..allowed.len())])
            }
            Freedom::SeededExternal(seq) => {
                let outcome = *seq
                    .get(self.external_cursor)
                    .ok_or(Error::ExternalSourceExhausted(seq.len()))?;
                if outcome >= n_outcomes {
                    return Err(Error::OutcomeOutOfRange {
                        outcome,
                        n_outcomes,
                    });
                }
                self.external_cursor += 1;
                Ok(outcome)
            }
        }
    }

    /// One measurement against `ledger`; the outcome is recorded before returning.
    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        target: &MeasurementTarget,
        ledger: &mut Ledger,
        rng: &mut R,
    ) -> Result<Step> {
        let stream = ledger.stream(&target.prep_key, &target.meas_key);
        let n = stream.map_or(0, |s| s.len()) as u64;
        let regime = self.policy.regime(n);
        let outcome = match regime {
            Regime::Freedom => self.freedom_source(target.n_outcomes, rng)?,
            Regime::Buildup if self.policy.buildup != Buildup::Urn => {
                let prefix = stream.expect("build-up regime has precedents").outcomes();
                if self.policy.buildup == Buildup::SimplestRule && prefix.len() >= mdl::MAX_PREFIX {
                    let id = target.stream_id();
                    let rule = match &self.rule_cache {
                        Some((cached, rule)) if *cached == id => rule.clone(),
                        _ => {
                            let rule = simplest_rule_induct(&prefix[..mdl::MAX_PREFIX], target.n_outcomes)?;
                            self.rule_cache = Some((id, rule.clone()));
                            rule
                        }
                    };
                    rule.next_outcome(prefix.len(), rng)
                } else {
                    buildup_step(&self.policy, prefix, target.n_outcomes, Some(&target.born), rng)?
                }
            }
            // Precedence sampling, and the urn during build-up: a uniform draw
            // from the precedents, taken from the stream's counts.
            Regime::Buildup | Regime::Precedence => stream
                .and_then(|s| s.sample_uniform(rng))
                .expect("precedents exist past the freedom regime"),
        };
        ledger.record_outcome(target.prep_key, target.meas_key, outcome, target.n_outcomes)?;
        Ok(Step { outcome, regime })
    }

    /// Resolves keys and Born probabilities, then calls [`PrecedenceEngine::measure`].
    /// Batch callers should build a [`MeasurementTarget`] once instead.
    pub fn measure_with_precedence<R: Rng + ?Sized>(
        &mut self,
        spec: &PreparationSpec,
        m: &Povm,
        ledger: &mut Ledger,
        rng: &mut R,
    ) -> Result<Step> {
        let target = MeasurementTarget::new(spec, m, KeyMode::Syntactic)?;
        self.measure(&target, ledger, rng)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RegimeCounts {
    pub freedom: u64,
    pub buildup: u64,
    pub precedence: u64,
}

impl RegimeCounts {
    pub(crate) fn add(&mut self, r: Regime) {
        match r {
            Regime::Freedom => self.freedom += 1,
            Regime::Buildup => self.buildup += 1,
            Regime::Precedence => self.precedence += 1,
        }
    }
}

/// Output of [`run_stream`].
#[derive(Debug, Clone)]
pub struct StreamRun {
    pub outcomes: Vec<usize>,
    pub regimes: Vec<Regime>,
    pub regime_counts: RegimeCounts,
    /// Counts of this run's outcomes only.
    pub run_counts: Vec<u64>,
    /// Counts over the whole stream, including precedents that were already in
    /// the ledger.
    pub stream_counts: Vec<u64>,
}

impl StreamRun {
    /// Empirical distribution over the whole stream.
    pub fn empirical(&self) -> Vec<f64> {
        let total: u64 = self.stream_counts.iter().sum();
        self.stream_counts
            .iter()
            .map(|&c| c as f64 / total.max(1) as f64)
            .collect()
    }
}

/// Applies the engine `n_steps` times to one stream.
pub fn run_stream<R: Rng + ?Sized>(
    target: &MeasurementTarget,
    policy: &PolicyConfig,
    n_steps: usize,
    ledger: &mut Ledger,
    rng: &mut R,
) -> Result<StreamRun> {
    if n_steps == 0 {
        return Err(Error::InvalidPolicy("n_steps must be at least 1".into()));
    }
    let mut engine = PrecedenceEngine::new(policy.clone())?;
    let mut outcomes = Vec::with_capacity(n_steps);
    let mut regimes = Vec::with_capacity(n_steps);
    let mut regime_counts = RegimeCounts::default();
    let mut run_counts = vec![0u64; target.n_outcomes];
    for _ in 0..n_steps {
        let step = engine.measure(target, ledger, rng)?;
        regime_counts.add(step.regime);
        run_counts[step.outcome] += 1;
        outcomes.push(step.outcome);
        regimes.push(step.regime);
    }
    let mut stream_counts = vec![0u64; target.n_outcomes];
    if let Some(s) = ledger.stream(&target.prep_key, &target.meas_key) {
        for (i, &c) in s.counts().iter().enumerate() {
            stream_counts[i] = c;
        }
    }
    Ok(StreamRun {
        outcomes,
        regimes,
        regime_counts,
        run_counts,
        stream_counts,
    })
}

/// Independent RNG for stream `stream_id` of a run seeded with `master_seed`.
/// Results do not depend on the order in which streams are scheduled.
pub fn stream_rng(master_seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::PrepStep;
    use crate::qcore::{CMatrix, C64};

    fn plus_spec() -> PreparationSpec {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PreparationSpec::basis(2, 0).then(PrepStep::Transform(CMatrix::from_row_slice(
            2,
            2,
            &[C64::from(h), C64::from(h), C64::from(h), C64::from(-h)],
        )))
    }

    fn qubit_target() -> MeasurementTarget {
        MeasurementTarget::new(&plus_spec(), &Povm::computational_basis(2), KeyMode::Syntactic).unwrap()
    }

    #[test]
    fn masked_freedom_forces_outcome() {
        let policy = PolicyConfig::new(10, Buildup::Urn, Freedom::Masked(vec![2])).unwrap();
        let mut engine = PrecedenceEngine::new(policy).unwrap();
        let spec = PreparationSpec::basis(3, 0);
        let mut ledger = Ledger::new();
        let mut rng = stream_rng(1, 0);
        let step = engine
            .measure_with_precedence(&spec, &Povm::computational_basis(3), &mut ledger, &mut rng)
            .unwrap();
        assert_eq!(step, Step { outcome: 2, regime: Regime::Freedom });
        assert_eq!(ledger.len(), 1);
    }

    #[test]
    fn empty_mask_is_rejected() {
        assert!(matches!(
            PolicyConfig::new(10, Buildup::Urn, Freedom::Masked(vec![])),
            Err(Error::EmptyMask)
        ));
        assert!(PolicyConfig::new(0, Buildup::Urn, Freedom::Uniform).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let mut engine = PrecedenceEngine::new(PolicyConfig::default()).unwrap();
        let err = engine
            .measure_with_precedence(
                &PreparationSpec::basis(2, 0),
                &Povm::computational_basis(3),
                &mut Ledger::new(),
                &mut stream_rng(0, 0),
            )
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn threshold_one_urn_locks_in() {
        let policy = PolicyConfig::new(1, Buildup::Urn, Freedom::Uniform).unwrap();
        let target = qubit_target();
        for seed in 0..20 {
            let mut ledger = Ledger::new();
            let run = run_stream(&target, &policy, 10_000, &mut ledger, &mut stream_rng(seed, 0)).unwrap();
            let first = run.outcomes[0];
            assert!(run.outcomes.iter().all(|&o| o == first));
            assert_eq!(run.regime_counts, RegimeCounts { freedom: 1, buildup: 0, precedence: 9_999 });
        }
    }

    #[test]
    fn precedence_sampling_tracks_prefill() {
        let target = qubit_target();
        let mut ledger = Ledger::new();
        for i in 0..1000 {
            let o = usize::from(i >= 700);
            ledger.record_outcome(target.prep_key, target.meas_key, o, 2).unwrap();
        }
        let policy = PolicyConfig::new(1000, Buildup::Urn, Freedom::Uniform).unwrap();
        let mut engine = PrecedenceEngine::new(policy).unwrap();
        let mut rng = stream_rng(2, 0);
        let mut zeros = 0;
        let stream = ledger.stream(&target.prep_key, &target.meas_key).unwrap().clone();
        for _ in 0..10_000 {
            // Draw against the fixed multiset; recording would drift it.
            zeros += usize::from(stream.sample_uniform(&mut rng).unwrap() == 0);
        }
        let f = zeros as f64 / 1e4;
        assert!((f - 0.7).abs() <= 0.015, "{f}");
        let step = engine.measure(&target, &mut ledger, &mut rng).unwrap();
        assert_eq!(step.regime, Regime::Precedence);
    }

    #[test]
    fn uniform_freedom_frequencies() {
        let mut engine = PrecedenceEngine::new(PolicyConfig::default()).unwrap();
        let mut rng = stream_rng(3, 0);
        let mut counts = [0u32; 4];
        for _ in 0..100_000 {
            counts[engine.freedom_source(4, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((f64::from(c) / 1e5 - 0.25).abs() <= 0.005);
        }
    }

    #[test]
    fn masked_and_external_freedom() {
        let policy = PolicyConfig::new(5, Buildup::Urn, Freedom::Masked(vec![1, 3])).unwrap();
        let mut engine = PrecedenceEngine::new(policy).unwrap();
        let mut rng = stream_rng(4, 0);
        let mut seen = [false; 4];
        for _ in 0..10_000 {
            let o = engine.freedom_source(4, &mut rng).unwrap();
            assert!(o == 1 || o == 3);
            seen[o] = true;
        }
        assert!(seen[1] && seen[3]);
        assert!(matches!(
            engine.freedom_source(2, &mut rng),
            Err(Error::OutcomeOutOfRange { outcome: 3, .. })
        ));

        let policy = PolicyConfig::new(5, Buildup::Urn, Freedom::SeededExternal(vec![2, 0, 1])).unwrap();
        let mut engine = PrecedenceEngine::new(policy).unwrap();
        let got: Vec<usize> = (0..3).map(|_| engine.freedom_source(3, &mut rng).unwrap()).collect();
        assert_eq!(got, vec![2, 0, 1]);
        assert!(matches!(
            engine.freedom_source(3, &mut rng),
            Err(Error::ExternalSourceExhausted(3))
        ));
    }

    #[test]
    fn buildup_policies() {
        let mut rng = stream_rng(5, 0);
        let urn = PolicyConfig::new(10, Buildup::Urn, Freedom::Uniform).unwrap();
        for _ in 0..100 {
            assert_eq!(buildup_step(&urn, &[1], 2, None, &mut rng).unwrap(), 1);
        }

        let born = PolicyConfig::new(u64::MAX, Buildup::BornOracle, Freedom::Uniform).unwrap();
        let mut zeros = 0;
        for _ in 0..10_000 {
            zeros += usize::from(buildup_step(&born, &[0], 2, Some(&[0.5, 0.5]), &mut rng).unwrap() == 0);
        }
        assert!((zeros as f64 / 1e4 - 0.5).abs() <= 0.015);
        assert!(matches!(
            buildup_step(&born, &[0], 2, None, &mut rng),
            Err(Error::MissingBornVector)
        ));

        let mdl = PolicyConfig::new(10, Buildup::SimplestRule, Freedom::Uniform).unwrap();
        assert_eq!(buildup_step(&mdl, &[0, 1, 0, 1], 2, None, &mut rng).unwrap(), 0);
        assert!(buildup_step(&mdl, &[0; 10], 2, None, &mut rng).is_err());
        assert!(buildup_step(&mdl, &[], 2, None, &mut rng).is_err());
    }

    #[test]
    fn regime_arithmetic() {
        let target = qubit_target();
        let mut ledger = Ledger::new();
        let run = run_stream(&target, &PolicyConfig::default(), 1, &mut ledger, &mut stream_rng(6, 0)).unwrap();
        assert_eq!(run.regime_counts, RegimeCounts { freedom: 1, buildup: 0, precedence: 0 });

        let policy = PolicyConfig::new(100, Buildup::BornOracle, Freedom::Uniform).unwrap();
        let mut ledger = Ledger::new();
        let run = run_stream(&target, &policy, 1000, &mut ledger, &mut stream_rng(6, 1)).unwrap();
        assert_eq!(run.regime_counts, RegimeCounts { freedom: 1, buildup: 99, precedence: 900 });
        assert_eq!(ledger.len(), 1000);
        assert_eq!(run.run_counts.iter().sum::<u64>(), 1000);
    }

    #[test]
    fn simplest_rule_buildup_past_window() {
        // Beyond 64 precedents the rule from the first 64 keeps being continued.
        let target = qubit_target();
        let policy = PolicyConfig::new(500, Buildup::SimplestRule, Freedom::SeededExternal(vec![1])).unwrap();
        let mut ledger = Ledger::new();
        let run = run_stream(&target, &policy, 200, &mut ledger, &mut stream_rng(7, 0)).unwrap();
        assert!(run.outcomes.iter().all(|&o| o == 1));
    }

    #[test]
    fn seed_determinism() {
        let target = qubit_target();
        let policy = PolicyConfig::new(50, Buildup::BornOracle, Freedom::Uniform).unwrap();
        let a = run_stream(&target, &policy, 500, &mut Ledger::new(), &mut stream_rng(8, 3)).unwrap();
        let b = run_stream(&target, &policy, 500, &mut Ledger::new(), &mut stream_rng(8, 3)).unwrap();
        assert_eq!(a.outcomes, b.outcomes);
        let c = run_stream(&target, &policy, 500, &mut Ledger::new(), &mut stream_rng(8, 4)).unwrap();
        assert_ne!(a.outcomes, c.outcomes);
    }

    #[test]
    fn categorical_sampling_rejects_bad_vectors() {
        let mut rng = stream_rng(9, 0);
        assert!(sample_categorical(&[], &mut rng).is_err());
        assert!(sample_categorical(&[0.0, 0.0], &mut rng).is_err());
        assert!(sample_categorical(&[f64::NAN, 1.0], &mut rng).is_err());
        assert_eq!(sample_categorical(&[0.0, 1.0], &mut rng).unwrap(), 1);
    }
}
