//! Studies built on the precedence engine.
//!
//! Single-stream studies take the caller's RNG directly. Studies made of many
//! independent runs draw one master seed from it and give run `i` the stream
//! `stream_rng(master, i)`, so results do not depend on thread scheduling.

pub mod slit;
pub mod stats;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    run_stream, stream_rng, MeasurementTarget, PolicyConfig, PrecedenceEngine, Regime, RegimeCounts,
};
use crate::error::{Error, Result};
use crate::freedom::{informationally_complete_povm, reconstruct_state};
use crate::ledger::{KeyMode, Ledger, PreparationSpec};
use crate::qcore::{max_abs, PureState};

pub use slit::{FarField, SlitModel};
pub use stats::{chi_square_gof, chi_square_homogeneity, normalize, tv_distance};

/// Records outcomes in exact Born proportions (largest-remainder rounding),
/// grouped by outcome.
pub fn prefill_exact(ledger: &mut Ledger, target: &MeasurementTarget, total: usize) -> Result<()> {
    let quotas: Vec<f64> = target.born.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    for (outcome, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            ledger.record_outcome(target.prep_key, target.meas_key, outcome, target.n_outcomes)?;
        }
    }
    Ok(())
}

/// Records `count` independent Born draws.
pub fn prefill_born_iid<R: Rng + ?Sized>(
    ledger: &mut Ledger,
    target: &MeasurementTarget,
    count: usize,
    rng: &mut R,
) -> Result<()> {
    for _ in 0..count {
        let o = crate::dynamics::sample_categorical(&target.born, rng)?;
        ledger.record_outcome(target.prep_key, target.meas_key, o, target.n_outcomes)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DoubleSlitRun {
    /// Bin of each photon, in arrival order.
    pub sequence: Vec<usize>,
    pub regimes: Vec<Regime>,
    pub histogram: Vec<u64>,
    pub expected: Vec<f64>,
    pub tv_distance: f64,
    pub regime_counts: RegimeCounts,
}

/// Sends `n_photons` through the precedence engine for the slit model's
/// preparation and bin measurement.
pub fn run_double_slit<R: Rng + ?Sized>(
    model: &SlitModel,
    n_photons: usize,
    policy: &PolicyConfig,
    ledger: &mut Ledger,
    rng: &mut R,
) -> Result<DoubleSlitRun> {
    let target = MeasurementTarget::new(&model.preparation()?, &model.measurement(), KeyMode::Syntactic)?;
    let run = run_stream(&target, policy, n_photons, ledger, rng)?;
    let expected = model.probabilities();
    let tv = tv_distance(&normalize(&run.run_counts), &expected)?;
    Ok(DoubleSlitRun {
        sequence: run.outcomes,
        regimes: run.regimes,
        histogram: run.run_counts,
        expected,
        tv_distance: tv,
        regime_counts: run.regime_counts,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PermutationReport {
    pub draws_per_permutation: usize,
    /// Next-outcome distribution implied by the precedent counts; the same for
    /// every ordering.
    pub next_outcome_distribution: Vec<f64>,
    pub p_values: Vec<f64>,
    /// `min(1, p · n_perms)`.
    pub corrected_p_values: Vec<f64>,
    pub alpha: f64,
    pub all_pass: bool,
}

/// Replays `sequence` in `n_perms` random orders and compares next-outcome
/// sampling against the original order with a chi-square homogeneity test.
pub fn permutation_study<R: Rng + ?Sized>(
    sequence: &[usize],
    n_outcomes: usize,
    n_perms: usize,
    draws: usize,
    rng: &mut R,
) -> Result<PermutationReport> {
    if sequence.len() < 2 {
        return Err(Error::InvalidPrefix("permutation study needs at least 2 outcomes".into()));
    }
    if n_perms == 0 || draws == 0 {
        return Err(Error::InvalidPolicy("n_perms and draws must be positive".into()));
    }
    let target = MeasurementTarget::new(
        &PreparationSpec::basis(n_outcomes, 0),
        &crate::qcore::Povm::computational_basis(n_outcomes),
        KeyMode::Syntactic,
    )?;
    let master: u64 = rng.random();
    let mut orders = Vec::with_capacity(n_perms + 1);
    orders.push(sequence.to_vec());
    for _ in 0..n_perms {
        let mut s = sequence.to_vec();
        s.shuffle(rng);
        orders.push(s);
    }

    let samples = orders
        .par_iter()
        .enumerate()
        .map(|(i, order)| {
            let mut ledger = Ledger::new();
            for &o in order {
                ledger.record_outcome(target.prep_key, target.meas_key, o, n_outcomes)?;
            }
            let stream = ledger
                .stream(&target.prep_key, &target.meas_key)
                .expect("stream was just filled");
            let mut r = stream_rng(master, i as u64);
            let mut counts = vec![0u64; n_outcomes];
            for _ in 0..draws {
                counts[stream.sample_uniform(&mut r).expect("nonempty")] += 1;
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut occurrences = vec![0u64; n_outcomes];
    for &o in sequence {
        occurrences[o] += 1;
    }
    let alpha = 0.001;
    let mut p_values = Vec::with_capacity(n_perms);
    for s in &samples[1..] {
        p_values.push(chi_square_homogeneity(&samples[0], s)?.1);
    }
    let corrected: Vec<f64> = p_values.iter().map(|p| (p * n_perms as f64).min(1.0)).collect();
    Ok(PermutationReport {
        draws_per_permutation: draws,
        next_outcome_distribution: normalize(&occurrences),
        all_pass: corrected.iter().all(|&p| p > alpha),
        p_values,
        corrected_p_values: corrected,
        alpha,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LockInRun {
    pub first_outcome: usize,
    pub locked: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LockInReport {
    pub n_runs: usize,
    pub run_length: usize,
    pub locked_runs: usize,
    pub locked_fraction: f64,
    pub runs: Vec<LockInRun>,
}

/// Fraction of independent fresh-ledger runs whose outcomes all equal the first.
pub fn lock_in_study<R: Rng + ?Sized>(
    target: &MeasurementTarget,
    policy: &PolicyConfig,
    n_runs: usize,
    run_length: usize,
    rng: &mut R,
) -> Result<LockInReport> {
    if n_runs == 0 {
        return Err(Error::InvalidPolicy("n_runs must be at least 1".into()));
    }
    let master: u64 = rng.random();
    let runs = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut ledger = Ledger::new();
            let run = run_stream(target, policy, run_length, &mut ledger, &mut stream_rng(master, i as u64))?;
            let first = run.outcomes[0];
            Ok(LockInRun {
                first_outcome: first,
                locked: run.outcomes.iter().all(|&o| o == first),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let locked_runs = runs.iter().filter(|r| r.locked).count();
    Ok(LockInReport {
        n_runs,
        run_length,
        locked_runs,
        locked_fraction: locked_runs as f64 / n_runs as f64,
        runs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub steps: Vec<usize>,
    /// TV distance between the stream's empirical distribution and the Born vector.
    pub tv_distance: Vec<f64>,
    /// Regime of the last step taken at each checkpoint (`None` at step 0).
    pub regimes: Vec<Option<Regime>>,
    /// First step index of each regime entered during the run.
    pub regime_boundaries: Vec<(usize, Regime)>,
    pub born: Vec<f64>,
    pub final_counts: Vec<u64>,
    pub regime_counts: RegimeCounts,
}

/// Runs `n_steps` measurements and records the TV distance of the stream's
/// running empirical distribution (precedents already in the ledger included)
/// from the Born vector at each checkpoint. Checkpoints at which the stream is
/// still empty are skipped.
pub fn convergence_study<R: Rng + ?Sized>(
    target: &MeasurementTarget,
    policy: &PolicyConfig,
    n_steps: usize,
    checkpoints: &[usize],
    ledger: &mut Ledger,
    rng: &mut R,
) -> Result<ConvergenceReport> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidPolicy("checkpoints must be strictly increasing".into()));
    }
    if let Some(&last) = checkpoints.last() {
        if last > n_steps {
            return Err(Error::InvalidPolicy(format!(
                "checkpoint {last} beyond n_steps {n_steps}"
            )));
        }
    }
    let mut engine = PrecedenceEngine::new(policy.clone())?;
    let mut counts = vec![0u64; target.n_outcomes];
    if let Some(s) = ledger.stream(&target.prep_key, &target.meas_key) {
        counts[..s.counts().len()].copy_from_slice(s.counts());
    }

    let mut report = ConvergenceReport {
        steps: Vec::new(),
        tv_distance: Vec::new(),
        regimes: Vec::new(),
        regime_boundaries: Vec::new(),
        born: target.born.clone(),
        final_counts: Vec::new(),
        regime_counts: RegimeCounts::default(),
    };
    let mut next_cp = checkpoints.iter().copied().peekable();
    let mut last_regime: Option<Regime> = None;
    let record = |step: usize, counts: &[u64], regime: Option<Regime>, report: &mut ConvergenceReport| -> Result<()> {
        if counts.iter().sum::<u64>() > 0 {
            report.steps.push(step);
            report.tv_distance.push(tv_distance(&normalize(counts), &target.born)?);
            report.regimes.push(regime);
        }
        Ok(())
    };
    if next_cp.peek() == Some(&0) {
        next_cp.next();
        record(0, &counts, None, &mut report)?;
    }
    for step in 1..=n_steps {
        let s = engine.measure(target, ledger, rng)?;
        counts[s.outcome] += 1;
        report.regime_counts.add(s.regime);
        if last_regime != Some(s.regime) {
            report.regime_boundaries.push((step - 1, s.regime));
            last_regime = Some(s.regime);
        }
        if next_cp.peek() == Some(&step) {
            next_cp.next();
            record(step, &counts, Some(s.regime), &mut report)?;
        }
    }
    report.final_counts = counts;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct TomographyStateResult {
    pub dim: usize,
    pub shots_per_measurement: usize,
    /// Max entry-wise error of reconstruction from exact Born statistics.
    pub exact_error: f64,
    /// Trace distance of reconstruction from precedence-sampled statistics.
    pub sampled_trace_distance: f64,
    pub sampled_fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TomographyReport {
    pub n_measurements: usize,
    pub states: Vec<TomographyStateResult>,
}

/// Reconstructs random pure states from outcome ensembles built by the
/// precedence engine, one stream per informationally complete measurement.
pub fn tomography_study<R: Rng + ?Sized>(
    dim: usize,
    n_states: usize,
    shots: usize,
    policy: &PolicyConfig,
    rng: &mut R,
) -> Result<TomographyReport> {
    let mset = informationally_complete_povm(dim)?;
    let mut states = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let psi = crate::qcore::random::haar_pure_state(dim, rng);
        let spec = preparation_for(&psi)?;
        let rho = spec.replay()?;
        let exact = reconstruct_state(&mset.grouped_statistics(&rho)?, &mset)?;
        let exact_error = max_abs(&(exact.matrix() - rho.matrix()));

        let mut ledger = Ledger::new();
        let mut sampled = Vec::with_capacity(mset.povms().len());
        for povm in mset.povms() {
            let target = MeasurementTarget::new(&spec, povm, KeyMode::Syntactic)?;
            let run = run_stream(&target, policy, shots, &mut ledger, rng)?;
            sampled.push(run.empirical());
        }
        let estimate = reconstruct_state(&sampled, &mset)?;
        let diff = estimate.matrix() - rho.matrix();
        let trace_distance = 0.5
            * crate::qcore::hermitian_eigenvalues(&diff)
                .iter()
                .map(|l| l.abs())
                .sum::<f64>();
        let v = psi.amplitudes();
        let fidelity = (v.adjoint() * estimate.matrix() * v)[(0, 0)].re;
        states.push(TomographyStateResult {
            dim,
            shots_per_measurement: shots,
            exact_error,
            sampled_trace_distance: trace_distance,
            sampled_fidelity: fidelity,
        });
    }
    Ok(TomographyReport {
        n_measurements: mset.povms().len(),
        states,
    })
}

/// `|0⟩` followed by a witness unitary onto `psi`.
pub fn preparation_for(psi: &PureState) -> Result<PreparationSpec> {
    let u = crate::freedom::transitivity_witness(&PureState::basis(psi.dim(), 0)?, psi)?;
    Ok(PreparationSpec::basis(psi.dim(), 0).then(crate::ledger::PrepStep::Transform(u.matrix().clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Buildup, Freedom};
    use crate::qcore::Povm;

    fn plus_target() -> MeasurementTarget {
        let spec = preparation_for(&PureState::from_real(&[1.0, 1.0]).unwrap()).unwrap();
        MeasurementTarget::new(&spec, &Povm::computational_basis(2), KeyMode::Syntactic).unwrap()
    }

    #[test]
    fn exact_prefill_proportions() {
        let t = plus_target();
        let mut ledger = Ledger::new();
        prefill_exact(&mut ledger, &t, 1001).unwrap();
        let s = ledger.stream(&t.prep_key, &t.meas_key).unwrap();
        assert_eq!(s.len(), 1001);
        let c = s.counts();
        assert!(c[0].abs_diff(c[1]) == 1);
    }

    #[test]
    fn convergence_from_exact_prefill_starts_at_zero() {
        let t = plus_target();
        let mut ledger = Ledger::new();
        prefill_exact(&mut ledger, &t, 1000).unwrap();
        let policy = PolicyConfig::default();
        let mut rng = stream_rng(1, 0);
        let r = convergence_study(&t, &policy, 100, &[0, 50, 100], &mut ledger, &mut rng).unwrap();
        assert_eq!(r.steps, vec![0, 50, 100]);
        assert!(r.tv_distance[0] < 1e-12);
        assert_eq!(r.regime_boundaries, vec![(0, Regime::Precedence)]);
    }

    #[test]
    fn convergence_rejects_bad_checkpoints() {
        let t = plus_target();
        let mut rng = stream_rng(2, 0);
        let policy = PolicyConfig::default();
        assert!(convergence_study(&t, &policy, 10, &[5, 5], &mut Ledger::new(), &mut rng).is_err());
        assert!(convergence_study(&t, &policy, 10, &[20], &mut Ledger::new(), &mut rng).is_err());
    }

    #[test]
    fn permutation_trivial_cases() {
        let mut rng = stream_rng(3, 0);
        let r = permutation_study(&[1, 1, 1, 1], 2, 5, 1000, &mut rng).unwrap();
        assert!(r.p_values.iter().all(|&p| p == 1.0));
        let r = permutation_study(&[0, 1], 2, 2, 1000, &mut rng).unwrap();
        assert_eq!(r.next_outcome_distribution, vec![0.5, 0.5]);
        assert!(permutation_study(&[0], 2, 2, 10, &mut rng).is_err());
    }

    #[test]
    fn lock_in_urn_threshold_one() {
        let t = plus_target();
        let policy = PolicyConfig::new(1, Buildup::Urn, Freedom::Uniform).unwrap();
        let r = lock_in_study(&t, &policy, 50, 500, &mut stream_rng(4, 0)).unwrap();
        assert_eq!(r.locked_runs, 50);
        assert_eq!(r.locked_fraction, 1.0);
    }

    #[test]
    fn tomography_from_precedents() {
        let policy = PolicyConfig::new(u64::MAX, Buildup::BornOracle, Freedom::Uniform).unwrap();
        let r = tomography_study(2, 3, 4000, &policy, &mut stream_rng(5, 0)).unwrap();
        assert_eq!(r.n_measurements, 3);
        for s in &r.states {
            assert!(s.exact_error < 1e-8);
            assert!(s.sampled_trace_distance < 0.1, "{s:?}");
            assert!(s.sampled_fidelity > 0.95);
        }
    }
}
