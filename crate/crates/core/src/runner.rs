//! Executes a [`RunConfig`] and writes its outputs.
//!
//! A run directory holds `config.json` (the config with its seed filled in),
//! `summary.json`, study-specific CSV files and, for single-stream studies,
//! `ledger.jsonl`. Apart from ledger wall times, every file is a function of
//! the echoed config alone.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde_json::{json, Value};

use crate::config::{pure_state, PrefillKind, RunConfig, Study};
use crate::dynamics::{stream_rng, MeasurementTarget, PolicyConfig, Regime};
use crate::error::{Error, Result};
use crate::experiments::{self, normalize, tv_distance, SlitModel};
use crate::freedom::postulate_report;
use crate::ledger::{KeyMode, Ledger};
use crate::qcore::Povm;

pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SERIES_FILE: &str = "series.csv";
pub const LEDGER_FILE: &str = "ledger.jsonl";

/// Checkpoints used when a config gives none.
const DEFAULT_CHECKPOINTS: usize = 100;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub seed: u64,
    pub summary: Value,
    /// Names of the files written, relative to `dir`.
    pub files: Vec<String>,
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming into {}", path.display()), e))
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl serde::Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn ledger(&mut self, ledger: &Ledger) -> Result<()> {
        ledger.save(&self.dir.join(LEDGER_FILE))?;
        self.files.push(LEDGER_FILE.to_string());
        Ok(())
    }
}

/// Runs the study described by `config`, writing into `out_dir` (created if
/// needed). The config must already carry a seed; see
/// [`RunConfig::resolve_seed`].
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    let seed = config
        .seed
        .ok_or_else(|| Error::Config("seed must be resolved before running".into()))?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let mut echo = config.clone();
    echo.output_dir = out_dir.to_path_buf();

    let mut out = Outputs {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    out.json(CONFIG_FILE, &echo)?;

    let policy = config.policy.to_policy()?;
    let results = match config.study {
        Study::DoubleSlit => double_slit(config, &policy, seed, &mut out)?,
        Study::Convergence => convergence(config, &policy, seed, &mut out)?,
        Study::LockIn => lock_in(config, &policy, seed, &mut out)?,
        Study::Permutation => permutation(config, seed, &mut out)?,
        Study::Postulates => {
            let s = config.postulates.as_ref().expect("validated");
            serde_json::to_value(postulate_report(s.max_n, seed)?)?
        }
        Study::Tomography => tomography(config, &policy, seed, &mut out)?,
    };
    let ledger = out.files.iter().any(|f| f == LEDGER_FILE).then_some(LEDGER_FILE);
    let summary = json!({
        "study": config.study.as_str(),
        "seed": seed,
        "config": CONFIG_FILE,
        "ledger": ledger,
        "policy": config.policy,
        "results": results,
    });
    out.json(SUMMARY_FILE, &summary)?;
    Ok(RunOutput {
        dir: out.dir,
        seed,
        summary,
        files: out.files,
    })
}

fn initial_ledger(config: &RunConfig) -> Result<Ledger> {
    match &config.ledger_path {
        Some(p) => Ledger::load(p),
        None => Ok(Ledger::new()),
    }
}

fn evenly_spaced(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..=DEFAULT_CHECKPOINTS).map(|i| i * n / DEFAULT_CHECKPOINTS).collect();
    v.dedup();
    v
}

fn regime_label(r: Option<Regime>) -> &'static str {
    r.map_or("", Regime::as_str)
}

fn double_slit(config: &RunConfig, policy: &PolicyConfig, seed: u64, out: &mut Outputs) -> Result<Value> {
    let s = config.double_slit.as_ref().expect("validated");
    let model = SlitModel::far_field(&s.geometry)?.with_path_weights(s.path_weights)?;
    let mut ledger = initial_ledger(config)?;
    let mut rng = stream_rng(seed, 0);
    let run = experiments::run_double_slit(&model, s.n_photons, policy, &mut ledger, &mut rng)?;

    let checkpoints = s.checkpoints.clone().unwrap_or_else(|| evenly_spaced(s.n_photons));
    let mut series = String::from("step,tv_distance,regime\n");
    let mut counts = vec![0u64; model.n_bins];
    let mut cps = checkpoints.iter().peekable();
    for step in 0..=s.n_photons {
        if step > 0 {
            counts[run.sequence[step - 1]] += 1;
        }
        if cps.peek() == Some(&&step) {
            cps.next();
            if step > 0 {
                let tv = tv_distance(&normalize(&counts), &run.expected)?;
                writeln!(series, "{step},{tv},{}", run.regimes[step - 1].as_str()).unwrap();
            }
        }
    }
    out.write(SERIES_FILE, series.as_bytes())?;

    let mut hist = String::from("bin,count,expected_probability,envelope\n");
    for j in 0..model.n_bins {
        writeln!(hist, "{j},{},{},{}", run.histogram[j], run.expected[j], model.envelope[j]).unwrap();
    }
    out.write("histogram.csv", hist.as_bytes())?;
    out.ledger(&ledger)?;

    let envelope_total: f64 = model.envelope.iter().sum();
    let envelope: Vec<f64> = model.envelope.iter().map(|e| e / envelope_total).collect();
    let empirical = normalize(&run.histogram);
    let (chi2, p) = experiments::chi_square_gof(&run.histogram, &run.expected)?;
    Ok(json!({
        "n_photons": s.n_photons,
        "n_bins": model.n_bins,
        "tv_distance": run.tv_distance,
        "tv_distance_from_envelope": tv_distance(&empirical, &envelope)?,
        "chi_square": chi2,
        "chi_square_p_value": p,
        "regime_counts": run.regime_counts,
    }))
}

fn state_target(amps: &crate::config::Amplitudes) -> Result<MeasurementTarget> {
    let psi = pure_state(amps)?;
    let spec = experiments::preparation_for(&psi)?;
    MeasurementTarget::new(&spec, &Povm::computational_basis(psi.dim()), KeyMode::Syntactic)
}

fn convergence(config: &RunConfig, policy: &PolicyConfig, seed: u64, out: &mut Outputs) -> Result<Value> {
    let s = config.convergence.as_ref().expect("validated");
    let target = state_target(&s.amplitudes)?;
    let mut ledger = initial_ledger(config)?;
    let mut rng = stream_rng(seed, 0);
    if let Some(prefill) = &s.prefill {
        match prefill.kind {
            PrefillKind::Exact => experiments::prefill_exact(&mut ledger, &target, prefill.count)?,
            PrefillKind::BornIid => experiments::prefill_born_iid(&mut ledger, &target, prefill.count, &mut rng)?,
        }
    }
    let checkpoints = s.checkpoints.clone().unwrap_or_else(|| evenly_spaced(s.n_steps));
    let report = experiments::convergence_study(&target, policy, s.n_steps, &checkpoints, &mut ledger, &mut rng)?;

    let mut series = String::from("step,tv_distance,regime\n");
    for i in 0..report.steps.len() {
        writeln!(series, "{},{},{}", report.steps[i], report.tv_distance[i], regime_label(report.regimes[i])).unwrap();
    }
    out.write(SERIES_FILE, series.as_bytes())?;
    out.ledger(&ledger)?;

    let boundaries: Vec<Value> = report
        .regime_boundaries
        .iter()
        .map(|(step, r)| json!({"step": step, "regime": r.as_str()}))
        .collect();
    Ok(json!({
        "n_steps": s.n_steps,
        "prefill": s.prefill,
        "born": report.born,
        "final_counts": report.final_counts,
        "final_tv_distance": report.tv_distance.last(),
        "regime_counts": report.regime_counts,
        "regime_boundaries": boundaries,
    }))
}

fn lock_in(config: &RunConfig, policy: &PolicyConfig, seed: u64, out: &mut Outputs) -> Result<Value> {
    let s = config.lock_in.as_ref().expect("validated");
    let target = state_target(&s.amplitudes)?;
    let report = experiments::lock_in_study(&target, policy, s.n_runs, s.run_length, &mut stream_rng(seed, 0))?;
    let mut csv = String::from("run,first_outcome,locked\n");
    for (i, r) in report.runs.iter().enumerate() {
        writeln!(csv, "{i},{},{}", r.first_outcome, r.locked).unwrap();
    }
    out.write("runs.csv", csv.as_bytes())?;
    Ok(json!({
        "n_runs": report.n_runs,
        "run_length": report.run_length,
        "locked_runs": report.locked_runs,
        "locked_fraction": report.locked_fraction,
    }))
}

fn permutation(config: &RunConfig, seed: u64, out: &mut Outputs) -> Result<Value> {
    let s = config.permutation.as_ref().expect("validated");
    let mut rng = stream_rng(seed, 0);
    let sequence = match (&s.sequence, s.length) {
        (Some(seq), _) => seq.clone(),
        (None, Some(len)) => (0..len).map(|_| rng.random_range(0..s.n_outcomes)).collect(),
        (None, None) => unreachable!("validated"),
    };
    let report = experiments::permutation_study(&sequence, s.n_outcomes, s.n_perms, s.draws, &mut rng)?;
    let mut csv = String::from("permutation,p_value,corrected_p_value\n");
    for (i, (p, c)) in report.p_values.iter().zip(&report.corrected_p_values).enumerate() {
        writeln!(csv, "{},{p},{c}", i + 1).unwrap();
    }
    out.write("permutations.csv", csv.as_bytes())?;
    Ok(json!({
        "sequence_length": sequence.len(),
        "n_perms": s.n_perms,
        "draws_per_permutation": report.draws_per_permutation,
        "next_outcome_distribution": report.next_outcome_distribution,
        "min_p_value": report.p_values.iter().copied().fold(1.0, f64::min),
        "min_corrected_p_value": report.corrected_p_values.iter().copied().fold(1.0, f64::min),
        "alpha": report.alpha,
        "all_pass": report.all_pass,
    }))
}

fn tomography(config: &RunConfig, policy: &PolicyConfig, seed: u64, out: &mut Outputs) -> Result<Value> {
    let s = config.tomography.as_ref().expect("validated");
    let report = experiments::tomography_study(s.dim, s.n_states, s.shots, policy, &mut stream_rng(seed, 0))?;
    let mut csv = String::from("state,exact_error,trace_distance,fidelity\n");
    for (i, r) in report.states.iter().enumerate() {
        writeln!(csv, "{i},{},{},{}", r.exact_error, r.sampled_trace_distance, r.sampled_fidelity).unwrap();
    }
    out.write("states.csv", csv.as_bytes())?;
    let max = |f: fn(&experiments::TomographyStateResult) -> f64| report.states.iter().map(f).fold(0.0, f64::max);
    let mean_fid = report.states.iter().map(|r| r.sampled_fidelity).sum::<f64>() / report.states.len() as f64;
    Ok(json!({
        "dim": s.dim,
        "n_states": s.n_states,
        "shots_per_measurement": s.shots,
        "n_measurements": report.n_measurements,
        "max_exact_error": max(|r| r.exact_error),
        "max_trace_distance": max(|r| r.sampled_trace_distance),
        "mean_fidelity": mean_fid,
    }))
}
