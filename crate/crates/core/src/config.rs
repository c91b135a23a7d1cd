//! Run configuration: a strict JSON schema with one section per study.

use std::fmt;
use std::path::PathBuf;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::dynamics::{Buildup, Freedom, PolicyConfig, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::experiments::FarField;
use crate::qcore::{PureState, C64};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "PRECEDENCE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    DoubleSlit,
    Convergence,
    LockIn,
    Permutation,
    Postulates,
    Tomography,
}

impl Study {
    pub fn as_str(self) -> &'static str {
        match self {
            Study::DoubleSlit => "double_slit",
            Study::Convergence => "convergence",
            Study::LockIn => "lock_in",
            Study::Permutation => "permutation",
            Study::Postulates => "postulates",
            Study::Tomography => "tomography",
        }
    }
}

/// Precedent threshold; `"inf"` in JSON means build-up never ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threshold(pub u64);

impl Default for Threshold {
    fn default() -> Self {
        Threshold(DEFAULT_THRESHOLD)
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == u64::MAX {
            s.serialize_str("inf")
        } else {
            s.serialize_u64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Threshold;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive integer or \"inf\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Threshold, E> {
                Ok(Threshold(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Threshold, E> {
                u64::try_from(v)
                    .map(Threshold)
                    .map_err(|_| E::custom("threshold_T must be positive"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Threshold, E> {
                match v {
                    "inf" | "infinity" => Ok(Threshold(u64::MAX)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreedomKind {
    #[default]
    Uniform,
    SeededExternal,
    Masked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(rename = "threshold_T", default)]
    pub threshold: Threshold,
    #[serde(default = "default_buildup")]
    pub buildup: Buildup,
    #[serde(default)]
    pub freedom: FreedomKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<Vec<usize>>,
}

fn default_buildup() -> Buildup {
    Buildup::BornOracle
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            threshold: Threshold::default(),
            buildup: default_buildup(),
            freedom: FreedomKind::Uniform,
            mask: None,
            external: None,
        }
    }
}

impl PolicySection {
    pub fn to_policy(&self) -> Result<PolicyConfig> {
        let freedom = match (self.freedom, &self.mask, &self.external) {
            (FreedomKind::Uniform, None, None) => Freedom::Uniform,
            (FreedomKind::Masked, Some(m), None) => Freedom::Masked(m.clone()),
            (FreedomKind::SeededExternal, None, Some(e)) => Freedom::SeededExternal(e.clone()),
            (FreedomKind::Masked, None, _) => return Err(cfg("policy.mask is required for freedom \"masked\"")),
            (FreedomKind::SeededExternal, _, None) => {
                return Err(cfg("policy.external is required for freedom \"seeded_external\""))
            }
            (_, Some(_), _) => return Err(cfg("policy.mask only applies to freedom \"masked\"")),
            (_, _, Some(_)) => return Err(cfg("policy.external only applies to freedom \"seeded_external\"")),
        };
        PolicyConfig::new(self.threshold.0, self.buildup, freedom)
    }
}

/// Pure state as `[re, im]` amplitude pairs; normalized on use.
pub type Amplitudes = Vec<[f64; 2]>;

fn plus_state() -> Amplitudes {
    vec![[1.0, 0.0], [1.0, 0.0]]
}

pub fn pure_state(amps: &Amplitudes) -> Result<PureState> {
    let v: Vec<C64> = amps.iter().map(|[re, im]| C64::new(*re, *im)).collect();
    PureState::from_slice(&v).map_err(|e| cfg(&format!("amplitudes: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleSlitSection {
    pub n_photons: usize,
    #[serde(default)]
    pub geometry: FarField,
    /// `[1, 0]` blocks the second slit.
    #[serde(default = "both_paths")]
    pub path_weights: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
}

fn both_paths() -> [f64; 2] {
    [1.0, 1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefillKind {
    /// Born proportions, rounded by largest remainder.
    Exact,
    /// Independent Born draws.
    BornIid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prefill {
    pub kind: PrefillKind,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub n_steps: usize,
    #[serde(default = "plus_state")]
    pub amplitudes: Amplitudes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefill: Option<Prefill>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockInSection {
    pub n_runs: usize,
    pub run_length: usize,
    #[serde(default = "plus_state")]
    pub amplitudes: Amplitudes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermutationSection {
    /// Recorded sequence; a uniform random one of `length` is drawn if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default = "two")]
    pub n_outcomes: usize,
    pub n_perms: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
}

fn two() -> usize {
    2
}

fn default_draws() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostulatesSection {
    #[serde(default = "default_max_n")]
    pub max_n: usize,
}

fn default_max_n() -> usize {
    5
}

impl Default for PostulatesSection {
    fn default() -> Self {
        Self { max_n: default_max_n() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySection {
    #[serde(default = "two")]
    pub dim: usize,
    #[serde(default = "default_tomography_states")]
    pub n_states: usize,
    pub shots: usize,
}

fn default_tomography_states() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub study: Study,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub policy: PolicySection,
    /// Ledger loaded before the run. The final ledger is always written to
    /// `output_dir`, so this file is never modified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger_path: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub double_slit: Option<DoubleSlitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lock_in: Option<LockInSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<PermutationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub postulates: Option<PostulatesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tomography: Option<TomographySection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn cfg(msg: &str) -> Error {
    Error::Config(msg.to_string())
}

/// Parses and validates a JSON run configuration. Defaults are filled in, so
/// the returned value serializes to a complete config.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut config: RunConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if config.study == Study::Postulates && config.postulates.is_none() {
        config.postulates = Some(PostulatesSection::default());
    }
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.to_policy()?;
        let present = [
            (Study::DoubleSlit, self.double_slit.is_some()),
            (Study::Convergence, self.convergence.is_some()),
            (Study::LockIn, self.lock_in.is_some()),
            (Study::Permutation, self.permutation.is_some()),
            (Study::Postulates, self.postulates.is_some()),
            (Study::Tomography, self.tomography.is_some()),
        ];
        for (study, is_present) in present {
            if study == self.study && !is_present {
                return Err(cfg(&format!(
                    "missing field `{}` required by study \"{}\"",
                    study.as_str(),
                    study.as_str()
                )));
            }
            if study != self.study && is_present {
                return Err(cfg(&format!(
                    "field `{}` does not apply to study \"{}\"",
                    study.as_str(),
                    self.study.as_str()
                )));
            }
        }
        match self.study {
            Study::DoubleSlit => {
                let s = self.double_slit.as_ref().unwrap();
                positive("double_slit.n_photons", s.n_photons)?;
                check_checkpoints("double_slit.checkpoints", s.checkpoints.as_deref(), s.n_photons)?;
            }
            Study::Convergence => {
                let s = self.convergence.as_ref().unwrap();
                pure_state(&s.amplitudes)?;
                check_checkpoints("convergence.checkpoints", s.checkpoints.as_deref(), s.n_steps)?;
            }
            Study::LockIn => {
                let s = self.lock_in.as_ref().unwrap();
                positive("lock_in.n_runs", s.n_runs)?;
                positive("lock_in.run_length", s.run_length)?;
                pure_state(&s.amplitudes)?;
            }
            Study::Permutation => {
                let s = self.permutation.as_ref().unwrap();
                positive("permutation.n_perms", s.n_perms)?;
                positive("permutation.draws", s.draws)?;
                positive("permutation.n_outcomes", s.n_outcomes)?;
                match (&s.sequence, s.length) {
                    (Some(seq), None) => {
                        if seq.len() < 2 {
                            return Err(cfg("permutation.sequence needs at least 2 outcomes"));
                        }
                        if let Some(&o) = seq.iter().find(|&&o| o >= s.n_outcomes) {
                            return Err(cfg(&format!(
                                "permutation.sequence contains outcome {o} but n_outcomes is {}",
                                s.n_outcomes
                            )));
                        }
                    }
                    (None, Some(len)) if len >= 2 => {}
                    (None, Some(_)) => return Err(cfg("permutation.length must be at least 2")),
                    _ => return Err(cfg("permutation needs exactly one of `sequence` or `length`")),
                }
            }
            Study::Postulates => {
                let s = self.postulates.as_ref().unwrap();
                if s.max_n < 2 {
                    return Err(cfg("postulates.max_n must be at least 2"));
                }
            }
            Study::Tomography => {
                let s = self.tomography.as_ref().unwrap();
                if s.dim < 2 {
                    return Err(cfg("tomography.dim must be at least 2"));
                }
                positive("tomography.n_states", s.n_states)?;
                positive("tomography.shots", s.shots)?;
            }
        }
        Ok(())
    }

    /// Fixes the seed: `env_seed` (the value of [`SEED_ENV`]) wins over the
    /// configured seed, and a random seed is drawn if neither is given.
    pub fn resolve_seed(&mut self, env_seed: Option<&str>) -> Result<u64> {
        let seed = match env_seed {
            Some(text) => text
                .trim()
                .parse::<u64>()
                .map_err(|e| cfg(&format!("{SEED_ENV}={text:?}: {e}")))?,
            None => match self.seed {
                Some(s) => s,
                None => rand::random(),
            },
        };
        self.seed = Some(seed);
        Ok(seed)
    }
}

fn positive(field: &str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(cfg(&format!("{field} must be at least 1")));
    }
    Ok(())
}

fn check_checkpoints(field: &str, cps: Option<&[usize]>, n_steps: usize) -> Result<()> {
    let Some(cps) = cps else { return Ok(()) };
    if cps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(cfg(&format!("{field} must be strictly increasing")));
    }
    if cps.last().is_some_and(|&c| c > n_steps) {
        return Err(cfg(&format!("{field} exceeds the number of steps {n_steps}")));
    }
    Ok(())
}
