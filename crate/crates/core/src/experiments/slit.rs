//! Two-path interference on a discretized screen.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freedom::transitivity_witness;
use crate::ledger::{PrepStep, PreparationSpec};
use crate::qcore::{Povm, PureState, C64};

/// Far-field geometry. Lengths share one (arbitrary) unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FarField {
    pub n_bins: usize,
    pub slit_separation: f64,
    pub slit_width: f64,
    pub wavelength: f64,
    pub screen_distance: f64,
    pub screen_half_width: f64,
}

impl Default for FarField {
    fn default() -> Self {
        // Fringe spacing λL/d = 0.025 and first envelope zero λL/a = 0.1:
        // eight fringes across the screen, 8 bins per fringe at 64 bins.
        Self {
            n_bins: 64,
            slit_separation: 20e-6,
            slit_width: 5e-6,
            wavelength: 500e-9,
            screen_distance: 1.0,
            screen_half_width: 0.1,
        }
    }
}

/// Screen probabilities `p_j ∝ envelope_j · |w₁ e^{iφ₁ⱼ} + w₂ e^{iφ₂ⱼ}|²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlitModel {
    pub n_bins: usize,
    pub phase_1: Vec<f64>,
    pub phase_2: Vec<f64>,
    pub envelope: Vec<f64>,
    /// Amplitude weights of the two paths; `[1, 0]` blocks the second slit.
    pub path_weights: [f64; 2],
}

impl SlitModel {
    pub fn new(phase_1: Vec<f64>, phase_2: Vec<f64>, envelope: Vec<f64>, path_weights: [f64; 2]) -> Result<Self> {
        let n_bins = envelope.len();
        if n_bins == 0 || phase_1.len() != n_bins || phase_2.len() != n_bins {
            return Err(Error::InvalidState(format!(
                "slit model needs equal nonzero lengths, got {}/{}/{}",
                phase_1.len(),
                phase_2.len(),
                n_bins
            )));
        }
        let all_finite = phase_1.iter().chain(&phase_2).chain(&envelope).chain(&path_weights).all(|x| x.is_finite());
        if !all_finite || envelope.iter().any(|&e| e < 0.0) {
            return Err(Error::InvalidState("envelope must be finite and nonnegative".into()));
        }
        let model = Self {
            n_bins,
            phase_1,
            phase_2,
            envelope,
            path_weights,
        };
        if model.unnormalized().iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidState("slit model has no intensity".into()));
        }
        Ok(model)
    }

    /// Phases `2π (r_k − L)/λ` of the paths from slits at `∓d/2` to bin centers,
    /// and a single-slit `sinc²` envelope.
    pub fn far_field(g: &FarField) -> Result<Self> {
        if g.n_bins == 0 || !(g.wavelength > 0.0) || !(g.screen_distance > 0.0) {
            return Err(Error::InvalidState(format!("invalid far-field geometry {g:?}")));
        }
        let l = g.screen_distance;
        let two_pi = 2.0 * std::f64::consts::PI;
        let bin_width = 2.0 * g.screen_half_width / g.n_bins as f64;
        let centers: Vec<f64> = (0..g.n_bins)
            .map(|j| -g.screen_half_width + (j as f64 + 0.5) * bin_width)
            .collect();
        // r − L = Δ² / (r + L), accurate for Δ ≪ L.
        let excess = |delta: f64| delta * delta / ((l * l + delta * delta).sqrt() + l);
        let phase = |offset: f64| -> Vec<f64> {
            centers
                .iter()
                .map(|&x| two_pi * excess(x - offset) / g.wavelength)
                .collect()
        };
        let envelope = centers
            .iter()
            .map(|&x| {
                let beta = std::f64::consts::PI * g.slit_width * x / (g.wavelength * l);
                if beta == 0.0 {
                    1.0
                } else {
                    (beta.sin() / beta).powi(2)
                }
            })
            .collect();
        Self::new(phase(-g.slit_separation / 2.0), phase(g.slit_separation / 2.0), envelope, [1.0, 1.0])
    }

    pub fn with_path_weights(&self, path_weights: [f64; 2]) -> Result<Self> {
        Self::new(self.phase_1.clone(), self.phase_2.clone(), self.envelope.clone(), path_weights)
    }

    /// Second path blocked.
    pub fn single_path(&self) -> Result<Self> {
        self.with_path_weights([self.path_weights[0], 0.0])
    }

    /// Unnormalized screen amplitudes `√envelope_j (w₁ e^{iφ₁ⱼ} + w₂ e^{iφ₂ⱼ})`.
    pub fn amplitudes(&self) -> Vec<C64> {
        let [w1, w2] = self.path_weights;
        (0..self.n_bins)
            .map(|j| {
                let a = C64::from_polar(w1, self.phase_1[j]) + C64::from_polar(w2, self.phase_2[j]);
                a * self.envelope[j].sqrt()
            })
            .collect()
    }

    fn unnormalized(&self) -> Vec<f64> {
        self.amplitudes().iter().map(|a| a.norm_sqr()).collect()
    }

    /// Analytic screen distribution.
    pub fn probabilities(&self) -> Vec<f64> {
        let raw = self.unnormalized();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total).collect()
    }

    pub fn pure_state(&self) -> Result<PureState> {
        PureState::from_slice(&self.amplitudes())
    }

    /// `|0⟩` rotated onto the screen state by a transitivity witness.
    pub fn preparation(&self) -> Result<PreparationSpec> {
        let u = transitivity_witness(&PureState::basis(self.n_bins, 0)?, &self.pure_state()?)?;
        Ok(PreparationSpec::basis(self.n_bins, 0).then(PrepStep::Transform(u.matrix().clone())))
    }

    /// Bin projectors.
    pub fn measurement(&self) -> Povm {
        Povm::computational_basis(self.n_bins)
    }
}
