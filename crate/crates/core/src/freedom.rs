//! Degrees-of-freedom counting and tomography for finite-dimensional theories.
//!
//! The number of real parameters `K` that fixes every outcome distribution of a
//! system with capacity `N` is computed here as a matrix rank, not assumed:
//! random states are pushed through a spanning measurement set and the rank of
//! the resulting statistics matrix, minus the normalization functional, is `K`.
//! For quantum systems this gives `N² − 1`; for classical (diagonal) systems
//! `N − 1`.
//!
//! Checked numerically:
//! - local tomography: product effects on the factors span the joint effect space;
//! - transitivity: any pure state maps to any other under some unitary;
//! - maximal freedom: `K_quantum(N) − K_classical(N) = N² − N > 0`.
//!
//! Two further axioms of the same axiom system are recorded for reference only
//! and have no checks here:
//! - equivalence of subspaces: states of a capacity-`N` system on which a
//!   complete measurement's last effect vanishes form a system equivalent to
//!   one of capacity `N − 1`;
//! - all measurements allowed: on a capacity-2 system every probability
//!   measure on the state space is the outcome probability of some measurement.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qcore::{
    born_probabilities, hermitian_part, random, trace_of_product, CMatrix,
    DensityMatrix, Povm, PureState, UnitaryTransform, C64,
};

/// Relative singular-value cutoff used for every rank computation.
pub const RANK_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GptKind {
    Quantum,
    Classical,
}

/// Capacity and computed degrees of freedom of a probabilistic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GptModel {
    pub kind: GptKind,
    pub capacity: usize,
    pub dof: usize,
}

impl GptModel {
    pub fn compute(kind: GptKind, capacity: usize) -> Result<Self> {
        let dof = degrees_of_freedom(kind, capacity)?;
        Ok(Self {
            kind,
            capacity,
            dof,
        })
    }

    /// Closed-form value the computed `dof` is expected to match.
    pub fn expected_dof(&self) -> usize {
        match self.kind {
            GptKind::Quantum => self.capacity * self.capacity - 1,
            GptKind::Classical => self.capacity - 1,
        }
    }
}

/// Outcome probabilities of a state under each measurement of a [`MeasurementSet`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatisticalState {
    pub probs: Vec<f64>,
}

/// A list of measurements together with the rank of their effect span.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    povms: Vec<Povm>,
    functional_rank: usize,
    dim: usize,
}

impl MeasurementSet {
    pub fn new(povms: Vec<Povm>) -> Result<Self> {
        let dim = povms
            .first()
            .map(Povm::dim)
            .ok_or_else(|| Error::InvalidMeasurement("empty measurement set".into()))?;
        if let Some(bad) = povms.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        let effects: Vec<&CMatrix> = povms.iter().flat_map(|p| p.effects()).collect();
        let functional_rank = numerical_rank(&effect_coordinate_matrix(&effects, dim));
        Ok(Self {
            povms,
            functional_rank,
            dim,
        })
    }

    pub fn povms(&self) -> &[Povm] {
        &self.povms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of linearly independent outcome functionals, normalization included.
    pub fn functional_rank(&self) -> usize {
        self.functional_rank
    }

    pub fn n_effects(&self) -> usize {
        self.povms.iter().map(Povm::n_outcomes).sum()
    }

    pub fn is_informationally_complete(&self) -> bool {
        self.functional_rank == self.dim * self.dim
    }

    /// The same set with one measurement removed.
    pub fn without(&self, index: usize) -> Result<Self> {
        let povms = self
            .povms
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != index)
            .map(|(_, p)| p.clone())
            .collect();
        Self::new(povms)
    }

    /// Concatenated Born probabilities of `rho` under every measurement.
    pub fn statistics(&self, rho: &DensityMatrix) -> Result<StatisticalState> {
        let mut probs = Vec::with_capacity(self.n_effects());
        for p in &self.povms {
            probs.extend(born_probabilities(rho, p)?);
        }
        Ok(StatisticalState { probs })
    }

    /// Born probabilities grouped per measurement, the input shape of
    /// [`reconstruct_state`].
    pub fn grouped_statistics(&self, rho: &DensityMatrix) -> Result<Vec<Vec<f64>>> {
        self.povms
            .iter()
            .map(|p| born_probabilities(rho, p))
            .collect()
    }
}

/// Hilbert–Schmidt orthonormal basis of `n × n` Hermitian matrices: `I/√n`
/// followed by the `n² − 1` generalized Gell-Mann matrices (normalized).
pub fn hermitian_basis(n: usize) -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(n * n);
    basis.push(CMatrix::identity(n, n) / C64::from((n as f64).sqrt()));
    basis.extend(gell_mann(n));
    basis
}

fn gell_mann(n: usize) -> Vec<CMatrix> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n - 1);
    for j in 0..n {
        for k in (j + 1)..n {
            let mut s = CMatrix::zeros(n, n);
            s[(j, k)] = C64::new(h, 0.0);
            s[(k, j)] = C64::new(h, 0.0);
            out.push(s);
            let mut a = CMatrix::zeros(n, n);
            a[(j, k)] = C64::new(0.0, -h);
            a[(k, j)] = C64::new(0.0, h);
            out.push(a);
        }
    }
    for l in 1..n {
        let scale = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut d = CMatrix::zeros(n, n);
        for j in 0..l {
            d[(j, j)] = C64::new(scale, 0.0);
        }
        d[(l, l)] = C64::new(-(l as f64) * scale, 0.0);
        out.push(d);
    }
    out
}

/// Real coordinates `Tr(B_a M)` of a Hermitian matrix in [`hermitian_basis`].
pub fn hermitian_coordinates(m: &CMatrix, basis: &[CMatrix]) -> Vec<f64> {
    basis.iter().map(|b| trace_of_product(b, m).re).collect()
}

fn effect_coordinate_matrix(effects: &[&CMatrix], dim: usize) -> DMatrix<f64> {
    let basis = hermitian_basis(dim);
    let rows: Vec<Vec<f64>> = effects
        .iter()
        .map(|e| hermitian_coordinates(e, &basis))
        .collect();
    DMatrix::from_fn(rows.len(), dim * dim, |i, j| rows[i][j])
}

/// Number of singular values above `RANK_RTOL` times the largest.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * top).count()
}

/// Two-outcome measurements `{(I ± G/‖G‖)/2}`, one per Gell-Mann generator `G`.
///
/// The effects span all `n²` Hermitian directions, so the set is informationally
/// complete with `n² − 1` measurements. Requires `n ≥ 2`.
pub fn informationally_complete_povm(n: usize) -> Result<MeasurementSet> {
    if n < 2 {
        return Err(Error::CapacityTooSmall { min: 2, got: n });
    }
    MeasurementSet::new(ic_povms(n))
}

fn ic_povms(n: usize) -> Vec<Povm> {
    if n == 1 {
        return vec![Povm::computational_basis(1)];
    }
    let id = CMatrix::identity(n, n);
    gell_mann(n)
        .into_iter()
        .map(|g| {
            let spectral = SymmetricEigen::new(g.clone())
                .eigenvalues
                .iter()
                .fold(0.0_f64, |m, l| m.max(l.abs()));
            let g = g / C64::from(spectral);
            let plus = hermitian_part(&((&id + &g) * C64::from(0.5)));
            let minus = hermitian_part(&((&id - &g) * C64::from(0.5)));
            Povm::new(vec![plus, minus]).expect("shifted generator pair is a valid POVM")
        })
        .collect()
}

fn sample_states(kind: GptKind, n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<DensityMatrix> {
    (0..count)
        .map(|_| match kind {
            GptKind::Quantum => random::random_density(n, rng),
            GptKind::Classical => {
                let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
                let total: f64 = w.iter().sum();
                let p: Vec<f64> = w.iter().map(|x| x / total).collect();
                DensityMatrix::diagonal(&p).expect("normalized weights")
            }
        })
        .collect()
}

/// Rank of the map from sampled states to their statistics under `mset`.
pub fn statistics_rank(states: &[DensityMatrix], mset: &MeasurementSet) -> Result<usize> {
    let rows = states
        .iter()
        .map(|s| mset.statistics(s).map(|st| st.probs))
        .collect::<Result<Vec<_>>>()?;
    let cols = mset.n_effects();
    Ok(numerical_rank(&DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])))
}

/// `K` for capacity `n`: rank of the state-to-statistics map minus one.
pub fn degrees_of_freedom(kind: GptKind, n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::CapacityTooSmall { min: 2, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + n as u64);
    let mset = informationally_complete_povm(n)?;
    let states = sample_states(kind, n, 2 * n * n, &mut rng);
    Ok(statistics_rank(&states, &mset)? - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LocalTomography {
    pub rank: usize,
    pub holds: bool,
}

/// Rank of joint-state statistics under product effects `E_A ⊗ E_B`.
///
/// Local tomography holds when that rank equals `(n_a · n_b)²`, the dimension of
/// the joint Hermitian space.
pub fn local_tomography_check(n_a: usize, n_b: usize) -> Result<LocalTomography> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::CapacityTooSmall {
            min: 1,
            got: n_a.min(n_b),
        });
    }
    let n = n_a * n_b;
    let effects_a: Vec<CMatrix> = ic_povms(n_a).iter().flat_map(|p| p.effects().to_vec()).collect();
    let effects_b: Vec<CMatrix> = ic_povms(n_b).iter().flat_map(|p| p.effects().to_vec()).collect();
    let products: Vec<CMatrix> = effects_a
        .iter()
        .flat_map(|ea| effects_b.iter().map(move |eb| ea.kronecker(eb)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(0x10ca1 ^ ((n_a as u64) << 16) ^ n_b as u64);
    let states = sample_states(GptKind::Quantum, n, n * n + 8, &mut rng);
    let stats = DMatrix::from_fn(states.len(), products.len(), |i, j| {
        trace_of_product(states[i].matrix(), &products[j]).re
    });
    let rank = numerical_rank(&stats);
    Ok(LocalTomography {
        rank,
        holds: rank == n * n,
    })
}

/// Completes `v` to an orthonormal basis; `v` is the first column.
fn complete_basis(v: &PureState) -> CMatrix {
    let n = v.dim();
    let mut cols: Vec<DVector<C64>> = vec![v.amplitudes().clone()];
    // Try the standard basis vectors in order of least overlap with v.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v.amplitudes()[a].norm().total_cmp(&v.amplitudes()[b].norm()));
    for k in order {
        if cols.len() == n {
            break;
        }
        let mut w = DVector::<C64>::zeros(n);
        w[k] = C64::new(1.0, 0.0);
        // Two Gram-Schmidt passes.
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dotc(&w);
                w -= c * proj;
            }
        }
        let norm = w.norm();
        if norm > 1e-6 {
            cols.push(w / C64::from(norm));
        }
    }
    CMatrix::from_columns(&cols)
}

/// A unitary `U` with `U|ω⟩ = |φ⟩`, built by mapping a completed basis of `ω`
/// onto a completed basis of `φ`.
pub fn transitivity_witness(omega: &PureState, phi: &PureState) -> Result<UnitaryTransform> {
    if omega.dim() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: omega.dim(),
            found: phi.dim(),
        });
    }
    let from = complete_basis(omega);
    let to = complete_basis(phi);
    UnitaryTransform::new(&to * from.adjoint())
}

/// Linear-inversion tomography followed by projection onto the state space.
///
/// `stats[i]` holds the measured outcome distribution of the `i`-th measurement
/// of `mset`. The least-squares Hermitian solution is projected onto the
/// nearest (Frobenius) unit-trace positive matrix.
pub fn reconstruct_state(stats: &[Vec<f64>], mset: &MeasurementSet) -> Result<DensityMatrix> {
    let n = mset.dim();
    if stats.len() != mset.povms().len() {
        return Err(Error::StatisticsMismatch(format!(
            "{} distributions for {} measurements",
            stats.len(),
            mset.povms().len()
        )));
    }
    for (i, (s, p)) in stats.iter().zip(mset.povms()).enumerate() {
        if s.len() != p.n_outcomes() {
            return Err(Error::StatisticsMismatch(format!(
                "measurement {i} has {} outcomes, got {} probabilities",
                p.n_outcomes(),
                s.len()
            )));
        }
    }
    if !mset.is_informationally_complete() {
        return Err(Error::NotInformationallyComplete {
            rank: mset.functional_rank(),
            needed: n * n,
        });
    }

    let basis = hermitian_basis(n);
    let effects: Vec<&CMatrix> = mset.povms().iter().flat_map(|p| p.effects()).collect();
    let a = effect_coordinate_matrix(&effects, n);
    let b = DVector::from_iterator(effects.len(), stats.iter().flatten().copied());
    let svd = a.svd(true, true);
    let top = svd.singular_values.max();
    let x = svd
        .solve(&b, RANK_RTOL * top)
        .map_err(|e| Error::StatisticsMismatch(e.to_string()))?;

    let estimate = basis
        .iter()
        .zip(x.iter())
        .fold(CMatrix::zeros(n, n), |acc, (bk, &xk)| acc + bk * C64::from(xk));
    Ok(project_to_state(&estimate))
}

/// Frobenius-nearest density matrix to a Hermitian matrix: eigenvalues are
/// projected onto the probability simplex, eigenvectors kept.
pub fn project_to_state(m: &CMatrix) -> DensityMatrix {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let lambda = simplex_projection(eig.eigenvalues.as_slice());
    let d = CMatrix::from_diagonal(&DVector::from_iterator(
        lambda.len(),
        lambda.iter().map(|&l| C64::from(l)),
    ));
    DensityMatrix::from_trusted(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// Euclidean projection onto `{w : w ≥ 0, Σ w = 1}`.
fn simplex_projection(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// One line of the postulate report.
#[derive(Debug, Clone, Serialize)]
pub struct PostulateCheck {
    pub postulate: String,
    pub check: String,
    pub pass: bool,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct PostulateReport {
    pub max_n: usize,
    pub quantum_k: Vec<GptModel>,
    pub classical_k: Vec<GptModel>,
    pub checks: Vec<PostulateCheck>,
    pub documented_only: Vec<String>,
    pub notes: Vec<String>,
    pub all_pass: bool,
}

/// Runs every numerical check for capacities `2..=max_n`.
pub fn postulate_report(max_n: usize, seed: u64) -> Result<PostulateReport> {
    if max_n < 2 {
        return Err(Error::CapacityTooSmall { min: 2, got: max_n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let mut quantum_k = Vec::new();
    let mut classical_k = Vec::new();

    for n in 2..=max_n {
        let q = GptModel::compute(GptKind::Quantum, n)?;
        let c = GptModel::compute(GptKind::Classical, n)?;
        let gap = q.dof as i64 - c.dof as i64;
        checks.push(PostulateCheck {
            postulate: "maximal freedom".into(),
            check: format!("rank-based K at N={n}"),
            pass: q.dof == q.expected_dof()
                && c.dof == c.expected_dof()
                && gap == (n * n - n) as i64
                && gap > 0,
            details: serde_json::json!({
                "n": n,
                "k_quantum": q.dof,
                "k_classical": c.dof,
                "gap": gap,
            }),
        });
        quantum_k.push(q);
        classical_k.push(c);
    }

    for (na, nb) in [(2, 2), (2, 3)] {
        let lt = local_tomography_check(na, nb)?;
        checks.push(PostulateCheck {
            postulate: "local tomography".into(),
            check: format!("product-effect rank for ({na}, {nb})"),
            pass: lt.holds,
            details: serde_json::json!({
                "n_a": na,
                "n_b": nb,
                "rank": lt.rank,
                "expected": (na * nb) * (na * nb),
            }),
        });
    }

    for n in 2..=max_n.min(4) {
        let mut worst: f64 = 1.0;
        for _ in 0..100 {
            let omega = random::haar_pure_state(n, &mut rng);
            let phi = random::haar_pure_state(n, &mut rng);
            let u = transitivity_witness(&omega, &phi)?;
            worst = worst.min(phi.overlap(&u.apply(&omega)?)?);
        }
        checks.push(PostulateCheck {
            postulate: "symmetry".into(),
            check: format!("transitivity witnesses at N={n}"),
            pass: worst >= 1.0 - 1e-10,
            details: serde_json::json!({ "n": n, "pairs": 100, "min_overlap": worst }),
        });
    }

    for n in 2..=max_n.min(3) {
        let mset = informationally_complete_povm(n)?;
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let rho = random::random_density(n, &mut rng);
            let back = reconstruct_state(&mset.grouped_statistics(&rho)?, &mset)?;
            worst = worst.max(crate::qcore::max_abs(&(back.matrix() - rho.matrix())));
        }
        checks.push(PostulateCheck {
            postulate: "correspondence".into(),
            check: format!("tomographic round trip at N={n}"),
            pass: worst <= 1e-8,
            details: serde_json::json!({
                "n": n,
                "states": 50,
                "measurements": mset.povms().len(),
                "functional_rank": mset.functional_rank(),
                "max_entry_error": worst,
            }),
        });
    }

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(PostulateReport {
        max_n,
        quantum_k,
        classical_k,
        checks,
        documented_only: vec![
            "equivalence of subspaces".into(),
            "all measurements allowed".into(),
        ],
        notes: vec![
            "K counts independent outcome functionals: an IC set has K+1 of them including normalization. \
             A single N-outcome measurement contributes at most N-1 independent probabilities, so fixing the state \
             takes more than K/(N-1) measurements, not K measurements."
                .into(),
        ],
        all_pass,
    })
}
