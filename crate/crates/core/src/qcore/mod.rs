//! Finite-dimensional quantum states, measurements and preparation operations.
//!
//! Everything here is an immutable value. Constructors validate their
//! invariants once; operations build new values and never mutate inputs.
//! The Born rule ([`born_probabilities`]) is the reference oracle that the
//! precedence dynamics are compared against.

pub mod random;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance for structural invariants (Hermiticity, positivity, unitarity, trace).
pub const STRUCT_TOL: f64 = 1e-10;
/// Tolerance for the normalization of probability vectors.
pub const PROB_TOL: f64 = 1e-9;
/// Minimum trace a filtered state must retain to be renormalized.
pub const POSTSELECT_TOL: f64 = 1e-12;

/// A normalized state vector. Global phase is kept as given.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    /// Normalizes `amplitudes` into a pure state.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidState("empty amplitude vector".into()));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        Ok(Self {
            amplitudes: amplitudes / C64::from(norm),
        })
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amplitudes))
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(CVector::from_iterator(
            amplitudes.len(),
            amplitudes.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    /// Computational basis state `|index⟩` in dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidState(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut v = CVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `|⟨self|other⟩|`, equal to 1 iff the states agree up to global phase.
    pub fn overlap(&self, other: &PureState) -> Result<f64> {
        Ok(self.inner(other)?.norm())
    }
}

/// Makes a normalized pure state from raw amplitudes.
pub fn make_pure_state(amplitudes: &[C64]) -> Result<PureState> {
    PureState::from_slice(amplitudes)
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates `matrix` as a density matrix.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidState(format!(
                "density matrix must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let herm = hermiticity_deviation(&matrix);
        if herm > STRUCT_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > STRUCT_TOL || tr.im.abs() > STRUCT_TOL {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let matrix = hermitian_part(&matrix);
        let min_eig = hermitian_eigenvalues(&matrix)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -STRUCT_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// Wraps a matrix that is a density matrix by construction, symmetrizing
    /// away rounding noise in the anti-Hermitian part.
    pub(crate) fn from_trusted(matrix: CMatrix) -> Self {
        debug_assert!(matrix.is_square());
        Self {
            matrix: hermitian_part(&matrix),
        }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let v = psi.amplitudes();
        Self::from_trusted(v * v.adjoint())
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        Ok(Self::from_pure(&PureState::basis(dim, index)?))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::from_trusted(CMatrix::identity(dim, dim) / C64::from(dim as f64))
    }

    /// Diagonal (classical) state with the given probability vector.
    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(0.0..=1.0 + STRUCT_TOL).contains(&p))
            || (total - 1.0).abs() > PROB_TOL
        {
            return Err(Error::InvalidState(format!(
                "{probs:?} is not a probability vector"
            )));
        }
        let d = DVector::from_iterator(probs.len(), probs.iter().map(|&p| C64::from(p)));
        Ok(Self::from_trusted(CMatrix::from_diagonal(&d)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// `Tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev = hermitian_eigenvalues(&self.matrix);
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Frobenius distance to another state of the same dimension.
    pub fn frobenius_distance(&self, other: &DensityMatrix) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok((&self.matrix - &other.matrix).norm())
    }

    /// Checks every invariant at the structural tolerance. Used by tests to
    /// audit values produced by operations.
    pub fn check_invariants(&self) -> Result<()> {
        Self::new(self.matrix.clone()).map(|_| ())
    }
}

/// `|ψ⟩⟨ψ|`.
pub fn density_from_pure(psi: &PureState) -> DensityMatrix {
    DensityMatrix::from_pure(psi)
}

/// A complete measurement: positive effects summing to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    effects: Vec<CMatrix>,
}

impl Povm {
    pub fn new(effects: Vec<CMatrix>) -> Result<Self> {
        let Some(first) = effects.first() else {
            return Err(Error::InvalidMeasurement("no effects".into()));
        };
        let dim = first.nrows();
        if dim == 0 {
            return Err(Error::InvalidMeasurement("zero-dimensional effect".into()));
        }
        let mut sum = CMatrix::zeros(dim, dim);
        let mut cleaned = Vec::with_capacity(effects.len());
        for (i, e) in effects.into_iter().enumerate() {
            if e.nrows() != dim || e.ncols() != dim {
                return Err(Error::InvalidMeasurement(format!(
                    "effect {i} is {}x{}, expected {dim}x{dim}",
                    e.nrows(),
                    e.ncols()
                )));
            }
            let herm = hermiticity_deviation(&e);
            if herm > STRUCT_TOL {
                return Err(Error::InvalidMeasurement(format!(
                    "effect {i} is not Hermitian (deviation {herm:e})"
                )));
            }
            let e = hermitian_part(&e);
            for ev in hermitian_eigenvalues(&e) {
                if !(-STRUCT_TOL..=1.0 + STRUCT_TOL).contains(&ev) {
                    return Err(Error::InvalidMeasurement(format!(
                        "effect {i} has eigenvalue {ev} outside [0, 1]"
                    )));
                }
            }
            sum += &e;
            cleaned.push(e);
        }
        let dev = max_abs(&(sum - CMatrix::identity(dim, dim)));
        if dev > STRUCT_TOL {
            return Err(Error::InvalidMeasurement(format!(
                "effects sum to identity only within {dev:e}"
            )));
        }
        Ok(Self { effects: cleaned })
    }

    /// Projective measurement in the computational basis.
    pub fn computational_basis(dim: usize) -> Self {
        let effects = (0..dim)
            .map(|i| {
                let mut e = CMatrix::zeros(dim, dim);
                e[(i, i)] = C64::new(1.0, 0.0);
                e
            })
            .collect();
        Self { effects }
    }

    /// Projective measurement onto an orthonormal basis given as unitary columns.
    pub fn from_basis(u: &UnitaryTransform) -> Self {
        let m = u.matrix();
        let effects = (0..m.ncols())
            .map(|j| {
                let c = m.column(j);
                c * c.adjoint()
            })
            .collect();
        Self { effects }
    }

    pub fn dim(&self) -> usize {
        self.effects[0].nrows()
    }

    pub fn n_outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn effects(&self) -> &[CMatrix] {
        &self.effects
    }

    /// `{U E_i U†}`.
    pub fn rotated(&self, u: &UnitaryTransform) -> Result<Self> {
        check_dim(self.dim(), u.dim())?;
        let m = u.matrix();
        let ma = m.adjoint();
        Ok(Self {
            effects: self
                .effects
                .iter()
                .map(|e| hermitian_part(&(m * e * &ma)))
                .collect(),
        })
    }
}

/// A reversible transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryTransform {
    matrix: CMatrix,
}

impl UnitaryTransform {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::NotUnitary(f64::INFINITY));
        }
        let n = matrix.nrows();
        let dev = max_abs(&(matrix.adjoint() * &matrix - CMatrix::identity(n, n)));
        if !(dev <= STRUCT_TOL) {
            return Err(Error::NotUnitary(dev));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_trusted(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply(&self, psi: &PureState) -> Result<PureState> {
        check_dim(self.dim(), psi.dim())?;
        PureState::new(&self.matrix * psi.amplitudes())
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &UnitaryTransform) -> Result<UnitaryTransform> {
        check_dim(self.dim(), first.dim())?;
        Ok(Self {
            matrix: &self.matrix * &first.matrix,
        })
    }
}

/// `p_i = Tr(ρ E_i)`, clamped into `[0, 1]`.
pub fn born_probabilities(rho: &DensityMatrix, m: &Povm) -> Result<Vec<f64>> {
    check_dim(m.dim(), rho.dim())?;
    let r = rho.matrix();
    let probs: Vec<f64> = m
        .effects()
        .iter()
        .map(|e| trace_of_product(r, e).re.clamp(0.0, 1.0))
        .collect();
    let total: f64 = probs.iter().sum();
    debug_assert!(
        (total - 1.0).abs() <= PROB_TOL,
        "Born probabilities sum to {total}"
    );
    Ok(probs)
}

/// Tensor product `a ⊗ b`; subsystem `a` is the slow index.
pub fn compose(a: &DensityMatrix, b: &DensityMatrix) -> DensityMatrix {
    DensityMatrix::from_trusted(a.matrix().kronecker(b.matrix()))
}

/// `F ρ F† / Tr(F ρ F†)`.
pub fn project(rho: &DensityMatrix, filter: &CMatrix) -> Result<DensityMatrix> {
    if filter.nrows() != filter.ncols() {
        return Err(Error::InvalidMeasurement("filter must be square".into()));
    }
    check_dim(rho.dim(), filter.nrows())?;
    let out = filter * rho.matrix() * filter.adjoint();
    let tr = out.trace().re;
    if !(tr > POSTSELECT_TOL) {
        return Err(Error::ImpossiblePostselection(tr));
    }
    Ok(DensityMatrix::from_trusted(out / C64::from(tr)))
}

/// `U ρ U†`.
pub fn transform(rho: &DensityMatrix, u: &UnitaryTransform) -> Result<DensityMatrix> {
    check_dim(rho.dim(), u.dim())?;
    let m = u.matrix();
    Ok(DensityMatrix::from_trusted(m * rho.matrix() * m.adjoint()))
}

/// `x a + (1 − x) b`.
pub fn mix(a: &DensityMatrix, b: &DensityMatrix, x: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidWeight(x));
    }
    check_dim(a.dim(), b.dim())?;
    Ok(DensityMatrix::from_trusted(
        a.matrix() * C64::from(x) + b.matrix() * C64::from(1.0 - x),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

/// Reduced state of one factor of an `n_a · n_b` dimensional system.
pub fn partial_trace(
    rho: &DensityMatrix,
    dims: (usize, usize),
    keep: Subsystem,
) -> Result<DensityMatrix> {
    let (na, nb) = dims;
    if na == 0 || nb == 0 || na * nb != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: na * nb,
            found: rho.dim(),
        });
    }
    let r = rho.matrix();
    let out = match keep {
        Subsystem::A => CMatrix::from_fn(na, na, |i, j| {
            (0..nb).map(|b| r[(i * nb + b, j * nb + b)]).sum()
        }),
        Subsystem::B => CMatrix::from_fn(nb, nb, |i, j| {
            (0..na).map(|a| r[(a * nb + i, a * nb + j)]).sum()
        }),
    };
    Ok(DensityMatrix::from_trusted(out))
}

/// `Tr(A B)` without forming the product.
pub(crate) fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::from(0.5)
}

pub(crate) fn hermiticity_deviation(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect()
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn plus() -> PureState {
        PureState::from_real(&[1.0, 1.0]).unwrap()
    }

    fn pauli_x() -> UnitaryTransform {
        UnitaryTransform::new(CMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        ))
        .unwrap()
    }

    fn assert_close(a: &CMatrix, b: &CMatrix, tol: f64) {
        let d = max_abs(&(a - b));
        assert!(d <= tol, "matrices differ by {d:e}\n{a}\n{b}");
    }

    #[test]
    fn pure_state_normalization() {
        let zero = PureState::from_real(&[1.0, 0.0]).unwrap();
        assert!((zero.amplitudes().norm() - 1.0).abs() < 1e-15);
        let p = plus();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.amplitudes()[0].re - h).abs() < 1e-15);
        assert!((p.amplitudes()[1].re - h).abs() < 1e-15);
        assert!(matches!(
            PureState::from_real(&[0.0, 0.0]),
            Err(Error::InvalidState(_))
        ));
        assert!(PureState::from_real(&[f64::NAN, 1.0]).is_err());
        assert!(PureState::from_real(&[]).is_err());
    }

    #[test]
    fn outer_products() {
        let rho0 = density_from_pure(&PureState::basis(2, 0).unwrap());
        assert_close(
            rho0.matrix(),
            &CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
            0.0,
        );
        let rho_plus = density_from_pure(&plus());
        for z in rho_plus.matrix().iter() {
            assert!((z - c(0.5, 0.0)).norm() < 1e-15);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..6 {
            let psi = random::haar_pure_state(n, &mut rng);
            let rho = density_from_pure(&psi);
            rho.check_invariants().unwrap();
            assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
            assert!((rho.purity() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn born_on_eigenstates_and_superpositions() {
        let z = Povm::computational_basis(2);
        let p = born_probabilities(&DensityMatrix::basis(2, 0).unwrap(), &z).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        let p = born_probabilities(&density_from_pure(&plus()), &z).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert!(matches!(
            born_probabilities(&DensityMatrix::maximally_mixed(3), &z),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    // Element-wise oracle: sum_{ij} rho_ij * E_ji, written independently of
    // `trace_of_product`.
    fn born_oracle(rho: &CMatrix, effect: &CMatrix) -> f64 {
        let et = effect.transpose();
        rho.component_mul(&et).iter().sum::<C64>().re
    }

    #[test]
    fn born_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 2..=5 {
            for k in 2..=5 {
                let rho = random::random_density(n, &mut rng);
                let m = random::random_povm(n, k, &mut rng);
                let p = born_probabilities(&rho, &m).unwrap();
                for (pi, e) in p.iter().zip(m.effects()) {
                    assert!((pi - born_oracle(rho.matrix(), e)).abs() < 1e-12);
                }
                assert!((p.iter().sum::<f64>() - 1.0).abs() < PROB_TOL);
            }
        }
    }

    #[test]
    fn compose_basis_bookkeeping() {
        let r = compose(
            &DensityMatrix::basis(2, 0).unwrap(),
            &DensityMatrix::basis(2, 1).unwrap(),
        );
        assert_eq!(r.dim(), 4);
        let mut expected = CMatrix::zeros(4, 4);
        expected[(1, 1)] = c(1.0, 0.0);
        assert_close(r.matrix(), &expected, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random::random_density(3, &mut rng);
        let trivial = DensityMatrix::maximally_mixed(1);
        assert_close(compose(&rho, &trivial).matrix(), rho.matrix(), 0.0);

        let a = density_from_pure(&random::haar_pure_state(2, &mut rng));
        let b = density_from_pure(&random::haar_pure_state(3, &mut rng));
        let ab = compose(&a, &b);
        ab.check_invariants().unwrap();
        assert!((ab.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_cases() {
        let rho = density_from_pure(&plus());
        let f0 = DensityMatrix::basis(2, 0).unwrap().into_matrix();
        let f1 = DensityMatrix::basis(2, 1).unwrap().into_matrix();
        let out = project(&rho, &f0).unwrap();
        out.check_invariants().unwrap();
        assert_close(out.matrix(), &f0, 1e-15);
        let same = project(&rho, &CMatrix::identity(2, 2)).unwrap();
        assert_close(same.matrix(), rho.matrix(), 1e-15);
        let err = project(&DensityMatrix::basis(2, 0).unwrap(), &f1).unwrap_err();
        assert!(matches!(err, Error::ImpossiblePostselection(_)));
    }

    #[test]
    fn transform_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random::random_density(3, &mut rng);
        let same = transform(&rho, &UnitaryTransform::identity(3)).unwrap();
        assert_close(same.matrix(), rho.matrix(), 0.0);

        let flipped = transform(&DensityMatrix::basis(2, 0).unwrap(), &pauli_x()).unwrap();
        assert_close(flipped.matrix(), DensityMatrix::basis(2, 1).unwrap().matrix(), 0.0);

        for n in 2..=5 {
            let rho = random::random_density(n, &mut rng);
            let u = random::haar_unitary(n, &mut rng);
            let out = transform(&rho, &u).unwrap();
            out.check_invariants().unwrap();
            for (x, y) in rho.eigenvalues().iter().zip(out.eigenvalues()) {
                assert!((x - y).abs() < 1e-10);
            }
        }
        assert!(transform(&rho, &pauli_x()).is_err());
    }

    #[test]
    fn mix_cases() {
        let a = DensityMatrix::basis(2, 0).unwrap();
        let b = DensityMatrix::basis(2, 1).unwrap();
        assert_eq!(mix(&a, &b, 1.0).unwrap().matrix(), a.matrix());
        assert_close(
            mix(&a, &b, 0.5).unwrap().matrix(),
            DensityMatrix::maximally_mixed(2).matrix(),
            0.0,
        );
        assert!(matches!(mix(&a, &b, 1.5), Err(Error::InvalidWeight(_))));
        assert!(matches!(mix(&a, &b, -0.1), Err(Error::InvalidWeight(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r1 = random::random_density(3, &mut rng);
        let r2 = random::random_density(3, &mut rng);
        let m = random::random_povm(3, 4, &mut rng);
        let x = 0.3;
        let mixed = born_probabilities(&mix(&r1, &r2, x).unwrap(), &m).unwrap();
        let p1 = born_probabilities(&r1, &m).unwrap();
        let p2 = born_probabilities(&r2, &m).unwrap();
        for i in 0..4 {
            assert!((mixed[i] - (x * p1[i] + (1.0 - x) * p2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_cases() {
        let zz = DensityMatrix::basis(4, 0).unwrap();
        let a = partial_trace(&zz, (2, 2), Subsystem::A).unwrap();
        assert_close(a.matrix(), DensityMatrix::basis(2, 0).unwrap().matrix(), 0.0);

        let bell = density_from_pure(&PureState::from_real(&[1.0, 0.0, 0.0, 1.0]).unwrap());
        for keep in [Subsystem::A, Subsystem::B] {
            let r = partial_trace(&bell, (2, 2), keep).unwrap();
            assert_close(r.matrix(), DensityMatrix::maximally_mixed(2).matrix(), 1e-15);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ra = random::random_density(2, &mut rng);
        let rb = random::random_density(3, &mut rng);
        let ab = compose(&ra, &rb);
        let back_a = partial_trace(&ab, (2, 3), Subsystem::A).unwrap();
        let back_b = partial_trace(&ab, (2, 3), Subsystem::B).unwrap();
        assert_close(back_a.matrix(), ra.matrix(), 1e-12);
        assert_close(back_b.matrix(), rb.matrix(), 1e-12);
        assert!(matches!(
            partial_trace(&ab, (2, 2), Subsystem::A),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_constructors() {
        let not_herm = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(DensityMatrix::new(not_herm).is_err());
        let negative = CMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        assert!(DensityMatrix::new(negative).is_err());
        assert!(Povm::new(vec![CMatrix::identity(2, 2) * c(0.5, 0.0)]).is_err());
        assert!(UnitaryTransform::new(CMatrix::identity(2, 2) * c(2.0, 0.0)).is_err());
    }

    #[test]
    fn eigenstate_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..=5 {
            let u = random::haar_unitary(n, &mut rng);
            let m = Povm::from_basis(&u);
            for k in 0..n {
                let psi = u.apply(&PureState::basis(n, k).unwrap()).unwrap();
                let p = born_probabilities(&density_from_pure(&psi), &m).unwrap();
                for (i, pi) in p.iter().enumerate() {
                    let want = if i == k { 1.0 } else { 0.0 };
                    assert!((pi - want).abs() < 1e-10);
                }
            }
        }
    }
}
