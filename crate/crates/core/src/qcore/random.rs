//! Random states, unitaries and measurements for sampling-based checks.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{hermitian_part, CMatrix, CVector, DensityMatrix, Povm, PureState, UnitaryTransform, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn ginibre<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(n, m, |_, _| gaussian(rng))
}

/// Unitarily invariant random pure state.
pub fn haar_pure_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PureState {
    loop {
        let v = CVector::from_fn(n, |_, _| gaussian(rng));
        if let Ok(psi) = PureState::new(v) {
            return psi;
        }
    }
}

/// Haar-random unitary via QR of a Ginibre matrix with the phase fix on R's diagonal.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> UnitaryTransform {
    let qr = ginibre(n, n, rng).qr();
    let (q, r) = qr.unpack();
    let mut q = q;
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    UnitaryTransform::from_trusted(q)
}

/// Full-rank random density matrix `G G† / Tr(G G†)` (Hilbert–Schmidt measure).
pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(n, n, rng);
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::from_trusted(m / tr)
}

/// Random `k`-outcome POVM: `E_i = S^{-1/2} A_i S^{-1/2}` with `A_i` random positive
/// and `S = Σ A_i`.
pub fn random_povm<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Povm {
    let parts: Vec<CMatrix> = (0..k)
        .map(|_| {
            let g = ginibre(n, n, rng);
            &g * g.adjoint()
        })
        .collect();
    let sum = parts.iter().fold(CMatrix::zeros(n, n), |acc, a| acc + a);
    let eig = SymmetricEigen::new(sum);
    let inv_sqrt = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from(1.0 / l.sqrt())));
    let s = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.adjoint();
    let effects = parts.iter().map(|a| hermitian_part(&(&s * a * &s))).collect();
    Povm::new(effects).expect("normalized random POVM is valid")
}
