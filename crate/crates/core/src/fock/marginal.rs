use nalgebra::DMatrix;

use super::state::FockVector;
use crate::{Error, Result, C64};

/// One-particle density matrix in the mode representation.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDensity {
    matrix: DMatrix<C64>,
}

impl MarginalDensity {
    /// Validates Hermiticity (1e-12), positivity (-1e-10) and unit trace (1e-10).
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        let herm = (&matrix - matrix.adjoint()).iter().fold(0.0f64, |a, v| a.max(v.norm()));
        if herm > 1e-12 {
            return Err(Error::Assertion(format!("marginal not Hermitian (defect {herm:.3e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Assertion(format!("marginal trace {tr} differs from 1")));
        }
        let min = matrix.clone().symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &v| a.min(v));
        if min < -1e-10 {
            return Err(Error::Assertion(format!("marginal has negative eigenvalue {min:.3e}")));
        }
        Ok(Self { matrix })
    }

    /// Projector `|φ⟩⟨φ|` onto a unit mode vector.
    pub fn pure(phi: &[C64]) -> Result<Self> {
        let m = phi.len();
        Self::new(DMatrix::from_fn(m, m, |p, q| phi[p] * phi[q].conj()))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `Tr(J γ)`.
    pub fn expectation(&self, j: &DMatrix<C64>) -> C64 {
        (j * &self.matrix).trace()
    }
}

/// `(1/n) ⟨ψ, a*_q a_p ψ⟩` without sector or trace checks.
pub fn raw_marginal(psi: &FockVector, n: f64) -> DMatrix<C64> {
    let basis = psi.basis();
    let m = basis.n_modes();
    let c = psi.coeffs();
    let mut g = DMatrix::<C64>::zeros(m, m);
    let mut occ = vec![0u16; m];
    for i in 0..basis.dim() {
        let ci = c[i];
        if ci == C64::new(0.0, 0.0) {
            continue;
        }
        let src = basis.occupation(i);
        for p in 0..m {
            if src[p] == 0 {
                continue;
            }
            for q in 0..m {
                // a*_q a_p |src⟩
                occ.copy_from_slice(src);
                let mut amp = (occ[p] as f64).sqrt();
                occ[p] -= 1;
                occ[q] += 1;
                amp *= (occ[q] as f64).sqrt();
                if let Some(k) = basis.index_of(&occ) {
                    g[(p, q)] += c[k].conj() * ci * amp;
                }
            }
        }
    }
    g / C64::new(n, 0.0)
}

/// `γ_pq = ⟨ψ, a*_q a_p ψ⟩ / N` for a unit vector in a single `N` sector.
pub fn one_particle_marginal(psi: &FockVector) -> Result<MarginalDensity> {
    let sectors = psi.occupied_sectors(1e-24);
    let n = match sectors.as_slice() {
        [n] if *n >= 1 => *n,
        [0] => return Err(Error::InvalidParameter("vacuum has no one-particle marginal".into())),
        _ => return Err(Error::MixedSector),
    };
    let g = raw_marginal(psi, n as f64);
    // enforce exact Hermiticity lost to rounding
    let g = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    MarginalDensity::new(g)
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(a: &DMatrix<C64>) -> f64 {
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().map(|v| v.abs()).sum()
}

/// `Tr |γ₁ - γ₂|`.
pub fn trace_distance(a: &MarginalDensity, b: &MarginalDensity) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(trace_norm(&(&a.matrix - &b.matrix)))
}
