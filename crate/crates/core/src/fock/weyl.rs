use std::sync::Arc;

use log::warn;
use nalgebra::DMatrix;

use super::basis::FockBasis;
use super::krylov::{propagate, KrylovOptions};
use super::sparse::{SparseOperator, Term};
use super::state::{coherent_state, FockVector};
use crate::{Error, Result, C64};

/// Weyl operator `W(f) = exp(a*(f) - a(f))` on a truncated basis, applied to
/// vectors by Krylov propagation of the Hermitian generator `i(a*(f) - a(f))`.
#[derive(Debug, Clone)]
pub struct WeylOperator {
    basis: Arc<FockBasis>,
    f: Vec<C64>,
    generator: SparseOperator,
    defect: f64,
    options: KrylovOptions,
}

/// Smallest `n_max` for which the Poisson tail of `W(f)Ω` is negligible.
pub fn safe_n_max(f_norm_sq: f64) -> usize {
    (f_norm_sq + 10.0 * f_norm_sq.sqrt() + 20.0).ceil() as usize
}

/// Builds `W(f)` and measures its truncation defect: the largest coefficient
/// error of `W(f)Ω` against the closed-form coherent state.
pub fn weyl(basis: Arc<FockBasis>, f: &[C64]) -> Result<WeylOperator> {
    if f.len() != basis.n_modes() {
        return Err(Error::DimensionMismatch { expected: basis.n_modes(), got: f.len() });
    }
    if basis.n_min() > 0 {
        return Err(Error::InvalidParameter("Weyl operators need a basis starting at the vacuum".into()));
    }
    let norm_sq: f64 = f.iter().map(|v| v.norm_sqr()).sum();
    if basis.n_max() < safe_n_max(norm_sq) {
        warn!(
            "n_max = {} below the safe truncation {} for |f|^2 = {norm_sq:.3}",
            basis.n_max(),
            safe_n_max(norm_sq)
        );
    }
    let i = C64::new(0.0, 1.0);
    let mut terms: Vec<Term> = f.iter().enumerate().map(|(j, &v)| Term::new(i * v, &[j], &[])).collect();
    terms.extend(f.iter().enumerate().map(|(j, v)| Term::new(-i * v.conj(), &[], &[j])));
    let generator = SparseOperator::from_terms(&basis, &terms, true)?;
    let mut op = WeylOperator { basis: basis.clone(), f: f.to_vec(), generator, defect: 0.0, options: KrylovOptions::default() };
    let omega = FockVector::vacuum(basis.clone())?;
    let got = op.apply(&omega)?;
    let want = coherent_state(basis, f)?;
    op.defect = got.coeffs().iter().zip(want.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    if op.defect > 1e-6 {
        return Err(Error::WeylTruncation { defect: op.defect });
    }
    Ok(op)
}

impl WeylOperator {
    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn displacement(&self) -> &[C64] {
        &self.f
    }

    pub fn truncation_defect(&self) -> f64 {
        self.defect
    }

    /// `W(f) ψ`.
    pub fn apply(&self, psi: &FockVector) -> Result<FockVector> {
        let (out, _) = propagate(&self.generator, psi.coeffs(), 1.0, &self.options)?;
        psi.with_coeffs(out)
    }

    /// `W*(f) ψ = W(-f) ψ`.
    pub fn apply_adjoint(&self, psi: &FockVector) -> Result<FockVector> {
        let (out, _) = propagate(&self.generator, psi.coeffs(), -1.0, &self.options)?;
        psi.with_coeffs(out)
    }

    /// Dense matrix, for small bases.
    pub fn to_dense(&self) -> Result<DMatrix<C64>> {
        let dim = self.basis.dim();
        if dim > 4000 {
            return Err(Error::ResourceGuard(format!("dense Weyl matrix of dimension {dim}")));
        }
        let mut m = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut e = vec![C64::new(0.0, 0.0); dim];
            e[c] = C64::new(1.0, 0.0);
            let (col, _) = propagate(&self.generator, &e, 1.0, &self.options)?;
            for (r, v) in col.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        Ok(m)
    }
}
