use nalgebra::DMatrix;

use super::basis::FockBasis;
use super::modes::ModeSet;
use super::sparse::{SparseOperator, Term};
use crate::{Error, Result, C64};

fn check_len(basis: &FockBasis, f: &[C64]) -> Result<()> {
    if f.len() != basis.n_modes() {
        return Err(Error::DimensionMismatch { expected: basis.n_modes(), got: f.len() });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("mode vector must be finite".into()));
    }
    Ok(())
}

/// `a(f) = Σ_j f̄_j a_j`.
pub fn annihilator(basis: &FockBasis, f: &[C64]) -> Result<SparseOperator> {
    check_len(basis, f)?;
    let terms: Vec<Term> = f.iter().enumerate().map(|(j, v)| Term::new(v.conj(), &[], &[j])).collect();
    SparseOperator::from_terms(basis, &terms, false)
}

/// `a*(f) = Σ_j f_j a*_j`.
pub fn creator(basis: &FockBasis, f: &[C64]) -> Result<SparseOperator> {
    check_len(basis, f)?;
    let terms: Vec<Term> = f.iter().enumerate().map(|(j, &v)| Term::new(v, &[j], &[])).collect();
    SparseOperator::from_terms(basis, &terms, false)
}

/// Field operator `φ(f) = a*(f) + a(f)`.
pub fn field_operator(basis: &FockBasis, f: &[C64]) -> Result<SparseOperator> {
    check_len(basis, f)?;
    let mut terms: Vec<Term> = f.iter().enumerate().map(|(j, &v)| Term::new(v, &[j], &[])).collect();
    terms.extend(f.iter().enumerate().map(|(j, v)| Term::new(v.conj(), &[], &[j])));
    SparseOperator::from_terms(basis, &terms, true)
}

/// Second quantization `dΓ(J) = Σ_{pq} J_pq a*_p a_q`.
pub fn dgamma(basis: &FockBasis, j: &DMatrix<C64>) -> Result<SparseOperator> {
    let m = basis.n_modes();
    if j.nrows() != m || j.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, got: j.nrows().max(j.ncols()) });
    }
    if j.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("one-body matrix must be finite".into()));
    }
    let hermitian = (j - j.adjoint()).iter().all(|v| v.norm() <= 1e-14);
    let mut terms = Vec::new();
    for p in 0..m {
        for q in 0..m {
            let v = j[(p, q)];
            if v != C64::new(0.0, 0.0) {
                terms.push(Term::new(v, &[p], &[q]));
            }
        }
    }
    SparseOperator::from_terms(basis, &terms, hermitian)
}

/// Number operator `𝒩`.
pub fn number_operator(basis: &FockBasis) -> SparseOperator {
    let diag: Vec<C64> = (0..basis.dim()).map(|i| C64::new(basis.particle_number(i) as f64, 0.0)).collect();
    SparseOperator::diagonal(&diag, true)
}

/// Eigenvalues of `𝒩` in basis order.
pub fn particle_numbers(basis: &FockBasis) -> Vec<f64> {
    (0..basis.dim()).map(|i| basis.particle_number(i) as f64).collect()
}

/// Eigenvalues of the total momentum `Σ j n_j` in basis order.
pub fn total_momenta(basis: &FockBasis, modes: &ModeSet) -> Vec<f64> {
    (0..basis.dim())
        .map(|i| basis.occupation(i).iter().zip(modes.momenta()).map(|(&n, &j)| n as f64 * j as f64).sum())
        .collect()
}

/// Parity `(-1)^𝒩` in basis order.
pub fn parities(basis: &FockBasis) -> Vec<f64> {
    (0..basis.dim()).map(|i| if basis.particle_number(i).is_multiple_of(2) { 1.0 } else { -1.0 }).collect()
}

/// `ℋ = Σ_j ε_j a*_j a_j - (λ/2N) Σ V_{pq,rs} a*_p a*_q a_s a_r`.
pub fn hamiltonian(basis: &FockBasis, modes: &ModeSet, lambda: f64, n: usize) -> Result<SparseOperator> {
    if n == 0 {
        return Err(Error::InvalidParameter("particle number must be >= 1".into()));
    }
    if modes.len() != basis.n_modes() {
        return Err(Error::DimensionMismatch { expected: basis.n_modes(), got: modes.len() });
    }
    let mut terms: Vec<Term> =
        modes.energies().iter().enumerate().map(|(j, &e)| Term::new(C64::new(e, 0.0), &[j], &[j])).collect();
    if lambda != 0.0 {
        let c = -lambda / (2.0 * n as f64);
        for e in modes.interaction() {
            terms.push(Term::new(C64::new(c * e.value, 0.0), &[e.p, e.q], &[e.s, e.r]));
        }
    }
    SparseOperator::from_terms(basis, &terms, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_grid::RingKernel;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    fn norm(v: &[C64]) -> f64 {
        v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn vacuum_is_annihilated() {
        let b = FockBasis::new(3, 4).unwrap();
        let f = vec![C64::new(0.3, 0.2), C64::new(-1.0, 0.5), C64::new(0.0, 2.0)];
        let a = annihilator(&b, &f).unwrap();
        let mut omega = vec![C64::new(0.0, 0.0); b.dim()];
        omega[0] = C64::new(1.0, 0.0);
        assert!(norm(&a.matvec(&omega)) == 0.0);
        let g = vec![C64::new(1.0, 0.0), C64::new(0.5, -0.5), C64::new(0.2, 0.1)];
        let ag = creator(&b, &g).unwrap().matvec(&omega);
        let v = a.matvec(&ag)[0];
        let inner: C64 = f.iter().zip(&g).map(|(x, y)| x.conj() * y).sum();
        assert!((v - inner).norm() < 1e-14);
        assert!(annihilator(&b, &f[..2]).is_err());
    }

    #[test]
    fn creator_is_adjoint_of_annihilator() {
        let b = FockBasis::new(3, 5).unwrap();
        let f = vec![C64::new(0.3, 0.2), C64::new(-1.0, 0.5), C64::new(0.0, 2.0)];
        let a = annihilator(&b, &f).unwrap();
        let c = creator(&b, &f).unwrap();
        assert_eq!(a.adjoint().max_abs_diff(&c), 0.0);
    }

    #[test]
    fn dgamma_identity_is_number_operator() {
        let b = FockBasis::new(3, 4).unwrap();
        let id = DMatrix::<C64>::identity(3, 3);
        let d = dgamma(&b, &id).unwrap();
        assert!(d.max_abs_diff(&number_operator(&b)) < 1e-15);
        let occ = b.index_of(&[2, 1, 0]).unwrap();
        assert_eq!(d.row(occ).collect::<Vec<_>>(), vec![(occ, C64::new(3.0, 0.0))]);
        assert!(dgamma(&b, &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn number_bounds_on_random_states() {
        let b = FockBasis::new(3, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let nums = particle_numbers(&b);
        let jm = DMatrix::from_fn(3, 3, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let jm = &jm + jm.adjoint();
        let op_norm = jm.clone().symmetric_eigenvalues().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let dg = dgamma(&b, &jm).unwrap();
        for _ in 0..100 {
            let f = random_vec(&mut rng, 3);
            let psi = random_vec(&mut rng, b.dim());
            let a = annihilator(&b, &f).unwrap();
            let sqrt_n: Vec<C64> = psi.iter().zip(&nums).map(|(v, n)| v * n.sqrt()).collect();
            assert!(norm(&a.matvec(&psi)) <= norm(&f) * norm(&sqrt_n) * (1.0 + 1e-12));
            let n_psi: Vec<C64> = psi.iter().zip(&nums).map(|(v, n)| v * *n).collect();
            assert!(norm(&dg.matvec(&psi)) <= op_norm * norm(&n_psi) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn ccr_below_truncation() {
        let b = FockBasis::new(3, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let f = random_vec(&mut rng, 3);
            let g = random_vec(&mut rng, 3);
            let a = annihilator(&b, &f).unwrap().to_dense();
            let c = creator(&b, &g).unwrap().to_dense();
            let comm = &a * &c - &c * &a;
            let inner: C64 = f.iter().zip(&g).map(|(x, y)| x.conj() * y).sum();
            let safe = b.sector_range(b.n_max() - 1).end;
            for r in 0..safe {
                for col in 0..safe {
                    let expect = if r == col { inner } else { C64::new(0.0, 0.0) };
                    assert!((comm[(r, col)] - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hamiltonian_structure() {
        let modes = ModeSet::ring(4, 2.0 * PI, &RingKernel::RegularizedCoulomb { alpha: 0.05 }).unwrap();
        let b = FockBasis::new(4, 5).unwrap();
        let h = hamiltonian(&b, &modes, 0.8, 5).unwrap();
        assert!(h.hermiticity_defect() <= 1e-12);
        assert!(h.commutator_with_diagonal(&particle_numbers(&b)) <= 1e-12);
        assert!(h.commutator_with_diagonal(&total_momenta(&b, &modes)) <= 1e-12);
        let free = hamiltonian(&b, &modes, 0.0, 5).unwrap();
        for i in 0..b.dim() {
            let e: f64 = b.occupation(i).iter().zip(modes.energies()).map(|(&n, e)| n as f64 * e).sum();
            let row: Vec<_> = free.row(i).collect();
            if i == 0 {
                assert!(row.is_empty());
            } else {
                assert_eq!(row.len(), 1);
                assert!((row[0].1 - e).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn two_boson_block_matches_first_quantized_oracle() {
        let modes = ModeSet::ring(2, 2.0 * PI, &RingKernel::RegularizedCoulomb { alpha: 0.1 }).unwrap();
        let lambda = 1.3;
        let n = 2;
        let b = FockBasis::sector(2, 2).unwrap();
        let h = hamiltonian(&b, &modes, lambda, n).unwrap().to_dense();
        let mut got: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());

        // First-quantized: H = ε⊗1 + 1⊗ε - (λ/N) V on the product basis |pq⟩,
        // restricted to the symmetric subspace.
        let m = 2;
        let eps = modes.energies();
        let big = DMatrix::from_fn(m * m, m * m, |i, j| {
            let (p, q) = (i / m, i % m);
            let (r, s) = (j / m, j % m);
            let kin = if i == j { eps[p] + eps[q] } else { 0.0 };
            kin - lambda / n as f64 * modes.interaction_element(p, q, r, s)
        });
        let sym = |p: usize, q: usize| {
            let mut v = DVector::<f64>::zeros(m * m);
            v[p * m + q] += 1.0;
            v[q * m + p] += 1.0;
            let nrm = v.norm();
            v / nrm
        };
        let basis = [sym(0, 0), sym(0, 1), sym(1, 1)];
        let small = DMatrix::from_fn(3, 3, |i, j| basis[i].dot(&(&big * &basis[j])));
        let mut want: Vec<f64> = small.symmetric_eigenvalues().iter().copied().collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }
}
