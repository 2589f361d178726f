use log::debug;
use nalgebra::DMatrix;
use rayon::prelude::*;

use super::sparse::SparseOperator;
use super::state::FockVector;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    /// Lanczos subspace dimension per substep.
    pub krylov_dim: usize,
    /// Upper bound on the substep; further capped so that `‖H‖·dt <= 5`.
    pub max_dt: f64,
    /// Relative accuracy target per substep.
    pub tol: f64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { krylov_dim: 30, max_dt: f64::INFINITY, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KrylovReport {
    pub substeps: usize,
    /// Substeps retried with half the step after an accuracy or norm failure.
    pub halvings: usize,
    pub norm_defect: f64,
}

const CHUNK: usize = 4096;

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u.conj() * v).sum::<C64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    a.par_chunks(CHUNK)
        .map(|x| x.iter().map(|u| u.norm_sqr()).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum::<f64>()
        .sqrt()
}

fn axpy(y: &mut [C64], c: C64, x: &[C64]) {
    y.par_chunks_mut(CHUNK).zip(x.par_chunks(CHUNK)).for_each(|(ys, xs)| {
        for (u, v) in ys.iter_mut().zip(xs) {
            *u += c * v;
        }
    });
}

/// `ψ(t) = e^{-itH} ψ` by Lanczos propagation.
pub fn evolve_state(h: &SparseOperator, psi: &FockVector, t: f64, opts: &KrylovOptions) -> Result<(FockVector, KrylovReport)> {
    let (out, report) = propagate(h, psi.coeffs(), t, opts)?;
    Ok((psi.with_coeffs(out)?, report))
}

/// Slice form of [`evolve_state`].
pub fn propagate(h: &SparseOperator, psi: &[C64], t: f64, opts: &KrylovOptions) -> Result<(Vec<C64>, KrylovReport)> {
    if psi.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: psi.len() });
    }
    if !h.is_hermitian() {
        return Err(Error::InvalidParameter("Krylov propagation needs a Hermitian generator".into()));
    }
    if opts.krylov_dim < 2 {
        return Err(Error::InvalidParameter("Krylov dimension must be >= 2".into()));
    }
    let mut report = KrylovReport::default();
    let mut cur = psi.to_vec();
    let n0 = norm(&cur);
    if t == 0.0 || n0 == 0.0 {
        return Ok((cur, report));
    }
    let bound = h.gershgorin_bound();
    let mut step = opts.max_dt.min(if bound > 0.0 { 5.0 / bound } else { f64::INFINITY }).min(t.abs());
    let sign = t.signum();
    let mut done = 0.0f64;
    while done < t.abs() {
        let dt = step.min(t.abs() - done);
        let (next, est) = lanczos_step(h, &cur, sign * dt, opts.krylov_dim, opts.tol)?;
        let nn = norm(&next);
        let bad_norm = (nn - n0).abs() > 1e-10 * n0;
        if est > opts.tol * n0 || bad_norm {
            if dt < 1e-12 * t.abs() {
                return Err(Error::Krylov(format!("step collapsed below {dt:.3e} (estimate {est:.3e})")));
            }
            report.halvings += 1;
            step = 0.5 * dt;
            debug!("Krylov substep halved to {step:.3e} (estimate {est:.3e}, norm {nn})");
            continue;
        }
        cur = next;
        done += dt;
        report.substeps += 1;
    }
    report.norm_defect = (norm(&cur) - n0).abs();
    Ok((cur, report))
}

/// One Lanczos exponential step. Returns the propagated vector and an error
/// estimate from the change caused by the last Krylov vector; iteration stops
/// early once that change drops below `tol / 100`.
fn lanczos_step(h: &SparseOperator, psi: &[C64], dt: f64, m: usize, tol: f64) -> Result<(Vec<C64>, f64)> {
    let beta0 = norm(psi);
    let mut basis: Vec<Vec<C64>> = vec![psi.iter().map(|v| v / beta0).collect()];
    let mut alpha: Vec<f64> = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m);
    let mut w = vec![C64::new(0.0, 0.0); psi.len()];
    let mut y_prev: Vec<C64> = vec![C64::new(1.0, 0.0)];
    let mut y = y_prev.clone();
    let mut est = f64::INFINITY;
    for j in 0..m {
        h.matvec_into(&basis[j], &mut w);
        let a = dot(&basis[j], &w).re;
        alpha.push(a);
        axpy(&mut w, C64::new(-a, 0.0), &basis[j]);
        if j > 0 {
            axpy(&mut w, C64::new(-beta[j - 1], 0.0), &basis[j - 1]);
        }
        for v in &basis {
            let c = dot(v, &w);
            axpy(&mut w, -c, v);
        }
        let b = norm(&w);
        if !b.is_finite() || !a.is_finite() {
            return Err(Error::Krylov("non-finite Lanczos coefficients".into()));
        }
        let k = alpha.len();
        y = small_exponential(&alpha, &beta, k, dt);
        if b <= 1e-13 * (a.abs() + beta.last().copied().unwrap_or(0.0)).max(1e-300) {
            // invariant subspace: the step is exact
            est = 0.0;
            break;
        }
        if k >= 2 {
            let mut d2 = y[k - 1].norm_sqr();
            for i in 0..k - 1 {
                d2 += (y[i] - y_prev[i]).norm_sqr();
            }
            est = d2.sqrt();
            if est < 1e-2 * tol {
                break;
            }
        }
        if j + 1 == m {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
        y_prev = y.clone();
    }
    let mut out = vec![C64::new(0.0, 0.0); psi.len()];
    for (v, c) in basis.iter().zip(&y) {
        axpy(&mut out, c * beta0, v);
    }
    Ok((out, beta0 * est))
}

/// `exp(-i dt T) e_1` for the leading `k × k` block of the tridiagonal `T`,
/// by scaling and squaring of the Taylor series.
fn small_exponential(alpha: &[f64], beta: &[f64], k: usize, dt: f64) -> Vec<C64> {
    let minus_i_dt = C64::new(0.0, -dt);
    let a = DMatrix::from_fn(k, k, |i, j| {
        let v = if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        };
        minus_i_dt * v
    });
    let norm1 = (0..k).map(|j| a.column(j).iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let a = a / C64::new(2f64.powi(squarings), 0.0);
    let mut term = DMatrix::<C64>::identity(k, k);
    let mut sum = term.clone();
    for n in 1..=24 {
        term = &term * &a / C64::new(n as f64, 0.0);
        sum += &term;
        if term.iter().all(|v| v.norm() < 1e-18) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum.column(0).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::basis::FockBasis;
    use crate::fock::modes::ModeSet;
    use crate::fock::operators::hamiltonian;
    use crate::spectral_grid::RingKernel;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn random_state(dim: usize, seed: u64) -> Vec<C64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<C64> = (0..dim).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let n = norm(&v);
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn zero_time_is_identity() {
        let b = FockBasis::new(3, 4).unwrap();
        let modes = ModeSet::ring(3, 2.0 * PI, &RingKernel::RegularizedCoulomb { alpha: 0.1 }).unwrap();
        let h = hamiltonian(&b, &modes, 1.0, 4).unwrap();
        let psi = random_state(b.dim(), 1);
        let (out, rep) = propagate(&h, &psi, 0.0, &KrylovOptions::default()).unwrap();
        assert_eq!(out, psi);
        assert_eq!(rep.substeps, 0);
    }

    #[test]
    fn diagonal_generator_gives_phases() {
        let b = Arc::new(FockBasis::new(3, 6).unwrap());
        let modes = ModeSet::ring(3, 2.0 * PI, &RingKernel::RegularizedCoulomb { alpha: 0.1 }).unwrap();
        let h = hamiltonian(&b, &modes, 0.0, 6).unwrap();
        let psi = FockVector::new(b.clone(), random_state(b.dim(), 2)).unwrap();
        let t = 1.7;
        let (out, _) = evolve_state(&h, &psi, t, &KrylovOptions::default()).unwrap();
        for i in 0..b.dim() {
            let e: f64 = b.occupation(i).iter().zip(modes.energies()).map(|(&n, e)| n as f64 * e).sum();
            let exact = psi.coeffs()[i] * C64::from_polar(1.0, -t * e);
            assert!((out.coeffs()[i] - exact).norm() < 1e-10, "{i}: {:.3e}", (out.coeffs()[i] - exact).norm());
        }
    }

    #[test]
    fn forward_then_backward_and_norm() {
        let b = FockBasis::new(4, 5).unwrap();
        let modes = ModeSet::ring(4, 2.0 * PI, &RingKernel::RegularizedCoulomb { alpha: 0.05 }).unwrap();
        let h = hamiltonian(&b, &modes, 1.0, 5).unwrap();
        let psi = random_state(b.dim(), 3);
        let opts = KrylovOptions::default();
        let (fwd, rep) = propagate(&h, &psi, 2.0, &opts).unwrap();
        assert!(rep.norm_defect < 1e-10);
        let (back, _) = propagate(&h, &fwd, -2.0, &opts).unwrap();
        let err = psi.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn requires_hermitian_generator() {
        let b = FockBasis::new(2, 2).unwrap();
        let a = crate::fock::operators::annihilator(&b, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        assert!(propagate(&a, &vec![C64::new(1.0, 0.0); b.dim()], 1.0, &KrylovOptions::default()).is_err());
    }
}
