//! Fluctuations around the mode-space Hartree flow.
//!
//! With `ℋ = dΓ(ε) - (λ/2N) Σ V_{pq,rs} a*_p a*_q a_s a_r` and `φ_t` solving
//! the mode Hartree equation, the fluctuation dynamics
//! `𝒰(t) = e^{-iω(t)} W*(√N φ_t) e^{-iℋt} W(√N φ_0)` is generated by
//! `𝓛₂(t) + 𝓛₃(t) + 𝓛₄`, where
//!
//! - `𝓛₂ = dΓ(ε) - λ Σ V (φ̄_q φ_s a*_p a_r + φ̄_q φ_r a*_p a_s)
//!   - (λ/2) Σ V (φ_r φ_s a*_p a*_q + φ̄_p φ̄_q a_s a_r)`
//! - `𝓛₃ = -(λ/√N) Σ V (φ_r a*_p a*_q a_s + φ̄_q a*_p a_s a_r)`
//! - `𝓛₄ = -(λ/2N) Σ V a*_p a*_q a_s a_r`
//!
//! and `ω(t) = -(λN/2) ∫_0^t Σ V φ̄_p φ̄_q φ_r φ_s dτ`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::fock::basis::FockBasis;
use crate::fock::krylov::{dot, propagate, KrylovOptions};
use crate::fock::marginal::one_particle_marginal;
use crate::fock::modes::{ModeHartreeFlow, ModeSet};
use crate::fock::operators::{dgamma, field_operator, hamiltonian};
use crate::fock::sparse::{SparseOperator, Term};
use crate::fock::state::{factorized_state, FockVector};
use crate::fock::weyl::{safe_n_max, weyl};
use crate::laguerre::d_n;
use crate::{Error, Result, C64};

/// Generators of the fluctuation dynamics at one instant.
#[derive(Debug, Clone)]
pub struct GeneratorBundle {
    pub l2: SparseOperator,
    pub l3: SparseOperator,
    pub l4: SparseOperator,
}

fn check_inputs(basis: &FockBasis, modes: &ModeSet, phi: &[C64], n: usize) -> Result<()> {
    if modes.len() != basis.n_modes() {
        return Err(Error::DimensionMismatch { expected: basis.n_modes(), got: modes.len() });
    }
    if phi.len() != modes.len() {
        return Err(Error::DimensionMismatch { expected: modes.len(), got: phi.len() });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    Ok(())
}

fn quadratic_terms(modes: &ModeSet, phi: &[C64], lambda: f64) -> Vec<Term> {
    let m = modes.len();
    let zero = C64::new(0.0, 0.0);
    let mut one_body = vec![zero; m * m];
    let mut create = vec![zero; m * m];
    let mut annihilate = vec![zero; m * m];
    for (j, &e) in modes.energies().iter().enumerate() {
        one_body[j * m + j] += e;
    }
    for e in modes.interaction() {
        let v = lambda * e.value;
        one_body[e.p * m + e.r] -= v * phi[e.q].conj() * phi[e.s];
        one_body[e.p * m + e.s] -= v * phi[e.q].conj() * phi[e.r];
        create[e.p * m + e.q] -= 0.5 * v * phi[e.r] * phi[e.s];
        annihilate[e.s * m + e.r] -= 0.5 * v * (phi[e.p] * phi[e.q]).conj();
    }
    let mut terms = Vec::new();
    for a in 0..m {
        for b in 0..m {
            if one_body[a * m + b] != zero {
                terms.push(Term::new(one_body[a * m + b], &[a], &[b]));
            }
            if create[a * m + b] != zero {
                terms.push(Term::new(create[a * m + b], &[a, b], &[]));
            }
            if annihilate[a * m + b] != zero {
                terms.push(Term::new(annihilate[a * m + b], &[], &[a, b]));
            }
        }
    }
    terms
}

fn cubic_terms(modes: &ModeSet, phi: &[C64], lambda: f64, n: usize) -> Vec<Term> {
    let m = modes.len();
    let zero = C64::new(0.0, 0.0);
    let mut up = vec![zero; m * m * m];
    let mut down = vec![zero; m * m * m];
    let c = -lambda / (n as f64).sqrt();
    for e in modes.interaction() {
        up[(e.p * m + e.q) * m + e.s] += c * e.value * phi[e.r];
        down[(e.p * m + e.s) * m + e.r] += c * e.value * phi[e.q].conj();
    }
    let mut terms = Vec::new();
    for a in 0..m {
        for b in 0..m {
            for d in 0..m {
                let i = (a * m + b) * m + d;
                if up[i] != zero {
                    terms.push(Term::new(up[i], &[a, b], &[d]));
                }
                if down[i] != zero {
                    terms.push(Term::new(down[i], &[a], &[b, d]));
                }
            }
        }
    }
    terms
}

fn quartic_terms(modes: &ModeSet, lambda: f64, n: usize) -> Vec<Term> {
    let c = -lambda / (2.0 * n as f64);
    modes
        .interaction()
        .iter()
        .map(|e| Term::new(C64::new(c * e.value, 0.0), &[e.p, e.q], &[e.s, e.r]))
        .collect()
}

/// `𝓛₄`, independent of time.
pub fn build_l4(basis: &FockBasis, modes: &ModeSet, lambda: f64, n: usize) -> Result<SparseOperator> {
    SparseOperator::from_terms(basis, &quartic_terms(modes, lambda, n), true)
}

/// `𝓛₂(t)`, `𝓛₃(t)` and `𝓛₄` for the mode vector `φ = φ_t`.
pub fn build_generators(basis: &FockBasis, modes: &ModeSet, phi: &[C64], lambda: f64, n: usize) -> Result<GeneratorBundle> {
    check_inputs(basis, modes, phi, n)?;
    let norm: f64 = phi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidParameter(format!("φ_t must be normalized, norm = {norm}")));
    }
    Ok(GeneratorBundle {
        l2: SparseOperator::from_terms(basis, &quadratic_terms(modes, phi, lambda), true)?,
        l3: SparseOperator::from_terms(basis, &cubic_terms(modes, phi, lambda, n), true)?,
        l4: build_l4(basis, modes, lambda, n)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `𝓛₂ + 𝓛₃ + 𝓛₄`
    Full,
    /// `𝓛₂ + 𝓛₄`, which conserves the parity of the particle number.
    Tilde,
}

/// Mode Hartree trajectory sampled every half step.
#[derive(Debug, Clone)]
pub struct HartreePath {
    pub dt: f64,
    /// `φ(i·dt/2)` for `i = 0..=2·steps`.
    pub samples: Vec<Vec<C64>>,
}

impl HartreePath {
    pub fn compute(modes: &ModeSet, phi0: &[C64], lambda: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let flow = ModeHartreeFlow::new(modes, lambda);
        Ok(Self { dt, samples: flow.sample(phi0, 0.5 * dt, 2 * steps)? })
    }

    pub fn steps(&self) -> usize {
        (self.samples.len() - 1) / 2
    }

    pub fn at_step(&self, k: usize) -> &[C64] {
        &self.samples[2 * k]
    }

    pub fn midpoint(&self, k: usize) -> &[C64] {
        &self.samples[2 * k + 1]
    }

    /// `ω(k·dt; 0)` for `k = 0..=steps`, Simpson rule on each step with
    /// compensated accumulation.
    pub fn omega(&self, modes: &ModeSet, lambda: f64, n: usize) -> Result<Vec<f64>> {
        let scale = -0.5 * lambda * n as f64;
        let energies: Vec<f64> =
            self.samples.iter().map(|p| modes.interaction_energy(p)).collect::<Result<_>>()?;
        let mut out = vec![0.0];
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for k in 0..self.steps() {
            let piece = self.dt / 6.0 * (energies[2 * k] + 4.0 * energies[2 * k + 1] + energies[2 * k + 2]);
            let y = scale * piece - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            out.push(sum);
        }
        Ok(out)
    }
}

/// Time-ordered product of midpoint exponentials `Π_k exp(-i dt 𝓛(t_k + dt/2))`,
/// applied to vectors with generators rebuilt at each step.
#[derive(Debug, Clone)]
pub struct FluctuationDynamics<'a> {
    basis: Arc<FockBasis>,
    modes: &'a ModeSet,
    path: &'a HartreePath,
    lambda: f64,
    n: usize,
    variant: Variant,
    l4: SparseOperator,
    options: KrylovOptions,
}

/// Result of propagating a vector under the fluctuation dynamics.
#[derive(Debug, Clone)]
pub struct Propagated {
    pub state: FockVector,
    pub unitarity_defect: f64,
}

impl<'a> FluctuationDynamics<'a> {
    pub fn new(basis: Arc<FockBasis>, modes: &'a ModeSet, path: &'a HartreePath, lambda: f64, n: usize, variant: Variant) -> Result<Self> {
        check_inputs(&basis, modes, path.at_step(0), n)?;
        let l4 = build_l4(&basis, modes, lambda, n)?;
        Ok(Self { basis, modes, path, lambda, n, variant, l4, options: KrylovOptions::default() })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    /// Generator used on step `k`.
    pub fn generator(&self, k: usize) -> Result<SparseOperator> {
        self.generator_at(self.path.midpoint(k))
    }

    /// `𝓛(φ)` for the chosen variant.
    pub fn generator_at(&self, phi: &[C64]) -> Result<SparseOperator> {
        let l2 = SparseOperator::from_terms(&self.basis, &quadratic_terms(self.modes, phi, self.lambda), true)?;
        let one = C64::new(1.0, 0.0);
        match self.variant {
            Variant::Tilde => SparseOperator::linear_combination(&[(one, &l2), (one, &self.l4)], true),
            Variant::Full => {
                let l3 = SparseOperator::from_terms(&self.basis, &cubic_terms(self.modes, phi, self.lambda, self.n), true)?;
                SparseOperator::linear_combination(&[(one, &l2), (one, &l3), (one, &self.l4)], true)
            }
        }
    }

    fn check_steps(&self, steps: usize) -> Result<()> {
        if steps > self.path.steps() {
            return Err(Error::InvalidParameter(format!("path has {} steps, {steps} requested", self.path.steps())));
        }
        Ok(())
    }

    /// `𝒰(steps·dt; 0) ψ`.
    pub fn apply(&self, psi: &FockVector, steps: usize) -> Result<Propagated> {
        self.check_steps(steps)?;
        self.run(psi, (0..steps).collect(), self.path.dt)
    }

    /// `𝒰*(steps·dt; 0) ψ`.
    pub fn apply_adjoint(&self, psi: &FockVector, steps: usize) -> Result<Propagated> {
        self.check_steps(steps)?;
        self.run(psi, (0..steps).rev().collect(), -self.path.dt)
    }

    fn run(&self, psi: &FockVector, order: Vec<usize>, dt: f64) -> Result<Propagated> {
        let n0 = psi.norm();
        let mut cur = psi.coeffs().to_vec();
        for k in order {
            let g = self.generator(k)?;
            cur = propagate(&g, &cur, dt, &self.options)?.0;
            let defect = (crate::fock::krylov::norm(&cur) - n0).abs();
            if defect > 1e-6 * n0.max(1.0) {
                return Err(Error::UnitarityDefect { defect });
            }
        }
        let state = psi.with_coeffs(cur)?;
        let unitarity_defect = (state.norm() - n0).abs();
        Ok(Propagated { state, unitarity_defect })
    }
}

/// `Σ_k ‖P_{2k} 𝒰̃*(t) φ(f) 𝒰̃(t) Ω‖²` with `t = steps·dt`.
pub fn parity_defect(dynamics: &FluctuationDynamics<'_>, f: &[C64], steps: usize) -> Result<f64> {
    if dynamics.variant != Variant::Tilde {
        return Err(Error::InvalidParameter("parity defect needs the parity-conserving dynamics".into()));
    }
    let basis = dynamics.basis().clone();
    let omega = FockVector::vacuum(basis.clone())?;
    let forward = dynamics.apply(&omega, steps)?.state;
    let field = field_operator(&basis, f)?;
    let kicked = forward.with_coeffs(field.matvec(forward.coeffs()))?;
    let back = dynamics.apply_adjoint(&kicked, steps)?.state;
    Ok((0..=basis.n_max()).step_by(2).map(|n| back.sector_norm(n).powi(2)).sum())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErrorTerms {
    pub e1: f64,
    pub e2: f64,
    /// `Tr J(γ_t - |φ_t⟩⟨φ_t|)`.
    pub tr_j_diff: f64,
    /// `|E1 + E2 - Tr J(γ_t - |φ_t⟩⟨φ_t|)|`, including imaginary parts.
    pub residual: f64,
}

/// States shared by all observables in an error-term evaluation.
#[derive(Debug, Clone)]
pub struct ErrorTermStates {
    pub n: usize,
    pub phi_t: Vec<C64>,
    /// `𝒰(t) W*(√N φ_0) (a*(φ_0))^N Ω/√N!` up to the common phase `e^{-iω}`.
    pub u_chi: FockVector,
    /// `𝒰(t) Ω` up to the same phase.
    pub u_omega: FockVector,
    pub gamma: DMatrix<C64>,
    pub d_n: f64,
    /// Largest Weyl truncation defect encountered.
    pub weyl_defect: f64,
}

/// Basis caps: small (sector and coherent dynamics) and large (Weyl-displaced
/// factorized state, whose particle number spreads over `[0, 4N]`).
pub fn error_term_caps(n: usize) -> (usize, usize) {
    let nf = n as f64;
    (safe_n_max(nf), (4.0 * nf + 10.0 * nf.sqrt() + 20.0).ceil() as usize)
}

/// Builds the states needed for `E¹_t(J)`, `E²_t(J)` at time `t`. The Hartree
/// path is integrated with RK4 steps of at most `dt`.
pub fn error_term_states(modes: &ModeSet, phi0: &[C64], lambda: f64, n: usize, t: f64, dt: f64) -> Result<ErrorTermStates> {
    let m = modes.len();
    let (n_small, n_large) = error_term_caps(n);
    let small = Arc::new(FockBasis::new(m, n_small)?);
    let large = Arc::new(FockBasis::new(m, n_large)?);
    let mut flow = ModeHartreeFlow::new(modes, lambda);
    flow.max_substep = flow.max_substep.min(dt);
    let phi_t = flow.propagate(phi0, t);
    let g0: Vec<C64> = phi0.iter().map(|v| v * (n as f64).sqrt()).collect();
    let gt: Vec<C64> = phi_t.iter().map(|v| v * (n as f64).sqrt()).collect();

    let h = hamiltonian(&small, modes, lambda, n)?;
    let opts = KrylovOptions::default();
    let fact = factorized_state(small.clone(), phi0, n)?;
    let psi_t = crate::fock::krylov::evolve_state(&h, &fact, t, &opts)?.0;
    let w0 = weyl(small.clone(), &g0)?;
    let coherent = w0.apply(&FockVector::vacuum(small.clone())?)?;
    let coherent_t = crate::fock::krylov::evolve_state(&h, &coherent, t, &opts)?.0;

    let wt = weyl(large.clone(), &gt)?;
    let u_chi = wt.apply_adjoint(&psi_t.embed(large.clone())?)?;
    let u_omega = wt.apply_adjoint(&coherent_t.embed(large)?)?;

    let sector = Arc::new(FockBasis::sector(m, n)?);
    let start = small.sector_range(n).start;
    let psi_sector = FockVector::new(sector.clone(), psi_t.coeffs()[start..start + sector.dim()].to_vec())?;
    let gamma = one_particle_marginal(&psi_sector)?.matrix().clone();
    Ok(ErrorTermStates {
        n,
        phi_t,
        u_chi,
        u_omega,
        gamma,
        d_n: d_n(n as u64, 128).to_f64(),
        weyl_defect: w0.truncation_defect().max(wt.truncation_defect()),
    })
}

impl ErrorTermStates {
    /// `E¹ = (d_N/N) ⟨𝒰χ, dΓ(J) 𝒰Ω⟩`, `E² = (d_N/√N) ⟨𝒰χ, φ(Jφ_t) 𝒰Ω⟩`.
    pub fn evaluate(&self, j: &DMatrix<C64>) -> Result<ErrorTerms> {
        let basis = self.u_chi.basis();
        let nf = self.n as f64;
        let dg = dgamma(basis, j)?;
        let e1 = dot(self.u_chi.coeffs(), &dg.matvec(self.u_omega.coeffs())) * (self.d_n / nf);
        let jphi: Vec<C64> = (0..j.nrows()).map(|p| (0..j.ncols()).map(|q| j[(p, q)] * self.phi_t[q]).sum()).collect();
        let field = field_operator(basis, &jphi)?;
        let e2 = dot(self.u_chi.coeffs(), &field.matvec(self.u_omega.coeffs())) * (self.d_n / nf.sqrt());
        let tr_jg = (j * &self.gamma).trace();
        let expect: C64 = self.phi_t.iter().zip(&jphi).map(|(a, b)| a.conj() * b).sum();
        let diff = tr_jg - expect;
        Ok(ErrorTerms { e1: e1.re, e2: e2.re, tr_j_diff: diff.re, residual: (e1 + e2 - diff).norm() })
    }
}
