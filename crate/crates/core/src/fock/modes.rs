use std::f64::consts::PI;

use crate::spectral_grid::{ring_coulomb_transform, ring_kernel_symbol, GridSpec, RingKernel};
use crate::{Error, Result, C64};

/// Matrix element `⟨pq|V|rs⟩` of the pair interaction between plane waves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionEntry {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
    pub value: f64,
}

/// Plane-wave modes `e^{i k_j x}/√L` on a ring, with one-body energies and the
/// momentum-conserving interaction tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    ring_length: f64,
    momenta: Vec<i64>,
    energies: Vec<f64>,
    kernel_hat: Vec<f64>,
    interaction: Vec<InteractionEntry>,
}

impl ModeSet {
    /// `m` consecutive momenta centered on zero (`j = -(m-1)/2 ..`), with the
    /// pair kernel given by `kernel`.
    pub fn ring(m: usize, ring_length: f64, kernel: &RingKernel) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("need at least one mode".into()));
        }
        if !(ring_length > 0.0) || !ring_length.is_finite() {
            return Err(Error::InvalidParameter(format!("ring length must be positive, got {ring_length}")));
        }
        let j0 = -(((m - 1) / 2) as i64);
        let momenta: Vec<i64> = (0..m as i64).map(|i| j0 + i).collect();
        let unit = 2.0 * PI / ring_length;
        // kernel_hat[d] = multiplier at momentum transfer d·unit, d = 0..m
        let kernel_hat: Vec<f64> = match kernel {
            RingKernel::RegularizedCoulomb { alpha } => {
                if !(*alpha > 0.0) || !alpha.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "the ring kernel needs alpha > 0, got {alpha}"
                    )));
                }
                (0..m).map(|d| ring_coulomb_transform(unit * d as f64, *alpha, ring_length)).collect()
            }
            RingKernel::Tabulated(samples) => {
                let grid = GridSpec::new(1, samples.len(), ring_length)?;
                if 2 * (m - 1) >= samples.len() {
                    return Err(Error::InvalidParameter(format!(
                        "tabulated kernel with {} samples cannot resolve {m} modes",
                        samples.len()
                    )));
                }
                let symbol = ring_kernel_symbol(&grid, kernel)?;
                symbol.values()[..m].to_vec()
            }
        };
        let energies = momenta.iter().map(|&j| (1.0 + (unit * j as f64).powi(2)).sqrt()).collect();
        let mut interaction = Vec::new();
        for p in 0..m {
            for q in 0..m {
                for r in 0..m {
                    let s = momenta[p] + momenta[q] - momenta[r] - j0;
                    if s < 0 || s >= m as i64 {
                        continue;
                    }
                    let d = (momenta[p] - momenta[r]).unsigned_abs() as usize;
                    interaction.push(InteractionEntry { p, q, r, s: s as usize, value: kernel_hat[d] / ring_length });
                }
            }
        }
        Ok(Self { ring_length, momenta, energies, kernel_hat, interaction })
    }

    pub fn len(&self) -> usize {
        self.momenta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.momenta.is_empty()
    }

    pub fn ring_length(&self) -> f64 {
        self.ring_length
    }

    /// Integer momenta `j` with `k_j = 2π j / L`.
    pub fn momenta(&self) -> &[i64] {
        &self.momenta
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Kernel multiplier at momentum transfer `d · 2π/L`, `d = 0..M`.
    pub fn kernel_hat(&self) -> &[f64] {
        &self.kernel_hat
    }

    /// Nonzero entries `⟨pq|V|rs⟩`.
    pub fn interaction(&self) -> &[InteractionEntry] {
        &self.interaction
    }

    /// Dense lookup of `⟨pq|V|rs⟩` (zero when momentum is not conserved).
    pub fn interaction_element(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        if self.momenta[p] + self.momenta[q] != self.momenta[r] + self.momenta[s] {
            return 0.0;
        }
        let d = (self.momenta[p] - self.momenta[r]).unsigned_abs() as usize;
        self.kernel_hat[d] / self.ring_length
    }

    fn check(&self, phi: &[C64]) -> Result<()> {
        if phi.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: phi.len() });
        }
        Ok(())
    }

    /// `Σ V_{pq,rs} φ̄_p φ̄_q φ_r φ_s`, real for every `φ`.
    pub fn interaction_energy(&self, phi: &[C64]) -> Result<f64> {
        self.check(phi)?;
        let mut acc = C64::new(0.0, 0.0);
        for e in &self.interaction {
            acc += e.value * (phi[e.p] * phi[e.q]).conj() * phi[e.r] * phi[e.s];
        }
        Ok(acc.re)
    }

    /// Hartree energy `Σ ε_j |φ_j|² - (λ/2) Σ V φ̄φ̄φφ`.
    pub fn hartree_energy(&self, phi: &[C64], lambda: f64) -> Result<f64> {
        let kinetic: f64 = self.energies.iter().zip(phi).map(|(e, v)| e * v.norm_sqr()).sum();
        Ok(kinetic - 0.5 * lambda * self.interaction_energy(phi)?)
    }
}

/// Hartree flow in the mode representation,
/// `i ∂φ_p = ε_p φ_p - λ Σ_{qrs} V_{pq,rs} φ̄_q φ_r φ_s`, integrated with RK4.
#[derive(Debug, Clone)]
pub struct ModeHartreeFlow<'a> {
    pub modes: &'a ModeSet,
    pub lambda: f64,
    /// Largest RK4 step used internally.
    pub max_substep: f64,
}

impl<'a> ModeHartreeFlow<'a> {
    pub fn new(modes: &'a ModeSet, lambda: f64) -> Self {
        Self { modes, lambda, max_substep: 2.5e-4 }
    }

    /// Right-hand side `-i (ε φ - λ W(φ))`.
    pub fn rhs(&self, phi: &[C64]) -> Vec<C64> {
        let mut nl = vec![C64::new(0.0, 0.0); phi.len()];
        for e in self.modes.interaction() {
            nl[e.p] += e.value * phi[e.q].conj() * phi[e.r] * phi[e.s];
        }
        let minus_i = C64::new(0.0, -1.0);
        phi.iter()
            .zip(self.modes.energies())
            .zip(&nl)
            .map(|((&v, &eps), &w)| minus_i * (eps * v - self.lambda * w))
            .collect()
    }

    pub fn rk4_step(&self, phi: &[C64], h: f64) -> Vec<C64> {
        let axpy = |a: &[C64], k: &[C64], c: f64| -> Vec<C64> { a.iter().zip(k).map(|(x, y)| x + y * c).collect() };
        let k1 = self.rhs(phi);
        let k2 = self.rhs(&axpy(phi, &k1, 0.5 * h));
        let k3 = self.rhs(&axpy(phi, &k2, 0.5 * h));
        let k4 = self.rhs(&axpy(phi, &k3, h));
        (0..phi.len())
            .map(|i| phi[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0))
            .collect()
    }

    /// Advances `phi` by `t` (either sign).
    pub fn propagate(&self, phi: &[C64], t: f64) -> Vec<C64> {
        let steps = (t.abs() / self.max_substep).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        let mut cur = phi.to_vec();
        for _ in 0..steps {
            cur = self.rk4_step(&cur, h);
        }
        cur
    }

    /// Samples `φ(i·dt)` for `i = 0..=steps`.
    pub fn sample(&self, phi0: &[C64], dt: f64, steps: usize) -> Result<Vec<Vec<C64>>> {
        self.modes.check(phi0)?;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(phi0.to_vec());
        for i in 0..steps {
            let next = self.propagate(&out[i], dt);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUpSuspected { t: (i + 1) as f64 * dt, reason: "non-finite mode amplitudes".into() });
            }
            out.push(next);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modes(m: usize) -> ModeSet {
        ModeSet::ring(m, 2.0 * PI, &RingKernel::RegularizedCoulomb { alpha: 1e-2 }).unwrap()
    }

    #[test]
    fn band_and_energies() {
        let ms = modes(8);
        assert_eq!(ms.momenta(), &[-3, -2, -1, 0, 1, 2, 3, 4]);
        assert!((ms.energies()[4] - 2f64.sqrt()).abs() < 1e-15);
        assert!(ms.energies().iter().all(|&e| e >= 1.0));
        assert_eq!(modes(3).momenta(), &[-1, 0, 1]);
    }

    #[test]
    fn tensor_symmetries() {
        let ms = modes(5);
        let m = ms.len();
        let mut count = 0;
        for p in 0..m {
            for q in 0..m {
                for r in 0..m {
                    for s in 0..m {
                        let v = ms.interaction_element(p, q, r, s);
                        assert_eq!(v, ms.interaction_element(r, s, p, q));
                        assert_eq!(v, ms.interaction_element(q, p, s, r));
                        if ms.momenta()[p] + ms.momenta()[q] != ms.momenta()[r] + ms.momenta()[s] {
                            assert_eq!(v, 0.0);
                        } else {
                            count += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(count, ms.interaction().len());
        for e in ms.interaction() {
            assert_eq!(e.value, ms.interaction_element(e.p, e.q, e.r, e.s));
        }
    }

    #[test]
    fn tabulated_kernel_matches_constant() {
        let ms = ModeSet::ring(3, 2.0 * PI, &RingKernel::Tabulated(vec![1.0; 16])).unwrap();
        assert!((ms.kernel_hat()[0] - 2.0 * PI).abs() < 1e-12);
        assert!(ms.kernel_hat()[1].abs() < 1e-12);
        assert!(ModeSet::ring(9, 2.0 * PI, &RingKernel::Tabulated(vec![1.0; 16])).is_err());
    }

    #[test]
    fn flow_conserves_mass_and_energy() {
        let ms = modes(4);
        let flow = ModeHartreeFlow::new(&ms, 0.7);
        let mut phi: Vec<C64> = (0..4).map(|j| C64::new(1.0 + j as f64, 0.3 * j as f64)).collect();
        let n: f64 = phi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        phi.iter_mut().for_each(|v| *v /= n);
        let e0 = ms.hartree_energy(&phi, 0.7).unwrap();
        let out = flow.propagate(&phi, 1.0);
        let mass: f64 = out.iter().map(|v| v.norm_sqr()).sum();
        assert!((mass - 1.0).abs() < 1e-11);
        assert!((ms.hartree_energy(&out, 0.7).unwrap() - e0).abs() < 1e-11);
        let back = flow.propagate(&out, -1.0);
        let err: f64 = back.iter().zip(&phi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-11);
    }

    #[test]
    fn free_flow_is_phase_rotation() {
        let ms = modes(3);
        let flow = ModeHartreeFlow::new(&ms, 0.0);
        let phi = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8), C64::new(0.0, 0.0)];
        let out = flow.propagate(&phi, 0.7);
        for j in 0..3 {
            let exact = phi[j] * C64::from_polar(1.0, -0.7 * ms.energies()[j]);
            assert!((out[j] - exact).norm() < 1e-12);
        }
    }
}
