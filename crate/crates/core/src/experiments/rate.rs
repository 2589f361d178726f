//! Trace-distance convergence of the one-particle marginal towards the Hartree
//! projector, as a function of the particle number.

use std::sync::Arc;

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::fit::{fit_loglog, LogLogFit};
use crate::fock::krylov::{evolve_state, KrylovOptions};
use crate::fock::marginal::{one_particle_marginal, raw_marginal, trace_norm, MarginalDensity};
use crate::fock::{factorized_state, hamiltonian, weyl, FockBasis, FockVector, ModeHartreeFlow, ModeSet};
use crate::fock::weyl::safe_n_max;
use crate::spectral_grid::RingKernel;
use crate::{Error, Result, C64};

/// Largest Fock basis a single rate point may allocate.
pub const MAX_BASIS: usize = 500_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSetup {
    pub modes: usize,
    pub ring_length: f64,
    pub lambda: f64,
    /// Requested cutoff; each point uses `min(alpha, N^-4)`.
    pub alpha: f64,
    pub t_end: f64,
    pub n_list: Vec<usize>,
    /// Defaults to `T/4, T/2, 3T/4, T` when empty.
    pub sample_times: Vec<f64>,
    /// Width `w` of the datum `φ_j ∝ exp(-j²/w)`.
    pub datum_width: f64,
    /// Also evolve `W(√N φ) Ω`.
    pub coherent: bool,
}

impl Default for RateSetup {
    fn default() -> Self {
        Self {
            modes: 8,
            ring_length: 2.0 * std::f64::consts::PI,
            lambda: 0.5,
            alpha: 1e-3,
            t_end: 1.0,
            n_list: (2..=10).collect(),
            sample_times: Vec::new(),
            datum_width: 4.0,
            coherent: false,
        }
    }
}

impl RateSetup {
    pub fn times(&self) -> Vec<f64> {
        if self.sample_times.is_empty() {
            (1..=4).map(|i| self.t_end * i as f64 / 4.0).collect()
        } else {
            self.sample_times.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes < 2 {
            return Err(Error::InvalidParameter("rate scan needs at least 2 modes".into()));
        }
        if !(self.alpha >= 0.0) || !(self.lambda >= 0.0) || !(self.t_end > 0.0) || !(self.ring_length > 0.0) {
            return Err(Error::InvalidParameter("alpha, lambda >= 0 and t_end, ring_length > 0 required".into()));
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) || self.n_list[0] == 0 {
            return Err(Error::InvalidParameter("N-list must be nonempty, positive and strictly ascending".into()));
        }
        let times = self.times();
        if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("sample times must be >= 0 and ascending".into()));
        }
        Ok(())
    }

    /// Normalized `φ_j ∝ exp(-k_j²/w)` over the ring momenta.
    pub fn datum(&self, modes: &ModeSet) -> Vec<C64> {
        let raw: Vec<f64> = modes.momenta().iter().map(|&j| (-((j * j) as f64) / self.datum_width).exp()).collect();
        let nrm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        raw.into_iter().map(|v| C64::new(v / nrm, 0.0)).collect()
    }

    /// `min(alpha, N^-4)`, the cutoff used at particle number `n`.
    pub fn clamped_alpha(&self, n: usize) -> f64 {
        self.alpha.min((n as f64).powi(-4))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Factorized,
    Coherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub t: f64,
    pub branch: Branch,
    pub alpha: f64,
    pub trace_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeFit {
    pub t: f64,
    pub branch: Branch,
    pub fit: LogLogFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub fits: Vec<TimeFit>,
    /// Points that could not be computed, with the reason.
    pub failures: Vec<(usize, String)>,
}

impl RateReport {
    /// Fit of the factorized branch at the largest sample time.
    pub fn headline(&self) -> Option<&TimeFit> {
        self.fits
            .iter()
            .filter(|f| f.branch == Branch::Factorized)
            .max_by(|a, b| a.t.partial_cmp(&b.t).unwrap())
    }
}

fn projector(phi: &[C64]) -> DMatrix<C64> {
    let v = nalgebra::DVector::from_column_slice(phi);
    &v * v.adjoint()
}

fn distances_for(setup: &RateSetup, n: usize) -> Result<Vec<RateRow>> {
    let alpha = setup.clamped_alpha(n);
    if alpha < setup.alpha {
        info!("N = {n}: cutoff clamped from {:e} to N^-4 = {alpha:e}", setup.alpha);
    }
    let modes = ModeSet::ring(setup.modes, setup.ring_length, &RingKernel::RegularizedCoulomb { alpha })?;
    let phi0 = setup.datum(&modes);
    let flow = ModeHartreeFlow::new(&modes, setup.lambda);
    let times = setup.times();
    let opts = KrylovOptions::default();

    let coherent_cap = safe_n_max(n as f64);
    let mut dims = vec![(Branch::Factorized, FockBasis::sector_size(setup.modes, n))];
    if setup.coherent {
        let d = (0..=coherent_cap).map(|k| FockBasis::sector_size(setup.modes, k)).fold(0usize, usize::saturating_add);
        dims.push((Branch::Coherent, d));
    }
    if let Some((_, d)) = dims.iter().find(|(_, d)| *d > MAX_BASIS) {
        return Err(Error::ResourceGuard(format!("N = {n}: basis dimension {d} exceeds {MAX_BASIS}")));
    }
    let mut rows = Vec::new();
    for (branch, _) in dims {
        let basis = Arc::new(match branch {
            Branch::Factorized => FockBasis::sector(setup.modes, n)?,
            Branch::Coherent => FockBasis::new(setup.modes, coherent_cap)?,
        });
        let h = hamiltonian(&basis, &modes, setup.lambda, n)?;
        let mut psi = match branch {
            Branch::Factorized => factorized_state(basis.clone(), &phi0, n)?,
            Branch::Coherent => {
                let g: Vec<C64> = phi0.iter().map(|v| v * (n as f64).sqrt()).collect();
                weyl(basis.clone(), &g)?.apply(&FockVector::vacuum(basis.clone())?)?
            }
        };
        let mut phi = phi0.clone();
        let mut t_now = 0.0;
        for &t in &times {
            psi = evolve_state(&h, &psi, t - t_now, &opts)?.0;
            phi = flow.propagate(&phi, t - t_now);
            t_now = t;
            let d = match branch {
                Branch::Factorized => {
                    let gamma = one_particle_marginal(&psi)?;
                    crate::fock::marginal::trace_distance(&gamma, &MarginalDensity::pure(&phi)?)?
                }
                Branch::Coherent => trace_norm(&(raw_marginal(&psi, n as f64) - projector(&phi))),
            };
            rows.push(RateRow { n, t, branch, alpha, trace_distance: d });
        }
    }
    Ok(rows)
}

/// Runs every `N` of the setup (in parallel) and fits `ln d` against `ln N`
/// at each sample time.
pub fn rate_scan(setup: &RateSetup) -> Result<RateReport> {
    setup.validate()?;
    let results: Vec<(usize, Result<Vec<RateRow>>)> =
        setup.n_list.par_iter().map(|&n| (n, distances_for(setup, n))).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (n, r) in results {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(e @ Error::ResourceGuard(_)) => return Err(e),
            Err(e) => {
                warn!("N = {n}: {e}");
                failures.push((n, e.to_string()));
            }
        }
    }
    let mut fits = Vec::new();
    for branch in [Branch::Factorized, Branch::Coherent] {
        for t in setup.times() {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.branch == branch && r.t == t)
                .map(|r| (r.n as f64, r.trace_distance))
                .collect();
            if pts.is_empty() {
                continue;
            }
            match fit_loglog(&pts) {
                Ok(fit) => fits.push(TimeFit { t, branch, fit }),
                Err(e) => warn!("no slope at t = {t}: {e}"),
            }
        }
    }
    Ok(RateReport { rows, fits, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RateSetup {
        RateSetup { modes: 3, n_list: vec![2, 3, 4, 5], t_end: 0.4, ..Default::default() }
    }

    #[test]
    fn free_and_initial_distances_vanish() {
        let setup = RateSetup { lambda: 0.0, ..small() };
        let report = rate_scan(&setup).unwrap();
        assert!(report.rows.iter().all(|r| r.trace_distance < 1e-9));
        let setup = RateSetup { sample_times: vec![0.0], ..small() };
        let report = rate_scan(&setup).unwrap();
        assert!(report.rows.iter().all(|r| r.trace_distance < 1e-9));
    }

    #[test]
    fn distances_in_range_and_fit_reported() {
        let report = rate_scan(&RateSetup { coherent: true, ..small() }).unwrap();
        assert_eq!(report.rows.len(), 4 * 4 * 2);
        assert!(report.rows.iter().all(|r| (0.0..=2.0).contains(&r.trace_distance)));
        assert_eq!(report.fits.len(), 8);
        assert!(report.headline().unwrap().fit.slope < 0.0);
    }

    #[test]
    fn short_list_has_no_slope() {
        let report = rate_scan(&RateSetup { n_list: vec![2, 3], ..small() }).unwrap();
        assert!(report.fits.is_empty());
        assert!(report.headline().is_none());
    }

    #[test]
    fn clamp_and_validation() {
        let s = RateSetup::default();
        assert_eq!(s.clamped_alpha(2), 1e-3);
        assert_eq!(s.clamped_alpha(10), 1e-4);
        assert!(RateSetup { n_list: vec![3, 2], ..small() }.validate().is_err());
        let guard = RateSetup { modes: 30, n_list: vec![12], ..small() };
        assert!(matches!(rate_scan(&guard), Err(Error::ResourceGuard(_))));
    }
}
