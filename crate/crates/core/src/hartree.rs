//! Time integration of the semi-relativistic Hartree equation
//!
//! ```text
//! i ∂_t φ = sqrt(1 - Δ) φ - λ (K * |φ|^2) φ
//! ```
//!
//! with `K = 1/|x|` or a regularized kernel. The integrator is a split-step
//! scheme: the kinetic flow is applied exactly in Fourier space and the
//! potential flow `φ ← exp(iλ dt (K * |φ|^2)) φ` is exact because it leaves
//! `|φ|` pointwise invariant. Both sub-flows are unitary, so mass is conserved
//! to round-off.

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::experiments::fit::{fit_loglog_guarded, LogLogFit};
use crate::spectral_grid::{
    apply_multiplier_inplace, coulomb_symbol, dispersion_symbol, hartree_potential, ring_kernel_symbol,
    sobolev_norm, windowed_coulomb_symbol, GridSpec, MultiplierMode, RingKernel, SpectralSymbol, WaveField,
};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SplittingOrder {
    /// Lie splitting: kinetic then potential.
    First,
    /// Strang splitting: half kinetic, potential, half kinetic.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HartreeParams {
    pub lambda: f64,
    pub alpha: f64,
    pub dt: f64,
    pub t_end: f64,
    pub splitting_order: SplittingOrder,
}

impl Default for HartreeParams {
    fn default() -> Self {
        Self { lambda: 1.0, alpha: 0.0, dt: 1e-3, t_end: 1.0, splitting_order: SplittingOrder::Second }
    }
}

impl HartreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::InvalidParameter("dt and t_end must be positive".into()));
        }
        if self.dt > self.t_end {
            return Err(Error::InvalidParameter(format!("dt = {} exceeds t_end = {}", self.dt, self.t_end)));
        }
        Ok(())
    }

    /// Number of steps and the step actually used (`t_end / steps`).
    pub fn step_count(&self) -> (usize, f64) {
        let steps = ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (steps, self.t_end / steps as f64)
    }
}

/// How the interaction multiplier is built from the grid and `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    /// 3D: `4π/|k|^2` for `α = 0`, windowed `1/(r+α)` otherwise; 1D: default ring kernel.
    Coulomb,
    /// 3D windowed `1/(r+α)` for every `α >= 0`.
    Windowed,
    /// 1D user-supplied ring kernel (ignores `alpha`).
    Ring(RingKernel),
}

impl KernelChoice {
    pub fn symbol(&self, grid: &GridSpec, alpha: f64) -> Result<SpectralSymbol> {
        match self {
            KernelChoice::Coulomb => coulomb_symbol(grid, alpha),
            KernelChoice::Windowed => windowed_coulomb_symbol(grid, alpha),
            KernelChoice::Ring(k) => ring_kernel_symbol(grid, k),
        }
    }
}

/// Dispersion and interaction multipliers for one grid.
#[derive(Debug, Clone)]
pub struct HartreeSymbols {
    pub dispersion: SpectralSymbol,
    pub potential: SpectralSymbol,
}

impl HartreeSymbols {
    pub fn new(grid: &GridSpec, alpha: f64, kernel: &KernelChoice) -> Result<Self> {
        Ok(Self { dispersion: dispersion_symbol(grid), potential: kernel.symbol(grid, alpha)? })
    }
}

fn potential_phase(field: &mut WaveField, symbols: &HartreeSymbols, lambda: f64, dt: f64) -> Result<()> {
    if lambda == 0.0 {
        return Ok(());
    }
    let v = hartree_potential(field, &symbols.potential)?;
    for (z, p) in field.values_mut().iter_mut().zip(&v) {
        *z *= C64::from_polar(1.0, lambda * dt * p);
    }
    Ok(())
}

/// One split step of size `dt` (negative `dt` runs backwards).
pub fn step(field: &WaveField, params: &HartreeParams, dt: f64, symbols: &HartreeSymbols) -> Result<WaveField> {
    let mut out = field.clone();
    step_inplace(&mut out, params, dt, symbols)?;
    if !out.is_finite() {
        return Err(Error::BlowUpSuspected { t: f64::NAN, reason: "non-finite sample".into() });
    }
    Ok(out)
}

fn step_inplace(field: &mut WaveField, params: &HartreeParams, dt: f64, symbols: &HartreeSymbols) -> Result<()> {
    match params.splitting_order {
        SplittingOrder::Second => {
            apply_multiplier_inplace(field, &symbols.dispersion, MultiplierMode::ExpNegIDt(0.5 * dt))?;
            potential_phase(field, symbols, params.lambda, dt)?;
            apply_multiplier_inplace(field, &symbols.dispersion, MultiplierMode::ExpNegIDt(0.5 * dt))?;
        }
        SplittingOrder::First => {
            apply_multiplier_inplace(field, &symbols.dispersion, MultiplierMode::ExpNegIDt(dt))?;
            potential_phase(field, symbols, params.lambda, dt)?;
        }
    }
    Ok(())
}

/// Conserved and monitored quantities at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub h_half: f64,
    pub h_one: f64,
    pub max_abs: f64,
}

/// `E[φ] = <φ, sqrt(1-Δ) φ> - (λ/2) ∫ (K * |φ|^2) |φ|^2`, with the same
/// discrete kernel as the flow.
pub fn energy(field: &WaveField, symbols: &HartreeSymbols, lambda: f64) -> Result<f64> {
    let kinetic = sobolev_norm(field, 0.5).powi(2);
    Ok(kinetic - 0.5 * lambda * interaction_integral(field, symbols)?)
}

fn interaction_integral(field: &WaveField, symbols: &HartreeSymbols) -> Result<f64> {
    let v = hartree_potential(field, &symbols.potential)?;
    let s: f64 = v.iter().zip(field.values()).map(|(p, z)| p * z.norm_sqr()).sum();
    Ok(s * field.grid().cell_volume())
}

pub fn diagnostics(field: &WaveField, symbols: &HartreeSymbols, lambda: f64, t: f64) -> Result<Diagnostics> {
    let h_half = sobolev_norm(field, 0.5);
    let energy = h_half * h_half - 0.5 * lambda * interaction_integral(field, symbols)?;
    Ok(Diagnostics {
        t,
        mass: field.mass(),
        energy,
        h_half,
        h_one: sobolev_norm(field, 1.0),
        max_abs: field.max_abs(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    BlowUpSuspected { t: f64, reason: String },
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    /// Keep every `snapshot_stride`-th field (0 keeps only the endpoints).
    pub snapshot_stride: usize,
    /// Abort when the H^{1/2} norm exceeds this multiple of its initial value.
    pub blowup_factor: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { snapshot_stride: 0, blowup_factor: 10.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<WaveField>,
    pub diagnostics: Vec<Diagnostics>,
    pub outcome: Outcome,
    /// Last finite field reached by the integrator.
    pub last: WaveField,
}

impl Trajectory {
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.diagnostics[0].energy;
        self.diagnostics.iter().map(|d| (d.energy - e0).abs()).fold(0.0, f64::max) / e0.abs()
    }

    pub fn mass_drift(&self) -> f64 {
        let m0 = self.diagnostics[0].mass;
        self.diagnostics.iter().map(|d| (d.mass - m0).abs()).fold(0.0, f64::max)
    }

    pub fn blew_up(&self) -> bool {
        matches!(self.outcome, Outcome::BlowUpSuspected { .. })
    }
}

/// Repeated [`step`]s with per-step diagnostics and the blow-up monitor.
pub fn evolve(
    field: &WaveField,
    params: &HartreeParams,
    symbols: &HartreeSymbols,
    options: &EvolveOptions,
) -> Result<Trajectory> {
    params.validate()?;
    let (steps, dt) = params.step_count();
    let mut current = field.clone();
    let d0 = diagnostics(&current, symbols, params.lambda, 0.0)?;
    let mut diags = vec![d0];
    let mut times = vec![0.0];
    let mut snapshots = vec![current.clone()];
    let mut outcome = Outcome::Completed;

    for s in 1..=steps {
        let t = s as f64 * dt;
        let mut next = current.clone();
        step_inplace(&mut next, params, dt, symbols)?;
        if !next.is_finite() {
            outcome = Outcome::BlowUpSuspected { t, reason: "non-finite sample".into() };
            break;
        }
        let d = diagnostics(&next, symbols, params.lambda, t)?;
        current = next;
        diags.push(d);
        if options.snapshot_stride > 0 && s % options.snapshot_stride == 0 && s != steps {
            snapshots.push(current.clone());
            times.push(t);
        }
        if !(d.h_half <= options.blowup_factor * d0.h_half) {
            warn!("H^1/2 norm {:.3e} exceeds {}x its initial value at t = {t}", d.h_half, options.blowup_factor);
            outcome = Outcome::BlowUpSuspected { t, reason: format!("H^1/2 norm grew beyond {}x", options.blowup_factor) };
            break;
        }
    }
    let t_last = diags.last().map(|d| d.t).unwrap_or(0.0);
    if times.last() != Some(&t_last) {
        times.push(t_last);
        snapshots.push(current.clone());
    }
    debug!("evolve: {} steps, outcome {:?}", diags.len() - 1, outcome);
    Ok(Trajectory { times, snapshots, diagnostics: diags, outcome, last: current })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub alpha: f64,
    pub sup_l2_diff: f64,
    pub sup_h_half_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    pub l2_fit: Option<LogLogFit>,
    pub h_half_fit: Option<LogLogFit>,
    /// Set when a branch blew up; rows hold the sup over the completed steps.
    pub aborted_at: Option<f64>,
}

/// Evolves `φ_t` (cutoff 0) and `φ_t^α` for every `α` from the same datum and
/// records `sup_t ||φ_t - φ_t^α||` in L² and H^{1/2}.
///
/// `kernel(α)` must return the interaction multiplier for cutoff `α`; the
/// reference run uses `kernel(0.0)`. Branches advance in lockstep and run in
/// parallel.
pub fn cutoff_scan<K>(field: &WaveField, base: &HartreeParams, alphas: &[f64], kernel: K) -> Result<ScanTable>
where
    K: Fn(f64) -> Result<SpectralSymbol>,
{
    base.validate()?;
    if alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidParameter("cutoff scan needs every alpha > 0".into()));
    }
    let grid = *field.grid();
    let dispersion = dispersion_symbol(&grid);
    let reference_symbols = HartreeSymbols { dispersion: dispersion.clone(), potential: kernel(0.0)? };
    let branch_symbols = alphas
        .iter()
        .map(|&a| Ok(HartreeSymbols { dispersion: dispersion.clone(), potential: kernel(a)? }))
        .collect::<Result<Vec<_>>>()?;

    let (steps, dt) = base.step_count();
    let mut reference = field.clone();
    let mut branches: Vec<WaveField> = vec![field.clone(); alphas.len()];
    let mut sup_l2 = vec![0.0f64; alphas.len()];
    let mut sup_h = vec![0.0f64; alphas.len()];
    let mut aborted_at = None;

    for s in 1..=steps {
        step_inplace(&mut reference, base, dt, &reference_symbols)?;
        if !reference.is_finite() {
            aborted_at = Some(s as f64 * dt);
            break;
        }
        let results: Vec<Result<(f64, f64, bool)>> = branches
            .par_iter_mut()
            .zip(branch_symbols.par_iter())
            .map(|(b, sym)| {
                step_inplace(b, base, dt, sym)?;
                if !b.is_finite() {
                    return Ok((0.0, 0.0, false));
                }
                let diff = reference.sub(b)?;
                Ok((diff.mass().sqrt(), sobolev_norm(&diff, 0.5), true))
            })
            .collect();
        let mut finite = true;
        for (i, r) in results.into_iter().enumerate() {
            let (l2, h, ok) = r?;
            finite &= ok;
            sup_l2[i] = sup_l2[i].max(l2);
            sup_h[i] = sup_h[i].max(h);
        }
        if !finite {
            aborted_at = Some(s as f64 * dt);
            break;
        }
    }
    if let Some(t) = aborted_at {
        warn!("cutoff scan aborted at t = {t}: non-finite branch");
    }

    let rows: Vec<ScanRow> = alphas
        .iter()
        .enumerate()
        .map(|(i, &alpha)| ScanRow { alpha, sup_l2_diff: sup_l2[i], sup_h_half_diff: sup_h[i] })
        .collect();
    let l2_points: Vec<(f64, f64)> = rows.iter().map(|r| (r.alpha, r.sup_l2_diff)).collect();
    let h_points: Vec<(f64, f64)> = rows.iter().map(|r| (r.alpha, r.sup_h_half_diff)).collect();
    Ok(ScanTable {
        l2_fit: fit_loglog_guarded(&l2_points).ok(),
        h_half_fit: fit_loglog_guarded(&h_points).ok(),
        rows,
        aborted_at,
    })
}
