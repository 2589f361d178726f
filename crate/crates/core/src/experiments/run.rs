//! Dispatch of a configured experiment and emission of its artifacts.
//!
//! Every run writes `<experiment>.csv`, `summary.json` and `config.echo` into
//! the output directory. Artifacts are written before any assertion is
//! evaluated, so a failing run still leaves its data behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Datum, ExperimentConfig, ExperimentKind};
use super::fit::{fit_loglog, LogLogFit};
use super::rate::{rate_scan, RateSetup};
use crate::fluctuation::{error_term_states, parity_defect, FluctuationDynamics, HartreePath, Variant};
use crate::fock::{FockBasis, ModeSet};
use crate::hartree::{self, cutoff_scan, EvolveOptions, HartreeParams, HartreeSymbols, KernelChoice};
use crate::laguerre::verify_bounds_sweep;
use crate::spectral_grid::{windowed_coulomb_symbol, GridSpec, RingKernel, WaveField};
use crate::{Error, Result, C64};

/// Tolerance on the reconstruction `Tr J(γ - φφ†) = E1 + E2`.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;
/// Tolerance on the even-sector weight in the parity check.
pub const PARITY_TOL: f64 = 1e-10;
/// Allowed deviation of the Hartree mass from its initial value.
pub const MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub config_hash: String,
    pub results: Value,
    pub fitted: Option<Fitted>,
    pub runtime_s: f64,
    /// Violated checks; a nonempty list maps to exit status 2.
    pub failures: Vec<String>,
    #[serde(skip)]
    pub csv_path: PathBuf,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Fitted {
    pub slope: f64,
    pub stderr: f64,
    pub constant: f64,
}

impl From<LogLogFit> for Fitted {
    fn from(f: LogLogFit) -> Self {
        Self { slope: f.slope, stderr: f.stderr, constant: f.constant }
    }
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }
}

/// Process exit status for an error that aborted a run.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::ResourceGuard(_) | Error::UnknownExperiment(_) => 3,
        Error::Assertion(_) => 2,
        _ => 1,
    }
}

struct Outcome {
    header: Vec<&'static str>,
    records: Vec<Vec<String>>,
    results: Value,
    fitted: Option<Fitted>,
    failures: Vec<String>,
}

/// Runs the configured experiment, using `config.workers` threads when nonzero.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.workers)))?;
        pool.install(|| run_inner(config))
    } else {
        run_inner(config)
    }
}

fn run_inner(config: &ExperimentConfig) -> Result<RunSummary> {
    let start = Instant::now();
    fs::create_dir_all(&config.out_dir)?;
    let outcome = match config.kind {
        ExperimentKind::HartreeEvolve => hartree_evolve(config)?,
        ExperimentKind::CutoffScan => cutoff(config)?,
        ExperimentKind::LaguerreVerify => laguerre(config)?,
        ExperimentKind::RateScan => rate(config)?,
        ExperimentKind::Parity => parity(config)?,
        ExperimentKind::ErrorTerms => error_terms(config)?,
    };
    let csv_path = config.out_dir.join(format!("{}.csv", config.kind));
    write_csv(&csv_path, &outcome.header, &outcome.records)?;
    fs::write(config.out_dir.join("config.echo"), config.echo())?;
    let summary = RunSummary {
        experiment: config.kind.to_string(),
        config_hash: config.hash(),
        results: outcome.results,
        fitted: outcome.fitted,
        runtime_s: start.elapsed().as_secs_f64(),
        failures: outcome.failures,
        csv_path,
    };
    fs::write(config.out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    for f in &summary.failures {
        warn!("{}: {f}", config.kind);
    }
    info!("{} finished in {:.2} s", config.kind, summary.runtime_s);
    Ok(summary)
}

fn write_csv(path: &Path, header: &[&str], records: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn grid_of(config: &ExperimentConfig) -> Result<GridSpec> {
    GridSpec::new(config.dim, config.n_per_axis, config.box_length)
}

/// Normalized initial field for the grid experiments.
pub fn initial_field(config: &ExperimentConfig) -> Result<WaveField> {
    let grid = grid_of(config)?;
    let mut field = match &config.datum {
        Datum::Gaussian { sigma } => WaveField::gaussian(grid, *sigma),
        Datum::PlaneWaves(waves) => {
            let scale = 2.0 * std::f64::consts::PI / config.box_length;
            WaveField::from_fn(grid, |x| {
                waves
                    .iter()
                    .map(|(n, c)| {
                        let phase = (0..grid.dim()).map(|d| n[d] as f64 * x[d]).sum::<f64>() * scale;
                        C64::from_polar(*c, phase)
                    })
                    .sum()
            })
        }
        Datum::Snapshot(path) => {
            let f = WaveField::read_snapshot(path)?;
            if *f.grid() != grid {
                return Err(Error::GridMismatch(format!("snapshot {} does not match the configured grid", path.display())));
            }
            f
        }
    };
    if !(field.mass() > 0.0) {
        return Err(Error::InvalidParameter("initial datum has zero mass".into()));
    }
    field.normalize();
    Ok(field)
}

fn params_of(config: &ExperimentConfig) -> HartreeParams {
    HartreeParams {
        lambda: config.lambda,
        alpha: config.alpha,
        dt: config.dt,
        t_end: config.t_end,
        splitting_order: config.splitting,
    }
}

fn hartree_evolve(config: &ExperimentConfig) -> Result<Outcome> {
    let field = initial_field(config)?;
    let params = params_of(config);
    let symbols = HartreeSymbols::new(field.grid(), config.alpha, &KernelChoice::Coulomb)?;
    let opts = EvolveOptions { snapshot_stride: config.snapshot_stride, blowup_factor: config.blowup_factor };
    let tr = hartree::evolve(&field, &params, &symbols, &opts)?;
    if config.snapshot_stride > 0 {
        for (i, s) in tr.snapshots.iter().enumerate() {
            s.write_snapshot(config.out_dir.join(format!("snapshot_{i:05}.rhgf")))?;
        }
    }
    let records = tr
        .diagnostics
        .iter()
        .map(|d| [d.t, d.mass, d.energy, d.h_half, d.h_one, d.max_abs].iter().map(f64::to_string).collect())
        .collect();
    let mut failures = Vec::new();
    if tr.mass_drift() > MASS_TOL {
        failures.push(format!("mass drift {:.3e} exceeds {MASS_TOL:e}", tr.mass_drift()));
    }
    let outcome = match &tr.outcome {
        hartree::Outcome::Completed => json!({"status": "completed"}),
        hartree::Outcome::BlowUpSuspected { t, reason } => json!({"status": "blow_up_suspected", "t": t, "reason": reason}),
    };
    let results = json!({
        "steps": tr.diagnostics.len() - 1,
        "mass_drift": tr.mass_drift(),
        "energy_drift": tr.energy_drift(),
        "outcome": outcome,
        "snapshot_times": tr.times,
    });
    Ok(Outcome { header: vec!["t", "mass", "energy", "h_half", "h_one", "max_abs"], records, results, fitted: None, failures })
}

fn cutoff(config: &ExperimentConfig) -> Result<Outcome> {
    let field = initial_field(config)?;
    let grid = *field.grid();
    let table = cutoff_scan(&field, &params_of(config), &config.alphas, |a| windowed_coulomb_symbol(&grid, a))?;
    let records = table
        .rows
        .iter()
        .map(|r| vec![r.alpha.to_string(), r.sup_l2_diff.to_string(), r.sup_h_half_diff.to_string()])
        .collect();
    let fitted = table.l2_fit.map(Fitted::from);
    Ok(Outcome {
        header: vec!["alpha", "sup_l2_diff", "sup_h_half_diff"],
        records,
        results: serde_json::to_value(&table)?,
        fitted,
        failures: Vec::new(),
    })
}

fn laguerre(config: &ExperimentConfig) -> Result<Outcome> {
    let ns: Vec<u64> = config.n_list.iter().map(|&n| n as u64).collect();
    let reports = verify_bounds_sweep(&ns, config.precision_bits)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for rep in &reports {
        for r in &rep.rows {
            records.push(vec![
                r.n.to_string(),
                r.k.to_string(),
                r.a_even.to_string(),
                r.bound_even.to_string(),
                r.a_odd.to_string(),
                r.bound_odd.to_string(),
                r.pass().to_string(),
            ]);
        }
        for (n, k) in rep.violations() {
            failures.push(format!("bound violated at N = {n}, k = {k}"));
        }
    }
    let results: Vec<Value> = reports
        .iter()
        .map(|r| json!({"N": r.n, "d_N": r.d_n, "weighted_norm_constant": r.weighted_norm_constant, "rows": r.rows.len()}))
        .collect();
    Ok(Outcome {
        header: vec!["N", "k", "A_even", "bound_even", "A_odd", "bound_odd", "pass"],
        records,
        results: Value::Array(results),
        fitted: None,
        failures,
    })
}

/// Rate-scan setup described by a configuration.
pub fn rate_setup(config: &ExperimentConfig) -> RateSetup {
    RateSetup {
        modes: config.modes,
        ring_length: config.ring_length,
        lambda: config.lambda,
        alpha: config.alpha,
        t_end: config.t_end,
        n_list: config.n_list.clone(),
        sample_times: config.sample_times.clone(),
        datum_width: config.datum_width,
        coherent: config.coherent,
    }
}

fn rate(config: &ExperimentConfig) -> Result<Outcome> {
    let report = rate_scan(&rate_setup(config))?;
    let records = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.t.to_string(),
                serde_json::to_value(r.branch).unwrap().as_str().unwrap().to_string(),
                r.alpha.to_string(),
                r.trace_distance.to_string(),
            ]
        })
        .collect();
    let mut failures: Vec<String> = report
        .rows
        .iter()
        .filter(|r| !(0.0..=2.0).contains(&r.trace_distance))
        .map(|r| format!("trace distance {} out of [0, 2] at N = {}, t = {}", r.trace_distance, r.n, r.t))
        .collect();
    failures.extend(report.failures.iter().map(|(n, e)| format!("N = {n} failed: {e}")));
    if report.headline().is_none() {
        warn!("rate scan: fewer than 4 usable N-points, no slope reported");
    }
    Ok(Outcome {
        header: vec!["N", "t", "branch", "alpha", "trace_distance"],
        records,
        fitted: report.headline().map(|f| f.fit.into()),
        results: serde_json::to_value(&report)?,
        failures,
    })
}

fn ring_modes(config: &ExperimentConfig) -> Result<(ModeSet, Vec<C64>)> {
    let modes = ModeSet::ring(config.modes, config.ring_length, &RingKernel::RegularizedCoulomb { alpha: config.alpha })?;
    let phi = rate_setup(config).datum(&modes);
    Ok((modes, phi))
}

fn random_unit_vector(rng: &mut ChaCha8Rng, m: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..m).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|c| c / n).collect()
}

/// Random Hermitian `m × m` matrix with unit Frobenius norm.
pub fn random_observable(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<C64> {
    let a = DMatrix::from_fn(m, m, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let h = (&a + a.adjoint()) * C64::new(0.5, 0.0);
    let n = h.norm();
    h / C64::new(n, 0.0)
}

fn steps_for(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

fn parity(config: &ExperimentConfig) -> Result<Outcome> {
    let (modes, phi) = ring_modes(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let f = random_unit_vector(&mut rng, config.modes);
    let times = config.times();
    let max_steps = times.iter().map(|&t| steps_for(t, config.dt)).max().unwrap_or(0);
    let path = HartreePath::compute(&modes, &phi, config.lambda, config.dt, max_steps)?;
    let basis = Arc::new(FockBasis::new(config.modes, config.n_max)?);
    if basis.dim() > super::rate::MAX_BASIS {
        return Err(Error::ResourceGuard(format!("basis dimension {} exceeds {}", basis.dim(), super::rate::MAX_BASIS)));
    }
    let dynamics = FluctuationDynamics::new(basis, &modes, &path, config.lambda, config.particles, Variant::Tilde)?;
    let defects: Vec<f64> =
        times.par_iter().map(|&t| parity_defect(&dynamics, &f, steps_for(t, config.dt))).collect::<Result<_>>()?;
    let failures = times
        .iter()
        .zip(&defects)
        .filter(|(_, d)| **d > PARITY_TOL)
        .map(|(t, d)| format!("parity defect {d:.3e} exceeds {PARITY_TOL:e} at t = {t}"))
        .collect();
    let records = times.iter().zip(&defects).map(|(t, d)| vec![t.to_string(), d.to_string()]).collect();
    Ok(Outcome {
        header: vec!["t", "parity_defect"],
        records,
        results: json!({"times": times, "parity_defect": defects, "probe": f.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>()}),
        fitted: None,
        failures,
    })
}

fn error_terms(config: &ExperimentConfig) -> Result<Outcome> {
    let (modes, phi) = ring_modes(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let j = random_observable(&mut rng, config.modes);
    let times = config.times();
    for &n in &config.n_list {
        let (_, large) = crate::fluctuation::error_term_caps(n);
        let dim: usize = (0..=large).map(|k| FockBasis::sector_size(config.modes, k)).fold(0, usize::saturating_add);
        if dim > super::rate::MAX_BASIS {
            return Err(Error::ResourceGuard(format!("N = {n}: basis dimension {dim} exceeds {}", super::rate::MAX_BASIS)));
        }
    }
    let per_n: Vec<Vec<(usize, f64, crate::fluctuation::ErrorTerms)>> = config
        .n_list
        .par_iter()
        .map(|&n| {
            times
                .iter()
                .map(|&t| {
                    let states = error_term_states(&modes, &phi, config.lambda, n, t, config.dt)?;
                    Ok((n, t, states.evaluate(&j)?))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<_> = per_n.into_iter().flatten().collect();
    let records = rows
        .iter()
        .map(|(n, t, e)| vec![n.to_string(), t.to_string(), e.e1.to_string(), e.e2.to_string(), e.tr_j_diff.to_string()])
        .collect();
    let failures = rows
        .iter()
        .filter(|(_, _, e)| !(e.residual <= RECONSTRUCTION_TOL))
        .map(|(n, t, e)| format!("E1 + E2 reconstruction residual {:.3e} at N = {n}, t = {t}", e.residual))
        .collect();
    let mut fits = Vec::new();
    for &t in &times {
        let pick = |f: fn(&crate::fluctuation::ErrorTerms) -> f64| -> Option<LogLogFit> {
            let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 == t).map(|r| (r.0 as f64, f(&r.2).abs())).collect();
            fit_loglog(&pts).ok()
        };
        fits.push(json!({"t": t, "e1": pick(|e| e.e1), "e2": pick(|e| e.e2)}));
    }
    let t_last = times.last().copied();
    let fitted = t_last.and_then(|t| {
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 == t).map(|r| (r.0 as f64, r.2.e1.abs())).collect();
        fit_loglog(&pts).ok().map(Fitted::from)
    });
    Ok(Outcome {
        header: vec!["N", "t", "E1", "E2", "trJdiff"],
        records,
        results: json!({
            "rows": rows.iter().map(|(n, t, e)| json!({"N": n, "t": t, "terms": e})).collect::<Vec<_>>(),
            "fits": fits,
        }),
        fitted,
        failures,
    })
}
