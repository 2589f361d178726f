//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. Every key has a default, so an empty file plus an
//! `experiment = ...` line is a complete configuration. [`ExperimentConfig::echo`]
//! writes every key back out; parsing the echo reproduces the configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::hartree::SplittingOrder;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    RateScan,
    CutoffScan,
    LaguerreVerify,
    Parity,
    ErrorTerms,
    HartreeEvolve,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::RateScan,
        ExperimentKind::CutoffScan,
        ExperimentKind::LaguerreVerify,
        ExperimentKind::Parity,
        ExperimentKind::ErrorTerms,
        ExperimentKind::HartreeEvolve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::RateScan => "rate_scan",
            ExperimentKind::CutoffScan => "cutoff_scan",
            ExperimentKind::LaguerreVerify => "laguerre_verify",
            ExperimentKind::Parity => "parity",
            ExperimentKind::ErrorTerms => "error_terms",
            ExperimentKind::HartreeEvolve => "hartree_evolve",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Initial datum of the grid experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum Datum {
    /// Normalized Gaussian of width `sigma` centred in the box.
    Gaussian { sigma: f64 },
    /// `Σ c e^{i 2π n·x / L}` over integer wave vectors, normalized.
    PlaneWaves(Vec<([i64; 3], f64)>),
    /// Field snapshot written by an earlier run.
    Snapshot(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    pub precision_bits: u32,

    pub dim: usize,
    pub n_per_axis: usize,
    pub box_length: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub alphas: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub splitting: SplittingOrder,
    pub datum: Datum,
    pub snapshot_stride: usize,
    pub blowup_factor: f64,

    pub modes: usize,
    pub ring_length: f64,
    pub datum_width: f64,
    pub n_list: Vec<usize>,
    pub sample_times: Vec<f64>,
    pub coherent: bool,
    pub particles: usize,
    pub n_max: usize,
}

const KEYS: &[&str] = &[
    "experiment",
    "seed",
    "out_dir",
    "workers",
    "precision_bits",
    "dim",
    "n_per_axis",
    "box_length",
    "lambda",
    "alpha",
    "alphas",
    "dt",
    "t_end",
    "splitting",
    "datum",
    "sigma",
    "plane_waves",
    "snapshot",
    "snapshot_stride",
    "blowup_factor",
    "modes",
    "ring_length",
    "datum_width",
    "n_list",
    "sample_times",
    "coherent",
    "particles",
    "n_max",
];

impl ExperimentConfig {
    /// Defaults for one experiment kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut c = Self {
            kind,
            seed: 0,
            out_dir: PathBuf::from("out"),
            workers: 0,
            precision_bits: crate::laguerre::DEFAULT_PRECISION,
            dim: 3,
            n_per_axis: 32,
            box_length: 16.0,
            lambda: 1.0,
            alpha: 0.0,
            alphas: vec![1e-1, 1e-2, 1e-3, 1e-4],
            dt: 1e-3,
            t_end: 1.0,
            splitting: SplittingOrder::Second,
            datum: Datum::Gaussian { sigma: 1.0 },
            snapshot_stride: 0,
            blowup_factor: 10.0,
            modes: 3,
            ring_length: 2.0 * PI,
            datum_width: 4.0,
            n_list: (2..=10).collect(),
            sample_times: Vec::new(),
            coherent: false,
            particles: 4,
            n_max: 12,
        };
        match kind {
            ExperimentKind::RateScan => {
                c.modes = 8;
                c.lambda = 0.5;
                c.alpha = 1e-3;
            }
            ExperimentKind::CutoffScan => c.t_end = 0.5,
            ExperimentKind::LaguerreVerify => c.n_list = vec![8, 16, 64, 256, 1024, 4096, 10_000],
            ExperimentKind::Parity | ExperimentKind::ErrorTerms => {
                c.alpha = 0.05;
                c.dt = 0.01;
                c.sample_times = vec![0.5, 1.0];
            }
            ExperimentKind::HartreeEvolve => {}
        }
        c
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", i + 1)));
            }
            if map.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        let kind: ExperimentKind = map
            .get("experiment")
            .ok_or_else(|| Error::Config("missing `experiment`".into()))?
            .parse()?;
        let mut c = Self::defaults(kind);
        c.apply(&map)?;
        Ok(c)
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        let mut datum_kind = None;
        let mut sigma = None;
        let mut waves = None;
        let mut snapshot = None;
        for (k, v) in map {
            let v = v.as_str();
            match k.as_str() {
                "experiment" => {}
                "seed" => self.seed = num(k, v)?,
                "out_dir" => self.out_dir = PathBuf::from(v),
                "workers" => self.workers = num(k, v)?,
                "precision_bits" => self.precision_bits = num(k, v)?,
                "dim" => self.dim = num(k, v)?,
                "n_per_axis" => self.n_per_axis = num(k, v)?,
                "box_length" => self.box_length = num(k, v)?,
                "lambda" => self.lambda = num(k, v)?,
                "alpha" => self.alpha = num(k, v)?,
                "alphas" => self.alphas = list(k, v)?,
                "dt" => self.dt = num(k, v)?,
                "t_end" => self.t_end = num(k, v)?,
                "splitting" => {
                    self.splitting = match v {
                        "strang" => SplittingOrder::Second,
                        "lie" => SplittingOrder::First,
                        _ => return Err(Error::Config(format!("`splitting` must be strang or lie, got `{v}`"))),
                    }
                }
                "datum" => datum_kind = Some(v.to_string()),
                "sigma" => sigma = Some(num::<f64>(k, v)?),
                "plane_waves" => waves = Some(parse_waves(v)?),
                "snapshot" => snapshot = Some(PathBuf::from(v)),
                "snapshot_stride" => self.snapshot_stride = num(k, v)?,
                "blowup_factor" => self.blowup_factor = num(k, v)?,
                "modes" => self.modes = num(k, v)?,
                "ring_length" => self.ring_length = num(k, v)?,
                "datum_width" => self.datum_width = num(k, v)?,
                "n_list" => self.n_list = list(k, v)?,
                "sample_times" => self.sample_times = list(k, v)?,
                "coherent" => self.coherent = num(k, v)?,
                "particles" => self.particles = num(k, v)?,
                "n_max" => self.n_max = num(k, v)?,
                _ => unreachable!(),
            }
        }
        self.datum = match datum_kind.as_deref() {
            None | Some("gaussian") => Datum::Gaussian { sigma: sigma.unwrap_or(1.0) },
            Some("plane_waves") => {
                Datum::PlaneWaves(waves.ok_or_else(|| Error::Config("datum = plane_waves needs `plane_waves`".into()))?)
            }
            Some("snapshot") => {
                Datum::Snapshot(snapshot.ok_or_else(|| Error::Config("datum = snapshot needs `snapshot`".into()))?)
            }
            Some(other) => return Err(Error::Config(format!("unknown datum `{other}`"))),
        };
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha >= 0.0) || self.alphas.iter().any(|a| !(*a > 0.0)) {
            return bad("alpha must be >= 0 and every entry of alphas > 0".into());
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_list must be sorted ascending without repeats".into());
        }
        if self.sample_times.windows(2).any(|w| w[0] > w[1]) || self.sample_times.iter().any(|t| !(*t >= 0.0)) {
            return bad("sample_times must be >= 0 and ascending".into());
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) || !(self.lambda >= 0.0) {
            return bad("dt, t_end must be > 0 and lambda >= 0".into());
        }
        if let Datum::Snapshot(p) = &self.datum {
            if !p.is_file() {
                return bad(format!("snapshot file {} does not exist", p.display()));
            }
        }
        if let Datum::Gaussian { sigma } = self.datum {
            if !(sigma > 0.0) {
                return bad("sigma must be > 0".into());
            }
        }
        if self.kind == ExperimentKind::CutoffScan && self.dim != 3 {
            return bad("cutoff_scan runs on 3D grids only".into());
        }
        if self.precision_bits < 64 {
            return bad("precision_bits must be >= 64".into());
        }
        Ok(())
    }

    /// Every key in canonical form.
    pub fn echo(&self) -> String {
        fn join<T: fmt::Display>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("experiment", self.kind.to_string());
        kv("seed", self.seed.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("workers", self.workers.to_string());
        kv("precision_bits", self.precision_bits.to_string());
        kv("dim", self.dim.to_string());
        kv("n_per_axis", self.n_per_axis.to_string());
        kv("box_length", self.box_length.to_string());
        kv("lambda", self.lambda.to_string());
        kv("alpha", self.alpha.to_string());
        kv("alphas", join(&self.alphas));
        kv("dt", self.dt.to_string());
        kv("t_end", self.t_end.to_string());
        kv("splitting", match self.splitting {
            SplittingOrder::Second => "strang".into(),
            SplittingOrder::First => "lie".into(),
        });
        match &self.datum {
            Datum::Gaussian { sigma } => {
                kv("datum", "gaussian".into());
                kv("sigma", sigma.to_string());
            }
            Datum::PlaneWaves(w) => {
                kv("datum", "plane_waves".into());
                let items: Vec<String> =
                    w.iter().map(|(n, c)| format!("{}:{}:{}:{}", n[0], n[1], n[2], c)).collect();
                kv("plane_waves", items.join(","));
            }
            Datum::Snapshot(p) => {
                kv("datum", "snapshot".into());
                kv("snapshot", p.display().to_string());
            }
        }
        kv("snapshot_stride", self.snapshot_stride.to_string());
        kv("blowup_factor", self.blowup_factor.to_string());
        kv("modes", self.modes.to_string());
        kv("ring_length", self.ring_length.to_string());
        kv("datum_width", self.datum_width.to_string());
        kv("n_list", join(&self.n_list));
        kv("sample_times", join(&self.sample_times));
        kv("coherent", self.coherent.to_string());
        kv("particles", self.particles.to_string());
        kv("n_max", self.n_max.to_string());
        s
    }

    /// Hex SHA-256 of [`echo`](Self::echo), ignoring `out_dir` and `workers`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.workers = 0;
        let digest = Sha256::digest(c.echo().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }

    /// Sample times, defaulting to `T/4, T/2, 3T/4, T`.
    pub fn times(&self) -> Vec<f64> {
        if self.sample_times.is_empty() {
            (1..=4).map(|i| self.t_end * i as f64 / 4.0).collect()
        } else {
            self.sample_times.clone()
        }
    }
}

fn parse_waves(v: &str) -> Result<Vec<([i64; 3], f64)>> {
    v.split(',')
        .map(|item| {
            let parts: Vec<&str> = item.trim().split(':').collect();
            let err = || Error::Config(format!("plane wave `{item}` must be nx:ny:nz:amplitude"));
            if parts.len() != 4 {
                return Err(err());
            }
            let n = [parts[0].parse().map_err(|_| err())?, parts[1].parse().map_err(|_| err())?, parts[2].parse().map_err(|_| err())?];
            Ok((n, parts[3].parse().map_err(|_| err())?))
        })
        .collect()
}
