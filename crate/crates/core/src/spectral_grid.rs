//! Periodic grids and spectral application of one-particle operators.
//!
//! Wavefunctions live on a uniform periodic grid with `n` points per axis in
//! 1 or 3 dimensions. Operators diagonal in momentum space (the relativistic
//! dispersion `sqrt(1 + |k|^2)` and Fourier multipliers of convolution
//! kernels) are applied by FFT. Symbols are stored in FFT order and carry a
//! zeroed Nyquist row.
//!
//! Normalization conventions: `mass = Σ |φ|² dV` with `dV = (L/n)^dim`, and a
//! symbol is the continuum Fourier transform `K̂(k) = ∫ K(x) e^{-ikx} dx`, so
//! `K * ρ = IFFT(K̂ · FFT(ρ))` with the `1/n^dim` normalization on the inverse.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::{Fft, FftPlanner};

use crate::quadrature::{graded_breakpoints, integrate_panels};
use crate::{Error, Result, C64};

const SNAPSHOT_MAGIC: &[u8; 4] = b"RHGF";
const SNAPSHOT_VERSION: u32 = 1;

/// Uniform periodic grid on `[-L/2, L/2)^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n_per_axis: usize, box_length: f64) -> Result<Self> {
        if dim != 1 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 3, got {dim}")));
        }
        if n_per_axis < 4 || !n_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_per_axis must be a power of two >= 4, got {n_per_axis}"
            )));
        }
        if !(box_length > 0.0 && box_length.is_finite()) {
            return Err(Error::InvalidGrid(format!("box length must be positive, got {box_length}")));
        }
        Ok(Self { dim, n: n_per_axis, length: box_length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.length
    }

    pub fn total_points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Signed integer frequency of FFT index `i` along one axis.
    pub fn frequency_index(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n / 2
    }

    fn axis_indices(&self, flat: usize) -> [usize; 3] {
        match self.dim {
            1 => [flat, 0, 0],
            _ => {
                let n = self.n;
                [flat / (n * n), (flat / n) % n, flat % n]
            }
        }
    }

    /// Grid coordinates of the point with flat index `flat`.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.axis_indices(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = -0.5 * self.length + idx[a] as f64 * h;
        }
        x
    }

    /// Integer frequency vector of flat index `flat`, with Nyquist components
    /// replaced by zero.
    fn frequency_vector(&self, flat: usize) -> ([i64; 3], bool) {
        let idx = self.axis_indices(flat);
        let mut j = [0i64; 3];
        let mut nyquist = false;
        for a in 0..self.dim {
            if self.is_nyquist(idx[a]) {
                nyquist = true;
            } else {
                j[a] = self.frequency_index(idx[a]);
            }
        }
        (j, nyquist)
    }

    fn k_unit(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// `|k|^2` at a flat FFT index, Nyquist components zeroed.
    pub fn k_squared(&self, flat: usize) -> f64 {
        let (j, _) = self.frequency_vector(flat);
        let m: i64 = j.iter().map(|v| v * v).sum();
        self.k_unit().powi(2) * m as f64
    }
}

/// Complex wavefunction sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: GridSpec,
    values: Vec<C64>,
}

impl WaveField {
    pub fn new(grid: GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(Error::DimensionMismatch { expected: grid.total_points(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![C64::new(0.0, 0.0); grid.total_points()] }
    }

    /// Samples `f` at every grid point (unused coordinates are zero in 1D).
    pub fn from_fn<F: Fn([f64; 3]) -> C64>(grid: GridSpec, f: F) -> Self {
        let values = (0..grid.total_points()).map(|i| f(grid.position(i))).collect();
        Self { grid, values }
    }

    /// Isotropic Gaussian `exp(-|x|^2 / (2σ^2))`, normalized.
    pub fn gaussian(grid: GridSpec, sigma: f64) -> Self {
        let mut f = Self::from_fn(grid, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            C64::new((-r2 / (2.0 * sigma * sigma)).exp(), 0.0)
        });
        f.normalize();
        f
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn normalize(&mut self) {
        let m = self.mass();
        if m > 0.0 {
            let s = 1.0 / m.sqrt();
            self.values.iter_mut().for_each(|z| *z *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Discrete L² distance `(Σ |φ - ψ|² dV)^{1/2}`.
    pub fn l2_distance(&self, other: &WaveField) -> Result<f64> {
        check_grids(&self.grid, &other.grid)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((s * self.grid.cell_volume()).sqrt())
    }

    pub fn sub(&self, other: &WaveField) -> Result<WaveField> {
        check_grids(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(WaveField { grid: self.grid, values })
    }

    pub fn scale(&mut self, c: C64) {
        self.values.iter_mut().for_each(|z| *z *= c);
    }

    pub fn write_snapshot<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_snapshot_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes the binary `RHGF` snapshot: magic, version, dim, n (u32 LE),
    /// box length (f64 LE), then interleaved (re, im) f64 LE in row-major order.
    pub fn write_snapshot_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.dim as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n as u32).to_le_bytes())?;
        w.write_all(&self.grid.length.to_le_bytes())?;
        for z in &self.values {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_snapshot_from(&mut r)
    }

    pub fn read_snapshot_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Format("bad magic, expected RHGF".into()));
        }
        let version = read_u32(r)?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!("unsupported snapshot version {version}")));
        }
        let dim = read_u32(r)? as usize;
        let n = read_u32(r)? as usize;
        let length = read_f64(r)?;
        let grid = GridSpec::new(dim, n, length)?;
        let mut values = Vec::with_capacity(grid.total_points());
        for _ in 0..grid.total_points() {
            let re = read_f64(r)?;
            let im = read_f64(r)?;
            values.push(C64::new(re, im));
        }
        Ok(Self { grid, values })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn check_grids(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// Real Fourier multiplier on the frequency lattice of a grid (FFT order).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSymbol {
    grid: GridSpec,
    values: Vec<f64>,
}

impl SpectralSymbol {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(Error::DimensionMismatch { expected: grid.total_points(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("symbol entries must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    /// The constant symbol `c` (identity multiplier for `c = 1`).
    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.total_points()] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `sqrt(1 + |k|^2)` on the frequency lattice.
pub fn dispersion_symbol(grid: &GridSpec) -> SpectralSymbol {
    let values = (0..grid.total_points()).map(|i| (1.0 + grid.k_squared(i)).sqrt()).collect();
    SpectralSymbol { grid: *grid, values }
}

/// Bounded even kernel on the 1D ring.
#[derive(Debug, Clone, PartialEq)]
pub enum RingKernel {
    /// `1 / (d(x) + α)` with `d` the periodic distance; requires `α > 0`.
    RegularizedCoulomb { alpha: f64 },
    /// Samples `K(x_j)` at `x_j = j L / n`, `j = 0..n`, periodic.
    Tabulated(Vec<f64>),
}

/// Fourier multiplier of the (regularized) Coulomb kernel.
///
/// In 3D, `alpha = 0` gives the periodic Coulomb multiplier `4π/|k|^2` and
/// `alpha > 0` the windowed kernel of [`windowed_coulomb_symbol`]. In 1D the
/// default ring kernel `1/(|x| + α)` is used.
pub fn coulomb_symbol(grid: &GridSpec, alpha: f64) -> Result<SpectralSymbol> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    match grid.dim {
        3 if alpha == 0.0 => Ok(periodic_coulomb_symbol(grid)),
        3 => windowed_coulomb_symbol(grid, alpha),
        _ => ring_kernel_symbol(grid, &RingKernel::RegularizedCoulomb { alpha }),
    }
}

fn periodic_coulomb_symbol(grid: &GridSpec) -> SpectralSymbol {
    let values = (0..grid.total_points())
        .map(|i| {
            let (_, nyq) = grid.frequency_vector(i);
            let k2 = grid.k_squared(i);
            if nyq || k2 == 0.0 {
                0.0
            } else {
                4.0 * PI / k2
            }
        })
        .collect();
    SpectralSymbol { grid: *grid, values }
}

/// C² cutoff: 1 for `r <= 0.4 L`, 0 for `r >= 0.5 L`, quintic smoothstep between.
pub fn truncation_window(r: f64, box_length: f64) -> f64 {
    let r1 = 0.4 * box_length;
    let r2 = 0.5 * box_length;
    if r <= r1 {
        1.0
    } else if r >= r2 {
        0.0
    } else {
        let s = (r - r1) / (r2 - r1);
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Radial Fourier transform of `w(r) / (r + α)` in 3D:
/// `(4π/k) ∫_0^R r sin(kr) w(r) / (r + α) dr`, `R = L/2`.
pub fn windowed_radial_transform(k: f64, alpha: f64, box_length: f64) -> f64 {
    let r_end = 0.5 * box_length;
    let max_width = if k > 0.0 { (0.5 * PI / k).min(0.05 * box_length) } else { 0.05 * box_length };
    let breaks = graded_breakpoints(r_end, alpha, max_width, &[0.4 * box_length]);
    if k == 0.0 {
        let v = integrate_panels(|r| r * r * truncation_window(r, box_length) / (r + alpha), &breaks);
        return 4.0 * PI * v;
    }
    let v = integrate_panels(|r| r * (k * r).sin() * truncation_window(r, box_length) / (r + alpha), &breaks);
    4.0 * PI * v / k
}

/// Multiplier of `1/(r + α)` truncated by [`truncation_window`]; valid for
/// every `α >= 0`. The zero mode is set to 0 and Nyquist points are zeroed.
pub fn windowed_coulomb_symbol(grid: &GridSpec, alpha: f64) -> Result<SpectralSymbol> {
    if grid.dim != 3 {
        return Err(Error::InvalidGrid("windowed Coulomb symbol needs a 3D grid".into()));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    let unit = grid.k_unit();
    let mut cache: HashMap<i64, f64> = HashMap::new();
    let mut values = Vec::with_capacity(grid.total_points());
    for i in 0..grid.total_points() {
        let (j, nyq) = grid.frequency_vector(i);
        let m: i64 = j.iter().map(|v| v * v).sum();
        if nyq || m == 0 {
            values.push(0.0);
            continue;
        }
        let v = *cache
            .entry(m)
            .or_insert_with(|| windowed_radial_transform(unit * (m as f64).sqrt(), alpha, grid.length));
        values.push(v);
    }
    let symbol = SpectralSymbol::new(*grid, values)?;
    if symbol.min() < 0.0 {
        log::warn!(
            "windowed kernel with alpha = {alpha} has negative multiplier {:.3e}; the window ringing dominates at this box length",
            symbol.min()
        );
    }
    Ok(symbol)
}

/// Continuum multiplier `2 ∫_0^{L/2} cos(kx) / (x + α) dx` of the ring kernel.
pub fn ring_coulomb_transform(k: f64, alpha: f64, ring_length: f64) -> f64 {
    let end = 0.5 * ring_length;
    let max_width = if k > 0.0 { (0.5 * PI / k).min(0.05 * ring_length) } else { 0.05 * ring_length };
    let breaks = graded_breakpoints(end, alpha, max_width, &[]);
    2.0 * integrate_panels(|x| (k * x).cos() / (x + alpha), &breaks)
}

/// Multiplier of a bounded even kernel on the 1D ring. Nyquist is zeroed; the
/// zero mode keeps its value.
pub fn ring_kernel_symbol(grid: &GridSpec, kernel: &RingKernel) -> Result<SpectralSymbol> {
    if grid.dim != 1 {
        return Err(Error::InvalidGrid("ring kernels need a 1D grid".into()));
    }
    let n = grid.n;
    let values = match kernel {
        RingKernel::RegularizedCoulomb { alpha } => {
            if !(*alpha > 0.0) || !alpha.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "the 1D regularized kernel needs alpha > 0, got {alpha}"
                )));
            }
            let unit = grid.k_unit();
            (0..n)
                .map(|i| {
                    if grid.is_nyquist(i) {
                        0.0
                    } else {
                        let k = unit * grid.frequency_index(i).unsigned_abs() as f64;
                        ring_coulomb_transform(k, *alpha, grid.length)
                    }
                })
                .collect()
        }
        RingKernel::Tabulated(samples) => {
            if samples.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: samples.len() });
            }
            if samples.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("tabulated kernel must be bounded".into()));
            }
            let mut buf: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
            fft_inplace(grid, &mut buf, Direction::Forward);
            let h = grid.spacing();
            (0..n).map(|i| if grid.is_nyquist(i) { 0.0 } else { buf[i].re * h }).collect()
        }
    };
    SpectralSymbol::new(*grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Inverse,
}

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, Direction), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = plans.lock().expect("fft plan cache poisoned");
    guard
        .entry((n, dir))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            match dir {
                Direction::Forward => planner.plan_fft_forward(n),
                Direction::Inverse => planner.plan_fft_inverse(n),
            }
        })
        .clone()
}

/// Unnormalized multidimensional FFT in place; the inverse includes `1/n^dim`.
pub fn fft_inplace(grid: &GridSpec, data: &mut [C64], dir: Direction) {
    let n = grid.n;
    let fft = plan(n, dir);
    match grid.dim {
        1 => fft.process(data),
        _ => {
            // contiguous axis
            fft.process(data);
            let mut line = vec![C64::new(0.0, 0.0); n];
            for stride in [n, n * n] {
                for base in 0..n * n {
                    let start = (base / stride) * stride * n + base % stride;
                    for (j, l) in line.iter_mut().enumerate() {
                        *l = data[start + j * stride];
                    }
                    fft.process(&mut line);
                    for (j, l) in line.iter().enumerate() {
                        data[start + j * stride] = *l;
                    }
                }
            }
        }
    }
    if dir == Direction::Inverse {
        let s = 1.0 / grid.total_points() as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierMode {
    Multiply,
    /// Multiply by `exp(-i · symbol · dt)`.
    ExpNegIDt(f64),
}

pub fn apply_multiplier(field: &WaveField, symbol: &SpectralSymbol, mode: MultiplierMode) -> Result<WaveField> {
    let mut out = field.clone();
    apply_multiplier_inplace(&mut out, symbol, mode)?;
    Ok(out)
}

pub fn apply_multiplier_inplace(field: &mut WaveField, symbol: &SpectralSymbol, mode: MultiplierMode) -> Result<()> {
    check_grids(&field.grid, &symbol.grid)?;
    let grid = field.grid;
    fft_inplace(&grid, &mut field.values, Direction::Forward);
    match mode {
        MultiplierMode::Multiply => {
            for (z, s) in field.values.iter_mut().zip(&symbol.values) {
                *z *= *s;
            }
        }
        MultiplierMode::ExpNegIDt(dt) => {
            for (z, s) in field.values.iter_mut().zip(&symbol.values) {
                *z *= C64::from_polar(1.0, -s * dt);
            }
        }
    }
    fft_inplace(&grid, &mut field.values, Direction::Inverse);
    Ok(())
}

/// `(K * |φ|^2)(x)` computed spectrally; the imaginary residue is discarded.
pub fn hartree_potential(field: &WaveField, symbol: &SpectralSymbol) -> Result<Vec<f64>> {
    check_grids(&field.grid, &symbol.grid)?;
    let mut rho: Vec<C64> = field.values.iter().map(|z| C64::new(z.norm_sqr(), 0.0)).collect();
    fft_inplace(&field.grid, &mut rho, Direction::Forward);
    for (z, s) in rho.iter_mut().zip(&symbol.values) {
        *z *= *s;
    }
    fft_inplace(&field.grid, &mut rho, Direction::Inverse);
    Ok(rho.into_iter().map(|z| z.re).collect())
}

/// Discrete `H^s` norm `(Σ_k (1 + |k|^2)^s |φ̂(k)|^2 / Vol)^{1/2}`.
pub fn sobolev_norm(field: &WaveField, s: f64) -> f64 {
    let grid = field.grid;
    let mut buf = field.values.clone();
    fft_inplace(&grid, &mut buf, Direction::Forward);
    let mut acc = 0.0;
    for (i, z) in buf.iter().enumerate() {
        let w = 1.0 + grid.k_squared(i);
        acc += w.powf(s) * z.norm_sqr();
    }
    (acc * grid.cell_volume() / grid.total_points() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring() -> GridSpec {
        GridSpec::new(1, 8, 2.0 * PI).unwrap()
    }

    fn plane_wave(grid: GridSpec) -> WaveField {
        let mut f = WaveField::from_fn(grid, |x| C64::from_polar(1.0, x[0]));
        f.normalize();
        f
    }

    fn random_field(grid: GridSpec, seed: u64) -> WaveField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..grid.total_points()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        WaveField::new(grid, v).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(2, 8, 1.0).is_err());
        assert!(GridSpec::new(1, 6, 1.0).is_err());
        assert!(GridSpec::new(1, 2, 1.0).is_err());
        assert!(GridSpec::new(3, 8, 0.0).is_err());
        assert_eq!(GridSpec::new(3, 8, 1.0).unwrap().total_points(), 512);
    }

    #[test]
    fn dispersion_values() {
        let g = ring();
        let d = dispersion_symbol(&g);
        assert_eq!(d.values()[0], 1.0);
        assert!((d.values()[1] - 2f64.sqrt()).abs() < 1e-15);
        assert!((d.values()[1] - std::f64::consts::SQRT_2).abs() < 1e-8);
        assert!(d.min() >= 1.0);

        let g3 = GridSpec::new(3, 8, 2.0 * PI).unwrap();
        let d3 = dispersion_symbol(&g3);
        // flat index of k = (1, 1, 1)
        let idx = (8 + 1) * 8 + 1;
        assert!((d3.values()[idx] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dispersion_acts_on_plane_wave() {
        let g = ring();
        let f = plane_wave(g);
        let out = apply_multiplier(&f, &dispersion_symbol(&g), MultiplierMode::Multiply).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - b * 2f64.sqrt()).norm() < 1e-13);
        }
    }

    #[test]
    fn identity_symbol_is_identity() {
        let g = GridSpec::new(3, 8, 5.0).unwrap();
        let f = random_field(g, 1);
        let out = apply_multiplier(&f, &SpectralSymbol::constant(g, 1.0), MultiplierMode::Multiply).unwrap();
        assert!(out.l2_distance(&f).unwrap() < 1e-12 * f.mass().sqrt());
    }

    #[test]
    fn propagator_is_isometric() {
        let g = GridSpec::new(3, 8, 5.0).unwrap();
        let f = random_field(g, 2);
        let out = apply_multiplier(&f, &dispersion_symbol(&g), MultiplierMode::ExpNegIDt(0.1)).unwrap();
        assert!((out.mass() - f.mass()).abs() < 1e-12 * f.mass());
    }

    #[test]
    fn grid_mismatch_rejected() {
        let f = plane_wave(ring());
        let other = GridSpec::new(1, 16, 2.0 * PI).unwrap();
        assert!(matches!(
            apply_multiplier(&f, &dispersion_symbol(&other), MultiplierMode::Multiply),
            Err(Error::GridMismatch(_))
        ));
        assert!(hartree_potential(&f, &dispersion_symbol(&other)).is_err());
    }

    #[test]
    fn coulomb_periodic_values() {
        let g = GridSpec::new(3, 8, 2.0 * PI).unwrap();
        let c = coulomb_symbol(&g, 0.0).unwrap();
        assert_eq!(c.values()[0], 0.0);
        // k = (2, 0, 0)
        let idx = 2 * 64;
        assert!((c.values()[idx] - PI).abs() < 1e-14);
        assert!(coulomb_symbol(&g, -1e-3).is_err());
    }

    #[test]
    fn potential_symbols_nonnegative() {
        let g = GridSpec::new(3, 16, 16.0).unwrap();
        for alpha in [0.0, 1e-4, 1e-3, 1e-2] {
            let c = windowed_coulomb_symbol(&g, alpha).unwrap();
            assert!(c.min() >= 0.0, "alpha = {alpha}: min {}", c.min());
        }
        let r = GridSpec::new(1, 64, 2.0 * PI).unwrap();
        let c = coulomb_symbol(&r, 1e-3).unwrap();
        assert!(c.min() >= 0.0);
        assert!(coulomb_symbol(&r, 0.0).is_err());
    }

    #[test]
    fn tabulated_kernel_delta_gives_unit_symbol() {
        let g = GridSpec::new(1, 16, 4.0).unwrap();
        let mut samples = vec![0.0; 16];
        samples[0] = 1.0 / g.spacing();
        let s = ring_kernel_symbol(&g, &RingKernel::Tabulated(samples)).unwrap();
        for (i, v) in s.values().iter().enumerate() {
            let expected = if g.is_nyquist(i) { 0.0 } else { 1.0 };
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn hartree_potential_trivial_cases() {
        let g = GridSpec::new(3, 8, 6.0).unwrap();
        let zero = WaveField::zeros(g);
        let c = coulomb_symbol(&g, 0.0).unwrap();
        assert!(hartree_potential(&zero, &c).unwrap().iter().all(|v| *v == 0.0));

        let f = random_field(g, 3);
        let v = hartree_potential(&f, &SpectralSymbol::constant(g, 1.0)).unwrap();
        for (p, z) in v.iter().zip(f.values()) {
            assert!((p - z.norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn hartree_potential_phase_and_conjugation_invariance() {
        let g = GridSpec::new(3, 8, 6.0).unwrap();
        let f = random_field(g, 4);
        let c = windowed_coulomb_symbol(&g, 0.1).unwrap();
        let v = hartree_potential(&f, &c).unwrap();
        let mut rotated = f.clone();
        rotated.scale(C64::from_polar(1.0, 0.7));
        let conj = WaveField::new(g, f.values().iter().map(|z| z.conj()).collect()).unwrap();
        for other in [rotated, conj] {
            let w = hartree_potential(&other, &c).unwrap();
            for (a, b) in v.iter().zip(&w) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sobolev_norms_of_plane_wave() {
        let g = ring();
        let f = plane_wave(g);
        assert!((sobolev_norm(&f, 0.0) - 1.0).abs() < 1e-12);
        assert!((sobolev_norm(&f, 1.0).powi(2) - 2.0).abs() < 1e-12);
        assert!((sobolev_norm(&f, 0.5).powi(2) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sobolev_zero_matches_mass() {
        let g = GridSpec::new(3, 8, 3.0).unwrap();
        let f = random_field(g, 5);
        assert!((sobolev_norm(&f, 0.0) - f.mass().sqrt()).abs() < 1e-12 * f.mass().sqrt());
    }

    #[test]
    fn normalize_gives_unit_mass() {
        let g = GridSpec::new(3, 8, 3.0).unwrap();
        let mut f = random_field(g, 6);
        f.normalize();
        assert!((f.mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn snapshot_roundtrip_and_layout() {
        let g = GridSpec::new(1, 4, 2.5).unwrap();
        let f = random_field(g, 7);
        let mut bytes = Vec::new();
        f.write_snapshot_to(&mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"RHGF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2.5);
        assert_eq!(bytes.len(), 24 + 16 * 4);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), f.values()[0].re);
        let back = WaveField::read_snapshot_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, f);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(WaveField::read_snapshot_from(&mut bad.as_slice()).is_err());
    }
}
