//! Sector projection coefficients of Weyl-displaced factorized states.
//!
//! For a unit mode vector `φ`, `P_ℓ W*(√N φ) (a*(φ))^N Ω/√N! = c_{N,ℓ} (a*(φ))^ℓ Ω`
//! with `c_{N,ℓ} = N^{-ℓ/2} L_ℓ^{(N-ℓ)}(N) / d_N`. The scaled values
//! `A_ℓ = N^{-⌊ℓ/2⌋} L_ℓ^{(N-ℓ)}(N)` are rational and obey a coupled two-term
//! recurrence; everything that has to be asserted is checked exactly in
//! rational arithmetic, and reported magnitudes use `rug::Float`.

use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Float, Integer, Rational};
use serde::Serialize;

use crate::{Error, Result};

/// Default working precision in bits.
pub const DEFAULT_PRECISION: u32 = 256;

/// `d_N = √(N!) / (N^{N/2} e^{-N/2})`, evaluated through `ln Γ`.
pub fn d_n(n: u64, prec: u32) -> Float {
    assert!(n >= 1, "d_N needs N >= 1");
    let nf = Float::with_val(prec, n);
    let lg = Float::with_val(prec, n + 1).ln_gamma();
    let half_n = Float::with_val(prec, &nf / 2u32);
    let log_d = Float::with_val(prec, &lg / 2u32) - Float::with_val(prec, &half_n * nf.clone().ln()) + &half_n;
    log_d.exp()
}

/// Scaled Laguerre values `A_0 … A_L` for fixed `N`.
#[derive(Debug, Clone)]
pub struct LaguerreSequence {
    pub n: u64,
    pub values: Vec<Float>,
    pub precision: u32,
}

fn check_range(n: u64, len: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    if len as u64 > n {
        return Err(Error::InvalidParameter(format!("sequence length {len} exceeds N = {n}")));
    }
    Ok(())
}

/// `A_0 … A_L` from `A_0 = 1`, `A_1 = 0` and
/// `A_{2k} = -((2k-1)/2k) A_{2k-1}/N - A_{2k-2}/2k`,
/// `A_{2k+1} = -(2k/(2k+1)) A_{2k} - A_{2k-1}/(2k+1)`.
pub fn a_sequence(n: u64, l: usize, prec: u32) -> Result<LaguerreSequence> {
    check_range(n, l)?;
    let mut v: Vec<Float> = vec![Float::with_val(prec, 1), Float::with_val(prec, 0)];
    for ell in 2..=l {
        let e = ell as u64;
        let next = if ell % 2 == 0 {
            let t1 = Float::with_val(prec, &v[ell - 1] * (e - 1)) / (e * n);
            let t2 = Float::with_val(prec, &v[ell - 2] / e);
            -(t1 + t2)
        } else {
            let t1 = Float::with_val(prec, &v[ell - 1] * (e - 1)) / e;
            let t2 = Float::with_val(prec, &v[ell - 2] / e);
            -(t1 + t2)
        };
        v.push(next);
    }
    v.truncate(l + 1);
    Ok(LaguerreSequence { n, values: v, precision: prec })
}

/// Exact rational counterpart of [`a_sequence`].
pub fn a_sequence_exact(n: u64, l: usize) -> Result<Vec<Rational>> {
    check_range(n, l)?;
    let mut v: Vec<Rational> = vec![Rational::from(1), Rational::from(0)];
    for ell in 2..=l {
        let e = ell as u64;
        let next = if ell % 2 == 0 {
            -(Rational::from((e - 1, e * n)) * &v[ell - 1] + Rational::from((1, e)) * &v[ell - 2])
        } else {
            -(Rational::from((e - 1, e)) * &v[ell - 1] + Rational::from((1, e)) * &v[ell - 2])
        };
        v.push(next);
    }
    v.truncate(l + 1);
    Ok(v)
}

/// `L_n^{(α)}(x)` by the three-term recurrence in `n`.
pub fn laguerre_direct(n: usize, alpha: &Float, x: &Float) -> Float {
    let prec = alpha.prec().max(x.prec());
    let mut prev = Float::with_val(prec, 1);
    if n == 0 {
        return prev;
    }
    let mut cur = Float::with_val(prec, alpha + 1u32) - x;
    for k in 1..n {
        let a = Float::with_val(prec, alpha + (2 * k + 1) as u64) - x;
        let b = Float::with_val(prec, alpha + k as u64);
        let next = (a * &cur - b * &prev) / (k + 1) as u64;
        prev = std::mem::replace(&mut cur, next);
    }
    cur
}

/// Exact rational counterpart of [`laguerre_direct`].
pub fn laguerre_exact(n: usize, alpha: &Rational, x: &Rational) -> Rational {
    let mut prev = Rational::from(1);
    if n == 0 {
        return prev;
    }
    let mut cur = Rational::from(alpha + 1u32) - x;
    for k in 1..n {
        let a = Rational::from(alpha + (2 * k + 1) as u64) - x;
        let b = Rational::from(alpha + k as u64);
        let next = (a * &cur - b * &prev) / (k + 1) as u64;
        prev = std::mem::replace(&mut cur, next);
    }
    cur
}

/// Exact form of `d_N · c_{N,ℓ}`: `value · N^{-1/2}` when `inv_sqrt_n` is set,
/// `value` otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactCoefficient {
    pub value: Rational,
    pub inv_sqrt_n: bool,
}

impl ExactCoefficient {
    /// `(d_N c_{N,ℓ})^2` as a rational.
    pub fn squared(&self, n: u64) -> Rational {
        let sq = self.value.clone().square();
        if self.inv_sqrt_n {
            sq / n
        } else {
            sq
        }
    }

    pub fn to_float(&self, n: u64, prec: u32) -> Float {
        let v = Float::with_val(prec, &self.value);
        if self.inv_sqrt_n {
            v / Float::with_val(prec, n).sqrt()
        } else {
            v
        }
    }
}

fn scale_laguerre(n: u64, ell: usize, lag: Rational) -> ExactCoefficient {
    let half = (ell / 2) as u32;
    let value = lag / Integer::from(n).pow(half);
    ExactCoefficient { value, inv_sqrt_n: ell % 2 == 1 }
}

/// `d_N c_{N,ℓ}` from the three-term Laguerre recurrence, exactly.
pub fn projection_coefficient_exact(n: u64, ell: usize) -> Result<ExactCoefficient> {
    if ell as u64 > n {
        return Err(Error::InvalidParameter(format!("ℓ = {ell} exceeds N = {n}")));
    }
    let lag = laguerre_exact(ell, &Rational::from(n - ell as u64), &Rational::from(n));
    Ok(scale_laguerre(n, ell, lag))
}

/// `c_{N,ℓ} = N^{-ℓ/2} L_ℓ^{(N-ℓ)}(N) / d_N`.
pub fn projection_coefficient(n: u64, ell: usize, prec: u32) -> Result<Float> {
    let exact = projection_coefficient_exact(n, ell)?;
    Ok(exact.to_float(n, prec) / d_n(n, prec))
}

/// Largest `N` accepted by [`brute_force_coefficient`].
pub const BRUTE_FORCE_MAX_N: u64 = 60;

/// `d_N c_{N,ℓ}` from the explicit alternating sum
/// `N^{-ℓ/2} Σ_m C(N, ℓ-m) (-1)^m N^m / m!`.
pub fn brute_force_coefficient(n: u64, ell: usize) -> Result<ExactCoefficient> {
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::ResourceGuard(format!("brute-force coefficient limited to N <= {BRUTE_FORCE_MAX_N}")));
    }
    if ell as u64 > n {
        return Err(Error::InvalidParameter(format!("ℓ = {ell} exceeds N = {n}")));
    }
    Ok(scale_laguerre(n, ell, explicit_sum(n, ell)))
}

/// `Σ_{m=0}^{ℓ} C(N, ℓ-m) (-N)^m / m!` (equal to `L_ℓ^{(N-ℓ)}(N)` for every `ℓ`).
fn explicit_sum(n: u64, ell: usize) -> Rational {
    let mut sum = Rational::new();
    for m in 0..=ell {
        let top = (ell - m) as u32;
        let binom = Integer::from(n).binomial(top);
        let mut term = Rational::from(binom) * Integer::from(n).pow(m as u32);
        term /= Integer::from(Integer::factorial(m as u32));
        if m % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
    }
    sum
}

/// `‖P_ℓ W*(√N φ)(a*(φ))^N Ω/√N!‖ = |c_{N,ℓ}| √(ℓ!)`.
pub fn sector_norm(n: u64, ell: usize, prec: u32) -> Result<Float> {
    let c = projection_coefficient(n, ell, prec)?;
    let fact = Float::with_val(prec, Integer::from(Integer::factorial(ell as u32)));
    Ok(c.abs() * fact.sqrt())
}

/// Signed sector amplitudes `ψ_ℓ = c_{N,ℓ} √(ℓ!)` for `ℓ = 0..=cap`, valid
/// beyond `ℓ = N`, from
/// `√N √(ℓ+1) ψ_{ℓ+1} = -ℓ ψ_ℓ - √N √ℓ ψ_{ℓ-1}`.
///
/// Past `4N` the wanted solution decays like an Airy tail while the
/// recurrence amplifies rounding, so iteration stops once `ψ_ℓ² < 2^{-prec/2}`.
pub fn sector_amplitudes(n: u64, cap: usize, prec: u32) -> Vec<Float> {
    let sqrt_n = Float::with_val(prec, n).sqrt();
    let mut out = vec![Float::with_val(prec, 1) / d_n(n, prec), Float::with_val(prec, 0)];
    let floor = Float::with_val(prec, 2).pow(-((prec / 2) as i32));
    let turning = 4 * n as usize;
    let mut ell = 1usize;
    while ell < cap {
        let a = Float::with_val(prec, &out[ell] * ell as u64);
        let b = Float::with_val(prec, &out[ell - 1] * &sqrt_n) * Float::with_val(prec, ell as u64).sqrt();
        let next = -(a + b) / (Float::with_val(prec, (ell + 1) as u64).sqrt() * &sqrt_n);
        let tiny = Float::with_val(prec, next.clone().square()) < floor;
        out.push(next);
        ell += 1;
        if ell > turning && tiny {
            break;
        }
    }
    out.truncate(cap + 1);
    out
}

/// Summation cap `4N + 10√N + 20` covering the particle-number support of
/// the displaced factorized state.
pub fn completeness_cap(n: u64) -> usize {
    (4.0 * n as f64 + 10.0 * (n as f64).sqrt() + 20.0).ceil() as usize
}

/// `Σ_{ℓ <= cap} ψ_ℓ²`.
pub fn completeness(n: u64, cap: usize, prec: u32) -> Float {
    let mut sum = Float::with_val(prec, 0);
    for v in sector_amplitudes(n, cap, prec) {
        sum += v.square();
    }
    sum
}

/// `C_N = d_N (Σ_ℓ ψ_ℓ² / (ℓ+1))^{1/2}`, the constant in
/// `‖(𝒩+1)^{-1/2} W*(√Nφ)(a*(φ))^N Ω/√N!‖ <= C/d_N`.
pub fn weighted_norm_constant(n: u64, prec: u32) -> Float {
    let mut sum = Float::with_val(prec, 0);
    for (ell, v) in sector_amplitudes(n, completeness_cap(n), prec).into_iter().enumerate() {
        sum += v.square() / (ell + 1) as u64;
    }
    sum.sqrt() * d_n(n, prec)
}

/// One row of the bound verification for a given `k`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub n: u64,
    pub k: usize,
    pub a_even: f64,
    pub bound_even: f64,
    pub a_odd: f64,
    pub bound_odd: f64,
    /// Coefficient bounds `|A_2k| <= 1/√((2k)!)`, `|A_2k+1| <= (k+1)^{3/2}/√((2k+1)!)`.
    pub coefficient_ok: bool,
    /// Sector bounds `<= 2/d_N` and `<= 2(k+1)^{3/2}/(d_N √N)`.
    pub sector_ok: bool,
    /// Whether `k <= N^{1/3}/2`, the range in which the bounds are asserted.
    pub asserted: bool,
}

impl BoundRow {
    pub fn pass(&self) -> bool {
        self.coefficient_ok && self.sector_ok
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub n: u64,
    pub rows: Vec<BoundRow>,
    pub weighted_norm_constant: f64,
    pub d_n: f64,
}

impl BoundReport {
    /// `(N, k)` pairs inside the asserted range that violate a bound.
    pub fn violations(&self) -> Vec<(u64, usize)> {
        self.rows.iter().filter(|r| r.asserted && !r.pass()).map(|r| (r.n, r.k)).collect()
    }
}

/// Largest `k` with `8k³ <= N`, i.e. `k <= N^{1/3}/2`.
pub fn k_max(n: u64) -> usize {
    let mut k = 0usize;
    while 8 * ((k + 1) as u64).pow(3) <= n {
        k += 1;
    }
    k
}

/// Checks the coefficient and sector bounds for all `k <= N^{1/3}/2` (plus
/// `extra_k` unasserted rows) in exact arithmetic.
pub fn verify_bounds(n: u64, extra_k: usize, prec: u32) -> Result<BoundReport> {
    if n < 8 {
        return Err(Error::InvalidParameter(format!("bound verification needs N >= 8, got {n}")));
    }
    let k_hi = k_max(n);
    let k_top = (k_hi + extra_k).min(((n - 1) / 2) as usize);
    let a = a_sequence_exact(n, 2 * k_top + 1)?;
    let mut rows = Vec::with_capacity(k_top + 1);
    for k in 0..=k_top {
        let (e, o) = (2 * k, 2 * k + 1);
        let fe = Rational::from(Integer::from(Integer::factorial(e as u32)));
        let fo = Rational::from(Integer::from(Integer::factorial(o as u32)));
        let k1_cubed = Rational::from(((k + 1) as u64).pow(3));
        let ae2 = a[e].clone().square();
        let ao2 = a[o].clone().square();
        let lhs_e = Rational::from(&ae2 * &fe);
        let lhs_o = Rational::from(&ao2 * &fo);
        let coefficient_ok = lhs_e <= 1 && lhs_o <= k1_cubed;
        let sector_ok = lhs_e <= 4 && lhs_o <= Rational::from(&k1_cubed * 4u32);
        let bound_even = Float::with_val(prec, &fe).sqrt().recip();
        let bound_odd = Float::with_val(prec, &k1_cubed).sqrt() / Float::with_val(prec, &fo).sqrt();
        rows.push(BoundRow {
            n,
            k,
            a_even: Float::with_val(prec, &a[e]).to_f64(),
            bound_even: bound_even.to_f64(),
            a_odd: Float::with_val(prec, &a[o]).to_f64(),
            bound_odd: bound_odd.to_f64(),
            coefficient_ok,
            sector_ok,
            asserted: k <= k_hi,
        });
    }
    Ok(BoundReport { n, rows, weighted_norm_constant: weighted_norm_constant(n, prec).to_f64(), d_n: d_n(n, prec).to_f64() })
}

/// [`verify_bounds`] over several `N` in parallel, ordered as given.
pub fn verify_bounds_sweep(ns: &[u64], prec: u32) -> Result<Vec<BoundReport>> {
    ns.par_iter().map(|&n| verify_bounds(n, 0, prec)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Float, b: f64, tol: f64) -> bool {
        (a.to_f64() - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn d_n_values() {
        assert!(close(&d_n(1, 256), 1.6487212707001282, 1e-15));
        assert!(close(&d_n(2, 256), 2f64.sqrt() * std::f64::consts::E / 2.0, 1e-15));
        let r = d_n(10_000, 256).to_f64() / 10f64;
        assert!((1.0..1.7).contains(&r));
        // Stirling: d_N / N^{1/4} -> (2π)^{1/4} (1 + 1/(24 N) + ...)
        let stirling = (2.0 * std::f64::consts::PI).powf(0.25) * (1.0 + 1.0 / 240_000.0);
        assert!((r - stirling).abs() < 1e-8);
    }

    #[test]
    fn first_values() {
        for n in [3u64, 7, 100] {
            let a = a_sequence_exact(n, 3).unwrap();
            assert_eq!(a[0], 1);
            assert_eq!(a[1], 0);
            assert_eq!(a[2], Rational::from((-1, 2)));
            assert_eq!(a[3], Rational::from((1, 3)));
            let lag2 = laguerre_exact(2, &Rational::from(n - 2), &Rational::from(n));
            assert_eq!(lag2, Rational::from((-(n as i64), 2)));
            let lag3 = laguerre_exact(3, &Rational::from(n - 3), &Rational::from(n));
            assert_eq!(lag3, Rational::from((n as i64, 3)));
        }
        assert!(a_sequence(5, 6, 128).is_err());
    }

    #[test]
    fn low_degree_laguerre() {
        let a = Float::with_val(128, 2.5);
        let x = Float::with_val(128, 0.75);
        assert_eq!(laguerre_direct(0, &a, &x), 1);
        assert_eq!(laguerre_direct(1, &a, &x), Float::with_val(128, 2.75));
    }

    #[test]
    fn small_coefficient_cases() {
        let c0 = projection_coefficient(9, 0, 256).unwrap();
        let s0 = sector_norm(9, 0, 256).unwrap();
        let inv_d = Float::with_val(256, 1) / d_n(9, 256);
        assert_eq!(c0, inv_d);
        assert_eq!(s0, inv_d);
        assert_eq!(projection_coefficient(9, 1, 256).unwrap(), 0);
        assert_eq!(brute_force_coefficient(2, 2).unwrap().value, Rational::from((-1, 2)));
        assert_eq!(brute_force_coefficient(5, 0).unwrap().value, 1);
        assert_eq!(projection_coefficient_exact(6, 4).unwrap(), brute_force_coefficient(6, 4).unwrap());
        assert!(brute_force_coefficient(61, 2).is_err());
        assert!(projection_coefficient(5, 6, 64).is_err());
    }

    #[test]
    fn amplitude_recurrence_matches_exact() {
        let n = 20u64;
        let amps = sector_amplitudes(n, 60, 256);
        for ell in 0..=n as usize {
            let s = sector_norm(n, ell, 256).unwrap();
            let diff = Float::with_val(256, amps[ell].clone().abs() - &s).abs();
            assert!(diff.to_f64() < 1e-60, "ℓ = {ell}");
        }
        for ell in (n as usize + 1)..60 {
            let lag = explicit_sum(n, ell);
            let c = scale_laguerre(n, ell, lag).to_float(n, 256) / d_n(n, 256);
            let want = c * Float::with_val(256, Integer::from(Integer::factorial(ell as u32))).sqrt();
            let diff = Float::with_val(256, &amps[ell] - &want).abs();
            assert!(diff.to_f64() < 1e-60, "ℓ = {ell}");
        }
    }

    #[test]
    fn completeness_and_weighted_norm_constant() {
        for n in [1u64, 8, 50, 400] {
            let total = completeness(n, completeness_cap(n), 256).to_f64();
            assert!((total - 1.0).abs() < 1e-8, "N = {n}: {total}");
        }
        let c = weighted_norm_constant(64, 256).to_f64();
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn k_range() {
        assert_eq!(k_max(8), 1);
        assert_eq!(k_max(63), 1);
        assert_eq!(k_max(64), 2);
        assert_eq!(k_max(10_000), 10);
        let rep = verify_bounds(64, 1, 256).unwrap();
        assert!(rep.violations().is_empty());
        assert_eq!(rep.rows[0].a_even, 1.0);
        assert_eq!(rep.rows[0].a_odd, 0.0);
        assert!(rep.rows[0].pass());
        assert!(verify_bounds(7, 0, 256).is_err());
    }
}
