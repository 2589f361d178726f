use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::basis::FockBasis;
use crate::{Error, Result, C64};

/// Dense coefficient vector over a [`FockBasis`].
#[derive(Debug, Clone)]
pub struct FockVector {
    basis: Arc<FockBasis>,
    coeffs: Vec<C64>,
}

impl FockVector {
    pub fn new(basis: Arc<FockBasis>, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), got: coeffs.len() });
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite Fock coefficients".into()));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zeros(basis: Arc<FockBasis>) -> Self {
        let dim = basis.dim();
        Self { basis, coeffs: vec![C64::new(0.0, 0.0); dim] }
    }

    /// Vacuum `Ω`; the basis must contain the zero-particle sector.
    pub fn vacuum(basis: Arc<FockBasis>) -> Result<Self> {
        if basis.n_min() > 0 {
            return Err(Error::InvalidParameter("basis does not contain the vacuum".into()));
        }
        let mut v = Self::zeros(basis);
        v.coeffs[0] = C64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    /// Replaces the coefficients, keeping the basis.
    pub fn with_coeffs(&self, coeffs: Vec<C64>) -> Result<Self> {
        Self::new(self.basis.clone(), coeffs)
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self, other⟩`, antilinear in the first slot.
    pub fn inner(&self, other: &FockVector) -> Result<C64> {
        if self.coeffs.len() != other.coeffs.len() {
            return Err(Error::DimensionMismatch { expected: self.coeffs.len(), got: other.coeffs.len() });
        }
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.conj() * b).sum())
    }

    /// `‖P_n ψ‖`.
    pub fn sector_norm(&self, n: usize) -> f64 {
        self.coeffs[self.basis.sector_range(n)].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `P_n ψ`.
    pub fn project_sector(&self, n: usize) -> FockVector {
        let mut out = Self::zeros(self.basis.clone());
        let r = self.basis.sector_range(n);
        out.coeffs[r.clone()].copy_from_slice(&self.coeffs[r]);
        out
    }

    /// Particle numbers carrying weight above `tol` (squared norm).
    pub fn occupied_sectors(&self, tol: f64) -> Vec<usize> {
        (self.basis.n_min()..=self.basis.n_max()).filter(|&n| self.sector_norm(n).powi(2) > tol).collect()
    }

    /// Zero-pads into a basis of the same mode count whose states extend this one.
    pub fn embed(&self, target: Arc<FockBasis>) -> Result<FockVector> {
        if target.n_modes() != self.basis.n_modes() || target.n_min() != self.basis.n_min() || target.n_max() < self.basis.n_max() {
            return Err(Error::InvalidParameter("target basis does not extend the source basis".into()));
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(target.dim(), C64::new(0.0, 0.0));
        Ok(FockVector { basis: target, coeffs })
    }

    /// Restricts to a smaller basis that is a prefix of this one; returns the
    /// discarded squared norm alongside.
    pub fn restrict(&self, target: Arc<FockBasis>) -> Result<(FockVector, f64)> {
        if target.n_modes() != self.basis.n_modes() || target.n_min() != self.basis.n_min() || target.n_max() > self.basis.n_max() {
            return Err(Error::InvalidParameter("target basis is not a prefix of the source basis".into()));
        }
        let d = target.dim();
        let lost = self.coeffs[d..].iter().map(|v| v.norm_sqr()).sum();
        Ok((FockVector { basis: target, coeffs: self.coeffs[..d].to_vec() }, lost))
    }

    pub fn write_snapshot<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_snapshot_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// Layout: `RHFV`, basis descriptor (3 × u64), count (u64), then
    /// `(re, im)` pairs, all little-endian.
    pub fn write_snapshot_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"RHFV")?;
        for v in self.basis.descriptor() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.coeffs.len() as u64).to_le_bytes())?;
        for c in &self.coeffs {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"RHFV" {
            return Err(Error::Format("bad magic".into()));
        }
        let mut buf = [0u8; 8];
        let mut desc = [0u64; 3];
        for d in desc.iter_mut() {
            r.read_exact(&mut buf)?;
            *d = u64::from_le_bytes(buf);
        }
        let basis = Arc::new(FockBasis::with_range(desc[0] as usize, desc[1] as usize, desc[2] as usize)?);
        r.read_exact(&mut buf)?;
        let count = u64::from_le_bytes(buf) as usize;
        if count != basis.dim() {
            return Err(Error::Format(format!("expected {} coefficients, header says {count}", basis.dim())));
        }
        let mut coeffs = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf);
            r.read_exact(&mut buf)?;
            coeffs.push(C64::new(re, f64::from_le_bytes(buf)));
        }
        Self::new(basis, coeffs)
    }
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `(a*(φ))^N Ω / √N!`: coefficient `√(N!/Π n_j!) Π φ_j^{n_j}` on the `N` sector.
pub fn factorized_state(basis: Arc<FockBasis>, phi: &[C64], n: usize) -> Result<FockVector> {
    if phi.len() != basis.n_modes() {
        return Err(Error::DimensionMismatch { expected: basis.n_modes(), got: phi.len() });
    }
    let nrm: f64 = phi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if (nrm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("mode vector must be normalized, norm = {nrm}")));
    }
    if n > basis.n_max() {
        return Err(Error::TruncationExceeded { n, n_max: basis.n_max() });
    }
    if n < basis.n_min() {
        return Err(Error::InvalidParameter(format!("sector {n} lies below the basis range")));
    }
    let mut out = FockVector::zeros(basis.clone());
    let lf: Vec<f64> = (0..=n).map(ln_factorial).collect();
    let range = basis.sector_range(n);
    for i in range {
        let occ = basis.occupation(i);
        let mut log_c = 0.5 * lf[n];
        let mut phase = C64::new(1.0, 0.0);
        let mut zero = false;
        for (&k, v) in occ.iter().zip(phi) {
            if k == 0 {
                continue;
            }
            if *v == C64::new(0.0, 0.0) {
                zero = true;
                break;
            }
            let (r, theta) = v.to_polar();
            log_c += k as f64 * r.ln() - 0.5 * lf[k as usize];
            phase *= C64::from_polar(1.0, k as f64 * theta);
        }
        if !zero {
            out.coeffs[i] = phase * log_c.exp();
        }
    }
    Ok(out)
}

/// Closed-form coherent state `W(f)Ω = e^{-|f|²/2} Σ Π f_j^{n_j}/√(n_j!) |n⟩`
/// restricted to the basis.
pub fn coherent_state(basis: Arc<FockBasis>, f: &[C64]) -> Result<FockVector> {
    if f.len() != basis.n_modes() {
        return Err(Error::DimensionMismatch { expected: basis.n_modes(), got: f.len() });
    }
    let norm2: f64 = f.iter().map(|v| v.norm_sqr()).sum();
    let mut out = FockVector::zeros(basis.clone());
    let lf: Vec<f64> = (0..=basis.n_max()).map(ln_factorial).collect();
    for i in 0..basis.dim() {
        let mut c = C64::new((-0.5 * norm2).exp(), 0.0);
        for (&k, v) in basis.occupation(i).iter().zip(f) {
            if k > 0 {
                c *= v.powu(k as u32) * (-0.5 * lf[k as usize]).exp();
            }
        }
        out.coeffs[i] = c;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: Vec<C64>) -> Vec<C64> {
        let n: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn factorized_small_cases() {
        let b = Arc::new(FockBasis::new(3, 6).unwrap());
        let phi = unit(vec![C64::new(1.0, 0.5), C64::new(-0.3, 0.2), C64::new(0.0, 0.7)]);
        let s0 = factorized_state(b.clone(), &phi, 0).unwrap();
        assert_eq!(s0.coeffs()[0], C64::new(1.0, 0.0));
        let s1 = factorized_state(b.clone(), &phi, 1).unwrap();
        for j in 0..3 {
            assert!((s1.coeffs()[1 + j] - phi[j]).norm() < 1e-15);
        }
        for n in 0..=6 {
            let s = factorized_state(b.clone(), &phi, n).unwrap();
            assert!((s.norm() - 1.0).abs() < 1e-13);
            assert!((s.sector_norm(n) - 1.0).abs() < 1e-13);
        }
        assert!(matches!(factorized_state(b.clone(), &phi, 7), Err(Error::TruncationExceeded { .. })));
        assert!(factorized_state(b, &[C64::new(2.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)], 1).is_err());
    }

    #[test]
    fn coherent_number_distribution() {
        let b = Arc::new(FockBasis::new(2, 30).unwrap());
        let f = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let c = coherent_state(b, &f).unwrap();
        assert!((c.sector_norm(0).powi(2) - (-1.0f64).exp()).abs() < 1e-15);
        let mut fact = 1.0;
        for n in 0..10 {
            if n > 0 {
                fact *= n as f64;
            }
            let p = (-1.0f64).exp() / fact;
            assert!((c.sector_norm(n).powi(2) - p).abs() < 1e-14);
        }
    }

    #[test]
    fn snapshot_round_trip_and_embedding() {
        let b = Arc::new(FockBasis::new(2, 3).unwrap());
        let phi = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let s = factorized_state(b, &phi, 2).unwrap();
        let mut buf = Vec::new();
        s.write_snapshot_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"RHFV");
        assert_eq!(buf.len(), 4 + 32 + 16 * s.coeffs().len());
        let back = FockVector::read_snapshot_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.coeffs(), s.coeffs());
        let big = Arc::new(FockBasis::new(2, 5).unwrap());
        let e = s.embed(big.clone()).unwrap();
        assert!((e.sector_norm(2) - 1.0).abs() < 1e-14);
        let (r, lost) = e.restrict(s.basis().clone()).unwrap();
        assert_eq!(lost, 0.0);
        assert_eq!(r.coeffs(), s.coeffs());
        buf[0] = b'X';
        assert!(FockVector::read_snapshot_from(&mut buf.as_slice()).is_err());
    }
}
