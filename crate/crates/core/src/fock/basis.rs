use std::ops::Range;

use crate::{Error, Result};

/// Occupation-number basis of all states with `n_min <= Σ n_j <= n_max`.
///
/// States are ordered by total particle number and, within a sector,
/// lexicographically with the first mode most occupied first. Sector
/// projectors are therefore contiguous index ranges, and the basis with a
/// smaller `n_max` is a prefix of a larger one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockBasis {
    n_modes: usize,
    n_min: usize,
    n_max: usize,
    occupations: Vec<u16>,
    sector_offsets: Vec<usize>,
    /// `counts[m][r]` = number of ways to put `r` bosons into `m` modes.
    counts: Vec<Vec<usize>>,
}

impl FockBasis {
    /// Full truncated Fock space with up to `n_max` particles.
    pub fn new(n_modes: usize, n_max: usize) -> Result<Self> {
        Self::with_range(n_modes, 0, n_max)
    }

    /// Single `n`-particle sector.
    pub fn sector(n_modes: usize, n: usize) -> Result<Self> {
        Self::with_range(n_modes, n, n)
    }

    pub fn with_range(n_modes: usize, n_min: usize, n_max: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidParameter("need at least one mode".into()));
        }
        if n_min > n_max || n_max > u16::MAX as usize {
            return Err(Error::InvalidParameter(format!("bad particle range {n_min}..={n_max}")));
        }
        let mut counts = vec![vec![0usize; n_max + 1]; n_modes + 2];
        for row in counts.iter_mut().skip(1) {
            row[0] = 1;
        }
        for m in 1..=n_modes + 1 {
            for r in 1..=n_max {
                counts[m][r] = counts[m - 1][r].checked_add(counts[m][r - 1]).ok_or_else(|| {
                    Error::ResourceGuard("basis size overflows usize".into())
                })?;
            }
        }
        let mut sector_offsets = vec![0usize];
        for n in n_min..=n_max {
            let last = *sector_offsets.last().unwrap();
            sector_offsets.push(last + counts[n_modes][n]);
        }
        let dim = *sector_offsets.last().unwrap();
        let mut occupations = Vec::with_capacity(dim * n_modes);
        let mut scratch = vec![0u16; n_modes];
        for n in n_min..=n_max {
            enumerate_sector(&mut scratch, 0, n, &mut occupations);
        }
        debug_assert_eq!(occupations.len(), dim * n_modes);
        Ok(Self { n_modes, n_min, n_max, occupations, sector_offsets, counts })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        *self.sector_offsets.last().unwrap()
    }

    pub fn occupation(&self, index: usize) -> &[u16] {
        &self.occupations[index * self.n_modes..(index + 1) * self.n_modes]
    }

    pub fn particle_number(&self, index: usize) -> usize {
        self.occupation(index).iter().map(|&v| v as usize).sum()
    }

    /// Index range of the `n`-particle sector (empty when outside the basis).
    pub fn sector_range(&self, n: usize) -> Range<usize> {
        if n < self.n_min || n > self.n_max {
            return 0..0;
        }
        let i = n - self.n_min;
        self.sector_offsets[i]..self.sector_offsets[i + 1]
    }

    /// Number of states with `n` particles over `m` modes.
    pub fn sector_size(n_modes: usize, n: usize) -> usize {
        let mut c: u128 = 1;
        for i in 0..n as u128 {
            c = c * (n_modes as u128 + i) / (i + 1);
        }
        c as usize
    }

    /// Index of an occupation vector, or `None` when it lies outside the truncation.
    pub fn index_of(&self, occ: &[u16]) -> Option<usize> {
        debug_assert_eq!(occ.len(), self.n_modes);
        let n: usize = occ.iter().map(|&v| v as usize).sum();
        if n < self.n_min || n > self.n_max {
            return None;
        }
        let mut rank = self.sector_offsets[n - self.n_min];
        let mut remaining = n;
        for (i, &v) in occ.iter().enumerate().take(self.n_modes - 1) {
            let v = v as usize;
            if remaining > v {
                // states of the sector whose mode-i occupation exceeds v
                rank += self.counts[self.n_modes - i][remaining - v - 1];
            }
            remaining -= v;
        }
        Some(rank)
    }

    /// Identifier used in state snapshots.
    pub fn descriptor(&self) -> [u64; 3] {
        [self.n_modes as u64, self.n_min as u64, self.n_max as u64]
    }
}

fn enumerate_sector(scratch: &mut [u16], mode: usize, remaining: usize, out: &mut Vec<u16>) {
    if mode == scratch.len() - 1 {
        scratch[mode] = remaining as u16;
        out.extend_from_slice(scratch);
        return;
    }
    for v in (0..=remaining).rev() {
        scratch[mode] = v as u16;
        enumerate_sector(scratch, mode + 1, remaining - v, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn size_matches_stars_and_bars() {
        for m in 1..5 {
            for n_max in 0..7 {
                let b = FockBasis::new(m, n_max).unwrap();
                let expected: usize = (0..=n_max).map(|n| binom(m + n - 1, n)).sum();
                assert_eq!(b.dim(), expected, "m = {m}, n_max = {n_max}");
            }
        }
        assert_eq!(FockBasis::sector(8, 10).unwrap().dim(), 19448);
        assert_eq!(FockBasis::sector_size(8, 10), 19448);
    }

    #[test]
    fn graded_order_and_contiguous_sectors() {
        let b = FockBasis::new(3, 4).unwrap();
        let mut prev = 0;
        for i in 0..b.dim() {
            let n = b.particle_number(i);
            assert!(n >= prev);
            prev = n;
            assert!(b.sector_range(n).contains(&i));
        }
        assert_eq!(b.occupation(0), &[0, 0, 0]);
        assert_eq!(b.occupation(1), &[1, 0, 0]);
        assert_eq!(b.occupation(3), &[0, 0, 1]);
        assert_eq!(b.occupation(4), &[2, 0, 0]);
    }

    #[test]
    fn smaller_basis_is_prefix() {
        let small = FockBasis::new(3, 4).unwrap();
        let big = FockBasis::new(3, 7).unwrap();
        for i in 0..small.dim() {
            assert_eq!(small.occupation(i), big.occupation(i));
        }
    }

    #[test]
    fn out_of_range_occupations() {
        let b = FockBasis::with_range(2, 2, 3).unwrap();
        assert_eq!(b.index_of(&[1, 0]), None);
        assert_eq!(b.index_of(&[4, 0]), None);
        assert_eq!(b.index_of(&[2, 0]), Some(0));
        assert!(FockBasis::new(0, 3).is_err());
        assert!(FockBasis::with_range(2, 3, 2).is_err());
    }

    proptest! {
        #[test]
        fn index_maps_are_inverse(m in 1usize..6, n_min in 0usize..4, extra in 0usize..5) {
            let b = FockBasis::with_range(m, n_min, n_min + extra).unwrap();
            for i in 0..b.dim() {
                prop_assert_eq!(b.index_of(b.occupation(i)), Some(i));
            }
        }
    }
}
