use nalgebra::DMatrix;
use rayon::prelude::*;

use super::basis::FockBasis;
use crate::{Error, Result, C64};

/// Normal-ordered monomial `coeff · a*_{c0} a*_{c1} a_{a0} a_{a1}`.
///
/// Unused slots hold `u16::MAX`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coeff: C64,
    pub create: [u16; 2],
    pub annihilate: [u16; 2],
}

const NONE: u16 = u16::MAX;

impl Term {
    pub fn new(coeff: C64, create: &[usize], annihilate: &[usize]) -> Self {
        assert!(create.len() <= 2 && annihilate.len() <= 2);
        let mut c = [NONE; 2];
        let mut a = [NONE; 2];
        for (slot, &m) in c.iter_mut().zip(create) {
            *slot = m as u16;
        }
        for (slot, &m) in a.iter_mut().zip(annihilate) {
            *slot = m as u16;
        }
        Self { coeff, create: c, annihilate: a }
    }

    /// Change in particle number produced by the term.
    pub fn particle_shift(&self) -> i64 {
        let c = self.create.iter().filter(|&&m| m != NONE).count() as i64;
        let a = self.annihilate.iter().filter(|&&m| m != NONE).count() as i64;
        c - a
    }

    /// Applies the monomial to `occ` in place; returns the amplitude or `None`
    /// when the result vanishes.
    fn apply(&self, occ: &mut [u16]) -> Option<f64> {
        let mut amp = 1.0f64;
        // product of occupation factors, square-rooted once at the end
        for &m in self.annihilate.iter().rev() {
            if m == NONE {
                continue;
            }
            let v = &mut occ[m as usize];
            if *v == 0 {
                return None;
            }
            amp *= *v as f64;
            *v -= 1;
        }
        for &m in self.create.iter().rev() {
            if m == NONE {
                continue;
            }
            let v = &mut occ[m as usize];
            *v += 1;
            amp *= *v as f64;
        }
        Some(amp.sqrt())
    }
}

/// Compressed sparse row matrix acting on a Fock basis.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<C64>,
    hermitian: bool,
}

impl SparseOperator {
    /// Matrix of `Σ terms` on `basis`. Components leaving the truncated space
    /// are dropped. With `hermitian` set the result is checked against its
    /// adjoint to 1e-12.
    pub fn from_terms(basis: &FockBasis, terms: &[Term], hermitian: bool) -> Result<Self> {
        let dim = basis.dim();
        if dim > u32::MAX as usize {
            return Err(Error::ResourceGuard(format!("basis of dimension {dim} too large")));
        }
        let m = basis.n_modes();
        if let Some(t) = terms
            .iter()
            .find(|t| t.create.iter().chain(&t.annihilate).any(|&v| v != NONE && v as usize >= m))
        {
            return Err(Error::InvalidParameter(format!("term {t:?} references a mode outside 0..{m}")));
        }
        let columns: Vec<Vec<(u32, C64)>> = (0..dim)
            .into_par_iter()
            .map_init(
                || vec![0u16; m],
                |occ, col| {
                    let mut out: Vec<(u32, C64)> = Vec::new();
                    for t in terms {
                        occ.copy_from_slice(basis.occupation(col));
                        if let Some(amp) = t.apply(occ) {
                            if let Some(row) = basis.index_of(occ) {
                                out.push((row as u32, t.coeff * amp));
                            }
                        }
                    }
                    out.sort_by_key(|e| e.0);
                    merge_sorted(&mut out);
                    out
                },
            )
            .collect();
        let op = Self::from_columns(dim, &columns, hermitian);
        if hermitian {
            let defect = op.hermiticity_defect();
            if defect > 1e-12 {
                return Err(Error::Assertion(format!("operator flagged Hermitian has defect {defect:.3e}")));
            }
        }
        Ok(op)
    }

    fn from_columns(dim: usize, columns: &[Vec<(u32, C64)>], hermitian: bool) -> Self {
        let mut counts = vec![0usize; dim + 1];
        for col in columns {
            for &(r, _) in col {
                counts[r as usize + 1] += 1;
            }
        }
        for i in 0..dim {
            counts[i + 1] += counts[i];
        }
        let nnz = counts[dim];
        let mut next = counts.clone();
        let mut col_idx = vec![0u32; nnz];
        let mut values = vec![C64::new(0.0, 0.0); nnz];
        for (c, col) in columns.iter().enumerate() {
            for &(r, v) in col {
                let slot = &mut next[r as usize];
                col_idx[*slot] = c as u32;
                values[*slot] = v;
                *slot += 1;
            }
        }
        Self { dim, row_ptr: counts, col_idx, values, hermitian }
    }

    /// Builds from unordered triplets, summing duplicates.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, C64)], hermitian: bool) -> Result<Self> {
        let mut columns = vec![Vec::new(); dim];
        for &(r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.max(c) + 1 });
            }
            columns[c].push((r as u32, v));
        }
        for col in columns.iter_mut() {
            col.sort_by_key(|e| e.0);
            merge_sorted(col);
        }
        Ok(Self::from_columns(dim, &columns, hermitian))
    }

    pub fn diagonal(values: &[C64], hermitian: bool) -> Self {
        let dim = values.len();
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim as u32).collect(),
            values: values.to_vec(),
            hermitian,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![C64::new(1.0, 0.0); dim], true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().map(|&c| c as usize).zip(self.values[range].iter().copied())
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = A x`, parallel over rows with a fixed summation order per row.
    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        y.par_iter_mut().with_min_len(256).enumerate().for_each(|(r, out)| {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            *out = acc;
        });
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut columns: Vec<Vec<(u32, C64)>> = vec![Vec::new(); self.dim];
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                columns[r].push((c as u32, v.conj()));
            }
        }
        Self::from_columns(self.dim, &columns, self.hermitian)
    }

    /// `Σ c_i A_i` over operators of equal dimension.
    pub fn linear_combination(parts: &[(C64, &SparseOperator)], hermitian: bool) -> Result<Self> {
        let dim = parts.first().map(|p| p.1.dim).unwrap_or(0);
        for (_, op) in parts {
            if op.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: op.dim });
            }
        }
        let mut columns: Vec<Vec<(u32, C64)>> = vec![Vec::new(); dim];
        for r in 0..dim {
            for (c, op) in parts {
                for (col, v) in op.row(r) {
                    columns[col].push((r as u32, c * v));
                }
            }
        }
        for col in columns.iter_mut() {
            col.sort_by_key(|e| e.0);
            merge_sorted(col);
        }
        Ok(Self::from_columns(dim, &columns, hermitian))
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= c;
        }
        out.hermitian = self.hermitian && c.im == 0.0;
        out
    }

    /// Largest entry of `|A - A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let adj = self.adjoint();
        self.max_abs_diff(&adj)
    }

    /// Entrywise max norm of `A - B`.
    pub fn max_abs_diff(&self, other: &SparseOperator) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut worst = 0.0f64;
        let mut scratch: Vec<(usize, C64)> = Vec::new();
        for r in 0..self.dim {
            scratch.clear();
            scratch.extend(self.row(r));
            scratch.extend(other.row(r).map(|(c, v)| (c, -v)));
            scratch.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < scratch.len() {
                let mut acc = scratch[i].1;
                let mut j = i + 1;
                while j < scratch.len() && scratch[j].0 == scratch[i].0 {
                    acc += scratch[j].1;
                    j += 1;
                }
                worst = worst.max(acc.norm());
                i = j;
            }
        }
        worst
    }

    /// Upper bound on the operator norm from the largest absolute row sum.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Largest entry of `|[A, D]|` for a diagonal `D = diag(d)`.
    pub fn commutator_with_diagonal(&self, d: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                worst = worst.max((v * (d[c] - d[r])).norm());
            }
        }
        worst
    }
}

fn merge_sorted(entries: &mut Vec<(u32, C64)>) {
    let mut w = 0;
    for i in 0..entries.len() {
        if w > 0 && entries[w - 1].0 == entries[i].0 {
            let v = entries[i].1;
            entries[w - 1].1 += v;
        } else {
            entries[w] = entries[i];
            w += 1;
        }
    }
    entries.truncate(w);
    entries.retain(|e| e.1 != C64::new(0.0, 0.0));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_term_is_diagonal() {
        let b = FockBasis::new(2, 3).unwrap();
        let terms = [Term::new(C64::new(1.0, 0.0), &[0], &[0]), Term::new(C64::new(1.0, 0.0), &[1], &[1])];
        let n = SparseOperator::from_terms(&b, &terms, true).unwrap();
        for i in 0..b.dim() {
            let row: Vec<_> = n.row(i).collect();
            if b.particle_number(i) == 0 {
                assert!(row.is_empty());
            } else {
                assert_eq!(row, vec![(i, C64::new(b.particle_number(i) as f64, 0.0))]);
            }
        }
    }

    #[test]
    fn triplets_merge_and_adjoint() {
        let one = C64::new(1.0, 0.0);
        let a = SparseOperator::from_triplets(2, &[(0, 1, one), (0, 1, C64::new(0.0, 2.0))], false).unwrap();
        assert_eq!(a.nnz(), 1);
        let adj = a.adjoint();
        assert_eq!(adj.row(1).collect::<Vec<_>>(), vec![(0, C64::new(1.0, -2.0))]);
        assert!(a.hermiticity_defect() > 1.0);
        let y = a.matvec(&[one, one]);
        assert_eq!(y, vec![C64::new(1.0, 2.0), C64::new(0.0, 0.0)]);
    }

    #[test]
    fn hermitian_flag_is_checked() {
        let b = FockBasis::new(2, 2).unwrap();
        let bad = [Term::new(C64::new(1.0, 0.0), &[0], &[1])];
        assert!(SparseOperator::from_terms(&b, &bad, true).is_err());
        assert!(SparseOperator::from_terms(&b, &[Term::new(C64::new(1.0, 0.0), &[3], &[])], false).is_err());
    }

    #[test]
    fn linear_combination_cancels() {
        let b = FockBasis::new(3, 3).unwrap();
        let t = [Term::new(C64::new(0.5, 0.1), &[0, 1], &[2])];
        let a = SparseOperator::from_terms(&b, &t, false).unwrap();
        let z = SparseOperator::linear_combination(&[(C64::new(1.0, 0.0), &a), (C64::new(-1.0, 0.0), &a)], false).unwrap();
        assert_eq!(z.nnz(), 0);
    }
}
