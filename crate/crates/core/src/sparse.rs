//! Symmetric sparse matrices in compressed-row form, positive diagonal
//! matrices, and the matrix-vector kernels used by every other module.
//!
//! Storage is canonical: columns are sorted ascending within each row,
//! duplicates are summed and explicit zeros are dropped. Both triangles are
//! stored, so a row slice is all that a product needs.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Below this many stored entries a product runs on the calling thread.
const PAR_NNZ_THRESHOLD: usize = 1 << 15;

#[derive(Clone, Debug, PartialEq)]
pub struct SymSparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymSparseMatrix {
    pub fn zeros(n: usize) -> Self {
        SymSparseMatrix {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from triples that list both orientations of every
    /// off-diagonal entry. Duplicates are summed before the symmetry check.
    pub fn from_triplets(n: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let m = Self::assemble(n, triples.iter().copied())?;
        m.check_symmetric(1e-12)?;
        Ok(m.symmetrized())
    }

    /// Builds a matrix from triples where each off-diagonal entry is given in
    /// one orientation only (as in Matrix Market `symmetric` files); the
    /// mirror image is added.
    pub fn from_triplets_mirrored(n: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let mirrored = triples.iter().flat_map(|&(i, j, w)| {
            let mirror = (i != j).then_some((j, i, w));
            std::iter::once((i, j, w)).chain(mirror)
        });
        Self::assemble(n, mirrored)
    }

    fn assemble(n: usize, triples: impl Iterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, w) in triples {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange { row: i, col: j, dim: n });
            }
            if !w.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            entries.push((i, j, w));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut k = 0;
        while k < entries.len() {
            let (i, j, mut w) = entries[k];
            k += 1;
            while k < entries.len() && entries[k].0 == i && entries[k].1 == j {
                w += entries[k].2;
                k += 1;
            }
            if w != 0.0 {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(w);
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SymSparseMatrix { n, row_ptr, col_idx, values })
    }

    /// Assembles a matrix from per-row `(col, value)` lists that are already
    /// sorted by column, duplicate free and symmetric.
    pub(crate) fn from_sorted_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert_eq!(rows.len(), n);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (j, w) in row {
                col_idx.push(j);
                values.push(w);
            }
            row_ptr.push(col_idx.len());
        }
        let m = SymSparseMatrix { n, row_ptr, col_idx, values };
        debug_assert!(m.check_symmetric(0.0).is_ok());
        m
    }

    /// Diagonal matrix stored in sparse form.
    pub fn from_diagonal(values: &[f64]) -> Self {
        let triples: Vec<_> = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::assemble(values.len(), triples.into_iter()).expect("diagonal indices are in range")
    }

    fn symmetrized(mut self) -> Self {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if j > i {
                    let t = self.find(j, i).expect("symmetric structure");
                    let avg = 0.5 * (self.values[k] + self.values[t]);
                    self.values[k] = avg;
                    self.values[t] = avg;
                }
            }
        }
        self
    }

    /// Checks `value(i,j) == value(j,i)` up to `rel_tol` relative error.
    pub fn check_symmetric(&self, rel_tol: f64) -> Result<()> {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let mirror = self.find(j, i).map_or(0.0, |t| self.values[t]);
                if (v - mirror).abs() > rel_tol * v.abs().max(mirror.abs()) {
                    return Err(Error::Asymmetric { row: i, col: j, upper: v, lower: mirror });
                }
            }
        }
        Ok(())
    }

    fn find(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi].binary_search(&j).ok().map(|p| lo + p)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries, both triangles and the diagonal.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// All stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// Copy with the diagonal removed.
    pub fn off_diagonal(&self) -> Self {
        let rows = (0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .filter(|(&j, _)| j != i)
                    .map(|(&j, &v)| (j, v))
                    .collect()
            })
            .collect();
        Self::from_sorted_rows(self.n, rows)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.matvec_into(v, &mut out)?;
        Ok(out)
    }

    /// `out = self * v`. Each output entry is reduced sequentially, so the
    /// result does not depend on the number of workers.
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.n, v.len())?;
        check_dim(self.n, out.len())?;
        let row_dot = |i: usize| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&j, &a)| a * v[j]).sum::<f64>()
        };
        if self.nnz() >= PAR_NNZ_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = row_dot(i));
        } else {
            out.iter_mut().enumerate().for_each(|(i, o)| *o = row_dot(i));
        }
        Ok(())
    }

    /// FNV-1a digest of the structure and the exact value bits.
    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write_u64(self.n as u64);
        for &p in &self.row_ptr {
            h.write_u64(p as u64);
        }
        for &c in &self.col_idx {
            h.write_u64(c as u64);
        }
        for &v in &self.values {
            h.write_u64(v.to_bits());
        }
        h.finish()
    }
}

/// Nonnegative diagonal matrix; positive whenever it is the `D` of a splitting.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagMatrix(Vec<f64>);

impl DiagMatrix {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: i });
        }
        Ok(DiagMatrix(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn require_positive(&self) -> Result<()> {
        match self.0.iter().position(|&d| !(d > 0.0)) {
            Some(index) => Err(Error::NonPositiveDiagonal { index, value: self.0[index] }),
            None => Ok(()),
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        Ok(self.0.iter().zip(v).map(|(d, x)| d * x).collect())
    }

    /// `D⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        self.require_positive()?;
        Ok(self.0.iter().zip(v).map(|(d, x)| x / d).collect())
    }

    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write_u64(self.0.len() as u64);
        for &v in &self.0 {
            h.write_u64(v.to_bits());
        }
        h.finish()
    }
}

/// Which half of the symmetric V-cycle factor is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `(I + D⁻¹A) v`
    Left,
    /// `(I + A D⁻¹) v`
    Right,
}

/// Applies `(I + D⁻¹A)` or `(I + AD⁻¹)` to `v`.
pub fn apply_halfcycle_factor(
    d: &DiagMatrix,
    a: &SymSparseMatrix,
    v: &[f64],
    side: Side,
) -> Result<Vec<f64>> {
    check_dim(d.dim(), a.dim())?;
    check_dim(d.dim(), v.len())?;
    d.require_positive()?;
    let dv = d.values();
    let mut out = match side {
        Side::Left => a.matvec(v)?,
        Side::Right => {
            let scaled: Vec<f64> = v.iter().zip(dv).map(|(x, d)| x / d).collect();
            a.matvec(&scaled)?
        }
    };
    match side {
        Side::Left => out.iter_mut().zip(v).zip(dv).for_each(|((o, x), d)| *o = x + *o / d),
        Side::Right => out.iter_mut().zip(v).for_each(|(o, x)| *o += x),
    }
    Ok(out)
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    pub(crate) fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write_u64(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub(crate) fn write_str(&mut self, s: &str) {
        for b in s.bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap() -> SymSparseMatrix {
        SymSparseMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    #[test]
    fn matvec_examples() {
        let a = swap();
        assert_eq!(a.matvec(&[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(a.matvec(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        let d = DiagMatrix::new(vec![2.0, 2.0]).unwrap();
        assert_eq!(d.matvec(&[1.0, 3.0]).unwrap(), vec![2.0, 6.0]);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        assert!(matches!(
            swap().matvec(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn halfcycle_examples() {
        let d = DiagMatrix::new(vec![2.0, 2.0]).unwrap();
        let a = swap();
        assert_eq!(apply_halfcycle_factor(&d, &a, &[1.0, 0.0], Side::Left).unwrap(), vec![1.0, 0.5]);
        assert_eq!(apply_halfcycle_factor(&d, &a, &[2.0, 2.0], Side::Right).unwrap(), vec![3.0, 3.0]);
        let zero = SymSparseMatrix::zeros(2);
        let v = [0.3, -7.0];
        assert_eq!(apply_halfcycle_factor(&d, &zero, &v, Side::Left).unwrap(), v.to_vec());
        assert_eq!(apply_halfcycle_factor(&d, &zero, &v, Side::Right).unwrap(), v.to_vec());
    }

    #[test]
    fn halfcycle_rejects_zero_diagonal() {
        let d = DiagMatrix::new(vec![2.0, 0.0]).unwrap();
        assert!(matches!(
            apply_halfcycle_factor(&d, &swap(), &[1.0, 1.0], Side::Right),
            Err(Error::NonPositiveDiagonal { index: 1, .. })
        ));
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let a = SymSparseMatrix::from_triplets(2, &[(0, 1, 0.5), (0, 1, 0.5), (1, 0, 1.0)]).unwrap();
        assert_eq!(a, swap());
        let z = SymSparseMatrix::from_triplets(2, &[(0, 1, 1.0), (0, 1, -1.0), (1, 0, 0.0)]).unwrap();
        assert_eq!(z.nnz(), 0);
        let e = SymSparseMatrix::from_triplets(1, &[]).unwrap();
        assert_eq!((e.dim(), e.nnz()), (1, 0));
    }

    #[test]
    fn triplets_errors() {
        assert!(matches!(
            SymSparseMatrix::from_triplets(2, &[(0, 2, 1.0)]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            SymSparseMatrix::from_triplets(2, &[(0, 1, 1.0)]),
            Err(Error::Asymmetric { .. })
        ));
        assert!(matches!(
            SymSparseMatrix::from_triplets(2, &[(0, 0, f64::NAN)]),
            Err(Error::NonFinite { .. })
        ));
        let m = SymSparseMatrix::from_triplets_mirrored(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(m, swap());
    }

    #[test]
    fn columns_sorted_within_rows() {
        let m = SymSparseMatrix::from_triplets_mirrored(
            4,
            &[(3, 0, 1.0), (2, 0, 2.0), (1, 0, 3.0), (3, 3, 4.0)],
        )
        .unwrap();
        assert_eq!(m.row(0).0, &[1, 2, 3]);
        assert_eq!(m.off_diagonal().nnz(), 6);
        assert_eq!(m.row_sums(), vec![6.0, 3.0, 2.0, 5.0]);
    }
}
