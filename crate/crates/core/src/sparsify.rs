//! General-purpose re-sparsification of an SDDM splitting by sampling
//! edges of its Laplacian part with probability proportional to
//! weight times effective resistance.
//!
//! `D - A` is split as `(D - X - Y) - (A - Y)` with `Y = diag(A)` and `X`
//! the excess that makes `D - X - A` a Laplacian. Only the Laplacian is
//! sampled; `X` and `Y` are carried over exactly.

use faer::Mat;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reductions::SddmSplitting;
use crate::rng::stream_rng;
use crate::sparse::{DiagMatrix, SymSparseMatrix};
use crate::squaring::check_eps;
use crate::verify::{self, check_dense_limit};

pub const DEFAULT_OVERSAMPLE: f64 = 4.0;
pub const DEFAULT_ORACLE_LIMIT: usize = verify::DENSE_LIMIT;
pub const DEFAULT_SAMPLE_CAP: u64 = 50_000_000;

const DRAW_BLOCK: u64 = 4096;

/// Source of effective resistances for the graph being sparsified.
pub trait ResistanceOracle: Sync {
    fn resistance(&self, v: usize, w: usize) -> Result<f64>;
}

/// Exact resistances from a dense pseudoinverse, one block per connected
/// component.
pub struct DenseResistance {
    component: Vec<usize>,
    local: Vec<usize>,
    pinv: Vec<Mat<f64>>,
}

impl DenseResistance {
    /// `adjacency` holds positive edge weights off the diagonal; its
    /// diagonal is ignored.
    pub fn new(adjacency: &SymSparseMatrix, limit: usize) -> Result<Self> {
        let n = adjacency.dim();
        check_dense_limit(n, limit)?;
        let mut component = vec![usize::MAX; n];
        let mut local = vec![0; n];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for s in 0..n {
            if component[s] != usize::MAX {
                continue;
            }
            let c = members.len();
            let mut group = vec![s];
            component[s] = c;
            let mut k = 0;
            while k < group.len() {
                let u = group[k];
                k += 1;
                for &v in adjacency.row(u).0 {
                    if v != u && component[v] == usize::MAX {
                        component[v] = c;
                        group.push(v);
                    }
                }
            }
            group.sort_unstable();
            for (i, &v) in group.iter().enumerate() {
                local[v] = i;
            }
            members.push(group);
        }

        let mut pinv = Vec::with_capacity(members.len());
        for group in &members {
            let k = group.len();
            let jk = 1.0 / k as f64;
            // L + J/k is nonsingular on a connected block; its inverse minus J/k is L†
            let mut m = Mat::from_fn(k, k, |_, _| jk);
            for (i, &u) in group.iter().enumerate() {
                let (cols, vals) = adjacency.row(u);
                for (&v, &w) in cols.iter().zip(vals) {
                    if v != u {
                        let j = local[v];
                        m.write(i, j, m.read(i, j) - w);
                        m.write(i, i, m.read(i, i) + w);
                    }
                }
            }
            let inv = verify::cholesky_inverse(m.as_ref())?;
            pinv.push(Mat::from_fn(k, k, |i, j| inv.read(i, j) - jk));
        }
        Ok(DenseResistance { component, local, pinv })
    }
}

impl ResistanceOracle for DenseResistance {
    fn resistance(&self, v: usize, w: usize) -> Result<f64> {
        let c = self.component[v];
        if c != self.component[w] {
            return Err(Error::DifferentComponents(v, w));
        }
        let p = &self.pinv[c];
        let (i, j) = (self.local[v], self.local[w]);
        Ok(p.read(i, i) + p.read(j, j) - 2.0 * p.read(i, j))
    }
}

/// `(e_v - e_w)ᵀ L† (e_v - e_w)` for the graph with the given adjacency.
pub fn effective_resistance(adjacency: &SymSparseMatrix, v: usize, w: usize) -> Result<f64> {
    DenseResistance::new(adjacency, DEFAULT_ORACLE_LIMIT)?.resistance(v, w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    Dense,
    /// No oracle: re-sparsification is skipped.
    None,
}

#[derive(Clone, Debug)]
pub struct SparsifyParams {
    pub eps: f64,
    pub seed: u64,
    pub oversample: f64,
    /// Return the input unchanged when it has at most `2q` off-diagonal entries.
    pub keep_if_small: bool,
    pub oracle_limit: usize,
    pub sample_cap: u64,
}

impl SparsifyParams {
    pub fn new(eps: f64, seed: u64) -> Self {
        SparsifyParams {
            eps,
            seed,
            oversample: DEFAULT_OVERSAMPLE,
            keep_if_small: true,
            oracle_limit: DEFAULT_ORACLE_LIMIT,
            sample_cap: DEFAULT_SAMPLE_CAP,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparsifyStats {
    pub samples: u64,
    pub distinct_edges: usize,
    pub skipped: bool,
}

/// `q = ⌈C_g · n · ln(max(n, 2)) / ε²⌉`
pub fn sample_budget(n: usize, eps: f64, oversample: f64) -> u64 {
    let q = (oversample * n as f64 * (n.max(2) as f64).ln() / (eps * eps)).ceil();
    if q >= u64::MAX as f64 {
        u64::MAX
    } else {
        q as u64
    }
}

pub fn sparsify_splitting(
    s: &SddmSplitting,
    params: &SparsifyParams,
) -> Result<(SddmSplitting, SparsifyStats)> {
    check_eps(params.eps)?;
    if let Some(out) = pass_through(s, params) {
        return Ok(out);
    }
    let oracle = DenseResistance::new(s.a(), params.oracle_limit)?;
    sparsify_with_oracle(s, params, &oracle)
}

fn pass_through(s: &SddmSplitting, params: &SparsifyParams) -> Option<(SddmSplitting, SparsifyStats)> {
    let q = sample_budget(s.dim(), params.eps, params.oversample);
    let off_nnz = s.a().nnz() - s.a().diagonal().iter().filter(|&&x| x != 0.0).count();
    let small = params.keep_if_small && (off_nnz as u64) <= q.saturating_mul(2);
    (small || off_nnz == 0).then(|| (s.clone(), SparsifyStats { skipped: true, ..Default::default() }))
}

/// Same as [`sparsify_splitting`] with a caller-supplied resistance oracle
/// for the off-diagonal graph of `A`.
pub fn sparsify_with_oracle(
    s: &SddmSplitting,
    params: &SparsifyParams,
    oracle: &dyn ResistanceOracle,
) -> Result<(SddmSplitting, SparsifyStats)> {
    check_eps(params.eps)?;
    if let Some(out) = pass_through(s, params) {
        return Ok(out);
    }
    let n = s.dim();
    let a = s.a();
    let d = s.d().values();
    let loops = a.diagonal();
    let sums = a.row_sums();
    let mut excess = Vec::with_capacity(n);
    for v in 0..n {
        let x = d[v] - sums[v];
        if x < -1e-9 * d[v] {
            return Err(Error::InvalidSplitting(format!("row {v} is not dominated")));
        }
        excess.push(x.max(0.0));
    }

    let edges: Vec<(usize, usize, f64)> = a.triplets().filter(|&(v, w, _)| v < w).collect();
    let mut importance = Vec::with_capacity(edges.len());
    for &(v, w, x) in &edges {
        importance.push(x * oracle.resistance(v, w)?);
    }
    let total: f64 = importance.iter().sum();
    let mut prefix = Vec::with_capacity(edges.len());
    let mut acc = 0.0;
    for &p in &importance {
        acc += p;
        prefix.push(acc);
    }

    let q = sample_budget(n, params.eps, params.oversample);
    if q > params.sample_cap {
        return Err(Error::SampleBudgetExceeded { requested: q, cap: params.sample_cap });
    }
    let blocks = q.div_ceil(DRAW_BLOCK);
    let last = prefix.len() - 1;
    let draws: Vec<Vec<u32>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(params.seed, b);
            let len = DRAW_BLOCK.min(q - b * DRAW_BLOCK);
            (0..len)
                .map(|_| {
                    let r = rng.gen::<f64>() * acc;
                    prefix.partition_point(|&p| p <= r).min(last) as u32
                })
                .collect()
        })
        .collect();
    let mut counts = vec![0u64; edges.len()];
    for e in draws.into_iter().flatten() {
        counts[e as usize] += 1;
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut degree = vec![0.0; n];
    let mut distinct = 0;
    let qf = q as f64;
    for (e, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        distinct += 1;
        let (v, w, x) = edges[e];
        let p = importance[e] / total;
        let weight = (c as f64 / qf) * x / p;
        rows[v].push((w, weight));
        rows[w].push((v, weight));
        degree[v] += weight;
        degree[w] += weight;
    }
    for (v, row) in rows.iter_mut().enumerate() {
        if loops[v] != 0.0 {
            row.push((v, loops[v]));
        }
        row.sort_unstable_by_key(|&(j, _)| j);
    }
    let d_hat: Vec<f64> = (0..n).map(|v| degree[v] + excess[v] + loops[v]).collect();
    let a_hat = SymSparseMatrix::from_sorted_rows(n, rows);
    let stats = SparsifyStats { samples: q, distinct_edges: distinct, skipped: false };
    Ok((SddmSplitting::new_unchecked(DiagMatrix::new(d_hat)?, a_hat), stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> SymSparseMatrix {
        SymSparseMatrix::from_triplets_mirrored(n, edges).unwrap()
    }

    #[test]
    fn resistance_examples() {
        let e = graph(2, &[(0, 1, 4.0)]);
        assert!((effective_resistance(&e, 0, 1).unwrap() - 0.25).abs() < 1e-14);
        let p = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        assert!((effective_resistance(&p, 0, 2).unwrap() - 2.0).abs() < 1e-14);
        let t = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        for (v, w) in [(0, 1), (0, 2), (1, 2)] {
            assert!((effective_resistance(&t, v, w).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn resistance_across_components_fails() {
        let g = graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        assert!(matches!(effective_resistance(&g, 0, 3), Err(Error::DifferentComponents(0, 3))));
        assert!((effective_resistance(&g, 2, 3).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn oracle_limit() {
        let g = graph(3, &[(0, 1, 1.0)]);
        assert!(matches!(DenseResistance::new(&g, 2), Err(Error::DenseLimitExceeded { .. })));
    }

    #[test]
    fn single_edge_is_reproduced() {
        let a = graph(2, &[(0, 1, 0.7)]);
        let s = SddmSplitting::new(DiagMatrix::new(vec![1.0, 0.9]).unwrap(), a).unwrap();
        let mut p = SparsifyParams::new(0.5, 3);
        p.keep_if_small = false;
        let (out, stats) = sparsify_splitting(&s, &p).unwrap();
        assert!(!stats.skipped);
        assert_eq!(stats.distinct_edges, 1);
        assert_eq!(out.a(), s.a());
        for (x, y) in out.d().values().iter().zip(s.d().values()) {
            assert!((x - y).abs() <= 1e-15 * y);
        }
    }

    #[test]
    fn keep_if_small_is_bitwise_identity() {
        let a = graph(3, &[(0, 1, 0.5), (1, 2, 0.25), (1, 1, 0.1)]);
        let s = SddmSplitting::new(DiagMatrix::new(vec![1.0, 1.0, 1.0]).unwrap(), a).unwrap();
        let (out, stats) = sparsify_splitting(&s, &SparsifyParams::new(0.5, 0)).unwrap();
        assert!(stats.skipped);
        assert_eq!(out, s);
    }

    #[test]
    fn laplacian_part_has_zero_row_sums() {
        let edges: Vec<_> = (0..6)
            .flat_map(|i| (i + 1..6).map(move |j| (i, j, 1.0 + (i * j) as f64 / 10.0)))
            .chain([(2, 2, 0.3)])
            .collect();
        let a = graph(6, &edges);
        let d: Vec<f64> = a.row_sums().iter().map(|s| s + 0.5).collect();
        let s = SddmSplitting::new(DiagMatrix::new(d.clone()).unwrap(), a).unwrap();
        let mut p = SparsifyParams::new(0.5, 5);
        p.keep_if_small = false;
        let (out, _) = sparsify_splitting(&s, &p).unwrap();
        assert!(out.a().is_nonnegative());
        out.a().check_symmetric(0.0).unwrap();
        // rows of D̂ - Â sum to the exact excess X = 0.5
        for (v, r) in out.a().row_sums().iter().enumerate() {
            assert!((out.d().values()[v] - r - 0.5).abs() < 1e-12);
        }
        assert_eq!(out.a().get(2, 2), 0.3);
    }
}
