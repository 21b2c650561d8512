//! Squaring step of the chain: `D - A D⁻¹ A`, computed exactly or as a
//! sparse approximation that samples each per-vertex clique.
//!
//! The output is assembled as `S + L_exact + Σ_u L̂_u`:
//! * `S` is the diagonal row-sum slack `S_v = D_v - Σ_k A_vk r_k / D_k`,
//!   with `r_k` the full row sum of `A`;
//! * `L_exact` carries the off-diagonal terms that involve a self loop,
//!   `A_vw (A_vv / D_vv + A_ww / D_ww)`, and is kept exactly;
//! * `L̂_u` approximates the clique on the neighbors of `u`, whose edge
//!   `(v, w)` has weight `A_vu A_uw / D_uu`.
//!
//! The diagonal of `A D⁻¹ A` is always exact. Cliques are sampled by
//! effective resistance, which for a clique reduces to picking the pair
//! `(v, w)` with probability `(A_uv + A_uw) / (d_u (δ_u - 1))`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reductions::SddmSplitting;
use crate::rng::stream_rng;
use crate::sparse::{DiagMatrix, SymSparseMatrix};

pub const DEFAULT_OVERSAMPLE: f64 = 4.0;
pub const DEFAULT_SAMPLE_CAP: u64 = 50_000_000;
/// Multiply-adds allowed for the cliques kept exactly in one squaring.
pub const DEFAULT_WORK_CAP: u64 = 4_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingMode {
    /// Sample a clique unless it is tiny or sampling would not shrink it.
    Auto,
    /// Keep every clique exactly.
    Exact,
    /// Sample every clique with at least two neighbors.
    Always,
}

#[derive(Clone, Debug)]
pub struct SquareParams {
    pub eps: f64,
    pub seed: u64,
    pub oversample: f64,
    pub sample_cap: u64,
    pub work_cap: u64,
    pub mode: SamplingMode,
}

impl SquareParams {
    pub fn new(eps: f64, seed: u64) -> Self {
        SquareParams {
            eps,
            seed,
            oversample: DEFAULT_OVERSAMPLE,
            sample_cap: DEFAULT_SAMPLE_CAP,
            work_cap: DEFAULT_WORK_CAP,
            mode: SamplingMode::Auto,
        }
    }

    pub fn exact() -> Self {
        SquareParams { mode: SamplingMode::Exact, ..Self::new(0.5, 0) }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SquareStats {
    pub exact_centers: usize,
    pub sampled_centers: usize,
    pub samples: u64,
    pub clique_work: u64,
    pub nnz: usize,
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(eps))
    }
}

/// Samples drawn for a clique with `degree` neighbors:
/// `⌈C_s · δ_u · ln(max(n, 2)) / ε²⌉`.
pub fn sample_count(degree: usize, n: usize, eps: f64, oversample: f64) -> u64 {
    let s = (oversample * degree as f64 * (n.max(2) as f64).ln() / (eps * eps)).ceil();
    if s >= u64::MAX as f64 {
        u64::MAX
    } else {
        s as u64
    }
}

/// `(D, A D⁻¹ A)` by direct accumulation. Reference implementation.
pub fn exact_square(s: &SddmSplitting) -> SddmSplitting {
    let a = s.a();
    let d = s.d().values();
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for k in 0..s.dim() {
        let (cols, vals) = a.row(k);
        for (&i, &aik) in cols.iter().zip(vals) {
            for (&j, &akj) in cols.iter().zip(vals) {
                *acc.entry((i, j)).or_insert(0.0) += aik * akj / d[k];
            }
        }
    }
    let triples: Vec<_> = acc.into_iter().map(|((i, j), v)| (i, j, v)).collect();
    let sq = SymSparseMatrix::from_triplets(s.dim(), &triples).expect("product is symmetric");
    SddmSplitting::new_unchecked(s.d().clone(), sq)
}

/// Sampler for the clique `G_u` on the neighbors of `u` (self loop excluded).
#[derive(Clone, Debug)]
pub struct CliqueSampler {
    center: usize,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    prefix: Vec<f64>,
    total: f64,
    d_center: f64,
    samples: u64,
}

impl CliqueSampler {
    pub fn new(s: &SddmSplitting, center: usize, samples: u64) -> Self {
        let (cols, vals) = s.a().row(center);
        let mut neighbors = Vec::with_capacity(cols.len());
        let mut weights = Vec::with_capacity(cols.len());
        for (&v, &w) in cols.iter().zip(vals) {
            if v != center && w > 0.0 {
                neighbors.push(v);
                weights.push(w);
            }
        }
        let mut prefix = Vec::with_capacity(weights.len());
        let mut total = 0.0;
        for &w in &weights {
            total += w;
            prefix.push(total);
        }
        CliqueSampler {
            center,
            neighbors,
            weights,
            prefix,
            total,
            d_center: s.d().values()[center],
            samples,
        }
    }

    pub fn center(&self) -> usize {
        self.center
    }

    /// `δ_u`
    pub fn degree(&self) -> usize {
        self.neighbors.len()
    }

    /// `d_u = Σ_{v≠u} A_uv`
    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    fn position(&self, v: usize) -> Result<usize> {
        self.neighbors
            .binary_search(&v)
            .map_err(|_| Error::NotANeighbor { center: self.center, vertex: v })
    }

    fn distinct_pair(&self, v: usize, w: usize) -> Result<(usize, usize)> {
        let (i, j) = (self.position(v)?, self.position(w)?);
        if i == j {
            return Err(Error::InvalidSplitting(format!("pair ({v}, {w}) is not distinct")));
        }
        Ok((i, j))
    }

    /// Weight of clique edge `(v, w)`: `A_uv A_uw / D_uu`.
    pub fn edge_weight(&self, v: usize, w: usize) -> Result<f64> {
        let (i, j) = self.distinct_pair(v, w)?;
        Ok(self.weights[i] * self.weights[j] / self.d_center)
    }

    /// Effective resistance between `v` and `w` in the clique:
    /// `(D_uu / d_u) (1 / A_uv + 1 / A_uw)`.
    pub fn resistance(&self, v: usize, w: usize) -> Result<f64> {
        let (i, j) = self.distinct_pair(v, w)?;
        Ok(self.d_center / self.total * (1.0 / self.weights[i] + 1.0 / self.weights[j]))
    }

    /// Probability of drawing the unordered pair `{v, w}`.
    pub fn pair_probability(&self, v: usize, w: usize) -> Result<f64> {
        let (i, j) = self.distinct_pair(v, w)?;
        Ok(self.pair_probability_at(i, j))
    }

    fn pair_probability_at(&self, i: usize, j: usize) -> f64 {
        let delta = self.neighbors.len() as f64;
        (self.weights[i] + self.weights[j]) / (self.total * (delta - 1.0))
    }

    /// Draws one clique edge and its weight rescaled by `1 / (s_u p_vw)`.
    ///
    /// The first endpoint is chosen with probability `A_uv / d_u` through
    /// the prefix table, the second uniformly among the remaining neighbors;
    /// the unordered pair then has probability `(A_uv + A_uw) / (d_u (δ_u - 1))`.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<(usize, usize, f64)> {
        let delta = self.neighbors.len();
        if delta < 2 {
            return Err(Error::CliqueTooSmall { center: self.center, degree: delta });
        }
        let r = rng.gen::<f64>() * self.total;
        let i = self.prefix.partition_point(|&p| p <= r).min(delta - 1);
        let mut j = rng.gen_range(0..delta - 1);
        if j >= i {
            j += 1;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let p = self.pair_probability_at(i, j);
        let w = self.weights[i] * self.weights[j] / self.d_center;
        Ok((self.neighbors[i], self.neighbors[j], w / (self.samples as f64 * p)))
    }

    fn sample_all(&self, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, f64)> {
        (0..self.samples)
            .map(|_| self.sample(rng).expect("sampled cliques have two neighbors"))
            .collect()
    }
}

/// Dense scatter accumulator reused across rows by one worker.
struct RowAccumulator {
    values: Vec<f64>,
    touched: Vec<usize>,
    marked: Vec<bool>,
}

impl RowAccumulator {
    fn new(n: usize) -> Self {
        RowAccumulator { values: vec![0.0; n], touched: Vec::new(), marked: vec![false; n] }
    }

    #[inline]
    fn add(&mut self, j: usize, x: f64) {
        if !self.marked[j] {
            self.marked[j] = true;
            self.touched.push(j);
        }
        self.values[j] += x;
    }

    /// Drains the row into sorted `(col, value)` pairs, skipping `skip` and zeros.
    fn drain(&mut self, skip: usize) -> Vec<(usize, f64)> {
        let n = self.values.len();
        let mut out = Vec::with_capacity(self.touched.len() + 1);
        if self.touched.len() * 8 > n {
            for j in 0..n {
                if self.marked[j] {
                    if j != skip && self.values[j] != 0.0 {
                        out.push((j, self.values[j]));
                    }
                    self.values[j] = 0.0;
                    self.marked[j] = false;
                }
            }
        } else {
            self.touched.sort_unstable();
            for &j in &self.touched {
                if j != skip && self.values[j] != 0.0 {
                    out.push((j, self.values[j]));
                }
                self.values[j] = 0.0;
                self.marked[j] = false;
            }
        }
        self.touched.clear();
        out
    }
}

/// Sparse approximation `(D̂, Â)` of `(D, A D⁻¹ A)`.
///
/// With high probability `D̂ - Â ≈_ε D - A D⁻¹ A` and `D̂ ≈_ε D`. When no
/// clique is sampled the result is exact and `D̂ = D`.
pub fn sparse_square(s: &SddmSplitting, params: &SquareParams) -> Result<(SddmSplitting, SquareStats)> {
    check_eps(params.eps)?;
    let n = s.dim();
    let a = s.a();
    let d = s.d().values();
    let inv_d: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
    let self_loops = a.diagonal();
    let off = a.off_diagonal();
    let mut stats = SquareStats::default();

    if a.nnz() == 0 {
        return Ok((s.clone(), stats));
    }

    // row-sum slack S_v = D_v - Σ_k A_vk r_k / D_k
    let full_sums = a.row_sums();
    let mut slack = Vec::with_capacity(n);
    for v in 0..n {
        let (cols, vals) = a.row(v);
        let t: f64 = cols.iter().zip(vals).map(|(&k, &x)| x * full_sums[k] * inv_d[k]).sum();
        let sv = d[v] - t;
        if sv < -1e-9 * d[v] {
            return Err(Error::InvalidSplitting(format!("row {v} has negative slack {sv}")));
        }
        slack.push(sv.max(0.0));
    }

    let mut kept = vec![false; n];
    let mut samplers = Vec::new();
    for u in 0..n {
        let delta = off.row_nnz(u);
        if delta < 2 {
            continue;
        }
        let pairs = (delta as u64) * (delta as u64 - 1) / 2;
        let su = sample_count(delta, n, params.eps, params.oversample);
        let sampled = match params.mode {
            SamplingMode::Exact => false,
            SamplingMode::Always => true,
            SamplingMode::Auto => delta > 3 && su < pairs,
        };
        if sampled {
            stats.sampled_centers += 1;
            stats.samples = stats.samples.saturating_add(su);
            samplers.push(CliqueSampler::new(s, u, su));
        } else {
            stats.exact_centers += 1;
            stats.clique_work = stats.clique_work.saturating_add((delta as u64) * (delta as u64));
            kept[u] = true;
        }
    }
    if stats.samples > params.sample_cap {
        return Err(Error::SampleBudgetExceeded { requested: stats.samples, cap: params.sample_cap });
    }
    if stats.clique_work > params.work_cap {
        return Err(Error::WorkBudgetExceeded { work: stats.clique_work, cap: params.work_cap });
    }

    let drawn: Vec<Vec<(usize, usize, f64)>> = samplers
        .par_iter()
        .map(|c| c.sample_all(&mut stream_rng(params.seed, c.center() as u64)))
        .collect();
    let mut sampled_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (v, w, x) in drawn.into_iter().flatten() {
        sampled_rows[v].push((w, x));
        sampled_rows[w].push((v, x));
    }

    // Each entry (v, w) receives its terms in the same order as (w, v), so
    // the assembled matrix is exactly symmetric.
    let rows: Vec<(Vec<(usize, f64)>, f64)> = (0..n)
        .into_par_iter()
        .map_init(
            || RowAccumulator::new(n),
            |acc, v| {
                let (nbrs, wts) = off.row(v);
                for (&u, &avu) in nbrs.iter().zip(wts) {
                    if kept[u] {
                        let (cols, vals) = off.row(u);
                        let scale = inv_d[u];
                        for (&w, &auw) in cols.iter().zip(vals) {
                            acc.add(w, avu * auw * scale);
                        }
                    }
                }
                for (&w, &avw) in nbrs.iter().zip(wts) {
                    let loops = self_loops[v] * inv_d[v] + self_loops[w] * inv_d[w];
                    if loops != 0.0 {
                        acc.add(w, avw * loops);
                    }
                }
                for &(w, x) in &sampled_rows[v] {
                    acc.add(w, x);
                }
                let mut row = acc.drain(v);
                let (cols, vals) = a.row(v);
                let diag: f64 = cols.iter().zip(vals).map(|(&u, &x)| x * x * inv_d[u]).sum();
                let offsum: f64 = row.iter().map(|&(_, x)| x).sum();
                if diag != 0.0 {
                    let at = row.partition_point(|&(j, _)| j < v);
                    row.insert(at, (v, diag));
                }
                (row, slack[v] + offsum + diag)
            },
        )
        .collect();

    let (rows, d_hat): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let a_hat = SymSparseMatrix::from_sorted_rows(n, rows);
    stats.nnz = a_hat.nnz();
    let d_out = if stats.sampled_centers == 0 { s.d().clone() } else { DiagMatrix::new(d_hat)? };
    Ok((SddmSplitting::new_unchecked(d_out, a_hat), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify;

    fn split(d: &[f64], triples: &[(usize, usize, f64)]) -> SddmSplitting {
        let a = SymSparseMatrix::from_triplets_mirrored(d.len(), triples).unwrap();
        SddmSplitting::new(DiagMatrix::new(d.to_vec()).unwrap(), a).unwrap()
    }

    fn star(leaves: &[f64], d_center: f64) -> SddmSplitting {
        let n = leaves.len() + 1;
        let mut d = vec![d_center];
        d.extend(leaves.iter().map(|w| w + 1.0));
        let triples: Vec<_> = leaves.iter().enumerate().map(|(i, &w)| (0, i + 1, w)).collect();
        assert_eq!(d.len(), n);
        split(&d, &triples)
    }

    #[test]
    fn exact_square_examples() {
        let s = split(&[2.0, 2.0], &[(0, 1, 1.0)]);
        let sq = exact_square(&s);
        assert_eq!(sq.d().values(), &[2.0, 2.0]);
        assert_eq!(sq.a().triplets().collect::<Vec<_>>(), vec![(0, 0, 0.5), (1, 1, 0.5)]);
        let m = verify::dense_splitting(&sq);
        assert_eq!((m.read(0, 0), m.read(1, 1), m.read(0, 1)), (1.5, 1.5, 0.0));

        let zero = split(&[1.0, 3.0], &[]);
        assert_eq!(exact_square(&zero), zero);

        let path = split(&[2.0, 1.0], &[(0, 1, 1.0)]);
        let sq = exact_square(&path);
        assert_eq!(sq.a().triplets().collect::<Vec<_>>(), vec![(0, 0, 1.0), (1, 1, 0.5)]);
    }

    #[test]
    fn sparse_square_exact_mode_matches_oracle_bitwise() {
        let path = split(&[2.0, 1.0], &[(0, 1, 1.0)]);
        let (sq, stats) = sparse_square(&path, &SquareParams::exact()).unwrap();
        assert_eq!(sq, exact_square(&path));
        assert_eq!(stats.samples, 0);
    }

    #[test]
    fn sparse_square_zero_matrix_is_identity() {
        let zero = split(&[1.0, 3.0, 2.0], &[]);
        let (sq, stats) = sparse_square(&zero, &SquareParams::new(0.3, 1)).unwrap();
        assert_eq!(sq, zero);
        assert_eq!(stats.samples, 0);
    }

    #[test]
    fn sparse_square_rejects_bad_eps() {
        let s = split(&[2.0, 2.0], &[(0, 1, 1.0)]);
        for eps in [0.0, -0.1, 0.6] {
            assert!(matches!(
                sparse_square(&s, &SquareParams::new(eps, 0)),
                Err(Error::InvalidEpsilon(_))
            ));
        }
    }

    #[test]
    fn sample_budget_cap() {
        let s = star(&[1.0; 10], 11.0);
        let mut p = SquareParams::new(0.5, 0);
        p.mode = SamplingMode::Always;
        p.sample_cap = 10;
        assert!(matches!(sparse_square(&s, &p), Err(Error::SampleBudgetExceeded { .. })));
    }

    #[test]
    fn resistance_examples() {
        let s = star(&[1.0, 1.0], 2.0);
        let c = CliqueSampler::new(&s, 0, 1);
        assert_eq!(c.resistance(1, 2).unwrap(), 2.0);

        let s = star(&[2.0, 1.0], 3.0);
        let c = CliqueSampler::new(&s, 0, 1);
        assert_eq!(c.resistance(1, 2).unwrap(), 1.5);

        let s = star(&[1.0, 1.0, 1.0], 3.0);
        let c = CliqueSampler::new(&s, 0, 1);
        for (v, w) in [(1, 2), (1, 3), (2, 3)] {
            assert!((c.resistance(v, w).unwrap() - 2.0).abs() < 1e-15);
        }
        assert!(matches!(c.resistance(1, 9), Err(Error::NotANeighbor { .. })));
    }

    #[test]
    fn pair_distribution_example() {
        let s = star(&[1.0, 1.0, 2.0], 5.0);
        let c = CliqueSampler::new(&s, 0, 1);
        assert_eq!(c.total_weight(), 4.0);
        assert_eq!(c.pair_probability(1, 2).unwrap(), 0.25);
        assert_eq!(c.pair_probability(1, 3).unwrap(), 0.375);
        assert_eq!(c.pair_probability(2, 3).unwrap(), 0.375);
    }

    #[test]
    fn two_neighbor_clique_always_returns_the_pair() {
        let s = star(&[0.7, 1.3], 3.0);
        let c = CliqueSampler::new(&s, 0, 5);
        let mut rng = stream_rng(9, 0);
        for _ in 0..50 {
            let (v, w, x) = c.sample(&mut rng).unwrap();
            assert_eq!((v, w), (1, 2));
            assert!((x - 0.7 * 1.3 / 3.0 / 5.0).abs() < 1e-15);
        }
        let lonely = CliqueSampler::new(&star(&[1.0], 2.0), 0, 1);
        assert!(matches!(lonely.sample(&mut rng), Err(Error::CliqueTooSmall { .. })));
    }

    #[test]
    fn empirical_pair_frequencies() {
        let s = star(&[1.0, 1.0, 2.0], 5.0);
        let c = CliqueSampler::new(&s, 0, 1);
        let mut rng = stream_rng(3, 0);
        let mut counts = BTreeMap::new();
        let trials = 200_000;
        for _ in 0..trials {
            let (v, w, _) = c.sample(&mut rng).unwrap();
            *counts.entry((v, w)).or_insert(0usize) += 1;
        }
        for ((v, w), k) in counts {
            let p = c.pair_probability(v, w).unwrap();
            assert!((k as f64 / trials as f64 - p).abs() < 0.005, "{v},{w}");
        }
    }

    #[test]
    fn row_sums_equal_slack() {
        let s = split(
            &[4.0, 5.0, 4.0, 6.0],
            &[(0, 1, 1.0), (0, 2, 2.0), (1, 2, 1.0), (1, 3, 2.0), (2, 3, 0.5), (1, 1, 0.5), (3, 3, 1.0)],
        );
        let mut p = SquareParams::new(0.5, 11);
        p.mode = SamplingMode::Always;
        let (sq, stats) = sparse_square(&s, &p).unwrap();
        assert!(stats.sampled_centers > 0);
        let exact = exact_square(&s);
        let exact_rows = verify::dense_splitting(&exact);
        let approx_rows = verify::dense_splitting(&sq);
        for i in 0..4 {
            let r_exact: f64 = (0..4).map(|j| exact_rows.read(i, j)).sum();
            let r_hat: f64 = (0..4).map(|j| approx_rows.read(i, j)).sum();
            assert!(r_exact >= -1e-12);
            assert!((r_exact - r_hat).abs() < 1e-12, "row {i}: {r_exact} vs {r_hat}");
        }
        assert!(sq.a().is_nonnegative());
        sq.a().check_symmetric(0.0).unwrap();
    }
}
