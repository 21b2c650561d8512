//! SDDM splittings, graph Laplacians, and the grounding reduction between
//! them, plus condition-number bounds for picking chain depth.

use crate::error::{Error, Result};
use crate::solver::{self, SolveOptions, SolveReport};
use crate::sparse::{check_dim, DiagMatrix, SymSparseMatrix};
use crate::verify;

/// Relative slack allowed in the row-dominance check `D_ii >= sum_j A_ij`.
const DOMINANCE_RTOL: f64 = 1e-9;

/// Tolerance on `|1ᵀb| <= tol * ‖b‖₁` for Laplacian right-hand sides.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// `M = D - A` with `D` positive diagonal and `A` symmetric nonnegative.
/// `A` may carry diagonal entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SddmSplitting {
    d: DiagMatrix,
    a: SymSparseMatrix,
}

impl SddmSplitting {
    pub fn new(d: DiagMatrix, a: SymSparseMatrix) -> Result<Self> {
        check_dim(d.dim(), a.dim())?;
        d.require_positive()?;
        if !a.is_nonnegative() {
            return Err(Error::InvalidSplitting("A has a negative entry".into()));
        }
        for (i, (s, &dii)) in a.row_sums().iter().zip(d.values()).enumerate() {
            if *s > dii * (1.0 + DOMINANCE_RTOL) {
                return Err(Error::InvalidSplitting(format!(
                    "row {i} is not dominated: sum A = {s}, D = {dii}"
                )));
            }
        }
        Ok(SddmSplitting { d, a })
    }

    pub(crate) fn new_unchecked(d: DiagMatrix, a: SymSparseMatrix) -> Self {
        debug_assert_eq!(d.dim(), a.dim());
        SddmSplitting { d, a }
    }

    /// Splits an SDDM matrix as `D = diag(M)`, `A = -offdiag(M)`.
    pub fn from_matrix(m: &SymSparseMatrix) -> Result<Self> {
        let d = DiagMatrix::new(m.diagonal())?;
        let mut triples = Vec::with_capacity(m.nnz());
        for (i, j, v) in m.triplets() {
            if i != j {
                if v > 0.0 {
                    return Err(Error::InvalidSplitting(format!(
                        "positive off-diagonal entry at ({i}, {j})"
                    )));
                }
                triples.push((i, j, -v));
            }
        }
        Self::new(d, SymSparseMatrix::from_triplets(m.dim(), &triples)?)
    }

    pub fn dim(&self) -> usize {
        self.d.dim()
    }

    pub fn d(&self) -> &DiagMatrix {
        &self.d
    }

    pub fn a(&self) -> &SymSparseMatrix {
        &self.a
    }

    pub fn into_parts(self) -> (DiagMatrix, SymSparseMatrix) {
        (self.d, self.a)
    }

    /// `(D - A) x`
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.a.matvec(x)?;
        for ((o, d), xi) in out.iter_mut().zip(self.d.values()).zip(x) {
            *o = d * xi - *o;
        }
        Ok(out)
    }

    /// The realized matrix `D - A`.
    pub fn to_matrix(&self) -> SymSparseMatrix {
        let mut triples: Vec<_> = self.a.triplets().map(|(i, j, v)| (i, j, -v)).collect();
        triples.extend(self.d.values().iter().enumerate().map(|(i, &v)| (i, i, v)));
        SymSparseMatrix::from_triplets(self.dim(), &triples).expect("splitting is symmetric")
    }
}

/// Weighted undirected graph, stored as its adjacency matrix; the Laplacian
/// diagonal is implicit.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphLaplacian {
    adjacency: SymSparseMatrix,
    components: usize,
}

impl GraphLaplacian {
    /// Edges are `(u, v, w)` with `u != v` and `w > 0`; repeated edges add.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        for &(u, v, w) in edges {
            if u == v {
                return Err(Error::InvalidSplitting(format!("self loop at vertex {u}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidSplitting(format!("edge ({u}, {v}) has weight {w}")));
            }
        }
        Self::from_adjacency(SymSparseMatrix::from_triplets_mirrored(n, edges)?)
    }

    pub fn from_adjacency(adjacency: SymSparseMatrix) -> Result<Self> {
        for (i, j, w) in adjacency.triplets() {
            if i == j || w <= 0.0 {
                return Err(Error::InvalidSplitting(format!(
                    "adjacency entry ({i}, {j}) = {w} is not a positive off-diagonal weight"
                )));
            }
        }
        let components = count_components(&adjacency);
        Ok(GraphLaplacian { adjacency, components })
    }

    /// Reads a Laplacian matrix: nonpositive off-diagonals and zero row sums.
    pub fn from_laplacian_matrix(l: &SymSparseMatrix) -> Result<Self> {
        let mut edges = Vec::new();
        let mut scale = vec![0.0f64; l.dim()];
        for (i, j, v) in l.triplets() {
            scale[i] = scale[i].max(v.abs());
            if i != j {
                if v > 0.0 {
                    return Err(Error::InvalidSplitting(format!(
                        "positive off-diagonal entry at ({i}, {j})"
                    )));
                }
                if i < j {
                    edges.push((i, j, -v));
                }
            }
        }
        for (i, s) in l.row_sums().iter().enumerate() {
            if s.abs() > 1e-10 * scale[i].max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidSplitting(format!("row {i} has nonzero sum {s}")));
            }
        }
        Self::from_edges(l.dim(), &edges)
    }

    pub fn dim(&self) -> usize {
        self.adjacency.dim()
    }

    pub fn adjacency(&self) -> &SymSparseMatrix {
        &self.adjacency
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_connected(&self) -> bool {
        self.components == 1
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Edges with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.triplets().filter(|&(u, v, _)| u < v)
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.row_sums()
    }

    pub fn to_matrix(&self) -> SymSparseMatrix {
        let mut triples: Vec<_> = self.adjacency.triplets().map(|(i, j, w)| (i, j, -w)).collect();
        triples.extend(self.degrees().into_iter().enumerate().map(|(i, d)| (i, i, d)));
        SymSparseMatrix::from_triplets(self.dim(), &triples).expect("laplacian is symmetric")
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.adjacency.matvec(x)?;
        for ((o, d), xi) in out.iter_mut().zip(self.degrees()).zip(x) {
            *o = d * xi - *o;
        }
        Ok(out)
    }

    /// Vertex of maximum weighted degree, lowest index on ties.
    pub fn default_ground_index(&self) -> usize {
        let deg = self.degrees();
        let mut best = 0;
        for (i, &d) in deg.iter().enumerate() {
            if d > deg[best] {
                best = i;
            }
        }
        best
    }
}

fn count_components(adj: &SymSparseMatrix) -> usize {
    let n = adj.dim();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &v in adj.row(u).0 {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}

/// Principal submatrix of the Laplacian with `removed` deleted, as `(D, A)`.
pub fn ground(l: &GraphLaplacian, removed: usize) -> Result<SddmSplitting> {
    let n = l.dim();
    if n < 2 {
        return Err(Error::InvalidSplitting("grounding needs at least two vertices".into()));
    }
    if removed >= n {
        return Err(Error::IndexOutOfRange { row: removed, col: removed, dim: n });
    }
    if !l.is_connected() {
        return Err(Error::Disconnected { components: l.components() });
    }
    let shift = |i: usize| if i > removed { i - 1 } else { i };
    let deg = l.degrees();
    let d: Vec<f64> = (0..n).filter(|&i| i != removed).map(|i| deg[i]).collect();
    let triples: Vec<_> = l
        .adjacency()
        .triplets()
        .filter(|&(i, j, _)| i != removed && j != removed)
        .map(|(i, j, w)| (shift(i), shift(j), w))
        .collect();
    let a = SymSparseMatrix::from_triplets(n - 1, &triples)?;
    SddmSplitting::new(DiagMatrix::new(d)?, a)
}

/// Solves `L x = b` for `b ⊥ 1` by grounding at the maximum-degree vertex,
/// solving the SDDM system, re-inserting zero and removing the mean.
pub fn solve_laplacian(
    l: &GraphLaplacian,
    b: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    solve_laplacian_grounded_at(l, b, l.default_ground_index(), opts)
}

pub fn solve_laplacian_grounded_at(
    l: &GraphLaplacian,
    b: &[f64],
    removed: usize,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = l.dim();
    check_dim(n, b.len())?;
    if !l.is_connected() {
        return Err(Error::Disconnected { components: l.components() });
    }
    let sum: f64 = b.iter().sum();
    let l1: f64 = b.iter().map(|x| x.abs()).sum();
    let tolerance = ORTHOGONALITY_TOL * l1;
    if sum.abs() > tolerance {
        return Err(Error::NotOrthogonal { sum, tolerance });
    }
    if l1 == 0.0 {
        return Ok((vec![0.0; n], SolveReport::trivial()));
    }
    let m = ground(l, removed)?;
    let reduced: Vec<f64> = (0..n).filter(|&i| i != removed).map(|i| b[i]).collect();
    let (y, report) = solver::solve_sddm(&m, &reduced, opts)?;
    let mut x = Vec::with_capacity(n);
    x.extend_from_slice(&y[..removed]);
    x.push(0.0);
    x.extend_from_slice(&y[removed..]);
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    Ok((x, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KappaMode {
    /// `n⁴ · w_max / w_min` over the nonzero magnitudes of `D - A`, with `n`
    /// the vertex count of the Laplacian the splitting was grounded from
    /// (`dim + 1`). The constant is heuristic.
    Formula,
    /// Exact `λ_max / λ_min` by dense eigensolve.
    Dense,
}

pub fn kappa_upper_bound(s: &SddmSplitting, mode: KappaMode) -> Result<f64> {
    match mode {
        KappaMode::Formula => {
            let m = s.to_matrix();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for &v in m.values() {
                let a = v.abs();
                if a > 0.0 {
                    lo = lo.min(a);
                    hi = hi.max(a);
                }
            }
            if hi == 0.0 {
                return Ok(1.0);
            }
            let n = (s.dim() + 1) as f64;
            Ok((n.powi(4) * hi / lo).max(1.0))
        }
        KappaMode::Dense => {
            verify::check_dense_limit(s.dim(), verify::DENSE_LIMIT)?;
            let ev = verify::sym_eigenvalues(verify::dense_splitting(s).as_ref());
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            if !(lo > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            Ok(hi / lo)
        }
    }
}

/// Dense smallest eigenvalue of the grounded matrix against `λ₂(L) / n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigBoundCheck {
    pub lambda1_grounded: f64,
    pub lambda2_over_n: f64,
    pub holds: bool,
}

pub fn submatrix_eig_bound_check(l: &GraphLaplacian, removed: usize) -> Result<EigBoundCheck> {
    let n = l.dim();
    verify::check_dense_limit(n, verify::DENSE_LIMIT)?;
    let m = ground(l, removed)?;
    let lambda1_grounded = verify::sym_eigenvalues(verify::dense_splitting(&m).as_ref())[0];
    let lambda2 = verify::sym_eigenvalues(verify::to_dense(&l.to_matrix()).as_ref())[1];
    let lambda2_over_n = lambda2 / n as f64;
    Ok(EigBoundCheck {
        lambda1_grounded,
        lambda2_over_n,
        holds: lambda1_grounded >= lambda2_over_n - verify::EIG_SLACK,
    })
}

/// `λ_max(L) / λ₂(L)` for a connected graph, by dense eigensolve.
pub fn finite_condition_number(l: &GraphLaplacian) -> Result<f64> {
    if !l.is_connected() {
        return Err(Error::Disconnected { components: l.components() });
    }
    verify::check_dense_limit(l.dim(), verify::DENSE_LIMIT)?;
    let ev = verify::sym_eigenvalues(verify::to_dense(&l.to_matrix()).as_ref());
    Ok(ev[ev.len() - 1] / ev[1])
}
