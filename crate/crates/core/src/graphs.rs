//! Reproducible graph generators and random SDDM instances.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::reductions::{GraphLaplacian, SddmSplitting};
use crate::sparse::{DiagMatrix, SymSparseMatrix};

/// Generator description, written as e.g. `grid2d 4x4`, `path 3`,
/// `erdos-renyi 100 0.05 1 10` or `random-regular 64 3`.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphSpec {
    Grid2d { width: usize, height: usize },
    Path { n: usize },
    ErdosRenyi { n: usize, p: f64, w_lo: f64, w_hi: f64 },
    RandomRegular { n: usize, degree: usize },
}

fn invalid(spec: &str, reason: impl Into<String>) -> Error {
    Error::InvalidSpec { spec: spec.to_string(), reason: reason.into() }
}

impl FromStr for GraphSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize| -> Result<usize> {
            t.get(i).and_then(|x| x.parse().ok()).ok_or_else(|| invalid(s, format!("argument {i} must be a count")))
        };
        let real = |i: usize| -> Result<f64> {
            t.get(i).and_then(|x| x.parse().ok()).ok_or_else(|| invalid(s, format!("argument {i} must be a number")))
        };
        let arity = |k: usize| if t.len() == k + 1 { Ok(()) } else { Err(invalid(s, format!("expected {k} arguments"))) };
        let spec = match t.first().copied() {
            Some("grid2d") => {
                arity(1)?;
                let (w, h) = t[1].split_once(['x', 'X']).ok_or_else(|| invalid(s, "expected WxH"))?;
                let width = w.parse().map_err(|_| invalid(s, "bad width"))?;
                let height = h.parse().map_err(|_| invalid(s, "bad height"))?;
                GraphSpec::Grid2d { width, height }
            }
            Some("path") => {
                arity(1)?;
                GraphSpec::Path { n: num(1)? }
            }
            Some("erdos-renyi") => {
                arity(4)?;
                GraphSpec::ErdosRenyi { n: num(1)?, p: real(2)?, w_lo: real(3)?, w_hi: real(4)? }
            }
            Some("random-regular") => {
                arity(2)?;
                GraphSpec::RandomRegular { n: num(1)?, degree: num(2)? }
            }
            _ => return Err(invalid(s, "unknown generator")),
        };
        spec.check()?;
        Ok(spec)
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Grid2d { width, height } => write!(f, "grid2d {width}x{height}"),
            GraphSpec::Path { n } => write!(f, "path {n}"),
            GraphSpec::ErdosRenyi { n, p, w_lo, w_hi } => write!(f, "erdos-renyi {n} {p} {w_lo} {w_hi}"),
            GraphSpec::RandomRegular { n, degree } => write!(f, "random-regular {n} {degree}"),
        }
    }
}

impl GraphSpec {
    pub fn vertices(&self) -> usize {
        match *self {
            GraphSpec::Grid2d { width, height } => width * height,
            GraphSpec::Path { n } | GraphSpec::ErdosRenyi { n, .. } | GraphSpec::RandomRegular { n, .. } => n,
        }
    }

    /// Rejects specs that cannot produce a connected graph with an edge.
    pub fn check(&self) -> Result<()> {
        let s = self.to_string();
        if self.vertices() < 2 {
            return Err(invalid(&s, "needs at least two vertices"));
        }
        match *self {
            GraphSpec::ErdosRenyi { p, w_lo, w_hi, .. } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(invalid(&s, "p must lie in [0, 1]"));
                }
                if !(w_lo > 0.0 && w_hi >= w_lo && w_hi.is_finite()) {
                    return Err(invalid(&s, "weights need 0 < w_lo <= w_hi"));
                }
            }
            GraphSpec::RandomRegular { n, degree } => {
                if degree == 0 || degree >= n || (n * degree) % 2 == 1 {
                    return Err(invalid(&s, "needs 0 < d < n and n·d even"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Builds the graph. Random models are patched into a connected graph
    /// by joining consecutive components with one edge each.
    pub fn generate(&self, seed: u64) -> Result<GraphLaplacian> {
        self.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.vertices();
        let mut edges = match *self {
            GraphSpec::Grid2d { width, height } => grid_edges(width, height),
            GraphSpec::Path { n } => (0..n - 1).map(|i| (i, i + 1, 1.0)).collect(),
            GraphSpec::ErdosRenyi { n, p, w_lo, w_hi } => {
                let mut e = Vec::new();
                for u in 0..n {
                    for v in u + 1..n {
                        if rng.gen::<f64>() < p {
                            e.push((u, v, rng.gen_range(w_lo..=w_hi)));
                        }
                    }
                }
                e
            }
            GraphSpec::RandomRegular { n, degree } => regular_edges(n, degree, &mut rng)?,
        };
        let bridge_weight = match *self {
            GraphSpec::ErdosRenyi { w_lo, .. } => w_lo,
            _ => 1.0,
        };
        connect_components(n, &mut edges, bridge_weight);
        GraphLaplacian::from_edges(n, &edges)
    }
}

fn grid_edges(width: usize, height: usize) -> Vec<(usize, usize, f64)> {
    let id = |x: usize, y: usize| y * width + x;
    let mut e = Vec::with_capacity(2 * width * height);
    for y in 0..height {
        for x in 0..width {
            if x + 1 < width {
                e.push((id(x, y), id(x + 1, y), 1.0));
            }
            if y + 1 < height {
                e.push((id(x, y), id(x, y + 1), 1.0));
            }
        }
    }
    e
}

/// Configuration model with restarts until the pairing is simple.
fn regular_edges(n: usize, degree: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize, f64)>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat(v).take(degree)).collect();
    for _ in 0..1000 {
        stubs.shuffle(rng);
        let mut pairs: Vec<(usize, usize)> =
            stubs.chunks(2).map(|c| (c[0].min(c[1]), c[0].max(c[1]))).collect();
        if pairs.iter().any(|(u, v)| u == v) {
            continue;
        }
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        return Ok(pairs.into_iter().map(|(u, v)| (u, v, 1.0)).collect());
    }
    Err(invalid(&format!("random-regular {n} {degree}"), "no simple pairing found"))
}

fn connect_components(n: usize, edges: &mut Vec<(usize, usize, f64)>, weight: f64) {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(u, v, _) in edges.iter() {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut prev: Option<usize> = None;
    for v in 0..n {
        if find(&mut parent, v) == v {
            if let Some(u) = prev {
                edges.push((u, v, weight));
            }
            prev = Some(v);
        }
    }
}

/// Random SDDM splitting: a sparse random graph with weights in `[0.1, 1]`
/// plus a random positive diagonal excess on every vertex.
pub fn random_sddm(n: usize, density: f64, rng: &mut impl Rng) -> SddmSplitting {
    let mut triples = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < density {
                triples.push((u, v, rng.gen_range(0.1..=1.0)));
            }
        }
    }
    let a = SymSparseMatrix::from_triplets_mirrored(n, &triples).expect("indices in range");
    let d: Vec<f64> = a.row_sums().iter().map(|s| s + rng.gen_range(0.01..=1.0)).collect();
    SddmSplitting::new(DiagMatrix::new(d).expect("finite"), a).expect("dominant by construction")
}

/// Random connected weighted graph: a random spanning tree plus extra
/// edges with probability `p`, weights in `[w_lo, w_hi]`.
pub fn random_connected_graph(n: usize, p: f64, w_lo: f64, w_hi: f64, rng: &mut impl Rng) -> GraphLaplacian {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.gen_range(0..k)];
        edges.push((parent, order[k], rng.gen_range(w_lo..=w_hi)));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v, rng.gen_range(w_lo..=w_hi)));
            }
        }
    }
    GraphLaplacian::from_edges(n, &edges).expect("indices in range")
}
