//! Text formats: Matrix Market (symmetric coordinate), plain vectors,
//! `u v w` edge lists and `key=value` manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write followed by a read reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::{Fnv1a, SymSparseMatrix};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Lower triangle, 1-indexed, `symmetric` kind.
pub fn format_matrix_market(a: &SymSparseMatrix, comments: &[&str]) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
    for c in comments {
        let _ = writeln!(s, "% {c}");
    }
    let lower: Vec<_> = a.triplets().filter(|&(i, j, _)| i >= j).collect();
    let _ = writeln!(s, "{} {} {}", a.dim(), a.dim(), lower.len());
    for (i, j, v) in lower {
        let _ = writeln!(s, "{} {} {}", i + 1, j + 1, v);
    }
    s
}

pub fn parse_matrix_market(text: &str) -> Result<SymSparseMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(parse_err(1, "expected a `%%MatrixMarket matrix coordinate` header"));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(parse_err(1, format!("unsupported field `{}`", fields[3])));
    }
    let symmetric = match fields[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(parse_err(1, format!("unsupported symmetry `{other}`"))),
    };
    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_no, size) = body.next().ok_or_else(|| parse_err(0, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(size_no + 1, "bad size line")))
        .collect::<Result<_>>()?;
    if dims.len() != 3 || dims[0] != dims[1] {
        return Err(parse_err(size_no + 1, "expected `n n nnz` for a square matrix"));
    }
    let (n, nnz) = (dims[0], dims[2]);
    let mut triples = Vec::with_capacity(2 * nnz);
    let mut entries = 0;
    for (no, line) in body {
        entries += 1;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 3 {
            return Err(parse_err(no + 1, "expected `row col value`"));
        }
        let i: usize = t[0].parse().map_err(|_| parse_err(no + 1, "bad row index"))?;
        let j: usize = t[1].parse().map_err(|_| parse_err(no + 1, "bad column index"))?;
        let v: f64 = t[2].parse().map_err(|_| parse_err(no + 1, "bad value"))?;
        if i == 0 || j == 0 || i > n || j > n {
            return Err(Error::IndexOutOfRange { row: i, col: j, dim: n });
        }
        if symmetric && i < j {
            return Err(parse_err(no + 1, "symmetric files store the lower triangle"));
        }
        triples.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triples.push((j - 1, i - 1, v));
        }
    }
    if entries != nnz {
        return Err(parse_err(0, format!("declared {nnz} entries, found {entries}")));
    }
    SymSparseMatrix::from_triplets(n, &triples)
}

pub fn write_matrix_market(path: &Path, a: &SymSparseMatrix, comments: &[&str]) -> Result<()> {
    fs::write(path, format_matrix_market(a, comments))?;
    Ok(())
}

pub fn read_matrix_market(path: &Path) -> Result<SymSparseMatrix> {
    parse_matrix_market(&fs::read_to_string(path)?)
}

pub fn format_vector(v: &[f64]) -> String {
    let mut s = String::with_capacity(v.len() * 20);
    for x in v {
        let _ = writeln!(s, "{x}");
    }
    s
}

/// Whitespace-separated decimals; lines starting with `#` or `%` are
/// comments.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        for tok in t.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| parse_err(no + 1, format!("bad number `{tok}`")))?;
            if !v.is_finite() {
                return Err(parse_err(no + 1, "non-finite entry"));
            }
            out.push(v);
        }
    }
    Ok(out)
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    fs::write(path, format_vector(v))?;
    Ok(())
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&fs::read_to_string(path)?)
}

/// Zero-indexed `u v w` lines. The vertex count is one past the largest
/// index unless `min_vertices` is larger.
pub fn parse_edge_list(text: &str, min_vertices: usize) -> Result<(usize, Vec<(usize, usize, f64)>)> {
    let mut edges = Vec::new();
    let mut n = min_vertices;
    for (no, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(no + 1, "expected `u v w`"));
        }
        let u: usize = f[0].parse().map_err(|_| parse_err(no + 1, "bad vertex"))?;
        let v: usize = f[1].parse().map_err(|_| parse_err(no + 1, "bad vertex"))?;
        let w: f64 = f[2].parse().map_err(|_| parse_err(no + 1, "bad weight"))?;
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v, w));
    }
    Ok((n, edges))
}

pub fn format_edge_list(edges: impl IntoIterator<Item = (usize, usize, f64)>) -> String {
    let mut s = String::new();
    for (u, v, w) in edges {
        let _ = writeln!(s, "{u} {v} {w}");
    }
    s
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t.split_once('=').ok_or_else(|| parse_err(no + 1, "expected `key=value`"))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Stable 64-bit hash of a run description, embedded in reports.
pub fn config_hash(description: &str) -> u64 {
    let mut h = Fnv1a::new();
    h.write_str(description);
    h.finish()
}
