//! Dense spectral oracles: the `≈_ε` relation, generalized eigenvalue
//! extremes, and numerical exercises of the standard approximation algebra.
//!
//! Everything here is `O(n³)` and refuses dimensions above [`DENSE_LIMIT`].

use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::solvers::SolverCore;
use faer::{Mat, MatRef, Parallelism, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::reductions::SddmSplitting;
use crate::sparse::SymSparseMatrix;

pub const DENSE_LIMIT: usize = 4096;

/// Absolute slack on log-scale and eigenvalue comparisons.
pub const EIG_SLACK: f64 = 1e-9;

/// Relative eigenvalue cutoff separating a PSD matrix's range from its
/// nullspace.
const NULLSPACE_RTOL: f64 = 1e-10;

pub fn check_dense_limit(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        Err(Error::DenseLimitExceeded { n, limit })
    } else {
        Ok(())
    }
}

pub fn to_dense(a: &SymSparseMatrix) -> Mat<f64> {
    let mut m = Mat::zeros(a.dim(), a.dim());
    for (i, j, v) in a.triplets() {
        m.write(i, j, v);
    }
    m
}

pub fn diag_dense(d: &[f64]) -> Mat<f64> {
    Mat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { 0.0 })
}

/// `D - A` as a dense matrix.
pub fn dense_splitting(s: &SddmSplitting) -> Mat<f64> {
    let mut m = to_dense(s.a());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m.write(i, j, -m.read(i, j));
        }
    }
    for (i, &d) in s.d().values().iter().enumerate() {
        m.write(i, i, m.read(i, i) + d);
    }
    m
}

/// Ascending eigenvalues of a symmetric matrix (lower triangle is read).
pub fn sym_eigenvalues(m: MatRef<'_, f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev = m.selfadjoint_eigenvalues(Side::Lower);
    ev.sort_by(f64::total_cmp);
    ev
}

/// Ascending eigenvalues of `D⁻¹A`, computed through the similar symmetric
/// matrix `D^{-1/2} A D^{-1/2}`.
pub fn walk_eigenvalues(d: &[f64], a: MatRef<'_, f64>) -> Vec<f64> {
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let n = d.len();
    let b = Mat::from_fn(n, n, |i, j| s[i] * a.read(i, j) * s[j]);
    sym_eigenvalues(b.as_ref())
}

pub fn splitting_walk_eigenvalues(s: &SddmSplitting) -> Vec<f64> {
    walk_eigenvalues(s.d().values(), to_dense(s.a()).as_ref())
}

fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m.read(i, j) + m.read(j, i));
            m.write(i, j, v);
            m.write(j, i, v);
        }
    }
}

/// Lower Cholesky factor, or `NotPositiveDefinite`.
pub fn cholesky_lower(x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    x.cholesky(Side::Lower)
        .map(|c| c.compute_l())
        .map_err(|_| Error::NotPositiveDefinite)
}

/// `L⁻¹ Y L⁻ᵀ` for symmetric `Y`.
fn congruence_by_inverse(l: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Mat<f64> {
    let mut w = y.to_owned();
    solve_lower_triangular_in_place(l, w.as_mut(), Parallelism::None);
    let mut c = w.transpose().to_owned();
    solve_lower_triangular_in_place(l, c.as_mut(), Parallelism::None);
    symmetrize(&mut c);
    c
}

/// Ascending generalized eigenvalues of the pencil `(Y, X)`, `X ≻ 0`.
pub fn generalized_eigenvalues(x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_dense_limit(x.nrows(), DENSE_LIMIT)?;
    let l = cholesky_lower(x)?;
    Ok(sym_eigenvalues(congruence_by_inverse(l.as_ref(), y).as_ref()))
}

/// Ascending eigenvalues of `Z M` for symmetric `Z` and `M ≻ 0`, via the
/// similar matrix `Lᵀ Z L` where `M = L Lᵀ`.
pub fn preconditioned_spectrum(z: MatRef<'_, f64>, m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_dense_limit(m.nrows(), DENSE_LIMIT)?;
    let l = cholesky_lower(m)?;
    let mut c = l.transpose() * z * l.as_ref();
    symmetrize(&mut c);
    Ok(sym_eigenvalues(c.as_ref()))
}

/// Certificate for `exp(ε) X ≽ Y ≽ exp(-ε) X`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralCert {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Smallest `ε` for which the relation holds.
    pub tightest_eps: f64,
    pub requested_eps: f64,
    pub pass: bool,
}

impl SpectralCert {
    fn from_extremes(lambda_min: f64, lambda_max: f64, requested_eps: f64) -> Self {
        let tightest_eps = if lambda_min > 0.0 {
            lambda_min.ln().abs().max(lambda_max.ln().abs())
        } else {
            f64::INFINITY
        };
        SpectralCert {
            lambda_min,
            lambda_max,
            tightest_eps,
            requested_eps,
            pass: tightest_eps <= requested_eps + EIG_SLACK,
        }
    }
}

/// Checks `X ≈_ε Y` for `X ≻ 0` and symmetric `Y`.
pub fn approx_check(x: MatRef<'_, f64>, y: MatRef<'_, f64>, eps: f64) -> Result<SpectralCert> {
    let ev = generalized_eigenvalues(x, y)?;
    if ev.is_empty() {
        return Ok(SpectralCert::from_extremes(1.0, 1.0, eps));
    }
    Ok(SpectralCert::from_extremes(ev[0], ev[ev.len() - 1], eps))
}

/// Checks `X ≈_ε Y` for positive semidefinite `X` by restricting both to the
/// range of `X`, after confirming that `Y` vanishes on the nullspace of `X`.
pub fn approx_check_semidefinite(
    x: MatRef<'_, f64>,
    y: MatRef<'_, f64>,
    eps: f64,
) -> Result<SpectralCert> {
    let n = x.nrows();
    check_dense_limit(n, DENSE_LIMIT)?;
    let eig = x.selfadjoint_eigendecomposition(Side::Lower);
    let s = eig.s().column_vector();
    let u = eig.u();
    let top = (0..n).map(|i| s.read(i).abs()).fold(0.0, f64::max);
    let range: Vec<usize> = (0..n).filter(|&i| s.read(i) > NULLSPACE_RTOL * top).collect();
    let null: Vec<usize> = (0..n).filter(|i| !range.contains(i)).collect();

    let y_scale = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| y.read(i, j).abs())
        .fold(0.0, f64::max);
    if !null.is_empty() {
        let nb = Mat::from_fn(n, null.len(), |i, k| u.read(i, null[k]));
        let yn = y * nb.as_ref();
        let resid = (0..yn.nrows())
            .flat_map(|i| (0..yn.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| yn.read(i, j).abs())
            .fold(0.0, f64::max);
        if resid > 1e-8 * y_scale.max(top) {
            return Err(Error::NullspaceMismatch(resid));
        }
    }
    if range.is_empty() {
        return Ok(SpectralCert::from_extremes(1.0, 1.0, eps));
    }
    let k = range.len();
    let scale: Vec<f64> = range.iter().map(|&i| 1.0 / s.read(i).sqrt()).collect();
    let w = Mat::from_fn(n, k, |i, c| u.read(i, range[c]) * scale[c]);
    let mut c = w.transpose() * y * w.as_ref();
    symmetrize(&mut c);
    let ev = sym_eigenvalues(c.as_ref());
    Ok(SpectralCert::from_extremes(ev[0], ev[k - 1], eps))
}

/// `½ (D⁻¹ + (I + D⁻¹A) W (I + AD⁻¹))` for a dense inner operator `W`.
pub fn one_level_operator(d: &[f64], a: MatRef<'_, f64>, inner: MatRef<'_, f64>) -> Mat<f64> {
    let n = d.len();
    let left = Mat::from_fn(n, n, |i, j| (i == j) as u8 as f64 + a.read(i, j) / d[i]);
    let right = left.transpose().to_owned();
    let mid = left.as_ref() * inner * right.as_ref();
    Mat::from_fn(n, n, |i, j| {
        0.5 * (mid.read(i, j) + if i == j { 1.0 / d[i] } else { 0.0 })
    })
}

pub fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m.read(i, j).abs());
        }
    }
    best
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m.read(i, j).powi(2);
        }
    }
    s.sqrt()
}

/// Outcome of one part of the approximation-algebra exercise.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraPartReport {
    pub part: char,
    pub passed: usize,
    pub total: usize,
    /// Largest `tightest - claimed` seen; nonpositive when every case held.
    pub worst_excess: f64,
}

impl AlgebraPartReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

fn random_square(n: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let g = random_square(n, rng);
    let mut x = g.as_ref() * g.transpose();
    for i in 0..n {
        x.write(i, i, x.read(i, i) + 0.1);
    }
    x
}

/// `R diag(exp θ) Rᵀ`, whose generalized eigenvalues against `R Rᵀ` are
/// exactly `exp θ`.
fn scaled_by(r: MatRef<'_, f64>, theta: &[f64]) -> Mat<f64> {
    let n = r.nrows();
    let rs = Mat::from_fn(n, n, |i, j| r.read(i, j) * theta[j].exp());
    rs.as_ref() * r.transpose()
}

/// Random `θ ∈ [-ε, ε]ⁿ` with one coordinate pinned to `±ε`.
fn random_thetas(n: usize, eps: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n).map(|_| rng.gen_range(-eps..=eps)).collect();
    let k = rng.gen_range(0..n);
    t[k] = if rng.gen::<bool>() { eps } else { -eps };
    t
}

/// Exercises the addition, transitivity, inversion and congruence rules of
/// `≈_ε` on random positive definite matrices with constructed `ε`.
pub fn approx_algebra_suite(seed: u64, instances: usize, n: usize) -> Result<Vec<AlgebraPartReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports: Vec<AlgebraPartReport> = "abcde"
        .chars()
        .map(|part| AlgebraPartReport { part, passed: 0, total: 0, worst_excess: f64::NEG_INFINITY })
        .collect();
    let mut record = |idx: usize, cert: SpectralCert, claimed: f64| {
        let r = &mut reports[idx];
        r.total += 1;
        if cert.tightest_eps <= claimed + EIG_SLACK {
            r.passed += 1;
        }
        r.worst_excess = r.worst_excess.max(cert.tightest_eps - claimed);
    };

    for _ in 0..instances {
        let eps = rng.gen_range(0.01..0.5);
        let r = random_square(n, &mut rng);
        let x = r.as_ref() * r.transpose();
        let y = scaled_by(r.as_ref(), &random_thetas(n, eps, &mut rng));

        // a: adding a common PSD term
        let w = random_psd(n, &mut rng);
        record(0, approx_check((&x + &w).as_ref(), (&y + &w).as_ref(), eps)?, eps);

        // b: adding two approximations with the same ε
        let r2 = random_square(n, &mut rng);
        let w2 = r2.as_ref() * r2.transpose();
        let z2 = scaled_by(r2.as_ref(), &random_thetas(n, eps, &mut rng));
        record(1, approx_check((&x + &w2).as_ref(), (&y + &z2).as_ref(), eps)?, eps);

        // c: transitivity, ε₁ + ε₂
        let eps2 = rng.gen_range(0.01..0.5);
        let t1 = random_thetas(n, eps, &mut rng);
        let t2 = random_thetas(n, eps2, &mut rng);
        let y1 = scaled_by(r.as_ref(), &t1);
        let half: Vec<f64> = t1.iter().map(|t| 0.5 * t).collect();
        let ry = Mat::from_fn(n, n, |i, j| r.read(i, j) * half[j].exp());
        let z = scaled_by(ry.as_ref(), &t2);
        debug_assert!(approx_check(y1.as_ref(), z.as_ref(), eps2)?.pass);
        record(2, approx_check(x.as_ref(), z.as_ref(), eps + eps2)?, eps + eps2);

        // d: inversion
        let xi = cholesky_inverse(x.as_ref())?;
        let yi = cholesky_inverse(y.as_ref())?;
        record(3, approx_check(xi.as_ref(), yi.as_ref(), eps)?, eps);

        // e: congruence by a rectangular V (the products are singular)
        let k = n + 3;
        let v = Mat::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
        let vxv = v.transpose() * x.as_ref() * v.as_ref();
        let vyv = v.transpose() * y.as_ref() * v.as_ref();
        record(4, approx_check_semidefinite(vxv.as_ref(), vyv.as_ref(), eps)?, eps);
    }
    Ok(reports)
}

pub fn cholesky_inverse(x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let c = x.cholesky(Side::Lower).map_err(|_| Error::NotPositiveDefinite)?;
    Ok(c.inverse())
}
