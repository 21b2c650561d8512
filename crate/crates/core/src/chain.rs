//! Planning, construction and validation of approximate inverse chains.
//!
//! A chain for `M₀ = D₀ - A₀` is a list of splittings `(Dᵢ, Aᵢ)` where
//! each `Mᵢ₊₁` approximates `Dᵢ - AᵢDᵢ⁻¹Aᵢ` within `εᵢ`, each `Dᵢ₊₁`
//! approximates `Dᵢ` within `εᵢ`, and the last diagonal approximates its
//! own matrix within `ε_d`. The sum of all `ε` stays within a budget.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io;
use crate::reductions::SddmSplitting;
use crate::rng::derive_seed;
use crate::sparse::{DiagMatrix, Fnv1a};
use crate::sparsify::{self, OracleKind, SparsifyParams, SparsifyStats};
use crate::squaring::{self, SamplingMode, SquareParams, SquareStats};
use crate::verify;

pub const DEFAULT_BUDGET: f64 = 2.0;
pub const MAX_LEVEL_EPS: f64 = 1.0 / 9.0;
/// Chains stop early once `λ_max(Dᵢ⁻¹Aᵢ)` is at most this.
pub const EARLY_STOP_LAMBDA: f64 = 2.0 / 3.0;
pub const DEFAULT_MAX_ATTEMPTS: usize = 8;
/// Largest dimension for which the early-stop eigenvalue is computed densely.
const DENSE_LAMBDA_LIMIT: usize = 1500;

pub fn terminal_eps() -> f64 {
    3f64.ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainPlan {
    pub depth: usize,
    pub eps_levels: Vec<f64>,
    pub eps_terminal: f64,
    pub kappa_hat: f64,
    pub budget: f64,
}

impl ChainPlan {
    pub fn total_eps(&self) -> f64 {
        self.eps_levels.iter().sum::<f64>() + self.eps_terminal
    }

    /// Replaces every level's `ε`, for runs that trade the budget for size.
    pub fn with_level_eps(mut self, eps: f64) -> Self {
        self.eps_levels = vec![eps; self.depth];
        self
    }
}

/// `d = ⌈log_{4/3} κ̂⌉` levels with `εᵢ = min(1/9, 1/(2d))`; the terminal
/// level reserves `ln 3`.
pub fn plan_chain(kappa_hat: f64, budget: f64) -> Result<ChainPlan> {
    if !(kappa_hat >= 1.0) || !kappa_hat.is_finite() {
        return Err(Error::InvalidKappa(kappa_hat));
    }
    let eps_terminal = terminal_eps();
    if !(budget > eps_terminal) {
        return Err(Error::ChainConstruction {
            attempts: 0,
            reason: format!("budget {budget} does not cover the terminal ln 3"),
        });
    }
    let exact = kappa_hat.ln() / (4.0f64 / 3.0).ln();
    // absorb rounding so that κ̂ = (4/3)^k yields exactly k
    let depth = (exact - 1e-9).ceil().max(0.0) as usize;
    let mut eps = if depth == 0 { 0.0 } else { MAX_LEVEL_EPS.min(0.5 / depth as f64) };
    if depth > 0 && depth as f64 * eps + eps_terminal > budget {
        eps = (budget - eps_terminal) / depth as f64;
    }
    Ok(ChainPlan { depth, eps_levels: vec![eps; depth], eps_terminal, kappa_hat, budget })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildOptions {
    pub seed: u64,
    pub sampling: SamplingMode,
    /// `C_s` for clique sampling.
    pub oversample: f64,
    /// `C_g` for re-sparsification.
    pub general_oversample: f64,
    pub oracle: OracleKind,
    /// Re-sparsify a level when its `A` has more stored entries than this;
    /// `None` uses twice the resistance-sampling budget.
    pub resparsify_threshold: Option<usize>,
    pub early_termination: bool,
    /// Run the dense condition checks after each attempt.
    pub strict: bool,
    pub max_attempts: usize,
    pub sample_cap: u64,
    pub work_cap: u64,
    pub dense_limit: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            seed: 0,
            sampling: SamplingMode::Auto,
            oversample: squaring::DEFAULT_OVERSAMPLE,
            general_oversample: sparsify::DEFAULT_OVERSAMPLE,
            oracle: OracleKind::Dense,
            resparsify_threshold: None,
            early_termination: true,
            strict: false,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            sample_cap: squaring::DEFAULT_SAMPLE_CAP,
            work_cap: squaring::DEFAULT_WORK_CAP,
            dense_limit: verify::DENSE_LIMIT,
        }
    }
}

impl BuildOptions {
    pub fn config_hash(&self, plan: &ChainPlan) -> u64 {
        let mut h = Fnv1a::new();
        h.write_str(&format!("{self:?}"));
        h.write_str(&format!("{plan:?}"));
        h.finish()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelStats {
    pub square: SquareStats,
    pub sparsify: Option<SparsifyStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseChain {
    levels: Vec<SddmSplitting>,
    eps: Vec<f64>,
    eps_terminal: f64,
    seed: u64,
    config_hash: u64,
    attempts: usize,
    level_stats: Vec<LevelStats>,
}

impl InverseChain {
    /// Assembles a chain from explicit levels; `eps[i]` relates level `i`
    /// to level `i + 1`.
    pub fn from_parts(levels: Vec<SddmSplitting>, eps: Vec<f64>, eps_terminal: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidSplitting("a chain needs at least one level".into()));
        }
        if eps.len() + 1 != levels.len() {
            return Err(Error::DimensionMismatch { expected: levels.len() - 1, found: eps.len() });
        }
        let n = levels[0].dim();
        for l in &levels {
            crate::sparse::check_dim(n, l.dim())?;
        }
        let level_stats = vec![LevelStats::default(); eps.len()];
        Ok(InverseChain { levels, eps, eps_terminal, seed: 0, config_hash: 0, attempts: 1, level_stats })
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim()
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[SddmSplitting] {
        &self.levels
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn eps_terminal(&self) -> f64 {
        self.eps_terminal
    }

    /// `c = Σ εᵢ + ε_d`, the quality of the crude solve as an inverse.
    pub fn budget(&self) -> f64 {
        self.eps.iter().sum::<f64>() + self.eps_terminal
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn attempts(&self) -> usize {
        self.attempts
    }

    pub fn level_stats(&self) -> &[LevelStats] {
        &self.level_stats
    }

    /// Stored entries of all `Aᵢ` plus the diagonals.
    pub fn total_nnz(&self) -> usize {
        self.levels.iter().map(|l| l.a().nnz() + l.dim()).sum()
    }

    /// `key=value` manifest; identical chains give identical manifests.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format=sdd-chain-manifest-1");
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "config_hash={:016x}", self.config_hash);
        let _ = writeln!(s, "attempts={}", self.attempts);
        let _ = writeln!(s, "dim={}", self.dim());
        let _ = writeln!(s, "depth={}", self.depth());
        let _ = writeln!(s, "eps_terminal={}", self.eps_terminal);
        let _ = writeln!(s, "budget={}", self.budget());
        let _ = writeln!(s, "total_nnz={}", self.total_nnz());
        for (i, l) in self.levels.iter().enumerate() {
            let _ = writeln!(s, "level.{i}.nnz={}", l.a().nnz());
            let _ = writeln!(s, "level.{i}.d_hash={:016x}", l.d().content_hash());
            let _ = writeln!(s, "level.{i}.a_hash={:016x}", l.a().content_hash());
            if let Some(e) = self.eps.get(i) {
                let _ = writeln!(s, "level.{i}.eps={e}");
            }
        }
        s
    }

    /// Per-level table: dimension, `nnz(Aᵢ)`, `εᵢ` and the extreme ratios
    /// `Dᵢ / Dᵢ₋₁`.
    pub fn stats_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# level n nnz_a eps diag_ratio_min diag_ratio_max clique_samples resparsified");
        for (i, l) in self.levels.iter().enumerate() {
            let (lo, hi) = match i {
                0 => (1.0, 1.0),
                _ => diag_ratio_range(self.levels[i - 1].d(), l.d()),
            };
            let eps = self.eps.get(i).map_or("-".to_string(), |e| format!("{e:.6}"));
            let (samples, resp) = match i.checked_sub(1).and_then(|k| self.level_stats.get(k)) {
                Some(st) => (st.square.samples, st.sparsify.as_ref().is_some_and(|p| !p.skipped)),
                None => (0, false),
            };
            let _ = writeln!(
                s,
                "{i} {} {} {eps} {lo:.6} {hi:.6} {samples} {resp}",
                l.dim(),
                l.a().nnz()
            );
        }
        let _ = writeln!(s, "# eps_terminal={:.6} budget={:.6}", self.eps_terminal, self.budget());
        s
    }

    /// Writes `manifest.txt` plus `level_NNN.d.vec` / `level_NNN.a.mtx`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("manifest.txt"), self.manifest())?;
        for (i, l) in self.levels.iter().enumerate() {
            io::write_vector(&dir.join(format!("level_{i:03}.d.vec")), l.d().values())?;
            let comment = format!("chain level {i}, seed {}", self.seed);
            io::write_matrix_market(&dir.join(format!("level_{i:03}.a.mtx")), l.a(), &[&comment])?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let manifest = fs::read_to_string(dir.join("manifest.txt"))?;
        let kv = io::parse_key_values(&manifest)?;
        let get = |k: &str| {
            kv.get(k).ok_or_else(|| Error::Parse { line: 0, message: format!("manifest lacks `{k}`") })
        };
        let parse_err = |k: &str| Error::Parse { line: 0, message: format!("bad value for `{k}`") };
        let depth: usize = get("depth")?.parse().map_err(|_| parse_err("depth"))?;
        let eps_terminal: f64 = get("eps_terminal")?.parse().map_err(|_| parse_err("eps_terminal"))?;
        let seed: u64 = get("seed")?.parse().map_err(|_| parse_err("seed"))?;
        let config_hash = u64::from_str_radix(get("config_hash")?, 16).map_err(|_| parse_err("config_hash"))?;
        let attempts: usize = get("attempts")?.parse().map_err(|_| parse_err("attempts"))?;
        let mut levels = Vec::with_capacity(depth + 1);
        let mut eps = Vec::with_capacity(depth);
        for i in 0..=depth {
            let d = io::read_vector(&dir.join(format!("level_{i:03}.d.vec")))?;
            let a = io::read_matrix_market(&dir.join(format!("level_{i:03}.a.mtx")))?;
            levels.push(SddmSplitting::new(DiagMatrix::new(d)?, a)?);
            if i < depth {
                let key = format!("level.{i}.eps");
                eps.push(get(&key)?.parse().map_err(|_| parse_err(&key))?);
            }
        }
        let mut chain = Self::from_parts(levels, eps, eps_terminal)?;
        chain.seed = seed;
        chain.config_hash = config_hash;
        chain.attempts = attempts;
        Ok(chain)
    }
}

fn diag_ratio_range(prev: &DiagMatrix, cur: &DiagMatrix) -> (f64, f64) {
    prev.values()
        .iter()
        .zip(cur.values())
        .map(|(p, c)| c / p)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

/// Largest eigenvalue of `D⁻¹A`: dense for small dimensions, otherwise the
/// Rayleigh quotient of power iteration on `D^{-1/2} A D^{-1/2}`.
pub fn walk_lambda_max(s: &SddmSplitting) -> Result<f64> {
    let n = s.dim();
    if s.a().nnz() == 0 {
        return Ok(0.0);
    }
    if n <= DENSE_LAMBDA_LIMIT {
        return Ok(*verify::splitting_walk_eigenvalues(s).last().expect("nonempty"));
    }
    let scale: Vec<f64> = s.d().values().iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut x: Vec<f64> = s.d().values().iter().map(|d| d.sqrt()).collect();
    let mut rq = 0.0;
    for _ in 0..500 {
        let norm = crate::sparse::norm2(&x);
        x.iter_mut().for_each(|v| *v /= norm);
        let scaled: Vec<f64> = x.iter().zip(&scale).map(|(a, b)| a * b).collect();
        let mut y = s.a().matvec(&scaled)?;
        y.iter_mut().zip(&scale).for_each(|(v, b)| *v *= b);
        rq = crate::sparse::dot(&x, &y);
        x = y;
    }
    Ok(rq)
}

/// Builds a chain, retrying with fresh seeds when validation fails.
pub fn build_chain(s: &SddmSplitting, plan: &ChainPlan, opts: &BuildOptions) -> Result<InverseChain> {
    let mut reason = String::from("no attempts");
    let strict = opts.strict && s.dim() <= opts.dense_limit;
    for attempt in 0..opts.max_attempts.max(1) {
        let seed = if attempt == 0 { opts.seed } else { derive_seed(opts.seed, attempt as u64) };
        let mut chain = build_once(s, plan, opts, seed)?;
        chain.attempts = attempt + 1;
        chain.config_hash = opts.config_hash(plan);
        let report = validate_chain(&chain, strict, opts.dense_limit);
        if report.passed() {
            return Ok(chain);
        }
        reason = report.violations.join("; ");
    }
    Err(Error::ChainConstruction { attempts: opts.max_attempts, reason })
}

fn build_once(s: &SddmSplitting, plan: &ChainPlan, opts: &BuildOptions, seed: u64) -> Result<InverseChain> {
    let n = s.dim();
    let mut levels = vec![s.clone()];
    let mut stats = Vec::new();
    for i in 0..plan.depth {
        let cur = levels.last().expect("nonempty");
        if opts.early_termination && walk_lambda_max(cur)? <= EARLY_STOP_LAMBDA {
            break;
        }
        let half = 0.5 * plan.eps_levels[i];
        let sq = SquareParams {
            eps: half,
            seed: derive_seed(seed, 2 * i as u64 + 1),
            oversample: opts.oversample,
            sample_cap: opts.sample_cap,
            work_cap: opts.work_cap,
            mode: opts.sampling,
        };
        let (mut next, square) = squaring::sparse_square(cur, &sq)?;
        let mut sparsify_stats = None;
        if opts.oracle == OracleKind::Dense && n <= opts.dense_limit {
            let mut sp = SparsifyParams::new(half, derive_seed(seed, 2 * i as u64 + 2));
            sp.oversample = opts.general_oversample;
            sp.oracle_limit = opts.dense_limit;
            sp.sample_cap = opts.sample_cap;
            let over = match opts.resparsify_threshold {
                Some(t) => next.a().nnz() > t,
                None => true,
            };
            if over {
                sp.keep_if_small = opts.resparsify_threshold.is_none();
                let (out, st) = sparsify::sparsify_splitting(&next, &sp)?;
                next = out;
                sparsify_stats = Some(st);
            }
        }
        levels.push(next);
        stats.push(LevelStats { square, sparsify: sparsify_stats });
    }
    let depth = levels.len() - 1;
    let mut chain = InverseChain::from_parts(levels, plan.eps_levels[..depth].to_vec(), plan.eps_terminal)?;
    chain.seed = seed;
    chain.level_stats = stats;
    Ok(chain)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Condition {
    /// `Mᵢ ≈ Dᵢ₋₁ - Aᵢ₋₁Dᵢ₋₁⁻¹Aᵢ₋₁`
    Square,
    /// `Dᵢ ≈ Dᵢ₋₁`
    Diagonal,
    /// `D_d ≈ M_d`
    Terminal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionCheck {
    pub level: usize,
    pub condition: Condition,
    pub measured: f64,
    pub allowed: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainReport {
    pub checks: Vec<ConditionCheck>,
    pub budget: f64,
    pub budget_limit: f64,
    /// Extreme eigenvalues of `D_d⁻¹A_d` when the window applies.
    pub terminal_window: Option<(f64, f64)>,
    pub dense_checked: bool,
    pub violations: Vec<String>,
}

impl ChainReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "status={}", if self.passed() { "ok" } else { "violated" });
        let _ = writeln!(s, "dense_checked={}", self.dense_checked);
        let _ = writeln!(s, "budget={} limit={}", self.budget, self.budget_limit);
        for c in &self.checks {
            let _ = writeln!(
                s,
                "level={} condition={:?} measured={:.3e} allowed={:.3e} pass={}",
                c.level, c.condition, c.measured, c.allowed, c.pass
            );
        }
        if let Some((lo, hi)) = self.terminal_window {
            let _ = writeln!(s, "terminal_walk_eigenvalues=[{lo:.6}, {hi:.6}]");
        }
        for v in &self.violations {
            let _ = writeln!(s, "violation: {v}");
        }
        s
    }
}

/// Checks the chain conditions. The diagonal condition is checked at any
/// size; the spectral ones only when `dense` is set and the dimension is
/// within `dense_limit`. Problems are reported, never raised.
pub fn validate_chain(chain: &InverseChain, dense: bool, dense_limit: usize) -> ChainReport {
    let dense = dense && chain.dim() <= dense_limit;
    let mut checks = Vec::new();
    let mut violations = Vec::new();
    let budget = chain.budget();
    if budget > DEFAULT_BUDGET + verify::EIG_SLACK {
        violations.push(format!("eps budget {budget} exceeds {DEFAULT_BUDGET}"));
    }
    let levels = chain.levels();
    for i in 1..levels.len() {
        let allowed = chain.eps()[i - 1];
        let (lo, hi) = diag_ratio_range(levels[i - 1].d(), levels[i].d());
        let measured = lo.ln().abs().max(hi.ln().abs());
        checks.push(ConditionCheck {
            level: i,
            condition: Condition::Diagonal,
            measured,
            allowed,
            pass: measured <= allowed + verify::EIG_SLACK,
        });
        if dense {
            let exact = verify::dense_splitting(&squaring_dense(&levels[i - 1]));
            let mi = verify::dense_splitting(&levels[i]);
            let measured = match verify::approx_check(exact.as_ref(), mi.as_ref(), allowed) {
                Ok(cert) => cert.tightest_eps,
                Err(_) => f64::INFINITY,
            };
            checks.push(ConditionCheck {
                level: i,
                condition: Condition::Square,
                measured,
                allowed,
                pass: measured <= allowed + verify::EIG_SLACK,
            });
        }
    }
    let mut terminal_window = None;
    if dense {
        let last = levels.last().expect("nonempty");
        let d = verify::diag_dense(last.d().values());
        let m = verify::dense_splitting(last);
        let measured = match verify::approx_check(d.as_ref(), m.as_ref(), chain.eps_terminal()) {
            Ok(cert) => cert.tightest_eps,
            Err(_) => f64::INFINITY,
        };
        checks.push(ConditionCheck {
            level: chain.depth(),
            condition: Condition::Terminal,
            measured,
            allowed: chain.eps_terminal(),
            pass: measured <= chain.eps_terminal() + verify::EIG_SLACK,
        });
        if chain.depth() >= 1 && chain.eps().iter().all(|&e| e <= MAX_LEVEL_EPS) {
            let ev = verify::splitting_walk_eigenvalues(last);
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            terminal_window = Some((lo, hi));
            let floor = 1.0 - (2.0 * MAX_LEVEL_EPS).exp();
            if lo < floor - verify::EIG_SLACK || hi > EARLY_STOP_LAMBDA + verify::EIG_SLACK {
                violations.push(format!(
                    "terminal eigenvalues [{lo}, {hi}] leave [{floor}, {EARLY_STOP_LAMBDA}]"
                ));
            }
        }
    }
    for c in checks.iter().filter(|c| !c.pass) {
        violations.push(format!(
            "level {} condition {:?}: measured {} > allowed {}",
            c.level, c.condition, c.measured, c.allowed
        ));
    }
    ChainReport {
        checks,
        budget,
        budget_limit: DEFAULT_BUDGET,
        terminal_window,
        dense_checked: dense,
        violations,
    }
}

/// Exact `(D, AD⁻¹A)` through a dense product.
fn squaring_dense(s: &SddmSplitting) -> SddmSplitting {
    let n = s.dim();
    let a = verify::to_dense(s.a());
    let d = s.d().values();
    let scaled = faer::Mat::from_fn(n, n, |i, j| a.read(i, j) / d[i]);
    let sq = a.as_ref() * scaled.as_ref();
    let mut triples = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let v = 0.5 * (sq.read(i, j) + sq.read(j, i));
            if v != 0.0 {
                triples.push((i, j, v));
            }
        }
    }
    let a2 = crate::sparse::SymSparseMatrix::from_triplets(n, &triples).expect("symmetrized");
    SddmSplitting::new_unchecked(s.d().clone(), a2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SymSparseMatrix;

    fn two_by_two() -> SddmSplitting {
        let a = SymSparseMatrix::from_triplets_mirrored(2, &[(0, 1, 1.0)]).unwrap();
        SddmSplitting::new(DiagMatrix::new(vec![2.0, 2.0]).unwrap(), a).unwrap()
    }

    #[test]
    fn plan_examples() {
        let p = plan_chain(4.0 / 3.0, 2.0).unwrap();
        assert_eq!(p.depth, 1);
        assert_eq!(p.eps_levels, vec![1.0 / 9.0]);

        let p = plan_chain(100.0, 2.0).unwrap();
        assert_eq!(p.depth, 17);
        assert!(p.eps_levels.iter().all(|&e| e == 1.0 / 34.0));
        assert!(p.total_eps() <= 2.0);

        let p = plan_chain(1.0, 2.0).unwrap();
        assert_eq!(p.depth, 0);
        assert!(p.eps_levels.is_empty());
        assert_eq!(p.eps_terminal, 3f64.ln());

        assert!(matches!(plan_chain(0.5, 2.0), Err(Error::InvalidKappa(_))));
        assert!(plan_chain(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn plan_budget_is_respected() {
        for kappa in [1.5, 10.0, 1e3, 1e6, 1e12] {
            let p = plan_chain(kappa, 2.0).unwrap();
            assert!(p.total_eps() <= 2.0 + 1e-12, "{kappa}");
            assert!(p.eps_levels.iter().all(|&e| e <= MAX_LEVEL_EPS));
            let tight = plan_chain(kappa, 1.3).unwrap();
            assert!(tight.total_eps() <= 1.3 + 1e-12);
        }
    }

    #[test]
    fn exact_two_by_two_chain() {
        let opts = BuildOptions {
            sampling: SamplingMode::Exact,
            early_termination: false,
            strict: true,
            ..Default::default()
        };
        let plan = ChainPlan { depth: 1, eps_levels: vec![1.0 / 9.0], ..plan_chain(4.0 / 3.0, 2.0).unwrap() };
        let chain = build_chain(&two_by_two(), &plan, &opts).unwrap();
        assert_eq!(chain.depth(), 1);
        let m1 = verify::dense_splitting(&chain.levels()[1]);
        assert_eq!((m1.read(0, 0), m1.read(1, 1), m1.read(0, 1)), (1.5, 1.5, 0.0));
        let report = validate_chain(&chain, true, 100);
        assert!(report.passed(), "{}", report.render());
        let terminal = report.checks.iter().find(|c| c.condition == Condition::Terminal).unwrap();
        assert!((terminal.measured - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        let square = report.checks.iter().find(|c| c.condition == Condition::Square).unwrap();
        assert!(square.measured < 1e-12);
    }

    #[test]
    fn zero_a_stops_immediately() {
        let s = SddmSplitting::new(DiagMatrix::new(vec![1.0, 2.0]).unwrap(), SymSparseMatrix::zeros(2)).unwrap();
        let chain = build_chain(&s, &plan_chain(100.0, 2.0).unwrap(), &BuildOptions::default()).unwrap();
        assert_eq!(chain.depth(), 0);
        let report = validate_chain(&chain, true, 100);
        assert!(report.passed());
        assert!(report.checks[0].measured < 1e-12);
    }

    #[test]
    fn scaled_diagonal_violates_condition_b() {
        let s = two_by_two();
        let sq = squaring::exact_square(&s);
        let (d, a) = sq.into_parts();
        let scaled = DiagMatrix::new(d.values().iter().map(|x| x * 0.2f64.exp()).collect()).unwrap();
        let chain = InverseChain::from_parts(
            vec![s, SddmSplitting::new(scaled, a).unwrap()],
            vec![0.1],
            3f64.ln(),
        )
        .unwrap();
        let report = validate_chain(&chain, false, 100);
        assert!(!report.passed());
        let b = &report.checks[0];
        assert_eq!(b.condition, Condition::Diagonal);
        assert!(!b.pass && (b.measured - 0.2).abs() < 1e-12);
    }

    #[test]
    fn manifest_round_trip_through_directory() {
        let opts = BuildOptions { sampling: SamplingMode::Exact, early_termination: false, ..Default::default() };
        let chain = build_chain(&two_by_two(), &plan_chain(3.0, 2.0).unwrap(), &opts).unwrap();
        let dir = std::env::temp_dir().join(format!("sdd-chain-test-{}", std::process::id()));
        chain.write_dir(&dir).unwrap();
        let back = InverseChain::read_dir(&dir).unwrap();
        assert_eq!(back.manifest(), chain.manifest());
        fs::remove_dir_all(&dir).unwrap();
    }
}
