//! The V-cycle crude solve over an inverse chain and the preconditioned
//! Richardson iteration that refines it to arbitrary accuracy.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::chain::{self, BuildOptions, InverseChain};
use crate::error::{Error, Result};
use crate::reductions::{kappa_upper_bound, KappaMode, SddmSplitting};
use crate::sparse::{apply_halfcycle_factor, check_dim, dot, Side};
use crate::verify;

/// Applies the chain's approximate inverse `Z` to `b`.
///
/// Forward sweep `bᵢ = (I + Aᵢ₋₁Dᵢ₋₁⁻¹) bᵢ₋₁`, terminal `x_d = D_d⁻¹ b_d`,
/// backward sweep `xᵢ = ½ (Dᵢ⁻¹bᵢ + (I + Dᵢ⁻¹Aᵢ) xᵢ₊₁)`.
pub fn crude_solve(chain: &InverseChain, b: &[f64]) -> Result<Vec<f64>> {
    check_dim(chain.dim(), b.len())?;
    let levels = chain.levels();
    let depth = chain.depth();
    let mut rhs = Vec::with_capacity(depth + 1);
    rhs.push(b.to_vec());
    for i in 1..=depth {
        let prev = &levels[i - 1];
        let next = apply_halfcycle_factor(prev.d(), prev.a(), &rhs[i - 1], Side::Right)?;
        rhs.push(next);
    }
    let mut x = levels[depth].d().solve(&rhs[depth])?;
    for i in (0..depth).rev() {
        let lvl = &levels[i];
        let lifted = apply_halfcycle_factor(lvl.d(), lvl.a(), &x, Side::Left)?;
        let local = lvl.d().solve(&rhs[i])?;
        x = local.iter().zip(&lifted).map(|(p, q)| 0.5 * (p + q)).collect();
    }
    Ok(x)
}

/// `√(xᵀ(D - A)x)`.
pub fn m_norm(m: &SddmSplitting, x: &[f64]) -> Result<f64> {
    let energy = dot(x, &m.apply(x)?);
    if energy < -1e-12 {
        return Err(Error::NegativeEnergy(energy));
    }
    Ok(energy.max(0.0).sqrt())
}

/// `α = 2 / (e^c + e^{-c})`, which centres the spectrum of `αZM` on 1.
pub fn damping(c: f64) -> f64 {
    1.0 / c.cosh()
}

/// Per-iteration `M`-norm contraction `tanh(c)` of the damped iteration.
pub fn contraction(c: f64) -> f64 {
    c.tanh()
}

/// `⌈ln(1/(ε(1-ρ))) / ln(1/ρ)⌉`, or 1 when `ρ = 0`.
pub fn iteration_bound(eps: f64, rho: f64) -> usize {
    if rho <= 0.0 {
        return 1;
    }
    ((1.0 / (eps * (1.0 - rho))).ln() / (1.0 / rho).ln()).ceil().max(1.0) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct RichardsonOptions {
    pub eps: f64,
    pub max_iterations: usize,
    /// Overrides the derived damping.
    pub damping: Option<f64>,
    /// Runs exactly this many iterations with no stopping test, which makes
    /// the solve a fixed linear operator.
    pub fixed_iterations: Option<usize>,
}

impl RichardsonOptions {
    pub fn new(eps: f64) -> Self {
        RichardsonOptions { eps, max_iterations: 1000, damping: None, fixed_iterations: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The a-priori bound `ρᵏ/(1-ρ) ≤ ε` was met.
    Bound,
    /// The certified residual proxy `e^c √(rᵀZr / bᵀZb) ≤ ε` was met.
    Proxy,
    FixedIterations,
    ZeroRhs,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `√(rₖᵀZrₖ / bᵀZb)` after each iteration.
    pub residual_proxies: Vec<f64>,
    pub flops: u64,
    pub wall_time: Duration,
    pub build_time: Duration,
    pub converged: bool,
    pub stop: StopReason,
    pub alpha: f64,
    pub rho: f64,
    pub budget: f64,
    pub iteration_bound: usize,
    pub chain_depth: usize,
    pub chain_nnz: usize,
    pub chain_attempts: usize,
}

impl SolveReport {
    /// Report for a system answered without iterating.
    pub fn trivial() -> Self {
        SolveReport {
            iterations: 0,
            residual_proxies: Vec::new(),
            flops: 0,
            wall_time: Duration::ZERO,
            build_time: Duration::ZERO,
            converged: true,
            stop: StopReason::ZeroRhs,
            alpha: 1.0,
            rho: 0.0,
            budget: 0.0,
            iteration_bound: 0,
            chain_depth: 0,
            chain_nnz: 0,
            chain_attempts: 0,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "converged={}", self.converged);
        let _ = writeln!(s, "stop={:?}", self.stop);
        let _ = writeln!(s, "iterations={}", self.iterations);
        let _ = writeln!(s, "iteration_bound={}", self.iteration_bound);
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "rho={}", self.rho);
        let _ = writeln!(s, "budget={}", self.budget);
        let _ = writeln!(s, "chain_depth={}", self.chain_depth);
        let _ = writeln!(s, "chain_nnz={}", self.chain_nnz);
        let _ = writeln!(s, "chain_attempts={}", self.chain_attempts);
        let _ = writeln!(s, "flops={}", self.flops);
        let _ = writeln!(s, "build_seconds={:.6}", self.build_time.as_secs_f64());
        let _ = writeln!(s, "solve_seconds={:.6}", self.wall_time.as_secs_f64());
        let proxies: Vec<String> = self.residual_proxies.iter().map(|p| format!("{p:.3e}")).collect();
        let _ = writeln!(s, "residual_proxies={}", proxies.join(","));
        s
    }
}

/// Rough flop count of one crude solve.
fn crude_flops(chain: &InverseChain) -> u64 {
    chain.levels().iter().map(|l| 4 * l.a().nnz() as u64 + 6 * l.dim() as u64).sum()
}

/// Iterates `x ← x + αZ(b - Mx)` from `x = 0`.
pub fn precon_richardson(
    m: &SddmSplitting,
    chain: &InverseChain,
    b: &[f64],
    opts: &RichardsonOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    if !(opts.eps > 0.0 && opts.eps <= 0.5) {
        return Err(Error::InvalidEpsilon(opts.eps));
    }
    check_dim(m.dim(), chain.dim())?;
    check_dim(m.dim(), b.len())?;
    let start = Instant::now();
    let c = chain.budget();
    let alpha = opts.damping.unwrap_or_else(|| damping(c));
    let rho = contraction(c);
    let bound = iteration_bound(opts.eps, rho);
    let per_iter = 2 * crude_flops(chain) + 2 * (m.a().nnz() + m.dim()) as u64 + 6 * m.dim() as u64;
    let mut report = SolveReport {
        alpha,
        rho,
        budget: c,
        iteration_bound: bound,
        chain_depth: chain.depth(),
        chain_nnz: chain.total_nnz(),
        chain_attempts: chain.attempts(),
        ..SolveReport::trivial()
    };

    let n = m.dim();
    let mut x = vec![0.0; n];
    let mut z = crude_solve(chain, b)?;
    let bzb = dot(b, &z);
    if bzb <= 0.0 && opts.fixed_iterations.is_none() {
        report.wall_time = start.elapsed();
        return Ok((x, report));
    }
    let limit = opts.fixed_iterations.unwrap_or(opts.max_iterations);
    report.stop = StopReason::MaxIterations;
    report.converged = false;
    let growth = c.exp();
    for k in 1..=limit {
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += alpha * zi);
        let mx = m.apply(&x)?;
        let r: Vec<f64> = b.iter().zip(&mx).map(|(bi, mi)| bi - mi).collect();
        z = crude_solve(chain, &r)?;
        let proxy = if bzb > 0.0 { (dot(&r, &z).max(0.0) / bzb).sqrt() } else { 0.0 };
        report.residual_proxies.push(proxy);
        report.iterations = k;
        report.flops += per_iter;
        if opts.fixed_iterations.is_some() {
            if k == limit {
                report.stop = StopReason::FixedIterations;
                report.converged = true;
            }
            continue;
        }
        if rho.powi(k as i32) / (1.0 - rho) <= opts.eps {
            report.stop = StopReason::Bound;
            report.converged = true;
            break;
        }
        if growth * proxy <= opts.eps {
            report.stop = StopReason::Proxy;
            report.converged = true;
            break;
        }
    }
    report.wall_time = start.elapsed();
    Ok((x, report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub richardson: RichardsonOptions,
    pub build: BuildOptions,
    /// Upper bound on the condition number; computed when absent.
    pub kappa_hat: Option<f64>,
    pub budget: f64,
    /// Per-level `ε` replacing the planned one.
    pub level_eps: Option<f64>,
}

impl SolveOptions {
    pub fn new(eps: f64, seed: u64) -> Self {
        SolveOptions {
            richardson: RichardsonOptions::new(eps),
            build: BuildOptions { seed, ..Default::default() },
            kappa_hat: None,
            budget: chain::DEFAULT_BUDGET,
            level_eps: None,
        }
    }
}

/// Condition-number bound: dense and exact when the dimension allows,
/// otherwise the formula bound.
pub fn estimate_kappa(m: &SddmSplitting) -> Result<f64> {
    if m.dim() <= verify::DENSE_LIMIT {
        kappa_upper_bound(m, KappaMode::Dense)
    } else {
        kappa_upper_bound(m, KappaMode::Formula)
    }
}

/// Plans and builds a chain for `m`.
pub fn build_for(m: &SddmSplitting, opts: &SolveOptions) -> Result<InverseChain> {
    let kappa = match opts.kappa_hat {
        Some(k) => k,
        None => estimate_kappa(m)?,
    };
    let mut plan = chain::plan_chain(kappa, opts.budget)?;
    if let Some(e) = opts.level_eps {
        plan = plan.with_level_eps(e);
    }
    chain::build_chain(m, &plan, &opts.build)
}

/// Builds a chain for `m` and solves `m x = b` to relative `M`-norm
/// accuracy `opts.richardson.eps`.
pub fn solve_sddm(m: &SddmSplitting, b: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, SolveReport)> {
    check_dim(m.dim(), b.len())?;
    let start = Instant::now();
    let chain = build_for(m, opts)?;
    let build_time = start.elapsed();
    let (x, mut report) = precon_richardson(m, &chain, b, &opts.richardson)?;
    report.build_time = build_time;
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{DiagMatrix, SymSparseMatrix};

    fn m2() -> SddmSplitting {
        let a = SymSparseMatrix::from_triplets_mirrored(2, &[(0, 1, 1.0)]).unwrap();
        SddmSplitting::new(DiagMatrix::new(vec![2.0, 2.0]).unwrap(), a).unwrap()
    }

    fn exact_chain() -> InverseChain {
        let last = SddmSplitting::new(DiagMatrix::new(vec![1.5, 1.5]).unwrap(), SymSparseMatrix::zeros(2)).unwrap();
        InverseChain::from_parts(vec![m2(), last], vec![0.0], 0.0).unwrap()
    }

    #[test]
    fn depth_zero_is_diagonal_solve() {
        let s = SddmSplitting::new(DiagMatrix::new(vec![2.0, 4.0]).unwrap(), SymSparseMatrix::zeros(2)).unwrap();
        let chain = InverseChain::from_parts(vec![s], vec![], 0.0).unwrap();
        assert_eq!(crude_solve(&chain, &[1.0, 1.0]).unwrap(), vec![0.5, 0.25]);
    }

    #[test]
    fn exact_chain_inverts() {
        let x = crude_solve(&exact_chain(), &[1.0, 0.0]).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-15 && (x[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(crude_solve(&exact_chain(), &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(crude_solve(&exact_chain(), &[1.0]).is_err());
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let (x, report) = precon_richardson(&m2(), &exact_chain(), &[1.0, 0.0], &RichardsonOptions::new(1e-8)).unwrap();
        assert_eq!(report.iterations, 1);
        assert_eq!(report.alpha, 1.0);
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_recurrence_contracts_by_tanh() {
        // M = 2, Z = 1: chain of depth 0 with D = 1 would not be SDDM for M,
        // so run the recurrence through an M = (D=2, A=0) and a chain (D=1).
        let m = SddmSplitting::new(DiagMatrix::new(vec![2.0]).unwrap(), SymSparseMatrix::zeros(1)).unwrap();
        let z = SddmSplitting::new(DiagMatrix::new(vec![1.0]).unwrap(), SymSparseMatrix::zeros(1)).unwrap();
        let chain = InverseChain::from_parts(vec![z], vec![], 2f64.ln()).unwrap();
        assert!((damping(chain.budget()) - 0.8).abs() < 1e-15);
        assert!((contraction(chain.budget()) - 0.6).abs() < 1e-15);
        let mut opts = RichardsonOptions::new(1e-8);
        opts.fixed_iterations = Some(5);
        let (x, _) = precon_richardson(&m, &chain, &[1.0], &opts).unwrap();
        let err = (x[0] - 0.5).abs() / 0.5;
        assert!((err - 0.6f64.powi(5)).abs() < 1e-12);
    }

    #[test]
    fn iteration_bound_examples() {
        let rho = contraction(0.1);
        assert!((rho - 0.0997).abs() < 1e-4);
        assert!(iteration_bound(1e-8, rho) <= 9);
        assert_eq!(iteration_bound(1e-8, 0.0), 1);
    }

    #[test]
    fn m_norm_examples() {
        let m = SddmSplitting::new(DiagMatrix::new(vec![4.0]).unwrap(), SymSparseMatrix::zeros(1)).unwrap();
        assert_eq!(m_norm(&m, &[1.0]).unwrap(), 2.0);
        assert!((m_norm(&m2(), &[1.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m_norm(&m2(), &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_eps() {
        let r = precon_richardson(&m2(), &exact_chain(), &[1.0, 0.0], &RichardsonOptions::new(0.7));
        assert!(matches!(r, Err(Error::InvalidEpsilon(_))));
    }

    #[test]
    fn solve_sddm_small() {
        let (x, report) = solve_sddm(&m2(), &[1.0, 0.0], &SolveOptions::new(1e-10, 7)).unwrap();
        assert!(report.converged);
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-9 && (x[1] - 1.0 / 3.0).abs() < 1e-9);
    }
}
