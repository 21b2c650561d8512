//! Size-ladder benchmark over grounded grid Laplacians.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{self, BuildOptions};
use crate::error::Result;
use crate::graphs::GraphSpec;
use crate::reductions::ground;
use crate::solver::{self, RichardsonOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub widths: Vec<usize>,
    pub eps: f64,
    pub build: BuildOptions,
    pub level_eps: Option<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { widths: vec![8, 16, 32], eps: 1e-8, build: BuildOptions::default(), level_eps: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub width: usize,
    pub n: usize,
    pub kappa_hat: f64,
    pub planned_depth: usize,
    pub depth: usize,
    pub level_nnz: Vec<usize>,
    pub total_nnz: usize,
    pub iterations: usize,
    pub build_time: Duration,
    pub solve_time: Duration,
    /// Set when the build or solve failed, e.g. on a work cap.
    pub error: Option<String>,
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(cfg.widths.len());
    for &width in &cfg.widths {
        let spec = GraphSpec::Grid2d { width, height: width };
        let lap = spec.generate(cfg.build.seed)?;
        let m = ground(&lap, lap.default_ground_index())?;
        let kappa_hat = solver::estimate_kappa(&m)?;
        let mut plan = chain::plan_chain(kappa_hat, chain::DEFAULT_BUDGET)?;
        if let Some(e) = cfg.level_eps {
            plan = plan.with_level_eps(e);
        }
        let mut row = BenchRow {
            width,
            n: m.dim(),
            kappa_hat,
            planned_depth: plan.depth,
            depth: 0,
            level_nnz: Vec::new(),
            total_nnz: 0,
            iterations: 0,
            build_time: Duration::ZERO,
            solve_time: Duration::ZERO,
            error: None,
        };
        let start = Instant::now();
        let built = chain::build_chain(&m, &plan, &cfg.build);
        row.build_time = start.elapsed();
        match built {
            Ok(c) => {
                row.depth = c.depth();
                row.level_nnz = c.levels().iter().map(|l| l.a().nnz()).collect();
                row.total_nnz = c.total_nnz();
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.build.seed ^ width as u64);
                let b: Vec<f64> = (0..m.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                match solver::precon_richardson(&m, &c, &b, &RichardsonOptions::new(cfg.eps)) {
                    Ok((_, report)) => {
                        row.iterations = report.iterations;
                        row.solve_time = report.wall_time;
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn render(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# width n kappa_hat planned_depth depth total_nnz iterations build_s solve_s status");
    for r in rows {
        let status = r.error.as_deref().unwrap_or("ok");
        let _ = writeln!(
            s,
            "{} {} {:.4e} {} {} {} {} {:.3} {:.3} {}",
            r.width,
            r.n,
            r.kappa_hat,
            r.planned_depth,
            r.depth,
            r.total_nnz,
            r.iterations,
            r.build_time.as_secs_f64(),
            r.solve_time.as_secs_f64(),
            status
        );
    }
    for r in rows {
        let nnz: Vec<String> = r.level_nnz.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "level_nnz.{}={}", r.width, nnz.join(","));
    }
    s
}
