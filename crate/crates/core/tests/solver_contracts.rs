use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdd_chain::chain::{self, BuildOptions};
use sdd_chain::graphs::{self, GraphSpec};
use sdd_chain::reductions::{self, SddmSplitting};
use sdd_chain::solver::{self, RichardsonOptions, SolveOptions};
use sdd_chain::squaring::{self, SamplingMode, SquareParams};
use sdd_chain::{verify, GraphLaplacian};

fn grid(width: usize) -> SddmSplitting {
    let l = GraphSpec::Grid2d { width, height: width }.generate(0).unwrap();
    reductions::ground(&l, l.default_ground_index()).unwrap()
}

fn dense_solve(m: &SddmSplitting, b: &[f64]) -> Vec<f64> {
    let inv = verify::cholesky_inverse(verify::dense_splitting(m).as_ref()).unwrap();
    (0..b.len()).map(|i| (0..b.len()).map(|j| inv.read(i, j) * b[j]).sum()).collect()
}

#[test]
fn one_level_with_sampled_square_keeps_its_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let n = rng.gen_range(4..40);
        let s = graphs::random_sddm(n, 0.3, &mut rng);
        let mut p = SquareParams::new(0.5, rng.gen());
        p.mode = SamplingMode::Always;
        p.oversample = 0.2;
        let (hat, _) = squaring::sparse_square(&s, &p).unwrap();
        let exact = verify::dense_splitting(&squaring::exact_square(&s));
        let hat_m = verify::dense_splitting(&hat);
        let eps = verify::approx_check(exact.as_ref(), hat_m.as_ref(), 1.0).unwrap().tightest_eps;
        let inner = verify::cholesky_inverse(hat_m.as_ref()).unwrap();
        let op = verify::one_level_operator(s.d().values(), verify::to_dense(s.a()).as_ref(), inner.as_ref());
        let m_inv = verify::cholesky_inverse(verify::dense_splitting(&s).as_ref()).unwrap();
        let cert = verify::approx_check(m_inv.as_ref(), op.as_ref(), eps).unwrap();
        assert!(cert.pass, "measured {} > {eps}", cert.tightest_eps);
    }
}

#[test]
fn sampled_chain_spectrum_within_budget() {
    let m = grid(6);
    let kappa = solver::estimate_kappa(&m).unwrap();
    let plan = chain::plan_chain(kappa, 2.0).unwrap();
    let opts = BuildOptions { seed: 3, sampling: SamplingMode::Always, oversample: 0.05, strict: true, ..Default::default() };
    let c = chain::build_chain(&m, &plan, &opts).unwrap();
    assert!(c.level_stats().iter().any(|s| s.square.samples > 0));
    let report = chain::validate_chain(&c, true, 4096);
    assert!(report.passed(), "{}", report.render());
    let n = m.dim();
    let z = faer::Mat::from_fn(n, n, |_, _| 0.0);
    let mut z = z;
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solver::crude_solve(&c, &e).unwrap();
        for i in 0..n {
            z.write(i, j, col[i]);
        }
    }
    let zs = faer::Mat::from_fn(n, n, |i, j| 0.5 * (z.read(i, j) + z.read(j, i)));
    let ev = verify::preconditioned_spectrum(zs.as_ref(), verify::dense_splitting(&m).as_ref()).unwrap();
    let cb = c.budget();
    assert!(ev[0] >= (-cb).exp() - 1e-6 && ev[n - 1] <= cb.exp() + 1e-6, "{:?} vs c={cb}", (ev[0], ev[n - 1]));
}

#[test]
fn richardson_contracts_per_iteration() {
    let m = grid(12);
    let c = solver::build_for(&m, &SolveOptions::new(1e-8, 0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let b: Vec<f64> = (0..m.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x_star = dense_solve(&m, &b);
    let rho = solver::contraction(c.budget());
    let mut errors = Vec::new();
    for k in 1..=12 {
        let mut opts = RichardsonOptions::new(1e-8);
        opts.fixed_iterations = Some(k);
        let (x, _) = solver::precon_richardson(&m, &c, &b, &opts).unwrap();
        let d: Vec<f64> = x.iter().zip(&x_star).map(|(a, b)| a - b).collect();
        errors.push(solver::m_norm(&m, &d).unwrap());
    }
    for w in errors.windows(2) {
        assert!(w[1] <= (rho + 1e-6) * w[0], "{} > {} * {}", w[1], rho, w[0]);
    }
}

#[test]
fn laplacian_solve_meets_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let l: GraphLaplacian = graphs::random_connected_graph(40, 0.1, 1.0, 10.0, &mut rng);
    let mut b: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = b.iter().sum::<f64>() / 40.0;
    b.iter_mut().for_each(|v| *v -= mean);
    let (x, report) = reductions::solve_laplacian(&l, &b, &SolveOptions::new(1e-10, 1)).unwrap();
    assert!(report.converged);
    assert!(x.iter().sum::<f64>().abs() < 1e-10);
    let lx = l.apply(&x).unwrap();
    let res: f64 = lx.iter().zip(&b).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
    assert!(res < 1e-7);

    b[0] += 1.0;
    assert!(reductions::solve_laplacian(&l, &b, &SolveOptions::new(1e-8, 1)).is_err());
}
