use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sdd_chain::graphs::GraphSpec;
use sdd_chain::{io, GraphLaplacian};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdd-chain")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Right-hand side orthogonal to the all-ones vector.
fn write_rhs(path: &Path, n: usize) {
    let mut b: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
    let mean = b.iter().sum::<f64>() / n as f64;
    b.iter_mut().for_each(|x| *x -= mean);
    // make the sum exactly representable as zero
    let s: f64 = b.iter().sum();
    b[0] -= s;
    io::write_vector(path, &b).unwrap();
}

#[test]
fn gen_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.mtx");
    let o = cli(&["gen", "--spec", "path 3", "--out", p(&out)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("vertices=3\n") && text.contains("edges=2\n"));
    assert!(text.contains("seed=0\n") && text.contains("config_hash="));

    let o = cli(&["gen", "--spec", "grid2d 4x4", "--out", p(&out)]);
    assert!(stdout(&o).contains("vertices=16\nedges=24\n"));

    let o = cli(&["gen", "--spec", "grid2d 1x1", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generated_file_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("er.mtx");
    let spec = "erdos-renyi 40 0.1 0.5 3";
    assert!(cli(&["gen", "--spec", spec, "--seed", "9", "--out", p(&out)]).status.success());
    let expected = spec.parse::<GraphSpec>().unwrap().generate(9).unwrap();
    let read = io::read_matrix_market(&out).unwrap();
    assert_eq!(read, expected.to_matrix());
    assert_eq!(GraphLaplacian::from_laplacian_matrix(&read).unwrap(), expected);
}

#[test]
fn solve_laplacian_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (g, b, x) = (dir.path().join("g.mtx"), dir.path().join("b.vec"), dir.path().join("x.vec"));
    assert!(cli(&["gen", "--spec", "grid2d 6x5", "--out", p(&g)]).status.success());
    write_rhs(&b, 30);
    let o = cli(&["--threads", "2", "solve", "--matrix", p(&g), "--rhs", p(&b), "--eps", "1e-9", "--seed", "4", "--out", p(&x)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout(&o);
    assert!(report.contains("converged=true") && report.contains("seed=4") && report.contains("kind=laplacian"));

    let l = GraphLaplacian::from_laplacian_matrix(&io::read_matrix_market(&g).unwrap()).unwrap();
    let sol = io::read_vector(&x).unwrap();
    let rhs = io::read_vector(&b).unwrap();
    let lx = l.apply(&sol).unwrap();
    let res: f64 = lx.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(res / norm < 1e-6, "residual {res}");
    assert!(sol.iter().sum::<f64>().abs() < 1e-9);
}

#[test]
fn non_convergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let (g, b) = (dir.path().join("g.mtx"), dir.path().join("b.vec"));
    assert!(cli(&["gen", "--spec", "grid2d 8x8", "--out", p(&g)]).status.success());
    write_rhs(&b, 64);
    let o = cli(&["solve", "--matrix", p(&g), "--rhs", p(&b), "--max-iterations", "1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn manifests_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.mtx");
    assert!(cli(&["gen", "--spec", "random-regular 60 4", "--seed", "2", "--out", p(&g)]).status.success());
    let mut manifests = Vec::new();
    for t in ["1", "4"] {
        let out = dir.path().join(format!("chain{t}"));
        let o = cli(&["--threads", t, "build-chain", "--matrix", p(&g), "--seed", "7", "--out", p(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        manifests.push(fs::read_to_string(out.join("manifest.txt")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    assert!(manifests[0].contains("seed=7"));
}

#[test]
fn verify_chain_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let (g, chain) = (dir.path().join("g.mtx"), dir.path().join("chain"));
    assert!(cli(&["gen", "--spec", "grid2d 5x5", "--out", p(&g)]).status.success());
    assert!(cli(&["build-chain", "--matrix", p(&g), "--out", p(&chain)]).status.success());
    let o = cli(&["verify-chain", "--chain", p(&chain)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("status=ok"));

    let dpath = chain.join("level_001.d.vec");
    let d: Vec<f64> = io::read_vector(&dpath).unwrap().iter().map(|x| x * 0.2f64.exp()).collect();
    io::write_vector(&dpath, &d).unwrap();
    let o = cli(&["verify-chain", "--chain", p(&chain), "--lenient"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("condition=Diagonal"));
}

#[test]
fn verify_approx_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.mtx"), dir.path().join("y.mtx"));
    fs::write(&x, "%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 2\n2 1 -1\n2 2 2\n").unwrap();
    fs::write(&y, "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 2\n2 2 2\n").unwrap();
    let o = cli(&["verify-approx", "--x", p(&x), "--y", p(&y), "--eps", "0.7"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("pass=true"));
    let o = cli(&["verify-approx", "--x", p(&x), "--y", p(&y), "--eps", "0.5"]);
    assert_eq!(o.status.code(), Some(2));

    // a Laplacian against itself goes through the range restriction
    let g = dir.path().join("g.mtx");
    assert!(cli(&["gen", "--spec", "path 4", "--out", p(&g)]).status.success());
    assert!(cli(&["verify-approx", "--x", p(&g), "--y", p(&g), "--eps", "1e-9"]).status.success());
}

#[test]
fn bench_reports_every_width() {
    let o = cli(&["bench", "--widths", "3,4,5", "--seed", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for w in ["level_nnz.3=", "level_nnz.4=", "level_nnz.5="] {
        assert!(text.contains(w), "{text}");
    }
    assert!(text.contains("seed=1"));
}
