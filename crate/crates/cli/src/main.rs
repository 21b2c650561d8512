use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sdd_chain::bench::{self, BenchConfig};
use sdd_chain::chain::{self, BuildOptions, InverseChain};
use sdd_chain::graphs::GraphSpec;
use sdd_chain::reductions::{self, GraphLaplacian, SddmSplitting};
use sdd_chain::solver::{self, RichardsonOptions, SolveOptions};
use sdd_chain::{io, squaring, verify, Error, OracleKind, SamplingMode};

const EXIT_ERROR: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NO_CONVERGENCE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "sdd-chain", version, about = "Solve SDDM and Laplacian systems with sparse approximate inverse chains")]
struct Cli {
    /// Worker threads (defaults to all cores). Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a connected graph Laplacian as Matrix Market.
    Gen {
        /// `grid2d WxH`, `path N`, `erdos-renyi N P WLO WHI` or `random-regular N D`
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the edge list (`u v w`, zero-indexed).
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Build an inverse chain and write it as a directory.
    BuildChain {
        #[command(flatten)]
        input: MatrixInput,
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve `M x = b` (or `L x = b` for a Laplacian with `b ⊥ 1`).
    Solve {
        #[command(flatten)]
        input: MatrixInput,
        #[arg(long)]
        rhs: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[command(flatten)]
        build: BuildArgs,
        /// Use a prebuilt chain directory instead of building one.
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        max_iterations: usize,
        /// Write the solution here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the chain conditions of a chain directory.
    VerifyChain {
        #[arg(long)]
        chain: PathBuf,
        /// Skip the dense spectral checks.
        #[arg(long)]
        lenient: bool,
        #[arg(long, default_value_t = verify::DENSE_LIMIT)]
        dense_limit: usize,
    },
    /// Certify `X ≈_ε Y` for two Matrix Market files.
    VerifyApprox {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        eps: f64,
    },
    /// Build and solve over a ladder of grid sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[command(flatten)]
        build: BuildArgs,
    },
}

#[derive(Args, Debug)]
struct MatrixInput {
    /// Matrix Market file holding an SDDM matrix or a graph Laplacian.
    #[arg(long)]
    matrix: PathBuf,
    /// Vertex removed when grounding a Laplacian (default: max weighted degree).
    #[arg(long)]
    ground: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OracleArg {
    Dense,
    None,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SamplingArg {
    Auto,
    Exact,
    Always,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-level ε replacing the planned `min(1/9, 1/(2d))`.
    #[arg(long)]
    eps_level: Option<f64>,
    /// Clique sampling constant `C_s`.
    #[arg(long, default_value_t = squaring::DEFAULT_OVERSAMPLE)]
    oversample_const: f64,
    /// Resistance sampling constant `C_g`.
    #[arg(long, default_value_t = sdd_chain::sparsify::DEFAULT_OVERSAMPLE)]
    general_oversample_const: f64,
    /// Re-sparsify levels whose `A` stores more entries than this.
    #[arg(long)]
    resparsify_threshold: Option<usize>,
    #[arg(long, value_enum, default_value_t = OracleArg::Dense)]
    oracle: OracleArg,
    #[arg(long, value_enum, default_value_t = SamplingArg::Auto)]
    sampling: SamplingArg,
    /// Total ε budget of the chain.
    #[arg(long, default_value_t = chain::DEFAULT_BUDGET)]
    budget: f64,
    /// Condition-number bound; computed when absent.
    #[arg(long)]
    kappa: Option<f64>,
    /// Build the full planned depth.
    #[arg(long)]
    no_early_stop: bool,
    /// Run dense condition checks after each build attempt.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = squaring::DEFAULT_WORK_CAP)]
    work_cap: u64,
}

impl BuildArgs {
    fn options(&self) -> BuildOptions {
        BuildOptions {
            seed: self.seed,
            sampling: match self.sampling {
                SamplingArg::Auto => SamplingMode::Auto,
                SamplingArg::Exact => SamplingMode::Exact,
                SamplingArg::Always => SamplingMode::Always,
            },
            oversample: self.oversample_const,
            general_oversample: self.general_oversample_const,
            oracle: match self.oracle {
                OracleArg::Dense => OracleKind::Dense,
                OracleArg::None => OracleKind::None,
            },
            resparsify_threshold: self.resparsify_threshold,
            early_termination: !self.no_early_stop,
            strict: self.strict,
            work_cap: self.work_cap,
            ..Default::default()
        }
    }

    fn solve_options(&self, eps: f64, max_iterations: usize) -> SolveOptions {
        SolveOptions {
            richardson: RichardsonOptions { max_iterations, ..RichardsonOptions::new(eps) },
            build: self.options(),
            kappa_hat: self.kappa,
            budget: self.budget,
            level_eps: self.eps_level,
        }
    }
}

/// Command-line failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: EXIT_ERROR, message: e.to_string() }
    }
}

type CliResult = Result<(), Failure>;

/// The system to solve: an SDDM matrix as given, or a grounded Laplacian.
enum System {
    Sddm(SddmSplitting),
    Laplacian { graph: GraphLaplacian, ground: usize, grounded: SddmSplitting },
}

impl System {
    fn load(input: &MatrixInput) -> Result<Self, Failure> {
        let m = io::read_matrix_market(&input.matrix)?;
        match GraphLaplacian::from_laplacian_matrix(&m) {
            Ok(graph) => {
                let ground = input.ground.unwrap_or_else(|| graph.default_ground_index());
                let grounded = reductions::ground(&graph, ground)?;
                Ok(System::Laplacian { graph, ground, grounded })
            }
            Err(_) => Ok(System::Sddm(SddmSplitting::from_matrix(&m)?)),
        }
    }

    fn splitting(&self) -> &SddmSplitting {
        match self {
            System::Sddm(s) => s,
            System::Laplacian { grounded, .. } => grounded,
        }
    }

    fn describe(&self) -> String {
        match self {
            System::Sddm(s) => format!("kind=sddm\ndim={}\n", s.dim()),
            System::Laplacian { graph, ground, .. } => {
                format!("kind=laplacian\ndim={}\nedges={}\ngrounded_at={ground}\n", graph.dim(), graph.num_edges())
            }
        }
    }
}

/// Writes to standard output, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn run_header(command: &Command, seed: Option<u64>) -> String {
    // the worker count is deliberately left out: it never changes results
    let hash = io::config_hash(&format!("{command:?}"));
    let mut s = format!("config_hash={hash:016x}\n");
    if let Some(seed) = seed {
        s.push_str(&format!("seed={seed}\n"));
    }
    s
}

fn gen(spec: &str, seed: u64, out: &Path, edges: Option<&Path>, header: &str) -> CliResult {
    let spec: GraphSpec = spec.parse()?;
    let l = spec.generate(seed)?;
    let comments = [format!("generator {spec}"), format!("seed {seed}")];
    let refs: Vec<&str> = comments.iter().map(String::as_str).collect();
    io::write_matrix_market(out, &l.to_matrix(), &refs)?;
    if let Some(path) = edges {
        fs::write(path, io::format_edge_list(l.edges())).map_err(Error::from)?;
    }
    emit(&format!("{header}spec={spec}\nvertices={}\nedges={}\nout={}\n", l.dim(), l.num_edges(), out.display()));
    Ok(())
}

fn build(input: &MatrixInput, args: &BuildArgs, out: &Path, header: &str) -> CliResult {
    let system = System::load(input)?;
    let opts = args.solve_options(1e-8, 1);
    let chain = solver::build_for(system.splitting(), &opts)?;
    chain.write_dir(out)?;
    emit(&format!("{header}{}", system.describe()));
    emit(&chain.manifest());
    emit(&chain.stats_report());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn solve(
    input: &MatrixInput,
    rhs: &Path,
    eps: f64,
    args: &BuildArgs,
    chain_dir: Option<&Path>,
    max_iterations: usize,
    out: Option<&Path>,
    header: &str,
) -> CliResult {
    let system = System::load(input)?;
    let b = io::read_vector(rhs)?;
    let opts = args.solve_options(eps, max_iterations);
    let (x, report) = match (&system, chain_dir) {
        (System::Sddm(m), None) => solver::solve_sddm(m, &b, &opts)?,
        (System::Laplacian { graph, ground, .. }, None) => {
            reductions::solve_laplacian_grounded_at(graph, &b, *ground, &opts)?
        }
        (System::Sddm(m), Some(dir)) => {
            let chain = InverseChain::read_dir(dir)?;
            solver::precon_richardson(m, &chain, &b, &opts.richardson)?
        }
        (System::Laplacian { .. }, Some(_)) => {
            return Err(Failure {
                code: EXIT_ERROR,
                message: "prebuilt chains are supported for SDDM inputs only".into(),
            })
        }
    };
    match out {
        Some(path) => io::write_vector(path, &x)?,
        None => emit(&io::format_vector(&x)),
    }
    let report_text = format!("{header}{}{}", system.describe(), report.render());
    if out.is_some() {
        emit(&report_text);
    } else {
        eprint!("{report_text}");
    }
    if !report.converged {
        return Err(Failure {
            code: EXIT_NO_CONVERGENCE,
            message: format!("no convergence after {} iterations", report.iterations),
        });
    }
    Ok(())
}

fn verify_chain(dir: &Path, lenient: bool, dense_limit: usize, header: &str) -> CliResult {
    let chain = InverseChain::read_dir(dir)?;
    let report = chain::validate_chain(&chain, !lenient, dense_limit);
    emit(&format!("{header}seed={}\n{}", chain.seed(), report.render()));
    if report.passed() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_VALIDATION, message: "chain conditions violated".into() })
    }
}

fn verify_approx(x: &Path, y: &Path, eps: f64, header: &str) -> CliResult {
    let xm = io::read_matrix_market(x)?;
    let ym = io::read_matrix_market(y)?;
    verify::check_dense_limit(xm.dim(), verify::DENSE_LIMIT)?;
    let (xd, yd) = (verify::to_dense(&xm), verify::to_dense(&ym));
    // restricting to the range of X also covers singular Laplacians
    let cert = verify::approx_check_semidefinite(xd.as_ref(), yd.as_ref(), eps)?;
    emit(&format!(
        "{header}lambda_min={}\nlambda_max={}\ntightest_eps={}\nrequested_eps={}\npass={}\n",
        cert.lambda_min, cert.lambda_max, cert.tightest_eps, cert.requested_eps, cert.pass
    ));
    if cert.pass {
        Ok(())
    } else {
        Err(Failure { code: EXIT_VALIDATION, message: format!("relation fails at ε = {eps}") })
    }
}

fn bench(widths: &[usize], eps: f64, args: &BuildArgs, header: &str) -> CliResult {
    let cfg = BenchConfig { widths: widths.to_vec(), eps, build: args.options(), level_eps: args.eps_level };
    let rows = bench::run_bench(&cfg)?;
    emit(&format!("{header}threads={}\n{}", rayon::current_num_threads(), bench::render(&rows)));
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let seed = match &cli.command {
        Command::Gen { seed, .. } => Some(*seed),
        Command::BuildChain { build, .. } | Command::Solve { build, .. } | Command::Bench { build, .. } => {
            Some(build.seed)
        }
        Command::VerifyChain { .. } | Command::VerifyApprox { .. } => None,
    };
    let header = run_header(&cli.command, seed);
    match &cli.command {
        Command::Gen { spec, seed, out, edges } => gen(spec, *seed, out, edges.as_deref(), &header),
        Command::BuildChain { input, build: b, out } => build(input, b, out, &header),
        Command::Solve { input, rhs, eps, build, chain, max_iterations, out } => solve(
            input,
            rhs,
            *eps,
            build,
            chain.as_deref(),
            *max_iterations,
            out.as_deref(),
            &header,
        ),
        Command::VerifyChain { chain, lenient, dense_limit } => verify_chain(chain, *lenient, *dense_limit, &header),
        Command::VerifyApprox { x, y, eps } => verify_approx(x, y, *eps, &header),
        Command::Bench { widths, eps, build } => bench(widths, *eps, build, &header),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
