//! `nhtp` — generate, solve, benchmark and verify sparse least-squares
//! problems over symmetric multilinear equations.
//!
//! Exit codes: 0 on success, 1 when a solve did not converge, 2 on invalid
//! input or I/O failure.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use nhtp::bench::{emit_rows, run_trials, OutputFormat, SolverKind, SummaryRow};
use nhtp::generator::{generate, GeneratorKind, GeneratorSpec, DEFAULT_NOISE_SCALE};
use nhtp::objective::{
    finite_difference_check, lipschitz_constant, recommended_parameters, smoothness_constant,
    verify_assumption1,
};
use nhtp::solver::{iht_solve, solve, EtaRule, SolveStatus};
use nhtp::{NhtpConfig, ProblemInstance};

#[derive(Parser)]
#[command(
    name = "nhtp",
    version,
    about = "s-sparse least-squares solutions of symmetric multilinear equations A x^{m-1} = b"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem instance and write it as JSON.
    Generate(GenerateArgs),
    /// Solve an instance file with NHTP or the IHT baseline.
    Solve(SolveArgs),
    /// Run seeded trial batches and emit a results table.
    Bench(BenchArgs),
    /// Check derivatives, the positive-definiteness assumption and the
    /// theory constants of an instance.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Instance family: cp | mtensor | analytic
    #[arg(long)]
    kind: String,
    /// Tensor order m
    #[arg(long)]
    order: usize,
    /// Dimension n
    #[arg(long)]
    dim: usize,
    /// Sparsity budget s
    #[arg(long, default_value_t = 1)]
    sparsity: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale of the start-point perturbation
    #[arg(long, default_value_t = DEFAULT_NOISE_SCALE)]
    noise_scale: f64,
    /// Output path for the instance JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file
    #[arg(long)]
    instance: PathBuf,
    /// nhtp | iht
    #[arg(long, default_value = "nhtp")]
    solver: String,
    /// Support-selection step: "auto" or a positive number
    #[arg(long, default_value = "auto")]
    eta: String,
    #[arg(long, default_value_t = 5e-5)]
    sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    /// IHT step size: "auto" (the eta recipe) or a positive number
    #[arg(long, default_value = "auto")]
    step: String,
    /// Write the full solve report as JSON here
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Instance family: cp | mtensor | analytic
    #[arg(long)]
    kind: String,
    #[arg(long)]
    order: usize,
    #[arg(long)]
    dim: usize,
    /// Sparsity: a number, or "auto" for {ceil(0.01 n), ceil(0.05 n)}
    #[arg(long, default_value = "auto")]
    sparsity: String,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated list, e.g. "nhtp,iht"
    #[arg(long, default_value = "nhtp")]
    solvers: String,
    /// csv | json
    #[arg(long, default_value = "csv")]
    format: String,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Instance JSON file
    #[arg(long)]
    instance: PathBuf,
    /// Enumerate support supersets and report the minimal restricted-Hessian
    /// eigenvalue (needs a ground truth in the file)
    #[arg(long)]
    assumption1: bool,
    /// Evaluate the Lipschitz / smoothness constants and the recommended
    /// step parameters
    #[arg(long)]
    constants: bool,
    /// Neighborhood radius for the Lipschitz constant
    #[arg(long, default_value_t = 0.1)]
    delta0: f64,
    /// Neighborhood radius for the smoothness constant
    #[arg(long, default_value_t = 0.1)]
    delta1: f64,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-5)]
    fd_step: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn parse_kind(s: &str) -> Result<GeneratorKind, nhtp::Error> {
    match s {
        "cp" => Ok(GeneratorKind::CpRandom),
        "mtensor" => Ok(GeneratorKind::MTensorRandom),
        "analytic" => Ok(GeneratorKind::Analytic),
        other => Err(nhtp::Error::InvalidInput(format!(
            "unknown kind '{other}' (expected cp | mtensor | analytic)"
        ))),
    }
}

fn parse_auto_or(value: &str, what: &str) -> Result<Option<f64>, nhtp::Error> {
    if value == "auto" {
        return Ok(None);
    }
    let v: f64 = value
        .parse()
        .map_err(|_| nhtp::Error::InvalidInput(format!("{what} must be 'auto' or a number")))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(nhtp::Error::InvalidInput(format!("{what} must be positive")));
    }
    Ok(Some(v))
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode, nhtp::Error> {
    let mut spec = GeneratorSpec::new(
        parse_kind(&args.kind)?,
        args.order,
        args.dim,
        args.sparsity,
        args.seed,
    );
    spec.noise_scale = args.noise_scale;
    let instance = generate(&spec)?;
    instance.save(&args.out)?;
    println!(
        "wrote {} instance (m={}, n={}, s={}) to {}",
        args.kind,
        args.order,
        args.dim,
        args.sparsity,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode, nhtp::Error> {
    let instance = ProblemInstance::load(&args.instance)?;
    let x0 = instance
        .start()
        .ok_or_else(|| {
            nhtp::Error::InvalidInput("instance file has no start point x0".into())
        })?
        .to_vec();

    let solver = SolverKind::from_str(&args.solver)?;
    let config = NhtpConfig {
        eta: match parse_auto_or(&args.eta, "--eta")? {
            Some(v) => EtaRule::Fixed(v),
            None => EtaRule::Auto,
        },
        sigma: args.sigma,
        beta: args.beta,
        tol: args.tol,
        max_iter: args.max_iter,
        ..NhtpConfig::default()
    };

    let report = match solver {
        SolverKind::Nhtp => solve(&instance, &x0, &config)?,
        SolverKind::Iht => {
            let step = match parse_auto_or(&args.step, "--step")? {
                Some(v) => v,
                None => nhtp::solver::default_iht_step(&instance, &x0)?,
            };
            iht_solve(&instance, &x0, step, args.tol, args.max_iter)?
        }
    };

    println!(
        "{solver}: status={:?} iterations={} f={:.3e} tol={:.3e} time={:.4}s support={:?}",
        report.status,
        report.iterations,
        report.final_objective,
        report.final_tol,
        report.wall_time_s,
        report.support
    );
    if let Some(x_star) = instance.ground_truth() {
        let re = nhtp::bench::relative_error(&report.x_final, x_star)?;
        println!("relative error vs ground truth: {re:.3e}");
    }
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
        println!("report written to {}", path.display());
    }
    if report.status == SolveStatus::Converged {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn parse_sparsity_grid(value: &str, n: usize) -> Result<Vec<usize>, nhtp::Error> {
    if value == "auto" {
        let lo = (0.01 * n as f64).ceil() as usize;
        let hi = (0.05 * n as f64).ceil() as usize;
        let mut grid = vec![lo.max(1), hi.max(1)];
        grid.dedup();
        return Ok(grid);
    }
    let s: usize = value
        .parse()
        .map_err(|_| nhtp::Error::InvalidInput("--sparsity must be 'auto' or an integer".into()))?;
    Ok(vec![s])
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, nhtp::Error> {
    let kind = parse_kind(&args.kind)?;
    let solvers: Vec<SolverKind> = args
        .solvers
        .split(',')
        .map(|s| SolverKind::from_str(s.trim()))
        .collect::<Result<_, _>>()?;
    let format = OutputFormat::from_str(&args.format)?;
    let config = NhtpConfig {
        tol: args.tol,
        max_iter: args.max_iter,
        ..NhtpConfig::default()
    };

    let mut rows: Vec<SummaryRow> = Vec::new();
    for s in parse_sparsity_grid(&args.sparsity, args.dim)? {
        let spec = GeneratorSpec::new(kind, args.order, args.dim, s, args.seed);
        let summary = run_trials(&spec, args.trials, &solvers, &config)?;
        rows.extend(summary.rows());
    }

    match &args.out {
        Some(path) => {
            let mut file = std::fs::File::create(path)?;
            emit_rows(&rows, format, &mut file)?;
            println!("results written to {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout();
            emit_rows(&rows, format, &mut stdout)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, nhtp::Error> {
    let instance = ProblemInstance::load(&args.instance)?;

    // derivative checks run at the start point, else at the ground truth,
    // else at a fixed deterministic point
    let (point, point_label): (Vec<f64>, &str) = if let Some(x0) = instance.start() {
        (x0.to_vec(), "x0")
    } else if let Some(xs) = instance.ground_truth() {
        (xs.to_vec(), "x_star")
    } else {
        let n = instance.dim();
        ((0..n).map(|i| 0.5 + 0.1 * (i as f64 + 1.0).recip()).collect(), "fixed")
    };

    let fd = finite_difference_check(&instance, &point, args.fd_step)?;
    let mut report = serde_json::json!({
        "point": point_label,
        "derivative_check": fd,
    });

    if args.assumption1 {
        let x_star = instance.ground_truth().ok_or_else(|| {
            nhtp::Error::InvalidInput("--assumption1 needs a ground truth in the file".into())
        })?;
        let a1 = verify_assumption1(&instance, x_star, instance.sparsity())?;
        report["assumption1"] = serde_json::json!({
            "min_eigenvalue": a1.min_eigenvalue,
            "witness_support": a1.witness_support,
            "supports_checked": a1.supports_checked,
            "holds": a1.holds(),
        });
    }

    if args.constants {
        let x_ref: Vec<f64> = instance
            .ground_truth()
            .or(instance.start())
            .map(|x| x.to_vec())
            .unwrap_or_else(|| vec![0.0; instance.dim()]);
        let l_f = lipschitz_constant(&instance, &x_ref, args.delta0);
        let m_2s = smoothness_constant(&instance, &x_ref, args.delta1);
        let recommended = recommended_parameters(1e-4, 5e-5, 0.5, m_2s)
            .ok()
            .map(|(alpha_bar, eta_bar)| serde_json::json!({
                "alpha_bar": alpha_bar,
                "eta_bar": eta_bar,
            }));
        report["constants"] = serde_json::json!({
            "delta0": args.delta0,
            "lipschitz": l_f,
            "delta1": args.delta1,
            "smoothness": m_2s,
            "recommended": recommended,
        });
    }

    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}
