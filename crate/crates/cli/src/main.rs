//! Command-line front end: scenario runs with CSV traces and summaries,
//! suboptimality-degree tables, and side-by-side scenario comparison.
//!
//! Exit codes: 0 for a warning-free run, 2 when any event fell back with a
//! "solution may diverge" warning, 1 for hard errors (bad configuration,
//! solver abort).

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use nmpc::alpha_table::{alpha_nm, ExpoControllability};
use nmpc::mpc_loop::{self, RunOptions};

use nmpc_cli::config::{self, PartialConfig, ScenarioConfig};
use nmpc_cli::report::{self, RunSummary};
use nmpc_cli::{trace, CliError};

#[derive(Parser)]
#[command(
    name = "nmpc",
    about = "Receding-horizon simulator with runtime suboptimality certification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one closed-loop scenario; writes a CSV trace and a summary.
    Run(RunArgs),
    /// Emit the full (N, m) suboptimality-degree grid as CSV.
    AlphaTable(AlphaTableArgs),
    /// Run two scenario configs over the same system and compare them.
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario file (flat `key = value` lines, `#` comments). Flags below
    /// override file values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// System: `syncgen` or `linear_scalar`.
    #[arg(long)]
    system: Option<String>,

    /// Linear-scalar dynamics coefficient.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    /// Linear-scalar input coefficient.
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    /// Linear-scalar state cost weight.
    #[arg(long)]
    q: Option<f64>,
    /// Linear-scalar control cost weight.
    #[arg(long)]
    r: Option<f64>,

    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,

    /// Prediction horizon.
    #[arg(long = "N")]
    horizon: Option<usize>,

    /// Performance bound to certify, in (0, 1).
    #[arg(long = "alpha-bar")]
    alpha_bar: Option<f64>,

    /// Loop algorithm: classical, basic, update_a or update_b.
    #[arg(long)]
    algorithm: Option<String>,

    /// Sampling-instant budget.
    #[arg(long)]
    steps: Option<usize>,

    /// Sampling period of the generator benchmark.
    #[arg(long = "T")]
    sampling: Option<f64>,

    /// Control weight of the generator stage cost.
    #[arg(long)]
    lambda: Option<f64>,

    /// RK4 substeps per sampling period.
    #[arg(long)]
    substeps: Option<usize>,

    /// Solver gradient tolerance.
    #[arg(long = "grad-tol")]
    grad_tol: Option<f64>,

    /// Solver iteration cap.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,

    /// CSV output path (summary goes next to it). Relative paths honor
    /// NMPC_OUTPUT_DIR.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn partial(&self) -> PartialConfig {
        PartialConfig {
            system: self.system.clone(),
            a: self.a,
            b: self.b,
            q: self.q,
            r: self.r,
            x0: self.x0.clone(),
            horizon: self.horizon,
            alpha_bar: self.alpha_bar,
            algorithm: self.algorithm.clone(),
            steps: self.steps,
            sampling: self.sampling,
            lambda: self.lambda,
            substeps: self.substeps,
            grad_tol: self.grad_tol,
            max_iter: self.max_iter,
            output: self.output.clone(),
        }
    }

    fn load(&self) -> Result<ScenarioConfig, CliError> {
        let base = match &self.config {
            Some(path) => PartialConfig::from_file(path)?,
            None => PartialConfig::default(),
        };
        base.overlaid_with(self.partial()).finalize()
    }
}

#[derive(Args)]
struct AlphaTableArgs {
    /// Controllability overshoot, at least 1.
    #[arg(long = "C")]
    c: f64,
    /// Controllability decay rate, in (0, 1).
    #[arg(long)]
    sigma: f64,
    /// Largest prediction horizon in the grid.
    #[arg(long = "N-max", default_value_t = 30)]
    n_max: usize,
    /// CSV output path. Relative paths honor NMPC_OUTPUT_DIR.
    #[arg(long, short = 'o', default_value = "alpha_table.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario file for run A.
    config_a: PathBuf,
    /// Scenario file for run B.
    config_b: PathBuf,
    /// Report output path (stdout if omitted).
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

fn main() {
    std::process::exit(run_main());
}

fn run_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            let code = if matches!(e.kind(), DisplayHelp | DisplayVersion) {
                0
            } else {
                1
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::AlphaTable(args) => cmd_alpha_table(&args),
        Command::Compare(args) => cmd_compare(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

struct Completed {
    cfg: ScenarioConfig,
    summary: RunSummary,
    log: nmpc::ExecutionLog,
}

fn execute(cfg: ScenarioConfig) -> Result<Completed, CliError> {
    let sys = cfg.build_system()?;
    let opts = RunOptions {
        solver: cfg.solve_options(),
        ..RunOptions::default()
    };
    let log = mpc_loop::run(
        &sys,
        &cfg.x0,
        cfg.horizon,
        cfg.alpha_bar,
        cfg.steps,
        cfg.algorithm,
        &opts,
    )
    .map_err(|e| CliError::runtime(format!("run failed: {e}")))?;
    let summary = RunSummary::new(&cfg, &sys, &log);
    Ok(Completed { cfg, summary, log })
}

fn summary_path(csv: &std::path::Path) -> PathBuf {
    let mut name = csv
        .file_stem()
        .map(|s| s.to_os_string())
        .unwrap_or_else(|| "run".into());
    name.push(".summary.txt");
    csv.with_file_name(name)
}

fn cmd_run(args: &RunArgs) -> Result<i32, CliError> {
    let cfg = args.load()?;
    let total = Instant::now();
    let done = execute(cfg)?;
    let wall = total.elapsed();

    let out = done.cfg.resolved_output();
    let sampling = match done.cfg.system {
        config::SystemKind::SyncGen => done.cfg.sampling,
        config::SystemKind::LinearScalar { .. } => 1.0,
    };
    trace::write_atomic(&out, &trace::render(&done.log, sampling))?;
    trace::write_atomic(&summary_path(&out), &done.summary.render())?;

    println!("{}", done.summary.render());
    println!("trace written to {}", out.display());
    println!("total wall time {:.3} s", wall.as_secs_f64());

    if done.log.aborted.is_some() {
        // Partial trace retained above.
        return Ok(1);
    }
    Ok(if done.summary.warnings > 0 { 2 } else { 0 })
}

fn cmd_alpha_table(args: &AlphaTableArgs) -> Result<i32, CliError> {
    let ec = ExpoControllability::new(args.c, args.sigma)
        .map_err(|e| CliError::usage(e.to_string()))?;
    if args.n_max < 2 {
        return Err(CliError::usage("field N-max: must be at least 2"));
    }
    let mut csv = String::from("N,m,alpha\n");
    for n in 2..=args.n_max {
        for m in 1..n {
            let a = alpha_nm(n, m, &ec).map_err(|e| CliError::runtime(e.to_string()))?;
            csv.push_str(&format!("{n},{m},{}\n", trace::fmt_float(a)));
        }
    }
    let out = match std::env::var_os("NMPC_OUTPUT_DIR") {
        Some(dir) if args.out.is_relative() => PathBuf::from(dir).join(&args.out),
        _ => args.out.clone(),
    };
    trace::write_atomic(&out, &csv)?;
    println!("alpha table written to {}", out.display());
    Ok(0)
}

fn cmd_compare(args: &CompareArgs) -> Result<i32, CliError> {
    let cfg_a = PartialConfig::from_file(&args.config_a)?.finalize()?;
    let cfg_b = PartialConfig::from_file(&args.config_b)?.finalize()?;
    if cfg_a.system != cfg_b.system {
        return Err(CliError::usage(format!(
            "scenarios compare different systems: {} vs {}",
            cfg_a.system, cfg_b.system
        )));
    }
    if cfg_a.x0 != cfg_b.x0 {
        return Err(CliError::usage(
            "scenarios must start from the same initial state",
        ));
    }

    // Independent runs; execute them concurrently.
    let (done_a, done_b) = std::thread::scope(|scope| {
        let ha = scope.spawn(|| execute(cfg_a));
        let hb = scope.spawn(|| execute(cfg_b));
        (
            ha.join().expect("run A panicked"),
            hb.join().expect("run B panicked"),
        )
    });
    let (done_a, done_b) = (done_a?, done_b?);

    let report = report::comparison_report(&done_a.summary, &done_b.summary);
    match &args.out {
        Some(path) => {
            trace::write_atomic(path, &report)?;
            println!("comparison written to {}", path.display());
        }
        None => print!("{report}"),
    }
    if done_a.log.aborted.is_some() || done_b.log.aborted.is_some() {
        return Ok(1);
    }
    Ok(0)
}
