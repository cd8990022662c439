use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedosov_cli::expr::parse_function;
use fedosov_cli::report::Report;
use fedosov_cli::scenario::{Overrides, Scenario, DEFAULT_SCENARIO};
use fedosov_cli::suites::{run_scenario, star_report, Suite};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "fedosov", version, about = "Exact Fedosov star products, traces and formal moment maps on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file; a bare name is looked up in the scenario directory.
    #[arg(long, global = true)]
    scenario: Option<String>,

    /// Directory searched for scenario names and `default.toml`.
    #[arg(long, global = true, env = "FEDOSOV_SCENARIO_DIR", default_value = "scenarios")]
    scenario_dir: PathBuf,

    /// Override the scenario's nu order N.
    #[arg(long, global = true)]
    nu_order: Option<i32>,

    /// Override the Weyl truncation degree K (default 2N+3).
    #[arg(long, global = true)]
    weyl_degree: Option<i32>,

    /// Override the random seed for sampled checks.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Record wall-clock time per suite (makes reports run-dependent).
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the coefficients of F*G.
    Star { f: String, g: String },
    /// Solve the Fedosov equation and check the solution.
    SolveR,
    /// Build transports along the scenario's vector fields.
    Transport,
    /// Curvature of the formal connection for pairs of vector fields.
    Curvature,
    /// Solve the trace density.
    TraceDensity,
    /// Formal moment map and its defining equation.
    Moment,
    /// Run verification suites; defaults to the scenario's `checks`.
    Verify { suites: Vec<String> },
}

fn load_scenario(cli: &Cli) -> Result<(String, String), String> {
    let dir = &cli.scenario_dir;
    let Some(name) = &cli.scenario else {
        let path = dir.join("default.toml");
        return Ok(match std::fs::read_to_string(&path) {
            Ok(src) => (path.display().to_string(), src),
            Err(_) => ("<built-in default>".into(), DEFAULT_SCENARIO.into()),
        });
    };
    let candidates = [PathBuf::from(name), dir.join(name), dir.join(format!("{name}.toml"))];
    let Some(p) = candidates.iter().find(|p| Path::new(p).is_file()) else {
        return Err(format!("scenario \"{name}\" not found (also looked in {})", dir.display()));
    };
    std::fs::read_to_string(p)
        .map(|src| (p.display().to_string(), src))
        .map_err(|e| format!("cannot read {}: {e}", p.display()))
}

fn emit(cli: &Cli, report: &Report) -> Result<(), String> {
    let text = report.to_toml();
    match &cli.out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<Report, (u8, String)> {
    let usage = |m: String| (EXIT_USAGE, m);
    let (origin, src) = load_scenario(cli).map_err(usage)?;
    let ov = Overrides { nu_order: cli.nu_order, weyl_degree: cli.weyl_degree, seed: cli.seed };
    let sc = Scenario::from_toml(&src, ov).map_err(|e| usage(format!("{origin}: {e}")))?;
    let suites = match &cli.command {
        Command::Star { f, g } => {
            let ctx = sc.parse_context();
            let fv = parse_function(f, ctx).map_err(|e| usage(format!("F: {e}")))?;
            let gv = parse_function(g, ctx).map_err(|e| usage(format!("G: {e}")))?;
            return Ok(star_report(&sc, f, g, &fv, &gv));
        }
        Command::SolveR => vec![Suite::Fedosov],
        Command::Transport => vec![Suite::Transport],
        Command::Curvature => vec![Suite::Curvature],
        Command::TraceDensity => vec![Suite::TraceDensity],
        Command::Moment => vec![Suite::MomentMap],
        Command::Verify { suites } if suites.is_empty() => {
            if sc.checks.is_empty() {
                return Err(usage(format!("{origin}: no suites given and the scenario lists no checks")));
            }
            sc.checks.clone()
        }
        Command::Verify { suites } => Suite::resolve(suites).map_err(usage)?,
    };
    Ok(run_scenario(&sc, &suites, cli.timings))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = match run(&cli) {
        Ok(r) => r,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = emit(&cli, &report) {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    eprintln!("{}: {} passed, {} failed", report.scenario, report.passed, report.failed);
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}
