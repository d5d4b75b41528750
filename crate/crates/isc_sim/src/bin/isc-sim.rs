use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isc_sim::config::{load_config, Config};
use isc_sim::dtm::{step_coefficients, DtmOptions};
use isc_sim::harness::{emit_csv, run_scenario, Engine, ScenarioResult};
use isc_sim::params::fixture;
use isc_sim::validation::{coefficient_checks, sweep_integral_bounds, SweepGrid};

#[derive(Debug, Parser)]
#[command(author, version, about = "PMSM interturn short-circuit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory for CSV files
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// RK4 substeps per sampling period for the oracle
    #[arg(long, global = true)]
    substeps: Option<usize>,

    /// Drop the coefficient terms bounded by the sampling period
    #[arg(long, global = true)]
    simplified: bool,

    /// Seed of the input-noise generator
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write one CSV per engine plus a summary
    Simulate { config: PathBuf },
    /// Run a scenario and report discrete-model errors against the oracle
    Compare { config: PathBuf },
    /// Print the step coefficients at one operating point
    Coeffs {
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        omega: f64,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
    },
    /// Run the damped-integral sweep and the coefficient quadrature checks
    Validate,
}

fn load(cli: &Cli, path: &Path) -> Result<Config, String> {
    let mut cfg = load_config(path).map_err(|e| e.to_string())?;
    let s = &mut cfg.scenario;
    if let Some(n) = cli.substeps {
        let mode = s.integration.angle_mode;
        s.integration = isc_sim::oracle::IntegrationConfig::with_substeps(n).map_err(|e| e.to_string())?;
        s.integration.angle_mode = mode;
    }
    if cli.simplified {
        s.dtm.simplified = true;
    }
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli, path: &Path) -> Result<(Config, ScenarioResult), String> {
    let cfg = load(cli, path)?;
    let result = run_scenario(&cfg.scenario, &cfg.base).map_err(|e| e.to_string())?;
    Ok((cfg, result))
}

fn print_reports(result: &ScenarioResult) {
    for p in &result.reports {
        let r = &p.report;
        let signals: Vec<String> = r.signals.iter().map(|s| format!("{}={:.3e}", s.name, s.rel_rms)).collect();
        let div = r.first_divergence.map_or("none".to_string(), |k| format!("row {k}"));
        println!(
            "{:>6} vs {:<6} {}  divergence: {}",
            p.candidate.name(),
            p.reference.name(),
            signals.join(" "),
            div
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> Result<ExitCode, String> {
    match &cli.command {
        Command::Simulate { config } => {
            let (_, result) = run(cli, config)?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            for p in emit_csv(&result, &dir).map_err(|e| e.to_string())? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { config } => {
            let (cfg, result) = run(cli, config)?;
            print_reports(&result);
            if let Some(dir) = &cli.out {
                emit_csv(&result, dir).map_err(|e| e.to_string())?;
            }
            for e in Engine::ALL {
                if let Some(k) = result.trace(e).diverged_at {
                    println!("{} diverged at row {k}", e.name());
                }
            }
            if result.unexpected_divergence() {
                println!("unexpected divergence");
                return Ok(ExitCode::from(3));
            }
            if result.dtm_within_tolerance(cfg.scenario.tolerance) {
                println!("dtm within tolerance {:e}", cfg.scenario.tolerance);
                Ok(ExitCode::SUCCESS)
            } else {
                println!("dtm exceeds tolerance {:e}", cfg.scenario.tolerance);
                Ok(ExitCode::from(1))
            }
        }
        Command::Coeffs { config, omega, theta } => {
            let cfg = load(cli, config)?;
            let model = cfg.faulted_model().map_err(|e| e.to_string())?;
            let c = step_coefficients(&model, *omega, *theta, cfg.scenario.t_s, &cfg.scenario.dtm);
            for (name, value) in c.flatten() {
                println!("{name} = {value}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate => {
            let opts = DtmOptions {
                simplified: cli.simplified,
            };
            let mut ok = true;
            let bounds = sweep_integral_bounds(fixture::T_S, SweepGrid::default()).map_err(|e| e.to_string())?;
            for b in &bounds {
                let verdict = if b.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{verdict} damped integrals n={:<2} sine {:.4} (limit {}) cosine {:.4} (limit {})",
                    b.order, b.max_sine_error, b.sine_limit, b.max_cosine_error, b.cosine_limit
                );
                ok &= b.passed();
            }
            for c in coefficient_checks(&opts).map_err(|e| e.to_string())? {
                let verdict = if c.passed() { "PASS" } else { "FAIL" };
                println!("{verdict} {} {:.3e} (limit {:e})", c.name, c.measured, c.limit);
                ok &= c.passed();
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
