use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ftquad::sim::{preflight, run_scenario, write_outputs, ScenarioConfig};
use ftquad::sweep::{run_sweep, write_sweep, VarySpec};
use ftquad::SimError;

/// Closed-loop simulator for a quadrotor flying on three rotors.
#[derive(Parser)]
#[command(name = "ftquad", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Make the plant match the controller model and drop the robust term.
    #[arg(long)]
    exact_model: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write log.csv, metrics.json and plot extracts.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the gain certificate and initial-condition check as JSON.
    Certify {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the scenario over a range of one numeric parameter.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `path=lo:hi:n`, e.g. `attitude_gains.alpha=10:400:8`.
        #[arg(long)]
        vary: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a built-in scenario (vp, ct, hover) as TOML.
    Preset { name: String },
}

fn load(args: &ConfigArgs) -> Result<ScenarioConfig, SimError> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if args.exact_model {
        cfg.exact_model = true;
    }
    Ok(cfg)
}

fn io_failure(path: &Path, e: std::io::Error) -> ExitCode {
    eprintln!("error: writing {}: {e}", path.display());
    ExitCode::FAILURE
}

fn fail(e: &SimError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn simulate(args: &ConfigArgs, out: &Path) -> Result<ExitCode, SimError> {
    let cfg = load(args)?;
    let run = run_scenario(&cfg)?;
    if let Err(e) = write_outputs(out, &run) {
        return Ok(io_failure(out, e));
    }
    let m = &run.metrics;
    println!(
        "{}: {} steps, sup psi {:.4}, final |e_x| {:.4} m, saturation {:.1}%",
        cfg.name,
        run.log.len(),
        m.sup_psi,
        m.final_ex_norm,
        100.0 * m.saturation_fraction
    );
    Ok(match run.status.to_error() {
        None => ExitCode::SUCCESS,
        Some(e) => fail(&e),
    })
}

fn certify(args: &ConfigArgs) -> Result<ExitCode, SimError> {
    let cfg = load(args)?;
    cfg.validate()?;
    let report = preflight(&cfg);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: &ConfigArgs, vary: &str, out: &Path) -> Result<ExitCode, SimError> {
    let cfg = load(args)?;
    cfg.validate()?;
    let spec = VarySpec::parse(vary)?;
    let points = run_sweep(&cfg, &spec)?;
    if let Err(e) = write_sweep(out, &spec, &points) {
        return Ok(io_failure(out, e));
    }
    for p in &points {
        println!(
            "{} = {}: {}, tail max |e_x| {:.4} m",
            spec.path,
            p.value,
            if p.status.is_completed() { "completed" } else { "failed" },
            p.metrics.tail_max_ex_norm
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { cfg, out } => simulate(cfg, out),
        Command::Certify { cfg } => certify(cfg),
        Command::Sweep { cfg, vary, out } => sweep(cfg, vary, out),
        Command::Preset { name } => match ScenarioConfig::preset(name) {
            Some(cfg) => {
                print!("{}", cfg.to_toml_string());
                Ok(ExitCode::SUCCESS)
            }
            None => Err(SimError::InvalidConfig(format!(
                "unknown preset `{name}` (expected vp, ct or hover)"
            ))),
        },
    };
    result.unwrap_or_else(|e| fail(&e))
}
