use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use lzdce::cli::commands::{compare, run, sweep_scan, ScanParameter};
use lzdce::cli::config::{Overrides, ScenarioConfig};
use lzdce::cli::output::fmt9;
use lzdce::dissipators::KernelKind;
use lzdce::Error;

#[derive(Parser)]
#[command(name = "lzdce", version, about = "Swept-drive qubit-cavity master equation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config's, else the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    fock_cutoff: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write `<name>.csv` and `<name>.json`.
    Run {
        #[command(flatten)]
        common: Common,
        /// none | ph | jc | rabi
        #[arg(long)]
        kernel: Option<KernelKind>,
    },
    /// Run a scenario under several kernels and report their deviations.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Kernels; the first one is the reference.
        #[arg(long, value_delimiter = ',', default_value = "rabi,jc,ph")]
        kernels: Vec<KernelKind>,
    },
    /// Run a scenario for each value of one parameter.
    Scan {
        #[command(flatten)]
        common: Common,
        /// eta_center | nu_rate | eps_omega | kernel
        #[arg(long)]
        parameter: ScanParameter,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        kernel: Option<KernelKind>,
    },
}

fn load(common: &Common, kernel: Option<KernelKind>) -> lzdce::Result<ScenarioConfig> {
    let mut config = ScenarioConfig::load(&common.config)?;
    config.apply(&Overrides { kernel, out: common.out.clone(), fock_cutoff: common.fock_cutoff, dt: common.dt });
    Ok(config)
}

fn execute(command: Command) -> lzdce::Result<()> {
    match command {
        Command::Run { common, kernel } => {
            let config = load(&common, kernel)?;
            let out = run(&config)?;
            let d = &out.trajectory.diagnostics;
            info!("{} steps, max trace error {:e}, min eigenvalue {:e}", d.steps, d.max_trace_error, d.min_eigenvalue);
            println!("{}", out.csv.display());
            println!("{}", out.sidecar.display());
        }
        Command::Compare { common, kernels } => {
            let config = load(&common, None)?;
            let (summary, _) = compare(&config, &kernels)?;
            for d in &summary.deviations {
                println!(
                    "{} vs {}: max |dn| {} max |dp_e| {}",
                    d.kernel,
                    summary.reference,
                    fmt9(d.max_abs_dev_mean_n),
                    fmt9(d.max_abs_dev_p_e)
                );
            }
        }
        Command::Scan { common, parameter, values, kernel } => {
            let config = load(&common, kernel)?;
            for p in sweep_scan(&config, parameter, &values)? {
                let max = p.max_mean_n.map(fmt9).unwrap_or_else(|| "-".into());
                println!("{parameter}={} {} max_mean_n={max}", p.value, p.status);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are config errors; exit code 2 is reserved for monitor aborts
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::MonitorAbort(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
