use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use latentmpc::equipment::Formulation;
use latentmpc::optimizer::PlanMode;
use latentmpc_cli::{identify, report, simulate, synth, CliError, IdentifyArgs, ReportArgs, SimulateArgs, SynthArgs};

#[derive(Parser)]
#[command(name = "latentmpc", version, about = "Humidity-aware MPC for residential air conditioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationArg {
    Sensible,
    Latent,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cost,
    Limit,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the envelope model to a telemetry CSV.
    Identify {
        /// Telemetry CSV (timestamp, t_in, t_out, q_cool_kw, p_kw, rh_in, rh_out, ...).
        telemetry: PathBuf,
        #[arg(long, default_value = "identify_out")]
        out: PathBuf,
        /// Keep `ALPHA,R` instead of estimating; defaults to 0.77,0.42.
        #[arg(long, value_name = "ALPHA,R", num_args = 0..=1, default_missing_value = "0.77,0.42")]
        frozen_params: Option<String>,
        /// Slab temperature assumed by the circuit (°C).
        #[arg(long, default_value_t = 18.0)]
        t_m: f64,
        #[arg(long, default_value_t = 0.25)]
        validation_fraction: f64,
    },
    /// Run a manifest's scenario matrix.
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Overrides the manifest seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Keep only MPC scenarios of this formulation.
        #[arg(long, value_enum)]
        formulation: Option<FormulationArg>,
        /// Keep only MPC scenarios in this mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Build the report bundle for a results directory.
    Report {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the reference slope distributions for the savings interval.
        #[arg(long)]
        paper_constants: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
    /// Write synthetic benchmark telemetry from the simulated house.
    Synth {
        #[arg(long, default_value_t = 30)]
        days: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "hot_humid")]
        profile: String,
        #[arg(long, default_value = "telemetry.csv")]
        out: PathBuf,
    },
}

fn parse_pair(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Input(format!("--frozen-params expects ALPHA,R, got `{s}`"));
    let (a, r) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Identify { telemetry, out, frozen_params, t_m, validation_fraction } => {
            let frozen = frozen_params.as_deref().map(parse_pair).transpose()?;
            let fit = identify(&IdentifyArgs { telemetry, out: out.clone(), frozen, t_m, validation_fraction })?;
            println!("alpha = {:.4}, R = {:.4} °C/kW -> {}", fit.alpha, fit.r_eff, out.join("envelope_fit.json").display());
        }
        Command::Simulate { manifest, out, seed, formulation, mode } => {
            let args = SimulateArgs {
                manifest,
                out: out.clone(),
                seed,
                formulation: formulation.map(|f| match f {
                    FormulationArg::Sensible => Formulation::Sensible,
                    FormulationArg::Latent => Formulation::Latent,
                }),
                mode: mode.map(|m| match m {
                    ModeArg::Cost => PlanMode::Cost,
                    ModeArg::Limit => PlanMode::PowerLimit,
                }),
            };
            let comparison = simulate(&args)?;
            for c in &comparison.columns {
                println!(
                    "{:<24} {:>8.1} kWh  {:>6} kWh/°C  {:>6.1} min/day  {:>5.2} kW  PPD {:>5.2}",
                    c.label,
                    c.energy_kwh,
                    c.normalized_energy_kwh_per_c.map_or("n/a".into(), |v| format!("{v:.2}")),
                    c.violation_minutes_per_day,
                    c.violation_magnitude_kw,
                    c.mean_ppd
                );
            }
            println!("results in {}", out.display());
        }
        Command::Report { results, out, paper_constants, seed, samples } => {
            let r = report(&ReportArgs { results, out, paper_constants, seed, samples })?;
            for s in &r.savings {
                println!("{} vs {}: savings {:.1} % [{:.1}, {:.1}]", s.label, s.baseline, s.mean_pct, s.lower_pct, s.upper_pct);
            }
            for f in &r.footnotes {
                println!("note: {f}");
            }
        }
        Command::Synth { days, seed, profile, out } => {
            let n = synth(&SynthArgs { days, seed, profile, out: out.clone() })?;
            println!("wrote {n} records to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
