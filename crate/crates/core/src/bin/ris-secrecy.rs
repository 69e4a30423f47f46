use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ris_secrecy::bench::{
    aggregate, run_experiment, threads_from_env, write_csv, write_summary_csv, ExperimentConfig, Sweep, SweepAxis,
    THREADS_ENV,
};
use ris_secrecy::error::{Error, Result};
use ris_secrecy::metrics::HardwareProfile;
use ris_secrecy::validate::{run_suite, Suite};

#[derive(Parser)]
#[command(name = "ris-secrecy", version, about = "Secrecy-rate beamforming for RIS-aided links with impaired hardware")]
#[command(after_help = "Set RIS_SECRECY_THREADS to bound the number of worker threads.")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Output {
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-cell mean and 95% CI.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Every configured scheme and impairment pair at the base point.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the configured seed list with this one seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Secrecy rate against transmit power (default 0..50 dBm in 10 dB steps).
    SweepPmax {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Secrecy rate against RIS size (default M = 8, 16, 32).
    SweepM {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Oracle suites; all three unless one is named.
    Validate {
        #[arg(long, value_parser = parse_suite)]
        suite: Option<Suite>,
        /// Base config whose AO options are used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_suite(s: &str) -> std::result::Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn with_axis(mut cfg: ExperimentConfig, axis: SweepAxis) -> Result<ExperimentConfig> {
    match &cfg.sweep {
        Some(s) if s.axis != axis => {
            return Err(Error::Config(format!("config sweeps {:?}, this subcommand sweeps {axis:?}", s.axis)));
        }
        Some(_) => {}
        None => {
            cfg.sweep = Some(match axis {
                SweepAxis::PMaxDbm => Sweep::default_pmax(),
                SweepAxis::NElements => Sweep::default_m(),
            })
        }
    }
    if axis == SweepAxis::NElements && cfg.impairments.is_empty() {
        cfg.impairments = vec![
            HardwareProfile { mu_t: 0.01, mu_r: 0.01 },
            HardwareProfile { mu_t: 0.01, mu_r: 0.02 },
            HardwareProfile { mu_t: 0.02, mu_r: 0.01 },
        ];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(cfg: &ExperimentConfig, output: &Output) -> Result<()> {
    let rows = run_experiment(cfg, threads_from_env()?)?;
    match &output.out {
        Some(p) => write_csv(&rows, create(p)?)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv(&rows, &mut lock)?;
            lock.flush()?;
        }
    }
    if let Some(p) = &output.summary {
        write_summary_csv(&aggregate(&rows), create(p)?)?;
    }
    let failed = rows.iter().filter(|r| r.status.starts_with("failed")).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} runs failed; see the status column", rows.len());
    }
    Ok(())
}

fn create(p: &Path) -> Result<std::fs::File> {
    std::fs::File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { config, seed, output } => ExperimentConfig::load(&config).and_then(|mut cfg| {
            cfg.sweep = None;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            experiment(&cfg, &output)
        }),
        Cmd::SweepPmax { config, output } => ExperimentConfig::load(&config)
            .and_then(|c| with_axis(c, SweepAxis::PMaxDbm))
            .and_then(|c| experiment(&c, &output)),
        Cmd::SweepM { config, output } => ExperimentConfig::load(&config)
            .and_then(|c| with_axis(c, SweepAxis::NElements))
            .and_then(|c| experiment(&c, &output)),
        Cmd::Validate { suite, config } => {
            let opts = match config.map(|p| ExperimentConfig::load(&p)).transpose() {
                Ok(c) => c.map(|c| c.system.ao).unwrap_or_default(),
                Err(e) => return fail(&e),
            };
            let suites = suite.map_or(Suite::ALL.to_vec(), |s| vec![s]);
            let mut ok = true;
            for s in suites {
                match run_suite(s, &opts) {
                    Ok(rep) => {
                        println!("{rep}");
                        ok &= rep.pass();
                    }
                    Err(e) => return fail(&e),
                }
            }
            return if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if let Error::Config(_) = e {
        eprintln!("hint: config keys are system, sweep, schemes, seeds, impairments, record_runtime; {THREADS_ENV} sets threads");
    }
    ExitCode::from(2)
}
