use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use skinheal::cli::{error_json, parse_complex, run_subcommand, Command, Overrides};
use skinheal::config::load_config;
use skinheal::Error;

/// Spectra, generalized Brillouin zones and self-healing runs for 1D
/// non-Hermitian lattices.
#[derive(Parser)]
#[command(name = "skinheal", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "SKINHEAL_OUT", default_value = "out")]
    out: PathBuf,

    #[arg(long, global = true)]
    dt: Option<f64>,

    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,

    /// Reserved; all computations are deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for grid scans.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Initial skin-mode energy as `re,im`.
    #[arg(long, global = true, value_parser = parse_complex, allow_hyphen_values = true)]
    e0: Option<Complex64>,
}

#[derive(Args)]
struct Target {
    /// Run configuration (alternative to --config).
    #[arg(value_name = "CONFIG")]
    file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// PBC spectrum: pbc.csv
    Spectrum(Target),
    /// GBZ and OBC spectrum: gbz.csv
    Gbz(Target),
    /// Winding numbers on the scan grid: winding.csv
    WindingMap(Target),
    /// Self-healing threshold: threshold.json, gbz.csv
    Threshold(Target),
    /// Skin mode at E0: mode.csv, mode.json
    SkinMode(Target),
    /// Time evolution: trace.csv, snapshots.csv, deviation.csv
    Evolve(Target),
    /// Theory vs simulation: verdict.json plus threshold and trace
    HealTest(Target),
}

fn run(cli: Cli) -> skinheal::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let (cmd, target) = match cli.cmd {
        Cmd::Spectrum(t) => (Command::Spectrum, t),
        Cmd::Gbz(t) => (Command::Gbz, t),
        Cmd::WindingMap(t) => (Command::WindingMap, t),
        Cmd::Threshold(t) => (Command::Threshold, t),
        Cmd::SkinMode(t) => (Command::SkinMode, t),
        Cmd::Evolve(t) => (Command::Evolve, t),
        Cmd::HealTest(t) => (Command::HealTest, t),
    };
    let path = target.file.or(cli.config).ok_or_else(|| Error::Config {
        path: "--config".into(),
        message: format!("`{}` needs a config file", cmd.name()),
    })?;
    let mut cfg = load_config(&path)?;
    Overrides {
        dt: cli.dt,
        t_end: cli.t_end,
        e0: cli.e0,
    }
    .apply(&mut cfg)?;
    for f in run_subcommand(cmd, &cfg, &cli.out)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
