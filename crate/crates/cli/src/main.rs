use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use deltashell::Error;

mod config;
mod output;
mod pipelines;

use config::{Command, Overrides, RunConfig};

/// Delta-shell pseudopotential spectra of atom pairs in displaced traps.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

const CONFIG_ERROR: u8 = 2;
const NON_CONVERGENCE: u8 = 3;
const INVARIANT_FAILURE: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence(_)
        | Error::PrecisionLoss(_)
        | Error::Pole { .. }
        | Error::Node { .. }
        | Error::Indeterminate(_) => NON_CONVERGENCE,
        Error::Invariant(_) | Error::NonRealSpectrum { .. } | Error::Consistency(_) => INVARIANT_FAILURE,
        _ => CONFIG_ERROR,
    }
}

fn threads() -> Result<Option<usize>, Error> {
    match std::env::var("DELTASHELL_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("DELTASHELL_THREADS = {v:?} is not a count"))),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let resolved = threads()
        .and_then(deltashell::configure_threads)
        .and_then(|_| match &cli.config {
            Some(p) => Overrides::from_file(p),
            None => Ok(Overrides::default()),
        })
        .and_then(|file| RunConfig::resolve(cli.command, cli.overrides.over(file)));
    let cfg = match resolved {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let tol = pipelines::Tolerances::default();
    let result = pipelines::run(&cfg, &tol).and_then(|files| output::write_all(&cfg, &tol, &files));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            if code == NON_CONVERGENCE {
                if let Err(w) = output::write_diagnostic(&cfg, &e) {
                    eprintln!("error: could not write diagnostic: {w}");
                }
            }
            ExitCode::from(code)
        }
    }
}
