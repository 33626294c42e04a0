use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chiral_berry::cli_sweep::{
    parse_config, run_echo, run_surface, run_trajectory, run_validation, Mode, RunConfig,
};
use chiral_berry::Error;

#[derive(Parser)]
#[command(
    name = "chiral-berry",
    version,
    about = "Berry-phase simulations of the chiral qubit in spin triangles"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Δγ surface over (ħω, pℰ) as CSV.
    Surface(Common),
    /// Spin-echo sequence and interferometer readout.
    Echo(Common),
    /// Oracle suites; exit status 1 on any failure.
    Validate(Common),
    /// Dump one cycle's trajectory as CSV.
    Trajectory(Common),
}

#[derive(Args)]
struct Common {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted, `surface.csv` for surfaces).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid points verified by full propagation (surface only).
    #[arg(long)]
    check_points: Option<usize>,
}

fn load(common: &Common, mode: Mode) -> Result<RunConfig, Error> {
    let cfg = match &common.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = cfg.mode {
        if m != mode {
            return Err(Error::Config {
                path: common
                    .config
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
                line: 0,
                message: format!(
                    "config is for mode `{}`, command is `{}`",
                    m.name(),
                    mode.name()
                ),
            });
        }
    }
    Ok(cfg)
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Config { .. }
        | Error::Io { .. }
        | Error::Sequence { .. }
        | Error::InvalidParameter(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.verb {
        Verb::Surface(c) => {
            let cfg = load(&c, Mode::Surface)?;
            let out = c
                .out
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| PathBuf::from("surface.csv"));
            let n = c.check_points.unwrap_or(cfg.numeric_check_points);
            let rows = run_surface(&cfg, &out, n)?;
            let checked: Vec<_> = rows.iter().filter_map(|r| r.residual.zip(r.r)).collect();
            let failing = checked
                .iter()
                .filter(|(res, r)| *res > (5.0 * r).max(0.01))
                .count();
            eprintln!(
                "wrote {} rows to {} ({} checked, {} above tolerance)",
                rows.len(),
                out.display(),
                checked.len(),
                failing
            );
            Ok(if failing == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Verb::Echo(c) => {
            let cfg = load(&c, Mode::Echo)?;
            run_echo(&cfg, c.out.as_deref().or(cfg.out.as_deref()))?;
            Ok(ExitCode::SUCCESS)
        }
        Verb::Validate(c) => {
            let cfg = load(&c, Mode::Validate)?;
            let report = run_validation(&cfg);
            let text = report.to_text();
            match c.out.as_deref().or(cfg.out.as_deref()) {
                Some(p) => std::fs::write(p, &text).map_err(|e| Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?,
                None => print!("{text}"),
            }
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Verb::Trajectory(c) => {
            let cfg = load(&c, Mode::Trajectory)?;
            run_trajectory(&cfg, c.out.as_deref().or(cfg.out.as_deref()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
