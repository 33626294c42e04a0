//! Batch drivers: the Δγ(ω, pℰ) surface, echo runs, validation suites and
//! trajectory dumps, all configured by a flat key=value file.

mod config;
mod surface;
mod validate;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub use config::{
    parse_config, parse_config_str, pe_from_dipole, Axis, Grid, Mode, RunConfig, ScheduleDefaults,
    TrajectoryModel,
};
pub use surface::{
    halton, run_surface, run_surface_rows, select_check_points, write_surface_csv, SurfaceRow,
    SURFACE_HEADER,
};
pub use validate::{run_validation, SuiteResult, ValidationReport};

use crate::echo_sequencer::{canonical_echo, interference_probabilities, readout_for, PulseMode};
use crate::effective_model::{EffectiveModel, Frame, RampShape};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::propagation::{
    basis_state, make_cycle, propagate, CycleSpec, EffectiveDrive, FullDrive, HamiltonianProvider,
};
use crate::spin_full::ground_quadruplet;

/// Cycle at (pℰ, ħω) timed by the config: explicit durations if given,
/// otherwise durations reaching the configured adiabaticity ratio.
pub fn cycle_for(
    cfg: &RunConfig,
    params: &ModelParams,
    pe: f64,
    hbar_omega: f64,
) -> Result<CycleSpec> {
    let mut spec = match (cfg.schedule.t_ramp, cfg.schedule.t_loop) {
        (Some(t_ramp), Some(t_loop)) => CycleSpec::new(pe, hbar_omega, t_ramp, t_loop),
        _ => {
            let model = EffectiveModel::new(params)?;
            CycleSpec::for_adiabaticity(
                &model,
                pe,
                hbar_omega,
                cfg.schedule.r_threshold,
                RampShape::Smoothstep,
            )?
        }
    };
    spec.dt = cfg.schedule.dt;
    Ok(spec)
}

/// Open `path` for writing, failing before any computation if unreachable.
pub fn create_output(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(create_output(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_all(w: &mut dyn Write, text: &str, out: Option<&Path>) -> Result<()> {
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| {
            Error::io(
                out.map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("<stdout>")),
                e,
            )
        })
}

/// Echo plus interferometer readout at the configured point; returns the
/// key=value record.
pub fn run_echo(cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    let mut w = sink(out)?;
    let params = &cfg.params;
    let spec = cycle_for(cfg, params, params.pe_amp, params.hbar_omega)?;
    let mut seq = canonical_echo(&spec, params)?;
    if let Some(rabi_energy) = cfg.pulse_rabi {
        seq.pulse_mode = PulseMode::FiniteWidth { rabi_energy };
    }
    let readout = readout_for(&seq, cfg.readout_block)?;
    let echo = &readout.echo;
    let fmt = crate::propagation::fmt_num;
    let mut text = String::new();
    text.push_str(&format!(
        "t_ramp_ps={}\nt_loop_ps={}\n",
        fmt(spec.t_ramp),
        fmt(spec.t_loop)
    ));
    if let Some(rep) = &echo.report {
        text.push_str(&rep.to_key_value());
    }
    let (pp, pm) = interference_probabilities(echo.delta_gamma_numeric);
    let lines = [
        ("echo_delta_gamma_numeric", echo.delta_gamma_numeric),
        ("echo_delta_gamma_analytic", echo.delta_gamma_analytic),
        ("echo_delta_gamma_expected", echo.delta_gamma_expected),
        ("echo_block_mismatch", echo.block_mismatch),
        ("echo_max_offdiag", echo.max_offdiag),
        ("echo_unitarity_residual", echo.unitarity_residual),
        (
            "echo_dynamical_residual",
            echo.dynamical_residual.unwrap_or(f64::NAN),
        ),
        ("echo_r", echo.r),
        ("readout_p_plus", readout.p_plus),
        ("readout_p_minus", readout.p_minus),
        ("predicted_p_plus", pp),
        ("predicted_p_minus", pm),
    ];
    for (k, v) in lines {
        text.push_str(&format!("{k}={}\n", fmt(v)));
    }
    for f in &echo.flags {
        text.push_str(&format!("flag={f}\n"));
    }
    write_all(&mut w, &text, out)?;
    Ok(text)
}

/// Propagate one cycle from the configured ground label and dump the CSV.
pub fn run_trajectory(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    let params = &cfg.params;
    let frame = if cfg.trajectory_lab_frame {
        Frame::Lab
    } else {
        Frame::Rotating
    };
    let spec = cycle_for(cfg, params, params.pe_amp, params.hbar_omega)?;
    let schedule = make_cycle(&spec, &EffectiveModel::new(params)?)?;
    let (traj, obs) = match cfg.trajectory_model {
        TrajectoryModel::Effective => {
            let drive = EffectiveDrive::new(params, frame)?;
            (
                propagate(&drive, &schedule, &basis_state(cfg.initial_label))?,
                drive.chirality_observables(),
            )
        }
        TrajectoryModel::Full => {
            let full = params.with_consistent_dz()?;
            let drive = FullDrive::new(&full, frame)?;
            let psi0 = ground_quadruplet().states[cfg.initial_label].clone();
            (
                propagate(&drive, &schedule, &psi0)?,
                drive.chirality_observables(),
            )
        }
    };
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("<stdout>"));
    traj.write_csv(&mut w, &obs)
        .map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
