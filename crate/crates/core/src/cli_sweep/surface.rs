//! The analytic Δγ surface with propagated spot checks.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::{create_output, cycle_for, RunConfig};
use crate::berry_engine::delta_gamma;
use crate::echo_sequencer::{canonical_echo, execute};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::propagation::fmt_num;

pub const SURFACE_HEADER: &str =
    "homega_over_dso,pe_over_dso,delta_gamma_analytic,delta_gamma_numeric,r,residual";

/// Largest ħω/Δ_SO used for spot checks. Above the resonance the basis state
/// (+1, +½) starts anti-aligned with its Rabi vector and the echo realizes a
/// different phase than the closed form; see `berry_engine::delta_gamma_echo`.
pub const CHECK_HOMEGA_LIMIT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceRow {
    pub homega_over_dso: f64,
    pub pe_over_dso: f64,
    pub delta_gamma_analytic: f64,
    pub delta_gamma_numeric: Option<f64>,
    pub r: Option<f64>,
    pub residual: Option<f64>,
}

impl SurfaceRow {
    pub fn csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            fmt_num(self.homega_over_dso),
            fmt_num(self.pe_over_dso),
            fmt_num(self.delta_gamma_analytic),
            opt(self.delta_gamma_numeric),
            opt(self.r),
            opt(self.residual)
        )
    }
}

/// k-th point (k ≥ 1) of the van der Corput sequence in `base`.
pub fn halton(mut k: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut x = 0.0;
    while k > 0 {
        f /= base as f64;
        x += f * (k % base) as f64;
        k /= base;
    }
    x
}

/// Up to `n` distinct grid indices (i_ω, i_pℰ) picked by a 2-3 Halton
/// sequence, restricted to ħω/Δ_SO ≤ [`CHECK_HOMEGA_LIMIT`].
pub fn select_check_points(cfg: &RunConfig, n: usize) -> Vec<(usize, usize)> {
    let (hw, pe) = (&cfg.grid.homega, &cfg.grid.pe);
    let eligible: Vec<usize> = (0..hw.count)
        .filter(|&i| hw.value(i).abs() <= CHECK_HOMEGA_LIMIT)
        .collect();
    if eligible.is_empty() || n == 0 {
        return Vec::new();
    }
    let capacity = eligible.len() * pe.count;
    let mut picked = Vec::new();
    let mut k = 1;
    while picked.len() < n.min(capacity) && k < 64 * capacity + 64 {
        let a = ((halton(k, 2) * eligible.len() as f64) as usize).min(eligible.len() - 1);
        let b = ((halton(k, 3) * pe.count as f64) as usize).min(pe.count - 1);
        let point = (eligible[a], b);
        if !picked.contains(&point) {
            picked.push(point);
        }
        k += 1;
    }
    picked
}

fn point_params(base: &ModelParams, homega_over_dso: f64) -> ModelParams {
    ModelParams {
        hbar_omega: homega_over_dso * base.delta_so,
        ..base.clone()
    }
}

/// Propagated echo Δγ at one point, with the cycle's adiabaticity ratio.
fn numeric_point(cfg: &RunConfig, homega_over_dso: f64, pe_over_dso: f64) -> Result<(f64, f64)> {
    let params = point_params(&cfg.params, homega_over_dso);
    let pe = pe_over_dso * params.delta_so;
    let spec = cycle_for(cfg, &params, pe, params.hbar_omega)?;
    let res = execute(&canonical_echo(&spec, &params)?)?;
    Ok((res.delta_gamma_numeric, res.r))
}

/// Evaluate the surface (row-major, ω outer) with `check_points` propagated
/// spot checks.
pub fn run_surface_rows(cfg: &RunConfig, check_points: usize) -> Result<Vec<SurfaceRow>> {
    let base = &cfg.params;
    if base.delta_so == 0.0 {
        return Err(Error::InvalidParameter(
            "surface axes are in units of delta_so, which is zero".into(),
        ));
    }
    let (hw, pe) = (cfg.grid.homega, cfg.grid.pe);
    let mut rows: Vec<SurfaceRow> = (0..hw.count * pe.count)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / pe.count, idx % pe.count);
            let (x, y) = (hw.value(i), pe.value(j));
            let params = point_params(base, x);
            SurfaceRow {
                homega_over_dso: x,
                pe_over_dso: y,
                delta_gamma_analytic: delta_gamma(&params, y * base.delta_so).value,
                delta_gamma_numeric: None,
                r: None,
                residual: None,
            }
        })
        .collect();

    let checks = select_check_points(cfg, check_points);
    let results: Vec<Result<(usize, f64, f64)>> = checks
        .par_iter()
        .map(|&(i, j)| {
            let idx = i * pe.count + j;
            let (num, r) = numeric_point(cfg, hw.value(i), pe.value(j))?;
            Ok((idx, num, r))
        })
        .collect();
    for res in results {
        let (idx, num, r) = res?;
        let row = &mut rows[idx];
        row.delta_gamma_numeric = Some(num);
        row.r = Some(r);
        row.residual = Some((num - row.delta_gamma_analytic).abs());
    }
    Ok(rows)
}

pub fn write_surface_csv<W: Write>(mut w: W, rows: &[SurfaceRow]) -> std::io::Result<()> {
    writeln!(w, "{SURFACE_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.csv())?;
    }
    w.flush()
}

/// Surface CSV to `out`; the file is created before any computation.
pub fn run_surface(cfg: &RunConfig, out: &Path, check_points: usize) -> Result<Vec<SurfaceRow>> {
    let file = create_output(out)?;
    let rows = run_surface_rows(cfg, check_points)?;
    write_surface_csv(file, &rows).map_err(|e| Error::io(out, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli_sweep::parse_config_str;

    #[test]
    fn halton_first_points() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert_eq!(halton(3, 2), 0.75);
        assert!((halton(1, 3) - 1.0 / 3.0).abs() < 1e-15);
        assert!((halton(4, 3) - 1.0 / 9.0 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn check_points_are_distinct_and_below_resonance() {
        let cfg = RunConfig::default();
        let pts = select_check_points(&cfg, 12);
        assert_eq!(pts.len(), 12);
        for (k, p) in pts.iter().enumerate() {
            assert!(cfg.grid.homega.value(p.0) <= CHECK_HOMEGA_LIMIT);
            assert!(!pts[..k].contains(p));
        }
        // A grid that lies entirely above the resonance has no eligible points.
        let cfg = parse_config_str("homega_over_dso_min=1.5\n", "c").unwrap();
        assert!(select_check_points(&cfg, 4).is_empty());
    }

    #[test]
    fn analytic_rows_are_ordered_and_counted() {
        let cfg = parse_config_str("homega_count=4\npe_count=3\n", "c").unwrap();
        let rows = run_surface_rows(&cfg, 0).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[1].homega_over_dso, 0.0);
        assert_eq!(rows[3].homega_over_dso, 1.0);
        assert!(rows.iter().all(
            |r| r.delta_gamma_analytic > 0.0 && r.delta_gamma_analytic <= std::f64::consts::TAU
        ));
        assert!(rows[0].csv().ends_with(",,,"));
    }
}
