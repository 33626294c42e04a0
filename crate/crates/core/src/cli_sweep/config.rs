//! Flat `key=value` run configuration.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::effective_model::SpinBranch;
use crate::error::{Error, Result};
use crate::params::{DeltaSoSource, ModelParams};
use crate::spin_full::extract_delta_so;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Surface,
    Echo,
    Validate,
    Trajectory,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Surface => "surface",
            Mode::Echo => "echo",
            Mode::Validate => "validate",
            Mode::Trajectory => "trajectory",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "surface" => Mode::Surface,
            "echo" => Mode::Echo,
            "validate" => Mode::Validate,
            "trajectory" => Mode::Trajectory,
            _ => return None,
        })
    }
}

/// Inclusive range sampled at `count` evenly spaced points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn value(&self, k: usize) -> f64 {
        if self.count == 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * k as f64 / (self.count - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// ħω / Δ_SO.
    pub homega: Axis,
    /// pℰ / Δ_SO.
    pub pe: Axis,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            homega: Axis {
                min: 0.0,
                max: 3.0,
                count: 61,
            },
            pe: Axis {
                min: 0.02,
                max: 3.0,
                count: 61,
            },
        }
    }
}

/// Cycle timing: explicit durations or ones derived from a target ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDefaults {
    pub t_ramp: Option<f64>,
    pub t_loop: Option<f64>,
    pub r_threshold: f64,
    pub dt: Option<f64>,
}

impl Default for ScheduleDefaults {
    fn default() -> Self {
        Self {
            t_ramp: None,
            t_loop: None,
            r_threshold: 0.005,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryModel {
    Effective,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub params: ModelParams,
    pub grid: Grid,
    pub schedule: ScheduleDefaults,
    pub out: Option<PathBuf>,
    pub numeric_check_points: usize,
    /// Spin block hosting the interferometer in echo runs.
    pub readout_block: SpinBranch,
    /// Finite-width pulses with this Rabi energy (meV) instead of ideal ones.
    pub pulse_rabi: Option<f64>,
    pub trajectory_model: TrajectoryModel,
    pub trajectory_lab_frame: bool,
    /// Initial ground label index for trajectory runs.
    pub initial_label: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: None,
            params: ModelParams::default(),
            grid: Grid::default(),
            schedule: ScheduleDefaults::default(),
            out: None,
            numeric_check_points: 8,
            readout_block: SpinBranch::Up,
            pulse_rabi: None,
            trajectory_model: TrajectoryModel::Effective,
            trajectory_lab_frame: false,
            initial_label: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "mode",
    "j_mev",
    "dz_mev",
    "delta_so_mev",
    "delta_j12_mev",
    "delta_j23_mev",
    "delta_j31_mev",
    "pe_mev",
    "p_enm",
    "field_kvcm",
    "homega_mev",
    "phi0_rad",
    "zeeman_mev",
    "g_par",
    "homega_over_dso_min",
    "homega_over_dso_max",
    "homega_count",
    "pe_over_dso_min",
    "pe_over_dso_max",
    "pe_count",
    "t_ramp_ps",
    "t_loop_ps",
    "dt_ps",
    "r_threshold",
    "out",
    "check_points",
    "readout_block",
    "pulse_rabi_mev",
    "trajectory_model",
    "trajectory_frame",
    "initial_label",
];

/// pℰ in meV from a dipole in e·nm and a field in kV/cm.
pub fn pe_from_dipole(p_enm: f64, field_kvcm: f64) -> f64 {
    // 1 e·nm × 1 kV/cm = 1e-9 m × 1e5 V/m eV = 1e-4 eV = 0.1 meV.
    0.1 * p_enm * field_kvcm
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, &path.display().to_string())
}

pub fn parse_config_str(text: &str, origin: &str) -> Result<RunConfig> {
    let err = |line: usize, message: String| Error::Config {
        path: origin.to_string(),
        line,
        message,
    };
    let mut entries: HashMap<&str, (usize, &str)> = HashMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected key=value, found `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(err(line_no, format!("unknown key `{k}`")));
        }
        if let Some((first, _)) = entries.get(k) {
            return Err(err(
                line_no,
                format!("duplicate key `{k}` (first set on line {first})"),
            ));
        }
        entries.insert(k, (line_no, v));
    }

    let num = |k: &str| -> Result<Option<f64>> {
        match entries.get(k) {
            None => Ok(None),
            Some(&(line, v)) => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| err(line, format!("`{k}`: `{v}` is not a number")))?;
                if x.is_finite() {
                    Ok(Some(x))
                } else {
                    Err(err(line, format!("`{k}` must be finite")))
                }
            }
        }
    };
    let count = |k: &str| -> Result<Option<usize>> {
        match entries.get(k) {
            None => Ok(None),
            Some(&(line, v)) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| err(line, format!("`{k}`: `{v}` is not a non-negative integer"))),
        }
    };
    let line_of = |k: &str| entries.get(k).map(|e| e.0).unwrap_or(0);
    let word = |k: &str| entries.get(k).map(|e| e.1);

    let mut cfg = RunConfig::default();
    if let Some(m) = word("mode") {
        cfg.mode = Some(
            Mode::parse(m).ok_or_else(|| err(line_of("mode"), format!("unknown mode `{m}`")))?,
        );
    }

    let p = &mut cfg.params;
    if let Some(x) = num("j_mev")? {
        p.j = x;
    }
    if let Some(x) = num("dz_mev")? {
        p.dz = x;
    }
    for (i, k) in ["delta_j12_mev", "delta_j23_mev", "delta_j31_mev"]
        .iter()
        .enumerate()
    {
        if let Some(x) = num(k)? {
            p.delta_j[i] = x;
        }
    }
    match (num("pe_mev")?, num("p_enm")?, num("field_kvcm")?) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(err(
                line_of("pe_mev"),
                "give either pe_mev or p_enm with field_kvcm, not both".into(),
            ))
        }
        (Some(x), None, None) => p.pe_amp = x,
        (None, Some(pd), Some(f)) => p.pe_amp = pe_from_dipole(pd, f),
        (None, Some(_), None) => {
            return Err(err(line_of("p_enm"), "p_enm needs field_kvcm".into()))
        }
        (None, None, Some(_)) => {
            return Err(err(line_of("field_kvcm"), "field_kvcm needs p_enm".into()))
        }
        (None, None, None) => {}
    }
    if let Some(x) = num("homega_mev")? {
        p.hbar_omega = x;
    }
    if let Some(x) = num("phi0_rad")? {
        p.phi0 = x;
    }
    if let Some(x) = num("zeeman_mev")? {
        p.zeeman_z = x;
    }
    if let Some(x) = num("g_par")? {
        p.g_par = x;
    }
    match num("delta_so_mev")? {
        Some(x) => {
            p.delta_so = x;
            p.delta_so_source = DeltaSoSource::User;
        }
        None if entries.contains_key("dz_mev") => {
            let split =
                extract_delta_so(p.j, p.dz).map_err(|e| err(line_of("dz_mev"), e.to_string()))?;
            p.delta_so = split.signed();
            p.delta_so_source = DeltaSoSource::Derived;
        }
        None => {}
    }
    p.validate().map_err(|e| err(0, e.to_string()))?;
    if p.pe_amp < 0.0 {
        return Err(err(line_of("pe_mev"), "pE must be non-negative".into()));
    }

    let g = &mut cfg.grid;
    for (axis, prefix) in [
        (&mut g.homega, "homega_over_dso"),
        (&mut g.pe, "pe_over_dso"),
    ] {
        if let Some(x) = num(&format!("{prefix}_min"))? {
            axis.min = x;
        }
        if let Some(x) = num(&format!("{prefix}_max"))? {
            axis.max = x;
        }
    }
    if let Some(n) = count("homega_count")? {
        g.homega.count = n;
    }
    if let Some(n) = count("pe_count")? {
        g.pe.count = n;
    }
    if g.homega.count == 0 || g.pe.count == 0 {
        return Err(err(
            line_of("homega_count").max(line_of("pe_count")),
            "grid counts must be at least 1".into(),
        ));
    }
    if g.pe.min < 0.0 || g.pe.max < g.pe.min || g.homega.max < g.homega.min {
        return Err(err(
            line_of("pe_over_dso_min").max(line_of("homega_over_dso_min")),
            "invalid grid range".into(),
        ));
    }

    let s = &mut cfg.schedule;
    s.t_ramp = num("t_ramp_ps")?;
    s.t_loop = num("t_loop_ps")?;
    s.dt = num("dt_ps")?;
    if let Some(r) = num("r_threshold")? {
        s.r_threshold = r;
    }
    for (k, v) in [
        ("t_ramp_ps", s.t_ramp),
        ("t_loop_ps", s.t_loop),
        ("dt_ps", s.dt),
        ("r_threshold", Some(s.r_threshold)),
    ] {
        if v.is_some_and(|x| x <= 0.0) {
            return Err(err(line_of(k), format!("`{k}` must be positive")));
        }
    }
    if s.t_ramp.is_some() != s.t_loop.is_some() {
        return Err(err(
            line_of("t_ramp_ps").max(line_of("t_loop_ps")),
            "set both t_ramp_ps and t_loop_ps or neither".into(),
        ));
    }

    cfg.out = word("out").map(PathBuf::from);
    if let Some(n) = count("check_points")? {
        cfg.numeric_check_points = n;
    }
    if let Some(b) = word("readout_block") {
        cfg.readout_block = match b {
            "up" => SpinBranch::Up,
            "down" => SpinBranch::Down,
            other => {
                return Err(err(
                    line_of("readout_block"),
                    format!("readout_block must be up or down, found `{other}`"),
                ))
            }
        };
    }
    if let Some(x) = num("pulse_rabi_mev")? {
        if x <= 0.0 {
            return Err(err(
                line_of("pulse_rabi_mev"),
                "pulse_rabi_mev must be positive".into(),
            ));
        }
        cfg.pulse_rabi = Some(x);
    }
    if let Some(m) = word("trajectory_model") {
        cfg.trajectory_model = match m {
            "effective" => TrajectoryModel::Effective,
            "full" => TrajectoryModel::Full,
            other => {
                return Err(err(
                    line_of("trajectory_model"),
                    format!("unknown model `{other}`"),
                ))
            }
        };
    }
    if let Some(f) = word("trajectory_frame") {
        cfg.trajectory_lab_frame = match f {
            "rotating" => false,
            "lab" => true,
            other => {
                return Err(err(
                    line_of("trajectory_frame"),
                    format!("unknown frame `{other}`"),
                ))
            }
        };
    }
    if let Some(n) = count("initial_label")? {
        if n > 3 {
            return Err(err(
                line_of("initial_label"),
                "initial_label must be 0..=3".into(),
            ));
        }
        cfg.initial_label = n;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_units_and_defaults() {
        let cfg =
            parse_config_str("j_mev=1.0\n# comment\npe_mev = 0.02  # trailing\n", "t").unwrap();
        assert_eq!(cfg.params.j, 1.0);
        assert_eq!(cfg.params.pe_amp, 0.02);
        assert_eq!(cfg.grid, Grid::default());
        assert_eq!(cfg.numeric_check_points, 8);
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let e = parse_config_str("j_mev=1\n\nj_mev=2\n", "cfg")
            .unwrap_err()
            .to_string();
        assert!(e.contains("cfg:3"), "{e}");
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn unknown_key_and_bad_numbers_report_line() {
        let e = parse_config_str("j_mev=1\nfoo=2\n", "c")
            .unwrap_err()
            .to_string();
        assert!(e.contains("c:2") && e.contains("foo"), "{e}");
        let e = parse_config_str("pe_mev=inf\n", "c")
            .unwrap_err()
            .to_string();
        assert!(e.contains("c:1"), "{e}");
        let e = parse_config_str("pe_mev=NaN\n", "c")
            .unwrap_err()
            .to_string();
        assert!(e.contains("c:1"), "{e}");
        let e = parse_config_str("just text\n", "c")
            .unwrap_err()
            .to_string();
        assert!(e.contains("c:1"), "{e}");
    }

    #[test]
    fn delta_so_derived_from_dz() {
        let cfg = parse_config_str("j_mev=1\ndz_mev=0.05\n", "c").unwrap();
        assert_eq!(cfg.params.delta_so_source, DeltaSoSource::Derived);
        let direct = extract_delta_so(1.0, 0.05).unwrap().signed();
        assert!((cfg.params.delta_so - direct).abs() < 1e-12);
        assert!((cfg.params.delta_so - 3f64.sqrt() * 0.05).abs() < 1e-10);
    }

    #[test]
    fn dipole_times_field() {
        let cfg = parse_config_str("p_enm=0.5\nfield_kvcm=100\n", "c").unwrap();
        assert!((cfg.params.pe_amp - 5.0).abs() < 1e-12);
        assert!(parse_config_str("p_enm=0.5\n", "c").is_err());
        assert!(parse_config_str("p_enm=0.5\nfield_kvcm=1\npe_mev=1\n", "c").is_err());
    }

    #[test]
    fn grid_and_schedule_checks() {
        assert!(parse_config_str("pe_count=0\n", "c").is_err());
        assert!(parse_config_str("pe_over_dso_min=-1\n", "c").is_err());
        assert!(parse_config_str("t_ramp_ps=10\n", "c").is_err());
        let cfg = parse_config_str("t_ramp_ps=10\nt_loop_ps=20\nhomega_count=3\n", "c").unwrap();
        assert_eq!(cfg.schedule.t_loop, Some(20.0));
        assert_eq!(cfg.grid.homega.count, 3);
        assert_eq!(cfg.grid.homega.value(2), 3.0);
    }

    #[test]
    fn mode_and_choices() {
        let cfg = parse_config_str(
            "mode=echo\nreadout_block=down\ntrajectory_model=full\n",
            "c",
        )
        .unwrap();
        assert_eq!(cfg.mode, Some(Mode::Echo));
        assert_eq!(cfg.readout_block, SpinBranch::Down);
        assert_eq!(cfg.trajectory_model, TrajectoryModel::Full);
        assert!(parse_config_str("mode=plot\n", "c").is_err());
    }
}
