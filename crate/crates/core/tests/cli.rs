use std::fs;
use std::path::Path;
use std::process::Command;

use chiral_berry::cli_sweep::{
    parse_config, run_echo, run_surface, run_trajectory, run_validation, SURFACE_HEADER,
};
use chiral_berry::Error;

const BIN: &str = env!("CARGO_BIN_EXE_chiral-berry");

const SMALL_SURFACE: &str = "\
# coarse grid
mode = surface
delta_so_mev = 0.05
homega_over_dso_min = 0
homega_over_dso_max = 2
homega_count = 5
pe_over_dso_min = 0.1
pe_over_dso_max = 2
pe_count = 4
r_threshold = 0.02
";

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn surface_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&write(dir.path(), "s.cfg", SMALL_SURFACE)).unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let rows = run_surface(&cfg, &a, 3).unwrap();
    run_surface(&cfg, &b, 3).unwrap();
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], SURFACE_HEADER);
    assert_eq!(lines.len(), 1 + 20);
    assert_eq!(rows.iter().filter(|r| r.residual.is_some()).count(), 3);
    for r in rows.iter().filter_map(|r| r.residual.zip(r.r)) {
        assert!(r.0 <= (5.0 * r.1).max(0.01), "{r:?}");
    }
}

#[test]
fn unreachable_output_fails_before_work() {
    let cfg = chiral_berry::cli_sweep::RunConfig::default();
    let err = run_surface(&cfg, Path::new("/nonexistent/dir/out.csv"), 0).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn validation_default_passes_and_coarse_step_fails() {
    let cfg = chiral_berry::cli_sweep::parse_config_str("r_threshold=0.01\n", "inline").unwrap();
    let report = run_validation(&cfg);
    assert!(report.passed(), "{}", report.to_text());
    assert!(report.to_text().ends_with("overall=PASS\n"));

    let coarse =
        chiral_berry::cli_sweep::parse_config_str("r_threshold=0.01\ndt_ps=50\n", "inline")
            .unwrap();
    let report = run_validation(&coarse);
    assert!(!report.passed());
    assert!(report.to_text().contains("status=FAIL"));
}

#[test]
fn echo_record_is_key_value() {
    let cfg = chiral_berry::cli_sweep::parse_config_str(
        "mode=echo\nhomega_mev=0.01\nr_threshold=0.01\n",
        "inline",
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("echo.txt");
    let text = run_echo(&cfg, Some(&out)).unwrap();
    assert_eq!(text, fs::read_to_string(&out).unwrap());
    let get = |k: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{k}=")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((get("echo_delta_gamma_numeric") - get("echo_delta_gamma_analytic")).abs() < 0.02);
    assert!((get("readout_p_plus") - get("predicted_p_plus")).abs() < 0.01);
    assert!(get("echo_max_offdiag") < 1e-3);
}

#[test]
fn trajectory_csv_shapes() {
    let dir = tempfile::tempdir().unwrap();
    for (model, width) in [("effective", 4), ("full", 8)] {
        let cfg = chiral_berry::cli_sweep::parse_config_str(
            &format!(
                "trajectory_model={model}\nt_ramp_ps=50\nt_loop_ps=100\ndt_ps=1\ninitial_label=2\n"
            ),
            "inline",
        )
        .unwrap();
        let out = dir.path().join(format!("{model}.csv"));
        run_trajectory(&cfg, Some(&out)).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        let header = text.lines().next().unwrap();
        let cols = header.split(',').count();
        assert_eq!(cols, 1 + 2 * width + 4, "{header}");
        assert!(text.lines().skip(1).all(|l| l.split(',').count() == cols));
        assert!(text.lines().count() > 200);
    }
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(BIN).args(["validate"]).output().unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(String::from_utf8_lossy(&ok.stdout).contains("overall=PASS"));

    let bad_key = write(dir.path(), "bad.cfg", "mode=validate\nflux=3\n");
    let out = Command::new(BIN)
        .args(["validate", "--config"])
        .arg(&bad_key)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flux"));

    let wrong_mode = write(dir.path(), "mode.cfg", "mode=surface\n");
    let out = Command::new(BIN)
        .args(["echo", "--config"])
        .arg(&wrong_mode)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let coarse = write(dir.path(), "coarse.cfg", "dt_ps=50\n");
    let out = Command::new(BIN)
        .args(["validate", "--config"])
        .arg(&coarse)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let surface = write(dir.path(), "s.cfg", SMALL_SURFACE);
    let csv = dir.path().join("surface.csv");
    let out = Command::new(BIN)
        .args(["surface", "--check-points", "2", "--config"])
        .arg(&surface)
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 21);
}
