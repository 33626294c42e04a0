//! Acceptance criteria. Prints one `criterion N: PASS|FAIL` line each and
//! exits non-zero when any criterion is not met.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chiral_berry::berry_engine::{
    cycle_phase_report, delta_gamma, delta_gamma_adiabatic, invert_ratio,
};
use chiral_berry::cli_sweep::{run_surface_rows, RunConfig};
use chiral_berry::echo_sequencer::{
    canonical_echo, interference_probabilities, readout_for, Readout,
};
use chiral_berry::effective_model::{EffectiveModel, Frame, RampShape, SpinBranch};
use chiral_berry::linalg::{c, max_abs, wrap_pi, CVector};
use chiral_berry::propagation::{
    fidelity, make_cycle, propagate, CycleSpec, EffectiveDrive, FullDrive,
};
use chiral_berry::spin_full::{
    build_chirality_operators, build_hamiltonian, chirality_algebra_residual, ground_quadruplet,
};
use chiral_berry::ModelParams;

const SPECTRUM_TOL: f64 = 1e-10;
const SPECTRUM_TIME: Duration = Duration::from_secs(1);
const ALGEBRA_TOL: f64 = 1e-12;
const FIDELITY_TOL: f64 = 1e-4;
const EQUIVALENCE_SETS: usize = 20;
const EQUIVALENCE_TIME: Duration = Duration::from_secs(60);
const BERRY_TOL: f64 = 0.01;
const BERRY_R: f64 = 0.002;
const BERRY_TIME: Duration = Duration::from_secs(60);
const OFFDIAG_TOL: f64 = 1e-3;
const ECHO_PHASE_TOL: f64 = 0.02;
const DYNAMICAL_TOL: f64 = 0.02;
const ECHO_R: f64 = 0.005;
const READOUT_TOL: f64 = 0.01;
const READOUT_SUM_TOL: f64 = 1e-9;
const SURFACE_TOL: f64 = 1e-12;
const SURFACE_TIME: Duration = Duration::from_secs(5);
const INVERSION_TOL: f64 = 1e-10;
const INVERSION_POINTS: usize = 100;

type Outcome = (bool, String);

fn criterion_1_spectrum() -> Outcome {
    let start = Instant::now();
    let params = ModelParams {
        j: 1.0,
        dz: 0.0,
        ..ModelParams::default()
    };
    let h = build_hamiltonian(&params).entries;
    let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let residual = ev
        .iter()
        .enumerate()
        .map(|(k, e)| (e - if k < 4 { -0.75 } else { 0.75 }).abs())
        .fold(0.0, f64::max);
    let gap = ev[4] - ev[3];
    let elapsed = start.elapsed();
    (
        residual <= SPECTRUM_TOL && (gap - 1.5).abs() <= SPECTRUM_TOL && elapsed < SPECTRUM_TIME,
        format!("max eigenvalue error {residual:.2e} meV, gap {gap:.12} meV, {elapsed:.2?}"),
    )
}

fn criterion_2_chirality_algebra() -> Outcome {
    let chir = build_chirality_operators();
    let gs = ground_quadruplet();
    let algebra = chirality_algebra_residual(&chir, &gs);
    let q = gs.complement_projector();
    let annihilate = max_abs(&(&chir.x * &q)).max(max_abs(&(&chir.y * &q)));
    (
        algebra <= ALGEBRA_TOL && annihilate <= ALGEBRA_TOL,
        format!("commutators {algebra:.2e}, quartet {annihilate:.2e}"),
    )
}

fn random_ground_state(rng: &mut impl Rng) -> CVector {
    let v = CVector::from_fn(4, |_, _| {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let n = v.norm();
    v.unscale(n)
}

fn criterion_3_full_vs_effective() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut worst: f64 = 0.0;
    for _ in 0..EQUIVALENCE_SETS {
        let j: f64 = rng.random_range(0.5..2.0);
        let dso: f64 = rng.random_range(0.02..0.1) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let gap = 1.5 * j;
        let pe = rng.random_range(0.2..1.5) * dso.abs();
        assert!(pe <= 0.1 * gap);
        let params = ModelParams {
            j,
            delta_so: dso,
            hbar_omega: rng.random_range(0.0..0.8) * dso.abs(),
            phi0: rng.random_range(0.0..TAU),
            zeeman_z: rng.random_range(-0.02..0.02),
            delta_j: std::array::from_fn(|_| rng.random_range(-0.005..0.005)),
            pe_amp: pe,
            ..ModelParams::default()
        }
        .with_consistent_dz()
        .unwrap();
        let model = EffectiveModel::new(&params).unwrap();
        let spec =
            CycleSpec::for_adiabaticity(&model, pe, params.hbar_omega, 0.02, RampShape::Smoothstep)
                .unwrap();
        let schedule = make_cycle(&spec, &model).unwrap();
        let psi0 = random_ground_state(&mut rng);
        let gs = ground_quadruplet();
        let eff = propagate(
            &EffectiveDrive::new(&params, Frame::Rotating).unwrap(),
            &schedule,
            &psi0,
        )
        .unwrap();
        let full = propagate(
            &FullDrive::new(&params, Frame::Rotating).unwrap(),
            &schedule,
            &gs.lift(&psi0),
        )
        .unwrap();
        let f = fidelity(eff.final_state(), &gs.restrict(full.final_state()));
        worst = worst.max(1.0 - f);
    }
    let elapsed = start.elapsed();
    (
        worst <= FIDELITY_TOL && elapsed < EQUIVALENCE_TIME,
        format!("{EQUIVALENCE_SETS} sets, worst 1-F {worst:.2e}, {elapsed:.2?}"),
    )
}

fn criterion_4_berry_phase() -> Outcome {
    let start = Instant::now();
    let params = ModelParams {
        delta_so: 0.05,
        hbar_omega: 0.0,
        pe_amp: 0.05,
        ..ModelParams::default()
    };
    let model = EffectiveModel::new(&params).unwrap();
    let spec =
        CycleSpec::for_adiabaticity(&model, 0.05, 0.0, BERRY_R, RampShape::Smoothstep).unwrap();
    let rep = cycle_phase_report(&params, &spec).unwrap();
    let expected = -PI * (1.0 - FRAC_1_SQRT_2);
    let parallel = (rep.gamma_numeric[0] - expected).abs();
    let anti = (rep.gamma_numeric[1] + expected).abs();
    let routes = (0..4)
        .map(|i| wrap_pi(rep.gamma_numeric[i] - rep.gamma_wilson[i]).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    (rep.adiabaticity_r <= 0.01
            && parallel <= BERRY_TOL
            && anti <= BERRY_TOL
            && routes <= BERRY_TOL
            && elapsed < BERRY_TIME,
        format!(
            "r={:.2e} gamma(+1,+1/2)={:.6} (target {expected:.6}) gamma(-1,+1/2)={:.6} wilson gap {routes:.2e}, {elapsed:.2?}",
            rep.adiabaticity_r, rep.gamma_numeric[0], rep.gamma_numeric[1]
        ),
    )
}

/// (ħω/Δ_SO, pℰ/Δ_SO), all below the resonance.
const ECHO_POINTS: [(f64, f64); 5] = [
    (0.0, 1.0),
    (0.0, 1.732_050_807_568_877_2),
    (0.5, 1.0),
    (0.3, 0.5),
    (0.7, 1.5),
];

struct EchoPoint {
    params: ModelParams,
    pe: f64,
    readout: Readout,
}

fn echo_points() -> &'static [EchoPoint] {
    static CELL: OnceLock<Vec<EchoPoint>> = OnceLock::new();
    CELL.get_or_init(|| {
        use rayon::prelude::*;
        ECHO_POINTS
            .par_iter()
            .map(|&(w, p)| {
                let params = ModelParams {
                    delta_so: 0.05,
                    hbar_omega: w * 0.05,
                    ..ModelParams::default()
                };
                let pe = p * 0.05;
                let model = EffectiveModel::new(&params).unwrap();
                let spec = CycleSpec::for_adiabaticity(
                    &model,
                    pe,
                    params.hbar_omega,
                    ECHO_R,
                    RampShape::Smoothstep,
                )
                .unwrap();
                let seq = canonical_echo(&spec, &params).unwrap();
                EchoPoint {
                    readout: readout_for(&seq, SpinBranch::Up).unwrap(),
                    params,
                    pe,
                }
            })
            .collect()
    })
}

fn criterion_5_echo_unitary() -> Outcome {
    let mut ok = true;
    let mut worst = [0.0_f64; 3];
    for pt in echo_points() {
        let echo = &pt.readout.echo;
        let dg = delta_gamma(&pt.params, pt.pe).value;
        let u = &echo.net.entries;
        // (+1, m) and (−1, m) pick up +2Δγ and −2Δγ.
        let phase = (0..2)
            .map(|m| {
                wrap_pi(u[(2 * m, 2 * m)].arg() - u[(2 * m + 1, 2 * m + 1)].arg() - 4.0 * dg).abs()
            })
            .fold((echo.delta_gamma_numeric - dg).abs(), f64::max);
        let dynamical = echo.dynamical_residual.unwrap();
        worst = [
            worst[0].max(echo.max_offdiag),
            worst[1].max(phase),
            worst[2].max(dynamical),
        ];
        ok &= echo.max_offdiag <= OFFDIAG_TOL
            && phase <= ECHO_PHASE_TOL
            && dynamical <= DYNAMICAL_TOL;
    }
    (
        ok,
        format!(
            "{} points, offdiag {:.2e}, phase {:.2e} rad, dynamical {:.2e} rad",
            ECHO_POINTS.len(),
            worst[0],
            worst[1],
            worst[2]
        ),
    )
}

fn criterion_6_readout() -> Outcome {
    let mut ok = true;
    let (mut worst, mut sum) = (0.0_f64, 0.0_f64);
    for pt in echo_points() {
        let (pp, pm) = interference_probabilities(delta_gamma(&pt.params, pt.pe).value);
        let r = &pt.readout;
        let err = (r.p_plus - pp).abs().max((r.p_minus - pm).abs());
        let s = (r.p_plus + r.p_minus - 1.0).abs();
        worst = worst.max(err);
        sum = sum.max(s);
        ok &= err <= READOUT_TOL && s <= READOUT_SUM_TOL;
    }
    (
        ok,
        format!(
            "{} points, worst probability error {worst:.2e}, sum error {sum:.2e}",
            ECHO_POINTS.len()
        ),
    )
}

fn criterion_7_surface() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let rows = run_surface_rows(&cfg, 0).unwrap();
    let elapsed = start.elapsed();
    let dso = cfg.params.delta_so;

    let axis: Vec<_> = rows.iter().filter(|r| r.homega_over_dso == 0.0).collect();
    let decreasing = axis
        .windows(2)
        .all(|w| w[1].delta_gamma_analytic < w[0].delta_gamma_analytic);
    let closed = axis
        .iter()
        .map(|r| {
            let pe = r.pe_over_dso * dso;
            (r.delta_gamma_analytic - TAU * dso / dso.hypot(pe)).abs()
        })
        .fold(0.0, f64::max);

    let (mut even, mut zeeman) = (0.0_f64, 0.0_f64);
    for r in &rows {
        let pe = r.pe_over_dso * dso;
        let at = |w: f64, z: f64| {
            let p = ModelParams {
                hbar_omega: w * dso,
                zeeman_z: z,
                ..cfg.params.clone()
            };
            delta_gamma(&p, pe).value
        };
        even = even.max((at(-r.homega_over_dso, 0.0) - r.delta_gamma_analytic).abs());
        for z in [-0.1, 0.03, 0.5] {
            zeeman = zeeman.max((at(r.homega_over_dso, z) - r.delta_gamma_analytic).abs());
        }
    }
    (rows.len() == 61 * 61
            && axis.len() == 61
            && decreasing
            && closed <= SURFACE_TOL
            && even <= SURFACE_TOL
            && zeeman <= SURFACE_TOL
            && elapsed < SURFACE_TIME,
        format!(
            "{} rows in {elapsed:.2?}, decreasing={decreasing}, closed form {closed:.1e}, even {even:.1e}, zeeman {zeeman:.1e}",
            rows.len()
        ),
    )
}

fn criterion_8_ratio_inversion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    let mut worst: f64 = 0.0;
    for _ in 0..INVERSION_POINTS {
        let dso = 10f64.powf(rng.random_range(-2.0..0.5));
        let pe = 10f64.powf(rng.random_range(-2.0..0.5));
        let back = invert_ratio(delta_gamma_adiabatic(dso, pe), pe)
            .unwrap()
            .delta_so;
        worst = worst.max((back - dso).abs() / dso.max(1.0));
    }
    (
        worst <= INVERSION_TOL,
        format!("{INVERSION_POINTS} points, worst error {worst:.2e}"),
    )
}

/// Rabi periods 2πħ/pℰ over the drive range discussed for molecular magnets.
fn rabi_period_scale() -> Outcome {
    let period = |pe: f64| TAU * chiral_berry::HBAR / pe;
    let ok = (period(0.01) - 413.6).abs() < 0.1 && (period(0.1) - 41.36).abs() < 0.01;
    (
        ok,
        format!(
            "{:.1} ps at 0.01 meV, {:.2} ps at 0.1 meV",
            period(0.01),
            period(0.1)
        ),
    )
}

fn main() {
    let criteria: [fn() -> Outcome; 8] = [
        criterion_1_spectrum,
        criterion_2_chirality_algebra,
        criterion_3_full_vs_effective,
        criterion_4_berry_phase,
        criterion_5_echo_unitary,
        criterion_6_readout,
        criterion_7_surface,
        criterion_8_ratio_inversion,
    ];
    // Sequential, so the runtime limits are not measured under contention.
    let outcomes: Vec<Outcome> = criteria
        .iter()
        .map(|f| std::panic::catch_unwind(f).unwrap_or_else(|_| (false, "panicked".into())))
        .collect();
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    for (n, (ok, detail)) in outcomes.iter().enumerate() {
        println!("criterion {}: {} {detail}", n + 1, verdict(*ok));
    }
    let passed = outcomes.iter().filter(|o| o.0).count();
    let (rabi_ok, detail) = rabi_period_scale();
    println!("example rabi periods: {} {detail}", verdict(rabi_ok));
    println!("acceptance: {passed} of {} criteria passed", criteria.len());
    if passed < criteria.len() || !rabi_ok {
        std::process::exit(1);
    }
}
