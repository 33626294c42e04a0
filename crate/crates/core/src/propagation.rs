//! Unitary time evolution under piecewise time-dependent Hamiltonians.
//!
//! Every step uses the midpoint exponential U(t+h, t) = exp(−i H(t+h/2) h/ħ),
//! so each step is unitary to rounding and the scheme is second order in h.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;

use crate::effective_model::{
    cross, EffectiveModel, FieldSchedule, Frame, Ramp, RampShape, Segment, SpinBranch,
};
use crate::error::{Error, Result};
use crate::linalg::{
    expm_hermitian, identity, kron, pauli_x, pauli_y, pauli_z, unitarity_residual, CMatrix,
    CVector, ZERO,
};
use crate::params::ModelParams;
use crate::spin_full::{FullModel, GROUND_DIM};

/// Source of H(t) for the propagator.
pub trait HamiltonianProvider: Sync {
    fn dim(&self) -> usize;

    fn hbar(&self) -> f64;

    /// H(t) in meV.
    fn hamiltonian(&self, t: f64, schedule: &FieldSchedule) -> CMatrix;

    /// exp(−i H(t_mid) h / ħ).
    fn step_propagator(&self, t_mid: f64, h: f64, schedule: &FieldSchedule) -> CMatrix {
        expm_hermitian(&self.hamiltonian(t_mid, schedule), h / self.hbar())
    }

    /// Step-size contract for this Hamiltonian; permissive by default.
    fn check_resolution(&self, _schedule: &FieldSchedule) -> Result<()> {
        Ok(())
    }

    /// Operators whose expectations are reported as the chiral Bloch vector.
    fn chirality_observables(&self) -> [CMatrix; 3];
}

/// Time-independent Hamiltonian, mostly for tests.
#[derive(Debug, Clone)]
pub struct StaticHamiltonian {
    pub h: CMatrix,
    pub hbar: f64,
}

impl HamiltonianProvider for StaticHamiltonian {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn hamiltonian(&self, _t: f64, _schedule: &FieldSchedule) -> CMatrix {
        self.h.clone()
    }

    fn chirality_observables(&self) -> [CMatrix; 3] {
        let n = self.dim();
        std::array::from_fn(|_| CMatrix::zeros(n, n))
    }
}

/// σ_a on the chiral factor of the 4-dim basis (chirality is the fast index).
pub fn chiral_pauli(axis: usize) -> CMatrix {
    let p = match axis {
        0 => pauli_x(),
        1 => pauli_y(),
        _ => pauli_z(),
    };
    kron(&identity(2), &p)
}

/// The effective 4-level model in a chosen frame.
#[derive(Debug, Clone)]
pub struct EffectiveDrive {
    pub model: EffectiveModel,
    pub frame: Frame,
}

impl EffectiveDrive {
    pub fn new(params: &ModelParams, frame: Frame) -> Result<Self> {
        Ok(Self {
            model: EffectiveModel::new(params)?,
            frame,
        })
    }
}

impl HamiltonianProvider for EffectiveDrive {
    fn dim(&self) -> usize {
        GROUND_DIM
    }

    fn hbar(&self) -> f64 {
        self.model.params.hbar
    }

    fn hamiltonian(&self, t: f64, schedule: &FieldSchedule) -> CMatrix {
        self.model.matrix(&schedule.controls(t), self.frame)
    }

    fn step_propagator(&self, t_mid: f64, h: f64, schedule: &FieldSchedule) -> CMatrix {
        let ctrl = schedule.controls(t_mid);
        let mut u = CMatrix::from_element(GROUND_DIM, GROUND_DIM, ZERO);
        for branch in SpinBranch::BOTH {
            let block = self
                .model
                .block(branch, &ctrl, self.frame)
                .exp_step(h / self.hbar());
            let o = branch.offset();
            for i in 0..2 {
                for j in 0..2 {
                    u[(o + i, o + j)] = block[i][j];
                }
            }
        }
        u
    }

    fn check_resolution(&self, schedule: &FieldSchedule) -> Result<()> {
        self.model.check_resolution(schedule)
    }

    fn chirality_observables(&self) -> [CMatrix; 3] {
        std::array::from_fn(chiral_pauli)
    }
}

/// The exact 8-dim model in a chosen frame.
#[derive(Debug, Clone)]
pub struct FullDrive {
    pub model: FullModel,
    effective: EffectiveModel,
    pub frame: Frame,
}

impl FullDrive {
    pub fn new(params: &ModelParams, frame: Frame) -> Result<Self> {
        Ok(Self {
            model: FullModel::new(params),
            effective: EffectiveModel::new(params)?,
            frame,
        })
    }
}

impl HamiltonianProvider for FullDrive {
    fn dim(&self) -> usize {
        crate::spin_full::FULL_DIM
    }

    fn hbar(&self) -> f64 {
        self.model.params.hbar
    }

    fn hamiltonian(&self, t: f64, schedule: &FieldSchedule) -> CMatrix {
        self.model.hamiltonian_at(t, schedule, self.frame)
    }

    fn check_resolution(&self, schedule: &FieldSchedule) -> Result<()> {
        // The exchange gap only enters through the exact exponential of the
        // static part, so the contract is the ground-manifold one.
        self.effective.check_resolution(schedule)
    }

    fn chirality_observables(&self) -> [CMatrix; 3] {
        let c = &self.model.chirality;
        [c.x.clone(), c.y.clone(), c.z.clone()]
    }
}

/// States, energies and the accumulated propagator of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CVector>,
    /// ⟨ψ(t)|H(t)|ψ(t)⟩ in meV.
    pub energies: Vec<f64>,
    pub unitary: CMatrix,
    pub hbar: f64,
}

impl Trajectory {
    pub fn initial_state(&self) -> &CVector {
        &self.states[0]
    }

    pub fn final_state(&self) -> &CVector {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times[0]
    }

    pub fn max_norm_error(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn unitarity_residual(&self) -> f64 {
        unitarity_residual(&self.unitary)
    }

    /// Trajectory CSV: t_ps, re/im of each amplitude, energy_meV, sx, sy, sz.
    pub fn write_csv<W: Write>(
        &self,
        mut out: W,
        observables: &[CMatrix; 3],
    ) -> std::io::Result<()> {
        let dim = self.states[0].len();
        let mut header = String::from("t_ps");
        for k in 0..dim {
            header.push_str(&format!(",re_{k},im_{k}"));
        }
        header.push_str(",energy_meV,sx,sy,sz");
        writeln!(out, "{header}")?;
        for ((t, psi), e) in self.times.iter().zip(&self.states).zip(&self.energies) {
            let mut line = fmt_num(*t);
            for a in psi.iter() {
                line.push(',');
                line.push_str(&fmt_num(a.re));
                line.push(',');
                line.push_str(&fmt_num(a.im));
            }
            line.push(',');
            line.push_str(&fmt_num(*e));
            for obs in observables {
                line.push(',');
                line.push_str(&fmt_num(expectation(obs, psi)));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Twelve significant digits, locale independent.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn expectation(op: &CMatrix, psi: &CVector) -> f64 {
    psi.dotc(&(op * psi)).re
}

/// Propagate `psi0` through `schedule` with the midpoint exponential rule.
pub fn propagate<P: HamiltonianProvider + ?Sized>(
    provider: &P,
    schedule: &FieldSchedule,
    psi0: &CVector,
) -> Result<Trajectory> {
    let dim = provider.dim();
    if psi0.len() != dim {
        return Err(Error::InvalidParameter(format!(
            "state has dimension {}, Hamiltonian {dim}",
            psi0.len()
        )));
    }
    if (psi0.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidParameter(format!(
            "initial state norm {} is not 1",
            psi0.norm()
        )));
    }
    provider.check_resolution(schedule)?;

    let grid = schedule.grid();
    let mut times = Vec::with_capacity(grid.len());
    let mut states = Vec::with_capacity(grid.len());
    let mut energies = Vec::with_capacity(grid.len());
    let mut unitary = identity(dim);
    let mut psi = psi0.clone();

    let energy_at = |t: f64, psi: &CVector| expectation(&provider.hamiltonian(t, schedule), psi);
    times.push(0.0);
    energies.push(energy_at(0.0, &psi));
    states.push(psi.clone());

    let mut start = 0.0;
    for seg in schedule.segments() {
        let (n, h) = seg.steps();
        for k in 0..n {
            let t0 = start + h * k as f64;
            let t1 = start + h * (k + 1) as f64;
            let u = provider.step_propagator(0.5 * (t0 + t1), h, schedule);
            psi = &u * &psi;
            unitary = &u * &unitary;
            let drift = (psi.norm() - 1.0).abs();
            if drift > 1e-6 {
                return Err(Error::NormDrift {
                    drift,
                    t_ps: t1,
                    dt_ps: h,
                });
            }
            times.push(t1);
            energies.push(energy_at(t1, &psi));
            states.push(psi.clone());
        }
        start += seg.duration;
    }
    Ok(Trajectory {
        times,
        states,
        energies,
        unitary,
        hbar: provider.hbar(),
    })
}

/// |⟨a|b⟩|² for normalized states.
pub fn fidelity(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm_sqr()
}

/// Halve the step until two successive runs agree in final-state fidelity
/// within `tol`.
pub fn propagate_converged<P: HamiltonianProvider + ?Sized>(
    provider: &P,
    schedule: &FieldSchedule,
    psi0: &CVector,
    tol: f64,
    max_halvings: usize,
) -> Result<Trajectory> {
    let mut current = propagate(provider, schedule, psi0)?;
    let mut sched = schedule.clone();
    let mut change = f64::INFINITY;
    for _ in 0..max_halvings {
        sched = sched.scaled_dt(0.5);
        let finer = propagate(provider, &sched, psi0)?;
        change = 1.0 - fidelity(current.final_state(), finer.final_state());
        current = finer;
        if change <= tol {
            return Ok(current);
        }
    }
    Err(Error::NoConvergence {
        halvings: max_halvings,
        change,
    })
}

/// Chiral Bloch vector of the `branch` block of a 4-dim state, normalized
/// by the block population.
pub fn block_bloch_vector(psi: &CVector, branch: SpinBranch) -> [f64; 3] {
    let o = branch.offset();
    let (a, b) = (psi[o], psi[o + 1]);
    let pop = a.norm_sqr() + b.norm_sqr();
    let ab = a.conj() * b;
    [
        2.0 * ab.re / pop,
        2.0 * ab.im / pop,
        (a.norm_sqr() - b.norm_sqr()) / pop,
    ]
}

#[derive(Debug, Clone)]
pub struct BlochTrajectory {
    pub times: Vec<f64>,
    pub vectors: Vec<[f64; 3]>,
}

/// Rodrigues rotation of `s` about unit `n` by `angle`.
fn rotate(s: [f64; 3], n: [f64; 3], angle: f64) -> [f64; 3] {
    let (sn, cs) = angle.sin_cos();
    let nxs = cross(n, s);
    let nds = n[0] * s[0] + n[1] * s[1] + n[2] * s[2];
    std::array::from_fn(|i| s[i] * cs + nxs[i] * sn + n[i] * nds * (1.0 - cs))
}

/// Integrate ds/dt = Ω±(t) × s with midpoint rotations.
pub fn evolve_bloch(
    model: &EffectiveModel,
    frame: Frame,
    branch: SpinBranch,
    schedule: &FieldSchedule,
    s0: [f64; 3],
) -> Result<BlochTrajectory> {
    let norm0 = s0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm0 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "Bloch vector norm {norm0} is not 1"
        )));
    }
    model.check_resolution(schedule)?;
    let mut times = vec![0.0];
    let mut vectors = vec![s0];
    let mut s = s0;
    let mut start = 0.0;
    for seg in schedule.segments() {
        let (n, h) = seg.steps();
        for k in 0..n {
            let t_mid = start + h * (k as f64 + 0.5);
            let omega = model.rabi_vector(branch, &schedule.controls(t_mid), frame);
            if let Some(axis) = omega.unit() {
                s = rotate(s, axis, omega.norm() * h);
            }
            times.push(start + h * (k + 1) as f64);
            vectors.push(s);
        }
        start += seg.duration;
    }
    Ok(BlochTrajectory { times, vectors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

/// Ramp up, precess the field phase once around z, ramp down.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSpec {
    pub pe_max: f64,
    pub hbar_omega: f64,
    pub t_ramp: f64,
    pub t_loop: f64,
    pub direction: Direction,
    pub ramp_shape: RampShape,
    /// Step override; `None` picks 1/100 of the shortest period per segment.
    pub dt: Option<f64>,
}

impl CycleSpec {
    pub fn new(pe_max: f64, hbar_omega: f64, t_ramp: f64, t_loop: f64) -> Self {
        Self {
            pe_max,
            hbar_omega,
            t_ramp,
            t_loop,
            direction: Direction::Forward,
            ramp_shape: RampShape::Smoothstep,
            dt: None,
        }
    }

    pub fn reversed(&self) -> Self {
        Self {
            direction: self.direction.reversed(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.pe_max >= 0.0
            && self.pe_max.is_finite()
            && self.hbar_omega.is_finite()
            && self.t_ramp > 0.0
            && self.t_loop > 0.0
            && self.t_ramp.is_finite()
            && self.t_loop.is_finite()
            && self.dt.is_none_or(|d| d > 0.0 && d.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid cycle {self:?}")))
        }
    }

    /// Durations chosen so that the adiabaticity ratio equals `r_target`
    /// (the ratio scales as 1/duration for each segment kind). Durations are
    /// floored at ten periods of the slowest Rabi frequency.
    pub fn for_adiabaticity(
        model: &EffectiveModel,
        pe_max: f64,
        hbar_omega: f64,
        r_target: f64,
        ramp_shape: RampShape,
    ) -> Result<Self> {
        if !(r_target > 0.0) {
            return Err(Error::InvalidParameter("r_target must be positive".into()));
        }
        let probe = CycleSpec {
            ramp_shape,
            ..CycleSpec::new(pe_max, hbar_omega, 1.0, 1.0)
        };
        let sched = make_cycle(&probe, model)?;
        let mut still = model.clone();
        still.jt_in_plane = [0.0, 0.0];
        let per_segment = segment_ratios(&sched, &still)?;
        let r_ramp = per_segment[0].max(per_segment[2]);
        let r_loop = per_segment[1];
        let hbar = model.params.hbar;
        let slowest = SpinBranch::BOTH
            .iter()
            .map(|b| (b.sign() * model.params.delta_so - hbar_omega).abs())
            .fold(f64::INFINITY, f64::min)
            .max(1e-12);
        let floor = 10.0 * TAU * hbar / slowest;
        Ok(CycleSpec {
            t_ramp: (r_ramp / r_target).max(floor),
            t_loop: (r_loop / r_target).max(floor),
            ..probe
        })
    }
}

/// Default step: 1/100 of the shortest dynamical period on a segment.
fn default_dt(model: &EffectiveModel, seg: &Segment) -> f64 {
    TAU * model.params.hbar / (100.0 * model.segment_energy_scale(seg))
}

/// Rotating-frame schedule for the cycle C (forward) or C⁻¹ (reverse, the
/// exact time mirror).
pub fn make_cycle(spec: &CycleSpec, model: &EffectiveModel) -> Result<FieldSchedule> {
    spec.validate()?;
    let shape = spec.ramp_shape;
    let (phi_start, phi_end) = match spec.direction {
        Direction::Forward => (0.0, TAU),
        Direction::Reverse => (TAU, 0.0),
    };
    let seg = |duration: f64, pe: Ramp, phi: Ramp| Segment {
        duration,
        dt: 1.0,
        pe,
        phi,
        hbar_omega: spec.hbar_omega,
    };
    let mut segments = vec![
        seg(
            spec.t_ramp,
            Ramp {
                from: 0.0,
                to: spec.pe_max,
                shape,
            },
            Ramp::constant(phi_start),
        ),
        seg(
            spec.t_loop,
            Ramp::constant(spec.pe_max),
            Ramp {
                from: phi_start,
                to: phi_end,
                shape,
            },
        ),
        seg(
            spec.t_ramp,
            Ramp {
                from: spec.pe_max,
                to: 0.0,
                shape,
            },
            Ramp::constant(phi_end),
        ),
    ];
    for s in &mut segments {
        s.dt = spec.dt.unwrap_or_else(|| default_dt(model, s));
    }
    FieldSchedule::new(segments)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticityReport {
    /// max_t |dΩ′/dt| / |Ω′|².
    pub r: f64,
    pub t_ps: f64,
    pub branch: SpinBranch,
}

const RATIO_SAMPLES: usize = 4001;

fn ratio_at(
    model: &EffectiveModel,
    schedule: &FieldSchedule,
    t: f64,
    branch: SpinBranch,
) -> Result<f64> {
    let ctrl = schedule.controls(t);
    let e = model.rabi_energy(branch, &ctrl, Frame::Rotating);
    let norm2 = e.iter().map(|x| x * x).sum::<f64>();
    let hbar = model.params.hbar;
    if norm2.sqrt() < 1e-12 {
        return Err(Error::DegenerateGeometry {
            context: format!("|Ω′| = 0 at t = {t:.3} ps on branch {branch:?}"),
        });
    }
    let phase = model.params.phi0 + ctrl.phi;
    let (sp, cp) = phase.sin_cos();
    let (st, ct) = ctrl.carrier_phase.sin_cos();
    let w = ctrl.hbar_omega / hbar;
    let [jx, jy] = model.jt_in_plane;
    let dx = ctrl.pe_rate * cp - ctrl.pe * ctrl.phi_rate * sp + w * (-st * jx + ct * jy);
    let dy = ctrl.pe_rate * sp + ctrl.pe * ctrl.phi_rate * cp + w * (-ct * jx - st * jy);
    // |dΩ′/dt| / |Ω′|² with both in rad/ps.
    Ok((dx.hypot(dy) / hbar) / (norm2 / (hbar * hbar)))
}

fn segment_ratios(schedule: &FieldSchedule, model: &EffectiveModel) -> Result<Vec<f64>> {
    let mut start = 0.0;
    let mut out = Vec::new();
    for seg in schedule.segments() {
        let mut worst = 0.0_f64;
        for k in 0..RATIO_SAMPLES {
            let t = start + seg.duration * k as f64 / (RATIO_SAMPLES - 1) as f64;
            // Stay inside the segment at its right edge.
            let t = if k + 1 == RATIO_SAMPLES {
                t - 1e-9 * seg.duration
            } else {
                t
            };
            for branch in SpinBranch::BOTH {
                worst = worst.max(ratio_at(model, schedule, t, branch)?);
            }
        }
        out.push(worst);
        start += seg.duration;
    }
    Ok(out)
}

/// Maximum adiabaticity ratio over both branches, sampled on a fixed grid of
/// 4001 points per segment.
pub fn adiabaticity_report(
    schedule: &FieldSchedule,
    model: &EffectiveModel,
) -> Result<AdiabaticityReport> {
    let mut best = AdiabaticityReport {
        r: 0.0,
        t_ps: 0.0,
        branch: SpinBranch::Up,
    };
    let mut start = 0.0;
    for seg in schedule.segments() {
        for k in 0..RATIO_SAMPLES {
            let t = start + seg.duration * k as f64 / (RATIO_SAMPLES - 1) as f64;
            let t = if k + 1 == RATIO_SAMPLES {
                t - 1e-9 * seg.duration
            } else {
                t
            };
            for branch in SpinBranch::BOTH {
                let r = ratio_at(model, schedule, t, branch)?;
                if r > best.r {
                    best = AdiabaticityReport { r, t_ps: t, branch };
                }
            }
        }
        start += seg.duration;
    }
    Ok(best)
}

/// Basis vector of the 4-dim model.
pub fn basis_state(index: usize) -> CVector {
    let mut v = CVector::zeros(GROUND_DIM);
    v[index] = Complex64::new(1.0, 0.0);
    v
}

/// Lab-frame state from a rotating-frame one at carrier phase θ:
/// exp(−i θ σ_z / 2) on the chiral factor of each spin block.
pub fn rotating_to_lab(psi: &CVector, carrier_phase: f64) -> CVector {
    let mut out = psi.clone();
    for (i, amp) in out.iter_mut().enumerate() {
        let sz = if i % 2 == 0 { 1.0 } else { -1.0 };
        *amp *= Complex64::from_polar(1.0, -0.5 * carrier_phase * sz);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, unitarity_residual as ures};
    use approx::assert_abs_diff_eq;

    fn params() -> ModelParams {
        ModelParams {
            delta_so: 0.05,
            hbar_omega: 0.01,
            zeeman_z: 0.004,
            ..ModelParams::default()
        }
    }

    fn idle(duration: f64, dt: f64) -> FieldSchedule {
        FieldSchedule::new(vec![Segment {
            duration,
            dt,
            pe: Ramp::constant(0.0),
            phi: Ramp::constant(0.0),
            hbar_omega: 0.0,
        }])
        .unwrap()
    }

    #[test]
    fn static_eigenstate_picks_up_energy_phase() {
        let h = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.3, 0.0), c(-0.1, 0.0)]));
        let provider = StaticHamiltonian { h, hbar: HBAR_TEST };
        let traj = propagate(
            &provider,
            &idle(10.0, 0.1),
            &CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
        )
        .unwrap();
        let phase = traj.final_state()[0].arg();
        assert_abs_diff_eq!(phase, wrap(-0.3 * 10.0 / HBAR_TEST), epsilon = 1e-10);
        assert!(traj.max_norm_error() < 1e-12);
        assert!(traj.unitarity_residual() < 1e-12);
        assert_abs_diff_eq!(traj.duration(), 10.0, epsilon = 1e-12);
    }

    const HBAR_TEST: f64 = crate::params::HBAR;

    fn wrap(x: f64) -> f64 {
        crate::linalg::wrap_pi(x)
    }

    fn cycle(p: &ModelParams, dt: Option<f64>) -> (EffectiveModel, FieldSchedule) {
        let model = EffectiveModel::new(p).unwrap();
        let spec = CycleSpec {
            dt,
            ..CycleSpec::new(0.04, p.hbar_omega, 400.0, 800.0)
        };
        let sched = make_cycle(&spec, &model).unwrap();
        (model, sched)
    }

    #[test]
    fn midpoint_rule_is_second_order() {
        let p = params();
        let (_, sched) = cycle(&p, Some(0.4));
        let drive = EffectiveDrive::new(&p, Frame::Lab).unwrap();
        let psi0 = basis_state(1);
        let reference = propagate(&drive, &sched.with_dt(0.025), &psi0).unwrap();
        let err = |dt: f64| {
            let t = propagate(&drive, &sched.with_dt(dt), &psi0).unwrap();
            (t.final_state() - reference.final_state()).norm()
        };
        let (e1, e2) = (err(0.4), err(0.2));
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "observed order {order}");
    }

    #[test]
    fn block_closed_form_matches_dense_exponential() {
        let p = params();
        let (_, sched) = cycle(&p, None);
        let drive = EffectiveDrive::new(&p, Frame::Rotating).unwrap();
        for t in [0.0, 250.0, 700.0, 1500.0] {
            let closed = drive.step_propagator(t, 0.7, &sched);
            let dense = expm_hermitian(&drive.hamiltonian(t, &sched), 0.7 / drive.hbar());
            assert!(crate::linalg::max_abs(&(closed - dense)) < 1e-13);
        }
    }

    #[test]
    fn coarse_step_is_rejected() {
        let p = params();
        let (_, sched) = cycle(&p, Some(60.0));
        let drive = EffectiveDrive::new(&p, Frame::Rotating).unwrap();
        assert!(matches!(
            propagate(&drive, &sched, &basis_state(0)),
            Err(Error::StepSize { .. })
        ));
    }

    #[test]
    fn bad_initial_states_are_rejected() {
        let p = params();
        let (_, sched) = cycle(&p, None);
        let drive = EffectiveDrive::new(&p, Frame::Rotating).unwrap();
        assert!(propagate(&drive, &sched, &(basis_state(0) * c(2.0, 0.0))).is_err());
        assert!(propagate(&drive, &sched, &CVector::zeros(3)).is_err());
    }

    #[test]
    fn convergence_loop() {
        let p = params();
        let (_, sched) = cycle(&p, None);
        let drive = EffectiveDrive::new(&p, Frame::Rotating).unwrap();
        let t = propagate_converged(&drive, &sched, &basis_state(0), 1e-8, 6).unwrap();
        assert!(ures(&t.unitary) < 1e-12);
        assert!(matches!(
            propagate_converged(&drive, &sched, &basis_state(0), 1e-8, 0),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn bloch_equation_tracks_state_propagation() {
        let p = params();
        let (model, sched) = cycle(&p, None);
        for frame in [Frame::Lab, Frame::Rotating] {
            let drive = EffectiveDrive::new(&p, frame).unwrap();
            let psi0 = CVector::from_vec(vec![c(0.0, 0.0), c(0.0, 0.0), c(0.6, 0.0), c(0.0, 0.8)]);
            let traj = propagate(&drive, &sched, &psi0).unwrap();
            let s0 = block_bloch_vector(&psi0, SpinBranch::Down);
            let bloch = evolve_bloch(&model, frame, SpinBranch::Down, &sched, s0).unwrap();
            assert_eq!(bloch.vectors.len(), traj.states.len());
            for (s, psi) in bloch.vectors.iter().zip(&traj.states).step_by(97) {
                let q = block_bloch_vector(psi, SpinBranch::Down);
                for i in 0..3 {
                    assert_abs_diff_eq!(s[i], q[i], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn rotating_and_lab_frames_agree() {
        let p = params();
        let (_, sched) = cycle(&p, None);
        let psi0 = CVector::from_vec(vec![c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.5)]);
        let lab = propagate(&EffectiveDrive::new(&p, Frame::Lab).unwrap(), &sched, &psi0).unwrap();
        let rot = propagate(
            &EffectiveDrive::new(&p, Frame::Rotating).unwrap(),
            &sched,
            &psi0,
        )
        .unwrap();
        let theta = sched
            .controls(sched.total_duration() * (1.0 - 1e-15))
            .carrier_phase;
        let mapped = rotating_to_lab(rot.final_state(), theta);
        assert!(fidelity(&mapped, lab.final_state()) > 1.0 - 1e-6);
    }

    #[test]
    fn cycle_shape() {
        let p = params();
        let model = EffectiveModel::new(&p).unwrap();
        let spec = CycleSpec::new(0.04, 0.0, 300.0, 900.0);
        let fwd = make_cycle(&spec, &model).unwrap();
        let rev = make_cycle(&spec.reversed(), &model).unwrap();
        assert_eq!(fwd.segments().len(), 3);
        let total = fwd.total_duration();
        assert_abs_diff_eq!(total, 1500.0, epsilon = 1e-9);
        let end = fwd.controls(total * (1.0 - 1e-14));
        assert_abs_diff_eq!(end.pe, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fwd.controls(700.0).pe, 0.04, epsilon = 1e-15);
        // The reverse cycle sweeps φ from 2π down to 0.
        for t in [100.0, 500.0, 700.0, 1100.0, 1400.0] {
            let (a, b) = (fwd.controls(t), rev.controls(t));
            assert_abs_diff_eq!(a.pe, b.pe, epsilon = 1e-14);
            assert_abs_diff_eq!(a.phi + b.phi, TAU, epsilon = 1e-12);
        }
        assert!(CycleSpec::new(-1.0, 0.0, 1.0, 1.0).validate().is_err());
        assert!(CycleSpec::new(0.1, 0.0, 0.0, 1.0).validate().is_err());
    }

    #[test]
    fn durations_hit_the_target_ratio() {
        let p = ModelParams {
            hbar_omega: 0.0,
            ..params()
        };
        let model = EffectiveModel::new(&p).unwrap();
        for r in [0.02, 0.005] {
            let spec =
                CycleSpec::for_adiabaticity(&model, 0.05, 0.0, r, RampShape::Smoothstep).unwrap();
            let got = adiabaticity_report(&make_cycle(&spec, &model).unwrap(), &model)
                .unwrap()
                .r;
            assert_abs_diff_eq!(got, r, epsilon = 1e-3 * r);
        }
        assert!(CycleSpec::for_adiabaticity(&model, 0.05, 0.0, 0.0, RampShape::Linear).is_err());
    }

    #[test]
    fn trajectory_csv() {
        let p = params();
        let (_, sched) = cycle(&p, Some(1.0));
        let drive = EffectiveDrive::new(&p, Frame::Rotating).unwrap();
        let traj = propagate(&drive, &sched, &basis_state(0)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, &drive.chirality_observables())
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t_ps,re_0,im_0,re_1,im_1,re_2,im_2,re_3,im_3,energy_meV,sx,sy,sz"
        );
        assert_eq!(lines.count(), traj.times.len());
        assert_eq!(fmt_num(1.0), "1.00000000000e0");
    }

    #[test]
    fn chiral_paulis_act_on_fast_index() {
        let x = chiral_pauli(0);
        assert_eq!(x[(0, 1)], c(1.0, 0.0));
        assert_eq!(x[(2, 3)], c(1.0, 0.0));
        assert_eq!(x[(0, 2)], c(0.0, 0.0));
    }
}
