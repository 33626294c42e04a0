//! Spin-echo compound evolution: π flips sandwiching forward and reverse
//! cycles, net-unitary analysis and the chirality interference readout.
//!
//! Everything here lives in the rotating frame of the drive, where the
//! cycles are closed loops and the flips act on fixed axes.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::berry_engine::{
    delta_gamma, delta_gamma_echo, phase_report_from_run, run_cycle, CycleRun, PhaseReport,
};
use crate::effective_model::{EffectiveModel, RampShape, SpinBranch};
use crate::error::{Error, Result};
use crate::linalg::{
    c, expm_hermitian, identity, kron, max_offdiag, pauli_x, pauli_y, pauli_z, unitarity_residual,
    unwrap_near, wrap_pi, CMatrix, CVector,
};
use crate::params::ModelParams;
use crate::propagation::{adiabaticity_report, basis_state, make_cycle, CycleSpec, Direction};
use crate::spin_full::{OperatorMatrix, GROUND_DIM};

/// Off-diagonal magnitude of the net unitary above which the run is rejected.
pub const OFFDIAG_LIMIT: f64 = 1e-2;
/// Largest adiabaticity ratio accepted for a cycle inside a sequence.
pub const R_LIMIT: f64 = 0.05;
/// Disagreement between the two spin blocks' fringe phases that gets flagged.
pub const BLOCK_MISMATCH_LIMIT: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlipTarget {
    Spin,
    Chiral,
}

impl FlipTarget {
    fn name(self) -> &'static str {
        match self {
            FlipTarget::Spin => "spin",
            FlipTarget::Chiral => "chiral",
        }
    }

    /// Label index permutation induced by a flip of this factor.
    fn permute(self, index: usize) -> usize {
        match self {
            FlipTarget::Spin => index ^ 2,
            FlipTarget::Chiral => index ^ 1,
        }
    }
}

/// Lift a single-factor 2x2 operator to the 4-dim basis (spin ⊗ chirality).
fn on_factor(target: FlipTarget, op: &CMatrix) -> CMatrix {
    match target {
        FlipTarget::Spin => kron(op, &identity(2)),
        FlipTarget::Chiral => kron(&identity(2), op),
    }
}

/// In-plane Pauli matrix cos α σ_x + sin α σ_y.
fn in_plane_pauli(axis: f64) -> CMatrix {
    pauli_x() * c(axis.cos(), 0.0) + pauli_y() * c(axis.sin(), 0.0)
}

/// σ_x on the targeted factor, identity on the other.
pub fn pi_flip(target: FlipTarget) -> OperatorMatrix {
    OperatorMatrix::hermitian(on_factor(target, &pauli_x()))
}

/// π flip about an in-plane axis at angle `axis` from x.
pub fn pi_flip_axis(target: FlipTarget, axis: f64) -> OperatorMatrix {
    OperatorMatrix::hermitian(on_factor(target, &in_plane_pauli(axis)))
}

/// exp(−i s π/4 σ_y) on the chiral factor: s = +1 maps |+1⟩ onto the
/// σ_x = +1 eigenstate, s = −1 undoes it.
pub fn half_pi_chiral(sign: i8) -> OperatorMatrix {
    let s = f64::from(sign.signum());
    let (sn, cs) = (s * FRAC_PI_4).sin_cos();
    let u = identity(2) * c(cs, 0.0) - pauli_y() * c(0.0, sn);
    OperatorMatrix::general(on_factor(FlipTarget::Chiral, &u))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SequenceElement {
    /// Adiabatic cycle; the direction inside the spec distinguishes C and C⁻¹.
    Cycle(CycleSpec),
    PiFlip {
        target: FlipTarget,
        axis: f64,
    },
    HalfPi {
        target: FlipTarget,
        sign: i8,
    },
}

impl SequenceElement {
    pub fn kind(&self) -> &'static str {
        match self {
            SequenceElement::Cycle(s) if s.direction == Direction::Forward => "Cycle",
            SequenceElement::Cycle(_) => "InverseCycle",
            SequenceElement::PiFlip {
                target: FlipTarget::Spin,
                ..
            } => "PiFlipSpin",
            SequenceElement::PiFlip {
                target: FlipTarget::Chiral,
                ..
            } => "PiFlipChiral",
            SequenceElement::HalfPi {
                target: FlipTarget::Chiral,
                ..
            } => "HalfPiChiral",
            SequenceElement::HalfPi {
                target: FlipTarget::Spin,
                ..
            } => "HalfPiSpin",
        }
    }
}

/// How π and π/2 elements are realized.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PulseMode {
    /// Exact instantaneous unitaries.
    #[default]
    Ideal,
    /// Square resonant pulse of the given Rabi energy (meV) acting on top of
    /// the zero-field rotating-frame Hamiltonian.
    FiniteWidth { rabi_energy: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    pub elements: Vec<SequenceElement>,
    pub params: ModelParams,
    pub pulse_mode: PulseMode,
}

/// [C, π₂, C, π₁, C⁻¹, π₂, C⁻¹, π₁] with π₁ the chiral flip and π₂ the spin flip.
pub fn canonical_echo(cycle: &CycleSpec, params: &ModelParams) -> Result<PulseSequence> {
    cycle.validate()?;
    let fwd = CycleSpec {
        direction: Direction::Forward,
        ..cycle.clone()
    };
    let rev = fwd.reversed();
    let flip = |target| SequenceElement::PiFlip { target, axis: 0.0 };
    Ok(PulseSequence {
        elements: vec![
            SequenceElement::Cycle(fwd.clone()),
            flip(FlipTarget::Spin),
            SequenceElement::Cycle(fwd),
            flip(FlipTarget::Chiral),
            SequenceElement::Cycle(rev.clone()),
            flip(FlipTarget::Spin),
            SequenceElement::Cycle(rev),
            flip(FlipTarget::Chiral),
        ],
        params: params.clone(),
        pulse_mode: PulseMode::Ideal,
    })
}

impl PulseSequence {
    /// Same sequence with every cycle's direction swapped.
    pub fn reversed_direction(&self) -> Self {
        let elements = self
            .elements
            .iter()
            .map(|e| match e {
                SequenceElement::Cycle(s) => SequenceElement::Cycle(s.reversed()),
                other => other.clone(),
            })
            .collect();
        Self {
            elements,
            ..self.clone()
        }
    }

    /// Sequence with the π elements removed.
    pub fn cycles_only(&self) -> Self {
        let elements = self
            .elements
            .iter()
            .filter(|e| matches!(e, SequenceElement::Cycle(_)))
            .cloned()
            .collect();
        Self {
            elements,
            ..self.clone()
        }
    }

    /// Parse the line format; `#` starts a comment.
    pub fn parse(text: &str, params: &ModelParams) -> Result<Self> {
        let mut elements = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            elements.push(parse_element(line).map_err(|message| Error::Sequence {
                line: n + 1,
                message,
            })?);
        }
        Ok(Self {
            elements,
            params: params.clone(),
            pulse_mode: PulseMode::Ideal,
        })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for e in &self.elements {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for SequenceElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceElement::Cycle(s) => {
                let dir = match s.direction {
                    Direction::Forward => "fwd",
                    Direction::Reverse => "rev",
                };
                write!(
                    f,
                    "CYCLE pE={} homega={} tramp={} tloop={} dir={dir}",
                    s.pe_max, s.hbar_omega, s.t_ramp, s.t_loop
                )?;
                if s.ramp_shape == RampShape::Linear {
                    write!(f, " shape=linear")?;
                }
                if let Some(dt) = s.dt {
                    write!(f, " dt={dt}")?;
                }
                Ok(())
            }
            SequenceElement::PiFlip { target, axis } => {
                write!(f, "PIFLIP target={}", target.name())?;
                if *axis != 0.0 {
                    write!(f, " axis={axis}")?;
                }
                Ok(())
            }
            SequenceElement::HalfPi { target, sign } => {
                write!(f, "HALFPI target={}", target.name())?;
                if *sign < 0 {
                    write!(f, " sign=-1")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for SequenceElement {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_element(s)
    }
}

fn parse_element(line: &str) -> std::result::Result<SequenceElement, String> {
    let mut words = line.split_whitespace();
    let head = words.next().ok_or("empty line")?;
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    for w in words {
        let (k, v) = w
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, found `{w}`"))?;
        if pairs.iter().any(|(seen, _)| *seen == k) {
            return Err(format!("duplicate key `{k}`"));
        }
        pairs.push((k, v));
    }
    let get = |k: &str| pairs.iter().find(|(key, _)| *key == k).map(|(_, v)| *v);
    let num = |k: &str| -> std::result::Result<f64, String> {
        let v = get(k).ok_or_else(|| format!("missing `{k}`"))?;
        let x: f64 = v
            .parse()
            .map_err(|_| format!("`{k}` is not a number: `{v}`"))?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(format!("`{k}` is not finite"))
        }
    };
    let check_keys = |allowed: &[&str]| -> std::result::Result<(), String> {
        match pairs.iter().find(|(k, _)| !allowed.contains(k)) {
            Some((k, _)) => Err(format!("unknown key `{k}` for {head}")),
            None => Ok(()),
        }
    };
    let target = || -> std::result::Result<FlipTarget, String> {
        match get("target") {
            Some("spin") => Ok(FlipTarget::Spin),
            Some("chiral") => Ok(FlipTarget::Chiral),
            Some(other) => Err(format!("unknown target `{other}`")),
            None => Err("missing `target`".into()),
        }
    };
    match head {
        "CYCLE" => {
            check_keys(&["pE", "homega", "tramp", "tloop", "dir", "shape", "dt"])?;
            let direction = match get("dir").unwrap_or("fwd") {
                "fwd" => Direction::Forward,
                "rev" => Direction::Reverse,
                other => return Err(format!("unknown direction `{other}`")),
            };
            let ramp_shape = match get("shape").unwrap_or("smoothstep") {
                "smoothstep" => RampShape::Smoothstep,
                "linear" => RampShape::Linear,
                other => return Err(format!("unknown shape `{other}`")),
            };
            let dt = if get("dt").is_some() {
                Some(num("dt")?)
            } else {
                None
            };
            let spec = CycleSpec {
                direction,
                ramp_shape,
                dt,
                ..CycleSpec::new(num("pE")?, num("homega")?, num("tramp")?, num("tloop")?)
            };
            spec.validate().map_err(|e| e.to_string())?;
            Ok(SequenceElement::Cycle(spec))
        }
        "PIFLIP" => {
            check_keys(&["target", "axis"])?;
            let axis = if get("axis").is_some() {
                num("axis")?
            } else {
                0.0
            };
            Ok(SequenceElement::PiFlip {
                target: target()?,
                axis,
            })
        }
        "HALFPI" => {
            check_keys(&["target", "sign"])?;
            let sign = match get("sign").unwrap_or("1") {
                "1" | "+1" => 1,
                "-1" => -1,
                other => return Err(format!("sign must be +1 or -1, found `{other}`")),
            };
            Ok(SequenceElement::HalfPi {
                target: target()?,
                sign,
            })
        }
        other => Err(format!("unknown element `{other}`")),
    }
}

/// Zero-field rotating-frame Hamiltonian of the 4-dim model.
fn idle_hamiltonian(params: &ModelParams) -> CMatrix {
    let spin_z = pauli_z() * c(0.5, 0.0);
    let chir_z = pauli_z() * c(0.5, 0.0);
    kron(&spin_z, &chir_z) * c(2.0 * params.delta_so, 0.0)
        - kron(&identity(2), &chir_z) * c(params.hbar_omega, 0.0)
        + kron(&spin_z, &identity(2)) * c(params.zeeman_z, 0.0)
}

/// Unitary of a π (`angle` = π) or π/2 pulse under `mode`.
fn pulse_unitary(
    params: &ModelParams,
    mode: PulseMode,
    target: FlipTarget,
    axis_op: &CMatrix,
    angle: f64,
) -> CMatrix {
    match mode {
        PulseMode::Ideal => {
            let (s, co) = (angle / 2.0).sin_cos();
            identity(GROUND_DIM) * c(co, 0.0) - on_factor(target, axis_op) * c(0.0, s)
        }
        PulseMode::FiniteWidth { rabi_energy } => {
            let duration = angle * params.hbar / rabi_energy;
            let h =
                idle_hamiltonian(params) + on_factor(target, axis_op) * c(0.5 * rabi_energy, 0.0);
            expm_hermitian(&h, duration / params.hbar)
        }
    }
}

fn element_unitary_pulse(
    params: &ModelParams,
    mode: PulseMode,
    element: &SequenceElement,
) -> Option<CMatrix> {
    match element {
        SequenceElement::Cycle(_) => None,
        SequenceElement::PiFlip { target, axis } => match mode {
            // Exactly σ rather than −iσ: the global phase is dropped.
            PulseMode::Ideal => Some(pi_flip_axis(*target, *axis).entries),
            _ => Some(pulse_unitary(
                params,
                mode,
                *target,
                &in_plane_pauli(*axis),
                PI,
            )),
        },
        SequenceElement::HalfPi { target, sign } => {
            let axis = if *sign >= 0 { pauli_y() } else { -pauli_y() };
            Some(pulse_unitary(params, mode, *target, &axis, FRAC_PI_2))
        }
    }
}

/// Propagated cycle with its 4x4 unitary and per-label dynamical phases.
#[derive(Debug, Clone)]
pub struct CycleOutcome {
    pub spec: CycleSpec,
    pub run: CycleRun,
    pub unitary: CMatrix,
    pub dynamical: [f64; 4],
    pub r: f64,
}

fn run_cycle_checked(params: &ModelParams, spec: &CycleSpec) -> Result<CycleOutcome> {
    let model = EffectiveModel::new(params)?;
    let schedule = make_cycle(spec, &model)?;
    let r = adiabaticity_report(&schedule, &model)?.r;
    if r > R_LIMIT {
        return Err(Error::NonAdiabatic {
            offdiag: f64::NAN,
            r,
        });
    }
    let run = run_cycle(params, spec).map_err(|e| match e {
        Error::Leakage { overlap, .. } => Error::NonAdiabatic {
            offdiag: (1.0 - overlap * overlap).sqrt(),
            r,
        },
        other => other,
    })?;
    // U = Σ_i |ψ_i(T)⟩⟨ψ_i(0)| over the orthonormal initial eigenstates.
    let mut unitary = CMatrix::zeros(GROUND_DIM, GROUND_DIM);
    for traj in &run.trajectories {
        unitary += traj.final_state() * traj.initial_state().adjoint();
    }
    let dynamical = std::array::from_fn(|i| run.phases[i].dynamical);
    Ok(CycleOutcome {
        spec: spec.clone(),
        run,
        unitary,
        dynamical,
        r,
    })
}

/// Propagate each distinct cycle of the sequence once (in parallel).
fn propagate_cycles(seq: &PulseSequence) -> Result<Vec<CycleOutcome>> {
    let mut distinct: Vec<CycleSpec> = Vec::new();
    for e in &seq.elements {
        if let SequenceElement::Cycle(s) = e {
            if !distinct.contains(s) {
                distinct.push(s.clone());
            }
        }
    }
    distinct
        .par_iter()
        .map(|s| run_cycle_checked(&seq.params, s))
        .collect()
}

/// Net unitary of an arbitrary sequence, with the propagated cycles.
pub fn net_unitary(seq: &PulseSequence) -> Result<(OperatorMatrix, Vec<CycleOutcome>)> {
    let cycles = propagate_cycles(seq)?;
    let mut u = identity(GROUND_DIM);
    for e in &seq.elements {
        let step = match e {
            SequenceElement::Cycle(s) => cycles
                .iter()
                .find(|c| &c.spec == s)
                .unwrap()
                .unitary
                .clone(),
            other => element_unitary_pulse(&seq.params, seq.pulse_mode, other).unwrap(),
        };
        u = step * u;
    }
    Ok((OperatorMatrix::general(u), cycles))
}

/// Analysis of a sequence whose net unitary is diagonal.
#[derive(Debug, Clone)]
pub struct EchoResult {
    pub net: OperatorMatrix,
    /// arg U_ii − arg U_00 per label, in (−π, π].
    pub diagonal_phases: [f64; 4],
    /// Phase of U_{+1,m} relative to U_{−1,m} for m = +½, −½ (4Δγ mod 2π),
    /// resolved against the expected value.
    pub block_fringe: [f64; 2],
    pub delta_gamma_numeric: f64,
    pub delta_gamma_analytic: f64,
    /// Value predicted from each label's actual initial alignment.
    pub delta_gamma_expected: f64,
    pub block_mismatch: f64,
    pub max_offdiag: f64,
    pub unitarity_residual: f64,
    /// Spread of the summed per-label dynamical phases; `None` when the
    /// sequence contains elements that do not permute labels.
    pub dynamical_residual: Option<f64>,
    pub r: f64,
    pub report: Option<PhaseReport>,
    pub flags: Vec<String>,
}

/// pE of the first cycle in the sequence.
fn sequence_pe(seq: &PulseSequence) -> Result<f64> {
    seq.elements
        .iter()
        .find_map(|e| match e {
            SequenceElement::Cycle(s) => Some(s.pe_max),
            _ => None,
        })
        .ok_or_else(|| Error::InvalidParameter("sequence contains no cycle".into()))
}

/// Propagate the sequence and analyze its (diagonal) net unitary.
pub fn execute(seq: &PulseSequence) -> Result<EchoResult> {
    let (net, cycles) = net_unitary(seq)?;
    let u = &net.entries;
    let r = cycles.iter().map(|c| c.r).fold(0.0, f64::max);
    let offdiag = max_offdiag(u);
    if offdiag > OFFDIAG_LIMIT {
        return Err(Error::NonAdiabatic { offdiag, r });
    }
    let base = u[(0, 0)].arg();
    let diagonal_phases: [f64; 4] = std::array::from_fn(|i| wrap_pi(u[(i, i)].arg() - base));

    let pe = sequence_pe(seq)?;
    let params = &seq.params;
    let orientation = seq
        .elements
        .iter()
        .find_map(|e| match e {
            SequenceElement::Cycle(s) => Some(if s.direction == Direction::Forward {
                1.0
            } else {
                -1.0
            }),
            _ => None,
        })
        .unwrap_or(1.0);
    let expected = orientation * delta_gamma_echo(params, pe)?;
    let analytic = orientation * delta_gamma(params, pe).value;

    let fringe = |m: usize| {
        let d = u[(2 * m, 2 * m)].arg() - u[(2 * m + 1, 2 * m + 1)].arg();
        unwrap_near(d, 4.0 * expected)
    };
    let block_fringe = [fringe(0), fringe(1)];
    let block_mismatch = wrap_pi(block_fringe[0] - block_fringe[1]).abs();
    let mut flags = Vec::new();
    if block_mismatch > BLOCK_MISMATCH_LIMIT {
        flags.push(format!("spin_block_mismatch={block_mismatch:.4}"));
    }
    if wrap_pi(expected - analytic).abs() > 1e-9 {
        flags.push("closed_form_label_assignment_differs".to_string());
    }
    let delta_gamma_numeric = 0.5 * (block_fringe[0] + block_fringe[1]) / 4.0;

    let dynamical_residual = dynamical_spread(seq, &cycles);
    let report = cycles
        .iter()
        .find(|c| c.spec.direction == Direction::Forward)
        .map(|c| phase_report_from_run(params, &c.spec, &c.run))
        .transpose()?
        .map(|mut rep| {
            rep.residuals
                .insert("echo_delta_gamma".into(), delta_gamma_numeric);
            rep.residuals
                .insert("echo_block_mismatch".into(), block_mismatch);
            rep.residuals.insert("echo_max_offdiag".into(), offdiag);
            if let Some(d) = dynamical_residual {
                rep.residuals.insert("echo_dynamical".into(), d);
            }
            rep.flags.extend(flags.iter().cloned());
            rep
        });

    Ok(EchoResult {
        unitarity_residual: unitarity_residual(u),
        net,
        diagonal_phases,
        block_fringe,
        delta_gamma_numeric,
        delta_gamma_analytic: analytic,
        delta_gamma_expected: expected,
        block_mismatch,
        max_offdiag: offdiag,
        dynamical_residual,
        r,
        report,
        flags,
    })
}

/// Follow each starting label through the sequence, summing the dynamical
/// phase of whatever label it occupies during each cycle.
fn dynamical_spread(seq: &PulseSequence, cycles: &[CycleOutcome]) -> Option<f64> {
    let mut totals = [0.0; 4];
    for (start, total) in totals.iter_mut().enumerate() {
        let mut label = start;
        for e in &seq.elements {
            match e {
                SequenceElement::Cycle(s) => {
                    *total += cycles.iter().find(|c| &c.spec == s)?.dynamical[label];
                }
                SequenceElement::PiFlip { target, .. } => label = target.permute(label),
                SequenceElement::HalfPi { .. } => return None,
            }
        }
    }
    Some(
        totals
            .iter()
            .map(|d| (d - totals[0]).abs())
            .fold(0.0, f64::max),
    )
}

/// (cos²2Δγ, sin²2Δγ).
pub fn interference_probabilities(delta_gamma: f64) -> (f64, f64) {
    let (s, c) = (2.0 * delta_gamma).sin_cos();
    (c * c, s * s)
}

#[derive(Debug, Clone)]
pub struct Readout {
    pub p_plus: f64,
    pub p_minus: f64,
    pub block: SpinBranch,
    pub echo: EchoResult,
}

/// Interferometer run: π/2 on |+1, m⟩, the canonical echo, inverse π/2,
/// then chirality populations within block m.
pub fn simulate_readout(
    cycle: &CycleSpec,
    params: &ModelParams,
    block: SpinBranch,
) -> Result<Readout> {
    let seq = canonical_echo(cycle, params)?;
    readout_for(&seq, block)
}

/// As [`simulate_readout`] for a prepared sequence (pulse mode included).
pub fn readout_for(seq: &PulseSequence, block: SpinBranch) -> Result<Readout> {
    let echo = execute(seq)?;
    let mode = seq.pulse_mode;
    let h1 = element_unitary_pulse(
        &seq.params,
        mode,
        &SequenceElement::HalfPi {
            target: FlipTarget::Chiral,
            sign: 1,
        },
    )
    .unwrap();
    let h2 = element_unitary_pulse(
        &seq.params,
        mode,
        &SequenceElement::HalfPi {
            target: FlipTarget::Chiral,
            sign: -1,
        },
    )
    .unwrap();
    let psi0: CVector = basis_state(block.offset());
    let psi = &h2 * (&echo.net.entries * (&h1 * psi0));
    let o = block.offset();
    Ok(Readout {
        p_plus: psi[o].norm_sqr(),
        p_minus: psi[o + 1].norm_sqr(),
        block,
        echo,
    })
}
