//! Four-level chiral ⊗ spin model of the ground manifold.
//!
//! Basis order is [(χ=+1, m=+½), (χ=−1, m=+½), (χ=+1, m=−½), (χ=−1, m=−½)],
//! identical to [`crate::spin_full::GROUND_LABELS`]. The Hamiltonian is block
//! diagonal in m; each 2x2 chiral block is (ħ/2)[±Ω₀ + Ω±(t)·σ].

mod schedule;

use std::f64::consts::{PI, TAU};

pub use schedule::{Controls, FieldSchedule, Ramp, RampShape, Segment};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Su2Generator, ZERO};
use crate::params::ModelParams;
use crate::spin_full::{self, OperatorMatrix, GROUND_DIM};

pub use crate::spin_full::GROUND_LABELS as EFFECTIVE_BASIS4;

/// Spin projection m = ±½ selecting a chiral block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpinBranch {
    Up,
    Down,
}

impl SpinBranch {
    pub const BOTH: [SpinBranch; 2] = [SpinBranch::Up, SpinBranch::Down];

    pub fn sign(self) -> f64 {
        match self {
            SpinBranch::Up => 1.0,
            SpinBranch::Down => -1.0,
        }
    }

    /// Offset of the block in the 4-dim basis.
    pub fn offset(self) -> usize {
        match self {
            SpinBranch::Up => 0,
            SpinBranch::Down => 2,
        }
    }

    pub fn of_index(index: usize) -> Self {
        if index < 2 {
            SpinBranch::Up
        } else {
            SpinBranch::Down
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            SpinBranch::Up => SpinBranch::Down,
            SpinBranch::Down => SpinBranch::Up,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    Lab,
    /// Co-rotating with the carrier about z.
    Rotating,
}

/// Angular-frequency vector driving a chiral Bloch vector (rad/ps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiVector {
    pub omega: [f64; 3],
    pub branch: SpinBranch,
    pub frame: Frame,
}

impl RabiVector {
    pub fn norm(&self) -> f64 {
        self.omega.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn unit(&self) -> Option<[f64; 3]> {
        let n = self.norm();
        (n > 0.0).then(|| self.omega.map(|x| x / n))
    }
}

/// Effective model bound to a parameter set. The JT distortion enters as a
/// static lab-frame in-plane field.
#[derive(Debug, Clone)]
pub struct EffectiveModel {
    pub params: ModelParams,
    /// Static in-plane part of ħΩ from the JT distortion (meV, lab frame).
    pub jt_in_plane: [f64; 2],
}

impl EffectiveModel {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let jt_in_plane = if params.delta_j.iter().all(|&d| d == 0.0) {
            [0.0, 0.0]
        } else {
            let f = spin_full::jt_internal_field(params.delta_j)?;
            // c·C_∥ on the ground manifold equals (ħ/2)Ω_∥·σ with ħΩ_∥ = 2c.
            [2.0 * f.in_plane[0], 2.0 * f.in_plane[1]]
        };
        Ok(Self {
            params: params.clone(),
            jt_in_plane,
        })
    }

    /// ħΩ (meV) of one branch given the controls.
    pub fn rabi_energy(&self, branch: SpinBranch, ctrl: &Controls, frame: Frame) -> [f64; 3] {
        let phase = self.params.phi0 + ctrl.phi;
        let [jx, jy] = self.jt_in_plane;
        let dz = branch.sign() * self.params.delta_so;
        match frame {
            Frame::Lab => {
                let a = ctrl.carrier_phase + phase;
                [ctrl.pe * a.cos() + jx, ctrl.pe * a.sin() + jy, dz]
            }
            Frame::Rotating => {
                let (s, c) = ctrl.carrier_phase.sin_cos();
                // JT field seen from the rotating frame turns by −θ.
                [
                    ctrl.pe * phase.cos() + c * jx + s * jy,
                    ctrl.pe * phase.sin() - s * jx + c * jy,
                    dz - ctrl.hbar_omega,
                ]
            }
        }
    }

    pub fn rabi_vector(&self, branch: SpinBranch, ctrl: &Controls, frame: Frame) -> RabiVector {
        let e = self.rabi_energy(branch, ctrl, frame);
        RabiVector {
            omega: e.map(|x| x / self.params.hbar),
            branch,
            frame,
        }
    }

    /// The 2x2 chiral block as a·1 + b·σ in meV.
    pub fn block(&self, branch: SpinBranch, ctrl: &Controls, frame: Frame) -> Su2Generator {
        let e = self.rabi_energy(branch, ctrl, frame);
        Su2Generator {
            a: 0.5 * branch.sign() * self.params.zeeman_z,
            b: e.map(|x| 0.5 * x),
        }
    }

    pub fn matrix(&self, ctrl: &Controls, frame: Frame) -> CMatrix {
        let mut h = CMatrix::from_element(GROUND_DIM, GROUND_DIM, ZERO);
        for branch in SpinBranch::BOTH {
            let m = self.block(branch, ctrl, frame).matrix();
            let o = branch.offset();
            for i in 0..2 {
                for j in 0..2 {
                    h[(o + i, o + j)] = m[i][j];
                }
            }
        }
        h
    }

    /// Largest |ħΩ′| and |ħω| reached on a segment, for the step-size contract.
    pub fn segment_energy_scale(&self, seg: &Segment) -> f64 {
        let pe = seg.pe.from.max(seg.pe.to) + self.jt_in_plane[0].hypot(self.jt_in_plane[1]);
        let z = self.params.delta_so.abs() + seg.hbar_omega.abs();
        pe.hypot(z).max(seg.hbar_omega.abs()).max(1e-9)
    }

    /// dt ≤ (1/50)·2πħ / max(|ħΩ′±|, ħω, 1e-9 meV) on every segment.
    pub fn check_resolution(&self, schedule: &FieldSchedule) -> Result<()> {
        for (i, seg) in schedule.segments().iter().enumerate() {
            let limit = TAU * self.params.hbar / (50.0 * self.segment_energy_scale(seg));
            let (_, h) = seg.steps();
            if h > limit * (1.0 + 1e-12) {
                return Err(Error::StepSize {
                    segment: i,
                    dt_ps: h,
                    limit_ps: limit,
                });
            }
        }
        Ok(())
    }
}

/// H_eff(t) in the 4-dim basis (lab frame).
pub fn hamiltonian(
    t: f64,
    params: &ModelParams,
    schedule: &FieldSchedule,
) -> Result<OperatorMatrix> {
    let model = EffectiveModel::new(params)?;
    Ok(OperatorMatrix::hermitian(
        model.matrix(&schedule.controls(t), Frame::Lab),
    ))
}

/// ħΩ′± = (pℰ cos φ, pℰ sin φ, ±Δ_SO − ħω), returned in rad/ps.
pub fn rotating_frame_rabi(
    branch: SpinBranch,
    params: &ModelParams,
    pe: f64,
    phi: f64,
) -> RabiVector {
    let e = [
        pe * phi.cos(),
        pe * phi.sin(),
        branch.sign() * params.delta_so - params.hbar_omega,
    ];
    RabiVector {
        omega: e.map(|x| x / params.hbar),
        branch,
        frame: Frame::Rotating,
    }
}

/// θ± = arccos[(±Δ_SO − ħω)/√((±Δ_SO − ħω)² + (pℰ)²)].
pub fn cone_angle(branch: SpinBranch, params: &ModelParams, pe: f64) -> Result<f64> {
    let z = branch.sign() * params.delta_so - params.hbar_omega;
    let norm = z.hypot(pe);
    if norm == 0.0 {
        return Err(Error::DegenerateGeometry {
            context: format!("branch {branch:?}, pE = 0 on resonance"),
        });
    }
    Ok((z / norm).clamp(-1.0, 1.0).acos())
}

/// In-plane lab field rotated by α = 7π/6 − 2β.
pub fn lab_field_to_eprime(e_lab: [f64; 2], beta: f64) -> [f64; 2] {
    rotate_in_plane(e_lab, field_rotation_angle(beta))
}

pub fn field_rotation_angle(beta: f64) -> f64 {
    7.0 * PI / 6.0 - 2.0 * beta
}

pub fn rotate_in_plane(v: [f64; 2], alpha: f64) -> [f64; 2] {
    let (s, c) = alpha.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// ds/dt = Ω±(t) × s in the requested frame.
pub fn bloch_rhs(
    branch: SpinBranch,
    s: [f64; 3],
    t: f64,
    model: &EffectiveModel,
    schedule: &FieldSchedule,
    frame: Frame,
) -> [f64; 3] {
    let omega = model
        .rabi_vector(branch, &schedule.controls(t), frame)
        .omega;
    cross(omega, s)
}
