//! Exact three-site spin-½ triangle in the 8-dimensional product space.
//!
//! This is the brute-force reference for the effective 4-level model: every
//! operator here is built from site spin matrices, never from the effective
//! parametrization.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::effective_model::{FieldSchedule, Frame};
use crate::error::{Error, Result};
use crate::linalg::{
    c, commutator, hermiticity_residual, identity, kron, max_abs, pauli_x, pauli_y, pauli_z,
    CMatrix, CVector, ONE,
};
use crate::params::ModelParams;

pub const FULL_DIM: usize = 8;
pub const GROUND_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Up,
    Down,
}

/// Product basis `|σ₁σ₂σ₃⟩`, lexicographic with ↑ before ↓ and site 1 most
/// significant: index = 4·b₁ + 2·b₂ + b₃ with b = 0 for ↑.
pub struct SpinBasis8;

impl SpinBasis8 {
    pub fn index(config: [Spin; 3]) -> usize {
        config
            .iter()
            .fold(0, |acc, s| 2 * acc + usize::from(*s == Spin::Down))
    }

    pub fn config(index: usize) -> [Spin; 3] {
        assert!(index < FULL_DIM, "basis index {index} out of range");
        let bit = |k: usize| {
            if (index >> (2 - k)) & 1 == 0 {
                Spin::Up
            } else {
                Spin::Down
            }
        };
        [bit(0), bit(1), bit(2)]
    }

    pub fn label(index: usize) -> String {
        Self::config(index)
            .iter()
            .map(|s| if *s == Spin::Up { '↑' } else { '↓' })
            .collect()
    }

    pub fn ket(config: [Spin; 3]) -> CVector {
        let mut v = CVector::zeros(FULL_DIM);
        v[Self::index(config)] = ONE;
        v
    }
}

/// Dense operator on either the full space or the ground manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub entries: CMatrix,
    pub hermitian: bool,
}

impl OperatorMatrix {
    pub fn hermitian(entries: CMatrix) -> Self {
        debug_assert!(
            hermiticity_residual(&entries) <= 1e-12 * max_abs(&entries).max(1.0),
            "matrix flagged Hermitian is not"
        );
        Self {
            entries,
            hermitian: true,
        }
    }

    pub fn general(entries: CMatrix) -> Self {
        Self {
            entries,
            hermitian: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Relative Hermiticity defect `max|A − A†| / max|A|` (0 for the zero matrix).
    pub fn hermiticity_defect(&self) -> f64 {
        let scale = max_abs(&self.entries);
        if scale == 0.0 {
            0.0
        } else {
            hermiticity_residual(&self.entries) / scale
        }
    }
}

/// Site-resolved and total spin operators (spin algebra with ħ = 1).
#[derive(Debug, Clone)]
pub struct SpinOperators {
    /// `site[k][a]` is s_{k+1}^a with a = x, y, z.
    pub site: [[CMatrix; 3]; 3],
    pub total: [CMatrix; 3],
    pub total_squared: CMatrix,
}

impl SpinOperators {
    /// s_i · s_j
    pub fn dot(&self, i: usize, j: usize) -> CMatrix {
        (0..3).fold(CMatrix::zeros(FULL_DIM, FULL_DIM), |acc, a| {
            acc + &self.site[i][a] * &self.site[j][a]
        })
    }

    /// (s_i × s_j)_z
    pub fn cross_z(&self, i: usize, j: usize) -> CMatrix {
        &self.site[i][0] * &self.site[j][1] - &self.site[i][1] * &self.site[j][0]
    }

    /// s_i · (s_j × s_k)
    pub fn triple(&self, i: usize, j: usize, k: usize) -> CMatrix {
        let mut out = CMatrix::zeros(FULL_DIM, FULL_DIM);
        for a in 0..3 {
            let (b, cc) = ((a + 1) % 3, (a + 2) % 3);
            out += &self.site[i][a]
                * (&self.site[j][b] * &self.site[k][cc] - &self.site[j][cc] * &self.site[k][b]);
        }
        out
    }
}

pub fn build_spin_operators() -> SpinOperators {
    let half = c(0.5, 0.0);
    let paulis = [pauli_x() * half, pauli_y() * half, pauli_z() * half];
    let id2 = identity(2);
    let place = |k: usize, op: &CMatrix| -> CMatrix {
        let factors: [&CMatrix; 3] = match k {
            0 => [op, &id2, &id2],
            1 => [&id2, op, &id2],
            _ => [&id2, &id2, op],
        };
        kron(factors[0], &kron(factors[1], factors[2]))
    };
    let site: [[CMatrix; 3]; 3] =
        std::array::from_fn(|k| std::array::from_fn(|a| place(k, &paulis[a])));
    let total: [CMatrix; 3] = std::array::from_fn(|a| &site[0][a] + &site[1][a] + &site[2][a]);
    let total_squared = (0..3).fold(CMatrix::zeros(FULL_DIM, FULL_DIM), |acc, a| {
        acc + &total[a] * &total[a]
    });
    SpinOperators {
        site,
        total,
        total_squared,
    }
}

/// Bonds (1,2), (2,3), (3,1) in zero-based site indices.
const BONDS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

/// Static Hamiltonian Σ_k (J + δJ_k) s_k·s_{k+1} + D_z Σ_k (s_k × s_{k+1})_z.
pub fn build_hamiltonian(params: &ModelParams) -> OperatorMatrix {
    let ops = build_spin_operators();
    static_hamiltonian(&ops, params)
}

fn static_hamiltonian(ops: &SpinOperators, params: &ModelParams) -> OperatorMatrix {
    let mut h = CMatrix::zeros(FULL_DIM, FULL_DIM);
    for (b, &(i, j)) in BONDS.iter().enumerate() {
        h += ops.dot(i, j) * c(params.j + params.delta_j[b], 0.0);
        h += ops.cross_z(i, j) * c(params.dz, 0.0);
    }
    OperatorMatrix::hermitian(h)
}

/// DM term alone, D_z Σ_k (s_k × s_{k+1})_z.
pub fn dm_operator(ops: &SpinOperators, dz: f64) -> CMatrix {
    BONDS
        .iter()
        .fold(CMatrix::zeros(FULL_DIM, FULL_DIM), |acc, &(i, j)| {
            acc + ops.cross_z(i, j)
        })
        * c(dz, 0.0)
}

#[derive(Debug, Clone)]
pub struct ChiralityOperators {
    pub x: CMatrix,
    pub y: CMatrix,
    pub z: CMatrix,
}

impl ChiralityOperators {
    pub fn components(&self) -> [&CMatrix; 3] {
        [&self.x, &self.y, &self.z]
    }
}

pub fn build_chirality_operators() -> ChiralityOperators {
    chirality_from(&build_spin_operators())
}

fn chirality_from(ops: &SpinOperators) -> ChiralityOperators {
    let (a12, a23, a31) = (ops.dot(0, 1), ops.dot(1, 2), ops.dot(2, 0));
    let x = (&a12 - &a23 * c(2.0, 0.0) + &a31) * c(-2.0 / 3.0, 0.0);
    let y = (&a12 - &a31) * c(2.0 / 3f64.sqrt(), 0.0);
    let z = ops.triple(0, 1, 2) * c(4.0 / 3f64.sqrt(), 0.0);
    ChiralityOperators { x, y, z }
}

/// Label (χ, 2m) of a ground state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroundLabel {
    pub chirality: i8,
    pub two_m: i8,
}

/// Storage order shared with the effective 4-level basis.
pub const GROUND_LABELS: [GroundLabel; 4] = [
    GroundLabel {
        chirality: 1,
        two_m: 1,
    },
    GroundLabel {
        chirality: -1,
        two_m: 1,
    },
    GroundLabel {
        chirality: 1,
        two_m: -1,
    },
    GroundLabel {
        chirality: -1,
        two_m: -1,
    },
];

/// The two S = ½ doublets of opposite chirality.
#[derive(Debug, Clone)]
pub struct GroundQuadruplet {
    pub states: [CVector; 4],
}

impl GroundQuadruplet {
    /// 8x4 isometry whose columns are the ground states.
    pub fn isometry(&self) -> CMatrix {
        CMatrix::from_columns(&self.states)
    }

    /// `P† A P` for an 8-dim operator.
    pub fn project(&self, op: &CMatrix) -> CMatrix {
        let p = self.isometry();
        p.adjoint() * op * p
    }

    /// Embed a ground-manifold vector in the full space.
    pub fn lift(&self, v: &CVector) -> CVector {
        self.isometry() * v
    }

    /// Ground-manifold components of a full-space vector.
    pub fn restrict(&self, v: &CVector) -> CVector {
        self.isometry().adjoint() * v
    }

    /// Projector onto the orthogonal complement (the S = 3/2 quadruplet).
    pub fn complement_projector(&self) -> CMatrix {
        let p = self.isometry();
        identity(FULL_DIM) - &p * p.adjoint()
    }
}

/// Symmetry-adapted ground states with amplitudes (1, η±, η∓)/√3 over the
/// three single-flip configurations, η± = exp(±2πi/3). The first configuration
/// carries a real positive amplitude.
pub fn ground_quadruplet() -> GroundQuadruplet {
    use Spin::{Down as D, Up as U};
    let norm = 1.0 / 3f64.sqrt();
    let eta = |sign: f64| Complex64::from_polar(1.0, sign * 2.0 * PI / 3.0);
    let state = |label: GroundLabel| {
        let confs = if label.two_m > 0 {
            [[D, U, U], [U, D, U], [U, U, D]]
        } else {
            [[U, D, D], [D, U, D], [D, D, U]]
        };
        let chi = f64::from(label.chirality);
        let amps = [ONE, eta(chi), eta(-chi)];
        let mut v = CVector::zeros(FULL_DIM);
        for (conf, amp) in confs.iter().zip(amps) {
            v[SpinBasis8::index(*conf)] = amp * norm;
        }
        v
    };
    GroundQuadruplet {
        states: GROUND_LABELS.map(state),
    }
}

/// The chiral splitting obtained by projecting the DM term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinOrbitSplitting {
    /// |Δ_SO| in meV.
    pub delta_so: f64,
    /// Sign of the C_z S_z coefficient (0 when D_z = 0).
    pub sign: f64,
}

impl SpinOrbitSplitting {
    pub fn signed(&self) -> f64 {
        self.sign * self.delta_so
    }
}

/// C_z ⊗ S_z in the ground basis: diag(+½, −½, −½, +½).
pub fn cz_sz_ground() -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        GROUND_DIM,
        GROUND_LABELS
            .iter()
            .map(|l| c(f64::from(l.chirality) * f64::from(l.two_m) / 2.0, 0.0)),
    ))
}

pub fn extract_delta_so(j: f64, dz: f64) -> Result<SpinOrbitSplitting> {
    if !(j > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "J must be positive, got {j}"
        )));
    }
    let ops = build_spin_operators();
    let gs = ground_quadruplet();
    let projected = gs.project(&dm_operator(&ops, dz));
    // Coefficient of C_z S_z, read from the (+1,+½) entry.
    let coeff = 2.0 * projected[(0, 0)].re;
    let residual = max_abs(&(&projected - cz_sz_ground() * c(coeff, 0.0)));
    let scale = coeff.abs().max(f64::MIN_POSITIVE);
    if residual > 1e-10 * scale && residual > 1e-14 {
        return Err(Error::ProjectionNotDiagonal { residual });
    }
    // Leakage into S = 3/2 would also break the C_z S_z picture.
    let leak = max_abs(&(gs.complement_projector() * dm_operator(&ops, dz) * gs.isometry()));
    if leak > 1e-10 * scale && leak > 1e-14 {
        return Err(Error::ProjectionNotDiagonal { residual: leak });
    }
    let sign = if coeff > 0.0 {
        1.0
    } else if coeff < 0.0 {
        -1.0
    } else {
        0.0
    };
    Ok(SpinOrbitSplitting {
        delta_so: coeff.abs(),
        sign,
    })
}

/// Ground-manifold decomposition c₀·1 + c_x C_x + c_y C_y of the JT term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JtField {
    pub c0: f64,
    /// (pE_JT,x, pE_JT,y) as coefficients of (C_x, C_y).
    pub in_plane: [f64; 2],
}

pub fn jt_internal_field(delta_j: [f64; 3]) -> Result<JtField> {
    let ops = build_spin_operators();
    let gs = ground_quadruplet();
    let chir = chirality_from(&ops);
    let mut djt = CMatrix::zeros(FULL_DIM, FULL_DIM);
    for (b, &(i, j)) in BONDS.iter().enumerate() {
        djt += ops.dot(i, j) * c(delta_j[b], 0.0);
    }
    let projected = gs.project(&djt);
    let cx_g = gs.project(&chir.x);
    let cy_g = gs.project(&chir.y);
    // Hilbert–Schmidt coefficients; the basis {1, C_x, C_y} is orthogonal with norm² = 4.
    let hs = |a: &CMatrix| (a.adjoint() * &projected).trace().re / GROUND_DIM as f64;
    let c0 = hs(&identity(GROUND_DIM));
    let cx = hs(&cx_g);
    let cy = hs(&cy_g);
    let rebuilt = identity(GROUND_DIM) * c(c0, 0.0) + &cx_g * c(cx, 0.0) + &cy_g * c(cy, 0.0);
    let residual = max_abs(&(&projected - rebuilt));
    let scale = max_abs(&projected).max(1.0);
    if residual > 1e-12 * scale {
        return Err(Error::DecompositionResidual {
            residual,
            tolerance: 1e-12 * scale,
        });
    }
    Ok(JtField {
        c0,
        in_plane: [cx, cy],
    })
}

/// Constant energy of the ground manifold that the effective model drops:
/// −3J/4 from the exchange plus the uniform part of the JT correction.
pub fn ground_energy_offset(params: &ModelParams) -> f64 {
    -0.75 * params.j - 0.25 * params.delta_j.iter().sum::<f64>()
}

/// Precomputed full-space operators for repeated Hamiltonian evaluation.
#[derive(Debug, Clone)]
pub struct FullModel {
    pub params: ModelParams,
    pub spin: SpinOperators,
    pub chirality: ChiralityOperators,
    pub h_static: CMatrix,
    cz_eigen: (Vec<f64>, CMatrix),
}

impl FullModel {
    pub fn new(params: &ModelParams) -> Self {
        let spin = build_spin_operators();
        let chirality = chirality_from(&spin);
        let h_static = static_hamiltonian(&spin, params).entries;
        let eig = chirality.z.clone().symmetric_eigen();
        let cz_eigen = (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors);
        Self {
            params: params.clone(),
            spin,
            chirality,
            h_static,
            cz_eigen,
        }
    }

    /// In-plane drive (pℰ/2)(cos a C_x + sin a C_y). The half factor makes the
    /// ground-manifold restriction equal to (ħ/2)Ω_∥·σ of the block model.
    pub fn drive(&self, pe: f64, angle: f64) -> CMatrix {
        &self.chirality.x * c(0.5 * pe * angle.cos(), 0.0)
            + &self.chirality.y * c(0.5 * pe * angle.sin(), 0.0)
    }

    /// exp(i θ C_z / 2): maps lab-frame operators to the frame co-rotating
    /// with the carrier phase θ.
    fn frame_rotation(&self, theta: f64) -> CMatrix {
        let (vals, vecs) = &self.cz_eigen;
        let mut vd = vecs.clone();
        for (j, mut col) in vd.column_iter_mut().enumerate() {
            col *= Complex64::from_polar(1.0, 0.5 * theta * vals[j]);
        }
        vd * vecs.adjoint()
    }

    /// Full-space H(t) = H_static + drive + g⊥B_z S_z.
    pub fn hamiltonian_at(&self, t: f64, schedule: &FieldSchedule, frame: Frame) -> CMatrix {
        let ctrl = schedule.controls(t);
        let phase = self.params.phi0 + ctrl.phi;
        let zeeman = &self.spin.total[2] * c(self.params.zeeman_z, 0.0);
        match frame {
            Frame::Lab => &self.h_static + self.drive(ctrl.pe, ctrl.carrier_phase + phase) + zeeman,
            Frame::Rotating => {
                let r = self.frame_rotation(ctrl.carrier_phase);
                let rotated_static = &r * &self.h_static * r.adjoint();
                rotated_static + self.drive(ctrl.pe, phase) + zeeman
                    - &self.chirality.z * c(0.5 * ctrl.hbar_omega, 0.0)
            }
        }
    }

    /// Exact map from rotating-frame to lab-frame states at carrier phase θ:
    /// exp(−i θ C_z / 2).
    pub fn to_lab(&self, theta: f64) -> CMatrix {
        self.frame_rotation(-theta)
    }
}

/// H(t) in the full space for the lab frame.
pub fn build_full_drive_hamiltonian(
    params: &ModelParams,
    t: f64,
    schedule: &FieldSchedule,
) -> OperatorMatrix {
    OperatorMatrix::hermitian(FullModel::new(params).hamiltonian_at(t, schedule, Frame::Lab))
}

/// Chirality algebra check on the ground manifold: max over k,l of
/// |[C_k, C_l] − 2i ε_klm C_m|.
pub fn chirality_algebra_residual(chir: &ChiralityOperators, gs: &GroundQuadruplet) -> f64 {
    let comps: Vec<CMatrix> = chir.components().iter().map(|m| gs.project(m)).collect();
    let mut worst = 0.0_f64;
    for k in 0..3 {
        for l in 0..3 {
            let mut expected = CMatrix::zeros(GROUND_DIM, GROUND_DIM);
            for (m, comp) in comps.iter().enumerate() {
                let eps = levi_civita(k, l, m);
                if eps != 0.0 {
                    expected += comp * c(0.0, 2.0 * eps);
                }
            }
            worst = worst.max(max_abs(&(commutator(&comps[k], &comps[l]) - expected)));
        }
    }
    worst
}

pub fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}
