//! Physical constants of the molecule and the applied fields.
//!
//! Units: energies in meV, times in ps, angles in radians.

use crate::error::{Error, Result};

/// Reduced Planck constant in meV·ps.
pub const HBAR: f64 = 0.658_211_956_9;

/// How the chiral splitting was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaSoSource {
    /// Set directly by the user; may disagree with `dz`.
    User,
    /// Projected from `dz` on the ground quadruplet.
    Derived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Isotropic antiferromagnetic exchange J.
    pub j: f64,
    /// Out-of-plane DM component D_z.
    pub dz: f64,
    /// Exchange distortions on bonds (1,2), (2,3), (3,1).
    pub delta_j: [f64; 3],
    /// Drive amplitude, the product pℰ.
    pub pe_amp: f64,
    /// Carrier energy ħω.
    pub hbar_omega: f64,
    pub phi0: f64,
    /// Signed chiral splitting Δ_SO (coefficient of C_z S_z).
    pub delta_so: f64,
    pub delta_so_source: DeltaSoSource,
    /// Zeeman energy g⊥B_z.
    pub zeeman_z: f64,
    /// In-plane g-factor; carried for completeness, inert with B ∥ z.
    pub g_par: f64,
    pub hbar: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            j: 1.0,
            dz: 0.0,
            delta_j: [0.0; 3],
            pe_amp: 0.05,
            hbar_omega: 0.0,
            phi0: 0.0,
            delta_so: 0.05,
            delta_so_source: DeltaSoSource::User,
            zeeman_z: 0.0,
            g_par: 2.0,
            hbar: HBAR,
        }
    }
}

impl ModelParams {
    /// Parameters with Δ_SO projected from `dz`.
    pub fn with_derived_delta_so(j: f64, dz: f64) -> Result<Self> {
        let split = crate::spin_full::extract_delta_so(j, dz)?;
        Ok(Self {
            j,
            dz,
            delta_so: split.signed(),
            delta_so_source: DeltaSoSource::Derived,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let values = [
            ("j", self.j),
            ("dz", self.dz),
            ("delta_j12", self.delta_j[0]),
            ("delta_j23", self.delta_j[1]),
            ("delta_j31", self.delta_j[2]),
            ("pe_amp", self.pe_amp),
            ("hbar_omega", self.hbar_omega),
            ("phi0", self.phi0),
            ("delta_so", self.delta_so),
            ("zeeman_z", self.zeeman_z),
            ("g_par", self.g_par),
        ];
        for (name, v) in values {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        if self.j <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "J must be positive (antiferromagnetic), got {}",
                self.j
            )));
        }
        if self.pe_amp < 0.0 {
            return Err(Error::InvalidParameter("pE must be non-negative".into()));
        }
        if self.delta_so_source == DeltaSoSource::Derived {
            let expected = crate::spin_full::extract_delta_so(self.j, self.dz)?.signed();
            if (expected - self.delta_so).abs() > 1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "derived delta_so {} disagrees with projection {}",
                    self.delta_so, expected
                )));
            }
        }
        Ok(())
    }

    /// Gap Δ_J between the S=1/2 manifold and the S=3/2 quadruplet of the
    /// equilateral Heisenberg triangle.
    pub fn delta_j_gap(&self) -> f64 {
        1.5 * self.j
    }

    /// Copy whose D_z reproduces the current Δ_SO, so that the 8-dim and
    /// 4-dim models describe the same molecule.
    pub fn with_consistent_dz(&self) -> Result<Self> {
        if self.delta_so_source == DeltaSoSource::Derived {
            return Ok(self.clone());
        }
        let dz = self.delta_so / 3f64.sqrt();
        let split = crate::spin_full::extract_delta_so(self.j, dz)?;
        Ok(Self {
            dz,
            delta_so: split.signed(),
            delta_so_source: DeltaSoSource::Derived,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ModelParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_ferromagnetic_and_nan() {
        let p = ModelParams {
            j: -1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = ModelParams {
            zeeman_z: f64::NAN,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn derived_splitting_is_checked() {
        let mut p = ModelParams::with_derived_delta_so(1.0, 0.03).unwrap();
        p.validate().unwrap();
        p.delta_so += 1e-6;
        assert!(p.validate().is_err());
    }
}
