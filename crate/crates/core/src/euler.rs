//! State vectors, ideal-gas equation of state and the physical Euler flux.
//!
//! All quantities are nondimensional: the free stream has unit density and
//! unit velocity. The ratio of specific heats defaults to 1.4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec4 = [f64; 4];
pub type Mat4 = [[f64; 4]; 4];

/// Cell-averaged conserved variables (rho, rho u, rho v, rho e).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedState {
    pub rho: f64,
    pub rho_u: f64,
    pub rho_v: f64,
    pub rho_e: f64,
}

/// Primitive variables (rho, u, v, p).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveState {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

impl ConservedState {
    pub fn new(rho: f64, rho_u: f64, rho_v: f64, rho_e: f64) -> Self {
        Self { rho, rho_u, rho_v, rho_e }
    }

    pub fn to_array(self) -> Vec4 {
        [self.rho, self.rho_u, self.rho_v, self.rho_e]
    }

    pub fn from_array(a: Vec4) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// rho e minus the kinetic energy density.
    pub fn internal_energy(&self) -> f64 {
        self.rho_e - 0.5 * (self.rho_u * self.rho_u + self.rho_v * self.rho_v) / self.rho
    }

    pub fn check_admissible(&self) -> Result<()> {
        let internal = self.internal_energy();
        if self.rho > 0.0 && internal > 0.0 && internal.is_finite() {
            Ok(())
        } else {
            Err(Error::Inadmissible { rho: self.rho, internal })
        }
    }
}

impl PrimitiveState {
    pub fn new(rho: f64, u: f64, v: f64, p: f64) -> Self {
        Self { rho, u, v, p }
    }

    pub fn to_array(self) -> Vec4 {
        [self.rho, self.u, self.v, self.p]
    }

    pub fn from_array(a: Vec4) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn check_admissible(&self) -> Result<()> {
        if self.rho > 0.0 && self.p > 0.0 && self.p.is_finite() && self.rho.is_finite() {
            Ok(())
        } else {
            Err(Error::Inadmissible { rho: self.rho, internal: self.p })
        }
    }
}

/// Calorically perfect gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasModel {
    pub gamma: f64,
}

impl Default for GasModel {
    fn default() -> Self {
        Self { gamma: 1.4 }
    }
}

impl GasModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 1.0 && gamma.is_finite() {
            Ok(Self { gamma })
        } else {
            Err(Error::InvalidConfig(format!("gamma must exceed 1, got {gamma}")))
        }
    }

    pub fn pressure(&self, u: &ConservedState) -> Result<f64> {
        u.check_admissible()?;
        Ok((self.gamma - 1.0) * u.internal_energy())
    }

    pub fn to_primitive(&self, u: &ConservedState) -> Result<PrimitiveState> {
        u.check_admissible()?;
        Ok(self.to_primitive_unchecked(u))
    }

    pub fn to_conserved(&self, w: &PrimitiveState) -> Result<ConservedState> {
        w.check_admissible()?;
        Ok(self.to_conserved_unchecked(w))
    }

    #[inline]
    pub fn to_primitive_unchecked(&self, u: &ConservedState) -> PrimitiveState {
        let vx = u.rho_u / u.rho;
        let vy = u.rho_v / u.rho;
        let p = (self.gamma - 1.0) * (u.rho_e - 0.5 * u.rho * (vx * vx + vy * vy));
        PrimitiveState::new(u.rho, vx, vy, p)
    }

    #[inline]
    pub fn to_conserved_unchecked(&self, w: &PrimitiveState) -> ConservedState {
        ConservedState::new(
            w.rho,
            w.rho * w.u,
            w.rho * w.v,
            w.p / (self.gamma - 1.0) + 0.5 * w.rho * (w.u * w.u + w.v * w.v),
        )
    }

    #[inline]
    pub fn sound_speed(&self, w: &PrimitiveState) -> f64 {
        (self.gamma * w.p / w.rho).sqrt()
    }

    /// Specific total enthalpy (rho e + p) / rho.
    #[inline]
    pub fn enthalpy(&self, w: &PrimitiveState) -> f64 {
        self.gamma / (self.gamma - 1.0) * w.p / w.rho + 0.5 * (w.u * w.u + w.v * w.v)
    }

    /// Flux of the Euler equations through a face with unit normal `n`.
    pub fn physical_flux(&self, w: &PrimitiveState, n: [f64; 2]) -> Vec4 {
        let q = w.u * n[0] + w.v * n[1];
        let rho_e = w.p / (self.gamma - 1.0) + 0.5 * w.rho * (w.u * w.u + w.v * w.v);
        let mass = w.rho * q;
        [
            mass,
            mass * w.u + w.p * n[0],
            mass * w.v + w.p * n[1],
            (rho_e + w.p) * q,
        ]
    }

    /// dU/dW evaluated at `w`.
    pub fn dudw(&self, w: &PrimitiveState) -> Mat4 {
        [
            [1.0, 0.0, 0.0, 0.0],
            [w.u, w.rho, 0.0, 0.0],
            [w.v, 0.0, w.rho, 0.0],
            [
                0.5 * (w.u * w.u + w.v * w.v),
                w.rho * w.u,
                w.rho * w.v,
                1.0 / (self.gamma - 1.0),
            ],
        ]
    }

    /// dW/dU evaluated at `w`; the exact inverse of [`GasModel::dudw`].
    pub fn dwdu(&self, w: &PrimitiveState) -> Mat4 {
        let g1 = self.gamma - 1.0;
        let r = 1.0 / w.rho;
        [
            [1.0, 0.0, 0.0, 0.0],
            [-w.u * r, r, 0.0, 0.0],
            [-w.v * r, 0.0, r, 0.0],
            [0.5 * g1 * (w.u * w.u + w.v * w.v), -g1 * w.u, -g1 * w.v, g1],
        ]
    }
}

#[inline]
pub fn mat_vec(m: &Mat4, x: &Vec4) -> Vec4 {
    let mut y = [0.0; 4];
    for (yi, row) in y.iter_mut().zip(m) {
        *yi = row[0] * x[0] + row[1] * x[1] + row[2] * x[2] + row[3] * x[3];
    }
    y
}

#[inline]
pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            if aik != 0.0 {
                for j in 0..4 {
                    c[i][j] += aik * b[k][j];
                }
            }
        }
    }
    c
}

pub const IDENTITY4: Mat4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];
