//! Second-order MUSCL interface reconstruction with slope limiters.
//!
//! Limiting is applied to each component independently. When the
//! difference in the denominator of a ratio vanishes the corresponding
//! limiter value is set to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler::{ConservedState, GasModel, PrimitiveState, Vec4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LimiterKind {
    Superbee,
    VanLeer,
    VanAlbada,
    Minmod,
    /// Psi = 0 everywhere: the first-order scheme.
    None,
}

impl LimiterKind {
    pub const SECOND_ORDER: [LimiterKind; 4] =
        [LimiterKind::Superbee, LimiterKind::VanLeer, LimiterKind::VanAlbada, LimiterKind::Minmod];

    pub fn value(self, r: f64) -> f64 {
        match self {
            LimiterKind::Superbee => 0f64.max((2.0 * r).min(1.0)).max(r.min(2.0)),
            LimiterKind::VanLeer => {
                if r <= 0.0 {
                    0.0
                } else {
                    (r + r.abs()) / (1.0 + r)
                }
            }
            LimiterKind::VanAlbada => {
                if r <= 0.0 {
                    0.0
                } else {
                    (r * r + r) / (1.0 + r * r)
                }
            }
            LimiterKind::Minmod => 0f64.max(r.min(1.0)),
            LimiterKind::None => 0.0,
        }
    }

    pub fn is_first_order(self) -> bool {
        self == LimiterKind::None
    }

    pub fn name(self) -> &'static str {
        match self {
            LimiterKind::Superbee => "superbee",
            LimiterKind::VanLeer => "vanleer",
            LimiterKind::VanAlbada => "vanalbada",
            LimiterKind::Minmod => "minmod",
            LimiterKind::None => "none",
        }
    }
}

impl std::fmt::Display for LimiterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LimiterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "superbee" => Ok(LimiterKind::Superbee),
            "vanleer" | "van-leer" => Ok(LimiterKind::VanLeer),
            "vanalbada" | "van-albada" => Ok(LimiterKind::VanAlbada),
            "minmod" => Ok(LimiterKind::Minmod),
            "none" | "first" | "first-order" => Ok(LimiterKind::None),
            other => Err(Error::InvalidConfig(format!("unknown limiter '{other}'"))),
        }
    }
}

/// Variable set in which interface states are reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReconstructionVariables {
    Conservative,
    Primitive,
}

impl ReconstructionVariables {
    #[inline]
    pub fn from_conserved(self, u: &Vec4, gas: &GasModel) -> Vec4 {
        match self {
            ReconstructionVariables::Conservative => *u,
            ReconstructionVariables::Primitive => {
                gas.to_primitive_unchecked(&ConservedState::from_array(*u)).to_array()
            }
        }
    }

    #[inline]
    pub fn to_primitive(self, q: &Vec4, gas: &GasModel) -> PrimitiveState {
        match self {
            ReconstructionVariables::Conservative => {
                gas.to_primitive_unchecked(&ConservedState::from_array(*q))
            }
            ReconstructionVariables::Primitive => PrimitiveState::from_array(*q),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReconstructionVariables::Conservative => "cons",
            ReconstructionVariables::Primitive => "prim",
        }
    }
}

impl std::fmt::Display for ReconstructionVariables {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ReconstructionVariables {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cons" | "conservative" => Ok(ReconstructionVariables::Conservative),
            "prim" | "primitive" => Ok(ReconstructionVariables::Primitive),
            other => Err(Error::InvalidConfig(format!("unknown variable set '{other}'"))),
        }
    }
}

/// Default relative size below which a difference counts as zero.
pub const ZERO_DIFF_TOL: f64 = 1e-14;

#[inline]
fn is_zero_diff(d: f64, a: f64, b: f64, tol: f64) -> bool {
    d == 0.0 || d.abs() <= tol * a.abs().max(b.abs())
}

/// Ratios (r_L, r_R) for a face between `q0` and `q1` on the scalar stencil
/// `qm1, q0, q1, q2`. `None` marks a vanishing denominator.
pub fn ratios(qm1: f64, q0: f64, q1: f64, q2: f64, zero_tol: f64) -> (Option<f64>, Option<f64>) {
    let back = q0 - qm1;
    let centre = q1 - q0;
    let fwd = q2 - q1;
    let rl = (!is_zero_diff(back, q0, qm1, zero_tol)).then(|| centre / back);
    let rr = (!is_zero_diff(fwd, q2, q1, zero_tol)).then(|| centre / fwd);
    (rl, rr)
}

/// Per-component limiter values (Psi_L, Psi_R) on a four-cell stencil.
pub fn face_limiters(kind: LimiterKind, stencil: [&Vec4; 4], zero_tol: f64) -> (Vec4, Vec4) {
    let mut psi_l = [0.0; 4];
    let mut psi_r = [0.0; 4];
    if kind.is_first_order() {
        return (psi_l, psi_r);
    }
    for k in 0..4 {
        let (rl, rr) = ratios(stencil[0][k], stencil[1][k], stencil[2][k], stencil[3][k], zero_tol);
        psi_l[k] = rl.map_or(0.0, |r| kind.value(r));
        psi_r[k] = rr.map_or(0.0, |r| kind.value(r));
    }
    (psi_l, psi_r)
}

/// Left and right interface states for given limiter values.
#[inline]
pub fn reconstruct_with(stencil: [&Vec4; 4], psi_l: &Vec4, psi_r: &Vec4) -> (Vec4, Vec4) {
    let [qm1, q0, q1, q2] = stencil;
    let mut l = [0.0; 4];
    let mut r = [0.0; 4];
    for k in 0..4 {
        l[k] = q0[k] + 0.5 * psi_l[k] * (q0[k] - qm1[k]);
        r[k] = q1[k] - 0.5 * psi_r[k] * (q2[k] - q1[k]);
    }
    (l, r)
}

/// Limited reconstruction on a four-cell stencil `[i-1, i, i+1, i+2]` for
/// the face between cells `i` and `i+1`.
pub fn reconstruct_face(kind: LimiterKind, stencil: [&Vec4; 4], zero_tol: f64) -> (Vec4, Vec4) {
    let (psi_l, psi_r) = face_limiters(kind, stencil, zero_tol);
    reconstruct_with(stencil, &psi_l, &psi_r)
}
