//! Interface flux functions.
//!
//! Every solver is evaluated in the face-normal frame: velocities are
//! rotated into (normal, tangential) components, a one-dimensional flux is
//! computed, and the momentum components are rotated back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler::{GasModel, PrimitiveState, Vec4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiemannSolverKind {
    Roe,
    Hll,
    Hllc,
    VanLeer,
    AusmPlus,
}

impl RiemannSolverKind {
    pub const ALL: [RiemannSolverKind; 5] = [
        RiemannSolverKind::Roe,
        RiemannSolverKind::Hll,
        RiemannSolverKind::Hllc,
        RiemannSolverKind::VanLeer,
        RiemannSolverKind::AusmPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RiemannSolverKind::Roe => "roe",
            RiemannSolverKind::Hll => "hll",
            RiemannSolverKind::Hllc => "hllc",
            RiemannSolverKind::VanLeer => "vanleer",
            RiemannSolverKind::AusmPlus => "ausm+",
        }
    }
}

impl std::fmt::Display for RiemannSolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RiemannSolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "roe" => Ok(RiemannSolverKind::Roe),
            "hll" => Ok(RiemannSolverKind::Hll),
            "hllc" => Ok(RiemannSolverKind::Hllc),
            "vanleer" | "van-leer" | "vl" => Ok(RiemannSolverKind::VanLeer),
            "ausm+" | "ausmplus" | "ausm" => Ok(RiemannSolverKind::AusmPlus),
            other => Err(Error::InvalidConfig(format!("unknown Riemann solver '{other}'"))),
        }
    }
}

/// AUSM+ pressure-splitting coefficient.
pub const AUSM_ALPHA: f64 = 3.0 / 16.0;
/// AUSM+ Mach-splitting coefficient.
pub const AUSM_BETA: f64 = 1.0 / 8.0;

/// A flux function together with its tunables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiemannSolver {
    pub kind: RiemannSolverKind,
    /// Harten entropy-fix width for Roe, as a fraction of the averaged sound
    /// speed. `None` keeps the unmodified Roe scheme.
    pub entropy_fix: Option<f64>,
}

impl From<RiemannSolverKind> for RiemannSolver {
    fn from(kind: RiemannSolverKind) -> Self {
        Self { kind, entropy_fix: None }
    }
}

/// Numerical flux through a face with unit normal `n`, `wl` on the side the
/// normal points away from.
pub fn numerical_flux(
    kind: RiemannSolverKind,
    wl: &PrimitiveState,
    wr: &PrimitiveState,
    n: [f64; 2],
    gas: &GasModel,
) -> Result<Vec4> {
    RiemannSolver::from(kind).flux(wl, wr, n, gas)
}

impl RiemannSolver {
    pub fn flux(&self, wl: &PrimitiveState, wr: &PrimitiveState, n: [f64; 2], gas: &GasModel) -> Result<Vec4> {
        let l = rotate(wl, n);
        let r = rotate(wr, n);
        let f = match self.kind {
            RiemannSolverKind::Roe => roe_1d(&l, &r, gas, self.entropy_fix)?,
            RiemannSolverKind::Hll => hll_1d(&l, &r, gas),
            RiemannSolverKind::Hllc => hllc_1d(&l, &r, gas),
            RiemannSolverKind::VanLeer => van_leer_1d(&l, &r, gas),
            RiemannSolverKind::AusmPlus => ausm_plus_1d(&l, &r, gas),
        };
        let out = rotate_back(f, n);
        if out.iter().all(|x| x.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NonFiniteFlux {
                location: format!("{} flux, left {wl:?}, right {wr:?}", self.kind),
            })
        }
    }
}

/// State expressed with (normal, tangential) velocity components.
#[inline]
fn rotate(w: &PrimitiveState, n: [f64; 2]) -> PrimitiveState {
    PrimitiveState::new(w.rho, w.u * n[0] + w.v * n[1], -w.u * n[1] + w.v * n[0], w.p)
}

#[inline]
fn rotate_back(f: Vec4, n: [f64; 2]) -> Vec4 {
    [f[0], f[1] * n[0] - f[2] * n[1], f[1] * n[1] + f[2] * n[0], f[3]]
}

/// x-direction flux and conserved vector of a frame state.
#[inline]
fn flux_and_state(w: &PrimitiveState, gas: &GasModel) -> (Vec4, Vec4) {
    let e = w.p / (gas.gamma - 1.0) + 0.5 * w.rho * (w.u * w.u + w.v * w.v);
    let m = w.rho * w.u;
    (
        [m, m * w.u + w.p, m * w.v, (e + w.p) * w.u],
        [w.rho, m, w.rho * w.v, e],
    )
}

/// Roe-averaged state in the face frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoeAverage {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    pub h: f64,
    pub a: f64,
}

/// Density-weighted Roe average. Fails if the averaged sound speed is not real.
pub fn roe_average(l: &PrimitiveState, r: &PrimitiveState, gas: &GasModel) -> Result<RoeAverage> {
    let sl = l.rho.sqrt();
    let sr = r.rho.sqrt();
    let wl = sl / (sl + sr);
    let wr = 1.0 - wl;
    let u = wl * l.u + wr * r.u;
    let v = wl * l.v + wr * r.v;
    let h = wl * gas.enthalpy(l) + wr * gas.enthalpy(r);
    let a2 = (gas.gamma - 1.0) * (h - 0.5 * (u * u + v * v));
    if !(a2 > 0.0) || !a2.is_finite() {
        return Err(Error::NonFiniteFlux {
            location: format!("Roe average with a^2 = {a2:e}"),
        });
    }
    Ok(RoeAverage { rho: sl * sr, u, v, h, a: a2.sqrt() })
}

/// Wave speeds, strengths and right eigenvectors of the Roe matrix such that
/// `sum_k speed_k * strength_k * vector_k = F(U_R) - F(U_L)`.
pub fn roe_waves(l: &PrimitiveState, r: &PrimitiveState, gas: &GasModel) -> Result<([f64; 4], [f64; 4], [Vec4; 4])> {
    let RoeAverage { rho, u, v, h, a } = roe_average(l, r, gas)?;
    let dr = r.rho - l.rho;
    let du = r.u - l.u;
    let dv = r.v - l.v;
    let dp = r.p - l.p;
    let a2 = a * a;
    let strengths = [
        (dp - rho * a * du) / (2.0 * a2),
        dr - dp / a2,
        rho * dv,
        (dp + rho * a * du) / (2.0 * a2),
    ];
    let speeds = [u - a, u, u, u + a];
    let vectors = [
        [1.0, u - a, v, h - u * a],
        [1.0, u, v, 0.5 * (u * u + v * v)],
        [0.0, 0.0, 1.0, v],
        [1.0, u + a, v, h + u * a],
    ];
    Ok((speeds, strengths, vectors))
}

fn roe_1d(l: &PrimitiveState, r: &PrimitiveState, gas: &GasModel, fix: Option<f64>) -> Result<Vec4> {
    let (fl, _) = flux_and_state(l, gas);
    let (fr, _) = flux_and_state(r, gas);
    let (speeds, strengths, vectors) = roe_waves(l, r, gas)?;
    let a = roe_average(l, r, gas)?.a;
    let mut f = [0.0; 4];
    for k in 0..4 {
        f[k] = 0.5 * (fl[k] + fr[k]);
    }
    for w in 0..4 {
        let mut lam = speeds[w].abs();
        if let Some(eps) = fix {
            let d = eps * a;
            if lam < d {
                lam = (lam * lam + d * d) / (2.0 * d);
            }
        }
        let c = 0.5 * lam * strengths[w];
        for k in 0..4 {
            f[k] -= c * vectors[w][k];
        }
    }
    Ok(f)
}

/// Davis estimates of the slowest and fastest signal speeds.
#[inline]
pub fn davis_speeds(l: &PrimitiveState, r: &PrimitiveState, gas: &GasModel) -> (f64, f64) {
    let al = gas.sound_speed(l);
    let ar = gas.sound_speed(r);
    ((l.u - al).min(r.u - ar), (l.u + al).max(r.u + ar))
}

fn hll_1d(l: &PrimitiveState, r: &PrimitiveState, gas: &GasModel) -> Vec4 {
    let (fl, ul) = flux_and_state(l, gas);
    let (fr, ur) = flux_and_state(r, gas);
    let (sl, sr) = davis_speeds(l, r, gas);
    if sl >= 0.0 {
        return fl;
    }
    if sr <= 0.0 {
        return fr;
    }
    let mut f = [0.0; 4];
    for k in 0..4 {
        f[k] = (sr * fl[k] - sl * fr[k] + sl * sr * (ur[k] - ul[k])) / (sr - sl);
    }
    f
}

fn hllc_1d(l: &PrimitiveState, r: &PrimitiveState, gas: &GasModel) -> Vec4 {
    let (fl, ul) = flux_and_state(l, gas);
    let (fr, ur) = flux_and_state(r, gas);
    let (sl, sr) = davis_speeds(l, r, gas);
    if sl >= 0.0 {
        return fl;
    }
    if sr <= 0.0 {
        return fr;
    }
    let ml = l.rho * (sl - l.u);
    let mr = r.rho * (sr - r.u);
    let s_star = (r.p - l.p + l.u * ml - r.u * mr) / (ml - mr);
    let star = |w: &PrimitiveState, u: &Vec4, f: &Vec4, s: f64| -> Vec4 {
        let c = w.rho * (s - w.u) / (s - s_star);
        let energy = u[3] / w.rho + (s_star - w.u) * (s_star + w.p / (w.rho * (s - w.u)));
        let u_star = [c, c * s_star, c * w.v, c * energy];
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = f[k] + s * (u_star[k] - u[k]);
        }
        out
    };
    if s_star >= 0.0 {
        star(l, &ul, &fl, sl)
    } else {
        star(r, &ur, &fr, sr)
    }
}

fn van_leer_1d(l: &PrimitiveState, r: &PrimitiveState, gas: &GasModel) -> Vec4 {
    let g = gas.gamma;
    let split = |w: &PrimitiveState, sign: f64| -> Vec4 {
        let a = gas.sound_speed(w);
        let m = w.u / a;
        if m * sign >= 1.0 {
            return flux_and_state(w, gas).0;
        }
        if m * sign <= -1.0 {
            return [0.0; 4];
        }
        let mass = sign * w.rho * a * (m + sign).powi(2) / 4.0;
        let un = (g - 1.0) * w.u + sign * 2.0 * a;
        [
            mass,
            mass * un / g,
            mass * w.v,
            mass * (un * un / (2.0 * (g * g - 1.0)) + 0.5 * w.v * w.v),
        ]
    };
    let fp = split(l, 1.0);
    let fm = split(r, -1.0);
    [fp[0] + fm[0], fp[1] + fm[1], fp[2] + fm[2], fp[3] + fm[3]]
}

fn ausm_plus_1d(l: &PrimitiveState, r: &PrimitiveState, gas: &GasModel) -> Vec4 {
    let g = gas.gamma;
    let hl = gas.enthalpy(l);
    let hr = gas.enthalpy(r);
    let crit = |h: f64| (2.0 * (g - 1.0) / (g + 1.0) * h).sqrt();
    let asl = crit(hl);
    let asr = crit(hr);
    let al = asl * asl / asl.max(l.u);
    let ar = asr * asr / asr.max(-r.u);
    let a = al.min(ar);
    let ml = l.u / a;
    let mr = r.u / a;

    let mach_plus = |m: f64| {
        if m.abs() >= 1.0 {
            0.5 * (m + m.abs())
        } else {
            0.25 * (m + 1.0).powi(2) + AUSM_BETA * (m * m - 1.0).powi(2)
        }
    };
    let mach_minus = |m: f64| {
        if m.abs() >= 1.0 {
            0.5 * (m - m.abs())
        } else {
            -0.25 * (m - 1.0).powi(2) - AUSM_BETA * (m * m - 1.0).powi(2)
        }
    };
    let p_plus = |m: f64| {
        if m.abs() >= 1.0 {
            if m > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            0.25 * (m + 1.0).powi(2) * (2.0 - m) + AUSM_ALPHA * m * (m * m - 1.0).powi(2)
        }
    };
    let p_minus = |m: f64| {
        if m.abs() >= 1.0 {
            if m < 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            0.25 * (m - 1.0).powi(2) * (2.0 + m) - AUSM_ALPHA * m * (m * m - 1.0).powi(2)
        }
    };

    let m_half = mach_plus(ml) + mach_minus(mr);
    let p_half = p_plus(ml) * l.p + p_minus(mr) * r.p;
    let mp = 0.5 * (m_half + m_half.abs());
    let mm = 0.5 * (m_half - m_half.abs());
    let phi = |w: &PrimitiveState, h: f64| [w.rho, w.rho * w.u, w.rho * w.v, w.rho * h];
    let pl = phi(l, hl);
    let pr = phi(r, hr);
    let mut f = [0.0; 4];
    for k in 0..4 {
        f[k] = a * (mp * pl[k] + mm * pr[k]);
    }
    f[1] += p_half;
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const GAS: GasModel = GasModel { gamma: 1.4 };

    fn assert_vec_eq(a: Vec4, b: Vec4, tol: f64) {
        for k in 0..4 {
            assert!(
                (a[k] - b[k]).abs() <= tol * (1.0 + b[k].abs()),
                "component {k}: {a:?} vs {b:?}"
            );
        }
    }

    #[test]
    fn consistency_on_equal_states() {
        let w = PrimitiveState::new(1.0, 1.0, 0.0, 1.0);
        for kind in RiemannSolverKind::ALL {
            let f = numerical_flux(kind, &w, &w, [1.0, 0.0], &GAS).unwrap();
            assert_vec_eq(f, [1.0, 2.0, 0.0, 4.0], 1e-14);
        }
    }

    fn mach20_states() -> (PrimitiveState, PrimitiveState) {
        let g = 1.4;
        let m2 = 400.0;
        let f = 1.0 / (2.0 / ((g + 1.0) * m2) + (g - 1.0) / (g + 1.0));
        let gg = 2.0 * g * m2 / (g + 1.0) - (g - 1.0) / (g + 1.0);
        let p0 = 1.0 / (g * m2);
        (PrimitiveState::new(1.0, 1.0, 0.0, p0), PrimitiveState::new(f, 1.0 / f, 0.0, gg * p0))
    }

    #[test]
    fn roe_preserves_stationary_shock() {
        let (l, r) = mach20_states();
        let f = numerical_flux(RiemannSolverKind::Roe, &l, &r, [1.0, 0.0], &GAS).unwrap();
        assert_relative_eq!(f[0], 1.0, epsilon = 1e-12);
        assert_vec_eq(f, GAS.physical_flux(&l, [1.0, 0.0]), 1e-12);
    }

    #[test]
    fn hll_supersonic_is_upwind() {
        let l = PrimitiveState::new(1.0, 3.0, 0.2, 1.0);
        let r = PrimitiveState::new(1.2, 2.8, -0.1, 1.1);
        let (sl, _) = davis_speeds(&l, &r, &GAS);
        assert!(sl > 0.0);
        for kind in [RiemannSolverKind::Hll, RiemannSolverKind::Hllc, RiemannSolverKind::VanLeer] {
            let f = numerical_flux(kind, &l, &r, [1.0, 0.0], &GAS).unwrap();
            assert_vec_eq(f, GAS.physical_flux(&l, [1.0, 0.0]), 1e-14);
        }
    }

    #[test]
    fn roe_average_weights() {
        let l = PrimitiveState::new(1.0, 3.0, 0.0, 1.0);
        let r = PrimitiveState::new(4.0, 0.0, 0.0, 1.0);
        let avg = roe_average(&l, &r, &GAS).unwrap();
        // sqrt weights 1 and 2: left carries 1/3, right 2/3.
        assert_relative_eq!(avg.u, 1.0, epsilon = 1e-14);
        assert_relative_eq!(avg.rho, 2.0, epsilon = 1e-14);
        let same = roe_average(&l, &l, &GAS).unwrap();
        assert_relative_eq!(same.u, l.u, epsilon = 1e-15);
        assert_relative_eq!(same.a, GAS.sound_speed(&l), epsilon = 1e-14);
    }

    #[test]
    fn stationary_contact() {
        let l = PrimitiveState::new(1.0, 0.0, 0.0, 1.0);
        let r = PrimitiveState::new(3.0, 0.0, 0.0, 1.0);
        for kind in RiemannSolverKind::ALL {
            let f = numerical_flux(kind, &l, &r, [1.0, 0.0], &GAS).unwrap();
            match kind {
                RiemannSolverKind::Roe | RiemannSolverKind::Hllc => {
                    assert!(f[0].abs() < 1e-14, "{kind}: {f:?}")
                }
                RiemannSolverKind::Hll | RiemannSolverKind::VanLeer => {
                    assert!(f[0].abs() > 1e-3, "{kind}: {f:?}")
                }
                RiemannSolverKind::AusmPlus => {}
            }
        }
    }

    #[test]
    fn conservation_antisymmetry() {
        let l = PrimitiveState::new(1.1, 0.3, -0.4, 0.9);
        let r = PrimitiveState::new(0.7, -0.2, 0.5, 1.3);
        let n = [0.8, -0.6];
        for kind in RiemannSolverKind::ALL {
            let f = numerical_flux(kind, &l, &r, n, &GAS).unwrap();
            let g = numerical_flux(kind, &r, &l, [-n[0], -n[1]], &GAS).unwrap();
            for k in 0..4 {
                assert_relative_eq!(f[k], -g[k], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn entropy_fix_changes_only_near_sonic() {
        let l = PrimitiveState::new(1.0, 0.95, 0.0, 1.0 / 1.4);
        let r = PrimitiveState::new(1.05, 1.0, 0.0, 0.74);
        let plain = RiemannSolver::from(RiemannSolverKind::Roe).flux(&l, &r, [1.0, 0.0], &GAS).unwrap();
        let fixed = RiemannSolver { kind: RiemannSolverKind::Roe, entropy_fix: Some(0.2) }
            .flux(&l, &r, [1.0, 0.0], &GAS)
            .unwrap();
        assert!(plain.iter().zip(&fixed).any(|(a, b)| (a - b).abs() > 1e-8));
    }

    #[test]
    fn parse_names() {
        for kind in RiemannSolverKind::ALL {
            assert_eq!(kind.name().parse::<RiemannSolverKind>().unwrap(), kind);
        }
        assert!("godunov".parse::<RiemannSolverKind>().is_err());
    }
}
