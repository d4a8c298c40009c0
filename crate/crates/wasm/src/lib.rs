//! Browser entry points. Every function returns a JSON string; errors come
//! back as a rejected value carrying the message.

use serde_json::json;
use shockstab::grid::{GridKind, GridSpec};
use shockstab::muscl::LimiterKind;
use shockstab::riemann::RiemannSolverKind;
use shockstab::shock::{self, ShockConfig};
use shockstab::stability::{self, LocalizationCase, StabilityOptions};
use wasm_bindgen::prelude::*;

fn config(m0: f64, epsilon: f64, solver: &str, limiter: &str, nx: usize, ny: usize, alpha: f64) -> Result<ShockConfig, String> {
    let solver: RiemannSolverKind = solver.parse().map_err(|e| format!("{e}"))?;
    let limiter: LimiterKind = limiter.parse().map_err(|e| format!("{e}"))?;
    let grid = if alpha == 0.0 { GridSpec::cartesian(nx, ny) } else { GridSpec::distorted(nx, ny, alpha) };
    let c = ShockConfig::new(m0, epsilon, solver, limiter).with_grid(grid);
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

/// Spectrum of the stability matrix: `{max_real, neutral, by_wavenumber, eigenvalues: [[re, im], ...]}`.
/// `limiter = "none"` gives the first-order scheme.
#[wasm_bindgen]
pub fn analyze_spectrum(
    m0: f64,
    epsilon: f64,
    solver: &str,
    limiter: &str,
    nx: usize,
    ny: usize,
    alpha: f64,
) -> Result<String, String> {
    let c = config(m0, epsilon, solver, limiter, nx, ny, alpha)?;
    let an = stability::analyze(&c, LocalizationCase::Full, &StabilityOptions::default(), false).map_err(|e| e.to_string())?;
    let sp = &an.spectrum;
    let eig: Vec<[f64; 2]> = sp.spectrum.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
    let by_k: Vec<f64> = sp.max_real_by_wavenumber.clone();
    Ok(json!({
        "max_real": sp.max_real,
        "neutral": sp.neutral,
        "matrix_size": an.matrix_size,
        "mass_flux_fix": c.uses_mass_flux_fix(),
        "by_wavenumber": by_k,
        "eigenvalues": eig,
    })
    .to_string())
}

/// Converged one-dimensional shock profile: `{shock_cell, rho: [...], u: [...], p: [...]}`.
#[wasm_bindgen]
pub fn shock_profile(m0: f64, epsilon: f64, solver: &str, limiter: &str, nx: usize) -> Result<String, String> {
    let c = config(m0, epsilon, solver, limiter, nx, 1, 0.0)?;
    let p = shock::solve_1d_steady(&c).map_err(|e| e.to_string())?;
    let gas = &c.scheme.gas;
    let w: Vec<_> = p.cells.iter().map(|u| gas.to_primitive_unchecked(&shockstab::euler::ConservedState::from_array(*u))).collect();
    Ok(json!({
        "shock_cell": c.shock_cell(),
        "residual": p.report.residual,
        "rho": w.iter().map(|s| s.rho).collect::<Vec<_>>(),
        "u": w.iter().map(|s| s.u).collect::<Vec<_>>(),
        "p": w.iter().map(|s| s.p).collect::<Vec<_>>(),
    })
    .to_string())
}

/// Grid nodes as `{nx, ny, x: [...], y: [...]}`, row-major over (nx+1) x (ny+1) nodes.
#[wasm_bindgen]
pub fn grid_nodes(nx: usize, ny: usize, alpha: f64, aspect: f64) -> Result<String, String> {
    let mut spec = GridSpec::distorted(nx, ny, alpha);
    spec.aspect = aspect;
    if alpha == 0.0 {
        spec.kind = if aspect == 1.0 { GridKind::Cartesian } else { GridKind::Aspect };
    }
    let g = spec.build().map_err(|e| e.to_string())?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for j in 0..=ny {
        for i in 0..=nx {
            let p = g.node(i, j);
            x.push(p[0]);
            y.push(p[1]);
        }
    }
    Ok(json!({ "nx": nx, "ny": ny, "x": x, "y": y }).to_string())
}
