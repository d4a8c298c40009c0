use approx::assert_relative_eq;
use proptest::prelude::*;
use shockstab::euler::GasModel;
use shockstab::muscl::LimiterKind;
use shockstab::riemann::RiemannSolverKind;
use shockstab::shock::{self, ErrorHistory, FitParams, GrowthClass, MassFluxFix, ShockConfig};
use shockstab::solver::{self, ResidualOptions, STEADY_TOL};
use shockstab::Error;

fn roe(m0: f64, eps: f64) -> ShockConfig {
    ShockConfig::new(m0, eps, RiemannSolverKind::Roe, LimiterKind::VanAlbada)
}

#[test]
fn roe_half_cell_shock_converges_without_fix() {
    let c = roe(20.0, 0.5);
    assert!(!c.uses_mass_flux_fix());
    let p = shock::solve_1d_steady(&c).unwrap();
    assert!(p.report.residual < STEADY_TOL);
    assert!(!p.mass_flux_fix);
}

#[test]
fn roe_fixed_profile_keeps_one_interior_point() {
    let c = roe(20.0, 0.1);
    assert!(c.uses_mass_flux_fix());
    let p = shock::solve_1d_steady(&c).unwrap();
    assert!(p.report.residual < STEADY_TOL);
    let (ul, _, ur) = c.states().unwrap();
    let is = c.shock_cell();
    let mid = p.cells[is];
    assert!(mid[0] > ul[0] * 1.01 && mid[0] < ur[0] * 0.99, "interior density {}", mid[0]);
    for i in 0..is {
        assert_relative_eq!(p.cells[i][0], ul[0], max_relative = 1e-9);
    }
}

#[test]
fn roe_without_fix_reports_non_convergence() {
    let mut c = roe(20.0, 0.1);
    c.mass_flux_fix = MassFluxFix::Off;
    c.max_steps_1d = 20_000;
    // The unfixed single-point shock either drifts forever or settles on a
    // different discrete shock; it must never panic.
    match shock::solve_1d_steady(&c) {
        Err(Error::NonConvergence { history, .. }) => assert!(!history.is_empty() || c.max_steps_1d > 0),
        Err(e) => panic!("unexpected error {e}"),
        Ok(p) => assert!(!p.mass_flux_fix),
    }
}

#[test]
fn steady_profiles_for_all_solvers() {
    for solver in [
        RiemannSolverKind::Roe,
        RiemannSolverKind::Hll,
        RiemannSolverKind::Hllc,
        RiemannSolverKind::VanLeer,
        RiemannSolverKind::AusmPlus,
    ] {
        let c = ShockConfig::new(20.0, 0.1, solver, LimiterKind::VanAlbada);
        let p = shock::solve_1d_steady(&c).unwrap_or_else(|e| panic!("{solver}: {e}"));
        let grid = c.grid_1d().unwrap();
        let mut f = shock::project(&p.cells, grid).unwrap();
        let fix = p.mass_flux_fix.then(|| c.shock_cell());
        let opts = ResidualOptions { frozen: None, mass_flux_fix: fix };
        let r = f.residual_norm(&c.scheme, &c.boundaries().unwrap(), &opts).unwrap();
        assert!(r < 1e-9, "{solver}: {r:e}");
    }
}

#[test]
fn perturbation_amplitude_and_determinism() {
    let c = roe(5.0, 0.5);
    let p = shock::solve_1d_steady(&c).unwrap();
    let a = shock::project_and_perturb(&c, &p).unwrap();
    let b = shock::project_and_perturb(&c, &p).unwrap();
    assert_eq!(a, b);
    assert!(a.max_abs_v() > 0.0 && a.max_abs_v() <= 1e-7 * 1.0001);
    let mut zero = c.clone();
    zero.delta = 0.0;
    assert_eq!(shock::project_and_perturb(&zero, &p).unwrap().max_abs_v(), 0.0);
}

#[test]
fn fifty_wide_grid_places_shock_at_centre() {
    let c = roe(20.0, 0.1).with_grid(shockstab::grid::GridSpec::cartesian(50, 5));
    assert_eq!(c.shock_cell(), 24);
}

#[test]
fn intermediate_state_is_monotone_in_epsilon() {
    let gas = GasModel::default();
    for m0 in [2.0, 5.0, 10.0, 20.0] {
        let w: Vec<_> = (0..=100).map(|k| shock::intermediate_state(m0, k as f64 / 100.0, &gas).unwrap()).collect();
        for p in w.windows(2) {
            assert!(p[1].rho >= p[0].rho);
            assert!(p[1].u <= p[0].u);
            assert!(p[1].p >= p[0].p);
        }
    }
}

#[test]
fn stable_hll_run_decays() {
    let mut c = ShockConfig::new(20.0, 0.5, RiemannSolverKind::Hll, LimiterKind::VanAlbada);
    c.t_end = 150.0;
    let sim = shock::simulate(&c).unwrap();
    let fit = sim.fit.unwrap();
    assert!(fit.lambda < 0.0, "lambda {}", fit.lambda);
    assert!(sim.breakdown.is_none());
}

#[test]
fn march_reaches_steady_tolerance_from_profile() {
    let c = roe(10.0, 0.5);
    let p = shock::solve_1d_steady(&c).unwrap();
    let mut f = shock::project(&p.cells, c.grid_1d().unwrap()).unwrap();
    let bc = c.boundaries().unwrap();
    let opts = solver::MarchOptions { cfl: 0.1, t_end: None, tol: Some(STEADY_TOL), max_steps: 10 };
    let rep = solver::march(&mut f, &c.scheme, &bc, &ResidualOptions::default(), &opts, |_, _| {}).unwrap();
    assert!(rep.converged);
}

fn synthetic(lambda: f64, v0: f64, shift: f64) -> ErrorHistory {
    let mut h = ErrorHistory::default();
    for k in 0..400 {
        let t = k as f64 * 0.1;
        // Flat floor, exponential stage, then saturation.
        let v = (v0 * (lambda * (t - 10.0)).exp()).clamp(v0, v0 * 1e6);
        h.push(t + shift, v);
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn growth_fit_is_shift_and_scale_equivariant(lambda in 0.5f64..2.0, scale in 1e-3f64..1e3, shift in -50.0f64..50.0) {
        let p = FitParams::default();
        let base = shock::fit_growth_rate(&synthetic(lambda, 1e-7, 0.0), &p).unwrap();
        let moved = shock::fit_growth_rate(&synthetic(lambda, 1e-7 * scale, shift), &p).unwrap();
        prop_assert_eq!(base.class, GrowthClass::Growing);
        prop_assert!((base.lambda - lambda).abs() < 1e-6 * lambda);
        prop_assert!((moved.lambda - base.lambda).abs() < 1e-9);
        prop_assert!((moved.t0 - base.t0 - shift).abs() < 1e-9);
        prop_assert!((moved.v0 / base.v0 / scale - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rankine_hugoniot_for_any_mach(m0 in 1.01f64..30.0) {
        let gas = GasModel::default();
        let (ul, ur) = shock::initial_states(m0, &gas).unwrap();
        let f = |u: [f64; 4]| {
            let w = gas.to_primitive(&shockstab::euler::ConservedState::from_array(u)).unwrap();
            gas.physical_flux(&w, [1.0, 0.0])
        };
        let (fl, fr) = (f(ul), f(ur));
        for k in 0..4 {
            prop_assert!((fl[k] - fr[k]).abs() <= 1e-12 * fl[k].abs().max(1.0));
        }
    }
}
