use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shockstab::eigen::{self, DenseMatrix};
use shockstab::euler::{ConservedState, GasModel, PrimitiveState, Vec4};
use shockstab::grid::{DistortionRule, GridSpec, StructuredGrid};
use shockstab::muscl::{self, LimiterKind, ReconstructionVariables};
use shockstab::riemann::{self, RiemannSolver, RiemannSolverKind};
use shockstab::solver::{self, BoundarySpec, Field, MarchOptions, ResidualOptions, RightBoundary, Scheme};

const GAS: GasModel = GasModel { gamma: 1.4 };
const SOLVERS: [RiemannSolverKind; 5] = [
    RiemannSolverKind::Roe,
    RiemannSolverKind::Hll,
    RiemannSolverKind::Hllc,
    RiemannSolverKind::VanLeer,
    RiemannSolverKind::AusmPlus,
];
const LIMITERS: [LimiterKind; 5] =
    [LimiterKind::None, LimiterKind::Minmod, LimiterKind::VanLeer, LimiterKind::VanAlbada, LimiterKind::Superbee];

fn state() -> impl Strategy<Value = PrimitiveState> {
    (0.1f64..10.0, -3.0f64..3.0, -3.0f64..3.0, 0.1f64..10.0).prop_map(|(r, u, v, p)| PrimitiveState::new(r, u, v, p))
}

fn unit_normal() -> impl Strategy<Value = [f64; 2]> {
    (0.0f64..std::f64::consts::TAU).prop_map(|t| [t.cos(), t.sin()])
}

fn cons(w: &PrimitiveState) -> Vec4 {
    GAS.to_conserved(w).unwrap().to_array()
}

#[test]
fn eigenvalues_match_nalgebra_on_random_matrix() {
    let n = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = DenseMatrix::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let ours = eigen::eigenvalues(&a).unwrap();
    let theirs = DMatrix::from_row_slice(n, n, a.as_slice()).complex_eigenvalues();
    let theirs: Vec<Complex64> = theirs.iter().map(|z| Complex64::new(z.re, z.im)).collect();
    let mut used = vec![false; n];
    for z in &ours {
        let (k, d) = theirs
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, w)| (k, (z - w).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        used[k] = true;
        assert!(d < 1e-8, "eigenvalue {z} has no partner (closest {d:e})");
    }
    let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
    assert_relative_eq!(ours.iter().map(|z| z.re).sum::<f64>(), trace, epsilon = 1e-9);
}

#[test]
fn ssp_rk3_reproduces_its_stability_polynomial() {
    for z in [Complex64::new(-0.3, 0.0), Complex64::new(-1.2, 0.7), Complex64::new(0.1, -2.0)] {
        // Real 2x2 embedding of u' = z u.
        let rhs = |u: &[f64]| vec![z.re * u[0] - z.im * u[1], z.im * u[0] + z.re * u[1]];
        let dt = 1.0;
        let u = solver::ssp_rk3(&[1.0, 0.0], dt, rhs);
        let expect = Complex64::new(1.0, 0.0) + z + z * z / 2.0 + z * z * z / 6.0;
        assert_relative_eq!(u[0], expect.re, epsilon = 1e-14);
        assert_relative_eq!(u[1], expect.im, epsilon = 1e-14);
    }
}

fn all_grids() -> Vec<StructuredGrid> {
    vec![
        GridSpec::cartesian(9, 7).build().unwrap(),
        GridSpec::aspect(9, 4, 3.0).build().unwrap(),
        GridSpec::distorted(9, 7, 25.0).build().unwrap(),
        GridSpec::distorted(9, 6, -33.0).with_rule(DistortionRule::Sawtooth).build().unwrap(),
        StructuredGrid::from_nodes(6, 5, |i, j| {
            let (x, y) = (i as f64, j as f64);
            [x + 0.2 * (0.9 * y).sin() * (i % 3) as f64, y + 0.15 * (1.3 * x).cos()]
        })
        .unwrap_or_else(|_| GridSpec::cartesian(6, 5).build().unwrap()),
    ]
}

#[test]
fn free_stream_is_preserved_on_every_grid() {
    let u = cons(&PrimitiveState::new(1.3, 2.1, -0.7, 0.9));
    for grid in all_grids() {
        let grid = Arc::new(grid);
        for solver in SOLVERS {
            for vars in [ReconstructionVariables::Conservative, ReconstructionVariables::Primitive] {
                let scheme = Scheme::new(solver, LimiterKind::VanAlbada).with_vars(vars);
                let mut f = Field::uniform(grid.clone(), u);
                f.apply_boundaries(&BoundarySpec { left: [u; 2], right: RightBoundary::Fixed([u; 2]) });
                let (r, _) = f.residual(&scheme, &ResidualOptions::default()).unwrap();
                assert!(solver::max_norm(&r) < 1e-12, "{solver} {vars}: {:e}", solver::max_norm(&r));
            }
        }
    }
}

#[test]
fn residual_telescopes_to_boundary_flux() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for grid in all_grids() {
        let grid = Arc::new(grid);
        let cells: Vec<Vec4> = (0..grid.nx() * grid.ny())
            .map(|_| {
                cons(&PrimitiveState::new(
                    rng.gen_range(0.5..2.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.5..2.0),
                ))
            })
            .collect();
        let nx = grid.nx();
        let mut f = Field::from_fn(grid.clone(), |i, j| cells[j * nx + i]);
        let ul = cons(&PrimitiveState::new(1.0, 1.5, 0.0, 1.0));
        f.apply_boundaries(&BoundarySpec::inflow_outflow(ul, 0.8));
        for solver in SOLVERS {
            let scheme = Scheme::new(solver, LimiterKind::Minmod);
            let (r, _) = f.residual(&scheme, &ResidualOptions::default()).unwrap();
            let out = f.boundary_flux(&scheme).unwrap();
            for k in 0..4 {
                let total: f64 = (0..f.ny())
                    .flat_map(|j| (0..f.nx()).map(move |i| (i, j)))
                    .map(|(i, j)| grid.volume(i, j) * r[j * f.nx() + i][k])
                    .sum();
                assert!((total + out[k]).abs() < 1e-11, "{solver} component {k}: {total} vs {}", -out[k]);
            }
        }
    }
}

/// Exact solution of the 1D Riemann problem sampled at x/t (ideal gas).
fn exact_riemann(l: (f64, f64, f64), r: (f64, f64, f64), s: f64, g: f64) -> (f64, f64, f64) {
    let (rl, ul, pl) = l;
    let (rr, ur, pr) = r;
    let (cl, cr) = ((g * pl / rl).sqrt(), (g * pr / rr).sqrt());
    let f = |p: f64, rk: f64, pk: f64, ck: f64| -> (f64, f64) {
        if p > pk {
            let a = 2.0 / ((g + 1.0) * rk);
            let b = (g - 1.0) / (g + 1.0) * pk;
            let q = (a / (p + b)).sqrt();
            ((p - pk) * q, q * (1.0 - 0.5 * (p - pk) / (p + b)))
        } else {
            let e = (g - 1.0) / (2.0 * g);
            (2.0 * ck / (g - 1.0) * ((p / pk).powf(e) - 1.0), (p / pk).powf(-(g + 1.0) / (2.0 * g)) / (rk * ck))
        }
    };
    let mut p = 0.5 * (pl + pr);
    for _ in 0..100 {
        let (fl, dl) = f(p, rl, pl, cl);
        let (fr, dr) = f(p, rr, pr, cr);
        let dp = (fl + fr + ur - ul) / (dl + dr);
        p = (p - dp).max(1e-12);
        if dp.abs() < 1e-14 * p {
            break;
        }
    }
    let um = 0.5 * (ul + ur) + 0.5 * (f(p, rr, pr, cr).0 - f(p, rl, pl, cl).0);
    let side = |rk: f64, uk: f64, pk: f64, ck: f64, sign: f64| -> (f64, f64, f64) {
        // sign = -1 for the left wave, +1 for the right wave.
        let gm = (g - 1.0) / (g + 1.0);
        if p > pk {
            let rs = rk * (p / pk + gm) / (gm * p / pk + 1.0);
            let sw = uk + sign * ck * ((g + 1.0) / (2.0 * g) * p / pk + (g - 1.0) / (2.0 * g)).sqrt();
            if sign * (s - sw) > 0.0 {
                (rk, uk, pk)
            } else {
                (rs, um, p)
            }
        } else {
            let rs = rk * (p / pk).powf(1.0 / g);
            let cs = ck * (p / pk).powf((g - 1.0) / (2.0 * g));
            let head = uk + sign * ck;
            let tail = um + sign * cs;
            if sign * (s - head) > 0.0 {
                (rk, uk, pk)
            } else if sign * (s - tail) < 0.0 {
                (rs, um, p)
            } else {
                let c = 2.0 / (g + 1.0) * (ck - sign * (g - 1.0) / 2.0 * (uk - s));
                let u = 2.0 / (g + 1.0) * (-sign * ck + (g - 1.0) / 2.0 * uk + s);
                let rho = rk * (c / ck).powf(2.0 / (g - 1.0));
                (rho, u, pk * (c / ck).powf(2.0 * g / (g - 1.0)))
            }
        }
    };
    if s < um {
        side(rl, ul, pl, cl, -1.0)
    } else {
        side(rr, ur, pr, cr, 1.0)
    }
}

fn sod_l1_error(solver: RiemannSolverKind, nx: usize) -> f64 {
    let dx = 1.0 / nx as f64;
    let l = cons(&PrimitiveState::new(1.0, 0.0, 0.0, 1.0));
    let r = cons(&PrimitiveState::new(0.125, 0.0, 0.0, 0.1));
    let grid = Arc::new(StructuredGrid::cartesian(nx, 1, dx, dx).unwrap());
    let mut f = Field::from_fn(grid, |i, _| if i < nx / 2 { l } else { r });
    let bc = BoundarySpec { left: [l; 2], right: RightBoundary::Fixed([r; 2]) };
    let scheme = Scheme::new(solver, LimiterKind::None);
    let opts = MarchOptions { cfl: 0.5, t_end: Some(0.2), tol: None, max_steps: 100_000 };
    solver::march(&mut f, &scheme, &bc, &ResidualOptions::default(), &opts, |_, _| {}).unwrap();
    (0..nx)
        .map(|i| {
            let x = (i as f64 + 0.5) * dx - 0.5;
            let (rho, _, _) = exact_riemann((1.0, 0.0, 1.0), (0.125, 0.0, 0.1), x / 0.2, 1.4);
            (f.cell(i, 0)[0] - rho).abs() * dx
        })
        .sum()
}

#[test]
fn sod_first_order_converges_to_exact_solution() {
    for solver in SOLVERS {
        let coarse = sod_l1_error(solver, 100);
        let fine = sod_l1_error(solver, 200);
        assert!(fine < 0.02, "{solver}: L1 density error {fine}");
        assert!(coarse / fine > 1.3, "{solver}: {coarse} -> {fine}");
    }
}

#[test]
fn muscl_is_second_order_on_smooth_data() {
    let errors: Vec<f64> = [40usize, 80, 160]
        .iter()
        .map(|&n| {
            let h = 1.0 / n as f64;
            let q = |i: isize| {
                // Cell average of exp(x) over cell i.
                let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
                let v = (b.exp() - a.exp()) / h;
                [v, 2.0 * v, 0.5, 1.0 + v]
            };
            let mut worst = 0.0f64;
            for i in 2..n as isize - 2 {
                let s = [q(i - 1), q(i), q(i + 1), q(i + 2)];
                let (ql, _) = muscl::reconstruct_face(LimiterKind::VanAlbada, [&s[0], &s[1], &s[2], &s[3]], muscl::ZERO_DIFF_TOL);
                let exact = ((i + 1) as f64 * h).exp();
                worst = worst.max((ql[0] - exact).abs());
            }
            worst
        })
        .collect();
    for w in errors.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate > 1.8, "observed order {rate}");
    }
}

#[test]
fn rankine_hugoniot_identities() {
    for m0 in [1.5, 2.0, 5.0, 10.0, 20.0] {
        let (ul, ur) = shockstab::shock::initial_states(m0, &GAS).unwrap();
        let wl = GAS.to_primitive(&ConservedState::from_array(ul)).unwrap();
        let wr = GAS.to_primitive(&ConservedState::from_array(ur)).unwrap();
        let fl = GAS.physical_flux(&wl, [1.0, 0.0]);
        let fr = GAS.physical_flux(&wr, [1.0, 0.0]);
        for k in 0..4 {
            assert!((fl[k] - fr[k]).abs() <= 1e-12 * fl[k].abs().max(1.0), "M0={m0} component {k}");
        }
        assert_relative_eq!(fl[0], 1.0, epsilon = 1e-12);
    }
}

proptest! {
    #[test]
    fn fluxes_are_consistent(w in state(), n in unit_normal()) {
        let phys = GAS.physical_flux(&w, n);
        for solver in SOLVERS {
            let f = RiemannSolver::from(solver).flux(&w, &w, n, &GAS).unwrap();
            for k in 0..4 {
                prop_assert!((f[k] - phys[k]).abs() <= 1e-10 * (1.0 + phys[k].abs()), "{} {}", solver, k);
            }
        }
    }

    #[test]
    fn fluxes_are_conservative(l in state(), r in state(), n in unit_normal()) {
        for solver in SOLVERS {
            let s = RiemannSolver::from(solver);
            let a = s.flux(&l, &r, n, &GAS).unwrap();
            let b = s.flux(&r, &l, [-n[0], -n[1]], &GAS).unwrap();
            for k in 0..4 {
                prop_assert!((a[k] + b[k]).abs() <= 1e-10 * (1.0 + a[k].abs()), "{} {}", solver, k);
            }
        }
    }

    #[test]
    fn roe_waves_decompose_jumps(l in state(), r in state()) {
        let (speeds, strengths, vectors) = riemann::roe_waves(&l, &r, &GAS).unwrap();
        let (ul, ur) = (cons(&l), cons(&r));
        let (fl, fr) = (GAS.physical_flux(&l, [1.0, 0.0]), GAS.physical_flux(&r, [1.0, 0.0]));
        for m in 0..4 {
            let du: f64 = (0..4).map(|k| strengths[k] * vectors[k][m]).sum();
            let df: f64 = (0..4).map(|k| speeds[k] * strengths[k] * vectors[k][m]).sum();
            prop_assert!((du - (ur[m] - ul[m])).abs() <= 1e-9 * (1.0 + ur[m].abs() + ul[m].abs()));
            prop_assert!((df - (fr[m] - fl[m])).abs() <= 1e-9 * (1.0 + fr[m].abs() + fl[m].abs()));
        }
    }

    #[test]
    fn roe_average_lies_between_states(l in state(), r in state()) {
        let avg = riemann::roe_average(&l, &r, &GAS).unwrap();
        prop_assert!(avg.u >= l.u.min(r.u) - 1e-12 && avg.u <= l.u.max(r.u) + 1e-12);
        prop_assert!(avg.rho >= l.rho.min(r.rho) - 1e-12 && avg.rho <= l.rho.max(r.rho) + 1e-12);
        prop_assert!(avg.a > 0.0);
    }

    #[test]
    fn limiters_stay_in_tvd_region(r in -10.0f64..10.0) {
        for lim in LIMITERS {
            let psi = lim.value(r);
            if r <= 0.0 {
                prop_assert!(psi == 0.0);
            } else {
                prop_assert!(psi >= 0.0 && psi <= (2.0 * r).min(2.0) + 1e-14, "{} {} {}", lim, r, psi);
            }
        }
    }

    #[test]
    fn symmetric_limiters(r in 0.01f64..100.0) {
        for lim in LIMITERS {
            prop_assert!((lim.value(r) / r - lim.value(1.0 / r)).abs() < 1e-12);
        }
    }

    #[test]
    fn conversions_round_trip(w in state()) {
        let u = GAS.to_conserved(&w).unwrap();
        let back = GAS.to_primitive(&u).unwrap();
        prop_assert!((back.rho - w.rho).abs() <= 1e-13 * w.rho);
        prop_assert!((back.u - w.u).abs() <= 1e-13 * (1.0 + w.u.abs()));
        prop_assert!((back.v - w.v).abs() <= 1e-13 * (1.0 + w.v.abs()));
        prop_assert!((back.p - w.p).abs() <= 1e-13 * (w.p + w.rho * (w.u * w.u + w.v * w.v)));
        for vars in [ReconstructionVariables::Conservative, ReconstructionVariables::Primitive] {
            let q = vars.from_conserved(&u.to_array(), &GAS);
            let w2 = vars.to_primitive(&q, &GAS);
            prop_assert!((w2.p - w.p).abs() <= 1e-12 * (w.p + w.rho * (w.u * w.u + w.v * w.v)));
        }
    }

    #[test]
    fn reconstruction_is_bounded_by_neighbours(a in prop::array::uniform4(-5.0f64..5.0)) {
        let s: Vec<Vec4> = a.iter().map(|&x| [x; 4]).collect();
        for lim in LIMITERS {
            let (ql, qr) = muscl::reconstruct_face(lim, [&s[0], &s[1], &s[2], &s[3]], muscl::ZERO_DIFF_TOL);
            let (lo, hi) = (a[1].min(a[2]), a[1].max(a[2]));
            prop_assert!(ql[0] >= a[0].min(a[1]).min(lo) - 1e-12 && ql[0] <= a[0].max(a[1]).max(hi) + 1e-12);
            prop_assert!(qr[0] >= a[3].min(a[2]).min(lo) - 1e-12 && qr[0] <= a[3].max(a[2]).max(hi) + 1e-12);
        }
    }
}
