//! Semi-discrete finite-volume residual, ghost-cell boundaries and SSP-RK3
//! time marching on a structured grid.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler::{ConservedState, GasModel, PrimitiveState, Vec4};
use crate::grid::{StructuredGrid, GHOST_DEPTH};
use crate::muscl::{self, LimiterKind, ReconstructionVariables};
use crate::riemann::{RiemannSolver, RiemannSolverKind};

/// Steady-state tolerance on the max-norm of the residual.
pub const STEADY_TOL: f64 = 1e-10;

/// Shu-Osher stages `u = a u0 + b u + c dt R(u)` of the third-order SSP
/// Runge-Kutta method.
pub const SSP_RK3: [(f64, f64, f64); 3] = [(0.0, 1.0, 1.0), (0.75, 0.25, 0.25), (1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0)];

/// One SSP-RK3 step of `du/dt = rhs(u)` on a plain vector.
pub fn ssp_rk3(u0: &[f64], dt: f64, mut rhs: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut u = u0.to_vec();
    for &(a, b, c) in &SSP_RK3 {
        let r = rhs(&u);
        for k in 0..u.len() {
            u[k] = a * u0[k] + b * u[k] + c * dt * r[k];
        }
    }
    u
}

/// Grids with at least this many cells evaluate the residual in parallel.
const PARALLEL_CELLS: usize = 2048;

/// Spatial discretization: flux function, limiter and reconstruction set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub solver: RiemannSolver,
    pub limiter: LimiterKind,
    pub vars: ReconstructionVariables,
    pub gas: GasModel,
    /// Relative size under which a limiter-ratio denominator counts as zero.
    pub zero_tol: f64,
}

impl Scheme {
    pub fn new(solver: RiemannSolverKind, limiter: LimiterKind) -> Self {
        Self {
            solver: solver.into(),
            limiter,
            vars: ReconstructionVariables::Conservative,
            gas: GasModel::default(),
            zero_tol: muscl::ZERO_DIFF_TOL,
        }
    }

    pub fn with_vars(mut self, vars: ReconstructionVariables) -> Self {
        self.vars = vars;
        self
    }

    pub fn with_gas(mut self, gas: GasModel) -> Self {
        self.gas = gas;
        self
    }

    pub fn first_order(mut self) -> Self {
        self.limiter = LimiterKind::None;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RightBoundary {
    /// Zeroth-order extrapolation with the x-momentum overwritten.
    MassFluxOutflow(f64),
    /// Ghost states (first layer, second layer) held fixed.
    Fixed([Vec4; 2]),
}

/// Ghost-cell boundary conditions. The j direction is always periodic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    /// Left ghost states: `left[0]` at i = -1, `left[1]` at i = -2.
    pub left: [Vec4; 2],
    pub right: RightBoundary,
}

impl BoundarySpec {
    pub fn inflow_outflow(inflow: Vec4, mass_flux: f64) -> Self {
        Self { left: [inflow; 2], right: RightBoundary::MassFluxOutflow(mass_flux) }
    }
}

/// Cell averages of the conserved variables with two ghost layers on every side.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<StructuredGrid>,
    nx: usize,
    ny: usize,
    data: Vec<Vec4>,
    pub t: f64,
}

/// Per-face limiter values (Psi_L, Psi_R).
#[derive(Debug, Clone, PartialEq)]
pub struct LimiterTable {
    nx: usize,
    /// x-faces, index `j * (nx + 1) + i`.
    pub x: Vec<(Vec4, Vec4)>,
    /// y-faces, index `j * nx + i`.
    pub y: Vec<(Vec4, Vec4)>,
}

impl LimiterTable {
    pub fn x_face(&self, i: usize, j: usize) -> &(Vec4, Vec4) {
        &self.x[j * (self.nx + 1) + i]
    }

    pub fn y_face(&self, i: usize, j: usize) -> &(Vec4, Vec4) {
        &self.y[j * self.nx + i]
    }
}

/// Options for one residual evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ResidualOptions<'a> {
    /// Use these limiter values instead of evaluating them from the field.
    pub frozen: Option<&'a LimiterTable>,
    /// Shock-cell index for the mass-flux fix: on every row the mass flux of
    /// the face downstream of this cell is replaced by that of the upstream face.
    pub mass_flux_fix: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// Faces where the reconstruction was inadmissible and first order was used.
    pub first_order_fallbacks: usize,
}

impl Field {
    pub fn uniform(grid: Arc<StructuredGrid>, u: Vec4) -> Self {
        Self::from_fn(grid, |_, _| u)
    }

    pub fn from_fn(grid: Arc<StructuredGrid>, f: impl Fn(usize, usize) -> Vec4) -> Self {
        let nx = grid.nx();
        let ny = grid.ny();
        let g = GHOST_DEPTH;
        let mut field = Field { grid, nx, ny, data: vec![[0.0; 4]; (nx + 2 * g) * (ny + 2 * g)], t: 0.0 };
        for j in 0..ny {
            for i in 0..nx {
                *field.get_mut(i as isize, j as isize) = f(i, j);
            }
        }
        field
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<StructuredGrid> {
        &self.grid
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    fn idx(&self, i: isize, j: isize) -> usize {
        let g = GHOST_DEPTH as isize;
        debug_assert!(i >= -g && i < self.nx as isize + g && j >= -g && j < self.ny as isize + g);
        ((j + g) * (self.nx as isize + 2 * g) + (i + g)) as usize
    }

    /// State at (i, j); ghost indices down to -2 and up to n+1 are valid.
    #[inline]
    pub fn get(&self, i: isize, j: isize) -> &Vec4 {
        &self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn get_mut(&mut self, i: isize, j: isize) -> &mut Vec4 {
        let k = self.idx(i, j);
        &mut self.data[k]
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> &Vec4 {
        self.get(i as isize, j as isize)
    }

    /// Interior states in row-major order (j outer).
    pub fn interior(&self) -> Vec<Vec4> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push(*self.cell(i, j));
            }
        }
        out
    }

    pub fn set_interior(&mut self, values: &[Vec4]) {
        assert_eq!(values.len(), self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                *self.get_mut(i as isize, j as isize) = values[j * self.nx + i];
            }
        }
    }

    pub fn primitive(&self, i: usize, j: usize, gas: &GasModel) -> PrimitiveState {
        gas.to_primitive_unchecked(&ConservedState::from_array(*self.cell(i, j)))
    }

    /// Max over interior cells of |v|.
    pub fn max_abs_v(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let u = self.cell(i, j);
                m = m.max((u[2] / u[0]).abs());
            }
        }
        m
    }

    pub fn check_admissible(&self, gas: &GasModel) -> Result<()> {
        for j in 0..self.ny {
            for i in 0..self.nx {
                let u = ConservedState::from_array(*self.cell(i, j));
                gas.to_primitive(&u)?;
            }
        }
        Ok(())
    }

    pub fn apply_boundaries(&mut self, bc: &BoundarySpec) {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        for j in 0..ny {
            *self.get_mut(-1, j) = bc.left[0];
            *self.get_mut(-2, j) = bc.left[1];
            match bc.right {
                RightBoundary::MassFluxOutflow(m) => {
                    let mut g = *self.get(nx - 1, j);
                    g[1] = m;
                    *self.get_mut(nx, j) = g;
                    *self.get_mut(nx + 1, j) = g;
                }
                RightBoundary::Fixed(r) => {
                    *self.get_mut(nx, j) = r[0];
                    *self.get_mut(nx + 1, j) = r[1];
                }
            }
        }
        self.wrap_periodic();
    }

    /// Fill the j-ghost layers from the periodic interior rows.
    pub fn wrap_periodic(&mut self) {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let g = GHOST_DEPTH as isize;
        for i in -g..nx + g {
            for k in 1..=g {
                *self.get_mut(i, -k) = *self.get(i, (-k).rem_euclid(ny));
                *self.get_mut(i, ny - 1 + k) = *self.get(i, (k - 1).rem_euclid(ny));
            }
        }
    }

    /// Limiter values evaluated on the current field (ghosts must be filled).
    pub fn limiter_table(&self, scheme: &Scheme) -> LimiterTable {
        let (nx, ny) = (self.nx, self.ny);
        let mut x = Vec::with_capacity((nx + 1) * ny);
        let mut y = Vec::with_capacity(nx * ny);
        for j in 0..ny as isize {
            for i in 0..=nx as isize {
                let s = self.recon_stencil_x(i, j, scheme);
                x.push(muscl::face_limiters(scheme.limiter, [&s[0], &s[1], &s[2], &s[3]], scheme.zero_tol));
            }
        }
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let s = self.recon_stencil_y(i, j, scheme);
                y.push(muscl::face_limiters(scheme.limiter, [&s[0], &s[1], &s[2], &s[3]], scheme.zero_tol));
            }
        }
        LimiterTable { nx, x, y }
    }

    #[inline]
    fn recon_stencil_x(&self, i: isize, j: isize, scheme: &Scheme) -> [Vec4; 4] {
        [-2, -1, 0, 1].map(|d| scheme.vars.from_conserved(self.get(i + d, j), &scheme.gas))
    }

    #[inline]
    fn recon_stencil_y(&self, i: isize, j: isize, scheme: &Scheme) -> [Vec4; 4] {
        [-2, -1, 0, 1].map(|d| scheme.vars.from_conserved(self.get(i, j + d), &scheme.gas))
    }

    /// Flux density through a face given its reconstruction stencil.
    fn face_flux(
        stencil: &[Vec4; 4],
        psi: Option<&(Vec4, Vec4)>,
        normal: [f64; 2],
        scheme: &Scheme,
        fallbacks: &mut usize,
    ) -> Result<Vec4> {
        let st = [&stencil[0], &stencil[1], &stencil[2], &stencil[3]];
        let (psi_l, psi_r) = match psi {
            Some(p) => *p,
            None => muscl::face_limiters(scheme.limiter, st, scheme.zero_tol),
        };
        let (ql, qr) = muscl::reconstruct_with(st, &psi_l, &psi_r);
        let mut wl = scheme.vars.to_primitive(&ql, &scheme.gas);
        let mut wr = scheme.vars.to_primitive(&qr, &scheme.gas);
        if !(wl.rho > 0.0 && wl.p > 0.0 && wr.rho > 0.0 && wr.p > 0.0) {
            *fallbacks += 1;
            wl = scheme.vars.to_primitive(&stencil[1], &scheme.gas);
            wr = scheme.vars.to_primitive(&stencil[2], &scheme.gas);
        }
        scheme.solver.flux(&wl, &wr, normal, &scheme.gas)
    }

    /// Flux densities of row j's x-faces (nx + 1 values).
    fn row_x_fluxes(&self, j: usize, scheme: &Scheme, opts: &ResidualOptions, out: &mut [Vec4]) -> Result<usize> {
        let mut fallbacks = 0;
        for i in 0..=self.nx {
            let face = self.grid.x_face(i, j);
            let s = self.recon_stencil_x(i as isize, j as isize, scheme);
            let psi = opts.frozen.map(|t| t.x_face(i, j));
            out[i] = Self::face_flux(&s, psi, face.normal, scheme, &mut fallbacks)?;
        }
        if let Some(is) = opts.mass_flux_fix {
            if is + 1 <= self.nx {
                out[is + 1][0] = out[is][0];
            }
        }
        Ok(fallbacks)
    }

    /// Flux densities of row j's lower y-faces (nx values).
    fn row_y_fluxes(&self, j: usize, scheme: &Scheme, opts: &ResidualOptions, out: &mut [Vec4]) -> Result<usize> {
        let mut fallbacks = 0;
        for i in 0..self.nx {
            let face = self.grid.y_face(i, j);
            let s = self.recon_stencil_y(i as isize, j as isize, scheme);
            let psi = opts.frozen.map(|t| t.y_face(i, j));
            out[i] = Self::face_flux(&s, psi, face.normal, scheme, &mut fallbacks)?;
        }
        Ok(fallbacks)
    }

    /// dU/dt for every interior cell (row-major, j outer). Ghosts must be filled.
    pub fn residual(&self, scheme: &Scheme, opts: &ResidualOptions) -> Result<(Vec<Vec4>, ResidualStats)> {
        let (nx, ny) = (self.nx, self.ny);
        let mut xf = vec![[0.0; 4]; (nx + 1) * ny];
        let mut yf = vec![[0.0; 4]; nx * ny];
        let fallbacks: usize = if nx * ny >= PARALLEL_CELLS {
            let a: Result<usize> = xf
                .par_chunks_mut(nx + 1)
                .enumerate()
                .map(|(j, row)| self.row_x_fluxes(j, scheme, opts, row))
                .sum();
            let b: Result<usize> =
                yf.par_chunks_mut(nx).enumerate().map(|(j, row)| self.row_y_fluxes(j, scheme, opts, row)).sum();
            a? + b?
        } else {
            let mut n = 0;
            for (j, row) in xf.chunks_mut(nx + 1).enumerate() {
                n += self.row_x_fluxes(j, scheme, opts, row)?;
            }
            for (j, row) in yf.chunks_mut(nx).enumerate() {
                n += self.row_y_fluxes(j, scheme, opts, row)?;
            }
            n
        };

        let grid = &*self.grid;
        let mut res = vec![[0.0; 4]; nx * ny];
        for j in 0..ny {
            let jn = (j + 1) % ny;
            for i in 0..nx {
                let fw = &xf[j * (nx + 1) + i];
                let fe = &xf[j * (nx + 1) + i + 1];
                let fs = &yf[j * nx + i];
                let fnn = &yf[jn * nx + i];
                let lw = grid.x_face(i, j).length;
                let le = grid.x_face(i + 1, j).length;
                let ls = grid.y_face(i, j).length;
                let ln = grid.y_face(i, jn).length;
                let inv = 1.0 / grid.volume(i, j);
                let r = &mut res[j * nx + i];
                for k in 0..4 {
                    r[k] = -inv * (le * fe[k] - lw * fw[k] + ln * fnn[k] - ls * fs[k]);
                }
            }
        }
        Ok((res, ResidualStats { first_order_fallbacks: fallbacks }))
    }

    /// Net flux leaving the domain through the x-boundaries, summed over rows
    /// (length-weighted, right minus left). Ghosts must be filled.
    pub fn boundary_flux(&self, scheme: &Scheme) -> Result<Vec4> {
        let mut total = [0.0; 4];
        let mut row = vec![[0.0; 4]; self.nx + 1];
        let opts = ResidualOptions::default();
        for j in 0..self.ny {
            self.row_x_fluxes(j, scheme, &opts, &mut row)?;
            let lw = self.grid.x_face(0, j).length;
            let le = self.grid.x_face(self.nx, j).length;
            for k in 0..4 {
                total[k] += le * row[self.nx][k] - lw * row[0][k];
            }
        }
        Ok(total)
    }

    pub fn stable_dt(&self, cfl: f64, gas: &GasModel) -> f64 {
        let mut dt = f64::INFINITY;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let w = self.primitive(i, j, gas);
                let speed = w.u.abs() + w.v.abs() + gas.sound_speed(&w);
                dt = dt.min(self.grid.char_length(i, j) / speed);
            }
        }
        cfl * dt
    }

    fn axpy_interior(&mut self, base: &[Vec4], a: f64, b: f64, c: f64, res: &[Vec4]) {
        // self := a * base + b * self + c * res
        let nx = self.nx;
        for j in 0..self.ny {
            for i in 0..nx {
                let k = j * nx + i;
                let u = self.get_mut(i as isize, j as isize);
                for m in 0..4 {
                    u[m] = a * base[k][m] + b * u[m] + c * res[k][m];
                }
            }
        }
    }

    /// One SSP-RK3 step. Returns the max-norm of the residual at the start of
    /// the step together with the accumulated statistics.
    pub fn rk3_step(
        &mut self,
        dt: f64,
        scheme: &Scheme,
        bc: &BoundarySpec,
        opts: &ResidualOptions,
    ) -> Result<(f64, ResidualStats)> {
        let u0 = self.interior();
        let mut stats = ResidualStats::default();
        let mut norm = 0.0;
        for (stage, &(a, b, c)) in SSP_RK3.iter().enumerate() {
            self.apply_boundaries(bc);
            let (r, s) = self.residual(scheme, opts)?;
            if stage == 0 {
                norm = max_norm(&r);
            }
            stats.first_order_fallbacks += s.first_order_fallbacks;
            self.axpy_interior(&u0, a, b, c * dt, &r);
            self.check_admissible(&scheme.gas)?;
        }
        self.apply_boundaries(bc);
        self.t += dt;
        Ok((norm, stats))
    }

    /// Interior residual max-norm with ghosts refreshed.
    pub fn residual_norm(&mut self, scheme: &Scheme, bc: &BoundarySpec, opts: &ResidualOptions) -> Result<f64> {
        self.apply_boundaries(bc);
        Ok(max_norm(&self.residual(scheme, opts)?.0))
    }

    /// Cell-centred snapshot as CSV: `i,j,x,y,rho,u,v,p`.
    pub fn write_csv<W: Write>(&self, gas: &GasModel, mut out: W) -> Result<()> {
        writeln!(out, "i,j,x,y,rho,u,v,p")?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let c = self.grid.centroid(i, j);
                let w = self.primitive(i, j, gas);
                writeln!(out, "{i},{j},{:.10e},{:.10e},{:.17e},{:.17e},{:.17e},{:.17e}", c[0], c[1], w.rho, w.u, w.v, w.p)?;
            }
        }
        Ok(())
    }
}

pub fn max_norm(r: &[Vec4]) -> f64 {
    r.iter().flat_map(|x| x.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
}

/// When to stop marching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarchOptions {
    pub cfl: f64,
    /// Final time; `None` runs until converged or out of steps.
    pub t_end: Option<f64>,
    /// Stop once the residual max-norm drops below this value.
    pub tol: Option<f64>,
    pub max_steps: usize,
}

impl Default for MarchOptions {
    fn default() -> Self {
        Self { cfl: 0.1, t_end: None, tol: Some(STEADY_TOL), max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarchReport {
    pub steps: usize,
    pub t: f64,
    pub residual: f64,
    pub converged: bool,
    pub first_order_fallbacks: usize,
    /// Residual norm every `history_stride` steps.
    pub history: Vec<f64>,
}

/// March `field` with SSP-RK3. `observe(field, step)` runs after every step.
pub fn march(
    field: &mut Field,
    scheme: &Scheme,
    bc: &BoundarySpec,
    res_opts: &ResidualOptions,
    opts: &MarchOptions,
    mut observe: impl FnMut(&Field, usize),
) -> Result<MarchReport> {
    const HISTORY_STRIDE: usize = 100;
    let mut report = MarchReport {
        steps: 0,
        t: field.t,
        residual: f64::INFINITY,
        converged: false,
        first_order_fallbacks: 0,
        history: Vec::new(),
    };
    field.apply_boundaries(bc);
    loop {
        if let Some(t_end) = opts.t_end {
            if field.t >= t_end * (1.0 - 1e-14) {
                break;
            }
        }
        if report.steps >= opts.max_steps {
            break;
        }
        let mut dt = field.stable_dt(opts.cfl, &scheme.gas);
        if let Some(t_end) = opts.t_end {
            dt = dt.min(t_end - field.t);
        }
        let (norm, stats) = field.rk3_step(dt, scheme, bc, res_opts)?;
        report.first_order_fallbacks += stats.first_order_fallbacks;
        report.residual = norm;
        if report.steps % HISTORY_STRIDE == 0 {
            report.history.push(norm);
        }
        report.steps += 1;
        observe(field, report.steps);
        if !norm.is_finite() {
            break;
        }
        if let Some(tol) = opts.tol {
            if norm < tol {
                report.converged = true;
                break;
            }
        }
    }
    if let (Some(tol), false) = (opts.tol, report.converged) {
        // The step loop measures the residual before each update; refresh it.
        report.residual = field.residual_norm(scheme, bc, res_opts)?;
        report.converged = report.residual < tol;
    }
    report.t = field.t;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

const TIKHONOV_SWEEPS: usize = 8;

/// Drive the interior to a steady state by damped Newton iteration with a
/// finite-difference Jacobian of the full residual (limiters and boundary
/// ghosts live). Dense, so meant for small grids such as one period of a
/// j-periodic problem. Unlike time marching it also converges to unstable
/// steady states.
pub fn newton_steady(
    field: &mut Field,
    scheme: &Scheme,
    bc: &BoundarySpec,
    res_opts: &ResidualOptions,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonReport> {
    use crate::eigen::{solve_linear, DenseMatrix};
    let eval_with = |f: &mut Field, u: &[Vec4], opts: &ResidualOptions| -> Result<Vec<Vec4>> {
        f.set_interior(u);
        f.check_admissible(&scheme.gas)?;
        f.apply_boundaries(bc);
        Ok(f.residual(scheme, opts)?.0)
    };
    let eval = |f: &mut Field, u: &[Vec4]| eval_with(f, u, res_opts);
    let n = 4 * field.nx * field.ny;
    let mut u = field.interior();
    let mut r = eval(field, &u)?;
    let mut norm = max_norm(&r);
    let mut iterations = 0;
    let mut probe = field.clone();
    while norm >= tol && iterations < max_iter {
        iterations += 1;
        // Limiters are frozen at the current iterate: ratios of near-equal
        // cells make the live residual non-differentiable in uniform regions.
        field.set_interior(&u);
        field.apply_boundaries(bc);
        let table = field.limiter_table(scheme);
        let frozen = ResidualOptions { frozen: Some(&table), mass_flux_fix: res_opts.mass_flux_fix };
        let eval_frozen = |f: &mut Field, u: &[Vec4]| eval_with(f, u, &frozen);
        let mut jac = DenseMatrix::zeros(n);
        for col in 0..n {
            let (c, k) = (col / 4, col % 4);
            let h = 1e-7 * u[c][k].abs().max(1.0);
            let mut up = u.clone();
            up[c][k] += h;
            let rp = eval_frozen(&mut probe, &up)?;
            up[c][k] -= 2.0 * h;
            let rm = eval_frozen(&mut probe, &up)?;
            for row in 0..n {
                jac[(row, col)] = (rp[row / 4][row % 4] - rm[row / 4][row % 4]) / (2.0 * h);
            }
        }
        // Steady shock profiles come in one-parameter families, so the
        // Jacobian is singular. Iterated Tikhonov on the normal equations
        // converges to the minimum-norm step, which does not slide along the
        // family, without the bias of a single regularized solve.
        let mut normal = DenseMatrix::zeros(n);
        for a in 0..n {
            for b in a..n {
                let v: f64 = (0..n).map(|k| jac[(k, a)] * jac[(k, b)]).sum();
                normal[(a, b)] = v;
                normal[(b, a)] = v;
            }
        }
        let shift = 1e-12 * normal.max_abs().max(1.0);
        for d in 0..n {
            normal[(d, d)] += shift;
        }
        let neg_r: Vec<f64> = (0..n).map(|k| -r[k / 4][k % 4]).collect();
        let mut du = vec![0.0; n];
        for _ in 0..TIKHONOV_SWEEPS {
            let lin = jac.mat_vec(&du);
            let rhs: Vec<f64> =
                (0..n).map(|a| (0..n).map(|k| jac[(k, a)] * (neg_r[k] - lin[k])).sum::<f64>()).collect();
            let corr = solve_linear(&normal, &rhs)?;
            for (d, c) in du.iter_mut().zip(&corr) {
                *d += c;
            }
        }
        if !du.iter().all(|v| v.is_finite()) {
            return Err(Error::NonConvergence { steps: iterations, residual: norm, history: Vec::new() });
        }
        let mut step = 1.0;
        loop {
            let trial: Vec<Vec4> = u
                .iter()
                .enumerate()
                .map(|(c, x)| [0, 1, 2, 3].map(|k| x[k] + step * du[4 * c + k]))
                .collect();
            if let Ok(rt) = eval(&mut probe, &trial) {
                let nt = max_norm(&rt);
                if nt < norm * (1.0 - 1e-4 * step) {
                    u = trial;
                    r = rt;
                    norm = nt;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-3 {
                // Accept nothing further; report the stall.
                field.set_interior(&u);
                field.apply_boundaries(bc);
                return Ok(NewtonReport { iterations, residual: norm, converged: false });
            }
        }
    }
    field.set_interior(&u);
    field.apply_boundaries(bc);
    Ok(NewtonReport { iterations, residual: norm, converged: norm < tol })
}
