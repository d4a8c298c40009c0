//! Linearized matrix stability analysis of a steady discrete solution.
//!
//! Perturbations `dU` of the interior cell averages evolve as
//! `d(dU)/dt = A dU` with `A = dR/dU` taken at the mean field, limiters
//! frozen at their mean values and boundary ghosts unperturbed. The
//! stability matrix is `A` itself (conservative form) or `T^-1 A T` with
//! `T = dU/dW` per cell (primitive form). Face fluxes are differentiated by
//! central differences with respect to the reconstruction variables.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen::{self, DenseMatrix, EigenSpectrum};
use crate::error::{Error, Result};
use crate::euler::{mat_mul, ConservedState, GasModel, Mat4, PrimitiveState, Vec4, IDENTITY4};
use crate::grid::{DistortionRule, GridKind, StructuredGrid};
use crate::muscl::{self, ReconstructionVariables};
use crate::shock::{self, ShockConfig};
use crate::solver::{self, BoundarySpec, Field, LimiterTable, ResidualOptions, RightBoundary, Scheme};

/// Central-difference step of the flux Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-7;

/// Residual below which a mean field counts as steady. Looser than the
/// marching tolerance: the one-row profile is converged, the projected
/// field adds transverse fluxes that cancel only to rounding.
pub const STEADY_CHECK_TOL: f64 = 1e-9;

/// Eigenvalues with |lambda| below this are neutral: the discrete shock
/// profile belongs to a one-parameter family of steady states, and moving
/// along it neither grows nor decays. e^(1e-6 t) is indistinguishable from 1
/// over any simulated horizon.
pub const NEUTRAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariableForm {
    Conservative,
    Primitive,
}

impl VariableForm {
    pub fn name(self) -> &'static str {
        match self {
            VariableForm::Conservative => "cons",
            VariableForm::Primitive => "prim",
        }
    }
}

impl std::fmt::Display for VariableForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for VariableForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cons" | "conservative" => Ok(VariableForm::Conservative),
            "prim" | "primitive" => Ok(VariableForm::Primitive),
            other => Err(Error::InvalidConfig(format!("unknown variable form '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocalizationCase {
    /// The whole converged shock field is active.
    Full,
    /// Uniform upstream field; the shock sits in the right ghost layers.
    Upstream,
    /// Converged field with only the shock column and its neighbours active.
    ShockStructure,
    /// Uniform downstream field; the shock sits in the left ghost layers.
    Downstream,
}

impl LocalizationCase {
    pub fn name(self) -> &'static str {
        match self {
            LocalizationCase::Full => "full",
            LocalizationCase::Upstream => "upstream",
            LocalizationCase::ShockStructure => "shock",
            LocalizationCase::Downstream => "downstream",
        }
    }
}

impl std::fmt::Display for LocalizationCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LocalizationCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(LocalizationCase::Full),
            "upstream" | "up" => Ok(LocalizationCase::Upstream),
            "shock" | "shockstructure" | "shock-structure" => Ok(LocalizationCase::ShockStructure),
            "downstream" | "down" => Ok(LocalizationCase::Downstream),
            other => Err(Error::InvalidConfig(format!("unknown localization case '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    pub form: VariableForm,
    pub jacobian_step: f64,
    /// Let perturbations of the last interior column feed the extrapolated
    /// outflow ghosts. Off by default: ghosts are error-free.
    pub outflow_coupling: bool,
    pub steady_tol: f64,
    /// Apply the mass-flux fix in the linearized operator as well.
    pub mass_flux_fix_in_matrix: bool,
    /// Never use the j-Fourier block reduction.
    pub dense_only: bool,
    /// Width (in columns on each side) of the active region around the
    /// shock column in the shock-structure case.
    pub shock_halfwidth: usize,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            form: VariableForm::Conservative,
            jacobian_step: JACOBIAN_STEP,
            outflow_coupling: false,
            steady_tol: STEADY_CHECK_TOL,
            mass_flux_fix_in_matrix: false,
            dense_only: false,
            shock_halfwidth: 1,
        }
    }
}

/// Mean state about which the scheme is linearized.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanField {
    /// Cell averages with ghosts filled.
    pub field: Field,
    pub bc: BoundarySpec,
    /// Active (perturbable) interior cells, row-major.
    pub active: Vec<bool>,
    /// Shock cell of the mass-flux fix the mean field was converged with.
    pub mass_flux_fix: Option<usize>,
    pub case: LocalizationCase,
    /// Refuse to analyze unless the residual is below tolerance.
    pub require_steady: bool,
}

impl MeanField {
    pub fn new(mut field: Field, bc: BoundarySpec) -> Self {
        field.apply_boundaries(&bc);
        let n = field.nx() * field.ny();
        Self { field, bc, active: vec![true; n], mass_flux_fix: None, case: LocalizationCase::Full, require_steady: true }
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.active[j * self.field.nx() + i]
    }

    /// Residual max-norm of the equations the mean field was converged with.
    pub fn steady_residual(&self, scheme: &Scheme) -> Result<f64> {
        let opts = ResidualOptions { frozen: None, mass_flux_fix: self.mass_flux_fix };
        Ok(solver::max_norm(&self.field.residual(scheme, &opts)?.0))
    }
}

/// Central-difference Jacobians of the face flux with respect to the left
/// and right reconstruction-variable states.
pub fn flux_jacobians(
    ql: &Vec4,
    qr: &Vec4,
    normal: [f64; 2],
    scheme: &Scheme,
    step: f64,
) -> Result<(Mat4, Mat4)> {
    let vars = scheme.vars;
    let gas = &scheme.gas;
    let flux = |a: &Vec4, b: &Vec4| -> Result<Vec4> {
        let wl = vars.to_primitive(a, gas);
        let wr = vars.to_primitive(b, gas);
        scheme.solver.flux(&wl, &wr, normal, gas).map_err(|e| match e {
            Error::NonFiniteFlux { location } => Error::NonFiniteFlux {
                location: format!("{location} while differentiating at left {a:?}, right {b:?}"),
            },
            other => other,
        })
    };
    let mut jl = [[0.0; 4]; 4];
    let mut jr = [[0.0; 4]; 4];
    for k in 0..4 {
        let mut p = *ql;
        let mut m = *ql;
        p[k] += step;
        m[k] -= step;
        let (fp, fm) = (flux(&p, qr)?, flux(&m, qr)?);
        for r in 0..4 {
            jl[r][k] = (fp[r] - fm[r]) / (2.0 * step);
        }
        let mut p = *qr;
        let mut m = *qr;
        p[k] += step;
        m[k] -= step;
        let (fp, fm) = (flux(ql, &p)?, flux(ql, &m)?);
        for r in 0..4 {
            jr[r][k] = (fp[r] - fm[r]) / (2.0 * step);
        }
    }
    Ok((jl, jr))
}

/// Derivative of a face flux density with respect to the reconstruction
/// variables of its stencil cells.
#[derive(Debug, Clone)]
struct FaceLinearization {
    terms: Vec<((isize, isize), Mat4)>,
}

fn scale_cols_diag(j: &Mat4, d: &Vec4, s: f64) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = j[r][c] * s * d[c];
        }
    }
    out
}

fn add_mat(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = *a;
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] += b[r][c];
        }
    }
    out
}

fn face_linearization(
    stencil_cells: [(isize, isize); 4],
    stencil: [Vec4; 4],
    psi: &(Vec4, Vec4),
    normal: [f64; 2],
    scheme: &Scheme,
    step: f64,
) -> Result<FaceLinearization> {
    let st = [&stencil[0], &stencil[1], &stencil[2], &stencil[3]];
    let (mut psi_l, mut psi_r) = *psi;
    let (mut ql, mut qr) = muscl::reconstruct_with(st, &psi_l, &psi_r);
    let wl = scheme.vars.to_primitive(&ql, &scheme.gas);
    let wr = scheme.vars.to_primitive(&qr, &scheme.gas);
    if !(wl.rho > 0.0 && wl.p > 0.0 && wr.rho > 0.0 && wr.p > 0.0) {
        // Same first-order fallback as the residual.
        psi_l = [0.0; 4];
        psi_r = [0.0; 4];
        ql = stencil[1];
        qr = stencil[2];
    }
    let (jl, jr) = flux_jacobians(&ql, &qr, normal, scheme, step)?;
    let c_pp = scale_cols_diag(&jl, &psi_l, -0.5);
    let c_p = add_mat(&jl, &scale_cols_diag(&jl, &psi_l, 0.5));
    let c_q = add_mat(&jr, &scale_cols_diag(&jr, &psi_r, 0.5));
    let c_qq = scale_cols_diag(&jr, &psi_r, -0.5);
    Ok(FaceLinearization {
        terms: vec![
            (stencil_cells[0], c_pp),
            (stencil_cells[1], c_p),
            (stencil_cells[2], c_q),
            (stencil_cells[3], c_qq),
        ],
    })
}

/// Sparse block form of the stability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMatrix {
    nx: usize,
    ny: usize,
    pub form: VariableForm,
    /// Active cells in block order.
    pub cells: Vec<(usize, usize)>,
    index: Vec<Option<usize>>,
    /// Nonzero 4x4 blocks keyed by (row block, column block).
    blocks: Vec<((usize, usize), Mat4)>,
    /// Per active cell dW/dU and dU/dW at the mean.
    dwdu: Vec<Mat4>,
    dudw: Vec<Mat4>,
}

impl StabilityMatrix {
    pub fn size(&self) -> usize {
        4 * self.cells.len()
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn block_index(&self, i: usize, j: usize) -> Option<usize> {
        self.index[j * self.nx + i]
    }

    pub fn blocks(&self) -> &[((usize, usize), Mat4)] {
        &self.blocks
    }

    /// Block (row cell, column cell), if nonzero.
    pub fn block(&self, row: (usize, usize), col: (usize, usize)) -> Option<Mat4> {
        let r = self.block_index(row.0, row.1)?;
        let c = self.block_index(col.0, col.1)?;
        self.blocks.iter().find(|(k, _)| *k == (r, c)).map(|(_, m)| *m)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.size());
        for ((r, c), b) in &self.blocks {
            for a in 0..4 {
                for d in 0..4 {
                    m[(4 * r + a, 4 * c + d)] += b[a][d];
                }
            }
        }
        m
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.size());
        let mut y = vec![0.0; x.len()];
        for ((r, c), b) in &self.blocks {
            for a in 0..4 {
                let mut s = 0.0;
                for d in 0..4 {
                    s += b[a][d] * x[4 * c + d];
                }
                y[4 * r + a] += s;
            }
        }
        y
    }

    /// Smallest row period `p` (dividing ny, p < ny) under which the matrix is
    /// invariant to shifting every cell by `p` rows, if any.
    pub fn row_period(&self) -> Option<usize> {
        if self.ny < 2 {
            return None;
        }
        let lookup: HashMap<(usize, usize), &Mat4> = self.blocks.iter().map(|(k, m)| (*k, m)).collect();
        let scale = self.blocks.iter().flat_map(|(_, m)| m.iter().flatten()).fold(0.0f64, |a, v| a.max(v.abs()));
        'period: for p in 1..self.ny {
            if self.ny % p != 0 {
                continue;
            }
            for &(i, j) in &self.cells {
                if self.block_index(i, (j + p) % self.ny).is_none() {
                    continue 'period;
                }
            }
            for ((r, c), m) in &self.blocks {
                let (ri, rj) = self.cells[*r];
                let (ci, cj) = self.cells[*c];
                let r2 = self.block_index(ri, (rj + p) % self.ny).unwrap();
                let c2 = self.block_index(ci, (cj + p) % self.ny).unwrap();
                match lookup.get(&(r2, c2)) {
                    Some(m2) => {
                        for a in 0..4 {
                            for d in 0..4 {
                                if (m[a][d] - m2[a][d]).abs() > 1e-12 * scale.max(1.0) {
                                    continue 'period;
                                }
                            }
                        }
                    }
                    None => {
                        if m.iter().flatten().any(|v| v.abs() > 1e-12 * scale.max(1.0)) {
                            continue 'period;
                        }
                    }
                }
            }
            return Some(p);
        }
        None
    }
}

fn dqdu(vars: ReconstructionVariables, u: &Vec4, gas: &GasModel) -> Mat4 {
    match vars {
        ReconstructionVariables::Conservative => IDENTITY4,
        ReconstructionVariables::Primitive => {
            gas.dwdu(&gas.to_primitive_unchecked(&ConservedState::from_array(*u)))
        }
    }
}

/// Assemble the stability matrix about `mean`.
pub fn assemble_matrix(mean: &MeanField, scheme: &Scheme, opts: &StabilityOptions) -> Result<StabilityMatrix> {
    if mean.require_steady {
        let r = mean.steady_residual(scheme)?;
        if !(r < opts.steady_tol) {
            return Err(Error::NotSteady { residual: r, tolerance: opts.steady_tol });
        }
    }
    let field = &mean.field;
    let grid = field.grid();
    let (nx, ny) = (field.nx(), field.ny());
    let gas = scheme.gas;
    let table: LimiterTable = field.limiter_table(scheme);

    let mut cells = Vec::new();
    let mut index = vec![None; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            if mean.is_active(i, j) {
                index[j * nx + i] = Some(cells.len());
                cells.push((i, j));
            }
        }
    }

    // Column target of a stencil cell: block index and dq/dU.
    let outflow = matches!(mean.bc.right, RightBoundary::MassFluxOutflow(_));
    let column = |ci: isize, cj: isize| -> Option<(usize, Mat4)> {
        let jj = cj.rem_euclid(ny as isize) as usize;
        if ci < 0 {
            return None;
        }
        if ci as usize >= nx {
            if !(opts.outflow_coupling && outflow) {
                return None;
            }
            let k = index[jj * nx + nx - 1]?;
            let g = *field.get(ci, jj as isize);
            let mut m = dqdu(scheme.vars, &g, &gas);
            for row in m.iter_mut() {
                row[1] = 0.0;
            }
            return Some((k, m));
        }
        let k = index[jj * nx + ci as usize]?;
        Some((k, dqdu(scheme.vars, field.get(ci, jj as isize), &gas)))
    };

    let mut acc: HashMap<(usize, usize), Mat4> = HashMap::new();
    let mut deposit = |row: Option<usize>, sign: f64, lin: &FaceLinearization| {
        let Some(r) = row else { return };
        for ((ci, cj), c) in &lin.terms {
            if let Some((k, m)) = column(*ci, *cj) {
                let mut b = mat_mul(c, &m);
                for x in b.iter_mut().flatten() {
                    *x *= sign;
                }
                let e = acc.entry((r, k)).or_insert([[0.0; 4]; 4]);
                *e = add_mat(e, &b);
            }
        }
    };
    let row_of = |i: isize, j: isize| -> Option<usize> {
        if i < 0 || i as usize >= nx {
            return None;
        }
        index[j.rem_euclid(ny as isize) as usize * nx + i as usize]
    };
    let q = |i: isize, j: isize| scheme.vars.from_conserved(field.get(i, j), &gas);
    let step = opts.jacobian_step;

    let fix = if opts.mass_flux_fix_in_matrix { mean.mass_flux_fix } else { None };
    for j in 0..ny {
        let mut row_lins = Vec::with_capacity(nx + 1);
        for i in 0..=nx {
            let (ii, jj) = (i as isize, j as isize);
            let cells4 = [(ii - 2, jj), (ii - 1, jj), (ii, jj), (ii + 1, jj)];
            let p = row_of(ii - 1, jj);
            let qq = row_of(ii, jj);
            if p.is_none() && qq.is_none() && fix.is_none() {
                row_lins.push(None);
                continue;
            }
            let stencil = cells4.map(|(a, b)| q(a, b));
            let lin = face_linearization(cells4, stencil, table.x_face(i, j), grid.x_face(i, j).normal, scheme, step)?;
            row_lins.push(Some(lin));
        }
        if let Some(is) = fix {
            if is + 1 <= nx {
                if let (Some(up), Some(down)) = (row_lins[is].clone(), row_lins[is + 1].as_mut()) {
                    for (_, m) in down.terms.iter_mut() {
                        m[0] = [0.0; 4];
                    }
                    for (cell, m) in up.terms {
                        let mut only_mass = [[0.0; 4]; 4];
                        only_mass[0] = m[0];
                        down.terms.push((cell, only_mass));
                    }
                }
            }
        }
        for (i, lin) in row_lins.iter().enumerate() {
            let Some(lin) = lin else { continue };
            let (ii, jj) = (i as isize, j as isize);
            let len = grid.x_face(i, j).length;
            if ii >= 1 {
                deposit(row_of(ii - 1, jj), -len / grid.volume(i - 1, j), lin);
            }
            if i < nx {
                deposit(row_of(ii, jj), len / grid.volume(i, j), lin);
            }
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let (ii, jj) = (i as isize, j as isize);
            let p = row_of(ii, jj - 1);
            let qq = row_of(ii, jj);
            if p.is_none() && qq.is_none() {
                continue;
            }
            let cells4 = [(ii, jj - 2), (ii, jj - 1), (ii, jj), (ii, jj + 1)];
            let stencil = cells4.map(|(a, b)| q(a, b));
            let face = grid.y_face(i, j);
            let lin = face_linearization(cells4, stencil, table.y_face(i, j), face.normal, scheme, step)?;
            let jm = (j + ny - 1) % ny;
            deposit(p, -face.length / grid.volume(i, jm), &lin);
            deposit(qq, face.length / grid.volume(i, j), &lin);
        }
    }

    let dwdu: Vec<Mat4> = cells
        .iter()
        .map(|&(i, j)| gas.dwdu(&field.primitive(i, j, &gas)))
        .collect();
    let dudw: Vec<Mat4> = cells.iter().map(|&(i, j)| gas.dudw(&field.primitive(i, j, &gas))).collect();
    // Psi = 0 terms deposit exact zeros; keep the stored pattern structural.
    let mut blocks: Vec<((usize, usize), Mat4)> =
        acc.into_iter().filter(|(_, b)| b.iter().flatten().any(|x| *x != 0.0)).collect();
    if opts.form == VariableForm::Primitive {
        for ((r, c), b) in blocks.iter_mut() {
            *b = mat_mul(&dwdu[*r], &mat_mul(b, &dudw[*c]));
        }
    }
    blocks.sort_by_key(|(k, _)| *k);

    Ok(StabilityMatrix {
        nx,
        ny,
        form: opts.form,
        cells,
        index,
        blocks,
        dwdu,
        dudw,
    })
}

/// How a spectrum was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumMethod {
    Dense,
    /// j-Fourier block reduction with the given row period.
    RowFourier { period: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySpectrum {
    pub spectrum: EigenSpectrum,
    pub method: SpectrumMethod,
    /// Largest real part among non-neutral eigenvalues.
    pub max_real: f64,
    /// Largest real part over all eigenvalues.
    pub raw_max_real: f64,
    /// Number of eigenvalues with |lambda| < NEUTRAL_TOL.
    pub neutral: usize,
    /// Max non-neutral real part per transverse wavenumber (Fourier path
    /// only); entry k covers wavenumbers k and M - k.
    pub max_real_by_wavenumber: Vec<f64>,
}

fn non_neutral_max(values: &[Complex64]) -> f64 {
    values.iter().filter(|z| z.norm() >= NEUTRAL_TOL).fold(f64::NEG_INFINITY, |a, z| a.max(z.re))
}

impl StabilitySpectrum {
    fn new(spectrum: EigenSpectrum, method: SpectrumMethod, max_real_by_wavenumber: Vec<f64>) -> Self {
        let values = &spectrum.eigenvalues;
        Self {
            max_real: non_neutral_max(values),
            raw_max_real: spectrum.max_real(),
            neutral: values.iter().filter(|z| z.norm() < NEUTRAL_TOL).count(),
            method,
            max_real_by_wavenumber,
            spectrum,
        }
    }

    pub fn max_real(&self) -> f64 {
        self.max_real
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "re,im")?;
        for z in &self.spectrum.eigenvalues {
            writeln!(out, "{:.17e},{:.17e}", z.re, z.im)?;
        }
        Ok(())
    }
}

/// Full spectrum of `s`. Eigenvectors force the dense path.
pub fn spectrum(s: &StabilityMatrix, want_vectors: bool, dense_only: bool) -> Result<StabilitySpectrum> {
    if !want_vectors && !dense_only {
        if let Some(p) = s.row_period() {
            return fourier_spectrum(s, p);
        }
    }
    let spectrum = eigen::spectrum(&s.to_dense(), want_vectors)?;
    Ok(StabilitySpectrum::new(spectrum, SpectrumMethod::Dense, Vec::new()))
}

/// Spectrum of a matrix that is block-circulant over groups of `p` rows:
/// the eigenvalues are the union over wavenumbers k of those of
/// `sum_d B_d w^(d k)`, `w = exp(2 pi i / M)`, `M = ny / p`.
fn fourier_spectrum(s: &StabilityMatrix, p: usize) -> Result<StabilitySpectrum> {
    let m = s.ny / p;
    // Local block order: active cells of the first p rows.
    let local: Vec<usize> = (0..s.cells.len()).filter(|&k| s.cells[k].1 < p).collect();
    let mut local_index = vec![usize::MAX; s.cells.len()];
    for (l, &k) in local.iter().enumerate() {
        local_index[k] = l;
    }
    // Column cell -> (local index of its shifted representative, shift d).
    let col_map = |c: usize| -> (usize, usize) {
        let (i, j) = s.cells[c];
        let rep = s.block_index(i, j % p).expect("periodic active set");
        (local_index[rep], j / p)
    };
    let nb = 4 * local.len();
    let mut bd: Vec<DenseMatrix> = (0..m).map(|_| DenseMatrix::zeros(nb)).collect();
    for ((r, c), b) in &s.blocks {
        let lr = local_index[*r];
        if lr == usize::MAX {
            continue;
        }
        let (lc, d) = col_map(*c);
        for a in 0..4 {
            for e in 0..4 {
                bd[d][(4 * lr + a, 4 * lc + e)] += b[a][e];
            }
        }
    }

    let mut values = Vec::with_capacity(s.size());
    let mut by_k = Vec::new();
    for k in 0..=m / 2 {
        let theta: Vec<(f64, f64)> = (0..m)
            .map(|d| {
                let a = 2.0 * std::f64::consts::PI * (d * k) as f64 / m as f64;
                (a.cos(), a.sin())
            })
            .collect();
        let real_case = k == 0 || 2 * k == m;
        let mat = if real_case {
            let mut h = DenseMatrix::zeros(nb);
            for (d, b) in bd.iter().enumerate() {
                let c = if k == 0 || d % 2 == 0 { 1.0 } else { -1.0 };
                for r in 0..nb {
                    let hr = h.row_mut(r);
                    for (x, y) in hr.iter_mut().zip(b.row(r)) {
                        *x += c * y;
                    }
                }
            }
            h
        } else {
            // [[Re, -Im], [Im, Re]] carries wavenumbers k and M - k.
            let mut h = DenseMatrix::zeros(2 * nb);
            for (d, b) in bd.iter().enumerate() {
                let (c, sn) = theta[d];
                for r in 0..nb {
                    for col in 0..nb {
                        let v = b[(r, col)];
                        if v == 0.0 {
                            continue;
                        }
                        h[(r, col)] += c * v;
                        h[(r, col + nb)] -= sn * v;
                        h[(r + nb, col)] += sn * v;
                        h[(r + nb, col + nb)] += c * v;
                    }
                }
            }
            h
        };
        let ev = eigen::eigenvalues(&mat)?;
        by_k.push(non_neutral_max(&ev));
        values.extend(ev);
    }
    Ok(StabilitySpectrum::new(EigenSpectrum::new(values, None), SpectrumMethod::RowFourier { period: p }, by_k))
}

/// Eigenvector of the leading eigenvalue mapped back onto the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableMode {
    pub eigenvalue: Complex64,
    pub nx: usize,
    pub ny: usize,
    /// Per cell (row-major), perturbation of (rho, u, v, p); zero for frozen cells.
    pub primitive: Vec<[Complex64; 4]>,
    /// Per cell, the eigenvector in the matrix's own variables.
    pub native: Vec<[Complex64; 4]>,
    /// |S x - lambda x| / |x|.
    pub residual: f64,
}

impl UnstableMode {
    /// Cell (i, j) with the largest |component| of primitive variable `k`.
    pub fn argmax(&self, k: usize) -> (usize, usize) {
        let mut best = (0, 0.0f64);
        for (c, v) in self.primitive.iter().enumerate() {
            if v[k].norm() > best.1 {
                best = (c, v[k].norm());
            }
        }
        (best.0 % self.nx, best.0 / self.nx)
    }

    /// CSV columns `i,j,<var>_re,<var>_im` for rho, u, v, p.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,j,rho_re,rho_im,u_re,u_im,v_re,v_im,p_re,p_im")?;
        for (c, v) in self.primitive.iter().enumerate() {
            write!(out, "{},{}", c % self.nx, c / self.nx)?;
            for z in v {
                write!(out, ",{:.10e},{:.10e}", z.re, z.im)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Eigenvector of the leading non-neutral eigenvalue of `s`, scaled so its
/// primitive-variable form has unit max magnitude and a real positive
/// largest component.
pub fn unstable_mode(s: &StabilityMatrix, spec: &EigenSpectrum) -> Result<UnstableMode> {
    let vectors = spec
        .vectors
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("spectrum was computed without eigenvectors".into()))?;
    if spec.eigenvalues.is_empty() {
        return Err(Error::InvalidConfig("empty spectrum".into()));
    }
    let lead = spec.eigenvalues.iter().position(|z| z.norm() >= NEUTRAL_TOL).unwrap_or(0);
    let lambda = spec.eigenvalues[lead];
    let x = &vectors[lead];
    let dense = s.to_dense();
    let sx = dense.mat_vec_complex(x);
    let num: f64 = sx.iter().zip(x).map(|(a, b)| (a - lambda * b).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    let zero = [Complex64::default(); 4];
    let mut native = vec![zero; s.nx * s.ny];
    let mut primitive = vec![zero; s.nx * s.ny];
    for (k, &(i, j)) in s.cells.iter().enumerate() {
        let v = [x[4 * k], x[4 * k + 1], x[4 * k + 2], x[4 * k + 3]];
        native[j * s.nx + i] = v;
        primitive[j * s.nx + i] = match s.form {
            VariableForm::Primitive => v,
            VariableForm::Conservative => {
                let t = &s.dwdu[k];
                [0, 1, 2, 3].map(|r| (0..4).map(|c| v[c] * t[r][c]).sum())
            }
        };
    }
    // Unit max magnitude in (rho, u, v, p), largest component real positive.
    let big = primitive.iter().flatten().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
    if big.norm() > 0.0 {
        let scale = big.conj() / big.norm_sqr();
        for z in primitive.iter_mut().chain(native.iter_mut()).flatten() {
            *z *= scale;
        }
    }
    Ok(UnstableMode { eigenvalue: lambda, nx: s.nx, ny: s.ny, primitive, native, residual: num / den })
}

/// Frozen-limiter directional difference `[R(mean + x) - R(mean - x)] / 2`
/// in the matrix's variables, ghosts held at the mean apart from the
/// periodic wrap. `x` is indexed like the matrix.
pub fn frozen_directional_difference(
    mean: &MeanField,
    scheme: &Scheme,
    opts: &StabilityOptions,
    s: &StabilityMatrix,
    x: &[f64],
) -> Result<Vec<f64>> {
    let gas = scheme.gas;
    let table = mean.field.limiter_table(scheme);
    let fix = if opts.mass_flux_fix_in_matrix { mean.mass_flux_fix } else { None };
    let res_opts = ResidualOptions { frozen: Some(&table), mass_flux_fix: fix };
    let eval = |sign: f64| -> Result<Vec<Vec4>> {
        let mut f = mean.field.clone();
        for (k, &(i, j)) in s.cells.iter().enumerate() {
            let dx = [0, 1, 2, 3].map(|c| sign * x[4 * k + c]);
            let u = f.get_mut(i as isize, j as isize);
            match s.form {
                VariableForm::Conservative => {
                    for c in 0..4 {
                        u[c] += dx[c];
                    }
                }
                VariableForm::Primitive => {
                    let w = gas.to_primitive_unchecked(&ConservedState::from_array(*u)).to_array();
                    let wp = PrimitiveState::from_array([0, 1, 2, 3].map(|c| w[c] + dx[c]));
                    *u = gas.to_conserved_unchecked(&wp).to_array();
                }
            }
        }
        if opts.outflow_coupling {
            f.apply_boundaries(&mean.bc);
        } else {
            f.wrap_periodic();
        }
        Ok(f.residual(scheme, &res_opts)?.0)
    };
    let rp = eval(1.0)?;
    let rm = eval(-1.0)?;
    let nx = mean.field.nx();
    let mut out = vec![0.0; s.size()];
    for (k, &(i, j)) in s.cells.iter().enumerate() {
        let c = j * nx + i;
        let d = [0, 1, 2, 3].map(|m| 0.5 * (rp[c][m] - rm[c][m]));
        let d = match s.form {
            VariableForm::Conservative => d,
            VariableForm::Primitive => crate::euler::mat_vec(&s.dwdu[k], &d),
        };
        out[4 * k..4 * k + 4].copy_from_slice(&d);
    }
    Ok(out)
}

/// Relative 2-norm difference |a - b| / |b|.
pub fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|q| q * q).sum::<f64>().sqrt();
    num / den
}

/// Worst relative mismatch between `S x` and the frozen directional
/// difference over `count` random directions of norm `norm`.
pub fn linearization_check(
    mean: &MeanField,
    scheme: &Scheme,
    opts: &StabilityOptions,
    s: &StabilityMatrix,
    count: usize,
    norm: f64,
    seed: u64,
) -> Result<f64> {
    use rand::distributions::{Distribution, Uniform};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let mut x: Vec<f64> = (0..s.size()).map(|_| dist.sample(&mut rng)).collect();
        let len = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut x {
            *v *= norm / len;
        }
        let sx = s.mat_vec(&x);
        let fd = frozen_directional_difference(mean, scheme, opts, s, &x)?;
        worst = worst.max(relative_difference(&sx, &fd));
    }
    Ok(worst)
}

/// Mean field of the shock problem for a localization case.
pub fn shock_mean_field(config: &ShockConfig, case: LocalizationCase, opts: &StabilityOptions) -> Result<MeanField> {
    config.validate()?;
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "stability analysis needs 0 < epsilon < 1, got {}",
            config.epsilon
        )));
    }
    let grid = Arc::new(config.grid.build()?);
    let (ul, um, ur) = config.states()?;
    let nx = grid.nx();
    match case {
        LocalizationCase::Upstream => {
            let bc = BoundarySpec { left: [ul; 2], right: RightBoundary::Fixed([um, ur]) };
            let mut m = MeanField::new(Field::uniform(grid, ul), bc);
            m.case = case;
            m.require_steady = false;
            Ok(m)
        }
        LocalizationCase::Downstream => {
            let bc = BoundarySpec { left: [um, ul], right: RightBoundary::MassFluxOutflow(1.0) };
            let mut m = MeanField::new(Field::uniform(grid, ur), bc);
            m.case = case;
            m.require_steady = false;
            Ok(m)
        }
        LocalizationCase::Full | LocalizationCase::ShockStructure => {
            let profile = shock::solve_1d_steady(config)?;
            let fix = profile.mass_flux_fix.then(|| config.shock_cell());
            let bc = config.boundaries()?;
            // The projected profile is exactly steady except on sawtooth grids,
            // where the tilted shock-parallel faces need a 2D steady solve.
            let spec = config.grid;
            let field = if spec.kind == GridKind::Distorted && spec.alpha_deg != 0.0 && spec.rule == DistortionRule::Sawtooth {
                steady_distorted(config, &profile.cells, fix, grid.clone())?
            } else {
                shock::project(&profile.cells, grid.clone())?
            };
            let mut m = MeanField::new(field, bc);
            m.mass_flux_fix = fix;
            m.case = case;
            if case == LocalizationCase::ShockStructure {
                let is = config.shock_cell() as isize;
                let w = opts.shock_halfwidth as isize;
                for j in 0..grid.ny() {
                    for i in 0..nx {
                        m.active[j * nx + i] = (i as isize - is).abs() <= w;
                    }
                }
            }
            Ok(m)
        }
    }
}

/// Steady state on a sawtooth grid: Newton on one two-row period, tiled.
fn steady_distorted(
    config: &ShockConfig,
    profile: &[Vec4],
    fix: Option<usize>,
    grid: Arc<StructuredGrid>,
) -> Result<Field> {
    let spec = config.grid;
    let period =
        Arc::new(StructuredGrid::distorted_with(spec.nx, 2, spec.dx, spec.dy(), spec.alpha_deg, DistortionRule::Sawtooth)?);
    let mut small = shock::project(profile, period)?;
    let bc = config.boundaries()?;
    let res_opts = ResidualOptions { frozen: None, mass_flux_fix: fix };
    let rep = solver::newton_steady(&mut small, &config.scheme, &bc, &res_opts, solver::STEADY_TOL, 300)?;
    if !rep.converged {
        return Err(Error::NonConvergence { steps: rep.iterations, residual: rep.residual, history: Vec::new() });
    }
    Ok(Field::from_fn(grid, |i, j| *small.cell(i, j % 2)))
}

/// Result of one stability analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub case: LocalizationCase,
    pub form: VariableForm,
    pub matrix_size: usize,
    pub steady_residual: f64,
    pub spectrum: StabilitySpectrum,
    #[serde(skip)]
    pub mode: Option<UnstableMode>,
}

impl Analysis {
    pub fn max_real(&self) -> f64 {
        self.spectrum.max_real()
    }
}

/// Build the mean field, assemble S and compute its spectrum (and the
/// leading mode when `want_mode`).
pub fn analyze(config: &ShockConfig, case: LocalizationCase, opts: &StabilityOptions, want_mode: bool) -> Result<Analysis> {
    let mean = shock_mean_field(config, case, opts)?;
    analyze_mean(&mean, &config.scheme, opts, want_mode)
}

pub fn analyze_mean(mean: &MeanField, scheme: &Scheme, opts: &StabilityOptions, want_mode: bool) -> Result<Analysis> {
    let steady_residual = mean.steady_residual(scheme)?;
    let s = assemble_matrix(mean, scheme, opts)?;
    let spectrum = spectrum(&s, want_mode, opts.dense_only)?;
    let mode = if want_mode { Some(unstable_mode(&s, &spectrum.spectrum)?) } else { None };
    Ok(Analysis { case: mean.case, form: opts.form, matrix_size: s.size(), steady_residual, spectrum, mode })
}
