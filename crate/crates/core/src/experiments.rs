//! Parameter sweeps: stability analysis and perturbation runs over a grid
//! of shock configurations, with CSV/JSON output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_order, ConfigMap};
use crate::error::{Error, Result};
use crate::euler::GasModel;
use crate::grid::{DistortionRule, GridKind, GridSpec};
use crate::muscl::{LimiterKind, ReconstructionVariables};
use crate::riemann::{RiemannSolverKind, AUSM_ALPHA, AUSM_BETA};
use crate::shock::{self, GrowthClass, MassFluxFix, ShockConfig};
use crate::stability::{self, Analysis, LocalizationCase, SpectrumMethod, StabilityOptions, VariableForm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analysis,
    Simulation,
    Both,
}

impl Mode {
    fn analysis(self) -> bool {
        self != Mode::Simulation
    }

    fn simulation(self) -> bool {
        self != Mode::Analysis
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "analysis" => Ok(Mode::Analysis),
            "simulation" => Ok(Mode::Simulation),
            "both" => Ok(Mode::Both),
            other => Err(Error::InvalidConfig(format!("mode must be analysis, simulation or both, got '{other}'"))),
        }
    }
}

/// Per-point files written next to the result tables.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exports {
    pub spectra: bool,
    pub modes: bool,
    pub histories: bool,
    pub fields: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub mode: Mode,
    pub m0: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub solvers: Vec<RiemannSolverKind>,
    pub limiters: Vec<LimiterKind>,
    pub orders: Vec<u8>,
    pub vars: Vec<ReconstructionVariables>,
    pub forms: Vec<VariableForm>,
    pub cases: Vec<LocalizationCase>,
    pub grid: GridKind,
    pub rule: DistortionRule,
    pub nx: usize,
    pub ny: usize,
    /// When set, ny = round(domain_height / delta_aspect) for each aspect ratio.
    pub domain_height: Option<f64>,
    pub aspects: Vec<f64>,
    pub alphas: Vec<f64>,
    pub cfl: f64,
    pub seed: u64,
    pub delta: f64,
    pub t_end: f64,
    pub gamma: f64,
    pub mass_flux_fix: MassFluxFix,
    pub exports: Exports,
    /// Declared wall-clock budget of the whole sweep, seconds.
    pub budget_s: Option<f64>,
    pub output: Option<PathBuf>,
}

const EXPERIMENT_KEYS: &[&str] = &[
    "name",
    "mode",
    "m0",
    "epsilon",
    "solver",
    "limiter",
    "order",
    "vars",
    "form",
    "case",
    "grid",
    "rule",
    "nx",
    "ny",
    "domain_height",
    "delta_aspect",
    "alpha",
    "cfl",
    "seed",
    "delta",
    "t_end",
    "gamma",
    "mass_flux_fix",
    "export",
    "budget_s",
    "out",
];

/// Named experiment files shipped with the crate.
pub const NAMED: &[(&str, &str)] = &[
    ("fig8", include_str!("../../../configs/fig8.cfg")),
    ("fig9", include_str!("../../../configs/fig9.cfg")),
    ("fig10", include_str!("../../../configs/fig10.cfg")),
    ("fig13", include_str!("../../../configs/fig13.cfg")),
    ("fig14", include_str!("../../../configs/fig14.cfg")),
    ("fig17", include_str!("../../../configs/fig17.cfg")),
];

impl Default for ExperimentSpec {
    /// One analysis point: Roe + van Albada, M0 = 20, eps = 0.1, 11 x 11.
    fn default() -> Self {
        Self {
            name: "sweep".into(),
            mode: Mode::Analysis,
            m0: vec![20.0],
            epsilon: vec![0.1],
            solvers: vec![RiemannSolverKind::Roe],
            limiters: vec![LimiterKind::VanAlbada],
            orders: vec![2],
            vars: vec![ReconstructionVariables::Conservative],
            forms: vec![VariableForm::Conservative],
            cases: vec![LocalizationCase::Full],
            grid: GridKind::Cartesian,
            rule: DistortionRule::Transverse,
            nx: 11,
            ny: 11,
            domain_height: None,
            aspects: vec![1.0],
            alphas: vec![0.0],
            cfl: 0.1,
            seed: 0,
            delta: 1e-7,
            t_end: 150.0,
            gamma: 1.4,
            mass_flux_fix: MassFluxFix::Auto,
            exports: Exports::default(),
            budget_s: None,
            output: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_config(map: &ConfigMap) -> Result<Self> {
        map.check_keys(EXPERIMENT_KEYS)?;
        let mut s = Self::default();
        if let Some(v) = map.raw("name") {
            s.name = v.to_string();
        }
        if let Some(v) = map.get("mode")? {
            s.mode = v;
        }
        if let Some(v) = map.list("m0")? {
            s.m0 = v;
        }
        if let Some(v) = map.list("epsilon")? {
            s.epsilon = v;
        }
        if let Some(v) = map.list("solver")? {
            s.solvers = v;
        }
        if let Some(v) = map.list("limiter")? {
            s.limiters = v;
        }
        if let Some(v) = map.list::<String>("order")? {
            s.orders = v.iter().map(|o| parse_order(o)).collect::<Result<_>>()?;
        }
        if let Some(v) = map.list("vars")? {
            s.vars = v;
        }
        if let Some(v) = map.list("form")? {
            s.forms = v;
        }
        if let Some(v) = map.list("case")? {
            s.cases = v;
        }
        if let Some(v) = map.get("grid")? {
            s.grid = v;
        }
        if let Some(v) = map.get("rule")? {
            s.rule = v;
        }
        if let Some(v) = map.get("nx")? {
            s.nx = v;
        }
        if let Some(v) = map.get("ny")? {
            s.ny = v;
        }
        if let Some(v) = map.get("domain_height")? {
            s.domain_height = Some(v);
        }
        if let Some(v) = map.list("delta_aspect")? {
            s.aspects = v;
        }
        if let Some(v) = map.list("alpha")? {
            s.alphas = v;
        }
        if let Some(v) = map.get("cfl")? {
            s.cfl = v;
        }
        if let Some(v) = map.get("seed")? {
            s.seed = v;
        }
        if let Some(v) = map.get("delta")? {
            s.delta = v;
        }
        if let Some(v) = map.get("t_end")? {
            s.t_end = v;
        }
        if let Some(v) = map.get("gamma")? {
            s.gamma = v;
        }
        if let Some(v) = map.get("mass_flux_fix")? {
            s.mass_flux_fix = v;
        }
        if let Some(v) = map.list::<String>("export")? {
            for e in v {
                match e.to_ascii_lowercase().as_str() {
                    "spectra" => s.exports.spectra = true,
                    "modes" => s.exports.modes = true,
                    "histories" => s.exports.histories = true,
                    "fields" => s.exports.fields = true,
                    other => return Err(Error::InvalidConfig(format!("unknown export '{other}'"))),
                }
            }
        }
        if let Some(v) = map.get("budget_s")? {
            s.budget_s = Some(v);
        }
        if let Some(v) = map.raw("out") {
            s.output = Some(PathBuf::from(v));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config(&ConfigMap::load(path)?)
    }

    /// One of the shipped figure experiments (`fig8`, `fig9`, ...).
    pub fn named(name: &str) -> Result<Self> {
        let (_, text) = NAMED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::InvalidConfig(format!("no named experiment '{name}'")))?;
        Self::from_config(&text.parse()?)
    }

    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("m0", self.m0.len()),
            ("epsilon", self.epsilon.len()),
            ("solver", self.solvers.len()),
            ("limiter", self.limiters.len()),
            ("order", self.orders.len()),
            ("vars", self.vars.len()),
            ("form", self.forms.len()),
            ("case", self.cases.len()),
            ("delta_aspect", self.aspects.len()),
            ("alpha", self.alphas.len()),
        ];
        if let Some((k, _)) = lists.iter().find(|(_, n)| *n == 0) {
            return Err(Error::InvalidConfig(format!("empty list for '{k}'")));
        }
        GasModel::new(self.gamma)?;
        if self.domain_height.is_some_and(|h| !(h > 0.0)) {
            return Err(Error::InvalidConfig("domain_height must be positive".into()));
        }
        Ok(())
    }

    fn grid_specs(&self) -> Vec<GridSpec> {
        let mut out = Vec::new();
        for &aspect in &self.aspects {
            for &alpha in &self.alphas {
                let ny = match self.domain_height {
                    Some(h) => ((h / aspect).round() as usize).max(1),
                    None => self.ny,
                };
                out.push(GridSpec { kind: self.grid, nx: self.nx, ny, dx: 1.0, aspect, alpha_deg: alpha, rule: self.rule });
            }
        }
        out
    }

    /// Expand the parameter grids. First order ignores the limiter list, so
    /// it contributes one point per remaining combination.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &m0 in &self.m0 {
            for &eps in &self.epsilon {
                for &solver in &self.solvers {
                    for &order in &self.orders {
                        let limiters: &[LimiterKind] =
                            if order == 1 { &[LimiterKind::None] } else { &self.limiters };
                        for &limiter in limiters {
                            for &vars in &self.vars {
                                for grid in self.grid_specs() {
                                    for &case in &self.cases {
                                        for &form in &self.forms {
                                            let mut config = ShockConfig::new(m0, eps, solver, limiter).with_grid(grid);
                                            config.scheme.vars = vars;
                                            config.scheme.gas = GasModel { gamma: self.gamma };
                                            config.cfl = self.cfl;
                                            config.seed = self.seed;
                                            config.delta = self.delta;
                                            config.t_end = self.t_end;
                                            config.mass_flux_fix = self.mass_flux_fix;
                                            out.push(SweepPoint { index: out.len(), order, case, form, config });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub order: u8,
    pub case: LocalizationCase,
    pub form: VariableForm,
    pub config: ShockConfig,
}

impl SweepPoint {
    /// File-name stem, unique within a sweep.
    pub fn key(&self) -> String {
        let c = &self.config;
        let g = &c.grid;
        format!(
            "{:04}_m{}_e{}_{}_{}_o{}_{}_{}_{}x{}_d{}_a{}_{}_{}",
            self.index,
            c.m0,
            c.epsilon,
            c.scheme.solver.kind.name().replace('+', "p"),
            c.scheme.limiter,
            self.order,
            c.scheme.vars,
            g.kind,
            g.nx,
            g.ny,
            g.aspect,
            g.alpha_deg,
            self.case,
            self.form
        )
    }
}

/// One row of the result table. Everything needed to rerun the point is
/// echoed; `wall_ms` is the only non-deterministic column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub index: usize,
    pub key: String,
    pub m0: f64,
    pub epsilon: f64,
    pub solver: String,
    pub solver_params: String,
    pub limiter: String,
    pub order: u8,
    pub vars: String,
    pub form: String,
    pub case: String,
    pub grid: String,
    pub rule: String,
    pub nx: usize,
    pub ny: usize,
    pub aspect: f64,
    pub alpha: f64,
    pub shock_cell: usize,
    pub gamma: f64,
    pub cfl: f64,
    pub seed: u64,
    pub delta: f64,
    pub t_end: f64,
    pub mass_flux_fix: bool,
    pub max_real: Option<f64>,
    pub raw_max_real: Option<f64>,
    pub neutral: Option<usize>,
    pub leading_re: Option<f64>,
    pub leading_im: Option<f64>,
    pub matrix_size: Option<usize>,
    pub spectrum_method: Option<String>,
    pub steady_residual: Option<f64>,
    pub lambda_num: Option<f64>,
    pub fit_r2: Option<f64>,
    pub fit_class: Option<String>,
    pub fit_t0: Option<f64>,
    pub fit_t1: Option<f64>,
    pub breakdown: Option<String>,
    pub sim_steps: Option<usize>,
    pub first_order_fallbacks: Option<usize>,
    pub profile_steps: Option<usize>,
    pub error: Option<String>,
    pub wall_ms: f64,
}

impl ResultRecord {
    fn echo(spec: &ExperimentSpec, p: &SweepPoint) -> Self {
        let c = &p.config;
        let solver_params = match c.scheme.solver.kind {
            RiemannSolverKind::AusmPlus => format!("alpha={AUSM_ALPHA};beta={AUSM_BETA}"),
            RiemannSolverKind::Roe => match c.scheme.solver.entropy_fix {
                Some(w) => format!("entropy_fix={w}"),
                None => "entropy_fix=none".into(),
            },
            _ => String::new(),
        };
        Self {
            experiment: spec.name.clone(),
            index: p.index,
            key: p.key(),
            m0: c.m0,
            epsilon: c.epsilon,
            solver: c.scheme.solver.kind.to_string(),
            solver_params,
            limiter: c.scheme.limiter.to_string(),
            order: p.order,
            vars: c.scheme.vars.to_string(),
            form: p.form.to_string(),
            case: p.case.to_string(),
            grid: c.grid.kind.to_string(),
            rule: c.grid.rule.to_string(),
            nx: c.grid.nx,
            ny: c.grid.ny,
            aspect: c.grid.aspect,
            alpha: c.grid.alpha_deg,
            shock_cell: if c.grid.nx > 0 { c.shock_cell() } else { 0 },
            gamma: c.scheme.gas.gamma,
            cfl: c.cfl,
            seed: c.seed,
            delta: c.delta,
            t_end: c.t_end,
            mass_flux_fix: c.uses_mass_flux_fix(),
            max_real: None,
            raw_max_real: None,
            neutral: None,
            leading_re: None,
            leading_im: None,
            matrix_size: None,
            spectrum_method: None,
            steady_residual: None,
            lambda_num: None,
            fit_r2: None,
            fit_class: None,
            fit_t0: None,
            fit_t1: None,
            breakdown: None,
            sim_steps: None,
            first_order_fallbacks: None,
            profile_steps: None,
            error: None,
            wall_ms: 0.0,
        }
    }

    pub const CSV_HEADER: &'static str = "experiment,index,key,m0,epsilon,solver,solver_params,limiter,order,vars,form,case,grid,rule,nx,ny,aspect,alpha,shock_cell,gamma,cfl,seed,delta,t_end,mass_flux_fix,max_real,raw_max_real,neutral,leading_re,leading_im,matrix_size,spectrum_method,steady_residual,lambda_num,fit_r2,fit_class,fit_t0,fit_t1,breakdown,sim_steps,first_order_fallbacks,profile_steps,error,wall_ms";

    pub fn csv_row(&self) -> String {
        fn f(x: Option<f64>) -> String {
            x.map(|v| format!("{v:.12e}")).unwrap_or_default()
        }
        fn n(x: Option<usize>) -> String {
            x.map(|v| v.to_string()).unwrap_or_default()
        }
        fn s(x: &Option<String>) -> String {
            x.as_deref().map(quote).unwrap_or_default()
        }
        [
            quote(&self.experiment),
            self.index.to_string(),
            quote(&self.key),
            self.m0.to_string(),
            self.epsilon.to_string(),
            quote(&self.solver),
            quote(&self.solver_params),
            quote(&self.limiter),
            self.order.to_string(),
            self.vars.clone(),
            self.form.clone(),
            self.case.clone(),
            self.grid.clone(),
            self.rule.clone(),
            self.nx.to_string(),
            self.ny.to_string(),
            self.aspect.to_string(),
            self.alpha.to_string(),
            self.shock_cell.to_string(),
            self.gamma.to_string(),
            self.cfl.to_string(),
            self.seed.to_string(),
            self.delta.to_string(),
            self.t_end.to_string(),
            self.mass_flux_fix.to_string(),
            f(self.max_real),
            f(self.raw_max_real),
            n(self.neutral),
            f(self.leading_re),
            f(self.leading_im),
            n(self.matrix_size),
            s(&self.spectrum_method),
            f(self.steady_residual),
            f(self.lambda_num),
            f(self.fit_r2),
            s(&self.fit_class),
            f(self.fit_t0),
            f(self.fit_t1),
            s(&self.breakdown),
            n(self.sim_steps),
            n(self.first_order_fallbacks),
            n(self.profile_steps),
            s(&self.error),
            format!("{:.3}", self.wall_ms),
        ]
        .join(",")
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub records: Vec<ResultRecord>,
    pub wall_s: f64,
    pub files: Vec<PathBuf>,
}

impl ExperimentResult {
    pub fn within_budget(&self) -> bool {
        self.spec.budget_s.is_none_or(|b| self.wall_s <= b)
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| io(path, e))?))
}

fn run_point(spec: &ExperimentSpec, p: &SweepPoint, out: Option<&Path>) -> (ResultRecord, Vec<PathBuf>) {
    let start = Instant::now();
    let mut rec = ResultRecord::echo(spec, p);
    let mut files = Vec::new();
    if let Err(e) = fill_point(spec, p, out, &mut rec, &mut files) {
        rec.error = Some(e.to_string());
    }
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    (rec, files)
}

fn fill_point(
    spec: &ExperimentSpec,
    p: &SweepPoint,
    out: Option<&Path>,
    rec: &mut ResultRecord,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    p.config.validate()?;
    let key = p.key();
    if spec.mode.analysis() {
        let opts = StabilityOptions { form: p.form, ..Default::default() };
        let an = stability::analyze(&p.config, p.case, &opts, spec.exports.modes)?;
        let sp = &an.spectrum;
        rec.max_real = Some(sp.max_real);
        rec.raw_max_real = Some(sp.raw_max_real);
        rec.neutral = Some(sp.neutral);
        rec.matrix_size = Some(an.matrix_size);
        rec.steady_residual = Some(an.steady_residual);
        rec.spectrum_method = Some(match sp.method {
            SpectrumMethod::Dense => "dense".into(),
            SpectrumMethod::RowFourier { period } => format!("fourier{period}"),
        });
        if let Some(z) = sp.spectrum.eigenvalues.iter().find(|z| z.re == sp.max_real) {
            rec.leading_re = Some(z.re);
            rec.leading_im = Some(z.im);
        }
        if let Some(dir) = out {
            if spec.exports.spectra {
                let path = dir.join("spectra").join(format!("{key}.csv"));
                sp.write_csv(create(&path)?)?;
                files.push(path);
            }
            if let Some(mode) = &an.mode {
                let path = dir.join("modes").join(format!("{key}.csv"));
                mode.write_csv(create(&path)?)?;
                files.push(path);
            }
        }
    }
    if spec.mode.simulation() && p.case == LocalizationCase::Full && p.form == spec.forms[0] {
        let sim = shock::simulate(&p.config)?;
        rec.profile_steps = Some(sim.profile_steps);
        rec.sim_steps = Some(sim.report.steps);
        rec.first_order_fallbacks = Some(sim.report.first_order_fallbacks);
        rec.breakdown = sim.breakdown.clone();
        if let Some(fit) = &sim.fit {
            rec.lambda_num = Some(fit.lambda);
            rec.fit_r2 = Some(fit.r2);
            rec.fit_class = Some(format!("{:?}", fit.class).to_ascii_lowercase());
            rec.fit_t0 = Some(fit.window_t.0);
            rec.fit_t1 = Some(fit.window_t.1);
        }
        if let Some(dir) = out {
            if spec.exports.histories {
                let path = dir.join("histories").join(format!("{key}.csv"));
                sim.history.write_csv(create(&path)?)?;
                files.push(path);
            }
            if let (true, Some(field)) = (spec.exports.fields, &sim.field) {
                let path = dir.join("fields").join(format!("{key}.csv"));
                field.write_csv(&p.config.scheme.gas, create(&path)?)?;
                files.push(path);
            }
        }
    }
    Ok(())
}

/// Run every sweep point in parallel. Point failures land in the record's
/// `error` column; only I/O errors on the result tables abort.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let start = Instant::now();
    let out = spec.output.as_deref();
    let mut done: Vec<(ResultRecord, Vec<PathBuf>)> =
        spec.points().par_iter().map(|p| run_point(spec, p, out)).collect();
    done.sort_by_key(|(r, _)| r.index);
    let mut files = Vec::new();
    let mut records = Vec::with_capacity(done.len());
    for (r, f) in done {
        records.push(r);
        files.extend(f);
    }
    if let Some(dir) = out {
        files.extend(emit_plotdata(&records, dir, PlotFormat::Csv)?);
        files.extend(emit_plotdata(&records, dir, PlotFormat::Json)?);
    }
    Ok(ExperimentResult { spec: spec.clone(), records, wall_s: start.elapsed().as_secs_f64(), files })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Csv,
    Json,
}

/// Write the result tables into `dir`.
///
/// CSV: `results.csv` (every [`ResultRecord`] column) and `sweep.csv`
/// (`m0,epsilon,solver,limiter,order,max_real,lambda_num`).
/// JSON: `results.json`, an array of records.
pub fn emit_plotdata(records: &[ResultRecord], dir: &Path, format: PlotFormat) -> Result<Vec<PathBuf>> {
    let mut sorted: Vec<&ResultRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.index);
    match format {
        PlotFormat::Csv => {
            let full = dir.join("results.csv");
            let mut w = create(&full)?;
            writeln!(w, "{}", ResultRecord::CSV_HEADER).map_err(|e| io(&full, e))?;
            for r in &sorted {
                writeln!(w, "{}", r.csv_row()).map_err(|e| io(&full, e))?;
            }
            w.flush().map_err(|e| io(&full, e))?;
            let sweep = dir.join("sweep.csv");
            let mut w = create(&sweep)?;
            writeln!(w, "m0,epsilon,solver,limiter,order,max_real,lambda_num").map_err(|e| io(&sweep, e))?;
            let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
            for r in &sorted {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r.m0,
                    r.epsilon,
                    quote(&r.solver),
                    r.limiter,
                    r.order,
                    opt(r.max_real),
                    opt(r.lambda_num)
                )
                .map_err(|e| io(&sweep, e))?;
            }
            w.flush().map_err(|e| io(&sweep, e))?;
            Ok(vec![full, sweep])
        }
        PlotFormat::Json => {
            let path = dir.join("results.json");
            let mut w = create(&path)?;
            serde_json::to_writer_pretty(&mut w, &sorted).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(w).map_err(|e| io(&path, e))?;
            w.flush().map_err(|e| io(&path, e))?;
            Ok(vec![path])
        }
    }
}

/// Default relative tolerance of the theory/time-marching growth-rate comparison.
pub const VALIDATION_TOL: f64 = 0.15;

/// Stability theory against a perturbation run for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub max_real: f64,
    pub lambda_num: Option<f64>,
    pub fit_class: Option<GrowthClass>,
    pub breakdown: Option<String>,
    pub sign_agrees: bool,
    /// |max_real - lambda_num| / |lambda_num|.
    pub relative_gap: Option<f64>,
    /// Sign agreement, plus the gap within tolerance when the theory says unstable.
    pub passed: bool,
    pub simulation_s: f64,
}

pub fn validate(config: &ShockConfig, tol: f64) -> Result<Validation> {
    let an = stability::analyze(config, LocalizationCase::Full, &StabilityOptions::default(), false)?;
    let start = Instant::now();
    let sim = shock::simulate(config)?;
    let simulation_s = start.elapsed().as_secs_f64();
    let max_real = an.max_real();
    let lambda_num = sim.fit.map(|f| f.lambda);
    let sign_agrees = lambda_num.is_some_and(|l| l.signum() == max_real.signum());
    let relative_gap = lambda_num.map(|l| (max_real - l).abs() / l.abs());
    let passed = sign_agrees && (max_real <= 0.0 || relative_gap.is_some_and(|g| g <= tol));
    Ok(Validation {
        max_real,
        lambda_num,
        fit_class: sim.fit.map(|f| f.class),
        breakdown: sim.breakdown,
        sign_agrees,
        relative_gap,
        passed,
        simulation_s,
    })
}

/// The four localization analyses of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    /// Whole field, with the leading mode.
    pub full: Analysis,
    pub upstream: Analysis,
    pub shock: Analysis,
    pub downstream: Analysis,
    /// Columns of the numerical shock structure in the 1D profile.
    pub structure: Vec<usize>,
    /// Column of the full-field mode's peak for rho, u, v, p.
    pub peak_columns: [usize; 4],
}

/// Relative departure from both end states that marks a shock-structure cell.
pub const STRUCTURE_TOL: f64 = 1e-6;

pub fn localize(config: &ShockConfig, opts: &StabilityOptions) -> Result<Localization> {
    let run = |case, mode| stability::analyze(config, case, opts, mode);
    let full = run(LocalizationCase::Full, true)?;
    let mode = full.mode.as_ref().expect("mode requested");
    let peak_columns = [0, 1, 2, 3].map(|k| mode.argmax(k).0);
    let profile = shock::solve_1d_steady(config)?;
    Ok(Localization {
        peak_columns,
        structure: shock::shock_structure(config, &profile, STRUCTURE_TOL)?,
        upstream: run(LocalizationCase::Upstream, false)?,
        shock: run(LocalizationCase::ShockStructure, false)?,
        downstream: run(LocalizationCase::Downstream, false)?,
        full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_specs_parse() {
        for (name, _) in NAMED {
            let s = ExperimentSpec::named(name).unwrap();
            assert_eq!(s.name, *name);
            assert!(s.budget_s.is_some(), "{name} declares no budget");
        }
        assert_eq!(ExperimentSpec::named("fig9").unwrap().points().len(), 10);
        assert_eq!(ExperimentSpec::named("fig8").unwrap().points().len(), 60);
        assert!(ExperimentSpec::named("fig99").is_err());
    }

    #[test]
    fn first_order_is_not_repeated_per_limiter() {
        let mut s = ExperimentSpec::default();
        s.limiters = vec![LimiterKind::Minmod, LimiterKind::Superbee];
        s.orders = vec![1, 2];
        let pts = s.points();
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().enumerate().all(|(k, p)| p.index == k));
    }

    #[test]
    fn domain_height_sets_row_count() {
        let s = ExperimentSpec::named("fig13").unwrap();
        let ny: Vec<usize> = s.points().iter().map(|p| p.config.grid.ny).collect();
        assert_eq!(ny, vec![40, 20, 4, 2]);
    }

    #[test]
    fn csv_row_matches_header() {
        let s = ExperimentSpec::default();
        let mut r = ResultRecord::echo(&s, &s.points()[0]);
        r.error = Some("bad, \"quoted\" value".into());
        let cols = |line: &str| {
            let mut n = 1;
            let mut inside = false;
            for ch in line.chars() {
                match ch {
                    '"' => inside = !inside,
                    ',' if !inside => n += 1,
                    _ => {}
                }
            }
            n
        };
        assert_eq!(cols(ResultRecord::CSV_HEADER), cols(&r.csv_row()));
    }

    #[test]
    fn failing_points_are_recorded() {
        let mut s = ExperimentSpec::default();
        s.m0 = vec![0.5, 20.0];
        s.epsilon = vec![0.5];
        let res = run_experiment(&s).unwrap();
        assert_eq!(res.records.len(), 2);
        assert!(res.records[0].error.is_some());
        assert!(res.records[1].error.is_none());
        assert!(res.records[1].max_real.is_some());
    }
}
