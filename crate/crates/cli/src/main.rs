use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use shockstab::config::{self, ConfigMap};
use shockstab::experiments::{self, ExperimentSpec, VALIDATION_TOL};
use shockstab::grid::{DistortionRule, GridKind};
use shockstab::muscl::{LimiterKind, ReconstructionVariables};
use shockstab::riemann::RiemannSolverKind;
use shockstab::shock::{self, ShockConfig};
use shockstab::stability::{self, Analysis, LocalizationCase, StabilityOptions, VariableForm};

#[derive(Parser)]
#[command(name = "shockstab", version, about = "Stability analysis of captured normal shocks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the stability matrix and report its spectrum.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "full")]
        case: LocalizationCase,
        /// Variables of the stability matrix.
        #[arg(long, default_value = "cons")]
        form: VariableForm,
        /// Skip the row-Fourier reduction and solve the full dense matrix.
        #[arg(long)]
        dense: bool,
        /// Also compute and export the leading eigenvector.
        #[arg(long)]
        mode: bool,
    },
    /// Perturb the steady shock and march in time, fitting the growth rate.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare max Re(lambda) with the time-marching growth rate.
    Validate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = VALIDATION_TOL)]
        tol: f64,
    },
    /// Run a parameter sweep from an experiment file or a named figure.
    Sweep {
        /// Experiment file (flat key = value).
        #[arg(long, conflicts_with = "name")]
        config: Option<PathBuf>,
        /// Shipped experiment: fig8, fig9, fig10, fig13, fig14, fig17.
        #[arg(long)]
        name: Option<String>,
        /// Output directory (default results/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Upstream, shock-structure and downstream sub-domain analyses.
    Localize {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write grid node coordinates as CSV.
    GridExport {
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Single-run parameters. Precedence: built-in defaults, then `--config`, then flags.
#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    m0: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    solver: Option<RiemannSolverKind>,
    #[arg(long)]
    limiter: Option<LimiterKind>,
    #[arg(long)]
    order: Option<u8>,
    /// Reconstructed variables: cons or prim.
    #[arg(long)]
    vars: Option<ReconstructionVariables>,
    #[arg(long)]
    grid: Option<GridKind>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Distortion angle in degrees.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Distortion construction: transverse or sawtooth.
    #[arg(long)]
    rule: Option<DistortionRule>,
    /// Cell aspect ratio dy/dx.
    #[arg(long)]
    delta_aspect: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Output directory (output file for grid-export).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key = value file with run parameters.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn shock_config(&self) -> Result<ShockConfig> {
        let mut map = match &self.config {
            Some(p) => ConfigMap::load(p)?,
            None => ConfigMap::default(),
        };
        map.check_keys(config::SHOCK_KEYS).context("run configuration")?;
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.set(k, v);
            }
        };
        put("m0", self.m0.map(|v| v.to_string()));
        put("epsilon", self.epsilon.map(|v| v.to_string()));
        put("solver", self.solver.map(|v| v.to_string()));
        put("limiter", self.limiter.map(|v| v.to_string()));
        put("order", self.order.map(|v| v.to_string()));
        put("vars", self.vars.map(|v| v.to_string()));
        put("grid", self.grid.map(|v| v.to_string()));
        put("nx", self.nx.map(|v| v.to_string()));
        put("ny", self.ny.map(|v| v.to_string()));
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("rule", self.rule.map(|v| v.to_string()));
        put("delta_aspect", self.delta_aspect.map(|v| v.to_string()));
        put("cfl", self.cfl.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("t_end", self.t_end.map(|v| v.to_string()));
        let base = ShockConfig::new(20.0, 0.1, RiemannSolverKind::Roe, LimiterKind::VanAlbada);
        Ok(config::shock_config(&map, base)?)
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn describe(c: &ShockConfig) -> String {
    let g = &c.grid;
    format!(
        "M0={} eps={} solver={} limiter={} vars={} grid={} {}x{} aspect={} alpha={} rule={}",
        c.m0, c.epsilon, c.scheme.solver.kind, c.scheme.limiter, c.scheme.vars, g.kind, g.nx, g.ny, g.aspect, g.alpha_deg, g.rule
    )
}

/// `key,value` rows.
fn write_summary(path: &Path, rows: &[(&str, String)]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "key,value")?;
    for (k, v) in rows {
        writeln!(w, "{k},{v}")?;
    }
    w.flush()?;
    Ok(())
}

fn config_rows(c: &ShockConfig) -> Vec<(&'static str, String)> {
    let g = &c.grid;
    vec![
        ("m0", c.m0.to_string()),
        ("epsilon", c.epsilon.to_string()),
        ("solver", c.scheme.solver.kind.to_string()),
        ("limiter", c.scheme.limiter.to_string()),
        ("vars", c.scheme.vars.to_string()),
        ("gamma", c.scheme.gas.gamma.to_string()),
        ("grid", g.kind.to_string()),
        ("nx", g.nx.to_string()),
        ("ny", g.ny.to_string()),
        ("aspect", g.aspect.to_string()),
        ("alpha", g.alpha_deg.to_string()),
        ("rule", g.rule.to_string()),
        ("cfl", c.cfl.to_string()),
        ("seed", c.seed.to_string()),
        ("delta", c.delta.to_string()),
        ("t_end", c.t_end.to_string()),
        ("mass_flux_fix", c.uses_mass_flux_fix().to_string()),
    ]
}

fn report_analysis(an: &Analysis) {
    let sp = &an.spectrum;
    println!("case={} form={} size={} steady_residual={:.3e}", an.case, an.form, an.matrix_size, an.steady_residual);
    println!("max_real={:.10} raw_max_real={:.3e} neutral={}", sp.max_real, sp.raw_max_real, sp.neutral);
    if !sp.max_real_by_wavenumber.is_empty() {
        let k: Vec<String> = sp.max_real_by_wavenumber.iter().map(|v| format!("{v:.4}")).collect();
        println!("max_real_by_wavenumber={}", k.join(" "));
    }
}

fn analyze(run: &RunArgs, case: LocalizationCase, form: VariableForm, dense: bool, want_mode: bool) -> Result<()> {
    let c = run.shock_config()?;
    println!("{}", describe(&c));
    let opts = StabilityOptions { form, dense_only: dense, ..Default::default() };
    let an = stability::analyze(&c, case, &opts, want_mode)?;
    report_analysis(&an);
    if let Some(m) = &an.mode {
        println!("leading eigenvalue={:.10}{:+.10}i eigen_residual={:.2e}", m.eigenvalue.re, m.eigenvalue.im, m.residual);
    }
    if let Some(dir) = &run.out {
        an.spectrum.write_csv(create(&dir.join("spectrum.csv"))?)?;
        if let Some(m) = &an.mode {
            m.write_csv(create(&dir.join("mode.csv"))?)?;
        }
        let mut rows = config_rows(&c);
        rows.extend([
            ("case", case.to_string()),
            ("form", form.to_string()),
            ("matrix_size", an.matrix_size.to_string()),
            ("max_real", format!("{:.12e}", an.spectrum.max_real)),
            ("raw_max_real", format!("{:.12e}", an.spectrum.raw_max_real)),
            ("neutral", an.spectrum.neutral.to_string()),
            ("steady_residual", format!("{:.3e}", an.steady_residual)),
        ]);
        write_summary(&dir.join("summary.csv"), &rows)?;
    }
    Ok(())
}

fn simulate(run: &RunArgs) -> Result<()> {
    let c = run.shock_config()?;
    println!("{}", describe(&c));
    let sim = shock::simulate(&c)?;
    println!("steps={} t={:.3} profile_steps={}", sim.report.steps, sim.report.t, sim.profile_steps);
    if let Some(b) = &sim.breakdown {
        println!("breakdown: {b}");
    }
    match &sim.fit {
        Some(f) => println!(
            "lambda_num={:.10} class={:?} window=[{:.2}, {:.2}] r2={:.6}",
            f.lambda, f.class, f.window_t.0, f.window_t.1, f.r2
        ),
        None => println!("lambda_num=none"),
    }
    if let Some(dir) = &run.out {
        sim.history.write_csv(create(&dir.join("history.csv"))?)?;
        if let Some(field) = &sim.field {
            field.write_csv(&c.scheme.gas, create(&dir.join("field.csv"))?)?;
        }
        let mut rows = config_rows(&c);
        rows.push(("lambda_num", sim.fit.map_or(String::new(), |f| format!("{:.12e}", f.lambda))));
        rows.push(("steps", sim.report.steps.to_string()));
        rows.push(("breakdown", sim.breakdown.clone().unwrap_or_default().replace(',', ";")));
        write_summary(&dir.join("summary.csv"), &rows)?;
    }
    Ok(())
}

fn validate(run: &RunArgs, tol: f64) -> Result<()> {
    let c = run.shock_config()?;
    println!("{}", describe(&c));
    let v = experiments::validate(&c, tol)?;
    let lam = v.lambda_num.map_or("none".to_string(), |l| format!("{l:.6}"));
    let gap = v.relative_gap.map_or("n/a".to_string(), |g| format!("{:.1}%", 100.0 * g));
    println!("max_real={:.6} lambda_num={lam} gap={gap} sign_agrees={}", v.max_real, v.sign_agrees);
    println!("{}", if v.passed { "PASS" } else { "FAIL" });
    Ok(())
}

fn sweep(config: Option<&Path>, name: Option<&str>, out: Option<PathBuf>) -> Result<()> {
    let mut spec = match (config, name) {
        (Some(p), _) => ExperimentSpec::load(p)?,
        (None, Some(n)) => ExperimentSpec::named(n)?,
        (None, None) => bail!("sweep needs --config FILE or --name NAME"),
    };
    if let Some(o) = out {
        spec.output = Some(o);
    }
    if spec.output.is_none() {
        spec.output = Some(Path::new("results").join(&spec.name));
    }
    let points = spec.points().len();
    eprintln!("{}: {points} points -> {}", spec.name, spec.output.as_ref().unwrap().display());
    let res = experiments::run_experiment(&spec)?;
    let mut w = BufWriter::new(io::stdout().lock());
    writeln!(w, "m0,epsilon,solver,limiter,order,aspect,alpha,case,max_real,lambda_num,error")?;
    let f = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
    for r in &res.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.m0,
            r.epsilon,
            r.solver,
            r.limiter,
            r.order,
            r.aspect,
            r.alpha,
            r.case,
            f(r.max_real),
            f(r.lambda_num),
            r.error.as_deref().unwrap_or("").replace(',', ";")
        )?;
    }
    w.flush()?;
    let budget = spec.budget_s.map_or(String::new(), |b| format!(" (budget {b}s)"));
    eprintln!("{} points, {} failed, {:.1}s{budget}", res.records.len(), res.failures(), res.wall_s);
    if !res.within_budget() {
        eprintln!("warning: over budget");
    }
    Ok(())
}

fn localize(run: &RunArgs) -> Result<()> {
    let c = run.shock_config()?;
    println!("{}", describe(&c));
    let loc = experiments::localize(&c, &StabilityOptions::default())?;
    for an in [&loc.full, &loc.upstream, &loc.shock, &loc.downstream] {
        println!("{:<10} max_real={:+.6}", an.case.to_string(), an.max_real());
    }
    println!("mode peak columns (rho,u,v,p)={:?} shock structure={:?}", loc.peak_columns, loc.structure);
    if let Some(dir) = &run.out {
        for an in [&loc.full, &loc.upstream, &loc.shock, &loc.downstream] {
            an.spectrum.write_csv(create(&dir.join(format!("spectrum_{}.csv", an.case)))?)?;
        }
        if let Some(m) = &loc.full.mode {
            m.write_csv(create(&dir.join("mode.csv"))?)?;
        }
    }
    Ok(())
}

fn grid_export(run: &RunArgs) -> Result<()> {
    let c = run.shock_config()?;
    let grid = c.grid.build()?;
    match &run.out {
        Some(p) => {
            let mut w = create(p)?;
            grid.write_csv(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            grid.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Analyze { run, case, form, dense, mode } => analyze(&run, case, form, dense, mode),
        Command::Simulate { run } => simulate(&run),
        Command::Validate { run, tol } => validate(&run, tol),
        Command::Sweep { config, name, out } => sweep(config.as_deref(), name.as_deref(), out),
        Command::Localize { run } => localize(&run),
        Command::GridExport { run } => grid_export(&run),
    }
}
