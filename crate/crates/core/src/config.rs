//! Flat `key = value` configuration files.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. List
//! values are comma separated.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::euler::GasModel;
use crate::grid::{DistortionRule, GridKind, GridSpec};
use crate::muscl::{LimiterKind, ReconstructionVariables};
use crate::riemann::RiemannSolverKind;
use crate::shock::{MassFluxFix, ShockConfig};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, (String, usize)>,
}

impl FromStr for ConfigMap {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, message: format!("expected 'key = value', got '{body}'") })?;
            let key = k.trim().to_ascii_lowercase().replace('-', "_");
            if key.is_empty() {
                return Err(Error::Parse { line, message: "empty key".into() });
            }
            if entries.insert(key.clone(), (v.trim().to_string(), line)).is_some() {
                return Err(Error::Parse { line, message: format!("duplicate key '{key}'") });
            }
        }
        Ok(Self { entries })
    }
}

impl ConfigMap {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        text.parse()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Parse { line: *line, message: format!("{key}: {e}") }),
        }
    }

    pub fn list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let Some((v, line)) = self.entries.get(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| Error::Parse { line: *line, message: format!("{key}: '{s}': {e}") }))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Rejects keys outside `allowed` (typos would otherwise be silently ignored).
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, (_, line)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Parse { line: *line, message: format!("unknown key '{k}'") });
            }
        }
        Ok(())
    }
}

/// Keys understood by [`shock_config`].
pub const SHOCK_KEYS: &[&str] = &[
    "m0",
    "epsilon",
    "solver",
    "limiter",
    "order",
    "vars",
    "grid",
    "nx",
    "ny",
    "alpha",
    "delta_aspect",
    "rule",
    "cfl",
    "seed",
    "delta",
    "t_end",
    "mass_flux_fix",
    "shock_cell",
    "gamma",
    "entropy_fix",
    "max_steps_1d",
    "slope_band",
    "min_decades",
];

/// Parse a spatial order (1 or 2).
pub fn parse_order(s: &str) -> Result<u8> {
    match s.trim() {
        "1" | "first" => Ok(1),
        "2" | "second" => Ok(2),
        other => Err(Error::InvalidConfig(format!("order must be 1 or 2, got '{other}'"))),
    }
}

/// Apply the single-run keys of `map` on top of `base`.
///
/// `order = 1` forces the first-order scheme whatever the limiter; `order = 2`
/// with no limiter given uses van Albada.
pub fn shock_config(map: &ConfigMap, base: ShockConfig) -> Result<ShockConfig> {
    let mut c = base;
    if let Some(v) = map.get("m0")? {
        c.m0 = v;
    }
    if let Some(v) = map.get("epsilon")? {
        c.epsilon = v;
    }
    if let Some(v) = map.get::<RiemannSolverKind>("solver")? {
        c.scheme.solver.kind = v;
    }
    if let Some(v) = map.get::<f64>("entropy_fix")? {
        c.scheme.solver.entropy_fix = (v > 0.0).then_some(v);
    }
    if let Some(v) = map.get::<LimiterKind>("limiter")? {
        c.scheme.limiter = v;
    }
    if let Some(v) = map.raw("order") {
        match parse_order(v)? {
            1 => c.scheme.limiter = LimiterKind::None,
            _ if c.scheme.limiter == LimiterKind::None => c.scheme.limiter = LimiterKind::VanAlbada,
            _ => {}
        }
    }
    if let Some(v) = map.get::<ReconstructionVariables>("vars")? {
        c.scheme.vars = v;
    }
    if let Some(g) = map.get::<f64>("gamma")? {
        c.scheme.gas = GasModel::new(g)?;
    }
    c.grid = grid_spec(map, c.grid)?;
    if let Some(v) = map.get("cfl")? {
        c.cfl = v;
    }
    if let Some(v) = map.get("seed")? {
        c.seed = v;
    }
    if let Some(v) = map.get("delta")? {
        c.delta = v;
    }
    if let Some(v) = map.get("t_end")? {
        c.t_end = v;
    }
    if let Some(v) = map.get::<MassFluxFix>("mass_flux_fix")? {
        c.mass_flux_fix = v;
    }
    if let Some(v) = map.get("shock_cell")? {
        c.shock_cell = Some(v);
    }
    if let Some(v) = map.get("max_steps_1d")? {
        c.max_steps_1d = v;
    }
    if let Some(v) = map.get("slope_band")? {
        c.fit.slope_band = v;
    }
    if let Some(v) = map.get("min_decades")? {
        c.fit.min_decades = v;
    }
    c.validate()?;
    Ok(c)
}

/// Grid keys: `grid`, `nx`, `ny`, `alpha`, `delta_aspect`, `rule`.
pub fn grid_spec(map: &ConfigMap, base: GridSpec) -> Result<GridSpec> {
    let mut g = base;
    if let Some(k) = map.get::<GridKind>("grid")? {
        g.kind = k;
    }
    if let Some(v) = map.get("nx")? {
        g.nx = v;
    }
    if let Some(v) = map.get("ny")? {
        g.ny = v;
    }
    if let Some(v) = map.get("alpha")? {
        g.alpha_deg = v;
        if !map.contains("grid") && v != 0.0 {
            g.kind = GridKind::Distorted;
        }
    }
    if let Some(v) = map.get("delta_aspect")? {
        g.aspect = v;
        if !map.contains("grid") && v != 1.0 {
            g.kind = GridKind::Aspect;
        }
    }
    if let Some(v) = map.get::<DistortionRule>("rule")? {
        g.rule = v;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_case() {
        let m: ConfigMap = "# header\nM0 = 20  # trailing\n\neps-list = 0.1, 0.5,0.9\nsolver=hllc\n".parse().unwrap();
        assert_eq!(m.get::<f64>("m0").unwrap(), Some(20.0));
        assert_eq!(m.list::<f64>("eps_list").unwrap(), Some(vec![0.1, 0.5, 0.9]));
        assert_eq!(m.get::<RiemannSolverKind>("solver").unwrap(), Some(RiemannSolverKind::Hllc));
        assert_eq!(m.get::<f64>("missing").unwrap(), None);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = "m0 = 2\nbroken line\n".parse::<ConfigMap>().unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = "m0 = 2\nm0 = 3\n".parse::<ConfigMap>().unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let m: ConfigMap = "\nm0 = fast\n".parse().unwrap();
        assert!(matches!(m.get::<f64>("m0"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(m.check_keys(&["epsilon"]), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn builds_shock_config() {
        let m: ConfigMap =
            "m0 = 5\nepsilon = 0.3\nsolver = hll\norder = 1\nvars = prim\nalpha = 10\nny = 12\nseed = 9\n".parse().unwrap();
        let base = ShockConfig::new(20.0, 0.1, RiemannSolverKind::Roe, LimiterKind::VanAlbada);
        let c = shock_config(&m, base).unwrap();
        assert_eq!(c.m0, 5.0);
        assert_eq!(c.scheme.solver.kind, RiemannSolverKind::Hll);
        assert_eq!(c.scheme.limiter, LimiterKind::None);
        assert_eq!(c.scheme.vars, ReconstructionVariables::Primitive);
        assert_eq!(c.grid.kind, GridKind::Distorted);
        assert_eq!((c.grid.nx, c.grid.ny, c.grid.alpha_deg), (11, 12, 10.0));
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let base = ShockConfig::new(20.0, 0.1, RiemannSolverKind::Roe, LimiterKind::VanAlbada);
        for text in ["m0 = 0.5", "epsilon = 2", "order = 3", "solver = godunov", "cfl = -1"] {
            let m: ConfigMap = text.parse().unwrap();
            assert!(shock_config(&m, base.clone()).is_err(), "{text}");
        }
    }
}
