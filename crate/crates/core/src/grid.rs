//! Structured quadrilateral grids, periodic in the j (y) direction.
//!
//! Cell sides are ordered counterclockwise E, N, W, S with outward normals.
//! Faces are stored once: `x_face(i, j)` separates cells `(i-1, j)` and
//! `(i, j)` with its normal pointing toward increasing `i`; `y_face(i, j)`
//! separates `(i, j-1)` and `(i, j)` (wrapping periodically) with its normal
//! pointing toward increasing `j`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GHOST_DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Cartesian,
    Aspect,
    Distorted,
}

impl std::str::FromStr for GridKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cartesian" => Ok(GridKind::Cartesian),
            "aspect" => Ok(GridKind::Aspect),
            "distorted" => Ok(GridKind::Distorted),
            other => Err(Error::InvalidConfig(format!("unknown grid kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for GridKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridKind::Cartesian => "cartesian",
            GridKind::Aspect => "aspect",
            GridKind::Distorted => "distorted",
        })
    }
}

/// How a distortion angle displaces the nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistortionRule {
    /// Node columns move in y by alternating +/- (dx/2) tan(alpha), so the
    /// faces crossing a planar x-shock zigzag at angle alpha to the x axis.
    #[default]
    Transverse,
    /// Interior node rows move in x by alternating +/- (dy/2) tan(alpha),
    /// tilting the faces parallel to the shock. Needs an even ny.
    Sawtooth,
}

impl std::str::FromStr for DistortionRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transverse" => Ok(DistortionRule::Transverse),
            "sawtooth" => Ok(DistortionRule::Sawtooth),
            other => Err(Error::InvalidConfig(format!("unknown distortion rule '{other}'"))),
        }
    }
}

impl std::fmt::Display for DistortionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistortionRule::Transverse => "transverse",
            DistortionRule::Sawtooth => "sawtooth",
        })
    }
}

/// Parameters from which a grid is generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: GridKind,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    /// Aspect ratio dy/dx (used by `aspect`; `cartesian` forces 1).
    pub aspect: f64,
    /// Distortion angle in degrees (used by `distorted`).
    pub alpha_deg: f64,
    #[serde(default)]
    pub rule: DistortionRule,
}

impl GridSpec {
    pub fn cartesian(nx: usize, ny: usize) -> Self {
        Self { kind: GridKind::Cartesian, nx, ny, dx: 1.0, aspect: 1.0, alpha_deg: 0.0, rule: DistortionRule::Transverse }
    }

    pub fn aspect(nx: usize, ny: usize, aspect: f64) -> Self {
        Self { kind: GridKind::Aspect, nx, ny, dx: 1.0, aspect, alpha_deg: 0.0, rule: DistortionRule::Transverse }
    }

    pub fn distorted(nx: usize, ny: usize, alpha_deg: f64) -> Self {
        Self { kind: GridKind::Distorted, nx, ny, dx: 1.0, aspect: 1.0, alpha_deg, rule: DistortionRule::Transverse }
    }

    pub fn with_rule(mut self, rule: DistortionRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn dy(&self) -> f64 {
        match self.kind {
            GridKind::Cartesian => self.dx,
            _ => self.dx * self.aspect,
        }
    }

    pub fn build(&self) -> Result<StructuredGrid> {
        if !(self.aspect > 0.0) {
            return Err(Error::InvalidGrid(format!("aspect ratio must be positive, got {}", self.aspect)));
        }
        match self.kind {
            GridKind::Cartesian | GridKind::Aspect => {
                StructuredGrid::cartesian(self.nx, self.ny, self.dx, self.dy())
            }
            GridKind::Distorted => {
                StructuredGrid::distorted_with(self.nx, self.ny, self.dx, self.dy(), self.alpha_deg, self.rule)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub length: f64,
    pub normal: [f64; 2],
}

impl Face {
    fn between(a: [f64; 2], b: [f64; 2]) -> Face {
        // Outward normal of a counterclockwise edge a -> b.
        let d = [b[0] - a[0], b[1] - a[1]];
        let length = d[0].hypot(d[1]);
        Face { length, normal: [d[1] / length, -d[0] / length] }
    }
}

/// Volume and the four (E, N, W, S) sides of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub volume: f64,
    pub sides: [Face; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGrid {
    nx: usize,
    ny: usize,
    nodes: Vec<[f64; 2]>,
    volumes: Vec<f64>,
    x_faces: Vec<Face>,
    y_faces: Vec<Face>,
}

/// Shoelace area of a polygon given counterclockwise.
pub fn polygon_area(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    let mut twice = 0.0;
    for k in 0..n {
        let a = pts[k];
        let b = pts[(k + 1) % n];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * twice
}

/// Node y-shift of the transverse distortion.
pub fn transverse_offset(i: usize, dx: f64, alpha_deg: f64) -> f64 {
    let s = 0.5 * dx * alpha_deg.to_radians().tan();
    if i % 2 == 0 {
        s
    } else {
        -s
    }
}

/// Node x-shift of the sawtooth distortion: boundary columns stay straight,
/// interior columns zigzag by +/- (dy/2) tan(alpha) on alternating node rows.
pub fn sawtooth_offset(i: usize, j: usize, nx: usize, dy: f64, alpha_deg: f64) -> f64 {
    if i == 0 || i == nx {
        return 0.0;
    }
    let s = 0.5 * dy * alpha_deg.to_radians().tan();
    if j % 2 == 0 {
        s
    } else {
        -s
    }
}

impl StructuredGrid {
    pub fn cartesian(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        Self::check_dims(nx, ny, dx, dy)?;
        Self::from_nodes(nx, ny, |i, j| [i as f64 * dx, j as f64 * dy])
    }

    pub fn distorted(nx: usize, ny: usize, dx: f64, dy: f64, alpha_deg: f64) -> Result<Self> {
        Self::distorted_with(nx, ny, dx, dy, alpha_deg, DistortionRule::Transverse)
    }

    pub fn distorted_with(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        alpha_deg: f64,
        rule: DistortionRule,
    ) -> Result<Self> {
        Self::check_dims(nx, ny, dx, dy)?;
        if !(alpha_deg.abs() < 45.0) {
            return Err(Error::InvalidGrid(format!(
                "distortion angle must satisfy |alpha| < 45 deg, got {alpha_deg}"
            )));
        }
        if alpha_deg == 0.0 {
            return Self::cartesian(nx, ny, dx, dy);
        }
        if rule == DistortionRule::Transverse {
            return Self::from_nodes(nx, ny, |i, j| [i as f64 * dx, j as f64 * dy + transverse_offset(i, dx, alpha_deg)]);
        }
        if ny % 2 != 0 {
            // The zigzag has period two in j and must wrap onto itself.
            return Err(Error::InvalidGrid(format!("distorted grid needs an even ny, got {ny}")));
        }
        Self::from_nodes(nx, ny, |i, j| {
            [i as f64 * dx + sawtooth_offset(i, j, nx, dy, alpha_deg), j as f64 * dy]
        })
    }

    fn check_dims(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<()> {
        // One or two rows are legitimate: the j direction is periodic.
        if nx < 3 || ny < 1 {
            return Err(Error::InvalidGrid(format!("need nx >= 3 and ny >= 1, got {nx} x {ny}")));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacings must be positive, got dx={dx}, dy={dy}")));
        }
        Ok(())
    }

    /// Build a grid from a node-placement rule `node(i, j)` for
    /// `0 <= i <= nx`, `0 <= j <= ny`. Rows `j = 0` and `j = ny` must produce
    /// congruent faces since the grid is periodic in j.
    pub fn from_nodes(nx: usize, ny: usize, node: impl Fn(usize, usize) -> [f64; 2]) -> Result<Self> {
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(node(i, j));
            }
        }
        let mut grid = StructuredGrid {
            nx,
            ny,
            nodes,
            volumes: Vec::with_capacity(nx * ny),
            x_faces: Vec::with_capacity((nx + 1) * ny),
            y_faces: Vec::with_capacity(nx * ny),
        };
        for j in 0..ny {
            for i in 0..nx {
                let v = polygon_area(&grid.corners(i, j));
                if !(v > 0.0) {
                    return Err(Error::InvalidGrid(format!("cell ({i}, {j}) has non-positive volume {v}")));
                }
                grid.volumes.push(v);
            }
        }
        for j in 0..ny {
            for i in 0..=nx {
                grid.x_faces.push(Face::between(grid.node(i, j), grid.node(i, j + 1)));
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                grid.y_faces.push(Face::between(grid.node(i + 1, j), grid.node(i, j)));
            }
        }
        for i in 0..nx {
            let top = Face::between(grid.node(i + 1, ny), grid.node(i, ny));
            let bottom = grid.y_face(i, 0);
            let same = (top.length - bottom.length).abs() <= 1e-12 * top.length
                && (top.normal[0] - bottom.normal[0]).abs() <= 1e-12
                && (top.normal[1] - bottom.normal[1]).abs() <= 1e-12;
            if !same {
                return Err(Error::InvalidGrid(format!("column {i} is not periodic in j")));
            }
        }
        Ok(grid)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        self.nodes[j * (self.nx + 1) + i]
    }

    fn corners(&self, i: usize, j: usize) -> [[f64; 2]; 4] {
        [self.node(i, j), self.node(i + 1, j), self.node(i + 1, j + 1), self.node(i, j + 1)]
    }

    #[inline]
    pub fn volume(&self, i: usize, j: usize) -> f64 {
        self.volumes[j * self.nx + i]
    }

    /// Face between cells (i-1, j) and (i, j), for `0 <= i <= nx`.
    #[inline]
    pub fn x_face(&self, i: usize, j: usize) -> Face {
        self.x_faces[j * (self.nx + 1) + i]
    }

    /// Face between cells (i, j-1) and (i, j), for `0 <= j < ny`; `j = 0`
    /// is also the top face of row `ny - 1`.
    #[inline]
    pub fn y_face(&self, i: usize, j: usize) -> Face {
        self.y_faces[j * self.nx + i]
    }

    pub fn centroid(&self, i: usize, j: usize) -> [f64; 2] {
        let c = self.corners(i, j);
        let x = c.iter().map(|p| p[0]).sum::<f64>() / 4.0;
        let y = c.iter().map(|p| p[1]).sum::<f64>() / 4.0;
        [x, y]
    }

    /// Geometry of cell (i, j). Ghost indices (up to two layers) return the
    /// geometry of the interior cell they mirror: clamped in i, wrapped in j.
    pub fn cell_geometry(&self, i: isize, j: isize) -> Result<CellGeometry> {
        let g = GHOST_DEPTH as isize;
        if i < -g || j < -g || i >= self.nx as isize + g || j >= self.ny as isize + g {
            return Err(Error::IndexOutOfRange { i, j });
        }
        let ii = i.clamp(0, self.nx as isize - 1) as usize;
        let jj = j.rem_euclid(self.ny as isize) as usize;
        let [sw, se, ne, nw] = self.corners(ii, jj);
        Ok(CellGeometry {
            volume: self.volume(ii, jj),
            sides: [
                Face::between(se, ne),
                Face::between(ne, nw),
                Face::between(nw, sw),
                Face::between(sw, se),
            ],
        })
    }

    /// Smallest `volume / longest side` over all cells.
    pub fn min_char_length(&self) -> f64 {
        let mut best = f64::INFINITY;
        for j in 0..self.ny {
            for i in 0..self.nx {
                best = best.min(self.char_length(i, j));
            }
        }
        best
    }

    #[inline]
    pub fn char_length(&self, i: usize, j: usize) -> f64 {
        let top = self.y_face(i, (j + 1) % self.ny).length;
        let longest = self
            .x_face(i, j)
            .length
            .max(self.x_face(i + 1, j).length)
            .max(self.y_face(i, j).length)
            .max(top);
        self.volume(i, j) / longest
    }

    /// Node coordinates as CSV: `i,j,x,y`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,j,x,y")?;
        for j in 0..=self.ny {
            for i in 0..=self.nx {
                let p = self.node(i, j);
                writeln!(out, "{i},{j},{:.17e},{:.17e}", p[0], p[1])?;
            }
        }
        Ok(())
    }
}
