//! Channel-with-narrowing geometry and curved quadrilateral meshes.
//!
//! The fluid domain is the rectangle `[0, length] x [0, height]` minus two
//! constriction blocks at `x in [block_x_left, block_x_right]`. The leading
//! (upstream) face of each block is a quadratic curve whose middle control
//! point is pushed towards the inlet by the curvature parameter.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sem::quadrature::gll_rule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Fixed dimensions of the channel and its constriction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelSpec {
    pub length: f64,
    pub height: f64,
    pub block_x_left: f64,
    pub block_x_right: f64,
    pub gap_lo: f64,
    pub gap_hi: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            length: 18.0,
            height: 3.0,
            block_x_left: 0.5,
            block_x_right: 1.0,
            gap_lo: 1.0,
            gap_hi: 2.0,
        }
    }
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        let ok_x = 0.0 < self.block_x_left
            && self.block_x_left < self.block_x_right
            && self.block_x_right < self.length;
        let ok_y = 0.0 < self.gap_lo && self.gap_lo < self.gap_hi && self.gap_hi < self.height;
        if !ok_x || !ok_y {
            return Err(Error::Config(format!("inconsistent channel dimensions {self:?}")));
        }
        if (self.gap_lo - (self.height - self.gap_hi)).abs() > 1e-12 {
            return Err(Error::Config("channel must be mirror-symmetric about its centerline".into()));
        }
        Ok(())
    }

    /// Largest admissible curvature: the inner control point must stay at
    /// least 0.1 away from the inlet.
    pub fn max_curvature(&self) -> f64 {
        self.block_x_left - 0.1
    }

    pub fn centerline(&self) -> f64 {
        0.5 * self.height
    }

    fn check_curvature(&self, c: f64) -> Result<()> {
        if !(0.0..=self.max_curvature() + 1e-14).contains(&c) || !c.is_finite() {
            return Err(Error::ParameterDomain(format!(
                "curvature {c} outside [0, {}]",
                self.max_curvature()
            )));
        }
        Ok(())
    }

    /// Control points `(A, M, T)` of the curved leading face of one block:
    /// `A` on the channel wall, `M` the movable inner point, `T` the block tip.
    pub fn wall_edge_points(&self, c: f64, side: WallSide) -> Result<[Point; 3]> {
        self.check_curvature(c)?;
        let xl = self.block_x_left;
        let ym = 0.5 * self.gap_lo;
        Ok(match side {
            WallSide::Bottom => [
                Point::new(xl, 0.0),
                Point::new(xl - c, ym),
                Point::new(xl, self.gap_lo),
            ],
            WallSide::Top => [
                Point::new(xl, self.height),
                Point::new(xl - c, self.height - ym),
                Point::new(xl, self.gap_hi),
            ],
        })
    }

    /// x-position of a leading face at height `y` (inside a block band).
    fn face_x(&self, c: f64, y: f64) -> f64 {
        let half = 0.5 * self.gap_lo;
        // mirror the top band onto the bottom one so both faces agree bitwise
        let yb = if y > self.centerline() { self.height - y } else { y };
        let s = (yb - half) / half;
        self.block_x_left - c * (1.0 - s * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WallSide {
    Bottom,
    Top,
}

/// Control points of the curved leading face for the default channel.
pub fn wall_edge_points(c: f64, side: WallSide) -> Result<[Point; 3]> {
    ChannelSpec::default().wall_edge_points(c, side)
}

/// One point `mu = (nu, c)` of the viscosity x wall-curvature plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub nu: f64,
    pub curvature: f64,
}

impl ParameterPoint {
    pub fn new(nu: f64, curvature: f64) -> Result<Self> {
        let p = Self { nu, curvature };
        p.validate(&ChannelSpec::default())?;
        Ok(p)
    }

    pub fn validate(&self, spec: &ChannelSpec) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::ParameterDomain(format!("viscosity {} must be positive", self.nu)));
        }
        spec.check_curvature(self.curvature)
    }
}

/// Quadratic Lagrange curve through `a`, `m`, `t` at `s = -1, 0, 1`.
pub fn quadratic_edge(a: Point, m: Point, t: Point, s: f64) -> Point {
    let (la, lm, lt) = (0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0));
    Point::new(
        la * a.x + lm * m.x + lt * t.x,
        la * a.y + lm * m.y + lt * t.y,
    )
}

fn quadratic_edge_derivative(a: Point, m: Point, t: Point, s: f64) -> Point {
    let (da, dm, dt) = (s - 0.5, -2.0 * s, s + 0.5);
    Point::new(
        da * a.x + dm * m.x + dt * t.x,
        da * a.y + dm * m.y + dt * t.y,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeShape {
    Straight,
    /// Quadratic through the edge endpoints and `mid` (the image of `s = 0`).
    Quadratic { mid: Point },
}

/// A parametrized edge `s in [-1, 1] -> point`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCurve {
    pub start: Point,
    pub end: Point,
    pub shape: EdgeShape,
}

impl EdgeCurve {
    pub fn eval(&self, s: f64) -> Point {
        match self.shape {
            EdgeShape::Straight => {
                let (l0, l1) = (0.5 * (1.0 - s), 0.5 * (1.0 + s));
                Point::new(
                    l0 * self.start.x + l1 * self.end.x,
                    l0 * self.start.y + l1 * self.end.y,
                )
            }
            EdgeShape::Quadratic { mid } => quadratic_edge(self.start, mid, self.end, s),
        }
    }

    pub fn derivative(&self, s: f64) -> Point {
        match self.shape {
            EdgeShape::Straight => Point::new(
                0.5 * (self.end.x - self.start.x),
                0.5 * (self.end.y - self.start.y),
            ),
            EdgeShape::Quadratic { mid } => quadratic_edge_derivative(self.start, mid, self.end, s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Inlet,
    Outlet,
    Wall,
}

/// Local vertex order: SW, SE, NW, NE.
pub const SW: usize = 0;
pub const SE: usize = 1;
pub const NW: usize = 2;
pub const NE: usize = 3;
/// Local edge order: bottom (eta = -1), top (eta = 1), left (xi = -1), right (xi = 1).
/// Bottom and top run along xi, left and right along eta.
pub const BOTTOM: usize = 0;
pub const TOP: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshEdge {
    /// Endpoints, oriented along +x (horizontal) or +y (vertical) grid lines.
    pub vertices: [usize; 2],
    pub shape: EdgeShape,
    pub tag: Option<BoundaryTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub corners: [Point; 4],
    pub edges: [EdgeShape; 4],
    pub vertex_ids: [usize; 4],
    pub edge_ids: [usize; 4],
    /// Logical (column, row) of the element in the block-structured grid.
    pub cell: (usize, usize),
}

/// Reference-to-physical map evaluated at one point.
#[derive(Debug, Clone, Copy)]
pub struct Mapping {
    pub x: Point,
    /// `jac[r][c] = d x_r / d xi_c`.
    pub jac: [[f64; 2]; 2],
    pub det_j: f64,
}

impl Element {
    pub fn edge(&self, k: usize) -> EdgeCurve {
        let c = &self.corners;
        let (start, end) = match k {
            BOTTOM => (c[SW], c[SE]),
            TOP => (c[NW], c[NE]),
            LEFT => (c[SW], c[NW]),
            RIGHT => (c[SE], c[NE]),
            _ => unreachable!("quadrilaterals have four edges"),
        };
        EdgeCurve { start, end, shape: self.edges[k] }
    }

    pub fn is_curved(&self) -> bool {
        self.edges.iter().any(|e| matches!(e, EdgeShape::Quadratic { .. }))
    }

    /// Gordon-Hall transfinite map (bilinear when all edges are straight).
    pub fn map(&self, xi: f64, eta: f64) -> Mapping {
        let c = &self.corners;
        let (b, t, l, r) = (self.edge(BOTTOM), self.edge(TOP), self.edge(LEFT), self.edge(RIGHT));
        let (eb, et, el, er) = (b.eval(xi), t.eval(xi), l.eval(eta), r.eval(eta));
        let (db, dt, dl, dr) = (b.derivative(xi), t.derivative(xi), l.derivative(eta), r.derivative(eta));
        let (xm, xp, ym, yp) = (0.5 * (1.0 - xi), 0.5 * (1.0 + xi), 0.5 * (1.0 - eta), 0.5 * (1.0 + eta));

        let comp = |f: fn(Point) -> f64| -> (f64, f64, f64) {
            let bil = xm * ym * f(c[SW]) + xp * ym * f(c[SE]) + xm * yp * f(c[NW]) + xp * yp * f(c[NE]);
            let val = ym * f(eb) + yp * f(et) + xm * f(el) + xp * f(er) - bil;
            let dxi = ym * f(db) + yp * f(dt) - 0.5 * f(el) + 0.5 * f(er)
                - (-0.5 * ym * f(c[SW]) + 0.5 * ym * f(c[SE]) - 0.5 * yp * f(c[NW]) + 0.5 * yp * f(c[NE]));
            let deta = -0.5 * f(eb) + 0.5 * f(et) + xm * f(dl) + xp * f(dr)
                - (-0.5 * xm * f(c[SW]) - 0.5 * xp * f(c[SE]) + 0.5 * xm * f(c[NW]) + 0.5 * xp * f(c[NE]));
            (val, dxi, deta)
        };
        let (x, x_xi, x_eta) = comp(|p| p.x);
        let (y, y_xi, y_eta) = comp(|p| p.y);
        let jac = [[x_xi, x_eta], [y_xi, y_eta]];
        Mapping {
            x: Point::new(x, y),
            jac,
            det_j: x_xi * y_eta - x_eta * y_xi,
        }
    }

    /// Axis-aligned bounding box `(min, max)`, padded to contain curved edges.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for k in 0..4 {
            let e = self.edge(k);
            for i in 0..=8 {
                let p = e.eval(-1.0 + 0.25 * i as f64);
                lo.x = lo.x.min(p.x);
                lo.y = lo.y.min(p.y);
                hi.x = hi.x.max(p.x);
                hi.y = hi.y.max(p.y);
            }
        }
        let pad = 1e-9 * (1.0 + (hi.x - lo.x).max(hi.y - lo.y));
        (Point::new(lo.x - pad, lo.y - pad), Point::new(hi.x + pad, hi.y + pad))
    }
}

/// Element counts per region of the block-structured channel mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Refinement {
    /// Columns between the inlet and the leading faces.
    pub upstream: usize,
    /// Columns inside the orifice (between the blocks).
    pub through: usize,
    /// Columns between the blocks' back faces and the outlet.
    pub downstream: usize,
    /// Rows across each block height.
    pub block_rows: usize,
    /// Rows across the orifice gap.
    pub gap_rows: usize,
    /// Width ratio of consecutive downstream columns (> 1 grades towards the orifice).
    pub downstream_growth: f64,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            upstream: 4,
            through: 1,
            downstream: 10,
            block_rows: 3,
            gap_rows: 2,
            downstream_growth: 1.2,
        }
    }
}

impl Refinement {
    pub fn element_count(&self) -> usize {
        (self.upstream + self.downstream) * (2 * self.block_rows + self.gap_rows)
            + self.through * self.gap_rows
    }

    fn validate(&self) -> Result<()> {
        let counts = [self.upstream, self.through, self.downstream, self.block_rows, self.gap_rows];
        if counts.contains(&0) {
            return Err(Error::Config(format!("refinement counts must be >= 1: {self:?}")));
        }
        if !(self.downstream_growth > 0.0) {
            return Err(Error::Config("downstream growth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub spec: ChannelSpec,
    pub curvature: f64,
    /// Velocity polynomial order.
    pub order: usize,
    pub vertices: Vec<Point>,
    pub edges: Vec<MeshEdge>,
    pub elements: Vec<Element>,
}

impl Mesh {
    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Boundary tag per edge id (`None` for interior edges).
    pub fn boundary_tags(&self) -> impl Iterator<Item = (usize, BoundaryTag)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.tag.map(|t| (i, t)))
    }

    /// Minimum Jacobian determinant over the quadrature points of every element.
    pub fn min_det_j(&self, q: usize) -> (usize, f64) {
        let rule = gll_rule(q);
        let mut worst = (0, f64::INFINITY);
        for (e, el) in self.elements.iter().enumerate() {
            for &eta in &rule.nodes {
                for &xi in &rule.nodes {
                    let d = el.map(xi, eta).det_j;
                    if d < worst.1 {
                        worst = (e, d);
                    }
                }
            }
        }
        worst
    }

    fn check_quality(&self) -> Result<()> {
        let q = self.order + 2;
        let rule = gll_rule(q);
        for (e, el) in self.elements.iter().enumerate() {
            for &eta in &rule.nodes {
                for &xi in &rule.nodes {
                    let d = el.map(xi, eta).det_j;
                    if !(d > 0.0) {
                        return Err(Error::MeshQuality { element: e, det_j: d });
                    }
                }
            }
        }
        Ok(())
    }

    /// Plain-text element list: one element per line with corners, edge
    /// descriptors and the boundary tags of its edges.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# curvature {} order {} elements {}",
            self.curvature,
            self.order,
            self.elements.len()
        );
        let _ = writeln!(out, "# id corners(SW SE NW NE) edges(bottom top left right) tags(bottom top left right)");
        for (i, el) in self.elements.iter().enumerate() {
            let _ = write!(out, "{i}");
            for c in &el.corners {
                let _ = write!(out, " {:.12} {:.12}", c.x, c.y);
            }
            for e in &el.edges {
                match e {
                    EdgeShape::Straight => out.push_str(" S"),
                    EdgeShape::Quadratic { mid } => {
                        let _ = write!(out, " Q({:.12},{:.12})", mid.x, mid.y);
                    }
                }
            }
            for &id in &el.edge_ids {
                let t = match self.edges[id].tag {
                    None => "-",
                    Some(BoundaryTag::Inlet) => "inlet",
                    Some(BoundaryTag::Outlet) => "outlet",
                    Some(BoundaryTag::Wall) => "wall",
                };
                let _ = write!(out, " {t}");
            }
            out.push('\n');
        }
        out
    }

    /// SVG wireframe with curved edges sampled as polylines.
    pub fn to_svg(&self) -> String {
        let scale = 60.0;
        let margin = 10.0;
        let (w, h) = (self.spec.length * scale + 2.0 * margin, self.spec.height * scale + 2.0 * margin);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for edge in &self.edges {
            let curve = EdgeCurve {
                start: self.vertices[edge.vertices[0]],
                end: self.vertices[edge.vertices[1]],
                shape: edge.shape,
            };
            let color = match edge.tag {
                None => "#888888",
                Some(BoundaryTag::Inlet) => "#1f77b4",
                Some(BoundaryTag::Outlet) => "#2ca02c",
                Some(BoundaryTag::Wall) => "#000000",
            };
            let n = if matches!(edge.shape, EdgeShape::Straight) { 1 } else { 16 };
            let pts: Vec<String> = (0..=n)
                .map(|i| {
                    let p = curve.eval(-1.0 + 2.0 * i as f64 / n as f64);
                    format!("{:.2},{:.2}", margin + p.x * scale, h - margin - p.y * scale)
                })
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1"/>"#,
                pts.join(" ")
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Block-structured logical grid with holes; all meshes here are built on it.
struct GridBuilder<'a> {
    nx: usize,
    ny: usize,
    node: &'a dyn Fn(usize, usize) -> Point,
    hole: &'a dyn Fn(usize, usize) -> bool,
    /// Mid point of the vertical edge `(i, j)-(i, j + 1)` when it is curved.
    curved_vertical: &'a dyn Fn(usize, usize) -> Option<Point>,
}

impl GridBuilder<'_> {
    fn cell_exists(&self, i: isize, j: isize) -> bool {
        i >= 0
            && j >= 0
            && (i as usize) < self.nx
            && (j as usize) < self.ny
            && !(self.hole)(i as usize, j as usize)
    }

    fn build(&self, spec: ChannelSpec, curvature: f64, order: usize) -> Mesh {
        let (nx, ny) = (self.nx, self.ny);
        let mut vid = vec![usize::MAX; (nx + 1) * (ny + 1)];
        let mut vertices = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                let (ii, jj) = (i as isize, j as isize);
                let used = self.cell_exists(ii - 1, jj - 1)
                    || self.cell_exists(ii, jj - 1)
                    || self.cell_exists(ii - 1, jj)
                    || self.cell_exists(ii, jj);
                if used {
                    vid[j * (nx + 1) + i] = vertices.len();
                    vertices.push((self.node)(i, j));
                }
            }
        }
        let v = |i: usize, j: usize| vid[j * (nx + 1) + i];

        let mut edges = Vec::new();
        let mut hid = vec![usize::MAX; nx * (ny + 1)];
        let mut vert_id = vec![usize::MAX; (nx + 1) * ny];
        for j in 0..=ny {
            for i in 0..nx {
                let (below, above) = (
                    self.cell_exists(i as isize, j as isize - 1),
                    self.cell_exists(i as isize, j as isize),
                );
                if below || above {
                    hid[j * nx + i] = edges.len();
                    edges.push(MeshEdge {
                        vertices: [v(i, j), v(i + 1, j)],
                        shape: EdgeShape::Straight,
                        tag: (below != above).then_some(BoundaryTag::Wall),
                    });
                }
            }
        }
        for j in 0..ny {
            for i in 0..=nx {
                let (left, right) = (
                    self.cell_exists(i as isize - 1, j as isize),
                    self.cell_exists(i as isize, j as isize),
                );
                if left || right {
                    let tag = if left == right {
                        None
                    } else if i == 0 {
                        Some(BoundaryTag::Inlet)
                    } else if i == nx {
                        Some(BoundaryTag::Outlet)
                    } else {
                        Some(BoundaryTag::Wall)
                    };
                    let (a, b) = ((self.node)(i, j), (self.node)(i, j + 1));
                    let shape = match (self.curved_vertical)(i, j) {
                        Some(mid) if !is_chord_midpoint(a, mid, b) => EdgeShape::Quadratic { mid },
                        _ => EdgeShape::Straight,
                    };
                    vert_id[j * (nx + 1) + i] = edges.len();
                    edges.push(MeshEdge { vertices: [v(i, j), v(i, j + 1)], shape, tag });
                }
            }
        }

        let mut elements = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if (self.hole)(i, j) {
                    continue;
                }
                let vertex_ids = [v(i, j), v(i + 1, j), v(i, j + 1), v(i + 1, j + 1)];
                let edge_ids = [
                    hid[j * nx + i],
                    hid[(j + 1) * nx + i],
                    vert_id[j * (nx + 1) + i],
                    vert_id[j * (nx + 1) + i + 1],
                ];
                elements.push(Element {
                    corners: vertex_ids.map(|k| vertices[k]),
                    edges: edge_ids.map(|k| edges[k].shape),
                    vertex_ids,
                    edge_ids,
                    cell: (i, j),
                });
            }
        }
        Mesh { spec, curvature, order, vertices, edges, elements }
    }
}

fn is_chord_midpoint(a: Point, m: Point, b: Point) -> bool {
    let scale = 1.0 + a.dist(b);
    (m.x - 0.5 * (a.x + b.x)).abs() <= 1e-14 * scale && (m.y - 0.5 * (a.y + b.y)).abs() <= 1e-14 * scale
}

/// Node heights: uniform within each band, exactly mirrored about the centerline.
fn row_heights(spec: &ChannelSpec, block_rows: usize, gap_rows: usize) -> Vec<f64> {
    let ny = 2 * block_rows + gap_rows;
    let lower = |j: usize| -> f64 {
        if j <= block_rows {
            spec.gap_lo * j as f64 / block_rows as f64
        } else {
            spec.gap_lo + (spec.gap_hi - spec.gap_lo) * (j - block_rows) as f64 / gap_rows as f64
        }
    };
    (0..=ny)
        .map(|j| if 2 * j <= ny { lower(j) } else { spec.height - lower(ny - j) })
        .collect()
}

/// Structured mesh of the channel minus the two constriction blocks.
///
/// Only the vertical edges on the blocks' leading faces are curved. Upstream
/// columns are placed at uniform fractions of the leftmost face position in
/// the adjacent rows, so that no straight grid line can cross the curved face.
pub fn generate_mesh(spec: &ChannelSpec, curvature: f64, refinement: &Refinement, order: usize) -> Result<Mesh> {
    spec.validate()?;
    spec.check_curvature(curvature)?;
    refinement.validate()?;
    if order < 3 {
        return Err(Error::Config(format!("polynomial order {order} < 3 leaves no pressure space")));
    }
    let r = *refinement;
    let nx = r.upstream + r.through + r.downstream;
    let ny = 2 * r.block_rows + r.gap_rows;
    let ys = row_heights(spec, r.block_rows, r.gap_rows);
    let in_block_band = |j: usize| j < r.block_rows || j >= r.block_rows + r.gap_rows;

    // downstream column edges, geometric growth away from the orifice
    let span = spec.length - spec.block_x_right;
    let g = r.downstream_growth;
    let h0 = if (g - 1.0).abs() < 1e-12 {
        span / r.downstream as f64
    } else {
        span * (g - 1.0) / (g.powi(r.downstream as i32) - 1.0)
    };
    let mut xs_down = vec![spec.block_x_right];
    let mut w = h0;
    for k in 1..=r.downstream {
        let next = if k == r.downstream { spec.length } else { xs_down[k - 1] + w };
        xs_down.push(next);
        w *= g;
    }

    let face_at = |j: usize| -> f64 {
        let y = ys[j];
        if y <= spec.gap_lo || y >= spec.gap_hi {
            spec.face_x(curvature, y)
        } else {
            spec.block_x_left
        }
    };
    // leftmost x reached by the face within row `j` (face or straight orifice edge)
    let row_min = |j: usize| -> f64 {
        if in_block_band(j) {
            let (a, b) = (ys[j], ys[j + 1]);
            let mid = if b <= spec.gap_lo { 0.5 * spec.gap_lo } else { spec.height - 0.5 * spec.gap_lo };
            spec.face_x(curvature, mid.clamp(a, b)).min(face_at(j)).min(face_at(j + 1))
        } else {
            spec.block_x_left
        }
    };
    let reach = |j: usize| -> f64 {
        let mut m = face_at(j);
        if j > 0 {
            m = m.min(row_min(j - 1));
        }
        if j < ny {
            m = m.min(row_min(j));
        }
        m
    };

    let node = |i: usize, j: usize| -> Point {
        let y = ys[j];
        let x = if i < r.upstream {
            reach(j) * i as f64 / r.upstream as f64
        } else if i == r.upstream {
            face_at(j)
        } else if i <= r.upstream + r.through {
            spec.block_x_left
                + (spec.block_x_right - spec.block_x_left) * (i - r.upstream) as f64 / r.through as f64
        } else {
            xs_down[i - r.upstream - r.through]
        };
        Point::new(x, y)
    };
    let hole = |i: usize, j: usize| -> bool {
        i >= r.upstream && i < r.upstream + r.through && in_block_band(j)
    };
    let curved_vertical = |i: usize, j: usize| -> Option<Point> {
        if i != r.upstream || !in_block_band(j) {
            return None;
        }
        let ym = 0.5 * (ys[j] + ys[j + 1]);
        Some(Point::new(spec.face_x(curvature, ym), ym))
    };

    let mesh = GridBuilder {
        nx,
        ny,
        node: &node,
        hole: &hole,
        curved_vertical: &curved_vertical,
    }
    .build(*spec, curvature, order);
    mesh.check_quality()?;
    Ok(mesh)
}

/// Straight channel without constriction blocks (uniform `nx x ny` grid).
pub fn straight_channel_mesh(length: f64, height: f64, nx: usize, ny: usize, order: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 || order < 3 {
        return Err(Error::Config("straight channel needs nx, ny >= 1 and order >= 3".into()));
    }
    let spec = ChannelSpec { length, height, ..ChannelSpec::default() };
    let node = |i: usize, j: usize| {
        let y = if 2 * j <= ny {
            height * j as f64 / ny as f64
        } else {
            height - height * (ny - j) as f64 / ny as f64
        };
        Point::new(length * i as f64 / nx as f64, y)
    };
    let mesh = GridBuilder {
        nx,
        ny,
        node: &node,
        hole: &|_, _| false,
        curved_vertical: &|_, _| None,
    }
    .build(spec, 0.0, order);
    mesh.check_quality()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Point, b: Point, tol: f64) -> bool {
        (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol
    }

    #[test]
    fn wall_points_examples() {
        let [a, m, t] = wall_edge_points(0.0, WallSide::Bottom).unwrap();
        assert_eq!((a, m, t), (Point::new(0.5, 0.0), Point::new(0.5, 0.5), Point::new(0.5, 1.0)));
        let [_, m, _] = wall_edge_points(0.4, WallSide::Bottom).unwrap();
        assert!(close(m, Point::new(0.1, 0.5), 1e-15));
        let [a, m, t] = wall_edge_points(0.2, WallSide::Top).unwrap();
        assert!(close(a, Point::new(0.5, 3.0), 1e-15));
        assert!(close(m, Point::new(0.3, 2.5), 1e-15));
        assert!(close(t, Point::new(0.5, 2.0), 1e-15));
        assert!(matches!(wall_edge_points(0.41, WallSide::Bottom), Err(Error::ParameterDomain(_))));
        assert!(wall_edge_points(-0.01, WallSide::Top).is_err());
    }

    #[test]
    fn quadratic_edge_examples() {
        let (a, m, t) = (Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0));
        assert_eq!(quadratic_edge(a, m, t, -1.0), a);
        assert_eq!(quadratic_edge(a, m, t, 0.0), m);
        assert_eq!(quadratic_edge(a, m, t, 1.0), t);
        assert!(close(quadratic_edge(a, m, t, 0.5), Point::new(1.5, 0.0), 1e-15));
        // midpoint control point reproduces the straight segment
        let (a, t) = (Point::new(0.3, -1.0), Point::new(2.0, 4.0));
        let m = Point::new(1.15, 1.5);
        for k in 0..=10 {
            let s = -1.0 + 0.2 * k as f64;
            let lin = Point::new(a.x + (t.x - a.x) * (s + 1.0) / 2.0, a.y + (t.y - a.y) * (s + 1.0) / 2.0);
            assert!(close(quadratic_edge(a, m, t, s), lin, 1e-14));
        }
    }

    #[test]
    fn unit_square_mapping() {
        let el = Element {
            corners: [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 1.0)],
            edges: [EdgeShape::Straight; 4],
            vertex_ids: [0, 1, 2, 3],
            edge_ids: [0, 1, 2, 3],
            cell: (0, 0),
        };
        let m = el.map(0.0, 0.0);
        assert!(close(m.x, Point::new(0.5, 0.5), 1e-15));
        assert!((m.det_j - 0.25).abs() < 1e-15);
    }

    #[test]
    fn corners_and_fd_jacobian() {
        let mesh = generate_mesh(&ChannelSpec::default(), 0.3, &Refinement::default(), 6).unwrap();
        let h = 1e-6;
        let mut max_err: f64 = 0.0;
        for el in &mesh.elements {
            for (k, (xi, eta)) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)].into_iter().enumerate() {
                assert!(close(el.map(xi, eta).x, el.corners[k], 1e-14));
            }
            for &(xi, eta) in &[(0.1, -0.3), (-0.7, 0.8), (0.5, 0.5)] {
                let m = el.map(xi, eta);
                let (px, mx) = (el.map(xi + h, eta).x, el.map(xi - h, eta).x);
                let (pe, me) = (el.map(xi, eta + h).x, el.map(xi, eta - h).x);
                let fd = [[(px.x - mx.x) / (2.0 * h), (pe.x - me.x) / (2.0 * h)], [(px.y - mx.y) / (2.0 * h), (pe.y - me.y) / (2.0 * h)]];
                for r in 0..2 {
                    for c in 0..2 {
                        max_err = max_err.max((fd[r][c] - m.jac[r][c]).abs());
                    }
                }
            }
        }
        assert!(max_err <= 1e-6, "fd error {max_err}");
    }

    #[test]
    fn zero_curvature_is_straight_and_count_matches() {
        let r = Refinement::default();
        let mesh = generate_mesh(&ChannelSpec::default(), 0.0, &r, 8).unwrap();
        assert!(mesh.elements.iter().all(|e| !e.is_curved()));
        assert_eq!(mesh.element_count(), r.element_count());
        assert_eq!(r.element_count(), 114);
        let curved = generate_mesh(&ChannelSpec::default(), 0.2, &r, 8).unwrap();
        assert_eq!(curved.elements.iter().filter(|e| e.is_curved()).count(), 2 * r.block_rows);
    }

    #[test]
    fn element_count_by_enumeration() {
        for (up, th, dn, br, gr) in [(1, 1, 1, 1, 1), (2, 3, 4, 2, 3), (4, 1, 10, 3, 2)] {
            let r = Refinement { upstream: up, through: th, downstream: dn, block_rows: br, gap_rows: gr, downstream_growth: 1.1 };
            let mesh = generate_mesh(&ChannelSpec::default(), 0.1, &r, 4).unwrap();
            let mut count = 0;
            for j in 0..(2 * br + gr) {
                for i in 0..(up + th + dn) {
                    let hole = i >= up && i < up + th && (j < br || j >= br + gr);
                    count += usize::from(!hole);
                }
            }
            assert_eq!(mesh.element_count(), count);
            assert_eq!(r.element_count(), count);
        }
    }

    #[test]
    fn positive_jacobian_over_curvature_range() {
        for k in 0..=8 {
            let c = 0.05 * k as f64;
            let mesh = generate_mesh(&ChannelSpec::default(), c, &Refinement::default(), 8).unwrap();
            let (_, d) = mesh.min_det_j(10);
            assert!(d > 0.0, "c = {c}: min detJ {d}");
        }
    }

    #[test]
    fn bottom_face_reaches_inner_point() {
        for c in [0.0, 0.13, 0.4] {
            let [a, m, t] = wall_edge_points(c, WallSide::Bottom).unwrap();
            let min_x = (0..=2000)
                .map(|i| quadratic_edge(a, m, t, -1.0 + i as f64 / 1000.0).x)
                .fold(f64::INFINITY, f64::min);
            assert!((min_x - (0.5 - c)).abs() < 1e-15);
        }
    }

    #[test]
    fn every_boundary_edge_has_one_tag() {
        let mesh = generate_mesh(&ChannelSpec::default(), 0.2, &Refinement::default(), 4).unwrap();
        let mut uses = vec![0; mesh.edges.len()];
        for el in &mesh.elements {
            for &e in &el.edge_ids {
                uses[e] += 1;
            }
        }
        for (e, edge) in mesh.edges.iter().enumerate() {
            assert_eq!(edge.tag.is_some(), uses[e] == 1, "edge {e}");
        }
        let inlet = mesh.boundary_tags().filter(|(_, t)| *t == BoundaryTag::Inlet).count();
        assert_eq!(inlet, 8);
    }

    #[test]
    fn text_and_svg_exports() {
        let mesh = generate_mesh(&ChannelSpec::default(), 0.2, &Refinement::default(), 4).unwrap();
        let txt = mesh.to_text();
        assert_eq!(txt.lines().filter(|l| !l.starts_with('#')).count(), mesh.element_count());
        assert!(txt.contains("Q("));
        let svg = mesh.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
