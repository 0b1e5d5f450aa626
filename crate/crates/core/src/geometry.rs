//! Background grids over an implicitly described physical domain.
//!
//! The domain is the intersection of half-plane constraints (the outer
//! rectangle) and an optional circular exclusion. The grid lives in its own
//! "embedding" frame and is mapped to the physical frame by a rotation
//! about the origin, so rotating the grid relative to the domain is a
//! single angle parameter. Elements are classified Inside / Outside /
//! Trimmed with exact interval predicates; trimmed elements are tessellated
//! by recursive bisection, and at the finest level the interface is closed
//! by the straight segment through the two edge intersections found by
//! bisection root-finding on the implicit domain function.

use crate::quadrature::{self, GaussRule};
use rayon::prelude::*;
use std::borrow::Cow;
use std::io::Write;
use thiserror::Error;

/// Volume fractions below this are treated as measure-zero cuts and the
/// element is reclassified Outside.
pub const MIN_VOLUME_FRACTION: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid embedding configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("embedding grid does not cover the physical domain")]
    GridDoesNotCover,
}

/// Named pieces of the domain boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryId {
    Left,
    Right,
    Bottom,
    Top,
    Exclusion,
}

impl BoundaryId {
    pub const ALL: [BoundaryId; 5] = [
        BoundaryId::Left,
        BoundaryId::Right,
        BoundaryId::Bottom,
        BoundaryId::Top,
        BoundaryId::Exclusion,
    ];

    fn index(self) -> usize {
        match self {
            BoundaryId::Left => 0,
            BoundaryId::Right => 1,
            BoundaryId::Bottom => 2,
            BoundaryId::Top => 3,
            BoundaryId::Exclusion => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// The physical domain: an axis-aligned rectangle minus an optional
/// circular exclusion, with a boundary-condition tag per boundary piece.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub exclusion: Option<([f64; 2], f64)>,
    tags: [BoundaryKind; 5],
}

impl DomainSpec {
    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Self {
        DomainSpec {
            lo,
            hi,
            exclusion: None,
            tags: [BoundaryKind::Dirichlet; 5],
        }
    }

    /// The origin-centered square of the given half-width.
    pub fn square(half_width: f64) -> Self {
        Self::rectangle([-half_width, -half_width], [half_width, half_width])
    }

    pub fn with_exclusion(mut self, center: [f64; 2], radius: f64) -> Self {
        self.exclusion = Some((center, radius));
        self
    }

    pub fn tagged(mut self, id: BoundaryId, kind: BoundaryKind) -> Self {
        self.tags[id.index()] = kind;
        self
    }

    pub fn tag(&self, id: BoundaryId) -> BoundaryKind {
        self.tags[id.index()]
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.lo[0] < self.hi[0] && self.lo[1] < self.hi[1]) {
            return Err(GeometryError::InvalidDomain("empty rectangle".into()));
        }
        if let Some((c, r)) = self.exclusion {
            if r <= 0.0 {
                return Err(GeometryError::InvalidDomain("exclusion radius must be positive".into()));
            }
            let inside = c[0] - r > self.lo[0]
                && c[0] + r < self.hi[0]
                && c[1] - r > self.lo[1]
                && c[1] + r < self.hi[1];
            if !inside {
                return Err(GeometryError::InvalidDomain(
                    "exclusion must lie strictly inside the outer boundary".into(),
                ));
            }
        }
        Ok(())
    }

    fn constraints(&self) -> Vec<Constraint> {
        let mut cs = vec![
            Constraint::half_plane([-1.0, 0.0], -self.lo[0], BoundaryId::Left),
            Constraint::half_plane([1.0, 0.0], self.hi[0], BoundaryId::Right),
            Constraint::half_plane([0.0, -1.0], -self.lo[1], BoundaryId::Bottom),
            Constraint::half_plane([0.0, 1.0], self.hi[1], BoundaryId::Top),
        ];
        if let Some((c, r)) = self.exclusion {
            cs.push(Constraint::CircleExclusion { center: c, radius: r, id: BoundaryId::Exclusion });
        }
        cs
    }
}

/// Embedding-grid parameters; the grid is rotated by `theta` relative to
/// the physical frame.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingConfig {
    pub theta: f64,
    pub h: f64,
    pub depth: u32,
    pub volume_order: usize,
    pub boundary_order: usize,
}

impl EmbeddingConfig {
    /// Defaults: tessellation depth 3, quadrature exact for the degree-4p
    /// products a degree-p discretization produces.
    pub fn for_degree(theta: f64, h: f64, p: usize) -> Self {
        EmbeddingConfig {
            theta,
            h,
            depth: 3,
            volume_order: 2 * p + 1,
            boundary_order: 2 * p + 1,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(GeometryError::InvalidConfig("mesh size must be positive".into()));
        }
        if !self.theta.is_finite() {
            return Err(GeometryError::InvalidConfig("rotation angle must be finite".into()));
        }
        if self.volume_order == 0 || self.boundary_order == 0 {
            return Err(GeometryError::InvalidConfig("quadrature orders must be at least 1".into()));
        }
        if self.depth > 16 {
            return Err(GeometryError::InvalidConfig("tessellation depth out of range".into()));
        }
        Ok(())
    }
}

/// Uniform tensor-product grid in the embedding frame. Vertices sit at
/// integer multiples of `h`, so the origin is a vertex at every angle.
#[derive(Debug, Clone)]
pub struct Grid {
    pub h: f64,
    pub theta: f64,
    i0: i64,
    i1: i64,
    j0: i64,
    j1: i64,
}

impl Grid {
    pub fn n_x(&self) -> usize {
        (self.i1 - self.i0) as usize
    }

    pub fn n_y(&self) -> usize {
        (self.j1 - self.j0) as usize
    }

    pub fn n_elements(&self) -> usize {
        self.n_x() * self.n_y()
    }

    /// Zero-based (ex, ey) coordinates of a linear element index.
    pub fn element_coords(&self, e: usize) -> (usize, usize) {
        (e % self.n_x(), e / self.n_x())
    }

    pub fn element_index(&self, ex: usize, ey: usize) -> usize {
        ey * self.n_x() + ex
    }

    /// Element box in the embedding frame.
    pub fn element_box(&self, e: usize) -> ([f64; 2], [f64; 2]) {
        let (ex, ey) = self.element_coords(e);
        let x0 = (self.i0 + ex as i64) as f64 * self.h;
        let y0 = (self.j0 + ey as i64) as f64 * self.h;
        ([x0, y0], [x0 + self.h, y0 + self.h])
    }

    /// Breakpoints of the grid lines along one direction, in embedding
    /// coordinates.
    pub fn breakpoints(&self, dir: usize) -> Vec<f64> {
        let (a, b) = if dir == 0 { (self.i0, self.i1) } else { (self.j0, self.j1) };
        (a..=b).map(|k| k as f64 * self.h).collect()
    }

    pub fn to_physical(&self, xe: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * xe[0] - s * xe[1], s * xe[0] + c * xe[1]]
    }

    pub fn to_embedding(&self, xp: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * xp[0] + s * xp[1], -s * xp[0] + c * xp[1]]
    }

    /// Columns of the rotation matrix: the physical directions of the two
    /// grid axes.
    pub fn axis_directions(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.theta.sin_cos();
        [[c, s], [-s, c]]
    }
}

/// Builds the smallest grid of h-cells (with a vertex at the origin) whose
/// embedding-frame footprint covers the rotated physical domain.
pub fn build_grid(domain: &DomainSpec, cfg: &EmbeddingConfig) -> Result<Grid, GeometryError> {
    domain.validate()?;
    cfg.validate()?;
    let corners = [
        [domain.lo[0], domain.lo[1]],
        [domain.hi[0], domain.lo[1]],
        [domain.hi[0], domain.hi[1]],
        [domain.lo[0], domain.hi[1]],
    ];
    let (s, c) = cfg.theta.sin_cos();
    let to_embedding = |x: [f64; 2]| [c * x[0] + s * x[1], -s * x[0] + c * x[1]];
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for corner in corners {
        let e = to_embedding(corner);
        for d in 0..2 {
            lo[d] = lo[d].min(e[d]);
            hi[d] = hi[d].max(e[d]);
        }
    }
    let grid = Grid {
        h: cfg.h,
        theta: cfg.theta,
        i0: (lo[0] / cfg.h).floor() as i64,
        i1: (hi[0] / cfg.h).ceil() as i64,
        j0: (lo[1] / cfg.h).floor() as i64,
        j1: (hi[1] / cfg.h).ceil() as i64,
    };
    let covers = grid.i0 as f64 * cfg.h <= lo[0] + 1e-12
        && grid.i1 as f64 * cfg.h >= hi[0] - 1e-12
        && grid.j0 as f64 * cfg.h <= lo[1] + 1e-12
        && grid.j1 as f64 * cfg.h >= hi[1] - 1e-12;
    if !covers || grid.n_elements() == 0 {
        return Err(GeometryError::GridDoesNotCover);
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementClass {
    Inside,
    Outside,
    Trimmed,
}

/// A volumetric quadrature point, stored in both frames.
#[derive(Debug, Clone, Copy)]
pub struct VolumePoint {
    /// Embedding-frame coordinates (for basis evaluation).
    pub xe: [f64; 2],
    /// Physical-frame coordinates (for data evaluation).
    pub xp: [f64; 2],
    pub weight: f64,
}

/// A boundary quadrature point with outward unit normal (physical frame)
/// and the boundary piece it belongs to.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint {
    pub xe: [f64; 2],
    pub xp: [f64; 2],
    pub weight: f64,
    pub normal: [f64; 2],
    pub id: BoundaryId,
}

/// One leaf cell of the bisection tessellation (embedding frame), for
/// debugging output.
#[derive(Debug, Clone)]
pub struct SubCell {
    pub vertices: Vec<[f64; 2]>,
    pub inside: bool,
}

/// Cut geometry of a single trimmed element.
#[derive(Debug, Clone)]
pub struct TrimmedElementData {
    pub element: usize,
    pub sub_cells: Vec<SubCell>,
    pub volume_quad: Vec<VolumePoint>,
    pub boundary_quad: Vec<BoundaryPoint>,
    /// |element ∩ domain| / |element| as measured on the tessellation.
    pub volume_fraction: f64,
}

// ---------------------------------------------------------------------------
// Implicit constraints

#[derive(Debug, Clone)]
enum Constraint {
    /// g(x) = n·x - offset, negative inside the domain; |n| = 1.
    HalfPlane { normal: [f64; 2], offset: f64, id: BoundaryId },
    /// g(x) = radius - |x - center|, negative outside the disk.
    CircleExclusion { center: [f64; 2], radius: f64, id: BoundaryId },
}

impl Constraint {
    fn half_plane(normal: [f64; 2], offset: f64, id: BoundaryId) -> Self {
        let len = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
        Constraint::HalfPlane {
            normal: [normal[0] / len, normal[1] / len],
            offset: offset / len,
            id,
        }
    }

    fn value(&self, x: [f64; 2]) -> f64 {
        match self {
            Constraint::HalfPlane { normal, offset, .. } => normal[0] * x[0] + normal[1] * x[1] - offset,
            Constraint::CircleExclusion { center, radius, .. } => {
                radius - ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt()
            }
        }
    }

    /// Outward (increasing-g) unit gradient.
    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            Constraint::HalfPlane { normal, .. } => *normal,
            Constraint::CircleExclusion { center, .. } => {
                let d = [x[0] - center[0], x[1] - center[1]];
                let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
                [-d[0] / len, -d[1] / len]
            }
        }
    }

    fn id(&self) -> BoundaryId {
        match self {
            Constraint::HalfPlane { id, .. } | Constraint::CircleExclusion { id, .. } => *id,
        }
    }

    /// Exact bounds of g over the rotated image of an embedding-frame box.
    fn range_over_box(&self, frame: &Frame, lo: [f64; 2], hi: [f64; 2]) -> (f64, f64) {
        match self {
            Constraint::HalfPlane { .. } => {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for &xe in &box_corners(lo, hi) {
                    let g = self.value(frame.to_physical(xe));
                    min = min.min(g);
                    max = max.max(g);
                }
                (min, max)
            }
            Constraint::CircleExclusion { center, radius, .. } => {
                // Distance from the center to the box, computed in the
                // embedding frame where the box is axis-aligned.
                let ce = frame.to_embedding(*center);
                let dx = (lo[0] - ce[0]).max(0.0).max(ce[0] - hi[0]);
                let dy = (lo[1] - ce[1]).max(0.0).max(ce[1] - hi[1]);
                let dmin = (dx * dx + dy * dy).sqrt();
                let mut dmax: f64 = 0.0;
                for &corner in &box_corners(lo, hi) {
                    let d = ((corner[0] - ce[0]).powi(2) + (corner[1] - ce[1]).powi(2)).sqrt();
                    dmax = dmax.max(d);
                }
                (radius - dmax, radius - dmin)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    sin: f64,
    cos: f64,
}

impl Frame {
    fn new(theta: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        Frame { sin, cos }
    }

    fn to_physical(&self, xe: [f64; 2]) -> [f64; 2] {
        [self.cos * xe[0] - self.sin * xe[1], self.sin * xe[0] + self.cos * xe[1]]
    }

    fn to_embedding(&self, xp: [f64; 2]) -> [f64; 2] {
        [self.cos * xp[0] + self.sin * xp[1], -self.sin * xp[0] + self.cos * xp[1]]
    }
}

fn box_corners(lo: [f64; 2], hi: [f64; 2]) -> [[f64; 2]; 4] {
    [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
}

fn composite_value(cs: &[Constraint], frame: &Frame, xe: [f64; 2]) -> f64 {
    let xp = frame.to_physical(xe);
    cs.iter().map(|c| c.value(xp)).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CellClass {
    Inside,
    Outside,
    Straddling,
}

fn classify_cell(cs: &[Constraint], frame: &Frame, lo: [f64; 2], hi: [f64; 2]) -> CellClass {
    let mut all_negative = true;
    for c in cs {
        let (gmin, gmax) = c.range_over_box(frame, lo, hi);
        if gmin >= 0.0 {
            return CellClass::Outside;
        }
        if gmax > 0.0 {
            all_negative = false;
        }
    }
    if all_negative {
        CellClass::Inside
    } else {
        CellClass::Straddling
    }
}

/// Classifies every element of the grid against the domain. Elements whose
/// trimming turns out to be measure-zero are further demoted to Outside by
/// the tessellation pass in [`GeometryModel::build`].
pub fn classify_elements(grid: &Grid, domain: &DomainSpec) -> Vec<ElementClass> {
    let cs = domain.constraints();
    let frame = Frame::new(grid.theta);
    (0..grid.n_elements())
        .map(|e| {
            let (lo, hi) = grid.element_box(e);
            match classify_cell(&cs, &frame, lo, hi) {
                CellClass::Inside => ElementClass::Inside,
                CellClass::Outside => ElementClass::Outside,
                CellClass::Straddling => ElementClass::Trimmed,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Tessellation

struct Tessellator<'a> {
    cs: &'a [Constraint],
    frame: Frame,
    depth: u32,
    volume_rule: &'a GaussRule,
    boundary_rule: &'a GaussRule,
}

struct TessOut {
    sub_cells: Vec<SubCell>,
    volume: Vec<VolumePoint>,
    boundary: Vec<BoundaryPoint>,
}

impl<'a> Tessellator<'a> {
    fn run(&self, lo: [f64; 2], hi: [f64; 2]) -> TessOut {
        let mut out = TessOut {
            sub_cells: Vec::new(),
            volume: Vec::new(),
            boundary: Vec::new(),
        };
        self.recurse(lo, hi, self.depth, &mut out);
        out
    }

    fn recurse(&self, lo: [f64; 2], hi: [f64; 2], remaining: u32, out: &mut TessOut) {
        match classify_cell(self.cs, &self.frame, lo, hi) {
            CellClass::Inside => self.emit_full_cell(lo, hi, out),
            CellClass::Outside => {
                out.sub_cells.push(SubCell { vertices: box_corners(lo, hi).to_vec(), inside: false });
            }
            CellClass::Straddling => {
                if remaining > 0 {
                    let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
                    self.recurse(lo, mid, remaining - 1, out);
                    self.recurse([mid[0], lo[1]], [hi[0], mid[1]], remaining - 1, out);
                    self.recurse([lo[0], mid[1]], [mid[0], hi[1]], remaining - 1, out);
                    self.recurse(mid, hi, remaining - 1, out);
                } else {
                    self.close_leaf(lo, hi, out);
                }
            }
        }
    }

    fn emit_full_cell(&self, lo: [f64; 2], hi: [f64; 2], out: &mut TessOut) {
        out.sub_cells.push(SubCell { vertices: box_corners(lo, hi).to_vec(), inside: true });
        for (xe, w) in quadrature::tensor_on_box(self.volume_rule, lo, hi) {
            out.volume.push(VolumePoint { xe, xp: self.frame.to_physical(xe), weight: w });
        }
    }

    /// Straddling cell at maximal depth: approximate the interface by the
    /// segment through the edge intersections of the implicit function.
    fn close_leaf(&self, lo: [f64; 2], hi: [f64; 2], out: &mut TessOut) {
        let crossings = self.edge_crossings(lo, hi);
        if crossings.len() != 2 {
            // No transversal interface resolved in this cell (tangency or
            // several crossings); fall back to the center sign.
            if crossings.len() > 2 {
                log::warn!(
                    "tessellation leaf with {} interface crossings; using center-sign fallback",
                    crossings.len()
                );
            }
            let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
            if composite_value(self.cs, &self.frame, center) < 0.0 {
                self.emit_full_cell(lo, hi, out);
            } else {
                out.sub_cells.push(SubCell { vertices: box_corners(lo, hi).to_vec(), inside: false });
            }
            return;
        }
        let (p1, p2) = (crossings[0], crossings[1]);
        let polygon = self.inside_polygon(lo, hi, p1, p2);
        if polygon.len() >= 3 {
            for (xe, w) in quadrature::on_convex_polygon(self.volume_rule, &polygon) {
                out.volume.push(VolumePoint { xe, xp: self.frame.to_physical(xe), weight: w });
            }
            out.sub_cells.push(SubCell { vertices: polygon, inside: true });
        }
        // Boundary quadrature along the chord.
        let seg_len = ((p2[0] - p1[0]).powi(2) + (p2[1] - p1[1]).powi(2)).sqrt();
        if seg_len > 0.0 {
            for (t, w) in self.boundary_rule.on_interval(0.0, 1.0) {
                let xe = [p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1])];
                let xp = self.frame.to_physical(xe);
                let active = self
                    .cs
                    .iter()
                    .max_by(|a, b| a.value(xp).partial_cmp(&b.value(xp)).unwrap())
                    .unwrap();
                out.boundary.push(BoundaryPoint {
                    xe,
                    xp,
                    weight: w * seg_len,
                    normal: active.gradient(xp),
                    id: active.id(),
                });
            }
        }
    }

    /// Interface crossings on the four cell edges, by bisection on the
    /// composite implicit function.
    fn edge_crossings(&self, lo: [f64; 2], hi: [f64; 2]) -> Vec<[f64; 2]> {
        let corners = box_corners(lo, hi);
        let mut crossings = Vec::new();
        for k in 0..4 {
            let a = corners[k];
            let b = corners[(k + 1) % 4];
            let fa = composite_value(self.cs, &self.frame, a);
            let fb = composite_value(self.cs, &self.frame, b);
            if (fa < 0.0) != (fb < 0.0) {
                crossings.push(bisect_segment(a, b, fa, |x| composite_value(self.cs, &self.frame, x)));
            }
        }
        crossings
    }

    /// The part of the cell on the domain side of the chord p1-p2.
    fn inside_polygon(&self, lo: [f64; 2], hi: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> Vec<[f64; 2]> {
        // Chord normal; orient it toward positive composite value.
        let mut n = [p2[1] - p1[1], p1[0] - p2[0]];
        let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
        if len == 0.0 {
            return Vec::new();
        }
        n = [n[0] / len, n[1] / len];
        let mid = [0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1])];
        let eps = 1e-3 * ((hi[0] - lo[0]) + (hi[1] - lo[1]));
        let probe_plus = composite_value(self.cs, &self.frame, [mid[0] + eps * n[0], mid[1] + eps * n[1]]);
        let probe_minus = composite_value(self.cs, &self.frame, [mid[0] - eps * n[0], mid[1] - eps * n[1]]);
        if probe_plus < probe_minus {
            n = [-n[0], -n[1]];
        }
        // Keep the half-plane n·(x - p1) <= 0 (domain side).
        let mut poly: Vec<[f64; 2]> = box_corners(lo, hi).to_vec();
        let mut clipped = Vec::with_capacity(5);
        let side = |x: [f64; 2]| n[0] * (x[0] - p1[0]) + n[1] * (x[1] - p1[1]);
        for k in 0..poly.len() {
            let a = poly[k];
            let b = poly[(k + 1) % poly.len()];
            let sa = side(a);
            let sb = side(b);
            if sa <= 0.0 {
                clipped.push(a);
            }
            if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
                let t = sa / (sa - sb);
                clipped.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        poly = clipped;
        poly
    }
}

/// Bisection root of f along the segment a-b; fa = f(a).
fn bisect_segment(a: [f64; 2], b: [f64; 2], fa: f64, f: impl Fn([f64; 2]) -> f64) -> [f64; 2] {
    let mut t_lo = 0.0;
    let mut t_hi = 1.0;
    let neg_at_lo = fa < 0.0;
    let point = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..60 {
        let t_mid = 0.5 * (t_lo + t_hi);
        if (f(point(t_mid)) < 0.0) == neg_at_lo {
            t_lo = t_mid;
        } else {
            t_hi = t_mid;
        }
    }
    point(0.5 * (t_lo + t_hi))
}

/// Tessellates one trimmed element. Returns None for measure-zero cuts
/// (the caller reclassifies the element Outside).
pub fn tessellate(
    grid: &Grid,
    element: usize,
    domain: &DomainSpec,
    cfg: &EmbeddingConfig,
) -> Option<TrimmedElementData> {
    let cs = domain.constraints();
    let volume_rule = GaussRule::legendre(cfg.volume_order);
    let boundary_rule = GaussRule::legendre(cfg.boundary_order);
    tessellate_with_rules(grid, element, &cs, cfg.depth, &volume_rule, &boundary_rule)
}

fn tessellate_with_rules(
    grid: &Grid,
    element: usize,
    cs: &[Constraint],
    depth: u32,
    volume_rule: &GaussRule,
    boundary_rule: &GaussRule,
) -> Option<TrimmedElementData> {
    let (lo, hi) = grid.element_box(element);
    let tess = Tessellator {
        cs,
        frame: Frame::new(grid.theta),
        depth,
        volume_rule,
        boundary_rule,
    };
    let out = tess.run(lo, hi);
    let cell_area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let volume: f64 = out.volume.iter().map(|p| p.weight).sum();
    let eta = volume / cell_area;
    if eta < MIN_VOLUME_FRACTION {
        return None;
    }
    Some(TrimmedElementData {
        element,
        sub_cells: out.sub_cells,
        volume_quad: out.volume,
        boundary_quad: out.boundary,
        volume_fraction: eta.min(1.0),
    })
}

// ---------------------------------------------------------------------------
// Face-aligned boundary recovery

/// Boundary lines that coincide with grid lines produce no sign change and
/// are invisible to the bisection; they are recovered here by exact
/// clipping of the aligned line against the grid and the other
/// constraints. Returns (element, boundary points) pairs.
fn recover_aligned_faces(
    grid: &Grid,
    cs: &[Constraint],
    boundary_rule: &GaussRule,
) -> Vec<(usize, Vec<BoundaryPoint>)> {
    let frame = Frame::new(grid.theta);
    let mut out: Vec<(usize, Vec<BoundaryPoint>)> = Vec::new();
    for (ci, c) in cs.iter().enumerate() {
        let Constraint::HalfPlane { normal, offset, id } = c else {
            continue;
        };
        // Embedding-frame normal of the line n·x = offset.
        let ne = frame.to_embedding(*normal);
        let (axis, sign) = if (ne[0].abs() - 1.0).abs() < 1e-12 && ne[1].abs() < 1e-12 {
            (0usize, ne[0].signum())
        } else if (ne[1].abs() - 1.0).abs() < 1e-12 && ne[0].abs() < 1e-12 {
            (1usize, ne[1].signum())
        } else {
            continue;
        };
        let line_coord = sign * offset;
        let k = (line_coord / grid.h).round();
        if (line_coord - k * grid.h).abs() > 1e-12 * grid.h.max(line_coord.abs()) {
            continue;
        }
        let k = k as i64;
        // The element column on the domain side of the line. For ne = +e_axis
        // the domain is at smaller coordinates, so the owning elements end
        // at the line; for ne = -e_axis they start at it.
        let owner = if sign > 0.0 { k - 1 } else { k };
        let (range_lo, range_hi, cross_lo) = if axis == 0 {
            (grid.i0, grid.i1, grid.j0)
        } else {
            (grid.j0, grid.j1, grid.i0)
        };
        if owner < range_lo || owner >= range_hi {
            continue;
        }
        let n_cross = if axis == 0 { grid.n_y() } else { grid.n_x() };
        for t in 0..n_cross {
            let a = (cross_lo + t as i64) as f64 * grid.h;
            let b = a + grid.h;
            // Segment along the line over [a, b] in the cross direction.
            let point_at = |s: f64| -> [f64; 2] {
                if axis == 0 {
                    [line_coord, a + s * (b - a)]
                } else {
                    [a + s * (b - a), line_coord]
                }
            };
            let intervals = clip_segment(cs, ci, &frame, &point_at);
            if intervals.is_empty() {
                continue;
            }
            let ex = if axis == 0 { owner - grid.i0 } else { (cross_lo + t as i64) - grid.i0 };
            let ey = if axis == 0 { (cross_lo + t as i64) - grid.j0 } else { owner - grid.j0 };
            let e = grid.element_index(ex as usize, ey as usize);
            let mut pts = Vec::new();
            for (s0, s1) in intervals {
                let len = (s1 - s0) * grid.h;
                if len <= 0.0 {
                    continue;
                }
                for (s, w) in boundary_rule.on_interval(s0, s1) {
                    let xe = point_at(s);
                    pts.push(BoundaryPoint {
                        xe,
                        xp: frame.to_physical(xe),
                        weight: w * grid.h,
                        normal: *normal,
                        id: *id,
                    });
                }
            }
            if !pts.is_empty() {
                out.push((e, pts));
            }
        }
    }
    out
}

/// Sub-intervals of the parametrized segment where all constraints other
/// than `skip` are strictly satisfied.
fn clip_segment(
    cs: &[Constraint],
    skip: usize,
    frame: &Frame,
    point_at: &impl Fn(f64) -> [f64; 2],
) -> Vec<(f64, f64)> {
    let mut cuts = vec![0.0, 1.0];
    for (ci, c) in cs.iter().enumerate() {
        if ci == skip {
            continue;
        }
        // Sample-based root bracketing is exact enough here: the segment is
        // one element long and each constraint crosses it at most twice.
        const SAMPLES: usize = 32;
        let mut prev = c.value(frame.to_physical(point_at(0.0)));
        for s in 1..=SAMPLES {
            let t = s as f64 / SAMPLES as f64;
            let cur = c.value(frame.to_physical(point_at(t)));
            if (prev < 0.0) != (cur < 0.0) {
                let t0 = (s - 1) as f64 / SAMPLES as f64;
                let root = bisect_scalar(t0, t, prev, |u| c.value(frame.to_physical(point_at(u))));
                cuts.push(root);
            }
            prev = cur;
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut intervals = Vec::new();
    for w in cuts.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        if s1 - s0 < 1e-14 {
            continue;
        }
        let mid = 0.5 * (s0 + s1);
        let xp = frame.to_physical(point_at(mid));
        let ok = cs
            .iter()
            .enumerate()
            .all(|(ci, c)| ci == skip || c.value(xp) < 0.0);
        if ok {
            intervals.push((s0, s1));
        }
    }
    intervals
}

fn bisect_scalar(mut lo: f64, mut hi: f64, f_lo: f64, f: impl Fn(f64) -> f64) -> f64 {
    let neg_at_lo = f_lo < 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == neg_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// The assembled geometry model

/// Grid, classification and cut geometry for one arrangement.
#[derive(Debug, Clone)]
pub struct GeometryModel {
    pub domain: DomainSpec,
    pub grid: Grid,
    pub classes: Vec<ElementClass>,
    trimmed: Vec<Option<TrimmedElementData>>,
    volume_rule: GaussRule,
}

impl GeometryModel {
    pub fn build(domain: &DomainSpec, cfg: &EmbeddingConfig) -> Result<Self, GeometryError> {
        let grid = build_grid(domain, cfg)?;
        let mut classes = classify_elements(&grid, domain);
        let cs = domain.constraints();
        let volume_rule = GaussRule::legendre(cfg.volume_order);
        let boundary_rule = GaussRule::legendre(cfg.boundary_order);

        let mut trimmed: Vec<Option<TrimmedElementData>> = (0..grid.n_elements())
            .into_par_iter()
            .map(|e| {
                if classes[e] == ElementClass::Trimmed {
                    tessellate_with_rules(&grid, e, &cs, cfg.depth, &volume_rule, &boundary_rule)
                } else {
                    None
                }
            })
            .collect();

        for e in 0..grid.n_elements() {
            if classes[e] == ElementClass::Trimmed && trimmed[e].is_none() {
                log::warn!("element {e} touches the domain in a measure-zero set; reclassified Outside");
                classes[e] = ElementClass::Outside;
            }
        }

        // Grid-aligned boundary lines are invisible to the bisection; add
        // their quadrature to the adjacent interior element.
        for (e, points) in recover_aligned_faces(&grid, &cs, &boundary_rule) {
            match classes[e] {
                ElementClass::Outside => continue,
                ElementClass::Trimmed => {
                    if let Some(data) = trimmed[e].as_mut() {
                        data.boundary_quad.extend(points);
                    }
                }
                ElementClass::Inside => {
                    let (lo, hi) = grid.element_box(e);
                    let frame = Frame::new(grid.theta);
                    let volume_quad: Vec<VolumePoint> = quadrature::tensor_on_box(&volume_rule, lo, hi)
                        .into_iter()
                        .map(|(xe, w)| VolumePoint { xe, xp: frame.to_physical(xe), weight: w })
                        .collect();
                    classes[e] = ElementClass::Trimmed;
                    trimmed[e] = Some(TrimmedElementData {
                        element: e,
                        sub_cells: vec![SubCell { vertices: box_corners(lo, hi).to_vec(), inside: true }],
                        volume_quad,
                        boundary_quad: points,
                        volume_fraction: 1.0,
                    });
                }
            }
        }

        Ok(GeometryModel {
            domain: domain.clone(),
            grid,
            classes,
            trimmed,
            volume_rule,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.grid.n_elements()
    }

    pub fn class(&self, e: usize) -> ElementClass {
        self.classes[e]
    }

    /// Elements that enter assembly.
    pub fn active_elements(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_elements()).filter(|&e| self.classes[e] != ElementClass::Outside)
    }

    pub fn trimmed_data(&self, e: usize) -> Option<&TrimmedElementData> {
        self.trimmed[e].as_ref()
    }

    pub fn trimmed_elements(&self) -> impl Iterator<Item = &TrimmedElementData> + '_ {
        self.trimmed.iter().filter_map(|t| t.as_ref())
    }

    /// Volumetric quadrature of any active element (full tensor rule for
    /// Inside elements, stored tessellation rule for Trimmed ones).
    pub fn volume_quadrature(&self, e: usize) -> Cow<'_, [VolumePoint]> {
        match self.classes[e] {
            ElementClass::Trimmed => Cow::Borrowed(&self.trimmed[e].as_ref().unwrap().volume_quad),
            ElementClass::Inside => {
                let (lo, hi) = self.grid.element_box(e);
                let frame = Frame::new(self.grid.theta);
                Cow::Owned(
                    quadrature::tensor_on_box(&self.volume_rule, lo, hi)
                        .into_iter()
                        .map(|(xe, w)| VolumePoint { xe, xp: frame.to_physical(xe), weight: w })
                        .collect(),
                )
            }
            ElementClass::Outside => Cow::Owned(Vec::new()),
        }
    }

    pub fn boundary_quadrature(&self, e: usize) -> &[BoundaryPoint] {
        self.trimmed[e]
            .as_ref()
            .map(|t| t.boundary_quad.as_slice())
            .unwrap_or(&[])
    }

    /// min over trimmed elements of the volume fraction; 1 when nothing is
    /// trimmed (boundary-fitted case).
    pub fn smallest_volume_fraction(&self) -> f64 {
        self.trimmed_elements()
            .map(|t| t.volume_fraction)
            .fold(1.0f64, f64::min)
    }

    /// Plain-text tessellation dump: one sub-cell per line.
    pub fn dump_tessellation(&self, w: &mut impl Write) -> std::io::Result<()> {
        for data in self.trimmed_elements() {
            for cell in &data.sub_cells {
                write!(w, "{} ", data.element)?;
                for v in &cell.vertices {
                    write!(w, "{} {} ", v[0], v[1])?;
                }
                writeln!(w, "{}", if cell.inside { 1 } else { 0 })?;
            }
        }
        Ok(())
    }
}

/// min_i eta_i over a set of trimmed elements; 1 for the boundary-fitted
/// case with no trimmed elements.
pub fn smallest_volume_fraction<'a>(trimmed: impl IntoIterator<Item = &'a TrimmedElementData>) -> f64 {
    trimmed
        .into_iter()
        .map(|t| t.volume_fraction)
        .fold(1.0f64, f64::min)
}
