//! Interface-fitted triangulations of the square `[-1, 1]^2`.
//!
//! Every column `x_i = -1 + 2i/nx` carries `ny + 1` nodes per strip, graded
//! uniformly between consecutive interface heights, so each interface is a
//! polyline of element edges. Quads are split along their shorter diagonal.

use serde::{Deserialize, Serialize};

use crate::geometry::{AnchorStrips, GeometryError, InterfaceStack};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("meshing needs a two-dimensional stack, got dimension {0}")]
    UnsupportedDimension(usize),
    #[error("invalid mesh parameter: {0}")]
    InvalidParams(String),
    #[error("interfaces {lower} and {upper} are out of order at column x = {x}")]
    Ordering { x: f64, lower: usize, upper: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which sides of the square carry Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirichletSides {
    pub bottom: bool,
    pub top: bool,
    pub left: bool,
    pub right: bool,
}

impl DirichletSides {
    pub const ALL: Self = Self { bottom: true, top: true, left: true, right: true };
    pub const TOP_BOTTOM: Self = Self { bottom: true, top: true, left: false, right: false };
}

impl Default for DirichletSides {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    pub nx: usize,
    /// Rows per strip.
    pub ny: usize,
    /// Minimal cell height; thinner strips are widened and counted.
    pub eta_min: f64,
    #[serde(default)]
    pub dirichlet_sides: DirichletSides,
}

impl Default for MeshParams {
    fn default() -> Self {
        Self { nx: 64, ny: 8, eta_min: 1e-12, dirichlet_sides: DirichletSides::ALL }
    }
}

impl MeshParams {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self { nx, ny, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if self.nx < 2 {
            return Err(MeshError::InvalidParams(format!("nx = {} < 2", self.nx)));
        }
        if self.ny < 1 {
            return Err(MeshError::InvalidParams("ny = 0".into()));
        }
        if !(self.eta_min > 0.0) {
            return Err(MeshError::InvalidParams(format!("eta_min = {} is not positive", self.eta_min)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceEdge {
    pub nodes: [usize; 2],
    pub interface: usize,
    /// Element below the edge (region `interface`).
    pub lower: usize,
    /// Element above the edge (region `interface + 1`).
    pub upper: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Region tag `1..=m+1` per triangle.
    pub regions: Vec<usize>,
    pub interface_edges: Vec<InterfaceEdge>,
    /// Sorted Dirichlet vertex indices.
    pub dirichlet: Vec<usize>,
    pub params: MeshParams,
    /// Number of strip cells widened to `eta_min`.
    pub clamped: usize,
    m: usize,
    rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshQuality {
    pub min_area: f64,
    pub max_area: f64,
    /// Degrees.
    pub min_angle: f64,
    /// Longest over shortest edge, maximized over elements.
    pub max_aspect: f64,
    pub clamped: usize,
}

/// Triangle containing a point with its barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub element: usize,
    pub bary: [f64; 3],
}

/// Serialized mesh layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshJson {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 4]>,
    pub interface_edges: Vec<[usize; 5]>,
    pub dirichlet: Vec<usize>,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Column heights `H_0 = -1, H_1, ..., H_m, H_{m+1} = 1` after the `eta_min`
/// clamp, with the number of clamped strips.
fn column_heights(
    stack: &InterfaceStack,
    x: f64,
    ny: usize,
    eta_min: f64,
) -> Result<(Vec<f64>, usize), MeshError> {
    let m = stack.m();
    let mut h: Vec<f64> = (0..=m + 1).map(|j| stack.height(j, &[x])).collect();
    let mut clamped = 0;
    let min_gap = ny as f64 * eta_min;
    for j in 1..=m {
        if h[j] < h[j - 1] - eta_min && j > 1 {
            return Err(MeshError::Ordering { x, lower: j - 1, upper: j });
        }
        if h[j] - h[j - 1] < min_gap {
            h[j] = h[j - 1] + min_gap;
            clamped += 1;
        }
    }
    if h[m + 1] - h[m] < min_gap {
        return Err(MeshError::Ordering { x, lower: m, upper: m + 1 });
    }
    Ok((h, clamped))
}

/// Builds the structured interface-fitted mesh.
pub fn build_strip_mesh(stack: &InterfaceStack, params: &MeshParams) -> Result<StripMesh, MeshError> {
    if stack.dim() != 2 {
        return Err(MeshError::UnsupportedDimension(stack.dim()));
    }
    params.validate()?;
    let (nx, ny) = (params.nx, params.ny);
    let m = stack.m();
    let rows = (m + 1) * ny + 1;
    let mut vertices = Vec::with_capacity((nx + 1) * rows);
    let mut clamped = 0;
    for i in 0..=nx {
        let x = -1.0 + 2.0 * i as f64 / nx as f64;
        let (h, c) = column_heights(stack, x, ny, params.eta_min)?;
        clamped += c;
        for r in 0..rows {
            let y = if r == rows - 1 {
                1.0
            } else {
                let j = r / ny;
                let k = r % ny;
                if k == 0 {
                    h[j]
                } else {
                    h[j] + (h[j + 1] - h[j]) * k as f64 / ny as f64
                }
            };
            vertices.push([x, y]);
        }
    }
    let node = |i: usize, r: usize| i * rows + r;
    let mut triangles = Vec::with_capacity(2 * nx * (rows - 1));
    let mut regions = Vec::with_capacity(2 * nx * (rows - 1));
    for i in 0..nx {
        for r in 0..rows - 1 {
            let (bl, br, tr, tl) = (node(i, r), node(i + 1, r), node(i + 1, r + 1), node(i, r + 1));
            let d_main = dist(vertices[bl], vertices[tr]);
            let d_anti = dist(vertices[br], vertices[tl]);
            if d_main <= d_anti {
                triangles.push([bl, br, tr]);
                triangles.push([bl, tr, tl]);
            } else {
                triangles.push([bl, br, tl]);
                triangles.push([br, tr, tl]);
            }
            let region = r / ny + 1;
            regions.push(region);
            regions.push(region);
        }
    }
    let elem = |i: usize, r: usize, upper_half: bool| 2 * (i * (rows - 1) + r) + upper_half as usize;
    let mut interface_edges = Vec::with_capacity(m * nx);
    for j in 1..=m {
        let r = j * ny;
        for i in 0..nx {
            interface_edges.push(InterfaceEdge {
                nodes: [node(i, r), node(i + 1, r)],
                interface: j,
                lower: elem(i, r - 1, true),
                upper: elem(i, r, false),
            });
        }
    }
    let sides = params.dirichlet_sides;
    let mut dirichlet = Vec::new();
    for i in 0..=nx {
        for r in 0..rows {
            let on = (sides.bottom && r == 0)
                || (sides.top && r == rows - 1)
                || (sides.left && i == 0)
                || (sides.right && i == nx);
            if on {
                dirichlet.push(node(i, r));
            }
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} strip cells widened to the minimal height {}", params.eta_min);
    }
    Ok(StripMesh {
        vertices,
        triangles,
        regions,
        interface_edges,
        dirichlet,
        params: *params,
        clamped,
        m,
        rows,
    })
}

impl StripMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn regions_count(&self) -> usize {
        self.m + 1
    }

    /// Node rows per column.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn node(&self, column: usize, row: usize) -> usize {
        column * self.rows + row
    }

    /// `(column, row)` of a vertex.
    pub fn node_position(&self, v: usize) -> (usize, usize) {
        (v / self.rows, v % self.rows)
    }

    /// Regions whose closure contains the vertex (two for interface nodes).
    pub fn vertex_regions(&self, v: usize) -> Vec<usize> {
        let r = v % self.rows;
        let ny = self.params.ny;
        if r == self.rows - 1 {
            return vec![self.m + 1];
        }
        let j = r / ny + 1;
        if r.is_multiple_of(ny) && r > 0 {
            vec![j - 1, j]
        } else {
            vec![j]
        }
    }

    pub fn corners(&self, e: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[e];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn area(&self, e: usize) -> f64 {
        let [a, b, c] = self.corners(e);
        signed_area(a, b, c)
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let [a, b, c] = self.corners(e);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Constant gradients of the three barycentric functions on element `e`.
    pub fn shape_gradients(&self, e: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.corners(e);
        let two_area = 2.0 * signed_area(a, b, c);
        [
            [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area],
            [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area],
            [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
        ]
    }

    pub fn barycentric(&self, e: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.corners(e);
        let total = signed_area(a, b, c);
        [
            signed_area(p, b, c) / total,
            signed_area(a, p, c) / total,
            signed_area(a, b, p) / total,
        ]
    }

    /// Finds the element containing `p`. Points on shared edges go to either
    /// neighbour. Returns `None` outside the square.
    pub fn locate(&self, p: [f64; 2]) -> Option<Location> {
        if !(p[0] >= -1.0 && p[0] <= 1.0 && p[1] >= -1.0 && p[1] <= 1.0) {
            return None;
        }
        Some(self.locate_rows(p, 0, self.rows - 2))
    }

    /// Like [`locate`](Self::locate) but restricted to elements of region `j`;
    /// points outside that region land in the closest row of the strip and get
    /// extrapolated barycentric coordinates. Used for one-sided traces.
    pub fn locate_in_region(&self, p: [f64; 2], j: usize) -> Option<Location> {
        if j == 0 || j > self.m + 1 || !(p[0] >= -1.0 && p[0] <= 1.0) {
            return None;
        }
        let ny = self.params.ny;
        Some(self.locate_rows(p, (j - 1) * ny, j * ny - 1))
    }

    fn locate_rows(&self, p: [f64; 2], row_lo: usize, row_hi: usize) -> Location {
        let nx = self.params.nx;
        let dx = 2.0 / nx as f64;
        let i = (((p[0] + 1.0) / dx).floor() as isize).clamp(0, nx as isize - 1) as usize;
        let x0 = self.vertices[self.node(i, 0)][0];
        let s = ((p[0] - x0) / dx).clamp(0.0, 1.0);
        let height = |r: usize| {
            (1.0 - s) * self.vertices[self.node(i, r)][1] + s * self.vertices[self.node(i + 1, r)][1]
        };
        // largest row in [row_lo, row_hi] whose lower boundary is <= p.y
        let (mut lo, mut hi) = (row_lo, row_hi);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if height(mid) <= p[1] {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let r = lo;
        let q = 2 * (i * (self.rows - 1) + r);
        let (b0, b1) = (self.barycentric(q, p), self.barycentric(q + 1, p));
        let min0 = b0.iter().cloned().fold(f64::INFINITY, f64::min);
        let min1 = b1.iter().cloned().fold(f64::INFINITY, f64::min);
        if min0 >= min1 {
            Location { element: q, bary: b0 }
        } else {
            Location { element: q + 1, bary: b1 }
        }
    }

    pub fn quality(&self) -> MeshQuality {
        mesh_quality(self)
    }

    /// Smallest resolved strip height per region over all columns.
    pub fn min_strip_gap(&self) -> Vec<f64> {
        let ny = self.params.ny;
        (1..=self.m + 1)
            .map(|j| {
                (0..=self.params.nx)
                    .map(|i| {
                        self.vertices[self.node(i, j * ny)][1] - self.vertices[self.node(i, (j - 1) * ny)][1]
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// Max `|y_mid - h_j(x_mid)|` over the edges of each interface.
    pub fn interface_fit_error(&self, stack: &InterfaceStack) -> Vec<f64> {
        let mut out = vec![0.0f64; self.m];
        for e in &self.interface_edges {
            let (a, b) = (self.vertices[e.nodes[0]], self.vertices[e.nodes[1]]);
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let err = (mid[1] - stack.height(e.interface, &[mid[0]])).abs();
            out[e.interface - 1] = out[e.interface - 1].max(err);
        }
        out
    }

    pub fn to_json(&self) -> MeshJson {
        MeshJson {
            vertices: self.vertices.clone(),
            triangles: self
                .triangles
                .iter()
                .zip(&self.regions)
                .map(|(t, &r)| [t[0], t[1], t[2], r])
                .collect(),
            interface_edges: self
                .interface_edges
                .iter()
                .map(|e| [e.nodes[0], e.nodes[1], e.interface, e.lower, e.upper])
                .collect(),
            dirichlet: self.dirichlet.clone(),
        }
    }
}

/// Deterministic scan of element shapes.
pub fn mesh_quality(mesh: &StripMesh) -> MeshQuality {
    let mut q = MeshQuality {
        min_area: f64::INFINITY,
        max_area: f64::NEG_INFINITY,
        min_angle: 180.0,
        max_aspect: 0.0,
        clamped: mesh.clamped,
    };
    for e in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(e);
        let area = signed_area(a, b, c);
        q.min_area = q.min_area.min(area);
        q.max_area = q.max_area.max(area);
        let lens = [dist(b, c), dist(c, a), dist(a, b)];
        let longest = lens.iter().cloned().fold(0.0, f64::max);
        let shortest = lens.iter().cloned().fold(f64::INFINITY, f64::min);
        q.max_aspect = q.max_aspect.max(longest / shortest);
        for k in 0..3 {
            let (opp, s1, s2) = (lens[k], lens[(k + 1) % 3], lens[(k + 2) % 3]);
            let cos = ((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)).clamp(-1.0, 1.0);
            q.min_angle = q.min_angle.min(cos.acos().to_degrees());
        }
    }
    q
}

/// Area of the symmetric difference, inside the disk `B_r(x0)`, between region
/// `j` and the flat strip `j` of the anchor coordinate system at `x0`.
pub fn strip_volume_mismatch(
    stack: &InterfaceStack,
    x0: &[f64],
    j: usize,
    r: f64,
    lines: usize,
) -> Result<f64, MeshError> {
    if stack.dim() != 2 {
        return Err(MeshError::UnsupportedDimension(stack.dim()));
    }
    let strips = AnchorStrips::new(stack, x0)?;
    let y0 = &strips.anchor.foot;
    let tau = &strips.anchor.frame.tangents[0];
    let nu = &strips.anchor.frame.normal;
    let lo_off = if j >= 2 { strips.offsets[j - 2] } else { f64::NEG_INFINITY };
    let hi_off = if j <= stack.m() { strips.offsets[j - 1] } else { f64::INFINITY };
    let center = [x0[0], x0[1]];
    // integrate along lines parallel to the anchor normal through the disk around x0
    let c_s = (center[0] - y0[0]) * tau[0] + (center[1] - y0[1]) * tau[1];
    let c_n = (center[0] - y0[0]) * nu[0] + (center[1] - y0[1]) * nu[1];
    let ds = 2.0 * r / lines as f64;
    let mut total = 0.0;
    for k in 0..lines {
        let s = c_s - r + (k as f64 + 0.5) * ds;
        let half = (r * r - (s - c_s).powi(2)).max(0.0).sqrt();
        let (n_a, n_b) = (c_n - half, c_n + half);
        let at = |n: f64| [y0[0] + s * tau[0] + n * nu[0], y0[1] + s * tau[1] + n * nu[1]];
        let phi = |i: usize, n: f64| {
            let p = at(n);
            p[1] - stack.height(i, &[p[0]])
        };
        let mut breaks = vec![n_a, n_b];
        for off in [lo_off, hi_off] {
            if off > n_a && off < n_b {
                breaks.push(off);
            }
        }
        for i in [j - 1, j] {
            if i == 0 || i > stack.m() {
                continue;
            }
            const SCAN: usize = 64;
            let step = (n_b - n_a) / SCAN as f64;
            for q in 0..SCAN {
                let (mut a, mut b) = (n_a + q as f64 * step, n_a + (q + 1) as f64 * step);
                let fa = phi(i, a);
                if fa.signum() == phi(i, b).signum() {
                    continue;
                }
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if phi(i, mid).signum() == fa.signum() {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                breaks.push(0.5 * (a + b));
            }
        }
        breaks.sort_by(|a, b| a.total_cmp(b));
        for w in breaks.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let p = at(mid);
            let in_region = p[0].abs() < 1.0 && p[1].abs() < 1.0 && stack.region_of(&p) == j;
            let in_strip = mid >= lo_off && mid < hi_off;
            if in_region != in_strip {
                total += (w[1] - w[0]) * ds;
            }
        }
    }
    Ok(total)
}
