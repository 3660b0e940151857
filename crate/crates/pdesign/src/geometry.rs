//! 2D triangular meshes for rectangles, disks and simple polygons.
//!
//! First-order (piecewise-linear) elements only: every element carries a
//! constant-gradient map, so pointwise optimality conditions evaluated per
//! element are exact. Rectangles are meshed as a structured grid with a
//! diagonal split, disks as concentric rings of near-equilateral triangles
//! (6k nodes on ring k), polygons by ear clipping followed by uniform
//! refinement. The `target_h` parameter is the requested grid pitch; diagonal
//! edges of split cells may exceed it by a factor sqrt(2). `Mesh::h_max`
//! reports the true longest edge.

use crate::{Error, Result};
use std::collections::BTreeMap;
use std::io::Write;

/// Domain shape. Polygons must be simple and counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainShape {
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

/// A meshing request: shape plus requested mesh pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub shape: DomainShape,
    pub target_h: f64,
}

impl DomainSpec {
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, target_h: f64) -> Result<Self> {
        let spec = DomainSpec { shape: DomainShape::Rectangle { x0, x1, y0, y1 }, target_h };
        spec.validate()?;
        Ok(spec)
    }

    pub fn disk(cx: f64, cy: f64, r: f64, target_h: f64) -> Result<Self> {
        let spec = DomainSpec { shape: DomainShape::Disk { cx, cy, r }, target_h };
        spec.validate()?;
        Ok(spec)
    }

    pub fn polygon(vertices: Vec<[f64; 2]>, target_h: f64) -> Result<Self> {
        let spec = DomainSpec { shape: DomainShape::Polygon { vertices }, target_h };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_h > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "target_h must be > 0, got {}",
                self.target_h
            )));
        }
        match &self.shape {
            DomainShape::Rectangle { x0, x1, y0, y1 } => {
                if !(x0 < x1 && y0 < y1) {
                    return Err(Error::InvalidDomain(format!(
                        "rectangle needs x0<x1 and y0<y1, got [{x0},{x1}]x[{y0},{y1}]"
                    )));
                }
            }
            DomainShape::Disk { r, .. } => {
                if !(*r > 0.0) {
                    return Err(Error::InvalidDomain(format!("disk radius must be > 0, got {r}")));
                }
            }
            DomainShape::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::InvalidDomain("polygon needs >= 3 vertices".into()));
                }
                let area2 = polygon_signed_area2(vertices);
                if area2 <= 0.0 {
                    return Err(Error::InvalidDomain(
                        "polygon must be counterclockwise with positive area".into(),
                    ));
                }
                if !polygon_is_simple(vertices) {
                    return Err(Error::InvalidDomain("polygon must be simple".into()));
                }
            }
        }
        Ok(())
    }

    /// Exact area of the continuous domain (pi r^2 for disks).
    pub fn area(&self) -> f64 {
        match &self.shape {
            DomainShape::Rectangle { x0, x1, y0, y1 } => (x1 - x0) * (y1 - y0),
            DomainShape::Disk { r, .. } => std::f64::consts::PI * r * r,
            DomainShape::Polygon { vertices } => 0.5 * polygon_signed_area2(vertices),
        }
    }
}

/// Circle metadata kept so refinement can re-project boundary nodes.
#[derive(Debug, Clone, Copy)]
struct DiskMeta {
    cx: f64,
    cy: f64,
    r: f64,
}

/// Conforming triangulation with per-element constant-gradient maps.
///
/// Immutable after construction; refinement produces a new mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    areas: Vec<f64>,
    /// 2x3 map per element: gradient = G * (u0, u1, u2).
    grad_maps: Vec<[[f64; 3]; 2]>,
    h_max: f64,
    total_area: f64,
    disk: Option<DiskMeta>,
}

impl Mesh {
    /// Assembles a mesh from raw nodes and connectivity, enforcing CCW
    /// element orientation and validating the edge structure.
    fn from_raw(
        nodes: Vec<[f64; 2]>,
        mut elements: Vec<[usize; 3]>,
        disk: Option<DiskMeta>,
    ) -> Result<Mesh> {
        for tri in elements.iter_mut() {
            let a2 = signed_area2(&nodes[tri[0]], &nodes[tri[1]], &nodes[tri[2]]);
            if a2 < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut areas = Vec::with_capacity(elements.len());
        let mut grad_maps = Vec::with_capacity(elements.len());
        let mut h_max: f64 = 0.0;
        let mut total_area = 0.0;
        for tri in &elements {
            let p0 = nodes[tri[0]];
            let p1 = nodes[tri[1]];
            let p2 = nodes[tri[2]];
            let a2 = signed_area2(&p0, &p1, &p2);
            if a2 <= 0.0 {
                return Err(Error::InvalidDomain(format!(
                    "degenerate element {:?} with area {}",
                    tri,
                    0.5 * a2
                )));
            }
            areas.push(0.5 * a2);
            total_area += 0.5 * a2;
            // grad of barycentric basis i is perp(opposite edge)/(2A).
            let g = [
                [
                    (p1[1] - p2[1]) / a2,
                    (p2[1] - p0[1]) / a2,
                    (p0[1] - p1[1]) / a2,
                ],
                [
                    (p2[0] - p1[0]) / a2,
                    (p0[0] - p2[0]) / a2,
                    (p1[0] - p0[0]) / a2,
                ],
            ];
            grad_maps.push(g);
            for (a, b) in [(p0, p1), (p1, p2), (p2, p0)] {
                h_max = h_max.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }

        // Edge incidence: every edge belongs to one (boundary) or two elements.
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for tri in &elements {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                let key = (a.min(b), a.max(b));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        let mut boundary = vec![false; nodes.len()];
        for (&(a, b), &count) in &edge_count {
            match count {
                1 => {
                    boundary[a] = true;
                    boundary[b] = true;
                }
                2 => {}
                n => {
                    return Err(Error::InvalidDomain(format!(
                        "edge ({a},{b}) shared by {n} elements; mesh is non-manifold"
                    )))
                }
            }
        }

        Ok(Mesh { nodes, elements, boundary, areas, grad_maps, h_max, total_area, disk })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn element(&self, t: usize) -> [usize; 3] {
        self.elements[t]
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    /// Longest element edge in the mesh.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [i, j, k] = self.elements[t];
        [
            (self.nodes[i][0] + self.nodes[j][0] + self.nodes[k][0]) / 3.0,
            (self.nodes[i][1] + self.nodes[j][1] + self.nodes[k][1]) / 3.0,
        ]
    }

    /// Constant gradient of a nodal function on element `t`.
    pub fn element_gradient(&self, t: usize, nodal: &[f64]) -> [f64; 2] {
        let [i, j, k] = self.elements[t];
        let g = &self.grad_maps[t];
        let (u0, u1, u2) = (nodal[i], nodal[j], nodal[k]);
        [
            g[0][0] * u0 + g[0][1] * u1 + g[0][2] * u2,
            g[1][0] * u0 + g[1][1] * u1 + g[1][2] * u2,
        ]
    }

    /// The 2x3 gradient map of element `t`.
    pub fn grad_map(&self, t: usize) -> &[[f64; 3]; 2] {
        &self.grad_maps[t]
    }

    /// Lumped nodal areas: each element donates a third of its area to each
    /// of its vertices. Used for the nodal integration rule.
    pub fn lumped_node_areas(&self) -> Vec<f64> {
        let mut share = vec![0.0; self.nodes.len()];
        for (t, tri) in self.elements.iter().enumerate() {
            let third = self.areas[t] / 3.0;
            for &n in tri {
                share[n] += third;
            }
        }
        share
    }

    /// Splits every triangle into 4 similar ones. Boundary midpoints of disk
    /// meshes are re-projected onto the circle, so disk areas grow toward
    /// pi r^2; polygonal areas are preserved.
    pub fn refine(&self) -> Result<Mesh> {
        Ok(self.refine_mapped()?.mesh)
    }

    /// [`Mesh::refine`] plus the parent maps needed to transfer fields:
    /// node `n_old + k` is the midpoint of `edge_midpoints[k]`, and element
    /// `t` splits into children `4t .. 4t+3`.
    pub fn refine_mapped(&self) -> Result<Refinement> {
        let mut nodes = self.nodes.clone();
        let mut edge_midpoints: Vec<(usize, usize)> = Vec::new();
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut get_mid = |a: usize, b: usize, nodes: &mut Vec<[f64; 2]>| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&m) = midpoint.get(&key) {
                return m;
            }
            edge_midpoints.push(key);
            let pa = nodes[a];
            let pb = nodes[b];
            let mut pm = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            if let Some(disk) = &self.disk {
                // Boundary edge midpoints go back on the circle.
                if self.boundary[a] && self.boundary[b] && self.is_boundary_edge(a, b) {
                    let dx = pm[0] - disk.cx;
                    let dy = pm[1] - disk.cy;
                    let len = (dx * dx + dy * dy).sqrt();
                    pm = [disk.cx + disk.r * dx / len, disk.cy + disk.r * dy / len];
                }
            }
            let idx = nodes.len();
            nodes.push(pm);
            midpoint.insert(key, idx);
            idx
        };

        let mut elements = Vec::with_capacity(4 * self.elements.len());
        for tri in &self.elements {
            let [a, b, c] = *tri;
            let ab = get_mid(a, b, &mut nodes);
            let bc = get_mid(b, c, &mut nodes);
            let ca = get_mid(c, a, &mut nodes);
            elements.push([a, ab, ca]);
            elements.push([ab, b, bc]);
            elements.push([ca, bc, c]);
            elements.push([ab, bc, ca]);
        }
        Ok(Refinement { mesh: Mesh::from_raw(nodes, elements, self.disk)?, edge_midpoints })
    }

    fn is_boundary_edge(&self, a: usize, b: usize) -> bool {
        // An edge is on the boundary iff it belongs to exactly one element.
        let mut count = 0;
        for tri in &self.elements {
            let mut has_a = false;
            let mut has_b = false;
            for &n in tri {
                has_a |= n == a;
                has_b |= n == b;
            }
            if has_a && has_b {
                count += 1;
            }
        }
        count == 1
    }

    /// CSV export: `id,x,y,boundary_flag` per node.
    pub fn write_nodes_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "id,x,y,boundary_flag")?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(w, "{},{:?},{:?},{}", i, p[0], p[1], u8::from(self.boundary[i]))?;
        }
        Ok(())
    }

    /// CSV export: `id,n0,n1,n2,area` per element.
    pub fn write_elements_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "id,n0,n1,n2,area")?;
        for (t, tri) in self.elements.iter().enumerate() {
            writeln!(w, "{},{},{},{},{:?}", t, tri[0], tri[1], tri[2], self.areas[t])?;
        }
        Ok(())
    }
}

/// A refined mesh together with its parent maps.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub mesh: Mesh,
    /// Parents of the new nodes, in index order after the original nodes.
    pub edge_midpoints: Vec<(usize, usize)>,
}

/// Builds a mesh for the requested domain.
pub fn build_mesh(domain: &DomainSpec) -> Result<Mesh> {
    domain.validate()?;
    let h = domain.target_h;
    match &domain.shape {
        DomainShape::Rectangle { x0, x1, y0, y1 } => rectangle_mesh(*x0, *x1, *y0, *y1, h),
        DomainShape::Disk { cx, cy, r } => disk_mesh(*cx, *cy, *r, h),
        DomainShape::Polygon { vertices } => polygon_mesh(vertices, h),
    }
}

fn rectangle_mesh(x0: f64, x1: f64, y0: f64, y1: f64, h: f64) -> Result<Mesh> {
    let nx = ((x1 - x0) / h).ceil().max(1.0) as usize;
    let ny = ((y1 - y0) / h).ceil().max(1.0) as usize;
    let dx = (x1 - x0) / nx as f64;
    let dy = (y1 - y0) / ny as f64;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([x0 + i as f64 * dx, y0 + j as f64 * dy]);
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    Mesh::from_raw(nodes, elements, None)
}

fn disk_mesh(cx: f64, cy: f64, r: f64, h: f64) -> Result<Mesh> {
    // Ring k carries 6k nodes: radial pitch r/K, tangential pitch
    // pi r/(3K) ~ 1.047 r/K. K = ceil(r/h) pins the radial pitch to the
    // requested h (grid-pitch convention, same as rectangles).
    let rings = ((r / h).ceil() as usize).max(1);
    let mut nodes = vec![[cx, cy]];
    let mut ring_start = vec![0usize; rings + 1]; // ring 0 is the center node
    for k in 1..=rings {
        ring_start[k] = nodes.len();
        let n = 6 * k;
        let rk = r * k as f64 / rings as f64;
        for j in 0..n {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            nodes.push([cx + rk * phi.cos(), cy + rk * phi.sin()]);
        }
    }

    let mut elements = Vec::with_capacity(6 * rings * rings);
    // Innermost fan around the center.
    for j in 0..6 {
        elements.push([0, ring_start[1] + j, ring_start[1] + (j + 1) % 6]);
    }
    // Strip between ring k-1 (6(k-1) nodes) and ring k (6k nodes).
    for k in 2..=rings {
        let n_in = 6 * (k - 1);
        let n_out = 6 * k;
        let inner = |t: usize| ring_start[k - 1] + t % n_in;
        let outer = |t: usize| ring_start[k] + t % n_out;
        for s in 0..6 {
            let i0 = s * (k - 1);
            let o0 = s * k;
            for t in 0..k - 1 {
                elements.push([inner(i0 + t), outer(o0 + t), outer(o0 + t + 1)]);
                elements.push([inner(i0 + t), outer(o0 + t + 1), inner(i0 + t + 1)]);
            }
            // One extra outer node per sector closes the strip.
            elements.push([inner(i0 + k - 1), outer(o0 + k - 1), outer(o0 + k)]);
        }
    }
    Mesh::from_raw(nodes, elements, Some(DiskMeta { cx, cy, r }))
}

fn polygon_mesh(vertices: &[[f64; 2]], h: f64) -> Result<Mesh> {
    let elements = ear_clip(vertices)?;
    let mut mesh = Mesh::from_raw(vertices.to_vec(), elements, None)?;
    while mesh.h_max() > h {
        mesh = mesh.refine()?;
    }
    Ok(mesh)
}

/// Ear-clipping triangulation of a simple CCW polygon.
fn ear_clip(vertices: &[[f64; 2]]) -> Result<Vec<[usize; 3]>> {
    let n = vertices.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut triangles = Vec::with_capacity(n - 2);
    let mut guard = 0usize;
    while remaining.len() > 3 {
        let m = remaining.len();
        let mut clipped = false;
        for i in 0..m {
            let ia = remaining[(i + m - 1) % m];
            let ib = remaining[i];
            let ic = remaining[(i + 1) % m];
            let (a, b, c) = (vertices[ia], vertices[ib], vertices[ic]);
            if signed_area2(&a, &b, &c) <= 0.0 {
                continue; // reflex corner
            }
            let mut is_ear = true;
            for &other in &remaining {
                if other == ia || other == ib || other == ic {
                    continue;
                }
                if point_in_triangle(&vertices[other], &a, &b, &c) {
                    is_ear = false;
                    break;
                }
            }
            if is_ear {
                triangles.push([ia, ib, ic]);
                remaining.remove(i);
                clipped = true;
                break;
            }
        }
        if !clipped {
            guard += 1;
            if guard > n {
                return Err(Error::InvalidDomain(
                    "ear clipping failed; polygon may be degenerate".into(),
                ));
            }
        }
    }
    triangles.push([remaining[0], remaining[1], remaining[2]]);
    Ok(triangles)
}

fn signed_area2(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn point_in_triangle(p: &[f64; 2], a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> bool {
    let d1 = signed_area2(a, b, p);
    let d2 = signed_area2(b, c, p);
    let d3 = signed_area2(c, a, p);
    d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0
}

fn polygon_signed_area2(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc
}

fn polygon_is_simple(vertices: &[[f64; 2]]) -> bool {
    let n = vertices.len();
    let seg = |i: usize| (vertices[i], vertices[(i + 1) % n]);
    for i in 0..n {
        for j in i + 1..n {
            // Adjacent segments share an endpoint by construction.
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (a, b) = seg(i);
            let (c, d) = seg(j);
            if segments_intersect(&a, &b, &c, &d) {
                return false;
            }
        }
    }
    true
}

fn segments_intersect(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2], d: &[f64; 2]) -> bool {
    let d1 = signed_area2(c, d, a);
    let d2 = signed_area2(c, d, b);
    let d3 = signed_area2(a, b, c);
    let d4 = signed_area2(a, b, d);
    (d1 * d2 < 0.0 && d3 * d4 < 0.0)
        || (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn on_segment(a: &[f64; 2], b: &[f64; 2], p: &[f64; 2]) -> bool {
    p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}
