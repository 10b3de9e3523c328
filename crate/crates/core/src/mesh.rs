//! Conforming triangle meshes with labelled boundary components.
//!
//! Meshes come from two places: the structured rectangle generator used by the
//! manufactured-solution tests, and the plain-text `.msh2d` format used for the
//! bundled offset-circles geometry.
//!
//! ```text
//! msh2d 1
//! vertices N
//! x y            (N lines)
//! triangles M
//! i j k          (M lines, 0-based, counterclockwise)
//! boundary K     (optional)
//! i j marker     (K lines)
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Marker assigned by [`Mesh::structured_rectangle`] to all outer edges.
pub const OUTER_MARKER: u32 = 1;

const BUNDLED_OFFSET_CIRCLES: &str = include_str!("../data/offset_circles_coarse.msh2d");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    h: f64,
}

impl Mesh {
    /// Validates connectivity and builds a mesh.
    ///
    /// When `boundary` is `None` every edge owned by a single triangle becomes a
    /// boundary edge and connected boundary components receive markers
    /// `1, 2, ...` ordered by their smallest vertex index.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Option<Vec<BoundaryEdge>>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if triangles.is_empty() {
            return Err(Error::MeshValidation("mesh has no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= nv) {
                return Err(Error::MeshValidation(format!(
                    "triangle {t} references vertex {v} but there are {nv} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::MeshValidation(format!("triangle {t} is degenerate")));
            }
            let area = signed_area(&vertices, tri);
            if !(area > 0.0) {
                return Err(Error::MeshValidation(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
        }
        if let Some(v) = vertices.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::MeshValidation(format!("vertex {v} is not finite")));
        }

        // Edge ownership: boundary iff owned by exactly one triangle.
        let mut owners: HashMap<[usize; 2], u8> = HashMap::with_capacity(3 * triangles.len());
        for tri in &triangles {
            for k in 0..3 {
                let e = sorted_edge(tri[k], tri[(k + 1) % 3]);
                let count = owners.entry(e).or_insert(0);
                *count += 1;
                if *count > 2 {
                    return Err(Error::MeshValidation(format!(
                        "edge ({}, {}) is shared by more than two triangles",
                        e[0], e[1]
                    )));
                }
            }
        }
        let mut detected = Vec::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if owners[&sorted_edge(a, b)] == 1 {
                    detected.push([a, b]);
                }
            }
        }
        let mut degree = vec![0u32; nv];
        for e in &detected {
            degree[e[0]] += 1;
            degree[e[1]] += 1;
        }
        if let Some(v) = degree.iter().position(|&d| d != 0 && d != 2) {
            return Err(Error::MeshValidation(format!(
                "boundary is not a union of closed curves at vertex {v} (non-conforming mesh?)"
            )));
        }
        let mut used = vec![false; nv];
        triangles.iter().flatten().for_each(|&v| used[v] = true);
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::MeshValidation(format!("vertex {v} is not used by any triangle")));
        }

        let boundary_edges = match boundary {
            Some(given) => {
                check_given_boundary(&given, &detected, nv)?;
                given
            }
            None => label_components(&detected, nv),
        };

        let h = triangles
            .iter()
            .map(|tri| longest_edge(&vertices, tri))
            .fold(0.0_f64, f64::max);

        Ok(Self { vertices, triangles, boundary_edges, h })
    }

    /// Rectangle `[x0, x1] x [y0, y1]` split into `n x n` cells, each cut along
    /// its lower-left to upper-right diagonal.
    pub fn structured_rectangle(n: usize, x: [f64; 2], y: [f64; 2]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("structured mesh needs n >= 1".into()));
        }
        if !(x[1] > x[0] && y[1] > y[0]) {
            return Err(Error::InvalidArgument(format!("empty rectangle {x:?} x {y:?}")));
        }
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let s = i as f64 / n as f64;
                let t = j as f64 / n as f64;
                vertices.push([x[0] + s * (x[1] - x[0]), y[0] + t * (y[1] - y[0])]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        let mut boundary = Vec::with_capacity(4 * n);
        for i in 0..n {
            boundary.push(BoundaryEdge { vertices: [idx(i, 0), idx(i + 1, 0)], marker: OUTER_MARKER });
        }
        for j in 0..n {
            boundary.push(BoundaryEdge { vertices: [idx(n, j), idx(n, j + 1)], marker: OUTER_MARKER });
        }
        for i in (0..n).rev() {
            boundary.push(BoundaryEdge { vertices: [idx(i + 1, n), idx(i, n)], marker: OUTER_MARKER });
        }
        for j in (0..n).rev() {
            boundary.push(BoundaryEdge { vertices: [idx(0, j + 1), idx(0, j)], marker: OUTER_MARKER });
        }
        Self::new(vertices, triangles, Some(boundary))
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::structured_rectangle(n, [0.0, 1.0], [0.0, 1.0])
    }

    /// Disk of radius 1 with a hole of radius 0.1 centred at (0.5, 0).
    /// Marker 1 is the outer circle, marker 2 the inner one.
    pub fn offset_circles_coarse() -> Self {
        Self::parse(BUNDLED_OFFSET_CIRCLES).expect("bundled mesh is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_msh2d())
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (line, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
        if header.split_whitespace().collect::<Vec<_>>() != ["msh2d", "1"] {
            return Err(Error::Parse { line, message: format!("expected header `msh2d 1`, found `{header}`") });
        }

        let nv = section_count(lines.next(), "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, l) = next_line(&mut lines, "vertex")?;
            let [x, y] = parse_fields::<f64, 2>(line, l)?;
            vertices.push([x, y]);
        }

        let nt = section_count(lines.next(), "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (line, l) = next_line(&mut lines, "triangle")?;
            let tri = parse_fields::<usize, 3>(line, l)?;
            if let Some(&v) = tri.iter().find(|&&v| v >= nv) {
                return Err(Error::Parse { line, message: format!("vertex index {v} out of range (have {nv})") });
            }
            triangles.push(tri);
        }

        let boundary = match lines.next() {
            None => None,
            Some(entry) => {
                let nb = section_count(Some(entry), "boundary")?;
                let mut edges = Vec::with_capacity(nb);
                for _ in 0..nb {
                    let (line, l) = next_line(&mut lines, "boundary edge")?;
                    let [a, b, m] = parse_fields::<usize, 3>(line, l)?;
                    if a >= nv || b >= nv {
                        return Err(Error::Parse { line, message: format!("boundary vertex out of range (have {nv})") });
                    }
                    let marker = u32::try_from(m)
                        .map_err(|_| Error::Parse { line, message: format!("marker {m} too large") })?;
                    edges.push(BoundaryEdge { vertices: [a, b], marker });
                }
                Some(edges)
            }
        };
        if let Some((line, l)) = lines.next() {
            return Err(Error::Parse { line, message: format!("unexpected trailing content `{l}`") });
        }
        Self::new(vertices, triangles, boundary)
    }

    /// Serializes with shortest round-trip float formatting.
    pub fn to_msh2d(&self) -> String {
        let mut out = String::with_capacity(48 * self.vertices.len() + 24 * self.triangles.len());
        out.push_str("msh2d 1\n");
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for [x, y] in &self.vertices {
            let _ = writeln!(out, "{x:?} {y:?}");
        }
        let _ = writeln!(out, "triangles {}", self.triangles.len());
        for [i, j, k] in &self.triangles {
            let _ = writeln!(out, "{i} {j} {k}");
        }
        let _ = writeln!(out, "boundary {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(out, "{} {} {}", e.vertices[0], e.vertices[1], e.marker);
        }
        out
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Maximum over triangles of the longest edge.
    pub fn mesh_size(&self) -> f64 {
        self.h
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Distinct markers in ascending order.
    pub fn markers(&self) -> Vec<u32> {
        let mut m: Vec<u32> = self.boundary_edges.iter().map(|e| e.marker).collect();
        m.sort_unstable();
        m.dedup();
        m
    }
}

/// Twice the signed area.
fn signed_area(vertices: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|v| vertices[v]);
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn longest_edge(vertices: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    (0..3)
        .map(|k| {
            let p = vertices[tri[k]];
            let q = vertices[tri[(k + 1) % 3]];
            (q[0] - p[0]).hypot(q[1] - p[1])
        })
        .fold(0.0, f64::max)
}

fn sorted_edge(a: usize, b: usize) -> [usize; 2] {
    if a < b { [a, b] } else { [b, a] }
}

fn check_given_boundary(given: &[BoundaryEdge], detected: &[[usize; 2]], nv: usize) -> Result<()> {
    let mut expected: HashMap<[usize; 2], bool> =
        detected.iter().map(|e| (sorted_edge(e[0], e[1]), false)).collect();
    for e in given {
        let [a, b] = e.vertices;
        if a >= nv || b >= nv {
            return Err(Error::MeshValidation(format!("boundary edge ({a}, {b}) out of range")));
        }
        match expected.get_mut(&sorted_edge(a, b)) {
            Some(seen @ false) => *seen = true,
            Some(true) => {
                return Err(Error::MeshValidation(format!("boundary edge ({a}, {b}) listed twice")));
            }
            None => {
                return Err(Error::MeshValidation(format!(
                    "edge ({a}, {b}) is marked as boundary but is not owned by exactly one triangle"
                )));
            }
        }
    }
    if let Some((e, _)) = expected.iter().find(|(_, seen)| !**seen) {
        return Err(Error::MeshValidation(format!("boundary edge ({}, {}) has no marker", e[0], e[1])));
    }
    Ok(())
}

fn label_components(edges: &[[usize; 2]], nv: usize) -> Vec<BoundaryEdge> {
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for e in edges {
        let (ra, rb) = (find(&mut parent, e[0]), find(&mut parent, e[1]));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
    }
    // Roots are the smallest vertex of each component (union keeps the lower index).
    let mut roots: Vec<usize> = edges.iter().map(|e| find(&mut parent, e[0])).collect();
    roots.sort_unstable();
    roots.dedup();
    let marker_of: HashMap<usize, u32> = roots.iter().enumerate().map(|(i, &r)| (r, i as u32 + 1)).collect();
    let mut out: Vec<BoundaryEdge> = edges
        .iter()
        .map(|e| BoundaryEdge { vertices: *e, marker: marker_of[&find(&mut parent, e[0])] })
        .collect();
    out.sort_by_key(|e| e.marker);
    out
}

fn section_count(entry: Option<(usize, &str)>, name: &str) -> Result<usize> {
    let (line, l) = entry.ok_or(Error::Parse { line: 0, message: format!("missing `{name}` section") })?;
    let mut it = l.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(key), Some(count), None) if key == name => count
            .parse()
            .map_err(|_| Error::Parse { line, message: format!("bad {name} count `{count}`") }),
        _ => Err(Error::Parse { line, message: format!("expected `{name} <count>`, found `{l}`") }),
    }
}

fn next_line<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    what: &str,
) -> Result<(usize, &'a str)> {
    lines
        .next()
        .ok_or(Error::Parse { line: 0, message: format!("unexpected end of file while reading {what}") })
}

fn parse_fields<T: std::str::FromStr, const N: usize>(line: usize, l: &str) -> Result<[T; N]> {
    let fields: Vec<&str> = l.split_whitespace().collect();
    if fields.len() != N {
        return Err(Error::Parse { line, message: format!("expected {N} fields, found {}", fields.len()) });
    }
    let mut out = Vec::with_capacity(N);
    for f in fields {
        out.push(f.parse::<T>().map_err(|_| Error::Parse { line, message: format!("cannot parse `{f}`") })?);
    }
    Ok(out.try_into().unwrap_or_else(|_| unreachable!()))
}
