//! Taylor-Hood P2-P1 degree-of-freedom maps.
//!
//! Scalar P2 nodes are numbered vertices first, then edge midpoints. A vector
//! velocity field stores the x-component of every node followed by the
//! y-component, so `dof = component * n_scalar + node`. Pressure dofs are the
//! mesh vertices.

use std::collections::HashMap;

use super::quadrature::TriangleRule;
use crate::mesh::Mesh;

/// Local node order: three vertices, then midpoints of edges (0,1), (1,2), (2,0).
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

#[derive(Debug, Clone)]
pub struct TaylorHoodSpace {
    mesh: Mesh,
    edges: Vec<[usize; 2]>,
    element_nodes: Vec<[usize; 6]>,
    dirichlet: Vec<bool>,
    pattern: ScalarPattern,
    rule: TriangleRule,
}

/// Sparsity pattern shared by every scalar P2 x P2 matrix, with the positions
/// of each element's 6x6 local block precomputed.
#[derive(Debug, Clone)]
pub struct ScalarPattern {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub element_positions: Vec<[[usize; 6]; 6]>,
}

impl ScalarPattern {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()].binary_search(&col).ok().map(|k| k + range.start)
    }
}

/// Geometry and P2 shape data of one triangle evaluated at the quadrature points.
#[derive(Debug, Clone)]
pub struct ElementValues {
    pub area: f64,
    /// Physical quadrature points.
    pub points: Vec<[f64; 2]>,
    /// `weights[q] = area * w_q`.
    pub weights: Vec<f64>,
    /// `phi[q][i]` for the six local P2 functions.
    pub phi: Vec<[f64; 6]>,
    /// `grad[q][i] = [d/dx, d/dy]`.
    pub grad: Vec<[[f64; 2]; 6]>,
    /// P1 (pressure) values `lambda[q][k]`.
    pub lambda: Vec<[f64; 3]>,
}

impl TaylorHoodSpace {
    /// No-slip on every boundary component.
    pub fn new(mesh: Mesh) -> Self {
        let markers = mesh.markers();
        Self::with_no_slip(mesh, &markers)
    }

    /// No-slip on the listed markers only.
    pub fn with_no_slip(mesh: Mesh, markers: &[u32]) -> Self {
        let nv = mesh.n_vertices();
        let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::with_capacity(3 * mesh.n_triangles() / 2 + nv);
        let mut edges = Vec::new();
        let mut element_nodes = Vec::with_capacity(mesh.n_triangles());
        for tri in mesh.triangles() {
            let mut nodes = [tri[0], tri[1], tri[2], 0, 0, 0];
            for (k, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                let (p, q) = (tri[*a], tri[*b]);
                let key = if p < q { [p, q] } else { [q, p] };
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
                nodes[3 + k] = nv + id;
            }
            element_nodes.push(nodes);
        }

        let n_scalar = nv + edges.len();
        let mut dirichlet = vec![false; n_scalar];
        for e in mesh.boundary_edges() {
            if markers.contains(&e.marker) {
                let [a, b] = e.vertices;
                dirichlet[a] = true;
                dirichlet[b] = true;
                let key = if a < b { [a, b] } else { [b, a] };
                dirichlet[nv + edge_ids[&key]] = true;
            }
        }

        let pattern = build_pattern(n_scalar, &element_nodes);
        Self { mesh, edges, element_nodes, dirichlet, pattern, rule: TriangleRule::degree5() }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n_scalar(&self) -> usize {
        self.mesh.n_vertices() + self.edges.len()
    }

    pub fn n_vel(&self) -> usize {
        2 * self.n_scalar()
    }

    pub fn n_pr(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Total Taylor-Hood unknowns (velocity plus pressure).
    pub fn n_total(&self) -> usize {
        self.n_vel() + self.n_pr()
    }

    pub fn element_nodes(&self, t: usize) -> &[usize; 6] {
        &self.element_nodes[t]
    }

    pub fn pattern(&self) -> &ScalarPattern {
        &self.pattern
    }

    pub fn rule(&self) -> &TriangleRule {
        &self.rule
    }

    /// Dirichlet flag per scalar node; both velocity components share it.
    pub fn dirichlet_nodes(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn is_dirichlet_dof(&self, dof: usize) -> bool {
        self.dirichlet[dof % self.n_scalar()]
    }

    /// Coordinates of scalar node `i` (vertex or edge midpoint).
    pub fn node_coords(&self, i: usize) -> [f64; 2] {
        let nv = self.mesh.n_vertices();
        let v = self.mesh.vertices();
        if i < nv {
            v[i]
        } else {
            let [a, b] = self.edges[i - nv];
            [0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1])]
        }
    }

    /// Zeroes the Dirichlet entries of a velocity vector.
    pub fn apply_no_slip(&self, u: &mut [f64]) {
        let ns = self.n_scalar();
        for (dof, x) in u.iter_mut().enumerate() {
            if self.dirichlet[dof % ns] {
                *x = 0.0;
            }
        }
    }

    pub fn element_values(&self, t: usize) -> ElementValues {
        let tri = self.mesh.triangles()[t];
        let p = tri.map(|v| self.mesh.vertices()[v]);
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
        let area = 0.5 * det;
        let gl = [
            [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
            [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
            [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
        ];
        let nq = self.rule.len();
        let mut ev = ElementValues {
            area,
            points: Vec::with_capacity(nq),
            weights: Vec::with_capacity(nq),
            phi: Vec::with_capacity(nq),
            grad: Vec::with_capacity(nq),
            lambda: Vec::with_capacity(nq),
        };
        for (l, w) in self.rule.points.iter().zip(&self.rule.weights) {
            ev.points.push([
                l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
            ]);
            ev.weights.push(area * w);
            ev.lambda.push(*l);
            let (phi, grad) = p2_shape(l, &gl);
            ev.phi.push(phi);
            ev.grad.push(grad);
        }
        ev
    }

    /// Value and gradient of a velocity field at barycentric point `l` of triangle `t`.
    pub fn eval_field(&self, u: &[f64], t: usize, l: [f64; 3]) -> ([f64; 2], [[f64; 2]; 2]) {
        let tri = self.mesh.triangles()[t];
        let p = tri.map(|v| self.mesh.vertices()[v]);
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
        let gl = [
            [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
            [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
            [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
        ];
        let (phi, grad) = p2_shape(&l, &gl);
        let nodes = self.element_nodes[t];
        let ns = self.n_scalar();
        let mut val = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        for c in 0..2 {
            for i in 0..6 {
                let coef = u[c * ns + nodes[i]];
                val[c] += coef * phi[i];
                g[c][0] += coef * grad[i][0];
                g[c][1] += coef * grad[i][1];
            }
        }
        (val, g)
    }
}

/// P2 shape functions and gradients given barycentric coordinates and the
/// (constant) gradients of the barycentric functions.
fn p2_shape(l: &[f64; 3], gl: &[[f64; 2]; 3]) -> ([f64; 6], [[f64; 2]; 6]) {
    let mut phi = [0.0; 6];
    let mut grad = [[0.0; 2]; 6];
    for i in 0..3 {
        phi[i] = l[i] * (2.0 * l[i] - 1.0);
        let s = 4.0 * l[i] - 1.0;
        grad[i] = [s * gl[i][0], s * gl[i][1]];
    }
    for (k, [a, b]) in LOCAL_EDGES.iter().enumerate() {
        phi[3 + k] = 4.0 * l[*a] * l[*b];
        grad[3 + k] = [
            4.0 * (l[*a] * gl[*b][0] + l[*b] * gl[*a][0]),
            4.0 * (l[*a] * gl[*b][1] + l[*b] * gl[*a][1]),
        ];
    }
    (phi, grad)
}

fn build_pattern(n: usize, element_nodes: &[[usize; 6]]) -> ScalarPattern {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for nodes in element_nodes {
        for &a in nodes {
            rows[a].extend_from_slice(nodes);
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for r in rows.iter_mut() {
        r.sort_unstable();
        r.dedup();
        col_idx.extend_from_slice(r);
        row_ptr.push(col_idx.len());
    }
    let mut pattern = ScalarPattern { row_ptr, col_idx, element_positions: Vec::new() };
    pattern.element_positions = element_nodes
        .iter()
        .map(|nodes| {
            let mut pos = [[0; 6]; 6];
            for i in 0..6 {
                for j in 0..6 {
                    pos[i][j] = pattern.find(nodes[i], nodes[j]).expect("pattern covers element block");
                }
            }
            pos
        })
        .collect();
    pattern
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dof_counts() {
        let mesh = Mesh::unit_square(2).unwrap();
        let nv = mesh.n_vertices();
        let space = TaylorHoodSpace::new(mesh);
        // 9 vertices, 16 edges
        assert_eq!(space.n_edges(), 16);
        assert_eq!(space.n_vel(), 2 * (nv + 16));
        assert_eq!(space.n_pr(), nv);
    }

    #[test]
    fn shared_midpoints_are_consistent() {
        let space = TaylorHoodSpace::new(Mesh::unit_square(3).unwrap());
        // every midpoint node has the coordinates of the midpoint of its edge in each element
        for t in 0..space.mesh().n_triangles() {
            let tri = space.mesh().triangles()[t];
            let nodes = space.element_nodes(t);
            for (k, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                let pa = space.mesh().vertices()[tri[*a]];
                let pb = space.mesh().vertices()[tri[*b]];
                let m = space.node_coords(nodes[3 + k]);
                assert!((m[0] - 0.5 * (pa[0] + pb[0])).abs() < 1e-15);
                assert!((m[1] - 0.5 * (pa[1] + pb[1])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dirichlet_nodes_are_exactly_the_boundary_nodes() {
        let space = TaylorHoodSpace::new(Mesh::unit_square(4).unwrap());
        for i in 0..space.n_scalar() {
            let [x, y] = space.node_coords(i);
            let on_boundary = x.min(1.0 - x).min(y).min(1.0 - y).abs() < 1e-14;
            assert_eq!(space.dirichlet_nodes()[i], on_boundary, "node {i} at ({x}, {y})");
        }
        // 4 * n vertices + 4 * n midpoints on the boundary
        assert_eq!(space.dirichlet_nodes().iter().filter(|d| **d).count(), 32);
    }

    #[test]
    fn shape_functions_partition_unity() {
        let space = TaylorHoodSpace::new(Mesh::offset_circles_coarse());
        let ev = space.element_values(17);
        for q in 0..ev.phi.len() {
            assert!((ev.phi[q].iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let gx: f64 = ev.grad[q].iter().map(|g| g[0]).sum();
            let gy: f64 = ev.grad[q].iter().map(|g| g[1]).sum();
            assert!(gx.abs() < 1e-10 && gy.abs() < 1e-10);
        }
    }
}
