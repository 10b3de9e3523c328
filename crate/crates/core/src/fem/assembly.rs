//! Assembly of the Taylor-Hood operators.
//!
//! Mass, stiffness and convection act componentwise, so they are assembled as
//! scalar P2 matrices on the space's [`ScalarPattern`] and expanded to the
//! vector operator `diag(S, S)` on request.

use super::space::{ElementValues, TaylorHoodSpace};
use super::sparse::SparseOperator;

/// Values of the scalar mass matrix `(phi_j, phi_i)` on the space's pattern.
pub fn scalar_mass_values(space: &TaylorHoodSpace) -> Vec<f64> {
    let mut values = vec![0.0; space.pattern().nnz()];
    for t in 0..space.mesh().n_triangles() {
        let ev = space.element_values(t);
        let pos = &space.pattern().element_positions[t];
        for q in 0..ev.weights.len() {
            let w = ev.weights[q];
            let phi = &ev.phi[q];
            for i in 0..6 {
                for j in 0..6 {
                    values[pos[i][j]] += w * (phi[i] * phi[j]);
                }
            }
        }
    }
    values
}

/// Values of the scalar stiffness matrix `(grad phi_j, grad phi_i)`.
pub fn scalar_stiffness_values(space: &TaylorHoodSpace) -> Vec<f64> {
    let mut values = vec![0.0; space.pattern().nnz()];
    for t in 0..space.mesh().n_triangles() {
        let ev = space.element_values(t);
        let pos = &space.pattern().element_positions[t];
        for q in 0..ev.weights.len() {
            let w = ev.weights[q];
            let g = &ev.grad[q];
            for i in 0..6 {
                for j in 0..6 {
                    values[pos[i][j]] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
        }
    }
    values
}

/// Interpolated velocity value and divergence at each quadrature point.
fn field_at_points(space: &TaylorHoodSpace, t: usize, ev: &ElementValues, w: &[f64]) -> Vec<([f64; 2], f64)> {
    let nodes = space.element_nodes(t);
    let ns = space.n_scalar();
    (0..ev.weights.len())
        .map(|q| {
            let mut val = [0.0; 2];
            let mut div = 0.0;
            for i in 0..6 {
                let wx = w[nodes[i]];
                let wy = w[ns + nodes[i]];
                val[0] += wx * ev.phi[q][i];
                val[1] += wy * ev.phi[q][i];
                div += wx * ev.grad[q][i][0] + wy * ev.grad[q][i][1];
            }
            (val, div)
        })
        .collect()
}

/// Scalar block of the skew-symmetric convection operator,
/// `N_ij = 1/2 (w . grad phi_j, phi_i) - 1/2 (w . grad phi_i, phi_j)`,
/// written into `values` (overwritten). Antisymmetric entry by entry.
pub fn scalar_convection_values_into(space: &TaylorHoodSpace, w: &[f64], values: &mut [f64]) {
    assert_eq!(w.len(), space.n_vel());
    assert_eq!(values.len(), space.pattern().nnz());
    values.iter_mut().for_each(|v| *v = 0.0);
    for t in 0..space.mesh().n_triangles() {
        let ev = space.element_values(t);
        let wq = field_at_points(space, t, &ev, w);
        // c[i][j] = (w . grad phi_j, phi_i)
        let mut c = [[0.0; 6]; 6];
        for q in 0..ev.weights.len() {
            let (wv, _) = wq[q];
            let wt = ev.weights[q];
            let adv: [f64; 6] = std::array::from_fn(|j| wv[0] * ev.grad[q][j][0] + wv[1] * ev.grad[q][j][1]);
            for i in 0..6 {
                let s = wt * ev.phi[q][i];
                for j in 0..6 {
                    c[i][j] += s * adv[j];
                }
            }
        }
        let pos = &space.pattern().element_positions[t];
        for i in 0..6 {
            for j in 0..6 {
                values[pos[i][j]] += 0.5 * (c[i][j] - c[j][i]);
            }
        }
    }
}

pub fn mass_matrix(space: &TaylorHoodSpace) -> SparseOperator {
    SparseOperator::block_diag2(space.pattern(), &scalar_mass_values(space), true)
}

pub fn stiffness_matrix(space: &TaylorHoodSpace) -> SparseOperator {
    SparseOperator::block_diag2(space.pattern(), &scalar_stiffness_values(space), true)
}

/// `N(w)_ij = b*(w, psi_j, psi_i)` over the vector P2 basis.
pub fn convection_matrix(space: &TaylorHoodSpace, w: &[f64]) -> SparseOperator {
    let mut values = vec![0.0; space.pattern().nnz()];
    scalar_convection_values_into(space, w, &mut values);
    SparseOperator::block_diag2(space.pattern(), &values, false)
}

/// The alternative form `(w . grad psi_j, psi_i) + 1/2 ((div w) psi_j, psi_i)`.
/// Equals [`convection_matrix`] on the rows and columns of velocity dofs that
/// vanish on the boundary.
pub fn convection_matrix_divergence_form(space: &TaylorHoodSpace, w: &[f64]) -> SparseOperator {
    let mut values = vec![0.0; space.pattern().nnz()];
    for t in 0..space.mesh().n_triangles() {
        let ev = space.element_values(t);
        let wq = field_at_points(space, t, &ev, w);
        let pos = &space.pattern().element_positions[t];
        for q in 0..ev.weights.len() {
            let (wv, div) = wq[q];
            let wt = ev.weights[q];
            for i in 0..6 {
                for j in 0..6 {
                    let adv = wv[0] * ev.grad[q][j][0] + wv[1] * ev.grad[q][j][1];
                    values[pos[i][j]] += wt * (adv * ev.phi[q][i] + 0.5 * div * ev.phi[q][j] * ev.phi[q][i]);
                }
            }
        }
    }
    SparseOperator::block_diag2(space.pattern(), &values, false)
}

/// `B_kj = (div psi_j, chi_k)` with `chi_k` the P1 pressure basis; `n_pr x n_vel`.
pub fn divergence_matrix(space: &TaylorHoodSpace) -> SparseOperator {
    let ns = space.n_scalar();
    let mut triplets = Vec::with_capacity(36 * space.mesh().n_triangles());
    for t in 0..space.mesh().n_triangles() {
        let ev = space.element_values(t);
        let tri = space.mesh().triangles()[t];
        let nodes = space.element_nodes(t);
        let mut local = [[[0.0; 6]; 3]; 2];
        for q in 0..ev.weights.len() {
            for k in 0..3 {
                let s = ev.weights[q] * ev.lambda[q][k];
                for j in 0..6 {
                    local[0][k][j] += s * ev.grad[q][j][0];
                    local[1][k][j] += s * ev.grad[q][j][1];
                }
            }
        }
        for c in 0..2 {
            for k in 0..3 {
                for j in 0..6 {
                    triplets.push((tri[k], c * ns + nodes[j], local[c][k][j]));
                }
            }
        }
    }
    SparseOperator::from_triplets(space.n_pr(), space.n_vel(), triplets, false)
}

/// `(1, chi_k)` for every pressure basis function.
pub fn pressure_mean_vector(space: &TaylorHoodSpace) -> Vec<f64> {
    let mut m = vec![0.0; space.n_pr()];
    for t in 0..space.mesh().n_triangles() {
        let a = space.mesh().triangle_area(t) / 3.0;
        for &v in &space.mesh().triangles()[t] {
            m[v] += a;
        }
    }
    m
}

/// `b*(w, u, v) = 1/2 (w . grad u, v) - 1/2 (w . grad v, u)` evaluated by quadrature.
pub fn trilinear(space: &TaylorHoodSpace, w: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let ns = space.n_scalar();
    let mut total = 0.0;
    for t in 0..space.mesh().n_triangles() {
        let ev = space.element_values(t);
        let nodes = space.element_nodes(t);
        for q in 0..ev.weights.len() {
            let mut wv = [0.0; 2];
            let mut uv = [0.0; 2];
            let mut vv = [0.0; 2];
            let mut gu = [[0.0; 2]; 2];
            let mut gv = [[0.0; 2]; 2];
            for i in 0..6 {
                let phi = ev.phi[q][i];
                let g = ev.grad[q][i];
                for c in 0..2 {
                    let d = c * ns + nodes[i];
                    wv[c] += w[d] * phi;
                    uv[c] += u[d] * phi;
                    vv[c] += v[d] * phi;
                    gu[c][0] += u[d] * g[0];
                    gu[c][1] += u[d] * g[1];
                    gv[c][0] += v[d] * g[0];
                    gv[c][1] += v[d] * g[1];
                }
            }
            let mut a = 0.0;
            let mut b = 0.0;
            for c in 0..2 {
                a += (wv[0] * gu[c][0] + wv[1] * gu[c][1]) * vv[c];
                b += (wv[0] * gv[c][0] + wv[1] * gv[c][1]) * uv[c];
            }
            total += ev.weights[q] * 0.5 * (a - b);
        }
    }
    total
}

/// Load vector `(f, psi_i)` for a vector function of position.
pub fn load_vector(space: &TaylorHoodSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let ns = space.n_scalar();
    let mut out = vec![0.0; space.n_vel()];
    for t in 0..space.mesh().n_triangles() {
        let ev = space.element_values(t);
        let nodes = space.element_nodes(t);
        for q in 0..ev.weights.len() {
            let fv = f(ev.points[q]);
            for i in 0..6 {
                let s = ev.weights[q] * ev.phi[q][i];
                out[nodes[i]] += s * fv[0];
                out[ns + nodes[i]] += s * fv[1];
            }
        }
    }
    out
}

/// Nodal P2 interpolant.
pub fn interpolate(space: &TaylorHoodSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let ns = space.n_scalar();
    let mut out = vec![0.0; space.n_vel()];
    for i in 0..ns {
        let v = f(space.node_coords(i));
        out[i] = v[0];
        out[ns + i] = v[1];
    }
    out
}
