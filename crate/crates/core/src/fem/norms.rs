use super::space::TaylorHoodSpace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub l3: f64,
    pub l6: f64,
}

struct PointValues {
    weight: f64,
    point: [f64; 2],
    value: [f64; 2],
    grad: [[f64; 2]; 2],
}

fn for_each_point(space: &TaylorHoodSpace, u: &[f64], mut f: impl FnMut(PointValues)) {
    assert_eq!(u.len(), space.n_vel());
    let ns = space.n_scalar();
    for t in 0..space.mesh().n_triangles() {
        let ev = space.element_values(t);
        let nodes = space.element_nodes(t);
        for q in 0..ev.weights.len() {
            let mut value = [0.0; 2];
            let mut grad = [[0.0; 2]; 2];
            for i in 0..6 {
                for c in 0..2 {
                    let coef = u[c * ns + nodes[i]];
                    value[c] += coef * ev.phi[q][i];
                    grad[c][0] += coef * ev.grad[q][i][0];
                    grad[c][1] += coef * ev.grad[q][i][1];
                }
            }
            f(PointValues { weight: ev.weights[q], point: ev.points[q], value, grad });
        }
    }
}

/// `||u||`, `||grad u||`, `||u||_{L^3}` and `||u||_{L^6}` by element quadrature.
pub fn norms(space: &TaylorHoodSpace, u: &[f64]) -> Norms {
    let (mut l2, mut h1, mut l3, mut l6) = (0.0, 0.0, 0.0, 0.0);
    for_each_point(space, u, |p| {
        let m2 = p.value[0] * p.value[0] + p.value[1] * p.value[1];
        l2 += p.weight * m2;
        l3 += p.weight * m2.powf(1.5);
        l6 += p.weight * m2 * m2 * m2;
        h1 += p.weight * p.grad.iter().flatten().map(|g| g * g).sum::<f64>();
    });
    Norms { l2: l2.sqrt(), h1_semi: h1.sqrt(), l3: l3.cbrt(), l6: l6.powf(1.0 / 6.0) }
}

pub fn l3_norm(space: &TaylorHoodSpace, u: &[f64]) -> f64 {
    let mut s = 0.0;
    for_each_point(space, u, |p| {
        let m2 = p.value[0] * p.value[0] + p.value[1] * p.value[1];
        s += p.weight * m2.powf(1.5);
    });
    s.cbrt()
}

/// `||curl u||^2` with `curl u = d u_y / dx - d u_x / dy`.
pub fn curl_norm_squared(space: &TaylorHoodSpace, u: &[f64]) -> f64 {
    let mut s = 0.0;
    for_each_point(space, u, |p| {
        let curl = p.grad[1][0] - p.grad[0][1];
        s += p.weight * curl * curl;
    });
    s
}

/// `||u - exact||` by quadrature against an analytic field.
pub fn l2_error(space: &TaylorHoodSpace, u: &[f64], exact: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
    let mut s = 0.0;
    for_each_point(space, u, |p| {
        let e = exact(p.point);
        let dx = p.value[0] - e[0];
        let dy = p.value[1] - e[1];
        s += p.weight * (dx * dx + dy * dy);
    });
    s.sqrt()
}
