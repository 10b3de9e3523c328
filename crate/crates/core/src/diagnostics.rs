//! Energy, enstrophy, stability monitors, discrete dual norms and error metrics.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::ensemble::compute_mean_fluct;
use crate::error::{Error, Result};
use crate::fem::norms::{curl_norm_squared, l3_norm};
use crate::fem::{dot, Discretization, TaylorHoodSpace};
use crate::pod::PodBasis;

/// Sobolev embedding constant used by the L³ monitor.
pub const C_SE: f64 = 1.154_700_538_379_251_5; // 2 / sqrt(3)

/// `(1/2 ||u||^2, 1/2 nu ||curl u||^2)`.
pub fn energy_enstrophy(space: &TaylorHoodSpace, u: &[f64], nu: f64) -> (f64, f64) {
    let n = crate::fem::norms(space, u);
    (0.5 * n.l2 * n.l2, 0.5 * nu * curl_norm_squared(space, u))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Constant `C` multiplying the gradient indicator.
    pub c41: f64,
    pub limit41: f64,
    pub limit42: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { c41: 1.0, limit41: 1.0, limit42: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    pub step: usize,
    pub member: usize,
    pub ind41: f64,
    pub ind42: f64,
    pub ok41: bool,
    pub ok42: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    pub fn all_ok41(&self) -> bool {
        self.rows.iter().all(|r| r.ok41)
    }

    pub fn all_ok42(&self) -> bool {
        self.rows.iter().all(|r| r.ok42)
    }

    pub fn max41(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.ind41))
    }

    pub fn max42(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.ind42))
    }
}

fn row(step: usize, member: usize, ind41: f64, ind42: f64, th: &Thresholds) -> StabilityRow {
    StabilityRow { step, member, ind41, ind42, ok41: ind41 <= th.limit41, ok42: ind42 <= th.limit42 }
}

/// The two indicators for one fluctuation, given `||grad u'||^2` and `||u'||_{L3}`.
pub fn indicators(s_norm: f64, dt: f64, nu: f64, grad_sq: f64, l3: f64, th: &Thresholds) -> (f64, f64) {
    let ind41 = th.c41 * s_norm.sqrt() * (dt / nu) * grad_sq;
    let ind42 = C_SE * C_SE * s_norm * (dt / nu) * l3 * l3;
    (ind41, ind42)
}

/// Indicators for every member of a reduced trajectory at levels `n >= 1`
/// (the fluctuation at level `n` drives the step to `n + 1`). The last level is
/// skipped because no step uses it.
pub fn rom_stability(
    disc: &Discretization,
    basis: &PodBasis,
    s_norm: f64,
    levels: &[Vec<Vec<f64>>],
    first_level: usize,
    dt: f64,
    nu: f64,
    th: &Thresholds,
) -> StabilityReport {
    let k = basis.gradient_gram();
    let mut rows = Vec::new();
    for n in 1..levels.len().saturating_sub(1) {
        let (_, fluct) = compute_mean_fluct(&levels[n], &levels[n - 1]);
        for (j, f) in fluct.iter().enumerate() {
            let kf: Vec<f64> = (0..f.len()).map(|i| (0..f.len()).map(|m| k[(i, m)] * f[m]).sum()).collect();
            let grad_sq = dot(f, &kf);
            let l3 = l3_norm(disc.space(), &basis.lift(f));
            let (a, b) = indicators(s_norm, dt, nu, grad_sq, l3, th);
            rows.push(row(first_level + n, j, a, b, th));
        }
    }
    StabilityReport { rows }
}

/// Full-space analogue: `s_norm` is replaced by an empirical constant, e.g.
/// [`empirical_inverse_constant`] over the recorded fields.
pub fn full_stability(
    disc: &Discretization,
    s_norm: f64,
    previous: &[Vec<f64>],
    current: &[Vec<f64>],
    step: usize,
    dt: f64,
    nu: f64,
    th: &Thresholds,
) -> Vec<StabilityRow> {
    let (_, fluct) = compute_mean_fluct(current, previous);
    fluct
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let grad_sq = disc.h1_inner(f, f);
            let l3 = l3_norm(disc.space(), f);
            let (a, b) = indicators(s_norm, dt, nu, grad_sq, l3, th);
            row(step, j, a, b, th)
        })
        .collect()
}

/// `max (||u||^2 + nu ||grad u||^2) / ||u||^2` over the given nonzero fields, the
/// full-space stand-in for `|||S_R|||_2`.
pub fn empirical_inverse_constant(disc: &Discretization, fields: &[Vec<f64>], nu: f64) -> f64 {
    fields
        .iter()
        .filter_map(|u| {
            let m = disc.l2_inner(u, u);
            (m > 0.0).then(|| 1.0 + nu * disc.h1_inner(u, u) / m)
        })
        .fold(1.0, f64::max)
}

/// Discrete dual norm `||f||_{-1,h}` of load vectors: `F^T A^{-1} F` over the
/// velocity dofs off the no-slip boundary. The stiffness factorization is
/// reused for every evaluation.
pub struct DualNorm {
    free: Vec<usize>,
    n_scalar: usize,
    lu: Lu<usize, f64>,
}

impl DualNorm {
    pub fn new(disc: &Discretization) -> Result<Self> {
        let space = disc.space();
        let ns = space.n_scalar();
        let mut index = vec![usize::MAX; ns];
        let mut free = Vec::new();
        for (node, &d) in space.dirichlet_nodes().iter().enumerate() {
            if !d {
                index[node] = free.len();
                free.push(node);
            }
        }
        let p = space.pattern();
        let a = disc.scalar_stiffness();
        let mut triplets = Vec::new();
        for r in 0..ns {
            if index[r] == usize::MAX {
                continue;
            }
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                let c = p.col_idx[k];
                if index[c] != usize::MAX {
                    triplets.push(Triplet::new(index[r], index[c], a[k]));
                }
            }
        }
        let n = free.len();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Solver { step: None, message: format!("stiffness assembly: {e:?}") })?;
        let lu = Lu::try_new_with_symbolic(
            faer::sparse::linalg::solvers::SymbolicLu::try_new(mat.symbolic())
                .map_err(|e| Error::Solver { step: None, message: format!("{e:?}") })?,
            mat.as_ref(),
        )
        .map_err(|e| Error::Solver { step: None, message: format!("stiffness factorization: {e:?}") })?;
        Ok(Self { free, n_scalar: ns, lu })
    }

    /// `||f||_{-1,h}^2` for a full-length load vector.
    pub fn squared(&self, load: &[f64]) -> f64 {
        assert_eq!(load.len(), 2 * self.n_scalar);
        let n = self.free.len();
        let mut rhs = Mat::<f64>::zeros(n, 2);
        for c in 0..2 {
            for (i, &node) in self.free.iter().enumerate() {
                rhs[(i, c)] = load[c * self.n_scalar + node];
            }
        }
        let f = rhs.clone();
        self.lu.solve_in_place(rhs.as_mut());
        let mut s = 0.0;
        for c in 0..2 {
            for i in 0..n {
                s += f[(i, c)] * rhs[(i, c)];
            }
        }
        s.max(0.0)
    }

    pub fn norm(&self, load: &[f64]) -> f64 {
        self.squared(load).sqrt()
    }
}

/// `||f||_{-1,h}` with a one-off factorization.
pub fn discrete_dual_norm(disc: &Discretization, load: &[f64]) -> Result<f64> {
    Ok(DualNorm::new(disc)?.norm(load))
}

/// `|||u - v|||_{2,0} / |||u|||_{2,0}` with the time integral taken by the
/// composite trapezoid rule on a uniform grid of step `dt`.
pub fn relative_error_l2t(disc: &Discretization, reference: &[Vec<f64>], other: &[Vec<f64>], dt: f64) -> Result<f64> {
    if reference.len() != other.len() || reference.is_empty() {
        return Err(Error::Dimension(format!(
            "time grids differ: {} and {} levels",
            reference.len(),
            other.len()
        )));
    }
    let mut err = Vec::with_capacity(reference.len());
    let mut refn = Vec::with_capacity(reference.len());
    for (u, v) in reference.iter().zip(other) {
        let e: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        err.push(disc.l2_inner(&e, &e));
        refn.push(disc.l2_inner(u, u));
    }
    let denom = trapezoid(&refn, dt);
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument("reference trajectory has zero norm".into()));
    }
    Ok((trapezoid(&err, dt) / denom).sqrt())
}

/// Composite trapezoid rule for samples on a uniform grid.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => 0.0,
        n => dt * (0.5 * values[0] + values[1..n - 1].iter().sum::<f64>() + 0.5 * values[n - 1]),
    }
}

/// Norms along one member's trajectory needed by the energy bound:
/// `l2_sq[n] = ||u^n||^2`, `grad_sq[n] = ||grad u^n||^2` and
/// `dual_sq[n] = ||f^n||^2_{-1}` for `n = 0..=N`.
#[derive(Debug, Clone, Default)]
pub struct MemberHistory {
    pub l2_sq: Vec<f64>,
    pub extrap_sq: Vec<f64>,
    pub grad_sq: Vec<f64>,
    pub dual_sq: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBoundCheck {
    pub checked_levels: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` seen.
    pub max_ratio: f64,
}

/// Checks, for every level `n >= 2`,
///
/// ```text
/// 1/4 ||u^n||^2 + 1/4 ||2u^n - u^{n-1}||^2 + (dt nu / 4) sum_{m=2}^{n} ||grad u^m||^2
///   <= (dt / nu) sum_{m=2}^{n} ||f^m||_{-1}^2 + 1/4 ||u^1||^2 + 1/4 ||2u^1 - u^0||^2
/// ```
///
/// `extrap_sq[n] = ||2u^n - u^{n-1}||^2` (entry 0 unused). A relative slack of
/// `1e-12` absorbs roundoff.
pub fn energy_bound(h: &MemberHistory, dt: f64, nu: f64) -> EnergyBoundCheck {
    let n_levels = h.l2_sq.len();
    let initial = 0.25 * h.l2_sq[1] + 0.25 * h.extrap_sq[1];
    let mut grad_sum = 0.0;
    let mut dual_sum = 0.0;
    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    for n in 2..n_levels {
        grad_sum += h.grad_sq[n];
        dual_sum += h.dual_sq[n];
        let lhs = 0.25 * h.l2_sq[n] + 0.25 * h.extrap_sq[n] + 0.25 * dt * nu * grad_sum;
        let rhs = dt / nu * dual_sum + initial;
        if lhs > rhs * (1.0 + 1e-12) {
            violations += 1;
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
    }
    EnergyBoundCheck { checked_levels: n_levels.saturating_sub(2), violations, max_ratio }
}

/// History of reduced member `j` from a reduced trajectory.
pub fn rom_member_history(
    basis: &PodBasis,
    levels: &[Vec<Vec<f64>>],
    j: usize,
    dual_sq: Vec<f64>,
) -> MemberHistory {
    let k = basis.gradient_gram();
    let mut h = MemberHistory { dual_sq, ..Default::default() };
    for (n, level) in levels.iter().enumerate() {
        let a = &level[j];
        h.l2_sq.push(dot(a, a));
        let ka: Vec<f64> = (0..a.len()).map(|i| (0..a.len()).map(|m| k[(i, m)] * a[m]).sum()).collect();
        h.grad_sq.push(dot(a, &ka));
        h.extrap_sq.push(if n == 0 {
            0.0
        } else {
            let e: Vec<f64> = a.iter().zip(&levels[n - 1][j]).map(|(x, y)| 2.0 * x - y).collect();
            dot(&e, &e)
        });
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::interpolate;
    use crate::mesh::Mesh;

    fn disc(n: usize) -> Discretization {
        Discretization::new(TaylorHoodSpace::new(Mesh::unit_square(n).unwrap())).unwrap()
    }

    #[test]
    fn energy_and_enstrophy() {
        let d = disc(3);
        assert_eq!(energy_enstrophy(d.space(), &vec![0.0; d.n_vel()], 0.1), (0.0, 0.0));
        let u = interpolate(d.space(), |[x, y]| [-y, x]);
        let nu = 0.02;
        let (_, ens) = energy_enstrophy(d.space(), &u, nu);
        assert!((ens - 2.0 * nu).abs() < 1e-12);
    }

    #[test]
    fn dual_norm_of_stiffness_image() {
        let d = disc(4);
        let mut v = interpolate(d.space(), |[x, y]| [(x * 3.0).sin() * y, x * y * y]);
        d.space().apply_no_slip(&mut v);
        let f = d.stiffness_mul(&v);
        let dn = DualNorm::new(&d).unwrap();
        let expect = d.h1_inner(&v, &v).sqrt();
        assert!((dn.norm(&f) - expect).abs() < 1e-10 * expect);
        assert_eq!(dn.norm(&vec![0.0; d.n_vel()]), 0.0);
        let g: Vec<f64> = f.iter().map(|x| -3.5 * x).collect();
        assert!((dn.norm(&g) - 3.5 * dn.norm(&f)).abs() < 1e-12 * dn.norm(&g));
    }

    #[test]
    fn relative_error_cases() {
        let d = disc(2);
        let u = interpolate(d.space(), |[x, y]| [x, y]);
        let traj = vec![u.clone(), u.iter().map(|v| 2.0 * v).collect(), u.clone()];
        assert_eq!(relative_error_l2t(&d, &traj, &traj, 0.1).unwrap(), 0.0);
        let zero = vec![vec![0.0; d.n_vel()]; 3];
        assert!((relative_error_l2t(&d, &traj, &zero, 0.1).unwrap() - 1.0).abs() < 1e-14);
        assert!(relative_error_l2t(&d, &traj, &zero[..2], 0.1).is_err());
    }

    #[test]
    fn trapezoid_rule() {
        assert!((trapezoid(&[0.0, 1.0, 4.0], 0.5) - 1.5).abs() < 1e-15);
        assert_eq!(trapezoid(&[3.0], 1.0), 0.0);
    }

    #[test]
    fn indicators_are_linear_in_dt() {
        let th = Thresholds::default();
        let (a, b) = indicators(4.0, 0.01, 0.02, 3.0, 0.5, &th);
        let (a2, b2) = indicators(4.0, 0.02, 0.02, 3.0, 0.5, &th);
        assert_eq!(a2, 2.0 * a);
        assert_eq!(b2, 2.0 * b);
        assert!((a - 2.0 * 0.5 * 3.0).abs() < 1e-12);
        assert!((C_SE - 2.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn energy_bound_flags_growth() {
        let h = MemberHistory {
            l2_sq: vec![1.0, 1.0, 1.0, 5.0],
            extrap_sq: vec![0.0, 1.0, 1.0, 9.0],
            grad_sq: vec![0.0, 0.0, 1.0, 1.0],
            dual_sq: vec![0.0; 4],
        };
        let c = energy_bound(&h, 0.01, 1.0);
        assert_eq!(c.checked_levels, 2);
        assert_eq!(c.violations, 2);
    }
}
