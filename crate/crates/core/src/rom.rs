//! Galerkin reduced-order version of the ensemble scheme in a POD space.
//!
//! The modes are discretely divergence free, so the pressure drops out and the
//! only unknowns are the `R` coefficients of each member.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::diagnostics::energy_enstrophy;
use crate::ensemble::{average, compute_mean_fluct, extrapolate, steps_for, EnsembleState, SeriesRow};
use crate::error::{Error, Result};
use crate::fem::{dot, Discretization};
use crate::pod::PodBasis;
use crate::problem::Force;

/// Reduced members at two levels; same layout as the full state.
pub type ReducedEnsembleState = EnsembleState;

/// Largest accepted `||B phi_i||` for a basis vector.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ReducedOperators {
    /// `K_R[i][j] = (grad phi_j, grad phi_i)`.
    pub stiffness: DMatrix<f64>,
    /// `convection[k][(i, j)] = b*(phi_k, phi_j, phi_i)`, exactly antisymmetric in `(i, j)`.
    pub convection: Vec<DMatrix<f64>>,
}

impl ReducedOperators {
    pub fn new(disc: &Discretization, basis: &PodBasis) -> Result<Self> {
        if basis.n_vel() != disc.n_vel() {
            return Err(Error::Dimension("basis does not belong to this space".into()));
        }
        for (index, phi) in basis.vectors().iter().enumerate() {
            let residual = disc.divergence_residual(phi);
            if residual > DIVERGENCE_TOLERANCE {
                return Err(Error::BasisConsistency { index, residual });
            }
        }
        let r = basis.n_modes();
        let phis = basis.vectors();
        let nnz = disc.scalar_mass().len();
        let convection = phis
            .par_iter()
            .map(|phi_k| {
                let mut block = vec![0.0; nnz];
                disc.convection_block_into(phi_k, &mut block);
                let images: Vec<Vec<f64>> = phis.iter().map(|phi_j| disc.apply_block(&block, phi_j)).collect();
                let mut m = DMatrix::zeros(r, r);
                for i in 0..r {
                    for j in 0..r {
                        m[(i, j)] = dot(&phis[i], &images[j]);
                    }
                }
                let mt = m.transpose();
                (m - mt) * 0.5
            })
            .collect();
        Ok(Self { stiffness: basis.gradient_gram().clone(), convection })
    }

    pub fn dim(&self) -> usize {
        self.stiffness.nrows()
    }

    /// `sum_k w_k convection[k]`, the reduced `N(w)`.
    pub fn convection_of(&self, w: &[f64]) -> DMatrix<f64> {
        let r = self.dim();
        let mut out = DMatrix::zeros(r, r);
        for (wk, ck) in w.iter().zip(&self.convection) {
            out += ck * *wk;
        }
        out
    }

    /// `b*(w, u, v)` for reduced coefficient vectors.
    pub fn trilinear(&self, w: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let n = self.convection_of(w);
        DVector::from_column_slice(v).dot(&(n * DVector::from_column_slice(u)))
    }
}

/// Reduced member forcing `(f^j(t), phi_i)`. Steady forces are projected once.
struct ReducedForces {
    forces: Vec<Force>,
    cached: Vec<Option<Vec<f64>>>,
}

impl ReducedForces {
    fn new(disc: &Discretization, basis: &PodBasis, forces: Vec<Force>) -> Self {
        let cached = forces
            .iter()
            .map(|f| (!f.is_time_dependent()).then(|| project_load(disc, basis, f, 0.0)))
            .collect();
        Self { forces, cached }
    }

    fn at(&self, disc: &Discretization, basis: &PodBasis, j: usize, t: f64) -> Vec<f64> {
        match &self.cached[j] {
            Some(v) => v.clone(),
            None => project_load(disc, basis, &self.forces[j], t),
        }
    }
}

fn project_load(disc: &Discretization, basis: &PodBasis, f: &Force, t: f64) -> Vec<f64> {
    let load = disc.load(|x| f.eval(x, t));
    basis.vectors().iter().map(|phi| dot(phi, &load)).collect()
}

/// L² projections of the first two levels.
pub fn rom_initialize(
    basis: &PodBasis,
    level0: &[Vec<f64>],
    level1: &[Vec<f64>],
    dt: f64,
) -> Result<ReducedEnsembleState> {
    let a0 = level0.iter().map(|u| basis.coefficients(u)).collect();
    let a1 = level1.iter().map(|u| basis.coefficients(u)).collect();
    EnsembleState::new(a0, a1, 1, dt)
}

/// Reduced ensemble trajectory. `coefficients[n][j]` is member `j` at level `n`.
#[derive(Debug, Clone)]
pub struct RomTrajectory {
    pub first_level: usize,
    pub coefficients: Vec<Vec<Vec<f64>>>,
    pub series: Vec<SeriesRow>,
    pub final_state: ReducedEnsembleState,
}

impl RomTrajectory {
    /// Reduced ensemble average at every recorded level.
    pub fn averages(&self) -> Vec<Vec<f64>> {
        self.coefficients.iter().map(|m| average(m)).collect()
    }
}

pub struct RomSolver<'a> {
    disc: &'a Discretization,
    basis: &'a PodBasis,
    ops: &'a ReducedOperators,
    nu: f64,
    dt: f64,
    forces: ReducedForces,
}

impl<'a> RomSolver<'a> {
    pub fn new(
        disc: &'a Discretization,
        basis: &'a PodBasis,
        ops: &'a ReducedOperators,
        nu: f64,
        dt: f64,
        forces: Vec<Force>,
    ) -> Result<Self> {
        if !(nu > 0.0) || !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("need nu > 0 and dt > 0, got {nu} and {dt}")));
        }
        if ops.dim() != basis.n_modes() {
            return Err(Error::Dimension("operators and basis differ in dimension".into()));
        }
        if forces.is_empty() {
            return Err(Error::InvalidArgument("an ensemble needs at least one member".into()));
        }
        let forces = ReducedForces::new(disc, basis, forces);
        Ok(Self { disc, basis, ops, nu, dt, forces })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn operators(&self) -> &ReducedOperators {
        self.ops
    }

    pub fn basis(&self) -> &PodBasis {
        self.basis
    }

    /// Reduced forcing of member `j` at time `t`.
    pub fn forcing(&self, j: usize, t: f64) -> Vec<f64> {
        self.forces.at(self.disc, self.basis, j, t)
    }

    /// One shared dense factorization of
    /// `G = (3/(2dt)) I + nu K_R + N_R(<a>^n)`, then one solve per member.
    pub fn step(&self, state: &mut ReducedEnsembleState) -> Result<()> {
        let r = self.ops.dim();
        let j_count = state.n_members();
        if j_count != self.forces.forces.len() {
            return Err(Error::Dimension("state and forces differ in member count".into()));
        }
        if state.current()[0].len() != r {
            return Err(Error::Dimension(format!("reduced state has length {}, basis {r}", state.current()[0].len())));
        }
        let next = state.n() + 1;
        let t_next = next as f64 * self.dt;
        let (mean, fluct) = compute_mean_fluct(state.current(), state.previous());
        let c = 3.0 / (2.0 * self.dt);
        let g = DMatrix::identity(r, r) * c + &self.ops.stiffness * self.nu + self.ops.convection_of(&mean);
        let lu = g.lu();

        let solved: Vec<Vec<f64>> = (0..j_count)
            .into_par_iter()
            .map(|j| {
                let (an, am) = (&state.current()[j], &state.previous()[j]);
                let ex = DVector::from_vec(extrapolate(an, am));
                let nx = self.ops.convection_of(&fluct[j]) * ex;
                let f = self.forcing(j, t_next);
                let rhs = DVector::from_fn(r, |i, _| f[i] + (4.0 * an[i] - am[i]) / (2.0 * self.dt) - nx[i]);
                let sol = lu.solve(&rhs).ok_or(Error::Solver {
                    step: Some(next),
                    message: "singular reduced system".into(),
                })?;
                if sol.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { step: next });
                }
                Ok(sol.as_slice().to_vec())
            })
            .collect::<Result<_>>()?;
        state.advance(solved);
        Ok(())
    }

    /// Steps to `t_final`, recording coefficients and lifted energy/enstrophy at every level.
    pub fn run(&self, mut state: ReducedEnsembleState, t_final: f64) -> Result<RomTrajectory> {
        let n_final = steps_for(t_final, self.dt)?;
        let first_level = state.n() - 1;
        let mut coefficients = vec![state.previous().to_vec(), state.current().to_vec()];
        while state.n() < n_final {
            self.step(&mut state)?;
            coefficients.push(state.current().to_vec());
        }
        let mut series = Vec::new();
        for (offset, members) in coefficients.iter().enumerate() {
            let step = first_level + offset;
            let time = step as f64 * self.dt;
            for (j, a) in members.iter().enumerate() {
                let (energy, enstrophy) = self.energy_enstrophy(a);
                series.push(SeriesRow { step, time, member: Some(j), energy, enstrophy });
            }
            let (energy, enstrophy) = self.energy_enstrophy(&average(members));
            series.push(SeriesRow { step, time, member: None, energy, enstrophy });
        }
        Ok(RomTrajectory { first_level, coefficients, series, final_state: state })
    }

    /// Energy `|a|^2 / 2` and enstrophy of the lifted field.
    pub fn energy_enstrophy(&self, a: &[f64]) -> (f64, f64) {
        let (_, enstrophy) = energy_enstrophy(self.disc.space(), &self.basis.lift(a), self.nu);
        (0.5 * dot(a, a), enstrophy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{trilinear, TaylorHoodSpace};
    use crate::mesh::Mesh;
    use crate::pod::{build_basis, SnapshotSet, DEFAULT_CUTOFF};

    fn setup(n_modes: usize) -> (Discretization, PodBasis) {
        let disc = Discretization::new(TaylorHoodSpace::new(Mesh::unit_square(4).unwrap())).unwrap();
        let loads = [
            disc.load(|[x, y]| [(3.0 * y).sin(), x * x]),
            disc.load(|[x, y]| [y * y - x, (2.0 * x).cos() * y]),
            disc.load(|[x, y]| [x * y, -(x + y).sin()]),
            disc.load(|[x, y]| [(x - 0.3).powi(3), y.exp()]),
            disc.load(|[x, y]| [(5.0 * x * y).sin(), x - y]),
        ];
        let cols = loads.iter().map(|l| disc.steady_stokes(l, 0.1).unwrap().0).collect();
        let snaps = SnapshotSet::new(cols, 1, 0.01, 1).unwrap();
        let basis = build_basis(&disc, &snaps, n_modes, DEFAULT_CUTOFF).unwrap();
        (disc, basis)
    }

    #[test]
    fn operator_structure() {
        let (disc, basis) = setup(4);
        let ops = ReducedOperators::new(&disc, &basis).unwrap();
        for k in 0..4 {
            for i in 0..4 {
                assert_eq!(ops.convection[k][(i, i)], 0.0);
                for j in 0..4 {
                    assert_eq!(ops.convection[k][(i, j)], -ops.convection[k][(j, i)]);
                }
            }
        }
        let g = basis.grad_norms();
        for i in 0..4 {
            assert!((ops.stiffness[(i, i)] - g[i] * g[i]).abs() < 1e-12 * g[i] * g[i]);
        }
        let one = ReducedOperators::new(&disc, &basis.truncate(1).unwrap()).unwrap();
        assert_eq!(one.convection[0][(0, 0)], 0.0);
    }

    #[test]
    fn reduced_trilinear_matches_full_space() {
        let (disc, basis) = setup(4);
        let ops = ReducedOperators::new(&disc, &basis).unwrap();
        let c = [0.3, -1.2, 0.7, 0.05];
        let a = [1.0, 0.4, -0.6, 2.0];
        let b = [-0.2, 0.9, 0.1, -1.1];
        let reduced = ops.trilinear(&c, &a, &b);
        let full = trilinear(disc.space(), &basis.lift(&c), &basis.lift(&a), &basis.lift(&b));
        assert!((reduced - full).abs() < 1e-10 * full.abs().max(1.0), "{reduced} vs {full}");
    }

    #[test]
    fn rejects_non_solenoidal_basis() {
        let disc = Discretization::new(TaylorHoodSpace::new(Mesh::unit_square(3).unwrap())).unwrap();
        let mut u = crate::fem::interpolate(disc.space(), |[x, y]| [x * (1.0 - x), y * (1.0 - y)]);
        disc.space().apply_no_slip(&mut u);
        let snaps = SnapshotSet::new(vec![u], 1, 0.01, 1).unwrap();
        let basis = build_basis(&disc, &snaps, 1, DEFAULT_CUTOFF).unwrap();
        assert!(matches!(ReducedOperators::new(&disc, &basis), Err(Error::BasisConsistency { index: 0, .. })));
    }

    #[test]
    fn single_mode_viscous_decay_follows_scalar_recurrence() {
        let (disc, basis) = setup(1);
        let ops = ReducedOperators::new(&disc, &basis).unwrap();
        let dt = 0.01;
        let k = ops.stiffness[(0, 0)];
        // 2 dt nu k = 0.8 keeps both BDF2 roots real and positive
        let nu = 0.4 / (dt * k);
        let solver = RomSolver::new(&disc, &basis, &ops, nu, dt, vec![Force::zero()]).unwrap();
        let state = EnsembleState::new(vec![vec![1.0]], vec![vec![0.9]], 1, dt).unwrap();
        let traj = solver.run(state, 0.2).unwrap();
        // oracle: (3 a^{n+1} - 4 a^n + a^{n-1}) / (2 dt) + nu k a^{n+1} = 0
        let (mut am, mut an) = (1.0, 0.9);
        for level in traj.coefficients.iter().skip(2) {
            let next = (4.0 * an - am) / (3.0 + 2.0 * dt * nu * k);
            assert!((level[0][0] - next).abs() < 1e-13);
            am = an;
            an = next;
        }
        let mags: Vec<f64> = traj.coefficients.iter().map(|l| l[0][0].abs()).collect();
        assert!(mags[2..].windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn identical_members_and_zero_data() {
        let (disc, basis) = setup(3);
        let ops = ReducedOperators::new(&disc, &basis).unwrap();
        let f = Force::steady(|[x, y]| [-y, x]);
        let solver = RomSolver::new(&disc, &basis, &ops, 0.05, 0.01, vec![f.clone(), f]).unwrap();
        let a = vec![0.3, -0.1, 0.2];
        let mut state = EnsembleState::new(vec![a.clone(), a.clone()], vec![a.clone(), a], 1, 0.01).unwrap();
        for _ in 0..10 {
            solver.step(&mut state).unwrap();
            assert_eq!(state.current()[0], state.current()[1]);
        }
        let zero = RomSolver::new(&disc, &basis, &ops, 0.05, 0.01, vec![Force::zero()]).unwrap();
        let z = EnsembleState::new(vec![vec![0.0; 3]], vec![vec![0.0; 3]], 1, 0.01).unwrap();
        let traj = zero.run(z, 0.05).unwrap();
        assert!(traj.coefficients.iter().flatten().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn initialization_is_projection() {
        let (disc, basis) = setup(3);
        let u0 = basis.lift(&[0.5, -0.25, 1.0]);
        let state = rom_initialize(&basis, &[u0.clone()], &[u0.clone()], 0.01).unwrap();
        let back = basis.lift(&state.previous()[0]);
        assert!(back.iter().zip(&u0).all(|(a, b)| (a - b).abs() < 1e-10));
        let a = &state.current()[0];
        assert!((0.5 * dot(a, a) - 0.5 * disc.l2_inner(&back, &back)).abs() < 1e-12);
    }
}
