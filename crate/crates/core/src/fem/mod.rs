//! Taylor-Hood P2-P1 finite elements: spaces, quadrature, operator assembly,
//! norms and the saddle-point solver.

pub mod assembly;
pub mod norms;
pub mod quadrature;
pub mod saddle;
pub mod space;
pub mod sparse;

pub use assembly::{
    convection_matrix, convection_matrix_divergence_form, divergence_matrix, interpolate, load_vector,
    mass_matrix, stiffness_matrix, trilinear,
};
pub use norms::{norms, Norms};
pub use saddle::{SaddleFactorization, SaddleSystem};
pub use space::TaylorHoodSpace;
pub use sparse::SparseOperator;

use crate::error::{Error, Result};

/// A space together with the operators every solver needs: scalar mass and
/// stiffness blocks, the divergence matrix and the factorization structure of
/// the saddle-point system. Built once per mesh, immutable afterwards.
pub struct Discretization {
    space: TaylorHoodSpace,
    mass: Vec<f64>,
    stiffness: Vec<f64>,
    divergence: SparseOperator,
    pressure_mean: Vec<f64>,
    saddle: SaddleSystem,
}

impl Discretization {
    pub fn new(space: TaylorHoodSpace) -> Result<Self> {
        let mass = assembly::scalar_mass_values(&space);
        let stiffness = assembly::scalar_stiffness_values(&space);
        let divergence = divergence_matrix(&space);
        let pressure_mean = assembly::pressure_mean_vector(&space);
        let saddle = SaddleSystem::new(&space, &divergence, &pressure_mean)?;
        Ok(Self { space, mass, stiffness, divergence, pressure_mean, saddle })
    }

    pub fn space(&self) -> &TaylorHoodSpace {
        &self.space
    }

    pub fn n_vel(&self) -> usize {
        self.space.n_vel()
    }

    pub fn scalar_mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn scalar_stiffness(&self) -> &[f64] {
        &self.stiffness
    }

    pub fn divergence(&self) -> &SparseOperator {
        &self.divergence
    }

    pub fn pressure_mean(&self) -> &[f64] {
        &self.pressure_mean
    }

    pub fn saddle(&self) -> &SaddleSystem {
        &self.saddle
    }

    pub fn mass_matrix(&self) -> SparseOperator {
        SparseOperator::block_diag2(self.space.pattern(), &self.mass, true)
    }

    pub fn stiffness_matrix(&self) -> SparseOperator {
        SparseOperator::block_diag2(self.space.pattern(), &self.stiffness, true)
    }

    /// `y = diag(S, S) x` for a scalar block given on the space's pattern.
    pub fn apply_block_into(&self, block: &[f64], x: &[f64], y: &mut [f64]) {
        let p = self.space.pattern();
        let ns = self.space.n_scalar();
        assert_eq!(x.len(), 2 * ns);
        assert_eq!(y.len(), 2 * ns);
        for c in 0..2 {
            let off = c * ns;
            for r in 0..ns {
                let mut s = 0.0;
                for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                    s += block[k] * x[off + p.col_idx[k]];
                }
                y[off + r] = s;
            }
        }
    }

    pub fn apply_block(&self, block: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_block_into(block, x, &mut y);
        y
    }

    pub fn mass_mul(&self, x: &[f64]) -> Vec<f64> {
        self.apply_block(&self.mass, x)
    }

    pub fn stiffness_mul(&self, x: &[f64]) -> Vec<f64> {
        self.apply_block(&self.stiffness, x)
    }

    /// `(u, v)` in L².
    pub fn l2_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.mass_mul(v))
    }

    /// `(grad u, grad v)`.
    pub fn h1_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.stiffness_mul(v))
    }

    /// Scalar block of `N(w)` written into `out`.
    pub fn convection_block_into(&self, w: &[f64], out: &mut [f64]) {
        assembly::scalar_convection_values_into(&self.space, w, out);
    }

    /// `||B u||` (Euclidean norm of the discrete divergence).
    pub fn divergence_residual(&self, u: &[f64]) -> f64 {
        self.divergence.mul_vec(u).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn load(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        load_vector(&self.space, f)
    }

    /// Steady Stokes `nu (grad u, grad v) - (p, div v) = <load, v>`, `(div u, q) = 0`,
    /// no-slip on the Dirichlet nodes, zero-mean pressure.
    pub fn steady_stokes(&self, load: &[f64], nu: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(nu > 0.0) {
            return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")));
        }
        let block: Vec<f64> = self.stiffness.iter().map(|a| nu * a).collect();
        let fact = self.saddle.factorize(&block, None)?;
        self.saddle.solve(&fact, load, None)
    }
}

/// Steady Stokes solve for an analytic body force.
pub fn solve_steady_stokes(
    space: &TaylorHoodSpace,
    f: impl Fn([f64; 2]) -> [f64; 2],
    nu: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let disc = Discretization::new(space.clone())?;
    let load = disc.load(f);
    disc.steady_stokes(&load, nu)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
