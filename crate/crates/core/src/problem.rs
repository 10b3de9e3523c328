//! Body forces and reference solutions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

type ForceFn = dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync;

/// A body force `f(x, t)`. Steady forces let callers cache load vectors.
#[derive(Clone)]
pub struct Force {
    f: Arc<ForceFn>,
    time_dependent: bool,
}

impl fmt::Debug for Force {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Force").field("time_dependent", &self.time_dependent).finish_non_exhaustive()
    }
}

impl Force {
    pub fn steady(f: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(move |x, _| f(x)), time_dependent: false }
    }

    pub fn unsteady(f: impl Fn([f64; 2], f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), time_dependent: true }
    }

    pub fn zero() -> Self {
        Self::steady(|_| [0.0, 0.0])
    }

    pub fn eval(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        (self.f)(x, t)
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }
}

/// Counterclockwise rotational force `(-4y(1 - x² - y²), 4x(1 - x² - y²))`.
pub fn offset_circles_force([x, y]: [f64; 2], _t: f64) -> [f64; 2] {
    let s = 4.0 * (1.0 - x * x - y * y);
    [-y * s, x * s]
}

/// Perturbation direction `(sin 3πx sin 3πy, cos 3πx cos 3πy)`.
pub fn perturbation([x, y]: [f64; 2]) -> [f64; 2] {
    let (a, b) = (3.0 * PI * x, 3.0 * PI * y);
    [a.sin() * b.sin(), a.cos() * b.cos()]
}

/// `f + eps * perturbation`, used to generate perturbed initial conditions.
pub fn perturbed_offset_circles_force(eps: f64) -> Force {
    Force::steady(move |x| {
        let f = offset_circles_force(x, 0.0);
        let p = perturbation(x);
        [f[0] + eps * p[0], f[1] + eps * p[1]]
    })
}

pub fn offset_circles_base_force() -> Force {
    Force::steady(|x| offset_circles_force(x, 0.0))
}

/// Divergence-free manufactured solution on the unit square with zero
/// boundary values: stream function `sin²(πx) sin²(πy) cos(ωt)`, zero pressure,
/// and the forcing that makes it an exact Navier-Stokes solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedSolution {
    pub nu: f64,
    pub omega: f64,
    pub amplitude: f64,
}

impl ManufacturedSolution {
    fn time_factor(&self, t: f64) -> (f64, f64) {
        let g = self.amplitude * (self.omega * t).cos();
        let dg = -self.amplitude * self.omega * (self.omega * t).sin();
        (g, dg)
    }

    /// `A(s) = sin²(πs)` and its first three derivatives.
    fn profile(s: f64) -> [f64; 4] {
        let sn = (PI * s).sin();
        let (s2, c2) = ((2.0 * PI * s).sin(), (2.0 * PI * s).cos());
        [sn * sn, PI * s2, 2.0 * PI * PI * c2, -4.0 * PI.powi(3) * s2]
    }

    pub fn velocity(&self, [x, y]: [f64; 2], t: f64) -> [f64; 2] {
        let (g, _) = self.time_factor(t);
        let a = Self::profile(x);
        let b = Self::profile(y);
        [a[0] * b[1] * g, -a[1] * b[0] * g]
    }

    pub fn forcing(&self, [x, y]: [f64; 2], t: f64) -> [f64; 2] {
        let (g, dg) = self.time_factor(t);
        let a = Self::profile(x);
        let b = Self::profile(y);
        let dt = [a[0] * b[1] * dg, -a[1] * b[0] * dg];
        let lap = [(a[2] * b[1] + a[0] * b[3]) * g, -(a[3] * b[0] + a[1] * b[2]) * g];
        let conv = [
            g * g * a[0] * a[1] * (b[1] * b[1] - b[0] * b[2]),
            g * g * b[0] * b[1] * (a[1] * a[1] - a[0] * a[2]),
        ];
        [dt[0] + conv[0] - self.nu * lap[0], dt[1] + conv[1] - self.nu * lap[1]]
    }

    /// `-nu Δu(·, t)`, the load whose Stokes solution approximates `u(·, t)`.
    pub fn stokes_load(&self, [x, y]: [f64; 2], t: f64) -> [f64; 2] {
        let (g, _) = self.time_factor(t);
        let a = Self::profile(x);
        let b = Self::profile(y);
        [-self.nu * (a[2] * b[1] + a[0] * b[3]) * g, self.nu * (a[3] * b[0] + a[1] * b[2]) * g]
    }

    pub fn force(&self) -> Force {
        let m = *self;
        Force::unsteady(move |x, t| m.forcing(x, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences of the velocity field, independent of the closed form.
    fn fd_residual(m: &ManufacturedSolution, x: [f64; 2], t: f64) -> [f64; 2] {
        let h = 1e-4;
        let u = |x: [f64; 2], t: f64| m.velocity(x, t);
        let d = |c: usize, dir: usize, x: [f64; 2]| {
            let mut xp = x;
            let mut xm = x;
            xp[dir] += h;
            xm[dir] -= h;
            (u(xp, t)[c] - u(xm, t)[c]) / (2.0 * h)
        };
        let dd = |c: usize, dir: usize| {
            let mut xp = x;
            let mut xm = x;
            xp[dir] += h;
            xm[dir] -= h;
            (u(xp, t)[c] - 2.0 * u(x, t)[c] + u(xm, t)[c]) / (h * h)
        };
        let v = u(x, t);
        let mut out = [0.0; 2];
        for c in 0..2 {
            let ut = (u(x, t + h)[c] - u(x, t - h)[c]) / (2.0 * h);
            let conv = v[0] * d(c, 0, x) + v[1] * d(c, 1, x);
            let lap = dd(c, 0) + dd(c, 1);
            out[c] = ut + conv - m.nu * lap;
        }
        out
    }

    #[test]
    fn forcing_matches_finite_differences() {
        let m = ManufacturedSolution { nu: 0.1, omega: 3.0, amplitude: 1.0 };
        for &(x, y, t) in &[(0.3, 0.7, 0.2), (0.55, 0.1, 1.3), (0.9, 0.45, 0.0)] {
            let f = m.forcing([x, y], t);
            let r = fd_residual(&m, [x, y], t);
            assert!((f[0] - r[0]).abs() < 1e-4 && (f[1] - r[1]).abs() < 1e-4, "{f:?} vs {r:?}");
        }
    }

    #[test]
    fn manufactured_velocity_is_solenoidal_and_vanishes_on_boundary() {
        let m = ManufacturedSolution { nu: 0.1, omega: 3.0, amplitude: 1.0 };
        let h = 1e-5;
        for &(x, y) in &[(0.3, 0.7), (0.12, 0.81)] {
            let div = (m.velocity([x + h, y], 0.4)[0] - m.velocity([x - h, y], 0.4)[0]) / (2.0 * h)
                + (m.velocity([x, y + h], 0.4)[1] - m.velocity([x, y - h], 0.4)[1]) / (2.0 * h);
            assert!(div.abs() < 1e-6);
        }
        for s in [0.0, 0.25, 0.5, 1.0] {
            for p in [[s, 0.0], [s, 1.0], [0.0, s], [1.0, s]] {
                let v = m.velocity(p, 0.3);
                assert!(v[0].abs() < 1e-14 && v[1].abs() < 1e-14);
            }
        }
    }

    #[test]
    fn base_force_rotates_counterclockwise() {
        let f = offset_circles_force([0.5, 0.0], 0.0);
        assert!(f[0] == 0.0 && f[1] > 0.0);
        let g = perturbed_offset_circles_force(0.0);
        assert_eq!(g.eval([0.3, -0.2], 1.0), offset_circles_force([0.3, -0.2], 0.0));
    }
}
