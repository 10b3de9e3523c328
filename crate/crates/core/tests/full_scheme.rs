//! Whole-run checks of the full ensemble scheme.

use enspod::diagnostics::{empirical_inverse_constant, energy_bound, full_stability, DualNorm, MemberHistory, Thresholds};
use enspod::ensemble::{extrapolate, EnsembleSolver};
use enspod::problem::{offset_circles_base_force, ManufacturedSolution};
use enspod::{Discretization, Mesh, TaylorHoodSpace};

fn square(n: usize) -> Discretization {
    Discretization::new(TaylorHoodSpace::new(Mesh::unit_square(n).unwrap())).unwrap()
}

#[test]
fn energy_bound_holds_when_the_monitor_is_satisfied() {
    let disc = square(8);
    let (nu, dt) = (0.1, 0.01);
    let members = [
        ManufacturedSolution { nu, omega: 3.0 * std::f64::consts::PI, amplitude: 1.0 },
        ManufacturedSolution { nu, omega: 3.0 * std::f64::consts::PI, amplitude: 0.9 },
    ];
    let initial: Vec<Vec<f64>> = members
        .iter()
        .map(|m| disc.steady_stokes(&disc.load(|x| m.stokes_load(x, 0.0)), nu).unwrap().0)
        .collect();
    let solver = EnsembleSolver::new(&disc, nu, dt, members.iter().map(|m| m.force()).collect()).unwrap();
    let mut state = solver.bootstrap(initial).unwrap();
    let mut levels = vec![state.previous().to_vec(), state.current().to_vec()];
    for _ in 1..30 {
        solver.step(&mut state).unwrap();
        levels.push(state.current().to_vec());
    }

    let fields: Vec<Vec<f64>> = levels.iter().flatten().cloned().collect();
    let s = empirical_inverse_constant(&disc, &fields, nu);
    let th = Thresholds::default();
    let rows: Vec<_> = (1..levels.len() - 1)
        .flat_map(|n| full_stability(&disc, s, &levels[n - 1], &levels[n], n, dt, nu, &th))
        .collect();
    assert!(rows.iter().all(|r| r.ok41), "monitor not satisfied; max {}", rows.iter().fold(0.0f64, |m, r| m.max(r.ind41)));

    let dual = DualNorm::new(&disc).unwrap();
    for (j, m) in members.iter().enumerate() {
        let mut h = MemberHistory::default();
        for (n, level) in levels.iter().enumerate() {
            let u = &level[j];
            h.l2_sq.push(disc.l2_inner(u, u));
            h.grad_sq.push(disc.h1_inner(u, u));
            h.extrap_sq.push(if n == 0 {
                0.0
            } else {
                let e = extrapolate(u, &levels[n - 1][j]);
                disc.l2_inner(&e, &e)
            });
            h.dual_sq.push(dual.squared(&disc.load(|x| m.forcing(x, n as f64 * dt))));
        }
        let check = energy_bound(&h, dt, nu);
        assert_eq!(check.checked_levels, levels.len() - 2);
        assert_eq!(check.violations, 0, "member {j}: max ratio {}", check.max_ratio);
    }
}

#[test]
fn default_cadence_gives_126_snapshots_per_member() {
    // T = 5 with dt = 0.01 and every 4th level stored: levels 0, 4, ..., 500.
    let disc = square(2);
    let solver = EnsembleSolver::new(&disc, 0.02, 0.01, vec![offset_circles_base_force(); 2]).unwrap();
    let zero = vec![vec![0.0; disc.n_vel()]; 2];
    let state = solver.bootstrap(zero).unwrap();
    let (traj, snaps) = solver.run(state, 5.0, 4).unwrap();
    assert_eq!(snaps.n_members(), 2);
    assert_eq!(snaps.per_member(), 126);
    assert_eq!(traj.averages.len(), 501);
    assert_eq!(traj.final_state.n(), 500);
}

#[test]
fn reruns_are_bit_identical() {
    let disc = square(4);
    let run = || {
        let forces = vec![offset_circles_base_force(); 3];
        let solver = EnsembleSolver::new(&disc, 0.05, 0.02, forces).unwrap();
        let initial: Vec<Vec<f64>> = [0.5, 1.0, 1.5]
            .iter()
            .map(|&s| {
                let load = disc.load(|[x, y]| [-s * y, s * x]);
                disc.steady_stokes(&load, 1.0).unwrap().0
            })
            .collect();
        let state = solver.bootstrap(initial).unwrap();
        solver.run(state, 0.2, 2).unwrap().1
    };
    let (a, b) = (run(), run());
    for (x, y) in a.columns().iter().zip(b.columns()) {
        assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
