//! Property tests for the structural invariants of meshes, assembly, POD and
//! the ensemble helpers.

use enspod::diagnostics::relative_error_l2t;
use enspod::ensemble::compute_mean_fluct;
use enspod::fem::quadrature::TriangleRule;
use enspod::fem::{convection_matrix, mass_matrix, stiffness_matrix};
use enspod::pod::{build_basis, stiffness_spectral_norm, SnapshotSet};
use enspod::{Discretization, Mesh, TaylorHoodSpace};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disc(n: usize) -> Discretization {
    Discretization::new(TaylorHoodSpace::new(Mesh::unit_square(n).unwrap())).unwrap()
}

fn random_field(d: &Discretization, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut u: Vec<f64> = (0..d.n_vel()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    d.space().apply_no_slip(&mut u);
    u
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn structured_meshes_partition_their_rectangle(
        n in 1usize..12,
        x0 in -5.0..5.0f64,
        w in 0.1..10.0f64,
        y0 in -5.0..5.0f64,
        h in 0.1..10.0f64,
    ) {
        let mesh = Mesh::structured_rectangle(n, [x0, x0 + w], [y0, y0 + h]).unwrap();
        prop_assert_eq!(mesh.n_triangles(), 2 * n * n);
        prop_assert!(((mesh.area() - w * h) / (w * h)).abs() <= 1e-12);
        for t in 0..mesh.n_triangles() {
            prop_assert!(mesh.triangle_area(t) > 0.0);
        }
        let v = mesh.vertices();
        for e in mesh.boundary_edges() {
            for &i in &e.vertices {
                let [x, y] = v[i];
                let gap = (x - x0).abs().min((x - x0 - w).abs()).min((y - y0).abs()).min((y - y0 - h).abs());
                prop_assert!(gap <= 1e-12 * (1.0 + x0.abs() + y0.abs() + w + h));
            }
        }
        let back = Mesh::parse(&mesh.to_msh2d()).unwrap();
        prop_assert_eq!(back.vertices(), mesh.vertices());
        prop_assert_eq!(back.triangles(), mesh.triangles());
        prop_assert!(((mesh.mesh_size() - (w * w + h * h).sqrt() / n as f64) / mesh.mesh_size()).abs() < 1e-12);
    }

    #[test]
    fn quadrature_integrates_quartics_exactly(
        coef in prop::collection::vec(-1.0..1.0f64, 15),
        corners in prop::collection::vec(-2.0..2.0f64, 6),
    ) {
        let (a, b, c) = ([corners[0], corners[1]], [corners[2], corners[3]], [corners[4], corners[5]]);
        let jac = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        prop_assume!(jac.abs() > 1e-2);
        // p(s, t) = sum c_k s^i t^j over i + j <= 4 in reference coordinates
        let exps: Vec<(u32, u32)> = (0..=4u32).flat_map(|d| (0..=d).map(move |i| (i, d - i))).collect();
        let p = |s: f64, t: f64| exps.iter().zip(&coef).map(|(&(i, j), k)| k * s.powi(i as i32) * t.powi(j as i32)).sum::<f64>();
        let exact: f64 = exps
            .iter()
            .zip(&coef)
            .map(|(&(i, j), k)| k * factorial(i) * factorial(j) / factorial(i + j + 2))
            .sum::<f64>()
            * jac.abs();
        let rule = TriangleRule::degree5();
        let area = 0.5 * jac.abs();
        let approx: f64 = rule.points.iter().zip(&rule.weights).map(|(l, w)| w * area * p(l[1], l[2])).sum();
        let scale = coef.iter().map(|k| k.abs()).sum::<f64>() * area;
        prop_assert!((approx - exact).abs() <= 1e-13 * scale.max(1e-300), "{} vs {}", approx, exact);
    }

    #[test]
    fn convection_is_skew_for_random_fields(n in 1usize..6, seed in any::<u64>()) {
        let d = disc(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, u) = (random_field(&d, &mut rng), random_field(&d, &mut rng));
        let n_w = convection_matrix(d.space(), &w);
        let val = n_w.bilinear(&u, &u);
        let bound = 1e-12 * max_abs(&w) * d.l2_inner(&u, &u);
        prop_assert!(val.abs() <= bound, "{} > {}", val.abs(), bound);
    }

    #[test]
    fn mass_is_spd_and_stiffness_psd(n in 1usize..6, seed in any::<u64>()) {
        let d = disc(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, a) = (mass_matrix(d.space()), stiffness_matrix(d.space()));
        prop_assert!(m.is_symmetric() && m.symmetry_residual() == 0.0);
        prop_assert!(a.is_symmetric() && a.symmetry_residual() == 0.0);
        let u: Vec<f64> = (0..d.n_vel()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scale = u.iter().map(|x| x * x).sum::<f64>();
        prop_assert!(m.bilinear(&u, &u) > 0.0);
        prop_assert!(a.bilinear(&u, &u) >= -1e-12 * scale * a.max_abs());
        // a second assembly is bit-identical
        let (m2, a2) = (mass_matrix(d.space()), stiffness_matrix(d.space()));
        prop_assert_eq!(m.values(), m2.values());
        prop_assert_eq!(a.values(), a2.values());
    }

    #[test]
    fn pod_bases_are_orthonormal_ordered_and_project_idempotently(
        n in 2usize..5,
        count in 2usize..10,
        seed in any::<u64>(),
        nu in 1e-3..10.0f64,
    ) {
        let d = disc(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let columns: Vec<Vec<f64>> = (0..count).map(|_| random_field(&d, &mut rng)).collect();
        let snaps = SnapshotSet::new(columns, 1, 0.1, 1).unwrap();
        let probe = build_basis(&d, &snaps, 0, 1e-12).unwrap();
        let r = probe.rank().min(6);
        let basis = build_basis(&d, &snaps, r, 1e-12).unwrap();

        prop_assert!(basis.spectrum().windows(2).all(|w| w[0] >= w[1]));
        let m = basis.mass_gram();
        let dev = (m - DMatrix::identity(r, r)).abs().max();
        prop_assert!(dev <= 1e-10, "orthonormality deviation {}", dev);

        let u = random_field(&d, &mut rng);
        let once = basis.lift(&basis.coefficients(&u));
        let twice = basis.lift(&basis.coefficients(&once));
        let diff: Vec<f64> = once.iter().zip(&twice).map(|(a, b)| a - b).collect();
        prop_assert!(d.l2_inner(&diff, &diff).sqrt() <= 1e-12 * d.l2_inner(&u, &u).sqrt().max(1.0));

        // ||phi||^2 + nu ||grad phi||^2 <= |||S_R||| ||phi||^2, and the
        // stiffness-only form ||grad phi||^2 <= |||K_R||| ||phi||^2
        let s = stiffness_spectral_norm(&basis, nu).unwrap();
        let k_max = basis.gradient_gram().clone().symmetric_eigen().eigenvalues.max();
        let a: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let phi = basis.lift(&a);
        let (l2, h1) = (d.l2_inner(&phi, &phi), d.h1_inner(&phi, &phi));
        prop_assert!(l2 + nu * h1 <= s * l2 * (1.0 + 1e-10));
        prop_assert!(h1 <= k_max * l2 * (1.0 + 1e-10));
    }

    #[test]
    fn fluctuations_sum_to_zero(members in 1usize..6, len in 1usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = || (0..members).map(|_| (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect::<Vec<Vec<f64>>>();
        let (cur, prev) = (gen(), gen());
        let (mean, fluct) = compute_mean_fluct(&cur, &prev);
        for i in 0..len {
            let s: f64 = fluct.iter().map(|f| f[i]).sum();
            prop_assert!(s.abs() <= 1e-12 * 30.0 * members as f64);
            let expected: f64 = (0..members).map(|j| 2.0 * cur[j][i] - prev[j][i]).sum::<f64>() / members as f64;
            prop_assert!((mean[i] - expected).abs() <= 1e-12 * 30.0);
        }
    }

    #[test]
    fn relative_error_is_a_nonnegative_ratio(levels in 2usize..6, seed in any::<u64>(), scale in -3.0..3.0f64) {
        let d = disc(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference: Vec<Vec<f64>> = (0..levels).map(|_| random_field(&d, &mut rng)).collect();
        prop_assert_eq!(relative_error_l2t(&d, &reference, &reference, 0.1).unwrap(), 0.0);
        let other: Vec<Vec<f64>> = reference.iter().map(|u| u.iter().map(|x| x * scale).collect()).collect();
        let e = relative_error_l2t(&d, &reference, &other, 0.1).unwrap();
        prop_assert!((e - (1.0 - scale).abs()).abs() <= 1e-12 * (1.0 + scale.abs()));
    }
}
