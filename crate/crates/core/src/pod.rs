//! Proper orthogonal decomposition by the method of snapshots.
//!
//! The correlation matrix `C = A^T M A` is diagonalized, `C a_i = lambda_i a_i`
//! with `|a_i| = 1`, and the modes are `phi_i = A a_i / sqrt(lambda_i)`.
//! The whole eigen-decomposition is kept so that projection-error tail sums can
//! be evaluated for any truncation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fem::{dot, Discretization};

/// Default relative eigenvalue cutoff `lambda_i > cutoff * lambda_1`.
pub const DEFAULT_CUTOFF: f64 = 1e-12;

/// Snapshot columns stored member-major: all levels of member 0, then member 1, ...
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    n_vel: usize,
    n_members: usize,
    per_member: usize,
    dt: f64,
    stride: usize,
    columns: Vec<Vec<f64>>,
}

impl SnapshotSet {
    pub fn new(columns: Vec<Vec<f64>>, n_members: usize, dt: f64, stride: usize) -> Result<Self> {
        if n_members == 0 || columns.is_empty() {
            return Err(Error::InvalidArgument("a snapshot set needs at least one column".into()));
        }
        if columns.len() % n_members != 0 {
            return Err(Error::Dimension(format!(
                "{} columns cannot be split evenly over {n_members} members",
                columns.len()
            )));
        }
        let n_vel = columns[0].len();
        if columns.iter().any(|c| c.len() != n_vel) {
            return Err(Error::Dimension("snapshot columns have different lengths".into()));
        }
        let per_member = columns.len() / n_members;
        Ok(Self { n_vel, n_members, per_member, dt, stride, columns })
    }

    pub fn from_members(members: Vec<Vec<Vec<f64>>>, dt: f64, stride: usize) -> Result<Self> {
        let n_members = members.len();
        if members.iter().any(|m| m.len() != members[0].len()) {
            return Err(Error::Dimension("members have different snapshot counts".into()));
        }
        Self::new(members.into_iter().flatten().collect(), n_members, dt, stride)
    }

    pub fn n_vel(&self) -> usize {
        self.n_vel
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    /// Snapshots per member, `N_S + 1`.
    pub fn per_member(&self) -> usize {
        self.per_member
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, member: usize, level: usize) -> &[f64] {
        &self.columns[member * self.per_member + level]
    }

    /// 64-bit FNV-1a hash of the dimensions and the bit patterns of every entry;
    /// stable across builds so it can be persisted with a basis.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |word: u64| {
            for b in word.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        feed(self.n_vel as u64);
        feed(self.columns.len() as u64);
        for c in &self.columns {
            for v in c {
                feed(v.to_bits());
            }
        }
        h
    }
}

/// `C = A^T M A`, exactly symmetric.
pub fn correlation_matrix(disc: &Discretization, snapshots: &SnapshotSet) -> DMatrix<f64> {
    gram(snapshots.columns(), |u| disc.mass_mul(u))
}

fn gram(columns: &[Vec<f64>], apply: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let n = columns.len();
    let images: Vec<Vec<f64>> = columns.iter().map(|c| apply(c)).collect();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(&columns[i], &images[j]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

#[derive(Debug, Clone)]
pub struct PodBasis {
    n_vel: usize,
    vectors: Vec<Vec<f64>>,
    mass_vectors: Vec<Vec<f64>>,
    /// Full spectrum of `C`, descending.
    eigenvalues: Vec<f64>,
    /// `a_i^T (A^T K A) a_i = lambda_i ||grad phi_i||^2` for the full spectrum.
    gradient_energies: Vec<f64>,
    rank: usize,
    gradient_gram: DMatrix<f64>,
    n_snapshots: usize,
    fingerprint: u64,
}

/// Builds `r` modes from the snapshots; `cutoff` is relative to `lambda_1`.
pub fn build_basis(disc: &Discretization, snapshots: &SnapshotSet, r: usize, cutoff: f64) -> Result<PodBasis> {
    if snapshots.n_vel() != disc.n_vel() {
        return Err(Error::Dimension(format!(
            "snapshots have length {}, the space has {} velocity dofs",
            snapshots.n_vel(),
            disc.n_vel()
        )));
    }
    let cols = snapshots.columns();
    let count = cols.len();
    let c = correlation_matrix(disc, snapshots);
    let g = gram(cols, |u| disc.stiffness_mul(u));

    let eig = c.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let coefficients: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let mut a: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            fix_sign(&mut a);
            a
        })
        .collect();

    let lambda1 = eigenvalues[0];
    let rank = if lambda1 > 0.0 { eigenvalues.iter().take_while(|&&l| l > cutoff * lambda1).count() } else { 0 };
    if r > rank {
        return Err(Error::Rank { requested: r, available: rank });
    }

    let gradient_energies = coefficients
        .iter()
        .map(|a| {
            let ga: Vec<f64> = (0..count).map(|i| (0..count).map(|j| g[(i, j)] * a[j]).sum()).collect();
            dot(a, &ga)
        })
        .collect();

    let n_vel = snapshots.n_vel();
    let vectors: Vec<Vec<f64>> = (0..r)
        .map(|i| {
            let s = 1.0 / eigenvalues[i].sqrt();
            let mut phi = vec![0.0; n_vel];
            for (col, &a) in cols.iter().zip(&coefficients[i]) {
                for (p, u) in phi.iter_mut().zip(col) {
                    *p += a * u;
                }
            }
            phi.iter_mut().for_each(|p| *p *= s);
            phi
        })
        .collect();
    let mass_vectors = vectors.iter().map(|v| disc.mass_mul(v)).collect();
    let gradient_gram = gram(&vectors, |u| disc.stiffness_mul(u));

    Ok(PodBasis {
        n_vel,
        vectors,
        mass_vectors,
        eigenvalues,
        gradient_energies,
        rank,
        gradient_gram,
        n_snapshots: count,
        fingerprint: snapshots.fingerprint(),
    })
}

/// Makes the first significant component positive. Components below
/// `1e-10 * max |a_k|` count as zero so roundoff cannot flip the sign.
fn fix_sign(a: &mut [f64]) {
    let max = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = a.iter().find(|v| v.abs() > 1e-10 * max) {
        if *first < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

impl PodBasis {
    /// Rebuilds a basis from persisted parts; the mass images and `K_R` are
    /// recomputed on `disc`.
    pub fn from_parts(
        disc: &Discretization,
        vectors: Vec<Vec<f64>>,
        spectrum: Vec<f64>,
        gradient_energies: Vec<f64>,
        rank: usize,
        fingerprint: u64,
    ) -> Result<PodBasis> {
        let n_vel = disc.n_vel();
        if vectors.iter().any(|v| v.len() != n_vel) {
            return Err(Error::Dimension(format!("basis vectors must have length {n_vel}")));
        }
        if spectrum.len() != gradient_energies.len() || vectors.len() > rank || rank > spectrum.len() {
            return Err(Error::Dimension(format!(
                "{} modes, rank {rank}, {} eigenvalues and {} gradient energies are inconsistent",
                vectors.len(),
                spectrum.len(),
                gradient_energies.len()
            )));
        }
        let mass_vectors = vectors.iter().map(|v| disc.mass_mul(v)).collect();
        let gradient_gram = gram(&vectors, |u| disc.stiffness_mul(u));
        Ok(PodBasis {
            n_vel,
            vectors,
            mass_vectors,
            n_snapshots: spectrum.len(),
            eigenvalues: spectrum,
            gradient_energies,
            rank,
            gradient_gram,
            fingerprint,
        })
    }

    /// Hash of the snapshot set the basis was built from.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// `a_i^T (A^T K A) a_i` for every eigenpair of the correlation matrix.
    pub fn gradient_energies(&self) -> &[f64] {
        &self.gradient_energies
    }

    /// Number of modes held.
    pub fn n_modes(&self) -> usize {
        self.vectors.len()
    }

    pub fn n_vel(&self) -> usize {
        self.n_vel
    }

    /// Number of eigenvalues above the cutoff.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn mass_vectors(&self) -> &[Vec<f64>] {
        &self.mass_vectors
    }

    /// All eigenvalues of the correlation matrix, descending.
    pub fn spectrum(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvalues of the retained modes.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.n_modes()]
    }

    pub fn n_snapshots(&self) -> usize {
        self.n_snapshots
    }

    /// `||grad phi_i||` for the retained modes.
    pub fn grad_norms(&self) -> Vec<f64> {
        (0..self.n_modes()).map(|i| self.gradient_gram[(i, i)].sqrt()).collect()
    }

    /// `K_R = [(grad phi_j, grad phi_i)]`.
    pub fn gradient_gram(&self) -> &DMatrix<f64> {
        &self.gradient_gram
    }

    /// `M_R = [(phi_j, phi_i)]`, the identity up to roundoff.
    pub fn mass_gram(&self) -> DMatrix<f64> {
        let r = self.n_modes();
        DMatrix::from_fn(r, r, |i, j| dot(&self.vectors[i], &self.mass_vectors[j]))
    }

    /// `S_R = M_R + nu K_R`.
    pub fn s_matrix(&self, nu: f64) -> DMatrix<f64> {
        let mut s = self.mass_gram() + &self.gradient_gram * nu;
        symmetrize(&mut s);
        s
    }

    /// The first `r` modes.
    pub fn truncate(&self, r: usize) -> Result<PodBasis> {
        if r > self.n_modes() {
            return Err(Error::Rank { requested: r, available: self.n_modes() });
        }
        Ok(PodBasis {
            n_vel: self.n_vel,
            vectors: self.vectors[..r].to_vec(),
            mass_vectors: self.mass_vectors[..r].to_vec(),
            eigenvalues: self.eigenvalues.clone(),
            gradient_energies: self.gradient_energies.clone(),
            rank: self.rank,
            gradient_gram: self.gradient_gram.view((0, 0), (r, r)).into_owned(),
            n_snapshots: self.n_snapshots,
            fingerprint: self.fingerprint,
        })
    }

    /// Reduced coefficients `a_i = (u, phi_i)`.
    pub fn coefficients(&self, u: &[f64]) -> Vec<f64> {
        self.mass_vectors.iter().map(|m| dot(m, u)).collect()
    }

    /// `sum_i a_i phi_i`.
    pub fn lift(&self, a: &[f64]) -> Vec<f64> {
        assert_eq!(a.len(), self.n_modes());
        let mut u = vec![0.0; self.n_vel()];
        for (phi, &c) in self.vectors.iter().zip(a) {
            for (x, p) in u.iter_mut().zip(phi) {
                *x += c * p;
            }
        }
        u
    }

    fn check_source(&self, snapshots: &SnapshotSet) -> Result<()> {
        if snapshots.len() != self.n_snapshots || snapshots.fingerprint() != self.fingerprint {
            return Err(Error::InvalidArgument("basis was not built from these snapshots".into()));
        }
        Ok(())
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// L² projection onto the first `basis.n_modes()` modes: coefficients and lifted field.
pub fn project_l2(basis: &PodBasis, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = basis.coefficients(u);
    let lifted = basis.lift(&a);
    (a, lifted)
}

/// Mean squared L² projection error of the snapshots onto the first `r` modes,
/// evaluated directly, and the eigenvalue tail `sum_{i>r} lambda_i`, both
/// divided by the snapshot count.
pub fn tail_identity_l2(
    disc: &Discretization,
    snapshots: &SnapshotSet,
    basis: &PodBasis,
    r: usize,
) -> Result<(f64, f64)> {
    tail_identity(disc, snapshots, basis, r, false)
}

/// As [`tail_identity_l2`] with the gradient seminorm; the tail is
/// `sum_{i>r} lambda_i ||grad phi_i||^2`.
pub fn tail_identity_h1(
    disc: &Discretization,
    snapshots: &SnapshotSet,
    basis: &PodBasis,
    r: usize,
) -> Result<(f64, f64)> {
    tail_identity(disc, snapshots, basis, r, true)
}

fn tail_identity(
    disc: &Discretization,
    snapshots: &SnapshotSet,
    basis: &PodBasis,
    r: usize,
    gradient: bool,
) -> Result<(f64, f64)> {
    basis.check_source(snapshots)?;
    let sub = basis.truncate(r)?;
    let count = snapshots.len() as f64;
    let mut lhs = 0.0;
    for u in snapshots.columns() {
        let (_, pu) = project_l2(&sub, u);
        let e: Vec<f64> = u.iter().zip(&pu).map(|(a, b)| a - b).collect();
        lhs += if gradient { disc.h1_inner(&e, &e) } else { disc.l2_inner(&e, &e) };
    }
    let tail = if gradient { &basis.gradient_energies } else { &basis.eigenvalues };
    let rhs: f64 = tail[r..].iter().sum();
    Ok((lhs / count, rhs / count))
}

/// `|||S_R|||_2` by power iteration, after checking `|||M_R|||_2 = 1`.
pub fn stiffness_spectral_norm(basis: &PodBasis, nu: f64) -> Result<f64> {
    let m = basis.mass_gram();
    let dev = (power_iteration(&m)? - 1.0).abs();
    if dev > 1e-10 {
        return Err(Error::Orthonormality { deviation: dev });
    }
    power_iteration(&basis.s_matrix(nu))
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix. Stops once
/// `|A v - lambda v| <= 1e-8 lambda`, which puts the Rayleigh quotient within
/// that relative distance of an eigenvalue.
pub fn power_iteration(a: &DMatrix<f64>) -> Result<f64> {
    const MAX_ITER: usize = 10_000;
    let n = a.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    for _ in 0..MAX_ITER {
        let w = a * &v;
        let lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let residual = (&w - &v * lambda).norm();
        if residual <= 1e-8 * lambda.abs() {
            return Ok(lambda);
        }
        v = w / norm;
    }
    Err(Error::NoConvergence("power iteration", MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::TaylorHoodSpace;
    use crate::mesh::Mesh;
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

    fn single(cols: Vec<Vec<f64>>) -> SnapshotSet {
        SnapshotSet::new(cols, 1, 0.01, 1).unwrap()
    }

    /// Cyclic Jacobi eigen-decomposition, an independent dense oracle.
    fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
        for _sweep in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let (vp, vq) = (row[p], row[q]);
                        row[p] = c * vp - s * vq;
                        row[q] = s * vp + c * vq;
                    }
                }
            }
        }
        let mut pairs: Vec<(f64, Vec<f64>)> =
            (0..n).map(|k| (a[k][k], (0..n).map(|i| v[i][k]).collect())).collect();
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
        pairs.into_iter().unzip()
    }

    #[test]
    fn single_snapshot_correlation() {
        let d = disc(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_field(&d, &mut rng);
        let c = correlation_matrix(&d, &single(vec![u.clone()]));
        assert!((c[(0, 0)] - d.l2_inner(&u, &u)).abs() < 1e-14);
    }

    #[test]
    fn duplicated_snapshot_gives_rank_one() {
        let d = disc(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = random_field(&d, &mut rng);
        let s = single(vec![e.clone(), e.clone()]);
        let b = build_basis(&d, &s, 1, DEFAULT_CUTOFF).unwrap();
        assert_eq!(b.rank(), 1);
        let ne = d.l2_inner(&e, &e);
        assert!((b.spectrum()[0] - 2.0 * ne).abs() < 1e-12 * ne);
        assert!(b.spectrum()[1].abs() <= 1e-12 * b.spectrum()[0]);
        for (p, x) in b.vectors()[0].iter().zip(&e) {
            assert!((p - x / ne.sqrt()).abs() < 1e-12);
        }
        assert!(matches!(build_basis(&d, &s, 2, DEFAULT_CUTOFF), Err(Error::Rank { requested: 2, available: 1 })));
    }

    #[test]
    fn orthogonal_snapshots_are_their_own_modes() {
        let d = disc(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_field(&d, &mut rng);
        let mut b = random_field(&d, &mut rng);
        let k = d.l2_inner(&a, &b) / d.l2_inner(&a, &a);
        b.iter_mut().zip(&a).for_each(|(x, y)| *x -= k * y);
        let na = d.l2_inner(&a, &a).sqrt();
        let nb = d.l2_inner(&b, &b).sqrt();
        let a: Vec<f64> = a.iter().map(|x| 2.0 * x / na).collect();
        let b: Vec<f64> = b.iter().map(|x| x / nb).collect();
        let basis = build_basis(&d, &single(vec![b.clone(), a.clone()]), 2, DEFAULT_CUTOFF).unwrap();
        assert!((basis.spectrum()[0] - 4.0).abs() < 1e-12 && (basis.spectrum()[1] - 1.0).abs() < 1e-12);
        for (p, x) in basis.vectors()[0].iter().zip(&a) {
            assert!((p - x / 2.0).abs() < 1e-12);
        }
        for (p, x) in basis.vectors()[1].iter().zip(&b) {
            assert!((p - x).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_matches_dense_jacobi_oracle() {
        let d = disc(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cols: Vec<Vec<f64>> = (0..20).map(|_| random_field(&d, &mut rng)).collect();
        let s = SnapshotSet::new(cols.clone(), 2, 0.01, 1).unwrap();
        let basis = build_basis(&d, &s, 8, DEFAULT_CUTOFF).unwrap();
        let c = correlation_matrix(&d, &s);
        let trace: f64 = cols.iter().map(|u| d.l2_inner(u, u)).sum();
        assert!((c.trace() - trace).abs() < 1e-10 * trace);
        let dense: Vec<Vec<f64>> = (0..20).map(|i| (0..20).map(|j| c[(i, j)]).collect()).collect();
        let (vals, vecs) = jacobi(dense);
        for i in 0..20 {
            assert!((vals[i] - basis.spectrum()[i]).abs() < 1e-8 * vals[0]);
        }
        for i in 0..8 {
            let mut a = vecs[i].clone();
            fix_sign(&mut a);
            let mut phi = vec![0.0; d.n_vel()];
            for (col, w) in cols.iter().zip(&a) {
                phi.iter_mut().zip(col).for_each(|(p, u)| *p += w * u / vals[i].sqrt());
            }
            for (p, q) in phi.iter().zip(&basis.vectors()[i]) {
                assert!((p - q).abs() < 1e-8, "mode {i}");
            }
        }
    }

    #[test]
    fn basis_matches_svd_of_mass_weighted_snapshots() {
        let d = disc(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cols: Vec<Vec<f64>> = (0..6).map(|_| random_field(&d, &mut rng)).collect();
        let s = single(cols.clone());
        let basis = build_basis(&d, &s, 4, DEFAULT_CUTOFF).unwrap();
        let n = d.n_vel();
        let m = DMatrix::from_row_slice(n, n, &d.mass_matrix().to_dense().concat());
        let l = m.cholesky().unwrap().l();
        let a = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        let svd = (l.transpose() * &a).svd(true, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().map(|x| x * x).collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        for i in 0..6 {
            assert!((sv[i] - basis.spectrum()[i]).abs() < 1e-10 * sv[0]);
        }
    }

    #[test]
    fn projection_properties() {
        let d = disc(3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cols: Vec<Vec<f64>> = (0..8).map(|_| random_field(&d, &mut rng)).collect();
        let basis = build_basis(&d, &single(cols), 5, DEFAULT_CUTOFF).unwrap();
        let mg = basis.mass_gram();
        for i in 0..5 {
            for j in 0..5 {
                assert!((mg[(i, j)] - (i == j) as u8 as f64).abs() < 1e-10);
            }
        }
        let (a, p) = project_l2(&basis, &basis.vectors()[0]);
        assert!((a[0] - 1.0).abs() < 1e-12 && a[1..].iter().all(|x| x.abs() < 1e-12));
        assert!(p.iter().zip(&basis.vectors()[0]).all(|(x, y)| (x - y).abs() < 1e-12));

        let u = random_field(&d, &mut rng);
        let (_, pu) = project_l2(&basis, &u);
        let r: Vec<f64> = u.iter().zip(&pu).map(|(x, y)| x - y).collect();
        for phi in basis.vectors() {
            assert!(d.l2_inner(&r, phi).abs() < 1e-10);
        }
        let lhs = d.l2_inner(&r, &r) + d.l2_inner(&pu, &pu);
        assert!((lhs - d.l2_inner(&u, &u)).abs() < 1e-10 * lhs);
        let (_, ppu) = project_l2(&basis, &pu);
        assert!(ppu.iter().zip(&pu).all(|(x, y)| (x - y).abs() < 1e-12));

        let (a0, _) = project_l2(&basis, &r);
        assert!(a0.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn tail_identities_on_random_set() {
        let d = disc(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cols: Vec<Vec<f64>> = (0..10).map(|_| random_field(&d, &mut rng)).collect();
        let s = single(cols);
        let basis = build_basis(&d, &s, 10, DEFAULT_CUTOFF).unwrap();
        let mut prev_h1 = f64::INFINITY;
        for r in 0..=10 {
            let (l, rr) = tail_identity_l2(&d, &s, &basis, r).unwrap();
            assert!((l - rr).abs() <= 1e-9 * rr.max(1e-14) || (rr.abs() < 1e-12 && l < 1e-12), "r={r}");
            let (lh, rh) = tail_identity_h1(&d, &s, &basis, r).unwrap();
            assert!((lh - rh).abs() <= 1e-8 * rh.max(1e-14) || (rh.abs() < 1e-12 && lh < 1e-12), "r={r}");
            assert!(lh <= prev_h1 * (1.0 + 1e-12));
            prev_h1 = lh;
        }
        let other = single(vec![vec![0.0; d.n_vel()]; 10]);
        assert!(tail_identity_l2(&d, &other, &basis, 1).is_err());
    }

    #[test]
    fn spectral_norm_cases() {
        let d = disc(3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cols: Vec<Vec<f64>> = (0..6).map(|_| random_field(&d, &mut rng)).collect();
        let basis = build_basis(&d, &single(cols), 6, DEFAULT_CUTOFF).unwrap();
        let nu = 0.02;
        let one = basis.truncate(1).unwrap();
        let s1 = stiffness_spectral_norm(&one, nu).unwrap();
        assert!((s1 - (1.0 + nu * one.grad_norms()[0].powi(2))).abs() < 1e-10 * s1);
        let s = stiffness_spectral_norm(&basis, nu).unwrap();
        let oracle = basis.s_matrix(nu).symmetric_eigen().eigenvalues.max();
        assert!((s - oracle).abs() < 1e-8 * oracle);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 5.0, 3.0]));
        assert!((power_iteration(&diag).unwrap() - 5.0).abs() < 1e-10);
    }
}
