//! The experiment commands: full ensemble runs, POD, reduced runs and the
//! temporal convergence study. Every command reads what it needs from the
//! output directory and writes its results back there.

use std::fmt::Write as _;
use std::path::Path;

use enspod::diagnostics::{
    energy_bound, relative_error_l2t, rom_member_history, rom_stability, DualNorm, EnergyBoundCheck,
    StabilityReport,
};
use enspod::ensemble::{EnsembleSolver, EnsembleState, Trajectory};
use enspod::fem::norms::l2_error;
use enspod::pod::{
    build_basis, stiffness_spectral_norm, tail_identity_h1, tail_identity_l2, PodBasis, SnapshotSet, DEFAULT_CUTOFF,
};
use enspod::problem::{offset_circles_base_force, perturbed_offset_circles_force, Force, ManufacturedSolution};
use enspod::rom::{rom_initialize, ReducedOperators, RomSolver, RomTrajectory};
use enspod::{Discretization, Mesh, TaylorHoodSpace};

use crate::config::{ExperimentConfig, ForceId, MeshSource, RomMode};
use crate::error::{CliError, CliResult};
use crate::io::{self, num, path_in, write_file};

/// Largest accepted relative mismatch in the projection-error tail identities.
pub const TAIL_TOLERANCE: f64 = 1e-8;

pub fn build_mesh(source: &MeshSource) -> CliResult<Mesh> {
    Ok(match source {
        MeshSource::OffsetCircles => Mesh::offset_circles_coarse(),
        MeshSource::UnitSquare(n) => Mesh::unit_square(*n)?,
        MeshSource::File(p) => Mesh::load(p)?,
    })
}

pub fn discretization(cfg: &ExperimentConfig) -> CliResult<Discretization> {
    Ok(Discretization::new(TaylorHoodSpace::new(build_mesh(&cfg.mesh)?))?)
}

fn manufactured(cfg: &ExperimentConfig, amplitude: f64) -> ManufacturedSolution {
    ManufacturedSolution { nu: cfg.nu, omega: cfg.mms_omega, amplitude }
}

/// Forces driving the dynamics, one per member.
pub fn member_forces(cfg: &ExperimentConfig, eps: &[f64]) -> Vec<Force> {
    match cfg.force {
        ForceId::OffsetCircles => vec![offset_circles_base_force(); eps.len()],
        ForceId::Manufactured => eps.iter().map(|&a| manufactured(cfg, a).force()).collect(),
    }
}

/// Initial velocities: Stokes solutions with the perturbed force, or the
/// Stokes projection of the manufactured solution at `t = 0`.
pub fn initial_conditions(cfg: &ExperimentConfig, disc: &Discretization, eps: &[f64]) -> CliResult<Vec<Vec<f64>>> {
    eps.iter()
        .map(|&e| {
            let u = match cfg.force {
                ForceId::OffsetCircles => {
                    let f = perturbed_offset_circles_force(e);
                    disc.steady_stokes(&disc.load(|x| f.eval(x, 0.0)), cfg.stokes_nu)?.0
                }
                ForceId::Manufactured => {
                    let m = manufactured(cfg, e);
                    disc.steady_stokes(&disc.load(|x| m.stokes_load(x, 0.0)), cfg.nu)?.0
                }
            };
            Ok(u)
        })
        .collect()
}

/// A full ensemble run from the configured initial conditions.
#[derive(Debug, Clone)]
pub struct FullRun {
    pub trajectory: Trajectory,
    pub snapshots: SnapshotSet,
    /// Levels 0 and 1, the starting point of reduced runs.
    pub start: EnsembleState,
}

pub fn run_full(cfg: &ExperimentConfig, disc: &Discretization, eps: &[f64], stride: usize) -> CliResult<FullRun> {
    let initial = initial_conditions(cfg, disc, eps)?;
    let solver = EnsembleSolver::new(disc, cfg.nu, cfg.dt, member_forces(cfg, eps))?;
    let start = solver.bootstrap(initial)?;
    let (trajectory, snapshots) = solver.run(start.clone(), cfg.t_final, stride)?;
    Ok(FullRun { trajectory, snapshots, start })
}

/// What a reduced run is compared against: the full ensemble average at every
/// level and the first two levels of every member.
#[derive(Debug, Clone, PartialEq)]
pub struct FullReference {
    pub averages: Vec<Vec<f64>>,
    pub level0: Vec<Vec<f64>>,
    pub level1: Vec<Vec<f64>>,
    pub dt: f64,
}

impl FullReference {
    pub fn from_run(run: &FullRun) -> Self {
        Self {
            averages: run.trajectory.averages.clone(),
            level0: run.start.previous().to_vec(),
            level1: run.start.current().to_vec(),
            dt: run.trajectory.dt,
        }
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let averages = SnapshotSet::new(self.averages.clone(), 1, self.dt, 1)?;
        let initial = SnapshotSet::from_members(
            self.level0.iter().zip(&self.level1).map(|(a, b)| vec![a.clone(), b.clone()]).collect(),
            self.dt,
            1,
        )?;
        io::write_fields(&path_in(dir, "averages.bin"), &averages)?;
        io::write_fields(&path_in(dir, "initial.bin"), &initial)
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let averages = io::read_fields(&path_in(dir, "averages.bin"))?;
        let initial_path = path_in(dir, "initial.bin");
        let initial = io::read_fields(&initial_path)?;
        if initial.per_member() != 2 {
            return Err(CliError::Format { path: initial_path, message: "expected two levels per member".into() });
        }
        let j = initial.n_members();
        Ok(Self {
            averages: averages.columns().to_vec(),
            level0: (0..j).map(|m| initial.column(m, 0).to_vec()).collect(),
            level1: (0..j).map(|m| initial.column(m, 1).to_vec()).collect(),
            dt: averages.dt(),
        })
    }

    pub fn n_members(&self) -> usize {
        self.level0.len()
    }
}

/// Absolute slack in the self-check, relative to the mean snapshot energy.
/// Deep truncations leave tails near roundoff of the total, where a purely
/// relative comparison is meaningless.
pub const TAIL_ROUNDOFF_FLOOR: f64 = 1e-12;

/// Both sides of the two tail identities for one truncation, with the
/// untruncated totals they are measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailCheck {
    pub r: usize,
    pub l2: (f64, f64),
    pub h1: (f64, f64),
    pub totals: (f64, f64),
}

/// `|lhs - rhs| / max(rhs, 1e-14)`.
pub fn rel_gap((lhs, rhs): (f64, f64)) -> f64 {
    (lhs - rhs).abs() / rhs.max(1e-14)
}

fn within((lhs, rhs): (f64, f64), total: f64) -> bool {
    (lhs - rhs).abs() <= TAIL_TOLERANCE * rhs + TAIL_ROUNDOFF_FLOOR * total
}

impl TailCheck {
    pub fn rel_l2(&self) -> f64 {
        rel_gap(self.l2)
    }

    pub fn rel_h1(&self) -> f64 {
        rel_gap(self.h1)
    }

    pub fn passes(&self) -> bool {
        within(self.l2, self.totals.0) && within(self.h1, self.totals.1)
    }
}

pub fn tail_checks(
    disc: &Discretization,
    snapshots: &SnapshotSet,
    basis: &PodBasis,
    rs: impl IntoIterator<Item = usize>,
) -> CliResult<Vec<TailCheck>> {
    let totals = (tail_identity_l2(disc, snapshots, basis, 0)?.1, tail_identity_h1(disc, snapshots, basis, 0)?.1);
    rs.into_iter()
        .map(|r| {
            Ok(TailCheck {
                r,
                l2: tail_identity_l2(disc, snapshots, basis, r)?,
                h1: tail_identity_h1(disc, snapshots, basis, r)?,
                totals,
            })
        })
        .collect()
}

/// Builds `max(r_list)` modes and verifies both tail identities for every
/// truncation up to it.
pub fn pod_with_check(
    cfg: &ExperimentConfig,
    disc: &Discretization,
    snapshots: &SnapshotSet,
) -> CliResult<(PodBasis, Vec<TailCheck>)> {
    let basis = build_basis(disc, snapshots, cfg.max_r(), DEFAULT_CUTOFF)?;
    let checks = tail_checks(disc, snapshots, &basis, 0..=basis.n_modes())?;
    if let Some(bad) = checks.iter().find(|c| !c.passes()) {
        return Err(CliError::SelfCheck(format!(
            "projection error tail at R = {}: L2 {:e} vs {:e}, H1 {:e} vs {:e}",
            bad.r, bad.l2.0, bad.l2.1, bad.h1.0, bad.h1.1
        )));
    }
    Ok((basis, checks))
}

/// One reduced run and its diagnostics.
#[derive(Debug, Clone)]
pub struct RomRun {
    pub r: usize,
    pub rel_error: f64,
    pub s_norm: f64,
    pub trajectory: RomTrajectory,
    pub stability: StabilityReport,
    pub energy: Vec<EnergyBoundCheck>,
}

impl RomRun {
    pub fn energy_violations(&self) -> usize {
        self.energy.iter().map(|e| e.violations).sum()
    }
}

/// Squared dual norms of each member's force at levels `0..levels`.
fn dual_histories(
    disc: &Discretization,
    dual: &DualNorm,
    forces: &[Force],
    levels: usize,
    dt: f64,
) -> Vec<Vec<f64>> {
    forces
        .iter()
        .map(|f| {
            if f.is_time_dependent() {
                (0..levels).map(|n| dual.squared(&disc.load(|x| f.eval(x, n as f64 * dt)))).collect()
            } else {
                vec![dual.squared(&disc.load(|x| f.eval(x, 0.0))); levels]
            }
        })
        .collect()
}

/// Runs the reduced model with the first `r` modes of `basis`, starting from
/// the projections of the reference's first two levels.
pub fn run_rom(
    cfg: &ExperimentConfig,
    disc: &Discretization,
    basis: &PodBasis,
    r: usize,
    reference: &FullReference,
    eps: &[f64],
    dual: &DualNorm,
) -> CliResult<RomRun> {
    if eps.len() != reference.n_members() {
        return Err(CliError::Config(format!(
            "{} perturbations but the reference holds {} members",
            eps.len(),
            reference.n_members()
        )));
    }
    let basis = basis.truncate(r)?;
    let ops = ReducedOperators::new(disc, &basis)?;
    let forces = member_forces(cfg, eps);
    let solver = RomSolver::new(disc, &basis, &ops, cfg.nu, cfg.dt, forces.clone())?;
    let init = rom_initialize(&basis, &reference.level0, &reference.level1, cfg.dt)?;
    let trajectory = solver.run(init, cfg.t_final)?;

    let lifted: Vec<Vec<f64>> = trajectory.averages().iter().map(|a| basis.lift(a)).collect();
    let rel_error = relative_error_l2t(disc, &reference.averages, &lifted, cfg.dt)?;

    let s_norm = stiffness_spectral_norm(&basis, cfg.nu)?;
    let levels = &trajectory.coefficients;
    let stability =
        rom_stability(disc, &basis, s_norm, levels, trajectory.first_level, cfg.dt, cfg.nu, &cfg.thresholds);
    let duals = dual_histories(disc, dual, &forces, levels.len(), cfg.dt);
    let energy = duals
        .into_iter()
        .enumerate()
        .map(|(j, d)| energy_bound(&rom_member_history(&basis, levels, j, d), cfg.dt, cfg.nu))
        .collect();
    Ok(RomRun { r, rel_error, s_norm, trajectory, stability, energy })
}

/// Writes `mesh.msh2d` for the configured mesh source.
pub fn cmd_mesh_gen(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    let mesh = build_mesh(&cfg.mesh)?;
    let path = path_in(out, "mesh.msh2d");
    write_file(&path, mesh.to_msh2d())?;
    let mut markers = mesh.markers();
    markers.dedup();
    Ok(format!(
        "{}: {} vertices, {} triangles, h = {}, boundary markers {:?}",
        path.display(),
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.mesh_size(),
        markers
    ))
}

/// Full ensemble run for `eps`: `snapshots.bin`, `averages.bin`, `initial.bin`
/// and `timeseries.csv`.
pub fn cmd_snapshots(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    let disc = discretization(cfg)?;
    let run = run_full(cfg, &disc, &cfg.eps, cfg.stride)?;
    io::write_fields(&path_in(out, "snapshots.bin"), &run.snapshots)?;
    FullReference::from_run(&run).save(out)?;
    write_file(&path_in(out, "timeseries.csv"), io::timeseries_csv(&run.trajectory.series))?;
    Ok(format!(
        "{} members x {} snapshots of {} velocity dofs",
        run.snapshots.n_members(),
        run.snapshots.per_member(),
        run.snapshots.n_vel()
    ))
}

/// Basis for `max(r_list)` modes: `basis.bin`, `eigenvalues.csv` and the tail
/// identity log `tail_check.csv`.
pub fn cmd_pod(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    let disc = discretization(cfg)?;
    let snapshots = io::read_fields(&path_in(out, "snapshots.bin"))?;
    let (basis, checks) = pod_with_check(cfg, &disc, &snapshots)?;
    io::write_basis(&path_in(out, "basis.bin"), &basis)?;
    write_file(&path_in(out, "eigenvalues.csv"), io::eigenvalues_csv(basis.spectrum()))?;
    let mut log = String::from("R,l2_projection,l2_tail,h1_projection,h1_tail\n");
    for c in &checks {
        let _ = writeln!(log, "{},{},{},{},{}", c.r, num(c.l2.0), num(c.l2.1), num(c.h1.0), num(c.h1.1));
    }
    write_file(&path_in(out, "tail_check.csv"), log)?;
    let worst = checks.iter().filter(|c| c.r < basis.rank()).fold(0.0f64, |m, c| m.max(c.rel_l2()).max(c.rel_h1()));
    Ok(format!(
        "{} modes, rank {}, lambda_1 = {}, largest relative tail identity mismatch {worst:e}",
        basis.n_modes(),
        basis.rank(),
        basis.spectrum()[0]
    ))
}

/// The reference for `mode`: read from `out` for data mining, computed and
/// stored under `out/extrapolatory` otherwise.
pub fn reference_for(
    cfg: &ExperimentConfig,
    disc: &Discretization,
    mode: RomMode,
    out: &Path,
) -> CliResult<FullReference> {
    match mode {
        RomMode::DataMining => FullReference::load(out),
        RomMode::Extrapolatory => {
            let dir = path_in(out, "extrapolatory");
            let run = run_full(cfg, disc, &cfg.extrap_eps, cfg.stride)?;
            let reference = FullReference::from_run(&run);
            reference.save(&dir)?;
            write_file(&path_in(&dir, "timeseries.csv"), io::timeseries_csv(&run.trajectory.series))?;
            Ok(reference)
        }
    }
}

/// Reduced runs for every `R` in `r_list` against the reference of `mode`.
pub fn rom_sweep(
    cfg: &ExperimentConfig,
    disc: &Discretization,
    basis: &PodBasis,
    reference: &FullReference,
    mode: RomMode,
) -> CliResult<Vec<RomRun>> {
    let dual = DualNorm::new(disc)?;
    cfg.r_list
        .iter()
        .map(|&r| run_rom(cfg, disc, basis, r, reference, cfg.member_eps(mode), &dual))
        .collect()
}

/// `errors.csv`, `energy_bound.csv` and per-`R` time series, stability reports
/// and reduced coefficients.
pub fn write_rom_outputs(out: &Path, runs: &[RomRun]) -> CliResult<()> {
    let errors: Vec<(usize, f64)> = runs.iter().map(|r| (r.r, r.rel_error)).collect();
    write_file(&path_in(out, "errors.csv"), io::errors_csv(&errors))?;
    let mut bound = String::from("R,member,checked_levels,violations,max_ratio,max_ind41,s_norm\n");
    for run in runs {
        for (j, e) in run.energy.iter().enumerate() {
            let max41 = run.stability.rows.iter().filter(|s| s.member == j).fold(0.0f64, |m, s| m.max(s.ind41));
            let _ = writeln!(
                bound,
                "{},{j},{},{},{},{},{}",
                run.r,
                e.checked_levels,
                e.violations,
                num(e.max_ratio),
                num(max41),
                num(run.s_norm)
            );
        }
        let r = run.r;
        write_file(&path_in(out, &format!("timeseries_R{r}.csv")), io::timeseries_csv(&run.trajectory.series))?;
        write_file(&path_in(out, &format!("stability_R{r}.csv")), io::stability_csv(&run.stability))?;
        write_file(
            &path_in(out, &format!("coefficients_R{r}.csv")),
            io::coefficients_csv(run.trajectory.first_level, &run.trajectory.coefficients),
        )?;
    }
    write_file(&path_in(out, "energy_bound.csv"), bound)
}

fn error_table(runs: &[RomRun]) -> String {
    let mut s = String::from("   R   relative error\n");
    for run in runs {
        let _ = writeln!(s, "{:>4}   {:.6}", run.r, run.rel_error);
    }
    s
}

pub fn cmd_rom(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    let disc = discretization(cfg)?;
    let basis = io::read_basis(&disc, &path_in(out, "basis.bin"))?;
    let reference = reference_for(cfg, &disc, cfg.mode, out)?;
    let runs = rom_sweep(cfg, &disc, &basis, &reference, cfg.mode)?;
    write_rom_outputs(out, &runs)?;
    Ok(format!("{} test\n{}", cfg.mode, error_table(&runs)))
}

/// Both modes side by side in `compare.csv`.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    if cfg.extrap_eps.is_empty() {
        return Err(CliError::Config("compare needs extrap_eps".into()));
    }
    let disc = discretization(cfg)?;
    let basis = io::read_basis(&disc, &path_in(out, "basis.bin"))?;
    let dm_ref = reference_for(cfg, &disc, RomMode::DataMining, out)?;
    let ex_ref = reference_for(cfg, &disc, RomMode::Extrapolatory, out)?;
    let dm = rom_sweep(cfg, &disc, &basis, &dm_ref, RomMode::DataMining)?;
    let ex = rom_sweep(cfg, &disc, &basis, &ex_ref, RomMode::Extrapolatory)?;
    let mut csv = String::from("R,data_mining,extrapolatory,ratio\n");
    let mut table = String::from("   R   data mining   extrapolatory\n");
    for (a, b) in dm.iter().zip(&ex) {
        let _ = writeln!(csv, "{},{},{},{}", a.r, num(a.rel_error), num(b.rel_error), num(b.rel_error / a.rel_error));
        let _ = writeln!(table, "{:>4}   {:>11.6}   {:>13.6}", a.r, a.rel_error, b.rel_error);
    }
    write_file(&path_in(out, "compare.csv"), csv)?;
    Ok(table)
}

/// One row of the temporal convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    /// Largest final-time L² error over the members.
    pub error: f64,
    /// `log2(previous error / error)`, absent on the first row.
    pub rate: Option<f64>,
}

/// Full ensemble runs of the manufactured solution at `dt`, `dt/2`, `dt/4`.
pub fn convergence_study(cfg: &ExperimentConfig) -> CliResult<Vec<ConvergenceRow>> {
    if cfg.force != ForceId::Manufactured {
        return Err(CliError::Config("convergence needs force = manufactured".into()));
    }
    if !matches!(cfg.mesh, MeshSource::UnitSquare(_)) {
        return Err(CliError::Config("convergence needs a unit_square mesh".into()));
    }
    let disc = discretization(cfg)?;
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for k in 0..3 {
        let dt = cfg.dt / f64::from(1u32 << k);
        let c = ExperimentConfig { dt, ..cfg.clone() };
        let steps = enspod::ensemble::steps_for(c.t_final, dt)?;
        let run = run_full(&c, &disc, &c.eps, steps.max(1))?;
        let t = steps as f64 * dt;
        let error = run
            .trajectory
            .final_state
            .current()
            .iter()
            .zip(&c.eps)
            .map(|(u, &a)| {
                let m = manufactured(&c, a);
                l2_error(disc.space(), u, |x| m.velocity(x, t))
            })
            .fold(0.0, f64::max);
        let rate = rows.last().map(|p| (p.error / error).log2());
        rows.push(ConvergenceRow { dt, error, rate });
    }
    Ok(rows)
}

/// `convergence.csv` with columns `dt, error, rate`.
pub fn cmd_convergence(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    let rows = convergence_study(cfg)?;
    let mut csv = String::from("dt,error,rate\n");
    let mut table = String::from("        dt      L2 error   rate\n");
    for r in &rows {
        let rate = r.rate.map(num).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{rate}", num(r.dt), num(r.error));
        let shown = r.rate.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(table, "{:>10.6}  {:>12.5e}  {shown:>5}", r.dt, r.error);
    }
    write_file(&path_in(out, "convergence.csv"), csv)?;
    Ok(table)
}
