//! Second-order ensemble time stepping for the full finite element model.
//!
//! All members share the implicit matrix `(3/(2dt)) M + nu A + N(<u>^n)` at a
//! given step; the fluctuation convection term is explicit. The published
//! scheme writes `u^{j,m}` in the BDF2 history term; it is read as `u^{j,n}`.

use rayon::prelude::*;

use crate::diagnostics::energy_enstrophy;
use crate::error::{Error, Result};
use crate::fem::{dot, Discretization};
use crate::pod::SnapshotSet;
use crate::problem::Force;

/// Members at two consecutive time levels `n - 1` and `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    previous: Vec<Vec<f64>>,
    current: Vec<Vec<f64>>,
    n: usize,
    dt: f64,
}

impl EnsembleState {
    pub fn new(previous: Vec<Vec<f64>>, current: Vec<Vec<f64>>, n: usize, dt: f64) -> Result<Self> {
        if current.is_empty() {
            return Err(Error::InvalidArgument("an ensemble needs at least one member".into()));
        }
        if previous.len() != current.len() {
            return Err(Error::Dimension(format!(
                "{} previous levels for {} members",
                previous.len(),
                current.len()
            )));
        }
        let len = current[0].len();
        if current.iter().chain(&previous).any(|u| u.len() != len) {
            return Err(Error::Dimension("members have different lengths".into()));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("a two-level state starts at n = 1".into()));
        }
        check_dt(dt)?;
        Ok(Self { previous, current, n, dt })
    }

    pub fn n_members(&self) -> usize {
        self.current.len()
    }

    /// Index of the current time level.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn current(&self) -> &[Vec<f64>] {
        &self.current
    }

    pub fn previous(&self) -> &[Vec<f64>] {
        &self.previous
    }

    /// `<u>^n` and `u'^{j,n}`.
    pub fn mean_fluct(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        compute_mean_fluct(&self.current, &self.previous)
    }

    pub(crate) fn advance(&mut self, next: Vec<Vec<f64>>) {
        self.previous = std::mem::replace(&mut self.current, next);
        self.n += 1;
    }

    /// Plain average `(1/J) sum_j u^{j,n}` of the current level.
    pub fn average(&self) -> Vec<f64> {
        average(&self.current)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")))
    }
}

/// Extrapolated ensemble mean `(1/J) sum (2 u^n - u^{n-1})` and fluctuations
/// `2 u^n - u^{n-1} - mean`. Works on full or reduced coefficient vectors.
pub fn compute_mean_fluct(current: &[Vec<f64>], previous: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let j = current.len();
    let len = current[0].len();
    let extrap: Vec<Vec<f64>> = current.iter().zip(previous).map(|(c, p)| extrapolate(c, p)).collect();
    let mut mean = vec![0.0; len];
    for e in &extrap {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    let inv = 1.0 / j as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let fluct = extrap.into_iter().map(|e| e.iter().zip(&mean).map(|(a, b)| a - b).collect()).collect();
    (mean, fluct)
}

/// `2 u^n - u^{n-1}`.
pub fn extrapolate(current: &[f64], previous: &[f64]) -> Vec<f64> {
    current.iter().zip(previous).map(|(c, p)| 2.0 * c - p).collect()
}

pub fn average(members: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; members[0].len()];
    for m in members {
        for (o, v) in out.iter_mut().zip(m) {
            *o += v;
        }
    }
    let inv = 1.0 / members.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    out
}

/// One row of an energy/enstrophy time series; `member == None` is the ensemble average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub step: usize,
    pub time: f64,
    pub member: Option<usize>,
    pub energy: f64,
    pub enstrophy: f64,
}

/// Everything a full run records besides the snapshots.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    /// Ensemble average `(1/J) sum_j u^{j,n}` at every level `n = 0..=N`.
    pub averages: Vec<Vec<f64>>,
    pub series: Vec<SeriesRow>,
    pub final_state: EnsembleState,
}

/// Load vectors for the member forces; steady forces are assembled once.
struct Loads {
    forces: Vec<Force>,
    cached: Vec<Option<Vec<f64>>>,
}

impl Loads {
    fn new(disc: &Discretization, forces: Vec<Force>) -> Self {
        let cached = forces
            .iter()
            .map(|f| (!f.is_time_dependent()).then(|| disc.load(|x| f.eval(x, 0.0))))
            .collect();
        Self { forces, cached }
    }

    fn at(&self, disc: &Discretization, j: usize, t: f64) -> std::borrow::Cow<'_, [f64]> {
        match &self.cached[j] {
            Some(v) => std::borrow::Cow::Borrowed(v.as_slice()),
            None => {
                let f = &self.forces[j];
                std::borrow::Cow::Owned(disc.load(|x| f.eval(x, t)))
            }
        }
    }
}

/// The full ensemble solver for a fixed discretization, viscosity, step and
/// set of member forces.
pub struct EnsembleSolver<'a> {
    disc: &'a Discretization,
    nu: f64,
    dt: f64,
    loads: Loads,
}

impl<'a> EnsembleSolver<'a> {
    pub fn new(disc: &'a Discretization, nu: f64, dt: f64, forces: Vec<Force>) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")));
        }
        check_dt(dt)?;
        if forces.is_empty() {
            return Err(Error::InvalidArgument("an ensemble needs at least one member".into()));
        }
        Ok(Self { disc, nu, dt, loads: Loads::new(disc, forces) })
    }

    pub fn n_members(&self) -> usize {
        self.loads.forces.len()
    }

    pub fn discretization(&self) -> &Discretization {
        self.disc
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Load vector of member `j` at time `t`.
    pub fn load(&self, j: usize, t: f64) -> Vec<f64> {
        self.loads.at(self.disc, j, t).into_owned()
    }

    /// First level by one Crank-Nicolson step per member, with two fixed-point
    /// iterations on the convecting field (`w = u^0`, then `w = (u^0 + u^1)/2`).
    pub fn bootstrap(&self, initial: Vec<Vec<f64>>) -> Result<EnsembleState> {
        if initial.len() != self.n_members() {
            return Err(Error::Dimension(format!(
                "{} initial fields for {} members",
                initial.len(),
                self.n_members()
            )));
        }
        let n_vel = self.disc.n_vel();
        if initial.iter().any(|u| u.len() != n_vel) {
            return Err(Error::Dimension(format!("initial fields must have length {n_vel}")));
        }
        let first: Vec<Vec<f64>> = initial
            .par_iter()
            .enumerate()
            .map(|(j, u0)| self.crank_nicolson_member(j, u0))
            .collect::<Result<_>>()?;
        EnsembleState::new(initial, first, 1, self.dt)
    }

    fn crank_nicolson_member(&self, j: usize, u0: &[f64]) -> Result<Vec<f64>> {
        let d = self.disc;
        let dt = self.dt;
        let nu = self.nu;
        let ms = d.scalar_mass();
        let as_ = d.scalar_stiffness();
        let f0 = self.loads.at(d, j, 0.0);
        let f1 = self.loads.at(d, j, dt);
        let mu0 = d.mass_mul(u0);
        let au0 = d.stiffness_mul(u0);
        let mut conv = vec![0.0; ms.len()];
        let mut w = u0.to_vec();
        let mut iterate = u0.to_vec();
        let mut residuals = [0.0; 2];
        for (it, res) in residuals.iter_mut().enumerate() {
            d.convection_block_into(&w, &mut conv);
            let block: Vec<f64> = (0..ms.len()).map(|k| ms[k] / dt + 0.5 * nu * as_[k] + 0.5 * conv[k]).collect();
            let nu0 = d.apply_block(&conv, u0);
            let rhs: Vec<f64> = (0..u0.len())
                .map(|i| mu0[i] / dt - 0.5 * nu * au0[i] - 0.5 * nu0[i] + 0.5 * (f0[i] + f1[i]))
                .collect();
            let fact = d.saddle().factorize(&block, Some(1))?;
            let (u1, _) = d.saddle().solve(&fact, &rhs, None)?;
            let diff: Vec<f64> = u1.iter().zip(&iterate).map(|(a, b)| a - b).collect();
            *res = d.l2_inner(&diff, &diff).sqrt();
            if it == 0 {
                w = u0.iter().zip(&u1).map(|(a, b)| 0.5 * (a + b)).collect();
            }
            iterate = u1;
        }
        let scale = d.l2_inner(&iterate, &iterate).sqrt().max(f64::MIN_POSITIVE);
        if residuals[1] > residuals[0] && residuals[1] > 1e-12 * scale {
            return Err(Error::BootstrapDivergence { first: residuals[0], second: residuals[1] });
        }
        Ok(iterate)
    }

    /// Advances `state` from level `n` to `n + 1`.
    pub fn step(&self, state: &mut EnsembleState) -> Result<()> {
        if state.n_members() != self.n_members() {
            return Err(Error::Dimension(format!(
                "state has {} members, solver {}",
                state.n_members(),
                self.n_members()
            )));
        }
        let d = self.disc;
        let next = state.n + 1;
        let t_next = next as f64 * self.dt;
        let (mean, fluct) = state.mean_fluct();
        let ms = d.scalar_mass();
        let as_ = d.scalar_stiffness();
        let mut block = vec![0.0; ms.len()];
        d.convection_block_into(&mean, &mut block);
        let c = 3.0 / (2.0 * self.dt);
        for k in 0..block.len() {
            block[k] += c * ms[k] + self.nu * as_[k];
        }
        let fact = d.saddle().factorize(&block, Some(next))?;

        let solved: Vec<Vec<f64>> = (0..state.n_members())
            .into_par_iter()
            .map(|j| {
                let (un, um) = (&state.current[j], &state.previous[j]);
                let history: Vec<f64> = un.iter().zip(um).map(|(a, b)| 4.0 * a - b).collect();
                let mh = d.mass_mul(&history);
                let ex = extrapolate(un, um);
                let mut conv = vec![0.0; ms.len()];
                d.convection_block_into(&fluct[j], &mut conv);
                let nx = d.apply_block(&conv, &ex);
                let f = self.loads.at(d, j, t_next);
                let rhs: Vec<f64> =
                    (0..un.len()).map(|i| f[i] + mh[i] / (2.0 * self.dt) - nx[i]).collect();
                let (u, _) = d.saddle().solve(&fact, &rhs, None)?;
                let un_norm = dot(&u, &u).sqrt();
                if d.divergence_residual(&u) > 1e-10 * un_norm.max(1.0) {
                    return Err(Error::Solver {
                        step: Some(next),
                        message: format!("member {j} violates the discrete divergence constraint"),
                    });
                }
                Ok(u)
            })
            .collect::<Result<_>>()?;

        state.advance(solved);
        Ok(())
    }

    /// Steps to `t_final`, storing every member every `stride` levels (level 0
    /// included when the state still holds it) plus per-level series.
    pub fn run(&self, mut state: EnsembleState, t_final: f64, stride: usize) -> Result<(Trajectory, SnapshotSet)> {
        if stride == 0 {
            return Err(Error::InvalidArgument("snapshot stride must be at least 1".into()));
        }
        let n_final = steps_for(t_final, self.dt)?;
        if n_final < state.n {
            return Err(Error::InvalidArgument(format!(
                "final time {t_final} is before the current level {}",
                state.n
            )));
        }
        let j = state.n_members();
        let mut columns: Vec<Vec<Vec<f64>>> = vec![Vec::new(); j];
        let mut averages = Vec::new();
        let mut series = Vec::new();

        let mut record = |level: usize, members: &[Vec<f64>], columns: &mut Vec<Vec<Vec<f64>>>| {
            if level % stride == 0 {
                for (c, m) in columns.iter_mut().zip(members) {
                    c.push(m.clone());
                }
            }
            let time = level as f64 * self.dt;
            for (i, m) in members.iter().enumerate() {
                let (energy, enstrophy) = energy_enstrophy(self.disc.space(), m, self.nu);
                series.push(SeriesRow { step: level, time, member: Some(i), energy, enstrophy });
            }
            let ave = average(members);
            let (energy, enstrophy) = energy_enstrophy(self.disc.space(), &ave, self.nu);
            series.push(SeriesRow { step: level, time, member: None, energy, enstrophy });
            averages.push(ave);
        };

        if state.n == 1 {
            record(0, &state.previous, &mut columns);
        }
        record(state.n, &state.current, &mut columns);
        while state.n < n_final {
            self.step(&mut state)?;
            record(state.n, &state.current, &mut columns);
        }
        let snapshots = SnapshotSet::from_members(columns, self.dt, stride)?;
        Ok((Trajectory { dt: self.dt, averages, series, final_state: state }, snapshots))
    }
}

/// Number of steps of size `dt` that reach `t_final`; it must be a whole number.
pub fn steps_for(t_final: f64, dt: f64) -> Result<usize> {
    check_dt(dt)?;
    if !(t_final >= dt) {
        return Err(Error::InvalidArgument(format!("final time {t_final} must be at least one step {dt}")));
    }
    let n = (t_final / dt).round();
    if ((n * dt - t_final) / t_final).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("final time {t_final} is not a multiple of the step {dt}")));
    }
    Ok(n as usize)
}
