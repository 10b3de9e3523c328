//! Experiment configuration in a flat `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown and repeated
//! keys are rejected; missing keys take the defaults below.
//!
//! | key          | type                                   | default              |
//! |--------------|----------------------------------------|----------------------|
//! | `mesh`       | `offset_circles`, `unit_square:N`, `file:PATH` | `offset_circles` |
//! | `force`      | `offset_circles`, `manufactured`       | `offset_circles`     |
//! | `nu`         | float                                  | `0.02`               |
//! | `dt`         | float                                  | `0.01`               |
//! | `t_final`    | float                                  | `5`                  |
//! | `eps`        | comma-separated floats, one per member | `0.001,-0.001`       |
//! | `extrap_eps` | comma-separated floats                 | `0.2,0.4,0.6,0.8,1`  |
//! | `stride`     | integer                                | `4`                  |
//! | `r_list`     | comma-separated integers               | `2,3,4,5,6`          |
//! | `mode`       | `data_mining`, `extrapolatory`         | `data_mining`        |
//! | `stokes_nu`  | float                                  | `1`                  |
//! | `mms_omega`  | float                                  | `3π`                 |
//! | `c41`        | float                                  | `1`                  |
//! | `limit41`    | float                                  | `1`                  |
//! | `limit42`    | float                                  | `1`                  |
//! | `seed`       | integer                                | `0`                  |
//! | `out_dir`    | path                                   | `out`                |
//!
//! For the offset-circles force, member `j` starts from the Stokes solution with
//! viscosity `stokes_nu` and load `f + eps_j (sin 3πx sin 3πy, cos 3πx cos 3πy)`
//! and is then driven by the unperturbed `f`. For the manufactured force,
//! `eps_j` is the amplitude of member `j` and `mms_omega` its frequency.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use enspod::diagnostics::Thresholds;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    OffsetCircles,
    UnitSquare(usize),
    File(PathBuf),
}

impl fmt::Display for MeshSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshSource::OffsetCircles => f.write_str("offset_circles"),
            MeshSource::UnitSquare(n) => write!(f, "unit_square:{n}"),
            MeshSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for MeshSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "offset_circles" {
            return Ok(MeshSource::OffsetCircles);
        }
        if let Some(n) = s.strip_prefix("unit_square:") {
            return n.parse().map(MeshSource::UnitSquare).map_err(|e| format!("bad subdivision count {n:?}: {e}"));
        }
        if let Some(p) = s.strip_prefix("file:") {
            if p.is_empty() {
                return Err("empty mesh path".into());
            }
            return Ok(MeshSource::File(PathBuf::from(p)));
        }
        Err(format!("unknown mesh source {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceId {
    OffsetCircles,
    Manufactured,
}

impl fmt::Display for ForceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForceId::OffsetCircles => "offset_circles",
            ForceId::Manufactured => "manufactured",
        })
    }
}

impl FromStr for ForceId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "offset_circles" => Ok(ForceId::OffsetCircles),
            "manufactured" => Ok(ForceId::Manufactured),
            _ => Err(format!("unknown force {s:?}")),
        }
    }
}

/// Which parameters the reduced model is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RomMode {
    /// The snapshot-generating perturbations `eps`.
    DataMining,
    /// The perturbations `extrap_eps`.
    Extrapolatory,
}

impl fmt::Display for RomMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RomMode::DataMining => "data_mining",
            RomMode::Extrapolatory => "extrapolatory",
        })
    }
}

impl FromStr for RomMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "data_mining" => Ok(RomMode::DataMining),
            "extrapolatory" => Ok(RomMode::Extrapolatory),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mesh: MeshSource,
    pub force: ForceId,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub eps: Vec<f64>,
    pub extrap_eps: Vec<f64>,
    pub stride: usize,
    pub r_list: Vec<usize>,
    pub mode: RomMode,
    pub stokes_nu: f64,
    pub mms_omega: f64,
    pub thresholds: Thresholds,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mesh: MeshSource::OffsetCircles,
            force: ForceId::OffsetCircles,
            nu: 1.0 / 50.0,
            dt: 0.01,
            t_final: 5.0,
            eps: vec![0.001, -0.001],
            extrap_eps: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            stride: 4,
            r_list: vec![2, 3, 4, 5, 6],
            mode: RomMode::DataMining,
            stokes_nu: 1.0,
            mms_omega: 3.0 * PI,
            thresholds: Thresholds::default(),
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

const KEYS: [&str; 17] = [
    "mesh", "force", "nu", "dt", "t_final", "eps", "extrap_eps", "stride", "r_list", "mode", "stokes_nu",
    "mms_omega", "c41", "limit41", "limit42", "seed", "out_dir",
];

fn join<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|v| v.trim().parse::<T>().map_err(|e| format!("bad list entry {v:?}: {e}"))).collect()
}

fn parse_value<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e| format!("bad value {s:?}: {e}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| CliError::ConfigParse { line, message };
            let (key, value) = trimmed.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let key = *KEYS.iter().find(|k| **k == key).ok_or_else(|| err(format!("unknown key {key:?}")))?;
            if let Some(first) = seen.insert(key, line) {
                return Err(err(format!("key {key:?} already set on line {first}")));
            }
            cfg.set(key, value).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "mesh" => self.mesh = v.parse()?,
            "force" => self.force = v.parse()?,
            "nu" => self.nu = parse_value(v)?,
            "dt" => self.dt = parse_value(v)?,
            "t_final" => self.t_final = parse_value(v)?,
            "eps" => self.eps = parse_list(v)?,
            "extrap_eps" => self.extrap_eps = parse_list(v)?,
            "stride" => self.stride = parse_value(v)?,
            "r_list" => self.r_list = parse_list(v)?,
            "mode" => self.mode = v.parse()?,
            "stokes_nu" => self.stokes_nu = parse_value(v)?,
            "mms_omega" => self.mms_omega = parse_value(v)?,
            "c41" => self.thresholds.c41 = parse_value(v)?,
            "limit41" => self.thresholds.limit41 = parse_value(v)?,
            "limit42" => self.thresholds.limit42 = parse_value(v)?,
            "seed" => self.seed = parse_value(v)?,
            "out_dir" => {
                if v.is_empty() {
                    return Err("empty output directory".into());
                }
                self.out_dir = PathBuf::from(v)
            }
            _ => unreachable!("key list and setter disagree on {key}"),
        }
        Ok(())
    }

    /// Every key, one per line; floats use the shortest round-trip form.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let th = &self.thresholds;
        let _ = writeln!(s, "mesh = {}", self.mesh);
        let _ = writeln!(s, "force = {}", self.force);
        let _ = writeln!(s, "nu = {}", self.nu);
        let _ = writeln!(s, "dt = {}", self.dt);
        let _ = writeln!(s, "t_final = {}", self.t_final);
        let _ = writeln!(s, "eps = {}", join(&self.eps));
        let _ = writeln!(s, "extrap_eps = {}", join(&self.extrap_eps));
        let _ = writeln!(s, "stride = {}", self.stride);
        let _ = writeln!(s, "r_list = {}", join(&self.r_list));
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "stokes_nu = {}", self.stokes_nu);
        let _ = writeln!(s, "mms_omega = {}", self.mms_omega);
        let _ = writeln!(s, "c41 = {}", th.c41);
        let _ = writeln!(s, "limit41 = {}", th.limit41);
        let _ = writeln!(s, "limit42 = {}", th.limit42);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        s
    }

    pub fn n_members(&self) -> usize {
        self.eps.len()
    }

    /// Member parameters for the given mode.
    pub fn member_eps(&self, mode: RomMode) -> &[f64] {
        match mode {
            RomMode::DataMining => &self.eps,
            RomMode::Extrapolatory => &self.extrap_eps,
        }
    }

    pub fn max_r(&self) -> usize {
        self.r_list.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let positive = [("nu", self.nu), ("dt", self.dt), ("stokes_nu", self.stokes_nu)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return bad(format!("t_final must be at least dt, got t_final = {} and dt = {}", self.t_final, self.dt));
        }
        if let Err(e) = enspod::ensemble::steps_for(self.t_final, self.dt) {
            return bad(e.to_string());
        }
        if self.eps.is_empty() {
            return bad("eps must list at least one member".into());
        }
        if self.mode == RomMode::Extrapolatory && self.extrap_eps.is_empty() {
            return bad("extrapolatory mode needs extrap_eps".into());
        }
        if self.eps.iter().chain(&self.extrap_eps).any(|e| !e.is_finite()) {
            return bad("perturbations must be finite".into());
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if self.r_list.is_empty() || self.r_list.contains(&0) {
            return bad("r_list must be non-empty with every R >= 1".into());
        }
        if !self.mms_omega.is_finite() {
            return bad("mms_omega must be finite".into());
        }
        let th = &self.thresholds;
        if [th.c41, th.limit41, th.limit42].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("c41, limit41 and limit42 must be positive and finite".into());
        }
        if let MeshSource::UnitSquare(0) = self.mesh {
            return bad("unit_square needs at least one subdivision".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&cfg.serialize()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = ExperimentConfig::parse("# pipeline\nt_final = 2\n\neps = 0.5\n").unwrap();
        assert_eq!(cfg.t_final, 2.0);
        assert_eq!(cfg.eps, vec![0.5]);
        assert_eq!(cfg.nu, 0.02);
    }

    #[test]
    fn zero_final_time_is_rejected() {
        let e = ExperimentConfig::parse("t_final = 0").unwrap_err();
        assert!(matches!(e, CliError::Config(_)), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in ["dt = 0", "nu = -1", "eps =", "r_list = 2,0", "stride = 0", "t_final = 0.015", "mode = extrapolatory\nextrap_eps ="] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match ExperimentConfig::parse("nu = 0.1\nbogus = 1\n") {
            Err(CliError::ConfigParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse("nu = 0.1\n\nnu = 0.2\n") {
            Err(CliError::ConfigParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(ExperimentConfig::parse("dt 0.1"), Err(CliError::ConfigParse { line: 1, .. })));
    }

    #[test]
    fn mesh_sources_parse() {
        assert_eq!("unit_square:32".parse::<MeshSource>().unwrap(), MeshSource::UnitSquare(32));
        assert_eq!("file:a b.msh2d".parse::<MeshSource>().unwrap(), MeshSource::File("a b.msh2d".into()));
        assert!("unit_square:x".parse::<MeshSource>().is_err());
        assert!("disk".parse::<MeshSource>().is_err());
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e3..1e3f64]
    }

    fn positive() -> impl Strategy<Value = f64> {
        prop_oneof![1e-300..1e300f64, 1e-3..10.0f64]
    }

    prop_compose! {
        fn config()(
            mesh in prop_oneof![
                Just(MeshSource::OffsetCircles),
                (1usize..200).prop_map(MeshSource::UnitSquare),
                "[a-z0-9_/.]{1,20}".prop_map(|p| MeshSource::File(p.into())),
            ],
            manufactured in any::<bool>(),
            nu in positive(),
            dt_k in 1u32..1000,
            steps in 1usize..500,
            eps in prop::collection::vec(finite(), 1..6),
            extrap_eps in prop::collection::vec(finite(), 1..6),
            stride in 1usize..50,
            r_list in prop::collection::vec(1usize..100, 1..8),
            extrapolatory in any::<bool>(),
            stokes_nu in positive(),
            mms_omega in finite(),
            c41 in positive(),
            limit41 in positive(),
            limit42 in positive(),
            seed in any::<u64>(),
            out in "[a-zA-Z0-9_/.-]{1,30}",
        ) -> ExperimentConfig {
            let dt = 1.0 / f64::from(dt_k);
            ExperimentConfig {
                mesh,
                force: if manufactured { ForceId::Manufactured } else { ForceId::OffsetCircles },
                nu,
                dt,
                t_final: steps as f64 * dt,
                eps,
                extrap_eps,
                stride,
                r_list,
                mode: if extrapolatory { RomMode::Extrapolatory } else { RomMode::DataMining },
                stokes_nu,
                mms_omega,
                thresholds: Thresholds { c41, limit41, limit42 },
                seed,
                out_dir: out.into(),
            }
        }
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(cfg in config()) {
            prop_assume!(cfg.validate().is_ok());
            let text = cfg.serialize();
            let back = ExperimentConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.serialize(), text);
        }
    }
}
