//! Binary field files and CSV reports.
//!
//! Field file (`snapshots.bin`, `averages.bin`, `initial.bin`): the 7 bytes
//! `ENSPOD1`, then `n_vel`, `J`, levels per member as little-endian `u64`,
//! `dt` as `f64`, `stride` as `u64`, then every column as little-endian `f64`,
//! member-major.
//!
//! Basis file (`basis.bin`): the 7 bytes `ENSPODB`, then `n_vel`, modes, rank,
//! eigenvalue count and snapshot fingerprint as `u64`, the eigenvalues, the
//! gradient energies, and the mode vectors.
//!
//! CSV files have a header row; floats are written in the shortest form that
//! parses back to the same value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use enspod::diagnostics::StabilityReport;
use enspod::ensemble::SeriesRow;
use enspod::pod::{PodBasis, SnapshotSet};
use enspod::Discretization;

use crate::error::{CliError, CliResult};

pub const FIELD_MAGIC: &[u8; 7] = b"ENSPOD1";
pub const BASIS_MAGIC: &[u8; 7] = b"ENSPODB";

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, v: &[f64]) {
    buf.reserve(8 * v.len());
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> CliError {
        CliError::Format { path: self.path.to_path_buf(), message: message.into() }
    }

    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| self.err(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, magic: &[u8; 7]) -> CliResult<()> {
        if self.take(7)? != magic {
            return Err(self.err(format!("expected magic {:?}", String::from_utf8_lossy(magic))));
        }
        Ok(())
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> CliResult<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.err(format!("count {v} does not fit in memory")))
    }

    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn f64s(&mut self, n: usize) -> CliResult<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| self.err("column length overflows"))?;
        let raw = self.take(len)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn finish(&self) -> CliResult<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(CliError::io(path))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    std::fs::write(path, contents).map_err(CliError::io(path))
}

pub fn encode_fields(set: &SnapshotSet) -> Vec<u8> {
    let mut buf = Vec::with_capacity(48 + 8 * set.len() * set.n_vel());
    buf.extend_from_slice(FIELD_MAGIC);
    put_u64(&mut buf, set.n_vel() as u64);
    put_u64(&mut buf, set.n_members() as u64);
    put_u64(&mut buf, set.per_member() as u64);
    put_f64s(&mut buf, &[set.dt()]);
    put_u64(&mut buf, set.stride() as u64);
    for c in set.columns() {
        put_f64s(&mut buf, c);
    }
    buf
}

pub fn decode_fields(path: &Path, bytes: &[u8]) -> CliResult<SnapshotSet> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.magic(FIELD_MAGIC)?;
    let n_vel = r.usize()?;
    let members = r.usize()?;
    let levels = r.usize()?;
    let dt = r.f64()?;
    let stride = r.usize()?;
    let count = members.checked_mul(levels).ok_or_else(|| r.err("column count overflows"))?;
    if count.checked_mul(n_vel).and_then(|n| n.checked_mul(8)) != Some(bytes.len().saturating_sub(r.pos)) {
        return Err(r.err(format!("payload does not hold {count} columns of length {n_vel}")));
    }
    let columns = (0..count).map(|_| r.f64s(n_vel)).collect::<CliResult<Vec<_>>>()?;
    r.finish()?;
    Ok(SnapshotSet::new(columns, members, dt, stride)?)
}

pub fn write_fields(path: &Path, set: &SnapshotSet) -> CliResult<()> {
    write_file(path, encode_fields(set))
}

pub fn read_fields(path: &Path) -> CliResult<SnapshotSet> {
    decode_fields(path, &read_bytes(path)?)
}

pub fn encode_basis(basis: &PodBasis) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(BASIS_MAGIC);
    put_u64(&mut buf, basis.n_vel() as u64);
    put_u64(&mut buf, basis.n_modes() as u64);
    put_u64(&mut buf, basis.rank() as u64);
    put_u64(&mut buf, basis.spectrum().len() as u64);
    put_u64(&mut buf, basis.fingerprint());
    put_f64s(&mut buf, basis.spectrum());
    put_f64s(&mut buf, basis.gradient_energies());
    for v in basis.vectors() {
        put_f64s(&mut buf, v);
    }
    buf
}

pub fn decode_basis(disc: &Discretization, path: &Path, bytes: &[u8]) -> CliResult<PodBasis> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.magic(BASIS_MAGIC)?;
    let n_vel = r.usize()?;
    let modes = r.usize()?;
    let rank = r.usize()?;
    let n_eig = r.usize()?;
    let fingerprint = r.u64()?;
    if n_vel != disc.n_vel() {
        return Err(r.err(format!("basis has {n_vel} velocity dofs, the mesh gives {}", disc.n_vel())));
    }
    let spectrum = r.f64s(n_eig)?;
    let energies = r.f64s(n_eig)?;
    let vectors = (0..modes).map(|_| r.f64s(n_vel)).collect::<CliResult<Vec<_>>>()?;
    r.finish()?;
    Ok(PodBasis::from_parts(disc, vectors, spectrum, energies, rank, fingerprint)?)
}

pub fn write_basis(path: &Path, basis: &PodBasis) -> CliResult<()> {
    write_file(path, encode_basis(basis))
}

pub fn read_basis(disc: &Discretization, path: &Path) -> CliResult<PodBasis> {
    decode_basis(disc, path, &read_bytes(path)?)
}

/// Shortest decimal that parses back to `v`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

/// `i, lambda, cumfrac` over the whole spectrum, 1-based.
pub fn eigenvalues_csv(spectrum: &[f64]) -> String {
    let total: f64 = spectrum.iter().map(|l| l.max(0.0)).sum();
    let mut acc = 0.0;
    csv(
        "i,lambda,cumfrac",
        spectrum.iter().enumerate().map(|(i, &l)| {
            acc += l.max(0.0);
            let frac = if total > 0.0 { acc / total } else { 0.0 };
            format!("{},{},{}", i + 1, num(l), num(frac))
        }),
    )
}

pub fn errors_csv(rows: &[(usize, f64)]) -> String {
    csv("R,rel_error", rows.iter().map(|(r, e)| format!("{r},{}", num(*e))))
}

pub fn timeseries_csv(series: &[SeriesRow]) -> String {
    csv(
        "step,time,member,energy,enstrophy",
        series.iter().map(|r| {
            let member = r.member.map_or_else(|| "ave".to_string(), |m| m.to_string());
            format!("{},{},{member},{},{}", r.step, num(r.time), num(r.energy), num(r.enstrophy))
        }),
    )
}

pub fn stability_csv(report: &StabilityReport) -> String {
    csv(
        "step,member,ind41,ind42,ok41,ok42",
        report.rows.iter().map(|r| {
            format!("{},{},{},{},{},{}", r.step, r.member, num(r.ind41), num(r.ind42), r.ok41, r.ok42)
        }),
    )
}

/// `step, member, a_1, ..., a_R` for every level and member.
pub fn coefficients_csv(first_level: usize, levels: &[Vec<Vec<f64>>]) -> String {
    let r = levels.first().and_then(|l| l.first()).map_or(0, Vec::len);
    let mut header = String::from("step,member");
    for i in 1..=r {
        let _ = write!(header, ",a_{i}");
    }
    let rows = levels.iter().enumerate().flat_map(|(n, members)| {
        members.iter().enumerate().map(move |(j, a)| {
            let mut s = format!("{},{j}", first_level + n);
            for v in a {
                s.push(',');
                s.push_str(&num(*v));
            }
            s
        })
    });
    csv(&header, rows)
}

/// Builds `dir/name`.
pub fn path_in(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
