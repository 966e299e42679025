//! Field dumps, trajectory dumps and `key=value` records.
//!
//! A field dump is a raw little-endian array of interleaved `(re, im)` f64 values in
//! row-major order over the frequency box `[−N/2, N/2)^d`, with a sidecar text manifest
//! `<file>.manifest`.

use crate::error::{validation, Result};
use crate::evolve::Trajectory;
use crate::field::Field;
use crate::grid::TorusGrid;
use crate::C64;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const CONVENTION: &str = "freq:[-N/2,N/2)";

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Write `f` and its sidecar manifest.
pub fn write_field(path: &Path, f: &Field) -> Result<()> {
    let g = f.grid();
    let mut sorted = vec![C64::new(0.0, 0.0); g.len()];
    for (i, c) in f.coeffs().iter().enumerate() {
        sorted[g.sorted_position(i)] = *c;
    }
    let mut bytes = Vec::with_capacity(16 * g.len());
    for c in &sorted {
        bytes.extend_from_slice(&c.re.to_le_bytes());
        bytes.extend_from_slice(&c.im.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let file = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    write_records(
        &sidecar(path),
        &[
            ("file", file),
            ("dim", g.dim().to_string()),
            ("n", g.n().to_string()),
            ("count", g.len().to_string()),
            ("dtype", "f64-le".into()),
            ("layout", "interleaved-re-im,row-major".into()),
            ("convention", CONVENTION.into()),
        ],
    )
}

/// Read a dump written by [`write_field`].
pub fn read_field(path: &Path) -> Result<Field> {
    let rec = read_records(&sidecar(path))?;
    let get = |k: &str| rec.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone());
    if get("convention").as_deref() != Some(CONVENTION) {
        return validation(format!("{}: unknown frequency convention", path.display()));
    }
    let parse = |k: &str| -> Result<usize> {
        get(k).and_then(|v| v.parse().ok()).ok_or_else(|| crate::Error::Validation(format!("manifest lacks {k}")))
    };
    let g = TorusGrid::new(parse("dim")?, parse("n")?)?;
    let bytes = fs::read(path)?;
    if bytes.len() != 16 * g.len() {
        return validation(format!("{}: expected {} bytes, found {}", path.display(), 16 * g.len(), bytes.len()));
    }
    let val = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let c = (0..g.len())
        .map(|i| {
            let p = g.sorted_position(i);
            C64::new(val(16 * p), val(16 * p + 8))
        })
        .collect();
    Field::from_coeffs(g, c)
}

/// Write every `stride`-th snapshot as `<stem>_<index>.bin` plus `<stem>.trajectory`
/// listing `index time file`.
pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory, stride: usize) -> Result<Vec<PathBuf>> {
    let stride = stride.max(1);
    fs::create_dir_all(dir)?;
    let mut listing = String::from("# index time file\n");
    let mut files = Vec::new();
    let last = traj.states.len() - 1;
    for (i, s) in traj.states.iter().enumerate() {
        if i % stride != 0 && i != last {
            continue;
        }
        let name = format!("{stem}_{i:05}.bin");
        write_field(&dir.join(&name), s)?;
        let _ = writeln!(listing, "{i} {:.12e} {name}", traj.times[i]);
        files.push(dir.join(name));
    }
    fs::write(dir.join(format!("{stem}.trajectory")), listing)?;
    Ok(files)
}

/// Write `key=value` lines.
pub fn write_records(path: &Path, rec: &[(&str, String)]) -> Result<()> {
    let mut s = String::new();
    for (k, v) in rec {
        let _ = writeln!(s, "{k}={v}");
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('=').map(|(a, b)| (a.trim().to_string(), b.trim().to_string())))
        .collect())
}
