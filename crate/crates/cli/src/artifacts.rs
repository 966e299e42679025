//! Output directory bookkeeping: tables, dumps, records, asserted checks and the manifest.

use anyhow::Result;
use qls_core::evolve::Trajectory;
use qls_core::{io, Field};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// One asserted tolerance.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
    pub checks: Vec<Check>,
    field_dumps: bool,
    stride: usize,
}

pub fn fmt_f(v: f64) -> String {
    format!("{v:.17e}")
}

impl Artifacts {
    pub fn create(dir: &Path, field_dumps: bool, stride: usize) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), checks: Vec::new(), field_dumps, stride })
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), body)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn records(&mut self, name: &str, rec: &[(&str, String)]) -> Result<()> {
        io::write_records(&self.dir.join(name), rec)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn field(&mut self, stem: &str, f: &Field) -> Result<()> {
        if self.field_dumps {
            let name = format!("{stem}.bin");
            io::write_field(&self.dir.join(&name), f)?;
            self.files.push(name);
        }
        Ok(())
    }

    pub fn trajectory(&mut self, stem: &str, tr: &Trajectory) -> Result<()> {
        if self.stride > 0 {
            io::write_trajectory(&self.dir.join(stem), stem, tr, self.stride)?;
            self.files.push(format!("{stem}/{stem}.trajectory"));
        }
        Ok(())
    }

    /// Record `value ≤ tolerance`.
    pub fn check_le(&mut self, name: &str, value: f64, tolerance: f64) {
        self.checks.push(Check { name: name.into(), value, tolerance, pass: value <= tolerance });
    }

    /// Record a boolean condition.
    pub fn check_flag(&mut self, name: &str, ok: bool) {
        self.checks.push(Check { name: name.into(), value: f64::from(u8::from(ok)), tolerance: 1.0, pass: ok });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn checks_table(&mut self) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .checks
            .iter()
            .map(|c| vec![c.name.clone(), fmt_f(c.value), fmt_f(c.tolerance), c.pass.to_string()])
            .collect();
        self.table("checks.csv", &["name", "value", "tolerance", "pass"], &rows)
    }

    /// Write `manifest.txt` listing every artifact and the run status.
    pub fn manifest(&self, subcommand: &str, status: &str, exit_code: i32) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "subcommand={subcommand}");
        let _ = writeln!(s, "version={}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "status={status}");
        let _ = writeln!(s, "exit_code={exit_code}");
        let _ = writeln!(s, "artifacts={}", self.files.join(","));
        for c in &self.checks {
            let _ = writeln!(s, "check.{}={} tolerance={} pass={}", c.name, fmt_f(c.value), fmt_f(c.tolerance), c.pass);
        }
        std::fs::write(self.dir.join("manifest.txt"), s)?;
        Ok(())
    }
}
