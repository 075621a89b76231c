//! CSV tables, summary lines and the files they are written to.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::RunError;

/// One `name=pass|fail value=<float> threshold=<float>` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= threshold,
            value,
            threshold,
        }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            pass: value >= threshold,
            value,
            threshold,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{}={} value={} threshold={}",
            self.name,
            if self.pass { "pass" } else { "fail" },
            fmt_float(self.value),
            fmt_float(self.threshold)
        )
    }
}

/// Shortest round-trip representation in scientific notation.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:e}")
    }
}

/// 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// 8 significant digits.
pub fn fmt8(x: f64) -> String {
    format!("{x:.7e}")
}

/// A CSV table built row by row from already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<&'static str>,
    body: String,
    rows: usize,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            body: String::new(),
            rows: 0,
        }
    }

    pub fn push<S: AsRef<str>>(&mut self, cells: &[S]) {
        debug_assert_eq!(cells.len(), self.header.len());
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            self.body.push_str(c.as_ref());
        }
        self.body.push('\n');
        self.rows += 1;
    }

    /// Append rows rendered elsewhere (e.g. by a worker thread).
    pub fn extend(&mut self, other: Table) {
        debug_assert_eq!(self.header, other.header);
        self.body.push_str(&other.body);
        self.rows += other.rows;
    }

    pub fn header(&self) -> &[&'static str] {
        &self.header
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        out.push_str(&self.body);
        out
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// Written to `<experiment>_<seed>.csv`.
    pub table: Table,
    /// Further tables written to `<experiment>_<seed>_<suffix>.csv`.
    pub extra: Vec<(&'static str, Table)>,
    pub checks: Vec<Check>,
}

impl ExperimentOutput {
    pub fn new(table: Table) -> Self {
        Self {
            table,
            extra: Vec::new(),
            checks: Vec::new(),
        }
    }

    /// An empty result set is reported as the failing check `no_data`.
    pub fn finalize(mut self) -> Self {
        if self.table.rows() == 0 {
            self.checks.push(Check {
                name: "no_data".into(),
                pass: false,
                value: 0.0,
                threshold: 1.0,
            });
        }
        self
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{}", c.line());
        }
        s
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Write the CSV files and the summary; returns the paths written.
pub fn emit_report(
    dir: &Path,
    experiment: &str,
    seed: u64,
    output: &ExperimentOutput,
) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<(), RunError> {
        let path = dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    put(format!("{experiment}_{seed}.csv"), output.table.render())?;
    for (suffix, table) in &output.extra {
        put(format!("{experiment}_{seed}_{suffix}.csv"), table.render())?;
    }
    put(format!("{experiment}_{seed}.summary"), output.summary())?;
    Ok(written)
}
