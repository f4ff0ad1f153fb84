//! Result rows and the frozen CSV column contract.
//!
//! Schema v1 columns:
//! schema_version, experiment, check, params, n, value, stderr, n_samples,
//! ess, seed, tolerance, status. Optional fields serialize as empty cells;
//! floats use Rust's shortest round-trip formatting, so identical runs
//! produce identical bytes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::estimate::Estimate;

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 12] = [
    "schema_version",
    "experiment",
    "check",
    "params",
    "n",
    "value",
    "stderr",
    "n_samples",
    "ess",
    "seed",
    "tolerance",
    "status",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
    Info,
}

impl Status {
    pub fn from_bool(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skip => "skip",
            Status::Info => "info",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub experiment: String,
    pub check: String,
    pub params: String,
    pub n: Option<u64>,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n_samples: Option<u64>,
    pub ess: Option<f64>,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    pub status: Status,
}

impl Row {
    pub fn info(experiment: &str, check: &str, value: f64) -> Row {
        Row {
            experiment: experiment.into(),
            check: check.into(),
            params: String::new(),
            n: None,
            value,
            stderr: None,
            n_samples: None,
            ess: None,
            seed: None,
            tolerance: None,
            status: Status::Info,
        }
    }

    pub fn gate(experiment: &str, check: &str, value: f64, tolerance: f64, pass: bool) -> Row {
        Row {
            tolerance: Some(tolerance),
            status: Status::from_bool(pass),
            ..Row::info(experiment, check, value)
        }
    }

    pub fn from_estimate(experiment: &str, check: &str, e: &Estimate) -> Row {
        let params = e
            .metadata
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        Row {
            experiment: experiment.into(),
            check: check.into(),
            params,
            n: None,
            value: e.value,
            stderr: Some(e.stderr),
            n_samples: Some(e.n_samples),
            ess: None,
            seed: Some(e.seed),
            tolerance: None,
            status: Status::Info,
        }
    }

    pub fn with_n(mut self, n: usize) -> Row {
        self.n = Some(n as u64);
        self
    }

    pub fn with_params(mut self, params: impl Into<String>) -> Row {
        self.params = params.into();
        self
    }

    pub fn with_ess(mut self, ess: f64) -> Row {
        self.ess = Some(ess);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Row {
        self.seed = Some(seed);
        self
    }

    pub fn with_stderr(mut self, stderr: f64) -> Row {
        self.stderr = Some(stderr);
        self
    }

    pub fn skip_if(mut self, skip: bool) -> Row {
        if skip {
            self.status = Status::Skip;
        }
        self
    }
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn fmt_opt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub rows: Vec<Row>,
}

impl Report {
    pub fn new() -> Report {
        Report::default()
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = Row>) {
        self.rows.extend(rows);
    }

    pub fn failures(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.status == Status::Fail)
            .count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            wtr.write_record([
                CSV_SCHEMA_VERSION.to_string(),
                r.experiment.clone(),
                r.check.clone(),
                r.params.clone(),
                fmt_opt_u64(r.n),
                format!("{}", r.value),
                fmt_opt_f64(r.stderr),
                fmt_opt_u64(r.n_samples),
                fmt_opt_f64(r.ess),
                fmt_opt_u64(r.seed),
                fmt_opt_f64(r.tolerance),
                r.status.as_str().to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.rows)?;
        writeln!(w)?;
        Ok(())
    }

    /// Writes <dir>/<name>.<format> and returns the path.
    pub fn save(&self, dir: &Path, name: &str, format: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{name}.{format}"));
        let file = std::fs::File::create(&path)?;
        match format {
            "csv" => self.write_csv(file)?,
            "json" => self.write_json(file)?,
            other => {
                return Err(crate::error::Error::Config(format!(
                    "unknown output format {other}"
                )))
            }
        }
        Ok(path)
    }

    /// One console line per row.
    pub fn print_summary(&self) {
        for r in &self.rows {
            let n = r.n.map(|n| format!(" n={n}")).unwrap_or_default();
            let tol = r
                .tolerance
                .map(|t| format!(" tol={t}"))
                .unwrap_or_default();
            println!(
                "[{}] {} {}{n} value={}{tol}",
                r.status.as_str().to_uppercase(),
                r.experiment,
                r.check,
                r.value
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_bytes_are_deterministic() {
        let mut report = Report::new();
        report.push(Row::info("survival", "estimate", 0.125).with_n(32));
        report.push(Row::gate("survival", "consistency", 1.5e-3, 3.0, true).with_seed(7));
        let mut a = Vec::new();
        let mut b = Vec::new();
        report.write_csv(&mut a).unwrap();
        report.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("schema_version,experiment,check"));
        assert!(text.contains("survival,estimate"));
        assert!(text.contains("0.125"));
        assert!(text.contains(",pass"));
    }

    #[test]
    fn failures_counted() {
        let mut report = Report::new();
        report.push(Row::gate("x", "a", 1.0, 0.5, false));
        report.push(Row::info("x", "b", 2.0));
        assert_eq!(report.failures(), 1);
    }
}
