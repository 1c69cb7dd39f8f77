//! Versioned CSV artifacts.
//!
//! Every file starts with a `# singait-csv-v1 <kind>` line, then the header
//! row, then data rows. Readers refuse files whose version/kind line or
//! column set does not match what the caller expects, naming exactly what
//! differs, so stale artifacts fail loudly instead of plotting garbage.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::{io_runtime, CliError};

pub const CSV_VERSION: &str = "singait-csv-v1";

/// Per-update training progress (means are over the trailing 100 episodes).
pub const TRAINING_COLUMNS: &[&str] = &[
    "update",
    "steps",
    "mean_ep_reward",
    "mean_ep_len",
    "mean_imit_nominal",
    "mean_perf",
    "policy_loss",
    "value_loss",
    "clip_frac",
    "approx_kl",
];

/// One row per finished episode, in completion order.
pub const EPISODE_COLUMNS: &[&str] = &[
    "wallclock",
    "update",
    "env_id",
    "length",
    "reason",
    "mean_imit_nominal",
    "mean_perf",
    "sum_total",
];

/// Per-policy-step evaluation trace (contacts encoded 0/1).
pub const TRAJECTORY_COLUMNS: &[&str] = &[
    "episode",
    "step",
    "t",
    "phase_sin",
    "phase_cos",
    "ref_l",
    "ref_r",
    "foot_l",
    "foot_r",
    "pelvis_x",
    "pelvis_z",
    "pitch",
    "vel_x",
    "target_x",
    "reward_total",
    "imit_nominal",
    "perf",
    "contact_l",
    "contact_r",
];

/// Per-substep physics trace.
pub const REPLAY_COLUMNS: &[&str] = &[
    "t",
    "q_x",
    "q_z",
    "q_pitch",
    "q_hip_l",
    "q_knee_l",
    "q_hip_r",
    "q_knee_r",
    "qd_x",
    "qd_z",
    "qd_pitch",
    "qd_hip_l",
    "qd_knee_l",
    "qd_hip_r",
    "qd_knee_r",
    "foot_l",
    "foot_r",
    "contact_l",
    "contact_r",
    "tau_hip_l",
    "tau_knee_l",
    "tau_hip_r",
    "tau_knee_r",
];

/// Shortest-round-trip rendering shared by every writer.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Buffered row writer that stamps the version line and header on create.
pub struct CsvWriter {
    out: BufWriter<File>,
    path: PathBuf,
    n_cols: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, kind: &str, columns: &[&str]) -> Result<Self, CliError> {
        let file = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)
            .map_err(|e| io_runtime("cannot create", path, e))?;
        let mut w = CsvWriter {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            n_cols: columns.len(),
        };
        w.raw_line(&format!("# {CSV_VERSION} {kind}"))?;
        w.raw_line(&columns.join(","))?;
        Ok(w)
    }

    fn raw_line(&mut self, line: &str) -> Result<(), CliError> {
        writeln!(self.out, "{line}").map_err(|e| io_runtime("cannot write", &self.path, e))
    }

    /// Write one data row; panics if the field count drifts from the header
    /// (that is a bug in the caller, not a user error).
    pub fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        assert_eq!(fields.len(), self.n_cols, "row width does not match header");
        self.raw_line(&fields.join(","))
    }

    /// Flush buffered rows to disk (also happens on drop, but errors are
    /// only visible here).
    pub fn flush(&mut self) -> Result<(), CliError> {
        self.out.flush().map_err(|e| io_runtime("cannot write", &self.path, e))
    }
}

/// A fully loaded CSV artifact; fields stay strings until a caller asks
/// for a numeric column.
#[derive(Debug)]
pub struct CsvTable {
    pub path: String,
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    /// Load `path`, insisting on the versioned header for `expect_kind`.
    pub fn read(path: &Path, expect_kind: &str) -> Result<Self, CliError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {shown}: {e}")))?;
        let mut lines = text.lines();

        let version = lines
            .next()
            .ok_or_else(|| CliError::config(format!("{shown}: empty file, expected a '# {CSV_VERSION} {expect_kind}' line")))?;
        let rest = version.strip_prefix("# ").unwrap_or(version);
        let mut parts = rest.split_whitespace();
        let (ver, kind) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
        if ver != CSV_VERSION {
            return Err(CliError::config(format!(
                "{shown}: unsupported format '{ver}', this build reads {CSV_VERSION}"
            )));
        }
        if kind != expect_kind {
            return Err(CliError::config(format!(
                "{shown}: file holds '{kind}' data, expected '{expect_kind}'"
            )));
        }

        let header = lines
            .next()
            .ok_or_else(|| CliError::config(format!("{shown}: missing header row")))?;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();

        let mut rows = Vec::new();
        for (idx, raw) in lines.enumerate() {
            let line_no = idx + 3; // version + header came first
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<String> = raw.split(',').map(|s| s.trim().to_string()).collect();
            if fields.len() != columns.len() {
                return Err(CliError::config(format!(
                    "{shown}:{line_no}: row has {} fields, header has {} columns",
                    fields.len(),
                    columns.len()
                )));
            }
            rows.push(fields);
        }
        Ok(CsvTable { path: shown, kind: kind.to_string(), columns, rows })
    }

    /// Index of a named column, or an error naming the column and listing
    /// what the file actually has.
    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| {
            CliError::config(format!(
                "{}: missing column '{name}' (file has: {})",
                self.path,
                self.columns.join(", ")
            ))
        })
    }

    /// A named column parsed as numbers.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let idx = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(row_no, row)| {
                row[idx].parse::<f64>().map_err(|_| {
                    CliError::config(format!(
                        "{}: column '{name}' row {}: '{}' is not a number",
                        self.path,
                        row_no + 1,
                        row[idx]
                    ))
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_sample(dir: &Path) -> PathBuf {
        let path = dir.join("sample.csv");
        let mut w = CsvWriter::create(&path, "training", &["a", "b"]).unwrap();
        w.row(&[num(1.0), num(2.5)]).unwrap();
        w.row(&[num(f64::NAN), num(-3e-4)]).unwrap();
        w.flush().unwrap();
        path
    }

    #[test]
    fn write_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_sample(dir.path());
        let t = CsvTable::read(&path, "training").unwrap();
        assert_eq!(t.columns, vec!["a", "b"]);
        assert_eq!(t.rows.len(), 2);
        let b = t.numeric_column("b").unwrap();
        assert_eq!(b, vec![2.5, -3e-4]);
        let a = t.numeric_column("a").unwrap();
        assert!(a[1].is_nan());
    }

    #[test]
    fn kind_and_version_are_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_sample(dir.path());
        let err = CsvTable::read(&path, "trajectory").unwrap_err();
        assert!(err.to_string().contains("'training'"), "{err}");
        assert!(err.to_string().contains("'trajectory'"), "{err}");

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "# singait-csv-v9 training\na,b\n1,2\n").unwrap();
        let err = CsvTable::read(&bad, "training").unwrap_err();
        assert!(err.to_string().contains("singait-csv-v9"), "{err}");
    }

    #[test]
    fn schema_errors_name_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_sample(dir.path());
        let t = CsvTable::read(&path, "training").unwrap();
        let err = t.column("steps").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'steps'"), "{msg}");
        assert!(msg.contains("a, b"), "{msg}");
    }

    #[test]
    fn ragged_and_non_numeric_rows_are_located() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "# singait-csv-v1 training\na,b\n1,2\n3\n").unwrap();
        let err = CsvTable::read(&ragged, "training").unwrap_err();
        assert!(err.to_string().contains(":4:"), "{err}");

        let words = dir.path().join("words.csv");
        std::fs::write(&words, "# singait-csv-v1 training\na,b\n1,fast\n").unwrap();
        let t = CsvTable::read(&words, "training").unwrap();
        let err = t.numeric_column("b").unwrap_err();
        assert!(err.to_string().contains("'fast'"), "{err}");
    }

    #[test]
    fn empty_file_and_missing_header_fail() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(CsvTable::read(&empty, "training").is_err());

        let headerless = dir.path().join("hl.csv");
        std::fs::write(&headerless, "# singait-csv-v1 training\n").unwrap();
        let err = CsvTable::read(&headerless, "training").unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");
    }
}
