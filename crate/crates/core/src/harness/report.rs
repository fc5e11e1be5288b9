use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub cell: String,
    pub statistic: String,
    pub value: f64,
    /// Monte-Carlo standard error of `value`; NaN when undefined.
    pub mc_stderr: f64,
    /// Replicates contributing to `value`.
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMetadata {
    pub preset: String,
    pub base_seed: u64,
    pub replicates: usize,
    pub version: String,
    pub threads: usize,
    pub wall_time_secs: f64,
}

/// Experiment output. Everything except `metadata.wall_time_secs` and
/// `metadata.threads` is a deterministic function of the spec, timing
/// statistics aside.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
}

/// Mean and its standard error (`sd / sqrt(k)`).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

impl ReportTable {
    pub fn find(&self, cell: &str, statistic: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.cell == cell && r.statistic == statistic)
    }

    pub fn value(&self, cell: &str, statistic: &str) -> Option<f64> {
        self.find(cell, statistic).map(|r| r.value)
    }

    pub fn push_summary(&mut self, cell: &str, statistic: &str, values: &[f64]) {
        let (value, mc_stderr) = mean_and_stderr(values);
        self.rows.push(ReportRow {
            cell: cell.to_string(),
            statistic: statistic.to_string(),
            value,
            mc_stderr,
            replicates: values.len(),
        });
    }

    pub fn push_count(&mut self, cell: &str, statistic: &str, count: usize, replicates: usize) {
        self.rows.push(ReportRow {
            cell: cell.to_string(),
            statistic: statistic.to_string(),
            value: count as f64,
            mc_stderr: f64::NAN,
            replicates,
        });
    }

    /// Aligned plain-text rendering with a metadata header.
    pub fn to_text(&self) -> String {
        let m = &self.metadata;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# preset {}  seed {}  replicates {}  version {}  threads {}  wall {:.2}s",
            m.preset, m.base_seed, m.replicates, m.version, m.threads, m.wall_time_secs
        );
        let cw = self.rows.iter().map(|r| r.cell.len()).max().unwrap_or(4).max(4);
        let sw = self.rows.iter().map(|r| r.statistic.len()).max().unwrap_or(9).max(9);
        let _ = writeln!(out, "{:<cw$}  {:<sw$}  {:>12}  {:>12}  {:>6}", "cell", "statistic", "value", "mc_stderr", "reps");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<cw$}  {:<sw$}  {:>12.6}  {:>12.6}  {:>6}",
                r.cell, r.statistic, r.value, r.mc_stderr, r.replicates
            );
        }
        out
    }

    /// Machine-readable rows; metadata is left to the text form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cell", "statistic", "value", "mc_stderr", "replicates"])?;
        for r in &self.rows {
            w.write_record([
                r.cell.clone(),
                r.statistic.clone(),
                r.value.to_string(),
                r.mc_stderr.to_string(),
                r.replicates.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
