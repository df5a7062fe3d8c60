//! Report files, comparison tables and hourly CSV series.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::evaluate::ScenarioReport;
use super::metrics::is_violation_hour;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_hash: String,
    pub feeder_hash: String,
    pub checkpoint_hash: Option<String>,
    pub seed: u64,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: String,
}

/// What `eval` writes: the manifest and the deterministic body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub manifest: RunManifest,
    pub body: ScenarioReport,
}

impl ReportFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// The body alone, as embedded in [`ReportFile::to_json`].
    pub fn body_json(&self) -> String {
        serde_json::to_string_pretty(&self.body).expect("report serializes")
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))
    }
}

pub const TABLE_HEADER: [&str; 5] = ["Scenario", "Mean", "Min", "Max", "Viol."];

/// Aligned comparison table, one row per report in the given order.
pub fn render_table(reports: &[&ScenarioReport]) -> String {
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            let s = &r.summary;
            [
                r.label.clone(),
                format!("{:.3}", s.mean),
                format!("{:.3}", s.min),
                format!("{:.3}", s.max),
                s.violation_hours.to_string(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = TABLE_HEADER.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| -> String {
        let mut out = format!("{:<w$}", cells[0], w = widths[0]);
        for (cell, w) in cells[1..].iter().zip(&widths[1..]) {
            let _ = write!(out, "  {cell:>w$}");
        }
        out.push('\n');
        out
    };
    let header: Vec<String> = TABLE_HEADER.iter().map(|s| s.to_string()).collect();
    let mut out = line(&header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&line(&rule));
    for row in &rows {
        out.push_str(&line(row));
    }
    out
}

/// Parses the rows of [`render_table`] back into `(label, violation hours)`.
pub fn parse_table_violations(table: &str) -> Vec<(String, usize)> {
    table
        .lines()
        .skip(2)
        .take_while(|l| !l.trim().is_empty())
        .filter_map(|l| {
            let (head, viol) = l.trim_end().rsplit_once(' ')?;
            let mut fields: Vec<&str> = head.split_whitespace().collect();
            fields.truncate(fields.len().checked_sub(3)?);
            Some((fields.join(" "), viol.trim().parse().ok()?))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".into(), |x| x.to_string())
}

/// Hourly series: 4 voltage columns, 3 per hub, then SOC and EV count.
pub fn hourly_csv(report: &ScenarioReport) -> String {
    let mut out = String::from("hour,v_mean,v_min,v_max");
    for bus in &report.hub_buses {
        let _ = write!(out, ",{bus}_p_kw,{bus}_q_kvar,{bus}_rho");
    }
    out.push_str(",soc_mean,ev_count\n");
    for h in &report.hours {
        let v = h.voltage;
        let _ = write!(
            out,
            "{},{},{},{}",
            h.hour,
            opt(v.map(|s| s.mean)),
            opt(v.map(|s| s.min)),
            opt(v.map(|s| s.max))
        );
        for hub in &h.hubs {
            let _ = write!(out, ",{},{},{}", hub.p_kw, hub.q_kvar, hub.rho);
        }
        let soc = h.soc_mean.map_or_else(String::new, |s| s.to_string());
        let _ = writeln!(out, ",{soc},{}", h.ev_count);
    }
    out
}

/// Violation hours recomputed from [`hourly_csv`] output.
pub fn violation_hours_from_csv(csv: &str) -> usize {
    csv.lines()
        .skip(1)
        .filter_map(|l| l.split(',').nth(1)?.parse::<f64>().ok())
        .filter(|&m| is_violation_hour(m))
        .count()
}

fn slug(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    while s.contains("__") {
        s = s.replace("__", "_");
    }
    s.trim_matches('_').to_string()
}

fn manifest_footer(files: &[&ReportFile]) -> String {
    let mut out = String::new();
    for (i, f) in files.iter().enumerate() {
        let m = &f.manifest;
        let _ = writeln!(
            out,
            "# run {}: {} [{}] scenario={} feeder={} checkpoint={} seed={} version={} started={} finished={}",
            i + 1,
            f.body.label,
            f.body.scenario,
            m.scenario_hash,
            m.feeder_hash,
            m.checkpoint_hash.as_deref().unwrap_or("-"),
            m.seed,
            m.code_version,
            m.started_at,
            m.finished_at
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub table: String,
    pub files: Vec<PathBuf>,
}

/// Writes `table.txt` (table plus manifest footer) and one hourly CSV per
/// run into `out_dir`.
pub fn write_report(files: &[ReportFile], out_dir: &Path) -> Result<ReportOutput, HarnessError> {
    if files.is_empty() {
        return Err(HarnessError::Report("at least one report is required".into()));
    }
    let feeder = &files[0].body.feeder_hash;
    if let Some(other) = files.iter().find(|f| &f.body.feeder_hash != feeder) {
        return Err(HarnessError::Report(format!(
            "reports use different feeders ({} vs {})",
            files[0].body.feeder, other.body.feeder
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let bodies: Vec<&ScenarioReport> = files.iter().map(|f| &f.body).collect();
    let refs: Vec<&ReportFile> = files.iter().collect();
    let table = render_table(&bodies);
    let mut written = Vec::new();
    let table_path = out_dir.join("table.txt");
    let text = format!("{table}\n{}", manifest_footer(&refs));
    fs::write(&table_path, text).map_err(|e| HarnessError::io(&table_path, e))?;
    written.push(table_path);
    for (i, body) in bodies.iter().enumerate() {
        let path = out_dir.join(format!("{:02}_{}_{}.csv", i + 1, slug(&body.scenario), slug(&body.label)));
        fs::write(&path, hourly_csv(body)).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(ReportOutput {
        table,
        files: written,
    })
}
