//! Seed aggregation and acceptance summaries over a results directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::runner::Manifest;
use crate::CliError;

/// Subdirectory of a results directory that receives report output.
pub const REPORT_DIR: &str = "report";

/// A bound on the seed-averaged window mean of one metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub name: String,
    pub group: String,
    pub metric: String,
    /// Divide by the window mean of this metric, e.g. detected over completed clones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_of: Option<String>,
    /// First cycle of the window.
    pub from: u64,
    /// One past the last cycle of the window.
    pub to: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl Target {
    fn admits(&self, v: f64) -> bool {
        self.min.map_or(true, |m| v >= m) && self.max.map_or(true, |m| v <= m)
    }

    fn bounds(&self) -> String {
        match (self.min, self.max) {
            (Some(a), Some(b)) => format!("[{a}, {b}]"),
            (Some(a), None) => format!(">= {a}"),
            (None, Some(b)) => format!("<= {b}"),
            (None, None) => "any".into(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetsFile {
    #[serde(rename = "target", default)]
    targets: Vec<Target>,
}

pub fn load_targets(path: &Path) -> Result<Vec<Target>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: TargetsFile = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(file.targets)
}

/// One seed's metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedTable {
    pub columns: Vec<String>,
    /// Row-major; missing cells are NaN.
    pub rows: Vec<Vec<f64>>,
}

impl SeedTable {
    pub fn parse(text: &str) -> Result<Self, csv::Error> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let columns = reader.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            rows.push(record?.iter().map(|c| c.parse().unwrap_or(f64::NAN)).collect());
        }
        Ok(SeedTable { columns, rows })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Per-cycle mean and standard deviation over seeds.
#[derive(Clone, Debug)]
pub struct GroupSummary {
    pub group: String,
    pub seeds: usize,
    pub columns: Vec<String>,
    pub cycles: Vec<u64>,
    /// `[cycle][column] -> (mean, std)`; NaN where no seed has a value.
    pub stats: Vec<Vec<(f64, f64)>>,
    tables: Vec<SeedTable>,
}

impl GroupSummary {
    fn build(group: String, tables: Vec<SeedTable>) -> Result<Self, CliError> {
        let columns = tables[0].columns.clone();
        if let Some(t) = tables.iter().find(|t| t.columns != columns) {
            return Err(CliError::MissingData(format!(
                "{group}: seeds disagree on columns ({} vs {})",
                t.columns.len(),
                columns.len()
            )));
        }
        let rows = tables.iter().map(|t| t.rows.len()).min().unwrap_or(0);
        let cycle_col = tables[0]
            .column("cycle")
            .ok_or_else(|| CliError::MissingData(format!("{group}: no cycle column")))?;
        let mut cycles = Vec::with_capacity(rows);
        let mut stats = Vec::with_capacity(rows);
        for r in 0..rows {
            cycles.push(tables[0].rows[r][cycle_col] as u64);
            stats.push(
                (0..columns.len())
                    .map(|c| mean_std(tables.iter().map(|t| t.rows[r][c])))
                    .collect(),
            );
        }
        Ok(GroupSummary {
            group,
            seeds: tables.len(),
            columns,
            cycles,
            stats,
            tables,
        })
    }

    /// Seed-averaged mean of `metric` over cycles in `[from, to)`.
    pub fn window_mean(&self, metric: &str, from: u64, to: u64) -> Option<f64> {
        let col = self.tables[0].column(metric)?;
        let cycle_col = self.tables[0].column("cycle")?;
        let per_seed: Vec<f64> = self
            .tables
            .iter()
            .filter_map(|t| {
                let vals: Vec<f64> = t
                    .rows
                    .iter()
                    .filter(|r| (from..to).contains(&(r[cycle_col] as u64)) && !r[col].is_nan())
                    .map(|r| r[col])
                    .collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        (!per_seed.is_empty()).then(|| per_seed.iter().sum::<f64>() / per_seed.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cycle,seeds");
        for c in self.columns.iter().filter(|c| *c != "cycle") {
            let _ = write!(out, ",{c}_mean,{c}_std");
        }
        out.push('\n');
        for (cycle, row) in self.cycles.iter().zip(&self.stats) {
            let _ = write!(out, "{cycle},{}", self.seeds);
            for (c, (m, s)) in self.columns.iter().zip(row) {
                if c == "cycle" {
                    continue;
                }
                if m.is_nan() {
                    out.push_str(",,");
                } else {
                    let _ = write!(out, ",{m:.6},{s:.6}");
                }
            }
            out.push('\n');
        }
        out
    }
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let vals: Vec<f64> = values.filter(|v| !v.is_nan()).collect();
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub target: Target,
    pub measured: f64,
    pub pass: bool,
}

#[derive(Debug)]
pub struct Report {
    pub groups: Vec<GroupSummary>,
    pub outcomes: Vec<Outcome>,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.pass).count()
    }

    /// Plain-text summary table followed by the acceptance lines.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<40} {:>5} {:>6} {:>18} {:>18} {:>12} {:>12}",
            "group", "seeds", "cycles", "malicious_links", "nonswappable", "eclipsed", "blacklisted"
        );
        for g in &self.groups {
            let last = g.cycles.last().copied().unwrap_or(0);
            let from = last.saturating_sub(last / 4);
            let cell = |metric: &str| {
                let col = g.columns.iter().position(|c| c == metric);
                match (col, g.stats.last()) {
                    (Some(c), Some(row)) if !row[c].0.is_nan() => format!("{:.4}±{:.4}", row[c].0, row[c].1),
                    _ => "-".into(),
                }
            };
            let _ = writeln!(
                out,
                "{:<40} {:>5} {:>6} {:>18} {:>18} {:>12} {:>12}",
                g.group,
                g.seeds,
                g.cycles.len(),
                g.window_mean("malicious_link_fraction", from, last + 1)
                    .map_or("-".into(), |v| format!("{v:.4}")),
                g.window_mean("nonswappable_fraction", from, last + 1)
                    .map_or("-".into(), |v| format!("{v:.4}")),
                cell("eclipsed"),
                cell("blacklisted"),
            );
        }
        if !self.outcomes.is_empty() {
            out.push('\n');
            for o in &self.outcomes {
                let t = &o.target;
                let _ = writeln!(
                    out,
                    "{} {}: {} over [{}, {}) of {} = {:.4} (want {})",
                    if o.pass { "PASS" } else { "FAIL" },
                    t.name,
                    match &t.ratio_of {
                        Some(d) => format!("{}/{d}", t.metric),
                        None => t.metric.clone(),
                    },
                    t.from,
                    t.to,
                    t.group,
                    o.measured,
                    t.bounds()
                );
            }
        }
        out
    }
}

/// Reads every `<group>.seed<N>.csv` in `dir`.
pub fn load_groups(dir: &Path) -> Result<Vec<GroupSummary>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "csv") {
            files.push(path);
        }
    }
    files.sort();
    let mut grouped: BTreeMap<String, Vec<SeedTable>> = BTreeMap::new();
    for path in files {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Some((group, _)) = stem.rsplit_once(".seed") else {
            continue;
        };
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let table =
            SeedTable::parse(&text).map_err(|e| CliError::MissingData(format!("{}: {e}", path.display())))?;
        grouped.entry(group.to_owned()).or_default().push(table);
    }
    if grouped.is_empty() {
        return Err(CliError::MissingData(format!("no metrics CSVs in {}", dir.display())));
    }
    grouped.into_iter().map(|(g, t)| GroupSummary::build(g, t)).collect()
}

pub fn evaluate(groups: &[GroupSummary], targets: &[Target]) -> Result<Vec<Outcome>, CliError> {
    targets
        .iter()
        .map(|t| {
            let g = groups
                .iter()
                .find(|g| g.group == t.group)
                .ok_or_else(|| CliError::MissingData(format!("target `{}`: no group `{}`", t.name, t.group)))?;
            let mean = |metric: &str| {
                g.window_mean(metric, t.from, t.to).ok_or_else(|| {
                    CliError::MissingData(format!("target `{}`: no `{metric}` data in [{}, {})", t.name, t.from, t.to))
                })
            };
            let mut measured = mean(&t.metric)?;
            if let Some(denominator) = &t.ratio_of {
                measured /= mean(denominator)?;
            }
            Ok(Outcome {
                target: t.clone(),
                measured,
                pass: t.admits(measured),
            })
        })
        .collect()
}

/// Aggregates `dir`, writes merged CSVs and `summary.txt` under
/// [`REPORT_DIR`], and checks `targets` (or the manifest's targets).
pub fn cmd_report(dir: &Path, targets: Option<&Path>) -> Result<Report, CliError> {
    let groups = load_groups(dir)?;
    let targets = match targets {
        Some(path) => load_targets(path)?,
        None => {
            let manifest = dir.join(crate::runner::MANIFEST);
            if manifest.exists() {
                Manifest::load(&manifest)?.targets
            } else {
                Vec::new()
            }
        }
    };
    let outcomes = evaluate(&groups, &targets)?;
    let report = Report { groups, outcomes };
    let out = dir.join(REPORT_DIR);
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    for g in &report.groups {
        let path = out.join(format!("{}.csv", g.group));
        fs::write(&path, g.to_csv()).map_err(|e| CliError::io(&path, e))?;
    }
    let path = out.join("summary.txt");
    fs::write(&path, report.summary()).map_err(|e| CliError::io(&path, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: &str = "# schema=1\ncycle,x,y\n0,1.0,\n1,3.0,2.0\n";
    const B: &str = "# schema=1\ncycle,x,y\n0,3.0,\n1,5.0,4.0\n";

    #[test]
    fn aggregates_mean_and_std() {
        let g = GroupSummary::build(
            "g".into(),
            vec![SeedTable::parse(A).unwrap(), SeedTable::parse(B).unwrap()],
        )
        .unwrap();
        assert_eq!(g.cycles, vec![0, 1]);
        assert_eq!(g.stats[1][1], (4.0, 1.0));
        assert!(g.stats[0][2].0.is_nan());
        assert_eq!(g.window_mean("x", 0, 2), Some(3.0));
        assert_eq!(g.window_mean("y", 0, 1), None);
        assert_eq!(g.to_csv().lines().nth(1).unwrap(), "0,2,2.000000,1.000000,,");
    }

    #[test]
    fn targets_check_bounds() {
        let g = GroupSummary::build("g".into(), vec![SeedTable::parse(A).unwrap()]).unwrap();
        let t = Target {
            name: "x".into(),
            group: "g".into(),
            metric: "x".into(),
            ratio_of: None,
            from: 0,
            to: 2,
            min: Some(1.5),
            max: Some(2.5),
        };
        let out = evaluate(std::slice::from_ref(&g), std::slice::from_ref(&t)).unwrap();
        assert!(out[0].pass);
        assert_eq!(out[0].measured, 2.0);
        let tight = Target { max: Some(1.9), ..t.clone() };
        assert!(!evaluate(std::slice::from_ref(&g), &[tight]).unwrap()[0].pass);
        let ratio = Target { ratio_of: Some("x".into()), min: Some(1.0), max: Some(1.0), ..t.clone() };
        assert!(evaluate(std::slice::from_ref(&g), &[ratio]).unwrap()[0].pass);
        let missing = Target { group: "h".into(), ..t };
        assert!(matches!(evaluate(&[g], &[missing]), Err(CliError::MissingData(_))));
    }
}
