//! Experiment reports and their files on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::harness::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    /// Non-finite values are stored as text so JSON stays lossless.
    pub fn num(x: f64) -> Self {
        if x.is_finite() {
            Cell::Num(x)
        } else {
            Cell::Text(x.to_string())
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Text(t) => t.parse().ok(),
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Num(x) => x.to_string(),
            Cell::Text(t) => t.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Num(x as f64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column; text cells that do not parse are skipped.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().filter_map(|r| r[j].as_f64()).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self, config_hash: &str) -> Result<String> {
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        writer.write_record(&self.columns)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(Cell::render))?;
        }
        let body = String::from_utf8(writer.into_inner().map_err(|e| LabError::Config(e.to_string()))?)
            .expect("csv output is utf-8");
        Ok(format!("# config_hash={config_hash}\n{body}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Acceptance criterion this check belongs to.
    pub criterion: u8,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub experiment: String,
    pub config: ExperimentConfig,
    pub tables: BTreeMap<String, Table>,
    pub summary: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        let mut config = config.clone();
        config.output_dir = None;
        Self {
            config_hash: config.hash(),
            experiment: config.experiment().to_string(),
            config,
            tables: BTreeMap::new(),
            summary: BTreeMap::new(),
            checks: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables.get(name).ok_or_else(|| LabError::NoData(format!("report has no table {name:?}")))
    }

    pub fn add_table(&mut self, name: &str, table: Table) {
        self.tables.insert(name.to_string(), table);
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.summary.insert(key.to_string(), v);
    }

    pub fn check(&mut self, name: &str, criterion: u8, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.to_string(), criterion, passed, detail: detail.into() });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::Data { path: path.to_path_buf(), message: e.to_string() })?;
        serde_json::from_str(&text).map_err(|e| LabError::Data { path: path.to_path_buf(), message: e.to_string() })
    }

    /// Writes `report.json`, `config.json`, one CSV per table and one SVG per
    /// plot into `root/<experiment>-<hash>`; returns that directory.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let dir = root.join(self.config.run_dir_name());
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("report.json"), self.to_json())?;
        let mut config = serde_json::to_string_pretty(&serde_json::json!({
            "config_hash": self.config_hash,
            "config": serde_json::from_str::<serde_json::Value>(&self.config.canonical_json())?,
        }))?;
        config.push('\n');
        fs::write(dir.join("config.json"), config)?;
        for (name, table) in &self.tables {
            fs::write(dir.join(format!("{name}.csv")), table.to_csv(&self.config_hash)?)?;
        }
        for kind in crate::harness::svg::PlotKind::for_experiment(&self.experiment) {
            let svg = crate::harness::svg::render_plot(self, *kind)?;
            fs::write(dir.join(format!("{}.svg", kind.name())), svg)?;
        }
        Ok(dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_hash_header_and_quotes() {
        let mut t = Table::new(&["name", "value"]);
        t.push(vec!["a,b".into(), 1.5.into()]);
        t.push(vec!["plain".into(), f64::NAN.into()]);
        let text = t.to_csv("abc").unwrap();
        assert_eq!(text, "# config_hash=abc\nname,value\n\"a,b\",1.5\nplain,NaN\n");
    }

    #[test]
    fn report_json_round_trip() {
        let cfg = ExperimentConfig::default_for("calibration").unwrap();
        let mut r = ExperimentReport::new(&cfg);
        let mut t = Table::new(&["x"]);
        t.push(vec![0.1.into()]);
        t.push(vec![f64::INFINITY.into()]);
        r.add_table("t", t);
        r.set("k", 3.0);
        r.check("c", 5, true, "ok");
        let back: ExperimentReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.table("t").unwrap().numeric_column("x").unwrap()[1], f64::INFINITY);
    }
}
