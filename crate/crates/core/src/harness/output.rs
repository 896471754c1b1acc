//! Result tables, run directories and quick-look SVG plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// A named numeric table; `NaN` cells are written empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Columns drawn in the quick-look plot against the first column.
    #[serde(skip)]
    pub plot: Vec<String>,
    /// Extra key/value pairs for the sidecar (fit results and the like).
    #[serde(skip)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            plot: Vec::new(),
            extra: serde_json::Map::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn with_plot(mut self, cols: &[&str]) -> Self {
        self.plot = cols.iter().map(|c| c.to_string()).collect();
        self
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|v| if v.is_nan() { String::new() } else { format!("{v}") })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// One run directory: `config.json` plus a CSV and JSON sidecar per table.
#[derive(Debug, Clone)]
pub struct RunWriter {
    pub dir: PathBuf,
    pub config_hash: String,
    pub seed: u64,
    pub plots: bool,
    written: Vec<PathBuf>,
}

impl RunWriter {
    pub fn create(dir: &Path, config_json: &serde_json::Value, config_hash: &str, seed: u64, plots: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let doc = serde_json::json!({ "config_hash": config_hash, "config": config_json });
        let path = dir.join("config.json");
        write_text(&path, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config_hash: config_hash.to_string(),
            seed,
            plots,
            written: vec![path],
        })
    }

    pub fn write_table(&mut self, table: &Table) -> Result<()> {
        let csv_path = self.dir.join(format!("{}.csv", table.name));
        write_text(&csv_path, &table.to_csv_string())?;
        let mut side = serde_json::Map::new();
        side.insert("table".into(), table.name.clone().into());
        side.insert("config_hash".into(), self.config_hash.clone().into());
        side.insert("seed".into(), self.seed.into());
        side.insert("columns".into(), serde_json::to_value(&table.columns)?);
        side.insert("n_rows".into(), table.rows.len().into());
        for (k, v) in &table.extra {
            side.insert(k.clone(), v.clone());
        }
        let json_path = self.dir.join(format!("{}.json", table.name));
        write_text(&json_path, &(serde_json::to_string_pretty(&side)? + "\n"))?;
        self.written.push(csv_path);
        self.written.push(json_path);
        if self.plots && !table.plot.is_empty() {
            let svg_path = self.dir.join(format!("{}.svg", table.name));
            write_text(&svg_path, &svg_plot(table))?;
            self.written.push(svg_path);
        }
        Ok(())
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.written
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot of the `plot` columns against the first column.
pub fn svg_plot(table: &Table) -> String {
    let (w, h, m) = (640.0, 400.0, 60.0);
    let xs = table.column(&table.columns[0]).unwrap_or_default();
    let series: Vec<(String, Vec<f64>)> = table
        .plot
        .iter()
        .filter_map(|c| table.column(c).map(|v| (c.clone(), v)))
        .collect();
    let finite = |v: &&f64| v.is_finite();
    let (x0, x1) = bounds(xs.iter().filter(finite).copied());
    let (y0, y1) = bounds(series.iter().flat_map(|(_, v)| v.iter().filter(finite).copied()));
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, table.name);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(fx), h - m + 16.0, tick(fx));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, m - 4.0, sy(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, table.columns[0]);
    for (i, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (x, y) in xs.iter().zip(ys) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(d, "{}{:.2} {:.2}", if d.is_empty() { "M" } else { " L" }, sx(*x), sy(*y));
            }
        }
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
            w - m - 120.0,
            m + 14.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_sidecar() {
        let mut t = Table::new("demo", &["x", "y"]).with_plot(&["y"]);
        t.push(vec![0.0, 1.5]);
        t.push(vec![1.0, f64::NAN]);
        assert_eq!(t.to_csv_string(), "x,y\n0,1.5\n1,\n");
        let dir = tempfile::tempdir().unwrap();
        let mut w = RunWriter::create(dir.path(), &serde_json::json!({"a": 1}), "abc", 7, true).unwrap();
        w.write_table(&t).unwrap();
        assert_eq!(w.files().len(), 4);
        let side: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("demo.json")).unwrap()).unwrap();
        assert_eq!(side["config_hash"], "abc");
        assert_eq!(side["seed"], 7);
        let svg = std::fs::read_to_string(dir.path().join("demo.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
