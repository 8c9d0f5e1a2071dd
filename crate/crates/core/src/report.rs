//! CSV tables and versioned JSON documents.
//!
//! CSV files always carry a header, use `,` and `\n`, and print every float
//! with 17 significant digits so that values round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::BoundReport;
use crate::config::RunConfig;
use crate::geometry::{GeometryGrid, Tensor2};
use crate::lindblad::{JumpSpec, PositivityScan};
use crate::models::mesh_point;
use crate::response::{OpticalWeightResult, WeightSweepRow};
use crate::topology::ChernResult;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("unsupported schema version {found} (this build reads up to {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("grid {nx}x{ny} holds {records} records")]
    Shape { nx: usize, ny: usize, records: usize },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let written = w
            .write_record(&self.header)
            .and_then(|_| self.rows.iter().try_for_each(|row| w.write_record(row.iter().map(|v| fmt_float(*v)))));
        written.expect("writing to memory");
        let bytes = w.into_inner().expect("flushing to memory");
        String::from_utf8(bytes).expect("ascii output")
    }
}

const COMPONENTS: [&str; 4] = ["xx", "xy", "yx", "yy"];

fn tensor_values(t: &Tensor2) -> impl Iterator<Item = f64> + '_ {
    (0..4).flat_map(move |c| {
        let z = t[c / 2][c % 2];
        [z.re, z.im]
    })
}

/// One row per k-point in mesh order.
pub fn geometry_csv(grid: &GeometryGrid) -> CsvTable {
    let mut header = vec!["kx".to_string(), "ky".to_string()];
    for name in ["qgtRR", "qgtLL", "qgtLR", "qgtRL"] {
        for c in COMPONENTS {
            header.push(format!("{name}_{c}_re"));
            header.push(format!("{name}_{c}_im"));
        }
    }
    header.extend(["F_re", "F_im", "normProduct"].map(String::from));
    let mut t = CsvTable::new(header);
    for (idx, r) in grid.records.iter().enumerate() {
        let k = mesh_point(idx / grid.ny, idx % grid.ny, grid.nx, grid.ny);
        let mut row = vec![k.kx, k.ky];
        for q in [&r.qgt_rr, &r.qgt_ll, &r.qgt_lr, &r.qgt_rl] {
            row.extend(tensor_values(q));
        }
        row.extend([r.curvature.re, r.curvature.im, r.norm_product]);
        t.push(row);
    }
    t
}

/// Margin table of one bound; `at` columns are named by the caller.
pub fn bound_csv(report: &BoundReport, at_names: &[&str]) -> CsvTable {
    let mut header: Vec<String> = at_names.iter().map(|s| s.to_string()).collect();
    header.extend(["lhs", "rhs", "margin"].map(String::from));
    let mut t = CsvTable::new(header);
    for p in &report.per_point {
        let mut row: Vec<f64> = (0..at_names.len()).map(|i| p.at.get(i).copied().unwrap_or(f64::NAN)).collect();
        row.extend([p.lhs, p.rhs, p.margin]);
        t.push(row);
    }
    t
}

pub fn sweep_csv(rows: &[WeightSweepRow]) -> CsvTable {
    let mut t = CsvTable::new([
        "Gamma",
        "chern",
        "arg_infimum",
        "weight_numeric",
        "weight_closed",
        "weight_quadrature",
        "weight_numeric_eta10",
        "ln_eta_coefficient",
        "bound_rhs",
        "margin",
    ]);
    for r in rows {
        t.push(vec![
            r.big_gamma,
            r.chern as f64,
            r.arg_infimum,
            r.weight_numeric,
            r.weight_closed,
            r.weight_quadrature,
            r.weight_numeric_eta10,
            r.ln_eta_coefficient,
            r.bound_rhs,
            r.margin,
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GeometryDocument {
    pub schema_version: u32,
    pub config: RunConfig,
    pub grid: GeometryGrid,
}

impl GeometryDocument {
    pub fn new(config: &RunConfig, grid: GeometryGrid) -> Self {
        GeometryDocument { schema_version: SCHEMA_VERSION, config: config.clone(), grid }
    }
}

/// Reads a geometry document and checks its version and shape.
pub fn read_grid_json(text: &str) -> Result<GeometryDocument, ReportError> {
    let doc: GeometryDocument = serde_json::from_str(text).map_err(|e| ReportError::Parse(e.to_string()))?;
    if doc.schema_version == 0 || doc.schema_version > SCHEMA_VERSION {
        return Err(ReportError::Schema { found: doc.schema_version });
    }
    let g = &doc.grid;
    if g.nx.checked_mul(g.ny) != Some(g.records.len()) {
        return Err(ReportError::Shape { nx: g.nx, ny: g.ny, records: g.records.len() });
    }
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LindbladSummary {
    pub k: [f64; 2],
    pub jumps: JumpSpec,
    /// Keldysh self-energy at `k` as (re, im) entries.
    pub sigma_k: Vec<Vec<[f64; 2]>>,
    pub roundtrip_residual: f64,
    pub positivity: PositivityScan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chern: Option<ChernResult>,
    pub bounds: Vec<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optical_weight: Option<OpticalWeightResult>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub weight_sweep: Vec<WeightSweepRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lindblad: Option<LindbladSummary>,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config: config.clone(),
            chern: None,
            bounds: Vec::new(),
            optical_weight: None,
            weight_sweep: Vec::new(),
            lindblad: None,
            timing: Timing { wall_seconds: 0.0, threads: 0 },
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), ReportError> {
    let path = dir.join(name);
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, contents))
        .map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

/// Formats a complex matrix for one-line summaries.
pub fn matrix_summary(m: &crate::models::CMat) -> String {
    let mut s = String::from("[");
    for i in 0..m.nrows() {
        s.push_str(if i == 0 { "[" } else { ", [" });
        for j in 0..m.ncols() {
            if j > 0 {
                s.push_str(", ");
            }
            let z = m[(i, j)];
            let _ = write!(s, "{:.6}{:+.6}i", z.re + 0.0, z.im + 0.0);
        }
        s.push(']');
    }
    s.push(']');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::scan_geometry;
    use crate::models::{RiceMele, RmParams};
    use crate::spectra::BandOrdering;

    #[test]
    fn csv_format() {
        let mut t = CsvTable::new(["a", "b"]);
        t.push(vec![1.0, -0.1]);
        assert_eq!(t.render(), "a,b\n1.0000000000000000e0,-1.0000000000000001e-1\n");
        let v: f64 = fmt_float(0.1).parse().unwrap();
        assert_eq!(v, 0.1);
    }

    #[test]
    fn geometry_document_roundtrip() {
        let m = RiceMele::new(RmParams::default()).unwrap();
        let grid = scan_geometry(&m, 0, BandOrdering::DescendingReal, 8, 8).unwrap();
        let csv = geometry_csv(&grid);
        assert_eq!(csv.header.len(), 2 + 32 + 3);
        assert_eq!(csv.rows.len(), 64);
        let doc = GeometryDocument::new(&RunConfig::default(), grid);
        let back = read_grid_json(&to_json(&doc)).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn reader_rejects_bad_documents() {
        assert!(read_grid_json("{").is_err());
        let m = RiceMele::new(RmParams::default()).unwrap();
        let mut grid = scan_geometry(&m, 0, BandOrdering::DescendingReal, 8, 8).unwrap();
        grid.records.pop();
        let doc = GeometryDocument::new(&RunConfig::default(), grid);
        assert!(matches!(read_grid_json(&to_json(&doc)), Err(ReportError::Shape { .. })));
        let mut doc = doc;
        doc.schema_version = 99;
        assert!(matches!(read_grid_json(&to_json(&doc)), Err(ReportError::Schema { .. })));
    }
}
