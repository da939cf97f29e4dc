//! Report documents and their JSON/CSV exports.

use std::path::Path;

use lmface::analysis::{DecodingReport, LinearityReport, ReplicationReport, SeparationReport};
use lmface::vae::Variant;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The latent sizes every linearity CSV has a column for.
pub const TABLE_DIMS: [usize; 3] = [20, 100, 200];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityEntry {
    pub fit: LinearityReport,
    /// R² after randomly re-pairing student and teacher codes.
    pub null_r2_a: f64,
    pub null_r2_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityTable {
    pub students: Vec<LinearityEntry>,
}

impl LinearityTable {
    pub fn get(&self, variant: Variant, d: usize) -> Option<&LinearityEntry> {
        self.students
            .iter()
            .find(|e| e.fit.variant == Some(variant) && e.fit.d == d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationDocument {
    pub variant: Variant,
    pub d: usize,
    pub separation: SeparationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalDocument {
    pub variant: Variant,
    pub d: usize,
    pub steps: usize,
    pub offsets: Vec<f64>,
    /// Swept along the columns of the grid.
    pub shape_dims: Vec<usize>,
    /// Swept along the rows of the grid.
    pub app_dims: Vec<usize>,
    /// Step unit per latent dimension: the sd of the encoded training set.
    pub sds: Vec<f64>,
    pub figure: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingDocument {
    pub variant: Variant,
    pub d: usize,
    pub decoding: DecodingReport,
    pub figure: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationDocument {
    pub generator: ReplicationReport,
    pub linear: Option<ReplicationReport>,
}

/// Every report the pipeline writes under `reports/`.
#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Linearity(LinearityTable),
    Decoding(DecodingDocument),
    Separation(SeparationDocument),
    Traversal(TraversalDocument),
    Replication(ReplicationDocument),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown report format {s:?}, expected json or csv")),
        }
    }
}

pub const REPORT_KINDS: [&str; 5] = [
    "linearity",
    "decoding",
    "separation",
    "traversal",
    "replication",
];

fn num(v: f64) -> String {
    format!("{v:.4}")
}

impl Report {
    pub fn kind(&self) -> &'static str {
        match self {
            Report::Linearity(_) => "linearity",
            Report::Decoding(_) => "decoding",
            Report::Separation(_) => "separation",
            Report::Traversal(_) => "traversal",
            Report::Replication(_) => "replication",
        }
    }

    pub fn to_json(&self) -> String {
        let text = match self {
            Report::Linearity(r) => serde_json::to_string_pretty(r),
            Report::Decoding(r) => serde_json::to_string_pretty(r),
            Report::Separation(r) => serde_json::to_string_pretty(r),
            Report::Traversal(r) => serde_json::to_string_pretty(r),
            Report::Replication(r) => serde_json::to_string_pretty(r),
        };
        text.expect("reports serialize") + "\n"
    }

    pub fn from_json(kind: &str, text: &str) -> Result<Self, CliError> {
        let bad = |e: serde_json::Error| CliError::Config(format!("{kind} report: {e}"));
        Ok(match kind {
            "linearity" => Report::Linearity(serde_json::from_str(text).map_err(bad)?),
            "decoding" => Report::Decoding(serde_json::from_str(text).map_err(bad)?),
            "separation" => Report::Separation(serde_json::from_str(text).map_err(bad)?),
            "traversal" => Report::Traversal(serde_json::from_str(text).map_err(bad)?),
            "replication" => Report::Replication(serde_json::from_str(text).map_err(bad)?),
            _ => {
                return Err(CliError::Config(format!(
                    "unknown report kind {kind:?}, expected one of {}",
                    REPORT_KINDS.join(", ")
                )))
            }
        })
    }

    /// Tabular form; numbers have four decimals.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut put = |rec: Vec<String>| w.write_record(&rec).expect("in-memory CSV");
        match self {
            Report::Linearity(t) => {
                let mut dims: Vec<usize> = TABLE_DIMS.to_vec();
                for e in &t.students {
                    if !dims.contains(&e.fit.d) {
                        dims.push(e.fit.d);
                    }
                }
                dims.sort_unstable();
                let mut head = vec!["model".to_string(), "variant".to_string()];
                head.extend(dims.iter().map(|d| format!("d={d}")));
                put(head);
                for model in ["A", "B"] {
                    for variant in [Variant::Conv, Variant::Fc] {
                        let mut row = vec![model.to_string(), variant.label().to_string()];
                        for &d in &dims {
                            row.push(t.get(variant, d).map_or(String::new(), |e| {
                                num(if model == "A" { e.fit.r2_a } else { e.fit.r2_b })
                            }));
                        }
                        put(row);
                    }
                }
            }
            Report::Decoding(r) => {
                put(vec!["index".into(), "l1".into(), "l2".into()]);
                for (i, (a, b)) in r.decoding.l1.iter().zip(&r.decoding.l2).enumerate() {
                    put(vec![i.to_string(), num(*a), num(*b)]);
                }
            }
            Report::Separation(r) => {
                put(vec!["dim".into(), "r2_shape".into(), "r2_app".into()]);
                let s = &r.separation;
                for (j, (a, b)) in s.r2_shape.iter().zip(&s.r2_app).enumerate() {
                    put(vec![j.to_string(), num(*a), num(*b)]);
                }
            }
            Report::Traversal(r) => {
                put(vec!["axis".into(), "dim".into(), "sd".into()]);
                for (axis, dims) in [("shape", &r.shape_dims), ("appearance", &r.app_dims)] {
                    for &j in dims {
                        put(vec![axis.into(), j.to_string(), num(r.sds[j])]);
                    }
                }
            }
            Report::Replication(r) => {
                put([
                    "decoder", "n_train", "n_test", "mean_l1", "train_l1", "diverged",
                ]
                .map(String::from)
                .to_vec());
                for rep in std::iter::once(&r.generator).chain(&r.linear) {
                    let kind = serde_json::to_value(rep.decoder).expect("enum serializes");
                    put(vec![
                        kind.as_str().unwrap_or_default().to_string(),
                        rep.n_train.to_string(),
                        rep.n_test.to_string(),
                        rep.mean_l1.map_or(String::new(), num),
                        rep.train_l1.map_or(String::new(), num),
                        rep.diverged.clone().unwrap_or_default(),
                    ]);
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8")
    }
}

/// Writes `report` to `path`; parent directories are created.
pub fn export_report(report: &Report, format: Format, path: &Path) -> Result<(), CliError> {
    let text = match format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
