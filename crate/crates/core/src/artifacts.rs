//! On-disk artifact formats: network JSON, dataset CSV, family directories,
//! bounds JSON, and the boundary-grid / evaluation CSVs.
//!
//! Field names and layouts are fixed so artifacts can be diffed across
//! tools. Floats round-trip exactly: serde_json emits the shortest decimal
//! that parses back to the same bits.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bab::BoundResult;
use crate::milp::ClassBound;
use crate::nn::{Architecture, DataPoint, Dataset, Layer, Network, NnError};
use crate::trainer::{LooFamily, TrainConfig};

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Invalid(#[from] NnError),
    #[error("missing artifact {path}; produce it with `idpguard {producer}` first")]
    Missing { path: PathBuf, producer: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> ArtifactError {
    ArtifactError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// Network JSON

/// Wire form of a network:
/// `{"architecture": [...], "layers": [{"weights": [[...]], "bias": [...]}]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub architecture: Vec<usize>,
    pub layers: Vec<Layer>,
}

pub fn network_document(net: &Network) -> NetworkDocument {
    NetworkDocument {
        architecture: net.architecture().layer_sizes().to_vec(),
        layers: net.layers().to_vec(),
    }
}

pub fn network_from_document(doc: NetworkDocument) -> Result<Network, NnError> {
    let arch = Architecture::new(doc.architecture)?;
    Network::new(arch, doc.layers)
}

pub fn save_network(net: &Network, path: &Path) -> Result<(), ArtifactError> {
    let json = serde_json::to_string_pretty(&network_document(net))
        .map_err(|e| format_err(path, e.to_string()))?;
    fs::write(path, json).map_err(io_err(path))
}

pub fn load_network(path: &Path) -> Result<Network, ArtifactError> {
    let text = read_required(path, "train")?;
    let doc: NetworkDocument =
        serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))?;
    Ok(network_from_document(doc)?)
}

fn read_required(path: &Path, producer: &str) -> Result<String, ArtifactError> {
    if !path.exists() {
        return Err(ArtifactError::Missing {
            path: path.to_path_buf(),
            producer: producer.to_string(),
        });
    }
    fs::read_to_string(path).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Dataset CSV

/// Write `x1,...,xd,label` rows with a header.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), ArtifactError> {
    let mut out = String::new();
    let header: Vec<String> = (1..=dataset.dim())
        .map(|i| format!("x{i}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for p in dataset.points() {
        for f in &p.features {
            out.push_str(&format_float(*f));
            out.push(',');
        }
        out.push_str(&p.label.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Load a dataset CSV: header row, feature columns, final column `label`.
/// Features are validated to lie in `[0,1]`.
pub fn load_dataset(path: &Path) -> Result<Dataset, ArtifactError> {
    let text = read_required(path, "synth")?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| format_err(path, e.to_string()))?
        .clone();
    if headers.len() < 2 || headers.iter().next_back() != Some("label") {
        return Err(format_err(
            path,
            "expected at least one feature column and a final column named 'label'",
        ));
    }
    let dim = headers.len() - 1;
    let mut points = Vec::new();
    let mut max_label = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        if record.len() != dim + 1 {
            return Err(format_err(
                path,
                format!("row {row_idx}: expected {} fields, got {}", dim + 1, record.len()),
            ));
        }
        let mut features = Vec::with_capacity(dim);
        for v in record.iter().take(dim) {
            let value: f64 = v
                .parse()
                .map_err(|_| format_err(path, format!("row {row_idx}: bad feature '{v}'")))?;
            features.push(value);
        }
        let label: usize = record[dim]
            .parse()
            .map_err(|_| format_err(path, format!("row {row_idx}: bad label '{}'", &record[dim])))?;
        max_label = max_label.max(label);
        points.push(DataPoint { features, label });
    }
    let num_classes = (max_label + 1).max(2);
    Ok(Dataset::new(points, num_classes)?)
}

/// SHA-256 of a file's bytes, hex-encoded. Recorded in family manifests so
/// resumed runs can detect a swapped dataset.
pub fn file_sha256(path: &Path) -> Result<String, ArtifactError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

// ---------------------------------------------------------------------------
// Family directory

#[derive(Debug, Serialize, Deserialize)]
pub struct FamilyManifest {
    pub config: TrainConfig,
    pub architecture: Vec<usize>,
    pub dataset_sha256: String,
    pub num_points: usize,
    pub num_classes: usize,
}

/// Persist a trained family as `manifest.json`, `full.json` and one
/// `omit_<i>.json` per member.
pub fn save_family(
    family: &LooFamily,
    manifest: &FamilyManifest,
    dir: &Path,
) -> Result<(), ArtifactError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| format_err(&manifest_path, e.to_string()))?;
    fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;
    save_network(&family.full, &dir.join("full.json"))?;
    for (i, net) in family.members() {
        save_network(net, &dir.join(format!("omit_{i}.json")))?;
    }
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<FamilyManifest, ArtifactError> {
    let path = dir.join("manifest.json");
    let text = read_required(&path, "train")?;
    serde_json::from_str(&text).map_err(|e| format_err(&path, e.to_string()))
}

pub fn load_family(dir: &Path) -> Result<(LooFamily, FamilyManifest), ArtifactError> {
    let manifest = load_manifest(dir)?;
    let full = load_network(&dir.join("full.json"))?;
    let mut omitted = BTreeMap::new();
    for i in 0..manifest.num_points {
        let net = load_network(&dir.join(format!("omit_{i}.json")))?;
        omitted.insert(i, net);
    }
    Ok((LooFamily { full, omitted }, manifest))
}

// ---------------------------------------------------------------------------
// Bounds JSON

/// Per-class entry of the bounds file:
/// `{"beta": number | "no_leaking_inputs", "exact": bool, "trace": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsEntry {
    pub beta: ClassBound,
    pub exact: bool,
    pub trace: Vec<crate::bab::TraceEntry>,
}

pub type BoundsFile = BTreeMap<String, BoundsEntry>;

pub fn bounds_entry(report: &BoundResult) -> BoundsEntry {
    BoundsEntry {
        beta: report.beta,
        exact: report.exact,
        trace: report.trace.clone(),
    }
}

pub fn save_bounds(bounds: &BoundsFile, path: &Path) -> Result<(), ArtifactError> {
    let json =
        serde_json::to_string_pretty(bounds).map_err(|e| format_err(path, e.to_string()))?;
    fs::write(path, json).map_err(io_err(path))
}

pub fn load_bounds(path: &Path) -> Result<BoundsFile, ArtifactError> {
    let text = read_required(path, "bound")?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

/// Flatten a bounds file into a per-class vector for guard construction.
pub fn class_bounds(bounds: &BoundsFile, num_classes: usize, path: &Path) -> Result<Vec<ClassBound>, ArtifactError> {
    let mut out = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let entry = bounds
            .get(&c.to_string())
            .ok_or_else(|| format_err(path, format!("bounds file has no entry for class {c}")))?;
        out.push(entry.beta);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Grid and evaluation CSVs

/// One cell of the 2D boundary grid export.
#[derive(Debug, Clone)]
pub struct GridRow {
    pub x1: f64,
    pub x2: f64,
    pub confidence: f64,
    pub predicted: usize,
    /// `confidence > beta_c`; empty when no bounds were supplied.
    pub above_bound: Option<bool>,
    /// Whether every family member agrees with the full network; empty when
    /// no family was supplied.
    pub members_agree: Option<bool>,
}

pub fn save_grid(rows: &[GridRow], path: &Path) -> Result<(), ArtifactError> {
    let mut out = String::from("x1,x2,confidence,predicted_class,above_bound,members_agree\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_float(r.x1),
            format_float(r.x2),
            format_float(r.confidence),
            r.predicted,
            opt_bool(r.above_bound),
            opt_bool(r.members_agree),
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

fn opt_bool(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    }
}

/// Load feature rows for evaluation. A trailing `label` column, when
/// present, is ignored.
pub fn load_inputs(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>, ArtifactError> {
    let text = read_required(path, "synth")?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| format_err(path, e.to_string()))?
        .clone();
    let has_label = headers.iter().next_back() == Some("label");
    let feature_cols = if has_label {
        headers.len() - 1
    } else {
        headers.len()
    };
    if feature_cols != dim {
        return Err(format_err(
            path,
            format!("expected {dim} feature columns, found {feature_cols}"),
        ));
    }
    let mut rows = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        let mut features = Vec::with_capacity(dim);
        for v in record.iter().take(dim) {
            features.push(
                v.parse()
                    .map_err(|_| format_err(path, format!("row {row_idx}: bad feature '{v}'")))?,
            );
        }
        rows.push(features);
    }
    Ok(rows)
}

/// Streamed writer for per-input evaluation results.
pub struct EvalWriter {
    file: fs::File,
    path: PathBuf,
}

impl EvalWriter {
    pub fn create(path: &Path) -> Result<Self, ArtifactError> {
        let mut file = fs::File::create(path).map_err(io_err(path))?;
        file.write_all(b"index,label,path\n").map_err(io_err(path))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn write_row(&mut self, index: usize, label: usize, path_taken: &str) -> Result<(), ArtifactError> {
        let line = format!("{index},{label},{path_taken}\n");
        self.file
            .write_all(line.as_bytes())
            .map_err(io_err(&self.path))
    }
}

/// Shortest decimal representation that parses back to the same f64.
pub fn format_float(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json uses ryu internally; going through Value keeps the CSV and
    // JSON representations of the same float identical.
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}
