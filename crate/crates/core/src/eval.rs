//! Embedding similarity scores between artworks and renders of their meshes.
//!
//! Embeddings come from an external model and are read from a line format:
//! `label<TAB>d<TAB>v1 v2 ... vd`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

/// Tolerance on `|‖v‖ - 1|` for treating a vector as unit length.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("embedding `{label}`: {reason}")]
    Invalid { label: String, reason: String },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding `{label}` is the zero vector")]
    ZeroVector { label: String },
    #[error("embedding `{label}` has norm {norm}, not unit length; use cosine_similarity")]
    NotNormalized { label: String, norm: f64 },
    #[error("no pairs to average")]
    NoPairs,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("no embeddings in input")]
    Empty,
    #[error("line {line}: dimension {found} differs from {expected} earlier in the file")]
    MixedDimensions { line: usize, expected: usize, found: usize },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("label sets differ: only in artworks {only_artworks:?}; only in `{method}` renders {only_renders:?}")]
    LabelMismatch { method: String, only_artworks: Vec<String>, only_renders: Vec<String> },
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    label: String,
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if values.is_empty() {
            return Err(EvalError::Invalid { label, reason: "dimension is zero".into() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::Invalid { label, reason: "non-finite component".into() });
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(EvalError::ZeroVector { label });
        }
        Ok(Self { label, values })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_dims(a: &Embedding, b: &Embedding) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(EvalError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dims(a, b)?;
    // Products commute, so swapping the arguments gives the identical result.
    let s = dot(&a.values, &b.values) / (a.norm() * b.norm());
    Ok(s.clamp(-1.0, 1.0))
}

/// Plain dot product, valid only for unit vectors.
pub fn dot_if_normalized(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dims(a, b)?;
    for e in [a, b] {
        let norm = e.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(EvalError::NotNormalized { label: e.label.clone(), norm });
        }
    }
    Ok(dot(&a.values, &b.values))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairScore {
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityReport {
    pub scores: Vec<PairScore>,
    pub mean: f64,
    pub count: usize,
}

/// Mean cosine similarity over pairs, summed in the given order.
/// Each score is labelled with the first embedding of its pair.
pub fn mean_similarity(pairs: &[(Embedding, Embedding)]) -> Result<SimilarityReport> {
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let scores = pairs
        .iter()
        .map(|(a, b)| Ok(PairScore { label: a.label.clone(), score: cosine_similarity(a, b)? }))
        .collect::<Result<Vec<_>>>()?;
    let mean = scores.iter().map(|s| s.score).sum::<f64>() / scores.len() as f64;
    Ok(SimilarityReport { count: scores.len(), scores, mean })
}

pub fn parse_embeddings(text: &str) -> Result<Vec<Embedding>> {
    let mut out: Vec<Embedding> = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| EvalError::Parse { line, reason };
        let mut fields = raw.splitn(3, '\t');
        let label = fields.next().unwrap_or_default();
        let dim_field = fields.next().ok_or_else(|| parse_err("expected label<TAB>d<TAB>values".into()))?;
        let values_field = fields.next().ok_or_else(|| parse_err("missing values field".into()))?;
        if label.is_empty() {
            return Err(parse_err("empty label".into()));
        }
        let dim: usize = dim_field
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad dimension `{dim_field}`")))?;
        let values = values_field
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(format!("bad number `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dim {
            return Err(parse_err(format!("declared dimension {dim} but found {} values", values.len())));
        }
        if let Some(first) = out.first() {
            if first.dim() != dim {
                return Err(EvalError::MixedDimensions { line, expected: first.dim(), found: dim });
            }
        }
        if !seen.insert(label.to_string()) {
            return Err(EvalError::DuplicateLabel { line, label: label.to_string() });
        }
        out.push(Embedding::new(label, values).map_err(|e| parse_err(e.to_string()))?);
    }
    if out.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(out)
}

pub fn load_embeddings(path: &Path) -> Result<Vec<Embedding>> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    parse_embeddings(&text)
}

pub fn format_embeddings(embeddings: &[Embedding]) -> String {
    let mut s = String::new();
    for e in embeddings {
        let values: Vec<String> = e.values.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}\t{}\t{}", e.label, e.dim(), values.join(" "));
    }
    s
}

/// Scores of several reconstruction methods against the same artworks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodComparison {
    /// Artwork labels in the order of the artwork file.
    pub artworks: Vec<String>,
    pub methods: Vec<(String, SimilarityReport)>,
}

/// Pairs every artwork with the same-labelled render of each method.
pub fn compare_methods(artworks: &[Embedding], renders: &[(String, Vec<Embedding>)]) -> Result<MethodComparison> {
    let mut methods = Vec::with_capacity(renders.len());
    for (method, list) in renders {
        let by_label: HashMap<&str, &Embedding> = list.iter().map(|e| (e.label(), e)).collect();
        let art_labels: BTreeSet<&str> = artworks.iter().map(|e| e.label()).collect();
        let only_artworks: Vec<String> =
            art_labels.iter().filter(|l| !by_label.contains_key(*l)).map(|l| l.to_string()).collect();
        let only_renders: Vec<String> = list
            .iter()
            .map(|e| e.label())
            .filter(|l| !art_labels.contains(l))
            .map(str::to_string)
            .collect();
        if !only_artworks.is_empty() || !only_renders.is_empty() {
            return Err(EvalError::LabelMismatch { method: method.clone(), only_artworks, only_renders });
        }
        let pairs: Vec<(Embedding, Embedding)> =
            artworks.iter().map(|a| (a.clone(), by_label[a.label()].clone())).collect();
        methods.push((method.clone(), mean_similarity(&pairs)?));
    }
    Ok(MethodComparison { artworks: artworks.iter().map(|e| e.label.clone()).collect(), methods })
}

impl MethodComparison {
    /// Artwork rows by method columns, four decimals, with a closing mean row.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Artwork".to_string()];
        header.extend(self.methods.iter().map(|(m, _)| m.clone()));
        rows.push(header);
        for (i, art) in self.artworks.iter().enumerate() {
            let mut row = vec![art.clone()];
            row.extend(self.methods.iter().map(|(_, r)| format!("{:.4}", r.scores[i].score)));
            rows.push(row);
        }
        let mut mean = vec!["Mean".to_string()];
        mean.extend(self.methods.iter().map(|(_, r)| format!("{:.4}", r.mean)));
        rows.push(mean);

        let cols = rows[0].len();
        let widths: Vec<usize> =
            (0..cols).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let render = |row: &[String]| -> String {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, cell)| if c == 0 { format!("{cell:<w$}", w = widths[c]) } else { format!("{cell:>w$}", w = widths[c]) })
                .collect();
            format!("| {} |\n", cells.join(" | "))
        };
        let rule: String = format!(
            "|{}|\n",
            widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|")
        );
        let mut out = render(&rows[0]);
        out.push_str(&rule);
        for row in &rows[1..rows.len() - 1] {
            out.push_str(&render(row));
        }
        out.push_str(&rule);
        out.push_str(&render(&rows[rows.len() - 1]));
        out
    }
}
