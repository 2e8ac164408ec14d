//! Sentence alignment by maximum cosine similarity of precomputed sentence
//! embeddings inside a window that slides forward along the target text.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum AlignError {
    #[error("embedding line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sentence vectors of a uniform dimension, none of them zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingTable {
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self, AlignError> {
        let mut table = Self::default();
        for (i, v) in vectors.into_iter().enumerate() {
            table.push(v).map_err(|reason| AlignError::Format { line: i + 1, reason })?;
        }
        Ok(table)
    }

    fn push(&mut self, v: Vec<f64>) -> Result<(), String> {
        if let Some(d) = self.dim() {
            if v.len() != d {
                return Err(format!("dimension {} differs from {d}", v.len()));
            }
        }
        if v.is_empty() {
            return Err("empty vector".into());
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err("non-finite value".into());
        }
        if v.iter().all(|&x| x == 0.0) {
            return Err("zero vector".into());
        }
        self.vectors.push(v);
        Ok(())
    }

    /// `None` until the first row is present.
    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(Vec::len)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// One whitespace-separated vector per line.
    pub fn parse(text: &str) -> Result<Self, AlignError> {
        let mut table = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| AlignError::Format {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            table
                .push(v)
                .map_err(|reason| AlignError::Format { line: i + 1, reason })?;
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.vectors {
            let row: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, AlignError> {
    EmbeddingTable::parse(&std::fs::read_to_string(path)?)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, AlignError> {
    if u.len() != v.len() {
        return Err(AlignError::Argument(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>();
    let nv = v.iter().map(|a| a * a).sum::<f64>();
    if nu == 0.0 || nv == 0.0 {
        return Err(AlignError::Argument("zero vector".into()));
    }
    // sqrt of the product keeps cos(u, u) exactly 1.
    Ok((dot / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignedPair {
    pub src: usize,
    pub tgt: usize,
    pub similarity: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlignmentResult {
    pub pairs: Vec<AlignedPair>,
}

impl AlignmentResult {
    /// Tab-separated `src \t tgt \t similarity` lines.
    pub fn to_tsv(&self) -> String {
        self.pairs
            .iter()
            .map(|p| format!("{}\t{}\t{:.6}\n", p.src, p.tgt, p.similarity))
            .collect()
    }

    pub fn is_monotonic(&self) -> bool {
        self.pairs
            .windows(2)
            .all(|w| w[0].src < w[1].src && w[0].tgt < w[1].tgt)
    }
}

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_MIN_SIM: f64 = 0.60;

/// Greedy monotonic alignment. For each source sentence in order, the best
/// target inside `[cursor, cursor + window)` is taken if it reaches
/// `min_sim` (earliest index on ties) and the cursor moves past it.
pub fn align_windows(
    src: &EmbeddingTable,
    tgt: &EmbeddingTable,
    window: usize,
    min_sim: f64,
) -> Result<AlignmentResult, AlignError> {
    if window == 0 {
        return Err(AlignError::Argument("window must be positive".into()));
    }
    if src.is_empty() || tgt.is_empty() {
        return Ok(AlignmentResult::default());
    }
    if src.dim() != tgt.dim() {
        return Err(AlignError::Argument(format!(
            "dimension mismatch: {:?} vs {:?}",
            src.dim(),
            tgt.dim()
        )));
    }
    let mut pairs = Vec::new();
    let mut cursor = 0;
    for (i, u) in src.vectors().iter().enumerate() {
        if cursor >= tgt.len() {
            break;
        }
        let end = (cursor + window).min(tgt.len());
        let mut best: Option<(usize, f64)> = None;
        for j in cursor..end {
            let sim = cosine_similarity(u, &tgt.vectors()[j])?;
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((j, sim));
            }
        }
        if let Some((j, sim)) = best.filter(|&(_, s)| s >= min_sim) {
            pairs.push(AlignedPair {
                src: i,
                tgt: j,
                similarity: sim,
            });
            cursor = j + 1;
        }
    }
    Ok(AlignmentResult { pairs })
}
