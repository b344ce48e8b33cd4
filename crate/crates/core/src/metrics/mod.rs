//! Anomaly scores and ROC-based evaluation with harmonic-mean aggregates.

mod report;
mod roc;

pub use report::{evaluate, CellMetric, EvalReport, MachineSummary, ScoredClip, Totals, REPORT_HEADER};
pub use roc::{auc, pauc};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need normal and anomalous clips, got {normals} normal / {anomalies} anomalous")]
    DegenerateLabels { normals: usize, anomalies: usize },
    #[error("p must lie in (0, 1], got {0}")]
    InvalidP(f64),
    #[error("harmonic mean needs positive values, got {0}")]
    NonpositiveValue(f64),
    #[error("no values to average")]
    Empty,
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("section index {index} outside {sections} known sections")]
    UnknownSection { index: usize, sections: usize },
    #[error("reference bank is empty")]
    EmptyBank,
    #[error("neighbour count must be >= 1")]
    InvalidK,
    #[error("embedding width {got}, bank width {want}")]
    WidthMismatch { got: usize, want: usize },
}

/// `n / Σ 1/v`.
pub fn harmonic_mean(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(MetricsError::NonpositiveValue(*v));
    }
    Ok(values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>())
}

/// Negative log-probability the section classifier assigns to the clip's
/// own section.
pub fn score_nls(logits_sec: &[f64], section_index: usize) -> Result<f64, MetricsError> {
    if section_index >= logits_sec.len() {
        return Err(MetricsError::UnknownSection {
            index: section_index,
            sections: logits_sec.len(),
        });
    }
    let mx = logits_sec.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits_sec.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() + mx;
    Ok(lse - logits_sec[section_index])
}

/// `1 - cos(a, b)`; a zero vector is at distance 1 from everything.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

/// Mean cosine distance to the `k` nearest bank entries (all of them when
/// the bank is smaller).
pub fn score_knn(embedding: &[f64], bank: &[Vec<f64>], k: usize) -> Result<f64, MetricsError> {
    if bank.is_empty() {
        return Err(MetricsError::EmptyBank);
    }
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    let mut d = Vec::with_capacity(bank.len());
    for b in bank {
        if b.len() != embedding.len() {
            return Err(MetricsError::WidthMismatch {
                got: embedding.len(),
                want: b.len(),
            });
        }
        d.push(cosine_distance(embedding, b));
    }
    d.sort_by(f64::total_cmp);
    let k = k.min(d.len());
    Ok(d[..k].iter().sum::<f64>() / k as f64)
}
