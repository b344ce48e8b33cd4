use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{auc, harmonic_mean, pauc, MetricsError};
use crate::dataset::{ClipMetadata, Condition, Domain};

/// Anomaly score of one test clip; higher is more anomalous.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredClip {
    pub id: String,
    pub metadata: ClipMetadata,
    pub score: f64,
}

/// One per-section value. `None` marks a degenerate cell with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMetric {
    pub machine: String,
    pub section: u32,
    /// `None` for metrics pooled over both domains.
    pub domain: Option<Domain>,
    pub metric: &'static str,
    pub value: Result<f64, MetricsError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Totals {
    pub auc_s: Option<f64>,
    pub auc_t: Option<f64>,
    pub pauc: Option<f64>,
    pub hauc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineSummary {
    pub machine: String,
    pub totals: Totals,
}

/// Per-section AUC by domain, per-section pooled pAUC, and harmonic-mean
/// aggregates per machine and over every section of every machine.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub p: f64,
    pub cells: Vec<CellMetric>,
    pub machines: Vec<MachineSummary>,
    pub totals: Totals,
    /// Clips without a normal/anomaly label, left out of every cell.
    pub unlabelled: usize,
}

pub const REPORT_HEADER: &str = "machine,section,domain,metric,value";

/// Harmonic mean of the valid values; 0 when any of them is 0.
fn aggregate(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    if values.iter().any(|&v| v == 0.0) {
        return Some(0.0);
    }
    harmonic_mean(values).ok()
}

fn totals_of<'a>(cells: impl Iterator<Item = &'a CellMetric> + Clone) -> Totals {
    let pick = |domain: Option<Domain>, metric: &str| -> Vec<f64> {
        cells
            .clone()
            .filter(|c| c.domain == domain && c.metric == metric)
            .filter_map(|c| c.value.as_ref().ok().copied())
            .collect()
    };
    let auc_s = aggregate(&pick(Some(Domain::Source), "AUC"));
    let auc_t = aggregate(&pick(Some(Domain::Target), "AUC"));
    let pauc = aggregate(&pick(None, "pAUC"));
    let hauc = match (auc_s, auc_t, pauc) {
        (Some(a), Some(b), Some(c)) => aggregate(&[a, b, c]),
        _ => None,
    };
    Totals { auc_s, auc_t, pauc, hauc }
}

pub fn evaluate(scored: &[ScoredClip], p: f64) -> Result<EvalReport, MetricsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(MetricsError::InvalidP(p));
    }
    if let Some(c) = scored.iter().find(|c| !c.score.is_finite()) {
        return Err(MetricsError::NonFiniteScore(c.score));
    }
    // (machine, section) -> domain -> (normal scores, anomaly scores)
    type Pools = BTreeMap<Domain, (Vec<f64>, Vec<f64>)>;
    let mut by_section: BTreeMap<(String, u32), Pools> = BTreeMap::new();
    let mut unlabelled = 0;
    for c in scored {
        let pools = by_section
            .entry((c.metadata.machine_type.clone(), c.metadata.section_id))
            .or_default();
        let (n, a) = pools.entry(c.metadata.domain).or_default();
        match c.metadata.condition {
            Condition::Normal => n.push(c.score),
            Condition::Anomaly => a.push(c.score),
            Condition::Unknown => unlabelled += 1,
        }
    }
    let mut cells = Vec::new();
    for ((machine, section), pools) in &by_section {
        let empty = (Vec::new(), Vec::new());
        for domain in [Domain::Source, Domain::Target] {
            let (n, a) = pools.get(&domain).unwrap_or(&empty);
            cells.push(CellMetric {
                machine: machine.clone(),
                section: *section,
                domain: Some(domain),
                metric: "AUC",
                value: auc(n, a),
            });
        }
        let normals: Vec<f64> = pools.values().flat_map(|(n, _)| n.iter().copied()).collect();
        let anomalies: Vec<f64> = pools.values().flat_map(|(_, a)| a.iter().copied()).collect();
        cells.push(CellMetric {
            machine: machine.clone(),
            section: *section,
            domain: None,
            metric: "pAUC",
            value: pauc(&normals, &anomalies, p),
        });
    }
    let mut names: Vec<&String> = by_section.keys().map(|(m, _)| m).collect();
    names.dedup();
    let machines = names
        .into_iter()
        .map(|m| MachineSummary {
            machine: m.clone(),
            totals: totals_of(cells.iter().filter(|c| &c.machine == m)),
        })
        .collect();
    let totals = totals_of(cells.iter());
    Ok(EvalReport {
        p,
        cells,
        machines,
        totals,
        unlabelled,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{:.2}", v * 100.0))
}

fn domain_str(d: Option<Domain>) -> &'static str {
    d.map_or("all", Domain::as_str)
}

impl EvalReport {
    /// CSV with values ×100 at two decimals; degenerate cells read `NA`.
    /// Aggregate rows use `ALL` for the section (per machine) or for both
    /// machine and section (totals).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{:02},{},{},{}",
                c.machine,
                c.section,
                domain_str(c.domain),
                c.metric,
                pct(c.value.as_ref().ok().copied())
            );
        }
        let mut summary = |machine: &str, t: &Totals| {
            for (domain, metric, v) in [
                ("source", "AUC", t.auc_s),
                ("target", "AUC", t.auc_t),
                ("all", "pAUC", t.pauc),
                ("all", "HAUC", t.hauc),
            ] {
                let _ = writeln!(s, "{machine},ALL,{domain},{metric},{}", pct(v));
            }
        };
        for m in &self.machines {
            summary(&m.machine, &m.totals);
        }
        summary("ALL", &self.totals);
        s
    }

    /// `AUC-s, AUC-t, pAUC, HAUC` of the totals, ×100.
    pub fn totals_line(&self) -> String {
        let t = &self.totals;
        format!(
            "AUC-s {}  AUC-t {}  pAUC {}  HAUC {}",
            pct(t.auc_s),
            pct(t.auc_t),
            pct(t.pauc),
            pct(t.hauc)
        )
    }

    pub fn degenerate_cells(&self) -> impl Iterator<Item = &CellMetric> {
        self.cells.iter().filter(|c| c.value.is_err())
    }
}
