use serde::{Deserialize, Serialize};

use super::{LossWeights, ModelError};
use crate::autodiff::{Graph, Var};
use crate::Scalar;

/// Settings of the joint objective.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a, S> {
    pub weights: LossWeights,
    pub focal_gamma: f64,
    /// Per attribute-group weights of both focal terms.
    pub group_weights: Option<&'a [S]>,
}

pub struct LossVars {
    pub l_rev: Var,
    pub l_sec: Var,
    pub l_att: Var,
    pub total: Var,
}

/// `alpha·focal(rev, groups) + beta·ce(sec, sections) + gamma·focal(att, groups)`.
pub fn grhd_loss<S: Scalar>(
    g: &mut Graph<S>,
    logits_rev: Var,
    logits_sec: Var,
    logits_att: Var,
    sections: &[usize],
    groups: &[usize],
    spec: &LossSpec<'_, S>,
) -> Result<LossVars, ModelError> {
    spec.weights.validate()?;
    let fg = S::of(spec.focal_gamma);
    let l_rev = g.focal_loss(logits_rev, groups, fg, spec.group_weights)?;
    let l_sec = g.cross_entropy(logits_sec, sections)?;
    let l_att = g.focal_loss(logits_att, groups, fg, spec.group_weights)?;
    let w = spec.weights;
    let a = g.scale(l_rev, S::of(w.alpha));
    let b = g.scale(l_sec, S::of(w.beta));
    let c = g.scale(l_att, S::of(w.gamma));
    let ab = g.add(a, b)?;
    let total = g.add(ab, c)?;
    Ok(LossVars {
        l_rev,
        l_sec,
        l_att,
        total,
    })
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub lambda_used: f64,
    pub l_rev: f64,
    pub l_sec: f64,
    pub l_att: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "epoch,lr,lambda,l_rev,l_sec,l_att,l_total";

    /// Builds a row whose total is recomposed from the components.
    pub fn compose(epoch: usize, lr: f64, lambda: f64, parts: [f64; 3], w: &LossWeights) -> Self {
        let [l_rev, l_sec, l_att] = parts;
        Self {
            epoch,
            lr,
            lambda_used: lambda,
            l_rev,
            l_sec,
            l_att,
            l_total: w.alpha * l_rev + w.beta * l_sec + w.gamma * l_att,
        }
    }

    /// Shortest round-trip formatting of every field.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.epoch, self.lr, self.lambda_used, self.l_rev, self.l_sec, self.l_att, self.l_total
        )
    }

    pub fn recomposition_error(&self, w: &LossWeights) -> f64 {
        let r = w.alpha * self.l_rev + w.beta * self.l_sec + w.gamma * self.l_att;
        (r - self.l_total).abs() / r.abs().max(f64::MIN_POSITIVE)
    }
}
