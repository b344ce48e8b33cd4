use super::AutodiffError;
use crate::Scalar;

/// Classification loss over `[N×C]` logits. Cross-entropy is the focal loss
/// without the modulating factor; both share one evaluation path so that
/// focusing 0 reproduces cross-entropy bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLossSpec<S> {
    pub labels: Vec<usize>,
    /// `None` for plain cross-entropy.
    pub focusing: Option<S>,
    pub class_weights: Option<Vec<S>>,
}

impl<S: Scalar> ClassLossSpec<S> {
    pub fn cross_entropy(labels: Vec<usize>) -> Self {
        Self {
            labels,
            focusing: None,
            class_weights: None,
        }
    }

    pub fn focal(labels: Vec<usize>, gamma: S, class_weights: Option<Vec<S>>) -> Self {
        Self {
            labels,
            focusing: Some(gamma),
            class_weights,
        }
    }

    fn check(&self, n: usize, c: usize) -> Result<(), AutodiffError> {
        if self.labels.len() != n {
            return Err(AutodiffError::ShapeMismatch(format!(
                "{} labels for a batch of {n}",
                self.labels.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= c) {
            return Err(AutodiffError::LabelOutOfRange {
                label: bad,
                classes: c,
            });
        }
        if let Some(w) = &self.class_weights {
            if w.len() != c {
                return Err(AutodiffError::ShapeMismatch(format!(
                    "{} class weights for {c} classes",
                    w.len()
                )));
            }
        }
        Ok(())
    }

    fn weight(&self, label: usize) -> S {
        self.class_weights.as_ref().map_or(S::one(), |w| w[label])
    }
}

/// Row-wise log-softmax, max-subtracted.
pub fn log_softmax_rows<S: Scalar>(logits: &[S], c: usize) -> Vec<S> {
    let mut out = logits.to_vec();
    for row in out.chunks_mut(c) {
        let mx = row.iter().copied().fold(S::neg_infinity(), S::max);
        let lse = row.iter().map(|v| (*v - mx).exp()).sum::<S>().ln() + mx;
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

fn one_minus_p<S: Scalar>(logp: S) -> S {
    -logp.exp_m1()
}

pub(crate) fn class_loss_forward<S: Scalar>(
    logits: &[S],
    n: usize,
    c: usize,
    spec: &ClassLossSpec<S>,
) -> Result<S, AutodiffError> {
    spec.check(n, c)?;
    if n == 0 {
        return Err(AutodiffError::ShapeMismatch("loss over an empty batch".into()));
    }
    let logp = log_softmax_rows(logits, c);
    let mut total = S::zero();
    for (i, &t) in spec.labels.iter().enumerate() {
        let lp = logp[i * c + t];
        let mut term = -lp;
        if let Some(g) = spec.focusing {
            term = one_minus_p(lp).powf(g) * term;
        }
        total += spec.weight(t) * term;
    }
    Ok(total / S::of(n as f64))
}

/// Gradient of the loss w.r.t. the logits, scaled by `upstream`. The spec
/// has been validated by the forward pass.
pub(crate) fn class_loss_backward<S: Scalar>(
    logits: &[S],
    n: usize,
    c: usize,
    spec: &ClassLossSpec<S>,
    upstream: S,
) -> Vec<S> {
    let logp = log_softmax_rows(logits, c);
    let scale = upstream / S::of(n as f64);
    let mut d = vec![S::zero(); logits.len()];
    for (i, &t) in spec.labels.iter().enumerate() {
        let lp = logp[i * c + t];
        let factor = match spec.focusing {
            None => S::one(),
            Some(g) => {
                let q = one_minus_p(lp);
                let second = if g == S::zero() || q == S::zero() {
                    S::zero()
                } else {
                    g * q.powf(g - S::one()) * lp.exp() * lp
                };
                q.powf(g) - second
            }
        };
        let f = scale * spec.weight(t) * factor;
        for j in 0..c {
            let p = logp[i * c + j].exp();
            let delta = if j == t { S::one() } else { S::zero() };
            d[i * c + j] = f * (p - delta);
        }
    }
    d
}
