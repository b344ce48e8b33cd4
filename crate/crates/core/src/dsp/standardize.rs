use serde::{Deserialize, Serialize};

use super::{DspError, LogMelSpectrogram};
use crate::Scalar;

/// Per-mel-bin statistics of a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 where the bin is degenerate.
    pub std: Vec<f64>,
    /// Bins with zero variance. Standardized output there is `x - mean`.
    pub degenerate: Vec<bool>,
}

impl StandardizeStats {
    pub fn fit<S: Scalar>(specs: &[LogMelSpectrogram<S>]) -> Result<Self, DspError> {
        let first = specs
            .first()
            .ok_or_else(|| DspError::BadInput("no spectrograms".into()))?;
        let mels = first.num_mels;
        let mut sum = vec![0.0f64; mels];
        let mut count = 0usize;
        for s in specs {
            check_mels(s, mels)?;
            for m in 0..mels {
                sum[m] += s.values[m * s.num_frames..(m + 1) * s.num_frames]
                    .iter()
                    .map(|v| v.as_f64())
                    .sum::<f64>();
            }
            count += s.num_frames;
        }
        if count == 0 {
            return Err(DspError::BadInput("spectrograms have no frames".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0f64; mels];
        for s in specs {
            for m in 0..mels {
                sq[m] += s.values[m * s.num_frames..(m + 1) * s.num_frames]
                    .iter()
                    .map(|v| (v.as_f64() - mean[m]).powi(2))
                    .sum::<f64>();
            }
        }
        let mut std = Vec::with_capacity(mels);
        let mut degenerate = Vec::with_capacity(mels);
        for v in sq {
            let sd = (v / count as f64).sqrt();
            if sd > 0.0 {
                std.push(sd);
                degenerate.push(false);
            } else {
                std.push(1.0);
                degenerate.push(true);
            }
        }
        Ok(Self {
            mean,
            std,
            degenerate,
        })
    }

    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    pub fn apply<S: Scalar>(&self, spec: &LogMelSpectrogram<S>) -> Result<LogMelSpectrogram<S>, DspError> {
        check_mels(spec, self.mean.len())?;
        let mut out = spec.clone();
        for m in 0..spec.num_mels {
            let (mu, sd) = (self.mean[m], self.std[m]);
            for v in &mut out.values[m * spec.num_frames..(m + 1) * spec.num_frames] {
                *v = S::of((v.as_f64() - mu) / sd);
            }
        }
        Ok(out)
    }
}

fn check_mels<S>(s: &LogMelSpectrogram<S>, mels: usize) -> Result<(), DspError> {
    if s.num_mels != mels {
        return Err(DspError::BadInput(format!(
            "mel count {} differs from {mels}",
            s.num_mels
        )));
    }
    Ok(())
}

/// Standardizes each mel bin to zero mean / unit variance. With `stats`
/// given (test time) they are reused; otherwise they are fitted on `specs`.
pub fn standardize<S: Scalar>(
    specs: &[LogMelSpectrogram<S>],
    stats: Option<&StandardizeStats>,
) -> Result<(Vec<LogMelSpectrogram<S>>, StandardizeStats), DspError> {
    if specs.is_empty() {
        return Err(DspError::BadInput("no spectrograms".into()));
    }
    let stats = match stats {
        Some(s) => s.clone(),
        None => StandardizeStats::fit(specs)?,
    };
    let out = specs.iter().map(|s| stats.apply(s)).collect::<Result<_, _>>()?;
    Ok((out, stats))
}
