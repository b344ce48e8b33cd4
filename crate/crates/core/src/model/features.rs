use super::{ModelConfig, ModelError};
use crate::autodiff::Tensor;
use crate::dataset::{AttributeGroupTable, AudioClip};
use crate::dsp::{LogMelExtractor, LogMelSpectrogram, StandardizeStats};
use crate::Scalar;

/// Network input of one clip: raw waveform plus standardized log-mel
/// (mel-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures<S> {
    pub waveform: Vec<S>,
    pub logmel: Vec<S>,
    pub num_mels: usize,
    pub num_frames: usize,
}

/// Stacked inputs: waveforms `[N×1×L]`, log-mels `[N×1×M×F]`.
#[derive(Debug, Clone)]
pub struct Batch<S> {
    pub waveforms: Tensor<S>,
    pub logmels: Tensor<S>,
}

impl<S: Scalar> Batch<S> {
    pub fn len(&self) -> usize {
        self.waveforms.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stack(items: &[&ClipFeatures<S>]) -> Result<Self, ModelError> {
        let first = items
            .first()
            .ok_or_else(|| ModelError::NoTrainingData("empty batch".into()))?;
        let (len, m, f) = (first.waveform.len(), first.num_mels, first.num_frames);
        let mut w = Vec::with_capacity(items.len() * len);
        let mut x = Vec::with_capacity(items.len() * m * f);
        for it in items {
            if it.waveform.len() != len || it.num_mels != m || it.num_frames != f {
                return Err(crate::autodiff::AutodiffError::ShapeMismatch(format!(
                    "ragged batch: {} samples / {}×{} vs {len} / {m}×{f}",
                    it.waveform.len(),
                    it.num_mels,
                    it.num_frames
                ))
                .into());
            }
            w.extend_from_slice(&it.waveform);
            x.extend_from_slice(&it.logmel);
        }
        let n = items.len();
        Ok(Self {
            waveforms: Tensor::new(vec![n, 1, len], w)?,
            logmels: Tensor::new(vec![n, 1, m, f], x)?,
        })
    }
}

fn log_mels(
    clips: &[AudioClip],
    config: &ModelConfig,
    threads: usize,
) -> Result<Vec<LogMelSpectrogram<f64>>, ModelError> {
    for c in clips {
        if c.sample_rate != config.sample_rate {
            return Err(ModelError::InvalidConfig(format!(
                "clip {} has sample rate {}, model expects {}",
                c.id, c.sample_rate, config.sample_rate
            )));
        }
    }
    let ex = LogMelExtractor::<f64>::new(config.spectrogram, config.sample_rate)?;
    let run = |chunk: &[AudioClip]| -> Result<Vec<LogMelSpectrogram<f64>>, ModelError> {
        chunk
            .iter()
            .map(|c| {
                let x: Vec<f64> = c.samples.iter().map(|&v| v as f64).collect();
                let mut s = ex.extract(&x)?;
                s.clip_id = Some(c.id.clone());
                Ok(s)
            })
            .collect()
    };
    if threads <= 1 || clips.len() < 2 {
        return run(clips);
    }
    let chunk = clips.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = clips.chunks(chunk).map(|c| scope.spawn(move || run(c))).collect();
        let mut out = Vec::with_capacity(clips.len());
        for h in handles {
            out.extend(h.join().expect("feature worker panicked")?);
        }
        Ok(out)
    })
}

/// Extracts and standardizes features. Spectra are computed in 64-bit and
/// rounded to `S` afterwards, so both precisions see the same inputs.
/// `threads <= 1` runs on the calling thread; results do not depend on it.
pub fn prepare_features<S: Scalar>(
    clips: &[AudioClip],
    config: &ModelConfig,
    stats: Option<&StandardizeStats>,
    threads: usize,
) -> Result<(Vec<ClipFeatures<S>>, StandardizeStats), ModelError> {
    if clips.is_empty() {
        return Err(ModelError::NoTrainingData("no clips".into()));
    }
    let specs = log_mels(clips, config, threads)?;
    let stats = match stats {
        Some(s) => s.clone(),
        None => StandardizeStats::fit(&specs)?,
    };
    let feats = clips
        .iter()
        .zip(&specs)
        .map(|(c, s)| {
            let z = stats.apply(s)?;
            Ok(ClipFeatures {
                waveform: c.samples.iter().map(|&v| S::of(v as f64)).collect(),
                logmel: z.values.iter().map(|&v| S::of(v)).collect(),
                num_mels: z.num_mels,
                num_frames: z.num_frames,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok((feats, stats))
}

/// Training inputs with dense section and attribute-group labels.
#[derive(Debug, Clone)]
pub struct LabelledSet<S> {
    pub features: Vec<ClipFeatures<S>>,
    pub sections: Vec<usize>,
    pub groups: Vec<usize>,
    pub num_sections: usize,
    pub num_groups: usize,
    /// Inverse-frequency weights per attribute group, mean 1.
    pub group_weights: Vec<f64>,
}

impl<S: Scalar> LabelledSet<S> {
    pub fn new(
        clips: &[AudioClip],
        features: Vec<ClipFeatures<S>>,
        table: &AttributeGroupTable,
    ) -> Result<Self, ModelError> {
        if clips.len() != features.len() {
            return Err(ModelError::InvalidConfig("clip and feature counts differ".into()));
        }
        let mut sections = Vec::with_capacity(clips.len());
        let mut groups = Vec::with_capacity(clips.len());
        for c in clips {
            let unlabelled = |reason: &str| ModelError::UnlabelledClip {
                clip: c.id.clone(),
                reason: reason.to_string(),
            };
            sections.push(
                table
                    .section_index(c.metadata.section_id)
                    .ok_or_else(|| unlabelled("section not in the group table"))?,
            );
            groups.push(
                table
                    .global_group(&c.metadata)
                    .ok_or_else(|| unlabelled("attribute combination not in the group table"))?,
            );
        }
        Ok(Self {
            features,
            sections,
            groups,
            num_sections: table.num_sections(),
            num_groups: table.num_global_groups(),
            group_weights: table.inverse_frequency_weights(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}
