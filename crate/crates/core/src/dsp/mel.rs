use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use super::stft::StftPlan;
use super::{DspError, SpectrogramConfig};
use crate::Scalar;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

type FilterKey = (usize, usize, u64, u64, u32);

fn cache() -> &'static RwLock<HashMap<FilterKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<RwLock<HashMap<FilterKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn build_filterbank(cfg: &SpectrogramConfig, sample_rate: u32) -> Result<Vec<f64>, DspError> {
    let bins = cfg.num_bins();
    let fmax = cfg.fmax_for(sample_rate);
    let (mlo, mhi) = (hz_to_mel(cfg.fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..cfg.num_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (cfg.num_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..bins)
        .map(|k| k as f64 * sample_rate as f64 / cfg.frame_size as f64)
        .collect();
    let mut fb = vec![0.0; cfg.num_mels * bins];
    for m in 0..cfg.num_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut fb[m * bins..(m + 1) * bins];
        for (w, &f) in row.iter_mut().zip(&bin_hz) {
            let up = (f - lo) / (center - lo);
            let down = (hi - f) / (hi - center);
            *w = up.min(down).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(DspError::InvalidConfig(format!(
                "mel filter {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; \
                 reduce num_mels or increase frame_size"
            )));
        }
    }
    Ok(fb)
}

/// Triangular HTK-mel filterbank, row-major `[num_mels × frame_size/2+1]`.
/// Built once per (config, sample rate) and shared afterwards.
pub fn mel_filterbank<S: Scalar>(cfg: &SpectrogramConfig, sample_rate: u32) -> Result<Vec<S>, DspError> {
    Ok(shared_filterbank(cfg, sample_rate)?
        .iter()
        .map(|&w| S::of(w))
        .collect())
}

fn shared_filterbank(cfg: &SpectrogramConfig, sample_rate: u32) -> Result<Arc<Vec<f64>>, DspError> {
    cfg.validate(sample_rate)?;
    let key = (
        cfg.frame_size,
        cfg.num_mels,
        cfg.fmin.to_bits(),
        cfg.fmax_for(sample_rate).to_bits(),
        sample_rate,
    );
    if let Some(fb) = cache().read().expect("filterbank cache poisoned").get(&key) {
        return Ok(Arc::clone(fb));
    }
    let fb = Arc::new(build_filterbank(cfg, sample_rate)?);
    cache()
        .write()
        .expect("filterbank cache poisoned")
        .entry(key)
        .or_insert_with(|| Arc::clone(&fb));
    Ok(fb)
}

/// Log-mel energies, mel-major: `values[mel * num_frames + frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram<S> {
    pub num_mels: usize,
    pub num_frames: usize,
    pub values: Vec<S>,
    pub config: SpectrogramConfig,
    pub clip_id: Option<String>,
}

impl<S: Scalar> LogMelSpectrogram<S> {
    pub fn at(&self, mel: usize, frame: usize) -> S {
        self.values[mel * self.num_frames + frame]
    }
}

/// Reusable extractor: FFT plan, window and filterbank for one
/// (config, sample rate).
pub struct LogMelExtractor<S: Scalar> {
    config: SpectrogramConfig,
    sample_rate: u32,
    plan: StftPlan<S>,
    filterbank: Vec<S>,
}

impl<S: Scalar> LogMelExtractor<S> {
    pub fn new(config: SpectrogramConfig, sample_rate: u32) -> Result<Self, DspError> {
        let filterbank = mel_filterbank(&config, sample_rate)?;
        Ok(Self {
            config,
            sample_rate,
            plan: StftPlan::new(config.frame_size),
            filterbank,
        })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn extract(&self, samples: &[S]) -> Result<LogMelSpectrogram<S>, DspError> {
        let spec = self.plan.run(samples, &self.config)?;
        let power = spec.power();
        let (mels, bins, frames) = (self.config.num_mels, spec.bins, spec.frames);
        let floor = S::of(self.config.log_floor);
        let mut values = vec![S::zero(); mels * frames];
        for m in 0..mels {
            let row = &self.filterbank[m * bins..(m + 1) * bins];
            for (k, &w) in row.iter().enumerate() {
                if w == S::zero() {
                    continue;
                }
                let p = &power[k * frames..(k + 1) * frames];
                let out = &mut values[m * frames..(m + 1) * frames];
                for (o, &pk) in out.iter_mut().zip(p) {
                    *o += w * pk;
                }
            }
        }
        for v in &mut values {
            *v = v.max(floor).ln();
        }
        Ok(LogMelSpectrogram {
            num_mels: mels,
            num_frames: frames,
            values,
            config: self.config,
            clip_id: None,
        })
    }
}

/// `log(max(filterbank · |STFT|², log_floor))`.
pub fn log_mel<S: Scalar>(
    samples: &[S],
    sample_rate: u32,
    cfg: &SpectrogramConfig,
) -> Result<LogMelSpectrogram<S>, DspError> {
    LogMelExtractor::new(*cfg, sample_rate)?.extract(samples)
}
