use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{DspError, SpectrogramConfig};
use crate::Scalar;

/// Frames fully inside a signal of `len` samples; no padding.
pub fn num_frames(len: usize, frame_size: usize, hop: usize) -> usize {
    if len < frame_size {
        0
    } else {
        1 + (len - frame_size) / hop
    }
}

/// Periodic Hann window.
pub fn hann_window<S: Scalar>(n: usize) -> Vec<S> {
    (0..n)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            S::of(0.5 - 0.5 * x.cos())
        })
        .collect()
}

/// One-sided complex spectrogram, bin-major: `data[bin * frames + frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stft<S> {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<Complex<S>>,
}

impl<S: Scalar> Stft<S> {
    pub fn at(&self, bin: usize, frame: usize) -> Complex<S> {
        self.data[bin * self.frames + frame]
    }

    pub fn frame(&self, frame: usize) -> Vec<Complex<S>> {
        (0..self.bins).map(|b| self.at(b, frame)).collect()
    }

    pub fn power(&self) -> Vec<S> {
        self.data.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Total power of a frame from its one-sided unnormalized DFT, scaled so it
/// equals the sum of squared windowed samples (Parseval).
pub fn frame_power<S: Scalar>(one_sided: &[Complex<S>], frame_size: usize) -> f64 {
    let mut total = 0.0;
    for (k, c) in one_sided.iter().enumerate() {
        let p = c.norm_sqr().as_f64();
        let mirrored = k != 0 && !(frame_size % 2 == 0 && k == frame_size / 2);
        total += if mirrored { 2.0 * p } else { p };
    }
    total / frame_size as f64
}

pub(crate) struct StftPlan<S: Scalar> {
    fft: Arc<dyn Fft<S>>,
    window: Vec<S>,
}

impl<S: Scalar> StftPlan<S> {
    pub(crate) fn new(frame_size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(frame_size);
        Self {
            fft,
            window: hann_window(frame_size),
        }
    }

    pub(crate) fn run(&self, samples: &[S], cfg: &SpectrogramConfig) -> Result<Stft<S>, DspError> {
        let n = cfg.frame_size;
        if samples.len() < n {
            return Err(DspError::SignalTooShort {
                len: samples.len(),
                frame_size: n,
            });
        }
        let frames = num_frames(samples.len(), n, cfg.hop);
        let bins = cfg.num_bins();
        let mut data = vec![Complex::new(S::zero(), S::zero()); bins * frames];
        let mut buf = vec![Complex::new(S::zero(), S::zero()); n];
        let mut scratch = vec![Complex::new(S::zero(), S::zero()); self.fft.get_inplace_scratch_len()];
        for f in 0..frames {
            let start = f * cfg.hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(samples[start + i] * self.window[i], S::zero());
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for b in 0..bins {
                data[b * frames + f] = buf[b];
            }
        }
        Ok(Stft { bins, frames, data })
    }
}

/// Hann-windowed STFT over frames fully inside the signal.
pub fn stft<S: Scalar>(samples: &[S], cfg: &SpectrogramConfig) -> Result<Stft<S>, DspError> {
    if cfg.frame_size < 2 || cfg.hop == 0 || cfg.hop > cfg.frame_size {
        return Err(DspError::InvalidConfig(format!(
            "frame_size {} / hop {}",
            cfg.frame_size, cfg.hop
        )));
    }
    StftPlan::new(cfg.frame_size).run(samples, cfg)
}
