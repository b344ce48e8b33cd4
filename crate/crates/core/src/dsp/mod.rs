//! Spectral frontend: framed STFT, mel filterbank, log-mel spectrograms and
//! per-bin standardization.

mod mel;
mod standardize;
mod stft;

use serde::{Deserialize, Serialize};

pub use mel::{hz_to_mel, log_mel, mel_filterbank, mel_to_hz, LogMelExtractor, LogMelSpectrogram};
pub use standardize::{standardize, StandardizeStats};
pub use stft::{frame_power, hann_window, num_frames, stft, Stft};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DspError {
    #[error("signal of {len} samples is shorter than one {frame_size}-sample frame")]
    SignalTooShort { len: usize, frame_size: usize },
    #[error("invalid spectrogram config: {0}")]
    InvalidConfig(String),
    #[error("cannot standardize: {0}")]
    BadInput(String),
}

/// Frame / mel parameters. Defaults: 1024-sample frames, 50% overlap,
/// 128 mel bands spanning 0 Hz to Nyquist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramConfig {
    pub frame_size: usize,
    pub hop: usize,
    pub num_mels: usize,
    pub fmin: f64,
    /// `None` means Nyquist.
    pub fmax: Option<f64>,
    pub log_floor: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            frame_size: 1024,
            hop: 512,
            num_mels: 128,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-10,
        }
    }
}

impl SpectrogramConfig {
    pub fn num_bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    pub fn fmax_for(&self, sample_rate: u32) -> f64 {
        self.fmax.unwrap_or(sample_rate as f64 / 2.0)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), DspError> {
        let bad = |m: String| Err(DspError::InvalidConfig(m));
        if self.frame_size < 2 {
            return bad(format!("frame_size {} < 2", self.frame_size));
        }
        if self.hop == 0 || self.hop > self.frame_size {
            return bad(format!("hop {} not in (0, frame_size]", self.hop));
        }
        if self.num_mels == 0 {
            return bad("num_mels must be >= 1".into());
        }
        if sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        let fmax = self.fmax_for(sample_rate);
        if !(self.fmin >= 0.0 && self.fmin < fmax && fmax <= sample_rate as f64 / 2.0) {
            return bad(format!(
                "need 0 <= fmin < fmax <= sr/2, got fmin={} fmax={fmax}",
                self.fmin
            ));
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }
}
