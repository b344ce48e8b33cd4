use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{parse_clip_path, ClipMetadata, DatasetError};

/// One mono recording with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    /// Stable identifier, normally the path relative to the corpus root.
    pub id: String,
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub metadata: ClipMetadata,
}

impl AudioClip {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn unsupported(path: &Path, why: impl Into<String>) -> DatasetError {
    DatasetError::UnsupportedFormat {
        path: path.display().to_string(),
        reason: why.into(),
    }
}

fn hound_err(path: &Path, e: hound::Error) -> DatasetError {
    match e {
        hound::Error::IoError(io) => DatasetError::Io {
            path: path.display().to_string(),
            source: io,
        },
        other => unsupported(path, other.to_string()),
    }
}

/// Decodes mono PCM16 or float32 WAV into `[-1, 1]` samples.
pub fn read_wav_samples(path: &Path) -> Result<(Vec<f32>, u32), DatasetError> {
    let reader = WavReader::open(path).map_err(|e| hound_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(unsupported(path, format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_rate == 0 {
        return Err(unsupported(path, "zero sample rate"));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| hound_err(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v.clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()
            .map_err(|e| hound_err(path, e))?,
        (fmt, bits) => {
            return Err(unsupported(path, format!("{fmt:?} {bits}-bit encoding")));
        }
    };
    if samples.is_empty() {
        return Err(unsupported(path, "no samples"));
    }
    Ok((samples, spec.sample_rate))
}

/// Loads a clip; metadata comes from the DCASE-style filename and the
/// machine directory above it.
pub fn load_wav(path: &Path) -> Result<AudioClip, DatasetError> {
    let metadata = parse_clip_path(path)?;
    let (samples, sample_rate) = read_wav_samples(path)?;
    Ok(AudioClip {
        id: path.display().to_string(),
        samples,
        sample_rate,
        metadata,
    })
}

fn to_pcm16(x: f32) -> i16 {
    (x.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes mono 16-bit PCM.
pub fn write_wav_pcm16(path: &Path, samples: &[f32], sample_rate: u32) -> Result<(), DatasetError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| hound_err(path, e))?;
    for &s in samples {
        w.write_sample(to_pcm16(s)).map_err(|e| hound_err(path, e))?;
    }
    w.finalize().map_err(|e| hound_err(path, e))
}

/// Rounds samples to the PCM16 grid exactly as [`write_wav_pcm16`] followed
/// by [`read_wav_samples`] would.
pub fn quantize_pcm16(samples: &[f32]) -> Vec<f32> {
    samples.iter().map(|&s| to_pcm16(s) as f32 / 32768.0).collect()
}
