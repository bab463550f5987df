//! Mono WAV loading and fixed-length padding.

use std::path::Path;

use hound::{SampleFormat, WavReader};
use thiserror::Error;

/// Native sample rate of the recording setup.
pub const CORPUS_SAMPLE_RATE: u32 = 250_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV {path}: {reason}")]
    MalformedWav { path: String, reason: String },
    #[error("unsupported WAV format {path}: {reason}")]
    UnsupportedFormat { path: String, reason: String },
    #[error("clip {source_id} lasts {actual_s:.4} s, longer than {limit_s} s")]
    ClipTooLong {
        source_id: String,
        actual_s: f64,
        limit_s: f64,
    },
    #[error("invalid clip: {0}")]
    InvalidClip(String),
}

/// A mono clip with samples normalised to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
    source_id: String,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f32>,
        sample_rate: u32,
        source_id: impl Into<String>,
    ) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidClip(
                "sample rate must be positive".into(),
            ));
        }
        if samples.is_empty() {
            return Err(AudioError::InvalidClip("clip has no samples".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(AudioError::InvalidClip(
                "clip contains non-finite samples".into(),
            ));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
        }
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }
}

fn open(path: &Path) -> Result<WavReader<std::io::BufReader<std::fs::File>>, AudioError> {
    let display = path.display().to_string();
    WavReader::open(path).map_err(|e| match e {
        hound::Error::Unsupported => AudioError::UnsupportedFormat {
            path: display,
            reason: "compressed or unknown encoding".into(),
        },
        other => AudioError::MalformedWav {
            path: display,
            reason: other.to_string(),
        },
    })
}

/// Loads a mono PCM (8/16/24/32-bit integer) or 32-bit float WAV file.
///
/// Integer samples are divided by the magnitude of the type's minimum value,
/// e.g. 32768 for 16-bit audio.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let reader = open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::UnsupportedFormat {
            path: display,
            reason: format!("{} channels, only mono is supported", spec.channels),
        });
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::MalformedWav {
            path: display,
            reason: "sample rate is zero".into(),
        });
    }
    if spec.sample_rate != CORPUS_SAMPLE_RATE {
        log::warn!(
            "{display}: sample rate {} Hz differs from corpus rate {CORPUS_SAMPLE_RATE} Hz",
            spec.sample_rate
        );
    }

    let malformed = |e: hound::Error| AudioError::MalformedWav {
        path: display.clone(),
        reason: e.to_string(),
    };
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(malformed)?,
        (SampleFormat::Int, bits @ 1..=32) => {
            let divisor = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 / divisor) as f32))
                .collect::<Result<_, _>>()
                .map_err(malformed)?
        }
        (format, bits) => {
            return Err(AudioError::UnsupportedFormat {
                path: display,
                reason: format!("{format:?} samples with {bits} bits"),
            })
        }
    };
    if samples.is_empty() {
        return Err(AudioError::MalformedWav {
            path: display,
            reason: "empty data chunk".into(),
        });
    }
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioClip::new(samples, spec.sample_rate, source_id)
}

/// Reads only the header and returns the clip duration in seconds.
pub fn wav_duration_s(path: impl AsRef<Path>) -> Result<f64, AudioError> {
    let reader = open(path.as_ref())?;
    let spec = reader.spec();
    if spec.sample_rate == 0 {
        return Err(AudioError::MalformedWav {
            path: path.as_ref().display().to_string(),
            reason: "sample rate is zero".into(),
        });
    }
    Ok(reader.duration() as f64 / spec.sample_rate as f64)
}

/// Writes a mono clip as 16-bit PCM. Samples are clamped to [-1, 1).
pub fn write_wav_i16(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), hound::Error> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &clip.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()
}

/// Zero-pads `clip` to exactly `round(duration_s * sample_rate)` samples.
pub fn pad_to_duration(clip: &AudioClip, duration_s: f64) -> Result<AudioClip, AudioError> {
    let target = (duration_s * clip.sample_rate as f64).round() as usize;
    if clip.len() > target {
        return Err(AudioError::ClipTooLong {
            source_id: clip.source_id.clone(),
            actual_s: clip.duration_s(),
            limit_s: duration_s,
        });
    }
    let mut samples = Vec::with_capacity(target);
    samples.extend_from_slice(&clip.samples);
    samples.resize(target, 0.0);
    AudioClip::new(samples, clip.sample_rate, clip.source_id.clone())
}
