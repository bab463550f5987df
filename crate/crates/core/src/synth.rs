//! Synthetic vocalisations with known pitch structure.
//!
//! An utterance is a single phase-continuous FM sinusoid whose instantaneous
//! frequency is `f0_mean + f0_slope * (t - T/2) + n(t)`, where `n` is white
//! Gaussian noise passed through a one-pole low-pass (50 ms time constant)
//! and scaled to a stationary standard deviation of `f0_std`.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{write_wav_i16, AudioClip};
use crate::corpus::{ColumnMap, ContextLabel, SchemaConfig, Utterance};

/// Time constant of the frequency-noise smoother.
pub const NOISE_TIME_CONSTANT_S: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synthesis spec out of range: {0}")]
    SpecOutOfRange(String),
    #[error("need at least 3 emitters, got {0}")]
    TooFewEmitters(usize),
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub context: ContextLabel,
    pub f0_mean: f64,
    pub f0_std: f64,
    /// Hz per second.
    pub f0_slope: f64,
    pub duration_s: f64,
    pub amplitude: f64,
    pub emitter_id: String,
    pub seed: u64,
}

impl SynthSpec {
    /// A constant tone with no frequency noise.
    pub fn tone(f0: f64, duration_s: f64, amplitude: f64) -> Self {
        Self {
            context: ContextLabel::General,
            f0_mean: f0,
            f0_std: 0.0,
            f0_slope: 0.0,
            duration_s,
            amplitude,
            emitter_id: "synthetic".into(),
            seed: 0,
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::SpecOutOfRange(m));
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return fail(format!("amplitude {} not in (0, 1]", self.amplitude));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return fail(format!("duration {} s", self.duration_s));
        }
        if !(self.f0_std >= 0.0 && self.f0_slope.is_finite()) {
            return fail("f0_std must be non-negative and slope finite".into());
        }
        if sample_rate == 0 {
            return fail("sample rate is zero".into());
        }
        let drift = self.f0_slope.abs() * self.duration_s / 2.0;
        let lo = self.f0_mean - drift - 3.0 * self.f0_std;
        let hi = self.f0_mean + drift + 3.0 * self.f0_std;
        let nyquist = sample_rate as f64 / 2.0;
        if !(lo > 0.0 && hi < nyquist) {
            return fail(format!(
                "frequency range [{lo}, {hi}] Hz leaves (0, {nyquist}) Hz"
            ));
        }
        Ok(())
    }
}

pub fn synth_utterance(spec: &SynthSpec, sample_rate: u32) -> Result<AudioClip, SynthError> {
    spec.validate(sample_rate)?;
    let rate = sample_rate as f64;
    let n = (spec.duration_s * rate).round() as usize;
    if n == 0 {
        return Err(SynthError::SpecOutOfRange(
            "duration shorter than one sample".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pole = (-1.0 / (NOISE_TIME_CONSTANT_S * rate)).exp();
    // stationary variance of y = pole*y + (1-pole)*x is (1-pole)/(1+pole) var(x)
    let drive = spec.f0_std * ((1.0 + pole) / (1.0 - pole)).sqrt();
    let mut noise = if spec.f0_std > 0.0 {
        spec.f0_std * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    let half = spec.duration_s / 2.0;
    let mut phase = 0.0f64;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / rate;
        samples.push((spec.amplitude * phase.sin()) as f32);
        let freq = spec.f0_mean + spec.f0_slope * (t - half) + noise;
        phase = (phase + std::f64::consts::TAU * freq / rate) % std::f64::consts::TAU;
        if spec.f0_std > 0.0 {
            let x: f64 = rng.sample(StandardNormal);
            noise = pole * noise + (1.0 - pole) * drive * x;
        }
    }
    AudioClip::new(samples, sample_rate, format!("synth-{}", spec.seed))
        .map_err(|e| SynthError::SpecOutOfRange(e.to_string()))
}

/// Pitch parameters shared by every utterance of one context.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub context: ContextLabel,
    pub f0_mean: f64,
    pub f0_std: f64,
    pub f0_slope: f64,
}

/// Eleven contexts with means 8000, 8500, ..., 13000 Hz and 100 Hz std.
pub fn separable_class_specs() -> Vec<ClassSpec> {
    ContextLabel::ALL
        .iter()
        .enumerate()
        .map(|(k, &context)| ClassSpec {
            context,
            f0_mean: 8_000.0 + 500.0 * k as f64,
            f0_std: 100.0,
            f0_slope: 0.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_emitters: usize,
    pub per_class_count: usize,
    pub class_specs: Vec<ClassSpec>,
    pub sample_rate: u32,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            n_emitters: 12,
            per_class_count: 50,
            class_specs: separable_class_specs(),
            sample_rate: 50_000,
            min_duration_s: 0.3,
            max_duration_s: 1.0,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub cohort: Vec<Utterance>,
    pub audio_dir: PathBuf,
    pub annotations: PathBuf,
    pub schema: PathBuf,
}

pub fn synth_schema() -> SchemaConfig {
    SchemaConfig {
        delimiter: ",".into(),
        emitter_placeholders: vec!["unknown".into()],
        time_unit_s: 1.0,
        columns: ColumnMap {
            id: "id".into(),
            emitter: "emitter".into(),
            context: "context".into(),
            file: "file".into(),
            duration: Some("duration_s".into()),
            start: None,
            end: None,
        },
        context_codes: ContextLabel::ALL
            .iter()
            .map(|l| (l.name().to_string(), l.name().to_string()))
            .chain([
                ("landing".to_string(), "landing".to_string()),
                ("unknown".to_string(), "unknown".to_string()),
            ])
            .collect(),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SynthError {
    SynthError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// The utterance specs of a corpus, in class-major order with emitters
/// assigned round-robin.
pub fn corpus_specs(spec: &CorpusSpec) -> Result<Vec<(String, SynthSpec)>, SynthError> {
    if spec.n_emitters < 3 {
        return Err(SynthError::TooFewEmitters(spec.n_emitters));
    }
    if !(spec.min_duration_s > 0.0 && spec.min_duration_s <= spec.max_duration_s) {
        return Err(SynthError::SpecOutOfRange("invalid duration range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    let mut idx = 0usize;
    for class in &spec.class_specs {
        for _ in 0..spec.per_class_count {
            let duration = if spec.max_duration_s > spec.min_duration_s {
                rng.random_range(spec.min_duration_s..spec.max_duration_s)
            } else {
                spec.min_duration_s
            };
            let s = SynthSpec {
                context: class.context,
                f0_mean: class.f0_mean,
                f0_std: class.f0_std,
                f0_slope: class.f0_slope,
                duration_s: (duration * spec.sample_rate as f64).round() / spec.sample_rate as f64,
                amplitude: rng.random_range(0.3..0.9),
                emitter_id: format!("bat{:02}", idx % spec.n_emitters),
                seed: rng.random(),
            };
            s.validate(spec.sample_rate)?;
            out.push((format!("syn{idx:05}"), s));
            idx += 1;
        }
    }
    Ok(out)
}

/// Writes WAVs under `out_dir/audio`, plus `annotations.csv` and
/// `schema.toml` describing them.
pub fn synth_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<SynthCorpus, SynthError> {
    let specs = corpus_specs(spec)?;
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| io_err(&audio_dir, e))?;

    specs.par_iter().try_for_each(|(id, s)| {
        let clip = synth_utterance(s, spec.sample_rate)?;
        let path = audio_dir.join(format!("{id}.wav"));
        write_wav_i16(&clip, &path).map_err(|e| io_err(&path, e))
    })?;

    let annotations = out_dir.join("annotations.csv");
    let mut text = String::from("id,emitter,context,file,duration_s\n");
    for (id, s) in &specs {
        text.push_str(&format!(
            "{id},{},{},{id}.wav,{}\n",
            s.emitter_id, s.context, s.duration_s
        ));
    }
    std::fs::write(&annotations, text).map_err(|e| io_err(&annotations, e))?;

    let schema = out_dir.join("schema.toml");
    let mut f = std::fs::File::create(&schema).map_err(|e| io_err(&schema, e))?;
    f.write_all(synth_schema().to_toml().as_bytes())
        .map_err(|e| io_err(&schema, e))?;

    let cohort = specs
        .into_iter()
        .map(|(id, s)| Utterance {
            audio_path: PathBuf::from(format!("{id}.wav")),
            id,
            emitter_id: s.emitter_id,
            context: s.context,
            duration_s: s.duration_s,
        })
        .collect();
    Ok(SynthCorpus {
        cohort,
        audio_dir,
        annotations,
        schema,
    })
}
