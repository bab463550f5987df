//! Context classification of bat ultrasonic vocalisations from pitch contours.
//!
//! The crate covers the whole offline pipeline: WAV loading, STFT, gated F0
//! contours and their summary statistics, annotation filtering, emitter-disjoint
//! fold construction, class-weighted one-vs-one linear SVMs, UAR with bootstrap
//! intervals, and a synthetic corpus generator for tests.

pub mod audio;
pub mod classifier;
pub mod corpus;
pub mod evaluation;
pub mod partition;
pub mod pipeline;
pub mod pitch;
pub mod spectral;
pub mod synth;
pub mod tensor;

pub use audio::{load_wav, AudioClip, AudioError};
pub use classifier::{nested_select, OvoModel, Standardiser};
pub use corpus::{ContextLabel, SchemaConfig, Utterance};
pub use evaluation::{bootstrap_ci, uar, EvaluationReport, PredictionSet};
pub use partition::{make_folds, make_plan, split_dev, FoldPlan, Role, Sample};
pub use pitch::{contour_stats, extract_f0, extract_features, FeatureVector, PitchContour};
pub use spectral::{export_spectrogram, stft, Spectrogram};
pub use synth::{synth_corpus, synth_utterance, CorpusSpec, SynthSpec};

/// Formats a float like C's `%g`: six significant digits, trailing zeros
/// removed, scientific notation outside `1e-4 <= |v| < 1e6`.
pub fn fmt_sig6(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
