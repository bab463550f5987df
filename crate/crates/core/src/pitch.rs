//! Utterance-level F0 contours and their summary statistics.
//!
//! The contour is read off a 100 ms / 16 ms magnitude STFT:
//!
//! 1. the reference level is the largest time-averaged energy of any
//!    frequency bin;
//! 2. every time-frequency bin whose energy lies more than 20 dB below that
//!    reference is zeroed;
//! 3. a frame with no surviving bin is unvoiced (F0 = 0), otherwise its F0 is
//!    the centre frequency of its strongest bin.
//!
//! Ten statistics summarise a contour: mean, population standard deviation,
//! maximum, minimum and least-squares slope (Hz/s against frame start
//! times), once over all frames with unvoiced frames counted as 0 Hz and
//! once over voiced frames only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::spectral::{stft, SpectralError, Spectrogram, PITCH_HOP_S, PITCH_WINDOW_S};

/// Bins this many dB below the reference level are discarded.
pub const GATE_DB: f64 = 20.0;

#[derive(Debug, Error)]
pub enum PitchError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("contour has no frames")]
    EmptyContour,
    #[error("contour has no voiced frames")]
    EmptyVoicedSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    pub f0_hz: Vec<f64>,
    pub voiced: Vec<bool>,
    pub frame_times_s: Vec<f64>,
}

impl PitchContour {
    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|&&v| v).count()
    }
}

/// The ten contour statistics. Slopes are in Hz/s, everything else in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mean_all: f64,
    pub std_all: f64,
    pub max_all: f64,
    pub min_all: f64,
    pub slope_all: f64,
    pub mean_voiced: f64,
    pub std_voiced: f64,
    pub max_voiced: f64,
    pub min_voiced: f64,
    pub slope_voiced: f64,
}

pub const FEATURE_COUNT: usize = 10;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "f0_mean_all",
    "f0_std_all",
    "f0_max_all",
    "f0_min_all",
    "f0_slope_all",
    "f0_mean_voiced",
    "f0_std_voiced",
    "f0_max_voiced",
    "f0_min_voiced",
    "f0_slope_voiced",
];

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.mean_all,
            self.std_all,
            self.max_all,
            self.min_all,
            self.slope_all,
            self.mean_voiced,
            self.std_voiced,
            self.max_voiced,
            self.min_voiced,
            self.slope_voiced,
        ]
    }

    pub fn from_array(v: [f64; FEATURE_COUNT]) -> Self {
        Self {
            mean_all: v[0],
            std_all: v[1],
            max_all: v[2],
            min_all: v[3],
            slope_all: v[4],
            mean_voiced: v[5],
            std_voiced: v[6],
            max_voiced: v[7],
            min_voiced: v[8],
            slope_voiced: v[9],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Statistics plus flags for slopes that could not be fitted (fewer than two
/// points or no spread in time); such slopes are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourStats {
    pub features: FeatureVector,
    pub degenerate_slope_all: bool,
    pub degenerate_slope_voiced: bool,
}

pub fn extract_f0(clip: &AudioClip) -> Result<PitchContour, PitchError> {
    let spec = stft(clip, PITCH_WINDOW_S, PITCH_HOP_S)?;
    Ok(contour_from_spectrogram(&spec))
}

/// Applies the relative energy gate and per-frame argmax to `spec`.
pub fn contour_from_spectrogram(spec: &Spectrogram) -> PitchContour {
    let frames = spec.frames();
    let bins = spec.bins();

    let mut mean_energy = vec![0f64; bins];
    for t in 0..frames {
        for (acc, &m) in mean_energy.iter_mut().zip(spec.frame(t)) {
            *acc += m as f64 * m as f64;
        }
    }
    let reference = mean_energy.iter().fold(0f64, |a, &e| a.max(e)) / frames as f64;
    // 20 dB below the reference, as an energy ratio. A silent clip has a
    // reference of -inf dB, which leaves every frame unvoiced.
    let threshold = reference * 10f64.powf(-GATE_DB / 10.0);

    let mut f0_hz = Vec::with_capacity(frames);
    let mut voiced = Vec::with_capacity(frames);
    let mut frame_times_s = Vec::with_capacity(frames);
    for t in 0..frames {
        let (peak_bin, peak_mag) =
            spec.frame(t)
                .iter()
                .enumerate()
                .fold(
                    (0, -1f32),
                    |(bk, bm), (k, &m)| if m > bm { (k, m) } else { (bk, bm) },
                );
        let energy = peak_mag as f64 * peak_mag as f64;
        let is_voiced = reference > 0.0 && energy >= threshold;
        voiced.push(is_voiced);
        f0_hz.push(if is_voiced {
            peak_bin as f64 * spec.bin_hz()
        } else {
            0.0
        });
        frame_times_s.push(spec.frame_time_s(t));
    }
    PitchContour {
        f0_hz,
        voiced,
        frame_times_s,
    }
}

struct Summary {
    mean: f64,
    std: f64,
    max: f64,
    min: f64,
    slope: f64,
    degenerate_slope: bool,
}

fn summarise(points: &[(f64, f64)]) -> Summary {
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let var = points.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;
    let max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - t_mean).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - t_mean) * (p.1 - mean)).sum();
    let degenerate_slope = points.len() < 2 || sxx <= 0.0;
    Summary {
        mean,
        std: var.sqrt(),
        max,
        min,
        slope: if degenerate_slope { 0.0 } else { sxy / sxx },
        degenerate_slope,
    }
}

pub fn contour_stats(contour: &PitchContour) -> Result<ContourStats, PitchError> {
    if contour.is_empty() {
        return Err(PitchError::EmptyContour);
    }
    let all: Vec<(f64, f64)> = contour
        .frame_times_s
        .iter()
        .zip(&contour.f0_hz)
        .map(|(&t, &f)| (t, f))
        .collect();
    let voiced: Vec<(f64, f64)> = all
        .iter()
        .zip(&contour.voiced)
        .filter(|(_, &v)| v)
        .map(|(&p, _)| p)
        .collect();
    if voiced.is_empty() {
        return Err(PitchError::EmptyVoicedSet);
    }
    let a = summarise(&all);
    let v = summarise(&voiced);
    Ok(ContourStats {
        features: FeatureVector {
            mean_all: a.mean,
            std_all: a.std,
            max_all: a.max,
            min_all: a.min,
            slope_all: a.slope,
            mean_voiced: v.mean,
            std_voiced: v.std,
            max_voiced: v.max,
            min_voiced: v.min,
            slope_voiced: v.slope,
        },
        degenerate_slope_all: a.degenerate_slope,
        degenerate_slope_voiced: v.degenerate_slope,
    })
}

/// Convenience: contour extraction followed by statistics.
pub fn extract_features(clip: &AudioClip) -> Result<ContourStats, PitchError> {
    contour_stats(&extract_f0(clip)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn tones(parts: &[(f64, f64)], rate: u32, n: usize) -> AudioClip {
        let s = (0..n)
            .map(|i| {
                let t = i as f64 / rate as f64;
                parts
                    .iter()
                    .map(|&(f, a)| a * (2.0 * PI * f * t).sin())
                    .sum::<f64>() as f32
            })
            .collect();
        AudioClip::new(s, rate, "t").unwrap()
    }

    fn contour(f0: &[f64], voiced: &[bool], hop: f64) -> PitchContour {
        PitchContour {
            f0_hz: f0.to_vec(),
            voiced: voiced.to_vec(),
            frame_times_s: (0..f0.len()).map(|i| i as f64 * hop).collect(),
        }
    }

    /// Independent reference: direct DFT of every Hann-windowed frame, the
    /// 20 dB gate evaluated in dB, per-frame argmax over surviving bins.
    fn oracle_f0(samples: &[f32], rate: u32) -> Vec<f64> {
        let win = (0.1 * rate as f64).round() as usize;
        let hop = (0.016 * rate as f64).round() as usize;
        let bins = win / 2 + 1;
        let frames = (samples.len() - win) / hop + 1;
        let mut energy = vec![vec![0f64; bins]; frames];
        for (t, row) in energy.iter_mut().enumerate() {
            let frame = &samples[t * hop..t * hop + win];
            for (k, e) in row.iter_mut().enumerate() {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &x) in frame.iter().enumerate() {
                    let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / win as f64).cos();
                    let ph = 2.0 * PI * ((k * i) % win) as f64 / win as f64;
                    re += x as f64 * w * ph.cos();
                    im -= x as f64 * w * ph.sin();
                }
                *e = re * re + im * im;
            }
        }
        let ref_db = (0..bins)
            .map(|k| 10.0 * (energy.iter().map(|r| r[k]).sum::<f64>() / frames as f64).log10())
            .fold(f64::NEG_INFINITY, f64::max);
        let bin_hz = rate as f64 / win as f64;
        energy
            .iter()
            .map(|row| {
                let mut best: Option<(usize, f64)> = None;
                for (k, &e) in row.iter().enumerate() {
                    if 10.0 * e.log10() < ref_db - 20.0 {
                        continue;
                    }
                    if best.is_none_or(|(_, b)| e > b) {
                        best = Some((k, e));
                    }
                }
                best.map_or(0.0, |(k, _)| k as f64 * bin_hz)
            })
            .collect()
    }

    #[test]
    fn full_scale_tone_at_corpus_rate() {
        let clip = tones(&[(11_000.0, 1.0)], 250_000, 250_000);
        let c = extract_f0(&clip).unwrap();
        assert_eq!(c.len(), 57);
        assert!(c.voiced.iter().all(|&v| v));
        for &f in &c.f0_hz {
            assert!((f - 11_000.0).abs() <= 5.0);
        }
        let s = contour_stats(&c).unwrap().features;
        assert_eq!(s.std_voiced, 0.0);
        assert_eq!(s.mean_voiced, 11_000.0);
    }

    #[test]
    fn weak_interferer_is_gated_at_corpus_rate() {
        let amp = 10f64.powf(-30.0 / 20.0);
        let clip = tones(&[(11_000.0, 1.0), (5_000.0, amp)], 250_000, 250_000);
        let c = extract_f0(&clip).unwrap();
        assert!(c.voiced.iter().all(|&v| v));
        assert!(c.f0_hz.iter().all(|&f| (f - 11_000.0).abs() <= 5.0));
    }

    #[test]
    fn matches_brute_force_oracle() {
        // 5 kHz keeps the O(N^2) oracle affordable; bins are still 10 Hz wide.
        let rate = 5_000;
        let amp = 10f64.powf(-30.0 / 20.0);
        let clip = tones(&[(1_100.0, 0.8), (500.0, 0.8 * amp)], rate, 2_500);
        let ours = extract_f0(&clip).unwrap();
        let oracle = oracle_f0(clip.samples(), rate);
        assert_eq!(ours.f0_hz, oracle);
        assert!(oracle.iter().all(|&f| f == 1_100.0));

        // an interferer at -10 dB survives the gate but still loses the argmax
        let loud = tones(&[(1_100.0, 0.8), (500.0, 0.8 * 0.316)], rate, 2_500);
        assert_eq!(
            extract_f0(&loud).unwrap().f0_hz,
            oracle_f0(loud.samples(), rate)
        );
    }

    #[test]
    fn oracle_agrees_on_partially_silent_clip() {
        // tone in the first half only: late frames fall below the gate
        let rate = 5_000;
        let mut s: Vec<f32> = (0..3_000)
            .map(|i| (0.5 * (2.0 * PI * 800.0 * i as f64 / rate as f64).sin()) as f32)
            .collect();
        for x in s[1_500..].iter_mut() {
            *x *= 0.001;
        }
        let clip = AudioClip::new(s, rate, "h").unwrap();
        let ours = extract_f0(&clip).unwrap();
        assert_eq!(ours.f0_hz, oracle_f0(clip.samples(), rate));
        assert!(ours.voiced.iter().any(|v| !v));
        for (f, v) in ours.f0_hz.iter().zip(&ours.voiced) {
            assert_eq!(*v, *f != 0.0);
        }
    }

    #[test]
    fn silent_clip_is_all_unvoiced() {
        let clip = AudioClip::new(vec![0.0; 50_000], 50_000, "z").unwrap();
        let c = extract_f0(&clip).unwrap();
        assert!(!c.is_empty());
        assert!(c.voiced.iter().all(|&v| !v));
        assert!(c.f0_hz.iter().all(|&f| f == 0.0));
        assert!(matches!(contour_stats(&c), Err(PitchError::EmptyVoicedSet)));
    }

    #[test]
    fn too_short_clip_propagates() {
        let clip = AudioClip::new(vec![0.1; 12_500], 250_000, "z").unwrap();
        assert!(matches!(
            extract_f0(&clip),
            Err(PitchError::Spectral(SpectralError::ClipTooShort { .. }))
        ));
    }

    #[test]
    fn constant_contour() {
        let c = contour(&[11_000.0; 57], &[true; 57], 0.016);
        let s = contour_stats(&c).unwrap();
        let f = s.features;
        assert_eq!((f.mean_all, f.mean_voiced), (11_000.0, 11_000.0));
        assert_eq!((f.std_all, f.std_voiced), (0.0, 0.0));
        assert!(f.slope_all.abs() < 1e-9 && f.slope_voiced.abs() < 1e-9);
        assert!(!s.degenerate_slope_all && !s.degenerate_slope_voiced);
    }

    #[test]
    fn linear_chirp_contour_slope() {
        // 8000 -> 12000 Hz across 1 s sampled every 16 ms
        let times: Vec<f64> = (0..=62).map(|i| i as f64 * 0.016).collect();
        let f0: Vec<f64> = times.iter().map(|t| 8_000.0 + 4_000.0 * t).collect();
        let c = PitchContour {
            voiced: vec![true; f0.len()],
            f0_hz: f0,
            frame_times_s: times,
        };
        let f = contour_stats(&c).unwrap().features;
        assert!((f.slope_voiced - 4_000.0).abs() < 40.0);
        assert!((f.mean_voiced - 9_984.0).abs() < 1e-6);
    }

    #[test]
    fn half_voiced_contour() {
        let f0 = [
            10_000.0, 0.0, 10_000.0, 0.0, 10_000.0, 0.0, 10_000.0, 0.0, 10_000.0, 0.0,
        ];
        let voiced: Vec<bool> = f0.iter().map(|&f| f > 0.0).collect();
        let f = contour_stats(&contour(&f0, &voiced, 0.016))
            .unwrap()
            .features;
        assert_eq!(f.mean_all, 5_000.0);
        assert_eq!(f.mean_voiced, 10_000.0);
        assert_eq!((f.max_all, f.max_voiced), (10_000.0, 10_000.0));
        assert_eq!((f.min_all, f.min_voiced), (0.0, 10_000.0));
        assert_eq!(f.std_all, 5_000.0);
    }

    #[test]
    fn single_voiced_frame_flags_slope() {
        let c = contour(&[0.0, 9_000.0, 0.0], &[false, true, false], 0.016);
        let s = contour_stats(&c).unwrap();
        assert!(s.degenerate_slope_voiced);
        assert!(!s.degenerate_slope_all);
        assert_eq!(s.features.slope_voiced, 0.0);
        let one = contour(&[9_000.0], &[true], 0.016);
        let s = contour_stats(&one).unwrap();
        assert!(s.degenerate_slope_all && s.degenerate_slope_voiced);
    }

    #[test]
    fn empty_contour_rejected() {
        let c = contour(&[], &[], 0.016);
        assert!(matches!(contour_stats(&c), Err(PitchError::EmptyContour)));
    }

    proptest! {
        #[test]
        fn voiced_stats_ignore_inserted_silence(
            values in proptest::collection::vec(5_000.0f64..20_000.0, 2..30),
            gaps in proptest::collection::vec(0usize..4, 2..30),
        ) {
            let n = values.len();
            let base = contour(&values, &vec![true; n], 0.016);
            let mut f0 = Vec::new();
            let mut times = Vec::new();
            let mut voiced = Vec::new();
            let mut t = 0.0;
            for (i, &v) in values.iter().enumerate() {
                for _ in 0..gaps.get(i).copied().unwrap_or(0) {
                    f0.push(0.0);
                    voiced.push(false);
                    times.push(-1.0 + t);
                    t += 0.001;
                }
                f0.push(v);
                voiced.push(true);
                times.push(base.frame_times_s[i]);
            }
            let padded = PitchContour { f0_hz: f0, voiced, frame_times_s: times };
            let a = contour_stats(&base).unwrap().features;
            let b = contour_stats(&padded).unwrap().features;
            prop_assert!((a.mean_voiced - b.mean_voiced).abs() < 1e-9);
            prop_assert!((a.std_voiced - b.std_voiced).abs() < 1e-9);
            prop_assert_eq!(a.max_voiced, b.max_voiced);
            prop_assert_eq!(a.min_voiced, b.min_voiced);
            prop_assert!((a.slope_voiced - b.slope_voiced).abs() < 1e-6 * a.slope_voiced.abs().max(1.0));
        }

        #[test]
        fn time_reversal_flips_slope(values in proptest::collection::vec(5_000.0f64..20_000.0, 2..40)) {
            let n = values.len();
            let fwd = contour(&values, &vec![true; n], 0.016);
            let rev_values: Vec<f64> = values.iter().rev().copied().collect();
            let rev = contour(&rev_values, &vec![true; n], 0.016);
            let a = contour_stats(&fwd).unwrap().features.slope_voiced;
            let b = contour_stats(&rev).unwrap().features.slope_voiced;
            prop_assert!((a + b).abs() < 1e-6 * a.abs().max(1.0));
        }

        #[test]
        fn ordering_invariants(values in proptest::collection::vec(0.0f64..20_000.0, 1..40),
                               mask in proptest::collection::vec(any::<bool>(), 40)) {
            let voiced: Vec<bool> = values.iter().zip(&mask).map(|(&v, &m)| m && v > 0.0).collect();
            prop_assume!(voiced.iter().any(|&v| v));
            let f0: Vec<f64> = values.iter().zip(&voiced).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
            let f = contour_stats(&contour(&f0, &voiced, 0.016)).unwrap().features;
            prop_assert!(f.is_finite());
            prop_assert!(f.min_all <= f.mean_all + 1e-9 && f.mean_all <= f.max_all + 1e-9);
            prop_assert!(f.min_voiced <= f.mean_voiced + 1e-9 && f.mean_voiced <= f.max_voiced + 1e-9);
            prop_assert!(f.std_all >= 0.0 && f.std_voiced >= 0.0);
        }
    }
}
