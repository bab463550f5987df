//! Magnitude short-time Fourier transforms.
//!
//! Two parameterisations are used in the pipeline:
//!
//! * pitch analysis: 100 ms Hann window, 16 ms hop ([`stft`] with
//!   [`PITCH_WINDOW_S`] / [`PITCH_HOP_S`]);
//! * network-input export: 4096-sample window, 10 ms hop, clips zero-padded
//!   to 3 s ([`export_spectrogram`]).
//!
//! The FFT length always equals the window length, so a frame has
//! `window / 2 + 1` bins spaced `sample_rate / window` Hz apart.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

use crate::audio::{pad_to_duration, AudioClip, AudioError};

pub const PITCH_WINDOW_S: f64 = 0.100;
pub const PITCH_HOP_S: f64 = 0.016;
pub const EXPORT_WINDOW_SAMPLES: usize = 4096;
pub const EXPORT_HOP_S: f64 = 0.010;
pub const EXPORT_DURATION_S: f64 = 3.0;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("clip of {len} samples is shorter than one {window}-sample window")]
    ClipTooShort { len: usize, window: usize },
    #[error("window and hop must each cover at least one sample (window {window}, hop {hop})")]
    InvalidFraming { window: usize, hop: usize },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// Row-major `[frames x bins]` matrix of linear STFT magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    magnitudes: Vec<f32>,
    frames: usize,
    bins: usize,
    window: usize,
    hop: usize,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn magnitudes(&self) -> &[f32] {
        &self.magnitudes
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.magnitudes[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, k: usize) -> f32 {
        self.magnitudes[t * self.bins + k]
    }

    pub fn window_samples(&self) -> usize {
        self.window
    }

    pub fn hop_samples(&self) -> usize {
        self.hop
    }

    pub fn fft_size(&self) -> usize {
        self.window
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn window_s(&self) -> f64 {
        self.window as f64 / self.sample_rate as f64
    }

    pub fn frame_hop_s(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.window as f64
    }

    /// Start time of frame `t` in seconds.
    pub fn frame_time_s(&self, t: usize) -> f64 {
        (t * self.hop) as f64 / self.sample_rate as f64
    }
}

/// Number of full frames for a signal of `len` samples.
pub fn frame_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window || window == 0 || hop == 0 {
        0
    } else {
        (len - window) / hop + 1
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Converts a duration to a sample count by rounding.
pub fn seconds_to_samples(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

/// STFT with window and hop given in seconds.
pub fn stft(clip: &AudioClip, window_s: f64, hop_s: f64) -> Result<Spectrogram, SpectralError> {
    let window = seconds_to_samples(window_s, clip.sample_rate());
    let hop = seconds_to_samples(hop_s, clip.sample_rate());
    stft_samples(clip.samples(), clip.sample_rate(), window, hop)
}

/// STFT with window and hop given in samples. FFT size equals `window`.
pub fn stft_samples(
    samples: &[f32],
    sample_rate: u32,
    window: usize,
    hop: usize,
) -> Result<Spectrogram, SpectralError> {
    if window == 0 || hop == 0 {
        return Err(SpectralError::InvalidFraming { window, hop });
    }
    if samples.len() < window {
        return Err(SpectralError::ClipTooShort {
            len: samples.len(),
            window,
        });
    }
    let frames = frame_count(samples.len(), window, hop);
    let bins = window / 2 + 1;
    let taper = hann(window);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window);

    let mut magnitudes = vec![0f32; frames * bins];
    magnitudes.par_chunks_mut(bins).enumerate().for_each_init(
        || {
            (
                vec![Complex::new(0.0, 0.0); window],
                vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            )
        },
        |(buf, scratch), (t, row)| {
            let start = t * hop;
            for ((dst, &x), &w) in buf
                .iter_mut()
                .zip(&samples[start..start + window])
                .zip(&taper)
            {
                *dst = Complex::new(x as f64 * w, 0.0);
            }
            fft.process_with_scratch(buf, scratch);
            for (m, c) in row.iter_mut().zip(buf.iter()) {
                *m = c.norm() as f32;
            }
        },
    );

    Ok(Spectrogram {
        magnitudes,
        frames,
        bins,
        window,
        hop,
        sample_rate,
    })
}

/// Spectrogram in the fixed shape used as network input: the clip is padded
/// to 3 s, then analysed with a 4096-sample window and a 10 ms hop
/// (299 x 2049 at 250 kHz).
pub fn export_spectrogram(clip: &AudioClip) -> Result<Spectrogram, SpectralError> {
    let padded = pad_to_duration(clip, EXPORT_DURATION_S)?;
    let hop = seconds_to_samples(EXPORT_HOP_S, clip.sample_rate());
    stft_samples(
        padded.samples(),
        padded.sample_rate(),
        EXPORT_WINDOW_SAMPLES,
        hop,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f64, amp: f64, rate: u32, n: usize) -> AudioClip {
        let s = (0..n)
            .map(|i| (amp * (2.0 * PI * freq * i as f64 / rate as f64).sin()) as f32)
            .collect();
        AudioClip::new(s, rate, "sine").unwrap()
    }

    /// Direct O(N^2) DFT magnitude of one Hann-windowed frame.
    fn brute_dft_frame(frame: &[f32]) -> Vec<f64> {
        let n = frame.len();
        let w = hann(n);
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, (&x, &wi)) in frame.iter().zip(&w).enumerate() {
                    let phase = -2.0 * PI * (k * i % n) as f64 / n as f64;
                    re += x as f64 * wi * phase.cos();
                    im += x as f64 * wi * phase.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    fn argmax(v: impl IntoIterator<Item = f64>) -> usize {
        v.into_iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, x)| {
                if x > bv {
                    (i, x)
                } else {
                    (bi, bv)
                }
            })
            .0
    }

    #[test]
    fn pitch_framing_at_corpus_rate() {
        let clip = sine(11_000.0, 0.9, 250_000, 250_000);
        let s = stft(&clip, PITCH_WINDOW_S, PITCH_HOP_S).unwrap();
        assert_eq!(s.window_samples(), 25_000);
        assert_eq!(s.hop_samples(), 4_000);
        assert_eq!((s.frames(), s.bins()), (57, 12_501));
        assert_eq!(s.bin_hz(), 10.0);
        for t in 0..s.frames() {
            let k = argmax(s.frame(t).iter().map(|&m| m as f64));
            assert_eq!(k, 1100, "frame {t}");
        }
    }

    #[test]
    fn fft_agrees_with_brute_force_dft() {
        // 2 kHz rate keeps the O(N^2) oracle cheap: 200-sample window, 10 Hz bins.
        let rate = 2_000;
        let clip = sine(430.0, 0.7, rate, 1_000);
        let s = stft(&clip, PITCH_WINDOW_S, PITCH_HOP_S).unwrap();
        assert_eq!(s.window_samples(), 200);
        for t in [0, s.frames() / 2, s.frames() - 1] {
            let start = t * s.hop_samples();
            let oracle = brute_dft_frame(&clip.samples()[start..start + 200]);
            for (k, &o) in oracle.iter().enumerate() {
                assert!((s.get(t, k) as f64 - o).abs() < 1e-4, "t={t} k={k}");
            }
            assert_eq!(argmax(oracle.iter().copied()), 43);
            assert_eq!(argmax(s.frame(t).iter().map(|&m| m as f64)), 43);
        }
    }

    #[test]
    fn silence_gives_zero_magnitudes() {
        let clip = AudioClip::new(vec![0.0; 250_000], 250_000, "z").unwrap();
        let s = stft(&clip, PITCH_WINDOW_S, PITCH_HOP_S).unwrap();
        assert!(s.magnitudes().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn short_clip_rejected() {
        let clip = AudioClip::new(vec![0.0; 12_500], 250_000, "z").unwrap();
        assert!(matches!(
            stft(&clip, PITCH_WINDOW_S, PITCH_HOP_S),
            Err(SpectralError::ClipTooShort { .. })
        ));
    }

    #[test]
    fn export_shape_at_corpus_rate() {
        let clip = sine(9_000.0, 0.5, 250_000, 250_000);
        let s = export_spectrogram(&clip).unwrap();
        assert_eq!((s.frames(), s.bins()), (299, 2049));
        assert_eq!(s.hop_samples(), 2500);
    }

    #[test]
    fn export_of_silence_is_zero() {
        let clip = AudioClip::new(vec![0.0; 100_000], 250_000, "z").unwrap();
        let s = export_spectrogram(&clip).unwrap();
        assert_eq!((s.frames(), s.bins()), (299, 2049));
        assert!(s.magnitudes().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn export_rejects_long_clip() {
        let clip = AudioClip::new(vec![0.0; 775_000], 250_000, "z").unwrap();
        assert!(matches!(
            export_spectrogram(&clip),
            Err(SpectralError::Audio(AudioError::ClipTooLong { .. }))
        ));
    }

    #[test]
    fn scaling_scales_magnitudes() {
        let clip = sine(1234.0, 0.3, 16_000, 4_000);
        let a = stft_samples(clip.samples(), 16_000, 512, 128).unwrap();
        let b = stft_samples(clip.scaled(2.0).samples(), 16_000, 512, 128).unwrap();
        for (x, y) in a.magnitudes().iter().zip(b.magnitudes()) {
            assert!((2.0 * x - y).abs() <= 1e-5 * y.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn frame_count_formula(len in 1usize..3000, window in 1usize..300, hop in 1usize..200) {
            prop_assume!(len >= window);
            let samples = vec![0.1f32; len];
            let s = stft_samples(&samples, 1000, window, hop).unwrap();
            prop_assert_eq!(s.frames(), (len - window) / hop + 1);
            prop_assert_eq!(s.bins(), window / 2 + 1);
            // the last frame must fit, one more must not
            prop_assert!((s.frames() - 1) * hop + window <= len);
            prop_assert!(s.frames() * hop + window > len);
        }

        #[test]
        fn magnitudes_non_negative(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<f32> = (0..700).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = stft_samples(&samples, 1000, 128, 50).unwrap();
            prop_assert!(s.magnitudes().iter().all(|&m| m >= 0.0));
        }
    }
}
