//! Recordings, zero-phase band-pass preprocessing and random segmentation.

mod filter;
pub mod io;

pub use filter::{BandpassFilter, Biquad, DEFAULT_ORDER};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

/// The three midline channels kept for authentication, in feature order.
pub const CANONICAL_CHANNELS: [&str; 3] = ["Fz", "Cz", "Pz"];

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 250.0;
pub const SEGMENT_SECONDS: f64 = 4.0;
pub const PASSBAND_LO_HZ: f64 = 0.5;
pub const PASSBAND_HI_HZ: f64 = 40.0;

/// Samples in one 4 s segment at `sample_rate_hz` (1000 at 250 Hz).
pub fn segment_len(sample_rate_hz: f64) -> usize {
    (SEGMENT_SECONDS * sample_rate_hz).round() as usize
}

/// Multi-channel EEG, channel-major, amplitudes in microvolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    subject_id: String,
    sample_rate_hz: f64,
    channels: Vec<String>,
    samples: Vec<Vec<f64>>,
}

impl Recording {
    pub fn new(
        subject_id: impl Into<String>,
        sample_rate_hz: f64,
        channels: Vec<String>,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidRecording(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channels.is_empty() || channels.len() != samples.len() {
            return Err(Error::InvalidRecording(format!(
                "{} channel labels for {} sample rows",
                channels.len(),
                samples.len()
            )));
        }
        for (i, c) in channels.iter().enumerate() {
            if channels[..i].contains(c) {
                return Err(Error::InvalidRecording(format!("duplicate channel {c}")));
            }
        }
        let len = samples[0].len();
        if samples.iter().any(|ch| ch.len() != len) {
            return Err(Error::InvalidRecording("channels have unequal lengths".into()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRecording("non-finite sample".into()));
        }
        Ok(Recording {
            subject_id,
            sample_rate_hz,
            channels,
            samples,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }
}

/// A fixed 4 s window copied out of a [`Recording`].
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub subject_id: String,
    pub start_index: usize,
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Zero-phase Butterworth band-pass applied to every channel.
pub fn bandpass_filter(rec: &Recording, lo_hz: f64, hi_hz: f64) -> Result<Recording> {
    let filter = BandpassFilter::butterworth(DEFAULT_ORDER, lo_hz, hi_hz, rec.sample_rate_hz)?;
    let samples = rec
        .samples
        .iter()
        .map(|ch| filter.filtfilt(ch))
        .collect::<Result<Vec<_>>>()?;
    Ok(Recording {
        samples,
        ..rec.clone()
    })
}

/// `n` segments with start offsets drawn uniformly (with replacement) from
/// `[0, len - L]`.
pub fn random_segments(rec: &Recording, n: usize, seed: u64) -> Result<Vec<Segment>> {
    let seg_len = segment_len(rec.sample_rate_hz);
    if rec.len() < seg_len {
        return Err(Error::TooShort {
            required: seg_len,
            available: rec.len(),
        });
    }
    if n == 0 {
        return Err(Error::Validation("segment count must be at least 1".into()));
    }
    let max_start = rec.len() - seg_len;
    let mut rng = seed::rng(seed);
    let segments = (0..n)
        .map(|_| {
            let start = rng.random_range(0..=max_start);
            Segment {
                subject_id: rec.subject_id.clone(),
                start_index: start,
                sample_rate_hz: rec.sample_rate_hz,
                channels: rec.channels.clone(),
                data: rec
                    .samples
                    .iter()
                    .map(|ch| ch[start..start + seg_len].to_vec())
                    .collect(),
            }
        })
        .collect();
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn canonical(n: usize, f: impl Fn(usize, usize) -> f64) -> Recording {
        let samples = (0..3).map(|c| (0..n).map(|i| f(c, i)).collect()).collect();
        Recording::new(
            "S01",
            250.0,
            CANONICAL_CHANNELS.iter().map(|s| s.to_string()).collect(),
            samples,
        )
        .unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn recording_invariants() {
        let ch = || vec!["Fz".to_string(), "Fz".to_string()];
        assert!(Recording::new("a", 250.0, ch(), vec![vec![0.0]; 2]).is_err());
        let ch2 = vec!["Fz".to_string(), "Cz".to_string()];
        assert!(Recording::new("a", 250.0, ch2.clone(), vec![vec![0.0], vec![0.0, 1.0]]).is_err());
        assert!(Recording::new("a", 0.0, ch2.clone(), vec![vec![0.0]; 2]).is_err());
        assert!(Recording::new("a", 250.0, ch2, vec![vec![f64::NAN]; 2]).is_err());
    }

    #[test]
    fn dc_is_removed() {
        let rec = canonical(7500, |_, _| 5.0);
        let out = bandpass_filter(&rec, 0.5, 40.0).unwrap();
        for ch in out.samples() {
            assert!(ch.iter().all(|v| v.abs() < 0.05), "max {}", ch.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
    }

    #[test]
    fn ten_hz_passes_unchanged() {
        let rec = canonical(7500, |_, i| (2.0 * PI * 10.0 * i as f64 / 250.0).sin());
        let out = bandpass_filter(&rec, 0.5, 40.0).unwrap();
        let ratio = rms(&out.samples()[0]) / rms(&rec.samples()[0]);
        assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio}");
        // zero phase: no lag between input and output
        let err = rms(
            &out.samples()[0]
                .iter()
                .zip(&rec.samples()[0])
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>()[1000..6500],
        );
        assert!(err < 1e-3, "residual {err}");
    }

    #[test]
    fn sixty_hz_attenuation_matches_analytic_response() {
        // Independent oracle: analog Butterworth band-pass magnitude at the
        // pre-warped frequency, |H|^2 = 1 / (1 + x^(2N)) with
        // x = (W^2 - W0^2) / (W * B). Forward-backward squares |H|.
        let fs = 250.0;
        let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
        let (w1, w2) = (warp(0.5), warp(40.0));
        let x = (warp(60.0).powi(2) - w1 * w2) / (warp(60.0) * (w2 - w1));
        let oracle_gain = 1.0 / (1.0 + x.powi(8));
        assert!((oracle_gain - 0.012820056001080247).abs() < 1e-12);

        let rec = canonical(7500, |_, i| (2.0 * PI * 60.0 * i as f64 / 250.0).sin());
        let out = bandpass_filter(&rec, 0.5, 40.0).unwrap();
        let f = BandpassFilter::butterworth(DEFAULT_ORDER, 0.5, 40.0, fs).unwrap();
        assert!((f.magnitude(60.0).powi(2) / oracle_gain - 1.0).abs() < 1e-9);
        let ratio = rms(&out.samples()[0][2500..5000]) / rms(&rec.samples()[0][2500..5000]);
        assert!(ratio <= oracle_gain * 1.001, "ratio {ratio} oracle {oracle_gain}");
        assert!(ratio >= oracle_gain * 0.99);
    }

    #[test]
    fn filter_is_linear() {
        let rec = canonical(3000, |c, i| ((i * 7 + c * 13) % 31) as f64 - 15.0);
        let scaled = canonical(3000, |c, i| 3.5 * (((i * 7 + c * 13) % 31) as f64 - 15.0));
        let a = bandpass_filter(&rec, 0.5, 40.0).unwrap();
        let b = bandpass_filter(&scaled, 0.5, 40.0).unwrap();
        let scale = b.samples().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.samples().iter().flatten().zip(b.samples().iter().flatten()) {
            assert!((3.5 * x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn short_recording_cannot_be_filtered() {
        let rec = canonical(2000, |_, _| 0.0);
        assert!(matches!(bandpass_filter(&rec, 0.5, 40.0), Err(Error::TooShort { .. })));
    }

    #[test]
    fn segments_cover_valid_range() {
        let rec = canonical(7500, |c, i| (c * 10000 + i) as f64);
        let segs = random_segments(&rec, 500, 3).unwrap();
        assert_eq!(segs.len(), 500);
        for s in &segs {
            assert!(s.start_index <= 6500);
            assert_eq!(s.len(), 1000);
            for (c, ch) in s.data.iter().enumerate() {
                assert_eq!(ch[..], rec.samples()[c][s.start_index..s.start_index + 1000]);
            }
        }
    }

    #[test]
    fn single_valid_start() {
        let rec = canonical(1000, |_, i| i as f64);
        let segs = random_segments(&rec, 3, 11).unwrap();
        assert!(segs.iter().all(|s| s.start_index == 0));
    }

    #[test]
    fn too_short_for_a_segment() {
        let rec = canonical(999, |_, _| 0.0);
        assert!(matches!(random_segments(&rec, 1, 0), Err(Error::TooShort { required: 1000, available: 999 })));
    }

    #[test]
    fn segmentation_is_deterministic() {
        let rec = canonical(7500, |_, i| i as f64);
        let a: Vec<_> = random_segments(&rec, 50, 9).unwrap().iter().map(|s| s.start_index).collect();
        let b: Vec<_> = random_segments(&rec, 50, 9).unwrap().iter().map(|s| s.start_index).collect();
        let c: Vec<_> = random_segments(&rec, 50, 10).unwrap().iter().map(|s| s.start_index).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
