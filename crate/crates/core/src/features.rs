//! Welch power spectral density and the 15 band-power features.
//!
//! The estimator averages rectangular-window periodograms of 1 s windows with
//! 50% overlap, giving 1 Hz bins. Bin centres then sit exactly on the integer
//! band edges, and integer-cycle tones do not leak into neighbouring bands.
//! Windows are not detrended.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::exec::{self, ExecMode};
use crate::signal::{Segment, CANONICAL_CHANNELS};
use crate::{Error, Result};

/// Welch window length in seconds (sets the 1 Hz bin width).
pub const WINDOW_SECONDS: f64 = 1.0;

pub const N_CHANNELS: usize = 3;
pub const N_BANDS: usize = 5;
pub const N_FEATURES: usize = N_CHANNELS * N_BANDS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Delta,
    Theta,
    LowerAlpha,
    HigherAlpha,
    Alpha,
}

impl Band {
    pub const ALL: [Band; N_BANDS] = [
        Band::Delta,
        Band::Theta,
        Band::LowerAlpha,
        Band::HigherAlpha,
        Band::Alpha,
    ];

    /// The four bands that tile 0-12 Hz without overlap.
    pub const DISJOINT: [Band; 4] = [Band::Delta, Band::Theta, Band::LowerAlpha, Band::HigherAlpha];

    pub fn def(self) -> BandDef {
        let (lo_hz, hi_hz) = match self {
            Band::Delta => (0.0, 4.0),
            Band::Theta => (4.0, 8.0),
            Band::LowerAlpha => (8.0, 10.0),
            Band::HigherAlpha => (10.0, 12.0),
            Band::Alpha => (8.0, 12.0),
        };
        BandDef { band: self, lo_hz, hi_hz }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short column suffix used in feature CSV headers.
    pub fn column(self) -> &'static str {
        match self {
            Band::Delta => "delta",
            Band::Theta => "theta",
            Band::LowerAlpha => "lalpha",
            Band::HigherAlpha => "halpha",
            Band::Alpha => "alpha",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

/// Half-open frequency interval `[lo_hz, hi_hz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandDef {
    pub band: Band,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

/// Canonical feature names, `Fz_delta, Fz_theta, ..., Pz_alpha`.
pub fn feature_names() -> Vec<String> {
    CANONICAL_CHANNELS
        .iter()
        .flat_map(|c| Band::ALL.iter().map(move |b| format!("{c}_{}", b.column())))
        .collect()
}

pub fn feature_index(channel: usize, band: Band) -> usize {
    channel * N_BANDS + band.index()
}

/// 15 band powers in µV², ordered `channel * 5 + band`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector([f64; N_FEATURES]);

impl FeatureVector {
    pub fn new(values: [f64; N_FEATURES]) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::Validation(format!(
                "feature {} must be a finite non-negative power, got {v}",
                feature_names()[i]
            )));
        }
        Ok(FeatureVector(values))
    }

    pub fn values(&self) -> &[f64; N_FEATURES] {
        &self.0
    }

    pub fn get(&self, channel: usize, band: Band) -> f64 {
        self.0[feature_index(channel, band)]
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        let arr: [f64; N_FEATURES] = v
            .try_into()
            .map_err(|v: Vec<f64>| Error::Validation(format!("expected {N_FEATURES} features, got {}", v.len())))?;
        FeatureVector::new(arr)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(f: FeatureVector) -> Self {
        f.0.to_vec()
    }
}

/// One-sided PSD on a uniform grid starting at 0 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub bin_hz: f64,
    /// µV²/Hz per bin.
    pub density: Vec<f64>,
}

impl Psd {
    pub fn freqs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.density.len()).map(move |k| k as f64 * self.bin_hz)
    }

    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_hz
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

pub fn window_len(sample_rate_hz: f64) -> usize {
    (WINDOW_SECONDS * sample_rate_hz).round() as usize
}

pub fn psd(x: &[f64], sample_rate_hz: f64) -> Result<Psd> {
    let nper = window_len(sample_rate_hz);
    if nper < 2 || x.len() < nper {
        return Err(Error::TooShort {
            required: nper.max(2),
            available: x.len(),
        });
    }
    let step = nper / 2;
    let n_windows = (x.len() - nper) / step + 1;
    let n_bins = nper / 2 + 1;
    let fft = forward_fft(nper);
    let mut buf = vec![Complex64::new(0.0, 0.0); nper];
    let mut acc = vec![0.0; n_bins];
    for w in 0..n_windows {
        let chunk = &x[w * step..w * step + nper];
        for (b, &v) in buf.iter_mut().zip(chunk) {
            *b = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
    }
    // rectangular window: sum of squared weights is nper
    let scale = 1.0 / (sample_rate_hz * nper as f64 * n_windows as f64);
    let nyquist_bin = if nper % 2 == 0 { Some(n_bins - 1) } else { None };
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let one_sided = if k == 0 || Some(k) == nyquist_bin { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    Ok(Psd {
        bin_hz: sample_rate_hz / nper as f64,
        density,
    })
}

/// Sum of density over bins with `lo <= f < hi`, times the bin width.
pub fn band_power(psd: &Psd, band: &BandDef) -> Result<f64> {
    let nyquist = (psd.density.len() - 1) as f64 * psd.bin_hz;
    if !(band.lo_hz >= 0.0 && band.lo_hz < band.hi_hz && band.lo_hz <= nyquist) {
        return Err(Error::InvalidBand {
            lo_hz: band.lo_hz,
            hi_hz: band.hi_hz,
            sample_rate_hz: 2.0 * nyquist,
        });
    }
    let mut sum = 0.0;
    let mut bins = 0;
    for (k, d) in psd.density.iter().enumerate() {
        let f = k as f64 * psd.bin_hz;
        if band.lo_hz <= f && f < band.hi_hz {
            sum += d;
            bins += 1;
        }
    }
    if bins == 0 {
        return Err(Error::DegenerateBand(band.band.to_string()));
    }
    Ok(sum * psd.bin_hz)
}

pub fn extract_features(seg: &Segment) -> Result<FeatureVector> {
    let canonical = CANONICAL_CHANNELS.iter().zip(&seg.channels).all(|(a, b)| a == b);
    if seg.channels.len() != N_CHANNELS || !canonical {
        return Err(Error::ChannelMismatch {
            expected: CANONICAL_CHANNELS.iter().map(|s| s.to_string()).collect(),
            found: seg.channels.clone(),
        });
    }
    let mut values = [0.0; N_FEATURES];
    for (c, data) in seg.data.iter().enumerate() {
        let spectrum = psd(data, seg.sample_rate_hz)?;
        for band in Band::ALL {
            values[feature_index(c, band)] = band_power(&spectrum, &band.def())?;
        }
    }
    FeatureVector::new(values)
}

/// [`extract_features`] over many segments; output order follows input.
pub fn extract_all(segments: &[Segment], mode: ExecMode) -> Result<Vec<FeatureVector>> {
    exec::try_map(mode, segments, extract_features)
}
