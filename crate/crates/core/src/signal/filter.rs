//! Butterworth band-pass design and zero-phase (forward-backward) filtering.
//!
//! Design path: analog low-pass prototype -> low-pass to band-pass
//! transform at pre-warped edges -> bilinear transform -> second-order
//! sections. Each section keeps one conjugate pole pair and the zero pair
//! {+1, -1}, so every section blocks DC and Nyquist on its own.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::{Error, Result};

/// Prototype order used by the preprocessing stage. Forward-backward
/// application doubles the effective order.
pub const DEFAULT_ORDER: usize = 4;

/// Impulse-response level (relative to its peak) below which the filter is
/// considered settled.
const SETTLE_LEVEL: f64 = 1e-3;

/// Multiple of the settling length used for reflection padding.
const PAD_FACTOR: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// Denominator with `a[0] == 1` implied.
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + self.b[1] * z1 + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z1 + self.a[1] * z2;
        num / den
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    pub sections: Vec<Biquad>,
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub sample_rate_hz: f64,
    /// Samples until the impulse response stays below 1e-3 of its peak.
    pub settling_len: usize,
}

impl BandpassFilter {
    pub fn butterworth(order: usize, lo_hz: f64, hi_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        let nyquist = sample_rate_hz / 2.0;
        let valid = order >= 1
            && sample_rate_hz > 0.0
            && lo_hz.is_finite()
            && hi_hz.is_finite()
            && 0.0 < lo_hz
            && lo_hz < hi_hz
            && hi_hz < nyquist;
        if !valid {
            return Err(Error::InvalidBand {
                lo_hz,
                hi_hz,
                sample_rate_hz,
            });
        }

        let fs2 = 2.0 * sample_rate_hz;
        let w_lo = fs2 * (PI * lo_hz / sample_rate_hz).tan();
        let w_hi = fs2 * (PI * hi_hz / sample_rate_hz).tan();
        let bw = w_hi - w_lo;
        let w0_sq = w_lo * w_hi;

        let mut poles = Vec::with_capacity(2 * order);
        for k in 1..=order {
            let theta = PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            let proto = Complex64::from_polar(1.0, theta);
            let half = proto * (bw / 2.0);
            let disc = (half * half - w0_sq).sqrt();
            for s in [half + disc, half - disc] {
                poles.push((fs2 + s) / (fs2 - s));
            }
        }

        let sections = pair_poles(&poles)
            .into_iter()
            .map(|(p1, p2)| Biquad {
                b: [1.0, 0.0, -1.0],
                a: [-(p1 + p2).re, (p1 * p2).re],
            })
            .collect::<Vec<_>>();

        // Butterworth band-pass has exactly unit gain at the (warped) centre.
        let w_center = 2.0 * (w0_sq.sqrt() / fs2).atan();
        let raw: f64 = sections.iter().map(|s| s.response(w_center).norm()).product();
        let per_section = (1.0 / raw).powf(1.0 / sections.len() as f64);
        let sections = sections
            .into_iter()
            .map(|s| Biquad {
                b: s.b.map(|c| c * per_section),
                a: s.a,
            })
            .collect::<Vec<_>>();

        let mut filter = BandpassFilter {
            sections,
            lo_hz,
            hi_hz,
            sample_rate_hz,
            settling_len: 0,
        };
        filter.settling_len = filter.measure_settling();
        Ok(filter)
    }

    /// |H(f)| of a single (forward-only) pass.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        self.sections.iter().map(|s| s.response(w).norm()).product()
    }

    /// Reflection padding applied at each end by [`filtfilt`](Self::filtfilt).
    pub fn pad_len(&self) -> usize {
        PAD_FACTOR * self.settling_len
    }

    fn measure_settling(&self) -> usize {
        let max_len = (60.0 * self.sample_rate_hz).ceil() as usize;
        let mut impulse = vec![0.0; max_len];
        impulse[0] = 1.0;
        let h = self.lfilter(&impulse, None);
        let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let last = h.iter().rposition(|v| v.abs() > SETTLE_LEVEL * peak).unwrap_or(0);
        last + 1
    }

    /// Steady-state section states for a constant input of 1.
    fn step_state(&self) -> Vec<[f64; 2]> {
        let mut u = 1.0;
        let mut states = Vec::with_capacity(self.sections.len());
        for s in &self.sections {
            let y = s.dc_gain() * u;
            let z2 = s.b[2] * u - s.a[1] * y;
            let z1 = s.b[1] * u - s.a[0] * y + z2;
            states.push([z1, z2]);
            u = y;
        }
        states
    }

    /// Cascaded transposed direct-form II filtering. `init_scale` scales the
    /// step steady state used as the initial condition.
    fn lfilter(&self, x: &[f64], init_scale: Option<f64>) -> Vec<f64> {
        let mut states = match init_scale {
            Some(c) => self.step_state().into_iter().map(|[a, b]| [a * c, b * c]).collect(),
            None => vec![[0.0; 2]; self.sections.len()],
        };
        let mut out = Vec::with_capacity(x.len());
        for &v in x {
            let mut u = v;
            for (s, z) in self.sections.iter().zip(states.iter_mut()) {
                let y = s.b[0] * u + z[0];
                z[0] = s.b[1] * u - s.a[0] * y + z[1];
                z[1] = s.b[2] * u - s.a[1] * y;
                u = y;
            }
            out.push(u);
        }
        out
    }

    /// Zero-phase filtering: odd reflection padding, forward pass, backward pass.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.pad_len();
        if x.len() <= pad {
            return Err(Error::TooShort {
                required: pad + 1,
                available: x.len(),
            });
        }
        let n = x.len();
        let first = x[0];
        let last = x[n - 1];
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

        let fwd = self.lfilter(&ext, Some(ext[0]));
        let mut rev: Vec<f64> = fwd.into_iter().rev().collect();
        let start = rev[0];
        rev = self.lfilter(&rev, Some(start));
        rev.reverse();
        Ok(rev[pad..pad + n].to_vec())
    }
}

/// Groups digital poles into conjugate pairs (or pairs of real poles).
fn pair_poles(poles: &[Complex64]) -> Vec<(Complex64, Complex64)> {
    const IMAG_EPS: f64 = 1e-12;
    let mut pairs = Vec::new();
    let mut reals = Vec::new();
    for &p in poles {
        if p.im > IMAG_EPS {
            pairs.push((p, p.conj()));
        } else if p.im.abs() <= IMAG_EPS {
            reals.push(p.re);
        }
    }
    reals.sort_by(|a, b| a.total_cmp(b));
    for chunk in reals.chunks(2) {
        let a = Complex64::new(chunk[0], 0.0);
        let b = Complex64::new(*chunk.get(1).unwrap_or(&0.0), 0.0);
        pairs.push((a, b));
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eeg_filter() -> BandpassFilter {
        BandpassFilter::butterworth(DEFAULT_ORDER, 0.5, 40.0, 250.0).unwrap()
    }

    #[test]
    fn four_sections_for_order_four() {
        let f = eeg_filter();
        assert_eq!(f.sections.len(), 4);
        for s in &f.sections {
            // poles inside the unit circle
            assert!(s.a[1] < 1.0 && s.a[1] > 0.0);
        }
    }

    #[test]
    fn half_power_at_edges() {
        let f = eeg_filter();
        assert!((f.magnitude(0.5).powi(2) - 0.5).abs() < 1e-9);
        assert!((f.magnitude(40.0).powi(2) - 0.5).abs() < 1e-9);
        assert!((f.magnitude(10.0) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn settling_matches_reference_design() {
        // scipy.signal.butter(4, [0.5, 40], 'bandpass', fs=250) impulse
        // response drops below 1e-3 of its peak after sample 741.
        assert_eq!(eeg_filter().settling_len, 742);
    }

    #[test]
    fn rejects_bad_bands() {
        assert!(matches!(
            BandpassFilter::butterworth(4, 40.0, 0.5, 250.0),
            Err(Error::InvalidBand { .. })
        ));
        assert!(BandpassFilter::butterworth(4, 0.5, 125.0, 250.0).is_err());
        assert!(BandpassFilter::butterworth(4, 0.0, 40.0, 250.0).is_err());
    }

    #[test]
    fn too_short_input() {
        let f = eeg_filter();
        let x = vec![0.0; f.pad_len()];
        assert!(matches!(f.filtfilt(&x), Err(Error::TooShort { .. })));
    }

    #[test]
    fn odd_order_design_is_stable() {
        let f = BandpassFilter::butterworth(3, 1.0, 30.0, 250.0).unwrap();
        assert_eq!(f.sections.len(), 3);
        assert!((f.magnitude(1.0).powi(2) - 0.5).abs() < 1e-6);
    }
}
