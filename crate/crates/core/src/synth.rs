//! Seeded synthetic EEG cohorts with known per-band power targets.
//!
//! Every subject's channel is a weighted sum of the same cohort-wide noise
//! components: four band-limited Gaussian components (one per disjoint band,
//! each concentrated around the centres of its band's 1 Hz feature bins)
//! and a 1/f floor. Subjects differ only in the weights,
//! so a classifier can only learn spectral signatures, never the identity of
//! a particular noise realisation.
//!
//! The weights are solved so that the expected band power over uniformly
//! random 4 s segments equals the recording's targets. Leakage between
//! bands and the floor's in-band share are part of that expectation.
//!
//! Subjects differ through log-normal signature spread (`separability`);
//! recordings of one subject differ through per-(channel, band) multiplicative
//! jitter.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::exec::{self, ExecMode};
use crate::features::{self, Band, N_BANDS, N_CHANNELS};
use crate::signal::{self, Recording, CANONICAL_CHANNELS};
use crate::{seed, Error, Result};

/// Cohort-mean band powers (µV²) for delta, theta, lower and higher alpha.
pub const COHORT_MEANS: [[f64; 4]; N_CHANNELS] = [
    [14.0, 7.0, 4.0, 3.0],
    [12.0, 6.0, 4.5, 3.5],
    [10.0, 5.0, 6.0, 5.0],
];

/// Log-scale standard deviation of signature spread at separability 1.
pub const INTER_LOG_SD: f64 = 0.35;

/// Lowest frequency carrying generated power, clear of the high-pass edge.
pub const MIN_HZ: f64 = 1.0;

/// Band components occupy frequencies within this fraction of a feature
/// bin width of a bin centre, which keeps rectangular-window leakage
/// between neighbouring bands near 1%.
pub const LINE_HALF_WIDTH: f64 = 0.25;

/// Upper edge of the broadband floor.
pub const FLOOR_MAX_HZ: f64 = 40.0;

/// Powers for the five bands of each channel; alpha is lower + higher alpha.
pub type BandMatrix = [[f64; N_BANDS]; N_CHANNELS];

/// Components per channel: four bands then the floor.
const N_COMP: usize = 5;
const FLOOR: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSignature {
    pub subject_id: String,
    pub targets: BandMatrix,
    pub intra_jitter: f64,
    pub noise_floor: f64,
}

impl SubjectSignature {
    pub fn validate(&self) -> Result<()> {
        let positive = self.targets.iter().flatten().all(|&t| t > 0.0 && t.is_finite());
        if !positive {
            return Err(Error::Spec(format!("{}: targets must be positive", self.subject_id)));
        }
        if !(0.0..1.0).contains(&self.intra_jitter) {
            return Err(Error::Spec(format!("intra_jitter must be in [0, 1), got {}", self.intra_jitter)));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::Spec(format!("noise_floor must be >= 0, got {}", self.noise_floor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub separability: f64,
    pub intra_jitter: f64,
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_subjects: 15,
            duration_s: 30.0,
            sample_rate_hz: signal::DEFAULT_SAMPLE_RATE_HZ,
            separability: 1.0,
            intra_jitter: 0.1,
            noise_floor: 1.0,
            seed: 42,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 {
            return Err(Error::Spec(format!("n_subjects must be at least 2, got {}", self.n_subjects)));
        }
        if !(self.duration_s >= signal::SEGMENT_SECONDS) {
            return Err(Error::Spec(format!("duration_s must be at least 4, got {}", self.duration_s)));
        }
        if !(self.sample_rate_hz > 2.0 * FLOOR_MAX_HZ && self.sample_rate_hz.is_finite()) {
            return Err(Error::Spec(format!("sample_rate_hz must exceed 80, got {}", self.sample_rate_hz)));
        }
        if !(self.separability >= 0.0 && self.separability.is_finite()) {
            return Err(Error::Spec(format!("separability must be >= 0, got {}", self.separability)));
        }
        if !(0.0..1.0).contains(&self.intra_jitter) {
            return Err(Error::Spec(format!("intra_jitter must be in [0, 1), got {}", self.intra_jitter)));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::Spec(format!("noise_floor must be >= 0, got {}", self.noise_floor)));
        }
        Ok(())
    }

    pub fn subject_id(index: usize) -> String {
        format!("SS{:02}", index + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortMember {
    pub signature: SubjectSignature,
    /// Signature after this recording's jitter; the realised band powers.
    pub recording_targets: BandMatrix,
    pub signature_seed: u64,
    pub recording_seed: u64,
    pub recording: Recording,
}

fn with_alpha(disjoint: [[f64; 4]; N_CHANNELS]) -> BandMatrix {
    disjoint.map(|[d, t, la, ha]| [d, t, la, ha, la + ha])
}

pub fn make_signature(spec: &CohortSpec, index: usize, seed_value: u64) -> SubjectSignature {
    let mut rng = seed::rng(seed_value);
    let mut disjoint = COHORT_MEANS;
    for row in disjoint.iter_mut() {
        for t in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *t *= (spec.separability * INTER_LOG_SD * z).exp();
        }
    }
    SubjectSignature {
        subject_id: CohortSpec::subject_id(index),
        targets: with_alpha(disjoint),
        intra_jitter: spec.intra_jitter,
        noise_floor: spec.noise_floor,
    }
}

/// Mean-one log-normal factors with relative standard deviation `jitter`.
fn jitter_factors(jitter: f64, rng: &mut impl Rng) -> [[f64; 4]; N_CHANNELS] {
    let s = (1.0 + jitter * jitter).ln().sqrt();
    let mut out = [[1.0; 4]; N_CHANNELS];
    for row in out.iter_mut() {
        for f in row.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *f = (s * z - 0.5 * s * s).exp();
        }
    }
    out
}

/// Seeds of the cohort-wide noise of one channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelNoiseSeeds {
    pub channel: String,
    pub band_seed: u64,
    pub floor_seed: u64,
}

pub fn channel_noise_seeds(spec: &CohortSpec) -> Vec<ChannelNoiseSeeds> {
    CANONICAL_CHANNELS
        .iter()
        .map(|ch| ChannelNoiseSeeds {
            channel: ch.to_string(),
            band_seed: seed::derive(spec.seed, &["band-noise", ch]),
            floor_seed: seed::derive(spec.seed, &["floor-noise", ch]),
        })
        .collect()
}

/// Unit-variance components of one channel and the quadratic form giving
/// the expected segment band powers: for weights `a`,
/// `E[power of band b] = sum_cd a_c a_d gram[b][c][d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBasis {
    pub components: [Vec<f64>; N_COMP],
    pub gram: [[[f64; N_COMP]; N_COMP]; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortBasis {
    pub channels: Vec<ChannelBasis>,
}

fn white_spectrum(n: usize, seed_value: u64, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let mut rng = seed::rng(seed_value);
    let mut spec: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    planner.plan_fft_forward(n).process(&mut spec);
    spec
}

/// Real signal from the strictly positive, non-Nyquist bins weighted by
/// `gain`, rescaled to unit mean square.
fn shaped(spec: &[Complex64], gain: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = spec.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..gain.len() {
        if gain[k] != 0.0 {
            out[k] = spec[k] * gain[k];
            out[n - k] = out[k].conj();
        }
    }
    planner.plan_fft_inverse(n).process(&mut out);
    let x: Vec<f64> = out.iter().map(|c| c.re).collect();
    let ms = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if ms > 0.0 {
        let s = ms.sqrt();
        x.into_iter().map(|v| v / s).collect()
    } else {
        x
    }
}

fn channel_basis(spec: &CohortSpec, seeds: &ChannelNoiseSeeds) -> Result<ChannelBasis> {
    let fs = spec.sample_rate_hz;
    let n = (spec.duration_s * fs).round() as usize;
    let mut planner = FftPlanner::new();
    let fine_hz = fs / n as f64;
    let half = (n - 1) / 2;
    let wl = features::window_len(fs);
    let bin_hz = fs / wl as f64;

    let band_spec = white_spectrum(n, seeds.band_seed, &mut planner);
    let floor_spec = white_spectrum(n, seeds.floor_seed, &mut planner);
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(N_COMP);
    for band in Band::DISJOINT {
        // Fine-grid frequencies close to the centres of the band's bins.
        let def = band.def();
        let gain: Vec<f64> = (0..=half)
            .map(|k| {
                let f = k as f64 * fine_hz;
                let centre = (f / bin_hz).round() * bin_hz;
                let near = (f - centre).abs() < LINE_HALF_WIDTH * bin_hz;
                f64::from(u8::from(k > 0 && f >= MIN_HZ && near && centre >= def.lo_hz && centre < def.hi_hz))
            })
            .collect();
        if gain.iter().all(|&g| g == 0.0) {
            return Err(Error::Spec(format!("{band} is empty at {fs} Hz / {} s", spec.duration_s)));
        }
        components.push(shaped(&band_spec, &gain, &mut planner));
    }
    let floor_gain: Vec<f64> = (0..=half)
        .map(|k| {
            let f = k as f64 * fine_hz;
            if k > 0 && (MIN_HZ..=FLOOR_MAX_HZ).contains(&f) {
                1.0 / f.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    components.push(shaped(&floor_spec, &floor_gain, &mut planner));
    let components: [Vec<f64>; N_COMP] = components.try_into().expect("five components");

    // Expected Welch band power over uniform segment starts: window start w
    // is used by count(w) (start, window) pairs out of n_starts starts.
    let seg_len = signal::segment_len(fs);
    let step = wl / 2;
    let n_windows = (seg_len - wl) / step + 1;
    let n_starts = n - seg_len + 1;
    let mut count = vec![0usize; n - wl + 1];
    for s in 0..n_starts {
        for j in 0..n_windows {
            count[s + j * step] += 1;
        }
    }
    let band_bins: Vec<Vec<usize>> = Band::DISJOINT
        .iter()
        .map(|b| {
            let def = b.def();
            (0..=wl / 2)
                .filter(|&k| {
                    let f = k as f64 * bin_hz;
                    def.lo_hz <= f && f < def.hi_hz
                })
                .collect()
        })
        .collect();
    let max_bin = band_bins.iter().flatten().copied().max().unwrap_or(0);
    let one_sided = |k: usize| if k == 0 || (wl % 2 == 0 && k == wl / 2) { 1.0 } else { 2.0 };
    let norm = bin_hz / (fs * wl as f64 * n_windows as f64 * n_starts as f64);

    let fft = planner.plan_fft_forward(wl);
    let mut gram = [[[0.0; N_COMP]; N_COMP]; 4];
    let mut bufs = vec![vec![Complex64::new(0.0, 0.0); wl]; N_COMP];
    for (w, &cnt) in count.iter().enumerate() {
        if cnt == 0 {
            continue;
        }
        for (c, buf) in bufs.iter_mut().enumerate() {
            for (b, &v) in buf.iter_mut().zip(&components[c][w..w + wl]) {
                *b = Complex64::new(v, 0.0);
            }
            fft.process(buf);
        }
        let weight = cnt as f64 * norm;
        for (b, bins) in band_bins.iter().enumerate() {
            for &k in bins {
                let scale = weight * one_sided(k);
                for c in 0..N_COMP {
                    for d in c..N_COMP {
                        let v = (bufs[c][k] * bufs[d][k].conj()).re * scale;
                        gram[b][c][d] += v;
                    }
                }
            }
        }
        debug_assert!(max_bin < wl);
    }
    for g in gram.iter_mut() {
        for c in 0..N_COMP {
            for d in 0..c {
                g[c][d] = g[d][c];
            }
        }
    }
    Ok(ChannelBasis { components, gram })
}

pub fn make_basis(spec: &CohortSpec, mode: ExecMode) -> Result<CohortBasis> {
    spec.validate()?;
    let seeds = channel_noise_seeds(spec);
    let channels = exec::try_map(mode, &seeds, |s| channel_basis(spec, s))?;
    Ok(CohortBasis { channels })
}

impl ChannelBasis {
    pub fn expected_powers(&self, weights: &[f64; N_COMP]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (b, o) in out.iter_mut().enumerate() {
            for c in 0..N_COMP {
                for d in 0..N_COMP {
                    *o += weights[c] * weights[d] * self.gram[b][c][d];
                }
            }
        }
        out
    }

    /// Band weights whose expected band powers equal `targets`, with the
    /// floor weight fixed at `sqrt(floor)`. Newton iteration from the
    /// leakage-free guess.
    pub fn solve_weights(&self, targets: &[f64; 4], floor: f64) -> Result<[f64; N_COMP]> {
        let mut a = [0.0; N_COMP];
        a[FLOOR] = floor.sqrt();
        for b in 0..4 {
            a[b] = (targets[b] / self.gram[b][b][b]).sqrt();
        }
        for _ in 0..100 {
            let p = self.expected_powers(&a);
            let resid: Vec<f64> = (0..4).map(|b| p[b] - targets[b]).collect();
            if (0..4).all(|b| resid[b].abs() <= 1e-13 * targets[b]) {
                break;
            }
            // d p_b / d a_c = 2 sum_d a_d gram[b][c][d]
            let mut jac = [[0.0; 4]; 4];
            for b in 0..4 {
                for c in 0..4 {
                    jac[b][c] = 2.0 * (0..N_COMP).map(|d| a[d] * self.gram[b][c][d]).sum::<f64>();
                }
            }
            let step = solve4(jac, [resid[0], resid[1], resid[2], resid[3]])
                .ok_or_else(|| Error::Spec("band weight system is singular".into()))?;
            for c in 0..4 {
                a[c] -= step[c];
            }
        }
        let p = self.expected_powers(&a);
        let converged = (0..4).all(|b| (p[b] - targets[b]).abs() <= 1e-9 * targets[b]);
        if !converged || a[..4].iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Spec(format!(
                "targets {targets:?} are not reachable over a noise floor of {floor}"
            )));
        }
        Ok(a)
    }

    pub fn synthesize(&self, weights: &[f64; N_COMP]) -> Vec<f64> {
        let n = self.components[0].len();
        (0..n)
            .map(|i| (0..N_COMP).map(|c| weights[c] * self.components[c][i]).sum())
            .collect()
    }
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut m: [[f64; 4]; 4], mut v: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let p = (col..4).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[p][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, p);
        v.swap(col, p);
        for r in col + 1..4 {
            let f = m[r][col] / m[col][col];
            for c in col..4 {
                m[r][c] -= f * m[col][c];
            }
            v[r] -= f * v[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|c| m[r][c] * x[c]).sum();
        x[r] = (v[r] - s) / m[r][r];
    }
    Some(x)
}

pub fn make_member(spec: &CohortSpec, index: usize) -> Result<CohortMember> {
    let basis = make_basis(spec, ExecMode::Serial)?;
    make_member_with(spec, &basis, index)
}

pub fn make_member_with(spec: &CohortSpec, basis: &CohortBasis, index: usize) -> Result<CohortMember> {
    let id = CohortSpec::subject_id(index);
    let signature_seed = seed::derive(spec.seed, &["signature", &id]);
    let recording_seed = seed::derive(spec.seed, &["recording", &id]);
    let signature = make_signature(spec, index, signature_seed);
    signature.validate()?;

    let mut rng = seed::rng(recording_seed);
    let factors = jitter_factors(signature.intra_jitter, &mut rng);
    let mut disjoint = [[0.0; 4]; N_CHANNELS];
    for c in 0..N_CHANNELS {
        for b in 0..4 {
            disjoint[c][b] = signature.targets[c][b] * factors[c][b];
        }
    }

    let samples = basis
        .channels
        .iter()
        .zip(&disjoint)
        .map(|(ch, targets)| Ok(ch.synthesize(&ch.solve_weights(targets, signature.noise_floor)?)))
        .collect::<Result<Vec<_>>>()?;
    let recording = Recording::new(
        id,
        spec.sample_rate_hz,
        CANONICAL_CHANNELS.iter().map(|s| s.to_string()).collect(),
        samples,
    )?;
    Ok(CohortMember {
        signature,
        recording_targets: with_alpha(disjoint),
        signature_seed,
        recording_seed,
        recording,
    })
}

pub fn make_cohort(spec: &CohortSpec, mode: ExecMode) -> Result<Vec<CohortMember>> {
    let basis = make_basis(spec, mode)?;
    let indices: Vec<usize> = (0..spec.n_subjects).collect();
    exec::try_map(mode, &indices, |&i| make_member_with(spec, &basis, i))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSubject {
    pub subject_id: String,
    pub signature_seed: u64,
    pub recording_seed: u64,
    pub targets: BandMatrix,
    pub recording_targets: BandMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub spec: CohortSpec,
    pub band_order: Vec<Band>,
    pub channel_order: Vec<String>,
    pub channel_noise: Vec<ChannelNoiseSeeds>,
    pub subjects: Vec<ManifestSubject>,
}

pub const COHORT_MANIFEST_FILE: &str = "cohort_manifest.json";

pub fn manifest(spec: &CohortSpec, members: &[CohortMember]) -> CohortManifest {
    CohortManifest {
        spec: spec.clone(),
        band_order: Band::ALL.to_vec(),
        channel_order: CANONICAL_CHANNELS.iter().map(|s| s.to_string()).collect(),
        channel_noise: channel_noise_seeds(spec),
        subjects: members
            .iter()
            .map(|m| ManifestSubject {
                subject_id: m.signature.subject_id.clone(),
                signature_seed: m.signature_seed,
                recording_seed: m.recording_seed,
                targets: m.signature.targets,
                recording_targets: m.recording_targets,
            })
            .collect(),
    }
}

/// Writes every recording (CSV + sidecar) and the cohort manifest to `dir`.
pub fn write_cohort(dir: &Path, spec: &CohortSpec, members: &[CohortMember]) -> Result<()> {
    for m in members {
        signal::io::write_recording(dir, &m.recording)?;
    }
    let path = dir.join(COHORT_MANIFEST_FILE);
    let body = serde_json::to_string_pretty(&manifest(spec, members))? + "\n";
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> CohortSpec {
        CohortSpec {
            n_subjects: 3,
            duration_s: 8.0,
            seed,
            ..CohortSpec::default()
        }
    }

    #[test]
    fn zero_separability_gives_identical_signatures() {
        let spec = CohortSpec {
            separability: 0.0,
            ..small(1)
        };
        let cohort = make_cohort(&spec, ExecMode::Serial).unwrap();
        for m in &cohort {
            assert_eq!(m.signature.targets, cohort[0].signature.targets);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_cohort(&small(42), ExecMode::Serial).unwrap();
        let b = make_cohort(&small(42), ExecMode::Parallel).unwrap();
        let c = make_cohort(&small(43), ExecMode::Serial).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].recording, c[0].recording);
    }

    #[test]
    fn expected_segment_features_equal_targets() {
        // Brute force over every segment start of a short recording.
        let spec = CohortSpec {
            duration_s: 6.0,
            ..small(7)
        };
        let m = make_member(&spec, 2).unwrap();
        let n_starts = m.recording.len() - signal::segment_len(spec.sample_rate_hz) + 1;
        let mut sum = [0.0; features::N_FEATURES];
        for s in 0..n_starts {
            let seg = signal::Segment {
                subject_id: m.signature.subject_id.clone(),
                start_index: s,
                sample_rate_hz: spec.sample_rate_hz,
                channels: m.recording.channels().to_vec(),
                data: m.recording.samples().iter().map(|ch| ch[s..s + 1000].to_vec()).collect(),
            };
            let f = features::extract_features(&seg).unwrap();
            for (a, v) in sum.iter_mut().zip(f.values()) {
                *a += v;
            }
        }
        for c in 0..N_CHANNELS {
            for band in Band::ALL {
                let mean = sum[features::feature_index(c, band)] / n_starts as f64;
                let target = m.recording_targets[c][band.index()];
                assert!((mean / target - 1.0).abs() < 1e-9, "{c} {band}: {mean} vs {target}");
            }
        }
    }

    #[test]
    fn null_cohort_recordings_are_identical() {
        let spec = CohortSpec {
            separability: 0.0,
            intra_jitter: 0.0,
            ..small(5)
        };
        let cohort = make_cohort(&spec, ExecMode::Serial).unwrap();
        for m in &cohort[1..] {
            assert_eq!(m.recording.samples(), cohort[0].recording.samples());
        }
    }

    #[test]
    fn alpha_is_union_of_halves() {
        let m = make_member(&small(3), 1).unwrap();
        for row in m.signature.targets.iter().chain(m.recording_targets.iter()) {
            assert_eq!(row[4], row[2] + row[3]);
        }
    }

    #[test]
    fn spec_validation() {
        for bad in [
            CohortSpec { n_subjects: 1, ..CohortSpec::default() },
            CohortSpec { duration_s: 3.9, ..CohortSpec::default() },
            CohortSpec { separability: -0.1, ..CohortSpec::default() },
            CohortSpec { intra_jitter: 1.0, ..CohortSpec::default() },
        ] {
            assert!(matches!(make_cohort(&bad, ExecMode::Serial), Err(Error::Spec(_))));
        }
    }
}
