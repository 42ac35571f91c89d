//! Frame-level low-level descriptors: loudness, alpha ratio, semitone F0,
//! local jitter and voicing, on a 25 ms window / 10 ms hop grid.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::io::{AudioBuffer, DenseMatrix};

pub const WINDOW_MS: usize = 25;
pub const HOP_MS: usize = 10;
const FFT_SIZE: usize = 512;
const MEL_BANDS: usize = 26;
const MEL_LOW_HZ: f64 = 20.0;
const MEL_HIGH_HZ: f64 = 8000.0;
const LOUDNESS_EXPONENT: f64 = 0.3;
const ALPHA_EPS: f64 = 1e-10;
const F0_MIN_HZ: f64 = 55.0;
const F0_MAX_HZ: f64 = 500.0;
pub const VOICING_THRESHOLD: f64 = 0.45;
/// The earliest autocorrelation peak within this fraction of the best one
/// wins, which keeps period doubling out of the estimate.
const OCTAVE_RATIO: f64 = 0.9;
pub const SEMITONE_REF_HZ: f64 = 27.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGrid {
    pub window: usize,
    pub hop: usize,
    pub num_frames: usize,
}

impl FrameGrid {
    pub fn new(num_samples: usize, sample_rate: u32) -> Result<Self> {
        let window = sample_rate as usize * WINDOW_MS / 1000;
        let hop = sample_rate as usize * HOP_MS / 1000;
        if num_samples < window {
            return Err(Error::TooShort {
                samples: num_samples,
                needed: window,
            });
        }
        Ok(Self {
            window,
            hop,
            num_frames: (num_samples - window) / hop + 1,
        })
    }

    pub fn for_audio(audio: &AudioBuffer) -> Result<Self> {
        Self::new(audio.samples.len(), audio.sample_rate_hz)
    }

    /// Samples needed for exactly `frames` frames.
    pub fn samples_for(frames: usize, sample_rate: u32) -> usize {
        let window = sample_rate as usize * WINDOW_MS / 1000;
        let hop = sample_rate as usize * HOP_MS / 1000;
        (frames.max(1) - 1) * hop + window
    }

    pub fn frame<'a>(&self, samples: &'a [f64], n: usize) -> &'a [f64] {
        &samples[n * self.hop..n * self.hop + self.window]
    }

    fn check(&self, audio: &AudioBuffer) -> Result<()> {
        let expected = FrameGrid::for_audio(audio)?;
        if expected != *self {
            return Err(Error::Shape(format!(
                "frame grid {self:?} does not match the signal ({expected:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub loudness: Vec<f64>,
    pub alpha_ratio_db: Vec<f64>,
    pub f0_semitones: Vec<f64>,
    pub jitter_local: Vec<f64>,
    pub voiced: Vec<bool>,
}

impl FrameFeatures {
    pub fn new(
        loudness: Vec<f64>,
        alpha_ratio_db: Vec<f64>,
        f0_semitones: Vec<f64>,
        jitter_local: Vec<f64>,
        voiced: Vec<bool>,
    ) -> Result<Self> {
        let n = voiced.len();
        if [loudness.len(), alpha_ratio_db.len(), f0_semitones.len(), jitter_local.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::Shape("frame feature columns differ in length".into()));
        }
        for t in 0..n {
            let values = [loudness[t], alpha_ratio_db[t], f0_semitones[t], jitter_local[t]];
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: t });
            }
            if !voiced[t] && (f0_semitones[t] != 0.0 || jitter_local[t] != 0.0) {
                return Err(Error::Validation {
                    line: t,
                    message: format!("unvoiced frame {t} carries pitch or jitter"),
                });
            }
            if !(0.0..=1.0).contains(&jitter_local[t]) || loudness[t] < 0.0 {
                return Err(Error::Validation {
                    line: t,
                    message: format!("frame {t} has out-of-range loudness or jitter"),
                });
            }
        }
        Ok(Self {
            loudness,
            alpha_ratio_db,
            f0_semitones,
            jitter_local,
            voiced,
        })
    }

    /// Pitch-only features, convenient for contour-level code and tests.
    pub fn from_contour(f0_semitones: Vec<f64>, voiced: Vec<bool>) -> Result<Self> {
        let n = voiced.len();
        let f0 = f0_semitones
            .iter()
            .zip(&voiced)
            .map(|(&f, &v)| if v { f } else { 0.0 })
            .collect();
        Self::new(vec![0.0; n], vec![0.0; n], f0, vec![0.0; n], voiced)
    }

    pub fn len(&self) -> usize {
        self.voiced.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voiced.is_empty()
    }

    /// Columns: loudness, alpha_db, f0_st, jitter, voiced (0/1).
    pub fn to_matrix(&self) -> Result<DenseMatrix> {
        let mut v = Vec::with_capacity(self.len() * 5);
        for t in 0..self.len() {
            v.extend_from_slice(&[
                self.loudness[t],
                self.alpha_ratio_db[t],
                self.f0_semitones[t],
                self.jitter_local[t],
                if self.voiced[t] { 1.0 } else { 0.0 },
            ]);
        }
        DenseMatrix::from_f64(self.len(), 5, &v)
    }

    pub fn from_matrix(m: &DenseMatrix) -> Result<Self> {
        if m.cols() != 5 {
            return Err(Error::Shape(format!(
                "frame features need 5 columns, found {}",
                m.cols()
            )));
        }
        let col = |c: usize| (0..m.rows()).map(|r| m.get(r, c) as f64).collect::<Vec<_>>();
        Self::new(
            col(0),
            col(1),
            col(2),
            col(3),
            (0..m.rows()).map(|r| m.get(r, 4) != 0.0).collect(),
        )
    }
}

pub fn hz_to_semitones(f0_hz: f64) -> Result<f64> {
    if !(f0_hz > 0.0) || !f0_hz.is_finite() {
        return Err(Error::Domain(format!("F0 {f0_hz} Hz is not positive")));
    }
    Ok(12.0 * (f0_hz / SEMITONE_REF_HZ).log2())
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Hann-windowed power spectra plus the filterbank and band masks that the
/// spectral descriptors share.
struct SpectralAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    bin_hz: f64,
    mel_filters: Vec<Vec<(usize, f64)>>,
}

impl SpectralAnalyzer {
    fn new(window_len: usize, sample_rate: u32) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
        let window = (0..window_len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (window_len - 1) as f64).cos())
            .collect();
        let bin_hz = sample_rate as f64 / FFT_SIZE as f64;
        let (lo, hi) = (hz_to_mel(MEL_LOW_HZ), hz_to_mel(MEL_HIGH_HZ));
        let edges: Vec<f64> = (0..MEL_BANDS + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (MEL_BANDS + 1) as f64))
            .collect();
        let mel_filters = (0..MEL_BANDS)
            .map(|b| {
                let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
                (0..=FFT_SIZE / 2)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f >= l && f <= c {
                            (f - l) / (c - l)
                        } else if f > c && f <= r {
                            (r - f) / (r - c)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();
        Self {
            fft,
            window,
            bin_hz,
            mel_filters,
        }
    }

    fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
        for (b, (&x, &w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
            b.re = x * w;
        }
        self.fft.process(&mut buf);
        buf[..=FFT_SIZE / 2].iter().map(|c| c.norm_sqr()).collect()
    }

    fn loudness(&self, power: &[f64]) -> f64 {
        self.mel_filters
            .iter()
            .map(|f| {
                let band: f64 = f.iter().map(|&(k, w)| w * power[k]).sum();
                band.powf(LOUDNESS_EXPONENT)
            })
            .sum()
    }

    fn band_energy(&self, power: &[f64], lo_hz: f64, hi_hz: f64, include_hi: bool) -> f64 {
        power
            .iter()
            .enumerate()
            .filter(|&(k, _)| {
                let f = k as f64 * self.bin_hz;
                f >= lo_hz && (f < hi_hz || (include_hi && f == hi_hz))
            })
            .map(|(_, p)| p)
            .sum()
    }

    fn alpha_ratio_db(&self, power: &[f64]) -> f64 {
        let low = self.band_energy(power, 50.0, 1000.0, false);
        let high = self.band_energy(power, 1000.0, 5000.0, true);
        10.0 * ((low + ALPHA_EPS) / (high + ALPHA_EPS)).log10()
    }
}

fn spectra(audio: &AudioBuffer, grid: &FrameGrid) -> Result<(SpectralAnalyzer, Vec<Vec<f64>>)> {
    grid.check(audio)?;
    let analyzer = SpectralAnalyzer::new(grid.window, audio.sample_rate_hz);
    let spectra = (0..grid.num_frames)
        .map(|n| analyzer.power_spectrum(grid.frame(&audio.samples, n)))
        .collect();
    Ok((analyzer, spectra))
}

/// Sum over 26 mel bands of (band power)^0.3.
pub fn compute_loudness(audio: &AudioBuffer, grid: &FrameGrid) -> Result<Vec<f64>> {
    let (a, s) = spectra(audio, grid)?;
    Ok(s.iter().map(|p| a.loudness(p)).collect())
}

/// 10·log10 of 50–1000 Hz energy over 1–5 kHz energy, each floored by 1e-10.
pub fn compute_alpha_ratio(audio: &AudioBuffer, grid: &FrameGrid) -> Result<Vec<f64>> {
    let (a, s) = spectra(audio, grid)?;
    Ok(s.iter().map(|p| a.alpha_ratio_db(p)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchFrame {
    pub f0_hz: f64,
    pub voiced: bool,
}

/// Normalized autocorrelation where each lag is scaled by the energies of
/// the two overlapping segments.
fn normalized_autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len() - lag;
    let (mut cross, mut e0, mut e1) = (0.0, 0.0, 0.0);
    for i in 0..n {
        cross += x[i] * x[i + lag];
        e0 += x[i] * x[i];
        e1 += x[i + lag] * x[i + lag];
    }
    let denom = (e0 * e1).sqrt();
    if denom > 1e-300 {
        cross / denom
    } else {
        0.0
    }
}

fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

fn frame_pitch(frame: &[f64], sample_rate: f64) -> PitchFrame {
    let min_lag = (sample_rate / F0_MAX_HZ).floor() as usize;
    let max_lag = ((sample_rate / F0_MIN_HZ).ceil() as usize).min(frame.len() - 2);
    let r: Vec<f64> = (0..=max_lag + 1)
        .map(|lag| {
            if lag + 1 >= min_lag {
                normalized_autocorrelation(frame, lag)
            } else {
                0.0
            }
        })
        .collect();
    let peaks: Vec<usize> = (min_lag..=max_lag)
        .filter(|&l| r[l] >= r[l - 1] && r[l] > r[l + 1])
        .collect();
    let best = peaks.iter().map(|&l| r[l]).fold(f64::NEG_INFINITY, f64::max);
    let unvoiced = PitchFrame {
        f0_hz: 0.0,
        voiced: false,
    };
    if !(best > VOICING_THRESHOLD) {
        return unvoiced;
    }
    let lag = peaks
        .into_iter()
        .find(|&l| r[l] >= OCTAVE_RATIO * best)
        .expect("the best peak qualifies");
    if !(r[lag] > VOICING_THRESHOLD) {
        return unvoiced;
    }
    let refined = lag as f64 + parabolic_offset(r[lag - 1], r[lag], r[lag + 1]);
    PitchFrame {
        f0_hz: sample_rate / refined,
        voiced: true,
    }
}

/// Autocorrelation pitch over 55–500 Hz; voiced when the chosen normalized
/// peak exceeds 0.45.
pub fn estimate_f0(audio: &AudioBuffer, grid: &FrameGrid) -> Result<Vec<PitchFrame>> {
    grid.check(audio)?;
    let sr = audio.sample_rate_hz as f64;
    Ok((0..grid.num_frames)
        .map(|n| frame_pitch(grid.frame(&audio.samples, n), sr))
        .collect())
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..hi).fold(lo, |best, i| if x[i] > x[best] { i } else { best })
}

/// Positions of successive waveform maxima spaced about one period apart,
/// refined to sub-sample precision. Tracking stops at the first candidate
/// that is not a strict interior local maximum.
fn track_periods(x: &[f64], period: f64) -> Vec<f64> {
    if x.len() < 3 {
        return Vec::new();
    }
    let is_peak = |i: usize| i > 0 && i + 1 < x.len() && x[i] > 0.0 && x[i] >= x[i - 1] && x[i] > x[i + 1];
    let refine = |i: usize| i as f64 + parabolic_offset(x[i - 1], x[i], x[i + 1]);
    let anchor = argmax(x, 0, x.len());
    if !is_peak(anchor) {
        return Vec::new();
    }
    let mut forward = vec![anchor];
    loop {
        let prev = *forward.last().unwrap() as f64;
        let lo = (prev + 0.75 * period).ceil() as usize;
        let hi = ((prev + 1.25 * period).floor() as usize + 1).min(x.len());
        if lo >= hi {
            break;
        }
        let i = argmax(x, lo, hi);
        if !is_peak(i) {
            break;
        }
        forward.push(i);
    }
    let mut backward = Vec::new();
    let mut prev = anchor as f64;
    loop {
        let lo = prev - 1.25 * period;
        let hi = prev - 0.75 * period;
        if hi < 0.0 {
            break;
        }
        let (lo, hi) = (lo.max(0.0).ceil() as usize, hi.floor() as usize + 1);
        if lo >= hi {
            break;
        }
        let i = argmax(x, lo, hi);
        if !is_peak(i) {
            break;
        }
        backward.push(i);
        prev = i as f64;
    }
    backward.reverse();
    backward.extend(forward);
    backward.into_iter().map(refine).collect()
}

/// Local jitter: mean absolute difference of consecutive periods divided by
/// the mean period, over the three windows centred on each voiced frame.
pub fn compute_jitter(
    audio: &AudioBuffer,
    grid: &FrameGrid,
    pitch: &[PitchFrame],
) -> Result<Vec<f64>> {
    grid.check(audio)?;
    if pitch.len() != grid.num_frames {
        return Err(Error::Shape(format!(
            "{} pitch frames for a {}-frame grid",
            pitch.len(),
            grid.num_frames
        )));
    }
    let sr = audio.sample_rate_hz as f64;
    let x = &audio.samples;
    Ok(pitch
        .iter()
        .enumerate()
        .map(|(n, p)| {
            if !p.voiced {
                return 0.0;
            }
            let lo = n.saturating_sub(1) * grid.hop;
            let hi = ((n + 1) * grid.hop + grid.window).min(x.len());
            let peaks = track_periods(&x[lo..hi], sr / p.f0_hz);
            let periods: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
            if periods.len() < 3 {
                return 0.0;
            }
            let mean_period = periods.iter().sum::<f64>() / periods.len() as f64;
            let mean_diff = periods.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
                / (periods.len() - 1) as f64;
            (mean_diff / mean_period).clamp(0.0, 1.0)
        })
        .collect())
}

pub fn extract_frame_features(audio: &AudioBuffer) -> Result<FrameFeatures> {
    let grid = FrameGrid::for_audio(audio)?;
    let (analyzer, spectra) = spectra(audio, &grid)?;
    let pitch = estimate_f0(audio, &grid)?;
    let jitter = compute_jitter(audio, &grid, &pitch)?;
    let f0_semitones = pitch
        .iter()
        .map(|p| if p.voiced { hz_to_semitones(p.f0_hz) } else { Ok(0.0) })
        .collect::<Result<Vec<_>>>()?;
    FrameFeatures::new(
        spectra.iter().map(|p| analyzer.loudness(p)).collect(),
        spectra.iter().map(|p| analyzer.alpha_ratio_db(p)).collect(),
        f0_semitones,
        jitter,
        pitch.iter().map(|p| p.voiced).collect(),
    )
}
