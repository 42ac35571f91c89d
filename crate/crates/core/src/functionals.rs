//! Utterance-level statistics over the frame features: pitch distribution,
//! piecewise pitch slopes and voiced/unvoiced run lengths.

use crate::io::DenseMatrix;
use crate::error::Result;
use crate::lld::{FrameFeatures, HOP_MS};

const FRAME_S: f64 = HOP_MS as f64 / 1000.0;

pub const FIELD_NAMES: [&str; 13] = [
    "pitch_mean_st",
    "pitch_std_st",
    "pitch_p20_st",
    "pitch_p50_st",
    "pitch_p80_st",
    "rise_slope_mean",
    "rise_slope_std",
    "fall_slope_mean",
    "fall_slope_std",
    "voiced_seg_mean_s",
    "voiced_seg_std_s",
    "unvoiced_seg_mean_s",
    "unvoiced_seg_std_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UtteranceFunctionals {
    pub pitch_mean_st: f64,
    pub pitch_std_st: f64,
    pub pitch_p20_st: f64,
    pub pitch_p50_st: f64,
    pub pitch_p80_st: f64,
    /// Semitones per second.
    pub rise_slope_mean: f64,
    pub rise_slope_std: f64,
    pub fall_slope_mean: f64,
    pub fall_slope_std: f64,
    pub voiced_seg_mean_s: f64,
    pub voiced_seg_std_s: f64,
    pub unvoiced_seg_mean_s: f64,
    pub unvoiced_seg_std_s: f64,
}

impl UtteranceFunctionals {
    pub fn to_array(&self) -> [f64; 13] {
        [
            self.pitch_mean_st,
            self.pitch_std_st,
            self.pitch_p20_st,
            self.pitch_p50_st,
            self.pitch_p80_st,
            self.rise_slope_mean,
            self.rise_slope_std,
            self.fall_slope_mean,
            self.fall_slope_std,
            self.voiced_seg_mean_s,
            self.voiced_seg_std_s,
            self.unvoiced_seg_mean_s,
            self.unvoiced_seg_std_s,
        ]
    }

    pub fn from_array(v: [f64; 13]) -> Self {
        Self {
            pitch_mean_st: v[0],
            pitch_std_st: v[1],
            pitch_p20_st: v[2],
            pitch_p50_st: v[3],
            pitch_p80_st: v[4],
            rise_slope_mean: v[5],
            rise_slope_std: v[6],
            fall_slope_mean: v[7],
            fall_slope_std: v[8],
            voiced_seg_mean_s: v[9],
            voiced_seg_std_s: v[10],
            unvoiced_seg_mean_s: v[11],
            unvoiced_seg_std_s: v[12],
        }
    }

    pub fn to_matrix(&self) -> Result<DenseMatrix> {
        DenseMatrix::from_f64(1, 13, &self.to_array())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoicingSegment {
    pub voiced: bool,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
}

impl VoicingSegment {
    pub fn frames(&self) -> usize {
        self.end - self.start + 1
    }
}

pub fn segment_voicing(features: &FrameFeatures) -> Vec<VoicingSegment> {
    let mut out: Vec<VoicingSegment> = Vec::new();
    for (t, &v) in features.voiced.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.voiced == v => seg.end = t,
            _ => out.push(VoicingSegment {
                voiced: v,
                start: t,
                end: t,
            }),
        }
    }
    out
}

/// Splits each voiced run at strict local extrema of the semitone contour.
/// Every piece of two or more frames contributes its end-to-end slope;
/// flat pieces are dropped.
pub fn pitch_slopes(features: &FrameFeatures) -> (Vec<f64>, Vec<f64>) {
    let (mut rising, mut falling) = (Vec::new(), Vec::new());
    let c = &features.f0_semitones;
    for seg in segment_voicing(features).iter().filter(|s| s.voiced) {
        let mut cuts = vec![seg.start];
        for j in seg.start + 1..seg.end {
            let peak = c[j] > c[j - 1] && c[j] > c[j + 1];
            let trough = c[j] < c[j - 1] && c[j] < c[j + 1];
            if peak || trough {
                cuts.push(j);
            }
        }
        cuts.push(seg.end);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let slope = (c[b] - c[a]) / ((b - a) as f64 * FRAME_S);
            if slope > 0.0 {
                rising.push(slope);
            } else if slope < 0.0 {
                falling.push(slope);
            }
        }
    }
    (rising, falling)
}

/// Population mean and standard deviation; (0, 0) on an empty set.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolated percentile of already sorted values, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn compute_functionals(features: &FrameFeatures) -> UtteranceFunctionals {
    let mut pitch: Vec<f64> = features
        .f0_semitones
        .iter()
        .zip(&features.voiced)
        .filter(|(_, &v)| v)
        .map(|(&f, _)| f)
        .collect();
    let (pitch_mean_st, pitch_std_st) = mean_std(&pitch);
    pitch.sort_by(f64::total_cmp);

    let (rising, falling) = pitch_slopes(features);
    let (rise_slope_mean, rise_slope_std) = mean_std(&rising);
    let (fall_slope_mean, fall_slope_std) = mean_std(&falling);

    let segments = segment_voicing(features);
    let run_lengths = |voiced: bool| -> Vec<f64> {
        segments
            .iter()
            .filter(|s| s.voiced == voiced)
            .map(|s| s.frames() as f64 * FRAME_S)
            .collect()
    };
    let (voiced_seg_mean_s, voiced_seg_std_s) = mean_std(&run_lengths(true));
    let (unvoiced_seg_mean_s, unvoiced_seg_std_s) = mean_std(&run_lengths(false));

    UtteranceFunctionals {
        pitch_mean_st,
        pitch_std_st,
        pitch_p20_st: percentile(&pitch, 0.2),
        pitch_p50_st: percentile(&pitch, 0.5),
        pitch_p80_st: percentile(&pitch, 0.8),
        rise_slope_mean,
        rise_slope_std,
        fall_slope_mean,
        fall_slope_std,
        voiced_seg_mean_s,
        voiced_seg_std_s,
        unvoiced_seg_mean_s,
        unvoiced_seg_std_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contour(values: &[f64], voiced: &[bool]) -> FrameFeatures {
        FrameFeatures::from_contour(values.to_vec(), voiced.to_vec()).unwrap()
    }

    #[test]
    fn run_length_segments() {
        let (v, u) = (true, false);
        let f = contour(&[0.0; 6], &[v, v, u, u, u, v]);
        let s: Vec<_> = segment_voicing(&f).iter().map(|s| (s.voiced, s.start, s.end)).collect();
        assert_eq!(s, vec![(v, 0, 1), (u, 2, 4), (v, 5, 5)]);
        assert_eq!(segment_voicing(&contour(&[1.0; 4], &[true; 4])).len(), 1);
        assert_eq!(segment_voicing(&contour(&[1.0; 4], &[v, u, v, u])).len(), 4);
    }

    #[test]
    fn slopes_of_a_peak() {
        let f = contour(&[30.0, 31.0, 32.0, 31.0, 30.0], &[true; 5]);
        let (r, fl) = pitch_slopes(&f);
        assert_eq!(r.len(), 1);
        assert_eq!(fl.len(), 1);
        assert!((r[0] - 100.0).abs() < 1e-9);
        assert!((fl[0] + 100.0).abs() < 1e-9);
    }

    #[test]
    fn flat_and_unvoiced_contours_have_no_slopes() {
        let (r, f) = pitch_slopes(&contour(&[33.0; 8], &[true; 8]));
        assert!(r.is_empty() && f.is_empty());
        let (r, f) = pitch_slopes(&contour(&[0.0; 8], &[false; 8]));
        assert!(r.is_empty() && f.is_empty());
    }

    #[test]
    fn all_unvoiced() {
        let f = contour(&[0.0; 37], &[false; 37]);
        let u = compute_functionals(&f);
        assert!(u.to_array()[..9].iter().all(|&v| v == 0.0));
        assert!((u.unvoiced_seg_mean_s - 0.37).abs() < 1e-12);
        assert_eq!(u.unvoiced_seg_std_s, 0.0);
        assert_eq!(u.voiced_seg_mean_s, 0.0);
    }

    #[test]
    fn two_point_pitch_stats() {
        let u = compute_functionals(&contour(&[30.0, 40.0], &[true, true]));
        assert!((u.pitch_mean_st - 35.0).abs() < 1e-12);
        assert!((u.pitch_std_st - 5.0).abs() < 1e-12);
        assert!((u.pitch_p50_st - 35.0).abs() < 1e-12);
        assert!((u.pitch_p20_st - 32.0).abs() < 1e-12);
        assert!((u.pitch_p80_st - 38.0).abs() < 1e-12);
    }

    #[test]
    fn segment_duration_stats() {
        let mut voiced = vec![true; 10];
        voiced.extend([false; 20]);
        voiced.extend([true; 10]);
        let u = compute_functionals(&contour(&[35.0; 40], &voiced));
        assert!((u.voiced_seg_mean_s - 0.10).abs() < 1e-12);
        assert_eq!(u.voiced_seg_std_s, 0.0);
        assert!((u.unvoiced_seg_mean_s - 0.20).abs() < 1e-12);
    }

    #[test]
    fn matrix_is_one_row() {
        let m = compute_functionals(&contour(&[30.0, 40.0], &[true, true])).to_matrix().unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 13));
        assert_eq!(FIELD_NAMES.len(), 13);
    }
}
