//! Forced alignment of a canonical phone sequence to frame log-posteriors.
//!
//! The search space is every monotone segmentation of `T` frames into `L`
//! non-empty runs in canonical order; the aligner returns the segmentation
//! with the highest summed log-posterior.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::inventory;
use crate::io::DenseMatrix;

pub const HOP_MS: f64 = 10.0;

/// Frame-by-phone log-probabilities, `num_frames x 41`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    log_probs: Array2<f64>,
}

impl PosteriorMatrix {
    pub fn new(log_probs: Array2<f64>) -> Result<Self> {
        if log_probs.ncols() != inventory::SIZE {
            return Err(Error::Shape(format!(
                "posterior matrix has {} columns, inventory has {}",
                log_probs.ncols(),
                inventory::SIZE
            )));
        }
        if let Some(index) = log_probs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { log_probs })
    }

    /// Accepts only rows whose log-sum-exp is within 1e-3 of zero.
    pub fn from_normalized(m: &DenseMatrix) -> Result<Self> {
        let p = Self::new(m.to_array())?;
        for (t, row) in p.log_probs.rows().into_iter().enumerate() {
            let lse = log_sum_exp(row.iter().copied());
            if lse.abs() > 1e-3 {
                return Err(Error::Validation {
                    line: t,
                    message: format!("posterior row {t} has log-sum-exp {lse:.6}, not 0"),
                });
            }
        }
        Ok(p)
    }

    /// Applies a row-wise log-softmax to unnormalized scores.
    pub fn from_logits(m: &DenseMatrix) -> Result<Self> {
        let mut a = m.to_array();
        for mut row in a.rows_mut() {
            let lse = log_sum_exp(row.iter().copied());
            row.mapv_inplace(|v| v - lse);
        }
        Self::new(a)
    }

    pub fn num_frames(&self) -> usize {
        self.log_probs.nrows()
    }

    pub fn log_prob(&self, frame: usize, phone: usize) -> f64 {
        self.log_probs[[frame, phone]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.log_probs
    }
}

pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub phone: String,
    /// First frame, inclusive.
    pub start: usize,
    /// Last frame, inclusive.
    pub end: usize,
}

impl Span {
    pub fn frames(&self) -> usize {
        self.end - self.start + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    spans: Vec<Span>,
}

impl Alignment {
    /// Checks that the spans tile `0..T` contiguously, each at least one frame.
    pub fn new(spans: Vec<Span>) -> Result<Self> {
        let mut next = 0;
        for (i, s) in spans.iter().enumerate() {
            inventory::index_of(&s.phone)?;
            if s.start != next || s.end < s.start {
                return Err(Error::Validation {
                    line: i,
                    message: format!(
                        "span {i} ({}, {}, {}) does not continue the tiling at frame {next}",
                        s.phone, s.start, s.end
                    ),
                });
            }
            next = s.end + 1;
        }
        if spans.is_empty() {
            return Err(Error::Empty("alignment has no spans".into()));
        }
        Ok(Self { spans })
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn num_frames(&self) -> usize {
        self.spans.last().map_or(0, |s| s.end + 1)
    }

    pub fn phones(&self) -> Vec<&str> {
        self.spans.iter().map(|s| s.phone.as_str()).collect()
    }
}

/// Viterbi-style DTW: `dp[t][i] = lp[t][y_i] + max(dp[t-1][i], dp[t-1][i-1])`.
/// On ties the backtrace takes the transition from phone `i-1`.
pub fn dtw_align<S: AsRef<str>>(
    posteriors: &PosteriorMatrix,
    phones: &[S],
) -> Result<(Alignment, f64)> {
    let ids = inventory::indices(phones)?;
    let frames = posteriors.num_frames();
    let n = ids.len();
    if n == 0 || frames < n {
        return Err(Error::Infeasible { frames, phones: n });
    }

    let mut dp = Array2::from_elem((frames, n), f64::NEG_INFINITY);
    dp[[0, 0]] = posteriors.log_prob(0, ids[0]);
    for t in 1..frames {
        // phone i is reachable at frame t only if i <= t and enough frames remain
        let lo = (n + t).saturating_sub(frames);
        let hi = t.min(n - 1);
        for i in lo..=hi {
            let stay = dp[[t - 1, i]];
            let advance = if i > 0 { dp[[t - 1, i - 1]] } else { f64::NEG_INFINITY };
            dp[[t, i]] = posteriors.log_prob(t, ids[i]) + stay.max(advance);
        }
    }
    let score = dp[[frames - 1, n - 1]];

    let mut starts = vec![0usize; n];
    let mut i = n - 1;
    for t in (1..frames).rev() {
        if i > 0 && dp[[t - 1, i - 1]] >= dp[[t - 1, i]] {
            starts[i] = t;
            i -= 1;
        }
    }
    debug_assert_eq!(i, 0);

    let spans = (0..n)
        .map(|k| Span {
            phone: phones[k].as_ref().to_string(),
            start: starts[k],
            end: if k + 1 < n { starts[k + 1] - 1 } else { frames - 1 },
        })
        .collect();
    Ok((Alignment { spans }, score))
}

pub fn spans_to_durations(alignment: &Alignment, hop_ms: f64) -> Vec<(String, f64)> {
    alignment
        .spans
        .iter()
        .map(|s| (s.phone.clone(), s.frames() as f64 * hop_ms))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posteriors(rows: &[&[(usize, f64)]]) -> PosteriorMatrix {
        let mut a = Array2::from_elem((rows.len(), inventory::SIZE), -20.0);
        for (t, row) in rows.iter().enumerate() {
            for &(p, v) in row.iter() {
                a[[t, p]] = v;
            }
        }
        PosteriorMatrix::new(a).unwrap()
    }

    #[test]
    fn single_frame_single_phone() {
        let aa = inventory::index_of("AA").unwrap();
        let p = posteriors(&[&[(aa, -0.7)]]);
        let (al, score) = dtw_align(&p, &["AA"]).unwrap();
        assert_eq!(al.spans(), &[Span { phone: "AA".into(), start: 0, end: 0 }]);
        assert_eq!(score, -0.7);
    }

    #[test]
    fn two_phone_hand_example() {
        let (a, b) = (0, 6);
        let p = posteriors(&[
            &[(a, -0.1), (b, -3.0)],
            &[(a, -0.2), (b, -2.0)],
            &[(a, -3.0), (b, -0.1)],
        ]);
        let (al, score) = dtw_align(&p, &["AA", "B"]).unwrap();
        assert_eq!(
            al.spans(),
            &[
                Span { phone: "AA".into(), start: 0, end: 1 },
                Span { phone: "B".into(), start: 2, end: 2 }
            ]
        );
        assert!((score - -0.4).abs() < 1e-12);
        // alternative segmentation A|BB
        assert!((-0.1 + -2.0 + -0.1_f64 - -2.2).abs() < 1e-12);
    }

    #[test]
    fn ties_prefer_advancing() {
        let p = PosteriorMatrix::new(Array2::zeros((4, inventory::SIZE))).unwrap();
        let (al, _) = dtw_align(&p, &["AA", "B"]).unwrap();
        // every segmentation ties; the backtrace leaves phone B at the first
        // frame where the predecessor branch is admissible
        assert_eq!(al.spans()[0].end, 2);
        assert_eq!(al.spans()[1].frames(), 1);
    }

    #[test]
    fn infeasible_and_unknown() {
        let p = PosteriorMatrix::new(Array2::zeros((2, inventory::SIZE))).unwrap();
        assert!(matches!(
            dtw_align(&p, &["AA", "B", "D"]),
            Err(Error::Infeasible { frames: 2, phones: 3 })
        ));
        assert!(matches!(dtw_align(&p, &["QQ"]), Err(Error::UnknownPhone(_))));
        assert!(matches!(dtw_align::<&str>(&p, &[]), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn durations() {
        let al = Alignment::new(vec![
            Span { phone: "AA".into(), start: 0, end: 0 },
            Span { phone: "IY".into(), start: 1, end: 10 },
        ])
        .unwrap();
        let d = spans_to_durations(&al, HOP_MS);
        assert_eq!(d, vec![("AA".into(), 10.0), ("IY".into(), 100.0)]);
        assert_eq!(d.iter().map(|x| x.1).sum::<f64>(), al.num_frames() as f64 * HOP_MS);
    }

    #[test]
    fn alignment_rejects_gaps() {
        let gap = Alignment::new(vec![
            Span { phone: "AA".into(), start: 0, end: 1 },
            Span { phone: "IY".into(), start: 3, end: 4 },
        ]);
        assert!(gap.is_err());
        let late_start = Alignment::new(vec![Span { phone: "AA".into(), start: 1, end: 1 }]);
        assert!(late_start.is_err());
    }

    #[test]
    fn normalization_check() {
        let uniform = DenseMatrix::from_f64(
            1,
            inventory::SIZE,
            &vec![-(inventory::SIZE as f64).ln(); inventory::SIZE],
        )
        .unwrap();
        assert!(PosteriorMatrix::from_normalized(&uniform).is_ok());
        let zeros = DenseMatrix::from_f64(1, inventory::SIZE, &[0.0; inventory::SIZE]).unwrap();
        assert!(PosteriorMatrix::from_normalized(&zeros).is_err());
        let p = PosteriorMatrix::from_logits(&zeros).unwrap();
        assert!((p.log_prob(0, 3) + (41f64).ln()).abs() < 1e-12);
    }
}
