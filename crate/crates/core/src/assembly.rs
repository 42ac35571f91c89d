//! Frame-to-phoneme pooling and the per-phoneme fusion rows fed to the
//! scoring network.

use crate::align::Alignment;
use crate::error::{Error, Result};
use crate::inventory;
use crate::io::DenseMatrix;
use crate::lld::FrameFeatures;

/// Width of the numeric fusion block: GoPD plus four pooled descriptors.
pub const NUMERIC_WIDTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PooledFeatures {
    pub loudness: f64,
    pub alpha_ratio_db: f64,
    /// Mean over voiced frames of the span, 0 if none.
    pub f0_semitones: f64,
    /// Mean over voiced frames of the span, 0 if none.
    pub jitter_local: f64,
}

pub type PhonemeLevelFeatures = Vec<PooledFeatures>;

pub fn pool_to_phonemes(
    features: &FrameFeatures,
    alignment: &Alignment,
) -> Result<PhonemeLevelFeatures> {
    if features.len() != alignment.num_frames() {
        return Err(Error::Shape(format!(
            "{} feature frames but the alignment covers {}",
            features.len(),
            alignment.num_frames()
        )));
    }
    Ok(alignment
        .spans()
        .iter()
        .map(|span| {
            let frames = span.start..=span.end;
            let n = span.frames() as f64;
            let loudness = features.loudness[frames.clone()].iter().sum::<f64>() / n;
            let alpha = features.alpha_ratio_db[frames.clone()].iter().sum::<f64>() / n;
            let voiced: Vec<usize> = frames.filter(|&t| features.voiced[t]).collect();
            let voiced_mean = |col: &[f64]| {
                if voiced.is_empty() {
                    0.0
                } else {
                    voiced.iter().map(|&t| col[t]).sum::<f64>() / voiced.len() as f64
                }
            };
            PooledFeatures {
                loudness,
                alpha_ratio_db: alpha,
                f0_semitones: voiced_mean(&features.f0_semitones),
                jitter_local: voiced_mean(&features.jitter_local),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionRow {
    pub gopd: f64,
    pub pooled: PooledFeatures,
    pub phone: usize,
}

impl FusionRow {
    pub fn numeric(&self) -> [f64; NUMERIC_WIDTH] {
        [
            self.gopd,
            self.pooled.loudness,
            self.pooled.alpha_ratio_db,
            self.pooled.f0_semitones,
            self.pooled.jitter_local,
        ]
    }
}

/// One row per canonical phone, in alignment order.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInput {
    pub rows: Vec<FusionRow>,
}

impl FusionInput {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The `L x 5` numeric block and the `L x 1` phone-index sidecar.
    pub fn to_matrices(&self) -> Result<(DenseMatrix, DenseMatrix)> {
        let numeric: Vec<f64> = self.rows.iter().flat_map(|r| r.numeric()).collect();
        let phones: Vec<f64> = self.rows.iter().map(|r| r.phone as f64).collect();
        Ok((
            DenseMatrix::from_f64(self.len(), NUMERIC_WIDTH, &numeric)?,
            DenseMatrix::from_f64(self.len(), 1, &phones)?,
        ))
    }

    pub fn from_matrices(numeric: &DenseMatrix, phones: &DenseMatrix) -> Result<Self> {
        if numeric.cols() != NUMERIC_WIDTH || phones.cols() != 1 || numeric.rows() != phones.rows()
        {
            return Err(Error::Shape(format!(
                "fusion block {}x{} with sidecar {}x{}",
                numeric.rows(),
                numeric.cols(),
                phones.rows(),
                phones.cols()
            )));
        }
        let rows = (0..numeric.rows())
            .map(|r| {
                let v = numeric.row(r);
                let idx = phones.get(r, 0);
                if idx < 0.0 || idx.fract() != 0.0 || idx as usize >= inventory::SIZE {
                    return Err(Error::PhoneIndex(idx.max(0.0) as usize));
                }
                Ok(FusionRow {
                    gopd: v[0] as f64,
                    pooled: PooledFeatures {
                        loudness: v[1] as f64,
                        alpha_ratio_db: v[2] as f64,
                        f0_semitones: v[3] as f64,
                        jitter_local: v[4] as f64,
                    },
                    phone: idx as usize,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }
}

pub fn build_fusion_input<S: AsRef<str>>(
    pooled: &[PooledFeatures],
    gopd: &[f64],
    phones: &[S],
) -> Result<FusionInput> {
    if pooled.len() != gopd.len() || gopd.len() != phones.len() {
        return Err(Error::Shape(format!(
            "pooled {}, GoPD {}, phones {} differ in length",
            pooled.len(),
            gopd.len(),
            phones.len()
        )));
    }
    let rows = pooled
        .iter()
        .zip(gopd)
        .zip(phones)
        .map(|((p, &g), ph)| {
            Ok(FusionRow {
                gopd: g,
                pooled: *p,
                phone: inventory::index_of(ph.as_ref())?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FusionInput { rows })
}
