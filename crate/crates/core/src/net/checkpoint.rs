//! Checkpoint file: a text index followed by MTX1 blocks.
//!
//! ```text
//! IVPA-CHECKPOINT 1
//! dims <vocab> <embed> <phone_ff> <cue_hidden> <fusion_hidden> <utt> <classes>
//! tensor <name> <rows> <cols> <byte offset into the block section>
//! ...
//! end
//! <MTX1 blocks, back to back>
//! ```
//!
//! Tensors are stored as f32, so a reloaded model equals the saved one
//! rounded to single precision.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::model::{FeatureScaler, ScoringModel};
use super::params::{ModelDims, Params};
use crate::error::{Error, Result};
use crate::io::DenseMatrix;

const MAGIC_LINE: &str = "IVPA-CHECKPOINT 1";

fn scaler_tensors(s: &FeatureScaler) -> [(&'static str, Array2<f64>); 2] {
    let pair = |a: &[f64], b: &[f64]| {
        Array2::from_shape_fn((2, a.len()), |(r, c)| if r == 0 { a[c] } else { b[c] })
    };
    [
        ("scaler.numeric", pair(&s.numeric_mean, &s.numeric_std)),
        ("scaler.utterance", pair(&s.utterance_mean, &s.utterance_std)),
    ]
}

pub fn encode(model: &ScoringModel) -> Result<Vec<u8>> {
    let d = &model.dims;
    let mut index = format!(
        "{MAGIC_LINE}\ndims {} {} {} {} {} {} {}\n",
        d.vocab, d.embed, d.phone_ff, d.cue_hidden, d.fusion_hidden, d.utt, d.classes
    );
    let mut blocks = Vec::new();
    let scaler = scaler_tensors(&model.scaler);
    let named = model
        .params
        .tensors()
        .into_iter()
        .chain(scaler.iter().map(|(n, t)| (*n, t)));
    for (name, t) in named {
        index.push_str(&format!("tensor {name} {} {} {}\n", t.nrows(), t.ncols(), blocks.len()));
        blocks.extend(DenseMatrix::from_array(t)?.to_bytes());
    }
    index.push_str("end\n");
    let mut out = index.into_bytes();
    out.extend(blocks);
    Ok(out)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(format!("checkpoint: {}", msg.into()))
}

pub fn decode(bytes: &[u8]) -> Result<ScoringModel> {
    let marker = b"\nend\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad("missing end of index"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("index is not UTF-8"))?;
    let blocks = &bytes[end + marker.len()..];
    let mut lines = header.lines();
    if lines.next() != Some(MAGIC_LINE) {
        return Err(bad("unrecognized header"));
    }
    let dims_line = lines.next().ok_or_else(|| bad("missing dims"))?;
    let nums: Vec<usize> = dims_line
        .strip_prefix("dims ")
        .ok_or_else(|| bad("missing dims"))?
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| bad(format!("bad dimension {v:?}"))))
        .collect::<Result<_>>()?;
    if nums.len() != 7 {
        return Err(bad("dims needs 7 values"));
    }
    let dims = ModelDims {
        vocab: nums[0],
        embed: nums[1],
        phone_ff: nums[2],
        cue_hidden: nums[3],
        fusion_hidden: nums[4],
        utt: nums[5],
        classes: nums[6],
    };
    dims.validate()?;
    let mut params = Params::zeros(&dims);
    let mut scaler = FeatureScaler::default();
    let mut seen = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 || f[0] != "tensor" {
            return Err(bad(format!("bad index line {line:?}")));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad number {s:?}")));
        let (rows, cols, offset) = (parse(f[2])?, parse(f[3])?, parse(f[4])?);
        let block = blocks.get(offset..).ok_or_else(|| bad("offset past end"))?;
        let (m, _) = DenseMatrix::parse_prefix(block)?;
        if (m.rows(), m.cols()) != (rows, cols) {
            return Err(bad(format!("{} block shape disagrees with index", f[1])));
        }
        let a = m.to_array();
        match f[1] {
            "scaler.numeric" if a.dim() == (2, scaler.numeric_mean.len()) => {
                scaler.numeric_mean = std::array::from_fn(|j| a[[0, j]]);
                scaler.numeric_std = std::array::from_fn(|j| a[[1, j]]);
            }
            "scaler.utterance" if a.dim() == (2, scaler.utterance_mean.len()) => {
                scaler.utterance_mean = std::array::from_fn(|j| a[[0, j]]);
                scaler.utterance_std = std::array::from_fn(|j| a[[1, j]]);
            }
            name => {
                let t = params
                    .tensor_mut(name)
                    .ok_or_else(|| bad(format!("unknown tensor {name}")))?;
                if t.dim() != a.dim() {
                    return Err(bad(format!("{name} is {:?}, expected {:?}", a.dim(), t.dim())));
                }
                *t = a;
            }
        }
        seen.push(f[1].to_string());
    }
    for name in Params::names() {
        if !seen.iter().any(|s| s == name) {
            return Err(bad(format!("missing tensor {name}")));
        }
    }
    Ok(ScoringModel {
        dims,
        params,
        scaler,
    })
}

pub fn save(path: impl AsRef<Path>, model: &ScoringModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<ScoringModel> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_to_single_precision() {
        let mut model = ScoringModel::new(ModelDims::tiny(3), 9).unwrap();
        model.scaler.utterance_std[4] = 2.5;
        let bytes = encode(&model).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back.dims, model.dims);
        assert_eq!(back.scaler, model.scaler);
        for ((n, a), (_, b)) in model.params.tensors().into_iter().zip(back.params.tensors()) {
            assert_eq!(a.dim(), b.dim(), "{n}");
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
        // re-encoding the reloaded model is byte-stable
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_index_rejected() {
        let model = ScoringModel::new(ModelDims::tiny(2), 1).unwrap();
        let bytes = encode(&model).unwrap();
        let text = String::from_utf8_lossy(&bytes).replace("tensor embedding", "tensor embeddinx");
        assert!(decode(text.as_bytes()).is_err());
        assert!(decode(b"garbage").is_err());
        assert!(decode(&bytes[..bytes.len() - 10]).is_err());
    }
}
