use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::NUMERIC_WIDTH;
use crate::error::{Error, Result};
use crate::functionals::FIELD_NAMES;
use crate::inventory;

pub const NUM_CLASSES: usize = 11;

/// Every width in the scoring network. The recurrent encoders are
/// bidirectional, so the shared model width is twice each hidden size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub phone_ff: usize,
    pub cue_hidden: usize,
    pub fusion_hidden: usize,
    pub utt: usize,
    pub classes: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            vocab: inventory::SIZE,
            embed: 41,
            phone_ff: 24,
            cue_hidden: 512,
            fusion_hidden: 512,
            utt: FIELD_NAMES.len(),
            classes: NUM_CLASSES,
        }
    }
}

impl ModelDims {
    /// Small widths for finite-difference checks; vocabulary, utterance
    /// features and classes keep their real sizes.
    pub fn tiny(hidden: usize) -> Self {
        Self {
            embed: 6,
            phone_ff: 5,
            cue_hidden: hidden,
            fusion_hidden: hidden,
            ..Self::default()
        }
    }

    pub fn model_width(&self) -> usize {
        2 * self.cue_hidden
    }

    pub fn cue_input(&self) -> usize {
        NUMERIC_WIDTH + self.phone_ff
    }

    pub fn validate(&self) -> Result<()> {
        if self.cue_hidden != self.fusion_hidden {
            return Err(Error::Shape(format!(
                "phone-cue width {} and fusion width {} must agree",
                2 * self.cue_hidden,
                2 * self.fusion_hidden
            )));
        }
        if self.classes != NUM_CLASSES || self.utt != FIELD_NAMES.len() {
            return Err(Error::Shape("class count and utterance width are fixed".into()));
        }
        if [self.vocab, self.embed, self.phone_ff, self.cue_hidden].contains(&0) {
            return Err(Error::Shape("zero-width layer".into()));
        }
        Ok(())
    }
}

/// Input, recurrent and bias tensors of one LSTM direction, gates stacked
/// in the order input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_ih: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub bias: Array2<f64>,
}

impl LstmParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array2::zeros((1, 4 * hidden)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embedding: Array2<f64>,
    pub phone_ff_w: Array2<f64>,
    pub phone_ff_b: Array2<f64>,
    pub cue_fwd: LstmParams,
    pub cue_bwd: LstmParams,
    pub utt_w: Array2<f64>,
    pub utt_b: Array2<f64>,
    pub fusion_fwd: LstmParams,
    pub fusion_bwd: LstmParams,
    pub fluency_w: Array2<f64>,
    pub fluency_b: Array2<f64>,
    pub prosody_w: Array2<f64>,
    pub prosody_b: Array2<f64>,
}

pub const NUM_TENSORS: usize = 21;

macro_rules! tensor_list {
    ($self:expr, $($r:tt)*) => {
        [
            ("embedding", $($r)* $self.embedding),
            ("phone_ff.weight", $($r)* $self.phone_ff_w),
            ("phone_ff.bias", $($r)* $self.phone_ff_b),
            ("cue.fwd.w_ih", $($r)* $self.cue_fwd.w_ih),
            ("cue.fwd.w_hh", $($r)* $self.cue_fwd.w_hh),
            ("cue.fwd.bias", $($r)* $self.cue_fwd.bias),
            ("cue.bwd.w_ih", $($r)* $self.cue_bwd.w_ih),
            ("cue.bwd.w_hh", $($r)* $self.cue_bwd.w_hh),
            ("cue.bwd.bias", $($r)* $self.cue_bwd.bias),
            ("utt_proj.weight", $($r)* $self.utt_w),
            ("utt_proj.bias", $($r)* $self.utt_b),
            ("fusion.fwd.w_ih", $($r)* $self.fusion_fwd.w_ih),
            ("fusion.fwd.w_hh", $($r)* $self.fusion_fwd.w_hh),
            ("fusion.fwd.bias", $($r)* $self.fusion_fwd.bias),
            ("fusion.bwd.w_ih", $($r)* $self.fusion_bwd.w_ih),
            ("fusion.bwd.w_hh", $($r)* $self.fusion_bwd.w_hh),
            ("fusion.bwd.bias", $($r)* $self.fusion_bwd.bias),
            ("head.fluency.weight", $($r)* $self.fluency_w),
            ("head.fluency.bias", $($r)* $self.fluency_b),
            ("head.prosody.weight", $($r)* $self.prosody_w),
            ("head.prosody.bias", $($r)* $self.prosody_b),
        ]
    };
}

impl Params {
    pub fn zeros(dims: &ModelDims) -> Self {
        let d = dims.model_width();
        Self {
            embedding: Array2::zeros((dims.vocab, dims.embed)),
            phone_ff_w: Array2::zeros((dims.phone_ff, dims.embed)),
            phone_ff_b: Array2::zeros((1, dims.phone_ff)),
            cue_fwd: LstmParams::zeros(dims.cue_input(), dims.cue_hidden),
            cue_bwd: LstmParams::zeros(dims.cue_input(), dims.cue_hidden),
            utt_w: Array2::zeros((d, dims.utt)),
            utt_b: Array2::zeros((1, d)),
            fusion_fwd: LstmParams::zeros(d, dims.fusion_hidden),
            fusion_bwd: LstmParams::zeros(d, dims.fusion_hidden),
            fluency_w: Array2::zeros((dims.classes, d)),
            fluency_b: Array2::zeros((1, dims.classes)),
            prosody_w: Array2::zeros((dims.classes, d)),
            prosody_b: Array2::zeros((1, dims.classes)),
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per tensor, drawn in
    /// [`Params::names`] order from one seeded stream. Biases use the fan-in
    /// of their layer's input weights; the embedding uses its own width.
    pub fn init(dims: &ModelDims, seed: u64) -> Self {
        let mut p = Self::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dims.model_width();
        let fan_in = |name: &str| -> usize {
            match name {
                "embedding" => dims.embed,
                n if n.starts_with("phone_ff") => dims.embed,
                n if n.starts_with("cue.") && n.ends_with("w_hh") => dims.cue_hidden,
                n if n.starts_with("cue.") => dims.cue_input(),
                n if n.starts_with("utt_proj") => dims.utt,
                n if n.starts_with("fusion.") && n.ends_with("w_hh") => dims.fusion_hidden,
                _ => d,
            }
        };
        for (name, t) in p.tensors_mut() {
            let bound = 1.0 / (fan_in(name) as f64).sqrt();
            t.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        p
    }

    /// Named tensors in a fixed order shared by checkpoints and the optimizer.
    pub fn tensors(&self) -> [(&'static str, &Array2<f64>); NUM_TENSORS] {
        tensor_list!(self, &)
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Array2<f64>); NUM_TENSORS] {
        tensor_list!(self, &mut)
    }

    pub fn names() -> [&'static str; NUM_TENSORS] {
        Params::zeros(&ModelDims::tiny(1)).tensors().map(|(n, _)| n)
    }

    pub fn tensor(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensors().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.tensors_mut().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }
}
