//! The scoring head: phone-cue encoder, cross-attention onto the contextual
//! frames, fusion encoder with utterance-feature injection and residual, and
//! two 11-way score heads.

use ndarray::{s, Array2, Axis};

use super::attention::{cross_attention, cross_attention_backward, softmax_rows};
use super::lstm::{self, BiLstmCache};
use super::params::{ModelDims, Params, NUM_CLASSES};
use crate::assembly::{FusionInput, NUMERIC_WIDTH};
use crate::error::{Error, Result};
use crate::functionals::FIELD_NAMES;

const UTT: usize = FIELD_NAMES.len();

/// Everything the network sees for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub fusion: FusionInput,
    /// Contextual representation, `T x model_width`.
    pub context: Array2<f64>,
    pub utterance: [f64; UTT],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Labels {
    pub fluency: u8,
    pub prosody: u8,
}

impl Labels {
    pub fn new(fluency: i64, prosody: i64) -> Result<Self> {
        for v in [fluency, prosody] {
            if !(0..=10).contains(&v) {
                return Err(Error::Label(v));
            }
        }
        Ok(Self {
            fluency: fluency as u8,
            prosody: prosody as u8,
        })
    }
}

/// Probabilities over scores 0..=10 for each head.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    pub fluency: [f64; NUM_CLASSES],
    pub prosody: [f64; NUM_CLASSES],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub fluency: f64,
    pub prosody: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            fluency: 0.5,
            prosody: 0.5,
        }
    }
}

/// Per-column standardization of the numeric fusion block and the
/// utterance functionals, fitted on training data. Identity by default.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub numeric_mean: [f64; NUMERIC_WIDTH],
    pub numeric_std: [f64; NUMERIC_WIDTH],
    pub utterance_mean: [f64; UTT],
    pub utterance_std: [f64; UTT],
}

impl Default for FeatureScaler {
    fn default() -> Self {
        Self {
            numeric_mean: [0.0; NUMERIC_WIDTH],
            numeric_std: [1.0; NUMERIC_WIDTH],
            utterance_mean: [0.0; UTT],
            utterance_std: [1.0; UTT],
        }
    }
}

fn column_stats<const W: usize>(rows: impl Iterator<Item = [f64; W]>) -> ([f64; W], [f64; W]) {
    let mut n = 0usize;
    let mut sum = [0.0; W];
    let mut sq = [0.0; W];
    let rows: Vec<[f64; W]> = rows.collect();
    for r in &rows {
        n += 1;
        for j in 0..W {
            sum[j] += r[j];
        }
    }
    let mean = sum.map(|s| if n > 0 { s / n as f64 } else { 0.0 });
    for r in &rows {
        for j in 0..W {
            sq[j] += (r[j] - mean[j]).powi(2);
        }
    }
    let std = std::array::from_fn(|j| {
        let s = if n > 0 { (sq[j] / n as f64).sqrt() } else { 0.0 };
        if s > 1e-8 {
            s
        } else {
            1.0
        }
    });
    (mean, std)
}

impl FeatureScaler {
    pub fn fit<'a>(inputs: impl IntoIterator<Item = &'a ModelInput> + Clone) -> Self {
        let (numeric_mean, numeric_std) = column_stats(
            inputs
                .clone()
                .into_iter()
                .flat_map(|i| i.fusion.rows.iter().map(|r| r.numeric())),
        );
        let (utterance_mean, utterance_std) =
            column_stats(inputs.into_iter().map(|i| i.utterance));
        Self {
            numeric_mean,
            numeric_std,
            utterance_mean,
            utterance_std,
        }
    }

    fn numeric(&self, v: [f64; NUMERIC_WIDTH]) -> [f64; NUMERIC_WIDTH] {
        std::array::from_fn(|j| (v[j] - self.numeric_mean[j]) / self.numeric_std[j])
    }

    fn utterance(&self, v: &[f64; UTT]) -> [f64; UTT] {
        std::array::from_fn(|j| (v[j] - self.utterance_mean[j]) / self.utterance_std[j])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringModel {
    pub dims: ModelDims,
    pub params: Params,
    pub scaler: FeatureScaler,
}

/// Activations kept from the forward pass for [`ScoringModel::backward`].
pub struct ForwardCache {
    phone_ids: Vec<usize>,
    embedded: Array2<f64>,
    phone_ff: Array2<f64>,
    cue: BiLstmCache,
    attention: Vec<Array2<f64>>,
    utt_scaled: Array2<f64>,
    fusion: BiLstmCache,
    fused: Array2<f64>,
    prob_fluency: Array2<f64>,
    prob_prosody: Array2<f64>,
}

impl ScoringModel {
    pub fn new(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            dims,
            params: Params::init(&dims, seed),
            scaler: FeatureScaler::default(),
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_parameters()
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        let d = self.dims.model_width();
        if input.fusion.is_empty() {
            return Err(Error::Shape("utterance has no phones".into()));
        }
        if input.context.nrows() == 0 || input.context.ncols() != d {
            return Err(Error::Shape(format!(
                "context is {}x{}, expected T x {d} with T >= 1",
                input.context.nrows(),
                input.context.ncols()
            )));
        }
        if let Some(r) = input.fusion.rows.iter().find(|r| r.phone >= self.dims.vocab) {
            return Err(Error::PhoneIndex(r.phone));
        }
        Ok(())
    }

    /// Phone-cue encoder over a batch: returns the packed `sum(L) x D`
    /// encoding together with its intermediate activations.
    fn phonecue(
        &self,
        inputs: &[&ModelInput],
    ) -> (Array2<f64>, Vec<usize>, Array2<f64>, Array2<f64>, BiLstmCache) {
        let p = &self.params;
        let phone_ids: Vec<usize> = inputs
            .iter()
            .flat_map(|i| i.fusion.rows.iter().map(|r| r.phone))
            .collect();
        let n = phone_ids.len();
        let embedded = Array2::from_shape_fn((n, self.dims.embed), |(r, c)| {
            p.embedding[[phone_ids[r], c]]
        });
        let mut phone_ff = embedded.dot(&p.phone_ff_w.t());
        phone_ff += &p.phone_ff_b;
        phone_ff.mapv_inplace(f64::tanh);

        let mut cue_in = Array2::zeros((n, self.dims.cue_input()));
        let mut r = 0;
        for input in inputs {
            for row in &input.fusion.rows {
                let numeric = self.scaler.numeric(row.numeric());
                for (j, v) in numeric.iter().enumerate() {
                    cue_in[[r, j]] = *v;
                }
                r += 1;
            }
        }
        cue_in.slice_mut(s![.., NUMERIC_WIDTH..]).assign(&phone_ff);
        let lengths: Vec<usize> = inputs.iter().map(|i| i.fusion.len()).collect();
        let (encoded, cache) = lstm::forward(&p.cue_fwd, &p.cue_bwd, cue_in, &lengths);
        (encoded, phone_ids, embedded, phone_ff, cache)
    }

    /// Phone-cue encoding of one utterance, `L x D`.
    pub fn phonecue_forward(&self, input: &ModelInput) -> Result<Array2<f64>> {
        if let Some(r) = input.fusion.rows.iter().find(|r| r.phone >= self.dims.vocab) {
            return Err(Error::PhoneIndex(r.phone));
        }
        if input.fusion.is_empty() {
            return Err(Error::Shape("utterance has no phones".into()));
        }
        Ok(self.phonecue(&[input]).0)
    }

    pub fn forward(&self, inputs: &[&ModelInput]) -> Result<(Vec<ScoreDistribution>, ForwardCache)> {
        for i in inputs {
            self.check_input(i)?;
        }
        let p = &self.params;
        let d = self.dims.model_width();
        let (encoded, phone_ids, embedded, phone_ff, cue) = self.phonecue(inputs);

        let mut attention = Vec::with_capacity(inputs.len());
        let mut attended = Vec::with_capacity(inputs.len());
        for (b, input) in inputs.iter().enumerate() {
            let rows = cue.layout().rows(b);
            let q = encoded.slice(s![rows, ..]).to_owned();
            let (out, w) = cross_attention(&q, &input.context)?;
            attended.push(out);
            attention.push(w);
        }

        let utt_scaled = Array2::from_shape_fn((inputs.len(), UTT), |(b, j)| {
            self.scaler.utterance(&inputs[b].utterance)[j]
        });
        let mut utt_proj = utt_scaled.dot(&p.utt_w.t());
        utt_proj += &p.utt_b;

        let lengths: Vec<usize> = inputs
            .iter()
            .map(|i| i.context.nrows() + i.fusion.len() + 1)
            .collect();
        let mut fusion_in = Array2::zeros((lengths.iter().sum(), d));
        let mut r = 0;
        for (b, input) in inputs.iter().enumerate() {
            let t = input.context.nrows();
            let l = input.fusion.len();
            fusion_in.slice_mut(s![r..r + t, ..]).assign(&input.context);
            fusion_in.slice_mut(s![r + t..r + t + l, ..]).assign(&attended[b]);
            fusion_in.row_mut(r + t + l).assign(&utt_proj.row(b));
            r += t + l + 1;
        }
        let (fusion_out, fusion) =
            lstm::forward(&p.fusion_fwd, &p.fusion_bwd, fusion_in, &lengths);

        let mut fused = utt_proj;
        for b in 0..inputs.len() {
            let rows = fusion.layout().rows(b);
            let pooled = fusion_out.slice(s![rows, ..]).mean_axis(Axis(0)).unwrap();
            let mut row = fused.row_mut(b);
            row += &pooled;
        }

        let logits = |w: &Array2<f64>, bias: &Array2<f64>| {
            let mut z = fused.dot(&w.t());
            z += bias;
            softmax_rows(&z)
        };
        let prob_fluency = logits(&p.fluency_w, &p.fluency_b);
        let prob_prosody = logits(&p.prosody_w, &p.prosody_b);
        let dists = (0..inputs.len())
            .map(|b| ScoreDistribution {
                fluency: std::array::from_fn(|k| prob_fluency[[b, k]]),
                prosody: std::array::from_fn(|k| prob_prosody[[b, k]]),
            })
            .collect();
        Ok((
            dists,
            ForwardCache {
                phone_ids,
                embedded,
                phone_ff,
                cue,
                attention,
                utt_scaled,
                fusion,
                fused,
                prob_fluency,
                prob_prosody,
            },
        ))
    }

    pub fn predict(&self, inputs: &[&ModelInput]) -> Result<Vec<ScoreDistribution>> {
        Ok(self.forward(inputs)?.0)
    }

    /// Gradient of `mean_b(w_f·CE_f + w_p·CE_p)` wrt every parameter.
    pub fn backward(
        &self,
        inputs: &[&ModelInput],
        cache: &ForwardCache,
        labels: &[Labels],
        weights: LossWeights,
    ) -> Params {
        let p = &self.params;
        let d = self.dims.model_width();
        let batch = inputs.len();
        let mut g = Params::zeros(&self.dims);

        let head_grad = |probs: &Array2<f64>, label: fn(&Labels) -> u8, w: f64| {
            let mut dz = probs.clone();
            for (b, l) in labels.iter().enumerate() {
                dz[[b, label(l) as usize]] -= 1.0;
            }
            dz * (w / batch as f64)
        };
        let dz_f = head_grad(&cache.prob_fluency, |l| l.fluency, weights.fluency);
        let dz_p = head_grad(&cache.prob_prosody, |l| l.prosody, weights.prosody);
        g.fluency_w = dz_f.t().dot(&cache.fused);
        g.fluency_b = dz_f.sum_axis(Axis(0)).insert_axis(Axis(0));
        g.prosody_w = dz_p.t().dot(&cache.fused);
        g.prosody_b = dz_p.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_fused = dz_f.dot(&p.fluency_w) + dz_p.dot(&p.prosody_w);

        // residual path into the utterance projection
        let mut d_utt = d_fused.clone();
        let fusion_layout = cache.fusion.layout();
        let mut d_fusion_out = Array2::zeros((fusion_layout.total(), d));
        for b in 0..batch {
            let rows = fusion_layout.rows(b);
            let scale = 1.0 / rows.len() as f64;
            let row = d_fused.row(b).mapv(|v| v * scale);
            for r in rows {
                d_fusion_out.row_mut(r).assign(&row);
            }
        }
        let d_fusion_in = lstm::backward(
            &p.fusion_fwd,
            &p.fusion_bwd,
            &cache.fusion,
            &d_fusion_out,
            &mut g.fusion_fwd,
            &mut g.fusion_bwd,
        );

        let cue_layout = cache.cue.layout();
        let mut d_encoded = Array2::zeros((cue_layout.total(), d));
        for (b, input) in inputs.iter().enumerate() {
            let start = fusion_layout.offsets[b];
            let t = input.context.nrows();
            let l = input.fusion.len();
            let d_attended = d_fusion_in.slice(s![start + t..start + t + l, ..]).to_owned();
            let mut u = d_utt.row_mut(b);
            u += &d_fusion_in.row(start + t + l);
            let dq = cross_attention_backward(&d_attended, &cache.attention[b], &input.context);
            d_encoded.slice_mut(s![cue_layout.rows(b), ..]).assign(&dq);
        }
        g.utt_w = d_utt.t().dot(&cache.utt_scaled);
        g.utt_b = d_utt.sum_axis(Axis(0)).insert_axis(Axis(0));

        let d_cue_in = lstm::backward(
            &p.cue_fwd,
            &p.cue_bwd,
            &cache.cue,
            &d_encoded,
            &mut g.cue_fwd,
            &mut g.cue_bwd,
        );
        let d_ff = &d_cue_in.slice(s![.., NUMERIC_WIDTH..]) * &cache.phone_ff.mapv(|v| 1.0 - v * v);
        g.phone_ff_w = d_ff.t().dot(&cache.embedded);
        g.phone_ff_b = d_ff.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_embedded = d_ff.dot(&p.phone_ff_w);
        for (r, &id) in cache.phone_ids.iter().enumerate() {
            let mut row = g.embedding.row_mut(id);
            row += &d_embedded.row(r);
        }
        g
    }

    /// Mean weighted cross-entropy over the batch and its gradient.
    pub fn loss_and_gradient(
        &self,
        inputs: &[&ModelInput],
        labels: &[Labels],
        weights: LossWeights,
    ) -> Result<(f64, Params)> {
        if inputs.len() != labels.len() || inputs.is_empty() {
            return Err(Error::Shape(format!(
                "{} inputs with {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let (dists, cache) = self.forward(inputs)?;
        let loss = batch_loss(&dists, labels, weights)?;
        Ok((loss, self.backward(inputs, &cache, labels, weights)))
    }
}

pub fn cross_entropy(probs: &[f64; NUM_CLASSES], label: u8) -> Result<f64> {
    if label as usize >= NUM_CLASSES {
        return Err(Error::Label(label as i64));
    }
    Ok(-probs[label as usize].ln())
}

/// `w_f·CE_f + w_p·CE_p` with natural-log cross-entropy.
pub fn loss(dist: &ScoreDistribution, labels: Labels, weights: LossWeights) -> Result<f64> {
    Ok(weights.fluency * cross_entropy(&dist.fluency, labels.fluency)?
        + weights.prosody * cross_entropy(&dist.prosody, labels.prosody)?)
}

/// Sum of per-utterance losses divided by the batch size.
pub fn batch_loss(dists: &[ScoreDistribution], labels: &[Labels], weights: LossWeights) -> Result<f64> {
    let mut total = 0.0;
    for (d, l) in dists.iter().zip(labels) {
        total += loss(d, *l, weights)?;
    }
    Ok(total / dists.len() as f64)
}
