#![allow(dead_code)]

use intraverbal::align::{log_sum_exp, PosteriorMatrix};
use intraverbal::assembly::{FusionInput, FusionRow, PooledFeatures};
use intraverbal::net::{Labels, LossWeights, ModelDims, ModelInput, Params, ScoringModel};
use intraverbal::pipeline::prepare_input;
use intraverbal::synth::SyntheticCorpus;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_input(dims: &ModelDims, rng: &mut ChaCha8Rng, phones: usize, frames: usize) -> ModelInput {
    let rows = (0..phones)
        .map(|_| FusionRow {
            gopd: rng.random_range(-8.0..-3.0),
            pooled: PooledFeatures {
                loudness: rng.random_range(0.0..3.0),
                alpha_ratio_db: rng.random_range(-20.0..20.0),
                f0_semitones: rng.random_range(0.0..45.0),
                jitter_local: rng.random_range(0.0..0.05),
            },
            phone: rng.random_range(0..39),
        })
        .collect();
    let width = dims.model_width();
    ModelInput {
        fusion: FusionInput { rows },
        context: Array2::from_shape_simple_fn((frames, width), || rng.random_range(-1.0..1.0)),
        utterance: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
    }
}

pub fn random_labels(rng: &mut ChaCha8Rng) -> Labels {
    Labels::new(rng.random_range(0..=10), rng.random_range(0..=10)).unwrap()
}

/// Tiny model with a fitted scaler and randomized heads, plus a batch.
pub fn tiny_problem(seed: u64) -> (ScoringModel, Vec<ModelInput>, Vec<Labels>) {
    let dims = ModelDims::tiny(8);
    let mut r = rng(seed);
    let inputs: Vec<ModelInput> = (0..3)
        .map(|i| random_input(&dims, &mut r, 2 + i, 3 + i))
        .collect();
    let labels = (0..3).map(|_| random_labels(&mut r)).collect();
    let mut model = ScoringModel::new(dims, seed).unwrap();
    model.scaler = intraverbal::net::FeatureScaler::fit(inputs.iter());
    // Larger head weights keep the check away from the uniform regime.
    for (name, t) in model.params.tensors_mut() {
        if name.starts_with("head") {
            t.mapv_inplace(|v| 4.0 * v);
        }
    }
    (model, inputs, labels)
}

pub struct TensorCheck {
    pub name: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Central differences with step `h` against the analytic gradient.
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    model: &ScoringModel,
    inputs: &[ModelInput],
    labels: &[Labels],
    weights: LossWeights,
    per_tensor: usize,
    h: f64,
    floor: f64,
    seed: u64,
) -> Vec<TensorCheck> {
    let refs: Vec<&ModelInput> = inputs.iter().collect();
    let (_, grads) = model.loss_and_gradient(&refs, labels, weights).unwrap();
    let used_phones: Vec<usize> = inputs
        .iter()
        .flat_map(|i| i.fusion.rows.iter().map(|r| r.phone))
        .collect();
    let mut r = rng(seed);
    let mut out = Vec::new();
    let loss_at = |m: &ScoringModel| {
        let (d, _) = m.forward(&refs).unwrap();
        intraverbal::net::batch_loss(&d, labels, weights).unwrap()
    };
    for name in Params::names() {
        let shape = model.params.tensor(name).unwrap().dim();
        let mut max_rel: f64 = 0.0;
        for _ in 0..per_tensor {
            let row = if name == "embedding" {
                used_phones[r.random_range(0..used_phones.len())]
            } else {
                r.random_range(0..shape.0)
            };
            let col = r.random_range(0..shape.1);
            let mut m = model.clone();
            let orig = m.params.tensor(name).unwrap()[[row, col]];
            m.params.tensor_mut(name).unwrap()[[row, col]] = orig + h;
            let up = loss_at(&m);
            m.params.tensor_mut(name).unwrap()[[row, col]] = orig - h;
            let down = loss_at(&m);
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.tensor(name).unwrap()[[row, col]];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            max_rel = max_rel.max(rel);
        }
        out.push(TensorCheck {
            name,
            checked: per_tensor,
            max_rel_error: max_rel,
        });
    }
    out
}

/// Maximum over all monotone segmentations, each phone at least one frame,
/// summed in time order.
pub fn brute_force_align(lp: &Array2<f64>, phones: &[usize]) -> Option<f64> {
    fn go(lp: &Array2<f64>, phones: &[usize], t: usize, i: usize, acc: f64, best: &mut Option<f64>) {
        let (frames, l) = (lp.nrows(), phones.len());
        if t == frames {
            if i == l - 1 {
                *best = Some(best.map_or(acc, |b: f64| b.max(acc)));
            }
            return;
        }
        // Frame t either stays on phone i or advances to i + 1.
        let stay = acc + lp[[t, phones[i]]];
        go(lp, phones, t + 1, i, stay, best);
        if i + 1 < l {
            let adv = acc + lp[[t, phones[i + 1]]];
            go(lp, phones, t + 1, i + 1, adv, best);
        }
    }
    let mut best = None;
    if !phones.is_empty() && lp.nrows() > 0 {
        go(lp, phones, 1, 0, lp[[0, phones[0]]], &mut best);
    }
    best
}

pub fn random_log_posteriors(rng: &mut ChaCha8Rng, frames: usize) -> Array2<f64> {
    let mut lp = Array2::from_shape_simple_fn((frames, 41), || rng.random_range(-4.0..4.0));
    for mut row in lp.rows_mut() {
        let lse = log_sum_exp(row.iter().copied());
        row.mapv_inplace(|v| v - lse);
    }
    lp
}

/// Runs the full preparation pipeline on an in-memory synthetic corpus.
pub fn prepare_corpus(corpus: &SyntheticCorpus) -> (Vec<ModelInput>, Vec<Labels>) {
    corpus
        .utterances
        .iter()
        .map(|u| {
            let post = PosteriorMatrix::from_normalized(&u.posteriors).unwrap();
            let (input, _) =
                prepare_input(&u.audio, &post, &u.context, &u.phones, &corpus.durations).unwrap();
            (input, Labels::new(u.fluency as i64, u.prosody as i64).unwrap())
        })
        .unzip()
}
