//! Mini-batch Adam training with a held-out validation split and early
//! stopping on validation loss.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::{
    batch_loss, Adam, AdamConfig, FeatureScaler, Labels, LossWeights, ModelDims, ModelInput,
    ScoringModel,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub val_fraction: f64,
    /// Hidden width of each recurrent direction.
    pub hidden: usize,
    /// Native duration model used to compute GoPD (CLI only).
    pub duration_model: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch: 32,
            epochs: 50,
            patience: 2,
            seed: 0,
            loss_weights: LossWeights::default(),
            val_fraction: 0.1,
            hidden: 512,
            duration_model: None,
        }
    }
}

impl TrainConfig {
    /// Parses `key=value` lines; `#` starts a comment. Relative paths are
    /// resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Config(format!("line {}: bad {what} {value:?}", i + 1));
            match key {
                "lr" => c.lr = value.parse().map_err(|_| bad(key))?,
                "batch" => c.batch = value.parse().map_err(|_| bad(key))?,
                "epochs" => c.epochs = value.parse().map_err(|_| bad(key))?,
                "patience" => c.patience = value.parse().map_err(|_| bad(key))?,
                "seed" => c.seed = value.parse().map_err(|_| bad(key))?,
                "loss_weight_fluency" => {
                    c.loss_weights.fluency = value.parse().map_err(|_| bad(key))?
                }
                "loss_weight_prosody" => {
                    c.loss_weights.prosody = value.parse().map_err(|_| bad(key))?
                }
                "val_fraction" => c.val_fraction = value.parse().map_err(|_| bad(key))?,
                "hidden" => c.hidden = value.parse().map_err(|_| bad(key))?,
                "duration_model" => {
                    let p = PathBuf::from(value);
                    c.duration_model = Some(if p.is_relative() { base_dir.join(p) } else { p });
                }
                _ => return Err(Error::Config(format!("line {}: unknown key {key:?}", i + 1))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be finite and >= 0", self.lr)));
        }
        if self.batch == 0 || self.epochs == 0 || self.hidden == 0 {
            return Err(Error::Config("batch, epochs and hidden must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            cue_hidden: self.hidden,
            fusion_hidden: self.hidden,
            ..ModelDims::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: ScoringModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in history {
        let _ = writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_loss);
    }
    out
}

/// Mean loss over `indices`, evaluated in chunks of `batch`.
pub fn evaluate_loss(
    model: &ScoringModel,
    inputs: &[ModelInput],
    labels: &[Labels],
    indices: &[usize],
    batch: usize,
    weights: LossWeights,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in indices.chunks(batch.max(1)) {
        let batch_inputs: Vec<&ModelInput> = chunk.iter().map(|&i| &inputs[i]).collect();
        let batch_labels: Vec<Labels> = chunk.iter().map(|&i| labels[i]).collect();
        let dists = model.predict(&batch_inputs)?;
        total += batch_loss(&dists, &batch_labels, weights)? * chunk.len() as f64;
    }
    Ok(total / indices.len() as f64)
}

/// Stratified hold-out: utterances are ranked by combined label (ties in
/// seeded order), cut into `floor(n * fraction)` contiguous strata, and one
/// seeded pick per stratum is held out. Returns sorted (train, validation).
pub fn split(labels: &[Labels], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let n = labels.len();
    let n_val = ((n as f64 * fraction).floor() as usize).min(n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| labels[i].fluency as u16 + labels[i].prosody as u16);
    let mut val = Vec::with_capacity(n_val);
    for s in 0..n_val {
        let (lo, hi) = (s * n / n_val, (s + 1) * n / n_val);
        val.push(order[rng.random_range(lo..hi)]);
    }
    val.sort_unstable();
    let train = (0..n).filter(|i| val.binary_search(i).is_err()).collect();
    (train, val)
}

pub fn train(
    inputs: &[ModelInput],
    labels: &[Labels],
    config: &TrainConfig,
    dims: ModelDims,
) -> Result<TrainOutcome> {
    train_with_observer(inputs, labels, config, dims, |_, _| Ok(()))
}

/// As [`train`], calling `observe(epoch, model)` after every epoch with
/// the current (not the best) parameters.
pub fn train_with_observer(
    inputs: &[ModelInput],
    labels: &[Labels],
    config: &TrainConfig,
    dims: ModelDims,
    mut observe: impl FnMut(usize, &ScoringModel) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::Empty("no training utterances".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::Shape(format!("{} inputs, {} labels", inputs.len(), labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_indices, val_indices) = split(labels, config.val_fraction, &mut rng);

    let mut model = ScoringModel::new(dims, config.seed)?;
    model.scaler = FeatureScaler::fit(train_indices.iter().map(|&i| &inputs[i]));
    info!(
        "training {} parameters on {} utterances ({} held out)",
        model.num_parameters(),
        train_indices.len(),
        val_indices.len()
    );
    let mut optimizer = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &dims,
    );

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ScoringModel)> = None;
    let mut stale = 0;
    let mut epoch_order = train_indices.clone();
    for epoch in 1..=config.epochs {
        epoch_order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in epoch_order.chunks(config.batch).enumerate() {
            let batch_inputs: Vec<&ModelInput> = chunk.iter().map(|&i| &inputs[i]).collect();
            let batch_labels: Vec<Labels> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) =
                model.loss_and_gradient(&batch_inputs, &batch_labels, config.loss_weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "epoch {epoch}, batch {b}: loss {loss}"
                )));
            }
            total += loss * chunk.len() as f64;
            optimizer.step(&mut model.params, &grads);
            if !model.params.all_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "epoch {epoch}, batch {b}: non-finite parameter after update"
                )));
            }
        }
        let train_loss = total / epoch_order.len() as f64;
        let val_loss = if val_indices.is_empty() {
            train_loss
        } else {
            evaluate_loss(&model, inputs, labels, &val_indices, config.batch, config.loss_weights)?
        };
        info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        observe(epoch, &model)?;

        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                info!("early stop after epoch {epoch}");
                break;
            }
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        train_indices,
        val_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let c = TrainConfig::parse(
            "# recipe\nlr = 0.001\nbatch=8\nepochs=3\npatience=1\nseed=42\nloss_weight_fluency=1\nduration_model=d.tsv\n",
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(c.lr, 0.001);
        assert_eq!((c.batch, c.epochs, c.patience, c.seed), (8, 3, 1, 42));
        assert_eq!(c.loss_weights.fluency, 1.0);
        assert_eq!(c.loss_weights.prosody, 0.5);
        assert_eq!(c.duration_model, Some(PathBuf::from("/cfg/d.tsv")));
        assert!(TrainConfig::parse("speed=3", Path::new(".")).is_err());
        assert!(TrainConfig::parse("batch=0", Path::new(".")).is_err());
        assert!(TrainConfig::parse("lr", Path::new(".")).is_err());
    }

    #[test]
    fn defaults_follow_the_recipe() {
        let c = TrainConfig::default();
        assert_eq!((c.lr, c.batch, c.epochs, c.patience), (1e-4, 32, 50, 2));
        assert_eq!(c.loss_weights, LossWeights { fluency: 0.5, prosody: 0.5 });
        assert_eq!(c.val_fraction, 0.1);
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<Labels> = (0..64).map(|i| Labels::new(i % 11, (i * 7) % 11).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (train, val) = split(&labels, 0.1, &mut rng);
        assert_eq!(val.len(), 6);
        assert_eq!(train.len(), 58);
        assert!(val.iter().all(|v| !train.contains(v)));
        let key = |i: &usize| labels[*i].fluency as u16 + labels[*i].prosody as u16;
        let mut keys: Vec<u16> = val.iter().map(key).collect();
        keys.sort_unstable();
        // One pick per sixth of the ranked set spans the label range.
        assert!(keys[0] <= 5 && keys[5] >= 13, "{keys:?}");
        let (_, none) = split(&labels[..1], 0.5, &mut rng);
        assert!(none.is_empty());
    }

    #[test]
    fn history_format() {
        let h = [EpochRecord { epoch: 1, train_loss: 2.5, val_loss: 2.25 }];
        assert_eq!(history_csv(&h), "epoch,train_loss,val_loss\n1,2.5,2.25\n");
    }
}
