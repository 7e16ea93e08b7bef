use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{FeatureMatrix, Gradients, MlpModel};
use super::{PatchSpec, Pyramid};
use crate::error::{Error, Result};
use crate::labeling::LabeledSample;
use crate::volume::Volume3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub seed: u64,
    pub l2_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64],
            learning_rate: 0.01,
            epochs: 50,
            minibatch_size: 32,
            seed: 0,
            l2_penalty: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("hidden layer sizes must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 || self.minibatch_size == 0 {
            return Err(Error::invalid("epochs and minibatch size must be positive"));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::invalid("l2 penalty must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub n_positive: usize,
    pub n_negative: usize,
    /// Mean minibatch objective per epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean cross-entropy of the returned model over the whole training set.
    pub final_loss: f64,
}

/// Standardizes the features, then runs seeded minibatch SGD.
pub fn train_on_features(
    features: &FeatureMatrix,
    labels: &[u8],
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    let n = labels.len();
    if n == 0 || features.rows() != n {
        return Err(Error::invalid(format!(
            "need one feature row per label ({} rows, {n} labels)",
            features.rows()
        )));
    }
    let n_positive = labels.iter().filter(|&&l| l == 1).count();
    if n_positive == 0 || n_positive == n {
        return Err(Error::invalid("training data must contain both classes"));
    }
    let (mean, std) = features.column_stats();
    let mut standardized = features.clone();
    for i in 0..n {
        for ((v, m), s) in standardized.row_mut(i).iter_mut().zip(&mean).zip(&std) {
            *v = (*v - m) / s;
        }
    }
    let targets: Vec<f64> = labels.iter().map(|&l| l as f64).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sizes = vec![features.dim];
    sizes.extend(&config.hidden_sizes);
    sizes.push(1);
    let mut model = MlpModel::random(&sizes, &mut rng);
    model.feature_mean = mean;
    model.feature_std = std;

    let mut order: Vec<usize> = (0..n).collect();
    let mut batch = FeatureMatrix::new(features.dim);
    let mut batch_targets = Vec::with_capacity(config.minibatch_size);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.minibatch_size) {
            batch.data.clear();
            batch_targets.clear();
            for &i in chunk {
                batch.push(standardized.row(i));
                batch_targets.push(targets[i]);
            }
            let (loss, grads): (f64, Gradients) = model.loss_and_gradient(&batch, &batch_targets, config.l2_penalty);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss at epoch {epoch}, batch {batches}; try a smaller learning rate"
                )));
            }
            model.apply_gradient(&grads, config.learning_rate);
            total += loss;
            batches += 1;
        }
        let mean_loss = total / batches as f64;
        log::debug!("epoch {epoch}: mean minibatch loss {mean_loss:.6}");
        epoch_losses.push(mean_loss);
    }
    let final_loss = model.loss(&standardized, &targets, 0.0);
    if !final_loss.is_finite() {
        return Err(Error::Divergence("non-finite loss after training".into()));
    }
    Ok((
        model,
        TrainReport {
            n_positive,
            n_negative: n - n_positive,
            epoch_losses,
            final_loss,
        },
    ))
}

/// Trains on labeled positions drawn from several volumes.
pub fn train_mlp_multi(
    sets: &[(&Volume3, &[LabeledSample])],
    spec: &PatchSpec,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    let mut features = FeatureMatrix::new(spec.feature_dim());
    let mut labels = Vec::new();
    let mut buf = vec![0.0f32; spec.feature_dim()];
    let mut row = vec![0.0f64; spec.feature_dim()];
    for (volume, samples) in sets {
        let pyramid = Pyramid::new(volume, spec)?;
        for s in samples.iter() {
            let dims = volume.dims();
            if !dims.contains(&s.position) || dims.margin(&s.position) < spec.receptive_radius() {
                return Err(Error::invalid(format!(
                    "sample at {} is inside the border band of {dims}",
                    s.position
                )));
            }
            pyramid.features_into(s.position.x, s.position.y, s.position.z, &mut buf);
            for (r, &b) in row.iter_mut().zip(&buf) {
                *r = b as f64;
            }
            features.push(&row);
            labels.push(s.label);
        }
    }
    train_on_features(&features, &labels, config)
}

pub fn train_mlp(
    samples: &[LabeledSample],
    volume: &Volume3,
    spec: &PatchSpec,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    train_mlp_multi(&[(volume, samples)], spec, config)
}
