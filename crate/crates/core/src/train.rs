//! Dataset splitting, the batch-size-1 training loop, and evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::capsnet::{grid_tensor, CapsNetModel, LossKind, ModelError, RmsProp, RmsPropConfig};
use crate::voxel::VoxelGrid;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("too few samples: {got}, need at least {min}")]
    TooFewSamples { got: usize, min: usize },
    #[error("invalid split fractions: {0}")]
    BadFractions(String),
    #[error("loss diverged (non-finite) at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("correctness vector is empty")]
    EmptyVector,
    #[error("sample {index} has label {label}, model expects < {n_classes}")]
    BadLabel {
        index: usize,
        label: usize,
        n_classes: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One voxelized, labeled training example.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub grid: VoxelGrid,
    pub label: usize,
    pub source_id: String,
}

/// Train/validation/test fractions plus the shuffle seed.
#[derive(Debug, Clone, Copy)]
pub struct SplitConfig {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            fractions: [0.70, 0.15, 0.15],
            seed: 0,
        }
    }
}

/// Dataset indices of the three splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }
}

/// Largest-remainder apportionment of `total` into parts proportional to
/// `quotas` (which must sum to `total` up to rounding). Ties go to the
/// earlier entry.
fn largest_remainder(quotas: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Deterministic stratified shuffle-split.
///
/// Split totals come from largest-remainder rounding over the whole dataset.
/// Every class that has at least one sample per split is pre-assigned one to
/// each (earlier splits first when it has fewer); the rest are apportioned
/// per split by largest remainder against the class's remaining share, with
/// the final split taking everything left. Within a class, membership is
/// decided by a seeded shuffle.
pub fn split(dataset: &[LabeledSample], config: &SplitConfig) -> Result<SplitIndices, TrainError> {
    let n = dataset.len();
    if n < 3 {
        return Err(TrainError::TooFewSamples { got: n, min: 3 });
    }
    let fsum: f64 = config.fractions.iter().sum();
    if config.fractions.iter().any(|&f| f <= 0.0) || (fsum - 1.0).abs() > 1e-9 {
        return Err(TrainError::BadFractions(format!(
            "{:?} (sum {fsum})",
            config.fractions
        )));
    }

    // Class id -> its sample indices, shuffled.
    let n_classes = dataset.iter().map(|s| s.label).max().unwrap_or(0) + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, sample) in dataset.iter().enumerate() {
        by_class[sample.label].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for class in &mut by_class {
        class.shuffle(&mut rng);
    }

    let totals = largest_remainder(
        &config.fractions.map(|f| f * n as f64),
        n,
    );

    // counts[s][c]: samples of class c in split s.
    let mut counts = vec![vec![0usize; n_classes]; 3];
    let mut remaining: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let mut targets = totals.clone();

    // Pre-assign one of each class per split where the class can afford it.
    for (c, left) in remaining.iter_mut().enumerate() {
        for s in 0..3.min(*left) {
            if targets[s] > counts[s].iter().sum::<usize>() {
                counts[s][c] += 1;
            }
        }
        let assigned: usize = (0..3).map(|s| counts[s][c]).sum();
        *left -= assigned;
    }

    for (s, target) in targets.iter_mut().enumerate() {
        *target -= counts[s].iter().sum::<usize>();
    }

    // Apportion the remainder: quota-based for train and val, the rest to test.
    for s in 0..2 {
        let pool: usize = remaining.iter().sum();
        if pool == 0 {
            break;
        }
        let quotas: Vec<f64> = remaining
            .iter()
            .map(|&r| targets[s] as f64 * r as f64 / pool as f64)
            .collect();
        let alloc = largest_remainder(&quotas, targets[s]);
        for c in 0..n_classes {
            counts[s][c] += alloc[c];
            remaining[c] -= alloc[c];
        }
    }
    for c in 0..n_classes {
        counts[2][c] += remaining[c];
    }

    // Hand out the shuffled per-class indices in split order.
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for (c, class) in by_class.iter().enumerate() {
        let mut cursor = 0usize;
        for s in 0..3 {
            out[s].extend_from_slice(&class[cursor..cursor + counts[s][c]]);
            cursor += counts[s][c];
        }
    }
    let [train, val, test] = out;
    Ok(SplitIndices { train, val, test })
}

/// One line of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

/// How the per-epoch `seconds` column is filled. `Zero` keeps output files
/// byte-reproducible across runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimingMode {
    #[default]
    Wall,
    Zero,
}

/// Training-loop configuration.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub loss: LossKind,
    pub optimizer: RmsPropConfig,
    /// Seed for the per-epoch shuffle stream (independent of weight init).
    pub shuffle_seed: u64,
    pub timing: TimingMode,
}

impl TrainOptions {
    pub fn new(loss: LossKind) -> Self {
        Self {
            epochs: 20,
            loss,
            optimizer: RmsPropConfig::default(),
            shuffle_seed: 0,
            timing: TimingMode::Wall,
        }
    }
}

/// Result of a training run: the per-epoch curve and the snapshot with the
/// best validation accuracy (earliest epoch on ties).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    pub best_model: CapsNetModel,
    pub best_epoch: usize,
}

/// Metrics of one model over one sample list.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// Per-sample correctness flags, in input order.
    pub correctness: Vec<bool>,
    /// (total, correct) per class.
    pub per_class: Vec<(usize, usize)>,
}

impl Evaluation {
    /// Mean of per-class accuracies over classes that appear.
    pub fn balanced_accuracy(&self) -> f64 {
        let present: Vec<f64> = self
            .per_class
            .iter()
            .filter(|(total, _)| *total > 0)
            .map(|(total, correct)| *correct as f64 / *total as f64)
            .collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    }
}

/// Mean of a correctness vector: the fraction of correct predictions.
pub fn prediction_accuracy(correctness: &[bool]) -> Result<f64, TrainError> {
    if correctness.is_empty() {
        return Err(TrainError::EmptyVector);
    }
    let correct = correctness.iter().filter(|&&c| c).count();
    Ok(correct as f64 / correctness.len() as f64)
}

/// Predicted class (argmax length, ties toward the lower index) and the
/// class capsule lengths for one grid.
pub fn predict(model: &CapsNetModel, grid: &VoxelGrid) -> Result<(usize, Vec<f64>), TrainError> {
    let activations = model.activations(&grid_tensor(grid))?;
    Ok((activations.predicted_class(), activations.lengths))
}

/// Accuracy, mean loss, and correctness flags of `model` over `samples`.
pub fn evaluate(
    model: &CapsNetModel,
    samples: &[&LabeledSample],
    loss: LossKind,
) -> Result<Evaluation, TrainError> {
    let n_classes = model.hyperparameters().n_classes;
    let mut correctness = Vec::with_capacity(samples.len());
    let mut per_class = vec![(0usize, 0usize); n_classes];
    let mut loss_sum = 0.0;
    for (index, sample) in samples.iter().enumerate() {
        if sample.label >= n_classes {
            return Err(TrainError::BadLabel {
                index,
                label: sample.label,
                n_classes,
            });
        }
        let mut pass = model.forward(&grid_tensor(&sample.grid))?;
        loss_sum += pass.loss_value(loss, sample.label)?;
        let predicted = pass.activations().predicted_class();
        let correct = predicted == sample.label;
        correctness.push(correct);
        per_class[sample.label].0 += 1;
        per_class[sample.label].1 += correct as usize;
    }
    Ok(Evaluation {
        accuracy: prediction_accuracy(&correctness)?,
        mean_loss: loss_sum / samples.len().max(1) as f64,
        correctness,
        per_class,
    })
}

/// Train with batches of one sample: shuffle, then forward / loss /
/// backward / optimizer step per sample, evaluating both splits after each
/// epoch.
pub fn train(
    model: &mut CapsNetModel,
    train_set: &[&LabeledSample],
    val_set: &[&LabeledSample],
    options: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    train_with_progress(model, train_set, val_set, options, |_| {})
}

/// [`train`] with a per-epoch callback (progress reporting).
pub fn train_with_progress(
    model: &mut CapsNetModel,
    train_set: &[&LabeledSample],
    val_set: &[&LabeledSample],
    options: &TrainOptions,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::TooFewSamples {
            got: train_set.len().min(val_set.len()),
            min: 1,
        });
    }
    let mut optimizer = RmsProp::new(options.optimizer, &model.param_shapes());
    let mut rng = ChaCha8Rng::seed_from_u64(options.shuffle_seed);
    let mut records = Vec::with_capacity(options.epochs);
    let mut best: Option<(f64, usize, CapsNetModel)> = None;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=options.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        for &i in &order {
            let sample = train_set[i];
            let mut pass = model.forward(&grid_tensor(&sample.grid))?;
            let (loss, grads) = pass.loss_and_gradients(options.loss, sample.label)?;
            if !loss.is_finite() {
                return Err(TrainError::DivergedLoss { epoch });
            }
            let grad_refs: Vec<&crate::tensor::Tensor> = grads.iter().collect();
            optimizer.step(&mut model.params_mut(), &grad_refs);
        }

        let train_eval = evaluate(model, train_set, options.loss)?;
        let val_eval = evaluate(model, val_set, options.loss)?;
        if !train_eval.mean_loss.is_finite() || !val_eval.mean_loss.is_finite() {
            return Err(TrainError::DivergedLoss { epoch });
        }
        let seconds = match options.timing {
            TimingMode::Wall => started.elapsed().as_secs_f64(),
            TimingMode::Zero => 0.0,
        };
        let record = EpochRecord {
            epoch,
            train_accuracy: train_eval.accuracy,
            train_loss: train_eval.mean_loss,
            val_accuracy: val_eval.accuracy,
            val_loss: val_eval.mean_loss,
            seconds,
        };
        progress(&record);
        records.push(record);
        let improved = match &best {
            None => true,
            Some((best_acc, _, _)) => val_eval.accuracy > *best_acc,
        };
        if improved {
            best = Some((val_eval.accuracy, epoch, model.clone()));
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        records,
        best_model,
        best_epoch,
    })
}

/// Render epoch records as the metrics CSV
/// (`epoch,train_acc,train_loss,val_acc,val_loss,seconds`).
pub fn metrics_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_acc,train_loss,val_acc,val_loss,seconds\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.3}\n",
            r.epoch, r.train_accuracy, r.train_loss, r.val_accuracy, r.val_loss, r.seconds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capsnet::{Hyperparameters, Mode};
    use crate::voxel::VoxelGrid3D;

    fn sample(label: usize, id: usize) -> LabeledSample {
        // Tiny distinguishable grids: class marks one corner voxel.
        let mut grid = VoxelGrid3D::zeros(8).unwrap();
        let cell = if label == 0 { [1, 1, 1] } else { [6, 6, 6] };
        grid.set(0, cell, 1);
        grid.set(6, cell, 1);
        LabeledSample {
            grid: VoxelGrid::D3(grid),
            label,
            source_id: format!("s{id}"),
        }
    }

    fn dataset(n: usize) -> Vec<LabeledSample> {
        (0..n).map(|i| sample(i % 2, i)).collect()
    }

    fn tiny_model(seed: u64) -> CapsNetModel {
        let hp = Hyperparameters {
            filters: 4,
            kernel_size: 3,
            primarycap_dim: 4,
            voxelcap_dim: 8,
            stride: 2,
            routing_iterations: 3,
            primary_maps: 2,
            n_classes: 2,
            relu: true,
        };
        CapsNetModel::new(hp, Mode::D3, 8, seed).unwrap()
    }

    #[test]
    fn split_ten_samples_is_6_2_2_stratified() {
        let data = dataset(10);
        let config = SplitConfig {
            fractions: [0.6, 0.2, 0.2],
            seed: 1,
        };
        let s = split(&data, &config).unwrap();
        assert_eq!(s.sizes(), [6, 2, 2]);
        for indices in [&s.train, &s.val, &s.test] {
            let zeros = indices.iter().filter(|&&i| data[i].label == 0).count();
            assert!(zeros > 0 && zeros < indices.len(), "both classes present");
        }
        // No index appears twice.
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let data = dataset(20);
        let config = SplitConfig::default();
        assert_eq!(split(&data, &config).unwrap(), split(&data, &config).unwrap());
        let other = SplitConfig {
            seed: 99,
            ..SplitConfig::default()
        };
        assert_ne!(split(&data, &config).unwrap(), split(&data, &other).unwrap());
    }

    #[test]
    fn split_233_samples_at_defaults_is_163_35_35() {
        // Same class imbalance as the structure dataset: 77 vs 156.
        let data: Vec<LabeledSample> = (0..233).map(|i| sample((i >= 77) as usize, i)).collect();
        let s = split(&data, &SplitConfig::default()).unwrap();
        assert_eq!(s.sizes(), [163, 35, 35]);
    }

    #[test]
    fn split_rejects_tiny_and_bad_fractions() {
        assert!(matches!(
            split(&dataset(2), &SplitConfig::default()),
            Err(TrainError::TooFewSamples { got: 2, min: 3 })
        ));
        let bad = SplitConfig {
            fractions: [0.5, 0.2, 0.2],
            seed: 0,
        };
        assert!(matches!(
            split(&dataset(10), &bad),
            Err(TrainError::BadFractions(_))
        ));
    }

    #[test]
    fn prediction_accuracy_examples() {
        assert_eq!(prediction_accuracy(&[true, true, true, true]).unwrap(), 1.0);
        assert_eq!(prediction_accuracy(&[true, false, true, true]).unwrap(), 0.75);
        assert!(matches!(
            prediction_accuracy(&[]),
            Err(TrainError::EmptyVector)
        ));
    }

    #[test]
    fn zero_weight_model_predicts_class_zero() {
        let model = tiny_model(1);
        let mut zeroed = model.clone();
        for p in zeroed.params_mut() {
            p.data_mut().fill(0.0);
        }
        let s = sample(1, 0);
        let (class, lengths) = predict(&zeroed, &s.grid).unwrap();
        assert_eq!(class, 0);
        assert_eq!(lengths, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let data = dataset(8);
        let refs: Vec<&LabeledSample> = data.iter().collect();
        let mut model = tiny_model(5);
        let initial = model.clone();
        let mut options = TrainOptions::new(LossKind::CategoricalHinge);
        options.epochs = 2;
        options.optimizer.learning_rate = 0.0;
        options.timing = TimingMode::Zero;
        let outcome = train(&mut model, &refs[..6], &refs[6..], &options).unwrap();
        assert_eq!(model, initial);
        assert_eq!(outcome.records.len(), 2);
    }

    #[test]
    fn one_step_reduces_loss_on_that_sample() {
        let s = sample(0, 0);
        let mut model = tiny_model(9);
        let input = grid_tensor(&s.grid);
        let mut pass = model.forward(&input).unwrap();
        let before = pass.loss_value(LossKind::CategoricalHinge, s.label).unwrap();

        let mut optimizer = RmsProp::new(
            RmsPropConfig {
                learning_rate: 1e-5,
                ..RmsPropConfig::default()
            },
            &model.param_shapes(),
        );
        let mut pass = model.forward(&input).unwrap();
        let (_, grads) = pass
            .loss_and_gradients(LossKind::CategoricalHinge, s.label)
            .unwrap();
        let grad_refs: Vec<&crate::tensor::Tensor> = grads.iter().collect();
        optimizer.step(&mut model.params_mut(), &grad_refs);

        let mut pass = model.forward(&input).unwrap();
        let after = pass.loss_value(LossKind::CategoricalHinge, s.label).unwrap();
        assert!(after < before, "loss {before} -> {after}");
    }

    #[test]
    fn training_is_reproducible_and_records_every_epoch() {
        let data = dataset(12);
        let refs: Vec<&LabeledSample> = data.iter().collect();
        let mut options = TrainOptions::new(LossKind::CategoricalHinge);
        options.epochs = 3;
        options.timing = TimingMode::Zero;

        let run = || {
            let mut model = tiny_model(2);
            let outcome = train(&mut model, &refs[..8], &refs[8..], &options).unwrap();
            (model, outcome)
        };
        let (m1, o1) = run();
        let (m2, o2) = run();
        assert_eq!(m1, m2);
        assert_eq!(o1.records, o2.records);
        assert_eq!(o1.best_epoch, o2.best_epoch);
        assert_eq!(o1.records.len(), 3);
        for (i, r) in o1.records.iter().enumerate() {
            assert_eq!(r.epoch, i + 1);
        }
    }

    #[test]
    fn metrics_csv_has_header_and_fixed_format() {
        let records = vec![EpochRecord {
            epoch: 1,
            train_accuracy: 0.5,
            train_loss: 1.25,
            val_accuracy: 0.25,
            val_loss: 2.5,
            seconds: 0.0,
        }];
        let csv = metrics_csv(&records);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epoch,train_acc,train_loss,val_acc,val_loss,seconds"
        );
        assert_eq!(
            lines.next().unwrap(),
            "1,0.500000,1.250000,0.250000,2.500000,0.000"
        );
    }
}
