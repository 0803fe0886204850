//! Small supervised models and the client-side training loop.

mod data;
mod model;
mod partition;

pub use data::{synth_blobs, synth_blobs_with_test, BlobSpec, Dataset};
pub use model::{backward, forward_loss, Architecture, DenseLayer, ForwardCache, Model};
pub use partition::{partition, PartitionMode, PartitionSpec};

use ndarray::Axis;
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::dp::StreamRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("label {0} out of range")]
    LabelOutOfRange(usize),
    #[error("non-finite parameter or feature")]
    NonFinite,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("cache was produced by a different model")]
    StaleCache,
    #[error("{clients} clients requested for {samples} samples")]
    TooManyClients { clients: usize, samples: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, LearnerError>;

/// Minibatch SGD: `epochs` passes over `data`, reshuffled each epoch, with
/// `w ← w − eta·mean(∇F)` per batch. The last batch of an epoch may be short.
pub fn local_train(
    model: &Model,
    data: &Dataset,
    epochs: usize,
    batch: usize,
    eta: f64,
    rng: &StreamRng,
) -> Result<Model> {
    if data.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    if epochs == 0 || batch == 0 {
        return Err(LearnerError::InvalidArgument(
            "epochs and batch size must be at least 1".into(),
        ));
    }
    let mut g = rng.generator();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut current = model.clone();
    let mut params = current.flatten();
    for _ in 0..epochs {
        order.shuffle(&mut g);
        for chunk in order.chunks(batch) {
            let x = data.features().select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let (_, cache) = forward_loss(&current, x.view(), &y)?;
            let grad = backward(&current, &cache)?;
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= eta * g;
            }
            current = current.unflatten(&params)?;
        }
    }
    Ok(current)
}

/// Mean cross-entropy and accuracy over the whole dataset.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<(f64, f64)> {
    let (loss, _) = forward_loss(model, data.features().view(), data.labels())?;
    let pred = model.predict(data.features().view())?;
    let correct = pred.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok((loss, correct as f64 / data.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::Purpose;

    fn blobs(spread: f64, classes: usize, d: usize, per_class: usize, seed: u64) -> Dataset {
        synth_blobs(&BlobSpec {
            num_classes: classes,
            dim: d,
            samples_per_class: per_class,
            spread,
            seed,
            latent_rank: None,
        })
        .unwrap()
    }

    #[test]
    fn full_batch_single_epoch_is_one_gradient_step() {
        let data = blobs(0.3, 3, 4, 5, 1);
        let m = Model::init(Architecture::Logistic, 4, 3, &StreamRng::root(2, Purpose::ModelInit)).unwrap();
        let trained = local_train(&m, &data, 1, data.len(), 0.5, &StreamRng::root(3, Purpose::Shuffle)).unwrap();
        let (_, cache) = forward_loss(&m, data.features().view(), data.labels()).unwrap();
        let grad = backward(&m, &cache).unwrap();
        let want: Vec<f64> = m.flatten().iter().zip(&grad).map(|(p, g)| p - 0.5 * g).collect();
        for (a, b) in trained.flatten().iter().zip(&want) {
            // Summation order differs only through the shuffled row order.
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn zero_epochs_rejected_and_empty_guarded() {
        let data = blobs(0.3, 2, 2, 3, 1);
        let m = Model::init(Architecture::Logistic, 2, 2, &StreamRng::root(1, Purpose::ModelInit)).unwrap();
        let rng = StreamRng::root(1, Purpose::Shuffle);
        assert!(local_train(&m, &data, 0, 4, 0.1, &rng).is_err());
        assert!(local_train(&m, &data, 1, 0, 0.1, &rng).is_err());
    }

    #[test]
    fn training_reduces_loss_on_separable_blobs() {
        for seed in 0..5 {
            let data = blobs(0.1, 2, 5, 40, seed);
            let m = Model::init(Architecture::Logistic, 5, 2, &StreamRng::root(seed, Purpose::ModelInit)).unwrap();
            let before = evaluate(&m, &data).unwrap().0;
            let after_model = local_train(&m, &data, 3, 8, 0.5, &StreamRng::root(seed, Purpose::Shuffle)).unwrap();
            let after = evaluate(&after_model, &data).unwrap().0;
            assert!(after <= before, "seed {seed}: {after} > {before}");
        }
    }

    #[test]
    fn epoch_losses_mostly_decrease() {
        for seed in 0..5 {
            let data = blobs(0.1, 3, 6, 30, 100 + seed);
            let rng = StreamRng::root(seed, Purpose::Shuffle);
            let mut m = Model::init(
                Architecture::Mlp { hidden: 16, bias: true },
                6,
                3,
                &StreamRng::root(seed, Purpose::ModelInit),
            )
            .unwrap();
            let mut losses = vec![evaluate(&m, &data).unwrap().0];
            for epoch in 0..20u64 {
                m = local_train(&m, &data, 1, 10, 0.2, &rng.with_round(epoch)).unwrap();
                losses.push(evaluate(&m, &data).unwrap().0);
            }
            let rises = losses.windows(2).filter(|w| w[1] > w[0]).count();
            assert!(rises as f64 <= 0.05 * 20.0, "seed {seed}: {losses:?}");
        }
    }

    #[test]
    fn logistic_regression_fits_ten_class_blobs() {
        for seed in 0..5 {
            let data = blobs(0.1, 10, 20, 50, 200 + seed);
            let m = Model::init(
                Architecture::Logistic,
                20,
                10,
                &StreamRng::root(seed, Purpose::ModelInit),
            )
            .unwrap();
            let trained = local_train(&m, &data, 20, 16, 0.5, &StreamRng::root(seed, Purpose::Shuffle)).unwrap();
            let acc = evaluate(&trained, &data).unwrap().1;
            assert!(acc >= 0.95, "seed {seed}: {acc}");
        }
    }

    #[test]
    fn training_replays_bit_exactly() {
        let data = blobs(0.4, 3, 4, 20, 5);
        let m = Model::init(
            Architecture::Mlp { hidden: 8, bias: false },
            4,
            3,
            &StreamRng::root(1, Purpose::ModelInit),
        )
        .unwrap();
        let rng = StreamRng::new(9, 4, 2, Purpose::Shuffle);
        let a = local_train(&m, &data, 2, 7, 0.1, &rng).unwrap();
        let b = local_train(&m, &data, 2, 7, 0.1, &rng).unwrap();
        assert_eq!(a, b);
    }
}
