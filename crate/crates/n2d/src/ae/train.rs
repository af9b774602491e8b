//! Mini-batch Adam training on mean squared reconstruction error.

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ae::{AeConfig, AeModel};
use crate::data::Dataset;
use crate::error::{N2dError, Result};

/// Trains the model for `config.epochs` epochs. Data order is reshuffled
/// each epoch with a generator seeded by `config.seed`; the last incomplete
/// batch is kept. `loss_history[e]` is the full-dataset MSE evaluated with
/// the parameters as they stand after epoch `e`.
pub fn train(mut model: AeModel, ds: &Dataset, config: &AeConfig) -> Result<(AeModel, Vec<f64>)> {
    config.validate()?;
    if ds.n_features() != model.input_dim() {
        return Err(N2dError::Dimension {
            what: "training data".into(),
            expected: model.input_dim(),
            actual: ds.n_features(),
        });
    }
    let n = ds.n_samples();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5u64 << 32));
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch_idx in order.chunks(config.batch_size) {
            let batch = ds.features.select(Axis(0), batch_idx);
            let (batch_loss, grads) = model.loss_and_gradient(&batch.view())?;
            if !batch_loss.is_finite() {
                return Err(N2dError::Divergence { epoch });
            }
            model.adam_step(&grads);
        }
        let epoch_loss = model.loss(ds)?;
        if !epoch_loss.is_finite() {
            return Err(N2dError::Divergence { epoch });
        }
        loss_history.push(epoch_loss);
    }
    Ok((model, loss_history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ae::init;
    use ndarray::Array2;

    fn memorization_dataset() -> Dataset {
        // 100 copies of a single point.
        let point = [0.3, 0.8, 0.1, 0.5];
        let features = Array2::from_shape_fn((100, 4), |(_, j)| point[j]);
        Dataset::new(features, None, "memorize", None).unwrap()
    }

    fn small_config() -> AeConfig {
        AeConfig {
            input_dim: 4,
            bottleneck_dim: 2,
            hidden_dims: vec![8],
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 42,
        }
    }

    #[test]
    fn memorizes_a_single_point() {
        let cfg = small_config();
        let model = init(&cfg).unwrap();
        let ds = memorization_dataset();
        let (model, history) = train(model, &ds, &cfg).unwrap();
        assert_eq!(history.len(), 200);
        assert!(
            *history.last().unwrap() < 1e-4,
            "final loss {} should be < 1e-4",
            history.last().unwrap()
        );
        assert!(model.params_finite());
    }

    #[test]
    fn one_epoch_yields_one_loss_entry() {
        let cfg = AeConfig {
            epochs: 1,
            ..small_config()
        };
        let model = init(&cfg).unwrap();
        let (_, history) = train(model, &memorization_dataset(), &cfg).unwrap();
        assert_eq!(history.len(), 1);
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = AeConfig {
            epochs: 0,
            ..small_config()
        };
        assert!(cfg.validate().is_err());
        let model = init(&small_config()).unwrap();
        assert!(train(model, &memorization_dataset(), &cfg).is_err());
    }

    #[test]
    fn training_is_bit_reproducible() {
        let cfg = AeConfig {
            epochs: 5,
            ..small_config()
        };
        let run = || {
            let model = init(&cfg).unwrap();
            train(model, &memorization_dataset(), &cfg).unwrap()
        };
        let (m1, h1) = run();
        let (m2, h2) = run();
        assert_eq!(h1, h2);
        for (a, b) in m1.layers.iter().zip(m2.layers.iter()) {
            assert_eq!(a.w, b.w);
            assert_eq!(a.b, b.b);
        }
    }

    #[test]
    fn final_history_entry_equals_full_batch_loss() {
        let cfg = AeConfig {
            epochs: 10,
            ..small_config()
        };
        let ds = memorization_dataset();
        let model = init(&cfg).unwrap();
        let (model, history) = train(model, &ds, &cfg).unwrap();
        let recomputed = model.loss(&ds).unwrap();
        assert!((recomputed - history.last().unwrap()).abs() < 1e-9);
    }
}
