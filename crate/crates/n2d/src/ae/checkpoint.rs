//! Autoencoder checkpointing in the shared container format. Round-trips
//! are bit-exact, including optimizer state.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::ae::{AeConfig, AeModel, Layer, Moments};
use crate::error::{N2dError, Result};
use crate::io::container::{load_container, save_container, Container};

pub fn save_checkpoint(path: &Path, model: &AeModel) -> Result<()> {
    let meta = serde_json::json!({
        "config": serde_json::to_value(&model.config)
            .map_err(|e| N2dError::Format(e.to_string()))?,
        "n_encoder_layers": model.n_encoder_layers,
        "step": model.step,
        "relu": model.layers.iter().map(|l| l.relu).collect::<Vec<bool>>(),
    });
    let mut c = Container::new("ae_checkpoint", meta);
    for (i, (layer, m)) in model.layers.iter().zip(model.moments.iter()).enumerate() {
        c.push(format!("w{i}"), layer.w.clone());
        c.push(format!("b{i}"), row_matrix(&layer.b));
        c.push(format!("mw{i}"), m.mw.clone());
        c.push(format!("vw{i}"), m.vw.clone());
        c.push(format!("mb{i}"), row_matrix(&m.mb));
        c.push(format!("vb{i}"), row_matrix(&m.vb));
    }
    save_container(path, &c)
}

pub fn load_checkpoint(path: &Path) -> Result<AeModel> {
    let c = load_container(path)?;
    if c.kind != "ae_checkpoint" {
        return Err(N2dError::Format(format!(
            "expected ae_checkpoint container, found '{}'",
            c.kind
        )));
    }
    let config: AeConfig = serde_json::from_value(c.meta["config"].clone())
        .map_err(|e| N2dError::Format(e.to_string()))?;
    let n_encoder_layers = c.meta["n_encoder_layers"]
        .as_u64()
        .ok_or_else(|| N2dError::Format("missing n_encoder_layers".into()))?
        as usize;
    let step = c.meta["step"]
        .as_u64()
        .ok_or_else(|| N2dError::Format("missing step".into()))?;
    let relu: Vec<bool> = serde_json::from_value(c.meta["relu"].clone())
        .map_err(|e| N2dError::Format(e.to_string()))?;

    let mut layers = Vec::with_capacity(relu.len());
    let mut moments = Vec::with_capacity(relu.len());
    for (i, &relu_flag) in relu.iter().enumerate() {
        layers.push(Layer {
            w: c.tensor(&format!("w{i}"))?.clone(),
            b: flat_vector(c.tensor(&format!("b{i}"))?),
            relu: relu_flag,
        });
        moments.push(Moments {
            mw: c.tensor(&format!("mw{i}"))?.clone(),
            vw: c.tensor(&format!("vw{i}"))?.clone(),
            mb: flat_vector(c.tensor(&format!("mb{i}"))?),
            vb: flat_vector(c.tensor(&format!("vb{i}"))?),
        });
    }
    Ok(AeModel {
        config,
        layers,
        moments,
        n_encoder_layers,
        step,
    })
}

fn row_matrix(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(ndarray::Axis(0))
}

fn flat_vector(m: &Array2<f64>) -> Array1<f64> {
    m.row(0).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ae::init;
    use crate::data::Dataset;
    use ndarray::Array2;

    #[test]
    fn checkpoint_round_trip_exact() {
        let cfg = AeConfig {
            input_dim: 5,
            bottleneck_dim: 2,
            hidden_dims: vec![7],
            epochs: 3,
            batch_size: 4,
            learning_rate: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 3,
        };
        let model = init(&cfg).unwrap();
        let features = Array2::from_shape_fn((20, 5), |(i, j)| ((i * 5 + j) as f64).sin());
        let ds = Dataset::new(features, None, "t", None).unwrap();
        let (model, _) = crate::ae::train(model, &ds, &cfg).unwrap();

        let dir = std::env::temp_dir().join(format!("n2d_ckpt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.n2dc");
        save_checkpoint(&path, &model).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        assert_eq!(loaded.step, model.step);
        assert_eq!(loaded.n_encoder_layers, model.n_encoder_layers);
        for (a, b) in model.layers.iter().zip(loaded.layers.iter()) {
            assert_eq!(a.relu, b.relu);
            for (x, y) in a.w.iter().zip(b.w.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.b.iter().zip(b.b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for (a, b) in model.moments.iter().zip(loaded.moments.iter()) {
            for (x, y) in a.mw.iter().zip(b.mw.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.vw.iter().zip(b.vw.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // loaded model behaves identically
        let e1 = model.encode(&ds).unwrap();
        let e2 = loaded.encode(&ds).unwrap();
        assert_eq!(e1.coords, e2.coords);
    }
}
