//! Fully connected autoencoder trained with mini-batch Adam on mean squared
//! reconstruction error. Hidden layers use ReLU; the bottleneck and the
//! final reconstruction layer are linear. Parameters are f64 throughout.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::train;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{N2dError, Result};
use crate::manifold::{Embedding, Provenance};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AeConfig {
    pub input_dim: usize,
    /// Width of the encoder's final layer; set to the cluster count.
    pub bottleneck_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl AeConfig {
    /// The default d-500-500-2000-c architecture.
    pub fn new(input_dim: usize, bottleneck_dim: usize, seed: u64) -> Self {
        AeConfig {
            input_dim,
            bottleneck_dim,
            hidden_dims: vec![500, 500, 2000],
            epochs: 1000,
            batch_size: 256,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.bottleneck_dim == 0 {
            return Err(N2dError::Config("layer dims must be >= 1".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(N2dError::Config("hidden dims must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(N2dError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(N2dError::Config("batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(N2dError::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }

    /// Encoder layer shapes: d -> hidden... -> c.
    pub fn encoder_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.bottleneck_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub relu: bool,
}

/// Per-tensor Adam accumulators.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    pub mw: Array2<f64>,
    pub vw: Array2<f64>,
    pub mb: Array1<f64>,
    pub vb: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct AeModel {
    pub config: AeConfig,
    pub(crate) layers: Vec<Layer>,
    pub(crate) moments: Vec<Moments>,
    pub(crate) n_encoder_layers: usize,
    /// Adam step counter (shared across tensors).
    pub(crate) step: u64,
}

/// Gradients for one layer, in the same shapes as its parameters.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
}

/// Initializes a model with Glorot-uniform weights and zero biases from a
/// generator seeded by `config.seed`. The decoder mirrors the encoder.
pub fn init(config: &AeConfig) -> Result<AeModel> {
    config.validate()?;
    let enc = config.encoder_shapes();
    let dec: Vec<(usize, usize)> = enc.iter().rev().map(|&(i, o)| (o, i)).collect();
    let n_encoder_layers = enc.len();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layers = Vec::with_capacity(enc.len() + dec.len());
    for (idx, &(fan_in, fan_out)) in enc.iter().chain(dec.iter()).enumerate() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound));
        let b = Array1::zeros(fan_out);
        // ReLU on every layer except the bottleneck and the final output.
        let is_bottleneck = idx + 1 == n_encoder_layers;
        let is_output = idx + 1 == enc.len() + dec.len();
        layers.push(Layer {
            w,
            b,
            relu: !(is_bottleneck || is_output),
        });
    }
    let moments = layers
        .iter()
        .map(|l| Moments {
            mw: Array2::zeros(l.w.dim()),
            vw: Array2::zeros(l.w.dim()),
            mb: Array1::zeros(l.b.len()),
            vb: Array1::zeros(l.b.len()),
        })
        .collect();

    Ok(AeModel {
        config: config.clone(),
        layers,
        moments,
        n_encoder_layers,
        step: 0,
    })
}

impl AeModel {
    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.layers[self.n_encoder_layers - 1].w.ncols()
    }

    fn check_input(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(N2dError::Dimension {
                what: "autoencoder input".into(),
                expected: self.input_dim(),
                actual: batch.ncols(),
            });
        }
        Ok(())
    }

    /// Runs the batch through encoder and decoder, returning the bottleneck
    /// activations and the reconstruction.
    pub fn forward(&self, batch: &ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check_input(batch)?;
        let mut a = batch.to_owned();
        let mut embedding = None;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w);
            z += &layer.b;
            if layer.relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            if idx + 1 == self.n_encoder_layers {
                embedding = Some(z.clone());
            }
            a = z;
        }
        Ok((embedding.expect("encoder produces a bottleneck"), a))
    }

    /// MSE loss and parameter gradients for one batch (no update applied).
    /// The loss is the mean over batch entries and features of the squared
    /// reconstruction error.
    pub fn loss_and_gradient(&self, batch: &ArrayView2<f64>) -> Result<(f64, Vec<LayerGrad>)> {
        self.check_input(batch)?;
        let b = batch.nrows();
        let d = batch.ncols();

        // Forward pass, caching each layer's input and pre-ReLU output sign.
        let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut a = batch.to_owned();
        for layer in &self.layers {
            inputs.push(a.clone());
            let mut z = a.dot(&layer.w);
            z += &layer.b;
            if layer.relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        let recon = a;
        let diff = &recon - batch;
        let scale = 1.0 / (b * d) as f64;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() * scale;

        // Backward pass. `delta` holds dL/d(output of layer l) entering each
        // iteration; ReLU layers were cached post-activation, so the mask
        // (activation > 0) equals the pre-activation mask (z > 0).
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut delta = diff.mapv(|v| 2.0 * v * scale);
        for (idx, (layer, input)) in self.layers.iter().zip(inputs.iter()).enumerate().rev() {
            let dw = input.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            grads.push(LayerGrad { dw, db });
            if idx == 0 {
                break;
            }
            delta = delta.dot(&layer.w.t());
            if self.layers[idx - 1].relu {
                // `input` is the previous layer's activation.
                delta.zip_mut_with(input, |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
        }
        grads.reverse();
        Ok((loss, grads))
    }

    /// One Adam update from precomputed gradients.
    pub(crate) fn adam_step(&mut self, grads: &[LayerGrad]) {
        let cfg = &self.config;
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.adam_beta1.powi(t);
        let bias2 = 1.0 - cfg.adam_beta2.powi(t);
        for ((layer, m), g) in self
            .layers
            .iter_mut()
            .zip(self.moments.iter_mut())
            .zip(grads.iter())
        {
            update_tensor(
                layer.w.as_slice_mut().unwrap(),
                g.dw.as_slice().unwrap(),
                m.mw.as_slice_mut().unwrap(),
                m.vw.as_slice_mut().unwrap(),
                cfg,
                bias1,
                bias2,
            );
            update_tensor(
                layer.b.as_slice_mut().unwrap(),
                g.db.as_slice().unwrap(),
                m.mb.as_slice_mut().unwrap(),
                m.vb.as_slice_mut().unwrap(),
                cfg,
                bias1,
                bias2,
            );
        }
    }

    /// Full-dataset mean squared reconstruction error, computed in chunks.
    pub fn loss(&self, ds: &Dataset) -> Result<f64> {
        let n = ds.n_samples();
        let d = ds.n_features();
        let mut sum = 0.0;
        for chunk in ds.features.axis_chunks_iter(Axis(0), 2048) {
            let (_, recon) = self.forward(&chunk)?;
            let diff = &recon - &chunk;
            sum += diff.iter().map(|v| v * v).sum::<f64>();
        }
        Ok(sum / (n * d) as f64)
    }

    /// Encodes the whole dataset into the bottleneck space.
    pub fn encode(&self, ds: &Dataset) -> Result<Embedding> {
        let n = ds.n_samples();
        let c = self.bottleneck_dim();
        let mut coords = Array2::<f64>::zeros((n, c));
        let mut row = 0;
        for chunk in ds.features.axis_chunks_iter(Axis(0), 2048) {
            let (emb, _) = self.forward(&chunk)?;
            coords
                .slice_mut(ndarray::s![row..row + emb.nrows(), ..])
                .assign(&emb);
            row += emb.nrows();
        }
        Embedding::new(coords, Provenance::Autoencoded)
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }

    /// Flat parameter access for gradient checking.
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn get_param(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.w.len() {
                return l.w.as_slice().unwrap()[idx];
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return l.b[idx];
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for l in &mut self.layers {
            if idx < l.w.len() {
                l.w.as_slice_mut().unwrap()[idx] = value;
                return;
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                l.b[idx] = value;
                return;
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    /// Gradients flattened in the same order as [`get_param`].
    pub fn flatten_grads(&self, grads: &[LayerGrad]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for g in grads {
            out.extend(g.dw.iter().cloned());
            out.extend(g.db.iter().cloned());
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
fn update_tensor(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &AeConfig,
    bias1: f64,
    bias2: f64,
) {
    let (b1, b2, lr, eps) = (cfg.adam_beta1, cfg.adam_beta2, cfg.learning_rate, cfg.adam_eps);
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let mhat = m[i] / bias1;
        let vhat = v[i] / bias2;
        p[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_config() -> AeConfig {
        AeConfig {
            input_dim: 3,
            bottleneck_dim: 2,
            hidden_dims: vec![4],
            epochs: 1,
            batch_size: 2,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 11,
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = tiny_config();
        let m1 = init(&cfg).unwrap();
        let m2 = init(&cfg).unwrap();
        for (a, b) in m1.layers.iter().zip(m2.layers.iter()) {
            assert_eq!(a.w, b.w);
            assert_eq!(a.b, b.b);
        }
    }

    #[test]
    fn encoder_shapes_follow_architecture() {
        let cfg = AeConfig::new(16, 10, 0);
        assert_eq!(
            cfg.encoder_shapes(),
            vec![(16, 500), (500, 500), (500, 2000), (2000, 10)]
        );
    }

    #[test]
    fn glorot_bound_matches_formula() {
        let cfg = AeConfig::new(16, 10, 3);
        let model = init(&cfg).unwrap();
        // layer 500 -> 2000: bound sqrt(6/2500)
        let bound = (6.0f64 / 2500.0).sqrt();
        let w = &model.layers[2].w;
        assert_eq!(w.dim(), (500, 2000));
        assert!(w.iter().all(|&v| v.abs() < bound));
        let max = w.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max > bound * 0.98, "samples should fill the range");
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let cfg = tiny_config();
        let mut model = init(&cfg).unwrap();
        for l in &mut model.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        let x = array![[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]];
        let (emb, recon) = model.forward(&x.view()).unwrap();
        assert!(emb.iter().all(|&v| v == 0.0));
        assert!(recon.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer_reconstructs() {
        // One "encoder" layer and one "decoder" layer, both identity.
        let cfg = AeConfig {
            input_dim: 2,
            bottleneck_dim: 2,
            hidden_dims: vec![],
            ..tiny_config()
        };
        let mut model = init(&cfg).unwrap();
        for l in &mut model.layers {
            l.w.assign(&Array2::eye(2));
            l.b.fill(0.0);
        }
        let x = array![[0.3, -0.7], [1.5, 2.5]];
        let (_, recon) = model.forward(&x.view()).unwrap();
        for (a, b) in recon.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_matches_hand_rolled_oracle() {
        let cfg = tiny_config();
        let model = init(&cfg).unwrap();
        let x = array![[0.2, -0.4, 0.9]];

        // Independent forward pass with explicit loops.
        let mut a: Vec<f64> = x.row(0).to_vec();
        for layer in &model.layers {
            let (fin, fout) = layer.w.dim();
            let mut z = vec![0.0; fout];
            for (j, zj) in z.iter_mut().enumerate() {
                let mut s = layer.b[j];
                for i in 0..fin {
                    s += a[i] * layer.w[[i, j]];
                }
                *zj = if layer.relu { s.max(0.0) } else { s };
            }
            a = z;
        }

        let (_, recon) = model.forward(&x.view()).unwrap();
        for (got, want) in recon.row(0).iter().zip(a.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = init(&tiny_config()).unwrap();
        let x = array![[1.0, 2.0]];
        assert!(model.forward(&x.view()).is_err());
    }
}
