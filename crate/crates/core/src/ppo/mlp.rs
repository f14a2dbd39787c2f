//! Dense multilayer perceptron with tanh hidden layers and a linear output.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (row-major, `[out][in]`) followed by the bias.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("network needs at least an input and an output size")]
    TooFewLayers,
    #[error("layer sizes must be positive")]
    ZeroWidth,
    #[error("expected {expected} inputs, got {got}")]
    Input { expected: usize, got: usize },
    #[error("expected {expected} output gradients, got {got}")]
    Output { expected: usize, got: usize },
    #[error("expected {expected} parameters, got {got}")]
    Params { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMlp", into = "RawMlp")]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Serialized form; deserialization goes through the shape checks.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl TryFrom<RawMlp> for Mlp {
    type Error = ShapeError;
    fn try_from(r: RawMlp) -> Result<Self, Self::Error> {
        Mlp::from_params(&r.sizes, r.params)
    }
}

impl From<Mlp> for RawMlp {
    fn from(m: Mlp) -> Self {
        RawMlp { sizes: m.sizes, params: m.params }
    }
}

/// Layer activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    /// `acts[0]` is the input, `acts[l]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Activations of a batched forward pass, one column per sample.
#[derive(Clone, Debug)]
pub struct BatchCache {
    acts: Vec<DMatrix<f64>>,
}

impl BatchCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.acts.last().expect("at least the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: &[usize]) -> Result<Self, ShapeError> {
        if sizes.len() < 2 {
            return Err(ShapeError::TooFewLayers);
        }
        if sizes.contains(&0) {
            return Err(ShapeError::ZeroWidth);
        }
        Ok(Mlp { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] })
    }

    /// Gaussian weights with std `gain / sqrt(fan_in)` per layer (the last
    /// layer uses `out_gain`), zero biases.
    pub fn init<R: Rng>(sizes: &[usize], gain: f64, out_gain: f64, rng: &mut R) -> Result<Self, ShapeError> {
        let mut net = Self::zeros(sizes)?;
        let layers = sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let g = if l + 1 == layers { out_gain } else { gain };
            let std = g / (n_in as f64).sqrt();
            for w in &mut net.params[off..off + n_in * n_out] {
                *w = std * rng.sample::<f64, _>(StandardNormal);
            }
            off += n_in * n_out + n_out;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, ShapeError> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(ShapeError::Params { expected: net.params.len(), got: params.len() });
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated sizes")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Forward pass keeping activations.
    pub fn forward_cached(&self, x: &[f64]) -> Result<MlpCache, ShapeError> {
        if x.len() != self.input_dim() {
            return Err(ShapeError::Input { expected: self.input_dim(), got: x.len() });
        }
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = &acts[l];
            let mut out = b.to_vec();
            for (o, row) in out.iter_mut().zip(w.chunks_exact(n_in)) {
                *o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < layers {
                for v in &mut out {
                    *v = v.tanh();
                }
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        Ok(MlpCache { acts })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ShapeError> {
        Ok(self.forward_cached(x)?.acts.pop().expect("at least one layer"))
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.sizes.len() - 1);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        offsets
    }

    /// Weight block of layer `l` as an `out × in` matrix.
    fn weights(&self, l: usize, off: usize) -> DMatrix<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        DMatrix::from_row_slice(n_out, n_in, &self.params[off..off + n_in * n_out])
    }

    /// Forward pass over the columns of `x` (`input_dim × batch`).
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<BatchCache, ShapeError> {
        if x.nrows() != self.input_dim() {
            return Err(ShapeError::Input { expected: self.input_dim(), got: x.nrows() });
        }
        let layers = self.sizes.len() - 1;
        let offsets = self.layer_offsets();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.clone());
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut z = DMatrix::zeros(n_out, x.ncols());
            z.gemm(1.0, &self.weights(l, off), &acts[l], 0.0);
            for mut col in z.column_iter_mut() {
                for (v, bi) in col.iter_mut().zip(b) {
                    *v += bi;
                }
            }
            if l + 1 < layers {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Ok(BatchCache { acts })
    }

    /// Batched counterpart of [`Mlp::backward`]: accumulates the parameter
    /// gradient summed over samples and returns the per-sample input
    /// gradients as columns.
    pub fn backward_batch(&self, cache: &BatchCache, upstream: DMatrix<f64>, grad: &mut [f64]) -> Result<DMatrix<f64>, ShapeError> {
        if upstream.nrows() != self.output_dim() {
            return Err(ShapeError::Output { expected: self.output_dim(), got: upstream.nrows() });
        }
        if grad.len() != self.params.len() {
            return Err(ShapeError::Params { expected: self.params.len(), got: grad.len() });
        }
        let layers = self.sizes.len() - 1;
        let offsets = self.layer_offsets();
        let mut delta = upstream;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                delta.zip_apply(&cache.acts[l + 1], |d, y| *d *= 1.0 - y * y);
            }
            let input = &cache.acts[l];
            let off = offsets[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let gw_batch = &delta * input.transpose();
            for (r, row) in gw.chunks_exact_mut(n_in).enumerate() {
                for (c, g) in row.iter_mut().enumerate() {
                    *g += gw_batch[(r, c)];
                }
            }
            for col in delta.column_iter() {
                for (g, d) in gb.iter_mut().zip(col.iter()) {
                    *g += d;
                }
            }
            let prev = self.weights(l, off).tr_mul(&delta);
            delta = prev;
        }
        Ok(delta)
    }

    /// Accumulates `∂(upstream · output)/∂params` into `grad` and returns the
    /// gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, upstream: &[f64], grad: &mut [f64]) -> Result<Vec<f64>, ShapeError> {
        if upstream.len() != self.output_dim() {
            return Err(ShapeError::Output { expected: self.output_dim(), got: upstream.len() });
        }
        if grad.len() != self.params.len() {
            return Err(ShapeError::Params { expected: self.params.len(), got: grad.len() });
        }
        let layers = self.sizes.len() - 1;
        let offsets = self.layer_offsets();
        let mut delta = upstream.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                // tanh' = 1 − y².
                for (d, y) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let input = &cache.acts[l];
            let off = offsets[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for ((row, gbo), d) in gw.chunks_exact_mut(n_in).zip(gb.iter_mut()).zip(&delta) {
                *gbo += d;
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (row, d) in w.chunks_exact(n_in).zip(&delta) {
                for (p, wv) in prev.iter_mut().zip(row) {
                    *p += d * wv;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }
}
