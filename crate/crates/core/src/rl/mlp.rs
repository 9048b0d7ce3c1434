//! Fully connected network with rectifier hidden layers and a linear output.
//!
//! Parameters live in one flat vector so optimisers and gradient clipping can
//! treat them uniformly. Per layer the layout is the row-major weight matrix
//! (`out x in`) followed by the bias.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Forward-pass record needed by [`Mlp::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpCache {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`
    /// (after the rectifier for hidden layers).
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds the input at least")
    }
}

impl Mlp {
    /// All-zero network with layer widths `sizes` (input first).
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer sizes {sizes:?}")));
        }
        let n = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Self { sizes: sizes.to_vec(), params: vec![0.0; n] })
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation; the last layer is further
    /// scaled by `output_scale` and gets zero bias.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let layers = net.num_layers();
        let mut off = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let last = l + 1 == layers;
            let scale = if last { output_scale } else { 1.0 };
            for p in &mut net.params[off..off + fan_out * fan_in] {
                *p = scale * rng.random_range(-bound..bound);
            }
            off += fan_out * fan_in;
            for p in &mut net.params[off..off + fan_out] {
                *p = if last { 0.0 } else { rng.random_range(-bound..bound) };
            }
            off += fan_out;
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offsets of layer `l`'s weights and bias in the flat vector.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let w = self.sizes[..=l].windows(2).map(|w| w[1] * (w[0] + 1)).sum::<usize>();
        (w, w + self.sizes[l + 1] * self.sizes[l])
    }

    /// Weight `(row, col)` and bias of layer `l`.
    pub fn weight(&self, l: usize, row: usize, col: usize) -> f64 {
        let (w, _) = self.layer_offsets(l);
        self.params[w + row * self.sizes[l] + col]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let (_, b) = self.layer_offsets(l);
        &self.params[b..b + self.sizes[l + 1]]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    fn affine(&self, l: usize, off: usize, x: &[f64], rectify: bool) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[off..off + n_out * n_in];
        let b = &self.params[off + n_out * n_in..off + n_out * (n_in + 1)];
        let mut y = b.to_vec();
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &w[r * n_in..(r + 1) * n_in];
            *yr += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            if rectify && *yr < 0.0 {
                *yr = 0.0;
            }
        }
        y
    }

    pub fn forward(&self, x: &[f64]) -> Result<MlpCache> {
        self.check_input(x)?;
        let layers = self.num_layers();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..layers {
            let y = self.affine(l, off, &acts[l], l + 1 < layers);
            off += self.sizes[l + 1] * (self.sizes[l] + 1);
            acts.push(y);
        }
        Ok(MlpCache { acts })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.acts.pop().expect("non-empty"))
    }

    /// Accumulates `d(loss)/d(params)` into `grad` (same layout as the
    /// parameters) and returns `d(loss)/d(input)`.
    ///
    /// The rectifier's subgradient at 0 is taken as 0; since hidden outputs are
    /// stored after rectification, a unit with output exactly 0 passes no
    /// gradient.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        if grad_out.len() != self.output_dim() {
            return Err(Error::ShapeMismatch { expected: self.output_dim(), got: grad_out.len() });
        }
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch { expected: self.params.len(), got: grad.len() });
        }
        if cache.acts.len() != self.sizes.len() || cache.acts[0].len() != self.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.sizes.len(), got: cache.acts.len() });
        }
        let layers = self.num_layers();
        let mut delta = grad_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let x = &cache.acts[l];
            for r in 0..n_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                grad[b_off + r] += d;
                let g = &mut grad[w_off + r * n_in..w_off + (r + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += d * xi;
                }
            }
            let w = &self.params[w_off..w_off + n_out * n_in];
            let mut below = vec![0.0; n_in];
            for r in 0..n_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                for (bc, wc) in below.iter_mut().zip(&w[r * n_in..(r + 1) * n_in]) {
                    *bc += d * wc;
                }
            }
            if l > 0 {
                for (bc, &a) in below.iter_mut().zip(x) {
                    if a <= 0.0 {
                        *bc = 0.0;
                    }
                }
            }
            delta = below;
        }
        Ok(delta)
    }
}

/// Checkpoint form: one entry per layer with a row-major weight matrix.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpRepr {
    layers: Vec<LayerRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRepr {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl From<Mlp> for MlpRepr {
    fn from(net: Mlp) -> Self {
        let mut layers = Vec::with_capacity(net.num_layers());
        let mut off = 0;
        for l in 0..net.num_layers() {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            let weights = (0..n_out).map(|r| net.params[off + r * n_in..off + (r + 1) * n_in].to_vec()).collect();
            off += n_out * n_in;
            let bias = net.params[off..off + n_out].to_vec();
            off += n_out;
            layers.push(LayerRepr { weights, bias });
        }
        MlpRepr { layers }
    }
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = String;
    fn try_from(repr: MlpRepr) -> std::result::Result<Self, String> {
        let Some(first) = repr.layers.first() else {
            return Err("network has no layers".into());
        };
        let mut sizes = vec![first.weights.first().map_or(0, |r| r.len())];
        let mut params = Vec::new();
        for (l, layer) in repr.layers.iter().enumerate() {
            let n_in = sizes[l];
            if layer.weights.len() != layer.bias.len() || layer.weights.iter().any(|r| r.len() != n_in) || n_in == 0 {
                return Err(format!("layer {l} has inconsistent shapes"));
            }
            for row in &layer.weights {
                params.extend_from_slice(row);
            }
            params.extend_from_slice(&layer.bias);
            sizes.push(layer.bias.len());
        }
        if sizes.contains(&0) {
            return Err("empty layer".into());
        }
        Ok(Mlp { sizes, params })
    }
}
