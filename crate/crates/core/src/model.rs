//! FM and NFM predictors.
//!
//! Both models share the decomposition `logit = w0 + linear + high_order`
//! where `linear = Σ w_i x_i`. The high-order part is built on the
//! bi-interaction vector
//!
//! ```text
//! bi_f = 0.5 * ((Σ_i x_i v_if)^2 - Σ_i x_i^2 v_if^2)
//! ```
//!
//! FM sums it (`Σ_f bi_f` is the pairwise `Σ_{i<j} <v_i, v_j> x_i x_j`);
//! NFM feeds it through an MLP ending in a scalar.
//!
//! All parameters live in one flat vector laid out as
//! `[w0 | w (n) | V (n x d, row-major) | W_0 | b_0 | W_1 | b_1 | ...]`,
//! which is also the layout of gradients and of the on-disk tensors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::math::{bce, sigmoid};
use crate::schema::FieldSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Fm,
    Nfm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Shape of one dense MLP layer and where its tensors sit in the flat
/// parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    weights_at: usize,
    bias_at: usize,
}

impl LayerSpec {
    pub fn weights_range(&self) -> Range<usize> {
        self.weights_at..self.weights_at + self.inputs * self.outputs
    }

    pub fn bias_range(&self) -> Range<usize> {
        self.bias_at..self.bias_at + self.outputs
    }
}

/// Which additive parts of the logit to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mask {
    Full,
    LinearOnly,
    HighOrderOnly,
    /// Full model with the bias-field linear weights `w_1..w_k` treated as 0.
    ZeroBiasLinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionParts {
    pub linear: f64,
    pub high_order: f64,
    pub logit: f64,
    pub score: f64,
}

/// Dropout applied at train time: `bi_rate` on the bi-interaction vector
/// (input of the first MLP layer), `hidden_rate` on every hidden layer output.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Dropout {
    pub bi_rate: f64,
    pub hidden_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Arch,
    num_features: usize,
    dim: usize,
    layers: Vec<LayerSpec>,
    values: Vec<f64>,
    schema_digest: [u8; 32],
    bias_features: Range<usize>,
}

/// Default NFM head: one hidden ReLU layer of this width.
pub const DEFAULT_NFM_HIDDEN: usize = 64;

impl ModelParams {
    /// All-zero parameters. For NFM `hidden` lists the hidden layer widths;
    /// a final scalar identity layer is appended. Ignored for FM.
    pub fn zeros(schema: &FieldSchema, arch: Arch, dim: usize, hidden: &[usize]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let n = schema.num_features();
        let mut offset = 1 + n + n * dim;
        let mut layers = Vec::new();
        if arch == Arch::Nfm {
            let mut inputs = dim;
            let widths = hidden.iter().copied().chain(core::iter::once(1));
            let depth = hidden.len() + 1;
            for (l, outputs) in widths.enumerate() {
                if outputs == 0 {
                    return Err(Error::Config("hidden layer width must be positive".into()));
                }
                let activation = if l + 1 == depth {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                let weights_at = offset;
                let bias_at = weights_at + inputs * outputs;
                offset = bias_at + outputs;
                layers.push(LayerSpec {
                    inputs,
                    outputs,
                    activation,
                    weights_at,
                    bias_at,
                });
                inputs = outputs;
            }
        }
        Ok(Self {
            arch,
            num_features: n,
            dim,
            layers,
            values: vec![0.0; offset],
            schema_digest: schema.digest(),
            bias_features: schema.bias_range(),
        })
    }

    /// `w0 = 0`, `w = 0`, `V ~ N(0, 0.01^2)`, MLP weights `~ N(0, 2/fan_in)`,
    /// MLP biases 0.
    pub fn init<R: Rng + ?Sized>(
        schema: &FieldSchema,
        arch: Arch,
        dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(schema, arch, dim, hidden)?;
        let emb = Normal::new(0.0, 0.01).unwrap();
        let range = p.embeddings_range();
        for v in &mut p.values[range] {
            *v = emb.sample(rng);
        }
        for l in 0..p.layers.len() {
            let spec = p.layers[l].clone();
            let he = Normal::new(0.0, libm::sqrt(2.0 / spec.inputs as f64)).unwrap();
            for v in &mut p.values[spec.weights_range()] {
                *v = he.sample(rng);
            }
        }
        Ok(p)
    }

    /// Reassembles parameters from their parts; used by the model codec.
    pub(crate) fn from_parts(
        arch: Arch,
        num_features: usize,
        dim: usize,
        layer_shapes: &[(usize, usize, Activation)],
        values: Vec<f64>,
        schema_digest: [u8; 32],
        bias_features: Range<usize>,
    ) -> Result<Self> {
        let mut offset = 1 + num_features + num_features * dim;
        let mut layers = Vec::new();
        let mut expected_inputs = dim;
        for &(inputs, outputs, activation) in layer_shapes {
            if inputs != expected_inputs || outputs == 0 {
                return Err(Error::Format(format!("inconsistent MLP layer {inputs}x{outputs}")));
            }
            let weights_at = offset;
            let bias_at = weights_at + inputs * outputs;
            offset = bias_at + outputs;
            layers.push(LayerSpec {
                inputs,
                outputs,
                activation,
                weights_at,
                bias_at,
            });
            expected_inputs = outputs;
        }
        let p = Self {
            arch,
            num_features,
            dim,
            layers,
            values,
            schema_digest,
            bias_features,
        };
        if p.values.len() != offset {
            return Err(Error::Format(format!(
                "expected {offset} parameters, found {}",
                p.values.len()
            )));
        }
        p.check_shape()?;
        Ok(p)
    }

    fn check_shape(&self) -> Result<()> {
        match self.arch {
            Arch::Fm if !self.layers.is_empty() => {
                Err(Error::Dimension("FM model carries MLP layers".into()))
            }
            Arch::Nfm if self.layers.last().map(|l| l.outputs) != Some(1) => {
                Err(Error::Dimension("NFM head must end in a scalar layer".into()))
            }
            _ if self.bias_features.end > self.num_features => {
                Err(Error::Dimension("bias features outside the feature range".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn schema_digest(&self) -> &[u8; 32] {
        &self.schema_digest
    }

    /// Global indices of the bias-field features.
    pub fn bias_features(&self) -> Range<usize> {
        self.bias_features.clone()
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn w0(&self) -> f64 {
        self.values[0]
    }

    pub fn set_w0(&mut self, w0: f64) {
        self.values[0] = w0;
    }

    pub fn linear_range(&self) -> Range<usize> {
        1..1 + self.num_features
    }

    pub fn embeddings_range(&self) -> Range<usize> {
        let start = 1 + self.num_features;
        start..start + self.num_features * self.dim
    }

    /// Range of the bias-field linear weights inside the flat vector.
    pub fn bias_weights_range(&self) -> Range<usize> {
        1 + self.bias_features.start..1 + self.bias_features.end
    }

    pub fn mlp_range(&self) -> Range<usize> {
        self.embeddings_range().end..self.values.len()
    }

    pub fn linear(&self) -> &[f64] {
        &self.values[self.linear_range()]
    }

    pub fn linear_mut(&mut self) -> &mut [f64] {
        let r = self.linear_range();
        &mut self.values[r]
    }

    /// Linear weights of the bias features, `w_1..w_k`.
    pub fn bias_weights(&self) -> &[f64] {
        &self.values[self.bias_weights_range()]
    }

    pub fn bias_weights_mut(&mut self) -> &mut [f64] {
        let r = self.bias_weights_range();
        &mut self.values[r]
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.values[self.embeddings_range()]
    }

    pub fn embeddings_mut(&mut self) -> &mut [f64] {
        let r = self.embeddings_range();
        &mut self.values[r]
    }

    /// Embedding row `v_i`.
    pub fn embedding(&self, feature: usize) -> &[f64] {
        let start = 1 + self.num_features + feature * self.dim;
        &self.values[start..start + self.dim]
    }

    /// Named tensors in storage order.
    pub fn tensors(&self) -> Vec<(&'static str, Range<usize>)> {
        let mut t = vec![
            ("w0", 0..1),
            ("w", self.linear_range()),
            ("V", self.embeddings_range()),
        ];
        for l in &self.layers {
            t.push(("mlp.weight", l.weights_range()));
            t.push(("mlp.bias", l.bias_range()));
        }
        t
    }

    fn check_sample(&self, x: &Sample) -> Result<()> {
        match x.entries.last() {
            Some(&(i, _)) if i as usize >= self.num_features => Err(Error::Dimension(format!(
                "feature index {i} outside model with {} features",
                self.num_features
            ))),
            _ => Ok(()),
        }
    }

    /// Bi-interaction vector plus the per-factor sums `Σ_i x_i v_if`.
    fn bi_interaction(&self, x: &Sample, sums: &mut [f64], bi: &mut [f64]) {
        let d = self.dim;
        sums.iter_mut().for_each(|s| *s = 0.0);
        bi.iter_mut().for_each(|s| *s = 0.0);
        for &(i, xi) in &x.entries {
            let row = self.embedding(i as usize);
            for f in 0..d {
                let t = xi * row[f];
                sums[f] += t;
                bi[f] -= t * t;
            }
        }
        for f in 0..d {
            bi[f] = 0.5 * (sums[f] * sums[f] + bi[f]);
        }
    }

    fn mlp_forward(&self, input: &[f64]) -> f64 {
        let mut a = input.to_vec();
        for l in &self.layers {
            let w = &self.values[l.weights_range()];
            let b = &self.values[l.bias_range()];
            a = (0..l.outputs)
                .map(|o| {
                    let row = &w[o * l.inputs..(o + 1) * l.inputs];
                    let z = b[o] + row.iter().zip(&a).map(|(w, a)| w * a).sum::<f64>();
                    l.activation.apply(z)
                })
                .collect();
        }
        a[0]
    }

    fn high_order(&self, x: &Sample) -> f64 {
        let mut sums = vec![0.0; self.dim];
        let mut bi = vec![0.0; self.dim];
        self.bi_interaction(x, &mut sums, &mut bi);
        match self.arch {
            Arch::Fm => bi.iter().sum(),
            Arch::Nfm => self.mlp_forward(&bi),
        }
    }

    /// Inference-time prediction (dropout off) with the requested parts.
    pub fn predict(&self, x: &Sample, mask: Mask) -> Result<PredictionParts> {
        self.check_sample(x)?;
        let w = self.linear();
        let linear = match mask {
            Mask::HighOrderOnly => 0.0,
            Mask::ZeroBiasLinear => x
                .entries
                .iter()
                .filter(|(i, _)| !self.bias_features.contains(&(*i as usize)))
                .map(|&(i, xi)| w[i as usize] * xi)
                .sum(),
            Mask::Full | Mask::LinearOnly => {
                x.entries.iter().map(|&(i, xi)| w[i as usize] * xi).sum()
            }
        };
        let high_order = match mask {
            Mask::LinearOnly => 0.0,
            _ => self.high_order(x),
        };
        let logit = self.w0() + linear + high_order;
        Ok(PredictionParts {
            linear,
            high_order,
            logit,
            score: sigmoid(logit),
        })
    }

    pub fn logit(&self, x: &Sample) -> Result<f64> {
        self.predict(x, Mask::Full).map(|p| p.logit)
    }

    /// Gradient of the per-sample BCE loss with respect to every parameter,
    /// laid out like [`ModelParams::values`].
    pub fn gradients(&self, x: &Sample, y: f64) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.values.len()];
        self.accumulate_gradient(x, y, 1.0, &mut g, None)?;
        Ok(g)
    }

    /// Adds `scale * ∂l/∂θ` into `grad` and returns the forward pass
    /// `(logit, loss)`. With `dropout` set, inverted dropout masks are drawn
    /// from the RNG for the NFM head.
    pub fn accumulate_gradient(
        &self,
        x: &Sample,
        y: f64,
        scale: f64,
        grad: &mut [f64],
        dropout: Option<(Dropout, &mut dyn RngCore)>,
    ) -> Result<(f64, f64)> {
        self.check_sample(x)?;
        if grad.len() != self.values.len() {
            return Err(Error::Dimension("gradient buffer has the wrong length".into()));
        }
        let d = self.dim;
        let mut sums = vec![0.0; d];
        let mut bi = vec![0.0; d];
        self.bi_interaction(x, &mut sums, &mut bi);

        // forward through the head, keeping what backprop needs
        let mut inputs: Vec<Vec<f64>> = Vec::new();
        let mut drop_masks: Vec<Vec<f64>> = Vec::new();
        let mut pre: Vec<Vec<f64>> = Vec::new();
        let high = match self.arch {
            Arch::Fm => bi.iter().sum::<f64>(),
            Arch::Nfm => {
                let mut rng_opt = dropout;
                let mut a = bi.clone();
                for (l, spec) in self.layers.iter().enumerate() {
                    let mask: Vec<f64> = match rng_opt.as_mut() {
                        Some((rates, rng)) => {
                            let rate = if l == 0 { rates.bi_rate } else { rates.hidden_rate };
                            if rate > 0.0 {
                                let keep = 1.0 - rate;
                                (0..a.len())
                                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                                    .collect()
                            } else {
                                vec![1.0; a.len()]
                            }
                        }
                        None => vec![1.0; a.len()],
                    };
                    let input: Vec<f64> = a.iter().zip(&mask).map(|(a, m)| a * m).collect();
                    let w = &self.values[spec.weights_range()];
                    let b = &self.values[spec.bias_range()];
                    let z: Vec<f64> = (0..spec.outputs)
                        .map(|o| {
                            let row = &w[o * spec.inputs..(o + 1) * spec.inputs];
                            b[o] + row.iter().zip(&input).map(|(w, a)| w * a).sum::<f64>()
                        })
                        .collect();
                    a = z.iter().map(|&z| spec.activation.apply(z)).collect();
                    inputs.push(input);
                    drop_masks.push(mask);
                    pre.push(z);
                }
                a[0]
            }
        };

        let linear: f64 = x
            .entries
            .iter()
            .map(|&(i, xi)| self.values[1 + i as usize] * xi)
            .sum();
        let logit = self.values[0] + linear + high;
        let score = sigmoid(logit);
        let loss = bce(score, y);
        let residual = (score - y) * scale;

        grad[0] += residual;
        for &(i, xi) in &x.entries {
            grad[1 + i as usize] += residual * xi;
        }

        // ∂l/∂bi_f
        let g_bi: Vec<f64> = match self.arch {
            Arch::Fm => vec![residual; d],
            Arch::Nfm => {
                let depth = self.layers.len();
                let mut delta: Vec<f64> = vec![residual * self.layers[depth - 1]
                    .activation
                    .derivative(pre[depth - 1][0])];
                for l in (0..depth).rev() {
                    let spec = &self.layers[l];
                    let w = &self.values[spec.weights_range()];
                    let input = &inputs[l];
                    let wr = spec.weights_range();
                    for o in 0..spec.outputs {
                        let row = wr.start + o * spec.inputs;
                        for (k, a) in input.iter().enumerate() {
                            grad[row + k] += delta[o] * a;
                        }
                        grad[spec.bias_at + o] += delta[o];
                    }
                    let mut back = vec![0.0; spec.inputs];
                    for o in 0..spec.outputs {
                        let row = &w[o * spec.inputs..(o + 1) * spec.inputs];
                        for (k, wk) in row.iter().enumerate() {
                            back[k] += wk * delta[o];
                        }
                    }
                    for (b, m) in back.iter_mut().zip(&drop_masks[l]) {
                        *b *= m;
                    }
                    if l > 0 {
                        let prev = &self.layers[l - 1];
                        for (b, z) in back.iter_mut().zip(&pre[l - 1]) {
                            *b *= prev.activation.derivative(*z);
                        }
                    }
                    delta = back;
                }
                delta
            }
        };

        // ∂bi_f/∂v_if = x_i Σ_j x_j v_jf - x_i^2 v_if
        let v_start = 1 + self.num_features;
        for &(i, xi) in &x.entries {
            let row = v_start + i as usize * d;
            for f in 0..d {
                let v = self.values[row + f];
                grad[row + f] += g_bi[f] * (xi * sums[f] - xi * xi * v);
            }
        }
        Ok((logit, loss))
    }
}
