use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Linear => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }

    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Tanh => z.mapv(f64::tanh),
            Activation::Linear => z.clone(),
        }
    }

    /// Multiplies `grad` in place by the derivative, given pre-activation `z`
    /// and post-activation `a`.
    fn backprop(self, grad: &mut Array2<f64>, z: &Array2<f64>, a: &Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(grad)
                .and(z)
                .for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0
                    }
                }),
            Activation::Tanh => Zip::from(grad).and(a).for_each(|g, &a| *g *= 1.0 - a * a),
            Activation::Linear => {}
        }
    }
}

/// Fully connected layer computing `x · W + b`, `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, bound: f64, rng: &mut R) -> Self {
        let mut draw = || rng.random_range(-bound..=bound);
        let weights = Array2::from_shape_simple_fn((inputs, outputs), &mut draw);
        let bias = Array1::from_shape_simple_fn(outputs, &mut draw);
        Self { weights, bias }
    }
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weights.nrows(), l.weights.ncols()))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }
}

/// Activations recorded by [`Mlp::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to every layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    output: Array2<f64>,
    sizes: Vec<usize>,
    generation: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Dense feed-forward network: ReLU-family hidden layers, configurable output.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    hidden: Activation,
    output: Activation,
    /// Bumped on every parameter mutation; caches from older generations are
    /// rejected by `backward`.
    generation: u64,
}

/// Equal architecture and parameters; the cache generation is ignored.
impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.hidden == other.hidden && self.output == other.output && self.layers == other.layers
    }
}

impl Mlp {
    /// Hidden layers uniform in `±1/sqrt(fan_in)`, last layer in `±final_bound`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        final_bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        validate_sizes(sizes)?;
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = if i == last {
                    final_bound
                } else {
                    1.0 / (w[0] as f64).sqrt()
                };
                Dense::uniform(w[0], w[1], bound, rng)
            })
            .collect();
        Ok(Self {
            layers,
            hidden,
            output,
            generation: 0,
        })
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        validate_sizes(sizes)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            hidden,
            output,
            generation: 0,
        })
    }

    pub fn from_layers(layers: Vec<Dense>, hidden: Activation, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::validation("mlp.layers", "at least one layer required"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            check_len("mlp layer chaining", pair[0].weights.ncols(), pair[1].weights.nrows())
                .map_err(|_| {
                    Error::validation(format!("mlp.layers[{}]", i + 1), "input width mismatch")
                })?;
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.ncols() {
                return Err(Error::validation(format!("mlp.layers[{i}].bias"), "length mismatch"));
            }
        }
        let net = Self {
            layers,
            hidden,
            output,
            generation: 0,
        };
        net.check_finite()?;
        Ok(net)
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].weights.nrows())
            .chain(self.layers.iter().map(|l| l.weights.ncols()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.ncols()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    /// Order-sensitive fingerprint of every parameter bit pattern (FNV-1a).
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params() {
            for b in p.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.sizes() == other.sizes() && self.hidden == other.hidden && self.output == other.output
    }

    /// Mutable access to the layers. Invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer{i}.weights")));
            }
            if l.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer{i}.bias")));
            }
        }
        Ok(())
    }

    /// Batched forward pass over rows of `input`.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        check_len("mlp input width", self.input_dim(), input.ncols())?;
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mlp input".into()));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = x.dot(&layer.weights) + &layer.bias;
            let act = if i == last { self.output } else { self.hidden };
            let a = act.apply(&z);
            inputs.push(x);
            pre_activations.push(z);
            x = a;
        }
        let cache = ForwardCache {
            inputs,
            pre_activations,
            output: x.clone(),
            sizes: self.sizes(),
            generation: self.generation,
        };
        Ok((x, cache))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_len("mlp input width", self.input_dim(), input.ncols())?;
        let last = self.layers.len() - 1;
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = x.dot(&layer.weights) + &layer.bias;
            x = if i == last { self.output } else { self.hidden }.apply(&z);
        }
        Ok(x)
    }

    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Contract(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of `sum(output * output_grad)` with respect to every
    /// parameter and to the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<'_, f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if cache.generation != self.generation || cache.sizes != self.sizes() {
            return Err(Error::Contract(
                "forward cache does not belong to this network state".into(),
            ));
        }
        if output_grad.dim() != cache.output.dim() {
            return Err(Error::Dimension {
                what: "output gradient",
                expected: cache.output.len(),
                got: output_grad.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.to_owned();
        for i in (0..self.layers.len()).rev() {
            let act = if i == last { self.output } else { self.hidden };
            let post = if i == last {
                &cache.output
            } else {
                &cache.inputs[i + 1]
            };
            act.backprop(&mut delta, &cache.pre_activations[i], post);
            let weights = cache.inputs[i].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            let next = delta.dot(&self.layers[i].weights.t());
            grads.push(Dense { weights, bias });
            delta = next;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::validation("mlp.sizes", "need at least input and output sizes"));
    }
    if sizes.contains(&0) {
        return Err(Error::validation("mlp.sizes", "layer widths must be > 0"));
    }
    Ok(())
}

/// `target <- tau * source + (1 - tau) * target`, parameter-wise.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !target.same_architecture(source) {
        return Err(Error::Contract(format!(
            "soft update between architectures {:?} and {:?}",
            target.sizes(),
            source.sizes()
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::validation("tau", "must lie in [0, 1]"));
    }
    for (t, s) in target.layers_mut().iter_mut().zip(&source.layers) {
        Zip::from(&mut t.weights)
            .and(&s.weights)
            .for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
        Zip::from(&mut t.bias)
            .and(&s.bias)
            .for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
    }
    Ok(())
}
