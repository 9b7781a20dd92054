use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation and the activated value.
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
        }
    }
}

/// Dense layer `y = act(W x + b)` with `W` stored `[out x in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.nrows() {
            return Err(Error::shape("layer bias", weights.nrows(), bias.len()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Feed-forward network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    /// Input fed to each layer; `inputs[0]` is the network input.
    pub inputs: Vec<Array2<f64>>,
    pub pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// Builds a network, checking that layer dimensions chain and every entry is finite.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::shape(
                    format!("layer {} input", k + 1),
                    pair[0].out_dim(),
                    pair[1].in_dim(),
                ));
            }
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape(format!("layer {k} bias"), layer.out_dim(), layer.bias.len()));
            }
            if !layer.weights.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("layer {k} parameters")));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights, zero biases. `sizes` lists every width including input and output.
    pub fn init<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot bound");
                let weights = Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(rng));
                let activation = if k + 1 == n { output } else { hidden };
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Self { layers }
    }

    /// Same shape, all parameters zero. Used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.dim() == b.weights.dim() && a.bias.len() == b.bias.len())
    }

    /// Batched forward pass over the rows of `input`.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<Activations> {
        if input.ncols() != self.input_dim() {
            return Err(Error::shape("network input", self.input_dim(), input.ncols()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = input.to_owned();
        for layer in &self.layers {
            let mut z = current.dot(&layer.weights.t());
            z += &layer.bias;
            let act = layer.activation;
            let post = z.mapv(|v| act.apply(v));
            inputs.push(std::mem::replace(&mut current, post));
            pre.push(z);
        }
        Ok(Activations {
            inputs,
            pre,
            output: current,
        })
    }

    /// Output only, without the activation record.
    pub fn predict(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.input_dim() {
            return Err(Error::shape("network input", self.input_dim(), input.ncols()));
        }
        let mut current = input.to_owned();
        for layer in &self.layers {
            let mut z = current.dot(&layer.weights.t());
            z += &layer.bias;
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            current = z;
        }
        Ok(current)
    }

    /// Single-sample convenience wrapper around [`Mlp::predict`].
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|_| Error::shape("network input", self.input_dim(), input.len()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Reverse-mode gradients of `sum(output * output_gradient)` with respect to every
    /// parameter and the input. Batch rows are summed, not averaged.
    pub fn backward(
        &self,
        acts: &Activations,
        output_gradient: ArrayView2<'_, f64>,
    ) -> Result<(Mlp, Array2<f64>)> {
        if acts.pre.len() != self.layers.len() {
            return Err(Error::shape("activation record", self.layers.len(), acts.pre.len()));
        }
        if output_gradient.dim() != acts.output.dim() {
            return Err(Error::shape(
                "output gradient",
                acts.output.len(),
                output_gradient.len(),
            ));
        }
        let mut grads = self.zeros_like();
        let mut upstream = output_gradient.to_owned();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let post = if k + 1 == self.layers.len() {
                &acts.output
            } else {
                &acts.inputs[k + 1]
            };
            let act = layer.activation;
            let mut d_pre = upstream;
            if act != Activation::Identity {
                Zip::from(&mut d_pre)
                    .and(&acts.pre[k])
                    .and(post)
                    .for_each(|d, &z, &y| *d *= act.derivative(z, y));
            }
            grads.layers[k].weights = d_pre.t().dot(&acts.inputs[k]);
            grads.layers[k].bias = d_pre.sum_axis(Axis(0));
            upstream = d_pre.dot(&layer.weights);
        }
        Ok((grads, upstream))
    }

    /// Flat iteration over all parameters in layer order (weights then bias).
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn squared_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    /// `self += alpha * other`; shapes must match.
    pub fn add_scaled(&mut self, other: &Mlp, alpha: f64) {
        assert!(self.same_shape(other), "add_scaled on mismatched networks");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(alpha, &b.weights);
            a.bias.scaled_add(alpha, &b.bias);
        }
    }
}
