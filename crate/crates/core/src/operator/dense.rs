use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Affine layer `y = W x + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weights: Array2::zeros((n_out, n_in)),
            bias: Array1::zeros(n_out),
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Fully connected network; hidden layers use the activation, the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
}

/// Layer inputs saved by the forward pass for backpropagation.
pub(crate) struct ForwardCache {
    inputs: Vec<Array2<f64>>,
}

impl DenseNetwork {
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("a network needs input and output sizes".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::Config(format!("zero-size layer in {sizes:?}")));
        }
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            layers,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        for layer in &mut net.layers {
            let (n_out, n_in) = layer.weights.dim();
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-limit..limit));
        }
        Ok(net)
    }

    /// Rebuild from explicit layers; shapes must chain.
    pub fn from_layers(activation: Activation, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("no layers".into()));
        }
        let mut sizes = vec![layers[0].weights.ncols()];
        for l in &layers {
            if l.weights.ncols() != *sizes.last().unwrap() || l.bias.len() != l.weights.nrows() {
                return Err(Error::Shape("layer shapes do not chain".into()));
            }
            sizes.push(l.weights.nrows());
        }
        if sizes.contains(&0) {
            return Err(Error::Shape("zero-size layer".into()));
        }
        Ok(Self {
            sizes,
            activation,
            layers,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    /// Batch forward pass; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    pub(crate) fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, ForwardCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            if l != last {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            inputs.push(a);
            a = z;
        }
        (a, ForwardCache { inputs })
    }

    /// Gradients of every layer given `d_out = dL/d(output)`.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>) -> Vec<Layer> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            let weights = delta.t().dot(input);
            let bias = delta.sum_axis(Axis(0));
            grads.push(Layer { weights, bias });
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights);
                let act = self.activation;
                back.zip_mut_with(input, |d, &a| *d *= act.derivative_from_output(a));
                delta = back;
            }
        }
        grads.reverse();
        grads
    }
}
