//! Unstacked DeepONet: one branch network with `p` outputs, one trunk
//! network with `p` outputs, prediction `Σ_k b_k τ_k + b0`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::data::{InputEncoding, OperatorDataset};
use super::dense::{Activation, DenseNetwork, Layer};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct DeepONet {
    branch: DenseNetwork,
    trunk: DenseNetwork,
    b0: f64,
    encoding: InputEncoding,
}

/// Gradient of the loss, laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub branch: Vec<Layer>,
    pub trunk: Vec<Layer>,
    pub b0: f64,
}

/// Network shape shared by [`init_model`] and the zero model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub p: usize,
    pub branch_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            p: 40,
            branch_hidden: vec![64, 64],
            trunk_hidden: vec![64, 64],
            activation: Activation::Tanh,
        }
    }
}

impl Architecture {
    fn sizes(&self, encoding: &InputEncoding) -> Result<(Vec<usize>, Vec<usize>)> {
        if self.p == 0 {
            return Err(Error::Config("p must be at least 1".into()));
        }
        let mut branch = vec![encoding.branch_dim()];
        branch.extend(&self.branch_hidden);
        branch.push(self.p);
        let mut trunk = vec![1];
        trunk.extend(&self.trunk_hidden);
        trunk.push(self.p);
        Ok((branch, trunk))
    }
}

/// Glorot-initialized model, deterministic in `seed`; `b0 = 0`.
pub fn init_model(encoding: InputEncoding, arch: &Architecture, seed: u64) -> Result<DeepONet> {
    let (bs, ts) = arch.sizes(&encoding)?;
    let mut rng = rng_from_seed(seed);
    let branch = DenseNetwork::glorot(&bs, arch.activation, &mut rng)?;
    let trunk = DenseNetwork::glorot(&ts, arch.activation, &mut rng)?;
    DeepONet::new(branch, trunk, 0.0, encoding)
}

fn flatten_layers(layers: &[Layer], out: &mut Vec<f64>) {
    for l in layers {
        out.extend(l.weights.iter());
        out.extend(l.bias.iter());
    }
}

fn load_layers(layers: &mut [Layer], src: &mut impl Iterator<Item = f64>) {
    for l in layers {
        l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|w| {
            *w = src.next().expect("parameter vector too short");
        });
    }
}

impl Gradient {
    /// Flat vector in [`DeepONet::parameters`] order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::new();
        flatten_layers(&self.branch, &mut v);
        flatten_layers(&self.trunk, &mut v);
        v.push(self.b0);
        v
    }
}

impl DeepONet {
    pub fn new(branch: DenseNetwork, trunk: DenseNetwork, b0: f64, encoding: InputEncoding) -> Result<Self> {
        if branch.input_dim() != encoding.branch_dim() {
            return Err(Error::Shape(format!(
                "branch takes {} inputs, encoding provides {}",
                branch.input_dim(),
                encoding.branch_dim()
            )));
        }
        if trunk.input_dim() != 1 {
            return Err(Error::Shape("trunk must take a single time input".into()));
        }
        if branch.output_dim() != trunk.output_dim() {
            return Err(Error::Shape(format!(
                "branch outputs {} features, trunk {}",
                branch.output_dim(),
                trunk.output_dim()
            )));
        }
        Ok(Self {
            branch,
            trunk,
            b0,
            encoding,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(encoding: InputEncoding, arch: &Architecture) -> Result<Self> {
        let (bs, ts) = arch.sizes(&encoding)?;
        Self::new(
            DenseNetwork::zeros(&bs, arch.activation)?,
            DenseNetwork::zeros(&ts, arch.activation)?,
            0.0,
            encoding,
        )
    }

    pub fn branch(&self) -> &DenseNetwork {
        &self.branch
    }

    pub fn trunk(&self) -> &DenseNetwork {
        &self.trunk
    }

    pub fn branch_mut(&mut self) -> &mut DenseNetwork {
        &mut self.branch
    }

    pub fn trunk_mut(&mut self) -> &mut DenseNetwork {
        &mut self.trunk
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn set_b0(&mut self, b0: f64) {
        self.b0 = b0;
    }

    pub fn p(&self) -> usize {
        self.branch.output_dim()
    }

    pub fn encoding(&self) -> &InputEncoding {
        &self.encoding
    }

    pub fn n_params(&self) -> usize {
        self.branch.n_params() + self.trunk.n_params() + 1
    }

    /// Flat parameters: branch layers (weights row-major, then bias), trunk
    /// layers likewise, then `b0`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        flatten_layers(self.branch.layers(), &mut v);
        flatten_layers(self.trunk.layers(), &mut v);
        v.push(self.b0);
        v
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.n_params()
            )));
        }
        let mut it = params.iter().copied();
        load_layers(self.branch.layers_mut(), &mut it);
        load_layers(self.trunk.layers_mut(), &mut it);
        self.b0 = it.next().unwrap();
        Ok(())
    }

    /// `G(u)(y)` for one input function (sensor values, system blocks
    /// concatenated) and one raw output time `y`.
    pub fn forward(&self, branch_in: &[f64], y: f64) -> Result<f64> {
        let x = ArrayView2::from_shape((1, branch_in.len()), branch_in)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let out = self.predict(x, &[y])?;
        Ok(out[(0, 0)])
    }

    /// Predictions for every (input row, output time) combination.
    pub fn predict(&self, branch_in: ArrayView2<f64>, times: &[f64]) -> Result<Array2<f64>> {
        if branch_in.ncols() != self.branch.input_dim() {
            return Err(Error::Shape(format!(
                "branch input has {} values, model expects {}",
                branch_in.ncols(),
                self.branch.input_dim()
            )));
        }
        let trunk_in: Array1<f64> = times.iter().map(|&t| self.encoding.scale_time(t)).collect();
        let b = self.branch.forward(branch_in);
        let t = self.trunk.forward(trunk_in.insert_axis(Axis(1)).view());
        Ok(Self::combine(&b, &t, self.b0))
    }

    fn combine(b: &Array2<f64>, t: &Array2<f64>, b0: f64) -> Array2<f64> {
        let mut out = b.dot(&t.t());
        out += b0;
        out
    }

    fn check_data(&self, data: &OperatorDataset) -> Result<()> {
        if data.n_pairs() == 0 {
            return Err(Error::Data("empty dataset".into()));
        }
        if data.branch().ncols() != self.branch.input_dim() {
            return Err(Error::Shape(format!(
                "dataset rows have {} values, model expects {}",
                data.branch().ncols(),
                self.branch.input_dim()
            )));
        }
        Ok(())
    }

    /// Mean squared error over all observed pairs.
    pub fn mse_loss(&self, data: &OperatorDataset) -> Result<f64> {
        self.check_data(data)?;
        let b = self.branch.forward(data.branch().view());
        let t = self.trunk.forward(data.trunk_input().view());
        let pred = Self::combine(&b, &t, self.b0);
        Ok(masked_sse(&pred, data) / data.n_pairs() as f64)
    }

    /// Loss and its exact gradient by reverse-mode differentiation.
    pub fn loss_and_grad(&self, data: &OperatorDataset) -> Result<(f64, Gradient)> {
        self.check_data(data)?;
        let (b, bc) = self.branch.forward_cached(data.branch().view());
        let trunk_in = data.trunk_input();
        let (t, tc) = self.trunk.forward_cached(trunk_in.view());
        let pred = Self::combine(&b, &t, self.b0);
        let n = data.n_pairs() as f64;

        // dL/dpred = 2 (pred - target) / n on observed pairs
        let mut g = pred;
        g -= data.targets();
        g *= data.mask();
        let loss = g.iter().map(|r| r * r).sum::<f64>() / n;
        g *= 2.0;
        let d_b0 = g.sum() / n;
        g /= n;

        let d_branch_out = g.dot(&t);
        let d_trunk_out = g.t().dot(&b);
        Ok((
            loss,
            Gradient {
                branch: self.branch.backward(&bc, d_branch_out),
                trunk: self.trunk.backward(&tc, d_trunk_out),
                b0: d_b0,
            },
        ))
    }

    pub fn grad_loss(&self, data: &OperatorDataset) -> Result<Gradient> {
        Ok(self.loss_and_grad(data)?.1)
    }
}

fn masked_sse(pred: &Array2<f64>, data: &OperatorDataset) -> f64 {
    ndarray::Zip::from(pred)
        .and(data.targets())
        .and(data.mask())
        .fold(0.0, |acc, &p, &y, &m| {
            let r = (p - y) * m;
            acc + r * r
        })
}

/// Central-difference gradient of the loss, one parameter at a time.
pub fn finite_diff_grad(model: &DeepONet, data: &OperatorDataset, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    model.check_data(data)?;
    let base = model.parameters();
    let mut probe = model.clone();
    let mut params = base.clone();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        params[i] = base[i] + eps;
        probe.set_parameters(&params)?;
        let up = probe.mse_loss(data)?;
        params[i] = base[i] - eps;
        probe.set_parameters(&params)?;
        let down = probe.mse_loss(data)?;
        params[i] = base[i];
        grad.push((up - down) / (2.0 * eps));
    }
    Ok(grad)
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkRecord {
    layer_sizes: Vec<usize>,
    /// One row-major `(out, in)` array per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// JSON checkpoint document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    version: u32,
    activation: Activation,
    p: usize,
    b0: f64,
    encoding: InputEncoding,
    branch: NetworkRecord,
    trunk: NetworkRecord,
}

fn record(net: &DenseNetwork) -> NetworkRecord {
    NetworkRecord {
        layer_sizes: net.sizes().to_vec(),
        weights: net.layers().iter().map(|l| l.weights.iter().copied().collect()).collect(),
        biases: net.layers().iter().map(|l| l.bias.to_vec()).collect(),
    }
}

fn restore(rec: &NetworkRecord, activation: Activation) -> Result<DenseNetwork> {
    let n = rec.layer_sizes.len();
    if n < 2 || rec.weights.len() != n - 1 || rec.biases.len() != n - 1 {
        return Err(Error::Data("checkpoint layer count mismatch".into()));
    }
    let layers = rec
        .layer_sizes
        .windows(2)
        .zip(rec.weights.iter().zip(&rec.biases))
        .map(|(w, (wt, b))| {
            let weights = Array2::from_shape_vec((w[1], w[0]), wt.clone())
                .map_err(|e| Error::Data(format!("checkpoint weights: {e}")))?;
            if b.len() != w[1] {
                return Err(Error::Data("checkpoint bias length mismatch".into()));
            }
            Ok(Layer {
                weights,
                bias: Array1::from(b.clone()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let all_finite = layers
        .iter()
        .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()));
    if !all_finite {
        return Err(Error::Data("checkpoint contains non-finite parameters".into()));
    }
    DenseNetwork::from_layers(activation, layers)
}

impl DeepONet {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            activation: self.branch.activation(),
            p: self.p(),
            b0: self.b0,
            encoding: self.encoding.clone(),
            branch: record(&self.branch),
            trunk: record(&self.trunk),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!("unsupported checkpoint version {}", ck.version)));
        }
        let model = Self::new(
            restore(&ck.branch, ck.activation)?,
            restore(&ck.trunk, ck.activation)?,
            ck.b0,
            ck.encoding.clone(),
        )?;
        if model.p() != ck.p {
            return Err(Error::Data("checkpoint p does not match layer sizes".into()));
        }
        Ok(model)
    }
}
