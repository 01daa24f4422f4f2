//! Dense network that can be cut between any two layers.
//!
//! Layer `i` maps `x ↦ act(x W_i + b_i)`; the last layer has no activation
//! and feeds a softmax cross-entropy loss. Cut `ε` puts layers `0..ε` on the
//! vehicle and `ε..L` on the edge server, so `ε = 0` sends raw inputs and
//! `ε = L` sends logits.

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
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn grad_from_output(self, a: f64) -> f64 {
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

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `inputs × outputs`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients for a contiguous run of layers starting at `first`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub first: usize,
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitModel {
    layers: Vec<Dense>,
    activation: Activation,
    /// Bumped whenever vehicle-side parameters change.
    version: u64,
}

/// What the vehicle keeps between its forward and backward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    cut: usize,
    version: u64,
    /// `outputs[0]` is the input batch, `outputs[i]` the output of layer `i − 1`.
    outputs: Vec<Array2<f64>>,
}

impl ActivationCache {
    /// The smashed data `A` sent to the edge server.
    pub fn smashed(&self) -> &Array2<f64> {
        self.outputs.last().expect("cache always holds the input")
    }

    pub fn cut(&self) -> usize {
        self.cut
    }
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (batch, classes) = logits.dim();
    if labels.len() != batch {
        return Err(Error::ShapeMismatch {
            expected: format!("{batch} labels"),
            got: format!("{}", labels.len()),
        });
    }
    if batch == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (mut row, &y) in grad.axis_iter_mut(Axis(0)).zip(labels) {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
        loss -= row[y].ln();
        row[y] -= 1.0;
    }
    let n = batch as f64;
    grad /= n;
    Ok((loss / n, grad))
}

impl SplitModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Dense {
                    weight: Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-limit..limit)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self {
            layers,
            activation,
            version: 0,
        })
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("model needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].weight.ncols() != pair[1].weight.nrows() {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer {} input {}", i + 1, pair[0].weight.ncols()),
                    got: format!("{}", pair[1].weight.nrows()),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.weight.ncols() {
                return Err(Error::invalid("bias length differs from layer width"));
            }
        }
        Ok(Self {
            layers,
            activation,
            version: 0,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of dense layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.depth() - 1].weight.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_cut(&self, cut: usize) -> Result<()> {
        if cut > self.depth() {
            return Err(Error::invalid(format!("cut {cut} beyond depth {}", self.depth())));
        }
        Ok(())
    }

    fn flatten_range(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers[range] {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// All parameters, layer by layer (weights row-major, then biases).
    pub fn flatten(&self) -> Vec<f64> {
        self.flatten_range(0..self.depth())
    }

    /// Parameters of layers `0..cut`.
    pub fn vehicle_params(&self, cut: usize) -> Result<Vec<f64>> {
        self.check_cut(cut)?;
        Ok(self.flatten_range(0..cut))
    }

    /// Parameters of layers `cut..L`.
    pub fn server_params(&self, cut: usize) -> Result<Vec<f64>> {
        self.check_cut(cut)?;
        Ok(self.flatten_range(cut..self.depth()))
    }

    /// Replace layer `i`.
    pub fn set_layer(&mut self, i: usize, layer: Dense) -> Result<()> {
        let old = &self.layers[i];
        if old.weight.dim() != layer.weight.dim() || old.bias.len() != layer.bias.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", old.weight.dim()),
                got: format!("{:?}", layer.weight.dim()),
            });
        }
        self.layers[i] = layer;
        self.version += 1;
        Ok(())
    }

    fn has_activation(&self, i: usize) -> bool {
        i + 1 < self.depth()
    }

    fn layer_forward(&self, i: usize, x: ArrayView2<f64>) -> Array2<f64> {
        let l = &self.layers[i];
        let mut z = x.dot(&l.weight) + &l.bias;
        if self.has_activation(i) {
            self.activation.apply(&mut z);
        }
        z
    }

    /// Logits of the whole network.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x, 0)?;
        let mut h = x.clone();
        for i in 0..self.depth() {
            h = self.layer_forward(i, h.view());
        }
        Ok(h)
    }

    fn check_input(&self, x: &Array2<f64>, layer: usize) -> Result<()> {
        let expected = if layer < self.depth() {
            self.layers[layer].weight.nrows()
        } else {
            self.num_classes()
        };
        if x.ncols() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected} features"),
                got: format!("{}", x.ncols()),
            });
        }
        Ok(())
    }

    /// Backpropagate `grad_out` (gradient at the output of layer `last − 1`)
    /// through layers `first..last`, given their cached outputs.
    /// `outputs[j]` is the input of layer `first + j`.
    fn backprop(
        &self,
        first: usize,
        last: usize,
        outputs: &[Array2<f64>],
        mut grad: Array2<f64>,
        need_input_grad: bool,
    ) -> (Gradients, Array2<f64>) {
        let mut layers = Vec::with_capacity(last - first);
        for i in (first..last).rev() {
            let out = &outputs[i - first + 1];
            if self.has_activation(i) {
                let act = self.activation;
                grad.zip_mut_with(out, |g, &a| *g *= act.grad_from_output(a));
            }
            let input = &outputs[i - first];
            let d_w = input.t().dot(&grad);
            let d_b = grad.sum_axis(Axis(0));
            if i > first || need_input_grad {
                grad = grad.dot(&self.layers[i].weight.t());
            }
            layers.push(Dense { weight: d_w, bias: d_b });
        }
        layers.reverse();
        (Gradients { first, layers }, grad)
    }

    fn apply(&mut self, grads: &Gradients, lr: f64) {
        for (j, g) in grads.layers.iter().enumerate() {
            let l = &mut self.layers[grads.first + j];
            l.weight.scaled_add(-lr, &g.weight);
            l.bias.scaled_add(-lr, &g.bias);
        }
    }

    /// Loss and gradients of every parameter on one batch, computed in a
    /// single unsplit pass.
    pub fn full_gradients(&self, x: &Array2<f64>, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.check_input(x, 0)?;
        let mut outputs = vec![x.clone()];
        for i in 0..self.depth() {
            let next = self.layer_forward(i, outputs[i].view());
            outputs.push(next);
        }
        let (loss, grad) = softmax_cross_entropy(outputs.last().unwrap(), labels)?;
        let (grads, _) = self.backprop(0, self.depth(), &outputs, grad, false);
        Ok((loss, grads))
    }

    /// One plain SGD step on the whole network; returns the batch loss.
    pub fn sgd_step(&mut self, x: &Array2<f64>, labels: &[usize], lr: f64) -> Result<f64> {
        let (loss, grads) = self.full_gradients(x, labels)?;
        self.apply(&grads, lr);
        self.version += 1;
        Ok(loss)
    }

    /// Mean loss on a dataset given as one matrix.
    pub fn loss(&self, x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
        Ok(softmax_cross_entropy(&self.forward(x)?, labels)?.0)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        let logits = self.forward(x)?;
        Ok(logits
            .axis_iter(Axis(0))
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    pub fn accuracy(&self, x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

/// Run the vehicle-side layers `0..cut` on a batch.
pub fn vehicle_forward(model: &SplitModel, cut: usize, x: &Array2<f64>) -> Result<ActivationCache> {
    model.check_cut(cut)?;
    model.check_input(x, 0)?;
    let mut outputs = vec![x.clone()];
    for i in 0..cut {
        let next = model.layer_forward(i, outputs[i].view());
        outputs.push(next);
    }
    Ok(ActivationCache {
        cut,
        version: model.version,
        outputs,
    })
}

/// Loss, gradient with respect to `a` and gradients of layers `cut..L`,
/// without changing the model.
pub fn server_gradients(
    model: &SplitModel,
    cut: usize,
    a: &Array2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>, Gradients)> {
    model.check_cut(cut)?;
    model.check_input(a, cut)?;
    let mut outputs = vec![a.clone()];
    for i in cut..model.depth() {
        let next = model.layer_forward(i, outputs[i - cut].view());
        outputs.push(next);
    }
    let (loss, grad) = softmax_cross_entropy(outputs.last().unwrap(), labels)?;
    let (grads, grad_a) = model.backprop(cut, model.depth(), &outputs, grad, true);
    Ok((loss, grad_a, grads))
}

/// Server step: forward through layers `cut..L`, loss, backward, then an SGD
/// update of the server layers. `grad_A` uses the weights from before the
/// update.
pub fn server_forward_backward(
    model: &mut SplitModel,
    cut: usize,
    a: &Array2<f64>,
    labels: &[usize],
    lr: f64,
) -> Result<(f64, Array2<f64>)> {
    let (loss, grad_a, grads) = server_gradients(model, cut, a, labels)?;
    model.apply(&grads, lr);
    Ok((loss, grad_a))
}

/// Gradients of layers `0..cut` from the smashed-data gradient.
pub fn vehicle_gradients(model: &SplitModel, cache: &ActivationCache, grad_a: &Array2<f64>) -> Result<Gradients> {
    if cache.version != model.version {
        return Err(Error::StaleActivation(format!(
            "cache from version {}, model at {}",
            cache.version, model.version
        )));
    }
    if grad_a.dim() != cache.smashed().dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", cache.smashed().dim()),
            got: format!("{:?}", grad_a.dim()),
        });
    }
    Ok(model.backprop(0, cache.cut, &cache.outputs, grad_a.clone(), false).0)
}

/// Vehicle step: chain `grad_a` through layers `0..cut` and apply SGD.
pub fn vehicle_backward(model: &mut SplitModel, cache: &ActivationCache, grad_a: &Array2<f64>, lr: f64) -> Result<()> {
    let grads = vehicle_gradients(model, cache, grad_a)?;
    model.apply(&grads, lr);
    model.version += 1;
    Ok(())
}

/// One split step with separate vehicle- and server-side models. Returns the
/// batch loss.
pub fn split_step(
    vehicle: &mut SplitModel,
    server: &mut SplitModel,
    cut: usize,
    x: &Array2<f64>,
    labels: &[usize],
    lr: f64,
) -> Result<f64> {
    let cache = vehicle_forward(vehicle, cut, x)?;
    let (loss, grad_a) = server_forward_backward(server, cut, cache.smashed(), labels, lr)?;
    vehicle_backward(vehicle, &cache, &grad_a, lr)?;
    Ok(loss)
}
