use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::config::{NetworkConfig, KERNEL_SIZE};
use super::ops::{self, Phase};

/// Trainable weights and bias of a dense or convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Kernels `[maps, channels, k, k]`, bias `[maps]`.
    Conv(Params),
    Relu,
    MaxPool,
    Flatten,
    /// Weights `[out, in]`, bias `[out]`.
    Dense(Params),
    Dropout(f64),
    Softmax,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Relu => "relu",
            Layer::MaxPool => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Dropout(_) => "dropout",
            Layer::Softmax => "softmax",
        }
    }

    pub fn params(&self) -> Option<&Params> {
        match self {
            Layer::Conv(p) | Layer::Dense(p) => Some(p),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<&mut Params> {
        match self {
            Layer::Conv(p) | Layer::Dense(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
}

/// What a layer remembers from the forward pass for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerCache {
    None,
    PoolArgmax(Vec<usize>),
    DropoutMask(Tensor),
}

/// Input, per-layer outputs and per-layer caches of one forward pass.
///
/// `outputs[i]` is the output of layer `i`: pre-activations `z` for conv and
/// dense layers, activations `a` after ReLU, and class probabilities for the
/// final softmax.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Tensor,
    pub outputs: Vec<Tensor>,
    pub caches: Vec<LayerCache>,
}

impl ForwardTrace {
    pub fn probabilities(&self) -> &Tensor {
        self.outputs.last().expect("network has layers")
    }
}

pub enum ForwardMode<'a> {
    Eval,
    Train(&'a mut Rng),
    /// Replays the dropout masks recorded in an earlier training trace.
    Frozen(&'a ForwardTrace),
}

/// Per-layer gradients aligned with the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<Params>>,
}

impl Gradients {
    /// Gradient tensors in [`Network::parameters`] order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flatten().flat_map(|p| [&p.weights, &p.bias]).collect()
    }
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<Tensor> {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    Tensor::random_uniform(shape, limit, rng)
}

impl Network {
    /// Builds `[conv + relu + pool] × convs, flatten,
    /// [dense + relu + dropout] × hidden, dense, softmax` with Glorot-uniform
    /// weights and zero biases.
    pub fn build(config: NetworkConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let k = KERNEL_SIZE;
        let mut layers = Vec::new();
        let mut channels = 1;
        for _ in 0..config.num_convs {
            let maps = config.feature_maps;
            layers.push(Layer::Conv(Params {
                weights: glorot(&[maps, channels, k, k], channels * k * k, maps * k * k, rng)?,
                bias: Tensor::zeros(&[maps])?,
            }));
            layers.push(Layer::Relu);
            layers.push(Layer::MaxPool);
            channels = maps;
        }
        layers.push(Layer::Flatten);
        let mut width = config.flattened_len()?;
        for _ in 0..config.num_hidden_layers {
            let units = config.hidden_units;
            layers.push(Layer::Dense(Params {
                weights: glorot(&[units, width], width, units, rng)?,
                bias: Tensor::zeros(&[units])?,
            }));
            layers.push(Layer::Relu);
            layers.push(Layer::Dropout(config.dropout_p));
            width = units;
        }
        let classes = config.num_classes;
        layers.push(Layer::Dense(Params {
            weights: glorot(&[classes, width], width, classes, rng)?,
            bias: Tensor::zeros(&[classes])?,
        }));
        layers.push(Layer::Softmax);
        Ok(Self { config, layers })
    }

    /// Reassembles a network from stored parameters, checking every shape
    /// against a freshly derived layout.
    pub fn from_parts(config: NetworkConfig, params: Vec<Params>) -> Result<Self> {
        let mut template = Self::build(config, &mut crate::rng::seeded(0))?;
        let slots: Vec<&mut Params> = template.layers.iter_mut().filter_map(Layer::params_mut).collect();
        if slots.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "config needs {} parametric layers, got {}",
                slots.len(),
                params.len()
            )));
        }
        for (i, (slot, p)) in slots.into_iter().zip(params).enumerate() {
            if slot.weights.shape() != p.weights.shape() || slot.bias.shape() != p.bias.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "parametric layer {i}: expected {:?}/{:?}, got {:?}/{:?}",
                    slot.weights.shape(),
                    slot.bias.shape(),
                    p.weights.shape(),
                    p.bias.shape()
                )));
            }
            *slot = p;
        }
        Ok(template)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().filter_map(Layer::params).flat_map(|p| [&p.weights, &p.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().filter_map(Layer::params_mut).flat_map(|p| [&mut p.weights, &mut p.bias]).collect()
    }

    /// Human-readable names matching [`Network::parameters`] order.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.params().is_some() {
                names.push(format!("layer {i} ({}) weights", layer.name()));
                names.push(format!("layer {i} ({}) bias", layer.name()));
            }
        }
        names
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    fn shape_input(&self, input: &Tensor) -> Result<Tensor> {
        let (h, w) = (self.config.input_height, self.config.input_width);
        if input.rank() < 2 || input.row_len() != h * w {
            return Err(Error::ShapeMismatch(format!(
                "network expects batches of {h}x{w} images, got {:?}",
                input.shape()
            )));
        }
        input.clone().reshape(&[input.rows(), 1, h, w])
    }

    /// Runs the stack on `input` (`[n, h, w]`, `[n, 1, h, w]` or `[n, h*w]`).
    pub fn forward(&self, input: &Tensor, mut mode: ForwardMode<'_>) -> Result<ForwardTrace> {
        let x = self.shape_input(input)?;
        if let ForwardMode::Frozen(trace) = &mode {
            if trace.caches.len() != self.layers.len() {
                return Err(Error::Internal("frozen trace belongs to another network".into()));
            }
        }
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = outputs.last().unwrap_or(&x);
            let (out, cache) = match layer {
                Layer::Conv(p) => (ops::conv_forward(&p.weights, &p.bias, cur)?, LayerCache::None),
                Layer::Dense(p) => (ops::dense_forward(&p.weights, &p.bias, cur)?, LayerCache::None),
                Layer::Relu => (cur.map(ops::relu), LayerCache::None),
                Layer::MaxPool => {
                    let (out, idx) = ops::maxpool_forward(cur)?;
                    (out, LayerCache::PoolArgmax(idx))
                }
                Layer::Flatten => {
                    let n = cur.rows();
                    let w = cur.row_len();
                    (cur.clone().reshape(&[n, w])?, LayerCache::None)
                }
                Layer::Dropout(p) => match &mut mode {
                    ForwardMode::Eval => (cur.clone(), LayerCache::None),
                    ForwardMode::Train(rng) => {
                        let (out, mask) = ops::dropout_forward(cur, *p, Phase::Train, rng)?;
                        (out, LayerCache::DropoutMask(mask))
                    }
                    ForwardMode::Frozen(trace) => match &trace.caches[i] {
                        LayerCache::DropoutMask(mask) if mask.shape() == cur.shape() => {
                            (ops::apply_mask(cur, mask), LayerCache::DropoutMask(mask.clone()))
                        }
                        _ => return Err(Error::Internal(format!("no usable dropout mask for layer {i}"))),
                    },
                },
                Layer::Softmax => (ops::softmax_rows(cur), LayerCache::None),
            };
            outputs.push(out);
            caches.push(cache);
        }
        Ok(ForwardTrace { input: x, outputs, caches })
    }

    /// Class probabilities `[n, classes]` in evaluation mode.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut trace = self.forward(input, ForwardMode::Eval)?;
        Ok(trace.outputs.pop().expect("network has layers"))
    }

    /// Gradients of the mean cross-entropy over the batch in `trace`.
    ///
    /// Softmax and cross-entropy are fused: the delta entering the output
    /// dense layer is `(p - y) / n`.
    pub fn backward(&self, trace: &ForwardTrace, targets: &Tensor) -> Result<Gradients> {
        let l = self.layers.len();
        if trace.outputs.len() != l || trace.caches.len() != l {
            return Err(Error::Internal(format!("trace has {} outputs for a {l}-layer network", trace.outputs.len())));
        }
        let probs = trace.probabilities();
        if probs.shape() != targets.shape() {
            return Err(Error::ShapeMismatch(format!(
                "targets {:?} do not match predictions {:?}",
                targets.shape(),
                probs.shape()
            )));
        }
        if !matches!(self.layers[l - 1], Layer::Softmax) {
            return Err(Error::Internal("last layer must be softmax".into()));
        }
        let n = probs.rows() as f64;
        let data = probs.data().iter().zip(targets.data()).map(|(p, y)| (p - y) / n).collect();
        let mut delta = Tensor::from_vec(probs.shape(), data)?;
        let mut grads = vec![None; l];

        for i in (0..l - 1).rev() {
            let input = if i == 0 { &trace.input } else { &trace.outputs[i - 1] };
            let want_input = i > 0;
            delta = match &self.layers[i] {
                Layer::Dense(p) => {
                    let g = ops::dense_backward(&p.weights, input, &delta, want_input)?;
                    grads[i] = Some(Params { weights: g.weights, bias: g.bias });
                    match g.input {
                        Some(d) => d,
                        None => break,
                    }
                }
                Layer::Conv(p) => {
                    let g = ops::conv_backward(&p.weights, input, &delta, want_input)?;
                    grads[i] = Some(Params { weights: g.kernels, bias: g.bias });
                    match g.input {
                        Some(d) => d,
                        None => break,
                    }
                }
                Layer::Relu => {
                    let data = delta.data().iter().zip(input.data()).map(|(d, z)| d * ops::relu_grad(*z)).collect();
                    Tensor::from_vec(input.shape(), data)?
                }
                Layer::Dropout(_) => match &trace.caches[i] {
                    LayerCache::DropoutMask(mask) => ops::apply_mask(&delta, mask),
                    LayerCache::None => delta,
                    LayerCache::PoolArgmax(_) => {
                        return Err(Error::Internal(format!("layer {i}: pool cache on a dropout layer")))
                    }
                },
                Layer::MaxPool => match &trace.caches[i] {
                    LayerCache::PoolArgmax(idx) => ops::maxpool_backward(&delta, idx, input.shape())?,
                    _ => return Err(Error::Internal(format!("layer {i}: missing pool argmax"))),
                },
                Layer::Flatten => delta.reshape(input.shape())?,
                Layer::Softmax => return Err(Error::Internal("softmax must be the last layer".into())),
            };
        }
        Ok(Gradients { layers: grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn toy(num_convs: usize, hidden: usize, dropout: f64) -> NetworkConfig {
        NetworkConfig {
            num_convs,
            num_hidden_layers: hidden,
            hidden_units: 6,
            dropout_p: dropout,
            input_height: 12,
            input_width: 10,
            num_classes: 2,
            feature_maps: 3,
        }
    }

    #[test]
    fn layer_stack_layout() {
        let net = Network::build(toy(1, 2, 0.5), &mut seeded(1)).unwrap();
        let names: Vec<&str> = net.layers().iter().map(Layer::name).collect();
        assert_eq!(
            names,
            [
                "conv", "relu", "maxpool", "flatten", "dense", "relu", "dropout", "dense", "relu", "dropout", "dense",
                "softmax"
            ]
        );
        // conv 8x6 -> pool 4x3, 3 maps
        assert_eq!(net.layers()[4].params().unwrap().weights.shape(), &[6, 36]);
    }

    #[test]
    fn weights_within_glorot_limit_and_zero_bias() {
        let net = Network::build(toy(1, 1, 0.0), &mut seeded(5)).unwrap();
        for layer in net.layers() {
            if let Some(p) = layer.params() {
                let s = p.weights.shape();
                let (fan_in, fan_out) =
                    if s.len() == 4 { (s[1] * s[2] * s[3], s[0] * s[2] * s[3]) } else { (s[1], s[0]) };
                let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
                assert!(p.weights.data().iter().all(|w| w.abs() < limit));
                assert!(p.bias.data().iter().all(|&b| b == 0.0));
            }
        }
    }

    #[test]
    fn forward_shapes_and_softmax_rows() {
        for convs in 0..=1 {
            let net = Network::build(toy(convs, 1, 0.5), &mut seeded(2)).unwrap();
            let x = Tensor::random_uniform(&[4, 12, 10], 1.0, &mut seeded(3)).unwrap();
            let trace = net.forward(&x, ForwardMode::Train(&mut seeded(4))).unwrap();
            assert_eq!(trace.outputs.len(), net.layers().len());
            let p = trace.probabilities();
            assert_eq!(p.shape(), &[4, 2]);
            for r in 0..4 {
                assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_wrong_input_size() {
        let net = Network::build(toy(0, 1, 0.0), &mut seeded(2)).unwrap();
        let x = Tensor::zeros(&[2, 5, 5]).unwrap();
        assert!(matches!(net.forward(&x, ForwardMode::Eval), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn output_delta_for_zero_weights() {
        let cfg = NetworkConfig { hidden_units: 3, ..toy(0, 1, 0.0) };
        let mut net = Network::build(cfg, &mut seeded(2)).unwrap();
        for p in net.parameters_mut() {
            p.data_mut().fill(0.0);
        }
        let x = Tensor::random_uniform(&[1, 12, 10], 1.0, &mut seeded(3)).unwrap();
        let trace = net.forward(&x, ForwardMode::Eval).unwrap();
        let y = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        let g = net.backward(&trace, &y).unwrap();
        // hidden activations are all zero, so only the output bias sees the delta
        let out = g.layers[g.layers.len() - 2].as_ref().unwrap();
        assert_eq!(out.bias.data(), &[-0.5, 0.5]);
    }

    #[test]
    fn last_bias_gradient_is_mean_delta() {
        let net = Network::build(toy(0, 1, 0.0), &mut seeded(9)).unwrap();
        let x = Tensor::random_uniform(&[5, 12, 10], 1.0, &mut seeded(10)).unwrap();
        let mut y = Tensor::zeros(&[5, 2]).unwrap();
        for r in 0..5 {
            y.data_mut()[r * 2 + r % 2] = 1.0;
        }
        let trace = net.forward(&x, ForwardMode::Eval).unwrap();
        let g = net.backward(&trace, &y).unwrap();
        let db = &g.layers[g.layers.len() - 2].as_ref().unwrap().bias;
        let p = trace.probabilities();
        for c in 0..2 {
            let mean: f64 = (0..5).map(|r| p.row(r)[c] - y.row(r)[c]).sum::<f64>() / 5.0;
            assert!((db.data()[c] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let a = Network::build(toy(0, 1, 0.0), &mut seeded(1)).unwrap();
        let b = Network::build(toy(0, 2, 0.0), &mut seeded(1)).unwrap();
        let x = Tensor::zeros(&[1, 12, 10]).unwrap();
        let trace = a.forward(&x, ForwardMode::Eval).unwrap();
        let y = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        assert!(matches!(b.backward(&trace, &y), Err(Error::Internal(_))));
    }

    #[test]
    fn from_parts_round_trip() {
        let net = Network::build(toy(1, 1, 0.1), &mut seeded(1)).unwrap();
        let params: Vec<Params> = net.layers().iter().filter_map(Layer::params).cloned().collect();
        assert_eq!(Network::from_parts(*net.config(), params.clone()).unwrap(), net);
        assert!(Network::from_parts(toy(0, 1, 0.1), params).is_err());
    }
}
