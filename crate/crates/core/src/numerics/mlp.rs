use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Params, Tensor2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `in × out`
    pub weight: Tensor2,
    /// `1 × out`
    pub bias: Tensor2,
    pub activation: Activation,
}

/// Stack of affine maps, each followed by its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Intermediate values recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Tensor2>,
    pre_activations: Vec<Tensor2>,
}

impl Mlp {
    /// He-initialised MLP with relu on every hidden layer and an identity
    /// output layer. `dims` lists input, hidden and output widths.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("mlp dims must have ≥ 2 positive entries, got {dims:?}")));
        }
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer {
                weight: Tensor2::randn(w[0], w[1], (2.0 / w[0] as f64).sqrt(), rng),
                bias: Tensor2::zeros(1, w[1]),
                activation: if i + 1 == n {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.weight.cols()) {
                return Err(Error::shape(format!("mlp layer {i} bias"), format!("1x{}", l.weight.cols()), format!("{:?}", l.bias.shape())));
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(Error::shape(format!("mlp layer {i} input"), layers[i - 1].weight.cols(), l.weight.rows()));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    pub fn forward(&self, x: &Tensor2) -> Result<(Tensor2, MlpCache)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if cur.cols() != layer.weight.rows() {
                return Err(Error::shape(format!("mlp layer {i}"), layer.weight.rows(), cur.cols()));
            }
            let mut z = cur.matmul(&layer.weight)?;
            z.add_row_broadcast(&layer.bias);
            let a = match layer.activation {
                Activation::Relu => {
                    let mut a = z.clone();
                    a.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                    a
                }
                Activation::Identity => z.clone(),
            };
            cache.inputs.push(cur);
            cache.pre_activations.push(z);
            cur = a;
        }
        Ok((cur, cache))
    }

    /// Forward pass without recording a cache.
    pub fn apply(&self, x: &Tensor2) -> Result<Tensor2> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Back-propagates `dy` and returns `dx` and the parameter gradients in
    /// the shape of `self`. `relu'(0)` is taken as 0.
    pub fn backward(&self, cache: &MlpCache, dy: &Tensor2) -> Result<(Tensor2, Mlp)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::shape("mlp backward cache", self.layers.len(), cache.inputs.len()));
        }
        let mut grads = self.zeros_like();
        let mut delta = dy.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre_activations[i];
            if delta.shape() != z.shape() {
                return Err(Error::shape(format!("mlp backward layer {i}"), format!("{:?}", z.shape()), format!("{:?}", delta.shape())));
            }
            if layer.activation == Activation::Relu {
                for (d, &zv) in delta.data_mut().iter_mut().zip(z.data()) {
                    if zv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            grads.layers[i].weight.add_t_matmul(&cache.inputs[i], &delta);
            grads.layers[i].bias = delta.sum_rows();
            delta = delta.matmul_t(&layer.weight)?;
        }
        Ok((delta, grads))
    }
}

impl Params for Mlp {
    fn tensors(&self) -> Vec<&Tensor2> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("{i}.weight"), format!("{i}.bias")])
            .collect()
    }

    fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.zeros_like(),
                    bias: l.bias.zeros_like(),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}
