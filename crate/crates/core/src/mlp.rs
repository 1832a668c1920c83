//! Fully connected student network.
//!
//! Layer `l` stores a row-major `d_out x d_in` weight matrix followed by its
//! `d_out` biases in one contiguous block; that is also the canonical
//! parameter order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::{sigmoid, silu, silu_derivative};
use crate::model::{Classifier, Trainable};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Silu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Silu => silu(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Silu => silu_derivative(x),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
            Activation::Silu => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Sigmoid),
            3 => Some(Activation::Silu),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Silu => "silu",
        };
        f.write_str(s)
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "silu" => Ok(Activation::Silu),
            other => Err(Error::InvalidConfig(format!(
                "unknown activation `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    d_in: usize,
    d_out: usize,
    params: Vec<f64>,
}

impl Dense {
    fn weights(&self) -> &[f64] {
        &self.params[..self.d_in * self.d_out]
    }

    fn bias(&self) -> &[f64] {
        &self.params[self.d_in * self.d_out..]
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights()
            .chunks_exact(self.d_in)
            .zip(self.bias())
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

/// `sum over layers of d_in * d_out + d_out`.
pub fn mlp_parameter_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Dense>,
    activation: Activation,
}

/// Pre-activations and layer inputs recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl MlpNetwork {
    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "MLP dims need at least input and output".into(),
            ));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "MLP dims must be positive, got {dims:?}"
            )));
        }
        let layers = dims
            .windows(2)
            .map(|w| Dense {
                d_in: w[0],
                d_out: w[1],
                params: vec![0.0; w[0] * w[1] + w[1]],
            })
            .collect();
        Ok(Self { layers, activation })
    }

    /// He-uniform weights (Glorot-uniform for saturating activations), zero
    /// biases. Deterministic in `seed`.
    pub fn init(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(dims, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let bound = match activation {
                Activation::Relu | Activation::Silu => (6.0 / layer.d_in as f64).sqrt(),
                Activation::Tanh | Activation::Sigmoid => {
                    (6.0 / (layer.d_in + layer.d_out) as f64).sqrt()
                }
            };
            let n = layer.d_in * layer.d_out;
            for w in &mut layer.params[..n] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_params(dims: &[usize], activation: Activation, flat: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(dims, activation)?;
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InputDomain("non-finite MLP parameter".into()));
        }
        net.set_flat_params(flat)?;
        Ok(net)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].d_in];
        dims.extend(self.layers.iter().map(|l| l.d_out));
        dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Row-major `d_out x d_in` weights of layer `l`.
    pub fn weights(&self, l: usize) -> &[f64] {
        self.layers[l].weights()
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        let n = self.layers[l].d_in * self.layers[l].d_out;
        &mut self.layers[l].params[..n]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        self.layers[l].bias()
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let n = self.layers[l].d_in * self.layers[l].d_out;
        &mut self.layers[l].params[n..]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("MLP input", self.input_dim(), x.len()));
        }
        Ok(())
    }

    fn run(&self, x: &[f64], upto: usize) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (l, layer) in self.layers[..upto].iter().enumerate() {
            let z = layer.affine(&a);
            a = if l == last {
                z
            } else {
                z.into_iter().map(|v| self.activation.apply(v)).collect()
            };
        }
        a
    }
}

impl Classifier for MlpNetwork {
    fn input_dim(&self) -> usize {
        self.layers[0].d_in
    }

    fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out
    }

    fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.run(x, self.layers.len()))
    }

    fn penultimate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.run(x, self.layers.len() - 1))
    }
}

impl Trainable for MlpNetwork {
    type Tape = MlpTape;

    fn forward_tape(&self, x: &[f64]) -> Result<(Vec<f64>, MlpTape)> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&a);
            let next = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok((a, MlpTape { inputs, pre }))
    }

    fn backward_tape(
        &self,
        tape: &MlpTape,
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::dim(
                "MLP upstream gradient",
                self.output_dim(),
                upstream.len(),
            ));
        }
        if grad.len() != self.parameter_count() {
            return Err(Error::dim(
                "MLP gradient buffer",
                self.parameter_count(),
                grad.len(),
            ));
        }
        let last = self.layers.len() - 1;
        let mut end = grad.len();
        let mut g = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if l != last {
                for (gi, z) in g.iter_mut().zip(&tape.pre[l]) {
                    *gi *= self.activation.derivative(*z);
                }
            }
            let start = end - layer.params.len();
            let block = &mut grad[start..end];
            let (gw, gb) = block.split_at_mut(layer.d_in * layer.d_out);
            let input = &tape.inputs[l];
            for (row, &go) in gw.chunks_exact_mut(layer.d_in).zip(&g) {
                for (w, &x) in row.iter_mut().zip(input) {
                    *w += go * x;
                }
            }
            for (b, &go) in gb.iter_mut().zip(&g) {
                *b += go;
            }
            let mut gin = vec![0.0; layer.d_in];
            for (row, &go) in layer.weights().chunks_exact(layer.d_in).zip(&g) {
                for (gi, w) in gin.iter_mut().zip(row) {
                    *gi += go * w;
                }
            }
            g = gin;
            end = start;
        }
        Ok(g)
    }

    fn param_blocks(&self) -> Vec<&[f64]> {
        self.layers.iter().map(|l| l.params.as_slice()).collect()
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .map(|l| l.params.as_mut_slice())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_budgets() {
        assert_eq!(mlp_parameter_count(&[123, 20, 2]), 2_522);
        assert_eq!(mlp_parameter_count(&[51, 30, 2]), 1_622);
        assert_eq!(mlp_parameter_count(&[1, 1, 1]), 4);
        let net = MlpNetwork::zeros(&[123, 20, 2], Activation::Relu).unwrap();
        assert_eq!(net.parameter_count(), 2_522);
        assert_eq!(net.flat_params().len(), 2_522);
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut net = MlpNetwork::zeros(&[3, 4, 2], Activation::Relu).unwrap();
        net.bias_mut(1).copy_from_slice(&[0.25, -2.0]);
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.25, -2.0]);
    }

    #[test]
    fn relu_pass_through() {
        let mut net = MlpNetwork::zeros(&[1, 1, 1], Activation::Relu).unwrap();
        net.weights_mut(0)[0] = 1.0;
        net.weights_mut(1)[0] = 1.0;
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn linear_layer_outer_product() {
        let net = MlpNetwork::init(&[3, 2], Activation::Relu, 4).unwrap();
        let x = [0.5, -1.0, 2.0];
        let up = [0.3, -0.7];
        let g = net.backward(&x, &up).unwrap();
        for (o, u) in up.iter().enumerate() {
            for (i, v) in x.iter().enumerate() {
                assert_eq!(g.params[o * 3 + i], u * v);
            }
        }
        assert_eq!(&g.params[6..], &up);
    }

    #[test]
    fn zero_upstream() {
        let net = MlpNetwork::init(&[4, 5, 3], Activation::Tanh, 1).unwrap();
        let g = net.backward(&[1.0, 2.0, 3.0, 4.0], &[0.0; 3]).unwrap();
        assert!(g.params.iter().chain(&g.input).all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(MlpNetwork::zeros(&[3], Activation::Relu).is_err());
        assert!(MlpNetwork::zeros(&[3, 0, 2], Activation::Relu).is_err());
        let net = MlpNetwork::zeros(&[3, 2], Activation::Relu).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn activation_tags_round_trip() {
        for a in [
            Activation::Relu,
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::Silu,
        ] {
            assert_eq!(Activation::from_tag(a.tag()), Some(a));
            assert_eq!(a.to_string().parse::<Activation>().unwrap(), a);
        }
    }
}
