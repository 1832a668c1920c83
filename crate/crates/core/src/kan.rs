//! Kolmogorov-Arnold network: learnable activations on every edge.
//!
//! Each edge `(p, j)` of a layer applies
//!
//! ```text
//! phi(x) = omega_b * silu(x) + omega_s * sum_i c_i * B_i(x + shift)
//! ```
//!
//! and node `j` outputs `bias_j + sum_p phi_pj(x_p)`. There is no
//! nonlinearity after aggregation.
//!
//! Parameters of a layer live in one flat block. Edge `(p, j)` starts at
//! `(p * d_out + j) * (G + K + 3)` and stores
//! `[omega_b, omega_s, shift, c_0 .. c_{G+K-1}]`; the `d_out` biases follow
//! the last edge. A layer therefore holds exactly
//! `(d_in * d_out) * (G + K + 3) + d_out` scalars.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{Classifier, Trainable};
use crate::spline::SplineGrid;

const OMEGA_B: usize = 0;
const OMEGA_S: usize = 1;
const SHIFT: usize = 2;
const COEFFS: usize = 3;

/// Sigmoid linear unit, `x / (1 + exp(-x))`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Borrowed view of one edge's parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KanEdge<'a> {
    pub omega_b: f64,
    pub omega_s: f64,
    pub shift: f64,
    pub coeffs: &'a [f64],
}

impl KanEdge<'_> {
    /// Evaluates this edge's activation on `grid`.
    pub fn eval(&self, grid: &SplineGrid, x: f64) -> Result<f64> {
        let basis = grid.basis_values(x + self.shift)?;
        let spline: f64 = basis.iter().zip(self.coeffs).map(|(b, c)| b * c).sum();
        Ok(self.omega_b * silu(x) + self.omega_s * spline)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanLayer {
    d_in: usize,
    d_out: usize,
    grid: SplineGrid,
    params: Vec<f64>,
}

impl KanLayer {
    /// A layer with all parameters zero.
    pub fn zeros(d_in: usize, d_out: usize, grid: SplineGrid) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::InvalidConfig(format!(
                "KAN layer dims must be positive, got {d_in}x{d_out}"
            )));
        }
        let len = Self::count(d_in, d_out, &grid);
        Ok(Self {
            d_in,
            d_out,
            grid,
            params: vec![0.0; len],
        })
    }

    pub fn from_params(
        d_in: usize,
        d_out: usize,
        grid: SplineGrid,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut layer = Self::zeros(d_in, d_out, grid)?;
        if params.len() != layer.params.len() {
            return Err(Error::dim(
                "KAN layer parameters",
                layer.params.len(),
                params.len(),
            ));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InputDomain("non-finite KAN parameter".into()));
        }
        layer.params = params;
        Ok(layer)
    }

    fn count(d_in: usize, d_out: usize, grid: &SplineGrid) -> usize {
        d_in * d_out * (grid.num_basis() + 3) + d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn grid(&self) -> &SplineGrid {
        &self.grid
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn stride(&self) -> usize {
        self.grid.num_basis() + 3
    }

    fn edge_offset(&self, p: usize, j: usize) -> usize {
        (p * self.d_out + j) * self.stride()
    }

    fn bias_offset(&self) -> usize {
        self.d_in * self.d_out * self.stride()
    }

    pub fn edge(&self, p: usize, j: usize) -> KanEdge<'_> {
        let o = self.edge_offset(p, j);
        let e = &self.params[o..o + self.stride()];
        KanEdge {
            omega_b: e[OMEGA_B],
            omega_s: e[OMEGA_S],
            shift: e[SHIFT],
            coeffs: &e[COEFFS..],
        }
    }

    /// Mutable slice `[omega_b, omega_s, shift, coeffs..]` of edge `(p, j)`.
    pub fn edge_params_mut(&mut self, p: usize, j: usize) -> &mut [f64] {
        let o = self.edge_offset(p, j);
        let s = self.stride();
        &mut self.params[o..o + s]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.bias_offset()..]
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        let o = self.bias_offset();
        &mut self.params[o..]
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.d_in {
            return Err(Error::dim("KAN layer input", self.d_in, input.len()));
        }
        if let Some(x) = input.iter().find(|v| !v.is_finite()) {
            return Err(Error::InputDomain(format!("KAN input {x} is not finite")));
        }
        let k1 = self.grid.order() + 1;
        let stride = self.stride();
        let mut basis = vec![0.0; k1];
        let mut out = self.bias().to_vec();
        for (p, &x) in input.iter().enumerate() {
            let base = silu(x);
            let row = &self.params[p * self.d_out * stride..(p + 1) * self.d_out * stride];
            for (j, e) in row.chunks_exact(stride).enumerate() {
                let start = self.grid.eval_local(x + e[SHIFT], &mut basis, None);
                let coeffs = &e[COEFFS + start..COEFFS + start + k1];
                let spline: f64 = coeffs.iter().zip(&basis).map(|(c, b)| c * b).sum();
                out[j] += e[OMEGA_B] * base + e[OMEGA_S] * spline;
            }
        }
        Ok(out)
    }

    /// Accumulates gradients of `output · upstream` into `grad` (this layer's
    /// block) and returns the gradient with respect to `input`.
    fn backward(&self, input: &[f64], upstream: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let k1 = self.grid.order() + 1;
        let stride = self.stride();
        let mut basis = vec![0.0; k1];
        let mut dbasis = vec![0.0; k1];
        let mut input_grad = vec![0.0; self.d_in];
        for (p, &x) in input.iter().enumerate() {
            let base = silu(x);
            let dbase = silu_derivative(x);
            for (j, &g) in upstream.iter().enumerate() {
                let o = self.edge_offset(p, j);
                let e = &self.params[o..o + stride];
                let start = self
                    .grid
                    .eval_local(x + e[SHIFT], &mut basis, Some(&mut dbasis));
                let coeffs = &e[COEFFS + start..COEFFS + start + k1];
                let spline: f64 = coeffs.iter().zip(&basis).map(|(c, b)| c * b).sum();
                let dspline: f64 = coeffs.iter().zip(&dbasis).map(|(c, d)| c * d).sum();

                let ge = &mut grad[o..o + stride];
                ge[OMEGA_B] += g * base;
                ge[OMEGA_S] += g * spline;
                ge[SHIFT] += g * e[OMEGA_S] * dspline;
                let gs = g * e[OMEGA_S];
                for (r, b) in basis.iter().enumerate() {
                    ge[COEFFS + start + r] += gs * b;
                }
                input_grad[p] += g * (e[OMEGA_B] * dbase + e[OMEGA_S] * dspline);
            }
        }
        let bo = self.bias_offset();
        for (gb, g) in grad[bo..].iter_mut().zip(upstream) {
            *gb += g;
        }
        input_grad
    }
}

/// Layer widths and spline grid shared by every layer of a KAN.
#[derive(Debug, Clone, PartialEq)]
pub struct KanSpec {
    pub dims: Vec<usize>,
    pub grid_size: usize,
    pub order: usize,
    pub domain: (f64, f64),
}

impl KanSpec {
    pub fn new(dims: Vec<usize>, grid_size: usize, order: usize) -> Self {
        Self {
            dims,
            grid_size,
            order,
            domain: (-3.0, 3.0),
        }
    }

    /// Parameter count implied by the spec, without allocating.
    pub fn parameter_count(&self) -> usize {
        kan_parameter_count(&self.dims, self.grid_size, self.order)
    }
}

/// `sum over layers of (d_in * d_out) * (G + K + 3) + d_out`.
pub fn kan_parameter_count(dims: &[usize], grid_size: usize, order: usize) -> usize {
    dims.windows(2)
        .map(|w| w[0] * w[1] * (grid_size + order + 3) + w[1])
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanNetwork {
    layers: Vec<KanLayer>,
}

/// Layer inputs recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct KanTape {
    inputs: Vec<Vec<f64>>,
}

impl KanNetwork {
    pub fn from_layers(layers: Vec<KanLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("KAN needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].d_out != w[1].d_in {
                return Err(Error::dim("KAN layer chaining", w[0].d_out, w[1].d_in));
            }
        }
        Ok(Self { layers })
    }

    /// All-zero network with the given shape.
    pub fn zeros(spec: &KanSpec) -> Result<Self> {
        if spec.dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "KAN dims need at least input and output".into(),
            ));
        }
        let grid = SplineGrid::new(spec.domain.0, spec.domain.1, spec.grid_size, spec.order)?;
        let layers = spec
            .dims
            .windows(2)
            .map(|w| KanLayer::zeros(w[0], w[1], grid.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    /// Random initialization, deterministic in `seed`.
    ///
    /// `omega_b ~ U(-1/sqrt(d_in), 1/sqrt(d_in))`, `omega_s = 1`,
    /// `c_i ~ N(0, 0.1)`, shifts and biases zero.
    pub fn init(spec: &KanSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeff_dist = Normal::new(0.0, 0.1).expect("valid normal");
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.d_in as f64).sqrt();
            for p in 0..layer.d_in {
                for j in 0..layer.d_out {
                    let e = layer.edge_params_mut(p, j);
                    e[OMEGA_B] = rng.random_range(-bound..bound);
                    e[OMEGA_S] = 1.0;
                    e[SHIFT] = 0.0;
                    for c in &mut e[COEFFS..] {
                        *c = coeff_dist.sample(&mut rng);
                    }
                }
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[KanLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [KanLayer] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].d_in];
        dims.extend(self.layers.iter().map(|l| l.d_out));
        dims
    }

    pub fn grid(&self) -> &SplineGrid {
        &self.layers[0].grid
    }

    pub fn spec(&self) -> KanSpec {
        let g = self.grid();
        KanSpec {
            dims: self.dims(),
            grid_size: g.grid_size(),
            order: g.order(),
            domain: g.domain(),
        }
    }
}

impl Classifier for KanNetwork {
    fn input_dim(&self) -> usize {
        self.layers[0].d_in
    }

    fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out
    }

    fn parameter_count(&self) -> usize {
        self.layers.iter().map(KanLayer::parameter_count).sum()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer.forward(&a)?;
        }
        Ok(a)
    }

    fn penultimate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut a = x.to_vec();
        for layer in &self.layers[..self.layers.len() - 1] {
            a = layer.forward(&a)?;
        }
        Ok(a)
    }
}

impl Trainable for KanNetwork {
    type Tape = KanTape;

    fn forward_tape(&self, x: &[f64]) -> Result<(Vec<f64>, KanTape)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let next = layer.forward(&a)?;
            inputs.push(a);
            a = next;
        }
        Ok((a, KanTape { inputs }))
    }

    fn backward_tape(
        &self,
        tape: &KanTape,
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::dim(
                "KAN upstream gradient",
                self.output_dim(),
                upstream.len(),
            ));
        }
        if grad.len() != self.parameter_count() {
            return Err(Error::dim(
                "KAN gradient buffer",
                self.parameter_count(),
                grad.len(),
            ));
        }
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut o = 0;
        for layer in &self.layers {
            offsets.push(o);
            o += layer.parameter_count();
        }
        let mut g = upstream.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let block = &mut grad[offsets[li]..offsets[li] + layer.parameter_count()];
            g = layer.backward(&tape.inputs[li], &g, block);
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
    use crate::model::Trainable;

    #[test]
    fn silu_values() {
        assert_eq!(silu(0.0), 0.0);
        assert!((silu(30.0) - 30.0).abs() < 1e-9);
        // 1 / (1 + e^-1)
        assert!((silu(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!(silu(-800.0).abs() < 1e-300);
        assert!(silu(800.0).is_finite());
    }

    #[test]
    fn parameter_count_examples() {
        assert_eq!(kan_parameter_count(&[2, 3], 5, 3), 69);
        assert_eq!(kan_parameter_count(&[1, 1], 1, 0), 5);
        let net = KanNetwork::zeros(&KanSpec::new(vec![2, 3], 5, 3)).unwrap();
        assert_eq!(net.parameter_count(), 69);
        assert_eq!(net.flat_params().len(), 69);
    }

    #[test]
    fn dead_edges_pass_bias() {
        let mut net = KanNetwork::zeros(&KanSpec::new(vec![3, 2], 4, 2)).unwrap();
        net.layers_mut()[0].bias_mut().copy_from_slice(&[0.5, -1.5]);
        assert_eq!(net.forward(&[0.3, -9.0, 2.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn single_silu_edge() {
        let mut net = KanNetwork::zeros(&KanSpec::new(vec![1, 1], 3, 1)).unwrap();
        net.layers_mut()[0].edge_params_mut(0, 0)[OMEGA_B] = 1.0;
        for &x in &[-2.0, 0.0, 0.7, 5.0] {
            assert_eq!(net.forward(&[x]).unwrap()[0], silu(x));
            let g = net.backward(&[x], &[1.0]).unwrap();
            assert_eq!(g.params[OMEGA_B], silu(x));
        }
    }

    #[test]
    fn init_is_deterministic_and_finite() {
        let spec = KanSpec::new(vec![123, 8, 2], 50, 1);
        let a = KanNetwork::init(&spec, 9).unwrap();
        let b = KanNetwork::init(&spec, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, KanNetwork::init(&spec, 10).unwrap());
        assert_eq!(a.layers()[0].d_in(), 123);
        assert_eq!(a.layers()[0].d_out(), 8);
        assert_eq!(a.layers()[1].d_in(), 8);
        assert_eq!(a.layers()[1].d_out(), 2);
        assert!(a
            .forward(&vec![0.0; 123])
            .unwrap()
            .iter()
            .all(|v| v.is_finite()));
    }

    #[test]
    fn dimension_errors() {
        let net = KanNetwork::init(&KanSpec::new(vec![3, 2], 4, 1), 0).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(
            net.backward(&[1.0, 2.0, 3.0], &[1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(KanNetwork::zeros(&KanSpec::new(vec![3], 4, 1)).is_err());
        assert!(KanNetwork::zeros(&KanSpec::new(vec![3, 0], 4, 1)).is_err());
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let net = KanNetwork::init(&KanSpec::new(vec![3, 4, 2], 5, 2), 1).unwrap();
        let g = net.backward(&[0.1, -0.4, 1.3], &[0.0, 0.0]).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }
}
