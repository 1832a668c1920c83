//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use kandistill::kan::KanNetwork;
use kandistill::mlp::{Activation, MlpNetwork};
use kandistill::model::Trainable;

/// Uniform extended knot vector: `G + 2K + 1` knots with `K` extra knots on
/// each side of `[lo, hi]`.
pub fn knots(lo: f64, hi: f64, g: usize, k: usize) -> Vec<f64> {
    let h = (hi - lo) / g as f64;
    (0..g + 2 * k + 1)
        .map(|i| lo + (i as f64 - k as f64) * h)
        .collect()
}

/// Textbook Cox-de Boor recursion for `B_{i,p}` on half-open cells.
pub fn cox_de_boor(t: &[f64], i: usize, p: usize, x: f64) -> f64 {
    if p == 0 {
        return if t[i] <= x && x < t[i + 1] { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let left = t[i + p] - t[i];
    if left > 0.0 {
        v += (x - t[i]) / left * cox_de_boor(t, i, p - 1, x);
    }
    let right = t[i + p + 1] - t[i + 1];
    if right > 0.0 {
        v += (t[i + p + 1] - x) / right * cox_de_boor(t, i + 1, p - 1, x);
    }
    v
}

/// All `G + K` basis values at `x`, clamped into the domain. The right end is
/// nudged inside the last cell so the half-open recursion stays defined.
pub fn basis(lo: f64, hi: f64, g: usize, k: usize, x: f64) -> Vec<f64> {
    let t = knots(lo, hi, g, k);
    let x = x.clamp(lo, hi);
    let x = if x >= hi { hi - (hi - lo) * 1e-15 } else { x };
    (0..g + k).map(|i| cox_de_boor(&t, i, k, x)).collect()
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Nested-sum evaluation of a KAN, one edge at a time.
pub fn kan_forward(net: &KanNetwork, x: &[f64]) -> Vec<f64> {
    let grid = net.grid();
    let (lo, hi) = grid.domain();
    let (g, k) = (grid.grid_size(), grid.order());
    let mut h = x.to_vec();
    for layer in net.layers() {
        let mut out = layer.bias().to_vec();
        for (j, o) in out.iter_mut().enumerate() {
            for (p, &v) in h.iter().enumerate() {
                let e = layer.edge(p, j);
                let b = basis(lo, hi, g, k, v + e.shift);
                let spline: f64 = b.iter().zip(e.coeffs).map(|(b, c)| b * c).sum();
                *o += e.omega_b * silu(v) + e.omega_s * spline;
            }
        }
        h = out;
    }
    h
}

pub fn activation(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        Activation::Tanh => x.tanh(),
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        Activation::Silu => silu(x),
    }
}

/// Explicit loops over the row-major weight matrices.
pub fn mlp_forward(net: &MlpNetwork, x: &[f64]) -> Vec<f64> {
    let dims = net.dims();
    let mut h = x.to_vec();
    for l in 0..net.num_layers() {
        let (d_in, d_out) = (dims[l], dims[l + 1]);
        let w = net.weights(l);
        let b = net.bias(l);
        let mut out = vec![0.0; d_out];
        for r in 0..d_out {
            let mut acc = b[r];
            for c in 0..d_in {
                acc += w[r * d_in + c] * h[c];
            }
            out[r] = if l + 1 < net.num_layers() {
                activation(net.activation(), acc)
            } else {
                acc
            };
        }
        h = out;
    }
    h
}

/// Central differences of `f` over every parameter of `model`.
pub fn fd_param_grad<M: Trainable + Clone>(
    model: &M,
    step: f64,
    f: impl Fn(&M) -> f64,
) -> Vec<f64> {
    let theta = model.flat_params();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(theta.len());
    let mut buf = theta.clone();
    for i in 0..theta.len() {
        buf[i] = theta[i] + step;
        probe.set_flat_params(&buf).unwrap();
        let up = f(&probe);
        buf[i] = theta[i] - step;
        probe.set_flat_params(&buf).unwrap();
        let down = f(&probe);
        buf[i] = theta[i];
        out.push((up - down) / (2.0 * step));
    }
    out
}

/// Central differences of `f` with respect to the input vector.
pub fn fd_input_grad(x: &[f64], step: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            buf[i] = x[i] + step;
            let up = f(&buf);
            buf[i] = x[i] - step;
            let down = f(&buf);
            buf[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Entry-wise `|a - n| / max(|a|, |n|, floor)`, maximized.
///
/// The floor keeps entries that are zero up to rounding from dominating.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn naive_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| (v / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `T^2 * KL(p || q)` computed directly from probabilities.
pub fn naive_kl(p: &[f64], q: &[f64], t: f64) -> f64 {
    t * t * p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum::<f64>()
}

/// Binary classification F1 from predictions, by counting.
pub fn naive_f1(pred: &[u8], actual: &[u8]) -> f64 {
    let tp = pred
        .iter()
        .zip(actual)
        .filter(|(p, a)| **p == 1 && **a == 1)
        .count() as f64;
    let fp = pred
        .iter()
        .zip(actual)
        .filter(|(p, a)| **p == 1 && **a == 0)
        .count() as f64;
    let fnn = pred
        .iter()
        .zip(actual)
        .filter(|(p, a)| **p == 0 && **a == 1)
        .count() as f64;
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fnn)
    }
}
