//! Shared surface of the teacher and student networks.

use crate::error::Result;

/// A network mapping a feature vector to class logits.
pub trait Classifier {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Number of trainable scalars actually stored.
    fn parameter_count(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Activations entering the last layer.
    fn penultimate(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }
}

/// Gradients of `logits · upstream` for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Flattened in the model's canonical parameter order.
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// A classifier with analytic reverse-mode gradients.
///
/// Parameters are exposed as contiguous blocks (one per layer) in a fixed
/// canonical order shared by gradients, optimizers and the model file format.
pub trait Trainable: Classifier {
    /// Whatever the backward pass needs from the forward pass.
    type Tape;

    fn forward_tape(&self, x: &[f64]) -> Result<(Vec<f64>, Self::Tape)>;

    /// Adds parameter gradients into `grad` and returns the input gradient.
    fn backward_tape(
        &self,
        tape: &Self::Tape,
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Result<Vec<f64>>;

    fn param_blocks(&self) -> Vec<&[f64]>;
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let (_, tape) = self.forward_tape(x)?;
        let mut params = vec![0.0; self.parameter_count()];
        let input = self.backward_tape(&tape, upstream, &mut params)?;
        Ok(Gradients { params, input })
    }

    fn flat_params(&self) -> Vec<f64> {
        self.param_blocks().concat()
    }

    /// Overwrites all parameters from a flat vector in canonical order.
    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.parameter_count();
        if flat.len() != expected {
            return Err(crate::Error::dim(
                "flat parameter vector",
                expected,
                flat.len(),
            ));
        }
        let mut offset = 0;
        for block in self.param_blocks_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
        Ok(())
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
