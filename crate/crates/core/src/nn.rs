//! Small dense-layer building blocks shared by the feature extractors and heads.

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;

/// Fully connected layer, `y = W x + b`, with `W` stored `outputs x inputs`
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform initialization in `[-1/sqrt(inputs), 1/sqrt(inputs))` for both
    /// weights and biases, rounded to f32 so weights survive serialization
    /// unchanged.
    pub fn random(inputs: usize, outputs: usize, rng: &mut XorShift64Star) -> Self {
        let bound = init_bound(inputs);
        let mut draw = || rng.uniform(-bound, bound) as f32 as f64;
        let weight = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Self {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.weight.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(Error::invalid(format!(
                "dense layer {}x{} has mismatched tensors",
                self.outputs, self.inputs
            )));
        }
        if self.weight.iter().chain(&self.bias).any(|w| !w.is_finite()) {
            return Err(Error::invalid("dense layer holds non-finite weights"));
        }
        Ok(())
    }

    pub fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(y.len(), self.outputs);
        for (o, out) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            *out = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.outputs];
        self.forward_into(x, &mut y);
        y
    }
}

pub fn init_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

pub fn relu_in_place(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A stack of dense layers with a rectifier after each hidden layer and,
/// optionally, after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub relu_output: bool,
}

impl Mlp {
    /// `widths = [in, h1, ..., out]`.
    pub fn random(widths: &[usize], relu_output: bool, rng: &mut XorShift64Star) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| Dense::random(w[0], w[1], rng))
            .collect();
        Self {
            layers,
            relu_output,
        }
    }

    pub fn zeros(widths: &[usize], relu_output: bool) -> Self {
        Self {
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            relu_output,
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn check(&self) -> Result<()> {
        for pair in self.layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::invalid("MLP layer widths do not chain"));
            }
        }
        self.layers.iter().try_for_each(Dense::check)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len().saturating_sub(1);
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.forward(&cur);
            if i < last || self.relu_output {
                relu_in_place(&mut cur);
            }
        }
        cur
    }
}
