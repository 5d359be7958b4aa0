use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `sin(w0 * (W x + b))`
    Sine { w0: f64 },
    Relu,
    Linear,
}

/// Final activation applied to one output head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadActivation {
    Linear,
    Sigmoid,
    Tanh,
}

impl HeadActivation {
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            HeadActivation::Linear => z,
            HeadActivation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            HeadActivation::Tanh => z.tanh(),
        }
    }
}

/// A contiguous block of output units with its own final activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Head {
    pub offset: usize,
    pub width: usize,
    pub activation: HeadActivation,
}

/// Architecture of a fully connected network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    /// Output heads; empty means one linear head over the whole output.
    #[serde(default)]
    pub heads: Vec<Head>,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Self {
        Self { layer_widths, activation, heads: Vec::new() }
    }

    pub fn with_heads(mut self, heads: Vec<Head>) -> Self {
        self.heads = heads;
        self
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.layer_widths.len() >= 2, Config, "need at least input and output widths");
        ensure!(self.layer_widths.iter().all(|&w| w > 0), Config, "layer widths must be positive");
        if let Activation::Sine { w0 } = self.activation {
            ensure!(w0 > 0.0 && w0.is_finite(), Config, "w0 must be positive, got {w0}");
        }
        if !self.heads.is_empty() {
            let mut next = 0;
            for h in &self.heads {
                ensure!(h.offset == next && h.width > 0, Config, "heads must tile the output in order");
                next += h.width;
            }
            ensure!(
                next == self.output_width(),
                Config,
                "head widths sum to {next}, output width is {}",
                self.output_width()
            );
        }
        Ok(())
    }

    /// Final activation per output unit.
    pub(crate) fn output_activations(&self) -> Vec<HeadActivation> {
        if self.heads.is_empty() {
            return vec![HeadActivation::Linear; self.output_width()];
        }
        self.heads.iter().flat_map(|h| std::iter::repeat_n(h.activation, h.width)).collect()
    }
}
