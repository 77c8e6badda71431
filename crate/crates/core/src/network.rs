//! Feed-forward tanh network, initialization, and parameter bookkeeping.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, TapeNum, Var};
use crate::error::Error;
use crate::rng::SplitMix64;
use crate::Result;

/// Activation applied between affine layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

/// Layer widths `[d_1, ..., d_K]`; the output layer is scalar and there is at
/// least one hidden layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::Config(
                "architecture needs at least one hidden layer".into(),
            ));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::Config("output layer width must be 1".into()));
        }
        if widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(Architecture {
            widths,
            activation: Activation::Tanh,
        })
    }

    /// Convenience constructor: `hidden` layers of equal `width` on top of
    /// `input_dim` inputs.
    pub fn uniform(input_dim: usize, hidden: usize, width: usize) -> Result<Self> {
        let mut widths = vec![input_dim];
        widths.extend(std::iter::repeat_n(width, hidden));
        widths.push(1);
        Architecture::new(widths)
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    /// Total parameter count: sum over layers of (d_k + 1) * d_{k+1}.
    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }
}

/// Network parameters stored flat in canonical order: for each layer, the
/// weight matrix row-major (d_{k+1} x d_k), then the bias vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub arch: Architecture,
    flat: Vec<f64>,
}

impl MlpParams {
    /// Xavier-uniform weights, zero biases; deterministic for a given seed.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut flat = Vec::with_capacity(arch.param_count());
        for w in arch.widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                flat.push(rng.uniform(-bound, bound));
            }
            flat.extend(std::iter::repeat_n(0.0, fan_out));
        }
        MlpParams {
            arch: arch.clone(),
            flat,
        }
    }

    pub fn zeros(arch: &Architecture) -> Self {
        MlpParams {
            arch: arch.clone(),
            flat: vec![0.0; arch.param_count()],
        }
    }

    /// Canonical flat view of the parameters.
    pub fn flatten(&self) -> &[f64] {
        &self.flat
    }

    /// Rebuild from a flat vector in canonical order.
    pub fn unflatten(arch: &Architecture, flat: &[f64]) -> Result<Self> {
        if flat.len() != arch.param_count() {
            return Err(Error::DimensionMismatch {
                expected: arch.param_count(),
                got: flat.len(),
            });
        }
        Ok(MlpParams {
            arch: arch.clone(),
            flat: flat.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    /// Plain f64 forward pass (no tape) for fast field evaluation.
    pub fn forward_f64(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.arch.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim(),
                got: input.len(),
            });
        }
        let mut z: Vec<f64> = input.to_vec();
        let mut next = Vec::new();
        let mut off = 0;
        let layers = self.arch.layer_count();
        for (k, w) in self.arch.widths.windows(2).enumerate() {
            let (din, dout) = (w[0], w[1]);
            let weights = &self.flat[off..off + din * dout];
            let biases = &self.flat[off + din * dout..off + din * dout + dout];
            off += (din + 1) * dout;
            next.clear();
            for j in 0..dout {
                let mut acc = biases[j];
                let row = &weights[j * din..(j + 1) * din];
                for (wi, zi) in row.iter().zip(&z) {
                    acc += wi * zi;
                }
                if k + 1 < layers {
                    acc = acc.tanh();
                }
                next.push(acc);
            }
            std::mem::swap(&mut z, &mut next);
        }
        Ok(z[0])
    }

    /// Save the snapshot as `.params.json`: architecture plus the flat vector.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let params: MlpParams = serde_json::from_str(&text)?;
        if params.flat.len() != params.arch.param_count() {
            return Err(Error::Config("parameter snapshot length mismatch".into()));
        }
        Ok(params)
    }
}

/// Network parameters lifted onto a tape, one leaf per parameter, in the same
/// canonical order as [`MlpParams::flatten`]. Leaf indices are contiguous so
/// replay templates can set and read them as a block.
pub struct MlpVars<'t> {
    pub arch: Architecture,
    leaves: Vec<Var<'t>>,
}

impl<'t> MlpVars<'t> {
    /// Lift parameters as settable leaves (for templates and loss gradients).
    pub fn lift(tape: &'t Tape, params: &MlpParams) -> Self {
        let leaves = params.flat.iter().map(|&v| tape.leaf(v)).collect();
        MlpVars {
            arch: params.arch.clone(),
            leaves,
        }
    }

    pub fn leaves(&self) -> &[Var<'t>] {
        &self.leaves
    }

    /// Tape indices of the parameter leaves in canonical order.
    pub fn leaf_indices(&self) -> Vec<u32> {
        self.leaves.iter().map(|v| v.index()).collect()
    }

    /// Forward pass: affine maps with tanh between them, no activation on the
    /// output layer. Works for plain variables and for duals.
    pub fn forward<T: TapeNum<'t>>(&self, inputs: &[T]) -> Result<T> {
        if inputs.len() != self.arch.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim(),
                got: inputs.len(),
            });
        }
        let mut z: Vec<T> = inputs.to_vec();
        let mut off = 0;
        let layers = self.arch.layer_count();
        for (k, w) in self.arch.widths.windows(2).enumerate() {
            let (din, dout) = (w[0], w[1]);
            let mut next = Vec::with_capacity(dout);
            for j in 0..dout {
                let mut acc = T::from_var(self.leaves[off + din * dout + j]); // bias
                for (i, zi) in z.iter().enumerate() {
                    acc = acc + T::from_var(self.leaves[off + j * din + i]) * *zi;
                }
                if k + 1 < layers {
                    acc = acc.tanh();
                }
                next.push(acc);
            }
            off += (din + 1) * dout;
            z = next;
        }
        Ok(z[0])
    }
}
