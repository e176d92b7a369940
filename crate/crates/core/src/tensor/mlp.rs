use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// One affine layer: `y = x·W + b`, with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_width(&self) -> usize {
        self.weight.cols()
    }
}

/// Feed-forward network with ReLU on hidden layers and identity output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Layer outputs saved by [`Mlp::forward_cached`] for the backward pass.
///
/// The input is not stored; pass it again to [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    outputs: Vec<Matrix>,
}

impl MlpCache {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("an MLP has at least one layer")
    }

    pub fn into_output(mut self) -> Matrix {
        self.outputs.pop().expect("an MLP has at least one layer")
    }
}

impl Mlp {
    /// Kaiming-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs at least input and output widths".into(),
            ));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = if fan_in == 0 {
                    0.0
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-1.0..=1.0) * bound)
                    .collect();
                Dense {
                    weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized above"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs a layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_width() {
                return Err(Error::shape(format!("layer {i}: bias width mismatch")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_width(),
                    i + 1,
                    pair[1].in_width()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    /// Same architecture, all parameters zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Matrix::zeros(l.in_width(), l.out_width()),
                    bias: vec![0.0; l.out_width()],
                })
                .collect(),
        }
    }

    /// Sets every parameter to zero, keeping the shapes.
    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weight.as_mut_slice().fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(Dense::out_width));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].out_width()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.in_width() * l.out_width() + l.out_width())
            .sum()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.into_output())
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<MlpCache> {
        if x.cols() != self.input_width() {
            return Err(Error::shape(format!(
                "MLP expects input width {}, got {}",
                self.input_width(),
                x.cols()
            )));
        }
        let last = self.layers.len() - 1;
        let mut outputs: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { &outputs[l - 1] };
            let mut z = input.matmul(&layer.weight)?;
            z.add_row_vector(&layer.bias);
            if l < last {
                z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            outputs.push(z);
        }
        Ok(MlpCache { outputs })
    }

    /// Accumulates parameter gradients into `grads` given `d_out = ∂L/∂output`.
    /// `x` must be the input the cache was computed from.
    /// Returns `∂L/∂input` when `want_input_grad` is set.
    pub fn backward(
        &self,
        x: &Matrix,
        cache: &MlpCache,
        d_out: &Matrix,
        grads: &mut Mlp,
        want_input_grad: bool,
    ) -> Result<Option<Matrix>> {
        if d_out.shape() != cache.output().shape() {
            return Err(Error::shape(
                "MLP backward: gradient shape differs from output",
            ));
        }
        let mut delta = d_out.clone();
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { x } else { &cache.outputs[l - 1] };
            let g = &mut grads.layers[l];
            let dw = input.t_matmul(&delta)?;
            g.weight.add_scaled(&dw, 1.0);
            for row in delta.row_iter() {
                for (b, d) in g.bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if l == 0 && !want_input_grad {
                return Ok(None);
            }
            let mut d_in = delta.matmul_t(&self.layers[l].weight)?;
            if l > 0 {
                // input of layer l is relu output of layer l-1
                for (d, a) in d_in.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = d_in;
        }
        Ok(Some(delta))
    }

    /// Appends parameters in declaration order: per layer, `W` row-major then `b`.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
    }

    /// Flags matching [`write_params`](Self::write_params): `true` for weights, `false` for biases.
    pub fn write_decay_mask(&self, out: &mut Vec<bool>) {
        for l in &self.layers {
            out.extend(std::iter::repeat_n(true, l.weight.as_slice().len()));
            out.extend(std::iter::repeat_n(false, l.bias.len()));
        }
    }

    /// Reads parameters back; returns the number of values consumed.
    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let need = self.param_count();
        if src.len() < need {
            return Err(Error::shape(format!(
                "need {need} parameters, got {}",
                src.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let w = l.weight.as_mut_slice();
            w.copy_from_slice(&src[off..off + w.len()]);
            off += w.len();
            let n = l.bias.len();
            l.bias.copy_from_slice(&src[off..off + n]);
            off += n;
        }
        Ok(off)
    }
}
