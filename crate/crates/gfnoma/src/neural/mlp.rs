//! Dense MLP plumbing shared by the encoder and decoder: parameter
//! layout over one flat `f64` vector, batched forward passes, and
//! reverse-mode gradients.
//!
//! Hidden layers use ReLU, output layers a logistic sigmoid. Weights are
//! stored row-major as `outputs x inputs` blocks followed by the bias
//! vector, so a whole network is a contiguous slice and optimizer state
//! maps one-to-one onto parameter indices.

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("need input, at least one hidden and output width")]
    TooFewLayers,
    #[error("layer widths must be positive")]
    ZeroWidth,
}

/// Fully connected network shape: explicit widths from input to output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    layer_widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>) -> Result<Self, SpecError> {
        if layer_widths.len() < 3 {
            return Err(SpecError::TooFewLayers);
        }
        if layer_widths.contains(&0) {
            return Err(SpecError::ZeroWidth);
        }
        Ok(MlpSpec { layer_widths })
    }

    /// Input width, uniform hidden stack, output width.
    pub fn uniform(input: usize, hidden_width: usize, hidden_layers: usize, output: usize) -> Result<Self, SpecError> {
        let mut widths = Vec::with_capacity(hidden_layers + 2);
        widths.push(input);
        widths.extend(std::iter::repeat_n(hidden_width, hidden_layers));
        widths.push(output);
        Self::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// Number of weight layers (one less than the width list).
    pub fn layer_count(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|p| p[0] * p[1] + p[1])
            .sum()
    }
}

/// Location of one layer's weights and bias inside the flat parameter
/// vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl LayerShape {
    pub fn w<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape(
            (self.outputs, self.inputs),
            &params[self.w_off..self.w_off + self.outputs * self.inputs],
        )
        .expect("layer weight slice matches its shape")
    }

    pub fn b<'a>(&self, params: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from_shape(self.outputs, &params[self.b_off..self.b_off + self.outputs])
            .expect("layer bias slice matches its shape")
    }
}

/// Lays a spec out starting at `base`; returns the shapes and the first
/// offset past the network.
pub(crate) fn layer_shapes(spec: &MlpSpec, base: usize) -> (Vec<LayerShape>, usize) {
    let mut shapes = Vec::with_capacity(spec.layer_count());
    let mut off = base;
    for pair in spec.widths().windows(2) {
        let (inputs, outputs) = (pair[0], pair[1]);
        shapes.push(LayerShape {
            inputs,
            outputs,
            w_off: off,
            b_off: off + inputs * outputs,
        });
        off += inputs * outputs + outputs;
    }
    (shapes, off)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Batched input: dense rows, or one hot index per row (the encoder's
/// message input, which turns the first affine layer into a column
/// gather).
pub(crate) enum BatchInput<'a> {
    Dense(ArrayView2<'a, f64>),
    OneHot(&'a [usize]),
}

impl BatchInput<'_> {
    pub fn rows(&self) -> usize {
        match self {
            BatchInput::Dense(x) => x.nrows(),
            BatchInput::OneHot(idx) => idx.len(),
        }
    }
}

/// Post-activation outputs per layer plus the output-layer logits; both
/// are enough to run the backward pass (the ReLU mask is `act > 0`, the
/// sigmoid derivative is `s (1 - s)`).
pub(crate) struct ForwardCache {
    pub acts: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("forward pass caches every layer")
    }
}

pub(crate) fn forward(
    params: &[f64],
    shapes: &[LayerShape],
    input: &BatchInput,
) -> ForwardCache {
    let rows = input.rows();
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(shapes.len());
    let mut logits = Array2::zeros((0, 0));
    for (l, shape) in shapes.iter().enumerate() {
        let mut z = match (l, input) {
            (0, BatchInput::OneHot(idx)) => {
                let w = shape.w(params);
                let b = shape.b(params);
                let mut z = Array2::zeros((rows, shape.outputs));
                for (r, &hot) in idx.iter().enumerate() {
                    let col = w.column(hot);
                    for (o, zv) in z.row_mut(r).iter_mut().enumerate() {
                        *zv = col[o] + b[o];
                    }
                }
                z
            }
            (0, BatchInput::Dense(x)) => {
                let mut z = x.dot(&shape.w(params).t());
                z += &shape.b(params);
                z
            }
            _ => {
                let mut z = acts[l - 1].dot(&shape.w(params).t());
                z += &shape.b(params);
                z
            }
        };
        if l + 1 == shapes.len() {
            logits = z.clone();
            z.mapv_inplace(sigmoid);
        } else {
            z.mapv_inplace(|v| v.max(0.0));
        }
        acts.push(z);
    }
    ForwardCache { acts, logits }
}

/// Reverse pass. `dz_out` is the loss gradient with respect to the
/// output-layer pre-activations (callers fold the sigmoid derivative in,
/// which keeps cross-entropy losses numerically exact). Gradients are
/// accumulated into `grads` at the same offsets as `params`; the return
/// value is the gradient with respect to a dense input, `None` for
/// one-hot input (whose gradient lives entirely in the first layer).
pub(crate) fn backward(
    params: &[f64],
    shapes: &[LayerShape],
    input: &BatchInput,
    cache: &ForwardCache,
    dz_out: Array2<f64>,
    grads: &mut [f64],
) -> Option<Array2<f64>> {
    let mut dz = dz_out;
    for l in (0..shapes.len()).rev() {
        let shape = &shapes[l];
        {
            // bias gradient: column sums of dz
            let db = dz.sum_axis(Axis(0));
            let gb = &mut grads[shape.b_off..shape.b_off + shape.outputs];
            for (g, d) in gb.iter_mut().zip(db.iter()) {
                *g += d;
            }
        }
        if l == 0 {
            match input {
                BatchInput::OneHot(idx) => {
                    // dW[:, hot] += dz row; all other columns untouched
                    let w_base = shape.w_off;
                    for (r, &hot) in idx.iter().enumerate() {
                        for (o, d) in dz.row(r).iter().enumerate() {
                            grads[w_base + o * shape.inputs + hot] += d;
                        }
                    }
                    return None;
                }
                BatchInput::Dense(x) => {
                    let dw = dz.t().dot(x);
                    let mut gw = ArrayViewMut2::from_shape(
                        (shape.outputs, shape.inputs),
                        &mut grads[shape.w_off..shape.w_off + shape.outputs * shape.inputs],
                    )
                    .expect("gradient slice matches layer shape");
                    gw += &dw;
                    return Some(dz.dot(&shape.w(params)));
                }
            }
        }
        let prev = &cache.acts[l - 1];
        {
            let dw = dz.t().dot(prev);
            let mut gw = ArrayViewMut2::from_shape(
                (shape.outputs, shape.inputs),
                &mut grads[shape.w_off..shape.w_off + shape.outputs * shape.inputs],
            )
            .expect("gradient slice matches layer shape");
            gw += &dw;
        }
        let mut da = dz.dot(&shape.w(params));
        // ReLU mask from the cached post-activation
        da.zip_mut_with(prev, |d, &a| {
            if a <= 0.0 {
                *d = 0.0;
            }
        });
        dz = da;
    }
    unreachable!("loop returns at layer 0")
}
