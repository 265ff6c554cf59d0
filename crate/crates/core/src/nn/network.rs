//! Forward and backward passes of the fixed conv + dense architecture.
//!
//! All parameters live in one flat vector; each layer owns a weight and a
//! bias range inside it. Convolutions are 3x3 with zero padding 1 and run as
//! im2col + GEMM.

use rand::Rng;

use super::config::NetworkConfig;
use super::real::{gemm, Mat, Real};
use crate::error::{Error, Result};
use crate::rng::{stream, Stage, MODEL_LEVEL};

const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerShape {
    Conv {
        cin: usize,
        cout: usize,
        stride: usize,
        in_h: usize,
        in_w: usize,
        out_h: usize,
        out_w: usize,
    },
    Dense {
        nin: usize,
        nout: usize,
    },
}

impl LayerShape {
    pub fn input_len(&self) -> usize {
        match *self {
            LayerShape::Conv { cin, in_h, in_w, .. } => cin * in_h * in_w,
            LayerShape::Dense { nin, .. } => nin,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerShape::Conv { cout, out_h, out_w, .. } => cout * out_h * out_w,
            LayerShape::Dense { nout, .. } => nout,
        }
    }

    pub fn weight_len(&self) -> usize {
        match *self {
            LayerShape::Conv { cin, cout, .. } => cout * cin * TAPS,
            LayerShape::Dense { nin, nout } => nin * nout,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerShape::Conv { cout, .. } => cout,
            LayerShape::Dense { nout, .. } => nout,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerShape::Conv { cin, .. } => cin * TAPS,
            LayerShape::Dense { nin, .. } => nin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    pub shape: LayerShape,
    pub relu: bool,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

/// Layer inputs recorded during a forward pass; `values[i]` feeds layer `i`
/// and the last entry is the network output.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub values: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    layers: Vec<Layer>,
    params: Vec<T>,
}

fn layout(config: &NetworkConfig) -> (Vec<Layer>, usize) {
    let mut layers = Vec::new();
    let mut offset = 0;
    let (mut h, mut w, mut c) = (config.input_size, config.input_size, 1usize);
    let mut push = |shape: LayerShape, relu: bool, offset: &mut usize| {
        let weight_offset = *offset;
        let bias_offset = weight_offset + shape.weight_len();
        *offset = bias_offset + shape.bias_len();
        layers.push(Layer {
            shape,
            relu,
            weight_offset,
            bias_offset,
        });
    };
    for (&cout, &stride) in config.channels.iter().zip(&config.strides) {
        let out_h = (h - 1) / stride + 1;
        let out_w = (w - 1) / stride + 1;
        push(
            LayerShape::Conv {
                cin: c,
                cout,
                stride,
                in_h: h,
                in_w: w,
                out_h,
                out_w,
            },
            true,
            &mut offset,
        );
        (h, w, c) = (out_h, out_w, cout);
    }
    push(
        LayerShape::Dense {
            nin: c * h * w,
            nout: config.hidden,
        },
        true,
        &mut offset,
    );
    push(
        LayerShape::Dense {
            nin: config.hidden,
            nout: config.outputs,
        },
        false,
        &mut offset,
    );
    (layers, offset)
}

/// Unfolds a `cin x h x w` input into `(cin·9) x (out_h·out_w)` patches.
fn im2col<T: Real>(input: &[T], shape: &LayerShape, cols: &mut [T]) {
    let LayerShape::Conv {
        cin,
        stride,
        in_h,
        in_w,
        out_h,
        out_w,
        ..
    } = *shape
    else {
        unreachable!("im2col on a dense layer")
    };
    let plane = out_h * out_w;
    for ci in 0..cin {
        let src = &input[ci * in_h * in_w..(ci + 1) * in_h * in_w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ci * TAPS + ky * KERNEL + kx) * plane;
                let dst = &mut cols[row..row + plane];
                for oy in 0..out_h {
                    let y = (oy * stride + ky) as isize - 1;
                    let line = &mut dst[oy * out_w..(oy + 1) * out_w];
                    if y < 0 || y >= in_h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let srow = &src[y as usize * in_w..(y as usize + 1) * in_w];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let x = (ox * stride + kx) as isize - 1;
                        *d = if x < 0 || x >= in_w as isize {
                            T::zero()
                        } else {
                            srow[x as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im<T: Real>(cols: &[T], shape: &LayerShape, grad_in: &mut [T]) {
    let LayerShape::Conv {
        cin,
        stride,
        in_h,
        in_w,
        out_h,
        out_w,
        ..
    } = *shape
    else {
        unreachable!("col2im on a dense layer")
    };
    grad_in.fill(T::zero());
    let plane = out_h * out_w;
    for ci in 0..cin {
        let dst = &mut grad_in[ci * in_h * in_w..(ci + 1) * in_h * in_w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ci * TAPS + ky * KERNEL + kx) * plane;
                let src = &cols[row..row + plane];
                for oy in 0..out_h {
                    let y = (oy * stride + ky) as isize - 1;
                    if y < 0 || y >= in_h as isize {
                        continue;
                    }
                    for ox in 0..out_w {
                        let x = (ox * stride + kx) as isize - 1;
                        if x >= 0 && x < in_w as isize {
                            dst[y as usize * in_w + x as usize] += src[oy * out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Network<T> {
    /// Network with every parameter zero.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let (layers, n) = layout(&config);
        Ok(Self {
            config,
            layers,
            params: vec![T::zero(); n],
        })
    }

    /// Fan-in scaled uniform weights, zero biases, drawn from the `Init`
    /// stream of `seed`.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = stream(seed, 0, MODEL_LEVEL, Stage::Init);
        let last = net.layers.len() - 1;
        for (i, layer) in net.layers.iter().enumerate() {
            let gain = if i == last { 3.0 } else { 6.0 };
            let limit = (gain / layer.shape.fan_in() as f64).sqrt();
            let w = &mut net.params[layer.weight_offset..layer.weight_offset + layer.shape.weight_len()];
            for v in w {
                *v = T::from_f64(rng.random_range(-limit..limit));
            }
        }
        Ok(net)
    }

    pub fn from_params(config: NetworkConfig, params: Vec<T>) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        if params.len() != net.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn outputs(&self) -> usize {
        self.config.outputs
    }

    pub fn input_len(&self) -> usize {
        self.config.input_size * self.config.input_size
    }

    /// Output-layer bias range.
    pub fn output_bias_mut(&mut self) -> &mut [T] {
        let last = *self.layers.last().expect("network has layers");
        &mut self.params[last.bias_offset..last.bias_offset + last.shape.bias_len()]
    }

    /// Maps raw HU pixels to network inputs.
    pub fn normalize(&self, hu: &[f32]) -> Vec<T> {
        let n = self.config.normalization;
        hu.iter().map(|&v| T::from_f64(n.apply(v as f64))).collect()
    }

    fn layer_forward(&self, layer: &Layer, input: &[T], scratch: &mut Vec<T>) -> Vec<T> {
        let w = &self.params[layer.weight_offset..layer.weight_offset + layer.shape.weight_len()];
        let b = &self.params[layer.bias_offset..layer.bias_offset + layer.shape.bias_len()];
        let mut out = vec![T::zero(); layer.shape.output_len()];
        match layer.shape {
            LayerShape::Conv {
                cin,
                cout,
                out_h,
                out_w,
                ..
            } => {
                let plane = out_h * out_w;
                scratch.resize(cin * TAPS * plane, T::zero());
                im2col(input, &layer.shape, scratch);
                for (c, row) in out.chunks_exact_mut(plane).enumerate() {
                    row.fill(b[c]);
                }
                gemm(
                    Mat::new(w, cout, cin * TAPS),
                    Mat::new(scratch, cin * TAPS, plane),
                    &mut out,
                    true,
                );
            }
            LayerShape::Dense { nin, nout } => {
                out.copy_from_slice(b);
                gemm(Mat::new(w, nout, nin), Mat::new(input, nin, 1), &mut out, true);
            }
        }
        if layer.relu {
            for v in &mut out {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        out
    }

    /// Runs one normalised input through the network, recording every layer
    /// input for [`Network::backward`].
    pub fn forward_trace(&self, input: Vec<T>) -> Result<Trace<T>> {
        if input.len() != self.input_len() {
            return Err(Error::invalid(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_len()
            )));
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input);
        let mut scratch = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let out = self.layer_forward(layer, values.last().expect("non-empty"), &mut scratch);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: i,
                    what: "activation",
                });
            }
            values.push(out);
        }
        Ok(Trace { values })
    }

    /// Network output (mm) for one normalised input.
    pub fn forward(&self, input: Vec<T>) -> Result<Vec<T>> {
        let mut trace = self.forward_trace(input)?;
        Ok(trace.values.pop().expect("output recorded"))
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂output` for one traced
    /// sample.
    pub fn backward(&self, trace: &Trace<T>, d_output: &[T], grads: &mut [T]) -> Result<()> {
        assert_eq!(grads.len(), self.params.len());
        assert_eq!(d_output.len(), self.config.outputs);
        let mut delta = d_output.to_vec();
        let mut cols = Vec::new();
        let mut dcols = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.relu {
                let out = &trace.values[i + 1];
                for (d, &a) in delta.iter_mut().zip(out) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            let input = &trace.values[i];
            let (wo, bo) = (layer.weight_offset, layer.bias_offset);
            let (wl, bl) = (layer.shape.weight_len(), layer.shape.bias_len());
            let w = &self.params[wo..wo + wl];
            let need_input_grad = i > 0;
            let mut d_in = Vec::new();
            match layer.shape {
                LayerShape::Conv {
                    cin,
                    cout,
                    out_h,
                    out_w,
                    ..
                } => {
                    let plane = out_h * out_w;
                    let k = cin * TAPS;
                    cols.resize(k * plane, T::zero());
                    im2col(input, &layer.shape, &mut cols);
                    gemm(
                        Mat::new(&delta, cout, plane),
                        Mat::t(&cols, plane, k),
                        &mut grads[wo..wo + wl],
                        true,
                    );
                    for (c, row) in delta.chunks_exact(plane).enumerate() {
                        let mut s = T::zero();
                        for &v in row {
                            s += v;
                        }
                        grads[bo + c] += s;
                    }
                    if need_input_grad {
                        dcols.resize(k * plane, T::zero());
                        gemm(Mat::t(w, k, cout), Mat::new(&delta, cout, plane), &mut dcols, false);
                        d_in = vec![T::zero(); layer.shape.input_len()];
                        col2im(&dcols, &layer.shape, &mut d_in);
                    }
                }
                LayerShape::Dense { nin, nout } => {
                    gemm(
                        Mat::new(&delta, nout, 1),
                        Mat::new(input, 1, nin),
                        &mut grads[wo..wo + wl],
                        true,
                    );
                    for (g, &d) in grads[bo..bo + bl].iter_mut().zip(&delta) {
                        *g += d;
                    }
                    if need_input_grad {
                        d_in = vec![T::zero(); nin];
                        gemm(Mat::t(w, nin, nout), Mat::new(&delta, nout, 1), &mut d_in, false);
                    }
                }
            }
            if need_input_grad {
                delta = d_in;
            }
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                layer: self.layers.len(),
                what: "gradient",
            });
        }
        Ok(())
    }

    /// Converts parameters to another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            layers: self.layers.clone(),
            params: self.params.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}
