//! Small convolutional subnet with hand-written forward and reverse passes.
//!
//! A subnet is a stack of zero-padded "same" 2D cross-correlations. Every
//! layer but the last is followed by a leaky rectifier with slope
//! [`LEAKY_SLOPE`]; the last layer is linear and has one output channel. With
//! `skip` set, the first input channel is added to the output.

use crate::error::{check_len, Error, Result};
use crate::rng::Rng;

pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Identity,
}

/// One convolution: kernels `(out, in, k, k)` row-major, one bias per output.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(out_ch: usize, in_ch: usize, kernel: usize) -> Self {
        Self {
            out_ch,
            in_ch,
            kernel,
            weights: vec![0.0; out_ch * in_ch * kernel * kernel],
            bias: vec![0.0; out_ch],
        }
    }

    #[inline]
    fn w(&self, o: usize, i: usize, kr: usize, kc: usize) -> f64 {
        self.weights[((o * self.in_ch + i) * self.kernel + kr) * self.kernel + kc]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvSubnetParams {
    pub layers: Vec<ConvLayer>,
    pub activation: Activation,
    pub skip: bool,
}

/// Architecture of a subnet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubnetSpec {
    pub in_ch: usize,
    pub hidden: usize,
    pub n_layers: usize,
    pub kernel: usize,
}

impl SubnetSpec {
    /// Desk-scale default: 2 layers, 8 hidden channels, 3×3 kernels.
    pub fn small(in_ch: usize) -> Self {
        Self {
            in_ch,
            hidden: 8,
            n_layers: 2,
            kernel: 3,
        }
    }
}

impl ConvSubnetParams {
    /// Uniform init in `±1/√fan_in` for weights and biases.
    pub fn init(spec: SubnetSpec, rng: &mut Rng) -> Result<Self> {
        use rand::Rng as _;
        if spec.kernel.is_multiple_of(2) || spec.n_layers == 0 || spec.in_ch == 0 {
            return Err(Error::Config("subnet needs an odd kernel and at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(spec.n_layers);
        for l in 0..spec.n_layers {
            let in_ch = if l == 0 { spec.in_ch } else { spec.hidden };
            let out_ch = if l + 1 == spec.n_layers { 1 } else { spec.hidden };
            let mut layer = ConvLayer::zeros(out_ch, in_ch, spec.kernel);
            let bound = 1.0 / ((in_ch * spec.kernel * spec.kernel) as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
            layers.push(layer);
        }
        Ok(Self {
            layers,
            activation: Activation::LeakyRelu,
            skip: true,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer::zeros(l.out_ch, l.in_ch, l.kernel))
                .collect(),
            activation: self.activation,
            skip: self.skip,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_ch
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.layers.first() else {
            return Err(Error::Config("subnet has no layers".into()));
        };
        let mut ch = first.in_ch;
        for l in &self.layers {
            if l.in_ch != ch || l.kernel % 2 == 0 {
                return Err(Error::Config("inconsistent subnet layer shapes".into()));
            }
            if l.weights.len() != l.out_ch * l.in_ch * l.kernel * l.kernel || l.bias.len() != l.out_ch {
                return Err(Error::Config("subnet parameter arrays have wrong length".into()));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Numeric("subnet has non-finite parameters".into()));
            }
            ch = l.out_ch;
        }
        if ch != 1 {
            return Err(Error::Config("subnet must end in one output channel".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
    }

    pub fn read_flat(&mut self, src: &mut impl Iterator<Item = f64>) {
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = src.next().expect("flat parameter vector too short");
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }
}

/// Activations recorded by [`subnet_forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct Tape {
    pub shape: (usize, usize),
    /// Input of every layer (`in_ch × h × w`).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation output of every layer.
    pub preacts: Vec<Vec<f64>>,
}

fn conv_forward(layer: &ConvLayer, input: &[f64], (h, w): (usize, usize)) -> Vec<f64> {
    let hw = h * w;
    let p = layer.kernel / 2;
    let mut out = vec![0.0; layer.out_ch * hw];
    for o in 0..layer.out_ch {
        let dst = &mut out[o * hw..(o + 1) * hw];
        dst.iter_mut().for_each(|v| *v = layer.bias[o]);
        for i in 0..layer.in_ch {
            let src = &input[i * hw..(i + 1) * hw];
            for kr in 0..layer.kernel {
                let (r_lo, r_hi) = valid_range(kr, p, h);
                for kc in 0..layer.kernel {
                    let wv = layer.w(o, i, kr, kc);
                    let (c_lo, c_hi) = valid_range(kc, p, w);
                    for r in r_lo..r_hi {
                        let sr = r + kr - p;
                        let d = &mut dst[r * w + c_lo..r * w + c_hi];
                        let s = &src[sr * w + c_lo + kc - p..sr * w + c_hi + kc - p];
                        d.iter_mut().zip(s).for_each(|(d, s)| *d += wv * s);
                    }
                }
            }
        }
    }
    out
}

/// Output rows `r` for which `r + k − p` lies in `[0, n)`.
#[inline]
fn valid_range(k: usize, p: usize, n: usize) -> (usize, usize) {
    let lo = p.saturating_sub(k);
    let hi = (n + p).saturating_sub(k).min(n);
    (lo, hi.max(lo))
}

/// Returns `(d_input, d_layer)` given the cotangent of the layer output.
fn conv_backward(layer: &ConvLayer, input: &[f64], dout: &[f64], (h, w): (usize, usize)) -> (Vec<f64>, ConvLayer) {
    let hw = h * w;
    let p = layer.kernel / 2;
    let mut din = vec![0.0; layer.in_ch * hw];
    let mut grad = ConvLayer::zeros(layer.out_ch, layer.in_ch, layer.kernel);
    for o in 0..layer.out_ch {
        let go = &dout[o * hw..(o + 1) * hw];
        grad.bias[o] = go.iter().sum();
        for i in 0..layer.in_ch {
            let src = &input[i * hw..(i + 1) * hw];
            for kr in 0..layer.kernel {
                let (r_lo, r_hi) = valid_range(kr, p, h);
                for kc in 0..layer.kernel {
                    let (c_lo, c_hi) = valid_range(kc, p, w);
                    let wv = layer.w(o, i, kr, kc);
                    let mut acc = 0.0;
                    for r in r_lo..r_hi {
                        let sr = r + kr - p;
                        let g = &go[r * w + c_lo..r * w + c_hi];
                        let s = &src[sr * w + c_lo + kc - p..sr * w + c_hi + kc - p];
                        acc += g.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        let di = &mut din[i * hw + sr * w + c_lo + kc - p..i * hw + sr * w + c_hi + kc - p];
                        di.iter_mut().zip(g).for_each(|(d, g)| *d += wv * g);
                    }
                    grad.weights[((o * layer.in_ch + i) * layer.kernel + kr) * layer.kernel + kc] = acc;
                }
            }
        }
    }
    (din, grad)
}

/// Runs the subnet on `input` (`in_ch` channels of shape `(h, w)`, channel-major).
pub fn subnet_forward(params: &ConvSubnetParams, input: &[f64], shape: (usize, usize)) -> Result<(Vec<f64>, Tape)> {
    let hw = shape.0 * shape.1;
    check_len("subnet input", params.in_channels() * hw, input.len())?;
    let n = params.layers.len();
    let mut tape = Tape {
        shape,
        inputs: Vec::with_capacity(n),
        preacts: Vec::with_capacity(n),
    };
    let mut cur = input.to_vec();
    for (l, layer) in params.layers.iter().enumerate() {
        let pre = conv_forward(layer, &cur, shape);
        let next = if l + 1 < n && params.activation == Activation::LeakyRelu {
            pre.iter().map(|&v| if v > 0.0 { v } else { LEAKY_SLOPE * v }).collect()
        } else {
            pre.clone()
        };
        tape.inputs.push(std::mem::replace(&mut cur, next));
        tape.preacts.push(pre);
    }
    if params.skip {
        cur.iter_mut().zip(&input[..hw]).for_each(|(o, x)| *o += x);
    }
    Ok((cur, tape))
}

/// Reverse pass: cotangents of the input channels and of every parameter.
pub fn subnet_backward(params: &ConvSubnetParams, tape: &Tape, dout: &[f64]) -> Result<(Vec<f64>, ConvSubnetParams)> {
    let hw = tape.shape.0 * tape.shape.1;
    let n = params.layers.len();
    if tape.inputs.len() != n || tape.preacts.len() != n {
        return Err(Error::Config("tape does not match subnet depth".into()));
    }
    check_len("subnet cotangent", hw, dout.len())?;
    check_len("tape input", params.in_channels() * hw, tape.inputs[0].len())?;
    let mut grads = params.zeros_like();
    let mut g = dout.to_vec();
    for l in (0..n).rev() {
        if l + 1 < n && params.activation == Activation::LeakyRelu {
            g.iter_mut()
                .zip(&tape.preacts[l])
                .for_each(|(g, &v)| if v <= 0.0 { *g *= LEAKY_SLOPE });
        }
        let (din, gl) = conv_backward(&params.layers[l], &tape.inputs[l], &g, tape.shape);
        grads.layers[l] = gl;
        g = din;
    }
    if params.skip {
        g[..hw].iter_mut().zip(dout).for_each(|(a, b)| *a += b);
    }
    Ok((g, grads))
}
