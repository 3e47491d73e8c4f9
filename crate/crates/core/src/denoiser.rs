//! Residual convolutional denoiser acting on (real, imaginary) channel pairs.
//!
//! `denoise(x) = x - body(x)`, where `body` is a stack of 3x3 convolutions
//! (zero padding, stride 1) with ReLU after every layer except the last.
//! Activations are stored channel-major: `[channel][row][col]`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{parse_key_values, read_tensor, render_key_values, write_atomic, write_tensor};
use crate::rng::Rng;
use crate::scalar::{Real, C};
use crate::tensor::CTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub c_in: usize,
    pub c_out: usize,
    /// `[c_out][c_in][3][3]`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    fn zeros(c_in: usize, c_out: usize) -> Self {
        Self {
            c_in,
            c_out,
            weight: vec![T::zero(); c_out * c_in * 9],
            bias: vec![T::zero(); c_out],
        }
    }

    #[inline]
    fn w(&self, co: usize, ci: usize, dy: usize, dx: usize) -> T {
        self.weight[((co * self.c_in + ci) * 3 + dy) * 3 + dx]
    }
}

/// Trainable denoiser parameters. Input and output channel counts are 2.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<T> {
    pub layers: Vec<ConvLayer<T>>,
}

/// Accumulated `d loss / d params`, shaped like [`NetParams`].
pub type GradBuffer<T> = NetParams<T>;

fn layer_widths(depth: usize, width: usize) -> Result<Vec<(usize, usize)>> {
    if depth == 0 || (depth > 1 && width == 0) {
        return Err(Error::InvalidArgument(format!(
            "denoiser needs depth >= 1 and width >= 1, got depth {depth} width {width}"
        )));
    }
    Ok((0..depth)
        .map(|l| {
            let c_in = if l == 0 { 2 } else { width };
            let c_out = if l + 1 == depth { 2 } else { width };
            (c_in, c_out)
        })
        .collect())
}

impl<T: Real> NetParams<T> {
    pub fn zeros(depth: usize, width: usize) -> Result<Self> {
        Ok(Self {
            layers: layer_widths(depth, width)?
                .into_iter()
                .map(|(i, o)| ConvLayer::zeros(i, o))
                .collect(),
        })
    }

    /// He-style init: weights `N(0, 2 / (9 c_in))`, biases zero.
    pub fn he_init(depth: usize, width: usize, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(depth, width)?;
        for layer in &mut p.layers {
            let std = (2.0 / (9.0 * layer.c_in as f64)).sqrt();
            for w in &mut layer.weight {
                *w = T::of(std * rng.normal());
            }
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer::zeros(l.c_in, l.c_out))
                .collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        if self.layers.len() > 1 {
            self.layers[0].c_out
        } else {
            2
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters in layer order, weights before biases.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.weight.len();
            l.weight.copy_from_slice(&flat[at..at + n]);
            at += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.c_in == b.c_in && a.c_out == b.c_out)
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += *y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += *y);
        }
    }

    pub fn scale(&mut self, a: T) {
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|x| *x *= a);
            l.bias.iter_mut().for_each(|x| *x *= a);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Writes `layer_XX.jmt` (one `c_out x (9 c_in + 1)` tensor per layer, bias
    /// in the last column) and `net.txt`.
    pub fn write_checkpoint(&self, dir: &Path, seed: u64, step: u64) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            let cols = 9 * l.c_in + 1;
            let mut vals = Vec::with_capacity(l.c_out * cols);
            for co in 0..l.c_out {
                vals.extend_from_slice(&l.weight[co * 9 * l.c_in..(co + 1) * 9 * l.c_in]);
                vals.push(l.bias[co]);
            }
            write_tensor(
                &CTensor::from_real(vec![l.c_out, cols], &vals)?,
                dir.join(format!("layer_{i:02}.jmt")),
            )?;
        }
        let text = render_key_values(&[
            ("depth", self.depth().to_string()),
            ("width", self.width().to_string()),
            ("seed", seed.to_string()),
            ("step", step.to_string()),
        ]);
        write_atomic(&dir.join("net.txt"), text.as_bytes())
    }

    /// Returns the parameters, seed and training step.
    pub fn read_checkpoint(dir: &Path) -> Result<(Self, u64, u64)> {
        let path = dir.join("net.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let (mut depth, mut width, mut seed, mut step) = (None, None, 0u64, 0u64);
        for (k, v) in parse_key_values(&text, &path)? {
            let bad = || Error::format(&path, format!("bad value for `{k}`"));
            match k.as_str() {
                "depth" => depth = Some(v.parse::<usize>().map_err(|_| bad())?),
                "width" => width = Some(v.parse::<usize>().map_err(|_| bad())?),
                "seed" => seed = v.parse().map_err(|_| bad())?,
                "step" => step = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::format(&path, format!("unknown key `{k}`"))),
            }
        }
        let depth = depth.ok_or_else(|| Error::format(&path, "missing depth"))?;
        let width = width.ok_or_else(|| Error::format(&path, "missing width"))?;
        let mut params = Self::zeros(depth, width)?;
        for (i, l) in params.layers.iter_mut().enumerate() {
            let p = dir.join(format!("layer_{i:02}.jmt"));
            let t: CTensor<T> = read_tensor(&p)?;
            let cols = 9 * l.c_in + 1;
            if t.dims() != [l.c_out, cols] {
                return Err(Error::format(&p, format!("unexpected dims {:?}", t.dims())));
            }
            for co in 0..l.c_out {
                for k in 0..9 * l.c_in {
                    l.weight[co * 9 * l.c_in + k] = t[co * cols + k].re;
                }
                l.bias[co] = t[co * cols + cols - 1].re;
            }
        }
        Ok((params, seed, step))
    }
}

/// Column range `[x0, x1)` of outputs that read input column `x + dx - 1`.
#[inline]
fn col_range(w: usize, dx: usize) -> (usize, usize) {
    (if dx == 0 { 1 } else { 0 }, if dx == 2 { w - 1 } else { w })
}

fn conv_forward<T: Real>(layer: &ConvLayer<T>, input: &[T], h: usize, w: usize) -> Vec<T> {
    let plane = h * w;
    let mut out = vec![T::zero(); layer.c_out * plane];
    for co in 0..layer.c_out {
        let o = &mut out[co * plane..(co + 1) * plane];
        o.iter_mut().for_each(|v| *v = layer.bias[co]);
        for ci in 0..layer.c_in {
            let inp = &input[ci * plane..(ci + 1) * plane];
            for dy in 0..3 {
                let (y0, y1) = (if dy == 0 { 1 } else { 0 }, if dy == 2 { h - 1 } else { h });
                for dx in 0..3 {
                    let k = layer.w(co, ci, dy, dx);
                    if k == T::zero() {
                        continue;
                    }
                    let (x0, x1) = col_range(w, dx);
                    for y in y0..y1 {
                        let sy = y + dy - 1;
                        let orow = &mut o[y * w + x0..y * w + x1];
                        let irow = &inp[sy * w + x0 + dx - 1..sy * w + x1 + dx - 1];
                        for (a, &b) in orow.iter_mut().zip(irow) {
                            *a += k * b;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients into `grad` and returns the input cotangent.
fn conv_backward<T: Real>(
    layer: &ConvLayer<T>,
    input: &[T],
    gout: &[T],
    h: usize,
    w: usize,
    grad: Option<&mut ConvLayer<T>>,
    need_input: bool,
) -> Vec<T> {
    let plane = h * w;
    if let Some(grad) = grad {
        for co in 0..layer.c_out {
            let g = &gout[co * plane..(co + 1) * plane];
            grad.bias[co] += g.iter().copied().sum::<T>();
            for ci in 0..layer.c_in {
                let inp = &input[ci * plane..(ci + 1) * plane];
                for dy in 0..3 {
                    let (y0, y1) = (if dy == 0 { 1 } else { 0 }, if dy == 2 { h - 1 } else { h });
                    for dx in 0..3 {
                        let (x0, x1) = col_range(w, dx);
                        let mut acc = T::zero();
                        for y in y0..y1 {
                            let sy = y + dy - 1;
                            let grow = &g[y * w + x0..y * w + x1];
                            let irow = &inp[sy * w + x0 + dx - 1..sy * w + x1 + dx - 1];
                            for (&a, &b) in grow.iter().zip(irow) {
                                acc += a * b;
                            }
                        }
                        grad.weight[((co * layer.c_in + ci) * 3 + dy) * 3 + dx] += acc;
                    }
                }
            }
        }
    }
    let mut gin = vec![T::zero(); if need_input { layer.c_in * plane } else { 0 }];
    if need_input {
        for ci in 0..layer.c_in {
            let gi = &mut gin[ci * plane..(ci + 1) * plane];
            for co in 0..layer.c_out {
                let g = &gout[co * plane..(co + 1) * plane];
                for dy in 0..3 {
                    let (y0, y1) = (if dy == 0 { 1 } else { 0 }, if dy == 2 { h - 1 } else { h });
                    for dx in 0..3 {
                        let k = layer.w(co, ci, dy, dx);
                        if k == T::zero() {
                            continue;
                        }
                        let (x0, x1) = col_range(w, dx);
                        for y in y0..y1 {
                            let sy = y + dy - 1;
                            let irow = &mut gi[sy * w + x0 + dx - 1..sy * w + x1 + dx - 1];
                            let grow = &g[y * w + x0..y * w + x1];
                            for (a, &b) in irow.iter_mut().zip(grow) {
                                *a += k * b;
                            }
                        }
                    }
                }
            }
        }
    }
    gin
}

fn split_channels<T: Real>(x: &CTensor<T>) -> Vec<T> {
    let n = x.len();
    let mut out = vec![T::zero(); 2 * n];
    for (i, z) in x.data().iter().enumerate() {
        out[i] = z.re;
        out[n + i] = z.im;
    }
    out
}

/// Layer inputs recorded during a forward pass.
struct Tape<T> {
    inputs: Vec<Vec<T>>,
    body: Vec<T>,
}

fn forward_tape<T: Real>(params: &NetParams<T>, x: &CTensor<T>) -> Result<(usize, usize, Tape<T>)> {
    let (h, w) = x.shape2()?;
    if !x.is_finite() {
        return Err(Error::NonFinite("denoiser input".into()));
    }
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut act = split_channels(x);
    for (l, layer) in params.layers.iter().enumerate() {
        let mut out = conv_forward(layer, &act, h, w);
        if l + 1 < params.layers.len() {
            out.iter_mut().for_each(|v| *v = v.max(T::zero()));
        }
        inputs.push(std::mem::replace(&mut act, out));
    }
    Ok((h, w, Tape { inputs, body: act }))
}

/// `x - body(x)`.
pub fn denoise<T: Real>(params: &NetParams<T>, x: &CTensor<T>) -> Result<CTensor<T>> {
    let (h, w, tape) = forward_tape(params, x)?;
    let n = h * w;
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, z)| C::new(z.re - tape.body[i], z.im - tape.body[n + i]))
        .collect();
    CTensor::new(vec![h, w], data)
}

/// Reverse-mode pass of [`denoise`]: parameter gradients and input cotangent.
pub fn denoise_vjp<T: Real>(
    params: &NetParams<T>,
    x: &CTensor<T>,
    upstream: &CTensor<T>,
) -> Result<(GradBuffer<T>, CTensor<T>)> {
    let mut grad = params.zeros_like();
    let cot = denoise_vjp_into(params, x, upstream, Some(&mut grad))?;
    Ok((grad, cot))
}

/// Like [`denoise_vjp`] but accumulates into `grad` (skipped when `None`).
pub fn denoise_vjp_into<T: Real>(
    params: &NetParams<T>,
    x: &CTensor<T>,
    upstream: &CTensor<T>,
    mut grad: Option<&mut GradBuffer<T>>,
) -> Result<CTensor<T>> {
    x.same_dims(upstream)?;
    if let Some(g) = grad.as_deref() {
        if !g.same_shape(params) {
            return Err(Error::Shape("gradient buffer does not match parameters".into()));
        }
    }
    let (h, w, tape) = forward_tape(params, x)?;
    let n = h * w;
    // d loss / d body = -upstream.
    let mut g: Vec<T> = split_channels(upstream).into_iter().map(|v| -v).collect();
    let depth = params.layers.len();
    for l in (0..depth).rev() {
        if l + 1 < depth {
            for (gv, &a) in g.iter_mut().zip(&tape.inputs[l + 1]) {
                if a <= T::zero() {
                    *gv = T::zero();
                }
            }
        }
        let layer_grad = grad.as_deref_mut().map(|gb| &mut gb.layers[l]);
        g = conv_backward(&params.layers[l], &tape.inputs[l], &g, h, w, layer_grad, true);
    }
    let data = upstream
        .data()
        .iter()
        .enumerate()
        .map(|(i, u)| C::new(u.re + g[i], u.im + g[n + i]))
        .collect();
    CTensor::new(vec![h, w], data)
}
