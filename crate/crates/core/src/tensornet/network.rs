use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Shape of the value flowing between layers: a channel map or a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Map { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Map { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Layer description used to build a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv { out_ch: usize, k: usize, stride: usize },
    Relu,
    MaxPool2,
    GlobalAvgPool,
    ConcatSide,
    Dense { out_dim: usize },
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv {
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        /// `[out_ch][in_ch][k][k]` row-major.
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    MaxPool2,
    GlobalAvgPool,
    ConcatSide,
    Dense {
        in_dim: usize,
        out_dim: usize,
        /// `[out_dim][in_dim]` row-major.
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
}

impl Layer {
    fn n_weight(&self) -> usize {
        match self {
            Layer::Conv { weight, .. } | Layer::Dense { weight, .. } => weight.len(),
            _ => 0,
        }
    }
}

/// Per-layer auxiliary data captured during the forward pass.
enum Aux {
    None,
    Pool(Vec<usize>),
}

/// Activations of one forward pass: `acts[0]` is the input, `acts[i+1]` the
/// output of layer `i`.
pub struct ForwardCache {
    acts: Vec<Vec<f64>>,
    aux: Vec<Aux>,
    side: Option<Vec<f64>>,
}

/// Weight/bias gradients aligned with the network's layers. Accumulates
/// across examples; scale by 1/batch before the optimizer step.
#[derive(Debug, Clone)]
pub struct Gradients {
    slots: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            slots: net
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Conv { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                        (vec![0.0; weight.len()], vec![0.0; bias.len()])
                    }
                    _ => (Vec::new(), Vec::new()),
                })
                .collect(),
        }
    }

    pub fn reset(&mut self) {
        for (w, b) in &mut self.slots {
            w.fill(0.0);
            b.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.slots {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v *= factor;
            }
        }
    }

    /// Weight/bias gradient arrays of one layer, for custom training loops.
    pub fn slot_mut(&mut self, layer: usize) -> (&mut Vec<f64>, &mut Vec<f64>) {
        let (w, b) = &mut self.slots[layer];
        (w, b)
    }

    /// Flat view in the same order as [`Network::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (w, b) in &self.slots {
            if !w.is_empty() {
                out.push(w.as_slice());
                out.push(b.as_slice());
            }
        }
        out
    }
}

/// Feed-forward network over f64 values. Shapes are validated at
/// construction; forward/backward never reshape silently.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    /// `shapes[0]` is the input shape, `shapes[i+1]` the output of layer `i`.
    shapes: Vec<Shape>,
    side_dim: usize,
}

impl Network {
    /// Validate the layer stack against the input shape and build the network
    /// with zeroed parameters.
    pub fn new(input: Shape, side_dim: usize, specs: &[LayerSpec]) -> Result<Self> {
        let mut shapes = vec![input];
        let mut layers = Vec::with_capacity(specs.len());
        let mut concat_seen = false;
        for (i, spec) in specs.iter().enumerate() {
            let cur = *shapes.last().unwrap();
            let bad = |msg: String| Error::ShapeMismatch(format!("layer {i}: {msg}"));
            let (layer, next) = match *spec {
                LayerSpec::Conv { out_ch, k, stride } => {
                    let Shape::Map { c, h, w } = cur else {
                        return Err(bad(format!("conv needs a channel map, got {cur:?}")));
                    };
                    if k == 0 || stride == 0 || out_ch == 0 {
                        return Err(bad("conv parameters must be positive".into()));
                    }
                    if h < k || w < k {
                        return Err(bad(format!("conv {k}x{k} does not fit {h}x{w} input")));
                    }
                    let h_out = (h - k) / stride + 1;
                    let w_out = (w - k) / stride + 1;
                    (
                        Layer::Conv {
                            in_ch: c,
                            out_ch,
                            k,
                            stride,
                            weight: vec![0.0; out_ch * c * k * k],
                            bias: vec![0.0; out_ch],
                        },
                        Shape::Map {
                            c: out_ch,
                            h: h_out,
                            w: w_out,
                        },
                    )
                }
                LayerSpec::Relu => (Layer::Relu, cur),
                LayerSpec::MaxPool2 => {
                    let Shape::Map { c, h, w } = cur else {
                        return Err(bad(format!("maxpool needs a channel map, got {cur:?}")));
                    };
                    if h < 2 || w < 2 {
                        return Err(bad(format!("maxpool 2x2 does not fit {h}x{w} input")));
                    }
                    (
                        Layer::MaxPool2,
                        Shape::Map {
                            c,
                            h: h / 2,
                            w: w / 2,
                        },
                    )
                }
                LayerSpec::GlobalAvgPool => {
                    let Shape::Map { c, .. } = cur else {
                        return Err(bad(format!("global pool needs a channel map, got {cur:?}")));
                    };
                    (Layer::GlobalAvgPool, Shape::Flat(c))
                }
                LayerSpec::ConcatSide => {
                    let Shape::Flat(n) = cur else {
                        return Err(bad(format!("concat needs a flat vector, got {cur:?}")));
                    };
                    if side_dim == 0 {
                        return Err(bad("concat layer requires side_dim > 0".into()));
                    }
                    if concat_seen {
                        return Err(bad("only one concat layer is supported".into()));
                    }
                    concat_seen = true;
                    (Layer::ConcatSide, Shape::Flat(n + side_dim))
                }
                LayerSpec::Dense { out_dim } => {
                    let Shape::Flat(n) = cur else {
                        return Err(bad(format!("dense needs a flat vector, got {cur:?}")));
                    };
                    if out_dim == 0 {
                        return Err(bad("dense output must be non-empty".into()));
                    }
                    (
                        Layer::Dense {
                            in_dim: n,
                            out_dim,
                            weight: vec![0.0; out_dim * n],
                            bias: vec![0.0; out_dim],
                        },
                        Shape::Flat(out_dim),
                    )
                }
            };
            layers.push(layer);
            shapes.push(next);
        }
        if side_dim > 0 && !concat_seen {
            return Err(Error::ShapeMismatch(
                "side_dim > 0 but no concat layer in the stack".into(),
            ));
        }
        Ok(Network {
            layers,
            shapes,
            side_dim,
        })
    }

    /// He-style normal initialization of all weights; biases stay zero. The
    /// dense layer fed by a concat starts with its side-input columns at
    /// zero: the fusion is neutral at initialization (side features of any
    /// scale cannot perturb the image path) and their weights grow only
    /// under persistent gradients.
    pub fn init_params(&mut self, stream: &mut rng::Stream) {
        let after_concat: Vec<bool> = std::iter::once(false)
            .chain(self.layers.iter().map(|l| matches!(l, Layer::ConcatSide)))
            .collect();
        let side_dim = self.side_dim;
        for (layer, &fused) in self.layers.iter_mut().zip(&after_concat) {
            match layer {
                Layer::Conv {
                    in_ch, k, weight, ..
                } => {
                    let fan_in = (*in_ch * *k * *k) as f64;
                    let dist = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
                    for w in weight.iter_mut() {
                        *w = dist.sample(stream);
                    }
                }
                Layer::Dense { in_dim, weight, .. } => {
                    // Per-row draws over live columns only, so a fused dense
                    // consumes the stream exactly like the side-free dense of
                    // the same trunk: families sharing a seed share their
                    // initial image pathway bit for bit.
                    let live = if fused { *in_dim - side_dim } else { *in_dim };
                    let dist = Normal::new(0.0, (2.0 / live as f64).sqrt()).unwrap();
                    for row in weight.chunks_mut(*in_dim) {
                        for w in &mut row[..live] {
                            *w = dist.sample(stream);
                        }
                    }
                }
                _ => {}
            }
        }
    }

    pub fn input_shape(&self) -> Shape {
        self.shapes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().unwrap().len()
    }

    pub fn side_dim(&self) -> usize {
        self.side_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    weight.len() + bias.len()
                }
                _ => 0,
            })
            .sum()
    }

    /// Names of the parameter arrays, in [`Network::param_slices`] order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if l.n_weight() > 0 {
                out.push(format!("layer{i}/weight"));
                out.push(format!("layer{i}/bias"));
            }
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.push(weight.as_slice());
                    out.push(bias.as_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    fn check_input(&self, input: &[f64], side: Option<&[f64]>) -> Result<()> {
        if input.len() != self.shapes[0].len() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.shapes[0].len()
            )));
        }
        match (self.side_dim, side) {
            (0, None) => Ok(()),
            (0, Some(_)) => Err(Error::ShapeMismatch(
                "network has no concat layer but a side input was supplied".into(),
            )),
            (_, None) => Err(Error::ShapeMismatch(
                "network has a concat layer but no side input was supplied".into(),
            )),
            (d, Some(s)) if s.len() != d => Err(Error::ShapeMismatch(format!(
                "side input has {} values, network expects {d}",
                s.len()
            ))),
            _ => Ok(()),
        }
    }

    pub fn forward(&self, input: &[f64], side: Option<&[f64]>) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input, side)?.0)
    }

    /// Forward pass for one example, keeping activations for a later
    /// [`Network::backward`].
    pub fn forward_cached(
        &self,
        input: &[f64],
        side: Option<&[f64]>,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(input, side)?;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut aux: Vec<Aux> = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = acts.last().unwrap();
            let (out, a) = match layer {
                Layer::Conv {
                    in_ch,
                    out_ch,
                    k,
                    stride,
                    weight,
                    bias,
                } => {
                    let Shape::Map { h, w, .. } = self.shapes[i] else {
                        unreachable!()
                    };
                    let Shape::Map {
                        h: h_out, w: w_out, ..
                    } = self.shapes[i + 1]
                    else {
                        unreachable!()
                    };
                    let mut out = vec![0.0; out_ch * h_out * w_out];
                    conv_forward(
                        cur, *in_ch, h, w, weight, bias, *out_ch, *k, *stride, &mut out, h_out,
                        w_out,
                    );
                    (out, Aux::None)
                }
                Layer::Relu => (cur.iter().map(|v| v.max(0.0)).collect(), Aux::None),
                Layer::MaxPool2 => {
                    let Shape::Map { c, h, w } = self.shapes[i] else {
                        unreachable!()
                    };
                    let (h_out, w_out) = (h / 2, w / 2);
                    let mut out = vec![0.0; c * h_out * w_out];
                    let mut arg = vec![0usize; c * h_out * w_out];
                    for ch in 0..c {
                        for oy in 0..h_out {
                            for ox in 0..w_out {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_idx = 0usize;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        let idx = ch * h * w + (oy * 2 + dy) * w + ox * 2 + dx;
                                        if cur[idx] > best {
                                            best = cur[idx];
                                            best_idx = idx;
                                        }
                                    }
                                }
                                let o = ch * h_out * w_out + oy * w_out + ox;
                                out[o] = best;
                                arg[o] = best_idx;
                            }
                        }
                    }
                    (out, Aux::Pool(arg))
                }
                Layer::GlobalAvgPool => {
                    let Shape::Map { c, h, w } = self.shapes[i] else {
                        unreachable!()
                    };
                    let n = (h * w) as f64;
                    let out = (0..c)
                        .map(|ch| cur[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / n)
                        .collect();
                    (out, Aux::None)
                }
                Layer::ConcatSide => {
                    let mut out = cur.clone();
                    out.extend_from_slice(side.unwrap());
                    (out, Aux::None)
                }
                Layer::Dense {
                    in_dim,
                    out_dim,
                    weight,
                    bias,
                } => {
                    let mut out = bias.clone();
                    for (o, out_v) in out.iter_mut().enumerate().take(*out_dim) {
                        let row = &weight[o * in_dim..(o + 1) * in_dim];
                        *out_v += row.iter().zip(cur.iter()).map(|(a, b)| a * b).sum::<f64>();
                    }
                    (out, Aux::None)
                }
            };
            acts.push(out);
            aux.push(a);
        }
        let out = acts.last().unwrap().clone();
        Ok((
            out,
            ForwardCache {
                acts,
                aux,
                side: side.map(|s| s.to_vec()),
            },
        ))
    }

    /// Backpropagate `dout` (gradient of the loss w.r.t. the network output)
    /// through the cached forward pass, accumulating parameter gradients.
    pub fn backward(&self, cache: &ForwardCache, dout: &[f64], grads: &mut Gradients) {
        assert_eq!(dout.len(), self.output_dim(), "loss gradient shape");
        let mut grad = dout.to_vec();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.acts[i];
            // the gradient w.r.t. the network input itself is never used
            let need_din = i > 0;
            let (dw, db) = &mut grads.slots[i];
            grad = match &self.layers[i] {
                Layer::Conv {
                    in_ch,
                    out_ch,
                    k,
                    stride,
                    weight,
                    ..
                } => {
                    let Shape::Map { h, w, .. } = self.shapes[i] else {
                        unreachable!()
                    };
                    let Shape::Map {
                        h: h_out, w: w_out, ..
                    } = self.shapes[i + 1]
                    else {
                        unreachable!()
                    };
                    conv_backward(
                        input, *in_ch, h, w, weight, *out_ch, *k, *stride, &grad, h_out, w_out,
                        dw, db, need_din,
                    )
                }
                Layer::Relu => {
                    if need_din {
                        input
                            .iter()
                            .zip(grad.iter())
                            .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                            .collect()
                    } else {
                        Vec::new()
                    }
                }
                Layer::MaxPool2 => {
                    if need_din {
                        let Aux::Pool(arg) = &cache.aux[i] else {
                            unreachable!()
                        };
                        let mut din = vec![0.0; input.len()];
                        for (o, idx) in arg.iter().enumerate() {
                            din[*idx] += grad[o];
                        }
                        din
                    } else {
                        Vec::new()
                    }
                }
                Layer::GlobalAvgPool => {
                    if need_din {
                        let Shape::Map { c, h, w } = self.shapes[i] else {
                            unreachable!()
                        };
                        let n = (h * w) as f64;
                        let mut din = vec![0.0; input.len()];
                        for ch in 0..c {
                            let g = grad[ch] / n;
                            for v in &mut din[ch * h * w..(ch + 1) * h * w] {
                                *v = g;
                            }
                        }
                        din
                    } else {
                        Vec::new()
                    }
                }
                Layer::ConcatSide => {
                    // gradient w.r.t. the side input is dropped: side features
                    // have no trainable parameters upstream
                    if need_din {
                        grad[..input.len()].to_vec()
                    } else {
                        Vec::new()
                    }
                }
                Layer::Dense {
                    in_dim,
                    out_dim,
                    weight,
                    ..
                } => {
                    for o in 0..*out_dim {
                        db[o] += grad[o];
                        let row = &mut dw[o * in_dim..(o + 1) * in_dim];
                        let g = grad[o];
                        for (r, x) in row.iter_mut().zip(input.iter()) {
                            *r += g * x;
                        }
                    }
                    if need_din {
                        let mut din = vec![0.0; *in_dim];
                        for o in 0..*out_dim {
                            let row = &weight[o * in_dim..(o + 1) * in_dim];
                            let g = grad[o];
                            for (d, w) in din.iter_mut().zip(row.iter()) {
                                *d += g * w;
                            }
                        }
                        din
                    } else {
                        Vec::new()
                    }
                }
            };
        }
        let _ = cache.side.as_ref();
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    input: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    out_ch: usize,
    k: usize,
    stride: usize,
    out: &mut [f64],
    h_out: usize,
    w_out: usize,
) {
    for oc in 0..out_ch {
        let out_base = oc * h_out * w_out;
        out[out_base..out_base + h_out * w_out].fill(bias[oc]);
        for ic in 0..in_ch {
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((oc * in_ch + ic) * k + ky) * k + kx];
                    for oy in 0..h_out {
                        let in_base = ic * h * w + (oy * stride + ky) * w + kx;
                        let row = &mut out[out_base + oy * w_out..out_base + (oy + 1) * w_out];
                        if stride == 1 {
                            let in_row = &input[in_base..in_base + w_out];
                            for (o, x) in row.iter_mut().zip(in_row.iter()) {
                                *o += wv * x;
                            }
                        } else {
                            for (ox, o) in row.iter_mut().enumerate() {
                                *o += wv * input[in_base + ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    out_ch: usize,
    k: usize,
    stride: usize,
    dout: &[f64],
    h_out: usize,
    w_out: usize,
    dw: &mut [f64],
    db: &mut [f64],
    need_din: bool,
) -> Vec<f64> {
    for oc in 0..out_ch {
        let out_base = oc * h_out * w_out;
        db[oc] += dout[out_base..out_base + h_out * w_out].iter().sum::<f64>();
        for ic in 0..in_ch {
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = 0.0;
                    for oy in 0..h_out {
                        let in_base = ic * h * w + (oy * stride + ky) * w + kx;
                        let g_row = &dout[out_base + oy * w_out..out_base + (oy + 1) * w_out];
                        if stride == 1 {
                            let in_row = &input[in_base..in_base + w_out];
                            acc += g_row
                                .iter()
                                .zip(in_row.iter())
                                .map(|(g, x)| g * x)
                                .sum::<f64>();
                        } else {
                            for (ox, g) in g_row.iter().enumerate() {
                                acc += g * input[in_base + ox * stride];
                            }
                        }
                    }
                    dw[((oc * in_ch + ic) * k + ky) * k + kx] += acc;
                }
            }
        }
    }
    if !need_din {
        return Vec::new();
    }
    let mut din = vec![0.0; in_ch * h * w];
    for oc in 0..out_ch {
        let out_base = oc * h_out * w_out;
        for ic in 0..in_ch {
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((oc * in_ch + ic) * k + ky) * k + kx];
                    for oy in 0..h_out {
                        let in_base = ic * h * w + (oy * stride + ky) * w + kx;
                        let g_row = &dout[out_base + oy * w_out..out_base + (oy + 1) * w_out];
                        if stride == 1 {
                            let d_row = &mut din[in_base..in_base + w_out];
                            for (d, g) in d_row.iter_mut().zip(g_row.iter()) {
                                *d += wv * g;
                            }
                        } else {
                            for (ox, g) in g_row.iter().enumerate() {
                                din[in_base + ox * stride] += wv * g;
                            }
                        }
                    }
                }
            }
        }
    }
    din
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensornet::loss_mse;

    fn fill_random(net: &mut Network, seed: u64) {
        let mut stream = rng::stream(seed, "test/params");
        let dist = Normal::new(0.0, 0.5).unwrap();
        for p in net.param_slices_mut() {
            for v in p.iter_mut() {
                *v = dist.sample(&mut stream);
            }
        }
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut stream = rng::stream(seed, "test/data");
        let dist = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| dist.sample(&mut stream)).collect()
    }

    /// Central finite-difference check of every parameter gradient.
    fn check_gradients(net: &mut Network, input: &[f64], side: Option<&[f64]>, target: &[f64]) {
        let (out, cache) = net.forward_cached(input, side).unwrap();
        let (_, dout) = loss_mse(&out, target);
        let mut grads = Gradients::zeros_like(net);
        net.backward(&cache, &dout, &mut grads);
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

        let h = 1e-4;
        let n_slots = analytic.len();
        for slot in 0..n_slots {
            for idx in 0..analytic[slot].len() {
                let orig = net.param_slices()[slot][idx];
                net.param_slices_mut()[slot][idx] = orig + h;
                let (out_p, _) = loss_mse(&net.forward(input, side).unwrap(), target);
                net.param_slices_mut()[slot][idx] = orig - h;
                let (out_m, _) = loss_mse(&net.forward(input, side).unwrap(), target);
                net.param_slices_mut()[slot][idx] = orig;
                let fd = (out_p - out_m) / (2.0 * h);
                let a = analytic[slot][idx];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
                assert!(
                    rel <= 1e-6,
                    "slot {slot} idx {idx}: analytic {a} vs fd {fd} (rel {rel})"
                );
            }
        }
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let mut net = Network::new(Shape::Flat(3), 0, &[LayerSpec::Dense { out_dim: 3 }]).unwrap();
        {
            let mut params = net.param_slices_mut();
            for i in 0..3 {
                params[0][i * 3 + i] = 1.0;
            }
        }
        let x = vec![0.3, -1.2, 2.5];
        assert_eq!(net.forward(&x, None).unwrap(), x);
    }

    #[test]
    fn one_by_one_conv_doubles_constant_image() {
        let mut net = Network::new(
            Shape::Map { c: 1, h: 4, w: 4 },
            0,
            &[LayerSpec::Conv {
                out_ch: 1,
                k: 1,
                stride: 1,
            }],
        )
        .unwrap();
        net.param_slices_mut()[0][0] = 2.0;
        let out = net.forward(&vec![0.5; 16], None).unwrap();
        assert!(out.iter().all(|v| (*v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn gradients_match_finite_differences_two_conv_net() {
        let mut net = Network::new(
            Shape::Map { c: 2, h: 7, w: 7 },
            0,
            &[
                LayerSpec::Conv {
                    out_ch: 3,
                    k: 3,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Conv {
                    out_ch: 4,
                    k: 2,
                    stride: 2,
                },
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { out_dim: 2 },
            ],
        )
        .unwrap();
        fill_random(&mut net, 1);
        let input = random_vec(2 * 7 * 7, 2);
        let target = random_vec(2, 3);
        check_gradients(&mut net, &input, None, &target);
    }

    #[test]
    fn gradients_match_finite_differences_pool_net() {
        let mut net = Network::new(
            Shape::Map { c: 1, h: 6, w: 6 },
            0,
            &[
                LayerSpec::Conv {
                    out_ch: 2,
                    k: 3,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { out_dim: 3 },
            ],
        )
        .unwrap();
        fill_random(&mut net, 4);
        let input = random_vec(36, 5);
        let target = random_vec(3, 6);
        check_gradients(&mut net, &input, None, &target);
    }

    #[test]
    fn gradients_match_finite_differences_concat_net() {
        let mut net = Network::new(
            Shape::Map { c: 1, h: 5, w: 5 },
            3,
            &[
                LayerSpec::Conv {
                    out_ch: 2,
                    k: 3,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::ConcatSide,
                LayerSpec::Dense { out_dim: 4 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_dim: 2 },
            ],
        )
        .unwrap();
        fill_random(&mut net, 7);
        let input = random_vec(25, 8);
        let side = random_vec(3, 9);
        let target = random_vec(2, 10);
        check_gradients(&mut net, &input, Some(&side), &target);
    }

    #[test]
    fn init_zeroes_side_columns_of_the_fusion_dense() {
        let mut net = Network::new(
            Shape::Map { c: 1, h: 6, w: 6 },
            3,
            &[
                LayerSpec::Conv {
                    out_ch: 4,
                    k: 3,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::ConcatSide,
                LayerSpec::Dense { out_dim: 2 },
            ],
        )
        .unwrap();
        net.init_params(&mut rng::stream(3, "init"));
        let slices = net.param_slices();
        // Dense weight is slice 2 (conv w, conv b, dense w, dense b): rows of
        // 4 image columns followed by 3 zeroed side columns.
        let dense_w = slices[2];
        for row in dense_w.chunks(7) {
            assert!(row[..4].iter().all(|v| *v != 0.0));
            assert!(row[4..].iter().all(|v| *v == 0.0));
        }
        // A concat-free dense keeps every column live.
        let mut flat = Network::new(Shape::Flat(5), 0, &[LayerSpec::Dense { out_dim: 2 }]).unwrap();
        flat.init_params(&mut rng::stream(3, "init"));
        assert!(flat.param_slices()[0].iter().all(|v| *v != 0.0));
    }

    #[test]
    fn construction_rejects_bad_shapes() {
        // dense on a channel map
        assert!(Network::new(
            Shape::Map { c: 1, h: 4, w: 4 },
            0,
            &[LayerSpec::Dense { out_dim: 2 }]
        )
        .is_err());
        // conv larger than its input
        assert!(Network::new(
            Shape::Map { c: 1, h: 4, w: 4 },
            0,
            &[LayerSpec::Conv {
                out_ch: 1,
                k: 5,
                stride: 1
            }]
        )
        .is_err());
        // concat without side input
        assert!(Network::new(
            Shape::Flat(4),
            0,
            &[LayerSpec::ConcatSide, LayerSpec::Dense { out_dim: 1 }]
        )
        .is_err());
        // side input without concat
        assert!(Network::new(Shape::Flat(4), 2, &[LayerSpec::Dense { out_dim: 1 }]).is_err());
        // conv on a flat vector
        assert!(Network::new(
            Shape::Flat(9),
            0,
            &[LayerSpec::Conv {
                out_ch: 1,
                k: 3,
                stride: 1
            }]
        )
        .is_err());
    }

    #[test]
    fn forward_rejects_wrong_side_usage() {
        let net = Network::new(Shape::Flat(2), 0, &[LayerSpec::Dense { out_dim: 1 }]).unwrap();
        assert!(net.forward(&[1.0, 2.0], Some(&[1.0])).is_err());
        assert!(net.forward(&[1.0], None).is_err());

        let net2 = Network::new(
            Shape::Flat(2),
            2,
            &[LayerSpec::ConcatSide, LayerSpec::Dense { out_dim: 1 }],
        )
        .unwrap();
        assert!(net2.forward(&[1.0, 2.0], None).is_err());
        assert!(net2.forward(&[1.0, 2.0], Some(&[1.0])).is_err());
        assert!(net2.forward(&[1.0, 2.0], Some(&[1.0, 2.0])).is_ok());
    }

    #[test]
    fn maxpool_drops_odd_edges() {
        let net = Network::new(Shape::Map { c: 1, h: 5, w: 5 }, 0, &[LayerSpec::MaxPool2]).unwrap();
        let input: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let out = net.forward(&input, None).unwrap();
        assert_eq!(out, vec![6.0, 8.0, 16.0, 18.0]);
    }
}
