//! Fixed-topology layer stack with unit masks on hidden linear layers.
//!
//! A masked layer computes `h = act(z) * m` with `m ∈ {0,1}^d`, so a unit with
//! `m_j = 0` emits exactly zero and receives exactly zero pre-activation
//! gradient. Convolutional layers are never masked.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::{Activation, Mode};
use super::init::fill_kaiming;
use super::layer::{Conv2d, Layer, LayerKind, LayerSpec, Linear};
use super::mask::UnitMask;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Which tensor of a parameterised layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedNetwork {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    rng_seed: u64,
}

/// Intermediate values retained by [`MaskedNetwork::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Tensor,
    mode: Mode,
    layers: Vec<LayerCache>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// Pre-activation (affine output) for layers with parameters.
    z: Option<Tensor>,
    /// Layer output (post-activation, post-mask).
    out: Tensor,
    /// Per-unit leak slopes drawn for this call; empty unless randomized.
    slopes: Vec<f64>,
    /// im2col buffers for conv layers (`B * (C k k) * (Ho Wo)`).
    cols: Vec<f64>,
    /// Flat argmax input index per pooled output.
    argmax: Vec<usize>,
    /// Output rows actually computed when inactive units were skipped.
    active_out: Option<Vec<usize>>,
    /// Input columns actually read when the producing layer was compacted.
    active_in: Option<Vec<usize>>,
}

/// Gradients produced by [`MaskedNetwork::backward`].
#[derive(Debug, Clone)]
pub struct Backward {
    /// One tensor per parameter, in [`MaskedNetwork::params`] order.
    pub param_grads: Vec<Tensor>,
    /// `dL/dz` per masked layer, each `[B, d]`.
    pub unit_grads: Vec<Tensor>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Pre-activation of layer `layer` (`None` for pooling/flatten).
    pub fn pre_activation(&self, layer: usize) -> Option<&Tensor> {
        self.layers[layer].z.as_ref()
    }

    /// Output of layer `layer` after activation and mask.
    pub fn output(&self, layer: usize) -> &Tensor {
        &self.layers[layer].out
    }

    pub fn slopes(&self, layer: usize) -> &[f64] {
        &self.layers[layer].slopes
    }

    fn layer_input(&self, layer: usize) -> &Tensor {
        if layer == 0 {
            &self.input
        } else {
            &self.layers[layer - 1].out
        }
    }
}

fn conv_out_hw(h: usize, w: usize, k: usize, p: usize) -> (usize, usize) {
    (h + 2 * p + 1 - k, w + 2 * p + 1 - k)
}

impl MaskedNetwork {
    /// Builds a network from layer specs, initializing every weight with
    /// Kaiming-uniform draws from a ChaCha stream seeded by `seed`. Biases start
    /// at zero and masks start all-ones.
    pub fn from_specs(input_shape: &[usize], specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        let n = specs.len();
        for (i, spec) in specs.iter().enumerate() {
            if let Activation::Rsl(p) = spec.activation {
                p.validate()?;
            }
            if spec.masked {
                let hidden_linear = matches!(spec.kind, LayerKind::Linear { .. }) && i + 1 < n;
                if !hidden_linear {
                    return Err(Error::config(format!(
                        "layer {i}: only hidden linear layers can carry a unit mask"
                    )));
                }
            }
            match spec.kind {
                LayerKind::Linear { in_dim, out_dim } => {
                    if shape != [in_dim] {
                        return Err(Error::Shape {
                            context: "linear layer input",
                            expected: vec![in_dim],
                            actual: shape,
                        });
                    }
                    let mut weight = Tensor::zeros(&[out_dim, in_dim]);
                    fill_kaiming(weight.data_mut(), in_dim, &mut rng);
                    layers.push(Layer::Linear(Linear {
                        weight,
                        bias: Tensor::zeros(&[out_dim]),
                        activation: spec.activation,
                        mask: spec.masked.then(|| UnitMask::ones(out_dim)),
                    }));
                    shape = vec![out_dim];
                }
                LayerKind::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    padding,
                } => {
                    if shape.len() != 3 || shape[0] != in_ch || shape[1] + 2 * padding < kernel {
                        return Err(Error::Shape {
                            context: "conv layer input",
                            expected: vec![in_ch, 0, 0],
                            actual: shape,
                        });
                    }
                    let fan_in = in_ch * kernel * kernel;
                    let mut weight = Tensor::zeros(&[out_ch, in_ch, kernel, kernel]);
                    fill_kaiming(weight.data_mut(), fan_in, &mut rng);
                    layers.push(Layer::Conv2d(Conv2d {
                        weight,
                        bias: Tensor::zeros(&[out_ch]),
                        padding,
                        activation: spec.activation,
                    }));
                    let (ho, wo) = conv_out_hw(shape[1], shape[2], kernel, padding);
                    shape = vec![out_ch, ho, wo];
                }
                LayerKind::MaxPool2d { size } => {
                    if shape.len() != 3 || size == 0 || shape[1] < size || shape[2] < size {
                        return Err(Error::Shape {
                            context: "maxpool input",
                            expected: vec![0, size, size],
                            actual: shape,
                        });
                    }
                    layers.push(Layer::MaxPool2d { size });
                    shape = vec![shape[0], shape[1] / size, shape[2] / size];
                }
                LayerKind::Flatten => {
                    layers.push(Layer::Flatten);
                    shape = vec![shape.iter().product()];
                }
            }
        }
        match layers.last() {
            Some(Layer::Linear(_)) => {}
            _ => return Err(Error::config("the last layer must be linear")),
        }
        Ok(MaskedNetwork {
            input_shape: input_shape.to_vec(),
            specs,
            layers,
            rng_seed: seed,
        })
    }

    /// `input → hidden[0] → … → classes`, every hidden layer masked.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize, activation: Activation, seed: u64) -> Result<Self> {
        let mut specs = Vec::new();
        let mut prev = input;
        for &h in hidden {
            specs.push(LayerSpec::linear(prev, h, activation, true));
            prev = h;
        }
        specs.push(LayerSpec::linear(prev, classes, Activation::None, false));
        Self::from_specs(&[input], specs, seed)
    }

    /// Dense conv trunk (`conv → act → pool` per entry of `channels`) followed
    /// by a masked fully connected head.
    pub fn convnet(
        input: [usize; 3],
        channels: &[usize],
        head: &[usize],
        classes: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut specs = Vec::new();
        let mut ch = input[0];
        let (mut h, mut w) = (input[1], input[2]);
        for &oc in channels {
            specs.push(LayerSpec::conv(ch, oc, 3, 1, activation));
            specs.push(LayerSpec::maxpool(2));
            ch = oc;
            h /= 2;
            w /= 2;
        }
        specs.push(LayerSpec::flatten());
        let mut prev = ch * h * w;
        for &d in head {
            specs.push(LayerSpec::linear(prev, d, activation, true));
            prev = d;
        }
        specs.push(LayerSpec::linear(prev, classes, Activation::None, false));
        Self::from_specs(&input, specs, seed)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &Layer {
        &self.layers[i]
    }

    pub fn output_dim(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Linear(l)) => l.out_dim(),
            _ => unreachable!("validated at construction"),
        }
    }

    /// Layer indices of masked layers, in forward order.
    pub fn masked_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Linear(Linear { mask: Some(_), .. })))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn num_masked(&self) -> usize {
        self.masked_layers().len()
    }

    /// Layer index of masked layer `h`.
    pub fn masked_layer_index(&self, h: usize) -> usize {
        self.masked_layers()[h]
    }

    /// Unit count of each masked layer.
    pub fn masked_widths(&self) -> Vec<usize> {
        self.masked_layers()
            .into_iter()
            .map(|i| self.linear(i).out_dim())
            .collect()
    }

    pub fn linear(&self, layer: usize) -> &Linear {
        match &self.layers[layer] {
            Layer::Linear(l) => l,
            other => panic!("layer {layer} is not linear: {other:?}"),
        }
    }

    pub fn linear_mut(&mut self, layer: usize) -> &mut Linear {
        match &mut self.layers[layer] {
            Layer::Linear(l) => l,
            _ => panic!("layer {layer} is not linear"),
        }
    }

    pub fn conv_mut(&mut self, layer: usize) -> &mut Conv2d {
        match &mut self.layers[layer] {
            Layer::Conv2d(c) => c,
            _ => panic!("layer {layer} is not a convolution"),
        }
    }

    pub fn mask(&self, h: usize) -> &UnitMask {
        let i = self.masked_layer_index(h);
        self.linear(i).mask.as_ref().expect("masked layer")
    }

    pub fn mask_mut(&mut self, h: usize) -> &mut UnitMask {
        let i = self.masked_layer_index(h);
        self.linear_mut(i).mask.as_mut().expect("masked layer")
    }

    pub fn masks(&self) -> Vec<UnitMask> {
        (0..self.num_masked()).map(|h| self.mask(h).clone()).collect()
    }

    pub fn set_masks(&mut self, masks: &[UnitMask]) -> Result<()> {
        let widths = self.masked_widths();
        if masks.len() != widths.len() || masks.iter().zip(&widths).any(|(m, &w)| m.len() != w) {
            return Err(Error::Shape {
                context: "set_masks",
                expected: widths,
                actual: masks.iter().map(UnitMask::len).collect(),
            });
        }
        for (h, m) in masks.iter().enumerate() {
            *self.mask_mut(h) = m.clone();
        }
        Ok(())
    }

    /// Layer index of the linear layer that reads masked layer `h`.
    pub fn consumer_of(&self, h: usize) -> usize {
        let i = self.masked_layer_index(h);
        (i + 1..self.layers.len())
            .find(|&j| matches!(self.layers[j], Layer::Linear(_)))
            .expect("a masked layer always has a linear consumer")
    }

    /// Parameter tensors in a fixed order: weight then bias per parameterised layer.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Linear(l) => {
                    out.push(&l.weight);
                    out.push(&l.bias);
                }
                Layer::Conv2d(c) => {
                    out.push(&c.weight);
                    out.push(&c.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Linear(l) => {
                    out.push(&mut l.weight);
                    out.push(&mut l.bias);
                }
                Layer::Conv2d(c) => {
                    out.push(&mut c.weight);
                    out.push(&mut c.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params().iter().map(|t| t.shape().to_vec()).collect()
    }

    pub fn num_scalar_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Position of a layer's weight or bias in [`Self::params`].
    pub fn param_index(&self, layer: usize, kind: ParamKind) -> usize {
        assert!(self.layers[layer].has_params(), "layer {layer} has no parameters");
        let before = self.layers[..layer].iter().filter(|l| l.has_params()).count();
        2 * before + usize::from(kind == ParamKind::Bias)
    }

    /// Runs the network on a batch. `x` is `[B, input...]` or `[B, input_len]`.
    pub fn forward<R: Rng + ?Sized>(&self, x: &Tensor, mode: Mode, rng: &mut R) -> Result<(Tensor, ForwardCache)> {
        let b = x.rows();
        if x.ndim() < 2 || x.row_len() != self.input_len() {
            let mut expected = vec![b];
            expected.extend(&self.input_shape);
            return Err(Error::Shape {
                context: "forward input",
                expected,
                actual: x.shape().to_vec(),
            });
        }
        let mut in_shape = vec![b];
        in_shape.extend(&self.input_shape);
        let input = x.clone().reshape(&in_shape)?;
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = if i == 0 { &input } else { &caches[i - 1].out };
            let cache = match layer {
                Layer::Linear(l) => {
                    let prev_active = if i > 0 { caches[i - 1].active_out.as_deref() } else { None };
                    linear_forward(l, cur, mode, rng, prev_active)
                }
                Layer::Conv2d(c) => conv_forward(c, cur, mode, rng),
                Layer::MaxPool2d { size } => maxpool_forward(*size, cur),
                Layer::Flatten => {
                    let n = cur.rows();
                    let w = cur.row_len();
                    LayerCache {
                        z: None,
                        out: cur.clone().reshape(&[n, w])?,
                        slopes: Vec::new(),
                        cols: Vec::new(),
                        argmax: Vec::new(),
                        active_out: None,
                        active_in: None,
                    }
                }
            };
            if !cache.out.all_finite() {
                return Err(Error::NumericFault {
                    layer: i,
                    stage: "forward",
                });
            }
            caches.push(cache);
        }
        let logits = caches.last().expect("non-empty").out.clone();
        Ok((
            logits,
            ForwardCache {
                input,
                mode,
                layers: caches,
            },
        ))
    }

    /// Backpropagates `grad_logits` (`dL/dlogits`, `[B, C]`) through the cached
    /// forward pass.
    ///
    /// With `lift = Some(h)`, the unit gradients reported for masked layer `h`
    /// ignore that layer's mask: inactive units report the pre-activation
    /// gradient they would receive if switched on. Parameter gradients always
    /// respect the mask.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Tensor, lift: Option<usize>) -> Result<Backward> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::config("forward cache does not match this network"));
        }
        let b = cache.batch_size();
        if grad_logits.shape() != [b, self.output_dim()] {
            return Err(Error::Shape {
                context: "backward grad_logits",
                expected: vec![b, self.output_dim()],
                actual: grad_logits.shape().to_vec(),
            });
        }
        let masked = self.masked_layers();
        let lift_layer = lift.map(|h| masked[h]);
        if lift.is_some() && cache.layers.iter().any(|lc| lc.active_out.is_some()) {
            return Err(Error::config("lifted gradients need an eval-mode forward pass"));
        }
        let mut param_grads: Vec<Tensor> = self.params().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let mut unit_grads: Vec<Tensor> = masked
            .iter()
            .map(|&i| Tensor::zeros(&[b, self.linear(i).out_dim()]))
            .collect();

        let mut grad = grad_logits.clone();
        for i in (0..self.layers.len()).rev() {
            let lc = &cache.layers[i];
            let input = cache.layer_input(i);
            let need_input_grad = i > 0;
            match &self.layers[i] {
                Layer::Linear(l) => {
                    let z = lc.z.as_ref().expect("linear cache has z");
                    let (out_d, in_d) = (l.out_dim(), l.in_dim());
                    let mut dz = Tensor::zeros(&[b, out_d]);
                    let mut lifted = None;
                    if Some(i) == lift_layer {
                        lifted = Some(Tensor::zeros(&[b, out_d]));
                    }
                    for r in 0..b {
                        for j in 0..out_d {
                            let slope = lc.slopes.get(j).copied().unwrap_or(0.0);
                            let g = grad.data()[r * out_d + j] * l.activation.derivative(z.data()[r * out_d + j], slope);
                            if let Some(t) = lifted.as_mut() {
                                t.data_mut()[r * out_d + j] = g;
                            }
                            let m = l.mask.as_ref().map_or(1.0, |m| m.factor(j));
                            dz.data_mut()[r * out_d + j] = g * m;
                        }
                    }
                    if !dz.all_finite() {
                        return Err(Error::NumericFault {
                            layer: i,
                            stage: "backward",
                        });
                    }
                    let wi = self.param_index(i, ParamKind::Weight);
                    let db = param_grads[wi + 1].data_mut();
                    for r in 0..b {
                        for (j, v) in db.iter_mut().enumerate() {
                            *v += dz.data()[r * out_d + j];
                        }
                    }
                    if let Some(h) = masked.iter().position(|&m| m == i) {
                        unit_grads[h] = lifted.unwrap_or_else(|| dz.clone());
                    }
                    if lc.active_out.is_none() && lc.active_in.is_none() {
                        gemm(true, false, out_d, in_d, b, dz.data(), input.data(), 0.0, param_grads[wi].data_mut());
                        if need_input_grad {
                            let mut dx = Tensor::zeros(&[b, in_d]);
                            gemm(false, false, b, in_d, out_d, dz.data(), l.weight.data(), 0.0, dx.data_mut());
                            grad = dx;
                        }
                    } else {
                        let rows = lc.active_out.clone().unwrap_or_else(|| (0..out_d).collect());
                        let cols = lc.active_in.clone().unwrap_or_else(|| (0..in_d).collect());
                        let (nr, nc) = (rows.len(), cols.len());
                        let dzc = gather_cols(dz.data(), b, out_d, &rows);
                        let xc = gather_cols(input.data(), b, in_d, &cols);
                        let mut dwc = vec![0.0; nr * nc];
                        gemm(true, false, nr, nc, b, &dzc, &xc, 0.0, &mut dwc);
                        let dw = param_grads[wi].data_mut();
                        for (a, &r) in rows.iter().enumerate() {
                            for (c, &col) in cols.iter().enumerate() {
                                dw[r * in_d + col] = dwc[a * nc + c];
                            }
                        }
                        if need_input_grad {
                            let wc = gather_block(l.weight.data(), in_d, &rows, &cols);
                            let mut dxc = vec![0.0; b * nc];
                            gemm(false, false, b, nc, nr, &dzc, &wc, 0.0, &mut dxc);
                            let mut dx = Tensor::zeros(&[b, in_d]);
                            scatter_cols(&dxc, b, &cols, dx.data_mut(), in_d);
                            grad = dx;
                        }
                    }
                }
                Layer::Conv2d(c) => {
                    let wi = self.param_index(i, ParamKind::Weight);
                    let (dw, rest) = param_grads.split_at_mut(wi + 1);
                    grad = conv_backward(
                        c,
                        lc,
                        input.shape(),
                        &grad,
                        &mut dw[wi],
                        &mut rest[0],
                        need_input_grad,
                    );
                    if !grad.all_finite() {
                        return Err(Error::NumericFault {
                            layer: i,
                            stage: "backward",
                        });
                    }
                }
                Layer::MaxPool2d { .. } => {
                    let mut dx = Tensor::zeros(input.shape());
                    for (o, &src) in lc.argmax.iter().enumerate() {
                        dx.data_mut()[src] += grad.data()[o];
                    }
                    grad = dx;
                }
                Layer::Flatten => {
                    grad = grad.reshape(input.shape())?;
                }
            }
        }
        Ok(Backward {
            param_grads,
            unit_grads,
        })
    }
}

fn linear_forward<R: Rng + ?Sized>(
    l: &Linear,
    x: &Tensor,
    mode: Mode,
    rng: &mut R,
    prev_active: Option<&[usize]>,
) -> LayerCache {
    let b = x.rows();
    let (out_d, in_d) = (l.out_dim(), l.in_dim());
    // In train mode inactive units are skipped entirely; eval mode keeps every
    // pre-activation so that dormant units can be scored.
    let active_out = match (&l.mask, mode) {
        (Some(m), Mode::Train) if m.active_count() < m.len() => Some(m.active_indices()),
        _ => None,
    };
    let active_in = prev_active.map(<[usize]>::to_vec);
    let mut z = Tensor::zeros(&[b, out_d]);
    if active_out.is_none() && active_in.is_none() {
        gemm(false, true, b, out_d, in_d, x.data(), l.weight.data(), 0.0, z.data_mut());
        for r in 0..b {
            for (v, bias) in z.row_mut(r).iter_mut().zip(l.bias.data()) {
                *v += bias;
            }
        }
    } else {
        let rows = active_out.clone().unwrap_or_else(|| (0..out_d).collect());
        let cols = active_in.clone().unwrap_or_else(|| (0..in_d).collect());
        let (nr, nc) = (rows.len(), cols.len());
        let xc = gather_cols(x.data(), b, in_d, &cols);
        let wc = gather_block(l.weight.data(), in_d, &rows, &cols);
        let mut zc = vec![0.0; b * nr];
        gemm(false, true, b, nr, nc, &xc, &wc, 0.0, &mut zc);
        let bias = l.bias.data();
        for r in 0..b {
            let zr = z.row_mut(r);
            for (a, &j) in rows.iter().enumerate() {
                zr[j] = zc[r * nr + a] + bias[j];
            }
        }
    }
    let slopes = l.activation.sample_slopes(out_d, mode, rng);
    let mut out = Tensor::zeros(&[b, out_d]);
    for r in 0..b {
        let zr = z.row(r);
        let orow = out.row_mut(r);
        for j in 0..out_d {
            let m = l.mask.as_ref().map_or(1.0, |m| m.factor(j));
            if m != 0.0 {
                let slope = slopes.get(j).copied().unwrap_or(0.0);
                orow[j] = l.activation.value(zr[j], slope);
            }
        }
    }
    LayerCache {
        z: Some(z),
        out,
        slopes,
        cols: Vec::new(),
        argmax: Vec::new(),
        active_out,
        active_in,
    }
}

/// Copies the selected columns of a row-major `[rows, width]` matrix.
fn gather_cols(src: &[f64], rows: usize, width: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * idx.len());
    for r in 0..rows {
        let row = &src[r * width..(r + 1) * width];
        out.extend(idx.iter().map(|&c| row[c]));
    }
    out
}

fn scatter_cols(src: &[f64], rows: usize, idx: &[usize], dst: &mut [f64], width: usize) {
    let n = idx.len();
    for r in 0..rows {
        for (a, &c) in idx.iter().enumerate() {
            dst[r * width + c] = src[r * n + a];
        }
    }
}

/// Copies the `rows x cols` sub-block of a row-major matrix with `width` columns.
fn gather_block(src: &[f64], width: usize, rows: &[usize], cols: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &r in rows {
        let row = &src[r * width..(r + 1) * width];
        out.extend(cols.iter().map(|&c| row[c]));
    }
    out
}

fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, p: usize, cols: &mut [f64]) {
    let (ho, wo) = conv_out_hw(h, w, k, p);
    let hw = ho * wo;
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = oy as isize + ki as isize - p as isize;
                    for ox in 0..wo {
                        let ix = ox as isize + kj as isize - p as isize;
                        dst[oy * wo + ox] = if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            x[(ci * h + iy as usize) * w + ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], c: usize, h: usize, w: usize, k: usize, p: usize, dx: &mut [f64]) {
    let (ho, wo) = conv_out_hw(h, w, k, p);
    let hw = ho * wo;
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = oy as isize + ki as isize - p as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = ox as isize + kj as isize - p as isize;
                        if ix >= 0 && (ix as usize) < w {
                            dx[(ci * h + iy as usize) * w + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<R: Rng + ?Sized>(cv: &Conv2d, x: &Tensor, mode: Mode, rng: &mut R) -> LayerCache {
    let s = x.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (k, p, oc) = (cv.kernel(), cv.padding, cv.out_ch());
    let (ho, wo) = conv_out_hw(h, w, k, p);
    let (ckk, hw) = (c * k * k, ho * wo);
    let mut cols = vec![0.0; b * ckk * hw];
    let mut z = Tensor::zeros(&[b, oc, ho, wo]);
    for bi in 0..b {
        let col = &mut cols[bi * ckk * hw..(bi + 1) * ckk * hw];
        im2col(x.row(bi), c, h, w, k, p, col);
        let zb = z.row_mut(bi);
        for (o, chunk) in zb.chunks_mut(hw).enumerate() {
            chunk.fill(cv.bias.data()[o]);
        }
        gemm(false, false, oc, hw, ckk, cv.weight.data(), col, 1.0, zb);
    }
    let slopes = cv.activation.sample_slopes(oc, mode, rng);
    let mut out = z.clone();
    for (idx, v) in out.data_mut().iter_mut().enumerate() {
        let ch = (idx / hw) % oc;
        *v = cv.activation.value(*v, slopes.get(ch).copied().unwrap_or(0.0));
    }
    LayerCache {
        z: Some(z),
        out,
        slopes,
        cols,
        argmax: Vec::new(),
        active_out: None,
        active_in: None,
    }
}

fn conv_backward(
    cv: &Conv2d,
    lc: &LayerCache,
    in_shape: &[usize],
    grad: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
    need_input_grad: bool,
) -> Tensor {
    let (b, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let (k, p, oc) = (cv.kernel(), cv.padding, cv.out_ch());
    let (ho, wo) = conv_out_hw(h, w, k, p);
    let (ckk, hw) = (c * k * k, ho * wo);
    let z = lc.z.as_ref().expect("conv cache has z");
    let mut dz = grad.clone();
    for (idx, v) in dz.data_mut().iter_mut().enumerate() {
        let ch = (idx / hw) % oc;
        *v *= cv.activation.derivative(z.data()[idx], lc.slopes.get(ch).copied().unwrap_or(0.0));
    }
    let mut dx = Tensor::zeros(in_shape);
    let mut dcols = vec![0.0; ckk * hw];
    for bi in 0..b {
        let col = &lc.cols[bi * ckk * hw..(bi + 1) * ckk * hw];
        let dzb = dz.row(bi);
        gemm(false, true, oc, ckk, hw, dzb, col, 1.0, dw.data_mut());
        for (o, chunk) in dzb.chunks(hw).enumerate() {
            db.data_mut()[o] += chunk.iter().sum::<f64>();
        }
        if need_input_grad {
            gemm(true, false, ckk, hw, oc, cv.weight.data(), dzb, 0.0, &mut dcols);
            col2im_add(&dcols, c, h, w, k, p, dx.row_mut(bi));
        }
    }
    dx
}

fn maxpool_forward(size: usize, x: &Tensor) -> LayerCache {
    let s = x.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (ho, wo) = (h / size, w / size);
    let mut out = Tensor::zeros(&[b, c, ho, wo]);
    let mut argmax = vec![0; b * c * ho * wo];
    let xd = x.data();
    for bc in 0..b * c {
        let base = bc * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + (oy * size) * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = base + (oy * size + dy) * w + ox * size + dx;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                }
                let o = (bc * ho + oy) * wo + ox;
                out.data_mut()[o] = xd[best];
                argmax[o] = best;
            }
        }
    }
    LayerCache {
        z: None,
        out,
        slopes: Vec::new(),
        cols: Vec::new(),
        argmax,
        active_out: None,
        active_in: None,
    }
}
