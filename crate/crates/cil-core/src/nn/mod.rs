//! Minimal neural-network substrate: dense and small convolutional layers,
//! ReLU / max-pool / flatten, hand-derived backpropagation and Adam.
//!
//! The loss is in [`loss`], the optimizer in [`adam`], and the
//! finite-difference gradient oracle in [`gradcheck`].

pub mod adam;
pub mod gradcheck;
pub mod loss;

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

/// A parameter tensor plus its trainability flag. Parameters with
/// `trainable == false` never receive gradients and are never updated.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub trainable: bool,
}

impl<T: Scalar> Param<T> {
    pub fn trainable(value: Tensor<T>) -> Self {
        Param {
            value,
            trainable: true,
        }
    }

    pub fn frozen(value: Tensor<T>) -> Self {
        Param {
            value,
            trainable: false,
        }
    }
}

/// Stable address of a parameter within a model.
///
/// Extractor indices refer to layer positions; head indices refer to weight
/// blocks (the expanding head appends one block per expansion).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKey {
    ExtractorWeight(u32),
    ExtractorBias(u32),
    HeadWeight(u32),
    HeadBias(u32),
}

impl std::fmt::Display for ParamKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamKey::ExtractorWeight(i) => write!(f, "extractor.{i}.weight"),
            ParamKey::ExtractorBias(i) => write!(f, "extractor.{i}.bias"),
            ParamKey::HeadWeight(i) => write!(f, "head.{i}.weight"),
            ParamKey::HeadBias(i) => write!(f, "head.{i}.bias"),
        }
    }
}

/// Gradients keyed by parameter. Only trainable parameters get an entry.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub by_key: BTreeMap<ParamKey, Tensor<T>>,
}

/// What a backward pass hands back: per-parameter gradients plus the gradient
/// with respect to the block's input, ready to chain into the layer below.
pub type BackwardOutput<T> = (BTreeMap<ParamKey, Tensor<T>>, Tensor<T>);

impl<T> Default for Gradients<T> {
    fn default() -> Self {
        Gradients {
            by_key: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> Gradients<T> {
    pub fn insert(&mut self, key: ParamKey, grad: Tensor<T>) {
        self.by_key.insert(key, grad);
    }

    pub fn get(&self, key: ParamKey) -> Option<&Tensor<T>> {
        self.by_key.get(&key)
    }
}

/// He-style uniform initialization: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
pub fn he_uniform<T: Scalar, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data: Vec<T> = (0..len)
        .map(|_| cast(rng.gen_range(-limit..=limit)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape/data agree by construction")
}

/// Dense layer `y = x · Wᵀ + b`, weights stored `[out, in]`.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub weights: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Dense {
            weights: Param::trainable(he_uniform(&[out_dim, in_dim], in_dim, rng)),
            bias: Param::trainable(Tensor::zeros(&[out_dim])),
        }
    }

    pub fn from_parts(weights: Tensor<T>, bias: Tensor<T>) -> Self {
        Dense {
            weights: Param::trainable(weights),
            bias: Param::trainable(bias),
        }
    }

    fn in_dim(&self) -> usize {
        self.weights.value.cols()
    }

    fn out_dim(&self) -> usize {
        self.weights.value.rows()
    }

    fn forward(&self, input: &Tensor<T>) -> Tensor<T> {
        let mut out = input.matmul_nt(&self.weights.value);
        let out_dim = self.out_dim();
        let bias = self.bias.value.data();
        for row in out.data_mut().chunks_exact_mut(out_dim) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += *b;
            }
        }
        out
    }

    /// Returns `(dweights, dbias, dinput)`.
    fn backward(&self, input: &Tensor<T>, dout: &Tensor<T>) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
        let dweights = dout.matmul_tn(input);
        let out_dim = self.out_dim();
        let mut dbias = Tensor::zeros(&[out_dim]);
        for row in dout.data().chunks_exact(out_dim) {
            for (acc, v) in dbias.data_mut().iter_mut().zip(row) {
                *acc += *v;
            }
        }
        let dinput = dout.matmul_nn(&self.weights.value);
        (dweights, dbias, dinput)
    }
}

/// Valid (no padding), stride-1 square convolution. Kernels stored
/// `[out_c, in_c, k, k]`, flattened to `[out_c, in_c*k*k]` for the gemm path.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub kernels: Param<T>,
    pub bias: Param<T>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Conv2d {
            kernels: Param::trainable(he_uniform(
                &[out_channels, in_channels, kernel, kernel],
                fan_in,
                rng,
            )),
            bias: Param::trainable(Tensor::zeros(&[out_channels])),
            in_channels,
            out_channels,
            kernel,
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h - self.kernel + 1, w - self.kernel + 1)
    }

    /// Unfold into `[n*oh*ow, c*k*k]` patches.
    fn im2col(&self, input: &Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = four(input.shape());
        let k = self.kernel;
        let (oh, ow) = self.out_hw(h, w);
        let patch = c * k * k;
        let mut col = Tensor::zeros(&[n * oh * ow, patch]);
        let src = input.data();
        let dst = col.data_mut();
        let mut row = 0;
        for img in 0..n {
            let img_base = img * c * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let out_base = row * patch;
                    for ch in 0..c {
                        let ch_base = img_base + ch * h * w;
                        for ky in 0..k {
                            let src_base = ch_base + (oy + ky) * w + ox;
                            let dst_base = out_base + (ch * k + ky) * k;
                            dst[dst_base..dst_base + k]
                                .copy_from_slice(&src[src_base..src_base + k]);
                        }
                    }
                    row += 1;
                }
            }
        }
        col
    }

    fn forward(&self, input: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
        let [n, _c, h, w] = four(input.shape());
        let (oh, ow) = self.out_hw(h, w);
        let f = self.out_channels;
        let col = self.im2col(input);
        let kmat = self.kernel_matrix();
        // [n*oh*ow, f]
        let rows = col.matmul_nt(&kmat);
        let mut out = Tensor::zeros(&[n, f, oh, ow]);
        let bias = self.bias.value.data();
        let plane = oh * ow;
        let out_data = out.data_mut();
        for (r, chunk) in rows.data().chunks_exact(f).enumerate() {
            let img = r / plane;
            let pix = r % plane;
            for (ch, &v) in chunk.iter().enumerate() {
                out_data[(img * f + ch) * plane + pix] = v + bias[ch];
            }
        }
        (out, col)
    }

    fn kernel_matrix(&self) -> Tensor<T> {
        let patch = self.in_channels * self.kernel * self.kernel;
        self.kernels
            .value
            .clone()
            .reshaped(&[self.out_channels, patch])
            .expect("kernel tensor has out_c*in_c*k*k elements")
    }

    /// Returns `(dkernels, dbias, dinput)`.
    fn backward(
        &self,
        col: &Tensor<T>,
        input_shape: &[usize],
        dout: &Tensor<T>,
    ) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
        let [n, c, h, w] = four(input_shape);
        let k = self.kernel;
        let (oh, ow) = self.out_hw(h, w);
        let f = self.out_channels;
        let plane = oh * ow;

        // [n*oh*ow, f] layout matching the forward gemm
        let mut dout_rows = Tensor::zeros(&[n * plane, f]);
        {
            let src = dout.data();
            let dst = dout_rows.data_mut();
            for img in 0..n {
                for ch in 0..f {
                    let base = (img * f + ch) * plane;
                    for pix in 0..plane {
                        dst[(img * plane + pix) * f + ch] = src[base + pix];
                    }
                }
            }
        }

        let mut dbias = Tensor::zeros(&[f]);
        for chunk in dout_rows.data().chunks_exact(f) {
            for (acc, v) in dbias.data_mut().iter_mut().zip(chunk) {
                *acc += *v;
            }
        }

        let dkmat = dout_rows.matmul_tn(col);
        let dkernels = dkmat
            .reshaped(&[f, c, k, k])
            .expect("gradient matches kernel element count");

        let kmat = self.kernel_matrix();
        let dcol = dout_rows.matmul_nn(&kmat);

        // col2im: scatter-add patches back onto the input grid
        let patch = c * k * k;
        let mut dinput = Tensor::zeros(&[n, c, h, w]);
        let dst = dinput.data_mut();
        let src = dcol.data();
        let mut row = 0;
        for img in 0..n {
            let img_base = img * c * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let src_base = row * patch;
                    for ch in 0..c {
                        let ch_base = img_base + ch * h * w;
                        for ky in 0..k {
                            let d_base = ch_base + (oy + ky) * w + ox;
                            let s_base = src_base + (ch * k + ky) * k;
                            for kx in 0..k {
                                dst[d_base + kx] += src[s_base + kx];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        (dkernels, dbias, dinput)
    }
}

fn four(shape: &[usize]) -> [usize; 4] {
    assert_eq!(shape.len(), 4, "expected a [n,c,h,w] tensor, got {shape:?}");
    [shape[0], shape[1], shape[2], shape[3]]
}

/// One stage of a feature extractor.
#[derive(Clone, Debug)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Conv2d(Conv2d<T>),
    Relu,
    /// Square max-pool with stride equal to the window size.
    MaxPool2d(usize),
    Flatten,
}

impl<T: Scalar> Layer<T> {
    /// Shape transformation excluding the batch dimension.
    fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => {
                if in_shape != [d.in_dim()] {
                    return Err(Error::config(format!(
                        "dense layer expects [{}], got {:?}",
                        d.in_dim(),
                        in_shape
                    )));
                }
                Ok(vec![d.out_dim()])
            }
            Layer::Conv2d(cv) => {
                if in_shape.len() != 3 || in_shape[0] != cv.in_channels {
                    return Err(Error::config(format!(
                        "conv layer expects [{},h,w], got {:?}",
                        cv.in_channels, in_shape
                    )));
                }
                let (h, w) = (in_shape[1], in_shape[2]);
                if h < cv.kernel || w < cv.kernel {
                    return Err(Error::config(format!(
                        "conv kernel {} larger than input {h}x{w}",
                        cv.kernel
                    )));
                }
                let (oh, ow) = cv.out_hw(h, w);
                Ok(vec![cv.out_channels, oh, ow])
            }
            Layer::Relu => Ok(in_shape.to_vec()),
            Layer::MaxPool2d(win) => {
                if in_shape.len() != 3 {
                    return Err(Error::config(format!(
                        "max-pool expects [c,h,w], got {in_shape:?}"
                    )));
                }
                Ok(vec![in_shape[0], in_shape[1] / win, in_shape[2] / win])
            }
            Layer::Flatten => Ok(vec![in_shape.iter().product()]),
        }
    }
}

/// Per-layer state captured during a forward pass and consumed by backward.
enum LayerCache<T> {
    Dense {
        input: Tensor<T>,
    },
    Conv2d {
        col: Tensor<T>,
        input_shape: Vec<usize>,
    },
    Relu {
        mask: Vec<bool>,
    },
    MaxPool2d {
        argmax: Vec<usize>,
        input_shape: Vec<usize>,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
}

/// Activations recorded by [`FeatureExtractor::forward`]; required by
/// [`FeatureExtractor::backward`] for the same batch.
pub struct ForwardTrace<T> {
    caches: Vec<LayerCache<T>>,
    batch: usize,
    feature_dim: usize,
}

impl<T> ForwardTrace<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// The discrete switching state of the pass: every ReLU on/off bit and
    /// every max-pool argmax. Two passes with equal signatures lie on the
    /// same linear piece of the network, which is what makes a central
    /// finite difference between them a valid derivative estimate.
    pub fn activation_signature(&self) -> ActivationSignature {
        let mut relu = Vec::new();
        let mut pool = Vec::new();
        for cache in &self.caches {
            match cache {
                LayerCache::Relu { mask } => relu.extend_from_slice(mask),
                LayerCache::MaxPool2d { argmax, .. } => pool.extend_from_slice(argmax),
                _ => {}
            }
        }
        ActivationSignature { relu, pool }
    }
}

/// See [`ForwardTrace::activation_signature`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivationSignature {
    relu: Vec<bool>,
    pool: Vec<usize>,
}

/// Ordered layer stack mapping inputs to a `output_dim`-wide feature vector.
#[derive(Clone, Debug)]
pub struct FeatureExtractor<T> {
    layers: Vec<Layer<T>>,
    input_shape: Vec<usize>,
    output_dim: usize,
}

impl<T: Scalar> FeatureExtractor<T> {
    /// Builds an extractor, validating that the layer shapes chain and end in
    /// a flat feature vector.
    pub fn new(layers: Vec<Layer<T>>, input_shape: Vec<usize>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.out_shape(&shape)?;
        }
        if shape.len() != 1 {
            return Err(Error::config(format!(
                "extractor must end in a flat feature vector, got {shape:?}"
            )));
        }
        Ok(FeatureExtractor {
            layers,
            input_shape,
            output_dim: shape[0],
        })
    }

    /// LeNet-style convolutional backbone for 1x28x28 images.
    pub fn lenet<R: Rng>(feature_dim: usize, rng: &mut R) -> Self {
        let layers = vec![
            Layer::Conv2d(Conv2d::new(1, 6, 5, rng)),
            Layer::Relu,
            Layer::MaxPool2d(2),
            Layer::Conv2d(Conv2d::new(6, 16, 5, rng)),
            Layer::Relu,
            Layer::MaxPool2d(2),
            Layer::Flatten,
            Layer::Dense(Dense::new(256, 120, rng)),
            Layer::Relu,
            Layer::Dense(Dense::new(120, feature_dim, rng)),
        ];
        FeatureExtractor::new(layers, vec![1, 28, 28]).expect("lenet shapes chain")
    }

    /// Two-layer perceptron for flat vector inputs.
    pub fn mlp<R: Rng>(input_dim: usize, hidden: usize, feature_dim: usize, rng: &mut R) -> Self {
        let layers = vec![
            Layer::Dense(Dense::new(input_dim, hidden, rng)),
            Layer::Relu,
            Layer::Dense(Dense::new(hidden, feature_dim, rng)),
        ];
        FeatureExtractor::new(layers, vec![input_dim]).expect("mlp shapes chain")
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Runs the stack on a batch whose shape is `[n] + input_shape`.
    /// Returns the features and the trace needed for backward.
    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ForwardTrace<T>)> {
        if input.shape().len() != self.input_shape.len() + 1
            || input.shape()[1..] != self.input_shape[..]
        {
            return Err(Error::config(format!(
                "extractor expects [n]+{:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        let batch = input.shape()[0];
        if batch == 0 {
            return Err(Error::config("batch must contain at least one example"));
        }

        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Dense(d) => {
                    let out = d.forward(&x);
                    caches.push(LayerCache::Dense { input: x });
                    out
                }
                Layer::Conv2d(cv) => {
                    let (out, col) = cv.forward(&x);
                    caches.push(LayerCache::Conv2d {
                        col,
                        input_shape: x.shape().to_vec(),
                    });
                    out
                }
                Layer::Relu => {
                    let mask: Vec<bool> = x.data().iter().map(|v| *v > T::zero()).collect();
                    let out = x.map(|v| if v > T::zero() { v } else { T::zero() });
                    caches.push(LayerCache::Relu { mask });
                    out
                }
                Layer::MaxPool2d(win) => {
                    let (out, argmax, input_shape) = max_pool_forward(&x, *win);
                    caches.push(LayerCache::MaxPool2d {
                        argmax,
                        input_shape,
                    });
                    out
                }
                Layer::Flatten => {
                    let input_shape = x.shape().to_vec();
                    let flat: usize = input_shape[1..].iter().product();
                    let out = x.reshaped(&[batch, flat])?;
                    caches.push(LayerCache::Flatten { input_shape });
                    out
                }
            };
        }
        if !x.all_finite() {
            return Err(Error::numeric("non-finite value in extractor output"));
        }
        Ok((
            x,
            ForwardTrace {
                caches,
                batch,
                feature_dim: self.output_dim,
            },
        ))
    }

    /// Backpropagates `dfeatures` through the stack, producing gradients for
    /// every trainable parameter plus the gradient w.r.t. the input batch.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        dfeatures: &Tensor<T>,
    ) -> Result<BackwardOutput<T>> {
        if trace.caches.len() != self.layers.len() {
            return Err(Error::usage(
                "forward trace does not match this extractor's layers",
            ));
        }
        if dfeatures.shape() != [trace.batch, trace.feature_dim] {
            return Err(Error::usage(format!(
                "dfeatures shape {:?} does not match trace [{}, {}]",
                dfeatures.shape(),
                trace.batch,
                trace.feature_dim
            )));
        }

        let mut grads = BTreeMap::new();
        let mut dx = dfeatures.clone();
        for (idx, (layer, cache)) in self.layers.iter().zip(&trace.caches).enumerate().rev() {
            dx = match (layer, cache) {
                (Layer::Dense(d), LayerCache::Dense { input }) => {
                    let (dw, db, dinput) = d.backward(input, &dx);
                    if d.weights.trainable {
                        grads.insert(ParamKey::ExtractorWeight(idx as u32), dw);
                    }
                    if d.bias.trainable {
                        grads.insert(ParamKey::ExtractorBias(idx as u32), db);
                    }
                    dinput
                }
                (Layer::Conv2d(cv), LayerCache::Conv2d { col, input_shape }) => {
                    let (dk, db, dinput) = cv.backward(col, input_shape, &dx);
                    if cv.kernels.trainable {
                        grads.insert(ParamKey::ExtractorWeight(idx as u32), dk);
                    }
                    if cv.bias.trainable {
                        grads.insert(ParamKey::ExtractorBias(idx as u32), db);
                    }
                    dinput
                }
                (Layer::Relu, LayerCache::Relu { mask }) => {
                    let mut d = dx;
                    for (v, keep) in d.data_mut().iter_mut().zip(mask) {
                        if !keep {
                            *v = T::zero();
                        }
                    }
                    d
                }
                (
                    Layer::MaxPool2d(_),
                    LayerCache::MaxPool2d {
                        argmax,
                        input_shape,
                    },
                ) => {
                    let mut dinput = Tensor::zeros(input_shape);
                    for (&src_idx, &g) in argmax.iter().zip(dx.data()) {
                        dinput.data_mut()[src_idx] += g;
                    }
                    dinput
                }
                (Layer::Flatten, LayerCache::Flatten { input_shape }) => {
                    dx.reshaped(input_shape)?
                }
                _ => return Err(Error::usage("forward trace out of sync with layers")),
            };
        }
        Ok((grads, dx))
    }

    /// Parameters in canonical (key-sorted) order.
    pub fn params(&self) -> Vec<(ParamKey, &Param<T>)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            let i = idx as u32;
            match layer {
                Layer::Dense(d) => {
                    out.push((ParamKey::ExtractorWeight(i), &d.weights));
                    out.push((ParamKey::ExtractorBias(i), &d.bias));
                }
                Layer::Conv2d(cv) => {
                    out.push((ParamKey::ExtractorWeight(i), &cv.kernels));
                    out.push((ParamKey::ExtractorBias(i), &cv.bias));
                }
                _ => {}
            }
        }
        out
    }

    pub fn param(&self, key: ParamKey) -> Option<&Param<T>> {
        let (idx, want_weight) = match key {
            ParamKey::ExtractorWeight(i) => (i as usize, true),
            ParamKey::ExtractorBias(i) => (i as usize, false),
            _ => return None,
        };
        match self.layers.get(idx)? {
            Layer::Dense(d) => Some(if want_weight { &d.weights } else { &d.bias }),
            Layer::Conv2d(cv) => Some(if want_weight { &cv.kernels } else { &cv.bias }),
            _ => None,
        }
    }

    pub fn param_mut(&mut self, key: ParamKey) -> Option<&mut Param<T>> {
        let (idx, want_weight) = match key {
            ParamKey::ExtractorWeight(i) => (i as usize, true),
            ParamKey::ExtractorBias(i) => (i as usize, false),
            _ => return None,
        };
        match self.layers.get_mut(idx)? {
            Layer::Dense(d) => Some(if want_weight {
                &mut d.weights
            } else {
                &mut d.bias
            }),
            Layer::Conv2d(cv) => Some(if want_weight {
                &mut cv.kernels
            } else {
                &mut cv.bias
            }),
            _ => None,
        }
    }
}

fn max_pool_forward<T: Scalar>(
    input: &Tensor<T>,
    win: usize,
) -> (Tensor<T>, Vec<usize>, Vec<usize>) {
    let [n, c, h, w] = four(input.shape());
    let (oh, ow) = (h / win, w / win);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let src = input.data();
    let dst = out.data_mut();
    let mut o = 0;
    for img in 0..n {
        for ch in 0..c {
            let base = (img * c + ch) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = base + (oy * win) * w + ox * win;
                    let mut best = src[best_idx];
                    for ky in 0..win {
                        let row = base + (oy * win + ky) * w + ox * win;
                        for kx in 0..win {
                            let v = src[row + kx];
                            if v > best {
                                best = v;
                                best_idx = row + kx;
                            }
                        }
                    }
                    dst[o] = best;
                    argmax[o] = best_idx;
                    o += 1;
                }
            }
        }
    }
    (out, argmax, input.shape().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weight_dense_maps_everything_to_zero() {
        let dense = Dense::from_parts(Tensor::<f32>::zeros(&[3, 4]), Tensor::zeros(&[3]));
        let fx = FeatureExtractor::new(vec![Layer::Dense(dense)], vec![4]).unwrap();
        let input =
            Tensor::from_vec(&[2, 4], vec![1.0, -2.0, 3.0, 4.0, 0.5, 0.5, 0.5, 0.5]).unwrap();
        let (features, _) = fx.forward(&input).unwrap();
        assert!(features.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_dense_layer_passes_input_through() {
        let mut w = Tensor::<f32>::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let fx = FeatureExtractor::new(
            vec![Layer::Dense(Dense::from_parts(w, Tensor::zeros(&[3])))],
            vec![3],
        )
        .unwrap();
        let input = Tensor::from_vec(&[1, 3], vec![0.25, -4.0, 7.5]).unwrap();
        let (features, _) = fx.forward(&input).unwrap();
        assert_eq!(features.data(), input.data());
    }

    #[test]
    fn two_layer_forward_matches_hand_rolled_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fx = FeatureExtractor::<f64>::mlp(4, 5, 3, &mut rng);
        let input =
            Tensor::from_vec(&[2, 4], vec![0.3, -0.1, 0.9, -0.7, 0.2, 0.8, -0.5, 0.4]).unwrap();
        let (features, _) = fx.forward(&input).unwrap();

        // independent reference: explicit loops over the same parameters
        let (w1, b1, w2, b2) = match (&fx.layers()[0], &fx.layers()[2]) {
            (Layer::Dense(a), Layer::Dense(b)) => (
                a.weights.value.data(),
                a.bias.value.data(),
                b.weights.value.data(),
                b.bias.value.data(),
            ),
            _ => unreachable!(),
        };
        for n in 0..2 {
            let x = &input.data()[n * 4..(n + 1) * 4];
            let mut h = [0.0f64; 5];
            for (i, hv) in h.iter_mut().enumerate() {
                let mut acc = b1[i];
                for j in 0..4 {
                    acc += w1[i * 4 + j] * x[j];
                }
                *hv = acc.max(0.0);
            }
            for i in 0..3 {
                let mut acc = b2[i];
                for (j, hv) in h.iter().enumerate() {
                    acc += w2[i * 5 + j] * hv;
                }
                let got = features.data()[n * 3 + i];
                assert!((got - acc).abs() < 1e-12, "got {got}, want {acc}");
            }
        }
    }

    #[test]
    fn dense_backward_matches_closed_form() {
        // single dense layer: dW = doutᵀ·x, db = column sums, dx = dout·W
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = Dense::<f64>::new(3, 2, &mut rng);
        let fx = FeatureExtractor::new(vec![Layer::Dense(dense)], vec![3]).unwrap();
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 2.0]).unwrap();
        let (_, trace) = fx.forward(&x).unwrap();
        let dout = Tensor::from_vec(&[2, 2], vec![0.1, -0.2, 0.3, 0.4]).unwrap();
        let (grads, dx) = fx.backward(&trace, &dout).unwrap();

        let dw = grads.get(&ParamKey::ExtractorWeight(0)).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                let want = dout.data()[o] * x.data()[i] + dout.data()[2 + o] * x.data()[3 + i];
                assert!((dw.data()[o * 3 + i] - want).abs() < 1e-12);
            }
        }
        let db = grads.get(&ParamKey::ExtractorBias(0)).unwrap();
        assert!((db.data()[0] - 0.4).abs() < 1e-12);
        assert!((db.data()[1] - 0.2).abs() < 1e-12);
        assert_eq!(dx.shape(), &[2, 3]);
    }

    #[test]
    fn dead_relu_path_gets_exact_zero_gradient() {
        // first dense drives everything negative -> relu kills the gradient,
        // so the first layer's weights see exactly zero.
        let w1 = Tensor::from_vec(&[2, 2], vec![-1.0, -1.0, -1.0, -1.0]).unwrap();
        let b1 = Tensor::from_vec(&[2], vec![-5.0, -5.0]).unwrap();
        let w2 = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        let fx = FeatureExtractor::<f64>::new(
            vec![
                Layer::Dense(Dense::from_parts(w1, b1)),
                Layer::Relu,
                Layer::Dense(Dense::from_parts(w2, Tensor::zeros(&[1]))),
            ],
            vec![2],
        )
        .unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let (_, trace) = fx.forward(&x).unwrap();
        let dout = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let (grads, _) = fx.backward(&trace, &dout).unwrap();
        let dw1 = grads.get(&ParamKey::ExtractorWeight(0)).unwrap();
        assert!(dw1.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_dfeatures() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fx = FeatureExtractor::<f32>::mlp(4, 5, 3, &mut rng);
        let x = Tensor::zeros(&[2, 4]);
        let (_, trace) = fx.forward(&x).unwrap();
        let bad = Tensor::zeros(&[3, 3]);
        assert!(matches!(fx.backward(&trace, &bad), Err(Error::Usage(_))));
    }

    #[test]
    fn lenet_shapes_chain_to_feature_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fx = FeatureExtractor::<f32>::lenet(9, &mut rng);
        assert_eq!(fx.output_dim(), 9);
        let input = Tensor::zeros(&[2, 1, 28, 28]);
        let (features, _) = fx.forward(&input).unwrap();
        assert_eq!(features.shape(), &[2, 9]);
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fx = FeatureExtractor::<f32>::mlp(4, 5, 3, &mut rng);
        let input = Tensor::zeros(&[2, 5]);
        assert!(matches!(fx.forward(&input), Err(Error::Config(_))));
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let fx =
            FeatureExtractor::<f64>::new(vec![Layer::MaxPool2d(2), Layer::Flatten], vec![1, 2, 2])
                .unwrap();
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![0.1, 0.9, 0.3, 0.2]).unwrap();
        let (out, trace) = fx.forward(&x).unwrap();
        assert_eq!(out.data(), &[0.9]);
        let dout = Tensor::from_vec(&[1, 1], vec![2.5]).unwrap();
        let (_, dx) = fx.backward(&trace, &dout).unwrap();
        assert_eq!(dx.data(), &[0.0, 2.5, 0.0, 0.0]);
    }
}
