//! Classifier heads: the fixed d-simplex regular-polytope classifier, its 2D
//! polygon variant, and the trainable expanding / pre-allocated baselines.
//!
//! A regular d-simplex has d+1 vertices in R^d, all at unit distance from the
//! origin and with every pairwise cosine equal to -1/d. Pinning one class to
//! each vertex gives a maximally separated, never-trained output layer whose
//! geometry does not depend on how many classes have been seen so far.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{he_uniform, BackwardOutput, Param, ParamKey};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Vertex matrix of a regular (K_pre - 1)-simplex: `K_pre` unit rows in
/// R^(K_pre-1), centered on the origin, pairwise cosines `-1/(K_pre-1)`.
///
/// Construction: the K_pre - 1 standard basis vectors of R^(K_pre-1) plus the
/// vector `alpha * (1, ..., 1)` with `alpha = (1 - sqrt(d+1)) / d`, shifted
/// about their centroid and row-normalized. Built in f64 regardless of `T`.
pub fn simplex_weights<T: Scalar>(k_pre: usize) -> Result<Tensor<T>> {
    if k_pre < 2 {
        return Err(Error::input(format!(
            "a simplex needs at least 2 vertices, got {k_pre}"
        )));
    }
    let d = k_pre - 1;
    let alpha = (1.0 - ((d + 1) as f64).sqrt()) / d as f64;
    // centroid coordinate: each column sums to 1 (one basis vector) + alpha
    let centroid = (1.0 + alpha) / k_pre as f64;

    let mut rows = vec![0.0f64; k_pre * d];
    for i in 0..d {
        for j in 0..d {
            let v = if i == j { 1.0 } else { 0.0 };
            rows[i * d + j] = v - centroid;
        }
    }
    for j in 0..d {
        rows[d * d + j] = alpha - centroid;
    }
    for row in rows.chunks_exact_mut(d) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in row {
            *v /= norm;
        }
    }
    let w64 = Tensor::from_vec(&[k_pre, d], rows).expect("k_pre*d elements");
    Ok(w64.cast::<T>())
}

/// `K` unit rows in R^2 at angles `2*pi*k/K`, k = 0..K-1: the K-sided regular
/// polygon, the two-dimensional regular polytope.
pub fn polygon_weights<T: Scalar>(k: usize) -> Result<Tensor<T>> {
    if k < 3 {
        return Err(Error::input(format!(
            "a polygon needs at least 3 vertices, got {k}"
        )));
    }
    let mut rows = Vec::with_capacity(k * 2);
    for i in 0..k {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
        rows.push(theta.cos());
        rows.push(theta.sin());
    }
    let w64 = Tensor::from_vec(&[k, 2], rows).expect("k*2 elements");
    Ok(w64.cast::<T>())
}

/// Which classifier variant a head implements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    /// Frozen simplex vertices, one per pre-allocated class; no bias.
    FixedSimplex,
    /// Frozen polygon vertices in a 2-wide feature space; no bias.
    FixedPolygon,
    /// Conventional classifier that grows output nodes as classes arrive.
    TrainableExpanding,
    /// All `K_pre` output nodes allocated and trainable from the start.
    TrainablePreallocated,
}

impl HeadKind {
    pub fn is_fixed(self) -> bool {
        matches!(self, HeadKind::FixedSimplex | HeadKind::FixedPolygon)
    }
}

/// One contiguous group of output nodes. Fixed heads have exactly one frozen
/// block; the expanding head appends one trainable block per expansion.
#[derive(Clone, Debug)]
pub struct HeadBlock<T> {
    pub weights: Param<T>,
    pub bias: Option<Param<T>>,
}

impl<T: Scalar> HeadBlock<T> {
    fn rows(&self) -> usize {
        self.weights.value.rows()
    }
}

/// Output layer mapping `feature_dim`-wide features to per-class logits.
#[derive(Clone, Debug)]
pub struct ClassifierHead<T> {
    kind: HeadKind,
    feature_dim: usize,
    blocks: Vec<HeadBlock<T>>,
}

impl<T: Scalar> ClassifierHead<T> {
    /// Builds a head. `k_pre` is the pre-allocated node count; the expanding
    /// variant ignores it and starts with zero active nodes.
    pub fn new<R: Rng>(
        kind: HeadKind,
        k_pre: usize,
        feature_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let blocks = match kind {
            HeadKind::FixedSimplex => {
                if feature_dim + 1 != k_pre {
                    return Err(Error::config(format!(
                        "a {k_pre}-vertex simplex lives in {} dimensions, feature_dim is {feature_dim}",
                        k_pre.saturating_sub(1)
                    )));
                }
                vec![HeadBlock {
                    weights: Param::frozen(simplex_weights(k_pre)?),
                    bias: None,
                }]
            }
            HeadKind::FixedPolygon => {
                if feature_dim != 2 {
                    return Err(Error::config(format!(
                        "a polygon head needs feature_dim 2, got {feature_dim}"
                    )));
                }
                vec![HeadBlock {
                    weights: Param::frozen(polygon_weights(k_pre)?),
                    bias: None,
                }]
            }
            HeadKind::TrainableExpanding => Vec::new(),
            HeadKind::TrainablePreallocated => {
                if k_pre == 0 {
                    return Err(Error::config("pre-allocated head needs k_pre >= 1"));
                }
                vec![HeadBlock {
                    weights: Param::trainable(he_uniform(&[k_pre, feature_dim], feature_dim, rng)),
                    bias: Some(Param::trainable(Tensor::zeros(&[k_pre]))),
                }]
            }
        };
        Ok(ClassifierHead {
            kind,
            feature_dim,
            blocks,
        })
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Number of output nodes the head currently produces logits for.
    pub fn active_nodes(&self) -> usize {
        self.blocks.iter().map(|b| b.rows()).sum()
    }

    /// Appends `n_new` freshly initialized trainable nodes. Only the
    /// expanding variant supports this; existing rows are untouched.
    pub fn expand<R: Rng>(&mut self, n_new: usize, rng: &mut R) -> Result<()> {
        if self.kind != HeadKind::TrainableExpanding {
            return Err(Error::usage(format!(
                "cannot expand a {:?} head",
                self.kind
            )));
        }
        if n_new == 0 {
            return Err(Error::usage("expansion must add at least one node"));
        }
        self.blocks.push(HeadBlock {
            weights: Param::trainable(he_uniform(
                &[n_new, self.feature_dim],
                self.feature_dim,
                rng,
            )),
            bias: Some(Param::trainable(Tensor::zeros(&[n_new]))),
        });
        Ok(())
    }

    /// Logits over all active nodes: `features · Wᵀ` per block (plus bias for
    /// trainable blocks), concatenated along the class axis.
    pub fn logits(&self, features: &Tensor<T>) -> Result<Tensor<T>> {
        if features.shape().len() != 2 || features.cols() != self.feature_dim {
            return Err(Error::config(format!(
                "head expects [n, {}] features, got {:?}",
                self.feature_dim,
                features.shape()
            )));
        }
        let n = features.rows();
        let k = self.active_nodes();
        let mut out = Tensor::zeros(&[n, k]);
        let mut offset = 0;
        for block in &self.blocks {
            let rows = block.rows();
            let part = features.matmul_nt(&block.weights.value);
            let bias = block.bias.as_ref().map(|b| b.value.data());
            for i in 0..n {
                let src = &part.data()[i * rows..(i + 1) * rows];
                let dst = &mut out.data_mut()[i * k + offset..i * k + offset + rows];
                match bias {
                    Some(b) => {
                        for ((d, s), bv) in dst.iter_mut().zip(src).zip(b) {
                            *d = *s + *bv;
                        }
                    }
                    None => dst.copy_from_slice(src),
                }
            }
            offset += rows;
        }
        if !out.all_finite() {
            return Err(Error::numeric("non-finite value in head logits"));
        }
        Ok(out)
    }

    /// Backpropagates `dlogits` through the head. Returns gradients for the
    /// trainable blocks (frozen blocks get none) and the gradient w.r.t. the
    /// features.
    pub fn backward(&self, features: &Tensor<T>, dlogits: &Tensor<T>) -> Result<BackwardOutput<T>> {
        let n = features.rows();
        let k = self.active_nodes();
        if dlogits.shape() != [n, k] {
            return Err(Error::usage(format!(
                "dlogits shape {:?} does not match [{n}, {k}]",
                dlogits.shape()
            )));
        }
        let mut grads = BTreeMap::new();
        let mut dfeatures = Tensor::zeros(&[n, self.feature_dim]);
        let mut offset = 0;
        for (b, block) in self.blocks.iter().enumerate() {
            let rows = block.rows();
            // column slice [n, rows] of dlogits for this block
            let mut dpart = Tensor::zeros(&[n, rows]);
            for i in 0..n {
                dpart.data_mut()[i * rows..(i + 1) * rows]
                    .copy_from_slice(&dlogits.data()[i * k + offset..i * k + offset + rows]);
            }
            if block.weights.trainable {
                grads.insert(ParamKey::HeadWeight(b as u32), dpart.matmul_tn(features));
            }
            if let Some(bias) = &block.bias {
                if bias.trainable {
                    let mut db = Tensor::zeros(&[rows]);
                    for chunk in dpart.data().chunks_exact(rows) {
                        for (acc, v) in db.data_mut().iter_mut().zip(chunk) {
                            *acc += *v;
                        }
                    }
                    grads.insert(ParamKey::HeadBias(b as u32), db);
                }
            }
            let dpart_features = dpart.matmul_nn(&block.weights.value);
            for (acc, v) in dfeatures.data_mut().iter_mut().zip(dpart_features.data()) {
                *acc += *v;
            }
            offset += rows;
        }
        Ok((grads, dfeatures))
    }

    /// All active node weights as one `[active_nodes, feature_dim]` matrix.
    pub fn weight_matrix(&self) -> Tensor<T> {
        let k = self.active_nodes();
        let mut out = Tensor::zeros(&[k, self.feature_dim]);
        let mut offset = 0;
        for block in &self.blocks {
            let len = block.weights.value.len();
            out.data_mut()[offset..offset + len].copy_from_slice(block.weights.value.data());
            offset += len;
        }
        out
    }

    /// Parameters in canonical (key-sorted) order.
    pub fn params(&self) -> Vec<(ParamKey, &Param<T>)> {
        let mut out = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            out.push((ParamKey::HeadWeight(b as u32), &block.weights));
            if let Some(bias) = &block.bias {
                out.push((ParamKey::HeadBias(b as u32), bias));
            }
        }
        out
    }

    pub fn param(&self, key: ParamKey) -> Option<&Param<T>> {
        match key {
            ParamKey::HeadWeight(b) => self.blocks.get(b as usize).map(|blk| &blk.weights),
            ParamKey::HeadBias(b) => self.blocks.get(b as usize)?.bias.as_ref(),
            _ => None,
        }
    }

    pub fn param_mut(&mut self, key: ParamKey) -> Option<&mut Param<T>> {
        match key {
            ParamKey::HeadWeight(b) => self.blocks.get_mut(b as usize).map(|blk| &mut blk.weights),
            ParamKey::HeadBias(b) => self.blocks.get_mut(b as usize)?.bias.as_mut(),
            _ => None,
        }
    }
}
