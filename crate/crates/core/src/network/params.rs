//! Trainable parameters. Gradients and optimiser moments reuse the same
//! structure, so every consumer walks tensors through [`Params::tensors`].

use ndarray::{Array1, Array2, Array3, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{EdgeBias, ModelConfig, LEARNABLE_OFF_EDGE_INIT};
use crate::real::Real;
use crate::windowing::MaskSet;

/// One graph attention block: pre-norms, attention projections, feed-forward.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    pub ln1_gain: Array1<T>,
    pub ln1_bias: Array1<T>,
    /// Query projection; head `h` uses columns `h * hd .. (h + 1) * hd`.
    pub wq: Array2<T>,
    pub wk: Array2<T>,
    pub wv: Array2<T>,
    /// Output projection over the concatenated heads.
    pub wo: Array2<T>,
    pub bo: Array1<T>,
    pub ln2_gain: Array1<T>,
    pub ln2_bias: Array1<T>,
    pub ff_w1: Array2<T>,
    pub ff_b1: Array1<T>,
    pub ff_w2: Array2<T>,
    pub ff_b2: Array1<T>,
    /// Learnable edge bias, one `n x n` matrix per spatial window.
    pub edge_bias: Option<Array3<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// `layers[l][m]` is attention block `m` of part attention layer `l`.
    pub layers: Vec<Vec<BlockParams<T>>>,
    pub classifier_w: Array2<T>,
    pub classifier_b: Array1<T>,
}

fn normal_matrix<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<T> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || T::of(dist.sample(rng)))
}

fn xavier<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    normal_matrix(rows, cols, (2.0 / (rows + cols) as f64).sqrt(), rng)
}

impl<T: Real> BlockParams<T> {
    pub fn init<R: Rng + ?Sized>(d: usize, ff_ratio: usize, edge_bias: Option<Array3<T>>, rng: &mut R) -> Self {
        let hidden = d * ff_ratio;
        BlockParams {
            ln1_gain: Array1::ones(d),
            ln1_bias: Array1::zeros(d),
            wq: xavier(d, d, rng),
            wk: xavier(d, d, rng),
            wv: xavier(d, d, rng),
            wo: xavier(d, d, rng),
            bo: Array1::zeros(d),
            ln2_gain: Array1::ones(d),
            ln2_bias: Array1::zeros(d),
            ff_w1: xavier(d, hidden, rng),
            ff_b1: Array1::zeros(hidden),
            ff_w2: xavier(hidden, d, rng),
            ff_b2: Array1::zeros(d),
            edge_bias,
        }
    }

    pub fn width(&self) -> usize {
        self.wq.nrows()
    }

    fn tensors_into<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, T>)>) {
        let mut push = |name: &str, v: ArrayViewD<'a, T>| out.push((format!("{prefix}.{name}"), v));
        push("ln1.gain", self.ln1_gain.view().into_dyn());
        push("ln1.bias", self.ln1_bias.view().into_dyn());
        push("attn.wq", self.wq.view().into_dyn());
        push("attn.wk", self.wk.view().into_dyn());
        push("attn.wv", self.wv.view().into_dyn());
        push("attn.wo", self.wo.view().into_dyn());
        push("attn.bo", self.bo.view().into_dyn());
        push("ln2.gain", self.ln2_gain.view().into_dyn());
        push("ln2.bias", self.ln2_bias.view().into_dyn());
        push("ff.w1", self.ff_w1.view().into_dyn());
        push("ff.b1", self.ff_b1.view().into_dyn());
        push("ff.w2", self.ff_w2.view().into_dyn());
        push("ff.b2", self.ff_b2.view().into_dyn());
        if let Some(b) = &self.edge_bias {
            push("attn.edge_bias", b.view().into_dyn());
        }
    }

    fn tensors_mut_into<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, T>)>) {
        let mut push = |name: &str, v: ArrayViewMutD<'a, T>| out.push((format!("{prefix}.{name}"), v));
        push("ln1.gain", self.ln1_gain.view_mut().into_dyn());
        push("ln1.bias", self.ln1_bias.view_mut().into_dyn());
        push("attn.wq", self.wq.view_mut().into_dyn());
        push("attn.wk", self.wk.view_mut().into_dyn());
        push("attn.wv", self.wv.view_mut().into_dyn());
        push("attn.wo", self.wo.view_mut().into_dyn());
        push("attn.bo", self.bo.view_mut().into_dyn());
        push("ln2.gain", self.ln2_gain.view_mut().into_dyn());
        push("ln2.bias", self.ln2_bias.view_mut().into_dyn());
        push("ff.w1", self.ff_w1.view_mut().into_dyn());
        push("ff.b1", self.ff_b1.view_mut().into_dyn());
        push("ff.w2", self.ff_w2.view_mut().into_dyn());
        push("ff.b2", self.ff_b2.view_mut().into_dyn());
        if let Some(b) = &mut self.edge_bias {
            push("attn.edge_bias", b.view_mut().into_dyn());
        }
    }
}

/// Initial learnable bias: 0 where the regular block mask has an edge,
/// [`LEARNABLE_OFF_EDGE_INIT`] elsewhere.
pub fn initial_edge_bias<T: Real>(masks: &MaskSet) -> Array3<T> {
    let s = masks.regular.len();
    let n = masks.regular[0].n();
    Array3::from_shape_fn((s, n, n), |(w, i, j)| {
        if masks.regular[w].mask[[i, j]] {
            T::zero()
        } else {
            T::of(LEARNABLE_OFF_EDGE_INIT)
        }
    })
}

impl<T: Real> Params<T> {
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, masks: &MaskSet, rng: &mut R) -> Self {
        let layers = (0..cfg.layers)
            .map(|l| {
                (0..cfg.blocks_per_layer)
                    .map(|_| {
                        let bias = (cfg.edge_bias == EdgeBias::Learnable).then(|| initial_edge_bias(masks));
                        BlockParams::init(cfg.width(l), cfg.ff_ratio, bias, rng)
                    })
                    .collect()
            })
            .collect();
        Params {
            layers,
            classifier_w: xavier(cfg.feature_dim(), cfg.num_classes, rng),
            classifier_b: Array1::zeros(cfg.num_classes),
        }
    }

    /// New classifier head for `num_classes`, keeping every other tensor.
    pub fn with_new_classifier<R: Rng + ?Sized>(&self, num_classes: usize, rng: &mut R) -> Self {
        let d = self.classifier_w.nrows();
        Params {
            layers: self.layers.clone(),
            classifier_w: xavier(d, num_classes, rng),
            classifier_b: Array1::zeros(num_classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, mut t) in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    /// Named views of every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (m, b) in layer.iter().enumerate() {
                b.tensors_into(&format!("layers.{l}.blocks.{m}"), &mut out);
            }
        }
        out.push(("classifier.w".into(), self.classifier_w.view().into_dyn()));
        out.push(("classifier.b".into(), self.classifier_b.view().into_dyn()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (m, b) in layer.iter_mut().enumerate() {
                b.tensors_mut_into(&format!("layers.{l}.blocks.{m}"), &mut out);
            }
        }
        out.push(("classifier.w".into(), self.classifier_w.view_mut().into_dyn()));
        out.push(("classifier.b".into(), self.classifier_b.view_mut().into_dyn()));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Params<T>) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a += &b;
        }
    }

    pub fn scale(&mut self, k: T) {
        for (_, mut t) in self.tensors_mut() {
            t.mapv_inplace(|v| v * k);
        }
    }

    pub fn all_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n)
    }

    /// Element-wise cast, e.g. to run the gradient checker in double precision.
    pub fn cast<U: Real>(&self) -> Params<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| U::of(v.to_f64_lossy()));
        let c1 = |a: &Array1<T>| a.mapv(|v| U::of(v.to_f64_lossy()));
        Params {
            layers: self
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|b| BlockParams {
                            ln1_gain: c1(&b.ln1_gain),
                            ln1_bias: c1(&b.ln1_bias),
                            wq: c2(&b.wq),
                            wk: c2(&b.wk),
                            wv: c2(&b.wv),
                            wo: c2(&b.wo),
                            bo: c1(&b.bo),
                            ln2_gain: c1(&b.ln2_gain),
                            ln2_bias: c1(&b.ln2_bias),
                            ff_w1: c2(&b.ff_w1),
                            ff_b1: c1(&b.ff_b1),
                            ff_w2: c2(&b.ff_w2),
                            ff_b2: c1(&b.ff_b2),
                            edge_bias: b.edge_bias.as_ref().map(|e| e.mapv(|v| U::of(v.to_f64_lossy()))),
                        })
                        .collect()
                })
                .collect(),
            classifier_w: c2(&self.classifier_w),
            classifier_b: c1(&self.classifier_b),
        }
    }
}
