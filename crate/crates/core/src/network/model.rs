use ndarray::{Array1, Array2, Array3, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::attention::{AttentionMask, BlockCache, GraphAttentionBlock};
use super::embed::{add_positional_encoding, fourier_embed};
use super::params::Params;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::preprocess::SkeletonSequence;
use crate::real::Real;
use crate::schema::build_default_schema;
use crate::windowing::{apply_windows, build_window_layout, MaskSet, WindowLayout};

/// Attention-dropout thresholds of one sample, one per attention block in
/// layer-major order (`layer * M + block`). `None` disables dropout.
pub type Gammas<T> = Option<Vec<T>>;

/// Concatenates the channels of each run of `block_len` frames:
/// `F x K' x c -> (F / T) x K' x (c * T)`, frames in temporal order.
pub fn temporal_merge<T: Clone>(x: &Array3<T>, block_len: usize) -> Result<Array3<T>> {
    let (f, k, c) = x.dim();
    if block_len == 0 || f % block_len != 0 {
        return Err(Error::Config(format!(
            "cannot merge {f} frames in blocks of {block_len}"
        )));
    }
    let g = f / block_len;
    let blocks = x
        .view()
        .into_shape_with_order((g, block_len, k, c))
        .expect("contiguous input")
        .permuted_axes([0, 2, 1, 3]);
    let merged = blocks.as_standard_layout().into_owned();
    Ok(merged
        .into_shape_with_order((g, k, block_len * c))
        .expect("standard layout"))
}

/// Inverse of [`temporal_merge`].
pub fn temporal_split<T: Clone>(x: &Array3<T>, block_len: usize) -> Array3<T> {
    let (g, k, ct) = x.dim();
    let c = ct / block_len;
    let parts = x
        .view()
        .into_shape_with_order((g, k, block_len, c))
        .expect("contiguous input")
        .permuted_axes([0, 2, 1, 3]);
    let split = parts.as_standard_layout().into_owned();
    split
        .into_shape_with_order((g * block_len, k, c))
        .expect("standard layout")
}

fn rows_to_3d<T: Clone>(x: Array2<T>, frames: usize, nodes: usize) -> Array3<T> {
    let c = x.ncols();
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order((frames, nodes, c))
        .expect("row count matches")
}

fn rows_from_3d<T: Clone>(x: Array3<T>) -> Array2<T> {
    let (f, k, c) = x.dim();
    x.into_shape_with_order((f * k, c)).expect("standard layout")
}

#[derive(Debug, Clone)]
struct PassCache<T> {
    /// One entry per (window, temporal block), window-major.
    units: Vec<BlockCache<T>>,
}

/// Result of a single-sample forward pass with everything backward needs.
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub logits: Array1<T>,
    pub pooled: Array1<T>,
    /// `(frames, nodes, channels)` after each part attention layer.
    pub layer_shapes: Vec<(usize, usize, usize)>,
    passes: Vec<Vec<PassCache<T>>>,
    gammas: Gammas<T>,
}

impl<T: Real> ForwardOutput<T> {
    /// Per-head attention weights (before dropout) of pass `(layer, block)`
    /// for each (window, temporal block) unit.
    pub fn attention_weights(&self, layer: usize, block: usize) -> Vec<&Vec<Array2<T>>> {
        self.passes[layer][block].units.iter().map(|u| &u.probs).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    /// Fixed `m x 2` Fourier frequency matrix.
    pub fourier: Array2<T>,
    pub params: Params<T>,
    layout: WindowLayout,
    masks: MaskSet,
}

impl<T: Real> Model<T> {
    /// Fresh model with parameters drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = build_window_layout(&build_default_schema(), config.windows);
        let masks = MaskSet::new(&layout, config.block_len);
        let mut rng = crate::rng::seeded(config.seed);
        let normal = Normal::new(0.0, config.fourier_sigma).expect("positive sigma");
        let fourier = Array2::from_shape_simple_fn((config.embed_dim / 2, 2), || T::of(normal.sample(&mut rng)));
        let params = Params::init(&config, &masks, &mut rng);
        Ok(Model {
            config,
            fourier,
            params,
            layout,
            masks,
        })
    }

    /// Reassembles a model from stored parts, checking every shape.
    pub fn from_parts(config: ModelConfig, fourier: Array2<T>, params: Params<T>) -> Result<Self> {
        let template = Model::<T>::new(config.clone())?;
        if fourier.dim() != template.fourier.dim() {
            return Err(Error::Checkpoint("fourier matrix shape mismatch".into()));
        }
        let want = template.params.tensors();
        let got = params.tensors();
        if want.len() != got.len() {
            return Err(Error::Checkpoint("parameter tensor count mismatch".into()));
        }
        for ((wn, wt), (gn, gt)) in want.iter().zip(&got) {
            if wn != gn || wt.shape() != gt.shape() {
                return Err(Error::Checkpoint(format!("tensor {gn} does not match {wn}")));
            }
        }
        Ok(Model {
            fourier,
            params,
            ..template
        })
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            fourier: self.fourier.mapv(|v| U::of(v.to_f64_lossy())),
            params: self.params.cast(),
            layout: self.layout.clone(),
            masks: self.masks.clone(),
        }
    }

    pub fn layout(&self) -> &WindowLayout {
        &self.layout
    }

    pub fn masks(&self) -> &MaskSet {
        &self.masks
    }

    pub fn num_passes(&self) -> usize {
        self.config.layers * self.config.blocks_per_layer
    }

    /// Embeds windowed coordinates (`F x K' x 2`) into `(F * K') x d'` rows.
    pub fn embed(&self, coords: &Array3<f32>) -> Result<Array2<T>> {
        let (f, k, d) = coords.dim();
        if f != self.config.frames || k != self.layout.total_nodes() || d != 2 {
            return Err(Error::Data(format!(
                "windowed input is {f}x{k}x{d}, model expects {}x{}x2",
                self.config.frames,
                self.layout.total_nodes()
            )));
        }
        let mut x = fourier_embed(coords.view(), &self.fourier);
        add_positional_encoding(&mut x, f, k);
        Ok(x)
    }

    /// Windows and embeds a normalised sequence of exactly `frames` frames.
    pub fn prepare_input(&self, seq: &SkeletonSequence) -> Result<Array2<T>> {
        if seq.has_missing() {
            return Err(Error::Data(format!("sequence {} still has missing keypoints", seq.id)));
        }
        self.embed(&apply_windows(&seq.frames, &self.layout))
    }

    /// One threshold per attention pass, uniform on `(0, 1)`, when the
    /// regulariser is enabled.
    pub fn draw_gammas<R: Rng + ?Sized>(&self, rng: &mut R) -> Gammas<T> {
        self.config.regularizer.then(|| {
            (0..self.num_passes())
                .map(|_| {
                    let mut g: f64 = rng.random();
                    while g == 0.0 {
                        g = rng.random();
                    }
                    T::of(g)
                })
                .collect()
        })
    }

    fn unit_rows(&self, frames: usize, window: usize, block: usize, shift: usize) -> Vec<usize> {
        let t = self.config.block_len;
        let kp = self.layout.total_nodes();
        let wk = self.layout.window_len();
        let mut rows = Vec::with_capacity(t * wk);
        for tl in 0..t {
            let frame = (block * t + tl + shift) % frames;
            rows.extend((0..wk).map(|a| frame * kp + window * wk + a));
        }
        rows
    }

    fn mask<'a>(&'a self, layer: usize, block: usize, window: usize, unit_block: usize, num_blocks: usize) -> AttentionMask<'a, T> {
        let shifted = self.config.block_is_shifted(block);
        AttentionMask {
            adjacency: self.masks.get(window, unit_block, num_blocks, shifted),
            mode: self.config.edge_bias,
            bias: self.params.layers[layer][block]
                .edge_bias
                .as_ref()
                .map(|b| b.index_axis(Axis(0), window)),
        }
    }

    fn pass_forward(&self, layer: usize, block: usize, x: &Array2<T>, gamma: Option<T>) -> Result<(Array2<T>, PassCache<T>)> {
        let cfg = &self.config;
        let frames = cfg.frames_at(layer);
        let num_blocks = frames / cfg.block_len;
        let shift = if cfg.block_is_shifted(block) { self.masks.shift } else { 0 };
        let gab = GraphAttentionBlock::new(&self.params.layers[layer][block], cfg.heads);
        let mut out = Array2::zeros(x.raw_dim());
        let mut units = Vec::with_capacity(self.layout.num_windows() * num_blocks);
        for w in 0..self.layout.num_windows() {
            for j in 0..num_blocks {
                let rows = self.unit_rows(frames, w, j, shift);
                let xb = x.select(Axis(0), &rows);
                let mask = self.mask(layer, block, w, j, num_blocks);
                let (ob, cache) = gab.forward(xb.view(), &mask, gamma);
                for (r, row) in rows.iter().zip(ob.rows()) {
                    out.row_mut(*r).assign(&row);
                }
                units.push(cache);
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("layer {layer} attention block {block}")));
        }
        Ok((out, PassCache { units }))
    }

    fn pass_backward(&self, layer: usize, block: usize, cache: &PassCache<T>, dout: &Array2<T>, grads: &mut Params<T>) -> Array2<T> {
        let cfg = &self.config;
        let frames = cfg.frames_at(layer);
        let num_blocks = frames / cfg.block_len;
        let shift = if cfg.block_is_shifted(block) { self.masks.shift } else { 0 };
        let gab = GraphAttentionBlock::new(&self.params.layers[layer][block], cfg.heads);
        let mut dx = Array2::zeros(dout.raw_dim());
        let mut units = cache.units.iter();
        for w in 0..self.layout.num_windows() {
            for j in 0..num_blocks {
                let rows = self.unit_rows(frames, w, j, shift);
                let db = dout.select(Axis(0), &rows);
                let mask = self.mask(layer, block, w, j, num_blocks);
                let unit = units.next().expect("one cache per unit");
                let dxb = gab.backward(unit, &mask, &db, &mut grads.layers[layer][block], w);
                for (r, row) in rows.iter().zip(dxb.rows()) {
                    dx.row_mut(*r).assign(&row);
                }
            }
        }
        dx
    }

    /// Single-sample forward pass over embedded input rows.
    pub fn forward(&self, input: &Array2<T>, gammas: Option<&[T]>) -> Result<ForwardOutput<T>> {
        let cfg = &self.config;
        let kp = self.layout.total_nodes();
        if input.dim() != (cfg.frames * kp, cfg.embed_dim) {
            return Err(Error::Data(format!(
                "embedded input is {:?}, expected ({}, {})",
                input.dim(),
                cfg.frames * kp,
                cfg.embed_dim
            )));
        }
        if let Some(g) = gammas {
            if g.len() != self.num_passes() {
                return Err(Error::Config("one dropout threshold per attention block required".into()));
            }
        }
        let mut x = input.clone();
        let mut passes = Vec::with_capacity(cfg.layers);
        let mut layer_shapes = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let mut layer_caches = Vec::with_capacity(cfg.blocks_per_layer);
            for m in 0..cfg.blocks_per_layer {
                let gamma = gammas.map(|g| g[l * cfg.blocks_per_layer + m]);
                let (y, cache) = self.pass_forward(l, m, &x, gamma)?;
                x = y;
                layer_caches.push(cache);
            }
            passes.push(layer_caches);
            let merged = temporal_merge(&rows_to_3d(x, cfg.frames_at(l), kp), cfg.block_len)?;
            layer_shapes.push(merged.dim());
            x = rows_from_3d(merged);
        }
        let pooled = x.mean_axis(Axis(0)).expect("non-empty");
        let mut logits = pooled.dot(&self.params.classifier_w);
        logits += &self.params.classifier_b;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("classifier logits".into()));
        }
        Ok(ForwardOutput {
            logits,
            pooled,
            layer_shapes,
            passes,
            gammas: gammas.map(|g| g.to_vec()),
        })
    }

    /// Accumulates `d loss / d params` for one sample into `grads`, given the
    /// gradient of the loss with respect to that sample's logits.
    pub fn backward(&self, out: &ForwardOutput<T>, dlogits: ArrayView1<'_, T>, grads: &mut Params<T>) -> Result<()> {
        let cfg = &self.config;
        let kp = self.layout.total_nodes();
        let d = cfg.feature_dim();
        for i in 0..d {
            for c in 0..cfg.num_classes {
                grads.classifier_w[[i, c]] += out.pooled[i] * dlogits[c];
            }
        }
        grads.classifier_b += &dlogits;
        let dpooled = self.params.classifier_w.dot(&dlogits);
        let rows = cfg.frames_at(cfg.layers) * kp;
        let inv = T::one() / T::of(rows as f64);
        let mut dx = Array2::from_shape_fn((rows, d), |(_, c)| dpooled[c] * inv);
        for l in (0..cfg.layers).rev() {
            let d3 = rows_to_3d(dx, cfg.frames_at(l + 1), kp);
            dx = rows_from_3d(temporal_split(&d3, cfg.block_len));
            for m in (0..cfg.blocks_per_layer).rev() {
                dx = self.pass_backward(l, m, &out.passes[l][m], &dx, grads);
            }
        }
        if let Some(name) = grads.all_finite() {
            return Err(Error::Numeric(format!("gradient of {name}")));
        }
        let _ = &out.gammas;
        Ok(())
    }
}
