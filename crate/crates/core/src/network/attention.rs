//! Multi-head graph attention over one spatio-temporal block, with the
//! pre-norm residual feed-forward that follows it.
//!
//! ```text
//! A1   = LN1(X)
//! Q, K, V = A1 Wq, A1 Wk, A1 Wv               (head h uses its column slice)
//! P_h  = masked_softmax(Q_h K_h^T / sqrt(hd))
//! X'   = X + concat_h(drop(P_h) V_h) Wo + bo
//! Out  = X' + FF(LN2(X'))
//! ```
//!
//! Attention dropout zeroes every weight above a threshold `gamma` without
//! renormalising the row.

use ndarray::{s, Array2, ArrayView2, Axis};

use super::layers::{
    affine, column_sums, gelu, gelu_grad, layer_norm_backward, layer_norm_stats, masked_softmax_row,
    softmax_backward,
};
use super::params::BlockParams;
use super::EdgeBias;
use crate::real::Real;
use crate::windowing::BlockAdjacency;

/// The adjacency of one block together with the edge-bias variant in force.
#[derive(Debug, Clone, Copy)]
pub struct AttentionMask<'a, T> {
    pub adjacency: &'a BlockAdjacency,
    pub mode: EdgeBias,
    /// Learnable additive bias (`n x n`) when `mode` is `Learnable`.
    pub bias: Option<ArrayView2<'a, T>>,
}

impl<'a, T: Real> AttentionMask<'a, T> {
    pub fn hard(adjacency: &'a BlockAdjacency) -> Self {
        AttentionMask {
            adjacency,
            mode: EdgeBias::Hard,
            bias: None,
        }
    }

    /// Whether the softmax of row `a` includes column `b`.
    #[inline]
    pub fn allowed(&self, a: usize, b: usize) -> bool {
        match self.mode {
            EdgeBias::Hard => self.adjacency.mask[[a, b]],
            EdgeBias::Without | EdgeBias::Learnable => self.adjacency.reachable(a, b),
            EdgeBias::LiteralProduct => true,
        }
    }

    fn literal_factor(&self, a: usize, b: usize) -> T {
        if self.adjacency.mask[[a, b]] {
            T::one()
        } else {
            T::zero()
        }
    }
}

/// Values kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    xhat1: Array2<T>,
    rstd1: ndarray::Array1<T>,
    a1: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// Post-softmax weights per head, before attention dropout.
    pub probs: Vec<Array2<T>>,
    gamma: Option<T>,
    ctx: Array2<T>,
    xhat2: Array2<T>,
    rstd2: ndarray::Array1<T>,
    a2: Array2<T>,
    hpre: Array2<T>,
    hact: Array2<T>,
}

impl<T: Real> BlockCache<T> {
    /// Weights after attention dropout, as used to mix values.
    pub fn dropped_probs(&self, head: usize) -> Array2<T> {
        apply_dropout(&self.probs[head], self.gamma)
    }
}

/// Zeroes entries strictly greater than `gamma`.
pub fn apply_dropout<T: Real>(p: &Array2<T>, gamma: Option<T>) -> Array2<T> {
    match gamma {
        None => p.clone(),
        Some(g) => p.mapv(|v| if v > g { T::zero() } else { v }),
    }
}

pub struct GraphAttentionBlock<'a, T> {
    pub params: &'a BlockParams<T>,
    pub heads: usize,
}

impl<'a, T: Real> GraphAttentionBlock<'a, T> {
    pub fn new(params: &'a BlockParams<T>, heads: usize) -> Self {
        GraphAttentionBlock { params, heads }
    }

    fn head_dim(&self) -> usize {
        self.params.width() / self.heads
    }

    fn scale(&self) -> T {
        T::one() / T::of(self.head_dim() as f64).sqrt()
    }

    /// Scaled (and biased or multiplied) logits of one head.
    fn logits(&self, q: ArrayView2<'_, T>, k: ArrayView2<'_, T>, mask: &AttentionMask<'_, T>) -> Array2<T> {
        let mut s = q.dot(&k.t());
        s *= self.scale();
        match mask.mode {
            EdgeBias::Learnable => {
                if let Some(b) = &mask.bias {
                    s += b;
                }
            }
            EdgeBias::LiteralProduct => {
                for ((a, b), v) in s.indexed_iter_mut() {
                    *v *= mask.literal_factor(a, b);
                }
            }
            EdgeBias::Hard | EdgeBias::Without => {}
        }
        s
    }

    pub fn forward(
        &self,
        x: ArrayView2<'_, T>,
        mask: &AttentionMask<'_, T>,
        gamma: Option<T>,
    ) -> (Array2<T>, BlockCache<T>) {
        let p = self.params;
        let n = x.nrows();
        let hd = self.head_dim();
        assert_eq!(n, mask.adjacency.n(), "block size does not match mask");

        let (xhat1, rstd1) = layer_norm_stats(x);
        let a1 = affine(&xhat1, &p.ln1_gain, &p.ln1_bias);
        let q = a1.dot(&p.wq);
        let k = a1.dot(&p.wk);
        let v = a1.dot(&p.wv);

        let mut ctx = Array2::zeros((n, p.width()));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * hd..(h + 1) * hd];
            let logits = self.logits(q.slice(cols), k.slice(cols), mask);
            let mut prob = Array2::zeros((n, n));
            for (a, mut row) in prob.rows_mut().into_iter().enumerate() {
                masked_softmax_row(
                    logits.row(a),
                    |b| mask.allowed(a, b),
                    row.as_slice_mut().expect("contiguous row"),
                );
            }
            let used = apply_dropout(&prob, gamma);
            ctx.slice_mut(cols).assign(&used.dot(&v.slice(cols)));
            probs.push(prob);
        }

        let mut xm = ctx.dot(&p.wo);
        xm += &p.bo;
        xm += &x;

        let (xhat2, rstd2) = layer_norm_stats(xm.view());
        let a2 = affine(&xhat2, &p.ln2_gain, &p.ln2_bias);
        let mut hpre = a2.dot(&p.ff_w1);
        hpre += &p.ff_b1;
        let hact = hpre.mapv(gelu);
        let mut out = hact.dot(&p.ff_w2);
        out += &p.ff_b2;
        out += &xm;

        let cache = BlockCache {
            xhat1,
            rstd1,
            a1,
            q,
            k,
            v,
            probs,
            gamma,
            ctx,
            xhat2,
            rstd2,
            a2,
            hpre,
            hact,
        };
        (out, cache)
    }

    /// Accumulates parameter gradients into `grads` (edge bias into window
    /// `window`) and returns the gradient with respect to the block input.
    pub fn backward(
        &self,
        cache: &BlockCache<T>,
        mask: &AttentionMask<'_, T>,
        dout: &Array2<T>,
        grads: &mut BlockParams<T>,
        window: usize,
    ) -> Array2<T> {
        let p = self.params;
        let hd = self.head_dim();
        let scale = self.scale();

        // feed-forward branch
        grads.ff_w2 += &cache.hact.t().dot(dout);
        grads.ff_b2 += &column_sums(dout);
        let mut dh = dout.dot(&p.ff_w2.t());
        dh.zip_mut_with(&cache.hpre, |g, &z| *g *= gelu_grad(z));
        grads.ff_w1 += &cache.a2.t().dot(&dh);
        grads.ff_b1 += &column_sums(&dh);
        let da2 = dh.dot(&p.ff_w1.t());
        grads.ln2_gain += &(&da2 * &cache.xhat2).sum_axis(Axis(0));
        grads.ln2_bias += &column_sums(&da2);
        let dxhat2 = &da2 * &p.ln2_gain;
        let mut dxm = layer_norm_backward(&dxhat2, &cache.xhat2, &cache.rstd2);
        dxm += dout;

        // attention branch
        grads.wo += &cache.ctx.t().dot(&dxm);
        grads.bo += &column_sums(&dxm);
        let dctx = dxm.dot(&p.wo.t());
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for h in 0..self.heads {
            let cols = s![.., h * hd..(h + 1) * hd];
            let prob = &cache.probs[h];
            let used = apply_dropout(prob, cache.gamma);
            let dctx_h = dctx.slice(cols);
            dv.slice_mut(cols).assign(&used.t().dot(&dctx_h));
            let mut dp = dctx_h.dot(&cache.v.slice(cols).t());
            if let Some(gamma) = cache.gamma {
                // dropped entries are constant zero
                dp.zip_mut_with(prob, |g, &pv| {
                    if pv > gamma {
                        *g = T::zero();
                    }
                });
            }
            let mut ds = softmax_backward(prob, &dp);
            match mask.mode {
                EdgeBias::Learnable => {
                    if let Some(eb) = grads.edge_bias.as_mut() {
                        let mut slot = eb.index_axis_mut(Axis(0), window);
                        slot += &ds;
                    }
                }
                EdgeBias::LiteralProduct => {
                    for ((a, b), v) in ds.indexed_iter_mut() {
                        *v *= mask.literal_factor(a, b);
                    }
                }
                EdgeBias::Hard | EdgeBias::Without => {}
            }
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }

        grads.wq += &cache.a1.t().dot(&dq);
        grads.wk += &cache.a1.t().dot(&dk);
        grads.wv += &cache.a1.t().dot(&dv);
        let mut da1 = dq.dot(&p.wq.t());
        da1 += &dk.dot(&p.wk.t());
        da1 += &dv.dot(&p.wv.t());
        grads.ln1_gain += &(&da1 * &cache.xhat1).sum_axis(Axis(0));
        grads.ln1_bias += &column_sums(&da1);
        let dxhat1 = &da1 * &p.ln1_gain;
        let mut dx = layer_norm_backward(&dxhat1, &cache.xhat1, &cache.rstd1);
        dx += &dxm;
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::params::BlockParams;
    use crate::schema::build_default_schema;
    use crate::windowing::{build_block_adjacency, build_window_layout, WindowMode};
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_adjacency(n: usize) -> BlockAdjacency {
        BlockAdjacency {
            mask: Array2::from_shape_fn((n, n), |(i, j)| i == j),
            rolled: vec![false; n],
        }
    }

    #[test]
    fn identity_mask_attends_to_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = BlockParams::<f64>::init(8, 2, None, &mut rng);
        let x = Array2::from_shape_fn((5, 8), |_| rng.random_range(-1.0..1.0));
        let adj = identity_adjacency(5);
        let blk = GraphAttentionBlock::new(&params, 2);
        let (_, cache) = blk.forward(x.view(), &AttentionMask::hard(&adj), None);
        for p in &cache.probs {
            for i in 0..5 {
                for j in 0..5 {
                    assert_eq!(p[[i, j]], if i == j { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn identical_connected_nodes_split_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = BlockParams::<f64>::init(4, 2, None, &mut rng);
        let row = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let x = ndarray::stack(Axis(0), &[row.view(), row.view()]).unwrap();
        let adj = BlockAdjacency {
            mask: Array2::from_elem((2, 2), true),
            rolled: vec![false; 2],
        };
        let blk = GraphAttentionBlock::new(&params, 1);
        let (_, cache) = blk.forward(x.view(), &AttentionMask::hard(&adj), None);
        for v in cache.probs[0].iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn dropout_threshold_semantics() {
        let p = ndarray::array![[0.7f64, 0.3]];
        assert_eq!(apply_dropout(&p, Some(0.5)), ndarray::array![[0.0, 0.3]]);
        assert_eq!(apply_dropout(&p, Some(1.0)), p);
        assert_eq!(apply_dropout(&p, Some(0.0)), ndarray::array![[0.0, 0.0]]);
    }

    #[test]
    fn rows_sum_to_one_over_adjacent_entries() {
        let schema = build_default_schema();
        let layout = build_window_layout(&schema, WindowMode::Four);
        let adj = build_block_adjacency(&layout.windows[0], 2, &[false, true]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = BlockParams::<f32>::init(8, 2, None, &mut rng);
        let x = Array2::from_shape_fn((32, 8), |_| rng.random_range(-1.0f32..1.0));
        let blk = GraphAttentionBlock::new(&params, 2);
        let (_, cache) = blk.forward(x.view(), &AttentionMask::hard(&adj), None);
        for p in &cache.probs {
            for i in 0..32 {
                let mut sum = 0.0f32;
                for j in 0..32 {
                    if adj.mask[[i, j]] {
                        sum += p[[i, j]];
                    } else {
                        assert_eq!(p[[i, j]], 0.0);
                    }
                }
                assert!((sum - 1.0).abs() <= 1e-6);
            }
        }
    }
}
