//! Literal loop-based evaluation of one graph attention block, used as the
//! equivalence oracle for the production path. Everything is written out
//! entry by entry; only scalar arithmetic is shared.

use ndarray::Array2;

use crate::network::{BlockParams, EdgeBias};
use crate::real::Real;
use crate::windowing::BlockAdjacency;

fn norm_rows<T: Real>(x: &Array2<T>, gain: &ndarray::Array1<T>, bias: &ndarray::Array1<T>) -> Array2<T> {
    let (n, d) = x.dim();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let mut mean = T::zero();
        for c in 0..d {
            mean += x[[i, c]];
        }
        mean /= T::of(d as f64);
        let mut var = T::zero();
        for c in 0..d {
            let z = x[[i, c]] - mean;
            var += z * z;
        }
        var /= T::of(d as f64);
        let denom = (var + T::of(1e-5)).sqrt();
        for c in 0..d {
            out[[i, c]] = (x[[i, c]] - mean) / denom * gain[c] + bias[c];
        }
    }
    out
}

fn matmul<T: Real>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    let (n, k) = a.dim();
    let m = b.ncols();
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut s = T::zero();
            for c in 0..k {
                s += a[[i, c]] * b[[c, j]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

fn gelu_tanh<T: Real>(x: T) -> T {
    let inner = T::of((2.0 / std::f64::consts::PI).sqrt()) * (x + T::of(0.044715) * x.powi(3));
    T::of(0.5) * x * (T::one() + inner.tanh())
}

/// Output of one block for input `x` (`n x d`).
#[allow(clippy::too_many_arguments)]
pub fn dense_attention_reference<T: Real>(
    x: &Array2<T>,
    adjacency: &BlockAdjacency,
    params: &BlockParams<T>,
    heads: usize,
    mode: EdgeBias,
    bias: Option<&Array2<T>>,
    gamma: Option<T>,
) -> Array2<T> {
    let (n, d) = x.dim();
    let hd = d / heads;
    let a1 = norm_rows(x, &params.ln1_gain, &params.ln1_bias);
    let q = matmul(&a1, &params.wq);
    let k = matmul(&a1, &params.wk);
    let v = matmul(&a1, &params.wv);
    let weights = dense_attention_weights(&q, &k, adjacency, heads, mode, bias);

    let mut concat = Array2::zeros((n, d));
    for h in 0..heads {
        for i in 0..n {
            for c in 0..hd {
                let mut s = T::zero();
                for j in 0..n {
                    let mut w = weights[h][[i, j]];
                    if let Some(g) = gamma {
                        if w > g {
                            w = T::zero();
                        }
                    }
                    s += w * v[[j, h * hd + c]];
                }
                concat[[i, h * hd + c]] = s;
            }
        }
    }
    let proj = matmul(&concat, &params.wo);
    let mut mid = Array2::zeros((n, d));
    for i in 0..n {
        for c in 0..d {
            mid[[i, c]] = x[[i, c]] + proj[[i, c]] + params.bo[c];
        }
    }
    let a2 = norm_rows(&mid, &params.ln2_gain, &params.ln2_bias);
    let mut hidden = matmul(&a2, &params.ff_w1);
    for i in 0..n {
        for c in 0..hidden.ncols() {
            hidden[[i, c]] = gelu_tanh(hidden[[i, c]] + params.ff_b1[c]);
        }
    }
    let ff = matmul(&hidden, &params.ff_w2);
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        for c in 0..d {
            out[[i, c]] = mid[[i, c]] + ff[[i, c]] + params.ff_b2[c];
        }
    }
    out
}

/// Per-head attention weights computed from explicit logits:
/// disallowed entries get `-inf` before the exponential, or in literal mode
/// the logits are multiplied by the 0/1 mask and every entry is kept.
pub fn dense_attention_weights<T: Real>(
    q: &Array2<T>,
    k: &Array2<T>,
    adjacency: &BlockAdjacency,
    heads: usize,
    mode: EdgeBias,
    bias: Option<&Array2<T>>,
) -> Vec<Array2<T>> {
    let (n, d) = q.dim();
    let hd = d / heads;
    let scale = T::one() / T::of(hd as f64).sqrt();
    let mut out = Vec::with_capacity(heads);
    for h in 0..heads {
        let mut logits = Array2::from_elem((n, n), T::neg_infinity());
        for i in 0..n {
            for j in 0..n {
                let mut dot = T::zero();
                for c in 0..hd {
                    dot += q[[i, h * hd + c]] * k[[j, h * hd + c]];
                }
                let s = dot * scale;
                let edge = adjacency.mask[[i, j]];
                let same_side = adjacency.rolled[i] == adjacency.rolled[j];
                logits[[i, j]] = match mode {
                    EdgeBias::Hard if edge => s,
                    EdgeBias::Without if same_side => s,
                    EdgeBias::Learnable if same_side => s + bias.map_or(T::zero(), |b| b[[i, j]]),
                    EdgeBias::LiteralProduct => s * if edge { T::one() } else { T::zero() },
                    _ => T::neg_infinity(),
                };
            }
        }
        let mut w = Array2::zeros((n, n));
        for i in 0..n {
            let mut max = T::neg_infinity();
            for j in 0..n {
                max = max.max(logits[[i, j]]);
            }
            let mut total = T::zero();
            for j in 0..n {
                let e = if logits[[i, j]] == T::neg_infinity() { T::zero() } else { (logits[[i, j]] - max).exp() };
                w[[i, j]] = e;
                total += e;
            }
            for j in 0..n {
                w[[i, j]] = w[[i, j]] / total;
            }
        }
        out.push(w);
    }
    out
}
