//! Row-wise primitives shared by the attention block: layer normalisation,
//! GELU and masked softmax, each with its backward.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::real::Real;

pub const LN_EPS: f64 = 1e-5;

/// Normalised rows `xhat` and per-row reciprocal standard deviations.
pub fn layer_norm_stats<T: Real>(x: ArrayView2<'_, T>) -> (Array2<T>, Array1<T>) {
    let d = T::of(x.ncols() as f64);
    let eps = T::of(LN_EPS);
    let mut xhat = x.to_owned();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        let inv = T::one() / (var + eps).sqrt();
        row.mapv_inplace(|v| v * inv);
        *r = inv;
    }
    (xhat, rstd)
}

pub fn affine<T: Real>(xhat: &Array2<T>, gain: &Array1<T>, bias: &Array1<T>) -> Array2<T> {
    let mut y = xhat * gain;
    y += bias;
    y
}

/// Gradient through `xhat` given `dxhat = dy * gain`.
pub fn layer_norm_backward<T: Real>(dxhat: &Array2<T>, xhat: &Array2<T>, rstd: &Array1<T>) -> Array2<T> {
    let d = T::of(dxhat.ncols() as f64);
    let mut dx = Array2::zeros(dxhat.raw_dim());
    Zip::from(dx.rows_mut())
        .and(dxhat.rows())
        .and(xhat.rows())
        .and(rstd)
        .for_each(|mut out, g, xh, &r| {
            let mean_g = g.sum() / d;
            let mean_gx = g.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<T>() / d;
            Zip::from(&mut out)
                .and(&g)
                .and(&xh)
                .for_each(|o, &gi, &xi| *o = r * (gi - mean_g - xi * mean_gx));
        });
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let u = c * (x + a * x * x * x);
    let th = u.tanh();
    let du = c * (T::one() + T::of(3.0) * a * x * x);
    half * (T::one() + th) + half * x * (T::one() - th * th) * du
}

/// Softmax of `logits` restricted to entries where `allowed` holds; all other
/// outputs are exactly zero. At least one entry must be allowed.
pub fn masked_softmax_row<T: Real>(logits: ArrayView1<'_, T>, allowed: impl Fn(usize) -> bool, out: &mut [T]) {
    let mut max = T::neg_infinity();
    for (j, &v) in logits.iter().enumerate() {
        if allowed(j) && v > max {
            max = v;
        }
    }
    let mut sum = T::zero();
    for (j, (&v, o)) in logits.iter().zip(out.iter_mut()).enumerate() {
        *o = if allowed(j) {
            let e = (v - max).exp();
            sum += e;
            e
        } else {
            T::zero()
        };
    }
    let inv = T::one() / sum;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

/// Backward of a row softmax: `ds_j = p_j (dp_j - sum_k p_k dp_k)`.
pub fn softmax_backward<T: Real>(p: &Array2<T>, dp: &Array2<T>) -> Array2<T> {
    let mut ds = Array2::zeros(p.raw_dim());
    Zip::from(ds.rows_mut())
        .and(p.rows())
        .and(dp.rows())
        .for_each(|mut out, pr, dpr| {
            let dot: T = pr.iter().zip(dpr.iter()).map(|(&a, &b)| a * b).sum();
            Zip::from(&mut out)
                .and(&pr)
                .and(&dpr)
                .for_each(|o, &pi, &dpi| *o = pi * (dpi - dot));
        });
    ds
}

pub fn column_sums<T: Real>(x: &Array2<T>) -> Array1<T> {
    x.sum_axis(Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn layer_norm_rows_are_standardised() {
        let x = array![[1.0f64, 2.0, 3.0, 4.0], [0.5, -0.5, 0.25, 2.0]];
        let (xhat, _) = layer_norm_stats(x.view());
        for row in xhat.rows() {
            let mean = row.sum() / 4.0;
            let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn masked_softmax_zeroes_disallowed() {
        let logits = array![1.0f64, 5.0, 2.0, -1.0];
        let mut out = [0.0; 4];
        masked_softmax_row(logits.view(), |j| j != 1, &mut out);
        assert_eq!(out[1], 0.0);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_backward_matches_difference() {
        let x = array![[0.3f64, -1.2, 0.7, 2.0, 0.1]];
        let g = array![[0.2f64, -0.4, 1.0, 0.3, -0.9]];
        let f = |x: &Array2<f64>| {
            let (xh, _) = layer_norm_stats(x.view());
            (&xh * &g).sum()
        };
        let (xhat, rstd) = layer_norm_stats(x.view());
        let dx = layer_norm_backward(&g, &xhat, &rstd);
        for j in 0..5 {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[[0, j]] += h;
            let mut xm = x.clone();
            xm[[0, j]] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - dx[[0, j]]).abs() < 1e-7);
        }
    }
}
