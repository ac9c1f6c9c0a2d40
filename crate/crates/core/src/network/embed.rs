//! Fixed input embeddings: random Fourier features of each node coordinate
//! and sinusoidal frame-position encoding.

use ndarray::{Array2, ArrayView3};

use crate::real::Real;

/// Maps `F x K' x 2` coordinates to `(F * K') x 2m` features
/// `[cos(2 pi B v), sin(2 pi B v)]`, where `freqs` is the `m x 2` matrix `B`.
pub fn fourier_embed<T: Real>(coords: ArrayView3<'_, f32>, freqs: &Array2<T>) -> Array2<T> {
    let (f, k, d) = coords.dim();
    assert_eq!(d, freqs.ncols());
    let m = freqs.nrows();
    let two_pi = T::of(std::f64::consts::TAU);
    let mut out = Array2::zeros((f * k, 2 * m));
    for t in 0..f {
        for n in 0..k {
            let row = t * k + n;
            for i in 0..m {
                let mut phase = T::zero();
                for c in 0..d {
                    phase += freqs[[i, c]] * T::of(f64::from(coords[[t, n, c]]));
                }
                let (s, co) = (two_pi * phase).sin_cos();
                out[[row, i]] = co;
                out[[row, m + i]] = s;
            }
        }
    }
    out
}

/// `frames x width` table with `pe[p, 2i] = sin(p / 10000^(2i/width))` and
/// `pe[p, 2i+1] = cos(p / 10000^(2i/width))`.
pub fn positional_encoding<T: Real>(frames: usize, width: usize) -> Array2<T> {
    Array2::from_shape_fn((frames, width), |(p, c)| {
        let i = (c / 2) as f64;
        let angle = p as f64 / 10000f64.powf(2.0 * i / width as f64);
        T::of(if c % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Adds the encoding of each node's frame index to its row (`frames` rows of
/// `nodes` nodes each).
pub fn add_positional_encoding<T: Real>(x: &mut Array2<T>, frames: usize, nodes: usize) {
    assert_eq!(x.nrows(), frames * nodes);
    let pe = positional_encoding::<T>(frames, x.ncols());
    for (r, mut row) in x.rows_mut().into_iter().enumerate() {
        row += &pe.row(r / nodes);
    }
}
