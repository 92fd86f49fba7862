//! Dense building blocks with explicit backward passes. Row vectors
//! throughout: activations are `tokens × features`, weights `in × out`,
//! biases `1 × out`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

pub const LN_EPS: f64 = 1e-5;

pub fn linear(x: &ArrayView2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    x.dot(w) + b
}

/// Accumulates `dW`, `db` and returns `dx`.
pub fn linear_backward(
    x: &ArrayView2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    *dw += &x.t().dot(dy);
    *db += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    dy.dot(&w.t())
}

#[derive(Debug, Clone)]
pub struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub fn layer_norm(x: &Array2<f64>, gamma: &Array2<f64>, beta: &Array2<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.mapv(|v| v * v).sum() / d;
        *s = 1.0 / (var + LN_EPS).sqrt();
        row *= *s;
    }
    let y = &xhat * gamma + beta;
    (y, LnCache { xhat, inv_std })
}

pub fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gamma: &Array2<f64>,
    dgamma: &mut Array2<f64>,
    dbeta: &mut Array2<f64>,
) -> Array2<f64> {
    *dgamma += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let g = dy * gamma;
    let d = g.ncols() as f64;
    let mut dx = g.clone();
    for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
        let gi = g.row(i);
        let xi = cache.xhat.row(i);
        let mean_g = gi.sum() / d;
        let mean_gx = gi.dot(&xi) / d;
        for j in 0..row.len() {
            row[j] = cache.inv_std[i] * (gi[j] - mean_g - xi[j] * mean_gx);
        }
    }
    dx
}

/// Row-wise softmax.
pub fn softmax_rows(s: &Array2<f64>) -> Array2<f64> {
    let mut p = s.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
    p
}

pub fn softmax_rows_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let mut ds = p * dp;
    for (i, mut row) in ds.rows_mut().into_iter().enumerate() {
        let dot = row.sum();
        let pi = p.row(i);
        for j in 0..row.len() {
            row[j] -= pi[j] * dot;
        }
    }
    ds
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Inverted dropout mask (`0` or `1/(1-rate)`), or `None` when inactive.
pub fn dropout_mask<R: Rng + ?Sized>(
    shape: (usize, usize),
    rate: f64,
    rng: Option<&mut R>,
) -> Option<Array2<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

pub fn apply_mask(x: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

/// Sinusoidal position table, `positions × d`.
pub fn positional_encoding(positions: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((positions, d), |(pos, i)| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
