//! Two-layer scoring head: `Linear → ReLU → Dropout → Linear`.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use super::layers::{apply_mask, dropout_mask, linear, linear_backward};
use super::HeadParams;

#[derive(Debug, Clone)]
pub struct HeadCache {
    x: Array2<f64>,
    u: Array2<f64>,
    r: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Scores each row of `x` (`K × d_model`).
pub fn score_rows(
    x: &Array2<f64>,
    p: &HeadParams,
    dropout: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> (Array1<f64>, HeadCache) {
    let u = linear(&x.view(), &p.l1.w, &p.l1.b);
    let relu = u.mapv(|v| v.max(0.0));
    let mask = dropout_mask(relu.dim(), dropout, rng);
    let r = apply_mask(relu, &mask);
    let y = linear(&r.view(), &p.l2.w, &p.l2.b).remove_axis(Axis(1));
    (
        y,
        HeadCache {
            x: x.clone(),
            u,
            r,
            mask,
        },
    )
}

/// Accumulates head gradients and returns `d loss / d x`.
pub fn score_rows_backward(
    cache: &HeadCache,
    p: &HeadParams,
    dy: &Array1<f64>,
    grad: &mut HeadParams,
) -> Array2<f64> {
    let dy = dy.view().insert_axis(Axis(1)).to_owned();
    let dr = linear_backward(&cache.r.view(), &p.l2.w, &dy, &mut grad.l2.w, &mut grad.l2.b);
    let dr = apply_mask(dr, &cache.mask);
    let du = dr * &cache.u.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    linear_backward(&cache.x.view(), &p.l1.w, &du, &mut grad.l1.w, &mut grad.l1.b)
}
