//! Attention-based multiple-instance pooling of a segment's context bag:
//! `h = Σ_b softmax_b(w_b1 · tanh(W_b2ᵀ h_b)) h_b`.

use ndarray::{Array1, Array2, Axis};

use super::layers::softmax;
use super::AmilParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AmilCache {
    bag: Array2<f64>,
    /// `tanh(bag · W_b2)`, `B × d_attn`
    z: Array2<f64>,
    pub weights: Vec<f64>,
}

/// Pools a `B × d_model` bag into one `d_model` vector.
pub fn amil_aggregate(bag: &Array2<f64>, p: &AmilParams) -> Result<(Array1<f64>, AmilCache)> {
    if bag.nrows() == 0 {
        return Err(Error::Invariant("AMIL pooling of an empty bag".into()));
    }
    let z = bag.dot(&p.w_b2).mapv(f64::tanh);
    let scores: Vec<f64> = z.dot(&p.w_b1.row(0)).to_vec();
    let weights = softmax(&scores);
    let w = Array1::from(weights.clone());
    let h = w.dot(bag);
    Ok((
        h,
        AmilCache {
            bag: bag.clone(),
            z,
            weights,
        },
    ))
}

/// Accumulates `dW_b1`, `dW_b2` and returns the gradient with respect to the bag.
pub fn amil_backward(
    cache: &AmilCache,
    p: &AmilParams,
    dh: &Array1<f64>,
    grad: &mut AmilParams,
) -> Array2<f64> {
    let a = Array1::from(cache.weights.clone());
    // h = Σ a_b x_b
    let mut dbag = a.view().insert_axis(Axis(1)).dot(&dh.view().insert_axis(Axis(0)));
    let da = cache.bag.dot(dh);
    let mean = a.dot(&da);
    let ds = &a * &(da - mean);
    grad.w_b1
        .row_mut(0)
        .scaled_add(1.0, &cache.z.t().dot(&ds));
    let dz = ds.view().insert_axis(Axis(1)).dot(&p.w_b1);
    let dpre = dz * &cache.z.mapv(|v| 1.0 - v * v);
    grad.w_b2 += &cache.bag.t().dot(&dpre);
    dbag += &dpre.dot(&p.w_b2.t());
    dbag
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(d: usize, seed: u64) -> AmilParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AmilParams {
            w_b1: Array2::from_shape_fn((1, d), |_| rng.random_range(-1.0..1.0)),
            w_b2: Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn single_instance_passes_through() {
        let bag = arr2(&[[0.3, -1.2, 4.0]]);
        let (h, c) = amil_aggregate(&bag, &params(3, 0)).unwrap();
        assert_eq!(h.to_vec(), bag.row(0).to_vec());
        assert_eq!(c.weights, vec![1.0]);
    }

    #[test]
    fn identical_instances_pool_to_themselves() {
        let bag = arr2(&[[0.3, -1.2, 4.0], [0.3, -1.2, 4.0]]);
        let (h, _) = amil_aggregate(&bag, &params(3, 1)).unwrap();
        for (a, b) in h.iter().zip(bag.row(0)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn output_is_the_stated_convex_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bag = Array2::from_shape_fn((7, 4), |_| rng.random_range(-2.0..2.0));
        let (h, c) = amil_aggregate(&bag, &params(4, 2)).unwrap();
        assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(c.weights.iter().all(|w| *w > 0.0));
        let mut manual = Array1::zeros(4);
        for (w, row) in c.weights.iter().zip(bag.rows()) {
            manual.scaled_add(*w, &row);
        }
        for (a, b) in h.iter().zip(manual.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_bag_is_an_error() {
        assert!(amil_aggregate(&Array2::zeros((0, 3)), &params(3, 0)).is_err());
    }
}
