//! Vose's alias method: O(n) construction, O(1) categorical draws.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
    total: f64,
}

impl AliasTable {
    /// Builds a table over `weights`. Returns `None` for an empty or all-zero row.
    ///
    /// # Panics
    /// On negative or non-finite weights.
    pub fn new(weights: &[f64]) -> Option<Self> {
        assert!(
            weights.iter().all(|w| w.is_finite() && *w >= 0.0),
            "alias weights must be finite and nonnegative"
        );
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        if n == 0 || total <= 0.0 {
            return None;
        }
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in large.into_iter().chain(small) {
            prob[i] = 1.0;
        }
        Some(Self { prob, alias, total })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// Sum of the weights the table was built from.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }

    /// Exact outcome distribution encoded by the table.
    pub fn implied_distribution(&self) -> Vec<f64> {
        let n = self.prob.len() as f64;
        let mut out = vec![0.0; self.prob.len()];
        for (i, (&p, &a)) in self.prob.iter().zip(&self.alias).enumerate() {
            out[i] += p / n;
            out[a] += (1.0 - p) / n;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

    fn counts(table: &AliasTable, draws: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = vec![0; table.len()];
        for _ in 0..draws {
            c[table.sample(&mut rng)] += 1;
        }
        c
    }

    #[test]
    fn empty_and_zero_rows_have_no_table() {
        assert!(AliasTable::new(&[]).is_none());
        assert!(AliasTable::new(&[0.0, 0.0]).is_none());
    }

    #[test]
    fn single_outcome_always_drawn() {
        let t = AliasTable::new(&[3.5]).unwrap();
        assert!(counts(&t, 1000, 1).iter().all(|&c| c == 1000));
    }

    #[test]
    fn zero_weight_outcome_never_drawn() {
        let t = AliasTable::new(&[0.0, 1.0, 0.0, 2.0]).unwrap();
        let c = counts(&t, 20_000, 2);
        assert_eq!(c[0], 0);
        assert_eq!(c[2], 0);
    }

    #[test]
    fn uniform_four_way_passes_chi_square() {
        let t = AliasTable::new(&[1.0; 4]).unwrap();
        let n = 100_000;
        let c = counts(&t, n, 3);
        let expected = n as f64 / 4.0;
        let stat: f64 = c
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        let p = 1.0 - ChiSquared::new(3.0).unwrap().cdf(stat);
        assert!(p > 0.01, "chi2 {stat}, p {p}");
        for &o in &c {
            assert!((o as f64 / n as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn fair_coin_within_binomial_bounds() {
        let t = AliasTable::new(&[0.5, 0.5]).unwrap();
        let n = 10_000u64;
        let heads = counts(&t, n as usize, 4)[0] as u64;
        let b = Binomial::new(0.5, n).unwrap();
        let lo = b.inverse_cdf(0.005);
        let hi = b.inverse_cdf(0.995);
        assert!((lo..=hi).contains(&heads), "{heads} not in [{lo}, {hi}]");
    }

    #[test]
    fn implied_distribution_reconstructs_weights() {
        let w = [0.1, 3.0, 0.0, 2.2, 7.7, 0.4];
        let t = AliasTable::new(&w).unwrap();
        let total: f64 = w.iter().sum();
        let implied = t.implied_distribution();
        let mass: f64 = implied.iter().map(|p| p * t.total()).sum();
        assert!((mass - total).abs() < 1e-12);
        for (p, wi) in implied.iter().zip(w) {
            assert!((p - wi / total).abs() < 1e-12);
        }
    }
}
