use crate::error::{Error, Result};

/// Normalization slack for user-supplied probability vectors.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Probability vector on the survivor states.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    /// Accepts weights that already sum to one (within 1e-12).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_entries(&weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}, not 1")));
        }
        Ok(Distribution { weights })
    }

    /// Normalizes nonnegative weights with positive total mass.
    pub fn from_unnormalized(mut weights: Vec<f64>) -> Result<Self> {
        check_entries(&weights)?;
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::InvalidDistribution(format!("total mass {sum} is not positive")));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Distribution { weights })
    }

    pub fn dirac(n: usize, x: usize) -> Self {
        assert!(x < n, "state {x} out of range for {n} states");
        let mut weights = vec![0.0; n];
        weights[x] = 1.0;
        Distribution { weights }
    }

    pub fn uniform(n: usize) -> Self {
        Distribution { weights: vec![1.0 / n as f64; n] }
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `sum_x mu(x) f(x)`.
    pub fn expect(&self, f: &[f64]) -> f64 {
        crate::linalg::dot(&self.weights, f)
    }
}

fn check_entries(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidDistribution("empty weight vector".into()));
    }
    match weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        Some(i) => Err(Error::InvalidDistribution(format!("weight {i} = {} is not a nonnegative number", weights[i]))),
        None => Ok(()),
    }
}

/// Total variation distance `(1/2) sum_y |mu(y) - nu(y)|`, in `[0, 1]`.
pub fn tv_distance(mu: &Distribution, nu: &Distribution) -> f64 {
    assert_eq!(mu.len(), nu.len(), "distributions live on different state spaces");
    half_l1(mu.weights(), nu.weights())
}

pub(crate) fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tv_examples() {
        let a = Distribution::new(vec![0.75, 0.25]).unwrap();
        let b = Distribution::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(tv_distance(&a, &b), 0.5);
        assert_eq!(tv_distance(&a, &a), 0.0);
        assert_eq!(tv_distance(&Distribution::dirac(2, 0), &Distribution::dirac(2, 1)), 1.0);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(Distribution::new(vec![0.5, 0.4]).is_err());
        assert!(Distribution::new(vec![1.5, -0.5]).is_err());
        assert!(Distribution::from_unnormalized(vec![0.0, 0.0]).is_err());
        assert!(Distribution::from_unnormalized(vec![f64::NAN, 1.0]).is_err());
        assert_eq!(Distribution::from_unnormalized(vec![1.0, 3.0]).unwrap().weights(), &[0.25, 0.75]);
    }

    fn dist(n: usize) -> impl Strategy<Value = Distribution> {
        prop::collection::vec(0.001f64..1.0, n).prop_map(|w| Distribution::from_unnormalized(w).unwrap())
    }

    proptest! {
        #[test]
        fn tv_is_a_metric((a, b, c) in (1usize..8).prop_flat_map(|n| (dist(n), dist(n), dist(n)))) {
            let ab = tv_distance(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, tv_distance(&b, &a));
            prop_assert!(ab <= tv_distance(&a, &c) + tv_distance(&c, &b) + 1e-15);
        }
    }
}
