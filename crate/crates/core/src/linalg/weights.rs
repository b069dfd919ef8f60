use std::ops::Deref;

use crate::error::{Error, Result};

/// Sample weights in `S_{N,ε}`: nonnegative, summing to one, each at most
/// `1 / ((1 − 2ε) N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
    epsilon: f64,
}

fn sum_tolerance(n: usize) -> f64 {
    (4.0 * n as f64 * f64::EPSILON).max(1e-12)
}

impl WeightVector {
    pub fn cap(n: usize, epsilon: f64) -> f64 {
        1.0 / ((1.0 - 2.0 * epsilon) * n as f64)
    }

    pub fn new(weights: Vec<f64>, epsilon: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::param(format!("epsilon {epsilon} outside [0, 1/2)")));
        }
        let n = weights.len();
        if n == 0 {
            return Err(Error::param("empty weight vector"));
        }
        let cap = Self::cap(n, epsilon);
        if let Some((i, &w)) = weights
            .iter()
            .enumerate()
            .find(|(_, &w)| !(w >= 0.0 && w <= cap * (1.0 + 1e-12)))
        {
            return Err(Error::param(format!(
                "weight {i} = {w} outside [0, {cap}]"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > sum_tolerance(n) {
            return Err(Error::param(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector { weights, epsilon })
    }

    pub fn uniform(n: usize, epsilon: f64) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n], epsilon)
    }

    /// Uniform weights on the rows with `support[i]` set.
    pub fn uniform_on(support: &[bool], epsilon: f64) -> Result<Self> {
        let k = support.iter().filter(|&&b| b).count();
        if k == 0 {
            return Err(Error::param("empty support"));
        }
        let w = support
            .iter()
            .map(|&b| if b { 1.0 / k as f64 } else { 0.0 })
            .collect();
        Self::new(w, epsilon)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }
}

impl Deref for WeightVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.weights
    }
}

/// Euclidean projection of `y` onto `S_{N,ε}`.
///
/// The projection is `w_i = clamp(y_i − t, 0, cap)` for the unique shift `t`
/// making the weights sum to one; `t` is found by bisection and the last
/// rounding error is spread over the coordinates strictly inside the box.
pub fn project_capped_simplex(y: &[f64], epsilon: f64) -> Result<WeightVector> {
    let n = y.len();
    if n == 0 {
        return Err(Error::param("empty vector"));
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::param(format!("epsilon {epsilon} outside [0, 1/2)")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("non-finite entry"));
    }
    let cap = WeightVector::cap(n, epsilon);
    let total = |t: f64| -> f64 { y.iter().map(|&v| (v - t).clamp(0.0, cap)).sum() };
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (ymin - cap, ymax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * cap.min(1.0) * 1e-3 {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let mut w: Vec<f64> = y.iter().map(|&v| (v - t).clamp(0.0, cap)).collect();
    for _ in 0..16 {
        let residual = 1.0 - w.iter().sum::<f64>();
        if residual.abs() <= sum_tolerance(n) * 0.25 {
            break;
        }
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                if residual > 0.0 {
                    w[i] < cap
                } else {
                    w[i] > 0.0
                }
            })
            .collect();
        if free.is_empty() {
            break;
        }
        let share = residual / free.len() as f64;
        for i in free {
            w[i] = (w[i] + share).clamp(0.0, cap);
        }
    }
    WeightVector::new(w, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_box_violations() {
        assert!(WeightVector::new(vec![0.5, 0.5], 0.1).is_ok());
        assert!(WeightVector::new(vec![0.9, 0.1], 0.1).is_err());
        assert!(WeightVector::new(vec![-0.1, 1.1], 0.4).is_err());
        assert!(WeightVector::new(vec![0.3, 0.3], 0.1).is_err());
        assert!(WeightVector::new(vec![0.5, 0.5], 0.5).is_err());
    }

    #[test]
    fn projection_of_feasible_point_is_itself() {
        let w = vec![0.2, 0.3, 0.25, 0.25];
        let p = project_capped_simplex(&w, 0.1).unwrap();
        for (a, b) in p.iter().zip(&w) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_optimal(
            y in proptest::collection::vec(-3.0f64..3.0, 2..40),
            eps in 0.0f64..0.45,
        ) {
            let p = project_capped_simplex(&y, eps).unwrap();
            let n = y.len();
            let cap = WeightVector::cap(n, eps);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-11);
            // KKT: the shift t is common to all coordinates strictly inside
            // the box, and clamped coordinates sit on the correct side.
            let inner: Vec<f64> = (0..n)
                .filter(|&i| p[i] > 1e-9 && p[i] < cap - 1e-9)
                .map(|i| y[i] - p[i])
                .collect();
            if let Some(&t) = inner.first() {
                for s in &inner {
                    prop_assert!((s - t).abs() < 1e-8);
                }
                for i in 0..n {
                    if p[i] <= 1e-12 { prop_assert!(y[i] <= t + 1e-8); }
                    if p[i] >= cap - 1e-12 { prop_assert!(y[i] >= t + cap - 1e-8); }
                }
            }
        }
    }
}
