//! Non-robust and coordinate-wise robust baselines.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::filter::lower_median;
use crate::linalg::mean;
use crate::samples::SampleSet;

pub fn empirical_mean(samples: &SampleSet) -> Result<DVector<f64>> {
    if samples.is_empty() {
        return Err(Error::param("empty sample set"));
    }
    Ok(mean(samples))
}

/// Per-coordinate lower median.
pub fn coordinate_median(samples: &SampleSet) -> Result<DVector<f64>> {
    if samples.is_empty() {
        return Err(Error::param("empty sample set"));
    }
    let x = samples.matrix();
    Ok(DVector::from_fn(samples.dim(), |j, _| {
        let row: Vec<f64> = x.row(j).iter().copied().collect();
        lower_median(&row)
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMedian {
    pub point: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub const WEISZFELD_CAP: usize = 10_000;

/// Sum of distances `Σ ‖x_i − v‖`.
pub fn geometric_objective(samples: &SampleSet, v: &DVector<f64>) -> f64 {
    samples
        .points()
        .map(|p| {
            p.iter()
                .zip(v.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// Weiszfeld iteration started at the coordinate median.
///
/// Stops when the mean of the unit vectors pointing from the iterate to the
/// samples (the normalized subgradient) has norm at most `tol`. An iterate
/// landing on a sample is nudged by `1e-9` times the data scale.
pub fn geometric_median(samples: &SampleSet, tol: f64) -> Result<GeometricMedian> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::param("empty sample set"));
    }
    let d = samples.dim();
    let mut v = coordinate_median(samples)?;
    if n == 1 {
        return Ok(GeometricMedian {
            point: v,
            iterations: 0,
            converged: true,
        });
    }
    let scale = samples
        .matrix()
        .column_iter()
        .map(|c| (c - &v).norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let coincide = 1e-12 * scale;
    let x = samples.matrix();

    for it in 0..WEISZFELD_CAP {
        let mut num = DVector::zeros(d);
        let mut den = 0.0;
        let mut grad = DVector::zeros(d);
        let mut hits = 0usize;
        for c in x.column_iter() {
            let diff = c - &v;
            let dist = diff.norm();
            if dist <= coincide {
                hits += 1;
                continue;
            }
            num.axpy(1.0 / dist, &c, 1.0);
            den += 1.0 / dist;
            grad.axpy(1.0 / dist, &diff, 1.0);
        }
        // Subgradient test; a coincident sample contributes a unit ball.
        let g = grad.norm();
        if (g - hits as f64).max(0.0) / n as f64 <= tol {
            return Ok(GeometricMedian {
                point: v,
                iterations: it,
                converged: true,
            });
        }
        if hits > 0 {
            // Step off the sample along the pull of the others.
            let nudge = if g > 0.0 { grad / g } else { DVector::from_element(d, 1.0 / (d as f64).sqrt()) };
            v += nudge * (1e-9 * scale);
            continue;
        }
        let next = num / den;
        if (&next - &v).norm() <= f64::EPSILON * scale {
            return Ok(GeometricMedian {
                point: next,
                iterations: it + 1,
                converged: true,
            });
        }
        v = next;
    }
    Ok(GeometricMedian {
        point: v,
        iterations: WEISZFELD_CAP,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> SampleSet {
        SampleSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn means_and_medians() {
        let s = set(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(empirical_mean(&s).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(coordinate_median(&s).unwrap().as_slice(), &[0.0, 0.0]);
        let c = set(&[&[1.0], &[2.0], &[100.0]]);
        assert_eq!(coordinate_median(&c).unwrap()[0], 2.0);
        let e = set(&[&[1.0], &[2.0]]);
        assert_eq!(coordinate_median(&e).unwrap()[0], 1.0);
        let one = set(&[&[3.0, 4.0]]);
        assert_eq!(empirical_mean(&one).unwrap().as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn geometric_median_examples() {
        let one = set(&[&[3.0, -1.0]]);
        assert_eq!(geometric_median(&one, 1e-9).unwrap().point.as_slice(), &[3.0, -1.0]);

        let line = set(&[&[0.0], &[1.0], &[10.0]]);
        let g = geometric_median(&line, 1e-9).unwrap();
        assert!((g.point[0] - 1.0).abs() < 1e-6);

        let cross = set(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]]);
        let g = geometric_median(&cross, 1e-10).unwrap();
        assert!(g.point.norm() < 1e-8);
    }

    #[test]
    fn geometric_median_beats_other_centers() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.37).sin() * 3.0 + if i < 5 { 40.0 } else { 0.0 }, (t * 1.3).cos(), t % 7.0]
            })
            .collect();
        let s = SampleSet::from_rows(&rows).unwrap();
        let g = geometric_median(&s, 1e-9).unwrap();
        assert!(g.converged);
        let f = geometric_objective(&s, &g.point);
        assert!(f <= geometric_objective(&s, &empirical_mean(&s).unwrap()) + 1e-9);
        assert!(f <= geometric_objective(&s, &coordinate_median(&s).unwrap()) + 1e-9);
    }
}
