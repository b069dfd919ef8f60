use nalgebra::{DMatrix, DVector};

use crate::samples::SampleSet;

use super::moments::CHUNK;

/// An even degree-2 polynomial `p(x) = (F x)ᵀ P₂ (F x) + p₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvenQuadratic {
    pub quad: DMatrix<f64>,
    pub offset: f64,
    pub frame: DMatrix<f64>,
}

impl EvenQuadratic {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let y = &self.frame * DVector::from_column_slice(x);
        y.dot(&(&self.quad * &y)) + self.offset
    }

    /// `p(x_i)` for every sample.
    pub fn eval_all(&self, samples: &SampleSet) -> Vec<f64> {
        let x = samples.matrix();
        let n = samples.len();
        let mut out = Vec::with_capacity(n);
        let mut lo = 0;
        while lo < n {
            let hi = (lo + CHUNK).min(n);
            let y = &self.frame * x.columns(lo, hi - lo);
            let py = &self.quad * &y;
            for (a, b) in y.column_iter().zip(py.column_iter()) {
                out.push(a.dot(&b) + self.offset);
            }
            lo = hi;
        }
        out
    }
}
