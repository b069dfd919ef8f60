//! Parametric models: Gaussians, binary products, and two-component product
//! mixtures.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, sym_sqrt, symmetrize};
use crate::rng::Seed;
use crate::samples::SampleSet;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryProductModel {
    pub mean: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductMixtureModel {
    pub weight: f64,
    pub component_p: BinaryProductModel,
    pub component_q: BinaryProductModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Gaussian(GaussianModel),
    BinaryProduct(BinaryProductModel),
    ProductMixture(ProductMixtureModel),
}

impl GaussianModel {
    /// Checks symmetry (relative 1e-12) and positive semi-definiteness.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::param(format!(
                "covariance is {:?}, expected {d}×{d}",
                covariance.shape()
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("Gaussian parameters must be finite"));
        }
        if asymmetry(&covariance) > 1e-12 {
            return Err(Error::param("covariance is not symmetric"));
        }
        let covariance = symmetrize(&covariance);
        if d > 0 {
            let eig = SymmetricEigen::new(covariance.clone());
            let lmax = eig.eigenvalues.amax();
            let lmin = eig.eigenvalues.min();
            if lmin < -1e-10 * lmax.max(1.0) {
                return Err(Error::param(format!(
                    "covariance is not PSD (eigenvalue {lmin:e})"
                )));
            }
        }
        Ok(GaussianModel { mean, covariance })
    }

    pub fn standard(d: usize) -> Self {
        GaussianModel {
            mean: DVector::zeros(d),
            covariance: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.covariance[(i, j)] == 0.0))
    }

    fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let z = DMatrix::from_fn(d, n, |_, _| StandardNormal.sample(&mut *rng));
        let mut x = if self.is_diagonal() {
            let mut z = z;
            for i in 0..d {
                let s = self.covariance[(i, i)].max(0.0).sqrt();
                z.row_mut(i).scale_mut(s);
            }
            z
        } else {
            sym_sqrt(&self.covariance)? * z
        };
        for mut col in x.column_iter_mut() {
            col += &self.mean;
        }
        Ok(x)
    }

    /// Precomputed whitening for repeated density evaluation.
    fn density(&self) -> Result<GaussianDensity> {
        let eig = SymmetricEigen::new(self.covariance.clone());
        let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let lmin = eig.eigenvalues.min();
        if lmin <= 1e-14 * lmax || lmin <= 0.0 {
            return Err(Error::Singular {
                eigenvalue: lmin,
                context: "Gaussian density".into(),
            });
        }
        let mut w = eig.eigenvectors.transpose();
        for (k, mut row) in w.row_iter_mut().enumerate() {
            row /= eig.eigenvalues[k].sqrt();
        }
        let logdet: f64 = eig.eigenvalues.iter().map(|l| l.ln()).sum();
        Ok(GaussianDensity {
            mean: self.mean.clone(),
            whiten: w,
            norm: -0.5 * (self.dim() as f64 * LN_2PI + logdet),
        })
    }
}

struct GaussianDensity {
    mean: DVector<f64>,
    whiten: DMatrix<f64>,
    norm: f64,
}

impl GaussianDensity {
    fn log_density(&self, x: &[f64]) -> f64 {
        let y = &self.whiten * (DVector::from_column_slice(x) - &self.mean);
        self.norm - 0.5 * y.norm_squared()
    }
}

impl BinaryProductModel {
    pub fn new(mean: DVector<f64>) -> Result<Self> {
        if mean.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param("product means must lie in [0, 1]"));
        }
        Ok(BinaryProductModel { mean })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_balanced(&self, c: f64) -> bool {
        self.mean.iter().all(|&p| p >= c && p <= 1.0 - c)
    }

    fn fill(&self, col: &mut [f64], rng: &mut impl Rng) {
        for (x, &p) in col.iter_mut().zip(self.mean.iter()) {
            let u: f64 = rng.random();
            *x = if u < p { 1.0 } else { 0.0 };
        }
    }

    /// Log-mass at `x`; `-∞` off `{0,1}^d` or on impossible patterns.
    pub fn log_mass(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (&xi, &p) in x.iter().zip(self.mean.iter()) {
            acc += if xi == 1.0 {
                p.ln()
            } else if xi == 0.0 {
                (1.0 - p).ln()
            } else {
                return f64::NEG_INFINITY;
            };
        }
        acc
    }
}

impl ProductMixtureModel {
    pub fn new(weight: f64, p: BinaryProductModel, q: BinaryProductModel) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::param("mixture weight must lie in [0, 1]"));
        }
        if p.dim() != q.dim() {
            return Err(Error::param("mixture components differ in dimension"));
        }
        Ok(ProductMixtureModel {
            weight,
            component_p: p,
            component_q: q,
        })
    }

    /// A single product seen as the degenerate mixture `1·P + 0·P`.
    pub fn single(p: BinaryProductModel) -> Self {
        ProductMixtureModel {
            weight: 1.0,
            component_q: p.clone(),
            component_p: p,
        }
    }

    pub fn dim(&self) -> usize {
        self.component_p.dim()
    }

    pub fn log_mass(&self, x: &[f64]) -> f64 {
        log_add(
            self.weight.ln() + self.component_p.log_mass(x),
            (1.0 - self.weight).ln() + self.component_q.log_mass(x),
        )
    }

    /// Overall mean `α p + (1 − α) q`.
    pub fn mean(&self) -> DVector<f64> {
        &self.component_p.mean * self.weight + &self.component_q.mean * (1.0 - self.weight)
    }
}

/// `ln(e^a + e^b)` with `-∞` handled.
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Gaussian(g) => g.dim(),
            Model::BinaryProduct(p) => p.dim(),
            Model::ProductMixture(m) => m.dim(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, Model::Gaussian(_))
    }

    /// The model mean.
    pub fn mean(&self) -> DVector<f64> {
        match self {
            Model::Gaussian(g) => g.mean.clone(),
            Model::BinaryProduct(p) => p.mean.clone(),
            Model::ProductMixture(m) => m.mean(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Gaussian(_) => "gaussian",
            Model::BinaryProduct(_) => "binary_product",
            Model::ProductMixture(_) => "product_mixture",
        }
    }

    /// Draws `n` rows into an existing generator.
    pub fn sample_with(&self, n: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
        let d = self.dim();
        match self {
            Model::Gaussian(g) => g.sample(n, rng),
            Model::BinaryProduct(p) => {
                let mut x = DMatrix::zeros(d, n);
                for mut col in x.column_iter_mut() {
                    p.fill(col.as_mut_slice(), rng);
                }
                Ok(x)
            }
            Model::ProductMixture(m) => {
                let mut x = DMatrix::zeros(d, n);
                for mut col in x.column_iter_mut() {
                    let u: f64 = rng.random();
                    let comp = if u < m.weight { &m.component_p } else { &m.component_q };
                    comp.fill(col.as_mut_slice(), rng);
                }
                Ok(x)
            }
        }
    }

    /// A compiled log-density for repeated evaluation.
    pub fn log_density_fn(&self) -> Result<LogDensity<'_>> {
        Ok(LogDensity(match self {
            Model::Gaussian(g) => Prepared::Gaussian(g.density()?),
            Model::BinaryProduct(p) => Prepared::Product(p),
            Model::ProductMixture(m) => Prepared::Mixture(m),
        }))
    }
}

/// Prepared density evaluator returned by [`Model::log_density_fn`].
pub struct LogDensity<'a>(Prepared<'a>);

enum Prepared<'a> {
    Gaussian(GaussianDensity),
    Product(&'a BinaryProductModel),
    Mixture(&'a ProductMixtureModel),
}

impl LogDensity<'_> {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.0 {
            Prepared::Gaussian(g) => g.log_density(x),
            Prepared::Product(p) => p.log_mass(x),
            Prepared::Mixture(m) => m.log_mass(x),
        }
    }
}

/// `n` i.i.d. draws from `model`.
pub fn sample_model(model: &Model, n: usize, seed: Seed) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::param("sample count must be at least 1"));
    }
    let mut rng = seed.rng();
    SampleSet::from_columns(model.sample_with(n, &mut rng)?)
}

/// `ln` of the density (Gaussian) or mass (discrete models) at `x`.
pub fn log_density(model: &Model, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::param(format!(
            "point has dimension {}, model has {}",
            x.len(),
            model.dim()
        )));
    }
    Ok(model.log_density_fn()?.eval(x))
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

/// Rounds product means to multiples of `ε/d` (clamped to `[0, 1]`) and
/// mixture weights to multiples of `ε`. Gaussians are returned unchanged.
pub fn round_model_to_grid(model: &Model, epsilon: f64, d: usize) -> Model {
    let step = epsilon / d.max(1) as f64;
    let round_p = |p: &BinaryProductModel| BinaryProductModel {
        mean: p.mean.map(|v| round_to(v, step).clamp(0.0, 1.0)),
    };
    match model {
        Model::Gaussian(_) => model.clone(),
        Model::BinaryProduct(p) => Model::BinaryProduct(round_p(p)),
        Model::ProductMixture(m) => Model::ProductMixture(ProductMixtureModel {
            weight: round_to(m.weight, epsilon).clamp(0.0, 1.0),
            component_p: round_p(&m.component_p),
            component_q: round_p(&m.component_q),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn product(p: &[f64]) -> BinaryProductModel {
        BinaryProductModel::new(DVector::from_column_slice(p)).unwrap()
    }

    #[test]
    fn gaussian_shape_and_determinism() {
        let m = Model::Gaussian(GaussianModel::standard(3));
        let a = sample_model(&m, 1, Seed(1)).unwrap();
        assert_eq!((a.dim(), a.len()), (3, 1));
        assert!(a.point(0).iter().all(|v| v.is_finite()));
        let b = sample_model(&m, 50, Seed(9)).unwrap();
        let c = sample_model(&m, 50, Seed(9)).unwrap();
        assert_eq!(b, c);
    }

    #[test]
    fn degenerate_bernoulli() {
        let m = Model::BinaryProduct(product(&[1.0, 1.0]));
        let s = sample_model(&m, 5, Seed(0)).unwrap();
        assert!(s.points().all(|p| p == [1.0, 1.0]));
    }

    #[test]
    fn gaussian_mean_concentrates() {
        let m = Model::Gaussian(GaussianModel::standard(2));
        let s = sample_model(&m, 100_000, Seed(4)).unwrap();
        let mu = crate::linalg::mean(&s);
        // 3/sqrt(n) is about 0.0095.
        assert!(mu.amax() < 0.02);
    }

    #[test]
    fn singular_covariance_samples_on_support() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = GaussianModel::new(DVector::zeros(2), cov).unwrap();
        let s = sample_model(&Model::Gaussian(g.clone()), 20, Seed(2)).unwrap();
        for p in s.points() {
            assert!((p[0] - p[1]).abs() < 1e-12);
        }
        let err = log_density(&Model::Gaussian(g), &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn rejects_bad_gaussians() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianModel::new(DVector::zeros(2), bad).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GaussianModel::new(DVector::zeros(2), asym).is_err());
    }

    #[test]
    fn densities() {
        let g = Model::Gaussian(GaussianModel::standard(1));
        let v = log_density(&g, &[0.0]).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);

        let p = Model::BinaryProduct(product(&[0.5, 0.5]));
        for x in [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
            assert!((log_density(&p, &x).unwrap() - 0.25f64.ln()).abs() < 1e-15);
        }

        let pp = product(&[0.2, 0.9]);
        let mix = Model::ProductMixture(ProductMixtureModel::new(1.0, pp.clone(), product(&[0.7, 0.1])).unwrap());
        for x in [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] {
            let a = log_density(&mix, &x).unwrap();
            let b = pp.log_mass(&x);
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn scaled_gaussian_density_matches_closed_form() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let mean = DVector::from_vec(vec![1.0, -1.0]);
        let g = Model::Gaussian(GaussianModel::new(mean.clone(), cov.clone()).unwrap());
        let x = DVector::from_vec(vec![0.4, 0.2]);
        let inv = cov.clone().try_inverse().unwrap();
        let r = &x - &mean;
        let want = -0.5 * (2.0 * LN_2PI + cov.determinant().ln() + (r.transpose() * inv * &r)[(0, 0)]);
        assert!((log_density(&g, x.as_slice()).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn rounding_examples() {
        let r = round_model_to_grid(&Model::BinaryProduct(product(&[0.501])), 0.1, 1);
        let Model::BinaryProduct(p) = r else { panic!() };
        assert!((p.mean[0] - 0.5).abs() < 1e-12);

        let mix = ProductMixtureModel::new(0.333, product(&[0.5]), product(&[0.5])).unwrap();
        let Model::ProductMixture(m) = round_model_to_grid(&Model::ProductMixture(mix), 0.1, 1) else {
            panic!()
        };
        assert!((m.weight - 0.3).abs() < 1e-12);

        let Model::BinaryProduct(p) = round_model_to_grid(&Model::BinaryProduct(product(&[0.26, 0.74])), 0.2, 2)
        else {
            panic!()
        };
        assert!((p.mean[0] - 0.3).abs() < 1e-12);
        assert!((p.mean[1] - 0.7).abs() < 1e-12);

        let g = Model::Gaussian(GaussianModel::standard(2));
        assert_eq!(round_model_to_grid(&g, 0.1, 2), g);
    }

    fn all_patterns(d: usize) -> impl Iterator<Item = Vec<f64>> {
        (0..1u32 << d).map(move |m| (0..d).map(|i| f64::from((m >> i) & 1)).collect())
    }

    proptest! {
        #[test]
        fn product_mass_sums_to_one(p in proptest::collection::vec(0.0f64..=1.0, 1..=12)) {
            let m = product(&p);
            let total: f64 = all_patterns(p.len()).map(|x| m.log_mass(&x).exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
        }

        #[test]
        fn rounding_is_idempotent(
            p in proptest::collection::vec(0.0f64..=1.0, 1..6),
            q in proptest::collection::vec(0.0f64..=1.0, 6),
            a in 0.0f64..=1.0,
            eps in 0.001f64..0.49,
        ) {
            let d = p.len();
            let mix = ProductMixtureModel::new(a, product(&p), product(&q[..d])).unwrap();
            let once = round_model_to_grid(&Model::ProductMixture(mix), eps, d);
            let twice = round_model_to_grid(&once, eps, d);
            prop_assert_eq!(once, twice);
        }
    }
}
