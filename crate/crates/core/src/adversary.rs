//! Corruption of sample sets by oblivious and full adversaries.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::mean;
use crate::models::{GaussianModel, Model};
use crate::rng::Seed;
use crate::samples::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdversaryKind {
    /// Mixes a fixed noise distribution into the sampling.
    Oblivious,
    /// Inspects the clean samples and replaces some of them.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Points at `center + s·v`; defaults `s = √d`, `v = 1/√d`.
    /// Params: `[s, v_1, ..., v_d]`, both parts optional.
    MeanShift,
    /// Points at `center ± t·v` with random signs; defaults `t = 1/√ε`,
    /// `v = 1/√d`. Params: `[t, v_1, ..., v_d]`.
    LineCluster,
    /// Removes every all-zero row of binary data and tops up with the
    /// lowest-weight rows, resampling replacements from the rows kept.
    RarePatternDeletion,
    /// Draws from `N(center, scale² I)`, default scale 5. Params: `[scale]`.
    TailReplacement,
    /// Binary points with exactly `⌊d/2⌋` ones at random positions, offset
    /// by the clean mean unless the samples are binary.
    HalfCube,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::MeanShift,
        Strategy::LineCluster,
        Strategy::RarePatternDeletion,
        Strategy::TailReplacement,
        Strategy::HalfCube,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::MeanShift => "MeanShift",
            Strategy::LineCluster => "LineCluster",
            Strategy::RarePatternDeletion => "RarePatternDeletion",
            Strategy::TailReplacement => "TailReplacement",
            Strategy::HalfCube => "HalfCube",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub kind: AdversaryKind,
    pub strategy: Strategy,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl AdversarySpec {
    pub fn full(strategy: Strategy) -> Self {
        AdversarySpec {
            kind: AdversaryKind::Full,
            strategy,
            params: Vec::new(),
        }
    }

    pub fn oblivious(strategy: Strategy) -> Self {
        AdversarySpec {
            kind: AdversaryKind::Oblivious,
            ..Self::full(strategy)
        }
    }

    /// `Full/MeanShift` style label used in result tables.
    pub fn label(&self) -> String {
        let kind = match self.kind {
            AdversaryKind::Oblivious => "Oblivious",
            AdversaryKind::Full => "Full",
        };
        format!("{kind}/{}", self.strategy.name())
    }

    /// Checks that the parameters fit dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let p = &self.params;
        let ok = match self.strategy {
            Strategy::MeanShift | Strategy::LineCluster => p.len() <= 1 || p.len() == d + 1,
            Strategy::TailReplacement => p.len() <= 1,
            Strategy::RarePatternDeletion | Strategy::HalfCube => p.is_empty(),
        };
        if !ok {
            return Err(Error::param(format!(
                "{} takes different parameters for d = {d}, got {}",
                self.strategy.name(),
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("adversary parameters must be finite"));
        }
        if p.len() == d + 1 && p[1..].iter().all(|&v| v == 0.0) {
            return Err(Error::param("direction must be nonzero"));
        }
        Ok(())
    }

    fn magnitude(&self, default: f64) -> f64 {
        self.params.first().copied().unwrap_or(default)
    }

    fn direction(&self, d: usize) -> DVector<f64> {
        if self.params.len() == d + 1 {
            let v = DVector::from_column_slice(&self.params[1..]);
            let n = v.norm();
            v / n
        } else {
            DVector::from_element(d, 1.0 / (d as f64).sqrt())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionReport {
    pub num_replaced: usize,
    pub replaced_indices: Vec<usize>,
    /// `Δ(S, S')`, the symmetric difference over `|S|`.
    pub delta: f64,
    /// The binomial draw `m'`; below `num_replaced` only when a strategy
    /// must replace more rows than drawn.
    pub drawn: usize,
    /// `m' > 2εN`, outside the regime the guarantees cover.
    pub exceeds_budget: bool,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::param(format!("epsilon {epsilon} outside [0, 1/2)")));
    }
    Ok(())
}

fn draw_count(n: usize, epsilon: f64, rng: &mut impl Rng) -> Result<usize> {
    if epsilon == 0.0 {
        return Ok(0);
    }
    let b = Binomial::new(n as u64, epsilon).map_err(|e| Error::param(e.to_string()))?;
    Ok(b.sample(rng) as usize)
}

fn gaussian_point(center: &DVector<f64>, scale: f64, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(center.len(), |j, _| {
        let z: f64 = StandardNormal.sample(rng);
        center[j] + scale * z
    })
}

/// Replaces `m' ∼ Binomial(N, ε)` samples according to the strategy. Rows
/// that are not replaced are copied bit for bit.
pub fn corrupt_full(
    samples: &SampleSet,
    epsilon: f64,
    spec: &AdversarySpec,
    seed: Seed,
) -> Result<(SampleSet, CorruptionReport)> {
    check_epsilon(epsilon)?;
    if spec.kind != AdversaryKind::Full {
        return Err(Error::param("corrupt_full needs a full adversary"));
    }
    let n = samples.len();
    let d = samples.dim();
    spec.validate(d)?;
    let mut rng = seed.rng();
    let drawn = draw_count(n, epsilon, &mut rng)?;
    let mut x = samples.matrix().clone();
    let center = if n > 0 { mean(samples) } else { DVector::zeros(d) };

    let replaced: Vec<usize> = match spec.strategy {
        Strategy::MeanShift => {
            let v = spec.direction(d);
            let target = &center + &v * spec.magnitude((d as f64).sqrt());
            // Delete the rows most opposed to the shift.
            let proj = samples.matrix().tr_mul(&v);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]).then(a.cmp(&b)));
            order.truncate(drawn);
            for &i in &order {
                x.set_column(i, &target);
            }
            order
        }
        Strategy::LineCluster => {
            let v = spec.direction(d);
            let t = spec.magnitude(if epsilon > 0.0 { 1.0 / epsilon.sqrt() } else { 1.0 });
            let idx = random_rows(n, drawn, &mut rng);
            for &i in &idx {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                x.set_column(i, &(&center + &v * (sign * t)));
            }
            idx
        }
        Strategy::TailReplacement => {
            let scale = spec.magnitude(5.0);
            let idx = random_rows(n, drawn, &mut rng);
            for &i in &idx {
                x.set_column(i, &gaussian_point(&center, scale, &mut rng));
            }
            idx
        }
        Strategy::HalfCube => {
            let idx = random_rows(n, drawn, &mut rng);
            let binary = samples.matrix().iter().all(|&v| v == 0.0 || v == 1.0);
            let base = if binary { DVector::zeros(d) } else { center.clone() };
            let mut coords: Vec<usize> = (0..d).collect();
            for &i in &idx {
                coords.shuffle(&mut rng);
                let mut p = base.clone();
                for &j in &coords[..d / 2] {
                    p[j] += 1.0;
                }
                x.set_column(i, &p);
            }
            idx
        }
        Strategy::RarePatternDeletion => rare_pattern_deletion(samples, drawn, &mut x, &mut rng)?,
    };

    let mut replaced = replaced;
    replaced.sort_unstable();
    let mut mask = samples.mask().map_or_else(|| vec![false; n], <[bool]>::to_vec);
    for &i in &replaced {
        mask[i] = true;
    }
    let k = replaced.len();
    let out = SampleSet::from_columns(x)?.with_mask(mask)?;
    Ok((
        out,
        CorruptionReport {
            num_replaced: k,
            replaced_indices: replaced,
            delta: if n == 0 { 0.0 } else { 2.0 * k as f64 / n as f64 },
            drawn,
            exceeds_budget: drawn as f64 > 2.0 * epsilon * n as f64,
        },
    ))
}

fn random_rows(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k.min(n)).into_vec()
}

fn rare_pattern_deletion(
    samples: &SampleSet,
    drawn: usize,
    x: &mut DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if samples.matrix().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::param("RarePatternDeletion needs binary samples"));
    }
    let n = samples.len();
    let weight: Vec<usize> = samples
        .points()
        .map(|p| p.iter().filter(|&&v| v == 1.0).count())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (weight[i], i));
    let zeros = weight.iter().filter(|&&w| w == 0).count();
    order.truncate(drawn.max(zeros));
    let mut replaced = vec![false; n];
    for &i in &order {
        replaced[i] = true;
    }
    let donors: Vec<usize> = (0..n).filter(|&i| !replaced[i]).collect();
    if donors.is_empty() {
        if order.is_empty() {
            return Ok(order);
        }
        return Err(Error::Pathological("every row would be replaced".into()));
    }
    for &i in &order {
        let j = donors[rng.random_range(0..donors.len())];
        let col = samples.matrix().column(j).into_owned();
        x.set_column(i, &col);
    }
    Ok(order)
}

/// The noise distribution an oblivious adversary mixes in for `strategy`,
/// around `center`.
pub fn oblivious_noise(spec: &AdversarySpec, center: &DVector<f64>, epsilon: f64) -> Result<Model> {
    let d = center.len();
    spec.validate(d)?;
    let g = match spec.strategy {
        Strategy::MeanShift => {
            let target = center + spec.direction(d) * spec.magnitude((d as f64).sqrt());
            GaussianModel::new(target, DMatrix::zeros(d, d))?
        }
        Strategy::LineCluster => {
            let v = spec.direction(d);
            let t = spec.magnitude(if epsilon > 0.0 { 1.0 / epsilon.sqrt() } else { 1.0 });
            GaussianModel::new(center.clone(), &v * v.transpose() * (t * t))?
        }
        Strategy::TailReplacement => {
            let s = spec.magnitude(5.0);
            GaussianModel::new(center.clone(), DMatrix::identity(d, d) * (s * s))?
        }
        Strategy::RarePatternDeletion | Strategy::HalfCube => {
            return Err(Error::Unsupported(format!(
                "{} has no oblivious form",
                spec.strategy.name()
            )))
        }
    };
    Ok(Model::Gaussian(g))
}

/// `n` draws from `(1 − ε)·model + ε·noise`; the mask marks noise draws.
pub fn corrupt_oblivious(
    model: &Model,
    noise: &Model,
    epsilon: f64,
    n: usize,
    seed: Seed,
) -> Result<(SampleSet, CorruptionReport)> {
    check_epsilon(epsilon)?;
    if model.dim() != noise.dim() {
        return Err(Error::param("model and noise differ in dimension"));
    }
    if n == 0 {
        return Err(Error::param("sample count must be at least 1"));
    }
    let mut pick = seed.stream(0);
    let from_noise: Vec<bool> = (0..n).map(|_| pick.random::<f64>() < epsilon).collect();
    let k = from_noise.iter().filter(|&&b| b).count();
    let clean = model.sample_with(n - k, &mut seed.stream(1))?;
    let bad = noise.sample_with(k, &mut seed.stream(2))?;
    let d = model.dim();
    let mut x = DMatrix::zeros(d, n);
    let (mut a, mut b) = (0, 0);
    for (i, &is_noise) in from_noise.iter().enumerate() {
        if is_noise {
            x.set_column(i, &bad.column(b));
            b += 1;
        } else {
            x.set_column(i, &clean.column(a));
            a += 1;
        }
    }
    let replaced: Vec<usize> = (0..n).filter(|&i| from_noise[i]).collect();
    let out = SampleSet::from_columns(x)?.with_mask(from_noise)?;
    Ok((
        out,
        CorruptionReport {
            num_replaced: k,
            replaced_indices: replaced,
            delta: 2.0 * k as f64 / n as f64,
            drawn: k,
            exceeds_budget: k as f64 > 2.0 * epsilon * n as f64,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sample_model, BinaryProductModel};

    fn gaussian_set(d: usize, n: usize, seed: u64) -> SampleSet {
        sample_model(&Model::Gaussian(GaussianModel::standard(d)), n, Seed(seed)).unwrap()
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let s = gaussian_set(3, 100, 1);
        for strat in [Strategy::MeanShift, Strategy::LineCluster, Strategy::TailReplacement, Strategy::HalfCube] {
            let (out, rep) = corrupt_full(&s, 0.0, &AdversarySpec::full(strat), Seed(2)).unwrap();
            assert_eq!(out.matrix(), s.matrix());
            assert_eq!(rep.num_replaced, 0);
        }
    }

    #[test]
    fn binomial_count_and_bit_identity() {
        let s = gaussian_set(4, 10_000, 3);
        let (out, rep) = corrupt_full(&s, 0.1, &AdversarySpec::full(Strategy::MeanShift), Seed(4)).unwrap();
        assert!((850..=1150).contains(&rep.num_replaced), "{}", rep.num_replaced);
        assert_eq!(rep.delta, 2.0 * rep.num_replaced as f64 / 10_000.0);
        let mask = out.mask().unwrap();
        assert_eq!(mask.iter().filter(|&&b| b).count(), rep.num_replaced);
        for i in 0..s.len() {
            if !mask[i] {
                let a: Vec<u64> = s.point(i).iter().map(|v| v.to_bits()).collect();
                let b: Vec<u64> = out.point(i).iter().map(|v| v.to_bits()).collect();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn mean_shift_deletes_most_opposed_rows() {
        let s = gaussian_set(2, 1000, 5);
        let (_, rep) = corrupt_full(&s, 0.1, &AdversarySpec::full(Strategy::MeanShift), Seed(6)).unwrap();
        let v = [1.0 / 2f64.sqrt(); 2];
        let proj = |i: usize| s.point(i)[0] * v[0] + s.point(i)[1] * v[1];
        let worst_kept = (0..1000)
            .filter(|i| !rep.replaced_indices.contains(i))
            .map(proj)
            .fold(f64::INFINITY, f64::min);
        assert!(rep.replaced_indices.iter().all(|&i| proj(i) <= worst_kept));
    }

    #[test]
    fn deterministic_given_seed() {
        let s = gaussian_set(3, 500, 7);
        for strat in [Strategy::LineCluster, Strategy::TailReplacement, Strategy::HalfCube] {
            let spec = AdversarySpec::full(strat);
            let a = corrupt_full(&s, 0.2, &spec, Seed(8)).unwrap();
            let b = corrupt_full(&s, 0.2, &spec, Seed(8)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rare_pattern_removes_all_zero_rows() {
        let p = Model::BinaryProduct(BinaryProductModel::new(DVector::from_element(6, 0.3)).unwrap());
        let s = sample_model(&p, 2000, Seed(9)).unwrap();
        let (out, rep) =
            corrupt_full(&s, 0.05, &AdversarySpec::full(Strategy::RarePatternDeletion), Seed(10)).unwrap();
        for i in 0..s.len() {
            if s.point(i).iter().all(|&v| v == 0.0) {
                assert!(rep.replaced_indices.contains(&i));
            }
        }
        assert!(out.points().all(|p| p.iter().any(|&v| v == 1.0)));
    }

    #[test]
    fn half_cube_has_half_ones() {
        let s = SampleSet::from_columns(DMatrix::zeros(8, 200)).unwrap();
        let (out, rep) = corrupt_full(&s, 0.3, &AdversarySpec::full(Strategy::HalfCube), Seed(1)).unwrap();
        for &i in &rep.replaced_indices {
            assert_eq!(out.point(i).iter().sum::<f64>(), 4.0);
        }
    }

    #[test]
    fn half_cube_stays_binary_on_binary_input() {
        let ones = DMatrix::from_fn(6, 300, |j, i| ((i + j) % 3 == 0) as u8 as f64);
        let s = SampleSet::from_columns(ones).unwrap();
        let (out, rep) = corrupt_full(&s, 0.2, &AdversarySpec::full(Strategy::HalfCube), Seed(2)).unwrap();
        assert!(out.matrix().iter().all(|&v| v == 0.0 || v == 1.0));
        for &i in &rep.replaced_indices {
            assert_eq!(out.point(i).iter().sum::<f64>(), 3.0);
        }
    }

    #[test]
    fn epsilon_bounds() {
        let s = gaussian_set(2, 10, 0);
        assert!(corrupt_full(&s, 0.5, &AdversarySpec::full(Strategy::MeanShift), Seed(0)).is_err());
        let g = Model::Gaussian(GaussianModel::standard(1));
        assert!(corrupt_oblivious(&g, &g, 1.0, 10, Seed(0)).is_err());
        assert!(corrupt_oblivious(&g, &g, 0.49, 10, Seed(0)).is_ok());
        let bad = AdversarySpec { params: vec![1.0, 0.0], ..AdversarySpec::full(Strategy::MeanShift) };
        assert!(corrupt_full(&s, 0.1, &bad, Seed(0)).is_err());
    }

    #[test]
    fn oblivious_point_mass_mean() {
        let g = Model::Gaussian(GaussianModel::standard(1));
        let spike = Model::Gaussian(GaussianModel::new(DVector::from_element(1, 10.0), DMatrix::zeros(1, 1)).unwrap());
        let n = 100_000;
        let (s, rep) = corrupt_oblivious(&g, &spike, 0.1, n, Seed(12)).unwrap();
        let m = mean(&s)[0];
        // Var of a draw: 0.9·1 + 0.1·100 − 1 = 9.9.
        let sd = (9.9 / n as f64).sqrt();
        assert!((m - 1.0).abs() < 3.0 * sd, "mean {m}");
        assert_eq!(s.num_corrupt(), Some(rep.num_replaced));
        let (clean, _) = corrupt_oblivious(&g, &spike, 0.0, 100, Seed(1)).unwrap();
        assert_eq!(clean.num_corrupt(), Some(0));
    }
}
