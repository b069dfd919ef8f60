//! Hypothesis selection by pairwise elimination.

use crate::distances::{mass_table, pattern_index, MAX_ENUM_DIM};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::rng::Seed;
use crate::samples::SampleSet;

#[derive(Debug, Clone, PartialEq)]
pub struct TournamentOptions {
    pub epsilon: f64,
    /// Accuracy the caller expects of its best candidate; the elimination
    /// margin is `delta_hat + epsilon`.
    pub delta_hat: f64,
    /// Monte-Carlo draws per candidate when masses cannot be enumerated.
    pub mc: usize,
    pub seed: Seed,
}

impl TournamentOptions {
    pub fn new(epsilon: f64, delta_hat: f64, seed: Seed) -> Self {
        TournamentOptions {
            epsilon,
            delta_hat,
            mc: 20_000,
            seed,
        }
    }

    pub fn margin(&self) -> f64 {
        self.delta_hat + self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TournamentOutcome {
    pub index: usize,
    pub model: Model,
    /// Set when every candidate was eliminated and the least-beaten one was
    /// returned.
    pub flagged: bool,
    /// `max_P [p̂(A_PQ) − Q(A_PQ)]` for every candidate `Q`.
    pub worst_margin: Vec<f64>,
}

/// `wins[p][q]`: estimated `p̂(A_pq) − Q(A_pq)` with `A_pq = {P > Q}`.
fn margins_enumerated(candidates: &[Model], samples: &SampleSet) -> Result<Vec<Vec<f64>>> {
    let tables: Vec<Vec<f64>> = candidates.iter().map(mass_table).collect::<Result<_>>()?;
    let cells = tables[0].len();
    let mut hist = vec![0.0; cells];
    let inv_n = 1.0 / samples.len() as f64;
    for x in samples.points() {
        if x.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::param("discrete candidates need binary samples"));
        }
        hist[pattern_index(x)] += inv_n;
    }
    let k = candidates.len();
    let mut m = vec![vec![0.0; k]; k];
    for (p, tp) in tables.iter().enumerate() {
        for (q, tq) in tables.iter().enumerate() {
            if p == q {
                continue;
            }
            let mut acc = 0.0;
            for c in 0..cells {
                if tp[c] > tq[c] {
                    acc += hist[c] - tq[c];
                }
            }
            m[p][q] = acc;
        }
    }
    Ok(m)
}

fn margins_sampled(
    candidates: &[Model],
    samples: &SampleSet,
    opts: &TournamentOptions,
) -> Result<Vec<Vec<f64>>> {
    let k = candidates.len();
    let dens: Vec<_> = candidates
        .iter()
        .map(Model::log_density_fn)
        .collect::<Result<_>>()?;
    let eval_all = |points: &SampleSet| -> Vec<Vec<f64>> {
        dens.iter()
            .map(|f| points.points().map(|x| f.eval(x)).collect())
            .collect()
    };
    let emp = eval_all(samples);
    let n = samples.len() as f64;
    let mut m = vec![vec![0.0; k]; k];
    for q in 0..k {
        let mut rng = opts.seed.derive(&[q as u64]).rng();
        let draws = SampleSet::from_columns(candidates[q].sample_with(opts.mc, &mut rng)?)?;
        let at_q = eval_all(&draws);
        for p in 0..k {
            if p == q {
                continue;
            }
            let e = emp[p].iter().zip(&emp[q]).filter(|(a, b)| a > b).count() as f64 / n;
            let t = at_q[p].iter().zip(&at_q[q]).filter(|(a, b)| a > b).count() as f64
                / opts.mc as f64;
            m[p][q] = e - t;
        }
    }
    Ok(m)
}

/// Eliminates every `Q` that some `P` beats by at least the margin, i.e.
/// `p̂(A_PQ) ≥ Q(A_PQ) + δ̂ + ε`, then returns the survivor with the smallest
/// worst-case margin (lowest index on ties).
pub fn tournament(
    candidates: &[Model],
    samples: &SampleSet,
    opts: &TournamentOptions,
) -> Result<TournamentOutcome> {
    let Some(first) = candidates.first() else {
        return Err(Error::param("empty candidate pool"));
    };
    let d = first.dim();
    if candidates.iter().any(|c| c.dim() != d) || samples.dim() != d {
        return Err(Error::param("candidates and samples differ in dimension"));
    }
    if samples.is_empty() {
        return Err(Error::param("empty sample set"));
    }
    if candidates.len() == 1 {
        return Ok(TournamentOutcome {
            index: 0,
            model: first.clone(),
            flagged: false,
            worst_margin: vec![f64::NEG_INFINITY],
        });
    }
    if opts.mc == 0 {
        return Err(Error::param("mc must be positive"));
    }
    let enumerable = d <= MAX_ENUM_DIM && candidates.iter().all(Model::is_discrete);
    let m = if enumerable {
        margins_enumerated(candidates, samples)?
    } else {
        margins_sampled(candidates, samples, opts)?
    };
    let k = candidates.len();
    let worst: Vec<f64> = (0..k)
        .map(|q| {
            (0..k)
                .filter(|&p| p != q)
                .map(|p| m[p][q])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let theta = opts.margin();
    let pick = |allowed: &dyn Fn(usize) -> bool| {
        (0..k)
            .filter(|&q| allowed(q))
            .fold(None, |best: Option<usize>, q| match best {
                Some(b) if worst[b] <= worst[q] => Some(b),
                _ => Some(q),
            })
    };
    let (index, flagged) = match pick(&|q| worst[q] < theta) {
        Some(i) => (i, false),
        None => (pick(&|_| true).expect("pool is nonempty"), true),
    };
    Ok(TournamentOutcome {
        index,
        model: candidates[index].clone(),
        flagged,
        worst_margin: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::tv_exact_small;
    use crate::models::{sample_model, BinaryProductModel, GaussianModel};
    use nalgebra::DVector;

    fn product(p: &[f64]) -> Model {
        Model::BinaryProduct(BinaryProductModel::new(DVector::from_column_slice(p)).unwrap())
    }

    #[test]
    fn truth_beats_far_decoy() {
        let truth = product(&[0.5, 0.4, 0.6, 0.5, 0.3, 0.7]);
        let decoy = product(&[0.9, 0.1, 0.9, 0.1, 0.9, 0.1]);
        assert!(tv_exact_small(&truth, &decoy).unwrap() >= 0.5);
        let s = sample_model(&truth, 5000, Seed(3)).unwrap();
        let opts = TournamentOptions::new(0.05, 0.05, Seed(1));
        for pool in [vec![truth.clone(), decoy.clone()], vec![decoy.clone(), truth.clone()]] {
            let out = tournament(&pool, &s, &opts).unwrap();
            assert_eq!(out.model, truth);
            assert!(!out.flagged);
        }
    }

    #[test]
    fn trivial_pools() {
        let a = product(&[0.5, 0.5]);
        let s = sample_model(&a, 100, Seed(0)).unwrap();
        let opts = TournamentOptions::new(0.1, 0.0, Seed(0));
        assert_eq!(tournament(&[a.clone()], &s, &opts).unwrap().index, 0);
        assert_eq!(tournament(&[a.clone(), a.clone()], &s, &opts).unwrap().index, 0);
        assert!(tournament(&[], &s, &opts).is_err());
    }

    #[test]
    fn gaussian_pool_uses_monte_carlo() {
        let truth = Model::Gaussian(GaussianModel::standard(3));
        let mut far = GaussianModel::standard(3);
        far.mean[0] = 3.0;
        let s = sample_model(&truth, 4000, Seed(5)).unwrap();
        let mut opts = TournamentOptions::new(0.05, 0.05, Seed(9));
        opts.mc = 4000;
        let pool = [Model::Gaussian(far), truth.clone()];
        let a = tournament(&pool, &s, &opts).unwrap();
        let b = tournament(&pool, &s, &opts).unwrap();
        assert_eq!(a.index, 1);
        assert_eq!(a, b);
    }

    #[test]
    fn enumerated_margins_match_direct_sums() {
        let p = product(&[0.2, 0.7, 0.5]);
        let q = product(&[0.6, 0.3, 0.5]);
        let s = sample_model(&p, 2000, Seed(8)).unwrap();
        let m = margins_enumerated(&[p.clone(), q.clone()], &s).unwrap();
        // Direct: A = {P > Q} over the 8 patterns.
        let mass = |pr: &[f64], x: &[f64]| -> f64 {
            pr.iter().zip(x).map(|(&a, &b)| if b == 1.0 { a } else { 1.0 - a }).product()
        };
        let (pp, qq) = ([0.2, 0.7, 0.5], [0.6, 0.3, 0.5]);
        let mut q_mass = 0.0;
        let mut pats = Vec::new();
        for idx in 0..8 {
            let x: Vec<f64> = (0..3).map(|j| ((idx >> j) & 1) as f64).collect();
            if mass(&pp, &x) > mass(&qq, &x) {
                q_mass += mass(&qq, &x);
                pats.push(x);
            }
        }
        let emp = s.points().filter(|x| pats.iter().any(|p| p.as_slice() == *x)).count() as f64
            / s.len() as f64;
        assert!((m[0][1] - (emp - q_mass)).abs() < 1e-12);
    }
}
