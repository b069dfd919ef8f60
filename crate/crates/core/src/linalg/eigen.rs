//! Extreme eigenpairs of symmetric operators.
//!
//! The solver is a Rayleigh–Ritz subspace iteration that expands the search
//! space with the current Ritz residual (which, without preconditioning,
//! spans the same Krylov space as Lanczos) and restarts by keeping the
//! best Ritz vectors when the basis fills up. All basis vectors are fully
//! reorthogonalized, so clustered spectra do not produce ghost eigenvalues.
//!
//! Constraints (`v ⊥ u`, deflation against already found vectors) are
//! handled by working with `P A P` on `range(P)`, where `P` projects out an
//! orthonormal set.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Seed;

/// A real symmetric linear map, possibly never materialized.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    /// `y ← A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xv = nalgebra::DVectorView::from_slice(x, x.len());
        let mut yv = nalgebra::DVectorViewMut::from_slice(y, x.len());
        yv.gemv(1.0, self, &xv, 0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Largest,
    Smallest,
    /// Largest absolute value; both ends of the spectrum are resolved and
    /// ties go to the positive end.
    Magnitude,
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Convergence when `‖Av − λv‖ ≤ tol · max(1, |λ|)`.
    pub tol: f64,
    pub max_matvecs: usize,
    pub max_basis: usize,
    /// Ritz vectors kept across a restart.
    pub keep: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-9,
            max_matvecs: 10_000,
            max_basis: 48,
            keep: 12,
        }
    }
}

impl EigenOptions {
    pub fn with_tol(tol: f64) -> Self {
        EigenOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: DVector<f64>,
    pub matvecs: usize,
}

const START_SEED: Seed = Seed(0x00E1_6E45_7A27);

fn project_out(basis: &[DVector<f64>], x: &mut DVector<f64>) {
    // Two passes of classical Gram–Schmidt keep x orthogonal to machine
    // precision.
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(x);
            x.axpy(-c, q, 1.0);
        }
    }
}

/// Flips `v` so that its first clearly nonzero entry is positive.
pub fn canonical_sign(v: &mut DVector<f64>) {
    let scale = v.amax();
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}

struct Basis {
    v: Vec<DVector<f64>>,
    av: Vec<DVector<f64>>,
    h: DMatrix<f64>,
}

impl Basis {
    fn ritz(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.v[0].len();
        let mut x = DVector::zeros(n);
        let mut ax = DVector::zeros(n);
        for (k, &c) in y.iter().enumerate() {
            x.axpy(c, &self.v[k], 1.0);
            ax.axpy(c, &self.av[k], 1.0);
        }
        (x, ax)
    }
}

/// One extreme eigenpair of `P A P` restricted to the orthogonal complement
/// of `deflate` (an orthonormal set, possibly empty).
pub fn extreme_eigenpair(
    op: &dyn SymmetricOperator,
    which: Which,
    deflate: &[DVector<f64>],
    opts: &EigenOptions,
) -> Result<Eigenpair> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::param("eigenproblem of dimension zero"));
    }
    if deflate.len() >= n {
        return Err(Error::param("constraints leave no admissible directions"));
    }
    let n_eff = n - deflate.len();
    let m_max = opts.max_basis.clamp(2, usize::MAX).min(n_eff);
    let keep = opts.keep.clamp(2, m_max.max(3) - 1);

    let mut rng = START_SEED.rng();
    let random_vector = |rng: &mut rand_chacha::ChaCha8Rng| {
        DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
    };

    let mut matvecs = 0usize;
    let apply = |x: &DVector<f64>, matvecs: &mut usize| {
        let mut y = DVector::zeros(n);
        op.apply(x.as_slice(), y.as_mut_slice());
        *matvecs += 1;
        project_out(deflate, &mut y);
        y
    };

    let mut basis = Basis {
        v: Vec::with_capacity(m_max),
        av: Vec::with_capacity(m_max),
        h: DMatrix::zeros(0, 0),
    };

    let mut next = random_vector(&mut rng);
    loop {
        // Orthonormalize the candidate against everything so far.
        project_out(deflate, &mut next);
        project_out(&basis.v, &mut next);
        let mut norm = next.norm();
        let mut attempts = 0;
        while norm <= 1e-10 && basis.v.len() < n_eff && attempts < 8 {
            next = random_vector(&mut rng);
            project_out(deflate, &mut next);
            project_out(&basis.v, &mut next);
            norm = next.norm();
            attempts += 1;
        }
        if norm > 1e-10 {
            next /= norm;
            let an = apply(&next, &mut matvecs);
            let m = basis.v.len();
            let mut h = DMatrix::zeros(m + 1, m + 1);
            h.view_mut((0, 0), (m, m)).copy_from(&basis.h);
            for k in 0..m {
                let c = basis.v[k].dot(&an);
                h[(k, m)] = c;
                h[(m, k)] = c;
            }
            h[(m, m)] = next.dot(&an);
            basis.h = h;
            basis.v.push(next);
            basis.av.push(an);
        }
        let exhausted = norm <= 1e-10 || basis.v.len() >= n_eff;

        // Rayleigh–Ritz.
        let eig = SymmetricEigen::new(basis.h.clone());
        let m = basis.v.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let targets: Vec<usize> = match which {
            Which::Largest => vec![order[m - 1]],
            Which::Smallest => vec![order[0]],
            Which::Magnitude if m == 1 => vec![order[0]],
            Which::Magnitude => vec![order[0], order[m - 1]],
        };

        let mut worst: Option<(f64, DVector<f64>)> = None;
        let mut pairs = Vec::with_capacity(2);
        for &t in &targets {
            let theta = eig.eigenvalues[t];
            let y = eig.eigenvectors.column(t).into_owned();
            let (x, ax) = basis.ritz(&y);
            let mut r = ax - &x * theta;
            project_out(deflate, &mut r);
            let rel = r.norm() / theta.abs().max(1.0);
            if rel > opts.tol && worst.as_ref().is_none_or(|(w, _)| rel > *w) {
                worst = Some((rel, r));
            }
            pairs.push((theta, x));
        }

        if worst.is_none() || exhausted {
            let (theta, x) = match which {
                Which::Magnitude if pairs.len() == 2 => {
                    if pairs[0].0.abs() > pairs[1].0.abs() {
                        pairs.swap_remove(0)
                    } else {
                        pairs.swap_remove(1)
                    }
                }
                _ => pairs.swap_remove(0),
            };
            let mut v = x.normalize();
            canonical_sign(&mut v);
            return Ok(Eigenpair {
                value: theta,
                vector: v,
                matvecs,
            });
        }
        let (residual, r) = worst.expect("checked above");
        if matvecs >= opts.max_matvecs {
            return Err(Error::NonConvergence { matvecs, residual });
        }

        if m >= m_max {
            let kept: Vec<usize> = match which {
                Which::Largest => order[m - keep..].to_vec(),
                Which::Smallest => order[..keep].to_vec(),
                Which::Magnitude => {
                    let lo = keep / 2;
                    order[..lo]
                        .iter()
                        .chain(&order[m - (keep - lo)..])
                        .copied()
                        .collect()
                }
            };
            let mut v = Vec::with_capacity(m_max);
            let mut av = Vec::with_capacity(m_max);
            for &k in &kept {
                let (x, ax) = basis.ritz(&eig.eigenvectors.column(k).into_owned());
                v.push(x);
                av.push(ax);
            }
            let kk = kept.len();
            basis = Basis {
                v,
                av,
                h: DMatrix::from_fn(kk, kk, |i, j| {
                    if i == j {
                        eig.eigenvalues[kept[i]]
                    } else {
                        0.0
                    }
                }),
            };
        }
        next = r;
    }
}

/// The eigenvalue of largest magnitude with its unit eigenvector.
pub fn top_eigenpair_abs(op: &dyn SymmetricOperator, tol: f64) -> Result<Eigenpair> {
    extreme_eigenpair(op, Which::Magnitude, &[], &EigenOptions::with_tol(tol))
}

/// Maximizes `vᵀ M v` over unit `v` with `v · u = 0`.
pub fn top_eigenpair_constrained(
    op: &dyn SymmetricOperator,
    u: &DVector<f64>,
    tol: f64,
) -> Result<Eigenpair> {
    let norm = u.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::param("constraint vector must be nonzero"));
    }
    extreme_eigenpair(op, Which::Largest, &[u / norm], &EigenOptions::with_tol(tol))
}

/// All eigenpairs with `|λ| > thresh`, largest magnitude first, up to
/// `max_count`, found by successive deflation.
pub fn eigenpairs_above(
    op: &dyn SymmetricOperator,
    thresh: f64,
    max_count: usize,
    tol: f64,
) -> Result<Vec<Eigenpair>> {
    let opts = EigenOptions::with_tol(tol);
    let mut found: Vec<Eigenpair> = Vec::new();
    let mut deflate: Vec<DVector<f64>> = Vec::new();
    while found.len() < max_count && deflate.len() < op.dim() {
        let pair = extreme_eigenpair(op, Which::Magnitude, &deflate, &opts)?;
        if pair.value.abs() <= thresh {
            break;
        }
        deflate.push(pair.vector.clone());
        found.push(pair);
    }
    Ok(found)
}
