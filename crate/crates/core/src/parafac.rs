//! Fixed-rank PARAFAC by alternating least squares.
//!
//! Each half-step solves one factor matrix exactly against the matching
//! unfolding and Khatri-Rao product, so the squared loss never increases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::clustering::canonicalize;
use crate::error::{Error, Result};
use crate::tensor3::{Decomposition, Factor, Matrix, Tensor3};

const RIDGE: f64 = 1e-12;
const SINGULAR_COND: f64 = 1e12;
const INIT_STREAM: u64 = 0xa15 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsConfig {
    pub rank: usize,
    pub max_sweeps: usize,
    /// Relative loss change below which a run stops.
    pub fit_tol: f64,
    pub init_seed: u64,
    /// Random initializations; the best final loss is kept.
    pub n_inits: usize,
}

impl AlsConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_sweeps: 500,
            fit_tol: 1e-8,
            init_seed: 0,
            n_inits: 5,
        }
    }
}

/// Loss history of the kept run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlsTrace {
    /// Squared Frobenius loss after every half-step (three per sweep).
    pub losses: Vec<f64>,
    pub sweeps: usize,
    /// Set when some subproblem needed the ridge term.
    pub regularized: bool,
    pub init: usize,
}

/// `KR(p, q)` with rows indexed `a * q.nrows() + b`.
pub fn khatri_rao(p: &Matrix, q: &Matrix) -> Matrix {
    assert_eq!(p.ncols(), q.ncols(), "Khatri-Rao operands need equal column counts");
    let (np, nq) = (p.nrows(), q.nrows());
    Matrix::from_fn(np * nq, p.ncols(), |row, l| p[(row / nq, l)] * q[(row % nq, l)])
}

struct Unfoldings {
    modes: [Matrix; 3],
    norm2: f64,
}

/// Solves `X · G⁻¹` for symmetric positive semidefinite `G`.
fn right_solve(m: &Matrix, gram: &Matrix, regularized: &mut bool) -> Matrix {
    let r = gram.nrows();
    let eig = gram.clone().symmetric_eigen();
    let (max, min) = (eig.eigenvalues.max(), eig.eigenvalues.min());
    let mut g = gram.clone();
    if !(min > 0.0) || max / min > SINGULAR_COND {
        *regularized = true;
        let scale = (gram.trace() / r as f64).max(1.0);
        for i in 0..r {
            g[(i, i)] += RIDGE * scale;
        }
    }
    match g.clone().cholesky() {
        Some(chol) => chol.solve(&m.transpose()).transpose(),
        None => {
            *regularized = true;
            let pinv = g.pseudo_inverse(1e-15).expect("pseudo-inverse of a square matrix");
            m * pinv
        }
    }
}

struct Run {
    factors: [Matrix; 3],
    loss: f64,
    trace: AlsTrace,
}

fn als_run(x: &Unfoldings, dims: [usize; 3], cfg: &AlsConfig, init: usize) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    rng.set_stream(INIT_STREAM | init as u64);
    let mut f: [Matrix; 3] = dims.map(|n| Matrix::from_fn(n, cfg.rank, |_, _| rng.sample(StandardNormal)));
    let mut losses = Vec::with_capacity(3 * cfg.max_sweeps);
    let mut regularized = false;
    let mut prev = f64::INFINITY;
    let mut sweeps = 0;

    for _ in 0..cfg.max_sweeps {
        sweeps += 1;
        for mode in 0..3 {
            let (p, q) = match mode {
                0 => (&f[1], &f[2]),
                1 => (&f[0], &f[2]),
                _ => (&f[0], &f[1]),
            };
            let kr = khatri_rao(p, q);
            let gram = p.tr_mul(p).component_mul(&q.tr_mul(q));
            let mttkrp = &x.modes[mode] * &kr;
            let updated = right_solve(&mttkrp, &gram, &mut regularized);

            // loss from the expansion ‖X‖² − 2⟨X, X̂⟩ + ‖X̂‖²
            let inner = mttkrp.component_mul(&updated).sum();
            let full_gram = gram.component_mul(&updated.tr_mul(&updated));
            let loss = (x.norm2 - 2.0 * inner + full_gram.sum()).max(0.0);
            losses.push(loss);
            f[mode] = updated;
        }
        let loss = *losses.last().expect("three losses per sweep");
        let done = loss <= 1e-14 * x.norm2 || (prev.is_finite() && (prev - loss).abs() <= cfg.fit_tol * prev);
        prev = loss;
        if done {
            break;
        }
    }
    Run {
        factors: f,
        loss: prev,
        trace: AlsTrace {
            losses,
            sweeps,
            regularized,
            init,
        },
    }
}

/// PARAFAC-ALS at fixed rank; see [`parafac_als_traced`].
pub fn parafac_als(a: &Tensor3, cfg: &AlsConfig) -> Result<Decomposition> {
    parafac_als_traced(a, cfg).map(|(d, _)| d)
}

/// Best of `n_inits` ALS runs, with unit canonicalized components and the
/// column scales folded into signed weights.
pub fn parafac_als_traced(a: &Tensor3, cfg: &AlsConfig) -> Result<(Decomposition, AlsTrace)> {
    let dims = a.dims();
    let max_rank = *dims.iter().min().expect("three dims");
    if cfg.rank == 0 || cfg.rank > max_rank {
        return Err(Error::InvalidArgument(format!(
            "rank {} outside 1..={max_rank} for dims {dims:?}",
            cfg.rank
        )));
    }
    if cfg.max_sweeps == 0 || cfg.n_inits == 0 {
        return Err(Error::InvalidArgument("max_sweeps and n_inits must be positive".into()));
    }
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let x = Unfoldings {
        modes: [a.unfold(1)?, a.unfold(2)?, a.unfold(3)?],
        norm2: norm * norm,
    };

    let best = (0..cfg.n_inits)
        .map(|init| als_run(&x, dims, cfg, init))
        .min_by(|p, q| p.loss.total_cmp(&q.loss))
        .expect("at least one init");

    let [fa, fb, fc] = &best.factors;
    let factors = (0..cfg.rank)
        .map(|l| {
            let cols = [fa.column(l), fb.column(l), fc.column(l)];
            let mut weight = 1.0;
            let mut comps = Vec::with_capacity(3);
            for col in cols {
                let raw: Vec<f64> = col.iter().copied().collect();
                let n = col.norm();
                if n == 0.0 {
                    weight = 0.0;
                    comps.push(raw);
                    continue;
                }
                let c = canonicalize(&raw)?;
                let sign = if raw.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
                weight *= sign * n;
                comps.push(c);
            }
            let w = comps.pop().expect("mode 3");
            let v = comps.pop().expect("mode 2");
            let u = comps.pop().expect("mode 1");
            Ok(Factor { u, v, w, weight })
        })
        .collect::<Result<Vec<_>>>()?;
    let d = Decomposition::from_factors(factors).with_fit(a)?;
    Ok((d, best.trace))
}
