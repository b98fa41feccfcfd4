//! Rank-one search inside the slice span.
//!
//! A random element `M` of the span is driven towards a rank-one matrix by
//! alternating the cubing map `M ↦ M·Mᵀ·M`, which cubes every singular value,
//! with orthogonal projection back onto the span. At a fixed point the leading
//! singular pair gives a mode-1 and a mode-2 component of the same factor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spanrep::{build_span, SpanRep};
use crate::tensor3::{Matrix, Tensor3};

const MAX_RESTARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FindRankOneConfig {
    pub max_iters: usize,
    /// Frobenius distance between successive iterates that counts as converged.
    pub conv_tol: f64,
    /// Largest accepted `σ2/σ1` of the final iterate.
    pub rankone_tol: f64,
    /// Rounds of alternating power iteration for the leading singular pair.
    pub power_iters: usize,
}

impl Default for FindRankOneConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            conv_tol: 1e-10,
            rankone_tol: 0.9,
            power_iters: 50,
        }
    }
}

impl FindRankOneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.power_iters == 0 {
            return Err(Error::InvalidArgument(
                "max_iters and power_iters must be positive".into(),
            ));
        }
        if !(self.conv_tol > 0.0 && self.conv_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "conv_tol must lie in (0, 1), got {}",
                self.conv_tol
            )));
        }
        if !(self.rankone_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rankone_tol must be positive, got {}",
                self.rankone_tol
            )));
        }
        Ok(())
    }
}

/// One `(u, v)` estimate with its convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `σ2/σ1` of the final iterate.
    pub sigma_ratio: f64,
    pub iters: usize,
    pub converged: bool,
    /// Index of the restart that produced this pair.
    pub restart: usize,
}

/// `M·Mᵀ·M`, grouped so the inner product is the smaller square.
pub fn power_step(m: &Matrix) -> Matrix {
    if m.nrows() <= m.ncols() {
        (m * m.transpose()) * m
    } else {
        m * (m.tr_mul(m))
    }
}

/// Leading singular pair by alternating power iteration, returned as
/// `(u, σ1, v)` with `uᵀ·M·v = σ1 ≥ 0`.
pub fn leading_singular_pair(m: &Matrix, rounds: usize) -> (Vec<f64>, f64, Vec<f64>) {
    let start = (0..m.ncols())
        .max_by(|&a, &b| m.column(a).norm_squared().total_cmp(&m.column(b).norm_squared()))
        .unwrap_or(0);
    let mut u = m.column(start).into_owned();
    let un = u.norm();
    if un == 0.0 {
        let mut u = vec![0.0; m.nrows()];
        let mut v = vec![0.0; m.ncols()];
        u[0] = 1.0;
        v[0] = 1.0;
        return (u, 0.0, v);
    }
    u /= un;
    let mut v = m.tr_mul(&u);
    v /= v.norm();
    for _ in 0..rounds {
        u = m * &v;
        u /= u.norm();
        v = m.tr_mul(&u);
        v /= v.norm();
    }
    let sigma = (m * &v).dot(&u);
    (u.iter().copied().collect(), sigma, v.iter().copied().collect())
}

pub fn singular_ratio(m: &Matrix) -> f64 {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    match s.as_slice() {
        [s1, s2, ..] if *s1 > 0.0 => s2 / s1,
        _ => 0.0,
    }
}

/// Runs the alternating cubing/projection iteration from a fresh random
/// element of `span` and extracts the leading singular pair of the result.
///
/// The pair is marked converged only when successive iterates came within
/// `conv_tol` *and* the final iterate passes the `σ2/σ1 < rankone_tol` gate.
pub fn find_rank_one(span: &SpanRep, cfg: &FindRankOneConfig, rng: &mut ChaCha8Rng) -> CandidatePair {
    let mut outcome = Err(span.sample(rng));
    for attempt in 0..=MAX_RESTARTS {
        let start = match (attempt, &outcome) {
            (0, Err(first)) => first.clone(),
            _ => span.sample(rng),
        };
        outcome = iterate(span, start, cfg);
        if outcome.is_ok() {
            break;
        }
    }

    let (last, iters, fired) = match outcome {
        Ok(done) => done,
        Err(last) => (last, cfg.max_iters, false),
    };
    let (u, _, v) = leading_singular_pair(&last, cfg.power_iters);
    let sigma_ratio = singular_ratio(&last);
    CandidatePair {
        u,
        v,
        sigma_ratio,
        iters,
        converged: fired && sigma_ratio < cfg.rankone_tol,
        restart: 0,
    }
}

/// Iterates from `m` until the step size drops below `conv_tol` or the
/// iteration budget runs out. Returns the final iterate, the iteration count
/// and whether the distance criterion fired, or the last good iterate if a
/// projection vanished.
fn iterate(
    span: &SpanRep,
    mut m: Matrix,
    cfg: &FindRankOneConfig,
) -> std::result::Result<(Matrix, usize, bool), Matrix> {
    for it in 1..=cfg.max_iters {
        let next = match span.project(&power_step(&m)) {
            Ok(next) => next,
            Err(_) => return Err(m),
        };
        let dist = (&next - &m).norm();
        m = next;
        if dist < cfg.conv_tol {
            return Ok((m, it, true));
        }
    }
    Ok((m, cfg.max_iters, false))
}

/// How the slice span is sized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanOptions {
    pub target_dim: Option<usize>,
    pub energy_tol: f64,
}

impl Default for SpanOptions {
    fn default() -> Self {
        Self {
            target_dim: None,
            energy_tol: crate::spanrep::DEFAULT_ENERGY_TOL,
        }
    }
}

/// Converged candidates from repeated runs on one mode pairing.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub mode_pair: (usize, usize),
    /// Converged pairs in restart order.
    pub pairs: Vec<CandidatePair>,
    pub restarts: usize,
    pub span_dim: usize,
}

impl CandidateSet {
    pub fn convergence_rate(&self) -> f64 {
        self.pairs.len() as f64 / self.restarts as f64
    }
}

/// Deterministic per-restart generator, independent of scheduling order.
pub fn restart_rng(seed: u64, mode_pair: (usize, usize), restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = (mode_pair.0 * 4 + mode_pair.1) as u64;
    rng.set_stream((tag << 32) | restart as u64);
    rng
}

/// Mode order that puts `mode_pair` into slots 1 and 2.
pub fn pair_permutation(mode_pair: (usize, usize)) -> Result<[usize; 3]> {
    let (a, b) = mode_pair;
    if !(1..=3).contains(&a) || !(1..=3).contains(&b) || a == b {
        return Err(Error::InvalidArgument(format!(
            "mode pair ({a}, {b}) must name two distinct modes in 1..=3"
        )));
    }
    Ok([a, b, 6 - a - b])
}

/// Repeats [`find_rank_one`] on `a` with `mode_pair` moved into the first two
/// slots and keeps the converged pairs. The `u` of each pair is a candidate
/// component of mode `mode_pair.0`, the `v` one of mode `mode_pair.1`.
pub fn collect_candidates(
    a: &Tensor3,
    mode_pair: (usize, usize),
    n_restarts: usize,
    span_opts: &SpanOptions,
    cfg: &FindRankOneConfig,
    seed: u64,
) -> Result<CandidateSet> {
    if n_restarts == 0 {
        return Err(Error::InvalidArgument("at least one restart is required".into()));
    }
    cfg.validate()?;
    let perm = pair_permutation(mode_pair)?;
    let permuted;
    let t = if perm == [1, 2, 3] {
        a
    } else {
        permuted = a.permute_modes(perm)?;
        &permuted
    };
    let span = build_span(&t.slices(), span_opts.target_dim, span_opts.energy_tol)?;

    let pairs: Vec<CandidatePair> = (0..n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(seed, mode_pair, r);
            let mut p = find_rank_one(&span, cfg, &mut rng);
            p.restart = r;
            p
        })
        .collect::<Vec<_>>()
        .into_iter()
        .filter(|p| p.converged)
        .collect();

    if pairs.len() < 2 {
        return Err(Error::TooFewCandidates { found: pairs.len() });
    }
    Ok(CandidateSet {
        mode_pair,
        pairs,
        restarts: n_restarts,
        span_dim: span.dim(),
    })
}
