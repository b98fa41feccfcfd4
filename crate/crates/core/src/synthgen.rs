//! Seeded low-rank synthetic tensors and recovery metrics.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{arofac2, Arofac2Config};
use crate::tensor3::{reconstruct, Decomposition, Factor, Tensor3};

/// How the noise level `eps` maps to the entrywise noise distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    /// Entries are drawn from `N(0, eps²)`.
    #[default]
    StdDev,
    /// Entries are drawn from `N(0, eps)`.
    Variance,
}

impl NoiseScale {
    pub fn sigma(self, eps: f64) -> f64 {
        match self {
            NoiseScale::StdDev => eps,
            NoiseScale::Variance => eps.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub r: usize,
    pub eps: f64,
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseScale,
}

impl SynthSpec {
    pub fn new(dims: [usize; 3], r: usize, eps: f64, seed: u64) -> Self {
        Self {
            n1: dims[0],
            n2: dims[1],
            n3: dims[2],
            r,
            eps,
            seed,
            noise: NoiseScale::default(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.n1, self.n2, self.n3]
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("dims must be positive, got {dims:?}")));
        }
        let max = *dims.iter().min().expect("three dims");
        if self.r > max {
            return Err(Error::InvalidArgument(format!("rank {} exceeds min dim {max}", self.r)));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise level must be finite and >= 0, got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Unit `u`, `v`, and `w = λ_i / ‖λ_i‖` with weight `‖λ_i‖`.
    pub factors: Vec<Factor>,
    /// `lambda[i][k]`, r × n3.
    pub lambda: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn decomposition(&self) -> Decomposition {
        Decomposition::from_factors(self.factors.clone())
    }
}

/// Everything drawn for one instance.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub tensor: Tensor3,
    pub clean: Tensor3,
    pub noise: Tensor3,
    pub truth: GroundTruth,
}

fn unit_gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return x.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// Draws `U`, then `V`, then `λ`, then the noise, all from one stream.
pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let us: Vec<Vec<f64>> = (0..spec.r).map(|_| unit_gaussian(&mut rng, spec.n1)).collect();
    let vs: Vec<Vec<f64>> = (0..spec.r).map(|_| unit_gaussian(&mut rng, spec.n2)).collect();
    let lambda: Vec<Vec<f64>> = (0..spec.r)
        .map(|_| (0..spec.n3).map(|_| rng.sample(StandardNormal)).collect())
        .collect();

    let dims = spec.dims();
    let sigma = spec.noise.sigma(spec.eps);
    let noise_data: Vec<f64> = (0..spec.n1 * spec.n2 * spec.n3)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let noise = Tensor3::new(dims, noise_data)?;

    let clean = Tensor3::from_fn(dims, |i, j, k| {
        (0..spec.r).map(|f| lambda[f][k] * us[f][i] * vs[f][j]).sum()
    });
    let tensor = clean.add(&noise)?;

    let factors = us
        .into_iter()
        .zip(vs)
        .zip(&lambda)
        .map(|((u, v), l)| {
            let weight = l.iter().map(|x| x * x).sum::<f64>().sqrt();
            let w = if weight > 0.0 { l.iter().map(|x| x / weight).collect() } else { l.clone() };
            Factor { u, v, w, weight }
        })
        .collect();
    Ok(Synthetic {
        tensor,
        clean,
        noise,
        truth: GroundTruth { factors, lambda },
    })
}

pub fn gen_synthetic(spec: &SynthSpec) -> Result<(Tensor3, GroundTruth)> {
    generate(spec).map(|s| (s.tensor, s.truth))
}

/// Pearson correlation, or 0 when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "pearson needs equal lengths");
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `corr[i][j]`, estimated factor `i` against true factor `j`, averaged over modes.
    pub corr: Vec<Vec<f64>>,
    /// Same layout, one matrix per mode.
    pub per_mode: Vec<Vec<Vec<f64>>>,
    /// Matched `(estimated, true)` pairs in the order they were taken.
    pub permutation: Vec<(usize, usize)>,
    pub min_matched_corr: f64,
    pub unmatched_est: Vec<usize>,
    pub unmatched_truth: Vec<usize>,
}

impl Matching {
    /// True when thresholding `corr` at `t` leaves exactly one entry per
    /// row and per column.
    pub fn permutation_support(&self, t: f64) -> bool {
        let rows = self.corr.len();
        let cols = self.corr.first().map_or(0, Vec::len);
        if rows != cols {
            return false;
        }
        let row_ok = self.corr.iter().all(|r| r.iter().filter(|&&c| c > t).count() == 1);
        let col_ok = (0..cols).all(|j| self.corr.iter().filter(|r| r[j] > t).count() == 1);
        row_ok && col_ok
    }
}

/// Greedy assignment on |Pearson| correlations: take the largest entry,
/// strike its row and column, repeat.
pub fn match_components(est: &Decomposition, truth: &GroundTruth) -> Result<Matching> {
    if est.factors.is_empty() {
        return Err(Error::Empty("estimated decomposition"));
    }
    let modes = 3;
    let per_mode: Vec<Vec<Vec<f64>>> = (1..=modes)
        .map(|m| {
            est.factors
                .iter()
                .map(|e| {
                    truth
                        .factors
                        .iter()
                        .map(|t| {
                            let (a, b) = (e.component(m), t.component(m));
                            if a.len() != b.len() {
                                return Err(Error::DimensionMismatch(format!(
                                    "mode {m}: estimated length {} vs true {}",
                                    a.len(),
                                    b.len()
                                )));
                            }
                            Ok(pearson(a, b).abs())
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let (ne, nt) = (est.factors.len(), truth.factors.len());
    let corr: Vec<Vec<f64>> = (0..ne)
        .map(|i| (0..nt).map(|j| per_mode.iter().map(|m| m[i][j]).sum::<f64>() / modes as f64).collect())
        .collect();

    let mut entries: Vec<(usize, usize)> = (0..ne).flat_map(|i| (0..nt).map(move |j| (i, j))).collect();
    entries.sort_by(|&(a, b), &(c, d)| corr[c][d].total_cmp(&corr[a][b]).then((a, b).cmp(&(c, d))));
    let (mut row_used, mut col_used) = (vec![false; ne], vec![false; nt]);
    let mut permutation = Vec::new();
    for (i, j) in entries {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            permutation.push((i, j));
        }
    }
    let min_matched_corr = permutation.iter().map(|&(i, j)| corr[i][j]).fold(f64::INFINITY, f64::min);
    Ok(Matching {
        min_matched_corr: if permutation.is_empty() { 0.0 } else { min_matched_corr },
        unmatched_est: (0..ne).filter(|&i| !row_used[i]).collect(),
        unmatched_truth: (0..nt).filter(|&j| !col_used[j]).collect(),
        corr,
        per_mode,
        permutation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub seed: u64,
    pub detected_rank: Option<usize>,
    pub min_matched_corr: Option<f64>,
    pub rel_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn sweep_cell(base: &SynthSpec, eps: f64, seed: u64, cfg: &Arofac2Config) -> SweepRow {
    let spec = SynthSpec { eps, seed, ..*base };
    let run = || -> Result<(Decomposition, Option<f64>)> {
        let (a, truth) = gen_synthetic(&spec)?;
        let d = arofac2(&a, cfg, seed)?;
        let corr = if d.factors.is_empty() || truth.factors.is_empty() {
            None
        } else {
            Some(match_components(&d, &truth)?.min_matched_corr)
        };
        Ok((d, corr))
    };
    match run() {
        Ok((d, corr)) => SweepRow {
            eps,
            seed,
            detected_rank: Some(d.rank),
            min_matched_corr: corr,
            rel_error: Some(d.rel_error),
            error: None,
        },
        Err(e) => SweepRow {
            eps,
            seed,
            detected_rank: None,
            min_matched_corr: None,
            rel_error: None,
            error: Some(e.to_string()),
        },
    }
}

/// Generates and decomposes one instance per `(eps, seed)` with seeds
/// `base.seed .. base.seed + n_seeds`. Failed cells keep an absent rank.
pub fn noise_sweep(base: &SynthSpec, eps_grid: &[f64], n_seeds: usize, cfg: &Arofac2Config) -> Result<Vec<SweepRow>> {
    if eps_grid.is_empty() {
        return Err(Error::Empty("noise grid"));
    }
    if n_seeds == 0 {
        return Err(Error::InvalidArgument("n_seeds must be positive".into()));
    }
    cfg.validate()?;
    SynthSpec { eps: 0.0, ..*base }.validate()?;
    if let Some(bad) = eps_grid.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument(format!("noise level must be finite and >= 0, got {bad}")));
    }
    let cells: Vec<(f64, u64)> = eps_grid
        .iter()
        .flat_map(|&e| (0..n_seeds as u64).map(move |s| (e, base.seed + s)))
        .collect();
    Ok(cells.par_iter().map(|&(e, s)| sweep_cell(base, e, s, cfg)).collect())
}

/// Most frequent detected rank among rows at `eps`; ties go to the smaller rank.
pub fn modal_rank(rows: &[SweepRow], eps: f64) -> Option<usize> {
    let mut counts = std::collections::BTreeMap::new();
    for r in rows.iter().filter(|r| r.eps == eps) {
        if let Some(k) = r.detected_rank {
            *counts.entry(k).or_insert(0usize) += 1;
        }
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(k, _)| k)
}

pub const SWEEP_HEADER: &str = "eps,seed,detected_rank,min_matched_corr,rel_error";

/// Absent values are written as empty fields.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    fn opt<T: ToString>(x: Option<T>) -> String {
        x.map(|v| v.to_string()).unwrap_or_default()
    }
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.eps,
            r.seed,
            opt(r.detected_rank),
            opt(r.min_matched_corr),
            opt(r.rel_error)
        )?;
    }
    Ok(())
}

/// Reconstruction of the noiseless part from the stored truth.
pub fn rebuild(truth: &GroundTruth, dims: [usize; 3]) -> Result<Tensor3> {
    reconstruct(&truth.decomposition(), dims)
}
