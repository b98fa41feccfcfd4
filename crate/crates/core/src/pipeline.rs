//! End-to-end rank detection and CP decomposition.
//!
//! Candidates are collected on the original tensor (modes 1 and 2) and on the
//! tensor with modes 1 and 3 swapped (modes 3 and 2). Each mode's candidates
//! are clustered; mode 2 is clustered once over both runs so it can serve as
//! the join key. Co-occurrence votes link clusters into triples, and one signed
//! weight per triple is fitted by least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clustering::{canonicalize, cluster_components, ClusterResult};
use crate::error::{Error, Result, Stage};
use crate::findrankone::{collect_candidates, CandidatePair, CandidateSet, FindRankOneConfig, SpanOptions};
use crate::tensor3::{Decomposition, Factor, Tensor3};

const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arofac2Config {
    pub restarts_per_mode: usize,
    pub findrankone: FindRankOneConfig,
    pub span_energy_tol: f64,
    /// Span dimension to use when the rank is known in advance.
    pub span_target_dim: Option<usize>,
    pub min_vote_share: f64,
    /// Fraction of candidates a cluster needs to count as a component.
    pub min_cluster_support: f64,
    /// Lower bound on the mean-shift bandwidth. Restarts that reach the same
    /// fixed point give identical candidates, which would otherwise shrink
    /// the estimated bandwidth below the gap between the two runs' mode-2
    /// estimates.
    pub min_bandwidth: f64,
    /// Keep mode-2 clusters linked on one side only, fitting the missing
    /// component by least squares.
    pub complete_orphans: bool,
    /// Without mode 3 the result is the simultaneous-SVD form with per-slice
    /// weights fitted directly.
    pub compute_mode3: bool,
}

impl Default for Arofac2Config {
    fn default() -> Self {
        Self {
            restarts_per_mode: 200,
            findrankone: FindRankOneConfig::default(),
            span_energy_tol: crate::spanrep::DEFAULT_ENERGY_TOL,
            span_target_dim: None,
            min_vote_share: 0.2,
            min_cluster_support: 0.01,
            min_bandwidth: 0.2,
            complete_orphans: true,
            compute_mode3: true,
        }
    }
}

impl Arofac2Config {
    pub fn validate(&self) -> Result<()> {
        if self.restarts_per_mode < 10 {
            return Err(Error::InvalidArgument(format!(
                "restarts_per_mode must be at least 10, got {}",
                self.restarts_per_mode
            )));
        }
        if !(self.min_vote_share > 0.0 && self.min_vote_share < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "min_vote_share must lie in (0, 1), got {}",
                self.min_vote_share
            )));
        }
        if !(0.0..1.0).contains(&self.min_cluster_support) {
            return Err(Error::InvalidArgument(format!(
                "min_cluster_support must lie in [0, 1), got {}",
                self.min_cluster_support
            )));
        }
        if !(0.0..=1.0).contains(&self.min_bandwidth) {
            return Err(Error::InvalidArgument(format!(
                "min_bandwidth must lie in [0, 1], got {}",
                self.min_bandwidth
            )));
        }
        self.findrankone.validate()
    }

    pub fn span_options(&self) -> SpanOptions {
        SpanOptions {
            target_dim: self.span_target_dim,
            energy_tol: self.span_energy_tol,
        }
    }
}

/// Closeness-weighted co-occurrence counts between two clusterings.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteMatrix {
    pub counts: DMatrix<f64>,
}

impl VoteMatrix {
    /// One vote of weight `1 / (1 + d_a + d_b)` per pair whose components are
    /// both retained by their clusterings. Pair `p` is point `offset_a + p` of
    /// `clusters_a` and point `offset_b + p` of `clusters_b`.
    pub fn from_pairs(
        n_pairs: usize,
        clusters_a: &ClusterResult,
        offset_a: usize,
        clusters_b: &ClusterResult,
        offset_b: usize,
    ) -> Result<Self> {
        if offset_a + n_pairs > clusters_a.labels.len() || offset_b + n_pairs > clusters_b.labels.len() {
            return Err(Error::DimensionMismatch(
                "clusterings hold fewer points than the pair list".into(),
            ));
        }
        let mut counts = DMatrix::zeros(clusters_a.count, clusters_b.count);
        for p in 0..n_pairs {
            if let (Some((ia, da)), Some((ib, db))) =
                (clusters_a.member(offset_a + p), clusters_b.member(offset_b + p))
            {
                counts[(ia, ib)] += 1.0 / (1.0 + da + db);
            }
        }
        Ok(Self { counts })
    }
}

/// A cluster pair the greedy matcher considered but did not accept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedLink {
    pub a: usize,
    pub b: usize,
    pub votes: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linkage {
    pub links: Vec<(usize, usize)>,
    pub rejected: Vec<RejectedLink>,
    pub votes: VoteMatrix,
}

/// Links clusters of `u` components to clusters of `v` components.
///
/// `clusters_a` and `clusters_b` must have been built from the `u` and `v`
/// components of `pairs`, in order.
///
/// Greedy maximum matching on the vote matrix: the largest remaining entry is
/// taken and its row and column struck. A taken link stands only if its votes
/// reach `min_vote_share` of both its row total and its column total. A row
/// whose votes all went to an already struck column is reported as rejected
/// rather than linked elsewhere.
pub fn link_pairs(
    pairs: &[CandidatePair],
    clusters_a: &ClusterResult,
    clusters_b: &ClusterResult,
    min_vote_share: f64,
) -> Result<Linkage> {
    if clusters_a.count == 0 || clusters_b.count == 0 {
        return Err(Error::Empty("clusters"));
    }
    link_pairs_at(pairs.len(), clusters_a, 0, clusters_b, 0, min_vote_share)
}

fn link_pairs_at(
    n_pairs: usize,
    clusters_a: &ClusterResult,
    offset_a: usize,
    clusters_b: &ClusterResult,
    offset_b: usize,
    min_vote_share: f64,
) -> Result<Linkage> {
    if clusters_a.count == 0 || clusters_b.count == 0 {
        return Err(Error::Empty("clusters"));
    }
    let votes = VoteMatrix::from_pairs(n_pairs, clusters_a, offset_a, clusters_b, offset_b)?;
    link_votes(votes, min_vote_share)
}

/// Greedy linkage on a given vote matrix, see [`link_pairs`].
pub fn link_votes(votes: VoteMatrix, min_vote_share: f64) -> Result<Linkage> {
    let m = &votes.counts;
    let (ra, rb) = m.shape();
    let row_tot: Vec<f64> = (0..ra).map(|i| m.row(i).sum()).collect();
    let col_tot: Vec<f64> = (0..rb).map(|j| m.column(j).sum()).collect();
    let mut row_used = vec![false; ra];
    let mut col_used = vec![false; rb];
    let mut links = Vec::new();
    let mut rejected = Vec::new();

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..ra).filter(|&i| !row_used[i]) {
            for j in (0..rb).filter(|&j| !col_used[j]) {
                let x = m[(i, j)];
                if x > 0.0 && best.is_none_or(|(_, _, bx)| x > bx) {
                    best = Some((i, j, x));
                }
            }
        }
        let Some((i, j, x)) = best else { break };
        row_used[i] = true;
        col_used[j] = true;
        if x >= min_vote_share * row_tot[i] && x >= min_vote_share * col_tot[j] {
            links.push((i, j));
        } else {
            rejected.push(RejectedLink {
                a: i,
                b: j,
                votes: x,
                reason: format!(
                    "votes {x:.3} below {min_vote_share} of row total {:.3} or column total {:.3}",
                    row_tot[i], col_tot[j]
                ),
            });
        }
    }

    for i in (0..ra).filter(|&i| !row_used[i] && row_tot[i] > 0.0) {
        let (j, x) = (0..rb)
            .map(|j| (j, m[(i, j)]))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty row");
        rejected.push(RejectedLink {
            a: i,
            b: j,
            votes: x,
            reason: format!("column {j} already linked"),
        });
    }

    if links.is_empty() {
        return Err(Error::NoLink);
    }
    links.sort_unstable();
    Ok(Linkage {
        links,
        rejected,
        votes,
    })
}

/// Cluster-index triples `(mode 1, mode 2, mode 3)` plus mode-2 clusters that
/// were linked on only one side.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleLinkage {
    pub triples: Vec<(usize, usize, usize)>,
    pub orphans: Vec<Orphan>,
    pub link12: Linkage,
    pub link32: Linkage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orphan {
    pub mode2_cluster: usize,
    pub mode1_cluster: Option<usize>,
    pub mode3_cluster: Option<usize>,
    /// Set when the missing component was fitted and the factor kept.
    #[serde(default)]
    pub completed: bool,
}

/// Joins the 1↔2 and 3↔2 linkages on their shared mode-2 cluster.
///
/// `clusters_2` holds the `v` components of `pairs_12` followed by those of
/// `pairs_32`.
pub fn link_triples(
    pairs_12: &[CandidatePair],
    pairs_32: &[CandidatePair],
    clusters_1: &ClusterResult,
    clusters_2: &ClusterResult,
    clusters_3: &ClusterResult,
    min_vote_share: f64,
) -> Result<TripleLinkage> {
    let link12 = link_pairs_at(pairs_12.len(), clusters_1, 0, clusters_2, 0, min_vote_share)?;
    let link32 = link_pairs_at(
        pairs_32.len(),
        clusters_3,
        0,
        clusters_2,
        pairs_12.len(),
        min_vote_share,
    )?;
    let mut triples = Vec::new();
    let mut orphans = Vec::new();
    for j in 0..clusters_2.count {
        let i = link12.links.iter().find(|l| l.1 == j).map(|l| l.0);
        let k = link32.links.iter().find(|l| l.1 == j).map(|l| l.0);
        match (i, k) {
            (Some(i), Some(k)) => triples.push((i, j, k)),
            (None, None) => {}
            _ => orphans.push(Orphan {
                mode2_cluster: j,
                mode1_cluster: i,
                mode3_cluster: k,
                completed: false,
            }),
        }
    }
    Ok(TripleLinkage {
        triples,
        orphans,
        link12,
        link32,
    })
}

/// Columns of the per-slice weights of `pairs` against the slices of `t`,
/// one unit vector per pair, or `None` for an ill-posed fit.
fn fitted_directions(t: &Tensor3, pairs: &[(Vec<f64>, Vec<f64>)]) -> Option<Vec<Option<Vec<f64>>>> {
    let rows = fit_slice_weights(t, pairs).ok()?;
    Some(
        (0..pairs.len())
            .map(|l| canonicalize(&rows.iter().map(|r| r[l]).collect::<Vec<_>>()).ok())
            .collect(),
    )
}

/// Condition number of the Gram matrix of unit rank-one tensors.
fn gram_condition(components: &[(Vec<f64>, Vec<f64>, Vec<f64>)]) -> f64 {
    let r = components.len();
    let gram = DMatrix::from_fn(r, r, |x, y| {
        let (ux, vx, wx) = &components[x];
        let (uy, vy, wy) = &components[y];
        dot(ux, uy) * dot(vx, vy) * dot(wx, wy)
    });
    let eig = gram.symmetric_eigen();
    let (max, min) = (eig.eigenvalues.max(), eig.eigenvalues.min());
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Fits the missing component of every orphan against the slices along
/// that mode, jointly with the linked factors, and appends the completed
/// factors that keep the weight fit well conditioned.
fn complete_orphans(
    a: &Tensor3,
    components: &mut Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    orphans: &mut [Orphan],
    clusters: [&ClusterResult; 3],
) {
    let [c1, c2, c3] = clusters;
    let linked = components.len();

    // orphans with (u, v) need w: fit per mode-3 slice
    let with_u: Vec<usize> = (0..orphans.len()).filter(|&o| orphans[o].mode1_cluster.is_some()).collect();
    let mut pairs_uv: Vec<(Vec<f64>, Vec<f64>)> = components.iter().map(|(u, v, _)| (u.clone(), v.clone())).collect();
    pairs_uv.extend(with_u.iter().map(|&o| {
        let i = orphans[o].mode1_cluster.expect("filtered");
        (c1.centers[i].clone(), c2.centers[orphans[o].mode2_cluster].clone())
    }));
    // orphans with (w, v) need u: fit per mode-1 slice of the (3, 2, 1) permutation
    let with_w: Vec<usize> = (0..orphans.len()).filter(|&o| orphans[o].mode3_cluster.is_some()).collect();
    let mut pairs_wv: Vec<(Vec<f64>, Vec<f64>)> = components.iter().map(|(_, v, w)| (w.clone(), v.clone())).collect();
    pairs_wv.extend(with_w.iter().map(|&o| {
        let k = orphans[o].mode3_cluster.expect("filtered");
        (c3.centers[k].clone(), c2.centers[orphans[o].mode2_cluster].clone())
    }));

    let mut candidates: Vec<(usize, (Vec<f64>, Vec<f64>, Vec<f64>))> = Vec::new();
    if !with_u.is_empty() {
        if let Some(ws) = fitted_directions(a, &pairs_uv) {
            for (slot, &o) in with_u.iter().enumerate() {
                if let Some(w) = ws[linked + slot].clone() {
                    let (u, v) = pairs_uv[linked + slot].clone();
                    candidates.push((o, (u, v, w)));
                }
            }
        }
    }
    if !with_w.is_empty() {
        let swapped = a.permute_modes([3, 2, 1]).expect("valid permutation");
        if let Some(us) = fitted_directions(&swapped, &pairs_wv) {
            for (slot, &o) in with_w.iter().enumerate() {
                if let Some(u) = us[linked + slot].clone() {
                    let (w, v) = pairs_wv[linked + slot].clone();
                    candidates.push((o, (u, v, w)));
                }
            }
        }
    }

    candidates.sort_by_key(|(o, _)| orphans[*o].mode2_cluster);
    for (o, component) in candidates {
        components.push(component);
        if gram_condition(components) < MAX_CONDITION / 100.0 {
            orphans[o].completed = true;
        } else {
            components.pop();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric positive definite solve with a condition-number guard.
fn solve_gram(gram: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min >= MAX_CONDITION {
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::IllConditioned { cond });
    }
    let chol = gram.cholesky().ok_or(Error::IllConditioned { cond: max / min })?;
    Ok(chol.solve(&rhs))
}

/// Least-squares weights `c` minimizing `‖A − Σ c_l u_l⊗v_l⊗w_l‖_F`.
pub fn fit_weights(a: &Tensor3, triples: &[(Vec<f64>, Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
    if triples.is_empty() {
        return Err(Error::Empty("triple list"));
    }
    let [n1, n2, n3] = a.dims();
    for (l, (u, v, w)) in triples.iter().enumerate() {
        if u.len() != n1 || v.len() != n2 || w.len() != n3 {
            return Err(Error::DimensionMismatch(format!(
                "triple {l} has lengths ({}, {}, {}), tensor is {:?}",
                u.len(),
                v.len(),
                w.len(),
                a.dims()
            )));
        }
    }
    let r = triples.len();
    let gram = DMatrix::from_fn(r, r, |x, y| {
        let (ux, vx, wx) = &triples[x];
        let (uy, vy, wy) = &triples[y];
        dot(ux, uy) * dot(vx, vy) * dot(wx, wy)
    });
    let rhs = DVector::from_iterator(r, triples.iter().map(|(u, v, w)| contract(a, u, v, w)));
    Ok(solve_gram(gram, rhs)?.iter().copied().collect())
}

/// `Σ_ijk a_ijk u_i v_j w_k`.
fn contract(a: &Tensor3, u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    let [n1, n2, _] = a.dims();
    a.as_slice()
        .chunks(n1 * n2)
        .zip(w)
        .map(|(slice, wk)| {
            wk * slice
                .chunks(n2)
                .zip(u)
                .map(|(row, ui)| ui * dot(row, v))
                .sum::<f64>()
        })
        .sum()
}

/// Per-slice diagonal weights `W_k` of `A_k ≈ U·diag(W_k)·Vᵀ`, one row per slice.
pub fn fit_slice_weights(a: &Tensor3, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<Vec<f64>>> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair list"));
    }
    let [n1, n2, n3] = a.dims();
    if pairs.iter().any(|(u, v)| u.len() != n1 || v.len() != n2) {
        return Err(Error::DimensionMismatch("component lengths do not match tensor".into()));
    }
    let r = pairs.len();
    let gram = DMatrix::from_fn(r, r, |x, y| dot(&pairs[x].0, &pairs[y].0) * dot(&pairs[x].1, &pairs[y].1));
    let eig = gram.clone().symmetric_eigen();
    let (max, min) = (eig.eigenvalues.max(), eig.eigenvalues.min());
    if !(min > 0.0) || max / min >= MAX_CONDITION {
        return Err(Error::IllConditioned {
            cond: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    let chol = gram.cholesky().ok_or(Error::IllConditioned { cond: max / min })?;
    let mut out = Vec::with_capacity(n3);
    for k in 0..n3 {
        let unit_w: Vec<f64> = (0..n3).map(|x| if x == k { 1.0 } else { 0.0 }).collect();
        let rhs = DVector::from_iterator(r, pairs.iter().map(|(u, v)| contract(a, u, v, &unit_w)));
        out.push(chol.solve(&rhs).iter().copied().collect());
    }
    Ok(out)
}

/// Per-mode diagnostics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDiagnostics {
    pub mode: usize,
    pub candidates: usize,
    pub restarts: usize,
    pub convergence_rate: f64,
    pub span_dim: usize,
    pub bandwidth: f64,
    pub clusters: usize,
    pub support: Vec<usize>,
    pub inertia: Vec<f64>,
}

impl ModeDiagnostics {
    fn new(mode: usize, sets: &[&CandidateSet], clusters: &ClusterResult) -> Self {
        let candidates = sets.iter().map(|s| s.pairs.len()).sum();
        let restarts = sets.iter().map(|s| s.restarts).sum::<usize>();
        Self {
            mode,
            candidates,
            restarts,
            convergence_rate: candidates as f64 / restarts as f64,
            span_dim: sets.iter().map(|s| s.span_dim).max().unwrap_or(0),
            bandwidth: clusters.bandwidth,
            clusters: clusters.count,
            support: clusters.support.clone(),
            inertia: clusters.inertia.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub modes: Vec<ModeDiagnostics>,
    pub orphans: Vec<Orphan>,
    pub rejected_links: Vec<RejectedLink>,
}

#[derive(Debug, Clone)]
pub struct Arofac2Output {
    pub decomposition: Decomposition,
    pub diagnostics: Diagnostics,
}

/// Rank and CP decomposition of `a`; see [`arofac2_detailed`].
pub fn arofac2(a: &Tensor3, cfg: &Arofac2Config, seed: u64) -> Result<Decomposition> {
    arofac2_detailed(a, cfg, seed).map(|o| o.decomposition)
}

/// Runs the full pipeline and keeps the per-mode diagnostics.
///
/// The detected rank is the number of linked triples, plus the completed
/// orphans when `complete_orphans` is set. A zero tensor yields rank 0.
pub fn arofac2_detailed(a: &Tensor3, cfg: &Arofac2Config, seed: u64) -> Result<Arofac2Output> {
    cfg.validate()?;
    if a.dims().iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument(format!(
            "every dimension must be at least 2, got {:?}",
            a.dims()
        )));
    }
    if a.frobenius_norm() == 0.0 {
        return Ok(Arofac2Output {
            decomposition: Decomposition::empty(),
            diagnostics: Diagnostics {
                modes: Vec::new(),
                orphans: Vec::new(),
                rejected_links: Vec::new(),
            },
        });
    }

    let opts = cfg.span_options();
    let cand12 = collect_candidates(a, (1, 2), cfg.restarts_per_mode, &opts, &cfg.findrankone, seed)
        .map_err(|e| e.at(Stage::Candidates12))?;

    if !cfg.compute_mode3 {
        return simultaneous_svd(a, cfg, &cand12);
    }

    let cand32 = collect_candidates(a, (3, 2), cfg.restarts_per_mode, &opts, &cfg.findrankone, seed)
        .map_err(|e| e.at(Stage::Candidates32))?;

    let us: Vec<Vec<f64>> = cand12.pairs.iter().map(|p| p.u.clone()).collect();
    let ws: Vec<Vec<f64>> = cand32.pairs.iter().map(|p| p.u.clone()).collect();
    let vs: Vec<Vec<f64>> = cand12
        .pairs
        .iter()
        .chain(&cand32.pairs)
        .map(|p| p.v.clone())
        .collect();
    let cluster = |pts: &[Vec<f64>]| {
        cluster_components(pts, cfg.min_cluster_support, cfg.min_bandwidth).map_err(|e| e.at(Stage::Clustering))
    };
    let (c1, c2, c3) = (cluster(&us)?, cluster(&vs)?, cluster(&ws)?);

    let linkage = link_triples(&cand12.pairs, &cand32.pairs, &c1, &c2, &c3, cfg.min_vote_share)
        .map_err(|e| e.at(Stage::Linkage))?;

    let mut components: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = linkage
        .triples
        .iter()
        .map(|&(i, j, k)| (c1.centers[i].clone(), c2.centers[j].clone(), c3.centers[k].clone()))
        .collect();
    let mut orphans = linkage.orphans.clone();
    if cfg.complete_orphans && !orphans.is_empty() {
        complete_orphans(a, &mut components, &mut orphans, [&c1, &c2, &c3]);
    }

    let diagnostics = Diagnostics {
        modes: vec![
            ModeDiagnostics::new(1, &[&cand12], &c1),
            ModeDiagnostics::new(2, &[&cand12, &cand32], &c2),
            ModeDiagnostics::new(3, &[&cand32], &c3),
        ],
        orphans,
        rejected_links: linkage
            .link12
            .rejected
            .iter()
            .chain(&linkage.link32.rejected)
            .cloned()
            .collect(),
    };

    if components.is_empty() {
        return Err(Error::NoLink.at(Stage::Linkage));
    }
    let weights = fit_weights(a, &components).map_err(|e| e.at(Stage::Weights))?;
    let factors = components
        .into_iter()
        .zip(weights)
        .map(|((u, v, w), weight)| Factor { u, v, w, weight })
        .collect();
    let decomposition = Decomposition::from_factors(factors).with_fit(a)?;
    Ok(Arofac2Output {
        decomposition,
        diagnostics,
    })
}

fn simultaneous_svd(a: &Tensor3, cfg: &Arofac2Config, cand12: &CandidateSet) -> Result<Arofac2Output> {
    let us: Vec<Vec<f64>> = cand12.pairs.iter().map(|p| p.u.clone()).collect();
    let vs: Vec<Vec<f64>> = cand12.pairs.iter().map(|p| p.v.clone()).collect();
    let cluster = |pts: &[Vec<f64>]| {
        cluster_components(pts, cfg.min_cluster_support, cfg.min_bandwidth).map_err(|e| e.at(Stage::Clustering))
    };
    let (c1, c2) = (cluster(&us)?, cluster(&vs)?);
    let link = link_pairs(&cand12.pairs, &c1, &c2, cfg.min_vote_share).map_err(|e| e.at(Stage::Linkage))?;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = link
        .links
        .iter()
        .map(|&(i, j)| (c1.centers[i].clone(), c2.centers[j].clone()))
        .collect();
    let slice_weights = fit_slice_weights(a, &pairs).map_err(|e| e.at(Stage::Weights))?;

    // each factor's weights across slices, split into direction and magnitude
    let factors = pairs
        .into_iter()
        .enumerate()
        .map(|(l, (u, v))| {
            let col: Vec<f64> = slice_weights.iter().map(|row| row[l]).collect();
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            let (w, weight) = if norm > 0.0 {
                let w = canonicalize(&col).expect("nonzero column");
                let weight = norm * if dot(&w, &col) < 0.0 { -1.0 } else { 1.0 };
                (w, weight)
            } else {
                (vec![0.0; col.len()], 0.0)
            };
            Factor { u, v, w, weight }
        })
        .collect();
    let mut decomposition = Decomposition::from_factors(factors).with_fit(a)?;
    decomposition.slice_weights = Some(slice_weights);
    Ok(Arofac2Output {
        decomposition,
        diagnostics: Diagnostics {
            modes: vec![
                ModeDiagnostics::new(1, &[cand12], &c1),
                ModeDiagnostics::new(2, &[cand12], &c2),
            ],
            orphans: Vec::new(),
            rejected_links: link.rejected,
        },
    })
}
