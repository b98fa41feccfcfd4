//! Mean-shift clustering of candidate component vectors.
//!
//! Candidates are only determined up to sign, so distances are axial,
//! `min(‖x − y‖, ‖x + y‖)`, and points are sign-aligned with the current
//! estimate before averaging. Vectors and centers are reported in canonical
//! form. Mean shift with a Gaussian kernel finds the density modes; their
//! number is the cluster count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_SHIFT_ITERS: usize = 300;
const SHIFT_TOL: f64 = 1e-6;
const MIN_BANDWIDTH: f64 = 1e-3;
const MAX_BANDWIDTH: f64 = 1.0;
pub const DEFAULT_MIN_SUPPORT: f64 = 0.02;

/// Unit-norm copy of `x`, negated when its largest-magnitude entry is
/// negative. The first of several equally large entries decides.
pub fn canonicalize(x: &[f64]) -> Result<Vec<f64>> {
    let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidArgument("cannot canonicalize a zero vector".into()));
    }
    let mut pivot = 0;
    for (i, a) in x.iter().enumerate() {
        if a.abs() > x[pivot].abs() {
            pivot = i;
        }
    }
    let s = if x[pivot] < 0.0 { -1.0 } else { 1.0 } / norm;
    Ok(x.iter().map(|a| a * s).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared axial distance `min(‖a − b‖², ‖a + b‖²)`.
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    minus.min(plus)
}

fn sign_towards(p: &[f64], y: &[f64]) -> f64 {
    if dot(p, y) < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Half the median distance from each point to its `⌈√N⌉`-th nearest
/// neighbour, the point itself counting as the first, clamped to
/// `[1e-3, 1]`.
pub fn estimate_bandwidth(points: &[Vec<f64>]) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "bandwidth estimation needs at least 2 points, got {n}"
        )));
    }
    let k = (n as f64).sqrt().ceil() as usize;
    let kth: Vec<f64> = points
        .iter()
        .map(|p| {
            let mut d: Vec<f64> = points.iter().map(|q| dist(p, q)).collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect();
    Ok((0.5 * median(kth)).clamp(MIN_BANDWIDTH, MAX_BANDWIDTH))
}

/// Output of [`MeanShift::fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Unit-norm cluster centers, largest support first.
    pub centers: Vec<Vec<f64>>,
    /// Nearest center of every input point.
    pub labels: Vec<usize>,
    /// Distance of every input point to its labelled center.
    pub distances: Vec<f64>,
    /// False for points whose own density mode was dropped for low support.
    pub retained: Vec<bool>,
    /// Number of points whose mode merged into each center.
    pub support: Vec<usize>,
    /// Mean angle (radians) between each center and its retained points.
    pub inertia: Vec<f64>,
    pub count: usize,
    pub bandwidth: f64,
}

impl ClusterResult {
    /// Label and center distance of input point `idx`, if it was retained.
    pub fn member(&self, idx: usize) -> Option<(usize, f64)> {
        self.retained[idx].then(|| (self.labels[idx], self.distances[idx]))
    }

    /// Nearest center of `x` and the distance to it.
    pub fn assign(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (c, center) in self.centers.iter().enumerate() {
            let d = dist(x, center);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }
}

/// Gaussian-kernel mean shift.
#[derive(Debug, Clone, Copy)]
pub struct MeanShift {
    pub bandwidth: f64,
    /// Modes closer than this are merged.
    pub merge_tol: f64,
    /// Modes attracting fewer than this fraction of the points are dropped.
    pub min_support: f64,
}

impl MeanShift {
    pub fn new(bandwidth: f64) -> Self {
        Self {
            bandwidth,
            merge_tol: bandwidth / 2.0,
            min_support: DEFAULT_MIN_SUPPORT,
        }
    }

    /// Kernel density (unnormalized) of `points` at `y`.
    pub fn density(&self, points: &[Vec<f64>], y: &[f64]) -> f64 {
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        points.iter().map(|p| (-dist2(p, y) * inv).exp()).sum()
    }

    /// One mean-shift update of `y`. `None` if every kernel weight underflows.
    pub fn shift(&self, points: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let mut acc = vec![0.0; y.len()];
        let mut total = 0.0;
        for p in points {
            let k = (-dist2(p, y) * inv).exp();
            if k > 0.0 {
                total += k;
                let ks = k * sign_towards(p, y);
                for (a, x) in acc.iter_mut().zip(p) {
                    *a += ks * x;
                }
            }
        }
        if total == 0.0 {
            return None;
        }
        acc.iter_mut().for_each(|a| *a /= total);
        Some(acc)
    }

    /// The density mode reached from `start`.
    pub fn ascend(&self, points: &[Vec<f64>], start: &[f64]) -> Vec<f64> {
        let mut y = start.to_vec();
        for _ in 0..MAX_SHIFT_ITERS {
            let Some(next) = self.shift(points, &y) else { break };
            let step = dist(&next, &y);
            y = next;
            if step < SHIFT_TOL {
                break;
            }
        }
        y
    }

    pub fn fit(&self, points: &[Vec<f64>]) -> Result<ClusterResult> {
        if points.is_empty() {
            return Err(Error::Empty("point set"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch("points differ in length".into()));
        }

        let modes: Vec<Vec<f64>> = points
            .iter()
            .map(|p| {
                let m = self.ascend(points, p);
                canonicalize(&m).unwrap_or(m)
            })
            .collect();

        // merge in lexicographic order so the grouping ignores input order
        let mut order: Vec<usize> = (0..modes.len()).collect();
        order.sort_by(|&a, &b| {
            modes[a]
                .iter()
                .zip(&modes[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut group_of = vec![0usize; modes.len()];
        for &i in &order {
            let hit = groups
                .iter()
                .position(|g| dist(&modes[g[0]], &modes[i]) <= self.merge_tol);
            match hit {
                Some(g) => {
                    groups[g].push(i);
                    group_of[i] = g;
                }
                None => {
                    group_of[i] = groups.len();
                    groups.push(vec![i]);
                }
            }
        }

        let floor = self.min_support * points.len() as f64;
        let mut kept: Vec<(Vec<f64>, usize, usize)> = Vec::new();
        let mut kept_index = vec![None; groups.len()];
        for (g, members) in groups.iter().enumerate() {
            if (members.len() as f64) < floor {
                continue;
            }
            // the mean of the members themselves; the mode carries a small
            // pull from the kernel tails of the other clusters
            let lead = &modes[members[0]];
            let mut c = vec![0.0; dim];
            for &i in members {
                let s = sign_towards(&points[i], lead);
                for (a, x) in c.iter_mut().zip(&points[i]) {
                    *a += s * x;
                }
            }
            let Ok(c) = canonicalize(&c) else { continue };
            kept_index[g] = Some(kept.len());
            kept.push((c, members.len(), g));
        }
        if kept.is_empty() {
            return Err(Error::Empty("clusters above the minimum support"));
        }

        // largest support first, ties broken by the lexicographic group order
        let mut rank: Vec<usize> = (0..kept.len()).collect();
        rank.sort_by(|&a, &b| kept[b].1.cmp(&kept[a].1).then(kept[a].2.cmp(&kept[b].2)));
        let mut position = vec![0usize; kept.len()];
        for (pos, &k) in rank.iter().enumerate() {
            position[k] = pos;
        }
        let centers: Vec<Vec<f64>> = rank.iter().map(|&k| kept[k].0.clone()).collect();
        let support: Vec<usize> = rank.iter().map(|&k| kept[k].1).collect();

        let mut result = ClusterResult {
            count: centers.len(),
            centers,
            labels: Vec::with_capacity(points.len()),
            distances: Vec::with_capacity(points.len()),
            retained: Vec::with_capacity(points.len()),
            support,
            inertia: Vec::new(),
            bandwidth: self.bandwidth,
        };
        let mut angle_sum = vec![0.0; result.count];
        let mut angle_n = vec![0usize; result.count];
        for (i, p) in points.iter().enumerate() {
            let (label, d) = result.assign(p);
            let retained = kept_index[group_of[i]].map(|k| position[k]) == Some(label);
            if retained {
                let cos: f64 = p.iter().zip(&result.centers[label]).map(|(a, b)| a * b).sum();
                let pn = p.iter().map(|a| a * a).sum::<f64>().sqrt();
                angle_sum[label] += (cos.abs() / pn).clamp(0.0, 1.0).acos();
                angle_n[label] += 1;
            }
            result.labels.push(label);
            result.distances.push(d);
            result.retained.push(retained);
        }
        result.inertia = angle_sum
            .iter()
            .zip(&angle_n)
            .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
            .collect();
        Ok(result)
    }
}

/// Mean shift with bandwidth `h`, merge tolerance `merge_tol` and the default
/// minimum support.
pub fn mean_shift(points: &[Vec<f64>], h: f64, merge_tol: f64) -> Result<ClusterResult> {
    MeanShift {
        bandwidth: h,
        merge_tol,
        min_support: DEFAULT_MIN_SUPPORT,
    }
    .fit(points)
}

/// Canonicalizes `raw`, estimates a bandwidth, raises it to at least
/// `min_bandwidth` and runs mean shift.
pub fn cluster_components(raw: &[Vec<f64>], min_support: f64, min_bandwidth: f64) -> Result<ClusterResult> {
    let points = raw
        .iter()
        .map(|x| canonicalize(x))
        .collect::<Result<Vec<_>>>()?;
    let h = if points.len() >= 2 {
        estimate_bandwidth(&points)?
    } else {
        MIN_BANDWIDTH
    }
    .max(min_bandwidth);
    MeanShift {
        min_support,
        ..MeanShift::new(h)
    }
    .fit(&points)
}
