//! Density-based clustering of the ensemble and the auxiliary-construction
//! heuristics built on it.
//!
//! Clustering runs OPTICS (unbounded max-eps) over the particle positions and
//! extracts clusters from the reachability plot by ξ-steepness. The extracted
//! hierarchy is flattened leaf-first: candidates are considered in discovery
//! order, under which nested clusters close before their parents, and a
//! candidate spanning the whole plot counts only when the plot is flat to
//! within ξ (otherwise it is the trivial root). Cluster moments feed either a
//! single Gaussian (the most skewed cluster) or a full mixture with
//! size-proportional weights.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{Mat, SymMatrix};
use crate::models::{GaussianDensity, GaussianMixtureDensity, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptError {
    /// Fewer points than `min_pts`.
    TooFewPoints,
    /// ξ-extraction produced no cluster.
    NoClusters,
    Model(ModelError),
}

impl fmt::Display for AdaptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdaptError::TooFewPoints => f.write_str("need at least min_pts points to cluster"),
            AdaptError::NoClusters => f.write_str("no clusters were extracted"),
            AdaptError::Model(e) => write!(f, "cluster moments rejected: {e}"),
        }
    }
}

impl From<ModelError> for AdaptError {
    fn from(e: ModelError) -> Self {
        AdaptError::Model(e)
    }
}

/// Sample moments of one extracted cluster.
#[derive(Debug, Clone)]
pub struct ClusterStats {
    pub count: usize,
    pub mean: Vec<f64>,
    pub covariance: SymMatrix,
}

/// Cluster assignment of the input points. `labels[i]` is −1 for noise or
/// the cluster index in `0..clusters.len()`.
#[derive(Debug, Clone)]
pub struct ClusterLabeling {
    pub labels: Vec<i32>,
    pub clusters: Vec<ClusterStats>,
    /// Number of points with a nonnegative label.
    pub total_clustered: usize,
}

fn dist(points: &[f64], d: usize, i: usize, j: usize) -> f64 {
    let a = &points[i * d..(i + 1) * d];
    let b = &points[j * d..(j + 1) * d];
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += (x - y) * (x - y);
    }
    libm::sqrt(acc)
}

/// OPTICS ordering, reachability, and predecessors with unbounded max-eps:
/// every point is a core point, so one sweep covers the dataset. The third
/// result maps each point to the point that set its reachability
/// (`usize::MAX` for sweep starts).
fn optics_order(
    points: &[f64],
    k: usize,
    d: usize,
    min_pts: usize,
) -> (Vec<usize>, Vec<f64>, Vec<usize>) {
    // Core distance: min_pts-th nearest neighbor, the point itself included.
    let mut core = vec![0.0; k];
    let mut row = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            row[j] = dist(points, d, i, j);
        }
        row.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
        core[i] = row[min_pts - 1];
    }

    let mut processed = vec![false; k];
    let mut reach = vec![f64::INFINITY; k];
    let mut pred = vec![usize::MAX; k];
    let mut order = Vec::with_capacity(k);
    let mut plot = Vec::with_capacity(k);
    for _ in 0..k {
        // Next point: smallest reachability, ties to the lowest index.
        let mut current = usize::MAX;
        for i in 0..k {
            if !processed[i] && (current == usize::MAX || reach[i] < reach[current]) {
                current = i;
            }
        }
        processed[current] = true;
        order.push(current);
        plot.push(reach[current]);
        for o in 0..k {
            if processed[o] {
                continue;
            }
            let r = core[current].max(dist(points, d, current, o));
            if r < reach[o] {
                reach[o] = r;
                pred[o] = current;
            }
        }
    }
    (order, plot, pred)
}

#[derive(Debug, Clone, Copy)]
struct SteepDownArea {
    start: usize,
    end: usize,
    mib: f64,
}

/// Extend a steep region starting at `start`: it may include up to
/// `min_pts` consecutive non-steep points as long as they do not move in the
/// opposite direction.
fn extend_region(steep: &[bool], opposite: &[bool], start: usize, min_pts: usize) -> usize {
    let n = steep.len();
    let mut non_steep = 0usize;
    let mut end = start;
    let mut i = start;
    while i < n {
        if steep[i] {
            non_steep = 0;
            end = i;
        } else if !opposite[i] {
            non_steep += 1;
            if non_steep > min_pts {
                break;
            }
        } else {
            return end;
        }
        i += 1;
    }
    end
}

fn filter_sdas(sdas: &mut Vec<SteepDownArea>, mib: f64, xic: f64, plot: &[f64]) {
    if mib.is_infinite() {
        sdas.clear();
        return;
    }
    sdas.retain(|sda| mib <= plot[sda.start] * xic);
    for sda in sdas.iter_mut() {
        if mib > sda.mib {
            sda.mib = mib;
        }
    }
}

/// Shrink a candidate from the right until the last point's predecessor lies
/// inside the cluster (or the left border is the higher one). Candidates
/// that shrink away entirely are noise artifacts of the reachability plot
/// and are dropped.
fn correct_predecessor(
    plot: &[f64],
    order: &[usize],
    pred: &[usize],
    s: usize,
    mut e: usize,
) -> Option<(usize, usize)> {
    while s < e {
        if plot[s] > plot[e] {
            return Some((s, e));
        }
        let p_e = pred[order[e]];
        if p_e != usize::MAX && order[s..e].contains(&p_e) {
            return Some((s, e));
        }
        e -= 1;
    }
    None
}

/// Candidate cluster intervals `[start, end]` in ordering space, by the
/// steep-area ξ method over the reachability plot (an ∞ sentinel closes
/// trailing clusters).
fn xi_candidates(
    plot: &[f64],
    order: &[usize],
    pred: &[usize],
    min_pts: usize,
    xi: f64,
) -> Vec<(usize, usize)> {
    let n = plot.len();
    let xic = 1.0 - xi;
    let mut padded = Vec::with_capacity(n + 1);
    padded.extend_from_slice(plot);
    padded.push(f64::INFINITY);

    let steep_up: Vec<bool> = (0..n).map(|i| padded[i] <= padded[i + 1] * xic).collect();
    let steep_down: Vec<bool> = (0..n).map(|i| padded[i] * xic >= padded[i + 1]).collect();
    let upward: Vec<bool> = (0..n).map(|i| padded[i] < padded[i + 1]).collect();
    let downward: Vec<bool> = (0..n).map(|i| padded[i] > padded[i + 1]).collect();

    let mut sdas: Vec<SteepDownArea> = Vec::new();
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut index = 0usize;
    let mut mib = 0.0f64;

    for steep_index in 0..n {
        if !(steep_up[steep_index] || steep_down[steep_index]) || steep_index < index {
            continue;
        }
        for &v in &padded[index..=steep_index] {
            if v > mib {
                mib = v;
            }
        }
        if steep_down[steep_index] {
            filter_sdas(&mut sdas, mib, xic, &padded);
            let d_start = steep_index;
            let d_end = extend_region(&steep_down, &upward, d_start, min_pts);
            sdas.push(SteepDownArea { start: d_start, end: d_end, mib: 0.0 });
            index = d_end + 1;
            mib = padded[index];
        } else {
            filter_sdas(&mut sdas, mib, xic, &padded);
            let u_start = steep_index;
            let u_end = extend_region(&steep_up, &downward, u_start, min_pts);
            index = u_end + 1;
            mib = padded[index];

            let mut found = Vec::new();
            for sda in &sdas {
                let mut c_start = sda.start;
                let mut c_end = u_end;
                // Interior maximum must sit ξ-below the closing wall.
                if padded[c_end + 1] * xic < sda.mib {
                    continue;
                }
                // Align the higher border down to the level of the lower one.
                let d_max = padded[sda.start];
                if d_max * xic >= padded[c_end + 1] {
                    while padded[c_start + 1] > padded[c_end + 1] && c_start < sda.end {
                        c_start += 1;
                    }
                } else if padded[c_end + 1] * xic >= d_max {
                    while padded[c_end] > d_max && c_end > u_start {
                        c_end -= 1;
                    }
                }
                let Some((c_start, c_end)) =
                    correct_predecessor(&padded, order, pred, c_start, c_end)
                else {
                    continue;
                };
                if c_end + 1 - c_start < min_pts {
                    continue;
                }
                if c_start > sda.end || c_end < u_start {
                    continue;
                }
                found.push((c_start, c_end));
            }
            clusters.extend(found.into_iter().rev());
        }
    }
    clusters
}

/// True when every finite reachability in `(start, end]` lies within a ξ
/// ratio of the others.
fn interval_is_flat(plot: &[f64], start: usize, end: usize, xi: f64) -> bool {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &v in &plot[start + 1..=end] {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    !lo.is_finite() || hi * (1.0 - xi) <= lo
}

/// OPTICS clustering with ξ-steepness extraction.
///
/// `points` is row-major K×d. Returns the labeling with per-cluster sample
/// moments; covariances are the unbiased estimates plus a relative jitter of
/// `1e-6·tr(Σ)/d` on the diagonal to keep them positive definite.
pub fn optics_cluster(
    points: &[f64],
    k: usize,
    d: usize,
    min_pts: usize,
    xi: f64,
) -> Result<ClusterLabeling, AdaptError> {
    assert!(min_pts >= 1 && xi > 0.0 && xi < 1.0);
    assert_eq!(points.len(), k * d);
    if k < min_pts {
        return Err(AdaptError::TooFewPoints);
    }
    // Canonical lexicographic ordering makes the result independent of the
    // row order of the input.
    let mut canon: Vec<usize> = (0..k).collect();
    canon.sort_by(|&i, &j| {
        let a = &points[i * d..(i + 1) * d];
        let b = &points[j * d..(j + 1) * d];
        a.partial_cmp(b).expect("points are finite")
    });
    let mut sorted = Vec::with_capacity(k * d);
    for &i in &canon {
        sorted.extend_from_slice(&points[i * d..(i + 1) * d]);
    }
    let points = &sorted[..];

    let (order, plot, pred) = optics_order(points, k, d, min_pts);
    let mut candidates = xi_candidates(&plot, &order, &pred, min_pts, xi);

    // The interval spanning the whole plot is the hierarchy root; it is a
    // real cluster only when the plot has no ξ-significant structure at all.
    candidates.retain(|&(s, e)| !(s == 0 && e == k - 1) || interval_is_flat(&plot, s, e, xi));

    // Flatten the candidate hierarchy by separation sharpness. A candidate
    // whose bounding reachability walls tower over its interior is a
    // genuinely isolated group; the smallest such intervals are the modes
    // and win their ranges first. Shallow candidates are grouping artifacts
    // of ξ-scale noise in the plot; they only claim ranges no sharp
    // candidate needed, largest first so fragments of one diffuse cloud
    // stay together.
    let sharpness = |&(s, e): &(usize, usize)| -> f64 {
        let left = plot[s];
        let right = if e + 1 < k { plot[e + 1] } else { f64::INFINITY };
        let wall = left.min(right);
        let interior =
            plot[s + 1..=e].iter().cloned().filter(|v| v.is_finite()).fold(0.0, f64::max);
        if interior == 0.0 {
            f64::INFINITY
        } else {
            wall / interior
        }
    };
    const SHARP_WALL_RATIO: f64 = 3.0;
    let (mut sharp, mut broad): (Vec<_>, Vec<_>) =
        candidates.iter().copied().partition(|c| sharpness(c) >= SHARP_WALL_RATIO);
    sharp.sort_by(|a, b| (a.1 - a.0).cmp(&(b.1 - b.0)).then(a.0.cmp(&b.0)));
    broad.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));

    let mut order_labels = vec![-1i32; k];
    let mut next = 0i32;
    for &(s, e) in sharp.iter().chain(&broad) {
        if order_labels[s..=e].iter().any(|&l| l >= 0) {
            continue;
        }
        for l in &mut order_labels[s..=e] {
            *l = next;
        }
        next += 1;
    }
    let mut sorted_labels = vec![-1i32; k];
    for (pos, &point) in order.iter().enumerate() {
        sorted_labels[point] = order_labels[pos];
    }
    let mut labels = vec![-1i32; k];
    for i in 0..k {
        labels[canon[i]] = sorted_labels[i];
    }

    let clusters = cluster_moments(points, k, d, &sorted_labels, next as usize)?;
    let total_clustered = labels.iter().filter(|&&l| l >= 0).count();
    Ok(ClusterLabeling { labels, clusters, total_clustered })
}

fn cluster_moments(
    points: &[f64],
    k: usize,
    d: usize,
    labels: &[i32],
    n_clusters: usize,
) -> Result<Vec<ClusterStats>, AdaptError> {
    let mut out = Vec::with_capacity(n_clusters);
    for c in 0..n_clusters as i32 {
        let members: Vec<usize> = (0..k).filter(|&i| labels[i] == c).collect();
        let s_c = members.len();
        let mut mean = vec![0.0; d];
        for &i in &members {
            for j in 0..d {
                mean[j] += points[i * d + j];
            }
        }
        for m in &mut mean {
            *m /= s_c as f64;
        }
        let mut cov = Mat::zeros(d, d);
        if s_c > 1 {
            for &i in &members {
                for a in 0..d {
                    let ua = points[i * d + a] - mean[a];
                    for b in 0..d {
                        cov[(a, b)] += ua * (points[i * d + b] - mean[b]);
                    }
                }
            }
            let denom = (s_c - 1) as f64;
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] /= denom;
                }
            }
        }
        // Relative diagonal jitter, floored so that degenerate clusters
        // (identical points) still yield a positive definite covariance.
        let trace: f64 = (0..d).map(|a| cov[(a, a)]).sum();
        let jitter = (1e-6 * trace / d as f64).max(1e-12);
        for a in 0..d {
            cov[(a, a)] += jitter;
        }
        let covariance =
            SymMatrix::new(cov).map_err(|_| AdaptError::Model(ModelError::CovarianceNotSpd))?;
        out.push(ClusterStats { count: s_c, mean, covariance });
    }
    Ok(out)
}

/// Auxiliary from the most skewed cluster: the one maximizing the covariance
/// condition number, ties broken by size then by lower index.
pub fn adapt_single(labeling: &ClusterLabeling) -> Result<GaussianDensity, AdaptError> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, cluster) in labeling.clusters.iter().enumerate() {
        let skew = cluster
            .covariance
            .cond_spd()
            .map_err(|_| AdaptError::Model(ModelError::CovarianceNotSpd))?;
        let better = match best {
            None => true,
            Some((b, best_skew)) => {
                skew > best_skew
                    || (skew == best_skew && cluster.count > labeling.clusters[b].count)
            }
        };
        if better {
            best = Some((idx, skew));
        }
    }
    let (idx, _) = best.ok_or(AdaptError::NoClusters)?;
    let c = &labeling.clusters[idx];
    GaussianDensity::new(c.mean.clone(), c.covariance.clone()).map_err(AdaptError::from)
}

/// Auxiliary mixture over all clusters with weights `s_c / S`; noise points
/// are excluded from `S`.
pub fn adapt_many(labeling: &ClusterLabeling) -> Result<GaussianMixtureDensity, AdaptError> {
    if labeling.clusters.is_empty() {
        return Err(AdaptError::NoClusters);
    }
    let mut components = Vec::with_capacity(labeling.clusters.len());
    let mut weights = Vec::with_capacity(labeling.clusters.len());
    for c in &labeling.clusters {
        components.push(GaussianDensity::new(c.mean.clone(), c.covariance.clone())?);
        weights.push(c.count as f64 / labeling.total_clustered as f64);
    }
    GaussianMixtureDensity::new(components, weights).map_err(AdaptError::from)
}

/// Which auxiliary-construction heuristic an adaptive run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptScheme {
    Single,
    Many,
}

/// Cluster the points and build the auxiliary for `scheme`, as a mixture
/// either way. Default clustering parameters: min_pts = 5, ξ = 0.05.
pub fn adapt_auxiliary(
    points: &[f64],
    k: usize,
    d: usize,
    scheme: AdaptScheme,
    min_pts: usize,
    xi: f64,
) -> Result<GaussianMixtureDensity, AdaptError> {
    let labeling = optics_cluster(points, k, d, min_pts, xi)?;
    match scheme {
        AdaptScheme::Single => {
            let g = adapt_single(&labeling)?;
            GaussianMixtureDensity::new(vec![g], vec![1.0]).map_err(AdaptError::from)
        }
        AdaptScheme::Many => adapt_many(&labeling),
    }
}
