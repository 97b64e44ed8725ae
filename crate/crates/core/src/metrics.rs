//! Convergence diagnostics: entropic Wasserstein distances between particle
//! clouds, an exact small-instance optimal-transport oracle, the logistic
//! regression KL proxy, and coupling-based contraction estimates.

use alloc::vec;
use core::fmt;

use rand::RngCore;

use crate::integrator::{dqdq_norm, FlowMap, IntegratorError, PhasePoint};
use crate::linalg::LinalgError;
use crate::models::{BlrPosterior, DensityModel, GaussianDensity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsError {
    /// Exact OT is limited to n ≤ 16 points per cloud.
    TooLarge,
    SizeMismatch,
    EmptyCloud,
    /// All particles coincide, so the entropy estimate is undefined.
    DegenerateEnsemble,
    Integrator(IntegratorError),
    Linalg(LinalgError),
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::TooLarge => f.write_str("exact transport supports at most 16 points"),
            MetricsError::SizeMismatch => f.write_str("clouds must have equal sizes"),
            MetricsError::EmptyCloud => f.write_str("cloud has no points"),
            MetricsError::DegenerateEnsemble => {
                f.write_str("all particles coincide; entropy estimate undefined")
            }
            MetricsError::Integrator(e) => write!(f, "flow failure: {e}"),
            MetricsError::Linalg(e) => write!(f, "linear algebra failure: {e}"),
        }
    }
}

impl From<IntegratorError> for MetricsError {
    fn from(e: IntegratorError) -> Self {
        MetricsError::Integrator(e)
    }
}

impl From<LinalgError> for MetricsError {
    fn from(e: LinalgError) -> Self {
        MetricsError::Linalg(e)
    }
}

/// Entropic OT configuration. `blur` has the units of the coordinates; the
/// regularization strength is `blur^p`.
#[derive(Debug, Clone, Copy)]
pub struct OtConfig {
    pub p: u8,
    pub blur: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl OtConfig {
    pub fn new(p: u8, blur: f64) -> Self {
        assert!(p == 1 || p == 2);
        assert!(blur > 0.0);
        OtConfig { p, blur, max_iters: 1000, tol: 1e-9 }
    }

    /// Default blur: 1% of the joint cloud diameter (floored for degenerate
    /// clouds).
    pub fn with_default_blur(p: u8, a: &[f64], b: &[f64], d: usize) -> Self {
        let diam = joint_diameter(a, b, d);
        OtConfig::new(p, (0.01 * diam).max(1e-9))
    }
}

/// Diameter of the union of two flat row-major clouds.
pub fn joint_diameter(a: &[f64], b: &[f64], d: usize) -> f64 {
    let n = a.len() / d;
    let m = b.len() / d;
    let point = |i: usize| -> &[f64] {
        if i < n {
            &a[i * d..(i + 1) * d]
        } else {
            let j = i - n;
            &b[j * d..(j + 1) * d]
        }
    };
    let mut best = 0.0f64;
    for i in 0..n + m {
        for j in i + 1..n + m {
            best = best.max(euclid(point(i), point(j)));
        }
    }
    best
}

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += (a - b) * (a - b);
    }
    libm::sqrt(acc)
}

fn cost(x: &[f64], y: &[f64], p: u8) -> f64 {
    let e = euclid(x, y);
    if p == 1 {
        e
    } else {
        e * e
    }
}

/// Sinkhorn output; `converged` is false when the marginal tolerance was not
/// reached within `max_iters` (the last iterate is still returned).
#[derive(Debug, Clone, Copy)]
pub struct SinkhornResult {
    pub value: f64,
    pub converged: bool,
    pub iters: usize,
}

/// Entropic W_p between uniform empirical measures, computed by log-domain
/// Sinkhorn iterations without debiasing. Bias is on the order of the blur.
pub fn sinkhorn_distance(
    a: &[f64],
    b: &[f64],
    d: usize,
    cfg: &OtConfig,
) -> Result<SinkhornResult, MetricsError> {
    let n = a.len() / d;
    let m = b.len() / d;
    if n == 0 || m == 0 {
        return Err(MetricsError::EmptyCloud);
    }
    let eps_target = libm::pow(cfg.blur, cfg.p as f64);
    let mut c = vec![0.0; n * m];
    let mut max_cost = 0.0f64;
    for i in 0..n {
        for j in 0..m {
            let v = cost(&a[i * d..(i + 1) * d], &b[j * d..(j + 1) * d], cfg.p);
            c[i * m + j] = v;
            max_cost = max_cost.max(v);
        }
    }
    let log_mu = -libm::log(n as f64);
    let log_nu = -libm::log(m as f64);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut scratch = vec![0.0; n.max(m)];
    let mut converged = false;
    let mut iters = 0;
    // Anneal the regularization from the cost scale down to the target;
    // warm-started potentials make small blurs reachable in few sweeps.
    let mut eps = if max_cost > eps_target { max_cost } else { eps_target };
    const STAGE_SWEEPS: usize = 10;
    'outer: loop {
        let last_stage = eps <= eps_target;
        let mut stage_iters = 0;
        while iters < cfg.max_iters {
            iters += 1;
            stage_iters += 1;
            // f-update makes the row marginals exact.
            for i in 0..n {
                for j in 0..m {
                    scratch[j] = (g[j] - c[i * m + j]) / eps + log_nu;
                }
                f[i] = -eps * log_sum_exp(&scratch[..m]);
            }
            for j in 0..m {
                for i in 0..n {
                    scratch[i] = (f[i] - c[i * m + j]) / eps + log_mu;
                }
                g[j] = -eps * log_sum_exp(&scratch[..n]);
            }
            // After the g-update the column marginals are exact; check rows.
            let mut violation = 0.0f64;
            for i in 0..n {
                let mut row = 0.0;
                for j in 0..m {
                    row += libm::exp((f[i] + g[j] - c[i * m + j]) / eps + log_mu + log_nu);
                }
                violation = violation.max((row - libm::exp(log_mu)).abs());
            }
            if violation <= cfg.tol {
                if last_stage {
                    converged = true;
                }
                break;
            }
            if !last_stage && stage_iters >= STAGE_SWEEPS {
                break;
            }
        }
        if last_stage || iters >= cfg.max_iters {
            break 'outer;
        }
        eps = (eps * 0.5).max(eps_target);
    }
    let eps = eps_target.min(eps);
    let mut transport_cost = 0.0;
    for i in 0..n {
        for j in 0..m {
            let pi = libm::exp((f[i] + g[j] - c[i * m + j]) / eps + log_mu + log_nu);
            transport_cost += pi * c[i * m + j];
        }
    }
    let value = if cfg.p == 1 {
        transport_cost
    } else {
        libm::sqrt(transport_cost.max(0.0))
    };
    Ok(SinkhornResult { value, converged, iters })
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        if x > max {
            max = x;
        }
    }
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|x| libm::exp(x - max)).sum();
    max + libm::log(sum)
}

/// Exact W_p between equal-size uniform empirical measures by an optimal
/// assignment over the n×n cost matrix. Limited to n ≤ 16.
pub fn exact_wasserstein_small(
    a: &[f64],
    b: &[f64],
    d: usize,
    p: u8,
) -> Result<f64, MetricsError> {
    let n = a.len() / d;
    if n != b.len() / d {
        return Err(MetricsError::SizeMismatch);
    }
    if n == 0 {
        return Err(MetricsError::EmptyCloud);
    }
    if n > 16 {
        return Err(MetricsError::TooLarge);
    }
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            c[i * n + j] = cost(&a[i * d..(i + 1) * d], &b[j * d..(j + 1) * d], p);
        }
    }
    let total = hungarian_min_cost(&c, n);
    let mean = total / n as f64;
    Ok(if p == 1 { mean } else { libm::sqrt(mean.max(0.0)) })
}

/// Minimum-cost perfect assignment by the shortest-augmenting-path
/// (Jonker-Volgenant) scheme. `c` is an n×n row-major matrix.
fn hungarian_min_cost(c: &[f64], n: usize) -> f64 {
    // 1-based arrays; column 0 is the virtual source.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut assigned = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        assigned[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned[j0] = assigned[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        total += c[(assigned[j] - 1) * n + (j - 1)];
    }
    total
}

fn digamma(x: f64) -> f64 {
    let mut result = 0.0;
    let mut y = x;
    while y < 6.0 {
        result -= 1.0 / y;
        y += 1.0;
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    result + libm::log(y) - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0))
}

/// Kozachenko-Leonenko k-NN differential entropy estimate (k = 3).
/// Coincident points are jittered deterministically by `1e-12·diameter`.
pub fn knn_entropy(points: &[f64], d: usize) -> Result<f64, MetricsError> {
    const K_NEIGHBOR: usize = 3;
    let n = points.len() / d;
    if n <= K_NEIGHBOR {
        return Err(MetricsError::EmptyCloud);
    }
    let diameter = joint_diameter(points, &[], d);
    if diameter == 0.0 {
        return Err(MetricsError::DegenerateEnsemble);
    }
    let mut pts = points.to_vec();
    jitter_duplicates(&mut pts, n, d, 1e-12 * diameter);

    let mut sum_log = 0.0;
    let mut knn = [0.0f64; K_NEIGHBOR];
    for i in 0..n {
        knn.fill(f64::INFINITY);
        for j in 0..n {
            if i == j {
                continue;
            }
            let dist = euclid(&pts[i * d..(i + 1) * d], &pts[j * d..(j + 1) * d]);
            // Insertion into the running 3 smallest.
            if dist < knn[K_NEIGHBOR - 1] {
                knn[K_NEIGHBOR - 1] = dist;
                for s in (1..K_NEIGHBOR).rev() {
                    if knn[s] < knn[s - 1] {
                        knn.swap(s, s - 1);
                    }
                }
            }
        }
        if knn[K_NEIGHBOR - 1] == 0.0 {
            return Err(MetricsError::DegenerateEnsemble);
        }
        sum_log += libm::log(knn[K_NEIGHBOR - 1]);
    }
    let df = d as f64;
    let log_unit_ball = 0.5 * df * libm::log(core::f64::consts::PI) - libm::lgamma(0.5 * df + 1.0);
    Ok(digamma(n as f64) - digamma(K_NEIGHBOR as f64) + log_unit_ball
        + df / n as f64 * sum_log)
}

fn jitter_duplicates(pts: &mut [f64], n: usize, d: usize, scale: f64) {
    for i in 1..n {
        let (head, tail) = pts.split_at_mut(i * d);
        let row = &mut tail[..d];
        let dup = (0..i).any(|j| &head[j * d..(j + 1) * d] == &row[..]);
        if dup {
            for (c, x) in row.iter_mut().enumerate() {
                *x += scale * ((i + 1) * (c + 1)) as f64;
            }
        }
    }
}

/// KL divergence proxy between a particle cloud and an unnormalized
/// potential: `−Ĥ(cloud) + mean U(qᵢ)`. This drops the unknown log
/// normalizing constant, so only differences are meaningful.
pub fn kl_proxy(points: &[f64], d: usize, model: &dyn DensityModel) -> Result<f64, MetricsError> {
    let n = points.len() / d;
    let entropy = knn_entropy(points, d)?;
    let mut mean_u = 0.0;
    for i in 0..n {
        mean_u += model.potential(&points[i * d..(i + 1) * d]);
    }
    mean_u /= n as f64;
    Ok(-entropy + mean_u)
}

/// KL proxy against a logistic-regression posterior.
pub fn kl_proxy_blr(
    points: &[f64],
    d: usize,
    posterior: &BlrPosterior,
) -> Result<f64, MetricsError> {
    kl_proxy(points, d, posterior)
}

/// Coarse Ricci curvature estimate along a pair of positions.
#[derive(Debug, Clone, Copy)]
pub struct RicciEstimate {
    pub kappa_hat: f64,
    pub w1_upper: f64,
    pub pair_distance: f64,
    pub n_momenta: usize,
}

/// Common-momentum coupling: both motions use the same momentum draw, and
/// the mean endpoint distance upper-bounds W₁ between the two one-step
/// kernels.
pub fn ricci_estimate(
    aux: &dyn DensityModel,
    flow: &dyn FlowMap,
    q1: &[f64],
    q2: &[f64],
    n_momenta: usize,
    rng: &mut dyn RngCore,
) -> Result<RicciEstimate, MetricsError> {
    assert!(n_momenta >= 1);
    let pair_distance = euclid(q1, q2);
    assert!(pair_distance > 0.0, "positions must differ");
    let mut p = vec![0.0; q1.len()];
    let mut acc = 0.0;
    for _ in 0..n_momenta {
        aux.sample_into(rng, &mut p)
            .map_err(|_| MetricsError::EmptyCloud)
            .expect("auxiliary must be sampleable");
        let end1 = flow.propagate(&PhasePoint::new(q1.to_vec(), p.clone()), 1)?;
        let end2 = flow.propagate(&PhasePoint::new(q2.to_vec(), p.clone()), 1)?;
        acc += euclid(&end1.q, &end2.q);
    }
    let w1_upper = acc / n_momenta as f64;
    Ok(RicciEstimate {
        kappa_hat: 1.0 - w1_upper / pair_distance,
        w1_upper,
        pair_distance,
        n_momenta,
    })
}

/// Contraction rate of the exact quadratic flow.
#[derive(Debug, Clone, Copy)]
pub struct ContractionReport {
    /// ‖cos(T·A)‖, the position-block operator norm of the flow.
    pub beta: f64,
    /// `(1+β)/2`: the reported branch of the two-sided geometric rate. The
    /// other branch `1−ε` has an existential ε that is not computed.
    pub beta_prime: f64,
    pub eps_term_unknown: bool,
    pub t_threshold: f64,
    pub below_threshold: bool,
}

pub fn contraction_bound(
    target: &GaussianDensity,
    aux: &GaussianDensity,
    t: f64,
) -> Result<ContractionReport, MetricsError> {
    let s = dqdq_norm(target, aux, t)?;
    Ok(ContractionReport {
        beta: s.beta,
        beta_prime: (1.0 + s.beta) / 2.0,
        eps_term_unknown: true,
        t_threshold: s.t_threshold,
        below_threshold: s.below_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{ExactGaussianFlow, LeapfrogConfig, LeapfrogFlow};
    use alloc::vec::Vec;
    use crate::linalg::SymMatrix;
    use crate::rng::{standard_normal, StreamCtx, StreamKind};

    fn random_cloud(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = StreamCtx::new(seed, 0).stream(0, 0, StreamKind::Reference);
        (0..n * d).map(|_| standard_normal(&mut rng)).collect()
    }

    #[test]
    fn sinkhorn_identical_clouds_is_blur_level() {
        let a = random_cloud(20, 2, 1);
        let cfg = OtConfig::with_default_blur(2, &a, &a, 2);
        let r = sinkhorn_distance(&a, &a, 2, &cfg).unwrap();
        assert!(r.value <= 2.0 * cfg.blur, "{} vs blur {}", r.value, cfg.blur);
    }

    #[test]
    fn sinkhorn_single_points_is_their_distance() {
        let a = [0.0, 0.0];
        let b = [3.0, 4.0];
        let cfg = OtConfig::new(2, 0.01);
        let r = sinkhorn_distance(&a, &b, 2, &cfg).unwrap();
        assert!((r.value - 5.0).abs() < 1e-9);
        let cfg1 = OtConfig::new(1, 0.01);
        let r1 = sinkhorn_distance(&a, &b, 2, &cfg1).unwrap();
        assert!((r1.value - 5.0).abs() < 1e-9);
    }

    #[test]
    fn sinkhorn_is_symmetric() {
        let a = random_cloud(10, 2, 2);
        let b = random_cloud(12, 2, 3);
        // Symmetry is only meaningful once the fixed point is reached, so use
        // blurs at which the iteration fully converges.
        for blur in [0.8, 0.4, 0.2] {
            let mut cfg = OtConfig::new(2, blur);
            cfg.max_iters = 200_000;
            let ab = sinkhorn_distance(&a, &b, 2, &cfg).unwrap();
            let ba = sinkhorn_distance(&b, &a, 2, &cfg).unwrap();
            assert!(ab.converged && ba.converged, "not converged at blur {blur}");
            assert!((ab.value - ba.value).abs() < 1e-9, "blur {blur}");
        }
    }

    #[test]
    fn sinkhorn_triangle_inequality_with_blur_slack() {
        let a = random_cloud(9, 2, 4);
        let b = random_cloud(9, 2, 5);
        let c = random_cloud(9, 2, 6);
        let diam = joint_diameter(&a, &c, 2).max(joint_diameter(&a, &b, 2));
        let cfg = OtConfig::new(2, 0.01 * diam);
        let ab = sinkhorn_distance(&a, &b, 2, &cfg).unwrap().value;
        let bc = sinkhorn_distance(&b, &c, 2, &cfg).unwrap().value;
        let ac = sinkhorn_distance(&a, &c, 2, &cfg).unwrap().value;
        assert!(ac <= ab + bc + 3.0 * cfg.blur);
    }

    #[test]
    fn sinkhorn_matches_exact_oracle_at_small_blur() {
        for seed in [7, 8, 9] {
            let a = random_cloud(8, 2, seed);
            let b = random_cloud(8, 2, seed + 100);
            let diam = joint_diameter(&a, &b, 2);
            let mut cfg = OtConfig::new(2, 0.001 * diam);
            cfg.max_iters = 200_000;
            cfg.tol = 1e-10;
            let approx = sinkhorn_distance(&a, &b, 2, &cfg).unwrap();
            let exact = exact_wasserstein_small(&a, &b, 2, 2).unwrap();
            assert!(
                (approx.value - exact).abs() <= 0.05 * exact,
                "seed {seed}: {} vs {}",
                approx.value,
                exact
            );
        }
    }

    #[test]
    fn exact_wasserstein_trivial_cases() {
        let a = [1.0, 2.0];
        let b = [4.0, 6.0];
        assert!((exact_wasserstein_small(&a, &b, 2, 2).unwrap() - 5.0).abs() < 1e-12);
        // Permuted cloud distance is zero.
        let c = [0.0, 0.0, 1.0, 0.0, 2.0, 0.0];
        let p = [2.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert!(exact_wasserstein_small(&c, &p, 2, 2).unwrap() < 1e-12);
        let big = vec![0.0; 17 * 2];
        assert_eq!(
            exact_wasserstein_small(&big, &big, 2, 2).unwrap_err(),
            MetricsError::TooLarge
        );
    }

    #[test]
    fn hungarian_matches_exhaustive_minimum() {
        // n = 6: check against all 720 permutations.
        let a = random_cloud(6, 2, 11);
        let b = random_cloud(6, 2, 12);
        let n = 6;
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] = cost(&a[i * 2..(i + 1) * 2], &b[j * 2..(j + 1) * 2], 2);
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let total: f64 = (0..n).map(|i| c[i * n + p[i]]).sum();
            if total < best {
                best = total;
            }
        });
        let hungarian = hungarian_min_cost(&c, n);
        assert!((hungarian - best).abs() < 1e-10, "{hungarian} vs {best}");
    }

    fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            visit(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, visit);
            p.swap(k, i);
        }
    }

    #[test]
    fn kl_proxy_is_near_zero_for_exact_samples() {
        // Normalized Gaussian potential, cloud drawn from it: KL ~ 0.
        let g = GaussianDensity::standard(2);
        let mut rng = StreamCtx::new(21, 0).stream(0, 0, StreamKind::Reference);
        let mut pts = vec![0.0; 900 * 2];
        for i in 0..900 {
            g.sample_into(&mut rng, &mut pts[i * 2..(i + 1) * 2]).unwrap();
        }
        let proxy = kl_proxy(&pts, 2, &g).unwrap();
        assert!(proxy.abs() <= 0.1, "proxy {proxy}");
    }

    #[test]
    fn knn_entropy_is_translation_invariant() {
        let pts = random_cloud(200, 3, 31);
        let h0 = knn_entropy(&pts, 3).unwrap();
        let shifted: Vec<f64> = pts.iter().map(|x| x + 17.5).collect();
        let h1 = knn_entropy(&shifted, 3).unwrap();
        assert!((h0 - h1).abs() < 1e-9);
    }

    #[test]
    fn kl_proxy_prefers_the_mode_region() {
        let g = GaussianDensity::standard(2);
        let near = random_cloud(300, 2, 41);
        let far: Vec<f64> = near.iter().map(|x| x + 50.0).collect();
        let p_near = kl_proxy(&near, 2, &g).unwrap();
        let p_far = kl_proxy(&far, 2, &g).unwrap();
        assert!(p_near < p_far);
    }

    #[test]
    fn degenerate_cloud_is_rejected() {
        let pts = vec![1.0; 10 * 2];
        assert_eq!(knn_entropy(&pts, 2).unwrap_err(), MetricsError::DegenerateEnsemble);
    }

    #[test]
    fn duplicate_points_are_jittered_not_rejected() {
        let mut pts = random_cloud(50, 2, 51);
        let dup = pts[..2].to_vec();
        pts.extend_from_slice(&dup);
        pts.extend_from_slice(&dup);
        knn_entropy(&pts, 2).unwrap();
    }

    #[test]
    fn ricci_zero_time_has_zero_curvature() {
        let target = GaussianDensity::standard(1);
        let aux = GaussianDensity::standard(1);
        let flow = ExactGaussianFlow::new(&target, &aux, 0.0).unwrap();
        let mut rng = StreamCtx::new(0, 0).stream(0, 0, StreamKind::Reference);
        let e = ricci_estimate(&aux, &flow, &[0.0], &[1.0], 32, &mut rng).unwrap();
        assert!((e.w1_upper - 1.0).abs() < 1e-14);
        assert!(e.kappa_hat.abs() < 1e-14);
    }

    #[test]
    fn ricci_exact_flow_matches_cos() {
        // Linear dynamics: coupled displacement is deterministic, so the
        // estimate equals |cos(T)| exactly.
        let target = GaussianDensity::standard(1);
        let aux = GaussianDensity::standard(1);
        let t = core::f64::consts::FRAC_PI_3;
        let flow = ExactGaussianFlow::new(&target, &aux, t).unwrap();
        let mut rng = StreamCtx::new(1, 0).stream(0, 0, StreamKind::Reference);
        let e = ricci_estimate(&aux, &flow, &[-0.3], &[0.9], 64, &mut rng).unwrap();
        assert!((e.w1_upper / e.pair_distance - 0.5).abs() < 1e-10);
        assert!((e.kappa_hat - 0.5).abs() < 1e-10);
    }

    #[test]
    fn ricci_leapfrog_close_to_exact_flow() {
        let cov = SymMatrix::diag(&[1.0, 0.5]);
        let target = GaussianDensity::new(vec![0.0, 0.0], cov).unwrap();
        let aux = GaussianDensity::standard(2);
        let t = 0.8;
        let exact = ExactGaussianFlow::new(&target, &aux, t).unwrap();
        let cfg = LeapfrogConfig::new(0.005, 160);
        let lf = LeapfrogFlow { target: &target, aux: &aux, cfg };
        let q1 = [0.2, -0.4];
        let q2 = [1.0, 0.3];
        let mut rng1 = StreamCtx::new(2, 0).stream(0, 0, StreamKind::Reference);
        let mut rng2 = StreamCtx::new(2, 0).stream(0, 0, StreamKind::Reference);
        let e_exact = ricci_estimate(&aux, &exact, &q1, &q2, 64, &mut rng1).unwrap();
        let e_lf = ricci_estimate(&aux, &lf, &q1, &q2, 64, &mut rng2).unwrap();
        assert!((e_exact.kappa_hat - e_lf.kappa_hat).abs() < 0.02);
    }

    #[test]
    fn contraction_bound_closed_forms() {
        let target = GaussianDensity::standard(1);
        let aux = GaussianDensity::standard(1);
        let tiny = contraction_bound(&target, &aux, 1e-6).unwrap();
        assert!((tiny.beta - 1.0).abs() < 1e-9);
        assert!(tiny.below_threshold);
        let half = contraction_bound(&target, &aux, core::f64::consts::FRAC_PI_2).unwrap();
        assert!(half.beta.abs() < 1e-12);
        assert!((half.t_threshold - core::f64::consts::PI).abs() < 1e-9);
        assert!((half.beta_prime - 0.5).abs() < 1e-12);
        assert!(half.eps_term_unknown);
    }

    #[test]
    fn contraction_bound_matches_ricci_ratio() {
        let target = GaussianDensity::new(vec![0.0, 0.0], SymMatrix::diag(&[2.0, 0.7])).unwrap();
        let aux = GaussianDensity::standard(2);
        let t = 0.6;
        let report = contraction_bound(&target, &aux, t).unwrap();
        let flow = ExactGaussianFlow::new(&target, &aux, t).unwrap();
        let mut rng = StreamCtx::new(3, 0).stream(0, 0, StreamKind::Reference);
        // Probe several directions; beta bounds each ratio and is attained
        // along the extreme direction.
        let mut worst: f64 = 0.0;
        for pair in [([1.0, 0.0], [-1.0, 0.0]), ([0.0, 1.0], [0.0, -1.0]), ([1.0, 1.0], [-1.0, -1.0])] {
            let e = ricci_estimate(&aux, &flow, &pair.0, &pair.1, 16, &mut rng).unwrap();
            let ratio = e.w1_upper / e.pair_distance;
            assert!(ratio <= report.beta + 0.02, "ratio {ratio} beta {}", report.beta);
            worst = worst.max(ratio);
        }
        assert!((worst - report.beta).abs() <= 0.02);
    }

    #[test]
    fn kappa_positive_below_threshold() {
        let target = GaussianDensity::standard(2);
        let aux = GaussianDensity::standard(2);
        for t in [0.5, 1.0, 2.0, 3.0] {
            let report = contraction_bound(&target, &aux, t).unwrap();
            if report.below_threshold && report.beta < 1.0 {
                let flow = ExactGaussianFlow::new(&target, &aux, t).unwrap();
                let mut rng = StreamCtx::new(4, 0).stream(0, 0, StreamKind::Reference);
                let e = ricci_estimate(&aux, &flow, &[0.5, 0.0], &[-0.5, 0.0], 8, &mut rng)
                    .unwrap();
                assert!(e.kappa_hat > 0.0, "t={t} kappa={}", e.kappa_hat);
            }
        }
    }
}
