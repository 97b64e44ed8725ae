//! Release gate: one test per shipped quantitative guarantee, each printing a
//! single `criterion NN <name>: PASS/FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`) before asserting.
//!
//! Tolerances here are pinned; loosening them is a behaviour change, not a
//! test fix.

use adhmc_cli::blr::{blr_from_csv, BlrSchema};
use adhmc_cli::config::parse_config;
use adhmc_cli::experiment::run_replication;
use adhmc_core::integrator::{
    exact_quadratic_flow, flow_jacobian, leapfrog_endpoint, ExactGaussianFlow, JacobianMode,
    LeapfrogConfig, LeapfrogFlow, PhasePoint,
};
use adhmc_core::linalg::{block_flow_matrix, det, nonsym_sqrt_pair, sym_sqrt, Mat, SymMatrix};
use adhmc_core::metrics::{
    contraction_bound, joint_diameter, ricci_estimate, sinkhorn_distance, OtConfig,
};
use adhmc_core::models::{
    BlrPosterior, DensityModel, GaussianDensity, GaussianMixtureDensity,
};
use adhmc_core::operator_lab::{log_linear_fit, GridDensity, OperatorLab};
use adhmc_core::rng::{standard_normal, uniform01, ChaCha8Rng, StreamCtx, StreamKind};
use adhmc_core::sampler::{run_chain, ChainConfig, Ensemble, Scheme};
use adhmc_testkit::{block_flow_oracle, dmatrix_from_rows, exhaustive_wasserstein, fd_gradient};

fn reference_stream(seed: u64, lane: u64) -> ChaCha8Rng {
    StreamCtx::new(seed, 0).stream(lane, 0, StreamKind::Reference)
}

fn verdict(number: u32, name: &str, pass: bool, details: &str) {
    println!(
        "criterion {number:02} {name}: {} ({details})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number:02} {name}: {details}");
}

fn gaussian_2d(mean: [f64; 2], cov: [[f64; 2]; 2]) -> GaussianDensity {
    let mat = Mat::from_rows(&[&cov[0], &cov[1]]);
    GaussianDensity::new(mean.to_vec(), SymMatrix::new(mat).unwrap()).unwrap()
}

fn mixture_1d(components: &[(f64, f64, f64)]) -> GaussianMixtureDensity {
    let comps = components
        .iter()
        .map(|&(m, s, _)| GaussianDensity::isotropic(vec![m], s).unwrap())
        .collect();
    let weights = components.iter().map(|&(_, _, w)| w).collect();
    GaussianMixtureDensity::new(comps, weights).unwrap()
}

fn max_abs_diff(a: &PhasePoint, b: &PhasePoint) -> f64 {
    a.q.iter()
        .chain(a.p.iter())
        .zip(b.q.iter().chain(b.p.iter()))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Random SPD matrix `M^T M + d·I`, returned both as a core `SymMatrix` and a
/// dense oracle-side matrix.
fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> (SymMatrix, adhmc_testkit::DMatrix<f64>) {
    let mut m = Mat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = standard_normal(rng);
        }
    }
    let spd = m.transpose().matmul(&m).add(&Mat::identity(d).scale(d as f64));
    let dm = dmatrix_from_rows(d, d, spd.data());
    (SymMatrix::new(spd).unwrap(), dm)
}

#[test]
fn criterion_01_leapfrog_is_second_order() {
    let target = gaussian_2d([0.2, -0.1], [[1.3, 0.4], [0.4, 0.9]]);
    let aux = gaussian_2d([0.0, 0.0], [[1.0, -0.3], [-0.3, 1.5]]);
    let mut rng = reference_stream(1, 0);
    let mut ratios = Vec::new();
    for _ in 0..5 {
        let start = PhasePoint::new(
            vec![standard_normal(&mut rng), standard_normal(&mut rng)],
            vec![standard_normal(&mut rng), standard_normal(&mut rng)],
        );
        let exact = exact_quadratic_flow(&target, &aux, 1.0, &start).unwrap();
        let err = |steps: usize| {
            let cfg = LeapfrogConfig::new(1.0 / steps as f64, steps);
            let end = leapfrog_endpoint(&target, &aux, &start, &cfg).unwrap();
            max_abs_diff(&end, &exact)
        };
        ratios.push(err(64) / err(128));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    verdict(
        1,
        "leapfrog-second-order",
        (3.5..=4.5).contains(&mean),
        &format!("halving the step scales the endpoint error by {mean:.3}, expected within [3.5, 4.5]"),
    );
}

#[test]
fn criterion_02_flow_jacobian_is_volume_preserving() {
    let target = GaussianMixtureDensity::new(
        vec![
            GaussianDensity::isotropic(vec![-1.5, 0.0], 0.8).unwrap(),
            GaussianDensity::isotropic(vec![1.5, 0.0], 0.8).unwrap(),
        ],
        vec![0.5, 0.5],
    )
    .unwrap();
    let aux = GaussianDensity::standard(2);
    let cfg = LeapfrogConfig::new(0.01, 100);
    let mut rng = reference_stream(2, 0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let start = PhasePoint::new(
            vec![standard_normal(&mut rng), standard_normal(&mut rng)],
            vec![standard_normal(&mut rng), standard_normal(&mut rng)],
        );
        let jac =
            flow_jacobian(&target, &aux, &start, &cfg, JacobianMode::FiniteDifference).unwrap();
        worst = worst.max((det(&jac) - 1.0).abs());
    }
    verdict(
        2,
        "volume-preservation",
        worst <= 1e-6,
        &format!("worst |det J - 1| over 20 starts is {worst:.2e}, tolerance 1e-6"),
    );
}

#[test]
fn criterion_03_block_flow_matches_the_exponential_oracle() {
    let mut rng = reference_stream(3, 0);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let d = 1 + case % 5;
        let (vbar, vbar_dm) = random_spd(d, &mut rng);
        let (ubar, ubar_dm) = random_spd(d, &mut rng);
        let t = 2.0 * uniform01(&mut rng);
        let ours = block_flow_matrix(t, &vbar, &ubar).unwrap();
        let oracle = block_flow_oracle(t, &vbar_dm, &ubar_dm);
        for i in 0..2 * d {
            for j in 0..2 * d {
                worst = worst.max((ours[(i, j)] - oracle[(i, j)]).abs());
            }
        }
    }
    verdict(
        3,
        "block-flow-oracle",
        worst <= 1e-9,
        &format!("worst entry deviation over 50 SPD pairs is {worst:.2e}, tolerance 1e-9"),
    );
}

#[test]
fn criterion_04_matrix_square_roots_have_tiny_residuals() {
    let mut rng = reference_stream(4, 0);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let d = 1 + case % 6;
        let (m, _) = random_spd(d, &mut rng);
        let root = sym_sqrt(&m, 1e-13).unwrap();
        let res = root.as_mat().matmul(root.as_mat()).sub(m.as_mat()).frob_norm()
            / (1.0 + m.as_mat().frob_norm());
        worst = worst.max(res);

        let (vbar, _) = random_spd(d, &mut rng);
        let pair = nonsym_sqrt_pair(&vbar, &m).unwrap();
        let vu = vbar.as_mat().matmul(m.as_mat());
        let uv = m.as_mat().matmul(vbar.as_mat());
        let scale = 1.0 + vu.frob_norm();
        worst = worst.max(pair.a.matmul(&pair.a).sub(&vu).frob_norm() / scale);
        worst = worst.max(pair.b.matmul(&pair.b).sub(&uv).frob_norm() / scale);
    }
    verdict(
        4,
        "square-root-residuals",
        worst <= 1e-10,
        &format!("worst relative residual over 100 SPD instances is {worst:.2e}, tolerance 1e-10"),
    );
}

#[test]
fn criterion_05_transfer_operator_lemmas_hold_on_the_grid() {
    let target = mixture_1d(&[(-1.5, 0.6, 0.5), (1.5, 0.6, 0.5)]);
    let aux = mixture_1d(&[(-2.0, 0.5, 0.5), (2.0, 1.2, 0.5)]);
    let cfg = LeapfrogConfig::new(1.0 / 64.0, 64);
    let flow = LeapfrogFlow { target: &target, aux: &aux, cfg };
    let lab = OperatorLab::new(&target, &aux, &flow, (-9.0, 9.0), 361, (-9.0, 9.0), 361).unwrap();
    assert!(!lab.grid_warning, "operator grid leaks mass");

    // Fixed point: the target density is invariant under the transfer step.
    let f = lab.target_density().clone();
    let tf = lab.apply_t(&f);
    let f_sup = f.values().iter().cloned().fold(0.0, f64::max);
    let fixed_err = f
        .values()
        .iter()
        .zip(tf.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / f_sup;

    // Adjointness of the backward-flow quadrature in the f-weighted product.
    let a = GridDensity::from_fn(-9.0, 9.0, 361, |q| (-(q - 1.0) * (q - 1.0)).exp()).unwrap();
    let b = GridDensity::from_fn(-9.0, 9.0, 361, |q| (-(q + 0.5) * (q + 0.5) / 2.0).exp()).unwrap();
    let lhs = lab.inner(&lab.apply_t(&a), &b);
    let rhs = lab.inner(&a, &lab.apply_t_adjoint(&b));
    let adjoint_err = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());

    // Iterating T†T on a non-fixed start: strict norm decrease, conserved
    // integral, geometric decay of the distance to the fixed line.
    let h0 = GridDensity::from_fn(-9.0, 9.0, 361, |q| {
        (-(q - 1.0) * (q - 1.0) / (2.0 * 0.8 * 0.8)).exp()
    })
    .unwrap();
    let steps = lab.iterate_ta(&h0, 30);
    let alpha = h0.integral() / f.integral();
    let initial_diff = GridDensity::from_values(
        -9.0,
        9.0,
        h0.values().iter().zip(f.values()).map(|(h, fv)| h - alpha * fv).collect(),
    )
    .unwrap();
    let initial_distance = lab.inner(&initial_diff, &initial_diff).sqrt();
    let mut monotone = steps[0].distance < initial_distance;
    for w in steps.windows(2) {
        monotone &= w[1].distance < w[0].distance;
    }
    let integral_err = steps
        .iter()
        .map(|s| (s.integral - h0.integral()).abs())
        .fold(0.0, f64::max)
        / h0.integral();
    let distances: Vec<f64> = steps.iter().map(|s| s.distance).collect();
    let (slope, _, r2) = log_linear_fit(&distances).unwrap();

    let pass = fixed_err <= 1e-3
        && adjoint_err <= 1e-3
        && monotone
        && integral_err <= 1e-3
        && slope < 0.0
        && r2 >= 0.95;
    verdict(
        5,
        "transfer-operator-lemmas",
        pass,
        &format!(
            "fixed-point sup error {fixed_err:.2e} (<=1e-3), adjointness {adjoint_err:.2e} \
             (<=1e-3), monotone decrease {monotone}, integral drift {integral_err:.2e} (<=1e-3), \
             decay slope {slope:.3} with R^2 {r2:.3} (>=0.95) over 30 iterations"
        ),
    );
}

#[test]
fn criterion_06_stationarity_is_preserved_under_asymmetric_momenta() {
    let target = gaussian_2d([0.5, -0.25], [[1.0, 0.0], [0.0, 2.25]]);
    let ctx = StreamCtx::new(20_260_824, 0);
    let k = 900usize;
    let mut positions = vec![0.0; 2 * k];
    let mut rng = ctx.stream(0, 0, StreamKind::Reference);
    for i in 0..k {
        target.sample_into(&mut rng, &mut positions[2 * i..2 * i + 2]).unwrap();
    }
    let mut ens = Ensemble::from_rows(positions, k, 2).unwrap();
    let aux = GaussianMixtureDensity::new(
        vec![
            GaussianDensity::isotropic(vec![-1.5, -1.5], 0.6).unwrap(),
            GaussianDensity::isotropic(vec![1.5, 1.5], 1.0).unwrap(),
        ],
        vec![0.3, 0.7],
    )
    .unwrap();
    let cfg = ChainConfig {
        scheme: Scheme::Adhmc,
        leapfrog: LeapfrogConfig::new(0.1, 10),
        mh_enabled: true,
        iterations: 500,
        adapt_every: None,
    };
    run_chain(&mut ens, &target, aux, &cfg, &ctx, None, &mut |_, _, _| {}).unwrap();

    let truth_mean = [0.5, -0.25];
    let truth_var: [f64; 2] = [1.0, 2.25];
    let mut pass = true;
    let mut details = String::new();
    for j in 0..2 {
        let xs: Vec<f64> = (0..k).map(|i| ens.particle(i)[j]).collect();
        let mean = xs.iter().sum::<f64>() / k as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1) as f64;
        let se = truth_var[j].sqrt() / (k as f64).sqrt();
        let mean_ok = (mean - truth_mean[j]).abs() <= 3.0 * se;
        let var_ok = (var / truth_var[j] - 1.0).abs() <= 0.10;
        pass &= mean_ok && var_ok;
        details.push_str(&format!(
            "coord {j}: mean {mean:.3} (target {}, 3SE {:.3}), var {var:.3} (target {}); ",
            truth_mean[j],
            3.0 * se,
            truth_var[j]
        ));
    }
    verdict(6, "stationarity", pass, details.trim_end_matches("; "));
}

/// Mean rejection fraction of the final metric window over `reps` replications.
fn mean_rejection(config: &str, reps: u64) -> f64 {
    let cfg = parse_config(config).unwrap();
    let mut acc = 0.0;
    for r in 0..reps {
        let rows = run_replication(&cfg, r).unwrap();
        let last = rows.last().unwrap();
        let accepted = if last.acc_bwd.is_nan() {
            last.acc_fwd
        } else {
            0.5 * (last.acc_fwd + last.acc_bwd)
        };
        acc += 1.0 - accepted;
    }
    acc / reps as f64
}

#[test]
fn criterion_07_forward_only_kernels_reject_far_more_under_adapted_momenta() {
    let base = "particles = 300\niterations = 300\nn_a = 150\nstep = 0.025\n\
                leapfrog_steps = 100\nmetric_every = 300\naux = adapt_many\n";
    let mut pass = true;
    let mut details = String::new();
    for (target, min_gap) in [("lines12", 0.2), ("helix7", 0.3)] {
        let hmc = mean_rejection(&format!("target = {target}\nscheme = hmc\n{base}"), 5);
        let adhmc = mean_rejection(&format!("target = {target}\nscheme = adhmc\n{base}"), 5);
        let gap = hmc - adhmc;
        pass &= gap >= min_gap;
        details.push_str(&format!(
            "{target}: rejection hmc {hmc:.3} vs adhmc {adhmc:.3}, gap {gap:.3} (>= {min_gap}); "
        ));
    }
    verdict(7, "rejection-ordering", pass, details.trim_end_matches("; "));
}

#[test]
fn criterion_08_adapted_alternation_beats_plain_hmc_at_double_budget() {
    let adhmc_cfg = "target = lines12\nscheme = adhmc\naux = adapt_many\nparticles = 300\n\
                     iterations = 600\nn_a = 150\nstep = 0.025\nleapfrog_steps = 100\n\
                     metric_every = 600\n";
    let hmc_cfg = "target = lines12\nscheme = hmc\naux = std_normal\nparticles = 300\n\
                   iterations = 1200\nstep = 0.025\nleapfrog_steps = 100\nmetric_every = 1200\n";
    let final_w2 = |config: &str| -> f64 {
        let cfg = parse_config(config).unwrap();
        let mut acc = 0.0;
        for r in 0..5 {
            acc += run_replication(&cfg, r).unwrap().last().unwrap().w2;
        }
        acc / 5.0
    };
    let adhmc = final_w2(adhmc_cfg);
    let hmc = final_w2(hmc_cfg);
    verdict(
        8,
        "convergence-ordering",
        adhmc.is_finite() && hmc.is_finite() && adhmc < hmc,
        &format!(
            "mean final W2 over 5 replications: adhmc at 600 iterations {adhmc:.3} vs \
             hmc at 1200 iterations {hmc:.3}"
        ),
    );
}

#[test]
fn criterion_09_coupled_contraction_matches_the_closed_form() {
    let target = GaussianDensity::standard(1);
    let aux = GaussianDensity::standard(1);
    let t = core::f64::consts::FRAC_PI_4;
    let expected = t.cos();
    let q1 = [0.8];
    let q2 = [-0.6];

    let exact_flow = ExactGaussianFlow::new(&target, &aux, t).unwrap();
    let mut rng = reference_stream(9, 0);
    let exact =
        ricci_estimate(&aux, &exact_flow, &q1, &q2, 16, &mut rng).unwrap();
    let exact_ratio = exact.w1_upper / exact.pair_distance;

    let leap_cfg = LeapfrogConfig::new(t / 64.0, 64);
    let leap_flow = LeapfrogFlow { target: &target, aux: &aux, cfg: leap_cfg };
    let mut rng = reference_stream(9, 1);
    let leap = ricci_estimate(&aux, &leap_flow, &q1, &q2, 16, &mut rng).unwrap();
    let leap_ratio = leap.w1_upper / leap.pair_distance;

    let bound = contraction_bound(&target, &aux, t).unwrap();

    let pass = (exact_ratio - expected).abs() <= 1e-10
        && (leap_ratio - expected).abs() <= 0.02
        && (bound.beta - expected).abs() <= 1e-10
        && bound.below_threshold;
    verdict(
        9,
        "coupled-contraction",
        pass,
        &format!(
            "coupled ratio exact {exact_ratio:.12} vs cos(pi/4) {expected:.12} (<=1e-10), \
             leapfrog {leap_ratio:.4} (<=0.02), operator bound beta {:.12}",
            bound.beta
        ),
    );
}

#[test]
fn criterion_10_sinkhorn_agrees_with_exhaustive_transport() {
    let mut rng = reference_stream(10, 0);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let p: u8 = if case % 2 == 0 { 2 } else { 1 };
        let cloud = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..16).map(|_| 2.0 * standard_normal(rng)).collect()
        };
        let a = cloud(&mut rng);
        let b = cloud(&mut rng);
        let exact = exhaustive_wasserstein(&a, &b, 2, p);
        let mut cfg = OtConfig::new(p, 0.001 * joint_diameter(&a, &b, 2));
        cfg.max_iters = 200_000;
        cfg.tol = 1e-10;
        let approx = sinkhorn_distance(&a, &b, 2, &cfg).unwrap();
        worst = worst.max((approx.value - exact).abs() / exact);
    }
    verdict(
        10,
        "sinkhorn-vs-exhaustive",
        worst <= 0.05,
        &format!("worst relative deviation over 20 eight-point instances is {worst:.4}, tolerance 0.05"),
    );
}

#[test]
fn criterion_11_logistic_posterior_gradient_and_ingestion() {
    // Synthetic design: intercept plus three standardized covariates.
    let mut rng = reference_stream(11, 0);
    let n = 50usize;
    let d = 4usize;
    let mut design = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        design.push(1.0);
        for _ in 1..d {
            design.push(standard_normal(&mut rng));
        }
        labels.push(if uniform01(&mut rng) < 0.5 { 1.0 } else { 0.0 });
    }
    let prior = GaussianDensity::isotropic(vec![0.0; d], 10.0).unwrap();
    let posterior = BlrPosterior::new(design, labels, prior).unwrap();

    let mut worst = 0.0f64;
    for lane in 0..5 {
        let mut rng = reference_stream(11, 1 + lane);
        let q: Vec<f64> = (0..d).map(|_| 0.5 * standard_normal(&mut rng)).collect();
        let mut grad = vec![0.0; d];
        posterior.grad_potential(&q, &mut grad);
        let fd = fd_gradient(|x| posterior.potential(x), &q, 1e-5);
        let num = grad.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }

    // CSV ingestion round trip, including the capped "3+" children code.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    std::fs::write(&path, "use,livch,age,urban\nY,3+,5.0,Y\nN,0,7.0,N\nY,2,9.0,N\n").unwrap();
    let schema = BlrSchema {
        use_col: "use".into(),
        livch_col: "livch".into(),
        age_col: "age".into(),
        urban_col: "urban".into(),
    };
    let ds = blr_from_csv(&path, &schema, 10.0).unwrap();
    let ingest_ok = ds.n_rows == 3
        && ds.positive_labels == 2
        && (ds.age_mean - 7.0).abs() < 1e-12
        && ds.posterior.design_row(0) == [1.0, 3.0, -2.0, 1.0];

    verdict(
        11,
        "logistic-regression",
        worst <= 1e-5 && ingest_ok,
        &format!(
            "worst gradient relative error over 5 points is {worst:.2e} (<=1e-5), \
             ingestion round trip ok: {ingest_ok}"
        ),
    );
}
