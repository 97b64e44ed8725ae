//! Replication driver: runs the configured chain, measures W₂ against a
//! per-replication reference cloud on the metric schedule, and writes
//! `trace_{r}.csv` plus an across-replication `summary.csv`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use adhmc_core::adapt::{adapt_auxiliary, AdaptScheme};
use adhmc_core::metrics::{sinkhorn_distance, OtConfig};
use adhmc_core::models::DensityModel;
use adhmc_core::rng::{StreamCtx, StreamKind};
use adhmc_core::sampler::{run_chain, ChainConfig, Ensemble, Scheme};

use crate::config::{AuxSpec, ExperimentConfig};
use crate::CliError;

/// Number of exact target samples in each replication's reference cloud.
pub const REFERENCE_CLOUD: usize = 900;

pub const TRACE_HEADER: [&str; 8] = [
    "replication",
    "iteration",
    "w2_to_target_samples",
    "accepted_fraction_fwd",
    "accepted_fraction_bwd",
    "mean_abs_dH",
    "n_mixture_components",
    "cpu_seconds",
];

/// One metric-schedule row of a trace file.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub replication: u64,
    pub iteration: u64,
    pub w2: f64,
    pub acc_fwd: f64,
    pub acc_bwd: f64,
    pub mean_abs_dh: f64,
    pub n_components: usize,
    pub cpu_seconds: f64,
}

/// Effective iteration budget: `hmc` runs double when the comparison flag
/// is set.
pub fn effective_iterations(cfg: &ExperimentConfig) -> u64 {
    if cfg.double_budget && matches!(cfg.scheme, Scheme::HmcForwardOnly) {
        cfg.iterations * 2
    } else {
        cfg.iterations
    }
}

fn ot_config(cfg: &ExperimentConfig, a: &[f64], b: &[f64], d: usize) -> OtConfig {
    let mut ot = match cfg.sinkhorn_blur {
        Some(blur) => OtConfig::new(cfg.sinkhorn_p, blur),
        None => OtConfig::with_default_blur(cfg.sinkhorn_p, a, b, d),
    };
    ot.max_iters = cfg.sinkhorn_max_iters;
    ot.tol = cfg.sinkhorn_tol;
    ot
}

/// Run one replication, returning its metric rows in schedule order.
pub fn run_replication(cfg: &ExperimentConfig, replication: u64) -> Result<Vec<TraceRow>, CliError> {
    let d = cfg.target.dim();
    let ctx = StreamCtx::new(cfg.seed, replication);
    let iterations = effective_iterations(cfg);

    // Reference cloud: exact target samples, one stream per replication.
    let mut reference = vec![0.0; REFERENCE_CLOUD * d];
    {
        let mut rng = ctx.stream(0, 0, StreamKind::Reference);
        for i in 0..REFERENCE_CLOUD {
            cfg.target
                .sample_into(&mut rng, &mut reference[i * d..(i + 1) * d])
                .map_err(|e| CliError::Runtime(format!("target sampling failed: {e}")))?;
        }
    }

    let mut ens = Ensemble::init_gaussian(cfg.particles, d, cfg.init_sd, &ctx)
        .map_err(|e| CliError::Runtime(format!("ensemble init failed: {e}")))?;

    let chain_cfg = ChainConfig {
        scheme: cfg.scheme,
        leapfrog: adhmc_core::integrator::LeapfrogConfig::new(cfg.step, cfg.leapfrog_steps),
        mh_enabled: cfg.mh,
        iterations,
        adapt_every: cfg.aux.is_adaptive().then_some(cfg.n_a),
    };

    let adapt_scheme = match &cfg.aux {
        AuxSpec::AdaptSingle => Some(AdaptScheme::Single),
        AuxSpec::AdaptMany => Some(AdaptScheme::Many),
        AuxSpec::Fixed(_) => None,
    };
    let initial_aux = match &cfg.aux {
        AuxSpec::Fixed(mix) => mix.clone(),
        // Adaptive schemes start from the unit Gaussian.
        _ => crate::config::std_normal_mixture(d),
    };

    let mut rows: Vec<TraceRow> = Vec::new();
    // Iteration-0 row: the initial ensemble, no proposals yet.
    let w0 = measure_w2(cfg, ens.positions(), &reference, d)?;
    rows.push(TraceRow {
        replication,
        iteration: 0,
        w2: w0,
        acc_fwd: f64::NAN,
        acc_bwd: f64::NAN,
        mean_abs_dh: f64::NAN,
        n_components: initial_aux.n_components(),
        cpu_seconds: 0.0,
    });

    // Window accumulators between metric rows.
    let (min_pts, xi, timing) = (cfg.min_pts, cfg.xi, cfg.timing);
    let mut fwd_acc = 0usize;
    let mut fwd_prop = 0usize;
    let mut bwd_acc = 0usize;
    let mut bwd_prop = 0usize;
    let mut sum_dh = 0.0f64;
    let mut window_start = Instant::now();
    let mut pending: Vec<(u64, f64, f64, f64, usize, f64)> = Vec::new();
    let metric_every = cfg.metric_every;

    let mut adapt_fn = |ens: &Ensemble| {
        let scheme = adapt_scheme?;
        adapt_auxiliary(ens.positions(), ens.len(), d, scheme, min_pts, xi).ok()
    };

    // Snapshot positions at each metric iteration so W₂ can be computed
    // after the chain finishes (the observer must stay lightweight).
    let mut snapshots: Vec<Vec<f64>> = Vec::new();
    let mut observer = |ens: &Ensemble, aux: &adhmc_core::models::GaussianMixtureDensity,
                        report: &adhmc_core::sampler::StepReport| {
        fwd_acc += report.forward.accepted;
        fwd_prop += report.forward.proposals;
        if let Some(b) = &report.backward {
            bwd_acc += b.accepted;
            bwd_prop += b.proposals;
        }
        sum_dh += report.forward.sum_abs_dh + report.backward.map_or(0.0, |b| b.sum_abs_dh);
        let it = ens.iteration;
        if it % metric_every == 0 || it == iterations {
            let cpu = if timing { window_start.elapsed().as_secs_f64() } else { 0.0 };
            let prop = fwd_prop + bwd_prop;
            pending.push((
                it,
                if fwd_prop == 0 { f64::NAN } else { fwd_acc as f64 / fwd_prop as f64 },
                if bwd_prop == 0 { f64::NAN } else { bwd_acc as f64 / bwd_prop as f64 },
                if prop == 0 { f64::NAN } else { sum_dh / prop as f64 },
                aux.n_components(),
                cpu,
            ));
            snapshots.push(ens.positions().to_vec());
            fwd_acc = 0;
            fwd_prop = 0;
            bwd_acc = 0;
            bwd_prop = 0;
            sum_dh = 0.0;
            window_start = Instant::now();
        }
    };

    run_chain(
        &mut ens,
        &cfg.target,
        initial_aux,
        &chain_cfg,
        &ctx,
        Some(&mut adapt_fn),
        &mut observer,
    )
    .map_err(|e| CliError::Runtime(format!("chain failed: {e}")))?;

    for ((it, acc_f, acc_b, dh, ncomp, cpu), positions) in pending.iter().zip(&snapshots) {
        let w2 = measure_w2(cfg, positions, &reference, d)?;
        rows.push(TraceRow {
            replication,
            iteration: *it,
            w2,
            acc_fwd: *acc_f,
            acc_bwd: *acc_b,
            mean_abs_dh: *dh,
            n_components: *ncomp,
            cpu_seconds: *cpu,
        });
    }
    Ok(rows)
}

fn measure_w2(
    cfg: &ExperimentConfig,
    cloud: &[f64],
    reference: &[f64],
    d: usize,
) -> Result<f64, CliError> {
    let ot = ot_config(cfg, cloud, reference, d);
    sinkhorn_distance(cloud, reference, d, &ot)
        .map(|r| r.value)
        .map_err(|e| CliError::Runtime(format!("sinkhorn failed: {e:?}")))
}

fn fmt_field(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(TRACE_HEADER)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for row in rows {
        w.write_record([
            row.replication.to_string(),
            row.iteration.to_string(),
            fmt_field(row.w2),
            fmt_field(row.acc_fwd),
            fmt_field(row.acc_bwd),
            fmt_field(row.mean_abs_dh),
            row.n_components.to_string(),
            fmt_field(row.cpu_seconds),
        ])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn write_summary(path: &Path, per_rep: &[Vec<TraceRow>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    w.write_record([
        "iteration",
        "w2_mean",
        "w2_se",
        "accepted_fraction_fwd_mean",
        "accepted_fraction_fwd_se",
        "accepted_fraction_bwd_mean",
        "accepted_fraction_bwd_se",
        "mean_abs_dH_mean",
        "mean_abs_dH_se",
        "n_mixture_components_mean",
        "n_mixture_components_se",
        "cpu_seconds_mean",
        "cpu_seconds_se",
    ])
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let n_rows = per_rep[0].len();
    for i in 0..n_rows {
        let at = |f: &dyn Fn(&TraceRow) -> f64| -> (f64, f64) {
            let vals: Vec<f64> = per_rep.iter().map(|rows| f(&rows[i])).collect();
            mean_se(&vals)
        };
        let (w2m, w2s) = at(&|r| r.w2);
        let (afm, afs) = at(&|r| r.acc_fwd);
        let (abm, abs_) = at(&|r| r.acc_bwd);
        let (dhm, dhs) = at(&|r| r.mean_abs_dh);
        let (ncm, ncs) = at(&|r| r.n_components as f64);
        let (cpm, cps) = at(&|r| r.cpu_seconds);
        w.write_record([
            per_rep[0][i].iteration.to_string(),
            fmt_field(w2m),
            fmt_field(w2s),
            fmt_field(afm),
            fmt_field(afs),
            fmt_field(abm),
            fmt_field(abs_),
            fmt_field(dhm),
            fmt_field(dhs),
            fmt_field(ncm),
            fmt_field(ncs),
            fmt_field(cpm),
            fmt_field(cps),
        ])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Run every replication and write the trace and summary CSV files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut written = Vec::new();
    let mut per_rep = Vec::new();
    for r in 0..cfg.replications {
        let rows = run_replication(cfg, r)?;
        let path = out_dir.join(format!("trace_{r}.csv"));
        write_trace(&path, &rows)?;
        written.push(path);
        per_rep.push(rows);
    }
    let summary = out_dir.join("summary.csv");
    write_summary(&summary, &per_rep)?;
    written.push(summary);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn metric_schedule_row_count() {
        // 300 iterations, metric every 50 → rows at 0, 50, …, 300.
        let cfg = parse_config(
            "target = std_normal(2)\nscheme = adhmc\nparticles = 40\n\
             iterations = 300\nmetric_every = 50\nleapfrog_steps = 5\nstep = 0.1\n",
        )
        .unwrap();
        let rows = run_replication(&cfg, 0).unwrap();
        assert_eq!(rows.len(), 7);
        assert_eq!(rows[0].iteration, 0);
        assert_eq!(rows[6].iteration, 300);
    }

    #[test]
    fn hmc_budget_doubles_only_with_flag() {
        let base = "target = std_normal(2)\nscheme = hmc\niterations = 100\n";
        let cfg = parse_config(base).unwrap();
        assert_eq!(effective_iterations(&cfg), 100);
        let cfg2 = parse_config(&format!("{base}double_budget = on\n")).unwrap();
        assert_eq!(effective_iterations(&cfg2), 200);
        let adhmc = "target = std_normal(2)\nscheme = adhmc\niterations = 100\ndouble_budget = on\n";
        assert_eq!(effective_iterations(&parse_config(adhmc).unwrap()), 100);
    }

    #[test]
    fn replications_reuse_seeds_deterministically() {
        let cfg = parse_config(
            "target = std_normal(1)\nscheme = adhmc\nparticles = 25\n\
             iterations = 20\nmetric_every = 10\nleapfrog_steps = 5\nstep = 0.1\n",
        )
        .unwrap();
        let a = run_replication(&cfg, 0).unwrap();
        let b = run_replication(&cfg, 0).unwrap();
        let c = run_replication(&cfg, 1).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.w2.to_bits(), y.w2.to_bits());
            assert_eq!(x.acc_fwd.to_bits(), y.acc_fwd.to_bits());
        }
        // A different replication uses different sub-streams.
        assert_ne!(a[1].w2.to_bits(), c[1].w2.to_bits());
    }
}
