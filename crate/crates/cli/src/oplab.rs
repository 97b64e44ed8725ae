//! CLI surface of the 1D transfer-operator lab: builds the grid operator
//! for a target/auxiliary pair, iterates 𝒯_a = 𝒯†∘𝒯, and reports the
//! distance-to-fixed-point decay with a log-linear fit.

use adhmc_core::integrator::{LeapfrogConfig, LeapfrogFlow};
use adhmc_core::models::{DensityModel, GaussianMixtureDensity};
use adhmc_core::operator_lab::{log_linear_fit, GridDensity, OperatorLab, TaStep};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct OpLabOptions {
    pub iters: usize,
    /// Symmetric grid half-width for both position and momentum.
    pub half_width: f64,
    pub grid_points: usize,
    pub step: f64,
    pub leapfrog_steps: usize,
    /// Center of the initial Gaussian bump h₀ (unit sd).
    pub h0_center: f64,
}

impl Default for OpLabOptions {
    fn default() -> Self {
        OpLabOptions {
            iters: 30,
            half_width: 9.0,
            grid_points: 361,
            step: 1.0 / 64.0,
            leapfrog_steps: 64,
            h0_center: 1.0,
        }
    }
}

pub struct OpLabReport {
    pub grid_warning: bool,
    pub steps: Vec<TaStep>,
    /// (slope, intercept, R²) of log distance against k.
    pub fit: Option<(f64, f64, f64)>,
}

pub fn run_oplab(
    target: &GaussianMixtureDensity,
    aux: &GaussianMixtureDensity,
    opts: &OpLabOptions,
) -> Result<OpLabReport, CliError> {
    if target.dim() != 1 || aux.dim() != 1 {
        return Err(CliError::Config(
            "operator-lab requires one-dimensional target and auxiliary".into(),
        ));
    }
    if opts.iters == 0 {
        return Err(CliError::Config("iters must be positive".into()));
    }
    let cfg = LeapfrogConfig::new(opts.step, opts.leapfrog_steps);
    let flow = LeapfrogFlow { target, aux, cfg };
    let w = opts.half_width;
    let n = opts.grid_points;
    let lab = OperatorLab::new(target, aux, &flow, (-w, w), n, (-w, w), n)
        .map_err(|e| CliError::Runtime(format!("operator lab setup failed: {e}")))?;
    let c = opts.h0_center;
    let h0 = GridDensity::from_fn(-w, w, n, |q| (-0.5 * (q - c) * (q - c)).exp())
        .map_err(|e| CliError::Runtime(format!("bad h0 grid: {e}")))?;
    let steps = lab.iterate_ta(&h0, opts.iters);
    let dists: Vec<f64> = steps.iter().map(|s| s.distance).collect();
    Ok(OpLabReport { grid_warning: lab.grid_warning, steps, fit: log_linear_fit(&dists) })
}

/// Text report: one `k,distance,norm_sq,integral` line per iteration plus a
/// trailing `fit,…` line.
pub fn format_report(report: &OpLabReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("grid_warning,{}\n", report.grid_warning));
    out.push_str("k,distance,norm_sq,integral\n");
    for s in &report.steps {
        out.push_str(&format!("{},{},{},{}\n", s.k, s.distance, s.norm_sq, s.integral));
    }
    match report.fit {
        Some((slope, intercept, r2)) => {
            out.push_str(&format!("fit,slope={slope},intercept={intercept},r2={r2}\n"))
        }
        None => out.push_str("fit,none\n"),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::resolve_spec;

    #[test]
    fn rejects_multidimensional_targets() {
        let t = resolve_spec("std_normal(2)").unwrap();
        let a = resolve_spec("std_normal(2)").unwrap();
        assert!(run_oplab(&t, &a, &OpLabOptions::default()).is_err());
    }

    #[test]
    fn symmetric_case_decays_toward_the_target() {
        let t = resolve_spec("std_normal(1)").unwrap();
        let a = resolve_spec("std_normal(1)").unwrap();
        let mut opts = OpLabOptions::default();
        opts.iters = 5;
        opts.grid_points = 201;
        let report = run_oplab(&t, &a, &opts).unwrap();
        assert!(!report.grid_warning);
        assert_eq!(report.steps.len(), 5);
        assert!(report.steps[4].distance < report.steps[0].distance);
        let text = format_report(&report);
        assert!(text.starts_with("grid_warning,false\n"));
        assert!(text.contains("fit,slope="));
    }
}
