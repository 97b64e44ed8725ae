//! Flat key=value experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are skipped.
//! Inline auxiliary mixtures are given as repeated `aux_component` lines of
//! the form `m1 m2 ... | sigma | weight` (isotropic components). Unknown
//! keys are errors.

use std::path::Path;

use adhmc_core::models::{GaussianDensity, GaussianMixtureDensity};
use adhmc_core::registry;
use adhmc_core::sampler::Scheme;

use crate::CliError;

/// How the auxiliary distribution is chosen.
#[derive(Debug, Clone)]
pub enum AuxSpec {
    /// Fixed for the whole run.
    Fixed(GaussianMixtureDensity),
    /// Re-fit every `n_a` iterations as the most skewed cluster Gaussian.
    AdaptSingle,
    /// Re-fit every `n_a` iterations as the full cluster mixture.
    AdaptMany,
}

impl AuxSpec {
    pub fn is_adaptive(&self) -> bool {
        !matches!(self, AuxSpec::Fixed(_))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub target_name: String,
    pub target: GaussianMixtureDensity,
    pub aux: AuxSpec,
    pub scheme: Scheme,
    pub particles: usize,
    pub iterations: u64,
    pub n_a: u64,
    pub step: f64,
    pub leapfrog_steps: usize,
    pub mh: bool,
    pub metric_every: u64,
    pub seed: u64,
    pub replications: u64,
    pub out_dir: String,
    pub init_sd: f64,
    /// Doubles the iteration budget for `hmc` runs that are being compared
    /// against `adhmc` runs.
    pub double_budget: bool,
    /// When off, `cpu_seconds` is reported as 0.0 so output is byte-stable.
    pub timing: bool,
    /// Entropic blur; when unset, 0.01 × joint cloud diameter per evaluation.
    pub sinkhorn_blur: Option<f64>,
    pub sinkhorn_p: u8,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
    pub min_pts: usize,
    pub xi: f64,
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("key `{key}`: {msg}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| bad(key, format!("cannot parse `{value}`")))
}

fn parse_flag(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        other => Err(bad(key, format!("expected on/off, got `{other}`"))),
    }
}

/// Parse one `aux_component` line: `m1 m2 ... | sigma | weight`.
fn parse_component(value: &str) -> Result<(Vec<f64>, f64, f64), CliError> {
    let parts: Vec<&str> = value.split('|').map(str::trim).collect();
    let [mean_str, sigma_str, weight_str] = parts.as_slice() else {
        return Err(bad(
            "aux_component",
            "expected `m1 m2 ... | sigma | weight`",
        ));
    };
    let mean: Vec<f64> = mean_str
        .split_whitespace()
        .map(|tok| tok.parse().map_err(|_| bad("aux_component", format!("bad mean `{tok}`"))))
        .collect::<Result<_, _>>()?;
    if mean.is_empty() {
        return Err(bad("aux_component", "empty mean"));
    }
    let sigma: f64 = parse_num("aux_component", sigma_str)?;
    let weight: f64 = parse_num("aux_component", weight_str)?;
    if sigma <= 0.0 || weight <= 0.0 {
        return Err(bad("aux_component", "sigma and weight must be positive"));
    }
    Ok((mean, sigma, weight))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut target_name: Option<String> = None;
    let mut scheme: Option<Scheme> = None;
    let mut aux_name: Option<String> = None;
    let mut components: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    let mut particles = 900usize;
    let mut iterations = 300u64;
    let mut n_a = 150u64;
    let mut step = 0.025f64;
    let mut leapfrog_steps = 100usize;
    let mut mh = true;
    let mut metric_every = 50u64;
    let mut seed = 0u64;
    let mut replications = 1u64;
    let mut out_dir = String::from("out");
    let mut init_sd = 3.0f64;
    let mut double_budget = false;
    let mut timing = false;
    let mut sinkhorn_blur: Option<f64> = None;
    let mut sinkhorn_p = 2u8;
    let mut sinkhorn_max_iters = 300usize;
    let mut sinkhorn_tol = 1e-6f64;
    let mut min_pts = 5usize;
    let mut xi = 0.05f64;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "target" => target_name = Some(value.to_string()),
            "scheme" => {
                scheme = Some(match value {
                    "hmc" => Scheme::HmcForwardOnly,
                    "adhmc" => Scheme::Adhmc,
                    other => return Err(bad(key, format!("expected hmc or adhmc, got `{other}`"))),
                })
            }
            "aux" => aux_name = Some(value.to_string()),
            "aux_component" => components.push(parse_component(value)?),
            "particles" => particles = parse_num(key, value)?,
            "iterations" => iterations = parse_num(key, value)?,
            "n_a" => n_a = parse_num(key, value)?,
            "step" => step = parse_num(key, value)?,
            "leapfrog_steps" => leapfrog_steps = parse_num(key, value)?,
            "mh" => mh = parse_flag(key, value)?,
            "metric_every" => metric_every = parse_num(key, value)?,
            "seed" => seed = parse_num(key, value)?,
            "replications" => replications = parse_num(key, value)?,
            "out_dir" => out_dir = value.to_string(),
            "init_sd" => init_sd = parse_num(key, value)?,
            "double_budget" => double_budget = parse_flag(key, value)?,
            "timing" => timing = parse_flag(key, value)?,
            "sinkhorn_blur" => sinkhorn_blur = Some(parse_num(key, value)?),
            "sinkhorn_p" => sinkhorn_p = parse_num(key, value)?,
            "sinkhorn_max_iters" => sinkhorn_max_iters = parse_num(key, value)?,
            "sinkhorn_tol" => sinkhorn_tol = parse_num(key, value)?,
            "min_pts" => min_pts = parse_num(key, value)?,
            "xi" => xi = parse_num(key, value)?,
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
    }

    let target_name =
        target_name.ok_or_else(|| CliError::Config("missing required key `target`".into()))?;
    let scheme =
        scheme.ok_or_else(|| CliError::Config("missing required key `scheme`".into()))?;
    let target = registry::resolve(&target_name)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let d = {
        use adhmc_core::models::DensityModel;
        target.dim()
    };

    if step <= 0.0 {
        return Err(bad("step", "must be positive"));
    }
    if !(0.0..1.0).contains(&xi) || xi == 0.0 {
        return Err(bad("xi", "must be in (0, 1)"));
    }
    for (key, ok) in [
        ("particles", particles > 0),
        ("leapfrog_steps", leapfrog_steps > 0),
        ("n_a", n_a > 0),
        ("metric_every", metric_every > 0),
        ("replications", replications > 0),
        ("min_pts", min_pts > 0),
        ("sinkhorn_max_iters", sinkhorn_max_iters > 0),
        ("init_sd", init_sd > 0.0),
        ("sinkhorn_tol", sinkhorn_tol > 0.0),
        ("sinkhorn_p", sinkhorn_p == 1 || sinkhorn_p == 2),
        ("sinkhorn_blur", sinkhorn_blur.is_none_or(|b| b > 0.0)),
    ] {
        if !ok {
            return Err(bad(key, "must be positive (sinkhorn_p: 1 or 2)"));
        }
    }

    let aux = match (aux_name.as_deref(), components.is_empty()) {
        (Some("adapt_single"), true) => AuxSpec::AdaptSingle,
        (Some("adapt_many"), true) => AuxSpec::AdaptMany,
        (Some("std_normal") | None, true) => {
            AuxSpec::Fixed(std_normal_mixture(d))
        }
        (Some(name), true) => AuxSpec::Fixed(
            registry::resolve(name).map_err(|e| bad("aux", e))?,
        ),
        (Some("inline") | None, false) => {
            let mut comps = Vec::with_capacity(components.len());
            let mut weights = Vec::with_capacity(components.len());
            for (mean, sigma, weight) in components {
                if mean.len() != d {
                    return Err(bad(
                        "aux_component",
                        format!("mean dimension {} does not match target dimension {d}", mean.len()),
                    ));
                }
                comps.push(
                    GaussianDensity::isotropic(mean, sigma)
                        .map_err(|e| bad("aux_component", e))?,
                );
                weights.push(weight);
            }
            AuxSpec::Fixed(
                GaussianMixtureDensity::new(comps, weights).map_err(|e| bad("aux_component", e))?,
            )
        }
        (Some(name), false) => {
            return Err(bad(
                "aux",
                format!("`{name}` conflicts with aux_component lines (use `inline`)"),
            ))
        }
    };
    if let AuxSpec::Fixed(mix) = &aux {
        use adhmc_core::models::DensityModel;
        if mix.dim() != d {
            return Err(bad("aux", "auxiliary dimension does not match target"));
        }
    }

    Ok(ExperimentConfig {
        target_name,
        target,
        aux,
        scheme,
        particles,
        iterations,
        n_a,
        step,
        leapfrog_steps,
        mh,
        metric_every,
        seed,
        replications,
        out_dir,
        init_sd,
        double_budget,
        timing,
        sinkhorn_blur,
        sinkhorn_p,
        sinkhorn_max_iters,
        sinkhorn_tol,
        min_pts,
        xi,
    })
}

/// N(0, I_d) as a one-component mixture.
pub fn std_normal_mixture(d: usize) -> GaussianMixtureDensity {
    GaussianMixtureDensity::new(vec![GaussianDensity::standard(d)], vec![1.0]).unwrap()
}
