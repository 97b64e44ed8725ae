//! Registry of benchmark target and auxiliary distributions.
//!
//! The mixture tables are fixed numeric data; `lines12` places twelve
//! isotropic Gaussians along three lines in R³, `helix7` places seven along
//! an expanding helix, and `simple_target_aux` is the six-component
//! simplification of `lines12` used as a foreknowledge auxiliary.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::models::{GaussianDensity, GaussianMixtureDensity};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownTarget(pub String);

impl fmt::Display for UnknownTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown registry target `{}`", self.0)
    }
}

/// `(mean, sigma, weight)` rows of an isotropic Gaussian mixture.
pub type MixtureTable = &'static [([f64; 3], f64, f64)];

pub const LINES12: MixtureTable = &[
    ([2.48, 1.75, 1.75], 0.75, 0.058),
    ([1.77, -1.25, 1.25], 0.50, 0.058),
    ([0.00, 0.00, 0.00], 0.25, 0.058),
    ([-1.06, 0.75, -0.75], 0.25, 0.058),
    ([-1.41, 1.00, -1.00], 0.50, 0.033),
    ([-2.47, 1.75, -1.75], 0.75, 0.067),
    ([3.75, 0.00, 0.15], 0.15, 0.11),
    ([4.00, 3.46, -0.20], 0.15, 0.11),
    ([0.63, -3.68, 0.10], 0.15, 0.11),
    ([2.04, 2.07, 0.47], 0.15, 0.11),
    ([1.64, 2.40, 1.35], 0.20, 0.11),
    ([0.59, 3.35, 2.77], 0.25, 0.11),
];

pub const HELIX7: MixtureTable = &[
    ([0.00, 1.00, 0.00], 0.69, 0.14),
    ([0.15, 0.15, 0.79], 0.49, 0.14),
    ([-0.57, -0.00, 1.57], 0.29, 0.14),
    ([-0.96, 0.96, 2.36], 0.10, 0.14),
    ([-0.00, 2.14, 3.14], 0.10, 0.14),
    ([2.07, 2.07, 3.93], 0.29, 0.14),
    ([3.71, 0.00, 4.71], 0.49, 0.14),
];

pub const SIMPLE_TARGET_AUX: MixtureTable = &[
    ([-0.68, 1.33, -1.33], 0.75, 0.17),
    ([0.68, -1.33, 1.33], 0.25, 0.17),
    ([-0.00, -2.00, -0.00], 0.15, 0.17),
    ([0.00, 2.00, 0.00], 0.15, 0.17),
    ([0.87, -1.00, -1.50], 0.25, 0.17),
    ([-0.87, 1.00, 1.50], 0.15, 0.17),
];

fn mixture_from_table(table: MixtureTable) -> GaussianMixtureDensity {
    let mut components = Vec::with_capacity(table.len());
    let mut weights = Vec::with_capacity(table.len());
    for (mean, sigma, weight) in table {
        components.push(
            GaussianDensity::isotropic(mean.to_vec(), *sigma).expect("table sigma is positive"),
        );
        weights.push(*weight);
    }
    GaussianMixtureDensity::new(components, weights).expect("registry tables are valid mixtures")
}

/// Names of the fixed registry entries, excluding the parametric
/// `std_normal(d)` / `iso_normal(d, sigma)` families.
pub fn names() -> Vec<&'static str> {
    vec!["lines12", "helix7", "simple_target_aux"]
}

/// Resolve a registry name to a mixture model.
///
/// Accepted names: the fixed tables above, plus `std_normal(d)` and
/// `iso_normal(d,sigma)`.
pub fn resolve(name: &str) -> Result<GaussianMixtureDensity, UnknownTarget> {
    let trimmed = name.trim();
    match trimmed {
        "lines12" => return Ok(mixture_from_table(LINES12)),
        "helix7" => return Ok(mixture_from_table(HELIX7)),
        "simple_target_aux" => return Ok(mixture_from_table(SIMPLE_TARGET_AUX)),
        _ => {}
    }
    if let Some(args) = parse_call(trimmed, "std_normal") {
        if let [d] = args.as_slice() {
            if *d == libm::floor(*d) && *d >= 1.0 {
                let g = GaussianDensity::standard(*d as usize);
                return Ok(GaussianMixtureDensity::new(vec![g], vec![1.0]).unwrap());
            }
        }
    }
    if let Some(args) = parse_call(trimmed, "iso_normal") {
        if let [d, sigma] = args.as_slice() {
            if *d == libm::floor(*d) && *d >= 1.0 && *sigma > 0.0 {
                let g = GaussianDensity::isotropic(vec![0.0; *d as usize], *sigma)
                    .expect("positive sigma");
                return Ok(GaussianMixtureDensity::new(vec![g], vec![1.0]).unwrap());
            }
        }
    }
    Err(UnknownTarget(String::from(trimmed)))
}

fn parse_call(s: &str, func: &str) -> Option<Vec<f64>> {
    let rest = s.strip_prefix(func)?.trim();
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    let mut out = Vec::new();
    for part in inner.split(',') {
        out.push(part.trim().parse::<f64>().ok()?);
    }
    Some(out)
}
