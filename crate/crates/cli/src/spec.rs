//! Text specs for distributions: registry names plus an inline
//! one-dimensional mixture grammar `gm(mean:sigma:weight, ...)`.

use adhmc_core::models::{GaussianDensity, GaussianMixtureDensity};
use adhmc_core::registry;

use crate::CliError;

/// Resolve a distribution spec: a registry name (`lines12`, `helix7`,
/// `simple_target_aux`, `std_normal(d)`, `iso_normal(d,sigma)`) or an inline
/// 1D mixture `gm(mean:sigma:weight, ...)`.
pub fn resolve_spec(s: &str) -> Result<GaussianMixtureDensity, CliError> {
    let trimmed = s.trim();
    if let Ok(m) = registry::resolve(trimmed) {
        return Ok(m);
    }
    if trimmed.starts_with("gm(") {
        return parse_gm(trimmed);
    }
    Err(CliError::Config(format!(
        "unknown distribution spec `{trimmed}` (expected a registry name or gm(mean:sigma:weight, ...))"
    )))
}

fn parse_gm(s: &str) -> Result<GaussianMixtureDensity, CliError> {
    let inner = s
        .strip_prefix("gm(")
        .and_then(|rest| rest.strip_suffix(')'))
        .ok_or_else(|| CliError::Config(format!("malformed mixture spec `{s}`")))?;
    let mut components = Vec::new();
    let mut weights = Vec::new();
    for part in inner.split(',') {
        let fields: Vec<&str> = part.split(':').map(str::trim).collect();
        let [mean, sigma, weight] = fields.as_slice() else {
            return Err(CliError::Config(format!(
                "mixture component `{part}` must be mean:sigma:weight"
            )));
        };
        let mean: f64 = mean
            .parse()
            .map_err(|_| CliError::Config(format!("bad mean in `{part}`")))?;
        let sigma: f64 = sigma
            .parse()
            .map_err(|_| CliError::Config(format!("bad sigma in `{part}`")))?;
        let weight: f64 = weight
            .parse()
            .map_err(|_| CliError::Config(format!("bad weight in `{part}`")))?;
        if sigma <= 0.0 || weight <= 0.0 {
            return Err(CliError::Config(format!(
                "sigma and weight must be positive in `{part}`"
            )));
        }
        components.push(
            GaussianDensity::isotropic(vec![mean], sigma)
                .map_err(|e| CliError::Config(format!("bad component `{part}`: {e}")))?,
        );
        weights.push(weight);
    }
    GaussianMixtureDensity::new(components, weights)
        .map_err(|e| CliError::Config(format!("invalid mixture: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use adhmc_core::models::DensityModel;

    #[test]
    fn registry_names_resolve() {
        assert_eq!(resolve_spec("lines12").unwrap().n_components(), 12);
        assert_eq!(resolve_spec("std_normal(2)").unwrap().dim(), 2);
    }

    #[test]
    fn inline_mixture_parses() {
        let m = resolve_spec("gm(-2:0.5:0.3, 2:1.2:0.7)").unwrap();
        assert_eq!(m.n_components(), 2);
        assert_eq!(m.dim(), 1);
        assert!((m.weights()[0] - 0.3).abs() < 1e-12);
        assert_eq!(m.components()[1].mean(), &[2.0]);
    }

    #[test]
    fn malformed_specs_are_config_errors() {
        assert!(resolve_spec("gm(1:2)").is_err());
        assert!(resolve_spec("gm(1:0:1)").is_err());
        assert!(resolve_spec("nonsense").is_err());
    }
}
