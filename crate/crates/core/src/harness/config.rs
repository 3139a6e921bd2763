//! Sweep configuration as `key = value` text.
//!
//! Keys mirror the [`SweepConfig`] fields; unknown keys are rejected. Lines
//! starting with `#` are comments. Missing keys fall back to the defaults.

use crate::error::{Error, Result};
use crate::harness::SweepConfig;
use crate::labeling::ProjectionKind;

pub fn parse_sweep_config(text: &str) -> Result<SweepConfig> {
    let mut config = SweepConfig::default();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::InvalidConfig {
            context: format!("line {}: expected key = value, got {line}", line_no + 1),
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "n_epochs_grid" => config.n_epochs_grid = parse_list(key, value)?,
            "xi_grid" => config.xi_grid = parse_list(key, value)?,
            "source_power_quantiles" => {
                config.source_power_quantiles = parse_list(key, value)?
            }
            "evaluation_budget" => config.evaluation_budget = parse_scalar(key, value)?,
            "k_folds" => config.k_folds = parse_scalar(key, value)?,
            "seed" => config.seed = parse_scalar(key, value)?,
            "projection_kind" => {
                config.projection_kind = match value {
                    "anatomical" => ProjectionKind::Anatomical,
                    "data-driven" => ProjectionKind::DataDriven,
                    other => {
                        return Err(Error::InvalidConfig {
                            context: format!(
                                "projection_kind must be anatomical or data-driven, got {other}"
                            ),
                        })
                    }
                }
            }
            other => {
                return Err(Error::InvalidConfig {
                    context: format!("unknown key {other}"),
                })
            }
        }
    }
    config.validate()?;
    Ok(config)
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidConfig {
        context: format!("cannot parse {key} = {value}"),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|item| parse_scalar(key, item.trim()))
        .collect()
}

/// Renders a config back into the text format accepted by
/// [`parse_sweep_config`].
pub fn format_sweep_config(config: &SweepConfig) -> String {
    let join_usize = |items: &[usize]| {
        items
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let join_f64 = |items: &[f64]| {
        items
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    format!(
        "n_epochs_grid = {}\n\
         xi_grid = {}\n\
         source_power_quantiles = {}\n\
         evaluation_budget = {}\n\
         k_folds = {}\n\
         seed = {}\n\
         projection_kind = {}\n",
        join_usize(&config.n_epochs_grid),
        join_f64(&config.xi_grid),
        join_f64(&config.source_power_quantiles),
        config.evaluation_budget,
        config.k_folds,
        config.seed,
        config.projection_kind,
    )
}
