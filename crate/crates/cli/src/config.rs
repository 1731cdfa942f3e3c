//! Config file (TOML) and its merge with command-line flags.
//!
//! Keys mirror the long flag names with `-` replaced by `_`. The file is
//! taken from `--config`, else from `CONTEXTUALITY_CONFIG`. Flags win.

use std::path::Path;

use anyhow::{bail, Context, Result};
use compositionality::classify::AnalysisConfig;
use compositionality::inequalities::MarginalPolicy;
use compositionality::jdc::JdcConfig;
use compositionality::selectivity::{MsMode, SelectivityConfig};
use serde::Deserialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const CONFIG_ENV: &str = "CONTEXTUALITY_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Trials,
    Table,
    Tabledir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub format: Option<InputFormat>,
    pub output: Option<OutputFormat>,
    pub alpha: Option<f64>,
    pub critical_value: Option<f64>,
    pub yates: Option<bool>,
    pub ms: Option<MsMode>,
    pub override_ms: Option<Vec<String>>,
    pub marginal_policy: Option<MarginalPolicy>,
    pub chsh_tolerance: Option<f64>,
    pub bellch_tolerance: Option<f64>,
    pub lp_tolerance: Option<f64>,
    pub pivot_budget: Option<usize>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `explicit`, else the file named by `CONTEXTUALITY_CONFIG`, else empty.
    pub fn discover(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }
}

/// Analysis settings given on the command line; `None` defers to the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisFlags {
    pub alpha: Option<f64>,
    pub critical_value: Option<f64>,
    pub yates: bool,
    pub ms: Option<MsMode>,
    pub override_ms: Option<Vec<String>>,
    pub marginal_policy: Option<MarginalPolicy>,
    pub chsh_tolerance: Option<f64>,
    pub bellch_tolerance: Option<f64>,
    pub lp_tolerance: Option<f64>,
    pub pivot_budget: Option<usize>,
}

/// Upper-`alpha` quantile of the chi-square distribution with one degree of freedom.
pub fn critical_value_for(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("alpha must lie in (0, 1), got {alpha}");
    }
    let dist = ChiSquared::new(1.0).expect("one degree of freedom");
    Ok(dist.inverse_cdf(1.0 - alpha))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        bail!("{name} must be a non-negative number, got {v}")
    }
}

pub fn merge(flags: &AnalysisFlags, file: &FileConfig) -> Result<AnalysisConfig> {
    let defaults = AnalysisConfig::default();
    let alpha = flags.alpha.or(file.alpha);
    let critical_value = match (flags.critical_value.or(file.critical_value), alpha) {
        (Some(c), _) => positive("critical value", c)?,
        (None, Some(a)) => critical_value_for(a)?,
        (None, None) => defaults.selectivity.critical_value,
    };
    let alpha = match alpha {
        Some(a) if !(a > 0.0 && a < 1.0) => bail!("alpha must lie in (0, 1), got {a}"),
        Some(a) => a,
        None => defaults.selectivity.alpha,
    };
    let marginal_policy = flags
        .marginal_policy
        .or(file.marginal_policy)
        .unwrap_or(defaults.marginal_policy);
    let overrides = match flags.override_ms.as_ref().or(file.override_ms.as_ref()) {
        Some(names) if names.is_empty() => vec![compositionality::classify::OVERRIDE_ALL.to_owned()],
        Some(names) => names.clone(),
        None => Vec::new(),
    };
    Ok(AnalysisConfig {
        selectivity: SelectivityConfig {
            alpha,
            critical_value,
            yates: flags.yates || file.yates.unwrap_or(defaults.selectivity.yates),
            strict_tolerance: defaults.selectivity.strict_tolerance,
            mode: flags.ms.or(file.ms).unwrap_or(defaults.selectivity.mode),
        },
        chsh_tolerance: positive(
            "chsh tolerance",
            flags.chsh_tolerance.or(file.chsh_tolerance).unwrap_or(defaults.chsh_tolerance),
        )?,
        bellch_tolerance: positive(
            "bell/ch tolerance",
            flags.bellch_tolerance.or(file.bellch_tolerance).unwrap_or(defaults.bellch_tolerance),
        )?,
        marginal_policy,
        jdc: JdcConfig {
            tolerance: positive(
                "lp tolerance",
                flags.lp_tolerance.or(file.lp_tolerance).unwrap_or(defaults.jdc.tolerance),
            )?,
            pivot_budget: flags.pivot_budget.or(file.pivot_budget).unwrap_or(defaults.jdc.pivot_budget),
        },
        overrides,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_maps_to_chi_square_quantile() {
        assert!((critical_value_for(0.1).unwrap() - 2.705543454095404).abs() < 1e-9);
        assert!((critical_value_for(0.05).unwrap() - 3.841458820694124).abs() < 1e-9);
        assert!(critical_value_for(0.0).is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let file: FileConfig = toml::from_str("alpha = 0.05\nms = \"strict\"\nlp_tolerance = 1e-6\n").unwrap();
        let flags = AnalysisFlags {
            ms: Some(MsMode::Statistical),
            ..Default::default()
        };
        let cfg = merge(&flags, &file).unwrap();
        assert_eq!(cfg.selectivity.mode, MsMode::Statistical);
        assert_eq!(cfg.selectivity.alpha, 0.05);
        assert!((cfg.selectivity.critical_value - 3.841458820694124).abs() < 1e-9);
        assert_eq!(cfg.jdc.tolerance, 1e-6);
    }

    #[test]
    fn defaults_keep_the_tabulated_critical_value() {
        let cfg = merge(&AnalysisFlags::default(), &FileConfig::default()).unwrap();
        assert_eq!(cfg.selectivity.critical_value, 2.71);
        assert!(cfg.overrides.is_empty());
    }

    #[test]
    fn bare_override_matches_everything() {
        let flags = AnalysisFlags {
            override_ms: Some(vec![]),
            ..Default::default()
        };
        let cfg = merge(&flags, &FileConfig::default()).unwrap();
        assert!(cfg.is_overridden("anything"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("alhpa = 0.1").is_err());
    }
}
