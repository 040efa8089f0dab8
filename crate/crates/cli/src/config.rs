//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! input = "scores.csv"
//! id_column = "id"               # optional; defaults to the data row number
//! score_columns = ["score"]
//! group_columns = ["sex", "race"]
//! grid_size = 1000
//! min_group_size = 100
//! seed = 0
//! thetas = [0.0, 0.5, 1.0]       # sweep only
//!
//! [theta]
//! default = 0.5
//! overrides = { "F/B" = 1.0 }
//!
//! [barycenter]
//! weights = "size"               # size | uniform | explicit
//! explicit = { "F/B" = 0.5, "M/W" = 0.5 }
//!
//! [transport]                    # vector scores only
//! epsilon = 0.01
//! tol = 1e-6
//! max_iter = 10000
//! support_size = 2000
//!
//! [selection]                    # at most one of the two
//! threshold = 0.5
//! top_k = 100
//!
//! [output]
//! scores = "fair.csv"
//! report = "report.json"
//!
//! [synth]
//! attributes = ["group"]
//! [[synth.groups]]
//! key = ["A"]
//! size = 1000
//! dims = [{ kind = "gaussian", mean = 0.4, sd = 0.1 }]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use otfair_core::synth::{DimDistribution, GroupSpec};
use otfair_core::transportnd::NdConfig;
use otfair_core::{
    BarycenterWeights, GroupKey, SelectionRule, SinkhornParams, ThetaPolicy, DEFAULT_GRID_SIZE,
    DEFAULT_MIN_GROUP_SIZE,
};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub id_column: Option<String>,
    pub score_columns: Option<Vec<String>>,
    pub group_columns: Option<Vec<String>>,
    pub grid_size: Option<usize>,
    pub min_group_size: Option<usize>,
    pub seed: Option<u64>,
    pub thetas: Option<Vec<f64>>,
    #[serde(default)]
    pub theta: ThetaSection,
    #[serde(default)]
    pub barycenter: BarycenterSection,
    #[serde(default)]
    pub transport: TransportSection,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default)]
    pub output: OutputSection,
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSection {
    pub default: Option<f64>,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarycenterSection {
    pub weights: Option<String>,
    #[serde(default)]
    pub explicit: BTreeMap<String, f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSection {
    pub epsilon: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub support_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub threshold: Option<f64>,
    pub top_k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub scores: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub sweep: Option<PathBuf>,
    pub barycenter: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    #[serde(default = "default_attributes")]
    pub attributes: Vec<String>,
    pub groups: Vec<SynthGroup>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthGroup {
    pub key: Vec<String>,
    pub size: usize,
    pub dims: Vec<DimDistribution>,
}

fn default_attributes() -> Vec<String> {
    vec!["group".to_string()]
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub id_column: Option<String>,
    pub score_columns: Option<Vec<String>>,
    pub group_columns: Option<Vec<String>>,
    pub theta: Option<f64>,
    pub theta_overrides: Vec<(String, f64)>,
    pub weights: Option<String>,
    pub grid_size: Option<usize>,
    pub min_group_size: Option<usize>,
    pub epsilon: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub support_size: Option<usize>,
    pub threshold: Option<f64>,
    pub top_k: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub thetas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightMode {
    Size,
    Uniform,
    Explicit(BTreeMap<String, f64>),
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub id_column: Option<String>,
    pub score_columns: Vec<String>,
    pub group_columns: Vec<String>,
    pub theta: f64,
    pub theta_overrides: BTreeMap<String, f64>,
    pub weights: WeightMode,
    pub grid_size: usize,
    pub min_group_size: usize,
    pub sinkhorn: SinkhornParams,
    pub support_size: usize,
    pub seed: Option<u64>,
    pub selection: Option<SelectionRule>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub sweep_output: Option<PathBuf>,
    pub barycenter_output: Option<PathBuf>,
    pub thetas: Vec<f64>,
    pub synth: Option<SynthSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::resolve(FileConfig::default(), Overrides::default()).expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn resolve(file: FileConfig, flags: Overrides) -> Result<Self> {
        let mut theta_overrides = file.theta.overrides;
        theta_overrides.extend(flags.theta_overrides);

        let weights = match flags
            .weights
            .or(file.barycenter.weights)
            .as_deref()
            .unwrap_or("size")
        {
            "size" => WeightMode::Size,
            "uniform" => WeightMode::Uniform,
            "explicit" => {
                if file.barycenter.explicit.is_empty() {
                    return Err(CliError::validation(
                        "barycenter weights = \"explicit\" needs a [barycenter.explicit] table",
                    ));
                }
                WeightMode::Explicit(file.barycenter.explicit)
            }
            other => {
                return Err(CliError::validation(format!(
                    "unknown barycenter weight mode {other:?} (expected size, uniform or explicit)"
                )))
            }
        };

        let threshold = flags.threshold.or(file.selection.threshold);
        let top_k = flags.top_k.or(file.selection.top_k);
        let selection = match (threshold, top_k) {
            (Some(_), Some(_)) => {
                return Err(CliError::validation("configure either a selection threshold or top_k, not both"))
            }
            (Some(t), None) => Some(SelectionRule::Threshold(t)),
            (None, Some(k)) => Some(SelectionRule::TopK(k)),
            (None, None) => None,
        };

        let defaults = SinkhornParams::default();
        let cfg = RunConfig {
            input: flags.input.or(file.input),
            id_column: flags.id_column.or(file.id_column),
            score_columns: flags
                .score_columns
                .or(file.score_columns)
                .unwrap_or_else(|| vec!["score".to_string()]),
            group_columns: flags
                .group_columns
                .or(file.group_columns)
                .unwrap_or_else(|| vec!["group".to_string()]),
            theta: flags.theta.or(file.theta.default).unwrap_or(1.0),
            theta_overrides,
            weights,
            grid_size: flags.grid_size.or(file.grid_size).unwrap_or(DEFAULT_GRID_SIZE),
            min_group_size: flags
                .min_group_size
                .or(file.min_group_size)
                .unwrap_or(DEFAULT_MIN_GROUP_SIZE),
            sinkhorn: SinkhornParams {
                epsilon: flags.epsilon.or(file.transport.epsilon).unwrap_or(defaults.epsilon),
                tol: flags.tol.or(file.transport.tol).unwrap_or(defaults.tol),
                max_iter: flags.max_iter.or(file.transport.max_iter).unwrap_or(defaults.max_iter),
            },
            support_size: flags
                .support_size
                .or(file.transport.support_size)
                .unwrap_or(NdConfig::default().support_size),
            seed: flags.seed.or(file.seed),
            selection,
            output: flags.output.or(file.output.scores),
            report: flags.report.or(file.output.report),
            sweep_output: file.output.sweep,
            barycenter_output: file.output.barycenter,
            thetas: flags.thetas.or(file.thetas).unwrap_or_default(),
            synth: file.synth,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.score_columns.is_empty() {
            return Err(CliError::validation("at least one score column is required"));
        }
        if self.group_columns.is_empty() {
            return Err(CliError::validation("at least one group column is required"));
        }
        if self.grid_size < 2 {
            return Err(CliError::validation(format!("grid_size must be at least 2, got {}", self.grid_size)));
        }
        let in_unit = |t: f64| (0.0..=1.0).contains(&t);
        if !in_unit(self.theta) {
            return Err(CliError::validation(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        for (k, t) in &self.theta_overrides {
            if !in_unit(*t) {
                return Err(CliError::validation(format!("theta override for {k} must lie in [0, 1], got {t}")));
            }
        }
        if let Some(t) = self.thetas.iter().find(|t| !in_unit(**t)) {
            return Err(CliError::validation(format!("sweep theta must lie in [0, 1], got {t}")));
        }
        if !(self.sinkhorn.epsilon > 0.0 && self.sinkhorn.epsilon.is_finite()) {
            return Err(CliError::validation("epsilon must be positive"));
        }
        if !(self.sinkhorn.tol > 0.0) || self.sinkhorn.max_iter == 0 {
            return Err(CliError::validation("tol and max_iter must be positive"));
        }
        if self.support_size == 0 {
            return Err(CliError::validation("support_size must be positive"));
        }
        Ok(())
    }

    pub fn theta_policy(&self) -> Result<ThetaPolicy> {
        let mut policy = ThetaPolicy::new(self.theta)?;
        for (k, t) in &self.theta_overrides {
            policy = policy.with_override(GroupKey::parse(k), *t)?;
        }
        Ok(policy)
    }

    pub fn barycenter_weights(&self) -> BarycenterWeights {
        match &self.weights {
            WeightMode::Size => BarycenterWeights::SizeProportional,
            WeightMode::Uniform => BarycenterWeights::Uniform,
            WeightMode::Explicit(map) => {
                BarycenterWeights::Explicit(map.iter().map(|(k, w)| (GroupKey::parse(k), *w)).collect())
            }
        }
    }

    pub fn nd_config(&self) -> NdConfig {
        NdConfig {
            sinkhorn: self.sinkhorn,
            support_size: self.support_size,
            seed: self.seed.unwrap_or(0),
        }
    }

    pub fn synth_specs(&self) -> Result<(Vec<String>, Vec<GroupSpec>)> {
        match &self.synth {
            None => Ok((default_attributes(), otfair_core::synth::two_gaussian_specs())),
            Some(s) => {
                let specs = s
                    .groups
                    .iter()
                    .map(|g| {
                        if g.key.len() != s.attributes.len() {
                            return Err(CliError::validation(format!(
                                "synth group {:?} has {} key values for {} attributes",
                                g.key,
                                g.key.len(),
                                s.attributes.len()
                            )));
                        }
                        Ok(GroupSpec {
                            key: GroupKey::new(g.key.iter().cloned()),
                            size: g.size,
                            dims: g.dims.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((s.attributes.clone(), specs))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file = FileConfig::parse(
            r#"
            grid_size = 50
            [theta]
            default = 0.2
            overrides = { "A" = 0.9 }
            "#,
        )
        .unwrap();
        let flags = Overrides {
            theta: Some(0.7),
            theta_overrides: vec![("A".into(), 0.1)],
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(file, flags).unwrap();
        assert_eq!(cfg.theta, 0.7);
        assert_eq!(cfg.theta_overrides["A"], 0.1);
        assert_eq!(cfg.grid_size, 50);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            "grid_size = 1",
            "[theta]\ndefault = 1.5",
            "[theta]\noverrides = { \"A\" = -0.1 }",
            "[barycenter]\nweights = \"median\"",
            "[barycenter]\nweights = \"explicit\"",
            "[selection]\nthreshold = 0.5\ntop_k = 3",
        ];
        for text in bad {
            let file = FileConfig::parse(text).unwrap();
            assert!(RunConfig::resolve(file, Overrides::default()).is_err(), "{text}");
        }
        assert!(FileConfig::parse("grdi_size = 4").is_err());
    }

    #[test]
    fn synth_section_parses() {
        let file = FileConfig::parse(
            r#"
            [synth]
            attributes = ["sex", "race"]
            [[synth.groups]]
            key = ["F", "B"]
            size = 10
            dims = [{ kind = "beta", a = 2.0, b = 3.0 }]
            "#,
        )
        .unwrap();
        let cfg = RunConfig::resolve(file, Overrides::default()).unwrap();
        let (attrs, specs) = cfg.synth_specs().unwrap();
        assert_eq!(attrs, ["sex", "race"]);
        assert_eq!(specs[0].key.to_string(), "F/B");
        assert_eq!(specs[0].dims, vec![DimDistribution::Beta { a: 2.0, b: 3.0 }]);
    }
}
