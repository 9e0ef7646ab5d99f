//! JSON configuration documents. Every struct rejects unknown keys, and
//! serializing a parsed document yields the fully resolved form with all
//! defaults filled in.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::ObservableConfig;
use crate::pointset::{fibonacci_chain, hardcore_random, lattice, PointSet};
use crate::rates::{RateParams, Theorem};
use crate::scatterers::ScattererDoc;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointSetConfig {
    /// `spacing * Z^dim` inside the closed ball of `radius`.
    Lattice { dim: usize, spacing: f64, radius: f64 },
    /// First `n_points` of the Fibonacci chain with short gap `short_len`.
    Fibonacci { n_points: usize, short_len: f64 },
    /// Random sequential adsorption; `seed` defaults to the run seed.
    Hardcore {
        dim: usize,
        min_dist: f64,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// A point-set CSV as written by `gen-pointset`.
    Csv { path: PathBuf },
    Explicit {
        points: Vec<Vec<f64>>,
        #[serde(default = "default_label")]
        label: String,
    },
}

fn default_label() -> String {
    "explicit".into()
}

impl PointSetConfig {
    pub fn build(&self, run_seed: u64) -> Result<PointSet> {
        match self {
            PointSetConfig::Lattice { dim, spacing, radius } => lattice(*dim, *spacing, *radius),
            PointSetConfig::Fibonacci { n_points, short_len } => fibonacci_chain(*n_points, *short_len),
            PointSetConfig::Hardcore {
                dim,
                min_dist,
                radius,
                seed,
            } => hardcore_random(*dim, *min_dist, *radius, seed.unwrap_or(run_seed)),
            PointSetConfig::Csv { path } => {
                let f = std::fs::File::open(path)?;
                PointSet::read_csv(std::io::BufReader::new(f))
            }
            PointSetConfig::Explicit { points, label } => PointSet::from_points(points, label.clone()),
        }
    }

    /// Fills in the run seed for generators that take one.
    pub fn resolved(&self, run_seed: u64) -> PointSetConfig {
        match self {
            PointSetConfig::Hardcore {
                dim,
                min_dist,
                radius,
                seed,
            } => PointSetConfig::Hardcore {
                dim: *dim,
                min_dist: *min_dist,
                radius: *radius,
                seed: Some(seed.unwrap_or(run_seed)),
            },
            other => other.clone(),
        }
    }
}

/// Which rounding of `d` the theorem-level evaluators use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DChoice {
    #[default]
    Rounded,
    Precise,
}

impl DChoice {
    pub fn params(self) -> RateParams {
        match self {
            DChoice::Rounded => RateParams::rounded(),
            DChoice::Precise => RateParams::precise(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GenPointsetParams {
    pub pointset: PointSetConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ConstantsParams {
    #[serde(default)]
    pub d: DChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LdMode {
    /// Monte Carlo tail frequencies with Clopper–Pearson intervals.
    #[default]
    MonteCarlo,
    /// Exact tail probabilities by enumeration.
    Exact,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunLdParams {
    pub pointset: PointSetConfig,
    pub scatterers: ScattererDoc,
    pub observable: ObservableConfig,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_ld_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub mode: LdMode,
    /// Defaults to both forms for the scatterer model.
    #[serde(default)]
    pub theorems: Vec<Theorem>,
    #[serde(default)]
    pub d: DChoice,
}

fn default_ld_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CltThresholds {
    pub ks: f64,
    pub skewness: f64,
    /// Bound on `|kurtosis - 3|`.
    pub kurtosis: f64,
}

impl Default for CltThresholds {
    fn default() -> Self {
        CltThresholds {
            ks: 0.02,
            skewness: 0.1,
            kurtosis: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunCltParams {
    pub pointset: PointSetConfig,
    pub scatterers: ScattererDoc,
    pub observable: ObservableConfig,
    #[serde(default = "default_ld_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub thresholds: CltThresholds,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VerifyNormsParams {
    pub pointsets: Vec<PointSetConfig>,
    pub sigmas: Vec<f64>,
    /// `delta` values as fractions of the minimal distance; each must stay
    /// below `1/4`.
    pub delta_fractions: Vec<f64>,
    /// Slack allowed on top of the numerical tolerance.
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_slack() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VerifyLaplaceParams {
    pub pointset: PointSetConfig,
    pub scatterers: ScattererDoc,
    pub observable: ObservableConfig,
    /// Target values of the scale as fractions of `d`; each in `[0, 1]`.
    pub scale_fractions: Vec<f64>,
    #[serde(default)]
    pub d: DChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    GenPointset,
    Constants,
    RunLd,
    RunClt,
    VerifyNorms,
    VerifyLaplace,
}

/// A command with its typed parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    GenPointset(GenPointsetParams),
    Constants(ConstantsParams),
    RunLd(RunLdParams),
    RunClt(RunCltParams),
    VerifyNorms(VerifyNormsParams),
    VerifyLaplace(VerifyLaplaceParams),
}

impl Command {
    pub fn name(&self) -> CommandName {
        match self {
            Command::GenPointset(_) => CommandName::GenPointset,
            Command::Constants(_) => CommandName::Constants,
            Command::RunLd(_) => CommandName::RunLd,
            Command::RunClt(_) => CommandName::RunClt,
            Command::VerifyNorms(_) => CommandName::VerifyNorms,
            Command::VerifyLaplace(_) => CommandName::VerifyLaplace,
        }
    }

    /// Resolved parameters as JSON.
    pub fn parameters(&self) -> serde_json::Value {
        let v = match self {
            Command::GenPointset(p) => serde_json::to_value(p),
            Command::Constants(p) => serde_json::to_value(p),
            Command::RunLd(p) => serde_json::to_value(p),
            Command::RunClt(p) => serde_json::to_value(p),
            Command::VerifyNorms(p) => serde_json::to_value(p),
            Command::VerifyLaplace(p) => serde_json::to_value(p),
        };
        v.expect("parameter structs always serialize")
    }
}

/// One run of the command-line tool.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandName,
    #[serde(default)]
    pub parameters: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn typed<T: serde::de::DeserializeOwned>(v: &serde_json::Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("parameters: {e}")))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `parameters` for the named command.
    pub fn command(&self) -> Result<Command> {
        let p = if self.parameters.is_null() {
            serde_json::Value::Object(Default::default())
        } else {
            self.parameters.clone()
        };
        Ok(match self.command {
            CommandName::GenPointset => Command::GenPointset(typed(&p)?),
            CommandName::Constants => Command::Constants(typed(&p)?),
            CommandName::RunLd => Command::RunLd(typed(&p)?),
            CommandName::RunClt => Command::RunClt(typed(&p)?),
            CommandName::VerifyNorms => Command::VerifyNorms(typed(&p)?),
            CommandName::VerifyLaplace => Command::VerifyLaplace(typed(&p)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"command":"run-ld","seed":3,"parameters":{
                "pointset":{"kind":"lattice","dim":1,"spacing":1,"radius":31.5},
                "scatterers":{"kind":"A","default":{"support":[[1],[-1]],"probs":[0.5,0.5]}},
                "observable":{"type":"gaussian","sigma":1},
                "epsilons":[0.1]}}"#,
        )
        .unwrap();
        let cmd = cfg.command().unwrap();
        let resolved = cmd.parameters();
        assert_eq!(resolved["n_samples"], 10_000);
        assert_eq!(resolved["mode"], "monte_carlo");
        assert_eq!(resolved["d"], "rounded");
        let c = RunConfig::from_json(r#"{"command":"constants"}"#).unwrap();
        assert_eq!(c.command().unwrap(), Command::Constants(ConstantsParams::default()));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_json(r#"{"command":"constants","bogus":1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"command":"frobnicate"}"#).is_err());
        let c = RunConfig::from_json(r#"{"command":"constants","parameters":{"d":"rounded","x":1}}"#).unwrap();
        assert!(c.command().is_err());
        let c = RunConfig::from_json(
            r#"{"command":"gen-pointset","parameters":{"pointset":{"kind":"lattice","dim":1,"spacing":1,"radius":2,"extra":0}}}"#,
        )
        .unwrap();
        assert!(c.command().is_err());
    }
}
