//! TOML run configuration shared by all subcommands.
//!
//! Every section is optional and defaults to the Hardy-Weinberg power
//! experiment; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::manifold::{EmbedParams, GraphRule};
use crate::montecarlo::{
    Arm, AuxiliaryDistribution, CommunityDistribution, CurveSpec, MetricSpec, PowerConfig,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Short description of the file layout, shown with config errors.
pub const SCHEMA_HINT: &str = "\
config files are TOML with `schema_version = 1`, an optional `seed` and the sections
[model] [test] [embed] [power] [converge] [simulate] [ase] [isomap];
see configs/example1.toml for a complete example";

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub test: TestSection,
    #[serde(default)]
    pub embed: EmbedParams,
    #[serde(default)]
    pub power: PowerSection,
    #[serde(default)]
    pub converge: ConvergeSection,
    #[serde(default)]
    pub simulate: ReplicateSection,
    #[serde(default)]
    pub ase: AseSection,
    #[serde(default)]
    pub isomap: IsomapSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// `hardy-weinberg` or `polynomial`.
    pub curve: String,
    /// Polynomial coefficients per coordinate, increasing powers.
    pub coefficients: Option<Vec<Vec<f64>>>,
    pub community_size: usize,
    pub auxiliary_count: usize,
    pub tau_null: f64,
    pub tau_alt: f64,
    pub community: CommunityDistribution,
    pub auxiliary: AuxiliaryDistribution,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = PowerConfig::example1();
        ModelSection {
            curve: "hardy-weinberg".into(),
            coefficients: None,
            community_size: p.community_size,
            auxiliary_count: p.auxiliary_count,
            tau_null: p.tau_null,
            tau_alt: p.tau_alt,
            community: p.community,
            auxiliary: p.auxiliary,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TestSection {
    pub alpha: f64,
    pub radius: f64,
    pub metric: MetricSpec,
    pub largest_component: bool,
    /// Replicate evaluated by the `test` subcommand.
    pub arm: Arm,
    pub index: usize,
}

impl Default for TestSection {
    fn default() -> Self {
        TestSection {
            alpha: 0.05,
            radius: 1.0,
            metric: MetricSpec::Identity,
            largest_component: false,
            arm: Arm::Alternative,
            index: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSection {
    pub replicates: usize,
}

impl Default for PowerSection {
    fn default() -> Self {
        PowerSection { replicates: 1000 }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeSection {
    pub m_values: Vec<usize>,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        ConvergeSection {
            m_values: vec![100, 300, 1000],
        }
    }
}

/// Which replicate `simulate` and `ase` draw.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ReplicateSection {
    pub arm: Arm,
    pub index: usize,
}

impl Default for ReplicateSection {
    fn default() -> Self {
        ReplicateSection {
            arm: Arm::Null,
            index: 0,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AseSection {
    /// Edge-list CSV to embed. Without it a graph is simulated as in
    /// `[simulate]`.
    pub adjacency: Option<PathBuf>,
    /// Embedding dimension; defaults to the curve dimension.
    pub rank: Option<usize>,
    /// Rotate a simulated embedding onto the true latent positions.
    pub align: bool,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum PointSource {
    /// `samples` evenly spaced points from `start` to `end`.
    Segment {
        start: Vec<f64>,
        end: Vec<f64>,
        samples: usize,
    },
    /// `samples` points on the model curve at uniform random parameters.
    Curve { samples: usize },
    /// A `v,x1..xk` file.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IsomapSection {
    pub source: PointSource,
    pub graph: GraphRule,
    pub largest_component: bool,
}

impl Default for IsomapSection {
    fn default() -> Self {
        IsomapSection {
            source: PointSource::Curve { samples: 200 },
            graph: GraphRule::Epsilon { radius: 0.1 },
            largest_component: false,
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("{}\n{SCHEMA_HINT}", e.message())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}\n{SCHEMA_HINT}", path.display())))?;
        let mut cfg = ConfigFile::parse(&text)?;
        // relative input paths are taken relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(p) = cfg.ase.adjacency.as_mut() {
            *p = base.join(&*p);
        }
        if let PointSource::Csv { path } = &mut cfg.isomap.source {
            *path = base.join(&*path);
        }
        Ok(cfg)
    }

    pub fn curve_spec(&self) -> Result<CurveSpec> {
        match (self.model.curve.as_str(), &self.model.coefficients) {
            ("hardy-weinberg", None) => Ok(CurveSpec::HardyWeinberg),
            ("polynomial", Some(c)) => Ok(CurveSpec::Polynomial {
                coefficients: c.clone(),
            }),
            ("polynomial", None) => Err(Error::Config("curve `polynomial` needs `coefficients`".into())),
            ("hardy-weinberg", Some(_)) => {
                Err(Error::Config("`coefficients` only applies to curve `polynomial`".into()))
            }
            (other, _) => Err(Error::Config(format!(
                "unknown curve `{other}` (expected `hardy-weinberg` or `polynomial`)"
            ))),
        }
    }

    pub fn power_config(&self) -> Result<PowerConfig> {
        let cfg = PowerConfig {
            curve: self.curve_spec()?,
            community_size: self.model.community_size,
            auxiliary_count: self.model.auxiliary_count,
            tau_null: self.model.tau_null,
            tau_alt: self.model.tau_alt,
            community: self.model.community.clone(),
            auxiliary: self.model.auxiliary.clone(),
            alpha: self.test.alpha,
            replicates: self.power.replicates,
            radius: self.test.radius,
            metric: self.test.metric.clone(),
            seed: self.seed,
            embed: self.embed,
            largest_component: self.test.largest_component,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_is_example1() {
        let cfg = ConfigFile::parse("schema_version = 1\nseed = 7\n").unwrap();
        assert_eq!(cfg.power_config().unwrap(), PowerConfig::example1());
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(ConfigFile::parse("schema_version = 1\nbogus = 3\n").is_err());
        assert!(ConfigFile::parse("schema_version = 1\n[model]\nsize = 3\n").is_err());
        assert!(ConfigFile::parse("schema_version = 2\n").is_err());
        assert!(ConfigFile::parse("seed = 2\n").is_err());
    }

    #[test]
    fn nested_tables() {
        let text = r#"
schema_version = 1
[model]
curve = "polynomial"
coefficients = [[0.1, 0.5], [0.6, -0.5]]
community = { kind = "truncated-normal", sd = 0.02 }
auxiliary = { kind = "beta", a = 2.0, b = 3.0 }
[test]
metric = { kind = "diagonal", entries = [1.0, 2.0] }
arm = "null"
[isomap]
source = { kind = "segment", start = [0.0, 0.0], end = [1.0, 1.0], samples = 10 }
graph = { rule = "knn", neighbors = 3 }
"#;
        let cfg = ConfigFile::parse(text).unwrap();
        let p = cfg.power_config().unwrap();
        assert_eq!(p.community, CommunityDistribution::TruncatedNormal { sd: 0.02 });
        assert_eq!(cfg.isomap.graph, GraphRule::Knn { neighbors: 3 });
        assert_eq!(cfg.test.arm, Arm::Null);
        assert!(matches!(p.curve, CurveSpec::Polynomial { .. }));
    }

    #[test]
    fn curve_errors() {
        let cfg = ConfigFile::parse("schema_version = 1\n[model]\ncurve = \"spiral\"\n").unwrap();
        assert!(cfg.power_config().is_err());
        let cfg = ConfigFile::parse("schema_version = 1\n[model]\ncurve = \"polynomial\"\n").unwrap();
        assert!(cfg.power_config().is_err());
    }
}
