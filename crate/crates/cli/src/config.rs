//! Declarative run configuration (TOML).
//!
//! ```toml
//! [grid]
//! factors = [{ name = "bulb", levels = ["Hlgn", "LED"] }]
//!
//! [[grid.extra_blocks]]
//! product = { bulb = ["UV"] }
//!
//! [manifest]
//! baseline_subject = "No-Patch"
//! target_class = "vase"
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use advscore::detect::{CountMode, PostprocessConfig};
use advscore::ingest::{DatasetManifest, Schema};
use advscore::model::{BaselineAlias, Condition, ConditionGrid, Factor};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, ConfigErr};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub postprocess: Option<PostprocessSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<StatsSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub factors: Vec<Factor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_blocks: Vec<ExtraBlock>,
}

/// Either an explicit list of conditions or the product of per-factor level
/// lists. Products enumerate in grid factor order, first factor slowest, and
/// must name every factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ExtraBlock {
    Conditions {
        conditions: Vec<Condition>,
    },
    Product {
        product: BTreeMap<String, Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<Schema>,
    pub baseline_subject: String,
    #[serde(default = "default_target")]
    pub target_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_frames_expected: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_alias: Option<BaselineAlias>,
    /// Grid factor whose levels are subject labels rather than scene
    /// settings. It counts toward the grid but is carried by the subject in
    /// data files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_factor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict: Option<bool>,
}

fn default_target() -> String {
    "vase".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostprocessSection {
    pub objectness_threshold: Option<f64>,
    pub nms_iou_threshold: Option<f64>,
    pub count_mode: Option<CountMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub level: Option<f64>,
    pub ridge: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ConfigFile =
            toml::from_str(text).map_err(|e| CliError::Config(e.message().to_owned()))?;
        cfg.full_grid()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// The full design, including any subject-bound factor.
    pub fn full_grid(&self) -> Result<ConditionGrid, CliError> {
        let factors = self.grid.factors.clone();
        let mut blocks = Vec::with_capacity(self.grid.extra_blocks.len());
        for b in &self.grid.extra_blocks {
            blocks.push(match b {
                ExtraBlock::Conditions { conditions } => conditions.clone(),
                ExtraBlock::Product { product } => product_block(&factors, product)?,
            });
        }
        ConditionGrid::with_extras(factors, blocks).config_err()
    }

    pub fn subject_factor(&self) -> Option<&str> {
        self.manifest
            .as_ref()
            .and_then(|m| m.subject_factor.as_deref())
    }

    /// The grid data files are checked against: the full grid without the
    /// subject-bound factor, duplicate conditions collapsed.
    pub fn data_grid(&self) -> Result<ConditionGrid, CliError> {
        let full = self.full_grid()?;
        let Some(sf) = self.subject_factor() else {
            return Ok(full);
        };
        if full.factor(sf).is_none() {
            return Err(CliError::Config(format!(
                "subject_factor `{sf}` is not a grid factor"
            )));
        }
        let factors: Vec<Factor> = full
            .factors
            .iter()
            .filter(|f| f.name != sf)
            .cloned()
            .collect();
        if factors.is_empty() {
            return Err(CliError::Config(
                "subject_factor cannot be the only factor".into(),
            ));
        }
        let blocks = full
            .extra_blocks
            .iter()
            .map(|block| {
                let mut out: Vec<Condition> = Vec::new();
                for c in block {
                    let stripped = Condition::from_pairs(c.iter().filter(|(k, _)| *k != sf));
                    if !out.contains(&stripped) {
                        out.push(stripped);
                    }
                }
                out
            })
            .collect();
        ConditionGrid::with_extras(factors, blocks).config_err()
    }

    /// Manifest for `schema`, with command-line overrides applied.
    pub fn manifest(
        &self,
        schema: Schema,
        strict: Option<bool>,
    ) -> Result<DatasetManifest, CliError> {
        let m = self
            .manifest
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no [manifest] section".into()))?;
        if let Some(s) = m.schema {
            if s != schema {
                return Err(CliError::Config(format!(
                    "manifest schema is {s:?} but the input is {schema:?}"
                )));
            }
        }
        let mut out = DatasetManifest::new(
            schema,
            self.data_grid()?,
            &m.baseline_subject,
            &m.target_class,
        );
        out.n_frames_expected = m.n_frames_expected;
        out.baseline_alias = m.baseline_alias.clone();
        out.strict = strict.or(m.strict).unwrap_or(true);
        out.validate().config_err()?;
        Ok(out)
    }

    pub fn postprocess(
        &self,
        count_mode: Option<CountMode>,
    ) -> Result<PostprocessConfig, CliError> {
        let mut cfg = PostprocessConfig::default();
        if let Some(p) = &self.postprocess {
            cfg.objectness_threshold = p.objectness_threshold.unwrap_or(cfg.objectness_threshold);
            cfg.nms_iou_threshold = p.nms_iou_threshold.unwrap_or(cfg.nms_iou_threshold);
            cfg.count_mode = p.count_mode.unwrap_or(cfg.count_mode);
        }
        if let Some(m) = count_mode {
            cfg.count_mode = m;
        }
        cfg.validate().config_err()?;
        Ok(cfg)
    }
}

fn product_block(
    factors: &[Factor],
    product: &BTreeMap<String, Vec<String>>,
) -> Result<Vec<Condition>, CliError> {
    if let Some(name) = product
        .keys()
        .find(|k| !factors.iter().any(|f| &f.name == *k))
    {
        return Err(CliError::Config(format!(
            "extra block names unknown factor `{name}`"
        )));
    }
    let mut lists = Vec::with_capacity(factors.len());
    for f in factors {
        let levels = product
            .get(&f.name)
            .filter(|l| !l.is_empty())
            .ok_or_else(|| {
                CliError::Config(format!(
                    "extra block product is missing factor `{}`",
                    f.name
                ))
            })?;
        lists.push((f.name.as_str(), levels));
    }
    let mut out = vec![Condition::new()];
    for (name, levels) in lists {
        out = out
            .into_iter()
            .flat_map(|c| levels.iter().map(move |l| c.clone().with(name, l.clone())))
            .collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use advscore::model::enumerate_grid;

    const EXP2: &str = include_str!("../../core/fixtures/exp2.toml");

    #[test]
    fn subject_factor_is_stripped_from_data_grid() {
        let cfg = ConfigFile::parse(EXP2).unwrap();
        assert_eq!(
            enumerate_grid(&cfg.full_grid().unwrap()).unwrap().len(),
            180
        );
        let data = cfg.data_grid().unwrap();
        assert!(data.factor("object").is_none());
        // Each stripped extra condition appears once.
        assert_eq!(enumerate_grid(&data).unwrap().len(), 72 + 18);
    }

    #[test]
    fn product_must_name_every_factor() {
        let text = r#"
            [grid]
            factors = [{ name = "a", levels = ["x"] }, { name = "b", levels = ["y"] }]
            [[grid.extra_blocks]]
            product = { a = ["z"] }
        "#;
        let err = ConfigFile::parse(text).unwrap_err();
        assert!(err.to_string().contains("missing factor `b`"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[grid]\nfactors = [{ name = \"a\", levels = [\"x\"] }]\nfoo = 1\n";
        assert!(matches!(ConfigFile::parse(text), Err(CliError::Config(_))));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ConfigFile::parse(EXP2).unwrap();
        assert_eq!(ConfigFile::parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn command_line_count_mode_wins() {
        let text = "[grid]\nfactors = [{ name = \"a\", levels = [\"x\"] }]\n[postprocess]\ncount_mode = \"frames\"\n";
        let cfg = ConfigFile::parse(text).unwrap();
        assert_eq!(cfg.postprocess(None).unwrap().count_mode, CountMode::Frames);
        assert_eq!(
            cfg.postprocess(Some(CountMode::Detections))
                .unwrap()
                .count_mode,
            CountMode::Detections
        );
    }
}
