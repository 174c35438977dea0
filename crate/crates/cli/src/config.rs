//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rbnn::bnn::BnnConfig;
use rbnn::ffnn::FfnnConfig;
use rbnn::{Activation, DataSchema, ModelKind, RbnnConfig, Topology};
use serde::{Deserialize, Serialize};

fn default_test_fraction() -> f64 {
    0.2
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Schema given inline or as a path to a JSON file, relative to the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaSource {
    Inline(DataSchema),
    Path(PathBuf),
}

/// One experiment: the data, the network shape and the trainer blocks.
///
/// Either `model` (for `train`) or `models` (for `compare`) is set. Every
/// selected model needs its own block and unused blocks are rejected. The
/// top-level `seed` drives the split and is copied into every trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<ModelKind>>,
    pub data_path: PathBuf,
    pub schema: SchemaSource,
    pub topology: Vec<usize>,
    pub activations: Vec<Activation>,
    #[serde(default)]
    pub use_bias: bool,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rbnn: Option<RbnnConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ffnn: Option<FfnnConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bnn: Option<BnnConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Parses JSON text and copies `seed` into the trainer blocks. Errors
    /// name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("invalid config field `{path}`: {}", e.into_inner())
        })?;
        let seed = cfg.seed;
        Ok(cfg.with_seed(seed))
    }

    /// Reads a config file and resolves `data_path`, a schema path and
    /// `output_dir` against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.data_path = base.join(&cfg.data_path);
        cfg.output_dir = base.join(&cfg.output_dir);
        if let SchemaSource::Path(p) = &cfg.schema {
            cfg.schema = SchemaSource::Path(base.join(p));
        }
        Ok(cfg)
    }

    pub fn schema(&self) -> Result<DataSchema> {
        match &self.schema {
            SchemaSource::Inline(s) => Ok(s.clone()),
            SchemaSource::Path(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading schema {}", p.display()))?;
                let de = &mut serde_json::Deserializer::from_str(&text);
                serde_path_to_error::deserialize(de).map_err(|e| {
                    let path = e.path().to_string();
                    anyhow::anyhow!("invalid schema field `{path}` in {}: {}", p.display(), e.into_inner())
                })
            }
        }
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::new(self.topology.clone(), self.activations.clone(), self.use_bias)
            .context("invalid config field `topology`/`activations`")
    }

    /// The models this config runs, in order.
    pub fn selected_models(&self) -> Result<Vec<ModelKind>> {
        let models = match (&self.model, &self.models) {
            (Some(m), None) => vec![*m],
            (None, Some(ms)) if !ms.is_empty() => ms.clone(),
            (None, Some(_)) => bail!("invalid config field `models`: list is empty"),
            (None, None) => bail!("invalid config field `model`: one of `model` or `models` is required"),
            (Some(_), Some(_)) => bail!("invalid config field `models`: give either `model` or `models`, not both"),
        };
        for (i, m) in models.iter().enumerate() {
            if models[..i].contains(m) {
                bail!("invalid config field `models`: {m} is listed twice");
            }
        }
        for kind in [ModelKind::Rbnn, ModelKind::Ffnn, ModelKind::Bnn] {
            let present = match kind {
                ModelKind::Rbnn => self.rbnn.is_some(),
                ModelKind::Ffnn => self.ffnn.is_some(),
                ModelKind::Bnn => self.bnn.is_some(),
            };
            match (models.contains(&kind), present) {
                (true, false) => bail!("invalid config field `{kind}`: block required for the selected model"),
                (false, true) => bail!("invalid config field `{kind}`: block given but {kind} is not selected"),
                _ => {}
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bail!(
                "invalid config field `test_fraction`: must lie in (0, 1), got {}",
                self.test_fraction
            );
        }
        Ok(models)
    }

    /// Copies the experiment seed into every trainer block.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let Some(r) = &mut self.rbnn {
            r.cem.seed = seed;
        }
        if let Some(f) = &mut self.ffnn {
            f.seed = seed;
        }
        if let Some(b) = &mut self.bnn {
            b.seed = seed;
        }
        self
    }

    /// Sets candidate scoring to run on the thread pool or serially.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        if let Some(r) = &mut self.rbnn {
            r.cem.parallel = parallel;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "model": "rbnn",
        "data_path": "iris.csv",
        "schema": {"label_column": "species"},
        "topology": [4, 8, 3],
        "activations": ["tanh", "softmax"],
        "rbnn": {"cem": {"iterations": 5}}
    }"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.selected_models().unwrap(), vec![ModelKind::Rbnn]);
        assert_eq!(cfg.test_fraction, 0.2);
        assert!(cfg.topology().is_ok());
    }

    #[test]
    fn misspelt_model_names_the_field() {
        let err = ExperimentConfig::from_json(&BASE.replace("\"rbnn\",", "\"rbmm\",")).unwrap_err();
        assert!(err.to_string().contains("`model`"), "{err}");
    }

    #[test]
    fn nested_errors_carry_their_path() {
        let err = ExperimentConfig::from_json(&BASE.replace("\"iterations\": 5", "\"iterations\": -5")).unwrap_err();
        assert!(err.to_string().contains("rbnn.cem.iterations"), "{err}");
    }

    #[test]
    fn stray_block_is_rejected() {
        let text = BASE.replace("\"rbnn\": {", "\"ffnn\": {\"epochs\": 3}, \"rbnn\": {");
        let err = ExperimentConfig::from_json(&text)
            .unwrap()
            .selected_models()
            .unwrap_err();
        assert!(err.to_string().contains("`ffnn`"), "{err}");
    }

    #[test]
    fn seed_reaches_every_block() {
        let cfg = ExperimentConfig::from_json(&BASE.replace("\"model\"", "\"seed\": 4, \"model\"")).unwrap();
        assert_eq!(cfg.rbnn.as_ref().unwrap().cem.seed, 4);
        assert_eq!(cfg.with_seed(9).rbnn.unwrap().cem.seed, 9);
    }
}
