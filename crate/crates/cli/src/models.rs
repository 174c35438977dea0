//! Trained models and their `model.json` form.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rbnn::bnn::{BnnModel, VariationalParams};
use rbnn::data::NormalizationStats;
use rbnn::ffnn::FfnnModel;
use rbnn::{
    Activation, Classifier, ColumnGaussians, Dataset, InferenceMode, Matrix, ModelKind, RbnnModel, Topology, WeightSet,
};
use serde::{Deserialize, Serialize};

/// What a saved model needs to turn raw feature rows into class names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationStats>,
}

impl Preprocessing {
    pub fn from_dataset(data: &Dataset) -> Self {
        Self {
            class_names: data.class_names.clone(),
            feature_names: data.feature_names.clone(),
            normalization: data.normalization.clone(),
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_true(b: &bool) -> bool {
    *b
}

fn default_true() -> bool {
    true
}

/// RBNN distribution state: one mean per non-input neuron and the shared
/// deviation. No per-edge values unless the best weight set is retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbnnDistribution {
    pub topology: Vec<usize>,
    pub activations: Vec<Activation>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub use_bias: bool,
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
    pub inference_mode: InferenceMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_weights: Option<WeightSet>,
    pub seed: u64,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub clamp_weights: bool,
}

/// On-disk model, tagged by `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelFile {
    Rbnn {
        distribution: RbnnDistribution,
        preprocessing: Preprocessing,
    },
    Ffnn {
        topology: Vec<usize>,
        activations: Vec<Activation>,
        #[serde(default, skip_serializing_if = "is_false")]
        use_bias: bool,
        weights: WeightSet,
        preprocessing: Preprocessing,
    },
    Bnn {
        topology: Vec<usize>,
        activations: Vec<Activation>,
        #[serde(default, skip_serializing_if = "is_false")]
        use_bias: bool,
        mu: Vec<Matrix>,
        rho: Vec<Matrix>,
        mc_eval: usize,
        seed: u64,
        preprocessing: Preprocessing,
    },
}

/// A model returned by any of the three trainers.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Rbnn(RbnnModel),
    Ffnn(FfnnModel),
    Bnn(BnnModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Rbnn(_) => ModelKind::Rbnn,
            TrainedModel::Ffnn(_) => ModelKind::Ffnn,
            TrainedModel::Bnn(_) => ModelKind::Bnn,
        }
    }

    pub fn to_file(&self, preprocessing: Preprocessing) -> ModelFile {
        let topo = self.topology();
        let (topology, activations, use_bias) = (
            topo.layer_sizes().to_vec(),
            topo.activations().to_vec(),
            topo.use_bias(),
        );
        match self {
            TrainedModel::Rbnn(m) => ModelFile::Rbnn {
                distribution: RbnnDistribution {
                    topology,
                    activations,
                    use_bias,
                    means: m.params.means.clone(),
                    sigma: m.params.sigma,
                    inference_mode: m.inference,
                    best_weights: match m.inference {
                        InferenceMode::BestCandidate => m.best.clone(),
                        _ => None,
                    },
                    seed: m.seed,
                    clamp_weights: m.params.clamp_weights,
                },
                preprocessing,
            },
            TrainedModel::Ffnn(m) => ModelFile::Ffnn {
                topology,
                activations,
                use_bias,
                weights: m.weights.clone(),
                preprocessing,
            },
            TrainedModel::Bnn(m) => ModelFile::Bnn {
                topology,
                activations,
                use_bias,
                mu: m.params.mu.clone(),
                rho: m.params.rho.clone(),
                mc_eval: m.mc_eval,
                seed: m.seed,
                preprocessing,
            },
        }
    }
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            anyhow::anyhow!(
                "invalid model field `{field}` in {}: {}",
                path.display(),
                e.into_inner()
            )
        })
    }

    pub fn preprocessing(&self) -> &Preprocessing {
        match self {
            ModelFile::Rbnn { preprocessing, .. }
            | ModelFile::Ffnn { preprocessing, .. }
            | ModelFile::Bnn { preprocessing, .. } => preprocessing,
        }
    }

    /// Rebuilds the in-memory model, checking every shape against the topology.
    pub fn into_model(self) -> Result<(TrainedModel, Preprocessing)> {
        match self {
            ModelFile::Rbnn {
                distribution: d,
                preprocessing,
            } => {
                let topo = Topology::new(d.topology, d.activations, d.use_bias)?;
                let params = ColumnGaussians::new(&topo, d.means, d.sigma, d.clamp_weights)?;
                if d.inference_mode == InferenceMode::BestCandidate && d.best_weights.is_none() {
                    bail!("model field `distribution.best_weights` is required for best_candidate inference");
                }
                if let Some(ws) = &d.best_weights {
                    ws.check(&topo)?;
                }
                let model = RbnnModel {
                    params,
                    best: d.best_weights,
                    inference: d.inference_mode,
                    seed: d.seed,
                };
                Ok((TrainedModel::Rbnn(model), preprocessing))
            }
            ModelFile::Ffnn {
                topology,
                activations,
                use_bias,
                weights,
                preprocessing,
            } => {
                let topo = Topology::new(topology, activations, use_bias)?;
                weights.check(&topo)?;
                Ok((TrainedModel::Ffnn(FfnnModel { topo, weights }), preprocessing))
            }
            ModelFile::Bnn {
                topology,
                activations,
                use_bias,
                mu,
                rho,
                mc_eval,
                seed,
                preprocessing,
            } => {
                let topo = Topology::new(topology, activations, use_bias)?;
                WeightSet::new(mu.clone()).check(&topo)?;
                WeightSet::new(rho.clone()).check(&topo)?;
                if mc_eval == 0 {
                    bail!("model field `mc_eval` must be at least 1");
                }
                let params = VariationalParams { topo, mu, rho };
                Ok((TrainedModel::Bnn(BnnModel { params, mc_eval, seed }), preprocessing))
            }
        }
    }
}

impl Classifier for TrainedModel {
    fn topology(&self) -> &Topology {
        match self {
            TrainedModel::Rbnn(m) => m.topology(),
            TrainedModel::Ffnn(m) => m.topology(),
            TrainedModel::Bnn(m) => m.topology(),
        }
    }

    fn predict_batch(&self, x: &Matrix) -> rbnn::Result<Matrix> {
        match self {
            TrainedModel::Rbnn(m) => m.predict_batch(x),
            TrainedModel::Ffnn(m) => m.predict_batch(x),
            TrainedModel::Bnn(m) => m.predict_batch(x),
        }
    }
}
