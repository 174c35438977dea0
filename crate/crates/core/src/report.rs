use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::network::{accuracy, per_class_recall, Topology};

/// One row of a training trajectory. Gradient baselines leave the
/// population and elite columns empty and put their total error in
/// `best_error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration or epoch.
    pub iteration: usize,
    pub population_mean_error: Option<f64>,
    pub elite_mean_error: Option<f64>,
    pub best_error: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Variational baseline only: summed negative log-likelihood and
    /// weighted KL contribution of the epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nll: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
}

impl IterationRecord {
    pub fn new(iteration: usize, best_error: f64, train_accuracy: f64, test_accuracy: Option<f64>) -> Self {
        Self {
            iteration,
            population_mean_error: None,
            elite_mean_error: None,
            best_error,
            train_accuracy,
            test_accuracy,
            nll: None,
            kl: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport<M> {
    pub model: M,
    pub records: Vec<IterationRecord>,
    pub wall_time_seconds: f64,
    /// Trained parameters as counted by [`crate::network::param_count`].
    pub params_stored: usize,
    /// Extra scalars the chosen inference rule keeps on top of
    /// `params_stored` (the retained weight set of best-candidate RBNN).
    pub inference_scalars: usize,
    pub seed: u64,
}

impl<M> TrainReport<M> {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("reports hold at least one record")
    }
}

/// Anything that maps feature rows to class probabilities.
pub trait Classifier {
    fn topology(&self) -> &Topology;

    fn predict_batch(&self, x: &Matrix) -> Result<Matrix>;

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.predict_batch(&m)?.row(0).to_vec())
    }

    fn accuracy_on(&self, data: &Dataset) -> Result<f64> {
        accuracy(&data.y, &self.predict_batch(&data.x)?)
    }

    fn recall_on(&self, data: &Dataset) -> Result<Vec<Option<f64>>> {
        per_class_recall(&data.y, &self.predict_batch(&data.x)?)
    }
}
