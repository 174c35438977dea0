//! Restricted Bayesian neural network.
//!
//! Every incoming weight of neuron `k` in layer `l` is drawn from
//! `N(mu[l][k], sigma^2)`; the network stores one mean per non-input neuron
//! plus a single shared deviation. Training is a cross-entropy search over
//! those means: sample whole weight sets, score each on the full training
//! set, refit the column means to the elite.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cem::{elite_weights, hull_average, select_elite, smooth_step, CemConfig, Direction, Scored, Weighting};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{
    forward, forward_batch, param_count, target_for_output, total_error, LossKind, ModelKind, Topology, WeightSet,
};
use crate::report::{Classifier, IterationRecord, TrainReport};
use crate::rng::{Purpose, RngStreams};

fn default_true() -> bool {
    true
}

/// The stored distribution state: per-neuron means and one shared deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnGaussians {
    pub topo: Topology,
    /// `means[l][k]` for weight layer `l` (0-based) and destination neuron `k`.
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
    #[serde(default = "default_true")]
    pub clamp_weights: bool,
}

impl ColumnGaussians {
    pub fn zeros(topo: &Topology, sigma: f64) -> Self {
        let means = topo.layer_sizes()[1..].iter().map(|&n| vec![0.0; n]).collect();
        Self {
            topo: topo.clone(),
            means,
            sigma,
            clamp_weights: true,
        }
    }

    pub fn new(topo: &Topology, means: Vec<Vec<f64>>, sigma: f64, clamp_weights: bool) -> Result<Self> {
        let params = Self {
            topo: topo.clone(),
            means,
            sigma,
            clamp_weights,
        };
        params.check()?;
        Ok(params)
    }

    pub fn check(&self) -> Result<()> {
        let sizes = &self.topo.layer_sizes()[1..];
        if self.means.len() != sizes.len() {
            return Err(Error::Length {
                what: "mean layers",
                expected: sizes.len(),
                found: self.means.len(),
            });
        }
        for (l, (m, &n)) in self.means.iter().zip(sizes).enumerate() {
            if m.len() != n {
                return Err(Error::LayerShape {
                    layer: l + 1,
                    expected: format!("{n} means"),
                    found: format!("{} means", m.len()),
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("means of layer {}", l + 1)));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidSigma(self.sigma));
        }
        Ok(())
    }

    /// Number of stored mean scalars.
    pub fn mean_count(&self) -> usize {
        self.means.iter().map(Vec::len).sum()
    }

    fn clamp(&self, w: f64) -> f64 {
        if self.clamp_weights {
            w.clamp(-1.0, 1.0)
        } else {
            w
        }
    }

    /// The weight set whose column `k` is filled with `mu[l][k]`.
    pub fn mean_weights(&self) -> WeightSet {
        WeightSet::from_fn(&self.topo, |l, _, k| self.clamp(self.means[l][k]))
    }
}

/// Draws one weight set, column by column.
pub fn sample_weightset<R: Rng + ?Sized>(params: &ColumnGaussians, rng: &mut R) -> WeightSet {
    let matrices = params
        .topo
        .weight_shapes()
        .enumerate()
        .map(|(l, (rows, cols))| {
            let mut m = Matrix::zeros(rows, cols);
            for k in 0..cols {
                let mu = params.means[l][k];
                for i in 0..rows {
                    let z: f64 = rng.sample(StandardNormal);
                    m[(i, k)] = params.clamp(mu + params.sigma * z);
                }
            }
            m
        })
        .collect();
    WeightSet::new(matrices)
}

/// How a trained model turns inputs into probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    /// Every weight of column `k` set to its mean.
    MeanWeights,
    /// Average of this many forwards over freshly sampled weight sets.
    Ensemble(usize),
    /// The best-scoring weight set seen during training.
    #[default]
    BestCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbnnConfig {
    pub cem: CemConfig,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub inference: InferenceMode,
    #[serde(default = "default_true")]
    pub clamp_weights: bool,
}

impl RbnnConfig {
    pub fn new(cem: CemConfig) -> Self {
        Self {
            cem,
            loss: LossKind::Mse,
            inference: InferenceMode::BestCandidate,
            clamp_weights: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cem.validate()?;
        if self.inference == InferenceMode::Ensemble(0) {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_data(topo: &Topology, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("training set has no rows".into()));
    }
    if data.num_features() != topo.input_dim() {
        return Err(Error::Config(format!(
            "topology expects {} inputs but the dataset has {} features",
            topo.input_dim(),
            data.num_features()
        )));
    }
    target_for_output(data.y.row(0), topo.output_dim())?;
    Ok(())
}

/// Samples `n` weight sets and scores each by its total error on `data`.
///
/// Candidate `i` of iteration `iteration` draws from its own stream, so the
/// result is the same with or without `parallel`.
pub fn evaluate_candidates(
    params: &ColumnGaussians,
    n: usize,
    data: &Dataset,
    loss: LossKind,
    streams: &RngStreams,
    iteration: usize,
    parallel: bool,
) -> Result<Vec<Scored<WeightSet>>> {
    let score_one = |i: usize| -> Result<Scored<WeightSet>> {
        let mut rng = streams.stream(Purpose::Candidate, iteration as u64, i as u64);
        let ws = sample_weightset(params, &mut rng);
        let wrap = |source| Error::Candidate {
            candidate: i,
            source: Box::new(source),
        };
        let score = total_error(&ws, &params.topo, data, loss).map_err(wrap)?;
        if !score.is_finite() {
            return Err(wrap(Error::NonFinite(format!("total error ({score})"))));
        }
        Ok(Scored { candidate: ws, score })
    };
    if parallel {
        (0..n).into_par_iter().map(score_one).collect()
    } else {
        (0..n).map(score_one).collect()
    }
}

/// Elite column-mean targets the smoothed update moves toward: for every
/// column, the weighted average over elite members of each member's mean
/// incoming weight.
pub fn elite_column_targets(
    params: &ColumnGaussians,
    elite: &[Scored<WeightSet>],
    weighting: Weighting,
) -> Vec<Vec<f64>> {
    assert!(!elite.is_empty(), "elite set must not be empty");
    let scores: Vec<f64> = elite.iter().map(|e| e.score).collect();
    let weights = elite_weights(&scores, weighting, Direction::Minimize);
    params
        .topo
        .weight_shapes()
        .enumerate()
        .map(|(l, (rows, cols))| {
            let row_weights = vec![1.0 / rows as f64; rows];
            (0..cols)
                .map(|k| {
                    let member_means = elite
                        .iter()
                        .map(|e| hull_average(e.candidate.layer(l).column(k), &row_weights));
                    hull_average(member_means, &weights)
                })
                .collect()
        })
        .collect()
}

/// Smoothed refit of every column mean to the elite, clamped to [-1, 1]
/// when weight clamping is on. The deviation is left to the caller.
pub fn fit_elite(
    params: &ColumnGaussians,
    elite: &[Scored<WeightSet>],
    alpha: f64,
    weighting: Weighting,
) -> ColumnGaussians {
    let targets = elite_column_targets(params, elite, weighting);
    let means = params
        .means
        .iter()
        .zip(&targets)
        .map(|(means, targets)| {
            means
                .iter()
                .zip(targets)
                .map(|(&mu, &target)| params.clamp(smooth_step(mu, target, alpha)))
                .collect()
        })
        .collect();
    ColumnGaussians {
        means,
        ..params.clone()
    }
}

/// Probabilities for one input under `mode`. `rng` is only read by
/// [`InferenceMode::Ensemble`].
pub fn predict<R: Rng + ?Sized>(
    params: &ColumnGaussians,
    best: Option<&WeightSet>,
    x: &[f64],
    mode: InferenceMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match mode {
        InferenceMode::MeanWeights => forward(&params.mean_weights(), &params.topo, x),
        InferenceMode::BestCandidate => forward(best.ok_or(Error::MissingBestCandidate)?, &params.topo, x),
        InferenceMode::Ensemble(s) => {
            let sets: Vec<WeightSet> = (0..s).map(|_| sample_weightset(params, rng)).collect();
            let rows = Matrix::from_vec(1, x.len(), x.to_vec())?;
            Ok(average_forward(&sets, &params.topo, &rows)?.row(0).to_vec())
        }
    }
}

fn average_forward(sets: &[WeightSet], topo: &Topology, x: &Matrix) -> Result<Matrix> {
    if sets.is_empty() {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    let mut acc = forward_batch(&sets[0], topo, x)?;
    for ws in &sets[1..] {
        let out = forward_batch(ws, topo, x)?;
        acc.as_mut_slice()
            .iter_mut()
            .zip(out.as_slice())
            .for_each(|(a, b)| *a += b);
    }
    let s = sets.len() as f64;
    acc.as_mut_slice().iter_mut().for_each(|a| *a /= s);
    Ok(acc)
}

/// A trained RBNN: its distribution state plus what its inference rule needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbnnModel {
    pub params: ColumnGaussians,
    /// Present whenever training retained one (always after [`train`]).
    pub best: Option<WeightSet>,
    pub inference: InferenceMode,
    pub seed: u64,
}

impl RbnnModel {
    /// Weight sets averaged at inference. Ensemble draws are fixed by the
    /// model seed, so repeated predictions agree.
    pub fn inference_weightsets(&self) -> Result<Vec<WeightSet>> {
        self.weightsets_for(self.inference, u64::MAX)
    }

    fn weightsets_for(&self, mode: InferenceMode, draw: u64) -> Result<Vec<WeightSet>> {
        match mode {
            InferenceMode::MeanWeights => Ok(vec![self.params.mean_weights()]),
            InferenceMode::BestCandidate => Ok(vec![self.best.clone().ok_or(Error::MissingBestCandidate)?]),
            InferenceMode::Ensemble(s) => {
                let streams = RngStreams::new(self.seed);
                Ok((0..s)
                    .map(|i| sample_weightset(&self.params, &mut streams.stream(Purpose::Ensemble, draw, i as u64)))
                    .collect())
            }
        }
    }

    /// Extra scalars kept for inference beyond the stored means.
    pub fn inference_scalars(&self) -> usize {
        match self.inference {
            InferenceMode::BestCandidate => self.best.as_ref().map_or(0, WeightSet::scalar_count),
            _ => 0,
        }
    }
}

impl Classifier for RbnnModel {
    fn topology(&self) -> &Topology {
        &self.params.topo
    }

    fn predict_batch(&self, x: &Matrix) -> Result<Matrix> {
        average_forward(&self.inference_weightsets()?, &self.params.topo, x)
    }
}

/// Trains the column means with the cross-entropy method.
///
/// Means start at zero and the deviation follows `sigma0 * decay^t`. The
/// best weight set ever sampled is retained on the model.
pub fn train(
    cfg: &RbnnConfig,
    topo: &Topology,
    train_data: &Dataset,
    test_data: Option<&Dataset>,
) -> Result<TrainReport<RbnnModel>> {
    cfg.validate()?;
    check_data(topo, train_data)?;
    if let Some(test) = test_data {
        check_data(topo, test)?;
    }
    let start = Instant::now();
    let cem = &cfg.cem;
    let streams = RngStreams::new(cem.seed);
    let mut params = ColumnGaussians::zeros(topo, cem.sigma0);
    params.clamp_weights = cfg.clamp_weights;
    let mut best: Option<Scored<WeightSet>> = None;
    let mut records = Vec::with_capacity(cem.iterations);

    for t in 0..cem.iterations {
        params.sigma = cem.sigma_at(t);
        let n = cem.population_at(t);
        let scored = evaluate_candidates(&params, n, train_data, cfg.loss, &streams, t, cem.parallel).map_err(|e| {
            Error::Diverged {
                unit: "iteration",
                index: t + 1,
                reason: e.to_string(),
            }
        })?;
        let population_mean = scored.iter().map(|s| s.score).sum::<f64>() / n as f64;
        let elite = select_elite(scored, cem.elite_fraction, Direction::Minimize);
        let elite_mean = elite.iter().map(|s| s.score).sum::<f64>() / elite.len() as f64;
        if best.as_ref().is_none_or(|b| elite[0].score < b.score) {
            best = Some(elite[0].clone());
        }
        params = fit_elite(&params, &elite, cem.smoothing, cem.weighting);

        let best_ref = best.as_ref().expect("set above");
        let snapshot = RbnnModel {
            params: params.clone(),
            best: Some(best_ref.candidate.clone()),
            inference: cfg.inference,
            seed: cem.seed,
        };
        let sets = snapshot.weightsets_for(cfg.inference, t as u64)?;
        let acc = |d: &Dataset| -> Result<f64> { crate::network::accuracy(&d.y, &average_forward(&sets, topo, &d.x)?) };
        records.push(IterationRecord {
            population_mean_error: Some(population_mean),
            elite_mean_error: Some(elite_mean),
            ..IterationRecord::new(t + 1, best_ref.score, acc(train_data)?, test_data.map(acc).transpose()?)
        });
    }

    let model = RbnnModel {
        params,
        best: best.map(|b| b.candidate),
        inference: cfg.inference,
        seed: cem.seed,
    };
    Ok(TrainReport {
        params_stored: param_count(ModelKind::Rbnn, topo),
        inference_scalars: model.inference_scalars(),
        model,
        records,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        seed: cem.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{loss, Activation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn topo_432() -> Topology {
        Topology::uniform(vec![4, 3, 2], Activation::Sigmoid, Activation::Softmax).unwrap()
    }

    fn one_row() -> Dataset {
        Dataset::from_labels(
            Matrix::from_rows(vec![vec![0.5, -1.0, 2.0, 0.0]]).unwrap(),
            &[1],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    fn member(params: &ColumnGaussians, value: impl Fn(usize, usize, usize) -> f64, score: f64) -> Scored<WeightSet> {
        Scored {
            candidate: WeightSet::from_fn(&params.topo, value),
            score,
        }
    }

    #[test]
    fn degenerate_sampling_fills_columns_with_means() {
        let t = topo_432();
        let params = ColumnGaussians::new(&t, vec![vec![0.1, -0.2, 0.3], vec![0.4, 2.0]], 0.0, true).unwrap();
        let ws = sample_weightset(&params, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(ws.layer(0).shape(), (4, 3));
        assert_eq!(ws.layer(1).shape(), (3, 2));
        for i in 0..4 {
            assert_eq!(ws.layer(0).row(i), &[0.1, -0.2, 0.3]);
        }
        // Out-of-range mean is clamped.
        assert!(ws.layer(1).column(1).all(|v| v == 1.0));
    }

    #[test]
    fn clamp_off_keeps_raw_draws() {
        let t = topo_432();
        let mut params = ColumnGaussians::zeros(&t, 5.0);
        params.clamp_weights = false;
        let ws = sample_weightset(&params, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(ws.matrices().iter().any(|m| m.max_abs() > 1.0));
    }

    #[test]
    fn candidate_scores() {
        let t = topo_432();
        let data = one_row();
        let streams = RngStreams::new(1);
        let mut params = ColumnGaussians::zeros(&t, 0.5);
        let out = evaluate_candidates(&params, 13, &data, LossKind::Mse, &streams, 0, false).unwrap();
        assert_eq!(out.len(), 13);

        params.sigma = 0.0;
        params.means = vec![vec![0.2, -0.1, 0.4], vec![0.3, -0.6]];
        let out = evaluate_candidates(&params, 5, &data, LossKind::Mse, &streams, 0, true).unwrap();
        assert!(out.iter().all(|s| s.score == out[0].score));

        // Hand evaluation: hidden z_k = mu_k * sum(x) = mu_k * 1.5.
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let h: Vec<f64> = [0.2, -0.1, 0.4].iter().map(|m| s(m * 1.5)).collect();
        let hsum: f64 = h.iter().sum();
        let (z0, z1) = (0.3 * hsum, -0.6 * hsum);
        let p1 = z1.exp() / (z0.exp() + z1.exp());
        let expected = ((0.0 - (1.0 - p1)).powi(2) + (1.0 - p1).powi(2)) / 2.0;
        assert!((out[0].score - expected).abs() < 1e-12);
        let direct = loss(
            LossKind::Mse,
            &[0.0, 1.0],
            &forward(&params.mean_weights(), &t, data.x.row(0)).unwrap(),
        )
        .unwrap();
        assert_eq!(out[0].score, direct);
    }

    #[test]
    fn mismatched_data_is_rejected() {
        let t = Topology::uniform(vec![3, 2], Activation::Sigmoid, Activation::Softmax).unwrap();
        let cfg = RbnnConfig::new(CemConfig::new(1));
        assert!(matches!(train(&cfg, &t, &one_row(), None), Err(Error::Config(_))));
    }

    #[test]
    fn fit_elite_examples() {
        let t = topo_432();
        let params = ColumnGaussians::zeros(&t, 0.5);
        let e = member(&params, |l, i, k| (l + i + k) as f64 * 0.1, 1.0);
        let unchanged = fit_elite(&params, std::slice::from_ref(&e), 0.0, Weighting::Uniform);
        assert_eq!(unchanged, params);

        let c = member(&params, |_, _, _| 0.35, 1.0);
        let fitted = fit_elite(&params, &[c], 1.0, Weighting::Uniform);
        assert!(fitted.means.iter().flatten().all(|&m| m == 0.35));

        let big = member(&params, |_, _, _| 3.0, 1.0);
        let mut unclamped = params.clone();
        unclamped.clamp_weights = false;
        assert!(fit_elite(&params, std::slice::from_ref(&big), 1.0, Weighting::Uniform)
            .means
            .iter()
            .flatten()
            .all(|&m| m == 1.0));
        assert!(fit_elite(&unclamped, &[big], 1.0, Weighting::Uniform)
            .means
            .iter()
            .flatten()
            .all(|&m| m == 3.0));
    }

    #[test]
    fn fit_elite_two_member_average() {
        let t = topo_432();
        let params = ColumnGaussians::zeros(&t, 0.5);
        // Column 1 of layer 0: member A rows average 0.2, member B 0.6.
        let a = member(
            &params,
            |l, i, k| if l == 0 && k == 1 { [0.1, 0.3, 0.2, 0.2][i] } else { 0.0 },
            1.0,
        );
        let b = member(&params, |l, _, k| if l == 0 && k == 1 { 0.6 } else { 0.0 }, 2.0);
        let fitted = fit_elite(&params, &[a, b], 0.5, Weighting::Uniform);
        assert!((fitted.means[0][1] - 0.2).abs() < 1e-15);
        assert_eq!(fitted.means[0][0], 0.0);
    }

    #[test]
    fn predict_modes() {
        let t = topo_432();
        let mut params = ColumnGaussians::new(&t, vec![vec![0.1, -0.5, 0.3], vec![0.4, -0.2]], 0.3, true).unwrap();
        let x = [0.3, 0.1, -0.7, 1.2];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let one = predict(&params, None, &x, InferenceMode::Ensemble(1), &mut rng).unwrap();
        let ws = sample_weightset(&params, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(one, forward(&ws, &t, &x).unwrap());

        let mean_a = predict(&params, None, &x, InferenceMode::MeanWeights, &mut rng).unwrap();
        params.sigma = 0.9;
        let mean_b = predict(
            &params,
            None,
            &x,
            InferenceMode::MeanWeights,
            &mut ChaCha8Rng::seed_from_u64(99),
        )
        .unwrap();
        assert_eq!(mean_a, mean_b);

        assert!(matches!(
            predict(&params, None, &x, InferenceMode::BestCandidate, &mut rng),
            Err(Error::MissingBestCandidate)
        ));
        let best = predict(&params, Some(&ws), &x, InferenceMode::BestCandidate, &mut rng).unwrap();
        let ens = predict(&params, None, &x, InferenceMode::Ensemble(7), &mut rng).unwrap();
        for p in [&one, &mean_a, &best, &ens] {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn model_single_and_batch_predictions_agree() {
        let t = topo_432();
        let params = ColumnGaussians::new(&t, vec![vec![0.1, -0.5, 0.3], vec![0.4, -0.2]], 0.3, true).unwrap();
        let model = RbnnModel {
            params,
            best: None,
            inference: InferenceMode::Ensemble(4),
            seed: 5,
        };
        let x = Matrix::from_rows(vec![vec![0.3, 0.1, -0.7, 1.2], vec![1.0, 0.0, 0.0, -1.0]]).unwrap();
        let batch = model.predict_batch(&x).unwrap();
        assert_eq!(model.predict(x.row(1)).unwrap(), batch.row(1));
        assert_eq!(model.inference_scalars(), 0);
    }
}
