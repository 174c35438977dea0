//! Full-batch backpropagation baseline.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{
    forward_batch, forward_trace, loss, loss_gradient, param_count, target_for_output, Activation, LossKind, ModelKind,
    Topology, WeightSet,
};
use crate::rbnn::check_data;
use crate::report::{Classifier, IterationRecord, TrainReport};
use crate::rng::{Purpose, RngStreams};

fn default_learning_rate() -> f64 {
    0.1
}
fn default_init_scale() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FfnnConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    pub epochs: usize,
    /// Stop once the total error is at or below this value.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl FfnnConfig {
    pub fn new(epochs: usize) -> Self {
        Self {
            learning_rate: default_learning_rate(),
            epochs,
            epsilon: 0.0,
            loss: LossKind::Mse,
            init_scale: default_init_scale(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.init_scale.is_nan() || self.init_scale <= 0.0 {
            return Err(Error::Config(format!(
                "init_scale must be positive, got {}",
                self.init_scale
            )));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-layer gradients, shape-congruent with the weight set they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Matrix>,
}

impl GradientSet {
    pub fn zeros_like(ws: &WeightSet) -> Self {
        Self {
            layers: ws
                .matrices()
                .iter()
                .map(|m| Matrix::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.as_mut_slice().iter_mut().zip(b.as_slice()).for_each(|(x, y)| *x += y);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().map(Matrix::max_abs).fold(0.0, f64::max)
    }
}

/// Analytic gradient of one example's loss with respect to every weight.
pub fn backward(ws: &WeightSet, topo: &Topology, x: &[f64], y: &[f64], kind: LossKind) -> Result<GradientSet> {
    let trace = forward_trace(ws, topo, x)?;
    let out = trace.output();
    let target = target_for_output(y, out.len())?;
    let last = topo.num_layers() - 1;

    let mut delta = if topo.activations()[last] == Activation::Softmax && kind == LossKind::CrossEntropy {
        let mass: f64 = target.iter().sum();
        out.iter().zip(target.iter()).map(|(p, t)| p * mass - t).collect()
    } else {
        let g = loss_gradient(kind, &target, out)?;
        topo.activations()[last].backprop(&trace.pre_activations[last], out, &g)
    };

    let mut layers = vec![Matrix::zeros(0, 0); topo.num_layers()];
    for l in (0..=last).rev() {
        let input = &trace.inputs[l];
        layers[l] = Matrix::from_fn(input.len(), delta.len(), |i, j| input[i] * delta[j]);
        if l == 0 {
            break;
        }
        let w = ws.layer(l);
        let fan_in = topo.layer_sizes()[l];
        let grad_prev: Vec<f64> = (0..fan_in)
            .map(|i| w.row(i).iter().zip(&delta).map(|(wij, dj)| wij * dj).sum())
            .collect();
        delta = topo.activations()[l - 1].backprop(&trace.pre_activations[l - 1], &trace.outputs[l - 1], &grad_prev);
    }
    Ok(GradientSet { layers })
}

/// Total error over the rows and the summed gradient, accumulated in row order.
pub fn dataset_gradient(
    ws: &WeightSet,
    topo: &Topology,
    x: &Matrix,
    y: &Matrix,
    kind: LossKind,
) -> Result<(f64, GradientSet)> {
    let mut total = 0.0;
    let mut grads = GradientSet::zeros_like(ws);
    for (xi, yi) in x.iter_rows().zip(y.iter_rows()) {
        let g = backward(ws, topo, xi, yi, kind)?;
        grads.add_assign(&g);
        let out = crate::network::forward(ws, topo, xi)?;
        total += loss(kind, &target_for_output(yi, out.len())?, &out)?;
    }
    Ok((total, grads))
}

/// `W - lr * G`, entry by entry.
pub fn sgd_step(ws: &WeightSet, grads: &GradientSet, learning_rate: f64) -> Result<WeightSet> {
    if grads.layers.len() != ws.matrices().len() {
        return Err(Error::Length {
            what: "gradient layers",
            expected: ws.matrices().len(),
            found: grads.layers.len(),
        });
    }
    let mut next = ws.clone();
    for (l, (w, g)) in next.matrices_mut().iter_mut().zip(&grads.layers).enumerate() {
        if w.shape() != g.shape() {
            return Err(Error::LayerShape {
                layer: l + 1,
                expected: format!("{}x{}", w.rows(), w.cols()),
                found: format!("{}x{}", g.rows(), g.cols()),
            });
        }
        w.as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .for_each(|(wv, gv)| *wv -= learning_rate * gv);
    }
    Ok(next)
}

/// Uniform in `[-scale, scale]`, drawn from the seed's init stream.
pub fn init_weights(topo: &Topology, scale: f64, seed: u64) -> WeightSet {
    let mut rng = RngStreams::new(seed).stream(Purpose::Init, 0, 0);
    WeightSet::from_fn(topo, |_, _, _| rng.random_range(-scale..=scale))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnnModel {
    pub topo: Topology,
    pub weights: WeightSet,
}

impl Classifier for FfnnModel {
    fn topology(&self) -> &Topology {
        &self.topo
    }

    fn predict_batch(&self, x: &Matrix) -> Result<Matrix> {
        forward_batch(&self.weights, &self.topo, x)
    }
}

/// Full-batch gradient descent. Each record holds the total error and
/// accuracies of the weights at the start of that epoch; training stops
/// early once the total error reaches `epsilon`.
pub fn train_ffnn(
    cfg: &FfnnConfig,
    topo: &Topology,
    train_data: &Dataset,
    test_data: Option<&Dataset>,
) -> Result<TrainReport<FfnnModel>> {
    cfg.validate()?;
    check_data(topo, train_data)?;
    if let Some(test) = test_data {
        check_data(topo, test)?;
    }
    let start = Instant::now();
    let mut model = FfnnModel {
        topo: topo.clone(),
        weights: init_weights(topo, cfg.init_scale, cfg.seed),
    };
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (total, grads) = dataset_gradient(&model.weights, topo, &train_data.x, &train_data.y, cfg.loss)?;
        if !total.is_finite() || !grads.max_abs().is_finite() {
            return Err(Error::Diverged {
                unit: "epoch",
                index: epoch,
                reason: format!("total error {total}"),
            });
        }
        records.push(IterationRecord::new(
            epoch,
            total,
            model.accuracy_on(train_data)?,
            test_data.map(|d| model.accuracy_on(d)).transpose()?,
        ));
        if total <= cfg.epsilon {
            break;
        }
        model.weights = sgd_step(&model.weights, &grads, cfg.learning_rate)?;
    }
    Ok(TrainReport {
        params_stored: param_count(ModelKind::Ffnn, topo),
        inference_scalars: 0,
        model,
        records,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::forward;

    #[test]
    fn single_linear_neuron_gradient() {
        let t = Topology::new(vec![1, 1], vec![Activation::Identity], false).unwrap();
        let ws = WeightSet::new(vec![Matrix::zeros(1, 1)]);
        let g = backward(&ws, &t, &[1.0], &[1.0], LossKind::Mse).unwrap();
        assert_eq!(g.layers[0][(0, 0)], -2.0);
    }

    #[test]
    fn zero_gradient_at_exact_fit() {
        let t = Topology::new(vec![2, 2], vec![Activation::Identity], false).unwrap();
        let ws = WeightSet::new(vec![Matrix::identity(2)]);
        let g = backward(&ws, &t, &[0.3, -0.4], &[0.3, -0.4], LossKind::Mse).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn sgd_step_examples() {
        let ws = WeightSet::new(vec![Matrix::filled(1, 1, 1.0)]);
        let g = GradientSet {
            layers: vec![Matrix::filled(1, 1, 0.5)],
        };
        assert_eq!(sgd_step(&ws, &g, 0.1).unwrap().layer(0)[(0, 0)], 0.95);
        assert_eq!(sgd_step(&ws, &g, 0.0).unwrap(), ws);
        assert_eq!(sgd_step(&ws, &GradientSet::zeros_like(&ws), 0.1).unwrap(), ws);
        let bad = GradientSet {
            layers: vec![Matrix::zeros(2, 1)],
        };
        assert!(matches!(
            sgd_step(&ws, &bad, 0.1),
            Err(Error::LayerShape { layer: 1, .. })
        ));
    }

    #[test]
    fn relu_subgradient_is_zero_at_kink() {
        let t = Topology::new(vec![1, 1, 1], vec![Activation::ReLU, Activation::Identity], false).unwrap();
        let ws = WeightSet::new(vec![Matrix::zeros(1, 1), Matrix::filled(1, 1, 1.0)]);
        let g = backward(&ws, &t, &[1.0], &[1.0], LossKind::Mse).unwrap();
        assert_eq!(g.layers[0][(0, 0)], 0.0);
    }

    #[test]
    fn early_stop_truncates_records() {
        let t = Topology::new(vec![1, 2], vec![Activation::Softmax], false).unwrap();
        let data = Dataset::from_labels(
            Matrix::from_rows(vec![vec![1.0], vec![2.0]]).unwrap(),
            &[0, 0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let mut cfg = FfnnConfig::new(500);
        cfg.loss = LossKind::CrossEntropy;
        cfg.learning_rate = 1.0;
        cfg.epsilon = 0.05;
        let report = train_ffnn(&cfg, &t, &data, None).unwrap();
        let n = report.records.len();
        assert!(n < 500);
        assert!(report.records[n - 1].best_error <= 0.05);
        assert!(report.records[..n - 1].iter().all(|r| r.best_error > 0.05));
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let t = Topology::new(vec![1, 2], vec![Activation::Identity], false).unwrap();
        let data = Dataset::from_labels(
            Matrix::from_rows(vec![vec![100.0]]).unwrap(),
            &[0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let mut cfg = FfnnConfig::new(1000);
        cfg.learning_rate = 10.0;
        match train_ffnn(&cfg, &t, &data, None) {
            Err(Error::Diverged {
                unit: "epoch", index, ..
            }) => assert!(index > 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let t = Topology::uniform(vec![3, 4, 2], Activation::Sigmoid, Activation::Sigmoid).unwrap();
        let a = init_weights(&t, 0.5, 3);
        assert_eq!(a, init_weights(&t, 0.5, 3));
        assert_ne!(a, init_weights(&t, 0.5, 4));
        assert!(a.matrices().iter().all(|m| m.max_abs() <= 0.5));
        assert_eq!(forward(&a, &t, &[0.0; 3]).unwrap().len(), 2);
    }
}
