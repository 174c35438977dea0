//! Mean-field Gaussian variational baseline (Bayes by backprop).
//!
//! Each weight has a posterior `N(mu, softplus(rho)^2)`, the prior is a fixed
//! standard normal, and the loss per minibatch is the summed cross-entropy of
//! one reparameterized draw plus a weighted closed-form KL term.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ffnn::{backward, GradientSet};
use crate::matrix::Matrix;
use crate::network::{
    forward_batch, loss, param_count, sigmoid, target_for_output, LossKind, ModelKind, Topology, WeightSet,
};
use crate::rbnn::check_data;
use crate::report::{Classifier, IterationRecord, TrainReport};
use crate::rng::{Purpose, RngStreams};

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams {
    pub topo: Topology,
    pub mu: Vec<Matrix>,
    /// Pre-deviations; the deviation of each weight is `softplus(rho)`.
    pub rho: Vec<Matrix>,
}

impl VariationalParams {
    /// `mu` uniform in `[-init_scale, init_scale]`, every `rho` equal to `init_rho`.
    pub fn init(topo: &Topology, init_scale: f64, init_rho: f64, seed: u64) -> Self {
        let mut rng = RngStreams::new(seed).stream(Purpose::Init, 0, 0);
        let mu = WeightSet::from_fn(topo, |_, _, _| rng.random_range(-init_scale..=init_scale));
        Self {
            topo: topo.clone(),
            mu: mu.matrices().to_vec(),
            rho: topo
                .weight_shapes()
                .map(|(r, c)| Matrix::filled(r, c, init_rho))
                .collect(),
        }
    }

    pub fn sigma(&self) -> Vec<Matrix> {
        self.rho.iter().map(|r| r.map(softplus)).collect()
    }

    /// Means and deviations: two scalars per weight.
    pub fn scalar_count(&self) -> usize {
        2 * self.mu.iter().map(|m| m.rows() * m.cols()).sum::<usize>()
    }

    pub fn mean_weights(&self) -> WeightSet {
        WeightSet::new(self.mu.clone())
    }

    /// `mu + softplus(rho) * noise`.
    pub fn weights_with_noise(&self, noise: &[Matrix]) -> WeightSet {
        let matrices = self
            .mu
            .iter()
            .zip(&self.rho)
            .zip(noise)
            .map(|((mu, rho), eps)| {
                let data = mu
                    .as_slice()
                    .iter()
                    .zip(rho.as_slice())
                    .zip(eps.as_slice())
                    .map(|((m, r), e)| m + softplus(*r) * e)
                    .collect();
                Matrix::from_vec(mu.rows(), mu.cols(), data).expect("congruent shapes")
            })
            .collect();
        WeightSet::new(matrices)
    }

    /// Total KL divergence to the standard-normal prior.
    pub fn kl(&self) -> f64 {
        self.mu
            .iter()
            .zip(&self.rho)
            .flat_map(|(m, r)| m.as_slice().iter().zip(r.as_slice()))
            .map(|(&m, &r)| kl_unchecked(m, softplus(r)))
            .sum()
    }
}

fn kl_unchecked(mu: f64, sigma: f64) -> f64 {
    -sigma.ln() + (sigma * sigma + mu * mu) / 2.0 - 0.5
}

/// `KL(N(mu, sigma^2) || N(0, 1))`.
pub fn kl_gaussian(mu: f64, sigma: f64) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidSigma(sigma));
    }
    Ok(kl_unchecked(mu, sigma))
}

pub fn elbo_loss(nll: f64, kl: f64, kl_weight: f64) -> f64 {
    nll + kl_weight * kl
}

/// A reparameterized draw together with the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample {
    pub weights: WeightSet,
    pub noise: Vec<Matrix>,
}

pub fn draw_noise<R: Rng + ?Sized>(topo: &Topology, rng: &mut R) -> Vec<Matrix> {
    topo.weight_shapes()
        .map(|(r, c)| Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal)))
        .collect()
}

pub fn reparam_sample<R: Rng + ?Sized>(vp: &VariationalParams, rng: &mut R) -> NoiseSample {
    let noise = draw_noise(&vp.topo, rng);
    NoiseSample {
        weights: vp.weights_with_noise(&noise),
        noise,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalGradient {
    pub mu: Vec<Matrix>,
    pub rho: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLoss {
    pub nll: f64,
    pub kl: f64,
    pub loss: f64,
}

/// Loss of one minibatch under fixed noise and its exact gradient with
/// respect to `mu` and `rho`.
pub fn step_loss_and_gradient(
    vp: &VariationalParams,
    x: &Matrix,
    y: &Matrix,
    noise: &[Matrix],
    kl_weight: f64,
) -> Result<(StepLoss, VariationalGradient)> {
    let ws = vp.weights_with_noise(noise);
    let mut nll = 0.0;
    let mut grads = GradientSet::zeros_like(&ws);
    for (xi, yi) in x.iter_rows().zip(y.iter_rows()) {
        grads.add_assign(&backward(&ws, &vp.topo, xi, yi, LossKind::CrossEntropy)?);
        let out = crate::network::forward(&ws, &vp.topo, xi)?;
        nll += loss(LossKind::CrossEntropy, &target_for_output(yi, out.len())?, &out)?;
    }
    let kl = vp.kl();

    let mut grad_mu = Vec::with_capacity(vp.mu.len());
    let mut grad_rho = Vec::with_capacity(vp.rho.len());
    for (((mu, rho), eps), g) in vp.mu.iter().zip(&vp.rho).zip(noise).zip(&grads.layers) {
        let (rows, cols) = mu.shape();
        let mut gm = Vec::with_capacity(rows * cols);
        let mut gr = Vec::with_capacity(rows * cols);
        for (((&m, &r), &e), &gw) in mu
            .as_slice()
            .iter()
            .zip(rho.as_slice())
            .zip(eps.as_slice())
            .zip(g.as_slice())
        {
            let sigma = softplus(r);
            gm.push(gw + kl_weight * m);
            let dkl_dsigma = sigma - 1.0 / sigma;
            gr.push((gw * e + kl_weight * dkl_dsigma) * sigmoid(r));
        }
        grad_mu.push(Matrix::from_vec(rows, cols, gm)?);
        grad_rho.push(Matrix::from_vec(rows, cols, gr)?);
    }
    Ok((
        StepLoss {
            nll,
            kl,
            loss: elbo_loss(nll, kl, kl_weight),
        },
        VariationalGradient {
            mu: grad_mu,
            rho: grad_rho,
        },
    ))
}

fn default_learning_rate() -> f64 {
    0.01
}
fn default_minibatch() -> usize {
    16
}
fn default_mc() -> usize {
    1
}
fn default_mc_eval() -> usize {
    10
}
fn default_init_rho() -> f64 {
    -3.0
}
fn default_init_scale() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BnnConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default = "default_minibatch")]
    pub minibatch_size: usize,
    /// Scale of the KL term per step; defaults to one over the number of
    /// minibatches per epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_weight: Option<f64>,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    /// Draws averaged at prediction time.
    #[serde(default = "default_mc_eval")]
    pub mc_eval: usize,
    #[serde(default = "default_init_rho")]
    pub init_rho: f64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl BnnConfig {
    pub fn new(epochs: usize) -> Self {
        Self {
            learning_rate: default_learning_rate(),
            epochs,
            minibatch_size: default_minibatch(),
            kl_weight: None,
            mc_samples: default_mc(),
            mc_eval: default_mc_eval(),
            init_rho: default_init_rho(),
            init_scale: default_init_scale(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.minibatch_size == 0 {
            return fail("minibatch_size must be at least 1".into());
        }
        if self.mc_samples == 0 || self.mc_eval == 0 {
            return fail("mc_samples and mc_eval must be at least 1".into());
        }
        if let Some(w) = self.kl_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return fail(format!("kl_weight must be non-negative, got {w}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnnModel {
    pub params: VariationalParams,
    pub mc_eval: usize,
    pub seed: u64,
}

impl BnnModel {
    fn averaged(&self, x: &Matrix, draw: u64) -> Result<Matrix> {
        let streams = RngStreams::new(self.seed);
        let mut acc: Option<Matrix> = None;
        for s in 0..self.mc_eval {
            let mut rng = streams.stream(Purpose::Evaluation, draw, s as u64);
            let ws = reparam_sample(&self.params, &mut rng).weights;
            let out = forward_batch(&ws, &self.params.topo, x)?;
            match acc.as_mut() {
                None => acc = Some(out),
                Some(a) => a
                    .as_mut_slice()
                    .iter_mut()
                    .zip(out.as_slice())
                    .for_each(|(p, q)| *p += q),
            }
        }
        let mut acc = acc.ok_or_else(|| Error::Config("mc_eval must be at least 1".into()))?;
        let n = self.mc_eval as f64;
        acc.as_mut_slice().iter_mut().for_each(|v| *v /= n);
        Ok(acc)
    }
}

impl Classifier for BnnModel {
    fn topology(&self) -> &Topology {
        &self.params.topo
    }

    /// Averages `mc_eval` posterior draws fixed by the model seed.
    fn predict_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.averaged(x, u64::MAX)
    }
}

pub fn train_bnn(
    cfg: &BnnConfig,
    topo: &Topology,
    train_data: &Dataset,
    test_data: Option<&Dataset>,
) -> Result<TrainReport<BnnModel>> {
    cfg.validate()?;
    check_data(topo, train_data)?;
    if let Some(test) = test_data {
        check_data(topo, test)?;
    }
    let start = Instant::now();
    let streams = RngStreams::new(cfg.seed);
    let mut model = BnnModel {
        params: VariationalParams::init(topo, cfg.init_scale, cfg.init_rho, cfg.seed),
        mc_eval: cfg.mc_eval,
        seed: cfg.seed,
    };
    let n = train_data.len();
    let batches = n.div_ceil(cfg.minibatch_size);
    let kl_weight = cfg.kl_weight.unwrap_or(1.0 / batches as f64);
    let mut order: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut step: u64 = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut streams.stream(Purpose::Shuffle, epoch as u64, 0));
        let (mut nll_sum, mut kl_sum, mut elbo_sum) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.minibatch_size) {
            let x = train_data.x.select_rows(chunk);
            let y = train_data.y.select_rows(chunk);
            let mut total: Option<(StepLoss, VariationalGradient)> = None;
            for m in 0..cfg.mc_samples {
                let noise = draw_noise(topo, &mut streams.stream(Purpose::Noise, step, m as u64));
                let (l, g) = step_loss_and_gradient(&model.params, &x, &y, &noise, kl_weight)?;
                total = Some(match total {
                    None => (l, g),
                    Some((acc_l, mut acc_g)) => {
                        for (a, b) in acc_g.mu.iter_mut().zip(&g.mu).chain(acc_g.rho.iter_mut().zip(&g.rho)) {
                            a.as_mut_slice().iter_mut().zip(b.as_slice()).for_each(|(p, q)| *p += q);
                        }
                        (
                            StepLoss {
                                nll: acc_l.nll + l.nll,
                                kl: l.kl,
                                loss: acc_l.loss + l.loss,
                            },
                            acc_g,
                        )
                    }
                });
            }
            let (l, g) = total.expect("mc_samples >= 1");
            let mc = cfg.mc_samples as f64;
            let step_nll = l.nll / mc;
            if !(step_nll.is_finite() && l.kl.is_finite()) {
                return Err(Error::Diverged {
                    unit: "epoch",
                    index: epoch,
                    reason: format!("minibatch loss {}", l.loss / mc),
                });
            }
            nll_sum += step_nll;
            kl_sum += kl_weight * l.kl;
            elbo_sum += elbo_loss(step_nll, l.kl, kl_weight);

            let lr = cfg.learning_rate / mc;
            for (p, gp) in model
                .params
                .mu
                .iter_mut()
                .zip(&g.mu)
                .chain(model.params.rho.iter_mut().zip(&g.rho))
            {
                p.as_mut_slice()
                    .iter_mut()
                    .zip(gp.as_slice())
                    .for_each(|(w, d)| *w -= lr * d);
            }
            step += 1;
        }
        if !model.params.mu.iter().chain(&model.params.rho).all(Matrix::is_finite) {
            return Err(Error::Diverged {
                unit: "epoch",
                index: epoch,
                reason: "non-finite variational parameters".into(),
            });
        }
        let acc = |d: &Dataset| -> Result<f64> { crate::network::accuracy(&d.y, &model.averaged(&d.x, epoch as u64)?) };
        records.push(IterationRecord {
            nll: Some(nll_sum),
            kl: Some(kl_sum),
            ..IterationRecord::new(epoch, elbo_sum, acc(train_data)?, test_data.map(acc).transpose()?)
        });
    }
    Ok(TrainReport {
        params_stored: param_count(ModelKind::Bnn, topo),
        inference_scalars: 0,
        model,
        records,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
    })
}
