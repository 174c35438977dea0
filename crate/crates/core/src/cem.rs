//! Cross-entropy method over real vectors with an isotropic, non-adapted
//! scale: sample a population around the current mean, keep the elite
//! fraction, move the mean toward the elite average.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStreams};

/// Shift added to every fitness weight so equal scores still get mass.
pub const FITNESS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Minimize,
    Maximize,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Minimize => a < b,
            Direction::Maximize => a > b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Uniform,
    Fitness,
}

fn default_population() -> usize {
    100
}
fn default_elite_fraction() -> f64 {
    0.1
}
fn default_smoothing() -> f64 {
    0.7
}
fn default_sigma0() -> f64 {
    0.5
}
fn default_sigma_decay() -> f64 {
    1.0
}
fn default_parallel() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CemConfig {
    #[serde(default = "default_population")]
    pub population_size: usize,
    /// Optional per-iteration population sizes; overrides `population_size`
    /// for the iterations it covers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_schedule: Option<Vec<usize>>,
    #[serde(default = "default_elite_fraction")]
    pub elite_fraction: f64,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    pub iterations: usize,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    #[serde(default = "default_sigma_decay")]
    pub sigma_decay: f64,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weighting: Weighting,
    /// Score candidates on the rayon pool. Results are identical either way.
    #[serde(skip, default = "default_parallel")]
    pub parallel: bool,
}

impl CemConfig {
    pub fn new(iterations: usize) -> Self {
        Self {
            population_size: default_population(),
            population_schedule: None,
            elite_fraction: default_elite_fraction(),
            smoothing: default_smoothing(),
            iterations,
            sigma0: default_sigma0(),
            sigma_decay: default_sigma_decay(),
            direction: Direction::Minimize,
            seed: 0,
            weighting: Weighting::Uniform,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.population_size == 0 {
            return fail("population_size must be at least 1".into());
        }
        if let Some(schedule) = &self.population_schedule {
            if schedule.contains(&0) {
                return fail("population_schedule entries must be at least 1".into());
            }
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return fail(format!(
                "elite_fraction must lie in (0, 1], got {}",
                self.elite_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.smoothing) {
            return fail(format!("smoothing must lie in [0, 1], got {}", self.smoothing));
        }
        if self.iterations == 0 {
            return fail("iterations must be at least 1".into());
        }
        if !(self.sigma0 >= 0.0 && self.sigma0.is_finite()) {
            return fail(format!("sigma0 must be a non-negative number, got {}", self.sigma0));
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return fail(format!("sigma_decay must lie in (0, 1], got {}", self.sigma_decay));
        }
        Ok(())
    }

    /// Sampling scale at 0-based iteration `t`.
    pub fn sigma_at(&self, t: usize) -> f64 {
        self.sigma0 * self.sigma_decay.powi(t as i32)
    }

    pub fn population_at(&self, t: usize) -> usize {
        self.population_schedule
            .as_ref()
            .and_then(|s| s.get(t).copied())
            .unwrap_or(self.population_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored<T> {
    pub candidate: T,
    pub score: f64,
}

pub type ScoredCandidate = Scored<Vec<f64>>;

/// `max(1, floor(rho * n))`, never more than `n`.
pub fn elite_count(n: usize, rho: f64) -> usize {
    ((rho * n as f64).floor() as usize).max(1).min(n)
}

pub fn sample_candidate<R: Rng + ?Sized>(mean: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    mean.iter()
        .map(|&m| {
            let z: f64 = rng.sample(StandardNormal);
            m + sigma * z
        })
        .collect()
}

pub fn sample_population<R: Rng + ?Sized>(mean: &[f64], sigma: f64, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| sample_candidate(mean, sigma, rng)).collect()
}

/// Best `elite_count(N, rho)` candidates, best first. Equal scores keep
/// their original order.
pub fn select_elite<T>(mut scored: Vec<Scored<T>>, rho: f64, direction: Direction) -> Vec<Scored<T>> {
    let m = elite_count(scored.len(), rho);
    match direction {
        Direction::Minimize => scored.sort_by(|a, b| a.score.total_cmp(&b.score)),
        Direction::Maximize => scored.sort_by(|a, b| b.score.total_cmp(&a.score)),
    }
    scored.truncate(m);
    scored
}

/// Normalized member weights for an elite set.
///
/// `Fitness` shifts every score by the worst elite score so the best member
/// gets the largest weight under either direction.
pub fn elite_weights(scores: &[f64], weighting: Weighting, direction: Direction) -> Vec<f64> {
    let m = scores.len();
    match weighting {
        Weighting::Uniform => vec![1.0 / m as f64; m],
        Weighting::Fitness => {
            let raw: Vec<f64> = match direction {
                Direction::Minimize => {
                    let worst = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    scores.iter().map(|e| worst - e + FITNESS_EPS).collect()
                }
                Direction::Maximize => {
                    let worst = scores.iter().copied().fold(f64::INFINITY, f64::min);
                    scores.iter().map(|e| e - worst + FITNESS_EPS).collect()
                }
            };
            let total: f64 = raw.iter().sum();
            raw.iter().map(|r| r / total).collect()
        }
    }
}

/// Weighted average of `values`, clamped into their range so rounding can
/// never leave the convex hull.
pub(crate) fn hull_average(values: impl Iterator<Item = f64> + Clone, weights: &[f64]) -> f64 {
    let (lo, hi) = values
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let avg: f64 = values.zip(weights).map(|(v, w)| v * w).sum();
    avg.clamp(lo, hi)
}

/// `alpha * target + (1 - alpha) * old`, kept between `old` and `target`.
pub(crate) fn smooth_step(old: f64, target: f64, alpha: f64) -> f64 {
    (alpha * target + (1.0 - alpha) * old).clamp(old.min(target), old.max(target))
}

/// Smoothed move of the mean toward the (weighted) elite average.
pub fn update_mean(
    old_mean: &[f64],
    elite: &[ScoredCandidate],
    alpha: f64,
    weighting: Weighting,
    direction: Direction,
) -> Vec<f64> {
    assert!(!elite.is_empty(), "elite set must not be empty");
    let scores: Vec<f64> = elite.iter().map(|e| e.score).collect();
    let weights = elite_weights(&scores, weighting, direction);
    old_mean
        .iter()
        .enumerate()
        .map(|(k, &old)| {
            let target = hull_average(elite.iter().map(|e| e.candidate[k]), &weights);
            smooth_step(old, target, alpha)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemIteration {
    /// 1-based.
    pub iteration: usize,
    /// Mean after this iteration's update.
    pub mean: Vec<f64>,
    pub elite_mean_score: f64,
    pub population_mean_score: f64,
    pub best_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemOutcome {
    pub final_mean: Vec<f64>,
    pub best_candidate: Vec<f64>,
    pub best_score: f64,
    pub history: Vec<CemIteration>,
}

/// Runs the method from the origin in `dim` dimensions.
pub fn optimize<F>(objective: F, dim: usize, cfg: &CemConfig) -> Result<CemOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    optimize_from(objective, vec![0.0; dim], cfg)
}

pub fn optimize_from<F>(objective: F, initial_mean: Vec<f64>, cfg: &CemConfig) -> Result<CemOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let streams = RngStreams::new(cfg.seed);
    let mut mean = initial_mean;
    let mut best: Option<ScoredCandidate> = None;
    let mut history = Vec::with_capacity(cfg.iterations);

    for t in 0..cfg.iterations {
        let sigma = cfg.sigma_at(t);
        let n = cfg.population_at(t);
        let score_one = |i: usize| {
            let mut rng = streams.stream(Purpose::Candidate, t as u64, i as u64);
            let candidate = sample_candidate(&mean, sigma, &mut rng);
            let score = objective(&candidate);
            Scored { candidate, score }
        };
        let scored: Vec<ScoredCandidate> = if cfg.parallel {
            (0..n).into_par_iter().map(score_one).collect()
        } else {
            (0..n).map(score_one).collect()
        };
        if let Some(i) = scored.iter().position(|s| !s.score.is_finite()) {
            return Err(Error::NonFiniteObjective {
                iteration: t + 1,
                candidate: i,
            });
        }
        let population_mean_score = scored.iter().map(|s| s.score).sum::<f64>() / n as f64;

        let elite = select_elite(scored, cfg.elite_fraction, cfg.direction);
        let elite_mean_score = elite.iter().map(|s| s.score).sum::<f64>() / elite.len() as f64;
        if best
            .as_ref()
            .is_none_or(|b| cfg.direction.better(elite[0].score, b.score))
        {
            best = Some(elite[0].clone());
        }
        mean = update_mean(&mean, &elite, cfg.smoothing, cfg.weighting, cfg.direction);
        history.push(CemIteration {
            iteration: t + 1,
            mean: mean.clone(),
            elite_mean_score,
            population_mean_score,
            best_score: best.as_ref().expect("set above").score,
        });
    }

    let best = best.expect("at least one iteration");
    Ok(CemOutcome {
        final_mean: mean,
        best_candidate: best.candidate,
        best_score: best.score,
        history,
    })
}
