//! Monte Carlo check of the analytical failure rate.
//!
//! Each trial covers `horizon` hours. Perception errors arrive as a Poisson
//! process and each error independently meets a dangerous situation with
//! probability `p_S`; the failures are the thinned count. Bernoulli thinning
//! of `X` errors is drawn as one `Binomial(X, p_S)` variate.
//!
//! Every trial owns a ChaCha8 stream selected by `(seed, trial index)`, so
//! results are bit-identical however the trials are scheduled on threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ErrorBranch, FailureModelTree, ModelError, Refinement};

const BATCH: u64 = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimulationTarget {
    Leaf {
        rate_per_hour: f64,
        situation_probability: f64,
    },
    Tree(FailureModelTree),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub horizon_hours: f64,
    pub trials: u64,
    pub seed: u64,
    /// Number of exposure slices per trial, each assigned to a (profile,
    /// speed range) cell drawn with probability `p_m · p_i`. Zero allocates
    /// the exposure deterministically in proportion to `p_m · p_i`.
    pub slices: u64,
    pub target: SimulationTarget,
}

impl SimulationConfig {
    pub fn leaf(
        rate_per_hour: f64,
        situation_probability: f64,
        horizon_hours: f64,
        trials: u64,
        seed: u64,
    ) -> Self {
        Self {
            horizon_hours,
            trials,
            seed,
            slices: 0,
            target: SimulationTarget::Leaf {
                rate_per_hour,
                situation_probability,
            },
        }
    }

    pub fn tree(tree: FailureModelTree, horizon_hours: f64, trials: u64, seed: u64) -> Self {
        Self {
            horizon_hours,
            trials,
            seed,
            slices: 100,
            target: SimulationTarget::Tree(tree),
        }
    }

    fn validate(&self) -> Result<(), SimulationError> {
        if !(self.horizon_hours > 0.0 && self.horizon_hours.is_finite()) {
            return Err(SimulationError::InvalidConfig(format!(
                "horizon must be > 0, got {}",
                self.horizon_hours
            )));
        }
        if self.trials == 0 {
            return Err(SimulationError::InvalidConfig("trials must be >= 1".into()));
        }
        match &self.target {
            SimulationTarget::Leaf {
                rate_per_hour,
                situation_probability,
            } => {
                if !(*rate_per_hour >= 0.0 && rate_per_hour.is_finite()) {
                    return Err(SimulationError::InvalidConfig(format!(
                        "rate must be >= 0, got {rate_per_hour}"
                    )));
                }
                if !(0.0..=1.0).contains(situation_probability) {
                    return Err(SimulationError::InvalidConfig(format!(
                        "situation probability must lie in [0, 1], got {situation_probability}"
                    )));
                }
            }
            SimulationTarget::Tree(tree) => tree.validate()?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub empirical_lambda: f64,
    pub std_error: f64,
    pub trials: u64,
    pub analytical_lambda: f64,
    pub horizon_hours: f64,
    pub seed: u64,
}

impl SimulationResult {
    /// Distance between empirical and analytical rate in standard errors.
    pub fn z_score(&self) -> f64 {
        let diff = self.empirical_lambda - self.analytical_lambda;
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Streaming mean/variance accumulator with pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.count as f64, other.count as f64);
        RunningStats {
            count: n,
            mean: self.mean + delta * nb / n as f64,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n as f64,
        }
    }

    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sample_variance() / self.count as f64).sqrt()
        }
    }
}

/// Random stream of one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng) as u64
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
}

/// Number of `errors` that meet a dangerous situation: `Binomial(errors, p)`.
pub fn thin_binomial<R: Rng + ?Sized>(errors: u64, situation_probability: f64, rng: &mut R) -> u64 {
    binomial(errors, situation_probability, rng)
}

/// Per-error Bernoulli thinning, the literal sum of indicator draws.
pub fn thin_bernoulli<R: Rng + ?Sized>(
    errors: u64,
    situation_probability: f64,
    rng: &mut R,
) -> u64 {
    (0..errors)
        .filter(|_| rng.random::<f64>() < situation_probability)
        .count() as u64
}

/// Split `n` items over categories with the given probabilities (the
/// residual mass `1 − Σ p` is dropped) by sequential conditional binomials.
fn multinomial<R: Rng + ?Sized>(n: u64, probabilities: &[f64], rng: &mut R) -> Vec<u64> {
    let mut remaining = n;
    let mut mass = 1.0;
    probabilities
        .iter()
        .map(|&p| {
            let k = if mass > 0.0 {
                binomial(remaining, (p / mass).min(1.0), rng)
            } else {
                0
            };
            remaining -= k;
            mass -= p;
            k
        })
        .collect()
}

fn thin_refined<R: Rng + ?Sized>(errors: u64, nodes: &[Refinement], rng: &mut R) -> u64 {
    let probs: Vec<f64> = nodes.iter().map(|n| n.probability).collect();
    multinomial(errors, &probs, rng)
        .into_iter()
        .zip(nodes)
        .map(|(k, node)| match node.situation_probability {
            Some(p) => thin_binomial(k, p, rng),
            None => thin_refined(k, &node.children, rng),
        })
        .sum()
}

fn failures_of_branch<R: Rng + ?Sized>(
    branch: &ErrorBranch,
    exposure_hours: f64,
    rng: &mut R,
) -> u64 {
    let errors = poisson(branch.rate() * exposure_hours, rng);
    match branch.situation_probability {
        Some(p) if branch.refinements.is_empty() => thin_binomial(errors, p, rng),
        _ => thin_refined(errors, &branch.refinements, rng),
    }
}

fn run_trials<F>(config: &SimulationConfig, failures: F) -> RunningStats
where
    F: Fn(&mut ChaCha8Rng) -> u64 + Sync,
{
    let batches = config.trials.div_ceil(BATCH);
    let per_batch: Vec<RunningStats> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut stats = RunningStats::default();
            for trial in b * BATCH..((b + 1) * BATCH).min(config.trials) {
                let mut rng = trial_rng(config.seed, trial);
                stats.push(failures(&mut rng) as f64 / config.horizon_hours);
            }
            stats
        })
        .collect();
    per_batch
        .iter()
        .fold(RunningStats::default(), |acc, s| acc.merge(s))
}

pub fn simulate(config: &SimulationConfig) -> Result<SimulationResult, SimulationError> {
    config.validate()?;
    let horizon = config.horizon_hours;
    let (stats, analytical) = match &config.target {
        SimulationTarget::Leaf {
            rate_per_hour,
            situation_probability,
        } => {
            let branch = ErrorBranch::new(
                crate::perception::ErrorType::TypeII,
                *rate_per_hour,
                *situation_probability,
            );
            let stats = run_trials(config, |rng| failures_of_branch(&branch, horizon, rng));
            (stats, rate_per_hour * situation_probability)
        }
        SimulationTarget::Tree(tree) => {
            let analytical = tree.evaluate()?.lambda_per_hour;
            let cells: Vec<(f64, &[ErrorBranch])> = tree
                .profiles
                .iter()
                .flat_map(|p| {
                    p.ranges
                        .iter()
                        .map(move |r| (p.probability * r.speed_probability, r.errors.as_slice()))
                })
                .collect();
            let weights: Vec<f64> = cells.iter().map(|c| c.0).collect();
            let slices = config.slices;
            let stats = run_trials(config, |rng| {
                let exposures: Vec<f64> = if cells.len() == 1 {
                    vec![horizon]
                } else if slices == 0 {
                    weights.iter().map(|w| w * horizon).collect()
                } else {
                    multinomial(slices, &weights, rng)
                        .into_iter()
                        .map(|k| k as f64 * horizon / slices as f64)
                        .collect()
                };
                cells
                    .iter()
                    .zip(exposures)
                    .map(|((_, errors), exposure)| {
                        errors
                            .iter()
                            .map(|e| failures_of_branch(e, exposure, rng))
                            .sum::<u64>()
                    })
                    .sum()
            });
            (stats, analytical)
        }
    };
    Ok(SimulationResult {
        empirical_lambda: stats.mean,
        std_error: stats.std_error(),
        trials: stats.count,
        analytical_lambda: analytical,
        horizon_hours: horizon,
        seed: config.seed,
    })
}

pub fn simulate_leaf(
    rate_per_hour: f64,
    situation_probability: f64,
    horizon_hours: f64,
    trials: u64,
    seed: u64,
) -> Result<SimulationResult, SimulationError> {
    simulate(&SimulationConfig::leaf(
        rate_per_hour,
        situation_probability,
        horizon_hours,
        trials,
        seed,
    ))
}

pub fn simulate_tree(
    tree: &FailureModelTree,
    horizon_hours: f64,
    trials: u64,
    seed: u64,
) -> Result<SimulationResult, SimulationError> {
    simulate(&SimulationConfig::tree(
        tree.clone(),
        horizon_hours,
        trials,
        seed,
    ))
}
