//! MAP estimation.
//!
//! The loss only depends on the data through per-pair counts and value sums
//! (every root law is symmetric, so a comparison `(c, b, r)` is the same term
//! as `(b, c, -r)`). The solvers collapse the dataset to those sufficient
//! statistics before handing the strongly convex loss to L-BFGS, which keeps a
//! solve cheap no matter how many observations there are.

mod lbfgs;

use std::collections::BTreeMap;

pub use lbfgs::{minimize, LbfgsOptions, Minimum, Objective};

use crate::error::{Result, ScoraError};
use crate::model::{Dataset, FlexModel, FlexObservation, ScoraModel};
use crate::rootlaw::RootLaw;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stop once the gradient infinity-norm falls to this value.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub history_size: usize,
    /// Starting point; `(β; θ0)` for SCoRa, `β̃` for flexible models. Zero if unset.
    pub initial_point: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gradient_tolerance: 1e-8,
            max_iterations: 1000,
            history_size: 10,
            initial_point: None,
        }
    }
}

impl SolverConfig {
    pub fn warm_started(mut self, point: Vec<f64>) -> Self {
        self.initial_point = Some(point);
        self
    }

    fn options(&self) -> LbfgsOptions {
        LbfgsOptions {
            gradient_tolerance: self.gradient_tolerance,
            max_iterations: self.max_iterations,
            history_size: self.history_size,
        }
    }

    fn start(&self, dim: usize) -> Result<Vec<f64>> {
        match &self.initial_point {
            Some(p) if p.len() != dim => Err(ScoraError::DimensionMismatch {
                expected: dim,
                found: p.len(),
            }),
            Some(p) => Ok(p.clone()),
            None => Ok(vec![0.0; dim]),
        }
    }
}

/// The SCoRa MAP estimate `(β*, θ0*)` and its scores `θ* = xᵀβ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub beta: Vec<f64>,
    pub theta0: f64,
    pub scores: Vec<f64>,
    pub final_gradient_norm: f64,
    pub iterations: usize,
}

impl MapResult {
    /// `(β*; θ0*)`, suitable as a warm start.
    pub fn point(&self) -> Vec<f64> {
        let mut p = self.beta.clone();
        p.push(self.theta0);
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub final_gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Count and value sum of the observations sharing one term of the loss.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    count: f64,
    sum: f64,
}

impl Tally {
    fn add(&mut self, value: f64) {
        self.count += 1.0;
        self.sum += value;
    }
}

/// Orders a pair canonically, flipping the value when the members swap.
fn canonical(first: usize, second: usize, value: f64) -> (usize, usize, f64) {
    if first < second {
        (first, second, value)
    } else {
        (second, first, -value)
    }
}

struct ScoraObjective<'a> {
    model: &'a ScoraModel,
    pairs: Vec<((usize, usize), Tally)>,
    rated: Vec<(usize, Tally)>,
}

impl<'a> ScoraObjective<'a> {
    fn new(model: &'a ScoraModel, dataset: &Dataset) -> Self {
        let mut pairs: BTreeMap<(usize, usize), Tally> = BTreeMap::new();
        for c in &dataset.comparisons {
            let (b, c, r) = canonical(c.first, c.second, c.value);
            pairs.entry((b, c)).or_default().add(r);
        }
        let mut rated: BTreeMap<usize, Tally> = BTreeMap::new();
        for r in &dataset.ratings {
            rated.entry(r.entity).or_default().add(r.value);
        }
        ScoraObjective {
            model,
            pairs: pairs.into_iter().collect(),
            rated: rated.into_iter().collect(),
        }
    }
}

impl Objective for ScoraObjective<'_> {
    fn dim(&self) -> usize {
        self.model.embedding.dim() + 1
    }

    fn evaluate(&self, point: &[f64], grad: &mut [f64]) -> f64 {
        let m = self.model;
        let (beta, theta0) = point.split_at(point.len() - 1);
        let theta0 = theta0[0];
        let theta = m.embedding.scores_unchecked(beta);
        let mut score_grad = vec![0.0; theta.len()];
        let mut loss = 0.0;
        let mut grad_theta0 = theta0 / m.prior_var_threshold;

        let f = m.comparison_law;
        for &((b, c), t) in &self.pairs {
            let d = theta[b] - theta[c];
            loss += t.count * f.cgf(d) - t.sum * d;
            let resid = t.count * f.cgf_prime(d) - t.sum;
            score_grad[b] += resid;
            score_grad[c] -= resid;
        }
        let g = m.rating_law;
        for &(a, t) in &self.rated {
            let d = theta[a] - theta0;
            loss += t.count * g.cgf(d) - t.sum * d;
            let resid = t.count * g.cgf_prime(d) - t.sum;
            score_grad[a] += resid;
            grad_theta0 -= resid;
        }

        let (grad_beta, grad_t0) = grad.split_at_mut(beta.len());
        for (gb, b) in grad_beta.iter_mut().zip(beta) {
            *gb = b / m.prior_var_beta;
        }
        m.embedding.add_pullback(&score_grad, grad_beta);
        grad_t0[0] = grad_theta0;

        loss + beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * m.prior_var_beta)
            + theta0 * theta0 / (2.0 * m.prior_var_threshold)
    }
}

struct FlexObjective<'a> {
    model: &'a FlexModel,
    laws: Vec<RootLaw>,
    terms: Vec<((usize, usize, usize), Tally)>,
}

impl<'a> FlexObjective<'a> {
    fn new(model: &'a FlexModel, observations: &[FlexObservation]) -> Self {
        let mut laws: Vec<RootLaw> = Vec::new();
        let mut terms: BTreeMap<(usize, usize, usize), Tally> = BTreeMap::new();
        for o in observations {
            let law = match laws.iter().position(|l| *l == o.law) {
                Some(i) => i,
                None => {
                    laws.push(o.law);
                    laws.len() - 1
                }
            };
            let (a, b, r) = canonical(o.first, o.second, o.value);
            terms.entry((a, b, law)).or_default().add(r);
        }
        FlexObjective {
            model,
            laws,
            terms: terms.into_iter().collect(),
        }
    }
}

impl Objective for FlexObjective<'_> {
    fn dim(&self) -> usize {
        self.model.embedding.dim()
    }

    fn evaluate(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let x = &self.model.embedding;
        let theta = x.scores_unchecked(beta);
        let mut score_grad = vec![0.0; theta.len()];
        let mut loss = 0.0;
        for &((a, b, law), t) in &self.terms {
            let law = self.laws[law];
            let d = theta[a] - theta[b];
            loss += t.count * law.cgf(d) - t.sum * d;
            let resid = t.count * law.cgf_prime(d) - t.sum;
            score_grad[a] += resid;
            score_grad[b] -= resid;
        }
        for ((g, b), v) in grad.iter_mut().zip(beta).zip(&self.model.prior_variances) {
            *g = b / v;
            loss += 0.5 * b * b / v;
        }
        x.add_pullback(&score_grad, grad);
        loss
    }
}

/// Computes the SCoRa MAP estimator.
///
/// Fails with [`ScoraError::NotConverged`] (carrying the best iterate) when the
/// gradient tolerance is not met within the iteration budget.
pub fn solve_map(model: &ScoraModel, dataset: &Dataset, config: &SolverConfig) -> Result<MapResult> {
    model.validate(dataset)?;
    let objective = ScoraObjective::new(model, dataset);
    let start = config.start(objective.dim())?;
    let min = minimize(&objective, start, &config.options())?;
    let mut beta = min.x;
    let theta0 = beta.pop().expect("point has a threshold coordinate");
    let scores = model.embedding.scores_unchecked(&beta);
    Ok(MapResult {
        beta,
        theta0,
        scores,
        final_gradient_norm: min.gradient_norm,
        iterations: min.iterations,
    })
}

/// Computes the MAP of a flexible GBT model.
pub fn solve_map_flexible(
    model: &FlexModel,
    observations: &[FlexObservation],
    config: &SolverConfig,
) -> Result<(Vec<f64>, Diagnostics)> {
    model.validate(observations)?;
    let objective = FlexObjective::new(model, observations);
    let start = config.start(objective.dim())?;
    let min = minimize(&objective, start, &config.options())?;
    Ok((
        min.x,
        Diagnostics {
            final_gradient_norm: min.gradient_norm,
            iterations: min.iterations,
            evaluations: min.evaluations,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{to_flexible, Embedding};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn binary_pair() -> ScoraModel {
        ScoraModel::with_unit_priors(Embedding::identity(2).unwrap(), RootLaw::KAry(2), RootLaw::KAry(2))
    }

    fn random_dataset(rng: &mut ChaCha8Rng, a: usize, n: usize) -> Dataset {
        let mut ds = Dataset::new();
        for _ in 0..n {
            let b = rng.random_range(0..a);
            let c = (b + rng.random_range(1..a)) % a;
            ds.push_comparison(b, c, if rng.random_bool(0.5) { 1.0 } else { -1.0 });
            ds.push_rating(rng.random_range(0..a), rng.random_range(-1.0..=1.0));
        }
        ds
    }

    #[test]
    fn empty_dataset_gives_prior_mode() {
        let r = solve_map(&binary_pair(), &Dataset::new(), &SolverConfig::default()).unwrap();
        assert_eq!(r.beta, vec![0.0, 0.0]);
        assert_eq!(r.theta0, 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn single_binary_comparison() {
        // d solves d/2 + tanh d = 1 (mpmath root-finding)
        let d = 0.740_774_393_062_308_5;
        let mut ds = Dataset::new();
        ds.push_comparison(0, 1, 1.0);
        let r = solve_map(&binary_pair(), &ds, &SolverConfig::default()).unwrap();
        assert!((r.scores[0] - d / 2.0).abs() < 1e-8, "{:?}", r.scores);
        assert!((r.scores[1] + d / 2.0).abs() < 1e-8);
        assert!(r.theta0.abs() < 1e-12);
        assert!(r.final_gradient_norm <= 1e-8);
    }

    #[test]
    fn map_zeroes_the_direct_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Embedding::from_column_major(4, 6, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let model = ScoraModel::new(x, RootLaw::KAry(2), RootLaw::ContinuousUniform, 2.0, 0.5).unwrap();
        let ds = random_dataset(&mut rng, 6, 40);
        let r = solve_map(&model, &ds, &SolverConfig::default()).unwrap();
        let (g, g0) = model.gradient(&ds, &r.beta, r.theta0).unwrap();
        assert!(g.iter().chain([&g0]).all(|v| v.abs() < 1e-7), "{g:?} {g0}");
    }

    #[test]
    fn threshold_identity_without_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = ScoraModel::new(Embedding::identity(7).unwrap(), RootLaw::KAry(3), RootLaw::KAry(5), 0.8, 1.7).unwrap();
        let ds = random_dataset(&mut rng, 7, 30);
        let r = solve_map(&model, &ds, &SolverConfig::default()).unwrap();
        let sum: f64 = r.scores.iter().sum();
        assert!((r.theta0 + 1.7 / 0.8 * sum).abs() <= 1e-6);
    }

    #[test]
    fn flexible_gaussian_quadratic() {
        let flex = FlexModel::new(Embedding::identity(2).unwrap(), vec![1.0, 1.0]).unwrap();
        let obs = [FlexObservation {
            first: 0,
            second: 1,
            value: 1.0,
            law: RootLaw::Gaussian(1.0),
        }];
        let (beta, _) = solve_map_flexible(&flex, &obs, &SolverConfig::default()).unwrap();
        assert!((beta[0] - 1.0 / 3.0).abs() < 1e-9 && (beta[1] + 1.0 / 3.0).abs() < 1e-9, "{beta:?}");
        let (zero, diag) = solve_map_flexible(&flex, &[], &SolverConfig::default()).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
        assert_eq!(diag.iterations, 0);
    }

    #[test]
    fn flexible_and_scora_solvers_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = ScoraModel::new(Embedding::identity(5).unwrap(), RootLaw::KAry(2), RootLaw::KAry(4), 1.0, 2.0).unwrap();
        let ds = random_dataset(&mut rng, 5, 25);
        let r = solve_map(&model, &ds, &SolverConfig::default()).unwrap();
        let (flex, obs) = to_flexible(&model, &ds).unwrap();
        let (beta, _) = solve_map_flexible(&flex, &obs, &SolverConfig::default()).unwrap();
        for (a, b) in r.point().iter().zip(&beta) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn warm_start_dimension_is_checked() {
        let cfg = SolverConfig::default().warm_started(vec![0.0; 5]);
        assert!(matches!(
            solve_map(&binary_pair(), &Dataset::new(), &cfg),
            Err(ScoraError::DimensionMismatch { expected: 3, found: 5 })
        ));
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = ScoraModel::with_unit_priors(Embedding::identity(6).unwrap(), RootLaw::ContinuousUniform, RootLaw::KAry(2));
        let ds = random_dataset(&mut rng, 6, 50);
        let a = solve_map(&model, &ds, &SolverConfig::default()).unwrap();
        let b = solve_map(&model, &ds, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
