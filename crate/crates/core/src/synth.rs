//! Synthetic ground truth, elicitation budgets and query sampling.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Cauchy, Distribution, Normal};

use crate::error::{Result, ScoraError};
use crate::model::{Dataset, Embedding, ScoraModel};
use crate::rootlaw::RootLaw;
use crate::solver::{solve_map, MapResult, SolverConfig};

/// Hidden parameters and the scores they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub beta: Vec<f64>,
    pub theta0: f64,
    pub scores: Vec<f64>,
}

/// How many comparisons and ratings a budget buys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetPlan {
    pub budget: f64,
    pub fraction_comparisons: f64,
    pub cost_comparison: f64,
    pub cost_rating: f64,
    pub n_comparisons: usize,
    pub n_ratings: usize,
}

/// Spends `p_c · b` on comparisons of cost `c_c` and the rest on ratings of cost `c_r`.
pub fn allocate_budget(budget: f64, p_c: f64, c_c: f64, c_r: f64) -> Result<BudgetPlan> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(ScoraError::input(format!("budget must be positive, got {budget}")));
    }
    if !(0.0..=1.0).contains(&p_c) {
        return Err(ScoraError::input(format!("comparison fraction must lie in [0, 1], got {p_c}")));
    }
    if !(c_c > 0.0 && c_r > 0.0 && c_c.is_finite() && c_r.is_finite()) {
        return Err(ScoraError::input("costs must be positive"));
    }
    Ok(BudgetPlan {
        budget,
        fraction_comparisons: p_c,
        cost_comparison: c_c,
        cost_rating: c_r,
        n_comparisons: (p_c * budget / c_c).floor() as usize,
        n_ratings: ((1.0 - p_c) * budget / c_r).floor() as usize,
    })
}

/// Distribution of the ground-truth `β` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaPrior {
    Gaussian(f64),
    Cauchy(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub beta: BetaPrior,
    /// Variance of the Gaussian ground-truth threshold.
    pub threshold_variance: f64,
}

impl PriorSpec {
    pub fn gaussian() -> Self {
        PriorSpec {
            beta: BetaPrior::Gaussian(1.0),
            threshold_variance: 1.0,
        }
    }

    pub fn cauchy() -> Self {
        PriorSpec {
            beta: BetaPrior::Cauchy(1.0),
            threshold_variance: 1.0,
        }
    }
}

impl fmt::Display for BetaPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaPrior::Gaussian(v) => write!(f, "gaussian:{v}"),
            BetaPrior::Cauchy(s) => write!(f, "cauchy:{s}"),
        }
    }
}

impl FromStr for BetaPrior {
    type Err = ScoraError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.trim().split_once(':').unwrap_or((s.trim(), "1"));
        let value: f64 = arg
            .parse()
            .map_err(|_| ScoraError::Parse(format!("bad prior parameter in '{s}'")))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(ScoraError::Parse(format!("prior parameter must be positive in '{s}'")));
        }
        match kind {
            "gaussian" => Ok(BetaPrior::Gaussian(value)),
            "cauchy" => Ok(BetaPrior::Cauchy(value)),
            _ => Err(ScoraError::Parse(format!("unknown prior '{s}'"))),
        }
    }
}

pub fn sample_ground_truth<R: Rng + ?Sized>(prior: &PriorSpec, embedding: &Embedding, rng: &mut R) -> Result<GroundTruth> {
    let dim = embedding.dim();
    let beta: Vec<f64> = match prior.beta {
        BetaPrior::Gaussian(v) => {
            let normal = Normal::new(0.0, v.sqrt()).map_err(|e| ScoraError::input(e.to_string()))?;
            (0..dim).map(|_| normal.sample(rng)).collect()
        }
        BetaPrior::Cauchy(scale) => {
            let cauchy = Cauchy::new(0.0, scale).map_err(|e| ScoraError::input(e.to_string()))?;
            (0..dim).map(|_| cauchy.sample(rng)).collect()
        }
    };
    let threshold = Normal::new(0.0, prior.threshold_variance.sqrt()).map_err(|e| ScoraError::input(e.to_string()))?;
    let theta0 = threshold.sample(rng);
    let scores = embedding.scores(&beta)?;
    Ok(GroundTruth { beta, theta0, scores })
}

/// `n` entities drawn uniformly with replacement.
pub fn sample_rating_queries<R: Rng + ?Sized>(n: usize, entities: usize, rng: &mut R) -> Result<Vec<usize>> {
    if entities == 0 {
        return Err(ScoraError::input("no entities to rate"));
    }
    Ok((0..n).map(|_| rng.random_range(0..entities)).collect())
}

/// `n` unordered pairs of distinct entities, uniform with replacement.
///
/// Each pair is emitted in a random orientation.
pub fn sample_comparison_queries_uniform<R: Rng + ?Sized>(
    n: usize,
    entities: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if n > 0 && entities < 2 {
        return Err(ScoraError::input("comparisons need at least two entities"));
    }
    Ok((0..n)
        .map(|_| {
            let b = rng.random_range(0..entities);
            let c = (b + rng.random_range(1..entities)) % entities;
            (b, c)
        })
        .collect())
}

/// All unordered pairs `(a, b)` with `a < b`, in lexicographic order.
pub fn all_pairs(entities: usize) -> Vec<(usize, usize)> {
    (0..entities)
        .flat_map(|a| (a + 1..entities).map(move |b| (a, b)))
        .collect()
}

/// Normalized selection probabilities `∝ exp(θ̃_a + θ̃_b)` over [`all_pairs`].
pub fn active_pair_weights(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.len() < 2 {
        return Err(ScoraError::input("comparisons need at least two entities"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ScoraError::input("scores must be finite"));
    }
    let logits: Vec<f64> = all_pairs(scores.len())
        .into_iter()
        .map(|(a, b)| scores[a] + scores[b])
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// `n` pairs drawn with probability `∝ exp(θ̃_a + θ̃_b)`, in random orientation.
pub fn sample_comparison_queries_active<R: Rng + ?Sized>(
    n: usize,
    scores: &[f64],
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let weights = active_pair_weights(scores)?;
    let pairs = all_pairs(scores.len());
    let index = WeightedIndex::new(&weights).map_err(|e| ScoraError::Numerical(e.to_string()))?;
    Ok((0..n)
        .map(|_| {
            let (a, b) = pairs[index.sample(rng)];
            if rng.random_bool(0.5) {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect())
}

/// Draws the observed value of every query from the generative model.
pub fn generate_observations<R: Rng + ?Sized>(
    rating_queries: &[usize],
    comparison_queries: &[(usize, usize)],
    truth: &GroundTruth,
    comparison_law: RootLaw,
    rating_law: RootLaw,
    rng: &mut R,
) -> Result<Dataset> {
    let entities = truth.scores.len();
    let mut dataset = Dataset::new();
    for &a in rating_queries {
        if a >= entities {
            return Err(ScoraError::IndexOutOfRange { what: "rated entity", index: a, bound: entities });
        }
        let t = rating_law.sample_tilted(truth.scores[a] - truth.theta0, rng);
        dataset.push_rating(a, t);
    }
    for &(b, c) in comparison_queries {
        if b >= entities || c >= entities || b == c {
            return Err(ScoraError::input(format!("invalid comparison query ({b}, {c})")));
        }
        let r = comparison_law.sample_tilted(truth.scores[b] - truth.scores[c], rng);
        dataset.push_comparison(b, c, r);
    }
    Ok(dataset)
}

/// Identity features concatenated with a one-hot cluster indicator.
///
/// Returns the `(A + k) × A` embedding and each entity's cluster, drawn
/// uniformly from `0..k`.
pub fn build_one_hot_embedding<R: Rng + ?Sized>(
    entities: usize,
    clusters: usize,
    rng: &mut R,
) -> Result<(Embedding, Vec<usize>)> {
    if entities == 0 || clusters == 0 {
        return Err(ScoraError::input("need at least one entity and one cluster"));
    }
    let assignment: Vec<usize> = (0..entities).map(|_| rng.random_range(0..clusters)).collect();
    Ok((one_hot_embedding(&assignment, clusters)?, assignment))
}

/// The one-hot cluster embedding for a known assignment.
pub fn one_hot_embedding(assignment: &[usize], clusters: usize) -> Result<Embedding> {
    let entities = assignment.len();
    let dim = entities + clusters;
    let mut data = vec![0.0; dim * entities];
    for (a, &k) in assignment.iter().enumerate() {
        if k >= clusters {
            return Err(ScoraError::IndexOutOfRange { what: "cluster", index: k, bound: clusters });
        }
        data[a * dim + a] = 1.0;
        data[a * dim + entities + k] = 1.0;
    }
    Embedding::from_column_major(dim, entities, data)
}

/// What the first active-learning phase spends its budget on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstPhase {
    Ratings,
    UniformComparisons,
}

/// Two-phase elicitation: `(1 - p_c) b` on the first phase, then `p_c b` on
/// comparisons sampled from the first-phase estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveLearningPlan {
    pub first_phase: FirstPhase,
}

/// Everything the active pipeline needs besides the ground truth.
#[derive(Debug, Clone)]
pub struct ActiveSetup<'a> {
    /// Inference model; its embedding is also the generative one.
    pub model: &'a ScoraModel,
    pub true_comparison_law: RootLaw,
    pub true_rating_law: RootLaw,
    pub budget: f64,
    pub p_c: f64,
    pub cost_comparison: f64,
    pub cost_rating: f64,
    pub solver: &'a SolverConfig,
}

#[derive(Debug, Clone)]
pub struct ActiveOutcome {
    /// Both phases' observations.
    pub dataset: Dataset,
    /// First-phase score estimate `θ̃` that steered the second phase.
    pub intermediate_scores: Vec<f64>,
    pub first_fit: MapResult,
}

pub fn run_active_pipeline<R: Rng + ?Sized>(
    setup: &ActiveSetup<'_>,
    truth: &GroundTruth,
    plan: ActiveLearningPlan,
    rng: &mut R,
) -> Result<ActiveOutcome> {
    let entities = setup.model.embedding.entities();
    let budget = allocate_budget(setup.budget, setup.p_c, setup.cost_comparison, setup.cost_rating)?;
    let first_budget = (1.0 - setup.p_c) * setup.budget;

    let mut dataset = match plan.first_phase {
        FirstPhase::Ratings => {
            let queries = sample_rating_queries(budget.n_ratings, entities, rng)?;
            generate_observations(&queries, &[], truth, setup.true_comparison_law, setup.true_rating_law, rng)?
        }
        FirstPhase::UniformComparisons => {
            let n = (first_budget / setup.cost_comparison).floor() as usize;
            let queries = sample_comparison_queries_uniform(n, entities, rng)?;
            generate_observations(&[], &queries, truth, setup.true_comparison_law, setup.true_rating_law, rng)?
        }
    };
    let first_fit = solve_map(setup.model, &dataset, setup.solver)?;

    let queries = sample_comparison_queries_active(budget.n_comparisons, &first_fit.scores, rng)?;
    dataset.extend(generate_observations(
        &[],
        &queries,
        truth,
        setup.true_comparison_law,
        setup.true_rating_law,
        rng,
    )?);
    Ok(ActiveOutcome {
        dataset,
        intermediate_scores: first_fit.scores.clone(),
        first_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Chi-squared goodness of fit at the 1e-4 level.
    fn chi_squared_ok(counts: &[usize], probs: &[f64]) -> bool {
        let n: usize = counts.iter().sum();
        let stat: f64 = counts
            .iter()
            .zip(probs)
            .map(|(&c, &p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let critical = ChiSquared::new((counts.len() - 1) as f64).unwrap().inverse_cdf(1.0 - 1e-4);
        stat <= critical
    }

    fn within_5se(count: usize, n: usize, p: f64) -> bool {
        let se = (p * (1.0 - p) / n as f64).sqrt();
        (count as f64 / n as f64 - p).abs() <= 5.0 * se
    }

    fn pair_index(a: usize, b: usize, entities: usize) -> usize {
        let (a, b) = (a.min(b), a.max(b));
        all_pairs(entities).iter().position(|&p| p == (a, b)).unwrap()
    }

    #[test]
    fn budget_examples() {
        let p = allocate_budget(1000.0, 0.5, 3.0, 1.0).unwrap();
        assert_eq!((p.n_comparisons, p.n_ratings), (166, 500));
        let p = allocate_budget(100.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!((p.n_comparisons, p.n_ratings), (0, 100));
        let p = allocate_budget(100.0, 1.0, 8.0, 1.0).unwrap();
        assert_eq!((p.n_comparisons, p.n_ratings), (12, 0));
        assert!(allocate_budget(0.0, 0.5, 1.0, 1.0).is_err());
        assert!(allocate_budget(10.0, 0.5, 0.0, 1.0).is_err());
        assert!(allocate_budget(10.0, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn budget_is_never_exceeded() {
        let mut r = rng(0);
        for _ in 0..1000 {
            let b = r.random_range(1.0..1e5);
            let p_c = r.random_range(0.0..=1.0);
            let c_c = r.random_range(0.1..10.0);
            let c_r = r.random_range(0.1..10.0);
            let plan = allocate_budget(b, p_c, c_c, c_r).unwrap();
            assert!(plan.n_comparisons as f64 * c_c + plan.n_ratings as f64 * c_r <= b * (1.0 + 1e-12));
        }
    }

    #[test]
    fn gaussian_ground_truth_variance() {
        let x = Embedding::identity(1).unwrap();
        let mut r = rng(1);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_ground_truth(&PriorSpec::gaussian(), &x, &mut r).unwrap().beta[0])
            .collect();
        let var = draws.iter().map(|v| v * v).sum::<f64>() / n as f64;
        // Var of the sample second moment is 2σ⁴/n for a centered normal
        assert!((var - 1.0).abs() <= 5.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn cauchy_ground_truth_median() {
        let x = Embedding::identity(1).unwrap();
        let mut r = rng(2);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_ground_truth(&PriorSpec::cauchy(), &x, &mut r).unwrap().beta[0])
            .collect();
        draws.sort_by(f64::total_cmp);
        let median = draws[n / 2];
        let iqr = draws[3 * n / 4] - draws[n / 4];
        // asymptotic sd of the median is 1 / (2 f(0) √n) = π/(2√n) for the
        // standard Cauchy, expressed through the IQR (= 2 scale)
        let se = std::f64::consts::PI * iqr / 2.0 / (2.0 * (n as f64).sqrt());
        assert!(median.abs() <= 5.0 * se, "median {median}");
    }

    #[test]
    fn identity_scores_equal_beta() {
        let x = Embedding::identity(5).unwrap();
        let gt = sample_ground_truth(&PriorSpec::gaussian(), &x, &mut rng(3)).unwrap();
        assert_eq!(gt.scores, gt.beta);
    }

    #[test]
    fn rating_queries() {
        assert!(sample_rating_queries(0, 10, &mut rng(0)).unwrap().is_empty());
        assert!(sample_rating_queries(50, 1, &mut rng(0)).unwrap().iter().all(|&a| a == 0));
        let n = 100_000;
        let q = sample_rating_queries(n, 100, &mut rng(4)).unwrap();
        let mut counts = vec![0; 100];
        q.iter().for_each(|&a| counts[a] += 1);
        assert!(counts.iter().all(|&c| within_5se(c, n, 0.01)));
        assert!(chi_squared_ok(&counts, &[0.01; 100]));
    }

    #[test]
    fn uniform_pair_queries() {
        assert!(sample_comparison_queries_uniform(0, 10, &mut rng(0)).unwrap().is_empty());
        assert!(sample_comparison_queries_uniform(3, 1, &mut rng(0)).is_err());
        let two = sample_comparison_queries_uniform(100, 2, &mut rng(0)).unwrap();
        assert!(two.iter().all(|&(b, c)| (b, c) == (0, 1) || (b, c) == (1, 0)));

        let n = 100_000;
        let q = sample_comparison_queries_uniform(n, 10, &mut rng(5)).unwrap();
        let mut counts = vec![0; 45];
        for &(b, c) in &q {
            assert_ne!(b, c);
            counts[pair_index(b, c, 10)] += 1;
        }
        assert!(counts.iter().all(|&c| within_5se(c, n, 1.0 / 45.0)));
        assert!(chi_squared_ok(&counts, &[1.0 / 45.0; 45]));
    }

    #[test]
    fn active_pair_weights_normalize() {
        let w = active_pair_weights(&[0.3, -2.0, 5.0, 1.0]).unwrap();
        assert_eq!(w.len(), 6);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let w = active_pair_weights(&[2f64.ln(), 0.0, 0.0]).unwrap();
        for (got, want) in w.iter().zip([0.4, 0.4, 0.2]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(active_pair_weights(&[1000.0, 999.0, -1000.0]).unwrap().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn active_queries_with_equal_scores_are_uniform() {
        let n = 100_000;
        let q = sample_comparison_queries_active(n, &[0.7; 6], &mut rng(6)).unwrap();
        let mut counts = vec![0; 15];
        q.iter().for_each(|&(b, c)| counts[pair_index(b, c, 6)] += 1);
        assert!(counts.iter().all(|&c| within_5se(c, n, 1.0 / 15.0)));
        assert!(chi_squared_ok(&counts, &[1.0 / 15.0; 15]));
    }

    #[test]
    fn active_queries_three_entities() {
        let n = 100_000;
        let q = sample_comparison_queries_active(n, &[2f64.ln(), 0.0, 0.0], &mut rng(7)).unwrap();
        let mut counts = vec![0; 3];
        q.iter().for_each(|&(b, c)| counts[pair_index(b, c, 3)] += 1);
        for (c, p) in counts.iter().zip([0.4, 0.4, 0.2]) {
            assert!(within_5se(*c, n, p));
        }
        assert!(chi_squared_ok(&counts, &[0.4, 0.4, 0.2]));
    }

    #[test]
    fn active_queries_concentrate_on_top_entity() {
        let mut scores = vec![0.0; 100];
        scores[17] = 20.0;
        let q = sample_comparison_queries_active(10_000, &scores, &mut rng(8)).unwrap();
        let hits = q.iter().filter(|&&(b, c)| b == 17 || c == 17).count();
        assert!(hits as f64 >= 0.99 * q.len() as f64);
    }

    #[test]
    fn observation_means() {
        let n = 100_000;
        let truth = GroundTruth {
            beta: vec![],
            theta0: -0.5,
            scores: vec![0.5, 0.5],
        };
        let ds = generate_observations(
            &vec![0; n],
            &vec![(0, 1); n],
            &truth,
            RootLaw::ContinuousUniform,
            RootLaw::KAry(2),
            &mut rng(9),
        )
        .unwrap();
        let cmean = ds.comparisons.iter().map(|c| c.value).sum::<f64>() / n as f64;
        assert!(cmean.abs() <= 5.0 * (1.0 / 3.0 / n as f64).sqrt());
        let rmean = ds.ratings.iter().map(|r| r.value).sum::<f64>() / n as f64;
        let var = RootLaw::KAry(2).cgf_double_prime(1.0);
        assert!((rmean - 1f64.tanh()).abs() <= 5.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn observations_are_seed_deterministic() {
        let truth = GroundTruth {
            beta: vec![],
            theta0: 0.1,
            scores: vec![0.3, -1.2, 2.0],
        };
        let run = || {
            generate_observations(&[0, 2, 1], &[(0, 1), (2, 0)], &truth, RootLaw::KAry(3), RootLaw::ContinuousUniform, &mut rng(10))
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn one_hot_structure() {
        let (x, clusters) = build_one_hot_embedding(30, 5, &mut rng(11)).unwrap();
        assert_eq!((x.dim(), x.entities()), (35, 30));
        for a in 0..30 {
            let nz: Vec<_> = x.column(a).iter().filter(|v| **v != 0.0).collect();
            assert_eq!(nz, vec![&1.0, &1.0]);
        }
        let beta: Vec<f64> = (0..35).map(|i| f64::from(i as u32).sin()).collect();
        let theta = x.scores(&beta).unwrap();
        for a in 0..30 {
            // direct matrix product oracle
            let direct: f64 = (0..35).map(|d| x.get(d, a) * beta[d]).sum();
            assert_eq!(theta[a], direct);
            assert!((theta[a] - (beta[a] + beta[30 + clusters[a]])).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_cluster_sizes() {
        let (_, clusters) = build_one_hot_embedding(1000, 5, &mut rng(12)).unwrap();
        for k in 0..5 {
            let size = clusters.iter().filter(|&&c| c == k).count();
            assert!(within_5se(size, 1000, 0.2), "cluster {k}: {size}");
        }
    }

    fn setup_model(entities: usize) -> ScoraModel {
        ScoraModel::with_unit_priors(Embedding::identity(entities).unwrap(), RootLaw::KAry(2), RootLaw::KAry(2))
    }

    #[test]
    fn active_pipeline_all_comparisons() {
        let model = setup_model(10);
        let solver = SolverConfig::default();
        let setup = ActiveSetup {
            model: &model,
            true_comparison_law: RootLaw::KAry(2),
            true_rating_law: RootLaw::KAry(2),
            budget: 200.0,
            p_c: 1.0,
            cost_comparison: 2.0,
            cost_rating: 1.0,
            solver: &solver,
        };
        let truth = sample_ground_truth(&PriorSpec::cauchy(), &model.embedding, &mut rng(13)).unwrap();
        let plan = ActiveLearningPlan { first_phase: FirstPhase::Ratings };
        let out = run_active_pipeline(&setup, &truth, plan, &mut rng(14)).unwrap();
        assert!(out.intermediate_scores.iter().all(|&s| s == 0.0));
        assert!(out.dataset.ratings.is_empty());
        assert_eq!(out.dataset.comparisons.len(), 100);
    }

    #[test]
    fn active_pipeline_ratings_only_and_determinism() {
        let model = setup_model(10);
        let solver = SolverConfig::default();
        let mut setup = ActiveSetup {
            model: &model,
            true_comparison_law: RootLaw::KAry(2),
            true_rating_law: RootLaw::KAry(2),
            budget: 200.0,
            p_c: 0.0,
            cost_comparison: 2.0,
            cost_rating: 1.0,
            solver: &solver,
        };
        let truth = sample_ground_truth(&PriorSpec::cauchy(), &model.embedding, &mut rng(15)).unwrap();
        let plan = ActiveLearningPlan { first_phase: FirstPhase::Ratings };
        let out = run_active_pipeline(&setup, &truth, plan, &mut rng(16)).unwrap();
        assert!(out.dataset.comparisons.is_empty());
        assert_eq!(out.dataset.ratings.len(), 200);

        setup.p_c = 0.5;
        let a = run_active_pipeline(&setup, &truth, plan, &mut rng(17)).unwrap();
        let b = run_active_pipeline(&setup, &truth, plan, &mut rng(17)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.intermediate_scores, b.intermediate_scores);
        assert_eq!(a.dataset.ratings.len(), 100);
        assert_eq!(a.dataset.comparisons.len(), 50);
    }

    #[test]
    fn comparisons_first_pipeline() {
        let model = setup_model(8);
        let solver = SolverConfig::default();
        let setup = ActiveSetup {
            model: &model,
            true_comparison_law: RootLaw::KAry(2),
            true_rating_law: RootLaw::KAry(5),
            budget: 300.0,
            p_c: 0.4,
            cost_comparison: 3.0,
            cost_rating: 1.0,
            solver: &solver,
        };
        let truth = sample_ground_truth(&PriorSpec::cauchy(), &model.embedding, &mut rng(18)).unwrap();
        let plan = ActiveLearningPlan { first_phase: FirstPhase::UniformComparisons };
        let out = run_active_pipeline(&setup, &truth, plan, &mut rng(19)).unwrap();
        assert!(out.dataset.ratings.is_empty());
        // floor(180 / 3) uniform + floor(120 / 3) active
        assert_eq!(out.dataset.comparisons.len(), 60 + 40);
    }
}
