//! Seeded synthetic experiments.
//!
//! A run sweeps a grid of budgets `b` and comparison fractions `p_c`. Every
//! repetition at a grid point draws its own random stream from
//! `(base_seed, b, p_c, repetition)`, so a row can be regenerated on its own
//! and the output does not depend on scheduling: repetitions run in parallel
//! but are aggregated in index order.
//!
//! Two kinds of run exist:
//!
//! * **convergence**: passive elicitation with uniformly sampled queries,
//!   scored by the Pearson correlation with the ground truth;
//! * **sweet spot**: two-phase active elicitation, scored by the
//!   exponentially weighted correlation.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Result, ScoraError};
use crate::metrics::{pearson_corr, weighted_corr_exp};
use crate::model::{Dataset, Embedding, ScoraModel};
use crate::rootlaw::RootLaw;
use crate::solver::{solve_map, SolverConfig};
use crate::synth::{
    allocate_budget, build_one_hot_embedding, generate_observations, run_active_pipeline,
    sample_comparison_queries_uniform, sample_ground_truth, sample_rating_queries, ActiveLearningPlan,
    ActiveSetup, BetaPrior, FirstPhase, GroundTruth, PriorSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingScheme {
    Identity,
    OneHot(usize),
}

impl fmt::Display for EmbeddingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingScheme::Identity => f.write_str("identity"),
            EmbeddingScheme::OneHot(k) => write!(f, "onehot:{k}"),
        }
    }
}

impl FromStr for EmbeddingScheme {
    type Err = ScoraError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "identity" => Ok(EmbeddingScheme::Identity),
            other => {
                let k = other
                    .strip_prefix("onehot:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|k| *k > 0)
                    .ok_or_else(|| ScoraError::Parse(format!("unknown embedding scheme '{s}'")))?;
                Ok(EmbeddingScheme::OneHot(k))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Passive,
    Active(FirstPhase),
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Passive => "passive",
            Pipeline::Active(FirstPhase::Ratings) => "active-ratings",
            Pipeline::Active(FirstPhase::UniformComparisons) => "active-comparisons",
        })
    }
}

impl FromStr for Pipeline {
    type Err = ScoraError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "passive" => Ok(Pipeline::Passive),
            "active" | "active-ratings" => Ok(Pipeline::Active(FirstPhase::Ratings)),
            "active-comparisons" => Ok(Pipeline::Active(FirstPhase::UniformComparisons)),
            _ => Err(ScoraError::Parse(format!("unknown pipeline '{s}'"))),
        }
    }
}

/// Parameters of an experiment sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub entities: usize,
    pub embedding: EmbeddingScheme,
    /// Generative comparison root law.
    pub k_c: RootLaw,
    /// Generative rating root law.
    pub k_r: RootLaw,
    /// Inference comparison law; the generative one when unset.
    pub inference_f: Option<RootLaw>,
    /// Inference rating law; the generative one when unset.
    pub inference_g: Option<RootLaw>,
    pub prior: BetaPrior,
    pub threshold_variance: f64,
    pub prior_var_beta: f64,
    pub prior_var_threshold: f64,
    pub budgets: Vec<f64>,
    pub p_c: Vec<f64>,
    pub c_c: f64,
    pub c_r: f64,
    pub pipeline: Pipeline,
    pub repetitions: usize,
    pub base_seed: u64,
    pub solver: SolverConfig,
}

/// `{0, 0.1, ..., 1}`.
pub fn fraction_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

/// `{10^1, 10^1.5, ..., 10^5}`.
pub fn budget_grid() -> Vec<f64> {
    (2..=10).map(|i| 10f64.powf(f64::from(i) / 2.0)).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::convergence()
    }
}

impl ExperimentConfig {
    /// Passive convergence with uniform laws on the identity embedding.
    pub fn convergence() -> Self {
        ExperimentConfig {
            entities: 100,
            embedding: EmbeddingScheme::Identity,
            k_c: RootLaw::ContinuousUniform,
            k_r: RootLaw::ContinuousUniform,
            inference_f: None,
            inference_g: None,
            prior: BetaPrior::Gaussian(1.0),
            threshold_variance: 1.0,
            prior_var_beta: 1.0,
            prior_var_threshold: 1.0,
            budgets: budget_grid(),
            p_c: vec![0.0, 0.5, 1.0],
            c_c: 1.0,
            c_r: 1.0,
            pipeline: Pipeline::Passive,
            repetitions: 20,
            base_seed: 0,
            solver: SolverConfig::default(),
        }
    }

    /// Convergence with Gaussian inference laws on uniform data.
    pub fn convergence_mismatch() -> Self {
        ExperimentConfig {
            inference_f: Some(RootLaw::Gaussian(1.0)),
            inference_g: Some(RootLaw::Gaussian(1.0)),
            ..Self::convergence()
        }
    }

    /// Ratings-first active learning on heavy-tailed scores with binary laws,
    /// one-hot cluster features and costly comparisons.
    pub fn sweet_spot() -> Self {
        ExperimentConfig {
            embedding: EmbeddingScheme::OneHot(5),
            k_c: RootLaw::KAry(2),
            k_r: RootLaw::KAry(2),
            prior: BetaPrior::Cauchy(1.0),
            budgets: vec![1e4, 2e4, 1e5],
            p_c: fraction_grid(),
            c_c: 8.0,
            c_r: 1.0,
            pipeline: Pipeline::Active(FirstPhase::Ratings),
            ..Self::convergence()
        }
    }

    /// Named presets: `fig1a`, `fig1b`, `fig2`, `fig3`, `fig4`, `appc-ratings`, `appc-comparisons`.
    pub fn preset(name: &str) -> Result<Self> {
        let sweet = Self::sweet_spot();
        let baseline = ExperimentConfig {
            k_r: RootLaw::KAry(5),
            budgets: vec![1e4],
            c_c: 3.0,
            ..sweet.clone()
        };
        Ok(match name {
            "fig1a" => Self::convergence(),
            "fig1b" => Self::convergence_mismatch(),
            "fig2" => ExperimentConfig {
                embedding: EmbeddingScheme::Identity,
                k_c: RootLaw::ContinuousUniform,
                k_r: RootLaw::ContinuousUniform,
                budgets: vec![500.0, 1000.0, 1500.0],
                c_c: 3.0,
                ..sweet
            },
            "fig3" => ExperimentConfig {
                embedding: EmbeddingScheme::Identity,
                budgets: vec![5000.0, 10000.0, 20000.0],
                ..sweet
            },
            "fig4" => sweet,
            "appc-ratings" => baseline,
            "appc-comparisons" => ExperimentConfig {
                pipeline: Pipeline::Active(FirstPhase::UniformComparisons),
                ..baseline
            },
            _ => return Err(ScoraError::input(format!("unknown preset '{name}'"))),
        })
    }

    pub fn inference_laws(&self) -> (RootLaw, RootLaw) {
        (self.inference_f.unwrap_or(self.k_c), self.inference_g.unwrap_or(self.k_r))
    }

    pub fn prior_spec(&self) -> PriorSpec {
        PriorSpec {
            beta: self.prior,
            threshold_variance: self.threshold_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entities < 2 {
            return Err(ScoraError::input("need at least two entities"));
        }
        if self.budgets.is_empty() || self.p_c.is_empty() {
            return Err(ScoraError::input("budget and p_c sweeps must be nonempty"));
        }
        if self.budgets.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(ScoraError::input("budgets must be finite and nonnegative"));
        }
        if self.p_c.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ScoraError::input("p_c values must lie in [0, 1]"));
        }
        if !(self.c_c > 0.0 && self.c_r > 0.0) {
            return Err(ScoraError::input("costs must be positive"));
        }
        if self.repetitions == 0 {
            return Err(ScoraError::input("repetitions must be at least 1"));
        }
        for v in [self.threshold_variance, self.prior_var_beta, self.prior_var_threshold] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScoraError::input("variances must be positive"));
            }
        }
        Ok(())
    }

    /// Reads a TOML file and applies it on top of `self`.
    pub fn merge_file(self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        self.merge_toml(&text)
    }

    /// Applies the keys present in a TOML document on top of `self`.
    pub fn merge_toml(mut self, text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ScoraError::Parse(e.to_string()))?;
        if let Some(preset) = &file.preset {
            self = Self::preset(preset)?;
        }
        if let Some(v) = file.entities {
            self.entities = v;
        }
        if let Some(v) = file.embedding {
            self.embedding = v.parse()?;
        }
        if let Some(v) = file.k_c {
            self.k_c = RootLaw::from_arity(&v.into_string())?;
        }
        if let Some(v) = file.k_r {
            self.k_r = RootLaw::from_arity(&v.into_string())?;
        }
        if let Some(v) = file.inference_f {
            self.inference_f = parse_optional_law(&v.into_string())?;
        }
        if let Some(v) = file.inference_g {
            self.inference_g = parse_optional_law(&v.into_string())?;
        }
        if let Some(v) = file.prior {
            self.prior = v.parse()?;
        }
        if let Some(v) = file.threshold_variance {
            self.threshold_variance = v;
        }
        if let Some(v) = file.prior_var_beta {
            self.prior_var_beta = v;
        }
        if let Some(v) = file.prior_var_threshold {
            self.prior_var_threshold = v;
        }
        if let Some(v) = file.budgets {
            self.budgets = v.into_vec();
        }
        if let Some(v) = file.p_c {
            self.p_c = v.into_vec();
        }
        if let Some(v) = file.c_c {
            self.c_c = v;
        }
        if let Some(v) = file.c_r {
            self.c_r = v;
        }
        if let Some(v) = file.pipeline {
            self.pipeline = v.parse()?;
        }
        if let Some(v) = file.repetitions {
            self.repetitions = v;
        }
        if let Some(v) = file.base_seed {
            self.base_seed = v;
        }
        if let Some(v) = file.gradient_tolerance {
            self.solver.gradient_tolerance = v;
        }
        if let Some(v) = file.max_iterations {
            self.solver.max_iterations = v;
        }
        if let Some(v) = file.history_size {
            self.solver.history_size = v;
        }
        self.validate()?;
        Ok(self)
    }
}

/// `none` (or empty) clears an inference override; anything else is a law token.
pub fn parse_optional_law(token: &str) -> Result<Option<RootLaw>> {
    match token.trim() {
        "" | "none" | "true" => Ok(None),
        t => RootLaw::from_arity(t).map(Some),
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Token {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Token {
    fn into_string(self) -> String {
        match self {
            Token::Int(i) => i.to_string(),
            Token::Float(f) => f.to_string(),
            Token::Str(s) => s,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<String>,
    entities: Option<usize>,
    embedding: Option<String>,
    k_c: Option<Token>,
    k_r: Option<Token>,
    inference_f: Option<Token>,
    inference_g: Option<Token>,
    prior: Option<String>,
    threshold_variance: Option<f64>,
    prior_var_beta: Option<f64>,
    prior_var_threshold: Option<f64>,
    budgets: Option<OneOrMany>,
    p_c: Option<OneOrMany>,
    c_c: Option<f64>,
    c_r: Option<f64>,
    pipeline: Option<String>,
    repetitions: Option<usize>,
    base_seed: Option<u64>,
    gradient_tolerance: Option<f64>,
    max_iterations: Option<usize>,
    history_size: Option<usize>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one repetition at one grid point.
pub fn repetition_seed(base_seed: u64, budget: f64, p_c: f64, repetition: usize) -> u64 {
    [budget.to_bits(), p_c.to_bits(), repetition as u64]
        .into_iter()
        .fold(splitmix64(base_seed), |acc, v| splitmix64(acc ^ v))
}

pub fn repetition_rng(base_seed: u64, budget: f64, p_c: f64, repetition: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(repetition_seed(base_seed, budget, p_c, repetition))
}

/// One passive synthetic instance: embedding, hidden truth and observations.
#[derive(Debug, Clone)]
pub struct Instance {
    pub embedding: Embedding,
    pub clusters: Option<Vec<usize>>,
    pub truth: GroundTruth,
    pub dataset: Dataset,
}

fn draw_embedding(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<(Embedding, Option<Vec<usize>>)> {
    match config.embedding {
        EmbeddingScheme::Identity => Ok((Embedding::identity(config.entities)?, None)),
        EmbeddingScheme::OneHot(k) => {
            let (x, clusters) = build_one_hot_embedding(config.entities, k, rng)?;
            Ok((x, Some(clusters)))
        }
    }
}

/// Draws the passive instance of repetition `repetition` at `(budget, p_c)`.
pub fn passive_instance(config: &ExperimentConfig, budget: f64, p_c: f64, repetition: usize) -> Result<Instance> {
    let mut rng = repetition_rng(config.base_seed, budget, p_c, repetition);
    let (embedding, clusters) = draw_embedding(config, &mut rng)?;
    let truth = sample_ground_truth(&config.prior_spec(), &embedding, &mut rng)?;
    let plan = allocate_budget(budget, p_c, config.c_c, config.c_r)?;
    let ratings = sample_rating_queries(plan.n_ratings, config.entities, &mut rng)?;
    let comparisons = sample_comparison_queries_uniform(plan.n_comparisons, config.entities, &mut rng)?;
    let dataset = generate_observations(&ratings, &comparisons, &truth, config.k_c, config.k_r, &mut rng)?;
    Ok(Instance {
        embedding,
        clusters,
        truth,
        dataset,
    })
}

fn inference_model(config: &ExperimentConfig, embedding: Embedding) -> Result<ScoraModel> {
    let (f, g) = config.inference_laws();
    ScoraModel::new(embedding, f, g, config.prior_var_beta, config.prior_var_threshold)
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    metric: f64,
    iterations: usize,
}

fn convergence_repetition(config: &ExperimentConfig, budget: f64, p_c: f64, repetition: usize) -> Result<Outcome> {
    let inst = passive_instance(config, budget, p_c, repetition)?;
    let model = inference_model(config, inst.embedding)?;
    let fit = solve_map(&model, &inst.dataset, &config.solver)?;
    Ok(Outcome {
        metric: pearson_corr(&fit.scores, &inst.truth.scores)?,
        iterations: fit.iterations,
    })
}

fn sweet_spot_repetition(
    config: &ExperimentConfig,
    plan: ActiveLearningPlan,
    budget: f64,
    p_c: f64,
    repetition: usize,
) -> Result<Outcome> {
    let mut rng = repetition_rng(config.base_seed, budget, p_c, repetition);
    let (embedding, _) = draw_embedding(config, &mut rng)?;
    let truth = sample_ground_truth(&config.prior_spec(), &embedding, &mut rng)?;
    let model = inference_model(config, embedding)?;
    let setup = ActiveSetup {
        model: &model,
        true_comparison_law: config.k_c,
        true_rating_law: config.k_r,
        budget,
        p_c,
        cost_comparison: config.c_c,
        cost_rating: config.c_r,
        solver: &config.solver,
    };
    let outcome = run_active_pipeline(&setup, &truth, plan, &mut rng)?;
    let solver = config.solver.clone().warm_started(outcome.first_fit.point());
    let fit = solve_map(&model, &outcome.dataset, &solver)?;
    Ok(Outcome {
        metric: weighted_corr_exp(&fit.scores, &truth.scores)?,
        iterations: outcome.first_fit.iterations + fit.iterations,
    })
}

/// Aggregate of the repetitions at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub b: f64,
    pub p_c: f64,
    pub metric: &'static str,
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval, `1.96 s / √n`.
    pub ci95: f64,
    pub n_success: usize,
    pub n_failed: usize,
    pub mean_iterations: f64,
    pub config: ExperimentConfig,
}

pub const CSV_HEADER: &str = "b,p_c,metric,mean,ci95,n_success,n_failed,mean_iterations,entities,embedding,k_c,k_r,inference_f,inference_g,prior,c_c,c_r,pipeline,repetitions,base_seed";

/// Sample mean and 95% half-width; NaN where undefined.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

impl ResultRow {
    fn aggregate(config: &ExperimentConfig, b: f64, p_c: f64, metric: &'static str, outcomes: &[Result<Outcome>]) -> Self {
        let ok: Vec<Outcome> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
        let metrics: Vec<f64> = ok.iter().map(|o| o.metric).collect();
        let (mean, ci95) = mean_ci95(&metrics);
        let mean_iterations = if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|o| o.iterations as f64).sum::<f64>() / ok.len() as f64
        };
        ResultRow {
            b,
            p_c,
            metric,
            mean,
            ci95,
            n_success: ok.len(),
            n_failed: outcomes.len() - ok.len(),
            mean_iterations,
            config: config.clone(),
        }
    }

    pub fn to_csv_line(&self) -> String {
        let c = &self.config;
        let (f, g) = (
            c.inference_f.map_or("none".into(), |l| l.to_string()),
            c.inference_g.map_or("none".into(), |l| l.to_string()),
        );
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.b,
            self.p_c,
            self.metric,
            self.mean,
            self.ci95,
            self.n_success,
            self.n_failed,
            self.mean_iterations,
            c.entities,
            c.embedding,
            c.k_c,
            c.k_r,
            f,
            g,
            c.prior,
            c.c_c,
            c.c_r,
            c.pipeline,
            c.repetitions,
            c.base_seed,
        )
    }
}

pub fn write_rows<W: Write>(rows: &[ResultRow], mut writer: W) -> Result<()> {
    writeln!(writer, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(writer, "{}", row.to_csv_line())?;
    }
    writer.flush()?;
    Ok(())
}

fn sweep<F>(config: &ExperimentConfig, metric: &'static str, repetition: F) -> Vec<ResultRow>
where
    F: Fn(f64, f64, usize) -> Result<Outcome> + Sync,
{
    let points: Vec<(f64, f64)> = config
        .budgets
        .iter()
        .flat_map(|&b| config.p_c.iter().map(move |&p| (b, p)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|i| (0..config.repetitions).map(move |r| (i, r)))
        .collect();
    let outcomes: Vec<Result<Outcome>> = jobs
        .par_iter()
        .map(|&(i, r)| repetition(points[i].0, points[i].1, r))
        .collect();
    points
        .iter()
        .zip(outcomes.chunks(config.repetitions))
        .map(|(&(b, p), chunk)| ResultRow::aggregate(config, b, p, metric, chunk))
        .collect()
}

/// Passive convergence sweep scored by Pearson correlation.
pub fn run_convergence(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    if config.pipeline != Pipeline::Passive {
        return Err(ScoraError::input("convergence runs need the passive pipeline"));
    }
    Ok(sweep(config, "corr", |b, p, r| convergence_repetition(config, b, p, r)))
}

/// Active-learning sweep scored by the exponentially weighted correlation.
pub fn run_sweetspot(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let Pipeline::Active(first_phase) = config.pipeline else {
        return Err(ScoraError::input("sweet-spot runs need an active pipeline"));
    };
    let plan = ActiveLearningPlan { first_phase };
    Ok(sweep(config, "corr_exp", |b, p, r| sweet_spot_repetition(config, plan, b, p, r)))
}
