//! Observations, embeddings and the negative log-posterior.
//!
//! Entities carry feature columns `x_a ∈ R^D`; a parameter vector `β` induces
//! scores `θ = xᵀβ`. Comparisons `(b, c, r)` are generalized Bradley–Terry
//! observations of `θ_b - θ_c` under the comparison root law `f`; ratings
//! `(a, t)` are observations of `θ_a - θ_0` under the rating root law `g`,
//! where `θ_0` is a learned threshold.
//!
//! The loss evaluated here is
//!
//! ```text
//! L(β, θ0) = |β|²/(2σβ²) + θ0²/(2σ0²)
//!          + Σ_C [Φ_f(θ_b - θ_c) - r (θ_b - θ_c)]
//!          + Σ_A [Φ_g(θ_a - θ0)  - t (θ_a - θ0)]
//! ```
//!
//! Every SCoRa model is also a [`FlexModel`]: append a zero row to the
//! embedding, add an extra entity whose only feature is that new row, and the
//! threshold becomes one more coordinate of `β̃`. Ratings turn into
//! comparisons against the extra entity. See [`to_flexible`].

use crate::error::{Result, ScoraError};
use crate::rootlaw::RootLaw;

/// Dense `D × A` feature matrix, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    dim: usize,
    entities: usize,
    data: Vec<f64>,
    // (row, value) of the nonzero entries in each column
    sparse: Vec<Vec<(usize, f64)>>,
}

impl Embedding {
    /// Builds an embedding from column-major data (`data[a * dim + d]`).
    pub fn from_column_major(dim: usize, entities: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || entities == 0 {
            return Err(ScoraError::input("embedding needs at least one row and one column"));
        }
        if data.len() != dim * entities {
            return Err(ScoraError::DimensionMismatch {
                expected: dim * entities,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ScoraError::input("embedding entries must be finite"));
        }
        let sparse = data
            .chunks(dim)
            .map(|col| {
                col.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(d, v)| (d, *v))
                    .collect()
            })
            .collect();
        Ok(Embedding {
            dim,
            entities,
            data,
            sparse,
        })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let dim = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != dim) {
            return Err(ScoraError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::from_column_major(dim, columns.len(), columns.concat())
    }

    pub fn identity(entities: usize) -> Result<Self> {
        let mut data = vec![0.0; entities * entities];
        for a in 0..entities {
            data[a * entities + a] = 1.0;
        }
        Self::from_column_major(entities, entities, data)
    }

    /// Feature dimension `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of entities `A`.
    pub fn entities(&self) -> usize {
        self.entities
    }

    pub fn column(&self, a: usize) -> &[f64] {
        &self.data[a * self.dim..(a + 1) * self.dim]
    }

    pub fn get(&self, d: usize, a: usize) -> f64 {
        self.data[a * self.dim + d]
    }

    pub fn is_identity(&self) -> bool {
        self.dim == self.entities
            && self
                .sparse
                .iter()
                .enumerate()
                .all(|(a, col)| col.len() == 1 && col[0] == (a, 1.0))
    }

    /// `θ = xᵀβ`.
    pub fn scores(&self, beta: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, beta.len())?;
        Ok(self.scores_unchecked(beta))
    }

    pub(crate) fn scores_unchecked(&self, beta: &[f64]) -> Vec<f64> {
        self.sparse
            .iter()
            .map(|col| col.iter().map(|&(d, v)| v * beta[d]).sum())
            .collect()
    }

    /// Accumulates `x · g` into `out`, mapping a score-space gradient back to β.
    pub(crate) fn add_pullback(&self, score_grad: &[f64], out: &mut [f64]) {
        for (col, &g) in self.sparse.iter().zip(score_grad) {
            if g != 0.0 {
                for &(d, v) in col {
                    out[d] += v * g;
                }
            }
        }
    }

    /// `max_a |x_a|₂`.
    pub fn max_column_norm(&self) -> f64 {
        (0..self.entities)
            .map(|a| self.column(a).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Spectral norm `|x|₂` (largest singular value), by power iteration on `x xᵀ`.
    pub fn spectral_norm(&self) -> f64 {
        let mut v = vec![1.0 / (self.dim as f64).sqrt(); self.dim];
        let mut sigma2 = 0.0;
        for _ in 0..1000 {
            let scores = self.scores_unchecked(&v);
            let mut w = vec![0.0; self.dim];
            self.add_pullback(&scores, &mut w);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let converged = (norm - sigma2).abs() <= 1e-14 * norm;
            sigma2 = norm;
            v = w.into_iter().map(|x| x / norm).collect();
            if converged {
                break;
            }
        }
        sigma2.sqrt()
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(ScoraError::DimensionMismatch { expected, found })
    }
}

fn check_index(what: &'static str, index: usize, bound: usize) -> Result<()> {
    if index < bound {
        Ok(())
    } else {
        Err(ScoraError::IndexOutOfRange { what, index, bound })
    }
}

/// A rating `(a, t)`. Entities are 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub entity: usize,
    pub value: f64,
}

/// A comparison `(b, c, r)`; positive `r` favours `first`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub first: usize,
    pub second: usize,
    pub value: f64,
}

/// Multisets of ratings and comparisons. Duplicates are kept.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub ratings: Vec<Rating>,
    pub comparisons: Vec<Comparison>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ratings.len() + self.comparisons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty() && self.comparisons.is_empty()
    }

    pub fn push_rating(&mut self, entity: usize, value: f64) {
        self.ratings.push(Rating { entity, value });
    }

    pub fn push_comparison(&mut self, first: usize, second: usize, value: f64) {
        self.comparisons.push(Comparison {
            first,
            second,
            value,
        });
    }

    pub fn extend(&mut self, other: Dataset) {
        self.ratings.extend(other.ratings);
        self.comparisons.extend(other.comparisons);
    }
}

/// SCoRa model: embedding, root laws `(f, g)` and prior variances.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoraModel {
    pub embedding: Embedding,
    pub comparison_law: RootLaw,
    pub rating_law: RootLaw,
    pub prior_var_beta: f64,
    pub prior_var_threshold: f64,
}

impl ScoraModel {
    pub fn new(
        embedding: Embedding,
        comparison_law: RootLaw,
        rating_law: RootLaw,
        prior_var_beta: f64,
        prior_var_threshold: f64,
    ) -> Result<Self> {
        for (name, v) in [("beta", prior_var_beta), ("threshold", prior_var_threshold)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScoraError::input(format!(
                    "{name} prior variance must be positive and finite, got {v}"
                )));
            }
        }
        Ok(ScoraModel {
            embedding,
            comparison_law,
            rating_law,
            prior_var_beta,
            prior_var_threshold,
        })
    }

    /// Unit prior variances, the setting used throughout the experiments.
    pub fn with_unit_priors(embedding: Embedding, f: RootLaw, g: RootLaw) -> Self {
        ScoraModel {
            embedding,
            comparison_law: f,
            rating_law: g,
            prior_var_beta: 1.0,
            prior_var_threshold: 1.0,
        }
    }

    pub fn max_prior_variance(&self) -> f64 {
        self.prior_var_beta.max(self.prior_var_threshold)
    }

    /// Checks entity indices, distinct comparison members and value support.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let a = self.embedding.entities();
        let f_bound = self.comparison_law.support_bound().value();
        let g_bound = self.rating_law.support_bound().value();
        for r in &dataset.ratings {
            check_index("rated entity", r.entity, a)?;
            check_value(r.value, g_bound, "rating")?;
        }
        for c in &dataset.comparisons {
            check_index("compared entity", c.first, a)?;
            check_index("compared entity", c.second, a)?;
            if c.first == c.second {
                return Err(ScoraError::input(format!(
                    "comparison of entity {} with itself",
                    c.first
                )));
            }
            check_value(c.value, f_bound, "comparison")?;
        }
        Ok(())
    }

    /// Negative log-posterior `L(β, θ0 | D)` up to an additive constant.
    pub fn loss(&self, dataset: &Dataset, beta: &[f64], theta0: f64) -> Result<f64> {
        self.validate(dataset)?;
        let theta = self.embedding.scores(beta)?;
        let prior = beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * self.prior_var_beta)
            + theta0 * theta0 / (2.0 * self.prior_var_threshold);
        let f = self.comparison_law;
        let g = self.rating_law;
        let comparisons: f64 = dataset
            .comparisons
            .iter()
            .map(|c| {
                let d = theta[c.first] - theta[c.second];
                f.cgf(d) - c.value * d
            })
            .sum();
        let ratings: f64 = dataset
            .ratings
            .iter()
            .map(|r| {
                let d = theta[r.entity] - theta0;
                g.cgf(d) - r.value * d
            })
            .sum();
        Ok(prior + comparisons + ratings)
    }

    /// Gradient of [`ScoraModel::loss`] with respect to `(β, θ0)`.
    pub fn gradient(&self, dataset: &Dataset, beta: &[f64], theta0: f64) -> Result<(Vec<f64>, f64)> {
        self.validate(dataset)?;
        let x = &self.embedding;
        let theta = x.scores(beta)?;
        let mut grad: Vec<f64> = beta.iter().map(|b| b / self.prior_var_beta).collect();
        let mut grad_theta0 = theta0 / self.prior_var_threshold;
        for c in &dataset.comparisons {
            let resid = self.comparison_law.cgf_prime(theta[c.first] - theta[c.second]) - c.value;
            for (d, g) in grad.iter_mut().enumerate() {
                *g += resid * (x.get(d, c.first) - x.get(d, c.second));
            }
        }
        for r in &dataset.ratings {
            let resid = self.rating_law.cgf_prime(theta[r.entity] - theta0) - r.value;
            for (d, g) in grad.iter_mut().enumerate() {
                *g += resid * x.get(d, r.entity);
            }
            grad_theta0 -= resid;
        }
        Ok((grad, grad_theta0))
    }
}

fn check_value(v: f64, bound: f64, what: &str) -> Result<()> {
    if v.is_finite() && v.abs() <= bound {
        Ok(())
    } else {
        Err(ScoraError::input(format!("{what} value {v} outside the root law support [-{bound}, {bound}]")))
    }
}

/// Free-function form of [`ScoraModel::loss`].
pub fn scora_loss(model: &ScoraModel, dataset: &Dataset, beta: &[f64], theta0: f64) -> Result<f64> {
    model.loss(dataset, beta, theta0)
}

/// Free-function form of [`ScoraModel::gradient`].
pub fn scora_gradient(
    model: &ScoraModel,
    dataset: &Dataset,
    beta: &[f64],
    theta0: f64,
) -> Result<(Vec<f64>, f64)> {
    model.gradient(dataset, beta, theta0)
}

pub fn scores(embedding: &Embedding, beta: &[f64]) -> Result<Vec<f64>> {
    embedding.scores(beta)
}

/// Comparison of `first` against `second` under its own root law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlexObservation {
    pub first: usize,
    pub second: usize,
    pub value: f64,
    pub law: RootLaw,
}

/// Comparison-only linear GBT model with a diagonal Gaussian prior.
#[derive(Debug, Clone, PartialEq)]
pub struct FlexModel {
    pub embedding: Embedding,
    pub prior_variances: Vec<f64>,
}

impl FlexModel {
    pub fn new(embedding: Embedding, prior_variances: Vec<f64>) -> Result<Self> {
        check_len(embedding.dim(), prior_variances.len())?;
        if prior_variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ScoraError::input("prior variances must be positive and finite"));
        }
        Ok(FlexModel {
            embedding,
            prior_variances,
        })
    }

    pub fn validate(&self, observations: &[FlexObservation]) -> Result<()> {
        let a = self.embedding.entities();
        for o in observations {
            check_index("compared entity", o.first, a)?;
            check_index("compared entity", o.second, a)?;
            if o.first == o.second {
                return Err(ScoraError::input(format!("comparison of entity {} with itself", o.first)));
            }
            check_value(o.value, o.law.support_bound().value(), "comparison")?;
        }
        Ok(())
    }

    pub fn loss(&self, observations: &[FlexObservation], beta: &[f64]) -> Result<f64> {
        self.validate(observations)?;
        let theta = self.embedding.scores(beta)?;
        let prior = 0.5
            * beta
                .iter()
                .zip(&self.prior_variances)
                .map(|(b, v)| b * b / v)
                .sum::<f64>();
        let likelihood: f64 = observations
            .iter()
            .map(|o| {
                let d = theta[o.first] - theta[o.second];
                o.law.cgf(d) - o.value * d
            })
            .sum();
        Ok(prior + likelihood)
    }

    pub fn gradient(&self, observations: &[FlexObservation], beta: &[f64]) -> Result<Vec<f64>> {
        self.validate(observations)?;
        let x = &self.embedding;
        let theta = x.scores(beta)?;
        let mut grad: Vec<f64> = beta
            .iter()
            .zip(&self.prior_variances)
            .map(|(b, v)| b / v)
            .collect();
        for o in observations {
            let resid = o.law.cgf_prime(theta[o.first] - theta[o.second]) - o.value;
            for (d, g) in grad.iter_mut().enumerate() {
                *g += resid * (x.get(d, o.first) - x.get(d, o.second));
            }
        }
        Ok(grad)
    }
}

pub fn flexible_loss(model: &FlexModel, observations: &[FlexObservation], beta: &[f64]) -> Result<f64> {
    model.loss(observations, beta)
}

pub fn flexible_gradient(
    model: &FlexModel,
    observations: &[FlexObservation],
    beta: &[f64],
) -> Result<Vec<f64>> {
    model.gradient(observations, beta)
}

/// Rewrites a SCoRa model and dataset as a flexible GBT problem.
///
/// The augmented embedding has one extra row and one extra entity (index
/// `A`): `x̃_a = (x_a; 0)` and `x̃_A = (0; 1)`. Parameters map as
/// `β̃ = (β; θ0)` and the loss is preserved exactly.
pub fn to_flexible(model: &ScoraModel, dataset: &Dataset) -> Result<(FlexModel, Vec<FlexObservation>)> {
    model.validate(dataset)?;
    let x = &model.embedding;
    let (dim, entities) = (x.dim(), x.entities());
    let aug_dim = dim + 1;
    let mut data = vec![0.0; aug_dim * (entities + 1)];
    for a in 0..entities {
        data[a * aug_dim..a * aug_dim + dim].copy_from_slice(x.column(a));
    }
    data[entities * aug_dim + dim] = 1.0;
    let embedding = Embedding::from_column_major(aug_dim, entities + 1, data)?;

    let mut prior_variances = vec![model.prior_var_beta; dim];
    prior_variances.push(model.prior_var_threshold);

    let observations = dataset
        .comparisons
        .iter()
        .map(|c| FlexObservation {
            first: c.first,
            second: c.second,
            value: c.value,
            law: model.comparison_law,
        })
        .chain(dataset.ratings.iter().map(|r| FlexObservation {
            first: r.entity,
            second: entities,
            value: r.value,
            law: model.rating_law,
        }))
        .collect();
    Ok((FlexModel::new(embedding, prior_variances)?, observations))
}

/// Inverse of the observation map of [`to_flexible`].
pub fn from_flexible(model: &ScoraModel, observations: &[FlexObservation]) -> Result<Dataset> {
    let threshold = model.embedding.entities();
    let mut dataset = Dataset::new();
    for o in observations {
        if o.second == threshold {
            dataset.push_rating(o.first, o.value);
        } else if o.first == threshold {
            return Err(ScoraError::input("threshold entity may only appear second"));
        } else {
            dataset.push_comparison(o.first, o.second, o.value);
        }
    }
    model.validate(&dataset)?;
    Ok(dataset)
}
