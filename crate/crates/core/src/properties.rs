//! Randomized checks of the structural guarantees of the MAP estimator.
//!
//! Each suite draws random models and datasets from a seed, runs the check
//! and reports how many trials violated it. The suites back both the
//! `properties` CLI subcommand and the acceptance tests.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{to_flexible, Dataset, Embedding, ScoraModel};
use crate::rootlaw::RootLaw;
use crate::solver::{solve_map, solve_map_flexible, MapResult, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub trials: usize,
    pub violations: usize,
    /// Largest observed value of the checked quantity (deviation or ratio).
    pub worst: f64,
    pub tolerance: f64,
    /// Trials exempted from the check (ties, degenerate draws).
    pub exempt: usize,
}

impl SuiteReport {
    fn new(name: &'static str, tolerance: f64) -> Self {
        SuiteReport {
            name,
            trials: 0,
            violations: 0,
            worst: 0.0,
            tolerance,
            exempt: 0,
        }
    }

    /// Records one trial whose checked quantity must stay `<= tolerance`.
    fn record(&mut self, value: f64) {
        self.trials += 1;
        if value.is_nan() || value > self.tolerance {
            self.violations += 1;
        }
        if value.is_nan() || value > self.worst {
            self.worst = value;
        }
    }

    fn record_failure(&mut self) {
        self.trials += 1;
        self.violations += 1;
        self.worst = f64::NAN;
    }

    pub fn passed(&self) -> bool {
        self.trials > 0 && self.violations == 0
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<22} trials={:<5} violations={:<3} worst={:.3e} tol={:.0e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.trials,
            self.violations,
            self.worst,
            self.tolerance,
        )?;
        if self.exempt > 0 {
            write!(f, " exempt={}", self.exempt)?;
        }
        Ok(())
    }
}

/// Bounded root laws used for random instances.
fn random_bounded_law(rng: &mut ChaCha8Rng) -> RootLaw {
    match rng.random_range(0..5) {
        0 => RootLaw::ContinuousUniform,
        _ => RootLaw::KAry(rng.random_range(2..=6)),
    }
}

fn random_kary(rng: &mut ChaCha8Rng) -> RootLaw {
    RootLaw::KAry(rng.random_range(2..=6))
}

/// A value in the support of `law`.
fn random_value(law: RootLaw, rng: &mut ChaCha8Rng) -> f64 {
    match law {
        RootLaw::KAry(k) => {
            let j = rng.random_range(0..k);
            RootLaw::atoms(k).nth(j as usize).unwrap()
        }
        RootLaw::ContinuousUniform => rng.random_range(-1.0..=1.0),
        RootLaw::Gaussian(v) => rng.random_range(-2.0..=2.0) * v.sqrt(),
    }
}

fn random_pair(entities: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let b = rng.random_range(0..entities);
    (b, (b + rng.random_range(1..entities)) % entities)
}

fn random_dataset(model: &ScoraModel, max_per_kind: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let a = model.embedding.entities();
    let mut ds = Dataset::new();
    for _ in 0..rng.random_range(0..=max_per_kind) {
        let (b, c) = random_pair(a, rng);
        ds.push_comparison(b, c, random_value(model.comparison_law, rng));
    }
    for _ in 0..rng.random_range(0..=max_per_kind) {
        ds.push_rating(rng.random_range(0..a), random_value(model.rating_law, rng));
    }
    ds
}

fn random_embedding(rng: &mut ChaCha8Rng) -> Embedding {
    let dim = rng.random_range(1..=5);
    let a = rng.random_range(2..=7);
    Embedding::from_column_major(dim, a, (0..dim * a).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

fn random_model(embedding: Embedding, rng: &mut ChaCha8Rng) -> ScoraModel {
    ScoraModel::new(
        embedding,
        random_bounded_law(rng),
        random_bounded_law(rng),
        rng.random_range(0.3..3.0),
        rng.random_range(0.3..3.0),
    )
    .unwrap()
}

/// Identity embedding half the time, a dense random one otherwise.
fn random_embedding_or_identity(rng: &mut ChaCha8Rng) -> Embedding {
    if rng.random_bool(0.5) {
        Embedding::identity(rng.random_range(2..=8)).unwrap()
    } else {
        random_embedding(rng)
    }
}

/// Lipschitz constant `4 σ²_max max(R, T) max(1, max_a |x_a|)`.
pub fn lipschitz_constant(model: &ScoraModel) -> f64 {
    let r = model.comparison_law.support_bound().value();
    let t = model.rating_law.support_bound().value();
    4.0 * model.max_prior_variance() * r.max(t) * model.embedding.max_column_norm().max(1.0)
}

/// With the identity embedding, `θ0* = -(σ0²/σβ²) Σ_a θ*_a`.
pub fn threshold_identity(seed: u64, trials: usize, solver: &SolverConfig) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("threshold_identity", 1e-6);
    for _ in 0..trials {
        let x = Embedding::identity(rng.random_range(2..=12)).unwrap();
        let model = random_model(x, &mut rng);
        let ds = random_dataset(&model, 40, &mut rng);
        match solve_map(&model, &ds, solver) {
            Ok(fit) => {
                let sum: f64 = fit.scores.iter().sum();
                let ratio = model.prior_var_threshold / model.prior_var_beta;
                report.record((fit.theta0 + ratio * sum).abs());
            }
            Err(_) => report.record_failure(),
        }
    }
    report
}

/// Monte Carlo mean and variance of tilted draws against `Φ'` and `Φ''`.
///
/// The variance is estimated as the second moment about the exact mean `Φ'`.
/// The recorded quantity is the deviation in standard errors.
pub fn moments(seed: u64, draws: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("moments", 5.0);
    let laws = [RootLaw::KAry(2), RootLaw::KAry(5), RootLaw::ContinuousUniform, RootLaw::Gaussian(1.0)];
    let n = draws as f64;
    for law in laws {
        for theta in [-2.0, 0.0, 0.5, 3.0] {
            let xs: Vec<f64> = (0..draws).map(|_| law.sample_tilted(theta, &mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let expected_mean = law.cgf_prime(theta);
            let expected_var = law.cgf_double_prime(theta);
            report.record((mean - expected_mean).abs() / (expected_var / n).sqrt());
            let sq: Vec<f64> = xs.iter().map(|x| (x - expected_mean).powi(2)).collect();
            let second = sq.iter().sum::<f64>() / n;
            let spread = sq.iter().map(|v| (v - second).powi(2)).sum::<f64>() / (n - 1.0);
            let gap = (second - expected_var).abs();
            report.record(match (spread / n).sqrt() {
                se if se > 1e-12 => gap / se,
                _ if gap <= 1e-12 => 0.0,
                _ => f64::INFINITY,
            });
        }
    }
    report
}

/// Score difference an observation is about: `θ_b - θ_c`, or `θ_a - θ0` for a rating.
#[derive(Debug, Clone, Copy)]
enum Target {
    Comparison(usize, usize),
    Rating(usize),
}

impl Target {
    fn gap(self, fit: &MapResult) -> f64 {
        match self {
            Target::Comparison(b, c) => fit.scores[b] - fit.scores[c],
            Target::Rating(a) => fit.scores[a] - fit.theta0,
        }
    }
}

/// Raising one observation's value never lowers the MAP score gap it is about.
///
/// Records how far the gap moved the wrong way (zero when monotone).
pub fn pairwise_monotonicity(seed: u64, trials: usize, solver: &SolverConfig) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("pairwise_monotonicity", 1e-8);
    for _ in 0..trials {
        let model = random_model(random_embedding_or_identity(&mut rng), &mut rng);
        let mut low = random_dataset(&model, 25, &mut rng);
        let edit_comparison = if low.comparisons.is_empty() && low.ratings.is_empty() {
            let (b, c) = random_pair(model.embedding.entities(), &mut rng);
            low.push_comparison(b, c, random_value(model.comparison_law, &mut rng));
            true
        } else if low.ratings.is_empty() {
            true
        } else if low.comparisons.is_empty() {
            false
        } else {
            rng.random_bool(0.5)
        };
        let mut high = low.clone();
        let target = if edit_comparison {
            let n = rng.random_range(0..low.comparisons.len());
            let (u, v) = ordered_values(model.comparison_law, &mut rng);
            low.comparisons[n].value = u;
            high.comparisons[n].value = v;
            Target::Comparison(low.comparisons[n].first, low.comparisons[n].second)
        } else {
            let n = rng.random_range(0..low.ratings.len());
            let (u, v) = ordered_values(model.rating_law, &mut rng);
            low.ratings[n].value = u;
            high.ratings[n].value = v;
            Target::Rating(low.ratings[n].entity)
        };
        match (solve_map(&model, &low, solver), solve_map(&model, &high, solver)) {
            (Ok(lo), Ok(hi)) => report.record((target.gap(&lo) - target.gap(&hi)).max(0.0)),
            _ => report.record_failure(),
        }
    }
    report
}

/// Two values in the support with `first <= second`.
fn ordered_values(law: RootLaw, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u = random_value(law, rng);
    let v = random_value(law, rng);
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Adding an observation moves its score gap in the direction of
/// `value - Φ'(gap)`. Records 1 for each sign mismatch, 0 otherwise.
pub fn directional_update(seed: u64, trials: usize, solver: &SolverConfig) -> SuiteReport {
    const TIE_BAND: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("directional_update", 0.0);
    for _ in 0..trials {
        let model = random_model(random_embedding_or_identity(&mut rng), &mut rng);
        let before = random_dataset(&model, 25, &mut rng);
        let Ok(old) = solve_map(&model, &before, solver) else {
            report.record_failure();
            continue;
        };
        let mut after = before.clone();
        let (target, residual) = if rng.random_bool(0.5) {
            let (b, c) = random_pair(model.embedding.entities(), &mut rng);
            let r = random_value(model.comparison_law, &mut rng);
            after.push_comparison(b, c, r);
            let t = Target::Comparison(b, c);
            (t, r - model.comparison_law.cgf_prime(t.gap(&old)))
        } else {
            let a = rng.random_range(0..model.embedding.entities());
            let v = random_value(model.rating_law, &mut rng);
            after.push_rating(a, v);
            let t = Target::Rating(a);
            (t, v - model.rating_law.cgf_prime(t.gap(&old)))
        };
        if residual.abs() <= TIE_BAND {
            report.exempt += 1;
            continue;
        }
        match solve_map(&model, &after, solver) {
            Ok(new) => {
                let moved = target.gap(&new) - target.gap(&old);
                let agrees = moved != 0.0 && moved.signum() == residual.signum();
                report.record(if agrees { 0.0 } else { 1.0 });
            }
            Err(_) => report.record_failure(),
        }
    }
    report
}

/// Adding an observation whose value equals its current expectation `Φ'(gap)`
/// leaves the MAP in place. Records the largest coordinate shift.
pub fn zero_update(seed: u64, trials: usize, solver: &SolverConfig) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("zero_update", 1e-6);
    for _ in 0..trials {
        let model = random_model(random_embedding_or_identity(&mut rng), &mut rng);
        let before = random_dataset(&model, 25, &mut rng);
        let Ok(old) = solve_map(&model, &before, solver) else {
            report.record_failure();
            continue;
        };
        let mut after = before.clone();
        if rng.random_bool(0.5) {
            let (b, c) = random_pair(model.embedding.entities(), &mut rng);
            let gap = Target::Comparison(b, c).gap(&old);
            after.push_comparison(b, c, model.comparison_law.cgf_prime(gap));
        } else {
            let a = rng.random_range(0..model.embedding.entities());
            let gap = Target::Rating(a).gap(&old);
            after.push_rating(a, model.rating_law.cgf_prime(gap));
        }
        match solve_map(&model, &after, solver) {
            Ok(new) => {
                let shift = old
                    .point()
                    .iter()
                    .zip(new.point())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                report.record(shift);
            }
            Err(_) => report.record_failure(),
        }
    }
    report
}

/// One elementary edit: add, remove or modify a single observation.
fn single_edit(model: &ScoraModel, ds: &Dataset, rng: &mut ChaCha8Rng) -> Dataset {
    let mut out = ds.clone();
    let a = model.embedding.entities();
    let total = ds.len();
    match if total == 0 { 0 } else { rng.random_range(0..3) } {
        0 => {
            if rng.random_bool(0.5) {
                let (b, c) = random_pair(a, rng);
                out.push_comparison(b, c, random_value(model.comparison_law, rng));
            } else {
                out.push_rating(rng.random_range(0..a), random_value(model.rating_law, rng));
            }
        }
        1 => {
            let n = rng.random_range(0..total);
            if n < ds.comparisons.len() {
                out.comparisons.remove(n);
            } else {
                out.ratings.remove(n - ds.comparisons.len());
            }
        }
        _ => {
            let n = rng.random_range(0..total);
            if n < ds.comparisons.len() {
                let (b, c) = random_pair(a, rng);
                out.comparisons[n] = crate::model::Comparison {
                    first: b,
                    second: c,
                    value: random_value(model.comparison_law, rng),
                };
            } else {
                out.ratings[n - ds.comparisons.len()] = crate::model::Rating {
                    entity: rng.random_range(0..a),
                    value: random_value(model.rating_law, rng),
                };
            }
        }
    }
    out
}

/// A single edit moves the scores by at most `L |x|₂` and the threshold by at
/// most `L`. Records the larger of the two ratios movement / bound.
pub fn lipschitz_resilience(seed: u64, trials: usize, solver: &SolverConfig) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("lipschitz_resilience", 1.0);
    for _ in 0..trials {
        let x = Embedding::identity(rng.random_range(2..=10)).unwrap();
        let model = ScoraModel::with_unit_priors(x, random_kary(&mut rng), random_kary(&mut rng));
        let l = lipschitz_constant(&model);
        debug_assert_eq!(l, 4.0);
        let x_norm = model.embedding.spectral_norm();
        // large edits need small, lopsided datasets
        let d = random_dataset(&model, 12, &mut rng);
        let d2 = single_edit(&model, &d, &mut rng);
        match (solve_map(&model, &d, solver), solve_map(&model, &d2, solver)) {
            (Ok(p), Ok(q)) => {
                let dtheta = p
                    .scores
                    .iter()
                    .zip(&q.scores)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let dt0 = (p.theta0 - q.theta0).abs();
                report.record((dtheta / (l * x_norm)).max(dt0 / l));
            }
            _ => report.record_failure(),
        }
    }
    report
}

/// SCoRa loss equals the flexible loss of its reduction, and both solvers
/// land on the same optimum. Records the worse of (relative loss gap / 1e-12)
/// and (MAP gap / 1e-6), so values above 1 are violations.
pub fn reduction_exactness(seed: u64, trials: usize, solver: &SolverConfig) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("reduction_exactness", 1.0);
    for _ in 0..trials {
        let model = random_model(random_embedding_or_identity(&mut rng), &mut rng);
        let ds = random_dataset(&model, 30, &mut rng);
        let (flex, obs) = to_flexible(&model, &ds).unwrap();
        let dim = model.embedding.dim();
        let beta: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let theta0 = rng.random_range(-3.0..3.0);
        let mut tilde = beta.clone();
        tilde.push(theta0);
        let a = model.loss(&ds, &beta, theta0).unwrap();
        let b = flex.loss(&obs, &tilde).unwrap();
        let loss_gap = (a - b).abs() / a.abs().max(f64::MIN_POSITIVE);
        match (solve_map(&model, &ds, solver), solve_map_flexible(&flex, &obs, solver)) {
            (Ok(fit), Ok((flex_beta, _))) => {
                let map_gap = fit
                    .point()
                    .iter()
                    .zip(&flex_beta)
                    .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
                report.record((loss_gap / 1e-12).max(map_gap / 1e-6));
            }
            _ => report.record_failure(),
        }
    }
    report
}

/// Midpoint inequality with modulus `1/σ²_max`. Records the excess of the
/// midpoint value over the strongly convex bound.
pub fn strong_convexity(seed: u64, trials: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("strong_convexity", 1e-10);
    for _ in 0..trials {
        let model = random_model(random_embedding_or_identity(&mut rng), &mut rng);
        let ds = random_dataset(&model, 30, &mut rng);
        let dim = model.embedding.dim() + 1;
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
        let mid: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        let loss = |v: &[f64]| model.loss(&ds, &v[..dim - 1], v[dim - 1]).unwrap();
        let dist2: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
        let bound = 0.5 * loss(&p) + 0.5 * loss(&q) - dist2 / (8.0 * model.max_prior_variance());
        report.record(loss(&mid) - bound);
    }
    report
}

/// Analytic gradients of both losses against central differences (step 1e-5).
/// Records `|fd - g|_∞ / max(1, |g|_∞)`.
pub fn gradient_checks(seed: u64, trials: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("gradient_checks", 1e-6);
    let h = 1e-5;
    let fd = |f: &dyn Fn(&[f64]) -> f64, x: &[f64]| -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut up = x.to_vec();
                let mut dn = x.to_vec();
                up[i] += h;
                dn[i] -= h;
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect()
    };
    let rel = |approx: &[f64], exact: &[f64]| {
        let scale = exact.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        approx.iter().zip(exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
    };
    for _ in 0..trials {
        let model = random_model(random_embedding_or_identity(&mut rng), &mut rng);
        let ds = random_dataset(&model, 30, &mut rng);
        let dim = model.embedding.dim() + 1;
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();

        let (mut g, g0) = model.gradient(&ds, &p[..dim - 1], p[dim - 1]).unwrap();
        g.push(g0);
        let scora_fd = fd(&|v: &[f64]| model.loss(&ds, &v[..dim - 1], v[dim - 1]).unwrap(), &p);

        let (flex, obs) = to_flexible(&model, &ds).unwrap();
        let flex_g = flex.gradient(&obs, &p).unwrap();
        let flex_fd = fd(&|v: &[f64]| flex.loss(&obs, v).unwrap(), &p);

        report.record(rel(&scora_fd, &g).max(rel(&flex_fd, &flex_g)));
    }
    report
}

/// Every suite at its full trial count.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    let solver = SolverConfig::default();
    vec![
        threshold_identity(seed, 200, &solver),
        moments(seed.wrapping_add(1), 100_000),
        pairwise_monotonicity(seed.wrapping_add(2), 1000, &solver),
        directional_update(seed.wrapping_add(3), 500, &solver),
        zero_update(seed.wrapping_add(4), 500, &solver),
        lipschitz_resilience(seed.wrapping_add(5), 500, &solver),
        reduction_exactness(seed.wrapping_add(6), 100, &solver),
        strong_convexity(seed.wrapping_add(7), 100),
        gradient_checks(seed.wrapping_add(8), 50),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lipschitz_constant_values() {
        let m = ScoraModel::with_unit_priors(Embedding::identity(3).unwrap(), RootLaw::KAry(2), RootLaw::KAry(5));
        assert_eq!(lipschitz_constant(&m), 4.0);
        let g = ScoraModel::with_unit_priors(Embedding::identity(3).unwrap(), RootLaw::KAry(2), RootLaw::Gaussian(1.0));
        assert!(lipschitz_constant(&g).is_infinite());
        let wide = Embedding::from_columns(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = ScoraModel::new(wide, RootLaw::KAry(2), RootLaw::KAry(2), 0.5, 1.5).unwrap();
        assert_eq!(lipschitz_constant(&m), 4.0 * 1.5 * 2.0);
    }

    #[test]
    fn small_runs_pass() {
        let solver = SolverConfig::default();
        for report in [
            threshold_identity(1, 20, &solver),
            moments(1, 20_000),
            pairwise_monotonicity(1, 50, &solver),
            directional_update(1, 50, &solver),
            zero_update(1, 50, &solver),
            lipschitz_resilience(1, 50, &solver),
            reduction_exactness(1, 20, &solver),
            strong_convexity(1, 20),
            gradient_checks(1, 10),
        ] {
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn report_counts_violations() {
        let mut r = SuiteReport::new("x", 1.0);
        r.record(0.5);
        assert!(r.passed());
        r.record(1.5);
        r.record(f64::NAN);
        assert_eq!(r.violations, 2);
        assert!(!r.passed());
        assert!(r.to_string().starts_with("FAIL x"));
    }
}
