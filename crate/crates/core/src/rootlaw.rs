//! Root laws of generalized Bradley–Terry observations.
//!
//! An observation `r` about a score difference `θ` has density proportional
//! to `f(r) · exp(θ r)`, where `f` is the root law. Everything the estimator
//! needs from `f` is its cumulant generating function
//!
//! ```text
//! Φ(θ) = log ∫ exp(θ r) dF(r)
//! ```
//!
//! together with `Φ'` (mean of the tilted law) and `Φ''` (its variance).
//! All laws here are symmetric about zero, so `Φ` is even and `Φ'` is odd.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, ScoraError};

/// Below this |θ| the continuous-uniform CGF and its derivatives use their
/// Taylor series; the closed forms lose relative accuracy to cancellation.
const UNIFORM_SERIES_CUTOFF: f64 = 1e-2;

/// Below this |θ| the continuous-uniform sampler draws from the untilted law.
const UNIFORM_SAMPLER_CUTOFF: f64 = 1e-6;

/// A symmetric root law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootLaw {
    /// Uniform mass on `k` equally spaced atoms spanning `[-1, 1]`.
    KAry(u32),
    /// Uniform density on `[-1, 1]` (the `k → ∞` limit of [`RootLaw::KAry`]).
    ContinuousUniform,
    /// Zero-mean normal with the given variance.
    Gaussian(f64),
}

/// Largest absolute value an observation can take under a root law.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SupportBound(pub f64);

impl SupportBound {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl RootLaw {
    pub fn kary(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(ScoraError::input(format!("k-ary root law needs k >= 2, got {k}")));
        }
        Ok(RootLaw::KAry(k))
    }

    pub fn gaussian(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(ScoraError::input(format!(
                "gaussian root law needs a positive finite variance, got {variance}"
            )));
        }
        Ok(RootLaw::Gaussian(variance))
    }

    /// Parses an arity token: an integer `k >= 2`, or `uniform` / `inf`.
    pub fn from_arity(token: &str) -> Result<Self> {
        let token = token.trim();
        match token {
            "uniform" | "inf" | "infinity" => Ok(RootLaw::ContinuousUniform),
            _ => match token.parse::<u32>() {
                Ok(k) => RootLaw::kary(k),
                Err(_) => token.parse(),
            },
        }
    }

    /// Atoms of a k-ary law, `r_j = -1 + 2j/(k-1)`.
    pub fn atoms(k: u32) -> impl Iterator<Item = f64> {
        let step = 2.0 / f64::from(k - 1);
        (0..k).map(move |j| -1.0 + step * f64::from(j))
    }

    pub fn support_bound(&self) -> SupportBound {
        match self {
            RootLaw::KAry(_) | RootLaw::ContinuousUniform => SupportBound(1.0),
            RootLaw::Gaussian(_) => SupportBound(f64::INFINITY),
        }
    }

    /// Variance of the untilted law, equal to `Φ''(0)`.
    pub fn variance(&self) -> f64 {
        match *self {
            RootLaw::KAry(k) => {
                let k = f64::from(k);
                (k + 1.0) / (3.0 * (k - 1.0))
            }
            RootLaw::ContinuousUniform => 1.0 / 3.0,
            RootLaw::Gaussian(v) => v,
        }
    }

    /// Cumulant generating function `Φ(θ)`.
    pub fn cgf(&self, theta: f64) -> f64 {
        match *self {
            RootLaw::KAry(k) => {
                let shift = theta.abs();
                let sum: f64 = Self::atoms(k).map(|r| (theta * r - shift).exp()).sum();
                shift + sum.ln() - f64::from(k).ln()
            }
            RootLaw::ContinuousUniform => {
                let t = theta.abs();
                if t < UNIFORM_SERIES_CUTOFF {
                    let t2 = t * t;
                    t2 * (1.0 / 6.0 - t2 * (1.0 / 180.0 - t2 * (1.0 / 2835.0 - t2 / 37800.0)))
                } else {
                    // log(sinh t / t) = t + log(1 - e^{-2t}) - log(2t)
                    t + (-(-2.0 * t).exp_m1()).ln() - (2.0 * t).ln()
                }
            }
            RootLaw::Gaussian(v) => 0.5 * v * theta * theta,
        }
    }

    /// `Φ'(θ)`, the mean of the law tilted by `θ`.
    pub fn cgf_prime(&self, theta: f64) -> f64 {
        match *self {
            RootLaw::KAry(k) => {
                let shift = theta.abs();
                let (mut num, mut den) = (0.0, 0.0);
                for r in Self::atoms(k) {
                    let w = (theta * r - shift).exp();
                    num += w * r;
                    den += w;
                }
                num / den
            }
            RootLaw::ContinuousUniform => {
                if theta.abs() < UNIFORM_SERIES_CUTOFF {
                    let t2 = theta * theta;
                    theta * (1.0 / 3.0 - t2 * (1.0 / 45.0 - t2 * (2.0 / 945.0 - t2 / 4725.0)))
                } else {
                    1.0 / theta.tanh() - 1.0 / theta
                }
            }
            RootLaw::Gaussian(v) => v * theta,
        }
    }

    /// `Φ''(θ)`, the variance of the law tilted by `θ`.
    pub fn cgf_double_prime(&self, theta: f64) -> f64 {
        match *self {
            RootLaw::KAry(k) => {
                let shift = theta.abs();
                let (mut den, mut m1) = (0.0, 0.0);
                for r in Self::atoms(k) {
                    let w = (theta * r - shift).exp();
                    den += w;
                    m1 += w * r;
                }
                let mean = m1 / den;
                let spread: f64 = Self::atoms(k)
                    .map(|r| (theta * r - shift).exp() * (r - mean) * (r - mean))
                    .sum();
                spread / den
            }
            RootLaw::ContinuousUniform => {
                if theta.abs() < UNIFORM_SERIES_CUTOFF {
                    let t2 = theta * theta;
                    1.0 / 3.0 - t2 * (1.0 / 15.0 - t2 * (2.0 / 189.0 - t2 / 675.0))
                } else {
                    let s = theta.sinh();
                    1.0 / (theta * theta) - 1.0 / (s * s)
                }
            }
            RootLaw::Gaussian(v) => v,
        }
    }

    /// Draws one observation with density proportional to `f(r) exp(θ r)`.
    pub fn sample_tilted<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        match *self {
            RootLaw::KAry(k) => {
                let shift = theta.abs();
                let total: f64 = Self::atoms(k).map(|r| (theta * r - shift).exp()).sum();
                let mut u = rng.random::<f64>() * total;
                let mut last = 1.0;
                for r in Self::atoms(k) {
                    let w = (theta * r - shift).exp();
                    if u < w {
                        return r;
                    }
                    u -= w;
                    last = r;
                }
                last
            }
            RootLaw::ContinuousUniform => {
                if theta.abs() < UNIFORM_SAMPLER_CUTOFF {
                    return rng.random_range(-1.0..=1.0);
                }
                // Inverse CDF: r = log(u e^t + (1-u) e^{-t}) / t, rewritten so it
                // neither overflows nor cancels. Negative θ mirrors positive θ.
                let t = theta.abs();
                let u: f64 = rng.random();
                let r = 1.0 + ((1.0 - u) * (-2.0 * t).exp_m1()).ln_1p() / t;
                (theta.signum() * r).clamp(-1.0, 1.0)
            }
            RootLaw::Gaussian(v) => {
                let z: f64 = StandardNormal.sample(rng);
                v * theta + v.sqrt() * z
            }
        }
    }
}

impl fmt::Display for RootLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RootLaw::KAry(k) => write!(f, "kary:{k}"),
            RootLaw::ContinuousUniform => f.write_str("uniform"),
            RootLaw::Gaussian(v) => write!(f, "gaussian:{v}"),
        }
    }
}

impl FromStr for RootLaw {
    type Err = ScoraError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(RootLaw::ContinuousUniform);
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| ScoraError::Parse(format!("unknown root law token '{s}'")))?;
        match kind {
            "kary" => {
                let k = arg
                    .parse()
                    .map_err(|_| ScoraError::Parse(format!("bad arity in '{s}'")))?;
                RootLaw::kary(k)
            }
            "gaussian" => {
                let v = arg
                    .parse()
                    .map_err(|_| ScoraError::Parse(format!("bad variance in '{s}'")))?;
                RootLaw::gaussian(v)
            }
            _ => Err(ScoraError::Parse(format!("unknown root law token '{s}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LAWS: [RootLaw; 5] = [
        RootLaw::KAry(2),
        RootLaw::KAry(5),
        RootLaw::ContinuousUniform,
        RootLaw::Gaussian(1.0),
        RootLaw::Gaussian(4.0),
    ];

    fn grid() -> impl Iterator<Item = f64> {
        (-400..=400).map(|i| f64::from(i) * 0.025 + 0.0031)
    }

    fn rel_err(approx: f64, exact: f64) -> f64 {
        (approx - exact).abs() / exact.abs().max(1.0)
    }

    #[test]
    fn cgf_examples() {
        assert_eq!(RootLaw::KAry(2).cgf(0.0), 0.0);
        assert!((RootLaw::KAry(2).cgf(1.0) - 0.433_780_830_483_027_2).abs() < 1e-15);
        assert_eq!(RootLaw::Gaussian(1.0).cgf(2.0), 2.0);
        assert!(RootLaw::ContinuousUniform.cgf(1e-12).abs() < 1e-15);
    }

    #[test]
    fn cgf_prime_examples() {
        assert_eq!(RootLaw::ContinuousUniform.cgf_prime(0.0), 0.0);
        assert!((RootLaw::KAry(2).cgf_prime(1.0) - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert_eq!(RootLaw::Gaussian(1.0).cgf_prime(-3.0), -3.0);
    }

    #[test]
    fn cgf_double_prime_examples() {
        assert!((RootLaw::KAry(2).cgf_double_prime(0.0) - 1.0).abs() < 1e-15);
        assert!((RootLaw::ContinuousUniform.cgf_double_prime(0.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(RootLaw::Gaussian(4.0).cgf_double_prime(7.3), 4.0);
        for law in LAWS {
            assert!((law.cgf_double_prime(0.0) - law.variance()).abs() < 1e-14, "{law}");
        }
    }

    #[test]
    fn uniform_closed_forms_beyond_series() {
        // mpmath at 30 digits
        let u = RootLaw::ContinuousUniform;
        assert!((u.cgf_prime(2.0) - 0.537_314_720_727_548).abs() < 1e-14);
        assert!((u.cgf_double_prime(2.0) - 0.173_978_170_161_928_9).abs() < 1e-14);
    }

    #[test]
    fn support_bounds() {
        assert_eq!(RootLaw::KAry(5).support_bound().value(), 1.0);
        assert_eq!(RootLaw::ContinuousUniform.support_bound().value(), 1.0);
        assert!(!RootLaw::Gaussian(1.0).support_bound().is_finite());
    }

    #[test]
    fn kary_atoms_are_evenly_spaced() {
        let atoms: Vec<f64> = RootLaw::atoms(5).collect();
        assert_eq!(atoms, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let binary: Vec<f64> = RootLaw::atoms(2).collect();
        assert_eq!(binary, vec![-1.0, 1.0]);
    }

    #[test]
    fn convexity_on_grid() {
        for law in LAWS {
            let pts: Vec<f64> = grid().step_by(7).collect();
            for (i, &a) in pts.iter().enumerate() {
                for &b in &pts[i + 1..] {
                    let mid = law.cgf(0.5 * (a + b));
                    let chord = 0.5 * (law.cgf(a) + law.cgf(b));
                    assert!(mid <= chord + 1e-12, "{law} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for law in LAWS {
            for theta in grid() {
                let fd1 = (law.cgf(theta + h) - law.cgf(theta - h)) / (2.0 * h);
                let fd2 = (law.cgf_prime(theta + h) - law.cgf_prime(theta - h)) / (2.0 * h);
                assert!(rel_err(fd1, law.cgf_prime(theta)) <= 1e-6, "{law} Φ' at {theta}");
                assert!(rel_err(fd2, law.cgf_double_prime(theta)) <= 1e-6, "{law} Φ'' at {theta}");
            }
        }
    }

    #[test]
    fn symmetry() {
        for law in LAWS {
            for theta in grid() {
                assert!((law.cgf(theta) - law.cgf(-theta)).abs() <= 1e-12);
                assert!((law.cgf_prime(-theta) + law.cgf_prime(theta)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn large_arguments_stay_finite() {
        for law in [RootLaw::KAry(2), RootLaw::KAry(7), RootLaw::ContinuousUniform] {
            for theta in [-800.0, -300.0, 300.0, 800.0] {
                assert!(law.cgf(theta).is_finite());
                assert!((law.cgf_prime(theta).abs() - 1.0).abs() < 1e-2);
                assert!(law.cgf_double_prime(theta) >= 0.0);
            }
        }
    }

    #[test]
    fn tilted_mean_is_increasing() {
        for law in LAWS {
            let mut prev = f64::NEG_INFINITY;
            for theta in grid() {
                let m = law.cgf_prime(theta);
                assert!(m > prev, "{law} at {theta}");
                if law.support_bound().is_finite() {
                    assert!(m.abs() <= 1.0);
                }
                prev = m;
            }
        }
    }

    fn moments(law: RootLaw, theta: f64, n: usize, seed: u64) -> (f64, f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| law.sample_tilted(theta, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
        (mean, var, ((m4 - var * var) / n as f64).max(0.0).sqrt())
    }

    #[test]
    fn untilted_draws_are_centered() {
        for law in LAWS {
            let (mean, _, _) = moments(law, 0.0, 100_000, 3);
            let se = (law.variance() / 100_000.0).sqrt();
            assert!(mean.abs() <= 5.0 * se, "{law}: {mean}");
        }
    }

    #[test]
    fn binary_tilted_mean() {
        let law = RootLaw::KAry(2);
        let (mean, _, _) = moments(law, 1.0, 100_000, 5);
        let se = (law.cgf_double_prime(1.0) / 100_000.0).sqrt();
        assert!((mean - 0.761_594_155_955_764_9).abs() <= 5.0 * se);
    }

    #[test]
    fn uniform_tilted_variance() {
        let law = RootLaw::ContinuousUniform;
        let (_, var, se) = moments(law, 2.0, 100_000, 9);
        assert!((var - law.cgf_double_prime(2.0)).abs() <= 5.0 * se);
    }

    #[test]
    fn draws_stay_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for law in [RootLaw::KAry(2), RootLaw::KAry(4), RootLaw::ContinuousUniform] {
            for theta in [-900.0, -3.0, -1e-7, 0.0, 1e-7, 0.4, 50.0, 900.0] {
                for _ in 0..200 {
                    let r = law.sample_tilted(theta, &mut rng);
                    assert!((-1.0..=1.0).contains(&r), "{law} θ={theta} r={r}");
                }
            }
        }
    }

    #[test]
    fn tokens() {
        for law in LAWS {
            assert_eq!(law.to_string().parse::<RootLaw>().unwrap(), law);
        }
        assert_eq!("kary:3".parse::<RootLaw>().unwrap(), RootLaw::KAry(3));
        assert_eq!(RootLaw::from_arity("2").unwrap(), RootLaw::KAry(2));
        assert_eq!(RootLaw::from_arity("inf").unwrap(), RootLaw::ContinuousUniform);
        assert_eq!(RootLaw::from_arity("gaussian:1").unwrap(), RootLaw::Gaussian(1.0));
        assert!("kary:1".parse::<RootLaw>().is_err());
        assert!("gaussian:-1".parse::<RootLaw>().is_err());
        assert!("laplace".parse::<RootLaw>().is_err());
    }
}
