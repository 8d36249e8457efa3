//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Near the optimum of a large sum the loss differences fall below its
//! rounding error, so the line search also accepts steps satisfying the
//! approximate Wolfe conditions of Hager and Zhang (curvature only, with the
//! loss allowed to rise by a rounding-sized amount).

use std::collections::VecDeque;

use crate::error::{Result, ScoraError};

const ARMIJO: f64 = 1e-4;
const CURVATURE: f64 = 0.9;
const MAX_LINE_SEARCH_EVALS: usize = 60;
const MAX_STEP: f64 = 1e10;
/// Relative loss noise tolerated by the approximate Wolfe test.
const LOSS_NOISE: f64 = 1e-11;

/// A smooth function with an analytic gradient.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Returns the value at `x` and writes the gradient into `grad`.
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub history_size: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            gradient_tolerance: 1e-8,
            max_iterations: 1000,
            history_size: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

struct Counter<'a, O: ?Sized> {
    objective: &'a O,
    evaluations: usize,
}

impl<O: Objective + ?Sized> Counter<'_, O> {
    fn at(&mut self, x: Vec<f64>) -> Result<Point> {
        let mut g = vec![0.0; x.len()];
        let f = self.objective.evaluate(&x, &mut g);
        self.evaluations += 1;
        if f.is_nan() || g.iter().any(|v| v.is_nan()) {
            return Err(ScoraError::Numerical("NaN in loss or gradient".into()));
        }
        Ok(Point { x, f, g })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: returns `-H g` for the implicit inverse Hessian `H`.
fn search_direction(g: &[f64], history: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for p in history.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        q.iter_mut().zip(&p.s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizer of the cubic interpolating two points with slopes, or `None`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

struct LineSearch<'a, 'o, O: ?Sized> {
    eval: &'a mut Counter<'o, O>,
    start: &'a Point,
    dir: &'a [f64],
    slope0: f64,
}

struct Trial {
    alpha: f64,
    point: Point,
    slope: f64,
}

impl<O: Objective + ?Sized> LineSearch<'_, '_, O> {
    fn trial(&mut self, alpha: f64) -> Result<Trial> {
        let point = self.eval.at(axpy(&self.start.x, alpha, self.dir))?;
        let slope = dot(&point.g, self.dir);
        Ok(Trial { alpha, point, slope })
    }

    fn armijo_fails(&self, t: &Trial) -> bool {
        let bound = self.start.f + ARMIJO * t.alpha * self.slope0;
        t.point.f.is_nan() || t.point.f > bound
    }

    fn strong_curvature(&self, t: &Trial) -> bool {
        t.slope.abs() <= -CURVATURE * self.slope0
    }

    fn approx_wolfe(&self, t: &Trial) -> bool {
        let noise = LOSS_NOISE * (1.0 + self.start.f.abs());
        t.point.f <= self.start.f + noise
            && t.slope >= CURVATURE * self.slope0
            && t.slope <= (2.0 * ARMIJO - 1.0) * self.slope0
    }

    fn run(mut self, alpha0: f64) -> Result<Option<Trial>> {
        let mut prev = Trial {
            alpha: 0.0,
            point: Point {
                x: self.start.x.clone(),
                f: self.start.f,
                g: self.start.g.clone(),
            },
            slope: self.slope0,
        };
        let mut alpha = alpha0;
        for i in 0..MAX_LINE_SEARCH_EVALS {
            let t = self.trial(alpha)?;
            if !t.point.f.is_finite() {
                alpha = 0.5 * (prev.alpha + alpha);
                continue;
            }
            if self.approx_wolfe(&t) {
                return Ok(Some(t));
            }
            if self.armijo_fails(&t) || (i > 0 && t.point.f >= prev.point.f) {
                return self.zoom(prev, t);
            }
            if self.strong_curvature(&t) {
                return Ok(Some(t));
            }
            if t.slope >= 0.0 {
                return self.zoom(t, prev);
            }
            alpha = (2.0 * alpha).min(MAX_STEP);
            prev = t;
        }
        Ok(None)
    }

    /// Shrinks the bracket `[lo, hi]` (unordered) until a Wolfe point is found.
    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Result<Option<Trial>> {
        for _ in 0..MAX_LINE_SEARCH_EVALS {
            let (left, right) = if lo.alpha < hi.alpha {
                (lo.alpha, hi.alpha)
            } else {
                (hi.alpha, lo.alpha)
            };
            let width = right - left;
            if width <= f64::EPSILON * right.max(1e-300) {
                break;
            }
            let guess = cubic_min(lo.alpha, lo.point.f, lo.slope, hi.alpha, hi.point.f, hi.slope)
                .unwrap_or(0.5 * (left + right));
            let alpha = guess.clamp(left + 0.1 * width, right - 0.1 * width);
            let t = self.trial(alpha)?;
            if self.approx_wolfe(&t) {
                return Ok(Some(t));
            }
            if self.armijo_fails(&t) || t.point.f >= lo.point.f {
                hi = t;
            } else {
                if self.strong_curvature(&t) {
                    return Ok(Some(t));
                }
                if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = std::mem::replace(&mut lo, t);
                } else {
                    lo = t;
                }
            }
        }
        // No Wolfe point; settle for the best decrease if there is one.
        if lo.alpha > 0.0 && lo.point.f < self.start.f {
            return Ok(Some(lo));
        }
        Ok(None)
    }
}

/// Minimizes `objective` from `x0`, stopping once `|∇f|_∞ ≤ gradient_tolerance`.
pub fn minimize<O: Objective + ?Sized>(objective: &O, x0: Vec<f64>, options: &LbfgsOptions) -> Result<Minimum> {
    if x0.len() != objective.dim() {
        return Err(ScoraError::DimensionMismatch {
            expected: objective.dim(),
            found: x0.len(),
        });
    }
    if options.gradient_tolerance.is_nan() || options.gradient_tolerance <= 0.0 || options.history_size == 0 {
        return Err(ScoraError::input("gradient tolerance and history size must be positive"));
    }
    let mut eval = Counter {
        objective,
        evaluations: 0,
    };
    let mut current = eval.at(x0)?;
    if !current.f.is_finite() {
        return Err(ScoraError::Numerical("loss is not finite at the initial point".into()));
    }
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(options.history_size);
    let mut iterations = 0;

    let finish = |p: Point, iterations, evaluations| Minimum {
        gradient_norm: inf_norm(&p.g),
        x: p.x,
        value: p.f,
        iterations,
        evaluations,
    };

    while inf_norm(&current.g) > options.gradient_tolerance {
        if iterations >= options.max_iterations {
            return Err(ScoraError::NotConverged {
                iterations,
                gradient_norm: inf_norm(&current.g),
                best: current.x,
            });
        }
        iterations += 1;

        let mut dir = search_direction(&current.g, &history);
        let mut slope = dot(&dir, &current.g);
        if slope.is_nan() || slope >= 0.0 {
            history.clear();
            dir = current.g.iter().map(|v| -v).collect();
            slope = -dot(&current.g, &current.g);
        }
        let alpha0 = if history.is_empty() {
            (1.0 / inf_norm(&current.g)).min(1.0)
        } else {
            1.0
        };
        let found = LineSearch {
            eval: &mut eval,
            start: &current,
            dir: &dir,
            slope0: slope,
        }
        .run(alpha0)?;

        match found {
            Some(t) => {
                let s: Vec<f64> = t.point.x.iter().zip(&current.x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = t.point.g.iter().zip(&current.g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > f64::EPSILON * dot(&y, &y) {
                    if history.len() == options.history_size {
                        history.pop_front();
                    }
                    history.push_back(Pair { rho: 1.0 / sy, s, y });
                }
                current = t.point;
            }
            None if !history.is_empty() => history.clear(),
            None => {
                return Err(ScoraError::NotConverged {
                    iterations,
                    gradient_norm: inf_norm(&current.g),
                    best: current.x,
                });
            }
        }
    }
    Ok(finish(current, iterations, eval.evaluations))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        diag: Vec<f64>,
        shift: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.diag.len()
        }
        fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut f = 0.0;
            for i in 0..x.len() {
                let r = x[i] - self.shift[i];
                f += 0.5 * self.diag[i] * r * r;
                grad[i] = self.diag[i] * r;
            }
            f
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let (a, b) = (x[0], x[1]);
            grad[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            grad[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        }
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let q = Quadratic {
            diag: (0..50).map(|i| 10f64.powf(f64::from(i) / 12.0)).collect(),
            shift: (0..50).map(|i| f64::from(i).sin()).collect(),
        };
        let m = minimize(&q, vec![0.0; 50], &LbfgsOptions::default()).unwrap();
        assert!(m.gradient_norm <= 1e-8);
        for (x, s) in m.x.iter().zip(&q.shift) {
            assert!((x - s).abs() < 1e-8);
        }
    }

    #[test]
    fn rosenbrock() {
        let m = minimize(&Rosenbrock, vec![-1.2, 1.0], &LbfgsOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn already_optimal_start_takes_no_steps() {
        let q = Quadratic {
            diag: vec![1.0, 2.0],
            shift: vec![0.0, 0.0],
        };
        let m = minimize(&q, vec![0.0, 0.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(m.iterations, 0);
        assert_eq!(m.x, vec![0.0, 0.0]);
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let q = Quadratic {
            diag: (0..20).map(|i| 2f64.powi(i)).collect(),
            shift: vec![1.0; 20],
        };
        let opts = LbfgsOptions {
            max_iterations: 2,
            ..LbfgsOptions::default()
        };
        match minimize(&q, vec![0.0; 20], &opts) {
            Err(ScoraError::NotConverged { iterations, best, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(best.len(), 20);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn nan_is_reported() {
        struct Bad;
        impl Objective for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn evaluate(&self, _: &[f64], g: &mut [f64]) -> f64 {
                g[0] = f64::NAN;
                0.0
            }
        }
        assert!(matches!(
            minimize(&Bad, vec![0.0], &LbfgsOptions::default()),
            Err(ScoraError::Numerical(_))
        ));
    }
}
