//! Nelder–Mead simplex minimisation (Lagarias et al. variant) with seeded
//! multi-start restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SimplexConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Defaults to `200 * dim`.
    pub max_iters: Option<usize>,
    /// Per run; defaults to `200 * dim`.
    pub max_fn_evals: Option<usize>,
    pub x_tol: f64,
    pub f_tol: f64,
    pub restarts: usize,
    /// Relative perturbation of each coordinate in the initial simplex.
    pub restart_spread: f64,
    /// Absolute perturbation used for zero coordinates.
    pub zero_delta: f64,
    pub rng_seed: u64,
    /// Extra runs restarted from the best point found.
    pub polish: usize,
    /// Results at or above this value are reported as not converged.
    pub infeasible_value: Option<f64>,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        SimplexConfig {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            max_iters: None,
            max_fn_evals: None,
            x_tol: 1e-6,
            f_tol: 1e-6,
            restarts: 20,
            restart_spread: 0.05,
            zero_delta: 0.00025,
            rng_seed: 0,
            polish: 0,
            infeasible_value: None,
        }
    }
}

impl SimplexConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.reflection > 0.0
            && self.expansion > 1.0
            && self.expansion > self.reflection
            && self.contraction > 0.0
            && self.contraction < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0;
        if !ok {
            return Err(Error::InvalidArgument(
                "simplex coefficients need ρ > 0, χ > max(1, ρ), 0 < γ < 1, 0 < σ < 1".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("at least one restart is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult<T> {
    pub best_point: Vec<T>,
    pub best_value: T,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    /// Best value after each iteration.
    pub history: Vec<T>,
}

/// Minimises `f` from `x0`.
///
/// Reflection, expansion, outside/inside contraction and shrink steps follow
/// the standard ordering; a reflected point that only ties the best vertex is
/// accepted without trying an expansion. The run converges when the spread
/// of function values is at most `f_tol` and the simplex fits in an `x_tol`
/// box around the best vertex, or when all vertices and their reflection
/// share one value.
pub fn nelder_mead<T: Scalar, F: Fn(&[T]) -> T>(
    f: F,
    x0: &[T],
    cfg: &SimplexConfig,
) -> OptimizationResult<T> {
    let m = x0.len();
    assert!(m >= 1, "nelder_mead needs at least one dimension");
    let max_evals = cfg.max_fn_evals.unwrap_or(200 * m);
    let max_iters = cfg.max_iters.unwrap_or(200 * m);
    let rho = T::lit(cfg.reflection);
    let chi = T::lit(cfg.expansion);
    let psi = T::lit(cfg.contraction);
    let sigma = T::lit(cfg.shrink);
    let one = T::one();
    let f_tol = T::lit(cfg.f_tol);
    let x_tol = T::lit(cfg.x_tol);

    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[T]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<T>> = vec![x0.to_vec()];
    for i in 0..m {
        let mut y = x0.to_vec();
        y[i] = if y[i] != T::zero() {
            (one + T::lit(cfg.restart_spread)) * y[i]
        } else {
            T::lit(cfg.zero_delta)
        };
        simplex.push(y);
    }
    let mut values: Vec<T> = simplex.iter().map(|x| eval(x)).collect();
    sort_simplex(&mut simplex, &mut values);

    let mut history = vec![values[0]];
    let mut iterations = 0usize;
    let mut converged = false;
    let mut centroid = vec![T::zero(); m];
    let combine = |c: &[T], worst: &[T], a: T| -> Vec<T> {
        // (1 + a) c - a worst
        c.iter()
            .zip(worst)
            .map(|(&ci, &wi)| (one + a) * ci - a * wi)
            .collect()
    };

    loop {
        let f_spread = values
            .iter()
            .skip(1)
            .fold(T::zero(), |acc, &v| acc.max((v - values[0]).abs()));
        let x_spread = simplex.iter().skip(1).fold(T::zero(), |acc, v| {
            v.iter()
                .zip(&simplex[0])
                .fold(acc, |a, (&p, &q)| a.max((p - q).abs()))
        });
        if f_spread <= f_tol && x_spread <= x_tol {
            converged = true;
            break;
        }
        if evals.get() >= max_evals || iterations >= max_iters {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = T::zero());
        for v in &simplex[..m] {
            for (c, &x) in centroid.iter_mut().zip(v) {
                *c = *c + x;
            }
        }
        let mf = T::from_usize(m).unwrap();
        centroid.iter_mut().for_each(|c| *c = *c / mf);

        let worst = simplex[m].clone();
        let xr = combine(&centroid, &worst, rho);
        let fr = eval(&xr);
        if f_spread == T::zero() && fr == values[0] {
            // flat plateau: the reflection sees the same value as every vertex
            converged = true;
            break;
        }
        iterations += 1;
        let mut do_shrink = false;
        if fr < values[0] {
            let xe = combine(&centroid, &worst, rho * chi);
            let fe = eval(&xe);
            if fe < fr {
                simplex[m] = xe;
                values[m] = fe;
            } else {
                simplex[m] = xr;
                values[m] = fr;
            }
        } else if fr < values[m - 1] || (m == 1 && fr <= values[0]) {
            simplex[m] = xr;
            values[m] = fr;
        } else if fr < values[m] {
            let xc = combine(&centroid, &worst, psi * rho);
            let fc = eval(&xc);
            if fc <= fr {
                simplex[m] = xc;
                values[m] = fc;
            } else {
                do_shrink = true;
            }
        } else {
            let xcc = combine(&centroid, &worst, -psi);
            let fcc = eval(&xcc);
            if fcc < values[m] {
                simplex[m] = xcc;
                values[m] = fcc;
            } else {
                do_shrink = true;
            }
        }
        if do_shrink {
            let best = simplex[0].clone();
            for j in 1..=m {
                for (x, &b) in simplex[j].iter_mut().zip(&best) {
                    *x = b + sigma * (*x - b);
                }
                values[j] = eval(&simplex[j]);
            }
        }
        sort_simplex(&mut simplex, &mut values);
        history.push(values[0]);
    }

    let converged = converged
        && cfg
            .infeasible_value
            .is_none_or(|s| values[0] < T::lit(s));
    OptimizationResult {
        best_point: simplex.swap_remove(0),
        best_value: values[0],
        evals: evals.get(),
        iterations,
        converged,
        restart_index: 0,
        history,
    }
}

/// Stable sort of vertices by value.
fn sort_simplex<T: Scalar>(simplex: &mut Vec<Vec<T>>, values: &mut Vec<T>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    *simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
    *values = idx.iter().map(|&i| values[i]).collect();
}

/// Seeded uniform draws in the per-coordinate box, one per restart.
pub fn sample_starts<T: Scalar>(bounds: &[(T, T)], cfg: &SimplexConfig) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    (0..cfg.restarts)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| {
                    let u: f64 = rng.gen();
                    lo + (hi - lo) * T::lit(u)
                })
                .collect()
        })
        .collect()
}

/// Like [`sample_starts`], but rejects draws failing `accept`, trying at
/// most `max_draws` candidates in total. Missing starts are filled with the
/// earliest rejected draws, so exactly `cfg.restarts` starts are returned.
pub fn sample_starts_where<T, A>(
    bounds: &[(T, T)],
    cfg: &SimplexConfig,
    max_draws: usize,
    accept: A,
) -> Vec<Vec<T>>
where
    T: Scalar,
    A: Fn(&[T]) -> bool,
{
    let pool = sample_starts(
        bounds,
        &SimplexConfig {
            restarts: max_draws.max(cfg.restarts),
            ..cfg.clone()
        },
    );
    let mut kept = Vec::with_capacity(cfg.restarts);
    let mut rejected = Vec::new();
    for x in pool {
        if kept.len() == cfg.restarts {
            break;
        }
        if accept(&x) {
            kept.push(x);
        } else if rejected.len() < cfg.restarts {
            rejected.push(x);
        }
    }
    let missing = cfg.restarts - kept.len();
    kept.extend(rejected.into_iter().take(missing));
    kept
}

/// Runs [`nelder_mead`] from every start (concurrently), keeps the best
/// (lowest restart index on ties) and polishes it `cfg.polish` times.
pub fn minimize_from_starts<T, F>(f: &F, starts: &[Vec<T>], cfg: &SimplexConfig) -> OptimizationResult<T>
where
    T: Scalar,
    F: Fn(&[T]) -> T + Sync,
{
    let runs: Vec<OptimizationResult<T>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let mut r = nelder_mead(f, x0, cfg);
            r.restart_index = i;
            r
        })
        .collect();
    let total_evals: usize = runs.iter().map(|r| r.evals).sum();
    let mut best = runs
        .into_iter()
        .reduce(|a, b| if b.best_value < a.best_value { b } else { a })
        .expect("at least one start");
    best.evals = total_evals;
    for _ in 0..cfg.polish {
        let r = nelder_mead(f, &best.best_point, cfg);
        best.evals += r.evals;
        best.iterations += r.iterations;
        if r.best_value <= best.best_value {
            best.history.extend(r.history.iter().copied());
            best.best_point = r.best_point;
            best.best_value = r.best_value;
            best.converged = r.converged;
        }
    }
    if let Some(s) = cfg.infeasible_value {
        if best.best_value >= T::lit(s) {
            best.converged = false;
        }
    }
    best
}

/// [`sample_starts`] followed by [`minimize_from_starts`].
pub fn multi_start_minimize<T, F>(f: &F, bounds: &[(T, T)], cfg: &SimplexConfig) -> OptimizationResult<T>
where
    T: Scalar,
    F: Fn(&[T]) -> T + Sync,
{
    let starts = sample_starts(bounds, cfg);
    minimize_from_starts(f, &starts, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filtered_starts_respect_predicate() {
        let cfg = SimplexConfig { restarts: 5, rng_seed: 3, ..Default::default() };
        let starts = sample_starts_where(&[(0.0, 1.0)], &cfg, 1000, |x: &[f64]| x[0] > 0.9);
        assert_eq!(starts.len(), 5);
        assert!(starts.iter().all(|x| x[0] > 0.9));
        let starts = sample_starts_where(&[(0.0, 1.0)], &cfg, 10, |_: &[f64]| false);
        assert_eq!(starts.len(), 5);
    }

    #[test]
    fn quadratic_1d() {
        let r = nelder_mead(|x: &[f64]| (x[0] - 2.0).powi(2), &[10.0], &SimplexConfig::default());
        assert!((r.best_point[0] - 2.0).abs() < 1e-6, "{:?}", r.best_point);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock_2d() {
        let cfg = SimplexConfig {
            max_fn_evals: Some(10_000),
            max_iters: Some(10_000),
            x_tol: 1e-10,
            f_tol: 1e-12,
            ..Default::default()
        };
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let r = nelder_mead(f, &[-1.2, 1.0], &cfg);
        assert!(r.best_value < 1e-6, "{}", r.best_value);
        assert!(r.evals <= 10_000);
        assert!((f(&r.best_point) - r.best_value).abs() < 1e-15);
    }

    #[test]
    fn constant_converges_immediately() {
        let r = nelder_mead(|_: &[f64]| 3.5, &[1.0, 2.0, 3.0], &SimplexConfig::default());
        assert!(r.converged);
        assert_eq!(r.best_value, 3.5);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.evals, 5);
    }

    #[test]
    fn plateau_reports_not_converged() {
        let cfg = SimplexConfig {
            restarts: 1,
            infeasible_value: Some(2000.0),
            ..Default::default()
        };
        let f = |x: &[f64]| if x[0] > 100.0 { x[0] } else { 2000.0 };
        let r = multi_start_minimize(&f, &[(0.0, 1.0)], &cfg);
        assert!(!r.converged);
        assert_eq!(r.best_value, 2000.0);
    }

    #[test]
    fn multistart_is_deterministic_and_escapes_local_minima() {
        let cfg = SimplexConfig {
            restarts: 8,
            rng_seed: 11,
            ..Default::default()
        };
        // two basins; the deeper one is near x = 3
        let f = |x: &[f64]| ((x[0] + 2.0).powi(2) + 1.0).min((x[0] - 3.0).powi(2));
        let a = multi_start_minimize(&f, &[(-5.0, 5.0)], &cfg);
        let b = multi_start_minimize(&f, &[(-5.0, 5.0)], &cfg);
        assert_eq!(a, b);
        assert!((a.best_point[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn works_in_f32() {
        let r = nelder_mead(|x: &[f32]| (x[0] - 1.5).powi(2) + (x[1] + 0.5).powi(2), &[0.0f32, 0.0], &SimplexConfig {
            x_tol: 1e-4,
            f_tol: 1e-8,
            ..Default::default()
        });
        assert!((r.best_point[0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_coefficients() {
        assert!(SimplexConfig { expansion: 0.5, ..Default::default() }.validate().is_err());
        assert!(SimplexConfig::default().validate().is_ok());
    }
}
