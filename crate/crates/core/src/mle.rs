//! Maximum-likelihood estimation of a single SC or PKB law.
//!
//! Two algorithms:
//!
//! * Newton-Raphson on the unconstrained `mu`, started at the sample mean,
//!   with step halving and a hybrid iteration as the last resort.
//! * The hybrid algorithm: Brent maximization over `rho` at fixed `m`,
//!   alternated with the fixed-point update
//!   `m ∝ sum_i w_i y_i / (1 + rho^2 - 2 rho y_i'm)`.
//!
//! Both accept optional observation weights, which the EM M-step uses.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::density::{log_norm_const, logpdf_unchecked};
use crate::error::{Error, Result};
use crate::optim::brent_maximize;
use crate::sphere::{norm, rho_to_gamma, DirectionalSample, Family, SphericalParams, UnitVector, DEGENERATE_NORM};

/// Below this `gamma` the PKB derivatives are treated as singular.
pub const PKB_MIN_GAMMA: f64 = 1e-8;

const RHO_MAX: f64 = 1.0 - 1e-9;
const BRENT_TOL: f64 = 1e-9;
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Nr,
    Hybrid,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Nr => "nr",
            Algorithm::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nr" | "newton" | "newton-raphson" => Ok(Algorithm::Nr),
            "hybrid" => Ok(Algorithm::Hybrid),
            other => Err(Error::Domain(format!("unknown algorithm '{other}' (expected nr or hybrid)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop when successive log-likelihoods differ by less than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: SphericalParams,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after the start and after every iteration.
    pub trace: Vec<f64>,
    pub algorithm: Algorithm,
    /// NR iterations that were replaced by a hybrid iteration.
    pub fallback_steps: usize,
}

/// Kernel exponent `c` in `-c log(s - alpha)` and the `log(1 - rho^2)`
/// coefficient `a` of the `(m, rho)` form.
fn exponents(family: Family, d: usize) -> (f64, f64) {
    let df = d as f64;
    match family {
        Family::Sc => (df, df),
        Family::Pkb => (0.5 * (df + 1.0), 1.0),
    }
}

/// Adds `weight` times the gradient and Hessian (row-major) of
/// `log f(y; mu)` with respect to `mu` into `grad` and `hess`.
pub(crate) fn add_obs_derivatives(
    y: &[f64],
    mu: &[f64],
    family: Family,
    d: usize,
    weight: f64,
    grad: &mut [f64],
    hess: &mut [f64],
) {
    let dim = mu.len();
    let gamma = norm(mu);
    let s = (gamma * gamma + 1.0).sqrt();
    let (c, _) = exponents(family, d);
    // s - alpha without cancellation near the mode.
    let dist = if gamma > 0.0 {
        let half_sq: f64 = y.iter().zip(mu).map(|(yk, mk)| (yk - mk / gamma).powi(2)).sum::<f64>() / 2.0;
        1.0 / (s + gamma) + gamma * half_sq
    } else {
        1.0
    };
    let a = weight * c / dist;
    let b = weight * c / (dist * dist);
    for i in 0..dim {
        let vi = mu[i] / s - y[i];
        grad[i] -= a * vi;
        for j in 0..dim {
            let vj = mu[j] / s - y[j];
            let mut h = b * vi * vj + a * mu[i] * mu[j] / (s * s * s);
            if i == j {
                h -= a / s;
            }
            hess[i * dim + j] += h;
        }
    }
    if family == Family::Pkb {
        let k = weight * 0.5 * (d as f64 - 1.0);
        let g1 = k / (s * (s + 1.0));
        let g2 = k * (2.0 * s + 1.0) / (s * s * s * (s + 1.0) * (s + 1.0));
        for i in 0..dim {
            grad[i] += g1 * mu[i];
            for j in 0..dim {
                let mut h = -g2 * mu[i] * mu[j];
                if i == j {
                    h += g1;
                }
                hess[i * dim + j] += h;
            }
        }
    }
}

/// A (possibly weighted) single-law likelihood problem.
pub(crate) struct Problem<'a> {
    sample: &'a DirectionalSample,
    weights: Option<&'a [f64]>,
    family: Family,
    d: usize,
    log_c: f64,
    total_weight: f64,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(sample: &'a DirectionalSample, weights: Option<&'a [f64]>, family: Family) -> Result<Self> {
        if let Some(w) = weights {
            if w.len() != sample.n() {
                return Err(Error::DimensionMismatch {
                    expected: sample.n(),
                    got: w.len(),
                });
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Domain("weights must be finite and non-negative".into()));
            }
        }
        let total_weight = weights.map_or(sample.n() as f64, |w| w.iter().sum());
        Ok(Self {
            sample,
            weights,
            family,
            d: sample.d(),
            log_c: log_norm_const(sample.d()),
            total_weight,
        })
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    pub(crate) fn loglik(&self, mu: &[f64]) -> f64 {
        self.sample
            .rows()
            .enumerate()
            .map(|(i, y)| {
                let w = self.weight(i);
                if w == 0.0 {
                    0.0
                } else {
                    w * logpdf_unchecked(y, self.family, mu, self.d, self.log_c)
                }
            })
            .sum()
    }

    /// Same sums as `add_obs_derivatives` over all rows, with the terms that
    /// do not depend on `y` added once.
    fn derivatives(&self, mu: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let dim = mu.len();
        let gamma = norm(mu);
        let s = (gamma * gamma + 1.0).sqrt();
        let (c, _) = exponents(self.family, self.d);
        let m: Vec<f64> = if gamma > 0.0 { mu.iter().map(|v| v / gamma).collect() } else { vec![0.0; dim] };
        let mu_s: Vec<f64> = mu.iter().map(|v| v / s).collect();
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        let mut sum_a = 0.0;
        let mut v = vec![0.0; dim];
        for (i, y) in self.sample.rows().enumerate() {
            let w = self.weight(i);
            if w == 0.0 {
                continue;
            }
            let dist = if gamma > 0.0 {
                let half_sq: f64 = y.iter().zip(&m).map(|(yk, mk)| (yk - mk) * (yk - mk)).sum::<f64>() / 2.0;
                1.0 / (s + gamma) + gamma * half_sq
            } else {
                1.0
            };
            let a = w * c / dist;
            let b = a / dist;
            sum_a += a;
            for k in 0..dim {
                v[k] = mu_s[k] - y[k];
                grad[k] -= a * v[k];
            }
            for k in 0..dim {
                let bk = b * v[k];
                let row = &mut hess[k * dim..k * dim + k + 1];
                for (h, vj) in row.iter_mut().zip(&v) {
                    *h += bk * vj;
                }
            }
        }
        let s3 = s * s * s;
        for k in 0..dim {
            for j in 0..=k {
                hess[k * dim + j] += sum_a * mu[k] * mu[j] / s3;
            }
            hess[k * dim + k] -= sum_a / s;
        }
        if self.family == Family::Pkb {
            let kk = self.total_weight * 0.5 * (self.d as f64 - 1.0);
            let g1 = kk / (s * (s + 1.0));
            let g2 = kk * (2.0 * s + 1.0) / (s3 * (s + 1.0) * (s + 1.0));
            for k in 0..dim {
                grad[k] += g1 * mu[k];
                for j in 0..=k {
                    hess[k * dim + j] -= g2 * mu[k] * mu[j];
                }
                hess[k * dim + k] += g1;
            }
        }
        for k in 0..dim {
            for j in 0..k {
                hess[j * dim + k] = hess[k * dim + j];
            }
        }
        (DVector::from_vec(grad), DMatrix::from_row_slice(dim, dim, &hess))
    }

    fn weighted_mean(&self) -> Vec<f64> {
        let mut v = match self.weights {
            Some(w) => self.sample.weighted_sum(w),
            None => self.sample.weighted_sum(&vec![1.0; self.sample.n()]),
        };
        v.iter_mut().for_each(|c| *c /= self.total_weight);
        v
    }

    /// `1 - y_i'm` for every row, computed as `||y_i - m||^2 / 2`.
    pub(crate) fn one_minus_t(&self, m: &[f64]) -> Vec<f64> {
        self.sample
            .rows()
            .map(|y| y.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 2.0)
            .collect()
    }

    /// Log-likelihood in the `(m, rho)` form given `1 - y_i'm`.
    pub(crate) fn loglik_rho(&self, omt: &[f64], rho: f64) -> f64 {
        let (c, a) = exponents(self.family, self.d);
        let lead = (1.0 - rho) * (1.0 - rho);
        let kernel: f64 = omt
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let w = self.weight(i);
                if w == 0.0 {
                    0.0
                } else {
                    w * (lead + 2.0 * rho * u).ln()
                }
            })
            .sum();
        self.total_weight * (self.log_c + a * (1.0 - rho * rho).ln()) - c * kernel
    }

    pub(crate) fn best_rho(&self, omt: &[f64]) -> (f64, f64) {
        let r = brent_maximize(|rho| self.loglik_rho(omt, rho), 0.0, RHO_MAX, BRENT_TOL);
        (r.x, r.fx)
    }

    /// Fixed-point direction update; `None` if the weighted resultant vanishes.
    fn update_direction(&self, m: &[f64], rho: f64) -> Option<Vec<f64>> {
        let dim = m.len();
        let mut acc = vec![0.0; dim];
        let lead = (1.0 - rho) * (1.0 - rho);
        for (i, y) in self.sample.rows().enumerate() {
            let w = self.weight(i);
            if w == 0.0 {
                continue;
            }
            let u: f64 = y.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 2.0;
            let k = w / (lead + 2.0 * rho * u);
            for (a, b) in acc.iter_mut().zip(y) {
                *a += k * b;
            }
        }
        let nrm = norm(&acc);
        (nrm > DEGENERATE_NORM).then(|| acc.into_iter().map(|v| v / nrm).collect())
    }

    /// One hybrid iteration from `(m, rho)`: direction update then Brent over
    /// `rho`. Never decreases the log-likelihood.
    fn hybrid_step(&self, m: &[f64], rho: f64, current: f64) -> (Vec<f64>, f64, f64) {
        let Some(m_new) = self.update_direction(m, rho) else {
            return (m.to_vec(), rho, current);
        };
        let omt = self.one_minus_t(&m_new);
        let keep = self.loglik_rho(&omt, rho);
        let (rho_b, ll_b) = self.best_rho(&omt);
        let (rho_new, ll_new) = if ll_b >= keep { (rho_b, ll_b) } else { (rho, keep) };
        if ll_new >= current {
            (m_new, rho_new, ll_new)
        } else {
            (m.to_vec(), rho, current)
        }
    }

    fn start_direction(&self) -> Result<Vec<f64>> {
        let mean = self.weighted_mean();
        let r = norm(&mean);
        if r < DEGENERATE_NORM {
            return Err(Error::Initialization(format!(
                "the sample resultant vanishes (norm {r:.3e}); no starting direction"
            )));
        }
        Ok(mean.into_iter().map(|v| v / r).collect())
    }

    fn check_size(&self) -> Result<()> {
        if self.sample.n() < 2 {
            return Err(Error::Initialization("at least two observations are required".into()));
        }
        if !(self.total_weight > 0.0) {
            return Err(Error::Initialization("total weight is zero".into()));
        }
        Ok(())
    }

    fn params_from(&self, m: &[f64], rho: f64) -> SphericalParams {
        let gamma = rho_to_gamma(rho.min(RHO_MAX)).expect("rho in range");
        SphericalParams::new(self.family, m.iter().map(|v| v * gamma).collect()).expect("finite location")
    }

    fn hybrid(&self, opts: FitOptions) -> Result<FitResult> {
        self.check_size()?;
        let mut m = self.start_direction()?;
        let omt = self.one_minus_t(&m);
        let (mut rho, mut ll) = self.best_rho(&omt);
        let mut trace = vec![ll];
        let mut converged = false;
        let mut iterations = 0;
        while iterations < opts.max_iter {
            iterations += 1;
            let (m_new, rho_new, ll_new) = self.hybrid_step(&m, rho, ll);
            let gain = ll_new - ll;
            m = m_new;
            rho = rho_new;
            ll = ll_new;
            trace.push(ll);
            if gain < opts.tol {
                converged = true;
                break;
            }
        }
        Ok(FitResult {
            params: self.params_from(&m, rho),
            loglik: ll,
            iterations,
            converged,
            trace,
            algorithm: Algorithm::Hybrid,
            fallback_steps: 0,
        })
    }

    pub(crate) fn newton(&self, opts: FitOptions, start: Option<&[f64]>) -> Result<FitResult> {
        self.check_size()?;
        let mut mu = match start {
            Some(s) if norm(s) > DEGENERATE_NORM && s.iter().all(|v| v.is_finite()) => s.to_vec(),
            _ => {
                let mean = self.weighted_mean();
                if norm(&mean) < DEGENERATE_NORM {
                    return Err(Error::Initialization(
                        "the sample resultant vanishes; no starting value".into(),
                    ));
                }
                mean
            }
        };
        let mut ll = self.loglik(&mu);
        let mut trace = vec![ll];
        let mut converged = false;
        let mut iterations = 0;
        let mut fallback_steps = 0;
        while iterations < opts.max_iter {
            iterations += 1;
            let next = self.newton_step(&mu, ll);
            let (mu_new, ll_new) = match next {
                Some(v) => v,
                None => {
                    fallback_steps += 1;
                    let gamma = norm(&mu);
                    let (m, rho) = if gamma > DEGENERATE_NORM {
                        (mu.iter().map(|v| v / gamma).collect(), crate::sphere::gamma_to_rho_unchecked(gamma))
                    } else {
                        (self.start_direction()?, 0.0)
                    };
                    let (m, rho, _) = self.hybrid_step(&m, rho, f64::NEG_INFINITY);
                    let mu_h = self.params_from(&m, rho).mu().to_vec();
                    let ll_h = self.loglik(&mu_h);
                    if ll_h >= ll {
                        (mu_h, ll_h)
                    } else {
                        (mu.clone(), ll)
                    }
                }
            };
            let change = ll_new - ll;
            mu = mu_new;
            ll = ll_new;
            trace.push(ll);
            if change.abs() < opts.tol {
                converged = true;
                break;
            }
        }
        Ok(FitResult {
            params: SphericalParams::new(self.family, mu)?,
            loglik: ll,
            iterations,
            converged,
            trace,
            algorithm: Algorithm::Nr,
            fallback_steps,
        })
    }

    /// A safeguarded Newton step; `None` when the Hessian is not negative
    /// definite or no halving of the step increases the log-likelihood.
    fn newton_step(&self, mu: &[f64], ll: f64) -> Option<(Vec<f64>, f64)> {
        if self.family == Family::Pkb && norm(mu) < PKB_MIN_GAMMA {
            return None;
        }
        let (grad, hess) = self.derivatives(mu);
        let chol = (-hess).cholesky()?;
        let step = chol.solve(&grad);
        if step.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut t = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = mu.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let ll_c = self.loglik(&cand);
            if ll_c.is_finite() && ll_c >= ll {
                return Some((cand, ll_c));
            }
            t *= 0.5;
        }
        None
    }
}

fn check_params(sample: &DirectionalSample, params: &SphericalParams) -> Result<()> {
    if sample.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: sample.dim(),
        });
    }
    Ok(())
}

/// Total log-likelihood, including `n log C_d`.
pub fn loglik(sample: &DirectionalSample, params: &SphericalParams) -> Result<f64> {
    check_params(sample, params)?;
    Ok(Problem::new(sample, None, params.family)?.loglik(params.mu()))
}

/// `sum_i w_i log f(y_i)`.
pub fn weighted_loglik(sample: &DirectionalSample, weights: &[f64], params: &SphericalParams) -> Result<f64> {
    check_params(sample, params)?;
    Ok(Problem::new(sample, Some(weights), params.family)?.loglik(params.mu()))
}

/// Log-likelihood as a function of `(m, rho)`.
pub fn loglik_mrho(sample: &DirectionalSample, family: Family, m: &UnitVector, rho: f64) -> Result<f64> {
    if sample.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: sample.dim(),
        });
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho must lie in [0, 1), got {rho}")));
    }
    let p = Problem::new(sample, None, family)?;
    Ok(p.loglik_rho(&p.one_minus_t(m.as_slice()), rho))
}

/// Analytic score vector and Hessian of the log-likelihood in `mu`.
pub fn score_and_hessian(sample: &DirectionalSample, params: &SphericalParams) -> Result<(DVector<f64>, DMatrix<f64>)> {
    score_and_hessian_impl(sample, None, params)
}

/// Weighted score and Hessian of `sum_i w_i log f(y_i; mu)`.
pub fn weighted_score_and_hessian(
    sample: &DirectionalSample,
    weights: &[f64],
    params: &SphericalParams,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    score_and_hessian_impl(sample, Some(weights), params)
}

fn score_and_hessian_impl(
    sample: &DirectionalSample,
    weights: Option<&[f64]>,
    params: &SphericalParams,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_params(sample, params)?;
    if params.family == Family::Pkb && params.gamma() < PKB_MIN_GAMMA {
        return Err(Error::NearSingular { gamma: params.gamma() });
    }
    Ok(Problem::new(sample, weights, params.family)?.derivatives(params.mu()))
}

/// Newton-Raphson fit started at the sample mean vector.
pub fn fit_nr(sample: &DirectionalSample, family: Family, opts: FitOptions) -> Result<FitResult> {
    Problem::new(sample, None, family)?.newton(opts, None)
}

/// Hybrid Brent / fixed-point fit.
pub fn fit_hybrid(sample: &DirectionalSample, family: Family, opts: FitOptions) -> Result<FitResult> {
    Problem::new(sample, None, family)?.hybrid(opts)
}

pub fn fit(sample: &DirectionalSample, family: Family, algorithm: Algorithm, opts: FitOptions) -> Result<FitResult> {
    match algorithm {
        Algorithm::Nr => fit_nr(sample, family, opts),
        Algorithm::Hybrid => fit_hybrid(sample, family, opts),
    }
}

/// NR fit that falls back to the hybrid algorithm when NR fails to converge.
pub fn fit_robust(sample: &DirectionalSample, family: Family, opts: FitOptions) -> Result<FitResult> {
    fit_weighted_impl(sample, None, family, opts, None)
}

/// Weighted fit maximizing `sum_i w_i log f(y_i; mu)`: NR from `start` (or
/// the weighted mean) with a weighted hybrid fallback.
pub fn fit_weighted(
    sample: &DirectionalSample,
    weights: &[f64],
    family: Family,
    opts: FitOptions,
    start: Option<&[f64]>,
) -> Result<FitResult> {
    fit_weighted_impl(sample, Some(weights), family, opts, start)
}

fn fit_weighted_impl(
    sample: &DirectionalSample,
    weights: Option<&[f64]>,
    family: Family,
    opts: FitOptions,
    start: Option<&[f64]>,
) -> Result<FitResult> {
    let problem = Problem::new(sample, weights, family)?;
    let nr = problem.newton(opts, start);
    match nr {
        Ok(r) if r.converged => Ok(r),
        other => {
            let hy = problem.hybrid(opts)?;
            match other {
                Ok(r) if r.loglik > hy.loglik => Ok(r),
                _ => Ok(hy),
            }
        }
    }
}
