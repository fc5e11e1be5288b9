//! Two-sample likelihood-ratio test of a common location direction.
//!
//! Under H0 both samples share `m` but keep their own concentrations; under
//! H1 each sample has its own `(m_j, rho_j)`. `Lambda = 2 (l1 - l0)` is
//! referred to chi-square with `d` degrees of freedom, or calibrated by a
//! parametric bootstrap under the fitted H0.

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::mle::{fit_robust, FitOptions, FitResult, Problem};
use crate::rng::RngStream;
use crate::sampling::sample;
use crate::sphere::{norm, DirectionalSample, Family, SphericalParams, UnitVector, DEGENERATE_NORM};

/// Negative statistics down to this value are clamped to zero.
pub const LAMBDA_CLAMP: f64 = 1e-8;

const H0_TOL: f64 = 1e-10;
const H0_MAX_ITER: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct H0Fit {
    pub m: UnitVector,
    pub rho1: f64,
    pub rho2: f64,
    pub loglik: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapPValue {
    pub p_value: f64,
    pub replicates: usize,
    pub dropped: usize,
    /// More than 5% of the replicates failed to fit.
    pub warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleTestResult {
    pub family: Family,
    pub lambda: f64,
    pub df: usize,
    pub p_asymptotic: f64,
    pub p_bootstrap: Option<BootstrapPValue>,
    pub h0_fit: H0Fit,
    pub h1_fit: (FitResult, FitResult),
}

fn check_pair(s1: &DirectionalSample, s2: &DirectionalSample) -> Result<()> {
    if s1.dim() != s2.dim() {
        return Err(Error::DimensionMismatch {
            expected: s1.dim(),
            got: s2.dim(),
        });
    }
    if s1.n() < 2 || s2.n() < 2 {
        return Err(Error::Domain("each sample needs at least two observations".into()));
    }
    Ok(())
}

/// Coordinate ascent for the common-direction model from `m0`: Brent over
/// each `rho_j`, then `m ∝ sum_j rho_j sum_i y_ji / (1 + rho_j^2 - 2 rho_j y_ji'm)`.
fn h0_ascent(p1: &Problem, p2: &Problem, s1: &DirectionalSample, s2: &DirectionalSample, m0: Vec<f64>, rhos: (f64, f64)) -> H0Fit {
    let mut m = m0;
    let (mut r1, mut r2) = rhos;
    let mut ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    while iterations < H0_MAX_ITER {
        iterations += 1;
        let o1 = p1.one_minus_t(&m);
        let o2 = p2.one_minus_t(&m);
        let (b1, l1) = p1.best_rho(&o1);
        let k1 = p1.loglik_rho(&o1, r1);
        if l1 >= k1 {
            r1 = b1;
        }
        let (b2, l2) = p2.best_rho(&o2);
        let k2 = p2.loglik_rho(&o2, r2);
        if l2 >= k2 {
            r2 = b2;
        }
        let ll_new = l1.max(k1) + l2.max(k2);
        let gain = ll_new - ll;
        ll = ll_new;
        if gain < H0_TOL {
            break;
        }
        let mut acc = vec![0.0; m.len()];
        for (s, omt, rho) in [(s1, &o1, r1), (s2, &o2, r2)] {
            let lead = (1.0 - rho) * (1.0 - rho);
            for (y, u) in s.rows().zip(omt.iter()) {
                let k = rho / (lead + 2.0 * rho * u);
                for (a, b) in acc.iter_mut().zip(y) {
                    *a += k * b;
                }
            }
        }
        let nrm = norm(&acc);
        if nrm < DEGENERATE_NORM {
            break;
        }
        let cand: Vec<f64> = acc.into_iter().map(|v| v / nrm).collect();
        let lc = p1.loglik_rho(&p1.one_minus_t(&cand), r1) + p2.loglik_rho(&p2.one_minus_t(&cand), r2);
        if lc < ll {
            break;
        }
        m = cand;
    }
    H0Fit {
        m: UnitVector::project(m).expect("unit direction"),
        rho1: r1,
        rho2: r2,
        loglik: ll,
        iterations,
    }
}

fn direction_or(params: &SphericalParams, fallback: &[f64]) -> Vec<f64> {
    params
        .direction()
        .map(UnitVector::into_vec)
        .unwrap_or_else(|| fallback.to_vec())
}

/// Maximizes the H0 likelihood from several starting directions: the pooled
/// mean direction and each sample's own fitted direction.
pub fn fit_h0(
    s1: &DirectionalSample,
    s2: &DirectionalSample,
    family: Family,
    h1: Option<(&FitResult, &FitResult)>,
) -> Result<H0Fit> {
    check_pair(s1, s2)?;
    let p1 = Problem::new(s1, None, family)?;
    let p2 = Problem::new(s2, None, family)?;
    let pooled: Vec<f64> = s1.weighted_sum(&vec![1.0; s1.n()])
        .iter()
        .zip(s2.weighted_sum(&vec![1.0; s2.n()]))
        .map(|(a, b)| a + b)
        .collect();
    let mut starts = Vec::new();
    let pn = norm(&pooled);
    if pn > DEGENERATE_NORM {
        starts.push((pooled.iter().map(|v| v / pn).collect::<Vec<_>>(), (0.0, 0.0)));
    }
    if let Some((f1, f2)) = h1 {
        let fallback = starts.first().map(|s| s.0.clone()).unwrap_or_else(|| UnitVector::basis(s1.dim(), 0).into_vec());
        let rhos = (f1.params.rho(), f2.params.rho());
        starts.push((direction_or(&f1.params, &fallback), rhos));
        starts.push((direction_or(&f2.params, &fallback), rhos));
    }
    if starts.is_empty() {
        return Err(Error::Initialization("no starting direction for the common-location fit".into()));
    }
    let best = starts
        .into_iter()
        .map(|(m, rhos)| h0_ascent(&p1, &p2, s1, s2, m, rhos))
        .max_by(|a, b| a.loglik.total_cmp(&b.loglik))
        .expect("at least one start");
    Ok(best)
}

fn h1_fits(s1: &DirectionalSample, s2: &DirectionalSample, family: Family) -> Result<(FitResult, FitResult)> {
    let wrap = |e: Error| Error::HypothesisFit {
        hypothesis: "H1",
        source: Box::new(e),
    };
    let opts = FitOptions {
        tol: 1e-10,
        max_iter: 200,
    };
    let f1 = fit_robust(s1, family, opts).map_err(wrap)?;
    let f2 = fit_robust(s2, family, opts).map_err(wrap)?;
    Ok((f1, f2))
}

/// Re-runs NR on one sample starting from the H0 solution; keeps the better fit.
fn refine_h1(s: &DirectionalSample, family: Family, current: FitResult, m: &UnitVector, rho: f64) -> Result<FitResult> {
    let start = SphericalParams::from_direction(family, m, rho)?;
    let opts = FitOptions {
        tol: 1e-12,
        max_iter: 200,
    };
    let alt = Problem::new(s, None, family)?.newton(opts, Some(start.mu()))?;
    Ok(if alt.loglik > current.loglik { alt } else { current })
}

/// Likelihood-ratio test of a common location direction.
pub fn lrt_two_sample(s1: &DirectionalSample, s2: &DirectionalSample, family: Family) -> Result<TwoSampleTestResult> {
    check_pair(s1, s2)?;
    let (mut f1, mut f2) = h1_fits(s1, s2, family)?;
    let h0 = fit_h0(s1, s2, family, Some((&f1, &f2))).map_err(|e| Error::HypothesisFit {
        hypothesis: "H0",
        source: Box::new(e),
    })?;
    let mut lambda = 2.0 * (f1.loglik + f2.loglik - h0.loglik);
    if lambda < -LAMBDA_CLAMP {
        f1 = refine_h1(s1, family, f1, &h0.m, h0.rho1)?;
        f2 = refine_h1(s2, family, f2, &h0.m, h0.rho2)?;
        lambda = 2.0 * (f1.loglik + f2.loglik - h0.loglik);
        if lambda < -LAMBDA_CLAMP {
            return Err(Error::OptimizerInconsistency(format!(
                "the constrained fit exceeds the unconstrained one (Lambda = {lambda:.3e})"
            )));
        }
    }
    let lambda = lambda.max(0.0);
    let df = s1.d();
    let p_asymptotic = chi2_upper_tail(lambda, df);
    Ok(TwoSampleTestResult {
        family,
        lambda,
        df,
        p_asymptotic,
        p_bootstrap: None,
        h0_fit: h0,
        h1_fit: (f1, f2),
    })
}

/// Upper tail of chi-square with `df` degrees of freedom.
pub fn chi2_upper_tail(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).map_or(f64::NAN, |c| c.sf(x))
}

/// Parametric bootstrap p-value for an already computed test: `b` pairs of
/// samples are drawn from the fitted H0 model with the original sizes, each
/// replicate on its own substream of `rng`.
pub fn bootstrap_pvalue(
    result: &TwoSampleTestResult,
    n1: usize,
    n2: usize,
    b: usize,
    rng: &RngStream,
) -> Result<BootstrapPValue> {
    if b == 0 {
        return Err(Error::Domain("the bootstrap needs at least one replicate".into()));
    }
    let family = result.family;
    let h0 = &result.h0_fit;
    let p1 = SphericalParams::from_direction(family, &h0.m, h0.rho1)?;
    let p2 = SphericalParams::from_direction(family, &h0.m, h0.rho2)?;
    let stats: Vec<Option<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng.substream(r);
            let y1 = sample(&p1, n1, &mut stream).ok()?;
            let y2 = sample(&p2, n2, &mut stream).ok()?;
            lrt_two_sample(&y1, &y2, family).ok().map(|t| t.lambda)
        })
        .collect();
    let used: Vec<f64> = stats.into_iter().flatten().collect();
    let dropped = b - used.len();
    let exceed = used.iter().filter(|&&l| l >= result.lambda).count();
    Ok(BootstrapPValue {
        p_value: (1 + exceed) as f64 / (used.len() + 1) as f64,
        replicates: used.len(),
        dropped,
        warning: dropped as f64 > 0.05 * b as f64,
    })
}

/// Test plus parametric-bootstrap p-value.
pub fn lrt_bootstrap_pvalue(
    s1: &DirectionalSample,
    s2: &DirectionalSample,
    family: Family,
    b: usize,
    rng: &RngStream,
) -> Result<BootstrapPValue> {
    let result = lrt_two_sample(s1, s2, family)?;
    bootstrap_pvalue(&result, s1.n(), s2.n(), b, rng)
}

/// [`lrt_two_sample`] with the bootstrap p-value filled in when `b > 0`.
pub fn lrt_with_bootstrap(
    s1: &DirectionalSample,
    s2: &DirectionalSample,
    family: Family,
    b: usize,
    rng: &RngStream,
) -> Result<TwoSampleTestResult> {
    let mut result = lrt_two_sample(s1, s2, family)?;
    if b > 0 {
        result.p_bootstrap = Some(bootstrap_pvalue(&result, s1.n(), s2.n(), b, rng)?);
    }
    Ok(result)
}
