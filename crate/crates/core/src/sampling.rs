//! Random generation.
//!
//! * SC: exact, one uniform draw per output, through the Möbius-type map
//!   `y = (1 - rho^2)(u + rho m) / ||u + rho m||^2 + rho m`.
//! * PKB: rejection sampling with an angular central Gaussian envelope whose
//!   shape `beta*` minimizes the envelope constant.
//! * von Mises-Fisher (Wood's algorithm), used by the mixture simulation
//!   protocol to scatter component locations.

use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::optim::brent_minimize;
use crate::rng::RngStream;
use crate::sphere::{
    dot, draw_uniform_into, norm, sample_uniform_sphere, DirectionalSample, Family, SphericalParams,
    UnitVector, DEGENERATE_NORM,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerDiagnostics {
    pub proposals: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
}

impl SamplerDiagnostics {
    fn new(proposals: u64, accepted: u64) -> Self {
        Self {
            proposals,
            accepted,
            acceptance_rate: accepted as f64 / proposals.max(1) as f64,
        }
    }
}

/// Direction and concentration of `params`, or `None` for the uniform law.
fn direction_and_rho(params: &SphericalParams) -> Option<(Vec<f64>, f64)> {
    let gamma = params.gamma();
    if gamma < DEGENERATE_NORM {
        return None;
    }
    let m = params.mu().iter().map(|v| v / gamma).collect();
    Some((m, params.rho()))
}

struct ScSampler {
    m: Vec<f64>,
    rho: f64,
}

impl ScSampler {
    fn draw_into(&self, out: &mut [f64], rng: &mut RngStream) {
        draw_uniform_into(out, rng);
        let rho = self.rho;
        for (o, mk) in out.iter_mut().zip(&self.m) {
            *o += rho * mk;
        }
        let sq = dot(out, out);
        let scale = (1.0 - rho * rho) / sq;
        for (o, mk) in out.iter_mut().zip(&self.m) {
            *o = scale * *o + rho * mk;
        }
        let nrm = norm(out);
        out.iter_mut().for_each(|o| *o /= nrm);
    }
}

/// Exact SC sampler.
pub fn sample_sc(params: &SphericalParams, n: usize, rng: &mut RngStream) -> Result<DirectionalSample> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let Some((m, rho)) = direction_and_rho(params) else {
        return sample_uniform_sphere(params.d(), n, rng);
    };
    let dim = m.len();
    let sampler = ScSampler { m, rho };
    let mut data = vec![0.0; n * dim];
    for chunk in data.chunks_exact_mut(dim) {
        sampler.draw_into(chunk, rng);
    }
    Ok(DirectionalSample::from_flat_unchecked(dim, data))
}

/// `omega_d(lambda, beta)`: log of the rejection bound of the PKB sampler up
/// to a term that does not depend on `beta`. Valid for
/// `beta >= lambda / (2 - lambda)`, where the envelope ratio peaks inside
/// `[-1, 1]`.
pub fn pkb_omega(d: usize, lambda: f64, beta: f64) -> f64 {
    let p = d as f64 + 1.0;
    0.5 * p * ((1.0 + (1.0 - lambda * lambda).sqrt()) / (1.0 + (1.0 - lambda * lambda / beta).sqrt())).ln()
        - 0.5 * (1.0 - beta).ln()
}

/// `log max_{t in [-1,1]} (1 - beta t^2) / (1 - lambda t)`.
fn log_ratio_peak(lambda: f64, beta: f64) -> f64 {
    if beta >= lambda / (2.0 - lambda) {
        (2.0 / (1.0 + (1.0 - lambda * lambda / beta).sqrt())).ln()
    } else {
        ((1.0 - beta) / (1.0 - lambda)).ln()
    }
}

/// Log of the envelope constant `sup f_PKB / g_ACG` up to a `beta`-free term.
fn log_envelope(d: usize, lambda: f64, beta: f64) -> f64 {
    0.5 * (d as f64 + 1.0) * log_ratio_peak(lambda, beta) - 0.5 * (1.0 - beta).ln()
}

/// Set-up constants of the PKB rejection sampler.
#[derive(Debug, Clone)]
pub struct PkbSampler {
    m: Vec<f64>,
    d: usize,
    lambda: f64,
    beta: f64,
    beta1: f64,
    beta2: f64,
    log_peak: f64,
    rho: f64,
}

impl PkbSampler {
    pub fn new(m: &UnitVector, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::SamplerSetup(format!("rho must lie in (0, 1), got {rho}")));
        }
        let d = m.dim() - 1;
        let lambda = 2.0 * rho / (1.0 + rho * rho);
        let lo = (lambda * (2.0 * lambda - 1.0)).max(0.0) + 1e-9;
        let hi = 1.0 - 1e-9;
        if !(lo < hi) {
            return Err(Error::SamplerSetup(format!(
                "empty search interval for the envelope shape (lambda = {lambda})"
            )));
        }
        let best = brent_minimize(|b| log_envelope(d, lambda, b), lo, hi, 1e-8, 500);
        let beta = best.x;
        if !best.fx.is_finite() || !(beta > lo - 1e-12 && beta < hi + 1e-12) {
            return Err(Error::SamplerSetup(format!(
                "no interior minimum of the envelope constant (lambda = {lambda})"
            )));
        }
        Ok(Self {
            m: m.as_slice().to_vec(),
            d,
            lambda,
            beta,
            beta1: beta / (1.0 - beta),
            beta2: -1.0 + 1.0 / (1.0 - beta).sqrt(),
            log_peak: log_ratio_peak(lambda, beta),
            rho,
        })
    }

    pub fn beta_star(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Theoretical acceptance probability `1 / M`, where `M` bounds the ratio
    /// of the PKB density to the envelope density.
    pub fn expected_acceptance(&self) -> f64 {
        let p = self.d as f64 + 1.0;
        let r2 = self.rho * self.rho;
        let log_m = (1.0 - r2).ln() - 0.5 * p * (1.0 + r2).ln() - 0.5 * (1.0 - self.beta).ln()
            + 0.5 * p * self.log_peak;
        (-log_m).exp()
    }

    /// Draws one accepted vector into `out`; returns the number of proposals used.
    pub fn draw_into(&self, out: &mut [f64], rng: &mut RngStream) -> u64 {
        let half_p = 0.5 * (self.d as f64 + 1.0);
        let mut proposals = 0;
        loop {
            proposals += 1;
            let log_u = rng.uniform_open().ln();
            out.iter_mut().for_each(|z| *z = rng.normal());
            let mz = dot(&self.m, out);
            let denom = (dot(out, out) + self.beta1 * mz * mz).sqrt();
            let q = (1.0 + self.beta2) * mz / denom;
            let bound = half_p
                * (-(1.0 - self.lambda * q).ln() + (1.0 - self.beta * q * q).ln() - self.log_peak);
            if log_u <= bound {
                for (o, mk) in out.iter_mut().zip(&self.m) {
                    *o = (*o + self.beta2 * mz * mk) / denom;
                }
                let nrm = norm(out);
                out.iter_mut().for_each(|o| *o /= nrm);
                return proposals;
            }
        }
    }
}

/// PKB rejection sampler. `rho = 0` delegates to the uniform sampler.
pub fn sample_pkb(
    params: &SphericalParams,
    n: usize,
    rng: &mut RngStream,
) -> Result<(DirectionalSample, SamplerDiagnostics)> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let Some((m, rho)) = direction_and_rho(params) else {
        let s = sample_uniform_sphere(params.d(), n, rng)?;
        return Ok((s, SamplerDiagnostics::new(n as u64, n as u64)));
    };
    let sampler = PkbSampler::new(&UnitVector::new(m)?, rho)?;
    let dim = params.dim();
    let mut data = vec![0.0; n * dim];
    let mut proposals = 0;
    for chunk in data.chunks_exact_mut(dim) {
        proposals += sampler.draw_into(chunk, rng);
    }
    Ok((
        DirectionalSample::from_flat_unchecked(dim, data),
        SamplerDiagnostics::new(proposals, n as u64),
    ))
}

/// Family-dispatched sampler.
pub fn sample(params: &SphericalParams, n: usize, rng: &mut RngStream) -> Result<DirectionalSample> {
    match params.family {
        Family::Sc => sample_sc(params, n, rng),
        Family::Pkb => sample_pkb(params, n, rng).map(|(s, _)| s),
    }
}

/// One draw per location vector, as needed when every observation has its
/// own parameter (regression).
pub fn sample_per_location(family: Family, mus: &[Vec<f64>], rng: &mut RngStream) -> Result<DirectionalSample> {
    let Some(first) = mus.first() else {
        return Err(Error::EmptySample);
    };
    let dim = first.len();
    let mut data = vec![0.0; mus.len() * dim];
    for (mu, out) in mus.iter().zip(data.chunks_exact_mut(dim)) {
        if mu.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: mu.len(),
            });
        }
        let params = SphericalParams::new(family, mu.clone())?;
        match direction_and_rho(&params) {
            None => draw_uniform_into(out, rng),
            Some((m, rho)) => match family {
                Family::Sc => ScSampler { m, rho }.draw_into(out, rng),
                Family::Pkb => {
                    PkbSampler::new(&UnitVector::new(m)?, rho)?.draw_into(out, rng);
                }
            },
        }
    }
    Ok(DirectionalSample::from_flat_unchecked(dim, data))
}

/// von Mises-Fisher sampler (Wood, 1994). `kappa = 0` gives the uniform law.
pub fn sample_vmf(m: &UnitVector, kappa: f64, n: usize, rng: &mut RngStream) -> Result<DirectionalSample> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::Domain(format!("kappa must be finite and >= 0, got {kappa}")));
    }
    let dim = m.dim();
    if kappa == 0.0 {
        return sample_uniform_sphere(dim - 1, n, rng);
    }
    let p1 = (dim - 1) as f64;
    let b = p1 / (2.0 * kappa + (4.0 * kappa * kappa + p1 * p1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + p1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(p1 / 2.0, p1 / 2.0).map_err(|e| Error::SamplerSetup(e.to_string()))?;
    let mv = m.as_slice();
    let mut data = vec![0.0; n * dim];
    let mut tangent = vec![0.0; dim];
    for out in data.chunks_exact_mut(dim) {
        let w = loop {
            let z: f64 = beta.sample(rng);
            let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
            let u = rng.uniform_open();
            if kappa * w + p1 * (1.0 - x0 * w).ln() - c >= u.ln() {
                break w;
            }
        };
        loop {
            draw_uniform_into(&mut tangent, rng);
            let proj = dot(&tangent, mv);
            tangent.iter_mut().zip(mv).for_each(|(t, mk)| *t -= proj * mk);
            let nrm = norm(&tangent);
            if nrm > 1e-8 {
                tangent.iter_mut().for_each(|t| *t /= nrm);
                break;
            }
        }
        let r = (1.0 - w * w).max(0.0).sqrt();
        for ((o, mk), tk) in out.iter_mut().zip(mv).zip(&tangent) {
            *o = w * mk + r * tk;
        }
        let nrm = norm(out);
        out.iter_mut().for_each(|o| *o /= nrm);
    }
    Ok(DirectionalSample::from_flat_unchecked(dim, data))
}
