//! Log-densities of the SC and PKB laws.
//!
//! Everything is evaluated in log space. Two parameterizations are exposed:
//! the unconstrained location `mu` (the primary form, used by the estimators)
//! and the `(m, rho)` form. Both must agree; the tests pin that.
//!
//! With `gamma = ||mu||`, `s = sqrt(gamma^2 + 1)` and `alpha = y'mu`:
//!
//! * SC:  `log f = log C_d - d log(s - alpha)`
//! * PKB: `log f = log C_d - (d+1)/2 log(s - alpha) - (d-1)/2 log(1 - rho^2)`
//!
//! where `1 - rho^2 = 2 / (s + 1)`, which stays finite at `gamma = 0`.

use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::sphere::{dot, norm, Family, SphericalParams};

/// `log C_d`, the log of the reciprocal surface area of S^d.
pub fn log_norm_const(d: usize) -> f64 {
    let h = (d as f64 + 1.0) / 2.0;
    ln_gamma(h) - std::f64::consts::LN_2 - h * PI.ln()
}

/// `log(s - alpha)` computed as `log(1/(s + gamma) + gamma (1 - y'm))`, with
/// `1 - y'm = ||y - m||^2 / 2`, which avoids cancellation near the mode.
pub(crate) fn log_kernel(y: &[f64], mu: &[f64]) -> f64 {
    let gamma = norm(mu);
    if gamma == 0.0 {
        return 0.0;
    }
    let s = (gamma * gamma + 1.0).sqrt();
    let half_sq: f64 = y
        .iter()
        .zip(mu)
        .map(|(yk, mk)| {
            let diff = yk - mk / gamma;
            diff * diff
        })
        .sum::<f64>()
        / 2.0;
    (1.0 / (s + gamma) + gamma * half_sq).ln()
}

/// `log(1 - rho^2)` as a function of `gamma`.
#[inline]
pub(crate) fn log_one_minus_rho2(gamma: f64) -> f64 {
    let s = (gamma * gamma + 1.0).sqrt();
    std::f64::consts::LN_2 - (s + 1.0).ln()
}

fn check_dim(y: &[f64], params: &SphericalParams) -> Result<()> {
    if y.len() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: y.len(),
        });
    }
    Ok(())
}

/// SC log-density in the `mu` parameterization.
pub fn sc_logpdf(y: &[f64], params: &SphericalParams) -> Result<f64> {
    check_dim(y, params)?;
    let d = params.d() as f64;
    Ok(log_norm_const(params.d()) - d * log_kernel(y, params.mu()))
}

/// PKB log-density in the `mu` parameterization. At `gamma = 0` this is the
/// uniform density.
pub fn pkb_logpdf(y: &[f64], params: &SphericalParams) -> Result<f64> {
    check_dim(y, params)?;
    let d = params.d() as f64;
    let gamma = params.gamma();
    Ok(log_norm_const(params.d())
        - 0.5 * (d + 1.0) * log_kernel(y, params.mu())
        - 0.5 * (d - 1.0) * log_one_minus_rho2(gamma))
}

/// Family-dispatched log-density.
pub fn logpdf(y: &[f64], params: &SphericalParams) -> Result<f64> {
    match params.family {
        Family::Sc => sc_logpdf(y, params),
        Family::Pkb => pkb_logpdf(y, params),
    }
}

pub fn pdf(y: &[f64], params: &SphericalParams) -> Result<f64> {
    logpdf(y, params).map(f64::exp)
}

/// Unchecked log-density used in hot loops (dimensions already validated).
#[inline]
pub(crate) fn logpdf_unchecked(y: &[f64], family: Family, mu: &[f64], d: usize, log_c: f64) -> f64 {
    let df = d as f64;
    match family {
        Family::Sc => log_c - df * log_kernel(y, mu),
        Family::Pkb => {
            log_c - 0.5 * (df + 1.0) * log_kernel(y, mu) - 0.5 * (df - 1.0) * log_one_minus_rho2(norm(mu))
        }
    }
}

fn check_mrho(y: &[f64], m: &[f64], rho: f64) -> Result<()> {
    if y.len() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            got: y.len(),
        });
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok(())
}

/// SC log-density in the `(m, rho)` form:
/// `log C_d + d log((1 - rho^2) / (1 + rho^2 - 2 rho y'm))`.
pub fn sc_logpdf_mrho(y: &[f64], m: &[f64], rho: f64) -> Result<f64> {
    check_mrho(y, m, rho)?;
    let d = (m.len() - 1) as f64;
    let t = dot(y, m);
    Ok(log_norm_const(m.len() - 1) + d * ((1.0 - rho * rho).ln() - (1.0 + rho * rho - 2.0 * rho * t).ln()))
}

/// PKB log-density in the `(m, rho)` form:
/// `log C_d + log(1 - rho^2) - (d+1)/2 log(1 + rho^2 - 2 rho y'm)`.
pub fn pkb_logpdf_mrho(y: &[f64], m: &[f64], rho: f64) -> Result<f64> {
    check_mrho(y, m, rho)?;
    let d = (m.len() - 1) as f64;
    let t = dot(y, m);
    Ok(log_norm_const(m.len() - 1) + (1.0 - rho * rho).ln()
        - 0.5 * (d + 1.0) * (1.0 + rho * rho - 2.0 * rho * t).ln())
}

/// `log f_SC(y) - log f_PKB(y)` for a shared `(m, rho)`, by direct
/// subtraction of the two log-densities.
pub fn log_density_difference(y: &[f64], m: &[f64], rho: f64) -> Result<f64> {
    Ok(sc_logpdf_mrho(y, m, rho)? - pkb_logpdf_mrho(y, m, rho)?)
}

/// Closed form of [`log_density_difference`] as a function of `t = y'm`:
/// `(d-1)/2 * [2 log(1 - rho^2) - log(1 + rho^2 - 2 rho t)]`.
pub fn log_density_difference_closed_form(t: f64, rho: f64, d: usize) -> f64 {
    let df = d as f64;
    0.5 * (df - 1.0) * (2.0 * (1.0 - rho * rho).ln() - (1.0 + rho * rho - 2.0 * rho * t).ln())
}

/// Log-density of `t = y'm` when `y` follows the given law on S^d.
///
/// `g(t) = f(t) |S^{d-1}| (1 - t^2)^{(d-2)/2}` on (-1, 1).
pub fn log_t_marginal(t: f64, family: Family, rho: f64, d: usize) -> f64 {
    let df = d as f64;
    let log_area_sub = std::f64::consts::LN_2 + 0.5 * df * PI.ln() - ln_gamma(0.5 * df);
    let k = 1.0 + rho * rho - 2.0 * rho * t;
    let log_f = match family {
        Family::Sc => log_norm_const(d) + df * ((1.0 - rho * rho).ln() - k.ln()),
        Family::Pkb => log_norm_const(d) + (1.0 - rho * rho).ln() - 0.5 * (df + 1.0) * k.ln(),
    };
    log_f + log_area_sub + 0.5 * (df - 2.0) * (1.0 - t * t).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::sphere::{sample_uniform_sphere, UnitVector};
    use approx::assert_abs_diff_eq;

    fn params_from(family: Family, m: &[f64], rho: f64) -> SphericalParams {
        SphericalParams::from_direction(family, &UnitVector::new(m.to_vec()).unwrap(), rho).unwrap()
    }

    #[test]
    fn normalizing_constants() {
        assert_abs_diff_eq!(log_norm_const(1), -(2.0 * PI).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(log_norm_const(1), -1.837877, epsilon = 1e-6);
        assert_abs_diff_eq!(log_norm_const(2), -(4.0 * PI).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(log_norm_const(2), -2.531024, epsilon = 1e-6);
        // S^4 has surface area 8 pi^2 / 3.
        assert_abs_diff_eq!(log_norm_const(4), -(8.0 * PI * PI / 3.0).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            log_norm_const(4),
            ln_gamma(2.5) - 2f64.ln() - 2.5 * PI.ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn uniform_cases() {
        let y = [0.0, 0.6, 0.8];
        let p = SphericalParams::uniform(Family::Sc, 3);
        assert_abs_diff_eq!(sc_logpdf(&y, &p).unwrap(), -(4.0 * PI).ln(), epsilon = 1e-12);
        let p = SphericalParams::uniform(Family::Pkb, 3);
        assert_abs_diff_eq!(pkb_logpdf(&y, &p).unwrap(), -(4.0 * PI).ln(), epsilon = 1e-12);
    }

    #[test]
    fn values_at_the_mode() {
        let m = [0.0, 0.0, 1.0];
        let sc = params_from(Family::Sc, &m, 0.6);
        assert_abs_diff_eq!(sc_logpdf(&m, &sc).unwrap(), (16.0 / (4.0 * PI)).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(sc_logpdf(&m, &sc).unwrap(), 0.241564, epsilon = 1e-6);
        let pkb = params_from(Family::Pkb, &m, 0.6);
        assert_abs_diff_eq!(pkb_logpdf(&m, &pkb).unwrap(), (10.0 / (4.0 * PI)).ln(), epsilon = 1e-12);
    }

    #[test]
    fn both_parameterizations_agree() {
        let mut rng = RngStream::new(3, 0);
        for &d in &[1usize, 2, 4, 5] {
            let ys = sample_uniform_sphere(d, 40, &mut rng).unwrap();
            let ms = sample_uniform_sphere(d, 40, &mut rng).unwrap();
            for (i, (y, m)) in ys.rows().zip(ms.rows()).enumerate() {
                let rho = 0.02 + 0.95 * (i as f64 / 40.0);
                for family in Family::ALL {
                    let p = params_from(family, m, rho);
                    let (a, b) = match family {
                        Family::Sc => (sc_logpdf(y, &p).unwrap(), sc_logpdf_mrho(y, m, rho).unwrap()),
                        Family::Pkb => (pkb_logpdf(y, &p).unwrap(), pkb_logpdf_mrho(y, m, rho).unwrap()),
                    };
                    assert!((a - b).abs() < 1e-10, "{family} d={d} rho={rho}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = SphericalParams::uniform(Family::Sc, 3);
        assert!(matches!(
            sc_logpdf(&[1.0, 0.0], &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn density_difference_identity() {
        // d = 1: SC and PKB coincide.
        let y = [0.6, 0.8];
        let m = [1.0, 0.0];
        assert_abs_diff_eq!(log_density_difference(&y, &m, 0.7).unwrap(), 0.0, epsilon = 1e-12);
        // rho = 0: both uniform.
        let y = [0.0, 0.6, 0.8];
        let m = [1.0, 0.0, 0.0];
        assert_abs_diff_eq!(log_density_difference(&y, &m, 0.0).unwrap(), 0.0, epsilon = 1e-12);

        // d = 3, rho = 0.5, y'm = 0.2, against direct subtraction of the
        // (m, rho) forms written out by hand.
        let t: f64 = 0.2;
        let y = [t, (1.0 - t * t).sqrt(), 0.0, 0.0];
        let m = [1.0, 0.0, 0.0, 0.0];
        let rho: f64 = 0.5;
        let direct = 3.0 * (0.75f64.ln() - 1.05f64.ln()) - (0.75f64.ln() - 2.0 * 1.05f64.ln());
        assert_abs_diff_eq!(log_density_difference(&y, &m, rho).unwrap(), direct, epsilon = 1e-12);
        assert_abs_diff_eq!(log_density_difference_closed_form(t, rho, 3), direct, epsilon = 1e-12);
    }

    #[test]
    fn density_difference_closed_form_matches_on_random_points() {
        let mut rng = RngStream::new(8, 1);
        for &d in &[1usize, 2, 3, 6] {
            let ys = sample_uniform_sphere(d, 30, &mut rng).unwrap();
            let m = UnitVector::basis(d + 1, 0);
            for (i, y) in ys.rows().enumerate() {
                let rho = (i as f64 + 0.5) / 31.0;
                let direct = log_density_difference(y, m.as_slice(), rho).unwrap();
                let closed = log_density_difference_closed_form(y[0], rho, d);
                assert!((direct - closed).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn density_difference_increases_with_cosine() {
        // SC sits above PKB near the mode and below it in the tails.
        for &d in &[2usize, 3, 9] {
            for &rho in &[0.2, 0.6, 0.9] {
                let mut prev = f64::NEG_INFINITY;
                for k in 0..=200 {
                    let t = -1.0 + 2.0 * k as f64 / 200.0;
                    let v = log_density_difference_closed_form(t, rho, d);
                    assert!(v > prev);
                    prev = v;
                }
                assert!(log_density_difference_closed_form(-1.0, rho, d) < 0.0);
                assert!(log_density_difference_closed_form(1.0, rho, d) > 0.0);
            }
        }
    }

    #[test]
    fn depends_only_on_cosine_to_mode() {
        let m = [0.0, 0.0, 1.0];
        let t: f64 = 0.3;
        let r = (1.0 - t * t).sqrt();
        for family in Family::ALL {
            let p = params_from(family, &m, 0.7);
            let base = logpdf(&[r, 0.0, t], &p).unwrap();
            for k in 0..12 {
                let phi = k as f64 * 0.5;
                let y = [r * phi.cos(), r * phi.sin(), t];
                assert!((logpdf(&y, &p).unwrap() - base).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mode_is_at_location() {
        let m = UnitVector::project(vec![0.3, -0.5, 0.8]).unwrap();
        for family in Family::ALL {
            for &rho in &[0.1, 0.5, 0.9] {
                let p = SphericalParams::from_direction(family, &m, rho).unwrap();
                let at_mode = logpdf(m.as_slice(), &p).unwrap();
                for i in 0..60 {
                    for j in 0..120 {
                        let th = PI * (i as f64 + 0.5) / 60.0;
                        let ph = 2.0 * PI * j as f64 / 120.0;
                        let y = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                        assert!(logpdf(&y, &p).unwrap() <= at_mode + 1e-12);
                    }
                }
            }
        }
    }

    /// Product-rule quadrature over S^2: Gauss-Legendre in cos(theta) and
    /// equispaced trapezoid in phi.
    fn integrate_s2(f: impl Fn(&[f64]) -> f64, n_theta: usize, n_phi: usize) -> f64 {
        let (nodes, weights) = gauss_legendre(n_theta);
        let mut total = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            let st = (1.0 - x * x).sqrt();
            let mut ring = 0.0;
            for j in 0..n_phi {
                let ph = 2.0 * PI * j as f64 / n_phi as f64;
                ring += f(&[st * ph.cos(), st * ph.sin(), *x]);
            }
            total += w * ring * 2.0 * PI / n_phi as f64;
        }
        total
    }

    fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut xs = vec![0.0; n];
        let mut ws = vec![0.0; n];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    let w = 2.0 / ((1.0 - x * x) * dp * dp);
                    xs[i] = x;
                    ws[i] = w;
                    break;
                }
            }
        }
        (xs, ws)
    }

    #[test]
    fn densities_integrate_to_one_on_s2() {
        // Location tilted away from the pole so the quadrature grid is not aligned.
        let m = UnitVector::project(vec![0.770, 0.403, 0.495]).unwrap();
        for family in Family::ALL {
            for &rho in &[0.0, 0.3, 0.6, 0.9] {
                let p = SphericalParams::from_direction(family, &m, rho).unwrap();
                let total = integrate_s2(|y| logpdf(y, &p).unwrap().exp(), 200, 400);
                assert!((total - 1.0).abs() < 1e-4, "{family} rho={rho}: {total}");
            }
        }
    }

    #[test]
    fn t_marginal_integrates_to_one() {
        for family in Family::ALL {
            for &d in &[2usize, 3, 5] {
                let n = 200_000;
                let h = 2.0 / n as f64;
                let total: f64 = (0..n)
                    .map(|k| {
                        let t = -1.0 + (k as f64 + 0.5) * h;
                        log_t_marginal(t, family, 0.5, d).exp() * h
                    })
                    .sum();
                assert!((total - 1.0).abs() < 1e-4, "{family} d={d}: {total}");
            }
        }
    }
}
