//! Heteroscedastic spherical regression `mu_i = B' x_i`.
//!
//! `B` is `p x (d+1)`. The coefficient vector stacks the columns of `B`:
//! `beta[k * p + j] = B[j, k]`, so per-observation Hessians enter the full
//! Hessian as `h_i ⊗ x_i x_i'`.

use nalgebra::{DMatrix, DVector};

use crate::density::{log_norm_const, logpdf_unchecked};
use crate::error::{Error, Result};
use crate::mle::{add_obs_derivatives, FitOptions, PKB_MIN_GAMMA};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::sphere::{dot, norm, DirectionalSample, Family, UnitVector};

const MAX_HALVINGS: usize = 20;
/// Rank tolerance relative to the largest singular value of `X`.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(p) = rows.first().map(Vec::len) else {
            return Err(Error::EmptySample);
        };
        if p == 0 {
            return Err(Error::Design("the design has no columns".into()));
        }
        let n = rows.len();
        let mut data = Vec::with_capacity(n * p);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != p {
                return Err(Error::Row {
                    row: i,
                    message: format!("expected {p} covariates, found {}", r.len()),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Row {
                    row: i,
                    message: "non-finite covariate".into(),
                });
            }
            data.extend(r);
        }
        Ok(Self { n, p, data })
    }

    /// Prepends a column of ones.
    pub fn with_intercept(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(
            rows.into_iter()
                .map(|r| std::iter::once(1.0).chain(r).collect())
                .collect(),
        )
    }

    /// Intercept-only design with `n` rows.
    pub fn intercept_only(n: usize) -> Result<Self> {
        Self::from_rows(vec![vec![1.0]; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.p)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            p: self.p,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn rank(&self) -> usize {
        let x = DMatrix::from_row_slice(self.n, self.p, &self.data);
        let sv = x.singular_values();
        let max = sv.max();
        if max == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > RANK_TOL * max).count()
    }

    fn stack(&self, other: &Self) -> Self {
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self {
            n: self.n + other.n,
            p: self.p,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionOptimizer {
    Newton,
    /// Newton-Raphson failed and the simplex optimizer took over.
    NelderMead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub family: Family,
    pub p: usize,
    pub dim: usize,
    /// Coefficients stacked by response coordinate: `beta[k * p + j] = B[j, k]`.
    pub beta: Vec<f64>,
    pub loglik: f64,
    /// Observed Fisher information per observation.
    pub fisher: DMatrix<f64>,
    /// Standard errors, indexed like `beta`.
    pub se: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub optimizer: RegressionOptimizer,
    pub n: usize,
}

impl RegressionModel {
    /// `B[j, k]`.
    pub fn coef(&self, j: usize, k: usize) -> f64 {
        self.beta[k * self.p + j]
    }

    /// `B` as a `p x (d+1)` matrix.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.dim, |j, k| self.coef(j, k))
    }

    pub fn se_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.dim, |j, k| self.se[k * self.p + j])
    }

    pub fn location(&self, x: &[f64]) -> Vec<f64> {
        location(&self.beta, self.p, self.dim, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedDirections {
    pub rows: Vec<UnitVector>,
    pub gammas: Vec<f64>,
}

impl PredictedDirections {
    pub fn to_sample(&self) -> Result<DirectionalSample> {
        DirectionalSample::from_unit_vectors(&self.rows)
    }
}

fn location(beta: &[f64], p: usize, dim: usize, x: &[f64]) -> Vec<f64> {
    (0..dim).map(|k| dot(&beta[k * p..(k + 1) * p], x)).collect()
}

struct RegProblem<'a> {
    y: &'a DirectionalSample,
    x: &'a DesignMatrix,
    family: Family,
    d: usize,
    dim: usize,
    p: usize,
    log_c: f64,
}

impl<'a> RegProblem<'a> {
    fn new(y: &'a DirectionalSample, x: &'a DesignMatrix, family: Family) -> Result<Self> {
        if y.n() != x.n() {
            return Err(Error::DimensionMismatch {
                expected: y.n(),
                got: x.n(),
            });
        }
        Ok(Self {
            y,
            x,
            family,
            d: y.d(),
            dim: y.dim(),
            p: x.p(),
            log_c: log_norm_const(y.d()),
        })
    }

    fn nbeta(&self) -> usize {
        self.dim * self.p
    }

    fn loglik(&self, beta: &[f64]) -> f64 {
        self.y
            .rows()
            .zip(self.x.rows())
            .map(|(y, x)| logpdf_unchecked(y, self.family, &location(beta, self.p, self.dim, x), self.d, self.log_c))
            .sum()
    }

    fn min_gamma(&self, beta: &[f64]) -> f64 {
        self.x
            .rows()
            .map(|x| norm(&location(beta, self.p, self.dim, x)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Gradient and Hessian in `beta`.
    fn derivatives(&self, beta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let (dim, p) = (self.dim, self.p);
        let nb = self.nbeta();
        let mut grad = vec![0.0; nb];
        let mut hess = vec![0.0; nb * nb];
        let mut g = vec![0.0; dim];
        let mut h = vec![0.0; dim * dim];
        for (y, x) in self.y.rows().zip(self.x.rows()) {
            g.iter_mut().for_each(|v| *v = 0.0);
            h.iter_mut().for_each(|v| *v = 0.0);
            let mu = location(beta, p, dim, x);
            add_obs_derivatives(y, &mu, self.family, self.d, 1.0, &mut g, &mut h);
            for k in 0..dim {
                for j in 0..p {
                    grad[k * p + j] += g[k] * x[j];
                }
            }
            for k in 0..dim {
                for l in 0..dim {
                    let hkl = h[k * dim + l];
                    for j in 0..p {
                        let row = (k * p + j) * nb + l * p;
                        let a = hkl * x[j];
                        for jj in 0..p {
                            hess[row + jj] += a * x[jj];
                        }
                    }
                }
            }
        }
        (DVector::from_vec(grad), DMatrix::from_row_slice(nb, nb, &hess))
    }

    /// Safeguarded Newton iterations from `beta`. Returns the final point,
    /// its log-likelihood, the iteration count, whether the tolerance was met
    /// and whether a step could not be made.
    fn newton(&self, mut beta: Vec<f64>, opts: FitOptions) -> (Vec<f64>, f64, usize, bool, bool) {
        let mut ll = self.loglik(&beta);
        let mut iterations = 0;
        while iterations < opts.max_iter {
            iterations += 1;
            if self.family == Family::Pkb && self.min_gamma(&beta) < PKB_MIN_GAMMA {
                return (beta, ll, iterations, false, true);
            }
            let (grad, hess) = self.derivatives(&beta);
            let Some(step) = damped_direction(&grad, &hess) else {
                return (beta, ll, iterations, false, true);
            };
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
                let lc = self.loglik(&cand);
                if lc.is_finite() && lc >= ll {
                    accepted = Some((cand, lc));
                    break;
                }
                t *= 0.5;
            }
            let Some((cand, lc)) = accepted else {
                return (beta, ll, iterations, false, true);
            };
            let change = lc - ll;
            beta = cand;
            ll = lc;
            if change.abs() < opts.tol {
                return (beta, ll, iterations, true, false);
            }
        }
        (beta, ll, iterations, false, false)
    }
}

/// Newton direction `(-H)^{-1} g`, adding a growing ridge to `-H` when it is
/// not positive definite.
fn damped_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> Option<DVector<f64>> {
    let neg = -hess;
    let scale = neg.diagonal().amax().max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut m = neg.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            let step = ch.solve(grad);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        ridge = if ridge == 0.0 { 1e-8 * scale } else { ridge * 10.0 };
    }
    None
}

/// Least-squares coefficients of `Y` on `X`, used to start PKB when no SC
/// fit is available.
fn least_squares_start(y: &DirectionalSample, x: &DesignMatrix) -> Vec<f64> {
    let xm = DMatrix::from_row_slice(x.n(), x.p(), &x.data);
    let ym = DMatrix::from_row_slice(y.n(), y.dim(), y.as_flat());
    let coef = xm.clone().svd(true, true).solve(&ym, 1e-12).unwrap_or_else(|_| DMatrix::zeros(x.p(), y.dim()));
    let mut beta = vec![0.0; x.p() * y.dim()];
    for k in 0..y.dim() {
        for j in 0..x.p() {
            beta[k * x.p() + j] = coef[(j, k)];
        }
    }
    beta
}

/// Maximum-likelihood fit of the regression model by Newton-Raphson from
/// `B = 0` (SC) or from the SC fit (PKB, whose derivatives are singular at
/// `B = 0`). When Newton-Raphson fails the simplex optimizer takes over.
pub fn fit_regression(y: &DirectionalSample, x: &DesignMatrix, family: Family, opts: FitOptions) -> Result<RegressionModel> {
    let prob = RegProblem::new(y, x, family)?;
    if x.n() <= x.p() {
        return Err(Error::Design(format!("need more observations ({}) than covariates ({})", x.n(), x.p())));
    }
    if x.rank() < x.p() {
        return Err(Error::Design(format!("the design has rank {} < {} columns", x.rank(), x.p())));
    }
    let start = match family {
        Family::Sc => vec![0.0; prob.nbeta()],
        Family::Pkb => match fit_regression(y, x, Family::Sc, opts) {
            Ok(sc) => sc.beta,
            Err(_) => least_squares_start(y, x),
        },
    };
    let (mut beta, mut ll, mut iterations, mut converged, failed) = prob.newton(start, opts);
    let mut optimizer = RegressionOptimizer::Newton;
    if failed || !converged {
        optimizer = RegressionOptimizer::NelderMead;
        let nm = nelder_mead(
            |b| {
                let v = -prob.loglik(b);
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            },
            &beta,
            NelderMeadOptions {
                max_iter: 200_000,
                restarts: 5,
                ..NelderMeadOptions::default()
            },
        );
        iterations += nm.iterations;
        if -nm.fx >= ll {
            beta = nm.x;
            ll = -nm.fx;
        }
        converged = nm.converged;
        // Polish with Newton-Raphson when the simplex has left the singular region.
        let (b2, l2, it2, conv2, _) = prob.newton(beta.clone(), opts);
        iterations += it2;
        if l2 >= ll {
            beta = b2;
            ll = l2;
            converged |= conv2;
        }
    }
    let fisher = fisher_information_at(&prob, &beta);
    check_psd(&fisher)?;
    let se = standard_errors(&fisher, x.n())?;
    Ok(RegressionModel {
        family,
        p: x.p(),
        dim: y.dim(),
        beta,
        loglik: ll,
        fisher,
        se,
        converged,
        iterations,
        optimizer,
        n: x.n(),
    })
}

/// Log-likelihood of the regression model at `beta`.
pub fn regression_loglik(y: &DirectionalSample, x: &DesignMatrix, family: Family, beta: &[f64]) -> Result<f64> {
    let prob = RegProblem::new(y, x, family)?;
    if beta.len() != prob.nbeta() {
        return Err(Error::DimensionMismatch {
            expected: prob.nbeta(),
            got: beta.len(),
        });
    }
    Ok(prob.loglik(beta))
}

/// Analytic gradient and Hessian of the regression log-likelihood in `beta`.
pub fn regression_score_and_hessian(
    y: &DirectionalSample,
    x: &DesignMatrix,
    family: Family,
    beta: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let prob = RegProblem::new(y, x, family)?;
    if beta.len() != prob.nbeta() {
        return Err(Error::DimensionMismatch {
            expected: prob.nbeta(),
            got: beta.len(),
        });
    }
    if family == Family::Pkb && prob.min_gamma(beta) < PKB_MIN_GAMMA {
        return Err(Error::NearSingular {
            gamma: prob.min_gamma(beta),
        });
    }
    Ok(prob.derivatives(beta))
}

/// Adds `w * (a ⊗ x x')` into `out`, with `a` a `dim x dim` row-major block.
fn add_kron(out: &mut DMatrix<f64>, a: &[f64], x: &[f64], w: f64, dim: usize) {
    let p = x.len();
    for k in 0..dim {
        for l in 0..dim {
            let akl = w * a[k * dim + l];
            if akl == 0.0 {
                continue;
            }
            for j in 0..p {
                for jj in 0..p {
                    out[(k * p + j, l * p + jj)] += akl * x[j] * x[jj];
                }
            }
        }
    }
}

/// SC information in closed form:
/// `d/n sum_i [ (I - mu mu'/s^2) / (s (s - alpha)) - (mu - s y)(mu - s y)' / (s^2 (s - alpha)^2) ] ⊗ x x'`.
fn fisher_sc(y: &DirectionalSample, x: &DesignMatrix, beta: &[f64]) -> DMatrix<f64> {
    let (dim, p, n) = (y.dim(), x.p(), x.n());
    let d = y.d() as f64;
    let mut out = DMatrix::zeros(dim * p, dim * p);
    let mut block = vec![0.0; dim * dim];
    for (yi, xi) in y.rows().zip(x.rows()) {
        let mu = location(beta, p, dim, xi);
        let gamma = norm(&mu);
        let s = (gamma * gamma + 1.0).sqrt();
        let dist = if gamma > 0.0 {
            let half_sq: f64 = yi.iter().zip(&mu).map(|(a, m)| (a - m / gamma).powi(2)).sum::<f64>() / 2.0;
            1.0 / (s + gamma) + gamma * half_sq
        } else {
            1.0
        };
        for k in 0..dim {
            for l in 0..dim {
                let id = if k == l { 1.0 } else { 0.0 };
                let r_k = mu[k] - s * yi[k];
                let r_l = mu[l] - s * yi[l];
                block[k * dim + l] =
                    (id - mu[k] * mu[l] / (s * s)) / (s * dist) - r_k * r_l / (s * s * dist * dist);
            }
        }
        add_kron(&mut out, &block, xi, d / n as f64, dim);
    }
    out
}

/// The PKB correction
/// `(d-1)/(2n) sum_i [ (1 - s)/(s gamma^2) I + (s-1)^2 (2s+1)/(s^3 gamma^4) mu mu' ] ⊗ x x'`,
/// with `(1 - s)/gamma^2 = -1/(s + 1)` and `(s-1)^2/gamma^4 = 1/(s+1)^2`
/// substituted so that it stays finite as `gamma -> 0`.
fn fisher_pkb_correction(y: &DirectionalSample, x: &DesignMatrix, beta: &[f64]) -> DMatrix<f64> {
    let (dim, p, n) = (y.dim(), x.p(), x.n());
    let d = y.d() as f64;
    let mut out = DMatrix::zeros(dim * p, dim * p);
    let mut block = vec![0.0; dim * dim];
    for xi in x.rows() {
        let mu = location(beta, p, dim, xi);
        let gamma = norm(&mu);
        let s = (gamma * gamma + 1.0).sqrt();
        let c_id = -1.0 / (s * (s + 1.0));
        let c_mm = (2.0 * s + 1.0) / (s * s * s * (s + 1.0) * (s + 1.0));
        for k in 0..dim {
            for l in 0..dim {
                let id = if k == l { c_id } else { 0.0 };
                block[k * dim + l] = id + c_mm * mu[k] * mu[l];
            }
        }
        add_kron(&mut out, &block, xi, (d - 1.0) / (2.0 * n as f64), dim);
    }
    out
}

fn fisher_information_at(prob: &RegProblem, beta: &[f64]) -> DMatrix<f64> {
    let sc = fisher_sc(prob.y, prob.x, beta);
    let fisher = match prob.family {
        Family::Sc => sc,
        Family::Pkb => {
            let d = prob.d as f64;
            sc * ((d + 1.0) / (2.0 * d)) + fisher_pkb_correction(prob.y, prob.x, beta)
        }
    };
    // Symmetrize away rounding.
    (&fisher + fisher.transpose()) * 0.5
}

/// Observed Fisher information (per observation) at the model's coefficients.
pub fn fisher_information(model: &RegressionModel, y: &DirectionalSample, x: &DesignMatrix) -> Result<DMatrix<f64>> {
    let prob = RegProblem::new(y, x, model.family)?;
    if model.beta.len() != prob.nbeta() {
        return Err(Error::DimensionMismatch {
            expected: prob.nbeta(),
            got: model.beta.len(),
        });
    }
    let fisher = fisher_information_at(&prob, &model.beta);
    check_psd(&fisher)?;
    Ok(fisher)
}

fn check_psd(fisher: &DMatrix<f64>) -> Result<()> {
    let eig = fisher.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min < -1e-8 * max.max(1.0) {
        return Err(Error::ConvergenceQuality(format!(
            "the information matrix is not positive semi-definite (smallest eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

fn standard_errors(fisher: &DMatrix<f64>, n: usize) -> Result<Vec<f64>> {
    let total = fisher * n as f64;
    let inv = total
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| total.try_inverse())
        .ok_or_else(|| Error::ConvergenceQuality("the information matrix is singular".into()))?;
    Ok(inv.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// Fitted directions `m_i = B' x_i / ||B' x_i||` and concentrations `gamma_i`.
pub fn predict(model: &RegressionModel, x_new: &DesignMatrix) -> Result<PredictedDirections> {
    if x_new.p() != model.p {
        return Err(Error::DimensionMismatch {
            expected: model.p,
            got: x_new.p(),
        });
    }
    let mut rows = Vec::with_capacity(x_new.n());
    let mut gammas = Vec::with_capacity(x_new.n());
    for (i, x) in x_new.rows().enumerate() {
        let mu = model.location(x);
        let g = norm(&mu);
        if g < 1e-10 {
            return Err(Error::Row {
                row: i,
                message: format!("the predicted location has norm {g:.3e}; direction undefined"),
            });
        }
        rows.push(UnitVector::project(mu)?);
        gammas.push(g);
    }
    Ok(PredictedDirections { rows, gammas })
}

/// Mean inner product between observed and fitted directions.
pub fn fit_metric(y: &DirectionalSample, yhat: &PredictedDirections) -> Result<f64> {
    if y.n() != yhat.rows.len() {
        return Err(Error::DimensionMismatch {
            expected: y.n(),
            got: yhat.rows.len(),
        });
    }
    if let Some(r) = yhat.rows.first() {
        if r.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: y.dim(),
                got: r.dim(),
            });
        }
    }
    let total: f64 = y.rows().zip(&yhat.rows).map(|(a, b)| b.dot(a)).sum();
    Ok((total / y.n() as f64).clamp(-1.0, 1.0))
}

/// Stacks a data set on top of itself; used to check that the information
/// is a per-observation average.
pub fn duplicate(y: &DirectionalSample, x: &DesignMatrix) -> Result<(DirectionalSample, DesignMatrix)> {
    Ok((y.concat(y)?, x.stack(x)))
}
