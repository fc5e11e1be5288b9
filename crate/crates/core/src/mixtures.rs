//! Finite mixtures of SC or PKB laws fitted by EM.
//!
//! Starts come from spherical k-means (cosine dissimilarity, k-means++
//! seeding) followed by one M-step. Each M-step update of a component is
//! accepted only if it does not lower that component's weighted
//! log-likelihood, so the observed log-likelihood never decreases.
//!
//! The likelihood is unbounded: a component sitting on one observation with
//! `rho -> 1` diverges. During EM a component whose effective size drops
//! below its parameter count `d + 1` is treated as collapsed and the start
//! is reseeded.
//! Component labels are `0..K` internally.

use rayon::prelude::*;

use crate::classify::argmax;
use crate::density::{log_norm_const, logpdf_unchecked};
use crate::error::{Error, Result};
use crate::mle::{fit_robust, fit_weighted, weighted_loglik, FitOptions};
use crate::rng::RngStream;
use crate::sphere::{dot, norm, DirectionalSample, Family, SphericalParams, DEGENERATE_NORM};

/// Columns of `W` summing to less than this count as collapsed.
pub const COLLAPSE_MASS: f64 = 1e-8;
const KMEANS_MAX_ITER: usize = 100;
const COLLAPSE_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    /// Stop when the relative log-likelihood gain falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub n_starts: usize,
    /// With several starts, each runs this many iterations and only the
    /// best is continued to convergence.
    pub short_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            n_starts: 10,
            short_iter: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub family: Family,
    pub k: usize,
    pub weights: Vec<f64>,
    pub components: Vec<SphericalParams>,
    pub loglik: f64,
    /// `n x K` responsibilities, row-major.
    pub responsibilities: Vec<f64>,
    pub bic: f64,
    pub icl: f64,
    pub entropy: f64,
    pub em_iterations: usize,
    pub converged: bool,
    /// Observed log-likelihood after every EM iteration.
    pub trace: Vec<f64>,
}

impl MixtureModel {
    pub fn n(&self) -> usize {
        self.responsibilities.len() / self.k
    }

    pub fn responsibility(&self, i: usize, j: usize) -> f64 {
        self.responsibilities[i * self.k + j]
    }

    /// MAP assignments, ties to the lowest component index.
    pub fn map_assignments(&self) -> Vec<usize> {
        self.responsibilities.chunks_exact(self.k).map(argmax).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub model: MixtureModel,
}

impl From<MixtureModel> for ClusteringResult {
    fn from(model: MixtureModel) -> Self {
        Self {
            assignments: model.map_assignments(),
            model,
        }
    }
}

/// Number of free parameters: `(K - 1) + K (d + 1)`.
pub fn parameter_count(k: usize, d: usize) -> usize {
    (k - 1) + k * (d + 1)
}

fn check_components(y: &DirectionalSample, weights: &[f64], components: &[SphericalParams]) -> Result<()> {
    if components.is_empty() || weights.len() != components.len() {
        return Err(Error::DimensionMismatch {
            expected: components.len(),
            got: weights.len(),
        });
    }
    for c in components {
        if c.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: y.dim(),
                got: c.dim(),
            });
        }
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Domain("mixing weights must be finite and non-negative".into()));
    }
    Ok(())
}

/// Responsibilities and observed log-likelihood via log-sum-exp.
pub fn e_step(y: &DirectionalSample, weights: &[f64], components: &[SphericalParams]) -> Result<(Vec<f64>, f64)> {
    check_components(y, weights, components)?;
    let k = components.len();
    let d = y.d();
    let log_c = log_norm_const(d);
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mut resp = vec![0.0; y.n() * k];
    let mut total = 0.0;
    for (i, (row, out)) in y.rows().zip(resp.chunks_exact_mut(k)).enumerate() {
        for (j, c) in components.iter().enumerate() {
            out[j] = log_w[j] + logpdf_unchecked(row, c.family, c.mu(), d, log_c);
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Underflow { row: i });
        }
        let sum: f64 = out.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        out.iter_mut().for_each(|v| *v = (*v - lse).exp());
        total += lse;
    }
    Ok((resp, total))
}

/// Observed mixture log-likelihood.
pub fn mixture_loglik(y: &DirectionalSample, weights: &[f64], components: &[SphericalParams]) -> Result<f64> {
    e_step(y, weights, components).map(|r| r.1)
}

fn column(resp: &[f64], k: usize, j: usize) -> Vec<f64> {
    resp.chunks_exact(k).map(|r| r[j]).collect()
}

/// Weight update `p_j = w_.j / n` and weighted fits of every component.
/// With `previous` components, each new fit is warm-started there and kept
/// only if it does not lower the weighted log-likelihood.
pub fn m_step(
    y: &DirectionalSample,
    resp: &[f64],
    k: usize,
    family: Family,
    previous: Option<&[SphericalParams]>,
) -> Result<(Vec<f64>, Vec<SphericalParams>)> {
    if k == 0 || resp.len() != y.n() * k {
        return Err(Error::DimensionMismatch {
            expected: y.n() * k.max(1),
            got: resp.len(),
        });
    }
    let n = y.n() as f64;
    let mut weights = Vec::with_capacity(k);
    let mut components = Vec::with_capacity(k);
    for j in 0..k {
        let w = column(resp, k, j);
        let mass: f64 = w.iter().sum();
        if mass < COLLAPSE_MASS {
            return Err(Error::ComponentCollapse { component: j, mass });
        }
        weights.push(mass / n);
        let prev = previous.map(|p| &p[j]);
        let opts = FitOptions::default();
        let fitted = fit_weighted(y, &w, family, opts, prev.map(|p| p.mu()));
        let chosen = match (fitted, prev) {
            (Ok(f), Some(p)) => {
                let old = weighted_loglik(y, &w, p)?;
                if f.loglik >= old {
                    f.params
                } else {
                    p.clone()
                }
            }
            (Ok(f), None) => f.params,
            (Err(_), Some(p)) => p.clone(),
            (Err(e), None) => {
                return Err(Error::MixtureFit(format!("component {j} could not be fitted: {e}")));
            }
        };
        components.push(chosen);
    }
    Ok((weights, components))
}

fn cosine_dissimilarity(a: &[f64], b: &[f64]) -> f64 {
    (1.0 - dot(a, b)).max(0.0)
}

/// Spherical k-means with k-means++ seeding. Returns hard labels.
pub fn spherical_kmeans(y: &DirectionalSample, k: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    let n = y.n();
    if k == 0 || k > n {
        return Err(Error::Initialization(format!("cannot form {k} clusters from {n} points")));
    }
    let mut centers: Vec<Vec<f64>> = vec![y.row(rng.below(n)).to_vec()];
    let mut dist: Vec<f64> = y.rows().map(|r| cosine_dissimilarity(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, dv) in dist.iter().enumerate() {
                acc += dv;
                if acc >= target && *dv > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.below(n)
        };
        centers.push(y.row(next).to_vec());
        for (dv, r) in dist.iter_mut().zip(y.rows()) {
            *dv = dv.min(cosine_dissimilarity(r, centers.last().expect("center")));
        }
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, r) in y.rows().enumerate() {
            let scores: Vec<f64> = centers.iter().map(|c| dot(r, c)).collect();
            let best = argmax(&scores);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let dim = y.dim();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in y.rows().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(r) {
                *s += v;
            }
        }
        for j in 0..k {
            let nrm = norm(&sums[j]);
            if counts[j] == 0 || nrm < DEGENERATE_NORM {
                // Re-seed an empty cluster at the point worst served by its center.
                let far = y
                    .rows()
                    .enumerate()
                    .map(|(i, r)| (i, cosine_dissimilarity(r, &centers[labels[i]])))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map_or(0, |p| p.0);
                centers[j] = y.row(far).to_vec();
            } else {
                centers[j] = sums[j].iter().map(|v| v / nrm).collect();
            }
        }
    }
    Ok(labels)
}

fn finish(
    y: &DirectionalSample,
    family: Family,
    weights: Vec<f64>,
    components: Vec<SphericalParams>,
    resp: Vec<f64>,
    loglik: f64,
    em_iterations: usize,
    converged: bool,
    trace: Vec<f64>,
) -> MixtureModel {
    let k = components.len();
    let n = y.n() as f64;
    let entropy: f64 = -resp.iter().filter(|&&w| w > 0.0).map(|w| w * w.ln()).sum::<f64>();
    let bic = -2.0 * loglik + parameter_count(k, y.d()) as f64 * n.ln();
    MixtureModel {
        family,
        k,
        weights,
        components,
        loglik,
        responsibilities: resp,
        bic,
        icl: bic + 2.0 * entropy,
        entropy,
        em_iterations,
        converged,
        trace,
    }
}

/// A resumable EM run.
struct EmState {
    weights: Vec<f64>,
    components: Vec<SphericalParams>,
    resp: Vec<f64>,
    loglik: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl EmState {
    fn from_labels(y: &DirectionalSample, labels: &[usize], k: usize, family: Family) -> Result<Self> {
        let mut resp = vec![0.0; y.n() * k];
        for (i, &l) in labels.iter().enumerate() {
            resp[i * k + l] = 1.0;
        }
        let (weights, components) = m_step(y, &resp, k, family, None)?;
        let (resp, loglik) = e_step(y, &weights, &components)?;
        Ok(Self {
            weights,
            components,
            resp,
            loglik,
            trace: vec![loglik],
            iterations: 0,
            converged: false,
        })
    }

    /// Runs until convergence or until `limit` total iterations.
    fn run(&mut self, y: &DirectionalSample, family: Family, tol: f64, limit: usize) -> Result<()> {
        let k = self.components.len();
        let min_mass = (y.d() + 1) as f64;
        while !self.converged && self.iterations < limit {
            self.iterations += 1;
            for j in 0..k {
                let mass: f64 = self.resp.chunks_exact(k).map(|r| r[j]).sum();
                if mass < min_mass {
                    return Err(Error::ComponentCollapse { component: j, mass });
                }
            }
            let (w, c) = m_step(y, &self.resp, k, family, Some(&self.components))?;
            let (r, ll) = e_step(y, &w, &c)?;
            let gain = (ll - self.loglik) / self.loglik.abs().max(1.0);
            self.weights = w;
            self.components = c;
            self.resp = r;
            self.loglik = ll;
            self.trace.push(ll);
            self.converged = gain < tol;
        }
        Ok(())
    }

    fn into_model(self, y: &DirectionalSample, family: Family) -> MixtureModel {
        finish(
            y,
            family,
            self.weights,
            self.components,
            self.resp,
            self.loglik,
            self.iterations,
            self.converged,
            self.trace,
        )
    }
}

/// One start: k-means, then `limit` EM iterations. A collapse reseeds.
fn single_start(
    y: &DirectionalSample,
    k: usize,
    family: Family,
    opts: EmOptions,
    limit: usize,
    rng: &RngStream,
) -> Result<EmState> {
    let mut last_err = None;
    for attempt in 0..=COLLAPSE_RETRIES {
        let mut stream = rng.substream(attempt as u64);
        let labels = spherical_kmeans(y, k, &mut stream)?;
        let attempt = EmState::from_labels(y, &labels, k, family).and_then(|mut st| {
            st.run(y, family, opts.tol, limit)?;
            Ok(st)
        });
        match attempt {
            Ok(st) => return Ok(st),
            Err(e @ Error::ComponentCollapse { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn single_component(y: &DirectionalSample, family: Family) -> Result<MixtureModel> {
    let fit = fit_robust(
        y,
        family,
        FitOptions {
            tol: 1e-10,
            max_iter: 200,
        },
    )?;
    Ok(finish(
        y,
        family,
        vec![1.0],
        vec![fit.params],
        vec![1.0; y.n()],
        fit.loglik,
        fit.iterations,
        fit.converged,
        fit.trace,
    ))
}

/// Fits a `k`-component mixture from `opts.n_starts` k-means starts, start
/// `s` drawing from `rng.substream(s)`.
pub fn em_fit(y: &DirectionalSample, k: usize, family: Family, opts: EmOptions, rng: &RngStream) -> Result<MixtureModel> {
    if k == 0 {
        return Err(Error::Domain("the number of components must be at least one".into()));
    }
    if y.n() <= k {
        return Err(Error::Domain(format!("need more observations ({}) than components ({k})", y.n())));
    }
    if k == 1 {
        return single_component(y, family);
    }
    let starts = opts.n_starts.max(1);
    let short = if starts > 1 { opts.short_iter.min(opts.max_iter) } else { opts.max_iter };
    let runs: Vec<Result<EmState>> = (0..starts as u64)
        .into_par_iter()
        .map(|s| single_start(y, k, family, opts, short, &rng.substream(s)))
        .collect();
    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in runs.into_iter().enumerate() {
        match r {
            Ok(st) => ranked.push(st),
            Err(e) => failures.push(format!("start {s}: {e}")),
        }
    }
    ranked.sort_by(|a, b| b.loglik.total_cmp(&a.loglik));
    // Continue the leading short runs in order; a late collapse falls through
    // to the next one.
    for mut st in ranked {
        match st.run(y, family, opts.tol, opts.max_iter) {
            Ok(()) => return Ok(st.into_model(y, family)),
            Err(e) => failures.push(e.to_string()),
        }
    }
    Err(Error::MixtureFit(format!("every start failed: {}", failures.join("; "))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Bic,
    Icl,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "icl" => Ok(Criterion::Icl),
            other => Err(Error::Domain(format!("unknown criterion '{other}' (expected bic or icl)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KFit {
    pub k: usize,
    pub model: Option<MixtureModel>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub fits: Vec<KFit>,
    pub best_bic: Option<usize>,
    pub best_icl: Option<usize>,
}

impl Selection {
    pub fn chosen(&self, criterion: Criterion) -> Option<usize> {
        match criterion {
            Criterion::Bic => self.best_bic,
            Criterion::Icl => self.best_icl,
        }
    }

    pub fn model(&self, k: usize) -> Option<&MixtureModel> {
        self.fits.iter().find(|f| f.k == k).and_then(|f| f.model.as_ref())
    }
}

/// Fits `K = 1..=k_max`; each `K` uses `rng.substream(K)`. Failed fits are
/// recorded and skipped.
pub fn select_k(y: &DirectionalSample, family: Family, k_max: usize, opts: EmOptions, rng: &RngStream) -> Result<Selection> {
    if k_max == 0 {
        return Err(Error::Domain("k_max must be at least one".into()));
    }
    let fits: Vec<KFit> = (1..=k_max)
        .into_par_iter()
        .map(|k| match em_fit(y, k, family, opts, &rng.substream(k as u64)) {
            Ok(m) => KFit {
                k,
                model: Some(m),
                error: None,
            },
            Err(e) => KFit {
                k,
                model: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let pick = |f: fn(&MixtureModel) -> f64| {
        fits.iter()
            .filter_map(|kf| kf.model.as_ref().map(|m| (kf.k, f(m))))
            .fold(None::<(usize, f64)>, |acc, (k, v)| match acc {
                Some((_, best)) if best <= v => acc,
                _ => Some((k, v)),
            })
            .map(|p| p.0)
    };
    let best_bic = pick(|m| m.bic);
    let best_icl = pick(|m| m.icl);
    Ok(Selection {
        fits,
        best_bic,
        best_icl,
    })
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert-Arabie). Two single-cluster partitions score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0usize; ka * kb];
    let mut ra = vec![0usize; ka];
    let mut rb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        ra[x] += 1;
        rb[y] += 1;
    }
    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let sa: f64 = ra.iter().map(|&c| choose2(c)).sum();
    let sb: f64 = rb.iter().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(n);
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mle::fit_nr;
    use crate::sampling::sample;
    use crate::sphere::UnitVector;

    fn simulate(family: Family, dirs: &[Vec<f64>], rhos: &[f64], sizes: &[usize], seed: u64) -> (DirectionalSample, Vec<usize>) {
        let mut rng = RngStream::new(seed, 0);
        let mut out: Option<DirectionalSample> = None;
        let mut labels = Vec::new();
        for (j, ((m, &rho), &n)) in dirs.iter().zip(rhos).zip(sizes).enumerate() {
            let m = UnitVector::project(m.clone()).unwrap();
            let s = sample(&SphericalParams::from_direction(family, &m, rho).unwrap(), n, &mut rng).unwrap();
            out = Some(match out {
                None => s,
                Some(o) => o.concat(&s).unwrap(),
            });
            labels.extend(std::iter::repeat_n(j, n));
        }
        (out.unwrap(), labels)
    }

    fn params(family: Family, m: &[f64], rho: f64) -> SphericalParams {
        SphericalParams::from_direction(family, &UnitVector::project(m.to_vec()).unwrap(), rho).unwrap()
    }

    #[test]
    fn single_component_responsibilities_are_one() {
        let (y, _) = simulate(Family::Sc, &[vec![1.0, 0.0, 0.0]], &[0.5], &[30], 1);
        let (w, _) = e_step(&y, &[1.0], &[params(Family::Sc, &[1.0, 0.0, 0.0], 0.5)]).unwrap();
        assert!(w.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn identical_components_return_the_weights() {
        let (y, _) = simulate(Family::Sc, &[vec![1.0, 0.0, 0.0]], &[0.5], &[30], 2);
        let c = params(Family::Pkb, &[0.0, 1.0, 0.0], 0.7);
        let (w, _) = e_step(&y, &[0.3, 0.7], &[c.clone(), c]).unwrap();
        for r in w.chunks_exact(2) {
            assert!((r[0] - 0.3).abs() < 1e-12 && (r[1] - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn responsibilities_match_direct_ratios() {
        let (y, _) = simulate(Family::Sc, &[vec![1.0, 0.0, 0.0]], &[0.3], &[50], 3);
        let comps = [params(Family::Sc, &[1.0, 0.0, 0.0], 0.2), params(Family::Sc, &[0.0, 0.0, 1.0], 0.3)];
        let p = [0.4, 0.6];
        let (w, ll) = e_step(&y, &p, &comps).unwrap();
        let mut direct_ll = 0.0;
        for (i, r) in y.rows().enumerate() {
            let f: Vec<f64> = comps.iter().zip(&p).map(|(c, pj)| pj * crate::density::pdf(r, c).unwrap()).collect();
            let tot: f64 = f.iter().sum();
            direct_ll += tot.ln();
            for j in 0..2 {
                assert!((w[i * 2 + j] - f[j] / tot).abs() < 1e-12);
            }
        }
        assert!((ll - direct_ll).abs() < 1e-9);
    }

    #[test]
    fn hard_weights_give_per_cluster_fits() {
        let (y, labels) = simulate(Family::Sc, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], &[0.8, 0.7], &[80, 60], 4);
        let mut resp = vec![0.0; y.n() * 2];
        for (i, &l) in labels.iter().enumerate() {
            resp[i * 2 + l] = 1.0;
        }
        let (w, comps) = m_step(&y, &resp, 2, Family::Sc, None).unwrap();
        assert!((w[0] - 80.0 / 140.0).abs() < 1e-12);
        let sub = y.select(&(0..80).collect::<Vec<_>>()).unwrap();
        let plain = fit_robust(&sub, Family::Sc, FitOptions::default()).unwrap();
        let diff = comps[0].mu().iter().zip(plain.params.mu()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-5);
    }

    #[test]
    fn uniform_weights_give_identical_components() {
        let (y, _) = simulate(Family::Pkb, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], &[0.8, 0.7], &[80, 60], 5);
        let resp = vec![1.0 / 3.0; y.n() * 3];
        let (_, comps) = m_step(&y, &resp, 3, Family::Pkb, None).unwrap();
        let pooled = fit_robust(&y, Family::Pkb, FitOptions::default()).unwrap();
        for c in &comps {
            let diff = c.mu().iter().zip(pooled.params.mu()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-5);
        }
    }

    #[test]
    fn empty_component_signals_collapse() {
        let (y, _) = simulate(Family::Sc, &[vec![1.0, 0.0, 0.0]], &[0.5], &[20], 6);
        let mut resp = vec![0.0; y.n() * 2];
        for i in 0..y.n() {
            resp[i * 2] = 1.0;
        }
        assert!(matches!(m_step(&y, &resp, 2, Family::Sc, None), Err(Error::ComponentCollapse { component: 1, .. })));
    }

    #[test]
    fn one_component_equals_plain_mle() {
        let (y, _) = simulate(Family::Sc, &[vec![1.0, 1.0, 0.0]], &[0.6], &[200], 7);
        for family in Family::ALL {
            let m = em_fit(&y, 1, family, EmOptions::default(), &RngStream::new(1, 1)).unwrap();
            let plain = fit_nr(&y, family, FitOptions::default()).unwrap();
            assert!((m.loglik - plain.loglik).abs() < 1e-6);
            let expected_bic = -2.0 * m.loglik + 3.0 * (200f64).ln();
            assert_eq!(m.bic, expected_bic);
        }
    }

    #[test]
    fn em_is_monotone_and_rows_normalized() {
        let mut rng = RngStream::new(8, 0);
        let mut failed = 0;
        for rep in 0..30 {
            let family = Family::ALL[rep % 2];
            let d = 1 + rep % 4;
            let k = 2 + rep % 3;
            let dirs: Vec<Vec<f64>> = (0..k).map(|_| (0..=d).map(|_| rng.normal()).collect()).collect();
            let rhos: Vec<f64> = (0..k).map(|_| 0.5 + 0.4 * rng.uniform()).collect();
            let sizes: Vec<usize> = (0..k).map(|_| 30 + rng.below(40)).collect();
            let (y, _) = simulate(family, &dirs, &rhos, &sizes, rep as u64);
            let opts = EmOptions {
                n_starts: 2,
                ..EmOptions::default()
            };
            let Ok(m) = em_fit(&y, k, family, opts, &RngStream::new(rep as u64, 9)) else {
                failed += 1;
                continue;
            };
            for w in m.trace.windows(2) {
                assert!(w[1] - w[0] >= -1e-8, "rep {rep}: {} -> {}", w[0], w[1]);
            }
            for r in m.responsibilities.chunks_exact(k) {
                assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
            let direct = mixture_loglik(&y, &m.weights, &m.components).unwrap();
            assert!((direct - m.loglik).abs() < 1e-8);
        }
        assert!(failed <= 3, "{failed} fits failed");
    }

    #[test]
    fn well_separated_clusters_are_recovered() {
        let (y, truth) = simulate(
            Family::Sc,
            &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            &[0.9, 0.9, 0.9],
            &[100, 120, 80],
            9,
        );
        let m = em_fit(&y, 3, Family::Sc, EmOptions::default(), &RngStream::new(9, 9)).unwrap();
        assert!(adjusted_rand_index(&m.map_assignments(), &truth).unwrap() > 0.95);
    }

    #[test]
    fn single_tight_cluster_selects_one_component() {
        let (y, _) = simulate(Family::Sc, &[vec![0.0, 0.0, 1.0]], &[0.9], &[500], 10);
        let sel = select_k(
            &y,
            Family::Sc,
            3,
            EmOptions {
                n_starts: 3,
                ..EmOptions::default()
            },
            &RngStream::new(10, 0),
        )
        .unwrap();
        assert_eq!(sel.best_bic, Some(1));
        assert_eq!(sel.best_icl, Some(1));
    }

    #[test]
    fn permuting_components_preserves_fit_summaries() {
        let (y, truth) = simulate(Family::Sc, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], &[0.8, 0.7], &[80, 60], 11);
        let m = em_fit(&y, 2, Family::Sc, EmOptions::default(), &RngStream::new(11, 0)).unwrap();
        let w2 = vec![m.weights[1], m.weights[0]];
        let c2 = vec![m.components[1].clone(), m.components[0].clone()];
        let (resp, ll) = e_step(&y, &w2, &c2).unwrap();
        assert!((ll - m.loglik).abs() < 1e-9);
        let swapped = finish(&y, Family::Sc, w2, c2, resp, ll, 0, true, vec![]);
        assert!((swapped.bic - m.bic).abs() < 1e-9);
        assert!((swapped.icl - m.icl).abs() < 1e-9);
        let a = adjusted_rand_index(&m.map_assignments(), &truth).unwrap();
        let b = adjusted_rand_index(&swapped.map_assignments(), &truth).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0; 8], &[0, 0, 1, 1, 2, 2, 3, 3]).unwrap(), 0.0);
        assert_eq!(adjusted_rand_index(&[0; 5], &[0; 5]).unwrap(), 1.0);
        // Hand-computed: contingency [[2,1],[0,3]] -> index 4, sums 6 and 6, C(6,2) = 15.
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 1, 1]).unwrap();
        let expected = (4.0 - 6.0 * 7.0 / 15.0) / (0.5 * (6.0 + 7.0) - 6.0 * 7.0 / 15.0);
        assert!((ari - expected).abs() < 1e-12);
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn kmeans_labels_every_point() {
        let (y, _) = simulate(Family::Sc, &[vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]], &[0.9, 0.9], &[50, 50], 12);
        let labels = spherical_kmeans(&y, 2, &mut RngStream::new(1, 2)).unwrap();
        assert!(labels.iter().all(|&l| l < 2));
        let truth: Vec<usize> = (0..100).map(|i| i / 50).collect();
        assert!(adjusted_rand_index(&labels, &truth).unwrap() > 0.8);
    }
}
