//! Maximum-likelihood discriminant analysis.
//!
//! Each group gets its own SC or PKB fit; a new point goes to the group with
//! the largest log-density. Group labels are `0..J` internally.

use rayon::prelude::*;

use crate::density::{log_norm_const, logpdf_unchecked};
use crate::error::{Error, Result};
use crate::mle::{fit_robust, FitOptions};
use crate::rng::RngStream;
use crate::sphere::{DirectionalSample, Family, SphericalParams};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub y: DirectionalSample,
    /// Group index of every row, in `0..groups`.
    pub labels: Vec<usize>,
    pub groups: usize,
    /// Original label text per group index, when read from a file.
    pub label_names: Vec<String>,
}

impl LabeledSample {
    pub fn new(y: DirectionalSample, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != y.n() {
            return Err(Error::DimensionMismatch {
                expected: y.n(),
                got: labels.len(),
            });
        }
        let groups = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            y,
            labels,
            groups,
            label_names: (1..=groups).map(|g| g.to_string()).collect(),
        })
    }

    /// Maps arbitrary label strings onto `0..J` in sorted order (numeric
    /// order when every label parses as a number).
    pub fn from_named(y: DirectionalSample, names: &[String]) -> Result<Self> {
        let mut unique: Vec<String> = names.to_vec();
        unique.sort();
        unique.dedup();
        if unique.iter().all(|s| s.parse::<f64>().is_ok()) {
            unique.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
        }
        let labels = names
            .iter()
            .map(|n| unique.iter().position(|u| u == n).expect("label present"))
            .collect();
        let mut s = Self::new(y, labels)?;
        s.groups = unique.len();
        s.label_names = unique;
        Ok(s)
    }

    pub fn group_indices(&self, g: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == g).collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.groups];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            y: self.y.select(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: self.groups,
            label_names: self.label_names.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub family: Family,
    pub group_params: Vec<SphericalParams>,
}

impl Classifier {
    pub fn groups(&self) -> usize {
        self.group_params.len()
    }

    pub fn dim(&self) -> usize {
        self.group_params[0].dim()
    }
}

/// Fits every group separately (NR with hybrid fallback).
pub fn train(data: &LabeledSample, family: Family) -> Result<Classifier> {
    if data.groups < 2 {
        return Err(Error::Training(format!("need at least two groups, found {}", data.groups)));
    }
    let mut group_params = Vec::with_capacity(data.groups);
    for g in 0..data.groups {
        let idx = data.group_indices(g);
        if idx.len() < 2 {
            return Err(Error::Training(format!(
                "group {} has {} observation(s); at least two are needed",
                data.label_names.get(g).map_or_else(|| g.to_string(), Clone::clone),
                idx.len()
            )));
        }
        let fit = fit_robust(&data.y.select(&idx)?, family, FitOptions::default()).map_err(|e| {
            Error::Training(format!("fit of group {g} failed: {e}"))
        })?;
        group_params.push(fit.params);
    }
    Ok(Classifier { family, group_params })
}

/// Per-group log-densities of `y0`.
pub fn discriminant_scores(clf: &Classifier, y0: &[f64]) -> Result<Vec<f64>> {
    if y0.len() != clf.dim() {
        return Err(Error::DimensionMismatch {
            expected: clf.dim(),
            got: y0.len(),
        });
    }
    let d = clf.dim() - 1;
    let log_c = log_norm_const(d);
    Ok(clf
        .group_params
        .iter()
        .map(|p| logpdf_unchecked(y0, clf.family, p.mu(), d, log_c))
        .collect())
}

/// Index of the largest score; ties go to the lowest index.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = j;
        }
    }
    best
}

/// Allocated group (0-based).
pub fn predict_class(clf: &Classifier, y0: &[f64]) -> Result<usize> {
    Ok(argmax(&discriminant_scores(clf, y0)?))
}

pub fn predict_all(clf: &Classifier, y: &DirectionalSample) -> Result<Vec<usize>> {
    y.rows().map(|r| predict_class(clf, r)).collect()
}

/// The SC allocation quantity `log(sqrt(gamma^2 + 1) - y'mu)`; the group
/// minimizing it is the SC allocation.
pub fn sc_rule_quantity(params: &SphericalParams, y0: &[f64]) -> f64 {
    let s = (params.gamma().powi(2) + 1.0).sqrt();
    (s - crate::sphere::dot(y0, params.mu())).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSummary {
    pub mean: f64,
    pub median: f64,
    /// Proportion correct in every repeat.
    pub per_repeat: Vec<f64>,
    /// Folds left out because a group could not be trained.
    pub skipped_folds: usize,
}

/// Stratified fold assignment: each group is shuffled and dealt round-robin
/// onto the folds.
pub fn stratified_folds(data: &LabeledSample, folds: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut assignment = vec![0; data.labels.len()];
    let sizes = data.group_sizes();
    let mut offset = 0;
    for g in 0..data.groups {
        let mut idx = data.group_indices(g);
        rng.shuffle(&mut idx);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = (pos + offset) % folds;
        }
        offset += sizes[g];
    }
    assignment
}

/// `(correct, tested, skipped folds)` for one fold assignment.
fn run_folds(data: &LabeledSample, family: Family, assignment: &[usize], folds: usize) -> (usize, usize, usize) {
    let mut correct = 0;
    let mut total = 0;
    let mut skipped = 0;
    for f in 0..folds {
        let test: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] == f).collect();
        let trn: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] != f).collect();
        if test.is_empty() {
            continue;
        }
        let clf = data.select(&trn).and_then(|t| train(&t, family));
        let Ok(clf) = clf else {
            skipped += 1;
            continue;
        };
        for &i in &test {
            if predict_class(&clf, data.y.row(i)).ok() == Some(data.labels[i]) {
                correct += 1;
            }
            total += 1;
        }
    }
    (correct, total, skipped)
}

/// Repeated stratified k-fold cross-validation. Repeat `r` draws its folds
/// from `rng.substream(r)`, so different families see the same folds.
pub fn cross_validate(
    data: &LabeledSample,
    family: Family,
    folds: usize,
    repeats: usize,
    rng: &RngStream,
) -> Result<CvSummary> {
    if folds < 2 {
        return Err(Error::Domain("cross-validation needs at least two folds".into()));
    }
    if repeats == 0 {
        return Err(Error::Domain("cross-validation needs at least one repeat".into()));
    }
    if data.groups < 2 {
        return Err(Error::Training(format!("need at least two groups, found {}", data.groups)));
    }
    let results: Vec<(usize, usize, usize)> = (0..repeats as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng.substream(r);
            let assignment = stratified_folds(data, folds, &mut stream);
            run_folds(data, family, &assignment, folds)
        })
        .collect();
    let skipped_folds = results.iter().map(|r| r.2).sum();
    let per_repeat: Vec<f64> = results
        .iter()
        .filter(|r| r.1 > 0)
        .map(|r| r.0 as f64 / r.1 as f64)
        .collect();
    if per_repeat.is_empty() {
        return Err(Error::Training("every fold failed to train".into()));
    }
    let mean = per_repeat.iter().sum::<f64>() / per_repeat.len() as f64;
    Ok(CvSummary {
        mean,
        median: median(&per_repeat),
        per_repeat,
        skipped_folds,
    })
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
