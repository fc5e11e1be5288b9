//! Unit vectors, samples on S^d and the two parameterizations of a
//! rotationally symmetric law: the unconstrained location `mu` and the
//! derived `(m, rho)` view.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Tolerance used when validating that input vectors lie on the sphere.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// Below this norm a location vector has no direction.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Which of the two families a parameter vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Spherical Cauchy.
    Sc,
    /// Poisson kernel-based.
    Pkb,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Sc, Family::Pkb];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Sc => "sc",
            Family::Pkb => "pkb",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" | "spcauchy" | "cauchy" => Ok(Family::Sc),
            "pkb" | "pkbd" => Ok(Family::Pkb),
            other => Err(Error::Domain(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Validates that `coords` has length >= 2 and unit norm within 1e-10.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Domain(format!(
                "a point on S^d needs at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        let nrm = norm(&coords);
        if !nrm.is_finite() || (nrm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NotUnitNorm { norm: nrm });
        }
        Ok(Self(coords))
    }

    /// Rescales `coords` onto the sphere.
    pub fn project(mut coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Domain(format!(
                "a point on S^d needs at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        let nrm = norm(&coords);
        if !(nrm >= DEGENERATE_NORM) || !nrm.is_finite() {
            return Err(Error::DegenerateLocation { norm: nrm });
        }
        coords.iter_mut().for_each(|c| *c /= nrm);
        Ok(Self(coords))
    }

    /// The `k`-th canonical basis vector of R^dim.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(dim >= 2 && k < dim);
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Ambient dimension d+1.
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    /// Great-circle distance in radians.
    pub fn angle_to(&self, other: &UnitVector) -> f64 {
        self.dot(other.as_slice()).clamp(-1.0, 1.0).acos()
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `n` points on S^d stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalSample {
    dim: usize,
    data: Vec<f64>,
}

impl DirectionalSample {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(rows, false)
    }

    /// Like [`from_rows`](Self::from_rows) but renormalizes every row.
    pub fn from_rows_projected(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(rows, true)
    }

    fn build(rows: Vec<Vec<f64>>, project: bool) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptySample);
        };
        let dim = first.len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            let u = if project {
                UnitVector::project(row)
            } else {
                UnitVector::new(row)
            }
            .map_err(|e| Error::Row {
                row: i,
                message: e.to_string(),
            })?;
            data.extend_from_slice(u.as_slice());
        }
        Ok(Self { dim, data })
    }

    pub fn from_unit_vectors(rows: &[UnitVector]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptySample);
        };
        let dim = first.dim();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.dim(),
                });
            }
            data.extend_from_slice(r.as_slice());
        }
        Ok(Self { dim, data })
    }

    /// Rows must already be unit vectors; used by the samplers.
    pub(crate) fn from_flat_unchecked(dim: usize, data: Vec<f64>) -> Self {
        debug_assert!(dim >= 2 && !data.is_empty() && data.len().is_multiple_of(dim));
        Self { dim, data }
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Ambient dimension d+1.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sphere dimension d.
    pub fn d(&self) -> usize {
        self.dim - 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Sample mean vector (not normalized).
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let n = self.n() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Weighted mean vector; weights need not sum to one.
    pub fn weighted_sum(&self, weights: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (r, w) in self.rows().zip(weights) {
            for (a, b) in m.iter_mut().zip(r) {
                *a += w * b;
            }
        }
        m
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            dim: self.dim,
            data,
        })
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            dim: self.dim,
            data,
        })
    }

    /// Applies a row-wise linear map `y -> Q y` where `q` is row-major
    /// `dim x dim`. Intended for orthogonal `Q`; rows are renormalized to
    /// absorb rounding.
    pub fn rotate(&self, q: &[f64]) -> Self {
        assert_eq!(q.len(), self.dim * self.dim);
        let mut data = Vec::with_capacity(self.data.len());
        for r in self.rows() {
            let mut out: Vec<f64> = (0..self.dim)
                .map(|i| dot(&q[i * self.dim..(i + 1) * self.dim], r))
                .collect();
            let nrm = norm(&out);
            out.iter_mut().for_each(|c| *c /= nrm);
            data.extend(out);
        }
        Self {
            dim: self.dim,
            data,
        }
    }
}

/// Converts a concentration `rho` in [0, 1) to `gamma = ||mu||`.
pub fn rho_to_gamma(rho: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok(2.0 * rho / (1.0 - rho * rho))
}

/// Inverse of [`rho_to_gamma`].
pub fn gamma_to_rho(gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) || gamma.is_infinite() {
        return Err(Error::Domain(format!(
            "gamma must be finite and non-negative, got {gamma}"
        )));
    }
    Ok(gamma_to_rho_unchecked(gamma))
}

pub(crate) fn gamma_to_rho_unchecked(gamma: f64) -> f64 {
    if gamma == 0.0 {
        0.0
    } else {
        // (sqrt(g^2+1) - 1)/g rewritten to avoid cancellation at small g.
        gamma / ((gamma * gamma + 1.0).sqrt() + 1.0)
    }
}

/// Splits `mu` into its direction and length.
pub fn normalize(mu: &[f64]) -> Result<(UnitVector, f64)> {
    if mu.len() < 2 {
        return Err(Error::Domain(format!(
            "location needs at least 2 coordinates, got {}",
            mu.len()
        )));
    }
    let gamma = norm(mu);
    if !(gamma >= DEGENERATE_NORM) {
        return Err(Error::DegenerateLocation { norm: gamma });
    }
    let m = mu.iter().map(|v| v / gamma).collect();
    Ok((UnitVector(m), gamma))
}

/// One SC or PKB law, stored through its unconstrained location `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalParams {
    pub family: Family,
    mu: Vec<f64>,
}

impl SphericalParams {
    pub fn new(family: Family, mu: Vec<f64>) -> Result<Self> {
        if mu.len() < 2 {
            return Err(Error::Domain(format!(
                "location needs at least 2 coordinates, got {}",
                mu.len()
            )));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("location has non-finite entries".into()));
        }
        Ok(Self { family, mu })
    }

    pub fn from_direction(family: Family, m: &UnitVector, rho: f64) -> Result<Self> {
        let gamma = rho_to_gamma(rho)?;
        Ok(Self {
            family,
            mu: m.as_slice().iter().map(|v| v * gamma).collect(),
        })
    }

    /// The uniform member of the family (`gamma = 0`).
    pub fn uniform(family: Family, dim: usize) -> Self {
        Self {
            family,
            mu: vec![0.0; dim],
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn d(&self) -> usize {
        self.mu.len() - 1
    }

    pub fn gamma(&self) -> f64 {
        norm(&self.mu)
    }

    pub fn rho(&self) -> f64 {
        gamma_to_rho_unchecked(self.gamma())
    }

    /// The mode direction; `None` when `gamma` is numerically zero.
    pub fn direction(&self) -> Option<UnitVector> {
        normalize(&self.mu).ok().map(|(m, _)| m)
    }

    pub fn with_family(&self, family: Family) -> Self {
        Self {
            family,
            mu: self.mu.clone(),
        }
    }
}

/// `n` iid uniform draws on S^d (normalized standard normal vectors).
pub fn sample_uniform_sphere(d: usize, n: usize, rng: &mut RngStream) -> Result<DirectionalSample> {
    if d < 1 {
        return Err(Error::Domain("sphere dimension d must be at least 1".into()));
    }
    if n < 1 {
        return Err(Error::EmptySample);
    }
    let dim = d + 1;
    let mut data = Vec::with_capacity(n * dim);
    let mut buf = vec![0.0; dim];
    for _ in 0..n {
        draw_uniform_into(&mut buf, rng);
        data.extend_from_slice(&buf);
    }
    Ok(DirectionalSample::from_flat_unchecked(dim, data))
}

pub(crate) fn draw_uniform_into(buf: &mut [f64], rng: &mut RngStream) {
    loop {
        buf.iter_mut().for_each(|c| *c = rng.normal());
        let nrm = norm(buf);
        if nrm > 1e-150 {
            buf.iter_mut().for_each(|c| *c /= nrm);
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rho_gamma_examples() {
        assert_eq!(rho_to_gamma(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(rho_to_gamma(0.6).unwrap(), 1.875, epsilon = 1e-14);
        assert_abs_diff_eq!(rho_to_gamma(0.5).unwrap(), 4.0 / 3.0, epsilon = 1e-14);
        assert_eq!(gamma_to_rho(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(gamma_to_rho(1.875).unwrap(), 0.6, epsilon = 1e-14);
        for k in 1..=9 {
            let r = k as f64 / 10.0;
            let back = gamma_to_rho(rho_to_gamma(r).unwrap()).unwrap();
            assert_abs_diff_eq!(back, r, epsilon = 1e-12);
        }
    }

    #[test]
    fn rho_gamma_domain_errors() {
        assert!(rho_to_gamma(1.0).is_err());
        assert!(rho_to_gamma(-0.1).is_err());
        assert!(rho_to_gamma(f64::NAN).is_err());
        assert!(gamma_to_rho(-1.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        let (m, g) = normalize(&[5.843, 3.057, 3.758]).unwrap();
        let expected = [0.770, 0.403, 0.495];
        for (a, b) in m.as_slice().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 5e-4);
        }
        assert_abs_diff_eq!(g, 7.590, epsilon = 5e-4);

        let (m, g) = normalize(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(m.as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(g, 1.0);

        assert!(matches!(
            normalize(&[0.0, 0.0, 0.0]),
            Err(Error::DegenerateLocation { .. })
        ));
    }

    #[test]
    fn unit_vector_validation() {
        assert!(UnitVector::new(vec![1.0]).is_err());
        assert!(UnitVector::new(vec![1.0, 1e-4]).is_err());
        assert!(UnitVector::new(vec![0.6, 0.8]).is_ok());
        assert!(UnitVector::project(vec![0.0, 0.0]).is_err());
        let p = UnitVector::project(vec![3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn sample_rejects_off_sphere_rows_unless_projected() {
        let rows = vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]];
        assert!(matches!(
            DirectionalSample::from_rows(rows.clone()),
            Err(Error::Row { row: 1, .. })
        ));
        let s = DirectionalSample::from_rows_projected(rows).unwrap();
        assert_eq!(s.n(), 2);
        assert!(DirectionalSample::from_rows(vec![]).is_err());
        assert!(DirectionalSample::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn uniform_sampler_unit_norm_and_centered() {
        let mut rng = RngStream::new(42, 0);
        let s = sample_uniform_sphere(2, 1000, &mut rng).unwrap();
        for r in s.rows() {
            assert!((norm(r) - 1.0).abs() < 1e-10);
        }
        let mut rng = RngStream::new(42, 1);
        let s = sample_uniform_sphere(2, 10_000, &mut rng).unwrap();
        assert!(norm(&s.mean()) < 0.05);
    }

    #[test]
    fn uniform_sampler_is_deterministic() {
        let a = sample_uniform_sphere(3, 50, &mut RngStream::new(9, 2)).unwrap();
        let b = sample_uniform_sphere(3, 50, &mut RngStream::new(9, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_sampler_moments() {
        // Each coordinate has mean 0 and second moment 1/(d+1); check within
        // 3 Monte-Carlo standard errors at n = 1e5.
        let d = 3;
        let n = 100_000;
        let s = sample_uniform_sphere(d, n, &mut RngStream::new(5, 5)).unwrap();
        let dim = d + 1;
        let target = 1.0 / dim as f64;
        for k in 0..dim {
            let xs: Vec<f64> = s.rows().map(|r| r[k]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
            let m2 = sq.iter().sum::<f64>() / n as f64;
            let var1 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let var2 = sq.iter().map(|x| (x - m2).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 3.0 * (var1 / n as f64).sqrt(), "coord {k} mean {mean}");
            assert!(
                (m2 - target).abs() < 3.0 * (var2 / n as f64).sqrt(),
                "coord {k} second moment {m2}"
            );
        }
    }

    proptest! {
        #[test]
        fn rho_round_trip(rho in 0.0f64..(1.0 - 1e-6)) {
            let back = gamma_to_rho(rho_to_gamma(rho).unwrap()).unwrap();
            prop_assert!((back - rho).abs() < 1e-12);
        }

        #[test]
        fn normalize_gives_unit_norm(mu in proptest::collection::vec(-100.0f64..100.0, 2..8)) {
            prop_assume!(norm(&mu) > 1e-6);
            let (m, g) = normalize(&mu).unwrap();
            prop_assert!((norm(m.as_slice()) - 1.0).abs() < 1e-12);
            prop_assert!((g - norm(&mu)).abs() < 1e-12 * g.max(1.0));
        }
    }
}
