//! Data-generating designs of the simulation presets.

use rand_distr::{Distribution, Gamma};

use crate::classify::LabeledSample;
use crate::error::{Error, Result};
use crate::regression::DesignMatrix;
use crate::rng::RngStream;
use crate::sampling::{sample, sample_per_location, sample_vmf};
use crate::sphere::{sample_uniform_sphere, DirectionalSample, Family, SphericalParams, UnitVector};

/// `e1` and its rotation by `theta_deg` towards `e2`.
pub fn separated_directions(dim: usize, theta_deg: f64) -> Result<(UnitVector, UnitVector)> {
    if dim < 2 {
        return Err(Error::Domain("need at least two coordinates".into()));
    }
    let t = theta_deg.to_radians();
    let mut b = vec![0.0; dim];
    b[0] = t.cos();
    b[1] = t.sin();
    Ok((UnitVector::basis(dim, 0), UnitVector::project(b)?))
}

/// Two independent samples with locations `theta_deg` apart.
pub fn two_samples(
    family: Family,
    d: usize,
    sizes: (usize, usize),
    rhos: (f64, f64),
    theta_deg: f64,
    rng: &mut RngStream,
) -> Result<(DirectionalSample, DirectionalSample)> {
    let (m1, m2) = separated_directions(d + 1, theta_deg)?;
    let s1 = sample(&SphericalParams::from_direction(family, &m1, rhos.0)?, sizes.0, rng)?;
    let s2 = sample(&SphericalParams::from_direction(family, &m2, rhos.1)?, sizes.1, rng)?;
    Ok((s1, s2))
}

/// Two labelled groups of `n` each, sharing `rho`.
pub fn two_groups(family: Family, d: usize, n: usize, rho: f64, theta_deg: f64, rng: &mut RngStream) -> Result<LabeledSample> {
    let (s1, s2) = two_samples(family, d, (n, n), (rho, rho), theta_deg, rng)?;
    let labels = (0..2 * n).map(|i| usize::from(i >= n)).collect();
    LabeledSample::new(s1.concat(&s2)?, labels)
}

/// `p x (d+1)` coefficient matrix with standard normal entries, row-major.
pub fn normal_coefficients(p: usize, d: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..p * (d + 1)).map(|_| rng.normal()).collect()
}

/// Intercept plus one standard normal covariate; responses drawn at
/// `mu_i = B' x_i` with `b` row-major `2 x (d+1)`.
pub fn regression_data(
    family: Family,
    n: usize,
    d: usize,
    b: &[f64],
    rng: &mut RngStream,
) -> Result<(DirectionalSample, DesignMatrix)> {
    let dim = d + 1;
    if b.len() != 2 * dim {
        return Err(Error::DimensionMismatch {
            expected: 2 * dim,
            got: b.len(),
        });
    }
    let x = DesignMatrix::with_intercept((0..n).map(|_| vec![rng.normal()]).collect())?;
    let mus: Vec<Vec<f64>> = x
        .rows()
        .map(|xi| (0..dim).map(|k| xi[0] * b[k] + xi[1] * b[dim + k]).collect())
        .collect();
    let y = sample_per_location(family, &mus, rng)?;
    Ok((y, x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDraw {
    pub y: DirectionalSample,
    /// True component of every row, `0..K`.
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
    pub components: Vec<SphericalParams>,
}

/// Mixture design: weights from Dirichlet(5, ..., 5), locations from a
/// von Mises-Fisher law of concentration `kappa` around a uniformly drawn
/// axis, concentrations uniform on `rho_range`, and component labels drawn
/// independently per row.
pub fn mixture_data(
    family: Family,
    n: usize,
    d: usize,
    k: usize,
    rho_range: (f64, f64),
    kappa: f64,
    rng: &mut RngStream,
) -> Result<MixtureDraw> {
    if k == 0 {
        return Err(Error::Domain("a mixture needs at least one component".into()));
    }
    let gamma = Gamma::new(5.0, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let raw: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|g| g / total).collect();
    let axis = UnitVector::new(sample_uniform_sphere(d, 1, rng)?.row(0).to_vec())?;
    let dirs = sample_vmf(&axis, kappa, k, rng)?;
    let components = (0..k)
        .map(|j| {
            let rho = rho_range.0 + (rho_range.1 - rho_range.0) * rng.uniform();
            SphericalParams::from_direction(family, &UnitVector::new(dirs.row(j).to_vec())?, rho)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = (0..n)
        .map(|_| {
            let u = rng.uniform();
            let mut acc = 0.0;
            for (j, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    return j;
                }
            }
            k - 1
        })
        .collect();
    let mut per: Vec<Option<DirectionalSample>> = Vec::with_capacity(k);
    for (j, c) in components.iter().enumerate() {
        let nj = labels.iter().filter(|&&l| l == j).count();
        per.push(if nj > 0 { Some(sample(c, nj, rng)?) } else { None });
    }
    let mut next = vec![0usize; k];
    let mut rows = Vec::with_capacity(n);
    for &l in &labels {
        rows.push(per[l].as_ref().expect("component has rows").row(next[l]).to_vec());
        next[l] += 1;
    }
    Ok(MixtureDraw {
        y: DirectionalSample::from_rows(rows)?,
        labels,
        weights,
        components,
    })
}
