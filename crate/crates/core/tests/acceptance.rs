//! Acceptance report. Prints one PASS/FAIL/SKIP line per criterion.
//!
//! Runs without the libtest harness so the report is never captured. FAIL
//! lines only turn into a non-zero exit when `SCPKB_ACCEPTANCE_STRICT` is
//! set. Real-data criteria look for their files in `SCPKB_DATA_DIR`, falling
//! back to `data/` at the workspace root.

use std::path::{Path, PathBuf};
use std::time::Instant;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use scpkb::classify::{self, LabeledSample};
use scpkb::density;
use scpkb::harness::{self, bench, ExperimentSpec, ReportTable};
use scpkb::inference;
use scpkb::io;
use scpkb::mixtures::{self, EmOptions};
use scpkb::mle::{self, Algorithm, FitOptions};
use scpkb::regression::{self, DesignMatrix};
use scpkb::sampling;
use scpkb::{DirectionalSample, Family, RngStream, SphericalParams, UnitVector};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn experiment(config: &str) -> ReportTable {
    let spec = ExperimentSpec::from_config_str(config, None).expect("valid config");
    harness::run_experiment(&spec).expect("experiment runs")
}

fn statistic(t: &ReportTable, name: &str) -> f64 {
    t.rows.iter().find(|r| r.statistic == name).map_or(f64::NAN, |r| r.value)
}

fn criterion_1() -> Verdict {
    let full = statistic(
        &experiment("preset = type1-power\nfamily = sc\nreplicates = 1000\nsizes = 100:70\nd = 2\ntheta = 0\n"),
        "reject_rate",
    );
    let start = Instant::now();
    let short = statistic(
        &experiment("preset = type1-power\nfamily = sc\nreplicates = 300\nseed = 2\nsizes = 100:70\nd = 2\ntheta = 0\n"),
        "reject_rate",
    );
    let secs = start.elapsed().as_secs_f64();
    let ok = (0.037..=0.065).contains(&full) && (0.026..=0.076).contains(&short) && secs < 60.0;
    check(ok, format!("rejection rate {full:.3} (1000 reps), {short:.3} (300 reps, {secs:.1}s)"))
}

fn criterion_2() -> Verdict {
    let rate = statistic(
        &experiment("preset = type1-power\nfamily = sc\nreplicates = 300\nsizes = 100:70\nd = 5\ntheta = 30\n"),
        "reject_rate",
    );
    check(rate >= 0.99, format!("rejection rate {rate:.3}"))
}

fn criterion_3() -> Verdict {
    let t = experiment("preset = regression-fit\nfamily = sc\nreplicates = 300\nn = 200\nd = 9\n");
    let (sc, pkb) = (statistic(&t, "fit_sc"), statistic(&t, "fit_pkb"));
    check(
        (sc - 0.972).abs() <= 0.02 && (sc - pkb).abs() < 0.005,
        format!("fit SC {sc:.4}, PKB {pkb:.4}, gap {:.5}", (sc - pkb).abs()),
    )
}

fn criterion_4() -> Verdict {
    let t = experiment("preset = discrim\nfamily = sc\nreplicates = 300\nn = 200\nd = 9\ntheta = 30\nrho = 0.5\n");
    let (sc, pkb) = (statistic(&t, "accuracy_sc"), statistic(&t, "accuracy_pkb"));
    check(
        (sc - 0.832).abs() <= 0.02 && (sc - pkb).abs() < 0.005,
        format!("accuracy SC {sc:.4}, PKB {pkb:.4}, gap {:.5}", (sc - pkb).abs()),
    )
}

fn criterion_5() -> Verdict {
    let t = experiment("preset = mixture-recovery\nfamily = sc\nreplicates = 100\nn = 1000\nk = 2\nd = 9\n");
    let (ari, dk) = (statistic(&t, "ari_sc"), statistic(&t, "abs_k_error_sc"));
    check(ari >= 0.98 && dk <= 0.15, format!("mean ARI {ari:.4}, mean |K-K0| {dk:.3} (BIC)"))
}

fn data_dir() -> PathBuf {
    std::env::var_os("SCPKB_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// Room-labelled signal strengths, projected onto the sphere. Accepts a
/// headed CSV with a `room` column or the raw whitespace-separated file.
fn load_wireless(dir: &Path) -> Option<LabeledSample> {
    let csv = dir.join("wireless.csv");
    let raw = dir.join("wifi_localization.txt");
    let (rows, names) = if csv.exists() {
        let t = io::read_numeric_csv(&csv, Some("room")).expect("wireless.csv parses");
        (t.rows, t.labels.expect("room column"))
    } else if raw.exists() {
        let text = std::fs::read_to_string(&raw).expect("readable");
        let mut rows = Vec::new();
        let mut names = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut v: Vec<f64> = line.split_whitespace().map(|x| x.parse().expect("numeric")).collect();
            names.push(format!("{}", v.pop().expect("room")));
            rows.push(v);
        }
        (rows, names)
    } else {
        return None;
    };
    let y = DirectionalSample::from_rows_projected(rows).expect("nonzero rows");
    Some(LabeledSample::from_named(y, &names).expect("labels"))
}

fn criterion_6() -> Verdict {
    let Some(data) = load_wireless(&data_dir()) else {
        return Verdict::Skip("wireless data not found".into());
    };
    let rng = RngStream::new(1, 0);
    let sc = classify::cross_validate(&data, Family::Sc, 10, 10, &rng).expect("cv").mean;
    let pkb = classify::cross_validate(&data, Family::Pkb, 10, 10, &rng).expect("cv").mean;
    let sel = mixtures::select_k(&data.y, Family::Sc, 10, EmOptions::default(), &rng).expect("selection");
    let ari4 = sel
        .model(4)
        .map_or(f64::NAN, |m| mixtures::adjusted_rand_index(&m.map_assignments(), &data.labels).unwrap());
    let icl = sel.chosen(mixtures::Criterion::Icl);
    check(
        (sc - 0.979).abs() <= 0.01 && (pkb - 0.978).abs() <= 0.01 && (ari4 - 0.94).abs() <= 0.03 && icl == Some(5),
        format!("CV SC {sc:.4}, PKB {pkb:.4}; ARI at K=4 {ari4:.3}; ICL K {icl:?}"),
    )
}

fn criterion_7() -> Verdict {
    let path = data_dir().join("ordovician.csv");
    if !path.exists() {
        return Verdict::Skip("ordovician data not found".into());
    }
    let t = io::read_numeric_csv(&path, Some("group")).expect("ordovician.csv parses");
    let y = DirectionalSample::from_rows_projected(t.rows).expect("unit rows");
    let data = LabeledSample::from_named(y, &t.labels.expect("group column")).expect("labels");
    let g1 = data.y.select(&data.group_indices(0)).unwrap();
    let g2 = data.y.select(&data.group_indices(1)).unwrap();
    let p_sc = inference::lrt_two_sample(&g1, &g2, Family::Sc).expect("lrt").p_asymptotic;
    let p_pkb = inference::lrt_two_sample(&g1, &g2, Family::Pkb).expect("lrt").p_asymptotic;
    let fit = mle::fit_robust(&g1, Family::Sc, FitOptions::default()).expect("fit");
    let m = fit.params.direction().expect("direction").into_vec();
    let m_err = m.iter().zip([0.770, 0.635, -0.067]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let rho = fit.params.rho();
    check(
        (p_sc - 0.733).abs() <= 0.01 && (p_pkb - 0.856).abs() <= 0.01 && m_err <= 0.005 && (rho - 0.853).abs() <= 0.005,
        format!("p SC {p_sc:.3}, PKB {p_pkb:.3}; group 1 m {m:.3?} rho {rho:.4}"),
    )
}

// Property suite.

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    num / den
}

fn normals(k: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..k).map(|_| rng.normal()).collect()
}

/// Central differences of a vector function, returned row-major with the
/// differenced coordinate as the column.
fn jacobian(x: &[f64], h: f64, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let cols: Vec<Vec<f64>> = (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[k] += h;
            dn[k] -= h;
            f(&up).iter().zip(f(&dn)).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        })
        .collect();
    let rows = cols[0].len();
    (0..rows * x.len()).map(|i| cols[i % x.len()][i / x.len()]).collect()
}

fn row_major(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn regression_data(family: Family, dim: usize, n: usize, rng: &mut RngStream) -> (DirectionalSample, DesignMatrix) {
    let x = DesignMatrix::with_intercept((0..n).map(|_| vec![rng.normal()]).collect()).unwrap();
    let b = normals(2 * dim, rng);
    let mus: Vec<Vec<f64>> = x
        .rows()
        .map(|xi| (0..dim).map(|k| b[k] * xi[0] + b[dim + k] * xi[1]).collect())
        .collect();
    (sampling::sample_per_location(family, &mus, rng).unwrap(), x)
}

fn property_derivatives() -> Result<String, String> {
    let mut rng = RngStream::new(81, 0);
    let mut worst = (0.0f64, 0.0f64);
    for family in Family::ALL {
        for rep in 0..50 {
            let d = 1 + rep % 6;
            let s = sampling::sample(
                &SphericalParams::new(family, normals(d + 1, &mut rng)).unwrap(),
                60,
                &mut rng,
            )
            .unwrap();
            let mu = normals(d + 1, &mut rng);
            let ll = |m: &[f64]| vec![mle::loglik(&s, &SphericalParams::new(family, m.to_vec()).unwrap()).unwrap()];
            let score = |m: &[f64]| {
                let (g, _) = mle::score_and_hessian(&s, &SphericalParams::new(family, m.to_vec()).unwrap()).unwrap();
                g.as_slice().to_vec()
            };
            let (g, h) = mle::score_and_hessian(&s, &SphericalParams::new(family, mu.clone()).unwrap()).unwrap();
            worst.0 = worst.0.max(rel_err(g.as_slice(), &jacobian(&mu, 1e-6, ll)));
            worst.1 = worst.1.max(rel_err(&row_major(&h), &jacobian(&mu, 1e-6, score)));

            let dim = 2 + rep % 4;
            let (y, x) = regression_data(family, dim, 40, &mut rng);
            let beta = normals(2 * dim, &mut rng);
            let rll = |b: &[f64]| vec![regression::regression_loglik(&y, &x, family, b).unwrap()];
            let rscore = |b: &[f64]| {
                let (g, _) = regression::regression_score_and_hessian(&y, &x, family, b).unwrap();
                g.as_slice().to_vec()
            };
            let (g, h) = regression::regression_score_and_hessian(&y, &x, family, &beta).unwrap();
            worst.0 = worst.0.max(rel_err(g.as_slice(), &jacobian(&beta, 1e-6, rll)));
            worst.1 = worst.1.max(rel_err(&row_major(&h), &jacobian(&beta, 1e-6, rscore)));
        }
    }
    let msg = format!("gradient {:.1e}, Hessian {:.1e}", worst.0, worst.1);
    if worst.0 < 1e-5 && worst.1 < 1e-4 { Ok(msg) } else { Err(msg) }
}

fn property_fisher() -> Result<String, String> {
    let mut rng = RngStream::new(82, 0);
    let mut worst = 0.0f64;
    for family in Family::ALL {
        for _ in 0..5 {
            let n = 60;
            let (y, x) = regression_data(family, 3, n, &mut rng);
            let model = regression::fit_regression(&y, &x, family, FitOptions::default()).unwrap();
            let ll = |b: &[f64]| regression::regression_loglik(&y, &x, family, b).unwrap();
            let b = &model.beta;
            let k = b.len();
            let h = 1e-4;
            let mut num = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..k {
                    let at = |si: f64, sj: f64| {
                        let mut v = b.clone();
                        v[i] += si * h;
                        v[j] += sj * h;
                        ll(&v)
                    };
                    let hess = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
                    num[i * k + j] = -hess / n as f64;
                }
            }
            worst = worst.max(rel_err(&row_major(&model.fisher), &num));
        }
    }
    let msg = format!("relative error {worst:.1e}");
    if worst < 1e-3 { Ok(msg) } else { Err(msg) }
}

/// Integral over S^2 by Simpson's rule in the polar angle and the periodic
/// trapezoid rule in the azimuth.
fn integrate_s2(f: impl Fn(&[f64]) -> f64) -> f64 {
    let (nt, np) = (4000, 512);
    let ht = std::f64::consts::PI / nt as f64;
    let hp = 2.0 * std::f64::consts::PI / np as f64;
    let mut total = 0.0;
    for i in 0..=nt {
        let th = i as f64 * ht;
        let w = if i == 0 || i == nt { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let ring: f64 = (0..np)
            .map(|j| {
                let ph = j as f64 * hp;
                f(&[th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()])
            })
            .sum();
        total += w * ring * hp * th.sin();
    }
    total * ht / 3.0
}

fn property_normalization() -> Result<String, String> {
    let m = UnitVector::project(vec![0.3, -0.5, 0.8]).unwrap();
    let mut worst = 0.0f64;
    for family in Family::ALL {
        for rho in [0.0, 0.3, 0.6, 0.9] {
            let p = SphericalParams::from_direction(family, &m, rho).unwrap();
            let total = integrate_s2(|y| density::pdf(y, &p).unwrap());
            worst = worst.max((total - 1.0).abs());
        }
    }
    let msg = format!("max |integral - 1| {worst:.1e}");
    if worst < 1e-4 { Ok(msg) } else { Err(msg) }
}

/// Chi-square test of `t = y'm` against the marginal implied by the density,
/// `f(t) (1 - t^2)^((d-2)/2)`, with equiprobable bins.
fn t_gof_pvalue(s: &DirectionalSample, p: &SphericalParams, bins: usize) -> f64 {
    let d = s.d() as f64;
    let m = p.direction().unwrap();
    let dim = s.dim();
    let grid = 200_000;
    let h = 2.0 / grid as f64;
    let mut cdf = vec![0.0];
    for k in 0..grid {
        let t = -1.0 + (k as f64 + 0.5) * h;
        let mut y = vec![0.0; dim];
        y[0] = t;
        y[1] = (1.0 - t * t).sqrt();
        let y = rotate_to(&y, &m);
        let f = density::pdf(&y, p).unwrap() * (1.0 - t * t).powf((d - 2.0) / 2.0);
        cdf.push(cdf[k] + f * h);
    }
    let total = cdf[grid];
    let mut counts = vec![0usize; bins];
    for r in s.rows() {
        let t = m.dot(r).clamp(-1.0, 1.0);
        let pos = ((t + 1.0) / h).min(grid as f64 - 1e-9);
        let k = pos.floor() as usize;
        let u = (cdf[k] + (pos - k as f64) * (cdf[k + 1] - cdf[k])) / total;
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let e = s.n() as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

/// Householder reflection taking the first basis vector to `m`, applied to `y`.
fn rotate_to(y: &[f64], m: &UnitVector) -> Vec<f64> {
    let mut v: Vec<f64> = m.as_slice().to_vec();
    v[0] -= 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if vv < 1e-24 {
        return y.to_vec();
    }
    let vy: f64 = v.iter().zip(y).map(|(a, b)| a * b).sum();
    y.iter().zip(&v).map(|(yi, vi)| yi - 2.0 * vy / vv * vi).collect()
}

fn property_samplers() -> Result<String, String> {
    let mut lowest = 1.0f64;
    let mut rng = RngStream::new(84, 0);
    for family in Family::ALL {
        for (d, rho) in [(2, 0.3), (2, 0.8), (5, 0.6)] {
            let m = UnitVector::project(normals(d + 1, &mut rng)).unwrap();
            let p = SphericalParams::from_direction(family, &m, rho).unwrap();
            let s = sampling::sample(&p, 50_000, &mut rng).unwrap();
            lowest = lowest.min(t_gof_pvalue(&s, &p, 50));
        }
    }
    let msg = format!("smallest p-value {lowest:.3}");
    if lowest > 0.01 { Ok(msg) } else { Err(msg) }
}

fn cluster_sample(family: Family, d: usize, k: usize, n: usize, rng: &mut RngStream) -> DirectionalSample {
    let mut out: Option<DirectionalSample> = None;
    for j in 0..k {
        let m = UnitVector::project(normals(d + 1, rng)).unwrap();
        let p = SphericalParams::from_direction(family, &m, 0.5 + 0.4 * rng.uniform()).unwrap();
        let part = sampling::sample(&p, n / k + usize::from(j < n % k), rng).unwrap();
        out = Some(match out {
            Some(acc) => acc.concat(&part).unwrap(),
            None => part,
        });
    }
    out.unwrap()
}

fn property_em() -> Result<String, String> {
    let mut rng = RngStream::new(85, 0);
    let (mut runs, mut failed, mut worst_drop) = (0, 0, 0.0f64);
    for rep in 0..100 {
        let family = Family::ALL[rep % 2];
        let d = 1 + rep % 4;
        let k = 2 + rep % 2;
        let y = cluster_sample(family, d, k, 200, &mut rng);
        let opts = EmOptions {
            n_starts: 2,
            ..EmOptions::default()
        };
        match mixtures::em_fit(&y, k, family, opts, &rng.substream(rep as u64)) {
            Ok(m) => {
                runs += 1;
                for w in m.trace.windows(2) {
                    worst_drop = worst_drop.max(w[0] - w[1]);
                }
            }
            Err(_) => failed += 1,
        }
    }
    let msg = format!("{runs} runs, {failed} failed, largest decrease {worst_drop:.1e}");
    if worst_drop <= 1e-8 && runs >= 90 { Ok(msg) } else { Err(msg) }
}

fn property_algorithms() -> Result<String, String> {
    let mut rng = RngStream::new(86, 0);
    let mut worst = 0.0f64;
    for rep in 0..200 {
        let family = Family::ALL[rep % 2];
        let d = 1 + rep % 6;
        let n = 30 + 10 * (rep % 25);
        let m = UnitVector::project(normals(d + 1, &mut rng)).unwrap();
        let p = SphericalParams::from_direction(family, &m, 0.1 + 0.85 * rng.uniform()).unwrap();
        let y = sampling::sample(&p, n, &mut rng).unwrap();
        let nr = mle::fit(&y, family, Algorithm::Nr, FitOptions::default());
        let hy = mle::fit(&y, family, Algorithm::Hybrid, FitOptions::default());
        match (nr, hy) {
            (Ok(a), Ok(b)) => worst = worst.max((a.loglik - b.loglik).abs()),
            _ => return Err(format!("fit failed on dataset {rep}")),
        }
    }
    let msg = format!("max loglik difference {worst:.1e}");
    if worst < 1e-4 { Ok(msg) } else { Err(msg) }
}

/// Random orthogonal matrix, row-major, from Gram-Schmidt on normal draws.
fn random_rotation(dim: usize, rng: &mut RngStream) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < dim {
        let mut v = normals(dim, rng);
        for r in &rows {
            let c: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(x, ri)| *x -= c * ri);
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 1e-6 {
            rows.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    rows.concat()
}

fn apply(q: &[f64], v: &[f64]) -> Vec<f64> {
    let dim = v.len();
    (0..dim).map(|i| (0..dim).map(|j| q[i * dim + j] * v[j]).sum()).collect()
}

fn property_invariance() -> Result<String, String> {
    let mut rng = RngStream::new(87, 0);
    let (mut min_lambda, mut lambda_diff, mut mu_diff, mut mismatches) = (f64::INFINITY, 0.0f64, 0.0f64, 0);
    for rep in 0..40 {
        let family = Family::ALL[rep % 2];
        let d = 1 + rep % 5;
        let y1 = cluster_sample(family, d, 2, 80, &mut rng);
        let y2 = cluster_sample(family, d, 2, 60, &mut rng);
        let q = random_rotation(d + 1, &mut rng);
        let (r1, r2) = (y1.rotate(&q), y2.rotate(&q));

        let t = inference::lrt_two_sample(&y1, &y2, family).map_err(|e| e.to_string())?;
        let tr = inference::lrt_two_sample(&r1, &r2, family).map_err(|e| e.to_string())?;
        min_lambda = min_lambda.min(t.lambda).min(tr.lambda);
        lambda_diff = lambda_diff.max((t.lambda - tr.lambda).abs() / t.lambda.max(1.0));

        let f = mle::fit(&y1, family, Algorithm::Nr, FitOptions::default()).map_err(|e| e.to_string())?;
        let fr = mle::fit(&r1, family, Algorithm::Nr, FitOptions::default()).map_err(|e| e.to_string())?;
        mu_diff = mu_diff.max(rel_err(fr.params.mu(), &apply(&q, f.params.mu())));

        let labels: Vec<usize> = (0..y1.n()).map(|i| usize::from(i >= y1.n() / 2)).collect();
        let train = LabeledSample::new(y1.clone(), labels.clone()).unwrap();
        let train_r = LabeledSample::new(r1, labels).unwrap();
        let clf = classify::train(&train, family).map_err(|e| e.to_string())?;
        let clf_r = classify::train(&train_r, family).map_err(|e| e.to_string())?;
        let a = classify::predict_all(&clf, &y2).unwrap();
        let b = classify::predict_all(&clf_r, &r2).unwrap();
        mismatches += a.iter().zip(&b).filter(|(x, y)| x != y).count();
    }
    let msg = format!(
        "min lambda {min_lambda:.2e}, lambda change {lambda_diff:.1e}, mu change {mu_diff:.1e}, {mismatches} label changes"
    );
    if min_lambda >= 0.0 && lambda_diff < 1e-4 && mu_diff < 1e-4 && mismatches == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

type Property = fn() -> Result<String, String>;

fn criterion_8() -> Verdict {
    let parts: [(&str, Property); 7] = [
        ("a", property_derivatives),
        ("b", property_fisher),
        ("c", property_normalization),
        ("d", property_samplers),
        ("e", property_em),
        ("f", property_algorithms),
        ("g", property_invariance),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (tag, f) in parts {
        match f() {
            Ok(m) => details.push(format!("({tag}) {m}")),
            Err(m) => {
                ok = false;
                details.push(format!("({tag}) FAILED {m}"));
            }
        }
    }
    check(ok, details.join("; "))
}

fn criterion_9() -> Verdict {
    let mut rng = RngStream::new(91, 0);
    let mut ratios = Vec::new();
    for family in Family::ALL {
        let p = SphericalParams::from_direction(family, &UnitVector::basis(3, 0), 0.8).unwrap();
        let y = sampling::sample(&p, 20_000, &mut rng).unwrap();
        ratios.push(bench::time_algorithms(&y, family, 7).expect("timing").hybrid_over_nr());
    }
    let p = SphericalParams::from_direction(Family::Sc, &UnitVector::basis(7, 0), 0.8).unwrap();
    let y = sampling::sample(&p, 10_000, &mut rng).unwrap();
    let pkb_sc = bench::pkb_over_sc(&y, Algorithm::Nr, 7).expect("timing");
    check(
        ratios.iter().all(|&r| r > 1.0) && pkb_sc > 1.0,
        format!("hybrid/NR SC {:.2}, PKB {:.2}; PKB/SC NR {pkb_sc:.2}", ratios[0], ratios[1]),
    )
}

fn main() {
    // `cargo test -- <filter>` and `--list` are passed through; honour `--list`
    // so test discovery tools see one entry.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: [fn() -> Verdict; 9] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
    ];
    let mut failed = 0;
    println!("\nacceptance report");
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = c();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {}: {tag} [{secs:.1}s] {detail}", i + 1);
    }
    if failed > 0 && std::env::var_os("SCPKB_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
