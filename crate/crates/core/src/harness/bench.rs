use std::hint::black_box;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::mle::{fit, Algorithm, FitOptions};
use crate::sphere::{DirectionalSample, Family};

/// Median wall time of `reps` calls after one warm-up call.
pub fn median_time<T>(reps: usize, mut f: impl FnMut() -> T) -> Duration {
    black_box(f());
    let mut times: Vec<Duration> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            black_box(f());
            t.elapsed()
        })
        .collect();
    times.sort();
    times[times.len() / 2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleTimings {
    pub nr: Duration,
    pub hybrid: Duration,
}

impl MleTimings {
    /// Hybrid time over NR time; above 1 favours NR.
    pub fn hybrid_over_nr(&self) -> f64 {
        self.hybrid.as_secs_f64() / self.nr.as_secs_f64()
    }
}

/// Times both fitting algorithms of one family on the same data. Fails if
/// either fit fails.
pub fn time_algorithms(y: &DirectionalSample, family: Family, reps: usize) -> Result<MleTimings> {
    let opts = FitOptions::default();
    fit(y, family, Algorithm::Nr, opts)?;
    fit(y, family, Algorithm::Hybrid, opts)?;
    Ok(MleTimings {
        nr: median_time(reps, || fit(y, family, Algorithm::Nr, opts)),
        hybrid: median_time(reps, || fit(y, family, Algorithm::Hybrid, opts)),
    })
}

/// NR fit time of the PKB model over that of the SC model on the same data;
/// above 1 means SC is faster.
pub fn pkb_over_sc(y: &DirectionalSample, algorithm: Algorithm, reps: usize) -> Result<f64> {
    let opts = FitOptions::default();
    fit(y, Family::Sc, algorithm, opts)?;
    fit(y, Family::Pkb, algorithm, opts)?;
    let sc = median_time(reps, || fit(y, Family::Sc, algorithm, opts));
    let pkb = median_time(reps, || fit(y, Family::Pkb, algorithm, opts));
    Ok(pkb.as_secs_f64() / sc.as_secs_f64())
}
