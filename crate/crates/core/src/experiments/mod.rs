//! Seeded Monte Carlo drivers. Each experiment reads an
//! [`ExperimentConfig`], runs its trials on a bounded worker pool and returns
//! an [`ExperimentReport`] whose bytes depend only on the config.
//!
//! Trial `t` of sweep cell `c` draws from `RngStream::new(master_seed, s)`
//! with a stream index `s` fixed by the experiment (documented in the
//! report). Per-trial results are gathered in trial order before any
//! reduction, so the worker count never changes the output.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub mod config;
pub mod flat;
pub mod report;
pub mod suites;

mod concentration;
mod esd;
mod flatcheck;
mod girko_run;
mod locallaw;
mod noholes;
mod pmpm;
mod smallball;
mod ssv;
mod traces;

pub use concentration::{lipschitz_bound, run_concentration};
pub use config::{ExperimentConfig, ExperimentKind};
pub use esd::run_esd;
pub use flat::{bimodal_locate, flat_distance, flat_distance_exact, BimodalOutcome, FlatDistance, VectorProbe};
pub use flatcheck::run_flatcheck;
pub use girko_run::run_girko;
pub use locallaw::{run_locallaw, run_loop_residual};
pub use noholes::{edge_count_masks, run_noholes};
pub use pmpm::{pmpm_entries, pmpm_exact, run_pmpm, PmpmExact};
pub use report::{Comparison, Criterion, ExperimentReport, Provenance, Table};
pub use smallball::{exact_probability, run_smallball};
pub use ssv::{run_ssv, ssv_trial, SsvTrial};
pub use traces::run_traces;

/// Execution options that must not influence results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker count; `None` uses the available parallelism.
    pub threads: Option<usize>,
}

/// Validates `cfg` and runs the experiment it names.
pub fn run(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = opts.threads {
        if k == 0 {
            return Err(Error::config("threads must be at least 1"));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let mut report = pool.install(|| dispatch(cfg))?;
    report.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    Ok(report)
}

fn dispatch(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.kind {
        ExperimentKind::Esd => run_esd(cfg),
        ExperimentKind::Locallaw => run_locallaw(cfg),
        ExperimentKind::Loopres => run_loop_residual(cfg),
        ExperimentKind::Ssv => run_ssv(cfg),
        ExperimentKind::Traces => run_traces(cfg),
        ExperimentKind::Noholes => run_noholes(cfg),
        ExperimentKind::Concentration => run_concentration(cfg),
        ExperimentKind::Smallball => run_smallball(cfg),
        ExperimentKind::Pmpm => run_pmpm(cfg),
        ExperimentKind::Girko => run_girko(cfg),
        ExperimentKind::Flatcheck => run_flatcheck(cfg),
    }
}

/// Maps `f` over `0..count` on the current pool. Results come back in index
/// order; the error reported is the one with the smallest index.
pub(crate) fn par_trials<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let out: Vec<Result<T>> = (0..count).into_par_iter().map(f).collect();
    out.into_iter().collect()
}

pub(crate) mod stats {
    use num_complex::Complex64;

    pub fn mean(xs: &[f64]) -> f64 {
        if xs.is_empty() {
            return f64::NAN;
        }
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn sample_variance(xs: &[f64]) -> f64 {
        if xs.len() < 2 {
            return 0.0;
        }
        let m = mean(xs);
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
    }

    /// Unbiased estimate of `E|X - EX|²` for complex samples.
    pub fn complex_variance(xs: &[Complex64]) -> f64 {
        if xs.len() < 2 {
            return 0.0;
        }
        let m = xs.iter().sum::<Complex64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).norm_sqr()).sum::<f64>() / (xs.len() - 1) as f64
    }

    /// Standard error of the mean.
    pub fn std_error(xs: &[f64]) -> f64 {
        if xs.is_empty() {
            return f64::NAN;
        }
        (sample_variance(xs) / xs.len() as f64).sqrt()
    }

    /// Standard deviation of a Bernoulli(`p`) frequency over `n` draws.
    pub fn bernoulli_sigma(p: f64, n: usize) -> f64 {
        (p * (1.0 - p) / n.max(1) as f64).sqrt()
    }

    /// Quantile with linear interpolation between order statistics.
    pub fn quantile(xs: &[f64], q: f64) -> f64 {
        if xs.is_empty() {
            return f64::NAN;
        }
        let mut v = xs.to_vec();
        v.sort_unstable_by(f64::total_cmp);
        let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }

    pub fn median(xs: &[f64]) -> f64 {
        quantile(xs, 0.5)
    }

    pub fn max(xs: &[f64]) -> f64 {
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(xs: &[f64]) -> f64 {
        xs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Least-squares slope of `y` on `x`.
    pub fn slope(x: &[f64], y: &[f64]) -> f64 {
        let mx = mean(x);
        let my = mean(y);
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        sxy / sxx
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_trials_keeps_order_and_first_error() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let v = pool.install(|| par_trials(100, |i| Ok(i * i))).unwrap();
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
        let e = pool
            .install(|| {
                par_trials(100, |i| {
                    if i % 30 == 29 {
                        Err(Error::domain(format!("bad {i}")))
                    } else {
                        Ok(i)
                    }
                })
            })
            .unwrap_err();
        assert_eq!(e, Error::domain("bad 29"));
    }

    #[test]
    fn zero_threads_is_rejected() {
        let cfg = ExperimentConfig::default_for(ExperimentKind::Traces);
        assert!(run(&cfg, RunOptions { threads: Some(0) }).is_err());
    }
}
