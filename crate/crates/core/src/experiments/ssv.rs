//! Smallest singular value of `S/sqrt(d) - z` over a sweep in `n`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::ExperimentConfig;
use super::report::{Comparison, Criterion, ExperimentReport, Provenance, Table};
use super::{par_trials, stats};
use crate::error::Result;
use crate::permmat::{PermutationSum, RngStream};
use crate::spectral::{build_shifted, smallest_singular};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsvTrial {
    pub svd: f64,
    pub inverse_iteration: Option<f64>,
    pub relative_mismatch: Option<f64>,
    /// `s_n` is zero to working precision; the cross-check is skipped.
    pub singular: bool,
}

/// `s_n(zI - S/sqrt(d))` with its inverse-iteration cross-check.
pub fn ssv_trial(s: &PermutationSum, z: Complex64) -> Result<SsvTrial> {
    let a = build_shifted(s, z);
    let r = smallest_singular(&a)?;
    Ok(SsvTrial {
        svd: r.svd,
        inverse_iteration: r.inverse_iteration,
        relative_mismatch: r.relative_mismatch(),
        singular: r.inverse_iteration.is_none(),
    })
}

pub fn run_ssv(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let sweep = cfg.n_sweep();
    let trials = cfg.trials;
    let mut table = Table::new(&[
        "n",
        "trial",
        "s_min",
        "inverse_iteration",
        "relative_mismatch",
        "singular",
    ]);
    let mut all_min = f64::INFINITY;
    let mut worst_mismatch: f64 = 0.0;
    let mut per_n = Vec::new();
    for (cell, &n) in sweep.iter().enumerate() {
        let records = par_trials(trials, |t| {
            let stream = (cell * trials + t) as u64;
            let s = PermutationSum::sample(n, cfg.d, &mut RngStream::new(cfg.master_seed, stream))?;
            ssv_trial(&s, cfg.z)
        })?;
        for (t, r) in records.iter().enumerate() {
            table.push(vec![
                json!(n),
                json!(t),
                json!(r.svd),
                json!(r.inverse_iteration),
                json!(r.relative_mismatch),
                json!(r.singular),
            ]);
            worst_mismatch = worst_mismatch.max(r.relative_mismatch.unwrap_or(0.0));
        }
        let values: Vec<f64> = records.iter().map(|r| r.svd).collect();
        let below: Vec<f64> = cfg
            .ssv_levels
            .iter()
            .map(|&lvl| values.iter().filter(|&&v| v < lvl).count() as f64 / values.len() as f64)
            .collect();
        all_min = all_min.min(stats::min(&values));
        per_n.push(json!({
            "n": n,
            "min": stats::min(&values),
            "q10": stats::quantile(&values, 0.1),
            "median": stats::median(&values),
            "q90": stats::quantile(&values, 0.9),
            "fraction_below": cfg.ssv_levels.iter().zip(&below)
                .map(|(l, f)| json!({"level": l, "fraction": f}))
                .collect::<Vec<_>>(),
            "singular": records.iter().filter(|r| r.singular).count(),
        }));
    }
    let mut report = ExperimentReport::new(cfg, "trial t of sweep cell c uses stream c*trials + t", table);
    report.summarize("per_n", per_n);
    report.summarize("min_over_all", all_min);
    report.summarize("max_relative_mismatch", worst_mismatch);
    report.check(Criterion::new(
        "min_smallest_singular_value",
        all_min,
        Comparison::AtLeast,
        cfg.threshold("floor"),
        Provenance::Pilot,
    ));
    report.check(Criterion::new(
        "svd_inverse_iteration_mismatch",
        worst_mismatch,
        Comparison::AtMost,
        cfg.threshold("crosscheck"),
        Provenance::Derived,
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ExperimentKind;

    #[test]
    fn constructed_singularity_is_flagged() {
        // all identities with d = 4 give S/sqrt(d) = 2I, so z = 2 kills A
        let s = PermutationSum::identities(7, 4).unwrap();
        let r = ssv_trial(&s, Complex64::new(2.0, 0.0)).unwrap();
        assert_eq!(r.svd, 0.0);
        assert!(r.singular);
        assert!(r.relative_mismatch.is_none());
    }

    #[test]
    fn small_sweep_passes() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::Ssv);
        cfg.n_values = vec![20, 40];
        cfg.d = 5;
        cfg.trials = 6;
        let r = run_ssv(&cfg).unwrap();
        assert_eq!(r.trials.rows.len(), 12);
        assert!(r.all_passed(), "{}", r.criteria_lines());
    }
}
