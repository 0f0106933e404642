//! Validation of the flat-distance heuristic and the bimodal locator on
//! synthetic vector families.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use super::config::ExperimentConfig;
use super::flat::{bimodal_locate, flat_distance, flat_distance_exact, min_pair_distance, BimodalOutcome, VectorProbe};
use super::par_trials;
use super::report::{Comparison, Criterion, ExperimentReport, Provenance, Table};
use crate::error::{Error, Result};
use crate::permmat::RngStream;

/// Largest `n` at which the exhaustive support oracle is run.
pub const ORACLE_LIMIT: usize = 12;

fn gaussian(rng: &mut RngStream) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

/// A vector from a named family, before normalisation.
fn family_vector(family: &str, n: usize, rng: &mut RngStream) -> Result<Vec<Complex64>> {
    Ok(match family {
        "random" => (0..n).map(|_| gaussian(rng)).collect(),
        "two_level" => {
            let low = gaussian(rng);
            let high = low + gaussian(rng) * 3.0;
            (0..n)
                .map(|_| {
                    let base = if rng.uniform() < 0.5 { low } else { high };
                    base + gaussian(rng) * 0.05
                })
                .collect()
        }
        "spiky" => {
            let mut v: Vec<Complex64> = (0..n).map(|_| gaussian(rng) * 0.1).collect();
            for _ in 0..(n / 5).max(1) {
                let k = rng.below(n as u64) as usize;
                v[k] += gaussian(rng) * 5.0;
            }
            v
        }
        other => return Err(Error::config(format!("unknown flat family {other:?}"))),
    })
}

struct FlatTrial {
    heuristic: f64,
    exact: Option<f64>,
    centred: f64,
    outcome: &'static str,
    ratio: Option<f64>,
    pair_ok: bool,
}

pub fn run_flatcheck(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (n, m, trials) = (cfg.n, cfg.m, cfg.trials);
    let tol = cfg.threshold("oracle_tol");
    let mut table = Table::new(&[
        "family",
        "trial",
        "heuristic_rho",
        "exact_rho",
        "bimodal",
        "j2_ratio",
        "pairs_verified",
    ]);
    let mut agree = 0usize;
    let mut compared = 0usize;
    let mut bound_violations = 0usize;
    let mut pair_failures = 0usize;
    let mut found = 0usize;
    for (fi, family) in cfg.families.iter().enumerate() {
        let records = par_trials(trials, |t| {
            let mut rng = RngStream::new(cfg.master_seed, (fi * trials + t) as u64);
            let probe = VectorProbe::new(family_vector(family, n, &mut rng)?)?;
            let fit = flat_distance(&probe, m)?;
            let exact = if n <= ORACLE_LIMIT {
                Some(flat_distance_exact(&probe, m)?.rho)
            } else {
                None
            };
            let u = probe.values();
            let mean = u.iter().sum::<Complex64>() / n as f64;
            let centred = u.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>().sqrt();
            let (outcome, ratio, pair_ok) = match bimodal_locate(&probe, m, cfg.rho)? {
                BimodalOutcome::Flat(_) => ("flat", None, true),
                BimodalOutcome::NotFound(_) => ("not_found", None, true),
                BimodalOutcome::Found(b, _) => {
                    let ok = min_pair_distance(u, &b.j1, &b.j2) >= b.gap && b.j1.len() >= m;
                    ("found", Some(b.ratio), ok)
                }
            };
            Ok(FlatTrial {
                heuristic: fit.rho,
                exact,
                centred,
                outcome,
                ratio,
                pair_ok,
            })
        })?;
        for (t, r) in records.iter().enumerate() {
            if let Some(e) = r.exact {
                compared += 1;
                agree += usize::from(r.heuristic - e <= tol);
                bound_violations += usize::from(r.heuristic < e - tol);
            }
            bound_violations += usize::from(r.heuristic > r.centred + tol);
            pair_failures += usize::from(!r.pair_ok);
            found += usize::from(r.outcome == "found");
            table.push(vec![
                json!(family),
                json!(t),
                json!(r.heuristic),
                json!(r.exact),
                json!(r.outcome),
                json!(r.ratio),
                json!(r.pair_ok),
            ]);
        }
    }
    let mut report = ExperimentReport::new(cfg, "trial t of family k uses stream k*trials + t", table);
    report.summarize("bimodal_found", found);
    report.summarize("oracle_cases", compared);
    report.check(Criterion::new(
        "upper_bound_violations",
        bound_violations as f64,
        Comparison::Equal,
        0.0,
        Provenance::Trivial,
    ));
    report.check(Criterion::new(
        "bimodal_pair_check_failures",
        pair_failures as f64,
        Comparison::Equal,
        0.0,
        Provenance::Derived,
    ));
    if compared > 0 {
        report.check(Criterion::new(
            "oracle_agreement_fraction",
            agree as f64 / compared as f64,
            Comparison::AtLeast,
            cfg.threshold("oracle_agreement"),
            Provenance::Derived,
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ExperimentKind;

    #[test]
    fn default_families_pass() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::Flatcheck);
        cfg.trials = 150;
        let r = run_flatcheck(&cfg).unwrap();
        assert_eq!(r.trials.rows.len(), 450);
        assert!(r.all_passed(), "{}", r.criteria_lines());
    }

    #[test]
    fn unknown_family_is_a_config_error() {
        let mut rng = RngStream::new(1, 1);
        assert!(matches!(family_vector("odd", 4, &mut rng), Err(Error::Config(_))));
    }
}
