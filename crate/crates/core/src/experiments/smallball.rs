//! Small-ball probabilities of Rademacher sums `w + Σ ξ_j v_j`.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use super::config::{format_complex, ExperimentConfig, VectorSpec};
use super::par_trials;
use super::report::{Comparison, Criterion, ExperimentReport, Provenance, Table};
use super::stats;
use crate::error::{Error, Result};
use crate::permmat::RngStream;

/// Largest length for which [`exact_probability`] enumerates sign patterns.
pub const ENUMERATION_LIMIT: usize = 20;

/// Rounding slack on the closed ball, so that lattice points lying on the
/// boundary are counted alike by every route.
const BOUNDARY_SLACK: f64 = 1e-12;

fn in_ball(x: Complex64, r: f64) -> bool {
    x.norm() <= r + BOUNDARY_SLACK
}

/// Stream used to draw the `random` family, kept apart from trial streams.
const FAMILY_STREAM: u64 = u64::MAX;

fn normalised(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn resolve(spec: &VectorSpec, n: usize, seed: u64) -> Result<(String, Vec<f64>)> {
    let name = match spec {
        VectorSpec::Explicit(v) => return Ok((format!("explicit[{}]", v.len()), v.clone())),
        VectorSpec::Family(name) => name.clone(),
    };
    let v = match name.as_str() {
        "unit" => (0..n).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect(),
        "flat" => vec![1.0; n],
        "geometric" => (0..n).map(|j| 0.7f64.powi(j as i32)).collect(),
        "random" => {
            let mut rng = RngStream::new(seed, FAMILY_STREAM);
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
        other => return Err(Error::config(format!("unknown vector family {other:?}"))),
    };
    Ok((name, normalised(v)))
}

/// `ln C(n, k)`.
fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Exact `P(|w + Σ ξ_j v_j| ≤ r)`: by the binomial law when all `|v_j|` are
/// equal, by enumerating all `2^n` sign patterns when `n ≤ 20`, otherwise
/// unavailable.
pub fn exact_probability(v: &[f64], w: Complex64, r: f64) -> Option<f64> {
    let n = v.len();
    if n == 0 {
        return None;
    }
    let a = v[0].abs();
    if v.iter().all(|x| x.abs() == a) {
        // Σ ξ_j v_j has the law of a(2K - n) with K ~ Bin(n, 1/2)
        let ln_half = -(n as f64) * std::f64::consts::LN_2;
        let p = (0..=n)
            .filter(|&k| in_ball(w + a * (2.0 * k as f64 - n as f64), r))
            .map(|k| (ln_binomial(n, k) + ln_half).exp())
            .sum::<f64>();
        // an empty sum is -0.0
        return Some(p + 0.0);
    }
    if n > ENUMERATION_LIMIT {
        return None;
    }
    let hits = (0u32..(1 << n))
        .filter(|bits| {
            let x: f64 = v
                .iter()
                .enumerate()
                .map(|(j, vj)| if bits >> j & 1 == 1 { *vj } else { -vj })
                .sum();
            in_ball(w + x, r)
        })
        .count();
    Some(hits as f64 / (1u64 << n) as f64)
}

/// `p ‖v‖₂ / (r + ‖v‖∞)`.
fn implied_constant(p: f64, v: &[f64], r: f64) -> f64 {
    let l2 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let linf = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    p * l2 / (r + linf)
}

pub fn run_smallball(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let trials = cfg.trials;
    let mut table = Table::new(&[
        "vector",
        "shift",
        "radius",
        "p_hat",
        "p_exact",
        "sigma",
        "z_score",
        "implied_constant",
    ]);
    let mut worst_z: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    let mut compared = 0usize;
    for (vi, spec) in cfg.vectors.iter().enumerate() {
        let (name, v) = resolve(spec, cfg.n, cfg.master_seed)?;
        if v.iter().all(|&x| x == 0.0) {
            return Err(Error::config(format!("vector {name} is zero")));
        }
        let sums = par_trials(trials, |t| {
            let mut rng = RngStream::new(cfg.master_seed, (vi * trials + t) as u64);
            Ok(v.iter().map(|vj| rng.rademacher() * vj).sum::<f64>())
        })?;
        for &w in &cfg.shifts {
            for &r in &cfg.radii {
                let hits = sums.iter().filter(|&&x| in_ball(w + x, r)).count();
                let p_hat = hits as f64 / trials as f64;
                let exact = exact_probability(&v, w, r);
                let (sigma, z) = match exact {
                    Some(p) => {
                        let sigma = stats::bernoulli_sigma(p, trials);
                        let dev = (p_hat - p).abs();
                        let z = if dev == 0.0 {
                            0.0
                        } else if sigma > 0.0 {
                            dev / sigma
                        } else {
                            f64::INFINITY
                        };
                        compared += 1;
                        (Some(sigma), Some(z))
                    }
                    None => (None, None),
                };
                worst_z = worst_z.max(z.unwrap_or(0.0));
                let c_hat = implied_constant(p_hat, &v, r);
                worst_c = worst_c.max(c_hat);
                table.push(vec![
                    json!(name),
                    json!(format_complex(w)),
                    json!(r),
                    json!(p_hat),
                    json!(exact),
                    json!(sigma),
                    json!(z),
                    json!(c_hat),
                ]);
            }
        }
    }
    let mut report = ExperimentReport::new(
        cfg,
        "trial t of vector k uses stream k*trials + t; the random family uses stream 2^64 - 1",
        table,
    );
    report.summarize("cells_with_exact_reference", compared);
    report.summarize("max_implied_constant", worst_c);
    report.summarize("max_z_score", worst_z);
    if compared > 0 {
        report.notes.push(format!(
            "the {}-sigma rule is applied to each of {compared} cells without multiplicity correction",
            cfg.threshold("sigmas")
        ));
        report.check(Criterion::new(
            "max_z_score_vs_exact",
            worst_z,
            Comparison::AtMost,
            cfg.threshold("sigmas"),
            Provenance::Derived,
        ));
    }
    report.check(Criterion::new(
        "max_implied_constant",
        worst_c,
        Comparison::AtMost,
        cfg.threshold("implied_constant"),
        Provenance::Pilot,
    ));
    Ok(report)
}
