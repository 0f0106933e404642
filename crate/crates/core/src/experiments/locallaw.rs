//! Local law for `m̃_n(iη)` and the loop-equation residual, swept over `d`
//! and the `η` grid. One singular value decomposition per trial serves every
//! `η`.

use num_complex::Complex64;
use serde_json::json;

use super::config::ExperimentConfig;
use super::report::{Comparison, Criterion, ExperimentReport, Provenance, Table};
use super::{par_trials, stats};
use crate::error::Result;
use crate::limitlaw::{admissibility_margin, locallaw_admissible, locallaw_bound, loop_residual, wtm_infinity};
use crate::permmat::{PermutationSum, RngStream};
use crate::spectral::{build_shifted, singular_values, stieltjes_sym, SingularSpectrum};

const STREAM_RULE: &str = "trial t of d-sweep cell c uses stream c*trials + t";

/// Singular spectra per `d` cell, in sweep order.
fn sample_spectra(cfg: &ExperimentConfig) -> Result<Vec<(usize, Vec<SingularSpectrum>)>> {
    let trials = cfg.trials;
    cfg.d_sweep()
        .into_iter()
        .enumerate()
        .map(|(cell, d)| {
            let spectra = par_trials(trials, |t| {
                let stream = (cell * trials + t) as u64;
                let s = PermutationSum::sample(cfg.n, d, &mut RngStream::new(cfg.master_seed, stream))?;
                singular_values(&build_shifted(&s, cfg.z))
            })?;
            Ok((d, spectra))
        })
        .collect()
}

fn xi(eta: f64) -> Complex64 {
    Complex64::new(0.0, eta)
}

/// `max/min` of the positive entries; infinite if any entry is not positive.
fn spread(xs: &[f64]) -> f64 {
    if xs.is_empty() || xs.iter().any(|&x| !(x > 0.0)) {
        return f64::INFINITY;
    }
    stats::max(xs) / stats::min(xs)
}

pub fn run_locallaw(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let n = cfg.n as f64;
    let cells = sample_spectra(cfg)?;
    let mut table = Table::new(&[
        "d",
        "trial",
        "eta",
        "m_n_im",
        "m_inf_im",
        "abs_diff",
        "envelope",
        "eta3_diff",
    ]);
    // medians[cell][k] for eta_grid[k]; None when inadmissible
    let mut medians: Vec<Vec<Option<f64>>> = Vec::new();
    let mut skipped = Vec::new();
    let mut within = 0usize;
    let mut total = 0usize;
    for (d, spectra) in &cells {
        let df = *d as f64;
        let mut row = Vec::new();
        for &eta in &cfg.eta_grid {
            if !locallaw_admissible(n, df, eta, cfg.varpi) {
                skipped.push(json!({"d": d, "eta": eta, "margin": admissibility_margin(n, df, eta)}));
                row.push(None);
                continue;
            }
            let limit = wtm_infinity(cfg.z, eta)?.m_tilde_inf;
            let envelope = locallaw_bound(n, df, eta, cfg.c);
            let mut diffs = Vec::with_capacity(spectra.len());
            for (t, spec) in spectra.iter().enumerate() {
                let m = stieltjes_sym(spec, xi(eta))?;
                let diff = (m - limit).norm();
                within += usize::from(diff <= envelope);
                total += 1;
                diffs.push(diff);
                table.push(vec![
                    json!(d),
                    json!(t),
                    json!(eta),
                    json!(m.im),
                    json!(limit.im),
                    json!(diff),
                    json!(envelope),
                    json!(eta.powi(3) * diff),
                ]);
            }
            row.push(Some(stats::median(&diffs)));
        }
        medians.push(row);
    }

    let mut report = ExperimentReport::new(cfg, STREAM_RULE, table);
    let d_values: Vec<usize> = cells.iter().map(|(d, _)| *d).collect();
    report.summarize(
        "medians",
        d_values
            .iter()
            .zip(&medians)
            .map(|(d, row)| {
                let per_eta: Vec<_> = cfg
                    .eta_grid
                    .iter()
                    .zip(row)
                    .map(|(eta, m)| json!({"eta": eta, "median_abs_diff": m}))
                    .collect();
                json!({"d": d, "per_eta": per_eta})
            })
            .collect::<Vec<_>>(),
    );
    report.summarize("skipped_inadmissible", skipped.clone());
    report.summarize(
        "within_envelope_fraction",
        if total > 0 {
            within as f64 / total as f64
        } else {
            f64::NAN
        },
    );
    if !skipped.is_empty() {
        report.notes.push(format!(
            "{} (d, eta) cells lie outside the admissible domain and were skipped",
            skipped.len()
        ));
    }

    if let (Some(fd), Some(fe)) = (cfg.focus_d, cfg.focus_eta) {
        let ci = d_values.iter().position(|&d| d == fd);
        let ei = cfg.eta_grid.iter().position(|&e| e == fe);
        let observed = match (ci, ei) {
            (Some(c), Some(e)) => medians[c][e].unwrap_or(f64::NAN),
            _ => f64::NAN,
        };
        report.check(Criterion::new(
            format!("median_abs_diff_d{fd}_eta{fe}"),
            observed,
            Comparison::AtMost,
            cfg.threshold("median_diff"),
            Provenance::Pilot,
        ));
    }

    if d_values.len() >= 2 {
        let mut non_monotone = 0usize;
        for k in 0..cfg.eta_grid.len() {
            let col: Vec<Option<f64>> = medians.iter().map(|row| row[k]).collect();
            if col.iter().any(Option::is_none) {
                continue;
            }
            let col: Vec<f64> = col.into_iter().flatten().collect();
            non_monotone += usize::from(col.windows(2).any(|w| w[1] >= w[0]));
        }
        report.check(Criterion::new(
            "etas_not_strictly_decreasing_in_d",
            non_monotone as f64,
            Comparison::Equal,
            0.0,
            Provenance::Paper,
        ));
    }

    let spreads: Vec<f64> = medians
        .iter()
        .map(|row| {
            let scaled: Vec<f64> = cfg
                .eta_grid
                .iter()
                .zip(row)
                .filter_map(|(eta, m)| m.map(|m| eta.powi(3) * m))
                .collect();
            spread(&scaled)
        })
        .collect();
    report.summarize(
        "eta3_spread_per_d",
        d_values
            .iter()
            .zip(&spreads)
            .map(|(d, s)| json!({"d": d, "spread": s}))
            .collect::<Vec<_>>(),
    );
    let spread_observed = match cfg.focus_d.and_then(|fd| d_values.iter().position(|&d| d == fd)) {
        Some(c) => spreads[c],
        None => stats::max(&spreads),
    };
    if cfg.eta_grid.len() >= 2 {
        report.check(Criterion::new(
            "eta3_median_spread",
            spread_observed,
            Comparison::Below,
            cfg.threshold("eta3_spread"),
            Provenance::Pilot,
        ));
    }
    Ok(report)
}

pub fn run_loop_residual(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let n = cfg.n as f64;
    let cells = sample_spectra(cfg)?;
    let mut table = Table::new(&["d", "trial", "eta", "residual", "envelope", "ratio"]);
    let mut control: f64 = 0.0;
    let mut worst_q90_ratio: f64 = 0.0;
    let mut worst_slope: f64 = 0.0;
    let mut per_d = Vec::new();
    for (d, spectra) in &cells {
        let df = *d as f64;
        let rate = df.powf(-0.5).max(n.ln() * n.powf(-0.25));
        let mut log_eta = Vec::new();
        let mut log_scaled = Vec::new();
        let mut cells_json = Vec::new();
        for &eta in &cfg.eta_grid {
            let limit = wtm_infinity(cfg.z, eta)?.m_tilde_inf;
            control = control.max(loop_residual(limit, xi(eta), cfg.z).norm());
            let mut residuals = Vec::new();
            let mut envelopes = Vec::new();
            for (t, spec) in spectra.iter().enumerate() {
                let m = stieltjes_sym(spec, xi(eta))?;
                let res = loop_residual(m, xi(eta), cfg.z).norm();
                let env = cfg.c * rate * (1.0 + m.norm()) / eta.powi(3);
                table.push(vec![
                    json!(d),
                    json!(t),
                    json!(eta),
                    json!(res),
                    json!(env),
                    json!(res / env),
                ]);
                residuals.push(res);
                envelopes.push(env);
            }
            let q90 = stats::quantile(&residuals, 0.9);
            let ratio = q90 / stats::median(&envelopes);
            worst_q90_ratio = worst_q90_ratio.max(ratio);
            let med = stats::median(&residuals);
            if med > 0.0 {
                log_eta.push(eta.ln());
                log_scaled.push((eta.powi(3) * med).ln());
            }
            cells_json
                .push(json!({"eta": eta, "q90_residual": q90, "median_residual": med, "q90_over_envelope": ratio}));
        }
        let slope = if log_eta.len() >= 2 {
            stats::slope(&log_eta, &log_scaled)
        } else {
            0.0
        };
        worst_slope = worst_slope.max(slope.abs());
        per_d.push(json!({"d": d, "eta3_loglog_slope": slope, "per_eta": cells_json}));
    }
    let mut report = ExperimentReport::new(cfg, STREAM_RULE, table);
    report.summarize("per_d", per_d);
    report.summarize("control_residual", control);
    report.check(Criterion::new(
        "control_residual_at_limit",
        control,
        Comparison::AtMost,
        cfg.threshold("control"),
        Provenance::Trivial,
    ));
    report.check(Criterion::new(
        "q90_residual_over_envelope",
        worst_q90_ratio,
        Comparison::AtMost,
        cfg.threshold("q90_ratio"),
        Provenance::Pilot,
    ));
    if cfg.eta_grid.len() >= 2 {
        report.check(Criterion::new(
            "eta3_residual_loglog_slope",
            worst_slope,
            Comparison::AtMost,
            cfg.threshold("eta3_slope"),
            Provenance::Pilot,
        ));
    }
    Ok(report)
}
