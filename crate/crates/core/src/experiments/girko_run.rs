//! Hermitization pipeline end to end: log-potential field, Laplacian density,
//! the bump-function identity and the Ginibre replacement comparison.

use std::f64::consts::PI;

use serde_json::json;

use super::config::ExperimentConfig;
use super::report::{Attachment, Comparison, Criterion, ExperimentReport, Provenance, Table};
use super::stats;
use crate::error::Result;
use crate::girko::{
    bump_consistency, laplacian_density, log_potential_field, replacement_compare, sample_ginibre, Bump, ComplexGrid,
    PotentialField,
};
use crate::permmat::{PermutationSum, RngStream};

/// Worst error of the discrete Laplacian on `q(z) = a|z|² + b Re z + c Im z + e`,
/// whose density is exactly `4a/(2π)` everywhere.
pub fn stencil_error(grid: ComplexGrid) -> f64 {
    let (a, b, c, e) = (0.7, -0.3, 0.2, 1.1);
    let field = PotentialField::from_fn(grid, |z| a * z.norm_sqr() + b * z.re + c * z.im + e);
    let exact = 4.0 * a / (2.0 * PI);
    laplacian_density(&field)
        .values
        .iter()
        .flatten()
        .flatten()
        .map(|v| (v - exact).abs())
        .fold(0.0, f64::max)
}

pub fn run_girko(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let grid: ComplexGrid = cfg.grid.into();
    let mut table = Table::new(&[
        "trial",
        "density_mass",
        "clipped_nodes",
        "bump_eigenvalue_side",
        "bump_potential_side",
        "bump_abs_error",
        "replacement_sup_abs",
        "replacement_mean_abs",
    ]);
    let mut fields = Vec::new();
    let mut masses = Vec::new();
    let mut bump_errors = Vec::new();
    let mut replacement = Vec::new();
    // trials run one after another; each node loop is already parallel
    for t in 0..cfg.trials {
        let s = PermutationSum::sample(cfg.n, cfg.d, &mut RngStream::new(cfg.master_seed, 2 * t as u64))?;
        let field = log_potential_field(&s, grid, cfg.clip)?;
        let density = laplacian_density(&field);
        let mass = density.total_mass();
        let clipped = field.clip_flags.iter().flatten().filter(|&&c| c).count();
        let bump = match cfg.bump {
            Some(b) => Some(bump_consistency(
                &s,
                Bump {
                    center: b.center,
                    radius: b.radius,
                },
                b.resolution,
                cfg.clip,
            )?),
            None => None,
        };
        let repl = if cfg.compare_ginibre {
            let g = sample_ginibre(cfg.n, &mut RngStream::new(cfg.master_seed, 2 * t as u64 + 1))?;
            let mut cmp = replacement_compare(&s, &g, grid)?;
            cmp.summarize(cfg.replacement_radius);
            Some(cmp)
        } else {
            None
        };
        masses.push(mass);
        if let Some(b) = &bump {
            bump_errors.push(b.abs_error());
        }
        if let Some(r) = &repl {
            replacement.push(r.mean_abs);
        }
        table.push(vec![
            json!(t),
            json!(mass),
            json!(clipped),
            json!(bump.map(|b| b.eigenvalue_side)),
            json!(bump.map(|b| b.potential_side)),
            json!(bump.map(|b| b.abs_error())),
            json!(repl.as_ref().map(|r| r.sup_abs)),
            json!(repl.as_ref().map(|r| r.mean_abs)),
        ]);
        fields.push(field);
    }
    let mut report = ExperimentReport::new(
        cfg,
        "trial t samples S from stream 2t and the Ginibre baseline from stream 2t + 1",
        table,
    );
    let averaged = PotentialField::average(&fields)?;
    report.attachments.push(Attachment {
        file_name: "girko_potential.csv".into(),
        contents: averaged.to_csv(),
    });
    report.attachments.push(Attachment {
        file_name: "girko_density.csv".into(),
        contents: laplacian_density(&averaged).to_csv(),
    });

    let stencil = stencil_error(grid);
    report.summarize("stencil_max_error", stencil);
    report.check(Criterion::new(
        "laplacian_stencil_on_quadratic",
        stencil,
        Comparison::AtMost,
        cfg.threshold("stencil"),
        Provenance::Trivial,
    ));
    let mass_dev = masses.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
    report.summarize("mean_density_mass", stats::mean(&masses));
    report.check(Criterion::new(
        "density_mass_deviation",
        mass_dev,
        Comparison::AtMost,
        cfg.threshold("mass"),
        Provenance::Pilot,
    ));
    if !bump_errors.is_empty() {
        report.check(Criterion::new(
            "bump_identity_abs_error",
            stats::max(&bump_errors),
            Comparison::AtMost,
            cfg.threshold("bump_error"),
            Provenance::Derived,
        ));
    }
    if !replacement.is_empty() {
        report.check(Criterion::new(
            "replacement_mean_abs",
            stats::max(&replacement),
            Comparison::AtMost,
            cfg.threshold("replacement_mean_abs"),
            Provenance::Pilot,
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{BumpSpec, ExperimentKind, GridSpec};
    use num_complex::Complex64;

    #[test]
    fn stencil_is_exact_on_quadratics() {
        let grid = ComplexGrid::new(Complex64::new(0.2, -0.1), 1.3, 41).unwrap();
        assert!(stencil_error(grid) < 1e-10);
    }

    #[test]
    fn small_pipeline_runs() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::Girko);
        cfg.n = 16;
        cfg.d = 4;
        cfg.grid = GridSpec {
            center: Complex64::new(0.0, 0.0),
            half_width: 1.5,
            resolution: 12,
        };
        cfg.bump = Some(BumpSpec {
            center: Complex64::new(0.0, 0.0),
            radius: 0.8,
            resolution: 20,
        });
        cfg.compare_ginibre = true;
        let r = run_girko(&cfg).unwrap();
        assert_eq!(r.attachments.len(), 2);
        assert!(r.criterion("laplacian_stencil_on_quadratic").unwrap().passed);
        assert!(r.criterion("bump_identity_abs_error").is_some());
        assert!(r.criterion("replacement_mean_abs").is_some());
    }
}
