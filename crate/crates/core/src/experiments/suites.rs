//! Deterministic oracle suites: exact identities between independent
//! computational routes, the cubic root solver against a sign scan, and the
//! quick self-test that bundles them with small experiment runs.

use num_complex::Complex64;

use super::config::{ExhaustiveSpec, ExperimentConfig, ExperimentKind, MatrixKind};
use super::report::{Comparison, Criterion, Provenance};
use super::{par_trials, run, RunOptions};
use crate::error::Result;
use crate::limitlaw::{cubic_eval, loop_residual, positive_root, sign_scan, wtm_infinity, CubicParams};
use crate::permmat::{PermutationSum, RngStream};
use crate::spectral::{
    block_resolvent_traces, build_shifted, hermitian_eigenvalues, hermitize, log_abs_det_per_dim, log_potential,
    singular_values, stieltjes_m, stieltjes_sym, DEFAULT_CLIP,
};

fn random_shift(rng: &mut RngStream, radius: f64) -> Complex64 {
    Complex64::from_polar(
        radius * rng.uniform().sqrt(),
        2.0 * std::f64::consts::PI * rng.uniform(),
    )
}

fn random_sum(rng: &mut RngStream, max_n: usize, max_d: usize) -> Result<PermutationSum> {
    let n = 1 + rng.below(max_n as u64) as usize;
    let d = 1 + rng.below(max_d as u64) as usize;
    PermutationSum::sample(n, d, rng)
}

fn exact(name: &str, observed: f64, tol: f64) -> Criterion {
    Criterion::new(name, observed, Comparison::AtMost, tol, Provenance::Derived)
}

/// Identities that hold to rounding error between independent routes.
pub fn exact_identity_suite(seed: u64) -> Result<Vec<Criterion>> {
    let mut out = Vec::new();

    // Hermitization spectrum is {±s_i}
    let herm = par_trials(50, |k| {
        let mut rng = RngStream::new(seed, k as u64);
        let s = random_sum(&mut rng, 64, 8)?;
        let a = build_shifted(&s, random_shift(&mut rng, 1.5));
        let sv = singular_values(&a)?;
        let mut expected: Vec<f64> = sv.s.iter().flat_map(|&x| [x, -x]).collect();
        expected.sort_unstable_by(f64::total_cmp);
        let got = hermitian_eigenvalues(&hermitize(&a))?;
        Ok(got
            .iter()
            .zip(&expected)
            .map(|(g, e)| (g - e).abs())
            .fold(0.0, f64::max))
    })?;
    out.push(exact(
        "hermitization_spectrum",
        herm.into_iter().fold(0.0, f64::max),
        1e-9,
    ));

    // m̃_n(ξ) = ξ m_n(ξ²)
    let sym = par_trials(100, |k| {
        let mut rng = RngStream::new(seed, 1000 + k as u64);
        let s = random_sum(&mut rng, 40, 6)?;
        let spec = singular_values(&build_shifted(&s, random_shift(&mut rng, 1.5)))?;
        let xi = Complex64::new(2.0 * rng.uniform() - 1.0, 0.05 + 2.0 * rng.uniform());
        Ok((stieltjes_sym(&spec, xi)? - xi * stieltjes_m(&spec, xi * xi)?).norm())
    })?;
    out.push(exact(
        "symmetrised_stieltjes_identity",
        sym.into_iter().fold(0.0, f64::max),
        1e-12,
    ));

    // (1/n) Σ log s_i = (1/n) log |det A|
    let logdet = par_trials(50, |k| {
        let mut rng = RngStream::new(seed, 2000 + k as u64);
        let s = random_sum(&mut rng, 40, 6)?;
        let a = build_shifted(&s, random_shift(&mut rng, 1.2));
        let lp = log_potential(&singular_values(&a)?, DEFAULT_CLIP);
        Ok(if lp.clipped {
            0.0
        } else {
            (lp.value - log_abs_det_per_dim(&a.entries)).abs()
        })
    })?;
    out.push(exact(
        "log_potential_vs_lu",
        logdet.into_iter().fold(0.0, f64::max),
        1e-8,
    ));

    // the loop polynomial vanishes at the limit on a 10 x 10 (z, η) grid
    let mut loop_max: f64 = 0.0;
    for i in 0..10 {
        let z = Complex64::from_polar(0.095 * i as f64, 0.7 * i as f64);
        for j in 0..10 {
            let eta = 10f64.powf(-2.0 + 3.0 * j as f64 / 9.0);
            let m = wtm_infinity(z, eta)?.m_tilde_inf;
            loop_max = loop_max.max(loop_residual(m, Complex64::new(0.0, eta), z).norm());
        }
    }
    out.push(exact("loop_residual_at_limit", loop_max, 1e-12));

    // block traces: diagonal average equals m̃_n
    let blocks = par_trials(30, |k| {
        let mut rng = RngStream::new(seed, 3000 + k as u64);
        let s = random_sum(&mut rng, 30, 5)?;
        let z = random_shift(&mut rng, 1.2);
        let xi = Complex64::new(rng.uniform() - 0.5, 0.1 + rng.uniform());
        let t = block_resolvent_traces(&s, z, xi, None)?;
        let m = stieltjes_sym(&singular_values(&build_shifted(&s, z))?, xi)?;
        Ok((t.diagonal_average() - m).norm())
    })?;
    out.push(exact(
        "block_trace_diagonal_average",
        blocks.into_iter().fold(0.0, f64::max),
        1e-10,
    ));
    Ok(out)
}

/// Positive root of the cubic over `cases` random `(δ, η)` against a sign
/// scan of `(0, 10]` with spacing `step`.
pub fn cubic_suite(seed: u64, cases: usize, step: f64) -> Result<Vec<Criterion>> {
    let rows = par_trials(cases, |k| {
        let mut rng = RngStream::new(seed, k as u64);
        let delta = 1.0 - rng.uniform();
        let eta = 10f64.powf(-3.0 + 5.0 * rng.uniform());
        let p = CubicParams::new(delta, eta)?;
        let x = positive_root(&p);
        let (changes, first) = sign_scan(&p, step, 10.0);
        let gap = first.map_or(f64::INFINITY, |f| (f - x).abs());
        Ok((cubic_eval(x, &p).abs(), gap, changes))
    })?;
    let residual = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let gap = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let not_unique = rows.iter().filter(|r| r.2 != 1).count();
    Ok(vec![
        exact("cubic_residual_at_root", residual, 1e-12),
        exact("cubic_root_vs_sign_scan", gap, step.max(1e-6)),
        Criterion::new(
            "cubic_sign_changes_not_one",
            not_unique as f64,
            Comparison::Equal,
            0.0,
            Provenance::Paper,
        ),
    ])
}

fn prefixed(prefix: &str, criteria: Vec<Criterion>) -> Vec<Criterion> {
    criteria
        .into_iter()
        .map(|mut c| {
            c.name = format!("{prefix}/{}", c.name);
            c
        })
        .collect()
}

/// Small configurations exercised by [`selftest`].
pub fn selftest_configs() -> Vec<ExperimentConfig> {
    let mut traces = ExperimentConfig::default_for(ExperimentKind::Traces);
    traces.trials = 5000;
    let mut noholes = ExperimentConfig::default_for(ExperimentKind::Noholes);
    noholes.trials = 500;
    noholes.exhaustive = Some(ExhaustiveSpec {
        n: 8,
        d: 3,
        k0: 1,
        n0: 5,
        matrices: 1,
    });
    let mut pmpm = ExperimentConfig::default_for(ExperimentKind::Pmpm);
    pmpm.n = 20;
    pmpm.trials = 500;
    pmpm.m_kind = MatrixKind::Random;
    let mut smallball = ExperimentConfig::default_for(ExperimentKind::Smallball);
    smallball.trials = 20_000;
    let mut flat = ExperimentConfig::default_for(ExperimentKind::Flatcheck);
    flat.trials = 200;
    let mut conc = ExperimentConfig::default_for(ExperimentKind::Concentration);
    conc.n = 40;
    conc.d = 4;
    conc.trials = 10;
    let mut ssv = ExperimentConfig::default_for(ExperimentKind::Ssv);
    ssv.n_values = vec![20, 40];
    ssv.trials = 5;
    vec![traces, noholes, pmpm, smallball, flat, conc, ssv]
}

/// Exact-identity suite, a coarse cubic suite and small experiment runs.
/// Every criterion is returned; the caller decides on the exit status.
pub fn selftest(threads: Option<usize>) -> Result<Vec<Criterion>> {
    let opts = RunOptions { threads };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| crate::Error::Config(vec![format!("cannot start worker pool: {e}")]))?;
    let mut out = pool.install(|| -> Result<Vec<Criterion>> {
        let mut v = prefixed("identities", exact_identity_suite(1)?);
        v.extend(prefixed("cubic", cubic_suite(2, 1000, 1e-4)?));
        Ok(v)
    })?;
    for cfg in selftest_configs() {
        let report = run(&cfg, opts)?;
        out.extend(prefixed(cfg.kind.as_str(), report.criteria));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_suite_passes() {
        let c = exact_identity_suite(7).unwrap();
        assert_eq!(c.len(), 5);
        for k in &c {
            assert!(k.passed, "{k}");
        }
    }

    #[test]
    fn coarse_cubic_suite_passes() {
        for k in cubic_suite(3, 200, 1e-3).unwrap() {
            assert!(k.passed, "{k}");
        }
    }
}
