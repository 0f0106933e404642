//! Expectations of `(𝖯 M 𝖯 M)` entries for the centred symmetrised
//! permutation block `𝖯 = [[0, Q], [Qᵀ, 0]]`, `Q = P - J/n`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use super::config::{ExperimentConfig, MatrixKind};
use super::par_trials;
use super::report::{Comparison, Criterion, ExperimentReport, Provenance, Table};
use super::stats;
use crate::error::{Error, Result};
use crate::permmat::{Permutation, RngStream};

const PARTS: [&str; 4] = ["i_i", "n+i_n+i", "n+i_i", "i_n+i"];
const MATRIX_STREAM: u64 = u64::MAX;
const EXACT_N: usize = 3;

fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// The deterministic `2n x 2n` matrix of the requested kind; `random` is a
/// Gaussian matrix rescaled to operator norm `norm`.
fn build_matrix(kind: MatrixKind, n: usize, norm: f64, rng: &mut RngStream) -> DMatrix<f64> {
    match kind {
        MatrixKind::Zero => DMatrix::zeros(2 * n, 2 * n),
        MatrixKind::Identity => DMatrix::identity(2 * n, 2 * n),
        MatrixKind::Random => {
            let g = DMatrix::from_fn(2 * n, 2 * n, |_, _| StandardNormal.sample(rng));
            let s = operator_norm(&g);
            g * (norm / s)
        }
    }
}

/// Main terms of the four parts for row index `i`.
fn main_terms(m: &DMatrix<f64>, i: usize) -> [f64; 4] {
    let n = m.nrows() / 2;
    let upper = (0..n).map(|j| m[(j, j)]).sum::<f64>() / n as f64;
    let lower = (0..n).map(|j| m[(n + j, n + j)]).sum::<f64>() / n as f64;
    [
        m[(i, i)] * lower,
        m[(n + i, n + i)] * upper,
        m[(n + i, i)] * upper,
        m[(i, n + i)] * lower,
    ]
}

/// Column means of the upper and lower halves of the rows of `M`.
fn block_row_means(m: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = m.nrows() / 2;
    let mean = |r0: usize| -> Vec<f64> {
        (0..2 * n)
            .map(|c| (r0..r0 + n).map(|r| m[(r, c)]).sum::<f64>() / n as f64)
            .collect()
    };
    (mean(0), mean(n))
}

/// `(𝖯M𝖯M)` at `(i,i)`, `(n+i,n+i)`, `(n+i,i)` and `(i,n+i)` in `O(n)`
/// given the block row means of `M`.
pub fn pmpm_entries(pi: &Permutation, m: &DMatrix<f64>, means: &(Vec<f64>, Vec<f64>), i: usize) -> [f64; 4] {
    let n = pi.n();
    let inv = pi.inverse();
    let (upper_mean, lower_mean) = means;
    // w = e_a^T 𝖯 M 𝖯
    let row_pmp = |a: usize| -> Vec<f64> {
        let y: Vec<f64> = if a < n {
            let r = n + pi.image(a);
            (0..2 * n).map(|c| m[(r, c)] - lower_mean[c]).collect()
        } else {
            let r = inv.image(a - n);
            (0..2 * n).map(|c| m[(r, c)] - upper_mean[c]).collect()
        };
        let sum_upper: f64 = y[..n].iter().sum();
        let sum_lower: f64 = y[n..].iter().sum();
        let mut w = vec![0.0; 2 * n];
        for j in 0..n {
            w[j] = y[n + pi.image(j)] - sum_lower / n as f64;
            w[n + j] = y[inv.image(j)] - sum_upper / n as f64;
        }
        w
    };
    let dot = |w: &[f64], b: usize| -> f64 { w.iter().enumerate().map(|(c, x)| x * m[(c, b)]).sum() };
    let top = row_pmp(i);
    let bottom = row_pmp(n + i);
    [dot(&top, i), dot(&bottom, n + i), dot(&bottom, i), dot(&top, n + i)]
}

/// Dense `𝖯` for a permutation.
fn dense_p(pi: &Permutation) -> DMatrix<f64> {
    let n = pi.n();
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let q = f64::from(u8::from(pi.image(r) == c)) - 1.0 / n as f64;
            p[(r, n + c)] = q;
            p[(n + c, r)] = q;
        }
    }
    p
}

/// Exact expectation of `𝖯M𝖯M` two ways: by averaging over all `n!`
/// permutations and from the second moments of the entries of `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PmpmExact {
    pub n: usize,
    pub enumerated: DMatrix<f64>,
    pub second_moment: DMatrix<f64>,
}

impl PmpmExact {
    pub fn max_abs_difference(&self) -> f64 {
        (&self.enumerated - &self.second_moment).abs().max()
    }
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in all_permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// `E[Q_xy Q_uv]` for `Q = P - J/n` with `P` uniform.
fn q_moment(n: usize, x: usize, y: usize, u: usize, v: usize) -> f64 {
    let nf = n as f64;
    match (x == u, y == v) {
        (true, true) => (1.0 - 1.0 / nf) / nf,
        (true, false) | (false, true) => -1.0 / (nf * nf),
        (false, false) => 1.0 / (nf * nf * (nf - 1.0)),
    }
}

/// Entry `(a, r)` of `𝖯` as an entry `(x, y)` of `Q`, if not structurally 0.
fn q_index(n: usize, a: usize, r: usize) -> Option<(usize, usize)> {
    match (a < n, r < n) {
        (true, false) => Some((a, r - n)),
        (false, true) => Some((r, a - n)),
        _ => None,
    }
}

pub fn pmpm_exact(m: &DMatrix<f64>) -> Result<PmpmExact> {
    let n = m.nrows() / 2;
    if m.nrows() != 2 * n || m.ncols() != 2 * n || !(2..=7).contains(&n) {
        return Err(Error::domain(
            "exact PMPM expectation needs a 2n x 2n matrix with 2 <= n <= 7",
        ));
    }
    let perms = all_permutations(n);
    let mut enumerated = DMatrix::zeros(2 * n, 2 * n);
    for images in &perms {
        let p = dense_p(&Permutation::from_images(images.clone())?);
        enumerated += &p * m * &p * m;
    }
    enumerated /= perms.len() as f64;
    // E[𝖯 M 𝖯]_{a,c} = Σ_{r,s} E[𝖯_{a,r} 𝖯_{s,c}] M_{r,s}
    let size = 2 * n;
    let mut pmp = DMatrix::zeros(size, size);
    for a in 0..size {
        for c in 0..size {
            let mut acc = 0.0;
            for r in 0..size {
                let Some((x, y)) = q_index(n, a, r) else { continue };
                for s in 0..size {
                    let Some((u, v)) = q_index(n, s, c) else { continue };
                    acc += q_moment(n, x, y, u, v) * m[(r, s)];
                }
            }
            pmp[(a, c)] = acc;
        }
    }
    Ok(PmpmExact {
        n,
        enumerated,
        second_moment: pmp * m,
    })
}

pub fn run_pmpm(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let n = cfg.n;
    let i = cfg.index;
    let mut mrng = RngStream::new(cfg.master_seed, MATRIX_STREAM);
    let m = build_matrix(cfg.m_kind, n, cfg.m_norm, &mut mrng);
    let norm = operator_norm(&m);
    let means = block_row_means(&m);
    let samples = par_trials(cfg.trials, |t| {
        let pi = Permutation::sample(n, &mut RngStream::new(cfg.master_seed, t as u64))?;
        Ok(pmpm_entries(&pi, &m, &means, i))
    })?;
    let mut table = Table::new(&["trial", PARTS[0], PARTS[1], PARTS[2], PARTS[3]]);
    for (t, v) in samples.iter().enumerate() {
        table.push(vec![json!(t), json!(v[0]), json!(v[1]), json!(v[2]), json!(v[3])]);
    }
    let mut report = ExperimentReport::new(
        cfg,
        "sample t uses stream t; a random M uses stream 2^64 - 1, the n = 3 check continues that stream",
        table,
    );
    let main = main_terms(&m, i);
    let slack = cfg.threshold("slack_factor") * norm * norm / (n as f64).sqrt();
    report.summarize("operator_norm", norm);
    report.summarize("slack", slack);
    for (k, part) in PARTS.iter().enumerate() {
        let xs: Vec<f64> = samples.iter().map(|v| v[k]).collect();
        let mean = stats::mean(&xs);
        let se = stats::std_error(&xs);
        report.summarize(format!("mean_{part}"), mean);
        report.summarize(format!("main_term_{part}"), main[k]);
        report.check(Criterion::new(
            format!("part_{part}_deviation"),
            (mean - main[k]).abs(),
            Comparison::AtMost,
            slack + cfg.threshold("sigmas") * se,
            Provenance::Paper,
        ));
    }

    let m3 = build_matrix(cfg.m_kind, EXACT_N, cfg.m_norm, &mut mrng);
    let exact = pmpm_exact(&m3)?;
    let norm3 = operator_norm(&m3);
    let slack3 = cfg.threshold("slack_factor") * norm3 * norm3 / (EXACT_N as f64).sqrt();
    report.summarize("exact_n3_max_abs_difference", exact.max_abs_difference());
    report.check(Criterion::new(
        "exact_n3_enumeration_vs_second_moments",
        exact.max_abs_difference(),
        Comparison::AtMost,
        1e-12,
        Provenance::Derived,
    ));
    let mut worst: f64 = 0.0;
    for r in 0..EXACT_N {
        let main3 = main_terms(&m3, r);
        let e = &exact.enumerated;
        let got = [
            e[(r, r)],
            e[(EXACT_N + r, EXACT_N + r)],
            e[(EXACT_N + r, r)],
            e[(r, EXACT_N + r)],
        ];
        for k in 0..4 {
            worst = worst.max((got[k] - main3[k]).abs());
        }
    }
    report.summarize("exact_n3_max_main_term_deviation", worst);
    report.check(Criterion::new(
        "exact_n3_main_term_deviation",
        worst,
        Comparison::AtMost,
        slack3,
        Provenance::Paper,
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ExperimentKind;

    fn random_matrix(n: usize, seed: u64) -> DMatrix<f64> {
        build_matrix(MatrixKind::Random, n, 1.0, &mut RngStream::new(seed, 0))
    }

    #[test]
    fn fast_route_matches_dense_product() {
        let mut rng = RngStream::new(8, 1);
        for n in [2, 5, 9] {
            let m = random_matrix(n, n as u64);
            let means = block_row_means(&m);
            for _ in 0..5 {
                let pi = Permutation::sample(n, &mut rng).unwrap();
                let p = dense_p(&pi);
                let full = &p * &m * &p * &m;
                for i in 0..n {
                    let got = pmpm_entries(&pi, &m, &means, i);
                    let want = [full[(i, i)], full[(n + i, n + i)], full[(n + i, i)], full[(i, n + i)]];
                    for k in 0..4 {
                        assert!((got[k] - want[k]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn second_moments_match_enumeration() {
        for n in [2, 3, 4] {
            let exact = pmpm_exact(&random_matrix(n, 40 + n as u64)).unwrap();
            assert!(exact.max_abs_difference() < 1e-12);
        }
        assert!(pmpm_exact(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn identity_gives_one_minus_one_over_n() {
        let n = 7;
        let m = DMatrix::identity(2 * n, 2 * n);
        let means = block_row_means(&m);
        let pi = Permutation::sample(n, &mut RngStream::new(1, 1)).unwrap();
        let v = pmpm_entries(&pi, &m, &means, 3);
        let target = 1.0 - 1.0 / n as f64;
        assert!((v[0] - target).abs() < 1e-14 && (v[1] - target).abs() < 1e-14);
        assert!(v[2].abs() < 1e-14 && v[3].abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_is_trivial() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::Pmpm);
        cfg.n = 10;
        cfg.trials = 50;
        cfg.m_kind = MatrixKind::Zero;
        let r = run_pmpm(&cfg).unwrap();
        assert!(r.all_passed(), "{}", r.criteria_lines());
        assert!(r.trials.numbers("i_i").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn random_matrix_run_passes() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::Pmpm);
        cfg.n = 40;
        cfg.trials = 400;
        cfg.m_kind = MatrixKind::Random;
        let r = run_pmpm(&cfg).unwrap();
        assert!(r.all_passed(), "{}", r.criteria_lines());
    }
}
