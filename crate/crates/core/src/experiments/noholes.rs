//! Edge discrepancy: `e_L(I, J) ≥ |L||I||J|/(2n)` on sampled triples and,
//! for tiny instances, on every triple above the minimum sizes.

use rand::seq::index;
use serde_json::json;

use super::config::ExperimentConfig;
use super::par_trials;
use super::report::{Comparison, Criterion, ExperimentReport, Provenance, Table};
use crate::error::Result;
use crate::permmat::{PermutationSum, RngStream};

/// `2n·e < |L||I||J|`, in exact integer arithmetic.
fn violates(n: usize, e: usize, l: usize, i: usize, j: usize) -> bool {
    2 * n * e < l * i * j
}

/// `e_L(I, J)` with `L`, `I`, `J` given as bitmasks; `n ≤ 32`.
pub fn edge_count_masks(s: &PermutationSum, layers: u32, rows: u32, cols: u32) -> usize {
    s.perms()
        .iter()
        .enumerate()
        .filter(|(ell, _)| layers >> ell & 1 == 1)
        .map(|(_, p)| {
            let mut image = 0u32;
            for i in 0..s.n() {
                if rows >> i & 1 == 1 {
                    image |= 1 << p.image(i);
                }
            }
            (image & cols).count_ones() as usize
        })
        .sum()
}

/// Checks every `(L, I, J)` with `|L| ≥ k0` and `|I|, |J| ≥ n0`; returns the
/// number of triples checked and of violations.
fn exhaustive_check(s: &PermutationSum, k0: usize, n0: usize) -> (usize, usize) {
    let n = s.n();
    let d = s.d();
    let sets: Vec<u32> = (0u32..(1 << n)).filter(|m| m.count_ones() as usize >= n0).collect();
    let layer_sets: Vec<u32> = (1u32..(1 << d)).filter(|m| m.count_ones() as usize >= k0).collect();
    // images[ℓ][I] = π_ℓ(I) as a mask
    let images: Vec<Vec<u32>> = s
        .perms()
        .iter()
        .map(|p| {
            (0u32..(1 << n))
                .map(|rows| {
                    (0..n)
                        .filter(|&i| rows >> i & 1 == 1)
                        .fold(0u32, |acc, i| acc | 1 << p.image(i))
                })
                .collect()
        })
        .collect();
    let mut checked = 0;
    let mut violations = 0;
    for &l in &layer_sets {
        let lsize = l.count_ones() as usize;
        for &rows in &sets {
            let isize = rows.count_ones() as usize;
            for &cols in &sets {
                let e: usize = (0..d)
                    .filter(|&ell| l >> ell & 1 == 1)
                    .map(|ell| (images[ell][rows as usize] & cols).count_ones() as usize)
                    .sum();
                checked += 1;
                violations += usize::from(violates(n, e, lsize, isize, cols.count_ones() as usize));
            }
        }
    }
    (checked, violations)
}

pub fn run_noholes(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (n, d, k0, n0) = (cfg.n, cfg.d, cfg.k0, cfg.n0);
    let s = PermutationSum::sample(n, d, &mut RngStream::new(cfg.master_seed, 0))?;
    let records = par_trials(cfg.trials, |t| {
        let mut rng = RngStream::new(cfg.master_seed, 1 + t as u64);
        let layers = index::sample(&mut rng, d, k0).into_vec();
        let rows = index::sample(&mut rng, n, n0).into_vec();
        let mut in_cols = vec![false; n];
        for j in index::sample(&mut rng, n, n0) {
            in_cols[j] = true;
        }
        Ok(s.edge_count(&layers, &rows, &in_cols))
    })?;
    let bound = (k0 * n0 * n0) as f64 / (2 * n) as f64;
    let mut table = Table::new(&["trial", "edges", "bound", "violation"]);
    let mut violations = 0;
    for (t, &e) in records.iter().enumerate() {
        let bad = violates(n, e, k0, n0, n0);
        violations += usize::from(bad);
        table.push(vec![json!(t), json!(e), json!(bound), json!(bad)]);
    }
    let mut report = ExperimentReport::new(
        cfg,
        "stream 0 samples the matrix; triple t uses stream 1 + t; exhaustive matrix k uses stream trials + 1 + k",
        table,
    );
    let min_edges = records.iter().copied().min().unwrap_or(0);
    report.summarize("bound", bound);
    report.summarize("min_edges", min_edges);
    report.summarize(
        "mean_edges",
        records.iter().sum::<usize>() as f64 / records.len() as f64,
    );
    report.summarize("expected_edges", (k0 * n0 * n0) as f64 / n as f64);
    report.check(Criterion::new(
        "sampled_violations",
        violations as f64,
        Comparison::Equal,
        0.0,
        Provenance::Paper,
    ));

    if let Some(ex) = cfg.exhaustive {
        let mut checked = 0;
        let mut bad = 0;
        for k in 0..ex.matrices {
            let stream = (cfg.trials + 1 + k) as u64;
            let small = PermutationSum::sample(ex.n, ex.d, &mut RngStream::new(cfg.master_seed, stream))?;
            let (c, v) = exhaustive_check(&small, ex.k0, ex.n0);
            checked += c;
            bad += v;
        }
        report.summarize("exhaustive_triples", checked);
        report.summarize("exhaustive_violations", bad);
        report.check(Criterion::new(
            "exhaustive_violations",
            bad as f64,
            Comparison::Equal,
            0.0,
            Provenance::Derived,
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{ExhaustiveSpec, ExperimentKind};
    use crate::permmat::Permutation;

    #[test]
    fn identity_examples() {
        let n = 6;
        let s = PermutationSum::from_perms(vec![Permutation::identity(n)]).unwrap();
        let all = (1u32 << n) - 1;
        assert_eq!(edge_count_masks(&s, 1, all, all), n);
        // a hole at the smallest scale
        assert_eq!(edge_count_masks(&s, 1, 0b01, 0b10), 0);
        assert!(violates(n, 0, 1, 1, 1));
    }

    #[test]
    fn mask_count_matches_slice_count() {
        let mut rng = RngStream::new(5, 0);
        let s = PermutationSum::sample(9, 3, &mut rng).unwrap();
        for (l, i, j) in [(0b101u32, 0b1_0110_1101u32, 0b0_1011_0011u32), (0b111, 0x1ff, 0x0f0)] {
            let layers: Vec<usize> = (0..3).filter(|b| l >> b & 1 == 1).collect();
            let rows: Vec<usize> = (0..9).filter(|b| i >> b & 1 == 1).collect();
            let in_cols: Vec<bool> = (0..9).map(|b| j >> b & 1 == 1).collect();
            assert_eq!(edge_count_masks(&s, l, i, j), s.edge_count(&layers, &rows, &in_cols));
        }
    }

    #[test]
    fn exhaustive_counts_every_triple() {
        let mut rng = RngStream::new(6, 0);
        let s = PermutationSum::sample(4, 2, &mut rng).unwrap();
        // |L| ≥ 1: 3 choices; |I|, |J| ≥ 3: 5 choices each
        let (checked, _) = exhaustive_check(&s, 1, 3);
        assert_eq!(checked, 3 * 5 * 5);
        // small sets always contain holes somewhere
        let (_, bad) = exhaustive_check(&s, 1, 1);
        assert!(bad > 0);
    }

    #[test]
    fn small_run_with_exhaustive_block() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::Noholes);
        cfg.trials = 500;
        cfg.exhaustive = Some(ExhaustiveSpec {
            n: 8,
            d: 3,
            k0: 1,
            n0: 5,
            matrices: 2,
        });
        let r = run_noholes(&cfg).unwrap();
        assert!(r.all_passed(), "{}", r.criteria_lines());
        assert_eq!(r.summary["exhaustive_triples"], json!(2 * 7 * 93 * 93));
    }
}
