//! Flat-vector distance and bimodal-component location.
//!
//! A unit vector `u` is `(m, ρ)`-flat when `‖u - v - λ1‖₂ ≤ ρ` for some
//! `m`-sparse `v` and `λ ∈ ℂ`. For a fixed support the optimum is
//! `v = (u - λ1)` on the support and `λ` = mean of `u` off it, so the problem
//! is a search over supports.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permmat::RngStream;

/// A complex unit vector, optionally tagged as orthogonal to `1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorProbe {
    u: Vec<Complex64>,
    mean_zero: bool,
}

impl VectorProbe {
    /// Normalises `u`; rejects the zero vector.
    pub fn new(u: Vec<Complex64>) -> Result<Self> {
        let norm = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if u.is_empty() || !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::domain("probe vector must be nonzero and finite"));
        }
        Ok(Self {
            u: u.into_iter().map(|x| x / norm).collect(),
            mean_zero: false,
        })
    }

    /// Projects out the constant direction, then normalises.
    pub fn new_mean_zero(u: Vec<Complex64>) -> Result<Self> {
        let n = u.len().max(1) as f64;
        let mean: Complex64 = u.iter().sum::<Complex64>() / n;
        let mut p = Self::new(u.into_iter().map(|x| x - mean).collect())?;
        p.mean_zero = true;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.u
    }

    pub fn is_mean_zero(&self) -> bool {
        self.mean_zero
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatDistance {
    pub rho: f64,
    pub lambda: Complex64,
    /// Sorted support of the sparse part.
    pub support: Vec<usize>,
}

/// Distance with the support fixed: `λ` = mean off the support.
fn distance_for_support(u: &[Complex64], in_support: &[bool]) -> (f64, Complex64) {
    let off: Vec<Complex64> = u.iter().zip(in_support).filter(|(_, &s)| !s).map(|(&x, _)| x).collect();
    if off.is_empty() {
        return (0.0, Complex64::new(0.0, 0.0));
    }
    let lambda = off.iter().sum::<Complex64>() / off.len() as f64;
    let d2: f64 = off.iter().map(|x| (x - lambda).norm_sqr()).sum();
    (d2.sqrt(), lambda)
}

/// The `m` indices with largest `|u_j - λ|`, ties broken by index.
fn top_support(u: &[Complex64], lambda: Complex64, m: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..u.len()).collect();
    idx.sort_by(|&a, &b| {
        (u[b] - lambda)
            .norm()
            .total_cmp(&(u[a] - lambda).norm())
            .then(a.cmp(&b))
    });
    let mut mask = vec![false; u.len()];
    for &j in idx.iter().take(m) {
        mask[j] = true;
    }
    mask
}

fn alternate(u: &[Complex64], m: usize, start: Complex64) -> FlatDistance {
    let mut lambda = start;
    let mut mask = top_support(u, lambda, m);
    let (mut rho, mut fitted) = distance_for_support(u, &mask);
    for _ in 0..200 {
        lambda = fitted;
        let next = top_support(u, lambda, m);
        if next == mask {
            break;
        }
        let (r, l) = distance_for_support(u, &next);
        if r >= rho {
            break;
        }
        mask = next;
        rho = r;
        fitted = l;
    }
    FlatDistance {
        rho,
        lambda: fitted,
        support: (0..u.len()).filter(|&j| mask[j]).collect(),
    }
}

/// Number of random restarts used by [`flat_distance`] besides the `λ = 0`
/// and `λ = mean(u)` starts.
pub const FLAT_RESTARTS: usize = 20;

/// Upper bound on the distance from `u` to `m`-sparse plus constant vectors,
/// by alternating minimisation from several starts. Deterministic in `u`.
pub fn flat_distance(probe: &VectorProbe, m: usize) -> Result<FlatDistance> {
    let u = probe.values();
    let n = u.len();
    if m == 0 || m > n {
        return Err(Error::config(format!("m = {m} must lie in 1..={n}")));
    }
    let mean = u.iter().sum::<Complex64>() / n as f64;
    let mut starts = vec![Complex64::new(0.0, 0.0), mean];
    let mut rng = RngStream::new(0xF1A7_F1A7, n as u64);
    for _ in 0..FLAT_RESTARTS {
        // a random coordinate, jittered on the scale of a typical entry
        let k = rng.below(n as u64) as usize;
        let scale = 0.5 / (n as f64).sqrt();
        let jitter = Complex64::new(rng.uniform() - 0.5, rng.uniform() - 0.5) * scale;
        starts.push(u[k] + jitter);
    }
    let best = starts
        .into_iter()
        .map(|s| alternate(u, m, s))
        .min_by(|a, b| a.rho.total_cmp(&b.rho))
        .expect("at least two starts");
    Ok(best)
}

/// Exact distance by enumerating all supports of size `m`; `n ≤ 20`.
pub fn flat_distance_exact(probe: &VectorProbe, m: usize) -> Result<FlatDistance> {
    let u = probe.values();
    let n = u.len();
    if m == 0 || m > n {
        return Err(Error::config(format!("m = {m} must lie in 1..={n}")));
    }
    if n > 20 {
        return Err(Error::domain("exhaustive support search is limited to n <= 20"));
    }
    let mut best: Option<FlatDistance> = None;
    for bits in 0u32..(1 << n) {
        if bits.count_ones() as usize != m {
            continue;
        }
        let mask: Vec<bool> = (0..n).map(|j| bits >> j & 1 == 1).collect();
        let (rho, lambda) = distance_for_support(u, &mask);
        if best.as_ref().is_none_or(|b| rho < b.rho) {
            best = Some(FlatDistance {
                rho,
                lambda,
                support: (0..n).filter(|&j| mask[j]).collect(),
            });
        }
    }
    Ok(best.expect("some support exists"))
}

/// Outcome of the bimodal search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bimodal {
    pub j1: Vec<usize>,
    pub j2: Vec<usize>,
    /// The target separation `ρ/(4 sqrt(n))`.
    pub gap: f64,
    /// `|J2| / (n - m*)`.
    pub ratio: f64,
    /// Minimum of `|u_j1 - u_j2|` over all returned pairs.
    pub min_pair_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BimodalOutcome {
    /// The heuristic found `‖u - v - λ1‖ ≤ ρ`, which certifies flatness.
    Flat(FlatDistance),
    /// Not certified flat but no separated pair of sets was found.
    NotFound(FlatDistance),
    Found(Bimodal, FlatDistance),
}

/// Looks for disjoint `J1, J2` with `|J1| ≥ m*` and
/// `|u_j1 - u_j2| ≥ ρ/(4 sqrt(n))` for all pairs. `J1` holds the `m*`
/// coordinates farthest from the fitted level `λ̂`; `J2` holds every other
/// coordinate whose distance to `λ̂` is at least the gap below the `m*`-th
/// largest, which forces the separation by the triangle inequality.
pub fn bimodal_locate(probe: &VectorProbe, m_star: usize, rho: f64) -> Result<BimodalOutcome> {
    let fit = flat_distance(probe, m_star)?;
    if fit.rho <= rho {
        return Ok(BimodalOutcome::Flat(fit));
    }
    let u = probe.values();
    let n = u.len();
    if m_star >= n {
        return Ok(BimodalOutcome::NotFound(fit));
    }
    let gap = rho / (4.0 * (n as f64).sqrt());
    let dist: Vec<f64> = u.iter().map(|x| (x - fit.lambda).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    let cut = dist[order[m_star - 1]];
    let j1: Vec<usize> = order[..m_star].to_vec();
    let j2: Vec<usize> = order[m_star..]
        .iter()
        .copied()
        .filter(|&j| dist[j] <= cut - gap)
        .collect();
    if j2.is_empty() {
        return Ok(BimodalOutcome::NotFound(fit));
    }
    let min_pair_distance = min_pair_distance(u, &j1, &j2);
    let mut j1s = j1;
    j1s.sort_unstable();
    let mut j2s = j2;
    j2s.sort_unstable();
    let ratio = j2s.len() as f64 / (n - m_star) as f64;
    Ok(BimodalOutcome::Found(
        Bimodal {
            j1: j1s,
            j2: j2s,
            gap,
            ratio,
            min_pair_distance,
        },
        fit,
    ))
}

/// `min |u_a - u_b|` over `a ∈ J1`, `b ∈ J2` by direct enumeration.
pub fn min_pair_distance(u: &[Complex64], j1: &[usize], j2: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for &a in j1 {
        for &b in j2 {
            best = best.min((u[a] - u[b]).norm());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_probe(n: usize, rng: &mut RngStream) -> VectorProbe {
        let u = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im)
            })
            .collect();
        VectorProbe::new(u).unwrap()
    }

    #[test]
    fn probe_invariants() {
        let p = VectorProbe::new(vec![c(3.0), c(4.0)]).unwrap();
        let norm: f64 = p.values().iter().map(|x| x.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let q = VectorProbe::new_mean_zero(vec![c(1.0), c(2.0), c(6.0)]).unwrap();
        assert!(q.values().iter().sum::<Complex64>().norm() < 1e-10);
        assert!(q.is_mean_zero());
        assert!(VectorProbe::new(vec![c(0.0); 3]).is_err());
    }

    #[test]
    fn flat_examples() {
        let n = 9;
        let flat = VectorProbe::new(vec![c(1.0); n]).unwrap();
        for m in 1..=n {
            let r = flat_distance(&flat, m).unwrap();
            assert!(r.rho < 1e-12);
        }
        let mut e1 = vec![c(0.0); n];
        e1[0] = c(1.0);
        let r = flat_distance(&VectorProbe::new(e1).unwrap(), 1).unwrap();
        assert!(r.rho < 1e-15);
        assert_eq!(r.support, vec![0]);
        assert!(r.lambda.norm() < 1e-15);
        assert!(flat_distance(&flat, 0).is_err());
        assert!(flat_distance(&flat, n + 1).is_err());
    }

    #[test]
    fn heuristic_matches_exhaustive_oracle() {
        let mut rng = RngStream::new(41, 0);
        let mut agree = 0;
        let cases = 1000;
        for _ in 0..cases {
            let p = random_probe(10, &mut rng);
            let h = flat_distance(&p, 2).unwrap();
            let e = flat_distance_exact(&p, 2).unwrap();
            assert!(h.rho >= e.rho - 1e-12);
            if h.rho - e.rho <= 1e-9 {
                agree += 1;
            }
        }
        assert!(agree as f64 >= 0.95 * cases as f64, "{agree}");
    }

    #[test]
    fn never_exceeds_centred_norm() {
        let mut rng = RngStream::new(42, 0);
        for _ in 0..200 {
            let p = random_probe(15, &mut rng);
            let u = p.values();
            let mean = u.iter().sum::<Complex64>() / u.len() as f64;
            let centred = u.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>().sqrt();
            for m in [1, 3, 7] {
                assert!(flat_distance(&p, m).unwrap().rho <= centred + 1e-12);
            }
        }
    }

    #[test]
    fn two_level_vector_is_bimodal() {
        let n = 40;
        let hi = 2.0 / (2.0 * n as f64).sqrt();
        let u: Vec<Complex64> = (0..n).map(|j| if j % 2 == 0 { c(0.0) } else { c(hi) }).collect();
        let p = VectorProbe::new(u).unwrap();
        let out = bimodal_locate(&p, n / 4, 0.5).unwrap();
        let BimodalOutcome::Found(b, _) = out else {
            panic!("{out:?}")
        };
        assert!(b.j1.len() >= n / 4);
        assert!(b.min_pair_distance >= b.gap);
        assert!(b.j1.iter().all(|j| !b.j2.contains(j)));
        assert!(b.ratio > 0.5);
    }

    #[test]
    fn flat_vector_is_reported_flat() {
        let p = VectorProbe::new(vec![c(1.0); 16]).unwrap();
        assert!(matches!(bimodal_locate(&p, 4, 0.1).unwrap(), BimodalOutcome::Flat(_)));
    }

    #[test]
    fn returned_sets_pass_exhaustive_pair_check() {
        let mut rng = RngStream::new(43, 0);
        let mut found = 0;
        for _ in 0..200 {
            let p = random_probe(12, &mut rng);
            if let BimodalOutcome::Found(b, _) = bimodal_locate(&p, 3, 0.3).unwrap() {
                found += 1;
                let u = p.values();
                for &a in &b.j1 {
                    for &bb in &b.j2 {
                        assert!((u[a] - u[bb]).norm() >= b.gap);
                    }
                }
            }
        }
        assert!(found > 0);
    }
}
