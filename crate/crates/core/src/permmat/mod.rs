//! Permutations and the permutation-sum ensemble `S = P_1 + ... + P_d`.
//!
//! Indices are 0-based throughout the Rust API and in serialized form:
//! `images[i]` is the image of point `i`, and the implied permutation matrix is
//! `P(i, j) = 1` iff `images[i] == j`.

mod rng;

pub use rng::{RngStream, RNG_DESCRIPTION};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A permutation of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    images: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(images: Vec<usize>) -> Result<Self> {
        Permutation::from_images(images)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.images
    }
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            images: (0..n).collect(),
        }
    }

    /// Builds a permutation from 0-based images, rejecting anything that is
    /// not a bijection on `0..n`.
    pub fn from_images(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        if n == 0 {
            return Err(Error::InvalidDimension("permutation of zero points".into()));
        }
        let mut seen = vec![false; n];
        for &j in &images {
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, n });
            }
            if seen[j] {
                return Err(Error::domain(format!("image {j} repeated; not a bijection")));
            }
            seen[j] = true;
        }
        Ok(Self { images })
    }

    /// Builds a permutation from 1-based images, e.g. `[2, 1, 3]` for the
    /// transposition of the first two points.
    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        let shifted = images
            .iter()
            .map(|&j| {
                j.checked_sub(1).ok_or(Error::IndexOutOfRange {
                    index: 0,
                    n: images.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_images(shifted)
    }

    /// Uniform random permutation by Fisher–Yates with unbiased bounded draws.
    pub fn sample(n: usize, rng: &mut RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("n must be at least 1".into()));
        }
        let mut images: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.below(i as u64 + 1) as usize;
            images.swap(i, j);
        }
        Ok(Self { images })
    }

    pub fn n(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    #[inline]
    pub fn image(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.n()];
        for (i, &j) in self.images.iter().enumerate() {
            inv[j] = i;
        }
        Self { images: inv }
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Result<Self> {
        check_same_n(self, other)?;
        Ok(Self {
            images: other.images.iter().map(|&j| self.images[j]).collect(),
        })
    }

    /// Number of fixed points, i.e. `Tr P`.
    pub fn fixed_points(&self) -> usize {
        self.images.iter().enumerate().filter(|&(i, &j)| i == j).count()
    }

    /// Cycle lengths, sorted in decreasing order.
    pub fn cycle_type(&self) -> Vec<usize> {
        let n = self.n();
        let mut visited = vec![false; n];
        let mut lengths = Vec::new();
        for start in 0..n {
            if visited[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !visited[i] {
                visited[i] = true;
                i = self.images[i];
                len += 1;
            }
            lengths.push(len);
        }
        lengths.sort_unstable_by(|a, b| b.cmp(a));
        lengths
    }

    /// `self ∘ τ(i, j)`: the images of `i` and `j` are exchanged.
    pub fn apply_transposition(&self, i: usize, j: usize) -> Result<Self> {
        let n = self.n();
        for idx in [i, j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, n });
            }
        }
        if i == j {
            return Err(Error::domain("transposition needs two distinct points"));
        }
        let mut images = self.images.clone();
        images.swap(i, j);
        Ok(Self { images })
    }
}

fn check_same_n(p: &Permutation, q: &Permutation) -> Result<()> {
    if p.n() != q.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            actual: q.n(),
        });
    }
    Ok(())
}

/// `#{i : p(i) != q(i)}`.
pub fn hamming_distance(p: &Permutation, q: &Permutation) -> Result<usize> {
    check_same_n(p, q)?;
    Ok(p.images.iter().zip(&q.images).filter(|(a, b)| a != b).count())
}

/// `Tr(P Q^*) = #{i : p(i) = q(i)}`.
pub fn trace_pair(p: &Permutation, q: &Permutation) -> Result<usize> {
    check_same_n(p, q)?;
    Ok(p.images.iter().zip(&q.images).filter(|(a, b)| a == b).count())
}

/// The sum of `d` permutation matrices of size `n`, stored as the
/// permutations themselves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PermutationSumRepr", into = "PermutationSumRepr")]
pub struct PermutationSum {
    n: usize,
    perms: Vec<Permutation>,
}

#[derive(Serialize, Deserialize)]
struct PermutationSumRepr {
    n: usize,
    d: usize,
    perms: Vec<Permutation>,
}

impl TryFrom<PermutationSumRepr> for PermutationSum {
    type Error = Error;

    fn try_from(r: PermutationSumRepr) -> Result<Self> {
        if r.perms.len() != r.d {
            return Err(Error::DimensionMismatch {
                expected: r.d,
                actual: r.perms.len(),
            });
        }
        let s = PermutationSum::from_perms(r.perms)?;
        if s.n != r.n {
            return Err(Error::DimensionMismatch {
                expected: r.n,
                actual: s.n,
            });
        }
        Ok(s)
    }
}

impl From<PermutationSum> for PermutationSumRepr {
    fn from(s: PermutationSum) -> Self {
        Self {
            n: s.n,
            d: s.perms.len(),
            perms: s.perms,
        }
    }
}

impl PermutationSum {
    pub fn from_perms(perms: Vec<Permutation>) -> Result<Self> {
        let first = perms
            .first()
            .ok_or_else(|| Error::InvalidDimension("d must be at least 1".into()))?;
        let n = first.n();
        for p in &perms {
            if p.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: p.n(),
                });
            }
        }
        Ok(Self { n, perms })
    }

    /// `d` independent uniform permutations of `0..n`.
    pub fn sample(n: usize, d: usize, rng: &mut RngStream) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension("d must be at least 1".into()));
        }
        let perms = (0..d)
            .map(|_| Permutation::sample(n, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n, perms })
    }

    /// `d` copies of the identity.
    pub fn identities(n: usize, d: usize) -> Result<Self> {
        Self::from_perms(vec![Permutation::identity(n); d])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.perms.len()
    }

    pub fn perms(&self) -> &[Permutation] {
        &self.perms
    }

    /// Replaces permutation `ell`; used by the Hamming-Lipschitz experiments.
    pub fn with_perm(&self, ell: usize, p: Permutation) -> Result<Self> {
        if ell >= self.d() {
            return Err(Error::IndexOutOfRange {
                index: ell,
                n: self.d(),
            });
        }
        if p.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: p.n(),
            });
        }
        let mut perms = self.perms.clone();
        perms[ell] = p;
        Ok(Self { n: self.n, perms })
    }

    /// `S(i, j) = #{ℓ : π_ℓ(i) = j}`.
    pub fn multiplicity(&self, i: usize, j: usize) -> usize {
        self.perms.iter().filter(|p| p.image(i) == j).count()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.n];
        for p in &self.perms {
            for (i, _) in p.images().iter().enumerate() {
                sums[i] += 1;
            }
        }
        sums
    }

    pub fn col_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.n];
        for p in &self.perms {
            for &j in p.images() {
                sums[j] += 1;
            }
        }
        sums
    }

    /// `S u`, or `S^* u` when `adjoint` is set, in `O(nd)` time.
    pub fn matvec(&self, u: &[Complex64], adjoint: bool) -> Result<Vec<Complex64>> {
        if u.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: u.len(),
            });
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for p in &self.perms {
            if adjoint {
                for (i, &j) in p.images().iter().enumerate() {
                    out[j] += u[i];
                }
            } else {
                for (i, &j) in p.images().iter().enumerate() {
                    out[i] += u[j];
                }
            }
        }
        Ok(out)
    }

    /// `Tr S S^* = nd + Σ_{ℓ≠ℓ'} Tr P_ℓ P_ℓ'^*`.
    pub fn trace_ssstar(&self) -> usize {
        let d = self.d();
        let mut off = 0;
        for a in 0..d {
            for b in (a + 1)..d {
                off += self.perms[a]
                    .images()
                    .iter()
                    .zip(self.perms[b].images())
                    .filter(|(x, y)| x == y)
                    .count();
            }
        }
        self.n * d + 2 * off
    }

    /// `Tr S = Σ_ℓ #fixed points of π_ℓ`.
    pub fn trace(&self) -> usize {
        self.perms.iter().map(Permutation::fixed_points).sum()
    }

    /// `e_L(I, J) = Σ_{ℓ∈L} Σ_{i∈I} 1(π_ℓ(i) ∈ J)`; `in_cols` is an
    /// indicator of `J` of length `n`.
    pub fn edge_count(&self, layers: &[usize], rows: &[usize], in_cols: &[bool]) -> usize {
        layers
            .iter()
            .map(|&ell| {
                let p = &self.perms[ell];
                rows.iter().filter(|&&i| in_cols[p.image(i)]).count()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(s: &PermutationSum) -> Vec<Vec<f64>> {
        let n = s.n();
        let mut m = vec![vec![0.0; n]; n];
        for p in s.perms() {
            for i in 0..n {
                m[i][p.image(i)] += 1.0;
            }
        }
        m
    }

    #[test]
    fn zero_dimension_is_rejected() {
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            Permutation::sample(0, &mut rng),
            Err(Error::InvalidDimension(_))
        ));
        assert!(PermutationSum::sample(0, 3, &mut rng).is_err());
        assert!(PermutationSum::sample(3, 0, &mut rng).is_err());
    }

    #[test]
    fn n_one_is_identity() {
        for seed in 0..5 {
            let mut rng = RngStream::new(seed, 0);
            assert_eq!(Permutation::sample(1, &mut rng).unwrap(), Permutation::identity(1));
        }
    }

    #[test]
    fn s3_frequencies_are_uniform() {
        let mut rng = RngStream::new(11, 0);
        let n_samples = 60_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..n_samples {
            let p = Permutation::sample(3, &mut rng).unwrap();
            *counts.entry(p.images().to_vec()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let p = 1.0 / 6.0;
        let sigma = (p * (1.0 - p) / n_samples as f64).sqrt();
        for c in counts.values() {
            assert!((*c as f64 / n_samples as f64 - p).abs() <= 3.0 * sigma);
        }
    }

    #[test]
    fn mean_fixed_points_is_one() {
        let mut rng = RngStream::new(12, 0);
        let n_samples = 100_000;
        let total: usize = (0..n_samples)
            .map(|_| Permutation::sample(10, &mut rng).unwrap().fixed_points())
            .sum();
        let mean = total as f64 / n_samples as f64;
        // Var(#fixed points) = 1 for n >= 2
        assert!((mean - 1.0).abs() <= 3.0 / (n_samples as f64).sqrt());
    }

    #[test]
    fn fixed_points_examples() {
        assert_eq!(Permutation::identity(7).fixed_points(), 7);
        let p = Permutation::from_one_based(&[2, 1, 3]).unwrap();
        assert_eq!(p.fixed_points(), 1);
    }

    #[test]
    fn fixed_point_tail_bound() {
        let mut rng = RngStream::new(13, 0);
        let n_samples = 100_000;
        let hits = (0..n_samples)
            .filter(|_| Permutation::sample(50, &mut rng).unwrap().fixed_points() >= 3)
            .count();
        let p_hat = hits as f64 / n_samples as f64;
        let sigma = (p_hat * (1.0 - p_hat) / n_samples as f64).sqrt();
        assert!(p_hat <= 1.0 / 6.0 + 3.0 * sigma);
    }

    #[test]
    fn cycle_type_examples() {
        assert_eq!(Permutation::identity(4).cycle_type(), vec![1, 1, 1, 1]);
        let p = Permutation::from_one_based(&[2, 3, 1]).unwrap();
        assert_eq!(p.cycle_type(), vec![3]);
    }

    #[test]
    fn hamming_examples() {
        let id = Permutation::identity(3);
        let t = Permutation::from_one_based(&[2, 1, 3]).unwrap();
        assert_eq!(hamming_distance(&id, &id).unwrap(), 0);
        assert_eq!(hamming_distance(&id, &t).unwrap(), 2);
        assert!(hamming_distance(&id, &Permutation::identity(4)).is_err());
    }

    #[test]
    fn hamming_triangle_inequality() {
        let mut rng = RngStream::new(14, 0);
        for _ in 0..1000 {
            let p = Permutation::sample(20, &mut rng).unwrap();
            let q = Permutation::sample(20, &mut rng).unwrap();
            let r = Permutation::sample(20, &mut rng).unwrap();
            let pr = hamming_distance(&p, &r).unwrap();
            let pq = hamming_distance(&p, &q).unwrap();
            let qr = hamming_distance(&q, &r).unwrap();
            assert!(pr <= pq + qr);
            assert_eq!(pq, hamming_distance(&q, &p).unwrap());
        }
    }

    #[test]
    fn transposition_examples() {
        let id = Permutation::identity(4);
        let t = id.apply_transposition(0, 1).unwrap();
        assert_eq!(t.images(), &[1, 0, 2, 3]);
        assert_eq!(t.apply_transposition(0, 1).unwrap(), id);
        assert!(matches!(
            id.apply_transposition(0, 4),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(id.apply_transposition(2, 2).is_err());
    }

    #[test]
    fn trace_pair_examples() {
        let id = Permutation::identity(3);
        let c = Permutation::from_one_based(&[2, 3, 1]).unwrap();
        assert_eq!(trace_pair(&c, &c).unwrap(), 3);
        assert_eq!(trace_pair(&id, &c).unwrap(), 0);
    }

    #[test]
    fn trace_pair_mean_is_one() {
        let mut rng = RngStream::new(15, 0);
        let n_samples = 100_000;
        let total: usize = (0..n_samples)
            .map(|_| {
                let p = Permutation::sample(40, &mut rng).unwrap();
                let q = Permutation::sample(40, &mut rng).unwrap();
                trace_pair(&p, &q).unwrap()
            })
            .sum();
        let mean = total as f64 / n_samples as f64;
        assert!((mean - 1.0).abs() <= 3.0 / (n_samples as f64).sqrt());
    }

    #[test]
    fn small_sums() {
        let mut rng = RngStream::new(16, 0);
        let s = PermutationSum::sample(4, 2, &mut rng).unwrap();
        assert_eq!(s.row_sums(), vec![2; 4]);
        assert_eq!(s.col_sums(), vec![2; 4]);
        let s = PermutationSum::sample(5, 1, &mut rng).unwrap();
        let m = dense(&s);
        for row in &m {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert!(row.iter().all(|&x| x == 0.0 || x == 1.0));
        }
    }

    #[test]
    fn trace_ssstar_examples() {
        let mut rng = RngStream::new(17, 0);
        let s = PermutationSum::sample(9, 1, &mut rng).unwrap();
        assert_eq!(s.trace_ssstar(), 9);
        let s = PermutationSum::identities(6, 2).unwrap();
        assert_eq!(s.trace_ssstar(), 24);
        let s = PermutationSum::sample(30, 3, &mut rng).unwrap();
        let fro: f64 = dense(&s).iter().flatten().map(|x| x * x).sum();
        assert_eq!(s.trace_ssstar() as f64, fro);
    }

    #[test]
    fn trace_ssstar_mean() {
        let mut rng = RngStream::new(18, 0);
        let (n, d, samples) = (50, 3, 10_000);
        let xs: Vec<f64> = (0..samples)
            .map(|_| PermutationSum::sample(n, d, &mut rng).unwrap().trace_ssstar() as f64)
            .collect();
        let mean = xs.iter().sum::<f64>() / samples as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
        let expected = (n * d + d * (d - 1)) as f64;
        assert_eq!(expected, 156.0);
        assert!((mean - expected).abs() <= 3.0 * (var / samples as f64).sqrt());
    }

    #[test]
    fn matvec_examples() {
        let u: Vec<Complex64> = (0..5).map(|k| Complex64::new(k as f64, 1.0 - k as f64)).collect();
        let s = PermutationSum::identities(5, 1).unwrap();
        assert_eq!(s.matvec(&u, false).unwrap(), u);
        let s = PermutationSum::identities(5, 2).unwrap();
        let twice: Vec<Complex64> = u.iter().map(|x| x * 2.0).collect();
        assert_eq!(s.matvec(&u, false).unwrap(), twice);
        assert!(s.matvec(&u[..4], false).is_err());
    }

    #[test]
    fn matvec_matches_dense() {
        let mut rng = RngStream::new(19, 0);
        let s = PermutationSum::sample(30, 4, &mut rng).unwrap();
        let m = dense(&s);
        let u: Vec<Complex64> = (0..30)
            .map(|_| Complex64::new(rng.uniform() - 0.5, rng.uniform() - 0.5))
            .collect();
        let su = s.matvec(&u, false).unwrap();
        let stu = s.matvec(&u, true).unwrap();
        for i in 0..30 {
            let mut a = Complex64::new(0.0, 0.0);
            let mut b = Complex64::new(0.0, 0.0);
            for j in 0..30 {
                a += u[j] * m[i][j];
                b += u[j] * m[j][i];
            }
            assert!((a - su[i]).norm() < 1e-12);
            assert!((b - stu[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn serde_is_zero_based() {
        let p = Permutation::from_one_based(&[2, 3, 1]).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "[1,2,0]");
        let s = PermutationSum::from_perms(vec![p.clone(), Permutation::identity(3)]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"n":3,"d":2,"perms":[[1,2,0],[0,1,2]]}"#);
        let back: PermutationSum = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Permutation>("[0,0,1]").is_err());
        assert!(serde_json::from_str::<PermutationSum>(r#"{"n":3,"d":1,"perms":[]}"#).is_err());
    }

    proptest! {
        #[test]
        fn sum_invariants(n in 1usize..40, d in 1usize..6, seed in any::<u64>()) {
            let mut rng = RngStream::new(seed, 0);
            let s = PermutationSum::sample(n, d, &mut rng).unwrap();
            prop_assert!(s.row_sums().iter().all(|&r| r == d));
            prop_assert!(s.col_sums().iter().all(|&c| c == d));
            let ones = vec![Complex64::new(1.0, 0.0); n];
            let want = vec![Complex64::new(d as f64, 0.0); n];
            prop_assert_eq!(s.matvec(&ones, false).unwrap(), want.clone());
            prop_assert_eq!(s.matvec(&ones, true).unwrap(), want);
            prop_assert!(s.trace_ssstar() >= n * d);
            let cycles = s.perms()[0].cycle_type();
            prop_assert_eq!(cycles.iter().sum::<usize>(), n);
            prop_assert_eq!(cycles.iter().filter(|&&c| c == 1).count(), s.perms()[0].fixed_points());
        }

        #[test]
        fn transposition_moves_two_points(n in 2usize..50, seed in any::<u64>()) {
            let mut rng = RngStream::new(seed, 1);
            let p = Permutation::sample(n, &mut rng).unwrap();
            let i = rng.below(n as u64) as usize;
            let mut j = rng.below(n as u64 - 1) as usize;
            if j >= i { j += 1; }
            let q = p.apply_transposition(i, j).unwrap();
            prop_assert_eq!(hamming_distance(&p, &q).unwrap(), 2);
        }
    }
}
