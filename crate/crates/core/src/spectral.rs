//! Dense spectral computations on the shifted matrix `A(z) = zI - S/sqrt(d)`.
//!
//! Everything here works on materialised `n x n` (or `2n x 2n`) matrices and
//! is meant for desk-scale sizes (a few thousand at most).

use std::fmt::Write as _;

use nalgebra::linalg::{Schur, SymmetricEigen, SVD};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permmat::{PermutationSum, RngStream};

/// Default floor for singular values inside the log potential.
pub const DEFAULT_CLIP: f64 = 1e-30;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// FNV-1a over the bit patterns of the entries; attached to numeric errors so
/// a failing input can be identified in logs.
pub fn matrix_hash(m: &DMatrix<Complex64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in m.iter() {
        for word in [c.re.to_bits(), c.im.to_bits()] {
            for byte in word.to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

/// The dense `n x n` multiplicity matrix of `S`.
pub fn dense(s: &PermutationSum) -> DMatrix<f64> {
    let n = s.n();
    let mut m = DMatrix::zeros(n, n);
    for p in s.perms() {
        for (i, &j) in p.images().iter().enumerate() {
            m[(i, j)] += 1.0;
        }
    }
    m
}

/// `A(z) = zI - S/sqrt(d)` in dense complex form.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedMatrix {
    pub n: usize,
    pub d: usize,
    pub z: Complex64,
    pub entries: DMatrix<Complex64>,
}

impl ShiftedMatrix {
    /// Wraps an arbitrary square matrix, e.g. `zI - G/sqrt(n)` for a Ginibre
    /// sample. `d` is carried as metadata only.
    pub fn from_dense(d: usize, z: Complex64, entries: DMatrix<Complex64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                actual: entries.ncols(),
            });
        }
        Ok(Self {
            n: entries.nrows(),
            d,
            z,
            entries,
        })
    }

    /// `true` when every entry has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|c| c.im == 0.0)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|c| c.norm_sqr()).sum()
    }
}

pub fn build_shifted(s: &PermutationSum, z: Complex64) -> ShiftedMatrix {
    build_shifted_with(s, z, None)
}

/// `zI - S/sqrt(d) + M`.
pub fn build_shifted_with(s: &PermutationSum, z: Complex64, shift: Option<&DMatrix<Complex64>>) -> ShiftedMatrix {
    let n = s.n();
    let scale = 1.0 / (s.d() as f64).sqrt();
    let mut entries = match shift {
        Some(m) => m.clone(),
        None => DMatrix::from_element(n, n, ZERO),
    };
    for i in 0..n {
        entries[(i, i)] += z;
    }
    for p in s.perms() {
        for (i, &j) in p.images().iter().enumerate() {
            entries[(i, j)] -= scale;
        }
    }
    ShiftedMatrix {
        n,
        d: s.d(),
        z,
        entries,
    }
}

/// Singular values of `A(z)`, sorted nonincreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSpectrum {
    pub n: usize,
    pub d: usize,
    pub z: Complex64,
    pub s: Vec<f64>,
}

fn svd_iteration_cap(n: usize) -> usize {
    200 * n.max(10)
}

pub fn singular_values(a: &ShiftedMatrix) -> Result<SingularSpectrum> {
    let cap = svd_iteration_cap(a.n);
    let mut s: Vec<f64> = if a.is_real() {
        let re = a.entries.map(|c| c.re);
        SVD::try_new_unordered(re, false, false, f64::EPSILON, cap)
            .map(|svd| svd.singular_values.iter().copied().collect())
    } else {
        SVD::try_new_unordered(a.entries.clone(), false, false, f64::EPSILON, cap)
            .map(|svd| svd.singular_values.iter().copied().collect())
    }
    .ok_or_else(|| Error::Numeric {
        what: "singular value decomposition".into(),
        hash: matrix_hash(&a.entries),
    })?;
    for v in &mut s {
        *v = v.abs();
    }
    s.sort_unstable_by(|x, y| y.total_cmp(x));
    Ok(SingularSpectrum {
        n: a.n,
        d: a.d,
        z: a.z,
        s,
    })
}

/// The Hermitian `2n x 2n` matrix `[[0, A], [A^*, 0]]`.
pub fn hermitize(a: &ShiftedMatrix) -> DMatrix<Complex64> {
    let n = a.n;
    let mut h = DMatrix::from_element(2 * n, 2 * n, ZERO);
    h.view_mut((0, n), (n, n)).copy_from(&a.entries);
    h.view_mut((n, 0), (n, n)).copy_from(&a.entries.adjoint());
    h
}

/// Eigenvalues of a Hermitian matrix, sorted increasing.
pub fn hermitian_eigenvalues(h: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let cap = svd_iteration_cap(h.nrows());
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, cap).ok_or_else(|| Error::Numeric {
        what: "Hermitian eigensolver".into(),
        hash: matrix_hash(h),
    })?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_unstable_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenvalues of `S/sqrt(d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSpectrum {
    pub n: usize,
    pub d: usize,
    pub eigenvalues: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }

    /// Index of the eigenvalue closest to `target`.
    pub fn nearest(&self, target: Complex64) -> Option<usize> {
        self.eigenvalues
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (*a - target).norm().total_cmp(&(*b - target).norm()))
            .map(|(i, _)| i)
    }

    /// The eigenvalues with the Perron value `sqrt(d)` (the one nearest to it)
    /// removed.
    pub fn without_perron(&self) -> Vec<Complex64> {
        let perron = Complex64::new((self.d as f64).sqrt(), 0.0);
        let mut out = self.eigenvalues.clone();
        if let Some(k) = self.nearest(perron) {
            out.remove(k);
        }
        out
    }

    pub fn to_csv(&self, seed: Option<u64>) -> String {
        let mut out = csv_comment(self.n, self.d, ZERO, seed);
        out.push_str("index,re,im\n");
        for (k, l) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(out, "{k},{},{}", l.re, l.im);
        }
        out
    }
}

impl SingularSpectrum {
    pub fn smallest(&self) -> f64 {
        self.s.last().copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self, seed: Option<u64>) -> String {
        let mut out = csv_comment(self.n, self.d, self.z, seed);
        out.push_str("index,value\n");
        for (k, v) in self.s.iter().enumerate() {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }
}

fn csv_comment(n: usize, d: usize, z: Complex64, seed: Option<u64>) -> String {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!("# n={n}, d={d}, z_re={}, z_im={}, seed={seed}\n", z.re, z.im)
}

pub fn eigenvalues(s: &PermutationSum) -> Result<ComplexSpectrum> {
    let scale = 1.0 / (s.d() as f64).sqrt();
    let m = dense(s) * scale;
    let ev = real_eigenvalues(&m)?;
    Ok(ComplexSpectrum {
        n: s.n(),
        d: s.d(),
        eigenvalues: ev,
    })
}

/// Eigenvalues of a general real square matrix via the real Schur form.
pub fn real_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 1 {
        return Ok(vec![Complex64::new(m[(0, 0)], 0.0)]);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, svd_iteration_cap(n)).ok_or_else(|| Error::Numeric {
        what: "real Schur decomposition".into(),
        hash: matrix_hash(&m.map(|x| Complex64::new(x, 0.0))),
    })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalues of a general complex square matrix via the complex Schur form.
pub fn complex_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, svd_iteration_cap(n)).ok_or_else(|| Error::Numeric {
        what: "complex Schur decomposition".into(),
        hash: matrix_hash(m),
    })?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

fn require_off_axis(xi: Complex64) -> Result<()> {
    if xi.im == 0.0 || !xi.im.is_finite() || !xi.re.is_finite() {
        return Err(Error::domain(format!(
            "spectral parameter {xi} must lie off the real axis"
        )));
    }
    Ok(())
}

/// `m_n(ξ) = (1/n) Σ 1/(ξ - s_i²)`, the Stieltjes transform of the squared
/// singular value law.
pub fn stieltjes_m(spec: &SingularSpectrum, xi: Complex64) -> Result<Complex64> {
    require_off_axis(xi)?;
    let sum: Complex64 = spec.s.iter().map(|&s| 1.0 / (xi - s * s)).sum();
    Ok(sum / spec.s.len() as f64)
}

/// `m̃_n(ξ) = (1/n) Σ ξ/(ξ² - s_i²)`, the Stieltjes transform of the
/// symmetrised singular value law `(1/2n) Σ (δ_{s_i} + δ_{-s_i})`.
pub fn stieltjes_sym(spec: &SingularSpectrum, xi: Complex64) -> Result<Complex64> {
    require_off_axis(xi)?;
    let xi2 = xi * xi;
    let sum: Complex64 = spec.s.iter().map(|&s| xi / (xi2 - s * s)).sum();
    Ok(sum / spec.s.len() as f64)
}

/// Mass of `(-y, y)` under the symmetrised singular value law together with
/// the Stieltjes upper bound `2y |Im m̃_n(iy)|`.
pub fn interval_mass_bound(spec: &SingularSpectrum, y: f64) -> Result<(f64, f64)> {
    if !(y > 0.0) {
        return Err(Error::domain("interval half-width must be positive"));
    }
    let mass = spec.s.iter().filter(|&&s| s < y).count() as f64 / spec.s.len() as f64;
    let m = stieltjes_sym(spec, Complex64::new(0.0, y))?;
    Ok((mass, 2.0 * y * m.im.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogPotential {
    pub value: f64,
    /// Whether any singular value was raised to the clip floor.
    pub clipped: bool,
}

/// `(1/n) Σ log max(s_i, clip)`.
pub fn log_potential(spec: &SingularSpectrum, clip: f64) -> LogPotential {
    let mut clipped = false;
    let sum: f64 = spec
        .s
        .iter()
        .map(|&s| {
            if s < clip {
                clipped = true;
                clip.ln()
            } else {
                s.ln()
            }
        })
        .sum();
    LogPotential {
        value: sum / spec.s.len() as f64,
        clipped,
    }
}

/// `(1/n) log |det M|` from an LU factorisation; `-inf` for an exactly
/// singular matrix.
pub fn log_abs_det_per_dim(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let lu = m.clone().lu();
    let u = lu.u();
    let sum: f64 = (0..n).map(|i| u[(i, i)].norm().ln()).sum();
    sum / n as f64
}

/// Result of the smallest-singular-value computation and its cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallestSingular {
    /// `s_n` from the full SVD.
    pub svd: f64,
    /// `1/||A^{-1}||` from inverse power iteration, when `A` is numerically
    /// invertible.
    pub inverse_iteration: Option<f64>,
}

impl SmallestSingular {
    pub fn relative_mismatch(&self) -> Option<f64> {
        self.inverse_iteration
            .map(|inv| (inv - self.svd).abs() / self.svd.max(f64::MIN_POSITIVE))
    }
}

/// Relative agreement required between the SVD and inverse-iteration routes.
pub const SSV_CROSSCHECK_TOL: f64 = 1e-6;

/// `s_n(A)` from the SVD, cross-checked against inverse iteration. A mismatch
/// above [`SSV_CROSSCHECK_TOL`] is reported as a numeric error.
pub fn smallest_singular(a: &ShiftedMatrix) -> Result<SmallestSingular> {
    let svd = singular_values(a)?.smallest();
    let scale = a.entries.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let inverse_iteration = if svd > 1e-13 * scale.max(1.0) {
        inverse_iteration_smallest(&a.entries)
    } else {
        None
    };
    let out = SmallestSingular { svd, inverse_iteration };
    match out.relative_mismatch() {
        Some(rel) if rel > SSV_CROSSCHECK_TOL => Err(Error::Numeric {
            what: format!(
                "smallest singular value cross-check (svd {svd:e}, inverse iteration {:e})",
                inverse_iteration.unwrap_or(f64::NAN)
            ),
            hash: matrix_hash(&a.entries),
        }),
        _ => Ok(out),
    }
}

fn normalize(v: &mut nalgebra::DVector<Complex64>) -> f64 {
    let norm = v.norm();
    if norm > 0.0 {
        *v /= Complex64::new(norm, 0.0);
    }
    norm
}

/// Estimates `1/||A^{-1}||` by power iteration on `(A^* A)^{-1}` using LU
/// solves with `A` and `A^*`. Returns `None` when a factorisation is singular.
pub fn inverse_iteration_smallest(a: &DMatrix<Complex64>) -> Option<f64> {
    let n = a.nrows();
    let lu = a.clone().lu();
    let lu_adj = a.adjoint().lu();
    if !lu.is_invertible() || !lu_adj.is_invertible() {
        return None;
    }
    // fixed start vector keeps the estimate a pure function of `a`
    let mut rng = RngStream::new(0x5EED_0F1A, 0);
    let mut x = nalgebra::DVector::from_fn(n, |_, _| Complex64::new(rng.uniform() - 0.5, rng.uniform() - 0.5));
    normalize(&mut x);
    let mut rayleigh = 0.0f64;
    let mut settled = 0;
    for _ in 0..20_000 {
        let w = lu_adj.solve(&x)?;
        let next = w.norm_squared();
        let mut y = lu.solve(&w)?;
        if normalize(&mut y) == 0.0 || !next.is_finite() {
            return None;
        }
        x = y;
        let change = (next - rayleigh).abs() / next;
        rayleigh = next;
        if change < 1e-15 {
            settled += 1;
            if settled >= 3 {
                break;
            }
        } else {
            settled = 0;
        }
    }
    Some(1.0 / rayleigh.sqrt())
}

/// Normalised traces of the four `n x n` blocks of
/// `F(ξ) = [ξ I_2n - [[0, A], [A^*, 0]]]^{-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockTraces {
    pub t11: Complex64,
    pub t12: Complex64,
    pub t21: Complex64,
    pub t22: Complex64,
}

impl BlockTraces {
    /// `(Tr F_11 + Tr F_22)/(2n)`, which equals `m̃_n(ξ)`.
    pub fn diagonal_average(&self) -> Complex64 {
        (self.t11 + self.t22) * 0.5
    }

    pub fn as_array(&self) -> [Complex64; 4] {
        [self.t11, self.t12, self.t21, self.t22]
    }
}

/// Block resolvent traces for `A = zI - S/sqrt(d) + M` by a dense `2n x 2n`
/// inversion; independent of the SVD path.
pub fn block_resolvent_traces(
    s: &PermutationSum,
    z: Complex64,
    xi: Complex64,
    shift: Option<&DMatrix<Complex64>>,
) -> Result<BlockTraces> {
    if let Some(m) = shift {
        if m.nrows() != s.n() || m.ncols() != s.n() {
            return Err(Error::DimensionMismatch {
                expected: s.n(),
                actual: m.nrows(),
            });
        }
    }
    let a = build_shifted_with(s, z, shift);
    resolvent_block_traces_dense(&a.entries, xi)
}

pub fn resolvent_block_traces_dense(a: &DMatrix<Complex64>, xi: Complex64) -> Result<BlockTraces> {
    require_off_axis(xi)?;
    let n = a.nrows();
    let mut k = DMatrix::from_element(2 * n, 2 * n, ZERO);
    for i in 0..2 * n {
        k[(i, i)] = xi;
    }
    k.view_mut((0, n), (n, n)).copy_from(&(-a));
    k.view_mut((n, 0), (n, n)).copy_from(&(-a.adjoint()));
    let f = k
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::domain(format!("resolvent system is singular at ξ = {xi}")))?;
    let tr = |r0: usize, c0: usize| -> Complex64 { (0..n).map(|i| f[(r0 + i, c0 + i)]).sum::<Complex64>() / n as f64 };
    Ok(BlockTraces {
        t11: tr(0, 0),
        t12: tr(0, n),
        t21: tr(n, 0),
        t22: tr(n, n),
    })
}

/// The same traces through the Schur complement: with
/// `R = (ξ² - A A^*)^{-1}`, the blocks are `F_11 = ξR`, `F_12 = RA`,
/// `F_21 = A^* R` and `Tr F_22 = Tr F_11`. Only an `n x n` inverse is needed.
pub fn resolvent_block_traces_schur(a: &DMatrix<Complex64>, xi: Complex64) -> Result<BlockTraces> {
    require_off_axis(xi)?;
    let n = a.nrows();
    let mut g = -(a * a.adjoint());
    let xi2 = xi * xi;
    for i in 0..n {
        g[(i, i)] += xi2;
    }
    let r = g
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::domain(format!("resolvent system is singular at ξ = {xi}")))?;
    let nf = n as f64;
    let tr_r: Complex64 = (0..n).map(|i| r[(i, i)]).sum();
    let mut tr_ra = ZERO;
    let mut tr_ar = ZERO;
    for i in 0..n {
        for j in 0..n {
            tr_ra += r[(i, j)] * a[(j, i)];
            tr_ar += a[(j, i)].conj() * r[(j, i)];
        }
    }
    let t11 = xi * tr_r / nf;
    Ok(BlockTraces {
        t11,
        t12: tr_ra / nf,
        t21: tr_ar / nf,
        t22: t11,
    })
}

/// Real fast path at `ξ = iη` for real `A`: with the SPD matrix
/// `K = η² I + A Aᵀ`, `R = -K⁻¹`, so `t11 = t22 = -iη Tr K⁻¹/n` and
/// `t12 = t21 = -Tr(K⁻¹A)/n`. One Cholesky factorisation of size `n`.
pub fn resolvent_block_traces_real(a: &DMatrix<f64>, eta: f64) -> Result<BlockTraces> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::domain(format!("eta = {eta} must be positive and finite")));
    }
    let n = a.nrows();
    let mut k = a * a.transpose();
    for i in 0..n {
        k[(i, i)] += eta * eta;
    }
    let hash_src = || matrix_hash(&a.map(|x| Complex64::new(x, 0.0)));
    let chol = k.cholesky().ok_or_else(|| Error::Numeric {
        what: "Cholesky factorisation of eta^2 + A A^T".into(),
        hash: hash_src(),
    })?;
    let kinv = chol.inverse();
    let nf = n as f64;
    let tr_k: f64 = (0..n).map(|i| kinv[(i, i)]).sum();
    let tr_ka: f64 = kinv.component_mul(&a.transpose()).sum();
    let t11 = Complex64::new(0.0, -eta * tr_k / nf);
    let t12 = Complex64::new(-tr_ka / nf, 0.0);
    Ok(BlockTraces {
        t11,
        t12,
        t21: t12,
        t22: t11,
    })
}

/// `I_n` as a complex matrix; convenient for shifts.
pub fn complex_identity(n: usize) -> DMatrix<Complex64> {
    DMatrix::from_diagonal_element(n, n, ONE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permmat::Permutation;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(n: usize, rng: &mut RngStream) -> DMatrix<Complex64> {
        DMatrix::from_fn(n, n, |_, _| c(rng.uniform() - 0.5, rng.uniform() - 0.5))
    }

    fn spectrum_of(entries: DMatrix<Complex64>) -> SingularSpectrum {
        singular_values(&ShiftedMatrix::from_dense(1, ZERO, entries).unwrap()).unwrap()
    }

    #[test]
    fn build_shifted_examples() {
        let s = PermutationSum::identities(4, 1).unwrap();
        let a = build_shifted(&s, ZERO);
        assert_eq!(a.entries, -complex_identity(4));

        let s = PermutationSum::identities(3, 4).unwrap();
        let a = build_shifted(&s, c(2.0, 0.0));
        assert!(a.entries.iter().all(|x| x.norm() < 1e-15));
    }

    #[test]
    fn build_shifted_matches_reconstruction() {
        let mut rng = RngStream::new(5, 0);
        let s = PermutationSum::sample(12, 3, &mut rng).unwrap();
        let z = c(0.3, -0.7);
        let a = build_shifted(&s, z);
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { z } else { ZERO } - c(s.multiplicity(i, j) as f64 / 3f64.sqrt(), 0.0);
                assert!((a.entries[(i, j)] - want).norm() <= 1e-14 * want.norm().max(1.0));
            }
        }
    }

    #[test]
    fn singular_values_of_permutation_are_one() {
        let mut rng = RngStream::new(6, 0);
        let s = PermutationSum::sample(9, 1, &mut rng).unwrap();
        let spec = singular_values(&build_shifted(&s, ZERO)).unwrap();
        assert!(spec.s.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn singular_values_of_scalar() {
        let z = c(0.6, 0.8);
        let spec = spectrum_of(complex_identity(5) * z);
        assert!(spec.s.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        let spec = spectrum_of(complex_identity(5) * c(0.0, 2.5));
        assert!(spec.s.iter().all(|&x| (x - 2.5).abs() < 1e-12));
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        let mut rng = RngStream::new(7, 0);
        let m = random_matrix(6, &mut rng);
        let spec = spectrum_of(m.clone());
        let mut gram = hermitian_eigenvalues(&(&m * m.adjoint())).unwrap();
        gram.reverse();
        for (s, g) in spec.s.iter().zip(&gram) {
            assert!((s * s - g).abs() < 1e-9);
        }
        let fro: f64 = m.iter().map(|x| x.norm_sqr()).sum();
        let ssq: f64 = spec.s.iter().map(|x| x * x).sum();
        assert!((fro - ssq).abs() <= 1e-10 * fro);
        assert!(spec.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn hermitize_examples() {
        let mut a = DMatrix::from_element(2, 2, ZERO);
        a[(0, 0)] = c(1.0, 0.0);
        a[(1, 1)] = c(2.0, 0.0);
        let sm = ShiftedMatrix::from_dense(1, ZERO, a).unwrap();
        let ev = hermitian_eigenvalues(&hermitize(&sm)).unwrap();
        for (got, want) in ev.iter().zip([-2.0, -1.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let zero = ShiftedMatrix::from_dense(1, ZERO, DMatrix::from_element(3, 3, ZERO)).unwrap();
        assert!(hermitian_eigenvalues(&hermitize(&zero))
            .unwrap()
            .iter()
            .all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn hermitize_random_matches_svd() {
        let mut rng = RngStream::new(8, 0);
        let a = ShiftedMatrix::from_dense(1, ZERO, random_matrix(5, &mut rng)).unwrap();
        let spec = singular_values(&a).unwrap();
        let ev = hermitian_eigenvalues(&hermitize(&a)).unwrap();
        let mut want: Vec<f64> = spec.s.iter().flat_map(|&s| [s, -s]).collect();
        want.sort_unstable_by(f64::total_cmp);
        for (g, w) in ev.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn eigenvalues_of_cycle_are_roots_of_unity() {
        let n = 7;
        let cycle = Permutation::from_images((0..n).map(|i| (i + 1) % n).collect()).unwrap();
        let s = PermutationSum::from_perms(vec![cycle]).unwrap();
        let spec = eigenvalues(&s).unwrap();
        for k in 0..n {
            let root = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
            let closest = spec
                .eigenvalues
                .iter()
                .map(|l| (l - root).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 1e-10);
        }
    }

    #[test]
    fn eigenvalues_of_identity_sum() {
        let s = PermutationSum::identities(5, 4).unwrap();
        let spec = eigenvalues(&s).unwrap();
        assert!(spec.eigenvalues.iter().all(|l| (l - c(2.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn eigenvalue_product_is_determinant() {
        let mut rng = RngStream::new(9, 0);
        let s = PermutationSum::sample(6, 2, &mut rng).unwrap();
        let spec = eigenvalues(&s).unwrap();
        let prod: Complex64 = spec.eigenvalues.iter().product();
        let det = dense(&s).lu().determinant() / 2f64.powi(3);
        let scale = det.abs().max(1.0);
        assert!((prod - c(det, 0.0)).norm() <= 1e-8 * scale);
    }

    #[test]
    fn stieltjes_examples() {
        let zero = SingularSpectrum {
            n: 3,
            d: 1,
            z: ZERO,
            s: vec![0.0; 3],
        };
        assert!((stieltjes_m(&zero, c(0.0, 1.0)).unwrap() - c(0.0, -1.0)).norm() < 1e-15);
        let one = SingularSpectrum {
            n: 1,
            d: 1,
            z: ZERO,
            s: vec![1.0],
        };
        let want = 1.0 / (c(0.0, 2.0) - 1.0);
        assert!((stieltjes_m(&one, c(0.0, 2.0)).unwrap() - want).norm() < 1e-15);
        let eta = 0.4;
        assert!((stieltjes_sym(&zero, c(0.0, eta)).unwrap() - c(0.0, -1.0 / eta)).norm() < 1e-14);
        assert!((stieltjes_sym(&one, c(0.0, 1.0)).unwrap() - c(0.0, -0.5)).norm() < 1e-15);
        assert!(matches!(stieltjes_m(&one, c(1.0, 0.0)), Err(Error::Domain(_))));
        assert!(matches!(stieltjes_sym(&one, c(1.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn stieltjes_m_matches_dense_resolvent() {
        let mut rng = RngStream::new(10, 0);
        let m = random_matrix(7, &mut rng);
        let spec = spectrum_of(m.clone());
        let xi = c(1.0, 1.0);
        let mut g = -(&m * m.adjoint());
        for i in 0..7 {
            g[(i, i)] += xi;
        }
        let inv = g.try_inverse().unwrap();
        let tr: Complex64 = (0..7).map(|i| inv[(i, i)]).sum::<Complex64>() / 7.0;
        assert!((tr - stieltjes_m(&spec, xi).unwrap()).norm() < 1e-9);
    }

    #[test]
    fn log_potential_examples() {
        let ones = SingularSpectrum {
            n: 4,
            d: 1,
            z: ZERO,
            s: vec![1.0; 4],
        };
        assert_eq!(log_potential(&ones, DEFAULT_CLIP).value, 0.0);
        let e = SingularSpectrum {
            n: 1,
            d: 1,
            z: ZERO,
            s: vec![std::f64::consts::E],
        };
        assert!((log_potential(&e, DEFAULT_CLIP).value - 1.0).abs() < 1e-15);
        let tiny = SingularSpectrum {
            n: 2,
            d: 1,
            z: ZERO,
            s: vec![1.0, 0.0],
        };
        let lp = log_potential(&tiny, 1e-10);
        assert!(lp.clipped);
        assert!((lp.value - 0.5 * 1e-10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_potential_matches_lu() {
        let mut rng = RngStream::new(11, 0);
        let m = random_matrix(8, &mut rng);
        let lp = log_potential(&spectrum_of(m.clone()), 1e-30);
        assert!(!lp.clipped);
        assert!((lp.value - log_abs_det_per_dim(&m)).abs() < 1e-8);
    }

    #[test]
    fn smallest_singular_examples() {
        let id = ShiftedMatrix::from_dense(1, ZERO, complex_identity(4)).unwrap();
        let r = smallest_singular(&id).unwrap();
        assert!((r.svd - 1.0).abs() < 1e-14);
        let mut diag = DMatrix::from_element(3, 3, ZERO);
        diag[(0, 0)] = c(3.0, 0.0);
        diag[(1, 1)] = c(2.0, 0.0);
        diag[(2, 2)] = c(1.0, 0.0);
        let r = smallest_singular(&ShiftedMatrix::from_dense(1, ZERO, diag).unwrap()).unwrap();
        assert!((r.svd - 1.0).abs() < 1e-14);
        assert!((r.inverse_iteration.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smallest_singular_random_crosscheck() {
        let mut rng = RngStream::new(12, 0);
        for _ in 0..5 {
            let m = random_matrix(10, &mut rng);
            let a = ShiftedMatrix::from_dense(1, ZERO, m).unwrap();
            let spec = singular_values(&a).unwrap();
            let r = smallest_singular(&a).unwrap();
            assert_eq!(r.svd, spec.smallest());
            assert!(r.relative_mismatch().unwrap() <= SSV_CROSSCHECK_TOL);
        }
    }

    #[test]
    fn smallest_singular_of_zero_matrix() {
        let s = PermutationSum::identities(6, 4).unwrap();
        let a = build_shifted(&s, c(2.0, 0.0));
        let r = smallest_singular(&a).unwrap();
        assert_eq!(r.svd, 0.0);
        assert!(r.inverse_iteration.is_none());
    }

    #[test]
    fn block_traces_zero_matrix() {
        // d = 1, identity, z = 1: A = 0 and F = ξ^{-1} I
        let s = PermutationSum::identities(2, 1).unwrap();
        let xi = c(0.0, 1.0);
        let t = block_resolvent_traces(&s, c(1.0, 0.0), xi, None).unwrap();
        assert!((t.t11 - c(0.0, -1.0)).norm() < 1e-15);
        assert!((t.t22 - c(0.0, -1.0)).norm() < 1e-15);
        assert!(t.t12.norm() < 1e-15 && t.t21.norm() < 1e-15);
    }

    #[test]
    fn block_traces_match_explicit_inverse_and_schur() {
        let mut rng = RngStream::new(13, 0);
        let s = PermutationSum::sample(4, 3, &mut rng).unwrap();
        let z = c(0.2, 0.1);
        let xi = c(0.5, 0.5);
        let t = block_resolvent_traces(&s, z, xi, None).unwrap();
        let a = build_shifted(&s, z);
        let h = hermitize(&a);
        let mut k = -h;
        for i in 0..8 {
            k[(i, i)] += xi;
        }
        let f = k.try_inverse().unwrap();
        let tr = |r0: usize, c0: usize| (0..4).map(|i| f[(r0 + i, c0 + i)]).sum::<Complex64>() / 4.0;
        assert!((t.t11 - tr(0, 0)).norm() < 1e-10);
        assert!((t.t12 - tr(0, 4)).norm() < 1e-10);
        assert!((t.t21 - tr(4, 0)).norm() < 1e-10);
        assert!((t.t22 - tr(4, 4)).norm() < 1e-10);
        let schur = resolvent_block_traces_schur(&a.entries, xi).unwrap();
        for (x, y) in schur.as_array().iter().zip(t.as_array()) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn real_fast_path_matches_dense_route() {
        let mut rng = RngStream::new(15, 0);
        for (n, d, z) in [(5, 2, 0.0), (9, 4, 0.4), (12, 3, -0.7)] {
            let s = PermutationSum::sample(n, d, &mut rng).unwrap();
            let a = build_shifted(&s, c(z, 0.0));
            for eta in [0.05, 0.6, 3.0] {
                let dense = block_resolvent_traces(&s, c(z, 0.0), c(0.0, eta), None).unwrap();
                let fast = resolvent_block_traces_real(&a.entries.map(|x| x.re), eta).unwrap();
                for (x, y) in fast.as_array().iter().zip(dense.as_array()) {
                    assert!((x - y).norm() < 1e-10, "{x} vs {y}");
                }
            }
        }
        let a = DMatrix::<f64>::identity(3, 3);
        assert!(resolvent_block_traces_real(&a, 0.0).is_err());
    }

    #[test]
    fn block_traces_with_shift() {
        let mut rng = RngStream::new(14, 0);
        let s = PermutationSum::sample(6, 2, &mut rng).unwrap();
        let shift = complex_identity(6) * c(0.5, 0.0);
        let z = c(0.1, 0.0);
        let xi = c(0.0, 0.7);
        let t = block_resolvent_traces(&s, z, xi, Some(&shift)).unwrap();
        let a = build_shifted_with(&s, z, Some(&shift));
        let spec = singular_values(&a).unwrap();
        let m = stieltjes_sym(&spec, xi).unwrap();
        assert!((t.diagonal_average() - m).norm() < 1e-10);
        let bad = complex_identity(5);
        assert!(block_resolvent_traces(&s, z, xi, Some(&bad)).is_err());
        assert!(block_resolvent_traces(&s, z, c(0.3, 0.0), None).is_err());
    }

    #[test]
    fn interval_mass_is_bounded() {
        let mut rng = RngStream::new(15, 0);
        let s = PermutationSum::sample(40, 3, &mut rng).unwrap();
        let spec = singular_values(&build_shifted(&s, c(0.4, 0.1))).unwrap();
        for y in [0.01, 0.05, 0.1, 0.3, 1.0, 2.0] {
            let (mass, bound) = interval_mass_bound(&spec, y).unwrap();
            assert!(mass <= bound + 1e-15);
        }
    }

    #[test]
    fn spectrum_csv_header() {
        let spec = SingularSpectrum {
            n: 2,
            d: 3,
            z: c(0.5, -0.25),
            s: vec![2.0, 1.0],
        };
        let csv = spec.to_csv(Some(9));
        assert_eq!(csv, "# n=2, d=3, z_re=0.5, z_im=-0.25, seed=9\nindex,value\n0,2\n1,1\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn symmetrised_transform_identities(
            seed in any::<u64>(),
            re in -3.0f64..3.0,
            im in 0.05f64..3.0,
            eta in 0.05f64..5.0,
        ) {
            let mut rng = RngStream::new(seed, 0);
            let n = 1 + rng.below(20) as usize;
            let s: Vec<f64> = (0..n).map(|_| 3.0 * rng.uniform()).collect();
            let mut s = s;
            s.sort_unstable_by(|a, b| b.total_cmp(a));
            let spec = SingularSpectrum { n, d: 1, z: ZERO, s };
            let xi = c(re, im);
            let lhs = stieltjes_sym(&spec, xi).unwrap();
            let rhs = xi * stieltjes_m(&spec, xi * xi).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));

            let m = stieltjes_sym(&spec, c(0.0, eta)).unwrap();
            prop_assert!(m.re.abs() <= 1e-12);
            prop_assert!(m.im < 0.0);
            prop_assert!(m.norm() <= 1.0 / eta + 1e-12);
        }
    }
}
