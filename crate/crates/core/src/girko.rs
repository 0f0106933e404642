//! Girko's reconstruction on a square grid: log-potential fields, the
//! five-point Laplacian, circular-law distances and the Ginibre baseline.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permmat::{PermutationSum, RngStream};
use crate::spectral::{self, ShiftedMatrix};

/// Uniform square lattice of `resolution x resolution` nodes centred at
/// `center`; node `(j, k)` sits at `center + (j h - w) + i (k h - w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexGrid {
    pub center: Complex64,
    pub half_width: f64,
    pub resolution: usize,
}

impl Default for ComplexGrid {
    fn default() -> Self {
        Self {
            center: Complex64::new(0.0, 0.0),
            half_width: 1.5,
            resolution: 61,
        }
    }
}

impl ComplexGrid {
    pub fn new(center: Complex64, half_width: f64, resolution: usize) -> Result<Self> {
        let g = Self {
            center,
            half_width,
            resolution,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.resolution < 3 {
            errs.push(format!("grid resolution {} must be at least 3", self.resolution));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            errs.push(format!("grid half_width {} must be positive", self.half_width));
        }
        if !(self.center.re.is_finite() && self.center.im.is_finite()) {
            errs.push("grid center must be finite".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.resolution - 1) as f64
    }

    pub fn node(&self, j: usize, k: usize) -> Complex64 {
        let h = self.spacing();
        self.center + Complex64::new(j as f64 * h - self.half_width, k as f64 * h - self.half_width)
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.resolution == 0
    }

    /// Node indices in row-major order `(j, k)`, `j` along the real axis.
    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.resolution).flat_map(move |j| (0..self.resolution).map(move |k| (j, k)))
    }

    pub fn is_interior(&self, j: usize, k: usize) -> bool {
        j > 0 && k > 0 && j + 1 < self.resolution && k + 1 < self.resolution
    }

    fn header(&self) -> String {
        format!(
            "# grid: center_re={}, center_im={}, half_width={}, resolution={}\n",
            self.center.re, self.center.im, self.half_width, self.resolution
        )
    }
}

/// Log-potential values `<Log, ν_n^z>` at every grid node, indexed
/// `values[j][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub grid: ComplexGrid,
    pub values: Vec<Vec<f64>>,
    pub clip_flags: Vec<Vec<bool>>,
}

impl PotentialField {
    /// Field from an explicit function of `z`; used for analytic test fields.
    pub fn from_fn(grid: ComplexGrid, f: impl Fn(Complex64) -> f64) -> Self {
        let r = grid.resolution;
        let values = (0..r).map(|j| (0..r).map(|k| f(grid.node(j, k))).collect()).collect();
        Self {
            grid,
            values,
            clip_flags: vec![vec![false; r]; r],
        }
    }

    /// Node-wise mean of several fields on the same grid; a node is flagged
    /// when any input flags it.
    pub fn average(fields: &[PotentialField]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::domain("cannot average an empty list of fields"))?;
        let r = first.grid.resolution;
        let mut out = PotentialField {
            grid: first.grid,
            values: vec![vec![0.0; r]; r],
            clip_flags: vec![vec![false; r]; r],
        };
        for f in fields {
            if f.grid != first.grid {
                return Err(Error::domain("fields live on different grids"));
            }
            for j in 0..r {
                for k in 0..r {
                    out.values[j][k] += f.values[j][k] / fields.len() as f64;
                    out.clip_flags[j][k] |= f.clip_flags[j][k];
                }
            }
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.grid.header();
        out.push_str("re_z,im_z,value,clipped\n");
        for (j, k) in self.grid.indices() {
            let z = self.grid.node(j, k);
            let _ = writeln!(
                out,
                "{},{},{},{}",
                z.re, z.im, self.values[j][k], self.clip_flags[j][k] as u8
            );
        }
        out
    }
}

/// Builds a potential field from a per-node matrix constructor, evaluating
/// nodes in parallel. Errors carry the node coordinates.
pub fn potential_field_with<F>(grid: ComplexGrid, clip: f64, build: F) -> Result<PotentialField>
where
    F: Fn(Complex64) -> ShiftedMatrix + Sync,
{
    grid.validate()?;
    let r = grid.resolution;
    let nodes: Vec<(usize, usize)> = grid.indices().collect();
    let results: Vec<Result<spectral::LogPotential>> = nodes
        .par_iter()
        .map(|&(j, k)| {
            let z = grid.node(j, k);
            spectral::singular_values(&build(z))
                .map(|spec| spectral::log_potential(&spec, clip))
                .map_err(|e| Error::AtNode {
                    context: format!("grid node ({j}, {k}) at z = {z}"),
                    source: Box::new(e),
                })
        })
        .collect();
    let mut values = vec![vec![0.0; r]; r];
    let mut clip_flags = vec![vec![false; r]; r];
    for (&(j, k), res) in nodes.iter().zip(results) {
        let lp = res?;
        values[j][k] = lp.value;
        clip_flags[j][k] = lp.clipped;
    }
    Ok(PotentialField {
        grid,
        values,
        clip_flags,
    })
}

pub fn log_potential_field(s: &PermutationSum, grid: ComplexGrid, clip: f64) -> Result<PotentialField> {
    potential_field_with(grid, clip, |z| spectral::build_shifted(s, z))
}

/// Potential field of `zI - G/sqrt(n)`.
pub fn ginibre_potential_field(g: &DMatrix<Complex64>, grid: ComplexGrid, clip: f64) -> Result<PotentialField> {
    let n = g.nrows();
    let scaled = g / Complex64::new((n as f64).sqrt(), 0.0);
    potential_field_with(grid, clip, |z| {
        let mut a = -scaled.clone();
        for i in 0..n {
            a[(i, i)] += z;
        }
        ShiftedMatrix { n, d: 0, z, entries: a }
    })
}

/// `(1/2π)` times the five-point Laplacian on interior nodes, indexed like the
/// field. Boundary nodes and nodes whose stencil touches a clipped value are
/// `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub grid: ComplexGrid,
    pub values: Vec<Vec<Option<f64>>>,
}

impl DensityField {
    /// `h² Σ` over defined interior nodes.
    pub fn total_mass(&self) -> f64 {
        let h = self.grid.spacing();
        self.values.iter().flatten().flatten().sum::<f64>() * h * h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.grid.header();
        out.push_str("re_z,im_z,value,clipped\n");
        for (j, k) in self.grid.indices() {
            if !self.grid.is_interior(j, k) {
                continue;
            }
            let z = self.grid.node(j, k);
            match self.values[j][k] {
                Some(v) => {
                    let _ = writeln!(out, "{},{},{v},0", z.re, z.im);
                }
                None => {
                    let _ = writeln!(out, "{},{},NaN,1", z.re, z.im);
                }
            }
        }
        out
    }
}

pub fn laplacian_density(field: &PotentialField) -> DensityField {
    let grid = field.grid;
    let r = grid.resolution;
    let h2 = grid.spacing() * grid.spacing();
    let f = &field.values;
    let c = &field.clip_flags;
    let mut values = vec![vec![None; r]; r];
    for j in 1..r - 1 {
        for k in 1..r - 1 {
            if c[j][k] || c[j + 1][k] || c[j - 1][k] || c[j][k + 1] || c[j][k - 1] {
                continue;
            }
            let lap = (f[j + 1][k] + f[j - 1][k] + f[j][k + 1] + f[j][k - 1] - 4.0 * f[j][k]) / h2;
            values[j][k] = Some(lap / (2.0 * PI));
        }
    }
    DensityField { grid, values }
}

/// Distances of an eigenvalue cloud from the uniform law on the unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskMetrics {
    /// Fraction of points with `|λ| ≤ 1 + ε`.
    pub inside_fraction: f64,
    /// `sup_r |F̂(r) - r²|` over the points inside the closed unit disk.
    pub radial_ks: f64,
    /// KS distance of the arguments from the uniform law on `[-π, π)`.
    pub angular_ks: f64,
}

/// Two-sided Kolmogorov–Smirnov distance of `samples` from `cdf`. An empty
/// sample is at distance 1.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let m = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (((i + 1) as f64 / m) - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max)
}

pub fn disk_metrics(eigs: &[Complex64], epsilon: f64) -> DiskMetrics {
    let n = eigs.len().max(1) as f64;
    let inside_fraction = eigs.iter().filter(|l| l.norm() <= 1.0 + epsilon).count() as f64 / n;
    let radii: Vec<f64> = eigs.iter().map(|l| l.norm()).filter(|&r| r <= 1.0).collect();
    let radial_ks = ks_statistic(&radii, |r| r * r);
    let angles: Vec<f64> = eigs
        .iter()
        .map(|l| {
            let a = l.arg();
            // arg returns (-π, π]; fold π onto -π
            if a >= PI {
                -PI
            } else {
                a
            }
        })
        .collect();
    let angular_ks = ks_statistic(&angles, |a| (a + PI) / (2.0 * PI));
    DiskMetrics {
        inside_fraction,
        radial_ks,
        angular_ks,
    }
}

/// `n x n` matrix of independent standard complex Gaussians (real and
/// imaginary parts `N(0, 1/2)`). Callers scale by `1/sqrt(n)`.
pub fn sample_ginibre(n: usize, rng: &mut RngStream) -> Result<DMatrix<Complex64>> {
    if n == 0 {
        return Err(Error::InvalidDimension("Ginibre matrix needs n >= 1".into()));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    // column-major fill keeps the draw order tied to storage order
    for entry in g.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *entry = Complex64::new(s * re, s * im);
    }
    Ok(g)
}

/// Per-node differences of normalised log-determinants between the
/// permutation model and a Ginibre sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacementComparison {
    pub grid: ComplexGrid,
    /// `Δ(z) = (1/n) log|det(S/sqrt(d) - z)| - (1/n) log|det(G/sqrt(n) - z)|`.
    pub delta: Vec<Vec<f64>>,
    /// Radius of the disk used by the summaries.
    pub radius: f64,
    pub sup_abs: f64,
    pub mean_abs: f64,
}

impl ReplacementComparison {
    /// Recomputes the summaries over nodes with `|z| ≤ radius`.
    pub fn summarize(&mut self, radius: f64) {
        let mut sup: f64 = 0.0;
        let mut sum = 0.0;
        let mut count = 0usize;
        for (j, k) in self.grid.indices() {
            if self.grid.node(j, k).norm() <= radius {
                let v = self.delta[j][k].abs();
                sup = sup.max(v);
                sum += v;
                count += 1;
            }
        }
        self.radius = radius;
        self.sup_abs = sup;
        self.mean_abs = if count > 0 { sum / count as f64 } else { 0.0 };
    }
}

/// Default summary radius for [`replacement_compare`].
pub const REPLACEMENT_RADIUS: f64 = 0.9;

pub fn replacement_compare(
    s: &PermutationSum,
    g: &DMatrix<Complex64>,
    grid: ComplexGrid,
) -> Result<ReplacementComparison> {
    grid.validate()?;
    let n = s.n();
    if g.nrows() != n || g.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: g.nrows(),
        });
    }
    let b = spectral::dense(s).map(|x| Complex64::new(x / (s.d() as f64).sqrt(), 0.0));
    let gs = g / Complex64::new((n as f64).sqrt(), 0.0);
    let nodes: Vec<(usize, usize)> = grid.indices().collect();
    let diffs: Vec<f64> = nodes
        .par_iter()
        .map(|&(j, k)| {
            let z = grid.node(j, k);
            let mut lhs = b.clone();
            let mut rhs = gs.clone();
            for i in 0..n {
                lhs[(i, i)] -= z;
                rhs[(i, i)] -= z;
            }
            spectral::log_abs_det_per_dim(&lhs) - spectral::log_abs_det_per_dim(&rhs)
        })
        .collect();
    let r = grid.resolution;
    let mut delta = vec![vec![0.0; r]; r];
    for (&(j, k), v) in nodes.iter().zip(diffs) {
        delta[j][k] = v;
    }
    let mut out = ReplacementComparison {
        grid,
        delta,
        radius: REPLACEMENT_RADIUS,
        sup_abs: 0.0,
        mean_abs: 0.0,
    };
    out.summarize(REPLACEMENT_RADIUS);
    Ok(out)
}

/// The `C²` bump `ψ(z) = (1 - |z - c|²/R²)³` on the disk of radius `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Complex64,
    pub radius: f64,
}

impl Bump {
    fn t(&self, z: Complex64) -> f64 {
        (z - self.center).norm_sqr() / (self.radius * self.radius)
    }

    pub fn value(&self, z: Complex64) -> f64 {
        let t = self.t(z);
        if t >= 1.0 {
            0.0
        } else {
            (1.0 - t).powi(3)
        }
    }

    /// `Δψ = (1 - t)(36t - 12)/R²` with `t = |z - c|²/R²`.
    pub fn laplacian(&self, z: Complex64) -> f64 {
        let t = self.t(z);
        if t >= 1.0 {
            0.0
        } else {
            (1.0 - t) * (36.0 * t - 12.0) / (self.radius * self.radius)
        }
    }

    /// Square grid covering the support with `resolution` nodes per side.
    pub fn grid(&self, resolution: usize) -> Result<ComplexGrid> {
        ComplexGrid::new(self.center, self.radius, resolution)
    }
}

/// Both sides of `∫ψ dL = (1/2π) ∫ Δψ(z) <Log, ν_n^z> dγ(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpCheck {
    /// `(1/n) Σ ψ(λ_i)` over the eigenvalues of `S/sqrt(d)`.
    pub eigenvalue_side: f64,
    /// Grid quadrature of the potential side.
    pub potential_side: f64,
    pub clipped_nodes: usize,
}

impl BumpCheck {
    pub fn abs_error(&self) -> f64 {
        (self.eigenvalue_side - self.potential_side).abs()
    }
}

/// Evaluates both sides of the bump identity for one sample. The potential
/// side uses the trapezoid rule on `bump.grid(resolution)`; the integrand
/// vanishes on the boundary of the support, so only interior nodes
/// contribute. An even resolution keeps nodes off the real axis.
pub fn bump_consistency(s: &PermutationSum, bump: Bump, resolution: usize, clip: f64) -> Result<BumpCheck> {
    let grid = bump.grid(resolution)?;
    let eigs = spectral::eigenvalues(s)?;
    let eigenvalue_side = eigs.eigenvalues.iter().map(|&l| bump.value(l)).sum::<f64>() / s.n() as f64;
    let nodes: Vec<Complex64> = grid
        .indices()
        .map(|(j, k)| grid.node(j, k))
        .filter(|&z| bump.laplacian(z) != 0.0)
        .collect();
    let parts: Vec<Result<(f64, bool)>> = nodes
        .par_iter()
        .map(|&z| {
            let spec = spectral::singular_values(&spectral::build_shifted(s, z)).map_err(|e| Error::AtNode {
                context: format!("bump quadrature node z = {z}"),
                source: Box::new(e),
            })?;
            let lp = spectral::log_potential(&spec, clip);
            Ok((bump.laplacian(z) * lp.value, lp.clipped))
        })
        .collect();
    let h = grid.spacing();
    let mut sum = 0.0;
    let mut clipped_nodes = 0;
    for p in parts {
        let (v, clipped) = p?;
        sum += v;
        clipped_nodes += usize::from(clipped);
    }
    Ok(BumpCheck {
        eigenvalue_side,
        potential_side: sum * h * h / (2.0 * PI),
        clipped_nodes,
    })
}

/// Eigenvalue cloud as `(re, im)` CSV.
pub fn cloud_csv(eigs: &[Complex64]) -> String {
    let mut out = String::from("re,im\n");
    for l in eigs {
        let _ = writeln!(out, "{},{}", l.re, l.im);
    }
    out
}
