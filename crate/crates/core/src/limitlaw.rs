//! Limiting objects: the cubic fixed-point equation on the imaginary axis,
//! the limiting symmetrised Stieltjes transform, the circular and fixed-`d`
//! densities, the loop-equation residual and the local-law envelope.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of `Q(x) = x(x + η)² - δx - η` with `δ = 1 - |z|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicParams {
    delta: f64,
    eta: f64,
}

impl CubicParams {
    pub fn new(delta: f64, eta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::domain(format!("delta = {delta} must lie in (0, 1]")));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::domain(format!("eta = {eta} must be positive and finite")));
        }
        Ok(Self { delta, eta })
    }

    /// Parameters for a shift `z` with `|z| < 1`.
    pub fn for_shift(z: Complex64, eta: f64) -> Result<Self> {
        if z.norm() >= 1.0 {
            return Err(Error::domain(format!("|z| = {} must be below 1", z.norm())));
        }
        Self::new(1.0 - z.norm_sqr(), eta)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

pub fn cubic_eval(x: f64, p: &CubicParams) -> f64 {
    let t = x + p.eta;
    x * t * t - p.delta * x - p.eta
}

/// `Q'(x) = (x + η)² + 2x(x + η) - δ`.
pub fn cubic_derivative(x: f64, p: &CubicParams) -> f64 {
    let t = x + p.eta;
    t * t + 2.0 * x * t - p.delta
}

/// The unique positive root of `Q`.
///
/// Doubles `b` until `Q(b) > 0`, bisects `[0, b]` down to width `1e-14`, then
/// applies one Newton step that is discarded if it leaves the final bracket.
pub fn positive_root(p: &CubicParams) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while cubic_eval(hi, p) <= 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cubic_eval(mid, p) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let slope = cubic_derivative(x, p);
    let polished = x - cubic_eval(x, p) / slope;
    if slope != 0.0
        && polished >= lo
        && polished <= hi
        && polished > 0.0
        && cubic_eval(polished, p).abs() <= cubic_eval(x, p).abs()
    {
        return polished;
    }
    x
}

/// `m̃_∞(iη)` together with the root it comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitPoint {
    pub z: Complex64,
    pub eta: f64,
    pub x_star: f64,
    pub m_tilde_inf: Complex64,
}

/// `m̃_∞(iη) = -i x_*` with `x_*` the positive root of `Q(·, 1 - |z|², η)`.
pub fn wtm_infinity(z: Complex64, eta: f64) -> Result<LimitPoint> {
    let p = CubicParams::for_shift(z, eta)?;
    let x_star = positive_root(&p);
    Ok(LimitPoint {
        z,
        eta,
        x_star,
        m_tilde_inf: Complex64::new(0.0, -x_star),
    })
}

/// `P̃(m) = m(ξ - m)² + (1 - |z|²)m - ξ`.
pub fn loop_residual(m: Complex64, xi: Complex64, z: Complex64) -> Complex64 {
    let t = xi - m;
    m * t * t + m * (1.0 - z.norm_sqr()) - xi
}

/// Density of the uniform law on the unit disk.
pub fn circular_density(z: Complex64) -> f64 {
    if z.norm() <= 1.0 {
        1.0 / PI
    } else {
        0.0
    }
}

/// `f_d(z) = (1/π) d²(d - 1)/(d² - |z|²)²` on `|z| ≤ sqrt(d)`, the Brown
/// measure density for the unnormalised sum of `d` Haar unitaries.
pub fn mu_d_density(z: Complex64, d: u32) -> Result<f64> {
    if d < 2 {
        return Err(Error::domain(format!("d = {d}: the density needs d >= 2")));
    }
    let d = f64::from(d);
    let r2 = z.norm_sqr();
    if r2 > d {
        return Ok(0.0);
    }
    let denom = d * d - r2;
    Ok(d * d * (d - 1.0) / (PI * denom * denom))
}

/// Radial CDF of `f_d` after rescaling by `1/sqrt(d)`: the mass of the disk
/// of radius `r ≤ 1` is `(d - 1)r²/(d - r²)`.
pub fn mu_d_radial_cdf(r: f64, d: u32) -> Result<f64> {
    if d < 2 {
        return Err(Error::domain(format!("d = {d}: the density needs d >= 2")));
    }
    let d = f64::from(d);
    let r = r.clamp(0.0, 1.0);
    Ok((d - 1.0) * r * r / (d - r * r))
}

/// `C · max{d^{-1/2}, log(n) n^{-1/4}} · η^{-3}`. Takes real `n` and `d` so
/// that continuous arguments (for example `n = e`) are allowed.
pub fn locallaw_bound(n: f64, d: f64, eta: f64, c: f64) -> f64 {
    let rate = d.powf(-0.5).max(n.ln() * n.powf(-0.25));
    c * rate / (eta * eta * eta)
}

/// Membership of `iη` in the admissible spectral domain:
/// `η³ · min{sqrt(d), n^{1/4}/log n} ≥ ϖ`.
pub fn locallaw_admissible(n: f64, d: f64, eta: f64, varpi: f64) -> bool {
    admissibility_margin(n, d, eta) >= varpi
}

/// `η³ · min{sqrt(d), n^{1/4}/log n}`, the quantity compared against `ϖ`.
pub fn admissibility_margin(n: f64, d: f64, eta: f64) -> f64 {
    let scale = d.sqrt().min(n.powf(0.25) / n.ln());
    eta * eta * eta * scale
}

/// `|Q(x)| / |x - x_*|`.
pub fn stability_gap(x: f64, p: &CubicParams) -> Result<f64> {
    let root = positive_root(p);
    if x == root {
        return Err(Error::domain("stability gap is undefined at the root itself"));
    }
    Ok(cubic_eval(x, p).abs() / (x - root).abs())
}

/// Counts sign changes of `Q` on the grid `{k·step : 1 ≤ k ≤ upper/step}` and
/// returns them with the grid point just after the first `-` to `+` change.
/// Exact zeros on the grid count as the start of the positive side.
pub fn sign_scan(p: &CubicParams, step: f64, upper: f64) -> (usize, Option<f64>) {
    let steps = (upper / step).round() as u64;
    let mut prev = cubic_eval(0.0, p) >= 0.0;
    let mut changes = 0;
    let mut first = None;
    for k in 1..=steps {
        let x = k as f64 * step;
        let positive = cubic_eval(x, p) >= 0.0;
        if positive != prev {
            changes += 1;
            if first.is_none() && positive {
                first = Some(x);
            }
            prev = positive;
        }
    }
    (changes, first)
}
