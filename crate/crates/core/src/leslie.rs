//! Spectral radius of the `(a+1)`-type Leslie matrix and the growth-rate
//! comparisons built on it.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::means::MeanModel;
use crate::profile::AgeProfile;

/// Leslie matrix of `a + 1` ages where every age has `m` offspring and all
/// but the oldest survive, with its Perron root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeslieSpec {
    pub m: f64,
    pub a: usize,
    pub rho: f64,
}

impl LeslieSpec {
    pub fn new(m: f64, a: usize) -> Result<Self> {
        Ok(Self {
            m,
            a,
            rho: leslie_rho(m, a)?,
        })
    }

    /// `x^{a+1} - m sum_{k<=a} x^k` at `x`.
    pub fn characteristic(&self, x: f64) -> f64 {
        let s: f64 = (0..=self.a).map(|k| x.powi(k as i32)).sum();
        x.powi(self.a as i32 + 1) - self.m * s
    }
}

fn check_m(m: f64) -> Result<()> {
    if m.is_finite() && m > 0.0 {
        Ok(())
    } else {
        Err(invalid("m", format!("must be finite and > 0, got {m}")))
    }
}

/// Perron root `rho(a)`: the unique positive `x` with
/// `m sum_{j=1}^{a+1} x^{-j} = 1`. It lies in `[m, m + 1)`, equals `m` for
/// `a = 0` and increases to `m + 1`.
pub fn leslie_rho(m: f64, a: usize) -> Result<f64> {
    check_m(m)?;
    if a == 0 {
        return Ok(m);
    }
    // decreasing in x, so bisection on the sign is safe
    let excess = |x: f64| {
        let y = 1.0 / x;
        let mut s = 0.0;
        for _ in 0..=a {
            s = y * (1.0 + s);
        }
        m * s - 1.0
    };
    let (mut lo, mut hi) = (m, m + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(m + 1) - rho(a)` to full relative precision, also when it is far below
/// the spacing of floats near `m + 1`.
pub fn leslie_gap(m: f64, a: usize) -> Result<f64> {
    let rho = leslie_rho(m, a)?;
    let mut g = m + 1.0 - rho;
    if a == 0 || g <= 0.0 {
        return Ok(g.max(0.0));
    }
    // The root satisfies g (m + 1 - g)^{a+1} = m; Newton on the log form.
    let k = (a + 1) as f64;
    let start = g;
    for _ in 0..50 {
        let phi = g.ln() + k * (-g / (m + 1.0)).ln_1p() + k * (m + 1.0).ln() - m.ln();
        let dphi = 1.0 / g - k / (m + 1.0 - g);
        let step = phi / dphi;
        let next = g - step;
        if !(next > 0.0) || next > 2.0 * start || next < 0.5 * start {
            return Ok(start);
        }
        g = next;
        if step.abs() <= 1e-16 * g {
            break;
        }
    }
    Ok(g)
}

/// One line of [`growth_regime_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRow {
    pub n: usize,
    pub a_n: usize,
    pub ln_m_n: f64,
    /// `m_n / (m + 1)^n`, never above 1.
    pub geometric_ratio: f64,
    /// `m_n / prod_{j<n} rho(a_j)`.
    pub leslie_ratio: f64,
    /// `E[Z_n(0)] / prod_{j<n} rho(a_j)`, at least 1 along non-decreasing
    /// profiles.
    pub newborn_leslie_ratio: f64,
    pub upper_ok: bool,
}

/// Compares `m_n` against `(m+1)^n` and against the product of Leslie roots
/// along the profile.
pub fn growth_regime_bounds(profile: &AgeProfile, m: f64, horizon: usize) -> Result<Vec<GrowthRow>> {
    check_m(m)?;
    let fwd = MeanModel::new(profile.clone(), m)?.forward(horizon);
    let ln_growth = (m + 1.0).ln();
    let mut ln_leslie = 0.0;
    let mut rho_cache: Vec<Option<f64>> = Vec::new();
    let mut rows = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        let ln_m_n = fwd.ln_total(n);
        let geometric_ratio = (ln_m_n - n as f64 * ln_growth).exp();
        let ln_newborns = fwd.row(n).ln_get(0);
        rows.push(GrowthRow {
            n,
            a_n: profile.max_age(n),
            ln_m_n,
            geometric_ratio,
            leslie_ratio: (ln_m_n - ln_leslie).exp(),
            newborn_leslie_ratio: (ln_newborns - ln_leslie).exp(),
            upper_ok: geometric_ratio <= 1.0 + 1e-12,
        });
        let a = profile.max_age(n);
        if rho_cache.len() <= a {
            rho_cache.resize(a + 1, None);
        }
        let rho = match rho_cache[a] {
            Some(r) => r,
            None => {
                let r = leslie_rho(m, a)?;
                rho_cache[a] = Some(r);
                r
            }
        };
        ln_leslie += rho.ln();
    }
    Ok(rows)
}
