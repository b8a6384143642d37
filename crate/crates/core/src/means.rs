//! Exact first moments of the aging branching process.
//!
//! Every mean vector is held as a unit-L1 direction together with its norm
//! as mantissa and binary exponent, so horizons of a few thousand
//! generations stay in range.
//!
//! Notation: `m_{i,n}(a)` is the mean size of generation `n` descending from
//! one individual of age `a` at generation `i`, `m_{i,n}(a, b)` its age-`b`
//! part, and `m_n = m_{0,n}(0)`.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::profile::AgeProfile;

/// A positive scale `mantissa * 2^exponent` with `mantissa` in `[1, 2)`,
/// or zero. Products of scales are exact whenever the mantissas multiply
/// exactly, e.g. powers of two or of three halves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct Scale {
    mantissa: f64,
    exponent: i64,
}

impl Scale {
    const ONE: Scale = Scale {
        mantissa: 1.0,
        exponent: 0,
    };
    const ZERO: Scale = Scale {
        mantissa: 0.0,
        exponent: 0,
    };

    /// `x` must be finite and nonnegative.
    fn of(x: f64) -> Self {
        if x <= 0.0 {
            return Self::ZERO;
        }
        let mut exponent = x.log2().floor() as i64;
        let mut mantissa = x * pow2(-exponent);
        while mantissa >= 2.0 {
            mantissa /= 2.0;
            exponent += 1;
        }
        while mantissa < 1.0 {
            mantissa *= 2.0;
            exponent -= 1;
        }
        Self { mantissa, exponent }
    }

    fn times(self, x: f64) -> Self {
        let s = Self::of(self.mantissa * x);
        if s.mantissa == 0.0 {
            return Self::ZERO;
        }
        Self {
            mantissa: s.mantissa,
            exponent: s.exponent + self.exponent,
        }
    }

    fn ln(self) -> f64 {
        if self.mantissa == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.mantissa.ln() + self.exponent as f64 * std::f64::consts::LN_2
        }
    }

    fn value(self) -> f64 {
        self.mantissa * pow2(self.exponent)
    }
}

/// `2^e`, saturating to `inf` or `0` outside the `f64` range.
fn pow2(e: i64) -> f64 {
    let e = e.clamp(-1100, 1100) as i32;
    if e < -1000 {
        // split so that the intermediate stays normal
        2f64.powi(e + 100) * 2f64.powi(-100)
    } else {
        2f64.powi(e)
    }
}

/// A nonnegative vector `scale * unit` with `sum(unit) = 1`.
///
/// The zero vector has a zero scale and an all-zero `unit`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledVec {
    unit: Vec<f64>,
    scale: Scale,
}

impl ScaledVec {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let sum = raw.iter().sum();
        Self::normalized(raw, sum, Scale::ONE)
    }

    /// `scale * raw` where `sum` is the sum of `raw`.
    fn normalized(mut raw: Vec<f64>, sum: f64, scale: Scale) -> Self {
        if sum <= 0.0 || scale.mantissa == 0.0 {
            raw.iter_mut().for_each(|x| *x = 0.0);
            return Self {
                unit: raw,
                scale: Scale::ZERO,
            };
        }
        raw.iter_mut().for_each(|x| *x /= sum);
        Self {
            unit: raw,
            scale: scale.times(sum),
        }
    }

    pub fn len(&self) -> usize {
        self.unit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit.is_empty()
    }

    pub fn unit(&self) -> &[f64] {
        &self.unit
    }

    /// Natural log of the sum of the entries.
    pub fn log_norm(&self) -> f64 {
        self.scale.ln()
    }

    /// Sum of the entries; may be `inf` for long horizons.
    pub fn total(&self) -> f64 {
        self.scale.value()
    }

    /// Entry `b`, zero outside the stored range.
    pub fn get(&self, b: usize) -> f64 {
        self.unit.get(b).map_or(0.0, |u| u * self.total())
    }

    pub fn ln_get(&self, b: usize) -> f64 {
        self.unit.get(b).map_or(f64::NEG_INFINITY, |u| u.ln() + self.log_norm())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let t = self.total();
        self.unit.iter().map(|u| u * t).collect()
    }
}

fn check_m(m: f64) -> Result<()> {
    if m.is_finite() && m > 0.0 {
        Ok(())
    } else {
        Err(invalid("m", format!("must be finite and > 0, got {m}")))
    }
}

/// Age profile together with the mean offspring number `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanModel {
    profile: AgeProfile,
    m: f64,
}

impl MeanModel {
    pub fn new(profile: AgeProfile, m: f64) -> Result<Self> {
        check_m(m)?;
        Ok(Self { profile, m })
    }

    pub fn profile(&self) -> &AgeProfile {
        &self.profile
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// Doeblin constant `c = m / (m + 1)`.
    pub fn doeblin(&self) -> f64 {
        self.m / (self.m + 1.0)
    }

    /// Mean age vectors from one newborn at generation 0, no immigration.
    pub fn forward(&self, horizon: usize) -> ForwardMeans {
        mean_forward(&self.profile, self.m, horizon, None, &[1.0])
            .expect("validated model and well-formed initial vector")
    }

    /// Backward table `m_{k,n}(b)` for every `k <= n` and `b <= a_k`.
    pub fn backward(&self, n: usize) -> BackwardTable {
        let a = |k| self.profile.max_age(k);
        let mut rows = vec![ScaledVec::from_raw(vec![1.0; a(n) + 1])];
        for k in (0..n).rev() {
            let next = rows.last().expect("seeded with generation n");
            let raw: Vec<f64> = (0..=a(k))
                .map(|b| {
                    let survive = if b < a(k + 1) { next.unit[b + 1] } else { 0.0 };
                    self.m * next.unit[0] + survive
                })
                .collect();
            let sum = raw.iter().sum();
            rows.push(ScaledVec::normalized(raw, sum, next.scale));
        }
        rows.reverse();
        BackwardTable {
            model: self.clone(),
            n,
            rows,
        }
    }

    /// `m_{i,n}(a)` and the row `m_{i,n}(a, .)`.
    pub fn mean_backward(&self, i: usize, a: usize, n: usize) -> Result<MeanTable> {
        if i > n {
            return Err(Error::Domain(format!("origin {i} after horizon {n}")));
        }
        if a > self.profile.max_age(i) {
            return Err(Error::Domain(format!(
                "age {a} exceeds maximal age {} at generation {i}",
                self.profile.max_age(i)
            )));
        }
        let table = self.backward(n);
        let mut row = ScaledVec::from_raw({
            let mut v = vec![0.0; a + 1];
            v[a] = 1.0;
            v
        });
        for k in i..n {
            row = self.shift_forward(&row, k + 1, 0.0);
        }
        Ok(MeanTable {
            origin: i,
            horizon: n,
            base_age: a,
            ln_total: table.ln_mean(i, a),
            row,
        })
    }

    /// One generation of the mean recursion into generation `next_gen`.
    fn shift_forward(&self, v: &ScaledVec, next_gen: usize, immigration: f64) -> ScaledVec {
        let a_next = self.profile.max_age(next_gen);
        let mut raw = vec![0.0; a_next + 1];
        if v.scale.mantissa == 0.0 {
            raw[0] = immigration;
            return ScaledVec::from_raw(raw);
        }
        for b in 1..=a_next {
            raw[b] = v.unit.get(b - 1).copied().unwrap_or(0.0);
        }
        // the unit vector has mass one; only ages a_next and above die, so
        // without deaths the growth factor is exactly m + 1
        let dead: f64 = v.unit.iter().skip(a_next).sum();
        raw[0] = self.m;
        if immigration > 0.0 {
            raw[0] += immigration * (-v.log_norm()).exp();
        }
        let sum = raw[0] + (1.0 - dead);
        ScaledVec::normalized(raw, sum, v.scale)
    }
}

/// Forward mean vectors `E[Z_n(.)]`, `n = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardMeans {
    rows: Vec<ScaledVec>,
}

impl ForwardMeans {
    pub fn horizon(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn row(&self, n: usize) -> &ScaledVec {
        &self.rows[n]
    }

    pub fn ln_total(&self, n: usize) -> f64 {
        self.rows[n].log_norm()
    }

    pub fn total(&self, n: usize) -> f64 {
        self.rows[n].total()
    }

    /// Mean number of newborns `E[Z_n(0)]`.
    pub fn newborns(&self, n: usize) -> f64 {
        self.rows[n].get(0)
    }

    pub fn ln_totals(&self) -> Vec<f64> {
        self.rows.iter().map(ScaledVec::log_norm).collect()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(ScaledVec::total).collect()
    }
}

/// Forward mean recursion
/// `v_{n+1}(0) = m sum(v_n) + E[I_{n+1}]`, `v_{n+1}(b) = v_n(b-1) 1{b <= a_{n+1}}`
/// started from `initial` (indexed by age) at generation 0.
///
/// `immigration_means[n]` is used for `n >= 1` and must cover the horizon.
pub fn mean_forward(
    profile: &AgeProfile,
    m: f64,
    horizon: usize,
    immigration_means: Option<&[f64]>,
    initial: &[f64],
) -> Result<ForwardMeans> {
    check_m(m)?;
    if initial.len() > profile.max_age(0) + 1 || initial.iter().any(|&x| !(x >= 0.0)) {
        return Err(invalid("initial", "must be nonnegative and fit ages 0..=a_0"));
    }
    if let Some(im) = immigration_means {
        if im.len() <= horizon {
            return Err(invalid("immigration_means", "must cover generations 0..=horizon"));
        }
        if im.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(invalid("immigration_means", "must be finite and nonnegative"));
        }
    }
    let model = MeanModel::new(profile.clone(), m)?;
    let mut rows = Vec::with_capacity(horizon + 1);
    rows.push(ScaledVec::from_raw(initial.to_vec()));
    for n in 1..=horizon {
        let im = immigration_means.map_or(0.0, |v| v[n]);
        let next = model.shift_forward(&rows[n - 1], n, im);
        rows.push(next);
    }
    Ok(ForwardMeans { rows })
}

/// `m_{i,n}(a)` with its age-resolved row at generation `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanTable {
    pub origin: usize,
    pub horizon: usize,
    pub base_age: usize,
    pub ln_total: f64,
    pub row: ScaledVec,
}

impl MeanTable {
    pub fn total(&self) -> f64 {
        self.ln_total.exp()
    }
}

/// A probability vector over ages at generation `to`, started from
/// `base_age` at generation `from`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgeKernel {
    pub base_age: usize,
    pub from: usize,
    pub to: usize,
    pub probs: Vec<f64>,
}

/// `d_TV(mu, nu) = 1/2 sum |mu_k - nu_k|`, shorter vector zero-padded.
pub fn tv_distance(mu: &[f64], nu: &[f64]) -> f64 {
    let len = mu.len().max(nu.len());
    0.5 * (0..len)
        .map(|k| (mu.get(k).copied().unwrap_or(0.0) - nu.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// The backward means `m_{k,n}(b)` for a fixed horizon `n`, and the spine
/// kernels built from them.
#[derive(Debug, Clone)]
pub struct BackwardTable {
    model: MeanModel,
    n: usize,
    rows: Vec<ScaledVec>,
}

/// `E(a, i, n)` together with the geometric bound it must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub base_age: usize,
    pub origin: usize,
    pub horizon: usize,
    /// Computed through the spine kernels; accurate far below the bound.
    pub value: f64,
    /// Direct difference of the two mean ratios; loses all digits once the
    /// bound falls under machine precision.
    pub direct_value: f64,
    /// `((m+1)/m)^3 (1-c)^{n-i} / m_i`.
    pub bound: f64,
    pub within_bound: bool,
}

impl BackwardTable {
    pub fn horizon(&self) -> usize {
        self.n
    }

    fn a(&self, k: usize) -> usize {
        self.model.profile.max_age(k)
    }

    /// `ln m_{i,n}(a)`.
    pub fn ln_mean(&self, i: usize, a: usize) -> f64 {
        self.rows[i].ln_get(a)
    }

    /// `m_{i,n}(a)`.
    pub fn mean(&self, i: usize, a: usize) -> f64 {
        self.ln_mean(i, a).exp()
    }

    /// `m_{i,n}(a) / m_{j,n}(b)` without leaving log space.
    pub fn ratio(&self, i: usize, a: usize, j: usize, b: usize) -> f64 {
        (self.ln_mean(i, a) - self.ln_mean(j, b)).exp()
    }

    fn check(&self, i: usize, a: usize) -> Result<()> {
        if i > self.n {
            return Err(Error::Domain(format!("generation {i} after horizon {}", self.n)));
        }
        if a > self.a(i) {
            return Err(Error::Domain(format!(
                "age {a} exceeds maximal age {} at generation {i}",
                self.a(i)
            )));
        }
        Ok(())
    }

    /// The two nonzero entries of `P_{i,n}(a, .)`: mass at age 0 and at age
    /// `a + 1` (zero when `a + 1 > a_{i+1}`).
    fn p_masses(&self, i: usize, a: usize) -> (f64, f64) {
        let m = self.model.m;
        let to_zero = m * self.ratio(i + 1, 0, i, a);
        let survive = if a < self.a(i + 1) {
            self.ratio(i + 1, a + 1, i, a)
        } else {
            0.0
        };
        (to_zero, survive)
    }

    /// `P_{i,n}(a, b) = m_{i,i+1}(a, b) m_{i+1,n}(b) / m_{i,n}(a)`.
    pub fn kernel_p(&self, i: usize, a: usize) -> Result<AgeKernel> {
        self.check(i, a)?;
        if i >= self.n {
            return Err(Error::Domain(format!("P needs i < n, got i = {i}, n = {}", self.n)));
        }
        let mut probs = vec![0.0; self.a(i + 1) + 1];
        let (to_zero, survive) = self.p_masses(i, a);
        probs[0] = to_zero;
        if a < self.a(i + 1) {
            probs[a + 1] = survive;
        }
        Ok(AgeKernel {
            base_age: a,
            from: i,
            to: i + 1,
            probs,
        })
    }

    /// Pushes a signed measure on ages at generation `i` through
    /// `P_{i,n}, ..., P_{n-1,n}`.
    pub fn propagate(&self, i: usize, measure: &[f64]) -> Vec<f64> {
        let mut cur = measure.to_vec();
        for k in i..self.n {
            let mut next = vec![0.0; self.a(k + 1) + 1];
            for (b, &w) in cur.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let (to_zero, survive) = self.p_masses(k, b);
                next[0] += w * to_zero;
                if survive > 0.0 {
                    next[b + 1] += w * survive;
                }
            }
            cur = next;
        }
        cur
    }

    /// As [`Self::propagate`] for a measure of total mass zero, such as a
    /// difference of two laws. The kernels are stochastic, so the age-0
    /// entry is minus the sum of the survivors; computing it that way keeps
    /// rounding errors relative to the current size of the measure, which
    /// shrinks geometrically. The input's own mass defect is discarded.
    pub fn propagate_null(&self, i: usize, measure: &[f64]) -> Vec<f64> {
        let mut cur = measure.to_vec();
        for k in i..self.n {
            let mut next = vec![0.0; self.a(k + 1) + 1];
            for (b, &w) in cur.iter().enumerate() {
                if w != 0.0 && b < self.a(k + 1) {
                    next[b + 1] = w * self.p_masses(k, b).1;
                }
            }
            next[0] = -next[1..].iter().sum::<f64>();
            cur = next;
        }
        if i == self.n {
            cur[0] = -cur[1..].iter().sum::<f64>();
        }
        cur
    }

    /// `Q_{i,n}(a, .)`, the law at generation `n` of the spine started at
    /// age `a` in generation `i`.
    pub fn semigroup_q(&self, i: usize, a: usize) -> Result<AgeKernel> {
        self.check(i, a)?;
        let mut start = vec![0.0; self.a(i) + 1];
        start[a] = 1.0;
        Ok(AgeKernel {
            base_age: a,
            from: i,
            to: self.n,
            probs: self.propagate(i, &start),
        })
    }

    /// `Q_{i,n}` through the backward recursion
    /// `Q_{i,n}(a, b) = sum_k P_{i,n}(a, k) Q_{i+1,n}(k, b)`, `Q_{n,n} = Id`.
    /// Quadratic in the number of ages; meant for cross-checks.
    pub fn semigroup_q_matrix(&self, i: usize) -> Vec<Vec<f64>> {
        let width = self.a(self.n) + 1;
        let mut q: Vec<Vec<f64>> = (0..width)
            .map(|b| {
                let mut row = vec![0.0; width];
                row[b] = 1.0;
                row
            })
            .collect();
        for k in (i..self.n).rev() {
            q = (0..=self.a(k))
                .map(|a| {
                    let (to_zero, survive) = self.p_masses(k, a);
                    (0..width)
                        .map(|b| {
                            let mut v = to_zero * q[0][b];
                            if survive > 0.0 {
                                v += survive * q[a + 1][b];
                            }
                            v
                        })
                        .collect()
                })
                .collect();
        }
        q
    }

    /// `d_TV(Q_{i,n}(mu, .), Q_{i,n}(nu, .))`, computed by propagating the
    /// signed difference so that tiny distances keep their digits.
    pub fn tv_after(&self, i: usize, mu: &[f64], nu: &[f64]) -> f64 {
        let len = mu.len().max(nu.len());
        let diff: Vec<f64> = (0..len)
            .map(|k| mu.get(k).copied().unwrap_or(0.0) - nu.get(k).copied().unwrap_or(0.0))
            .collect();
        0.5 * self.propagate_null(i, &diff).iter().map(|x| x.abs()).sum::<f64>()
    }

    /// Law of the spine at generation `i` when started from a newborn at
    /// generation 0, i.e. `Q_{0,i}`-marginal under the horizon-`n` kernels.
    fn spine_marginal(&self, i: usize) -> Vec<f64> {
        let mut cur = vec![0.0; self.a(0) + 1];
        cur[0] = 1.0;
        for k in 0..i {
            let mut next = vec![0.0; self.a(k + 1) + 1];
            for (b, &w) in cur.iter().enumerate() {
                let (to_zero, survive) = self.p_masses(k, b);
                next[0] += w * to_zero;
                if survive > 0.0 {
                    next[b + 1] += w * survive;
                }
            }
            cur = next;
        }
        cur
    }
}

impl MeanModel {
    /// `E(a, i, n) = m_{i,n}(a)/m_n - m_{i,n+1}(a)/m_{n+1}` with its bound.
    ///
    /// Write `D = Q_{i,n}(a, .) - Q_{0,n}(0, .)`. Ages `b >= a_{n+1}` die at
    /// `n + 1`, so `m_{i,n+1}(a) = m_{i,n}(a) (m + sum_{b < a_{n+1}} Q_{i,n}(a, b))`
    /// and the value is `m_{i,n}(a)/m_n * sum_{b >= a_{n+1}} D(b) / S` with
    /// `S = m_{n+1}/m_n`. `D` is obtained by propagating a signed measure.
    pub fn error_e(&self, a: usize, i: usize, n: usize) -> Result<ErrorReport> {
        let table = self.backward(n);
        table.check(i, a)?;
        let a_next = self.profile.max_age(n + 1);

        let mut diff = table.spine_marginal(i);
        diff.iter_mut().for_each(|x| *x = -*x);
        diff[a] += 1.0;
        let d = table.propagate_null(i, &diff);
        let q0 = table.propagate(0, &[1.0]);
        let growth = self.m + q0.iter().take(a_next).sum::<f64>();
        let dying: f64 = d.iter().skip(a_next).sum();
        let ratio_n = table.ratio(i, a, 0, 0);
        let value = ratio_n * dying / growth;

        let next = self.backward(n + 1);
        let direct_value = ratio_n - next.ratio(i, a, 0, 0);

        let c = self.doeblin();
        let ln_m_i = self.forward(i).ln_total(i);
        let c_m = ((self.m + 1.0) / self.m).powi(3);
        let bound = c_m * ((1.0 - c).ln() * (n - i) as f64 - ln_m_i).exp();
        Ok(ErrorReport {
            base_age: a,
            origin: i,
            horizon: n,
            value,
            direct_value,
            bound,
            within_bound: value.abs() <= bound,
        })
    }
}

/// `u_t = inf{n : m_n >= t}` over a series given by its logarithms.
///
/// Searches the running maximum, which is monotone, so the first crossing is
/// found by bisection even when the series itself is not monotone.
pub fn inverse_mean(ln_series: &[f64], t: f64) -> Result<usize> {
    if ln_series.is_empty() {
        return Err(invalid("m_series", "empty series"));
    }
    if !(t > 0.0) {
        return Ok(0);
    }
    let target = t.ln();
    let running_max: Vec<f64> = ln_series
        .iter()
        .scan(f64::NEG_INFINITY, |best, &x| {
            *best = best.max(x);
            Some(*best)
        })
        .collect();
    let idx = running_max.partition_point(|&x| x < target);
    if idx == ln_series.len() {
        Err(Error::HorizonExceeded {
            horizon: ln_series.len() - 1,
        })
    } else {
        Ok(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_forward(profile: &AgeProfile, m: f64, horizon: usize) -> Vec<Vec<f64>> {
        let mut v = vec![1.0];
        let mut out = vec![v.clone()];
        for n in 1..=horizon {
            let a = profile.max_age(n);
            let mut nv = vec![0.0; a + 1];
            nv[0] = m * v.iter().sum::<f64>();
            for b in 1..=a {
                nv[b] = v.get(b - 1).copied().unwrap_or(0.0);
            }
            v = nv;
            out.push(v.clone());
        }
        out
    }

    #[test]
    fn scaled_forward_matches_plain_recursion() {
        let p = AgeProfile::logarithmic_scaled(1.5, 1.0).unwrap();
        let fwd = MeanModel::new(p.clone(), 1.0).unwrap().forward(40);
        let plain = direct_forward(&p, 1.0, 40);
        for n in 0..=40 {
            let expect: f64 = plain[n].iter().sum();
            assert!((fwd.total(n) / expect - 1.0).abs() < 1e-13);
            for (b, x) in plain[n].iter().enumerate() {
                assert!((fwd.row(n).get(b) - x).abs() <= 1e-13 * expect);
            }
        }
    }

    #[test]
    fn linear_profile_is_geometric() {
        let fwd = MeanModel::new(AgeProfile::linear(), 1.0).unwrap().forward(60);
        for n in 0..=60 {
            assert_eq!(fwd.total(n), 2f64.powi(n as i32));
        }
        let fwd = MeanModel::new(AgeProfile::linear(), 0.5).unwrap().forward(30);
        for n in 0..=30 {
            assert_eq!(fwd.total(n), 1.5f64.powi(n as i32));
        }
        let fwd = MeanModel::new(AgeProfile::linear(), 0.5).unwrap().forward(2000);
        let expect = 2000.0 * 1.5f64.ln();
        assert!((fwd.ln_total(2000) / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn immigration_only_start() {
        let p = AgeProfile::constant(1);
        let fwd = mean_forward(&p, 0.5, 3, Some(&[9.0, 1.0, 1.0, 1.0]), &[0.0]).unwrap();
        // v1 = (1, 0); v2 = (0.5 + 1, 1); v3 = (0.5 * 2.5 + 1, 1.5)
        assert_eq!(fwd.total(0), 0.0);
        assert!((fwd.newborns(1) - 1.0).abs() < 1e-15);
        assert!((fwd.newborns(2) - 1.5).abs() < 1e-15);
        assert!((fwd.newborns(3) - 2.25).abs() < 1e-15);
        assert!((fwd.total(3) - 3.75).abs() < 1e-14);
        assert!(mean_forward(&p, 0.5, 3, Some(&[1.0]), &[1.0]).is_err());
    }

    #[test]
    fn backward_edge_cases() {
        let model = MeanModel::new(AgeProfile::constant(3), 1.0).unwrap();
        let t = model.mean_backward(4, 2, 4).unwrap();
        assert!((t.total() - 1.0).abs() < 1e-15);
        assert_eq!(t.row.to_vec(), vec![0.0, 0.0, 1.0]);
        let t = model.mean_backward(4, 2, 5).unwrap();
        assert!((t.total() - 2.0).abs() < 1e-15);
        assert_eq!(t.row.to_vec(), vec![1.0, 0.0, 0.0, 1.0]);
        // oldest individual dies: only its offspring remain
        let t = model.mean_backward(4, 3, 5).unwrap();
        assert!((t.total() - 1.0).abs() < 1e-15);
        assert!(model.mean_backward(4, 4, 5).is_err());
        assert!(model.mean_backward(6, 0, 5).is_err());
    }

    #[test]
    fn forward_and_backward_agree() {
        for m in [0.5, 1.0, 2.0] {
            let model = MeanModel::new(AgeProfile::logarithmic_scaled(2.0, m).unwrap(), m).unwrap();
            let fwd = model.forward(80);
            for n in [0, 1, 7, 33, 80] {
                let back = model.backward(n);
                assert!((back.ln_mean(0, 0) - fwd.ln_total(n)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kernel_edges_and_doeblin() {
        let model = MeanModel::new(AgeProfile::constant(2), 1.0).unwrap();
        let t = model.backward(6);
        let q = t.semigroup_q(6, 1).unwrap();
        assert_eq!(q.probs, vec![0.0, 1.0, 0.0]);
        let p = t.kernel_p(2, 2).unwrap();
        // oldest age cannot survive: all mass on newborns
        assert!((p.probs[0] - 1.0).abs() < 1e-15);
        for i in 0..6 {
            for a in 0..=2 {
                let p = t.kernel_p(i, a).unwrap();
                assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(p.probs[0] >= 0.5 - 1e-12);
            }
        }
        assert!(t.kernel_p(6, 0).is_err());
    }

    #[test]
    fn tv_distance_basics() {
        assert_eq!(tv_distance(&[0.2, 0.8], &[0.2, 0.8]), 0.0);
        assert_eq!(tv_distance(&[1.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn recursion_and_propagation_agree() {
        let model = MeanModel::new(AgeProfile::logarithmic_scaled(2.0, 1.0).unwrap(), 1.0).unwrap();
        let t = model.backward(25);
        for i in [0, 5, 17, 25] {
            let mat = t.semigroup_q_matrix(i);
            for (a, row) in mat.iter().enumerate() {
                let q = t.semigroup_q(i, a).unwrap();
                assert!(tv_distance(row, &q.probs) < 1e-12);
            }
        }
    }

    /// With `m = 1` every mean is an integer: `m_{i,n}(a, .)` by exact
    /// forward recursion in `i128`.
    fn integer_row(profile: &AgeProfile, i: usize, a: usize, n: usize) -> Vec<i128> {
        let mut v = vec![0i128; a + 1];
        v[a] = 1;
        for k in i + 1..=n {
            let total: i128 = v.iter().sum();
            let mut next = vec![0i128; profile.max_age(k) + 1];
            next[0] = total;
            for b in 1..next.len() {
                next[b] = v.get(b - 1).copied().unwrap_or(0);
            }
            v = next;
        }
        v
    }

    fn exact_ratio(num: i128, den: i128) -> f64 {
        // both fit in f64 to within one rounding each
        num as f64 / den as f64
    }

    #[test]
    fn tiny_distances_against_integer_oracle() {
        for profile in [AgeProfile::constant(3), AgeProfile::logarithmic(2.0).unwrap()] {
            let model = MeanModel::new(profile.clone(), 1.0).unwrap();
            let n = 60;
            let t = model.backward(n);
            for i in [0, 7, 30] {
                let a_i = profile.max_age(i);
                for (a, b) in [(0, a_i), (a_i / 2, a_i), (0, a_i / 2)] {
                    if a == b {
                        continue;
                    }
                    let (fa, fb) = (integer_row(&profile, i, a, n), integer_row(&profile, i, b, n));
                    let (ta, tb): (i128, i128) = (fa.iter().sum(), fb.iter().sum());
                    // 1/2 sum |fa/ta - fb/tb| = sum |fa tb - fb ta| / (2 ta tb)
                    let num: i128 = fa.iter().zip(&fb).map(|(x, y)| (x * tb - y * ta).abs()).sum();
                    let exact = exact_ratio(num, 2 * ta) / tb as f64;
                    let mut mu = vec![0.0; a_i + 1];
                    let mut nu = vec![0.0; a_i + 1];
                    mu[a] = 1.0;
                    nu[b] = 1.0;
                    let got = t.tv_after(i, &mu, &nu);
                    assert!((got - exact).abs() <= 1e-9 * exact, "{i} {a} {b}: {got:e} vs {exact:e}");
                    assert!(got <= 0.5f64.powi((n - i) as i32));
                }
            }
        }
    }

    #[test]
    fn tiny_errors_against_integer_oracle() {
        let profile = AgeProfile::constant(3);
        let model = MeanModel::new(profile.clone(), 1.0).unwrap();
        for (a, i, n) in [(1, 0, 60), (3, 0, 60), (2, 10, 50), (0, 20, 58)] {
            let total = |i, a, n| integer_row(&profile, i, a, n).iter().sum::<i128>();
            let (x, mn) = (total(i, a, n), total(0, 0, n));
            let (y, mn1) = (total(i, a, n + 1), total(0, 0, n + 1));
            let exact = exact_ratio(x * mn1 - y * mn, mn) / mn1 as f64;
            let r = model.error_e(a, i, n).unwrap();
            assert!(
                (r.value - exact).abs() <= 1e-9 * exact.abs(),
                "{a} {i} {n}: {:e} vs {exact:e}",
                r.value
            );
            assert!(r.within_bound);
        }
    }

    #[test]
    fn error_e_vanishes_at_origin() {
        let model = MeanModel::new(AgeProfile::constant(3), 1.0).unwrap();
        for n in [1, 10, 40] {
            assert_eq!(model.error_e(0, 0, n).unwrap().value, 0.0);
        }
    }

    #[test]
    fn error_e_matches_direct_difference_when_well_conditioned() {
        let model = MeanModel::new(AgeProfile::constant(3), 1.0).unwrap();
        for (a, i, n) in [(1, 2, 8), (3, 5, 9), (0, 4, 12), (2, 1, 6)] {
            let r = model.error_e(a, i, n).unwrap();
            assert!(
                (r.value - r.direct_value).abs() < 1e-12,
                "{a} {i} {n}: {} vs {}",
                r.value,
                r.direct_value
            );
            assert!(r.within_bound);
        }
    }

    #[test]
    fn inverse_mean_cases() {
        let ln: Vec<f64> = (0..=20).map(|n| n as f64 * 2f64.ln()).collect();
        assert_eq!(inverse_mean(&ln, 0.5).unwrap(), 0);
        assert_eq!(inverse_mean(&ln, 1.0).unwrap(), 0);
        assert_eq!(inverse_mean(&ln, 2f64.powi(7)).unwrap(), 7);
        assert_eq!(inverse_mean(&ln, 2f64.powi(7) + 1.0).unwrap(), 8);
        assert_eq!(inverse_mean(&ln, 1e9), Err(Error::HorizonExceeded { horizon: 20 }));
        // non-monotone series: first crossing, not a bisection artefact
        let bumpy = [0.0, 3.0, 1.0, 1.0, 5.0];
        assert_eq!(inverse_mean(&bumpy, 2.0f64.exp()).unwrap(), 1);
    }
}
