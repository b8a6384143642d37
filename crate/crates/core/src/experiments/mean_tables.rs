use serde::Deserialize;

use super::{
    check_count, check_positive, field_error, fmt_f64, Assertion, Experiment, ExperimentOutput, Table, Validate,
};
use crate::error::Result;
use crate::leslie::{growth_regime_bounds, leslie_gap, leslie_rho};
use crate::means::MeanModel;
use crate::profile::{AgeProfile, ProfileFamily};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanTablesParams {
    pub profiles: Vec<AgeProfile>,
    pub m_values: Vec<f64>,
    pub horizon: usize,
    /// `m` of the Leslie table.
    pub leslie_m: f64,
    pub leslie_max_age: usize,
    /// Ages over which the remainder ratio is checked.
    pub remainder_ages: (usize, usize),
    /// Largest admitted `|m+1 - rho(a) - m(m+1)^{-a-1}| / (a (m+1)^{-2a})`.
    pub remainder_bound: f64,
}

impl Default for MeanTablesParams {
    fn default() -> Self {
        Self {
            profiles: vec![
                AgeProfile::linear(),
                AgeProfile::constant(3),
                AgeProfile::new(ProfileFamily::Logarithmic { c: 2.0 }).expect("valid"),
            ],
            m_values: vec![0.5, 1.0],
            horizon: 60,
            leslie_m: 1.0,
            leslie_max_age: 25,
            remainder_ages: (5, 25),
            remainder_bound: 1.0,
        }
    }
}

pub(crate) fn validate_profiles(profiles: &[AgeProfile], horizon: usize) -> Result<()> {
    if profiles.is_empty() {
        return Err(field_error("profiles", "must not be empty"));
    }
    for (k, p) in profiles.iter().enumerate() {
        p.validate(horizon + 1)
            .map_err(|e| field_error(&format!("profiles[{k}]"), e.to_string()))?;
    }
    Ok(())
}

pub(crate) fn validate_m_values(m_values: &[f64]) -> Result<()> {
    if m_values.is_empty() {
        return Err(field_error("m_values", "must not be empty"));
    }
    for (k, &m) in m_values.iter().enumerate() {
        check_positive(&format!("m_values[{k}]"), m)?;
    }
    Ok(())
}

pub(crate) fn profile_label(p: &AgeProfile) -> String {
    match p.family() {
        ProfileFamily::Constant { a } => format!("constant({a})"),
        ProfileFamily::Linear => "linear".into(),
        ProfileFamily::Logarithmic { c } => format!("logarithmic({})", fmt_f64(*c)),
        ProfileFamily::Custom { values } => format!("custom({})", values.len()),
    }
}

impl Validate for MeanTablesParams {
    fn validate(&self) -> Result<()> {
        validate_profiles(&self.profiles, self.horizon)?;
        validate_m_values(&self.m_values)?;
        check_count("horizon", self.horizon)?;
        check_positive("leslie_m", self.leslie_m)?;
        let (lo, hi) = self.remainder_ages;
        if lo == 0 || lo > hi || hi > self.leslie_max_age {
            return Err(field_error("remainder_ages", "need 1 <= lo <= hi <= leslie_max_age"));
        }
        check_positive("remainder_bound", self.remainder_bound)
    }
}

impl Experiment for MeanTablesParams {
    fn run(&self, _master_seed: u64) -> Result<ExperimentOutput> {
        let mut out = ExperimentOutput::new();
        let mut means = Table::new(
            "means.csv",
            &[
                "profile",
                "m",
                "n",
                "a_n",
                "m_n",
                "ln_m_n",
                "m_n_over_geometric",
                "m_n_over_leslie_product",
            ],
        );
        let n = self.horizon;
        for profile in &self.profiles {
            let label = profile_label(profile);
            for &m in &self.m_values {
                let tag = format!("{label}, m={}", fmt_f64(m));
                let model = MeanModel::new(profile.clone(), m)?;
                let fwd = model.forward(n);
                let mut worst = 0.0f64;
                for k in 0..=n {
                    let back = model.backward(k);
                    worst = worst.max(((back.ln_mean(0, 0) - fwd.ln_total(k)).exp() - 1.0).abs());
                }
                out.assert(Assertion::le(
                    format!("{tag}: forward/backward relative gap"),
                    worst,
                    1e-10,
                ));

                if matches!(profile.family(), ProfileFamily::Linear) {
                    let worst = (0..=n)
                        .map(|k| (fwd.total(k) / (m + 1.0).powi(k as i32) - 1.0).abs())
                        .fold(0.0, f64::max);
                    out.assert(Assertion::le(format!("{tag}: |m_n / (m+1)^n - 1|"), worst, 1e-12));
                }

                let rows = growth_regime_bounds(profile, m, n)?;
                let excess = rows
                    .iter()
                    .map(|r| r.geometric_ratio - 1.0)
                    .fold(f64::NEG_INFINITY, f64::max);
                out.assert(Assertion::le(format!("{tag}: max m_n / (m+1)^n - 1"), excess, 1e-12));
                for r in &rows {
                    means.push(vec![
                        label.clone(),
                        fmt_f64(m),
                        r.n.to_string(),
                        r.a_n.to_string(),
                        fmt_f64(fwd.total(r.n)),
                        fmt_f64(r.ln_m_n),
                        fmt_f64(r.geometric_ratio),
                        fmt_f64(r.leslie_ratio),
                    ]);
                }
            }
        }

        let m = self.leslie_m;
        let mut leslie = Table::new("leslie.csv", &["m", "a", "rho", "gap", "remainder_ratio"]);
        let rho: Vec<f64> = (0..=self.leslie_max_age)
            .map(|a| leslie_rho(m, a))
            .collect::<Result<_>>()?;
        // x^2 = m x + m
        let quadratic = 0.5 * (m + (m * m + 4.0 * m).sqrt());
        out.assert(Assertion::le(
            "rho(1) vs root of x^2 - m x - m",
            (rho[1] - quadratic).abs(),
            1e-10,
        ));
        let drop = rho.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
        out.assert(Assertion::le("max rho(a) - rho(a+1)", drop, 0.0));
        let top = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.assert(Assertion::le("max rho(a) - (m+1)", top - (m + 1.0), 0.0));

        let mut worst = 0.0f64;
        for a in 0..=self.leslie_max_age {
            let gap = leslie_gap(m, a)?;
            let ratio = if a == 0 {
                f64::NAN
            } else {
                let lead = m * (m + 1.0).powi(-(a as i32) - 1);
                (gap - lead).abs() / (a as f64 * (m + 1.0).powi(-2 * a as i32))
            };
            if (self.remainder_ages.0..=self.remainder_ages.1).contains(&a) {
                worst = worst.max(ratio);
            }
            leslie.push(vec![
                fmt_f64(m),
                a.to_string(),
                fmt_f64(rho[a]),
                fmt_f64(gap),
                fmt_f64(ratio),
            ]);
        }
        out.assert(Assertion::le(
            format!(
                "max remainder ratio over a = {}..{}",
                self.remainder_ages.0, self.remainder_ages.1
            ),
            worst,
            self.remainder_bound,
        ));
        out.tables.push(means);
        out.tables.push(leslie);
        Ok(out)
    }
}
