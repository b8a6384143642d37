//! Maximal-age sequences `a_n` and their derived quantities.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Constraint, Error, Result};

/// Family of a maximal-age sequence.
///
/// Serialized as `{"family":"constant","a":3}`, `{"family":"linear"}`,
/// `{"family":"logarithmic","c":1.5}` or `{"family":"custom","values":[..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ProfileFamily {
    /// `a_n = a`.
    Constant { a: usize },
    /// `a_n = n`: nobody ever dies of age.
    Linear,
    /// `a_n = floor(c * ln(n + 2))`.
    Logarithmic { c: f64 },
    /// Explicit values; the last one is held beyond the list.
    Custom { values: Vec<usize> },
}

/// Growth regime of the mean population, as declared for a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Finitely many types; growth governed by one Leslie matrix.
    FiniteType,
    /// `m_n` of the order of `(m+1)^n`.
    SupercriticalGeometric,
    /// `m_n = o((m+1)^n)`.
    Subgeometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeProfile {
    #[serde(flatten)]
    family: ProfileFamily,
    #[serde(default, rename = "regime", skip_serializing_if = "Option::is_none")]
    declared_regime: Option<Regime>,
}

/// Number of generations an individual born at `n` lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LifeSpan {
    Finite(usize),
    Infinite,
    /// The search hit its cap; the true value is at least this.
    AtLeast(usize),
}

/// Finite-prefix diagnostics related to the growth regime. They decide
/// nothing by themselves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeIndicator {
    /// `sum_{i <= N} (m+1)^{-a_i}`.
    pub partial_sum: f64,
    /// `(i, a_i / ln i)` for `2 <= i <= N`.
    pub ratios: Vec<(usize, f64)>,
}

impl AgeProfile {
    pub fn new(family: ProfileFamily) -> Result<Self> {
        match &family {
            ProfileFamily::Logarithmic { c } if !(c.is_finite() && *c >= 0.0) => {
                return Err(invalid("c", format!("must be finite and >= 0, got {c}")));
            }
            ProfileFamily::Custom { values } if values.is_empty() => {
                return Err(invalid("values", "custom profile needs at least one value"));
            }
            _ => {}
        }
        Ok(Self {
            family,
            declared_regime: None,
        })
    }

    pub fn constant(a: usize) -> Self {
        Self::new(ProfileFamily::Constant { a }).expect("constant profiles are always valid")
    }

    pub fn linear() -> Self {
        Self::new(ProfileFamily::Linear).expect("linear profile is always valid")
    }

    pub fn logarithmic(c: f64) -> Result<Self> {
        Self::new(ProfileFamily::Logarithmic { c })
    }

    /// Logarithmic profile with `c * ln(m + 1) = k`; `k > 1` gives geometric
    /// growth at rate `m + 1`, `k < 1` sub-geometric growth.
    pub fn logarithmic_scaled(k: f64, m: f64) -> Result<Self> {
        Self::logarithmic(k / (m + 1.0).ln())
    }

    pub fn custom(values: Vec<usize>) -> Result<Self> {
        Self::new(ProfileFamily::Custom { values })
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.declared_regime = Some(regime);
        self
    }

    pub fn family(&self) -> &ProfileFamily {
        &self.family
    }

    /// The maximal age `a_n` at generation `n`.
    pub fn max_age(&self, n: usize) -> usize {
        match &self.family {
            ProfileFamily::Constant { a } => *a,
            ProfileFamily::Linear => n,
            ProfileFamily::Logarithmic { c } => (c * ((n + 2) as f64).ln()).floor() as usize,
            ProfileFamily::Custom { values } => values[n.min(values.len() - 1)],
        }
    }

    pub fn max_ages(&self, horizon: usize) -> Vec<usize> {
        (0..=horizon).map(|n| self.max_age(n)).collect()
    }

    /// Checks `a_{n+1} <= a_n + 1` on `[0, horizon]`. A violation reports the
    /// first `n` whose value is out of range.
    pub fn validate_step(&self, horizon: usize) -> Result<()> {
        self.check(horizon, false)
    }

    /// Checks `a_n <= a_{n+1} <= a_n + 1` on `[0, horizon]`, the standing
    /// assumption of the aging analyses.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        self.check(horizon, true)
    }

    fn check(&self, horizon: usize, aging: bool) -> Result<()> {
        let mut prev = self.max_age(0);
        for n in 1..=horizon {
            let cur = self.max_age(n);
            if cur > prev + 1 {
                return Err(Error::ProfileViolation {
                    index: n,
                    constraint: Constraint::StepAtMostOne,
                });
            }
            if aging && cur < prev {
                return Err(Error::ProfileViolation {
                    index: n,
                    constraint: Constraint::NonDecreasing,
                });
            }
            prev = cur;
        }
        Ok(())
    }

    /// `l_n = max{k : a_{n+k} + 1 >= k}`.
    ///
    /// Under the step constraint the condition fails forever once it fails,
    /// so the scan stops at the first failure.
    pub fn lifespan(&self, n: usize, k_max: usize) -> LifeSpan {
        if matches!(self.family, ProfileFamily::Linear) {
            return LifeSpan::Infinite;
        }
        for k in 1..=k_max {
            if self.max_age(n + k) + 1 < k {
                return LifeSpan::Finite(k - 1);
            }
        }
        LifeSpan::AtLeast(k_max)
    }

    pub fn regime_indicator(&self, m: f64, n_max: usize) -> Result<RegimeIndicator> {
        if !(m.is_finite() && m > 0.0) {
            return Err(invalid("m", format!("must be finite and > 0, got {m}")));
        }
        let base = (m + 1.0).ln();
        let partial_sum = (0..=n_max).map(|i| (-(self.max_age(i) as f64) * base).exp()).sum();
        let ratios = (2..=n_max)
            .map(|i| (i, self.max_age(i) as f64 / (i as f64).ln()))
            .collect();
        Ok(RegimeIndicator { partial_sum, ratios })
    }

    /// Declared regime, or the one implied by the family. Finite data never
    /// decides the regime; a logarithmic profile sitting exactly on the
    /// threshold `c ln(m+1) = 1` has none.
    pub fn regime(&self, m: f64) -> Option<Regime> {
        if self.declared_regime.is_some() {
            return self.declared_regime;
        }
        match &self.family {
            ProfileFamily::Constant { .. } => Some(Regime::FiniteType),
            ProfileFamily::Linear => Some(Regime::SupercriticalGeometric),
            ProfileFamily::Logarithmic { c } => {
                let k = c * (m + 1.0).ln();
                if k > 1.0 {
                    Some(Regime::SupercriticalGeometric)
                } else if k < 1.0 {
                    Some(Regime::Subgeometric)
                } else {
                    None
                }
            }
            ProfileFamily::Custom { .. } => Some(Regime::FiniteType),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_and_linear_validate() {
        for h in [1, 10, 500] {
            assert!(AgeProfile::constant(3).validate(h).is_ok());
            assert!(AgeProfile::linear().validate(h).is_ok());
        }
    }

    #[test]
    fn jump_of_two_is_reported() {
        let p = AgeProfile::custom(vec![0, 2, 3]).unwrap();
        assert_eq!(
            p.validate(5),
            Err(Error::ProfileViolation {
                index: 1,
                constraint: Constraint::StepAtMostOne
            })
        );
        assert!(p.validate_step(5).is_err());
    }

    #[test]
    fn decreasing_profiles_fail_only_the_aging_check() {
        let p = AgeProfile::custom(vec![3, 2, 2]).unwrap();
        assert!(p.validate_step(4).is_ok());
        assert_eq!(
            p.validate(4),
            Err(Error::ProfileViolation {
                index: 1,
                constraint: Constraint::NonDecreasing
            })
        );
    }

    #[test]
    fn logarithmic_profiles_validate() {
        for k in [0.5, 1.5, 2.0] {
            let p = AgeProfile::logarithmic_scaled(k, 1.0).unwrap();
            assert!(p.validate(2000).is_ok(), "k {k}");
        }
        // floor(c ln(n + 2)) steps by at most one exactly when c ln(3/2) <= 1
        assert!(AgeProfile::logarithmic(2.45).unwrap().validate(2000).is_ok());
        let steep = AgeProfile::logarithmic_scaled(2.0, 0.5).unwrap();
        assert_eq!(
            steep.validate_step(10),
            Err(Error::ProfileViolation {
                index: 1,
                constraint: Constraint::StepAtMostOne
            })
        );
        assert!(AgeProfile::logarithmic(-1.0).is_err());
        assert!(AgeProfile::custom(vec![]).is_err());
    }

    #[test]
    fn lifespans() {
        assert_eq!(AgeProfile::constant(4).lifespan(7, 100), LifeSpan::Finite(5));
        assert_eq!(AgeProfile::linear().lifespan(3, 100), LifeSpan::Infinite);
        let p = AgeProfile::custom(vec![2, 2, 3, 4]).unwrap();
        // brute force: a_{k} + 1 >= k for k = 0..=5 holds, k = 6 fails (4 + 1 < 6)
        let brute = (0..50).filter(|&k| p.max_age(k) + 1 >= k).max().unwrap();
        assert_eq!(p.lifespan(0, 100), LifeSpan::Finite(brute));
        let fast = AgeProfile::logarithmic(50.0).unwrap();
        assert_eq!(fast.lifespan(0, 10), LifeSpan::AtLeast(10));
    }

    #[test]
    fn regime_indicator_values() {
        let ind = AgeProfile::constant(2).regime_indicator(1.0, 9).unwrap();
        assert!((ind.partial_sum - 10.0 * 0.25).abs() < 1e-12);
        let ind = AgeProfile::linear().regime_indicator(1.0, 60).unwrap();
        assert!(ind.partial_sum <= 2.0);
        let c = 1.7;
        let ind = AgeProfile::logarithmic(c)
            .unwrap()
            .regime_indicator(1.0, 100_000)
            .unwrap();
        let (_, last) = *ind.ratios.last().unwrap();
        assert!((last - c).abs() < 0.15, "{last}");
        assert!(AgeProfile::linear().regime_indicator(0.0, 5).is_err());
    }

    #[test]
    fn regimes_by_family() {
        let m = 1.0;
        let fast = AgeProfile::logarithmic_scaled(2.0, m).unwrap();
        let slow = AgeProfile::logarithmic_scaled(0.5, m).unwrap();
        assert_eq!(fast.regime(m), Some(Regime::SupercriticalGeometric));
        assert_eq!(slow.regime(m), Some(Regime::Subgeometric));
        assert_eq!(AgeProfile::constant(2).regime(m), Some(Regime::FiniteType));
        let declared = AgeProfile::custom(vec![0, 1])
            .unwrap()
            .with_regime(Regime::Subgeometric);
        assert_eq!(declared.regime(m), Some(Regime::Subgeometric));
    }

    #[test]
    fn json_syntax() {
        let p: AgeProfile = serde_json::from_str(r#"{"family":"constant","a":3}"#).unwrap();
        assert_eq!(p, AgeProfile::constant(3));
        let p: AgeProfile = serde_json::from_str(r#"{"family":"linear"}"#).unwrap();
        assert_eq!(p, AgeProfile::linear());
        let p: AgeProfile = serde_json::from_str(r#"{"family":"logarithmic","c":1.5}"#).unwrap();
        assert_eq!(p.max_age(0), 1);
        let p: AgeProfile =
            serde_json::from_str(r#"{"family":"custom","values":[1,2],"regime":"finite-type"}"#).unwrap();
        assert_eq!(p.max_age(9), 2);
    }

    proptest! {
        #[test]
        fn lifespan_drops_by_at_most_one(steps in prop::collection::vec(0usize..=1, 1..40), n in 0usize..30) {
            let mut values = vec![1usize];
            for s in steps {
                let last = *values.last().unwrap();
                values.push(last + s);
            }
            let p = AgeProfile::custom(values).unwrap();
            prop_assert!(p.validate(80).is_ok());
            let (LifeSpan::Finite(a), LifeSpan::Finite(b)) = (p.lifespan(n, 500), p.lifespan(n + 1, 500)) else {
                panic!("custom profiles are eventually constant");
            };
            prop_assert!(b + 1 >= a);
        }
    }
}
