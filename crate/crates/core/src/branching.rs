//! Monte Carlo simulation of the aging branching process.
//!
//! Each individual alive at generation `n - 1` has an independent `R(1)`
//! number of children at generation `n`, and survives to generation `n`
//! while its age stays below `a_n`.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::distributions::{check_alpha, mean_offspring, BusyPeriod};
use crate::error::{invalid, Error, Result};
use crate::means::MeanModel;
use crate::profile::AgeProfile;
use crate::stats::{quantile, Summary};

/// Default cap on the total population of a generation.
pub const DEFAULT_POPULATION_CAP: u64 = 100_000_000;

/// `Z_n(a)` for `a = 0..=a_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PopulationState {
    pub generation: usize,
    pub counts: Vec<u64>,
}

impl PopulationState {
    /// One newborn at generation 0.
    pub fn newborn() -> Self {
        Self {
            generation: 0,
            counts: vec![1],
        }
    }

    pub fn empty(generation: usize, profile: &AgeProfile) -> Self {
        Self {
            generation,
            counts: vec![0; profile.max_age(generation) + 1],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn newborns(&self) -> u64 {
        self.counts[0]
    }
}

/// Law of the immigrants `I_n` entering at age 0 in generation `n >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ImmigrationSpec {
    None,
    /// `I_n ~ R(times[n])`.
    BusyPeriod {
        times: Vec<f64>,
    },
    /// `I_n ~ Poisson(mean)`.
    Poisson {
        mean: f64,
    },
}

impl ImmigrationSpec {
    pub fn mean(&self, alpha: f64, n: usize) -> f64 {
        match self {
            ImmigrationSpec::None => 0.0,
            ImmigrationSpec::BusyPeriod { times } => times.get(n).map_or(0.0, |t| mean_offspring(alpha) * t),
            ImmigrationSpec::Poisson { mean } => *mean,
        }
    }

    pub fn means(&self, alpha: f64, horizon: usize) -> Vec<f64> {
        (0..=horizon).map(|n| self.mean(alpha, n)).collect()
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            ImmigrationSpec::None => Ok(()),
            ImmigrationSpec::BusyPeriod { times } => {
                if times.len() <= horizon {
                    return Err(invalid("times", "must cover generations 0..=horizon"));
                }
                if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                    return Err(invalid("times", "must be finite and >= 0"));
                }
                Ok(())
            }
            ImmigrationSpec::Poisson { mean } if !(mean.is_finite() && *mean >= 0.0) => {
                Err(invalid("mean", "must be finite and >= 0"))
            }
            ImmigrationSpec::Poisson { .. } => Ok(()),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, busy: &BusyPeriod, n: usize, rng: &mut R) -> Result<u64> {
        match self {
            ImmigrationSpec::None => Ok(0),
            ImmigrationSpec::BusyPeriod { times } => busy.sample_after(times[n], rng),
            ImmigrationSpec::Poisson { mean } => crate::distributions::poisson_count(*mean, rng),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, ImmigrationSpec::None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingModel {
    profile: AgeProfile,
    alpha: f64,
    population_cap: u64,
    busy: BusyPeriod,
}

/// One generation of a [`Trajectory`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub n: usize,
    pub total: u64,
    pub counts: Vec<u64>,
    pub newborns: u64,
    /// `sum_{k <= n} Z_k(0)`.
    pub cum_newborns: u64,
    /// `Z_n / m_n`.
    pub z_over_m: f64,
    /// `Z_n / (m + 1)^n`.
    pub m_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub records: Vec<GenerationRecord>,
    /// First generation with no individual left (only without immigration).
    pub extinct_at: Option<usize>,
}

impl Trajectory {
    pub fn last(&self) -> &GenerationRecord {
        self.records.last().expect("a trajectory holds generation 0")
    }

    pub fn survived(&self) -> bool {
        self.extinct_at.is_none()
    }

    /// CSV columns `n, Z_n, Z_n_0, cum_newborns, Z_over_m, M_n, extinct`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "Z_n", "Z_n_0", "cum_newborns", "Z_over_m", "M_n", "extinct"])?;
        for r in &self.records {
            let extinct = self.extinct_at.is_some_and(|e| r.n >= e);
            w.write_record([
                r.n.to_string(),
                r.total.to_string(),
                r.newborns.to_string(),
                r.cum_newborns.to_string(),
                r.z_over_m.to_string(),
                r.m_n.to_string(),
                u8::from(extinct).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl BranchingModel {
    pub fn new(profile: AgeProfile, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            profile,
            alpha,
            population_cap: DEFAULT_POPULATION_CAP,
            busy: BusyPeriod::new(alpha)?,
        })
    }

    /// Caps both the population of a generation and single busy periods.
    pub fn with_cap(mut self, cap: u64) -> Self {
        self.population_cap = cap;
        self.busy = self.busy.with_cap(cap);
        self
    }

    pub fn profile(&self) -> &AgeProfile {
        &self.profile
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m(&self) -> f64 {
        mean_offspring(self.alpha)
    }

    pub fn cap(&self) -> u64 {
        self.population_cap
    }

    /// Moves `state` from generation `n - 1` to `n`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &PopulationState,
        immigration: &ImmigrationSpec,
        rng: &mut R,
    ) -> Result<PopulationState> {
        let n = state.generation + 1;
        let a_n = self.profile.max_age(n);
        let overflow = || Error::PopulationOverflow {
            generation: n,
            cap: self.population_cap,
        };
        let parents = state.total();
        // the sum of k independent R(1) is R(k)
        let children = self.busy.sample_after(parents as f64, rng).map_err(|_| overflow())?;
        let immigrants = immigration.sample(&self.busy, n, rng).map_err(|_| overflow())?;
        let mut counts = vec![0; a_n + 1];
        counts[0] = children.checked_add(immigrants).ok_or_else(overflow)?;
        for a in 1..=a_n {
            counts[a] = state.counts.get(a - 1).copied().unwrap_or(0);
        }
        let next = PopulationState { generation: n, counts };
        if next.total() > self.population_cap {
            return Err(overflow());
        }
        Ok(next)
    }

    /// `E[Z_{n+1} | Z_n] = m Z_n + sum_{k < a_{n+1}} Z_n(k) + E[I_{n+1}]`.
    pub fn conditional_mean_next(&self, state: &PopulationState, immigration: &ImmigrationSpec) -> f64 {
        let a_next = self.profile.max_age(state.generation + 1);
        let survivors: u64 = state.counts.iter().take(a_next).sum();
        self.m() * state.total() as f64 + survivors as f64 + immigration.mean(self.alpha, state.generation + 1)
    }

    /// `ln m_n` for `n <= horizon`, as used to normalize trajectories.
    pub fn ln_means(&self, horizon: usize) -> Vec<f64> {
        MeanModel::new(self.profile.clone(), self.m())
            .expect("alpha validated")
            .forward(horizon)
            .ln_totals()
    }

    pub fn simulate<R: Rng + ?Sized>(
        &self,
        immigration: &ImmigrationSpec,
        horizon: usize,
        initial: PopulationState,
        rng: &mut R,
    ) -> Result<Trajectory> {
        let ln_means = self.ln_means(horizon);
        self.simulate_normalized(immigration, horizon, initial, &ln_means, rng)
    }

    /// As [`Self::simulate`], with `ln m_n` supplied by the caller so that
    /// replicate farms compute it once.
    pub fn simulate_normalized<R: Rng + ?Sized>(
        &self,
        immigration: &ImmigrationSpec,
        horizon: usize,
        initial: PopulationState,
        ln_means: &[f64],
        rng: &mut R,
    ) -> Result<Trajectory> {
        immigration.validate(horizon)?;
        if ln_means.len() <= horizon {
            return Err(invalid("ln_means", "must cover generations 0..=horizon"));
        }
        let width = self.profile.max_age(0) + 1;
        if initial.generation != 0 || initial.counts.len() > width {
            return Err(invalid("initial", "must be a generation-0 state over ages 0..=a_0"));
        }
        let mut initial = initial;
        initial.counts.resize(width, 0);
        let ln_growth = (self.m() + 1.0).ln();
        let record = |s: &PopulationState, cum: u64| GenerationRecord {
            n: s.generation,
            total: s.total(),
            counts: s.counts.clone(),
            newborns: s.newborns(),
            cum_newborns: cum,
            z_over_m: s.total() as f64 * (-ln_means[s.generation]).exp(),
            m_n: s.total() as f64 * (-(s.generation as f64) * ln_growth).exp(),
        };
        let mut extinct_at = None;
        let mut state = initial;
        let mut cum = state.newborns();
        let mut records = vec![record(&state, cum)];
        if state.total() == 0 && immigration.is_none() {
            extinct_at = Some(0);
        }
        for _ in 0..horizon {
            state = if extinct_at.is_some() {
                PopulationState::empty(state.generation + 1, &self.profile)
            } else {
                self.step(&state, immigration, rng)?
            };
            cum += state.newborns();
            if extinct_at.is_none() && state.total() == 0 && immigration.is_none() {
                extinct_at = Some(state.generation);
            }
            records.push(record(&state, cum));
        }
        Ok(Trajectory { records, extinct_at })
    }
}

/// Distribution of `Z_n / m_n` at the last generation across replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WSummary {
    pub n: usize,
    pub replicates: usize,
    pub mean: f64,
    pub sd: f64,
    pub std_error: f64,
    pub survival_fraction: f64,
    /// `(p, quantile)` over surviving replicates.
    pub surviving_quantiles: Vec<(f64, f64)>,
}

pub fn estimate_w(trajectories: &[Trajectory]) -> Result<WSummary> {
    let Some(first) = trajectories.first() else {
        return Err(invalid("trajectories", "need at least one trajectory"));
    };
    let n = first.last().n;
    let w: Vec<f64> = trajectories.iter().map(|t| t.last().z_over_m).collect();
    let surviving: Vec<f64> = trajectories
        .iter()
        .filter(|t| t.survived())
        .map(|t| t.last().z_over_m)
        .collect();
    let s = Summary::of(&w);
    let surviving_quantiles = if surviving.is_empty() {
        Vec::new()
    } else {
        [0.05, 0.25, 0.5, 0.75, 0.95]
            .iter()
            .map(|&p| (p, quantile(&surviving, p)))
            .collect()
    };
    Ok(WSummary {
        n,
        replicates: trajectories.len(),
        mean: s.mean,
        sd: s.sd,
        std_error: s.std_error,
        survival_fraction: surviving.len() as f64 / trajectories.len() as f64,
        surviving_quantiles,
    })
}

/// Standard deviation across replicates of `Z_{n+1}/m_{n+1} - Z_n/m_n`,
/// for each `n` below the common horizon.
pub fn increment_sd(trajectories: &[Trajectory]) -> Vec<f64> {
    let horizon = trajectories.iter().map(|t| t.records.len()).min().unwrap_or(0);
    (0..horizon.saturating_sub(1))
        .map(|n| {
            let inc: Vec<f64> = trajectories
                .iter()
                .map(|t| t.records[n + 1].z_over_m - t.records[n].z_over_m)
                .collect();
            Summary::of(&inc).sd
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn extinction_is_absorbing() {
        let model = BranchingModel::new(AgeProfile::constant(2), 0.4).unwrap();
        let mut rng = rng_from_seed(1);
        let state = PopulationState::empty(3, model.profile());
        let next = model.step(&state, &ImmigrationSpec::None, &mut rng).unwrap();
        assert_eq!(next.counts, vec![0, 0, 0]);
        assert_eq!(next.generation, 4);
    }

    #[test]
    fn shift_identity_holds_along_paths() {
        let model = BranchingModel::new(AgeProfile::logarithmic(2.0).unwrap(), 0.5).unwrap();
        let mut rng = rng_from_seed(9);
        let imm = ImmigrationSpec::Poisson { mean: 0.5 };
        let t = model.simulate(&imm, 20, PopulationState::newborn(), &mut rng).unwrap();
        for w in t.records.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            for a in 1..cur.counts.len() {
                assert_eq!(cur.counts[a], prev.counts.get(a - 1).copied().unwrap_or(0));
            }
            assert_eq!(cur.cum_newborns, prev.cum_newborns + cur.newborns);
        }
        assert!(t.extinct_at.is_none());
    }

    #[test]
    fn conditional_mean_is_supermartingale() {
        let model = BranchingModel::new(AgeProfile::custom(vec![1, 2, 2, 3]).unwrap(), 0.5).unwrap();
        let m = model.m();
        let growing = PopulationState {
            generation: 0,
            counts: vec![3, 4],
        };
        let none = ImmigrationSpec::None;
        assert_eq!(model.conditional_mean_next(&growing, &none), (m + 1.0) * 7.0);
        let capped = PopulationState {
            generation: 1,
            counts: vec![3, 4, 5],
        };
        assert!(model.conditional_mean_next(&capped, &none) < (m + 1.0) * 12.0);
    }

    #[test]
    fn overflow_reports_generation() {
        let model = BranchingModel::new(AgeProfile::linear(), 0.6).unwrap().with_cap(1000);
        let mut rng = rng_from_seed(3);
        let start = PopulationState {
            generation: 0,
            counts: vec![500],
        };
        let err = model.simulate(&ImmigrationSpec::None, 50, start, &mut rng).unwrap_err();
        assert!(matches!(err, Error::PopulationOverflow { cap: 1000, .. }));
    }

    #[test]
    fn deterministic_per_seed() {
        let model = BranchingModel::new(AgeProfile::constant(3), 0.5).unwrap();
        let run = |seed| {
            let mut rng = rng_from_seed(seed);
            model
                .simulate(&ImmigrationSpec::None, 20, PopulationState::newborn(), &mut rng)
                .unwrap()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn extinct_paths_stay_at_zero() {
        let model = BranchingModel::new(AgeProfile::constant(0), 0.1).unwrap();
        let mut rng = rng_from_seed(0);
        let t = (0..100)
            .map(|_| {
                model
                    .simulate(&ImmigrationSpec::None, 40, PopulationState::newborn(), &mut rng)
                    .unwrap()
            })
            .find(|t| t.extinct_at.is_some())
            .expect("m = 1/9 with no aging survivors dies out");
        let e = t.extinct_at.unwrap();
        assert!(t.records[e..].iter().all(|r| r.total == 0));
        assert!(e > 0);
        let w = estimate_w(std::slice::from_ref(&t)).unwrap();
        assert_eq!(w.mean, 0.0);
    }

    #[test]
    fn csv_columns() {
        let model = BranchingModel::new(AgeProfile::constant(1), 0.3).unwrap();
        let mut rng = rng_from_seed(2);
        let t = model
            .simulate(&ImmigrationSpec::None, 3, PopulationState::newborn(), &mut rng)
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,Z_n,Z_n_0,cum_newborns,Z_over_m,M_n,extinct\n0,1,1,1,1,1,0\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
