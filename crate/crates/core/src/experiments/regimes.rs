use rand::Rng;
use serde::Deserialize;

use super::mean_tables::{profile_label, validate_profiles};
use super::{
    check_alpha, check_count, check_positive, farm, field_error, fmt_f64, stream_seeds, Assertion, Experiment,
    ExperimentOutput, Table, Validate,
};
use crate::branching::{BranchingModel, ImmigrationSpec, PopulationState};
use crate::distributions::mean_offspring;
use crate::error::{Error, Result};
use crate::means::mean_forward;
use crate::profile::AgeProfile;
use crate::seed::rng_from_seed;
use crate::stats::{median, quantile};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimesParams {
    pub alpha: f64,
    pub fast_profile: AgeProfile,
    pub slow_profile: AgeProfile,
    pub horizon: usize,
    pub replicates: usize,
    pub population_cap: u64,
    /// The survivors' median of `M_n` must exceed this for the fast profile.
    pub fast_min_median: f64,
    /// ... and stay below this one for the slow profile.
    pub slow_max_median: f64,
    /// Profiles the sampled states are drawn from.
    pub state_profiles: Vec<AgeProfile>,
    pub states: usize,
    /// States are read off paths of this length.
    pub state_horizon: usize,
}

impl Default for RegimesParams {
    fn default() -> Self {
        let fast = AgeProfile::logarithmic_scaled(2.0, 1.0).expect("valid");
        let slow = AgeProfile::logarithmic_scaled(0.5, 1.0).expect("valid");
        Self {
            alpha: 0.5,
            fast_profile: fast.clone(),
            slow_profile: slow.clone(),
            horizon: 60,
            replicates: 10_000,
            population_cap: u64::MAX / 4,
            fast_min_median: 0.05,
            slow_max_median: 0.005,
            state_profiles: vec![fast, slow, AgeProfile::constant(3), AgeProfile::linear()],
            states: 1000,
            state_horizon: 30,
        }
    }
}

impl Validate for RegimesParams {
    fn validate(&self) -> Result<()> {
        check_alpha("alpha", self.alpha)?;
        check_count("horizon", self.horizon)?;
        check_count("replicates", self.replicates)?;
        check_count("states", self.states)?;
        check_count("state_horizon", self.state_horizon)?;
        for (name, p) in [
            ("fast_profile", &self.fast_profile),
            ("slow_profile", &self.slow_profile),
        ] {
            p.validate(self.horizon).map_err(|e| field_error(name, e.to_string()))?;
        }
        validate_profiles(&self.state_profiles, self.state_horizon).map_err(|e| match e {
            Error::Config { field, reason } => Error::Config {
                field: field.replace("profiles", "state_profiles"),
                reason,
            },
            other => other,
        })?;
        check_positive("fast_min_median", self.fast_min_median)?;
        check_positive("slow_max_median", self.slow_max_median)?;
        if self.population_cap > u64::MAX / 2 {
            return Err(field_error("population_cap", "must not exceed u64::MAX / 2"));
        }
        Ok(())
    }
}

impl RegimesParams {
    /// `M_n` at the horizon on surviving paths; overflowing paths count as
    /// survivors with `M_n = inf`.
    fn surviving_m(&self, profile: &AgeProfile, seeds: &[u64]) -> Result<(Vec<f64>, usize)> {
        let model = BranchingModel::new(profile.clone(), self.alpha)?.with_cap(self.population_cap);
        let ln_means = model.ln_means(self.horizon);
        let runs = farm(seeds, |seed| {
            model.simulate_normalized(
                &ImmigrationSpec::None,
                self.horizon,
                PopulationState::newborn(),
                &ln_means,
                &mut rng_from_seed(seed),
            )
        });
        let mut values = Vec::new();
        let mut overflow = 0;
        for r in runs {
            match r {
                Ok(t) if t.survived() => values.push(t.last().m_n),
                Ok(_) => {}
                Err(Error::PopulationOverflow { .. }) => {
                    overflow += 1;
                    values.push(f64::INFINITY);
                }
                Err(e) => return Err(e),
            }
        }
        Ok((values, overflow))
    }
}

impl Experiment for RegimesParams {
    fn run(&self, master_seed: u64) -> Result<ExperimentOutput> {
        let mut out = ExperimentOutput::new();
        let m = mean_offspring(self.alpha);
        let mut summary = Table::new(
            "regimes.csv",
            &[
                "profile",
                "a_horizon",
                "replicates",
                "survivors",
                "overflow",
                "q25",
                "median",
                "q75",
            ],
        );
        let cases = [
            ("fast", &self.fast_profile, 0u64, self.fast_min_median),
            ("slow", &self.slow_profile, 1u64, self.slow_max_median),
        ];
        for (name, profile, stream, threshold) in cases {
            let seeds = stream_seeds(master_seed, stream, self.replicates);
            let (values, overflow) = self.surviving_m(profile, &seeds)?;
            out.seeds.extend(&seeds);
            out.failures += overflow;
            let med = median(&values);
            let tag = format!(
                "{name} profile {}: survivors' median M_{}",
                profile_label(profile),
                self.horizon
            );
            out.assert(if name == "fast" {
                Assertion::gt(tag, med, threshold)
            } else {
                Assertion::lt(tag, med, threshold)
            });
            out.metric(
                format!("{name} survival fraction"),
                values.len() as f64 / self.replicates as f64,
            );
            summary.push(vec![
                format!("{name}:{}", profile_label(profile)),
                profile.max_age(self.horizon).to_string(),
                self.replicates.to_string(),
                values.len().to_string(),
                overflow.to_string(),
                fmt_f64(quantile(&values, 0.25)),
                fmt_f64(med),
                fmt_f64(quantile(&values, 0.75)),
            ]);
        }

        // Sampled states: conditional mean of the next total, against the
        // one-step mean recursion and against (m + 1) Z_n.
        let seeds = stream_seeds(master_seed, 2, self.states);
        out.seeds.extend(&seeds);
        let profiles = &self.state_profiles;
        let sampled = farm(&seeds, |seed| -> Result<(usize, PopulationState)> {
            let idx = (seed % profiles.len() as u64) as usize;
            let model = BranchingModel::new(profiles[idx].clone(), self.alpha)?.with_cap(self.population_cap);
            let mut rng = rng_from_seed(seed);
            let path = model.simulate(
                &ImmigrationSpec::None,
                self.state_horizon,
                PopulationState::newborn(),
                &mut rng,
            )?;
            let alive: Vec<_> = path.records.iter().filter(|r| r.total > 0).collect();
            let r = alive[rng.random_range(0..alive.len())];
            Ok((
                idx,
                PopulationState {
                    generation: r.n,
                    counts: r.counts.clone(),
                },
            ))
        });
        let mut states = Table::new(
            "states.csv",
            &[
                "profile",
                "n",
                "a_n",
                "a_next",
                "Z_n",
                "Z_n_oldest",
                "conditional_mean",
                "recursion_mean",
                "deficit",
            ],
        );
        let (mut worst_oracle, mut worst_deficit, mut worst_identity) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
        let (mut mismatches, mut equal, mut strict) = (0usize, 0usize, 0usize);
        for s in sampled {
            let (idx, state) = s?;
            let profile = &profiles[idx];
            let model = BranchingModel::new(profile.clone(), self.alpha)?;
            let n = state.generation;
            let (a_n, a_next) = (profile.max_age(n), profile.max_age(n + 1));
            let z = state.total() as f64;
            let oldest = state.counts[a_n] as f64;
            let cond = model.conditional_mean_next(&state, &ImmigrationSpec::None);
            let counts: Vec<f64> = state.counts.iter().map(|&c| c as f64).collect();
            let one_step = AgeProfile::custom(vec![a_n, a_next])?;
            let oracle = mean_forward(&one_step, m, 1, None, &counts)?.total(1);
            worst_oracle = worst_oracle.max((cond - oracle).abs() / cond);
            let deficit = (m + 1.0) * z - cond;
            worst_deficit = worst_deficit.max(-deficit / z);
            let step = a_next == a_n + 1;
            let expected = if step { 0.0 } else { oldest };
            worst_identity = worst_identity.max((deficit - expected).abs() / z);
            let is_equal = deficit.abs() <= 1e-12 * z;
            if is_equal != (step || oldest == 0.0) {
                mismatches += 1;
            }
            if is_equal {
                equal += 1
            } else {
                strict += 1
            }
            states.push(vec![
                profile_label(profile),
                n.to_string(),
                a_n.to_string(),
                a_next.to_string(),
                state.total().to_string(),
                state.counts[a_n].to_string(),
                fmt_f64(cond),
                fmt_f64(oracle),
                fmt_f64(deficit),
            ]);
        }
        out.assert(Assertion::le(
            "states: |E[Z_(n+1)|Z_n] - one-step mean recursion| / E",
            worst_oracle,
            1e-12,
        ));
        out.assert(Assertion::le(
            "states: max (E[Z_(n+1)|Z_n] - (m+1) Z_n) / Z_n",
            worst_deficit,
            1e-12,
        ));
        out.assert(Assertion::le(
            "states: |deficit - Z_n(a_n) 1{a_(n+1) = a_n}| / Z_n",
            worst_identity,
            1e-12,
        ));
        out.assert(
            Assertion::le(
                "states: equality without a step or strict inequality with one",
                mismatches as f64,
                0.0,
            )
            .with_note("states with an empty oldest class are equalities"),
        );
        out.metric("states with equality", equal as f64);
        out.metric("states with strict inequality", strict as f64);
        out.tables.push(summary);
        out.tables.push(states);
        Ok(out)
    }
}
