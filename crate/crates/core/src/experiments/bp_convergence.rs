use serde::Deserialize;

use super::{
    check_alpha, check_count, farm, field_error, fmt_f64, stream_seeds, Assertion, Experiment, ExperimentOutput, Table,
    Validate,
};
use crate::branching::{BranchingModel, ImmigrationSpec, PopulationState, Trajectory};
use crate::distributions::mean_offspring;
use crate::error::Result;
use crate::means::MeanModel;
use crate::profile::AgeProfile;
use crate::seed::rng_from_seed;
use crate::stats::{median, Summary};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BpConvergenceParams {
    pub alpha: f64,
    pub profile: AgeProfile,
    /// Last generation of the diagnostics; paths run one generation further
    /// for the growth ratio.
    pub horizon: usize,
    pub replicates: usize,
    /// Ages `0..=max_age` of the frequency check.
    pub max_age: usize,
    pub population_cap: u64,
}

impl Default for BpConvergenceParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            profile: AgeProfile::logarithmic_scaled(2.0, 1.0).expect("valid"),
            horizon: 40,
            replicates: 10_000,
            max_age: 5,
            population_cap: u64::MAX / 4,
        }
    }
}

impl Validate for BpConvergenceParams {
    fn validate(&self) -> Result<()> {
        check_alpha("alpha", self.alpha)?;
        check_count("horizon", self.horizon)?;
        check_count("replicates", self.replicates)?;
        self.profile
            .validate(self.horizon + 1)
            .map_err(|e| field_error("profile", e.to_string()))?;
        if self.max_age > self.profile.max_age(self.horizon) {
            return Err(field_error("max_age", "exceeds a_n at the horizon"));
        }
        if self.population_cap > u64::MAX / 2 {
            return Err(field_error("population_cap", "must not exceed u64::MAX / 2"));
        }
        Ok(())
    }
}

impl Experiment for BpConvergenceParams {
    fn run(&self, master_seed: u64) -> Result<ExperimentOutput> {
        let mut out = ExperimentOutput::new();
        let n = self.horizon;
        let m = mean_offspring(self.alpha);
        let model = BranchingModel::new(self.profile.clone(), self.alpha)?.with_cap(self.population_cap);
        let ln_means = model.ln_means(n + 1);
        let seeds = stream_seeds(master_seed, 0, self.replicates);
        let runs = farm(&seeds, |seed| {
            model.simulate_normalized(
                &ImmigrationSpec::None,
                n + 1,
                PopulationState::newborn(),
                &ln_means,
                &mut rng_from_seed(seed),
            )
        });
        out.seeds = seeds;
        let paths: Vec<Trajectory> = runs.into_iter().filter_map(|r| r.ok()).collect();
        out.failures = self.replicates - paths.len();

        let mut w_table = Table::new(
            "w.csv",
            &[
                "n",
                "mean_z_over_m",
                "std_error",
                "deviation_in_se",
                "survival_fraction",
            ],
        );
        let mut worst = 0.0f64;
        for k in 1..=n {
            let w: Vec<f64> = paths.iter().map(|t| t.records[k].z_over_m).collect();
            let s = Summary::of(&w);
            let dev = (s.mean - 1.0).abs() / s.std_error;
            worst = worst.max(dev);
            let alive = paths.iter().filter(|t| t.records[k].total > 0).count() as f64 / paths.len() as f64;
            w_table.push(vec![
                k.to_string(),
                fmt_f64(s.mean),
                fmt_f64(s.std_error),
                fmt_f64(dev),
                fmt_f64(alive),
            ]);
        }
        out.assert(Assertion::le(
            format!("max over n <= {n} of |mean Z_n/m_n - 1| / SE"),
            worst,
            3.0,
        ));

        let survivors: Vec<&Trajectory> = paths.iter().filter(|t| t.survived()).collect();
        out.metric("survivors", survivors.len() as f64);
        let ratio_dev: Vec<f64> = survivors
            .iter()
            .map(|t| (t.records[n + 1].total as f64 / t.records[n].total as f64 - (m + 1.0)).abs())
            .collect();
        out.assert(Assertion::lt(
            format!("median |Z_{}/Z_{n} - (m+1)| on survivors", n + 1),
            median(&ratio_dev),
            0.02,
        ));

        let fwd = MeanModel::new(self.profile.clone(), m)?.forward(n);
        let mut ages = Table::new(
            "ages.csv",
            &[
                "k",
                "mean_frequency",
                "std_error",
                "sd",
                "limit",
                "exact_mean_ratio",
                "limit_deviation_in_se",
                "exact_deviation_in_se",
            ],
        );
        for k in 0..=self.max_age {
            let f: Vec<f64> = survivors
                .iter()
                .map(|t| t.records[n].counts[k] as f64 / t.records[n].total as f64)
                .collect();
            let s = Summary::of(&f);
            let limit = m / (m + 1.0).powi(k as i32 + 1);
            let exact = fwd.row(n).get(k) / fwd.total(n);
            out.assert(
                Assertion::le(
                    format!("age {k} frequency |mean - m/(m+1)^(k+1)|"),
                    (s.mean - limit).abs(),
                    3.0 * s.std_error,
                )
                .with_note(format!(
                    "exact finite-n mean ratio m_(0,{n})(0,{k})/m_{n} = {}",
                    fmt_f64(exact)
                )),
            );
            out.metric(
                format!("age {k} frequency deviation from exact finite-n ratio in SE"),
                (s.mean - exact) / s.std_error,
            );
            ages.push(vec![
                k.to_string(),
                fmt_f64(s.mean),
                fmt_f64(s.std_error),
                fmt_f64(s.sd),
                fmt_f64(limit),
                fmt_f64(exact),
                fmt_f64((s.mean - limit) / s.std_error),
                fmt_f64((s.mean - exact) / s.std_error),
            ]);
        }
        out.tables.push(w_table);
        out.tables.push(ages);
        Ok(out)
    }
}
