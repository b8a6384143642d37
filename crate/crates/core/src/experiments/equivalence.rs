use serde::Deserialize;

use super::{
    check_alpha, check_count, check_positive, farm, field_error, fmt_f64, stream_seeds, Assertion, Experiment,
    ExperimentOutput, Table, Validate,
};
use crate::bus::{immigration_times, simulate_bus_branching, simulate_bus_direct, Discipline, ImmigrationVariant};
use crate::distributions::{mean_offspring, QueueParams};
use crate::error::Result;
use crate::means::mean_forward;
use crate::seed::rng_from_seed;
use crate::stats::{ks_two_sample, Summary};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquivalenceParams {
    pub alpha: f64,
    pub tau: f64,
    pub discipline: Discipline,
    pub stations: usize,
    pub replicates: usize,
    pub variant: ImmigrationVariant,
    /// Run as a third arm that the KS test is expected to reject.
    pub alternative: Option<ImmigrationVariant>,
}

impl Default for EquivalenceParams {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            tau: 1.0,
            discipline: Discipline::constant(2),
            stations: 30,
            replicates: 10_000,
            variant: ImmigrationVariant::DisciplineTimesTau,
            alternative: Some(ImmigrationVariant::AgeTimesTau),
        }
    }
}

impl Validate for EquivalenceParams {
    fn validate(&self) -> Result<()> {
        check_alpha("alpha", self.alpha)?;
        check_positive("tau", self.tau)?;
        check_count("stations", self.stations)?;
        check_count("replicates", self.replicates)?;
        self.discipline
            .validate(self.stations)
            .map_err(|e| field_error("discipline", e.to_string()))?;
        if self.alternative == Some(self.variant) {
            return Err(field_error("alternative", "must differ from variant"));
        }
        Ok(())
    }
}

impl EquivalenceParams {
    /// `E[H_n - n tau]` from the mean recursion with the variant's
    /// immigration means.
    fn exact_mean(&self, variant: ImmigrationVariant) -> Result<f64> {
        let n = self.stations;
        let m = mean_offspring(self.alpha);
        let profile = self.discipline.age_profile(n);
        let immigration: Vec<f64> = immigration_times(&self.discipline, self.tau, n, variant)
            .into_iter()
            .map(|t| m * t)
            .collect();
        let fwd = mean_forward(&profile, m, n, Some(&immigration), &[0.0])?;
        Ok((1..=n).map(|k| fwd.newborns(k)).sum())
    }
}

/// Standard error of a sample variance, from the fourth moment.
fn variance_se(s: &Summary) -> f64 {
    let var = s.sd * s.sd;
    var * ((s.excess_kurtosis + 2.0) / s.count as f64).max(0.0).sqrt()
}

impl Experiment for EquivalenceParams {
    fn run(&self, master_seed: u64) -> Result<ExperimentOutput> {
        let mut out = ExperimentOutput::new();
        let params = QueueParams::new(self.alpha, self.tau)?;
        let n = self.stations;
        let wait = |t: crate::bus::BusTrajectory| t.total_boardings() as f64;

        let direct_seeds = stream_seeds(master_seed, 0, self.replicates);
        let direct: Vec<f64> = farm(&direct_seeds, |s| {
            simulate_bus_direct(params, &self.discipline, n, &mut rng_from_seed(s)).map(wait)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let branch_seeds = stream_seeds(master_seed, 1, self.replicates);
        let arm = |variant| -> Result<Vec<f64>> {
            farm(&branch_seeds, |s| {
                simulate_bus_branching(params, &self.discipline, n, variant, &mut rng_from_seed(s)).map(wait)
            })
            .into_iter()
            .collect()
        };
        let branching = arm(self.variant)?;
        out.seeds.extend(&direct_seeds);
        out.seeds.extend(&branch_seeds);

        let (sd, sb) = (Summary::of(&direct), Summary::of(&branching));
        let tag = format!("{:?}", self.variant);
        out.assert(Assertion::le(
            format!("|mean direct - mean branching ({tag})| of H_{n} - n tau"),
            (sd.mean - sb.mean).abs(),
            3.0 * sd.std_error.hypot(sb.std_error),
        ));
        out.assert(Assertion::le(
            format!("|var direct - var branching ({tag})|"),
            (sd.sd * sd.sd - sb.sd * sb.sd).abs(),
            3.0 * variance_se(&sd).hypot(variance_se(&sb)),
        ));
        let ks = ks_two_sample(&direct, &branching);
        out.assert(Assertion::lt(
            format!("KS direct vs branching ({tag})"),
            ks.statistic,
            ks.critical,
        ));

        let exact = self.exact_mean(self.variant)?;
        out.assert(
            Assertion::le(
                "|mean direct - exact mean|",
                (sd.mean - exact).abs(),
                3.0 * sd.std_error,
            )
            .with_note(format!("exact E[H_n - n tau] = {}", fmt_f64(exact))),
        );
        out.assert(Assertion::le(
            "|mean branching - exact mean|",
            (sb.mean - exact).abs(),
            3.0 * sb.std_error,
        ));
        out.metric("direct_mean", sd.mean);
        out.metric("branching_mean", sb.mean);
        out.metric("exact_mean", exact);

        let mut samples = Table::new("samples.csv", &["replicate", "direct", "branching", "alternative"]);
        let alternative = match self.alternative {
            Some(v) => {
                let alt = arm(v)?;
                let ks = ks_two_sample(&direct, &alt);
                out.assert(
                    Assertion::gt(
                        format!("KS direct vs branching ({v:?}), expected to reject"),
                        ks.statistic,
                        ks.critical,
                    )
                    .with_note(format!("selected variant {tag}")),
                );
                out.metric("alternative_mean", Summary::of(&alt).mean);
                out.metric("alternative_exact_mean", self.exact_mean(v)?);
                Some(alt)
            }
            None => None,
        };
        for k in 0..self.replicates {
            samples.push(vec![
                k.to_string(),
                fmt_f64(direct[k]),
                fmt_f64(branching[k]),
                alternative.as_ref().map_or(String::new(), |a| fmt_f64(a[k])),
            ]);
        }
        out.tables.push(samples);
        Ok(out)
    }
}
