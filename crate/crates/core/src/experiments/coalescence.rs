use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    check_alpha, check_count, check_positive, farm, field_error, fmt_f64, stream_seeds, Assertion, Experiment,
    ExperimentOutput, Table, Validate,
};
use crate::bus::{simulate_two_buses, Discipline, MergeStatus, MergeSummary, SeparationRule, TwoBusConfig};
use crate::distributions::QueueParams;
use crate::error::Result;
use crate::seed::rng_from_seed;

/// What the merged fractions must show.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CoalescenceExpectation {
    /// At the last horizon.
    MinMergedFraction(f64),
    /// Between the first and last horizons the fraction moves by at most
    /// `max_change` and stays at least `min_gap` below one.
    Plateau { max_change: f64, min_gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoalescenceParams {
    pub alpha: f64,
    pub tau: f64,
    pub discipline: Discipline,
    pub mu: f64,
    /// Increasing station horizons; one run to the last serves them all.
    pub horizons: Vec<usize>,
    pub replicates: usize,
    pub cap: u64,
    pub separation: Option<SeparationRule>,
    pub expect: Option<CoalescenceExpectation>,
}

impl Default for CoalescenceParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            tau: 1.0,
            discipline: Discipline::constant(2),
            mu: 1.75,
            horizons: vec![1000, 10_000],
            replicates: 500,
            cap: 1_000_000_000_000,
            separation: Some(SeparationRule::default()),
            expect: Some(CoalescenceExpectation::MinMergedFraction(0.99)),
        }
    }
}

impl Validate for CoalescenceParams {
    fn validate(&self) -> Result<()> {
        check_alpha("alpha", self.alpha)?;
        check_positive("tau", self.tau)?;
        check_positive("mu", self.mu)?;
        check_count("replicates", self.replicates)?;
        if self.horizons.is_empty() || self.horizons.contains(&0) || self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field_error(
                "horizons",
                "need a strictly increasing list of positive horizons",
            ));
        }
        let last = *self.horizons.last().expect("nonempty");
        self.discipline
            .validate(last)
            .map_err(|e| field_error("discipline", e.to_string()))?;
        if self.cap == 0 {
            return Err(field_error("cap", "must be >= 1"));
        }
        match self.expect {
            Some(CoalescenceExpectation::MinMergedFraction(f)) if !(0.0..=1.0).contains(&f) => {
                Err(field_error("expect.min_merged_fraction", "must lie in [0, 1]"))
            }
            Some(CoalescenceExpectation::Plateau { max_change, min_gap }) if !(max_change >= 0.0 && min_gap >= 0.0) => {
                Err(field_error("expect.plateau", "max_change and min_gap must be >= 0"))
            }
            Some(CoalescenceExpectation::Plateau { .. }) if self.horizons.len() < 2 => {
                Err(field_error("horizons", "a plateau needs at least two horizons"))
            }
            _ => Ok(()),
        }
    }
}

fn status_name(s: MergeStatus) -> &'static str {
    match s {
        MergeStatus::Merged => "merged",
        MergeStatus::Horizon => "horizon",
        MergeStatus::Separated => "separated",
        MergeStatus::Overflow => "overflow",
    }
}

impl Experiment for CoalescenceParams {
    fn run(&self, master_seed: u64) -> Result<ExperimentOutput> {
        let mut out = ExperimentOutput::new();
        let params = QueueParams::new(self.alpha, self.tau)?;
        let config = TwoBusConfig {
            mu: self.mu,
            horizon: *self.horizons.last().expect("validated"),
            cap: self.cap,
            separation: self.separation,
        };
        let seeds = stream_seeds(master_seed, 0, self.replicates);
        let runs = farm(&seeds, |seed| {
            simulate_two_buses(params, &self.discipline, &config, &mut rng_from_seed(seed))
                .map(|r| (MergeSummary::of(&r, seed), r.follower.stations()))
        });
        out.seeds = seeds;
        let runs: Vec<(MergeSummary, usize)> = runs.into_iter().collect::<Result<_>>()?;

        let mut merges = Table::new(
            "merges.csv",
            &[
                "replicate",
                "seed",
                "status",
                "merge_station",
                "merge_time",
                "last_station",
            ],
        );
        let mut counts = BTreeMap::<&str, usize>::new();
        for (k, (s, last)) in runs.iter().enumerate() {
            *counts.entry(status_name(s.status)).or_default() += 1;
            merges.push(vec![
                k.to_string(),
                s.seed.to_string(),
                status_name(s.status).into(),
                s.station.map_or(String::new(), |v| v.to_string()),
                s.time.map_or(String::new(), fmt_f64),
                last.to_string(),
            ]);
        }
        for (name, c) in &counts {
            out.metric(format!("status {name}"), *c as f64);
        }
        out.failures = counts.get("overflow").copied().unwrap_or(0);

        let mut fractions = Table::new("fractions.csv", &["horizon", "merged", "replicates", "merged_fraction"]);
        let mut frac = Vec::new();
        for &h in &self.horizons {
            let merged = runs.iter().filter(|(s, _)| s.station.is_some_and(|st| st <= h)).count();
            let f = merged as f64 / self.replicates as f64;
            frac.push(f);
            out.metric(format!("merged_fraction at {h}"), f);
            fractions.push(vec![
                h.to_string(),
                merged.to_string(),
                self.replicates.to_string(),
                fmt_f64(f),
            ]);
        }
        let (first, last) = (frac[0], *frac.last().expect("nonempty"));
        let h_last = *self.horizons.last().expect("nonempty");
        match self.expect {
            Some(CoalescenceExpectation::MinMergedFraction(min)) => {
                out.assert(Assertion::ge(
                    format!("merged fraction within {h_last} stations"),
                    last,
                    min,
                ));
            }
            Some(CoalescenceExpectation::Plateau { max_change, min_gap }) => {
                out.assert(Assertion::le(
                    format!("|merged fraction at {h_last} - at {}|", self.horizons[0]),
                    (last - first).abs(),
                    max_change,
                ));
                out.assert(Assertion::ge(
                    format!("1 - merged fraction at {h_last}"),
                    1.0 - last,
                    min_gap,
                ));
            }
            None => {}
        }
        let summaries: Vec<&MergeSummary> = runs.iter().map(|(s, _)| s).collect();
        out.documents
            .push(("merges.json".into(), serde_json::to_value(summaries)?));
        out.tables.push(merges);
        out.tables.push(fractions);
        Ok(out)
    }
}
