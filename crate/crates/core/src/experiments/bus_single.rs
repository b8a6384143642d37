use serde::Deserialize;

use super::{
    check_alpha, check_count, check_positive, farm, field_error, fmt_f64, stream_seeds, Assertion, Experiment,
    ExperimentOutput, Table, Validate,
};
use crate::bus::{position_at, simulate_bus_direct, Discipline};
use crate::distributions::QueueParams;
use crate::error::Result;
use crate::seed::rng_from_seed;
use crate::stats::{normal_shape_errors, quantile, Summary};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BusSingleParams {
    pub alpha: f64,
    pub tau: f64,
    pub discipline: Discipline,
    pub replicates: usize,
    /// `c_hat` is compared between these two station counts.
    pub stations: (usize, usize),
    pub max_relative_change: f64,
    pub clt_replicates: usize,
    pub clt_stations: usize,
    pub max_abs_skewness: f64,
    pub max_abs_excess_kurtosis: f64,
}

impl Default for BusSingleParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            tau: 1.0,
            discipline: Discipline::constant(2),
            replicates: 100,
            stations: (5000, 10_000),
            max_relative_change: 0.01,
            clt_replicates: 200_000,
            clt_stations: 5000,
            max_abs_skewness: 0.1,
            max_abs_excess_kurtosis: 0.2,
        }
    }
}

impl Validate for BusSingleParams {
    fn validate(&self) -> Result<()> {
        check_alpha("alpha", self.alpha)?;
        check_positive("tau", self.tau)?;
        check_count("replicates", self.replicates)?;
        check_count("clt_replicates", self.clt_replicates)?;
        check_count("clt_stations", self.clt_stations)?;
        let (short, long) = self.stations;
        if short == 0 || short >= long {
            return Err(field_error("stations", "need 1 <= short < long"));
        }
        self.discipline
            .validate(long.max(self.clt_stations))
            .map_err(|e| field_error("discipline", e.to_string()))?;
        check_positive("max_relative_change", self.max_relative_change)?;
        check_positive("max_abs_skewness", self.max_abs_skewness)?;
        check_positive("max_abs_excess_kurtosis", self.max_abs_excess_kurtosis)
    }
}

impl Experiment for BusSingleParams {
    fn run(&self, master_seed: u64) -> Result<ExperimentOutput> {
        let mut out = ExperimentOutput::new();
        let params = QueueParams::new(self.alpha, self.tau)?;
        let (short, long) = self.stations;

        let seeds = stream_seeds(master_seed, 0, self.replicates);
        let runs = farm(&seeds, |seed| {
            simulate_bus_direct(params, &self.discipline, long, &mut rng_from_seed(seed))
        });
        let mut speed = Table::new("speed.csv", &["replicate", "seed", "H_short", "H_long", "P_t_over_t"]);
        let (mut h_short, mut h_long, mut inverse) = (Vec::new(), Vec::new(), Vec::new());
        for (k, (r, &seed)) in runs.into_iter().zip(&seeds).enumerate() {
            let Ok(traj) = r else {
                out.failures += 1;
                continue;
            };
            let t = 0.5 * traj.last_departure();
            let p_over_t = position_at(&traj, t)? as f64 / t;
            h_short.push(traj.departures[short]);
            h_long.push(traj.departures[long]);
            inverse.push(p_over_t);
            speed.push(vec![
                k.to_string(),
                seed.to_string(),
                fmt_f64(traj.departures[short]),
                fmt_f64(traj.departures[long]),
                fmt_f64(p_over_t),
            ]);
        }
        out.seeds.extend(&seeds);
        let c_short = Summary::of(&h_short).mean / short as f64;
        let c_long = Summary::of(&h_long).mean / long as f64;
        out.assert(Assertion::lt(
            format!("|c_hat({long}) / c_hat({short}) - 1|"),
            (c_long / c_short - 1.0).abs(),
            self.max_relative_change,
        ));
        out.assert(Assertion::gt(format!("c_hat({long}) vs tau"), c_long, self.tau));
        out.metric("c_hat_short", c_short);
        out.metric("c_hat_long", c_long);
        out.metric(
            "mean P_t / t * c_hat at t = H_long / 2",
            Summary::of(&inverse).mean * c_long,
        );

        let n = self.clt_stations;
        let clt_seeds = stream_seeds(master_seed, 1, self.clt_replicates);
        let runs = farm(&clt_seeds, |seed| {
            simulate_bus_direct(params, &self.discipline, n, &mut rng_from_seed(seed)).map(|t| t.last_departure())
        });
        out.seeds.extend(&clt_seeds);
        let mut z = Vec::new();
        for r in runs {
            let Ok(h) = r else {
                out.failures += 1;
                continue;
            };
            z.push((h - n as f64 * c_long) / (n as f64).sqrt());
        }
        let s = Summary::of(&z);
        let (se_skew, se_kurt) = normal_shape_errors(z.len());
        let mut clt = Table::new(
            "clt.csv",
            &[
                "stations",
                "replicates",
                "mean",
                "sd",
                "skewness",
                "excess_kurtosis",
                "q01",
                "q50",
                "q99",
            ],
        );
        clt.push(vec![
            n.to_string(),
            z.len().to_string(),
            fmt_f64(s.mean),
            fmt_f64(s.sd),
            fmt_f64(s.skewness),
            fmt_f64(s.excess_kurtosis),
            fmt_f64(quantile(&z, 0.01)),
            fmt_f64(quantile(&z, 0.5)),
            fmt_f64(quantile(&z, 0.99)),
        ]);
        out.assert(
            Assertion::lt(
                format!("|skewness| of (H_{n} - n c_hat)/sqrt(n)"),
                s.skewness.abs(),
                self.max_abs_skewness,
            )
            .with_note(format!("normal-sample SE {}", fmt_f64(se_skew))),
        );
        out.assert(
            Assertion::lt(
                format!("|excess kurtosis| of (H_{n} - n c_hat)/sqrt(n)"),
                s.excess_kurtosis.abs(),
                self.max_abs_excess_kurtosis,
            )
            .with_note(format!("normal-sample SE {}", fmt_f64(se_kurt))),
        );
        out.metric("clt_mean", s.mean);
        out.metric("clt_sd", s.sd);
        out.tables.push(speed);
        out.tables.push(clt);
        Ok(out)
    }
}
