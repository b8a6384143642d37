use std::collections::BTreeMap;

use serde::Deserialize;

use super::{
    check_alpha, check_count, check_positive, farm, field_error, fmt_f64, stream_seeds, Assertion, Experiment,
    ExperimentOutput, Table, Validate,
};
use crate::distributions::{borel_pmf, service_moments, BorelTannerForm, BusyPeriod, Pmf, SELECTED_BOREL_TANNER_FORM};
use crate::error::Result;
use crate::seed::rng_from_seed;
use crate::stats::{Summary, KS_COEFFICIENT_1PCT};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistributionsCheckParams {
    pub alphas: Vec<f64>,
    pub samples: usize,
    /// Samples drawn from one seed.
    pub block: usize,
    /// Pmf support is enumerated on `1..=n_max`.
    pub n_max: u64,
    pub tanner_alpha: f64,
    pub tanner_t: f64,
    /// Rows of `pmf.csv` per law.
    pub table_rows: u64,
}

impl Default for DistributionsCheckParams {
    fn default() -> Self {
        Self {
            alphas: vec![0.3, 0.5],
            samples: 1_000_000,
            block: 1000,
            n_max: 10_000,
            tanner_alpha: 0.5,
            tanner_t: 2.0,
            table_rows: 40,
        }
    }
}

impl Validate for DistributionsCheckParams {
    fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(field_error("alphas", "must not be empty"));
        }
        for (k, &a) in self.alphas.iter().enumerate() {
            check_alpha(&format!("alphas[{k}]"), a)?;
        }
        check_count("samples", self.samples)?;
        check_count("block", self.block)?;
        if self.n_max < 1 {
            return Err(field_error("n_max", "must be >= 1"));
        }
        check_alpha("tanner_alpha", self.tanner_alpha)?;
        check_positive("tanner_t", self.tanner_t)
    }
}

/// Draws `samples` values, `block` per seed, in seed order.
fn draw<F>(seeds: &[u64], samples: usize, block: usize, f: F) -> Result<Vec<u64>>
where
    F: Fn(&mut crate::seed::SimRng) -> Result<u64> + Sync + Send,
{
    let blocks = farm(seeds, |seed| {
        let mut rng = rng_from_seed(seed);
        (0..block).map(|_| f(&mut rng)).collect::<Result<Vec<u64>>>()
    });
    let mut out = Vec::with_capacity(samples);
    for b in blocks {
        out.extend(b?);
    }
    out.truncate(samples);
    Ok(out)
}

/// `sup_n |F_emp(n) - F(n)|` over the enumerated support and beyond it.
fn ks_one_sample(pmf: &Pmf, samples: &[u64]) -> f64 {
    let mut counts = BTreeMap::<u64, u64>::new();
    for &s in samples {
        *counts.entry(s).or_default() += 1;
    }
    let n = samples.len() as f64;
    let mut points: Vec<u64> = pmf.support().iter().map(|&(v, _)| v).collect();
    points.extend(counts.keys().copied());
    points.sort_unstable();
    points.dedup();
    let (mut f, mut g, mut d) = (0.0, 0.0, 0.0f64);
    let mut it = pmf.support().iter().peekable();
    for v in points {
        while let Some(&&(w, p)) = it.peek() {
            if w > v {
                break;
            }
            f += p;
            it.next();
        }
        g += counts.get(&v).copied().unwrap_or(0) as f64 / n;
        d = d.max((f - g).abs());
    }
    d
}

fn pmf_rows(table: &mut Table, law: &str, pmf: &Pmf, samples: &[u64], rows: u64) {
    let n = samples.len() as f64;
    let mut counts = BTreeMap::<u64, u64>::new();
    for &s in samples {
        *counts.entry(s).or_default() += 1;
    }
    for &(v, p) in pmf.support().iter().take(rows as usize) {
        table.push(vec![
            law.to_string(),
            v.to_string(),
            fmt_f64(p),
            fmt_f64(counts.get(&v).copied().unwrap_or(0) as f64 / n),
        ]);
    }
}

impl Experiment for DistributionsCheckParams {
    fn run(&self, master_seed: u64) -> Result<ExperimentOutput> {
        let mut out = ExperimentOutput::new();
        let mut pmf_table = Table::new("pmf.csv", &["law", "n", "pmf", "empirical"]);
        let n_blocks = self.samples.div_ceil(self.block);
        let critical = KS_COEFFICIENT_1PCT / (self.samples as f64).sqrt();

        for (k, &alpha) in self.alphas.iter().enumerate() {
            let tag = format!("borel(alpha={})", fmt_f64(alpha));
            let probs: Vec<f64> = (1..=self.n_max).map(|n| borel_pmf(alpha, n)).collect::<Result<_>>()?;
            let total: f64 = probs.iter().sum();
            let mean: f64 = probs.iter().enumerate().map(|(j, p)| (j + 1) as f64 * p).sum();
            out.assert(Assertion::le(
                format!("{tag} normalization |sum - 1|"),
                (total - 1.0).abs(),
                1e-6,
            ));
            out.assert(Assertion::le(
                format!("{tag} mean |sum n p - 1/(1-alpha)|"),
                (mean - 1.0 / (1.0 - alpha)).abs(),
                1e-4,
            ));

            let seeds = stream_seeds(master_seed, k as u64, n_blocks);
            let busy = BusyPeriod::new(alpha)?;
            let samples = draw(&seeds, self.samples, self.block, |rng| busy.sample_from(1, rng))?;
            out.seeds.extend(&seeds);
            let pmf = Pmf::borel(alpha, self.n_max)?;
            out.assert(Assertion::lt(
                format!("{tag} TV to samples"),
                pmf.tv_to_samples(&samples),
                0.01,
            ));
            out.assert(Assertion::lt(
                format!("{tag} KS to samples"),
                ks_one_sample(&pmf, &samples),
                critical,
            ));
            pmf_rows(&mut pmf_table, &tag, &pmf, &samples, self.table_rows);
        }

        let (alpha, t) = (self.tanner_alpha, self.tanner_t);
        let tag = format!("borel-tanner(alpha={}, t={})", fmt_f64(alpha), fmt_f64(t));
        let seeds = stream_seeds(master_seed, self.alphas.len() as u64, n_blocks);
        let busy = BusyPeriod::new(alpha)?;
        let samples = draw(&seeds, self.samples, self.block, |rng| busy.sample_after(t, rng))?;
        out.seeds.extend(&seeds);
        let selected = Pmf::borel_tanner(SELECTED_BOREL_TANNER_FORM, alpha, t, self.n_max)?;
        out.assert(Assertion::le(
            format!("{tag} selected form normalization |sum - 1|"),
            (selected.total() - 1.0).abs(),
            1e-6,
        ));
        out.assert(Assertion::lt(
            format!("{tag} selected form TV to samples"),
            selected.tv_to_samples(&samples),
            0.01,
        ));
        out.assert(Assertion::lt(
            format!("{tag} selected form KS to samples"),
            ks_one_sample(&selected, &samples),
            critical,
        ));
        let stated = Pmf::borel_tanner(BorelTannerForm::Stated, alpha, t, self.n_max)?;
        out.metric(
            "borel_tanner_stated_total_mass",
            stated.support().iter().map(|&(_, p)| p).sum(),
        );
        out.metric("borel_tanner_stated_tv_to_samples", stated.tv_to_samples(&samples));

        let (m1, m2) = service_moments(alpha, t)?;
        let xs: Vec<f64> = samples.iter().map(|&x| x as f64).collect();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let s1 = Summary::of(&xs);
        let s2 = Summary::of(&sq);
        out.assert(
            Assertion::le(
                format!("{tag} |MC mean - E[R(t)]|"),
                (s1.mean - m1).abs(),
                3.0 * s1.std_error,
            )
            .with_note(format!("E[R(t)] = {}", fmt_f64(m1))),
        );
        out.assert(
            Assertion::le(
                format!("{tag} |MC second moment - E[R(t)^2]|"),
                (s2.mean - m2).abs(),
                3.0 * s2.std_error,
            )
            .with_note(format!("E[R(t)^2] = {}", fmt_f64(m2))),
        );
        pmf_rows(&mut pmf_table, &tag, &selected, &samples, self.table_rows);

        let mut moments = Table::new("moments.csv", &["law", "quantity", "exact", "mc", "mc_std_error"]);
        moments.push(vec![
            tag.clone(),
            "mean".into(),
            fmt_f64(m1),
            fmt_f64(s1.mean),
            fmt_f64(s1.std_error),
        ]);
        moments.push(vec![
            tag,
            "second_moment".into(),
            fmt_f64(m2),
            fmt_f64(s2.mean),
            fmt_f64(s2.std_error),
        ]);
        out.tables.push(pmf_table);
        out.tables.push(moments);
        Ok(out)
    }
}
