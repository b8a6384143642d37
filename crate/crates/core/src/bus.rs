//! The infinite bus line.
//!
//! A bus leaves station 0 at time 0, travels `tau` between stations and
//! spends one time unit per boarding customer. At station `i` only customers
//! who arrived after the bus reached station `i - d_i` may board, i.e. after
//! `H_{i-d_i-1} + tau` (after time 0 when `i - d_i - 1 < 0`).

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::branching::{BranchingModel, ImmigrationSpec, PopulationState};
use crate::distributions::{BusyPeriod, QueueParams, DEFAULT_BUSY_PERIOD_CAP};
use crate::error::{Constraint, Error, Result};
use crate::profile::{AgeProfile, ProfileFamily};

/// Walking distances `d_i` (in stations) for `i >= 1`, given by the same
/// families as age profiles evaluated at `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Discipline {
    family: AgeProfile,
}

impl Discipline {
    pub fn new(family: ProfileFamily) -> Result<Self> {
        Ok(Self {
            family: AgeProfile::new(family)?,
        })
    }

    pub fn constant(d: usize) -> Self {
        Self {
            family: AgeProfile::constant(d),
        }
    }

    pub fn logarithmic(c: f64) -> Result<Self> {
        Self::new(ProfileFamily::Logarithmic { c })
    }

    pub fn d(&self, i: usize) -> usize {
        self.family.max_age(i)
    }

    /// Checks `d_i >= 1` and `d_{i+1} <= d_i + 1` for `1 <= i <= stations`.
    pub fn validate(&self, stations: usize) -> Result<()> {
        for i in 1..=stations + 1 {
            if self.d(i) == 0 {
                return Err(Error::ProfileViolation {
                    index: i,
                    constraint: Constraint::PositiveDiscipline,
                });
            }
        }
        self.age_profile(stations).validate_step(stations)
    }

    /// Induced maximal ages `a_n = d_{n+1} - 1`, `n = 0..=horizon`.
    pub fn age_profile(&self, horizon: usize) -> AgeProfile {
        match self.family.family() {
            ProfileFamily::Constant { a } => AgeProfile::constant(a.saturating_sub(1)),
            _ => {
                AgeProfile::custom((0..=horizon).map(|n| self.d(n + 1).saturating_sub(1)).collect()).expect("nonempty")
            }
        }
    }
}

/// Arrival times of customers, read station by station.
pub trait ArrivalSource {
    /// Positions the reader on `station` just after time `from`.
    fn open(&mut self, station: usize, from: f64);
    /// Next arrival at the open station, in increasing order.
    fn next_arrival(&mut self) -> Option<f64>;
}

/// Independent Poisson streams of rate `alpha`, generated lazily. Arrivals
/// before the point a station is opened at are never needed, so each opening
/// starts a fresh exponential clock there.
pub struct PoissonArrivals<'a, R: Rng + ?Sized> {
    gap: Exp<f64>,
    clock: f64,
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> PoissonArrivals<'a, R> {
    pub fn new(alpha: f64, rng: &'a mut R) -> Result<Self> {
        let gap = Exp::new(alpha).map_err(|e| crate::error::invalid("alpha", e.to_string()))?;
        Ok(Self { gap, clock: 0.0, rng })
    }
}

impl<R: Rng + ?Sized> ArrivalSource for PoissonArrivals<'_, R> {
    fn open(&mut self, _station: usize, from: f64) {
        self.clock = from;
    }

    fn next_arrival(&mut self) -> Option<f64> {
        self.clock += self.gap.sample(self.rng);
        Some(self.clock)
    }
}

/// Fixed arrival times per station; stations not listed have none.
#[derive(Debug, Clone, Default)]
pub struct ScriptedArrivals {
    times: Vec<Vec<f64>>,
    station: usize,
    pos: usize,
}

impl ScriptedArrivals {
    /// `times[i]` lists the arrivals at station `i`.
    pub fn new(mut times: Vec<Vec<f64>>) -> Self {
        times.iter_mut().for_each(|t| t.sort_by(f64::total_cmp));
        Self {
            times,
            station: 0,
            pos: 0,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }
}

impl ArrivalSource for ScriptedArrivals {
    fn open(&mut self, station: usize, from: f64) {
        self.station = station;
        self.pos = self.times.get(station).map_or(0, |t| t.partition_point(|&x| x <= from));
    }

    fn next_arrival(&mut self) -> Option<f64> {
        let t = self.times.get(self.station)?.get(self.pos).copied();
        self.pos += 1;
        t
    }
}

/// Departure times `H_0..=H_n` and boardings per station.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusTrajectory {
    pub tau: f64,
    pub departures: Vec<f64>,
    pub boardings: Vec<u64>,
}

impl BusTrajectory {
    fn start(tau: f64) -> Self {
        Self {
            tau,
            departures: vec![0.0],
            boardings: vec![0],
        }
    }

    fn push(&mut self, boardings: u64) {
        let h = self.last_departure() + self.tau + boardings as f64;
        self.boardings.push(boardings);
        self.departures.push(h);
    }

    pub fn stations(&self) -> usize {
        self.departures.len() - 1
    }

    pub fn last_departure(&self) -> f64 {
        *self.departures.last().expect("H_0 is always present")
    }

    /// `H_n - n tau`.
    pub fn total_boardings(&self) -> u64 {
        self.boardings.iter().sum()
    }

    /// Eligibility cutoff at station `i` given departures up to `i - 1`.
    fn cutoff(&self, i: usize, d: usize) -> f64 {
        match i.checked_sub(d + 1) {
            Some(k) => self.departures[k] + self.tau,
            None => 0.0,
        }
    }

    /// CSV columns `station, H_i, boardings`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["station", "H_i", "boardings"])?;
        for (i, (h, b)) in self.departures.iter().zip(&self.boardings).enumerate() {
            w.write_record([i.to_string(), h.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Event-level simulation from explicit arrivals. At station `i` the bus
/// arrives at `s = H_{i-1} + tau`; the `j`-th eligible customer (from 0)
/// boards if it arrived by `s + j`, and boarding stops at the first who did
/// not.
pub fn simulate_bus_with<A: ArrivalSource>(
    params: QueueParams,
    discipline: &Discipline,
    n_stations: usize,
    arrivals: &mut A,
    cap: u64,
) -> Result<BusTrajectory> {
    discipline.validate(n_stations)?;
    let tau = params.tau();
    let mut traj = BusTrajectory::start(tau);
    for i in 1..=n_stations {
        let s = traj.departures[i - 1] + tau;
        arrivals.open(i, traj.cutoff(i, discipline.d(i)));
        let mut boarded = 0u64;
        while let Some(t) = arrivals.next_arrival() {
            if t > s + boarded as f64 {
                break;
            }
            boarded += 1;
            if boarded > cap {
                return Err(Error::BusyPeriodOverflow { station: i, cap });
            }
        }
        traj.push(boarded);
    }
    Ok(traj)
}

/// [`simulate_bus_with`] on Poisson arrivals.
pub fn simulate_bus_direct<R: Rng + ?Sized>(
    params: QueueParams,
    discipline: &Discipline,
    n_stations: usize,
    rng: &mut R,
) -> Result<BusTrajectory> {
    let mut arrivals = PoissonArrivals::new(params.alpha(), rng)?;
    simulate_bus_with(params, discipline, n_stations, &mut arrivals, DEFAULT_BUSY_PERIOD_CAP)
}

/// Travel time credited to the immigrants of generation `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImmigrationVariant {
    /// `I_n ~ R(min(d_n, n) tau)`: the `d_n` legs driven since the bus
    /// reached station `n - d_n`, or all `n` legs near the start of the line.
    DisciplineTimesTau,
    /// `I_n ~ R(a_n tau)` with `a_n = d_{n+1} - 1`.
    AgeTimesTau,
}

/// Travel times `t_n` for `n = 0..=horizon` under `variant`.
pub fn immigration_times(discipline: &Discipline, tau: f64, horizon: usize, variant: ImmigrationVariant) -> Vec<f64> {
    (0..=horizon)
        .map(|n| match (n, variant) {
            (0, _) => 0.0,
            (_, ImmigrationVariant::DisciplineTimesTau) => discipline.d(n).min(n) as f64 * tau,
            (_, ImmigrationVariant::AgeTimesTau) => discipline.d(n + 1).saturating_sub(1) as f64 * tau,
        })
        .collect()
}

/// The bus through its branching representation: boardings at station `n`
/// are the newborns `Z_n(0)` of the aging process with maximal ages
/// `a_n = d_{n+1} - 1`, `R(1)` offspring and immigration per `variant`.
pub fn simulate_bus_branching<R: Rng + ?Sized>(
    params: QueueParams,
    discipline: &Discipline,
    n_stations: usize,
    variant: ImmigrationVariant,
    rng: &mut R,
) -> Result<BusTrajectory> {
    discipline.validate(n_stations)?;
    let profile = discipline.age_profile(n_stations);
    let model = BranchingModel::new(profile.clone(), params.alpha())?;
    let immigration = ImmigrationSpec::BusyPeriod {
        times: immigration_times(discipline, params.tau(), n_stations, variant),
    };
    let mut traj = BusTrajectory::start(params.tau());
    let mut state = PopulationState::empty(0, &profile);
    for _ in 0..n_stations {
        state = model.step(&state, &immigration, rng).map_err(|e| match e {
            Error::PopulationOverflow { generation, cap } => Error::BusyPeriodOverflow {
                station: generation,
                cap,
            },
            other => other,
        })?;
        traj.push(state.newborns());
    }
    Ok(traj)
}

/// `P_t = inf{i : H_i >= t}`.
pub fn position_at(traj: &BusTrajectory, t: f64) -> Result<usize> {
    if t > traj.last_departure() {
        return Err(Error::HorizonExceeded {
            horizon: traj.stations(),
        });
    }
    Ok(traj.departures.partition_point(|&h| h < t))
}

/// How a two-bus run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeStatus {
    Merged,
    /// Reached the station horizon apart.
    Horizon,
    /// Stopped early by the separation rule.
    Separated,
    /// A boarding count or a departure time left the representable range.
    Overflow,
}

/// Early stop for runs whose buses have drifted apart for good.
///
/// Applies at a station where the follower's eligibility window no longer
/// reaches back to the leader's departure (the two buses draw on disjoint
/// arrivals), the follower boarded at least `min_boardings` customers, and
/// the follower is behind by at least `min_relative_gap` of its own time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationRule {
    pub min_boardings: u64,
    pub min_relative_gap: f64,
}

impl Default for SeparationRule {
    fn default() -> Self {
        Self {
            min_boardings: 1_000_000_000,
            min_relative_gap: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBusConfig {
    /// Delay of the second bus at station 0.
    pub mu: f64,
    pub horizon: usize,
    /// Largest boarding count per station before the run is an overflow.
    #[serde(default = "default_two_bus_cap")]
    pub cap: u64,
    #[serde(default)]
    pub separation: Option<SeparationRule>,
}

fn default_two_bus_cap() -> u64 {
    1_000_000_000_000
}

/// Departure times at or beyond this lose unit resolution.
const TIME_LIMIT: f64 = 1e15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoBusRun {
    pub status: MergeStatus,
    pub merge_station: Option<usize>,
    /// Time at which the follower reaches the merge station.
    pub merge_time: Option<f64>,
    pub leader: BusTrajectory,
    /// Up to the last station left before the run stopped.
    pub follower: BusTrajectory,
}

impl TwoBusRun {
    pub fn merged(&self) -> bool {
        self.status == MergeStatus::Merged
    }

    /// CSV columns `station, H1_i, H2_i, boardings1, boardings2, gap`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["station", "H1_i", "H2_i", "boardings1", "boardings2", "gap"])?;
        for i in 0..=self.follower.stations() {
            let (h1, h2) = (self.leader.departures[i], self.follower.departures[i]);
            w.write_record([
                i.to_string(),
                h1.to_string(),
                h2.to_string(),
                self.leader.boardings[i].to_string(),
                self.follower.boardings[i].to_string(),
                (h2 - h1).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Two buses with the same discipline, the second leaving station 0 at
/// `mu`. Stops at the merge station `N = inf{n : H1_n >= H2_n}`.
///
/// Arrivals are handled in aggregate, which is exact in law. The leader
/// boards the busy period started by the Poisson arrivals of its window.
/// Its queue is empty when it leaves, so the follower's window at station
/// `i` is `(max(H1_i, cutoff2_i), H2_{i-1} + tau]`; Poisson arrivals in it
/// are independent of everything the leader saw. If the follower reaches
/// station `i` by `H1_i`, it leaves with the leader and the buses merge.
pub fn simulate_two_buses<R: Rng + ?Sized>(
    params: QueueParams,
    discipline: &Discipline,
    config: &TwoBusConfig,
    rng: &mut R,
) -> Result<TwoBusRun> {
    if !(config.mu.is_finite() && config.mu > 0.0) {
        return Err(crate::error::invalid("mu", "must be finite and > 0"));
    }
    discipline.validate(config.horizon)?;
    let tau = params.tau();
    let busy = BusyPeriod::new(params.alpha())?.with_cap(config.cap);
    let mut leader = BusTrajectory::start(tau);
    let mut follower = BusTrajectory {
        tau,
        departures: vec![config.mu],
        boardings: vec![0],
    };
    let finish = |status, station: Option<(usize, f64)>, leader, follower| TwoBusRun {
        status,
        merge_station: station.map(|s| s.0),
        merge_time: station.map(|s| s.1),
        leader,
        follower,
    };
    for i in 1..=config.horizon {
        let d = discipline.d(i);
        let s1 = leader.departures[i - 1] + tau;
        let b1 = match busy.sample_after(s1 - leader.cutoff(i, d), rng) {
            Ok(b) => b,
            Err(_) => return Ok(finish(MergeStatus::Overflow, None, leader, follower)),
        };
        leader.push(b1);
        let h1 = leader.departures[i];

        let s2 = follower.departures[i - 1] + tau;
        if s2 <= h1 {
            return Ok(finish(MergeStatus::Merged, Some((i, s2)), leader, follower));
        }
        let own_cutoff = follower.cutoff(i, d).max(config.mu);
        let window_start = own_cutoff.max(h1);
        let b2 = match busy.sample_after(s2 - window_start, rng) {
            Ok(b) => b,
            Err(_) => return Ok(finish(MergeStatus::Overflow, None, leader, follower)),
        };
        follower.push(b2);
        if follower.last_departure() >= TIME_LIMIT {
            return Ok(finish(MergeStatus::Overflow, None, leader, follower));
        }
        if let Some(rule) = config.separation {
            if own_cutoff >= h1 && b2 >= rule.min_boardings && (s2 - h1) >= rule.min_relative_gap * s2 {
                return Ok(finish(MergeStatus::Separated, None, leader, follower));
            }
        }
    }
    Ok(finish(MergeStatus::Horizon, None, leader, follower))
}

/// Merge summary of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeSummary {
    pub merged: bool,
    pub status: MergeStatus,
    pub station: Option<usize>,
    pub time: Option<f64>,
    pub seed: u64,
}

impl MergeSummary {
    pub fn of(run: &TwoBusRun, seed: u64) -> Self {
        Self {
            merged: run.merged(),
            status: run.status,
            station: run.merge_station,
            time: run.merge_time,
            seed,
        }
    }
}
