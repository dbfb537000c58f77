//! Synthetic scenarios with planted program delays and known ground truth,
//! plus a reference first-come-first-served queue used to check the
//! queueing module.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flightdata::{
    write_advisories, write_flights, write_quarters, ActualTimes, AdvisoryEvent, AdvisoryKind, AirportCode, Cause,
    Epoch, FlightRecord, IngestError, ParSchedule, QuarterHourRecord, QuarterIndex, Scope, TimePoint,
    DEFAULT_TAXI_IN_MIN, QUARTER_MINUTES,
};
use crate::lifecycle::{assemble_programs, GdpProgram};
use crate::pipeline::measure::{measure_inputs, CapacityData, FlightIndex, DRAIN_MARGIN_QUARTERS};
use crate::queueing::SLOT_SCALE;

const DAY_MINUTES: i64 = 24 * 60;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("generated advisories failed to assemble: {0}")]
    Lifecycle(#[from] crate::lifecycle::LifecycleError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("reference queue did not drain for program {0}")]
    NonDraining(String),
}

// ---------------------------------------------------------------------------
// Reference queue

/// One flight's landing in the reference queue.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleServed {
    pub flight_id: String,
    pub planned: TimePoint,
    pub served: TimePoint,
}

/// Landings offered in each quarter: the whole-slot increments of the running
/// total of rates. Infinite rates offer unlimited landings.
fn offered(rates: &[f64], default_rate: f64, k: usize, running: &mut i128) -> u64 {
    let rate = rates.get(k).copied().unwrap_or(default_rate);
    if rate.is_infinite() {
        return u64::MAX;
    }
    let before = running.div_euclid(SLOT_SCALE as i128);
    *running += (rate * SLOT_SCALE as f64).round() as i128;
    (running.div_euclid(SLOT_SCALE as i128) - before) as u64
}

/// First-come-first-served single queue. Flights are taken in order of
/// planned time (ties by id) and each lands at the earliest instant, no
/// earlier than planned, in a quarter that still has an unused landing.
/// `rates[k]` is the rate of quarter `first + k`; later quarters use
/// `default_rate`. Output follows the service order. Returns `None` when the
/// queue cannot drain.
pub fn oracle_queue(
    planned: &[(String, TimePoint)],
    first: QuarterIndex,
    rates: &[f64],
    default_rate: f64,
) -> Option<Vec<OracleServed>> {
    let mut order: Vec<&(String, TimePoint)> = planned.iter().collect();
    order.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut out = Vec::with_capacity(order.len());
    let mut next = 0;
    let mut running: i128 = 0;
    let mut k = 0usize;
    let mut idle_tail = 0;
    while next < order.len() {
        let q = QuarterIndex(first.0 + k as i64);
        let mut free = offered(rates, default_rate, k, &mut running);
        if k >= rates.len() && free == 0 {
            idle_tail += 1;
            if idle_tail > 4 * 96 * 365 {
                return None;
            }
        }
        while free > 0 && next < order.len() && order[next].1.quarter() <= q {
            let (id, t) = order[next];
            out.push(OracleServed { flight_id: id.clone(), planned: *t, served: (*t).max(q.start()) });
            free -= 1;
            next += 1;
        }
        k += 1;
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// Ration by schedule

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RbsSlot {
    /// Controlled time of arrival.
    pub cta: TimePoint,
    /// Controlled time of departure, the EDCT wheels-off.
    pub ctd: TimePoint,
}

/// Arrival slots opened by a rate schedule from `start`, spaced
/// 15 / rate minutes apart at the rate of the quarter each slot falls in.
struct SlotClock<'a> {
    par: &'a ParSchedule,
}

impl SlotClock<'_> {
    fn rate(&self, t: f64) -> f64 {
        let q = QuarterIndex((t / QUARTER_MINUTES as f64).floor() as i64);
        self.par.rate_at(q).unwrap_or(0.0)
    }

    /// Moves `t` forward to the first quarter with a positive rate.
    fn settle(&self, mut t: f64) -> f64 {
        for _ in 0..4 * 96 * 365 {
            if self.rate(t) > 0.0 {
                return t;
            }
            t = ((t / QUARTER_MINUTES as f64).floor() + 1.0) * QUARTER_MINUTES as f64;
        }
        f64::INFINITY
    }

    fn next_after(&self, slot: f64) -> f64 {
        self.settle(slot + QUARTER_MINUTES as f64 / self.rate(slot))
    }
}

/// Assigns arrival slots to flights already sorted by SRTA. Each flight
/// takes the earliest unused slot whose interval has not closed before its
/// SRTA; CTA = max(SRTA, slot time) rounded up to the minute and
/// CTD = CTA - ETE. Past the last breakpoint the final rate continues.
pub fn rbs_assign(flights: &[(TimePoint, i64)], par: &ParSchedule, start: TimePoint) -> Vec<RbsSlot> {
    let clock = SlotClock { par };
    let mut slot = clock.settle(start.0 as f64);
    let mut slot_end = clock.next_after(slot);
    let mut out = Vec::with_capacity(flights.len());
    for &(srta, ete) in flights {
        while slot_end <= srta.0 as f64 {
            slot = slot_end;
            slot_end = clock.next_after(slot);
        }
        let cta = TimePoint(slot.max(srta.0 as f64).ceil() as i64);
        out.push(RbsSlot { cta, ctd: cta - ete });
        slot = slot_end;
        slot_end = clock.next_after(slot);
    }
    out
}

// ---------------------------------------------------------------------------
// Scenario configuration

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: i64,
    pub max: i64,
}

impl IntRange {
    fn sample(&self, rng: &mut impl Rng) -> i64 {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealRange {
    pub min: f64,
    pub max: f64,
}

impl RealRange {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..self.max)
        } else {
            self.min
        }
    }
}

/// Normal deviation truncated to `[min, max]`, in minutes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl TruncatedNormal {
    fn sample(&self, rng: &mut impl Rng) -> i64 {
        if self.sd <= 0.0 {
            return self.mean.clamp(self.min, self.max).round() as i64;
        }
        let normal = Normal::new(self.mean, self.sd).expect("positive sd");
        for _ in 0..64 {
            let x = normal.sample(rng);
            if (self.min..=self.max).contains(&x) {
                return x.round() as i64;
            }
        }
        self.mean.clamp(self.min, self.max).round() as i64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AirportConfig {
    pub code: AirportCode,
    /// Acceptance rate outside programs, flights per quarter hour.
    pub nominal_rate: f64,
    pub flights_per_day: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdpConfig {
    /// Chance that an airport-day has a program.
    pub probability: f64,
    /// Hour of day (UTC) the program may start in.
    pub start_hour: IntRange,
    pub duration_quarters: IntRange,
    /// Minutes from release to start.
    pub release_lead_min: IntRange,
    /// Program rate as a fraction of the day's mean scheduled demand per quarter.
    pub par_factor: RealRange,
    /// Chance the released rate schedule has a second step.
    pub par_step_probability: f64,
    pub revision_probability: f64,
    pub max_revisions: u32,
    pub extension_quarters: IntRange,
    pub cancel_probability: f64,
    /// Share of US origins put in scope.
    pub scope_us_fraction: f64,
    /// Share of Canadian origins put in scope.
    pub scope_ca_fraction: f64,
    /// Recorded acceptance rate equals the program rate while a program runs.
    pub capacity_follows_par: bool,
    /// Relative weights of wind, snow/ice, low ceiling, thunderstorms, runway construction.
    pub cause_weights: [f64; 5],
}

impl Default for GdpConfig {
    fn default() -> Self {
        GdpConfig {
            probability: 0.33,
            start_hour: IntRange { min: 9, max: 17 },
            duration_quarters: IntRange { min: 16, max: 40 },
            release_lead_min: IntRange { min: 20, max: 150 },
            par_factor: RealRange { min: 0.55, max: 0.9 },
            par_step_probability: 0.3,
            revision_probability: 0.5,
            max_revisions: 2,
            extension_quarters: IntRange { min: 1, max: 8 },
            cancel_probability: 0.25,
            scope_us_fraction: 0.7,
            scope_ca_fraction: 0.5,
            capacity_follows_par: true,
            cause_weights: [0.35, 0.1, 0.3, 0.2, 0.05],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Gate-out deviation of controlled flights from their EDCT gate-out.
    pub controlled_gate_out: TruncatedNormal,
    /// Gate-out deviation of other flights from their flight-plan gate-out.
    pub other_gate_out: TruncatedNormal,
    /// Taxi-out beyond the unimpeded time.
    pub taxi_out: TruncatedNormal,
    /// Airborne time beyond the flight-plan ETE.
    pub enroute: TruncatedNormal,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            enabled: false,
            controlled_gate_out: TruncatedNormal { mean: 2.0, sd: 6.0, min: -10.0, max: 30.0 },
            other_gate_out: TruncatedNormal { mean: 8.0, sd: 12.0, min: -15.0, max: 60.0 },
            taxi_out: TruncatedNormal { mean: 4.0, sd: 5.0, min: 0.0, max: 30.0 },
            enroute: TruncatedNormal { mean: -3.0, sd: 6.0, min: -20.0, max: 20.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub epoch: Epoch,
    pub days: u32,
    pub airports: Vec<AirportConfig>,
    pub us_origins: Vec<AirportCode>,
    pub ca_origins: Vec<AirportCode>,
    /// Share of flights departing from Canadian origins.
    pub ca_origin_share: f64,
    /// Scheduled runway arrivals fall in `[first, last)` hours of each day.
    pub first_arrival_hour: i64,
    pub last_arrival_hour: i64,
    pub ete_min: IntRange,
    pub unimpeded_taxi_out_min: IntRange,
    pub gdp: GdpConfig,
    pub noise: NoiseConfig,
}

fn codes(list: &[&str]) -> Vec<AirportCode> {
    list.iter().map(|c| c.parse().expect("static airport code")).collect()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let airport = |code: &str, nominal_rate: f64, flights_per_day: u32| AirportConfig {
            code: code.parse().expect("static airport code"),
            nominal_rate,
            flights_per_day,
        };
        ScenarioConfig {
            seed: 7,
            epoch: Epoch::default(),
            days: 30,
            airports: vec![
                airport("EWR", 10.0, 270),
                airport("BOS", 10.0, 260),
                airport("JFK", 11.0, 290),
                airport("LGA", 10.0, 270),
                airport("ORD", 12.0, 300),
                airport("PHL", 10.0, 250),
                airport("SEA", 10.0, 260),
                airport("SFO", 10.0, 280),
                airport("ATL", 12.0, 300),
                airport("DEN", 12.0, 280),
            ],
            us_origins: codes(&[
                "ATL", "AUS", "BNA", "BOS", "BWI", "CLE", "CLT", "CMH", "CVG", "DCA", "DEN", "DFW", "DTW", "EWR",
                "FLL", "HOU", "IAD", "IAH", "IND", "JFK", "LAS", "LAX", "LGA", "MCI", "MCO", "MDW", "MIA", "MSP",
                "MSY", "ORD", "PDX", "PHL", "PHX", "PIT", "RDU", "SAN", "SEA", "SFO", "SLC", "STL", "TPA",
            ]),
            ca_origins: codes(&["CYYZ", "CYUL", "CYVR", "CYYC", "CYOW", "CYEG"]),
            ca_origin_share: 0.08,
            first_arrival_hour: 7,
            last_arrival_hour: 22,
            ete_min: IntRange { min: 45, max: 330 },
            unimpeded_taxi_out_min: IntRange { min: 8, max: 25 },
            gdp: GdpConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::Config(msg));
        let g = &self.gdp;
        if self.days == 0 {
            return bad("days must be positive".into());
        }
        if self.airports.is_empty() {
            return bad("at least one airport is required".into());
        }
        let mut seen = BTreeSet::new();
        for a in &self.airports {
            if !seen.insert(a.code) {
                return bad(format!("airport {} listed twice", a.code));
            }
            if !(a.nominal_rate.is_finite() && a.nominal_rate > 0.0) {
                return bad(format!("airport {} needs a positive nominal rate", a.code));
            }
        }
        if self.us_origins.is_empty() && self.ca_origins.is_empty() {
            return bad("no origin airports".into());
        }
        if !(0.0..=1.0).contains(&self.ca_origin_share)
            || (self.ca_origins.is_empty() && self.ca_origin_share > 0.0)
            || (self.us_origins.is_empty() && self.ca_origin_share < 1.0)
        {
            return bad("ca_origin_share is inconsistent with the origin lists".into());
        }
        if !(0 <= self.first_arrival_hour && self.first_arrival_hour < self.last_arrival_hour && self.last_arrival_hour <= 24) {
            return bad("arrival hours must satisfy 0 <= first < last <= 24".into());
        }
        let ranges = [
            ("ete_min", self.ete_min, 1),
            ("unimpeded_taxi_out_min", self.unimpeded_taxi_out_min, 0),
            ("gdp.start_hour", g.start_hour, 0),
            ("gdp.duration_quarters", g.duration_quarters, 1),
            ("gdp.release_lead_min", g.release_lead_min, 0),
            ("gdp.extension_quarters", g.extension_quarters, 0),
        ];
        for (name, r, floor) in ranges {
            if r.min < floor || r.min > r.max {
                return bad(format!("{name} must satisfy {floor} <= min <= max"));
            }
        }
        if g.start_hour.max > 23 {
            return bad("gdp.start_hour must lie within the day".into());
        }
        // Earliest plan gate-out of the first day must not precede the epoch,
        // even with the widest early gate-out deviation.
        let early = if self.noise.enabled {
            self.noise.controlled_gate_out.min.min(self.noise.other_gate_out.min).min(0.0)
        } else {
            0.0
        };
        if (self.first_arrival_hour * 60 - self.ete_min.max - self.unimpeded_taxi_out_min.max) as f64 + early < 0.0 {
            return bad("first arrivals would leave the gate before the epoch".into());
        }
        if (g.start_hour.min * 60 - g.release_lead_min.max) < 0 {
            return bad("release lead time reaches before midnight".into());
        }
        if !(g.par_factor.min > 0.0 && g.par_factor.min <= g.par_factor.max) {
            return bad("gdp.par_factor must be positive".into());
        }
        for (name, p) in [
            ("gdp.probability", g.probability),
            ("gdp.par_step_probability", g.par_step_probability),
            ("gdp.revision_probability", g.revision_probability),
            ("gdp.cancel_probability", g.cancel_probability),
            ("gdp.scope_us_fraction", g.scope_us_fraction),
            ("gdp.scope_ca_fraction", g.scope_ca_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if g.cause_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || g.cause_weights.iter().sum::<f64>() <= 0.0 {
            return bad("gdp.cause_weights must be non-negative with a positive sum".into());
        }
        if self.noise.enabled {
            let n = &self.noise;
            for (name, d) in [
                ("controlled_gate_out", n.controlled_gate_out),
                ("other_gate_out", n.other_gate_out),
                ("taxi_out", n.taxi_out),
                ("enroute", n.enroute),
            ] {
                if !(d.min <= d.max && d.sd >= 0.0) {
                    return bad(format!("noise.{name} needs min <= max and sd >= 0"));
                }
            }
            if n.taxi_out.min < 0.0 {
                return bad("noise.taxi_out may not shorten taxi below the unimpeded time".into());
            }
            if self.ete_min.min as f64 + n.enroute.min < 1.0 {
                return bad("noise.enroute could make airborne time non-positive".into());
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Ground truth

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthFlight {
    pub flight_id: String,
    pub gdp_key: String,
    pub planted_delay_min: i64,
    /// Actual wheels-on less the planted delay, minutes from the epoch.
    pub counterfactual_demand_min: i64,
    /// Landing time in the reference queue, minutes from the epoch.
    pub counterfactual_wheels_on_min: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthProgram {
    pub gdp_key: String,
    pub airport: AirportCode,
    pub rf_count: usize,
    pub planted_delay_total_min: i64,
    pub excess_delay_min: i64,
    pub excess_per_rf_min: Option<f64>,
    pub airborne_increase_min: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub seed: u64,
    pub programs: Vec<TruthProgram>,
    pub flights: Vec<TruthFlight>,
}

impl GroundTruth {
    pub fn program(&self, gdp_key: &str) -> Option<&TruthProgram> {
        self.programs.iter().find(|p| p.gdp_key == gdp_key)
    }
}

pub struct Scenario {
    pub flights: Vec<FlightRecord>,
    pub quarters: Vec<QuarterHourRecord>,
    pub advisories: Vec<AdvisoryEvent>,
    pub truth: GroundTruth,
}

impl Scenario {
    /// Writes flights.csv, quarters.csv, advisories.csv and ground_truth.json.
    pub fn write_to(&self, dir: &Path, epoch: &Epoch) -> Result<(), SynthError> {
        fs::create_dir_all(dir)?;
        let file = |name: &str| -> Result<BufWriter<fs::File>, SynthError> {
            Ok(BufWriter::with_capacity(1 << 20, fs::File::create(dir.join(name))?))
        };
        write_flights(file("flights.csv")?, &self.flights, epoch)?;
        write_quarters(file("quarters.csv")?, &self.quarters, epoch)?;
        write_advisories(file("advisories.csv")?, &self.advisories, epoch)?;
        let mut out = file("ground_truth.json")?;
        serde_json::to_writer_pretty(&mut out, &self.truth).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Generator

/// A program as drawn, before it is written out as advisories.
struct DrawnProgram {
    key: String,
    airport: AirportCode,
    release: TimePoint,
    start: TimePoint,
    end: TimePoint,
    initial_par: ParSchedule,
    revisions: Vec<(TimePoint, TimePoint, ParSchedule)>,
    cancel: Option<TimePoint>,
    scope: Scope,
    cause: Cause,
}

impl DrawnProgram {
    fn final_end(&self) -> TimePoint {
        self.revisions.last().map_or(self.end, |r| r.1)
    }

    fn final_par(&self) -> ParSchedule {
        self.revisions.iter().fold(self.initial_par.clone(), |acc, r| acc.overlay(&r.2))
    }

    fn effective_end(&self) -> TimePoint {
        self.cancel.map_or(self.final_end(), |c| c.min(self.final_end()))
    }

    fn advisories(&self) -> Vec<AdvisoryEvent> {
        let event = |kind, adl_time| AdvisoryEvent {
            gdp_key: self.key.clone(),
            airport: self.airport,
            kind,
            adl_time,
            start: None,
            end: None,
            par: None,
            scope: None,
            cause: None,
        };
        let mut out = vec![AdvisoryEvent {
            start: Some(self.start),
            end: Some(self.end),
            par: Some(self.initial_par.clone()),
            scope: Some(self.scope.clone()),
            cause: Some(self.cause),
            ..event(AdvisoryKind::Release, self.release)
        }];
        for (adl, end, par) in &self.revisions {
            out.push(AdvisoryEvent { end: Some(*end), par: Some(par.clone()), ..event(AdvisoryKind::Revision, *adl) });
        }
        if let Some(c) = self.cancel {
            out.push(event(AdvisoryKind::Cancel, c));
        }
        out
    }
}

fn pick_subset(rng: &mut impl Rng, pool: &[AirportCode], fraction: f64) -> BTreeSet<AirportCode> {
    let mut set: BTreeSet<AirportCode> = pool.iter().filter(|_| rng.random_bool(fraction)).copied().collect();
    if set.is_empty() && fraction > 0.0 {
        if let Some(c) = pool.choose(rng) {
            set.insert(*c);
        }
    }
    set
}

fn pick_cause(rng: &mut impl Rng, weights: &[f64; 5]) -> Cause {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (w, c) in weights.iter().zip(Cause::ALL) {
        if x < *w {
            return c;
        }
        x -= w;
    }
    Cause::ALL[weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)]
}

fn draw_program(
    rng: &mut impl Rng,
    cfg: &ScenarioConfig,
    airport: &AirportConfig,
    day: i64,
    key: String,
) -> DrawnProgram {
    let g = &cfg.gdp;
    let day_start = day * DAY_MINUTES;
    let day_end = TimePoint(day_start + DAY_MINUTES);
    let start_q = rng.random_range(g.start_hour.min * 4..=g.start_hour.max * 4 + 3);
    let start = TimePoint(day_start + start_q * QUARTER_MINUTES);
    let end = (start + g.duration_quarters.sample(rng) * QUARTER_MINUTES).min(day_end);
    let release = start - g.release_lead_min.sample(rng);

    let window_quarters = ((cfg.last_arrival_hour - cfg.first_arrival_hour) * 4) as f64;
    let demand = airport.flights_per_day as f64 / window_quarters;
    let base = (demand * g.par_factor.sample(rng)).round().max(1.0);
    let mut breakpoints = vec![(start.quarter(), base)];
    let quarters = (end - start) / QUARTER_MINUTES;
    if quarters >= 2 && rng.random_bool(g.par_step_probability) {
        let at = QuarterIndex(start.quarter().0 + rng.random_range(1..quarters));
        breakpoints.push((at, (base + if rng.random_bool(0.5) { 1.0 } else { -1.0 }).max(1.0)));
    }
    let initial_par = ParSchedule::new(breakpoints).expect("increasing positive breakpoints");

    let mut revisions = Vec::new();
    let mut last_adl = release;
    let mut current_end = end;
    for _ in 0..g.max_revisions {
        if !rng.random_bool(g.revision_probability) {
            break;
        }
        let latest = current_end - QUARTER_MINUTES * 2;
        if latest <= last_adl + 1 {
            break;
        }
        let adl = TimePoint(rng.random_range(last_adl.0 + 1..latest.0));
        let new_end = (current_end + g.extension_quarters.sample(rng) * QUARTER_MINUTES).min(day_end);
        let from = crate::flightdata::quarter_ceil(adl).max(start.quarter());
        let rate = (base + rng.random_range(-1i32..=1) as f64).max(1.0);
        revisions.push((adl, new_end, ParSchedule::constant(from, rate)));
        last_adl = adl;
        current_end = new_end;
    }

    let mut cancel = None;
    if rng.random_bool(g.cancel_probability) {
        let lo = (start + 60).max(last_adl + 1);
        let hi = current_end - QUARTER_MINUTES;
        if lo < hi {
            cancel = Some(TimePoint(rng.random_range(lo.0..hi.0)));
        }
    }

    let scope = Scope {
        us: pick_subset(rng, &cfg.us_origins, g.scope_us_fraction),
        ca: pick_subset(rng, &cfg.ca_origins, g.scope_ca_fraction),
    };
    DrawnProgram {
        key,
        airport: airport.code,
        release,
        start,
        end,
        initial_par,
        revisions,
        cancel,
        scope,
        cause: pick_cause(rng, &g.cause_weights),
    }
}

/// Planned part of a flight before actual times are drawn.
struct Planned {
    flight: FlightRecord,
    /// Departure the flight would make without noise.
    departure: TimePoint,
    controlled: bool,
    delay: Option<(String, i64)>,
}

fn draw_day_flights(
    rng: &mut impl Rng,
    cfg: &ScenarioConfig,
    airport: &AirportConfig,
    day: i64,
) -> Vec<Planned> {
    let day_start = day * DAY_MINUTES;
    let lo = day_start + cfg.first_arrival_hour * 60;
    let hi = day_start + cfg.last_arrival_hour * 60;
    let mut srtas: Vec<(i64, AirportCode, i64, i64)> = (0..airport.flights_per_day)
        .map(|_| {
            let srta = rng.random_range(lo..hi);
            let ca = !cfg.ca_origins.is_empty() && rng.random_bool(cfg.ca_origin_share);
            let pool = if ca { &cfg.ca_origins } else { &cfg.us_origins };
            let origin = *pool.choose(rng).expect("non-empty origin pool");
            (srta, origin, cfg.ete_min.sample(rng), cfg.unimpeded_taxi_out_min.sample(rng))
        })
        .collect();
    srtas.sort_by_key(|s| s.0);
    srtas
        .into_iter()
        .enumerate()
        .map(|(i, (srta, origin, ete, taxi))| {
            let srta = TimePoint(srta);
            let fp_off = srta - ete;
            Planned {
                flight: FlightRecord {
                    flight_id: format!("{}{:04}{:04}", airport.code, day, i),
                    origin,
                    dest: airport.code,
                    sched_gate_arr: srta + DEFAULT_TAXI_IN_MIN,
                    fp_gate_out: fp_off - taxi,
                    fp_wheels_off: fp_off,
                    ete_min: ete,
                    unimpeded_taxi_out_min: taxi,
                    edct_wheels_off: None,
                    actual: None,
                    cancelled: false,
                },
                departure: fp_off,
                controlled: false,
                delay: None,
            }
        })
        .collect()
}

/// Runs ration by schedule for a program over one airport-day of flights and
/// records the delay each controlled flight executes.
fn control_flights(day: &mut [Planned], p: &DrawnProgram) {
    let end = p.final_end();
    let par = p.final_par();
    let mut controlled: Vec<usize> = Vec::new();
    for (i, pl) in day.iter().enumerate() {
        let f = &pl.flight;
        let srta = f.srta(DEFAULT_TAXI_IN_MIN);
        if p.start <= srta && srta < end && p.scope.contains(&f.origin) && f.fp_wheels_off > p.release {
            controlled.push(i);
        }
    }
    let demand: Vec<(TimePoint, i64)> =
        controlled.iter().map(|&i| (day[i].flight.srta(DEFAULT_TAXI_IN_MIN), day[i].flight.ete_min)).collect();
    let slots = rbs_assign(&demand, &par, p.start);
    let effective_end = p.effective_end();
    for (&i, slot) in controlled.iter().zip(slots) {
        let pl = &mut day[i];
        let fp_off = pl.flight.fp_wheels_off;
        let srta = pl.flight.srta(DEFAULT_TAXI_IN_MIN);
        let departure = match p.cancel {
            Some(c) if fp_off >= c => continue,
            Some(c) if srta >= effective_end => slot.ctd.min(c),
            _ => slot.ctd,
        };
        pl.flight.edct_wheels_off = Some(slot.ctd);
        pl.departure = departure;
        pl.controlled = true;
        pl.delay = Some((p.key.clone(), departure - fp_off));
    }
}

fn fly(rng: &mut impl Rng, noise: &NoiseConfig, pl: &Planned) -> ActualTimes {
    let f = &pl.flight;
    let taxi = f.unimpeded_taxi_out_min;
    let (gate_out, taxi_out, airborne) = if noise.enabled {
        let go = if pl.controlled { noise.controlled_gate_out } else { noise.other_gate_out };
        (pl.departure - taxi + go.sample(rng), taxi + noise.taxi_out.sample(rng), f.ete_min + noise.enroute.sample(rng))
    } else {
        (pl.departure - taxi, taxi, f.ete_min)
    };
    let wheels_off = gate_out + taxi_out;
    let wheels_on = wheels_off + airborne;
    ActualTimes { gate_out, wheels_off, wheels_on, gate_in: wheels_on + DEFAULT_TAXI_IN_MIN }
}

/// Draws a complete scenario. The seed fully determines the output.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut flights = Vec::new();
    let mut planted: Vec<Option<(String, i64)>> = Vec::new();
    let mut drawn: Vec<DrawnProgram> = Vec::new();
    let mut rates: HashMap<AirportCode, Vec<f64>> =
        cfg.airports.iter().map(|a| (a.code, vec![a.nominal_rate; cfg.days as usize * 96])).collect();

    for day in 0..cfg.days as i64 {
        for airport in &cfg.airports {
            let mut day_flights = draw_day_flights(&mut rng, cfg, airport, day);
            if rng.random_bool(cfg.gdp.probability) {
                let date = cfg.epoch.date() + chrono::Days::new(day as u64);
                let key = format!("{}_{}", airport.code, date.format("%Y%m%d"));
                let p = draw_program(&mut rng, cfg, airport, day, key);
                control_flights(&mut day_flights, &p);
                if cfg.gdp.capacity_follows_par {
                    let par = p.final_par();
                    let series = rates.get_mut(&airport.code).expect("configured airport");
                    let eff = crate::flightdata::quarter_ceil(p.effective_end()).0;
                    for q in p.start.quarter().0..eff.min(series.len() as i64) {
                        series[q as usize] = par.rate_at(QuarterIndex(q)).expect("covers window");
                    }
                }
                drawn.push(p);
            }
            for pl in day_flights {
                let mut f = pl.flight.clone();
                f.actual = Some(fly(&mut rng, &cfg.noise, &pl));
                flights.push(f);
                planted.push(pl.delay);
            }
        }
    }

    let mut quarters = Vec::with_capacity(cfg.airports.len() * cfg.days as usize * 96);
    for airport in &cfg.airports {
        for (q, rate) in rates[&airport.code].iter().enumerate() {
            quarters.push(QuarterHourRecord { airport: airport.code, quarter: QuarterIndex(q as i64), arr_rate: *rate });
        }
    }
    let advisories: Vec<AdvisoryEvent> = drawn.iter().flat_map(DrawnProgram::advisories).collect();
    let programs = assemble_programs(&advisories)?;
    let truth = ground_truth(cfg.seed, &programs, &flights, &planted, &quarters)?;
    Ok(Scenario { flights, quarters, advisories, truth })
}

/// Runs the reference queue on each program's planted delays.
fn ground_truth(
    seed: u64,
    programs: &[GdpProgram],
    flights: &[FlightRecord],
    planted: &[Option<(String, i64)>],
    quarters: &[QuarterHourRecord],
) -> Result<GroundTruth, SynthError> {
    let index = FlightIndex::new(flights, DEFAULT_TAXI_IN_MIN);
    let capacity = CapacityData::from_records(quarters);
    let mut by_program: HashMap<&str, Vec<(usize, i64)>> = HashMap::new();
    for (i, d) in planted.iter().enumerate() {
        if let Some((key, delay)) = d {
            by_program.entry(key.as_str()).or_default().push((i, *delay));
        }
    }
    let mut truth = GroundTruth { schema_version: 1, seed, programs: Vec::new(), flights: Vec::new() };
    for p in programs {
        let restricted = by_program.remove(p.gdp_key.as_str()).unwrap_or_default();
        let inputs = measure_inputs(p, &restricted, &index, &capacity);
        let lo = inputs.horizon.start;
        let span = inputs.horizon.end.0 - lo.0 + DRAIN_MARGIN_QUARTERS;
        let rates: Vec<f64> =
            (0..span).map(|k| inputs.capacity.lookup(QuarterIndex(lo.0 + k)).map_or(0.0, |(r, _)| r)).collect();
        let default_rate = inputs.capacity.default_rate().unwrap_or(0.0);
        let demand: Vec<(String, TimePoint)> = inputs
            .positions
            .iter()
            .zip(&inputs.flights)
            .map(|(&i, q)| (flights[i].flight_id.clone(), q.model_wheels_on))
            .collect();
        let served = oracle_queue(&demand, lo, &rates, default_rate)
            .ok_or_else(|| SynthError::NonDraining(p.gdp_key.clone()))?;
        let actual: HashMap<&str, TimePoint> = inputs
            .positions
            .iter()
            .zip(&inputs.flights)
            .map(|(&i, q)| (flights[i].flight_id.as_str(), q.actual_wheels_on))
            .collect();
        let mut excess = 0;
        let mut airborne = 0;
        for s in &served {
            excess += (actual[s.flight_id.as_str()].quarter().0 - s.served.quarter().0) * QUARTER_MINUTES;
            airborne += (s.served.quarter().0 - s.planned.quarter().0) * QUARTER_MINUTES;
        }
        let served_at: HashMap<&str, &OracleServed> = served.iter().map(|s| (s.flight_id.as_str(), s)).collect();
        for &(i, delay) in &restricted {
            let s = served_at[flights[i].flight_id.as_str()];
            truth.flights.push(TruthFlight {
                flight_id: flights[i].flight_id.clone(),
                gdp_key: p.gdp_key.clone(),
                planted_delay_min: delay,
                counterfactual_demand_min: s.planned.0,
                counterfactual_wheels_on_min: s.served.0,
            });
        }
        let rf_count = restricted.len();
        truth.programs.push(TruthProgram {
            gdp_key: p.gdp_key.clone(),
            airport: p.airport,
            rf_count,
            planted_delay_total_min: restricted.iter().map(|r| r.1).sum(),
            excess_delay_min: excess,
            excess_per_rf_min: (rf_count > 0).then(|| excess as f64 / rf_count as f64),
            airborne_increase_min: airborne,
        });
    }
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize, t: i64) -> Vec<(String, TimePoint)> {
        (0..n).map(|i| (format!("F{i}"), TimePoint(t))).collect()
    }

    #[test]
    fn oracle_uncongested_serves_at_planned() {
        let planned = vec![("a".to_string(), TimePoint(3)), ("b".into(), TimePoint(17)), ("c".into(), TimePoint(17))];
        let served = oracle_queue(&planned, QuarterIndex(0), &[], f64::INFINITY).unwrap();
        assert!(served.iter().all(|s| s.served == s.planned));
    }

    #[test]
    fn oracle_one_per_quarter() {
        let served = oracle_queue(&ids(3, 0), QuarterIndex(0), &[1.0; 3], 1.0).unwrap();
        let q: Vec<_> = served.iter().map(|s| s.served.quarter().0).collect();
        assert_eq!(q, [0, 1, 2]);
    }

    #[test]
    fn oracle_is_order_invariant() {
        let mut planned = vec![("x".to_string(), TimePoint(20)), ("a".into(), TimePoint(5)), ("m".into(), TimePoint(5))];
        let first = oracle_queue(&planned, QuarterIndex(0), &[1.0, 0.5, 2.0], 1.0).unwrap();
        planned.reverse();
        assert_eq!(oracle_queue(&planned, QuarterIndex(0), &[1.0, 0.5, 2.0], 1.0).unwrap(), first);
    }

    #[test]
    fn oracle_reports_stuck_queue() {
        assert_eq!(oracle_queue(&ids(1, 0), QuarterIndex(0), &[0.0], 0.0), None);
    }

    #[test]
    fn rbs_pushes_second_flight() {
        let par = ParSchedule::constant(QuarterIndex(0), 1.0);
        let slots = rbs_assign(&[(TimePoint(5), 60), (TimePoint(7), 60)], &par, TimePoint(0));
        assert_eq!(slots[0].cta, TimePoint(5));
        assert_eq!(slots[1].cta, TimePoint(15));
        assert_eq!(slots[1].ctd, TimePoint(-45));
    }

    #[test]
    fn rbs_no_binding_slots() {
        let par = ParSchedule::constant(QuarterIndex(0), 4.0);
        let flights: Vec<_> = (0..8).map(|i| (TimePoint(i * 5 + 1), 90)).collect();
        let slots = rbs_assign(&flights, &par, TimePoint(0));
        for (f, s) in flights.iter().zip(&slots) {
            assert_eq!(s.cta, f.0);
        }
    }

    #[test]
    fn rbs_ctd_is_cta_less_ete() {
        let par = ParSchedule::constant(QuarterIndex(60), 2.0);
        let slots = rbs_assign(&[(TimePoint(960), 90)], &par, TimePoint(900));
        assert_eq!(slots[0], RbsSlot { cta: TimePoint(960), ctd: TimePoint(870) });
    }

    #[test]
    fn rbs_honours_rate_steps() {
        let par = ParSchedule::new(vec![(QuarterIndex(0), 1.0), (QuarterIndex(1), 3.0)]).unwrap();
        let slots = rbs_assign(&ids(5, 0).iter().map(|_| (TimePoint(0), 30)).collect::<Vec<_>>(), &par, TimePoint(0));
        let ctas: Vec<_> = slots.iter().map(|s| s.cta.0).collect();
        assert_eq!(ctas, [0, 15, 20, 25, 30]);
    }

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            days: 4,
            airports: ScenarioConfig::default().airports.into_iter().take(3).collect(),
            gdp: GdpConfig { probability: 0.8, ..GdpConfig::default() },
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn scenario_is_seed_deterministic() {
        let a = generate_scenario(&small_config()).unwrap();
        let b = generate_scenario(&small_config()).unwrap();
        assert_eq!(a.flights, b.flights);
        assert_eq!(a.truth, b.truth);
        let c = generate_scenario(&ScenarioConfig { seed: 8, ..small_config() }).unwrap();
        assert_ne!(a.flights, c.flights);
    }

    #[test]
    fn scenario_records_are_valid() {
        let s = generate_scenario(&ScenarioConfig { noise: NoiseConfig { enabled: true, ..NoiseConfig::default() }, ..small_config() })
            .unwrap();
        assert!(!s.truth.programs.is_empty());
        for f in &s.flights {
            f.check_invariants().unwrap();
        }
        let mut ids = BTreeSet::new();
        assert!(s.flights.iter().all(|f| ids.insert(f.flight_id.clone())));
        for e in &s.advisories {
            e.check_invariants().unwrap();
        }
        assert!(s.truth.programs.iter().any(|p| p.rf_count > 0));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ScenarioConfig { days: 0, ..ScenarioConfig::default() };
        assert!(matches!(generate_scenario(&cfg), Err(SynthError::Config(_))));
        let cfg = ScenarioConfig { first_arrival_hour: 2, ..ScenarioConfig::default() };
        assert!(matches!(generate_scenario(&cfg), Err(SynthError::Config(_))));
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let cfg: ScenarioConfig = serde_json::from_str(r#"{"seed": 3, "days": 2}"#).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.airports.len(), 10);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"sed": 3}"#).is_err());
    }
}
