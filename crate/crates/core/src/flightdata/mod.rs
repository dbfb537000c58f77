//! Domain records for the three input datasets and their strict CSV codecs.
//!
//! All times are whole minutes from a per-run [`Epoch`]. Arrival rates are
//! stored in flights per quarter hour.

mod ingest;
mod time;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use ingest::{
    parse_advisories, parse_flights, parse_quarters, scan_advisories, scan_flights, scan_quarters,
    write_advisories, write_flights, write_quarters, IngestError, Parsed, ADVISORIES_HEADER,
    FLIGHTS_HEADER, QUARTERS_HEADER,
};
pub use time::{quarter_ceil, quarter_index, Epoch, QuarterIndex, TimePoint, QUARTER_MINUTES};

/// Taxi-in allowance subtracted from the scheduled gate arrival to get SRTA.
pub const DEFAULT_TAXI_IN_MIN: i64 = 10;

/// Three- or four-letter airport identifier stored inline.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AirportCode {
    bytes: [u8; 4],
    len: u8,
}

impl AirportCode {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.bytes[..self.len as usize]).expect("ascii")
    }
}

impl FromStr for AirportCode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let len = s.len();
        if !(2..=4).contains(&len) || !s.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit()) {
            return Err(format!("`{s}` is not a 2-4 character upper-case airport code"));
        }
        let mut bytes = [0u8; 4];
        bytes[..len].copy_from_slice(s.as_bytes());
        Ok(AirportCode { bytes, len: len as u8 })
    }
}

impl fmt::Display for AirportCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for AirportCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

impl Serialize for AirportCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AirportCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Observed gate/runway times of a flight that operated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActualTimes {
    pub gate_out: TimePoint,
    pub wheels_off: TimePoint,
    pub wheels_on: TimePoint,
    pub gate_in: TimePoint,
}

impl ActualTimes {
    pub fn taxi_out_min(&self) -> i64 {
        self.wheels_off - self.gate_out
    }

    pub fn airborne_min(&self) -> i64 {
        self.wheels_on - self.wheels_off
    }

    pub fn is_ordered(&self) -> bool {
        self.gate_out <= self.wheels_off && self.wheels_off <= self.wheels_on && self.wheels_on <= self.gate_in
    }
}

/// One arrival flight. Cancelled flights carry no actual times.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlightRecord {
    pub flight_id: String,
    pub origin: AirportCode,
    pub dest: AirportCode,
    pub sched_gate_arr: TimePoint,
    pub fp_gate_out: TimePoint,
    pub fp_wheels_off: TimePoint,
    pub ete_min: i64,
    pub unimpeded_taxi_out_min: i64,
    pub edct_wheels_off: Option<TimePoint>,
    pub actual: Option<ActualTimes>,
    pub cancelled: bool,
}

impl FlightRecord {
    /// Scheduled runway time of arrival: scheduled gate arrival less taxi-in.
    pub fn srta(&self, taxi_in_min: i64) -> TimePoint {
        self.sched_gate_arr - taxi_in_min
    }

    /// EDCT wheels-off minus flight-plan wheels-off.
    pub fn edct_delay_min(&self) -> Option<i64> {
        self.edct_wheels_off.map(|edct| edct - self.fp_wheels_off)
    }

    pub fn actual_wheels_on(&self) -> Option<TimePoint> {
        self.actual.map(|a| a.wheels_on)
    }

    pub(crate) fn check_invariants(&self) -> Result<(), String> {
        if self.ete_min <= 0 {
            return Err(format!("ete_min must be positive, got {}", self.ete_min));
        }
        if self.unimpeded_taxi_out_min < 0 {
            return Err(format!("unimpeded_taxi_out_min must be non-negative, got {}", self.unimpeded_taxi_out_min));
        }
        match (self.cancelled, &self.actual) {
            (false, None) => Err("operated flight is missing actual times".into()),
            (true, Some(_)) => Err("cancelled flight must not carry actual times".into()),
            (false, Some(a)) if !a.is_ordered() => Err(format!(
                "actual times out of order: gate_out {} wheels_off {} wheels_on {} gate_in {}",
                a.gate_out.0, a.wheels_off.0, a.wheels_on.0, a.gate_in.0
            )),
            _ => Ok(()),
        }
    }
}

/// SRTA with the default 10-minute taxi-in.
pub fn srta(flight: &FlightRecord) -> TimePoint {
    flight.srta(DEFAULT_TAXI_IN_MIN)
}

/// Observed acceptance rate of one airport in one quarter hour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarterHourRecord {
    pub airport: AirportCode,
    pub quarter: QuarterIndex,
    /// Flights per quarter hour.
    pub arr_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdvisoryKind {
    Release,
    Revision,
    Cancel,
}

impl AdvisoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdvisoryKind::Release => "release",
            AdvisoryKind::Revision => "revision",
            AdvisoryKind::Cancel => "cancel",
        }
    }
}

impl FromStr for AdvisoryKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "release" => Ok(AdvisoryKind::Release),
            "revision" => Ok(AdvisoryKind::Revision),
            "cancel" => Ok(AdvisoryKind::Cancel),
            _ => Err(format!("unknown advisory kind `{s}` (expected release|revision|cancel)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Wind,
    SnowIce,
    LowCeiling,
    Thunderstorms,
    RunwayConstruction,
}

impl Cause {
    pub const ALL: [Cause; 5] =
        [Cause::Wind, Cause::SnowIce, Cause::LowCeiling, Cause::Thunderstorms, Cause::RunwayConstruction];

    pub fn as_str(self) -> &'static str {
        match self {
            Cause::Wind => "wind",
            Cause::SnowIce => "snow_ice",
            Cause::LowCeiling => "low_ceiling",
            Cause::Thunderstorms => "thunderstorms",
            Cause::RunwayConstruction => "runway_construction",
        }
    }
}

/// Maps free-text advisory causes onto the five modelled classes.
///
/// Keys are matched after trimming and upper-casing. The canonical tokens
/// (`wind`, `snow_ice`, ...) always resolve.
#[derive(Clone, Debug)]
pub struct CauseLookup {
    table: HashMap<String, Cause>,
}

impl CauseLookup {
    pub fn empty() -> Self {
        let mut table = HashMap::new();
        for cause in Cause::ALL {
            table.insert(cause.as_str().to_ascii_uppercase(), cause);
        }
        CauseLookup { table }
    }

    pub fn insert(&mut self, raw: &str, cause: Cause) {
        self.table.insert(raw.trim().to_ascii_uppercase(), cause);
    }

    pub fn resolve(&self, raw: &str) -> Result<Cause, String> {
        self.table
            .get(&raw.trim().to_ascii_uppercase())
            .copied()
            .ok_or_else(|| format!("cause `{raw}` has no entry in the cause lookup"))
    }

    /// Reads `raw,cause` rows, where `cause` is a canonical token.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self, IngestError> {
        let mut lookup = CauseLookup::empty();
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(IngestError::from_csv)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["raw", "cause"] {
            return Err(IngestError::HeaderMismatch {
                expected: "raw,cause".into(),
                found: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        for record in rdr.records() {
            let record = record.map_err(IngestError::from_csv)?;
            let line = record.position().map_or(0, |p| p.line());
            let canonical = CauseLookup::empty();
            let cause = canonical.resolve(&record[1]).map_err(|reason| IngestError::MalformedRow {
                line,
                column: "cause".into(),
                reason,
            })?;
            lookup.insert(&record[0], cause);
        }
        Ok(lookup)
    }
}

impl Default for CauseLookup {
    fn default() -> Self {
        let mut lookup = CauseLookup::empty();
        for (raw, cause) in [
            ("WIND", Cause::Wind),
            ("WINDS", Cause::Wind),
            ("SNOW/ICE", Cause::SnowIce),
            ("SNOW", Cause::SnowIce),
            ("ICE", Cause::SnowIce),
            ("LOW CEILINGS", Cause::LowCeiling),
            ("LOW CEILING", Cause::LowCeiling),
            ("CEILINGS", Cause::LowCeiling),
            ("LOW VISIBILITY", Cause::LowCeiling),
            ("THUNDERSTORMS", Cause::Thunderstorms),
            ("THUNDERSTORM", Cause::Thunderstorms),
            ("TSTMS", Cause::Thunderstorms),
            ("RUNWAY CONSTRUCTION", Cause::RunwayConstruction),
            ("RWY CONSTRUCTION", Cause::RunwayConstruction),
            ("RUNWAY MAINTENANCE", Cause::RunwayConstruction),
            ("CONSTRUCTION", Cause::RunwayConstruction),
        ] {
            lookup.insert(raw, cause);
        }
        lookup
    }
}

/// Origin airports a program may control, split by country.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scope {
    pub us: BTreeSet<AirportCode>,
    pub ca: BTreeSet<AirportCode>,
}

impl Scope {
    pub fn contains(&self, origin: &AirportCode) -> bool {
        self.us.contains(origin) || self.ca.contains(origin)
    }

    pub fn is_empty(&self) -> bool {
        self.us.is_empty() && self.ca.is_empty()
    }
}

/// Piecewise-constant per-quarter rate: each breakpoint's rate holds until
/// the next breakpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParSchedule {
    breakpoints: Vec<(QuarterIndex, f64)>,
}

impl ParSchedule {
    /// Breakpoints must be strictly increasing with finite, non-negative rates.
    pub fn new(breakpoints: Vec<(QuarterIndex, f64)>) -> Result<Self, String> {
        if breakpoints.is_empty() {
            return Err("rate schedule is empty".into());
        }
        if breakpoints.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err("rate schedule breakpoints must be strictly increasing".into());
        }
        if let Some((q, r)) = breakpoints.iter().find(|(_, r)| !r.is_finite() || *r < 0.0) {
            return Err(format!("rate {r} at quarter {} is not a finite non-negative number", q.0));
        }
        Ok(ParSchedule { breakpoints })
    }

    pub fn constant(from: QuarterIndex, rate: f64) -> Self {
        ParSchedule::new(vec![(from, rate)]).expect("single breakpoint")
    }

    pub fn breakpoints(&self) -> &[(QuarterIndex, f64)] {
        &self.breakpoints
    }

    pub fn first_quarter(&self) -> QuarterIndex {
        self.breakpoints[0].0
    }

    /// Rate in force at `q`, or `None` before the first breakpoint.
    pub fn rate_at(&self, q: QuarterIndex) -> Option<f64> {
        let idx = self.breakpoints.partition_point(|(b, _)| *b <= q);
        (idx > 0).then(|| self.breakpoints[idx - 1].1)
    }

    /// Keeps this schedule before `other`'s first breakpoint and takes
    /// `other` from there on.
    pub fn overlay(&self, other: &ParSchedule) -> ParSchedule {
        let cut = other.first_quarter();
        let mut merged: Vec<_> = self.breakpoints.iter().copied().filter(|(q, _)| *q < cut).collect();
        merged.extend_from_slice(&other.breakpoints);
        ParSchedule { breakpoints: merged }
    }
}

/// One GDP release, revision or cancellation advisory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvisoryEvent {
    pub gdp_key: String,
    pub airport: AirportCode,
    pub kind: AdvisoryKind,
    pub adl_time: TimePoint,
    pub start: Option<TimePoint>,
    pub end: Option<TimePoint>,
    pub par: Option<ParSchedule>,
    pub scope: Option<Scope>,
    pub cause: Option<Cause>,
}

impl AdvisoryEvent {
    pub(crate) fn check_invariants(&self) -> Result<(), (&'static str, String)> {
        match self.kind {
            AdvisoryKind::Release => {
                if self.start.is_none() {
                    return Err(("start", "release advisory requires a start time".into()));
                }
                if self.end.is_none() {
                    return Err(("end", "release advisory requires an end time".into()));
                }
                if self.par.is_none() {
                    return Err(("par_schedule", "release advisory requires a rate schedule".into()));
                }
                if self.scope.is_none() {
                    return Err(("scope_us", "release advisory requires a scope".into()));
                }
                if self.cause.is_none() {
                    return Err(("cause", "release advisory requires a cause".into()));
                }
            }
            AdvisoryKind::Revision => {}
            AdvisoryKind::Cancel => {
                for (column, present) in [
                    ("start", self.start.is_some()),
                    ("end", self.end.is_some()),
                    ("par_schedule", self.par.is_some()),
                    ("scope_us", self.scope.is_some()),
                    ("cause", self.cause.is_some()),
                ] {
                    if present {
                        return Err((column, "cancel advisory carries only its ADL time".into()));
                    }
                }
            }
        }
        for (column, t) in [("start", self.start), ("end", self.end)] {
            if let Some(t) = t {
                if t.0 % QUARTER_MINUTES != 0 {
                    return Err((column, "program times must fall on a quarter-hour boundary".into()));
                }
            }
        }
        if let (Some(start), Some(end)) = (self.start, self.end) {
            if start >= end {
                return Err(("end", "program end must be after its start".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(s: &str) -> AirportCode {
        s.parse().unwrap()
    }

    #[test]
    fn srta_subtracts_taxi_in() {
        let f = FlightRecord {
            flight_id: "F1".into(),
            origin: code("ORD"),
            dest: code("EWR"),
            sched_gate_arr: TimePoint(15 * 60),
            fp_gate_out: TimePoint(0),
            fp_wheels_off: TimePoint(0),
            ete_min: 100,
            unimpeded_taxi_out_min: 10,
            edct_wheels_off: None,
            actual: None,
            cancelled: true,
        };
        assert_eq!(srta(&f), TimePoint(14 * 60 + 50));
        assert_eq!(f.srta(12), TimePoint(14 * 60 + 48));
        let early = FlightRecord { sched_gate_arr: TimePoint(10), ..f };
        assert_eq!(srta(&early), TimePoint(0));
    }

    #[test]
    fn airport_codes() {
        assert_eq!(code("CYYZ").as_str(), "CYYZ");
        assert!("ewr".parse::<AirportCode>().is_err());
        assert!("TOOLONG".parse::<AirportCode>().is_err());
    }

    #[test]
    fn par_step_semantics() {
        let par = ParSchedule::new(vec![(QuarterIndex(4), 8.0), (QuarterIndex(8), 10.0)]).unwrap();
        assert_eq!(par.rate_at(QuarterIndex(3)), None);
        assert_eq!(par.rate_at(QuarterIndex(4)), Some(8.0));
        assert_eq!(par.rate_at(QuarterIndex(7)), Some(8.0));
        assert_eq!(par.rate_at(QuarterIndex(8)), Some(10.0));
        assert_eq!(par.rate_at(QuarterIndex(100)), Some(10.0));
        let revised = par.overlay(&ParSchedule::constant(QuarterIndex(6), 12.0));
        assert_eq!(revised.breakpoints(), &[(QuarterIndex(4), 8.0), (QuarterIndex(6), 12.0)]);
        assert!(ParSchedule::new(vec![(QuarterIndex(4), 8.0), (QuarterIndex(4), 9.0)]).is_err());
    }

    #[test]
    fn cause_lookup_resolves_aliases() {
        let lookup = CauseLookup::default();
        assert_eq!(lookup.resolve("tstms"), Ok(Cause::Thunderstorms));
        assert_eq!(lookup.resolve("snow_ice"), Ok(Cause::SnowIce));
        assert!(lookup.resolve("volcanic ash").is_err());
        let custom = CauseLookup::from_csv("raw,cause\nFOG,low_ceiling\n".as_bytes()).unwrap();
        assert_eq!(custom.resolve("fog"), Ok(Cause::LowCeiling));
    }
}
