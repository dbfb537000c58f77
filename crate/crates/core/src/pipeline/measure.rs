//! Per-program measurement: which arrivals enter a program's queueing
//! diagram, over which quarters, and at what capacity.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::flightdata::{AirportCode, FlightRecord, QuarterHourRecord, QuarterIndex, TimePoint};
use crate::lifecycle::GdpProgram;
use crate::queueing::{
    build_diagram, excess_delay, CapacityProfile, ExcessDelayResult, QueuedFlight, QueueingDiagram, QueueingError,
};

const DAY_MINUTES: i64 = 24 * 60;

/// Quarters of recorded rates past the horizon made available to the drain
/// phase before the annual mean takes over.
pub const DRAIN_MARGIN_QUARTERS: i64 = 96;

/// Lookup structure over a flight table.
pub struct FlightIndex<'a> {
    flights: &'a [FlightRecord],
    by_id: HashMap<&'a str, usize>,
    by_dest_srta: HashMap<AirportCode, Vec<(TimePoint, usize)>>,
    by_dest_on: HashMap<AirportCode, Vec<(TimePoint, usize)>>,
}

impl<'a> FlightIndex<'a> {
    pub fn new(flights: &'a [FlightRecord], taxi_in_min: i64) -> Self {
        let mut by_id = HashMap::with_capacity(flights.len());
        let mut by_dest_srta: HashMap<AirportCode, Vec<(TimePoint, usize)>> = HashMap::new();
        let mut by_dest_on: HashMap<AirportCode, Vec<(TimePoint, usize)>> = HashMap::new();
        for (i, f) in flights.iter().enumerate() {
            by_id.insert(f.flight_id.as_str(), i);
            by_dest_srta.entry(f.dest).or_default().push((f.srta(taxi_in_min), i));
            if let Some(on) = f.actual_wheels_on() {
                by_dest_on.entry(f.dest).or_default().push((on, i));
            }
        }
        for list in by_dest_srta.values_mut().chain(by_dest_on.values_mut()) {
            list.sort_unstable();
        }
        FlightIndex { flights, by_id, by_dest_srta, by_dest_on }
    }

    pub fn flights(&self) -> &'a [FlightRecord] {
        self.flights
    }

    pub fn position(&self, flight_id: &str) -> Option<usize> {
        self.by_id.get(flight_id).copied()
    }

    fn window(list: Option<&Vec<(TimePoint, usize)>>, from: TimePoint, to: TimePoint) -> &[(TimePoint, usize)] {
        let Some(list) = list else { return &[] };
        let lo = list.partition_point(|(t, _)| *t < from);
        let hi = list.partition_point(|(t, _)| *t < to);
        &list[lo..hi.max(lo)]
    }

    /// Flights bound for `airport` with SRTA in `[from, to)`, by SRTA.
    pub fn arrivals_by_srta(&self, airport: &AirportCode, from: TimePoint, to: TimePoint) -> &[(TimePoint, usize)] {
        Self::window(self.by_dest_srta.get(airport), from, to)
    }

    /// Operated flights landing at `airport` in `[from, to)`, by wheels-on.
    pub fn landings(&self, airport: &AirportCode, from: TimePoint, to: TimePoint) -> &[(TimePoint, usize)] {
        Self::window(self.by_dest_on.get(airport), from, to)
    }
}

/// Recorded acceptance rates grouped by airport.
#[derive(Clone, Debug, Default)]
pub struct CapacityData {
    airports: HashMap<AirportCode, AirportRates>,
}

#[derive(Clone, Debug, Default)]
struct AirportRates {
    rates: BTreeMap<QuarterIndex, f64>,
    mean: f64,
}

impl CapacityData {
    pub fn from_records(records: &[QuarterHourRecord]) -> Self {
        let mut sums: HashMap<AirportCode, (f64, usize)> = HashMap::new();
        let mut airports: HashMap<AirportCode, AirportRates> = HashMap::new();
        for r in records {
            let s = sums.entry(r.airport).or_insert((0.0, 0));
            s.0 += r.arr_rate;
            s.1 += 1;
            airports.entry(r.airport).or_default().rates.insert(r.quarter, r.arr_rate);
        }
        for (code, (sum, n)) in sums {
            airports.get_mut(&code).expect("same keys").mean = sum / n as f64;
        }
        CapacityData { airports }
    }

    /// Mean recorded rate over every quarter on file for the airport.
    pub fn annual_mean(&self, airport: &AirportCode) -> Option<f64> {
        self.airports.get(airport).map(|a| a.mean)
    }

    pub fn rate(&self, airport: &AirportCode, q: QuarterIndex) -> Option<f64> {
        self.airports.get(airport)?.rates.get(&q).copied()
    }

    /// Recorded rates on `range` with the annual mean as fallback.
    pub fn profile(&self, airport: &AirportCode, range: Range<QuarterIndex>) -> CapacityProfile {
        match self.airports.get(airport) {
            None => CapacityProfile::default(),
            Some(a) => CapacityProfile::new(a.rates.range(range).map(|(q, r)| (*q, *r))).with_default(a.mean),
        }
    }
}

/// Everything the queue needs for one program.
#[derive(Clone, Debug)]
pub struct MeasureInputs {
    pub airport: AirportCode,
    pub horizon: Range<QuarterIndex>,
    /// Flight table positions, parallel to `flights`.
    pub positions: Vec<usize>,
    pub flights: Vec<QueuedFlight>,
    pub capacity: CapacityProfile,
    pub rf_count: usize,
}

/// Assembles the arrivals, horizon and capacity for a program.
///
/// `restricted` lists operated restricted flights as (table position, delay).
/// The horizon covers the UTC day the program starts in, the program window,
/// and every restricted flight's actual and counterfactual landing. All
/// operated arrivals landing inside it take part; only this program's delays
/// are removed. Each quarter's rate is raised to the observed landing count.
pub fn measure_inputs(
    p: &GdpProgram,
    restricted: &[(usize, i64)],
    index: &FlightIndex,
    capacity: &CapacityData,
) -> MeasureInputs {
    let flights = index.flights();
    let day_start = TimePoint(p.start.0.div_euclid(DAY_MINUTES) * DAY_MINUTES);
    let mut lo = day_start.quarter();
    let mut hi = crate::flightdata::quarter_ceil(p.planned_end).max((day_start + DAY_MINUTES).quarter());
    let mut delays = HashMap::with_capacity(restricted.len());
    for &(i, delay) in restricted {
        let on = flights[i].actual_wheels_on().expect("restricted flights passed here operated");
        lo = lo.min((on - delay).quarter());
        hi = hi.max(on.quarter().next());
        delays.insert(i, delay);
    }

    let landings = index.landings(&p.airport, lo.start(), hi.start());
    let mut positions = Vec::with_capacity(landings.len());
    let mut queued = Vec::with_capacity(landings.len());
    let mut observed: BTreeMap<QuarterIndex, u32> = BTreeMap::new();
    for &(on, i) in landings {
        let delay = delays.get(&i).copied().unwrap_or(0);
        positions.push(i);
        queued.push(QueuedFlight { actual_wheels_on: on, model_wheels_on: on - delay });
        *observed.entry(on.quarter()).or_default() += 1;
    }
    let mut cap = capacity.profile(&p.airport, lo..QuarterIndex(hi.0 + DRAIN_MARGIN_QUARTERS));
    cap.floor_at_observed(observed);
    MeasureInputs {
        airport: p.airport,
        horizon: lo..hi,
        positions,
        flights: queued,
        capacity: cap,
        rf_count: restricted.len(),
    }
}

/// Measured outcome of one program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub gdp_key: String,
    pub airport: AirportCode,
    pub result: ExcessDelayResult,
    pub diagram: QueueingDiagram,
}

pub fn measure_program(
    p: &GdpProgram,
    restricted: &[(usize, i64)],
    index: &FlightIndex,
    capacity: &CapacityData,
) -> Result<Measurement, QueueingError> {
    let inputs = measure_inputs(p, restricted, index, capacity);
    let diagram = build_diagram(inputs.airport, &inputs.flights, &inputs.capacity, inputs.horizon.clone())?;
    Ok(Measurement {
        gdp_key: p.gdp_key.clone(),
        airport: p.airport,
        result: excess_delay(&diagram, inputs.rf_count),
        diagram,
    })
}
