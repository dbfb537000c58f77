//! Deterministic queueing diagram for one airport: the actual cumulative
//! arrival curve, the counterfactual demand curve with program delay removed,
//! and the capacity-constrained counterfactual arrival curve.
//!
//! Capacity is a per-quarter rate in flights. Fractional rates accumulate in
//! an integer credit counter scaled by [`SLOT_SCALE`]; each quarter offers
//! `floor(credit)` landing slots, and offered slots leave the counter whether
//! or not a flight uses them, so idle runway time is never banked.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flightdata::{AirportCode, FlightRecord, QuarterIndex, TimePoint, QUARTER_MINUTES};

/// Capacity units per landing slot.
pub const SLOT_SCALE: i64 = 1_000_000;

/// Longest tail, in quarters, the drain phase may add (two weeks).
pub const MAX_DRAIN_QUARTERS: i64 = 4 * 24 * 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueingError {
    #[error("no capacity rate for quarter {0} and no default configured")]
    UnderdefinedCapacity(i64),
    #[error("flight wheels-on quarter {0} lies outside the diagram horizon")]
    OutOfHorizon(i64),
    #[error("queue did not drain within {0} quarters past the horizon")]
    NonDraining(i64),
    #[error("no restricted flights: per-flight excess delay undefined")]
    NoRestrictedFlights,
}

/// Converts a per-quarter rate to integer capacity units.
pub fn scaled_rate(rate: f64) -> i64 {
    (rate * SLOT_SCALE as f64).round() as i64
}

/// Per-quarter landing rates with an optional fallback for uncovered quarters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CapacityProfile {
    rates: BTreeMap<QuarterIndex, f64>,
    default_rate: Option<f64>,
}

impl CapacityProfile {
    pub fn new(rates: impl IntoIterator<Item = (QuarterIndex, f64)>) -> Self {
        CapacityProfile { rates: rates.into_iter().collect(), default_rate: None }
    }

    /// Constant rate everywhere.
    pub fn uniform(rate: f64) -> Self {
        CapacityProfile { rates: BTreeMap::new(), default_rate: Some(rate) }
    }

    pub fn with_default(mut self, rate: f64) -> Self {
        self.default_rate = Some(rate);
        self
    }

    pub fn default_rate(&self) -> Option<f64> {
        self.default_rate
    }

    pub fn set(&mut self, q: QuarterIndex, rate: f64) {
        self.rates.insert(q, rate);
    }

    /// Rate at `q` and whether it came from the fallback.
    pub fn lookup(&self, q: QuarterIndex) -> Option<(f64, bool)> {
        match self.rates.get(&q) {
            Some(r) => Some((*r, false)),
            None => self.default_rate.map(|r| (r, true)),
        }
    }

    /// Raises every quarter's rate to at least the number of flights observed
    /// landing in it, so the counterfactual never lands a flight later than
    /// it actually landed.
    pub fn floor_at_observed(&mut self, observed: impl IntoIterator<Item = (QuarterIndex, u32)>) {
        for (q, count) in observed {
            let base = self.lookup(q).map_or(0.0, |(r, _)| r);
            if (count as f64) > base {
                self.rates.insert(q, count as f64);
            }
        }
    }
}

/// A flight's actual wheels-on and its counterfactual (model planned) wheels-on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueuedFlight {
    pub actual_wheels_on: TimePoint,
    pub model_wheels_on: TimePoint,
}

impl QueuedFlight {
    /// `None` for cancelled flights.
    pub fn from_record(f: &FlightRecord, gdp_delay_min: i64) -> Option<Self> {
        Some(QueuedFlight { actual_wheels_on: f.actual_wheels_on()?, model_wheels_on: model_wheels_on(f, gdp_delay_min)? })
    }
}

/// Counterfactual wheels-on: the flight leaves the gate earlier by its
/// program delay and keeps its actual taxi-out and airborne durations.
pub fn model_wheels_on(f: &FlightRecord, gdp_delay_min: i64) -> Option<TimePoint> {
    let a = f.actual?;
    Some((a.gate_out - gdp_delay_min) + a.taxi_out_min() + a.airborne_min())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueingDiagram {
    pub airport: AirportCode,
    pub first_quarter: QuarterIndex,
    /// Cumulative actual arrivals at the end of each quarter.
    pub actual: Vec<u32>,
    /// Cumulative counterfactual demand.
    pub model_planned: Vec<u32>,
    /// Cumulative counterfactual arrivals.
    pub model_actual: Vec<u32>,
    /// Rate applied in each quarter.
    pub capacity: Vec<f64>,
    /// Quarters added after the requested horizon to drain the queue.
    pub drain_quarters: usize,
    /// Quarters whose rate came from the profile's fallback.
    pub fallback_quarters: usize,
}

impl QueueingDiagram {
    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    pub fn quarters(&self) -> Range<i64> {
        self.first_quarter.0..self.first_quarter.0 + self.len() as i64
    }

    pub fn total_flights(&self) -> u32 {
        self.actual.last().copied().unwrap_or(0)
    }
}

/// Builds the three cumulative curves over `horizon`, extending past its end
/// until the counterfactual queue is empty.
pub fn build_diagram(
    airport: AirportCode,
    flights: &[QueuedFlight],
    capacity: &CapacityProfile,
    horizon: Range<QuarterIndex>,
) -> Result<QueueingDiagram, QueueingError> {
    let first = horizon.start;
    let n = (horizon.end.0 - first.0).max(0) as usize;
    let slot = |t: TimePoint| -> Result<usize, QueueingError> {
        let q = t.quarter();
        if q < first || q >= horizon.end {
            return Err(QueueingError::OutOfHorizon(q.0));
        }
        Ok((q.0 - first.0) as usize)
    };
    let mut actual_new = vec![0u32; n];
    let mut demand_new = vec![0u32; n];
    for f in flights {
        actual_new[slot(f.actual_wheels_on)?] += 1;
        demand_new[slot(f.model_wheels_on)?] += 1;
    }

    let mut diagram = QueueingDiagram {
        airport,
        first_quarter: first,
        actual: Vec::with_capacity(n),
        model_planned: Vec::with_capacity(n),
        model_actual: Vec::with_capacity(n),
        capacity: Vec::with_capacity(n),
        drain_quarters: 0,
        fallback_quarters: 0,
    };
    let (mut cum_actual, mut cum_planned, mut cum_served) = (0u32, 0u32, 0u32);
    let mut credit: i64 = 0;
    let mut q = first;
    loop {
        let idx = (q.0 - first.0) as usize;
        if idx >= n {
            if cum_served == cum_planned {
                break;
            }
            if (idx - n) as i64 >= MAX_DRAIN_QUARTERS {
                return Err(QueueingError::NonDraining(MAX_DRAIN_QUARTERS));
            }
            diagram.drain_quarters += 1;
        }
        let (rate, fallback) = capacity.lookup(q).ok_or(QueueingError::UnderdefinedCapacity(q.0))?;
        diagram.fallback_quarters += fallback as usize;
        credit += scaled_rate(rate);
        let slots = credit / SLOT_SCALE;
        credit -= slots * SLOT_SCALE;

        if idx < n {
            cum_actual += actual_new[idx];
            cum_planned += demand_new[idx];
        }
        let waiting = (cum_planned - cum_served) as i64;
        cum_served += waiting.min(slots) as u32;

        diagram.actual.push(cum_actual);
        diagram.model_planned.push(cum_planned);
        diagram.model_actual.push(cum_served);
        diagram.capacity.push(rate);
        q = q.next();
    }
    Ok(diagram)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessDelayResult {
    /// Area between the counterfactual and actual arrival curves, minutes.
    pub excess_delay_min: i64,
    pub excess_per_rf_min: Option<f64>,
    /// Area between counterfactual demand and counterfactual arrivals, minutes.
    pub airborne_increase_min: i64,
    pub rf_count: usize,
}

impl ExcessDelayResult {
    pub fn per_rf(&self) -> Result<f64, QueueingError> {
        self.excess_per_rf_min.ok_or(QueueingError::NoRestrictedFlights)
    }
}

/// Weights each quarter's gap between cumulative curves by 15 minutes.
pub fn excess_delay(d: &QueueingDiagram, rf_count: usize) -> ExcessDelayResult {
    let gap = |upper: &[u32], lower: &[u32]| -> i64 {
        upper.iter().zip(lower).map(|(u, l)| *u as i64 - *l as i64).sum::<i64>() * QUARTER_MINUTES
    };
    let excess_delay_min = gap(&d.model_actual, &d.actual);
    ExcessDelayResult {
        excess_delay_min,
        excess_per_rf_min: (rf_count > 0).then(|| excess_delay_min as f64 / rf_count as f64),
        airborne_increase_min: gap(&d.model_planned, &d.model_actual),
        rf_count,
    }
}
