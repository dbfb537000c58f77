//! Classification, measurement and feature extraction across all programs.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{classify_program, ClassifiedFlight, ClassifierConfig};
use crate::features::{extract, ExtractContext, FeatureRow};
use crate::flightdata::{AirportCode, FlightRecord};
use crate::lifecycle::GdpProgram;
use crate::queueing::ExcessDelayResult;

use super::measure::{measure_program, CapacityData, FlightIndex, Measurement};

/// A failure tagged with the stage it happened in and, where known, the
/// offending record (flight id, program key, file line).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub record: Option<String>,
    pub message: String,
}

impl StageError {
    pub fn new(stage: impl Into<String>, record: Option<String>, message: impl ToString) -> Self {
        StageError { stage: stage.into(), record, message: message.to_string() }
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.record {
            Some(r) => write!(f, "{} [{}]: {}", self.stage, r, self.message),
            None => write!(f, "{}: {}", self.stage, self.message),
        }
    }
}

impl std::error::Error for StageError {}

/// Classifies every flight whose SRTA falls in a program window. Rows come
/// out grouped by program, in program order, then by SRTA.
pub fn classify_all(
    programs: &[GdpProgram],
    index: &FlightIndex,
    cfg: &ClassifierConfig,
) -> (Vec<ClassifiedFlight>, Vec<StageError>) {
    let flights = index.flights();
    let per_program: Vec<_> = programs
        .par_iter()
        .map(|p| {
            let candidates = index.arrivals_by_srta(&p.airport, p.start, p.planned_end);
            classify_program(candidates.iter().map(|(_, i)| &flights[*i]), p, cfg)
                .map_err(|e| StageError::new("classify", Some(p.gdp_key.clone()), e))
        })
        .collect();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for r in per_program {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(e) => errors.push(e),
        }
    }
    (rows, errors)
}

/// Classified rows grouped by program key.
pub fn group_by_program(rows: &[ClassifiedFlight]) -> HashMap<&str, Vec<&ClassifiedFlight>> {
    let mut map: HashMap<&str, Vec<&ClassifiedFlight>> = HashMap::new();
    for r in rows {
        map.entry(r.gdp_key.as_str()).or_default().push(r);
    }
    map
}

/// Operated restricted flights of one program as (table position, delay).
fn restricted_of(
    key: &str,
    rows: &[&ClassifiedFlight],
    index: &FlightIndex,
) -> Result<Vec<(usize, i64)>, StageError> {
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| r.class.is_restricted()) {
        let pos = index
            .position(&r.flight_id)
            .ok_or_else(|| StageError::new("measure", Some(r.flight_id.clone()), format!("unknown flight in {key}")))?;
        if index.flights()[pos].actual_wheels_on().is_some() {
            out.push((pos, r.gdp_delay_min));
        }
    }
    Ok(out)
}

/// Builds one queueing diagram per program. Programs run in parallel and
/// results keep program order.
pub fn measure_all(
    programs: &[GdpProgram],
    classified: &[ClassifiedFlight],
    index: &FlightIndex,
    capacity: &CapacityData,
) -> (Vec<Measurement>, Vec<StageError>) {
    let groups = group_by_program(classified);
    let results: Vec<Result<Measurement, StageError>> = programs
        .par_iter()
        .map(|p| {
            let rows = groups.get(p.gdp_key.as_str()).map_or(&[][..], Vec::as_slice);
            let restricted = restricted_of(&p.gdp_key, rows, index)?;
            measure_program(p, &restricted, index, capacity)
                .map_err(|e| StageError::new("measure", Some(p.gdp_key.clone()), e))
        })
        .collect();
    split_results(results)
}

fn split_results<T>(results: Vec<Result<T, StageError>>) -> (Vec<T>, Vec<StageError>) {
    let mut ok = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => errors.push(e),
        }
    }
    (ok, errors)
}

/// Programs per airport.
pub fn program_counts(programs: &[GdpProgram]) -> HashMap<AirportCode, usize> {
    let mut counts = HashMap::new();
    for p in programs {
        *counts.entry(p.airport).or_insert(0) += 1;
    }
    counts
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureStage {
    pub rows: Vec<FeatureRow>,
    /// Programs left out of the regression table, with the reason.
    pub skipped: Vec<(String, String)>,
    pub errors: Vec<StageError>,
}

/// One feature row per measured program with at least one restricted
/// flight. Programs without a measurement are reported as errors.
pub fn features_all(
    programs: &[GdpProgram],
    classified: &[ClassifiedFlight],
    excess: &HashMap<String, ExcessDelayResult>,
    index: &FlightIndex,
    capacity: &CapacityData,
    others_threshold: usize,
) -> FeatureStage {
    let groups = group_by_program(classified);
    let counts = program_counts(programs);
    let flights = index.flights();
    enum Outcome {
        Row(Box<FeatureRow>),
        Skipped(String, String),
    }
    let results: Vec<Result<Outcome, StageError>> = programs
        .par_iter()
        .map(|p| {
            let err = |m: String| StageError::new("features", Some(p.gdp_key.clone()), m);
            let result = excess.get(&p.gdp_key).ok_or_else(|| err("no excess-delay measurement".into()))?;
            if result.rf_count == 0 {
                return Ok(Outcome::Skipped(p.gdp_key.clone(), "no restricted flights".into()));
            }
            let annual_mean_rate =
                capacity.annual_mean(&p.airport).ok_or_else(|| err(format!("no recorded rates for {}", p.airport)))?;
            let mut classes: Vec<(&FlightRecord, _)> = Vec::new();
            for r in groups.get(p.gdp_key.as_str()).map_or(&[][..], Vec::as_slice) {
                let pos = index
                    .position(&r.flight_id)
                    .ok_or_else(|| StageError::new("features", Some(r.flight_id.clone()), "unknown flight"))?;
                classes.push((&flights[pos], r.class));
            }
            let rate = |q| capacity.rate(&p.airport, q);
            let ctx = ExtractContext {
                arr_rate: &rate,
                annual_mean_rate,
                program_counts: &counts,
                others_threshold,
            };
            extract(p, &classes, result, &ctx).map(|r| Outcome::Row(Box::new(r))).map_err(|e| err(e.to_string()))
        })
        .collect();
    let mut stage = FeatureStage::default();
    for r in results {
        match r {
            Ok(Outcome::Row(row)) => stage.rows.push(*row),
            Ok(Outcome::Skipped(key, why)) => stage.skipped.push((key, why)),
            Err(e) => stage.errors.push(e),
        }
    }
    stage
}
