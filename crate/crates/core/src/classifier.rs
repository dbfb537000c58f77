//! Partitioning of program-involved flights into in-scope, cancel-delay and
//! exempt groups, and the ground delay each restricted flight executed.

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flightdata::{FlightRecord, IngestError, TimePoint, DEFAULT_TAXI_IN_MIN};
use crate::lifecycle::GdpProgram;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("restricted flight {0} has no EDCT")]
    MissingEdct(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlightClass {
    InScope,
    CancelDelay,
    Exempt,
    Uninvolved,
}

impl FlightClass {
    /// In-scope and cancel-delay flights executed program delay.
    pub fn is_restricted(self) -> bool {
        matches!(self, FlightClass::InScope | FlightClass::CancelDelay)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlightClass::InScope => "in_scope",
            FlightClass::CancelDelay => "cancel_delay",
            FlightClass::Exempt => "exempt",
            FlightClass::Uninvolved => "uninvolved",
        }
    }
}

impl FromStr for FlightClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "in_scope" => Ok(FlightClass::InScope),
            "cancel_delay" => Ok(FlightClass::CancelDelay),
            "exempt" => Ok(FlightClass::Exempt),
            "uninvolved" => Ok(FlightClass::Uninvolved),
            _ => Err(format!("unknown flight class `{s}`")),
        }
    }
}

/// Which instant decides whether an in-scope flight was already being held
/// when the program took effect. Flights whose plan wheels-off precedes it
/// are charged only the delay after release.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeldBeforeRule {
    /// Plan wheels-off earlier than the release time.
    #[default]
    BeforeRelease,
    /// Plan wheels-off earlier than the program start time.
    BeforeStart,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub taxi_in_min: i64,
    pub held_before: HeldBeforeRule,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { taxi_in_min: DEFAULT_TAXI_IN_MIN, held_before: HeldBeforeRule::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedFlight {
    pub flight_id: String,
    pub gdp_key: String,
    pub class: FlightClass,
    pub gdp_delay_min: i64,
    pub edct_delay_min: Option<i64>,
}

fn in_window(t: TimePoint, from: TimePoint, to: TimePoint) -> bool {
    from <= t && t < to
}

pub fn classify(f: &FlightRecord, p: &GdpProgram, cfg: &ClassifierConfig) -> FlightClass {
    let srta = f.srta(cfg.taxi_in_min);
    if f.dest != p.airport || !in_window(srta, p.start, p.planned_end) {
        return FlightClass::Uninvolved;
    }
    let origin_in_scope = p.scope.contains(&f.origin);
    let airborne_at_release = f.actual.is_some_and(|a| a.wheels_off <= p.release_time);
    if srta < p.effective_end() && origin_in_scope && !airborne_at_release {
        return FlightClass::InScope;
    }
    if let Some(cancel) = p.cancel_time {
        if srta >= cancel && origin_in_scope && f.fp_wheels_off < cancel && f.edct_wheels_off.is_some() {
            return FlightClass::CancelDelay;
        }
    }
    FlightClass::Exempt
}

/// Executed program delay in minutes, never negative.
///
/// In-scope: EDCT wheels-off less plan wheels-off, or less the release time
/// when the flight was already held (see [`HeldBeforeRule`]). Cancel-delay:
/// the EDCT delay capped at the time from plan wheels-off to cancellation.
pub fn gdp_delay(
    f: &FlightRecord,
    p: &GdpProgram,
    class: FlightClass,
    cfg: &ClassifierConfig,
) -> Result<i64, ClassifyError> {
    if !class.is_restricted() {
        return Ok(0);
    }
    let edct = f.edct_wheels_off.ok_or_else(|| ClassifyError::MissingEdct(f.flight_id.clone()))?;
    let raw = match class {
        FlightClass::InScope => {
            let anchor = match cfg.held_before {
                HeldBeforeRule::BeforeRelease => p.release_time,
                HeldBeforeRule::BeforeStart => p.start,
            };
            if f.fp_wheels_off >= anchor {
                edct - f.fp_wheels_off
            } else {
                edct - p.release_time
            }
        }
        FlightClass::CancelDelay => {
            let cancel = p.cancel_time.expect("cancel-delay implies a cancelled program");
            (edct - f.fp_wheels_off).min(cancel - f.fp_wheels_off)
        }
        FlightClass::Exempt | FlightClass::Uninvolved => unreachable!(),
    };
    Ok(raw.max(0))
}

/// Classifies every flight against one program and attaches its delay.
/// Uninvolved flights are dropped. Cancelled flights without an EDCT get a
/// zero delay rather than an error since they never operated.
pub fn classify_program<'a>(
    flights: impl IntoIterator<Item = &'a FlightRecord>,
    p: &GdpProgram,
    cfg: &ClassifierConfig,
) -> Result<Vec<ClassifiedFlight>, ClassifyError> {
    let mut out = Vec::new();
    for f in flights {
        let class = classify(f, p, cfg);
        if class == FlightClass::Uninvolved {
            continue;
        }
        let gdp_delay_min = match gdp_delay(f, p, class, cfg) {
            Err(ClassifyError::MissingEdct(_)) if f.cancelled => 0,
            other => other?,
        };
        out.push(ClassifiedFlight {
            flight_id: f.flight_id.clone(),
            gdp_key: p.gdp_key.clone(),
            class,
            gdp_delay_min,
            edct_delay_min: f.edct_delay_min(),
        });
    }
    Ok(out)
}

/// Ground holding (hours) in-scope flights had accrued before release.
pub fn prehold<'a>(flights: impl IntoIterator<Item = (&'a FlightRecord, FlightClass)>, p: &GdpProgram) -> f64 {
    let minutes: i64 = flights
        .into_iter()
        .filter(|(_, class)| *class == FlightClass::InScope)
        .map(|(f, _)| (p.release_time - f.fp_wheels_off).max(0))
        .sum();
    minutes as f64 / 60.0
}

pub const CLASSIFIED_HEADER: [&str; 5] = ["flight_id", "gdp_key", "class", "gdp_delay_min", "edct_delay_min"];

pub fn write_classified<W: Write>(out: W, rows: &[ClassifiedFlight]) -> Result<(), IngestError> {
    let io = |e: csv::Error| IngestError::Io(e.to_string());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CLASSIFIED_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.flight_id.as_str(),
            r.gdp_key.as_str(),
            r.class.as_str(),
            &r.gdp_delay_min.to_string(),
            &r.edct_delay_min.map(|d| d.to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| IngestError::Io(e.to_string()))
}

pub fn read_classified<R: Read>(input: R) -> Result<Vec<ClassifiedFlight>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers().map_err(IngestError::from_csv)?;
    if headers.iter().ne(CLASSIFIED_HEADER.iter().copied()) {
        return Err(IngestError::HeaderMismatch {
            expected: CLASSIFIED_HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(IngestError::from_csv)?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |column: &str, reason: String| IngestError::MalformedRow { line, column: column.into(), reason };
        let int = |idx: usize, column: &str| {
            record[idx].parse::<i64>().map_err(|e| bad(column, format!("`{}`: {e}", &record[idx])))
        };
        rows.push(ClassifiedFlight {
            flight_id: record[0].to_string(),
            gdp_key: record[1].to_string(),
            class: record[2].parse().map_err(|e| bad("class", e))?,
            gdp_delay_min: int(3, "gdp_delay_min")?,
            edct_delay_min: if record[4].is_empty() { None } else { Some(int(4, "edct_delay_min")?) },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flightdata::{ActualTimes, AirportCode, Cause, ParSchedule, Scope};
    use proptest::prelude::*;

    fn t(h: i64, m: i64) -> TimePoint {
        TimePoint(h * 60 + m)
    }

    fn code(s: &str) -> AirportCode {
        s.parse().unwrap()
    }

    fn program(release: TimePoint, start: TimePoint, end: TimePoint, cancel: Option<TimePoint>) -> GdpProgram {
        GdpProgram {
            gdp_key: "G1".into(),
            airport: code("EWR"),
            release_time: release,
            revisions: vec![],
            cancel_time: cancel,
            start,
            planned_end: end,
            initial_par: ParSchedule::constant(start.quarter(), 8.0),
            final_par: ParSchedule::constant(start.quarter(), 8.0),
            scope: Scope { us: [code("ORD")].into(), ca: [code("CYYZ")].into() },
            cause: Cause::Wind,
        }
    }

    /// Flight with the given SRTA, origin, plan wheels-off, EDCT and actual wheels-off.
    fn flight(srta: TimePoint, origin: &str, fp_off: TimePoint, edct: Option<TimePoint>, off: TimePoint) -> FlightRecord {
        FlightRecord {
            flight_id: "F1".into(),
            origin: code(origin),
            dest: code("EWR"),
            sched_gate_arr: srta + 10,
            fp_gate_out: fp_off - 15,
            fp_wheels_off: fp_off,
            ete_min: 100,
            unimpeded_taxi_out_min: 15,
            edct_wheels_off: edct,
            actual: Some(ActualTimes { gate_out: off - 15, wheels_off: off, wheels_on: off + 100, gate_in: off + 110 }),
            cancelled: false,
        }
    }

    #[test]
    fn truth_table_all_eight_combinations() {
        let p = program(t(12, 0), t(13, 0), t(18, 0), None);
        let cfg = ClassifierConfig::default();
        for in_window in [false, true] {
            for in_scope in [false, true] {
                for airborne in [false, true] {
                    let srta = if in_window { t(15, 0) } else { t(12, 30) };
                    let origin = if in_scope { "ORD" } else { "ATL" };
                    let off = if airborne { t(11, 50) } else { t(12, 10) };
                    let f = flight(srta, origin, t(11, 40), Some(t(12, 30)), off);
                    let expected = match (in_window, in_scope, airborne) {
                        (false, _, _) => FlightClass::Uninvolved,
                        (true, true, false) => FlightClass::InScope,
                        (true, _, _) => FlightClass::Exempt,
                    };
                    assert_eq!(classify(&f, &p, &cfg), expected, "{in_window} {in_scope} {airborne}");
                }
            }
        }
    }

    #[test]
    fn canadian_scope_counts() {
        let p = program(t(12, 0), t(13, 0), t(18, 0), None);
        let f = flight(t(15, 0), "CYYZ", t(13, 20), Some(t(14, 0)), t(14, 0));
        assert_eq!(classify(&f, &p, &ClassifierConfig::default()), FlightClass::InScope);
    }

    #[test]
    fn airborne_at_release_is_exempt() {
        let p = program(t(12, 0), t(13, 0), t(18, 0), None);
        let f = flight(t(14, 0), "ORD", t(11, 30), None, t(11, 30));
        assert_eq!(classify(&f, &p, &ClassifierConfig::default()), FlightClass::Exempt);
    }

    #[test]
    fn equation_examples() {
        let cfg = ClassifierConfig::default();
        // plan off after start: EDCT delay
        let p = program(t(12, 0), t(13, 0), t(18, 0), None);
        let f = flight(t(15, 40), "ORD", t(14, 0), Some(t(14, 42)), t(14, 42));
        assert_eq!(gdp_delay(&f, &p, FlightClass::InScope, &cfg), Ok(42));
        // plan off before release: EDCT off less release time
        let p = program(t(13, 20), t(14, 0), t(18, 0), None);
        let f = flight(t(14, 40), "ORD", t(13, 0), Some(t(14, 50)), t(14, 50));
        assert_eq!(gdp_delay(&f, &p, FlightClass::InScope, &cfg), Ok(90));
        let as_printed = ClassifierConfig { held_before: HeldBeforeRule::BeforeStart, ..cfg };
        assert_eq!(gdp_delay(&f, &p, FlightClass::InScope, &as_printed), Ok(90));
        // cancel-delay: min(60, 25)
        let p = program(t(12, 0), t(13, 0), t(18, 0), Some(t(15, 25)));
        let f = flight(t(16, 0), "ORD", t(15, 0), Some(t(16, 0)), t(15, 25));
        assert_eq!(classify(&f, &p, &cfg), FlightClass::CancelDelay);
        assert_eq!(gdp_delay(&f, &p, FlightClass::CancelDelay, &cfg), Ok(25));
    }

    #[test]
    fn held_before_rules_differ_between_release_and_start() {
        let p = program(t(12, 0), t(14, 0), t(18, 0), None);
        let f = flight(t(15, 0), "ORD", t(13, 0), Some(t(13, 30)), t(13, 30));
        let release_rule = ClassifierConfig::default();
        let start_rule = ClassifierConfig { held_before: HeldBeforeRule::BeforeStart, ..release_rule };
        assert_eq!(gdp_delay(&f, &p, FlightClass::InScope, &release_rule), Ok(30));
        assert_eq!(gdp_delay(&f, &p, FlightClass::InScope, &start_rule), Ok(90));
    }

    #[test]
    fn negative_delay_clamped_and_missing_edct() {
        let cfg = ClassifierConfig::default();
        let p = program(t(12, 0), t(13, 0), t(18, 0), None);
        let f = flight(t(15, 40), "ORD", t(14, 0), Some(t(13, 50)), t(13, 50));
        assert_eq!(gdp_delay(&f, &p, FlightClass::InScope, &cfg), Ok(0));
        let f = flight(t(15, 40), "ORD", t(14, 0), None, t(14, 0));
        assert_eq!(gdp_delay(&f, &p, FlightClass::InScope, &cfg), Err(ClassifyError::MissingEdct("F1".into())));
        assert_eq!(gdp_delay(&f, &p, FlightClass::Exempt, &cfg), Ok(0));
    }

    #[test]
    fn cancel_window_shrinks_in_scope_window() {
        let cfg = ClassifierConfig::default();
        let p = program(t(12, 0), t(13, 0), t(18, 0), Some(t(15, 0)));
        let before = flight(t(14, 50), "ORD", t(13, 10), Some(t(14, 0)), t(14, 0));
        assert_eq!(classify(&before, &p, &cfg), FlightClass::InScope);
        let after_no_edct = flight(t(15, 10), "ORD", t(13, 30), None, t(13, 30));
        assert_eq!(classify(&after_no_edct, &p, &cfg), FlightClass::Exempt);
        let planned_after_cancel = flight(t(17, 0), "ORD", t(15, 20), Some(t(16, 0)), t(15, 20));
        assert_eq!(classify(&planned_after_cancel, &p, &cfg), FlightClass::Exempt);
    }

    #[test]
    fn prehold_sums() {
        let p = program(t(12, 0), t(13, 0), t(18, 0), None);
        let a = flight(t(14, 0), "ORD", t(11, 30), Some(t(12, 30)), t(12, 30));
        let b = flight(t(14, 0), "ORD", t(11, 45), Some(t(12, 30)), t(12, 30));
        let c = flight(t(14, 0), "ORD", t(12, 45), Some(t(13, 30)), t(13, 30));
        let hours = prehold([(&a, FlightClass::InScope), (&b, FlightClass::InScope), (&c, FlightClass::InScope)], &p);
        assert_eq!(hours, 0.75);
        assert_eq!(prehold([(&c, FlightClass::InScope)], &p), 0.0);
        assert_eq!(prehold([(&a, FlightClass::Exempt), (&b, FlightClass::Exempt)], &p), 0.0);
    }

    #[test]
    fn classified_csv_round_trip() {
        let rows = vec![
            ClassifiedFlight {
                flight_id: "F1".into(),
                gdp_key: "G1".into(),
                class: FlightClass::InScope,
                gdp_delay_min: 42,
                edct_delay_min: Some(42),
            },
            ClassifiedFlight {
                flight_id: "F2".into(),
                gdp_key: "G1".into(),
                class: FlightClass::Exempt,
                gdp_delay_min: 0,
                edct_delay_min: None,
            },
        ];
        let mut bytes = Vec::new();
        write_classified(&mut bytes, &rows).unwrap();
        assert_eq!(read_classified(bytes.as_slice()).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn delay_properties(
            srta in 13 * 60i64..18 * 60,
            fp_lead in 30i64..300,
            edct_shift in -30i64..240,
            cancel in proptest::option::of(13 * 60i64..18 * 60),
            in_scope in any::<bool>(),
        ) {
            let cfg = ClassifierConfig::default();
            let p = program(t(12, 0), t(13, 0), t(18, 0), cancel.map(TimePoint));
            let fp_off = TimePoint(srta - fp_lead);
            let edct = fp_off + edct_shift;
            let f = flight(TimePoint(srta), if in_scope { "ORD" } else { "ATL" }, fp_off, Some(edct), edct.max(fp_off));
            let class = classify(&f, &p, &cfg);
            let delay = gdp_delay(&f, &p, class, &cfg).unwrap();
            prop_assert!(delay >= 0);
            if class == FlightClass::CancelDelay {
                prop_assert!(delay <= edct_shift.max(0));
            }
            if class == FlightClass::InScope && f.fp_wheels_off >= p.start {
                prop_assert_eq!(delay, (edct - fp_off).max(0));
            }
            // cancelling exactly at the planned end leaves no cancel-delay flights
            let p_end = program(t(12, 0), t(13, 0), t(18, 0), Some(t(18, 0)));
            prop_assert_ne!(classify(&f, &p_end, &cfg), FlightClass::CancelDelay);
        }
    }
}
