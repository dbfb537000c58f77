use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};

use thiserror::Error;

use super::{
    ActualTimes, AdvisoryEvent, AirportCode, CauseLookup, Epoch, FlightRecord, ParSchedule,
    QuarterHourRecord, QuarterIndex, Scope, TimePoint, QUARTER_MINUTES,
};

pub const FLIGHTS_HEADER: [&str; 14] = [
    "flight_id",
    "origin",
    "dest",
    "sched_gate_arr",
    "fp_gate_out",
    "fp_wheels_off",
    "ete_min",
    "unimpeded_taxi_out_min",
    "edct_wheels_off",
    "actual_gate_out",
    "actual_wheels_off",
    "actual_wheels_on",
    "actual_gate_in",
    "cancelled",
];

pub const QUARTERS_HEADER: [&str; 3] = ["airport", "quarter_start", "arr_rate"];

pub const ADVISORIES_HEADER: [&str; 10] =
    ["gdp_key", "airport", "kind", "adl_time", "start", "end", "par_schedule", "scope_us", "scope_ca", "cause"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    HeaderMismatch { expected: String, found: String },
    #[error("malformed row at line {line}, column `{column}`: {reason}")]
    MalformedRow { line: u64, column: String, reason: String },
    #[error("invariant violation for flight {flight_id}: {reason}")]
    InvariantViolation { flight_id: String, reason: String },
    #[error("duplicate key {key} at line {line}")]
    DuplicateKey { key: String, line: u64 },
    #[error("i/o error: {0}")]
    Io(String),
}

impl IngestError {
    pub(crate) fn from_csv(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io(e.to_string()),
            _ => IngestError::MalformedRow { line, column: "*".into(), reason: e.to_string() },
        }
    }
}

/// Result of a lenient scan: every data row ends up either in `records` or in
/// `rejected`, so `rows == records.len() + rejected.len()`.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejected: Vec<IngestError>,
    pub rows: usize,
}

impl<T> Parsed<T> {
    /// Fails on the first rejected row.
    pub fn into_strict(self) -> Result<Vec<T>, IngestError> {
        match self.rejected.into_iter().next() {
            Some(err) => Err(err),
            None => Ok(self.records),
        }
    }
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    line: u64,
    header: &'static [&'static str],
}

impl Row<'_> {
    fn malformed(&self, idx: usize, reason: impl Into<String>) -> IngestError {
        IngestError::MalformedRow { line: self.line, column: self.header[idx].to_string(), reason: reason.into() }
    }

    fn text(&self, idx: usize) -> Result<&str, IngestError> {
        let cell = &self.record[idx];
        if cell.is_empty() {
            Err(self.malformed(idx, "required value is empty"))
        } else {
            Ok(cell)
        }
    }

    fn airport(&self, idx: usize) -> Result<AirportCode, IngestError> {
        self.text(idx)?.parse().map_err(|e| self.malformed(idx, e))
    }

    fn time(&self, idx: usize, epoch: &Epoch) -> Result<TimePoint, IngestError> {
        epoch.parse_time(self.text(idx)?).map_err(|e| self.malformed(idx, e))
    }

    fn opt_time(&self, idx: usize, epoch: &Epoch) -> Result<Option<TimePoint>, IngestError> {
        if self.record[idx].is_empty() {
            Ok(None)
        } else {
            self.time(idx, epoch).map(Some)
        }
    }

    fn int(&self, idx: usize) -> Result<i64, IngestError> {
        let text = self.text(idx)?;
        text.parse::<i64>().map_err(|e| self.malformed(idx, format!("`{text}`: {e}")))
    }

    fn rate(&self, idx: usize) -> Result<f64, IngestError> {
        let text = self.text(idx)?;
        parse_rate(text).map_err(|e| self.malformed(idx, e))
    }
}

fn parse_rate(text: &str) -> Result<f64, String> {
    let value: f64 = text.parse().map_err(|e| format!("`{text}`: {e}"))?;
    if !value.is_finite() || value < 0.0 {
        return Err(format!("rate `{text}` must be finite and non-negative"));
    }
    Ok(value)
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<(), IngestError> {
    let headers = rdr.headers().map_err(IngestError::from_csv)?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(IngestError::HeaderMismatch {
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(input)
}

/// Drives `row_fn` over every data row, sorting results into accepted and
/// rejected. Only header and I/O failures abort the scan.
fn scan<R: Read, T>(
    input: R,
    header: &'static [&'static str],
    mut row_fn: impl FnMut(&Row<'_>) -> Result<T, IngestError>,
) -> Result<Parsed<T>, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, header)?;
    let mut parsed = Parsed { records: Vec::new(), rejected: Vec::new(), rows: 0 };
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                parsed.rows += 1;
                let line = record.position().map_or(0, |p| p.line());
                match row_fn(&Row { record: &record, line, header }) {
                    Ok(r) => parsed.records.push(r),
                    Err(e) => parsed.rejected.push(e),
                }
            }
            Err(e) => {
                let err = IngestError::from_csv(e);
                if matches!(err, IngestError::Io(_)) {
                    return Err(err);
                }
                parsed.rows += 1;
                parsed.rejected.push(err);
            }
        }
    }
    Ok(parsed)
}

pub fn scan_flights<R: Read>(input: R, epoch: &Epoch) -> Result<Parsed<FlightRecord>, IngestError> {
    let mut seen: HashSet<String> = HashSet::new();
    scan(input, &FLIGHTS_HEADER, |row| {
        let flight_id = row.text(0)?.to_string();
        let actual_cells: Vec<Option<TimePoint>> =
            (9..13).map(|i| row.opt_time(i, epoch)).collect::<Result<_, _>>()?;
        let actual = match actual_cells.iter().position(Option::is_none) {
            None => Some(ActualTimes {
                gate_out: actual_cells[0].unwrap(),
                wheels_off: actual_cells[1].unwrap(),
                wheels_on: actual_cells[2].unwrap(),
                gate_in: actual_cells[3].unwrap(),
            }),
            Some(_) if actual_cells.iter().all(Option::is_none) => None,
            Some(i) => return Err(row.malformed(9 + i, "actual times must be all present or all empty")),
        };
        let cancelled = match &row.record[13] {
            "true" => true,
            "false" => false,
            other => return Err(row.malformed(13, format!("`{other}` is not true|false"))),
        };
        let flight = FlightRecord {
            flight_id,
            origin: row.airport(1)?,
            dest: row.airport(2)?,
            sched_gate_arr: row.time(3, epoch)?,
            fp_gate_out: row.time(4, epoch)?,
            fp_wheels_off: row.time(5, epoch)?,
            ete_min: row.int(6)?,
            unimpeded_taxi_out_min: row.int(7)?,
            edct_wheels_off: row.opt_time(8, epoch)?,
            actual,
            cancelled,
        };
        flight
            .check_invariants()
            .map_err(|reason| IngestError::InvariantViolation { flight_id: flight.flight_id.clone(), reason })?;
        if !seen.insert(flight.flight_id.clone()) {
            return Err(IngestError::DuplicateKey { key: flight.flight_id, line: row.line });
        }
        Ok(flight)
    })
}

/// Strict flight ingestion: any bad row fails the whole file.
pub fn parse_flights<R: Read>(input: R, epoch: &Epoch) -> Result<Vec<FlightRecord>, IngestError> {
    scan_flights(input, epoch)?.into_strict()
}

fn quarter_start(row: &Row<'_>, idx: usize, epoch: &Epoch) -> Result<QuarterIndex, IngestError> {
    let t = row.time(idx, epoch)?;
    if t.0 % QUARTER_MINUTES != 0 {
        return Err(row.malformed(idx, "not on a quarter-hour boundary"));
    }
    Ok(t.quarter())
}

pub fn scan_quarters<R: Read>(input: R, epoch: &Epoch) -> Result<Parsed<QuarterHourRecord>, IngestError> {
    let mut seen: HashSet<(AirportCode, QuarterIndex)> = HashSet::new();
    scan(input, &QUARTERS_HEADER, |row| {
        let airport = row.airport(0)?;
        let quarter = quarter_start(row, 1, epoch)?;
        let arr_rate = row.rate(2)?;
        if !seen.insert((airport, quarter)) {
            return Err(IngestError::DuplicateKey {
                key: format!("{airport}@{}", epoch.format_time(quarter.start())),
                line: row.line,
            });
        }
        Ok(QuarterHourRecord { airport, quarter, arr_rate })
    })
}

pub fn parse_quarters<R: Read>(input: R, epoch: &Epoch) -> Result<Vec<QuarterHourRecord>, IngestError> {
    scan_quarters(input, epoch)?.into_strict()
}

fn parse_par(text: &str, epoch: &Epoch) -> Result<ParSchedule, String> {
    let mut breakpoints = Vec::new();
    for pair in text.split(';') {
        let (when, rate) = pair.split_once('=').ok_or_else(|| format!("`{pair}` is not quarter_start=rate"))?;
        let t = epoch.parse_time(when)?;
        if t.0 % QUARTER_MINUTES != 0 {
            return Err(format!("`{when}` is not on a quarter-hour boundary"));
        }
        breakpoints.push((t.quarter(), parse_rate(rate)?));
    }
    ParSchedule::new(breakpoints)
}

fn parse_codes(text: &str) -> Result<BTreeSet<AirportCode>, String> {
    if text.is_empty() {
        return Ok(BTreeSet::new());
    }
    text.split('|').map(str::parse).collect()
}

/// Lenient advisory scan. Accepted events come back grouped by `gdp_key` (in
/// order of first appearance) and sorted by ADL time within each key; two
/// events of one key sharing an ADL time are rejected.
pub fn scan_advisories<R: Read>(
    input: R,
    epoch: &Epoch,
    causes: &CauseLookup,
) -> Result<Parsed<AdvisoryEvent>, IngestError> {
    let mut parsed = scan(input, &ADVISORIES_HEADER, |row| {
        let gdp_key = row.text(0)?.to_string();
        let par = match &row.record[6] {
            "" => None,
            text => Some(parse_par(text, epoch).map_err(|e| row.malformed(6, e))?),
        };
        let us = parse_codes(&row.record[7]).map_err(|e| row.malformed(7, e))?;
        let ca = parse_codes(&row.record[8]).map_err(|e| row.malformed(8, e))?;
        let scope = (!us.is_empty() || !ca.is_empty()).then_some(Scope { us, ca });
        let cause = match &row.record[9] {
            "" => None,
            text => Some(causes.resolve(text).map_err(|e| row.malformed(9, e))?),
        };
        let event = AdvisoryEvent {
            gdp_key,
            airport: row.airport(1)?,
            kind: row.text(2)?.parse().map_err(|e| row.malformed(2, e))?,
            adl_time: row.time(3, epoch)?,
            start: row.opt_time(4, epoch)?,
            end: row.opt_time(5, epoch)?,
            par,
            scope,
            cause,
        };
        event.check_invariants().map_err(|(column, reason)| IngestError::MalformedRow {
            line: row.line,
            column: column.into(),
            reason,
        })?;
        Ok((row.line, event))
    })?;

    let mut key_order: HashMap<String, usize> = HashMap::new();
    for (_, e) in &parsed.records {
        let next = key_order.len();
        key_order.entry(e.gdp_key.clone()).or_insert(next);
    }
    let mut records = std::mem::take(&mut parsed.records);
    records.sort_by_key(|(_, e)| (key_order[&e.gdp_key], e.adl_time));
    let mut events = Vec::with_capacity(records.len());
    let mut rejected = parsed.rejected;
    for (line, event) in records {
        let clash = events
            .last()
            .is_some_and(|prev: &AdvisoryEvent| prev.gdp_key == event.gdp_key && prev.adl_time == event.adl_time);
        if clash {
            rejected.push(IngestError::DuplicateKey {
                key: format!("{}@{}", event.gdp_key, epoch.format_time(event.adl_time)),
                line,
            });
        } else {
            events.push(event);
        }
    }
    Ok(Parsed { records: events, rejected, rows: parsed.rows })
}

pub fn parse_advisories<R: Read>(
    input: R,
    epoch: &Epoch,
    causes: &CauseLookup,
) -> Result<Vec<AdvisoryEvent>, IngestError> {
    scan_advisories(input, epoch, causes)?.into_strict()
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

fn io_err(e: impl std::fmt::Display) -> IngestError {
    IngestError::Io(e.to_string())
}

fn opt_time_text(t: Option<TimePoint>, epoch: &Epoch) -> String {
    t.map(|t| epoch.format_time(t)).unwrap_or_default()
}

/// Canonical flights.csv encoding.
pub fn write_flights<W: Write>(out: W, flights: &[FlightRecord], epoch: &Epoch) -> Result<(), IngestError> {
    let mut w = writer(out);
    w.write_record(FLIGHTS_HEADER).map_err(io_err)?;
    for f in flights {
        let a = f.actual;
        w.write_record([
            f.flight_id.clone(),
            f.origin.to_string(),
            f.dest.to_string(),
            epoch.format_time(f.sched_gate_arr),
            epoch.format_time(f.fp_gate_out),
            epoch.format_time(f.fp_wheels_off),
            f.ete_min.to_string(),
            f.unimpeded_taxi_out_min.to_string(),
            opt_time_text(f.edct_wheels_off, epoch),
            opt_time_text(a.map(|a| a.gate_out), epoch),
            opt_time_text(a.map(|a| a.wheels_off), epoch),
            opt_time_text(a.map(|a| a.wheels_on), epoch),
            opt_time_text(a.map(|a| a.gate_in), epoch),
            f.cancelled.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_quarters<W: Write>(out: W, quarters: &[QuarterHourRecord], epoch: &Epoch) -> Result<(), IngestError> {
    let mut w = writer(out);
    w.write_record(QUARTERS_HEADER).map_err(io_err)?;
    for q in quarters {
        w.write_record([q.airport.to_string(), epoch.format_time(q.quarter.start()), q.arr_rate.to_string()])
            .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn join_codes(codes: &BTreeSet<AirportCode>) -> String {
    codes.iter().map(AirportCode::as_str).collect::<Vec<_>>().join("|")
}

pub fn write_advisories<W: Write>(out: W, events: &[AdvisoryEvent], epoch: &Epoch) -> Result<(), IngestError> {
    let mut w = writer(out);
    w.write_record(ADVISORIES_HEADER).map_err(io_err)?;
    for e in events {
        let par = e
            .par
            .as_ref()
            .map(|p| {
                p.breakpoints()
                    .iter()
                    .map(|(q, r)| format!("{}={}", epoch.format_time(q.start()), r))
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        let (us, ca) = e.scope.as_ref().map(|s| (join_codes(&s.us), join_codes(&s.ca))).unwrap_or_default();
        w.write_record([
            e.gdp_key.clone(),
            e.airport.to_string(),
            e.kind.as_str().to_string(),
            epoch.format_time(e.adl_time),
            opt_time_text(e.start, epoch),
            opt_time_text(e.end, epoch),
            par,
            us,
            ca,
            e.cause.map(|c| c.as_str().to_string()).unwrap_or_default(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flightdata::{AdvisoryKind, Cause};
    use proptest::prelude::*;

    const HEADER: &str = "flight_id,origin,dest,sched_gate_arr,fp_gate_out,fp_wheels_off,ete_min,unimpeded_taxi_out_min,edct_wheels_off,actual_gate_out,actual_wheels_off,actual_wheels_on,actual_gate_in,cancelled\n";
    const ADV_HEADER: &str = "gdp_key,airport,kind,adl_time,start,end,par_schedule,scope_us,scope_ca,cause\n";

    fn epoch() -> Epoch {
        Epoch::default()
    }

    #[test]
    fn one_flight_row() {
        let csv = format!(
            "{HEADER}AAL1,ORD,EWR,2019-01-01T15:00Z,2019-01-01T12:30Z,2019-01-01T12:45Z,125,15,2019-01-01T13:20Z,2019-01-01T13:04Z,2019-01-01T13:22Z,2019-01-01T15:20Z,2019-01-01T15:31Z,false\n"
        );
        let flights = parse_flights(csv.as_bytes(), &epoch()).unwrap();
        assert_eq!(flights.len(), 1);
        let f = &flights[0];
        assert_eq!(f.edct_delay_min(), Some(35));
        assert_eq!(f.actual.unwrap().taxi_out_min(), 18);
        assert_eq!(f.actual.unwrap().airborne_min(), 118);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_flights(HEADER.as_bytes(), &epoch()).unwrap().is_empty());
    }

    #[test]
    fn header_mismatch() {
        let err = parse_flights("flight_id,origin\n".as_bytes(), &epoch()).unwrap_err();
        assert!(matches!(err, IngestError::HeaderMismatch { .. }));
    }

    #[test]
    fn wheels_on_before_wheels_off_is_invariant_violation() {
        let csv = format!(
            "{HEADER}AAL1,ORD,EWR,2019-01-01T15:00Z,2019-01-01T12:30Z,2019-01-01T12:45Z,125,15,,2019-01-01T13:04Z,2019-01-01T13:22Z,2019-01-01T13:20Z,2019-01-01T15:31Z,false\n"
        );
        let err = parse_flights(csv.as_bytes(), &epoch()).unwrap_err();
        assert_eq!(err, IngestError::InvariantViolation {
            flight_id: "AAL1".into(),
            reason: err_reason(&err),
        });
    }

    fn err_reason(e: &IngestError) -> String {
        match e {
            IngestError::InvariantViolation { reason, .. } => reason.clone(),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_line_and_column() {
        let csv = format!(
            "{HEADER}AAL1,ORD,EWR,2019-01-01T15:00Z,2019-01-01T12:30Z,2019-01-01T12:45Z,abc,15,,,,,,true\n"
        );
        match parse_flights(csv.as_bytes(), &epoch()).unwrap_err() {
            IngestError::MalformedRow { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, "ete_min");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scan_accounts_for_every_row() {
        let good = "AAL1,ORD,EWR,2019-01-01T15:00Z,2019-01-01T12:30Z,2019-01-01T12:45Z,125,15,,,,,,true\n";
        let bad = "AAL2,ORD,EWR,2019-01-01T15:00Z,2019-01-01T12:30Z,2019-01-01T12:45Z,0,15,,,,,,true\n";
        let short = "AAL3,ORD\n";
        let dup = good;
        let csv = format!("{HEADER}{good}{bad}{short}{dup}");
        let parsed = scan_flights(csv.as_bytes(), &epoch()).unwrap();
        assert_eq!(parsed.rows, 4);
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.rejected.len(), 3);
        assert!(matches!(parsed.rejected[2], IngestError::DuplicateKey { .. }));
    }

    #[test]
    fn duplicate_quarter_rejected() {
        let csv = "airport,quarter_start,arr_rate\nEWR,2019-01-01T13:00Z,10\nEWR,2019-01-01T13:00Z,9\n";
        assert!(matches!(parse_quarters(csv.as_bytes(), &epoch()), Err(IngestError::DuplicateKey { .. })));
        let misaligned = "airport,quarter_start,arr_rate\nEWR,2019-01-01T13:05Z,10\n";
        assert!(matches!(parse_quarters(misaligned.as_bytes(), &epoch()), Err(IngestError::MalformedRow { .. })));
    }

    #[test]
    fn cancel_with_par_rejected() {
        let csv = format!("{ADV_HEADER}G1,EWR,cancel,2019-01-01T15:00Z,,,2019-01-01T13:00Z=8,,,\n");
        match parse_advisories(csv.as_bytes(), &epoch(), &CauseLookup::default()).unwrap_err() {
            IngestError::MalformedRow { column, .. } => assert_eq!(column, "par_schedule"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn advisories_sorted_within_key() {
        let csv = format!(
            "{ADV_HEADER}\
G1,EWR,cancel,2019-01-01T17:30Z,,,,,,\n\
G1,EWR,release,2019-01-01T12:00Z,2019-01-01T13:30Z,2019-01-01T19:00Z,2019-01-01T13:30Z=8,ORD|ATL,CYYZ,WIND\n\
G1,EWR,revision,2019-01-01T14:00Z,,2019-01-01T19:30Z,,,,\n"
        );
        let events = parse_advisories(csv.as_bytes(), &epoch(), &CauseLookup::default()).unwrap();
        assert_eq!(events.len(), 3);
        let kinds: Vec<_> = events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, [AdvisoryKind::Release, AdvisoryKind::Revision, AdvisoryKind::Cancel]);
        assert_eq!(events[0].cause, Some(Cause::Wind));
        let scope = events[0].scope.as_ref().unwrap();
        assert_eq!(scope.us.len(), 2);
        assert_eq!(scope.ca.len(), 1);
    }

    #[test]
    fn same_adl_time_in_one_key_rejected() {
        let csv = format!(
            "{ADV_HEADER}\
G1,EWR,release,2019-01-01T12:00Z,2019-01-01T13:30Z,2019-01-01T19:00Z,2019-01-01T13:30Z=8,ORD,,wind\n\
G1,EWR,cancel,2019-01-01T12:00Z,,,,,,\n"
        );
        let parsed = scan_advisories(csv.as_bytes(), &epoch(), &CauseLookup::default()).unwrap();
        assert_eq!(parsed.rows, parsed.records.len() + parsed.rejected.len());
        assert!(matches!(parsed.rejected[0], IngestError::DuplicateKey { .. }));
    }

    fn arb_flight() -> impl Strategy<Value = FlightRecord> {
        (
            "[A-Z]{2,3}[0-9]{1,4}",
            0i64..500_000,
            1i64..600,
            0i64..60,
            proptest::option::of(0i64..300),
            proptest::option::of((0i64..60, 0i64..60, 1i64..400, 0i64..40)),
        )
            .prop_map(|(id, t0, ete, taxi, edct, actual)| FlightRecord {
                flight_id: id,
                origin: "ORD".parse().unwrap(),
                dest: "EWR".parse().unwrap(),
                sched_gate_arr: TimePoint(t0 + ete + taxi + 10),
                fp_gate_out: TimePoint(t0),
                fp_wheels_off: TimePoint(t0 + taxi),
                ete_min: ete,
                unimpeded_taxi_out_min: taxi,
                edct_wheels_off: edct.map(|d| TimePoint(t0 + taxi + d)),
                actual: actual.map(|(g, t, a, i)| ActualTimes {
                    gate_out: TimePoint(t0 + g),
                    wheels_off: TimePoint(t0 + g + t),
                    wheels_on: TimePoint(t0 + g + t + a),
                    gate_in: TimePoint(t0 + g + t + a + i),
                }),
                cancelled: actual.is_none(),
            })
    }

    proptest! {
        #[test]
        fn flights_round_trip_byte_exact(mut flights in proptest::collection::vec(arb_flight(), 0..12)) {
            let mut seen = HashSet::new();
            flights.retain(|f| seen.insert(f.flight_id.clone()));
            let mut first = Vec::new();
            write_flights(&mut first, &flights, &epoch()).unwrap();
            let parsed = parse_flights(first.as_slice(), &epoch()).unwrap();
            prop_assert_eq!(&parsed, &flights);
            let mut second = Vec::new();
            write_flights(&mut second, &parsed, &epoch()).unwrap();
            prop_assert_eq!(first, second);
        }

        #[test]
        fn quarters_round_trip(rates in proptest::collection::vec(0u32..4000, 1..20)) {
            let records: Vec<_> = rates
                .iter()
                .enumerate()
                .map(|(i, r)| QuarterHourRecord {
                    airport: "SFO".parse().unwrap(),
                    quarter: QuarterIndex(i as i64),
                    arr_rate: *r as f64 / 100.0,
                })
                .collect();
            let mut bytes = Vec::new();
            write_quarters(&mut bytes, &records, &epoch()).unwrap();
            let parsed = parse_quarters(bytes.as_slice(), &epoch()).unwrap();
            prop_assert_eq!(parsed, records);
        }
    }

    #[test]
    fn advisories_round_trip() {
        let csv = format!(
            "{ADV_HEADER}\
G1,EWR,release,2019-01-01T12:00Z,2019-01-01T13:30Z,2019-01-01T19:00Z,2019-01-01T13:30Z=8;2019-01-01T15:00Z=9.5,ATL|ORD,CYYZ,wind\n\
G1,EWR,revision,2019-01-01T14:00Z,,2019-01-01T19:30Z,,,,\n\
G1,EWR,cancel,2019-01-01T17:30Z,,,,,,\n"
        );
        let events = parse_advisories(csv.as_bytes(), &epoch(), &CauseLookup::default()).unwrap();
        let mut out = Vec::new();
        write_advisories(&mut out, &events, &epoch()).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
    }
}
