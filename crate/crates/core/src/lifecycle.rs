//! Reconstruction of program lifecycles from release, revision and cancel
//! advisories.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flightdata::{
    quarter_ceil, AdvisoryEvent, AdvisoryKind, AirportCode, Cause, ParSchedule, QuarterIndex, Scope, TimePoint,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifecycleError {
    #[error("program {0}: revision or cancel advisory precedes any release")]
    OrphanEvent(String),
    #[error("program {0}: more than one release advisory")]
    DuplicateRelease(String),
    #[error("program {0}: advisory issued after the program was cancelled")]
    EventAfterCancel(String),
    #[error("program {0}: advisories name different airports")]
    AirportMismatch(String),
    #[error("program {gdp_key}: {reason}")]
    InvalidProgram { gdp_key: String, reason: String },
    #[error("programs {first} and {second} overlap at {airport}")]
    Overlap { airport: AirportCode, first: String, second: String },
    #[error("quarter {0} lies outside the program window")]
    OutOfWindow(i64),
}

/// One reconstructed program with its last-updated parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdpProgram {
    pub gdp_key: String,
    pub airport: AirportCode,
    pub release_time: TimePoint,
    pub revisions: Vec<AdvisoryEvent>,
    pub cancel_time: Option<TimePoint>,
    pub start: TimePoint,
    /// End time after the latest revision.
    pub planned_end: TimePoint,
    pub initial_par: ParSchedule,
    pub final_par: ParSchedule,
    pub scope: Scope,
    pub cause: Cause,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParSeries {
    Initial,
    Final,
}

/// Gap, execution and cancelled durations of a program, in hours, plus its
/// revision count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifecycleTimes {
    pub et_hr: f64,
    pub gt_hr: f64,
    pub ct_hr: f64,
    pub cnt_r: usize,
}

impl GdpProgram {
    /// Quarters overlapping `[start, planned_end)`.
    pub fn window_quarters(&self) -> Range<i64> {
        self.start.quarter().0..quarter_ceil(self.planned_end).0
    }

    /// Quarters overlapping `[start, min(planned_end, cancel_time))`.
    pub fn effective_quarters(&self) -> Range<i64> {
        let end = quarter_ceil(self.effective_end()).0;
        self.start.quarter().0..end.max(self.start.quarter().0)
    }

    /// End of the window in which flights can still be held.
    pub fn effective_end(&self) -> TimePoint {
        match self.cancel_time {
            Some(c) => c.min(self.planned_end),
            None => self.planned_end,
        }
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel_time.is_some()
    }

    pub fn par(&self, which: ParSeries) -> &ParSchedule {
        match which {
            ParSeries::Initial => &self.initial_par,
            ParSeries::Final => &self.final_par,
        }
    }

    fn validate(&self) -> Result<(), LifecycleError> {
        let invalid = |reason: String| LifecycleError::InvalidProgram { gdp_key: self.gdp_key.clone(), reason };
        if self.release_time > self.start {
            return Err(invalid(format!("released at {} after its start {}", self.release_time.0, self.start.0)));
        }
        if self.start >= self.planned_end {
            return Err(invalid(format!("start {} is not before end {}", self.start.0, self.planned_end.0)));
        }
        if let Some(c) = self.cancel_time {
            if c > self.planned_end {
                return Err(invalid(format!("cancelled at {} after its planned end {}", c.0, self.planned_end.0)));
            }
        }
        for (name, par) in [("initial", &self.initial_par), ("final", &self.final_par)] {
            if par.first_quarter() > self.start.quarter() {
                return Err(invalid(format!("{name} rate schedule does not cover the program start")));
            }
        }
        Ok(())
    }
}

/// Merges advisories into one program per `gdp_key`.
///
/// Events are re-sorted by ADL time within each key, so input order inside a
/// key does not matter. Programs come back in order of first appearance of
/// their key. Revisions replace end time, start time, scope and cause
/// wholesale when present; a revised rate schedule overrides the previous one
/// from its first breakpoint onward.
pub fn assemble_programs(events: &[AdvisoryEvent]) -> Result<Vec<GdpProgram>, LifecycleError> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&AdvisoryEvent>> = HashMap::new();
    for e in events {
        groups
            .entry(e.gdp_key.as_str())
            .or_insert_with(|| {
                order.push(e.gdp_key.as_str());
                Vec::new()
            })
            .push(e);
    }

    let mut programs = Vec::with_capacity(order.len());
    for key in order {
        let mut group = groups.remove(key).expect("grouped key");
        group.sort_by_key(|e| e.adl_time);
        programs.push(assemble_one(key, &group)?);
    }
    check_overlaps(&programs)?;
    Ok(programs)
}

fn assemble_one(key: &str, events: &[&AdvisoryEvent]) -> Result<GdpProgram, LifecycleError> {
    let release = events[0];
    if release.kind != AdvisoryKind::Release {
        return Err(LifecycleError::OrphanEvent(key.to_string()));
    }
    let missing = |what: &str| LifecycleError::InvalidProgram {
        gdp_key: key.to_string(),
        reason: format!("release advisory lacks {what}"),
    };
    let initial_par = release.par.clone().ok_or_else(|| missing("a rate schedule"))?;
    let mut program = GdpProgram {
        gdp_key: key.to_string(),
        airport: release.airport,
        release_time: release.adl_time,
        revisions: Vec::new(),
        cancel_time: None,
        start: release.start.ok_or_else(|| missing("a start time"))?,
        planned_end: release.end.ok_or_else(|| missing("an end time"))?,
        final_par: initial_par.clone(),
        initial_par,
        scope: release.scope.clone().ok_or_else(|| missing("a scope"))?,
        cause: release.cause.ok_or_else(|| missing("a cause"))?,
    };

    for e in &events[1..] {
        if e.airport != program.airport {
            return Err(LifecycleError::AirportMismatch(key.to_string()));
        }
        if program.cancel_time.is_some() {
            return Err(LifecycleError::EventAfterCancel(key.to_string()));
        }
        match e.kind {
            AdvisoryKind::Release => return Err(LifecycleError::DuplicateRelease(key.to_string())),
            AdvisoryKind::Cancel => program.cancel_time = Some(e.adl_time),
            AdvisoryKind::Revision => {
                if let Some(start) = e.start {
                    program.start = start;
                }
                if let Some(end) = e.end {
                    program.planned_end = end;
                }
                if let Some(par) = &e.par {
                    program.final_par = program.final_par.overlay(par);
                }
                if let Some(scope) = &e.scope {
                    program.scope = scope.clone();
                }
                if let Some(cause) = e.cause {
                    program.cause = cause;
                }
                program.revisions.push((*e).clone());
            }
        }
    }
    program.validate()?;
    Ok(program)
}

fn check_overlaps(programs: &[GdpProgram]) -> Result<(), LifecycleError> {
    let mut by_airport: BTreeMap<AirportCode, Vec<&GdpProgram>> = BTreeMap::new();
    for p in programs {
        by_airport.entry(p.airport).or_default().push(p);
    }
    for (airport, mut list) in by_airport {
        list.sort_by_key(|p| (p.start, p.planned_end));
        for pair in list.windows(2) {
            if pair[1].start < pair[0].planned_end {
                return Err(LifecycleError::Overlap {
                    airport,
                    first: pair[0].gdp_key.clone(),
                    second: pair[1].gdp_key.clone(),
                });
            }
        }
    }
    Ok(())
}

pub fn program_times(p: &GdpProgram) -> LifecycleTimes {
    LifecycleTimes {
        et_hr: (p.planned_end - p.start) as f64 / 60.0,
        gt_hr: (p.start - p.release_time) as f64 / 60.0,
        ct_hr: p.cancel_time.map_or(0.0, |c| (p.planned_end - c) as f64 / 60.0),
        cnt_r: p.revisions.len(),
    }
}

/// Planned rate at quarter `q` from the chosen series.
pub fn par_at(p: &GdpProgram, q: QuarterIndex, which: ParSeries) -> Result<f64, LifecycleError> {
    if !p.window_quarters().contains(&q.0) {
        return Err(LifecycleError::OutOfWindow(q.0));
    }
    p.par(which).rate_at(q).ok_or(LifecycleError::OutOfWindow(q.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn t(h: i64, m: i64) -> TimePoint {
        TimePoint(h * 60 + m)
    }

    fn ewr() -> AirportCode {
        "EWR".parse().unwrap()
    }

    fn scope(codes: &[&str]) -> Scope {
        Scope { us: codes.iter().map(|c| c.parse().unwrap()).collect(), ca: BTreeSet::new() }
    }

    pub(crate) fn release(key: &str, adl: TimePoint, start: TimePoint, end: TimePoint, rate: f64) -> AdvisoryEvent {
        AdvisoryEvent {
            gdp_key: key.into(),
            airport: ewr(),
            kind: AdvisoryKind::Release,
            adl_time: adl,
            start: Some(start),
            end: Some(end),
            par: Some(ParSchedule::constant(start.quarter(), rate)),
            scope: Some(scope(&["ORD"])),
            cause: Some(Cause::Wind),
        }
    }

    fn revision(key: &str, adl: TimePoint) -> AdvisoryEvent {
        AdvisoryEvent {
            kind: AdvisoryKind::Revision,
            adl_time: adl,
            start: None,
            end: None,
            par: None,
            scope: None,
            cause: None,
            ..release(key, adl, adl, adl + 15, 1.0)
        }
    }

    fn cancel(key: &str, adl: TimePoint) -> AdvisoryEvent {
        AdvisoryEvent { kind: AdvisoryKind::Cancel, ..revision(key, adl) }
    }

    #[test]
    fn release_only() {
        let programs = assemble_programs(&[release("G1", t(12, 0), t(13, 0), t(16, 0), 8.0)]).unwrap();
        let p = &programs[0];
        assert_eq!(program_times(p).cnt_r, 0);
        assert_eq!(p.initial_par, p.final_par);
        assert!(p.cancel_time.is_none());
    }

    #[test]
    fn fig1_decomposition() {
        let mut rev1 = revision("G1", t(14, 0));
        rev1.end = Some(t(19, 0));
        let events = vec![
            cancel("G1", t(17, 30)),
            rev1,
            release("G1", t(12, 0), t(13, 30), t(18, 0), 8.0),
            revision("G1", t(15, 0)),
        ];
        let p = &assemble_programs(&events).unwrap()[0];
        assert_eq!(p.planned_end, t(19, 0));
        assert_eq!(p.cancel_time, Some(t(17, 30)));
        let times = program_times(p);
        assert_eq!(times, LifecycleTimes { et_hr: 5.5, gt_hr: 1.5, ct_hr: 1.5, cnt_r: 2 });
    }

    #[test]
    fn zero_gap_and_no_cancel() {
        let p = &assemble_programs(&[release("G1", t(13, 0), t(13, 0), t(15, 0), 8.0)]).unwrap()[0];
        let times = program_times(p);
        assert_eq!(times.gt_hr, 0.0);
        assert_eq!(times.ct_hr, 0.0);
        assert_eq!(times.et_hr * 4.0, p.window_quarters().count() as f64);
    }

    #[test]
    fn orphan_revision() {
        let events = vec![revision("G1", t(11, 0)), release("G1", t(12, 0), t(13, 0), t(16, 0), 8.0)];
        assert_eq!(assemble_programs(&events), Err(LifecycleError::OrphanEvent("G1".into())));
    }

    #[test]
    fn overlapping_programs_rejected() {
        let events =
            vec![release("G1", t(12, 0), t(13, 0), t(16, 0), 8.0), release("G2", t(14, 0), t(15, 0), t(18, 0), 8.0)];
        assert!(matches!(assemble_programs(&events), Err(LifecycleError::Overlap { .. })));
        let adjacent =
            vec![release("G1", t(12, 0), t(13, 0), t(16, 0), 8.0), release("G2", t(14, 0), t(16, 0), t(18, 0), 8.0)];
        assert!(assemble_programs(&adjacent).is_ok());
    }

    #[test]
    fn events_after_cancel_rejected() {
        let events = vec![
            release("G1", t(12, 0), t(13, 0), t(16, 0), 8.0),
            cancel("G1", t(14, 0)),
            revision("G1", t(14, 30)),
        ];
        assert_eq!(assemble_programs(&events), Err(LifecycleError::EventAfterCancel("G1".into())));
    }

    #[test]
    fn par_lookup() {
        let mut rev = revision("G1", t(14, 0));
        rev.par = Some(ParSchedule::constant(t(15, 0).quarter(), 10.0));
        let p = &assemble_programs(&[release("G1", t(12, 0), t(13, 0), t(17, 0), 8.0), rev]).unwrap()[0];
        assert_eq!(par_at(p, t(13, 15).quarter(), ParSeries::Initial), Ok(8.0));
        assert_eq!(par_at(p, t(14, 45).quarter(), ParSeries::Final), Ok(8.0));
        assert_eq!(par_at(p, t(15, 0).quarter(), ParSeries::Final), Ok(10.0));
        assert_eq!(par_at(p, t(16, 45).quarter(), ParSeries::Initial), Ok(8.0));
        assert_eq!(
            par_at(p, t(12, 45).quarter(), ParSeries::Final),
            Err(LifecycleError::OutOfWindow(t(12, 45).quarter().0))
        );
        assert!(par_at(p, t(17, 0).quarter(), ParSeries::Final).is_err());
    }

    #[test]
    fn revision_count_is_exact_and_order_independent() {
        let base = vec![
            release("G1", t(10, 0), t(12, 0), t(18, 0), 8.0),
            revision("G1", t(11, 0)),
            revision("G1", t(12, 30)),
            revision("G1", t(13, 0)),
            cancel("G1", t(15, 0)),
        ];
        let mut reversed = base.clone();
        reversed.reverse();
        let a = assemble_programs(&base).unwrap();
        let b = assemble_programs(&reversed).unwrap();
        assert_eq!(a, b);
        assert_eq!(program_times(&a[0]).cnt_r, 3);
    }
}
