//! Per-program excess rows, horizon notes and the run summary.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::features::{mean_std, FeatureRow};
use crate::flightdata::{AirportCode, IngestError};
use crate::queueing::ExcessDelayResult;

use super::measure::Measurement;
use super::stages::StageError;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

pub const EXCESS_HEADER: [&str; 6] =
    ["gdp_key", "airport", "excess_delay_min", "excess_per_rf_min", "airborne_increase_min", "rf_count"];

pub const HORIZON_HEADER: [&str; 5] =
    ["gdp_key", "first_quarter", "quarters", "drain_quarters", "fallback_quarters"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessRow {
    pub gdp_key: String,
    pub airport: AirportCode,
    pub result: ExcessDelayResult,
}

impl From<&Measurement> for ExcessRow {
    fn from(m: &Measurement) -> Self {
        ExcessRow { gdp_key: m.gdp_key.clone(), airport: m.airport, result: m.result }
    }
}

fn csv_io(e: csv::Error) -> IngestError {
    IngestError::Io(e.to_string())
}

pub fn write_excess<W: Write>(out: W, rows: &[ExcessRow]) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(EXCESS_HEADER).map_err(csv_io)?;
    for r in rows {
        w.write_record([
            r.gdp_key.clone(),
            r.airport.to_string(),
            r.result.excess_delay_min.to_string(),
            r.result.excess_per_rf_min.map(|v| v.to_string()).unwrap_or_default(),
            r.result.airborne_increase_min.to_string(),
            r.result.rf_count.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush().map_err(|e| IngestError::Io(e.to_string()))
}

fn checked_reader<R: Read>(input: R, header: &[&str]) -> Result<csv::Reader<R>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let found = rdr.headers().map_err(IngestError::from_csv)?;
    if found.iter().ne(header.iter().copied()) {
        return Err(IngestError::HeaderMismatch {
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(rdr)
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, header: &[&str]) -> Result<T, IngestError>
where
    T::Err: std::fmt::Display,
{
    record[idx].parse().map_err(|e: T::Err| IngestError::MalformedRow {
        line: record.position().map_or(0, |p| p.line()),
        column: header[idx].into(),
        reason: format!("`{}`: {e}", &record[idx]),
    })
}

pub fn read_excess<R: Read>(input: R) -> Result<Vec<ExcessRow>, IngestError> {
    let mut rdr = checked_reader(input, &EXCESS_HEADER)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(IngestError::from_csv)?;
        let h = &EXCESS_HEADER;
        rows.push(ExcessRow {
            gdp_key: record[0].to_string(),
            airport: field(&record, 1, h)?,
            result: ExcessDelayResult {
                excess_delay_min: field(&record, 2, h)?,
                excess_per_rf_min: if record[3].is_empty() { None } else { Some(field(&record, 3, h)?) },
                airborne_increase_min: field(&record, 4, h)?,
                rf_count: field(&record, 5, h)?,
            },
        });
    }
    Ok(rows)
}

/// How far each program's diagram reached and how much of it ran on
/// fallback capacity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub gdp_key: String,
    pub first_quarter: i64,
    pub quarters: usize,
    pub drain_quarters: usize,
    pub fallback_quarters: usize,
}

impl From<&Measurement> for HorizonRow {
    fn from(m: &Measurement) -> Self {
        HorizonRow {
            gdp_key: m.gdp_key.clone(),
            first_quarter: m.diagram.first_quarter.0,
            quarters: m.diagram.len(),
            drain_quarters: m.diagram.drain_quarters,
            fallback_quarters: m.diagram.fallback_quarters,
        }
    }
}

pub fn write_horizons<W: Write>(out: W, rows: &[HorizonRow]) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HORIZON_HEADER).map_err(csv_io)?;
    for r in rows {
        w.write_record([
            r.gdp_key.clone(),
            r.first_quarter.to_string(),
            r.quarters.to_string(),
            r.drain_quarters.to_string(),
            r.fallback_quarters.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush().map_err(|e| IngestError::Io(e.to_string()))
}

pub fn read_horizons<R: Read>(input: R) -> Result<Vec<HorizonRow>, IngestError> {
    let mut rdr = checked_reader(input, &HORIZON_HEADER)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(IngestError::from_csv)?;
        let h = &HORIZON_HEADER;
        rows.push(HorizonRow {
            gdp_key: record[0].to_string(),
            first_quarter: field(&record, 1, h)?,
            quarters: field(&record, 2, h)?,
            drain_quarters: field(&record, 3, h)?,
            fallback_quarters: field(&record, 4, h)?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramNote {
    pub gdp_key: String,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub programs_measured: usize,
    pub feature_rows: usize,
    /// Excess delay per restricted flight (min/flt) across programs with at
    /// least one restricted flight.
    pub excess_per_rf_min: Option<MeanStd>,
    pub excess_delay_total_min: i64,
    pub airborne_increase_total_min: i64,
    pub restricted_flights: usize,
    pub notes: Vec<ProgramNote>,
    pub stage_errors: Vec<StageError>,
}

/// Headline statistics plus every per-program note: capacity fallback
/// beyond the recorded rates, programs left out of the regression and
/// defaulted features.
pub fn summarize(
    excess: &[ExcessRow],
    horizons: &[HorizonRow],
    features: &[FeatureRow],
    skipped: &[(String, String)],
    stage_errors: &[StageError],
) -> Summary {
    let mut notes = Vec::new();
    for h in horizons.iter().filter(|h| h.fallback_quarters > 0) {
        notes.push(ProgramNote {
            gdp_key: h.gdp_key.clone(),
            note: format!("annual mean rate used for {} quarter(s) beyond recorded rates", h.fallback_quarters),
        });
    }
    for (key, why) in skipped {
        notes.push(ProgramNote { gdp_key: key.clone(), note: format!("excluded from regression: {why}") });
    }
    for f in features {
        for flag in &f.flags {
            notes.push(ProgramNote { gdp_key: f.gdp_key.clone(), note: flag.clone() });
        }
    }
    notes.sort_by(|a, b| a.gdp_key.cmp(&b.gdp_key).then_with(|| a.note.cmp(&b.note)));
    let per_rf: Vec<f64> = excess.iter().filter_map(|r| r.result.excess_per_rf_min).collect();
    Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        programs_measured: excess.len(),
        feature_rows: features.len(),
        excess_per_rf_min: mean_std(per_rf.iter().copied()).map(|(mean, std)| MeanStd { n: per_rf.len(), mean, std }),
        excess_delay_total_min: excess.iter().map(|r| r.result.excess_delay_min).sum(),
        airborne_increase_total_min: excess.iter().map(|r| r.result.airborne_increase_min).sum(),
        restricted_flights: excess.iter().map(|r| r.result.rf_count).sum(),
        notes,
        stage_errors: stage_errors.to_vec(),
    }
}
