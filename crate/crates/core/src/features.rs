//! Per-program covariates: lifecycle durations, scope, flight counts, cause
//! and airport indicators, planned-versus-observed rate differences and
//! execution deviations of held and exempt flights.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{prehold, FlightClass};
use crate::flightdata::{AirportCode, Cause, FlightRecord, IngestError, QuarterIndex};
use crate::lifecycle::{program_times, GdpProgram};
use crate::queueing::ExcessDelayResult;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("no acceptance rate recorded for quarter {0}")]
    MissingQuarter(i64),
    #[error("program {0} has no restricted flights, so its outcome is undefined")]
    NoRestrictedFlights(String),
}

macro_rules! feature_vector {
    ($($name:ident),* $(,)?) => {
        /// Covariates of one program, in the fixed column order of [`FEATURE_NAMES`].
        #[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
        pub struct FeatureVector {
            $(pub $name: f64,)*
        }

        pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [$(stringify!($name)),*];

        impl FeatureVector {
            pub fn values(&self) -> [f64; FEATURE_COUNT] {
                [$(self.$name),*]
            }

            pub fn from_values(values: &[f64; FEATURE_COUNT]) -> Self {
                let mut it = values.iter().copied();
                FeatureVector { $($name: it.next().expect("fixed length"),)* }
            }
        }
    };
}

pub const FEATURE_COUNT: usize = 41;

feature_vector!(
    et, gt, ct, cnt_r, sc_us_ete, sc_ca_ete, cnt_ef, cnt_if, cnt_cf, prehold, c_snow, c_lc, c_ts, c_rwy, d_arr,
    u_par_initial, s_par_initial, u_par_final, s_par_final, u_par_revise, s_par_revise, d_go_if, s_go_if, d_to_if,
    s_to_if, d_ete_if, s_ete_if, d_go_ex, s_go_ex, d_to_ef, s_to_ef, d_ete_ef, s_ete_ef, apt_bos, apt_jfk, apt_lga,
    apt_ord, apt_phl, apt_sea, apt_sfo, apt_others,
);

pub const OUTCOME_NAME: &str = "excess_per_rf_min";

/// Airports with their own indicator. The benchmark airport has none.
pub const NAMED_AIRPORTS: [(&str, &str); 7] = [
    ("BOS", "apt_bos"),
    ("JFK", "apt_jfk"),
    ("LGA", "apt_lga"),
    ("ORD", "apt_ord"),
    ("PHL", "apt_phl"),
    ("SEA", "apt_sea"),
    ("SFO", "apt_sfo"),
];
pub const BENCHMARK_AIRPORT: &str = "EWR";
pub const DEFAULT_OTHERS_THRESHOLD: usize = 52;

/// Indicator columns, which are never standardized.
pub fn is_dummy(name: &str) -> bool {
    name.starts_with("c_") || name.starts_with("apt_")
}

/// Column receiving the airport indicator, or `None` for the benchmark.
/// Airports with fewer than `threshold` programs fall into `apt_others`.
pub fn airport_dummy(airport: &AirportCode, program_count: usize, threshold: usize) -> Option<&'static str> {
    if airport.as_str() == BENCHMARK_AIRPORT {
        return None;
    }
    if program_count < threshold {
        return Some("apt_others");
    }
    Some(NAMED_AIRPORTS.iter().find(|(code, _)| *code == airport.as_str()).map_or("apt_others", |(_, col)| col))
}

/// Mean and population standard deviation (Welford). `None` when empty.
pub fn mean_std(xs: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for x in xs {
        n += 1;
        let delta = x - mean;
        mean += delta / n as f64;
        m2 += delta * (x - mean);
    }
    (n > 0).then(|| (mean, (m2 / n as f64).max(0.0).sqrt()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParStats {
    pub u_par_initial: f64,
    pub s_par_initial: f64,
    pub u_par_final: f64,
    pub s_par_final: f64,
    pub u_par_revise: f64,
    pub s_par_revise: f64,
}

/// Differences between the observed rate and the planned rates over the
/// effective window: observed - initial, observed - final, initial - final.
pub fn par_stats(p: &GdpProgram, arr_rate: impl Fn(QuarterIndex) -> Option<f64>) -> Result<ParStats, FeatureError> {
    let mut initial = Vec::new();
    let mut last = Vec::new();
    let mut revise = Vec::new();
    for q in p.effective_quarters().map(QuarterIndex) {
        let arr = arr_rate(q).ok_or(FeatureError::MissingQuarter(q.0))?;
        let i = p.initial_par.rate_at(q).ok_or(FeatureError::MissingQuarter(q.0))?;
        let f = p.final_par.rate_at(q).ok_or(FeatureError::MissingQuarter(q.0))?;
        initial.push(arr - i);
        last.push(arr - f);
        revise.push(i - f);
    }
    let stat = |v: Vec<f64>| mean_std(v).unwrap_or((0.0, 0.0));
    let (u_par_initial, s_par_initial) = stat(initial);
    let (u_par_final, s_par_final) = stat(last);
    let (u_par_revise, s_par_revise) = stat(revise);
    Ok(ParStats { u_par_initial, s_par_initial, u_par_final, s_par_final, u_par_revise, s_par_revise })
}

/// Execution deviations (minutes) of in-scope and exempt flights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeVariation {
    pub d_go_if: f64,
    pub s_go_if: f64,
    pub d_to_if: f64,
    pub s_to_if: f64,
    pub d_ete_if: f64,
    pub s_ete_if: f64,
    pub d_go_ex: f64,
    pub s_go_ex: f64,
    pub d_to_ef: f64,
    pub s_to_ef: f64,
    pub d_ete_ef: f64,
    pub s_ete_ef: f64,
    pub empty_in_scope: bool,
    pub empty_exempt: bool,
}

/// In-scope flights: gate-out against the EDCT gate-out (EDCT wheels-off
/// less unimpeded taxi-out), taxi-out against unimpeded, airborne against
/// ETE. Exempt flights: gate-out against the flight-plan gate-out, and the
/// same taxi-out and airborne deviations. Cancelled flights are skipped; an
/// empty class yields zeros and sets its flag.
pub fn time_variation_stats<'a>(flights: impl IntoIterator<Item = (&'a FlightRecord, FlightClass)>) -> TimeVariation {
    let mut held: [Vec<f64>; 3] = Default::default();
    let mut exempt: [Vec<f64>; 3] = Default::default();
    for (f, class) in flights {
        let Some(a) = f.actual else { continue };
        let to = (a.taxi_out_min() - f.unimpeded_taxi_out_min) as f64;
        let ete = (a.airborne_min() - f.ete_min) as f64;
        match class {
            FlightClass::InScope => {
                let Some(edct) = f.edct_wheels_off else { continue };
                held[0].push((a.gate_out - (edct - f.unimpeded_taxi_out_min)) as f64);
                held[1].push(to);
                held[2].push(ete);
            }
            FlightClass::Exempt => {
                exempt[0].push((a.gate_out - f.fp_gate_out) as f64);
                exempt[1].push(to);
                exempt[2].push(ete);
            }
            FlightClass::CancelDelay | FlightClass::Uninvolved => {}
        }
    }
    let stat = |v: &Vec<f64>| mean_std(v.iter().copied()).unwrap_or((0.0, 0.0));
    let (d_go_if, s_go_if) = stat(&held[0]);
    let (d_to_if, s_to_if) = stat(&held[1]);
    let (d_ete_if, s_ete_if) = stat(&held[2]);
    let (d_go_ex, s_go_ex) = stat(&exempt[0]);
    let (d_to_ef, s_to_ef) = stat(&exempt[1]);
    let (d_ete_ef, s_ete_ef) = stat(&exempt[2]);
    TimeVariation {
        d_go_if,
        s_go_if,
        d_to_if,
        s_to_if,
        d_ete_if,
        s_ete_if,
        d_go_ex,
        s_go_ex,
        d_to_ef,
        s_to_ef,
        d_ete_ef,
        s_ete_ef,
        empty_in_scope: held[0].is_empty(),
        empty_exempt: exempt[0].is_empty(),
    }
}

/// Context shared by every program of a run.
pub struct ExtractContext<'a> {
    /// Recorded acceptance rate at the program airport.
    pub arr_rate: &'a dyn Fn(QuarterIndex) -> Option<f64>,
    /// Mean recorded rate of the program airport over the whole file.
    pub annual_mean_rate: f64,
    /// Programs per airport in the data set.
    pub program_counts: &'a HashMap<AirportCode, usize>,
    pub others_threshold: usize,
}

/// One features.csv row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub gdp_key: String,
    pub airport: AirportCode,
    pub features: FeatureVector,
    pub outcome: f64,
    /// Notes on defaulted values, e.g. an empty flight class.
    #[serde(default)]
    pub flags: Vec<String>,
}

/// Assembles the covariates and outcome of one program from its classified
/// flights (cancelled flights are ignored) and its measured excess delay.
pub fn extract(
    p: &GdpProgram,
    classified: &[(&FlightRecord, FlightClass)],
    excess: &ExcessDelayResult,
    ctx: &ExtractContext,
) -> Result<FeatureRow, FeatureError> {
    let outcome = excess.per_rf().map_err(|_| FeatureError::NoRestrictedFlights(p.gdp_key.clone()))?;
    let operated: Vec<(&FlightRecord, FlightClass)> =
        classified.iter().filter(|(f, _)| !f.cancelled).map(|(f, c)| (*f, *c)).collect();
    let mut flags = Vec::new();
    let times = program_times(p);
    let count = |class: FlightClass| operated.iter().filter(|(_, c)| *c == class).count() as f64;

    let mut us_ete = Vec::new();
    let mut ca_ete = Vec::new();
    for (f, class) in &operated {
        if *class == FlightClass::InScope {
            if p.scope.us.contains(&f.origin) {
                us_ete.push(f.ete_min as f64 / 60.0);
            } else if p.scope.ca.contains(&f.origin) {
                ca_ete.push(f.ete_min as f64 / 60.0);
            }
        }
    }
    let mean_or_flag = |v: &[f64], flag: &str, flags: &mut Vec<String>| match mean_std(v.iter().copied()) {
        Some((m, _)) => m,
        None => {
            flags.push(flag.to_string());
            0.0
        }
    };
    let sc_us_ete = mean_or_flag(&us_ete, "no_us_in_scope_flights", &mut flags);
    let sc_ca_ete = mean_or_flag(&ca_ete, "no_ca_in_scope_flights", &mut flags);

    let mut d_arr_sum = 0.0;
    let quarters = p.effective_quarters();
    let n_quarters = quarters.clone().count();
    for q in quarters.map(QuarterIndex) {
        d_arr_sum += (ctx.arr_rate)(q).ok_or(FeatureError::MissingQuarter(q.0))? - ctx.annual_mean_rate;
    }
    let d_arr = if n_quarters > 0 { d_arr_sum / n_quarters as f64 } else { 0.0 };
    let par = par_stats(p, ctx.arr_rate)?;
    let tv = time_variation_stats(operated.iter().copied());
    if tv.empty_in_scope {
        flags.push("empty_class:in_scope".into());
    }
    if tv.empty_exempt {
        flags.push("empty_class:exempt".into());
    }

    let cause = |c: Cause| (p.cause == c) as u8 as f64;
    let mut features = FeatureVector {
        et: times.et_hr,
        gt: times.gt_hr,
        ct: times.ct_hr,
        cnt_r: times.cnt_r as f64,
        sc_us_ete,
        sc_ca_ete,
        cnt_ef: count(FlightClass::Exempt),
        cnt_if: count(FlightClass::InScope),
        cnt_cf: count(FlightClass::CancelDelay),
        prehold: prehold(operated.iter().copied(), p),
        c_snow: cause(Cause::SnowIce),
        c_lc: cause(Cause::LowCeiling),
        c_ts: cause(Cause::Thunderstorms),
        c_rwy: cause(Cause::RunwayConstruction),
        d_arr,
        u_par_initial: par.u_par_initial,
        s_par_initial: par.s_par_initial,
        u_par_final: par.u_par_final,
        s_par_final: par.s_par_final,
        u_par_revise: par.u_par_revise,
        s_par_revise: par.s_par_revise,
        d_go_if: tv.d_go_if,
        s_go_if: tv.s_go_if,
        d_to_if: tv.d_to_if,
        s_to_if: tv.s_to_if,
        d_ete_if: tv.d_ete_if,
        s_ete_if: tv.s_ete_if,
        d_go_ex: tv.d_go_ex,
        s_go_ex: tv.s_go_ex,
        d_to_ef: tv.d_to_ef,
        s_to_ef: tv.s_to_ef,
        d_ete_ef: tv.d_ete_ef,
        s_ete_ef: tv.s_ete_ef,
        ..FeatureVector::default()
    };
    let n_programs = ctx.program_counts.get(&p.airport).copied().unwrap_or(0);
    match airport_dummy(&p.airport, n_programs, ctx.others_threshold) {
        Some("apt_bos") => features.apt_bos = 1.0,
        Some("apt_jfk") => features.apt_jfk = 1.0,
        Some("apt_lga") => features.apt_lga = 1.0,
        Some("apt_ord") => features.apt_ord = 1.0,
        Some("apt_phl") => features.apt_phl = 1.0,
        Some("apt_sea") => features.apt_sea = 1.0,
        Some("apt_sfo") => features.apt_sfo = 1.0,
        Some(_) => features.apt_others = 1.0,
        None => {}
    }
    Ok(FeatureRow { gdp_key: p.gdp_key.clone(), airport: p.airport, features, outcome, flags })
}

pub fn features_header() -> Vec<&'static str> {
    let mut h = vec!["gdp_key", "airport"];
    h.extend(FEATURE_NAMES);
    h.push(OUTCOME_NAME);
    h
}

pub fn write_features<W: Write>(out: W, rows: &[FeatureRow]) -> Result<(), IngestError> {
    let io = |e: csv::Error| IngestError::Io(e.to_string());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(features_header()).map_err(io)?;
    for r in rows {
        let mut record = vec![r.gdp_key.clone(), r.airport.to_string()];
        record.extend(r.features.values().iter().map(f64::to_string));
        record.push(r.outcome.to_string());
        w.write_record(&record).map_err(io)?;
    }
    w.flush().map_err(|e| IngestError::Io(e.to_string()))
}

pub fn read_features<R: Read>(input: R) -> Result<Vec<FeatureRow>, IngestError> {
    let expected = features_header();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers().map_err(IngestError::from_csv)?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(IngestError::HeaderMismatch {
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(IngestError::from_csv)?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |column: &str, reason: String| IngestError::MalformedRow { line, column: column.into(), reason };
        let num = |idx: usize| -> Result<f64, IngestError> {
            let v: f64 = record[idx].parse().map_err(|e| bad(expected[idx], format!("`{}`: {e}", &record[idx])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(expected[idx], "value is not finite".into()))
            }
        };
        let mut values = [0.0; FEATURE_COUNT];
        for (k, v) in values.iter_mut().enumerate() {
            *v = num(k + 2)?;
        }
        rows.push(FeatureRow {
            gdp_key: record[0].to_string(),
            airport: record[1].parse().map_err(|e: String| bad("airport", e))?,
            features: FeatureVector::from_values(&values),
            outcome: num(FEATURE_COUNT + 2)?,
            flags: Vec::new(),
        });
    }
    Ok(rows)
}
