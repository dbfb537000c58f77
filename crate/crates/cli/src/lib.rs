//! File-level orchestration behind the `gdpx` command: each stage reads its
//! inputs from disk, writes its artifacts into the output directory, and
//! reports stage-tagged errors instead of aborting on the first problem.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use gdpx_core::classifier::{read_classified, write_classified, ClassifiedFlight, ClassifierConfig, HeldBeforeRule};
use gdpx_core::features::{read_features, write_features, FeatureRow, DEFAULT_OTHERS_THRESHOLD};
use gdpx_core::flightdata::{
    scan_advisories, scan_flights, scan_quarters, CauseLookup, Epoch, FlightRecord, IngestError, Parsed,
    QuarterHourRecord, DEFAULT_TAXI_IN_MIN,
};
use gdpx_core::lifecycle::{assemble_programs, GdpProgram};
use gdpx_core::pipeline::fit::{run_fit, write_importance, FitConfig};
use gdpx_core::pipeline::measure::{CapacityData, FlightIndex, Measurement};
use gdpx_core::pipeline::report::{
    read_excess, read_horizons, summarize, write_excess, write_horizons, ExcessRow, HorizonRow,
};
use gdpx_core::pipeline::stages::{classify_all, features_all, measure_all, StageError};
use gdpx_core::pipeline::svg::render_diagram_svg;

pub const CLASSIFIED_FILE: &str = "classified_flights.csv";
pub const EXCESS_FILE: &str = "excess.csv";
pub const HORIZONS_FILE: &str = "horizons.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const FEATURE_NOTES_FILE: &str = "feature_notes.csv";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const IMPORTANCE_FILE: &str = "importance.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SVG_DIR: &str = "svg";

#[derive(Clone, Debug)]
pub struct InputPaths {
    pub flights: PathBuf,
    pub quarters: PathBuf,
    pub advisories: PathBuf,
    pub cause_lookup: Option<PathBuf>,
}

impl InputPaths {
    /// The three standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        InputPaths {
            flights: dir.join("flights.csv"),
            quarters: dir.join("quarters.csv"),
            advisories: dir.join("advisories.csv"),
            cause_lookup: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub inputs: InputPaths,
    pub out: PathBuf,
    pub epoch: Epoch,
    pub taxi_in_min: i64,
    pub held_before: HeldBeforeRule,
    pub others_threshold: usize,
    pub fit: FitConfig,
    pub svg: bool,
}

impl RunConfig {
    pub fn new(inputs: InputPaths, out: PathBuf) -> Self {
        RunConfig {
            inputs,
            out,
            epoch: Epoch::default(),
            taxi_in_min: DEFAULT_TAXI_IN_MIN,
            held_before: HeldBeforeRule::default(),
            others_threshold: DEFAULT_OTHERS_THRESHOLD,
            fit: FitConfig::default(),
            svg: false,
        }
    }

    fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig { taxi_in_min: self.taxi_in_min, held_before: self.held_before }
    }
}

/// Stage errors collected over a command. The command succeeded iff empty.
#[derive(Debug, Default)]
pub struct Errors(pub Vec<StageError>);

impl Errors {
    fn push(&mut self, stage: &str, record: Option<String>, message: impl ToString) {
        self.0.push(StageError::new(stage, record, message));
    }

    fn extend(&mut self, errors: Vec<StageError>) {
        self.0.extend(errors);
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn open(path: &Path) -> Result<BufReader<File>, String> {
    File::open(path).map(BufReader::new).map_err(|e| format!("{}: {e}", path.display()))
}

fn row_record(e: &IngestError) -> Option<String> {
    match e {
        IngestError::MalformedRow { line, .. } | IngestError::DuplicateKey { line, .. } => Some(format!("line {line}")),
        IngestError::InvariantViolation { flight_id, .. } => Some(flight_id.clone()),
        _ => None,
    }
}

/// Lenient read: bad rows become errors, good rows are kept.
fn ingest<T>(
    stage: &str,
    path: &Path,
    errors: &mut Errors,
    scan: impl FnOnce(BufReader<File>) -> Result<Parsed<T>, IngestError>,
) -> Option<Vec<T>> {
    let reader = match open(path) {
        Ok(r) => r,
        Err(e) => {
            errors.push(stage, None, e);
            return None;
        }
    };
    match scan(reader) {
        Ok(parsed) => {
            for e in &parsed.rejected {
                errors.push(stage, row_record(e), e);
            }
            Some(parsed.records)
        }
        Err(e) => {
            errors.push(stage, Some(path.display().to_string()), e);
            None
        }
    }
}

pub fn load_flights(cfg: &RunConfig, errors: &mut Errors) -> Option<Vec<FlightRecord>> {
    ingest("ingest/flights", &cfg.inputs.flights, errors, |r| scan_flights(r, &cfg.epoch))
}

pub fn load_quarters(cfg: &RunConfig, errors: &mut Errors) -> Option<Vec<QuarterHourRecord>> {
    ingest("ingest/quarters", &cfg.inputs.quarters, errors, |r| scan_quarters(r, &cfg.epoch))
}

pub fn load_programs(cfg: &RunConfig, errors: &mut Errors) -> Option<Vec<GdpProgram>> {
    let causes = match &cfg.inputs.cause_lookup {
        None => CauseLookup::default(),
        Some(path) => match open(path).map_err(IngestError::Io).and_then(CauseLookup::from_csv) {
            Ok(c) => c,
            Err(e) => {
                errors.push("ingest/cause_lookup", Some(path.display().to_string()), e);
                return None;
            }
        },
    };
    let events = ingest("ingest/advisories", &cfg.inputs.advisories, errors, |r| scan_advisories(r, &cfg.epoch, &causes))?;
    match assemble_programs(&events) {
        Ok(p) => Some(p),
        Err(e) => {
            errors.push("lifecycle", None, e);
            None
        }
    }
}

fn write_file(
    dir: &Path,
    name: &str,
    errors: &mut Errors,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<(), String>,
) {
    let path = dir.join(name);
    let result = fs::create_dir_all(dir)
        .and_then(|_| File::create(&path))
        .map_err(|e| e.to_string())
        .and_then(|f| {
            let mut w = BufWriter::with_capacity(1 << 20, f);
            body(&mut w)?;
            w.flush().map_err(|e| e.to_string())
        });
    if let Err(e) = result {
        errors.push(&format!("write/{name}"), Some(path.display().to_string()), e);
    }
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T, errors: &mut Errors) {
    write_file(dir, name, errors, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| e.to_string())?;
        w.write_all(b"\n").map_err(|e| e.to_string())
    });
}

fn read_artifact<T>(
    stage: &str,
    dir: &Path,
    name: &str,
    errors: &mut Errors,
    read: impl FnOnce(BufReader<File>) -> Result<T, IngestError>,
) -> Option<T> {
    let path = dir.join(name);
    match open(&path) {
        Err(e) => {
            errors.push(stage, None, e);
            None
        }
        Ok(r) => read(r).map_err(|e| errors.push(stage, Some(path.display().to_string()), e)).ok(),
    }
}

/// Shared parsed inputs of the data stages.
struct Loaded {
    flights: Vec<FlightRecord>,
    programs: Vec<GdpProgram>,
    capacity: Option<CapacityData>,
}

fn load(cfg: &RunConfig, need_quarters: bool, errors: &mut Errors) -> Option<Loaded> {
    let flights = load_flights(cfg, errors);
    let programs = load_programs(cfg, errors);
    let capacity = if need_quarters { Some(CapacityData::from_records(&load_quarters(cfg, errors)?)) } else { None };
    Some(Loaded { flights: flights?, programs: programs?, capacity })
}

fn classify_stage(cfg: &RunConfig, data: &Loaded, index: &FlightIndex, errors: &mut Errors) -> Vec<ClassifiedFlight> {
    let (rows, errs) = classify_all(&data.programs, index, &cfg.classifier());
    errors.extend(errs);
    write_file(&cfg.out, CLASSIFIED_FILE, errors, |w| write_classified(w, &rows).map_err(|e| e.to_string()));
    log::info!("classified {} flight-program pairs over {} programs", rows.len(), data.programs.len());
    rows
}

fn measure_stage(
    cfg: &RunConfig,
    data: &Loaded,
    classified: &[ClassifiedFlight],
    index: &FlightIndex,
    errors: &mut Errors,
) -> (Vec<ExcessRow>, Vec<HorizonRow>) {
    let capacity = data.capacity.as_ref().expect("measure loads quarters");
    let (measured, errs) = measure_all(&data.programs, classified, index, capacity);
    errors.extend(errs);
    let excess: Vec<ExcessRow> = measured.iter().map(ExcessRow::from).collect();
    let horizons: Vec<HorizonRow> = measured.iter().map(HorizonRow::from).collect();
    write_file(&cfg.out, EXCESS_FILE, errors, |w| write_excess(w, &excess).map_err(|e| e.to_string()));
    write_file(&cfg.out, HORIZONS_FILE, errors, |w| write_horizons(w, &horizons).map_err(|e| e.to_string()));
    if cfg.svg {
        write_svgs(&cfg.out.join(SVG_DIR), &measured, errors);
    }
    log::info!("measured {} programs", measured.len());
    (excess, horizons)
}

fn write_svgs(dir: &Path, measured: &[Measurement], errors: &mut Errors) {
    for m in measured {
        let title = format!("{} excess {} min, {} restricted flights", m.gdp_key, m.result.excess_delay_min, m.result.rf_count);
        let svg = render_diagram_svg(&m.diagram, &title);
        write_file(dir, &format!("{}.svg", m.gdp_key), errors, |w| w.write_all(svg.as_bytes()).map_err(|e| e.to_string()));
    }
}

fn features_stage(
    cfg: &RunConfig,
    data: &Loaded,
    classified: &[ClassifiedFlight],
    excess: &[ExcessRow],
    index: &FlightIndex,
    errors: &mut Errors,
) -> (Vec<FeatureRow>, Vec<(String, String)>) {
    let capacity = data.capacity.as_ref().expect("features loads quarters");
    let by_key: HashMap<String, _> = excess.iter().map(|r| (r.gdp_key.clone(), r.result)).collect();
    let stage = features_all(&data.programs, classified, &by_key, index, capacity, cfg.others_threshold);
    errors.extend(stage.errors);
    let mut notes = stage.skipped.clone();
    for r in &stage.rows {
        notes.extend(r.flags.iter().map(|f| (r.gdp_key.clone(), f.clone())));
    }
    write_file(&cfg.out, FEATURES_FILE, errors, |w| write_features(w, &stage.rows).map_err(|e| e.to_string()));
    write_file(&cfg.out, FEATURE_NOTES_FILE, errors, |w| write_notes(w, &notes));
    log::info!("extracted {} feature rows, {} programs skipped", stage.rows.len(), stage.skipped.len());
    (stage.rows, stage.skipped)
}

fn write_notes<W: Write>(w: W, notes: &[(String, String)]) -> Result<(), String> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["gdp_key", "note"]).map_err(|e| e.to_string())?;
    for (k, n) in notes {
        w.write_record([k, n]).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn read_notes(r: BufReader<File>) -> Result<Vec<(String, String)>, IngestError> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| IngestError::Io(e.to_string()))?;
            Ok((rec[0].to_string(), rec[1].to_string()))
        })
        .collect()
}

fn fit_stage(cfg: &RunConfig, rows: &[FeatureRow], errors: &mut Errors) {
    match run_fit(rows, &cfg.fit) {
        Ok(out) => {
            write_json(&cfg.out, FIT_REPORT_FILE, &out.report, errors);
            write_file(&cfg.out, IMPORTANCE_FILE, errors, |w| {
                write_importance(w, &out.importance).map_err(|e| e.to_string())
            });
        }
        Err(e) => errors.push("fit", None, e),
    }
}

/// Feature rows with their notes re-attached as flags.
fn attach_flags(rows: &mut [FeatureRow], notes: &[(String, String)]) -> Vec<(String, String)> {
    let mut skipped = Vec::new();
    let index: HashMap<&str, usize> = rows.iter().enumerate().map(|(i, r)| (r.gdp_key.as_str(), i)).collect();
    let mut flags: Vec<(usize, String)> = Vec::new();
    for (k, n) in notes {
        match index.get(k.as_str()) {
            Some(&i) => flags.push((i, n.clone())),
            None => skipped.push((k.clone(), n.clone())),
        }
    }
    for (i, n) in flags {
        rows[i].flags.push(n);
    }
    skipped
}

pub fn classify(cfg: &RunConfig) -> Errors {
    let mut errors = Errors::default();
    if let Some(data) = load(cfg, false, &mut errors) {
        let index = FlightIndex::new(&data.flights, cfg.taxi_in_min);
        classify_stage(cfg, &data, &index, &mut errors);
    }
    errors
}

pub fn measure(cfg: &RunConfig) -> Errors {
    let mut errors = Errors::default();
    let classified = read_artifact("measure", &cfg.out, CLASSIFIED_FILE, &mut errors, read_classified);
    if let (Some(data), Some(classified)) = (load(cfg, true, &mut errors), classified) {
        let index = FlightIndex::new(&data.flights, cfg.taxi_in_min);
        measure_stage(cfg, &data, &classified, &index, &mut errors);
    }
    errors
}

pub fn features(cfg: &RunConfig) -> Errors {
    let mut errors = Errors::default();
    let classified = read_artifact("features", &cfg.out, CLASSIFIED_FILE, &mut errors, read_classified);
    let excess = read_artifact("features", &cfg.out, EXCESS_FILE, &mut errors, read_excess);
    if let (Some(data), Some(classified), Some(excess)) = (load(cfg, true, &mut errors), classified, excess) {
        let index = FlightIndex::new(&data.flights, cfg.taxi_in_min);
        features_stage(cfg, &data, &classified, &excess, &index, &mut errors);
    }
    errors
}

pub fn fit(cfg: &RunConfig) -> Errors {
    let mut errors = Errors::default();
    if let Some(rows) = read_artifact("fit", &cfg.out, FEATURES_FILE, &mut errors, read_features) {
        fit_stage(cfg, &rows, &mut errors);
    }
    errors
}

/// Rebuilds summary.json from the artifacts in the output directory.
pub fn report(cfg: &RunConfig) -> Errors {
    let mut errors = Errors::default();
    let excess = read_artifact("report", &cfg.out, EXCESS_FILE, &mut errors, read_excess);
    let horizons = read_artifact("report", &cfg.out, HORIZONS_FILE, &mut errors, read_horizons);
    let features = read_artifact("report", &cfg.out, FEATURES_FILE, &mut errors, read_features);
    let notes = read_artifact("report", &cfg.out, FEATURE_NOTES_FILE, &mut errors, read_notes);
    let mut rows = features.unwrap_or_default();
    let skipped = attach_flags(&mut rows, &notes.unwrap_or_default());
    let summary = summarize(&excess.unwrap_or_default(), &horizons.unwrap_or_default(), &rows, &skipped, &errors.0);
    write_json(&cfg.out, SUMMARY_FILE, &summary, &mut errors);
    errors
}

/// Every stage in sequence. summary.json is written even when an early
/// stage fails, and lists every stage error.
pub fn run_pipeline(cfg: &RunConfig) -> Errors {
    let mut errors = Errors::default();
    let mut excess = Vec::new();
    let mut horizons = Vec::new();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    if let Some(data) = load(cfg, true, &mut errors) {
        let index = FlightIndex::new(&data.flights, cfg.taxi_in_min);
        let classified = classify_stage(cfg, &data, &index, &mut errors);
        (excess, horizons) = measure_stage(cfg, &data, &classified, &index, &mut errors);
        (rows, skipped) = features_stage(cfg, &data, &classified, &excess, &index, &mut errors);
        fit_stage(cfg, &rows, &mut errors);
    }
    let summary = summarize(&excess, &horizons, &rows, &skipped, &errors.0);
    write_json(&cfg.out, SUMMARY_FILE, &summary, &mut errors);
    errors
}
