use std::collections::HashMap;

use gdpx_core::classifier::ClassifierConfig;
use gdpx_core::features::FEATURE_COUNT;
use gdpx_core::flightdata::{
    parse_advisories, parse_flights, parse_quarters, CauseLookup, Epoch, DEFAULT_TAXI_IN_MIN,
};
use gdpx_core::lifecycle::assemble_programs;
use gdpx_core::pipeline::fit::{run_fit, FitConfig};
use gdpx_core::pipeline::measure::{CapacityData, FlightIndex};
use gdpx_core::pipeline::stages::{classify_all, features_all, measure_all};
use gdpx_core::synth::{generate_scenario, Scenario, ScenarioConfig};

fn scenario(days: u32, seed: u64) -> Scenario {
    let cfg = ScenarioConfig { days, seed, ..ScenarioConfig::default() };
    generate_scenario(&cfg).unwrap()
}

#[test]
fn classifier_recovers_planted_delays_and_measurement_matches_truth() {
    let s = scenario(20, 3);
    let programs = assemble_programs(&s.advisories).unwrap();
    assert_eq!(programs.len(), s.truth.programs.len());
    let index = FlightIndex::new(&s.flights, DEFAULT_TAXI_IN_MIN);
    let (classified, errors) = classify_all(&programs, &index, &ClassifierConfig::default());
    assert!(errors.is_empty(), "{errors:?}");

    let planted: HashMap<(&str, &str), i64> =
        s.truth.flights.iter().map(|f| ((f.gdp_key.as_str(), f.flight_id.as_str()), f.planted_delay_min)).collect();
    let mut restricted = 0;
    for c in classified.iter().filter(|c| c.class.is_restricted()) {
        let f = &s.flights[index.position(&c.flight_id).unwrap()];
        if f.cancelled {
            continue;
        }
        restricted += 1;
        assert_eq!(planted.get(&(c.gdp_key.as_str(), c.flight_id.as_str())), Some(&c.gdp_delay_min), "{}", c.flight_id);
    }
    assert_eq!(restricted, planted.len());

    let capacity = CapacityData::from_records(&s.quarters);
    let (measured, errors) = measure_all(&programs, &classified, &index, &capacity);
    assert!(errors.is_empty(), "{errors:?}");
    for m in &measured {
        let t = s.truth.program(&m.gdp_key).unwrap();
        assert_eq!(m.result.rf_count, t.rf_count);
        assert_eq!(m.result.excess_delay_min, t.excess_delay_min, "{}", m.gdp_key);
        assert_eq!(m.result.airborne_increase_min, t.airborne_increase_min, "{}", m.gdp_key);
    }
}

#[test]
fn features_and_fit_run_on_a_scenario() {
    let s = scenario(60, 11);
    let programs = assemble_programs(&s.advisories).unwrap();
    let index = FlightIndex::new(&s.flights, DEFAULT_TAXI_IN_MIN);
    let capacity = CapacityData::from_records(&s.quarters);
    let (classified, _) = classify_all(&programs, &index, &ClassifierConfig::default());
    let (measured, _) = measure_all(&programs, &classified, &index, &capacity);
    let excess = measured.iter().map(|m| (m.gdp_key.clone(), m.result)).collect();
    let stage = features_all(&programs, &classified, &excess, &index, &capacity, 52);
    assert!(stage.errors.is_empty(), "{:?}", stage.errors);
    assert_eq!(stage.rows.len() + stage.skipped.len(), programs.len());
    for r in &stage.rows {
        let apt: f64 = r.features.values()[FEATURE_COUNT - 8..].iter().sum();
        assert!(apt == 0.0 || apt == 1.0);
        assert_eq!(r.airport.as_str() == "EWR", apt == 0.0 && r.features.apt_others == 0.0);
    }

    let cfg = FitConfig { perm_repeats: 5, ..FitConfig::default() };
    let a = run_fit(&stage.rows, &cfg).unwrap();
    let b = run_fit(&stage.rows, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.report.models.len(), 3);
    assert_eq!(a.report.n_train + a.report.n_test, stage.rows.len());
    assert_eq!(a.importance.len(), FEATURE_COUNT);
    let mut ranks: Vec<usize> = a.importance.iter().map(|r| r.rank).collect();
    ranks.sort();
    assert_eq!(ranks, (1..=FEATURE_COUNT).collect::<Vec<_>>());
}

#[test]
fn written_scenario_parses_back() {
    let s = scenario(3, 5);
    let dir = tempfile::tempdir().unwrap();
    let epoch = Epoch::default();
    s.write_to(dir.path(), &epoch).unwrap();
    let read = |name: &str| std::fs::File::open(dir.path().join(name)).unwrap();
    assert_eq!(parse_flights(read("flights.csv"), &epoch).unwrap(), s.flights);
    assert_eq!(parse_quarters(read("quarters.csv"), &epoch).unwrap(), s.quarters);
    let events = parse_advisories(read("advisories.csv"), &epoch, &CauseLookup::default()).unwrap();
    assert_eq!(assemble_programs(&events).unwrap(), assemble_programs(&s.advisories).unwrap());
}
