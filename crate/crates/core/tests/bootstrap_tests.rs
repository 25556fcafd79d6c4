mod common;

use chrono::NaiveDate;
use evtpool::analytics;
use evtpool::bootstrap::{self, BootstrapConfig, BootstrapEnsemble};
use evtpool::model::{self, FitConfig, FittedModel, ModelId};
use evtpool::synth::{self, SynthSpec};
use evtpool::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn truth() -> FittedModel {
    synth::truth_model(&SynthSpec::reduced(3, 120.0)).unwrap()
}

#[test]
fn simulated_counts_match_the_integrated_intensity() {
    let m = truth();
    let (y0, y1) = m.scaler.window_years();
    let reps = 300;
    for e in 0..m.events.len() {
        let expected = analytics::integrate_years(&m, e, y0, y1).unwrap();
        let mut total = 0usize;
        for i in 0..reps {
            let mut rng = bootstrap::replicate_rng(5, i);
            total += bootstrap::simulate_event(&m, e, &mut rng).unwrap().points.len();
        }
        let mean = total as f64 / reps as f64;
        assert!((mean / expected - 1.0).abs() < 0.02, "event {e}: {mean} vs {expected}");
    }
}

#[test]
fn simulated_marks_follow_the_excess_distribution() {
    let m = truth();
    let mut jitter = ChaCha8Rng::seed_from_u64(2);
    let mut pit = Vec::new();
    for i in 0..20 {
        let d = bootstrap::simulate_dataset(&m, 8, i).unwrap();
        for p in &d[0].points {
            // marks sit on the 0.01 s grid; spread them back over their cell
            let x = p.x + d[0].censor_s * (jitter.random::<f64>() - 0.5);
            pit.push(1.0 - common::oracle_survival(&m, 0, x.max(m.events[0].threshold_u)));
        }
    }
    pit.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = pit.len() as f64;
    let ks = pit
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 1.63 / n.sqrt(), "KS {ks} with n = {n}");
}

#[test]
fn simulation_is_deterministic_per_stream() {
    let m = truth();
    let a = bootstrap::simulate_dataset(&m, 3, 4).unwrap();
    let b = bootstrap::simulate_dataset(&m, 3, 4).unwrap();
    let c = bootstrap::simulate_dataset(&m, 3, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    for d in &a {
        assert!(d.points.windows(2).all(|w| w[0].year <= w[1].year));
        assert!(d.points.iter().all(|p| p.x > d.threshold_u));
    }
}

fn sort_index_quantile(v: &[f64], p: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = p * (s.len() - 1) as f64;
    let (i, j) = (h.floor() as usize, h.ceil() as usize);
    s[i] * (1.0 - (h - i as f64)) + s[j] * (h - i as f64)
}

proptest! {
    #[test]
    fn percentile_interval_matches_sort_index_oracle(v in proptest::collection::vec(-100.0f64..100.0, 20..200), level in 0.5f64..0.99) {
        let (lo, hi) = bootstrap::percentile_ci(&v, level).unwrap();
        let a = 0.5 * (1.0 - level);
        prop_assert!((lo - sort_index_quantile(&v, a)).abs() < 1e-9);
        prop_assert!((hi - sort_index_quantile(&v, 1.0 - a)).abs() < 1e-9);
        prop_assert!(lo <= hi);
    }
}

#[test]
fn percentile_interval_needs_twenty_values() {
    assert!(matches!(
        bootstrap::percentile_ci(&[1.0; 19], 0.95),
        Err(Error::InsufficientData { .. })
    ));
}

fn small_fit() -> (FittedModel, Vec<evtpool::data::EventDataset>) {
    let m = synth::truth_model(&SynthSpec::reduced(3, 80.0)).unwrap();
    let data = synth::simulate(&m, 21).unwrap();
    let f = model::fit(&data, &m.scaler, &m.suit_epochs, &FitConfig::for_model(ModelId::M7b)).unwrap();
    (f, data)
}

#[test]
fn ensemble_round_trips_through_jsonl_and_feeds_predictions() {
    let (fit, data) = small_fit();
    let config = BootstrapConfig {
        replicates: 6,
        seed: 9,
        ..BootstrapConfig::default()
    };
    let ens = bootstrap::bootstrap_ensemble(&fit, &data, &config).unwrap();
    assert_eq!(ens.replicates.len(), 6);
    let mut buf = Vec::new();
    ens.write_jsonl(&mut buf).unwrap();
    let back = BootstrapEnsemble::read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back, ens);

    // same seed and stream indices give the same refits
    let again = bootstrap::run_replicates(&fit, &data, &config, 0..6).unwrap();
    assert_eq!(again, ens);
    let split = bootstrap::run_replicates(&fit, &data, &config, 0..3)
        .unwrap()
        .merge(bootstrap::run_replicates(&fit, &data, &config, 3..6).unwrap());
    assert_eq!(split, ens);

    let members = ens.models(&fit).unwrap();
    let records = bootstrap::original_records(&fit, &data).unwrap();
    let g = fit.events[0].gpd().unwrap();
    let end = evtpool::evt::upper_endpoint(&g).unwrap();
    let mut prev = 0.0;
    for k in 1..20 {
        let x = records[0] + (end - records[0]) * k as f64 / 20.0;
        let p = bootstrap::predictive_record_cdf(&members, 0, records[0], x).unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(p >= prev);
        prev = p;
    }

    let date = NaiveDate::from_ymd_opt(2012, 3, 1).unwrap();
    let swim = (0, records[0], date);
    assert_eq!(bootstrap::rank_comparison_prob(&members, swim, swim).unwrap(), 0.5);
}

#[test]
fn too_few_retained_replicates_is_an_error() {
    let (fit, data) = small_fit();
    let config = BootstrapConfig {
        replicates: 3,
        min_retained: 1.01,
        ..BootstrapConfig::default()
    };
    assert!(matches!(
        bootstrap::bootstrap_ensemble(&fit, &data, &config),
        Err(Error::EnsembleDegenerate { .. })
    ));
}

#[test]
fn feasibility_rejects_endpoints_behind_the_record() {
    let (fit, data) = small_fit();
    let records = bootstrap::original_records(&fit, &data).unwrap();
    assert!(bootstrap::is_feasible(&fit, &records));
    let g = fit.events[1].gpd().unwrap();
    let mut beyond = records.clone();
    beyond[1] = evtpool::evt::upper_endpoint(&g).unwrap() + 0.05;
    assert!(!bootstrap::is_feasible(&fit, &beyond));
}
