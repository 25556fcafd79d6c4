use evtpool::data::EventDataset;
use evtpool::model::{self, EventDesign, FitConfig, FittedModel, ModelId};
use evtpool::synth::{self, SynthSpec};
use evtpool::Error;

fn setup(n: usize, count: f64, seed: u64) -> (FittedModel, Vec<EventDataset>) {
    let truth = synth::truth_model(&SynthSpec::reduced(n, count)).unwrap();
    let data = synth::simulate(&truth, seed).unwrap();
    (truth, data)
}

#[test]
fn independent_fit_recovers_a_single_event() {
    let truth = synth::truth_model(&SynthSpec::reduced(2, 1500.0)).unwrap();
    let data = synth::simulate(&truth, 3).unwrap();
    let d = EventDesign::new(&data[0], &truth.scaler, &truth.suit_epochs);
    let f = model::fit_independent(&d, true).unwrap();
    assert!(f.converged);
    let want = truth.events[0].params;
    assert!((f.params.xi - want.xi).abs() < 0.08, "{} vs {}", f.params.xi, want.xi);
    let st = f.params.gpd_scale(d.u);
    let st0 = want.gpd_scale(d.u);
    assert!((st / st0 - 1.0).abs() < 0.15, "{st} vs {st0}");
    let (lo, hi) = model::profile_xi_ci(&d, &f, 3.841458820694124).unwrap();
    assert!(lo < f.params.xi && f.params.xi < hi);
}

#[test]
fn event_order_does_not_change_the_fit() {
    let (truth, data) = setup(4, 100.0, 5);
    let config = FitConfig::for_model(ModelId::M4);
    let a = model::fit(&data, &truth.scaler, &truth.suit_epochs, &config).unwrap();
    let mut rev = data.clone();
    rev.reverse();
    let b = model::fit(&rev, &truth.scaler, &truth.suit_epochs, &config).unwrap();
    assert!((a.loglik - b.loglik).abs() < 1e-5, "{} vs {}", a.loglik, b.loglik);
    for ev in &a.events {
        let other = b.event(&ev.event_id).unwrap();
        assert!((ev.params.xi - other.params.xi).abs() < 1e-4);
    }
}

#[test]
fn ladder_respects_nesting() {
    let (truth, data) = setup(4, 100.0, 8);
    let config = FitConfig::for_model(ModelId::M7b);
    let models = [ModelId::M1a, ModelId::M1b, ModelId::M2, ModelId::M3, ModelId::M4];
    let (rows, fits) = model::ladder(&data, &truth.scaler, &truth.suit_epochs, &config, &models).unwrap();
    assert_eq!(rows.len(), models.len());
    assert_eq!(fits.len(), models.len());
    let ll = |id: ModelId| rows.iter().find(|r| r.model == id).unwrap().loglik;
    for (sub, sup) in [
        (ModelId::M1a, ModelId::M1b),
        (ModelId::M2, ModelId::M1a),
        (ModelId::M3, ModelId::M2),
        (ModelId::M4, ModelId::M3),
    ] {
        assert!(ll(sub) <= ll(sup) + 1e-6, "{sub} {} > {sup} {}", ll(sub), ll(sup));
    }
    assert_eq!(rows[0].relative, Some(0.0));
    let base = rows[0].criterion.unwrap();
    for r in &rows {
        assert!((r.criterion.unwrap() - base - r.relative.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn spline_fit_is_monotone_and_reports_effective_dof() {
    let (truth, data) = setup(8, 100.0, 13);
    let f = model::fit(&data, &truth.scaler, &truth.suit_epochs, &FitConfig::for_model(ModelId::M7b)).unwrap();
    assert!(f.converged);
    assert!(f.monotonicity < 1e-10, "{}", f.monotonicity);
    let g = f.effective_dof.unwrap();
    assert!(g > 0.0 && g < f.layout.len() as f64, "{g}");
    let (crit, g2) = model::ric(&f, &data).unwrap();
    assert!((g - g2).abs() < 1e-6);
    assert!((crit - f.criterion.unwrap()).abs() < 1e-6);
}

#[test]
fn heavier_roughness_penalty_lowers_effective_dof() {
    let (truth, data) = setup(8, 100.0, 17);
    let dof = |phi_r| {
        let c = FitConfig {
            phi_r,
            ..FitConfig::for_model(ModelId::M6)
        };
        model::fit(&data, &truth.scaler, &truth.suit_epochs, &c)
            .unwrap()
            .effective_dof
            .unwrap()
    };
    assert!(dof(500.0) < dof(1.0));
}

#[test]
fn cross_validation_with_a_single_grid_value_returns_it() {
    let (truth, data) = setup(3, 60.0, 2);
    let config = FitConfig {
        cv_grid: vec![42.0],
        ..FitConfig::for_model(ModelId::M7b)
    };
    let cv = model::cross_validate_phi_r(&data, &truth.scaler, &truth.suit_epochs, &config).unwrap();
    assert_eq!(cv.chosen, 42.0);
}

#[test]
fn cross_validation_picks_from_the_grid() {
    let (truth, data) = setup(4, 80.0, 4);
    let config = FitConfig {
        cv_grid: vec![0.0, 15.0, 500.0],
        cv_folds: 4,
        cv_repeats: 1,
        ..FitConfig::for_model(ModelId::M7b)
    };
    let cv = model::cross_validate_phi_r(&data, &truth.scaler, &truth.suit_epochs, &config).unwrap();
    assert!(config.cv_grid.contains(&cv.chosen));
    assert_eq!(cv.scores.len(), 3);
    assert!(cv.scores.iter().all(|s| !s.1.is_nan()), "{:?}", cv.scores);
}

#[test]
fn model_files_round_trip_and_reject_other_versions() {
    let (truth, data) = setup(3, 60.0, 6);
    let f = model::fit(&data, &truth.scaler, &truth.suit_epochs, &FitConfig::for_model(ModelId::M5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    f.save(&path).unwrap();
    let back = FittedModel::load(&path).unwrap();
    assert_eq!(back.values, f.values);
    assert_eq!(back.event_ids(), f.event_ids());
    let text = f.to_json().unwrap().replace(model::MODEL_FORMAT, "evtpool-model/0");
    assert!(matches!(FittedModel::from_json(&text), Err(Error::Version { .. })));
}

#[test]
fn boxcox_recovers_a_power_law() {
    let cov: Vec<f64> = (1..=40).map(|k| 1.0 + 0.1 * k as f64).collect();
    let vals: Vec<f64> = cov.iter().map(|c| (2.0 + 0.5 * c).powf(2.0)).collect();
    let bc = model::boxcox_profile(&vals, &cov).unwrap();
    assert!((bc.delta - 0.5).abs() < 1e-3, "{}", bc.delta);
    assert!(bc.ci.0 <= bc.delta && bc.delta <= bc.ci.1);
}

#[test]
fn diagnostics_cover_every_point_and_year() {
    let (truth, data) = setup(3, 60.0, 12);
    let f = model::fit(&data, &truth.scaler, &truth.suit_epochs, &FitConfig::for_model(ModelId::M7b)).unwrap();
    let pp = model::pooled_pp(&f, &data, None).unwrap();
    let n: usize = data.iter().map(|d| d.points.len()).sum();
    assert_eq!(pp.len(), n);
    assert!(pp.windows(2).all(|w| w[0].observed <= w[1].observed));
    assert!(pp.iter().all(|p| p.lo <= p.expected && p.expected <= p.hi));
    let rows = model::rate_check(&f, &data[0], None).unwrap();
    assert_eq!(rows.len(), f.scaler.year_boundaries.len() - 1);
    let obs: usize = rows.iter().map(|r| r.observed).sum();
    assert_eq!(obs, data[0].points.len());
}
