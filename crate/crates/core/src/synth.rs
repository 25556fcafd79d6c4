//! Synthetic truth for simulation studies and test fixtures.
//!
//! The truth is a two-suit spline-pooled model over the 34 standard events
//! with thresholds near elite-level times, a GPD scale proportional to the
//! threshold and suit and trend effects of realistic size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics;
use crate::bootstrap;
use crate::data::{date_from_decimal_year, EventDataset, Registry, SuitEpochs, SwimRecord, TimeScaler};
use crate::error::{Error, Result};
use crate::model::{EventParams, FitConfig, FittedEvent, FittedModel, Layout, ModelId, MODEL_FORMAT};
use crate::SplineBasis;

/// Approximate threshold times in seconds (about the 200th best swimmer).
pub const THRESHOLD_TIMES: [(&str, f64); 34] = [
    ("men_50_free", 22.30),
    ("men_100_free", 48.90),
    ("men_200_free", 107.80),
    ("men_400_free", 229.00),
    ("men_800_free", 478.00),
    ("men_1500_free", 910.00),
    ("men_50_back", 25.30),
    ("men_100_back", 54.30),
    ("men_200_back", 118.40),
    ("men_50_breast", 27.50),
    ("men_100_breast", 60.50),
    ("men_200_breast", 131.20),
    ("men_50_fly", 23.60),
    ("men_100_fly", 52.30),
    ("men_200_fly", 116.50),
    ("men_200_im", 119.40),
    ("men_400_im", 256.50),
    ("women_50_free", 25.00),
    ("women_100_free", 54.50),
    ("women_200_free", 118.30),
    ("women_400_free", 248.00),
    ("women_800_free", 512.00),
    ("women_1500_free", 985.00),
    ("women_50_back", 28.30),
    ("women_100_back", 60.60),
    ("women_200_back", 130.40),
    ("women_50_breast", 31.20),
    ("women_100_breast", 67.50),
    ("women_200_breast", 145.50),
    ("women_50_fly", 26.40),
    ("women_100_fly", 58.30),
    ("women_200_fly", 129.20),
    ("women_200_im", 132.80),
    ("women_400_im", 280.50),
];

/// Settings of the synthetic truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Events to include; all 34 when empty.
    pub events: Vec<String>,
    /// Expected exceedances per event over the window (median event).
    pub expected_count: f64,
    pub first_year: i32,
    pub last_year: i32,
    pub xi: f64,
    pub theta1: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub epsilon: f64,
    /// GPD scale as a fraction of the threshold magnitude.
    pub scale_fraction: f64,
    /// Trend and first-suit effects as fractions of the GEV scale.
    pub trend_ratio: f64,
    pub suit_ratio: f64,
    pub q: usize,
    pub degree: usize,
    pub censor_s: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            events: Vec::new(),
            expected_count: 200.0,
            first_year: 2001,
            last_year: 2019,
            xi: -0.147,
            theta1: 1.0,
            theta3: 0.94,
            theta4: 0.46,
            epsilon: 0.15,
            scale_fraction: 0.012,
            trend_ratio: 0.6,
            suit_ratio: 0.5,
            q: 10,
            degree: 4,
            censor_s: 0.01,
        }
    }
}

impl SynthSpec {
    /// A reduced truth of `n` events spread over the standard list.
    pub fn reduced(n: usize, expected_count: f64) -> Self {
        let step = (THRESHOLD_TIMES.len() / n.max(1)).max(1);
        Self {
            events: THRESHOLD_TIMES
                .iter()
                .step_by(step)
                .take(n)
                .map(|(id, _)| id.to_string())
                .collect(),
            expected_count,
            ..Self::default()
        }
    }
}

/// Threshold time in seconds of a standard event.
pub fn threshold_time(id: &str) -> Result<f64> {
    THRESHOLD_TIMES
        .iter()
        .find(|(e, _)| *e == id)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::UnknownEvent(id.to_string()))
}

/// Builds the truth model. Intercepts are calibrated so that the median
/// event expects `expected_count` exceedances, the trend is
/// `trend_ratio` GEV scales per standardized unit at the mean covariate,
/// and the first suit effect is `suit_ratio` GEV scales at the fastest
/// event.
pub fn truth_model(spec: &SynthSpec) -> Result<FittedModel> {
    let ids: Vec<String> = if spec.events.is_empty() {
        THRESHOLD_TIMES.iter().map(|(id, _)| id.to_string()).collect()
    } else {
        spec.events.clone()
    };
    let s = spec.censor_s;
    let mut events = Vec::with_capacity(ids.len());
    for id in &ids {
        let u_prime = -threshold_time(id)?;
        let u = u_prime - s / 2.0;
        events.push(FittedEvent {
            event_id: id.clone(),
            threshold_u: u,
            raw_threshold_u_prime: u_prime,
            u_l: (-u).ln(),
            censor_s: s,
            n_points: 0,
            record_x: u_prime,
            record_date: chrono::NaiveDate::from_ymd_opt(spec.first_year, 1, 1).unwrap(),
            params: EventParams::from_natural(&[u, 1.0, spec.xi, 0.0, 0.0, 0.0], u),
        });
    }
    let ul: Vec<f64> = events.iter().map(|e| e.u_l).collect();
    let config = FitConfig {
        model: ModelId::M7b,
        q: spec.q,
        degree: spec.degree,
        ..FitConfig::default()
    };
    let basis = SplineBasis::covering(&ul, spec.q, spec.degree, config.knot_margin)?;
    let n_years = (spec.last_year - spec.first_year + 1) as f64;
    let bounds: Vec<f64> = (spec.first_year..=spec.last_year + 1).map(|y| y as f64).collect();
    let scaler = TimeScaler::new(
        spec.first_year as f64 + n_years / 2.0,
        n_years / 12f64.sqrt(),
        bounds,
    )?;
    let layout = Layout::new(ModelId::M7b, events.len(), spec.q);
    let lo = ul.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ul.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let template = FittedModel {
        format: MODEL_FORMAT.to_string(),
        config,
        layout,
        values: Vec::new(),
        basis: Some(basis.clone()),
        spline_domain: (lo, hi),
        events,
        scaler,
        suit_epochs: SuitEpochs::default(),
        loglik: f64::NAN,
        penalized_loglik: f64::NAN,
        roughness: 0.0,
        monotonicity: 0.0,
        phi_m: 0.0,
        effective_dof: None,
        criterion: None,
        iterations: 100,
        rounds: 0,
        converged: true,
    };
    let q = spec.q;
    let a: Vec<f64> = basis
        .greville()
        .iter()
        .map(|g| spec.scale_fraction.ln() + g)
        .collect();
    let mean_ul = ul.iter().sum::<f64>() / ul.len() as f64;
    let sigma0 = |alpha1: f64, l: f64| {
        let u = -l.exp();
        let mu0 = -(alpha1 + spec.theta1 * l).exp();
        spec.scale_fraction * (-u) + spec.xi * (mu0 - u)
    };
    let build = |alpha1: f64| -> Vec<f64> {
        let s_mean = sigma0(alpha1, mean_ul).max(1e-9);
        let s_lo = sigma0(alpha1, lo).max(1e-9);
        let alpha3 = (spec.trend_ratio * s_mean).ln() - spec.theta3 * mean_ul;
        let alpha4 = (spec.suit_ratio * s_lo).sqrt() - spec.theta4 * lo;
        let mut v = vec![0.0; layout.len()];
        v[0] = spec.xi;
        v[1] = alpha1;
        v[2] = spec.theta1;
        v[3..3 + q].copy_from_slice(&a);
        v[3 + q] = alpha3;
        v[4 + q] = spec.theta3;
        v[5 + q] = alpha4;
        v[6 + q] = spec.theta4;
        v[7 + q] = spec.epsilon;
        v
    };
    let (y0, y1) = template.scaler.window_years();
    let median_count = |alpha1: f64| -> f64 {
        let Ok(m) = template.with_values(build(alpha1)) else {
            return f64::NAN;
        };
        let mut c: Vec<f64> = (0..m.events.len())
            .map(|e| analytics::integrate_years(&m, e, y0, y1).unwrap_or(f64::NAN))
            .collect();
        if c.iter().any(|x| !x.is_finite()) {
            return f64::NAN;
        }
        c.sort_by(|x, y| x.partial_cmp(y).unwrap());
        c[c.len() / 2]
    };
    // the count grows as mu0 moves above the threshold, i.e. as alpha1 falls
    let shift = (spec.theta1 - 1.0) * mean_ul;
    let (mut lo_a, mut hi_a) = (-0.06 - shift, -1e-4 - shift);
    let f_lo = median_count(lo_a);
    let f_hi = median_count(hi_a);
    if !(f_lo.is_finite() && f_hi.is_finite()) || !(f_lo > spec.expected_count && f_hi < spec.expected_count) {
        return Err(Error::Numerical(format!(
            "cannot calibrate the synthetic truth: counts {f_lo} and {f_hi} do not bracket {}",
            spec.expected_count
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo_a + hi_a);
        let c = median_count(mid);
        if !c.is_finite() || c > spec.expected_count {
            lo_a = mid;
        } else {
            hi_a = mid;
        }
    }
    template.with_values(build(0.5 * (lo_a + hi_a)))
}

/// One simulated dataset from the truth.
pub fn simulate(truth: &FittedModel, seed: u64) -> Result<Vec<EventDataset>> {
    bootstrap::simulate_dataset(truth, seed, 0)
}

const NATIONS: [&str; 8] = ["AUS", "CHN", "GBR", "HUN", "ITA", "JPN", "SWE", "USA"];

/// Converts simulated exceedances to raw result records, adding `filler`
/// slower swims per event (within two seconds below the threshold) so that
/// threshold selection has material to discard. Swimmers get a nation drawn
/// from a fixed list.
pub fn to_records(datasets: &[EventDataset], filler: usize, seed: u64) -> Vec<SwimRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for d in datasets {
        let years: Vec<f64> = d.points.iter().map(|p| p.year).collect();
        let (ylo, yhi) = years
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
        for p in &d.points {
            out.push(SwimRecord {
                swimmer_id: p.swimmer_id.clone(),
                event_id: d.event_id.clone(),
                time_s: round2(-p.x),
                date: p.date,
                nation: Some(NATIONS[rng.random_range(0..NATIONS.len())].to_string()),
            });
        }
        let slowest = -d.raw_threshold_u_prime;
        for k in 0..filler {
            let extra = 0.01 * rng.random_range(1..=200) as f64;
            let year = if ylo.is_finite() {
                ylo + rng.random::<f64>() * (yhi - ylo)
            } else {
                2010.5
            };
            out.push(SwimRecord {
                swimmer_id: format!("{}_f{k}", d.event_id),
                event_id: d.event_id.clone(),
                time_s: round2(slowest + extra),
                date: date_from_decimal_year(year),
                nation: Some(NATIONS[rng.random_range(0..NATIONS.len())].to_string()),
            });
        }
    }
    out
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Registry restricted to the events of `truth`.
pub fn registry_for(truth: &FittedModel) -> Registry {
    let mut reg = Registry::builtin();
    reg.events.retain(|e| truth.events.iter().any(|t| t.event_id == e.id));
    reg
}
