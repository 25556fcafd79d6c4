//! Goodness-of-fit summaries: the pooled probability plot and yearly
//! exceedance counts.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, DiscreteCDF, Poisson};

use crate::data::EventDataset;
use crate::error::{Error, Result};
use crate::evt::{self, GevParams};

use super::{time_varying_params, FittedModel};

/// One point of the pooled probability plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpPoint {
    pub expected: f64,
    pub observed: f64,
    /// 95% band for the observed order statistic.
    pub lo: f64,
    pub hi: f64,
}

/// Pooled probability plot: every exceedance is mapped through its event's
/// fitted excess distribution and the pooled values are sorted against
/// uniform plotting positions. `window` restricts points to decimal years
/// in `[start, end]`.
pub fn pooled_pp(
    fitted: &FittedModel,
    datasets: &[EventDataset],
    window: Option<(f64, f64)>,
) -> Result<Vec<PpPoint>> {
    let mut probs = Vec::new();
    for d in datasets {
        let ev = fitted.event(&d.event_id)?;
        let gpd = ev.gpd()?;
        for p in &d.points {
            if let Some((a, b)) = window {
                if p.year < a || p.year > b {
                    continue;
                }
            }
            let pr = evt::gpd_cdf(p.x, &gpd).unwrap_or(1.0);
            probs.push(pr.clamp(0.0, 1.0));
        }
    }
    probs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = probs.len();
    probs
        .into_iter()
        .enumerate()
        .map(|(k, obs)| {
            let i = (k + 1) as f64;
            let beta = Beta::new(i, n as f64 + 1.0 - i)
                .map_err(|e| Error::Numerical(format!("order-statistic band: {e}")))?;
            Ok(PpPoint {
                expected: i / (n as f64 + 1.0),
                observed: obs,
                lo: beta.inverse_cdf(0.025),
                hi: beta.inverse_cdf(0.975),
            })
        })
        .collect()
}

/// Expected against observed exceedances in one calendar year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub year: i32,
    pub expected: f64,
    pub observed: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Expected exceedances of event `e` over `[y0, y1]` (decimal years).
pub(crate) fn expected_count(fitted: &FittedModel, e: usize, y0: f64, y1: f64) -> Result<f64> {
    let params = fitted.events[e].params;
    let sc = &fitted.scaler;
    let edges = fitted.suit_epochs;
    let bps: Vec<f64> = fitted
        .year_breakpoints()
        .iter()
        .map(|&y| sc.standardize(y))
        .collect();
    let path = |t: f64| {
        let suit = edges.epoch_of_year(sc.unstandardize(t));
        time_varying_params(&params, t, suit).unwrap_or(GevParams {
            mu: f64::NAN,
            sigma: f64::NAN,
            xi: params.xi,
        })
    };
    evt::integrated_intensity(
        sc.standardize(y0),
        sc.standardize(y1),
        fitted.events[e].threshold_u,
        path,
        &bps,
    )
}

/// Yearly expected and observed exceedance counts for one event. The band
/// is the central 95% range of expected counts across `ensemble` when
/// given, otherwise the Poisson 2.5% and 97.5% quantiles.
pub fn rate_check(
    fitted: &FittedModel,
    dataset: &EventDataset,
    ensemble: Option<&[FittedModel]>,
) -> Result<Vec<RateRow>> {
    let e = fitted.event_index(&dataset.event_id)?;
    let yb = &fitted.scaler.year_boundaries;
    let mut rows = Vec::with_capacity(yb.len().saturating_sub(1));
    for w in yb.windows(2) {
        let (a, b) = (w[0], w[1]);
        let expected = expected_count(fitted, e, a, b)?;
        let observed = dataset
            .points
            .iter()
            .filter(|p| p.year >= a && p.year < b)
            .count();
        let (lo, hi) = match ensemble {
            Some(members) if !members.is_empty() => {
                let mut v: Vec<f64> = members
                    .iter()
                    .filter_map(|m| {
                        let i = m.event_index(&dataset.event_id).ok()?;
                        expected_count(m, i, a, b).ok()
                    })
                    .collect();
                v.sort_by(|x, y| x.partial_cmp(y).unwrap());
                (quantile_sorted(&v, 0.025), quantile_sorted(&v, 0.975))
            }
            _ => poisson_band(expected)?,
        };
        rows.push(RateRow {
            year: a.floor() as i32,
            expected,
            observed,
            lo,
            hi,
        });
    }
    Ok(rows)
}

fn poisson_band(mean: f64) -> Result<(f64, f64)> {
    if mean <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let p = Poisson::new(mean).map_err(|e| Error::Numerical(format!("poisson band: {e}")))?;
    Ok((p.inverse_cdf(0.025) as f64, p.inverse_cdf(0.975) as f64))
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
