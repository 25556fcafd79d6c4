//! Quantities derived from a fitted model: era-adjusted rankings, ultimate
//! times, record forecasts and suit adjustments.
//!
//! Swims are passed on the negated scale used for fitting (`x = -seconds`)
//! and results that are times are returned in positive seconds.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{decimal_year, EventDataset};
use crate::error::{Error, Result};
use crate::evt::{self, GevParams, GpdParams};
use crate::model::{time_varying_params, FittedModel};
use crate::quad;

/// Survival below which forecast integrals are truncated.
pub const SURVIVAL_FLOOR: f64 = 1e-10;

/// Longest forecast horizon considered, in years.
pub const MAX_HORIZON: f64 = 10_000.0;

fn nan_gev(xi: f64) -> GevParams<f64> {
    GevParams {
        mu: f64::NAN,
        sigma: f64::NAN,
        xi,
    }
}

/// Parameters of event `e` at decimal year `year`, with the suit epoch
/// taken from the calendar unless `suit` overrides it.
fn gev(fitted: &FittedModel, e: usize, year: f64, suit: Option<u8>) -> GevParams<f64> {
    let p = &fitted.events[e].params;
    let s = suit.unwrap_or_else(|| fitted.suit_epochs.epoch_of_year(year));
    time_varying_params(p, fitted.scaler.standardize(year), s).unwrap_or_else(|_| nan_gev(p.xi))
}

/// Exceedance rate of the threshold per year at decimal year `year`.
pub fn threshold_rate(fitted: &FittedModel, e: usize, year: f64, suit: Option<u8>) -> Result<f64> {
    let u = fitted.events[e].threshold_u;
    Ok(evt::exceedance_rate(u, &gev(fitted, e, year, suit))? / fitted.scaler.sd)
}

/// Expected number of threshold exceedances in calendar year `year`: the
/// midpoint rule unless a suit-epoch edge falls inside the year.
pub fn yearly_rate(fitted: &FittedModel, e: usize, year: i32, suit: Option<u8>) -> Result<f64> {
    let sc = &fitted.scaler;
    let u = fitted.events[e].threshold_u;
    let disc: Vec<f64> = fitted
        .suit_epochs
        .edges()
        .iter()
        .map(|&y| sc.standardize(y))
        .collect();
    let p = fitted.events[e].params;
    let epochs = fitted.suit_epochs;
    let path = |t: f64| {
        let s = suit.unwrap_or_else(|| epochs.epoch_of_year(sc.unstandardize(t)));
        time_varying_params(&p, t, s).unwrap_or_else(|_| nan_gev(p.xi))
    };
    let r = evt::yearly_rate_approx(
        sc.standardize(year as f64),
        sc.standardize(year as f64 + 1.0),
        u,
        path,
        &disc,
    )?;
    Ok(r.value)
}

fn gpd(fitted: &FittedModel, e: usize) -> Result<GpdParams<f64>> {
    fitted.events[e].gpd()
}

/// Expected number of swims per year at least as good as `x` in the year of
/// `date`. Smaller values are better swims.
pub fn r_value(fitted: &FittedModel, e: usize, x: f64, date: NaiveDate) -> Result<f64> {
    let ev = &fitted.events[e];
    let hi = x + ev.censor_s / 2.0;
    if !(hi > ev.threshold_u) {
        return Err(Error::Domain(format!(
            "swim {:.2} s is below the threshold of {}",
            -x, ev.event_id
        )));
    }
    let year = decimal_year(date).floor() as i32;
    let surv = evt::gpd_survival(hi, &gpd(fitted, e)?)?;
    Ok(surv * yearly_rate(fitted, e, year, None)?)
}

/// One ranked swim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSwim {
    pub rank: usize,
    pub swimmer_id: String,
    pub event_id: String,
    pub time_s: f64,
    pub date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nation: Option<String>,
    pub r_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
}

/// Scores every exceedance by its r-value and ranks them, best (smallest)
/// first. Ties are broken by event and swimmer id. `nation` keeps only swims
/// of that nation and ranks within it; `top_n` truncates.
pub fn rank_table(
    fitted: &FittedModel,
    datasets: &[EventDataset],
    nation: Option<&str>,
    top_n: Option<usize>,
) -> Result<Vec<RankedSwim>> {
    let mut rows = Vec::new();
    for d in datasets {
        let e = fitted.event_index(&d.event_id)?;
        for p in &d.points {
            if let Some(n) = nation {
                if p.nation.as_deref() != Some(n) {
                    continue;
                }
            }
            rows.push(RankedSwim {
                rank: 0,
                swimmer_id: p.swimmer_id.clone(),
                event_id: d.event_id.clone(),
                time_s: -p.x,
                date: p.date,
                nation: p.nation.clone(),
                r_value: r_value(fitted, e, p.x, p.date)?,
                ci: None,
            });
        }
    }
    sort_ranked(&mut rows);
    if let Some(n) = top_n {
        rows.truncate(n);
    }
    Ok(rows)
}

pub(crate) fn sort_ranked(rows: &mut [RankedSwim]) {
    rows.sort_by(|a, b| {
        a.r_value
            .partial_cmp(&b.r_value)
            .unwrap()
            .then_with(|| a.event_id.cmp(&b.event_id))
            .then_with(|| a.swimmer_id.cmp(&b.swimmer_id))
            .then_with(|| a.date.cmp(&b.date))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
}

/// Best attainable time of event `e` in seconds, the negated upper endpoint
/// of the excess distribution.
pub fn ultimate_time(fitted: &FittedModel, e: usize) -> Result<f64> {
    Ok(-evt::upper_endpoint(&gpd(fitted, e)?)?)
}

/// GPD scale of exceedances of the record `record_x`.
fn scale_at(fitted: &FittedModel, e: usize, record_x: f64) -> Result<GpdParams<f64>> {
    let g = gpd(fitted, e)?;
    let st = g.sigma_tilde + g.xi * (record_x - g.u);
    if !(st > 0.0) {
        return Err(Error::Domain(format!(
            "record {:.2} s of {} is beyond the fitted endpoint",
            -record_x, fitted.events[e].event_id
        )));
    }
    GpdParams::new(record_x, st, g.xi)
}

/// Mean of the next record given the current record `record_x`, in
/// seconds, with censoring ignored.
pub fn expected_next_record(fitted: &FittedModel, e: usize, record_x: f64) -> Result<f64> {
    let g = scale_at(fitted, e, record_x)?;
    if !(g.xi < 1.0) {
        return Err(Error::Domain("mean of the next record requires xi < 1".into()));
    }
    Ok(-(record_x + g.sigma_tilde / (1.0 - g.xi)))
}

/// Distribution function `P(X* <= x)` of the next record-breaking swim on
/// the negated scale, given the current record.
pub fn next_record_cdf(fitted: &FittedModel, e: usize, record_x: f64, x: f64) -> Result<f64> {
    if !(x > record_x) {
        return Err(Error::Domain("evaluation point must beat the record".into()));
    }
    let g = scale_at(fitted, e, record_x)?;
    evt::gpd_cdf(x, &g)
}

/// Forecast origin: the end of the observation window.
pub fn default_origin(fitted: &FittedModel) -> f64 {
    fitted.scaler.window_years().1
}

/// Cumulative threshold intensity of one event from a forecast origin,
/// tabulated at whole years.
#[derive(Debug, Clone)]
struct Forward<'a> {
    fitted: &'a FittedModel,
    e: usize,
    origin: f64,
    /// Survival of the excess distribution at the current record.
    surv: f64,
    cum: Vec<f64>,
}

impl<'a> Forward<'a> {
    fn new(fitted: &'a FittedModel, e: usize, origin: f64, record_x: f64) -> Result<Self> {
        let surv = evt::gpd_survival(record_x, &gpd(fitted, e)?)?;
        Ok(Self {
            fitted,
            e,
            origin,
            surv,
            cum: vec![0.0],
        })
    }

    fn rate(&self, t: f64) -> f64 {
        threshold_rate(self.fitted, self.e, self.origin + t, None).unwrap_or(f64::NAN)
    }

    fn segment(&self, a: f64, b: f64) -> f64 {
        let edges = self.fitted.suit_epochs.edges();
        let mut cuts: Vec<f64> = edges
            .iter()
            .map(|y| y - self.origin)
            .filter(|&c| c > a && c < b)
            .collect();
        cuts.insert(0, a);
        cuts.push(b);
        cuts.windows(2).map(|w| quad::gauss_legendre8(|t| self.rate(t), w[0], w[1])).sum()
    }

    fn extend(&mut self) -> Result<()> {
        let k = self.cum.len() - 1;
        let inc = self.segment(k as f64, k as f64 + 1.0);
        if !inc.is_finite() {
            return Err(Error::Numerical(format!(
                "forecast intensity of {} is not finite",
                self.fitted.events[self.e].event_id
            )));
        }
        self.cum.push(self.cum[k] + inc);
        Ok(())
    }

    /// Horizon covered by the table, in years.
    fn horizon(&self) -> f64 {
        (self.cum.len() - 1) as f64
    }

    /// Expected threshold exceedances in `[origin, origin + t]`.
    fn lambda(&self, t: f64) -> f64 {
        let k = (t.floor() as usize).min(self.cum.len() - 1);
        let base = self.cum[k];
        if t > k as f64 {
            base + self.segment(k as f64, t)
        } else {
            base
        }
    }

    /// Expected record-breaking swims in `[origin, origin + t]`.
    fn hazard(&self, t: f64) -> f64 {
        self.lambda(t) * self.surv
    }
}

/// Distribution function of the waiting time (years after `origin`) until
/// event `e` next beats `record_x`.
pub fn record_waiting_cdf(
    fitted: &FittedModel,
    e: usize,
    record_x: f64,
    origin: f64,
    t: f64,
) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain("waiting time must be non-negative".into()));
    }
    let surv = evt::gpd_survival(record_x, &gpd(fitted, e)?)?;
    let lam = integrate_years(fitted, e, origin, origin + t)?;
    Ok(-(-lam * surv).exp_m1())
}

/// Density of the waiting time at `t` years after `origin`.
pub fn record_waiting_density(
    fitted: &FittedModel,
    e: usize,
    record_x: f64,
    origin: f64,
    t: f64,
) -> Result<f64> {
    if t < 0.0 {
        return Ok(0.0);
    }
    let surv = evt::gpd_survival(record_x, &gpd(fitted, e)?)?;
    let lam = integrate_years(fitted, e, origin, origin + t)?;
    let rate = threshold_rate(fitted, e, origin + t, None)?;
    Ok(rate * surv * (-lam * surv).exp())
}

/// Threshold intensity of event `e` integrated over decimal years
/// `[y0, y1]`, with panels at whole years and suit-epoch edges.
pub fn integrate_years(fitted: &FittedModel, e: usize, y0: f64, y1: f64) -> Result<f64> {
    if y1 < y0 {
        return Err(Error::Domain("integration window reversed".into()));
    }
    let mut cuts: Vec<f64> = fitted.suit_epochs.edges().to_vec();
    if y1 - y0 <= 2.0 * MAX_HORIZON {
        let mut y = y0.floor() + 1.0;
        while y < y1 {
            cuts.push(y);
            y += 1.0;
        }
    }
    let rate = |y: f64| threshold_rate(fitted, e, y, None).unwrap_or(f64::NAN);
    let v = quad::composite(rate, y0, y1, &cuts);
    if !v.is_finite() {
        return Err(Error::Numerical("forecast intensity is not finite".into()));
    }
    Ok(v)
}

/// Mean waiting time in years after `origin` until event `e` next beats
/// `record_x`. Infinite when the survival does not fall below
/// [`SURVIVAL_FLOOR`] within [`MAX_HORIZON`] years.
pub fn expected_waiting_time(fitted: &FittedModel, e: usize, record_x: f64, origin: f64) -> Result<f64> {
    let mut fw = Forward::new(fitted, e, origin, record_x)?;
    let stop = -SURVIVAL_FLOOR.ln();
    while fw.cum.last().unwrap() * fw.surv < stop {
        if fw.horizon() >= MAX_HORIZON {
            return Ok(f64::INFINITY);
        }
        fw.extend()?;
    }
    let n = fw.horizon() as usize;
    let tol = 1e-8 / n as f64;
    let mut total = 0.0;
    for k in 0..n {
        let (v, _) = quad::adaptive_gk(
            |t| t * fw.rate(t) * fw.surv * (-fw.hazard(t)).exp(),
            k as f64,
            k as f64 + 1.0,
            tol,
        );
        total += v;
    }
    Ok(total)
}

/// Probabilities that the next record set in any event is set in each
/// event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextRecordProbs {
    pub event_ids: Vec<String>,
    /// Integrals as computed; they sum to one up to quadrature error.
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// For each event, the probability that it sees the next record of all
/// events, with records `records[e]` (negated) and forecasts from `origin`.
/// Errors when the raw probabilities miss one by more than `2e-3`.
pub fn prob_next_record_in_event(
    fitted: &FittedModel,
    records: &[f64],
    origin: f64,
) -> Result<NextRecordProbs> {
    let n = fitted.events.len();
    if records.len() != n {
        return Err(Error::Dimension("one record per event expected".into()));
    }
    let mut fws = (0..n)
        .map(|e| Forward::new(fitted, e, origin, records[e]))
        .collect::<Result<Vec<_>>>()?;
    let stop = -SURVIVAL_FLOOR.ln();
    loop {
        let total: f64 = fws.iter().map(|f| f.cum.last().unwrap() * f.surv).sum();
        if total >= stop {
            break;
        }
        if fws[0].horizon() >= MAX_HORIZON {
            return Err(Error::Numerical(
                "no record expected within the forecast horizon".into(),
            ));
        }
        for f in &mut fws {
            f.extend()?;
        }
    }
    let years = fws[0].horizon() as usize;
    let tol = 1e-8 / (years * n) as f64;
    let mut raw = vec![0.0; n];
    for k in 0..years {
        for (e, fe) in fws.iter().enumerate() {
            let (v, _) = quad::adaptive_gk(
                |t| {
                    let h: f64 = fws.iter().map(|f| f.hazard(t)).sum();
                    fe.rate(t) * fe.surv * (-h).exp()
                },
                k as f64,
                k as f64 + 1.0,
                tol,
            );
            raw[e] += v;
        }
    }
    let sum: f64 = raw.iter().sum();
    if (sum - 1.0).abs() > 2e-3 {
        return Err(Error::Numerical(format!(
            "next-record probabilities sum to {sum}"
        )));
    }
    Ok(NextRecordProbs {
        event_ids: fitted.event_ids(),
        normalized: raw.iter().map(|p| p / sum).collect(),
        raw,
    })
}

/// Direction of a suit adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SuitAdjust {
    /// Map a swim made in a suit epoch to its suit-free equivalent.
    Remove,
    /// Map a suit-free swim to its equivalent in the given epoch (1 or 2).
    Add(u8),
}

/// Time with the same r-value as swim `x` at decimal year `year` once the
/// suit effect is removed or added. Returned unrounded on the negated scale.
pub fn adjust_suit_x(fitted: &FittedModel, e: usize, x: f64, year: f64, dir: SuitAdjust) -> Result<f64> {
    let g = gpd(fitted, e)?;
    if !(x > g.u) {
        return Err(Error::Domain("swim must be above the threshold".into()));
    }
    let epoch = fitted.suit_epochs.epoch_of_year(year);
    let (from, to) = match dir {
        SuitAdjust::Remove => {
            if epoch == 0 {
                return Err(Error::Domain(format!(
                    "year {year:.3} is outside the suit epochs"
                )));
            }
            (epoch, 0)
        }
        SuitAdjust::Add(j) => {
            if !(j == 1 || j == 2) {
                return Err(Error::Domain(format!("unknown suit epoch {j}")));
            }
            (0, j)
        }
    };
    let mid = year.floor() + 0.5;
    let r_from = threshold_rate(fitted, e, mid, Some(from))?;
    let r_to = threshold_rate(fitted, e, mid, Some(to))?;
    let rho = r_from * evt::gpd_survival(x, &g)? / r_to;
    let z = if g.xi.abs() < evt::XI_ZERO {
        g.u - g.sigma_tilde * rho.ln()
    } else {
        g.u + g.sigma_tilde / g.xi * (rho.powf(-g.xi) - 1.0)
    };
    if g.xi < 0.0 && z > evt::upper_endpoint(&g)? {
        return Err(Error::Domain(
            "adjusted time is beyond the ultimate time".into(),
        ));
    }
    Ok(z)
}

/// [`adjust_suit_x`] in seconds.
pub fn adjust_suit_time(
    fitted: &FittedModel,
    e: usize,
    seconds: f64,
    date: NaiveDate,
    dir: SuitAdjust,
) -> Result<f64> {
    Ok(-adjust_suit_x(fitted, e, -seconds, decimal_year(date), dir)?)
}

/// A record set in a suit epoch, its suit-free equivalent and the best
/// suit-free swim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WouldBeRecord {
    pub event_id: String,
    pub holder: String,
    pub date: NaiveDate,
    pub record_s: f64,
    pub adjusted_s: f64,
    pub best_nonsuit_holder: Option<String>,
    pub best_nonsuit_s: Option<f64>,
    /// Holder of the record once the suit effect is removed.
    pub winner: String,
    pub survives: bool,
}

/// Records (best swims) set in suit epochs, adjusted to suit-free times and
/// compared with the best swim outside the epochs.
pub fn would_be_records(fitted: &FittedModel, datasets: &[EventDataset]) -> Result<Vec<WouldBeRecord>> {
    let mut out = Vec::new();
    for d in datasets {
        let e = fitted.event_index(&d.event_id)?;
        let best = d.points.iter().max_by(|a, b| {
            a.x.partial_cmp(&b.x).unwrap().then(b.date.cmp(&a.date))
        });
        let Some(best) = best else { continue };
        if best.suit == 0 {
            continue;
        }
        let z = adjust_suit_x(fitted, e, best.x, best.year, SuitAdjust::Remove)?;
        let nonsuit = d
            .points
            .iter()
            .filter(|p| p.suit == 0)
            .max_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(b.date.cmp(&a.date)));
        let survives = nonsuit.is_none_or(|p| z > p.x);
        out.push(WouldBeRecord {
            event_id: d.event_id.clone(),
            holder: best.swimmer_id.clone(),
            date: best.date,
            record_s: -best.x,
            adjusted_s: -z,
            best_nonsuit_holder: nonsuit.map(|p| p.swimmer_id.clone()),
            best_nonsuit_s: nonsuit.map(|p| -p.x),
            winner: if survives {
                best.swimmer_id.clone()
            } else {
                nonsuit.unwrap().swimmer_id.clone()
            },
            survives,
        });
    }
    Ok(out)
}
