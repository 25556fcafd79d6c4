//! Parametric bootstrap: simulation from a fitted model, refitting with a
//! feasibility filter, percentile intervals and ensemble predictions.

use std::io::{BufRead, Write};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics;
use crate::data::{date_from_decimal_year, DataPoint, EventDataset};
use crate::error::{Error, Result};
use crate::evt;
use crate::model::{fit_from, time_varying_params, FittedModel};
use crate::quad;

/// Knots of the cumulative-intensity table used to sample occurrence times.
pub const TIME_KNOTS: usize = 1000;

/// Random stream for replicate `index` under master seed `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Cumulative threshold intensity of event `e` on a grid over the
/// standardized window, split at year boundaries and suit-epoch edges.
fn cumulative_table(fitted: &FittedModel, e: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let sc = &fitted.scaler;
    let (a, b) = sc.window();
    let mut knots: Vec<f64> = (0..=TIME_KNOTS)
        .map(|i| a + (b - a) * i as f64 / TIME_KNOTS as f64)
        .collect();
    knots.extend(
        fitted
            .year_breakpoints()
            .iter()
            .map(|&y| sc.standardize(y))
            .filter(|&t| t > a && t < b),
    );
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    knots.dedup();
    let ev = &fitted.events[e];
    let p = ev.params;
    let epochs = fitted.suit_epochs;
    let u = ev.threshold_u;
    let rate = |t: f64| {
        let suit = epochs.epoch_of_year(sc.unstandardize(t));
        time_varying_params(&p, t, suit)
            .and_then(|g| evt::exceedance_rate(u, &g))
            .unwrap_or(f64::NAN)
    };
    let mut cum = Vec::with_capacity(knots.len());
    cum.push(0.0);
    for w in knots.windows(2) {
        // keep the jump side of an epoch edge inside its own panel
        let eps = 1e-12 * (w[1] - w[0]);
        let v = quad::gauss_legendre8(rate, w[0] + eps, w[1] - eps);
        cum.push(cum.last().unwrap() + v);
    }
    if !cum.last().unwrap().is_finite() {
        return Err(Error::Parameter(format!(
            "intensity of {} is not finite over the window",
            ev.event_id
        )));
    }
    Ok((knots, cum))
}

/// Simulates the exceedances of event `e`: a Poisson number of swims, times
/// by inversion of the cumulative intensity and marks from the excess
/// distribution rounded to the censoring grid.
pub fn simulate_event<R: Rng + ?Sized>(fitted: &FittedModel, e: usize, rng: &mut R) -> Result<EventDataset> {
    let ev = &fitted.events[e];
    let gpd = ev.gpd()?;
    let (knots, cum) = cumulative_table(fitted, e)?;
    let total = *cum.last().unwrap();
    let n = if total > 0.0 {
        Poisson::new(total)
            .map_err(|err| Error::Parameter(format!("poisson mean {total}: {err}")))?
            .sample(rng) as usize
    } else {
        0
    };
    let s = ev.censor_s;
    let grid0 = ev.raw_threshold_u_prime;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let k = cum.partition_point(|&c| c < target).clamp(1, cum.len() - 1);
        let (c0, c1) = (cum[k - 1], cum[k]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.5 };
        let t = knots[k - 1] + frac * (knots[k] - knots[k - 1]);
        let x = evt::gpd_quantile(rng.random::<f64>(), &gpd)?;
        let steps = (((x - grid0) / s).round()).max(0.0);
        draws.push((t, grid0 + steps * s));
    }
    draws.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let points = draws
        .into_iter()
        .enumerate()
        .map(|(i, (t, x))| {
            let year = fitted.scaler.unstandardize(t);
            DataPoint {
                x,
                year,
                t,
                suit: fitted.suit_epochs.epoch_of_year(year),
                date: date_from_decimal_year(year),
                swimmer_id: format!("sim{e}_{i}"),
                nation: None,
            }
        })
        .collect();
    Ok(EventDataset {
        event_id: ev.event_id.clone(),
        threshold_u: ev.threshold_u,
        raw_threshold_u_prime: ev.raw_threshold_u_prime,
        u_l: ev.u_l,
        points,
        censor_s: s,
    })
}

/// Simulates every event from stream `index` of `seed`.
pub fn simulate_dataset(fitted: &FittedModel, seed: u64, index: u64) -> Result<Vec<EventDataset>> {
    let mut rng = replicate_rng(seed, index);
    (0..fitted.events.len())
        .map(|e| simulate_event(fitted, e, &mut rng))
        .collect()
}

/// Settings of a bootstrap run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Refit iteration budget as a multiple of the original fit's.
    pub iteration_factor: usize,
    /// Smallest acceptable retained fraction.
    pub min_retained: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 250,
            seed: 1,
            iteration_factor: 5,
            min_retained: 0.5,
        }
    }
}

/// One simulate-and-refit round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub seed: u64,
    pub index: u64,
    pub values: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub feasible: bool,
}

impl Replicate {
    pub fn retained(&self) -> bool {
        self.converged && self.feasible
    }
}

/// Replicates of a bootstrap run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEnsemble {
    pub requested: usize,
    pub replicates: Vec<Replicate>,
}

impl BootstrapEnsemble {
    pub fn retained(&self) -> impl Iterator<Item = &Replicate> {
        self.replicates.iter().filter(|r| r.retained())
    }

    pub fn retained_count(&self) -> usize {
        self.retained().count()
    }

    /// Number of replicates that did not converge.
    pub fn nonconverged_count(&self) -> usize {
        self.replicates.iter().filter(|r| !r.converged).count()
    }

    /// Number of converged replicates rejected by the feasibility filter.
    pub fn infeasible_count(&self) -> usize {
        self.replicates
            .iter()
            .filter(|r| r.converged && !r.feasible)
            .count()
    }

    /// Retained replicates as models sharing `base`'s structure.
    pub fn models(&self, base: &FittedModel) -> Result<Vec<FittedModel>> {
        self.retained()
            .map(|r| base.with_values(r.values.clone()))
            .collect()
    }

    /// Concatenates ensembles built from disjoint replicate streams.
    pub fn merge(mut self, other: BootstrapEnsemble) -> Self {
        self.requested += other.requested;
        self.replicates.extend(other.replicates);
        self.replicates.sort_by_key(|r| (r.seed, r.index));
        self
    }

    /// Writes one JSON object per replicate.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.replicates {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut replicates = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rep: Replicate = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            replicates.push(rep);
        }
        Ok(Self {
            requested: replicates.len(),
            replicates,
        })
    }
}

/// Best observed swim per event in `datasets`, aligned with the fitted
/// events.
pub fn original_records(fitted: &FittedModel, datasets: &[EventDataset]) -> Result<Vec<f64>> {
    fitted
        .events
        .iter()
        .map(|ev| {
            datasets
                .iter()
                .find(|d| d.event_id == ev.event_id)
                .and_then(|d| d.record())
                .map(|r| r.0)
                .ok_or_else(|| Error::UnknownEvent(ev.event_id.clone()))
        })
        .collect()
}

/// Feasibility of a refitted model against the original records: every
/// ultimate time must beat the original record, and the expected next
/// record must improve on it.
pub fn is_feasible(model: &FittedModel, records: &[f64]) -> bool {
    records.iter().enumerate().all(|(e, &r)| {
        let Ok(g) = model.events[e].gpd() else {
            return false;
        };
        let endpoint_ok = evt::upper_endpoint(&g).map_or(true, |x| x > r);
        let next_ok = analytics::expected_next_record(model, e, r).is_ok_and(|s| -s > r);
        endpoint_ok && next_ok
    })
}

/// Simulates `config.replicates` datasets from `fitted`, refits each
/// (warm-started at the original estimate) and flags feasibility. Errors when
/// fewer than `config.min_retained` of the replicates are retained.
pub fn bootstrap_ensemble(
    fitted: &FittedModel,
    datasets: &[EventDataset],
    config: &BootstrapConfig,
) -> Result<BootstrapEnsemble> {
    let ens = run_replicates(fitted, datasets, config, 0..config.replicates as u64)?;
    let retained = ens.retained_count();
    if (retained as f64) < config.min_retained * config.replicates as f64 {
        return Err(Error::EnsembleDegenerate {
            retained,
            requested: config.replicates,
        });
    }
    Ok(ens)
}

/// Runs the replicates with the given stream indices without the retention
/// check.
pub fn run_replicates(
    fitted: &FittedModel,
    datasets: &[EventDataset],
    config: &BootstrapConfig,
    indices: std::ops::Range<u64>,
) -> Result<BootstrapEnsemble> {
    let records = original_records(fitted, datasets)?;
    let budget = (config.iteration_factor * fitted.iterations).max(100);
    let idx: Vec<u64> = indices.collect();
    let reps: Vec<Result<Replicate>> = idx
        .par_iter()
        .map(|&i| {
            let sim = simulate_dataset(fitted, config.seed, i)?;
            let rep = match fit_from(fitted, &sim, &fitted.values, budget) {
                Ok(m) => Replicate {
                    seed: config.seed,
                    index: i,
                    feasible: is_feasible(&m, &records),
                    converged: m.converged,
                    loglik: m.loglik,
                    values: m.values,
                },
                Err(Error::NonConvergence { last_iterate, last_objective, .. }) => Replicate {
                    seed: config.seed,
                    index: i,
                    values: last_iterate,
                    loglik: last_objective,
                    converged: false,
                    feasible: false,
                },
                Err(e) => return Err(e),
            };
            Ok(rep)
        })
        .collect();
    Ok(BootstrapEnsemble {
        requested: idx.len(),
        replicates: reps.into_iter().collect::<Result<_>>()?,
    })
}

/// Percentile interval of `values` at `level`, by linear interpolation
/// between order statistics. Needs at least 20 values.
pub fn percentile_ci(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if values.len() < 20 {
        return Err(Error::InsufficientData {
            what: "percentile interval".into(),
            needed: 20,
            have: values.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level {level}")));
    }
    let mut v = values.to_vec();
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Numerical("statistic is NaN for a replicate".into()));
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let a = 0.5 * (1.0 - level);
    Ok((quantile(&v, a), quantile(&v, 1.0 - a)))
}

fn quantile(v: &[f64], p: f64) -> f64 {
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Percentile interval of a statistic of the model over the retained
/// replicates.
pub fn ci<F>(members: &[FittedModel], statistic: F, level: f64) -> Result<(f64, f64)>
where
    F: Fn(&FittedModel) -> Result<f64>,
{
    let vals = members.iter().map(&statistic).collect::<Result<Vec<f64>>>()?;
    percentile_ci(&vals, level)
}

/// Ensemble-average probability that the next record of event `e` is no
/// better than `x`, given the record `record_x`.
pub fn predictive_record_cdf(members: &[FittedModel], e: usize, record_x: f64, x: f64) -> Result<f64> {
    if !(x > record_x) {
        return Err(Error::Domain("evaluation point must beat the record".into()));
    }
    if members.is_empty() {
        return Err(Error::InsufficientData {
            what: "ensemble".into(),
            needed: 1,
            have: 0,
        });
    }
    let mut sum = 0.0;
    for m in members {
        let g = m.events[e].gpd()?;
        let st = g.sigma_tilde + g.xi * (record_x - g.u);
        sum += if st > 0.0 {
            evt::gpd_cdf(x, &evt::GpdParams::new(record_x, st, g.xi)?)?
        } else {
            1.0
        };
    }
    Ok(sum / members.len() as f64)
}

/// A swim for pairwise comparison: event index, negated time and date.
pub type Swim = (usize, f64, NaiveDate);

/// Fraction of ensemble members in which swim `a` has a smaller r-value than
/// swim `b`; exact ties count one half.
pub fn rank_comparison_prob(members: &[FittedModel], a: Swim, b: Swim) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::InsufficientData {
            what: "ensemble".into(),
            needed: 1,
            have: 0,
        });
    }
    let mut wins = 0.0;
    for m in members {
        let ra = analytics::r_value(m, a.0, a.1, a.2)?;
        let rb = analytics::r_value(m, b.0, b.1, b.2)?;
        if ra < rb {
            wins += 1.0;
        } else if ra == rb {
            wins += 0.5;
        }
    }
    Ok(wins / members.len() as f64)
}

/// Percentile intervals of each swim's rank across ensemble members, in the
/// order of `rows`. Ranks are recomputed among the same swims per member.
pub fn rank_intervals(
    members: &[FittedModel],
    rows: &[analytics::RankedSwim],
    level: f64,
) -> Result<Vec<(f64, f64)>> {
    let n = rows.len();
    let per_member: Vec<Vec<usize>> = members
        .par_iter()
        .map(|m| {
            let mut scored: Vec<(f64, usize)> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let e = m.event_index(&r.event_id)?;
                    Ok((analytics::r_value(m, e, -r.time_s, r.date)?, i))
                })
                .collect::<Result<_>>()?;
            scored.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
            let mut rank = vec![0; n];
            for (pos, (_, i)) in scored.into_iter().enumerate() {
                rank[i] = pos + 1;
            }
            Ok(rank)
        })
        .collect::<Result<_>>()?;
    (0..n)
        .map(|i| {
            let v: Vec<f64> = per_member.iter().map(|r| r[i] as f64).collect();
            percentile_ci(&v, level)
        })
        .collect()
}
