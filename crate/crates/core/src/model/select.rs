//! Information criteria, cross-validation of the roughness weight, the
//! Box-Cox link diagnostic and the model ladder.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EventDataset, SuitEpochs, TimeScaler};
use crate::error::{Error, Result};
use crate::optim;

use super::fit::{self, IndependentFit};
use super::likelihood::{EventDesign, Objective};
use super::{FitConfig, FittedModel, Layout, ModelId};

const CHI2_1_95: f64 = 3.841458820694124;

/// Effective number of parameters `tr(I J^-1)` and the criterion
/// `-2 loglik + 2 g` at a fitted optimum.
pub fn ric(fitted: &FittedModel, datasets: &[EventDataset]) -> Result<(f64, f64)> {
    let designs: Vec<EventDesign> = datasets
        .iter()
        .map(|d| EventDesign::new(d, &fitted.scaler, &fitted.suit_epochs))
        .collect();
    ric_on(fitted, &designs)
}

pub(crate) fn ric_on(fitted: &FittedModel, designs: &[EventDesign]) -> Result<(f64, f64)> {
    let obj = Objective::new(fitted.layout, designs, fitted.basis.as_ref(), 0.0, 0.0);
    let v = &fitted.values;
    let n = v.len();
    let h = optim::hessian_from_gradient(|x| obj.loglik(x, true).map(|r| r.1), v, 1e-4)
        .ok_or_else(|| Error::Numerical("information matrix is not finite".into()))?;
    let info = -h;
    let mut j = info.clone();
    if let (Some(range), Some(p)) = (fitted.layout.spline_range(), obj.penalty.as_ref()) {
        let phi = fitted.config.phi_r;
        for (a, i) in range.clone().enumerate() {
            for (b, k) in range.clone().enumerate() {
                j[(i, k)] += 2.0 * phi * p.get(a, b);
            }
        }
    }
    // the trace is invariant under diagonal rescaling, which tames the
    // condition number when parameters live on very different scales
    let mut d = vec![0.0; n];
    for (i, di) in d.iter_mut().enumerate() {
        if !(j[(i, i)] > 0.0) {
            return Err(Error::Regularization { condition: f64::INFINITY });
        }
        *di = 1.0 / j[(i, i)].sqrt();
    }
    let scale = |m: &mut nalgebra::DMatrix<f64>| {
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] *= d[r] * d[c];
            }
        }
    };
    scale(&mut j);
    let mut info = info;
    scale(&mut info);
    let condition = optim::condition_number(&j);
    if !(condition < 1e12) {
        return Err(Error::Regularization { condition });
    }
    let lu = j.lu();
    let x = lu
        .solve(&info)
        .ok_or(Error::Regularization { condition })?;
    let g: f64 = (0..n).map(|i| x[(i, i)]).sum();
    let loglik = obj
        .loglik(v, false)
        .map(|r| r.0)
        .ok_or_else(|| Error::Numerical("fitted parameters are infeasible".into()))?;
    Ok((-2.0 * loglik + 2.0 * g, g))
}

/// Cross-validated predictive scores over the roughness grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub chosen: f64,
    /// `(phi_r, mean held-out score per repeat)` in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Fold label of every point, stratified by event: points of each event are
/// shuffled and dealt round-robin.
fn fold_labels(datasets: &[EventDataset], folds: usize, seed: u64, repeat: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat);
    datasets
        .iter()
        .map(|d| {
            let mut idx: Vec<usize> = (0..d.points.len()).collect();
            idx.shuffle(&mut rng);
            let mut lab = vec![0; idx.len()];
            for (rank, &i) in idx.iter().enumerate() {
                lab[i] = rank % folds;
            }
            lab
        })
        .collect()
}

fn split_design(
    d: &EventDataset,
    labels: &[usize],
    fold: usize,
    held_out: bool,
    scaler: &TimeScaler,
    epochs: &SuitEpochs,
) -> EventDesign {
    let n = d.points.len() as f64;
    let pts: Vec<(f64, f64, u8)> = d
        .points
        .iter()
        .zip(labels)
        .filter(|(_, &l)| (l == fold) == held_out)
        .map(|(p, _)| (p.x, scaler.standardize(p.year), p.suit))
        .collect();
    let frac = pts.len() as f64 / n;
    let mut ds = EventDesign::from_points(&d.event_id, d.threshold_u, d.u_l, d.censor_s, pts, scaler, epochs);
    ds.lambda_scale = frac;
    ds
}

/// Chooses the roughness weight by repeated stratified K-fold
/// cross-validation of the held-out log-likelihood. Folds are shared across
/// grid values; ties go to the smaller weight.
pub fn cross_validate_phi_r(
    datasets: &[EventDataset],
    scaler: &TimeScaler,
    epochs: &SuitEpochs,
    config: &FitConfig,
) -> Result<CvResult> {
    let mut grid = config.cv_grid.clone();
    if grid.is_empty() {
        return Err(Error::Validation("empty roughness grid".into()));
    }
    if grid.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Validation("roughness weights must be non-negative".into()));
    }
    if grid.len() == 1 {
        return Ok(CvResult {
            chosen: grid[0],
            scores: vec![(grid[0], f64::NAN)],
        });
    }
    let folds = config.cv_folds.max(2);
    let repeats = config.cv_repeats.max(1);
    if let Some(d) = datasets.iter().find(|d| d.points.len() < folds) {
        return Err(Error::InsufficientData {
            what: format!("cross-validation folds for {}", d.event_id),
            needed: folds,
            have: d.points.len(),
        });
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let labels: Vec<Vec<Vec<usize>>> = (0..repeats as u64)
        .map(|r| fold_labels(datasets, folds, config.seed, r))
        .collect();
    let (_, basis) = fit::prepare(datasets, scaler, epochs, config)?;
    let layout = Layout::new(config.model, datasets.len(), config.q);
    let mut warm: Option<Vec<f64>> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for &phi_r in &grid {
        let cfg = FitConfig {
            phi_r,
            ..config.clone()
        };
        let full = fit::fit_with(datasets, scaler, epochs, &cfg, None, warm.take())?;
        warm = Some(full.values.clone());
        let jobs: Vec<(usize, usize)> = (0..repeats)
            .flat_map(|r| (0..folds).map(move |k| (r, k)))
            .collect();
        let fold_scores: Vec<Result<(usize, f64)>> = jobs
            .par_iter()
            .map(|&(r, k)| {
                let train: Vec<EventDesign> = datasets
                    .iter()
                    .zip(&labels[r])
                    .map(|(d, l)| split_design(d, l, k, false, scaler, epochs))
                    .collect();
                let test: Vec<EventDesign> = datasets
                    .iter()
                    .zip(&labels[r])
                    .map(|(d, l)| split_design(d, l, k, true, scaler, epochs))
                    .collect();
                let s = fit::solve(
                    &train,
                    basis.as_ref(),
                    layout,
                    &cfg,
                    phi_r,
                    full.values.clone(),
                    cfg.max_iter,
                    full.phi_m.min(10.0),
                )?;
                let obj = Objective::new(layout, &test, basis.as_ref(), 0.0, 0.0);
                let score = obj.loglik(&s.values, false).map(|r| r.0).unwrap_or(f64::NEG_INFINITY);
                Ok((r, score))
            })
            .collect();
        let mut per_repeat = vec![0.0; repeats];
        for fs in fold_scores {
            let (r, s) = fs?;
            per_repeat[r] += s;
        }
        scores.push((phi_r, per_repeat.iter().sum::<f64>() / repeats as f64));
    }
    let mut chosen = scores[0];
    for &s in &scores[1..] {
        if s.1 > chosen.1 {
            chosen = s;
        }
    }
    Ok(CvResult {
        chosen: chosen.0,
        scores,
    })
}

/// Box-Cox profile estimate with its 95% profile-likelihood interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCox {
    pub delta: f64,
    pub ci: (f64, f64),
    pub loglik: f64,
}

fn boxcox(y: f64, delta: f64) -> f64 {
    if delta.abs() < 1e-12 {
        y.ln()
    } else {
        (y.powf(delta) - 1.0) / delta
    }
}

fn boxcox_loglik(values: &[f64], cov: &[f64], delta: f64) -> f64 {
    let z: Vec<f64> = values.iter().map(|&y| boxcox(y, delta)).collect();
    let (a, b) = super::ols_line(cov, &z);
    let rss: f64 = z
        .iter()
        .zip(cov)
        .map(|(zi, x)| (zi - a - b * x).powi(2))
        .sum::<f64>()
        .max(1e-300);
    let n = values.len() as f64;
    let jac: f64 = values.iter().map(|y| y.ln()).sum();
    -0.5 * n * (rss / n).ln() + (delta - 1.0) * jac
}

/// Profile likelihood of the Box-Cox power that makes `values` linear in
/// `cov` with Gaussian errors. The search range is `[-3, 3]`.
pub fn boxcox_profile(values: &[f64], cov: &[f64]) -> Result<BoxCox> {
    if values.len() != cov.len() {
        return Err(Error::Dimension("values and covariate differ in length".into()));
    }
    if values.len() < 4 {
        return Err(Error::InsufficientData {
            what: "Box-Cox profile".into(),
            needed: 4,
            have: values.len(),
        });
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("Box-Cox values must be positive".into()));
    }
    let prof = |d: f64| boxcox_loglik(values, cov, d);
    let grid: Vec<f64> = (0..=600).map(|i| -3.0 + 0.01 * i as f64).collect();
    let lls: Vec<f64> = grid.iter().map(|&d| prof(d)).collect();
    let (imax, _) = lls
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &l)| if l > acc.1 { (i, l) } else { acc });
    let lo = grid[imax.saturating_sub(1)];
    let hi = grid[(imax + 1).min(grid.len() - 1)];
    let (delta, lmax) = golden_max(prof, lo, hi);
    let cut = lmax - CHI2_1_95 / 2.0;
    let cross = |from: f64, to: f64| -> f64 {
        let step = if to > from { 0.01 } else { -0.01 };
        let mut inside = from;
        loop {
            let next = inside + step;
            if (step > 0.0 && next > to) || (step < 0.0 && next < to) {
                return to;
            }
            if prof(next) < cut {
                let (mut a, mut b) = (inside, next);
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    if prof(m) < cut {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                return 0.5 * (a + b);
            }
            inside = next;
        }
    };
    Ok(BoxCox {
        delta,
        ci: (cross(delta, -3.0), cross(delta, 3.0)),
        loglik: lmax,
    })
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub model: ModelId,
    pub constraints: String,
    pub loglik: f64,
    pub criterion: Option<f64>,
    /// Criterion minus that of the first model in the ladder.
    pub relative: Option<f64>,
    pub effective_dof: Option<f64>,
    pub n_params: usize,
}

/// Pairs `(sub, sup)` where `sub` is a special case of `sup`.
const NESTED: [(ModelId, ModelId); 8] = [
    (ModelId::M1a, ModelId::M1b),
    (ModelId::M2, ModelId::M1a),
    (ModelId::M3, ModelId::M2),
    (ModelId::M4, ModelId::M3),
    (ModelId::M5, ModelId::M3),
    (ModelId::M6, ModelId::M5),
    (ModelId::M7a, ModelId::M6),
    (ModelId::M7a, ModelId::M7b),
];

/// Parameter vector on `to` reproducing the fit `from` of a nested model.
fn embed(from: &FittedModel, to: Layout, designs: &[EventDesign]) -> Result<Vec<f64>> {
    let src = Objective::new(from.layout, designs, from.basis.as_ref(), 0.0, 0.0);
    let nat = src
        .naturals(&from.values)
        .ok_or_else(|| Error::ConstraintViolation("nested fit is infeasible".into()))?;
    let mut v = to.encode(&nat, &src.covs, from.basis.as_ref())?;
    if let (Some(rf), Some(rt)) = (from.layout.spline_range(), to.spline_range()) {
        if rf.len() == rt.len() {
            v[rt].copy_from_slice(&from.values[rf]);
        }
    }
    Ok(v)
}

/// Fits each model in `models` with the shared settings of `config` and
/// reports log-likelihoods and criteria. Independent fits are shared as
/// starting values, and a fit that is beaten by the embedding of a nested
/// model's solution is restarted from that embedding.
pub fn ladder(
    datasets: &[EventDataset],
    scaler: &TimeScaler,
    epochs: &SuitEpochs,
    config: &FitConfig,
    models: &[ModelId],
) -> Result<(Vec<LadderRow>, Vec<FittedModel>)> {
    let designs: Vec<EventDesign> = datasets
        .iter()
        .map(|d| EventDesign::new(d, scaler, epochs))
        .collect();
    let need = |two: bool| models.iter().any(|m| m.two_suit() == two);
    let single: Option<Vec<IndependentFit>> = if need(false) {
        Some(
            designs
                .iter()
                .map(|d| fit::fit_independent(d, false))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let double: Option<Vec<IndependentFit>> = if need(true) {
        Some(
            designs
                .iter()
                .map(|d| fit::fit_independent(d, true))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let mut fits: Vec<FittedModel> = Vec::with_capacity(models.len());
    for &m in models {
        let cfg = FitConfig {
            model: m,
            ..config.clone()
        };
        let ind = if m.two_suit() { &double } else { &single };
        fits.push(fit::fit_with(datasets, scaler, epochs, &cfg, ind.as_deref(), None)?);
    }
    for _ in 0..2 {
        let mut changed = false;
        for (sub, sup) in NESTED {
            let (Some(i), Some(j)) = (
                models.iter().position(|&m| m == sub),
                models.iter().position(|&m| m == sup),
            ) else {
                continue;
            };
            let target = &fits[j];
            let Ok(v) = embed(&fits[i], target.layout, &designs) else {
                continue;
            };
            let obj = Objective::new(
                target.layout,
                &designs,
                target.basis.as_ref(),
                target.config.phi_r,
                target.phi_m,
            );
            let at = obj.evaluate(&v, false).penalized;
            if at > target.penalized_loglik + 1e-8 {
                let cfg = target.config.clone();
                if let Ok(refit) = fit::fit_with(datasets, scaler, epochs, &cfg, None, Some(v)) {
                    if refit.penalized_loglik > fits[j].penalized_loglik {
                        fits[j] = refit;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let base = fits.first().and_then(|f| f.criterion);
    let rows = fits
        .iter()
        .map(|f| LadderRow {
            model: f.layout.model,
            constraints: f.layout.model.constraints().to_string(),
            loglik: f.loglik,
            criterion: f.criterion,
            relative: match (f.criterion, base) {
                (Some(c), Some(b)) => Some(c - b),
                _ => None,
            },
            effective_dof: f.effective_dof,
            n_params: f.layout.len(),
        })
        .collect();
    Ok((rows, fits))
}
