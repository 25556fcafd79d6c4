//! Maximum penalized likelihood fitting.

use crate::data::{EventDataset, SuitEpochs, TimeScaler};
use crate::error::{Error, Result};
use crate::optim::{self, Options};
use crate::SplineBasis;

use super::likelihood::{EventDesign, Objective};
use super::{select, EventParams, FitConfig, FittedEvent, FittedModel, Layout, ModelId, MODEL_FORMAT};

/// Centred coordinates for the optimizer: each linear link `alpha +
/// theta u_L` is re-expressed through its value at the mean covariate.
#[derive(Debug, Clone)]
pub(crate) struct Coords {
    pairs: Vec<(usize, usize)>,
    ubar: f64,
}

impl Coords {
    pub(crate) fn new(layout: &Layout, covs_ul: &[f64]) -> Self {
        let ubar = covs_ul.iter().sum::<f64>() / covs_ul.len().max(1) as f64;
        Self {
            pairs: layout.link_pairs(),
            ubar,
        }
    }

    pub(crate) fn to_internal(&self, v: &[f64]) -> Vec<f64> {
        let mut z = v.to_vec();
        for &(a, t) in &self.pairs {
            z[a] = v[a] + v[t] * self.ubar;
        }
        z
    }

    pub(crate) fn to_natural(&self, z: &[f64]) -> Vec<f64> {
        let mut v = z.to_vec();
        for &(a, t) in &self.pairs {
            v[a] = z[a] - z[t] * self.ubar;
        }
        v
    }

    pub(crate) fn grad_to_internal(&self, g: &mut [f64]) {
        for &(a, t) in &self.pairs {
            g[t] -= self.ubar * g[a];
        }
    }
}

/// Result of optimizing one objective through the penalty schedule.
#[derive(Debug, Clone)]
pub(crate) struct Solved {
    pub values: Vec<f64>,
    pub loglik: f64,
    pub penalized: f64,
    pub roughness: f64,
    pub monotonicity: f64,
    pub phi_m: f64,
    pub iterations: usize,
    pub rounds: usize,
    pub converged: bool,
}

/// Minimizes the negative penalized log-likelihood from `x0`.
pub(crate) fn optimize(obj: &Objective, x0: &[f64], opts: &Options) -> (Vec<f64>, optim::Outcome) {
    let ul: Vec<f64> = obj.covs.iter().map(|c| c.u_l).collect();
    let coords = Coords::new(&obj.layout, &ul);
    let fg = |z: &[f64]| {
        let v = coords.to_natural(z);
        let ev = obj.evaluate(&v, true);
        if !ev.penalized.is_finite() {
            return (f64::INFINITY, vec![0.0; z.len()]);
        }
        let mut g: Vec<f64> = ev.grad.unwrap().iter().map(|x| -x).collect();
        coords.grad_to_internal(&mut g);
        (-ev.penalized, g)
    };
    let z0 = coords.to_internal(x0);
    let h0 = optim::hessian_from_gradient(
        |z| {
            let (f, g) = fg(z);
            f.is_finite().then_some(g)
        },
        &z0,
        1e-5,
    )
    .and_then(|h| optim::inverse_if_pd(&h));
    let out = optim::minimize(fg, &z0, opts, h0);
    (coords.to_natural(&out.x), out)
}

/// Pushes the start point into the feasible region by widening the GPD
/// scale of every event.
pub(crate) fn make_feasible(obj: &Objective, mut v: Vec<f64>) -> Result<Vec<f64>> {
    for _ in 0..80 {
        if obj.evaluate(&v, false).penalized.is_finite() {
            return Ok(v);
        }
        obj.layout.shift_log_scale(&mut v, 0.1);
    }
    Err(Error::Numerical(
        "could not find a feasible starting point".into(),
    ))
}

/// Runs the monotonicity-penalty schedule from `x0`, skipping weights
/// below `from_phi_m`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve(
    designs: &[EventDesign],
    basis: Option<&SplineBasis>,
    layout: Layout,
    config: &FitConfig,
    phi_r: f64,
    x0: Vec<f64>,
    max_iter: usize,
    from_phi_m: f64,
) -> Result<Solved> {
    let schedule: Vec<f64> = if layout.model.uses_spline() {
        config
            .phi_m_schedule
            .iter()
            .copied()
            .filter(|&p| p >= from_phi_m)
            .collect()
    } else {
        vec![0.0]
    };
    if schedule.is_empty() {
        return Err(Error::Validation("empty penalty schedule".into()));
    }
    let opts = Options {
        max_iter,
        ..config.optimizer()
    };
    let mut x = make_feasible(&Objective::new(layout, designs, basis, phi_r, schedule[0]), x0)?;
    let mut prev_ll = f64::NAN;
    let mut iterations = 0;
    let mut last = None;
    for (round, &phi_m) in schedule.iter().enumerate() {
        let obj = Objective::new(layout, designs, basis, phi_r, phi_m);
        let (xn, out) = optimize(&obj, &x, &opts);
        iterations += out.iterations;
        let ev = obj.evaluate(&xn, false);
        x = xn;
        let solved = Solved {
            values: x.clone(),
            loglik: ev.loglik,
            penalized: ev.penalized,
            roughness: ev.roughness,
            monotonicity: ev.monotonicity,
            phi_m,
            iterations,
            rounds: round + 1,
            converged: out.converged,
        };
        let settled = !layout.model.uses_spline()
            || (round > 0 && (ev.loglik - prev_ll).abs() < 1e-8 && ev.monotonicity < 1e-10);
        prev_ll = ev.loglik;
        if settled {
            return Ok(solved);
        }
        last = Some(solved);
    }
    let last = last.unwrap();
    if last.monotonicity < 1e-10 {
        return Ok(last);
    }
    Err(Error::NonConvergence {
        rounds: last.rounds,
        last_objective: last.penalized,
        last_iterate: last.values,
    })
}

/// Independent fit of one event.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentFit {
    pub params: EventParams,
    pub natural: [f64; 6],
    pub values: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn initial_natural(d: &EventDesign) -> [f64; 6] {
    let n = d.points.len().max(1) as f64;
    let width = d.window.1 - d.window.0;
    let rate = n / width;
    let mean_excess = d.points.iter().map(|p| p.0 - d.u).sum::<f64>() / n;
    let xi = -0.1;
    let st = (mean_excess * (1.0 - xi)).max(1e-3);
    let dd = st * (rate.powf(xi) - 1.0) / xi;
    let gamma = 0.05 * st;
    [d.u + dd, st, xi, 0.0, gamma, gamma]
}

/// Fits the single-suit (five parameter) or two-suit (six parameter)
/// model to one event.
pub fn fit_independent(design: &EventDesign, two_suit: bool) -> Result<IndependentFit> {
    let model = if two_suit { ModelId::M1b } else { ModelId::M1a };
    let layout = Layout::new(model, 1, 0);
    let designs = std::slice::from_ref(design);
    let obj = Objective::new(layout, designs, None, 0.0, 0.0);
    let x0 = layout.encode(&[initial_natural(design)], &obj.covs, None)?;
    let cfg = FitConfig::for_model(model);
    let s = solve(designs, None, layout, &cfg, 0.0, x0, cfg.max_iter, 0.0)?;
    let (nu, _) = layout.decode_event(&s.values, 0, &obj.covs[0]).unwrap();
    Ok(IndependentFit {
        params: EventParams::from_natural(&nu, design.u),
        natural: nu,
        values: s.values,
        loglik: s.loglik,
        iterations: s.iterations,
        converged: s.converged,
    })
}

/// Profile-likelihood confidence interval for the shape of one event at
/// level given by the chi-square(1) cutoff `crit` (3.8415 for 95%).
pub fn profile_xi_ci(design: &EventDesign, fit: &IndependentFit, crit: f64) -> Result<(f64, f64)> {
    let model = if fit.values.len() == 6 { ModelId::M1b } else { ModelId::M1a };
    let layout = Layout::new(model, 1, 0);
    let designs = std::slice::from_ref(design);
    let obj = Objective::new(layout, designs, None, 0.0, 0.0);
    let xi_hat = fit.values[2];
    let target = fit.loglik - crit / 2.0;
    let opts = Options::default();
    let profile = |xi: f64, start: &mut Vec<f64>| -> f64 {
        let free: Vec<usize> = (0..layout.len()).filter(|&i| i != 2).collect();
        let embed = |z: &[f64]| {
            let mut v = vec![0.0; layout.len()];
            v[2] = xi;
            for (k, &i) in free.iter().enumerate() {
                v[i] = z[k];
            }
            v
        };
        let fg = |z: &[f64]| {
            let ev = obj.evaluate(&embed(z), true);
            if !ev.penalized.is_finite() {
                return (f64::INFINITY, vec![0.0; z.len()]);
            }
            let g = ev.grad.unwrap();
            (-ev.penalized, free.iter().map(|&i| -g[i]).collect())
        };
        let mut v0 = start.clone();
        v0[2] = xi;
        let v0 = match make_feasible(&obj, v0) {
            Ok(v) => v,
            Err(_) => return f64::NEG_INFINITY,
        };
        let z0: Vec<f64> = free.iter().map(|&i| v0[i]).collect();
        let out = optim::minimize(fg, &z0, &opts, None);
        if out.f.is_finite() {
            *start = embed(&out.x);
        }
        -out.f
    };
    let bound = |dir: f64| -> f64 {
        let mut s = fit.values.clone();
        let mut inside = xi_hat;
        let mut step = 0.01;
        let mut outside = None;
        for _ in 0..200 {
            let cand = inside + dir * step;
            let ll = profile(cand, &mut s);
            if ll < target {
                outside = Some(cand);
                break;
            }
            inside = cand;
            step *= 1.3;
            if (cand - xi_hat).abs() > 3.0 {
                break;
            }
        }
        let Some(mut out) = outside else {
            return dir * f64::INFINITY;
        };
        let mut inn = inside;
        while (out - inn).abs() > 1e-5 {
            let mid = 0.5 * (out + inn);
            let mut s2 = s.clone();
            if profile(mid, &mut s2) < target {
                out = mid;
            } else {
                inn = mid;
                s = s2;
            }
        }
        0.5 * (out + inn)
    };
    let lo = bound(-1.0);
    let hi = bound(1.0);
    Ok((lo, hi))
}

/// Builds designs and the spline basis for a set of datasets.
pub(crate) fn prepare(
    datasets: &[EventDataset],
    scaler: &TimeScaler,
    epochs: &SuitEpochs,
    config: &FitConfig,
) -> Result<(Vec<EventDesign>, Option<SplineBasis>)> {
    if datasets.is_empty() {
        return Err(Error::InsufficientData {
            what: "fit".into(),
            needed: 1,
            have: 0,
        });
    }
    let designs: Vec<EventDesign> = datasets
        .iter()
        .map(|d| EventDesign::new(d, scaler, epochs))
        .collect();
    let basis = if config.model.uses_spline() {
        let ul: Vec<f64> = datasets.iter().map(|d| d.u_l).collect();
        Some(SplineBasis::covering(&ul, config.q, config.degree, config.knot_margin)?)
    } else {
        None
    };
    Ok((designs, basis))
}

/// Starting values for a pooled model from independent fits.
pub(crate) fn initial_values(
    layout: &Layout,
    designs: &[EventDesign],
    basis: Option<&SplineBasis>,
    indep: &[IndependentFit],
) -> Result<Vec<f64>> {
    let obj = Objective::new(*layout, designs, basis, 0.0, 0.0);
    let naturals: Vec<[f64; 6]> = indep.iter().map(|f| f.natural).collect();
    layout.encode(&naturals, &obj.covs, basis)
}

/// Fits `config.model` to the datasets.
pub fn fit(
    datasets: &[EventDataset],
    scaler: &TimeScaler,
    epochs: &SuitEpochs,
    config: &FitConfig,
) -> Result<FittedModel> {
    fit_with(datasets, scaler, epochs, config, None, None)
}

/// Fits with optional precomputed independent fits and an optional start
/// point on the target layout.
pub(crate) fn fit_with(
    datasets: &[EventDataset],
    scaler: &TimeScaler,
    epochs: &SuitEpochs,
    config: &FitConfig,
    indep: Option<&[IndependentFit]>,
    start: Option<Vec<f64>>,
) -> Result<FittedModel> {
    let (designs, basis) = prepare(datasets, scaler, epochs, config)?;
    let layout = Layout::new(config.model, designs.len(), config.q);
    let x0 = match start {
        Some(v) => v,
        None => {
            let owned;
            let ind = match indep {
                Some(f) if f.len() == designs.len() => f,
                _ => {
                    let two = config.model.two_suit();
                    owned = designs
                        .iter()
                        .map(|d| fit_independent(d, two))
                        .collect::<Result<Vec<_>>>()?;
                    &owned[..]
                }
            };
            if config.model.independent() {
                let mut v = Vec::with_capacity(layout.len());
                for f in ind {
                    v.extend_from_slice(&f.values);
                }
                v
            } else {
                initial_values(&layout, &designs, basis.as_ref(), ind)?
            }
        }
    };
    let solved = solve(
        &designs,
        basis.as_ref(),
        layout,
        config,
        config.phi_r,
        x0,
        config.max_iter,
        0.0,
    )?;
    assemble(datasets, scaler, epochs, config, &designs, basis, layout, solved)
}

/// Refits a model to new data, warm-started at `start` (a parameter vector
/// on the model's layout) with an iteration cap.
pub fn fit_from(
    template: &FittedModel,
    datasets: &[EventDataset],
    start: &[f64],
    max_iter: usize,
) -> Result<FittedModel> {
    let config = &template.config;
    let designs: Vec<EventDesign> = datasets
        .iter()
        .map(|d| EventDesign::new(d, &template.scaler, &template.suit_epochs))
        .collect();
    let basis = template.basis.clone();
    let layout = template.layout;
    let solved = solve(
        &designs,
        basis.as_ref(),
        layout,
        config,
        config.phi_r,
        start.to_vec(),
        max_iter,
        template.phi_m.min(*config.phi_m_schedule.iter().rev().nth(1).unwrap_or(&0.0)),
    )?;
    let mut m = assemble_events(datasets, template, &designs, solved)?;
    m.effective_dof = None;
    m.criterion = None;
    Ok(m)
}

fn assemble_events(
    datasets: &[EventDataset],
    template: &FittedModel,
    designs: &[EventDesign],
    s: Solved,
) -> Result<FittedModel> {
    let obj = Objective::new(template.layout, designs, template.basis.as_ref(), 0.0, 0.0);
    let mut events = Vec::with_capacity(designs.len());
    for (e, d) in datasets.iter().enumerate() {
        let (nu, _) = template
            .layout
            .decode_event(&s.values, e, &obj.covs[e])
            .ok_or_else(|| Error::ConstraintViolation("negative suit link".into()))?;
        events.push(fitted_event(d, EventParams::from_natural(&nu, d.threshold_u)));
    }
    Ok(FittedModel {
        values: s.values,
        events,
        loglik: s.loglik,
        penalized_loglik: s.penalized,
        roughness: s.roughness,
        monotonicity: s.monotonicity,
        phi_m: s.phi_m,
        iterations: s.iterations,
        rounds: s.rounds,
        converged: s.converged,
        ..template.clone()
    })
}

fn fitted_event(d: &EventDataset, params: EventParams) -> FittedEvent {
    let (record_x, record_date) = d
        .record()
        .unwrap_or((d.raw_threshold_u_prime, chrono::NaiveDate::MIN));
    FittedEvent {
        event_id: d.event_id.clone(),
        threshold_u: d.threshold_u,
        raw_threshold_u_prime: d.raw_threshold_u_prime,
        u_l: d.u_l,
        censor_s: d.censor_s,
        n_points: d.points.len(),
        record_x,
        record_date,
        params,
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    datasets: &[EventDataset],
    scaler: &TimeScaler,
    epochs: &SuitEpochs,
    config: &FitConfig,
    designs: &[EventDesign],
    basis: Option<SplineBasis>,
    layout: Layout,
    s: Solved,
) -> Result<FittedModel> {
    let obj = Objective::new(layout, designs, basis.as_ref(), 0.0, 0.0);
    let spline_domain = obj.pm_domain;
    let template = FittedModel {
        format: MODEL_FORMAT.to_string(),
        config: config.clone(),
        layout,
        values: Vec::new(),
        basis,
        spline_domain,
        events: Vec::new(),
        scaler: scaler.clone(),
        suit_epochs: *epochs,
        loglik: f64::NAN,
        penalized_loglik: f64::NAN,
        roughness: 0.0,
        monotonicity: 0.0,
        phi_m: 0.0,
        effective_dof: None,
        criterion: None,
        iterations: 0,
        rounds: 0,
        converged: false,
    };
    let mut m = assemble_events(datasets, &template, designs, s)?;
    if layout.model.uses_spline() {
        if let Ok((crit, g)) = select::ric_on(&m, designs) {
            m.effective_dof = Some(g);
            m.criterion = Some(crit);
        }
    } else {
        let p = layout.len() as f64;
        m.effective_dof = Some(p);
        m.criterion = Some(-2.0 * m.loglik + 2.0 * p);
    }
    Ok(m)
}
