//! Per-event and pooled parametrizations, penalized likelihood fitting,
//! model selection and goodness-of-fit diagnostics.

mod diagnostics;
mod fit;
mod likelihood;
mod select;

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{SuitEpochs, TimeScaler};
use crate::error::{Error, Result};
use crate::evt::{GevParams, GpdParams};
use crate::optim;
use crate::SplineBasis;

pub use diagnostics::{pooled_pp, rate_check, PpPoint, RateRow};
pub use fit::{fit, fit_from, fit_independent, profile_xi_ci, IndependentFit};
pub use likelihood::{reference_event_loglik, EventCov, EventDesign, Objective};
pub use select::{
    boxcox_profile, cross_validate_phi_r, ladder, ric, BoxCox, CvResult, LadderRow,
};

/// Version tag written into serialized models.
pub const MODEL_FORMAT: &str = "evtpool-model/1";

/// The model ladder, from independent per-event fits to the fully pooled
/// two-suit spline model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    M1a,
    M1b,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7a,
    M7b,
}

impl ModelId {
    pub const ALL: [ModelId; 9] = [
        ModelId::M1a,
        ModelId::M1b,
        ModelId::M2,
        ModelId::M3,
        ModelId::M4,
        ModelId::M5,
        ModelId::M6,
        ModelId::M7a,
        ModelId::M7b,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::M1a => "M1a",
            ModelId::M1b => "M1b",
            ModelId::M2 => "M2",
            ModelId::M3 => "M3",
            ModelId::M4 => "M4",
            ModelId::M5 => "M5",
            ModelId::M6 => "M6",
            ModelId::M7a => "M7a",
            ModelId::M7b => "M7b",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown model {s:?}")))
    }

    /// Separate effects for the two suit epochs.
    pub fn two_suit(self) -> bool {
        matches!(self, ModelId::M1b | ModelId::M7b)
    }

    pub fn independent(self) -> bool {
        matches!(self, ModelId::M1a | ModelId::M1b)
    }

    pub fn uses_spline(self) -> bool {
        matches!(self, ModelId::M5 | ModelId::M6 | ModelId::M7a | ModelId::M7b)
    }

    /// Human-readable constraint summary for the ladder report.
    pub fn constraints(self) -> &'static str {
        match self {
            ModelId::M1a => "independent fits, single suit",
            ModelId::M1b => "independent fits, two suits",
            ModelId::M2 => "M1a with common shape",
            ModelId::M3 => "M2 with log-linear location",
            ModelId::M4 => "M3 with log-linear scale",
            ModelId::M5 => "M3 with spline scale",
            ModelId::M6 => "M5 with log-linear trend",
            ModelId::M7a => "M6 with square-root-linear suit effect",
            ModelId::M7b => "M1b with common shape, log-linear location and trend, spline scale, two suit effects",
        }
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Poisson-process parameters of one event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventParams {
    pub mu0: f64,
    pub sigma0: f64,
    pub xi: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl EventParams {
    /// From the natural vector `[mu0, sigma_tilde, xi, beta, gamma1, gamma2]`
    /// at threshold `u`.
    pub fn from_natural(nu: &[f64; 6], u: f64) -> Self {
        let [mu0, st, xi, beta, gamma1, gamma2] = *nu;
        Self {
            mu0,
            sigma0: st - xi * (u - mu0),
            xi,
            beta,
            gamma1,
            gamma2,
        }
    }

    pub fn natural(&self, u: f64) -> [f64; 6] {
        [
            self.mu0,
            self.gpd_scale(u),
            self.xi,
            self.beta,
            self.gamma1,
            self.gamma2,
        ]
    }

    /// GPD scale of exceedances of `u`; free of time and suit covariates.
    pub fn gpd_scale(&self, u: f64) -> f64 {
        self.sigma0 + self.xi * (u - self.mu0)
    }

    pub fn gpd(&self, u: f64) -> Result<GpdParams<f64>> {
        GpdParams::new(u, self.gpd_scale(u), self.xi)
    }

    pub fn suit_shift(&self, suit: u8) -> f64 {
        match suit {
            1 => self.gamma1,
            2 => self.gamma2,
            _ => 0.0,
        }
    }
}

/// GEV parameters of an event at standardized time `t` in suit epoch
/// `suit` (0 none, 1, 2).
pub fn time_varying_params(ep: &EventParams, t: f64, suit: u8) -> Result<GevParams<f64>> {
    let shift = ep.beta * t + ep.suit_shift(suit);
    GevParams::new(ep.mu0 + shift, ep.sigma0 + ep.xi * shift, ep.xi)
}

/// Pooled parameters of the parametric and spline-pooled models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledParams {
    pub xi: f64,
    pub alpha1: f64,
    pub theta1: f64,
    pub spline_a: Vec<f64>,
    pub alpha3: f64,
    pub theta3: f64,
    pub alpha4: f64,
    pub theta4: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta2: Option<f64>,
}

/// Event parameters implied by pooled parameters at covariate `u_l` and
/// threshold `u`. `M4` uses the linear scale link, the spline models use
/// `basis`, and only `M7b` uses `epsilon`.
pub fn event_params_from_pooled(
    psi: &PooledParams,
    u_l: f64,
    u: f64,
    model: ModelId,
    basis: Option<&SplineBasis>,
) -> Result<EventParams> {
    let mu0 = -(psi.alpha1 + psi.theta1 * u_l).exp();
    let sigma_l = match (model, psi.alpha2, psi.theta2) {
        (ModelId::M4, Some(a2), Some(t2)) => a2 + t2 * u_l,
        _ => {
            let b = basis.ok_or_else(|| {
                Error::Parameter("spline basis required for the scale link".into())
            })?;
            crate::splines::spline_eval(u_l, &psi.spline_a, b)?
        }
    };
    let st = sigma_l.exp();
    let beta = (psi.alpha3 + psi.theta3 * u_l).exp();
    let gl1 = psi.alpha4 + psi.theta4 * u_l;
    let gl2 = if model.two_suit() { gl1 + psi.epsilon } else { gl1 };
    if gl1 < 0.0 || gl2 < 0.0 {
        return Err(Error::ConstraintViolation(format!(
            "negative suit link at u_L = {u_l}"
        )));
    }
    Ok(EventParams::from_natural(
        &[mu0, st, psi.xi, beta, gl1 * gl1, gl2 * gl2],
        u,
    ))
}

/// Transformed parameters `(mu_L, sigma_L, beta_L, gamma_L1, gamma_L2)`.
pub fn transformed(ep: &EventParams, u: f64) -> [f64; 5] {
    [
        (-ep.mu0).ln(),
        ep.gpd_scale(u).ln(),
        ep.beta.ln(),
        ep.gamma1.sqrt(),
        ep.gamma2.sqrt(),
    ]
}

/// Inverse of [`transformed`].
pub fn from_transformed(tr: &[f64; 5], xi: f64, u: f64) -> EventParams {
    EventParams::from_natural(
        &[-tr[0].exp(), tr[1].exp(), xi, tr[2].exp(), tr[3] * tr[3], tr[4] * tr[4]],
        u,
    )
}

/// Position of each parameter block in a model's flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub model: ModelId,
    pub n_events: usize,
    /// Spline dimension; zero for models without a spline.
    pub q: usize,
}

/// Derivatives of the natural event vector with respect to one parameter.
pub(crate) type JacEntry = (usize, [f64; 6]);

impl Layout {
    pub fn new(model: ModelId, n_events: usize, q: usize) -> Self {
        Self {
            model,
            n_events,
            q: if model.uses_spline() { q } else { 0 },
        }
    }

    pub fn shared_len(&self) -> usize {
        let q = self.q;
        match self.model {
            ModelId::M1a | ModelId::M1b => 0,
            ModelId::M2 => 1,
            ModelId::M3 => 3,
            ModelId::M4 => 5,
            ModelId::M5 => 3 + q,
            ModelId::M6 => 5 + q,
            ModelId::M7a => 7 + q,
            ModelId::M7b => 8 + q,
        }
    }

    pub fn per_event_len(&self) -> usize {
        match self.model {
            ModelId::M1a => 5,
            ModelId::M1b => 6,
            ModelId::M2 => 4,
            ModelId::M3 => 3,
            ModelId::M4 | ModelId::M5 => 2,
            ModelId::M6 => 1,
            ModelId::M7a | ModelId::M7b => 0,
        }
    }

    pub fn len(&self) -> usize {
        self.shared_len() + self.n_events * self.per_event_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spline_range(&self) -> Option<std::ops::Range<usize>> {
        self.model.uses_spline().then(|| 3..3 + self.q)
    }

    /// Index pairs `(alpha, theta)` of the linear links.
    pub fn link_pairs(&self) -> Vec<(usize, usize)> {
        let q = self.q;
        let mut v = Vec::new();
        if self.model >= ModelId::M3 {
            v.push((1, 2));
        }
        if self.model == ModelId::M4 {
            v.push((3, 4));
        }
        if self.model >= ModelId::M6 {
            v.push((3 + q, 4 + q));
        }
        if self.model >= ModelId::M7a {
            v.push((5 + q, 6 + q));
        }
        v
    }

    /// Natural event vector and its derivatives with respect to the flat
    /// parameters. `None` when a suit link is negative.
    pub(crate) fn decode_event(
        &self,
        values: &[f64],
        e: usize,
        cov: &EventCov,
    ) -> Option<([f64; 6], Vec<JacEntry>)> {
        let q = self.q;
        let m = self.model;
        let b = self.shared_len() + e * self.per_event_len();
        let ul = cov.u_l;
        let mut jac: Vec<JacEntry> = Vec::with_capacity(8 + q);
        let mut nu = [0.0; 6];
        let unit = |k: usize, v: f64| {
            let mut d = [0.0; 6];
            d[k] = v;
            d
        };
        // location
        if m <= ModelId::M2 {
            nu[0] = values[b];
            jac.push((b, unit(0, 1.0)));
        } else {
            nu[0] = -(values[1] + values[2] * ul).exp();
            jac.push((1, unit(0, nu[0])));
            jac.push((2, unit(0, nu[0] * ul)));
        }
        // GPD scale
        match m {
            ModelId::M1a | ModelId::M1b | ModelId::M2 | ModelId::M3 => {
                let i = match m {
                    ModelId::M3 => b,
                    _ => b + 1,
                };
                nu[1] = values[i].exp();
                jac.push((i, unit(1, nu[1])));
            }
            ModelId::M4 => {
                nu[1] = (values[3] + values[4] * ul).exp();
                jac.push((3, unit(1, nu[1])));
                jac.push((4, unit(1, nu[1] * ul)));
            }
            _ => {
                let sl: f64 = cov
                    .basis_row
                    .iter()
                    .zip(&values[3..3 + q])
                    .map(|(bk, ak)| bk * ak)
                    .sum();
                nu[1] = sl.exp();
                for (k, bk) in cov.basis_row.iter().enumerate() {
                    if *bk != 0.0 {
                        jac.push((3 + k, unit(1, nu[1] * bk)));
                    }
                }
            }
        }
        // shape
        if m.independent() {
            nu[2] = values[b + 2];
            jac.push((b + 2, unit(2, 1.0)));
        } else {
            nu[2] = values[0];
            jac.push((0, unit(2, 1.0)));
        }
        // trend
        match m {
            ModelId::M1a | ModelId::M1b => {
                nu[3] = values[b + 3];
                jac.push((b + 3, unit(3, 1.0)));
            }
            ModelId::M2 => {
                nu[3] = values[b + 2];
                jac.push((b + 2, unit(3, 1.0)));
            }
            ModelId::M3 => {
                nu[3] = values[b + 1];
                jac.push((b + 1, unit(3, 1.0)));
            }
            ModelId::M4 | ModelId::M5 => {
                nu[3] = values[b];
                jac.push((b, unit(3, 1.0)));
            }
            _ => {
                let (ia, it) = (3 + q, 4 + q);
                nu[3] = (values[ia] + values[it] * ul).exp();
                jac.push((ia, unit(3, nu[3])));
                jac.push((it, unit(3, nu[3] * ul)));
            }
        }
        // suit effects
        match m {
            ModelId::M1b => {
                let (g1, g2) = (values[b + 4], values[b + 5]);
                nu[4] = g1 * g1;
                nu[5] = g2 * g2;
                jac.push((b + 4, unit(4, 2.0 * g1)));
                jac.push((b + 5, unit(5, 2.0 * g2)));
            }
            ModelId::M7a | ModelId::M7b => {
                let (ia, it) = (5 + q, 6 + q);
                let g1 = values[ia] + values[it] * ul;
                let g2 = if m == ModelId::M7b { g1 + values[7 + q] } else { g1 };
                if g1 < 0.0 || g2 < 0.0 {
                    return None;
                }
                nu[4] = g1 * g1;
                nu[5] = g2 * g2;
                let mut da = [0.0; 6];
                da[4] = 2.0 * g1;
                da[5] = 2.0 * g2;
                let mut dt = da;
                dt[4] *= ul;
                dt[5] *= ul;
                jac.push((ia, da));
                jac.push((it, dt));
                if m == ModelId::M7b {
                    jac.push((7 + q, unit(5, 2.0 * g2)));
                }
            }
            _ => {
                let i = match m {
                    ModelId::M1a => b + 4,
                    ModelId::M2 => b + 3,
                    ModelId::M3 => b + 2,
                    ModelId::M4 | ModelId::M5 => b + 1,
                    _ => b,
                };
                let g = values[i];
                nu[4] = g * g;
                nu[5] = g * g;
                let mut d = [0.0; 6];
                d[4] = 2.0 * g;
                d[5] = 2.0 * g;
                jac.push((i, d));
            }
        }
        Some((nu, jac))
    }

    /// Flat parameters reproducing (as closely as the constraints allow) the
    /// given natural per-event vectors: per-event blocks are copied and
    /// pooled links are set by least squares on `u_L`.
    pub fn encode(
        &self,
        naturals: &[[f64; 6]],
        covs: &[EventCov],
        basis: Option<&SplineBasis>,
    ) -> Result<Vec<f64>> {
        if naturals.len() != self.n_events || covs.len() != self.n_events {
            return Err(Error::Dimension("one natural vector per event expected".into()));
        }
        let q = self.q;
        let m = self.model;
        let mut v = vec![0.0; self.len()];
        let ul: Vec<f64> = covs.iter().map(|c| c.u_l).collect();
        let col = |k: usize| naturals.iter().map(|n| n[k]).collect::<Vec<f64>>();
        let sq_single: Vec<f64> = naturals
            .iter()
            .map(|n| (0.5 * (n[4] + n[5])).max(0.0).sqrt())
            .collect();
        if !m.independent() {
            let xs = col(2);
            v[0] = xs.iter().sum::<f64>() / xs.len() as f64;
        }
        if m >= ModelId::M3 {
            let y: Vec<f64> = col(0).iter().map(|mu| (-mu).max(1e-12).ln()).collect();
            let (a, t) = ols_line(&ul, &y);
            v[1] = a;
            v[2] = t;
        }
        let ls: Vec<f64> = col(1).iter().map(|s| s.max(1e-12).ln()).collect();
        if m == ModelId::M4 {
            let (a, t) = ols_line(&ul, &ls);
            v[3] = a;
            v[4] = t;
        }
        if m.uses_spline() {
            let b = basis.ok_or_else(|| Error::Parameter("spline basis required".into()))?;
            let a = crate::splines::fit_penalized_ls(&ul, &ls, b, 1e-1)?;
            v[3..3 + q].copy_from_slice(&a);
        }
        if m >= ModelId::M6 {
            let y: Vec<f64> = col(3).iter().map(|b| b.max(1e-4).ln()).collect();
            let (a, t) = ols_line(&ul, &y);
            v[3 + q] = a;
            v[4 + q] = t;
        }
        if m >= ModelId::M7a {
            let g1: Vec<f64> = if m == ModelId::M7b {
                col(4).iter().map(|g| g.max(0.0).sqrt()).collect()
            } else {
                sq_single.clone()
            };
            let (mut a, t) = ols_line(&ul, &g1);
            let mut eps = 0.0;
            if m == ModelId::M7b {
                let g2: Vec<f64> = col(5).iter().map(|g| g.max(0.0).sqrt()).collect();
                eps = g2
                    .iter()
                    .zip(&ul)
                    .map(|(g, u)| g - (a + t * u))
                    .sum::<f64>()
                    / ul.len() as f64;
            }
            let low = ul
                .iter()
                .map(|u| (a + t * u).min(a + t * u + eps))
                .fold(f64::INFINITY, f64::min);
            if low < 1e-3 {
                a += 1e-3 - low;
            }
            v[5 + q] = a;
            v[6 + q] = t;
            if m == ModelId::M7b {
                v[7 + q] = eps;
            }
        }
        for (e, n) in naturals.iter().enumerate() {
            let b = self.shared_len() + e * self.per_event_len();
            let g = sq_single[e];
            match m {
                ModelId::M1a => v[b..b + 5].copy_from_slice(&[n[0], ls[e], n[2], n[3], g]),
                ModelId::M1b => v[b..b + 6].copy_from_slice(&[
                    n[0],
                    ls[e],
                    n[2],
                    n[3],
                    n[4].max(0.0).sqrt(),
                    n[5].max(0.0).sqrt(),
                ]),
                ModelId::M2 => v[b..b + 4].copy_from_slice(&[n[0], ls[e], n[3], g]),
                ModelId::M3 => v[b..b + 3].copy_from_slice(&[ls[e], n[3], g]),
                ModelId::M4 | ModelId::M5 => v[b..b + 2].copy_from_slice(&[n[3], g]),
                ModelId::M6 => v[b] = g,
                _ => {}
            }
        }
        Ok(v)
    }

    /// Adds `shift` to every log-scale parameter, widening each event's
    /// GPD scale by the factor `exp(shift)`.
    pub(crate) fn shift_log_scale(&self, values: &mut [f64], shift: f64) {
        match self.model {
            ModelId::M1a | ModelId::M1b | ModelId::M2 | ModelId::M3 => {
                let off = if self.model == ModelId::M3 { 0 } else { 1 };
                for e in 0..self.n_events {
                    values[self.shared_len() + e * self.per_event_len() + off] += shift;
                }
            }
            ModelId::M4 => values[3] += shift,
            _ => {
                for a in &mut values[3..3 + self.q] {
                    *a += shift;
                }
            }
        }
    }

    /// Names of the flat parameters, for reports.
    pub fn names(&self, event_ids: &[String]) -> Vec<String> {
        let q = self.q;
        let mut n: Vec<String> = Vec::with_capacity(self.len());
        if !self.model.independent() {
            n.push("xi".into());
        }
        if self.model >= ModelId::M3 {
            n.push("alpha1".into());
            n.push("theta1".into());
        }
        if self.model == ModelId::M4 {
            n.push("alpha2".into());
            n.push("theta2".into());
        }
        if self.model.uses_spline() {
            for k in 0..q {
                n.push(format!("a{}", k + 1));
            }
        }
        if self.model >= ModelId::M6 {
            n.push("alpha3".into());
            n.push("theta3".into());
        }
        if self.model >= ModelId::M7a {
            n.push("alpha4".into());
            n.push("theta4".into());
        }
        if self.model == ModelId::M7b {
            n.push("epsilon".into());
        }
        let per: &[&str] = match self.model {
            ModelId::M1a => &["mu0", "sigma_l", "xi", "beta", "g"],
            ModelId::M1b => &["mu0", "sigma_l", "xi", "beta", "g1", "g2"],
            ModelId::M2 => &["mu0", "sigma_l", "beta", "g"],
            ModelId::M3 => &["sigma_l", "beta", "g"],
            ModelId::M4 | ModelId::M5 => &["beta", "g"],
            ModelId::M6 => &["g"],
            _ => &[],
        };
        for id in event_ids.iter().take(self.n_events) {
            for p in per {
                n.push(format!("{p}[{id}]"));
            }
        }
        n
    }
}

/// Least-squares line `y = a + b x`.
pub(crate) fn ols_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

/// Settings of a fit. Missing fields take their defaults when read from
/// JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub model: ModelId,
    pub phi_r: f64,
    pub phi_m_schedule: Vec<f64>,
    pub q: usize,
    pub degree: usize,
    /// Knot-domain margin as a fraction of the covariate range.
    pub knot_margin: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub cv_folds: usize,
    pub cv_repeats: usize,
    pub cv_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelId::M7b,
            phi_r: 15.0,
            phi_m_schedule: std::iter::once(0.0)
                .chain((1..=8).map(|k| 10f64.powi(k)))
                .collect(),
            q: 10,
            degree: 4,
            knot_margin: 0.01,
            max_iter: 3000,
            grad_tol: 1e-7,
            cv_folds: 10,
            cv_repeats: 20,
            cv_grid: vec![0.0, 1.0, 5.0, 15.0, 50.0, 150.0, 500.0],
            seed: 1,
        }
    }
}

impl FitConfig {
    pub fn for_model(model: ModelId) -> Self {
        Self {
            model,
            ..Self::default()
        }
    }

    pub(crate) fn optimizer(&self) -> optim::Options {
        optim::Options {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            ..optim::Options::default()
        }
    }
}

/// Per-event quantities stored with a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEvent {
    pub event_id: String,
    pub threshold_u: f64,
    pub raw_threshold_u_prime: f64,
    pub u_l: f64,
    pub censor_s: f64,
    pub n_points: usize,
    /// Best negated time in the fitted data.
    pub record_x: f64,
    pub record_date: NaiveDate,
    pub params: EventParams,
}

impl FittedEvent {
    pub fn gpd(&self) -> Result<GpdParams<f64>> {
        self.params.gpd(self.threshold_u)
    }
}

/// A fitted model with everything needed to evaluate, simulate from and
/// refit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format: String,
    pub config: FitConfig,
    pub layout: Layout,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<SplineBasis>,
    /// Covariate interval over which monotonicity of the scale spline is
    /// enforced.
    pub spline_domain: (f64, f64),
    pub events: Vec<FittedEvent>,
    pub scaler: TimeScaler,
    pub suit_epochs: SuitEpochs,
    pub loglik: f64,
    pub penalized_loglik: f64,
    pub roughness: f64,
    pub monotonicity: f64,
    pub phi_m: f64,
    /// Effective number of parameters; the plain count for unpenalized
    /// models.
    pub effective_dof: Option<f64>,
    /// `-2 loglik + 2 effective_dof`: AIC for unpenalized models, RIC
    /// otherwise.
    pub criterion: Option<f64>,
    pub iterations: usize,
    pub rounds: usize,
    pub converged: bool,
}

impl FittedModel {
    pub fn event_index(&self, id: &str) -> Result<usize> {
        self.events
            .iter()
            .position(|e| e.event_id == id)
            .ok_or_else(|| Error::UnknownEvent(id.to_string()))
    }

    pub fn event(&self, id: &str) -> Result<&FittedEvent> {
        Ok(&self.events[self.event_index(id)?])
    }

    pub fn event_ids(&self) -> Vec<String> {
        self.events.iter().map(|e| e.event_id.clone()).collect()
    }

    /// Pooled parameter view for the pooled parametric and spline models.
    pub fn pooled(&self) -> Option<PooledParams> {
        let m = self.layout.model;
        if m < ModelId::M4 {
            return None;
        }
        let v = &self.values;
        let q = self.layout.q;
        let get = |i: usize| v.get(i).copied().unwrap_or(0.0);
        Some(PooledParams {
            xi: v[0],
            alpha1: v[1],
            theta1: v[2],
            spline_a: if m.uses_spline() { v[3..3 + q].to_vec() } else { Vec::new() },
            alpha3: if m >= ModelId::M6 { get(3 + q) } else { f64::NAN },
            theta3: if m >= ModelId::M6 { get(4 + q) } else { f64::NAN },
            alpha4: if m >= ModelId::M7a { get(5 + q) } else { f64::NAN },
            theta4: if m >= ModelId::M7a { get(6 + q) } else { f64::NAN },
            epsilon: if m == ModelId::M7b { get(7 + q) } else { 0.0 },
            alpha2: (m == ModelId::M4).then(|| v[3]),
            theta2: (m == ModelId::M4).then(|| v[4]),
        })
    }

    /// GEV parameters of event `e` at decimal year `year`.
    pub fn gev_at_year(&self, e: usize, year: f64) -> Result<GevParams<f64>> {
        let suit = self.suit_epochs.epoch_of_year(year);
        time_varying_params(&self.events[e].params, self.scaler.standardize(year), suit)
    }

    /// Same as [`FittedModel::gev_at_year`] with suit effects switched off.
    pub fn gev_at_year_no_suit(&self, e: usize, year: f64) -> Result<GevParams<f64>> {
        time_varying_params(&self.events[e].params, self.scaler.standardize(year), 0)
    }

    /// Panel breakpoints (decimal years) where the intensity may jump.
    pub fn year_breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.suit_epochs.edges().to_vec();
        b.extend(self.scaler.year_boundaries.iter().copied());
        b.sort_by(|a, c| a.partial_cmp(c).unwrap());
        b.dedup();
        b
    }

    /// Rebuilds the model from new parameter values on the same layout,
    /// recomputing per-event parameters.
    pub fn with_values(&self, values: Vec<f64>) -> Result<FittedModel> {
        let covs = self.covs();
        let mut out = self.clone();
        for (e, ev) in out.events.iter_mut().enumerate() {
            let (nu, _) = self
                .layout
                .decode_event(&values, e, &covs[e])
                .ok_or_else(|| Error::ConstraintViolation("negative suit link".into()))?;
            ev.params = EventParams::from_natural(&nu, ev.threshold_u);
        }
        out.values = values;
        Ok(out)
    }

    pub(crate) fn covs(&self) -> Vec<EventCov> {
        self.events
            .iter()
            .map(|e| EventCov::new(e.threshold_u, e.u_l, self.basis.as_ref()))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let found = v.get("format").and_then(|f| f.as_str()).unwrap_or("");
        if found != MODEL_FORMAT {
            return Err(Error::Version {
                found: found.to_string(),
                expected: MODEL_FORMAT.to_string(),
            });
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
