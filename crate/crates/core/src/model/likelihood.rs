//! Event likelihood with analytic gradients, and the pooled penalized
//! objective.

use rayon::prelude::*;

use crate::data::{EventDataset, SuitEpochs, TimeScaler};
use crate::evt::{self, PointObs};
use crate::quad;
use crate::splines;
use crate::{PenaltyMatrix, SplineBasis};

use super::{time_varying_params, EventParams, JacEntry, Layout};

/// Threshold and pooling covariate of one event, with the spline basis
/// evaluated at the covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct EventCov {
    pub u: f64,
    pub u_l: f64,
    pub basis_row: Vec<f64>,
}

impl EventCov {
    pub fn new(u: f64, u_l: f64, basis: Option<&SplineBasis>) -> Self {
        let basis_row = basis
            .and_then(|b| b.eval(u_l).ok())
            .unwrap_or_default();
        Self { u, u_l, basis_row }
    }
}

/// Precomputed quadrature nodes and exceedances of one event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDesign {
    pub event_id: String,
    pub u: f64,
    pub u_l: f64,
    pub s: f64,
    /// `(x, t, suit)` for each exceedance.
    pub points: Vec<(f64, f64, u8)>,
    /// `(t, weight, suit)` Gauss–Legendre nodes over the window.
    pub nodes: Vec<(f64, f64, u8)>,
    /// Multiplier on the integrated intensity.
    pub lambda_scale: f64,
    pub window: (f64, f64),
    /// Standardized panel breakpoints.
    pub breakpoints: Vec<f64>,
    /// Standardized suit-epoch edges.
    pub suit_edges: [f64; 4],
}

impl EventDesign {
    pub fn new(d: &EventDataset, scaler: &TimeScaler, epochs: &SuitEpochs) -> Self {
        let points = d
            .points
            .iter()
            .map(|p| (p.x, scaler.standardize(p.year), p.suit))
            .collect();
        Self::from_points(&d.event_id, d.threshold_u, d.u_l, d.censor_s, points, scaler, epochs)
    }

    pub fn from_points(
        event_id: &str,
        u: f64,
        u_l: f64,
        s: f64,
        points: Vec<(f64, f64, u8)>,
        scaler: &TimeScaler,
        epochs: &SuitEpochs,
    ) -> Self {
        let window = scaler.window();
        let edges_y = epochs.edges();
        let suit_edges = edges_y.map(|y| scaler.standardize(y));
        let mut breakpoints: Vec<f64> = scaler
            .year_boundaries
            .iter()
            .chain(edges_y.iter())
            .map(|&y| scaler.standardize(y))
            .collect();
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breakpoints.dedup();
        let edges = quad::panel_edges(window.0, window.1, &breakpoints);
        let rule = quad::gauss_legendre_rule();
        let mut nodes = Vec::with_capacity((edges.len() - 1) * rule.len());
        for w in edges.windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            let mid = 0.5 * (w[0] + w[1]);
            for &(x, wt) in rule {
                let t = mid + half * x;
                nodes.push((t, wt * half, suit_of(t, &suit_edges)));
            }
        }
        Self {
            event_id: event_id.to_string(),
            u,
            u_l,
            s,
            points,
            nodes,
            lambda_scale: 1.0,
            window,
            breakpoints,
            suit_edges,
        }
    }

    pub fn suit_at(&self, t: f64) -> u8 {
        suit_of(t, &self.suit_edges)
    }

    /// Log-likelihood and its gradient with respect to the natural vector
    /// `[mu0, sigma_tilde, xi, beta, gamma1, gamma2]`. `None` when the
    /// parameters are infeasible for these data.
    pub fn loglik(&self, nu: &[f64; 6], want_grad: bool) -> Option<(f64, [f64; 6])> {
        let [mu0, st, xi, beta, g1, g2] = *nu;
        if !(st > 0.0) || !st.is_finite() || !xi.is_finite() {
            return None;
        }
        let base = mu0 - self.u;
        let mut ll = 0.0;
        let mut gr = [0.0; 6];
        let shift = |t: f64, suit: u8| {
            beta * t
                + match suit {
                    1 => g1,
                    2 => g2,
                    _ => 0.0,
                }
        };
        // log rate l(t) = log[(sigma(t)/sigma_tilde)^(1/xi)] and derivatives
        let log_rate = |d: f64| -> Option<(f64, f64, f64, f64)> {
            let dz = d / st;
            let a = xi * dz;
            if !(a > -1.0) {
                return None;
            }
            let l = dz * log1p_ratio(a);
            let sig = st * (1.0 + a);
            Some((l, 1.0 / sig, -d / (st * sig), -dz * dz * kfun(a)))
        };
        let add = |gr: &mut [f64; 6], w: f64, t: f64, suit: u8, d_l: f64, d_st: f64, d_xi: f64| {
            gr[0] += w * d_l;
            gr[1] += w * d_st;
            gr[2] += w * d_xi;
            gr[3] += w * d_l * t;
            match suit {
                1 => gr[4] += w * d_l,
                2 => gr[5] += w * d_l,
                _ => {}
            }
        };
        for &(t, w, suit) in &self.nodes {
            let d = base + shift(t, suit);
            let (l, dd, dst, dxi) = log_rate(d)?;
            let r = l.exp();
            if !r.is_finite() {
                return None;
            }
            let wr = w * r * self.lambda_scale;
            ll -= wr;
            if want_grad {
                add(&mut gr, -wr, t, suit, dd, dst, dxi);
            }
        }
        let h = 0.5 * self.s;
        for &(x, t, suit) in &self.points {
            let d = base + shift(t, suit);
            let (l, dd, dst, dxi) = log_rate(d)?;
            let (h1, h1_st, h1_xi) = survival(x - h - self.u, st, xi);
            let (h2, h2_st, h2_xi) = survival(x + h - self.u, st, xi);
            let g = h1 - h2;
            if !(g > 0.0) {
                return None;
            }
            ll += l + g.ln();
            if want_grad {
                add(&mut gr, 1.0, t, suit, dd, dst, dxi);
                gr[1] += (h1_st - h2_st) / g;
                gr[2] += (h1_xi - h2_xi) / g;
            }
        }
        if !ll.is_finite() {
            return None;
        }
        Some((ll, gr))
    }
}

fn suit_of(t: f64, e: &[f64; 4]) -> u8 {
    if t >= e[0] && t < e[1] {
        1
    } else if t >= e[2] && t < e[3] {
        2
    } else {
        0
    }
}

/// `log(1 + a) / a`, continuous at zero.
fn log1p_ratio(a: f64) -> f64 {
    if a.abs() < 1e-8 {
        1.0 - 0.5 * a
    } else {
        a.ln_1p() / a
    }
}

/// `[log(1 + a) - a / (1 + a)] / a^2`, continuous at zero.
fn kfun(a: f64) -> f64 {
    if a.abs() < 0.05 {
        // sum_{n>=2} (-1)^n (n-1)/n a^(n-2)
        let mut acc = 0.0;
        let mut p = 1.0;
        for n in 2..=12 {
            let nf = n as f64;
            let term = (nf - 1.0) / nf * p;
            acc += if n % 2 == 0 { term } else { -term };
            p *= a;
        }
        acc
    } else {
        (a.ln_1p() - a / (1.0 + a)) / (a * a)
    }
}

/// GPD survival of an excess `y` over the threshold and its derivatives
/// with respect to the scale and shape.
fn survival(y: f64, st: f64, xi: f64) -> (f64, f64, f64) {
    let z = y / st;
    let b = xi * z;
    if !(b > -1.0) {
        return (0.0, 0.0, 0.0);
    }
    let hbar = (-z * log1p_ratio(b)).exp();
    (
        hbar,
        hbar * z / (st * (1.0 + b)),
        hbar * z * z * kfun(b),
    )
}

/// Log-likelihood of one event through the generic point-process kernel,
/// for checking the fast path.
pub fn reference_event_loglik(ep: &EventParams, design: &EventDesign) -> f64 {
    let pts: Vec<PointObs<f64>> = design
        .points
        .iter()
        .map(|&(x, t, _)| PointObs { x, t })
        .collect();
    let path = |t: f64| match time_varying_params(ep, t, design.suit_at(t)) {
        Ok(g) => g,
        Err(_) => crate::evt::GevParams {
            mu: ep.mu0,
            sigma: f64::NAN,
            xi: ep.xi,
        },
    };
    let lam = match evt::integrated_intensity(
        design.window.0,
        design.window.1,
        design.u,
        path,
        &design.breakpoints,
    ) {
        Ok(v) => v,
        Err(_) => return f64::NEG_INFINITY,
    };
    let rest = evt::event_log_likelihood(&pts, design.u, design.s, (0.0, 0.0), &[], path);
    rest - design.lambda_scale * lam
}

/// Penalized pooled log-likelihood over a set of events.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub layout: Layout,
    pub designs: &'a [EventDesign],
    pub covs: Vec<EventCov>,
    pub basis: Option<&'a SplineBasis>,
    pub penalty: Option<PenaltyMatrix>,
    pub phi_r: f64,
    pub phi_m: f64,
    pub pm_domain: (f64, f64),
}

/// One evaluation of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub penalized: f64,
    pub loglik: f64,
    pub roughness: f64,
    pub monotonicity: f64,
    /// Gradient of the penalized log-likelihood.
    pub grad: Option<Vec<f64>>,
}

impl<'a> Objective<'a> {
    pub fn new(
        layout: Layout,
        designs: &'a [EventDesign],
        basis: Option<&'a SplineBasis>,
        phi_r: f64,
        phi_m: f64,
    ) -> Self {
        let covs: Vec<EventCov> = designs
            .iter()
            .map(|d| EventCov::new(d.u, d.u_l, basis))
            .collect();
        let lo = covs.iter().map(|c| c.u_l).fold(f64::INFINITY, f64::min);
        let hi = covs.iter().map(|c| c.u_l).fold(f64::NEG_INFINITY, f64::max);
        let penalty = if layout.model.uses_spline() {
            splines::build_penalty_matrix(layout.q).ok()
        } else {
            None
        };
        Self {
            layout,
            designs,
            covs,
            basis,
            penalty,
            phi_r,
            phi_m,
            pm_domain: (lo, hi),
        }
    }

    /// Natural event vectors, or `None` if a constraint fails.
    pub fn naturals(&self, values: &[f64]) -> Option<Vec<[f64; 6]>> {
        (0..self.designs.len())
            .map(|e| self.layout.decode_event(values, e, &self.covs[e]).map(|d| d.0))
            .collect()
    }

    /// Unpenalized log-likelihood with optional gradient.
    pub fn loglik(&self, values: &[f64], want_grad: bool) -> Option<(f64, Vec<f64>)> {
        let parts: Vec<Option<(f64, [f64; 6], Vec<JacEntry>)>> = self
            .designs
            .par_iter()
            .enumerate()
            .map(|(e, d)| {
                let (nu, jac) = self.layout.decode_event(values, e, &self.covs[e])?;
                let (ll, g) = d.loglik(&nu, want_grad)?;
                Some((ll, g, jac))
            })
            .collect();
        let mut total = 0.0;
        let mut grad = vec![0.0; if want_grad { values.len() } else { 0 }];
        for p in parts {
            let (ll, g, jac) = p?;
            total += ll;
            if want_grad {
                for (i, dnu) in jac {
                    grad[i] += g.iter().zip(&dnu).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        Some((total, grad))
    }

    /// Roughness and monotonicity penalties with their gradients.
    pub fn penalties(&self, values: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let Some(range) = self.layout.spline_range() else {
            return (0.0, 0.0, Vec::new(), Vec::new());
        };
        let a = &values[range];
        let p = self.penalty.as_ref().expect("penalty for spline model");
        let pa = p.mul_vec(a);
        let pr: f64 = a.iter().zip(&pa).map(|(x, y)| x * y).sum();
        let gr: Vec<f64> = pa.iter().map(|v| 2.0 * v).collect();
        let basis = self.basis.expect("basis for spline model");
        let (pm, gm) = splines::monotonicity_penalty_grad(a, basis, self.pm_domain.0, self.pm_domain.1)
            .unwrap_or((f64::INFINITY, vec![0.0; a.len()]));
        (pr, pm, gr, gm)
    }

    pub fn evaluate(&self, values: &[f64], want_grad: bool) -> Evaluation {
        let Some((ll, mut grad)) = self.loglik(values, want_grad) else {
            return Evaluation {
                penalized: f64::NEG_INFINITY,
                loglik: f64::NEG_INFINITY,
                roughness: f64::NAN,
                monotonicity: f64::NAN,
                grad: None,
            };
        };
        let (pr, pm, gr, gm) = self.penalties(values);
        let penalized = ll - self.phi_r * pr - self.phi_m * pm;
        if want_grad {
            if let Some(range) = self.layout.spline_range() {
                for (k, i) in range.enumerate() {
                    grad[i] -= self.phi_r * gr[k] + self.phi_m * gm[k];
                }
            }
        }
        Evaluation {
            penalized,
            loglik: ll,
            roughness: pr,
            monotonicity: pm,
            grad: want_grad.then_some(grad),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fit_time_scaler_years;

    fn design() -> EventDesign {
        let scaler = fit_time_scaler_years(&[2001.2, 2019.7, 2008.5, 2012.0]).unwrap();
        let epochs = SuitEpochs::default();
        let pts = vec![
            (-50.20, scaler.standardize(2003.4), 0),
            (-49.80, scaler.standardize(2008.3), 1),
            (-49.55, scaler.standardize(2009.6), 2),
            (-50.01, scaler.standardize(2016.2), 0),
        ];
        EventDesign::from_points("e", -50.105, 50.105f64.ln(), 0.01, pts, &scaler, &epochs)
    }

    #[test]
    fn fast_path_matches_reference() {
        let d = design();
        let u = d.u;
        for xi in [-0.2, -0.05, 0.0, 1e-10, 0.1] {
            let nu = [-49.9, 0.35, xi, 0.08, 0.12, 0.2];
            let ep = EventParams::from_natural(&nu, u);
            let (fast, _) = d.loglik(&nu, false).unwrap();
            let slow = reference_event_loglik(&ep, &d);
            assert!((fast - slow).abs() < 1e-9 * slow.abs(), "xi={xi}: {fast} vs {slow}");
        }
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let d = design();
        for xi in [-0.15, 0.0, 0.07] {
            let nu = [-49.9, 0.35, xi, 0.08, 0.12, 0.2];
            let (_, g) = d.loglik(&nu, true).unwrap();
            for k in 0..6 {
                let h = 1e-6;
                let mut p = nu;
                p[k] += h;
                let mut m = nu;
                m[k] -= h;
                let fd = (d.loglik(&p, false).unwrap().0 - d.loglik(&m, false).unwrap().0) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-5 * fd.abs().max(1.0), "k={k} xi={xi}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn infeasible_when_record_beyond_endpoint() {
        let d = design();
        // endpoint u + st/|xi| = -50.105 + 0.05/0.5 = -50.005 < best point
        assert!(d.loglik(&[-49.9, 0.05, -0.5, 0.0, 0.0, 0.0], false).is_none());
    }

    #[test]
    fn series_helpers_are_continuous() {
        for a in [0.0499, 0.05, 0.0501, -0.0499, -0.0501] {
            let direct = (f64::ln_1p(a) - a / (1.0 + a)) / (a * a);
            assert!((kfun(a) - direct).abs() < 1e-12);
        }
        assert!((kfun(0.0) - 0.5).abs() < 1e-15);
        assert!((log1p_ratio(1e-9) - 1.0).abs() < 1e-9);
    }
}
