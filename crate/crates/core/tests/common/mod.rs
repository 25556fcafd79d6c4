//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use evtpool::model::FittedModel;
use rand::Rng;

/// `(1 + xi z)_+^(-1/xi)`, with the exponential limit at `xi = 0`.
pub fn tail(z: f64, xi: f64) -> f64 {
    if xi.abs() < 1e-12 {
        return (-z).exp();
    }
    let b = 1.0 + xi * z;
    if b <= 0.0 {
        return if xi > 0.0 { f64::INFINITY } else { 0.0 };
    }
    b.powf(-1.0 / xi)
}

/// Composite Simpson rule with `n` (even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Simpson over `[a, b]` restarted at every cut. Panel ends are pulled in
/// by a relative 1e-12 so a jump at a cut is seen from the right side.
pub fn simpson_cut<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cuts: &[f64], n: usize) -> f64 {
    let mut edges = vec![a];
    let mut inner: Vec<f64> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.extend(inner);
    edges.push(b);
    edges
        .windows(2)
        .map(|w| {
            let eps = 1e-12 * (w[1] - w[0]);
            simpson(&f, w[0] + eps, w[1] - eps, n)
        })
        .sum()
}

/// Censored point-process log-likelihood by dense Simpson quadrature and a
/// term-by-term sum. `path(t)` gives `(mu, sigma, xi)`.
pub fn dense_loglik<P: Fn(f64) -> (f64, f64, f64)>(
    points: &[(f64, f64)],
    u: f64,
    s: f64,
    window: (f64, f64),
    cuts: &[f64],
    path: P,
) -> f64 {
    let rate = |t: f64| {
        let (m, sg, xi) = path(t);
        tail((u - m) / sg, xi)
    };
    let mut ll = -simpson_cut(rate, window.0, window.1, cuts, 4000);
    for &(x, t) in points {
        let (m, sg, xi) = path(t);
        let lo = tail((x - s / 2.0 - m) / sg, xi);
        let hi = tail((x + s / 2.0 - m) / sg, xi);
        ll += (lo - hi).ln();
    }
    ll
}

/// Divided difference of `f` over distinct nodes.
pub fn divided_difference<F: Fn(f64) -> f64>(f: F, nodes: &[f64]) -> f64 {
    let mut v: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
    let n = nodes.len();
    for k in 1..n {
        for i in 0..n - k {
            v[i] = (v[i + 1] - v[i]) / (nodes[i + k] - nodes[i]);
        }
    }
    v[0]
}

/// B-spline of degree `d` on the `d + 2` distinct knots `t` at `x`, from the
/// truncated-power representation.
pub fn truncated_power_bspline(t: &[f64], d: usize, x: f64) -> f64 {
    let f = |s: f64| if s > x { (s - x).powi(d as i32) } else { 0.0 };
    (t[d + 1] - t[0]) * divided_difference(f, t)
}

/// Yearly threshold rate of event `e` at decimal year `y`, computed from the
/// fitted parameters alone.
pub fn oracle_rate(m: &FittedModel, e: usize, y: f64) -> f64 {
    let ev = &m.events[e];
    let p = &ev.params;
    let t = (y - m.scaler.mean) / m.scaler.sd;
    let epoch = m.suit_epochs.epoch_of_year(y);
    let g = match epoch {
        1 => p.gamma1,
        2 => p.gamma2,
        _ => 0.0,
    };
    let shift = p.beta * t + g;
    let mu = p.mu0 + shift;
    let sigma = p.sigma0 + p.xi * shift;
    tail((ev.threshold_u - mu) / sigma, p.xi) / m.scaler.sd
}

/// GPD survival of exceedances of the threshold of event `e`.
pub fn oracle_survival(m: &FittedModel, e: usize, x: f64) -> f64 {
    let ev = &m.events[e];
    let p = &ev.params;
    let st = p.sigma0 + p.xi * (ev.threshold_u - p.mu0);
    tail((x - ev.threshold_u) / st, p.xi)
}

fn gpd_draw<R: Rng>(m: &FittedModel, e: usize, rng: &mut R) -> f64 {
    let ev = &m.events[e];
    let p = &ev.params;
    let st = p.sigma0 + p.xi * (ev.threshold_u - p.mu0);
    let v: f64 = 1.0 - rng.random::<f64>();
    if p.xi.abs() < 1e-12 {
        ev.threshold_u - st * v.ln()
    } else {
        ev.threshold_u + st / p.xi * (v.powf(-p.xi) - 1.0)
    }
}

/// Per-year rate bounds for thinning over `[origin, origin + horizon]`.
fn rate_bounds(m: &FittedModel, e: usize, origin: f64, horizon: usize) -> Vec<f64> {
    (0..horizon)
        .map(|k| {
            let a = origin + k as f64;
            (0..=64)
                .map(|j| oracle_rate(m, e, a + j as f64 / 64.0))
                .fold(0.0, f64::max)
                * 1.05
        })
        .collect()
}

/// Years after `origin` until the first simulated threshold exceedance of
/// event `e` whose mark beats `record_x`, or `None` beyond `horizon` years.
/// Exceedances are simulated by thinning and marked with GPD draws.
pub struct MarkedPaths {
    bounds: Vec<f64>,
    origin: f64,
    e: usize,
    record_x: f64,
}

impl MarkedPaths {
    pub fn new(m: &FittedModel, e: usize, record_x: f64, origin: f64, horizon: usize) -> Self {
        Self {
            bounds: rate_bounds(m, e, origin, horizon),
            origin,
            e,
            record_x,
        }
    }

    pub fn first_record<R: Rng>(&self, m: &FittedModel, rng: &mut R) -> Option<f64> {
        for (k, &b) in self.bounds.iter().enumerate() {
            let mut t = k as f64;
            loop {
                t += -(1.0 - rng.random::<f64>()).ln() / b;
                if t >= (k + 1) as f64 {
                    break;
                }
                let r = oracle_rate(m, self.e, self.origin + t);
                assert!(r <= b, "thinning bound violated");
                if rng.random::<f64>() * b < r && gpd_draw(m, self.e, rng) > self.record_x {
                    return Some(t);
                }
            }
        }
        None
    }
}
