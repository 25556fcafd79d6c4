//! Extreme-value primitives: GEV and generalised Pareto distribution
//! functions, the point-process intensity, its time integral and the
//! interval-censored likelihood kernel.
//!
//! Everything here works on the negated-time scale, so larger values are
//! better swims, and is generic over the floating-point type.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::Scalar;

/// Below this magnitude the shape parameter is treated as exactly zero and
/// the exponential (Gumbel) limit forms are used.
pub const XI_ZERO: f64 = 1e-9;

/// Tolerance under which a negative censored term is attributed to
/// cancellation and clamped to zero.
pub const CENSOR_CLAMP: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams<T> {
    pub mu: T,
    pub sigma: T,
    pub xi: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams<T> {
    pub u: T,
    pub sigma_tilde: T,
    pub xi: T,
}

impl<T: Scalar> GevParams<T> {
    pub fn new(mu: T, sigma: T, xi: T) -> Result<Self> {
        if !(sigma > T::zero()) {
            return Err(Error::Parameter(format!(
                "GEV scale must be positive, got {}",
                sigma.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(Self { mu, sigma, xi })
    }

    /// GPD parameters of exceedances of `u` implied by these GEV parameters.
    pub fn exceedance_gpd(&self, u: T) -> GpdParams<T> {
        GpdParams {
            u,
            sigma_tilde: self.sigma + self.xi * (u - self.mu),
            xi: self.xi,
        }
    }
}

impl<T: Scalar> GpdParams<T> {
    pub fn new(u: T, sigma_tilde: T, xi: T) -> Result<Self> {
        if !(sigma_tilde > T::zero()) {
            return Err(Error::Parameter(format!(
                "GPD scale must be positive, got {}",
                sigma_tilde.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(Self { u, sigma_tilde, xi })
    }
}

fn c<T: Scalar>(v: f64) -> T {
    T::from_f64(v).unwrap()
}

fn is_zero_shape<T: Scalar>(xi: T) -> bool {
    xi.abs() < c(XI_ZERO)
}

/// `[1 + xi z]_+^(-1/xi)`, with the `exp(-z)` limit at zero shape. Returns
/// +inf below the lower endpoint when `xi > 0`.
pub fn tail_power<T: Scalar>(z: T, xi: T) -> T {
    if is_zero_shape(xi) {
        return (-z).exp();
    }
    let base = T::one() + xi * z;
    if base <= T::zero() {
        if xi < T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    } else {
        (-(base.ln()) / xi).exp()
    }
}

pub fn gev_cdf<T: Scalar>(x: T, p: &GevParams<T>) -> T {
    (-tail_power((x - p.mu) / p.sigma, p.xi)).exp()
}

/// Survival function of the GPD above `p.u`.
pub fn gpd_survival<T: Scalar>(x: T, p: &GpdParams<T>) -> Result<T> {
    if x < p.u {
        return Err(Error::Domain(format!(
            "GPD survival evaluated below threshold ({} < {})",
            x.to_f64().unwrap_or(f64::NAN),
            p.u.to_f64().unwrap_or(f64::NAN)
        )));
    }
    Ok(tail_power((x - p.u) / p.sigma_tilde, p.xi))
}

pub fn gpd_cdf<T: Scalar>(x: T, p: &GpdParams<T>) -> Result<T> {
    Ok(T::one() - gpd_survival(x, p)?)
}

/// GPD density; zero outside the support.
pub fn gpd_density<T: Scalar>(x: T, p: &GpdParams<T>) -> T {
    if x < p.u {
        return T::zero();
    }
    let z = (x - p.u) / p.sigma_tilde;
    if is_zero_shape(p.xi) {
        return (-z).exp() / p.sigma_tilde;
    }
    let base = T::one() + p.xi * z;
    if base <= T::zero() {
        return T::zero();
    }
    (-(T::one() / p.xi + T::one()) * base.ln()).exp() / p.sigma_tilde
}

/// Inverse of the GPD distribution function.
pub fn gpd_quantile<T: Scalar>(prob: T, p: &GpdParams<T>) -> Result<T> {
    if !(prob >= T::zero() && prob < T::one()) {
        return Err(Error::Domain(format!(
            "probability {} outside [0, 1)",
            prob.to_f64().unwrap_or(f64::NAN)
        )));
    }
    let surv = T::one() - prob;
    if is_zero_shape(p.xi) {
        return Ok(p.u - p.sigma_tilde * surv.ln());
    }
    // surv^(-xi) - 1 computed via exp_m1 for accuracy near prob = 0.
    let w = (-p.xi * surv.ln()).exp_m1();
    Ok(p.u + p.sigma_tilde * w / p.xi)
}

/// Finite upper endpoint `u - sigma_tilde / xi` of a GPD with negative shape.
pub fn upper_endpoint<T: Scalar>(p: &GpdParams<T>) -> Result<T> {
    if p.xi >= T::zero() || is_zero_shape(p.xi) {
        return Err(Error::NoFiniteEndpoint {
            xi: p.xi.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(p.u - p.sigma_tilde / p.xi)
}

/// Point-process intensity density at quality `x` for parameters `theta`.
pub fn intensity<T: Scalar>(x: T, theta: &GevParams<T>) -> Result<T> {
    if !(theta.sigma > T::zero()) {
        return Err(Error::Parameter("intensity requires sigma > 0".into()));
    }
    let z = (x - theta.mu) / theta.sigma;
    if is_zero_shape(theta.xi) {
        return Ok((-z).exp() / theta.sigma);
    }
    let base = T::one() + theta.xi * z;
    if base <= T::zero() {
        return Ok(if theta.xi < T::zero() {
            T::zero()
        } else {
            T::infinity()
        });
    }
    Ok((-(T::one() / theta.xi + T::one()) * base.ln()).exp() / theta.sigma)
}

/// Rate per unit time of exceeding level `u`: the integrand of the
/// integrated intensity.
pub fn exceedance_rate<T: Scalar>(u: T, theta: &GevParams<T>) -> Result<T> {
    if !(theta.sigma > T::zero()) {
        return Err(Error::Parameter("exceedance rate requires sigma > 0".into()));
    }
    Ok(tail_power((u - theta.mu) / theta.sigma, theta.xi))
}

/// Integrated intensity of exceedances of `u` over `[t_a, t_b]` with the
/// time-varying parameters `path`, by composite 32-point Gauss–Legendre
/// with panels split at `breakpoints`.
pub fn integrated_intensity<T, F>(t_a: T, t_b: T, u: T, path: F, breakpoints: &[T]) -> Result<T>
where
    T: Scalar,
    F: Fn(T) -> GevParams<T>,
{
    if t_b < t_a {
        return Err(Error::Domain("integration window reversed".into()));
    }
    if t_b == t_a {
        return Ok(T::zero());
    }
    let mut bad = false;
    let v = quad::composite(
        |t| match exceedance_rate(u, &path(t)) {
            Ok(r) if r.is_finite() => r,
            _ => {
                bad = true;
                T::zero()
            }
        },
        t_a,
        t_b,
        breakpoints,
    );
    if bad || !v.is_finite() {
        return Err(Error::Parameter(
            "non-finite integrand in integrated intensity".into(),
        ));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearlyRate<T> {
    pub value: T,
    /// True when the year straddles a parameter discontinuity and the exact
    /// integral was used instead of the midpoint approximation.
    pub exact: bool,
}

/// Expected number of exceedances of `u` in `[y_start, y_end)`, using the
/// midpoint approximation unless a discontinuity falls strictly inside.
pub fn yearly_rate_approx<T, F>(
    y_start: T,
    y_end: T,
    u: T,
    path: F,
    discontinuities: &[T],
) -> Result<YearlyRate<T>>
where
    T: Scalar,
    F: Fn(T) -> GevParams<T>,
{
    if discontinuities.iter().any(|&d| d > y_start && d < y_end) {
        let value = integrated_intensity(y_start, y_end, u, path, discontinuities)?;
        return Ok(YearlyRate { value, exact: true });
    }
    let mid = (y_start + y_end) / c(2.0);
    let value = exceedance_rate(u, &path(mid))? * (y_end - y_start);
    Ok(YearlyRate { value, exact: false })
}

/// Probability mass of the intensity over the censoring interval
/// `[x - s/2, x + s/2]`.
pub fn censored_term<T: Scalar>(x: T, s: T, theta: &GevParams<T>) -> Result<T> {
    if !(theta.sigma > T::zero()) {
        return Err(Error::Parameter("censored term requires sigma > 0".into()));
    }
    let h = s / c(2.0);
    let lo = tail_power((x - h - theta.mu) / theta.sigma, theta.xi);
    let hi = tail_power((x + h - theta.mu) / theta.sigma, theta.xi);
    let d = lo - hi;
    if d < T::zero() {
        if d > -c::<T>(CENSOR_CLAMP) {
            return Ok(T::zero());
        }
        return Err(Error::Numerical(format!(
            "negative censored term {}",
            d.to_f64().unwrap_or(f64::NAN)
        )));
    }
    Ok(d)
}

/// One exceedance: negated time and standardized occurrence time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointObs<T> {
    pub x: T,
    pub t: T,
}

/// Interval-censored point-process log-likelihood of one event's
/// exceedances of `u` observed over `window`. Infeasible parameters give
/// `-inf` rather than an error.
pub fn event_log_likelihood<T, F>(
    points: &[PointObs<T>],
    u: T,
    s: T,
    window: (T, T),
    breakpoints: &[T],
    path: F,
) -> T
where
    T: Scalar,
    F: Fn(T) -> GevParams<T>,
{
    let lambda = match integrated_intensity(window.0, window.1, u, &path, breakpoints) {
        Ok(v) => v,
        Err(_) => return T::neg_infinity(),
    };
    let mut ll = -lambda;
    for p in points {
        match censored_term(p.x, s, &path(p.t)) {
            Ok(term) if term > T::zero() => ll = ll + term.ln(),
            _ => return T::neg_infinity(),
        }
    }
    ll
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_gk;

    fn gpd(u: f64, s: f64, xi: f64) -> GpdParams<f64> {
        GpdParams::new(u, s, xi).unwrap()
    }

    #[test]
    fn gumbel_at_mode() {
        let p = GevParams::<f64>::new(0.0, 1.0, 0.0).unwrap();
        assert!((gev_cdf(0.0, &p) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gev_below_lower_endpoint_is_zero() {
        let p = GevParams::<f64>::new(0.0, 1.0, 0.5).unwrap();
        assert_eq!(gev_cdf(-2.5, &p), 0.0);
    }

    #[test]
    fn gev_tiny_shape_matches_gumbel_branch() {
        let g0 = GevParams::<f64>::new(0.0, 1.0, 0.0).unwrap();
        let g1 = GevParams::<f64>::new(0.0, 1.0, 1e-12).unwrap();
        assert!((gev_cdf(1.3, &g0) - gev_cdf(1.3, &g1)).abs() < 1e-9);
        // also on the general branch just above the switchover
        let g2 = GevParams::<f64>::new(0.0, 1.0, 1e-7).unwrap();
        let rel = (gev_cdf(1.3, &g0) - gev_cdf(1.3, &g2)).abs() / gev_cdf(1.3, &g0);
        assert!(rel < 1e-6);
    }

    #[test]
    fn gpd_survival_boundaries() {
        let p = gpd(-60.0, 1.0, -0.5);
        assert_eq!(gpd_survival(-60.0, &p).unwrap(), 1.0);
        assert_eq!(gpd_survival(-58.0, &p).unwrap(), 0.0);
        assert!(gpd_survival(-61.0, &p).is_err());
    }

    #[test]
    fn gpd_survival_matches_density_quadrature() {
        let p = gpd(0.0, 1.0, -0.147);
        let sv = gpd_survival(1.0, &p).unwrap();
        let closed = (1.0f64 - 0.147).powf(1.0 / 0.147);
        assert!((sv - closed).abs() < 1e-14);
        let end = upper_endpoint(&p).unwrap();
        let (q, _) = adaptive_gk(|x| gpd_density(x, &p), 1.0, end, 1e-13);
        assert!((q - sv).abs() < 1e-8);
    }

    #[test]
    fn gpd_quantile_roundtrip_and_bisection() {
        let p = gpd(-50.0, 2.0, -0.147);
        assert_eq!(gpd_quantile(0.0, &p).unwrap(), -50.0);
        for i in 1..10 {
            let pr = i as f64 / 10.0;
            let x = gpd_quantile(pr, &p).unwrap();
            assert!((gpd_survival(x, &p).unwrap() - (1.0 - pr)).abs() < 1e-10);
            // bisection oracle on the survival function
            let (mut lo, mut hi) = (-50.0, upper_endpoint(&p).unwrap());
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gpd_survival(mid, &p).unwrap() > 1.0 - pr {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((0.5 * (lo + hi) - x).abs() < 1e-9);
        }
        assert!(gpd_quantile(1.0, &p).is_err());
        assert!(gpd_quantile(-0.1, &p).is_err());
    }

    #[test]
    fn upper_endpoint_closed_form() {
        let p = gpd(-60.0, 1.0, -0.147);
        let e = upper_endpoint(&p).unwrap();
        assert!((e - (-60.0 + 1.0 / 0.147)).abs() < 1e-12);
        assert_eq!(gpd_survival(e, &p).unwrap(), 0.0);
        assert!(gpd_survival(e - 1e-6, &p).unwrap() > 0.0);
        assert!(upper_endpoint(&gpd(-60.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn intensity_support_and_zero_shape() {
        let th = GevParams::<f64>::new(0.0, 1.0, -0.5).unwrap();
        assert_eq!(intensity(2.5, &th).unwrap(), 0.0);
        let th0 = GevParams::<f64>::new(1.0, 2.0, 0.0).unwrap();
        let v = intensity(3.0, &th0).unwrap();
        assert!((v - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        let bad = GevParams::<f64> { mu: 0.0, sigma: -1.0, xi: 0.1 };
        assert!(intensity(0.0, &bad).is_err());
    }

    #[test]
    fn intensity_integrates_to_exceedance_rate() {
        let th = GevParams::<f64>::new(-50.0, 0.8, -0.147).unwrap();
        let u = -51.0;
        let end = th.mu - th.sigma / th.xi;
        let (q, _) = adaptive_gk(|x| intensity(x, &th).unwrap(), u, end, 1e-13);
        let closed = exceedance_rate(u, &th).unwrap();
        assert!((q - closed).abs() < 1e-8);
    }

    #[test]
    fn integrated_intensity_constant_and_empty() {
        let th = GevParams::<f64>::new(-50.0, 0.8, -0.147).unwrap();
        let u = -51.0;
        let l = integrated_intensity(0.0, 2.5, u, |_| th, &[]).unwrap();
        assert!((l - 2.5 * exceedance_rate(u, &th).unwrap()).abs() < 1e-12);
        assert_eq!(integrated_intensity(1.0, 1.0, u, |_| th, &[]).unwrap(), 0.0);
    }

    #[test]
    fn integrated_intensity_matches_dense_midpoint() {
        let path = |t: f64| GevParams::<f64> {
            mu: -50.0 + 0.3 * t,
            sigma: 0.8 - 0.147 * 0.3 * t,
            xi: -0.147,
        };
        let u = -51.0;
        let (a, b) = (-2.0, 1.5);
        let q = integrated_intensity(a, b, u, path, &[]).unwrap();
        let n = 100_000;
        let h = (b - a) / n as f64;
        let riemann: f64 = (0..n)
            .map(|i| exceedance_rate(u, &path(a + (i as f64 + 0.5) * h)).unwrap() * h)
            .sum();
        assert!(((q - riemann) / riemann).abs() < 1e-7);
    }

    #[test]
    fn integrated_intensity_is_additive() {
        let path = |t: f64| GevParams::<f64> {
            mu: -50.0 + 0.3 * t + if t > 0.5 { 0.2 } else { 0.0 },
            sigma: 0.8 - 0.147 * (0.3 * t + if t > 0.5 { 0.2 } else { 0.0 }),
            xi: -0.147,
        };
        let bp = [0.5];
        let whole = integrated_intensity(-2.0, 1.5, -51.0, path, &bp).unwrap();
        let parts = integrated_intensity(-2.0, 0.1, -51.0, path, &bp).unwrap()
            + integrated_intensity(0.1, 1.5, -51.0, path, &bp).unwrap();
        assert!((whole - parts).abs() < 1e-12 * whole);
    }

    #[test]
    fn yearly_rate_approximation() {
        let th = GevParams::<f64>::new(-50.0, 0.8, -0.147).unwrap();
        let r = yearly_rate_approx(0.0, 0.25, -51.0, |_| th, &[]).unwrap();
        let exact = integrated_intensity(0.0, 0.25, -51.0, |_| th, &[]).unwrap();
        assert!(!r.exact);
        assert!((r.value - exact).abs() < 1e-12);

        let path = |t: f64| GevParams::<f64> {
            mu: -50.0 + 0.05 * t,
            sigma: 0.8 - 0.147 * 0.05 * t,
            xi: -0.147,
        };
        let r = yearly_rate_approx(0.5, 0.75, -51.0, path, &[]).unwrap();
        let exact = integrated_intensity(0.5, 0.75, -51.0, path, &[]).unwrap();
        assert!(((r.value - exact) / exact).abs() < 1e-3);

        let r = yearly_rate_approx(0.5, 0.75, -51.0, path, &[0.6]).unwrap();
        assert!(r.exact);
        assert!((r.value - exact).abs() < 1e-12);
    }

    #[test]
    fn censored_term_matches_quadrature_and_limit() {
        let th = GevParams::<f64>::new(-50.0, 0.8, -0.147).unwrap();
        let x = -50.7;
        let s = 0.01;
        let term = censored_term(x, s, &th).unwrap();
        let (q, _) = adaptive_gk(|y| intensity(y, &th).unwrap(), x - s / 2.0, x + s / 2.0, 1e-16);
        assert!((term - q).abs() < 1e-10);
        let small = 1e-6;
        let ratio = censored_term(x, small, &th).unwrap() / small;
        assert!((ratio - intensity(x, &th).unwrap()).abs() < 1e-6);
        let end = th.mu - th.sigma / th.xi;
        assert_eq!(censored_term(end + 1.0, s, &th).unwrap(), 0.0);
    }

    #[test]
    fn censored_bins_telescope() {
        let th = GevParams::<f64>::new(-50.0, 0.8, -0.147).unwrap();
        let u = -51.0;
        let s = 0.01;
        let end = th.mu - th.sigma / th.xi;
        let nbins = ((end - u) / s).ceil() as usize + 1;
        let total: f64 = (0..nbins)
            .map(|i| censored_term(u + s / 2.0 + i as f64 * s, s, &th).unwrap())
            .sum();
        assert!((total - exceedance_rate(u, &th).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn likelihood_composition() {
        let th = GevParams::<f64>::new(-50.0, 0.8, -0.147).unwrap();
        let u = -51.0;
        let s = 0.01;
        let lam = integrated_intensity(0.0, 3.0, u, |_| th, &[]).unwrap();
        let ll0 = event_log_likelihood(&[], u, s, (0.0, 3.0), &[], |_| th);
        assert!((ll0 + lam).abs() < 1e-12);
        let pt = PointObs { x: -50.5, t: 1.0 };
        let ll1 = event_log_likelihood(&[pt], u, s, (0.0, 3.0), &[], |_| th);
        let expect = -lam + censored_term(-50.5, s, &th).unwrap().ln();
        assert!((ll1 - expect).abs() < 1e-12);
        let beyond = PointObs { x: -40.0, t: 1.0 };
        assert_eq!(
            event_log_likelihood(&[beyond], u, s, (0.0, 3.0), &[], |_| th),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn zero_shape_branches_agree() {
        let g = |xi| GpdParams::<f64> { u: 0.0, sigma_tilde: 1.5, xi };
        for &x in &[0.3, 1.0, 4.0] {
            let a = gpd_survival(x, &g(0.0)).unwrap();
            let b = gpd_survival(x, &g(1e-7)).unwrap();
            assert!(((a - b) / a).abs() < 1e-6);
            let ta = GevParams::<f64> { mu: 0.0, sigma: 1.5, xi: 0.0 };
            let tb = GevParams::<f64> { mu: 0.0, sigma: 1.5, xi: -1e-7 };
            let ia = intensity(x, &ta).unwrap();
            let ib = intensity(x, &tb).unwrap();
            assert!(((ia - ib) / ia).abs() < 1e-6);
        }
        let q0 = gpd_quantile(0.7, &g(0.0)).unwrap();
        let q1 = gpd_quantile(0.7, &g(1e-7)).unwrap();
        assert!(((q0 - q1) / q0).abs() < 1e-6);
    }

    #[test]
    fn generic_over_f32() {
        let p = GpdParams::<f32>::new(0.0, 1.0, -0.2).unwrap();
        let x = gpd_quantile(0.5f32, &p).unwrap();
        assert!((gpd_survival(x, &p).unwrap() - 0.5).abs() < 1e-5);
    }
}
