//! Numerical quadrature: fixed-order Gauss–Legendre panels and an adaptive
//! Gauss–Kronrod (7/15) rule.

use std::sync::OnceLock;

use crate::Scalar;

/// Number of Gauss–Legendre nodes per panel.
pub const GL_ORDER: usize = 32;

/// Nodes and weights of the 32-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(GL_ORDER))
}

fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut rule = vec![(0.0, 0.0); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule[i] = (-x, w);
        rule[n - 1 - i] = (x, w);
    }
    rule
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over a single panel [a, b] with the 32-point rule.
pub fn gauss_legendre<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T) -> T {
    let half = (b - a) / T::from_f64(2.0).unwrap();
    let mid = (a + b) / T::from_f64(2.0).unwrap();
    let mut acc = T::zero();
    for &(x, w) in gauss_legendre_rule() {
        let t = mid + half * T::from_f64(x).unwrap();
        acc = acc + T::from_f64(w).unwrap() * f(t);
    }
    acc * half
}

/// Splits [a, b] at every breakpoint strictly inside it. Returns the panel
/// edges in increasing order.
pub fn panel_edges<T: Scalar>(a: T, b: T, breakpoints: &[T]) -> Vec<T> {
    let mut edges = vec![a];
    let mut inner: Vec<T> = breakpoints
        .iter()
        .copied()
        .filter(|&p| p > a && p < b)
        .collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    inner.dedup();
    edges.extend(inner);
    edges.push(b);
    edges
}

/// Composite Gauss–Legendre over [a, b] with panels split at `breakpoints`.
pub fn composite<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T, breakpoints: &[T]) -> T {
    if b <= a {
        return T::zero();
    }
    let edges = panel_edges(a, b, breakpoints);
    edges
        .windows(2)
        .fold(T::zero(), |acc, w| acc + gauss_legendre(&mut f, w[0], w[1]))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Eight-point Gauss–Legendre rule on [a, b], for cheap integrals of smooth
/// functions over short panels.
pub fn gauss_legendre8<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    GL8.iter()
        .map(|&(x, w)| w * (f(m - h * x) + f(m + h * x)))
        .sum::<f64>()
        * h
}

/// Adaptive Gauss–Kronrod integration of `f` over [a, b] to absolute
/// tolerance `tol`. Returns the estimate and the accumulated error bound.
pub fn adaptive_gk<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    if b <= a {
        return (0.0, 0.0);
    }
    let mut stack = vec![(a, b, tol, 0usize)];
    let mut total = 0.0;
    let mut err = 0.0;
    while let Some((lo, hi, t, depth)) = stack.pop() {
        let (v, e) = kronrod15(&mut f, lo, hi);
        if e <= t || depth >= 40 || (hi - lo) < 1e-12 * (1.0 + lo.abs()) {
            total += v;
            err += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, 0.5 * t, depth + 1));
            stack.push((lo, mid, 0.5 * t, depth + 1));
        }
    }
    (total, err)
}
