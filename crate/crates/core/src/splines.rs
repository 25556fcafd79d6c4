//! B-spline basis, second-order difference roughness penalty and the
//! stationary-point monotonicity penalty used for the pooled GPD scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// A B-spline basis of polynomial degree `degree` on a knot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis<T> {
    degree: usize,
    knots: Vec<T>,
}

fn c<T: Scalar>(v: f64) -> T {
    T::from_f64(v).unwrap()
}

impl<T: Scalar> SplineBasis<T> {
    /// Basis on an explicit knot vector. Knots must be nondecreasing, the
    /// evaluation domain non-empty and no knot may repeat more than
    /// `degree + 1` times.
    pub fn from_knots(knots: Vec<T>, degree: usize) -> Result<Self> {
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::Dimension(format!(
                "{} knots cannot carry a degree-{} basis",
                knots.len(),
                degree
            )));
        }
        if knots.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::Validation("knots must be nondecreasing".into()));
        }
        let basis = Self { degree, knots };
        let (lo, hi) = basis.domain();
        if !(hi > lo) {
            return Err(Error::Validation("empty spline domain".into()));
        }
        let interior = &basis.knots[degree..=basis.len()];
        if interior.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(
                "interior knots must be strictly increasing".into(),
            ));
        }
        Ok(basis)
    }

    /// Clamped basis with `q` functions and equally spaced interior knots on
    /// `[lo, hi]`; the end knots are repeated `degree + 1` times.
    pub fn clamped(lo: T, hi: T, q: usize, degree: usize) -> Result<Self> {
        if q < degree + 1 {
            return Err(Error::Dimension(format!(
                "q = {q} is too small for degree {degree}"
            )));
        }
        let n_inner = q - degree - 1;
        let mut knots = vec![lo; degree + 1];
        let step = (hi - lo) / T::from_usize(n_inner + 1).unwrap();
        for i in 1..=n_inner {
            knots.push(lo + step * T::from_usize(i).unwrap());
        }
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Self::from_knots(knots, degree)
    }

    /// Clamped basis covering `values` with a margin of `margin` times their
    /// range on each side.
    pub fn covering(values: &[T], q: usize, degree: usize, margin: T) -> Result<Self> {
        let lo = values.iter().copied().fold(T::infinity(), T::min);
        let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
        if !(hi > lo) {
            return Err(Error::DegenerateCovariate(
                "spline covariate has zero range".into(),
            ));
        }
        let delta = (hi - lo) * margin;
        Self::clamped(lo - delta, hi + delta, q, degree)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain(&self) -> (T, T) {
        (self.knots[self.degree], self.knots[self.len()])
    }

    /// Greville abscissae: coefficients equal to a linear function of these
    /// reproduce that linear function exactly.
    pub fn greville(&self) -> Vec<T> {
        let d = self.degree.max(1);
        (0..self.len())
            .map(|k| {
                if self.degree == 0 {
                    (self.knots[k] + self.knots[k + 1]) / c(2.0)
                } else {
                    self.knots[k + 1..=k + d]
                        .iter()
                        .fold(T::zero(), |a, &b| a + b)
                        / T::from_usize(d).unwrap()
                }
            })
            .collect()
    }

    fn span(&self, x: T) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain(format!(
                "{} outside spline domain [{}, {}]",
                x.to_f64().unwrap_or(f64::NAN),
                lo.to_f64().unwrap_or(f64::NAN),
                hi.to_f64().unwrap_or(f64::NAN)
            )));
        }
        let q = self.len();
        if x >= hi {
            // last non-empty span
            let mut j = q - 1;
            while self.knots[j] >= self.knots[j + 1] {
                j -= 1;
            }
            return Ok(j);
        }
        // knots[j] <= x < knots[j+1], j in [degree, q-1]
        let mut lo_i = self.degree;
        let mut hi_i = q;
        while hi_i - lo_i > 1 {
            let mid = (lo_i + hi_i) / 2;
            if x >= self.knots[mid] {
                lo_i = mid;
            } else {
                hi_i = mid;
            }
        }
        Ok(lo_i)
    }

    /// The `degree + 1` possibly-nonzero basis values at `x` and the index
    /// of the first of them.
    pub fn local_values(&self, x: T) -> Result<(usize, Vec<T>)> {
        let j = self.span(x)?;
        let d = self.degree;
        let t = &self.knots;
        let mut n = vec![T::zero(); d + 1];
        let mut left = vec![T::zero(); d + 1];
        let mut right = vec![T::zero(); d + 1];
        n[0] = T::one();
        for r in 1..=d {
            left[r] = x - t[j + 1 - r];
            right[r] = t[j + r] - x;
            let mut saved = T::zero();
            for k in 0..r {
                let denom = right[k + 1] + left[r - k];
                let temp = if denom == T::zero() { T::zero() } else { n[k] / denom };
                n[k] = saved + right[k + 1] * temp;
                saved = left[r - k] * temp;
            }
            n[r] = saved;
        }
        Ok((j - d, n))
    }

    /// All `q` basis values at `x`.
    pub fn eval(&self, x: T) -> Result<Vec<T>> {
        let (first, local) = self.local_values(x)?;
        let mut out = vec![T::zero(); self.len()];
        out[first..first + local.len()].copy_from_slice(&local);
        Ok(out)
    }

    /// Basis of the derivative spline together with the map from
    /// coefficients to derivative coefficients.
    fn derivative_basis(&self) -> Option<SplineBasis<T>> {
        if self.degree == 0 {
            return None;
        }
        Some(SplineBasis {
            degree: self.degree - 1,
            knots: self.knots[1..self.knots.len() - 1].to_vec(),
        })
    }

    fn derivative_coeffs(&self, a: &[T]) -> Vec<T> {
        let d = self.degree;
        let df = T::from_usize(d).unwrap();
        (0..a.len() - 1)
            .map(|i| {
                let denom = self.knots[i + d + 1] - self.knots[i + 1];
                if denom > T::zero() {
                    df * (a[i + 1] - a[i]) / denom
                } else {
                    T::zero()
                }
            })
            .collect()
    }
}

fn check_len<T: Scalar>(a: &[T], basis: &SplineBasis<T>) -> Result<()> {
    if a.len() != basis.len() {
        return Err(Error::Dimension(format!(
            "{} coefficients for a basis of {} functions",
            a.len(),
            basis.len()
        )));
    }
    Ok(())
}

/// All `q` basis function values at `x`.
pub fn basis_eval<T: Scalar>(x: T, basis: &SplineBasis<T>) -> Result<Vec<T>> {
    basis.eval(x)
}

/// `Y(x) = sum_k a_k B_k(x)`.
pub fn spline_eval<T: Scalar>(x: T, a: &[T], basis: &SplineBasis<T>) -> Result<T> {
    check_len(a, basis)?;
    let (first, local) = basis.local_values(x)?;
    Ok(local
        .iter()
        .zip(&a[first..])
        .fold(T::zero(), |acc, (&b, &ak)| acc + b * ak))
}

/// First derivative of the spline at `x`.
pub fn derivative_eval<T: Scalar>(x: T, a: &[T], basis: &SplineBasis<T>) -> Result<T> {
    check_len(a, basis)?;
    match basis.derivative_basis() {
        None => Ok(T::zero()),
        Some(db) => spline_eval(x, &basis.derivative_coeffs(a), &db),
    }
}

/// Square symmetric penalty matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix<T> {
    q: usize,
    data: Vec<T>,
}

impl<T: Scalar> PenaltyMatrix<T> {
    pub fn dim(&self) -> usize {
        self.q
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.q + j]
    }

    pub fn mul_vec(&self, a: &[T]) -> Vec<T> {
        (0..self.q)
            .map(|i| {
                (0..self.q).fold(T::zero(), |acc, j| acc + self.get(i, j) * a[j])
            })
            .collect()
    }
}

/// Second-order difference penalty `D2' D2` for `q` coefficients.
pub fn build_penalty_matrix<T: Scalar>(q: usize) -> Result<PenaltyMatrix<T>> {
    if q < 3 {
        return Err(Error::Dimension(format!(
            "second-order penalty needs q >= 3, got {q}"
        )));
    }
    let mut data = vec![T::zero(); q * q];
    let row = [T::one(), c(-2.0), T::one()];
    for r in 0..q - 2 {
        for (i, &di) in row.iter().enumerate() {
            for (j, &dj) in row.iter().enumerate() {
                data[(r + i) * q + r + j] = data[(r + i) * q + r + j] + di * dj;
            }
        }
    }
    Ok(PenaltyMatrix { q, data })
}

/// `a' P a`.
pub fn roughness_penalty<T: Scalar>(a: &[T], p: &PenaltyMatrix<T>) -> Result<T> {
    if a.len() != p.q {
        return Err(Error::Dimension(format!(
            "{} coefficients for a {}x{} penalty",
            a.len(),
            p.q,
            p.q
        )));
    }
    let pa = p.mul_vec(a);
    Ok(a.iter().zip(&pa).fold(T::zero(), |acc, (&x, &y)| acc + x * y))
}

fn poly_eval<T: Scalar>(coeffs: &[T], y: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &ck| acc * y + ck)
}

fn poly_derivative<T: Scalar>(coeffs: &[T]) -> Vec<T> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(m, &ck)| ck * T::from_usize(m).unwrap())
        .collect()
}

/// Real roots of a polynomial on [a, b] where it changes sign, found by
/// bracketing between the roots of its derivative.
fn poly_roots<T: Scalar>(coeffs: &[T], a: T, b: T) -> Vec<T> {
    let mut deg = coeffs.len();
    while deg > 0 && coeffs[deg - 1] == T::zero() {
        deg -= 1;
    }
    let coeffs = &coeffs[..deg];
    if deg <= 1 {
        return Vec::new();
    }
    let crit = poly_roots(&poly_derivative(coeffs), a, b);
    let mut pts = Vec::with_capacity(crit.len() + 2);
    pts.push(a);
    pts.extend(crit.into_iter().filter(|&x| x > a && x < b));
    pts.push(b);
    let mut roots = Vec::new();
    for w in pts.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (poly_eval(coeffs, lo), poly_eval(coeffs, hi));
        if flo == T::zero() {
            if lo > a {
                roots.push(lo);
            }
            continue;
        }
        if flo * fhi >= T::zero() {
            continue;
        }
        let neg_lo = flo < T::zero();
        for _ in 0..200 {
            let mid = (lo + hi) / c(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = poly_eval(coeffs, mid);
            if fm == T::zero() {
                lo = mid;
                hi = mid;
                break;
            }
            if (fm < T::zero()) == neg_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push((lo + hi) / c(2.0));
    }
    roots
}

/// Stationary points of the spline strictly inside `(lo, hi)`, in
/// increasing order, by exact per-piece polynomial root finding.
pub fn stationary_points<T: Scalar>(a: &[T], basis: &SplineBasis<T>, lo: T, hi: T) -> Result<Vec<T>> {
    check_len(a, basis)?;
    let d = basis.degree;
    if d == 0 {
        return Ok(Vec::new());
    }
    // derivative chain Y, Y', ..., Y^(d)
    let mut chain = vec![(basis.clone(), a.to_vec())];
    for _ in 0..d {
        let (b, co) = chain.last().unwrap();
        let db = b.derivative_basis().unwrap();
        let dc = b.derivative_coeffs(co);
        chain.push((db, dc));
    }
    let knots = basis.knots();
    let mut out = Vec::new();
    let mut factorial = T::one();
    let mut facts = vec![T::one()];
    for m in 1..=d {
        factorial = factorial * T::from_usize(m).unwrap();
        facts.push(factorial);
    }
    for j in d..basis.len() {
        let (t0, t1) = (knots[j], knots[j + 1]);
        if !(t1 > t0) {
            continue;
        }
        let a0 = t0.max(lo);
        let b0 = t1.min(hi);
        if !(b0 > a0) {
            continue;
        }
        // Taylor coefficients of Y at t0 on this piece
        let mut taylor = Vec::with_capacity(d + 1);
        for (m, (b, co)) in chain.iter().enumerate() {
            taylor.push(spline_eval(t0, co, b)? / facts[m]);
        }
        let deriv = poly_derivative(&taylor);
        for r in poly_roots(&deriv, a0 - t0, b0 - t0) {
            let x = t0 + r;
            if x > lo && x < hi {
                out.push(x);
            }
        }
    }
    out.sort_by(|x, y| x.partial_cmp(y).unwrap());
    out.dedup();
    Ok(out)
}

/// Monotonicity penalty over `[lo, hi]` and its gradient with respect to the
/// coefficients. The penalty is the total decrease of the spline between
/// consecutive points of {lo} ∪ stationary points ∪ {hi}.
pub fn monotonicity_penalty_grad<T: Scalar>(
    a: &[T],
    basis: &SplineBasis<T>,
    lo: T,
    hi: T,
) -> Result<(T, Vec<T>)> {
    let mut z = vec![lo];
    z.extend(stationary_points(a, basis, lo, hi)?);
    z.push(hi);
    let mut vals = Vec::with_capacity(z.len());
    for &zi in &z {
        vals.push(spline_eval(zi, a, basis)?);
    }
    let mut pen = T::zero();
    let mut grad = vec![T::zero(); a.len()];
    for i in 0..z.len() - 1 {
        let inc = vals[i + 1] - vals[i];
        if inc < T::zero() {
            pen = pen - inc;
            let b0 = basis.eval(z[i])?;
            let b1 = basis.eval(z[i + 1])?;
            for k in 0..a.len() {
                grad[k] = grad[k] + b0[k] - b1[k];
            }
        }
    }
    Ok((pen, grad))
}

/// Monotonicity penalty over the full basis domain.
pub fn monotonicity_penalty<T: Scalar>(a: &[T], basis: &SplineBasis<T>) -> Result<T> {
    let (lo, hi) = basis.domain();
    Ok(monotonicity_penalty_grad(a, basis, lo, hi)?.0)
}

/// Solves the small dense system `m x = rhs` by Gaussian elimination with
/// partial pivoting.
pub(crate) fn solve_dense<T: Scalar>(mut m: Vec<Vec<T>>, mut rhs: Vec<T>) -> Result<Vec<T>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if m[piv][col].abs() <= T::epsilon() * c(1e-3) {
            return Err(Error::Numerical("singular linear system".into()));
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                m[r][k] = m[r][k] - f * m[col][k];
            }
            rhs[r] = rhs[r] - f * rhs[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let s = (r + 1..n).fold(rhs[r], |acc, k| acc - m[r][k] * x[k]);
        x[r] = s / m[r][r];
    }
    Ok(x)
}

/// Penalized least squares: minimizes `sum (y_i - Y(x_i))^2 + lambda a'Pa`.
pub fn fit_penalized_ls<T: Scalar>(
    xs: &[T],
    ys: &[T],
    basis: &SplineBasis<T>,
    lambda: T,
) -> Result<Vec<T>> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension("x and y lengths differ".into()));
    }
    let q = basis.len();
    let p = build_penalty_matrix::<T>(q)?;
    let mut m = vec![vec![T::zero(); q]; q];
    let mut rhs = vec![T::zero(); q];
    for (&x, &y) in xs.iter().zip(ys) {
        let b = basis.eval(x)?;
        for i in 0..q {
            rhs[i] = rhs[i] + b[i] * y;
            for j in 0..q {
                m[i][j] = m[i][j] + b[i] * b[j];
            }
        }
    }
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = *v + lambda * p.get(i, j);
        }
    }
    solve_dense(m, rhs)
}
