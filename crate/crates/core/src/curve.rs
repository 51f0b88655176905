//! One-dimensional parametric curves `psi: [0,1] -> R^k`.
//!
//! Arc lengths are computed by adaptive Simpson quadrature of the speed
//! `|psi'(tau)|`. [`ArcLengthParam`] tabulates the cumulative arc length on a
//! uniform grid of knots so the map `tau -> t` can be inverted quickly, which
//! gives the unit-speed reparametrization `gamma(t) = psi(tau(t))`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Absolute tolerance used by [`ParametricCurve::arc_length`].
pub const QUADRATURE_TOL: f64 = 1e-9;
/// Maximum number of bisection levels before quadrature gives up.
pub const QUADRATURE_MAX_DEPTH: u32 = 20;
/// Step of the central finite difference used when no derivative is supplied.
pub const FD_STEP: f64 = 1e-6;
/// Number of uniformly spaced knots in an [`ArcLengthParam`] table.
pub const ARC_TABLE_KNOTS: usize = 4096;
/// Number of grid points used by [`covering_radius`].
pub const COVERING_GRID: usize = 10_000;

const SPEED_CHECK_GRID: usize = 1000;
const MIN_DEPTH: u32 = 4;

type PointFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// A map `psi: [0,1] -> R^k` with optional analytic derivative.
#[derive(Clone)]
pub struct ParametricCurve {
    name: String,
    dim: usize,
    map: PointFn,
    derivative: Option<PointFn>,
}

impl fmt::Debug for ParametricCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricCurve")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

impl ParametricCurve {
    /// Builds a curve from its evaluator. The evaluator writes `psi(tau)`
    /// into a slice of length `dim`.
    ///
    /// Fails if the (finite-difference) speed is not finite on a 1000-point
    /// grid.
    pub fn new<F>(name: impl Into<String>, dim: usize, map: F) -> Result<Self>
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::Argument("curve dimension must be positive".into()));
        }
        let curve = ParametricCurve {
            name: name.into(),
            dim,
            map: Arc::new(map),
            derivative: None,
        };
        curve.check_speed()?;
        Ok(curve)
    }

    /// Attaches an analytic derivative `psi'(tau)`.
    pub fn with_derivative<F>(mut self, derivative: F) -> Result<Self>
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(derivative));
        self.check_speed()?;
        Ok(self)
    }

    /// The Hardy-Weinberg curve `(tau^2, 2 tau (1 - tau), (1 - tau)^2)`.
    pub fn hardy_weinberg() -> Self {
        ParametricCurve::new("hardy-weinberg", 3, |t, out| {
            out[0] = t * t;
            out[1] = 2.0 * t * (1.0 - t);
            out[2] = (1.0 - t) * (1.0 - t);
        })
        .and_then(|c| {
            c.with_derivative(|t, out| {
                out[0] = 2.0 * t;
                out[1] = 2.0 - 4.0 * t;
                out[2] = -2.0 * (1.0 - t);
            })
        })
        .expect("hardy-weinberg curve has bounded speed")
    }

    /// Polynomial curve. `coefficients[c]` holds the coefficients of
    /// coordinate `c` in increasing powers of `tau`.
    pub fn polynomial(coefficients: Vec<Vec<f64>>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| c.is_empty()) {
            return Err(Error::Argument(
                "polynomial curve needs at least one coefficient per coordinate".into(),
            ));
        }
        if coefficients.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Argument("polynomial coefficients must be finite".into()));
        }
        let dim = coefficients.len();
        let coefficients = Arc::new(coefficients);
        let value = Arc::clone(&coefficients);
        let slope = Arc::clone(&coefficients);
        ParametricCurve::new("polynomial", dim, move |t, out| {
            for (o, c) in out.iter_mut().zip(value.iter()) {
                *o = c.iter().rev().fold(0.0, |acc, &a| acc * t + a);
            }
        })?
        .with_derivative(move |t, out| {
            for (o, c) in out.iter_mut().zip(slope.iter()) {
                *o = c
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (p, &a)| acc * t + p as f64 * a);
            }
        })
    }

    /// Straight segment from `start` to `end`.
    pub fn segment(start: &[f64], end: &[f64]) -> Result<Self> {
        if start.len() != end.len() {
            return Err(Error::Argument("segment endpoints differ in dimension".into()));
        }
        let coefficients = start
            .iter()
            .zip(end)
            .map(|(&a, &b)| vec![a, b - a])
            .collect();
        let mut curve = ParametricCurve::polynomial(coefficients)?;
        curve.name = "segment".into();
        Ok(curve)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// `psi(tau)`.
    pub fn evaluate(&self, tau: f64) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim);
        self.evaluate_into(tau, out.as_mut_slice())?;
        Ok(out)
    }

    /// Writes `psi(tau)` into `out` without allocating.
    pub fn evaluate_into(&self, tau: f64, out: &mut [f64]) -> Result<()> {
        check_domain(tau)?;
        (self.map)(tau, out);
        Ok(())
    }

    /// `psi'(tau)`, analytic when available.
    pub fn velocity(&self, tau: f64) -> Result<DVector<f64>> {
        check_domain(tau)?;
        let mut out = DVector::zeros(self.dim);
        self.velocity_unchecked(tau, out.as_mut_slice());
        Ok(out)
    }

    /// `|psi'(tau)|`.
    pub fn speed(&self, tau: f64) -> Result<f64> {
        check_domain(tau)?;
        Ok(self.speed_unchecked(tau))
    }

    /// `|integral_a^b |psi'(tau)| dtau|` by adaptive Simpson quadrature.
    pub fn arc_length(&self, tau_a: f64, tau_b: f64) -> Result<f64> {
        self.arc_length_with_tol(tau_a, tau_b, QUADRATURE_TOL)
    }

    fn arc_length_with_tol(&self, tau_a: f64, tau_b: f64, tol: f64) -> Result<f64> {
        check_domain(tau_a)?;
        check_domain(tau_b)?;
        let (lo, hi) = if tau_a <= tau_b { (tau_a, tau_b) } else { (tau_b, tau_a) };
        if lo == hi {
            return Ok(0.0);
        }
        adaptive_simpson(|t| self.speed_unchecked(t), lo, hi, tol, QUADRATURE_MAX_DEPTH)
    }

    /// Tabulates the arc-length map for fast inversion.
    pub fn arc_length_param(&self) -> Result<ArcLengthParam> {
        ArcLengthParam::new(self)
    }

    /// True when every pairwise inner product of `grid` evenly spaced curve
    /// points lies in `[0, 1]`, i.e. the curve can carry RDPG latent positions.
    pub fn is_inner_product_support(&self, grid: usize) -> bool {
        let grid = grid.max(2);
        let points: Vec<DVector<f64>> = (0..grid)
            .map(|i| {
                let mut p = DVector::zeros(self.dim);
                (self.map)(i as f64 / (grid - 1) as f64, p.as_mut_slice());
                p
            })
            .collect();
        const SLACK: f64 = 1e-12;
        points.iter().enumerate().all(|(i, a)| {
            points[i..].iter().all(|b| {
                let ip = a.dot(b);
                (-SLACK..=1.0 + SLACK).contains(&ip)
            })
        })
    }

    fn velocity_unchecked(&self, tau: f64, out: &mut [f64]) {
        if let Some(d) = &self.derivative {
            d(tau, out);
            return;
        }
        let h = FD_STEP;
        let mut a = vec![0.0; self.dim];
        let mut b = vec![0.0; self.dim];
        if tau - h >= 0.0 && tau + h <= 1.0 {
            (self.map)(tau + h, &mut a);
            (self.map)(tau - h, &mut b);
            for ((o, x), y) in out.iter_mut().zip(&a).zip(&b) {
                *o = (x - y) / (2.0 * h);
            }
        } else {
            // second-order one-sided stencil that stays inside [0,1]
            let sign = if tau - h < 0.0 { 1.0 } else { -1.0 };
            let mut c = vec![0.0; self.dim];
            (self.map)(tau, &mut a);
            (self.map)(tau + sign * h, &mut b);
            (self.map)(tau + sign * 2.0 * h, &mut c);
            for (i, o) in out.iter_mut().enumerate() {
                *o = sign * (-3.0 * a[i] + 4.0 * b[i] - c[i]) / (2.0 * h);
            }
        }
    }

    fn speed_unchecked(&self, tau: f64) -> f64 {
        let mut v = [0.0; 8];
        if self.dim <= v.len() {
            let v = &mut v[..self.dim];
            self.velocity_unchecked(tau, v);
            v.iter().map(|x| x * x).sum::<f64>().sqrt()
        } else {
            let mut v = vec![0.0; self.dim];
            self.velocity_unchecked(tau, &mut v);
            v.iter().map(|x| x * x).sum::<f64>().sqrt()
        }
    }

    fn check_speed(&self) -> Result<()> {
        for i in 0..SPEED_CHECK_GRID {
            let tau = i as f64 / (SPEED_CHECK_GRID - 1) as f64;
            let s = self.speed_unchecked(tau);
            if !s.is_finite() {
                return Err(Error::Argument(format!(
                    "curve '{}' has non-finite speed at tau = {tau}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

fn check_domain(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::Domain(format!("curve parameter {tau} outside [0, 1]")))
    }
}

fn simpson(fa: f64, fm: f64, fb: f64, width: f64) -> f64 {
    width / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, b - a);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 0, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    max_depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let diff = left + right - whole;
    if !diff.is_finite() {
        return Err(Error::Numerical("non-finite integrand in quadrature".into()));
    }
    if depth >= MIN_DEPTH && diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    if depth >= max_depth {
        return Err(Error::Numerical(format!(
            "adaptive quadrature did not converge after {max_depth} refinement levels on [{a}, {b}]"
        )));
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, max_depth)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, max_depth)?;
    Ok(l + r)
}

/// Cumulative arc length `t(tau)` tabulated on uniformly spaced knots.
#[derive(Clone, Debug)]
pub struct ArcLengthParam {
    curve: ParametricCurve,
    knots: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ArcLengthParam {
    pub fn new(curve: &ParametricCurve) -> Result<Self> {
        let n = ARC_TABLE_KNOTS;
        let knots: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let piece_tol = QUADRATURE_TOL / n as f64;
        let mut cumulative = Vec::with_capacity(n);
        cumulative.push(0.0);
        let mut total = 0.0;
        for w in knots.windows(2) {
            total += curve.arc_length_with_tol(w[0], w[1], piece_tol)?;
            cumulative.push(total);
        }
        if cumulative.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Numerical(format!(
                "arc length of curve '{}' is not strictly increasing (zero speed on an interval)",
                curve.name
            )));
        }
        Ok(ArcLengthParam {
            curve: curve.clone(),
            knots,
            cumulative,
        })
    }

    pub fn curve(&self) -> &ParametricCurve {
        &self.curve
    }

    /// Total length of the curve.
    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().expect("table is non-empty")
    }

    /// Forward map `t(tau)`.
    pub fn length_at(&self, tau: f64) -> Result<f64> {
        check_domain(tau)?;
        let k = self.segment_of_tau(tau);
        Ok(self.cumulative[k] + self.piece(k, tau)?)
    }

    /// Inverse map `tau(t)` by bisection inside the bracketing table segment.
    pub fn invert(&self, t: f64) -> Result<f64> {
        let total = self.total_length();
        if !(0.0..=total).contains(&t) {
            return Err(Error::Domain(format!(
                "arc length {t} outside [0, {total}]"
            )));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        if t == total {
            return Ok(1.0);
        }
        let k = match self.cumulative.partition_point(|&c| c <= t) {
            0 => 0,
            p => (p - 1).min(self.knots.len() - 2),
        };
        let (mut lo, mut hi) = (self.knots[k], self.knots[k + 1]);
        let target = t - self.cumulative[k];
        let stop = 1e-12 * total;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let g = self.piece(k, mid)? - target;
            if g.abs() <= stop || hi - lo <= f64::EPSILON {
                return Ok(mid);
            }
            if g < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Point on the curve at arc length `t`, i.e. `gamma(t)`.
    pub fn point_at_length(&self, t: f64) -> Result<DVector<f64>> {
        self.curve.evaluate(self.invert(t)?)
    }

    /// Covering radius of an arc-length sample on this curve.
    pub fn covering_radius(&self, t_sample: &[f64]) -> Result<f64> {
        covering_radius(self.total_length(), t_sample)
    }

    fn segment_of_tau(&self, tau: f64) -> usize {
        let k = (tau * (self.knots.len() - 1) as f64).floor() as usize;
        k.min(self.knots.len() - 2)
    }

    fn piece(&self, k: usize, tau: f64) -> Result<f64> {
        self.curve
            .arc_length_with_tol(self.knots[k], tau, QUADRATURE_TOL / self.knots.len() as f64)
    }
}

/// Sample Frechet mean on an arc-length parametrized curve: the mean of the
/// arc-length parameters.
pub fn frechet_mean_arclength(t_values: &[f64]) -> Result<f64> {
    if t_values.is_empty() {
        return Err(Error::Argument("Frechet mean of an empty sample".into()));
    }
    Ok(t_values.iter().sum::<f64>() / t_values.len() as f64)
}

/// Largest arc-length distance from a point of a 10^4-point grid on
/// `[0, total_length]` to its nearest sample parameter.
pub fn covering_radius(total_length: f64, t_sample: &[f64]) -> Result<f64> {
    if t_sample.is_empty() {
        return Err(Error::Argument("covering radius of an empty sample".into()));
    }
    if let Some(bad) = t_sample
        .iter()
        .find(|t| !(0.0..=total_length).contains(*t))
    {
        return Err(Error::Domain(format!(
            "sample parameter {bad} outside [0, {total_length}]"
        )));
    }
    let mut sorted = t_sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut worst: f64 = 0.0;
    for g in 0..COVERING_GRID {
        let x = total_length * g as f64 / (COVERING_GRID - 1) as f64;
        let p = sorted.partition_point(|&t| t < x);
        let mut nearest = f64::INFINITY;
        if p < sorted.len() {
            nearest = sorted[p] - x;
        }
        if p > 0 {
            nearest = nearest.min(x - sorted[p - 1]);
        }
        worst = worst.max(nearest);
    }
    Ok(worst)
}
