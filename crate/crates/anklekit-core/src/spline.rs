//! B-spline basis functions and 3-D curves.
//!
//! The basis is evaluated by the Cox–de Boor recursion with the usual
//! conventions: half-open knot spans, 0/0 terms defined as zero, and the
//! curve domain closed at the final knot so clamped curves interpolate both
//! end control points.

use nalgebra::{Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("need at least degree+1 = {0} control points, got {1}")]
    TooFewControlPoints(usize, usize),
    #[error("knot vector must be nondecreasing")]
    UnsortedKnots,
    #[error("knot vector length {found} != control points {ctrl} + degree {degree} + 1")]
    KnotCount { found: usize, ctrl: usize, degree: usize },
    #[error("parameter {0} outside knot domain [{1}, {2}]")]
    OutOfDomain(f64, f64, f64),
    #[error("basis index {0} out of range for {1} basis functions")]
    BasisIndex(usize, usize),
}

/// Single Cox–de Boor basis function N_{i,p}(u).
///
/// Degree-0 functions are indicators of half-open spans; the final span is
/// treated as closed so the basis sums to one on the whole domain.
pub fn bspline_basis(i: usize, p: usize, u: f64, knots: &[f64]) -> Result<f64, SplineError> {
    if knots.windows(2).any(|w| w[0] > w[1]) {
        return Err(SplineError::UnsortedKnots);
    }
    let n_basis = knots.len().checked_sub(p + 1).unwrap_or(0);
    if n_basis == 0 || i >= n_basis {
        return Err(SplineError::BasisIndex(i, n_basis));
    }
    let (lo, hi) = (knots[0], *knots.last().unwrap());
    if !(lo..=hi).contains(&u) {
        return Err(SplineError::OutOfDomain(u, lo, hi));
    }
    Ok(basis_unchecked(i, p, u, knots))
}

fn basis_unchecked(i: usize, p: usize, u: f64, knots: &[f64]) -> f64 {
    if p == 0 {
        let last = *knots.last().unwrap();
        let inside = u >= knots[i] && u < knots[i + 1];
        let closes_domain = u == last && knots[i + 1] == last && knots[i] < knots[i + 1];
        return if inside || closes_domain { 1.0 } else { 0.0 };
    }
    let mut value = 0.0;
    let d1 = knots[i + p] - knots[i];
    if d1 > 0.0 {
        value += (u - knots[i]) / d1 * basis_unchecked(i, p - 1, u, knots);
    }
    let d2 = knots[i + p + 1] - knots[i + 1];
    if d2 > 0.0 {
        value += (knots[i + p + 1] - u) / d2 * basis_unchecked(i + 1, p - 1, u, knots);
    }
    value
}

/// Polynomial spline curve in 3-D.
#[derive(Debug, Clone)]
pub struct BSplineCurve {
    degree: usize,
    control: Vec<Point3<f64>>,
    knots: Vec<f64>,
}

impl BSplineCurve {
    /// Builds a curve from explicit control points and knots.
    pub fn new(
        degree: usize,
        control: Vec<Point3<f64>>,
        knots: Vec<f64>,
    ) -> Result<Self, SplineError> {
        if control.len() < degree + 1 {
            return Err(SplineError::TooFewControlPoints(degree + 1, control.len()));
        }
        if knots.len() != control.len() + degree + 1 {
            return Err(SplineError::KnotCount {
                found: knots.len(),
                ctrl: control.len(),
                degree,
            });
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(SplineError::UnsortedKnots);
        }
        Ok(Self { degree, control, knots })
    }

    /// Clamped curve on [0, 1] with uniformly spaced interior knots, so the
    /// curve interpolates its first and last control points.
    pub fn clamped_uniform(degree: usize, control: Vec<Point3<f64>>) -> Result<Self, SplineError> {
        let n = control.len();
        if n < degree + 1 {
            return Err(SplineError::TooFewControlPoints(degree + 1, n));
        }
        let interior = n - degree - 1;
        let mut knots = vec![0.0; degree + 1];
        for k in 1..=interior {
            knots.push(k as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Self::new(degree, control, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn control_points(&self) -> &[Point3<f64>] {
        &self.control
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Parameter domain (first knot, last knot).
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    fn check_domain(&self, u: f64) -> Result<(), SplineError> {
        let (lo, hi) = self.domain();
        if (lo..=hi).contains(&u) {
            Ok(())
        } else {
            Err(SplineError::OutOfDomain(u, lo, hi))
        }
    }

    /// Curve point as the basis-weighted sum of control points.
    pub fn eval(&self, u: f64) -> Result<Point3<f64>, SplineError> {
        self.check_domain(u)?;
        let mut acc = Vector3::zeros();
        for (i, p) in self.control.iter().enumerate() {
            let w = basis_unchecked(i, self.degree, u, &self.knots);
            if w != 0.0 {
                acc += w * p.coords;
            }
        }
        Ok(Point3::from(acc))
    }

    /// First derivative as the standard degree-(p-1) difference curve.
    pub fn tangent(&self, u: f64) -> Result<Vector3<f64>, SplineError> {
        self.check_domain(u)?;
        Ok(self.derivative_points().eval_vec(u))
    }

    /// Second derivative; zero for degree < 2 curves.
    pub fn second_derivative(&self, u: f64) -> Result<Vector3<f64>, SplineError> {
        self.check_domain(u)?;
        if self.degree < 2 {
            return Ok(Vector3::zeros());
        }
        Ok(self.derivative_points().derivative_points().eval_vec(u))
    }

    /// Curvature magnitude |C' x C''| / |C'|^3; zero where the speed vanishes.
    pub fn curvature(&self, u: f64) -> Result<f64, SplineError> {
        let d1 = self.tangent(u)?;
        let d2 = self.second_derivative(u)?;
        let speed = d1.norm();
        if speed <= f64::MIN_POSITIVE {
            return Ok(0.0);
        }
        Ok(d1.cross(&d2).norm() / speed.powi(3))
    }

    fn derivative_points(&self) -> VectorSpline {
        let p = self.degree;
        if p == 0 {
            return VectorSpline {
                degree: 0,
                control: vec![Vector3::zeros(); self.control.len().max(1)],
                knots: self.knots.clone(),
            };
        }
        let mut control = Vec::with_capacity(self.control.len() - 1);
        for i in 0..self.control.len() - 1 {
            let span = self.knots[i + p + 1] - self.knots[i + 1];
            let d = if span > 0.0 {
                (self.control[i + 1] - self.control[i]) * (p as f64 / span)
            } else {
                Vector3::zeros()
            };
            control.push(d);
        }
        VectorSpline {
            degree: p - 1,
            control,
            knots: self.knots[1..self.knots.len() - 1].to_vec(),
        }
    }
}

/// Vector-valued spline used internally for derivative curves.
struct VectorSpline {
    degree: usize,
    control: Vec<Vector3<f64>>,
    knots: Vec<f64>,
}

impl VectorSpline {
    fn eval_vec(&self, u: f64) -> Vector3<f64> {
        let (lo, hi) = (self.knots[0], *self.knots.last().unwrap());
        let u = u.clamp(lo, hi);
        let mut acc = Vector3::zeros();
        for (i, v) in self.control.iter().enumerate() {
            let w = basis_unchecked(i, self.degree, u, &self.knots);
            if w != 0.0 {
                acc += w * v;
            }
        }
        acc
    }

    fn derivative_points(&self) -> VectorSpline {
        let p = self.degree;
        let mut control = Vec::with_capacity(self.control.len().saturating_sub(1));
        for i in 0..self.control.len() - 1 {
            let span = self.knots[i + p + 1] - self.knots[i + 1];
            let d = if span > 0.0 {
                (self.control[i + 1] - self.control[i]) * (p as f64 / span)
            } else {
                Vector3::zeros()
            };
            control.push(d);
        }
        VectorSpline {
            degree: p - 1,
            control,
            knots: self.knots[1..self.knots.len() - 1].to_vec(),
        }
    }
}
