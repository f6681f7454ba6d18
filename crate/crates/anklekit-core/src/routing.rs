//! Flow-channel routing between manifold ports.
//!
//! A [`Route`] is a centerline between two [`Port`]s plus a bore diameter.
//! Four constructions are provided: a smooth clamped cubic B-spline that
//! leaves both port faces perpendicular ([`route_channel`]), a single cubic
//! Bezier ([`bezier3_route`]), a sharp-cornered polyline baseline
//! ([`straight_route`]) and the same polyline with circular fillets
//! ([`arc_fillet_route`]).
//!
//! Pressure drop along a route is estimated with a one-dimensional
//! surrogate: Darcy friction over the arc length plus curvature-dependent
//! minor losses, with sharp miter corners charged a fixed handbook
//! coefficient. The estimate ranks routing strategies; it does not replace
//! a flow solver.

use crate::hydraulics::FluidProps;
use crate::mesh::{MeshError, TriMesh};
use crate::spline::{BSplineCurve, SplineError};
use nalgebra::{Point3, Vector3};
use std::path::Path;

/// Default control-point count for [`route_channel`].
pub const DEFAULT_N_CTRL: usize = 6;
/// Default end-handle length for [`route_channel`] and [`bezier3_route`],
/// in multiples of the bore diameter.
pub const DEFAULT_STIFFNESS_DIAMETERS: f64 = 3.0;
/// Minimum sample count for [`curvature_profile`].
pub const MIN_CURVATURE_SAMPLES: usize = 16;
/// Column header of the centerline CSV written by [`export_route`].
pub const ROUTE_CSV_HEADER: &str = "s_m,x_m,y_m,z_m,kappa_per_m";

/// Internal sampling density for arc-length tables over spline routes.
const ARC_LUT_SAMPLES: usize = 1024;
/// Centerline samples used by [`check_clearance`].
const CLEARANCE_SAMPLES: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum RoutingError {
    #[error("port normal must be a unit vector (length {len})")]
    BadNormal { len: f64 },
    #[error("port diameter must be positive and finite (got {0} m)")]
    BadDiameter(f64),
    #[error("ports coincide; no route exists")]
    CoincidentPorts,
    #[error("a routed channel needs at least 4 control points (got {got})")]
    TooFewControlPoints { got: usize },
    #[error("stiffness must be positive and finite (got {0} m)")]
    BadStiffness(f64),
    #[error("port normals admit no forward corner path between the faces")]
    NoCornerPath,
    #[error("fillet radius {radius_m} m needs {needed_m} m of segment, only {available_m} m available")]
    FilletTooLarge {
        radius_m: f64,
        needed_m: f64,
        available_m: f64,
    },
    #[error("flow must be positive (got {0} m^3/s)")]
    BadFlow(f64),
    #[error("need at least {min} samples (got {got})")]
    TooFewSamples { got: usize, min: usize },
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// A circular opening on a manifold face. The normal is the channel axis at
/// the face, pointing in the direction of travel along the route (into the
/// body at the start port, out of it at the end port).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Port {
    pub position: Point3<f64>,
    pub normal: Vector3<f64>,
    pub diameter_m: f64,
}

impl Port {
    pub fn new(
        position: Point3<f64>,
        normal: Vector3<f64>,
        diameter_m: f64,
    ) -> Result<Self, RoutingError> {
        let port = Self { position, normal, diameter_m };
        port.validate()?;
        Ok(port)
    }

    pub fn validate(&self) -> Result<(), RoutingError> {
        let len = self.normal.norm();
        if !len.is_finite() || (len - 1.0).abs() > 1e-12 {
            return Err(RoutingError::BadNormal { len });
        }
        if !(self.diameter_m.is_finite() && self.diameter_m > 0.0) {
            return Err(RoutingError::BadDiameter(self.diameter_m));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    BSpline,
    Straight,
    ArcFillet,
    Bezier3,
}

impl RouteKind {
    pub fn tag(&self) -> &'static str {
        match self {
            RouteKind::BSpline => "bspline",
            RouteKind::Straight => "straight",
            RouteKind::ArcFillet => "arc_fillet",
            RouteKind::Bezier3 => "bezier3",
        }
    }
}

impl std::fmt::Display for RouteKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// One piece of a cornered/filleted centerline. Arcs are parameterized as
/// `center + r*(cos(phi)*u + sin(phi)*v)` for `phi` in `[0, angle]`, so the
/// arc starts at `center + r*u` with tangent `v`.
#[derive(Debug, Clone, Copy)]
pub enum Segment {
    Line {
        a: Point3<f64>,
        b: Point3<f64>,
    },
    Arc {
        center: Point3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        radius_m: f64,
        angle_rad: f64,
    },
}

impl Segment {
    pub fn length(&self) -> f64 {
        match self {
            Segment::Line { a, b } => (b - a).norm(),
            Segment::Arc { radius_m, angle_rad, .. } => radius_m * angle_rad,
        }
    }

    fn point_at(&self, s: f64) -> Point3<f64> {
        match self {
            Segment::Line { a, b } => {
                let t = s / self.length();
                a + (b - a) * t
            }
            Segment::Arc { center, u, v, radius_m, .. } => {
                let phi = s / radius_m;
                center + (u * phi.cos() + v * phi.sin()) * *radius_m
            }
        }
    }

    fn tangent_at(&self, s: f64) -> Vector3<f64> {
        match self {
            Segment::Line { a, b } => (b - a).normalize(),
            Segment::Arc { u, v, radius_m, .. } => {
                let phi = s / radius_m;
                v * phi.cos() - u * phi.sin()
            }
        }
    }

    fn curvature(&self) -> f64 {
        match self {
            Segment::Line { .. } => 0.0,
            Segment::Arc { radius_m, .. } => 1.0 / radius_m,
        }
    }
}

/// Centerline geometry: an analytic spline or a chain of lines and arcs.
#[derive(Debug, Clone)]
pub enum RouteGeometry {
    Spline(BSplineCurve),
    Segments(Vec<Segment>),
}

/// A routed channel: centerline geometry plus bore diameter. When the two
/// ports differ in bore, the route carries the smaller diameter.
#[derive(Debug, Clone)]
pub struct Route {
    pub kind: RouteKind,
    pub diameter_m: f64,
    geometry: RouteGeometry,
}

/// Arc-length lookup for spline geometry: cumulative chord length at
/// uniformly spaced parameters.
struct ArcLut {
    s: Vec<f64>,
    u: Vec<f64>,
}

impl ArcLut {
    fn build(curve: &BSplineCurve) -> ArcLut {
        let (u0, u1) = curve.domain();
        let n = ARC_LUT_SAMPLES;
        let mut s = Vec::with_capacity(n + 1);
        let mut us = Vec::with_capacity(n + 1);
        let mut prev = curve.eval(u0).expect("in-domain");
        let mut acc = 0.0;
        s.push(0.0);
        us.push(u0);
        for i in 1..=n {
            let u = u0 + (u1 - u0) * i as f64 / n as f64;
            let p = curve.eval(u).expect("in-domain");
            acc += (p - prev).norm();
            prev = p;
            s.push(acc);
            us.push(u);
        }
        ArcLut { s, u: us }
    }

    fn total(&self) -> f64 {
        *self.s.last().unwrap()
    }

    fn u_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.total());
        let i = match self.s.binary_search_by(|x| x.partial_cmp(&s).unwrap()) {
            Ok(i) => return self.u[i],
            Err(i) => i.clamp(1, self.s.len() - 1),
        };
        let (s0, s1) = (self.s[i - 1], self.s[i]);
        let t = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        self.u[i - 1] + t * (self.u[i] - self.u[i - 1])
    }
}

impl Route {
    pub fn geometry(&self) -> &RouteGeometry {
        &self.geometry
    }

    /// Spline view of the centerline, when the kind is spline-backed.
    pub fn spline(&self) -> Option<&BSplineCurve> {
        match &self.geometry {
            RouteGeometry::Spline(c) => Some(c),
            RouteGeometry::Segments(_) => None,
        }
    }

    pub fn arc_length(&self) -> f64 {
        match &self.geometry {
            RouteGeometry::Spline(c) => ArcLut::build(c).total(),
            RouteGeometry::Segments(segs) => segs.iter().map(Segment::length).sum(),
        }
    }

    pub fn start(&self) -> Point3<f64> {
        self.sample(1)[0].1
    }

    pub fn end(&self) -> Point3<f64> {
        let l = self.arc_length();
        match &self.geometry {
            RouteGeometry::Spline(c) => {
                let (_, u1) = c.domain();
                c.eval(u1).expect("in-domain")
            }
            RouteGeometry::Segments(segs) => {
                let last = segs.last().expect("non-empty route");
                last.point_at(last.length().min(l))
            }
        }
    }

    /// Turn angles (radians) at sharp line-to-line joints.
    pub fn corner_turns(&self) -> Vec<f64> {
        let RouteGeometry::Segments(segs) = &self.geometry else {
            return Vec::new();
        };
        let mut turns = Vec::new();
        for w in segs.windows(2) {
            if let (Segment::Line { a, b }, Segment::Line { a: c, b: d }) = (&w[0], &w[1]) {
                let u = (b - a).normalize();
                let v = (d - c).normalize();
                let turn = u.dot(&v).clamp(-1.0, 1.0).acos();
                if turn > 1e-9 {
                    turns.push(turn);
                }
            }
        }
        turns
    }

    /// `n + 1` points at uniform arc-length spacing, with local position,
    /// unit tangent and curvature. `n >= 1`.
    fn sample(&self, n: usize) -> Vec<(f64, Point3<f64>, Vector3<f64>, f64)> {
        let mut out = Vec::with_capacity(n + 1);
        match &self.geometry {
            RouteGeometry::Spline(c) => {
                let lut = ArcLut::build(c);
                let total = lut.total();
                for i in 0..=n {
                    let s = total * i as f64 / n as f64;
                    let u = lut.u_at(s);
                    let p = c.eval(u).expect("in-domain");
                    let t = c.tangent(u).expect("in-domain");
                    let k = c.curvature(u).expect("in-domain");
                    let t = if t.norm() > 0.0 { t.normalize() } else { Vector3::zeros() };
                    out.push((s, p, t, k));
                }
            }
            RouteGeometry::Segments(segs) => {
                let total: f64 = segs.iter().map(Segment::length).sum();
                for i in 0..=n {
                    let s = total * i as f64 / n as f64;
                    let (seg, local) = locate(segs, s);
                    out.push((s, seg.point_at(local), seg.tangent_at(local), seg.curvature()));
                }
            }
        }
        out
    }
}

/// Finds the segment containing arc length `s` and the offset within it.
fn locate(segs: &[Segment], s: f64) -> (&Segment, f64) {
    let mut rest = s;
    for seg in segs {
        let l = seg.length();
        if rest <= l || std::ptr::eq(seg, segs.last().unwrap()) {
            return (seg, rest.min(l));
        }
        rest -= l;
    }
    unreachable!("empty segment list")
}

fn validate_pair(a: &Port, b: &Port) -> Result<(), RoutingError> {
    a.validate()?;
    b.validate()?;
    if (b.position - a.position).norm() < 1e-12 {
        return Err(RoutingError::CoincidentPorts);
    }
    Ok(())
}

/// Smooth channel: clamped cubic B-spline from `a` to `b`. The first and
/// last pairs of control points lie along the port normals at distance
/// `stiffness_m`, so the curve leaves both faces perpendicular; interior
/// control points blend linearly between the two handle points.
pub fn route_channel(
    a: &Port,
    b: &Port,
    n_ctrl: usize,
    stiffness_m: f64,
) -> Result<Route, RoutingError> {
    validate_pair(a, b)?;
    if n_ctrl < 4 {
        return Err(RoutingError::TooFewControlPoints { got: n_ctrl });
    }
    if !(stiffness_m.is_finite() && stiffness_m > 0.0) {
        return Err(RoutingError::BadStiffness(stiffness_m));
    }
    let h0 = a.position + a.normal * stiffness_m;
    let h1 = b.position - b.normal * stiffness_m;
    let mut pts = Vec::with_capacity(n_ctrl);
    pts.push(a.position);
    pts.push(h0);
    let interior = n_ctrl - 4;
    for j in 1..=interior {
        let t = j as f64 / (interior + 1) as f64;
        pts.push(h0 + (h1 - h0) * t);
    }
    pts.push(h1);
    pts.push(b.position);
    let curve = BSplineCurve::clamped_uniform(3, pts)?;
    Ok(Route {
        kind: RouteKind::BSpline,
        diameter_m: a.diameter_m.min(b.diameter_m),
        geometry: RouteGeometry::Spline(curve),
    })
}

/// Single cubic Bezier with normal-aligned handles of length `handle_m`,
/// stored as a degree-3 B-spline with no interior knots. Identical to
/// [`route_channel`] with `n_ctrl = 4` and matching stiffness.
pub fn bezier3_route(a: &Port, b: &Port, handle_m: f64) -> Result<Route, RoutingError> {
    let mut route = route_channel(a, b, 4, handle_m)?;
    route.kind = RouteKind::Bezier3;
    Ok(route)
}

/// Interior corner points of the cornered baseline path: out of `a` along
/// its normal, into `b` against its normal. Coaxial ports yield no corner;
/// intersecting axes one; parallel or skew axes two.
fn corner_points(a: &Port, b: &Port) -> Result<Vec<Point3<f64>>, RoutingError> {
    let d = b.position - a.position;
    let na = a.normal;
    let nb = b.normal;
    let cross = na.cross(&nb);
    if cross.norm() < 1e-9 {
        // parallel axes; coaxial ports need no corner at all
        if d.cross(&na).norm() < 1e-9 * d.norm() {
            return if d.dot(&na) > 0.0 && d.dot(&nb) > 0.0 {
                Ok(Vec::new())
            } else {
                Err(RoutingError::NoCornerPath)
            };
        }
        if na.dot(&nb) < 0.0 {
            return Err(RoutingError::NoCornerPath);
        }
        let reach = d.dot(&na) / 2.0;
        if reach <= 0.0 {
            return Err(RoutingError::NoCornerPath);
        }
        return Ok(vec![a.position + na * reach, b.position - nb * reach]);
    }
    // closest points of the two corner axes: a + s*na and b - t*nb
    let v2 = -nb;
    let w0 = a.position - b.position;
    let bb = na.dot(&v2);
    let dd = na.dot(&w0);
    let ee = v2.dot(&w0);
    let denom = 1.0 - bb * bb;
    let s = (bb * ee - dd) / denom;
    let t = (ee - bb * dd) / denom;
    if s <= 1e-12 || t <= 1e-12 {
        return Err(RoutingError::NoCornerPath);
    }
    let c1 = a.position + na * s;
    let c2 = b.position - nb * t;
    if (c2 - c1).norm() < 1e-9 {
        Ok(vec![c1])
    } else {
        Ok(vec![c1, c2])
    }
}

/// Sharp-cornered baseline: straight segments honoring both port normals,
/// meeting at the axis intersection (one corner) or at the closest approach
/// of the two axes (two corners).
pub fn straight_route(a: &Port, b: &Port) -> Result<Route, RoutingError> {
    validate_pair(a, b)?;
    let corners = corner_points(a, b)?;
    let mut pts = vec![a.position];
    pts.extend(corners);
    pts.push(b.position);
    pts.dedup_by(|p, q| (*p - *q).norm() < 1e-12);
    let segs: Vec<Segment> = pts
        .windows(2)
        .map(|w| Segment::Line { a: w[0], b: w[1] })
        .collect();
    Ok(Route {
        kind: RouteKind::Straight,
        diameter_m: a.diameter_m.min(b.diameter_m),
        geometry: RouteGeometry::Segments(segs),
    })
}

/// The cornered baseline with every sharp corner replaced by a circular arc
/// of the given radius, tangent to both adjoining segments.
pub fn arc_fillet_route(
    a: &Port,
    b: &Port,
    fillet_radius_m: f64,
) -> Result<Route, RoutingError> {
    if !(fillet_radius_m.is_finite() && fillet_radius_m > 0.0) {
        return Err(RoutingError::BadStiffness(fillet_radius_m));
    }
    let straight = straight_route(a, b)?;
    let RouteGeometry::Segments(segs) = &straight.geometry else {
        unreachable!("straight_route emits segments");
    };
    let pts: Vec<Point3<f64>> = std::iter::once(match segs[0] {
        Segment::Line { a, .. } => a,
        Segment::Arc { .. } => unreachable!(),
    })
    .chain(segs.iter().map(|s| match s {
        Segment::Line { b, .. } => *b,
        Segment::Arc { .. } => unreachable!(),
    }))
    .collect();
    if pts.len() == 2 {
        return Ok(Route { kind: RouteKind::ArcFillet, ..straight });
    }

    // trim length at each interior corner
    let mut trims = vec![0.0; pts.len()];
    for i in 1..pts.len() - 1 {
        let u = (pts[i] - pts[i - 1]).normalize();
        let w = (pts[i + 1] - pts[i]).normalize();
        let turn = u.dot(&w).clamp(-1.0, 1.0).acos();
        trims[i] = fillet_radius_m * (turn / 2.0).tan();
    }
    for i in 0..pts.len() - 1 {
        let len = (pts[i + 1] - pts[i]).norm();
        let needed = trims[i] + trims[i + 1];
        if needed > len + 1e-12 {
            return Err(RoutingError::FilletTooLarge {
                radius_m: fillet_radius_m,
                needed_m: needed,
                available_m: len,
            });
        }
    }

    let mut out: Vec<Segment> = Vec::new();
    let mut cursor = pts[0];
    for i in 1..pts.len() - 1 {
        let u = (pts[i] - pts[i - 1]).normalize();
        let w = (pts[i + 1] - pts[i]).normalize();
        let turn = u.dot(&w).clamp(-1.0, 1.0).acos();
        let p_in = pts[i] - u * trims[i];
        if (p_in - cursor).norm() > 1e-12 {
            out.push(Segment::Line { a: cursor, b: p_in });
        }
        if turn > 1e-9 {
            // arc center sits off p_in, perpendicular to the incoming
            // direction on the inside of the turn
            let inside = (w - u * u.dot(&w)).normalize();
            let center = p_in + inside * fillet_radius_m;
            out.push(Segment::Arc {
                center,
                u: -inside,
                v: u,
                radius_m: fillet_radius_m,
                angle_rad: turn,
            });
            cursor = pts[i] + w * trims[i];
        } else {
            cursor = p_in;
        }
    }
    if (pts[pts.len() - 1] - cursor).norm() > 1e-12 {
        out.push(Segment::Line { a: cursor, b: pts[pts.len() - 1] });
    }
    Ok(Route {
        kind: RouteKind::ArcFillet,
        diameter_m: straight.diameter_m,
        geometry: RouteGeometry::Segments(out),
    })
}

/// Curvature along the route at `n_samples + 1` uniform arc-length stations
/// as `(s, kappa)` pairs. Sharp corners are not represented here (lines
/// carry zero curvature); they enter the loss model as discrete miter
/// coefficients instead.
pub fn curvature_profile(
    route: &Route,
    n_samples: usize,
) -> Result<Vec<(f64, f64)>, RoutingError> {
    if n_samples < MIN_CURVATURE_SAMPLES {
        return Err(RoutingError::TooFewSamples {
            got: n_samples,
            min: MIN_CURVATURE_SAMPLES,
        });
    }
    Ok(route
        .sample(n_samples)
        .into_iter()
        .map(|(s, _, _, k)| (s, k))
        .collect())
}

/// Pressure-loss breakdown of a route at a given flow.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossEstimate {
    pub friction_loss_pa: f64,
    pub bend_loss_pa: f64,
    pub total_pa: f64,
    pub arc_length_m: f64,
    /// Tightest bend radius along the route; `Some(0.0)` when the route has
    /// sharp miter corners, `None` when it has no bends at all.
    pub min_bend_radius_m: Option<f64>,
    pub reynolds: f64,
}

/// Loss coefficient per 90 degrees of smooth turning, as a function of the
/// diameter-to-bend-radius ratio `c = kappa * D`. Calibrated so a gentle
/// bend (R/D = 5) costs 0.1 per quarter turn and tighter bends cost
/// proportionally more.
fn k90_smooth(c: f64) -> f64 {
    0.02 + 0.4 * c
}

/// Loss coefficient of a sharp miter corner turning `turn` radians,
/// normalized to 1.1 at a right angle and growing quadratically.
fn k_miter(turn: f64) -> f64 {
    let quarter_turns = turn / (std::f64::consts::PI / 2.0);
    1.1 * quarter_turns * quarter_turns
}

/// One-dimensional pressure-loss surrogate: Darcy friction (laminar 64/Re
/// below Re 2300, Blasius above) over the arc length, plus bend losses
/// integrated from the curvature profile and a fixed miter coefficient per
/// sharp corner.
pub fn pressure_loss_estimate(
    route: &Route,
    q_m3_s: f64,
    fluid: &FluidProps,
) -> Result<LossEstimate, RoutingError> {
    if !(q_m3_s.is_finite() && q_m3_s > 0.0) {
        return Err(RoutingError::BadFlow(q_m3_s));
    }
    let d = route.diameter_m;
    let area = std::f64::consts::FRAC_PI_4 * d * d;
    let v = q_m3_s / area;
    let re = v * d / fluid.kinematic_viscosity_m2_s;
    let f = if re < 2300.0 { 64.0 / re } else { 0.316 * re.powf(-0.25) };
    let head = 0.5 * fluid.density_kg_m3 * v * v;

    let samples = route.sample(CLEARANCE_SAMPLES);
    let total_len = samples.last().unwrap().0;
    let friction = f * total_len / d * head;

    let mut bend = 0.0;
    let mut max_kappa: f64 = 0.0;
    for w in samples.windows(2) {
        let ds = w[1].0 - w[0].0;
        let kappa = 0.5 * (w[0].3 + w[1].3);
        if kappa > 1e-9 {
            let dturn = kappa * ds;
            bend += k90_smooth(kappa * d) * dturn / (std::f64::consts::PI / 2.0) * head;
            max_kappa = max_kappa.max(kappa);
        }
    }
    let corners = route.corner_turns();
    for turn in &corners {
        bend += k_miter(*turn) * head;
    }

    let min_bend_radius_m = if !corners.is_empty() {
        Some(0.0)
    } else if max_kappa > 1e-9 {
        Some(1.0 / max_kappa)
    } else {
        None
    };
    Ok(LossEstimate {
        friction_loss_pa: friction,
        bend_loss_pa: bend,
        total_pa: friction + bend,
        arc_length_m: total_len,
        min_bend_radius_m,
        reynolds: re,
    })
}

/// A solid the channel must not approach.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Obstacle {
    Sphere {
        center: Point3<f64>,
        radius_m: f64,
    },
    Capsule {
        p0: Point3<f64>,
        p1: Point3<f64>,
        radius_m: f64,
    },
}

impl Obstacle {
    /// Signed distance from a point to the obstacle surface (negative
    /// inside).
    pub fn surface_distance(&self, p: &Point3<f64>) -> f64 {
        match self {
            Obstacle::Sphere { center, radius_m } => (p - center).norm() - radius_m,
            Obstacle::Capsule { p0, p1, radius_m } => {
                let axis = p1 - p0;
                let len2 = axis.norm_squared();
                let t = if len2 > 0.0 {
                    ((p - p0).dot(&axis) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let closest = p0 + axis * t;
                (p - closest).norm() - radius_m
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClearanceViolation {
    pub s_m: f64,
    pub point: Point3<f64>,
    pub obstacle_index: usize,
    pub clearance_m: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ClearanceReport {
    pub pass: bool,
    pub violation: Option<ClearanceViolation>,
}

/// Checks that every sampled centerline point keeps at least
/// `diameter/2 + wall` of clearance to every obstacle surface, reporting
/// the first violation along the route. Negative walls are treated as zero.
pub fn check_clearance(route: &Route, obstacles: &[Obstacle], wall_m: f64) -> ClearanceReport {
    let required = route.diameter_m / 2.0 + wall_m.max(0.0);
    for (s, p, _, _) in route.sample(CLEARANCE_SAMPLES) {
        for (idx, obs) in obstacles.iter().enumerate() {
            let clearance = obs.surface_distance(&p);
            if clearance < required - 1e-12 {
                return ClearanceReport {
                    pass: false,
                    violation: Some(ClearanceViolation {
                        s_m: s,
                        point: p,
                        obstacle_index: idx,
                        clearance_m: clearance,
                    }),
                };
            }
        }
    }
    ClearanceReport { pass: true, violation: None }
}

/// Represents a route as a chain of capsules (radius = bore/2 + padding)
/// for clearance checks against other routes.
pub fn route_as_obstacle(route: &Route, n: usize, padding_m: f64) -> Vec<Obstacle> {
    let samples = route.sample(n.max(1));
    samples
        .windows(2)
        .map(|w| Obstacle::Capsule {
            p0: w[0].1,
            p1: w[1].1,
            radius_m: route.diameter_m / 2.0 + padding_m.max(0.0),
        })
        .collect()
}

/// Renders the centerline CSV (`s_m,x_m,y_m,z_m,kappa_per_m`) at
/// `n_samples + 1` uniform arc-length stations.
pub fn route_csv_string(route: &Route, n_samples: usize) -> Result<String, RoutingError> {
    if n_samples < MIN_CURVATURE_SAMPLES {
        return Err(RoutingError::TooFewSamples {
            got: n_samples,
            min: MIN_CURVATURE_SAMPLES,
        });
    }
    let mut out = String::new();
    out.push_str(ROUTE_CSV_HEADER);
    out.push('\n');
    for (s, p, _, k) in route.sample(n_samples) {
        out.push_str(&format!("{},{},{},{},{}\n", s, p.x, p.y, p.z, k));
    }
    Ok(out)
}

/// Sweeps the bore circle along the centerline into a closed triangulated
/// tube with flat end caps. Frames are parallel-transported along the
/// route, so the tube does not twist. The mesh is oriented outward.
pub fn sweep_tube(route: &Route, n_axial: usize, n_circ: usize) -> Result<TriMesh, RoutingError> {
    let n_axial = n_axial.max(2);
    let n_circ = n_circ.max(3);
    let samples = route.sample(n_axial - 1);
    let r = route.diameter_m / 2.0;

    // initial frame: any unit vector perpendicular to the start tangent
    let t0 = samples[0].2;
    let seed = if t0.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let mut e = (seed - t0 * seed.dot(&t0)).normalize();
    let mut prev_t = t0;

    let mut mesh = TriMesh::new();
    let mut rings: Vec<Vec<u32>> = Vec::with_capacity(samples.len());
    for (_, p, t, _) in &samples {
        // transport the frame onto the new tangent
        let axis = prev_t.cross(t);
        let sin = axis.norm();
        let cos = prev_t.dot(t).clamp(-1.0, 1.0);
        if sin > 1e-12 {
            let axis = axis / sin;
            let angle = sin.atan2(cos);
            let rot = nalgebra::Rotation3::from_axis_angle(
                &nalgebra::Unit::new_unchecked(axis),
                angle,
            );
            e = rot * e;
        }
        prev_t = *t;
        let e1 = (e - t * e.dot(t)).normalize();
        let e2 = t.cross(&e1);
        e = e1;
        let base = mesh.vertices.len() as u32;
        let mut ring = Vec::with_capacity(n_circ);
        for j in 0..n_circ {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / n_circ as f64;
            mesh.vertices.push(p + (e1 * phi.cos() + e2 * phi.sin()) * r);
            ring.push(base + j as u32);
        }
        rings.push(ring);
    }
    for w in rings.windows(2) {
        for j in 0..n_circ {
            let j1 = (j + 1) % n_circ;
            let (a, b) = (w[0][j], w[0][j1]);
            let (c, d) = (w[1][j], w[1][j1]);
            mesh.triangles.push([a, c, b]);
            mesh.triangles.push([b, c, d]);
        }
    }
    // end caps: fans around the ring centers
    let c0 = mesh.vertices.len() as u32;
    mesh.vertices.push(samples[0].1);
    let c1 = mesh.vertices.len() as u32;
    mesh.vertices.push(samples.last().unwrap().1);
    let first = rings.first().unwrap();
    let last = rings.last().unwrap();
    for j in 0..n_circ {
        let j1 = (j + 1) % n_circ;
        mesh.triangles.push([c0, first[j], first[j1]]);
        mesh.triangles.push([c1, last[j1], last[j]]);
    }
    if mesh.signed_volume() < 0.0 {
        for tri in &mut mesh.triangles {
            tri.swap(1, 2);
        }
    }
    Ok(mesh)
}

/// Writes the centerline CSV and the swept-tube binary STL.
pub fn export_route(
    route: &Route,
    csv_path: &Path,
    stl_path: &Path,
) -> Result<(), RoutingError> {
    let csv = route_csv_string(route, 256)?;
    std::fs::write(csv_path, csv).map_err(|source| RoutingError::Io {
        path: csv_path.display().to_string(),
        source,
    })?;
    let tube = sweep_tube(route, 128, 64)?;
    tube.write_stl(stl_path)?;
    Ok(())
}

/// Preset port pair with intersecting perpendicular axes: inlet at the
/// origin along +x, outlet 40 mm downstream and 20 mm across along +y.
/// Both bores are 3.2 mm.
pub fn preset_perpendicular() -> (Port, Port) {
    (
        Port {
            position: Point3::new(0.0, 0.0, 0.0),
            normal: Vector3::x(),
            diameter_m: 3.2e-3,
        },
        Port {
            position: Point3::new(0.04, 0.02, 0.0),
            normal: Vector3::y(),
            diameter_m: 3.2e-3,
        },
    )
}

/// Preset port pair with parallel axes offset 30 mm laterally over a 50 mm
/// run; the cornered baseline needs two right-angle turns. Both bores are
/// 3.2 mm.
pub fn preset_parallel() -> (Port, Port) {
    (
        Port {
            position: Point3::new(0.0, 0.0, 0.0),
            normal: Vector3::x(),
            diameter_m: 3.2e-3,
        },
        Port {
            position: Point3::new(0.05, 0.03, 0.0),
            normal: Vector3::x(),
            diameter_m: 3.2e-3,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn coaxial_ports() -> (Port, Port) {
        (
            Port::new(Point3::new(0.0, 0.0, 0.0), Vector3::x(), 3.2e-3).unwrap(),
            Port::new(Point3::new(0.1, 0.0, 0.0), Vector3::x(), 3.2e-3).unwrap(),
        )
    }

    #[test]
    fn port_validation_rejects_bad_inputs() {
        assert!(matches!(
            Port::new(Point3::origin(), Vector3::new(0.0, 0.0, 0.0), 1e-3),
            Err(RoutingError::BadNormal { .. })
        ));
        assert!(matches!(
            Port::new(Point3::origin(), Vector3::x(), 0.0),
            Err(RoutingError::BadDiameter(_))
        ));
        let p = Port::new(Point3::origin(), Vector3::x(), 1e-3).unwrap();
        assert!(matches!(
            route_channel(&p, &p, 6, 1e-2),
            Err(RoutingError::CoincidentPorts)
        ));
    }

    #[test]
    fn coaxial_route_collapses_to_the_straight_segment() {
        let (a, b) = coaxial_ports();
        let route = route_channel(&a, &b, 6, 0.01).unwrap();
        let curve = route.spline().unwrap();
        let (u0, u1) = curve.domain();
        for i in 0..=100 {
            let u = u0 + (u1 - u0) * i as f64 / 100.0;
            let p = curve.eval(u).unwrap();
            assert!(p.y.abs() < 1e-9 && p.z.abs() < 1e-9, "off-axis at u={u}");
            assert!((-1e-9..=0.1 + 1e-9).contains(&p.x));
        }
        assert!((route.start() - a.position).norm() < 1e-9);
        assert!((route.end() - b.position).norm() < 1e-9);
    }

    #[test]
    fn endpoint_tangents_align_with_port_normals() {
        let (a, b) = preset_perpendicular();
        for route in [
            route_channel(&a, &b, 6, 3.0 * a.diameter_m).unwrap(),
            bezier3_route(&a, &b, 3.0 * a.diameter_m).unwrap(),
        ] {
            let curve = route.spline().unwrap();
            let (u0, u1) = curve.domain();
            let t0 = curve.tangent(u0).unwrap().normalize();
            let t1 = curve.tangent(u1).unwrap().normalize();
            assert!(t0.dot(&a.normal) > 0.999, "start alignment {}", t0.dot(&a.normal));
            assert!(t1.dot(&b.normal) > 0.999, "end alignment {}", t1.dot(&b.normal));
        }
    }

    #[test]
    fn bezier3_matches_four_point_channel() {
        let (a, b) = preset_perpendicular();
        let bez = bezier3_route(&a, &b, 0.01).unwrap();
        let chan = route_channel(&a, &b, 4, 0.01).unwrap();
        let (cb, cc) = (bez.spline().unwrap(), chan.spline().unwrap());
        let (u0, u1) = cb.domain();
        for i in 0..=50 {
            let u = u0 + (u1 - u0) * i as f64 / 50.0;
            let d = (cb.eval(u).unwrap() - cc.eval(u).unwrap()).norm();
            assert!(d < 1e-12, "curves differ by {d} at u={u}");
        }
    }

    #[test]
    fn straight_route_corner_counts_match_layouts() {
        let (a, b) = preset_perpendicular();
        let perp = straight_route(&a, &b).unwrap();
        let turns = perp.corner_turns();
        assert_eq!(turns.len(), 1);
        assert_relative_eq!(turns[0], std::f64::consts::FRAC_PI_2, epsilon = 1e-12);

        let (a, b) = preset_parallel();
        let par = straight_route(&a, &b).unwrap();
        let turns = par.corner_turns();
        assert_eq!(turns.len(), 2);
        for t in turns {
            assert_relative_eq!(t, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        }
    }

    #[test]
    fn coaxial_ports_give_equal_length_routes_of_every_kind() {
        let (a, b) = coaxial_ports();
        let l = 0.1;
        for route in [
            route_channel(&a, &b, 6, 0.01).unwrap(),
            straight_route(&a, &b).unwrap(),
            arc_fillet_route(&a, &b, 5e-3).unwrap(),
            bezier3_route(&a, &b, 0.01).unwrap(),
        ] {
            assert_relative_eq!(route.arc_length(), l, epsilon = 1e-9);
        }
    }

    #[test]
    fn fillet_replaces_corner_with_exact_arc() {
        let (a, b) = preset_perpendicular();
        let rf = 5e-3;
        let route = arc_fillet_route(&a, &b, rf).unwrap();
        // polyline 40 + 20 mm, one right-angle corner: trim rf each side,
        // quarter-circle of radius rf in between
        let expected = 0.06 - 2.0 * rf + rf * std::f64::consts::FRAC_PI_2;
        assert_relative_eq!(route.arc_length(), expected, epsilon = 1e-12);
        let profile = curvature_profile(&route, 512).unwrap();
        let on_arc: Vec<&(f64, f64)> = profile
            .iter()
            .filter(|(s, _)| *s > 0.0351 && *s < 0.0351 + rf * 1.5)
            .collect();
        assert!(!on_arc.is_empty());
        for (s, k) in on_arc {
            assert_relative_eq!(*k, 1.0 / rf, max_relative = 1e-6, epsilon = 1e-9);
            let _ = s;
        }
        // start and end are still the ports
        assert!((route.start() - a.position).norm() < 1e-12);
        assert!((route.end() - b.position).norm() < 1e-12);
    }

    #[test]
    fn oversized_fillet_is_rejected() {
        let (a, b) = preset_perpendicular();
        assert!(matches!(
            arc_fillet_route(&a, &b, 0.05),
            Err(RoutingError::FilletTooLarge { .. })
        ));
    }

    #[test]
    fn curvature_profile_is_zero_on_straight_runs_and_rotation_invariant() {
        let (a, b) = coaxial_ports();
        let route = straight_route(&a, &b).unwrap();
        for (_, k) in curvature_profile(&route, 64).unwrap() {
            assert_eq!(k, 0.0);
        }

        let (a, b) = preset_perpendicular();
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 0.7);
        let ar = Port::new(rot * a.position, rot * a.normal, a.diameter_m).unwrap();
        let br = Port::new(rot * b.position, rot * b.normal, b.diameter_m).unwrap();
        let k0 = curvature_profile(&route_channel(&a, &b, 6, 0.01).unwrap(), 64).unwrap();
        let k1 = curvature_profile(&route_channel(&ar, &br, 6, 0.01).unwrap(), 64).unwrap();
        for (x, y) in k0.iter().zip(&k1) {
            assert_relative_eq!(x.0, y.0, epsilon = 1e-9);
            assert_relative_eq!(x.1, y.1, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn darcy_friction_matches_hand_arithmetic() {
        // L = 0.1 m, D = 3.2 mm, v = 2.5 m/s, rho = 850, nu = 46e-6:
        // Re = 173.91 laminar, f = 64 nu / (v D) = 0.368,
        // dP = f (L/D) rho v^2/2 = 0.368 * 31.25 * 2656.25 = 30546.875 Pa
        let (a, b) = coaxial_ports();
        let route = straight_route(&a, &b).unwrap();
        let area = std::f64::consts::FRAC_PI_4 * 3.2e-3 * 3.2e-3;
        let q = 2.5 * area;
        let est = pressure_loss_estimate(&route, q, &FluidProps::default()).unwrap();
        assert_relative_eq!(est.friction_loss_pa, 30546.875, max_relative = 1e-9);
        assert_eq!(est.bend_loss_pa, 0.0);
        assert_relative_eq!(est.reynolds, 2.5 * 3.2e-3 / 46e-6, max_relative = 1e-12);
        assert_relative_eq!(est.total_pa, est.friction_loss_pa, max_relative = 1e-12);
        assert!(est.min_bend_radius_m.is_none());
    }

    #[test]
    fn smooth_route_beats_mitered_baseline_on_both_presets() {
        let fluid = FluidProps::default();
        for (a, b) in [preset_perpendicular(), preset_parallel()] {
            let area = std::f64::consts::FRAC_PI_4 * a.diameter_m * a.diameter_m;
            let q = 2.5 * area;
            let smooth = route_channel(&a, &b, 6, 3.0 * a.diameter_m).unwrap();
            let sharp = straight_route(&a, &b).unwrap();
            let ls = pressure_loss_estimate(&smooth, q, &fluid).unwrap();
            let lt = pressure_loss_estimate(&sharp, q, &fluid).unwrap();
            assert!(
                ls.total_pa < lt.total_pa,
                "bspline {} Pa vs straight {} Pa",
                ls.total_pa,
                lt.total_pa
            );
        }
    }

    #[test]
    fn losses_grow_with_flow_and_curvature() {
        let fluid = FluidProps::default();
        let (a, b) = preset_perpendicular();
        let route = route_channel(&a, &b, 6, 3.0 * a.diameter_m).unwrap();
        let area = std::f64::consts::FRAC_PI_4 * a.diameter_m * a.diameter_m;
        let q = 2.5 * area;
        let l1 = pressure_loss_estimate(&route, q, &fluid).unwrap();
        let l2 = pressure_loss_estimate(&route, 2.0 * q, &fluid).unwrap();
        assert!(l2.total_pa > l1.total_pa);

        // same length, double the curvature: bend loss must not decrease
        let arc = |r: f64, angle: f64| Route {
            kind: RouteKind::ArcFillet,
            diameter_m: 3.2e-3,
            geometry: RouteGeometry::Segments(vec![Segment::Arc {
                center: Point3::origin(),
                u: Vector3::x(),
                v: Vector3::y(),
                radius_m: r,
                angle_rad: angle,
            }]),
        };
        let gentle = arc(0.02, std::f64::consts::FRAC_PI_2);
        let tight = arc(0.01, std::f64::consts::PI);
        assert_relative_eq!(gentle.arc_length(), tight.arc_length(), epsilon = 1e-12);
        let lg = pressure_loss_estimate(&gentle, q, &fluid).unwrap();
        let lt = pressure_loss_estimate(&tight, q, &fluid).unwrap();
        assert!(lt.bend_loss_pa > lg.bend_loss_pa);
    }

    #[test]
    fn clearance_detects_midline_obstacle_and_passes_padded_neighbors() {
        let (a, b) = coaxial_ports();
        let route = straight_route(&a, &b).unwrap();
        assert!(check_clearance(&route, &[], 1e-3).pass);

        let hit = check_clearance(
            &route,
            &[Obstacle::Sphere {
                center: Point3::new(0.05, 0.0, 0.0),
                radius_m: 2e-3,
            }],
            1e-3,
        );
        assert!(!hit.pass);
        let v = hit.violation.unwrap();
        assert!((v.s_m - 0.05).abs() < 0.01, "violation at s = {}", v.s_m);

        // parallel neighbor exactly at the pass threshold
        let d = 3.2e-3;
        let wall = 1e-3;
        let sep = d + 2.0 * wall + 1e-6;
        let neighbor = Obstacle::Capsule {
            p0: Point3::new(0.0, sep, 0.0),
            p1: Point3::new(0.1, sep, 0.0),
            radius_m: d / 2.0 + wall,
        };
        assert!(check_clearance(&route, &[neighbor], wall).pass);
        let close = Obstacle::Capsule {
            p0: Point3::new(0.0, sep - 2e-6, 0.0),
            p1: Point3::new(0.1, sep - 2e-6, 0.0),
            radius_m: d / 2.0 + wall,
        };
        assert!(!check_clearance(&route, &[close], wall).pass);
    }

    #[test]
    fn swept_tube_matches_cylinder_surface_area() {
        let (a, b) = coaxial_ports();
        let route = straight_route(&a, &b).unwrap();
        let mesh = sweep_tube(&route, 128, 64).unwrap();
        let (d, l) = (3.2e-3, 0.1);
        let expected = std::f64::consts::PI * d * l
            + 2.0 * std::f64::consts::PI * (d / 2.0) * (d / 2.0) / 2.0 * 2.0;
        assert_relative_eq!(mesh.surface_area(), expected, max_relative = 0.02);
        assert_relative_eq!(
            mesh.signed_volume(),
            std::f64::consts::FRAC_PI_4 * d * d * l,
            max_relative = 0.02
        );
        let census = mesh.edge_census();
        assert!(census.watertight, "tube must be closed");
    }

    #[test]
    fn route_export_is_deterministic_and_well_formed() {
        let dir = std::env::temp_dir().join("anklekit-routing-test");
        std::fs::create_dir_all(&dir).unwrap();
        let (a, b) = preset_perpendicular();
        let route = route_channel(&a, &b, 6, 3.0 * a.diameter_m).unwrap();
        let csv1 = dir.join("r1.csv");
        let stl1 = dir.join("r1.stl");
        let csv2 = dir.join("r2.csv");
        let stl2 = dir.join("r2.stl");
        export_route(&route, &csv1, &stl1).unwrap();
        export_route(&route, &csv2, &stl2).unwrap();
        let text = std::fs::read_to_string(&csv1).unwrap();
        assert_eq!(std::fs::read(&csv1).unwrap(), std::fs::read(&csv2).unwrap());
        assert_eq!(std::fs::read(&stl1).unwrap(), std::fs::read(&stl2).unwrap());

        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), ROUTE_CSV_HEADER);
        let mut prev = -1.0;
        let mut last = 0.0;
        for line in lines {
            let s: f64 = line.split(',').next().unwrap().parse().unwrap();
            assert!(s > prev, "s not strictly increasing");
            prev = s;
            last = s;
        }
        assert_relative_eq!(last, route.arc_length(), max_relative = 1e-9);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn no_corner_path_is_reported() {
        // outlet normal pointing back toward the inlet: the baseline would
        // have to leave the outlet face backwards
        let a = Port::new(Point3::origin(), Vector3::x(), 1e-3).unwrap();
        let b = Port::new(Point3::new(0.1, 0.0, 0.0), -Vector3::x(), 1e-3).unwrap();
        assert!(matches!(
            straight_route(&a, &b),
            Err(RoutingError::NoCornerPath)
        ));
    }
}
