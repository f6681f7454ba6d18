//! Gait profiles: the periodic ankle angle/moment trajectory that drives the
//! actuator, expressed over normalized cycle time `t_frac` in [0, 1] starting
//! at heel strike.
//!
//! A cycle is segmented into four phases by three fractional bounds:
//! controlled plantarflexion (CP), controlled dorsiflexion (CD), powered
//! plantarflexion (PP) and swing (SW). Angle is dorsiflexion-positive; the
//! moment column is the internal ankle moment, plantarflexor-positive, so a
//! heel-strike profile shows a small negative (dorsiflexor) dip before the
//! stance ramp.

use std::fmt;
use std::path::Path;

use thiserror::Error;

pub const GAIT_CSV_HEADER: &str = "t_frac,angle_rad,moment_Nm";

/// Minimum rows a profile must supply to be usable.
pub const MIN_PROFILE_SAMPLES: usize = 8;

#[derive(Debug, Error)]
pub enum GaitError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected header '{GAIT_CSV_HEADER}', found '{found}'")]
    BadHeader { line: usize, found: String },
    #[error("line {line}: malformed row '{content}'")]
    MalformedRow { line: usize, content: String },
    #[error("line {line}: t_frac not strictly increasing")]
    NonMonotone { line: usize },
    #[error("profile has {0} samples, need at least {MIN_PROFILE_SAMPLES}")]
    TooFewSamples(usize),
    #[error("profile must start at t_frac = 0 and end at 1 (found {0} .. {1})")]
    BadEndpoints(f64, f64),
    #[error("non-finite value in profile at sample {0}")]
    NonFinite(usize),
    #[error("cadence must be positive and finite, got {0}")]
    BadCadence(f64),
    #[error("phase bounds must satisfy 0 < cp_end < cd_end < pp_end < 1")]
    BadPhaseBounds,
    #[error("t_frac {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("moment arm must be positive and finite, got {0}")]
    BadMomentArm(f64),
}

/// The four phases of one gait cycle, in cycle order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum GaitPhase {
    ControlledPlantar,
    ControlledDorsi,
    PoweredPlantar,
    Swing,
}

impl GaitPhase {
    pub const ALL: [GaitPhase; 4] = [
        GaitPhase::ControlledPlantar,
        GaitPhase::ControlledDorsi,
        GaitPhase::PoweredPlantar,
        GaitPhase::Swing,
    ];

    /// Two-letter tag used in CSV output.
    pub fn tag(self) -> &'static str {
        match self {
            GaitPhase::ControlledPlantar => "CP",
            GaitPhase::ControlledDorsi => "CD",
            GaitPhase::PoweredPlantar => "PP",
            GaitPhase::Swing => "SW",
        }
    }
}

impl fmt::Display for GaitPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Fractional cycle times where CP, CD and PP end.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseBounds {
    pub cp_end: f64,
    pub cd_end: f64,
    pub pp_end: f64,
}

impl Default for PhaseBounds {
    fn default() -> Self {
        Self { cp_end: 0.10, cd_end: 0.50, pp_end: 0.62 }
    }
}

impl PhaseBounds {
    pub fn validate(&self) -> Result<(), GaitError> {
        let ok = self.cp_end > 0.0
            && self.cp_end < self.cd_end
            && self.cd_end < self.pp_end
            && self.pp_end < 1.0
            && self.cp_end.is_finite()
            && self.cd_end.is_finite()
            && self.pp_end.is_finite();
        if ok {
            Ok(())
        } else {
            Err(GaitError::BadPhaseBounds)
        }
    }
}

/// Phase containing `t_frac`: CP = [0, cp_end), CD = [cp_end, cd_end),
/// PP = [cd_end, pp_end), SW = [pp_end, 1].
pub fn phase_at(t_frac: f64, bounds: &PhaseBounds) -> Result<GaitPhase, GaitError> {
    bounds.validate()?;
    if !(0.0..=1.0).contains(&t_frac) {
        return Err(GaitError::OutOfRange(t_frac));
    }
    Ok(if t_frac < bounds.cp_end {
        GaitPhase::ControlledPlantar
    } else if t_frac < bounds.cd_end {
        GaitPhase::ControlledDorsi
    } else if t_frac < bounds.pp_end {
        GaitPhase::PoweredPlantar
    } else {
        GaitPhase::Swing
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitSample {
    pub t_frac: f64,
    pub angle_rad: f64,
    pub moment_nm: f64,
}

/// One ankle cycle sampled over [0, 1] plus the cycle duration.
#[derive(Debug, Clone)]
pub struct GaitProfile {
    samples: Vec<GaitSample>,
    cadence_s: f64,
}

impl GaitProfile {
    pub fn new(samples: Vec<GaitSample>, cadence_s: f64) -> Result<Self, GaitError> {
        if !(cadence_s.is_finite() && cadence_s > 0.0) {
            return Err(GaitError::BadCadence(cadence_s));
        }
        if samples.len() < MIN_PROFILE_SAMPLES {
            return Err(GaitError::TooFewSamples(samples.len()));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.t_frac.is_finite() && s.angle_rad.is_finite() && s.moment_nm.is_finite()) {
                return Err(GaitError::NonFinite(i));
            }
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].t_frac <= w[0].t_frac {
                return Err(GaitError::NonMonotone { line: i + 2 });
            }
        }
        let (t0, t1) = (samples[0].t_frac, samples.last().unwrap().t_frac);
        if t0.abs() > 1e-12 || (t1 - 1.0).abs() > 1e-12 {
            return Err(GaitError::BadEndpoints(t0, t1));
        }
        Ok(Self { samples, cadence_s })
    }

    pub fn samples(&self) -> &[GaitSample] {
        &self.samples
    }

    pub fn cadence_s(&self) -> f64 {
        self.cadence_s
    }

    /// Linear interpolation of (angle, moment) at `t_frac`.
    pub fn interpolate(&self, t_frac: f64) -> Result<(f64, f64), GaitError> {
        if !(0.0..=1.0).contains(&t_frac) {
            return Err(GaitError::OutOfRange(t_frac));
        }
        let s = &self.samples;
        let j = s.partition_point(|x| x.t_frac <= t_frac).min(s.len() - 1);
        if j == 0 {
            return Ok((s[0].angle_rad, s[0].moment_nm));
        }
        let (a, b) = (&s[j - 1], &s[j]);
        let w = (t_frac - a.t_frac) / (b.t_frac - a.t_frac);
        Ok((
            a.angle_rad + w * (b.angle_rad - a.angle_rad),
            a.moment_nm + w * (b.moment_nm - a.moment_nm),
        ))
    }
}

/// Loads a gait profile CSV (`t_frac,angle_rad,moment_Nm`). Leading lines
/// starting with `#` are treated as comments. The CSV carries no timing, so
/// the cycle duration is supplied by the caller.
pub fn load_gait_csv(path: &Path, cadence_s: f64) -> Result<GaitProfile, GaitError> {
    let text = std::fs::read_to_string(path).map_err(|source| GaitError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_gait_csv(&text, cadence_s)
}

/// Parses gait CSV text; see [`load_gait_csv`].
pub fn parse_gait_csv(text: &str, cadence_s: f64) -> Result<GaitProfile, GaitError> {
    let mut samples = Vec::new();
    let mut header_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            if trimmed != GAIT_CSV_HEADER {
                return Err(GaitError::BadHeader { line, found: trimmed.to_string() });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(GaitError::MalformedRow { line, content: trimmed.to_string() });
        }
        let mut vals = [0.0f64; 3];
        for (k, f) in fields.iter().enumerate() {
            vals[k] = f.trim().parse().map_err(|_| GaitError::MalformedRow {
                line,
                content: trimmed.to_string(),
            })?;
        }
        if let Some(prev) = samples.last() {
            let prev: &GaitSample = prev;
            if vals[0] <= prev.t_frac {
                return Err(GaitError::NonMonotone { line });
            }
        }
        samples.push(GaitSample { t_frac: vals[0], angle_rad: vals[1], moment_nm: vals[2] });
    }
    if !header_seen {
        return Err(GaitError::BadHeader { line: 1, found: String::new() });
    }
    GaitProfile::new(samples, cadence_s)
}

/// Writes the profile back out in the same CSV dialect the loader accepts.
pub fn write_gait_csv(profile: &GaitProfile, path: &Path) -> Result<(), GaitError> {
    std::fs::write(path, gait_csv_string(profile, None)).map_err(|source| GaitError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Renders the profile as CSV text, optionally preceded by a `#` comment.
pub fn gait_csv_string(profile: &GaitProfile, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    out.push_str(GAIT_CSV_HEADER);
    out.push('\n');
    for s in profile.samples() {
        out.push_str(&format!("{},{},{}\n", s.t_frac, s.angle_rad, s.moment_nm));
    }
    out
}

/// Resamples onto `n >= 8` uniform fractions with exact endpoints.
pub fn resample(profile: &GaitProfile, n: usize) -> Result<GaitProfile, GaitError> {
    if n < MIN_PROFILE_SAMPLES {
        return Err(GaitError::TooFewSamples(n));
    }
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = if i + 1 == n { 1.0 } else { i as f64 / (n - 1) as f64 };
        let (angle_rad, moment_nm) = profile.interpolate(t)?;
        samples.push(GaitSample { t_frac: t, angle_rad, moment_nm });
    }
    GaitProfile::new(samples, profile.cadence_s())
}

/// Instantaneous ankle power M * dtheta/dt at every sample, in watts.
///
/// The angular rate uses three-point central differences on the (possibly
/// nonuniform) interior samples and one-sided differences at the endpoints;
/// cycle fractions are converted to seconds with the cadence. Sign is kept:
/// negative power is absorption.
pub fn ankle_power(profile: &GaitProfile) -> Vec<f64> {
    let s = profile.samples();
    let n = s.len();
    let dt = |i: usize, j: usize| (s[j].t_frac - s[i].t_frac) * profile.cadence_s();
    let mut power = Vec::with_capacity(n);
    for i in 0..n {
        let rate = if i == 0 {
            (s[1].angle_rad - s[0].angle_rad) / dt(0, 1)
        } else if i == n - 1 {
            (s[n - 1].angle_rad - s[n - 2].angle_rad) / dt(n - 2, n - 1)
        } else {
            let h1 = dt(i - 1, i);
            let h2 = dt(i, i + 1);
            // derivative of the quadratic through the three samples
            -s[i - 1].angle_rad * h2 / (h1 * (h1 + h2))
                + s[i].angle_rad * (h2 - h1) / (h1 * h2)
                + s[i + 1].angle_rad * h1 / (h2 * (h1 + h2))
        };
        power.push(s[i].moment_nm * rate);
    }
    power
}

/// Trapezoidal integral of [`ankle_power`] over the cycle: net joint work in J.
pub fn net_work(profile: &GaitProfile) -> f64 {
    let p = ankle_power(profile);
    let s = profile.samples();
    let mut acc = 0.0;
    for i in 1..s.len() {
        let dt = (s[i].t_frac - s[i - 1].t_frac) * profile.cadence_s();
        acc += 0.5 * (p[i] + p[i - 1]) * dt;
    }
    acc
}

/// Crank geometry mapping the revolute ankle onto the linear cylinder.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinkageMap {
    pub moment_arm_m: f64,
    pub neutral_angle_rad: f64,
}

impl LinkageMap {
    pub fn validate(&self) -> Result<(), GaitError> {
        if self.moment_arm_m.is_finite()
            && self.moment_arm_m > 0.0
            && self.neutral_angle_rad.is_finite()
        {
            Ok(())
        } else {
            Err(GaitError::BadMomentArm(self.moment_arm_m))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderLoadSample {
    pub t_frac: f64,
    /// Axial load on the piston, N. Positive load accelerates the piston in
    /// the +y (descending) direction.
    pub force_n: f64,
    /// Commanded piston displacement relative to the neutral pose, m.
    pub position_m: f64,
}

/// Cylinder load/command series derived from a gait profile.
#[derive(Debug, Clone)]
pub struct CylinderLoad {
    pub samples: Vec<CylinderLoadSample>,
}

impl CylinderLoad {
    /// Linear interpolation of (force, position) at `t_frac`; clamps outside
    /// the sample range.
    pub fn interpolate(&self, t_frac: f64) -> (f64, f64) {
        let s = &self.samples;
        if t_frac <= s[0].t_frac {
            return (s[0].force_n, s[0].position_m);
        }
        if t_frac >= s[s.len() - 1].t_frac {
            let last = &s[s.len() - 1];
            return (last.force_n, last.position_m);
        }
        let j = s.partition_point(|x| x.t_frac <= t_frac);
        let (a, b) = (&s[j - 1], &s[j]);
        let w = (t_frac - a.t_frac) / (b.t_frac - a.t_frac);
        (
            a.force_n + w * (b.force_n - a.force_n),
            a.position_m + w * (b.position_m - a.position_m),
        )
    }
}

/// Small-angle crank mapping: force = moment / arm, displacement =
/// arm * (angle - neutral).
pub fn cylinder_load_from_ankle(
    profile: &GaitProfile,
    linkage: &LinkageMap,
) -> Result<CylinderLoad, GaitError> {
    linkage.validate()?;
    let samples = profile
        .samples()
        .iter()
        .map(|s| CylinderLoadSample {
            t_frac: s.t_frac,
            force_n: s.moment_nm / linkage.moment_arm_m,
            position_m: linkage.moment_arm_m * (s.angle_rad - linkage.neutral_angle_rad),
        })
        .collect();
    Ok(CylinderLoad { samples })
}

/// Cosine-blend interpolation through (t, value) knots: C1, flat at knots.
fn cosine_track(knots: &[(f64, f64)], t: f64) -> f64 {
    let j = knots.partition_point(|k| k.0 <= t);
    if j == 0 {
        return knots[0].1;
    }
    if j >= knots.len() {
        return knots[knots.len() - 1].1;
    }
    let (t0, v0) = knots[j - 1];
    let (t1, v1) = knots[j];
    let x = (t - t0) / (t1 - t0);
    let s = 0.5 * (1.0 - (std::f64::consts::PI * x).cos());
    v0 + s * (v1 - v0)
}

/// Synthetic level-walking profile bundled as the default input: heel-strike
/// plantar dip, stance dorsiflexion to ~0.17 rad, push-off plantarflexion and
/// swing return, with the moment ramping to 1.5 N·m/kg at 75 kg body mass.
/// Not measurement data.
pub fn synthetic_profile(cadence_s: f64, n: usize) -> Result<GaitProfile, GaitError> {
    let angle_knots = [
        (0.0, 0.0),
        (0.10, -0.08),
        (0.50, 0.17),
        (0.62, -0.25),
        (1.0, 0.0),
    ];
    let moment_knots = [
        (0.0, 0.0),
        (0.05, -15.0),
        (0.10, 8.0),
        (0.48, 112.5),
        (0.62, 0.0),
        (1.0, 0.0),
    ];
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = if i + 1 == n { 1.0 } else { i as f64 / (n - 1) as f64 };
        samples.push(GaitSample {
            t_frac: t,
            angle_rad: cosine_track(&angle_knots, t),
            moment_nm: cosine_track(&moment_knots, t),
        });
    }
    GaitProfile::new(samples, cadence_s)
}

/// Comment header attached to the bundled profile when written to disk.
pub const SYNTHETIC_PROFILE_COMMENT: &str =
    "synthetic level-walking ankle profile (not measured data)\n\
     angle: dorsiflexion-positive rad; moment: plantarflexor-positive N m";
