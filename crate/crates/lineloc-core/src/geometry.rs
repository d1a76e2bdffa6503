//! Planar geometry primitives: SE(2) poses, polylines sampled as equidistant
//! points, vehicle/map frame transforms, and pose-error decomposition.
//!
//! All angles are radians, normalized to the half-open interval (-pi, pi].
//! Degrees appear only at presentation layers.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("angle must be finite")]
    NonFiniteAngle,
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("polyline coordinates must be finite")]
    NonFinitePoint,
    #[error("consecutive polyline points must be distinct")]
    RepeatedPoint,
    #[error("expected a polyline in the {expected:?} frame, got {got:?}")]
    WrongFrame { expected: Frame, got: Frame },
    #[error("spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("polyline arc length {arc_length} is shorter than the spacing {spacing}")]
    TooShort { arc_length: f64, spacing: f64 },
    #[error("camera id {0} appears more than once in a measurement")]
    DuplicateCameraId(u32),
}

/// A 2D point in meters; the frame (vehicle or map) is carried by the
/// containing [`Polyline`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", from = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(p: [f64; 2]) -> Self {
        Self { x: p[0], y: p[1] }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// Reference frame of a polyline: detector output lives in the vehicle
/// frame, map features and transformed detections in the map frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Vehicle,
    Map,
}

/// Vehicle or particle pose in the map frame: position in meters and yaw
/// relative to the map X axis, kept normalized to (-pi, pi].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    /// Maps a vehicle-frame point into the map frame: `R(theta) * p + t`.
    #[inline]
    pub fn transform_point(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2 {
            x: c * p.x - s * p.y + self.x,
            y: s * p.x + c * p.y + self.y,
        }
    }

    /// Maps a map-frame point into this pose's vehicle frame.
    #[inline]
    pub fn inverse_transform_point(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        Point2 {
            x: c * dx + s * dy,
            y: -s * dx + c * dy,
        }
    }

    /// The pose whose transform undoes this one.
    pub fn inverse(&self) -> Pose {
        let (s, c) = self.theta.sin_cos();
        Pose::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }

    /// Relative motion from `self` to `next`, expressed in `self`'s frame.
    pub fn delta_to(&self, next: &Pose) -> (f64, f64, f64) {
        let d = self.inverse_transform_point(Point2::new(next.x, next.y));
        (d.x, d.y, wrap_angle(next.theta - self.theta))
    }
}

/// Wraps a finite angle into (-pi, pi]. Already-normalized inputs are
/// returned bit-for-bit unchanged.
#[inline]
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Normalizes an angle into (-pi, pi]; the result is congruent to the
/// input modulo 2*pi. Non-finite input is an error.
pub fn normalize_angle(theta: f64) -> Result<f64, GeometryError> {
    if !theta.is_finite() {
        return Err(GeometryError::NonFiniteAngle);
    }
    Ok(wrap_angle(theta))
}

/// One detected or reference linear feature, represented by an ordered list
/// of points. After [`Polyline::resample_equidistant`] consecutive points
/// are spaced equally along the arc, except for a possibly shorter final
/// segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Point2>,
    pub frame: Frame,
}

impl Polyline {
    pub fn new(points: Vec<Point2>, frame: Frame) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinitePoint);
        }
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(GeometryError::RepeatedPoint);
        }
        Ok(Self { points, frame })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Rigidly maps a vehicle-frame polyline into the map frame for the
    /// given pose hypothesis.
    pub fn transform_to_map(&self, pose: &Pose) -> Result<Polyline, GeometryError> {
        if self.frame != Frame::Vehicle {
            return Err(GeometryError::WrongFrame {
                expected: Frame::Vehicle,
                got: self.frame,
            });
        }
        Ok(Polyline {
            points: self.points.iter().map(|&p| pose.transform_point(p)).collect(),
            frame: Frame::Map,
        })
    }

    /// Resamples the polyline to points spaced `spacing` apart along the
    /// arc. The first input point is preserved and the final segment may be
    /// shorter than `spacing`; the input must be at least `spacing` long.
    pub fn resample_equidistant(&self, spacing: f64) -> Result<Polyline, GeometryError> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(GeometryError::BadSpacing(spacing));
        }
        let total = self.arc_length();
        if total < spacing {
            return Err(GeometryError::TooShort {
                arc_length: total,
                spacing,
            });
        }

        // Number of whole steps along the arc; the epsilon snaps arc lengths
        // that are a multiple of `spacing` up to rounding.
        let steps = (total / spacing * (1.0 + 1e-12)).floor() as usize;
        let mut out = Vec::with_capacity(steps + 2);
        out.push(self.points[0]);

        let mut seg = 0; // current input segment index
        let mut seg_start_arc = 0.0;
        let mut seg_len = self.points[0].distance(&self.points[1]);
        for k in 1..=steps {
            let target = k as f64 * spacing;
            while target > seg_start_arc + seg_len && seg + 2 < self.points.len() {
                seg_start_arc += seg_len;
                seg += 1;
                seg_len = self.points[seg].distance(&self.points[seg + 1]);
            }
            let t = ((target - seg_start_arc) / seg_len).clamp(0.0, 1.0);
            let a = self.points[seg];
            let b = self.points[seg + 1];
            out.push(Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }

        // Keep the (possibly short) tail so no evidence at the line end is lost.
        let covered = steps as f64 * spacing;
        if total - covered > 1e-9 {
            out.push(*self.points.last().unwrap());
        }
        Polyline::new(out, self.frame)
    }
}

/// Detections from one camera, as vehicle-frame polylines. The list may be
/// empty when the camera saw nothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraDetections {
    pub camera_id: u32,
    pub lines: Vec<Polyline>,
}

/// All detections of one frame: per-camera collections of vehicle-frame
/// polylines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub cameras: Vec<CameraDetections>,
}

impl Measurement {
    pub fn new(cameras: Vec<CameraDetections>) -> Result<Self, GeometryError> {
        for (i, cam) in cameras.iter().enumerate() {
            if cameras[..i].iter().any(|c| c.camera_id == cam.camera_id) {
                return Err(GeometryError::DuplicateCameraId(cam.camera_id));
            }
        }
        Ok(Self { cameras })
    }

    pub fn empty() -> Self {
        Self { cameras: Vec::new() }
    }

    pub fn total_lines(&self) -> usize {
        self.cameras.iter().map(|c| c.lines.len()).sum()
    }

    pub fn total_points(&self) -> usize {
        self.cameras
            .iter()
            .flat_map(|c| c.lines.iter().map(|l| l.points.len()))
            .sum()
    }
}

/// Pose error split into the components of the ground-truth heading frame:
/// longitudinal (along truth heading), lateral (perpendicular, left
/// positive), and angular.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub longitudinal: f64,
    pub lateral: f64,
    pub angular: f64,
}

/// Decomposes `estimate - truth` into longitudinal/lateral/angular
/// components in the ground-truth heading frame.
pub fn decompose_error(estimate: &Pose, truth: &Pose) -> PoseError {
    let dx = estimate.x - truth.x;
    let dy = estimate.y - truth.y;
    let (s, c) = truth.theta.sin_cos();
    PoseError {
        longitudinal: c * dx + s * dy,
        lateral: -s * dx + c * dy,
        angular: wrap_angle(estimate.theta - truth.theta),
    }
}
