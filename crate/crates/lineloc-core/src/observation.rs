//! Measurement likelihood of detected linear features against a compiled
//! probability map.
//!
//! The model scores a detection set with two parts per camera: a shift part
//! (mean of the precomputed shift-channel density over the line points,
//! which carries the Gaussian-of-nearest-distance plus the false-positive
//! floor) and an angular part (per-segment Gaussian of the misalignment
//! angle estimated from two distance-transform lookups). Per-camera scores
//! are the product of the two part sums; cameras fuse multiplicatively,
//! accumulated in log space.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Frame, Measurement, Point2, Polyline, Pose};
use crate::map::{Channel, ProbMap};

#[derive(Debug, Error, PartialEq)]
pub enum ObservationError {
    #[error("expected a polyline in the map frame")]
    WrongFrame,
    #[error("shift likelihood needs at least one point")]
    EmptyLine,
    #[error("angular likelihood needs at least two points")]
    SinglePoint,
    #[error("sigma_angle must be positive and finite, got {0}")]
    BadSigmaAngle(f64),
    #[error("spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
}

/// Observation-model parameters. The shift-part parameters (`sigma_shift`,
/// `alpha`) live in the map, baked into the shift channel; `sigma_angle`
/// is the angular noise scale and `spacing` the polyline sampling step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsParams {
    pub sigma_angle: f64,
    pub spacing: f64,
}

impl ObsParams {
    pub fn new(sigma_angle: f64, spacing: f64) -> Result<Self, ObservationError> {
        let p = Self { sigma_angle, spacing };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ObservationError> {
        if !(self.sigma_angle > 0.0) || !self.sigma_angle.is_finite() {
            return Err(ObservationError::BadSigmaAngle(self.sigma_angle));
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(ObservationError::BadSpacing(self.spacing));
        }
        Ok(())
    }
}

/// Which parts of the measurement model to use when weighting particles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "shift")]
    ShiftOnly,
    #[serde(rename = "angular")]
    AngularOnly,
    #[serde(rename = "shift+angular")]
    Combined,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [
        ModelVariant::ShiftOnly,
        ModelVariant::AngularOnly,
        ModelVariant::Combined,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ModelVariant::ShiftOnly => "shift",
            ModelVariant::AngularOnly => "angular",
            ModelVariant::Combined => "shift+angular",
        }
    }
}

/// Per-camera likelihood parts. A camera with no detections is neutral:
/// all three values are 1 so it neither rewards nor punishes a hypothesis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraLikelihood {
    pub shift_sum: f64,
    pub angle_sum: f64,
    pub combined: f64,
}

/// Full measurement likelihood with per-camera parts and the three fused
/// products (shift-only, angular-only, combined).
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodBreakdown {
    pub per_camera: Vec<CameraLikelihood>,
    pub shift: f64,
    pub angle: f64,
    pub combined: f64,
}

impl LikelihoodBreakdown {
    pub fn variant(&self, variant: ModelVariant) -> f64 {
        match variant {
            ModelVariant::ShiftOnly => self.shift,
            ModelVariant::AngularOnly => self.angle,
            ModelVariant::Combined => self.combined,
        }
    }
}

/// Peak of the 1-D Gaussian used by the angular model.
pub fn gaussian_1d_peak(sigma: f64) -> f64 {
    1.0 / (sigma * TAU.sqrt())
}

/// Absolute angular misalignment of a segment from the distances of its two
/// endpoints to the nearest reference line: `asin(|d1 - d2| / seg_len)`,
/// with the argument clamped to [0, 1] against pixel quantization.
///
/// Returns `None` when an endpoint distance is non-finite (the out-of-map
/// sentinel) or the segment is degenerate; callers skip such segments.
#[inline]
pub fn segment_gamma(d1: f64, d2: f64, seg_len: f64) -> Option<f64> {
    if !d1.is_finite() || !d2.is_finite() || !(seg_len > 0.0) {
        return None;
    }
    Some(((d1 - d2).abs() / seg_len).min(1.0).asin())
}

/// Mean shift-channel density over the points of a map-frame line.
#[inline]
pub(crate) fn shift_mean(points: &[Point2], pmap: &ProbMap) -> f64 {
    let sum: f64 = points.iter().map(|&p| pmap.lookup(Channel::Shift, p)).sum();
    sum / points.len() as f64
}

/// Mean angular density over the segments of a map-frame line. Segments
/// with an out-of-map endpoint are skipped and the divisor reduced; if all
/// segments are skipped the angular part is 0.
#[inline]
pub(crate) fn angular_mean(points: &[Point2], pmap: &ProbMap, sigma_angle: f64) -> f64 {
    let peak = gaussian_1d_peak(sigma_angle);
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma_angle * sigma_angle);
    let mut sum = 0.0;
    let mut counted = 0usize;
    let mut prev = points[0];
    let mut prev_d = pmap.lookup(Channel::Dist, prev);
    for &p in &points[1..] {
        let d = pmap.lookup(Channel::Dist, p);
        if let Some(gamma) = segment_gamma(prev_d, d, prev.distance(&p)) {
            sum += peak * (-gamma * gamma * inv_two_sigma_sq).exp();
            counted += 1;
        }
        prev = p;
        prev_d = d;
    }
    if counted == 0 {
        0.0
    } else {
        sum / counted as f64
    }
}

/// Shift-part likelihood of one map-frame line: the mean shift-channel
/// density over its points. Out-of-map points contribute the floor
/// `1/alpha`, so a detection projected off the map scores like a false
/// positive.
pub fn shift_likelihood(line: &Polyline, pmap: &ProbMap) -> Result<f64, ObservationError> {
    if line.frame != Frame::Map {
        return Err(ObservationError::WrongFrame);
    }
    if line.points.is_empty() {
        return Err(ObservationError::EmptyLine);
    }
    Ok(shift_mean(&line.points, pmap))
}

/// Angular-part likelihood of one map-frame line: the mean per-segment
/// Gaussian of the misalignment angle.
pub fn angular_likelihood(
    line: &Polyline,
    pmap: &ProbMap,
    params: &ObsParams,
) -> Result<f64, ObservationError> {
    if line.frame != Frame::Map {
        return Err(ObservationError::WrongFrame);
    }
    if line.points.len() < 2 {
        return Err(ObservationError::SinglePoint);
    }
    Ok(angular_mean(&line.points, pmap, params.sigma_angle))
}

/// Likelihood of one camera's detections (already in the map frame):
/// the sums of the per-line shift and angular parts, combined as their
/// product. No detections yields the neutral value 1.
pub fn camera_likelihood(
    lines: &[Polyline],
    pmap: &ProbMap,
    params: &ObsParams,
) -> Result<CameraLikelihood, ObservationError> {
    if lines.is_empty() {
        return Ok(CameraLikelihood { shift_sum: 1.0, angle_sum: 1.0, combined: 1.0 });
    }
    let mut shift_sum = 0.0;
    let mut angle_sum = 0.0;
    for line in lines {
        shift_sum += shift_likelihood(line, pmap)?;
        angle_sum += angular_likelihood(line, pmap, params)?;
    }
    Ok(CameraLikelihood { shift_sum, angle_sum, combined: shift_sum * angle_sum })
}

/// Full measurement likelihood for a pose hypothesis: transforms every
/// camera's detections by `pose`, scores each camera, and fuses cameras
/// multiplicatively (accumulated as a sum of logarithms and exponentiated
/// once).
pub fn measurement_likelihood(
    z: &Measurement,
    pose: &Pose,
    pmap: &ProbMap,
    params: &ObsParams,
) -> Result<LikelihoodBreakdown, ObservationError> {
    let layout = MeasurementLayout::new(z);
    let mut transformed = vec![Point2::new(0.0, 0.0); layout.points.len()];
    transform_points(pose, &layout.points, &mut transformed);
    let n_cams = layout.camera_count();
    let mut shift_sums = vec![0.0; n_cams];
    let mut angle_sums = vec![0.0; n_cams];
    layout.score_shift_sums(&transformed, pmap, &mut shift_sums);
    layout.score_angle_sums(&transformed, pmap, params.sigma_angle, &mut angle_sums);
    Ok(layout.breakdown(&shift_sums, &angle_sums))
}

/// Measurement likelihood restricted to one model variant: shift-only and
/// angular-only fuse just that part's per-camera sums; the combined variant
/// is the full model.
pub fn model_variant(
    z: &Measurement,
    pose: &Pose,
    pmap: &ProbMap,
    params: &ObsParams,
    variant: ModelVariant,
) -> Result<f64, ObservationError> {
    Ok(measurement_likelihood(z, pose, pmap, params)?.variant(variant))
}

/// Flattened view of a measurement used to score many poses against the
/// same detections without re-walking the nested structure.
#[derive(Clone, Debug)]
pub struct MeasurementLayout {
    /// All line points concatenated, vehicle frame.
    pub(crate) points: Vec<Point2>,
    /// Per line: range into `points` plus owning camera slot.
    lines: Vec<LineSpan>,
    /// Number of detected lines per camera slot.
    lines_per_camera: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
struct LineSpan {
    start: usize,
    len: usize,
    cam: usize,
}

impl MeasurementLayout {
    pub fn new(z: &Measurement) -> Self {
        let mut points = Vec::with_capacity(z.total_points());
        let mut lines = Vec::with_capacity(z.total_lines());
        let mut lines_per_camera = Vec::with_capacity(z.cameras.len());
        for (cam, detections) in z.cameras.iter().enumerate() {
            lines_per_camera.push(detections.lines.len());
            for line in &detections.lines {
                lines.push(LineSpan { start: points.len(), len: line.points.len(), cam });
                points.extend_from_slice(&line.points);
            }
        }
        Self { points, lines, lines_per_camera }
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn camera_count(&self) -> usize {
        self.lines_per_camera.len()
    }

    pub fn vehicle_points(&self) -> &[Point2] {
        &self.points
    }

    /// Per-camera sums of the per-line shift means over transformed points.
    pub fn score_shift_sums(&self, pts: &[Point2], pmap: &ProbMap, out: &mut [f64]) {
        out.fill(0.0);
        for span in &self.lines {
            out[span.cam] += shift_mean(&pts[span.start..span.start + span.len], pmap);
        }
    }

    /// Per-camera sums of the per-line angular means over transformed points.
    pub fn score_angle_sums(&self, pts: &[Point2], pmap: &ProbMap, sigma_angle: f64, out: &mut [f64]) {
        out.fill(0.0);
        for span in &self.lines {
            out[span.cam] += angular_mean(&pts[span.start..span.start + span.len], pmap, sigma_angle);
        }
    }

    /// Assembles per-camera scores and the three log-fused products.
    pub fn breakdown(&self, shift_sums: &[f64], angle_sums: &[f64]) -> LikelihoodBreakdown {
        let mut per_camera = Vec::with_capacity(self.camera_count());
        let mut ln_shift = 0.0;
        let mut ln_angle = 0.0;
        let mut ln_combined = 0.0;
        for cam in 0..self.camera_count() {
            let score = if self.lines_per_camera[cam] == 0 {
                CameraLikelihood { shift_sum: 1.0, angle_sum: 1.0, combined: 1.0 }
            } else {
                CameraLikelihood {
                    shift_sum: shift_sums[cam],
                    angle_sum: angle_sums[cam],
                    combined: shift_sums[cam] * angle_sums[cam],
                }
            };
            ln_shift += score.shift_sum.ln();
            ln_angle += score.angle_sum.ln();
            ln_combined += score.combined.ln();
            per_camera.push(score);
        }
        LikelihoodBreakdown {
            per_camera,
            shift: ln_shift.exp(),
            angle: ln_angle.exp(),
            combined: ln_combined.exp(),
        }
    }

    /// Fused likelihood for one variant from per-camera part sums.
    pub fn fuse(&self, shift_sums: &[f64], angle_sums: &[f64], variant: ModelVariant) -> f64 {
        let mut ln = 0.0;
        for cam in 0..self.camera_count() {
            let factor = if self.lines_per_camera[cam] == 0 {
                1.0
            } else {
                match variant {
                    ModelVariant::ShiftOnly => shift_sums[cam],
                    ModelVariant::AngularOnly => angle_sums[cam],
                    ModelVariant::Combined => shift_sums[cam] * angle_sums[cam],
                }
            };
            ln += factor.ln();
        }
        ln.exp()
    }
}

/// Rigidly maps vehicle-frame points by `pose` into `dst`.
#[inline]
pub fn transform_points(pose: &Pose, src: &[Point2], dst: &mut [Point2]) {
    let (s, c) = pose.theta.sin_cos();
    for (d, p) in dst.iter_mut().zip(src) {
        d.x = c * p.x - s * p.y + pose.x;
        d.y = s * p.x + c * p.y + pose.y;
    }
}
