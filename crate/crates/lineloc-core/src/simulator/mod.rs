//! Deterministic synthetic world for closed-loop evaluation: ground-truth
//! trajectories over a vector map, multiplicatively corrupted odometry,
//! and per-camera line detections with shift/angular jitter, dropouts, and
//! Poisson false positives.
//!
//! Every draw comes from a stream keyed by (seed, purpose, time, camera),
//! so a (seed, config) pair fully determines each output byte.

mod clip;
mod log;
mod replay;

pub use log::{RunLog, RunRow, TimingsMode};
pub use replay::{read_frames, read_frames_file, write_frames, write_frames_file};

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{FilterConfig, FilterError, MotionNoise, OdomDelta, ParticleSet};
use crate::geometry::{
    decompose_error, CameraDetections, Frame, GeometryError, Measurement, Point2, Polyline, Pose,
};
use crate::map::{ring_is_simple, ProbMap, VectorMap};
use crate::observation::ObsParams;
use crate::seeds::{self, STREAM_DETECTION, STREAM_ODOMETRY};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dt must be positive and finite")]
    BadDt,
    #[error("route segment {index}: {reason}")]
    BadSegment { index: usize, reason: &'static str },
    #[error("trajectory step {index} implies speed {speed:.3} m/s above the limit {limit} m/s")]
    SpeedExceeded { index: usize, speed: f64, limit: f64 },
    #[error("camera footprint {camera_id}: {reason}")]
    BadFootprint { camera_id: u32, reason: &'static str },
    #[error("detection noise: {0}")]
    BadNoise(&'static str),
    #[error("replay line {line}: {source}")]
    ReplayParse { line: usize, source: serde_json::Error },
    #[error("replay line {line}: {reason}")]
    ReplayInvalid { line: usize, reason: String },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("run log: {0}")]
    LogFormat(String),
}

/// Ground-plane field-of-view region of one camera, as a simple polygon in
/// the vehicle frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraFootprint {
    pub camera_id: u32,
    pub polygon: Vec<Point2>,
}

impl CameraFootprint {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.polygon.len() < 3 {
            return Err(SimError::BadFootprint {
                camera_id: self.camera_id,
                reason: "polygon needs at least 3 vertices",
            });
        }
        if self.polygon.iter().any(|p| !p.is_finite()) {
            return Err(SimError::BadFootprint {
                camera_id: self.camera_id,
                reason: "polygon has non-finite vertices",
            });
        }
        if !ring_is_simple(&self.polygon) {
            return Err(SimError::BadFootprint {
                camera_id: self.camera_id,
                reason: "polygon is self-intersecting",
            });
        }
        Ok(())
    }

    /// Four trapezoids looking forward, backward, left, and right.
    pub fn default_rig() -> Vec<CameraFootprint> {
        let trapezoid = |near: f64, far: f64, w_near: f64, w_far: f64| {
            vec![
                Point2::new(near, -w_near),
                Point2::new(far, -w_far),
                Point2::new(far, w_far),
                Point2::new(near, w_near),
            ]
        };
        let rotate = |ring: &[Point2], quarter_turns: u32| {
            ring.iter()
                .map(|p| match quarter_turns {
                    1 => Point2::new(-p.y, p.x),
                    2 => Point2::new(-p.x, -p.y),
                    3 => Point2::new(p.y, -p.x),
                    _ => *p,
                })
                .collect()
        };
        let front = trapezoid(1.0, 9.0, 1.5, 4.5);
        vec![
            CameraFootprint { camera_id: 0, polygon: front.clone() },
            CameraFootprint { camera_id: 1, polygon: rotate(&front, 2) },
            CameraFootprint { camera_id: 2, polygon: rotate(&front, 1) },
            CameraFootprint { camera_id: 3, polygon: rotate(&front, 3) },
        ]
    }
}

/// Detection corruption parameters: lateral point jitter, per-line
/// rotation jitter, expected false-positive lines per camera per frame,
/// and the probability of missing a true line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionNoise {
    pub sigma_shift_sim: f64,
    pub sigma_angle_sim: f64,
    pub fp_rate: f64,
    pub drop_rate: f64,
}

impl Default for DetectionNoise {
    fn default() -> Self {
        Self {
            sigma_shift_sim: 0.1,
            sigma_angle_sim: 1.0f64.to_radians(),
            fp_rate: 0.2,
            drop_rate: 0.1,
        }
    }
}

impl DetectionNoise {
    pub fn zero() -> Self {
        Self { sigma_shift_sim: 0.0, sigma_angle_sim: 0.0, fp_rate: 0.0, drop_rate: 0.0 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.sigma_shift_sim >= 0.0 && self.sigma_angle_sim >= 0.0) {
            return Err(SimError::BadNoise("jitter sigmas must be non-negative"));
        }
        if !(self.fp_rate >= 0.0) {
            return Err(SimError::BadNoise("fp_rate must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(SimError::BadNoise("drop_rate must be in [0, 1]"));
        }
        Ok(())
    }
}

/// One piece of a piecewise constant-curvature route.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RouteSegment {
    Straight { length: f64, speed: f64 },
    /// Constant-radius arc; `sweep` is the signed heading change in
    /// radians (positive = left turn).
    Arc { radius: f64, sweep: f64, speed: f64 },
    Reverse { length: f64, speed: f64 },
}

impl RouteSegment {
    fn validate(&self, index: usize) -> Result<(), SimError> {
        let bad = |reason| Err(SimError::BadSegment { index, reason });
        match *self {
            RouteSegment::Straight { length, speed } | RouteSegment::Reverse { length, speed } => {
                if !(length > 0.0) {
                    return bad("length must be positive");
                }
                if !(speed > 0.0) {
                    return bad("speed must be positive");
                }
            }
            RouteSegment::Arc { radius, sweep, speed } => {
                if !(radius > 0.0) {
                    return bad("radius must be positive");
                }
                if sweep == 0.0 || !sweep.is_finite() {
                    return bad("sweep must be non-zero");
                }
                if !(speed > 0.0) {
                    return bad("speed must be positive");
                }
            }
        }
        Ok(())
    }

    fn duration(&self) -> f64 {
        match *self {
            RouteSegment::Straight { length, speed } | RouteSegment::Reverse { length, speed } => {
                length / speed
            }
            RouteSegment::Arc { radius, sweep, speed } => sweep.abs() * radius / speed,
        }
    }

    /// Pose after traveling for `tau` seconds from `start` along this
    /// segment; closed form, so arcs close exactly.
    fn pose_at(&self, start: &Pose, tau: f64) -> Pose {
        match *self {
            RouteSegment::Straight { speed, .. } => {
                let d = speed * tau;
                Pose::new(
                    start.x + d * start.theta.cos(),
                    start.y + d * start.theta.sin(),
                    start.theta,
                )
            }
            RouteSegment::Reverse { speed, .. } => {
                let d = speed * tau;
                Pose::new(
                    start.x - d * start.theta.cos(),
                    start.y - d * start.theta.sin(),
                    start.theta,
                )
            }
            RouteSegment::Arc { radius, sweep, speed } => {
                let s = sweep.signum();
                let delta = s * speed * tau / radius;
                let (sin0, cos0) = start.theta.sin_cos();
                let cx = start.x - s * radius * sin0;
                let cy = start.y + s * radius * cos0;
                let (sin1, cos1) = (start.theta + delta).sin_cos();
                Pose::new(cx + s * radius * sin1, cy - s * radius * cos1, start.theta + delta)
            }
        }
    }
}

/// Time-ordered ground-truth poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    samples: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn samples(&self) -> &[(f64, Pose)] {
        &self.samples
    }

    pub fn start(&self) -> &Pose {
        &self.samples[0].1
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().unwrap().0
    }

    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].1, w[1].1);
                Point2::new(a.x, a.y).distance(&Point2::new(b.x, b.y))
            })
            .sum()
    }

    /// Checks the implied speed of every step against a limit.
    pub fn validate_speed(&self, limit: f64) -> Result<(), SimError> {
        for (index, w) in self.samples.windows(2).enumerate() {
            let dt = w[1].0 - w[0].0;
            let d = Point2::new(w[0].1.x, w[0].1.y).distance(&Point2::new(w[1].1.x, w[1].1.y));
            let speed = d / dt;
            if speed > limit * (1.0 + 1e-9) {
                return Err(SimError::SpeedExceeded { index, speed, limit });
            }
        }
        Ok(())
    }
}

/// Samples a piecewise constant-curvature route at a fixed time step,
/// starting from `start`. The final pose is appended when the total
/// duration is not a multiple of `dt`.
pub fn make_trajectory(
    route: &[RouteSegment],
    start: &Pose,
    dt: f64,
) -> Result<Trajectory, SimError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SimError::BadDt);
    }
    if route.is_empty() {
        return Err(SimError::BadSegment { index: 0, reason: "route must not be empty" });
    }
    for (index, seg) in route.iter().enumerate() {
        seg.validate(index)?;
    }

    // Cumulative start time and exact start pose of each segment.
    let mut seg_starts = Vec::with_capacity(route.len());
    let mut t0 = 0.0;
    let mut pose = *start;
    for seg in route {
        seg_starts.push((t0, pose));
        pose = seg.pose_at(&pose, seg.duration());
        t0 += seg.duration();
    }
    let total = t0;
    let final_pose = pose;

    let pose_at = |t: f64| -> Pose {
        let mut k = route.len() - 1;
        for (i, &(s, _)) in seg_starts.iter().enumerate() {
            if t < s {
                k = i - 1;
                break;
            }
            k = i;
        }
        let (seg_t0, seg_pose) = seg_starts[k];
        route[k].pose_at(&seg_pose, (t - seg_t0).min(route[k].duration()))
    };

    let steps = (total / dt * (1.0 + 1e-12)).floor() as usize;
    let mut samples = Vec::with_capacity(steps + 2);
    for k in 0..=steps {
        let t = k as f64 * dt;
        samples.push((t, pose_at(t)));
    }
    if total - steps as f64 * dt > 1e-9 {
        samples.push((total, final_pose));
    }
    Ok(Trajectory { samples })
}

/// Per-step odometry measurements along a trajectory, corrupted with the
/// same multiplicative noise family as the filter's motion model.
pub fn odometry_stream(traj: &Trajectory, noise: &MotionNoise, seed: u64) -> Vec<OdomDelta> {
    let mut rng = seeds::stream_rng(&[seed, STREAM_ODOMETRY]);
    let angular = Normal::new(0.0, noise.sigma_angular).expect("sigma must be non-negative");
    let linear = Normal::new(0.0, noise.sigma_linear).expect("sigma must be non-negative");
    traj.samples
        .windows(2)
        .map(|w| {
            let (dx, dy, dtheta) = w[0].1.delta_to(&w[1].1);
            let a: f64 = angular.sample(&mut rng);
            let l: f64 = linear.sample(&mut rng);
            OdomDelta {
                dx: dx + dx * l,
                dy: dy + dy * l,
                dtheta: dtheta + dtheta * a,
            }
        })
        .collect()
}

/// False-positive segment length bounds derived from the sampling step.
fn fp_length_bounds(spacing: f64) -> (f64, f64) {
    let lo = (2.0 * spacing).max(1.0);
    (lo, lo + 3.0)
}

/// Synthesizes one frame of detections for a ground-truth pose: map lines
/// clipped to each camera footprint, expressed in the vehicle frame,
/// resampled, dropped, rotated and jittered, then clipped back to the
/// footprint; plus Poisson false positives placed uniformly inside the
/// footprint. Deterministic in (seed, t, camera_id).
pub fn synthesize_measurement(
    pose: &Pose,
    vmap: &VectorMap,
    cams: &[CameraFootprint],
    noise: &DetectionNoise,
    spacing: f64,
    seed: u64,
    t: f64,
) -> Measurement {
    let shift_jitter = Normal::new(0.0, noise.sigma_shift_sim).expect("sigma non-negative");
    let angle_jitter = Normal::new(0.0, noise.sigma_angle_sim).expect("sigma non-negative");

    let mut cameras = Vec::with_capacity(cams.len());
    for cam in cams {
        let mut rng =
            seeds::stream_rng(&[seed, STREAM_DETECTION, t.to_bits(), cam.camera_id as u64]);
        let footprint_map: Vec<Point2> =
            cam.polygon.iter().map(|&p| pose.transform_point(p)).collect();
        let mut lines: Vec<Polyline> = Vec::new();

        for map_line in &vmap.lines {
            for piece in clip::clip_polyline_to_polygon(&map_line.points, &footprint_map) {
                let vehicle: Vec<Point2> =
                    piece.iter().map(|&p| pose.inverse_transform_point(p)).collect();
                let Ok(poly) = Polyline::new(vehicle, Frame::Vehicle) else {
                    continue;
                };
                let Ok(resampled) = poly.resample_equidistant(spacing) else {
                    continue; // clipped piece too short to carry evidence
                };
                let dropped = rng.random::<f64>() < noise.drop_rate;
                let rotation: f64 = angle_jitter.sample(&mut rng);
                if dropped {
                    continue;
                }
                let mut pts = resampled.points;
                if rotation != 0.0 {
                    rotate_about_midpoint(&mut pts, rotation);
                }
                if noise.sigma_shift_sim > 0.0 {
                    jitter_lateral(&mut pts, &shift_jitter, &mut rng);
                }
                for final_piece in clip::clip_polyline_to_polygon(&pts, &cam.polygon) {
                    if let Ok(line) = Polyline::new(final_piece, Frame::Vehicle) {
                        lines.push(line);
                    }
                }
            }
        }

        let fp_count = if noise.fp_rate > 0.0 {
            let poisson = Poisson::new(noise.fp_rate).expect("fp_rate positive");
            poisson.sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..fp_count {
            if let Some(line) = sample_false_positive(&cam.polygon, spacing, &mut rng) {
                lines.push(line);
            }
        }

        cameras.push(CameraDetections { camera_id: cam.camera_id, lines });
    }
    Measurement::new(cameras).expect("camera ids validated by the scenario")
}

/// Rotates the points about the chord midpoint.
fn rotate_about_midpoint(pts: &mut [Point2], angle: f64) {
    let first = pts[0];
    let last = *pts.last().unwrap();
    let mid = Point2::new(0.5 * (first.x + last.x), 0.5 * (first.y + last.y));
    let (s, c) = angle.sin_cos();
    for p in pts {
        let dx = p.x - mid.x;
        let dy = p.y - mid.y;
        p.x = mid.x + c * dx - s * dy;
        p.y = mid.y + s * dx + c * dy;
    }
}

/// Independent per-point jitter perpendicular to the line's chord
/// direction; detector noise for lines is dominantly lateral.
fn jitter_lateral(pts: &mut [Point2], dist: &Normal<f64>, rng: &mut rand_chacha::ChaCha8Rng) {
    let first = pts[0];
    let last = *pts.last().unwrap();
    let len = first.distance(&last).max(1e-9);
    let nx = -(last.y - first.y) / len;
    let ny = (last.x - first.x) / len;
    for p in pts.iter_mut() {
        let j: f64 = dist.sample(rng);
        p.x += j * nx;
        p.y += j * ny;
    }
}

/// Draws one false-positive line uniformly inside the footprint: uniform
/// center (rejection-sampled), orientation, and length; clipped to the
/// polygon and resampled. Retries until a valid line emerges so the
/// emitted count matches the Poisson draw.
fn sample_false_positive(
    ring: &[Point2],
    spacing: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Option<Polyline> {
    let (min, max) = clip::polygon_bbox(ring);
    let (len_lo, len_hi) = fp_length_bounds(spacing);
    for _ in 0..1000 {
        let center = Point2::new(
            rng.random_range(min.x..max.x),
            rng.random_range(min.y..max.y),
        );
        if !clip::point_in_polygon(center, ring) {
            continue;
        }
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let half = 0.5 * rng.random_range(len_lo..len_hi);
        let (s, c) = theta.sin_cos();
        let seg = [
            Point2::new(center.x - half * c, center.y - half * s),
            Point2::new(center.x + half * c, center.y + half * s),
        ];
        let pieces = clip::clip_polyline_to_polygon(&seg, ring);
        let longest = pieces.into_iter().max_by(|a, b| {
            chain_length(a).partial_cmp(&chain_length(b)).unwrap()
        });
        let Some(piece) = longest else { continue };
        let Ok(poly) = Polyline::new(piece, Frame::Vehicle) else {
            continue;
        };
        if let Ok(resampled) = poly.resample_equidistant(spacing) {
            return Some(resampled);
        }
    }
    None
}

fn chain_length(pts: &[Point2]) -> f64 {
    pts.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// One replayable frame: odometry since the previous frame, optional
/// ground truth, and the detections.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayFrame {
    pub t: f64,
    pub odom: OdomDelta,
    pub truth: Option<Pose>,
    pub z: Measurement,
}

/// Particle initialization policy for a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Gaussian,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitSpec {
    pub mode: InitMode,
    /// Center for Gaussian initialization; falls back to the first frame's
    /// ground truth, then to the identity pose.
    pub pose: Option<Pose>,
    pub sigmas: [f64; 3],
    pub particles: usize,
}

impl InitSpec {
    pub fn gaussian(pose: Option<Pose>, sigmas: [f64; 3], particles: usize) -> Self {
        Self { mode: InitMode::Gaussian, pose, sigmas, particles }
    }
}

fn init_particles(
    init: &InitSpec,
    pmap: &ProbMap,
    fallback: Option<Pose>,
    seed: u64,
) -> Result<ParticleSet, FilterError> {
    match init.mode {
        InitMode::Gaussian => {
            let pose0 = init.pose.or(fallback).unwrap_or_else(Pose::identity);
            ParticleSet::init_gaussian(&pose0, init.sigmas, init.particles, seed)
        }
        InitMode::Uniform => ParticleSet::init_uniform(pmap, init.particles, seed),
    }
}

/// Runs the filter over recorded frames. Used both for live closed-loop
/// simulation and for replaying detections from a file, so the two paths
/// produce identical estimates for identical inputs.
pub fn run_replay(
    pmap: &ProbMap,
    frames: &[ReplayFrame],
    obs: &ObsParams,
    filter_cfg: &FilterConfig,
    init: &InitSpec,
    seed: u64,
) -> Result<RunLog, SimError> {
    let fallback = frames.first().and_then(|f| f.truth);
    let mut set = init_particles(init, pmap, fallback, seed)?;
    let mut rows = Vec::with_capacity(frames.len());
    for frame in frames {
        let outcome = set.step(&frame.odom, &frame.z, pmap, obs, filter_cfg);
        rows.push(RunRow {
            t: frame.t,
            truth: frame.truth,
            estimate: outcome.estimate,
            error: frame.truth.map(|truth| decompose_error(&outcome.estimate, &truth)),
            timings: outcome.timings,
            degenerate: outcome.degenerate,
        });
    }
    Ok(RunLog { rows })
}

/// Closed-loop scenario: everything needed to simulate one run.
#[derive(Clone, Copy)]
pub struct Scenario<'a> {
    pub vmap: &'a VectorMap,
    pub pmap: &'a ProbMap,
    pub traj: &'a Trajectory,
    pub cams: &'a [CameraFootprint],
    pub det_noise: &'a DetectionNoise,
    pub odom_noise: &'a MotionNoise,
    pub obs: &'a ObsParams,
    pub filter_cfg: &'a FilterConfig,
    pub init: &'a InitSpec,
}

/// Simulates odometry and detections along the trajectory and steps the
/// filter through them. Returns the frames (for replay files) and the run
/// log. Deterministic in (scenario, seed).
pub fn run_closed_loop(sc: &Scenario, seed: u64) -> Result<(Vec<ReplayFrame>, RunLog), SimError> {
    for cam in sc.cams {
        cam.validate()?;
    }
    sc.det_noise.validate()?;
    let samples = sc.traj.samples();
    let deltas = odometry_stream(sc.traj, sc.odom_noise, seed);
    let frames: Vec<ReplayFrame> = samples
        .windows(2)
        .zip(deltas)
        .map(|(w, odom)| {
            let (t, truth) = w[1];
            ReplayFrame {
                t,
                odom,
                truth: Some(truth),
                z: synthesize_measurement(
                    &truth,
                    sc.vmap,
                    sc.cams,
                    sc.det_noise,
                    sc.obs.spacing,
                    seed,
                    t,
                ),
            }
        })
        .collect();
    let log = run_replay(sc.pmap, &frames, sc.obs, sc.filter_cfg, sc.init, seed)?;
    Ok((frames, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, TAU};

    #[test]
    fn straight_trajectory_sample_count() {
        let traj = make_trajectory(
            &[RouteSegment::Straight { length: 10.0, speed: 1.0 }],
            &Pose::identity(),
            1.0,
        )
        .unwrap();
        assert_eq!(traj.samples().len(), 11);
        let (t_end, end) = traj.samples()[10];
        assert_eq!(t_end, 10.0);
        assert_abs_diff_eq!(end.x, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(end.y, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn full_circle_arc_closes() {
        let traj = make_trajectory(
            &[RouteSegment::Arc { radius: 5.0, sweep: TAU, speed: 2.0 }],
            &Pose::new(1.0, -2.0, 0.7),
            0.05,
        )
        .unwrap();
        let end = traj.samples().last().unwrap().1;
        assert_abs_diff_eq!(end.x, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(end.y, -2.0, epsilon = 1e-6);
    }

    #[test]
    fn reverse_segment_moves_backward() {
        let traj = make_trajectory(
            &[RouteSegment::Reverse { length: 4.0, speed: 2.0 }],
            &Pose::identity(),
            0.5,
        )
        .unwrap();
        let xs: Vec<f64> = traj.samples().iter().map(|(_, p)| p.x).collect();
        assert!(xs.windows(2).all(|w| w[1] < w[0]));
        assert!(traj.samples().iter().all(|(_, p)| p.theta == 0.0));
    }

    #[test]
    fn left_turn_arc_quarter() {
        let traj = make_trajectory(
            &[RouteSegment::Arc { radius: 2.0, sweep: FRAC_PI_2, speed: 1.0 }],
            &Pose::identity(),
            0.1,
        )
        .unwrap();
        let end = traj.samples().last().unwrap().1;
        assert_abs_diff_eq!(end.x, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(end.y, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(end.theta, FRAC_PI_2, epsilon = 1e-9);
    }

    #[test]
    fn zero_length_segment_is_rejected() {
        assert!(matches!(
            make_trajectory(
                &[RouteSegment::Straight { length: 0.0, speed: 1.0 }],
                &Pose::identity(),
                0.1
            ),
            Err(SimError::BadSegment { .. })
        ));
    }

    #[test]
    fn noiseless_odometry_dead_reckons_exactly() {
        let traj = make_trajectory(
            &[
                RouteSegment::Straight { length: 5.0, speed: 1.0 },
                RouteSegment::Arc { radius: 3.0, sweep: FRAC_PI_2, speed: 1.0 },
                RouteSegment::Straight { length: 2.0, speed: 1.0 },
            ],
            &Pose::new(0.3, -0.4, 0.1),
            0.1,
        )
        .unwrap();
        let zero = MotionNoise { sigma_linear: 0.0, sigma_angular: 0.0 };
        let deltas = odometry_stream(&traj, &zero, 9);
        let mut pose = *traj.start();
        for (delta, w) in deltas.iter().zip(traj.samples().windows(2)) {
            let (s, c) = pose.theta.sin_cos();
            pose = Pose::new(
                pose.x + c * delta.dx - s * delta.dy,
                pose.y + s * delta.dx + c * delta.dy,
                pose.theta + delta.dtheta,
            );
            let truth = w[1].1;
            assert_abs_diff_eq!(pose.x, truth.x, epsilon = 1e-9);
            assert_abs_diff_eq!(pose.y, truth.y, epsilon = 1e-9);
            assert_abs_diff_eq!(pose.theta, truth.theta, epsilon = 1e-9);
        }
    }

    #[test]
    fn odometry_stream_is_reproducible() {
        let traj = make_trajectory(
            &[RouteSegment::Straight { length: 5.0, speed: 1.0 }],
            &Pose::identity(),
            0.2,
        )
        .unwrap();
        let noise = MotionNoise { sigma_linear: 0.1, sigma_angular: 0.1 };
        assert_eq!(odometry_stream(&traj, &noise, 4), odometry_stream(&traj, &noise, 4));
        assert_ne!(odometry_stream(&traj, &noise, 4), odometry_stream(&traj, &noise, 5));
    }

    fn corridor_vmap() -> VectorMap {
        VectorMap::from_json_str(
            r#"{"lines": [{"points": [[-20.0, 2.0], [60.0, 2.0]]}],
                "drivable": [{"ring": [[-20.0, -4.0], [60.0, -4.0], [60.0, 6.0], [-20.0, 6.0]]}],
                "bounds": [-20.0, -4.0, 60.0, 6.0]}"#,
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_detection_lies_on_the_map_line() {
        let vmap = corridor_vmap();
        let cams = CameraFootprint::default_rig();
        let pose = Pose::new(3.0, 0.0, 0.2);
        let z = synthesize_measurement(&pose, &vmap, &cams, &DetectionNoise::zero(), 0.5, 7, 1.0);
        assert!(z.total_lines() > 0);
        for cam in &z.cameras {
            for line in &cam.lines {
                for p in &line.points {
                    let map_p = pose.transform_point(*p);
                    assert_abs_diff_eq!(map_p.y, 2.0, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn no_lines_in_footprint_and_no_fp_yields_empty() {
        let vmap = corridor_vmap();
        let cams = CameraFootprint::default_rig();
        // Far from the single line (but still on the map).
        let pose = Pose::new(40.0, -20.0, 0.0);
        let z = synthesize_measurement(&pose, &vmap, &cams, &DetectionNoise::zero(), 0.5, 7, 0.0);
        assert_eq!(z.total_lines(), 0);
        assert_eq!(z.cameras.len(), 4);
    }

    #[test]
    fn detections_stay_inside_their_footprint() {
        let vmap = corridor_vmap();
        let cams = CameraFootprint::default_rig();
        let noise = DetectionNoise {
            sigma_shift_sim: 0.3,
            sigma_angle_sim: 0.1,
            fp_rate: 2.0,
            drop_rate: 0.0,
        };
        for step in 0..20 {
            let pose = Pose::new(step as f64, 0.0, 0.05 * step as f64);
            let z = synthesize_measurement(&pose, &vmap, &cams, &noise, 0.5, 11, step as f64);
            for (cam_spec, cam) in cams.iter().zip(&z.cameras) {
                for line in &cam.lines {
                    for p in &line.points {
                        assert!(
                            clip::point_in_polygon(*p, &cam_spec.polygon)
                                || cam_spec
                                    .polygon
                                    .iter()
                                    .any(|v| v.distance(p) < 1e-6)
                                || polygon_edge_distance(*p, &cam_spec.polygon) < 1e-6,
                            "point {p:?} outside footprint {}",
                            cam_spec.camera_id
                        );
                    }
                }
            }
        }
    }

    fn polygon_edge_distance(p: Point2, ring: &[Point2]) -> f64 {
        let n = ring.len();
        (0..n)
            .map(|i| {
                let a = ring[i];
                let b = ring[(i + 1) % n];
                let abx = b.x - a.x;
                let aby = b.y - a.y;
                let t = (((p.x - a.x) * abx + (p.y - a.y) * aby) / (abx * abx + aby * aby))
                    .clamp(0.0, 1.0);
                p.distance(&Point2::new(a.x + t * abx, a.y + t * aby))
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn false_positive_count_matches_poisson_mean() {
        // No reference lines near the footprints, so every detected line is
        // a false positive.
        let vmap = VectorMap::from_json_str(
            r#"{"lines": [{"points": [[200.0, 200.0], [210.0, 200.0]]}],
                "drivable": [{"ring": [[150.0, 150.0], [260.0, 150.0], [260.0, 260.0], [150.0, 260.0]]}],
                "bounds": [-50.0, -50.0, 260.0, 260.0]}"#,
        )
        .unwrap();
        let cams = vec![CameraFootprint::default_rig().remove(0)];
        let noise = DetectionNoise { fp_rate: 3.0, ..DetectionNoise::zero() };
        let frames = 10_000;
        let mut total = 0usize;
        for k in 0..frames {
            let z = synthesize_measurement(
                &Pose::identity(),
                &vmap,
                &cams,
                &noise,
                0.5,
                99,
                k as f64 * 0.1,
            );
            total += z.total_lines();
        }
        let mean = total as f64 / frames as f64;
        assert!(
            (mean - 3.0).abs() / 3.0 < 0.02,
            "false-positive mean {mean} not within 2% of 3"
        );
    }

    #[test]
    fn synthesize_is_deterministic_per_seed() {
        let vmap = corridor_vmap();
        let cams = CameraFootprint::default_rig();
        let noise = DetectionNoise::default();
        let pose = Pose::new(1.0, 0.5, 0.1);
        let a = synthesize_measurement(&pose, &vmap, &cams, &noise, 0.5, 3, 2.5);
        let b = synthesize_measurement(&pose, &vmap, &cams, &noise, 0.5, 3, 2.5);
        assert_eq!(a, b);
        let c = synthesize_measurement(&pose, &vmap, &cams, &noise, 0.5, 4, 2.5);
        assert_ne!(a, c);
    }
}
