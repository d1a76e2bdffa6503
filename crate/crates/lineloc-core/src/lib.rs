//! Monte-Carlo localization for vehicles observing linear features such as
//! road markings and road boundaries.
//!
//! Vector line maps are compiled into multichannel probability rasters
//! ([`map`]), detected line segments are scored by shift, angular
//! misalignment, and a false-positive floor ([`observation`]), and a
//! particle filter tracks the vehicle pose ([`filter`]). A deterministic
//! simulator ([`simulator`]) provides closed-loop evaluation without a
//! vehicle.

pub mod filter;
pub mod geometry;
pub mod map;
pub mod observation;
pub mod seeds;
pub mod simulator;

pub use filter::{
    systematic_indices, FilterConfig, FilterError, MotionNoise, OdomDelta, Particle, ParticleSet,
    StepOutcome, StepTimings,
};
pub use geometry::{
    decompose_error, normalize_angle, CameraDetections, Frame, GeometryError, Measurement, Point2,
    Polyline, Pose, PoseError,
};
pub use map::{
    build_distance_channel, build_occupancy_channel, build_shift_channel, compile,
    rasterize_lines, Bounds, Channel, MapError, MapMeta, ProbMap, Raster, VectorMap,
};
pub use observation::{
    angular_likelihood, camera_likelihood, measurement_likelihood, model_variant, segment_gamma,
    shift_likelihood, CameraLikelihood, LikelihoodBreakdown, ModelVariant, ObservationError,
    ObsParams,
};
pub use simulator::{
    make_trajectory, odometry_stream, run_closed_loop, run_replay, synthesize_measurement,
    CameraFootprint, DetectionNoise, InitMode, InitSpec, ReplayFrame, RouteSegment, RunLog,
    RunRow, Scenario, SimError, TimingsMode, Trajectory,
};
