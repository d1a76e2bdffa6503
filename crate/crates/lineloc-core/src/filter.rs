//! Particle filter over SE(2) poses: multiplicative-noise motion
//! prediction, observation weighting gated by the occupancy channel,
//! systematic resampling, and weighted-circular-mean pose extraction.
//!
//! All randomness is derived deterministically from the set's seed. Motion
//! noise comes from per-particle streams keyed by (seed, iteration,
//! particle index), so serial and parallel execution produce identical
//! particle trajectories.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Measurement, Point2, Pose};
use crate::map::{Channel, ProbMap};
use crate::observation::{transform_points, MeasurementLayout, ModelVariant, ObsParams};
use crate::seeds::{self, STREAM_FILTER_INIT, STREAM_PREDICT, STREAM_RESAMPLE};

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("particle set needs at least one particle")]
    EmptyParticleSet,
    #[error("particle weights must be normalized, sum is {0}")]
    UnnormalizedWeights(f64),
    #[error("occupancy channel has no drivable pixels")]
    NoFreePixels,
}

/// One pose hypothesis with its normalized weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub pose: Pose,
    pub weight: f64,
}

/// Multiplicative motion-noise scales: `sigma_linear` multiplies the
/// traveled distance, `sigma_angular` the heading change. Zero motion
/// therefore stays exactly zero regardless of the noise scales.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionNoise {
    pub sigma_linear: f64,
    pub sigma_angular: f64,
}

/// Difference of two consecutive odometry poses, expressed in the earlier
/// odometry frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdomDelta {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl OdomDelta {
    pub fn zero() -> Self {
        Self { dx: 0.0, dy: 0.0, dtheta: 0.0 }
    }

    pub fn travel(&self) -> f64 {
        (self.dx * self.dx + self.dy * self.dy).sqrt()
    }
}

/// Per-step filter configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub motion_noise: MotionNoise,
    pub variant: ModelVariant,
    /// Resample only when the effective sample size drops below N/2
    /// instead of every iteration.
    pub ess_gating: bool,
    /// Score particles on a rayon pool; results are identical to serial.
    pub parallel: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            motion_noise: MotionNoise { sigma_linear: 0.05, sigma_angular: 0.05 },
            variant: ModelVariant::Combined,
            ess_gating: false,
            parallel: false,
        }
    }
}

/// Wall-clock breakdown of one filter iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepTimings {
    pub total: Duration,
    pub transform: Duration,
    pub shift: Duration,
    pub angular: Duration,
    pub resample: Duration,
}

impl StepTimings {
    pub fn ms(d: Duration) -> f64 {
        d.as_secs_f64() * 1e3
    }
}

/// Result of one filter iteration. The pose estimate is taken before
/// resampling, while the weights still carry the measurement information.
#[derive(Clone, Copy, Debug)]
pub struct StepOutcome {
    pub estimate: Pose,
    pub timings: StepTimings,
    /// All raw weights were zero and the set was reset to uniform.
    pub degenerate: bool,
    /// The circular mean of the headings was undefined (antipodal tie) and
    /// the max-weight particle's heading was used instead.
    pub theta_tie: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct WeighOutcome {
    pub degenerate: bool,
    pub transform: Duration,
    pub shift: Duration,
    pub angular: Duration,
}

/// Weighted pose estimate; `theta_tie` flags the antipodal-tie fallback.
#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub pose: Pose,
    pub theta_tie: bool,
}

/// N weighted pose hypotheses plus the deterministic generator state that
/// drives initialization and resampling.
#[derive(Clone, Debug)]
pub struct ParticleSet {
    particles: Vec<Particle>,
    seed: u64,
    iteration: u64,
    rng: ChaCha8Rng,
}

impl ParticleSet {
    /// Particles drawn from independent Gaussians around `pose0` with the
    /// given (x, y, theta) standard deviations, all weighted 1/N.
    pub fn init_gaussian(
        pose0: &Pose,
        sigmas: [f64; 3],
        n: usize,
        seed: u64,
    ) -> Result<Self, FilterError> {
        if n == 0 {
            return Err(FilterError::EmptyParticleSet);
        }
        let mut rng = seeds::stream_rng(&[seed, STREAM_FILTER_INIT]);
        let dist_x = Normal::new(pose0.x, sigmas[0]).expect("sigma must be non-negative");
        let dist_y = Normal::new(pose0.y, sigmas[1]).expect("sigma must be non-negative");
        let dist_t = Normal::new(pose0.theta, sigmas[2]).expect("sigma must be non-negative");
        let weight = 1.0 / n as f64;
        let particles = (0..n)
            .map(|_| Particle {
                pose: Pose::new(
                    dist_x.sample(&mut rng),
                    dist_y.sample(&mut rng),
                    dist_t.sample(&mut rng),
                ),
                weight,
            })
            .collect();
        Ok(Self {
            particles,
            seed,
            iteration: 0,
            rng: seeds::stream_rng(&[seed, STREAM_RESAMPLE]),
        })
    }

    /// Global-localization initialization: poses uniform over the drivable
    /// pixels of the occupancy channel, headings uniform in (-pi, pi].
    pub fn init_uniform(pmap: &ProbMap, n: usize, seed: u64) -> Result<Self, FilterError> {
        if n == 0 {
            return Err(FilterError::EmptyParticleSet);
        }
        let occupancy = pmap.channel(Channel::Occupancy);
        let free: Vec<usize> = occupancy
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.5)
            .map(|(i, _)| i)
            .collect();
        if free.is_empty() {
            return Err(FilterError::NoFreePixels);
        }
        let meta = pmap.meta();
        let half = meta.resolution / 2.0;
        let mut rng = seeds::stream_rng(&[seed, STREAM_FILTER_INIT]);
        let weight = 1.0 / n as f64;
        let particles = (0..n)
            .map(|_| {
                let pick = free[rng.random_range(0..free.len())];
                let col = (pick % meta.width as usize) as u32;
                let row = (pick / meta.width as usize) as u32;
                let center = meta.pixel_center(col, row);
                let x = center.x + rng.random_range(-half..half);
                let y = center.y + rng.random_range(-half..half);
                let theta = wrap_angle(rng.random_range(0.0..std::f64::consts::TAU));
                Particle { pose: Pose::new(x, y, theta), weight }
            })
            .collect();
        Ok(Self {
            particles,
            seed,
            iteration: 0,
            rng: seeds::stream_rng(&[seed, STREAM_RESAMPLE]),
        })
    }

    /// Assembles a set from explicit particles; weights are taken as given.
    pub fn from_particles(particles: Vec<Particle>, seed: u64) -> Result<Self, FilterError> {
        if particles.is_empty() {
            return Err(FilterError::EmptyParticleSet);
        }
        Ok(Self {
            particles,
            seed,
            iteration: 0,
            rng: seeds::stream_rng(&[seed, STREAM_RESAMPLE]),
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Effective sample size 1 / sum(w^2); N for uniform weights.
    pub fn ess(&self) -> f64 {
        let sum_sq: f64 = self.particles.iter().map(|p| p.weight * p.weight).sum();
        if sum_sq > 0.0 {
            1.0 / sum_sq
        } else {
            0.0
        }
    }

    /// Motion prediction: heading updates first (with multiplicative
    /// angular noise), then the particle translates along its new heading
    /// by the odometry travel distance with multiplicative linear noise.
    /// Weights are unchanged.
    pub fn predict(&mut self, delta: &OdomDelta, noise: &MotionNoise) {
        // Zero motion is an exact identity under multiplicative noise;
        // skip the arithmetic so poses stay bit-identical.
        if delta.dx == 0.0 && delta.dy == 0.0 && delta.dtheta == 0.0 {
            self.iteration += 1;
            return;
        }
        let angular = Normal::new(0.0, noise.sigma_angular).expect("sigma must be non-negative");
        let linear = Normal::new(0.0, noise.sigma_linear).expect("sigma must be non-negative");
        let travel = delta.travel();
        let seed = self.seed;
        let iteration = self.iteration;
        let update = |(i, particle): (usize, &mut Particle)| {
            let mut rng = seeds::stream_rng(&[seed, STREAM_PREDICT, iteration, i as u64]);
            let dtheta_noise: f64 = angular.sample(&mut rng);
            let travel_noise: f64 = linear.sample(&mut rng);
            let theta = wrap_angle(
                particle.pose.theta + delta.dtheta + delta.dtheta * dtheta_noise,
            );
            let d = travel + travel * travel_noise;
            particle.pose = Pose {
                x: particle.pose.x + d * theta.cos(),
                y: particle.pose.y + d * theta.sin(),
                theta,
            };
        };
        self.particles.iter_mut().enumerate().for_each(update);
        self.iteration += 1;
    }

    /// Observation update: every particle's raw weight is its measurement
    /// likelihood times the occupancy gate, then weights are normalized.
    /// If every raw weight is zero the set is reset to uniform and the
    /// degeneracy flag raised.
    pub fn weigh(
        &mut self,
        z: &Measurement,
        pmap: &ProbMap,
        params: &ObsParams,
        variant: ModelVariant,
        parallel: bool,
    ) -> WeighOutcome {
        let layout = MeasurementLayout::new(z);
        let n = self.particles.len();
        let n_pts = layout.point_count();
        let n_cams = layout.camera_count();

        let mut transformed = vec![Point2::new(0.0, 0.0); n * n_pts];
        let mut shift_sums = vec![0.0; n * n_cams];
        let mut angle_sums = vec![0.0; n * n_cams];

        let mut transform_time = Duration::ZERO;
        let mut shift_time = Duration::ZERO;
        let mut angular_time = Duration::ZERO;

        if n_pts > 0 {
            let src = layout.vehicle_points();
            let t = Instant::now();
            if parallel {
                transformed
                    .par_chunks_mut(n_pts)
                    .zip(self.particles.par_iter())
                    .for_each(|(dst, p)| transform_points(&p.pose, src, dst));
            } else {
                for (dst, p) in transformed.chunks_mut(n_pts).zip(&self.particles) {
                    transform_points(&p.pose, src, dst);
                }
            }
            transform_time = t.elapsed();

            let t = Instant::now();
            if parallel {
                shift_sums
                    .par_chunks_mut(n_cams)
                    .zip(transformed.par_chunks(n_pts))
                    .for_each(|(out, pts)| layout.score_shift_sums(pts, pmap, out));
            } else {
                for (out, pts) in shift_sums.chunks_mut(n_cams).zip(transformed.chunks(n_pts)) {
                    layout.score_shift_sums(pts, pmap, out);
                }
            }
            shift_time = t.elapsed();

            let sigma_angle = params.sigma_angle;
            let t = Instant::now();
            if parallel {
                angle_sums
                    .par_chunks_mut(n_cams)
                    .zip(transformed.par_chunks(n_pts))
                    .for_each(|(out, pts)| layout.score_angle_sums(pts, pmap, sigma_angle, out));
            } else {
                for (out, pts) in angle_sums.chunks_mut(n_cams).zip(transformed.chunks(n_pts)) {
                    layout.score_angle_sums(pts, pmap, sigma_angle, out);
                }
            }
            angular_time = t.elapsed();
        }

        let mut raw_sum = 0.0;
        for (i, particle) in self.particles.iter_mut().enumerate() {
            let likelihood = if n_cams == 0 {
                1.0
            } else {
                layout.fuse(
                    &shift_sums[i * n_cams..(i + 1) * n_cams],
                    &angle_sums[i * n_cams..(i + 1) * n_cams],
                    variant,
                )
            };
            let gate = pmap.lookup(
                Channel::Occupancy,
                Point2::new(particle.pose.x, particle.pose.y),
            );
            particle.weight = likelihood * gate;
            raw_sum += particle.weight;
        }

        let degenerate = raw_sum == 0.0;
        if degenerate {
            let uniform = 1.0 / n as f64;
            for particle in &mut self.particles {
                particle.weight = uniform;
            }
        } else {
            for particle in &mut self.particles {
                particle.weight /= raw_sum;
            }
        }
        WeighOutcome {
            degenerate,
            transform: transform_time,
            shift: shift_time,
            angular: angular_time,
        }
    }

    /// Low-variance systematic resampling: one uniform draw in [0, 1/N)
    /// and an evenly spaced comb against the cumulative weights. Every
    /// particle's copy count is floor(N*w) or ceil(N*w).
    pub fn systematic_resample(&mut self) -> Result<(), FilterError> {
        let sum: f64 = self.particles.iter().map(|p| p.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(FilterError::UnnormalizedWeights(sum));
        }
        let n = self.particles.len();
        let u0 = self.rng.random_range(0.0..1.0 / n as f64);
        let weights: Vec<f64> = self.particles.iter().map(|p| p.weight).collect();
        let indices = systematic_indices(&weights, n, u0);
        let uniform = 1.0 / n as f64;
        self.particles = indices
            .into_iter()
            .map(|i| Particle { pose: self.particles[i].pose, weight: uniform })
            .collect();
        Ok(())
    }

    /// Weighted mean position and weighted circular mean of headings.
    /// Falls back to the max-weight particle's heading when the circular
    /// mean is undefined.
    pub fn estimate(&self) -> Estimate {
        let mut x = 0.0;
        let mut y = 0.0;
        let mut sin_sum = 0.0;
        let mut cos_sum = 0.0;
        for p in &self.particles {
            x += p.weight * p.pose.x;
            y += p.weight * p.pose.y;
            let (s, c) = p.pose.theta.sin_cos();
            sin_sum += p.weight * s;
            cos_sum += p.weight * c;
        }
        let resultant = (sin_sum * sin_sum + cos_sum * cos_sum).sqrt();
        let (theta, theta_tie) = if resultant < 1e-12 {
            let best = self
                .particles
                .iter()
                .max_by(|a, b| a.weight.partial_cmp(&b.weight).unwrap())
                .expect("particle set is non-empty");
            (best.pose.theta, true)
        } else {
            (sin_sum.atan2(cos_sum), false)
        };
        Estimate { pose: Pose::new(x, y, theta), theta_tie }
    }

    /// One full filter iteration: predict, weigh, estimate (before
    /// resampling, so the mean uses the information-bearing weights),
    /// then systematic resampling unless the ESS gate says the set is
    /// still healthy.
    pub fn step(
        &mut self,
        delta: &OdomDelta,
        z: &Measurement,
        pmap: &ProbMap,
        params: &ObsParams,
        cfg: &FilterConfig,
    ) -> StepOutcome {
        let start = Instant::now();
        self.predict(delta, &cfg.motion_noise);
        let weigh = self.weigh(z, pmap, params, cfg.variant, cfg.parallel);
        let estimate = self.estimate();
        let mut resample_time = Duration::ZERO;
        let resample = !cfg.ess_gating || self.ess() < self.len() as f64 / 2.0;
        if resample {
            let t = Instant::now();
            self.systematic_resample()
                .expect("weights are normalized after weighting");
            resample_time = t.elapsed();
        }
        StepOutcome {
            estimate: estimate.pose,
            theta_tie: estimate.theta_tie,
            degenerate: weigh.degenerate,
            timings: StepTimings {
                total: start.elapsed(),
                transform: weigh.transform,
                shift: weigh.shift,
                angular: weigh.angular,
                resample: resample_time,
            },
        }
    }
}

/// Systematic-resampling index selection: `n` comb points `u0 + j/n`
/// matched against the cumulative weights. Exposed with an explicit comb
/// offset `u0` in [0, 1/n) so the low-variance guarantee can be checked
/// over a grid of offsets.
pub fn systematic_indices(weights: &[f64], n: usize, u0: f64) -> Vec<usize> {
    debug_assert!(!weights.is_empty() && n > 0);
    let step = 1.0 / n as f64;
    debug_assert!((0.0..step).contains(&u0));
    let mut indices = Vec::with_capacity(n);
    let mut cursor = 0usize;
    let mut cum = weights[0];
    for j in 0..n {
        let u = u0 + j as f64 * step;
        while u > cum && cursor + 1 < weights.len() {
            cursor += 1;
            cum += weights[cursor];
        }
        indices.push(cursor);
    }
    indices
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraDetections, Frame, Polyline};
    use crate::map::{compile, MapMeta, VectorMap};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn straight_map() -> ProbMap {
        let vmap = VectorMap::from_json_str(
            r#"{"lines": [{"points": [[-10.0, 0.0], [10.0, 0.0]]}],
                "drivable": [{"ring": [[-10.0, -3.0], [10.0, -3.0], [10.0, 3.0], [-10.0, 3.0]]}],
                "bounds": [-10.0, -3.0, 10.0, 3.0]}"#,
        )
        .unwrap();
        let meta = MapMeta::covering(&vmap.bounds, 0.05, 1.0).unwrap();
        compile(&vmap, &meta, 0.2, 10.0).unwrap()
    }

    fn params() -> ObsParams {
        ObsParams::new(0.1, 0.5).unwrap()
    }

    fn one_line_measurement() -> Measurement {
        let line = Polyline::new(
            vec![
                Point2::new(1.0, 0.0),
                Point2::new(1.5, 0.0),
                Point2::new(2.0, 0.0),
            ],
            Frame::Vehicle,
        )
        .unwrap();
        Measurement::new(vec![CameraDetections { camera_id: 0, lines: vec![line] }]).unwrap()
    }

    #[test]
    fn init_gaussian_zero_sigma_and_determinism() {
        let pose0 = Pose::new(1.0, -2.0, 0.3);
        let a = ParticleSet::init_gaussian(&pose0, [0.0; 3], 32, 9).unwrap();
        assert!(a.particles().iter().all(|p| p.pose == pose0));
        assert!(a.particles().iter().all(|p| p.weight == 1.0 / 32.0));

        let b = ParticleSet::init_gaussian(&pose0, [0.0; 3], 32, 9).unwrap();
        assert_eq!(a.particles(), b.particles());

        assert_eq!(
            ParticleSet::init_gaussian(&pose0, [0.0; 3], 0, 9).unwrap_err(),
            FilterError::EmptyParticleSet
        );
    }

    #[test]
    fn init_gaussian_sample_mean_converges() {
        let pose0 = Pose::new(5.0, 0.0, 0.0);
        let set = ParticleSet::init_gaussian(&pose0, [1.0, 0.0, 0.0], 10_000, 123).unwrap();
        let mean: f64 =
            set.particles().iter().map(|p| p.pose.x).sum::<f64>() / set.len() as f64;
        assert!((mean - 5.0).abs() < 0.05, "sample mean {mean}");
    }

    #[test]
    fn init_uniform_respects_occupancy() {
        let pmap = straight_map();
        let set = ParticleSet::init_uniform(&pmap, 2000, 7).unwrap();
        for p in set.particles() {
            assert_eq!(
                pmap.lookup(Channel::Occupancy, Point2::new(p.pose.x, p.pose.y)),
                1.0
            );
            assert!(p.pose.theta > -std::f64::consts::PI && p.pose.theta <= std::f64::consts::PI);
        }
    }

    #[test]
    fn init_uniform_x_histogram_is_uniform() {
        // All-drivable map; chi-squared over 8 x-bins at the 0.01 level
        // (critical value 18.475 for 7 degrees of freedom).
        let vmap = VectorMap::from_json_str(
            r#"{"lines": [{"points": [[0.0, 0.0], [16.0, 0.0]]}],
                "drivable": [{"ring": [[-0.5, -0.5], [16.5, -0.5], [16.5, 16.5], [-0.5, 16.5]]}],
                "bounds": [-0.5, -0.5, 16.5, 16.5]}"#,
        )
        .unwrap();
        let meta = MapMeta::covering(&vmap.bounds, 1.0, 0.0).unwrap();
        let pmap = compile(&vmap, &meta, 0.2, 10.0).unwrap();
        let n = 100_000usize;
        let set = ParticleSet::init_uniform(&pmap, n, 42).unwrap();
        // Support of the x coordinate: the free columns plus the half-pixel
        // jitter on each side.
        let meta = pmap.meta();
        let occ = pmap.channel(Channel::Occupancy);
        let free_cols: Vec<u32> = (0..meta.width)
            .filter(|&c| (0..meta.height).any(|r| occ.get(c, r) > 0.5))
            .collect();
        let res = meta.resolution;
        let min_x = meta.origin.x + *free_cols.first().unwrap() as f64 * res - res / 2.0;
        let max_x = meta.origin.x + *free_cols.last().unwrap() as f64 * res + res / 2.0;
        let span = max_x - min_x;
        let mut bins = [0usize; 8];
        for p in set.particles() {
            let b = (((p.pose.x - min_x) / span) * 8.0).floor() as usize;
            bins[b.min(7)] += 1;
        }
        let expected = n as f64 / 8.0;
        let chi2: f64 = bins
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 18.475, "chi-squared statistic {chi2}, bins {bins:?}");
    }

    #[test]
    fn init_uniform_errors_without_free_pixels() {
        let vmap = VectorMap::from_json_str(
            r#"{"lines": [{"points": [[0.0, 0.0], [2.0, 0.0]]}]}"#,
        )
        .unwrap();
        let meta = MapMeta::covering(&vmap.bounds, 0.5, 0.5).unwrap();
        let pmap = compile(&vmap, &meta, 0.2, 10.0).unwrap();
        assert_eq!(
            ParticleSet::init_uniform(&pmap, 10, 1).unwrap_err(),
            FilterError::NoFreePixels
        );
    }

    #[test]
    fn predict_zero_delta_is_bit_identical() {
        let pose0 = Pose::new(2.0, -1.0, 0.7);
        let mut set = ParticleSet::init_gaussian(&pose0, [0.4, 0.4, 0.2], 64, 3).unwrap();
        let before = set.particles().to_vec();
        set.predict(
            &OdomDelta::zero(),
            &MotionNoise { sigma_linear: 3.0, sigma_angular: 5.0 },
        );
        for (a, b) in before.iter().zip(set.particles()) {
            assert_eq!(a.pose.x.to_bits(), b.pose.x.to_bits());
            assert_eq!(a.pose.y.to_bits(), b.pose.y.to_bits());
            assert_eq!(a.pose.theta.to_bits(), b.pose.theta.to_bits());
        }
        assert_eq!(set.iteration(), 1);
    }

    #[test]
    fn predict_noiseless_hand_traces() {
        let noise = MotionNoise { sigma_linear: 0.0, sigma_angular: 0.0 };
        let mut set = ParticleSet::init_gaussian(&Pose::identity(), [0.0; 3], 1, 0).unwrap();
        set.predict(&OdomDelta { dx: 1.0, dy: 0.0, dtheta: 0.0 }, &noise);
        let p = set.particles()[0].pose;
        assert_abs_diff_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);

        // Heading updates before translation: the particle moves along the
        // new heading, not the old one.
        let mut set = ParticleSet::init_gaussian(&Pose::identity(), [0.0; 3], 1, 0).unwrap();
        set.predict(&OdomDelta { dx: 1.0, dy: 0.0, dtheta: FRAC_PI_2 }, &noise);
        let p = set.particles()[0].pose;
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.theta, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn weigh_normalizes_and_prefers_truth() {
        let pmap = straight_map();
        let z = one_line_measurement();
        // Truth pose: identity; detection lies exactly on the line there.
        let particles = vec![
            Particle { pose: Pose::identity(), weight: 0.25 },
            Particle { pose: Pose::new(0.0, 1.5, 0.4), weight: 0.25 },
            Particle { pose: Pose::new(-3.0, -2.0, 2.0), weight: 0.25 },
            Particle { pose: Pose::new(5.0, 2.0, -1.0), weight: 0.25 },
        ];
        let mut set = ParticleSet::from_particles(particles, 11).unwrap();
        let outcome = set.weigh(&z, &pmap, &params(), ModelVariant::Combined, false);
        assert!(!outcome.degenerate);
        let sum: f64 = set.particles().iter().map(|p| p.weight).sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
        let w0 = set.particles()[0].weight;
        for p in &set.particles()[1..] {
            assert!(w0 > p.weight);
        }
    }

    #[test]
    fn weigh_degenerates_off_drivable_area() {
        let pmap = straight_map();
        let z = one_line_measurement();
        let particles = vec![
            Particle { pose: Pose::new(50.0, 50.0, 0.0), weight: 0.5 },
            Particle { pose: Pose::new(60.0, 50.0, 0.0), weight: 0.5 },
        ];
        let mut set = ParticleSet::from_particles(particles, 1).unwrap();
        let outcome = set.weigh(&z, &pmap, &params(), ModelVariant::Combined, false);
        assert!(outcome.degenerate);
        assert!(set.particles().iter().all(|p| p.weight == 0.5));
    }

    #[test]
    fn parallel_and_serial_weighting_agree_bitwise() {
        let pmap = straight_map();
        let z = one_line_measurement();
        let pose0 = Pose::new(0.0, 0.5, 0.1);
        let mut serial = ParticleSet::init_gaussian(&pose0, [0.5, 0.5, 0.1], 256, 5).unwrap();
        let mut parallel = serial.clone();
        serial.weigh(&z, &pmap, &params(), ModelVariant::Combined, false);
        parallel.weigh(&z, &pmap, &params(), ModelVariant::Combined, true);
        for (a, b) in serial.particles().iter().zip(parallel.particles()) {
            assert_eq!(a.weight.to_bits(), b.weight.to_bits());
        }
        let ea = serial.estimate().pose;
        let eb = parallel.estimate().pose;
        assert_eq!(ea.x.to_bits(), eb.x.to_bits());
        assert_eq!(ea.y.to_bits(), eb.y.to_bits());
        assert_eq!(ea.theta.to_bits(), eb.theta.to_bits());
    }

    #[test]
    fn systematic_indices_hand_trace() {
        // Comb {0.1, 0.35, 0.6, 0.85} against cumulative sums (0.5, 0.75, 1.0).
        let indices = systematic_indices(&[0.5, 0.25, 0.25], 4, 0.1);
        assert_eq!(indices, vec![0, 0, 1, 2]);
    }

    #[test]
    fn resample_uniform_weights_copies_each_once() {
        let particles: Vec<Particle> = (0..8)
            .map(|i| Particle { pose: Pose::new(i as f64, 0.0, 0.0), weight: 1.0 / 8.0 })
            .collect();
        let mut set = ParticleSet::from_particles(particles.clone(), 2).unwrap();
        set.systematic_resample().unwrap();
        for (i, p) in set.particles().iter().enumerate() {
            assert_eq!(p.pose.x, i as f64);
            assert_eq!(p.weight, 1.0 / 8.0);
        }
    }

    #[test]
    fn resample_concentrates_on_unit_weight() {
        let mut particles: Vec<Particle> = (0..5)
            .map(|i| Particle { pose: Pose::new(i as f64, 0.0, 0.0), weight: 0.0 })
            .collect();
        particles[3].weight = 1.0;
        let mut set = ParticleSet::from_particles(particles, 3).unwrap();
        set.systematic_resample().unwrap();
        assert!(set.particles().iter().all(|p| p.pose.x == 3.0));
    }

    #[test]
    fn resample_rejects_unnormalized_weights() {
        let particles = vec![
            Particle { pose: Pose::identity(), weight: 0.6 },
            Particle { pose: Pose::identity(), weight: 0.6 },
        ];
        let mut set = ParticleSet::from_particles(particles, 0).unwrap();
        assert!(matches!(
            set.systematic_resample(),
            Err(FilterError::UnnormalizedWeights(_))
        ));
    }

    #[test]
    fn estimate_examples() {
        let p = Pose::new(1.0, 2.0, 0.5);
        let set = ParticleSet::from_particles(
            vec![Particle { pose: p, weight: 0.5 }, Particle { pose: p, weight: 0.5 }],
            0,
        )
        .unwrap();
        assert_eq!(set.estimate().pose, p);

        // Circular mean across the wrap: +-3 rad average to pi, not 0.
        let set = ParticleSet::from_particles(
            vec![
                Particle { pose: Pose::new(0.0, 0.0, 3.0), weight: 0.5 },
                Particle { pose: Pose::new(0.0, 0.0, -3.0), weight: 0.5 },
            ],
            0,
        )
        .unwrap();
        let est = set.estimate();
        assert!(!est.theta_tie);
        assert_abs_diff_eq!(est.pose.theta.abs(), std::f64::consts::PI, epsilon = 1e-9);

        let set = ParticleSet::from_particles(
            vec![
                Particle { pose: Pose::new(0.0, 0.0, 0.0), weight: 0.75 },
                Particle { pose: Pose::new(4.0, 0.0, 0.0), weight: 0.25 },
            ],
            0,
        )
        .unwrap();
        assert_abs_diff_eq!(set.estimate().pose.x, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn estimate_antipodal_tie_falls_back_to_max_weight() {
        let set = ParticleSet::from_particles(
            vec![
                Particle { pose: Pose::new(0.0, 0.0, 0.0), weight: 0.4 },
                Particle { pose: Pose::new(0.0, 0.0, std::f64::consts::PI), weight: 0.4 },
                Particle { pose: Pose::new(0.0, 0.0, 1.0), weight: 0.2 },
            ],
            0,
        )
        .unwrap();
        // 0.4 at 0 and 0.4 at pi cancel; 0.2 at 1 rad remains, so no tie.
        assert!(!set.estimate().theta_tie);

        let set = ParticleSet::from_particles(
            vec![
                Particle { pose: Pose::new(0.0, 0.0, 0.0), weight: 0.4 },
                Particle { pose: Pose::new(0.0, 0.0, std::f64::consts::PI), weight: 0.6 },
            ],
            0,
        )
        .unwrap();
        // Shift the weights so the resultant is non-tiny: sanity check.
        assert!(!set.estimate().theta_tie);

        let set = ParticleSet::from_particles(
            vec![
                Particle { pose: Pose::new(0.0, 0.0, 0.0), weight: 0.5 },
                Particle { pose: Pose::new(0.0, 0.0, std::f64::consts::PI), weight: 0.5 },
            ],
            0,
        )
        .unwrap();
        let est = set.estimate();
        assert!(est.theta_tie);
        // Fallback picks a max-weight particle's heading.
        assert!(est.pose.theta == 0.0 || est.pose.theta == std::f64::consts::PI);
    }

    #[test]
    fn step_zero_motion_no_detection_keeps_estimate() {
        let pmap = straight_map();
        let mut set =
            ParticleSet::init_gaussian(&Pose::new(0.0, 0.5, 0.0), [0.3, 0.3, 0.05], 128, 21)
                .unwrap();
        let before = set.estimate().pose;
        let outcome = set.step(
            &OdomDelta::zero(),
            &Measurement::empty(),
            &pmap,
            &params(),
            &FilterConfig::default(),
        );
        assert_abs_diff_eq!(outcome.estimate.x, before.x, epsilon = 1e-12);
        assert_abs_diff_eq!(outcome.estimate.y, before.y, epsilon = 1e-12);
        assert_abs_diff_eq!(outcome.estimate.theta, before.theta, epsilon = 1e-12);
        assert!(!outcome.degenerate);

        let t = outcome.timings;
        assert!(t.transform + t.shift + t.angular + t.resample <= t.total);
        assert_eq!(set.len(), 128);
    }
}
