//! Cosine projection model and synthetic trajectory generation.
//!
//! A tracked object point at rotation angle `α` lands on the detector at
//! column `x(α) = a·cos(α + φ0)` and keeps a constant row, the rotation
//! axis being parallel to the detector's Y axis. Everything downstream
//! (track building, triplet solving, graph refinement) is exercised
//! against trajectories produced here, where the ground truth is known.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::csvutil::{self, CsvError};
use crate::rng::{self, tag};

/// Detector extent in pixels used when placing synthetic points.
///
/// The real device's geometry is not pinned down anywhere we can cite, so
/// this default is arbitrary; it only scales amplitudes and rows.
pub const DETECTOR_HEIGHT_PX: f64 = 2048.0;

pub const ANGLES_HEADER: &str = "frame,true_angle_rad,commanded_increment_rad";
pub const OBS_HEADER: &str = "frame,point_id,x_px,y_px";

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("amplitude must be non-negative, got {0}")]
    NegativeAmplitude(f64),
    #[error("scene needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid trajectory spec: {0}")]
    InvalidTrajectorySpec(String),
}

impl ProjectionError {
    pub fn code(&self) -> &'static str {
        match self {
            ProjectionError::NegativeAmplitude(_) => "NegativeAmplitude",
            ProjectionError::TooFewPoints(_) => "TooFewPoints",
            ProjectionError::InvalidTrajectorySpec(_) => "InvalidTrajectorySpec",
        }
    }
}

/// Wrap an angle into `[-π, π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let wrapped = (a + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can return exactly 2π for inputs just below -π due to rounding.
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// One tracked object point: amplitude and phase of its cosine trajectory
/// plus its fixed detector row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    amplitude: f64,
    phase: f64,
    row: f64,
}

impl ScenePoint {
    pub fn new(amplitude: f64, phase: f64, row: f64) -> Result<Self, ProjectionError> {
        if !(amplitude >= 0.0) {
            return Err(ProjectionError::NegativeAmplitude(amplitude));
        }
        Ok(Self {
            amplitude,
            phase: normalize_angle(phase),
            row,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Phase in `[-π, π)`.
    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn row(&self) -> f64 {
        self.row
    }
}

/// Detector column of `point` at rotation angle `angle` (radians).
pub fn project(point: &ScenePoint, angle: f64) -> f64 {
    point.amplitude * (angle + point.phase).cos()
}

/// How per-frame angle noise enters the simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// Noise on each commanded increment, accumulating over the run.
    /// This is the regime where fusing relative constraints pays off.
    #[default]
    RandomWalk,
    /// Independent noise on each absolute angle (no accumulation).
    /// Kept for comparison runs.
    AbsolutePerAngle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySpec {
    /// Number of frames N (≥ 3).
    pub frame_count: usize,
    /// Nominal commanded step per frame, radians (> 0).
    pub commanded_step: f64,
    /// Std dev of the realized step around the commanded one, radians.
    pub step_sigma: f64,
    /// Std dev of additive pixel noise on both observation coordinates.
    pub pixel_sigma: f64,
    pub seed: u64,
    pub noise_model: NoiseModel,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), ProjectionError> {
        if self.frame_count < 3 {
            return Err(ProjectionError::InvalidTrajectorySpec(format!(
                "frame_count must be >= 3, got {}",
                self.frame_count
            )));
        }
        if !(self.commanded_step > 0.0) {
            return Err(ProjectionError::InvalidTrajectorySpec(format!(
                "commanded_step must be > 0, got {}",
                self.commanded_step
            )));
        }
        if !(self.step_sigma >= 0.0) {
            return Err(ProjectionError::InvalidTrajectorySpec(format!(
                "step_sigma must be >= 0, got {}",
                self.step_sigma
            )));
        }
        if !(self.pixel_sigma >= 0.0) {
            return Err(ProjectionError::InvalidTrajectorySpec(format!(
                "pixel_sigma must be >= 0, got {}",
                self.pixel_sigma
            )));
        }
        Ok(())
    }
}

/// One observed point in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub point_id: usize,
    pub x: f64,
    pub y: f64,
}

/// A simulated acquisition: the realized (reference) angles, the commanded
/// increments the controller believes in, and per-frame observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRun {
    /// Realized rotation angle per frame; `true_angles[0] == 0`.
    pub true_angles: Vec<f64>,
    /// Commanded increment leading into each frame; length `frame_count - 1`.
    pub commanded_increments: Vec<f64>,
    /// Observations per frame, one inner vec per frame.
    pub observations: Vec<Vec<Observation>>,
}

impl SimulatedRun {
    pub fn frame_count(&self) -> usize {
        self.true_angles.len()
    }

    /// Dead-reckoned trajectory: cumulative sum of commanded increments,
    /// anchored at zero.
    pub fn dead_reckoned(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.true_angles.len());
        let mut acc = 0.0;
        out.push(acc);
        for &u in &self.commanded_increments {
            acc += u;
            out.push(acc);
        }
        out
    }
}

/// Draw a reproducible random scene.
///
/// Amplitudes are uniform in `(0, amplitude_max]`, phases uniform in
/// `[-π, π)`, rows uniform over the detector height. Each point draws
/// from its own seed-derived stream, so the scene does not depend on
/// construction order.
pub fn make_scene(
    point_count: usize,
    amplitude_max: f64,
    seed: u64,
) -> Result<Vec<ScenePoint>, ProjectionError> {
    if point_count < 2 {
        return Err(ProjectionError::TooFewPoints(point_count));
    }
    let mut scene = Vec::with_capacity(point_count);
    for i in 0..point_count {
        let mut rng = rng::stream(seed, &[tag::SCENE, i as u64]);
        let u_amp: f64 = rng.random();
        let u_phase: f64 = rng.random();
        let u_row: f64 = rng.random();
        let amplitude = amplitude_max * (1.0 - u_amp);
        let phase = PI * (2.0 * u_phase - 1.0);
        let row = u_row * DETECTOR_HEIGHT_PX;
        scene.push(ScenePoint::new(amplitude, phase, row)?);
    }
    Ok(scene)
}

fn normal_draw(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("sigma checked non-negative").sample(rng)
    } else {
        0.0
    }
}

/// Simulate a run: realized angles plus noisy observations of `scene`.
///
/// Under [`NoiseModel::RandomWalk`] each realized increment is
/// `commanded_step + N(0, step_sigma²)` and the angles are their cumulative
/// sum; under [`NoiseModel::AbsolutePerAngle`] each angle past the first
/// gets independent noise. Frame 0 is the reference and stays exactly 0.
/// Every draw comes from a per-(frame, point) stream, so two runs with the
/// same seed are identical no matter how the loops are scheduled.
pub fn simulate_trajectory(
    spec: &TrajectorySpec,
    scene: &[ScenePoint],
) -> Result<SimulatedRun, ProjectionError> {
    spec.validate()?;
    let n = spec.frame_count;
    let commanded_increments = vec![spec.commanded_step; n - 1];

    let mut true_angles = Vec::with_capacity(n);
    true_angles.push(0.0);
    match spec.noise_model {
        NoiseModel::RandomWalk => {
            let mut acc = 0.0;
            for i in 0..n - 1 {
                let mut r = rng::stream(spec.seed, &[tag::STEP, i as u64]);
                acc += spec.commanded_step + normal_draw(&mut r, spec.step_sigma);
                true_angles.push(acc);
            }
        }
        NoiseModel::AbsolutePerAngle => {
            for i in 1..n {
                let mut r = rng::stream(spec.seed, &[tag::ABS_ANGLE, i as u64]);
                true_angles
                    .push(i as f64 * spec.commanded_step + normal_draw(&mut r, spec.step_sigma));
            }
        }
    }

    let mut observations = Vec::with_capacity(n);
    for (frame, &angle) in true_angles.iter().enumerate() {
        let mut per_frame = Vec::with_capacity(scene.len());
        for (point_id, point) in scene.iter().enumerate() {
            let mut r = rng::stream(spec.seed, &[tag::OBSERVATION, frame as u64, point_id as u64]);
            let x = project(point, angle) + normal_draw(&mut r, spec.pixel_sigma);
            let y = point.row + normal_draw(&mut r, spec.pixel_sigma);
            per_frame.push(Observation { point_id, x, y });
        }
        observations.push(per_frame);
    }

    Ok(SimulatedRun {
        true_angles,
        commanded_increments,
        observations,
    })
}

/// Serialize the angle track. The frame-0 row carries a zero increment
/// since no step leads into the anchor frame.
pub fn angles_to_csv(run: &SimulatedRun) -> String {
    let mut out = String::from(ANGLES_HEADER);
    out.push('\n');
    for (frame, &theta) in run.true_angles.iter().enumerate() {
        let u = if frame == 0 {
            0.0
        } else {
            run.commanded_increments[frame - 1]
        };
        out.push_str(&format!(
            "{frame},{},{}\n",
            csvutil::fmt_f64(theta),
            csvutil::fmt_f64(u)
        ));
    }
    out
}

/// Parse an angle track back into `(true_angles, commanded_increments)`.
pub fn angles_from_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>), CsvError> {
    let mut true_angles = Vec::new();
    let mut increments = Vec::new();
    for (line, fields) in csvutil::rows(text, ANGLES_HEADER)? {
        csvutil::expect_fields(&fields, 3, line)?;
        let frame = csvutil::parse_usize(fields[0], line, "frame")?;
        if frame != true_angles.len() {
            return Err(CsvError::Row {
                line,
                message: format!("expected frame {}, found {frame}", true_angles.len()),
            });
        }
        true_angles.push(csvutil::parse_f64(fields[1], line, "true_angle_rad")?);
        let u = csvutil::parse_f64(fields[2], line, "commanded_increment_rad")?;
        if frame > 0 {
            increments.push(u);
        }
    }
    Ok((true_angles, increments))
}

pub fn obs_to_csv(run: &SimulatedRun) -> String {
    let mut out = String::from(OBS_HEADER);
    out.push('\n');
    for (frame, per_frame) in run.observations.iter().enumerate() {
        for obs in per_frame {
            out.push_str(&format!(
                "{frame},{},{},{}\n",
                obs.point_id,
                csvutil::fmt_f64(obs.x),
                csvutil::fmt_f64(obs.y)
            ));
        }
    }
    out
}

pub fn obs_from_csv(text: &str) -> Result<BTreeMap<usize, Vec<Observation>>, CsvError> {
    let mut by_frame: BTreeMap<usize, Vec<Observation>> = BTreeMap::new();
    for (line, fields) in csvutil::rows(text, OBS_HEADER)? {
        csvutil::expect_fields(&fields, 4, line)?;
        let frame = csvutil::parse_usize(fields[0], line, "frame")?;
        let point_id = csvutil::parse_usize(fields[1], line, "point_id")?;
        let x = csvutil::parse_f64(fields[2], line, "x_px")?;
        let y = csvutil::parse_f64(fields[3], line, "y_px")?;
        by_frame.entry(frame).or_default().push(Observation { point_id, x, y });
    }
    Ok(by_frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec(
        frame_count: usize,
        step: f64,
        step_sigma: f64,
        pixel_sigma: f64,
        seed: u64,
    ) -> TrajectorySpec {
        TrajectorySpec {
            frame_count,
            commanded_step: step,
            step_sigma,
            pixel_sigma,
            seed,
            noise_model: NoiseModel::RandomWalk,
        }
    }

    #[test]
    fn project_unit_cases() {
        let p = ScenePoint::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(project(&p, 0.0), 1.0);
        let p = ScenePoint::new(2.0, PI / 2.0, 0.0).unwrap();
        assert_abs_diff_eq!(project(&p, 0.0), 0.0, epsilon = 1e-15);
        let p = ScenePoint::new(1.5, 0.3, 0.0).unwrap();
        assert_abs_diff_eq!(project(&p, 0.7), 1.5 * 1.0f64.cos(), epsilon = 1e-15);
    }

    #[test]
    fn negative_amplitude_rejected() {
        assert!(matches!(
            ScenePoint::new(-1.0, 0.0, 0.0),
            Err(ProjectionError::NegativeAmplitude(_))
        ));
    }

    #[test]
    fn make_scene_contract() {
        let scene = make_scene(2, 100.0, 7).unwrap();
        assert_eq!(scene.len(), 2);
        for p in &scene {
            assert!(p.amplitude() > 0.0 && p.amplitude() <= 100.0);
            assert!(p.phase() >= -PI && p.phase() < PI);
        }
        assert!(matches!(
            make_scene(0, 100.0, 7),
            Err(ProjectionError::TooFewPoints(0))
        ));
        assert!(matches!(
            make_scene(1, 100.0, 7),
            Err(ProjectionError::TooFewPoints(1))
        ));
        assert_eq!(make_scene(2, 100.0, 7).unwrap(), scene);
    }

    #[test]
    fn noise_free_trajectory_is_exact_grid() {
        let scene = make_scene(3, 500.0, 1).unwrap();
        let run = simulate_trajectory(&spec(10, 0.1, 0.0, 0.0, 9), &scene).unwrap();
        for (i, &theta) in run.true_angles.iter().enumerate() {
            assert_abs_diff_eq!(theta, i as f64 * 0.1, epsilon = 1e-15);
        }
        assert_eq!(run.commanded_increments.len(), 9);
        // Noise-free observations match project() exactly.
        for (frame, per_frame) in run.observations.iter().enumerate() {
            for obs in per_frame {
                let p = &scene[obs.point_id];
                assert_eq!(obs.x, project(p, run.true_angles[frame]));
                assert_eq!(obs.y, p.row());
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let scene = make_scene(5, 500.0, 2).unwrap();
        let s = spec(20, 0.05, 0.01, 0.5, 1234);
        let a = simulate_trajectory(&s, &scene).unwrap();
        let b = simulate_trajectory(&s, &scene).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_walk_error_grows_with_frame_index() {
        // Dead-reckoned error variance at frame i is i·σ² in expectation;
        // check the late-run mean square exceeds the early-run one over
        // many seeds.
        let deg = PI / 180.0;
        let (mut early, mut late) = (0.0, 0.0);
        let trials = 60;
        for seed in 0..trials {
            let run = simulate_trajectory(&spec(360, deg, 0.05 * deg, 0.0, seed), &[]).unwrap();
            let dead = run.dead_reckoned();
            let err = |i: usize| (run.true_angles[i] - dead[i]).powi(2);
            early += (1..60).map(err).sum::<f64>() / 59.0;
            late += (300..360).map(err).sum::<f64>() / 60.0;
        }
        assert!(
            late > 2.0 * early,
            "late mean-square {late:.3e} should dwarf early {early:.3e}"
        );
    }

    #[test]
    fn invalid_specs_rejected() {
        let scene = make_scene(2, 10.0, 0).unwrap();
        assert!(simulate_trajectory(&spec(2, 0.1, 0.0, 0.0, 0), &scene).is_err());
        assert!(simulate_trajectory(&spec(5, 0.0, 0.0, 0.0, 0), &scene).is_err());
        assert!(simulate_trajectory(&spec(5, 0.1, -1.0, 0.0, 0), &scene).is_err());
        assert!(simulate_trajectory(&spec(5, 0.1, 0.0, -1.0, 0), &scene).is_err());
    }

    #[test]
    fn absolute_noise_model_does_not_accumulate() {
        let mut s = spec(360, 0.1, 0.01, 0.0, 5);
        s.noise_model = NoiseModel::AbsolutePerAngle;
        let run = simulate_trajectory(&s, &[]).unwrap();
        let dead = run.dead_reckoned();
        for (i, (&t, &d)) in run.true_angles.iter().zip(&dead).enumerate() {
            assert!(
                (t - d).abs() < 0.1,
                "frame {i}: absolute-model deviation should stay ~σ"
            );
        }
    }

    #[test]
    fn csv_round_trip() {
        let scene = make_scene(4, 300.0, 3).unwrap();
        let run = simulate_trajectory(&spec(8, 0.2, 0.01, 0.3, 77), &scene).unwrap();
        let (angles, incs) = angles_from_csv(&angles_to_csv(&run)).unwrap();
        assert_eq!(angles, run.true_angles);
        assert_eq!(incs, run.commanded_increments);
        let by_frame = obs_from_csv(&obs_to_csv(&run)).unwrap();
        for (frame, obs) in run.observations.iter().enumerate() {
            assert_eq!(&by_frame[&frame], obs);
        }
    }

    proptest! {
        #[test]
        fn projection_is_periodic_and_bounded(
            amplitude in 0.0..2000.0f64,
            phase in -10.0..10.0f64,
            angle in -20.0..20.0f64,
        ) {
            let p = ScenePoint::new(amplitude, phase, 0.0).unwrap();
            let x = project(&p, angle);
            prop_assert!(x.abs() <= amplitude + 1e-12);
            prop_assert!((x - project(&p, angle + 2.0 * PI)).abs() < 1e-12);
        }

        #[test]
        fn normalize_angle_lands_in_range(a in -1e4..1e4f64) {
            let w = normalize_angle(a);
            prop_assert!((-PI..PI).contains(&w));
            // Same direction modulo 2π.
            prop_assert!(((a - w) / (2.0 * PI)).round() * 2.0 * PI - (a - w) < 1e-9);
        }
    }
}
