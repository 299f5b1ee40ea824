//! Discrete-event loop tying the plant, scene, detector, tracker and controller
//! together.
//!
//! Event `k` of a stream with rate `r` happens at `k / r` for every `k` with
//! `k / r < duration`. Events are merged by exact integer comparison; at equal
//! timestamps the order is physics, then control, then camera. Control and
//! camera events read the plant state of the latest physics tick.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dynamics::{Plant, QuadState};
use super::imu::imu_sample;
use super::scenario::{Flight, InitialState, Scenario};
use super::scene::Scene;
use super::SimError;
use crate::controller::{attitude_control, mix, CommandTraceRecord, VisualController};
use crate::detection::log::LogEvent;
use crate::detection::{observe, SceneSnapshot, SyntheticDetector, SyntheticDetectorConfig};
use crate::geometry::{CameraModel, CameraPose, PixelPoint, Rotation};
use crate::tracker::{nearest_to_prompt, Tracker, TrackerError, TrackerTraceRecord};

const GYRO_STREAM: u64 = 5 << 56;

/// Ground truth for one camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub t: f64,
    /// In-image target box, absent when the target is out of view, behind the
    /// camera, or occluded past the detector threshold.
    pub target: Option<[f64; 4]>,
    /// Some part of the target projects into the image.
    pub in_image: bool,
    pub occlusion: f64,
    pub position: [f64; 3],
    /// Vehicle attitude as `[w, x, y, z]`.
    pub attitude: [f64; 4],
    pub target_position: [f64; 3],
    pub horizontal_distance: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub physics: u64,
    pub control: u64,
    pub camera: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    /// Gyro samples and detection frames in event order.
    pub detections: Vec<LogEvent>,
    pub tracker: Vec<TrackerTraceRecord>,
    pub commands: Vec<CommandTraceRecord>,
    pub ground_truth: Vec<GroundTruthRecord>,
    pub counts: EventCounts,
    pub locked_at: Option<f64>,
    pub captured_at: Option<f64>,
    /// First tracker error after lock. Tracking stops there and later frames
    /// have no tracker record.
    pub tracker_failure: Option<TrackerFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerFailure {
    pub t: f64,
    pub message: String,
}

/// Number of events `k / rate` strictly before `duration`.
pub fn event_count(duration: f64, rate: u32) -> u64 {
    let x = duration * rate as f64;
    let n = x.round();
    if (x - n).abs() < 1e-9 {
        n as u64
    } else {
        x.ceil() as u64
    }
}

/// Kinematic vehicle state under a scripted flight.
pub fn scripted_state(init: &InitialState, flight: &Flight, t: f64) -> QuadState {
    let Flight::Scripted { velocity, yaw_rate, yaw_start, yaw_ramp, yaw_amplitude, yaw_period } = *flight else {
        return QuadState::at_rest(Vector3::from(init.position), init.rotation());
    };
    let [yaw0, pitch, roll] = init.attitude;
    let phase = TAU * t / yaw_period;
    let (turned, rate) = spin_up(t - yaw_start, yaw_ramp);
    let yaw = yaw0 + yaw_rate * turned + yaw_amplitude * phase.sin();
    let yaw_dot = yaw_rate * rate + yaw_amplitude * TAU / yaw_period * phase.cos();
    let v = Vector3::from(velocity);
    QuadState {
        position: Vector3::from(init.position) + v * t,
        velocity: v,
        rotation: Rotation::from_zyx(yaw, pitch, roll),
        omega: Vector3::new(-pitch.sin(), roll.sin() * pitch.cos(), roll.cos() * pitch.cos()) * yaw_dot,
    }
}

/// Integral and value of a unit rate that ramps linearly from zero over `ramp` seconds, `s` seconds after onset.
fn spin_up(s: f64, ramp: f64) -> (f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0)
    } else if s < ramp {
        (0.5 * s * s / ramp, s / ramp)
    } else {
        (s - 0.5 * ramp, 1.0)
    }
}

fn camera_pose(q: &QuadState, mount: &Rotation) -> CameraPose {
    CameraPose { rotation: q.rotation.compose(&mount.transpose()), position: q.position }
}

fn horizontal(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a.xy() - b.xy()).norm()
}

struct Loop<'a> {
    sc: &'a Scenario,
    cam: CameraModel,
    mount: Rotation,
    scene: Scene,
    plant: Plant,
    detector: SyntheticDetector,
    tracker: Tracker,
    controller: VisualController,
    gyro_rng: ChaCha8Rng,
    out: RunArtifacts,
}

impl Loop<'_> {
    fn vehicle(&self, t: f64) -> QuadState {
        match self.sc.flight {
            Flight::ClosedLoop => self.plant.state,
            scripted => scripted_state(&self.sc.initial, &scripted, t),
        }
    }

    fn control_tick(&mut self, t: f64) -> Result<(), SimError> {
        let q = self.vehicle(t);
        let gyro = imu_sample(&q, &self.mount, self.sc.gyro_noise, &mut self.gyro_rng, t);
        self.out.detections.push(LogEvent::Gyro(gyro));
        if self.tracking() {
            if let Err(e) = self.tracker.propagate(&gyro) {
                self.fail(t, e);
            }
        }

        let max_coast = self.sc.metrics.max_coast_frames;
        let target = self
            .tracker
            .state()
            .filter(|s| self.tracking() && s.coast_frames <= max_coast)
            .map(|s| s.ekf.predicted_box().center())
            .filter(|c| self.steerable(c));
        let dt = 1.0 / self.sc.rates.control as f64;
        let out = self.controller.tick(t, target.as_ref(), &q.rotation, dt).map_err(|e| SimError::Control { t, source: e })?;
        let torque = attitude_control(&q.rotation, &q.omega, &out.command.rotation, &self.sc.controller.attitude, &self.sc.quad.inertia_matrix());
        let motors = mix(out.command.thrust, &torque, &self.sc.quad.mixer);
        if self.sc.flight == Flight::ClosedLoop {
            self.plant.set_command(&motors);
        }
        self.out.commands.push(CommandTraceRecord {
            t,
            tracking: target.is_some(),
            e_w: out.errors.e_w,
            e_h: out.errors.e_h,
            thrust: out.command.thrust,
            yaw_d: out.command.yaw,
            q_d: out.command.rotation.to_quaternion(),
            pitch_accel: out.pitch_accel,
            motors: motors.thrusts,
        });
        self.out.counts.control += 1;
        Ok(())
    }

    fn tracking(&self) -> bool {
        self.out.tracker_failure.is_none()
    }

    fn fail(&mut self, t: f64, e: TrackerError) {
        log::warn!("t = {t:.4}: tracker failed, track abandoned: {e}");
        self.out.tracker_failure = Some(TrackerFailure { t, message: e.to_string() });
    }

    /// Predicted centers further than half an image outside the frame are not
    /// used for steering.
    fn steerable(&self, c: &PixelPoint) -> bool {
        let (w, h) = (self.cam.width(), self.cam.height());
        c.u > -0.5 * w && c.u < 1.5 * w && c.v > -0.5 * h && c.v < 1.5 * h
    }

    fn ground_truth(&self, t: f64, q: &QuadState, snap: &SceneSnapshot, pose: &CameraPose) -> (GroundTruthRecord, Option<PixelPoint>) {
        let target_obj = snap.objects.iter().find(|o| o.id == self.sc.target).expect("target validated");
        let app = observe(snap, pose, &self.cam).into_iter().find(|a| a.id == self.sc.target);
        let visible = app.and_then(|a| a.in_image.filter(|_| a.occlusion < self.sc.detector.occlusion_threshold));
        let record = GroundTruthRecord {
            t,
            target: visible.map(|b| b.as_array()),
            in_image: app.is_some_and(|a| a.in_image.is_some()),
            occlusion: app.map_or(0.0, |a| a.occlusion),
            position: q.position.into(),
            attitude: q.rotation.to_quaternion(),
            target_position: target_obj.extent.center.into(),
            horizontal_distance: horizontal(&q.position, &target_obj.extent.center),
        };
        (record, app.map(|a| a.projected.center()))
    }

    fn camera_tick(&mut self, t: f64) -> Result<bool, SimError> {
        let q = self.vehicle(t);
        let pose = camera_pose(&q, &self.mount);
        let snap = self.scene.snapshot(t);
        let dets = self.detector.detect(&snap, &pose, &self.cam);
        self.out.detections.push(LogEvent::Detections(dets.clone()));
        let (gt, gt_center) = self.ground_truth(t, &q, &snap, &pose);
        let distance = gt.horizontal_distance;
        self.out.ground_truth.push(gt);
        self.out.counts.camera += 1;

        if self.tracker.is_initialized() {
            if self.tracking() {
                let (detector, cam) = (&mut self.detector, &self.cam);
                match self.tracker.step(&dets, |d| detector.extract_target_feature(&snap, &pose, cam, &d.bbox)) {
                    Ok(outcome) => {
                        let state = self.tracker.state().expect("initialized");
                        self.out.tracker.push(TrackerTraceRecord::from_outcome(&outcome, state));
                    }
                    Err(e) => self.fail(t, e),
                }
            }
        } else if t >= self.sc.prompt.time - 1e-12 {
            let prompt = match (self.sc.prompt.point, gt_center) {
                (Some([u, v]), _) => PixelPoint::new(u, v),
                (None, Some(c)) => c,
                (None, None) => self.cam.principal_point(),
            };
            let nearest = nearest_to_prompt(&prompt, &dets).map(|i| dets.detections[i].bbox.center().distance(&prompt));
            let defer = match self.sc.prompt.radius {
                Some(r) => nearest.is_none_or(|d| d > r),
                None => false,
            };
            if defer {
                log::debug!("t = {t:.4}: no detection near the prompt, deferring initialization");
            } else {
                let state = self.tracker.initialize(&prompt, &dets).map_err(|e| SimError::Initialization { t, source: e })?;
                self.out.tracker.push(TrackerTraceRecord::initial(t, state));
                self.out.locked_at = Some(t);
            }
        }

        if let Some(limit) = self.sc.capture_distance {
            if distance < limit {
                self.out.captured_at = Some(t);
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Runs a scenario to completion or capture.
pub fn run(scenario: &Scenario) -> Result<RunArtifacts, SimError> {
    scenario.validate()?;
    let cam = scenario.camera;
    let mount = scenario.mount()?;
    let scene = Scene::new(scenario.objects.clone(), scenario.seed, scenario.detector.descriptor_dim).map_err(SimError::Config)?;
    let init = scenario.initial;
    let start = QuadState {
        velocity: Vector3::from(init.velocity),
        ..QuadState::at_rest(Vector3::from(init.position), init.rotation())
    };
    let mut tracker_cfg = scenario.tracker.clone();
    tracker_cfg.ekf.camera = cam;
    let detector_cfg = SyntheticDetectorConfig { seed: scenario.seed, ..scenario.detector.clone() };
    let mut gyro_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    gyro_rng.set_stream(GYRO_STREAM);

    let mut lp = Loop {
        sc: scenario,
        cam,
        mount,
        scene,
        plant: Plant::hovering(start, scenario.quad),
        detector: SyntheticDetector::new(detector_cfg),
        tracker: Tracker::new(tracker_cfg).map_err(|e| SimError::Config(e.to_string()))?,
        controller: VisualController::new(scenario.controller.clone(), cam).map_err(|e| SimError::Config(e.to_string()))?,
        gyro_rng,
        out: RunArtifacts {
            detections: Vec::new(),
            tracker: Vec::new(),
            commands: Vec::new(),
            ground_truth: Vec::new(),
            counts: EventCounts::default(),
            locked_at: None,
            captured_at: None,
            tracker_failure: None,
        },
    };

    let rates = scenario.rates;
    let (rp, rc, rm) = (rates.physics as u64, rates.control as u64, rates.camera as u64);
    let n_phys = event_count(scenario.duration, rates.physics);
    let n_ctrl = event_count(scenario.duration, rates.control);
    let n_cam = event_count(scenario.duration, rates.camera);
    let dt = 1.0 / rates.physics as f64;
    let (mut kc, mut km) = (0u64, 0u64);

    'outer: for i in 0..n_phys {
        lp.out.counts.physics += 1;
        // Control and camera events in [i / rp, (i + 1) / rp).
        loop {
            let ctrl_due = kc < n_ctrl && kc * rp < (i + 1) * rc;
            let cam_due = km < n_cam && km * rp < (i + 1) * rm;
            let take_ctrl = match (ctrl_due, cam_due) {
                (false, false) => break,
                (true, false) => true,
                (false, true) => false,
                (true, true) => kc * rm <= km * rc,
            };
            if take_ctrl {
                lp.control_tick(kc as f64 / rc as f64)?;
                kc += 1;
            } else {
                let done = lp.camera_tick(km as f64 / rm as f64)?;
                km += 1;
                if done {
                    break 'outer;
                }
            }
        }
        if scenario.flight == Flight::ClosedLoop {
            let t = i as f64 * dt;
            lp.plant.step(dt).map_err(|e| match e {
                SimError::NonFiniteState { .. } => SimError::NonFiniteState { t },
                SimError::NonFiniteCommand => SimError::NonFiniteState { t },
                other => other,
            })?;
        }
    }
    Ok(lp.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_count_matches_rate_times_duration() {
        assert_eq!(event_count(10.0, 100), 1000);
        assert_eq!(event_count(10.0, 60), 600);
        assert_eq!(event_count(0.9, 60), 54);
        assert_eq!(event_count(0.91, 60), 55);
    }

    #[test]
    fn spin_up_is_continuous_and_its_integral_matches_its_rate() {
        let ramp = 0.1;
        assert_eq!(spin_up(-0.5, ramp), (0.0, 0.0));
        let (turned, rate) = spin_up(0.05, ramp);
        assert!((turned - 0.0125).abs() < 1e-15 && (rate - 0.5).abs() < 1e-15);
        let (turned, rate) = spin_up(0.3, ramp);
        assert!((turned - 0.25).abs() < 1e-15 && rate == 1.0);
        let h = 1e-6;
        for s in [0.01, 0.05, 0.099, 0.1, 0.2] {
            let d = (spin_up(s + h, ramp).0 - spin_up(s - h, ramp).0) / (2.0 * h);
            assert!((d - spin_up(s, ramp).1).abs() < 1e-4, "{s}");
        }
        assert_eq!(spin_up(0.2, 0.0), (0.2, 1.0));
    }
}
