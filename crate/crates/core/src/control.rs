//! Task-space admittance control, box constraints with Euler integration,
//! the fixed return policy, and the two baseline insertion strategies.
//!
//! The configuration `q` is a 6-vector: base-frame position followed by the
//! rotation vector of the tool orientation relative to the tool-down
//! reference orientation.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ControlError, SimError};
use crate::simenv::{check_success, SceneConfig, SimState, Wrench};
use crate::transforms::{tool_down, FrameTag, Pose};

pub type Vector6 = [f64; 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintBox {
    pub q_min: Vector6,
    pub q_max: Vector6,
    pub qdot_min: Vector6,
    pub qdot_max: Vector6,
    /// Integration step, seconds.
    pub delta: f64,
}

impl Default for ConstraintBox {
    fn default() -> Self {
        Self {
            q_min: [0.2, -0.4, -0.03, -0.6, -0.6, -0.6],
            q_max: [0.8, 0.4, 0.6, 0.6, 0.6, 0.6],
            qdot_min: [-0.05, -0.05, -0.05, -0.5, -0.5, -0.5],
            qdot_max: [0.05, 0.05, 0.05, 0.5, 0.5, 0.5],
            delta: 0.01,
        }
    }
}

impl ConstraintBox {
    pub fn validate(&self) -> Result<(), String> {
        for i in 0..6 {
            if !(self.q_min[i] < self.q_max[i]) {
                return Err(format!("constraint box q_min[{i}] < q_max[{i}]"));
            }
            if !(self.qdot_min[i] < self.qdot_max[i]) {
                return Err(format!("constraint box qdot_min[{i}] < qdot_max[{i}]"));
            }
        }
        if !(self.delta > 0.0) {
            return Err("constraint box delta > 0".into());
        }
        Ok(())
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }

    pub fn contains(&self, q: &Vector6) -> bool {
        (0..6).all(|i| q[i] >= self.q_min[i] && q[i] <= self.q_max[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmittanceGains {
    /// (m/s)/N for forces, (rad/s)/(N·m) for torques.
    pub gain: Vector6,
}

impl Default for AdmittanceGains {
    fn default() -> Self {
        // position mode: no rotational compliance
        Self {
            gain: [0.002, 0.002, 0.002, 0.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralParams {
    /// Radial growth per revolution, m.
    pub pitch: f64,
    pub angular_rate: f64,
    pub push_force: f64,
    pub max_radius: f64,
}

impl Default for SpiralParams {
    fn default() -> Self {
        Self {
            pitch: 0.0005,
            angular_rate: 4.0 * std::f64::consts::PI,
            push_force: 10.0,
            max_radius: 0.006,
        }
    }
}

/// Everything the plant-side controllers need, shared by the RL loop and the baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub gains: AdmittanceGains,
    #[serde(rename = "box")]
    pub constraint_box: ConstraintBox,
    pub spiral: SpiralParams,
    /// Largest position increment of the fixed return policy per decision, m.
    pub fixed_policy_max_step: f64,
    /// Straight-descent speed used by pure replay, m/s.
    pub replay_descent_speed: f64,
    /// Pure replay halts once any sensed force component exceeds this, N.
    pub protective_stop_force: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            gains: AdmittanceGains::default(),
            constraint_box: ConstraintBox::default(),
            spiral: SpiralParams::default(),
            fixed_policy_max_step: 0.002,
            replay_descent_speed: 0.02,
            protective_stop_force: 15.0,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.constraint_box.validate()?;
        if self.gains.gain.iter().any(|g| !(*g >= 0.0)) {
            return Err("admittance gains >= 0".into());
        }
        if !(self.spiral.pitch > 0.0 && self.spiral.max_radius > 0.0) {
            return Err("spiral pitch > 0 and max_radius > 0".into());
        }
        if !(self.fixed_policy_max_step > 0.0) {
            return Err("fixed_policy_max_step > 0".into());
        }
        if !(self.replay_descent_speed > 0.0 && self.protective_stop_force > 0.0) {
            return Err("replay_descent_speed > 0 and protective_stop_force > 0".into());
        }
        Ok(())
    }
}

/// Tool-frame twist proportional to the wrench error.
pub fn admittance_step(
    f_desired: &Wrench,
    f_measured: &Wrench,
    gains: &AdmittanceGains,
) -> Result<Vector6, ControlError> {
    for w in [f_desired, f_measured] {
        if w.frame != FrameTag::E {
            return Err(ControlError::FrameMismatch {
                expected: FrameTag::E,
                got: w.frame,
            });
        }
    }
    let d = f_desired.to_array();
    let m = f_measured.to_array();
    Ok(std::array::from_fn(|i| gains.gain[i] * (d[i] - m[i])))
}

/// Clamps the rate into the velocity box, takes one Euler step of length
/// `delta`, then clamps the result into the position box.
pub fn clamp_and_integrate(q: &Vector6, qdot: &Vector6, cbox: &ConstraintBox) -> Vector6 {
    std::array::from_fn(|i| {
        let rate = qdot[i].clamp(cbox.qdot_min[i], cbox.qdot_max[i]);
        (q[i] + cbox.delta * rate).clamp(cbox.q_min[i], cbox.q_max[i])
    })
}

/// Position increment of the fixed policy: straight towards `target`,
/// at most `max_step` long.
pub fn fixed_policy_step(cp: &Pose, target: &Pose, max_step: f64) -> Vector3<f64> {
    let d = target.position() - cp.position();
    let dist = d.norm();
    if dist <= max_step {
        d
    } else {
        d * (max_step / dist)
    }
}

/// Archimedean spiral in the plane, radius capped at `max_radius`.
pub fn spiral_offset(params: &SpiralParams, t: f64) -> (f64, f64) {
    let theta = params.angular_rate * t.max(0.0);
    let radius = (params.pitch * theta / std::f64::consts::TAU).min(params.max_radius);
    (radius * theta.cos(), radius * theta.sin())
}

pub fn pose_to_q(pose: &Pose) -> Vector6 {
    let rel = tool_down().inverse() * pose.orientation();
    let r = rel.scaled_axis();
    let p = pose.position();
    [p.x, p.y, p.z, r.x, r.y, r.z]
}

pub fn q_to_pose(q: &Vector6) -> Pose {
    let rel = UnitQuaternion::from_scaled_axis(Vector3::new(q[3], q[4], q[5]));
    Pose::from_parts(Vector3::new(q[0], q[1], q[2]), tool_down() * rel)
}

/// Converts a base-frame twist (linear, angular) into a configuration rate.
/// First-order in the rotation vector.
pub fn base_twist_to_qdot(linear: &Vector3<f64>, angular: &Vector3<f64>) -> Vector6 {
    let w = tool_down().inverse() * angular;
    [linear.x, linear.y, linear.z, w.x, w.y, w.z]
}

/// Rotates a tool-frame twist into the base frame.
pub fn tool_twist_to_base(twist: &Vector6, tool: &Pose) -> (Vector3<f64>, Vector3<f64>) {
    let r = tool.orientation();
    (
        r * Vector3::new(twist[0], twist[1], twist[2]),
        r * Vector3::new(twist[3], twist[4], twist[5]),
    )
}

/// What the plant executes for one decision period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlantCommand {
    /// Track a desired tool-frame wrench through the admittance law.
    Force(Wrench),
    /// Move the end effector to a pose under the velocity box.
    Position(Pose),
}

impl PlantCommand {
    pub fn is_force(&self) -> bool {
        matches!(self, PlantCommand::Force(_))
    }
}

/// Result of running the plant for a number of physics steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantRun {
    pub steps: usize,
    pub success: bool,
}

/// Runs `cmd` for up to `steps` physics steps, stopping early on insertion success.
pub fn run_command(
    sim: &mut SimState,
    scene: &SceneConfig,
    control: &ControlConfig,
    cmd: &PlantCommand,
    steps: usize,
) -> Result<PlantRun, SimError> {
    let cbox = control.constraint_box.with_delta(scene.physics_dt);
    for k in 0..steps {
        let q = pose_to_q(&sim.ee_command_pose);
        let qdot = match cmd {
            PlantCommand::Force(desired) => {
                let measured = sim.sensor_read(scene);
                let twist = admittance_step(desired, &measured, &control.gains)
                    .expect("plant wrenches are tool-frame");
                let (v, w) = tool_twist_to_base(&twist, &sim.ee_command_pose);
                base_twist_to_qdot(&v, &w)
            }
            PlantCommand::Position(target) => {
                let qt = pose_to_q(target);
                std::array::from_fn(|i| (qt[i] - q[i]) / scene.physics_dt)
            }
        };
        let next = q_to_pose(&clamp_and_integrate(&q, &qdot, &cbox));
        sim.step(scene, &next, scene.physics_dt)?;
        if check_success(sim, scene) {
            return Ok(PlantRun {
                steps: k + 1,
                success: true,
            });
        }
    }
    Ok(PlantRun {
        steps,
        success: false,
    })
}

/// Spiral search around `center`: the lateral position follows the spiral
/// while the axial direction is force-controlled at the push force.
/// Stops on insertion success, when the protective stop trips, or after
/// `steps` physics steps.
pub fn run_spiral_search(
    sim: &mut SimState,
    scene: &SceneConfig,
    control: &ControlConfig,
    center: &Pose,
    steps: usize,
) -> Result<PlantRun, SimError> {
    let cbox = control.constraint_box.with_delta(scene.physics_dt);
    let desired = Wrench::new(
        Vector3::new(0.0, 0.0, control.spiral.push_force),
        Vector3::zeros(),
        FrameTag::E,
    );
    let hole_rot = scene.hole_pose.orientation();
    for k in 0..steps {
        if sim.filtered_wrench.max_abs_force() > control.protective_stop_force {
            break;
        }
        let t = (k + 1) as f64 * scene.physics_dt;
        let (sx, sy) = spiral_offset(&control.spiral, t);
        let lateral_target = center.position() + hole_rot * Vector3::new(sx, sy, 0.0);
        let q = pose_to_q(&sim.ee_command_pose);
        let measured = sim.sensor_read(scene);
        let twist = admittance_step(&desired, &measured, &control.gains)
            .expect("plant wrenches are tool-frame");
        let (v, _) = tool_twist_to_base(&twist, &sim.ee_command_pose);
        // lateral rate chases the spiral, axial rate comes from admittance
        let axis = hole_rot * Vector3::z();
        let current = Vector3::new(q[0], q[1], q[2]);
        let lateral_err = lateral_target - current;
        let lateral_err = lateral_err - axis * lateral_err.dot(&axis);
        let rate = lateral_err / scene.physics_dt + axis * v.dot(&axis);
        let qdot = [rate.x, rate.y, rate.z, 0.0, 0.0, 0.0];
        let next = q_to_pose(&clamp_and_integrate(&q, &qdot, &cbox));
        sim.step(scene, &next, scene.physics_dt)?;
        if check_success(sim, scene) {
            return Ok(PlantRun {
                steps: k + 1,
                success: true,
            });
        }
    }
    Ok(PlantRun {
        steps,
        success: false,
    })
}

/// Pure position replay: descend straight down from `target` at the replay
/// speed, halting when the protective stop trips.
pub fn run_replay_descent(
    sim: &mut SimState,
    scene: &SceneConfig,
    control: &ControlConfig,
    target: &Pose,
    steps: usize,
) -> Result<PlantRun, SimError> {
    let cbox = control.constraint_box.with_delta(scene.physics_dt);
    let axis = scene.hole_pose.orientation() * Vector3::z();
    let goal = target.translated(&(-axis * (scene.success_depth + 0.002)));
    for k in 0..steps {
        if sim.filtered_wrench.max_abs_force() > control.protective_stop_force {
            break;
        }
        let q = pose_to_q(&sim.ee_command_pose);
        let d = goal.position() - sim.ee_command_pose.position();
        let speed = control.replay_descent_speed;
        let rate = if d.norm() > speed * scene.physics_dt {
            d.normalize() * speed
        } else {
            d / scene.physics_dt
        };
        let next = q_to_pose(&clamp_and_integrate(&q, &[rate.x, rate.y, rate.z, 0.0, 0.0, 0.0], &cbox));
        sim.step(scene, &next, scene.physics_dt)?;
        if check_success(sim, scene) {
            return Ok(PlantRun {
                steps: k + 1,
                success: true,
            });
        }
    }
    Ok(PlantRun {
        steps,
        success: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::translation_distance;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn wide_box(delta: f64) -> ConstraintBox {
        ConstraintBox {
            q_min: [-10.0; 6],
            q_max: [10.0; 6],
            qdot_min: [-10.0; 6],
            qdot_max: [10.0; 6],
            delta,
        }
    }

    #[test]
    fn equal_wrenches_give_zero_twist() {
        let w = Wrench::from_array([1.0, -2.0, 3.0, 0.1, 0.2, 0.3], FrameTag::E);
        let t = admittance_step(&w, &w, &AdmittanceGains::default()).unwrap();
        assert_eq!(t, [0.0; 6]);
    }

    #[test]
    fn ten_newtons_at_default_gain() {
        let d = Wrench::from_array([10.0, 0.0, 0.0, 0.0, 0.0, 0.0], FrameTag::E);
        let m = Wrench::zero(FrameTag::E);
        let t = admittance_step(&d, &m, &AdmittanceGains::default()).unwrap();
        assert_relative_eq!(t[0], 0.02, epsilon = 1e-15);
    }

    #[test]
    fn frame_mismatch_is_rejected() {
        let d = Wrench::zero(FrameTag::E);
        let m = Wrench::zero(FrameTag::B);
        assert_eq!(
            admittance_step(&d, &m, &AdmittanceGains::default()),
            Err(ControlError::FrameMismatch {
                expected: FrameTag::E,
                got: FrameTag::B
            })
        );
    }

    #[test]
    fn euler_step_applied_literally() {
        let q = clamp_and_integrate(&[0.0; 6], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &wide_box(0.01));
        assert_relative_eq!(q[0], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn rate_and_position_clamps() {
        let b = ConstraintBox::default();
        let q0 = [0.5, 0.0, 0.1, 0.0, 0.0, 0.0];
        let q = clamp_and_integrate(&q0, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &b);
        assert_relative_eq!(q[0], 0.5 + b.delta * b.qdot_max[0], epsilon = 1e-15);
        let at_max = [b.q_max[0], 0.0, 0.1, 0.0, 0.0, 0.0];
        let q = clamp_and_integrate(&at_max, &[0.04, 0.0, 0.0, 0.0, 0.0, 0.0], &b);
        assert_eq!(q[0], b.q_max[0]);
    }

    #[test]
    fn fixed_policy_cases() {
        let cp = Pose::from_translation(0.0, 0.0, 0.0);
        assert_eq!(fixed_policy_step(&cp, &cp, 0.002), Vector3::zeros());
        let far = Pose::from_translation(0.006, 0.008, 0.0);
        let inc = fixed_policy_step(&cp, &far, 0.002);
        // 2 mm along the (0.6, 0.8) direction
        assert_relative_eq!(inc, Vector3::new(0.0012, 0.0016, 0.0), epsilon = 1e-15);
        let near = Pose::from_translation(0.001, 0.0, 0.0);
        assert_eq!(fixed_policy_step(&cp, &near, 0.002), Vector3::new(0.001, 0.0, 0.0));
    }

    #[test]
    fn spiral_cases() {
        let p = SpiralParams {
            pitch: 0.001,
            angular_rate: 1.0,
            push_force: 10.0,
            max_radius: 0.006,
        };
        assert_eq!(spiral_offset(&p, 0.0), (0.0, 0.0));
        let (x, y) = spiral_offset(&p, std::f64::consts::TAU);
        assert_relative_eq!((x * x + y * y).sqrt(), 0.001, epsilon = 1e-15);
        let (x, y) = spiral_offset(&p, 1e4);
        assert_relative_eq!((x * x + y * y).sqrt(), 0.006, epsilon = 1e-15);
    }

    #[test]
    fn configuration_round_trip() {
        let pose = Pose::from_parts(
            Vector3::new(0.5, 0.1, 0.2),
            tool_down() * UnitQuaternion::from_euler_angles(0.05, -0.02, 0.3),
        );
        let back = q_to_pose(&pose_to_q(&pose));
        assert!(translation_distance(&back, &pose) < 1e-15);
        assert!(back.orientation().angle_to(pose.orientation()) < 1e-12);
        assert_eq!(pose_to_q(&q_to_pose(&[0.5, 0.0, 0.1, 0.0, 0.0, 0.0])), [0.5, 0.0, 0.1, 0.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn integration_stays_in_box(q in prop::array::uniform6(-2.0f64..2.0), qdot in prop::array::uniform6(-50.0f64..50.0)) {
            let b = ConstraintBox::default();
            prop_assert!(b.contains(&clamp_and_integrate(&q, &qdot, &b)));
        }

        #[test]
        fn admittance_is_linear(d in prop::array::uniform6(-20.0f64..20.0), m in prop::array::uniform6(-20.0f64..20.0)) {
            let g = AdmittanceGains { gain: [0.002, 0.003, 0.001, 0.01, 0.02, 0.0] };
            let t1 = admittance_step(&Wrench::from_array(d, FrameTag::E), &Wrench::from_array(m, FrameTag::E), &g).unwrap();
            let d2: Vector6 = std::array::from_fn(|i| 2.0 * d[i]);
            let m2: Vector6 = std::array::from_fn(|i| 2.0 * m[i]);
            let t2 = admittance_step(&Wrench::from_array(d2, FrameTag::E), &Wrench::from_array(m2, FrameTag::E), &g).unwrap();
            for i in 0..6 {
                prop_assert!((t2[i] - 2.0 * t1[i]).abs() < 1e-12);
                prop_assert!((t1[i] - g.gain[i] * (d[i] - m[i])).abs() < 1e-15);
            }
        }

        #[test]
        fn fixed_policy_never_overshoots(a in prop::array::uniform3(-0.05f64..0.05), b in prop::array::uniform3(-0.05f64..0.05), step in 1e-4f64..0.01) {
            let target = Pose::from_translation(b[0], b[1], b[2]);
            let mut cp = Pose::from_translation(a[0], a[1], a[2]);
            let mut last = translation_distance(&cp, &target);
            for _ in 0..20 {
                cp = cp.translated(&fixed_policy_step(&cp, &target, step));
                let d = translation_distance(&cp, &target);
                prop_assert!(d <= last + 1e-15);
                last = d;
            }
        }

        #[test]
        fn spiral_radius_non_decreasing(t in 0.0f64..10.0, dt in 0.0f64..1.0) {
            let p = SpiralParams::default();
            let r = |t| { let (x, y) = spiral_offset(&p, t); (x * x + y * y).sqrt() };
            prop_assert!(r(t + dt) >= r(t) - 1e-15);
        }
    }
}
