//! Quasi-static contact simulation of a cylindrical peg held by a compliant
//! suction cup above a chamfered hole.
//!
//! The hole frame has its z axis along the hole axis pointing out of the
//! material, with the top surface at z = 0. The peg pose is the centre of the
//! peg's bottom face; its orientation is frozen to the commanded tool
//! orientation. Contact is resolved at the deepest point of the peg rim
//! against the locally convex cross-section formed by the top surface, the
//! chamfer and the bore wall.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::transforms::{tool_down, FrameTag, Pose};

/// Contact normal forces are clipped here.
pub const FORCE_SATURATION: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub hole_pose: Pose,
    pub hole_radius: f64,
    pub peg_radius: f64,
    pub chamfer_width: f64,
    pub chamfer_angle: f64,
    pub hole_depth: f64,
    pub success_depth: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction_mu: f64,
    pub cup_lateral_stiffness: f64,
    pub cup_axial_stiffness: f64,
    /// Viscous coefficient of the overdamped peg, N·s/m.
    pub peg_damping: f64,
    pub sensor_noise_sigma: f64,
    pub filter_cutoff_hz: f64,
    pub physics_dt: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            hole_pose: Pose::from_translation(0.5, 0.0, 0.0),
            hole_radius: 0.0155,
            peg_radius: 0.015,
            chamfer_width: 0.001,
            chamfer_angle: std::f64::consts::FRAC_PI_4,
            hole_depth: 0.02,
            success_depth: 0.01,
            contact_stiffness: 2e4,
            contact_damping: 20.0,
            friction_mu: 0.3,
            cup_lateral_stiffness: 5000.0,
            cup_axial_stiffness: 10000.0,
            peg_damping: 100.0,
            sensor_noise_sigma: 0.05,
            filter_cutoff_hz: 9.37,
            physics_dt: 1e-3,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidScene(msg.to_string()));
        if !(self.hole_radius > self.peg_radius && self.peg_radius > 0.0) {
            return bad("positive clearance (hole_radius > peg_radius > 0)");
        }
        if !(self.success_depth > 0.0 && self.success_depth <= self.hole_depth) {
            return bad("success_depth <= hole_depth");
        }
        if !(self.contact_stiffness > 0.0
            && self.cup_lateral_stiffness > 0.0
            && self.cup_axial_stiffness > 0.0
            && self.peg_damping > 0.0)
        {
            return bad("all stiffnesses and damping > 0");
        }
        if !(self.filter_cutoff_hz > 0.0) {
            return bad("filter_cutoff_hz > 0");
        }
        if !(self.physics_dt > 0.0) {
            return bad("physics_dt > 0");
        }
        if !(self.chamfer_width >= 0.0
            && self.chamfer_angle > 0.0
            && self.chamfer_angle < std::f64::consts::FRAC_PI_2)
        {
            return bad("chamfer_width >= 0 and 0 < chamfer_angle < pi/2");
        }
        if !(self.friction_mu >= 0.0 && self.contact_damping >= 0.0 && self.sensor_noise_sigma >= 0.0)
        {
            return bad("friction, damping and noise are non-negative");
        }
        Ok(())
    }

    pub fn clearance(&self) -> f64 {
        self.hole_radius - self.peg_radius
    }

    /// Filter time constant 1 / (2π fc), seconds.
    pub fn filter_time_constant(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.filter_cutoff_hz)
    }

    /// Peg pose centred over the hole with its bottom `height` above the surface.
    pub fn pose_above_hole(&self, height: f64) -> Pose {
        let p = self.hole_pose.transform_point(&Vector3::new(0.0, 0.0, height));
        Pose::from_parts(p, self.hole_pose.orientation() * tool_down())
    }
}

/// Force/torque pair tagged with the frame it is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub frame: FrameTag,
}

impl Wrench {
    pub fn zero(frame: FrameTag) -> Self {
        Self {
            force: Vector3::zeros(),
            torque: Vector3::zeros(),
            frame,
        }
    }

    pub fn new(force: Vector3<f64>, torque: Vector3<f64>, frame: FrameTag) -> Self {
        Self {
            force,
            torque,
            frame,
        }
    }

    pub fn from_array(a: [f64; 6], frame: FrameTag) -> Self {
        Self::new(
            Vector3::new(a[0], a[1], a[2]),
            Vector3::new(a[3], a[4], a[5]),
            frame,
        )
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Largest absolute force component.
    pub fn max_abs_force(&self) -> f64 {
        self.force.amax()
    }
}

/// Resolved contact between the peg rim and the hole geometry, base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactGeometry {
    pub kind: ContactKind,
    pub penetration: f64,
    /// Unit normal pointing out of the hole material, towards the peg.
    pub normal: Vector3<f64>,
    /// Contact point minus peg reference point.
    pub lever: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    Surface,
    Chamfer,
    Wall,
}

/// Deepest-point contact of the peg rim, if any.
pub fn contact_geometry(scene: &SceneConfig, peg_pose: &Pose) -> Option<ContactGeometry> {
    let local = scene.hole_pose.inverse().transform_point(peg_pose.position());
    let lateral = Vector2::new(local.x, local.y);
    let offset = lateral.norm();
    let radial = if offset > 1e-12 {
        lateral / offset
    } else {
        Vector2::new(1.0, 0.0)
    };
    let rho = offset + scene.peg_radius;
    let z = local.z;
    let (sin_a, cos_a) = scene.chamfer_angle.sin_cos();
    let tan_a = scene.chamfer_angle.tan();

    // the cross-section of the material near the mouth is the intersection of
    // three half-planes; penetration is the distance to the nearest boundary
    let wall = rho - scene.hole_radius;
    let surface = -z;
    let chamfer = ((rho - scene.hole_radius - scene.chamfer_width) * tan_a - z) * cos_a;
    if wall <= 0.0 || surface <= 0.0 || chamfer <= 0.0 {
        return None;
    }
    let (kind, penetration, n_radial, n_axial) = if surface <= wall && surface <= chamfer {
        (ContactKind::Surface, surface, 0.0, 1.0)
    } else if chamfer <= wall {
        (ContactKind::Chamfer, chamfer, -sin_a, cos_a)
    } else {
        (ContactKind::Wall, wall, -1.0, 0.0)
    };
    let rot = scene.hole_pose.orientation();
    let normal = rot * Vector3::new(n_radial * radial.x, n_radial * radial.y, n_axial);
    let lever = rot * Vector3::new(radial.x, radial.y, 0.0) * scene.peg_radius;
    Some(ContactGeometry {
        kind,
        penetration,
        normal,
        lever,
    })
}

/// Contact wrench acting on the peg (base frame), torque about the peg
/// reference point. Returns the wrench and whether the normal force saturated.
pub fn contact_wrench(
    scene: &SceneConfig,
    peg_pose: &Pose,
    peg_velocity: &Vector3<f64>,
) -> (Wrench, bool) {
    let Some(c) = contact_geometry(scene, peg_pose) else {
        return (Wrench::zero(FrameTag::B), false);
    };
    let normal_speed = peg_velocity.dot(&c.normal);
    let raw = scene.contact_stiffness * c.penetration - scene.contact_damping * normal_speed;
    let saturated = raw > FORCE_SATURATION;
    let normal_force = raw.clamp(0.0, FORCE_SATURATION);
    let slip = peg_velocity - c.normal * normal_speed;
    let friction = if slip.norm() > 1e-12 {
        -slip.normalize() * scene.friction_mu * normal_force
    } else {
        Vector3::zeros()
    };
    let force = c.normal * normal_force + friction;
    (
        Wrench::new(force, c.lever.cross(&force), FrameTag::B),
        saturated,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub ee_command_pose: Pose,
    pub peg_pose: Pose,
    pub peg_velocity: Vector3<f64>,
    pub raw_wrench: Wrench,
    pub filtered_wrench: Wrench,
    pub max_abs_force_seen: f64,
    pub step_count: u64,
    pub saturated: bool,
    rng: ChaCha8Rng,
}

impl SimState {
    /// Starts an episode with the peg held undeformed at `start_pose`.
    pub fn reset(scene: &SceneConfig, start_pose: &Pose, seed: u64) -> Result<SimState, SimError> {
        scene.validate()?;
        let (w, _) = contact_wrench(scene, start_pose, &Vector3::zeros());
        let force = w.force.norm();
        if force > 0.0 {
            return Err(SimError::InitialPenetration { force });
        }
        Ok(SimState {
            ee_command_pose: *start_pose,
            peg_pose: *start_pose,
            peg_velocity: Vector3::zeros(),
            raw_wrench: Wrench::zero(FrameTag::E),
            filtered_wrench: Wrench::zero(FrameTag::E),
            max_abs_force_seen: 0.0,
            step_count: 0,
            saturated: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn time(&self, scene: &SceneConfig) -> f64 {
        self.step_count as f64 * scene.physics_dt
    }

    /// Spring force the cup applies to the peg, base frame.
    fn cup_force(&self, scene: &SceneConfig, ee: &Pose) -> Vector3<f64> {
        let rot = ee.orientation();
        let d = rot.inverse() * (ee.position() - self.peg_pose.position());
        let f = Vector3::new(
            scene.cup_lateral_stiffness * d.x,
            scene.cup_lateral_stiffness * d.y,
            scene.cup_axial_stiffness * d.z,
        );
        rot * f
    }

    /// Advances one physics step with the end effector commanded to `ee_target`.
    pub fn step(&mut self, scene: &SceneConfig, ee_target: &Pose, dt: f64) -> Result<(), SimError> {
        if (dt - scene.physics_dt).abs() > 1e-15 {
            return Err(SimError::DtMismatch {
                expected: scene.physics_dt,
                got: dt,
            });
        }
        self.ee_command_pose = *ee_target;
        let drive = self.cup_force(scene, ee_target);
        let b = scene.peg_damping;

        let mut contact_torque = Vector3::zeros();
        let velocity = match contact_geometry(scene, &self.peg_pose) {
            None => drive / b,
            Some(c) => {
                // implicit in velocity: normal damping and Coulomb friction are
                // resolved together with the viscous peg law
                let kp = scene.contact_stiffness * c.penetration;
                let drive_n = drive.dot(&c.normal);
                let mut v_n = (drive_n + kp) / (b + scene.contact_damping);
                let mut normal_force = kp - scene.contact_damping * v_n;
                if normal_force < 0.0 {
                    normal_force = 0.0;
                    v_n = drive_n / b;
                } else if normal_force > FORCE_SATURATION {
                    normal_force = FORCE_SATURATION;
                    v_n = (drive_n + normal_force) / b;
                    self.saturated = true;
                }
                let drive_t = drive - c.normal * drive_n;
                let limit = scene.friction_mu * normal_force;
                let drive_t_norm = drive_t.norm();
                let (v_t, friction) = if drive_t_norm <= limit {
                    (Vector3::zeros(), -drive_t)
                } else {
                    let dir = drive_t / drive_t_norm;
                    (dir * ((drive_t_norm - limit) / b), -dir * limit)
                };
                contact_torque = c.lever.cross(&(c.normal * normal_force + friction));
                c.normal * v_n + v_t
            }
        };

        let mut next = self.peg_pose.position() + velocity * dt;
        // hole floor as a hard stop
        let hole_inv = scene.hole_pose.inverse();
        let mut local = hole_inv.transform_point(&next);
        if local.z < -scene.hole_depth && local.xy().norm() + scene.peg_radius <= scene.hole_radius + 1e-9 {
            local.z = -scene.hole_depth;
            next = scene.hole_pose.transform_point(&local);
        }
        self.peg_velocity = (next - self.peg_pose.position()) / dt;
        self.peg_pose = Pose::from_parts(next, *ee_target.orientation());

        // sensed wrench: what the tool exerts on the peg, tool frame
        let rot_inv = ee_target.orientation().inverse();
        let raw = Wrench::new(rot_inv * drive, rot_inv * (-contact_torque), FrameTag::E);
        self.raw_wrench = raw;
        let alpha = 1.0 - (-dt / scene.filter_time_constant()).exp();
        let f = &mut self.filtered_wrench;
        f.force += (raw.force - f.force) * alpha;
        f.torque += (raw.torque - f.torque) * alpha;
        self.max_abs_force_seen = self.max_abs_force_seen.max(f.max_abs_force());
        self.step_count += 1;
        Ok(())
    }

    /// Filtered wrench plus zero-mean Gaussian noise, tool frame. Torque noise
    /// uses the force sigma times the peg radius.
    pub fn sensor_read(&mut self, scene: &SceneConfig) -> Wrench {
        let mut w = self.filtered_wrench;
        if scene.sensor_noise_sigma > 0.0 {
            let n = Normal::new(0.0, scene.sensor_noise_sigma).expect("sigma checked >= 0");
            for i in 0..3 {
                w.force[i] += n.sample(&mut self.rng);
            }
            for i in 0..3 {
                w.torque[i] += n.sample(&mut self.rng) * scene.peg_radius;
            }
        }
        w
    }

    /// Peg bottom position in the hole frame.
    pub fn peg_in_hole_frame(&self, scene: &SceneConfig) -> Vector3<f64> {
        scene.hole_pose.inverse().transform_point(self.peg_pose.position())
    }
}

/// Lateral allowance on top of the clearance: a peg loaded against the bore
/// sinks into the penalty wall by force / stiffness.
pub const WALL_PENETRATION_SLACK: f64 = 1e-3;

/// Inserted at least `success_depth` (inclusive) and laterally inside the
/// clearance, up to the wall penetration slack.
pub fn check_success(state: &SimState, scene: &SceneConfig) -> bool {
    let local = state.peg_in_hole_frame(scene);
    let depth = -local.z;
    depth >= scene.success_depth - 1e-12
        && local.xy().norm() <= scene.clearance() + WALL_PENETRATION_SLACK + 1e-12
}
