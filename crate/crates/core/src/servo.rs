//! Pinhole camera, image-based visual servoing, pose from features, and the
//! three-step teaching session (grasp pose, servoing pose, follow and finish).

use nalgebra::{DMatrix, DVector, Matrix6, UnitQuaternion, Vector3, Vector6 as NVector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::{base_twist_to_qdot, clamp_and_integrate, pose_to_q, q_to_pose, ConstraintBox};
use crate::error::ServoError;
use crate::transforms::{compute_dfp, relative_object_pose, Pose};

const MIN_DEPTH: f64 = 1e-4;

/// Pinhole intrinsics plus the EE-from-camera extrinsic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub e_x_c: Pose,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fx: 1900.0,
            fy: 1900.0,
            cx: 960.0,
            cy: 540.0,
            e_x_c: default_mount(),
        }
    }
}

/// Camera 50 mm beside and 50 mm behind the tool tip, pitched so its optical
/// axis meets the tool axis 0.2 m ahead of the tip.
pub fn default_mount() -> Pose {
    let pitch = (0.05f64).atan2(0.25);
    Pose::from_parts(
        Vector3::new(0.0, 0.05, -0.05),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), pitch),
    )
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.cx > 0.0 && self.cy > 0.0) {
            return Err("camera fx, fy, cx, cy > 0".into());
        }
        Ok(())
    }

    /// Image size implied by a centred principal point.
    pub fn width(&self) -> f64 {
        2.0 * self.cx
    }

    pub fn height(&self) -> f64 {
        2.0 * self.cy
    }

    pub fn pixel(&self, p_c: &Vector3<f64>) -> Result<[f64; 2], ServoError> {
        if !(p_c.z > MIN_DEPTH) {
            return Err(ServoError::BehindCamera { depth: p_c.z });
        }
        Ok([self.fx * p_c.x / p_c.z + self.cx, self.fy * p_c.y / p_c.z + self.cy])
    }

    pub fn normalized(&self, uv: &[f64; 2]) -> [f64; 2] {
        [(uv[0] - self.cx) / self.fx, (uv[1] - self.cy) / self.fy]
    }

    pub fn in_image(&self, uv: &[f64; 2]) -> bool {
        (0.0..=self.width()).contains(&uv[0]) && (0.0..=self.height()).contains(&uv[1])
    }
}

/// Corners of a square of side `side` centred in the object z = 0 plane.
pub fn fiducial_square(side: f64) -> Vec<Vector3<f64>> {
    let h = side / 2.0;
    vec![
        Vector3::new(-h, -h, 0.0),
        Vector3::new(h, -h, 0.0),
        Vector3::new(h, h, 0.0),
        Vector3::new(-h, h, 0.0),
    ]
}

/// Projects base-frame points through a camera at `b_x_c`.
pub fn project(cam: &CameraModel, b_x_c: &Pose, world_points: &[Vector3<f64>]) -> Result<Vec<[f64; 2]>, ServoError> {
    let c_x_b = b_x_c.inverse();
    world_points
        .iter()
        .map(|p| cam.pixel(&c_x_b.transform_point(p)))
        .collect()
}

/// Observed image points with their object-frame model points and depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub image: Vec<[f64; 2]>,
    pub model: Vec<Vector3<f64>>,
    pub depths: Vec<f64>,
}

impl FeatureSet {
    /// Renders the model seen from the camera with the object at `c_x_o`.
    pub fn render(cam: &CameraModel, c_x_o: &Pose, model: &[Vector3<f64>]) -> Result<FeatureSet, ServoError> {
        let mut image = Vec::with_capacity(model.len());
        let mut depths = Vec::with_capacity(model.len());
        for m in model {
            let p = c_x_o.transform_point(m);
            image.push(cam.pixel(&p)?);
            depths.push(p.z);
        }
        Ok(FeatureSet {
            image,
            model: model.to_vec(),
            depths,
        })
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    /// Root-mean-square pixel distance between matching points.
    pub fn rms_error(&self, other: &FeatureSet) -> f64 {
        let n = self.len().max(1) as f64;
        let sum: f64 = self
            .image
            .iter()
            .zip(&other.image)
            .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
            .sum();
        (sum / n).sqrt()
    }

    /// Replaces depths with those predicted by a pose estimate.
    pub fn with_depths_from(&self, c_x_o: &Pose) -> FeatureSet {
        let depths = self.model.iter().map(|m| c_x_o.transform_point(m).z).collect();
        FeatureSet {
            depths,
            ..self.clone()
        }
    }
}

/// Stacked point-feature interaction matrix in normalized coordinates,
/// relating feature rates to the camera twist `(v, w)` in the camera frame.
pub fn interaction_matrix(cam: &CameraModel, features: &FeatureSet) -> Result<DMatrix<f64>, ServoError> {
    let n = features.len();
    let mut l = DMatrix::zeros(2 * n, 6);
    for (i, (uv, &z)) in features.image.iter().zip(&features.depths).enumerate() {
        if !(z > MIN_DEPTH) {
            return Err(ServoError::BehindCamera { depth: z });
        }
        let [x, y] = cam.normalized(uv);
        let rows = [
            [-1.0 / z, 0.0, x / z, x * y, -(1.0 + x * x), y],
            [0.0, -1.0 / z, y / z, 1.0 + y * y, -x * y, -x],
        ];
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                l[(2 * i + r, c)] = *v;
            }
        }
    }
    Ok(l)
}

/// Camera twist `v = -lambda * pinv(L) * (s - s*)`.
pub fn ibvs_twist(
    cam: &CameraModel,
    current: &FeatureSet,
    reference: &FeatureSet,
    lambda: f64,
) -> Result<[f64; 6], ServoError> {
    if current.len() != reference.len() {
        return Err(ServoError::FeatureMismatch {
            current: current.len(),
            reference: reference.len(),
        });
    }
    let l = interaction_matrix(cam, current)?;
    let svd = l.clone().svd(true, true);
    let rank = svd.rank(1e-9 * svd.singular_values.max().max(1.0));
    if rank < 6 {
        return Err(ServoError::DegenerateFeatures { rank });
    }
    let mut e = DVector::zeros(2 * current.len());
    for (i, (a, b)) in current.image.iter().zip(&reference.image).enumerate() {
        let na = cam.normalized(a);
        let nb = cam.normalized(b);
        e[2 * i] = na[0] - nb[0];
        e[2 * i + 1] = na[1] - nb[1];
    }
    let pinv = svd.pseudo_inverse(1e-12).expect("svd computed with both factors");
    let v = -(pinv * e) * lambda;
    Ok(std::array::from_fn(|i| v[i]))
}

fn skew(v: &Vector3<f64>) -> nalgebra::Matrix3<f64> {
    v.cross_matrix()
}

/// Cost `0.5 * sum r^2`, its gradient and the Gauss-Newton matrix `J^T J`
/// for a perturbation `(v, w)`: translation plus rotation about the object
/// origin, both in the camera frame.
fn normal_equations(
    cam: &CameraModel,
    observed: &FeatureSet,
    rot: &UnitQuaternion<f64>,
    t: &Vector3<f64>,
) -> Result<(f64, NVector6<f64>, Matrix6<f64>), ServoError> {
    let mut jtj = Matrix6::<f64>::zeros();
    let mut grad = NVector6::<f64>::zeros();
    let mut cost = 0.0;
    for (m, uv) in observed.model.iter().zip(&observed.image) {
        let rm = rot * m;
        let p = rm + t;
        if !(p.z > MIN_DEPTH) {
            return Err(ServoError::BehindCamera { depth: p.z });
        }
        let iz = 1.0 / p.z;
        let r = nalgebra::Vector2::new(cam.fx * p.x * iz + cam.cx - uv[0], cam.fy * p.y * iz + cam.cy - uv[1]);
        // d(pixel)/d(p) then d(p)/d(v, w) = [I, -[R m]x]
        let dp = nalgebra::Matrix2x3::new(
            cam.fx * iz,
            0.0,
            -cam.fx * p.x * iz * iz,
            0.0,
            cam.fy * iz,
            -cam.fy * p.y * iz * iz,
        );
        let mut dxi = nalgebra::Matrix3x6::<f64>::zeros();
        dxi.fixed_view_mut::<3, 3>(0, 0).copy_from(&nalgebra::Matrix3::identity());
        dxi.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&rm)));
        let j = dp * dxi;
        jtj += j.transpose() * j;
        grad += j.transpose() * r;
        cost += 0.5 * r.norm_squared();
    }
    Ok((cost, grad, jtj))
}

/// Minimizes squared pixel reprojection error over `c_x_o`.
///
/// Newton steps use a Hessian differenced from the analytic gradient; a planar
/// target seen nearly head-on has a flat tilt valley where the Gauss-Newton
/// matrix alone zig-zags. Gauss-Newton is the fallback when that Hessian is
/// not positive definite. Converged once the step norm drops below 1e-10 or
/// an iteration no longer lowers the cost by a relative 1e-12.
pub fn estimate_object_pose(cam: &CameraModel, observed: &FeatureSet, init: &Pose) -> Result<Pose, ServoError> {
    const MAX_ITERS: usize = 50;
    const H: f64 = 1e-7;
    if observed.len() < 3 {
        return Err(ServoError::DegenerateFeatures { rank: 2 * observed.len() });
    }
    let mut rot = *init.orientation();
    let mut t = *init.position();
    let mut last_step = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let (c0, grad, jtj) = normal_equations(cam, observed, &rot, &t)?;
        if c0 == 0.0 {
            return Ok(Pose::from_parts(t, rot));
        }
        let mut hess = Matrix6::<f64>::zeros();
        for k in 0..6 {
            let mut e = NVector6::<f64>::zeros();
            e[k] = H;
            let (rp, tp) = apply_step(&rot, &t, &e);
            let (rm, tm) = apply_step(&rot, &t, &(-e));
            let gp = normal_equations(cam, observed, &rp, &tp)?.1;
            let gm = normal_equations(cam, observed, &rm, &tm)?.1;
            hess.set_column(k, &((gp - gm) / (2.0 * H)));
        }
        let hess = (hess + hess.transpose()) * 0.5;
        let step = hess
            .cholesky()
            .or_else(|| jtj.cholesky())
            .map(|c| c.solve(&(-grad)))
            .ok_or(ServoError::DegenerateFeatures { rank: 5 })?;
        // backtrack if the step overshoots
        let mut scale = 1.0;
        let mut next = apply_step(&rot, &t, &step);
        let mut c_new = reprojection_cost(cam, observed, &next.0, &next.1);
        while c_new > c0 && scale > 1e-3 {
            scale *= 0.5;
            next = apply_step(&rot, &t, &(step * scale));
            c_new = reprojection_cost(cam, observed, &next.0, &next.1);
        }
        if c_new > c0 {
            // no descent left at machine precision
            return Ok(Pose::from_parts(t, rot));
        }
        (rot, t) = next;
        last_step = step.norm() * scale;
        if last_step < 1e-10 || c0 - c_new <= 1e-12 * c0 {
            return Ok(Pose::from_parts(t, rot));
        }
    }
    Err(ServoError::NonConvergence {
        iterations: MAX_ITERS,
        last_step,
    })
}

fn apply_step(rot: &UnitQuaternion<f64>, t: &Vector3<f64>, step: &NVector6<f64>) -> (UnitQuaternion<f64>, Vector3<f64>) {
    let dr = UnitQuaternion::from_scaled_axis(Vector3::new(step[3], step[4], step[5]));
    (dr * rot, t + Vector3::new(step[0], step[1], step[2]))
}

fn reprojection_cost(cam: &CameraModel, observed: &FeatureSet, rot: &UnitQuaternion<f64>, t: &Vector3<f64>) -> f64 {
    observed
        .model
        .iter()
        .zip(&observed.image)
        .map(|(m, uv)| {
            let p = rot * m + t;
            let du = cam.fx * p.x / p.z + cam.cx - uv[0];
            let dv = cam.fy * p.y / p.z + cam.cy - uv[1];
            0.5 * (du * du + dv * dv)
        })
        .sum()
}

/// Camera twist (camera frame) to EE twist (EE frame) through the rigid mount.
pub fn camera_twist_to_ee(cam: &CameraModel, twist: &[f64; 6]) -> [f64; 6] {
    let r = cam.e_x_c.orientation();
    let t = cam.e_x_c.position();
    let w = r * Vector3::new(twist[3], twist[4], twist[5]);
    let v = r * Vector3::new(twist[0], twist[1], twist[2]) - w.cross(t);
    [v.x, v.y, v.z, w.x, w.y, w.z]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TeachPhase {
    Idle,
    DgpCaptured,
    Following,
    Finished,
}

impl std::fmt::Display for TeachPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

/// Servo and demonstrator settings for teaching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeachConfig {
    /// IBVS gain, 1/s.
    pub lambda: f64,
    /// Servo loop period, s.
    pub servo_dt: f64,
    /// Height of the servoing pose above the grasp pose along the tool axis, m.
    pub dvsp_height: f64,
    pub fiducial_side: f64,
    /// Gaussian pixel noise added to every rendered feature.
    pub feature_noise_px: f64,
    /// Servo iterations allowed after the last demo keyframe.
    pub settle_iterations: usize,
    /// Settling ends early once the RMS feature error drops below this, px.
    pub settle_tolerance_px: f64,
}

impl Default for TeachConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            servo_dt: 0.01,
            dvsp_height: 0.2,
            fiducial_side: 0.04,
            feature_noise_px: 0.0,
            settle_iterations: 300,
            settle_tolerance_px: 0.05,
        }
    }
}

impl TeachConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda > 0.0 && self.servo_dt > 0.0 && self.dvsp_height > 0.0 && self.fiducial_side > 0.0) {
            return Err("teach lambda, servo_dt, dvsp_height, fiducial_side > 0".into());
        }
        if !(self.feature_noise_px >= 0.0 && self.settle_tolerance_px >= 0.0) {
            return Err("teach noise and tolerance >= 0".into());
        }
        Ok(())
    }
}

/// The robot side of teaching: camera, EE pose, velocity limits, feature noise.
#[derive(Debug, Clone)]
pub struct TeachRig {
    pub camera: CameraModel,
    pub config: TeachConfig,
    pub constraint_box: ConstraintBox,
    pub ee_pose: Pose,
    pub model: Vec<Vector3<f64>>,
    rng: ChaCha8Rng,
}

impl TeachRig {
    pub fn new(camera: CameraModel, config: TeachConfig, constraint_box: ConstraintBox, ee_pose: Pose, seed: u64) -> Self {
        let model = fiducial_square(config.fiducial_side);
        Self {
            camera,
            config,
            constraint_box,
            ee_pose,
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn b_x_c(&self) -> Pose {
        self.ee_pose.compose(&self.camera.e_x_c)
    }

    /// Features of an object at `b_x_o` as seen now, with pixel noise.
    /// Fails if any point is behind the camera or outside the image.
    pub fn observe(&mut self, b_x_o: &Pose) -> Result<FeatureSet, ServoError> {
        let c_x_o = self.b_x_c().inverse().compose(b_x_o);
        let mut f = FeatureSet::render(&self.camera, &c_x_o, &self.model)
            .map_err(|e| ServoError::ObjectNotVisible(e.to_string()))?;
        if self.config.feature_noise_px > 0.0 {
            let n = Normal::new(0.0, self.config.feature_noise_px).expect("noise checked >= 0");
            for uv in &mut f.image {
                uv[0] += n.sample(&mut self.rng);
                uv[1] += n.sample(&mut self.rng);
            }
        }
        if let Some(uv) = f.image.iter().find(|uv| !self.camera.in_image(uv)) {
            return Err(ServoError::ObjectNotVisible(format!(
                "feature at ({:.1}, {:.1}) px outside the image",
                uv[0], uv[1]
            )));
        }
        Ok(f)
    }

    pub fn random_u64(&mut self) -> u64 {
        self.rng.random()
    }
}

/// Bookkeeping for one demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachSession {
    pub phase: TeachPhase,
    pub b_x_dgp: Option<Pose>,
    pub b_x_dvsp: Option<Pose>,
    pub rf1: Option<FeatureSet>,
    /// Object pose in the camera frame at the servoing pose.
    pub c_x_o: Option<Pose>,
    pub trajectory: Vec<(f64, Pose)>,
    pub rf2: Option<FeatureSet>,
    pub dfp: Option<Pose>,
    /// Session clock, s.
    pub time: f64,
    pub duration: f64,
    /// Latest tracked object pose in the camera frame.
    pub tracked: Option<Pose>,
}

impl Default for TeachSession {
    fn default() -> Self {
        Self::new()
    }
}

impl TeachSession {
    pub fn new() -> Self {
        Self {
            phase: TeachPhase::Idle,
            b_x_dgp: None,
            b_x_dvsp: None,
            rf1: None,
            c_x_o: None,
            trajectory: Vec::new(),
            rf2: None,
            dfp: None,
            time: 0.0,
            duration: 0.0,
            tracked: None,
        }
    }

    fn require(&self, phase: TeachPhase, op: &'static str) -> Result<(), ServoError> {
        if self.phase != phase {
            return Err(ServoError::WrongPhase {
                op,
                phase: self.phase.to_string(),
            });
        }
        Ok(())
    }

    /// Step 1: the EE holds the object at its grasp pose.
    pub fn capture_dgp(&mut self, rig: &TeachRig) -> Result<(), ServoError> {
        self.require(TeachPhase::Idle, "capture_dgp")?;
        self.b_x_dgp = Some(rig.ee_pose);
        self.phase = TeachPhase::DgpCaptured;
        Ok(())
    }

    /// Step 2: from the servoing pose, take the first reference photo and
    /// store the object pose relative to the camera.
    pub fn capture_dvsp(&mut self, rig: &mut TeachRig, b_x_o: &Pose) -> Result<(), ServoError> {
        self.require(TeachPhase::DgpCaptured, "capture_dvsp")?;
        let rf1 = rig.observe(b_x_o)?;
        let dgp = self.b_x_dgp.expect("set in DgpCaptured");
        let dvsp = rig.ee_pose;
        let c_x_o = relative_object_pose(&rig.camera.e_x_c.inverse(), &dvsp, &dgp);
        self.b_x_dvsp = Some(dvsp);
        self.rf1 = Some(rf1.with_depths_from(&c_x_o));
        self.c_x_o = Some(c_x_o);
        self.tracked = Some(c_x_o);
        self.trajectory = vec![(self.time, dvsp)];
        self.phase = TeachPhase::Following;
        Ok(())
    }

    /// Step 3: one servo iteration towards the first reference photo while
    /// the user moves the object. Returns the new EE command.
    pub fn follow_step(&mut self, rig: &mut TeachRig, b_x_o: &Pose, dt: f64) -> Result<Pose, ServoError> {
        self.require(TeachPhase::Following, "follow_step")?;
        let observed = rig.observe(b_x_o)?;
        let init = self.tracked.or(self.c_x_o).expect("set in Following");
        let estimate = estimate_object_pose(&rig.camera, &observed, &init)?;
        self.tracked = Some(estimate);
        let current = observed.with_depths_from(&estimate);
        let reference = self.rf1.as_ref().expect("set in Following");
        let cam_twist = ibvs_twist(&rig.camera, &current, reference, rig.config.lambda)?;
        let ee_twist = camera_twist_to_ee(&rig.camera, &cam_twist);
        let r = rig.ee_pose.orientation();
        let v = r * Vector3::new(ee_twist[0], ee_twist[1], ee_twist[2]);
        let w = r * Vector3::new(ee_twist[3], ee_twist[4], ee_twist[5]);
        let qdot = base_twist_to_qdot(&v, &w);
        let cbox = rig.constraint_box.with_delta(dt);
        let next = q_to_pose(&clamp_and_integrate(&pose_to_q(&rig.ee_pose), &qdot, &cbox));
        rig.ee_pose = next;
        self.time += dt;
        self.trajectory.push((self.time, next));
        Ok(next)
    }

    /// Ends the demonstration: second reference photo, object pose
    /// re-estimated from it, final pose by the camera chain.
    pub fn finish(&mut self, rig: &mut TeachRig, b_x_o: &Pose) -> Result<Pose, ServoError> {
        self.require(TeachPhase::Following, "finish")?;
        let rf2 = rig.observe(b_x_o)?;
        let init = self.tracked.or(self.c_x_o).expect("set in Following");
        let c_x_o = estimate_object_pose(&rig.camera, &rf2, &init)?;
        let dfp = compute_dfp(&rig.ee_pose, &rig.camera.e_x_c, &c_x_o);
        self.rf2 = Some(rf2.with_depths_from(&c_x_o));
        self.tracked = Some(c_x_o);
        self.dfp = Some(dfp);
        self.duration = self.time;
        self.phase = TeachPhase::Finished;
        Ok(dfp)
    }

    /// RMS feature error to the first reference photo at the current EE pose.
    pub fn feature_error(&self, rig: &TeachRig, b_x_o: &Pose) -> Result<f64, ServoError> {
        let reference = self.rf1.as_ref().ok_or(ServoError::WrongPhase {
            op: "feature_error",
            phase: self.phase.to_string(),
        })?;
        let c_x_o = rig.b_x_c().inverse().compose(b_x_o);
        let now = FeatureSet::render(&rig.camera, &c_x_o, &rig.model)?;
        Ok(now.rms_error(reference))
    }
}

/// One demonstration keyframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoKeyframe {
    pub t: f64,
    pub object_pose: Pose,
}

/// Object pose at time `t`: linear in position, slerp in orientation,
/// clamped to the first and last keyframes.
pub fn interpolate_demo(script: &[DemoKeyframe], t: f64) -> Pose {
    assert!(!script.is_empty(), "empty demonstration script");
    if t <= script[0].t {
        return script[0].object_pose;
    }
    for w in script.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if t <= b.t {
            let s = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 1.0 };
            let p = a.object_pose.position().lerp(b.object_pose.position(), s);
            let q = a.object_pose.orientation().slerp(b.object_pose.orientation(), s);
            return Pose::from_parts(p, q);
        }
    }
    script.last().expect("non-empty").object_pose
}

/// A pick-and-place demonstration: lift the object, carry it over the goal,
/// lower it onto the goal. Keyframes at quarters of `duration`, plus a hold.
pub fn pick_and_place_script(start: &Pose, goal: &Pose, lift: f64, duration: f64) -> Vec<DemoKeyframe> {
    let up = Vector3::new(0.0, 0.0, lift);
    let q = duration / 4.0;
    [
        (0.0, *start),
        (q, start.translated(&up)),
        (3.0 * q, goal.translated(&up)),
        (duration, *goal),
        (duration + q, *goal),
    ]
    .into_iter()
    .map(|(t, object_pose)| DemoKeyframe { t, object_pose })
    .collect()
}

/// Servoing pose: the grasp pose raised along the tool axis.
pub fn dvsp_from_dgp(dgp: &Pose, height: f64) -> Pose {
    dgp.compose(&Pose::from_translation(0.0, 0.0, -height))
}

/// Headless demonstration: grasp where the object starts, rise to the
/// servoing pose, follow the scripted object, settle, finish.
pub fn run_scripted_demo(rig: &mut TeachRig, script: &[DemoKeyframe]) -> Result<TeachSession, ServoError> {
    if script.is_empty() {
        return Err(ServoError::ObjectNotVisible("empty demonstration script".into()));
    }
    let mut session = TeachSession::new();
    let start = script[0].object_pose;
    rig.ee_pose = start;
    session.capture_dgp(rig)?;
    rig.ee_pose = dvsp_from_dgp(&start, rig.config.dvsp_height);
    session.capture_dvsp(rig, &start)?;
    let dt = rig.config.servo_dt;
    let t0 = script[0].t;
    let t_end = script.last().expect("non-empty").t;
    let steps = ((t_end - t0) / dt).ceil().max(0.0) as usize;
    for k in 1..=steps {
        let obj = interpolate_demo(script, t0 + k as f64 * dt);
        session.follow_step(rig, &obj, dt)?;
    }
    let last = script.last().expect("non-empty").object_pose;
    for _ in 0..rig.config.settle_iterations {
        if session.feature_error(rig, &last)? < rig.config.settle_tolerance_px {
            break;
        }
        session.follow_step(rig, &last, dt)?;
    }
    session.finish(rig, &last)?;
    Ok(session)
}
