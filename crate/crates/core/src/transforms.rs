//! SE(3) pose algebra and the frame chains used during teaching.
//!
//! A [`Pose`] `a_x_b` maps points expressed in frame `b` into frame `a`
//! (parent-from-child). Chains therefore read left to right:
//! `compose(b_x_e, e_x_c)` is `b_x_c`.

use nalgebra::{Matrix4, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::PoseError;

/// Maximum deviation of a quaternion norm from one accepted on construction.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Coordinate frames that appear in the teaching and insertion chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameTag {
    /// End effector (tool) frame.
    E,
    /// Camera frame.
    C,
    /// Robot base frame.
    B,
    /// Object frame.
    O,
}

/// Rigid transform: position in meters plus a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    position: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    /// Builds a pose from a raw quaternion, rejecting anything that is not
    /// unit norm within [`UNIT_TOLERANCE`].
    pub fn new(position: Vector3<f64>, orientation: Quaternion<f64>) -> Result<Self, PoseError> {
        let norm = orientation.norm();
        if !position.iter().all(|v| v.is_finite()) || !norm.is_finite() {
            return Err(PoseError::NonFinite);
        }
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(PoseError::NonUnitQuaternion { norm });
        }
        Ok(Self {
            position,
            orientation: UnitQuaternion::new_normalize(orientation),
        })
    }

    pub fn from_parts(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::from_parts(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_rotation(orientation: UnitQuaternion<f64>) -> Self {
        Self::from_parts(Vector3::zeros(), orientation)
    }

    /// `[px, py, pz, qw, qx, qy, qz]`
    pub fn from_array(a: [f64; 7]) -> Result<Self, PoseError> {
        Self::new(
            Vector3::new(a[0], a[1], a[2]),
            Quaternion::new(a[3], a[4], a[5], a[6]),
        )
    }

    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ]
    }

    pub fn position(&self) -> &Vector3<f64> {
        &self.position
    }

    pub fn orientation(&self) -> &UnitQuaternion<f64> {
        &self.orientation
    }

    pub fn with_position(&self, position: Vector3<f64>) -> Self {
        Self::from_parts(position, self.orientation)
    }

    pub fn translated(&self, delta: &Vector3<f64>) -> Self {
        Self::from_parts(self.position + delta, self.orientation)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * p + self.position
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        nalgebra::Isometry3::from_parts(Translation3::from(self.position), self.orientation)
            .to_homogeneous()
    }

    /// `self · other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose {
        inverse(self)
    }
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let a = <[f64; 7]>::deserialize(deserializer)?;
        Pose::from_array(a).map_err(serde::de::Error::custom)
    }
}

/// Returns `a · b`, renormalizing the product quaternion.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    let q = a.orientation.quaternion() * b.orientation.quaternion();
    Pose {
        position: a.orientation * b.position + a.position,
        orientation: UnitQuaternion::new_normalize(q),
    }
}

pub fn inverse(a: &Pose) -> Pose {
    let inv = a.orientation.inverse();
    Pose {
        position: -(inv * a.position),
        orientation: inv,
    }
}

/// Object pose in the camera frame recorded at the visual-servoing pose:
/// `c_x_o = c_x_e · (b_x_dvsp)^-1 · b_x_dgp`.
pub fn relative_object_pose(c_x_e: &Pose, b_x_dvsp: &Pose, b_x_dgp: &Pose) -> Pose {
    compose(&compose(c_x_e, &inverse(b_x_dvsp)), b_x_dgp)
}

/// Desired final pose at the end of a demonstration:
/// `dfp = b_x_e · e_x_c · c_x_o`.
pub fn compute_dfp(b_x_e: &Pose, e_x_c: &Pose, c_x_o: &Pose) -> Pose {
    compose(&compose(b_x_e, e_x_c), c_x_o)
}

/// Euclidean distance between the two positions; orientation is ignored.
pub fn translation_distance(a: &Pose, b: &Pose) -> f64 {
    (a.position - b.position).norm()
}

/// Geodesic angle between two orientations, radians.
pub fn rotation_distance(a: &Pose, b: &Pose) -> f64 {
    a.orientation.angle_to(&b.orientation)
}

/// Tool orientation used throughout the scene: tool z axis pointing down
/// (rotation of pi about base x).
pub fn tool_down() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
}
