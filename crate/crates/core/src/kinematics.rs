//! Coxa, femur and tibia limb kinematics and body rotations.
//!
//! Limb frame: origin at the coxa joint, `x` along the limb heading, `z` up.
//! The coxa joint yaws about `z`; femur and tibia pitch about the horizontal
//! axis perpendicular to the leg, positive angles raising the segment. With
//! every angle at zero the three segments lie along `+x`.
//!
//! Inverse kinematics returns the knee-down branch (`tibia >= 0`).

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::KinematicsError;

/// Segment lengths and mounting of one limb on the torso.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbGeometry {
    pub coxa_length: f64,
    pub femur_length: f64,
    pub tibia_length: f64,
    /// Body COM to the coxa joint, body frame.
    pub mount_offset: Vector3<f64>,
    /// Heading of the limb frame in the body frame.
    pub mount_yaw: f64,
}

impl LimbGeometry {
    pub const COXA: f64 = 0.057;
    pub const FEMUR: f64 = 0.195;
    pub const TIBIA: f64 = 0.375;

    pub fn new(mount_offset: Vector3<f64>, mount_yaw: f64) -> Self {
        Self {
            coxa_length: Self::COXA,
            femur_length: Self::FEMUR,
            tibia_length: Self::TIBIA,
            mount_offset,
            mount_yaw,
        }
    }

    pub fn total_length(&self) -> f64 {
        self.coxa_length + self.femur_length + self.tibia_length
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        for (name, v) in [
            ("coxa", self.coxa_length),
            ("femur", self.femur_length),
            ("tibia", self.tibia_length),
        ] {
            if !(v > 0.0) {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "{name} length must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Rotation from limb frame to body frame.
    pub fn mount_rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.mount_yaw)
    }
}

impl Default for LimbGeometry {
    fn default() -> Self {
        Self::new(Vector3::new(0.15, 0.0, 0.0), 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointAngles {
    pub coxa: f64,
    pub femur: f64,
    pub tibia: f64,
}

impl JointAngles {
    pub fn new(coxa: f64, femur: f64, tibia: f64) -> Self {
        Self { coxa, femur, tibia }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.coxa, self.femur, self.tibia]
    }

    pub fn from_array(q: [f64; 3]) -> Self {
        Self::new(q[0], q[1], q[2])
    }
}

/// Per-joint angle limits about the zero pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Default for JointLimits {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_PI_2;
        Self {
            lower: [-h; 3],
            upper: [h; 3],
        }
    }
}

impl JointLimits {
    pub fn symmetric(limits: [f64; 3]) -> Self {
        Self {
            lower: limits.map(|l| -l),
            upper: limits,
        }
    }

    pub fn check(&self, q: &JointAngles) -> Result<(), KinematicsError> {
        for (joint, angle) in q.as_array().into_iter().enumerate() {
            if angle < self.lower[joint] - 1e-12 || angle > self.upper[joint] + 1e-12 {
                return Err(KinematicsError::JointLimit {
                    joint,
                    angle,
                    lower: self.lower[joint],
                    upper: self.upper[joint],
                });
            }
        }
        Ok(())
    }
}

/// Body COM position and roll/pitch/yaw `(α, β, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyPose {
    pub p_com: Vector3<f64>,
    pub theta_b: Vector3<f64>,
}

impl BodyPose {
    pub fn new(p_com: Vector3<f64>, theta_b: Vector3<f64>) -> Self {
        Self { p_com, theta_b }
    }

    /// Componentwise linear interpolation; `s = 0` gives `self`.
    pub fn lerp(&self, other: &BodyPose, s: f64) -> BodyPose {
        BodyPose {
            p_com: self.p_com + (other.p_com - self.p_com) * s,
            theta_b: self.theta_b + (other.theta_b - self.theta_b) * s,
        }
    }
}

pub fn forward_kinematics(geom: &LimbGeometry, q: &JointAngles) -> Vector3<f64> {
    let (s1, c1) = q.coxa.sin_cos();
    let (s2, c2) = q.femur.sin_cos();
    let (s23, c23) = (q.femur + q.tibia).sin_cos();
    let radial = geom.coxa_length + geom.femur_length * c2 + geom.tibia_length * c23;
    let height = geom.femur_length * s2 + geom.tibia_length * s23;
    Vector3::new(radial * c1, radial * s1, height)
}

/// Knee-down inverse kinematics in the limb frame.
pub fn inverse_kinematics(geom: &LimbGeometry, toe: &Vector3<f64>) -> Result<JointAngles, KinematicsError> {
    let (lf, lt) = (geom.femur_length, geom.tibia_length);
    let coxa = toe.y.atan2(toe.x);
    let radial = toe.x.hypot(toe.y) - geom.coxa_length;
    let height = toe.z;
    let reach = radial.hypot(height);
    let (min_reach, max_reach) = ((lf - lt).abs(), lf + lt);
    if reach > max_reach || reach < min_reach {
        let distance = if reach > max_reach {
            reach - max_reach
        } else {
            min_reach - reach
        };
        return Err(KinematicsError::Unreachable { distance });
    }
    let cos_tibia = ((reach * reach - lf * lf - lt * lt) / (2.0 * lf * lt)).clamp(-1.0, 1.0);
    let tibia = cos_tibia.acos();
    let femur = height.atan2(radial) - (lt * tibia.sin()).atan2(lf + lt * tibia.cos());
    Ok(JointAngles { coxa, femur, tibia })
}

/// Inverse kinematics followed by a joint-limit check.
pub fn inverse_kinematics_limited(
    geom: &LimbGeometry,
    limits: &JointLimits,
    toe: &Vector3<f64>,
) -> Result<JointAngles, KinematicsError> {
    let q = inverse_kinematics(geom, toe)?;
    limits.check(&q)?;
    Ok(q)
}

/// `J[a][b] = ∂toe_a / ∂q_b` in the limb frame.
pub fn limb_jacobian(geom: &LimbGeometry, q: &JointAngles) -> Matrix3<f64> {
    let (s1, c1) = q.coxa.sin_cos();
    let (s2, c2) = q.femur.sin_cos();
    let (s23, c23) = (q.femur + q.tibia).sin_cos();
    let (lf, lt) = (geom.femur_length, geom.tibia_length);
    let radial = geom.coxa_length + lf * c2 + lt * c23;
    let d_radial_femur = -lf * s2 - lt * s23;
    let d_height_femur = lf * c2 + lt * c23;
    let d_radial_tibia = -lt * s23;
    let d_height_tibia = lt * c23;
    Matrix3::new(
        -radial * s1,
        d_radial_femur * c1,
        d_radial_tibia * c1,
        radial * c1,
        d_radial_femur * s1,
        d_radial_tibia * s1,
        0.0,
        d_height_femur,
        d_height_tibia,
    )
}

/// `skew(v) u = v × u`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// First-order rotation `I + skew(θ)` for roll/pitch/yaw `θ = (α, β, γ)`.
pub fn rotation_linearized(theta_b: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity() + skew(theta_b)
}

/// Intrinsic Z-Y-X rotation `Rz(γ) Ry(β) Rx(α)`.
pub fn rotation_exact(theta_b: &Vector3<f64>) -> Matrix3<f64> {
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), theta_b.x);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), theta_b.y);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), theta_b.z);
    (rz * ry * rx).into_inner()
}

/// Radius of the ball approximating the limb workspace.
pub fn workspace_radius(geom: &LimbGeometry, margin: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&margin));
    (1.0 - margin) * geom.total_length()
}

/// World placement of a limb frame for a body pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbFrame {
    /// Coxa joint position.
    pub origin: Vector3<f64>,
    /// Limb frame to world.
    pub rotation: Matrix3<f64>,
}

impl LimbFrame {
    pub fn new(pose: &BodyPose, geom: &LimbGeometry) -> Self {
        let body = rotation_exact(&pose.theta_b);
        Self {
            origin: pose.p_com + body * geom.mount_offset,
            rotation: body * geom.mount_rotation().into_inner(),
        }
    }

    pub fn to_limb(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (world - self.origin)
    }

    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.origin + self.rotation * local
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn table_geometry() -> LimbGeometry {
        LimbGeometry::default()
    }

    /// Independent homogeneous-transform chain: yaw, then two pitches about the
    /// (rotated) y axis with the same "positive raises" convention.
    fn fk_by_transforms(g: &LimbGeometry, q: &JointAngles) -> Vector3<f64> {
        use nalgebra::{Isometry3, Translation3, UnitQuaternion};
        let yaw = Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), q.coxa),
        );
        // A positive pitch raising +x towards +z is a rotation by -angle about +y.
        let pitch = |a: f64| UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -a);
        let coxa = Isometry3::from_parts(Translation3::new(g.coxa_length, 0.0, 0.0), UnitQuaternion::identity());
        let femur_joint = Isometry3::from_parts(Translation3::identity(), pitch(q.femur));
        let femur = Isometry3::from_parts(Translation3::new(g.femur_length, 0.0, 0.0), UnitQuaternion::identity());
        let tibia_joint = Isometry3::from_parts(Translation3::identity(), pitch(q.tibia));
        let tibia = Isometry3::from_parts(Translation3::new(g.tibia_length, 0.0, 0.0), UnitQuaternion::identity());
        let chain = yaw * coxa * femur_joint * femur * tibia_joint * tibia;
        chain.translation.vector
    }

    #[test]
    fn zero_pose_is_collinear() {
        let toe = forward_kinematics(&table_geometry(), &JointAngles::default());
        assert_relative_eq!(toe, Vector3::new(0.627, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn coxa_quarter_turn() {
        let toe = forward_kinematics(&table_geometry(), &JointAngles::new(FRAC_PI_2, 0.0, 0.0));
        assert_relative_eq!(toe, Vector3::new(0.0, 0.627, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn matches_transform_chain() {
        let g = table_geometry();
        let q = JointAngles::new(0.3, -0.4, 0.8);
        let oracle = fk_by_transforms(&g, &q);
        assert_relative_eq!(forward_kinematics(&g, &q), oracle, epsilon = 1e-14);
        // Frozen from the transform-chain oracle.
        assert_relative_eq!(
            oracle,
            Vector3::new(0.5560103903604762, 0.1719941688980923, 0.07009530161555709),
            epsilon = 1e-12
        );
    }

    #[test]
    fn ik_zero_pose_round_trip() {
        let q = inverse_kinematics(&table_geometry(), &Vector3::new(0.627, 0.0, 0.0)).unwrap();
        assert_relative_eq!(q.coxa, 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.femur, 0.0, epsilon = 1e-7);
        assert_relative_eq!(q.tibia, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn ik_unreachable_reports_distance() {
        let err = inverse_kinematics(&table_geometry(), &Vector3::new(10.0, 0.0, 0.0)).unwrap_err();
        match err {
            KinematicsError::Unreachable { distance } => {
                assert_relative_eq!(distance, 10.0 - 0.627, epsilon = 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jacobian_zero_pose_coxa_column() {
        let j = limb_jacobian(&table_geometry(), &JointAngles::default());
        assert_relative_eq!(j.column(0).into_owned(), Vector3::new(0.0, 0.627, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn jacobian_coxa_column_vanishes_on_axis() {
        // Fold the leg so the toe sits on the coxa axis: radial distance zero.
        let g = LimbGeometry {
            coxa_length: 0.1,
            femur_length: 0.2,
            tibia_length: 0.3,
            ..table_geometry()
        };
        let toe = Vector3::new(0.0, 0.0, -0.25);
        let q = inverse_kinematics(&g, &toe).unwrap();
        assert!(forward_kinematics(&g, &q).xy().norm() < 1e-12);
        let j = limb_jacobian(&g, &q);
        assert!(j.column(0).norm() < 1e-12);
    }

    #[test]
    fn linearized_rotation_at_zero_is_identity() {
        assert_eq!(rotation_linearized(&Vector3::zeros()), Matrix3::identity());
        assert_relative_eq!(rotation_exact(&Vector3::zeros()), Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn linearized_rotation_error_at_ten_degrees() {
        let t = Vector3::repeat(10f64.to_radians());
        let exact = rotation_exact(&t);
        let err = (rotation_linearized(&t) - exact).norm() / exact.norm();
        // Reference value from scipy's ZYX Euler rotation.
        assert_relative_eq!(err, 0.041830945104666756, max_relative = 1e-9);
        for axis in 0..3 {
            let mut single = Vector3::zeros();
            single[axis] = 10f64.to_radians();
            let exact = rotation_exact(&single);
            assert!((rotation_linearized(&single) - exact).norm() / exact.norm() < 0.013);
        }
    }

    #[test]
    fn linearized_rotation_small_angles_entrywise() {
        let t = Vector3::new(0.05, -0.02, 0.1);
        let lin = rotation_linearized(&t);
        // Exact ZYX composition, written out entry by entry.
        let (sa, ca) = t.x.sin_cos();
        let (sb, cb) = t.y.sin_cos();
        let (sg, cg) = t.z.sin_cos();
        let oracle = Matrix3::new(
            cg * cb,
            cg * sb * sa - sg * ca,
            cg * sb * ca + sg * sa,
            sg * cb,
            sg * sb * sa + cg * ca,
            sg * sb * ca - cg * sa,
            -sb,
            cb * sa,
            cb * ca,
        );
        assert_relative_eq!(rotation_exact(&t), oracle, epsilon = 1e-15);
        // Second-order terms bound the entrywise gap: max |θ|² = 0.01.
        assert!((lin - oracle).abs().max() < 0.01);
    }

    #[test]
    fn exact_rotation_first_order_agreement() {
        let t = Vector3::new(1e-4, -0.7e-4, 0.4e-4);
        let diff = (rotation_exact(&t) - rotation_linearized(&t)).abs().max();
        assert!(diff < 1e-8, "second-order residual {diff}");
    }

    #[test]
    fn workspace_radius_values() {
        let g = table_geometry();
        assert_relative_eq!(workspace_radius(&g, 0.0), 0.627, epsilon = 1e-15);
        assert_relative_eq!(workspace_radius(&g, 0.15), 0.53295, epsilon = 1e-12);
    }

    #[test]
    fn limb_frame_round_trip() {
        let g = LimbGeometry::new(Vector3::new(0.1, 0.17, 0.0), 1.0);
        let pose = BodyPose::new(Vector3::new(0.2, -0.1, 0.5), Vector3::new(0.05, -0.1, 0.3));
        let frame = LimbFrame::new(&pose, &g);
        let p = Vector3::new(0.4, 0.3, -0.2);
        assert_relative_eq!(frame.to_world(&frame.to_limb(&p)), p, epsilon = 1e-14);
    }

    #[test]
    fn invalid_geometry_rejected() {
        let g = LimbGeometry {
            femur_length: 0.0,
            ..table_geometry()
        };
        assert!(g.validate().is_err());
    }
}
