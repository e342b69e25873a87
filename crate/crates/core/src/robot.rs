//! Hexapod configuration: limb layout, joint limits, servo springs and mass.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::compliance::{ExternalLoad, ServoStiffness, DEFAULT_CONDITION_LIMIT};
use crate::kinematics::{workspace_radius, JointLimits, LimbGeometry};

pub const NUM_LIMBS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Limb {
    RF,
    RM,
    RB,
    LF,
    LM,
    LB,
}

impl Limb {
    pub const ALL: [Limb; NUM_LIMBS] = [Limb::RF, Limb::RM, Limb::RB, Limb::LF, Limb::LM, Limb::LB];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Limb> {
        Self::ALL.get(i).copied()
    }

    pub fn side(self) -> Side {
        match self {
            Limb::RF | Limb::RM | Limb::RB => Side::Right,
            _ => Side::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Limb::RF => "RF",
            Limb::RM => "RM",
            Limb::RB => "RB",
            Limb::LF => "LF",
            Limb::LM => "LM",
            Limb::LB => "LB",
        }
    }

    /// Mount heading on a regular hexagon, measured from the `+x` (right) axis.
    pub fn hexagon_angle(self) -> f64 {
        let deg: f64 = match self {
            Limb::RF => 60.0,
            Limb::RM => 0.0,
            Limb::RB => -60.0,
            Limb::LF => 120.0,
            Limb::LM => 180.0,
            Limb::LB => 240.0,
        };
        deg.to_radians()
    }
}

impl std::fmt::Display for Limb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which wall a limb braces against. Right is `+x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Left,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotConfig {
    pub limbs: [LimbGeometry; NUM_LIMBS],
    pub limits: JointLimits,
    pub servo: ServoStiffness,
    /// Per-joint torque limit [N·m].
    pub tau_max: f64,
    pub mass: f64,
    pub gravity: f64,
    pub workspace_margin: f64,
    pub condition_limit: f64,
}

impl RobotConfig {
    pub const MASS: f64 = 10.3;
    pub const GRAVITY: f64 = 9.81;
    pub const TAU_MAX: f64 = 26.0;
    pub const HEXAGON_RADIUS: f64 = 0.15;

    /// Limbs mounted radially on a regular hexagon in the body `xy` plane.
    pub fn hexagon(circumradius: f64) -> [LimbGeometry; NUM_LIMBS] {
        Limb::ALL.map(|l| {
            let a = l.hexagon_angle();
            LimbGeometry::new(Vector3::new(circumradius * a.cos(), circumradius * a.sin(), 0.0), a)
        })
    }

    /// Layout used by the built-in wall scenarios: a wider torso and joint
    /// ranges that let every toe reach a wall 0.615 m from the body axis.
    pub fn wall_climber() -> Self {
        use std::f64::consts::PI;
        Self {
            limbs: Self::hexagon(0.25),
            limits: JointLimits::symmetric([PI / 2.0, 2.0 * PI / 3.0, 5.0 * PI / 6.0]),
            ..Self::default()
        }
    }

    pub fn workspace_radius(&self, limb: Limb) -> f64 {
        workspace_radius(&self.limbs[limb.index()], self.workspace_margin)
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn gravity_load(&self) -> ExternalLoad {
        ExternalLoad::gravity(self.mass, self.gravity)
    }
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            limbs: Self::hexagon(Self::HEXAGON_RADIUS),
            limits: JointLimits::default(),
            servo: ServoStiffness::default(),
            tau_max: Self::TAU_MAX,
            mass: Self::MASS,
            gravity: Self::GRAVITY,
            workspace_margin: 0.15,
            condition_limit: DEFAULT_CONDITION_LIMIT,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hexagon_is_regular() {
        let limbs = RobotConfig::hexagon(0.15);
        for l in &limbs {
            assert_relative_eq!(l.mount_offset.norm(), 0.15, epsilon = 1e-15);
            assert_relative_eq!(
                l.mount_offset.y.atan2(l.mount_offset.x),
                l.mount_yaw.sin().atan2(l.mount_yaw.cos()),
                epsilon = 1e-12
            );
        }
        // Right limbs on the +x side, left on -x.
        for l in Limb::ALL {
            let x = limbs[l.index()].mount_offset.x;
            match l.side() {
                Side::Right => assert!(x >= -1e-12),
                Side::Left => assert!(x <= 1e-12),
            }
        }
    }

    #[test]
    fn defaults() {
        let r = RobotConfig::default();
        assert_eq!(r.mass, 10.3);
        assert_eq!(r.tau_max, 26.0);
        assert_relative_eq!(r.workspace_radius(Limb::RM), 0.53295, epsilon = 1e-12);
        assert_relative_eq!(r.weight(), 101.043, epsilon = 1e-12);
    }

    #[test]
    fn limb_indices_round_trip() {
        for (i, l) in Limb::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(Limb::from_index(i), Some(*l));
        }
        assert_eq!(Limb::from_index(6), None);
    }
}
