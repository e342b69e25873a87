use std::path::PathBuf;

use conic::ConicError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("target is {distance:.6} m outside the reachable annulus")]
    Unreachable { distance: f64 },
    #[error("joint {joint} angle {angle:.6} rad outside [{lower:.6}, {upper:.6}]")]
    JointLimit {
        joint: usize,
        angle: f64,
        lower: f64,
        upper: f64,
    },
    #[error("invalid limb geometry: {0}")]
    InvalidGeometry(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComplianceError {
    #[error("Jacobian condition number {condition:.3e} exceeds the limit {limit:.3e}")]
    NearSingular { condition: f64, limit: f64 },
    #[error("servo stiffness must be strictly positive, got {0:?}")]
    InvalidServoStiffness([f64; 3]),
    #[error("whole-body stiffness is rank deficient for this contact set")]
    RankDeficient,
    #[error("no contacts")]
    NoContacts,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error("region {region} is empty")]
    EmptyRegion { region: usize },
    #[error("body rotation cap {requested_deg:.1} deg exceeds {max_deg:.1} deg; use an exact-rotation planner")]
    RotationCap { requested_deg: f64, max_deg: f64 },
    #[error(transparent)]
    Conic(#[from] ConicError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PostureError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("posture plan infeasible; first infeasible round {round}")]
    Infeasible { round: usize },
    #[error("posture solve stopped: {0}")]
    Solver(String),
    #[error(transparent)]
    Conic(#[from] ConicError),
}

/// Constraint family that makes a force program infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ConstraintFamily {
    /// Torque limits.
    Torque,
    /// Friction cones or normal-force sign.
    Cone,
    /// Equilibrium cannot be met at all.
    Equilibrium,
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Torque => "torque",
            Self::Cone => "cone",
            Self::Equilibrium => "equilibrium",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForceError {
    #[error("round {round} instant {instant}: limb {limb} kinematics: {source}")]
    Kinematics {
        round: usize,
        instant: usize,
        limb: usize,
        source: KinematicsError,
    },
    #[error("round {round} instant {instant}: limb {limb} stiffness: {source}")]
    Stiffness {
        round: usize,
        instant: usize,
        limb: usize,
        source: ComplianceError,
    },
    #[error("round {round} instant {instant}: {source}")]
    Compliance {
        round: usize,
        instant: usize,
        source: ComplianceError,
    },
    #[error("round {round} instant {instant}: force program infeasible ({family} constraints bind)")]
    Infeasible {
        round: usize,
        instant: usize,
        family: ConstraintFamily,
    },
    #[error("round {round} instant {instant}: solver failed: {reason}")]
    Solver {
        round: usize,
        instant: usize,
        reason: String,
    },
    #[error("degenerate plan: every normal force is zero under a nonzero load")]
    Degenerate,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("posture stage: {0}")]
    Posture(#[from] PostureError),
    #[error("force stage: {0}")]
    Force(#[from] ForceError),
    #[error("round {round} instant {instant}: safety floor missed (S_mu {s_mu:.4}, S_tau {s_tau:.4})")]
    Floor {
        round: usize,
        instant: usize,
        s_mu: f64,
        s_tau: f64,
    },
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: unsupported format_version {found} (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },
}
