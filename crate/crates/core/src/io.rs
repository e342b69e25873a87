//! Scenario files (TOML), trajectory files (JSON) and the force report (CSV).
//!
//! Both structured formats carry `format_version` and a `units` field. Units
//! apply to lengths only (`"m"` or `"mm"`); angles are radians, forces
//! newtons, torques newton-metres, masses kilograms, and the stiffness and
//! gravity entries are always SI. Files are read into plain serde types that
//! mirror the text one-to-one, so a file written by this module reads back
//! and writes out byte-identically.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use conic::{BigM, MicpSettings};
use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::compliance::ServoStiffness;
use crate::error::IoError;
use crate::force::{friction_ratio, ForcePlan, Phase, SafetyFactors};
use crate::kinematics::{BodyPose, JointAngles, JointLimits, LimbGeometry};
use crate::pipeline::{RoundRecord, TrajectoryRecord};
use crate::posture::{PlannerOptions, PlannerWeights, Posture, StepBounds};
use crate::region::{Region, RegionSet};
use crate::robot::{Limb, RobotConfig, Side, NUM_LIMBS};
use crate::scenario::WallScenario;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;
pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;
pub const FORCE_REPORT_HEADER: [&str; 13] = [
    "round", "instant", "phase", "limb", "fx", "fy", "fz", "tau1", "tau2", "tau3", "mu_c", "S_mu", "S_tau",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    #[serde(rename = "m")]
    Metres,
    #[serde(rename = "mm")]
    Millimetres,
}

impl Units {
    /// Metres per file unit.
    pub fn scale(self) -> f64 {
        match self {
            Units::Metres => 1.0,
            Units::Millimetres => 1e-3,
        }
    }

    fn to_si(self, v: f64) -> f64 {
        match self {
            Units::Metres => v,
            Units::Millimetres => v / 1000.0,
        }
    }

    fn to_file(self, v: f64) -> f64 {
        match self {
            Units::Metres => v,
            Units::Millimetres => v * 1000.0,
        }
    }
}

type V3 = [f64; 3];

fn v3(v: &Vector3<f64>) -> V3 {
    [v.x, v.y, v.z]
}

fn vec3(a: &V3) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn len_out(u: Units, v: &Vector3<f64>) -> V3 {
    [u.to_file(v.x), u.to_file(v.y), u.to_file(v.z)]
}

fn len_in(u: Units, a: &V3) -> Vector3<f64> {
    Vector3::new(u.to_si(a[0]), u.to_si(a[1]), u.to_si(a[2]))
}

fn mat_out(m: &Matrix3<f64>) -> [V3; 3] {
    [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
}

fn mat_in(rows: &[V3; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| rows[r][c])
}

// ---------------------------------------------------------------- scenario

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format_version: u32,
    pub units: Units,
    pub name: String,
    /// Horizontal angle between the walls [rad].
    pub wall_angle: f64,
    pub mu: f64,
    pub s_mu_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_weight: Option<f64>,
    pub gait_order: [Limb; NUM_LIMBS],
    pub goal: [V3; NUM_LIMBS],
    pub start: PostureFile,
    pub robot: RobotFile,
    pub planner: PlannerFile,
    pub regions: Vec<RegionFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostureFile {
    #[serde(default)]
    pub round: usize,
    pub com: V3,
    pub theta: V3,
    pub toes: [V3; NUM_LIMBS],
    pub regions: [usize; NUM_LIMBS],
}

impl PostureFile {
    fn from_posture(p: &Posture, u: Units) -> Self {
        Self {
            round: p.round,
            com: len_out(u, &p.p_com),
            theta: v3(&p.theta_b),
            toes: p.toes.map(|t| len_out(u, &t)),
            regions: p.regions,
        }
    }

    fn to_posture(&self, u: Units) -> Posture {
        Posture {
            round: self.round,
            p_com: len_in(u, &self.com),
            theta_b: vec3(&self.theta),
            toes: self.toes.map(|t| len_in(u, &t)),
            regions: self.regions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimbFile {
    pub coxa: f64,
    pub femur: f64,
    pub tibia: f64,
    pub mount_offset: V3,
    /// [rad]
    pub mount_yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotFile {
    /// [kg]
    pub mass: f64,
    /// [m/s²], independent of `units`.
    pub gravity: f64,
    /// [N·m]
    pub tau_max: f64,
    /// Servo springs [N·m/rad].
    pub servo_stiffness: V3,
    pub workspace_margin: f64,
    pub condition_limit: f64,
    pub joint_lower: V3,
    pub joint_upper: V3,
    pub limbs: [LimbFile; NUM_LIMBS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFile {
    pub lower: V3,
    pub upper: V3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerFile {
    pub rounds: usize,
    pub w_goal: [V3; 3],
    pub w_com: [V3; 3],
    pub w_step: [V3; 3],
    pub w_rot: [V3; 3],
    pub com_step: StepFile,
    pub toe_step: StepFile,
    /// [rad]
    pub rot_step: StepFile,
    /// [rad]
    pub rotation_cap: f64,
    pub side_filter: bool,
    pub gait_reachability: bool,
    /// Fixed big-M; absent means per-row values from the variable boxes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_s: Option<f64>,
    pub max_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionFile {
    pub name: String,
    pub side: Side,
    pub mu: f64,
    pub normal: V3,
    /// Rows of `A` in `A p <= b`; dimensionless.
    pub a: Vec<V3>,
    /// Length units.
    pub b: Vec<f64>,
}

impl ScenarioFile {
    pub fn from_scenario(s: &WallScenario, units: Units) -> Self {
        let u = units;
        let step = |b: &StepBounds, scaled: bool| StepFile {
            lower: if scaled { len_out(u, &b.lower) } else { v3(&b.lower) },
            upper: if scaled { len_out(u, &b.upper) } else { v3(&b.upper) },
        };
        let w = &s.weights;
        let o = &s.planner;
        Self {
            format_version: SCENARIO_FORMAT_VERSION,
            units,
            name: s.name.clone(),
            wall_angle: s.wall_angle,
            mu: s.mu,
            s_mu_floor: s.s_mu_floor,
            force_weight: s.force_weight,
            gait_order: s.gait_order,
            goal: s.goal.map(|g| len_out(u, &g)),
            start: PostureFile::from_posture(&s.start, u),
            robot: RobotFile {
                mass: s.robot.mass,
                gravity: s.robot.gravity,
                tau_max: s.robot.tau_max,
                servo_stiffness: s.robot.servo.k,
                workspace_margin: s.robot.workspace_margin,
                condition_limit: s.robot.condition_limit,
                joint_lower: s.robot.limits.lower,
                joint_upper: s.robot.limits.upper,
                limbs: s.robot.limbs.map(|l| LimbFile {
                    coxa: u.to_file(l.coxa_length),
                    femur: u.to_file(l.femur_length),
                    tibia: u.to_file(l.tibia_length),
                    mount_offset: len_out(u, &l.mount_offset),
                    mount_yaw: l.mount_yaw,
                }),
            },
            planner: PlannerFile {
                rounds: w.rounds,
                w_goal: mat_out(&w.w_goal),
                w_com: mat_out(&w.w_com),
                w_step: mat_out(&w.w_step),
                w_rot: mat_out(&w.w_rot),
                com_step: step(&w.com_step, true),
                toe_step: step(&w.toe_step, true),
                rot_step: step(&w.rot_step, false),
                rotation_cap: w.rotation_cap,
                side_filter: o.side_filter,
                gait_reachability: o.gait_reachability,
                big_m: match o.big_m {
                    BigM::Auto => None,
                    BigM::Fixed(m) => Some(u.to_file(m)),
                },
                time_limit_s: o.micp.time_limit.map(|t| t.as_secs_f64()),
                max_nodes: o.micp.max_nodes,
            },
            regions: s
                .regions
                .regions
                .iter()
                .map(|r| RegionFile {
                    name: r.name.clone(),
                    side: r.side,
                    mu: r.mu,
                    normal: v3(&r.normal),
                    a: r.a.iter().map(v3).collect(),
                    b: r.b.iter().map(|&b| u.to_file(b)).collect(),
                })
                .collect(),
        }
    }

    pub fn to_scenario(&self) -> Result<WallScenario, String> {
        let u = self.units;
        let p = &self.planner;
        let step = |f: &StepFile, scaled: bool| {
            if scaled {
                StepBounds::new(len_in(u, &f.lower), len_in(u, &f.upper))
            } else {
                StepBounds::new(vec3(&f.lower), vec3(&f.upper))
            }
        };
        let time_limit = match p.time_limit_s {
            Some(t) if !(t.is_finite() && t >= 0.0) => return Err(format!("invalid time_limit_s {t}")),
            Some(t) => Some(Duration::from_secs_f64(t)),
            None => None,
        };
        let regions = self
            .regions
            .iter()
            .map(|r| {
                if r.a.len() != r.b.len() {
                    return Err(format!(
                        "region {}: {} rows in a but {} in b",
                        r.name,
                        r.a.len(),
                        r.b.len()
                    ));
                }
                Ok(Region {
                    name: r.name.clone(),
                    a: r.a.iter().map(vec3).collect(),
                    b: r.b.iter().map(|&b| u.to_si(b)).collect(),
                    normal: vec3(&r.normal),
                    mu: r.mu,
                    side: r.side,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let robot = &self.robot;
        Ok(WallScenario {
            name: self.name.clone(),
            robot: RobotConfig {
                limbs: robot.limbs.clone().map(|l| LimbGeometry {
                    coxa_length: u.to_si(l.coxa),
                    femur_length: u.to_si(l.femur),
                    tibia_length: u.to_si(l.tibia),
                    mount_offset: len_in(u, &l.mount_offset),
                    mount_yaw: l.mount_yaw,
                }),
                limits: JointLimits {
                    lower: robot.joint_lower,
                    upper: robot.joint_upper,
                },
                servo: ServoStiffness {
                    k: robot.servo_stiffness,
                },
                tau_max: robot.tau_max,
                mass: robot.mass,
                gravity: robot.gravity,
                workspace_margin: robot.workspace_margin,
                condition_limit: robot.condition_limit,
            },
            regions: RegionSet::new(regions),
            wall_angle: self.wall_angle,
            mu: self.mu,
            s_mu_floor: self.s_mu_floor,
            force_weight: self.force_weight,
            weights: PlannerWeights {
                w_goal: mat_in(&p.w_goal),
                w_com: mat_in(&p.w_com),
                w_step: mat_in(&p.w_step),
                w_rot: mat_in(&p.w_rot),
                com_step: step(&p.com_step, true),
                toe_step: step(&p.toe_step, true),
                rot_step: step(&p.rot_step, false),
                rotation_cap: p.rotation_cap,
                rounds: p.rounds,
            },
            planner: PlannerOptions {
                side_filter: p.side_filter,
                gait_reachability: p.gait_reachability,
                big_m: match p.big_m {
                    None => BigM::Auto,
                    Some(m) => BigM::Fixed(u.to_si(m)),
                },
                micp: MicpSettings {
                    time_limit,
                    max_nodes: p.max_nodes,
                    ..MicpSettings::default()
                },
            },
            start: self.start.to_posture(u),
            goal: self.goal.map(|g| len_in(u, &g)),
            gait_order: self.gait_order,
        })
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(path: &Path, message: impl ToString) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Reads just the version so an old or future file gets a clear error
/// instead of a field-by-field parse failure.
#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

fn check_version(path: &Path, found: u32, expected: u32) -> Result<(), IoError> {
    if found == expected {
        Ok(())
    } else {
        Err(IoError::Version {
            path: path.to_path_buf(),
            found,
            expected,
        })
    }
}

pub fn parse_scenario_file(path: &Path, text: &str) -> Result<ScenarioFile, IoError> {
    let probe: VersionProbe = toml::from_str(text).map_err(|e| parse_error(path, e))?;
    check_version(path, probe.format_version, SCENARIO_FORMAT_VERSION)?;
    toml::from_str(text).map_err(|e| parse_error(path, e))
}

pub fn scenario_to_string(file: &ScenarioFile) -> String {
    toml::to_string(file).expect("scenario files always serialize")
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile, IoError> {
    parse_scenario_file(path, &read(path)?)
}

/// Reads and validates a scenario.
pub fn load_scenario(path: &Path) -> Result<WallScenario, IoError> {
    let s = load_scenario_file(path)?
        .to_scenario()
        .map_err(|m| parse_error(path, m))?;
    s.validate().map_err(|e| parse_error(path, e))?;
    Ok(s)
}

pub fn save_scenario(s: &WallScenario, units: Units, path: &Path) -> Result<(), IoError> {
    write(path, &scenario_to_string(&ScenarioFile::from_scenario(s, units)))
}

// -------------------------------------------------------------- trajectory

/// `+∞` is written as `null`; JSON has no infinity.
mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyFile {
    #[serde(with = "inf_as_null")]
    pub mu_c: f64,
    pub tau_c: f64,
    #[serde(with = "inf_as_null")]
    pub s_mu: f64,
    #[serde(with = "inf_as_null")]
    pub s_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstantFile {
    pub instant: usize,
    pub phase: Phase,
    pub lifted: Option<Limb>,
    pub contacts: Vec<Limb>,
    pub com: V3,
    pub theta: V3,
    pub toes: [V3; NUM_LIMBS],
    pub regions: [usize; NUM_LIMBS],
    /// Wall-on-toe forces [N].
    pub forces: [V3; NUM_LIMBS],
    pub delta_wall: [V3; NUM_LIMBS],
    /// Body translation (length units) then rotation [rad].
    pub delta_com: [f64; 6],
    /// [N·m]
    pub torques: [V3; NUM_LIMBS],
    pub s_tau_inv: f64,
    pub s_mu_floor: f64,
    pub weight: f64,
    pub objective: f64,
    pub safety: SafetyFile,
    pub solve_time_ns: u64,
    /// Commanded joint angles [rad]; absent for the lifted limb.
    pub preload: [Option<V3>; NUM_LIMBS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundFile {
    pub posture: PostureFile,
    pub instants: Vec<InstantFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub format_version: u32,
    pub units: Units,
    pub scenario: String,
    pub s_mu_floor: f64,
    pub force_weight: f64,
    pub tau_max: f64,
    pub posture_objective: f64,
    pub proven_optimal: bool,
    pub start: PostureFile,
    pub rounds: Vec<RoundFile>,
}

impl TrajectoryFile {
    pub fn from_record(r: &TrajectoryRecord, units: Units) -> Self {
        let u = units;
        Self {
            format_version: TRAJECTORY_FORMAT_VERSION,
            units,
            scenario: r.scenario.clone(),
            s_mu_floor: r.s_mu_floor,
            force_weight: r.force_weight,
            tau_max: r.tau_max,
            posture_objective: r.posture_objective,
            proven_optimal: r.proven_optimal,
            start: PostureFile::from_posture(&r.start, u),
            rounds: r
                .rounds
                .iter()
                .map(|round| RoundFile {
                    posture: PostureFile::from_posture(&round.posture, u),
                    instants: round
                        .plans
                        .iter()
                        .zip(&round.preload)
                        .map(|(p, cmd)| InstantFile {
                            instant: p.instant,
                            phase: p.phase,
                            lifted: p.lifted,
                            contacts: p.contacts.clone(),
                            com: len_out(u, &p.body.p_com),
                            theta: v3(&p.body.theta_b),
                            toes: p.toes.map(|t| len_out(u, &t)),
                            regions: p.regions,
                            forces: p.forces.map(|f| v3(&f)),
                            delta_wall: p.delta_wall.map(|d| len_out(u, &d)),
                            delta_com: [
                                u.to_file(p.delta_com[0]),
                                u.to_file(p.delta_com[1]),
                                u.to_file(p.delta_com[2]),
                                p.delta_com[3],
                                p.delta_com[4],
                                p.delta_com[5],
                            ],
                            torques: p.torques.map(|t| v3(&t)),
                            s_tau_inv: p.s_tau_inv,
                            s_mu_floor: p.s_mu_floor,
                            weight: p.weight,
                            objective: p.objective,
                            safety: SafetyFile {
                                mu_c: p.safety.mu_c,
                                tau_c: p.safety.tau_c,
                                s_mu: p.safety.s_mu,
                                s_tau: p.safety.s_tau,
                            },
                            solve_time_ns: u64::try_from(p.solve_time.as_nanos()).unwrap_or(u64::MAX),
                            preload: cmd.map(|q| q.map(|q| q.as_array())),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_record(&self) -> TrajectoryRecord {
        let u = self.units;
        TrajectoryRecord {
            scenario: self.scenario.clone(),
            start: self.start.to_posture(u),
            s_mu_floor: self.s_mu_floor,
            force_weight: self.force_weight,
            tau_max: self.tau_max,
            posture_objective: self.posture_objective,
            proven_optimal: self.proven_optimal,
            rounds: self
                .rounds
                .iter()
                .map(|round| {
                    let posture = round.posture.to_posture(u);
                    RoundRecord {
                        posture,
                        plans: round
                            .instants
                            .iter()
                            .map(|i| ForcePlan {
                                round: posture.round,
                                instant: i.instant,
                                phase: i.phase,
                                lifted: i.lifted,
                                contacts: i.contacts.clone(),
                                body: BodyPose::new(len_in(u, &i.com), vec3(&i.theta)),
                                toes: i.toes.map(|t| len_in(u, &t)),
                                regions: i.regions,
                                forces: i.forces.map(|f| vec3(&f)),
                                delta_wall: i.delta_wall.map(|d| len_in(u, &d)),
                                delta_com: Vector6::new(
                                    u.to_si(i.delta_com[0]),
                                    u.to_si(i.delta_com[1]),
                                    u.to_si(i.delta_com[2]),
                                    i.delta_com[3],
                                    i.delta_com[4],
                                    i.delta_com[5],
                                ),
                                torques: i.torques.map(|t| vec3(&t)),
                                s_tau_inv: i.s_tau_inv,
                                s_mu_floor: i.s_mu_floor,
                                weight: i.weight,
                                objective: i.objective,
                                safety: SafetyFactors {
                                    mu_c: i.safety.mu_c,
                                    tau_c: i.safety.tau_c,
                                    s_mu: i.safety.s_mu,
                                    s_tau: i.safety.s_tau,
                                },
                                solve_time: Duration::from_nanos(i.solve_time_ns),
                            })
                            .collect(),
                        preload: round
                            .instants
                            .iter()
                            .map(|i| i.preload.map(|q| q.map(JointAngles::from_array)))
                            .collect(),
                    }
                })
                .collect(),
        }
    }
}

pub fn parse_trajectory_file(path: &Path, text: &str) -> Result<TrajectoryFile, IoError> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| parse_error(path, e))?;
    check_version(path, probe.format_version, TRAJECTORY_FORMAT_VERSION)?;
    serde_json::from_str(text).map_err(|e| parse_error(path, e))
}

pub fn trajectory_to_string(file: &TrajectoryFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("trajectory files always serialize");
    s.push('\n');
    s
}

pub fn load_trajectory(path: &Path) -> Result<TrajectoryRecord, IoError> {
    Ok(parse_trajectory_file(path, &read(path)?)?.to_record())
}

pub fn emit_trajectory(record: &TrajectoryRecord, path: &Path) -> Result<(), IoError> {
    write(
        path,
        &trajectory_to_string(&TrajectoryFile::from_record(record, Units::Metres)),
    )
}

// ------------------------------------------------------------ force report

/// Formats a float for the CSV: shortest round-trip form, `inf` for infinity.
fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// One row per limb per instant. `mu_c` is the limb's tangential-to-normal
/// ratio (empty when the limb carries no load), `S_mu` is `μ / mu_c` with the
/// friction coefficient recovered as `S_mu_floor` times the cone slope, and
/// `S_tau` is `τ_max / max |τ|` for the limb.
pub fn force_report_rows(
    record: &TrajectoryRecord,
    normals: &dyn Fn(usize) -> (Vector3<f64>, f64),
) -> Vec<[String; 13]> {
    let mut rows = Vec::new();
    for round in &record.rounds {
        for plan in &round.plans {
            for limb in Limb::ALL {
                let i = limb.index();
                let f = plan.forces[i];
                let t = plan.torques[i];
                let (n, mu) = normals(plan.regions[i]);
                let ratio = if plan.contacts.contains(&limb) {
                    friction_ratio(&f, &n)
                } else {
                    None
                };
                let s_mu = match ratio {
                    Some(r) if r > 0.0 => mu / r,
                    _ => f64::INFINITY,
                };
                let t_max = t.amax();
                let s_tau = if t_max == 0.0 {
                    f64::INFINITY
                } else {
                    record.tau_max / t_max
                };
                rows.push([
                    round.round().to_string(),
                    plan.instant.to_string(),
                    plan.phase.name().to_string(),
                    limb.name().to_string(),
                    num(f.x),
                    num(f.y),
                    num(f.z),
                    num(t.x),
                    num(t.y),
                    num(t.z),
                    ratio.map(num).unwrap_or_default(),
                    num(s_mu),
                    num(s_tau),
                ]);
            }
        }
    }
    rows
}

/// CSV text of the force report, LF line endings.
pub fn force_report_string(record: &TrajectoryRecord, regions: &RegionSet) -> String {
    let lookup = |r: usize| {
        regions
            .regions
            .get(r)
            .map(|g| (g.normal, g.mu))
            .unwrap_or((Vector3::zeros(), 0.0))
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(FORCE_REPORT_HEADER).expect("writing to memory");
    for row in force_report_rows(record, &lookup) {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("CSV output is UTF-8")
}

pub fn emit_force_report(record: &TrajectoryRecord, regions: &RegionSet, path: &Path) -> Result<(), IoError> {
    write(path, &force_report_string(record, regions))
}

/// Short plain-text summary of a trajectory: one line per round.
pub fn summary(record: &TrajectoryRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario {}: {} rounds, {} force solves, w = {:.3e}, posture objective {:.6}{}",
        record.scenario,
        record.rounds.len(),
        record.num_force_solves(),
        record.force_weight,
        record.posture_objective,
        if record.proven_optimal {
            ""
        } else {
            " (not proven optimal)"
        }
    );
    for round in &record.rounds {
        let p = &round.posture;
        if let Some(s) = round.worst_safety() {
            let _ = writeln!(
                out,
                "round {:>2}: com ({:.3}, {:.3}, {:.3}) regions {:?}  min S_mu {:.3}  min S_tau {:.3}  max mu_c {:.3}  max tau_c {:.2}",
                p.round, p.p_com.x, p.p_com.y, p.p_com.z, p.regions, s.s_mu, s.s_tau, s.mu_c, s.tau_c
            );
        }
    }
    out
}

pub fn default_output_path(input: &Path, extension: &str) -> PathBuf {
    input.with_extension(extension)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{builtin, BUILTIN_NAMES};

    #[test]
    fn builtin_scenarios_round_trip_in_metres() {
        for name in BUILTIN_NAMES {
            let s = builtin(name).unwrap();
            let text = scenario_to_string(&ScenarioFile::from_scenario(&s, Units::Metres));
            let file = parse_scenario_file(Path::new("mem.toml"), &text).unwrap();
            assert_eq!(file.to_scenario().unwrap(), s, "{name}");
            assert_eq!(scenario_to_string(&file), text, "{name}");
        }
    }

    #[test]
    fn millimetre_file_matches_metres() {
        let s = builtin("steps").unwrap();
        let text = scenario_to_string(&ScenarioFile::from_scenario(&s, Units::Millimetres));
        assert!(text.contains("units = \"mm\""));
        let file = parse_scenario_file(Path::new("mem.toml"), &text).unwrap();
        assert_eq!(scenario_to_string(&file), text);
        let back = file.to_scenario().unwrap();
        for (a, b) in back.start.toes.iter().zip(&s.start.toes) {
            assert!((a - b).norm() < 1e-12);
        }
        for (a, b) in back.regions.regions.iter().zip(&s.regions.regions) {
            for (x, y) in a.b.iter().zip(&b.b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_version_is_reported() {
        let s = builtin("angled").unwrap();
        let text = scenario_to_string(&ScenarioFile::from_scenario(&s, Units::Metres))
            .replace("format_version = 1", "format_version = 7");
        match parse_scenario_file(Path::new("x.toml"), &text) {
            Err(IoError::Version {
                found: 7, expected: 1, ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_rejected() {
        let s = builtin("angled").unwrap();
        let text = scenario_to_string(&ScenarioFile::from_scenario(&s, Units::Metres)).replacen(
            "mu = ",
            "colour = 3\nmu = ",
            1,
        );
        assert!(matches!(
            parse_scenario_file(Path::new("x.toml"), &text),
            Err(IoError::Parse { .. })
        ));
    }

    #[test]
    fn empty_record_gives_header_only_report() {
        let s = builtin("angled").unwrap();
        let record = TrajectoryRecord {
            scenario: "empty".into(),
            start: s.start,
            s_mu_floor: 1.8,
            force_weight: 0.0,
            tau_max: 26.0,
            posture_objective: 0.0,
            proven_optimal: true,
            rounds: Vec::new(),
        };
        assert_eq!(
            force_report_string(&record, &s.regions),
            "round,instant,phase,limb,fx,fy,fz,tau1,tau2,tau3,mu_c,S_mu,S_tau\n"
        );
    }
}
