//! Independent re-verification of a trajectory.
//!
//! Everything here works on plain `[f64; 3]` arrays with its own rotation,
//! forward kinematics, inverse kinematics and finite-difference Jacobian, so
//! a bug shared with the planners cannot hide itself.

use std::fmt;

use crate::force::{Phase, INSTANTS_PER_ROUND};
use crate::pipeline::TrajectoryRecord;
use crate::region::RegionSet;
use crate::robot::{RobotConfig, NUM_LIMBS};

/// Equilibrium residuals are measured relative to `m g`.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
pub const S_MU_TOL: f64 = 1e-6;
/// Toe-in-region slack [m].
pub const REGION_TOL: f64 = 1e-6;
/// `τ` against `Jᵀ f` with a finite-difference `J` [N·m].
pub const TORQUE_MATCH_TOL: f64 = 1e-6;
/// Toe position reproduced by the recomputed joint angles [m].
pub const KINEMATICS_TOL: f64 = 1e-9;
/// Joint-limit slack [rad].
pub const JOINT_LIMIT_TOL: f64 = 1e-9;

type V = [f64; 3];
type M = [[f64; 3]; 3];

fn add(a: V, b: V) -> V {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: V, b: V) -> V {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: V, s: f64) -> V {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: V, b: V) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V, b: V) -> V {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: V) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec(m: &M, v: V) -> V {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

fn mat_t_vec(m: &M, v: V) -> V {
    let mut out = [0.0; 3];
    for (r, row) in m.iter().enumerate() {
        for c in 0..3 {
            out[c] += row[c] * v[r];
        }
    }
    out
}

fn mat_mul(a: &M, b: &M) -> M {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

fn rot_x(a: f64) -> M {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(a: f64) -> M {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(a: f64) -> M {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Body orientation from roll, pitch, yaw applied about x, then y, then z.
fn body_rotation(theta: V) -> M {
    mat_mul(&rot_z(theta[2]), &mat_mul(&rot_y(theta[1]), &rot_x(theta[0])))
}

struct Leg {
    coxa: f64,
    femur: f64,
    tibia: f64,
    mount: V,
    yaw: f64,
}

impl Leg {
    /// Toe in the coxa frame: yaw about z, then femur and tibia pitch in the
    /// vertical plane, positive angles raising the toe.
    fn toe(&self, q: V) -> V {
        let radial = self.coxa + self.femur * q[1].cos() + self.tibia * (q[1] + q[2]).cos();
        let height = self.femur * q[1].sin() + self.tibia * (q[1] + q[2]).sin();
        [radial * q[0].cos(), radial * q[0].sin(), height]
    }

    /// Knee-down solution, or `None` out of reach.
    fn joints(&self, p: V) -> Option<V> {
        let yaw = p[1].atan2(p[0]);
        let radial = p[0].hypot(p[1]) - self.coxa;
        let d2 = radial * radial + p[2] * p[2];
        let c = (d2 - self.femur * self.femur - self.tibia * self.tibia) / (2.0 * self.femur * self.tibia);
        if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&c) {
            return None;
        }
        let knee = c.clamp(-1.0, 1.0).acos();
        let femur = p[2].atan2(radial) - (self.tibia * knee.sin()).atan2(self.femur + self.tibia * knee.cos());
        Some([yaw, femur, knee])
    }

    /// Central-difference Jacobian of [`Leg::toe`], columns per joint.
    fn jacobian(&self, q: V) -> M {
        const H: f64 = 1e-6;
        let mut j = [[0.0; 3]; 3];
        for c in 0..3 {
            let mut plus = q;
            let mut minus = q;
            plus[c] += H;
            minus[c] -= H;
            let d = scale(sub(self.toe(plus), self.toe(minus)), 0.5 / H);
            for r in 0..3 {
                j[r][c] = d[r];
            }
        }
        j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Structure,
    Equilibrium,
    Cone,
    FrictionFloor,
    TorqueFloor,
    TorqueLimit,
    TorqueMismatch,
    Kinematics,
    JointLimit,
    LiftedLimb,
    Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub round: usize,
    pub instant: usize,
    pub limb: Option<usize>,
    pub kind: CheckKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "round {} instant {}", self.round, self.instant)?;
        if let Some(l) = self.limb {
            write!(f, " limb {l}")?;
        }
        write!(f, ": {:?}: {}", self.kind, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub instants: usize,
    /// Largest force or moment residual divided by `m g`.
    pub max_equilibrium: f64,
    pub min_s_mu: f64,
    pub min_s_tau: f64,
    pub max_torque: f64,
    pub max_torque_mismatch: f64,
    pub max_region_violation: f64,
    pub violations: Vec<Violation>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} instants checked: max equilibrium residual {:.2e} mg, min S_mu {:.4}, min S_tau {:.4}, max |tau| {:.3} N·m, max torque mismatch {:.2e}, max region violation {:.2e} m",
            self.instants,
            self.max_equilibrium,
            self.min_s_mu,
            self.min_s_tau,
            self.max_torque,
            self.max_torque_mismatch,
            self.max_region_violation
        )?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

struct Checker<'a> {
    robot: &'a RobotConfig,
    regions: &'a RegionSet,
    legs: Vec<Leg>,
    mg: f64,
    report: CheckReport,
}

impl Checker<'_> {
    fn flag(&mut self, round: usize, instant: usize, limb: Option<usize>, kind: CheckKind, detail: String) {
        self.report.violations.push(Violation {
            round,
            instant,
            limb,
            kind,
            detail,
        });
    }
}

/// Re-verifies every instant of `record` against the robot and regions it
/// was planned for.
pub fn check_trajectory(record: &TrajectoryRecord, robot: &RobotConfig, regions: &RegionSet) -> CheckReport {
    let legs = robot
        .limbs
        .iter()
        .map(|l| Leg {
            coxa: l.coxa_length,
            femur: l.femur_length,
            tibia: l.tibia_length,
            mount: [l.mount_offset.x, l.mount_offset.y, l.mount_offset.z],
            yaw: l.mount_yaw,
        })
        .collect();
    let mut c = Checker {
        robot,
        regions,
        legs,
        mg: robot.mass * robot.gravity,
        report: CheckReport {
            instants: 0,
            max_equilibrium: 0.0,
            min_s_mu: f64::INFINITY,
            min_s_tau: f64::INFINITY,
            max_torque: 0.0,
            max_torque_mismatch: 0.0,
            max_region_violation: 0.0,
            violations: Vec::new(),
        },
    };

    for (n, round) in record.rounds.iter().enumerate() {
        let r = round.round();
        if r != n + 1 {
            c.flag(
                r,
                0,
                None,
                CheckKind::Structure,
                format!("round {r} found at position {}", n + 1),
            );
        }
        if round.plans.len() != INSTANTS_PER_ROUND || round.preload.len() != round.plans.len() {
            c.flag(
                r,
                0,
                None,
                CheckKind::Structure,
                format!(
                    "{} plans and {} preload commands",
                    round.plans.len(),
                    round.preload.len()
                ),
            );
        }
        for (k, plan) in round.plans.iter().enumerate() {
            let expected_phase = if k % 2 == 0 { Phase::LegLifted } else { Phase::BodyPush };
            if plan.round != r || plan.instant != k + 1 || plan.phase != expected_phase {
                c.flag(
                    r,
                    plan.instant,
                    None,
                    CheckKind::Structure,
                    format!(
                        "expected instant {} ({:?}), found {} ({:?})",
                        k + 1,
                        expected_phase,
                        plan.instant,
                        plan.phase
                    ),
                );
            }
            if let Some(cmd) = round.preload.get(k) {
                for (l, q) in cmd.iter().enumerate() {
                    if q.is_some() != (plan.lifted.map(|x| x.index()) != Some(l)) {
                        c.flag(
                            r,
                            plan.instant,
                            Some(l),
                            CheckKind::Structure,
                            "preload presence does not match contact".into(),
                        );
                    }
                }
            }
            check_instant(&mut c, record, plan);
        }
        if let Some(last) = round.plans.last() {
            let p = &round.posture;
            let end_gap = (0..NUM_LIMBS)
                .map(|i| (last.toes[i] - p.toes[i]).norm())
                .chain([
                    (last.body.p_com - p.p_com).norm(),
                    (last.body.theta_b - p.theta_b).norm(),
                ])
                .fold(0.0, f64::max);
            if end_gap > 1e-12 {
                c.flag(
                    r,
                    last.instant,
                    None,
                    CheckKind::Structure,
                    format!("last instant is {end_gap:.2e} from the round posture"),
                );
            }
        }
    }
    c.report
}

fn check_instant(c: &mut Checker<'_>, record: &TrajectoryRecord, plan: &crate::force::ForcePlan) {
    let (r, k) = (plan.round, plan.instant);
    c.report.instants += 1;
    let com = [plan.body.p_com.x, plan.body.p_com.y, plan.body.p_com.z];
    let body = body_rotation([plan.body.theta_b.x, plan.body.theta_b.y, plan.body.theta_b.z]);
    let lifted = plan.lifted.map(|l| l.index());

    let expected_contacts: Vec<usize> = (0..NUM_LIMBS).filter(|&i| Some(i) != lifted).collect();
    let contacts: Vec<usize> = plan.contacts.iter().map(|l| l.index()).collect();
    if contacts != expected_contacts {
        c.flag(
            r,
            k,
            None,
            CheckKind::Structure,
            format!("contacts {contacts:?} with lifted {lifted:?}"),
        );
    }
    if plan.s_mu_floor != record.s_mu_floor {
        c.flag(
            r,
            k,
            None,
            CheckKind::Structure,
            format!("floor {} differs from record {}", plan.s_mu_floor, record.s_mu_floor),
        );
    }

    // Equilibrium about the body COM with gravity along −z.
    let mut force = [0.0, 0.0, -c.mg];
    let mut moment = [0.0; 3];
    for i in 0..NUM_LIMBS {
        let f = [plan.forces[i].x, plan.forces[i].y, plan.forces[i].z];
        let toe = [plan.toes[i].x, plan.toes[i].y, plan.toes[i].z];
        force = add(force, f);
        moment = add(moment, cross(sub(toe, com), f));
    }
    let residual = norm(force).max(norm(moment)) / c.mg;
    c.report.max_equilibrium = c.report.max_equilibrium.max(residual);
    if !(residual <= EQUILIBRIUM_TOL) {
        c.flag(
            r,
            k,
            None,
            CheckKind::Equilibrium,
            format!("residual {residual:.3e} mg"),
        );
    }

    let mut s_mu = f64::INFINITY;
    let mut tau_c = 0.0f64;
    for i in 0..NUM_LIMBS {
        let f = [plan.forces[i].x, plan.forces[i].y, plan.forces[i].z];
        let tau = [plan.torques[i].x, plan.torques[i].y, plan.torques[i].z];
        let toe = [plan.toes[i].x, plan.toes[i].y, plan.toes[i].z];
        if Some(i) == lifted {
            if f != [0.0; 3] || tau != [0.0; 3] {
                c.flag(r, k, Some(i), CheckKind::LiftedLimb, "lifted limb carries load".into());
            }
            continue;
        }
        tau_c = tau.iter().fold(tau_c, |m, t| m.max(t.abs()));

        let Some(region) = c.regions.regions.get(plan.regions[i]) else {
            c.flag(
                r,
                k,
                Some(i),
                CheckKind::Region,
                format!("region {} does not exist", plan.regions[i]),
            );
            continue;
        };
        let worst = region
            .a
            .iter()
            .zip(&region.b)
            .map(|(a, b)| dot([a.x, a.y, a.z], toe) - b)
            .fold(f64::NEG_INFINITY, f64::max);
        c.report.max_region_violation = c.report.max_region_violation.max(worst);
        if worst > REGION_TOL {
            c.flag(
                r,
                k,
                Some(i),
                CheckKind::Region,
                format!("toe {worst:.3e} m outside {}", region.name),
            );
        }

        // Friction cone about the region normal.
        let n = [region.normal.x, region.normal.y, region.normal.z];
        let fn_ = dot(n, f);
        let ft = norm(sub(f, scale(n, fn_)));
        if fn_ < 0.0 || ft > region.mu / record.s_mu_floor * fn_ + S_MU_TOL * c.mg {
            c.flag(
                r,
                k,
                Some(i),
                CheckKind::Cone,
                format!("normal {fn_:.4} N, tangential {ft:.4} N"),
            );
        }
        if fn_ > 0.0 {
            let limb_s_mu = if ft == 0.0 { f64::INFINITY } else { region.mu * fn_ / ft };
            s_mu = s_mu.min(limb_s_mu);
        } else if ft > 0.0 {
            s_mu = 0.0;
        }

        // Joint angles from the toe, then τ = Jᵀ f in the limb frame.
        let leg = &c.legs[i];
        let frame = mat_mul(&body, &rot_z(leg.yaw));
        let origin = add(com, mat_vec(&body, leg.mount));
        let local = mat_t_vec(&frame, sub(toe, origin));
        let Some(q) = leg.joints(local) else {
            c.flag(r, k, Some(i), CheckKind::Kinematics, "toe out of reach".into());
            continue;
        };
        let miss = norm(sub(leg.toe(q), local));
        let jacobian = leg.jacobian(q);
        if miss > KINEMATICS_TOL {
            c.flag(
                r,
                k,
                Some(i),
                CheckKind::Kinematics,
                format!("joint solution misses the toe by {miss:.3e} m"),
            );
        }
        let limits = &c.robot.limits;
        for j in 0..3 {
            if q[j] < limits.lower[j] - JOINT_LIMIT_TOL || q[j] > limits.upper[j] + JOINT_LIMIT_TOL {
                c.flag(
                    r,
                    k,
                    Some(i),
                    CheckKind::JointLimit,
                    format!("joint {j} at {:.4} rad", q[j]),
                );
            }
        }
        let expected = mat_t_vec(&jacobian, mat_t_vec(&frame, f));
        let mismatch = norm(sub(expected, tau));
        c.report.max_torque_mismatch = c.report.max_torque_mismatch.max(mismatch);
        if mismatch > TORQUE_MATCH_TOL {
            c.flag(
                r,
                k,
                Some(i),
                CheckKind::TorqueMismatch,
                format!("|tau - J^T f| = {mismatch:.3e} N·m"),
            );
        }
    }

    c.report.min_s_mu = c.report.min_s_mu.min(s_mu);
    c.report.max_torque = c.report.max_torque.max(tau_c);
    if s_mu < record.s_mu_floor - S_MU_TOL {
        c.flag(
            r,
            k,
            None,
            CheckKind::FrictionFloor,
            format!("S_mu {s_mu:.6} below {}", record.s_mu_floor),
        );
    }
    if tau_c > c.robot.tau_max {
        c.flag(
            r,
            k,
            None,
            CheckKind::TorqueLimit,
            format!("|tau| {tau_c:.6} above {}", c.robot.tau_max),
        );
    }
    let s_tau = if tau_c == 0.0 {
        f64::INFINITY
    } else {
        record.tau_max / tau_c
    };
    c.report.min_s_tau = c.report.min_s_tau.min(s_tau);
    if s_tau < 1.0 {
        c.flag(r, k, None, CheckKind::TorqueFloor, format!("S_tau {s_tau:.6}"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_composes_in_order() {
        // A quarter turn in yaw after a quarter turn in roll sends y to z.
        let m = body_rotation([std::f64::consts::FRAC_PI_2, 0.0, std::f64::consts::FRAC_PI_2]);
        let v = mat_vec(&m, [0.0, 1.0, 0.0]);
        assert!(norm(sub(v, [0.0, 0.0, 1.0])) < 1e-15);
    }

    #[test]
    fn leg_joints_invert_toe() {
        let leg = Leg {
            coxa: 0.05,
            femur: 0.2,
            tibia: 0.3,
            mount: [0.0; 3],
            yaw: 0.0,
        };
        let q = [0.3, -0.4, 1.1];
        let back = leg.joints(leg.toe(q)).unwrap();
        assert!(norm(sub(back, q)) < 1e-12);
        assert!(leg.joints([2.0, 0.0, 0.0]).is_none());
    }
}
