//! Contact-force planning at the twelve gait instants of a round.
//!
//! Every instant is a small convex program over the contact forces `f`, the
//! wall-imposed toe displacements `δ_wall`, the joint torques `τ`, the body
//! deflection `δ_COM` and `s = 1/S_τ`:
//!
//! ```text
//! minimize   s − w Σ nᵀf
//! subject to A δ_COM = [F; M] + Σ [K; P K] δ_wall
//!            f = K (δ_wall − [I Pᵀ] δ_COM),   τ = Jᵀ f
//!            0 <= s <= 1,   |τ| <= s τ_max
//!            nᵀf >= 0,      ‖f_t‖ <= (μ / S_μ) nᵀf
//! ```
//!
//! The friction floor `S_μ` is fixed, which keeps the program convex.
//! Displacements that move every toe rigidly with the body leave the forces
//! unchanged; six extra rows `Σ [I; P] δ_wall = 0` pick the minimum-norm
//! representative.

use std::time::{Duration, Instant};

use conic::{solve_continuous, Bounds, ConicProblem, LinExpr, Row, SocConstraint, Status, VarId};
use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::compliance::{
    contact_forces, limb_stiffness_with_limit, solve_sagdown, ComplianceModel, ContactStiffness, ExternalLoad,
};
use crate::error::{ConstraintFamily, ForceError, KinematicsError};
use crate::kinematics::{
    forward_kinematics, inverse_kinematics, inverse_kinematics_limited, limb_jacobian, BodyPose, JointAngles, LimbFrame,
};
use crate::posture::Posture;
use crate::region::RegionSet;
use crate::robot::{Limb, RobotConfig, NUM_LIMBS};

pub const INSTANTS_PER_ROUND: usize = 12;
pub const FORCE_PROGRAM_VARS: usize = 9 * NUM_LIMBS + 6 + 1;
/// Torque rows use `(1 − TORQUE_MARGIN) τ_max`, so recomputed torques keep
/// `S_τ >= 1` despite solver round-off.
pub const TORQUE_MARGIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    LegLifted,
    BodyPush,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::LegLifted => "leg-lifted",
            Phase::BodyPush => "body-push",
        }
    }
}

/// One quasi-static configuration between two postures.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitInstant {
    pub round: usize,
    /// 1..=12 within the round.
    pub index: usize,
    pub phase: Phase,
    pub lifted: Option<Limb>,
    pub body: BodyPose,
    /// World toe positions; the lifted limb's entry is its next foothold.
    pub toes: [Vector3<f64>; NUM_LIMBS],
    /// Region index of each toe.
    pub regions: [usize; NUM_LIMBS],
    pub contacts: Vec<Limb>,
    pub joints: [Option<JointAngles>; NUM_LIMBS],
    /// Toe Jacobian in the world frame.
    pub jacobians: [Matrix3<f64>; NUM_LIMBS],
    pub stiffness: [Matrix3<f64>; NUM_LIMBS],
    pub normals: [Vector3<f64>; NUM_LIMBS],
    pub mu: [f64; NUM_LIMBS],
}

impl GaitInstant {
    pub fn is_contact(&self, limb: Limb) -> bool {
        self.contacts.contains(&limb)
    }

    pub fn compliance(&self) -> ComplianceModel {
        ComplianceModel::new(
            self.contacts
                .iter()
                .map(|l| ContactStiffness::new(self.stiffness[l.index()], &self.toes[l.index()], &self.body.p_com))
                .collect(),
        )
    }
}

/// The twelve instants between `prev` and `next`.
///
/// Leg-lifted instant `2k−1` lifts the `k`-th limb of `order` with the body at
/// fraction `(k−1)/6`; body-push instant `2k` has limbs `1..=k` on their new
/// footholds and the body at `k/6`.
pub fn gait_instants(
    prev: &Posture,
    next: &Posture,
    order: &[Limb; NUM_LIMBS],
    robot: &RobotConfig,
    regions: &RegionSet,
) -> Result<Vec<GaitInstant>, ForceError> {
    let round = next.round;
    let mut out = Vec::with_capacity(INSTANTS_PER_ROUND);
    for k in 1..=NUM_LIMBS {
        for phase in [Phase::LegLifted, Phase::BodyPush] {
            let index = out.len() + 1;
            let (fraction, moved, lifted) = match phase {
                Phase::LegLifted => (k - 1, k - 1, Some(order[k - 1])),
                Phase::BodyPush => (k, k, None),
            };
            let body = prev.body().lerp(&next.body(), fraction as f64 / NUM_LIMBS as f64);
            let mut toes = prev.toes;
            let mut region_of = prev.regions;
            for &l in order.iter().take(moved) {
                toes[l.index()] = next.toes[l.index()];
                region_of[l.index()] = next.regions[l.index()];
            }
            if let Some(l) = lifted {
                toes[l.index()] = next.toes[l.index()];
                region_of[l.index()] = next.regions[l.index()];
            }
            let contacts: Vec<Limb> = Limb::ALL.into_iter().filter(|&l| Some(l) != lifted).collect();
            let mut instant = GaitInstant {
                round,
                index,
                phase,
                lifted,
                body,
                toes,
                regions: region_of,
                contacts,
                joints: [None; NUM_LIMBS],
                jacobians: [Matrix3::zeros(); NUM_LIMBS],
                stiffness: [Matrix3::zeros(); NUM_LIMBS],
                normals: [Vector3::zeros(); NUM_LIMBS],
                mu: [0.0; NUM_LIMBS],
            };
            for &limb in &instant.contacts {
                let i = limb.index();
                let region = regions.regions.get(region_of[i]).ok_or(ForceError::Kinematics {
                    round,
                    instant: index,
                    limb: i,
                    source: KinematicsError::InvalidGeometry(format!("region index {} out of range", region_of[i])),
                })?;
                instant.normals[i] = region.normal;
                instant.mu[i] = region.mu;
                let geom = &robot.limbs[i];
                let frame = LimbFrame::new(&body, geom);
                let q =
                    inverse_kinematics_limited(geom, &robot.limits, &frame.to_limb(&toes[i])).map_err(|source| {
                        ForceError::Kinematics {
                            round,
                            instant: index,
                            limb: i,
                            source,
                        }
                    })?;
                let j = frame.rotation * limb_jacobian(geom, &q);
                let k = limb_stiffness_with_limit(&j, &robot.servo, robot.condition_limit).map_err(|source| {
                    ForceError::Stiffness {
                        round,
                        instant: index,
                        limb: i,
                        source,
                    }
                })?;
                instant.joints[i] = Some(q);
                instant.jacobians[i] = j;
                instant.stiffness[i] = k;
            }
            out.push(instant);
        }
    }
    Ok(out)
}

/// Variable offsets of the force program.
pub mod layout {
    use super::NUM_LIMBS;

    pub fn force(limb: usize, axis: usize) -> usize {
        3 * limb + axis
    }

    pub fn delta_wall(limb: usize, axis: usize) -> usize {
        3 * NUM_LIMBS + 3 * limb + axis
    }

    pub fn torque(limb: usize, axis: usize) -> usize {
        6 * NUM_LIMBS + 3 * limb + axis
    }

    pub fn delta_com(k: usize) -> usize {
        9 * NUM_LIMBS + k
    }

    pub const S_TAU_INV: usize = 9 * NUM_LIMBS + 6;
}

/// Orthonormal pair spanning the plane perpendicular to `n`.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Which constraint families a program includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgramFamilies {
    pub torque: bool,
    pub cone: bool,
}

impl ProgramFamilies {
    pub const ALL: Self = Self {
        torque: true,
        cone: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceSettings {
    pub s_mu_floor: f64,
    pub weight: f64,
    pub tau_max: f64,
}

pub fn build_force_program(instant: &GaitInstant, load: &ExternalLoad, settings: &ForceSettings) -> ConicProblem {
    build_force_program_with(instant, load, settings, ProgramFamilies::ALL)
}

pub fn build_force_program_with(
    instant: &GaitInstant,
    load: &ExternalLoad,
    settings: &ForceSettings,
    families: ProgramFamilies,
) -> ConicProblem {
    use layout::*;
    let mut p = ConicProblem::new();
    for limb in Limb::ALL {
        let bounds = if instant.is_contact(limb) {
            Bounds::FREE
        } else {
            Bounds::fixed(0.0)
        };
        for k in 0..3 {
            let v = p.add_var(format!("f.{limb}.{k}"), bounds);
            debug_assert_eq!(v, force(limb.index(), k));
        }
    }
    for prefix in ["dwall", "tau"] {
        for limb in Limb::ALL {
            let bounds = if instant.is_contact(limb) {
                Bounds::FREE
            } else {
                Bounds::fixed(0.0)
            };
            for k in 0..3 {
                p.add_var(format!("{prefix}.{limb}.{k}"), bounds);
            }
        }
    }
    for k in 0..6 {
        p.add_var(format!("dcom.{k}"), Bounds::FREE);
    }
    let s = p.add_var("s_tau_inv", Bounds::new(0.0, 1.0));
    debug_assert_eq!(s, S_TAU_INV);
    debug_assert_eq!(p.num_vars(), FORCE_PROGRAM_VARS);

    let model = instant.compliance();
    let wrench = load.wrench();
    // A δ_COM − Σ [K; P K] δ_wall = [F; M]
    for r in 0..6 {
        let mut terms: Vec<(VarId, f64)> = (0..6).map(|c| (delta_com(c), model.a[(r, c)])).collect();
        for (c, limb) in model.contacts.iter().zip(&instant.contacts) {
            let blk = if r < 3 { c.k } else { c.p * c.k };
            let row = r % 3;
            for k in 0..3 {
                terms.push((delta_wall(limb.index(), k), -blk[(row, k)]));
            }
        }
        p.add_eq(Row::new(terms, wrench[r]));
    }
    for (c, limb) in model.contacts.iter().zip(&instant.contacts) {
        let i = limb.index();
        let kb = c.k * c.rigid_map();
        // f − K δ_wall + K [I Pᵀ] δ_COM = 0
        for r in 0..3 {
            let mut terms = vec![(force(i, r), 1.0)];
            for k in 0..3 {
                terms.push((delta_wall(i, k), -c.k[(r, k)]));
            }
            for m in 0..6 {
                terms.push((delta_com(m), kb[(r, m)]));
            }
            p.add_eq(Row::new(terms, 0.0));
        }
        // τ − Jᵀ f = 0
        let j = instant.jacobians[i];
        for r in 0..3 {
            let mut terms = vec![(torque(i, r), 1.0)];
            for k in 0..3 {
                terms.push((force(i, k), -j[(k, r)]));
            }
            p.add_eq(Row::new(terms, 0.0));
        }
    }
    // Gauge: Σ [I; P] δ_wall = 0
    for r in 0..6 {
        let mut terms = Vec::new();
        for (c, limb) in model.contacts.iter().zip(&instant.contacts) {
            let blk = if r < 3 { Matrix3::identity() } else { c.p };
            for k in 0..3 {
                terms.push((delta_wall(limb.index(), k), blk[(r % 3, k)]));
            }
        }
        p.add_eq(Row::new(terms, 0.0));
    }
    let tau_limit = settings.tau_max * (1.0 - TORQUE_MARGIN);
    let cone_slope = instant_mu_over_floor(instant, settings.s_mu_floor);
    for limb in &instant.contacts {
        let i = limb.index();
        if families.torque {
            for k in 0..3 {
                p.add_le(Row::new(vec![(torque(i, k), 1.0), (s, -tau_limit)], 0.0));
                p.add_le(Row::new(vec![(torque(i, k), -1.0), (s, -tau_limit)], 0.0));
            }
        }
        let n = instant.normals[i];
        let normal = LinExpr {
            terms: (0..3).map(|k| (force(i, k), n[k])).collect(),
            constant: 0.0,
        };
        if families.cone {
            let mut neg = LinExpr::new();
            neg.add_expr(&normal, -1.0);
            p.add_le_expr(&neg);
            let (t1, t2) = tangent_basis(&n);
            let tangential = [t1, t2]
                .iter()
                .map(|t| LinExpr {
                    terms: (0..3).map(|k| (force(i, k), t[k])).collect(),
                    constant: 0.0,
                })
                .collect();
            let mut bound = LinExpr::new();
            bound.add_expr(&normal, cone_slope[i]);
            p.add_soc(SocConstraint::new(tangential, bound));
        }
        if settings.weight != 0.0 {
            for k in 0..3 {
                p.objective.add_linear(force(i, k), -settings.weight * n[k]);
            }
        }
    }
    p.objective.add_linear(s, 1.0);
    p
}

fn instant_mu_over_floor(instant: &GaitInstant, floor: f64) -> [f64; NUM_LIMBS] {
    instant.mu.map(|mu| mu / floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyFactors {
    /// Largest tangential-to-normal ratio over loaded contacts.
    pub mu_c: f64,
    /// Largest joint torque magnitude.
    pub tau_c: f64,
    pub s_mu: f64,
    pub s_tau: f64,
}

impl SafetyFactors {
    pub fn passes(&self, s_mu_floor: f64) -> bool {
        self.s_mu >= s_mu_floor - 1e-6 && self.s_tau >= 1.0
    }
}

/// Tangential-to-normal ratio; `None` for an unloaded contact.
pub fn friction_ratio(f: &Vector3<f64>, n: &Vector3<f64>) -> Option<f64> {
    let normal = n.dot(f);
    let tangential = (f - n * normal).norm();
    if normal == 0.0 && tangential == 0.0 {
        None
    } else if normal <= 0.0 {
        Some(f64::INFINITY)
    } else {
        Some(tangential / normal)
    }
}

/// `S_μ = min μ_i / ratio_i` over loaded contacts and `S_τ = τ_max / max |τ|`.
pub fn evaluate_safety(
    forces: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    mu: &[f64],
    torques: &[Vector3<f64>],
    tau_max: f64,
    load: &ExternalLoad,
) -> Result<SafetyFactors, ForceError> {
    let mut mu_c = 0.0f64;
    let mut s_mu = f64::INFINITY;
    let mut loaded = false;
    for ((f, n), &m) in forces.iter().zip(normals).zip(mu) {
        if let Some(ratio) = friction_ratio(f, n) {
            loaded |= n.dot(f) > 0.0;
            mu_c = mu_c.max(ratio);
            s_mu = s_mu.min(if ratio == 0.0 { f64::INFINITY } else { m / ratio });
        }
    }
    if !loaded && load.wrench().norm() > 0.0 {
        return Err(ForceError::Degenerate);
    }
    let tau_c = torques.iter().map(|t| t.amax()).fold(0.0, f64::max);
    let s_tau = if tau_c == 0.0 { f64::INFINITY } else { tau_max / tau_c };
    Ok(SafetyFactors {
        mu_c,
        tau_c,
        s_mu,
        s_tau,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForcePlan {
    pub round: usize,
    pub instant: usize,
    pub phase: Phase,
    pub lifted: Option<Limb>,
    pub contacts: Vec<Limb>,
    pub body: BodyPose,
    pub toes: [Vector3<f64>; NUM_LIMBS],
    pub regions: [usize; NUM_LIMBS],
    /// Wall-on-toe forces; zero for the lifted limb.
    pub forces: [Vector3<f64>; NUM_LIMBS],
    pub delta_wall: [Vector3<f64>; NUM_LIMBS],
    pub delta_com: Vector6<f64>,
    pub torques: [Vector3<f64>; NUM_LIMBS],
    /// `s` as returned by the solver.
    pub s_tau_inv: f64,
    pub s_mu_floor: f64,
    pub weight: f64,
    pub objective: f64,
    pub safety: SafetyFactors,
    pub solve_time: Duration,
}

/// Solves one instant and recomputes deflections, forces and torques from
/// the compliance model so equilibrium holds to round-off.
pub fn solve_force_plan(
    instant: &GaitInstant,
    load: &ExternalLoad,
    settings: &ForceSettings,
) -> Result<ForcePlan, ForceError> {
    use layout::*;
    let problem = build_force_program(instant, load, settings);
    let t0 = Instant::now();
    let result = solve_continuous(&problem).map_err(|e| solver_error(instant, e.to_string()))?;
    let solve_time = t0.elapsed();
    let x = match (result.status, result.primal) {
        (Status::Optimal, Some(x)) => x,
        (Status::Infeasible, _) => {
            return Err(ForceError::Infeasible {
                round: instant.round,
                instant: instant.index,
                family: diagnose_infeasibility(instant, load, settings),
            })
        }
        (status, _) => return Err(solver_error(instant, format!("{status:?}"))),
    };
    let model = instant.compliance();
    let dw: Vec<Vector3<f64>> = instant
        .contacts
        .iter()
        .map(|l| Vector3::from_fn(|k, _| x[delta_wall(l.index(), k)]))
        .collect();
    let delta_com = solve_sagdown(&model, load, &dw).map_err(|source| ForceError::Compliance {
        round: instant.round,
        instant: instant.index,
        source,
    })?;
    let f = contact_forces(&model, &dw, &delta_com);
    let mut forces = [Vector3::zeros(); NUM_LIMBS];
    let mut delta_wall_out = [Vector3::zeros(); NUM_LIMBS];
    let mut torques = [Vector3::zeros(); NUM_LIMBS];
    for (n, limb) in instant.contacts.iter().enumerate() {
        let i = limb.index();
        forces[i] = f[n];
        delta_wall_out[i] = dw[n];
        torques[i] = instant.jacobians[i].transpose() * f[n];
    }
    let safety = evaluate_safety(&forces, &instant.normals, &instant.mu, &torques, settings.tau_max, load)?;
    Ok(ForcePlan {
        round: instant.round,
        instant: instant.index,
        phase: instant.phase,
        lifted: instant.lifted,
        contacts: instant.contacts.clone(),
        body: instant.body,
        toes: instant.toes,
        regions: instant.regions,
        forces,
        delta_wall: delta_wall_out,
        delta_com,
        torques,
        s_tau_inv: x[S_TAU_INV],
        s_mu_floor: settings.s_mu_floor,
        weight: settings.weight,
        objective: result.objective.unwrap_or(f64::NAN),
        safety,
        solve_time,
    })
}

fn solver_error(instant: &GaitInstant, reason: String) -> ForceError {
    ForceError::Solver {
        round: instant.round,
        instant: instant.index,
        reason,
    }
}

/// Names the family that makes an instant infeasible: cones when the
/// program stays infeasible with unlimited torque, torque otherwise.
pub fn diagnose_infeasibility(
    instant: &GaitInstant,
    load: &ExternalLoad,
    settings: &ForceSettings,
) -> ConstraintFamily {
    // Pure feasibility: without the torque rows the normal-force reward
    // would make the program unbounded.
    let settings = ForceSettings {
        weight: 0.0,
        ..*settings
    };
    let feasible = |families: ProgramFamilies| {
        let p = build_force_program_with(instant, load, &settings, families);
        matches!(solve_continuous(&p).map(|r| r.status), Ok(Status::Optimal))
    };
    if feasible(ProgramFamilies {
        torque: false,
        cone: true,
    }) {
        ConstraintFamily::Torque
    } else if feasible(ProgramFamilies {
        torque: false,
        cone: false,
    }) {
        ConstraintFamily::Cone
    } else {
        ConstraintFamily::Equilibrium
    }
}

/// Smallest friction-margin gain that justifies a nonzero fallback weight.
const CALIBRATION_GAIN: f64 = 1e-6;

/// Weight `w` for which the first instant's achieved `S_μ` is close to
/// `target_ratio × floor`, found by bisection on `log w` over `[1e-9, 10]`.
/// Returns 0 when the torque-optimal plan already reaches the target. When
/// even `w = 10` misses it, returns whichever end gives the larger `S_μ`,
/// preferring 0.
pub fn calibrate_weight(
    instant: &GaitInstant,
    load: &ExternalLoad,
    s_mu_floor: f64,
    tau_max: f64,
    target_ratio: f64,
) -> Result<f64, ForceError> {
    let target = target_ratio * s_mu_floor;
    let achieved = |w: f64| -> Result<f64, ForceError> {
        let settings = ForceSettings {
            s_mu_floor,
            weight: w,
            tau_max,
        };
        Ok(solve_force_plan(instant, load, &settings)?.safety.s_mu)
    };
    let at_zero = achieved(0.0)?;
    if at_zero >= target {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-9.0f64, 1.0f64);
    let at_top = achieved(10f64.powf(hi))?;
    if at_top < target {
        // Unreachable: a larger weight only spends torque margin unless it
        // buys friction margin.
        let w = if at_top > at_zero + CALIBRATION_GAIN {
            10f64.powf(hi)
        } else {
            0.0
        };
        log::info!(
            "force weight calibration: target S_mu {target:.3} not reached (best {:.3}); using w = {w}",
            at_top.max(at_zero)
        );
        return Ok(w);
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if achieved(10f64.powf(mid))? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-3 {
            break;
        }
    }
    Ok(10f64.powf(hi))
}

/// Joint commands that squeeze each contacting toe against its wall: the
/// toe is commanded to `contact − δ_wall`, i.e. past the wall surface, at the
/// planned body pose.
pub fn preload_commands(
    plan: &ForcePlan,
    instant: &GaitInstant,
    robot: &RobotConfig,
) -> Result<[Option<JointAngles>; NUM_LIMBS], ForceError> {
    let mut out = [None; NUM_LIMBS];
    for limb in &instant.contacts {
        let i = limb.index();
        let target = instant.toes[i] - plan.delta_wall[i];
        let geom = &robot.limbs[i];
        let frame = LimbFrame::new(&instant.body, geom);
        let local = frame.to_limb(&target);
        let q = inverse_kinematics(geom, &local).map_err(|source| ForceError::Kinematics {
            round: instant.round,
            instant: instant.index,
            limb: i,
            source,
        })?;
        debug_assert!((forward_kinematics(geom, &q) - local).norm() < 1e-9);
        out[i] = Some(q);
    }
    Ok(out)
}
