//! End-to-end planning: posture MICP, then twelve force programs per round.

use std::time::{Duration, Instant};

use crate::error::PipelineError;
use crate::force::{
    calibrate_weight, gait_instants, preload_commands, solve_force_plan, ForcePlan, ForceSettings, SafetyFactors,
};
use crate::kinematics::JointAngles;
use crate::posture::{solve_postures, Posture, PostureInputs, PosturePlan};
use crate::robot::NUM_LIMBS;
use crate::scenario::WallScenario;

/// Calibrated weights aim for this multiple of the `S_μ` floor.
pub const CALIBRATION_TARGET: f64 = 1.05;

pub type PreloadCommand = [Option<JointAngles>; NUM_LIMBS];

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub posture: Posture,
    /// Instants `1..=12` in order.
    pub plans: Vec<ForcePlan>,
    /// Joint targets per instant; `None` for the lifted limb.
    pub preload: Vec<PreloadCommand>,
}

impl RoundRecord {
    pub fn round(&self) -> usize {
        self.posture.round
    }

    /// Worst safety factors over the round.
    pub fn worst_safety(&self) -> Option<SafetyFactors> {
        self.plans.iter().map(|p| p.safety).reduce(|a, b| SafetyFactors {
            mu_c: a.mu_c.max(b.mu_c),
            tau_c: a.tau_c.max(b.tau_c),
            s_mu: a.s_mu.min(b.s_mu),
            s_tau: a.s_tau.min(b.s_tau),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub scenario: String,
    pub start: Posture,
    pub s_mu_floor: f64,
    pub force_weight: f64,
    pub tau_max: f64,
    pub posture_objective: f64,
    /// False when the MICP stopped on a limit with an incumbent.
    pub proven_optimal: bool,
    pub rounds: Vec<RoundRecord>,
}

impl TrajectoryRecord {
    pub fn plans(&self) -> impl Iterator<Item = &ForcePlan> {
        self.rounds.iter().flat_map(|r| r.plans.iter())
    }

    pub fn num_force_solves(&self) -> usize {
        self.plans().count()
    }

    /// Copy with every recorded solve time zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.rounds {
            for p in &mut r.plans {
                p.solve_time = Duration::ZERO;
            }
        }
        out
    }
}

/// Wall-clock split of a pipeline run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PipelineTimings {
    pub posture: Duration,
    pub calibration: Duration,
    pub force_total: Duration,
    pub force_max: Duration,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub record: TrajectoryRecord,
    pub posture: PosturePlan,
    pub timings: PipelineTimings,
}

pub fn posture_inputs(s: &WallScenario) -> PostureInputs<'_> {
    PostureInputs {
        regions: &s.regions,
        robot: &s.robot,
        start: &s.start,
        goal: &s.goal,
        weights: &s.weights,
        options: &s.planner,
    }
}

pub fn plan_pipeline(s: &WallScenario) -> Result<TrajectoryRecord, PipelineError> {
    Ok(run_pipeline(s)?.record)
}

/// [`plan_pipeline`] keeping the posture solve and timings.
pub fn run_pipeline(s: &WallScenario) -> Result<PipelineRun, PipelineError> {
    s.validate()?;
    let t0 = Instant::now();
    let posture = solve_postures(&posture_inputs(s))?;
    let posture_time = t0.elapsed();
    let (record, mut timings) = plan_forces(s, &posture)?;
    timings.posture = posture_time;
    Ok(PipelineRun {
        record,
        posture,
        timings,
    })
}

/// Force stage over an existing posture plan. A round is kept only if all
/// twelve instants solve and meet the safety floors.
pub fn plan_forces(
    s: &WallScenario,
    posture: &PosturePlan,
) -> Result<(TrajectoryRecord, PipelineTimings), PipelineError> {
    let load = s.robot.gravity_load();
    let mut timings = PipelineTimings::default();
    let force_weight = match (s.force_weight, posture.postures.first()) {
        (Some(w), _) => w,
        (None, None) => 0.0,
        (None, Some(first)) => {
            let t0 = Instant::now();
            let instants = gait_instants(&s.start, first, &s.gait_order, &s.robot, &s.regions)?;
            let w = calibrate_weight(&instants[0], &load, s.s_mu_floor, s.robot.tau_max, CALIBRATION_TARGET)?;
            timings.calibration = t0.elapsed();
            w
        }
    };
    let settings = ForceSettings {
        s_mu_floor: s.s_mu_floor,
        weight: force_weight,
        tau_max: s.robot.tau_max,
    };

    let mut rounds = Vec::with_capacity(posture.postures.len());
    let mut prev = s.start;
    for next in &posture.postures {
        let instants = gait_instants(&prev, next, &s.gait_order, &s.robot, &s.regions)?;
        let mut plans = Vec::with_capacity(instants.len());
        let mut preload = Vec::with_capacity(instants.len());
        for instant in &instants {
            let plan = solve_force_plan(instant, &load, &settings)?;
            timings.force_total += plan.solve_time;
            timings.force_max = timings.force_max.max(plan.solve_time);
            if !plan.safety.passes(s.s_mu_floor) {
                return Err(PipelineError::Floor {
                    round: plan.round,
                    instant: plan.instant,
                    s_mu: plan.safety.s_mu,
                    s_tau: plan.safety.s_tau,
                });
            }
            preload.push(preload_commands(&plan, instant, &s.robot)?);
            plans.push(plan);
        }
        rounds.push(RoundRecord {
            posture: *next,
            plans,
            preload,
        });
        prev = *next;
    }

    let record = TrajectoryRecord {
        scenario: s.name.clone(),
        start: s.start,
        s_mu_floor: s.s_mu_floor,
        force_weight,
        tau_max: s.robot.tau_max,
        posture_objective: posture.objective,
        proven_optimal: posture.proven_optimal,
        rounds,
    };
    Ok((record, timings))
}
