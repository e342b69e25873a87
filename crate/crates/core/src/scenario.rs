//! Wall scenarios and the built-in generators.
//!
//! World frame: `x` across the corridor (right wall at `+x`), `y` forward
//! along the walls, `z` up.

use nalgebra::Vector3;

use crate::error::ScenarioError;
use crate::posture::{PlannerOptions, PlannerWeights, Posture, StepBounds};
use crate::region::{Region, RegionSet};
use crate::robot::{Limb, RobotConfig, Side, NUM_LIMBS};

pub const DEFAULT_GAP: f64 = 1.230;
pub const DEFAULT_S_MU_FLOOR: f64 = 1.8;
pub const DEFAULT_GAIT: [Limb; NUM_LIMBS] = Limb::ALL;

#[derive(Debug, Clone, PartialEq)]
pub struct WallScenario {
    pub name: String,
    pub robot: RobotConfig,
    pub regions: RegionSet,
    /// Horizontal angle between the walls [rad]; zero for parallel walls.
    pub wall_angle: f64,
    pub mu: f64,
    pub s_mu_floor: f64,
    /// Force-program weight on total normal force; calibrated when `None`.
    pub force_weight: Option<f64>,
    pub weights: PlannerWeights,
    pub planner: PlannerOptions,
    pub start: Posture,
    pub goal: [Vector3<f64>; NUM_LIMBS],
    pub gait_order: [Limb; NUM_LIMBS],
}

impl WallScenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.mu > 0.0) {
            return Err(ScenarioError::Malformed("friction coefficient must be positive".into()));
        }
        if !(self.robot.mass > 0.0) || !(self.robot.gravity > 0.0) {
            return Err(ScenarioError::Malformed("mass and gravity must be positive".into()));
        }
        if !(self.s_mu_floor >= 1.0) {
            return Err(ScenarioError::Malformed(
                "friction safety floor must be at least 1".into(),
            ));
        }
        if !(self.robot.tau_max > 0.0) {
            return Err(ScenarioError::Malformed("torque limit must be positive".into()));
        }
        if let Some(w) = self.force_weight {
            if !(w >= 0.0) {
                return Err(ScenarioError::Malformed("force weight must be nonnegative".into()));
            }
        }
        let mut seen = [false; NUM_LIMBS];
        for l in self.gait_order {
            if std::mem::replace(&mut seen[l.index()], true) {
                return Err(ScenarioError::Malformed(format!("gait order repeats {l}")));
            }
        }
        for l in &self.robot.limbs {
            l.validate().map_err(|e| ScenarioError::Malformed(e.to_string()))?;
        }
        self.robot
            .servo
            .validate()
            .map_err(|e| ScenarioError::Malformed(e.to_string()))?;
        self.weights.validate()?;
        self.regions.validate()?;
        for limb in Limb::ALL {
            let i = limb.index();
            let r = self
                .regions
                .regions
                .get(self.start.regions[i])
                .ok_or_else(|| ScenarioError::Malformed(format!("start region of {limb} out of range")))?;
            if !r.contains(&self.start.toes[i], 1e-6) {
                return Err(ScenarioError::Malformed(format!(
                    "start toe of {limb} is outside its region"
                )));
            }
        }
        Ok(())
    }

    /// Sets every region's friction coefficient.
    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        for r in &mut self.regions.regions {
            r.mu = mu;
        }
        self
    }
}

/// Toe positions displaced from a stance by a common offset.
pub fn goal_from_offset(start: &Posture, offset: Vector3<f64>) -> [Vector3<f64>; NUM_LIMBS] {
    start.toes.map(|t| t + offset)
}

/// Rectangular patch on a wall plane, for the given side and tilt.
fn wall(name: &str, side: Side, geometry: &WallGeometry, proud: f64, t: (f64, f64), z: (f64, f64), mu: f64) -> Region {
    let (normal, tangent) = geometry.frame(side);
    let offset = geometry.offset(side) + proud;
    Region::wall_patch(
        format!("{}-{name}", side_name(side)),
        side,
        normal,
        offset,
        tangent,
        t,
        z,
        mu,
    )
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Right => "right",
        Side::Left => "left",
    }
}

/// Two vertical walls, each tilted by half the wall angle so they converge
/// towards `+y`, `gap` apart at `y = 0`.
#[derive(Debug, Clone, Copy)]
struct WallGeometry {
    gap: f64,
    angle: f64,
}

impl WallGeometry {
    /// Unit normal into the corridor and forward in-plane tangent.
    fn frame(&self, side: Side) -> (Vector3<f64>, Vector3<f64>) {
        let (s, c) = (self.angle / 2.0).sin_cos();
        match side {
            Side::Right => (Vector3::new(-c, -s, 0.0), Vector3::new(-s, c, 0.0)),
            Side::Left => (Vector3::new(c, -s, 0.0), Vector3::new(s, c, 0.0)),
        }
    }

    /// `d` in `n · p = d` for the wall surface.
    fn offset(&self, side: Side) -> f64 {
        let (n, _) = self.frame(side);
        let sign = if side == Side::Right { 1.0 } else { -1.0 };
        n.dot(&Vector3::new(sign * self.gap / 2.0, 0.0, 0.0))
    }

    /// Point of the wall surface (shifted `proud` into the corridor) straight
    /// across from `p` along `x`, at height `z`.
    fn across(&self, side: Side, p: &Vector3<f64>, proud: f64, z: f64) -> Vector3<f64> {
        let (n, _) = self.frame(side);
        let d = self.offset(side) + proud;
        Vector3::new((d - n.y * p.y) / n.x, p.y, z)
    }
}

/// A stance with every toe on the wall straight across from its coxa.
fn stance(
    robot: &RobotConfig,
    geometry: &WallGeometry,
    com: Vector3<f64>,
    regions: [usize; NUM_LIMBS],
    proud: f64,
) -> Posture {
    let mut toes = [Vector3::zeros(); NUM_LIMBS];
    for limb in Limb::ALL {
        let coxa = com + robot.limbs[limb.index()].mount_offset;
        toes[limb.index()] = geometry.across(limb.side(), &coxa, proud, com.z);
    }
    Posture {
        round: 0,
        p_com: com,
        theta_b: Vector3::zeros(),
        toes,
        regions,
    }
}

fn base(
    name: &str,
    regions: RegionSet,
    start: Posture,
    goal: [Vector3<f64>; NUM_LIMBS],
    weights: PlannerWeights,
) -> WallScenario {
    WallScenario {
        name: name.into(),
        robot: RobotConfig::wall_climber(),
        regions,
        wall_angle: 0.0,
        mu: 1.0,
        s_mu_floor: DEFAULT_S_MU_FLOOR,
        force_weight: None,
        weights,
        planner: PlannerOptions::default(),
        start,
        goal,
        gait_order: DEFAULT_GAIT,
    }
}

/// Parallel walls 1.23 m apart, each with a 0.04 m proud, 0.2 m tall step
/// between heights 0.5 and 0.7 m.
pub fn scenario_parallel_steps() -> WallScenario {
    const STEP_PROUD: f64 = 0.040;
    const STEP_LOW: f64 = 0.5;
    const STEP_HIGH: f64 = 0.7;
    const EDGE: f64 = 0.02;
    let mu = 1.0;
    let geometry = WallGeometry {
        gap: DEFAULT_GAP,
        angle: 0.0,
    };
    let y = (-0.5, 0.5);
    let mut regions = Vec::new();
    for side in [Side::Right, Side::Left] {
        regions.push(wall("below", side, &geometry, 0.0, y, (0.0, STEP_LOW - EDGE), mu));
        regions.push(wall(
            "step",
            side,
            &geometry,
            STEP_PROUD,
            y,
            (STEP_LOW + EDGE, STEP_HIGH - EDGE),
            mu,
        ));
        regions.push(wall("above", side, &geometry, 0.0, y, (STEP_HIGH + EDGE, 1.6), mu));
    }
    let robot = RobotConfig::wall_climber();
    let start = stance(&robot, &geometry, Vector3::new(0.0, 0.0, 0.3), [0, 0, 0, 3, 3, 3], 0.0);
    let goal = goal_from_offset(&start, Vector3::new(0.0, 0.0, 0.65));
    let weights = PlannerWeights {
        rounds: 6,
        com_step: StepBounds::symmetric(Vector3::new(0.03, 0.05, 0.15)),
        toe_step: StepBounds::symmetric(Vector3::new(0.05, 0.1, 0.15)),
        rot_step: StepBounds::symmetric(Vector3::zeros()),
        ..Default::default()
    };
    base("steps", RegionSet::new(regions), start, goal, weights)
}

/// Workspace margin for the obstacle climb, tighter than the robot default.
pub const OBSTACLE_WORKSPACE_MARGIN: f64 = 0.18;

/// Parallel walls split into lower, middle and upper rectangles, the middle
/// one shifted forward around an obstacle.
pub fn scenario_obstacle() -> WallScenario {
    let mu = 1.0;
    let geometry = WallGeometry {
        gap: DEFAULT_GAP,
        angle: 0.0,
    };
    let mut regions = Vec::new();
    for side in [Side::Right, Side::Left] {
        regions.push(wall("lower", side, &geometry, 0.0, (-0.6, 0.6), (0.0, 0.55), mu));
        regions.push(wall("middle", side, &geometry, 0.0, (0.05, 0.9), (0.55, 0.95), mu));
        regions.push(wall("upper", side, &geometry, 0.0, (-0.2, 0.9), (0.95, 1.6), mu));
    }
    let robot = RobotConfig::wall_climber();
    let start = stance(&robot, &geometry, Vector3::new(0.0, 0.0, 0.3), [0, 0, 0, 3, 3, 3], 0.0);
    let goal = goal_from_offset(&start, Vector3::new(0.0, 0.35, 0.85));
    let weights = PlannerWeights {
        rounds: 8,
        com_step: StepBounds::symmetric(Vector3::new(0.03, 0.1, 0.15)),
        toe_step: StepBounds::symmetric(Vector3::new(0.05, 0.15, 0.11)),
        rot_step: StepBounds::symmetric(Vector3::repeat(3f64.to_radians())),
        ..Default::default()
    };
    let mut s = base("obstacle", RegionSet::new(regions), start, goal, weights);
    // Keeps the final stance, where the body trails the toes, within torque limits.
    s.robot.workspace_margin = OBSTACLE_WORKSPACE_MARGIN;
    s
}

/// Two walls at horizontal angle `alpha`, converging towards `+y`, with the
/// spacing at the middle legs held at 1.23 m. One climbing round of 0.1 m.
pub fn scenario_angled(alpha: f64, mu: f64) -> WallScenario {
    let geometry = WallGeometry {
        gap: DEFAULT_GAP,
        angle: alpha,
    };
    let regions: Vec<Region> = [Side::Right, Side::Left]
        .into_iter()
        .map(|side| wall("wall", side, &geometry, 0.0, (-0.8, 0.8), (0.0, 1.6), mu))
        .collect();
    let robot = RobotConfig::wall_climber();
    let start = stance(&robot, &geometry, Vector3::new(0.0, 0.0, 0.3), [0, 0, 0, 1, 1, 1], 0.0);
    let goal = goal_from_offset(&start, Vector3::new(0.0, 0.0, 0.1));
    let weights = PlannerWeights {
        rounds: 1,
        com_step: StepBounds::symmetric(Vector3::new(0.03, 0.05, 0.15)),
        toe_step: StepBounds::symmetric(Vector3::new(0.05, 0.1, 0.15)),
        rot_step: StepBounds::symmetric(Vector3::repeat(3f64.to_radians())),
        ..Default::default()
    };
    let mut s = base("angled", RegionSet::new(regions), start, goal, weights).with_mu(mu);
    s.wall_angle = alpha;
    s
}

/// Rotates each wall about a vertical axis so the walls close up by `alpha`
/// towards `+y`. Each side turns rigidly about the point of its wall, at
/// `y = 0`, behind the middle limb's start toe, so the spacing between the
/// middle limbs is kept. Regions, normals, start toes and goal toes move
/// with their wall.
pub fn tilt_walls(s: &WallScenario, alpha: f64) -> WallScenario {
    let mut out = s.clone();
    out.wall_angle += alpha;
    for side in [Side::Right, Side::Left] {
        let phi = match side {
            Side::Right => alpha / 2.0,
            Side::Left => -alpha / 2.0,
        };
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), phi);
        let middle = Limb::ALL
            .into_iter()
            .filter(|l| l.side() == side)
            .min_by(|a, b| {
                s.start.toes[a.index()]
                    .y
                    .abs()
                    .total_cmp(&s.start.toes[b.index()].y.abs())
            })
            .expect("three limbs per side");
        let toe = s.start.toes[middle.index()];
        let n = s.regions.regions[s.start.regions[middle.index()]].normal;
        let pivot = Vector3::new(n.dot(&toe) / n.x, 0.0, 0.0);
        let turn = |p: &Vector3<f64>| rot * (p - pivot) + pivot;
        for r in out.regions.regions.iter_mut().filter(|r| r.side == side) {
            for (a, b) in r.a.iter_mut().zip(r.b.iter_mut()) {
                let ra = rot * *a;
                *b += (ra - *a).dot(&pivot);
                *a = ra;
            }
            r.normal = rot * r.normal;
        }
        for l in Limb::ALL.into_iter().filter(|l| l.side() == side) {
            out.start.toes[l.index()] = turn(&s.start.toes[l.index()]);
            out.goal[l.index()] = turn(&s.goal[l.index()]);
        }
    }
    out
}

/// Looks up a built-in scenario by name.
pub fn builtin(name: &str) -> Option<WallScenario> {
    match name {
        "steps" => Some(scenario_parallel_steps()),
        "obstacle" => Some(scenario_obstacle()),
        "angled" => Some(scenario_angled(20f64.to_radians(), 1.0)),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["steps", "obstacle", "angled"];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_NAMES {
            let s = builtin(name).unwrap();
            s.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn steps_geometry() {
        let s = scenario_parallel_steps();
        assert_eq!(s.regions.len(), 6);
        let step = &s.regions.regions[1];
        let right_plane = step.b[0] / step.normal.x;
        let left_step = &s.regions.regions[4];
        let left_plane = left_step.b[0] / left_step.normal.x;
        assert_relative_eq!(right_plane - left_plane, 1.230 - 2.0 * 0.040, epsilon = 1e-12);
        for r in &s.regions.regions {
            assert!(r.chebyshev_center().unwrap().1 > 0.0);
        }
    }

    #[test]
    fn obstacle_layout() {
        let s = scenario_obstacle();
        assert_eq!(s.regions.len(), 6);
        assert_eq!(s.weights.rounds, 8);
    }

    #[test]
    fn angled_zero_is_parallel() {
        let s = scenario_angled(0.0, 1.0);
        let (nr, nl) = (s.regions.regions[0].normal, s.regions.regions[1].normal);
        assert_relative_eq!(nr, -nl, epsilon = 1e-15);
        assert_relative_eq!(nr, Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn angled_normals_unit_and_horizontal() {
        for deg in [5.0, 20.0, 40.0] {
            let s = scenario_angled(f64::to_radians(deg), 0.8);
            for r in &s.regions.regions {
                assert_relative_eq!(r.normal.norm(), 1.0, epsilon = 1e-15);
                assert_eq!(r.normal.z, 0.0);
                assert_eq!(r.mu, 0.8);
            }
            let (nr, nl) = (s.regions.regions[0].normal, s.regions.regions[1].normal);
            assert_relative_eq!(nr.angle(&-nl), f64::to_radians(deg), epsilon = 1e-12);
            // Middle limbs keep the 1.23 m spacing.
            let gap = s.start.toes[Limb::RM.index()].x - s.start.toes[Limb::LM.index()].x;
            assert_relative_eq!(gap, DEFAULT_GAP, epsilon = 1e-12);
        }
    }

    #[test]
    fn tilting_parallel_walls_matches_angled_generator() {
        let alpha = 20f64.to_radians();
        let tilted = tilt_walls(&scenario_angled(0.0, 1.0), alpha);
        let angled = scenario_angled(alpha, 1.0);
        tilted.validate().unwrap();
        assert_relative_eq!(tilted.wall_angle, alpha);
        for (t, a) in tilted.regions.regions.iter().zip(&angled.regions.regions) {
            assert_relative_eq!(t.normal, a.normal, epsilon = 1e-15);
        }
        for limb in Limb::ALL {
            let i = limb.index();
            // Same wall plane as the generator's.
            let r = &angled.regions.regions[angled.start.regions[i]];
            let on_plane =
                r.a.iter()
                    .zip(&r.b)
                    .any(|(a, b)| (a.dot(&tilted.start.toes[i]) - b).abs() < 1e-12);
            assert!(on_plane, "{limb}");
        }
        let gap = tilted.start.toes[Limb::RM.index()].x - tilted.start.toes[Limb::LM.index()].x;
        assert_relative_eq!(gap, DEFAULT_GAP, epsilon = 1e-12);
    }
}
