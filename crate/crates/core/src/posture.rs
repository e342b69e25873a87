//! Multi-round posture planning as a mixed-integer convex program.
//!
//! Round `j = 1..M` has 24 continuous variables (COM, body angles, six toes)
//! and one binary `H[j][i][r]` per toe and region. Per round the program
//! holds elementwise step boxes on the COM, body angles and toes, a
//! reachability cone per limb using the first-order rotation `I + skew(θ)`,
//! big-M region rows with an exactly-one row per toe, and the cost
//!
//! ```text
//! Σ_i (p_i[M] − g_i)ᵀ W_g (p_i[M] − g_i)
//!   + Σ_j Δp_COMᵀ W_COM Δp_COM + Δθᵀ W_ROT Δθ + Σ_i Δp_iᵀ W_s Δp_i
//! ```
//!
//! with `Δ` taken against the previous round and round 0 being the start.

use std::collections::BTreeMap;

use conic::{
    big_m_encode, solve_micp_with, solve_relaxation, BigM, Bounds, ConicProblem, LinExpr, MicpSettings, Row,
    SocConstraint, SolveStats, Status, VarId,
};
use nalgebra::{Matrix3, Vector3};

use crate::error::{PostureError, ScenarioError};
use crate::kinematics::{rotation_exact, rotation_linearized, BodyPose};
use crate::region::RegionSet;
use crate::robot::{Limb, RobotConfig, NUM_LIMBS};

pub const VARS_PER_ROUND: usize = 3 + 3 + 3 * NUM_LIMBS;
pub const MAX_ROTATION_DEG: f64 = 20.0;
/// Slack when testing a region box against a toe box.
const BOX_TOL: f64 = 1e-9;
/// Added to each support value so solver round-off never trims a region.
const HULL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posture {
    pub round: usize,
    pub p_com: Vector3<f64>,
    pub theta_b: Vector3<f64>,
    pub toes: [Vector3<f64>; NUM_LIMBS],
    pub regions: [usize; NUM_LIMBS],
}

impl Posture {
    pub fn body(&self) -> BodyPose {
        BodyPose::new(self.p_com, self.theta_b)
    }

    /// Coxa joint position of `limb` with the first-order rotation.
    pub fn coxa_linearized(&self, robot: &RobotConfig, limb: Limb) -> Vector3<f64> {
        self.p_com + rotation_linearized(&self.theta_b) * robot.limbs[limb.index()].mount_offset
    }

    pub fn coxa_exact(&self, robot: &RobotConfig, limb: Limb) -> Vector3<f64> {
        self.p_com + rotation_exact(&self.theta_b) * robot.limbs[limb.index()].mount_offset
    }
}

/// Elementwise `lower <= Δ <= upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBounds {
    pub lower: Vector3<f64>,
    pub upper: Vector3<f64>,
}

impl StepBounds {
    pub fn new(lower: Vector3<f64>, upper: Vector3<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn symmetric(half: Vector3<f64>) -> Self {
        Self::new(-half, half)
    }

    pub fn margin(&self, delta: &Vector3<f64>) -> f64 {
        (0..3)
            .map(|k| (delta[k] - self.lower[k]).min(self.upper[k] - delta[k]))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerWeights {
    /// Goal weight applied to every toe.
    pub w_goal: Matrix3<f64>,
    pub w_com: Matrix3<f64>,
    pub w_step: Matrix3<f64>,
    pub w_rot: Matrix3<f64>,
    pub com_step: StepBounds,
    pub toe_step: StepBounds,
    pub rot_step: StepBounds,
    /// Bound on each body angle [rad].
    pub rotation_cap: f64,
    pub rounds: usize,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        Self {
            w_goal: Matrix3::identity() * 100.0,
            w_com: Matrix3::identity(),
            w_step: Matrix3::identity(),
            w_rot: Matrix3::identity(),
            com_step: StepBounds::symmetric(Vector3::new(0.05, 0.1, 0.15)),
            toe_step: StepBounds::symmetric(Vector3::new(0.05, 0.1, 0.15)),
            rot_step: StepBounds::symmetric(Vector3::repeat(5f64.to_radians())),
            rotation_cap: MAX_ROTATION_DEG.to_radians(),
            rounds: 4,
        }
    }
}

impl PlannerWeights {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.rounds == 0 {
            return Err(ScenarioError::Malformed("rounds must be at least 1".into()));
        }
        for (name, w) in [
            ("w_goal", &self.w_goal),
            ("w_com", &self.w_com),
            ("w_step", &self.w_step),
            ("w_rot", &self.w_rot),
        ] {
            let sym = (w + w.transpose()) * 0.5;
            if (w - sym).abs().max() > 1e-12 * w.abs().max().max(1.0) || sym.symmetric_eigenvalues().min() < -1e-12 {
                return Err(ScenarioError::Malformed(format!(
                    "{name} must be symmetric positive semidefinite"
                )));
            }
        }
        for (name, b) in [
            ("com_step", &self.com_step),
            ("toe_step", &self.toe_step),
            ("rot_step", &self.rot_step),
        ] {
            if (0..3).any(|k| !(b.upper[k] >= b.lower[k])) {
                return Err(ScenarioError::Malformed(format!(
                    "{name}: upper bound below lower bound"
                )));
            }
        }
        let cap = MAX_ROTATION_DEG.to_radians();
        if !(self.rotation_cap >= 0.0) || self.rotation_cap > cap + 1e-12 {
            return Err(ScenarioError::RotationCap {
                requested_deg: self.rotation_cap.to_degrees(),
                max_deg: MAX_ROTATION_DEG,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerOptions {
    /// Only offer regions on a limb's own wall.
    pub side_filter: bool,
    /// Also keep each toe reachable from the neighbouring round's body pose,
    /// which bounds every interpolated gait instant.
    pub gait_reachability: bool,
    pub big_m: BigM,
    pub micp: MicpSettings,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            side_filter: true,
            gait_reachability: true,
            big_m: BigM::Auto,
            micp: MicpSettings::default(),
        }
    }
}

/// Everything the builder needs.
#[derive(Debug, Clone, Copy)]
pub struct PostureInputs<'a> {
    pub regions: &'a RegionSet,
    pub robot: &'a RobotConfig,
    pub start: &'a Posture,
    pub goal: &'a [Vector3<f64>; NUM_LIMBS],
    pub weights: &'a PlannerWeights,
    pub options: &'a PlannerOptions,
}

/// Variable index arithmetic for a built program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PostureLayout {
    pub rounds: usize,
    pub num_regions: usize,
}

impl PostureLayout {
    /// Rounds are 1-based.
    pub fn com(&self, round: usize, axis: usize) -> VarId {
        (round - 1) * VARS_PER_ROUND + axis
    }

    pub fn theta(&self, round: usize, axis: usize) -> VarId {
        (round - 1) * VARS_PER_ROUND + 3 + axis
    }

    pub fn toe(&self, round: usize, limb: usize, axis: usize) -> VarId {
        (round - 1) * VARS_PER_ROUND + 6 + 3 * limb + axis
    }

    pub fn num_continuous(&self) -> usize {
        self.rounds * VARS_PER_ROUND
    }

    pub fn assignment(&self, round: usize, limb: usize, region: usize) -> VarId {
        self.num_continuous() + ((round - 1) * NUM_LIMBS + limb) * self.num_regions + region
    }
}

#[derive(Debug, Clone)]
pub struct PostureProblem {
    pub problem: ConicProblem,
    pub layout: PostureLayout,
    /// Number of exactly-one assignment rows.
    pub assignment_rows: usize,
}

/// Value at round `j` of an affine quantity: a variable or a start constant.
#[derive(Clone, Copy)]
enum Term {
    Var(VarId),
    Const(f64),
}

impl Term {
    fn add_to(self, e: &mut LinExpr, coef: f64) {
        match self {
            Term::Var(v) => e.add_term(v, coef),
            Term::Const(c) => e.constant += coef * c,
        }
    }
}

struct Accessors<'a> {
    layout: PostureLayout,
    start: &'a Posture,
}

impl Accessors<'_> {
    fn com(&self, j: usize, k: usize) -> Term {
        if j == 0 {
            Term::Const(self.start.p_com[k])
        } else {
            Term::Var(self.layout.com(j, k))
        }
    }

    fn theta(&self, j: usize, k: usize) -> Term {
        if j == 0 {
            Term::Const(self.start.theta_b[k])
        } else {
            Term::Var(self.layout.theta(j, k))
        }
    }

    fn toe(&self, j: usize, i: usize, k: usize) -> Term {
        if j == 0 {
            Term::Const(self.start.toes[i][k])
        } else {
            Term::Var(self.layout.toe(j, i, k))
        }
    }

    fn diff(&self, f: impl Fn(usize, usize) -> Term, j: usize) -> Vec<LinExpr> {
        (0..3)
            .map(|k| {
                let mut e = LinExpr::new();
                f(j, k).add_to(&mut e, 1.0);
                f(j - 1, k).add_to(&mut e, -1.0);
                e
            })
            .collect()
    }

    /// `p_COM[jb] + (I + skew(θ[jb])) v − p_i[jt]`.
    fn reach(&self, jb: usize, jt: usize, i: usize, v: &Vector3<f64>) -> Vec<LinExpr> {
        // skew(θ) v = −skew(v) θ
        let sv = -crate::kinematics::skew(v);
        (0..3)
            .map(|k| {
                let mut e = LinExpr::constant(v[k]);
                self.com(jb, k).add_to(&mut e, 1.0);
                for m in 0..3 {
                    if sv[(k, m)] != 0.0 {
                        self.theta(jb, m).add_to(&mut e, sv[(k, m)]);
                    }
                }
                self.toe(jt, i, k).add_to(&mut e, -1.0);
                e
            })
            .collect()
    }
}

fn matrix_rows(m: &Matrix3<f64>) -> Vec<Vec<f64>> {
    (0..3).map(|r| (0..3).map(|c| m[(r, c)]).collect()).collect()
}

/// Regions a limb may use.
pub fn allowed_regions(regions: &RegionSet, limb: Limb, side_filter: bool) -> Vec<usize> {
    (0..regions.len())
        .filter(|&r| !side_filter || regions.regions[r].side == limb.side())
        .collect()
}

pub fn build_posture_micp(inputs: &PostureInputs) -> Result<PostureProblem, ScenarioError> {
    let PostureInputs {
        regions,
        robot,
        start,
        goal,
        weights,
        options,
    } = *inputs;
    weights.validate()?;
    regions.validate()?;
    let m = weights.rounds;
    let layout = PostureLayout {
        rounds: m,
        num_regions: regions.len(),
    };
    let acc = Accessors { layout, start };

    let region_boxes = regions
        .regions
        .iter()
        .map(|r| r.bounding_box())
        .collect::<Result<Vec<_>, _>>()?;
    let mut limb_boxes = Vec::with_capacity(NUM_LIMBS);
    for limb in Limb::ALL {
        let allowed = allowed_regions(regions, limb, options.side_filter);
        if allowed.is_empty() {
            return Err(ScenarioError::Malformed(format!(
                "no contact region available to {limb}"
            )));
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &r in &allowed {
            let (l, h) = &region_boxes[r];
            lo = lo.inf(l);
            hi = hi.sup(h);
        }
        limb_boxes.push((allowed, lo, hi));
    }

    let mut p = ConicProblem::new();
    let cap = weights.rotation_cap;
    for j in 1..=m {
        let jf = j as f64;
        for (k, axis) in ["x", "y", "z"].iter().enumerate() {
            let lo = start.p_com[k] + jf * weights.com_step.lower[k];
            let hi = start.p_com[k] + jf * weights.com_step.upper[k];
            p.add_var(format!("com[{j}].{axis}"), Bounds::new(lo, hi));
        }
        for (k, axis) in ["roll", "pitch", "yaw"].iter().enumerate() {
            let lo = (start.theta_b[k] + jf * weights.rot_step.lower[k]).max(-cap);
            let hi = (start.theta_b[k] + jf * weights.rot_step.upper[k]).min(cap);
            if lo > hi {
                return Err(ScenarioError::Malformed(format!(
                    "body {axis} at round {j} cannot meet the rotation cap"
                )));
            }
            p.add_var(format!("theta[{j}].{axis}"), Bounds::new(lo, hi));
        }
        for limb in Limb::ALL {
            let i = limb.index();
            let (_, rlo, rhi) = &limb_boxes[i];
            for (k, axis) in ["x", "y", "z"].iter().enumerate() {
                let lo = (start.toes[i][k] + jf * weights.toe_step.lower[k]).max(rlo[k]);
                let hi = (start.toes[i][k] + jf * weights.toe_step.upper[k]).min(rhi[k]);
                if lo > hi {
                    return Err(ScenarioError::Malformed(format!(
                        "{limb} toe cannot reach any region by round {j} within its step bounds"
                    )));
                }
                p.add_var(format!("toe[{j}].{limb}.{axis}"), Bounds::new(lo, hi));
            }
        }
    }
    debug_assert_eq!(p.num_vars(), layout.num_continuous());
    for j in 1..=m {
        for limb in Limb::ALL {
            for r in 0..regions.len() {
                let v = p.add_binary(format!("H[{j}].{limb}.{}", regions.regions[r].name));
                debug_assert_eq!(v, layout.assignment(j, limb.index(), r));
                // Regions outside the limb's side, or beyond what the toe can
                // travel from the start by this round, are ruled out up front.
                let (rlo, rhi) = &region_boxes[r];
                let reachable = (0..3).all(|k| {
                    let b = p.bounds()[layout.toe(j, limb.index(), k)];
                    b.lower <= rhi[k] + BOX_TOL && rlo[k] <= b.upper + BOX_TOL
                });
                if !limb_boxes[limb.index()].0.contains(&r) || !reachable {
                    p.set_bounds(v, Bounds::fixed(0.0));
                }
            }
        }
    }

    // Step boxes between consecutive variable rounds (round 1 is covered by the variable box).
    for j in 2..=m {
        let groups: [(&StepBounds, Vec<LinExpr>); 2] = [
            (&weights.com_step, acc.diff(|j, k| acc.com(j, k), j)),
            (&weights.rot_step, acc.diff(|j, k| acc.theta(j, k), j)),
        ];
        for (b, d) in groups.iter() {
            add_step_rows(&mut p, b, d);
        }
        for i in 0..NUM_LIMBS {
            let d = acc.diff(|j, k| acc.toe(j, i, k), j);
            add_step_rows(&mut p, &weights.toe_step, &d);
        }
    }

    // Reachability.
    for j in 1..=m {
        for limb in Limb::ALL {
            let i = limb.index();
            let v = robot.limbs[i].mount_offset;
            let radius = LinExpr::constant(robot.workspace_radius(limb));
            p.add_soc(SocConstraint::new(acc.reach(j, j, i, &v), radius.clone()));
            if options.gait_reachability {
                p.add_soc(SocConstraint::new(acc.reach(j, j - 1, i, &v), radius.clone()));
                p.add_soc(SocConstraint::new(acc.reach(j - 1, j, i, &v), radius));
            }
        }
    }

    // Region assignment.
    let mut assignment_rows = 0;
    let mut support_cache = BTreeMap::new();
    for j in 1..=m {
        for limb in Limb::ALL {
            let i = limb.index();
            let mut one = Vec::new();
            for r in 0..regions.len() {
                let h = layout.assignment(j, i, r);
                one.push((h, 1.0));
                if p.bounds()[h].upper == 0.0 {
                    continue;
                }
                let region = &regions.regions[r];
                let rows: Vec<Row> = region
                    .a
                    .iter()
                    .zip(&region.b)
                    .map(|(a, &b)| {
                        let terms = (0..3)
                            .filter(|&k| a[k] != 0.0)
                            .map(|k| (layout.toe(j, i, k), a[k]))
                            .collect();
                        Row::new(terms, b)
                    })
                    .collect();
                let enc = big_m_encode(h, &rows, options.big_m, p.bounds())?;
                for row in enc.rows {
                    p.add_le(row);
                }
            }
            add_hull_rows(&mut p, regions, &layout, j, i, &mut support_cache)?;
            p.add_eq(Row::new(one, 1.0));
            assignment_rows += 1;
        }
    }

    // Region pairs too far apart to bridge in t rounds cannot be assigned t
    // rounds apart. Box gaps never exceed the true gap, so these rows are valid.
    for i in 0..NUM_LIMBS {
        for j in 2..=m {
            for t in 1..j {
                for r in 0..regions.len() {
                    for q in 0..regions.len() {
                        let (hr, hq) = (layout.assignment(j - t, i, r), layout.assignment(j, i, q));
                        if r == q || p.bounds()[hr].upper == 0.0 || p.bounds()[hq].upper == 0.0 {
                            continue;
                        }
                        let (rlo, rhi) = &region_boxes[r];
                        let (qlo, qhi) = &region_boxes[q];
                        let tf = t as f64;
                        let apart = (0..3).any(|k| {
                            qlo[k] - rhi[k] > tf * weights.toe_step.upper[k] + BOX_TOL
                                || rlo[k] - qhi[k] > -tf * weights.toe_step.lower[k] + BOX_TOL
                        });
                        if apart {
                            p.add_le(Row::new(vec![(hr, 1.0), (hq, 1.0)], 1.0));
                        }
                    }
                }
            }
        }
    }

    // Objective.
    let wg = matrix_rows(&weights.w_goal);
    for i in 0..NUM_LIMBS {
        let e: Vec<LinExpr> = (0..3)
            .map(|k| LinExpr::var(layout.toe(m, i, k)).plus(-goal[i][k]))
            .collect();
        p.objective.add_weighted_square(&e, &wg);
    }
    let (wc, ws, wr) = (
        matrix_rows(&weights.w_com),
        matrix_rows(&weights.w_step),
        matrix_rows(&weights.w_rot),
    );
    for j in 1..=m {
        p.objective.add_weighted_square(&acc.diff(|j, k| acc.com(j, k), j), &wc);
        p.objective
            .add_weighted_square(&acc.diff(|j, k| acc.theta(j, k), j), &wr);
        for i in 0..NUM_LIMBS {
            p.objective
                .add_weighted_square(&acc.diff(|j, k| acc.toe(j, i, k), j), &ws);
        }
    }
    p.validate()?;
    Ok(PostureProblem {
        problem: p,
        layout,
        assignment_rows,
    })
}

/// Aggregated support rows `d · toe <= Σ_r σ_r(d) H_r` for every face
/// direction `d` of the toe's candidate regions, where `σ_r` is the support
/// function of region `r`. Valid whenever exactly one `H_r` is 1, and much
/// tighter than the big-M rows once the assignment turns fractional.
fn add_hull_rows(
    p: &mut ConicProblem,
    regions: &RegionSet,
    layout: &PostureLayout,
    j: usize,
    i: usize,
    cache: &mut BTreeMap<(usize, usize, usize), f64>,
) -> Result<(), ScenarioError> {
    let active: Vec<usize> = (0..regions.len())
        .filter(|&r| p.bounds()[layout.assignment(j, i, r)].upper > 0.0)
        .collect();
    let mut directions: Vec<(usize, usize, Vector3<f64>)> = Vec::new();
    for &r in &active {
        for (k, a) in regions.regions[r].a.iter().enumerate() {
            let d = a.normalize();
            if !directions.iter().any(|(_, _, e)| (e - d).norm() < 1e-12) {
                directions.push((r, k, d));
            }
        }
    }
    for (r0, k0, d) in directions {
        let mut terms: Vec<(usize, f64)> = (0..3).map(|k| (layout.toe(j, i, k), d[k])).collect();
        let mut bounded = true;
        for &r in &active {
            let sigma = match cache.get(&(r0, k0, r)) {
                Some(&s) => s,
                None => {
                    let s = regions.regions[r].support(&d)?;
                    cache.insert((r0, k0, r), s);
                    s
                }
            };
            if !sigma.is_finite() {
                bounded = false;
                break;
            }
            terms.push((layout.assignment(j, i, r), -(sigma + HULL_SLACK)));
        }
        if bounded {
            p.add_le(Row::new(terms, 0.0));
        }
    }
    Ok(())
}

fn add_step_rows(p: &mut ConicProblem, b: &StepBounds, delta: &[LinExpr]) {
    for k in 0..3 {
        let mut hi = delta[k].clone();
        hi.constant -= b.upper[k];
        p.add_le_expr(&hi);
        let mut lo = LinExpr::new();
        lo.add_expr(&delta[k], -1.0);
        lo.constant += b.lower[k];
        p.add_le_expr(&lo);
    }
}

/// Per-round constraint margins; negative means violated.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMargins {
    pub round: usize,
    pub com_step: f64,
    pub rot_step: f64,
    pub toe_step: f64,
    pub rotation_cap: f64,
    /// Workspace radius minus coxa-to-toe distance, first-order rotation.
    pub reach_linearized: f64,
    /// Same with the exact rotation.
    pub reach_exact: f64,
    /// Smallest margin of any toe in its assigned region.
    pub region: f64,
    /// Toe on a region of the wrong side.
    pub side_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationFlag {
    pub round: usize,
    pub limb: Limb,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostureReport {
    pub rounds: Vec<RoundMargins>,
    /// Reachability violated by more than 1 mm under the exact rotation.
    pub rotation_flags: Vec<RotationFlag>,
}

impl PostureReport {
    pub const FEASIBILITY_TOL: f64 = 1e-6;
    pub const ROTATION_FLAG_TOL: f64 = 1e-3;

    /// All planned constraints hold (the exact-rotation audit is advisory).
    pub fn feasible(&self) -> bool {
        let tol = -Self::FEASIBILITY_TOL;
        self.rounds.iter().all(|r| {
            r.com_step >= tol
                && r.rot_step >= tol
                && r.toe_step >= tol
                && r.rotation_cap >= tol
                && r.reach_linearized >= tol
                && r.region >= tol
                && !r.side_mismatch
        })
    }
}

/// Re-evaluates every posture constraint directly from the postures.
pub fn validate_posture_sequence(
    start: &Posture,
    postures: &[Posture],
    regions: &RegionSet,
    robot: &RobotConfig,
    weights: &PlannerWeights,
) -> PostureReport {
    let mut rounds = Vec::with_capacity(postures.len());
    let mut rotation_flags = Vec::new();
    let mut prev = start;
    for post in postures {
        let com_step = weights.com_step.margin(&(post.p_com - prev.p_com));
        let rot_step = weights.rot_step.margin(&(post.theta_b - prev.theta_b));
        let toe_step = (0..NUM_LIMBS)
            .map(|i| weights.toe_step.margin(&(post.toes[i] - prev.toes[i])))
            .fold(f64::INFINITY, f64::min);
        let rotation_cap = weights.rotation_cap - post.theta_b.abs().max();
        let mut reach_linearized = f64::INFINITY;
        let mut reach_exact = f64::INFINITY;
        let mut region = f64::INFINITY;
        let mut side_mismatch = false;
        for limb in Limb::ALL {
            let i = limb.index();
            let radius = robot.workspace_radius(limb);
            let lin = radius - (post.coxa_linearized(robot, limb) - post.toes[i]).norm();
            let exact = radius - (post.coxa_exact(robot, limb) - post.toes[i]).norm();
            reach_linearized = reach_linearized.min(lin);
            reach_exact = reach_exact.min(exact);
            if -exact > PostureReport::ROTATION_FLAG_TOL {
                rotation_flags.push(RotationFlag {
                    round: post.round,
                    limb,
                    excess: -exact,
                });
            }
            match regions.regions.get(post.regions[i]) {
                Some(r) => {
                    region = region.min(r.margin(&post.toes[i]));
                    side_mismatch |= r.side != limb.side();
                }
                None => region = f64::NEG_INFINITY,
            }
        }
        rounds.push(RoundMargins {
            round: post.round,
            com_step,
            rot_step,
            toe_step,
            rotation_cap,
            reach_linearized,
            reach_exact,
            region,
            side_mismatch,
        });
        prev = post;
    }
    PostureReport { rounds, rotation_flags }
}

#[derive(Debug, Clone)]
pub struct PosturePlan {
    pub postures: Vec<Posture>,
    pub objective: f64,
    /// False when the search stopped at a limit with an incumbent.
    pub proven_optimal: bool,
    pub report: PostureReport,
    pub stats: SolveStats,
}

/// Reads the postures out of a primal point.
pub fn extract_postures(layout: &PostureLayout, x: &[f64]) -> Vec<Posture> {
    (1..=layout.rounds)
        .map(|j| {
            let v3 = |f: &dyn Fn(usize) -> VarId| Vector3::new(x[f(0)], x[f(1)], x[f(2)]);
            let mut toes = [Vector3::zeros(); NUM_LIMBS];
            let mut regions = [0; NUM_LIMBS];
            for i in 0..NUM_LIMBS {
                toes[i] = v3(&|k| layout.toe(j, i, k));
                regions[i] = (0..layout.num_regions)
                    .max_by(|&a, &b| x[layout.assignment(j, i, a)].total_cmp(&x[layout.assignment(j, i, b)]))
                    .unwrap_or(0);
            }
            Posture {
                round: j,
                p_com: v3(&|k| layout.com(j, k)),
                theta_b: v3(&|k| layout.theta(j, k)),
                toes,
                regions,
            }
        })
        .collect()
}

/// Builds and solves the posture program, diagnosing infeasibility by round.
pub fn solve_postures(inputs: &PostureInputs) -> Result<PosturePlan, PostureError> {
    let built = build_posture_micp(inputs)?;
    let result = solve_micp_with(&built.problem, &inputs.options.micp)?;
    let (x, objective, proven_optimal) = match result.status {
        Status::Optimal => (
            result.primal.clone().expect("optimal result carries a point"),
            result.objective.unwrap_or(f64::NAN),
            true,
        ),
        Status::IterationLimit if result.incumbent.is_some() => {
            let (x, obj) = result.incumbent.clone().unwrap();
            log::warn!("posture search stopped at a limit; using the incumbent (objective {obj:.6})");
            (x, obj, false)
        }
        Status::Infeasible => {
            return Err(PostureError::Infeasible {
                round: first_infeasible_round(inputs)?,
            })
        }
        other => {
            return Err(PostureError::Solver(format!(
                "{other:?} without an integer-feasible point"
            )))
        }
    };
    let postures = extract_postures(&built.layout, &x);
    let report = validate_posture_sequence(inputs.start, &postures, inputs.regions, inputs.robot, inputs.weights);
    for flag in &report.rotation_flags {
        log::warn!(
            "round {} {}: exact-rotation reach exceeds the workspace ball by {:.4} m",
            flag.round,
            flag.limb,
            flag.excess
        );
    }
    Ok(PosturePlan {
        postures,
        objective,
        proven_optimal,
        report,
        stats: result.stats,
    })
}

/// Smallest `k` such that rounds `1..=k` admit no plan: continuous
/// relaxations first, then the mixed-integer truncations.
pub fn first_infeasible_round(inputs: &PostureInputs) -> Result<usize, PostureError> {
    let m = inputs.weights.rounds;
    let truncated = |k: usize| -> Result<PostureProblem, PostureError> {
        let weights = PlannerWeights {
            rounds: k,
            ..inputs.weights.clone()
        };
        Ok(build_posture_micp(&PostureInputs {
            weights: &weights,
            ..*inputs
        })?)
    };
    for k in 1..=m {
        let r = solve_relaxation(&truncated(k)?.problem)?;
        if r.status == Status::Infeasible {
            return Ok(k);
        }
    }
    for k in 1..=m {
        let r = solve_micp_with(&truncated(k)?.problem, &inputs.options.micp)?;
        if r.status == Status::Infeasible {
            return Ok(k);
        }
    }
    Ok(m)
}
