use conic::{solve_continuous, LinExpr, Row, Status};
use nalgebra::Vector3;

use wallclimb::force::{
    build_force_program_with, gait_instants, layout, solve_force_plan, ForceSettings, GaitInstant, ProgramFamilies,
};
use wallclimb::pipeline::posture_inputs;
use wallclimb::posture::solve_postures;
use wallclimb::robot::RobotConfig;
use wallclimb::scenario::scenario_angled;

/// Instants of the first round of the 20° angled climb.
fn angled_instants() -> (Vec<GaitInstant>, RobotConfig) {
    let s = scenario_angled(20f64.to_radians(), 1.0);
    let plan = solve_postures(&posture_inputs(&s)).unwrap();
    let instants = gait_instants(&s.start, &plan.postures[0], &s.gait_order, &s.robot, &s.regions).unwrap();
    (instants, s.robot)
}

fn settings(weight: f64) -> ForceSettings {
    ForceSettings {
        s_mu_floor: 1.8,
        weight,
        tau_max: 26.0,
    }
}

#[test]
fn pushing_harder_trades_torque_margin_for_normal_force() {
    let (instants, robot) = angled_instants();
    let load = robot.gravity_load();
    for inst in [&instants[0], &instants[1], &instants[6]] {
        let mut last: Option<(f64, f64)> = None;
        for w in [0.0, 1e-5, 1e-4, 1e-3, 3e-3, 1e-2, 1e-1] {
            let plan = solve_force_plan(inst, &load, &settings(w)).unwrap();
            let normal: f64 = inst
                .contacts
                .iter()
                .map(|l| inst.normals[l.index()].dot(&plan.forces[l.index()]))
                .sum();
            if let Some((n0, s0)) = last {
                assert!(
                    normal >= n0 - 1e-6 * n0.abs().max(1.0),
                    "instant {} w {w}: {normal} < {n0}",
                    inst.index
                );
                assert!(
                    plan.safety.s_tau <= s0 + 1e-6,
                    "instant {} w {w}: S_tau rose",
                    inst.index
                );
            }
            last = Some((normal, plan.safety.s_tau));
        }
    }
}

/// Same program with each friction cone replaced by an 8-facet pyramid,
/// built here from its own tangent directions. The inner pyramid is
/// inscribed in the cone, the outer one circumscribes it.
fn pyramid_objective(inst: &GaitInstant, robot: &RobotConfig, s: &ForceSettings, inner: bool) -> f64 {
    let mut p = build_force_program_with(
        inst,
        &robot.gravity_load(),
        s,
        ProgramFamilies {
            torque: true,
            cone: false,
        },
    );
    let facets = 8;
    let shrink = if inner {
        (std::f64::consts::PI / facets as f64).cos()
    } else {
        1.0
    };
    for limb in &inst.contacts {
        let i = limb.index();
        let n = inst.normals[i];
        let slope = inst.mu[i] / s.s_mu_floor;
        let helper = if n.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
        let t1 = n.cross(&helper).normalize();
        let t2 = n.cross(&t1);
        for k in 0..facets {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / facets as f64;
            let d = t1 * phi.cos() + t2 * phi.sin();
            // dᵀ f <= slope shrink nᵀ f
            let row = d - n * (slope * shrink);
            let mut e = LinExpr::new();
            for c in 0..3 {
                e.add_term(layout::force(i, c), row[c]);
            }
            p.add_le(Row::from_expr(&e));
        }
        let mut e = LinExpr::new();
        for c in 0..3 {
            e.add_term(layout::force(i, c), -n[c]);
        }
        p.add_le(Row::from_expr(&e));
    }
    let r = solve_continuous(&p).unwrap();
    assert_eq!(r.status, Status::Optimal);
    r.objective.unwrap()
}

#[test]
fn cone_program_agrees_with_pyramid_lp() {
    let (instants, robot) = angled_instants();
    for w in [0.0, 1e-3] {
        let s = settings(w);
        for inst in &instants {
            let cone = solve_force_plan(inst, &robot.gravity_load(), &s).unwrap().objective;
            let inner = pyramid_objective(inst, &robot, &s, true);
            let outer = pyramid_objective(inst, &robot, &s, false);
            let slack = 1e-7 * (1.0 + cone.abs());
            assert!(
                outer <= cone + slack && cone <= inner + slack,
                "instant {} w {w}: {outer} {cone} {inner}",
                inst.index
            );
        }
    }
    // Full stance right after the first step.
    let s = settings(1e-3);
    let stance = &instants[1];
    assert_eq!(stance.contacts.len(), 6);
    let cone = solve_force_plan(stance, &robot.gravity_load(), &s).unwrap().objective;
    for inner in [true, false] {
        let lp = pyramid_objective(stance, &robot, &s, inner);
        assert!((lp - cone).abs() <= 0.02 * cone.abs(), "inner {inner}: {lp} vs {cone}");
    }
}

#[test]
fn repeated_solves_agree() {
    let (instants, robot) = angled_instants();
    for inst in &instants {
        let a = solve_force_plan(inst, &robot.gravity_load(), &settings(1e-3)).unwrap();
        let b = solve_force_plan(inst, &robot.gravity_load(), &settings(1e-3)).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-9);
        assert_eq!(a.forces, b.forces);
    }
}
