//! Kinematics sampling and finite-difference oracles shared by the
//! kinematics tests and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wallclimb::kinematics::{forward_kinematics, inverse_kinematics, limb_jacobian, JointAngles, LimbGeometry};
use wallclimb::robot::RobotConfig;

/// Toe stays in front of the coxa axis, where the yaw angle is defined.
pub fn in_front(g: &LimbGeometry, q: &JointAngles) -> bool {
    g.coxa_length + g.femur_length * q.femur.cos() + g.tibia_length * (q.femur + q.tibia).cos() > 1e-3
}

/// Knee-down joint sample inside the robot's limits, away from the fully
/// stretched knee.
pub fn sample(rng: &mut ChaCha8Rng) -> JointAngles {
    let limits = RobotConfig::wall_climber().limits;
    loop {
        let q = JointAngles {
            coxa: rng.gen_range(limits.lower[0]..limits.upper[0]),
            femur: rng.gen_range(limits.lower[1]..limits.upper[1]),
            tibia: rng.gen_range(0.05..limits.upper[2]),
        };
        if in_front(&LimbGeometry::default(), &q) {
            return q;
        }
    }
}

/// Central differences of forward kinematics, `h = 1e-6`.
pub fn fd_jacobian(g: &LimbGeometry, q: &JointAngles) -> [[f64; 3]; 3] {
    let h = 1e-6;
    let mut out = [[0.0; 3]; 3];
    for c in 0..3 {
        let mut a = q.as_array();
        let mut b = q.as_array();
        a[c] += h;
        b[c] -= h;
        let d = (forward_kinematics(g, &JointAngles::from_array(a))
            - forward_kinematics(g, &JointAngles::from_array(b)))
            / (2.0 * h);
        for r in 0..3 {
            out[r][c] = d[r];
        }
    }
    out
}

/// Worst `|FK(IK(p)) - p|` in metres over `count` sampled toes.
pub fn fk_ik_worst(count: usize, seed: u64) -> f64 {
    let g = LimbGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let toe = forward_kinematics(&g, &sample(&mut rng));
        let q = inverse_kinematics(&g, &toe).expect("sampled toe is reachable");
        worst = worst.max((forward_kinematics(&g, &q) - toe).norm());
    }
    worst
}

/// Worst Frobenius error of the analytic Jacobian against finite
/// differences, relative to its norm.
pub fn jacobian_worst(count: usize, seed: u64) -> f64 {
    let g = LimbGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let q = sample(&mut rng);
        let j = limb_jacobian(&g, &q);
        let fd = fd_jacobian(&g, &q);
        let diff: f64 = (0..3)
            .flat_map(|r| (0..3).map(move |c| (r, c)))
            .map(|(r, c)| (j[(r, c)] - fd[r][c]).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(diff / j.norm());
    }
    worst
}
