//! Slow independent oracles shared by the solver tests and the workspace
//! acceptance suite.

use conic::{solve_continuous, solve_micp, Bounds, ConicProblem, Row, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Box-constrained QP `xᵀQx + cᵀx` with `Q = MᵀM + I/2`.
pub struct BoxQp {
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxQp {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.gen_range(2..=6);
        let m: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                q[i][j] = (0..n).map(|k| m[k][i] * m[k][j]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
            }
        }
        let c = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..0.0)).collect();
        let hi = lo.iter().map(|l| l + rng.gen_range(0.2..3.0)).collect();
        Self { q, c, lo, hi }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut v = 0.0;
        for i in 0..n {
            v += self.c[i] * x[i];
            for j in 0..n {
                v += self.q[i][j] * x[i] * x[j];
            }
        }
        v
    }

    /// Projected gradient with step `1/L`, `L = 2 ‖Q‖_F`.
    pub fn projected_gradient(&self) -> Vec<f64> {
        let n = self.c.len();
        let lipschitz = 2.0 * self.q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let step = 1.0 / lipschitz;
        let mut x: Vec<f64> = (0..n).map(|i| 0.5 * (self.lo[i] + self.hi[i])).collect();
        for _ in 0..200_000 {
            let grad: Vec<f64> = (0..n)
                .map(|i| self.c[i] + 2.0 * (0..n).map(|j| self.q[i][j] * x[j]).sum::<f64>())
                .collect();
            let mut moved = 0.0f64;
            for i in 0..n {
                let next = (x[i] - step * grad[i]).clamp(self.lo[i], self.hi[i]);
                moved = moved.max((next - x[i]).abs());
                x[i] = next;
            }
            if moved < 1e-14 {
                break;
            }
        }
        x
    }

    pub fn problem(&self) -> ConicProblem {
        let n = self.c.len();
        let mut p = ConicProblem::new();
        let v: Vec<_> = (0..n)
            .map(|i| p.add_var(format!("x{i}"), Bounds::new(self.lo[i], self.hi[i])))
            .collect();
        for i in 0..n {
            p.objective.add_linear(v[i], self.c[i]);
            for j in i..n {
                let coef = if i == j { self.q[i][i] } else { 2.0 * self.q[i][j] };
                p.objective.add_product(v[i], v[j], coef);
            }
        }
        p
    }
}

/// Solves `count` random box QPs and returns the worst objective or
/// coordinate deviation from projected gradient.
pub fn box_qp_deviation(count: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for k in 0..count {
        let qp = BoxQp::random(&mut rng);
        let oracle = qp.projected_gradient();
        let r = solve_continuous(&qp.problem()).map_err(|e| format!("qp {k}: {e}"))?;
        if r.status != Status::Optimal {
            return Err(format!("qp {k}: {:?}", r.status));
        }
        let x = r.primal.unwrap();
        worst = worst.max((r.objective.unwrap() - qp.value(&oracle)).abs());
        for (a, b) in x.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Points choosing one box each, with a knapsack row over the choices.
/// Given the choices, each point's best position is its goal clamped to the
/// box, so enumeration needs no solver.
pub struct Assignment {
    goals: Vec<[f64; 2]>,
    /// `boxes[r] = (lo, hi)`
    boxes: Vec<([f64; 2], [f64; 2])>,
    cost: Vec<Vec<f64>>,
    weight: Vec<Vec<f64>>,
    capacity: f64,
}

pub const BIG_M: f64 = 40.0;

impl Assignment {
    pub fn random(rng: &mut ChaCha8Rng, points: usize, boxes: usize) -> Self {
        Self {
            goals: (0..points)
                .map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)])
                .collect(),
            boxes: (0..boxes)
                .map(|_| {
                    let lo = [rng.gen_range(-6.0..4.0), rng.gen_range(-6.0..4.0)];
                    (lo, [lo[0] + rng.gen_range(0.5..3.0), lo[1] + rng.gen_range(0.5..3.0)])
                })
                .collect(),
            cost: (0..points)
                .map(|_| (0..boxes).map(|_| rng.gen_range(0.0..3.0)).collect())
                .collect(),
            weight: (0..points)
                .map(|_| (0..boxes).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect(),
            capacity: 0.45 * points as f64,
        }
    }

    pub fn enumerate(&self) -> Option<f64> {
        let (t, r) = (self.goals.len(), self.boxes.len());
        let mut best: Option<f64> = None;
        for code in 0..r.pow(t as u32) {
            let choice: Vec<usize> = (0..t).map(|i| code / r.pow(i as u32) % r).collect();
            let load: f64 = choice.iter().enumerate().map(|(i, &b)| self.weight[i][b]).sum();
            if load > self.capacity {
                continue;
            }
            let value: f64 = choice
                .iter()
                .enumerate()
                .map(|(i, &b)| {
                    let (lo, hi) = self.boxes[b];
                    let d: f64 = (0..2)
                        .map(|k| {
                            let g = self.goals[i][k];
                            (g - g.clamp(lo[k], hi[k])).powi(2)
                        })
                        .sum();
                    d + self.cost[i][b]
                })
                .sum();
            best = Some(best.map_or(value, |v: f64| v.min(value)));
        }
        best
    }

    pub fn problem(&self) -> ConicProblem {
        let mut p = ConicProblem::new();
        let mut knapsack = Vec::new();
        for (i, g) in self.goals.iter().enumerate() {
            let x: Vec<_> = (0..2)
                .map(|k| p.add_var(format!("x{i}.{k}"), Bounds::new(-10.0, 10.0)))
                .collect();
            for k in 0..2 {
                p.objective.add_product(x[k], x[k], 1.0);
                p.objective.add_linear(x[k], -2.0 * g[k]);
                p.objective.constant += g[k] * g[k];
            }
            let h: Vec<_> = (0..self.boxes.len())
                .map(|b| p.add_binary(format!("h{i}.{b}")))
                .collect();
            p.add_eq(Row::new(h.iter().map(|&v| (v, 1.0)).collect(), 1.0));
            for (b, (lo, hi)) in self.boxes.iter().enumerate() {
                p.objective.add_linear(h[b], self.cost[i][b]);
                knapsack.push((h[b], self.weight[i][b]));
                for k in 0..2 {
                    // x <= hi + M (1 - h),  -x <= -lo + M (1 - h)
                    p.add_le(Row::new(vec![(x[k], 1.0), (h[b], BIG_M)], hi[k] + BIG_M));
                    p.add_le(Row::new(vec![(x[k], -1.0), (h[b], BIG_M)], -lo[k] + BIG_M));
                }
            }
        }
        p.add_le(Row::new(knapsack, self.capacity));
        p
    }
}

/// Toy shapes `(points, boxes)`, each with at most 12 binaries.
pub const TOY_SHAPES: [(usize, usize); 8] = [(1, 2), (1, 5), (2, 3), (3, 2), (2, 6), (3, 4), (4, 3), (6, 2)];

#[derive(Debug, Clone, Copy, Default)]
pub struct ToySummary {
    pub feasible: usize,
    pub infeasible: usize,
    pub max_binaries: usize,
}

/// Solves `count` assignment toys by branch and bound and compares each
/// with enumeration.
pub fn branch_and_bound_vs_enumeration(count: usize, seed: u64) -> Result<ToySummary, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = ToySummary::default();
    for (n, &(points, boxes)) in TOY_SHAPES.iter().cycle().take(count).enumerate() {
        let toy = Assignment::random(&mut rng, points, boxes);
        let p = toy.problem();
        summary.max_binaries = summary.max_binaries.max(p.num_binaries());
        let r = solve_micp(&p).map_err(|e| format!("toy {n}: {e}"))?;
        match toy.enumerate() {
            Some(best) => {
                summary.feasible += 1;
                if r.status != Status::Optimal {
                    return Err(format!("toy {n}: {:?}, enumeration found {best}", r.status));
                }
                let obj = r.objective.unwrap();
                if (obj - best).abs() > 1e-6 * (1.0 + best.abs()) {
                    return Err(format!("toy {n}: {obj} vs {best}"));
                }
                let incumbents = &r.stats.branch.as_ref().unwrap().incumbents;
                if !incumbents.windows(2).all(|w| w[1] <= w[0]) {
                    return Err(format!("toy {n}: incumbents not monotone {incumbents:?}"));
                }
            }
            None => {
                summary.infeasible += 1;
                if r.status != Status::Infeasible {
                    return Err(format!("toy {n}: {:?}, enumeration found none", r.status));
                }
            }
        }
    }
    Ok(summary)
}
