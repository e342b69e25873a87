use conic::{propagate, Bounds, ConicProblem, Row};
use proptest::prelude::*;

/// Rows built around a known point: every row is satisfied at `x`, so
/// tightening must keep `x` inside the box.
fn problem_around(x: &[f64], binaries: &[f64], rows: &[(Vec<f64>, f64)]) -> ConicProblem {
    let mut p = ConicProblem::new();
    let mut vars = Vec::new();
    for (i, _) in x.iter().enumerate() {
        vars.push(p.add_var(format!("x{i}"), Bounds::new(-5.0, 5.0)));
    }
    for (i, _) in binaries.iter().enumerate() {
        vars.push(p.add_binary(format!("h{i}")));
    }
    let point: Vec<f64> = x.iter().chain(binaries).copied().collect();
    for (coefs, slack) in rows {
        let lhs: f64 = coefs.iter().zip(&point).map(|(a, v)| a * v).sum();
        p.add_le(Row::new(
            vars.iter().copied().zip(coefs.iter().copied()).collect(),
            lhs + slack,
        ));
    }
    p
}

proptest! {
    #[test]
    fn feasible_point_survives(
        x in prop::collection::vec(-5.0f64..5.0, 3),
        h in prop::collection::vec(prop::bool::ANY, 2),
        rows in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 5), 0.0f64..0.5), 1..6),
    ) {
        let binaries: Vec<f64> = h.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let p = problem_around(&x, &binaries, &rows);
        let mut bounds = p.bounds().to_vec();
        prop_assert!(propagate(&p, &mut bounds));
        for (v, b) in x.iter().chain(&binaries).zip(&bounds) {
            prop_assert!(b.lower - 1e-9 <= *v && *v <= b.upper + 1e-9, "{v} outside {b:?}");
        }
    }
}
