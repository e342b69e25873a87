//! Activity-based bound tightening over the linear rows of a problem.
//!
//! For a row `Σ a_u x_u <= b`, each variable satisfies
//! `a_v x_v <= b - min Σ_{u≠v} a_u x_u`, with the minimum taken over the
//! current box. Binary bounds are rounded to integers, so fixing one binary
//! can ripple through big-M rows, exactly-one rows and step rows. Cones are
//! not used. The tightened box only removes points that violate some row, so
//! a relaxation over it is still a valid bound.

use crate::problem::{Bounds, ConicProblem, Row};

/// Minimum improvement worth recording for a continuous bound.
const MIN_GAIN: f64 = 1e-7;
/// Slack left on every derived continuous bound.
const SLACK: f64 = 1e-9;
/// Binary bounds within this of an integer round to it.
const INT_TOL: f64 = 1e-6;
const MAX_PASSES: usize = 25;

/// Row minimum activity as a finite part plus a count of infinite terms.
fn min_activity(row: &Row, bounds: &[Bounds]) -> (f64, usize) {
    let mut finite = 0.0;
    let mut infinite = 0;
    for &(v, a) in &row.terms {
        let t = if a > 0.0 {
            a * bounds[v].lower
        } else {
            a * bounds[v].upper
        };
        if t.is_finite() {
            finite += t;
        } else {
            infinite += 1;
        }
    }
    (finite, infinite)
}

/// Tightens `bounds` in place. Returns `false` if some row cannot be
/// satisfied inside the box, in which case the node is infeasible.
pub fn propagate(p: &ConicProblem, bounds: &mut [Bounds]) -> bool {
    let negated: Vec<Row> = p
        .equalities
        .iter()
        .map(|r| Row::new(r.terms.iter().map(|&(v, a)| (v, -a)).collect(), -r.rhs))
        .collect();
    let rows: Vec<&Row> = p
        .inequalities
        .iter()
        .chain(p.equalities.iter())
        .chain(negated.iter())
        .collect();

    for _ in 0..MAX_PASSES {
        let mut changed = false;
        for row in &rows {
            let (finite, infinite) = min_activity(row, bounds);
            if infinite == 0 && finite > row.rhs + 1e-9 * (1.0 + row.rhs.abs()) {
                return false;
            }
            if infinite > 1 {
                continue;
            }
            for &(v, a) in &row.terms {
                let own = if a > 0.0 {
                    a * bounds[v].lower
                } else {
                    a * bounds[v].upper
                };
                let rest = match (infinite, own.is_finite()) {
                    (0, _) => finite - own,
                    (1, false) => finite,
                    _ => continue,
                };
                // a x_v <= rhs - rest
                let limit = (row.rhs - rest) / a;
                let b = &mut bounds[v];
                if p.is_binary(v) {
                    if a > 0.0 && limit < b.upper {
                        let u = (limit + INT_TOL).floor();
                        if u < b.upper {
                            b.upper = u;
                            changed = true;
                        }
                    } else if a < 0.0 && limit > b.lower {
                        let l = (limit - INT_TOL).ceil();
                        if l > b.lower {
                            b.lower = l;
                            changed = true;
                        }
                    }
                } else if a > 0.0 {
                    let u = limit + SLACK * (1.0 + limit.abs());
                    if u < b.upper - MIN_GAIN {
                        b.upper = u;
                        changed = true;
                    }
                } else {
                    let l = limit - SLACK * (1.0 + limit.abs());
                    if l > b.lower + MIN_GAIN {
                        b.lower = l;
                        changed = true;
                    }
                }
                if b.lower > b.upper {
                    if b.lower - b.upper <= 1e-9 * (1.0 + b.upper.abs()) && !p.is_binary(v) {
                        let mid = 0.5 * (b.lower + b.upper);
                        *b = Bounds::fixed(mid);
                    } else {
                        return false;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    true
}
