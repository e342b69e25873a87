//! Big-M encoding of indicator-activated linear rows.
//!
//! For an indicator `h ∈ {0, 1}` and rows `a_k · x <= b_k`, the encoding emits
//!
//! ```text
//! a_k · x + M_k h <= b_k + M_k
//! ```
//!
//! which is the original row when `h = 1` and is relaxed by `M_k` when `h = 0`.
//! `M_k` is taken per row from interval arithmetic over the variable boxes
//! unless a fixed value is supplied.

use crate::error::ConicError;
use crate::problem::{Bounds, Row, VarId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BigM {
    /// Smallest valid value per row from the variable boxes.
    Auto,
    /// The same value for every row.
    Fixed(f64),
}

/// A fixed big-M that box analysis shows to be too small for one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsufficientBigM {
    pub row: usize,
    pub required: f64,
    pub given: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BigMEncoding {
    pub rows: Vec<Row>,
    /// The `M` used for each input row.
    pub big_m: Vec<f64>,
    pub warnings: Vec<InsufficientBigM>,
}

/// Upper end of `Σ coef·x` over the box, by interval arithmetic.
pub fn interval_max(terms: &[(VarId, f64)], bounds: &[Bounds]) -> f64 {
    terms
        .iter()
        .map(|&(v, c)| {
            let b = bounds[v];
            if c >= 0.0 {
                c * b.upper
            } else {
                c * b.lower
            }
        })
        .sum()
}

/// Largest amount by which `row` can be violated over the box (0 if never).
pub fn required_big_m(row: &Row, bounds: &[Bounds]) -> f64 {
    (interval_max(&row.terms, bounds) - row.rhs).max(0.0)
}

pub fn big_m_encode(
    indicator: VarId,
    rows: &[Row],
    big_m: BigM,
    bounds: &[Bounds],
) -> Result<BigMEncoding, ConicError> {
    let mut out = BigMEncoding {
        rows: Vec::with_capacity(rows.len()),
        big_m: Vec::with_capacity(rows.len()),
        warnings: Vec::new(),
    };
    for (k, row) in rows.iter().enumerate() {
        if row.terms.iter().any(|&(v, _)| v == indicator) {
            return Err(ConicError::Malformed(format!(
                "big-M row {k} already contains its indicator"
            )));
        }
        let unbounded = row.terms.iter().find(|&&(v, c)| {
            let b = bounds[v];
            (c > 0.0 && !b.upper.is_finite()) || (c < 0.0 && !b.lower.is_finite())
        });
        let required = match unbounded {
            Some(&(var, _)) => {
                if let BigM::Auto = big_m {
                    return Err(ConicError::UnboundedBigM { row: k, var });
                }
                f64::INFINITY
            }
            None => required_big_m(row, bounds),
        };
        let m = match big_m {
            BigM::Auto => required,
            BigM::Fixed(m) => {
                if m < required {
                    log::warn!("big-M {m} for row {k} is below the required {required}");
                    out.warnings.push(InsufficientBigM {
                        row: k,
                        required,
                        given: m,
                    });
                }
                m
            }
        };
        let mut terms = row.terms.clone();
        terms.push((indicator, m));
        out.rows.push(Row::new(terms, row.rhs + m));
        out.big_m.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxes() -> Vec<Bounds> {
        vec![
            Bounds::new(-1.0, 2.0),
            Bounds::new(0.0, 3.0),
            Bounds::new(0.0, 1.0), // indicator
        ]
    }

    #[test]
    fn active_indicator_recovers_rows() {
        let rows = vec![Row::new(vec![(0, 1.0), (1, -2.0)], 0.5)];
        let enc = big_m_encode(2, &rows, BigM::Auto, &boxes()).unwrap();
        let x = [0.7, 0.4, 1.0];
        let original = rows[0].lhs(&x) - rows[0].rhs;
        let encoded = enc.rows[0].lhs(&x) - enc.rows[0].rhs;
        assert!((original - encoded).abs() < 1e-15);
    }

    #[test]
    fn inactive_indicator_slackens_by_m() {
        let rows = vec![Row::new(vec![(0, 1.0)], 0.0)];
        let enc = big_m_encode(2, &rows, BigM::Fixed(10.0), &boxes()).unwrap();
        let x = [0.3, 0.0, 0.0];
        let encoded_slack = enc.rows[0].rhs - enc.rows[0].lhs(&x);
        let original_slack = rows[0].rhs - rows[0].lhs(&x);
        assert!((encoded_slack - original_slack - 10.0).abs() < 1e-15);
    }

    #[test]
    fn auto_matches_interval_oracle() {
        // 3 x0 - x1 <= 1 over x0 in [-1, 2], x1 in [0, 3]: max lhs = 6 - 0 = 6.
        let rows = vec![Row::new(vec![(0, 3.0), (1, -1.0)], 1.0), Row::new(vec![(0, -1.0)], 5.0)];
        let enc = big_m_encode(2, &rows, BigM::Auto, &boxes()).unwrap();
        assert_eq!(enc.big_m, vec![5.0, 0.0]);
        assert!(enc.warnings.is_empty());
    }

    #[test]
    fn small_fixed_m_warns() {
        let rows = vec![Row::new(vec![(1, 1.0)], 0.0)];
        let enc = big_m_encode(2, &rows, BigM::Fixed(1.0), &boxes()).unwrap();
        assert_eq!(
            enc.warnings,
            vec![InsufficientBigM {
                row: 0,
                required: 3.0,
                given: 1.0
            }]
        );
    }

    #[test]
    fn auto_needs_finite_box() {
        let bounds = vec![Bounds::FREE, Bounds::new(0.0, 1.0)];
        let rows = vec![Row::new(vec![(0, 1.0)], 0.0)];
        assert_eq!(
            big_m_encode(1, &rows, BigM::Auto, &bounds),
            Err(ConicError::UnboundedBigM { row: 0, var: 0 })
        );
    }
}
