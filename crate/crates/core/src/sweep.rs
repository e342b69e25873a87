//! Feasibility map over wall angle and friction.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ForceError, PipelineError, PostureError, ScenarioError};
use crate::pipeline::plan_pipeline;
use crate::scenario::{tilt_walls, WallScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibilityLabel {
    Feasible,
    /// The contact forces cannot hold the robot within friction and torque.
    ForceFail,
    /// No posture, or a stance the limbs cannot reach.
    KinematicFail,
}

impl FeasibilityLabel {
    pub fn name(self) -> &'static str {
        match self {
            FeasibilityLabel::Feasible => "feasible",
            FeasibilityLabel::ForceFail => "force-fail",
            FeasibilityLabel::KinematicFail => "kinematic-fail",
        }
    }
}

impl fmt::Display for FeasibilityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCell {
    /// Wall angle [rad].
    pub alpha: f64,
    pub mu: f64,
    pub label: FeasibilityLabel,
    /// Why the cell failed.
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Plan every round of the template instead of one.
    pub full: bool,
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Parses `start:end:count`.
pub fn parse_range(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(format!("expected start:end:count, got {text:?}"));
    };
    let a: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    let n: usize = n.trim().parse().map_err(|e| format!("{n:?}: {e}"))?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(format!("empty or non-finite range {text:?}"));
    }
    Ok(linspace(a, b, n))
}

/// Scenario for one cell: the template's walls turned to `alpha`, every
/// region at friction `mu`, and a single round unless `full`.
pub fn cell_scenario(template: &WallScenario, alpha: f64, mu: f64, options: SweepOptions) -> WallScenario {
    let mut s = tilt_walls(template, alpha - template.wall_angle).with_mu(mu);
    if !options.full {
        s.weights.rounds = 1;
    }
    s
}

pub fn classify(result: &Result<(), PipelineError>) -> (FeasibilityLabel, Option<String>) {
    use FeasibilityLabel::*;
    let Err(e) = result else {
        return (Feasible, None);
    };
    let label = match e {
        PipelineError::Posture(PostureError::Infeasible { .. })
        | PipelineError::Scenario(ScenarioError::Malformed(_))
        | PipelineError::Force(ForceError::Kinematics { .. })
        | PipelineError::Force(ForceError::Stiffness { .. }) => KinematicFail,
        _ => ForceFail,
    };
    (label, Some(e.to_string()))
}

/// Runs every `(alpha, mu)` cell. Cells are independent and run in
/// parallel; the output is ordered by alpha index, then mu index.
pub fn feasibility_sweep(
    alphas: &[f64],
    mus: &[f64],
    template: &WallScenario,
    options: SweepOptions,
) -> Vec<FeasibilityCell> {
    let grid: Vec<(f64, f64)> = alphas.iter().flat_map(|&a| mus.iter().map(move |&m| (a, m))).collect();
    grid.par_iter()
        .map(|&(alpha, mu)| {
            let s = cell_scenario(template, alpha, mu, options);
            let (label, reason) = classify(&plan_pipeline(&s).map(|_| ()));
            log::debug!("sweep cell alpha {alpha:.4} mu {mu:.4}: {label}");
            FeasibilityCell {
                alpha,
                mu,
                label,
                reason,
            }
        })
        .collect()
}

/// Cells `(alpha index, mu index)` that are infeasible although a smaller
/// friction at the same angle was feasible. Expects the ordering of
/// [`feasibility_sweep`] and mus in increasing order.
pub fn monotonicity_violations(cells: &[FeasibilityCell], num_mu: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if num_mu == 0 {
        return out;
    }
    for (ai, row) in cells.chunks(num_mu).enumerate() {
        let mut seen_feasible = false;
        for (mi, cell) in row.iter().enumerate() {
            if cell.label == FeasibilityLabel::Feasible {
                seen_feasible = true;
            } else if seen_feasible {
                out.push((ai, mi));
            }
        }
    }
    out
}

/// CSV with header `alpha_deg,mu,label`.
pub fn sweep_csv(cells: &[FeasibilityCell]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["alpha_deg", "mu", "label"]).expect("writing to memory");
    for c in cells {
        w.write_record([
            format!("{}", c.alpha.to_degrees()),
            format!("{}", c.mu),
            c.label.name().to_string(),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("CSV output is UTF-8")
}

/// Text map: one row per alpha, one character per mu
/// (`#` feasible, `f` force-fail, `k` kinematic-fail).
pub fn sweep_map(cells: &[FeasibilityCell], num_mu: usize) -> String {
    let mut out = String::new();
    for row in cells.chunks(num_mu.max(1)) {
        out.push_str(&format!("{:>7.2}° ", row[0].alpha.to_degrees()));
        for c in row {
            out.push(match c.label {
                FeasibilityLabel::Feasible => '#',
                FeasibilityLabel::ForceFail => 'f',
                FeasibilityLabel::KinematicFail => 'k',
            });
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_range("2:5:1").unwrap(), vec![2.0]);
        assert!(parse_range("0:1").is_err());
        assert!(parse_range("0:1:0").is_err());
    }

    fn cell(label: FeasibilityLabel) -> FeasibilityCell {
        FeasibilityCell {
            alpha: 0.0,
            mu: 0.0,
            label,
            reason: None,
        }
    }

    #[test]
    fn monotonicity_flags_feasible_then_fail() {
        use FeasibilityLabel::*;
        let cells: Vec<_> = [ForceFail, Feasible, Feasible, Feasible, ForceFail, KinematicFail]
            .into_iter()
            .map(cell)
            .collect();
        assert!(monotonicity_violations(&cells[..3], 3).is_empty());
        assert_eq!(monotonicity_violations(&cells, 3), vec![(1, 1), (1, 2)]);
    }
}
