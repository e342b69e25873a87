//! Continuous solves through the Clarabel interior-point backend.

use std::time::{Duration, Instant};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::error::ConicError;
use crate::problem::{Bounds, ConicProblem};

/// Sparse `(column, coefficient)` terms and a constant.
type SparseRow = (Vec<(usize, f64)>, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

/// Residuals reported by the backend at termination (all scaled/relative).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: u32,
    pub wall_time: Duration,
    pub kkt: KktResiduals,
    /// Backend terminated at its reduced-accuracy tolerances.
    pub reduced_accuracy: bool,
    /// Populated by the branch-and-bound driver.
    pub branch: Option<BranchStats>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BranchStats {
    pub nodes: usize,
    pub relaxations: usize,
    pub numerical_failures: usize,
    /// Objective of each new incumbent in the order found.
    pub incumbents: Vec<f64>,
    pub best_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: Status,
    /// Primal point; present iff `status == Optimal`.
    pub primal: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Best integer-feasible point found when branch-and-bound stopped early.
    pub incumbent: Option<(Vec<f64>, f64)>,
    pub stats: SolveStats,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub(crate) fn without_point(status: Status, stats: SolveStats) -> Self {
        Self {
            status,
            primal: None,
            objective: None,
            incumbent: None,
            stats,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iter: u32,
    pub tol_feas: f64,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_feas: 1e-9,
            tol_gap_abs: 1e-9,
            tol_gap_rel: 1e-9,
        }
    }
}

/// Solves a problem without binary variables.
pub fn solve_continuous(p: &ConicProblem) -> Result<SolveResult, ConicError> {
    solve_continuous_with(p, &SolverSettings::default())
}

pub fn solve_continuous_with(p: &ConicProblem, settings: &SolverSettings) -> Result<SolveResult, ConicError> {
    if p.num_binaries() > 0 {
        return Err(ConicError::BinariesPresent(p.num_binaries()));
    }
    p.validate()?;
    Ok(solve_with_bounds(p, p.bounds(), settings))
}

/// Solves the continuous relaxation (binaries in `[0, 1]`) of `p`.
pub fn solve_relaxation(p: &ConicProblem) -> Result<SolveResult, ConicError> {
    p.validate()?;
    Ok(solve_with_bounds(p, p.bounds(), &SolverSettings::default()))
}

/// Row-assembly helper: triplets plus right-hand side for one cone block.
#[derive(Default)]
struct Block {
    rows: Vec<SparseRow>,
}

impl Block {
    fn push(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push((terms, rhs));
    }
}

/// Variables with equal lower and upper bounds are substituted out before the
/// backend sees the problem; `col[v]` is the backend column of a free variable.
struct Reduction<'a> {
    bounds: &'a [Bounds],
    col: Vec<Option<usize>>,
    free: Vec<usize>,
}

impl<'a> Reduction<'a> {
    fn new(bounds: &'a [Bounds]) -> Self {
        let mut col = vec![None; bounds.len()];
        let mut free = Vec::new();
        for (v, b) in bounds.iter().enumerate() {
            if !b.is_fixed() {
                col[v] = Some(free.len());
                free.push(v);
            }
        }
        Self { bounds, col, free }
    }

    /// Free terms in backend columns, plus the constant from fixed variables.
    fn split(&self, terms: &[(usize, f64)]) -> (Vec<(usize, f64)>, f64) {
        let mut out = Vec::with_capacity(terms.len());
        let mut constant = 0.0;
        for &(v, c) in terms {
            match self.col[v] {
                Some(j) => out.push((j, c)),
                None => constant += c * self.bounds[v].lower,
            }
        }
        (out, constant)
    }

    /// Largest value of `Σ c x` over the box, if finite.
    fn max_activity(&self, terms: &[(usize, f64)]) -> f64 {
        terms
            .iter()
            .map(|&(v, c)| {
                let b = self.bounds[v];
                if c > 0.0 {
                    c * b.upper
                } else {
                    c * b.lower
                }
            })
            .sum()
    }

    fn expand(&self, y: &[f64]) -> Vec<f64> {
        self.bounds
            .iter()
            .enumerate()
            .map(|(v, b)| match self.col[v] {
                Some(j) => y[j],
                None => b.lower,
            })
            .collect()
    }
}

/// Row residuals below this (scaled by `1 + |rhs|`) count as satisfied when
/// a row has no free variables left.
const FIXED_ROW_TOL: f64 = 1e-9;

/// Solves `p` treating every variable as continuous, with `bounds` in place of
/// the problem's own bounds. Assumes `p` was validated.
pub(crate) fn solve_with_bounds(p: &ConicProblem, bounds: &[Bounds], settings: &SolverSettings) -> SolveResult {
    let start = Instant::now();
    let red = Reduction::new(bounds);
    let n = red.free.len();
    let infeasible = |start: Instant| {
        SolveResult::without_point(
            Status::Infeasible,
            SolveStats {
                wall_time: start.elapsed(),
                ..SolveStats::default()
            },
        )
    };
    if bounds.iter().any(|b| b.lower > b.upper) {
        return infeasible(start);
    }

    // Clarabel form: A x + s = b, s in K.
    let mut zero = Block::default();
    let mut nonneg = Block::default();
    for row in &p.equalities {
        let (terms, c) = red.split(&row.terms);
        let rhs = row.rhs - c;
        if terms.is_empty() {
            if rhs.abs() > FIXED_ROW_TOL * (1.0 + row.rhs.abs()) {
                return infeasible(start);
            }
            continue;
        }
        zero.push(terms, rhs);
    }
    for row in &p.inequalities {
        if red.max_activity(&row.terms) <= row.rhs {
            continue;
        }
        let (terms, c) = red.split(&row.terms);
        let rhs = row.rhs - c;
        if terms.is_empty() {
            if rhs < -FIXED_ROW_TOL * (1.0 + row.rhs.abs()) {
                return infeasible(start);
            }
            continue;
        }
        nonneg.push(terms, rhs);
    }
    for (j, &v) in red.free.iter().enumerate() {
        let b = bounds[v];
        if b.upper.is_finite() {
            nonneg.push(vec![(j, 1.0)], b.upper);
        }
        if b.lower.is_finite() {
            nonneg.push(vec![(j, -1.0)], -b.lower);
        }
    }

    // Cones with every entry constant are checked here rather than passed on.
    let mut cone_rows: Vec<Vec<SparseRow>> = Vec::new();
    for cone in &p.cones {
        let rows: Vec<SparseRow> = std::iter::once(&cone.bound)
            .chain(cone.vector.iter())
            .map(|e| {
                let (terms, c) = red.split(&e.terms);
                (terms, e.constant + c)
            })
            .collect();
        if rows.iter().all(|r| r.0.is_empty()) {
            let t = rows[0].1;
            let norm = rows[1..].iter().map(|r| r.1 * r.1).sum::<f64>().sqrt();
            if norm > t + FIXED_ROW_TOL * (1.0 + t.abs()) {
                return infeasible(start);
            }
            continue;
        }
        cone_rows.push(rows);
    }

    if n == 0 {
        let x = red.expand(&[]);
        return SolveResult {
            status: Status::Optimal,
            objective: Some(p.objective.eval(&x)),
            primal: Some(x),
            incumbent: None,
            stats: SolveStats {
                wall_time: start.elapsed(),
                ..SolveStats::default()
            },
        };
    }

    let mut ii = Vec::new();
    let mut jj = Vec::new();
    let mut vv = Vec::new();
    let mut rhs = Vec::new();
    let mut push_rows = |block: &Block, rhs: &mut Vec<f64>| {
        for (terms, b) in &block.rows {
            let r = rhs.len();
            for &(v, c) in terms {
                ii.push(r);
                jj.push(v);
                vv.push(c);
            }
            rhs.push(*b);
        }
    };
    push_rows(&zero, &mut rhs);
    push_rows(&nonneg, &mut rhs);
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if !zero.rows.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(zero.rows.len()));
    }
    if !nonneg.rows.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(nonneg.rows.len()));
    }
    for rows in &cone_rows {
        // s = b - A x = (t(x), e_1(x), ...): row gets -coef, rhs gets the constant.
        for (terms, constant) in rows {
            let r = rhs.len();
            for &(j, c) in terms {
                ii.push(r);
                jj.push(j);
                vv.push(-c);
            }
            rhs.push(*constant);
        }
        cones.push(SupportedConeT::SecondOrderConeT(rows.len()));
    }
    let m = rhs.len();
    let a = CscMatrix::new_from_triplets(m, n, ii, jj, vv);

    let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    let mut q = vec![0.0; n];
    for (&(i, j), &c) in &p.objective.quadratic {
        match (red.col[i], red.col[j]) {
            (Some(a), Some(b)) => {
                pi.push(a.min(b));
                pj.push(a.max(b));
                pv.push(if i == j { 2.0 * c } else { c });
            }
            (Some(a), None) => q[a] += c * bounds[j].lower,
            (None, Some(b)) => q[b] += c * bounds[i].lower,
            (None, None) => {}
        }
    }
    let pmat = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
    for (&v, &c) in &p.objective.linear {
        if let Some(j) = red.col[v] {
            q[j] += c;
        }
    }

    let backend_settings = DefaultSettings::<f64> {
        verbose: false,
        max_iter: settings.max_iter,
        tol_feas: settings.tol_feas,
        tol_gap_abs: settings.tol_gap_abs,
        tol_gap_rel: settings.tol_gap_rel,
        max_threads: 1,
        presolve_enable: false,
        ..DefaultSettings::default()
    };

    let mut solver = match DefaultSolver::new(&pmat, &q, &a, &rhs, &cones, backend_settings) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("backend setup failed: {e}");
            return SolveResult::without_point(
                Status::NumericalFailure,
                SolveStats {
                    wall_time: start.elapsed(),
                    ..SolveStats::default()
                },
            );
        }
    };
    solver.solve();

    let info = &solver.info;
    let mut stats = SolveStats {
        iterations: info.iterations,
        wall_time: start.elapsed(),
        kkt: KktResiduals {
            primal: info.res_primal,
            dual: info.res_dual,
            gap: info.gap_rel,
        },
        reduced_accuracy: false,
        branch: None,
    };
    let status = match solver.solution.status {
        SolverStatus::Solved => Status::Optimal,
        SolverStatus::AlmostSolved => {
            stats.reduced_accuracy = true;
            Status::Optimal
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Status::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => Status::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => Status::IterationLimit,
        _ => Status::NumericalFailure,
    };
    if status != Status::Optimal {
        return SolveResult::without_point(status, stats);
    }
    let x = red.expand(&solver.solution.x);
    let objective = p.objective.eval(&x);
    SolveResult {
        status,
        primal: Some(x),
        objective: Some(objective),
        incumbent: None,
        stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{LinExpr, Row, SocConstraint};

    #[test]
    fn square_with_lower_bound() {
        // minimize x^2 s.t. x >= 1
        let mut p = ConicProblem::new();
        let x = p.add_var("x", Bounds::new(1.0, f64::INFINITY));
        p.objective.add_product(x, x, 1.0);
        let r = solve_continuous(&p).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.primal.as_ref().unwrap()[x] - 1.0).abs() < 1e-7);
        assert!((r.objective.unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn cone_pushes_to_box_bound() {
        // minimize -t s.t. ||(x, y)|| <= t, x + y = 2, t <= 5
        let mut p = ConicProblem::new();
        let x = p.add_var("x", Bounds::FREE);
        let y = p.add_var("y", Bounds::FREE);
        let t = p.add_var("t", Bounds::new(f64::NEG_INFINITY, 5.0));
        p.objective.add_linear(t, -1.0);
        p.add_eq(Row::new(vec![(x, 1.0), (y, 1.0)], 2.0));
        p.add_soc(SocConstraint::new(
            vec![LinExpr::var(x), LinExpr::var(y)],
            LinExpr::var(t),
        ));
        let r = solve_continuous(&p).unwrap();
        assert_eq!(r.status, Status::Optimal);
        let sol = r.primal.unwrap();
        assert!((sol[t] - 5.0).abs() < 1e-6);
        assert!((sol[x] + sol[y] - 2.0).abs() < 1e-7);
        assert!(sol[x].hypot(sol[y]) <= 5.0 + 1e-6);
    }

    #[test]
    fn infeasible_box_and_row() {
        let mut p = ConicProblem::new();
        let x = p.add_var("x", Bounds::new(0.0, 1.0));
        p.add_le(Row::new(vec![(x, -1.0)], -2.0)); // x >= 2
        let r = solve_continuous(&p).unwrap();
        assert_eq!(r.status, Status::Infeasible);
        assert!(r.primal.is_none());
    }

    #[test]
    fn unbounded_linear_objective() {
        let mut p = ConicProblem::new();
        let x = p.add_var("x", Bounds::new(0.0, f64::INFINITY));
        p.objective.add_linear(x, -1.0);
        let r = solve_continuous(&p).unwrap();
        assert_eq!(r.status, Status::Unbounded);
    }

    #[test]
    fn binaries_rejected() {
        let mut p = ConicProblem::new();
        p.add_binary("h");
        assert_eq!(solve_continuous(&p), Err(ConicError::BinariesPresent(1)));
    }

    #[test]
    fn optimal_result_reports_small_residuals() {
        let mut p = ConicProblem::new();
        let x = p.add_var("x", Bounds::new(-3.0, 3.0));
        let y = p.add_var("y", Bounds::new(-3.0, 3.0));
        p.objective.add_weighted_square(
            &[LinExpr::var(x).plus(-4.0), LinExpr::var(y).plus(1.0)],
            &[vec![1.0, 0.2], vec![0.2, 2.0]],
        );
        let r = solve_continuous(&p).unwrap();
        assert!(r.is_optimal());
        assert!(r.stats.kkt.primal <= 1e-7);
        assert!(r.stats.kkt.dual <= 1e-7);
        assert!(r.stats.kkt.gap <= 1e-7);
        assert!(p.max_violation(r.primal.as_ref().unwrap()) <= 1e-7);
    }
}
