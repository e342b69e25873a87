//! Best-first branch-and-bound over the binary variables of a [`ConicProblem`].
//!
//! Each node is the continuous relaxation with some binaries fixed. Nodes are
//! expanded in order of their parent's relaxation bound (ties by creation
//! order), branching on the most fractional binary with the lowest index
//! breaking ties. Open nodes are popped in fixed-size batches whose
//! relaxations may run in parallel; results are consumed in batch order, so
//! the search is identical for any worker count.
//!
//! Incumbents come from rounding integral relaxations and from periodic
//! dives: starting at a node's relaxation, the binary closest to 1 is fixed
//! up (its exactly-one partners down) and the relaxation re-solved until the
//! point is integral or the dive dead-ends.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::ConicError;
use crate::problem::{Bounds, ConicProblem, VarId};
use crate::propagate::propagate;
use crate::solver::{solve_with_bounds, BranchStats, SolveResult, SolveStats, SolverSettings, Status};

/// Binary variables pinned to 0 or 1.
type Fixings = Vec<(VarId, bool)>;

#[derive(Debug, Clone, PartialEq)]
pub struct MicpSettings {
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
    pub gap_rel: f64,
    pub gap_abs: f64,
    /// A binary within this distance of 0 or 1 counts as integral.
    pub integrality_tol: f64,
    /// Open nodes evaluated per step. Part of the search definition, not a
    /// thread count.
    pub batch_size: usize,
    /// Dive from the best node of a batch once this many nodes have been
    /// processed since the last dive. Zero disables diving after the root.
    pub dive_interval: usize,
    pub solver: SolverSettings,
}

impl Default for MicpSettings {
    fn default() -> Self {
        Self {
            max_nodes: 100_000,
            time_limit: None,
            gap_rel: 1e-6,
            gap_abs: 1e-9,
            integrality_tol: 1e-6,
            batch_size: 4,
            dive_interval: 64,
            // Node bounds only need to be good to the gap tolerance.
            solver: SolverSettings {
                tol_feas: 1e-8,
                tol_gap_abs: 1e-8,
                tol_gap_rel: 1e-8,
                ..SolverSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    bound: f64,
    id: u64,
    fixings: Vec<(VarId, bool)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the "greatest" node is the lowest bound, then the oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    problem: &'a ConicProblem,
    settings: &'a MicpSettings,
    binaries: Vec<VarId>,
    /// For each binary, the exactly-one rows (all-binary, unit coefficients,
    /// right-hand side 1) it appears in, as lists of partner variables.
    groups: Vec<Vec<usize>>,
    group_members: Vec<Vec<VarId>>,
    incumbent: Option<(Vec<f64>, f64)>,
    stats: BranchStats,
    next_id: u64,
}

impl<'a> Search<'a> {
    /// Node box: the problem's bounds with `fixings` applied, then tightened
    /// by propagation. `None` if propagation proves the node infeasible.
    fn bounds_for(&self, fixings: &[(VarId, bool)]) -> Option<Vec<Bounds>> {
        let mut bounds = self.problem.bounds().to_vec();
        for &(v, up) in fixings {
            bounds[v] = Bounds::fixed(if up { 1.0 } else { 0.0 });
        }
        propagate(self.problem, &mut bounds).then_some(bounds)
    }

    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((_, best)) => best - self.settings.gap_abs.max(self.settings.gap_rel * best.abs()),
            None => f64::INFINITY,
        }
    }

    fn relax(&self, fixings: &[(VarId, bool)]) -> SolveResult {
        match self.bounds_for(fixings) {
            Some(bounds) => solve_with_bounds(self.problem, &bounds, &self.settings.solver),
            None => SolveResult::without_point(Status::Infeasible, SolveStats::default()),
        }
    }

    /// Most fractional unfixed binary, lowest index on ties.
    fn branching_var(&self, x: &[f64]) -> Option<VarId> {
        let tol = self.settings.integrality_tol;
        let mut best: Option<(VarId, f64)> = None;
        for &v in &self.binaries {
            let frac = (x[v] - x[v].round()).abs();
            if frac <= tol {
                continue;
            }
            match best {
                Some((_, f)) if frac <= f => {}
                _ => best = Some((v, frac)),
            }
        }
        best.map(|(v, _)| v)
    }

    /// Re-solves with every binary fixed to its rounded value and offers the
    /// result as an incumbent.
    fn try_rounded(&mut self, x: &[f64]) {
        let fixings: Vec<(VarId, bool)> = self.binaries.iter().map(|&v| (v, x[v] >= 0.5)).collect();
        let r = self.relax(&fixings);
        self.stats.relaxations += 1;
        if let (Status::Optimal, Some(mut point), Some(obj)) = (r.status, r.primal, r.objective) {
            for &(v, up) in &fixings {
                point[v] = if up { 1.0 } else { 0.0 };
            }
            if obj < self.cutoff() {
                self.stats.incumbents.push(obj);
                self.incumbent = Some((point, obj));
            }
        }
    }

    /// Depth-first rounding dive from `x`, the relaxation at `fixings`.
    fn dive(&mut self, fixings: &[(VarId, bool)], x: &[f64]) {
        let tol = self.settings.integrality_tol;
        let mut fixings = fixings.to_vec();
        let mut x = x.to_vec();
        let mut fixed = vec![false; self.problem.num_vars()];
        for &(v, _) in &fixings {
            fixed[v] = true;
        }
        loop {
            let pick = self
                .binaries
                .iter()
                .copied()
                .filter(|&v| !fixed[v] && x[v] > tol && x[v] < 1.0 - tol)
                .fold(None, |best: Option<VarId>, v| match best {
                    Some(b) if x[b] >= x[v] => Some(b),
                    _ => Some(v),
                });
            let Some(v) = pick else {
                self.try_rounded(&x);
                return;
            };
            let mut up = fixings.clone();
            up.push((v, true));
            for &g in &self.groups[v] {
                for &w in &self.group_members[g] {
                    if w != v && !fixed[w] {
                        up.push((w, false));
                    }
                }
            }
            let r = self.relax(&up);
            self.stats.relaxations += 1;
            let next = match r {
                SolveResult {
                    status: Status::Optimal,
                    primal: Some(p),
                    objective: Some(o),
                    ..
                } => Some((up, p, o)),
                _ => {
                    let mut down = fixings.clone();
                    down.push((v, false));
                    let r = self.relax(&down);
                    self.stats.relaxations += 1;
                    match r {
                        SolveResult {
                            status: Status::Optimal,
                            primal: Some(p),
                            objective: Some(o),
                            ..
                        } => Some((down, p, o)),
                        _ => None,
                    }
                }
            };
            let Some((f, p, obj)) = next else { return };
            if obj >= self.cutoff() {
                return;
            }
            for &(w, _) in &f[fixings.len()..] {
                fixed[w] = true;
            }
            fixings = f;
            x = p;
        }
    }

    fn child(&mut self, parent: &Node, var: VarId, up: bool, bound: f64) -> Node {
        let mut fixings = parent.fixings.clone();
        fixings.push((var, up));
        self.next_id += 1;
        Node {
            bound,
            id: self.next_id,
            fixings,
        }
    }
}

pub fn solve_micp(p: &ConicProblem) -> Result<SolveResult, ConicError> {
    solve_micp_with(p, &MicpSettings::default())
}

pub fn solve_micp_with(p: &ConicProblem, settings: &MicpSettings) -> Result<SolveResult, ConicError> {
    p.validate()?;
    let start = Instant::now();
    let (groups, group_members) = exactly_one_groups(p);
    let mut search = Search {
        problem: p,
        settings,
        binaries: p.binaries().iter().copied().collect(),
        groups,
        group_members,
        incumbent: None,
        stats: BranchStats {
            best_bound: f64::NEG_INFINITY,
            ..BranchStats::default()
        },
        next_id: 0,
    };

    let root = search.relax(&[]);
    search.stats.relaxations += 1;
    match root.status {
        Status::Optimal => {}
        Status::Infeasible => return Ok(finish(search, Status::Infeasible, start)),
        Status::Unbounded => return Ok(finish(search, Status::Unbounded, start)),
        other => return Ok(finish(search, other, start)),
    }
    let root_x = root.primal.expect("optimal relaxation has a point");
    let root_obj = root.objective.expect("optimal relaxation has an objective");
    search.stats.best_bound = root_obj;
    search.try_rounded(&root_x);
    if search.incumbent.is_none() {
        search.dive(&[], &root_x);
    }
    let mut since_dive = 0usize;

    let mut open = BinaryHeap::new();
    open.push(Node {
        bound: root_obj,
        id: 0,
        fixings: Vec::new(),
    });

    let mut limit_hit = false;
    while let Some(top) = open.peek() {
        if top.bound >= search.cutoff() {
            break;
        }
        if search.stats.nodes >= settings.max_nodes || settings.time_limit.is_some_and(|t| start.elapsed() >= t) {
            limit_hit = true;
            break;
        }
        let mut batch = Vec::with_capacity(settings.batch_size);
        while batch.len() < settings.batch_size.max(1) {
            match open.pop() {
                Some(node) if node.bound < search.cutoff() => batch.push(node),
                Some(_) => {}
                None => break,
            }
        }
        let results: Vec<SolveResult> = {
            let s = &search;
            batch.par_iter().map(|n| s.relax(&n.fixings)).collect()
        };
        let mut dive_from: Option<(f64, Fixings, Vec<f64>)> = None;
        for (node, result) in batch.into_iter().zip(results) {
            search.stats.nodes += 1;
            since_dive += 1;
            search.stats.relaxations += 1;
            match result.status {
                Status::Infeasible => {}
                Status::Unbounded => return Ok(finish(search, Status::Unbounded, start)),
                Status::Optimal => {
                    let obj = result.objective.unwrap();
                    if obj >= search.cutoff() {
                        continue;
                    }
                    let x = result.primal.unwrap();
                    match search.branching_var(&x) {
                        None => search.try_rounded(&x),
                        Some(var) => {
                            if dive_from.as_ref().is_none_or(|d| obj < d.0) {
                                dive_from = Some((obj, node.fixings.clone(), x.clone()));
                            }
                            let bound = obj.max(node.bound);
                            let down = search.child(&node, var, false, bound);
                            let up = search.child(&node, var, true, bound);
                            open.push(down);
                            open.push(up);
                        }
                    }
                }
                Status::IterationLimit | Status::NumericalFailure => {
                    search.stats.numerical_failures += 1;
                    // No usable point: split on the first free binary and keep the parent bound.
                    let fixed: Vec<VarId> = node.fixings.iter().map(|f| f.0).collect();
                    if let Some(&var) = search.binaries.iter().find(|v| !fixed.contains(v)) {
                        let down = search.child(&node, var, false, node.bound);
                        let up = search.child(&node, var, true, node.bound);
                        open.push(down);
                        open.push(up);
                    }
                }
            }
        }
        if settings.dive_interval > 0 && since_dive >= settings.dive_interval {
            if let Some((_, fixings, x)) = dive_from {
                since_dive = 0;
                search.dive(&fixings, &x);
            }
        }
    }

    let open_bound = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    search.stats.best_bound = match &search.incumbent {
        Some((_, best)) => open_bound.min(*best),
        None => open_bound,
    };
    let status = match (&search.incumbent, limit_hit) {
        (Some(_), false) => Status::Optimal,
        (None, false) => Status::Infeasible,
        (_, true) => Status::IterationLimit,
    };
    Ok(finish(search, status, start))
}

/// Rows `Σ x_v = 1` over binaries, and for each variable the rows it is in.
fn exactly_one_groups(p: &ConicProblem) -> (Vec<Vec<usize>>, Vec<Vec<VarId>>) {
    let mut of_var = vec![Vec::new(); p.num_vars()];
    let mut members = Vec::new();
    for row in &p.equalities {
        let unit =
            row.rhs == 1.0 && !row.terms.is_empty() && row.terms.iter().all(|&(v, c)| c == 1.0 && p.is_binary(v));
        if unit {
            let vars: Vec<VarId> = row.terms.iter().map(|t| t.0).collect();
            for &v in &vars {
                of_var[v].push(members.len());
            }
            members.push(vars);
        }
    }
    (of_var, members)
}

fn finish(search: Search<'_>, status: Status, start: Instant) -> SolveResult {
    let stats = SolveStats {
        iterations: 0,
        wall_time: start.elapsed(),
        branch: Some(search.stats),
        ..SolveStats::default()
    };
    match (status, search.incumbent) {
        (Status::Optimal, Some((x, obj))) => SolveResult {
            status,
            primal: Some(x),
            objective: Some(obj),
            incumbent: None,
            stats,
        },
        (status, incumbent) => SolveResult {
            status,
            primal: None,
            objective: None,
            incumbent,
            stats,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{LinExpr, Row};
    use crate::solver::solve_continuous;

    /// minimize (x - 2.5)^2 + 0.1 h0 + 0.2 h1 with x <= 1 + 10 (1 - h0) ... a single
    /// continuous variable assigned to one of two intervals.
    fn two_interval() -> (ConicProblem, VarId, VarId, VarId) {
        let mut p = ConicProblem::new();
        let x = p.add_var("x", Bounds::new(-5.0, 5.0));
        let h0 = p.add_binary("h0");
        let h1 = p.add_binary("h1");
        p.objective
            .add_weighted_square(&[LinExpr::var(x).plus(-2.5)], &[vec![1.0]]);
        // h0 => x <= 1 ; h1 => x >= 3
        p.add_le(Row::new(vec![(x, 1.0), (h0, 4.0)], 5.0));
        p.add_le(Row::new(vec![(x, -1.0), (h1, 8.0)], 5.0));
        p.add_eq(Row::new(vec![(h0, 1.0), (h1, 1.0)], 1.0));
        (p, x, h0, h1)
    }

    #[test]
    fn picks_nearer_interval() {
        let (p, x, h0, h1) = two_interval();
        let r = solve_micp(&p).unwrap();
        assert_eq!(r.status, Status::Optimal);
        let sol = r.primal.unwrap();
        assert_eq!((sol[h0], sol[h1]), (0.0, 1.0));
        assert!((sol[x] - 3.0).abs() < 1e-6);
        assert!((r.objective.unwrap() - 0.25).abs() < 1e-6);
    }

    #[test]
    fn fixed_binaries_match_continuous_restriction() {
        let (mut p, x, h0, h1) = two_interval();
        p.set_bounds(h0, Bounds::fixed(1.0));
        p.set_bounds(h1, Bounds::fixed(0.0));
        let mip = solve_micp(&p).unwrap();
        let cont = solve_continuous(&p.relaxed()).unwrap();
        assert!((mip.objective.unwrap() - cont.objective.unwrap()).abs() < 1e-7);
        assert!((mip.primal.unwrap()[x] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_when_no_assignment_works() {
        let (mut p, x, _, _) = two_interval();
        p.set_bounds(x, Bounds::new(1.5, 2.5));
        let r = solve_micp(&p).unwrap();
        assert_eq!(r.status, Status::Infeasible);
        assert!(r.primal.is_none());
    }

    #[test]
    fn node_limit_reports_iteration_limit() {
        let (p, _, _, _) = two_interval();
        let settings = MicpSettings {
            max_nodes: 0,
            ..MicpSettings::default()
        };
        let r = solve_micp_with(&p, &settings).unwrap();
        // The root rounding heuristic may already hold an incumbent.
        assert!(matches!(r.status, Status::IterationLimit | Status::Optimal));
        if r.status == Status::IterationLimit {
            assert!(r.primal.is_none());
        }
    }

    #[test]
    fn node_ordering_is_lowest_bound_then_oldest() {
        let mut heap = BinaryHeap::new();
        heap.push(Node {
            bound: 2.0,
            id: 1,
            fixings: vec![],
        });
        heap.push(Node {
            bound: 1.0,
            id: 3,
            fixings: vec![],
        });
        heap.push(Node {
            bound: 1.0,
            id: 2,
            fixings: vec![],
        });
        let order: Vec<u64> = std::iter::from_fn(|| heap.pop().map(|n| n.id)).collect();
        assert_eq!(order, vec![2, 3, 1]);
    }
}
