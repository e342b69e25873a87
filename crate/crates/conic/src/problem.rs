//! Problem representation.
//!
//! A [`ConicProblem`] is
//!
//! ```text
//! minimize    xᵀ Q x + cᵀ x + c0
//! subject to  a_k · x  = b_k            (equalities)
//!             a_k · x <= b_k            (inequalities)
//!             l <= x <= u               (box bounds, may be infinite)
//!             ‖(e_1(x), …, e_m(x))‖₂ <= t(x)   (second-order cones, e and t affine)
//!             x_i ∈ {0, 1}  for i in the binary set
//! ```
//!
//! Note the quadratic term is `xᵀQx`, not `½xᵀQx`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::ConicError;

/// Index of a decision variable.
pub type VarId = usize;

/// Sparse affine expression `Σ coef·x_var + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(var: VarId) -> Self {
        Self {
            terms: vec![(var, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, var: VarId, coef: f64) -> Self {
        self.add_term(var, coef);
        self
    }

    pub fn plus(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn add_term(&mut self, var: VarId, coef: f64) {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) {
        for &(v, c) in &other.terms {
            self.add_term(v, c * scale);
        }
        self.constant += other.constant * scale;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>() + self.constant
    }

    /// Merges duplicate variables and drops zero coefficients.
    pub fn normalized(&self) -> LinExpr {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *merged.entry(v).or_insert(0.0) += c;
        }
        LinExpr {
            terms: merged.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            constant: self.constant,
        }
    }

    fn max_var(&self) -> Option<VarId> {
        self.terms.iter().map(|&(v, _)| v).max()
    }
}

/// A linear row `Σ coef·x_var (op) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub terms: Vec<(VarId, f64)>,
    pub rhs: f64,
}

impl Row {
    pub fn new(terms: Vec<(VarId, f64)>, rhs: f64) -> Self {
        Self { terms, rhs }
    }

    /// `expr (op) 0` written as a row; the expression constant moves to the right-hand side.
    pub fn from_expr(expr: &LinExpr) -> Self {
        Self {
            terms: expr.terms.clone(),
            rhs: -expr.constant,
        }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum()
    }
}

/// `‖(vector_i(x))_i‖₂ <= bound(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub vector: Vec<LinExpr>,
    pub bound: LinExpr,
}

impl SocConstraint {
    pub fn new(vector: Vec<LinExpr>, bound: LinExpr) -> Self {
        Self { vector, bound }
    }

    /// Signed slack `bound(x) - ‖vector(x)‖`; negative when violated.
    pub fn slack(&self, x: &[f64]) -> f64 {
        let norm = self.vector.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        self.bound.eval(x) - norm
    }
}

/// Box bounds of one variable; either side may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const FREE: Bounds = Bounds {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn fixed(value: f64) -> Self {
        Self {
            lower: value,
            upper: value,
        }
    }

    pub fn is_fixed(&self) -> bool {
        self.lower == self.upper
    }
}

/// Convex quadratic objective `xᵀQx + cᵀx + c0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Objective {
    /// Entries of `Q` keyed by `(row, col)` with `row <= col`; an off-diagonal
    /// key `(i, j)` holds the full coefficient of `x_i x_j`.
    pub quadratic: BTreeMap<(VarId, VarId), f64>,
    pub linear: BTreeMap<VarId, f64>,
    pub constant: f64,
}

impl Objective {
    /// Adds `coef · x_i · x_j`.
    pub fn add_product(&mut self, i: VarId, j: VarId, coef: f64) {
        if coef == 0.0 {
            return;
        }
        let key = if i <= j { (i, j) } else { (j, i) };
        *self.quadratic.entry(key).or_insert(0.0) += coef;
    }

    pub fn add_linear(&mut self, var: VarId, coef: f64) {
        if coef != 0.0 {
            *self.linear.entry(var).or_insert(0.0) += coef;
        }
    }

    /// Adds `eᵀ W e` for the affine vector `e`; `weights` is row-major and must be PSD.
    pub fn add_weighted_square(&mut self, exprs: &[LinExpr], weights: &[Vec<f64>]) {
        for (a, ea) in exprs.iter().enumerate() {
            for (b, eb) in exprs.iter().enumerate() {
                let w = weights[a][b];
                if w == 0.0 {
                    continue;
                }
                for &(va, ca) in &ea.terms {
                    for &(vb, cb) in &eb.terms {
                        self.add_product(va, vb, w * ca * cb);
                    }
                    self.add_linear(va, w * ca * eb.constant);
                }
                for &(vb, cb) in &eb.terms {
                    self.add_linear(vb, w * ea.constant * cb);
                }
                self.constant += w * ea.constant * eb.constant;
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let quad: f64 = self.quadratic.iter().map(|(&(i, j), &c)| c * x[i] * x[j]).sum();
        let lin: f64 = self.linear.iter().map(|(&v, &c)| c * x[v]).sum();
        quad + lin + self.constant
    }
}

/// A convex program over continuous and (optionally) binary variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    names: Vec<String>,
    bounds: Vec<Bounds>,
    binaries: BTreeSet<VarId>,
    pub objective: Objective,
    pub equalities: Vec<Row>,
    pub inequalities: Vec<Row>,
    pub cones: Vec<SocConstraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a continuous variable.
    pub fn add_var(&mut self, name: impl Into<String>, bounds: Bounds) -> VarId {
        self.names.push(name.into());
        self.bounds.push(bounds);
        self.names.len() - 1
    }

    /// Adds a binary variable with bounds `[0, 1]`.
    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        let id = self.add_var(name, Bounds::new(0.0, 1.0));
        self.binaries.insert(id);
        id
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.binaries.len()
    }

    pub fn num_continuous(&self) -> usize {
        self.num_vars() - self.num_binaries()
    }

    pub fn binaries(&self) -> &BTreeSet<VarId> {
        &self.binaries
    }

    pub fn is_binary(&self, var: VarId) -> bool {
        self.binaries.contains(&var)
    }

    pub fn name(&self, var: VarId) -> &str {
        &self.names[var]
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn set_bounds(&mut self, var: VarId, bounds: Bounds) {
        self.bounds[var] = bounds;
    }

    pub fn add_eq(&mut self, row: Row) {
        self.equalities.push(row);
    }

    pub fn add_le(&mut self, row: Row) {
        self.inequalities.push(row);
    }

    /// `expr = 0`.
    pub fn add_eq_expr(&mut self, expr: &LinExpr) {
        self.equalities.push(Row::from_expr(expr));
    }

    /// `expr <= 0`.
    pub fn add_le_expr(&mut self, expr: &LinExpr) {
        self.inequalities.push(Row::from_expr(expr));
    }

    pub fn add_soc(&mut self, cone: SocConstraint) {
        self.cones.push(cone);
    }

    /// Copy of the problem with every binary relaxed to a continuous `[0, 1]` variable.
    pub fn relaxed(&self) -> ConicProblem {
        let mut p = self.clone();
        p.binaries.clear();
        p
    }

    /// Structural checks: indices in range, consistent bounds, PSD quadratic term.
    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.num_vars();
        let check = |what: &str, max: Option<VarId>| -> Result<(), ConicError> {
            match max {
                Some(v) if v >= n => Err(ConicError::VariableOutOfRange {
                    context: what.to_string(),
                    var: v,
                    num_vars: n,
                }),
                _ => Ok(()),
            }
        };
        for (k, row) in self.equalities.iter().enumerate() {
            check(&format!("equality {k}"), row.terms.iter().map(|t| t.0).max())?;
        }
        for (k, row) in self.inequalities.iter().enumerate() {
            check(&format!("inequality {k}"), row.terms.iter().map(|t| t.0).max())?;
        }
        for (k, cone) in self.cones.iter().enumerate() {
            if cone.vector.is_empty() {
                return Err(ConicError::Malformed(format!("cone {k} has an empty vector part")));
            }
            for e in cone.vector.iter().chain(std::iter::once(&cone.bound)) {
                check(&format!("cone {k}"), e.max_var())?;
            }
        }
        check(
            "objective",
            self.objective
                .quadratic
                .keys()
                .map(|&(_, j)| j)
                .chain(self.objective.linear.keys().copied())
                .max(),
        )?;
        for (v, b) in self.bounds.iter().enumerate() {
            if b.lower.is_nan() || b.upper.is_nan() || b.lower > b.upper {
                return Err(ConicError::Malformed(format!(
                    "variable {} has bounds [{}, {}]",
                    self.names[v], b.lower, b.upper
                )));
            }
        }
        self.check_psd()
    }

    fn check_psd(&self) -> Result<(), ConicError> {
        if self.objective.quadratic.is_empty() {
            return Ok(());
        }
        // Restrict to variables that appear in the quadratic term.
        let vars: BTreeSet<VarId> = self.objective.quadratic.keys().flat_map(|&(i, j)| [i, j]).collect();
        let index: BTreeMap<VarId, usize> = vars.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let m = vars.len();
        let mut q = nalgebra::DMatrix::<f64>::zeros(m, m);
        for (&(i, j), &c) in &self.objective.quadratic {
            let (a, b) = (index[&i], index[&j]);
            if a == b {
                q[(a, a)] += c;
            } else {
                q[(a, b)] += 0.5 * c;
                q[(b, a)] += 0.5 * c;
            }
        }
        let scale = q.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
        let eig = q.symmetric_eigenvalues();
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -1e-10 * scale {
            return Err(ConicError::NotPositiveSemidefinite { min_eigenvalue: min });
        }
        Ok(())
    }

    /// Largest violation of any constraint (equalities, inequalities, bounds,
    /// cones, integrality) at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.equalities {
            worst = worst.max((row.lhs(x) - row.rhs).abs());
        }
        for row in &self.inequalities {
            worst = worst.max(row.lhs(x) - row.rhs);
        }
        for (v, b) in self.bounds.iter().enumerate() {
            worst = worst.max(b.lower - x[v]).max(x[v] - b.upper);
        }
        for cone in &self.cones {
            worst = worst.max(-cone.slack(x));
        }
        for &v in &self.binaries {
            worst = worst.max(x[v].min(1.0 - x[v]).abs());
        }
        worst
    }

    /// Writes the problem in the plain-text dump format.
    ///
    /// ```text
    /// conic-problem v1
    /// vars <n> binaries <k>
    /// var <id> <name> <kind: c|b> <lower> <upper>
    /// obj const <c0>
    /// obj lin <var> <coef>
    /// obj quad <i> <j> <coef>          # coefficient of x_i x_j
    /// eq <rhs> : <var>*<coef> ...
    /// le <rhs> : <var>*<coef> ...
    /// soc <dim> bound <const> : <var>*<coef> ...
    /// soc-row <const> : <var>*<coef> ...   # one per vector component, following its soc line
    /// end
    /// ```
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "conic-problem v1");
        let _ = writeln!(out, "vars {} binaries {}", self.num_vars(), self.num_binaries());
        for (v, b) in self.bounds.iter().enumerate() {
            let kind = if self.is_binary(v) { 'b' } else { 'c' };
            let _ = writeln!(out, "var {v} {} {kind} {:e} {:e}", self.names[v], b.lower, b.upper);
        }
        let _ = writeln!(out, "obj const {:e}", self.objective.constant);
        for (v, c) in &self.objective.linear {
            let _ = writeln!(out, "obj lin {v} {c:e}");
        }
        for ((i, j), c) in &self.objective.quadratic {
            let _ = writeln!(out, "obj quad {i} {j} {c:e}");
        }
        let terms = |t: &[(VarId, f64)]| {
            t.iter()
                .map(|(v, c)| format!("{v}*{c:e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for row in &self.equalities {
            let _ = writeln!(out, "eq {:e} : {}", row.rhs, terms(&row.terms));
        }
        for row in &self.inequalities {
            let _ = writeln!(out, "le {:e} : {}", row.rhs, terms(&row.terms));
        }
        for cone in &self.cones {
            let _ = writeln!(
                out,
                "soc {} bound {:e} : {}",
                cone.vector.len(),
                cone.bound.constant,
                terms(&cone.bound.terms)
            );
            for e in &cone.vector {
                let _ = writeln!(out, "soc-row {:e} : {}", e.constant, terms(&e.terms));
            }
        }
        out.push_str("end\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_square_expands_affine_terms() {
        // (x0 - 2)^2 * 3
        let mut obj = Objective::default();
        obj.add_weighted_square(&[LinExpr::var(0).plus(-2.0)], &[vec![3.0]]);
        for x in [-1.0, 0.0, 2.0, 5.5] {
            assert!((obj.eval(&[x]) - 3.0 * (x - 2.0f64).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_weights_are_symmetrized() {
        let w = vec![vec![2.0, 1.0], vec![1.0, 4.0]];
        let e = [LinExpr::var(0), LinExpr::var(1).plus(1.0)];
        let mut obj = Objective::default();
        obj.add_weighted_square(&e, &w);
        let x = [0.3, -0.7];
        let (a, b) = (x[0], x[1] + 1.0);
        let expected = 2.0 * a * a + 2.0 * a * b + 4.0 * b * b;
        assert!((obj.eval(&x) - expected).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_indefinite_objective() {
        let mut p = ConicProblem::new();
        let x = p.add_var("x", Bounds::FREE);
        let y = p.add_var("y", Bounds::FREE);
        p.objective.add_product(x, y, 1.0);
        assert!(matches!(p.validate(), Err(ConicError::NotPositiveSemidefinite { .. })));
    }

    #[test]
    fn validate_rejects_out_of_range_rows() {
        let mut p = ConicProblem::new();
        p.add_var("x", Bounds::FREE);
        p.add_le(Row::new(vec![(3, 1.0)], 0.0));
        assert!(matches!(
            p.validate(),
            Err(ConicError::VariableOutOfRange { var: 3, .. })
        ));
    }

    #[test]
    fn dump_lists_every_constraint() {
        let mut p = ConicProblem::new();
        let x = p.add_var("x", Bounds::new(0.0, 1.0));
        let h = p.add_binary("h");
        p.add_eq(Row::new(vec![(x, 1.0), (h, 1.0)], 1.0));
        p.add_soc(SocConstraint::new(vec![LinExpr::var(x)], LinExpr::constant(2.0)));
        let text = p.dump();
        assert!(text.starts_with("conic-problem v1\nvars 2 binaries 1\n"));
        assert!(text.contains("var 1 h b"));
        assert_eq!(text.lines().filter(|l| l.starts_with("eq ")).count(), 1);
        assert_eq!(text.lines().filter(|l| l.starts_with("soc-row ")).count(), 1);
        assert!(text.ends_with("end\n"));
    }
}
