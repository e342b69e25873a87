//! Convex contact regions `{p : A p <= b}` on the walls.

use conic::{solve_continuous, Bounds, ConicProblem, LinExpr, Row, Status};
use nalgebra::Vector3;

use crate::error::ScenarioError;
use crate::robot::Side;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    /// Rows of `A`.
    pub a: Vec<Vector3<f64>>,
    pub b: Vec<f64>,
    /// Unit wall normal pointing out of the wall, into the corridor.
    pub normal: Vector3<f64>,
    pub mu: f64,
    pub side: Side,
}

impl Region {
    /// `min_k (b_k - a_k · p)`; nonnegative inside.
    pub fn margin(&self, p: &Vector3<f64>) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| b - a.dot(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        self.margin(p) >= -tol
    }

    /// Axis-aligned box `[lower, upper]` around the region, from six LPs.
    pub fn bounding_box(&self) -> Result<(Vector3<f64>, Vector3<f64>), ScenarioError> {
        let mut lower = Vector3::zeros();
        let mut upper = Vector3::zeros();
        for axis in 0..3 {
            let e = Vector3::ith(axis, 1.0);
            upper[axis] = self.support(&e)?;
            lower[axis] = -self.support(&-e)?;
        }
        Ok((lower, upper))
    }

    /// `max d · p` over the region; infinite if unbounded along `d`.
    pub fn support(&self, d: &Vector3<f64>) -> Result<f64, ScenarioError> {
        let mut p = self.lp();
        for k in 0..3 {
            p.objective.add_linear(k, -d[k]);
        }
        let r = solve_continuous(&p)?;
        match r.status {
            Status::Optimal => Ok(-r.objective.unwrap_or(f64::NAN)),
            Status::Unbounded => Ok(f64::INFINITY),
            Status::Infeasible => Err(ScenarioError::Malformed(format!("region {} is empty", self.name))),
            other => Err(ScenarioError::Malformed(format!(
                "support of region {}: solver status {other:?}",
                self.name
            ))),
        }
    }

    /// Point of the region farthest from its non-plane faces.
    ///
    /// Pairs of opposing rows (`a_k = -a_l`, `b_k = -b_l`) describe the wall
    /// plane and are kept as equalities; the radius is measured within it.
    pub fn chebyshev_center(&self) -> Result<(Vector3<f64>, f64), ScenarioError> {
        let mut p = self.lp();
        p.inequalities.clear();
        let r = p.add_var("radius", Bounds::new(0.0, 10.0));
        for k in 0..self.a.len() {
            if self.is_plane_row(k) {
                p.add_le(Row::new(
                    vec![(0, self.a[k].x), (1, self.a[k].y), (2, self.a[k].z)],
                    self.b[k],
                ));
            } else {
                let n = self.a[k].norm();
                p.add_le(Row::new(
                    vec![(0, self.a[k].x), (1, self.a[k].y), (2, self.a[k].z), (r, n)],
                    self.b[k],
                ));
            }
        }
        p.objective.add_linear(r, -1.0);
        let sol = solve_continuous(&p)?;
        match (sol.status, sol.primal) {
            (Status::Optimal, Some(x)) => Ok((Vector3::new(x[0], x[1], x[2]), x[r])),
            _ => Err(ScenarioError::Malformed(format!("region {} is empty", self.name))),
        }
    }

    fn is_plane_row(&self, k: usize) -> bool {
        (0..self.a.len()).any(|l| {
            l != k
                && (self.a[k] + self.a[l]).norm() <= 1e-12 * self.a[k].norm()
                && (self.b[k] + self.b[l]).abs() <= 1e-12
        })
    }

    fn lp(&self) -> ConicProblem {
        let mut p = ConicProblem::new();
        for name in ["x", "y", "z"] {
            p.add_var(name, Bounds::FREE);
        }
        for (a, &b) in self.a.iter().zip(&self.b) {
            let e = LinExpr::new().term(0, a.x).term(1, a.y).term(2, a.z).plus(-b);
            p.add_le_expr(&e);
        }
        p
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.a.len() != self.b.len() || self.a.is_empty() {
            return Err(ScenarioError::Malformed(format!(
                "region {}: A and b sizes differ or are empty",
                self.name
            )));
        }
        if (self.normal.norm() - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::Malformed(format!(
                "region {}: normal is not unit length",
                self.name
            )));
        }
        if !(self.mu > 0.0) {
            return Err(ScenarioError::Malformed(format!(
                "region {}: friction must be positive",
                self.name
            )));
        }
        if self
            .a
            .iter()
            .chain(std::iter::once(&self.normal))
            .any(|v| !v.iter().all(|c| c.is_finite()))
            || self.b.iter().any(|b| !b.is_finite())
        {
            return Err(ScenarioError::Malformed(format!(
                "region {}: non-finite data",
                self.name
            )));
        }
        Ok(())
    }

    /// Rectangle on the plane `n · p = d` with an in-plane horizontal direction
    /// `t`, `t · p ∈ [t0, t1]` and `z ∈ [z0, z1]`. `n` points into the corridor.
    #[allow(clippy::too_many_arguments)]
    pub fn wall_patch(
        name: impl Into<String>,
        side: Side,
        normal: Vector3<f64>,
        offset: f64,
        tangent: Vector3<f64>,
        (t0, t1): (f64, f64),
        (z0, z1): (f64, f64),
        mu: f64,
    ) -> Self {
        let z = Vector3::z();
        Self {
            name: name.into(),
            a: vec![normal, -normal, tangent, -tangent, z, -z],
            b: vec![offset, -offset, t1, -t0, z1, -z0],
            normal,
            mu,
            side,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionSet {
    pub regions: Vec<Region>,
}

impl RegionSet {
    pub fn new(regions: Vec<Region>) -> Self {
        Self { regions }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.regions.is_empty() {
            return Err(ScenarioError::Malformed("no contact regions".into()));
        }
        for (i, r) in self.regions.iter().enumerate() {
            r.validate()?;
            r.chebyshev_center()
                .map_err(|_| ScenarioError::EmptyRegion { region: i })?;
        }
        Ok(())
    }

    /// Index of a region containing `p` on `side`, preferring the largest margin.
    pub fn locate(&self, p: &Vector3<f64>, side: Option<Side>, tol: f64) -> Option<usize> {
        self.regions
            .iter()
            .enumerate()
            .filter(|(_, r)| side.is_none_or(|s| r.side == s) && r.contains(p, tol))
            .max_by(|a, b| a.1.margin(p).total_cmp(&b.1.margin(p)))
            .map(|(i, _)| i)
    }
}
