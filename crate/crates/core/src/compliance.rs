//! Joint-spring stiffness model of the braced body.
//!
//! Each contacting limb acts as a toe-space spring `K = (J k⁻¹ Jᵀ)⁻¹`. The
//! torso deflects by `δ_COM = (δd, δθ)` under the external load and the
//! wall-imposed toe displacements `δ_wall`:
//!
//! ```text
//! A δ_COM = [F; M] + Σ [K; P K] δ_wall
//! f       = K (δ_wall − [I  Pᵀ] δ_COM)
//! ```
//!
//! `P = skew(toe − p_COM)` in the world frame, and `f` is the force the wall
//! exerts on the toe, so equilibrium reads `Σ f + F = 0`, `Σ P f + M = 0`.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::ComplianceError;
use crate::kinematics::skew;

pub const DEFAULT_CONDITION_LIMIT: f64 = 1e8;

/// Diagonal joint spring coefficients [N·m/rad].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoStiffness {
    pub k: [f64; 3],
}

impl ServoStiffness {
    pub fn uniform(k: f64) -> Self {
        Self { k: [k; 3] }
    }

    pub fn validate(&self) -> Result<(), ComplianceError> {
        if self.k.iter().all(|&k| k > 0.0 && k.is_finite()) {
            Ok(())
        } else {
            Err(ComplianceError::InvalidServoStiffness(self.k))
        }
    }
}

impl Default for ServoStiffness {
    fn default() -> Self {
        Self::uniform(300.0)
    }
}

/// Force and moment about the body COM, world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalLoad {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl ExternalLoad {
    pub fn gravity(mass: f64, g: f64) -> Self {
        Self {
            force: Vector3::new(0.0, 0.0, -mass * g),
            moment: Vector3::zeros(),
        }
    }

    pub fn zero() -> Self {
        Self {
            force: Vector3::zeros(),
            moment: Vector3::zeros(),
        }
    }

    pub fn wrench(&self) -> Vector6<f64> {
        let mut w = Vector6::zeros();
        w.fixed_rows_mut::<3>(0).copy_from(&self.force);
        w.fixed_rows_mut::<3>(3).copy_from(&self.moment);
        w
    }
}

pub fn condition_number(m: &Matrix3<f64>) -> f64 {
    let sv = m.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn limb_stiffness(j: &Matrix3<f64>, k: &ServoStiffness) -> Result<Matrix3<f64>, ComplianceError> {
    limb_stiffness_with_limit(j, k, DEFAULT_CONDITION_LIMIT)
}

pub fn limb_stiffness_with_limit(
    j: &Matrix3<f64>,
    k: &ServoStiffness,
    condition_limit: f64,
) -> Result<Matrix3<f64>, ComplianceError> {
    k.validate()?;
    let condition = condition_number(j);
    if !(condition <= condition_limit) {
        return Err(ComplianceError::NearSingular {
            condition,
            limit: condition_limit,
        });
    }
    let k_inv = Matrix3::from_diagonal(&Vector3::from(k.k.map(|v| 1.0 / v)));
    let compliance = j * k_inv * j.transpose();
    let stiffness = compliance.try_inverse().ok_or(ComplianceError::NearSingular {
        condition: f64::INFINITY,
        limit: condition_limit,
    })?;
    // Remove round-off asymmetry.
    Ok((stiffness + stiffness.transpose()) * 0.5)
}

/// `skew(r)` for the toe position `r` relative to the moment reference.
pub fn toe_cross_matrix(r: &Vector3<f64>) -> Matrix3<f64> {
    skew(r)
}

/// One contacting limb: toe stiffness and cross matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactStiffness {
    pub k: Matrix3<f64>,
    pub p: Matrix3<f64>,
}

impl ContactStiffness {
    /// `toe` and `com` in the world frame.
    pub fn new(k: Matrix3<f64>, toe: &Vector3<f64>, com: &Vector3<f64>) -> Self {
        Self {
            k,
            p: toe_cross_matrix(&(toe - com)),
        }
    }

    /// `[I  Pᵀ]`, mapping a body deflection to the toe displacement.
    pub fn rigid_map(&self) -> nalgebra::Matrix3x6<f64> {
        let mut b = nalgebra::Matrix3x6::zeros();
        b.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        b.fixed_view_mut::<3, 3>(0, 3).copy_from(&self.p.transpose());
        b
    }
}

pub fn assemble_whole_body(contacts: &[ContactStiffness]) -> Matrix6<f64> {
    let mut a = Matrix6::zeros();
    for c in contacts {
        let kpt = c.k * c.p.transpose();
        add_block(&mut a, 0, 0, &c.k);
        add_block(&mut a, 0, 3, &kpt);
        add_block(&mut a, 3, 0, &(c.p * c.k));
        add_block(&mut a, 3, 3, &(c.p * kpt));
    }
    a
}

fn add_block(a: &mut Matrix6<f64>, row: usize, col: usize, m: &Matrix3<f64>) {
    let mut view = a.fixed_view_mut::<3, 3>(row, col);
    view += m;
}

/// Whole-body model for one contact set.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceModel {
    pub contacts: Vec<ContactStiffness>,
    pub a: Matrix6<f64>,
}

impl ComplianceModel {
    pub fn new(contacts: Vec<ContactStiffness>) -> Self {
        let a = assemble_whole_body(&contacts);
        Self { contacts, a }
    }

    /// Right-hand side `[F; M] + Σ [K; P K] δ_wall`.
    pub fn sagdown_rhs(&self, load: &ExternalLoad, delta_wall: &[Vector3<f64>]) -> Vector6<f64> {
        assert_eq!(delta_wall.len(), self.contacts.len());
        let mut rhs = load.wrench();
        for (c, d) in self.contacts.iter().zip(delta_wall) {
            let kd = c.k * d;
            add_wrench(&mut rhs, &kd, &(c.p * kd));
        }
        rhs
    }
}

pub fn solve_sagdown(
    model: &ComplianceModel,
    load: &ExternalLoad,
    delta_wall: &[Vector3<f64>],
) -> Result<Vector6<f64>, ComplianceError> {
    if model.contacts.is_empty() {
        return Err(ComplianceError::NoContacts);
    }
    let eig = SymmetricEigen::new(model.a);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if max == 0.0 || min <= 1e-12 * max {
        return Err(ComplianceError::RankDeficient);
    }
    let rhs = model.sagdown_rhs(load, delta_wall);
    let lu = model.a.lu();
    let mut x = lu.solve(&rhs).ok_or(ComplianceError::RankDeficient)?;
    // One step of iterative refinement keeps the residual near round-off.
    let r = rhs - model.a * x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    Ok(x)
}

pub fn contact_forces(
    model: &ComplianceModel,
    delta_wall: &[Vector3<f64>],
    delta_com: &Vector6<f64>,
) -> Vec<Vector3<f64>> {
    model
        .contacts
        .iter()
        .zip(delta_wall)
        .map(|(c, d)| c.k * (d - c.rigid_map() * delta_com))
        .collect()
}

pub fn joint_torques(j: &Matrix3<f64>, f: &Vector3<f64>) -> Vector3<f64> {
    j.transpose() * f
}

fn add_wrench(w: &mut Vector6<f64>, force: &Vector3<f64>, moment: &Vector3<f64>) {
    let mut top = w.fixed_rows_mut::<3>(0);
    top += force;
    let mut bottom = w.fixed_rows_mut::<3>(3);
    bottom += moment;
}

/// `[Σ f + F; Σ P f + M]`, zero at static equilibrium.
pub fn equilibrium_residual(model: &ComplianceModel, forces: &[Vector3<f64>], load: &ExternalLoad) -> Vector6<f64> {
    let mut r = load.wrench();
    for (c, f) in model.contacts.iter().zip(forces) {
        add_wrench(&mut r, f, &(c.p * f));
    }
    r
}
