//! Per-station reduced objective with the local unknowns eliminated.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Matrix, Vector};
use crate::scenario::LocalSystem;

/// Condition estimate of AᵀQ⁻¹A above which a system is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// f_r(z) = ½‖C_r(B_r z − y_r)‖²_{Q_r⁻¹} with its cached quadratic form.
///
/// Everything is computed in the whitened frame Q_r = LLᵀ, where C_r becomes
/// an orthogonal projector built from a thin QR factorization of L⁻¹A_r.
#[derive(Debug, Clone)]
pub struct ReducedObjective {
    station: usize,
    /// R⁻¹Q₁ᵀ applied to whitened observations: x = solve_y − solve_b z.
    solve_y: Vector,
    solve_b: Matrix,
    /// Whitened residual operators (I − Q₁Q₁ᵀ)L⁻¹B and (I − Q₁Q₁ᵀ)L⁻¹y.
    residual_b: Matrix,
    residual_y: Vector,
    hessian: Matrix,
    offset: Vector,
    chol: Matrix,
    a_w: Matrix,
    b_w: Matrix,
    y_w: Vector,
    ortho: Matrix,
}

impl ReducedObjective {
    pub fn new(system: &LocalSystem) -> Result<Self> {
        system.validate()?;
        let station = system.station;
        let (m, n) = (system.rows(), system.local_dim());
        let chol = Cholesky::new(system.q.clone())
            .ok_or_else(|| Error::InvalidMatrix(format!("station {station}: covariance is not positive definite")))?
            .l();
        let whiten = |x: &Matrix| {
            chol.solve_lower_triangular(x)
                .expect("cholesky factor has a positive diagonal")
        };
        let a_w = whiten(&system.a);
        let b_w = whiten(&system.b);
        let y_w = whiten(&Matrix::from_column_slice(m, 1, system.y.as_slice())).column(0).into_owned();
        if m < n {
            return Err(Error::RankDeficient { station, condition: f64::INFINITY });
        }
        let qr = a_w.clone().qr();
        let r = qr.r();
        let ortho = qr.q();
        let sv = r.singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        let condition = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::RankDeficient { station, condition });
        }
        let coef_b = ortho.transpose() * &b_w;
        let coef_y = ortho.transpose() * &y_w;
        let residual_b = &b_w - &ortho * &coef_b;
        let residual_y = &y_w - &ortho * &coef_y;
        let hessian = residual_b.transpose() * &residual_b;
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        let offset = residual_b.transpose() * &residual_y;
        let solve_b = r
            .solve_upper_triangular(&coef_b)
            .ok_or(Error::RankDeficient { station, condition })?;
        let solve_y = r
            .solve_upper_triangular(&coef_y)
            .ok_or(Error::RankDeficient { station, condition })?;
        Ok(Self {
            station,
            solve_y,
            solve_b,
            residual_b,
            residual_y,
            hessian,
            offset,
            chol,
            a_w,
            b_w,
            y_w,
            ortho,
        })
    }

    pub fn station(&self) -> usize {
        self.station
    }

    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    /// C_r = I − A(AᵀQ⁻¹A)⁻¹AᵀQ⁻¹ in the original (unwhitened) frame.
    pub fn projector(&self) -> Matrix {
        let m = self.ortho.nrows();
        let whitened = Matrix::identity(m, m) - &self.ortho * self.ortho.transpose();
        let inv_l = self
            .chol
            .solve_lower_triangular(&Matrix::identity(m, m))
            .expect("cholesky factor has a positive diagonal");
        &self.chol * whitened * inv_l
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn offset(&self) -> &Vector {
        &self.offset
    }

    pub fn value(&self, z: &Vector) -> f64 {
        let r = &self.residual_b * z - &self.residual_y;
        0.5 * r.norm_squared()
    }

    /// ½‖A x + B z − y‖²_{Q⁻¹}.
    pub fn joint_value(&self, x: &Vector, z: &Vector) -> f64 {
        let r = &self.a_w * x + &self.b_w * z - &self.y_w;
        0.5 * r.norm_squared()
    }

    /// ∇_z of the joint objective at fixed x.
    pub fn joint_gradient_z(&self, x: &Vector, z: &Vector) -> Vector {
        let r = &self.a_w * x + &self.b_w * z - &self.y_w;
        self.b_w.transpose() * r
    }

    pub fn gradient(&self, z: &Vector) -> Vector {
        &self.hessian * z - &self.offset
    }

    /// Exact minimizer of the joint objective over x for fixed z.
    pub fn local_x(&self, z: &Vector) -> Vector {
        &self.solve_y - &self.solve_b * z
    }
}

pub fn solve_local_x(system: &LocalSystem, z: &Vector) -> Result<Vector> {
    Ok(ReducedObjective::new(system)?.local_x(z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness {
    pub l: f64,
    pub m: f64,
    pub condition: f64,
}

/// L = max_r λ_max(H_r), m = λ_min(mean H_r), Q = L/m.
pub fn smoothness_constants(objs: &[ReducedObjective]) -> Result<Smoothness> {
    let hessians: Vec<&Matrix> = objs.iter().map(ReducedObjective::hessian).collect();
    smoothness_of(&hessians)
}

pub fn smoothness_of(hessians: &[&Matrix]) -> Result<Smoothness> {
    let first = hessians
        .first()
        .ok_or_else(|| Error::Config("smoothness constants need at least one node".into()))?;
    let d = first.nrows();
    let mut total = Matrix::zeros(d, d);
    let mut l: f64 = 0.0;
    for h in hessians {
        l = l.max(symmetric_eigenvalues(h).last().copied().unwrap_or(0.0));
        total += *h;
    }
    total /= hessians.len() as f64;
    let m = symmetric_eigenvalues(&total).first().copied().unwrap_or(0.0);
    if !(m > 0.0) {
        return Err(Error::NotStronglyConvex(m));
    }
    Ok(Smoothness { l, m, condition: l / m })
}
