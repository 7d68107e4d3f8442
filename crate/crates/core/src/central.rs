//! Centralized joint weighted least squares over all stations.

use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Matrix, Vector};
use crate::local::ReducedObjective;
use crate::scenario::LocalSystem;

#[derive(Debug, Clone, Serialize)]
pub struct CentralSolution {
    pub z_hat: Vector,
    pub x_hat: Vec<Vector>,
    /// Inverse covariance of `z_hat`, Σ_r H_r.
    pub precision: Matrix,
}

pub fn solve_central(systems: &[LocalSystem]) -> Result<CentralSolution> {
    let objs: Vec<ReducedObjective> = systems
        .par_iter()
        .map(ReducedObjective::new)
        .collect::<Result<_>>()?;
    solve_central_from(&objs)
}

pub fn solve_central_from(objs: &[ReducedObjective]) -> Result<CentralSolution> {
    let d = objs
        .first()
        .ok_or_else(|| Error::Config("centralized solve needs at least one station".into()))?
        .dim();
    let mut precision = Matrix::zeros(d, d);
    let mut rhs = Vector::zeros(d);
    for o in objs {
        precision += o.hessian();
        rhs += o.offset();
    }
    let lo = symmetric_eigenvalues(&precision).first().copied().unwrap_or(0.0);
    let chol = Cholesky::new(precision.clone()).filter(|_| lo > 0.0).ok_or(Error::NotStronglyConvex(lo / objs.len() as f64))?;
    let z_hat = chol.solve(&rhs);
    let x_hat = objs.iter().map(|o| o.local_x(&z_hat)).collect();
    Ok(CentralSolution { z_hat, x_hat, precision })
}

/// sqrt((a − b)ᵀ P (a − b)).
pub fn mahalanobis(z_est: &Vector, z_truth: &Vector, precision: &Matrix) -> Result<f64> {
    Ok(mahalanobis_squared(z_est, z_truth, precision)?.sqrt())
}

pub fn mahalanobis_squared(z_est: &Vector, z_truth: &Vector, precision: &Matrix) -> Result<f64> {
    let d = z_est.len();
    if z_truth.len() != d || precision.nrows() != d || precision.ncols() != d {
        return Err(Error::Dimension(format!(
            "mahalanobis: vectors of length {d} and {} against a {}x{} precision",
            z_truth.len(),
            precision.nrows(),
            precision.ncols()
        )));
    }
    let lo = symmetric_eigenvalues(precision).first().copied().unwrap_or(0.0);
    let scale = precision.amax().max(1.0);
    if lo < -1e-12 * scale {
        return Err(Error::InvalidMatrix(format!("precision matrix not PSD (eigenvalue {lo:e})")));
    }
    let e = z_est - z_truth;
    Ok(e.dot(&(precision * &e)).max(0.0))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    /// Solve the full block system [blkdiag(A_r) | col(B_r)] in one go,
    /// whitening each block and using a single QR factorization.
    pub(crate) fn monolithic(systems: &[LocalSystem]) -> Vector {
        let d = systems[0].global_dim();
        let n_total: usize = systems.iter().map(LocalSystem::local_dim).sum::<usize>() + d;
        let m_total: usize = systems.iter().map(LocalSystem::rows).sum();
        let mut a = Matrix::zeros(m_total, n_total);
        let mut y = Vector::zeros(m_total);
        let (mut row, mut col) = (0, 0);
        for s in systems {
            let (m, n) = (s.rows(), s.local_dim());
            let l = s.q.clone().cholesky().unwrap().l();
            let li = l.try_inverse().unwrap();
            a.view_mut((row, col), (m, n)).copy_from(&(&li * &s.a));
            a.view_mut((row, n_total - d), (m, d)).copy_from(&(&li * &s.b));
            y.rows_mut(row, m).copy_from(&(&li * &s.y));
            row += m;
            col += n;
        }
        let qr = a.qr();
        let sol = qr.r().solve_upper_triangular(&(qr.q().transpose() * y)).unwrap();
        sol.rows(n_total - d, d).into_owned()
    }

    #[test]
    fn reduced_equals_monolithic() {
        for seed in 0..3 {
            let cfg = ScenarioConfig { stations: 6, satellites: 8, epochs: 1, seed, ..ScenarioConfig::default() };
            let s = generate_scenario(&cfg).unwrap();
            let sys = &s.epochs[0].systems;
            let sol = solve_central(sys).unwrap();
            let mono = monolithic(sys);
            let rel = (&sol.z_hat - &mono).norm() / mono.norm();
            assert!(rel < 1e-10, "seed {seed}: {rel:e}");
        }
    }

    #[test]
    fn noiseless_recovers_truth() {
        let cfg = ScenarioConfig { sigma_phase: 0.0, sigma_code: 0.0, epochs: 1, ..ScenarioConfig::default() };
        let s = generate_scenario(&cfg).unwrap();
        let sol = solve_central(&s.epochs[0].systems).unwrap();
        assert!((&sol.z_hat - &s.z_true).amax() < 1e-9);
        for (x, sys) in sol.x_hat.iter().zip(&s.epochs[0].systems) {
            assert!((x - &sys.x_true).amax() < 1e-9);
        }
    }

    #[test]
    fn gradient_optimality_and_precision_psd() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        let objs: Vec<_> = s.epochs[1].systems.iter().map(|x| ReducedObjective::new(x).unwrap()).collect();
        let sol = solve_central_from(&objs).unwrap();
        let mut grad = Vector::zeros(s.global_dim());
        let mut h = Vector::zeros(s.global_dim());
        for o in &objs {
            grad += o.gradient(&sol.z_hat);
            h += o.offset();
        }
        assert!(grad.norm() < 1e-8 * (1.0 + h.norm()));
        assert!(symmetric_eigenvalues(&sol.precision)[0] > 0.0);
    }

    #[test]
    fn single_station_is_standalone_wls() {
        let mut sys = crate::local::tests::random_system(9, 10, 4, 3);
        sys.station = 0;
        let sol = solve_central(std::slice::from_ref(&sys)).unwrap();
        let mono = monolithic(std::slice::from_ref(&sys));
        assert!((&sol.z_hat - &mono).amax() < 1e-10);
    }

    #[test]
    fn mahalanobis_examples() {
        let z = Vector::from_vec(vec![1.0, 2.0]);
        assert_eq!(mahalanobis(&z, &z, &Matrix::identity(2, 2)).unwrap(), 0.0);
        let e = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(mahalanobis(&e, &Vector::zeros(2), &Matrix::identity(2, 2)).unwrap(), 5.0);
        assert_eq!(mahalanobis_squared(&e, &Vector::zeros(2), &Matrix::identity(2, 2)).unwrap(), 25.0);
        let bad = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(mahalanobis(&e, &z, &bad).is_err());
        assert!(mahalanobis(&e, &Vector::zeros(3), &Matrix::identity(2, 2)).is_err());
    }
}
