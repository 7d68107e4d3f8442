//! Scalar diagnostics of network iterates.

use serde::{Deserialize, Serialize};

use crate::linalg::{mean, Vector};
use crate::scenario::LocalSystem;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: usize,
    pub msd: f64,
    pub grad_norm: f64,
    /// ‖J⊥Z‖
    pub disagreement: f64,
    /// ‖J⊥G‖
    pub tracking: f64,
    /// ‖z̄ − z*‖
    pub avg_opt_error: f64,
    /// ‖ḡ − ∇F(z̄)‖
    pub inexact_grad: f64,
}

/// ‖Z − 1⊗z*‖² / R.
pub fn msd(z: &[Vector], reference: &Vector) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    z.iter().map(|zr| (zr - reference).norm_squared()).sum::<f64>() / z.len() as f64
}

/// Norm of the mean-removed stack, ‖(I − J) col(v_r)‖.
pub fn disagreement(blocks: &[Vector]) -> f64 {
    let avg = mean(blocks);
    blocks.iter().map(|b| (b - &avg).norm_squared()).sum::<f64>().sqrt()
}

pub fn tracking_disagreement(trackers: &[Vector]) -> f64 {
    disagreement(trackers)
}

/// (1/R) Σ ‖∇f_r(z_r)‖.
pub fn grad_norm(gradients: &[Vector]) -> f64 {
    if gradients.is_empty() {
        return 0.0;
    }
    gradients.iter().map(Vector::norm).sum::<f64>() / gradients.len() as f64
}

pub fn avg_opt_error(z: &[Vector], reference: &Vector) -> f64 {
    (mean(z) - reference).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochErrors {
    /// Mean over stations of ‖Δp̂ − Δp‖ / (1 + ‖Δp‖).
    pub e_pos: f64,
    /// Mean absolute bias error (m).
    pub e_z: f64,
}

/// Errors of an estimate (per-station local states and a global state) against the truth.
pub fn epoch_errors(x_hat: &[Vector], z_hat: &Vector, systems: &[LocalSystem], z_true: &Vector) -> EpochErrors {
    let e_pos = if systems.is_empty() {
        0.0
    } else {
        x_hat
            .iter()
            .zip(systems)
            .map(|(x, sys)| match sys.layout.position_range() {
                Some(range) => {
                    let est = x.rows(range.start, range.len());
                    let truth = sys.x_true.rows(range.start, range.len());
                    (est - truth).norm() / (1.0 + truth.norm())
                }
                None => 0.0,
            })
            .sum::<f64>()
            / systems.len() as f64
    };
    let d = z_true.len();
    let e_z = if d == 0 {
        0.0
    } else {
        (z_hat - z_true).iter().map(|v| v.abs()).sum::<f64>() / d as f64
    };
    EpochErrors { e_pos, e_z }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line through (x, y).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Fit of log₁₀ MSD against iteration over records with `lo <= iter <= hi`.
pub fn log_msd_fit(history: &[IterationMetrics], lo: usize, hi: usize) -> Option<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = history
        .iter()
        .filter(|m| m.iter >= lo && m.iter <= hi && m.msd > 0.0)
        .map(|m| (m.iter as f64, m.msd.log10()))
        .unzip();
    linear_fit(&x, &y)
}

/// First iteration at which MSD drops below `tol`.
pub fn iterations_to_tolerance(history: &[IterationMetrics], tol: f64) -> Option<usize> {
    history.iter().find(|m| m.msd < tol).map(|m| m.iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{disagreement_projector, stack, Matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> Vector {
        Vector::from_vec(x.to_vec())
    }

    fn random_blocks(seed: u64, r: usize, d: usize) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..r).map(|_| Vector::from_fn(d, |_, _| rng.random_range(-2.0..2.0))).collect()
    }

    #[test]
    fn msd_examples() {
        let zs = v(&[0.5, -1.0]);
        assert_eq!(msd(&[zs.clone(), zs.clone()], &zs), 0.0);
        assert_eq!(msd(&[v(&[1.0]), v(&[-1.0])], &v(&[0.0])), 1.0);
        let blocks = random_blocks(1, 5, 3);
        let reference = v(&[0.1, 0.2, 0.3]);
        let mut direct = 0.0;
        for b in &blocks {
            for i in 0..3 {
                direct += (b[i] - reference[i]).powi(2);
            }
        }
        assert!((msd(&blocks, &reference) - direct / 5.0).abs() < 1e-14);
    }

    #[test]
    fn disagreement_examples() {
        assert_eq!(disagreement(&[v(&[3.0]), v(&[3.0])]), 0.0);
        assert!((disagreement(&[v(&[0.0]), v(&[2.0])]) - 2f64.sqrt()).abs() < 1e-15);
        let blocks = random_blocks(2, 4, 3);
        let proj = disagreement_projector(4).kronecker(&Matrix::identity(3, 3));
        let oracle = (proj * stack(&blocks)).norm();
        assert!((disagreement(&blocks) - oracle).abs() < 1e-13);
        assert!((tracking_disagreement(&blocks) - oracle).abs() < 1e-13);
    }

    #[test]
    fn zero_disagreement_iff_equal_blocks() {
        let z = v(&[1.0, -4.0]);
        let same = vec![z.clone(); 3];
        assert!(disagreement(&same) <= 1e-12 * (1.0 + z.norm()));
        let mut diff = same.clone();
        diff[1][0] += 1e-6;
        assert!(disagreement(&diff) > 0.0);
    }

    #[test]
    fn epoch_errors_hand_computed() {
        use crate::scenario::LocalLayout;
        let sys = LocalSystem {
            station: 0,
            a: Matrix::zeros(1, 4),
            b: Matrix::zeros(1, 1),
            q: Matrix::identity(1, 1),
            y: Vector::zeros(1),
            x_true: v(&[3.0, 0.0, 4.0, 9.0]),
            layout: LocalLayout { position: true, clock: 3, ambiguities: vec![] },
        };
        let exact = epoch_errors(&[sys.x_true.clone()], &v(&[2.0]), std::slice::from_ref(&sys), &v(&[2.0]));
        assert_eq!(exact, EpochErrors { e_pos: 0.0, e_z: 0.0 });
        // position off by (0, 1, 0): 1 / (1 + 5); bias off by 0.25
        let est = v(&[3.0, 1.0, 4.0, -1.0]);
        let e = epoch_errors(&[est], &v(&[2.25]), std::slice::from_ref(&sys), &v(&[2.0]));
        assert!((e.e_pos - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(e.e_z, 0.25);
    }

    #[test]
    fn fit_and_tolerance() {
        let hist: Vec<IterationMetrics> = (0..50)
            .map(|k| IterationMetrics { iter: k, msd: 10f64.powf(-0.1 * k as f64), ..Default::default() })
            .collect();
        let fit = log_msd_fit(&hist, 5, 40).unwrap();
        assert!((fit.slope + 0.1).abs() < 1e-12);
        assert!(fit.r_squared > 0.999_999);
        assert_eq!(iterations_to_tolerance(&hist, 1e-3), Some(31));
        assert_eq!(iterations_to_tolerance(&hist, 1e-30), None);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn grad_norm_is_average() {
        assert_eq!(grad_norm(&[v(&[3.0, 4.0]), v(&[0.0, 1.0])]), 3.0);
        assert_eq!(avg_opt_error(&[v(&[1.0]), v(&[3.0])], &v(&[2.0])), 0.0);
    }
}
