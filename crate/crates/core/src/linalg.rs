//! Small dense linear-algebra helpers shared by the spectral diagnostics.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// The consensus operator (1/n) 11ᵀ.
pub fn consensus_operator(n: usize) -> Matrix {
    Matrix::from_element(n, n, 1.0 / n as f64)
}

/// I − (1/n) 11ᵀ.
pub fn disagreement_projector(n: usize) -> Matrix {
    Matrix::identity(n, n) - consensus_operator(n)
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Eigenvalues of a symmetric matrix, sorted ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut values: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Moduli of the (possibly complex) eigenvalues of a square matrix, sorted descending.
pub fn eigenvalue_moduli(m: &Matrix) -> Vec<f64> {
    let mut moduli: Vec<f64> = if is_symmetric(m, 1e-14) {
        symmetric_eigenvalues(m).into_iter().map(f64::abs).collect()
    } else {
        m.complex_eigenvalues().iter().map(|c| c.norm()).collect()
    };
    moduli.sort_by(|a, b| b.total_cmp(a));
    moduli
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = 1.0 + m.amax();
    (m - m.transpose()).amax() <= tol * scale
}

/// Max-row-sum norm.
pub fn inf_norm(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Stacks per-node vectors into one column, node-major.
pub fn stack(blocks: &[Vector]) -> Vector {
    let total: usize = blocks.iter().map(|b| b.len()).sum();
    let mut out = Vector::zeros(total);
    let mut offset = 0;
    for b in blocks {
        out.rows_mut(offset, b.len()).copy_from(b);
        offset += b.len();
    }
    out
}

pub fn mean(blocks: &[Vector]) -> Vector {
    let dim = blocks.first().map_or(0, |b| b.len());
    let mut acc = Vector::zeros(dim);
    for b in blocks {
        acc += b;
    }
    if !blocks.is_empty() {
        acc /= blocks.len() as f64;
    }
    acc
}

/// Formats a float with full round-trip precision (17 significant digits).
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}
