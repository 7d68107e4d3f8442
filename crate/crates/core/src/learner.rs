//! Learning τ-periodic mixing schedules.
//!
//! The product of the τ mixing matrices is treated as a deep linear network
//! and trained toward the consensus operator (1/R)11ᵀ. Each iteration takes
//! an exponentiated-gradient (multiplicative) step per layer, re-applies the
//! snapshot mask and restores double stochasticity with a masked
//! Sinkhorn–Knopp scaling. The scaling itself is not differentiated through.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{build_masks, contraction_factor, Mask, MixingMatrix, MixingSchedule, TimeVaryingGraph};
use crate::linalg::{consensus_operator, fmt_full, Matrix, Vector};

/// Exponents of the multiplicative step are clipped to ±this value.
pub const EXPONENT_CLAMP: f64 = 50.0;

/// Loss may not grow by more than this factor between consecutive iterations.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Positive weights are kept at or above this during training. Entries on
/// unused edges otherwise decay into subnormal range, where arithmetic is
/// orders of magnitude slower; the final polish prunes them anyway.
pub const ENTRY_FLOOR: f64 = 1e-200;

/// Newton iterations allowed when polishing the final layers.
pub const NEWTON_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub lazy_parameterization: bool,
    pub sinkhorn_rounds: usize,
    pub sinkhorn_tol: f64,
    pub init_seed: u64,
    /// Round budget for the final polishing projection after training.
    pub final_sinkhorn_rounds: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            step_size: 8e3,
            max_iters: 30_000,
            lazy_parameterization: true,
            sinkhorn_rounds: 50,
            sinkhorn_tol: 1e-12,
            init_seed: 0,
            final_sinkhorn_rounds: 5_000,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!(
                "learner step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("learner max_iters must be at least 1".into()));
        }
        if self.sinkhorn_rounds == 0 || self.final_sinkhorn_rounds == 0 {
            return Err(Error::Config("sinkhorn rounds must be at least 1".into()));
        }
        if !(self.sinkhorn_tol > 0.0) {
            return Err(Error::Config("sinkhorn tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    /// Loss after the projection of each iteration; entry 0 is the initial loss.
    pub losses: Vec<f64>,
    pub final_epsilon: f64,
    /// Number of step-matrix entries whose exponent hit the clamp.
    pub clamped_entries: usize,
    /// Worst Sinkhorn residual left after any training iteration.
    pub max_sinkhorn_residual: f64,
    /// Residual after the final polishing projection.
    pub final_sinkhorn_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornStats {
    pub rounds: usize,
    pub residual: f64,
}

/// Product W^(τ−1)···W^(0) of the effective factors.
pub fn forward_product(schedule: &MixingSchedule) -> Matrix {
    let factors = schedule.effective_matrices();
    product_of(&factors)
}

fn product_of(factors: &[Matrix]) -> Matrix {
    let n = factors[0].nrows();
    factors
        .iter()
        .fold(Matrix::identity(n, n), |acc, f| f * acc)
}

/// ‖forward_product − (1/R)11ᵀ‖_F².
pub fn loss(schedule: &MixingSchedule) -> f64 {
    let p = forward_product(schedule);
    (p - consensus_operator(schedule.size())).norm_squared()
}

/// ∂ℒ/∂W^(l) for every layer, with respect to the raw (not lazy-transformed) weights.
pub fn loss_gradients(schedule: &MixingSchedule) -> Vec<Matrix> {
    let factors = schedule.effective_matrices();
    let scale = if schedule.is_lazy() { 0.5 } else { 1.0 };
    gradients_of(&factors, scale).1
}

/// Loss and raw-weight gradients for arbitrary square layers, which need not
/// be doubly stochastic (finite-difference checks perturb single entries).
pub fn raw_loss_gradients(layers: &[Matrix], lazy: bool) -> (f64, Vec<Matrix>) {
    assert!(!layers.is_empty(), "at least one layer");
    let factors: Vec<Matrix> = layers
        .iter()
        .map(|w| if lazy { (w + Matrix::identity(w.nrows(), w.ncols())) * 0.5 } else { w.clone() })
        .collect();
    gradients_of(&factors, if lazy { 0.5 } else { 1.0 })
}

/// Returns (loss, gradients) for effective factors; `chain` scales the gradients.
fn gradients_of(factors: &[Matrix], chain: f64) -> (f64, Vec<Matrix>) {
    let tau = factors.len();
    let n = factors[0].nrows();
    // before[l] = F_{l-1}···F_0
    let mut before = Vec::with_capacity(tau + 1);
    before.push(Matrix::identity(n, n));
    for f in factors {
        let next = f * before.last().expect("nonempty");
        before.push(next);
    }
    let residual = &before[tau] - consensus_operator(n);
    let loss = residual.norm_squared();
    let e = residual * 2.0;
    // after[l] = F_{τ-1}···F_{l+1}
    let mut after = vec![Matrix::identity(n, n); tau];
    for l in (0..tau.saturating_sub(1)).rev() {
        after[l] = &after[l + 1] * &factors[l + 1];
    }
    let grads = (0..tau)
        .map(|l| after[l].transpose() * &e * before[l].transpose() * chain)
        .collect();
    (loss, grads)
}

/// Ŵ = W ⊙ exp(−η ∇), with exponents clamped to ±[`EXPONENT_CLAMP`].
/// Returns the stepped matrix and the number of clamped entries.
pub fn exponentiated_step(matrix: &Matrix, gradient: &Matrix, step_size: f64) -> (Matrix, usize) {
    let mut clamped = 0;
    let stepped = matrix.zip_map(gradient, |w, g| {
        if w == 0.0 {
            return 0.0;
        }
        let mut e = -step_size * g;
        if e.abs() > EXPONENT_CLAMP {
            clamped += 1;
            e = e.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP);
        }
        w * e.exp()
    });
    (stepped, clamped)
}

/// Alternating row/column normalization restricted to the mask support.
///
/// Stops once max |row sum − 1| < `tol` after a column pass (column sums are
/// then exact), or after `rounds` passes.
pub fn masked_sinkhorn(
    matrix: &Matrix,
    mask: &Mask,
    rounds: usize,
    tol: f64,
) -> Result<(MixingMatrix, SinkhornStats)> {
    let n = mask.size();
    if matrix.nrows() != n || matrix.ncols() != n {
        return Err(Error::Dimension(format!(
            "{}x{} matrix against a mask of size {n}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    for r in 0..n {
        for q in 0..n {
            let v = matrix[(r, q)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Sinkhorn(format!("entry ({r},{q}) = {v} is not a finite nonnegative value")));
            }
            if v > 0.0 && !mask.contains(r, q) {
                return Err(Error::Sinkhorn(format!("positive entry ({r},{q}) outside the mask support")));
            }
        }
    }
    let mut w = matrix.clone();
    let mut residual = f64::INFINITY;
    let mut used = 0;
    let mut row_sums = vec![0.0; n];
    for round in 0..rounds {
        used = round + 1;
        // storage is column-major: accumulate row sums column by column
        row_sums.iter_mut().for_each(|s| *s = 0.0);
        for col in w.column_iter() {
            for (s, v) in row_sums.iter_mut().zip(col.iter()) {
                *s += v;
            }
        }
        if row_sums.iter().any(|&s| s <= 0.0) {
            return Err(Error::Sinkhorn("row of zeros".into()));
        }
        for mut col in w.column_iter_mut() {
            for (v, s) in col.iter_mut().zip(&row_sums) {
                *v /= s;
            }
        }
        for mut col in w.column_iter_mut() {
            let s: f64 = col.sum();
            if s <= 0.0 {
                return Err(Error::Sinkhorn("column of zeros".into()));
            }
            col /= s;
        }
        row_sums.iter_mut().for_each(|s| *s = 0.0);
        for col in w.column_iter() {
            for (s, v) in row_sums.iter_mut().zip(col.iter()) {
                *s += v;
            }
        }
        residual = row_sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        if residual < tol {
            break;
        }
    }
    Ok((MixingMatrix::from_raw(w), SinkhornStats { rounds: used, residual }))
}

/// Newton's method on the log-domain scaling potential
/// ψ(a, b) = Σ w_rq e^(a_r + b_q) − Σ a − Σ b, whose gradient is the vector of
/// row and column sum residuals. Polishes an almost-balanced matrix to
/// rounding level where plain Sinkhorn stalls on very uneven entries.
/// Returns the balanced matrix and max |sum − 1| over rows and columns.
pub fn newton_balance(matrix: &Matrix, tol: f64, max_iters: usize) -> (Matrix, f64) {
    let n = matrix.nrows();
    let scaled = |a: &Vector, b: &Vector| Matrix::from_fn(n, n, |r, q| matrix[(r, q)] * (a[r] + b[q]).exp());
    let potential = |w: &Matrix, a: &Vector, b: &Vector| w.sum() - a.sum() - b.sum();
    let residual_of = |w: &Matrix| {
        let rows = w.column_sum().map(|v| v - 1.0);
        let cols = w.row_sum().transpose().map(|v| v - 1.0);
        (rows, cols)
    };
    let mut a = Vector::zeros(n);
    let mut b = Vector::zeros(n);
    let mut w = matrix.clone();
    for _ in 0..max_iters {
        let (rows, cols) = residual_of(&w);
        let res = rows.amax().max(cols.amax());
        if res < tol {
            return (w, res);
        }
        // unknowns (a_0..a_{n-1}, b_1..b_{n-1}); b_0 = 0 fixes the gauge
        let dim = 2 * n - 1;
        let mut jac = Matrix::zeros(dim, dim);
        let mut rhs = Vector::zeros(dim);
        for r in 0..n {
            jac[(r, r)] = rows[r] + 1.0;
            rhs[r] = -rows[r];
        }
        for q in 1..n {
            jac[(n + q - 1, n + q - 1)] = cols[q] + 1.0;
            rhs[n + q - 1] = -cols[q];
            for r in 0..n {
                jac[(r, n + q - 1)] = w[(r, q)];
                jac[(n + q - 1, r)] = w[(r, q)];
            }
        }
        // A decomposable support leaves one gauge freedom per block; the
        // small ridge makes those directions inert.
        for i in 0..dim {
            jac[(i, i)] += 1e-12;
        }
        let Some(step) = jac.cholesky().map(|c| c.solve(&rhs)) else {
            break;
        };
        let da = step.rows(0, n).into_owned();
        let mut db = Vector::zeros(n);
        db.rows_mut(1, n - 1).copy_from(&step.rows(n, n - 1));
        let base = potential(&w, &a, &b);
        let slope = -(rows.dot(&da) + cols.dot(&db));
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let (na, nb) = (&a + &da * t, &b + &db * t);
            let nw = scaled(&na, &nb);
            // Near the solution the potential decrease drops below the
            // rounding of Σw, so a smaller residual also accepts the step.
            let (nr, nc) = residual_of(&nw);
            if potential(&nw, &na, &nb) <= base - 1e-4 * t * slope || nr.amax().max(nc.amax()) < 0.5 * res {
                a = na;
                b = nb;
                w = nw;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (rows, cols) = residual_of(&w);
    let res = rows.amax().max(cols.amax());
    (w, res)
}

/// Entries (of a row-normalized layer) below this are dropped before the final
/// balancing; the exponentiated step drives unused edges toward underflow.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// Zeroes every entry of `matrix` that lies on no positive diagonal, i.e. on
/// no perfect matching of the bipartite support graph. Sinkhorn and Newton
/// balancing only converge geometrically on such a support. Returns `None`
/// if the support admits no perfect matching at all.
pub fn total_support_core(matrix: &Matrix) -> Option<Matrix> {
    let n = matrix.nrows();
    let adj: Vec<Vec<usize>> = (0..n).map(|r| (0..n).filter(|&q| matrix[(r, q)] > 0.0).collect()).collect();
    // augmenting-path matching, row -> column
    let mut col_match: Vec<Option<usize>> = vec![None; n];
    fn augment(r: usize, adj: &[Vec<usize>], seen: &mut [bool], col_match: &mut [Option<usize>]) -> bool {
        for &q in &adj[r] {
            if !seen[q] {
                seen[q] = true;
                if col_match[q].is_none_or(|r2| augment(r2, adj, seen, col_match)) {
                    col_match[q] = Some(r);
                    return true;
                }
            }
        }
        false
    }
    for r in 0..n {
        let mut seen = vec![false; n];
        if !augment(r, &adj, &mut seen, &mut col_match) {
            return None;
        }
    }
    let mut row_match = vec![0; n];
    for (q, r) in col_match.iter().enumerate() {
        row_match[r.expect("perfect matching")] = q;
    }
    // Entry (r, q) is on some perfect matching iff it is matched or r and
    // the row matched to q share a strongly connected component of the
    // row graph r -> row_of(q) for every support entry (r, q).
    let succ: Vec<Vec<usize>> = adj
        .iter()
        .map(|cols| cols.iter().map(|&q| col_match[q].expect("perfect matching")).collect())
        .collect();
    let comp = strongly_connected(&succ);
    Some(Matrix::from_fn(n, n, |r, q| {
        let v = matrix[(r, q)];
        if v > 0.0 && (row_match[r] == q || comp[r] == comp[col_match[q].expect("perfect matching")]) {
            v
        } else {
            0.0
        }
    }))
}

/// Tarjan's algorithm, iterative; returns a component label per vertex.
fn strongly_connected(succ: &[Vec<usize>]) -> Vec<usize> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let (mut next_index, mut next_comp) = (0, 0);
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// Final projection of a trained layer: prune underflowed entries, restrict
/// to the total-support core, then Sinkhorn followed by Newton polishing.
fn polish_layer(w: &Matrix, mask: &Mask, rounds: usize, tol: f64) -> Result<(MixingMatrix, f64)> {
    let pruned = w.map(|v| if v < PRUNE_THRESHOLD { 0.0 } else { v });
    let core = total_support_core(&pruned)
        .or_else(|| total_support_core(w))
        .ok_or_else(|| Error::Sinkhorn("layer support has no positive diagonal".into()))?;
    let (m, stats) = masked_sinkhorn(&core, mask, rounds, tol)?;
    if stats.residual < tol {
        return Ok((m, stats.residual));
    }
    let (balanced, residual) = newton_balance(m.weights(), tol, NEWTON_ITERS);
    Ok((MixingMatrix::from_raw(balanced), residual))
}

/// Trains a schedule on `graph`. The returned schedule carries the lazy flag
/// of the configuration, so its effective factors are what diffusion consumes.
pub fn train(graph: &TimeVaryingGraph, config: &LearnerConfig) -> Result<(MixingSchedule, TrainingTrace)> {
    config.validate()?;
    let masks = build_masks(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let mut layers = Vec::with_capacity(masks.len());
    for mask in &masks {
        let init = Matrix::from_fn(mask.size(), mask.size(), |r, q| {
            if mask.contains(r, q) {
                // (0, 1]: a zero draw would drop the entry from the support
                1.0 - rng.random::<f64>()
            } else {
                0.0
            }
        });
        let (w, _) = masked_sinkhorn(&init, mask, config.sinkhorn_rounds, config.sinkhorn_tol)?;
        layers.push(w.into_weights());
    }

    let lazy = config.lazy_parameterization;
    let chain = if lazy { 0.5 } else { 1.0 };
    let effective = |layers: &[Matrix]| -> Vec<Matrix> {
        layers
            .iter()
            .map(|w| {
                if lazy {
                    (w + Matrix::identity(w.nrows(), w.ncols())) * 0.5
                } else {
                    w.clone()
                }
            })
            .collect()
    };

    let mut trace = TrainingTrace::default();
    let (mut current_loss, mut grads) = gradients_of(&effective(&layers), chain);
    trace.losses.push(current_loss);

    for iteration in 0..config.max_iters {
        let stepped: Vec<Result<(Matrix, usize, SinkhornStats)>> = layers
            .par_iter()
            .zip(grads.par_iter())
            .zip(masks.par_iter())
            .map(|((w, g), mask)| {
                let (hat, clamped) = exponentiated_step(w, g, config.step_size);
                let tilde = hat.zip_map(&mask.to_matrix(), |a, m| a * m);
                let (projected, stats) =
                    masked_sinkhorn(&tilde, mask, config.sinkhorn_rounds, config.sinkhorn_tol)?;
                let floored = projected.into_weights().map(|v| if v > 0.0 { v.max(ENTRY_FLOOR) } else { 0.0 });
                Ok((floored, clamped, stats))
            })
            .collect();
        for (l, result) in stepped.into_iter().enumerate() {
            let (w, clamped, stats) = result?;
            layers[l] = w;
            trace.clamped_entries += clamped;
            trace.max_sinkhorn_residual = trace.max_sinkhorn_residual.max(stats.residual);
        }
        let (next_loss, next_grads) = gradients_of(&effective(&layers), chain);
        if !next_loss.is_finite() || next_loss > DIVERGENCE_FACTOR * current_loss.max(f64::MIN_POSITIVE) {
            return Err(Error::TrainingDiverged {
                iteration,
                previous: current_loss,
                current: next_loss,
            });
        }
        trace.losses.push(next_loss);
        current_loss = next_loss;
        grads = next_grads;
    }

    let mut final_residual: f64 = 0.0;
    let mut matrices = Vec::with_capacity(layers.len());
    for (w, mask) in layers.iter().zip(&masks) {
        let tol = config.sinkhorn_tol.min(1e-13);
        let (m, residual) = polish_layer(w, mask, config.final_sinkhorn_rounds, tol)?;
        final_residual = final_residual.max(residual);
        matrices.push(m);
    }
    let schedule = MixingSchedule::new(matrices, lazy)?;
    trace.final_sinkhorn_residual = final_residual;
    trace.final_epsilon = contraction_factor(&schedule)?;
    if let Some(last) = trace.losses.last_mut() {
        *last = loss(&schedule);
    }
    Ok((schedule, trace))
}

/// Header fields of a schedule file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleHeader {
    pub size: usize,
    pub window: usize,
    pub lazy: bool,
    pub epsilon: f64,
}

/// Text form: comment lines, `key value` header lines, then τ dense
/// row-major matrices each introduced by `matrix l`.
pub fn schedule_to_text(schedule: &MixingSchedule, epsilon: f64, comments: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# gadiff mixing schedule v1");
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(out, "R {}", schedule.size());
    let _ = writeln!(out, "tau {}", schedule.window());
    let _ = writeln!(out, "lazy {}", u8::from(schedule.is_lazy()));
    let _ = writeln!(out, "epsilon {}", fmt_full(epsilon));
    for (l, m) in schedule.matrices().iter().enumerate() {
        let _ = writeln!(out, "matrix {l}");
        for row in m.weights().row_iter() {
            let line: Vec<String> = row.iter().map(|v| fmt_full(*v)).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

pub fn schedule_from_text(text: &str, origin: &str) -> Result<(MixingSchedule, ScheduleHeader)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut header_value = |key: &str| -> Result<(usize, String)> {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 0, key, "missing header line"))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::parse(origin, no, key, format!("expected `{key} <value>`")));
        }
        let value = parts
            .next()
            .ok_or_else(|| Error::parse(origin, no, key, "missing value"))?;
        Ok((no, value.to_string()))
    };
    let parse_usize = |(no, v): (usize, String), key: &str| -> Result<usize> {
        v.parse().map_err(|e: std::num::ParseIntError| Error::parse(origin, no, key, e.to_string()))
    };
    let size = parse_usize(header_value("R")?, "R")?;
    let window = parse_usize(header_value("tau")?, "tau")?;
    let lazy = parse_usize(header_value("lazy")?, "lazy")? != 0;
    let (no, eps) = header_value("epsilon")?;
    let epsilon: f64 = eps
        .parse()
        .map_err(|e: std::num::ParseFloatError| Error::parse(origin, no, "epsilon", e.to_string()))?;

    let mut matrices = Vec::with_capacity(window);
    for l in 0..window {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 0, "matrix", format!("missing matrix {l}")))?;
        if line != format!("matrix {l}") {
            return Err(Error::parse(origin, no, "matrix", format!("expected `matrix {l}`")));
        }
        let mut data = Vec::with_capacity(size * size);
        for r in 0..size {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, 0, "row", format!("matrix {l} row {r} missing")))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e: std::num::ParseFloatError| Error::parse(origin, no, "row", e.to_string()))?;
            if row.len() != size {
                return Err(Error::parse(origin, no, "row", format!("expected {size} values, got {}", row.len())));
            }
            data.extend(row);
        }
        let w = Matrix::from_row_slice(size, size, &data);
        matrices.push(MixingMatrix::new(w, 1e-8).map_err(|e| Error::parse(origin, no, "matrix", e.to_string()))?);
    }
    let schedule = MixingSchedule::new(matrices, lazy)?;
    Ok((
        schedule,
        ScheduleHeader {
            size,
            window,
            lazy,
            epsilon,
        },
    ))
}

pub fn write_schedule(path: &Path, schedule: &MixingSchedule, epsilon: f64, comments: &[String]) -> Result<()> {
    std::fs::write(path, schedule_to_text(schedule, epsilon, comments)).map_err(|e| Error::io(path, e))
}

pub fn read_schedule(path: &Path) -> Result<(MixingSchedule, ScheduleHeader)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    schedule_from_text(&text, &path.display().to_string())
}
