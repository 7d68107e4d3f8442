//! Numerical instantiation of the convergence analysis: closed-form
//! constants, the 3×3 block recursion and its spectral radius, the step-size
//! bound, and inequality checks over recorded trajectories.

use std::fmt;

use nalgebra::{Complex, Matrix3};
use serde::Serialize;

use crate::diffusion::TrajectoryLog;
use crate::error::{Error, Result};
use crate::graph::{contraction_factor, disagreement_projector_norm, MixingSchedule};
use crate::linalg::Matrix;
use crate::local::Smoothness;

/// Relative slack allowed before an inequality counts as violated.
pub const VIOLATION_SLACK: f64 = 1e-8;

/// Additive slack on the per-window decay ratio.
pub const DECAY_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub l: f64,
    pub m: f64,
    pub condition: f64,
    pub window: usize,
    pub nodes: usize,
    pub epsilon: f64,
    pub c_w: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c_p: f64,
    pub c_s: f64,
    pub c_h: f64,
    pub k3: f64,
    pub mu_max: f64,
}

impl TheoryConstants {
    pub fn from_parameters(l: f64, m: f64, window: usize, nodes: usize, epsilon: f64, c_w: f64) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::NotStronglyConvex(m));
        }
        if !(l >= m) || !l.is_finite() {
            return Err(Error::Config(format!("smoothness {l} must be finite and at least m = {m}")));
        }
        if window == 0 || nodes == 0 {
            return Err(Error::Config("window and node count must be positive".into()));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::Config(format!("contraction factor {epsilon} outside [0, 1)")));
        }
        if !(c_w > 0.0) || !c_w.is_finite() {
            return Err(Error::Config(format!("c_W = {c_w} must be positive")));
        }
        let tau = window as f64;
        let c1 = 2.0 - 1.0 / tau;
        let c2 = (2.0 * tau + 1.0) * (tau - 1.0);
        let c3 = 1.0 + epsilon;
        let c4 = 2.0 * tau + 1.0;
        let gap = 1.0 - epsilon;
        let c_p = 2.0 + 4.0 * (1.0 + epsilon) / gap;
        let c_s = 4.0 / gap * c_p;
        let mix = c2 * c3 + tau * c4;
        let c_h = 2.0 * c1 * mix * (2.0 / gap + 4.0 * (1.0 + epsilon) / (gap * gap));
        let k3 = c_p
            * (19.0 * c1 * c2 * c2 * mix
                + 60.0 * c_s * c1 * c1 * c2 * mix * mix
                + 48.0 * c_s * c_s * (1.0 + c_p) * c1.powi(3) * mix.powi(3));
        let mut out = TheoryConstants {
            l,
            m,
            condition: l / m,
            window,
            nodes,
            epsilon,
            c_w,
            c1,
            c2,
            c3,
            c4,
            c_p,
            c_s,
            c_h,
            k3,
            mu_max: 0.0,
        };
        out.mu_max = out.step_terms().iter().map(|t| t.value).fold(f64::INFINITY, f64::min);
        Ok(out)
    }

    /// The four upper bounds on μ, in order.
    pub fn step_terms(&self) -> [StepTerm; 4] {
        let tau = self.window as f64;
        let inv = |x: f64| if x > 0.0 { 1.0 / x } else { f64::INFINITY };
        [
            StepTerm { name: "1/(tau m)", value: inv(tau * self.m) },
            StepTerm { name: "1/(4 c2 L)", value: inv(4.0 * self.c2 * self.l) },
            StepTerm { name: "1/(2 c_H' L)", value: inv(2.0 * self.c_h * self.l) },
            StepTerm {
                name: "sqrt(3 tau/(2 Q K3))/L",
                value: (3.0 * tau / (2.0 * self.condition * self.k3)).sqrt() / self.l,
            },
        ]
    }

    /// Copy with a different contraction factor; used for fault injection.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::from_parameters(self.l, self.m, self.window, self.nodes, epsilon, self.c_w)
    }

    pub fn alpha(&self, mu: f64) -> (f64, f64) {
        (1.0 - self.m * mu, mu * self.l / (self.nodes as f64).sqrt())
    }

    pub fn beta(&self, mu: f64) -> (f64, f64, f64) {
        let l = self.l;
        (
            l * self.c_w + mu * l * l,
            mu * l,
            mu * (self.nodes as f64).sqrt() * l * l,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepTerm {
    pub name: &'static str,
    pub value: f64,
}

/// c_W = max_l ‖J⊥(W_l − I)J⊥‖ over the effective factors.
pub fn measure_c_w(schedule: &MixingSchedule) -> f64 {
    (0..schedule.window())
        .map(|l| disagreement_projector_norm(&schedule.effective(l)))
        .fold(0.0, f64::max)
}

pub fn compute_constants(smoothness: &Smoothness, schedule: &MixingSchedule) -> Result<TheoryConstants> {
    let epsilon = contraction_factor(schedule)?;
    TheoryConstants::from_parameters(
        smoothness.l,
        smoothness.m,
        schedule.window(),
        schedule.size(),
        epsilon,
        measure_c_w(schedule),
    )
}

/// φ₀, φ₁, ψ₀, ψ₁ of the window-level recursion on
/// v_i = [c_W τ C_i, T_i / L, √R S_i].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSystem {
    pub phi0: Matrix3<f64>,
    pub phi1: Matrix3<f64>,
    pub psi0: Matrix3<f64>,
    pub psi1: Matrix3<f64>,
    pub window: usize,
}

impl BlockSystem {
    pub fn new(epsilon: f64, window: usize, c_w: f64, condition: f64) -> Self {
        let tau = window as f64;
        let a = c_w * tau;
        let e = epsilon;
        BlockSystem {
            phi0: Matrix3::new(e, 0.0, 0.0, 1.0, e, 0.0, 0.0, 0.0, 1.0),
            phi1: Matrix3::new(0.0, a, 0.0, 1.0 / a, 1.0, 1.0, 1.0 / a, 0.0, -1.0 / (2.0 * condition)),
            psi0: Matrix3::new(0.0, 0.0, 0.0, 1.0 - 1.0 / tau, 0.0, 0.0, 0.0, 0.0, 0.0),
            psi1: Matrix3::new(0.0, a, 0.0, 1.0 / a, 1.0, 1.0, 1.0 / a, 0.0, 0.0),
            window,
        }
    }

    pub fn from_constants(c: &TheoryConstants) -> Self {
        Self::new(c.epsilon, c.window, c.c_w, c.condition)
    }

    /// ℋ(ω) = (I − ψ₀ − ψ₁(τ−1)ω)⁻¹ (φ₀ + φ₁τω).
    pub fn h(&self, omega: f64) -> Result<Matrix3<f64>> {
        let tau = self.window as f64;
        let lhs = Matrix3::identity() - self.psi0 - self.psi1 * ((tau - 1.0) * omega);
        let inv = lhs
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::InvalidMatrix(format!("I - psi(omega) singular at omega = {omega:e}")))?;
        Ok(inv * (self.phi0 + self.phi1 * (tau * omega)))
    }

    pub fn eigenvalues(&self, omega: f64) -> Result<Vec<Complex<f64>>> {
        Ok(self.h(omega)?.complex_eigenvalues().iter().copied().collect())
    }
}

pub fn spectral_radius_h(blocks: &BlockSystem, omega: f64) -> Result<f64> {
    Ok(blocks.eigenvalues(omega)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Follows the eigenvalue that equals 1 at ω = 0 along `omegas` (which should
/// start near 0 and move in small steps), choosing the nearest eigenvalue
/// at each stop.
pub fn track_unit_eigenvalue(blocks: &BlockSystem, omegas: &[f64]) -> Result<Vec<f64>> {
    let mut current = Complex::new(1.0, 0.0);
    let mut out = Vec::with_capacity(omegas.len());
    for &w in omegas {
        let eig = blocks.eigenvalues(w)?;
        current = *eig
            .iter()
            .min_by(|a, b| (*a - current).norm().total_cmp(&(*b - current).norm()))
            .expect("3x3 matrix has eigenvalues");
        out.push(current.re);
    }
    Ok(out)
}

/// Central difference of the tracked unit eigenvalue at ω = 0.
pub fn unit_eigenvalue_slope(blocks: &BlockSystem, h: f64) -> Result<f64> {
    let up = track_unit_eigenvalue(blocks, &[h])?[0];
    let down = track_unit_eigenvalue(blocks, &[-h])?[0];
    Ok((up - down) / (2.0 * h))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSizeCheck {
    pub step_size: f64,
    pub admissible: bool,
    pub terms: [StepTerm; 4],
    /// term − μ for each bound; negative means that bound is violated.
    pub margins: [f64; 4],
    pub binding: &'static str,
}

pub fn stepsize_admissible(mu: f64, constants: &TheoryConstants) -> StepSizeCheck {
    let terms = constants.step_terms();
    let margins = terms.map(|t| t.value - mu);
    let binding = terms
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .map(|t| t.name)
        .unwrap_or("");
    StepSizeCheck {
        step_size: mu,
        admissible: margins.iter().all(|&m| m >= 0.0),
        terms,
        margins,
        binding,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub checked: usize,
    pub violations: usize,
    /// Largest (lhs − rhs) / (rhs + scale) seen; negative when every
    /// instance holds with room to spare.
    pub worst_excess: f64,
    pub skipped: Option<String>,
}

impl InequalityCheck {
    fn new(name: &'static str) -> Self {
        InequalityCheck {
            name,
            checked: 0,
            violations: 0,
            worst_excess: f64::NEG_INFINITY,
            skipped: None,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, scale: f64) {
        let excess = (lhs - rhs) / (rhs.abs() + scale);
        self.checked += 1;
        if excess > VIOLATION_SLACK || !excess.is_finite() {
            self.violations += 1;
        }
        self.worst_excess = self.worst_excess.max(excess);
    }
}

impl fmt::Display for InequalityCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.skipped {
            Some(why) => write!(f, "{:<24} skipped: {why}", self.name),
            None => write!(
                f,
                "{:<24} checked {:>7}  violations {:>5}  worst excess {:+.3e}",
                self.name, self.checked, self.violations, self.worst_excess
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub step_size: f64,
    pub epsilon: f64,
    pub checks: Vec<InequalityCheck>,
}

impl LemmaReport {
    pub fn total_violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn get(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for LemmaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# step size {:e}, contraction factor {:.6}", self.step_size, self.epsilon)?;
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

pub const AVERAGE_DESCENT: &str = "average-descent";
pub const DISAGREEMENT_RECURSION: &str = "disagreement-recursion";
pub const TRACKING_RECURSION: &str = "tracking-recursion";

/// Checks the per-iteration descent bound on ‖s‖ and the window recursions
/// for ‖C‖ and ‖T‖ along a recorded trajectory. Slack is relative to the
/// right-hand side plus the first-window size of the bounded quantity, so
/// rounding noise at convergence does not count as a violation.
pub fn check_lemmas(log: &TrajectoryLog, constants: &TheoryConstants) -> Result<LemmaReport> {
    let hist = &log.history;
    if hist.iter().enumerate().any(|(k, m)| m.iter != k) {
        return Err(Error::Config("inequality checks need a record for every iteration".into()));
    }
    let mu = log.step_size;
    let tau = constants.window;
    let c: Vec<f64> = hist.iter().map(|m| m.disagreement).collect();
    let t: Vec<f64> = hist.iter().map(|m| m.tracking).collect();
    let s: Vec<f64> = hist.iter().map(|m| m.avg_opt_error).collect();
    let first = |v: &[f64]| v.iter().take(tau).copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (c_scale, t_scale, s_scale) = (first(&c), first(&t), first(&s));

    let mut descent = InequalityCheck::new(AVERAGE_DESCENT);
    if mu * constants.l > 1.0 {
        descent.skipped = Some(format!("step size {mu:e} exceeds 1/L = {:e}", 1.0 / constants.l));
    } else {
        let (a1, a2) = constants.alpha(mu);
        for k in 0..hist.len().saturating_sub(1) {
            descent.record(s[k + 1], a1 * s[k] + a2 * c[k], s_scale);
        }
    }

    let mut disagreement = InequalityCheck::new(DISAGREEMENT_RECURSION);
    let mut tracking = InequalityCheck::new(TRACKING_RECURSION);
    let (b1, b2, b3) = constants.beta(mu);
    let eps = constants.epsilon;
    let mut i = 1;
    while i * tau < hist.len() {
        let base = (i - 1) * tau;
        let (mut sum_c, mut sum_t, mut sum_s) = (0.0, 0.0, 0.0);
        for j in base..i * tau {
            sum_c += c[j];
            sum_t += t[j];
            sum_s += s[j];
        }
        for k in i * tau..((i + 1) * tau).min(hist.len()) {
            disagreement.record(c[k], eps * c[base] + mu * sum_t, c_scale);
            tracking.record(t[k], eps * t[base] + b1 * sum_c + b2 * sum_t + b3 * sum_s, t_scale);
            sum_c += c[k];
            sum_t += t[k];
            sum_s += s[k];
        }
        i += 1;
    }
    Ok(LemmaReport {
        step_size: mu,
        epsilon: eps,
        checks: vec![descent, disagreement, tracking],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockDecay {
    pub windows: usize,
    /// Geometric-mean ratio of max(C_i, T_i, S_i) between consecutive windows.
    pub ratio: f64,
    /// 1 − (mτ/4)μ + slack.
    pub envelope: f64,
}

impl BlockDecay {
    pub fn holds(&self) -> bool {
        self.ratio <= self.envelope
    }
}

/// Per-window maxima of ‖C‖, ‖T‖, ‖s‖ and their average decay ratio,
/// counting only windows above `floor` times the first window.
pub fn block_decay(log: &TrajectoryLog, constants: &TheoryConstants, floor: f64) -> Option<BlockDecay> {
    let tau = constants.window;
    let values: Vec<f64> = log
        .history
        .chunks_exact(tau)
        .map(|w| {
            w.iter()
                .map(|m| m.disagreement.max(m.tracking).max(m.avg_opt_error))
                .fold(0.0, f64::max)
        })
        .collect();
    let v0 = *values.first()?;
    let kept: Vec<f64> = values.into_iter().take_while(|&v| v > floor * v0).collect();
    if kept.len() < 2 {
        return None;
    }
    let n = kept.len() - 1;
    let ratio = (kept[n] / kept[0]).powf(1.0 / n as f64);
    Some(BlockDecay {
        windows: kept.len(),
        ratio,
        envelope: 1.0 - constants.m * tau as f64 * log.step_size / 4.0 + DECAY_SLACK,
    })
}

/// Dense copy of a 3×3 block matrix, for callers working in `Matrix`.
pub fn to_dense(m: &Matrix3<f64>) -> Matrix {
    Matrix::from_fn(3, 3, |r, c| m[(r, c)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{run, Network, RunConfig};
    use crate::graph::{metropolis_weights, TimeVaryingGraph};
    use crate::linalg::inf_norm;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn closed_form_constants() {
        let c = TheoryConstants::from_parameters(2.0, 1.0, 2, 4, 0.0, 1.0).unwrap();
        assert_eq!((c.c1, c.c2, c.c3, c.c4), (1.5, 5.0, 1.0, 5.0));
        let c = TheoryConstants::from_parameters(2.0, 1.0, 15, 4, 0.68, 1.0).unwrap();
        assert!(close(c.c_p, 23.0, 1e-12), "{}", c.c_p);
        assert!(close(c.c_s, 287.5, 1e-12), "{}", c.c_s);
        for t in 1..6 {
            let c = TheoryConstants::from_parameters(3.0, 0.5, t, 4, 0.3, 0.8).unwrap();
            assert!(c.c1 > 0.0 && c.c3 > 0.0 && c.c4 > 0.0);
            assert!(if t >= 2 { c.c2 > 0.0 } else { c.c2 == 0.0 });
            let min = c.step_terms().iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
            assert_eq!(c.mu_max, min);
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(
            TheoryConstants::from_parameters(1.0, 0.0, 2, 3, 0.5, 1.0),
            Err(Error::NotStronglyConvex(_))
        ));
        assert!(TheoryConstants::from_parameters(1.0, 0.5, 2, 3, 1.0, 1.0).is_err());
        assert!(TheoryConstants::from_parameters(1.0, 0.5, 0, 3, 0.5, 1.0).is_err());
    }

    #[test]
    fn c1_bounds_inverse_by_direct_inversion() {
        // the φ₁ bound needs c_W τ ≥ 1/(2τ − 1), true for τ ≥ 2 at this c_W
        for tau in 2..10 {
            let b = BlockSystem::new(0.4, tau, 0.9, 20.0);
            let m = b.psi0;
            // explicit inverse of the unit lower-triangular I − ψ₀
            let inv = Matrix3::new(1.0, 0.0, 0.0, m[(1, 0)], 1.0, 0.0, 0.0, 0.0, 1.0);
            assert_eq!(inv * (Matrix3::identity() - m), Matrix3::identity());
            let c = TheoryConstants::from_parameters(1.0, 0.05, tau, 5, 0.4, 0.9).unwrap();
            assert!(inf_norm(&to_dense(&inv)) <= c.c1 + 1e-15);
            assert!(inf_norm(&to_dense(&(inv * b.psi1 * (tau as f64 - 1.0)))) <= c.c2 + 1e-12);
            assert!(inf_norm(&to_dense(&b.phi0)) <= c.c3 + 1e-15);
            assert!(inf_norm(&to_dense(&b.phi1)) <= c.c4 + 1e-12);
        }
    }

    #[test]
    fn h_at_zero_is_triangular_with_known_spectrum() {
        for (eps, tau) in [(0.0, 2), (0.3, 5), (0.71, 8), (0.95, 15)] {
            let b = BlockSystem::new(eps, tau, 1.0, 30.0);
            let h = b.h(0.0).unwrap();
            let expected = Matrix3::new(
                eps,
                0.0,
                0.0,
                1.0 + (1.0 - 1.0 / tau as f64) * eps,
                eps,
                0.0,
                0.0,
                0.0,
                1.0,
            );
            assert!((h - expected).amax() < 1e-15);
            let mut eig: Vec<f64> = b.eigenvalues(0.0).unwrap().iter().map(|z| z.re).collect();
            eig.sort_by(f64::total_cmp);
            assert!((eig[0] - eps).abs() < 1e-12 && (eig[1] - eps).abs() < 1e-12 && (eig[2] - 1.0).abs() < 1e-12);
            assert!((spectral_radius_h(&b, 0.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_eigenvalue_slope_matches_closed_form() {
        for (eps, tau, q) in [(0.5, 2, 10.0), (0.71, 5, 34.0), (0.9, 8, 120.0)] {
            let b = BlockSystem::new(eps, tau, 0.7, q);
            let slope = unit_eigenvalue_slope(&b, 1e-7).unwrap();
            let expected = -(tau as f64) / (2.0 * q);
            assert!(((slope - expected) / expected).abs() < 0.05, "{slope} vs {expected}");
        }
    }

    #[test]
    fn rate_bound_on_admissible_interval() {
        for (eps, tau, l, m, c_w) in [(0.5, 2, 4.0, 1.0, 0.6), (0.71, 5, 11.1, 0.33, 0.9), (0.2, 3, 2.0, 0.2, 1.5)] {
            let c = TheoryConstants::from_parameters(l, m, tau, 20, eps, c_w).unwrap();
            let b = BlockSystem::from_constants(&c);
            let top = c.mu_max * l;
            for i in 1..=50 {
                let w = top * i as f64 / 50.0;
                let rho = spectral_radius_h(&b, w).unwrap();
                assert!(rho <= 1.0 - tau as f64 / (4.0 * c.condition) * w + 1e-9, "omega {w}: {rho}");
                assert!(rho < 1.0);
            }
        }
    }

    #[test]
    fn step_size_admissibility() {
        let c = TheoryConstants::from_parameters(5.0, 0.5, 4, 10, 0.6, 1.0).unwrap();
        assert!(stepsize_admissible(0.0, &c).admissible);
        let above = stepsize_admissible(c.mu_max * (1.0 + 1e-9), &c);
        assert!(!above.admissible);
        let binding = c.step_terms().iter().min_by(|a, b| a.value.total_cmp(&b.value)).unwrap().name;
        assert_eq!(above.binding, binding);
        assert_eq!(above.margins.iter().filter(|m| **m < 0.0).count(), 1);
        assert!(stepsize_admissible(c.mu_max, &c).admissible);
    }

    fn desk_run(mu: f64, iters: usize) -> (TrajectoryLog, TheoryConstants) {
        let cfg = ScenarioConfig { stations: 8, satellites: 9, epochs: 1, ..ScenarioConfig::default() };
        let s = generate_scenario(&cfg).unwrap();
        let net = Network::from_systems(&s.epochs[0].systems).unwrap();
        let g = TimeVaryingGraph::ring(8, 3).unwrap();
        let mats = (0..3).map(|l| metropolis_weights(&g, l, false).unwrap()).collect();
        let sched = MixingSchedule::new(mats, true).unwrap();
        let rc = RunConfig { step_size: mu, max_iters: iters, ..RunConfig::default() };
        let (_, log) = run(&net, &sched, &rc, 0).unwrap();
        (log, compute_constants(&net.smoothness(), &sched).unwrap())
    }

    #[test]
    fn zero_step_run_has_no_violations() {
        let (log, c) = desk_run(0.0, 300);
        let report = check_lemmas(&log, &c).unwrap();
        assert_eq!(report.total_violations(), 0, "{report}");
        assert!(report.get(DISAGREEMENT_RECURSION).unwrap().checked > 0);
    }

    #[test]
    fn converging_run_satisfies_inequalities_and_fault_is_detected() {
        let (log, c) = desk_run(0.03, 3000);
        let (m0, m1) = (log.history[0].msd, log.final_metrics().unwrap().msd);
        assert!(m1 < 1e-10 * (1.0 + m0), "{m0:e} -> {m1:e} Q {} L {}", c.condition, c.l);
        let report = check_lemmas(&log, &c).unwrap();
        assert_eq!(report.total_violations(), 0, "{report}");
        assert!(report.get(AVERAGE_DESCENT).unwrap().skipped.is_none());
        let faulty = c.with_epsilon(c.epsilon / 2.0).unwrap();
        let report = check_lemmas(&log, &faulty).unwrap();
        assert!(report.get(DISAGREEMENT_RECURSION).unwrap().violations > 0, "{report}");
        assert!(c.c_w <= 2.0);
    }

    #[test]
    fn descent_check_skipped_above_inverse_smoothness() {
        let (log, mut c) = desk_run(0.01, 50);
        c.l = 1000.0;
        let report = check_lemmas(&log, &c).unwrap();
        assert!(report.get(AVERAGE_DESCENT).unwrap().skipped.is_some());
    }

    #[test]
    fn block_decay_envelope_on_converging_run() {
        let (log, c) = desk_run(0.03, 3000);
        let decay = block_decay(&log, &c, 1e-10).unwrap();
        assert!(decay.windows > 10);
        assert!(decay.ratio < 1.0 && decay.holds(), "{decay:?}");
    }

    #[test]
    fn default_step_size_is_conservatively_inadmissible() {
        let (log, c) = desk_run(0.015, 2000);
        let check = stepsize_admissible(0.015, &c);
        assert!(!check.admissible);
        // but the run itself still converges
        assert!(log.final_metrics().unwrap().msd < log.history[0].msd * 1e-6);
    }
}
