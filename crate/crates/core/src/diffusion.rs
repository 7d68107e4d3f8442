//! Adapt-then-combine gradient-tracking diffusion over a periodic schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::central::solve_central_from;
use crate::error::{Error, Result};
use crate::graph::MixingSchedule;
use crate::linalg::{mean, stack, Matrix, Vector};
use crate::local::{smoothness_constants, ReducedObjective, Smoothness};
use crate::metrics::{self, log_msd_fit, IterationMetrics};
use crate::scenario::LocalSystem;

/// MSD may not exceed this factor times its value `DIVERGENCE_SPAN` iterations earlier.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
pub const DIVERGENCE_SPAN: usize = 100;

/// The per-node objectives of one batch plus their joint optimum.
#[derive(Debug, Clone)]
pub struct Network {
    objectives: Vec<ReducedObjective>,
    dim: usize,
    optimum: Vector,
    smoothness: Smoothness,
}

impl Network {
    pub fn from_systems(systems: &[LocalSystem]) -> Result<Self> {
        let objectives = systems
            .par_iter()
            .map(ReducedObjective::new)
            .collect::<Result<Vec<_>>>()?;
        Self::from_objectives(objectives)
    }

    pub fn from_objectives(objectives: Vec<ReducedObjective>) -> Result<Self> {
        let smoothness = smoothness_constants(&objectives)?;
        let central = solve_central_from(&objectives)?;
        Ok(Self {
            dim: central.z_hat.len(),
            optimum: central.z_hat,
            objectives,
            smoothness,
        })
    }

    pub fn size(&self) -> usize {
        self.objectives.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn objectives(&self) -> &[ReducedObjective] {
        &self.objectives
    }

    /// Centralized minimizer z*.
    pub fn optimum(&self) -> &Vector {
        &self.optimum
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    /// ∇F(z) = (1/R) Σ ∇f_r(z).
    pub fn average_gradient(&self, z: &Vector) -> Vector {
        let mut acc = Vector::zeros(self.dim);
        for o in &self.objectives {
            acc += o.gradient(z);
        }
        acc / self.size() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub iteration: usize,
    pub z: Vec<Vector>,
    pub x: Vec<Vector>,
    /// Gradient trackers.
    pub g: Vec<Vector>,
    /// ∇f_r(z_r) at the current iterate.
    pub grad: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub step_size: f64,
    pub max_iters: usize,
    /// Start every node at z = 0; otherwise `prior` is used.
    pub cold_start: bool,
    pub prior: Option<Vec<f64>>,
    pub log_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            step_size: 0.015,
            max_iters: 10_000,
            cold_start: true,
            prior: None,
            log_every: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step size must be nonnegative, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if !self.cold_start && self.prior.is_none() {
            return Err(Error::Config("warm start requested without a prior".into()));
        }
        Ok(())
    }

    fn start_point(&self, dim: usize) -> Result<Vector> {
        match (&self.prior, self.cold_start) {
            (Some(p), false) => {
                if p.len() != dim {
                    return Err(Error::Dimension(format!("prior of length {} for a {dim}-dim state", p.len())));
                }
                Ok(Vector::from_column_slice(p))
            }
            _ => Ok(Vector::zeros(dim)),
        }
    }
}

/// Every node starts from the same point.
pub fn initialize(network: &Network, start: &Vector) -> NetworkState {
    initialize_from(network, vec![start.clone(); network.size()])
}

/// Nodes start from individual points.
pub fn initialize_from(network: &Network, z: Vec<Vector>) -> NetworkState {
    let x = network.objectives.iter().zip(&z).map(|(o, zr)| o.local_x(zr)).collect();
    let grad: Vec<Vector> = network.objectives.iter().zip(&z).map(|(o, zr)| o.gradient(zr)).collect();
    NetworkState {
        iteration: 0,
        z,
        x,
        g: grad.clone(),
        grad,
    }
}

/// Nonzero weights of one mixing matrix, row by row.
#[derive(Debug, Clone)]
pub struct SparseMixing {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMixing {
    pub fn new(w: &Matrix) -> Self {
        let rows = (0..w.nrows())
            .map(|r| {
                (0..w.ncols())
                    .filter(|&q| w[(r, q)] != 0.0)
                    .map(|q| (q, w[(r, q)]))
                    .collect()
            })
            .collect();
        Self { rows }
    }

    pub fn from_schedule(schedule: &MixingSchedule) -> Vec<Self> {
        schedule.effective_matrices().iter().map(Self::new).collect()
    }
}

/// One synchronous iteration. Node r combines with weights W[r, q], so the
/// stacked update is (W ⊗ I) applied to the stacked iterate.
pub fn step(network: &Network, state: &NetworkState, mixing: &[SparseMixing], step_size: f64) -> Result<NetworkState> {
    let k = state.iteration;
    let w = &mixing[k % mixing.len()];
    let adapted: Vec<Vector> = state.z.iter().zip(&state.g).map(|(z, g)| z - g * step_size).collect();
    let updated: Vec<(Vector, Vector, Vector, Vector)> = (0..network.size())
        .into_par_iter()
        .map(|r| {
            let obj = &network.objectives[r];
            let mut z = Vector::zeros(network.dim);
            let mut g = Vector::zeros(network.dim);
            for &(q, wrq) in &w.rows[r] {
                z.axpy(wrq, &adapted[q], 1.0);
                g.axpy(wrq, &state.g[q], 1.0);
            }
            let grad = obj.gradient(&z);
            g += &grad - &state.grad[r];
            let x = obj.local_x(&z);
            (z, x, g, grad)
        })
        .collect();
    let mut next = NetworkState {
        iteration: k + 1,
        z: Vec::with_capacity(network.size()),
        x: Vec::with_capacity(network.size()),
        g: Vec::with_capacity(network.size()),
        grad: Vec::with_capacity(network.size()),
    };
    for (z, x, g, grad) in updated {
        if !(z.iter().chain(g.iter()).chain(x.iter()).all(|v| v.is_finite())) {
            return Err(Error::NonFinite(k + 1));
        }
        next.z.push(z);
        next.x.push(x);
        next.g.push(g);
        next.grad.push(grad);
    }
    Ok(next)
}

/// Stacked quantities and their centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    pub z: Vector,
    pub g: Vector,
    pub grad: Vector,
    pub z_bar: Vector,
    pub g_bar: Vector,
    pub grad_bar: Vector,
}

pub fn centroids(state: &NetworkState) -> AugmentedView {
    AugmentedView {
        z: stack(&state.z),
        g: stack(&state.g),
        grad: stack(&state.grad),
        z_bar: mean(&state.z),
        g_bar: mean(&state.g),
        grad_bar: mean(&state.grad),
    }
}

pub fn iteration_metrics(network: &Network, state: &NetworkState) -> IterationMetrics {
    let z_bar = mean(&state.z);
    let g_bar = mean(&state.g);
    IterationMetrics {
        iter: state.iteration,
        msd: metrics::msd(&state.z, &network.optimum),
        grad_norm: metrics::grad_norm(&state.grad),
        disagreement: metrics::disagreement(&state.z),
        tracking: metrics::tracking_disagreement(&state.g),
        avg_opt_error: (&z_bar - &network.optimum).norm(),
        inexact_grad: (g_bar - network.average_gradient(&z_bar)).norm(),
    }
}

/// Per-iteration residuals of the centroid identities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CentroidResiduals {
    pub iter: usize,
    /// ‖z̄^{k+1} − (z̄^k − μ ḡ^k)‖ / (1 + ‖z̄^k‖)
    pub mean_step: f64,
    /// ‖ḡ^k − ∇f̄^k‖ / (1 + ‖∇f̄^k‖)
    pub tracker: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub epoch: usize,
    pub step_size: f64,
    pub log_every: usize,
    /// One entry per iteration, 0..=K.
    pub history: Vec<IterationMetrics>,
    pub centroid_residuals: Vec<CentroidResiduals>,
}

impl TrajectoryLog {
    /// Records at multiples of `log_every`, plus the final one.
    pub fn logged(&self) -> Vec<IterationMetrics> {
        let last = self.history.len().saturating_sub(1);
        self.history
            .iter()
            .enumerate()
            .filter(|(i, _)| i % self.log_every == 0 || *i == last)
            .map(|(_, m)| *m)
            .collect()
    }

    pub fn max_mean_step_residual(&self) -> f64 {
        self.centroid_residuals.iter().map(|c| c.mean_step).fold(0.0, f64::max)
    }

    pub fn max_tracker_residual(&self) -> f64 {
        self.centroid_residuals.iter().map(|c| c.tracker).fold(0.0, f64::max)
    }

    pub fn final_metrics(&self) -> Option<&IterationMetrics> {
        self.history.last()
    }
}

pub fn run(
    network: &Network,
    schedule: &MixingSchedule,
    config: &RunConfig,
    epoch: usize,
) -> Result<(NetworkState, TrajectoryLog)> {
    config.validate()?;
    if schedule.size() != network.size() {
        return Err(Error::Dimension(format!(
            "schedule over {} nodes for a network of {}",
            schedule.size(),
            network.size()
        )));
    }
    let mixing = SparseMixing::from_schedule(schedule);
    let start = config.start_point(network.dim())?;
    let mut state = initialize(network, &start);
    let mut log = TrajectoryLog {
        epoch,
        step_size: config.step_size,
        log_every: config.log_every,
        history: Vec::with_capacity(config.max_iters + 1),
        centroid_residuals: Vec::with_capacity(config.max_iters + 1),
    };
    log.history.push(iteration_metrics(network, &state));
    let floor = 1e-24 * (1.0 + log.history[0].msd);
    for k in 0..config.max_iters {
        let next = step(network, &state, &mixing, config.step_size)?;
        let before = centroids(&state);
        let after_bar = mean(&next.z);
        let predicted = &before.z_bar - &before.g_bar * config.step_size;
        log.centroid_residuals.push(CentroidResiduals {
            iter: k,
            mean_step: (after_bar - predicted).norm() / (1.0 + before.z_bar.norm()),
            tracker: (&before.g_bar - &before.grad_bar).norm() / (1.0 + before.grad_bar.norm()),
        });
        state = next;
        let m = iteration_metrics(network, &state);
        if k + 1 >= DIVERGENCE_SPAN {
            let since = k + 1 - DIVERGENCE_SPAN;
            let previous = log.history[since].msd.max(floor);
            if !(m.msd <= DIVERGENCE_FACTOR * previous) {
                return Err(Error::Diverged {
                    iteration: k + 1,
                    since,
                    previous: log.history[since].msd,
                    current: m.msd,
                });
            }
        }
        log.history.push(m);
    }
    let last = centroids(&state);
    log.centroid_residuals.push(CentroidResiduals {
        iter: state.iteration,
        mean_step: 0.0,
        tracker: (&last.g_bar - &last.grad_bar).norm() / (1.0 + last.grad_bar.norm()),
    });
    Ok((state, log))
}

/// Backtracking search over the step sizes `initial · shrink^i`,
/// i < `candidates`; returns the step whose trial run of `trial_iters` ends
/// with the smallest MSD among those still contracting over the second half
/// of the trial. Slowly growing
/// modes can hide behind a fast initial transient, so a trial only counts if
/// its log-MSD slope over that half is negative (or it already sits at the
/// rounding floor).
pub fn line_search_step_size(
    network: &Network,
    schedule: &MixingSchedule,
    initial: f64,
    shrink: f64,
    candidates: usize,
    trial_iters: usize,
) -> Result<f64> {
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(Error::Config(format!("line search shrink factor {shrink} outside (0, 1)")));
    }
    let mut best: Option<(f64, f64)> = None;
    let mut mu = initial;
    for _ in 0..candidates {
        let cfg = RunConfig {
            step_size: mu,
            max_iters: trial_iters,
            ..RunConfig::default()
        };
        if let Ok((_, log)) = run(network, schedule, &cfg, 0) {
            let msd = log.final_metrics().map_or(f64::INFINITY, |m| m.msd);
            let floor = 1e-26 * (1.0 + network.optimum().norm_squared());
            let contracting = msd <= floor
                || log_msd_fit(&log.history, trial_iters / 2, trial_iters).is_some_and(|f| f.slope < 0.0);
            if msd.is_finite() && contracting && best.is_none_or(|(_, b)| msd < b) {
                best = Some((mu, msd));
            }
        }
        mu *= shrink;
    }
    best.map(|(mu, _)| mu)
        .ok_or_else(|| Error::Config(format!("no stable step size found below {initial}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{metropolis_weights, MixingMatrix, TimeVaryingGraph};
    use crate::local::tests::random_system;

    fn toy(r: usize, d: usize, seed: u64) -> Network {
        let systems: Vec<LocalSystem> = (0..r)
            .map(|i| {
                let mut s = random_system(seed * 100 + i as u64, 6, 2, d);
                s.station = i;
                s
            })
            .collect();
        Network::from_systems(&systems).unwrap()
    }

    fn ring_schedule(r: usize, tau: usize) -> MixingSchedule {
        let g = TimeVaryingGraph::ring(r, tau).unwrap();
        let mats = (0..tau).map(|l| metropolis_weights(&g, l, false).unwrap()).collect();
        MixingSchedule::new(mats, false).unwrap()
    }

    fn asymmetric_schedule() -> MixingSchedule {
        // doubly stochastic but not symmetric
        let w0 = Matrix::from_row_slice(3, 3, &[0.5, 0.3, 0.2, 0.2, 0.5, 0.3, 0.3, 0.2, 0.5]);
        let w1 = Matrix::from_row_slice(3, 3, &[0.6, 0.0, 0.4, 0.4, 0.6, 0.0, 0.0, 0.4, 0.6]);
        MixingSchedule::new(
            vec![MixingMatrix::new(w0, 1e-12).unwrap(), MixingMatrix::new(w1, 1e-12).unwrap()],
            false,
        )
        .unwrap()
    }

    #[test]
    fn single_node_is_gradient_descent() {
        let net = toy(1, 2, 1);
        let sched = MixingSchedule::single(MixingMatrix::identity(1));
        let mix = SparseMixing::from_schedule(&sched);
        let z0 = Vector::from_vec(vec![0.4, -0.3]);
        let s0 = initialize(&net, &z0);
        let mu = 0.05;
        let s1 = step(&net, &s0, &mix, mu).unwrap();
        let oracle = &z0 - net.objectives()[0].gradient(&z0) * mu;
        assert!((&s1.z[0] - oracle).amax() < 1e-15);
    }

    #[test]
    fn zero_step_keeps_mean_and_contracts_per_window() {
        let net = toy(5, 2, 2);
        let sched = ring_schedule(5, 2);
        let mix = SparseMixing::from_schedule(&sched);
        let z: Vec<Vector> = (0..5).map(|i| Vector::from_vec(vec![i as f64, -(i as f64)])).collect();
        let mut s = initialize_from(&net, z);
        let bar0 = mean(&s.z);
        let mut prev = metrics::disagreement(&s.z);
        for _ in 0..5 {
            for _ in 0..2 {
                s = step(&net, &s, &mix, 0.0).unwrap();
            }
            assert!((mean(&s.z) - &bar0).norm() < 1e-12);
            let now = metrics::disagreement(&s.z);
            assert!(now <= prev + 1e-12);
            prev = now;
        }
    }

    #[test]
    fn step_matches_dense_augmented_recursion() {
        let net = toy(3, 2, 3);
        let sched = asymmetric_schedule();
        let mix = SparseMixing::from_schedule(&sched);
        let z: Vec<Vector> = (0..3).map(|i| Vector::from_vec(vec![0.3 * i as f64, 1.0 - i as f64])).collect();
        let mut s = initialize_from(&net, z);
        let mu = 0.02;
        let id = Matrix::identity(2, 2);
        for k in 0..6 {
            let w = sched.effective(k % 2).weights().kronecker(&id);
            let aug = centroids(&s);
            let z_next = &w * (&aug.z - &aug.g * mu);
            let next = step(&net, &s, &mix, mu).unwrap();
            let grad_next: Vec<Vector> = (0..3)
                .map(|r| net.objectives()[r].gradient(&z_next.rows(2 * r, 2).into_owned()))
                .collect();
            let g_next = &w * &aug.g + stack(&grad_next) - &aug.grad;
            assert!((stack(&next.z) - z_next).amax() < 1e-12);
            assert!((stack(&next.g) - g_next).amax() < 1e-12);
            s = next;
        }
    }

    #[test]
    fn initialization_uses_local_gradients() {
        let net = toy(3, 2, 4);
        let z0 = Vector::from_vec(vec![0.2, 0.1]);
        let s = initialize(&net, &z0);
        let h = 1e-6;
        for (r, o) in net.objectives().iter().enumerate() {
            for i in 0..2 {
                let mut zp = z0.clone();
                zp[i] += h;
                let mut zm = z0.clone();
                zm[i] -= h;
                let fd = (o.value(&zp) - o.value(&zm)) / (2.0 * h);
                assert!((fd - s.g[r][i]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
        let cold = initialize(&net, &Vector::zeros(2));
        let expected = mean(&net.objectives().iter().map(|o| o.gradient(&Vector::zeros(2))).collect::<Vec<_>>());
        assert!((centroids(&cold).g_bar - expected).amax() < 1e-15);
    }

    #[test]
    fn centroid_identities_and_consensus() {
        let z = Vector::from_vec(vec![1.5, -2.0]);
        let net = toy(4, 2, 5);
        let s = initialize(&net, &z);
        let aug = centroids(&s);
        assert_eq!(aug.z_bar, z);
        assert_eq!(metrics::disagreement(&s.z), 0.0);
        let direct: Vector = s.g.iter().fold(Vector::zeros(2), |a, b| a + b) / 4.0;
        assert!((aug.g_bar - direct).amax() < 1e-15);
    }

    #[test]
    fn run_converges_to_central_and_logs_identities() {
        let net = toy(5, 2, 6);
        let sched = ring_schedule(5, 2);
        let l = net.smoothness().l;
        let cfg = RunConfig { step_size: 0.5 / l, max_iters: 3000, ..RunConfig::default() };
        let (state, log) = run(&net, &sched, &cfg, 0).unwrap();
        assert_eq!(log.history.len(), 3001);
        for z in &state.z {
            assert!((z - net.optimum()).amax() < 1e-8);
        }
        let total: Vector = net.objectives().iter().fold(Vector::zeros(2), |a, o| a + o.gradient(&state.z[0]));
        assert!(total.norm() < 1e-6);
        assert!(log.max_mean_step_residual() < 1e-10);
        assert!(log.max_tracker_residual() < 1e-10);
        for m in &log.history {
            assert!(m.inexact_grad <= l / 5f64.sqrt() * m.disagreement + 1e-9);
        }
    }

    #[test]
    fn centroids_follow_centralized_descent_late() {
        let net = toy(5, 2, 7);
        let sched = ring_schedule(5, 1);
        let mu = 0.3 / net.smoothness().l;
        let cfg = RunConfig { step_size: mu, max_iters: 4000, ..RunConfig::default() };
        let mix = SparseMixing::from_schedule(&sched);
        let mut s = initialize(&net, &Vector::zeros(2));
        let mut k = 0;
        while (k == 0 || metrics::disagreement(&s.z) >= 1e-12) && k < cfg.max_iters {
            s = step(&net, &s, &mix, mu).unwrap();
            k += 1;
        }
        assert!(k < cfg.max_iters);
        let mut oracle = mean(&s.z);
        for _ in 0..50 {
            s = step(&net, &s, &mix, mu).unwrap();
            oracle = &oracle - net.average_gradient(&oracle) * mu;
            let gap = (mean(&s.z) - &oracle).norm();
            assert!(gap < 1e-10, "k={k} gap={gap:e} norm={}", oracle.norm());
        }
    }

    #[test]
    fn noiseless_zero_truth_stays_at_optimum() {
        use crate::scenario::{generate_scenario, ScenarioConfig};
        let cfg = ScenarioConfig {
            stations: 6,
            satellites: 8,
            epochs: 1,
            sigma_phase: 0.0,
            sigma_code: 0.0,
            bias_sigma: 0.0,
            ..ScenarioConfig::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        let net = Network::from_systems(&s.epochs[0].systems).unwrap();
        let sched = ring_schedule(6, 3);
        let run_cfg = RunConfig { step_size: 0.5 / net.smoothness().l, max_iters: 200, log_every: 10, ..RunConfig::default() };
        let (_, log) = run(&net, &sched, &run_cfg, 0).unwrap();
        assert!(log.history.iter().all(|m| m.msd < 1e-20));
        assert_eq!(log.logged().len(), 21);
    }

    #[test]
    fn warm_start_prior_is_used() {
        let net = toy(3, 2, 8);
        let sched = ring_schedule(3, 1);
        let cfg = RunConfig {
            step_size: 0.0,
            max_iters: 1,
            cold_start: false,
            prior: Some(vec![1.0, 2.0]),
            log_every: 1,
        };
        let (state, _) = run(&net, &sched, &cfg, 0).unwrap();
        assert!(state.z.iter().all(|z| z == &Vector::from_vec(vec![1.0, 2.0])));
    }

    #[test]
    fn divergence_is_detected() {
        let net = toy(4, 2, 9);
        let sched = ring_schedule(4, 1);
        let cfg = RunConfig { step_size: 50.0 / net.smoothness().l, max_iters: 1000, ..RunConfig::default() };
        assert!(matches!(run(&net, &sched, &cfg, 0), Err(Error::Diverged { .. } | Error::NonFinite(_))));
    }

    #[test]
    fn line_search_picks_stable_step() {
        let net = toy(4, 2, 10);
        let sched = ring_schedule(4, 2);
        let mu = line_search_step_size(&net, &sched, 64.0 / net.smoothness().l, 0.5, 12, 300).unwrap();
        let cfg = RunConfig { step_size: mu, max_iters: 300, ..RunConfig::default() };
        assert!(run(&net, &sched, &cfg, 0).is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig { step_size: -1.0, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { max_iters: 0, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { cold_start: false, ..RunConfig::default() }.validate().is_err());
    }
}
