use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gadiff_core::harness::{self, Construction, ExperimentConfig, ScheduleSource};
use gadiff_core::Result;

#[derive(Parser)]
#[command(name = "gadiff", version, about = "Learned mixing schedules and gradient-tracking diffusion for GNSS networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the communication graph and write graph.txt.
    GenGraph(Flags),
    /// Train a mixing schedule on graph.txt and write schedule.txt.
    LearnSchedule(Flags),
    /// Generate a synthetic scenario and write scenario.json.
    GenScenario(Flags),
    /// Run the diffusion over every epoch of the scenario.
    Run(Flags),
    /// Solve the centralized estimator for every epoch.
    Baseline(Flags),
    /// Evaluate the convergence constants and inequality checks on epoch 0.
    CheckTheory(Flags),
    /// All stages in order, plus a learned-vs-Metropolis comparison.
    Pipeline(Flags),
}

/// Each flag sets the config field of the same name. Keys present in the
/// `--config` file take precedence over flags.
#[derive(Args)]
struct Flags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    nodes: Option<usize>,
    /// knn, radius, sphere-knn, ring, path, complete or file
    #[arg(long)]
    construction: Option<Construction>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    radius_m: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    graph_seed: Option<u64>,
    #[arg(long)]
    activation: Option<f64>,
    #[arg(long)]
    edge_file: Option<PathBuf>,
    #[arg(long)]
    station_file: Option<PathBuf>,

    #[arg(long)]
    learner_step_size: Option<f64>,
    #[arg(long)]
    learner_iters: Option<usize>,
    #[arg(long)]
    lazy: Option<bool>,
    #[arg(long)]
    learner_seed: Option<u64>,

    #[arg(long)]
    satellites: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    sigma_phase: Option<f64>,
    #[arg(long)]
    sigma_code: Option<f64>,
    #[arg(long)]
    elevation_mask_deg: Option<f64>,
    #[arg(long)]
    scenario_seed: Option<u64>,
    #[arg(long)]
    known_position_stations: Option<usize>,

    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    /// learned or metropolis
    #[arg(long)]
    schedule: Option<ScheduleSource>,
    #[arg(long)]
    schedule_file: Option<PathBuf>,
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Flags {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        set(&mut c.output.dir, self.out);
        set(&mut c.graph.nodes, self.nodes);
        set(&mut c.graph.construction, self.construction);
        set(&mut c.graph.k, self.k);
        set(&mut c.graph.radius_m, self.radius_m);
        set(&mut c.graph.window, self.window);
        set(&mut c.graph.seed, self.graph_seed);
        set(&mut c.graph.activation, self.activation);
        c.graph.edge_file = self.edge_file.or(c.graph.edge_file);
        c.graph.station_file = self.station_file.or(c.graph.station_file);
        set(&mut c.learner.step_size, self.learner_step_size);
        set(&mut c.learner.max_iters, self.learner_iters);
        set(&mut c.learner.lazy_parameterization, self.lazy);
        set(&mut c.learner.init_seed, self.learner_seed);
        set(&mut c.scenario.satellites, self.satellites);
        set(&mut c.scenario.epochs, self.epochs);
        set(&mut c.scenario.sigma_phase, self.sigma_phase);
        set(&mut c.scenario.sigma_code, self.sigma_code);
        set(&mut c.scenario.elevation_mask_deg, self.elevation_mask_deg);
        set(&mut c.scenario.seed, self.scenario_seed);
        set(&mut c.scenario.known_position_stations, self.known_position_stations);
        c.run.step_size = self.step_size.or(c.run.step_size);
        set(&mut c.run.max_iters, self.iters);
        set(&mut c.run.schedule, self.schedule);
        c.run.schedule_file = self.schedule_file.or(c.run.schedule_file);
        c.run.scenario_file = self.scenario_file.or(c.run.scenario_file);
        set(&mut c.run.log_every, self.log_every);
        set(&mut c.run.tolerance, self.tolerance);
        match &self.config {
            Some(path) => c.overlay_file(path),
            None => {
                c.validate()?;
                Ok(c)
            }
        }
    }
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |n| n.to_string())
}

fn print_method(m: &harness::MethodSummary) {
    println!("{} step_size {:e} epsilon {:.6}", m.method, m.step_size, m.epsilon);
    for e in &m.epochs {
        println!(
            "  epoch {} final_msd {:.3e} iters_to_tol {} max_dev {:.3e} e_pos {:.6e} d_M {:.6e}",
            e.epoch,
            e.final_msd,
            opt(e.iterations_to_tolerance),
            e.max_deviation,
            e.e_pos,
            e.mahalanobis
        );
    }
}

fn print_theory(t: &harness::TheorySummary) {
    let c = &t.constants;
    println!("L {:.6e} m {:.6e} Q {:.3} epsilon {:.6} c_W {:.6}", c.l, c.m, c.condition, c.epsilon, c.c_w);
    println!(
        "step size {:e}: {} (bound {:e}, binding {})",
        t.step.step_size,
        if t.step.admissible { "admissible" } else { "inadmissible" },
        c.mu_max,
        t.step.binding
    );
    println!(
        "rho(H(0)) {:.12} slope {:.6e} predicted {:.6e}",
        t.rho_at_zero, t.unit_slope, t.predicted_slope
    );
    print!("{}", t.lemmas);
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenGraph(f) => {
            let cfg = f.resolve()?;
            let (_, s) = harness::gen_graph(&cfg)?;
            println!(
                "R {} edges {} diameter {} radius {}",
                s.nodes,
                s.union_edges,
                opt(s.diameter),
                opt(s.radius)
            );
            if !s.connected {
                eprintln!("warning: union graph over the window is disconnected; the contraction factor may stay near 1");
            }
        }
        Command::LearnSchedule(f) => {
            let cfg = f.resolve()?;
            let (_, trace) = harness::learn_schedule_from_files(&cfg)?;
            println!(
                "epsilon {:.6} loss {:.6e} -> {:.6e} clamped {}",
                trace.final_epsilon,
                trace.losses.first().copied().unwrap_or(f64::NAN),
                trace.losses.last().copied().unwrap_or(f64::NAN),
                trace.clamped_entries
            );
        }
        Command::GenScenario(f) => {
            let cfg = f.resolve()?;
            let s = harness::gen_scenario(&cfg)?;
            println!("stations {} satellites {} epochs {}", s.stations.len(), s.satellites.len(), s.epochs.len());
        }
        Command::Run(f) => print_method(&harness::run_from_files(&f.resolve()?)?),
        Command::Baseline(f) => {
            for b in harness::baseline_from_files(&f.resolve()?)? {
                println!("epoch {} e_pos {:.6e} e_z {:.6e} d_M {:.6e}", b.epoch, b.e_pos, b.e_z, b.mahalanobis);
            }
        }
        Command::CheckTheory(f) => print_theory(&harness::check_theory_from_files(&f.resolve()?)?),
        Command::Pipeline(f) => {
            let cfg = f.resolve()?;
            let s = harness::pipeline(&cfg)?;
            println!(
                "R {} edges {} diameter {} radius {}",
                s.graph.nodes,
                s.graph.union_edges,
                opt(s.graph.diameter),
                opt(s.graph.radius)
            );
            print_method(&s.learned);
            print_method(&s.metropolis);
            println!("iterations to msd < {:e}:", s.tolerance);
            for c in &s.comparison {
                println!("  epoch {} learned {} metropolis {}", c.epoch, opt(c.learned), opt(c.metropolis));
            }
            println!("learned faster on every epoch: {}", s.learned_faster);
            println!("outputs in {}", cfg.output.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
