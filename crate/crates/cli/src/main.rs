use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use asfv_core::convergence::{run_suite, ConvergenceParams};
use asfv_core::cost::{check_allocation, round_costs, Scheme, SchemeCost, ENERGY_TOLERANCE};
use asfv_core::harness::{
    compare_schemes, emit_plot_data, run_sweep, run_training, sample_selected_fleet, simulate_rounds, write_csv,
    write_manifest, write_sweep, Scenario, SweepResults,
};
use asfv_core::optimizer::OptimizerReport;
use asfv_core::profile::CutLayerProfile;
use asfv_core::seed::SeedStream;

/// Relative slack for monotonicity and ordering checks.
const CHECK_TOLERANCE: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "asfv", version, about = "Adaptive split federated learning over vehicular edge networks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a scenario field, e.g. `--set mobility.mean_count=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, env = "ASFV_OUT_DIR", default_value = "out", global = true)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Optimise one round for a sampled fleet and cost every scheme on it.
    Optimize {
        #[arg(long, default_value_t = 15)]
        vehicles: usize,
    },
    /// Rounds of Poisson arrivals, standing-time screening and optimisation.
    Simulate,
    /// Train every scheme on the toy split model.
    Train,
    /// Convergence bound and Monte-Carlo lemma checks on the quadratic toy.
    Bounds,
    /// Vehicle-count sweep with CSV and plot-data output.
    Sweep,
    /// Export the cut-layer profile.
    Profile,
}

/// Named pass/fail invariant results.
#[derive(Default)]
struct Checks(Vec<(String, bool)>);

impl Checks {
    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.0.push((name.into(), ok));
    }

    fn failures(&self) -> Vec<&str> {
        self.0.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect()
    }

    fn report(&self) -> bool {
        let failed = self.failures();
        for name in &failed {
            eprintln!("invariant failed: {name}");
        }
        println!("{} invariant checks, {} failed", self.0.len(), failed.len());
        failed.is_empty()
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|s| {
            let (k, v) = s.split_once('=').with_context(|| format!("override `{s}` is not KEY=VALUE"))?;
            Ok((k.trim().to_string(), v.to_string()))
        })
        .collect()
}

fn non_increasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + CHECK_TOLERANCE))
}

fn check_report(checks: &mut Checks, label: &str, sc: &Scenario, report: &OptimizerReport) {
    checks.check(format!("{label}: converged"), report.converged);
    checks.check(
        format!("{label}: trace non-increasing after sweep 1"),
        non_increasing(report.objective_trace.get(1..).unwrap_or(&[])),
    );
    checks.check(format!("{label}: within {} sweeps", sc.optimizer.max_sweeps), report.sweeps() <= sc.optimizer.max_sweeps);
    let beta: f64 = report.allocations.iter().map(|a| a.beta).sum();
    checks.check(format!("{label}: shares sum to 1"), (beta - 1.0).abs() <= 1e-9);
}

fn check_costs(checks: &mut Checks, label: &str, costs: &[SchemeCost], budget: f64) {
    let get = |s: Scheme| costs.iter().find(|c| c.scheme == s);
    for c in costs {
        checks.check(format!("{label}: {} costs finite", c.scheme), c.overall_delay().is_finite() && c.total_energy().is_finite());
    }
    if let Some(asfv) = get(Scheme::Asfv) {
        checks.check(
            format!("{label}: ASFV within energy budget"),
            asfv.max_energy <= budget * (1.0 + ENERGY_TOLERANCE),
        );
        for c in costs.iter().filter(|c| matches!(c.scheme, Scheme::Sfl(_))) {
            checks.check(
                format!("{label}: ASFV delay <= {}", c.scheme),
                asfv.overall_delay() <= c.overall_delay() * (1.0 + CHECK_TOLERANCE),
            );
        }
    }
}

#[derive(Serialize)]
struct AllocationRow {
    vehicle: usize,
    distance_m: f64,
    dataset_size: usize,
    cut: usize,
    beta: f64,
    cpu_hz: f64,
    power_w: f64,
    time: f64,
    energy: f64,
}

#[derive(Serialize)]
struct PhaseRow {
    vehicle: usize,
    phase: &'static str,
    value: f64,
}

#[derive(Serialize)]
struct TraceRow {
    sweep: usize,
    objective: f64,
}

fn optimize(sc: &Scenario, profile: &CutLayerProfile, vehicles: usize, dir: &Path, checks: &mut Checks) -> Result<Vec<PathBuf>> {
    let seed = SeedStream::new(sc.seed).child("optimize").index(vehicles as u64);
    let fleet = sample_selected_fleet(sc, profile, vehicles, &seed)?;
    let round = sc.round_scenario(profile, fleet);
    let mut schemes = sc.schemes.clone();
    if !schemes.contains(&Scheme::Asfv) {
        schemes.push(Scheme::Asfv);
    }
    let comparison = compare_schemes(sc, &round, &schemes)?;
    let report = comparison.report.as_ref().context("optimiser report missing")?;
    let sub = round.subset(&report.kept);
    checks.check("allocation feasible", check_allocation(&sub, &report.allocations).is_ok());
    check_report(checks, "optimize", sc, report);
    check_costs(checks, "optimize", &comparison.costs, sc.energy_budget_j);

    let b = round_costs(&sub, &report.allocations)?;
    let allocations: Vec<AllocationRow> = b
        .vehicles
        .iter()
        .zip(&sub.vehicles)
        .map(|(c, v)| AllocationRow {
            vehicle: v.id,
            distance_m: v.distance_to_ec_m,
            dataset_size: v.dataset_size,
            cut: c.alloc.cut,
            beta: c.alloc.beta,
            cpu_hz: c.alloc.cpu_hz,
            power_w: c.alloc.power_w,
            time: c.time,
            energy: c.energy,
        })
        .collect();
    let phases: Vec<PhaseRow> = b
        .vehicles
        .iter()
        .zip(&sub.vehicles)
        .flat_map(|(c, v)| c.phases.named().into_iter().map(move |(phase, value, _)| PhaseRow { vehicle: v.id, phase, value }))
        .collect();
    let trace: Vec<TraceRow> = report
        .objective_trace
        .iter()
        .enumerate()
        .map(|(i, &objective)| TraceRow { sweep: i + 1, objective })
        .collect();
    let paths = ["allocations.csv", "phases.csv", "trace.csv", "schemes.csv"].map(|n| dir.join(n));
    write_csv(&paths[0], &allocations)?;
    write_csv(&paths[1], &phases)?;
    write_csv(&paths[2], &trace)?;
    write_csv(&paths[3], &comparison.costs)?;
    println!(
        "{} of {} vehicles kept, round time {:.4} s after {} sweeps",
        report.kept.len(),
        vehicles,
        report.objective(),
        report.sweeps()
    );
    Ok(paths.to_vec())
}

#[derive(Serialize)]
struct SimulationRow {
    round: usize,
    candidates: usize,
    selected: usize,
    scheme: String,
    comm_delay: f64,
    comp_delay: f64,
    overall_delay: f64,
    comm_energy: f64,
    comp_energy: f64,
    total_energy: f64,
    max_energy: f64,
}

fn simulate(sc: &Scenario, profile: &CutLayerProfile, dir: &Path, checks: &mut Checks) -> Result<Vec<PathBuf>> {
    let rounds = simulate_rounds(sc, profile)?;
    let mut rows = Vec::new();
    for r in &rounds {
        checks.check(format!("round {}: selected <= candidates", r.round), r.selected.len() <= r.candidates);
        let Some(cmp) = &r.comparison else { continue };
        check_costs(checks, &format!("round {}", r.round), &cmp.costs, sc.energy_budget_j);
        if let Some(report) = &cmp.report {
            check_report(checks, &format!("round {}", r.round), sc, report);
        }
        for c in &cmp.costs {
            rows.push(SimulationRow {
                round: r.round,
                candidates: r.candidates,
                selected: r.selected.len(),
                scheme: c.scheme.to_string(),
                comm_delay: c.comm_delay,
                comp_delay: c.comp_delay,
                overall_delay: c.overall_delay(),
                comm_energy: c.comm_energy,
                comp_energy: c.comp_energy,
                total_energy: c.total_energy(),
                max_energy: c.max_energy,
            });
        }
    }
    let path = dir.join("simulation.csv");
    write_csv(&path, &rows)?;
    let active = rounds.iter().filter(|r| r.comparison.is_some()).count();
    println!("{} rounds, {active} with selected vehicles", rounds.len());
    Ok(vec![path])
}

fn train(sc: &Scenario, profile: &CutLayerProfile, dir: &Path, checks: &mut Checks) -> Result<Vec<PathBuf>> {
    let rows = run_training(sc, profile)?;
    for r in &rows {
        let label = format!("{} round {}", r.scheme, r.round);
        checks.check(format!("{label}: finite loss"), r.loss.is_finite());
        checks.check(
            format!("{label}: accuracies in [0, 1]"),
            (0.0..=1.0).contains(&r.train_acc) && (0.0..=1.0).contains(&r.test_acc),
        );
    }
    let path = dir.join("training.csv");
    write_csv(&path, &rows)?;
    for scheme in &sc.schemes {
        let name = scheme.to_string();
        if let Some(last) = rows.iter().rfind(|r| r.scheme == name) {
            println!("{name}: test accuracy {:.4} after {:.1} s", last.test_acc, last.elapsed);
        }
    }
    Ok(vec![path])
}

#[derive(Serialize)]
struct BoundRow {
    selected: usize,
    step: usize,
    bound: f64,
}

fn bounds(sc: &Scenario, dir: &Path, checks: &mut Checks) -> Result<Vec<PathBuf>> {
    let cfg = &sc.convergence;
    let (params, rows) = run_suite(cfg, &SeedStream::new(sc.seed).child("convergence"))?;
    for r in &rows {
        checks.check(format!("{} step {}", r.quantity, r.step), r.pass);
    }
    let mut curve = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    for k in 1..=cfg.vehicles {
        let p = ConvergenceParams { selected: k, ..params.clone() };
        let values: Vec<f64> = (1..=cfg.horizon).map(|t| p.bound(t)).collect::<asfv_core::Result<_>>()?;
        if let Some(prev) = &previous {
            checks.check(
                format!("bound decreases from K={} to K={k}", k - 1),
                values.iter().zip(prev).all(|(a, b)| a <= b),
            );
        }
        curve.extend(values.iter().enumerate().map(|(i, &bound)| BoundRow { selected: k, step: i + 1, bound }));
        previous = Some(values);
    }
    let paths = ["lemmas.csv", "bound.csv"].map(|n| dir.join(n));
    write_csv(&paths[0], &rows)?;
    write_csv(&paths[1], &curve)?;
    let passed = rows.iter().filter(|r| r.pass).count();
    println!("{passed} of {} Monte-Carlo checks within their bounds", rows.len());
    Ok(paths.to_vec())
}

fn check_sweep(results: &SweepResults, sc: &Scenario, checks: &mut Checks) {
    for p in &results.points {
        let label = format!("N={} scenario {}", p.vehicles, p.scenario);
        check_costs(checks, &label, &p.comparison.costs, sc.energy_budget_j);
        if let Some(report) = &p.comparison.report {
            check_report(checks, &label, sc, report);
        }
        for w in p.breakdown.windows(2) {
            checks.check(
                format!("{label}: vehicle compute grows from cut {} to {}", w[0].cut, w[1].cut),
                w[1].vehicle_comp > w[0].vehicle_comp,
            );
        }
    }
}

fn sweep(sc: &Scenario, profile: &CutLayerProfile, dir: &Path, checks: &mut Checks) -> Result<Vec<PathBuf>> {
    let results = run_sweep(sc, profile)?;
    check_sweep(&results, sc, checks);
    let mut paths = write_sweep(&results, dir)?;
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).with_context(|| format!("creating {}", plots.display()))?;
    paths.extend(emit_plot_data(&results, &plots)?);
    println!("{} sweep points over N = {:?}", results.points.len(), sc.sweep.vehicles);
    Ok(paths)
}

#[derive(Serialize)]
struct ProfileRow {
    cut: usize,
    vehicle_gflops: f64,
    server_gflops: f64,
    smashed_bits: f64,
    smashed_grad_bits: f64,
    vehicle_model_bits: f64,
    vehicle_cycles_per_sample: f64,
    server_cycles_per_sample: f64,
}

fn profile_cmd(profile: &CutLayerProfile, dir: &Path, checks: &mut Checks) -> Result<Vec<PathBuf>> {
    checks.check("profile valid", profile.validate().is_ok());
    let mut rows = Vec::with_capacity(profile.layers.len());
    for l in &profile.layers {
        rows.push(ProfileRow {
            cut: l.cut,
            vehicle_gflops: l.fwd_vehicle_flops / 1e9,
            server_gflops: l.fwd_server_flops / 1e9,
            smashed_bits: l.smashed_bits,
            smashed_grad_bits: l.smashed_grad_bits,
            vehicle_model_bits: l.vehicle_model_bits,
            vehicle_cycles_per_sample: profile.vehicle_cycles_per_sample(l.cut)?,
            server_cycles_per_sample: profile.server_cycles_per_sample(l.cut)?,
        });
    }
    for w in rows.windows(2) {
        checks.check(
            format!("vehicle workload grows from cut {} to {}", w[0].cut, w[1].cut),
            w[1].vehicle_cycles_per_sample > w[0].vehicle_cycles_per_sample,
        );
    }
    let path = dir.join("profile.csv");
    write_csv(&path, &rows)?;
    println!("{} cut layers in profile `{}`", rows.len(), profile.name);
    Ok(vec![path])
}

fn run(cli: Cli) -> Result<bool> {
    let overrides = parse_overrides(&cli.common.overrides)?;
    let sc = Scenario::load(cli.common.config.as_deref(), &overrides)?;
    let profile = sc.load_profile()?;
    let dir = &cli.common.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut checks = Checks::default();
    let (name, outputs) = match cli.command {
        Command::Optimize { vehicles } => ("optimize", optimize(&sc, &profile, vehicles, dir, &mut checks)?),
        Command::Simulate => ("simulate", simulate(&sc, &profile, dir, &mut checks)?),
        Command::Train => ("train", train(&sc, &profile, dir, &mut checks)?),
        Command::Bounds => ("bounds", bounds(&sc, dir, &mut checks)?),
        Command::Sweep => ("sweep", sweep(&sc, &profile, dir, &mut checks)?),
        Command::Profile => ("profile", profile_cmd(&profile, dir, &mut checks)?),
    };
    let manifest = write_manifest(dir, &sc, name, &outputs)?;
    log::info!("wrote {}", manifest.display());
    Ok(checks.report())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
