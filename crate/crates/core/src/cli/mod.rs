//! Command-line front end: every experiment end to end, with artifacts.

pub mod config;
mod human;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::evaluation::{
    bhattacharyya, evaluate_threshold, evaluation_set, labeled_maps, occupied_cells, permitted_set_experiment,
    quantile_thresholds, build_risk_map, rollout_metrics_on, ClassificationReport, Driver, RolloutMetrics,
};
use crate::experts::SyntheticExpert;
use crate::rng::derive_seed;
use crate::rollout::RolloutConfig;
use crate::session::protocol::WireSafetyEvent;
use crate::sim::{generate_scenario, Scenario};
use crate::training::{run_bc, run_dagger, run_hg_dagger, Dataset, TauStatus};

pub use config::{Overrides, RunConfig};
pub use manifest::{RunDir, RunManifest, FAILED_MARKER, MANIFEST_FILE};

/// Environment variable naming the artifact root.
pub const ARTIFACTS_ENV: &str = "HGDAGGER_ARTIFACTS";
pub const TAU_FILE: &str = "tau.txt";

#[derive(Debug, Parser)]
#[command(name = "hgdagger", version, about = "Interactive imitation learning on a two-lane driving benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat `key = value` config file; flags of the same name override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Use 10000 initial labels and 2000 labels per epoch.
    #[arg(long = "paper-scale")]
    pub paper_scale: bool,
    /// Output directory (default `$HGDAGGER_ARTIFACTS/<command>-seed<seed>`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub keys: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExpertKind {
    Synthetic,
    Human,
}

#[derive(Debug, Clone, Args)]
pub struct InitArgs {
    /// Initial policy; trained by behavioral cloning when omitted.
    #[arg(long, value_name = "CKPT", requires = "bc_dataset")]
    pub init: Option<PathBuf>,
    /// Dataset the initial policy was trained on.
    #[arg(long = "bc_dataset", value_name = "FILE", requires = "init")]
    pub bc_dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
    /// Doubt threshold; read from `tau.txt` beside the checkpoint when omitted.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Behavioral cloning on synthetic-expert demonstrations.
    TrainBc {
        #[command(flatten)]
        common: Common,
    },
    /// DAgger with a decaying expert-mixture schedule.
    TrainDagger {
        #[command(flatten)]
        init: InitArgs,
        #[command(flatten)]
        common: Common,
    },
    /// HG-DAgger with a gated expert.
    TrainHg {
        #[arg(long, value_enum, default_value = "synthetic")]
        expert: ExpertKind,
        #[command(flatten)]
        init: InitArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Collision and departure rates over the evaluation roads.
    Eval {
        #[arg(long, value_name = "CKPT", required = true)]
        checkpoint: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Rollouts from initializations inside and outside the permitted set.
    PermittedSet {
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Rasterized doubt map for one road.
    RiskMap {
        #[command(flatten)]
        policy: PolicyArgs,
        /// Road to map (default: the first evaluation road).
        #[arg(long = "scenario_seed")]
        scenario_seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Free versus occupied classification across doubt thresholds.
    SweepThresholds {
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Steering-histogram distance of each policy to the expert.
    Compare {
        #[arg(long, value_name = "CKPT", required = true)]
        checkpoint: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TrainBc { .. } => "train-bc",
            Command::TrainDagger { .. } => "train-dagger",
            Command::TrainHg { .. } => "train-hg",
            Command::Eval { .. } => "eval",
            Command::PermittedSet { .. } => "permitted-set",
            Command::RiskMap { .. } => "risk-map",
            Command::SweepThresholds { .. } => "sweep-thresholds",
            Command::Compare { .. } => "compare",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::TrainBc { common }
            | Command::TrainDagger { common, .. }
            | Command::TrainHg { common, .. }
            | Command::Eval { common, .. }
            | Command::PermittedSet { common, .. }
            | Command::RiskMap { common, .. }
            | Command::SweepThresholds { common, .. }
            | Command::Compare { common, .. } => common,
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status. Usage errors write nothing.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let common = cli.command.common();
    let config = match RunConfig::resolve(common.paper_scale, common.config.as_deref(), &common.keys) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}\n");
            eprintln!("{}", <Cli as clap::CommandFactory>::command().render_usage());
            return 2;
        }
    };
    let name = cli.command.name();
    let out = common.out.clone().unwrap_or_else(|| default_out(name, config.seed));
    let argv_text = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut run = match RunDir::create(out, name, argv_text, &config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match execute(&cli.command, &config, &mut run) {
        Ok(()) => match run.finish() {
            Ok(path) => {
                println!("{name}: artifacts in {}", path.display());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            run.fail(&e);
            1
        }
    }
}

fn default_out(command: &str, seed: u64) -> PathBuf {
    let root = std::env::var_os(ARTIFACTS_ENV).map_or_else(|| PathBuf::from("artifacts"), PathBuf::from);
    root.join(format!("{command}-seed{seed}"))
}

fn execute(command: &Command, config: &RunConfig, run: &mut RunDir) -> Result<()> {
    match command {
        Command::TrainBc { .. } => train_bc(config, run),
        Command::TrainDagger { init, .. } => train_dagger(config, init, run),
        Command::TrainHg { expert, init, .. } => train_hg(config, *expert, init, run),
        Command::Eval { checkpoint, .. } => eval(config, checkpoint, run),
        Command::PermittedSet { policy, .. } => permitted(config, policy, run),
        Command::RiskMap { policy, scenario_seed, .. } => risk_map(config, policy, *scenario_seed, run),
        Command::SweepThresholds { policy, .. } => sweep(config, policy, run),
        Command::Compare { checkpoint, .. } => compare(config, checkpoint, run),
    }
}

fn save_ensemble(run: &mut RunDir, name: &str, ensemble: &Ensemble) -> Result<()> {
    ensemble.save(&run.file(name))?;
    run.record(name)
}

fn save_dataset(run: &mut RunDir, name: &str, dataset: &Dataset) -> Result<()> {
    dataset.write(&run.file(name))?;
    run.record(name)
}

fn synthetic_expert(config: &RunConfig) -> SyntheticExpert {
    SyntheticExpert::new(config.expert_config())
}

fn train_bc(config: &RunConfig, run: &mut RunDir) -> Result<()> {
    let bc = run_bc(&mut synthetic_expert(config), &config.source(), &config.loop_config(), &config.train_config()?)?;
    save_ensemble(run, "bc.ckpt", &bc.ensemble)?;
    save_dataset(run, "dataset.txt", &bc.dataset)?;
    run.manifest.epochs.push((&bc.summary).into());
    Ok(())
}

/// The loaded `--init` pair, or a fresh behavioral-cloning run saved as
/// `bc.ckpt` and `bc_dataset.txt`.
fn initial_policy(config: &RunConfig, init: &InitArgs, run: &mut RunDir) -> Result<(Ensemble, Dataset)> {
    if let (Some(ckpt), Some(data)) = (&init.init, &init.bc_dataset) {
        run.input("init", ckpt)?;
        run.input("bc_dataset", data)?;
        return Ok((Ensemble::load(ckpt)?, Dataset::read(data)?));
    }
    let bc = run_bc(&mut synthetic_expert(config), &config.source(), &config.loop_config(), &config.train_config()?)?;
    save_ensemble(run, "bc.ckpt", &bc.ensemble)?;
    save_dataset(run, "bc_dataset.txt", &bc.dataset)?;
    run.manifest.epochs.push((&bc.summary).into());
    Ok((bc.ensemble, bc.dataset))
}

fn train_dagger(config: &RunConfig, init: &InitArgs, run: &mut RunDir) -> Result<()> {
    let (novice, d_bc) = initial_policy(config, init, run)?;
    let out = run_dagger(
        &mut synthetic_expert(config),
        &novice,
        &d_bc,
        &config.schedule(),
        &config.source(),
        &config.loop_config(),
        &config.train_config()?,
    )?;
    for (i, ens) in out.ensembles.iter().enumerate() {
        save_ensemble(run, &format!("epoch_{}.ckpt", i + 1), ens)?;
    }
    save_dataset(run, "dataset.txt", &out.dataset)?;
    for e in &out.epochs {
        run.manifest.epochs.push(e.into());
        run.manifest.beta_trace.extend(e.beta);
    }
    Ok(())
}

fn train_hg(config: &RunConfig, expert: ExpertKind, init: &InitArgs, run: &mut RunDir) -> Result<()> {
    let (novice, d_bc) = initial_policy(config, init, run)?;
    if expert == ExpertKind::Human {
        return human::train_hg_human(config, novice, d_bc, run);
    }
    let out = run_hg_dagger(
        &mut synthetic_expert(config),
        &novice,
        &d_bc,
        &config.source(),
        &config.loop_config(),
        &config.train_config()?,
    )?;
    for (i, ens) in out.ensembles.iter().enumerate() {
        save_ensemble(run, &format!("epoch_{}.ckpt", i + 1), ens)?;
    }
    save_dataset(run, "dataset.txt", &out.dataset)?;
    run.write_bytes("interventions.txt", out.log.to_text().as_bytes())?;
    run.manifest.epochs.extend(out.epochs.iter().map(Into::into));
    write_tau(run, out.tau)
}

fn write_tau(run: &mut RunDir, tau: TauStatus) -> Result<()> {
    match tau {
        TauStatus::Learned(t) => {
            run.manifest.tau = Some(t);
            run.write_bytes(TAU_FILE, format!("{t:?}\n").as_bytes())
        }
        TauStatus::NoInterventions => {
            log::warn!("no interventions were logged; tau is undefined");
            Ok(())
        }
    }
}

fn load_policy(policy: &PolicyArgs, run: &mut RunDir) -> Result<(Ensemble, f64)> {
    run.input("checkpoint", &policy.checkpoint)?;
    let ensemble = Ensemble::load(&policy.checkpoint)?;
    let tau = match policy.tau {
        Some(t) => t,
        None => {
            let path = policy.checkpoint.parent().unwrap_or(Path::new(".")).join(TAU_FILE);
            let text = std::fs::read_to_string(&path).map_err(|_| Error::UndefinedThreshold)?;
            run.input("tau", &path)?;
            text.trim().parse().map_err(|_| Error::format("tau file", 1, text.trim().to_string()))?
        }
    };
    if !tau.is_finite() {
        return Err(Error::invalid(format!("tau must be finite, got {tau}")));
    }
    run.manifest.tau = Some(tau);
    Ok((ensemble, tau))
}

fn scenario_set(seed: u64, count: usize, road_length: f64) -> Result<Vec<Scenario>> {
    (0..count as u64).map(|k| generate_scenario(derive_seed(seed, k), road_length)).collect()
}

#[derive(Serialize)]
struct MetricsRecord<'a> {
    policy: &'a str,
    collision_rate: f64,
    departure_rate: f64,
    event_rate: f64,
    mean_departure_duration: f64,
    meters_driven: f64,
    collisions: usize,
    departures: usize,
    bhattacharyya_to_expert: f64,
    steering_histogram: &'a [f64],
}

#[derive(Serialize)]
struct EpisodeRow<'a> {
    policy: &'a str,
    scenario_seed: u64,
    meters: f64,
    duration: f64,
    events: Vec<WireSafetyEvent>,
}

const METRICS_SCHEMA: &str = "policy, collision_rate and departure_rate (per meter), event_rate, \
mean_departure_duration (s), meters_driven, collisions, departures, bhattacharyya_to_expert, steering_histogram (41 bins)";
const EPISODES_SCHEMA: &str = "policy, scenario_seed, meters, duration (s), events [kind, start_time, duration, position]";

fn metrics_record<'a>(policy: &'a str, m: &'a RolloutMetrics, expert: &RolloutMetrics) -> Result<MetricsRecord<'a>> {
    Ok(MetricsRecord {
        policy,
        collision_rate: m.collision_rate,
        departure_rate: m.departure_rate,
        event_rate: m.event_rate(),
        mean_departure_duration: m.mean_departure_duration,
        meters_driven: m.meters_driven,
        collisions: m.collisions,
        departures: m.departures,
        bhattacharyya_to_expert: bhattacharyya(&m.steering_histogram, &expert.steering_histogram)?,
        steering_histogram: &m.steering_histogram,
    })
}

/// Expert and per-checkpoint metrics over the evaluation set.
fn evaluate_all(config: &RunConfig, checkpoints: &[PathBuf], run: &mut RunDir) -> Result<Vec<(String, RolloutMetrics)>> {
    let cases = evaluation_set(config.eval_seed, config.eval_scenarios, config.road_length)?;
    let rollout = RolloutConfig {
        max_time: config.max_episode_time,
        ..RolloutConfig::default()
    };
    let expert_cfg = config.expert_config();
    let mut out = vec![("expert".to_string(), rollout_metrics_on(Driver::Expert(&expert_cfg), &cases, &rollout)?)];
    for path in checkpoints {
        run.input("checkpoint", path)?;
        let ens = Ensemble::load(path)?;
        out.push((path.display().to_string(), rollout_metrics_on(Driver::Novice(&ens), &cases, &rollout)?));
    }
    Ok(out)
}

fn eval(config: &RunConfig, checkpoints: &[PathBuf], run: &mut RunDir) -> Result<()> {
    let all = evaluate_all(config, checkpoints, run)?;
    let expert = &all[0].1;
    let records = all
        .iter()
        .map(|(name, m)| metrics_record(name, m, expert))
        .collect::<Result<Vec<_>>>()?;
    for r in &records {
        println!(
            "{:<40} collisions/m {:.3e}  departures/m {:.3e}  mean departure {:.2} s",
            r.policy, r.collision_rate, r.departure_rate, r.mean_departure_duration
        );
    }
    run.write_records("metrics.jsonl", METRICS_SCHEMA, &records)?;
    let episodes: Vec<EpisodeRow> = all
        .iter()
        .flat_map(|(name, m)| {
            m.episodes.iter().map(move |e| EpisodeRow {
                policy: name,
                scenario_seed: e.scenario_seed,
                meters: e.meters,
                duration: e.duration,
                events: e.events.iter().map(Into::into).collect(),
            })
        })
        .collect();
    run.write_records("episodes.jsonl", EPISODES_SCHEMA, &episodes)
}

#[derive(Serialize)]
struct CompareRecord<'a> {
    policy: &'a str,
    bhattacharyya: f64,
    steering_histogram: &'a [f64],
}

fn compare(config: &RunConfig, checkpoints: &[PathBuf], run: &mut RunDir) -> Result<()> {
    let all = evaluate_all(config, checkpoints, run)?;
    let expert = &all[0].1;
    let records = all
        .iter()
        .map(|(name, m)| {
            Ok(CompareRecord {
                policy: name,
                bhattacharyya: bhattacharyya(&m.steering_histogram, &expert.steering_histogram)?,
                steering_histogram: &m.steering_histogram,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for r in &records {
        println!("{:<40} D_B {:.4}", r.policy, r.bhattacharyya);
    }
    run.write_records(
        "compare.jsonl",
        "policy, bhattacharyya (to the expert's steering histogram), steering_histogram (41 bins)",
        &records,
    )
}

#[derive(Serialize)]
struct GroupRecord {
    group: &'static str,
    initializations: usize,
    collision_rate: f64,
    departure_rate: f64,
    mean_departure_duration: f64,
    meters_driven: f64,
    collisions: usize,
    departures: usize,
}

#[derive(Serialize)]
struct InitRecord {
    group: &'static str,
    scenario: usize,
    x: f64,
    y: f64,
    theta: f64,
    s: f64,
    doubt: f64,
}

fn permitted(config: &RunConfig, policy: &PolicyArgs, run: &mut RunDir) -> Result<()> {
    let (ens, tau) = load_policy(policy, run)?;
    let scenarios = scenario_set(config.permitted_seed, config.permitted_scenarios, config.road_length)?;
    let report = permitted_set_experiment(&ens, tau, &scenarios, config.permitted_inits, &config.permitted_config())?;
    let group = |group, n, m: &RolloutMetrics| GroupRecord {
        group,
        initializations: n,
        collision_rate: m.collision_rate,
        departure_rate: m.departure_rate,
        mean_departure_duration: m.mean_departure_duration,
        meters_driven: m.meters_driven,
        collisions: m.collisions,
        departures: m.departures,
    };
    let groups = [
        group("inside", report.inside_inits.len(), &report.inside),
        group("outside", report.outside_inits.len(), &report.outside),
    ];
    for g in &groups {
        println!(
            "{:<8} collisions/m {:.3e}  departures/m {:.3e}  mean departure {:.2} s",
            g.group, g.collision_rate, g.departure_rate, g.mean_departure_duration
        );
    }
    run.write_records(
        "permitted_set.jsonl",
        "group (inside: doubt <= tau), initializations, collision_rate and departure_rate (per meter), \
mean_departure_duration (s), meters_driven, collisions, departures",
        &groups,
    )?;
    let inits: Vec<InitRecord> = [("inside", &report.inside_inits), ("outside", &report.outside_inits)]
        .into_iter()
        .flat_map(|(g, list)| {
            list.iter().map(move |i| InitRecord {
                group: g,
                scenario: i.scenario,
                x: i.state.x,
                y: i.state.y,
                theta: i.state.theta,
                s: i.state.s,
                doubt: i.doubt,
            })
        })
        .collect();
    run.write_records(
        "initializations.jsonl",
        "group, scenario (index into the permitted-set roads), x, y, theta, s, doubt",
        &inits,
    )
}

#[derive(Serialize)]
struct CellRecord {
    ix: usize,
    iy: usize,
    x: f64,
    y: f64,
    doubt: f64,
    permitted: bool,
    occupied: bool,
}

fn risk_map(config: &RunConfig, policy: &PolicyArgs, scenario_seed: Option<u64>, run: &mut RunDir) -> Result<()> {
    let (ens, tau) = load_policy(policy, run)?;
    let seed = scenario_seed.unwrap_or_else(|| derive_seed(config.eval_seed, 0));
    let scenario = generate_scenario(seed, config.road_length)?;
    let map = build_risk_map(&ens, &scenario, tau, &config.risk_config())?;
    let occupied = occupied_cells(&map, &scenario);
    let mut cells = Vec::with_capacity(map.values.len());
    for iy in 0..map.ny {
        for ix in 0..map.nx {
            let (x, y) = map.center(ix, iy);
            cells.push(CellRecord {
                ix,
                iy,
                x,
                y,
                doubt: map.value(ix, iy),
                permitted: map.permitted(ix, iy),
                occupied: occupied[iy * map.nx + ix],
            });
        }
    }
    let permitted = cells.iter().filter(|c| c.permitted).count();
    println!("scenario {seed}: {permitted} of {} cells permitted at tau {tau:.4}", cells.len());
    run.write_bytes("risk_map.ppm", &map.to_ppm())?;
    run.write_records(
        "risk_map.jsonl",
        "ix, iy, x, y (cell center, m), doubt, permitted (doubt <= tau), occupied (off road or inside an obstacle)",
        &cells,
    )
}

#[derive(Serialize)]
struct SweepRecord {
    kind: &'static str,
    threshold: f64,
    f1_free: f64,
    f1_occupied: f64,
    average_f1: f64,
    micro_f1: f64,
    balanced_accuracy: f64,
}

impl SweepRecord {
    fn new(kind: &'static str, r: &ClassificationReport) -> Self {
        Self {
            kind,
            threshold: r.threshold,
            f1_free: r.f1_free,
            f1_occupied: r.f1_occupied,
            average_f1: r.average_f1,
            micro_f1: r.micro_f1,
            balanced_accuracy: r.balanced_accuracy,
        }
    }
}

fn sweep(config: &RunConfig, policy: &PolicyArgs, run: &mut RunDir) -> Result<()> {
    let (ens, tau) = load_policy(policy, run)?;
    let scenarios = scenario_set(config.sweep_seed, config.sweep_scenarios, config.road_length)?;
    let maps = labeled_maps(&ens, &scenarios, &config.risk_config())?;
    let thresholds = quantile_thresholds(&maps, config.sweep_points);
    let mut records: Vec<SweepRecord> = thresholds
        .iter()
        .map(|&t| SweepRecord::new("sweep", &evaluate_threshold(&maps, t).report))
        .collect();
    let learned = evaluate_threshold(&maps, tau).report;
    let better = records.iter().filter(|r| r.balanced_accuracy > learned.balanced_accuracy).count();
    println!(
        "tau {tau:.4}: balanced accuracy {:.4}, {better} of {} swept thresholds score higher",
        learned.balanced_accuracy,
        records.len()
    );
    records.push(SweepRecord::new("learned_tau", &learned));
    run.write_records(
        "sweep.jsonl",
        "kind (sweep or learned_tau), threshold, f1_free, f1_occupied, average_f1, micro_f1, balanced_accuracy \
(each averaged over maps; occupied is the positive class)",
        &records,
    )
}
