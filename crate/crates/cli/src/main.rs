//! Experiment runner: scenario synthesis, preference-model training,
//! single simulations, parameter sweeps, and greedy-vs-oracle gap checks.
//!
//! All outputs are machine-first (CSV/JSON) and carry a config fingerprint
//! (hash of the effective configuration plus seed) for exact reproduction.
//! Errors are reported as one JSON object on stderr with a nonzero exit.

use airground::agents::AgentKind;
use airground::config::SimParams;
use airground::dispatch::{brute_force_oracle, dispatch_batch, AgentRegistry, Policy, Thresholds};
use airground::geo::Rect;
use airground::io::{load_orders, load_scenario, load_trajectories, save_scenario, subsample_gvs, SynthConfig};
use airground::preference::{train_bundle, BundleConfig, KindSamples, ModelBundle, TrainConfig};
use airground::sim::{run_simulation, run_simulation_collecting, Metrics, Scenario};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "airground", about = "Cooperative air-ground delivery experiments")]
struct Cli {
    /// Key-value config file; each `key = value` line supplies a default for
    /// the matching long flag of the chosen subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario and write it as JSON.
    Synth(SynthCmd),
    /// Train the courier network and transfer it to GV and UAV models.
    Train(TrainCmd),
    /// Run one simulation and emit metrics.
    Simulate(SimulateCmd),
    /// Sweep a parameter axis over policies and seeds.
    Sweep(SweepCmd),
    /// Compare the greedy assignment against the exact oracle on small
    /// random instances and print gap statistics.
    OracleCheck(OracleCmd),
}

/// Scenario knobs shared by the generating subcommands; defaults mirror the
/// full-scale evaluation setup.
#[derive(Args, Debug, Clone, Serialize)]
struct ScenarioOpts {
    #[arg(long, default_value_t = 1)]
    scenario_seed: u64,
    #[arg(long, default_value_t = 22_000)]
    orders: usize,
    /// Demand multiplier on the order count.
    #[arg(long, default_value_t = 1.0)]
    demand: f64,
    #[arg(long, default_value_t = 15)]
    uav_stations: usize,
    #[arg(long, default_value_t = 25)]
    uavs_per_station: usize,
    #[arg(long, default_value_t = 50)]
    courier_stations: usize,
    #[arg(long, default_value_t = 20)]
    couriers_per_station: usize,
    /// Total taxi fleet the crowdsourced GVs are drawn from.
    #[arg(long, default_value_t = 13_000)]
    taxis: usize,
    /// Fraction of the taxi fleet willing to carry parcels.
    #[arg(long, default_value_t = 0.1)]
    taxi_ratio: f64,
    #[arg(long, default_value_t = 6)]
    trips_per_gv: usize,
    /// Square service-area edge length in meters.
    #[arg(long, default_value_t = 20_000.0)]
    extent: f64,
    /// Optional orders CSV instead of synthetic demand.
    #[arg(long)]
    orders_csv: Option<PathBuf>,
    /// Optional taxi trajectories CSV instead of synthetic GV schedules.
    #[arg(long)]
    trajectories_csv: Option<PathBuf>,
}

impl ScenarioOpts {
    fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.scenario_seed,
            base_orders: self.orders,
            demand_ratio: self.demand,
            uav_stations: self.uav_stations,
            uavs_per_station: self.uavs_per_station,
            courier_stations: self.courier_stations,
            couriers_per_station: self.couriers_per_station,
            gvs: (self.taxis as f64 * self.taxi_ratio).round() as usize,
            trips_per_gv: self.trips_per_gv,
            bounds: Rect::new(0.0, 0.0, self.extent, self.extent),
            ..SynthConfig::default()
        }
    }

    fn build(&self, params: &SimParams) -> Result<Scenario> {
        let mut sc = airground::io::synth_scenario(&self.synth_config(), params);
        if let Some(path) = &self.orders_csv {
            sc.parcels =
                load_orders(path, 0.5).with_context(|| format!("loading {}", path.display()))?;
        }
        if let Some(path) = &self.trajectories_csv {
            let all = load_trajectories(path)
                .with_context(|| format!("loading {}", path.display()))?;
            sc.gv_schedules = subsample_gvs(&all, self.taxi_ratio, self.scenario_seed);
        }
        Ok(sc)
    }

    fn fingerprint(&self, extra_seed: u64) -> String {
        fingerprint(&format!("{self:?}"), extra_seed)
    }
}

#[derive(Args)]
struct SynthCmd {
    #[command(flatten)]
    scenario: ScenarioOpts,
    #[arg(long, default_value = "scenario.json")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCmd {
    /// Existing scenario JSON; generated from the scenario flags if absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    scenario_opts: ScenarioOpts,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 7)]
    train_seed: u64,
    #[arg(long, default_value = "models.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateCmd {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    scenario_opts: ScenarioOpts,
    /// two-stage | cost-greedy | on-demand | uav-gv
    #[arg(long, default_value = "two-stage")]
    policy: String,
    /// Model bundle JSON (required by two-stage).
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long, default_value = "metrics.json")]
    out: PathBuf,
    /// Also write the full event log.
    #[arg(long)]
    log_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    scenario_opts: ScenarioOpts,
    /// demand | taxi_ratio | uavs_per_station | couriers_per_station
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',', default_value = "two-stage,cost-greedy")]
    policies: Vec<String>,
    /// Repetitions; run r uses scenario seed scenario_seed + r.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long, default_value = "sweep")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct OracleCmd {
    #[arg(long, default_value_t = 200)]
    instances: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn fingerprint(spec: &str, seed: u64) -> String {
    let mut h = DefaultHasher::new();
    spec.hash(&mut h);
    seed.hash(&mut h);
    format!("{:016x}", h.finish())
}

/// Resolve an output path against the env-var output directory, if set.
fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os("AIRGROUND_OUT_DIR") {
        Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn parse_policy(name: &str, models: Option<&ModelBundle>) -> Result<Policy> {
    match name {
        "two-stage" => {
            let models = models.ok_or_else(|| {
                anyhow!("policy two-stage requires --models (train one with `airground train`)")
            })?;
            Ok(Policy::TwoStage { models: models.clone(), thresholds: Thresholds::default() })
        }
        "cost-greedy" => Ok(Policy::cost_greedy_all()),
        "on-demand" => Ok(Policy::OnDemand),
        "uav-gv" => Ok(Policy::CostGreedy { kinds: vec![AgentKind::Uav, AgentKind::Gv] }),
        other => bail!("unknown policy {other:?}"),
    }
}

#[derive(Serialize)]
struct ModelsFile {
    fingerprint: String,
    epochs: usize,
    train_seed: u64,
    final_train_loss: Option<f64>,
    bundle: ModelBundle,
}

#[derive(serde::Deserialize)]
struct ModelsFileIn {
    bundle: ModelBundle,
}

fn load_models(path: &Path) -> Result<ModelBundle> {
    let json = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let parsed: ModelsFileIn = serde_json::from_str(&json)?;
    Ok(parsed.bundle)
}

fn scenario_from(opts: &ScenarioOpts, path: Option<&PathBuf>, params: &SimParams) -> Result<Scenario> {
    match path {
        Some(p) => load_scenario(p).with_context(|| format!("loading {}", p.display())).map_err(Into::into),
        None => opts.build(params),
    }
}

fn cmd_synth(cmd: SynthCmd) -> Result<()> {
    let params = SimParams::default();
    let sc = cmd.scenario.build(&params)?;
    let out = resolve_out(&cmd.out);
    save_scenario(&out, &sc)?;
    println!(
        "{}",
        serde_json::json!({
            "scenario": out,
            "fingerprint": cmd.scenario.fingerprint(0),
            "orders": sc.parcels.len(),
            "uavs": sc.uav_count(),
            "couriers": sc.courier_count(),
            "gvs": sc.gv_schedules.len(),
        })
    );
    Ok(())
}

fn cmd_train(cmd: TrainCmd) -> Result<()> {
    let params = SimParams::default();
    let sc = scenario_from(&cmd.scenario_opts, cmd.scenario.as_ref(), &params)?;
    // Replay the day under the cost-greedy policy; its choices become the
    // acceptance labels.
    let (_, tagged) =
        run_simulation_collecting(&sc, &Policy::cost_greedy_all(), &params, true);
    let samples = KindSamples::split(tagged);
    let cfg = BundleConfig {
        train: TrainConfig { epochs: cmd.epochs, seed: cmd.train_seed, ..TrainConfig::default() },
        ..BundleConfig::default()
    };
    let (bundle, curve) = train_bundle(&samples, &cfg)?;
    let out = resolve_out(&cmd.out);
    let file = ModelsFile {
        fingerprint: cmd.scenario_opts.fingerprint(cmd.train_seed),
        epochs: cmd.epochs,
        train_seed: cmd.train_seed,
        final_train_loss: curve.last().copied(),
        bundle,
    };
    std::fs::write(&out, serde_json::to_string(&file)?)?;
    println!(
        "{}",
        serde_json::json!({
            "models": out,
            "fingerprint": file.fingerprint,
            "courier_samples": samples.courier.len(),
            "gv_samples": samples.gv.len(),
            "uav_samples": samples.uav.len(),
            "final_train_loss": file.final_train_loss,
        })
    );
    Ok(())
}

fn cmd_simulate(cmd: SimulateCmd) -> Result<()> {
    let params = SimParams::default();
    let sc = scenario_from(&cmd.scenario_opts, cmd.scenario.as_ref(), &params)?;
    let models = cmd.models.as_ref().map(|p| load_models(p)).transpose()?;
    let policy = parse_policy(&cmd.policy, models.as_ref())?;
    let res = run_simulation(&sc, &policy, &params);
    let out = resolve_out(&cmd.out);
    let doc = serde_json::json!({
        "fingerprint": cmd.scenario_opts.fingerprint(0),
        "policy": cmd.policy,
        "metrics": res.metrics,
    });
    std::fs::write(&out, serde_json::to_string_pretty(&doc)?)?;
    if let Some(log_path) = &cmd.log_out {
        std::fs::write(resolve_out(log_path), serde_json::to_string(&res.log)?)?;
    }
    println!("{doc}");
    Ok(())
}

#[derive(Serialize, Clone)]
struct SweepRow {
    axis: String,
    value: f64,
    policy: String,
    seed: u64,
    fingerprint: String,
    delivered: usize,
    failed: usize,
    total_orders: usize,
    mean_delivery_time_s: f64,
    total_cost: f64,
    gv_price_per_delivery: f64,
    delivered_uav: usize,
    delivered_courier: usize,
    delivered_gv: usize,
}

impl SweepRow {
    fn from_metrics(
        axis: &str,
        value: f64,
        policy: &str,
        seed: u64,
        fp: String,
        m: &Metrics,
    ) -> Self {
        SweepRow {
            axis: axis.to_string(),
            value,
            policy: policy.to_string(),
            seed,
            fingerprint: fp,
            delivered: m.delivered,
            failed: m.failed,
            total_orders: m.total_orders,
            mean_delivery_time_s: m.mean_delivery_time,
            total_cost: m.total_cost,
            gv_price_per_delivery: m.gv_price_per_delivery,
            delivered_uav: m.delivered_by_kind[0],
            delivered_courier: m.delivered_by_kind[1],
            delivered_gv: m.delivered_by_kind[2],
        }
    }
}

fn apply_axis(opts: &ScenarioOpts, axis: &str, value: f64) -> Result<ScenarioOpts> {
    let mut o = opts.clone();
    match axis {
        "demand" => o.demand = value,
        "taxi_ratio" => o.taxi_ratio = value,
        "uavs_per_station" => o.uavs_per_station = value as usize,
        "couriers_per_station" => o.couriers_per_station = value as usize,
        other => bail!("unknown sweep axis {other:?}"),
    }
    Ok(o)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn cmd_sweep(cmd: SweepCmd) -> Result<()> {
    let params = SimParams::default();
    let models = cmd.models.as_ref().map(|p| load_models(p)).transpose()?;
    let out_dir = resolve_out(&cmd.out_dir);
    std::fs::create_dir_all(&out_dir)?;

    let mut rows: Vec<SweepRow> = Vec::new();
    for &value in &cmd.values {
        for policy_name in &cmd.policies {
            let policy = parse_policy(policy_name, models.as_ref())?;
            for rep in 0..cmd.seeds {
                let mut opts = apply_axis(&cmd.scenario_opts, &cmd.axis, value)?;
                opts.scenario_seed = cmd.scenario_opts.scenario_seed + rep;
                let sc = opts.build(&params)?;
                let res = run_simulation(&sc, &policy, &params);
                rows.push(SweepRow::from_metrics(
                    &cmd.axis,
                    value,
                    policy_name,
                    opts.scenario_seed,
                    opts.fingerprint(opts.scenario_seed),
                    &res.metrics,
                ));
                // Partial results survive interruption of later cells.
                write_sweep_outputs(&out_dir, &rows, &cmd)?;
            }
        }
    }
    println!(
        "{}",
        serde_json::json!({ "out_dir": out_dir, "runs": rows.len() })
    );
    Ok(())
}

fn write_sweep_outputs(out_dir: &Path, rows: &[SweepRow], cmd: &SweepCmd) -> Result<()> {
    let mut w = csv::Writer::from_path(out_dir.join("runs.csv"))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;

    // Aggregates: mean and standard deviation per (value, policy) cell.
    let mut agg = csv::Writer::from_path(out_dir.join("aggregates.csv"))?;
    agg.write_record([
        "axis", "value", "policy", "runs",
        "delivered_mean", "delivered_std",
        "total_cost_mean", "total_cost_std",
        "gv_price_mean", "gv_price_std",
        "delivery_time_mean", "delivery_time_std",
    ])?;
    for &value in &cmd.values {
        for policy in &cmd.policies {
            let cell: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.value == value && &r.policy == policy)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let col = |f: fn(&SweepRow) -> f64| -> (f64, f64) {
                mean_std(&cell.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let (dm, ds) = col(|r| r.delivered as f64);
            let (cm, cs) = col(|r| r.total_cost);
            let (gm, gs) = col(|r| r.gv_price_per_delivery);
            let (tm, ts) = col(|r| r.mean_delivery_time_s);
            agg.write_record([
                cmd.axis.clone(),
                value.to_string(),
                policy.clone(),
                cell.len().to_string(),
                dm.to_string(), ds.to_string(),
                cm.to_string(), cs.to_string(),
                gm.to_string(), gs.to_string(),
                tm.to_string(), ts.to_string(),
            ])?;
        }
    }
    agg.flush()?;

    std::fs::write(out_dir.join("results.json"), serde_json::to_string_pretty(rows)?)?;
    Ok(())
}

fn cmd_oracle_check(cmd: OracleCmd) -> Result<()> {
    use airground::agents::{CourierState, GvState, Parcel, ParcelId, ParcelPool};
    use airground::geo::{Location, ServiceArea};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let params = SimParams::default().no_service_time();
    let area = ServiceArea::new(Rect::new(-5000.0, -5000.0, 5000.0, 5000.0));
    let mut rng = ChaCha8Rng::seed_from_u64(cmd.seed);
    let mut ratios = Vec::new();
    let mut count_gaps = 0u64;
    let mut cost_gap_max: f64 = 0.0;
    for _ in 0..cmd.instances {
        fn loc(rng: &mut ChaCha8Rng) -> Location {
            Location::new(rng.gen_range(-3000.0..3000.0), rng.gen_range(-3000.0..3000.0))
        }
        let mut reg = AgentRegistry::default();
        reg.couriers.push(CourierState::idle_at_station(0, 0, loc(&mut rng), &params));
        reg.gvs.push(GvState::idle(0, loc(&mut rng), &params));
        let n = rng.gen_range(2..=5);
        let parcels: Vec<Parcel> = (0..n)
            .map(|i| Parcel::new(ParcelId(i), 0.0, loc(&mut rng), loc(&mut rng), 0.5))
            .collect();
        let ids: Vec<ParcelId> = parcels.iter().map(|p| p.id).collect();
        let pool = ParcelPool::new(parcels);

        let oracle = brute_force_oracle(&ids, &reg, &pool, 0.0, &params, &area);
        let mut reg_g = reg.clone();
        let mut pool_g = pool.clone();
        let out = dispatch_batch(
            &Policy::cost_greedy_all(),
            &ids,
            &mut reg_g,
            &mut pool_g,
            0.0,
            &params,
            &area,
            false,
        );
        let greedy_cost: f64 = out.committed.iter().map(|c| c.monetized_cost(&params)).sum();
        if oracle.delivered > 0 {
            ratios.push(out.committed.len() as f64 / oracle.delivered as f64);
        }
        if out.committed.len() < oracle.delivered {
            count_gaps += 1;
        } else if oracle.delivered > 0 {
            cost_gap_max = cost_gap_max.max(greedy_cost - oracle.total_cost);
        }
    }
    let (mean_ratio, std_ratio) = mean_std(&ratios);
    println!(
        "{}",
        serde_json::json!({
            "instances": cmd.instances,
            "mean_count_ratio": mean_ratio,
            "std_count_ratio": std_ratio,
            "instances_with_count_gap": count_gaps,
            "max_cost_gap_at_equal_count": cost_gap_max,
        })
    );
    Ok(())
}

/// Inject `key = value` pairs from the config file as trailing long flags,
/// unless the flag is already present on the command line.
fn merge_config_args(mut argv: Vec<String>) -> Result<Vec<String>> {
    let pos = argv.iter().position(|a| a == "--config");
    let Some(pos) = pos else { return Ok(argv) };
    let path = argv
        .get(pos + 1)
        .ok_or_else(|| anyhow!("--config requires a file path"))?
        .clone();
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {path}"))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{path}:{}: expected key = value", lineno + 1))?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        if !argv.iter().any(|a| a == &flag) {
            argv.push(flag);
            argv.push(value.trim().to_string());
        }
    }
    Ok(argv)
}

fn run() -> Result<()> {
    let argv = merge_config_args(std::env::args().collect())?;
    let cli = Cli::parse_from(argv);
    match cli.command {
        Command::Synth(c) => cmd_synth(c),
        Command::Train(c) => cmd_train(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::OracleCheck(c) => cmd_oracle_check(c),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
        std::process::exit(1);
    }
}
