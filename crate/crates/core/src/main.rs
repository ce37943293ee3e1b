use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use phasewise::harness::output::{self, SummaryRow};
use phasewise::harness::{
    ablation_suite, evaluate_replicas, generate_grid_scenario, run_experiment, transfer_eval,
    ControllerSpec, DemandProfile, Experiment, ExperimentReport, ExperimentSpec, GridOptions,
    PhaseScheme, ResultRow,
};
use phasewise::policy::{feature_frequency, Baseline};
use phasewise::search::{parse_exploration, search, AblationMode, SearchConfig};
use phasewise::sim::{Scenario, SimParams};
use phasewise::PriorityFunction;

#[derive(Parser, Debug)]
#[command(
    name = "phasewise",
    version,
    about = "Symbolic traffic signal policy search"
)]
struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for a priority function on one scenario.
    Search(SearchArgs),
    /// Evaluate a priority function given as a token list.
    Eval(EvalArgs),
    /// Evaluate a classical controller.
    Baseline(BaselineArgs),
    /// Write a synthetic grid scenario.
    GenScenario(GenArgs),
    /// Run the full method and its ablations.
    Ablate(AblateArgs),
    /// Evaluate stored policies on other scenarios without retraining.
    Transfer(TransferArgs),
    /// Summarize policies found in a results directory.
    Analyze(AnalyzeArgs),
    /// Run an experiment described by a JSON file.
    Run(RunArgs),
}

#[derive(Args, Debug, Clone)]
struct SearchFlags {
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    #[arg(long, default_value_t = 6)]
    max_ops: usize,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    /// Exploration constant: a number, `sqrt2` or `inv-sqrt2`.
    #[arg(long, default_value = "sqrt2", value_parser = parse_c)]
    c_uct: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Jittered replicas used for training rewards (0 = base flow only).
    #[arg(long, default_value_t = 0)]
    train_replicas: usize,
}

fn parse_c(s: &str) -> std::result::Result<f64, String> {
    parse_exploration(s).map_err(|e| e.to_string())
}

impl SearchFlags {
    fn config(&self, seed: u64, noise_bound: u32) -> SearchConfig {
        SearchConfig {
            max_operators: self.max_ops,
            epsilon: self.epsilon,
            c_uct: self.c_uct,
            alpha: self.alpha,
            k: self.k,
            iterations: self.iterations,
            seed,
            train_replicas: self.train_replicas,
            noise_bound,
            ..SearchConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
struct EvalFlags {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Jittered flow replicas to evaluate on (0 = base flow only).
    #[arg(long, default_value_t = 0)]
    replicas: usize,
    #[arg(long, default_value_t = 60)]
    noise_bound: u32,
    #[arg(long, default_value_t = 20)]
    decision_interval: u32,
    /// Write results.csv, summary.json and invocation.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl EvalFlags {
    fn params(&self) -> SimParams {
        SimParams {
            decision_interval: self.decision_interval,
            ..SimParams::default()
        }
    }
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "FM")]
    mode: AblationMode,
    #[command(flatten)]
    search: SearchFlags,
    /// Jittered replicas the best policy is evaluated on afterwards.
    #[arg(long, default_value_t = 9)]
    replicas: usize,
    #[arg(long, default_value_t = 60)]
    noise_bound: u32,
    #[arg(long, default_value_t = 20)]
    decision_interval: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Prefix token list such as "mul LI mul DI DI".
    #[arg(long)]
    policy: String,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// maxpressure, fixedtime or random.
    #[arg(long)]
    name: Baseline,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 1)]
    rows: usize,
    #[arg(long, default_value_t = 1)]
    cols: usize,
    #[arg(long, default_value = "medium")]
    demand: DemandProfile,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 4, 8 or mixed.
    #[arg(long, default_value = "8")]
    phases: PhaseScheme,
    #[arg(long, default_value_t = 3600)]
    episode_length: u32,
    #[arg(long, default_value_t = 200.0)]
    lane_length: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Modes to run; all five when omitted.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<AblationMode>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    #[command(flatten)]
    search: SearchFlags,
    #[arg(long, default_value_t = 9)]
    replicas: usize,
    #[arg(long, default_value_t = 60)]
    noise_bound: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TransferArgs {
    /// File with one token list per line.
    #[arg(long)]
    policy_file: PathBuf,
    /// Target scenarios.
    #[arg(long, required = true)]
    scenario: Vec<PathBuf>,
    /// Name of the training scenario used in row tags.
    #[arg(long, default_value = "source")]
    source: String,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 9)]
    replicas: usize,
    #[arg(long, default_value_t = 60)]
    noise_bound: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct AnalyzeArgs {
    /// Count feature occurrences across every best_policy.txt under DIR.
    #[arg(long, value_name = "DIR")]
    feature_freq: Option<PathBuf>,
    /// Report FLOPs and bytes for every best_policy.txt under DIR.
    #[arg(long, value_name = "DIR")]
    cost: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Search(a) => cmd_search(cli, a),
        Command::Eval(a) => {
            let pf = PriorityFunction::parse(&a.policy)
                .with_context(|| format!("invalid policy `{}`", a.policy))?;
            cmd_eval(cli, &a.scenario, &Baseline::Policy(pf), &a.eval)
        }
        Command::Baseline(a) => cmd_eval(cli, &a.scenario, &a.name, &a.eval),
        Command::GenScenario(a) => cmd_gen(a),
        Command::Ablate(a) => cmd_ablate(cli, a),
        Command::Transfer(a) => cmd_transfer(cli, a),
        Command::Analyze(a) => cmd_analyze(cli, a),
        Command::Run(a) => cmd_run(cli, a),
    }
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn print_summary(cli: &Cli, rows: &[ResultRow]) -> Result<()> {
    let summary = output::summarize(rows);
    if cli.json {
        println!("{}", serde_json::to_string(&summary)?);
    } else {
        print_table(&summary);
    }
    Ok(())
}

fn print_table(summary: &[SummaryRow]) {
    println!(
        "{:<28} {:<32} {:>4} {:>16} {:>14}",
        "scenario", "controller", "n", "travel_time", "throughput"
    );
    for s in summary {
        println!(
            "{:<28} {:<32} {:>4} {:>8.3} ± {:<6.3} {:>7.3} ± {:<5.3}",
            s.scenario,
            s.controller,
            s.n,
            s.travel_time_mean,
            s.travel_time_std,
            s.throughput_mean,
            s.throughput_std
        );
    }
}

fn finish<C: Serialize>(
    cli: &Cli,
    out: Option<&Path>,
    report: &ExperimentReport,
    config: C,
) -> Result<()> {
    if let Some(dir) = out {
        output::write_report(dir, report)?;
        output::write_invocation(dir, config)?;
    }
    print_summary(cli, &report.rows)
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    scenario: &'a Path,
    controller: String,
    seed: u64,
    replicas: usize,
    noise_bound: u32,
    sim: SimParams,
}

fn cmd_eval(cli: &Cli, scenario: &Path, controller: &Baseline, flags: &EvalFlags) -> Result<()> {
    let s = load_scenario(scenario)?;
    let params = flags.params();
    params.validate()?;
    let rows: Vec<ResultRow> = if flags.replicas == 0 {
        let mut ctl = controller.controller(flags.seed)?;
        let m = phasewise::sim::run_episode(
            &s.network,
            &s.flows,
            ctl.as_mut(),
            params.with_episode_length(s.episode_length),
        )?;
        vec![row(&s.name, controller, flags.seed, 0, m)]
    } else {
        evaluate_replicas(
            &s,
            controller,
            flags.seed,
            flags.replicas,
            flags.noise_bound,
            params,
        )?
        .into_iter()
        .enumerate()
        .map(|(r, m)| row(&s.name, controller, flags.seed, r, m))
        .collect()
    };
    let report = ExperimentReport {
        rows,
        trained: Vec::new(),
    };
    let config = EvalConfig {
        scenario,
        controller: controller.to_string(),
        seed: flags.seed,
        replicas: flags.replicas,
        noise_bound: flags.noise_bound,
        sim: params.with_episode_length(s.episode_length),
    };
    finish(cli, flags.out.as_deref(), &report, config)
}

fn row(
    scenario: &str,
    controller: &Baseline,
    seed: u64,
    replica: usize,
    m: phasewise::sim::EpisodeMetrics,
) -> ResultRow {
    let policy = match controller {
        Baseline::Policy(p) => Some(p),
        _ => None,
    };
    let cost = policy.and_then(|p| p.cost().ok());
    ResultRow {
        scenario: scenario.to_string(),
        controller: controller.to_string(),
        seed,
        replica,
        avg_travel_time: m.avg_travel_time,
        throughput: m.throughput,
        completed: m.completed,
        entered: m.entered,
        policy: policy.map(|p| p.render()).unwrap_or_default(),
        flops: cost.map(|c| c.flops),
        bytes: cost.map(|c| c.bytes),
    }
}

#[derive(Serialize)]
struct SearchRunConfig<'a> {
    scenario: &'a Path,
    mode: String,
    search: &'a SearchConfig,
    eval_replicas: usize,
    noise_bound: u32,
    sim: SimParams,
}

fn cmd_search(cli: &Cli, a: &SearchArgs) -> Result<()> {
    let s = load_scenario(&a.scenario)?;
    let cfg = a.search.config(a.seed, a.noise_bound).with_ablation(a.mode);
    let params = SimParams {
        decision_interval: a.decision_interval,
        ..SimParams::default()
    }
    .with_episode_length(s.episode_length);
    let outcome = search(&s, &cfg, params)?;
    log::info!(
        "best {} (train travel time {:.3})",
        outcome.best,
        outcome.best_travel_time
    );
    let baseline = Baseline::Policy(outcome.best.clone());
    let rows = if a.replicas == 0 {
        Vec::new()
    } else {
        evaluate_replicas(&s, &baseline, a.seed, a.replicas, a.noise_bound, params)?
            .into_iter()
            .enumerate()
            .map(|(r, m)| ResultRow {
                controller: ControllerSpec::Search(a.mode).to_string(),
                ..row(&s.name, &baseline, a.seed, r, m)
            })
            .collect()
    };
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        output::write_log(&dir.join(output::SEARCH_LOG), &outcome.log)?;
        output::write_policies(&dir.join(output::BEST_POLICY), [&outcome.best])?;
        if !rows.is_empty() {
            output::write_rows(&dir.join(output::RESULTS_CSV), &rows)?;
            output::write_json(&dir.join(output::SUMMARY_JSON), &output::summarize(&rows))?;
        }
        output::write_invocation(
            dir,
            SearchRunConfig {
                scenario: &a.scenario,
                mode: a.mode.to_string(),
                search: &cfg,
                eval_replicas: a.replicas,
                noise_bound: a.noise_bound,
                sim: params,
            },
        )?;
    }
    let infix = outcome.best.build_tree()?.to_string();
    if cli.json {
        let summary = output::summarize(&rows);
        println!(
            "{}",
            serde_json::json!({
                "best_policy": outcome.best.render(),
                "expression": infix,
                "train_travel_time": outcome.best_travel_time,
                "unique_evaluations": outcome.unique_evaluations,
                "eval": summary,
            })
        );
    } else {
        println!("best policy: {}", outcome.best);
        println!("expression:  {infix}");
        println!("train travel time: {:.3} s", outcome.best_travel_time);
        if !rows.is_empty() {
            print_table(&output::summarize(&rows));
        }
    }
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    if a.rows == 0 || a.cols == 0 {
        bail!("rows and cols must be positive");
    }
    let opts = GridOptions {
        phases: a.phases,
        episode_length_s: a.episode_length,
        lane_length_m: a.lane_length,
        ..GridOptions::new(a.rows, a.cols, a.demand, a.seed)
    };
    let file = generate_grid_scenario(&opts);
    let text = serde_json::to_string_pretty(&file)?;
    match &a.out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct AblateConfig<'a> {
    scenario: &'a Path,
    modes: Vec<String>,
    seeds: &'a [u64],
    search: SearchConfig,
    replicas: usize,
    noise_bound: u32,
}

fn cmd_ablate(cli: &Cli, a: &AblateArgs) -> Result<()> {
    let s = load_scenario(&a.scenario)?;
    let modes = if a.mode.is_empty() {
        AblationMode::ALL.to_vec()
    } else {
        a.mode.clone()
    };
    let exp = Experiment {
        scenario: s,
        transfer: Vec::new(),
        controllers: Vec::new(),
        search: a.search.config(0, a.noise_bound),
        seeds: a.seeds.clone(),
        replicas: a.replicas,
        noise_bound: a.noise_bound,
        params: SimParams::default(),
    };
    let report = ablation_suite(&exp, &modes)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        output::write_ablation(&dir.join(output::ABLATION_CSV), &report.rows, &modes)?;
    }
    let config = AblateConfig {
        scenario: &a.scenario,
        modes: modes.iter().map(|m| m.to_string()).collect(),
        seeds: &a.seeds,
        search: exp.search.clone(),
        replicas: a.replicas,
        noise_bound: a.noise_bound,
    };
    finish(cli, a.out.as_deref(), &report, config)
}

#[derive(Serialize)]
struct TransferConfig<'a> {
    policy_file: &'a Path,
    policies: Vec<String>,
    scenarios: &'a [PathBuf],
    source: &'a str,
    seeds: &'a [u64],
    replicas: usize,
    noise_bound: u32,
}

fn read_policy_file(path: &Path) -> Result<Vec<PriorityFunction>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let policies = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            PriorityFunction::parse(l).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    if policies.is_empty() {
        bail!("{} contains no policies", path.display());
    }
    Ok(policies)
}

fn cmd_transfer(cli: &Cli, a: &TransferArgs) -> Result<()> {
    let policies = read_policy_file(&a.policy_file)?;
    let targets = a
        .scenario
        .iter()
        .map(|p| load_scenario(p))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (i, p) in policies.iter().enumerate() {
        let label = if policies.len() == 1 {
            "search".to_string()
        } else {
            format!("search#{i}")
        };
        rows.extend(transfer_eval(
            p,
            &label,
            &a.source,
            &targets,
            &a.seeds,
            a.replicas,
            a.noise_bound,
            SimParams::default(),
        )?);
    }
    let report = ExperimentReport {
        rows,
        trained: Vec::new(),
    };
    let config = TransferConfig {
        policy_file: &a.policy_file,
        policies: policies.iter().map(|p| p.render()).collect(),
        scenarios: &a.scenario,
        source: &a.source,
        seeds: &a.seeds,
        replicas: a.replicas,
        noise_bound: a.noise_bound,
    };
    finish(cli, a.out.as_deref(), &report, config)
}

#[derive(Serialize)]
struct CostLine {
    policy: String,
    expression: String,
    flops: usize,
    bytes: usize,
}

fn cmd_analyze(cli: &Cli, a: &AnalyzeArgs) -> Result<()> {
    if let Some(dir) = &a.feature_freq {
        let policies = output::collect_policies(dir)?;
        let freq = feature_frequency(&policies);
        if cli.json {
            let map: serde_json::Map<String, serde_json::Value> = freq
                .iter()
                .map(|(f, n)| (f.to_string(), (*n).into()))
                .collect();
            println!("{}", serde_json::Value::Object(map));
        } else {
            println!("{} policies", policies.len());
            for (f, n) in &freq {
                println!("{f} {n}");
            }
        }
    }
    if let Some(dir) = &a.cost {
        let policies = output::collect_policies(dir)?;
        let lines = policies
            .iter()
            .map(|p| {
                let c = p.cost()?;
                Ok(CostLine {
                    policy: p.render(),
                    expression: p.build_tree()?.to_string(),
                    flops: c.flops,
                    bytes: c.bytes,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if cli.json {
            println!("{}", serde_json::to_string(&lines)?);
        } else {
            for l in &lines {
                println!(
                    "{:>3} flops {:>3} bytes  {}",
                    l.flops, l.bytes, l.expression
                );
            }
        }
    }
    Ok(())
}

fn cmd_run(cli: &Cli, a: &RunArgs) -> Result<()> {
    let spec =
        ExperimentSpec::load(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?;
    let base = a.spec.parent().unwrap_or_else(|| Path::new("."));
    let exp = spec.resolve(base)?;
    let report = run_experiment(&exp)?;
    finish(cli, Some(&a.out), &report, &spec)
}
