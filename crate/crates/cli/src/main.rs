//! `jsp` — job-shop scheduling from the command line: dataset
//! generation, policy training, evaluation against dispatching rules
//! and the exact oracle, and Gantt rendering.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error.

use clap::{Args, Parser, Subcommand};
use jsp_cli::{cfgfile, report};
use jsp_core::schedule::{build_schedule, check_feasible};
use jsp_core::{
    gantt, generate_flowshop, generate_taillard, io as jio, mix_seed, optimal_makespan, run_pdr,
    BuildMode, DispatchList, Instance, Rule,
};
use jsp_policy::checkpoint::{self, LoadedModel};
use jsp_policy::{DecodeMode, PolicyModel, Precision, Scalar};
use jsp_trainer::{active_search, eas_emb, log_to_csv, train, TrainData, TrainerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "jsp",
    about = "Job-shop scheduling: learned dispatching policies, classical rules, exact oracle",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset of random instances
    Gen(GenArgs),
    /// Train a policy from a config file
    Train(TrainArgs),
    /// Evaluate methods on a dataset and report means and gaps
    Eval(EvalArgs),
    /// Render the Gantt chart of one instance under a chosen solver
    Gantt(GanttArgs),
    /// Certified optimal makespans for tiny instances
    Oracle(OracleArgs),
    /// Run one priority dispatching rule over a dataset
    Pdr(PdrArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Jobs per instance
    #[arg(long)]
    n_jobs: usize,
    /// Machines per instance
    #[arg(long)]
    n_machines: usize,
    /// Number of instances
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    /// Output dataset file
    #[arg(long)]
    out: PathBuf,
    /// jsp: random machine orders; fsp: identity machine orders
    #[arg(long, default_value = "jsp")]
    kind: String,
}

#[derive(Args)]
struct TrainArgs {
    /// Config file with [model], [trainer] and optional [data] sections
    #[arg(long)]
    config: PathBuf,
    /// Output directory (checkpoints, training log, summary)
    #[arg(long)]
    out: PathBuf,
    /// Train on a fixed dataset file instead of generated instances
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Continue from an existing checkpoint
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Override the config's parameter precision
    #[arg(long)]
    precision: Option<Precision>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file; required for model-based methods
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset file to evaluate on
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated subset of: model-greedy, model-sample-K,
    /// active-search, eas-emb, SPT, MWKR, MOPNR, FDD, oracle
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<String>,
    /// Required by the stochastic methods
    #[arg(long)]
    seed: Option<u64>,
    /// Schedule builder mode for all methods
    #[arg(long, default_value = "gap-insert")]
    mode: BuildMode,
    /// Gradient steps for active-search / eas-emb
    #[arg(long, default_value_t = 100)]
    search_steps: usize,
    /// Sampled rollouts per search step
    #[arg(long, default_value_t = 32)]
    search_batch: usize,
    /// Learning rate for active-search / eas-emb
    #[arg(long, default_value_t = 0.01)]
    search_lr: f64,
    /// Node budget per instance for the oracle
    #[arg(long, default_value_t = 10_000_000)]
    oracle_budget: u64,
    /// Write the per-instance CSV here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GanttArgs {
    /// Instance file
    #[arg(long)]
    instance: PathBuf,
    /// Solve with a dispatching rule (SPT, MWKR, MOPNR, FDD)
    #[arg(long)]
    rule: Option<String>,
    /// Solve with a trained policy (greedy decode)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Replay an explicit dispatch list (whitespace-separated row indices)
    #[arg(long)]
    list: Option<PathBuf>,
    /// Output SVG file
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "gap-insert")]
    mode: BuildMode,
    /// Also dump the schedule as CSV rows (job, pos, machine, start, end)
    #[arg(long)]
    schedule_csv: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Search node budget per instance
    #[arg(long, default_value_t = 10_000_000)]
    budget: u64,
    /// Write the per-instance CSV here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PdrArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// SPT, MWKR, MOPNR or FDD
    #[arg(long)]
    rule: String,
    #[arg(long, default_value = "gap-insert")]
    mode: BuildMode,
    /// Write the per-instance CSV here
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Validation(String),
    Runtime(String),
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Gantt(args) => cmd_gantt(args),
        Cmd::Oracle(args) => cmd_oracle(args),
        Cmd::Pdr(args) => cmd_pdr(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, content).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<Vec<Instance>, CliError> {
    jio::read_dataset(&read_to_string(path)?).map_err(validation)
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let generator = match args.kind.as_str() {
        "jsp" => generate_taillard,
        "fsp" => generate_flowshop,
        other => {
            return Err(validation(format!(
                "unknown kind `{other}`, expected jsp|fsp"
            )))
        }
    };
    if args.n_jobs == 0 || args.n_machines == 0 {
        return Err(validation("n_jobs and n_machines must be positive"));
    }
    let instances: Vec<Instance> = (0..args.count)
        .map(|i| generator(args.n_jobs, args.n_machines, mix_seed(args.seed, i as u64)))
        .collect();
    write_file(&args.out, &jio::write_dataset(&instances))?;
    println!(
        "wrote {} {}x{} instances to {}",
        args.count,
        args.n_jobs,
        args.n_machines,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let text = read_to_string(&args.config)?;
    let mut parsed = cfgfile::parse_config(&text).map_err(CliError::Validation)?;
    if let Some(p) = args.precision {
        parsed.model.precision = p;
    }

    let data = match &args.dataset {
        Some(path) => TrainData::Fixed(load_dataset(path)?),
        None => match parsed.data_shape {
            Some((n, m)) => TrainData::Generated {
                n_jobs: n,
                n_machines: m,
            },
            None => {
                return Err(validation(
                    "no [data] section in the config and no --dataset file",
                ))
            }
        },
    };
    data.validate().map_err(validation)?;

    match parsed.model.precision {
        Precision::F64 => run_train::<f64>(&args, &parsed, data),
        Precision::F32 => run_train::<f32>(&args, &parsed, data),
    }
}

fn run_train<T: Scalar>(
    args: &TrainArgs,
    parsed: &cfgfile::ConfigFile,
    data: TrainData,
) -> Result<(), CliError> {
    let model: PolicyModel<T> = match &args.resume {
        Some(path) => match checkpoint::load(path).map_err(validation)? {
            LoadedModel::F32(_) if T::BYTE_WIDTH == 8 => {
                return Err(validation("checkpoint is f32 but the config requests f64"))
            }
            LoadedModel::F64(_) if T::BYTE_WIDTH == 4 => {
                return Err(validation("checkpoint is f64 but the config requests f32"))
            }
            LoadedModel::F32(m) => reload_as(m),
            LoadedModel::F64(m) => reload_as(m),
        },
        None => PolicyModel::init(&parsed.model, mix_seed(parsed.trainer.seed, 0x5EED))
            .map_err(validation)?,
    };

    std::fs::create_dir_all(&args.out)
        .map_err(|e| runtime(format!("{}: {e}", args.out.display())))?;
    let out = args.out.clone();
    let run = train(model, &parsed.trainer, &data, |epoch, model, metrics| {
        let path = out.join(format!("epoch_{:03}.ckpt", epoch + 1));
        if let Err(e) = checkpoint::save(model, &path) {
            eprintln!("warning: could not write {}: {e}", path.display());
        }
        println!(
            "epoch {:>3}: sampled mean {:.2}, baseline mean {:.2}, baseline {} (p = {:.4})",
            epoch + 1,
            metrics.mean_sample_cost,
            metrics.mean_baseline_cost,
            if metrics.baseline_replaced {
                "replaced"
            } else {
                "kept"
            },
            metrics.ttest_p,
        );
    })
    .map_err(runtime)?;

    checkpoint::save(&run.model, &out.join("final.ckpt")).map_err(runtime)?;
    write_file(&out.join("train_log.csv"), &log_to_csv(&run.log))?;

    let mut summary = String::new();
    summary.push_str(&format!("config_hash: {}\n", parsed.hash));
    summary.push_str(&format!("precision: {}\n", parsed.model.precision));
    summary.push_str(&format!("param_count: {}\n", run.model.param_count()));
    summary.push_str(&format!("epochs: {}\n", run.metrics.len()));
    for m in &run.metrics {
        summary.push_str(&format!(
            "epoch {}: mean_sample_cost {:.4}, mean_baseline_cost {:.4}, baseline_replaced {}, ttest_p {:.6}\n",
            m.epoch + 1, m.mean_sample_cost, m.mean_baseline_cost, m.baseline_replaced, m.ttest_p
        ));
    }
    write_file(&out.join("summary.txt"), &summary)?;
    println!("final checkpoint: {}", out.join("final.ckpt").display());
    Ok(())
}

/// The resume path already checked the precision tag matches `T`.
fn reload_as<S: Scalar, T: Scalar>(model: PolicyModel<S>) -> PolicyModel<T> {
    let bytes = checkpoint::to_bytes(&model);
    match checkpoint::from_bytes(&bytes).expect("roundtrip of a model we just serialized") {
        LoadedModel::F32(m) if T::BYTE_WIDTH == 4 => same_type_cast(m),
        LoadedModel::F64(m) if T::BYTE_WIDTH == 8 => same_type_cast(m),
        _ => unreachable!("precision checked by the caller"),
    }
}

/// Converts `PolicyModel<A>` to `PolicyModel<B>` when A == B (checked
/// via the byte width); avoids duplicating the loader per precision.
fn same_type_cast<A: Scalar, B: Scalar>(model: PolicyModel<A>) -> PolicyModel<B> {
    assert_eq!(A::BYTE_WIDTH, B::BYTE_WIDTH);
    let boxed: Box<dyn std::any::Any> = Box::new(model);
    *boxed.downcast::<PolicyModel<B>>().expect("same type")
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Method {
    ModelGreedy,
    ModelSample(usize),
    ActiveSearch,
    EasEmb,
    Pdr(Rule),
    Oracle,
}

impl Method {
    fn parse(s: &str) -> Result<Method, String> {
        if let Ok(rule) = Rule::from_str(s) {
            return Ok(Method::Pdr(rule));
        }
        match s {
            "model-greedy" => Ok(Method::ModelGreedy),
            "active-search" => Ok(Method::ActiveSearch),
            "eas-emb" => Ok(Method::EasEmb),
            "oracle" => Ok(Method::Oracle),
            other => {
                if let Some(k) = other.strip_prefix("model-sample-") {
                    let k: usize = k
                        .parse()
                        .map_err(|_| format!("bad sample count in `{other}`"))?;
                    if k == 0 {
                        return Err("sample count must be positive".into());
                    }
                    Ok(Method::ModelSample(k))
                } else {
                    Err(format!("unknown method `{other}`"))
                }
            }
        }
    }

    fn name(&self) -> String {
        match self {
            Method::ModelGreedy => "model-greedy".into(),
            Method::ModelSample(k) => format!("model-sample-{k}"),
            Method::ActiveSearch => "active-search".into(),
            Method::EasEmb => "eas-emb".into(),
            Method::Pdr(rule) => rule.to_string(),
            Method::Oracle => "oracle".into(),
        }
    }

    fn needs_model(&self) -> bool {
        matches!(
            self,
            Method::ModelGreedy | Method::ModelSample(_) | Method::ActiveSearch | Method::EasEmb
        )
    }

    fn stochastic(&self) -> bool {
        matches!(
            self,
            Method::ModelSample(_) | Method::ActiveSearch | Method::EasEmb
        )
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|s| Method::parse(s))
        .collect::<Result<_, _>>()
        .map_err(CliError::Validation)?;
    let instances = load_dataset(&args.dataset)?;
    if instances.is_empty() {
        return Err(validation("dataset is empty"));
    }
    if methods.iter().any(|m| m.stochastic()) && args.seed.is_none() {
        return Err(validation(
            "--seed is required for model-sample / active-search / eas-emb",
        ));
    }
    let needs_model = methods.iter().any(|m| m.needs_model());
    if needs_model {
        let shape = (instances[0].n_jobs(), instances[0].n_machines());
        if instances
            .iter()
            .any(|i| (i.n_jobs(), i.n_machines()) != shape)
        {
            return Err(validation(
                "model evaluation needs a dataset with one instance shape",
            ));
        }
    }
    let model = match (&args.checkpoint, needs_model) {
        (Some(path), _) => Some(checkpoint::load(path).map_err(validation)?),
        (None, true) => return Err(validation("model-based methods need --checkpoint")),
        (None, false) => None,
    };
    let config_hash = match &args.checkpoint {
        Some(path) => cfgfile::fnv1a_hex(
            &std::fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?,
        ),
        None => "-".into(),
    };

    let mut rows = Vec::new();
    for method in &methods {
        let method_rows = match (method, &model) {
            (Method::Pdr(rule), _) => pdr_rows(&instances, *rule, args.mode, method.name())?,
            (Method::Oracle, _) => oracle_rows(&instances, args.oracle_budget)?,
            (m, Some(LoadedModel::F64(model))) => model_rows(m, model, &instances, &args)?,
            (m, Some(LoadedModel::F32(model))) => model_rows(m, model, &instances, &args)?,
            _ => unreachable!("model presence validated above"),
        };
        rows.extend(method_rows);
    }

    let report = report::EvalReport::build(
        rows,
        methods.iter().map(|m| m.name()).collect(),
        instances.len(),
        args.seed,
        config_hash,
    );
    print!("{}", report.to_table());
    if let Some(out) = &args.out {
        write_file(out, &report.to_csv())?;
        println!("per-instance CSV: {}", out.display());
    }
    Ok(())
}

fn pdr_rows(
    instances: &[Instance],
    rule: Rule,
    mode: BuildMode,
    name: String,
) -> Result<Vec<report::ResultRow>, CliError> {
    instances
        .iter()
        .enumerate()
        .map(|(idx, inst)| {
            let list = run_pdr(inst, rule);
            let schedule = build_schedule(inst, &list, mode).map_err(runtime)?;
            Ok(report::ResultRow {
                instance: idx,
                method: name.clone(),
                makespan: schedule.makespan(),
                certified: None,
            })
        })
        .collect()
}

fn oracle_rows(instances: &[Instance], budget: u64) -> Result<Vec<report::ResultRow>, CliError> {
    Ok(instances
        .iter()
        .enumerate()
        .map(|(idx, inst)| {
            let result = optimal_makespan(inst, budget);
            report::ResultRow {
                instance: idx,
                method: "oracle".into(),
                makespan: result.optimal_makespan,
                certified: Some(result.certified),
            }
        })
        .collect())
}

fn model_rows<T: Scalar>(
    method: &Method,
    model: &PolicyModel<T>,
    instances: &[Instance],
    args: &EvalArgs,
) -> Result<Vec<report::ResultRow>, CliError> {
    let name = method.name();
    let seed = args.seed.unwrap_or(0);
    let search_cfg = TrainerConfig {
        batch_size: args.search_batch,
        learning_rate: args.search_lr,
        seed,
        build_mode: args.mode,
        ..TrainerConfig::default()
    };
    let mut rows = Vec::with_capacity(instances.len());
    match method {
        Method::ModelGreedy => {
            for (idx, inst) in instances.iter().enumerate() {
                let mut unused = ChaCha8Rng::seed_from_u64(0);
                let r = model
                    .rollout(inst, DecodeMode::Greedy, args.mode, &mut unused)
                    .map_err(runtime)?;
                rows.push(report::ResultRow {
                    instance: idx,
                    method: name.clone(),
                    makespan: r.makespan,
                    certified: None,
                });
            }
        }
        Method::ModelSample(k) => {
            for (idx, inst) in instances.iter().enumerate() {
                let mut best = u32::MAX;
                for sample in 0..*k {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, idx as u64));
                    rng.set_stream(sample as u64);
                    let r = model
                        .rollout(inst, DecodeMode::Sample, args.mode, &mut rng)
                        .map_err(runtime)?;
                    best = best.min(r.makespan);
                }
                rows.push(report::ResultRow {
                    instance: idx,
                    method: name.clone(),
                    makespan: best,
                    certified: None,
                });
            }
        }
        Method::ActiveSearch => {
            for (idx, inst) in instances.iter().enumerate() {
                let cfg = TrainerConfig {
                    seed: mix_seed(seed, idx as u64),
                    ..search_cfg.clone()
                };
                let result =
                    active_search(model, inst, args.search_steps, &cfg).map_err(runtime)?;
                rows.push(report::ResultRow {
                    instance: idx,
                    method: name.clone(),
                    makespan: result.best_makespan,
                    certified: None,
                });
            }
        }
        Method::EasEmb => {
            let results =
                eas_emb(model, instances, args.search_steps, &search_cfg).map_err(runtime)?;
            for (idx, result) in results.iter().enumerate() {
                rows.push(report::ResultRow {
                    instance: idx,
                    method: name.clone(),
                    makespan: result.best_makespan,
                    certified: None,
                });
            }
        }
        _ => unreachable!("non-model methods handled by the caller"),
    }
    Ok(rows)
}

fn cmd_gantt(args: GanttArgs) -> Result<(), CliError> {
    let inst = jio::read_instance(&read_to_string(&args.instance)?).map_err(validation)?;
    let sources = [
        args.rule.is_some(),
        args.checkpoint.is_some(),
        args.list.is_some(),
    ];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err(validation(
            "provide exactly one of --rule, --checkpoint, --list",
        ));
    }

    let list: DispatchList = if let Some(rule) = &args.rule {
        let rule = Rule::from_str(rule).map_err(validation)?;
        run_pdr(&inst, rule)
    } else if let Some(path) = &args.list {
        let text = read_to_string(path)?;
        let perm: Vec<usize> = text
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| format!("bad index `{t}`")))
            .collect::<Result<_, _>>()
            .map_err(CliError::Validation)?;
        DispatchList::new(perm).map_err(validation)?
    } else {
        let path = args.checkpoint.as_ref().unwrap();
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        match checkpoint::load(path).map_err(validation)? {
            LoadedModel::F64(m) => {
                m.rollout(&inst, DecodeMode::Greedy, args.mode, &mut unused)
                    .map_err(runtime)?
                    .list
            }
            LoadedModel::F32(m) => {
                m.rollout(&inst, DecodeMode::Greedy, args.mode, &mut unused)
                    .map_err(runtime)?
                    .list
            }
        }
    };

    check_feasible(&inst, &list).map_err(validation)?;
    let schedule = build_schedule(&inst, &list, args.mode).map_err(runtime)?;
    let chart = gantt::GanttChart::from_schedule(&schedule);
    write_file(&args.out, &gantt::to_svg(&chart))?;
    if let Some(csv) = &args.schedule_csv {
        write_file(csv, &schedule.to_csv())?;
    }
    print!("{}", gantt::to_text(&chart, 100));
    println!("makespan: {}", schedule.makespan());
    println!("chart: {}", args.out.display());
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<(), CliError> {
    let instances = load_dataset(&args.dataset)?;
    if instances.is_empty() {
        return Err(validation("dataset is empty"));
    }
    let mut csv = String::from("instance,optimal_makespan,certified,explored\n");
    let mut sum = 0u64;
    let mut certified = 0usize;
    for (idx, inst) in instances.iter().enumerate() {
        let result = optimal_makespan(inst, args.budget);
        csv.push_str(&format!(
            "{idx},{},{},{}\n",
            result.optimal_makespan, result.certified, result.explored
        ));
        sum += result.optimal_makespan as u64;
        certified += result.certified as usize;
    }
    println!(
        "mean optimal makespan {:.2} over {} instances ({} certified)",
        sum as f64 / instances.len() as f64,
        instances.len(),
        certified
    );
    if let Some(out) = &args.out {
        write_file(out, &csv)?;
        println!("per-instance CSV: {}", out.display());
    }
    Ok(())
}

fn cmd_pdr(args: PdrArgs) -> Result<(), CliError> {
    let rule = Rule::from_str(&args.rule).map_err(validation)?;
    let instances = load_dataset(&args.dataset)?;
    if instances.is_empty() {
        return Err(validation("dataset is empty"));
    }
    let mut csv = String::from("instance,makespan\n");
    let mut sum = 0u64;
    for (idx, inst) in instances.iter().enumerate() {
        let list = run_pdr(inst, rule);
        let schedule = build_schedule(inst, &list, args.mode).map_err(runtime)?;
        csv.push_str(&format!("{idx},{}\n", schedule.makespan()));
        sum += schedule.makespan() as u64;
    }
    println!(
        "{rule} mean makespan {:.2} over {} instances ({} mode)",
        sum as f64 / instances.len() as f64,
        instances.len(),
        args.mode
    );
    if let Some(out) = &args.out {
        write_file(out, &csv)?;
        println!("per-instance CSV: {}", out.display());
    }
    Ok(())
}
