//! `pdra` command-line front end.
//!
//! Every subcommand reads and writes the library's JSON formats. Failures
//! are reported on stderr as one JSON object; usage errors exit with 2,
//! everything else with 1.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pdra::eval::{evaluate, render_table, write_gap_csv, write_long_csv, EvalError, Method};
use pdra::instancegen::{generate_instance, generate_tiny, GenConfig, GenError, InstanceConfig, TinyConfig};
use pdra::network::{ingest_tntp, IngestOptions};
use pdra::policy::{rollout, DecodeMode, PolicyError, PolicyParams};
use pdra::solvers::{
    exact_oracle, export_milp, greedy_heuristic, random_policy_rollout, validate_solution, SolverError,
};
use pdra::training::{finetune_md, train, write_metrics_csv, TrainConfig, TrainError, TrainOutput};
use pdra::{transform, AttributeConfig, EnvError, Instance, InstanceError, NetworkError, Rng, RoadNetwork};
use rand::SeedableRng;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "pdra", version, about = "Drone routing for post-disaster road assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate random instances as JSON files.
    Generate(GenerateArgs),
    /// Split every link of a road network at an artificial node.
    Transform(TransformArgs),
    /// Read a TNTP node/link file pair into a road network.
    Ingest(IngestArgs),
    /// Solve one instance with a baseline, the exact search or a policy.
    Solve(SolveArgs),
    /// Train a policy.
    Train(TrainArgs),
    /// Expand a policy for multiple depots and keep training.
    Finetune(FinetuneArgs),
    /// Compare methods on a set of instances.
    Eval(EvalArgs),
    /// Write the mixed-integer model of an instance in LP format.
    ExportMilp(ExportArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Size of the transformed network.
    #[arg(long, default_value_t = 20)]
    nodes: usize,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed variant such as `basic` or `or-tw-md`; random route and window
    /// flags otherwise.
    #[arg(long)]
    variant: Option<AttributeConfig>,
    /// Small instances the exact search can handle.
    #[arg(long)]
    tiny: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long)]
    links: PathBuf,
    /// Seed for synthetic link values.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Straight-line link lengths instead of the file's length column.
    #[arg(long)]
    euclidean: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write the transformed network here.
    #[arg(long)]
    transformed: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long, value_parser = ["greedy", "random", "oracle", "neural"])]
    method: String,
    #[arg(long)]
    instance: PathBuf,
    /// Policy checkpoint for `neural`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training config JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Final checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Instance files or directories of them.
    #[arg(long, required = true, num_args = 1..)]
    instances: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "greedy,random")]
    methods: Vec<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Method whose value the gaps are measured against.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gap table CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Per-instance long-format CSV.
    #[arg(long)]
    long: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Defaults to the instance's own variant.
    #[arg(long)]
    variant: Option<AttributeConfig>,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let msg = json!({ "error": "usage", "message": e.kind().to_string(), "detail": e.to_string() });
            let _ = writeln!(err, "{msg}");
            return 2;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            let msg = json!({ "error": kind(&e), "message": chain[0], "causes": &chain[1..] });
            let _ = writeln!(err, "{msg}");
            1
        }
    }
}

fn kind(e: &anyhow::Error) -> &'static str {
    for c in e.chain() {
        if c.is::<NetworkError>() {
            return "network";
        }
        if c.is::<InstanceError>() || c.is::<GenError>() {
            return "instance";
        }
        if c.is::<EnvError>() {
            return "env";
        }
        if c.is::<SolverError>() {
            return "solver";
        }
        if c.is::<PolicyError>() {
            return "policy";
        }
        if c.is::<TrainError>() {
            return "training";
        }
        if c.is::<EvalError>() {
            return "eval";
        }
        if c.is::<serde_json::Error>() {
            return "parse";
        }
        if c.is::<std::io::Error>() {
            return "io";
        }
    }
    "invalid-input"
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Generate(a) => generate(a, out),
        Command::Transform(a) => {
            let net: RoadNetwork = read_json(&a.network)?;
            let tn = transform(&net);
            write_json(&a.out, &tn)?;
            let summary = json!({ "original": tn.n_original(), "artificial": tn.n_artificial(), "total": tn.len() });
            writeln!(out, "{summary}")?;
            Ok(())
        }
        Command::Ingest(a) => {
            let nodes = read_text(&a.nodes)?;
            let links = read_text(&a.links)?;
            let opts = IngestOptions {
                seed: a.seed,
                euclidean_lengths: a.euclidean,
            };
            let net = ingest_tntp(&nodes, &links, opts).context("ingesting TNTP files")?;
            write_json(&a.out, &net)?;
            let tn = transform(&net);
            if let Some(p) = &a.transformed {
                write_json(p, &tn)?;
            }
            let summary = json!({ "nodes": net.node_count(), "links": net.link_count(), "transformed": tn.len() });
            writeln!(out, "{summary}")?;
            Ok(())
        }
        Command::Solve(a) => solve(a, out),
        Command::Train(a) => {
            let cfg = train_config(&a)?;
            let res = train(&cfg)?;
            finish_training(&a, &res, out)
        }
        Command::Finetune(a) => {
            let base =
                PolicyParams::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
            let cfg = train_config(&a.train)?;
            let res = finetune_md(&base, &cfg)?;
            finish_training(&a.train, &res, out)
        }
        Command::Eval(a) => eval(a, out),
        Command::ExportMilp(a) => {
            let inst: Instance = read_json(&a.instance)?;
            let attrs = a.variant.unwrap_or(inst.attrs);
            let model = export_milp(&inst, attrs)?;
            fs::write(&a.out, model.to_lp()).with_context(|| format!("writing {}", a.out.display()))?;
            let families: Vec<String> = model.families.iter().map(|f| f.to_string()).collect();
            let summary = json!({
                "variant": attrs.name(),
                "variables": model.vars.len(),
                "binaries": model.binary_count(),
                "rows": model.rows.len(),
                "families": families,
            });
            writeln!(out, "{summary}")?;
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs, out: &mut dyn Write) -> Result<()> {
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut rng = Rng::seed_from_u64(a.seed);
    let gen = GenConfig::for_total_nodes(a.nodes, a.seed)?;
    let depots = if a.variant.is_some_and(|v| v.multi_depot) { 2 } else { 1 };
    let mut files = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let inst = if a.tiny {
            let cfg = TinyConfig {
                attrs: a.variant.unwrap_or(AttributeConfig::all()[i % 4]),
                depots,
                ..TinyConfig::default()
            };
            generate_tiny(&cfg, &mut rng)?
        } else {
            let cfg = InstanceConfig {
                attrs: a.variant,
                depots,
                ..InstanceConfig::default()
            };
            generate_instance(&gen, &cfg, &mut rng)?
        };
        let path = a.out.join(format!("instance_{i:04}.json"));
        write_json(&path, &inst)?;
        files.push(path.display().to_string());
    }
    writeln!(out, "{}", json!({ "count": files.len(), "files": files }))?;
    Ok(())
}

fn solve(a: SolveArgs, out: &mut dyn Write) -> Result<()> {
    let inst: Instance = read_json(&a.instance)?;
    let mut rng = Rng::seed_from_u64(a.seed);
    let sol = match a.method.as_str() {
        "greedy" => greedy_heuristic(&inst)?,
        "random" => random_policy_rollout(&inst, &mut rng)?,
        "oracle" => exact_oracle(&inst)?,
        _ => {
            let params = load_checkpoint(a.checkpoint.as_deref())?;
            rollout(&inst, &params, DecodeMode::Greedy, 1, &mut rng)?.remove(0).0
        }
    };
    let report = validate_solution(&inst, &sol)?;
    if let Some(p) = &a.out {
        write_json(p, &sol)?;
    }
    let result = json!({
        "method": a.method,
        "value": sol.value,
        "feasible": report.feasible,
        "solution": sol,
    });
    writeln!(out, "{result}")?;
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let mut files = Vec::new();
    for p in &a.instances {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            entries.retain(|e| e.extension().is_some_and(|x| x == "json"));
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    let instances = files
        .iter()
        .map(|f| read_json::<Instance>(f))
        .collect::<Result<Vec<_>>>()?;
    let mut methods = Vec::new();
    for m in &a.methods {
        methods.push(match m.as_str() {
            "greedy" => Method::Greedy,
            "random" => Method::Random { seed: a.seed },
            "oracle" => Method::Oracle,
            "neural" => Method::Neural {
                name: "neural".into(),
                params: load_checkpoint(a.checkpoint.as_deref())?,
            },
            other => bail!("unknown method {other:?}; expected greedy, random, oracle or neural"),
        });
    }
    let reference = a.reference.clone().unwrap_or_else(|| a.methods[0].clone());
    let ev = evaluate(&instances, &methods, &reference)?;
    if let Some(p) = &a.out {
        let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_gap_csv(&ev.records, f)?;
    }
    if let Some(p) = &a.json {
        write_json(p, &ev)?;
    }
    if let Some(p) = &a.long {
        let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_long_csv(&ev.samples, f)?;
    }
    write!(out, "{}", render_table(&ev.records))?;
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(t) = a.iterations {
        cfg.iterations = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn finish_training(a: &TrainArgs, res: &TrainOutput, out: &mut dyn Write) -> Result<()> {
    res.params
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.metrics {
        let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_metrics_csv(&res.metrics, f)?;
    }
    let last = res
        .metrics
        .iter()
        .rev()
        .take_while(|m| Some(m.epoch) == res.metrics.last().map(|l| l.epoch));
    let evals: serde_json::Map<String, serde_json::Value> =
        last.map(|m| (m.regime.clone(), json!(m.greedy_eval))).collect();
    writeln!(
        out,
        "{}",
        json!({ "checkpoint": a.out.display().to_string(), "parameters": res.params.count(), "greedy_eval": evals })
    )?;
    Ok(())
}

fn load_checkpoint(p: Option<&Path>) -> Result<PolicyParams> {
    let Some(p) = p else {
        bail!("the neural method needs --checkpoint");
    };
    PolicyParams::load(p).with_context(|| format!("loading {}", p.display()))
}

fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T> {
    let text = read_text(p)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
}

fn write_json<T: serde::Serialize>(p: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    fs::write(p, text).with_context(|| format!("writing {}", p.display()))
}
