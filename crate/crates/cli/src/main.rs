mod manifest;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use linksched::baselines::{label_dataset, OracleKind};
use linksched::embednn::{load_checkpoint, save_checkpoint, AdamConfig, Architecture};
use linksched::graph::{build_graph, QuantizerSpec, Topology};
use linksched::netgen::{generate_layouts, load_dataset, save_dataset, ChannelConfig, DatasetEntry, LayoutConfig};
use linksched::trainer::report::{write_history, write_layout_results, write_sweep};
use linksched::trainer::{
    baseline_rows, evaluate_samples, prepare_samples, sweep, table_experiments, train, train_unsupervised_tuned,
    ReproOptions, ReproTable, Scheduler, SweepRow, TrainConfig, TrainMode,
};
use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "linksched", version, about = "Learned link scheduling for D2D networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random layouts.
    Gen(GenArgs),
    /// Attach oracle schedules to a dataset.
    Label(LabelArgs),
    /// Train a scheduling model.
    Train(TrainArgs),
    /// Evaluate a model or baseline against an oracle.
    Eval(EvalArgs),
    /// Run one of the reproduction sweeps.
    Repro(ReproArgs),
    /// Dump the interference graph of one layout as an edge list.
    Graph(GraphArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 500)]
    num_layouts: usize,
    #[arg(long, default_value_t = 50)]
    pairs: usize,
    /// Side of the square deployment area in meters.
    #[arg(long, default_value_t = 500.0)]
    area: f64,
    #[arg(long, default_value_t = 2.0)]
    dmin: f64,
    #[arg(long, default_value_t = 65.0)]
    dmax: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shadowing deviation in dB stored with every layout.
    #[arg(long, default_value_t = 0.0)]
    shadowing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// brute | greedy | strongest:F | random:P | all
    #[arg(long, default_value = "greedy")]
    oracle: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// sup | unsup
    #[arg(long, default_value = "sup")]
    mode: String,
    #[arg(long = "T", default_value_t = 2)]
    iterations: usize,
    #[arg(long, default_value_t = 32)]
    p: usize,
    #[arg(long, default_value_t = 3)]
    q: u32,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    /// full | knn:K
    #[arg(long, default_value = "full")]
    topology: String,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Activation penalty for unsupervised training.
    #[arg(long, default_value_t = 0.0)]
    omega: f64,
    /// Retry unsupervised training with larger penalties if it collapses.
    #[arg(long)]
    tune_omega: bool,
    /// Validation normalizer; defaults to brute force for L <= 12, greedy above.
    #[arg(long)]
    normalizer: Option<String>,
    #[arg(long)]
    out_model: PathBuf,
    /// Per-epoch table; defaults to `<out-model>.history.tsv`.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    /// Reference scheduler; defaults to brute force for L <= 12, greedy above.
    #[arg(long)]
    oracle: Option<String>,
    /// `learned` (needs --model) or a baseline such as `greedy` or `random:0.5`.
    #[arg(long, default_value = "learned")]
    scheduler: String,
    /// Build graphs with these bits instead of the checkpoint's.
    #[arg(long)]
    q: Option<u32>,
    /// Build graphs with this topology instead of the checkpoint's.
    #[arg(long)]
    topology: Option<String>,
    /// Per-layout table.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ReproArgs {
    /// T | q | K | L | dist | shadow | algos
    #[arg(long)]
    table: String,
    /// Include the L = 500 row.
    #[arg(long)]
    big: bool,
    #[arg(long, default_value_t = 50)]
    pairs: usize,
    #[arg(long, default_value_t = 500)]
    train_count: usize,
    #[arg(long, default_value_t = 1000)]
    test_count: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "repro")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Which layout of the dataset.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, default_value_t = 3)]
    q: u32,
    #[arg(long, default_value = "full")]
    topology: String,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.chain().find_map(|c| c.downcast_ref::<linksched::Error>()).map_or(1, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("LINKSCHED_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| linksched::Error::Config(format!("LINKSCHED_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Label(a) => cmd_label(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Repro(a) => cmd_repro(a),
        Command::Graph(a) => cmd_graph(a),
    }
}

fn load(path: &Path) -> Result<Vec<DatasetEntry>> {
    load_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn save(path: &Path, entries: &[DatasetEntry]) -> Result<()> {
    save_dataset(path, entries).with_context(|| format!("writing dataset {}", path.display()))
}

/// Oracle from a flag, or the size-based default for the dataset.
fn pick_oracle(flag: Option<&str>, entries: &[DatasetEntry]) -> Result<OracleKind> {
    match flag {
        Some(s) => Ok(s.parse()?),
        None => Ok(OracleKind::default_for(entries.first().map_or(0, |e| e.layout.num_pairs()))),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = LayoutConfig { num_pairs: a.pairs, area: a.area, d_min: a.dmin, d_max: a.dmax, seed: a.seed };
    if !(a.shadowing >= 0.0) {
        return Err(linksched::Error::Config(format!("shadowing must be non-negative, got {}", a.shadowing)).into());
    }
    let entries: Vec<_> = generate_layouts(&cfg, a.num_layouts)?
        .into_iter()
        .map(|l| DatasetEntry::unlabeled(l, a.shadowing))
        .collect();
    save(&a.out, &entries)?;
    let mut m = RunManifest::new("gen");
    m.config = json!({ "layout": cfg, "num_layouts": a.num_layouts, "shadowing_std": a.shadowing });
    m.seeds = json!({ "base": a.seed });
    m.output(&a.out)?;
    m.timings = json!({ "total_secs": start.elapsed().as_secs_f64() });
    m.save(&a.out)?;
    println!("wrote {} layouts to {}", entries.len(), a.out.display());
    Ok(())
}

fn cmd_label(a: LabelArgs) -> Result<()> {
    let start = Instant::now();
    let oracle: OracleKind = a.oracle.parse()?;
    let entries = load(&a.input)?;
    let ch = ChannelConfig::default();
    let labeled = label_dataset(&entries, &ch, oracle)?;
    save(&a.out, &labeled)?;
    let mut m = RunManifest::new("label");
    m.config = json!({ "oracle": oracle, "channel": ch });
    m.input(&a.input)?;
    m.output(&a.out)?;
    m.timings = json!({ "total_secs": start.elapsed().as_secs_f64() });
    m.save(&a.out)?;
    println!("labeled {} layouts with {oracle}", labeled.len());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let start = Instant::now();
    let entries = load(&a.input)?;
    let arch = Architecture {
        embed_dim: a.p,
        iterations: a.iterations,
        bits: a.q,
        hidden: a.hidden,
        topology: a.topology.parse()?,
    };
    let mode: TrainMode = a.mode.parse()?;
    let cfg = TrainConfig {
        mode,
        epochs_max: a.epochs,
        batch_size: a.batch_size,
        adam: AdamConfig { lr: a.lr, ..Default::default() },
        patience: a.patience,
        val_fraction: a.val_fraction,
        omega: a.omega,
        seed: a.seed,
        arch,
        normalizer: pick_oracle(a.normalizer.as_deref(), &entries)?,
        channel: ChannelConfig::default(),
    };
    cfg.validate()?;
    let samples = prepare_samples(&entries, &cfg.arch, &cfg.channel, cfg.normalizer)?;
    let prep_secs = start.elapsed().as_secs_f64();
    let outcome = if mode == TrainMode::Unsupervised && a.tune_omega {
        train_unsupervised_tuned(&samples, &cfg)?
    } else {
        train(&samples, &cfg)?
    };
    let final_cfg = TrainConfig { omega: outcome.omega, ..cfg };
    save_checkpoint(&a.out_model, &outcome.model, &final_cfg.hash())
        .with_context(|| format!("writing checkpoint {}", a.out_model.display()))?;
    let history = a.history.unwrap_or_else(|| with_suffix(&a.out_model, ".history.tsv"));
    write_history(BufWriter::new(File::create(&history)?), &outcome.history)?;

    let mut m = RunManifest::new("train");
    m.config = json!({ "train": final_cfg, "config_hash": final_cfg.hash(), "tune_omega": a.tune_omega });
    m.seeds = json!({ "train": final_cfg.seed });
    m.input(&a.input)?;
    m.output(&a.out_model)?;
    m.output(&history)?;
    m.timings = json!({ "prepare_secs": prep_secs, "total_secs": start.elapsed().as_secs_f64() });
    m.save(&a.out_model)?;
    println!(
        "best epoch {} of {}: val ratio {:.4} (omega {})",
        outcome.best_epoch,
        outcome.history.len(),
        outcome.best_val_ratio,
        outcome.omega
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let start = Instant::now();
    let entries = load(&a.test)?;
    let oracle = pick_oracle(a.oracle.as_deref(), &entries)?;
    let ch = ChannelConfig::default();
    let mut m = RunManifest::new("eval");
    m.input(&a.test)?;

    let model = match &a.model {
        Some(path) => {
            let (model, header) =
                load_checkpoint(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
            m.input(path)?;
            m.config = json!({ "checkpoint_config_hash": header.config_hash });
            Some(model)
        }
        None => None,
    };
    let scheduler = if a.scheduler == "learned" {
        match &model {
            Some(model) => Scheduler::Model(model),
            None => bail!(linksched::Error::Config("--scheduler learned needs --model".into())),
        }
    } else {
        Scheduler::Baseline(a.scheduler.parse()?)
    };
    // Graphs follow the checkpoint unless overridden; a mismatch is caught
    // by the compatibility check during evaluation.
    let mut arch = model.as_ref().map(|m| m.arch).unwrap_or_default();
    if let Some(q) = a.q {
        arch.bits = q;
    }
    if let Some(t) = &a.topology {
        arch.topology = t.parse::<Topology>()?;
    }
    let samples = prepare_samples(&entries, &arch, &ch, oracle)?;
    let report = evaluate_samples(scheduler, &samples, oracle)?;
    write_layout_results(BufWriter::new(File::create(&a.report)?), &report)?;

    m.config["scheduler"] = json!(report.scheduler);
    m.config["oracle"] = json!(oracle);
    m.config["graph"] = json!({ "bits": arch.bits, "topology": arch.topology });
    m.config["summary"] = json!({
        "classifier_accuracy": report.classifier_accuracy,
        "avg_sum_rate_ratio": report.avg_sum_rate_ratio,
        "avg_active_fraction": report.avg_active_fraction,
        "num_layouts": report.num_layouts,
    });
    m.output(&a.report)?;
    m.timings = json!({ "mean_schedule_secs": report.mean_schedule_secs, "total_secs": start.elapsed().as_secs_f64() });
    m.save(&a.report)?;
    println!("{}", report.summary());
    Ok(())
}

fn cmd_repro(a: ReproArgs) -> Result<()> {
    let start = Instant::now();
    let table: ReproTable = a.table.parse()?;
    let opts = ReproOptions {
        pairs: a.pairs,
        train_count: a.train_count,
        test_count: a.test_count,
        seed: a.seed,
        big: a.big,
        base: TrainConfig { epochs_max: a.epochs, ..Default::default() },
    };
    let experiments = table_experiments(table, &opts);
    let cell_dir = a.out_dir.join(table.to_string());
    fs::create_dir_all(&cell_dir).with_context(|| format!("creating {}", cell_dir.display()))?;

    let mut m = RunManifest::new("repro");
    m.config = json!({ "table": table.to_string(), "options": opts, "experiments": experiments });
    m.seeds = json!({ "base": a.seed });

    let mut rows: Vec<SweepRow> = Vec::new();
    for (row, res) in sweep(&experiments) {
        match &res {
            Ok(r) => {
                let stem = cell_dir.join(file_stem(&row.name));
                let hist = with_suffix(&stem, ".history.tsv");
                write_history(BufWriter::new(File::create(&hist)?), &r.outcome.history)?;
                let layouts = with_suffix(&stem, ".layouts.tsv");
                write_layout_results(BufWriter::new(File::create(&layouts)?), &r.report)?;
                m.output(&hist)?;
                m.output(&layouts)?;
                println!("{}: {}", row.name, r.report.summary());
            }
            Err(e) => eprintln!("{}: failed: {e}", row.name),
        }
        rows.push(row);
    }
    if table == ReproTable::Algorithms {
        for (row, report) in baseline_rows(&experiments[0])? {
            let layouts = with_suffix(&cell_dir.join(file_stem(&row.name)), ".layouts.tsv");
            write_layout_results(BufWriter::new(File::create(&layouts)?), &report)?;
            m.output(&layouts)?;
            println!("{}: {}", row.name, report.summary());
            rows.push(row);
        }
    }
    let out = a.out_dir.join(format!("{table}.tsv"));
    write_sweep(BufWriter::new(File::create(&out)?), &rows)?;
    m.output(&out)?;
    m.timings = json!({ "total_secs": start.elapsed().as_secs_f64() });
    m.save(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_graph(a: GraphArgs) -> Result<()> {
    let entries = load(&a.input)?;
    let Some(entry) = entries.get(a.index) else {
        bail!(linksched::Error::Input(format!("dataset has {} layouts, index {} requested", entries.len(), a.index)));
    };
    let spec = QuantizerSpec::for_layout(&entry.layout.config, a.q);
    let graph = build_graph(&entry.layout, &spec, a.topology.parse()?)?;
    graph.write_edge_list(BufWriter::new(File::create(&a.out)?))?;
    let mut m = RunManifest::new("graph");
    m.config = json!({ "index": a.index, "bits": a.q, "topology": a.topology });
    m.input(&a.input)?;
    m.output(&a.out)?;
    m.save(&a.out)?;
    println!("{} nodes, {} edges", graph.num_nodes, graph.num_edges());
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Cell names like `dist=30/unsup` as file names.
fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}
