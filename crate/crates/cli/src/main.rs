//! `fakegroup`: detect coordinated fake reviewer groups from review logs.
//!
//! Every command reads one optional config file (`--config`, TOML or JSON),
//! applies flag overrides on top, and embeds the resolved config in each
//! JSON artifact it writes. CSV outputs get a `config.json` beside them.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use fakegroup::config::RunConfig;
use fakegroup::dga::{predict_fake, write_history_csv, DgaModel, Variant};
use fakegroup::graph::{ingest, make_windows, preprocess, InputFormat, TemporalBipartiteGraph, TimeUnit, WindowSpec};
use fakegroup::metrics::{
    composite_index, dynamics, extract_groups, format_table, normalize_across, write_report_csv, Components,
    DynamicsReport, Group,
};
use fakegroup::nfs::{write_scores_csv, NfsModel};
use fakegroup::pipeline::{
    evaluate_run, input_for, nfs_gap, prepare_with_model, prepare_with_profiles, run_ablation, run_variant, Prepared,
};
use fakegroup::structure::{compute_profiles, write_profiles_csv, NodeStructureProfile};
use fakegroup::synth::{generate, read_labels_csv, FraudMode, SynthConfig};
use fakegroup::Error;

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Parser, Debug)]
#[command(name = "fakegroup", version, about = "Fake reviewer group detection on temporal review graphs")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by all commands; any flag given wins over the file.
#[derive(Args, Debug, Default, Clone)]
struct Overrides {
    /// Run configuration, `.toml` or `.json`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of equal-width time windows.
    #[arg(long, global = true, conflicts_with = "window_days")]
    windows: Option<usize>,
    /// Fixed window length in days instead of a window count.
    #[arg(long, global = true)]
    window_days: Option<f64>,
    #[arg(long, global = true)]
    min_reviews: Option<usize>,
    /// Mean score at which an extracted group is flagged.
    #[arg(long, global = true)]
    min_spam: Option<f64>,
    #[arg(long, global = true)]
    max_epochs: Option<usize>,
    #[arg(long, global = true)]
    patience: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labelled synthetic review log with planted groups.
    Synth(SynthArgs),
    /// Read a review log, drop low-activity nodes and store the graph.
    Ingest(IngestArgs),
    /// Compute structure profiles and fit the NFS scorer.
    Nfs(NfsArgs),
    /// Train one model variant.
    Train(TrainArgs),
    /// Score reviewers with a trained model and extract suspicious groups.
    Score(ScoreArgs),
    /// Train and compare the full model against its ablations.
    Eval(EvalArgs),
    /// Temporal dynamics indicators and the composite index.
    Dynamics(DynamicsArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    reviewers: Option<usize>,
    #[arg(long)]
    products: Option<usize>,
    #[arg(long)]
    days: Option<f64>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    StarBurst,
    Ring,
    Mixed,
}

impl From<ModeArg> for FraudMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::StarBurst => FraudMode::StarBurst,
            ModeArg::Ring => FraudMode::Ring,
            ModeArg::Mixed => FraudMode::Mixed,
        }
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to the input extension.
    #[arg(long)]
    format: Option<String>,
    #[arg(long, value_enum, default_value = "seconds")]
    time_unit: UnitArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum UnitArg {
    Seconds,
    Days,
}

#[derive(Args, Debug)]
struct NfsArgs {
    #[arg(long)]
    graph: PathBuf,
    /// CSV `reviewer_id,label[,group_id]`.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Output directory of `nfs`.
    #[arg(long)]
    nfs: PathBuf,
    #[arg(long, default_value = "full")]
    variant: Variant,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Output directory of `nfs`.
    #[arg(long)]
    nfs: PathBuf,
    /// `model.json` written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Reuse structure profiles from an `nfs` output directory.
    #[arg(long)]
    nfs: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "full,A,B,C,D")]
    ablation: Vec<Variant>,
    /// Also report the small, medium and large product splits.
    #[arg(long)]
    by_scale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DynamicsArgs {
    /// Graph artifacts to compare; components are normalised across them.
    #[arg(long, num_args = 1..)]
    graph: Vec<PathBuf>,
    /// Already normalised components `[name:]rate,churn,turnover,burstiness`.
    #[arg(long)]
    components: Vec<String>,
    /// Write the reports as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Wrapper around every JSON artifact: what it is and how it was made.
#[derive(Serialize, Deserialize)]
struct Artifact<T> {
    kind: String,
    config: serde_json::Value,
    data: T,
}

#[derive(Serialize, Deserialize)]
struct ProfileSet {
    node_ids: Vec<String>,
    profiles: Vec<NodeStructureProfile>,
}

#[derive(Serialize, Deserialize)]
struct TrainedModel {
    variant: Variant,
    /// Probability cut chosen on the validation reviewers.
    threshold: f64,
    best_epoch: usize,
    stopped_early: bool,
    model: DgaModel,
}

#[derive(Serialize)]
struct DynamicsOutput {
    datasets: Vec<(String, DynamicsReport)>,
    components: Vec<(String, Components, f64)>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for violated numerical invariants, 2 for anything wrong with the input.
fn exit_code(e: &anyhow::Error) -> u8 {
    let core = e.chain().find_map(|c| c.downcast_ref::<Error>());
    match core {
        Some(
            Error::NotNormalized(_) | Error::Diverged { .. } | Error::UndefinedMetric(_) | Error::SingleClass,
        ) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let o = cli.overrides;
    match cli.command {
        Command::Synth(a) => cmd_synth(&o, a),
        Command::Ingest(a) => cmd_ingest(&o, a),
        Command::Nfs(a) => cmd_nfs(&o, a),
        Command::Train(a) => cmd_train(&o, a),
        Command::Score(a) => cmd_score(&o, a),
        Command::Eval(a) => cmd_eval(&o, a),
        Command::Dynamics(a) => cmd_dynamics(&o, a),
    }
}

// ---------------------------------------------------------------------------
// Config and file plumbing

fn require(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        bail!("missing input: {}", path.display());
    }
    Ok(())
}

fn parse_config(path: &Path) -> anyhow::Result<RunConfig> {
    require(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let cfg: RunConfig = if is_toml {
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
    };
    Ok(cfg)
}

/// Config file (or `base`, or defaults) with flags applied, then resolved.
fn load_config(o: &Overrides, base: Option<RunConfig>) -> anyhow::Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => parse_config(p).with_context(|| format!("config {}", p.display()))?,
        None => base.unwrap_or_default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(w) = o.windows {
        cfg.windows = WindowSpec::Count(w);
    }
    if let Some(d) = o.window_days {
        cfg.windows = WindowSpec::Duration((d * SECONDS_PER_DAY).round() as i64);
    }
    if let Some(m) = o.min_reviews {
        cfg.min_reviews = m;
    }
    if let Some(m) = o.min_spam {
        cfg.min_spam = m;
    }
    if let Some(m) = o.max_epochs {
        cfg.dga.max_epochs = m;
    }
    if let Some(p) = o.patience {
        cfg.dga.patience = p;
    }
    Ok(cfg.resolved()?)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn writer(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_artifact<T: Serialize>(path: &Path, kind: &str, cfg: &RunConfig, data: &T) -> anyhow::Result<()> {
    let art = Artifact {
        kind: kind.to_string(),
        config: serde_json::to_value(cfg)?,
        data,
    };
    write_json(path, &art)
}

fn read_artifact<T: DeserializeOwned>(path: &Path, kind: &str) -> anyhow::Result<(RunConfig, T)> {
    require(path)?;
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let art: Artifact<T> = serde_json::from_reader(BufReader::new(f))
        .map_err(|e| Error::InvalidArgument(format!("{}: not a {kind} artifact ({e})", path.display())))?;
    if art.kind != kind {
        return Err(Error::InvalidArgument(format!("{}: expected a {kind} artifact, found {}", path.display(), art.kind)).into());
    }
    let cfg: RunConfig = serde_json::from_value(art.config).map_err(|e| Error::Config(e.to_string()))?;
    Ok((cfg, art.data))
}

fn write_config_echo(dir: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    write_json(&dir.join("config.json"), cfg)
}

fn read_graph(path: &Path) -> anyhow::Result<TemporalBipartiteGraph> {
    let (_, g): (RunConfig, TemporalBipartiteGraph) = read_artifact(path, "graph")?;
    g.check_invariants()?;
    Ok(g)
}

/// Labels aligned with the graph's reviewers; every reviewer must have one.
fn read_labels(path: &Path, g: &TemporalBipartiteGraph) -> anyhow::Result<Vec<u8>> {
    require(path)?;
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (map, _) = read_labels_csv(f).with_context(|| format!("labels {}", path.display()))?;
    let mut missing = 0usize;
    let labels: Vec<u8> = g
        .reviewer_ids()
        .iter()
        .map(|id| {
            map.get(id).copied().unwrap_or_else(|| {
                missing += 1;
                0
            })
        })
        .collect();
    if missing > 0 {
        return Err(Error::InvalidArgument(format!("{missing} reviewers have no label in {}", path.display())).into());
    }
    Ok(labels)
}

fn node_ids(g: &TemporalBipartiteGraph) -> Vec<String> {
    (0..g.num_nodes()).map(|v| g.node_name(v).to_string()).collect()
}

/// Stored profiles when they were computed on this very graph, else fresh ones.
fn profiles_for(g: &TemporalBipartiteGraph, nfs_dir: Option<&Path>, cfg: &RunConfig) -> anyhow::Result<Vec<NodeStructureProfile>> {
    if let Some(dir) = nfs_dir {
        let (_, set): (RunConfig, ProfileSet) = read_artifact(&dir.join("profiles.json"), "profiles")?;
        if set.node_ids == node_ids(g) {
            return Ok(set.profiles);
        }
        warn!("profiles in {} belong to another graph; recomputing", dir.display());
    }
    let t = Instant::now();
    let p = compute_profiles(g, &cfg.structure)?;
    info!("structure profiles for {} nodes in {:.1?}", g.num_nodes(), t.elapsed());
    Ok(p)
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_synth(o: &Overrides, a: SynthArgs) -> anyhow::Result<()> {
    let cfg = load_config(o, None)?;
    let d = SynthConfig::default();
    let synth = SynthConfig {
        n_reviewers: a.reviewers.unwrap_or(d.n_reviewers),
        n_products: a.products.unwrap_or(d.n_products),
        days: a.days.unwrap_or(d.days),
        n_groups: a.groups.unwrap_or(d.n_groups),
        group_size: a.group_size.unwrap_or(d.group_size),
        mode: a.mode.map_or(d.mode, FraudMode::from),
        seed: cfg.seed,
        ..d
    };
    let ds = generate(&synth)?;
    create_dir(&a.out)?;
    ds.write_jsonl(writer(&a.out.join("events.jsonl"))?)?;
    ds.write_labels_csv(writer(&a.out.join("labels.csv"))?)?;
    ds.write_split_csv(writer(&a.out.join("split.csv"))?)?;
    let echo = serde_json::json!({ "synth": synth, "run": cfg });
    write_json(&a.out.join("config.json"), &echo)?;
    let fakes = ds.labels.values().filter(|&&l| l == 1).count();
    println!(
        "{} reviewers ({} fake in {} groups), {} products, {} reviews → {}",
        ds.graph.num_reviewers(),
        fakes,
        synth.n_groups,
        ds.graph.num_products(),
        ds.graph.reviews().len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_ingest(o: &Overrides, a: IngestArgs) -> anyhow::Result<()> {
    let cfg = load_config(o, None)?;
    require(&a.input)?;
    let format: InputFormat = match &a.format {
        Some(f) => f.parse()?,
        None => a
            .input
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("jsonl")
            .parse()?,
    };
    let unit = match a.time_unit {
        UnitArg::Seconds => TimeUnit::Seconds,
        UnitArg::Days => TimeUnit::Days,
    };
    let f = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let (raw, report) = ingest(f, format, unit).with_context(|| format!("ingesting {}", a.input.display()))?;
    let g = preprocess(&raw, cfg.min_reviews)?;
    println!(
        "{} records read, {} malformed, {} duplicates",
        report.records, report.skipped, report.duplicates
    );
    println!("{:<10} {:>10} {:>10}", "", "before", "after");
    println!("{:<10} {:>10} {:>10}", "reviewers", raw.num_reviewers(), g.num_reviewers());
    println!("{:<10} {:>10} {:>10}", "products", raw.num_products(), g.num_products());
    println!("{:<10} {:>10} {:>10}", "reviews", raw.reviews().len(), g.reviews().len());
    write_artifact(&a.out, "graph", &cfg, &g)?;
    Ok(())
}

fn cmd_nfs(o: &Overrides, a: NfsArgs) -> anyhow::Result<()> {
    let cfg = load_config(o, None)?;
    let g = read_graph(&a.graph)?;
    let labels = read_labels(&a.labels, &g)?;
    let profiles = profiles_for(&g, None, &cfg)?;
    let ids = node_ids(&g);
    create_dir(&a.out)?;
    write_profiles_csv(&g, &profiles, writer(&a.out.join("profiles.csv"))?)?;
    let set = ProfileSet {
        node_ids: ids.clone(),
        profiles,
    };
    write_artifact(&a.out.join("profiles.json"), "profiles", &cfg, &set)?;
    let prep = prepare_with_profiles(g, labels, set.profiles, &cfg)?;
    write_artifact(&a.out.join("nfs_model.json"), "nfs_model", &cfg, &prep.nfs)?;
    write_scores_csv(&ids, &prep.nfs_scores, writer(&a.out.join("nfs_scores.csv"))?)?;
    write_config_echo(&a.out, &cfg)?;
    println!(
        "t* = {:.4} (validation J = {:.4}); fake-minus-real mean score {:.4}",
        prep.nfs.threshold,
        prep.nfs.validation_j,
        nfs_gap(&prep)
    );
    Ok(())
}

fn load_prepared(graph: &Path, nfs_dir: &Path, cfg: &RunConfig) -> anyhow::Result<Prepared> {
    let g = read_graph(graph)?;
    let (_, nfs): (RunConfig, NfsModel) = read_artifact(&nfs_dir.join("nfs_model.json"), "nfs_model")?;
    let profiles = profiles_for(&g, Some(nfs_dir), cfg)?;
    Ok(prepare_with_model(g, profiles, nfs, cfg)?)
}

fn cmd_train(o: &Overrides, a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(o, None)?;
    cfg.dga.variant = a.variant;
    let prep = load_prepared(&a.graph, &a.nfs, &cfg)?;
    let labels = read_labels(&a.labels, &prep.graph)?;
    let prep = prep.with_labels(labels, &cfg)?;
    let t = Instant::now();
    let run = run_variant(&prep, a.variant, &cfg)?;
    let rows = evaluate_run(&prep, &run)?;
    create_dir(&a.out)?;
    let trained = TrainedModel {
        variant: a.variant,
        threshold: run.threshold,
        best_epoch: run.outcome.best_epoch,
        stopped_early: run.outcome.stopped_early,
        model: run.outcome.model.clone(),
    };
    write_artifact(&a.out.join("model.json"), "model", &cfg, &trained)?;
    write_history_csv(&run.outcome.history, writer(&a.out.join("history.csv"))?)?;
    run.pooled
        .write_csvs(writer(&a.out.join("pooled_nodes.csv"))?, writer(&a.out.join("pooled_edges.csv"))?)?;
    let mut w = writer(&a.out.join("scores.csv"))?;
    writeln!(w, "reviewer_id,probability,predicted,label,split")?;
    let part = split_names(&prep);
    for (r, id) in prep.graph.reviewer_ids().iter().enumerate() {
        let p = run.probs[r];
        writeln!(w, "{id},{p},{},{},{}", u8::from(p >= run.threshold), prep.labels[r], part[r])?;
    }
    w.flush()?;
    write_config_echo(&a.out, &cfg)?;
    println!(
        "{}: {} epochs in {:.1?}, best epoch {}, {} supernodes, threshold {:.4}",
        a.variant,
        run.outcome.history.len(),
        t.elapsed(),
        run.outcome.best_epoch,
        run.pooled.num_supernodes(),
        run.threshold
    );
    print!("{}", format_table(&rows));
    Ok(())
}

fn split_names(prep: &Prepared) -> Vec<&'static str> {
    let mut out = vec![""; prep.graph.num_reviewers()];
    for (rows, name) in [(&prep.split.train, "train"), (&prep.split.val, "val"), (&prep.split.test, "test")] {
        for &r in rows {
            out[r] = name;
        }
    }
    out
}

fn cmd_score(o: &Overrides, a: ScoreArgs) -> anyhow::Result<()> {
    let (trained_cfg, trained): (RunConfig, TrainedModel) = read_artifact(&a.model, "model")?;
    let cfg = load_config(o, Some(trained_cfg))?;
    let prep = load_prepared(&a.graph, &a.nfs, &cfg)?;
    let (input, _) = input_for(&prep, trained.variant, &cfg)?;
    let probs = predict_fake(&trained.model, &input)?;
    let suspicious: Vec<bool> = probs.iter().map(|&p| p >= trained.threshold).collect();
    let groups = extract_groups(&prep.graph, &suspicious, &probs, cfg.min_spam);
    create_dir(&a.out)?;
    let mut w = writer(&a.out.join("reviewer_scores.csv"))?;
    writeln!(w, "reviewer_id,probability,nfs_score,suspicious")?;
    for (r, id) in prep.graph.reviewer_ids().iter().enumerate() {
        writeln!(w, "{id},{},{},{}", probs[r], prep.nfs_scores.normalized[r], u8::from(suspicious[r]))?;
    }
    w.flush()?;
    write_groups_csv(&a.out.join("groups.csv"), &prep.graph, &groups)?;
    write_artifact(&a.out.join("groups.json"), "groups", &cfg, &groups)?;
    write_config_echo(&a.out, &cfg)?;
    let flagged = groups.iter().filter(|g| g.flagged).count();
    println!(
        "{} of {} reviewers suspicious; {} groups, {} flagged at mean score ≥ {}",
        suspicious.iter().filter(|&&s| s).count(),
        suspicious.len(),
        groups.len(),
        flagged,
        cfg.min_spam
    );
    Ok(())
}

fn write_groups_csv(path: &Path, g: &TemporalBipartiteGraph, groups: &[Group]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "group,reviewer_id,mean_score,flagged")?;
    for (k, grp) in groups.iter().enumerate() {
        for &m in &grp.members {
            writeln!(w, "{k},{},{},{}", g.node_name(m), grp.mean_score, u8::from(grp.flagged))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_eval(o: &Overrides, a: EvalArgs) -> anyhow::Result<()> {
    let cfg = load_config(o, None)?;
    if a.ablation.is_empty() {
        return Err(Error::InvalidArgument("--ablation lists no variants".into()).into());
    }
    let g = read_graph(&a.graph)?;
    let labels = read_labels(&a.labels, &g)?;
    let profiles = profiles_for(&g, a.nfs.as_deref(), &cfg)?;
    let prep = prepare_with_profiles(g, labels, profiles, &cfg)?;
    let t = Instant::now();
    let (_, mut rows) = run_ablation(&prep, &a.ablation, &cfg)?;
    if !a.by_scale {
        rows.retain(|r| r.split == "all");
    }
    create_dir(&a.out)?;
    write_report_csv(&rows, writer(&a.out.join("report.csv"))?)?;
    let table = format_table(&rows);
    fs::write(a.out.join("report.txt"), &table).with_context(|| format!("writing {}", a.out.display()))?;
    write_config_echo(&a.out, &cfg)?;
    println!("NFS fake-minus-real mean score {:.4}; trained in {:.1?}", nfs_gap(&prep), t.elapsed());
    print!("{table}");
    Ok(())
}

fn parse_components(spec: &str, index: usize) -> anyhow::Result<(String, Components)> {
    let (name, values) = match spec.split_once(':') {
        Some((n, v)) => (n.to_string(), v),
        None => (format!("components{index}"), spec),
    };
    let v: Vec<f64> = values
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow!(Error::InvalidArgument(format!("components '{spec}': {e}"))))?;
    if v.len() != 4 || v.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidArgument(format!("components '{spec}' need four values in [0,1]")).into());
    }
    Ok((
        name,
        Components {
            arrival_rate: v[0],
            churn: v[1],
            turnover: v[2],
            burstiness: v[3],
        },
    ))
}

fn cmd_dynamics(o: &Overrides, a: DynamicsArgs) -> anyhow::Result<()> {
    let cfg = load_config(o, None)?;
    if a.graph.is_empty() && a.components.is_empty() {
        return Err(Error::InvalidArgument("give --graph or --components".into()).into());
    }
    let mut names = Vec::new();
    let mut reports = Vec::new();
    for path in &a.graph {
        let g = read_graph(path)?;
        let w = make_windows(&g, cfg.windows)?;
        reports.push(dynamics(&g, &w)?);
        names.push(path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()));
    }
    normalize_across(&mut reports);
    for (name, r) in names.iter().zip(&reports) {
        let c = r.averaged;
        println!(
            "{name}: rate {:.4}/day, churn {:.4}, turnover {:.4}, burstiness {:.4}",
            c.arrival_rate, c.churn, c.turnover, c.burstiness
        );
        let n = r.normalized;
        let note = if r.cross_normalized { "" } else { " (single dataset, normalised values fixed at 0.5)" };
        println!(
            "{name}: normalised ({:.4}, {:.4}, {:.4}, {:.4}) D = {:.4}{note}",
            n.arrival_rate, n.churn, n.turnover, n.burstiness, r.composite
        );
    }
    let mut comps = Vec::new();
    for (i, spec) in a.components.iter().enumerate() {
        let (name, c) = parse_components(spec, i)?;
        let d = composite_index(c.as_array());
        println!("{name}: D = {d:.4} ≈ {d:.2}");
        comps.push((name, c, d));
    }
    if let Some(out) = &a.out {
        let data = DynamicsOutput {
            datasets: names.into_iter().zip(reports).collect(),
            components: comps,
        };
        write_artifact(out, "dynamics", &cfg, &data)?;
    }
    Ok(())
}
