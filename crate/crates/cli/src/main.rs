use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scdgn::dataio::CorpusPaths;
use scdgn::engine::Checkpoint;
use scdgn::eval::{aggregate_runs, format_table, Split};
use scdgn::graphs::{BipartiteGraph, Side};
use scdgn::model::{Ablation, DebiasInit, HyperParams, ModelData};
use scdgn::pipeline::{
    self, checkpoint_file, evaluate_checkpoint, run_pipeline, stage_cluster, stage_graphs,
    stage_prepare, stage_train, train_log_file, PathsConfig, RunConfig, BUNDLE_FILE, GRAPHS_FILE,
    SEMANTICS_FILE,
};
use scdgn::synth::{
    generate, SynthSpec, SOURCE_FILE, SOURCE_TEXT_FILE, TARGET_FILE, TARGET_TEXT_FILE, TOKEN_FILE,
};
use scdgn::{Error, Result};

/// Cross-domain recommendation with semantic clusters and debiased graph
/// convolution.
#[derive(Parser)]
#[command(name = "scdgn", version)]
struct Cli {
    /// Cap on worker threads (defaults to one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for artifacts when a command is not given explicit paths.
    #[arg(long, global = true, env = "SCDGN_WORKDIR", default_value = "scdgn-work")]
    workdir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, filter and split the two domains into a dataset bundle.
    Prepare(PrepareArgs),
    /// Build semantic item vectors and cluster items of both domains.
    Cluster(ClusterArgs),
    /// Build or inspect the target and user-cluster graphs.
    #[command(subcommand)]
    Graphs(GraphsCommand),
    /// Train one model and write its best-validation checkpoint.
    Train(TrainArgs),
    /// Rank held-out items with one or more checkpoints.
    Evaluate(EvaluateArgs),
    /// Run every stage from a config file.
    Run(RunArgs),
    /// Write a planted two-domain dataset and a matching config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    source_interactions: PathBuf,
    #[arg(long)]
    target_interactions: PathBuf,
    #[arg(long)]
    source_texts: PathBuf,
    #[arg(long)]
    target_texts: PathBuf,
    /// Output directory (defaults to the workdir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Header line with the dimension, then `token<TAB>f1 f2 ... fD`.
    #[arg(long)]
    token_table: PathBuf,
    #[arg(long, default_value_t = 200)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GraphsCommand {
    /// Build both graphs from a bundle and its clustering.
    Build {
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        semantics: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print node, edge and degree-histogram summaries.
    Stats {
        #[arg(long)]
        graphs: Option<PathBuf>,
    },
}

/// One flag per hyper-parameter. Unset flags keep the value from
/// `--config` or the built-in default.
#[derive(Args, Default)]
struct HyperArgs {
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Debiasing-vector dimension; must equal --dim.
    #[arg(long)]
    debias_dim: Option<usize>,
    /// Propagation layers on the user-cluster graph.
    #[arg(long)]
    cross_layers: Option<usize>,
    /// Propagation layers on the target user-item graph.
    #[arg(long)]
    target_layers: Option<usize>,
    /// Weight of the restriction losses.
    #[arg(long)]
    lambda_rs: Option<f64>,
    /// Weight of the dimension-reduction loss.
    #[arg(long)]
    lambda_dr: Option<f64>,
    /// Weight of the L2 regulariser.
    #[arg(long)]
    lambda_reg: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Number of semantic clusters.
    #[arg(long)]
    k: Option<usize>,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_ablation)]
    ablation: Option<Ablation>,
    /// Count the layer-0 user embedding once.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dedup_layer0: Option<bool>,
    /// Use the full user representation in the restriction losses.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    restrict_full_user: Option<bool>,
    /// normal or ones.
    #[arg(long, value_parser = parse_debias_init)]
    debias_init: Option<DebiasInit>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Epochs without validation gain before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Sampled negatives per validation task.
    #[arg(long)]
    eval_negatives: Option<usize>,
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    Ablation::parse(s).map_err(|e| e.to_string())
}

fn parse_debias_init(s: &str) -> std::result::Result<DebiasInit, String> {
    match s {
        "normal" => Ok(DebiasInit::Normal),
        "ones" => Ok(DebiasInit::Ones),
        _ => Err(format!("unknown init `{s}` (expected normal or ones)")),
    }
}

impl HyperArgs {
    fn apply(&self, hp: &mut HyperParams) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    hp.$f = v;
                }
            )*};
        }
        set!(
            dim,
            debias_dim,
            cross_layers,
            target_layers,
            lambda_rs,
            lambda_dr,
            lambda_reg,
            learning_rate,
            batch_size,
            k,
            seed,
            ablation,
            dedup_layer0,
            restrict_full_user,
            debias_init,
            max_epochs,
            patience,
            eval_negatives
        );
        // --dim alone moves the debiasing dimension with it
        if self.dim.is_some() && self.debias_dim.is_none() {
            hp.debias_dim = hp.dim;
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    semantics: Option<PathBuf>,
    #[arg(long)]
    graphs: Option<PathBuf>,
    /// Take hyper-parameters from the [model] section of a run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    hp: HyperArgs,
    /// Output directory for the checkpoint and epoch log.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint files; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    checkpoint: Vec<PathBuf>,
    /// Training seeds whose checkpoints sit in the workdir.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    semantics: Option<PathBuf>,
    #[arg(long)]
    graphs: Option<PathBuf>,
    /// valid or test.
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    k: Vec<usize>,
    /// Row label in the table.
    #[arg(long, default_value = "scdgn")]
    label: String,
    /// Directory for report.json and report.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    Split::parse(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Reuse artifacts already in the workdir.
    #[arg(long)]
    resume: bool,
    #[command(flatten)]
    hp: HyperArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 100)]
    items: usize,
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    /// 0 gives identical preferences in both domains.
    #[arg(long, default_value_t = 0.3)]
    bias: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    text_dim: usize,
}

fn or_workdir(path: &Option<PathBuf>, workdir: &Path, name: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| workdir.join(name))
}

fn model_data(
    bundle: &Option<PathBuf>,
    semantics: &Option<PathBuf>,
    graphs: &Option<PathBuf>,
    workdir: &Path,
) -> Result<(scdgn::dataio::DatasetBundle, ModelData)> {
    let mut b = pipeline::load_bundle(&or_workdir(bundle, workdir, BUNDLE_FILE))?;
    let sem = pipeline::load_semantics(&or_workdir(semantics, workdir, SEMANTICS_FILE))?;
    let g = pipeline::load_graphs(&or_workdir(graphs, workdir, GRAPHS_FILE))?;
    b.assign_clusters(&sem.clusters.assignment)?;
    let data = ModelData::new(&b, &sem, g)?;
    Ok((b, data))
}

fn print_graph(name: &str, g: &BipartiteGraph) {
    println!(
        "{name}: {} left, {} right, {} edges",
        g.left_count(),
        g.right_count(),
        g.edge_count()
    );
    for (side, label) in [(Side::Left, "left"), (Side::Right, "right")] {
        let cells: Vec<String> = g
            .degree_histogram(side)
            .iter()
            .map(|(d, n)| format!("{d}:{n}"))
            .collect();
        println!("  {label} degree:count  {}", cells.join(" "));
    }
}

fn run(cli: Cli) -> Result<()> {
    let workdir = &cli.workdir;
    match cli.command {
        Command::Prepare(a) => {
            let out = a.out.unwrap_or_else(|| workdir.clone());
            let corpus = CorpusPaths {
                source_interactions: a.source_interactions,
                target_interactions: a.target_interactions,
                source_texts: a.source_texts,
                target_texts: a.target_texts,
            };
            let bundle = stage_prepare(&corpus, &out)?;
            println!("{}", serde_json::to_string_pretty(&bundle.stats()).expect("plain data"));
        }
        Command::Cluster(a) => {
            let out = a.out.clone().unwrap_or_else(|| workdir.clone());
            let bundle = pipeline::load_bundle(&or_workdir(&a.bundle, workdir, BUNDLE_FILE))?;
            let sem = stage_cluster(&bundle, &a.token_table, a.k, a.seed, &out)?;
            let sizes = sem.clusters.cluster_sizes();
            println!(
                "{} items in {} clusters (sizes {}..={}), inertia {:.6}, {} iterations{}",
                sem.item_vectors.nrows(),
                sem.k(),
                sizes.iter().min().unwrap_or(&0),
                sizes.iter().max().unwrap_or(&0),
                sem.clusters.inertia,
                sem.clusters.iterations,
                if sem.clusters.converged { "" } else { " (not converged)" }
            );
            if !sem.zero_vector_items.is_empty() {
                log::warn!(
                    "{} item(s) have empty or out-of-vocabulary text and a zero vector",
                    sem.zero_vector_items.len()
                );
            }
        }
        Command::Graphs(GraphsCommand::Build {
            bundle,
            semantics,
            out,
        }) => {
            let out = out.unwrap_or_else(|| workdir.clone());
            let mut b = pipeline::load_bundle(&or_workdir(&bundle, workdir, BUNDLE_FILE))?;
            let sem = pipeline::load_semantics(&or_workdir(&semantics, workdir, SEMANTICS_FILE))?;
            b.assign_clusters(&sem.clusters.assignment)?;
            let g = stage_graphs(&b, &sem, &out)?;
            print_graph("target", &g.target);
            print_graph("cross", &g.cross);
        }
        Command::Graphs(GraphsCommand::Stats { graphs }) => {
            let g = pipeline::load_graphs(&or_workdir(&graphs, workdir, GRAPHS_FILE))?;
            print_graph("target", &g.target);
            print_graph("cross", &g.cross);
        }
        Command::Train(a) => {
            let mut hp = match &a.config {
                Some(p) => RunConfig::load(p)?.model,
                None => HyperParams::default(),
            };
            a.hp.apply(&mut hp);
            hp.validate()?;
            let out = a.out.clone().unwrap_or_else(|| workdir.clone());
            let (bundle, data) = model_data(&a.bundle, &a.semantics, &a.graphs, workdir)?;
            let ckpt = out.join(checkpoint_file(hp.seed));
            let outcome = stage_train(&bundle, &data, &hp, &ckpt, &out.join(train_log_file(hp.seed)))?;
            println!(
                "best epoch {} (valid HR@5 {:.4}, NDCG@5 {:.4}); checkpoint {}",
                outcome.checkpoint.epoch,
                outcome.checkpoint.valid_hr5,
                outcome.checkpoint.valid_ndcg5,
                ckpt.display()
            );
        }
        Command::Evaluate(a) => {
            let mut paths = a.checkpoint.clone();
            paths.extend(a.seeds.iter().map(|&s| workdir.join(checkpoint_file(s))));
            if paths.is_empty() {
                return Err(Error::config("checkpoint", "give --checkpoint or --seeds"));
            }
            let (bundle, data) = model_data(&a.bundle, &a.semantics, &a.graphs, workdir)?;
            let runs = paths
                .iter()
                .map(|p| {
                    let c = Checkpoint::load(p)?;
                    evaluate_checkpoint(&bundle, &data, &c, a.split, &a.k, c.hp.seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let report = aggregate_runs(&runs)?;
            let out = a.out.clone().unwrap_or_else(|| workdir.clone());
            pipeline::write_report(&out, &a.label, &report)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("plain data"));
            print!("{}", format_table(&[(a.label.clone(), report)]));
        }
        Command::Run(a) => {
            let mut cfg = RunConfig::load(&a.config)?;
            a.hp.apply(&mut cfg.model);
            let outcome = run_pipeline(&cfg, a.resume)?;
            let ran: Vec<&str> = outcome.ran.iter().map(|s| s.name()).collect();
            log::info!("stages run: {}", ran.join(", "));
            print!(
                "{}",
                format_table(&[(pipeline::model_label(cfg.model.ablation), outcome.report)])
            );
        }
        Command::Synth(a) => {
            let spec = SynthSpec {
                users_per_domain: a.users,
                items_per_domain: a.items,
                clusters: a.clusters,
                bias_strength: a.bias,
                seed: a.seed,
                text_dim: a.text_dim,
                ..SynthSpec::default()
            };
            let ds = generate(&spec)?;
            ds.write(&a.out)?;
            // paths relative to the config file's directory
            let cfg = RunConfig {
                paths: PathsConfig {
                    source_interactions: SOURCE_FILE.into(),
                    target_interactions: TARGET_FILE.into(),
                    source_texts: SOURCE_TEXT_FILE.into(),
                    target_texts: TARGET_TEXT_FILE.into(),
                    token_table: TOKEN_FILE.into(),
                    workdir: "work".into(),
                },
                cluster: Default::default(),
                model: HyperParams {
                    k: a.clusters,
                    // synthetic users hold at most five target items
                    eval_negatives: a.items.saturating_sub(6).clamp(1, 99),
                    ..HyperParams::default()
                },
                eval: Default::default(),
            };
            let path = a.out.join("run.toml");
            std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
            println!(
                "{} source and {} target interactions written to {}; config {}",
                ds.source.len(),
                ds.target.len(),
                a.out.display(),
                path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
