//! Run configuration and stage orchestration shared by the CLI.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{self, kind};
use crate::dataio::{load_corpus, prepare, CorpusPaths, DatasetBundle};
use crate::engine::{train_with, Checkpoint, TrainOutcome};
use crate::error::{Error, Result};
use crate::eval::{aggregate_runs, build_tasks, format_table, rank_and_score, EvalReport, Split};
use crate::graphs::GraphSet;
use crate::model::{Ablation, HyperParams, ModelData};
use crate::semantics::{build_semantics, SemanticModel, TokenEmbeddingTable};

pub const BUNDLE_FILE: &str = "bundle.bin";
pub const CORPUS_FILE: &str = "corpus.txt";
pub const STATS_FILE: &str = "stats.json";
pub const SEMANTICS_FILE: &str = "semantics.bin";
pub const GRAPHS_FILE: &str = "graphs.bin";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

/// Salt mixed into a seed for the test-task RNG.
const TEST_STREAM: u64 = 0x7e57_7a5c;

pub fn checkpoint_file(seed: u64) -> String {
    format!("checkpoint-seed{seed}.bin")
}

pub fn train_log_file(seed: u64) -> String {
    format!("train-seed{seed}.log")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub source_interactions: PathBuf,
    pub target_interactions: PathBuf,
    pub source_texts: PathBuf,
    pub target_texts: PathBuf,
    pub token_table: PathBuf,
    pub workdir: PathBuf,
}

impl PathsConfig {
    pub fn corpus(&self) -> CorpusPaths {
        CorpusPaths {
            source_interactions: self.source_interactions.clone(),
            target_interactions: self.target_interactions.clone(),
            source_texts: self.source_texts.clone(),
            target_texts: self.target_texts.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    /// One training run per seed; intervals are taken across them.
    pub seeds: Vec<u64>,
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![1, 5, 10],
            seeds: vec![0],
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub model: HyperParams,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn parse(text: &str, label: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(label, e.to_string().trim_end().to_string()))
    }

    /// Parse a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        if let Some(base) = path.parent() {
            let p = &mut cfg.paths;
            for f in [
                &mut p.source_interactions,
                &mut p.target_interactions,
                &mut p.source_texts,
                &mut p.target_texts,
                &mut p.token_table,
                &mut p.workdir,
            ] {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    /// Input files exist, hyper-parameters are consistent, cutoffs and
    /// seeds are present.
    pub fn validate(&self) -> Result<()> {
        let p = &self.paths;
        for (field, path) in [
            ("paths.source_interactions", &p.source_interactions),
            ("paths.target_interactions", &p.target_interactions),
            ("paths.source_texts", &p.source_texts),
            ("paths.target_texts", &p.target_texts),
            ("paths.token_table", &p.token_table),
        ] {
            if !path.is_file() {
                return Err(Error::config(field, format!("{} does not exist", path.display())));
            }
        }
        self.model.validate()?;
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(Error::config("eval.ks", "need at least one positive cutoff"));
        }
        if self.eval.seeds.is_empty() {
            return Err(Error::config("eval.seeds", "need at least one seed"));
        }
        Ok(())
    }
}

pub fn load_token_table(path: &Path) -> Result<TokenEmbeddingTable> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    TokenEmbeddingTable::parse(BufReader::new(f), &path.display().to_string())
}

pub fn load_bundle(path: &Path) -> Result<DatasetBundle> {
    archive::read(path, kind::BUNDLE)
}

pub fn load_semantics(path: &Path) -> Result<SemanticModel> {
    archive::read(path, kind::SEMANTICS)
}

pub fn load_graphs(path: &Path) -> Result<GraphSet> {
    archive::read(path, kind::GRAPHS)
}

/// Ingest, filter and split; writes the bundle archive, the corpus text
/// and a JSON stats summary.
pub fn stage_prepare(corpus: &CorpusPaths, workdir: &Path) -> Result<DatasetBundle> {
    let raw = load_corpus(corpus)?;
    let prepared = prepare(&raw)?;
    ensure_dir(workdir)?;
    archive::write(&workdir.join(BUNDLE_FILE), kind::BUNDLE, &prepared.bundle)?;
    let corpus = workdir.join(CORPUS_FILE);
    std::fs::write(&corpus, prepared.bundle.corpus_text()).map_err(|e| Error::io(&corpus, e))?;
    let stats = workdir.join(STATS_FILE);
    let body = serde_json::to_string_pretty(&prepared.bundle.stats()).expect("stats are plain data");
    std::fs::write(&stats, body + "\n").map_err(|e| Error::io(&stats, e))?;
    Ok(prepared.bundle)
}

/// Semantic vectors and clustering; writes the semantics archive.
pub fn stage_cluster(
    bundle: &DatasetBundle,
    token_table: &Path,
    k: usize,
    seed: u64,
    workdir: &Path,
) -> Result<SemanticModel> {
    let table = load_token_table(token_table)?;
    let semantics = build_semantics(bundle, &table, k, seed)?;
    if !semantics.clusters.converged {
        log::warn!("k-means stopped at the iteration cap without converging");
    }
    ensure_dir(workdir)?;
    archive::write(&workdir.join(SEMANTICS_FILE), kind::SEMANTICS, &semantics)?;
    Ok(semantics)
}

pub fn stage_graphs(
    bundle: &DatasetBundle,
    semantics: &SemanticModel,
    workdir: &Path,
) -> Result<GraphSet> {
    let graphs = GraphSet::build(bundle, &semantics.clusters.assignment, semantics.k())?;
    ensure_dir(workdir)?;
    archive::write(&workdir.join(GRAPHS_FILE), kind::GRAPHS, &graphs)?;
    Ok(graphs)
}

/// Train one model, write its checkpoint and epoch log. A diverged run
/// still writes the last good checkpoint and then reports the failure.
pub fn stage_train(
    bundle: &DatasetBundle,
    data: &ModelData,
    hp: &HyperParams,
    checkpoint: &Path,
    log_path: &Path,
) -> Result<TrainOutcome> {
    let outcome = train_with(bundle, data, hp, |e, _| log::info!("{}", e.line()))?;
    if let Some(parent) = checkpoint.parent() {
        ensure_dir(parent)?;
    }
    outcome.checkpoint.save(checkpoint)?;
    let mut text: String = outcome.log.iter().map(|e| e.line() + "\n").collect();
    text.push_str(&format!(
        "best epoch {}  valid hr@5 {:.4}  ndcg@5 {:.4}\n",
        outcome.checkpoint.epoch, outcome.checkpoint.valid_hr5, outcome.checkpoint.valid_ndcg5
    ));
    std::fs::write(log_path, text).map_err(|e| Error::io(log_path, e))?;
    if let Some(e) = &outcome.diverged {
        return Err(Error::Numeric(format!(
            "{e}; last good checkpoint (epoch {}) written to {}",
            outcome.checkpoint.epoch,
            checkpoint.display()
        )));
    }
    Ok(outcome)
}

/// Evaluate one checkpoint on tasks drawn with `task_seed`.
pub fn evaluate_checkpoint(
    bundle: &DatasetBundle,
    data: &ModelData,
    checkpoint: &Checkpoint,
    split: Split,
    ks: &[usize],
    task_seed: u64,
) -> Result<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(task_seed ^ TEST_STREAM);
    let tasks = build_tasks(bundle, split, checkpoint.hp.eval_negatives, &mut rng);
    if tasks.tasks.is_empty() {
        return Err(Error::Data(format!(
            "no {split:?} task has {} eligible negatives",
            checkpoint.hp.eval_negatives
        )));
    }
    rank_and_score(&tasks, &checkpoint.params, data, &checkpoint.hp, ks)
}

/// Write the JSON report and the text table.
pub fn write_report(workdir: &Path, name: &str, report: &EvalReport) -> Result<()> {
    ensure_dir(workdir)?;
    let json = workdir.join(REPORT_JSON);
    let body = serde_json::to_string_pretty(report).expect("report is plain data");
    std::fs::write(&json, body + "\n").map_err(|e| Error::io(&json, e))?;
    let txt = workdir.join(REPORT_TXT);
    std::fs::write(&txt, format_table(&[(name.to_string(), report.clone())]))
        .map_err(|e| Error::io(&txt, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    Prepare,
    Cluster,
    Graphs,
    Train,
    Evaluate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Cluster => "cluster",
            Stage::Graphs => "graphs",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: EvalReport,
    /// Stages that actually executed (not resumed from disk).
    pub ran: Vec<Stage>,
}

/// Row label of a model variant in report tables.
pub fn model_label(ablation: Ablation) -> String {
    match ablation {
        Ablation::None => "scdgn".to_string(),
        other => format!("scdgn w/o {}", &other.name()[3..]),
    }
}

/// prepare → cluster → graphs → train (one run per seed) → evaluate.
///
/// With `resume`, stages whose artifact already exists in the work
/// directory are loaded instead of recomputed, unless the artifact was
/// built with a different cluster count or checkpoint settings. Evaluation
/// always runs.
pub fn run_pipeline(config: &RunConfig, resume: bool) -> Result<PipelineOutcome> {
    config.validate()?;
    let dir = &config.paths.workdir;
    let mut ran = Vec::new();
    let cached = |name: &str| resume && dir.join(name).is_file();

    let bundle = if cached(BUNDLE_FILE) {
        load_bundle(&dir.join(BUNDLE_FILE))
    } else {
        ran.push(Stage::Prepare);
        stage_prepare(&config.paths.corpus(), dir)
    }
    .map_err(|e| e.in_stage("prepare"))?;

    let k = config.model.k;
    let reused = if cached(SEMANTICS_FILE) {
        let sem = load_semantics(&dir.join(SEMANTICS_FILE)).map_err(|e| e.in_stage("cluster"))?;
        (sem.k() == k).then_some(sem)
    } else {
        None
    };
    let fresh_clusters = reused.is_none();
    let semantics = match reused {
        Some(sem) => sem,
        None => {
            ran.push(Stage::Cluster);
            stage_cluster(&bundle, &config.paths.token_table, k, config.cluster.seed, dir)
                .map_err(|e| e.in_stage("cluster"))?
        }
    };
    let mut bundle = bundle;
    bundle
        .assign_clusters(&semantics.clusters.assignment)
        .map_err(|e| e.in_stage("cluster"))?;

    let graphs = if cached(GRAPHS_FILE) && !fresh_clusters {
        load_graphs(&dir.join(GRAPHS_FILE))
    } else {
        ran.push(Stage::Graphs);
        stage_graphs(&bundle, &semantics, dir)
    }
    .map_err(|e| e.in_stage("graphs"))?;
    let data = ModelData::new(&bundle, &semantics, graphs).map_err(|e| e.in_stage("train"))?;
    let mut checkpoints = Vec::new();
    for &seed in &config.eval.seeds {
        let path = dir.join(checkpoint_file(seed));
        let hp = HyperParams {
            seed,
            ..config.model.clone()
        };
        let reused = if cached(&checkpoint_file(seed)) {
            let c = Checkpoint::load(&path).map_err(|e| e.in_stage("train"))?;
            if c.hp == hp {
                Some(c)
            } else {
                log::info!("{} was trained with other settings; retraining", path.display());
                None
            }
        } else {
            None
        };
        let ckpt = match reused {
            Some(c) => c,
            None => {
                if !ran.contains(&Stage::Train) {
                    ran.push(Stage::Train);
                }
                stage_train(&bundle, &data, &hp, &path, &dir.join(train_log_file(seed)))
                    .map_err(|e| e.in_stage("train"))?
                    .checkpoint
            }
        };
        checkpoints.push((seed, ckpt));
    }

    ran.push(Stage::Evaluate);
    let runs = checkpoints
        .iter()
        .map(|(seed, c)| evaluate_checkpoint(&bundle, &data, c, config.eval.split, &config.eval.ks, *seed))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("evaluate"))?;
    let report = aggregate_runs(&runs).map_err(|e| e.in_stage("evaluate"))?;
    write_report(dir, &model_label(config.model.ablation), &report).map_err(|e| e.in_stage("evaluate"))?;
    Ok(PipelineOutcome { report, ran })
}
