//! Staged execution: extract features → expand → optimize → evaluate →
//! export. Every stage reads and writes plain files in the output directory,
//! so stages can be rerun independently and a full run equals the composition
//! of its stages.
//!
//! Output directory layout:
//!
//! - `features.bin`: count cache (see [`crate::features_cache`])
//! - `taxonomy.expanded.json`: tree after expansion, before optimization
//! - `taxonomy.json`: final tree
//! - `taxonomy.dot`: Graphviz rendering of the final tree
//! - `eval.json`: metrics, when a gold tree is configured
//! - `manifest.json`: config, input checksums, stage records, snapshots
//! - `matrices/`: per-level TSV matrices when `dump_matrices` is set

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{ingest_file, ExtractionOptions, FeatureStore, IngestStats, DEFAULT_NOUN_TAGS};
use crate::embeddings::EmbeddingStore;
use crate::eval::{evaluate, EvalReport};
use crate::expansion::EnsembleConfig;
use crate::features_cache;
use crate::global_opt::{self, AssignmentMatrices, LevelReport, OptimizeConfig};
use crate::similarity::SimilarityModel;
use crate::taxonomy::{Resolution, Taxonomy, TreeExpander};
use crate::typestore::TypeStore;

pub const FEATURES_FILE: &str = "features.bin";
pub const EXPANDED_FILE: &str = "taxonomy.expanded.json";
pub const FINAL_FILE: &str = "taxonomy.json";
pub const DOT_FILE: &str = "taxonomy.dot";
pub const EVAL_FILE: &str = "eval.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    ExtractFeatures,
    Expand,
    Optimize,
    Evaluate,
    ExportDot,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::ExtractFeatures => "extract-features",
            Stage::Expand => "expand",
            Stage::Optimize => "optimize",
            Stage::Evaluate => "evaluate",
            Stage::ExportDot => "export-dot",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error in `{field}`: {msg}")]
    Config { field: &'static str, msg: String },
    #[error("{stage}: {msg}")]
    Data { stage: Stage, msg: String },
    #[error("{stage}: internal error: {msg}")]
    Internal { stage: Stage, msg: String },
}

impl PipelineError {
    /// Process exit code: 2 configuration, 3 data, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config { .. } => 2,
            PipelineError::Data { .. } => 3,
            PipelineError::Internal { .. } => 4,
        }
    }

    fn data(stage: Stage, e: impl std::fmt::Display) -> Self {
        PipelineError::Data {
            stage,
            msg: e.to_string(),
        }
    }

    fn io(stage: Stage, path: &Path, e: io::Error) -> Self {
        PipelineError::Internal {
            stage,
            msg: format!("{}: {e}", path.display()),
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Every tunable of a run. Field names double as config-file keys and
/// command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub seed_taxonomy: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub top_features: usize,
    pub num_subsets: usize,
    pub subset_size: usize,
    pub mrr_rank_threshold: usize,
    pub rng_seed: u64,
    pub max_admitted: Option<usize>,
    pub max_iter: u32,
    pub mu1: f64,
    pub mu2: f64,
    pub noun_tags: Vec<String>,
    pub lowercase_context: bool,
    /// Run the global optimization stage; when false the final tree equals
    /// the expanded tree.
    pub global_opt: bool,
    pub dump_matrices: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ens = EnsembleConfig::default();
        let opt = OptimizeConfig::default();
        RunConfig {
            corpus: None,
            embeddings: None,
            types: None,
            seed_taxonomy: None,
            gold: None,
            output_dir: PathBuf::from("out"),
            top_features: ens.top_features,
            num_subsets: ens.num_subsets,
            subset_size: ens.subset_size,
            mrr_rank_threshold: ens.mrr_rank_threshold,
            rng_seed: ens.rng_seed,
            max_admitted: ens.max_admitted,
            max_iter: 5,
            mu1: opt.mu1,
            mu2: opt.mu2,
            noun_tags: DEFAULT_NOUN_TAGS.iter().map(|s| s.to_string()).collect(),
            lowercase_context: false,
            global_opt: true,
            dump_matrices: false,
        }
    }
}

fn require<'a>(field: &'static str, v: &'a Option<PathBuf>) -> Result<&'a Path> {
    let p = v.as_deref().ok_or(PipelineError::Config {
        field,
        msg: "required but not set".into(),
    })?;
    if !p.exists() {
        return Err(PipelineError::Config {
            field,
            msg: format!("{} does not exist", p.display()),
        });
    }
    Ok(p)
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| PipelineError::Config {
            field: "config",
            msg: e.to_string(),
        })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| PipelineError::Config {
            field: "config",
            msg: format!("{}: {e}", path.display()),
        })?;
        Self::from_json_str(&s)
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            top_features: self.top_features,
            num_subsets: self.num_subsets,
            subset_size: self.subset_size,
            mrr_rank_threshold: self.mrr_rank_threshold,
            rng_seed: self.rng_seed,
            max_admitted: self.max_admitted,
        }
    }

    pub fn optimize(&self) -> OptimizeConfig {
        OptimizeConfig {
            mu1: self.mu1,
            mu2: self.mu2,
            top_features: self.top_features,
        }
    }

    pub fn extraction(&self) -> ExtractionOptions {
        ExtractionOptions {
            noun_tags: self.noun_tags.iter().cloned().collect(),
            lowercase_context: self.lowercase_context,
        }
    }

    /// Checks numeric settings.
    pub fn validate(&self) -> Result<()> {
        self.ensemble().validate().map_err(|msg| PipelineError::Config { field: "ensemble", msg })?;
        if self.max_iter == 0 {
            return Err(PipelineError::Config {
                field: "max_iter",
                msg: "must be at least 1".into(),
            });
        }
        for (field, v) in [("mu1", self.mu1), ("mu2", self.mu2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PipelineError::Config {
                    field,
                    msg: format!("must be a nonnegative number, got {v}"),
                });
            }
        }
        if self.noun_tags.is_empty() {
            return Err(PipelineError::Config {
                field: "noun_tags",
                msg: "must not be empty".into(),
            });
        }
        Ok(())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_checksum(path: &Path) -> io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Identifies a features cache: corpus checksum plus extraction settings.
pub fn features_fingerprint(corpus_checksum: &str, opts: &ExtractionOptions) -> String {
    let mut tags: Vec<&str> = opts.noun_tags.iter().map(String::as_str).collect();
    tags.sort_unstable();
    format!("corpus={corpus_checksum};lowercase={};nouns={}", opts.lowercase_context, tags.join(","))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run record written next to the artifacts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config: Option<RunConfig>,
    pub rng_seed: u64,
    /// Config field → SHA-256 of the referenced file.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestStats>,
    /// Tree after each expansion iteration.
    #[serde(default)]
    pub snapshots: Vec<serde_json::Value>,
    #[serde(default)]
    pub resolutions: Vec<Vec<Resolution>>,
    #[serde(default)]
    pub optimization: Vec<LevelReport>,
    /// Set when any stage failed; artifacts may be incomplete.
    pub partial: bool,
}

impl Manifest {
    fn load_or_new(cfg: &RunConfig) -> Manifest {
        let existing = fs::read_to_string(cfg.out(MANIFEST_FILE))
            .ok()
            .and_then(|s| serde_json::from_str::<Manifest>(&s).ok());
        let mut m = existing.unwrap_or_default();
        m.tool_version = env!("CARGO_PKG_VERSION").to_string();
        m.config = Some(cfg.clone());
        m.rng_seed = cfg.rng_seed;
        m
    }

    fn record_inputs(&mut self, cfg: &RunConfig) {
        for (field, p) in [
            ("corpus", &cfg.corpus),
            ("embeddings", &cfg.embeddings),
            ("types", &cfg.types),
            ("seed_taxonomy", &cfg.seed_taxonomy),
            ("gold", &cfg.gold),
        ] {
            if let Some(p) = p {
                if let Ok(sum) = file_checksum(p) {
                    self.inputs.insert(field.to_string(), sum);
                }
            }
        }
    }

    fn record(&mut self, stage: Stage, outcome: &std::result::Result<Vec<String>, String>) {
        self.stages.retain(|s| s.stage != stage);
        let rec = match outcome {
            Ok(artifacts) => StageRecord {
                stage,
                status: StageStatus::Ok,
                artifacts: artifacts.clone(),
                error: None,
            },
            Err(e) => StageRecord {
                stage,
                status: StageStatus::Failed,
                artifacts: Vec::new(),
                error: Some(e.clone()),
            },
        };
        self.stages.push(rec);
        self.partial = self.stages.iter().any(|s| s.status == StageStatus::Failed);
    }

    fn write(&self, cfg: &RunConfig) -> Result<()> {
        let path = cfg.out(MANIFEST_FILE);
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        fs::write(&path, s).map_err(|e| PipelineError::io(Stage::Config, &path, e))
    }
}

fn ensure_output_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| PipelineError::Config {
        field: "output_dir",
        msg: format!("{}: {e}", cfg.output_dir.display()),
    })
}

fn write_file(stage: Stage, path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| PipelineError::io(stage, path, e))
}

/// Scans the corpus and writes `features.bin`.
pub fn extract_features(cfg: &RunConfig) -> Result<(FeatureStore, IngestStats)> {
    let corpus = require("corpus", &cfg.corpus)?;
    ensure_output_dir(cfg)?;
    let opts = cfg.extraction();
    let (store, stats) = ingest_file(corpus, &opts).map_err(|e| PipelineError::data(Stage::ExtractFeatures, e))?;
    log::info!(
        "ingested {} lines: {} sentences kept, {} malformed, {} rejected, {} terms, {} patterns",
        stats.lines,
        stats.kept_sentences,
        stats.malformed_lines,
        stats.rejected_records,
        store.vocab_size(),
        store.num_patterns()
    );
    let sum = file_checksum(corpus).map_err(|e| PipelineError::io(Stage::ExtractFeatures, corpus, e))?;
    let path = cfg.out(FEATURES_FILE);
    features_cache::save(&path, &store, &features_fingerprint(&sum, &opts))
        .map_err(|e| PipelineError::data(Stage::ExtractFeatures, e))?;
    Ok((store, stats))
}

/// Loads `features.bin` if it matches the configured corpus, otherwise
/// re-extracts. Without a corpus the cache is used as is.
pub fn load_features(cfg: &RunConfig, stage: Stage) -> Result<(FeatureStore, Option<IngestStats>)> {
    let path = cfg.out(FEATURES_FILE);
    let cached = path.exists();
    match &cfg.corpus {
        Some(corpus) if corpus.exists() => {
            if cached {
                let sum = file_checksum(corpus).map_err(|e| PipelineError::io(stage, corpus, e))?;
                let want = features_fingerprint(&sum, &cfg.extraction());
                match features_cache::load_header(&path) {
                    Ok(h) if h.fingerprint == want => {
                        let (_, store) = features_cache::load(&path).map_err(|e| PipelineError::data(stage, e))?;
                        return Ok((store, None));
                    }
                    Ok(_) => log::warn!("{} is stale; re-extracting", path.display()),
                    Err(e) => log::warn!("{} unreadable ({e}); re-extracting", path.display()),
                }
            }
            let (store, stats) = extract_features(cfg)?;
            Ok((store, Some(stats)))
        }
        Some(_) => require("corpus", &cfg.corpus).map(|_| unreachable!()),
        None if cached => {
            let (_, store) = features_cache::load(&path).map_err(|e| PipelineError::data(stage, e))?;
            Ok((store, None))
        }
        None => Err(PipelineError::Config {
            field: "corpus",
            msg: format!("required when {} is absent", path.display()),
        }),
    }
}

/// Feature sources shared by expansion and optimization.
pub struct Inputs {
    pub features: FeatureStore,
    pub types: TypeStore,
    pub embeddings: EmbeddingStore,
    pub ingest: Option<IngestStats>,
}

impl Inputs {
    pub fn model(&self) -> SimilarityModel<'_> {
        SimilarityModel::new(&self.features, &self.types, &self.embeddings)
    }
}

pub fn load_inputs(cfg: &RunConfig, stage: Stage) -> Result<Inputs> {
    let emb_path = require("embeddings", &cfg.embeddings)?.to_path_buf();
    ensure_output_dir(cfg)?;
    let (features, ingest) = load_features(cfg, stage)?;
    let embeddings = EmbeddingStore::load(&emb_path).map_err(|e| PipelineError::data(stage, e))?;
    let types = match &cfg.types {
        Some(p) => TypeStore::load(p, features.vocab_size()).map_err(|e| PipelineError::data(stage, e))?,
        None => TypeStore::empty(features.vocab_size()),
    };
    Ok(Inputs {
        features,
        types,
        embeddings,
        ingest,
    })
}

fn read_taxonomy(stage: Stage, path: &Path) -> Result<Taxonomy> {
    let s = fs::read_to_string(path).map_err(|e| PipelineError::data(stage, format!("{}: {e}", path.display())))?;
    Taxonomy::from_json_str(&s).map_err(|e| PipelineError::data(stage, format!("{}: {e}", path.display())))
}

/// Expansion output plus its per-iteration history.
pub struct ExpandOutput {
    pub taxonomy: Taxonomy,
    pub snapshots: Vec<Taxonomy>,
    pub resolutions: Vec<Vec<Resolution>>,
}

/// Pure expansion over loaded inputs.
pub fn expand_taxonomy(inputs: &Inputs, seed: &Taxonomy, cfg: &RunConfig) -> ExpandOutput {
    let ens = cfg.ensemble();
    let mut driver = TreeExpander::new(inputs.model(), &ens);
    let run = driver.expand(seed, cfg.max_iter);
    ExpandOutput {
        taxonomy: run.taxonomy,
        snapshots: run.snapshots,
        resolutions: run.resolutions,
    }
}

/// Pure optimization over loaded inputs. Returns the adjusted tree, the
/// per-level reports and, when requested, per-level matrices.
pub fn optimize_taxonomy(
    inputs: &Inputs,
    tax: &Taxonomy,
    cfg: &RunConfig,
) -> (Taxonomy, Vec<LevelReport>, Vec<(usize, AssignmentMatrices)>) {
    let mut out = tax.clone();
    if !cfg.global_opt {
        return (out, Vec::new(), Vec::new());
    }
    let model = inputs.model();
    let opt = cfg.optimize();
    let mut dumps = Vec::new();
    let mut reports = Vec::new();
    let depth = out.levels().len();
    for level in 1..depth.saturating_sub(1) {
        if cfg.dump_matrices {
            if let Some((_, _, m)) = global_opt::level_matrices(&out, &model, level, &opt) {
                dumps.push((level, m));
            }
        }
        reports.push(global_opt::reassign(&mut out, &model, level, &opt));
    }
    (out, reports, dumps)
}

fn run_stage<T>(
    manifest: &mut Manifest,
    cfg: &RunConfig,
    stage: Stage,
    f: impl FnOnce(&mut Manifest) -> Result<(T, Vec<String>)>,
) -> Result<T> {
    let outcome = f(manifest);
    let rec = match &outcome {
        Ok((_, artifacts)) => Ok(artifacts.clone()),
        Err(e) => Err(e.to_string()),
    };
    manifest.record(stage, &rec);
    if cfg.output_dir.exists() {
        manifest.write(cfg)?;
    }
    outcome.map(|(v, _)| v)
}

/// `extract-features` stage.
pub fn stage_extract(cfg: &RunConfig) -> Result<FeatureStore> {
    cfg.validate()?;
    require("corpus", &cfg.corpus)?;
    ensure_output_dir(cfg)?;
    let mut manifest = Manifest::load_or_new(cfg);
    manifest.record_inputs(cfg);
    run_stage(&mut manifest, cfg, Stage::ExtractFeatures, |m| {
        let (store, stats) = extract_features(cfg)?;
        m.ingest = Some(stats);
        Ok((store, vec![FEATURES_FILE.to_string()]))
    })
}

fn expand_with(cfg: &RunConfig, inputs: &Inputs, m: &mut Manifest) -> Result<(Taxonomy, Vec<String>)> {
    let seed_path = require("seed_taxonomy", &cfg.seed_taxonomy)?;
    let seed = read_taxonomy(Stage::Expand, seed_path)?;
    let out = expand_taxonomy(inputs, &seed, cfg);
    m.snapshots = out.snapshots.iter().map(Taxonomy::to_json_value).collect();
    m.resolutions = out.resolutions;
    if inputs.ingest.is_some() {
        m.ingest = inputs.ingest;
    }
    write_file(Stage::Expand, &cfg.out(EXPANDED_FILE), &out.taxonomy.to_json_string())?;
    Ok((out.taxonomy, vec![EXPANDED_FILE.to_string()]))
}

fn optimize_with(cfg: &RunConfig, inputs: &Inputs, pre: &Taxonomy, m: &mut Manifest) -> Result<(Taxonomy, Vec<String>)> {
    let (tax, reports, dumps) = optimize_taxonomy(inputs, pre, cfg);
    let mut artifacts = vec![FINAL_FILE.to_string()];
    if !dumps.is_empty() {
        let dir = cfg.out("matrices");
        fs::create_dir_all(&dir).map_err(|e| PipelineError::io(Stage::Optimize, &dir, e))?;
        for (level, mats) in &dumps {
            let f = global_opt::solve(mats);
            for (name, mat, cols) in [
                ("W", &mats.w, &mats.children),
                ("Yc", &mats.yc, &mats.parents),
                ("Ys", &mats.ys, &mats.parents),
                ("F", &f, &mats.parents),
            ] {
                let file = format!("level{level}.{name}.tsv");
                write_file(Stage::Optimize, &dir.join(&file), &AssignmentMatrices::to_tsv(mat, &mats.children, cols))?;
                artifacts.push(format!("matrices/{file}"));
            }
        }
    }
    m.optimization = reports;
    write_file(Stage::Optimize, &cfg.out(FINAL_FILE), &tax.to_json_string())?;
    Ok((tax, artifacts))
}

/// `expand` stage: seed taxonomy → `taxonomy.expanded.json`.
pub fn stage_expand(cfg: &RunConfig) -> Result<Taxonomy> {
    cfg.validate()?;
    require("seed_taxonomy", &cfg.seed_taxonomy)?;
    let inputs = load_inputs(cfg, Stage::Expand)?;
    let mut manifest = Manifest::load_or_new(cfg);
    manifest.record_inputs(cfg);
    run_stage(&mut manifest, cfg, Stage::Expand, |m| expand_with(cfg, &inputs, m))
}

/// `optimize` stage: `input` (default `taxonomy.expanded.json`) →
/// `taxonomy.json`.
pub fn stage_optimize(cfg: &RunConfig, input: Option<&Path>) -> Result<Taxonomy> {
    cfg.validate()?;
    let pre_path = input.map(Path::to_path_buf).unwrap_or_else(|| cfg.out(EXPANDED_FILE));
    let pre = read_taxonomy(Stage::Optimize, &pre_path)?;
    let inputs = load_inputs(cfg, Stage::Optimize)?;
    let mut manifest = Manifest::load_or_new(cfg);
    run_stage(&mut manifest, cfg, Stage::Optimize, |m| optimize_with(cfg, &inputs, &pre, m))
}

/// `evaluate` stage: metrics of `pred` against `gold`, written to `out`.
pub fn stage_evaluate(pred: &Path, gold: &Path, out: Option<&Path>) -> Result<EvalReport> {
    let p = read_taxonomy(Stage::Evaluate, pred)?;
    let g = read_taxonomy(Stage::Evaluate, gold)?;
    let report = evaluate(&p, &g);
    if let Some(out) = out {
        let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
        s.push('\n');
        write_file(Stage::Evaluate, out, &s)?;
    }
    Ok(report)
}

/// `export-dot` stage.
pub fn stage_export_dot(input: &Path, out: &Path) -> Result<()> {
    let tax = read_taxonomy(Stage::ExportDot, input)?;
    write_file(Stage::ExportDot, out, &tax.to_dot())
}

/// Summary of a full run.
#[derive(Debug)]
pub struct RunSummary {
    pub expanded: Taxonomy,
    pub taxonomy: Taxonomy,
    pub eval: Option<EvalReport>,
}

/// All stages in order. Each stage is recorded in the manifest; the first
/// failure stops the run and marks the manifest partial.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    require("embeddings", &cfg.embeddings)?;
    require("seed_taxonomy", &cfg.seed_taxonomy)?;
    if let Some(t) = &cfg.types {
        if !t.exists() {
            log::warn!("types file {} not found; type features disabled", t.display());
        }
    }
    if cfg.gold.is_some() {
        require("gold", &cfg.gold)?;
    }
    ensure_output_dir(cfg)?;
    let mut manifest = Manifest::load_or_new(cfg);
    manifest.stages.clear();
    manifest.record_inputs(cfg);

    let inputs = run_stage(&mut manifest, cfg, Stage::ExtractFeatures, |_| {
        load_inputs(cfg, Stage::ExtractFeatures).map(|i| (i, vec![FEATURES_FILE.to_string()]))
    })?;
    let expanded = run_stage(&mut manifest, cfg, Stage::Expand, |m| expand_with(cfg, &inputs, m))?;
    let taxonomy = run_stage(&mut manifest, cfg, Stage::Optimize, |m| optimize_with(cfg, &inputs, &expanded, m))?;
    run_stage(&mut manifest, cfg, Stage::ExportDot, |_| {
        write_file(Stage::ExportDot, &cfg.out(DOT_FILE), &taxonomy.to_dot()).map(|_| ((), vec![DOT_FILE.to_string()]))
    })?;
    let eval = match &cfg.gold {
        Some(gold) => Some(run_stage(&mut manifest, cfg, Stage::Evaluate, |_| {
            stage_evaluate(&cfg.out(FINAL_FILE), gold, Some(&cfg.out(EVAL_FILE))).map(|r| (r, vec![EVAL_FILE.to_string()]))
        })?),
        None => None,
    };
    Ok(RunSummary {
        expanded,
        taxonomy,
        eval,
    })
}

/// Terms of the feature store that never made it onto the tree.
pub fn unplaced_terms(inputs: &Inputs, tax: &Taxonomy) -> Vec<String> {
    let on: HashSet<_> = tax.terms();
    inputs
        .features
        .candidate_terms()
        .iter()
        .filter(|t| !on.contains(*t))
        .map(|t| t.to_string())
        .collect()
}
