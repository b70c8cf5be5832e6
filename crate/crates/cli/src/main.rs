use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use taxogrow::pipeline::{self, PipelineError, RunConfig, DOT_FILE, EVAL_FILE, EXPANDED_FILE, FINAL_FILE};

/// Grow a seed taxonomy from an annotated corpus.
#[derive(Parser, Debug)]
#[command(name = "taxogrow", version, about)]
struct Cli {
    /// JSON run configuration. Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan the corpus and write the features cache.
    ExtractFeatures,
    /// Expand the seed taxonomy.
    Expand,
    /// Globally re-optimize an expanded taxonomy.
    Optimize {
        /// Expanded taxonomy to read (default: <output_dir>/taxonomy.expanded.json).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score a taxonomy against a gold taxonomy.
    Evaluate {
        /// Predicted taxonomy (default: <output_dir>/taxonomy.json).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Report path (default: <output_dir>/eval.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a taxonomy as a Graphviz digraph.
    ExportDot {
        /// Taxonomy to render (default: <output_dir>/taxonomy.json).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output path (default: <output_dir>/taxonomy.dot).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage in order.
    Run,
}

/// Per-field overrides of the run configuration.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long = "corpus", global = true)]
    corpus: Option<PathBuf>,
    #[arg(long = "embeddings", global = true)]
    embeddings: Option<PathBuf>,
    #[arg(long = "types", global = true)]
    types: Option<PathBuf>,
    #[arg(long = "seed_taxonomy", alias = "seed-taxonomy", global = true)]
    seed_taxonomy: Option<PathBuf>,
    #[arg(long = "gold", global = true)]
    gold: Option<PathBuf>,
    #[arg(long = "output_dir", alias = "output-dir", global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long = "top_features", alias = "top-features", global = true)]
    top_features: Option<usize>,
    #[arg(long = "num_subsets", alias = "num-subsets", global = true)]
    num_subsets: Option<usize>,
    #[arg(long = "subset_size", alias = "subset-size", global = true)]
    subset_size: Option<usize>,
    #[arg(long = "mrr_rank_threshold", alias = "mrr-rank-threshold", global = true)]
    mrr_rank_threshold: Option<usize>,
    #[arg(long = "rng_seed", alias = "rng-seed", global = true)]
    rng_seed: Option<u64>,
    #[arg(long = "max_admitted", alias = "max-admitted", global = true)]
    max_admitted: Option<usize>,
    #[arg(long = "max_iter", alias = "max-iter", global = true)]
    max_iter: Option<u32>,
    #[arg(long = "mu1", global = true)]
    mu1: Option<f64>,
    #[arg(long = "mu2", global = true)]
    mu2: Option<f64>,
    /// Comma-separated POS tags accepted as noun phrases.
    #[arg(long = "noun_tags", alias = "noun-tags", value_delimiter = ',', global = true)]
    noun_tags: Option<Vec<String>>,
    #[arg(long = "lowercase_context", alias = "lowercase-context", action = ArgAction::Set, global = true)]
    lowercase_context: Option<bool>,
    /// Set to false to skip global optimization.
    #[arg(long = "global_opt", alias = "global-opt", action = ArgAction::Set, global = true)]
    global_opt: Option<bool>,
    #[arg(long = "dump_matrices", alias = "dump-matrices", action = ArgAction::Set, global = true)]
    dump_matrices: Option<bool>,
}

macro_rules! apply {
    ($cfg:ident, $o:ident; $($f:ident),*; $($g:ident),*) => {
        $( if let Some(v) = $o.$f { $cfg.$f = Some(v); } )*
        $( if let Some(v) = $o.$g { $cfg.$g = v; } )*
    };
}

impl Overrides {
    fn apply(self, cfg: &mut RunConfig) {
        let o = self;
        apply!(cfg, o;
            corpus, embeddings, types, seed_taxonomy, gold, max_admitted;
            output_dir, top_features, num_subsets, subset_size, mrr_rank_threshold, rng_seed,
            max_iter, mu1, mu2, noun_tags, lowercase_context, global_opt, dump_matrices);
    }
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json_file(p)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;

    match cli.command {
        Command::ExtractFeatures => {
            let store = pipeline::stage_extract(&cfg)?;
            println!(
                "{}: {} terms, {} patterns",
                cfg.out(pipeline::FEATURES_FILE).display(),
                store.vocab_size(),
                store.num_patterns()
            );
        }
        Command::Expand => {
            let tax = pipeline::stage_expand(&cfg)?;
            println!("{}: {} terms", cfg.out(EXPANDED_FILE).display(), tax.len() - 1);
        }
        Command::Optimize { input } => {
            let tax = pipeline::stage_optimize(&cfg, input.as_deref())?;
            println!("{}: {} terms", cfg.out(FINAL_FILE).display(), tax.len() - 1);
        }
        Command::Evaluate { pred, out } => {
            let gold = cfg.gold.clone().ok_or(PipelineError::Config {
                field: "gold",
                msg: "required for evaluate".into(),
            })?;
            let pred = pred.unwrap_or_else(|| cfg.out(FINAL_FILE));
            let out = out.unwrap_or_else(|| cfg.out(EVAL_FILE));
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| PipelineError::Config {
                    field: "output_dir",
                    msg: e.to_string(),
                })?;
            }
            let report = pipeline::stage_evaluate(&pred, &gold, Some(&out))?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::ExportDot { input, out } => {
            let input = input.unwrap_or_else(|| cfg.out(FINAL_FILE));
            let out = out.unwrap_or_else(|| cfg.out(DOT_FILE));
            pipeline::stage_export_dot(&input, &out)?;
            println!("{}", out.display());
        }
        Command::Run => {
            let summary = pipeline::run_pipeline(&cfg)?;
            println!("{}: {} terms", cfg.out(FINAL_FILE).display(), summary.taxonomy.len() - 1);
            if let Some(r) = summary.eval {
                println!("ancestor F1 {:.4}  edge F1 {:.4}", r.ancestor.f1, r.edge.f1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
