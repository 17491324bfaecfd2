use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mandate_core::config::{RunConfig, RESOLVED_FILE};
use mandate_core::experiment::{
    ablate_fusion, ablate_pe, ablation_csv, inputs_for_model, precompute_pe, run, write_file, write_run,
    ExperimentError, ABLATION_FILE, METRICS_FILE,
};
use mandate_core::graph::{load_dataset, save_dataset, synth_generate, GraphError, SplitAssignment, SynthConfig};
use mandate_core::model::{load_model, ModelError};
use mandate_core::train::{evaluate, TrainError};
use mandate_core::walk::WalkError;

#[derive(Parser)]
#[command(name = "mandate", version, about = "Multi-relation graph fraud detection with walk encodings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-relation fraud dataset.
    PrepareSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        nodes: usize,
        #[arg(long, default_value_t = 2)]
        relations: usize,
        /// Comma-separated intra-class edge rate per relation.
        #[arg(long, value_delimiter = ',', default_value = "0.9,0.3")]
        homophily: Vec<f64>,
        /// Comma-separated mean degree per relation (default 10 each).
        #[arg(long, value_delimiter = ',')]
        mean_degree: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.1)]
        fraud_rate: f64,
        #[arg(long, default_value_t = 16)]
        feature_dim: usize,
        #[arg(long, default_value_t = 1.0)]
        feature_signal: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute walk encodings for every relation and cache them.
    PrecomputePe {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = mandate_core::walk::DEFAULT_MAX_ANCHORS)]
        anchors: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overwrite caches built from a different graph.
        #[arg(long)]
        force: bool,
    },
    /// Train a model and write checkpoint, history and metrics.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Directory of cached encodings from precompute-pe.
        #[arg(long)]
        pe: Option<PathBuf>,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Where to write metrics.json (defaults to the checkpoint's run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare multi-scale, single-hop and frozen-PageRank encodings.
    AblatePe {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare each relation alone against the fused model.
    AblateFusion {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// `key=value` override; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let msg = e.to_string();
        match e {
            ExperimentError::Config(_) => Failure::Usage(msg),
            ExperimentError::Train(TrainError::Diverged { .. })
            | ExperimentError::Train(TrainError::Model(ModelError::Autodiff(_)))
            | ExperimentError::Model(ModelError::Autodiff(_)) => Failure::Numeric(msg),
            ExperimentError::Train(TrainError::InvalidConfig(_))
            | ExperimentError::Model(ModelError::InvalidConfig(_)) => Failure::Usage(msg),
            ExperimentError::Walk(WalkError::NonFiniteWeights) => Failure::Numeric(msg),
            _ => Failure::Data(msg),
        }
    }
}

macro_rules! from_via_experiment {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                ExperimentError::from(e).into()
            }
        }
    )*};
}
from_via_experiment!(GraphError, ModelError, TrainError, WalkError, mandate_core::config::ConfigError);

fn resolve_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.merge_file(path)?;
    }
    for pair in &args.overrides {
        cfg.apply_override(pair)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::PrepareSynthetic {
            out,
            nodes,
            relations,
            homophily,
            mean_degree,
            fraud_rate,
            feature_dim,
            feature_signal,
            seed,
        } => {
            if homophily.len() != relations {
                return Err(Failure::Usage(format!(
                    "--homophily has {} values but --relations is {relations}",
                    homophily.len()
                )));
            }
            let mean_degree = mean_degree.unwrap_or_else(|| vec![10.0; relations]);
            if mean_degree.len() != relations {
                return Err(Failure::Usage(format!(
                    "--mean-degree has {} values but --relations is {relations}",
                    mean_degree.len()
                )));
            }
            let cfg = SynthConfig {
                num_nodes: nodes,
                num_relations: relations,
                fraud_rate,
                homophily,
                mean_degree,
                feature_dim,
                feature_signal,
                seed,
            };
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let graph = synth_generate(&cfg)?;
            save_dataset(&graph, &out)?;
            println!("wrote {} nodes, {} relations to {}", graph.num_nodes(), graph.num_relations(), out.display());
        }
        Command::PrecomputePe { data, k, anchors, out, seed, force } => {
            if k == 0 || anchors == 0 {
                return Err(Failure::Usage("--k and --anchors must be positive".into()));
            }
            let graph = load_dataset(&data)?;
            let summary = precompute_pe(&graph, k, anchors, seed, &out, force)?;
            if let Some(notice) = &summary.notice {
                eprintln!("notice: {notice}");
            }
            println!("wrote {} caches (K={k}, {} anchors) to {}", summary.files.len(), summary.num_anchors, out.display());
        }
        Command::Train { run: args, pe } => {
            let cfg = resolve_config(&args)?;
            let graph = load_dataset(&args.data)?;
            let result = run(&graph, &cfg, pe.as_deref())?;
            write_run(&args.out, &cfg, &result)?;
            println!(
                "best epoch {} of {}; val auc {:.4}; test auc {:.4} f1_macro {:.4} gmean {:.4}",
                result.history.best_epoch,
                result.history.records.len(),
                result.val.auc,
                result.test.auc,
                result.test.f1_macro,
                result.test.gmean
            );
        }
        Command::Eval { data, checkpoint, split, out } => {
            let model = load_model(&checkpoint)?;
            let graph = load_dataset(&data)?;
            let run_dir = checkpoint.parent().unwrap_or(Path::new("."));
            let split_path = run_dir.join(mandate_core::experiment::SPLIT_FILE);
            let assignment: SplitAssignment = std::fs::read_to_string(&split_path)
                .map_err(|e| Failure::Data(format!("{}: {e}", split_path.display())))
                .and_then(|t| serde_json::from_str(&t).map_err(|e| Failure::Data(format!("{}: {e}", split_path.display()))))?;
            let nodes = assignment
                .by_name(&split)
                .ok_or_else(|| Failure::Usage(format!("unknown split {split:?}; expected train, val or test")))?;
            if nodes.iter().any(|&i| i >= graph.num_nodes()) {
                return Err(Failure::Data(format!("{} does not match the dataset's node count", split_path.display())));
            }
            let inputs = inputs_for_model(&graph, &model.arch)?;
            let report = evaluate(&model, &inputs, nodes, &split)?;
            let out = out.unwrap_or_else(|| run_dir.to_path_buf());
            create_dir(&out)?;
            write_file(&out.join(METRICS_FILE), &report.to_json())?;
            println!("{split}: auc {:.4} f1_macro {:.4} gmean {:.4}", report.auc, report.f1_macro, report.gmean);
        }
        Command::AblatePe { run: args } => {
            let cfg = resolve_config(&args)?;
            let graph = load_dataset(&args.data)?;
            let results = ablate_pe(&graph, &cfg)?;
            write_ablation(&args.out, &cfg, &ablation_csv(&results))?;
            for r in &results {
                println!("{}: test auc {:.4}", r.variant, r.test.auc);
            }
        }
        Command::AblateFusion { run: args } => {
            let cfg = resolve_config(&args)?;
            let graph = load_dataset(&args.data)?;
            let results = ablate_fusion(&graph, &cfg)?;
            write_ablation(&args.out, &cfg, &ablation_csv(&results))?;
            for r in &results {
                println!("{}: test auc {:.4}", r.variant, r.test.auc);
            }
        }
    }
    Ok(())
}

fn write_ablation(out: &Path, cfg: &RunConfig, csv: &str) -> Result<(), Failure> {
    create_dir(out)?;
    write_file(&out.join(ABLATION_FILE), csv)?;
    write_file(&out.join(RESOLVED_FILE), &cfg.to_resolved())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
