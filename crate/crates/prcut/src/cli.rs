//! Command-line surface: training runs, baselines, metrics, graph export,
//! synthetic data, and the verification suites.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 numerical failure
//! (collapse, non-finite loss, or a failed verification suite).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baselines::{kmeans, spectral_clustering};
use crate::data::{
    load_csv, load_embeddings, load_idx, make_synthetic, write_embeddings_file, Dataset,
    SyntheticKind,
};
use crate::graph::{knn_graph, write_graph_file, KernelKind, KnnMetric};
use crate::metrics::MetricsReport;
use crate::model::{load_checkpoint_file, save_checkpoint_file, OptimizerKind};
use crate::objective::GradMode;
use crate::trainer::{predict, train, TrainConfig, TrainError};
use crate::verify::run_all_suites;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Where a run reads its samples from. Exactly one variant per run; the
/// resolved config echoes it back verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_labels: bool,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Embeddings {
        path: PathBuf,
    },
    Synth {
        synth_kind: SyntheticKind,
        n: usize,
        noise: f64,
        classes: usize,
        seed: u64,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset, String> {
        match self {
            DataSource::Csv { path, has_labels } => {
                load_csv(path, *has_labels).map_err(|e| e.to_string())
            }
            DataSource::Idx { images, labels } => {
                load_idx(images, labels).map_err(|e| e.to_string())
            }
            DataSource::Embeddings { path } => load_embeddings(path).map_err(|e| e.to_string()),
            DataSource::Synth {
                synth_kind,
                n,
                noise,
                classes,
                seed,
            } => make_synthetic(*synth_kind, *n, *noise, *classes, *seed)
                .map_err(|e| e.to_string()),
        }
    }
}

/// Full description of a training run: dataset, hyperparameters, outputs.
/// Serialized next to the outputs with every default expanded so the run
/// reproduces bit for bit from the echo alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub compute_metrics: bool,
    /// Build a k-NN graph of this degree for the ratio-cut metric.
    #[serde(default)]
    pub metrics_graph_knn: Option<usize>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("prcut-run")
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Parser)]
#[command(
    name = "prcut",
    about = "Probabilistic ratio-cut clustering toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Numeric CSV file (features, optionally a trailing label column).
    #[arg(long, group = "source")]
    csv: Option<PathBuf>,
    /// Treat the last CSV column as integer labels.
    #[arg(long, requires = "csv")]
    csv_labels: bool,
    /// IDX image file (uncompressed), paired with --idx-labels.
    #[arg(long, group = "source", requires = "idx_labels")]
    idx_images: Option<PathBuf>,
    #[arg(long)]
    idx_labels: Option<PathBuf>,
    /// Packed embedding file.
    #[arg(long, group = "source")]
    emb: Option<PathBuf>,
    /// Synthetic dataset kind: blobs, two-moons, rings.
    #[arg(long, group = "source")]
    synth: Option<String>,
    /// Synthetic sample count.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Synthetic noise level.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Synthetic class count (blobs only).
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Synthetic generator seed.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

impl DataArgs {
    fn to_source(&self) -> Result<DataSource, String> {
        if let Some(path) = &self.csv {
            return Ok(DataSource::Csv {
                path: path.clone(),
                has_labels: self.csv_labels,
            });
        }
        if let Some(images) = &self.idx_images {
            return Ok(DataSource::Idx {
                images: images.clone(),
                labels: self.idx_labels.clone().expect("clap enforces the pair"),
            });
        }
        if let Some(path) = &self.emb {
            return Ok(DataSource::Embeddings { path: path.clone() });
        }
        if let Some(kind) = &self.synth {
            return Ok(DataSource::Synth {
                synth_kind: kind.parse()?,
                n: self.n,
                noise: self.noise,
                classes: self.classes,
                seed: self.data_seed,
            });
        }
        Err("no data source given; use --csv, --idx-images, --emb, or --synth".into())
    }
}

#[derive(Debug, Args, Default)]
struct TrainOverrides {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Kernel: knn, cosine, or label.
    #[arg(long)]
    kernel: Option<String>,
    /// Temperature for the cosine kernel.
    #[arg(long)]
    tau: Option<f64>,
    /// Neighbor count for knn kernels and graphs.
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Optimizer: sgd, rmsprop, or adam.
    #[arg(long)]
    optimizer: Option<String>,
    /// Gradient mode: analytic or paper-literal.
    #[arg(long)]
    grad_mode: Option<String>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut TrainConfig) -> Result<(), String> {
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(steps) = self.steps {
            cfg.steps = steps;
        }
        if let Some(beta) = self.beta {
            cfg.beta = beta;
        }
        if let Some(gamma) = self.gamma {
            cfg.gamma = gamma;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(kernel) = &self.kernel {
            cfg.kernel.kind = match kernel.as_str() {
                "knn" => KernelKind::KnnAdjacency,
                "cosine" => KernelKind::ExpCosine,
                "label" => KernelKind::LabelEquality,
                other => return Err(format!("unknown kernel {other:?}")),
            };
        }
        if let Some(tau) = self.tau {
            cfg.kernel.temperature = tau;
        }
        if let Some(knn_k) = self.knn_k {
            cfg.kernel.k_neighbors = knn_k;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        if let Some(wd) = self.weight_decay {
            cfg.weight_decay = wd;
        }
        if let Some(optimizer) = &self.optimizer {
            cfg.optimizer = match optimizer.as_str() {
                "sgd" => OptimizerKind::Sgd,
                "rmsprop" => OptimizerKind::RmsProp,
                "adam" => OptimizerKind::Adam,
                other => return Err(format!("unknown optimizer {other:?}")),
            };
        }
        if let Some(mode) = &self.grad_mode {
            cfg.grad_mode = match mode.as_str() {
                "analytic" => GradMode::Analytic,
                "paper-literal" => GradMode::PaperLiteral,
                other => return Err(format!("unknown grad mode {other:?}")),
            };
        }
        Ok(())
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the online training loop from a JSON run config.
    Train {
        /// Run config JSON; flags below override individual fields.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Assign clusters with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Write one label per line here (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print a metrics report (needs labels in the data).
        #[arg(long)]
        metrics: bool,
    },
    /// Spectral clustering baseline on a k-NN graph.
    Spectral {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        knn_k: usize,
        /// Distance for the graph: euclidean or cosine.
        #[arg(long, default_value = "euclidean")]
        metric: String,
        #[arg(long, default_value_t = 5)]
        n_init: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-means baseline on raw features.
    Kmeans {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        n_init: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a predicted labeling against the dataset's labels.
    Metrics {
        #[command(flatten)]
        data: DataArgs,
        /// Predicted labels, one integer per line.
        #[arg(long)]
        pred: PathBuf,
        /// Build a k-NN graph of this degree for the ratio-cut column.
        #[arg(long)]
        rcut_knn: Option<usize>,
    },
    /// Build and save a k-NN similarity graph.
    KnnGraph {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 100)]
        knn_k: usize,
        #[arg(long, default_value = "euclidean")]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every numerical verification suite.
    Verify,
    /// Generate a synthetic dataset as a packed embedding file.
    Synth {
        /// blobs, two-moons, or rings.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_metric(name: &str) -> Result<KnnMetric, String> {
    match name {
        "euclidean" => Ok(KnnMetric::Euclidean),
        "cosine" => Ok(KnnMetric::Cosine),
        other => Err(format!("unknown metric {other:?}")),
    }
}

fn read_labels_file(path: &Path) -> Result<Vec<usize>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| format!("line {}: bad label {:?}", i + 1, l.trim()))
        })
        .collect()
}

fn write_labels(path: Option<&Path>, labels: &[usize]) -> Result<(), String> {
    let mut text = String::new();
    for &l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    match path {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report_for(
    dataset: &Dataset,
    predicted: &[usize],
    k: usize,
    rcut_knn: Option<usize>,
) -> Result<MetricsReport, String> {
    let truth = dataset
        .labels
        .as_ref()
        .ok_or("dataset carries no labels to score against")?;
    let graph = match rcut_knn {
        Some(knn_k) => Some(
            knn_graph(dataset.features.view(), knn_k, KnnMetric::Euclidean)
                .map_err(|e| e.to_string())?,
        ),
        None => None,
    };
    MetricsReport::compute(truth, predicted, k, graph.as_ref()).map_err(|e| e.to_string())
}

/// Entry point shared by the binary and the tests.
pub fn cli_main(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // clap renders its own usage text; --help and --version are
            // successful exits.
            let code = if err.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Validation(message)) => {
            eprintln!("error: {message}");
            EXIT_VALIDATION
        }
        Err(CliError::Numerical(message)) => {
            eprintln!("numerical failure: {message}");
            EXIT_NUMERICAL
        }
    }
}

pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl From<String> for CliError {
    fn from(message: String) -> Self {
        CliError::Validation(message)
    }
}

fn classify_train_error(err: TrainError) -> CliError {
    match err {
        TrainError::Collapse { .. } | TrainError::NonFiniteLoss { .. } => {
            CliError::Numerical(err.to_string())
        }
        other => CliError::Validation(other.to_string()),
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train {
            config,
            out,
            overrides,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| format!("{}: {e}", config.display()))?;
            let mut run_config: RunConfig =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", config.display()))?;
            overrides.apply(&mut run_config.train)?;
            if let Some(out) = out {
                run_config.output_dir = out;
            }
            run_training(&run_config)
        }
        Command::Predict {
            checkpoint,
            data,
            out,
            metrics,
        } => {
            let dataset = data.to_source()?.load()?;
            let (model, _, _) =
                load_checkpoint_file(&checkpoint).map_err(|e| e.to_string())?;
            let (partition, _) = predict(&model, &dataset).map_err(classify_train_error)?;
            write_labels(out.as_deref(), partition.labels())?;
            if metrics {
                let report = report_for(&dataset, partition.labels(), partition.k(), None)?;
                println!(
                    "{}",
                    serde_json::to_string(&report).map_err(|e| e.to_string())?
                );
            }
            Ok(())
        }
        Command::Spectral {
            data,
            k,
            knn_k,
            metric,
            n_init,
            seed,
            out,
        } => {
            let dataset = data.to_source()?.load()?;
            let metric = parse_metric(&metric)?;
            let graph = knn_graph(dataset.features.view(), knn_k, metric)
                .map_err(|e| e.to_string())?;
            let partition =
                spectral_clustering(&graph, k, n_init, seed).map_err(|e| e.to_string())?;
            write_labels(out.as_deref(), partition.labels())?;
            if let Some(truth) = &dataset.labels {
                let classes = truth.iter().copied().max().unwrap_or(0) + 1;
                let report = MetricsReport::compute(
                    truth,
                    partition.labels(),
                    classes.max(k),
                    Some(&graph),
                )
                .map_err(|e| e.to_string())?;
                println!(
                    "{}",
                    serde_json::to_string(&report).map_err(|e| e.to_string())?
                );
            }
            Ok(())
        }
        Command::Kmeans {
            data,
            k,
            n_init,
            seed,
            out,
        } => {
            let dataset = data.to_source()?.load()?;
            let partition =
                kmeans(dataset.features.view(), k, n_init, seed).map_err(|e| e.to_string())?;
            write_labels(out.as_deref(), partition.labels())?;
            if let Some(truth) = &dataset.labels {
                let classes = truth.iter().copied().max().unwrap_or(0) + 1;
                let report =
                    MetricsReport::compute(truth, partition.labels(), classes.max(k), None)
                        .map_err(|e| e.to_string())?;
                println!(
                    "{}",
                    serde_json::to_string(&report).map_err(|e| e.to_string())?
                );
            }
            Ok(())
        }
        Command::Metrics {
            data,
            pred,
            rcut_knn,
        } => {
            let dataset = data.to_source()?.load()?;
            let predicted = read_labels_file(&pred)?;
            if predicted.len() != dataset.n() {
                return Err(CliError::Validation(format!(
                    "{} predictions for {} samples",
                    predicted.len(),
                    dataset.n()
                )));
            }
            let truth = dataset.labels.as_ref().ok_or_else(|| {
                CliError::Validation("dataset carries no labels to score against".into())
            })?;
            let k = truth
                .iter()
                .chain(predicted.iter())
                .copied()
                .max()
                .unwrap_or(0)
                + 1;
            let report = report_for(&dataset, &predicted, k, rcut_knn)?;
            println!(
                "{}",
                serde_json::to_string(&report).map_err(|e| e.to_string())?
            );
            Ok(())
        }
        Command::KnnGraph {
            data,
            knn_k,
            metric,
            out,
        } => {
            let dataset = data.to_source()?.load()?;
            let metric = parse_metric(&metric)?;
            let graph = knn_graph(dataset.features.view(), knn_k, metric)
                .map_err(|e| e.to_string())?;
            write_graph_file(&out, &graph, knn_k, metric).map_err(|e| e.to_string())?;
            println!(
                "wrote {} vertices, {} edges to {}",
                graph.n(),
                graph.entries().len(),
                out.display()
            );
            Ok(())
        }
        Command::Verify => {
            let suites = run_all_suites();
            let mut passed = 0;
            for suite in &suites {
                let status = if suite.passed { "pass" } else { "FAIL" };
                println!(
                    "[{status}] {name}: {detail} ({cases} cases)",
                    name = suite.name,
                    detail = suite.detail,
                    cases = suite.cases
                );
                if suite.passed {
                    passed += 1;
                }
            }
            println!("{passed}/{} suites passed", suites.len());
            if passed == suites.len() {
                Ok(())
            } else {
                Err(CliError::Numerical(format!(
                    "{} verification suites failed",
                    suites.len() - passed
                )))
            }
        }
        Command::Synth {
            kind,
            n,
            noise,
            classes,
            seed,
            out,
        } => {
            let kind: SyntheticKind = kind.parse()?;
            let dataset =
                make_synthetic(kind, n, noise, classes, seed).map_err(|e| e.to_string())?;
            write_embeddings_file(&out, &dataset).map_err(|e| e.to_string())?;
            println!(
                "wrote {} samples of dimension {} to {}",
                dataset.n(),
                dataset.dim(),
                out.display()
            );
            Ok(())
        }
    }
}

/// Execute a training run and write every artifact into the output
/// directory: the resolved config echo, the per-step history, the final
/// checkpoint, predicted labels, and (when possible) a metrics report.
pub fn run_training(run_config: &RunConfig) -> Result<(), CliError> {
    run_config
        .train
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let dataset = run_config.data.load()?;
    std::fs::create_dir_all(&run_config.output_dir)
        .map_err(|e| format!("{}: {e}", run_config.output_dir.display()))?;

    // Resolved-config echo before the run starts.
    let echo_path = run_config.output_dir.join("config.resolved.json");
    let echo = serde_json::to_string_pretty(run_config).map_err(|e| e.to_string())?;
    std::fs::write(&echo_path, echo).map_err(|e| format!("{}: {e}", echo_path.display()))?;

    let (model, history) = train(&dataset, &run_config.train).map_err(classify_train_error)?;

    let history_path = run_config.output_dir.join("history.jsonl");
    std::fs::write(&history_path, history.to_jsonl())
        .map_err(|e| format!("{}: {e}", history_path.display()))?;

    let checkpoint_path = run_config.output_dir.join("checkpoint.bin");
    save_checkpoint_file(
        &checkpoint_path,
        &model,
        run_config.train.seed,
        history.steps_run() as u64,
    )
    .map_err(|e| e.to_string())?;

    let (partition, _) = predict(&model, &dataset).map_err(classify_train_error)?;
    let labels_path = run_config.output_dir.join("labels.txt");
    write_labels(Some(&labels_path), partition.labels())?;

    if run_config.compute_metrics && dataset.labels.is_some() {
        let report = report_for(
            &dataset,
            partition.labels(),
            run_config.train.k,
            run_config.metrics_graph_knn,
        )?;
        let metrics_path = run_config.output_dir.join("metrics.json");
        let json = serde_json::to_string(&report).map_err(|e| e.to_string())?;
        std::fs::write(&metrics_path, &json)
            .map_err(|e| format!("{}: {e}", metrics_path.display()))?;
        println!("{json}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::KernelConfig;

    fn args(list: &[&str]) -> Vec<String> {
        std::iter::once("prcut")
            .chain(list.iter().copied())
            .map(String::from)
            .collect()
    }

    #[test]
    fn unknown_subcommand_fails_validation() {
        assert_eq!(cli_main(&args(&["frobnicate"])), EXIT_VALIDATION);
        assert_eq!(cli_main(&args(&["train"])), EXIT_VALIDATION);
    }

    #[test]
    fn missing_config_fails_validation() {
        assert_eq!(
            cli_main(&args(&["train", "--config", "/nonexistent/missing.json"])),
            EXIT_VALIDATION
        );
    }

    #[test]
    fn synth_writes_identical_files() {
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("a.emb");
        let out_b = dir.path().join("b.emb");
        for out in [&out_a, &out_b] {
            let code = cli_main(&args(&[
                "synth",
                "--kind",
                "blobs",
                "--n",
                "300",
                "--seed",
                "7",
                "--out",
                out.to_str().unwrap(),
            ]));
            assert_eq!(code, EXIT_OK);
        }
        assert_eq!(
            std::fs::read(&out_a).unwrap(),
            std::fs::read(&out_b).unwrap()
        );
    }

    #[test]
    fn knn_graph_and_metrics_flow() {
        let dir = tempfile::tempdir().unwrap();
        let emb = dir.path().join("d.emb");
        assert_eq!(
            cli_main(&args(&[
                "synth", "--kind", "blobs", "--n", "60", "--classes", "2", "--seed", "3",
                "--out", emb.to_str().unwrap(),
            ])),
            EXIT_OK
        );
        let graph_path = dir.path().join("g.txt");
        assert_eq!(
            cli_main(&args(&[
                "knn-graph",
                "--emb",
                emb.to_str().unwrap(),
                "--knn-k",
                "5",
                "--out",
                graph_path.to_str().unwrap(),
            ])),
            EXIT_OK
        );
        let text = std::fs::read_to_string(&graph_path).unwrap();
        assert!(text.starts_with("60 5 euclidean"));

        // Perfect predictions score 1.0.
        let pred_path = dir.path().join("pred.txt");
        let dataset = load_embeddings(&emb).unwrap();
        let mut text = String::new();
        for &l in dataset.labels.as_ref().unwrap() {
            text.push_str(&format!("{l}\n"));
        }
        std::fs::write(&pred_path, text).unwrap();
        assert_eq!(
            cli_main(&args(&[
                "metrics",
                "--emb",
                emb.to_str().unwrap(),
                "--pred",
                pred_path.to_str().unwrap(),
            ])),
            EXIT_OK
        );
    }

    #[test]
    fn train_run_writes_all_artifacts_and_reproduces() {
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("run-a");
        let out_b = dir.path().join("run-b");
        let config = RunConfig {
            data: DataSource::Synth {
                synth_kind: SyntheticKind::Blobs,
                n: 80,
                noise: 0.3,
                classes: 2,
                seed: 1,
            },
            train: TrainConfig {
                k: 2,
                batch_size: 16,
                steps: 20,
                kernel: KernelConfig::knn(5),
                hidden_widths: vec![8],
                ..TrainConfig::default()
            },
            output_dir: out_a.clone(),
            compute_metrics: true,
            metrics_graph_knn: Some(5),
        };
        let config_path = dir.path().join("cfg.json");
        std::fs::write(
            &config_path,
            serde_json::to_string_pretty(&config).unwrap(),
        )
        .unwrap();

        assert_eq!(
            cli_main(&args(&["train", "--config", config_path.to_str().unwrap()])),
            EXIT_OK
        );
        for file in ["config.resolved.json", "history.jsonl", "checkpoint.bin", "labels.txt", "metrics.json"] {
            assert!(out_a.join(file).exists(), "missing {file}");
        }

        // Re-running from the resolved echo into a second directory gives
        // byte-identical histories, checkpoints, and metrics.
        assert_eq!(
            cli_main(&args(&[
                "train",
                "--config",
                out_a.join("config.resolved.json").to_str().unwrap(),
                "--out",
                out_b.to_str().unwrap(),
            ])),
            EXIT_OK
        );
        for file in ["history.jsonl", "checkpoint.bin", "labels.txt", "metrics.json"] {
            assert_eq!(
                std::fs::read(out_a.join(file)).unwrap(),
                std::fs::read(out_b.join(file)).unwrap(),
                "{file} differs between identical runs"
            );
        }
    }

    #[test]
    fn spectral_and_kmeans_commands_run() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("labels.txt");
        assert_eq!(
            cli_main(&args(&[
                "spectral", "--synth", "blobs", "--n", "90", "--classes", "3", "--noise",
                "0.2", "--k", "3", "--knn-k", "8", "--out", out.to_str().unwrap(),
            ])),
            EXIT_OK
        );
        let labels = read_labels_file(&out).unwrap();
        assert_eq!(labels.len(), 90);

        assert_eq!(
            cli_main(&args(&[
                "kmeans", "--synth", "blobs", "--n", "90", "--classes", "3", "--k", "3",
            ])),
            EXIT_OK
        );
    }
}
