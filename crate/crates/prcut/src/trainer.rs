//! The online probabilistic ratio-cut training loop.
//!
//! Each step draws two independent batches, evaluates the similarity block
//! between them, refreshes the moving-average cluster masses, and injects
//! the analytic bound gradient (plus the KL balance term) straight into the
//! network's backward pass. The assignment coefficients are treated as
//! constants during backpropagation, so the surrogate scalar loss is simply
//! `<dP, P>` per batch.

use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::graph::{
    kernel_block, knn_graph, label_block, zero_index_collisions, GraphError, KernelConfig,
    KernelKind, KnnMetric, Partition, SparseSimilarity,
};
use crate::model::{
    backward, forward, init_mlp, optimizer_step, MlpModel, MlpSpec, ModelError, OptimizerKind,
    OptimizerState,
};
use crate::objective::{
    kl_regularizer, lrc_grad, lrc_loss, update_pbar, ClusterMassState, GradMode, LossBreakdown,
    ObjectiveError,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("dataset of {n} points cannot supply two batches of {batch_size}")]
    DatasetTooSmall { n: usize, batch_size: usize },
    #[error("label-equality kernel needs a labeled dataset")]
    MissingLabels,
    #[error("cluster masses collapsed at step {step}: {message}")]
    Collapse {
        step: u64,
        message: String,
        history: Box<TrainHistory>,
    },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64, history: Box<TrainHistory> },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Everything one training run needs. Defaults follow the reproduction
/// hyperparameter table: beta 0.8, gamma 100, RMSProp at lr 1e-4 with
/// weight decay 1e-7, k-NN graphs with 100 neighbors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub k: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub beta: f64,
    pub gamma: f64,
    pub kernel: KernelConfig,
    pub knn_metric: KnnMetric,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub normalize_by_w_norm: bool,
    pub grad_mode: GradMode,
    /// Hidden widths of the assignment network; empty means a single
    /// linear layer into the softmax.
    pub hidden_widths: Vec<usize>,
    pub weight_norm_first_last: bool,
    /// Stop when the trailing 200-step loss window plateaus.
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 10,
            batch_size: 256,
            steps: 3000,
            beta: 0.8,
            gamma: 100.0,
            kernel: KernelConfig::knn(100),
            knn_metric: KnnMetric::Euclidean,
            optimizer: OptimizerKind::RmsProp,
            lr: 1e-4,
            weight_decay: 1e-7,
            seed: 0,
            normalize_by_w_norm: true,
            grad_mode: GradMode::Analytic,
            hidden_widths: vec![512, 512],
            weight_norm_first_last: true,
            early_stop: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.k < 2 {
            return Err(TrainError::InvalidConfig("k must be at least 2".into()));
        }
        if self.batch_size < 2 {
            return Err(TrainError::InvalidConfig(
                "batch size must be at least 2".into(),
            ));
        }
        if self.steps == 0 {
            return Err(TrainError::InvalidConfig("steps must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if self.gamma < 0.0 {
            return Err(TrainError::InvalidConfig(format!(
                "gamma must be nonnegative, got {}",
                self.gamma
            )));
        }
        self.kernel.validate().map_err(TrainError::InvalidConfig)
    }

    /// The full network spec for a dataset of dimension `input_dim`.
    pub fn model_spec(&self, input_dim: usize) -> Result<MlpSpec, ModelError> {
        let mut widths = Vec::with_capacity(self.hidden_widths.len() + 2);
        widths.push(input_dim);
        widths.extend(&self.hidden_widths);
        widths.push(self.k);
        MlpSpec::new(widths, self.weight_norm_first_last)
    }
}

/// Per-step records of one run. Wall-clock timings stay in memory only; the
/// serialized history must be reproducible byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<LossBreakdown>,
    pub final_pbar: Vec<f64>,
    pub wall_clock_per_step: Vec<f64>,
}

impl TrainHistory {
    pub fn steps_run(&self) -> usize {
        self.records.len()
    }

    /// One JSON object per line, in step order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("loss records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Precomputed similarity source for batch blocks.
enum KernelState {
    Graph(SparseSimilarity),
    Labels(Vec<usize>),
    Features,
}

/// Run the online training loop.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainHistory), TrainError> {
    cfg.validate()?;
    let n = dataset.n();
    if n < 2 * cfg.batch_size {
        return Err(TrainError::DatasetTooSmall {
            n,
            batch_size: cfg.batch_size,
        });
    }

    let kernel_state = match cfg.kernel.kind {
        KernelKind::KnnAdjacency => KernelState::Graph(knn_graph(
            dataset.features.view(),
            cfg.kernel.k_neighbors,
            cfg.knn_metric,
        )?),
        KernelKind::LabelEquality => KernelState::Labels(
            dataset
                .labels
                .clone()
                .ok_or(TrainError::MissingLabels)?,
        ),
        KernelKind::ExpCosine => KernelState::Features,
    };

    let spec = cfg.model_spec(dataset.dim())?;
    let mut model = init_mlp(&spec, cfg.seed);
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.lr, cfg.weight_decay, model.num_params());
    let mut mass = ClusterMassState::new(cfg.k, cfg.beta);

    // Batch sampling gets its own RNG stream so it cannot interact with
    // the parameter initialization draws.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut history = TrainHistory {
        records: Vec::with_capacity(cfg.steps),
        final_pbar: mass.pbar().to_vec(),
        wall_clock_per_step: Vec::with_capacity(cfg.steps),
    };

    run_loop(
        dataset,
        cfg,
        &kernel_state,
        &mut model,
        &mut opt,
        &mut mass,
        &mut rng,
        &mut history,
    )?;
    history.final_pbar = mass.pbar().to_vec();
    Ok((model, history))
}

#[allow(clippy::too_many_arguments)]
fn run_loop(
    dataset: &Dataset,
    cfg: &TrainConfig,
    kernel_state: &KernelState,
    model: &mut MlpModel,
    opt: &mut OptimizerState,
    mass: &mut ClusterMassState,
    rng: &mut ChaCha8Rng,
    history: &mut TrainHistory,
) -> Result<(), TrainError> {
    let n = dataset.n();
    let b = cfg.batch_size;
    let k = cfg.k;

    for step in 1..=cfg.steps as u64 {
        let started = Instant::now();
        let idx_left = rand::seq::index::sample(rng, n, b).into_vec();
        let idx_right = rand::seq::index::sample(rng, n, b).into_vec();

        let mut w_block = match kernel_state {
            KernelState::Graph(graph) => graph.block(&idx_left, &idx_right),
            KernelState::Labels(labels) => {
                let left: Vec<usize> = idx_left.iter().map(|&i| labels[i]).collect();
                let right: Vec<usize> = idx_right.iter().map(|&j| labels[j]).collect();
                label_block(&left, &right)
            }
            KernelState::Features => {
                let left = dataset.features.select(Axis(0), &idx_left);
                let right = dataset.features.select(Axis(0), &idx_right);
                kernel_block(left.view(), right.view(), &cfg.kernel, false)?
            }
        };
        zero_index_collisions(&mut w_block, &idx_left, &idx_right);
        let w_norm = w_block.sum();

        let x_left = dataset.features.select(Axis(0), &idx_left);
        let x_right = dataset.features.select(Axis(0), &idx_right);
        let (p_left, cache_left) = forward(model, x_left.view())?;
        let (p_right, cache_right) = forward(model, x_right.view())?;

        // Batch mass estimate: average of the two batch column means.
        let batch_mean: Vec<f64> = (0..k)
            .map(|l| {
                0.5 * (p_left.column(l).sum() + p_right.column(l).sum()) / b as f64
            })
            .collect();
        *mass = update_pbar(mass, &batch_mean);

        let abort = |message: String, history: &mut TrainHistory, collapse: bool| {
            let snapshot = Box::new(history.clone());
            if collapse {
                TrainError::Collapse {
                    step,
                    message,
                    history: snapshot,
                }
            } else {
                TrainError::NonFiniteLoss {
                    step,
                    history: snapshot,
                }
            }
        };

        let lrc = match lrc_loss(
            w_block.view(),
            p_left.view(),
            p_right.view(),
            mass.pbar(),
            cfg.normalize_by_w_norm,
        ) {
            Ok(value) => value,
            Err(err @ ObjectiveError::MassCollapse { .. }) => {
                return Err(abort(err.to_string(), history, true));
            }
            Err(err) => return Err(err.into()),
        };

        let (d_lrc_left, d_lrc_right) = lrc_grad(
            w_block.view(),
            p_left.view(),
            p_right.view(),
            mass.pbar(),
            b,
            cfg.grad_mode,
        )?;
        let grad_scale = if cfg.normalize_by_w_norm {
            if w_norm > 0.0 {
                1.0 / w_norm
            } else {
                0.0
            }
        } else {
            1.0
        };

        // KL balance term flows through the concatenated batch mean.
        let (kl, kl_grad) = kl_regularizer(&batch_mean, k);
        let kl_coeff = cfg.gamma / (2.0 * b as f64);

        let assemble = |d_lrc: &Array2<f64>| -> Array2<f64> {
            let mut d = d_lrc * grad_scale;
            for l in 0..k {
                let g = kl_coeff * kl_grad[l];
                d.column_mut(l).mapv_inplace(|v| v + g);
            }
            d
        };
        let d_left = assemble(&d_lrc_left);
        let d_right = assemble(&d_lrc_right);

        let total = lrc + cfg.gamma * kl;
        if !total.is_finite() {
            return Err(abort(format!("total loss {total}"), history, false));
        }

        let mut grads = backward(model, &cache_left, d_left.view())?;
        let grads_right = backward(model, &cache_right, d_right.view())?;
        for (g, gr) in grads.iter_mut().zip(&grads_right) {
            *g += gr;
        }
        optimizer_step(opt, model, &grads)?;

        history.records.push(LossBreakdown {
            step,
            lrc,
            kl,
            total,
            w_norm,
            pbar: mass.pbar().to_vec(),
        });
        history
            .wall_clock_per_step
            .push(started.elapsed().as_secs_f64());

        if cfg.early_stop && history.records.len() >= 400 && history.records.len().is_multiple_of(200) {
            let len = history.records.len();
            let recent: f64 = history.records[len - 200..]
                .iter()
                .map(|r| r.total)
                .sum::<f64>()
                / 200.0;
            let previous: f64 = history.records[len - 400..len - 200]
                .iter()
                .map(|r| r.total)
                .sum::<f64>()
                / 200.0;
            if (previous - recent).abs() <= 1e-4 * previous.abs().max(1e-12) {
                break;
            }
        }
    }
    Ok(())
}

/// Forward the whole dataset and take row-wise argmax assignments; ties
/// break toward the smaller cluster index.
pub fn predict(
    model: &MlpModel,
    dataset: &Dataset,
) -> Result<(Partition, crate::objective::AssignmentMatrix), TrainError> {
    let chunk = 2048;
    let n = dataset.n();
    let k = model.spec().output_dim();
    let mut probs = Array2::zeros((n, k));
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let x = dataset.features.select(Axis(0), &rows);
        let (p, _) = forward(model, x.view())?;
        for (local, row) in (start..end).enumerate() {
            for l in 0..k {
                probs[[row, l]] = p[[local, l]];
            }
        }
        start = end;
    }
    let labels: Vec<usize> = probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (l, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = l;
                }
            }
            best
        })
        .collect();
    let partition = Partition::new(labels, k)?;
    let assignment = crate::objective::AssignmentMatrix::new(probs)?;
    Ok((partition, assignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticKind};
    use crate::metrics::unsupervised_accuracy;
    use ndarray::array;

    fn quick_config() -> TrainConfig {
        TrainConfig {
            k: 2,
            batch_size: 16,
            steps: 30,
            kernel: KernelConfig::knn(5),
            hidden_widths: vec![16],
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = quick_config();
        cfg.k = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = quick_config();
        cfg.beta = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = quick_config();
        cfg.gamma = -1.0;
        assert!(cfg.validate().is_err());
        assert!(quick_config().validate().is_ok());
    }

    #[test]
    fn rejects_small_datasets_and_missing_labels() {
        let ds = make_synthetic(SyntheticKind::Blobs, 20, 0.2, 2, 0).unwrap();
        let cfg = quick_config();
        assert!(matches!(
            train(&ds, &cfg),
            Err(TrainError::DatasetTooSmall { .. })
        ));

        let mut unlabeled = make_synthetic(SyntheticKind::Blobs, 64, 0.2, 2, 0).unwrap();
        unlabeled.labels = None;
        let mut cfg = quick_config();
        cfg.kernel = KernelConfig::label_equality();
        assert!(matches!(
            train(&unlabeled, &cfg),
            Err(TrainError::MissingLabels)
        ));
    }

    #[test]
    fn histories_identical_under_same_seed() {
        let ds = make_synthetic(SyntheticKind::Blobs, 80, 0.3, 2, 3).unwrap();
        let cfg = quick_config();
        let (model_a, hist_a) = train(&ds, &cfg).unwrap();
        let (model_b, hist_b) = train(&ds, &cfg).unwrap();
        assert_eq!(hist_a.records, hist_b.records);
        assert_eq!(model_a.flatten(), model_b.flatten());

        let mut other = cfg.clone();
        other.seed = 99;
        let (_, hist_c) = train(&ds, &other).unwrap();
        assert_ne!(hist_a.records, hist_c.records);
    }

    #[test]
    fn every_logged_pbar_is_a_distribution() {
        let ds = make_synthetic(SyntheticKind::Blobs, 80, 0.3, 2, 4).unwrap();
        let (_, hist) = train(&ds, &quick_config()).unwrap();
        assert_eq!(hist.steps_run(), 30);
        for record in &hist.records {
            let sum: f64 = record.pbar.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(record.pbar.iter().all(|&m| (0.0..=1.0).contains(&m)));
            assert!(record.total.is_finite());
        }
    }

    #[test]
    fn separable_blobs_reach_perfect_accuracy() {
        // Two well-separated 100-point blobs with the label kernel.
        let ds = make_synthetic(SyntheticKind::Blobs, 200, 0.3, 2, 7).unwrap();
        let cfg = TrainConfig {
            k: 2,
            batch_size: 32,
            steps: 500,
            kernel: KernelConfig::label_equality(),
            hidden_widths: vec![32],
            lr: 3e-3,
            optimizer: OptimizerKind::Adam,
            seed: 7,
            ..TrainConfig::default()
        };
        let (model, _) = train(&ds, &cfg).unwrap();
        let (partition, assignment) = predict(&model, &ds).unwrap();
        let truth = ds.labels.as_ref().unwrap();
        let acc = unsupervised_accuracy(truth, partition.labels(), 2).unwrap();
        assert!(acc >= 1.0, "accuracy {acc}");
        assert_eq!(assignment.n(), 200);
    }

    #[test]
    fn collapse_aborts_with_history() {
        // gamma = 0 removes the balance pressure; an extreme output bias
        // sends the first batch mean of cluster 1 to ~0 and beta = 1 makes
        // the first moving-average update adopt it outright.
        let ds = make_synthetic(SyntheticKind::Blobs, 80, 0.3, 2, 5).unwrap();
        let cfg = TrainConfig {
            k: 2,
            batch_size: 16,
            steps: 50,
            gamma: 0.0,
            beta: 1.0,
            kernel: KernelConfig::knn(5),
            hidden_widths: vec![8],
            ..TrainConfig::default()
        };
        // Reproduce the trainer's init path, nudge, and hand-run: easiest is
        // to train a model whose last-layer bias we cannot reach through the
        // public API, so instead check the collapse path via the objective
        // error surfaced by train on a rigged dataset-free call.
        let spec = cfg.model_spec(ds.dim()).unwrap();
        let mut rigged = init_mlp(&spec, cfg.seed);
        rigged.nudge_output_bias(0, 60.0);
        // Swap the rigged model in by replaying the loop manually.
        let mut opt = OptimizerState::new(cfg.optimizer, cfg.lr, cfg.weight_decay, rigged.num_params());
        let mut mass = ClusterMassState::new(cfg.k, cfg.beta);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let mut history = TrainHistory {
            records: Vec::new(),
            final_pbar: mass.pbar().to_vec(),
            wall_clock_per_step: Vec::new(),
        };
        let kernel_state = KernelState::Graph(
            knn_graph(ds.features.view(), 5, KnnMetric::Euclidean).unwrap(),
        );
        let err = run_loop(
            &ds,
            &cfg,
            &kernel_state,
            &mut rigged,
            &mut opt,
            &mut mass,
            &mut rng,
            &mut history,
        )
        .unwrap_err();
        match err {
            TrainError::Collapse { step, history, .. } => {
                assert_eq!(step, 1);
                assert_eq!(history.records.len(), 0);
            }
            other => panic!("expected collapse, got {other:?}"),
        }
    }

    #[test]
    fn predict_tie_breaks_to_smaller_index() {
        let spec = MlpSpec::new(vec![2, 2], false).unwrap();
        let mut model = init_mlp(&spec, 0);
        model.zero_last_layer();
        let ds = Dataset {
            name: "t".into(),
            features: array![[1.0, 2.0], [3.0, 4.0]],
            labels: None,
            source: "test".into(),
        };
        let (partition, assignment) = predict(&model, &ds).unwrap();
        // Zero weights give exactly uniform rows: a tie, resolved to 0.
        assert_eq!(partition.labels(), &[0, 0]);
        assert!((assignment.matrix()[[0, 0]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn history_jsonl_has_expected_fields() {
        let ds = make_synthetic(SyntheticKind::Blobs, 80, 0.3, 2, 4).unwrap();
        let mut cfg = quick_config();
        cfg.steps = 3;
        let (_, hist) = train(&ds, &cfg).unwrap();
        let jsonl = hist.to_jsonl();
        let first = jsonl.lines().next().unwrap();
        let value: serde_json::Value = serde_json::from_str(first).unwrap();
        for field in ["step", "lrc", "kl", "total", "w_norm", "pbar"] {
            assert!(value.get(field).is_some(), "missing {field}");
        }
    }
}
