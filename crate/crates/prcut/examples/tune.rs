use prcut::data::{make_synthetic, SyntheticKind};
use prcut::graph::{knn_graph, KernelConfig, KnnMetric};
use prcut::baselines::spectral_clustering;
use prcut::metrics::{unsupervised_accuracy, rcut_metric};
use prcut::model::OptimizerKind;
use prcut::trainer::{train, predict, TrainConfig};
use std::time::Instant;

fn main() {
    let noise = 0.10;
    let ds = make_synthetic(SyntheticKind::TwoMoons, 2000, noise, 2, 7).unwrap();
    let g = knn_graph(ds.features.view(), 10, KnnMetric::Euclidean).unwrap();
    let truth = ds.labels.as_ref().unwrap();
    let spectral = spectral_clustering(&g, 2, 5, 0).unwrap();
    let (rc_spec, _) = rcut_metric(&g, spectral.labels()).unwrap();
    println!("spectral: acc {:.4} rc {:.5}", unsupervised_accuracy(truth, spectral.labels(), 2).unwrap(), rc_spec);

    for (lr, hidden, opt, steps) in [
        (1e-3, vec![128, 128], OptimizerKind::Adam, 3000),
        (1e-3, vec![64, 64], OptimizerKind::Adam, 3000),
        (3e-3, vec![128, 128], OptimizerKind::Adam, 3000),
        (1e-4, vec![128, 128], OptimizerKind::RmsProp, 3000),
    ] {
        let cfg = TrainConfig {
            k: 2,
            batch_size: 256,
            steps,
            kernel: KernelConfig::knn(10),
            hidden_widths: hidden.clone(),
            lr,
            optimizer: opt,
            seed: 1,
            ..TrainConfig::default()
        };
        let t = Instant::now();
        match train(&ds, &cfg) {
            Ok((model, hist)) => {
                let (part, _) = predict(&model, &ds).unwrap();
                let acc = unsupervised_accuracy(truth, part.labels(), 2).unwrap();
                let (rc, _) = rcut_metric(&g, part.labels()).unwrap();
                let last = hist.records.last().unwrap();
                println!("lr {lr} hidden {hidden:?} {opt:?}: acc {acc:.4} rc {rc:.5} (ratio {:.3}) lrc {:.4} kl {:.5} in {:?}",
                    rc / rc_spec, last.lrc, last.kl, t.elapsed());
            }
            Err(e) => println!("lr {lr} hidden {hidden:?} {opt:?}: FAILED {e}"),
        }
    }
}
