//! Runtime invariant suite behind `cil selftest`: fast checks of the
//! geometric, numeric and behavioural contracts the engine is built on.

use cil_core::engine::{run_stream, Method, Model, ModelBatchLoss, RunConfig};
use cil_core::head::{polygon_weights, simplex_weights, ClassifierHead, HeadKind};
use cil_core::memory::EpisodicMemory;
use cil_core::metrics::AccuracyMatrix;
use cil_core::nn::gradcheck::finite_diff_check;
use cil_core::nn::loss::softmax_cross_entropy;
use cil_core::nn::FeatureExtractor;
use cil_core::stream::{synthetic_blobs, LabeledExample};
use cil_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one named invariant check.
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Check {
            name,
            passed,
            detail,
        }
    }
}

/// Runs every check; the caller decides how to render them.
pub fn run_all() -> Vec<Check> {
    vec![
        simplex_geometry(),
        polygon_geometry(),
        softmax_loss(),
        gradient_check(),
        memory_balance(),
        metric_identity(),
        determinism_and_stationarity(),
        forgetting_and_replay(),
    ]
}

fn simplex_geometry() -> Check {
    let mut worst: f64 = 0.0;
    for k in [3usize, 5, 10, 50, 101] {
        let w = simplex_weights::<f64>(k).expect("k >= 2");
        let d = k - 1;
        let rows: Vec<&[f64]> = w.data().chunks(d).collect();
        let want = -1.0 / d as f64;
        let mut centroid = vec![0.0; d];
        for r in &rows {
            let norm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max((norm - 1.0).abs() * 10.0); // unit tol is 10x tighter
            for (c, v) in centroid.iter_mut().zip(*r) {
                *c += v / k as f64;
            }
        }
        worst = worst.max(centroid.iter().map(|v| v.abs()).fold(0.0, f64::max));
        for i in 0..k {
            for j in (i + 1)..k {
                let dot: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| a * b).sum();
                worst = worst.max((dot - want).abs());
            }
        }
    }
    Check::new(
        "simplex-geometry",
        worst < 1e-5,
        format!("max deviation {worst:.2e} over K in {{3,5,10,50,101}} (limit 1e-5)"),
    )
}

fn polygon_geometry() -> Check {
    let k = 10usize;
    let w = polygon_weights::<f64>(k).expect("k >= 3");
    let rows: Vec<&[f64]> = w.data().chunks(2).collect();
    let mut worst: f64 = 0.0;
    for (i, r) in rows.iter().enumerate() {
        let norm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max((norm - 1.0).abs());
        let next = rows[(i + 1) % k];
        let dot: f64 = r.iter().zip(next).map(|(a, b)| a * b).sum();
        let step = (2.0 * std::f64::consts::PI / k as f64).cos();
        worst = worst.max((dot - step).abs());
    }
    Check::new(
        "polygon-geometry",
        worst < 1e-12,
        format!("decagon unit rows and 36-degree steps, max deviation {worst:.2e}"),
    )
}

fn softmax_loss() -> Check {
    let logits = Tensor::from_vec(&[2, 10], vec![0.0f64; 20]).unwrap();
    let (loss, grad) = softmax_cross_entropy(&logits, &[3, 7]).unwrap();
    let uniform_err = (loss - (10.0f64).ln()).abs();
    let mut row_sum_err: f64 = 0.0;
    for row in grad.data().chunks(10) {
        row_sum_err = row_sum_err.max(row.iter().sum::<f64>().abs());
    }
    let ok = uniform_err < 1e-12 && row_sum_err < 1e-6;
    Check::new(
        "softmax-cross-entropy",
        ok,
        format!("uniform-logit loss off by {uniform_err:.2e}; gradient row sums within {row_sum_err:.2e}"),
    )
}

fn gradient_check() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extractor = FeatureExtractor::<f64>::mlp(6, 12, 4, &mut rng);
        let head = ClassifierHead::new(HeadKind::TrainablePreallocated, 5, 4, &mut rng).unwrap();
        let model = Model::new(extractor, head).unwrap();
        let inputs =
            Tensor::from_vec(&[3, 6], (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut target = ModelBatchLoss {
            model,
            inputs,
            labels: vec![0, 2, 4],
        };
        match finite_diff_check(&mut target, 1e-5) {
            Ok(report) => worst = worst.max(report.max_rel_err),
            Err(e) => {
                return Check::new("gradient-check", false, format!("check failed to run: {e}"))
            }
        }
    }
    Check::new(
        "gradient-check",
        worst < 1e-3,
        format!("max relative error {worst:.2e} over 3 seeds (limit 1e-3)"),
    )
}

fn memory_balance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mem = EpisodicMemory::new(20);
    let mut items = Vec::new();
    for class in 0..3usize {
        for i in 0..30 {
            items.push(LabeledExample {
                input: Tensor::from_vec(&[1], vec![(class * 100 + i) as f32]).unwrap(),
                label: class,
                task: 0,
            });
        }
    }
    if let Err(e) = mem.update(&items, &mut rng) {
        return Check::new("memory-balance", false, format!("update failed: {e}"));
    }
    let audit = mem.audit();
    let counts: Vec<usize> = audit.values().map(|&(stored, _)| stored).collect();
    // 20 over 3 classes: quotas 7/7/6
    let ok = mem.len() == 20 && counts == vec![7, 7, 6];
    Check::new(
        "memory-balance",
        ok,
        format!("capacity 20 over 3 classes stored {counts:?} (want [7, 7, 6])"),
    )
}

fn metric_identity() -> Check {
    let mut matrix = AccuracyMatrix::new(3);
    matrix.push_row(vec![0.75]).unwrap();
    matrix.push_row(vec![0.5, 1.0]).unwrap();
    matrix.push_row(vec![0.25, 0.75, 0.875]).unwrap();
    let last = *matrix.evolution_curve().last().unwrap();
    let final_avg = matrix.final_average_accuracy().unwrap();
    let ok = final_avg == last && final_avg == 0.625;
    Check::new(
        "metric-identity",
        ok,
        format!("final average {final_avg} vs last evolution point {last} (must be equal exactly)"),
    )
}

fn determinism_and_stationarity() -> Check {
    let stream = synthetic_blobs::<f32>(3, 2, 8, 8.0, 40, 5).unwrap();
    let cfg = RunConfig {
        memory_capacity: 60,
        epochs_per_task: 8,
        new_batch: 16,
        memory_batch: 16,
        seed: 3,
        ..RunConfig::default()
    };
    let a = run_stream(&stream, &cfg).unwrap();
    let b = run_stream(&stream, &cfg).unwrap();
    let identical = a.matrix == b.matrix;
    let stationary = a.head_initial == a.head_final;
    Check::new(
        "determinism-and-fixed-head",
        identical && stationary,
        format!("repeat run bit-identical: {identical}; fixed head rows unchanged: {stationary}"),
    )
}

fn forgetting_and_replay() -> Check {
    let stream = synthetic_blobs::<f32>(3, 2, 8, 8.0, 40, 11).unwrap();
    let base = RunConfig {
        method: Method::Expanding,
        epochs_per_task: 10,
        new_batch: 16,
        memory_batch: 16,
        seed: 4,
        ..RunConfig::default()
    };
    let without = run_stream(
        &stream,
        &RunConfig {
            memory_capacity: 0,
            ..base.clone()
        },
    )
    .unwrap();
    let with = run_stream(
        &stream,
        &RunConfig {
            memory_capacity: 120,
            ..base
        },
    )
    .unwrap();
    let forgotten = without.matrix.rows().last().unwrap()[0];
    let retained = with.matrix.rows().last().unwrap()[0];
    let ok = forgotten <= 0.4 && retained >= 0.8;
    Check::new(
        "forgetting-and-replay",
        ok,
        format!(
            "task-1 accuracy after stream: {forgotten:.3} without memory (want <= 0.4), \
             {retained:.3} with replay (want >= 0.8)"
        ),
    )
}
