//! The class-incremental training loop: sequential task learning with
//! replay, single-head evaluation after each task, and accuracy-matrix plus
//! feature-geometry bookkeeping.
//!
//! Tasks are consumed strictly one at a time through an iterator; while task
//! i is being learned, nothing later than task i is reachable, so the
//! no-lookahead contract holds by construction.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{ClassifierHead, HeadKind};
use crate::memory::{compose_batch, Batch, EpisodicMemory, MemoryAudit};
use crate::metrics::{AccuracyMatrix, ClassGeometry, GeometrySnapshot};
use crate::nn::adam::{AdamHyper, AdamState};
use crate::nn::gradcheck::GradCheckTarget;
use crate::nn::loss::softmax_cross_entropy;
use crate::nn::{ActivationSignature, FeatureExtractor, ForwardTrace, Gradients, Param, ParamKey};
use crate::scalar::Scalar;
use crate::stream::{LabeledExample, Task, TaskStream};
use crate::tensor::Tensor;

/// Which classifier design a run trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Fixed simplex head (the regular-polytope classifier).
    Rpc,
    /// Fixed 2D polygon head.
    Polygon,
    /// Conventional expanding trainable head.
    Expanding,
    /// All output nodes pre-allocated but trainable.
    ExpandingPreallocated,
}

impl Method {
    pub fn head_kind(self) -> HeadKind {
        match self {
            Method::Rpc => HeadKind::FixedSimplex,
            Method::Polygon => HeadKind::FixedPolygon,
            Method::Expanding => HeadKind::TrainableExpanding,
            Method::ExpandingPreallocated => HeadKind::TrainablePreallocated,
        }
    }

    /// Whether all `k_pre` output nodes exist from the start.
    pub fn is_preallocated(self) -> bool {
        !matches!(self, Method::Expanding)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rpc => "rpc",
            Method::Polygon => "polygon",
            Method::Expanding => "expanding",
            Method::ExpandingPreallocated => "expanding-preallocated",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rpc" => Ok(Method::Rpc),
            "polygon" => Ok(Method::Polygon),
            "expanding" => Ok(Method::Expanding),
            "expanding-preallocated" => Ok(Method::ExpandingPreallocated),
            other => Err(Error::config(format!(
                "unknown method '{other}' (expected rpc | polygon | expanding | expanding-preallocated)"
            ))),
        }
    }
}

/// Everything that defines a single training run besides the stream itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    /// Pre-allocated output node count; also sizes the feature space
    /// (`k_pre - 1` wide) for every non-polygon method so backbones match
    /// across methods.
    pub k_pre: usize,
    /// Episodic memory capacity |M|; 0 disables replay entirely.
    pub memory_capacity: usize,
    pub epochs_per_task: usize,
    /// New-data items per training step.
    pub new_batch: usize,
    /// Memory items sampled per training step (once memory is non-empty).
    pub memory_batch: usize,
    pub adam: AdamHyper,
    pub seed: u64,
    /// Restrict pre-allocated heads' predictions to already-seen classes.
    /// Off by default: prediction runs over all pre-allocated nodes.
    pub eval_mask_to_seen: bool,
    /// Hidden width of the fallback perceptron used for vector streams.
    pub mlp_hidden: usize,
    /// Evaluation forward-pass batch size.
    pub eval_batch: usize,
    /// Re-initialize optimizer moments at every task boundary instead of
    /// carrying them across the stream. On by default: each task is a fresh
    /// fitting phase, and stale second-moment estimates from earlier tasks
    /// measurably depress accuracy on class-incremental streams.
    pub reset_adam_per_task: bool,
    /// Feed new items into memory when they are first trained on (so replay
    /// can draw current-task items) instead of at end of task.
    pub online_memory_insertion: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Rpc,
            k_pre: 10,
            memory_capacity: 1100,
            epochs_per_task: 5,
            new_batch: 64,
            memory_batch: 64,
            adam: AdamHyper::default(),
            seed: 0,
            eval_mask_to_seen: false,
            mlp_hidden: 100,
            eval_batch: 256,
            reset_adam_per_task: true,
            online_memory_insertion: false,
        }
    }
}

impl RunConfig {
    /// Feature width implied by the method: simplex vertices live in
    /// `k_pre - 1` dimensions, polygons in 2. Trainable heads share the
    /// simplex sizing so every method trains the same backbone.
    pub fn feature_dim(&self) -> usize {
        match self.method {
            Method::Polygon => 2,
            _ => self.k_pre - 1,
        }
    }

    pub fn validate(&self, total_classes: usize) -> Result<()> {
        self.adam.validate()?;
        let min_k = match self.method {
            Method::Polygon => 3,
            _ => 2,
        };
        if self.k_pre < min_k {
            return Err(Error::config(format!(
                "method {} needs k_pre >= {min_k}, got {}",
                self.method, self.k_pre
            )));
        }
        if self.method.is_preallocated() && self.k_pre < total_classes {
            return Err(Error::config(format!(
                "k_pre = {} cannot pre-allocate a {total_classes}-class stream",
                self.k_pre
            )));
        }
        if self.epochs_per_task == 0 || self.new_batch == 0 || self.eval_batch == 0 {
            return Err(Error::config(
                "epochs_per_task, new_batch and eval_batch must be >= 1",
            ));
        }
        Ok(())
    }
}

/// Feature extractor plus classifier head.
#[derive(Clone, Debug)]
pub struct Model<T> {
    extractor: FeatureExtractor<T>,
    head: ClassifierHead<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(extractor: FeatureExtractor<T>, head: ClassifierHead<T>) -> Result<Self> {
        if extractor.output_dim() != head.feature_dim() {
            return Err(Error::config(format!(
                "extractor emits {}-wide features but head expects {}",
                extractor.output_dim(),
                head.feature_dim()
            )));
        }
        Ok(Model { extractor, head })
    }

    /// Builds the backbone-plus-head pair for a stream's input shape:
    /// the convolutional net for 1x28x28 images, a two-layer perceptron for
    /// flat vectors.
    pub fn build<R: Rng>(input_shape: &[usize], cfg: &RunConfig, rng: &mut R) -> Result<Self> {
        let feature_dim = cfg.feature_dim();
        let extractor = if input_shape == [1, 28, 28] {
            FeatureExtractor::lenet(feature_dim, rng)
        } else if input_shape.len() == 1 {
            FeatureExtractor::mlp(input_shape[0], cfg.mlp_hidden, feature_dim, rng)
        } else {
            return Err(Error::config(format!(
                "no backbone available for input shape {input_shape:?} \
                 (expected [1, 28, 28] images or flat vectors)"
            )));
        };
        let head = ClassifierHead::new(cfg.method.head_kind(), cfg.k_pre, feature_dim, rng)?;
        Model::new(extractor, head)
    }

    pub fn extractor(&self) -> &FeatureExtractor<T> {
        &self.extractor
    }

    pub fn head(&self) -> &ClassifierHead<T> {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut ClassifierHead<T> {
        &mut self.head
    }

    /// Features, logits, and the trace needed for a backward pass.
    pub fn forward(&self, inputs: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, ForwardTrace<T>)> {
        let (features, trace) = self.extractor.forward(inputs)?;
        let logits = self.head.logits(&features)?;
        Ok((features, logits, trace))
    }

    /// Gradients of every trainable parameter given `dlogits` and the
    /// matching forward trace.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        features: &Tensor<T>,
        dlogits: &Tensor<T>,
    ) -> Result<Gradients<T>> {
        let (head_grads, dfeatures) = self.head.backward(features, dlogits)?;
        let (mut by_key, _) = self.extractor.backward(trace, &dfeatures)?;
        by_key.extend(head_grads);
        Ok(Gradients { by_key })
    }

    pub fn params(&self) -> Vec<(ParamKey, &Param<T>)> {
        let mut out = self.extractor.params();
        out.extend(self.head.params());
        out
    }

    pub fn param(&self, key: ParamKey) -> Option<&Param<T>> {
        match key {
            ParamKey::ExtractorWeight(_) | ParamKey::ExtractorBias(_) => self.extractor.param(key),
            ParamKey::HeadWeight(_) | ParamKey::HeadBias(_) => self.head.param(key),
        }
    }

    pub fn param_mut(&mut self, key: ParamKey) -> Option<&mut Param<T>> {
        match key {
            ParamKey::ExtractorWeight(_) | ParamKey::ExtractorBias(_) => {
                self.extractor.param_mut(key)
            }
            ParamKey::HeadWeight(_) | ParamKey::HeadBias(_) => self.head.param_mut(key),
        }
    }

    /// Head weight rows as f64 for audits and artifacts.
    pub fn head_weight_rows(&self) -> Vec<Vec<f64>> {
        let w = self.head.weight_matrix().cast::<f64>();
        let d = self.head.feature_dim();
        w.data().chunks(d).map(|r| r.to_vec()).collect()
    }
}

/// A model frozen together with one batch, exposing the loss surface that
/// the finite-difference oracle probes.
pub struct ModelBatchLoss<T> {
    pub model: Model<T>,
    pub inputs: Tensor<T>,
    /// Node-index labels (for pre-allocated heads these equal class ids).
    pub labels: Vec<usize>,
}

impl<T: Scalar> GradCheckTarget<T> for ModelBatchLoss<T> {
    fn keys(&self) -> Vec<ParamKey> {
        self.model
            .params()
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(k, _)| *k)
            .collect()
    }

    fn param(&self, key: ParamKey) -> &Tensor<T> {
        &self.model.param(key).expect("key listed by keys()").value
    }

    fn param_mut(&mut self, key: ParamKey) -> &mut Tensor<T> {
        &mut self
            .model
            .param_mut(key)
            .expect("key listed by keys()")
            .value
    }

    fn loss(&self) -> Result<(f64, ActivationSignature)> {
        let (_, logits, trace) = self.model.forward(&self.inputs)?;
        let (loss, _) = softmax_cross_entropy(&logits, &self.labels)?;
        Ok((loss, trace.activation_signature()))
    }

    fn loss_and_grads(&self) -> Result<(f64, Gradients<T>)> {
        let (features, logits, trace) = self.model.forward(&self.inputs)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, &self.labels)?;
        Ok((loss, self.model.backward(&trace, &features, &dlogits)?))
    }
}

/// Per-task training telemetry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskLog {
    pub task: usize,
    pub steps: usize,
    pub epoch_mean_loss: Vec<f64>,
}

/// Everything a single run produces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutput {
    pub seed: u64,
    pub matrix: AccuracyMatrix,
    /// Per-stage average accuracy; last point equals `final_average`.
    pub evolution: Vec<f64>,
    pub final_average: f64,
    pub snapshots: Vec<GeometrySnapshot>,
    pub task_logs: Vec<TaskLog>,
    /// Head weight rows before any training step.
    pub head_initial: Vec<Vec<f64>>,
    /// Head weight rows at stream end.
    pub head_final: Vec<Vec<f64>>,
    pub memory_audit: MemoryAudit,
    /// Classes in first-seen order (the expanding head's node order).
    pub class_order: Vec<usize>,
}

/// Maps global class ids to head node indices. Pre-allocated heads use the
/// identity; the expanding head numbers classes in first-seen order.
#[derive(Clone, Debug, Default)]
struct ClassIndex {
    to_node: BTreeMap<usize, usize>,
    order: Vec<usize>,
}

impl ClassIndex {
    fn register(&mut self, class: usize) -> bool {
        if self.to_node.contains_key(&class) {
            return false;
        }
        self.to_node.insert(class, self.order.len());
        self.order.push(class);
        true
    }
}

struct Runner<'c, T> {
    cfg: &'c RunConfig,
    model: Model<T>,
    memory: EpisodicMemory<T>,
    adam: AdamState<T>,
    index: ClassIndex,
    seen: BTreeSet<usize>,
    rng: ChaCha8Rng,
}

impl<'c, T: Scalar> Runner<'c, T> {
    fn new(input_shape: &[usize], cfg: &'c RunConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = Model::build(input_shape, cfg, &mut rng)?;
        Ok(Runner {
            cfg,
            model,
            memory: EpisodicMemory::new(cfg.memory_capacity),
            adam: AdamState::new(cfg.adam)?,
            index: ClassIndex::default(),
            seen: BTreeSet::new(),
            rng,
        })
    }

    fn expanding(&self) -> bool {
        self.cfg.method == Method::Expanding
    }

    /// Registers a task's classes: validates labels, grows the expanding
    /// head, updates the class index.
    fn register_task(&mut self, task: &Task<T>) -> Result<()> {
        if task.train.is_empty() || task.test.is_empty() {
            return Err(Error::config(format!(
                "task {} needs both train and test items",
                task.id
            )));
        }
        let mut new_count = 0;
        for &c in &task.classes {
            if self.cfg.method.is_preallocated() && c >= self.cfg.k_pre {
                return Err(Error::config(format!(
                    "class {c} does not fit a head pre-allocated for {} classes",
                    self.cfg.k_pre
                )));
            }
            if self.index.register(c) {
                new_count += 1;
            }
            self.seen.insert(c);
        }
        if self.expanding() && new_count > 0 {
            self.model.head_mut().expand(new_count, &mut self.rng)?;
        }
        Ok(())
    }

    /// Head node index that the loss should target for a class id.
    fn node_label(&self, class: usize) -> Result<usize> {
        if self.expanding() {
            self.index
                .to_node
                .get(&class)
                .copied()
                .ok_or_else(|| Error::usage(format!("class {class} not registered yet")))
        } else {
            Ok(class)
        }
    }

    /// Class id predicted by head node `node`.
    fn predicted_class(&self, node: usize) -> usize {
        if self.expanding() {
            self.index.order[node]
        } else {
            node
        }
    }

    fn apply(&mut self, grads: &Gradients<T>) -> Result<()> {
        for (&key, grad) in &grads.by_key {
            let param = self
                .model
                .param_mut(key)
                .ok_or_else(|| Error::usage(format!("gradient for unknown parameter {key}")))?;
            debug_assert!(param.trainable, "backward produced a frozen-param gradient");
            self.adam.step_param(key, &mut param.value, grad)?;
        }
        Ok(())
    }

    fn train_step(&mut self, batch: &Batch<T>) -> Result<f64> {
        let node_labels: Vec<usize> = batch
            .labels
            .iter()
            .map(|&l| self.node_label(l))
            .collect::<Result<_>>()?;
        let (features, logits, trace) = self.model.forward(&batch.inputs)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, &node_labels)?;
        let grads = self.model.backward(&trace, &features, &dlogits)?;
        self.apply(&grads)?;
        Ok(loss)
    }

    fn train_task(&mut self, task: &Task<T>) -> Result<TaskLog> {
        if self.cfg.reset_adam_per_task {
            self.adam = AdamState::new(self.cfg.adam)?;
        }
        let mut log = TaskLog {
            task: task.id,
            steps: 0,
            epoch_mean_loss: Vec::with_capacity(self.cfg.epochs_per_task),
        };
        for epoch in 0..self.cfg.epochs_per_task {
            let mut order: Vec<usize> = (0..task.train.len()).collect();
            order.shuffle(&mut self.rng);
            let mut loss_sum = 0.0;
            let mut steps = 0usize;
            for chunk in order.chunks(self.cfg.new_batch) {
                let new_items: Vec<LabeledExample<T>> =
                    chunk.iter().map(|&i| task.train[i].clone()).collect();
                let batch = compose_batch(
                    &new_items,
                    &self.memory,
                    self.cfg.memory_batch,
                    &mut self.rng,
                )?;
                loss_sum += self.train_step(&batch)?;
                steps += 1;
                if self.cfg.online_memory_insertion && epoch == 0 && self.cfg.memory_capacity > 0 {
                    // each item enters the reservoir exactly once, when it
                    // is first trained on
                    self.memory.update(&new_items, &mut self.rng)?;
                }
            }
            log.epoch_mean_loss.push(loss_sum / steps as f64);
            log.steps += steps;
        }
        // default: end-of-task insertion, so that while task i trains the
        // memory holds only strictly older tasks and the batch split stays
        // new-vs-past
        if !self.cfg.online_memory_insertion && self.cfg.memory_capacity > 0 {
            self.memory.update(&task.train, &mut self.rng)?;
        }
        Ok(log)
    }

    /// Nodes eligible at prediction time, or `None` for "all nodes".
    fn eval_nodes(&self) -> Option<Vec<usize>> {
        if !self.expanding() && self.cfg.eval_mask_to_seen {
            Some(self.seen.iter().copied().collect())
        } else {
            None
        }
    }

    fn evaluate_task(&self, task: &Task<T>) -> Result<f64> {
        let allowed = self.eval_nodes();
        let mut correct = 0usize;
        for chunk in task.test.chunks(self.cfg.eval_batch) {
            let batch = Batch::from_examples(chunk)?;
            let (_, logits, _) = self.model.forward(&batch.inputs)?;
            let k = logits.cols();
            for (i, &label) in batch.labels.iter().enumerate() {
                let row = &logits.data()[i * k..(i + 1) * k];
                let best = match &allowed {
                    Some(nodes) => best_node(row, nodes.iter().copied()),
                    None => best_node(row, 0..k),
                };
                if let Some(node) = best {
                    if self.predicted_class(node) == label {
                        correct += 1;
                    }
                }
            }
        }
        Ok(correct as f64 / task.test.len() as f64)
    }

    fn evaluate_row(&self, past: &[&Task<T>]) -> Result<Vec<f64>> {
        past.iter().map(|t| self.evaluate_task(t)).collect()
    }

    fn snapshot(&self, past: &[&Task<T>], after_task: usize) -> Result<GeometrySnapshot> {
        let class_nodes: BTreeMap<usize, usize> = self
            .seen
            .iter()
            .map(|&c| self.node_label(c).map(|n| (c, n)))
            .collect::<Result<_>>()?;
        let items: Vec<&LabeledExample<T>> = past.iter().flat_map(|t| t.test.iter()).collect();
        geometry_snapshot(
            &self.model,
            &items,
            &class_nodes,
            after_task,
            self.cfg.eval_batch,
        )
    }
}

fn best_node(row: &[impl Scalar], nodes: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for n in nodes {
        match best {
            Some(b) if row[n] <= row[b] => {}
            _ => best = Some(n),
        }
    }
    best
}

/// Mean-feature directions and weight alignments for every class in
/// `class_nodes`, computed over `items`. Classes without usable items are
/// recorded as warnings rather than errors.
pub fn geometry_snapshot<T: Scalar>(
    model: &Model<T>,
    items: &[&LabeledExample<T>],
    class_nodes: &BTreeMap<usize, usize>,
    after_task: usize,
    batch: usize,
) -> Result<GeometrySnapshot> {
    let d = model.extractor().output_dim();
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for chunk in items.chunks(batch.max(1)) {
        let owned: Vec<LabeledExample<T>> = chunk.iter().map(|&e| e.clone()).collect();
        let b = Batch::from_examples(&owned)?;
        let (features, _) = model.extractor().forward(&b.inputs)?;
        for (i, &label) in b.labels.iter().enumerate() {
            if !class_nodes.contains_key(&label) {
                continue;
            }
            let (sum, count) = sums.entry(label).or_insert_with(|| (vec![0.0; d], 0));
            for (s, v) in sum.iter_mut().zip(&features.data()[i * d..(i + 1) * d]) {
                *s += v.to_f64().expect("finite feature");
            }
            *count += 1;
        }
    }

    let weights = model.head().weight_matrix().cast::<f64>();
    let mut snapshot = GeometrySnapshot {
        after_task,
        classes: BTreeMap::new(),
        warnings: Vec::new(),
    };
    for (&class, &node) in class_nodes {
        let Some((sum, count)) = sums.get(&class) else {
            snapshot
                .warnings
                .push(format!("class {class} skipped: no test items"));
            continue;
        };
        let mean: Vec<f64> = sum.iter().map(|s| s / *count as f64).collect();
        let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            snapshot
                .warnings
                .push(format!("class {class} skipped: degenerate mean feature"));
            continue;
        }
        let direction: Vec<f64> = mean.iter().map(|v| v / norm).collect();
        let wrow = &weights.data()[node * d..(node + 1) * d];
        let wnorm = wrow.iter().map(|v| v * v).sum::<f64>().sqrt();
        let alignment = if wnorm < 1e-12 {
            0.0
        } else {
            direction.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>() / wnorm
        };
        snapshot.classes.insert(
            class,
            ClassGeometry {
                direction,
                alignment,
            },
        );
    }
    Ok(snapshot)
}

/// Runs the full protocol over a stream.
pub fn run_stream<T: Scalar>(stream: &TaskStream<T>, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate(stream.total_classes())?;
    run_task_sequence(stream.tasks().iter(), stream.input_shape(), cfg)
}

/// Like [`run_stream`], but consuming tasks through an iterator so callers
/// can hand over tasks one at a time. Training of task i happens before the
/// next task is pulled; the total task count is never needed in advance.
pub fn run_task_sequence<'a, T: Scalar>(
    tasks: impl Iterator<Item = &'a Task<T>>,
    input_shape: &[usize],
    cfg: &RunConfig,
) -> Result<RunOutput> {
    let mut runner = Runner::new(input_shape, cfg)?;
    let head_initial = runner.model.head_weight_rows();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut snapshots = Vec::new();
    let mut task_logs = Vec::new();
    let mut past: Vec<&Task<T>> = Vec::new();
    for task in tasks {
        runner.register_task(task)?;
        task_logs.push(runner.train_task(task)?);
        past.push(task);
        rows.push(runner.evaluate_row(&past)?);
        snapshots.push(runner.snapshot(&past, task.id)?);
    }
    if rows.is_empty() {
        return Err(Error::config("stream contains no tasks"));
    }

    let matrix = AccuracyMatrix::from_rows(rows)?;
    let final_average = matrix.final_average_accuracy()?;
    let evolution = matrix.evolution_curve();
    Ok(RunOutput {
        seed: cfg.seed,
        matrix,
        evolution,
        final_average,
        snapshots,
        task_logs,
        head_initial,
        head_final: runner.model.head_weight_rows(),
        memory_audit: runner.memory.audit(),
        class_order: runner.index.order,
    })
}
