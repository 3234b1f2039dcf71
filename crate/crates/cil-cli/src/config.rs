//! Experiment configuration: a TOML file describing the stream, the method,
//! the memory budget and the seeds to sweep.

use std::path::{Path, PathBuf};

use cil_core::engine::{Method, RunConfig};
use cil_core::nn::adam::AdamHyper;
use cil_core::stream::{load_mnist, permuted_tasks, split_tasks, synthetic_blobs, TaskStream};
use cil_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// The standard five-task digit-pair split.
pub fn default_partition() -> Vec<Vec<usize>> {
    vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7], vec![8, 9]]
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

/// Where the stream comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StreamSpec {
    /// Class-split digit tasks from an MNIST-layout directory.
    SplitMnist {
        data: PathBuf,
        #[serde(default = "default_partition")]
        partition: Vec<Vec<usize>>,
    },
    /// Pixel-permuted task sequence; task 1 is the unpermuted dataset.
    PermutedMnist {
        data: PathBuf,
        tasks: usize,
        #[serde(default)]
        stream_seed: u64,
    },
    /// Synthetic Gaussian blobs.
    Blobs {
        tasks: usize,
        classes_per_task: usize,
        dim: usize,
        separation: f64,
        samples_per_class: usize,
        #[serde(default)]
        stream_seed: u64,
    },
}

impl StreamSpec {
    /// Total classes the stream will expose, derivable without loading data.
    pub fn total_classes(&self) -> usize {
        match self {
            StreamSpec::SplitMnist { partition, .. } => partition.iter().map(Vec::len).sum(),
            StreamSpec::PermutedMnist { tasks, .. } => 10 * tasks,
            StreamSpec::Blobs {
                tasks,
                classes_per_task,
                ..
            } => tasks * classes_per_task,
        }
    }

    /// Builds the stream, resolving dataset paths relative to `base`.
    pub fn build(&self, base: &Path) -> Result<TaskStream<f32>> {
        match self {
            StreamSpec::SplitMnist { data, partition } => {
                let dataset = load_mnist(&base.join(data))?;
                split_tasks(&dataset, partition)
            }
            StreamSpec::PermutedMnist {
                data,
                tasks,
                stream_seed,
            } => {
                let dataset = load_mnist(&base.join(data))?;
                permuted_tasks(&dataset, *tasks, *stream_seed)
            }
            StreamSpec::Blobs {
                tasks,
                classes_per_task,
                dim,
                separation,
                samples_per_class,
                stream_seed,
            } => synthetic_blobs(
                *tasks,
                *classes_per_task,
                *dim,
                *separation,
                *samples_per_class,
                *stream_seed,
            ),
        }
    }
}

/// Training-loop knobs; every field has the protocol default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs_per_task: usize,
    pub new_batch: usize,
    pub memory_batch: usize,
    pub eval_batch: usize,
    pub eval_mask_to_seen: bool,
    pub mlp_hidden: usize,
    pub reset_adam_per_task: bool,
    pub online_memory_insertion: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let base = RunConfig::default();
        TrainSettings {
            epochs_per_task: base.epochs_per_task,
            new_batch: base.new_batch,
            memory_batch: base.memory_batch,
            eval_batch: base.eval_batch,
            eval_mask_to_seen: base.eval_mask_to_seen,
            mlp_hidden: base.mlp_hidden,
            reset_adam_per_task: base.reset_adam_per_task,
            online_memory_insertion: base.online_memory_insertion,
        }
    }
}

/// One experiment: a stream, a method, a memory budget, a seed sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment name; becomes the artifact directory name.
    pub name: String,
    pub method: Method,
    pub k_pre: usize,
    /// Episodic memory capacity |M|; 0 disables replay.
    pub memory: usize,
    pub seeds: Vec<u64>,
    /// Output root; overridden by the `CIL_OUTPUT_ROOT` environment variable.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub stream: StreamSpec,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub adam: AdamHyper,
}

impl ExperimentConfig {
    /// Parses and validates a TOML config file. Dataset paths inside the
    /// file resolve relative to the file's directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(Error::config(format!(
                "experiment name '{}' must be a plain directory name",
                self.name
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must list at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds contains duplicates"));
        }
        self.adam.validate()?;
        // run-level validation (k_pre vs class count, batch sizes) on the
        // cheaply derived class total, so bad configs fail before any I/O
        self.run_config(self.seeds[0])
            .validate(self.stream.total_classes())
    }

    /// The engine configuration for one seed of this experiment.
    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            method: self.method,
            k_pre: self.k_pre,
            memory_capacity: self.memory,
            epochs_per_task: self.train.epochs_per_task,
            new_batch: self.train.new_batch,
            memory_batch: self.train.memory_batch,
            adam: self.adam,
            seed,
            eval_mask_to_seen: self.train.eval_mask_to_seen,
            mlp_hidden: self.train.mlp_hidden,
            eval_batch: self.train.eval_batch,
            reset_adam_per_task: self.train.reset_adam_per_task,
            online_memory_insertion: self.train.online_memory_insertion,
        }
    }

    /// Output root honoring the `CIL_OUTPUT_ROOT` override.
    pub fn output_root(&self, base: &Path) -> PathBuf {
        match std::env::var_os("CIL_OUTPUT_ROOT") {
            Some(root) => PathBuf::from(root),
            None => base.join(&self.output),
        }
    }
}
