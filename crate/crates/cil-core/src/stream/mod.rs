//! Benchmark task streams: SplitMNIST-style class partitions, permuted-pixel
//! variants, and synthetic Gaussian blobs for fast tests.
//!
//! A stream is a fixed, ordered list of tasks with pairwise-disjoint class
//! sets. Construction is a pure function of (dataset bytes, config, seed).

pub mod idx;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

/// One stream item: an input tensor, its global class id, and the task it
/// belongs to. The learner trains single-headed and ignores the task id; it
/// is carried for bookkeeping only.
#[derive(Clone, Debug)]
pub struct LabeledExample<T> {
    pub input: Tensor<T>,
    pub label: usize,
    pub task: usize,
}

/// One task: its class set plus train and test examples.
#[derive(Clone, Debug)]
pub struct Task<T> {
    pub id: usize,
    pub classes: Vec<usize>,
    pub train: Vec<LabeledExample<T>>,
    pub test: Vec<LabeledExample<T>>,
}

/// An ordered task sequence with disjoint class sets.
#[derive(Clone, Debug)]
pub struct TaskStream<T> {
    tasks: Vec<Task<T>>,
    total_classes: usize,
    input_shape: Vec<usize>,
}

impl<T: Scalar> TaskStream<T> {
    fn new(tasks: Vec<Task<T>>, total_classes: usize, input_shape: Vec<usize>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for task in &tasks {
            for &c in &task.classes {
                if !seen.insert(c) {
                    return Err(Error::config(format!(
                        "class {c} appears in more than one task"
                    )));
                }
            }
        }
        if seen.len() != total_classes {
            return Err(Error::config(format!(
                "stream declares {total_classes} classes but tasks cover {}",
                seen.len()
            )));
        }
        Ok(TaskStream {
            tasks,
            total_classes,
            input_shape,
        })
    }

    pub fn tasks(&self) -> &[Task<T>] {
        &self.tasks
    }

    /// In-place access for tests that perturb task metadata; the class
    /// partition invariants are the caller's responsibility afterwards.
    #[cfg(test)]
    pub(crate) fn tasks_mut(&mut self) -> &mut [Task<T>] {
        &mut self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn total_classes(&self) -> usize {
        self.total_classes
    }

    /// Shape of a single input, excluding the batch dimension.
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }
}

/// A plain labeled dataset before any task structure is imposed.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub train: Vec<(Tensor<T>, usize)>,
    pub test: Vec<(Tensor<T>, usize)>,
    pub num_classes: usize,
    pub input_shape: Vec<usize>,
}

/// Loads the four-file MNIST directory layout
/// (`train-images-idx3-ubyte[.gz]`, `train-labels-idx1-ubyte[.gz]`,
/// `t10k-images-idx3-ubyte[.gz]`, `t10k-labels-idx1-ubyte[.gz]`),
/// keeping the official train/test split. Pixels are scaled to [0, 1];
/// images come out as `[1, rows, cols]` tensors.
pub fn load_mnist<T: Scalar>(dir: &Path) -> Result<Dataset<T>> {
    let train = idx::load_image_set(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte")?;
    let test = idx::load_image_set(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?;
    dataset_from_image_sets(train, test, 10)
}

/// Builds a dataset from already-parsed image sets. The two sets must share
/// one image geometry.
pub fn dataset_from_image_sets<T: Scalar>(
    train: idx::ImageSet,
    test: idx::ImageSet,
    num_classes: usize,
) -> Result<Dataset<T>> {
    if test.rows != train.rows || test.cols != train.cols {
        return Err(Error::input(format!(
            "train images are {}x{} but test images are {}x{}",
            train.rows, train.cols, test.rows, test.cols
        )));
    }
    let input_shape = vec![1, train.rows, train.cols];
    Ok(Dataset {
        train: image_set_to_examples(&train),
        test: image_set_to_examples(&test),
        num_classes,
        input_shape,
    })
}

fn image_set_to_examples<T: Scalar>(set: &idx::ImageSet) -> Vec<(Tensor<T>, usize)> {
    let plane = set.rows * set.cols;
    set.labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let pixels = normalize_pixels(&set.pixels[i * plane..(i + 1) * plane]);
            let t = Tensor::from_vec(&[1, set.rows, set.cols], pixels)
                .expect("rows*cols pixels per image");
            (t, label as usize)
        })
        .collect()
}

/// Maps raw byte pixels to floats in [0, 1] by dividing by 255.
pub fn normalize_pixels<T: Scalar>(bytes: &[u8]) -> Vec<T> {
    bytes.iter().map(|&b| cast(b as f64 / 255.0)).collect()
}

/// Partitions a dataset into tasks by class groups. Labels keep their global
/// ids; groups must be disjoint (they need not cover every dataset class).
pub fn split_tasks<T: Scalar>(
    dataset: &Dataset<T>,
    partition: &[Vec<usize>],
) -> Result<TaskStream<T>> {
    if partition.is_empty() {
        return Err(Error::config("partition must contain at least one task"));
    }
    let mut class_to_task = std::collections::BTreeMap::new();
    for (t, group) in partition.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::config(format!("task {t} has an empty class group")));
        }
        for &c in group {
            if c >= dataset.num_classes {
                return Err(Error::config(format!(
                    "class {c} not in dataset (has {} classes)",
                    dataset.num_classes
                )));
            }
            if class_to_task.insert(c, t).is_some() {
                return Err(Error::config(format!(
                    "class {c} appears in more than one task group"
                )));
            }
        }
    }

    let mut tasks: Vec<Task<T>> = partition
        .iter()
        .enumerate()
        .map(|(id, group)| Task {
            id,
            classes: group.clone(),
            train: Vec::new(),
            test: Vec::new(),
        })
        .collect();
    for (split, is_train) in [(&dataset.train, true), (&dataset.test, false)] {
        for (input, label) in split {
            if let Some(&t) = class_to_task.get(label) {
                let ex = LabeledExample {
                    input: input.clone(),
                    label: *label,
                    task: t,
                };
                if is_train {
                    tasks[t].train.push(ex);
                } else {
                    tasks[t].test.push(ex);
                }
            }
        }
    }
    let total = class_to_task.len();
    TaskStream::new(tasks, total, dataset.input_shape.clone())
}

/// Builds `t_count` tasks by applying a fixed pixel permutation per task.
/// Task 1 uses the identity; tasks 2..T use seeded random permutations.
/// Labels are remapped to disjoint global ids `y + C·(t−1)` where C is the
/// dataset's class count, and images are flattened to vectors (a permuted
/// image has no 2D structure worth convolving over).
pub fn permuted_tasks<T: Scalar>(
    dataset: &Dataset<T>,
    t_count: usize,
    seed: u64,
) -> Result<TaskStream<T>> {
    if t_count == 0 {
        return Err(Error::config("need at least one task"));
    }
    let dim: usize = dataset.input_shape.iter().product();
    let classes = dataset.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut tasks = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let perm: Vec<usize> = if t == 0 {
            (0..dim).collect()
        } else {
            let mut p: Vec<usize> = (0..dim).collect();
            p.shuffle(&mut rng);
            p
        };
        let remap = |split: &[(Tensor<T>, usize)]| -> Vec<LabeledExample<T>> {
            split
                .iter()
                .map(|(input, label)| {
                    let src = input.data();
                    let data: Vec<T> = perm.iter().map(|&j| src[j]).collect();
                    LabeledExample {
                        input: Tensor::from_vec(&[dim], data).expect("dim elements"),
                        label: label + classes * t,
                        task: t,
                    }
                })
                .collect()
        };
        tasks.push(Task {
            id: t,
            classes: (0..classes).map(|c| c + classes * t).collect(),
            train: remap(&dataset.train),
            test: remap(&dataset.test),
        });
    }
    TaskStream::new(tasks, classes * t_count, vec![dim])
}

/// Synthetic stream: each class is an isotropic unit-variance Gaussian in
/// R^`dim` whose mean sits at radius `separation` in a random direction.
/// Classes get disjoint global ids across tasks; each class's samples are
/// split 80/20 into train/test.
pub fn synthetic_blobs<T: Scalar>(
    t_count: usize,
    classes_per_task: usize,
    dim: usize,
    separation: f64,
    samples_per_class: usize,
    seed: u64,
) -> Result<TaskStream<T>> {
    if t_count == 0 || classes_per_task == 0 || dim == 0 || samples_per_class == 0 {
        return Err(Error::config("blob stream counts must all be positive"));
    }
    if separation < 0.0 || !separation.is_finite() {
        return Err(Error::config(format!(
            "separation must be a finite non-negative number, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let mut task = Task {
            id: t,
            classes: Vec::with_capacity(classes_per_task),
            train: Vec::new(),
            test: Vec::new(),
        };
        for k in 0..classes_per_task {
            let label = t * classes_per_task + k;
            task.classes.push(label);
            let mean = scaled_random_direction(dim, separation, &mut rng);
            let n_test = samples_per_class / 5;
            for i in 0..samples_per_class {
                let data: Vec<T> = mean.iter().map(|&m| cast(m + gaussian(&mut rng))).collect();
                let ex = LabeledExample {
                    input: Tensor::from_vec(&[dim], data).expect("dim elements"),
                    label,
                    task: t,
                };
                // last fifth of each class's draws becomes its test split
                if i < samples_per_class - n_test {
                    task.train.push(ex);
                } else {
                    task.test.push(ex);
                }
            }
        }
        tasks.push(task);
    }
    TaskStream::new(tasks, t_count * classes_per_task, vec![dim])
}

/// A uniformly random unit direction scaled to `radius`.
fn scaled_random_direction(dim: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.iter().map(|x| x / norm * radius).collect();
        }
    }
}

/// Standard normal draw via Box-Muller.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
