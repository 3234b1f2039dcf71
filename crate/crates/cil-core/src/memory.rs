//! Episodic replay memory: class-balanced reservoir storage plus the
//! new-data/memory mini-batch composition used by experience replay.
//!
//! Capacity is partitioned equally over the classes seen so far (quotas
//! differing by at most one). Within a class, examples are kept by reservoir
//! sampling, so every observed example of that class has asymptotically equal
//! retention probability regardless of arrival order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stream::LabeledExample;
use crate::tensor::Tensor;

/// Storage for one seen class.
#[derive(Clone, Debug)]
struct ClassSlot<T> {
    items: Vec<LabeledExample<T>>,
    /// Examples of this class ever offered to the memory (reservoir clock).
    seen: u64,
}

/// The episodic memory `M`.
#[derive(Clone, Debug)]
pub struct EpisodicMemory<T> {
    capacity: usize,
    slots: BTreeMap<usize, ClassSlot<T>>,
}

/// Per-class occupancy snapshot for run artifacts: `(stored, seen)` by class.
pub type MemoryAudit = BTreeMap<usize, (usize, u64)>;

impl<T: Scalar> EpisodicMemory<T> {
    pub fn new(capacity: usize) -> Self {
        EpisodicMemory {
            capacity,
            slots: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.values().map(|s| s.items.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seen_classes(&self) -> Vec<usize> {
        self.slots.keys().copied().collect()
    }

    /// Max items class `c` may hold under the current balanced partition:
    /// `capacity / C` with the remainder spread over the lowest class ids.
    fn quota(&self, c: usize) -> usize {
        let classes = self.slots.len();
        debug_assert!(classes > 0);
        let base = self.capacity / classes;
        let remainder = self.capacity % classes;
        let rank = self.slots.range(..c).count();
        base + usize::from(rank < remainder)
    }

    /// Absorbs a batch of examples: registers any new classes, re-partitions
    /// capacity over all seen classes (evicting uniformly at random from
    /// over-quota classes), then reservoir-samples each example into its
    /// class slot.
    pub fn update<R: Rng>(&mut self, examples: &[LabeledExample<T>], rng: &mut R) -> Result<()> {
        if examples.is_empty() {
            return Ok(());
        }
        for ex in examples {
            self.slots.entry(ex.label).or_insert_with(|| ClassSlot {
                items: Vec::new(),
                seen: 0,
            });
        }
        if self.capacity < self.slots.len() {
            return Err(Error::config(format!(
                "memory capacity {} cannot balance {} seen classes",
                self.capacity,
                self.slots.len()
            )));
        }

        // shrink classes that exceed their (possibly reduced) quota
        let quotas: BTreeMap<usize, usize> =
            self.slots.keys().map(|&c| (c, self.quota(c))).collect();
        for (&c, slot) in self.slots.iter_mut() {
            let quota = quotas[&c];
            while slot.items.len() > quota {
                let victim = rng.gen_range(0..slot.items.len());
                slot.items.swap_remove(victim);
            }
        }

        // per-class reservoir over the new arrivals
        for ex in examples {
            let quota = quotas[&ex.label];
            let slot = self.slots.get_mut(&ex.label).expect("registered above");
            slot.seen += 1;
            if slot.items.len() < quota {
                slot.items.push(ex.clone());
            } else if quota > 0 {
                let j = rng.gen_range(0..slot.seen);
                if (j as usize) < quota {
                    slot.items[j as usize] = ex.clone();
                }
            }
        }
        Ok(())
    }

    /// Draws `n` stored examples uniformly at random with replacement.
    /// An empty memory yields an empty draw.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<LabeledExample<T>> {
        let total = self.len();
        if total == 0 || n == 0 {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut r = rng.gen_range(0..total);
            for slot in self.slots.values() {
                if r < slot.items.len() {
                    out.push(slot.items[r].clone());
                    break;
                }
                r -= slot.items.len();
            }
        }
        out
    }

    /// Iterates stored examples in deterministic (class-ordered) layout.
    pub fn iter(&self) -> impl Iterator<Item = &LabeledExample<T>> {
        self.slots.values().flat_map(|s| s.items.iter())
    }

    /// Occupancy snapshot for artifacts and audits.
    pub fn audit(&self) -> MemoryAudit {
        self.slots
            .iter()
            .map(|(&c, s)| (c, (s.items.len(), s.seen)))
            .collect()
    }
}

/// A training mini-batch with stacked inputs.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub inputs: Tensor<T>,
    pub labels: Vec<usize>,
    /// Task ids are carried for auditing; the single-head learner never
    /// reads them.
    pub tasks: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stacks examples into one `[n] + input_shape` tensor.
    pub fn from_examples(examples: &[LabeledExample<T>]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::usage("cannot build an empty batch"));
        }
        let shape = examples[0].input.shape().to_vec();
        let item_len = examples[0].input.len();
        let mut data = Vec::with_capacity(examples.len() * item_len);
        let mut labels = Vec::with_capacity(examples.len());
        let mut tasks = Vec::with_capacity(examples.len());
        for ex in examples {
            if ex.input.shape() != shape {
                return Err(Error::input(format!(
                    "example shapes disagree: {:?} vs {:?}",
                    ex.input.shape(),
                    shape
                )));
            }
            data.extend_from_slice(ex.input.data());
            labels.push(ex.label);
            tasks.push(ex.task);
        }
        let mut full_shape = vec![examples.len()];
        full_shape.extend_from_slice(&shape);
        Ok(Batch {
            inputs: Tensor::from_vec(&full_shape, data)?,
            labels,
            tasks,
        })
    }
}

/// Composes the replay training batch: all of `new` plus `memory_n` items
/// sampled from memory (none when the memory is empty, as during the first
/// task), shuffled together.
pub fn compose_batch<T: Scalar, R: Rng>(
    new: &[LabeledExample<T>],
    memory: &EpisodicMemory<T>,
    memory_n: usize,
    rng: &mut R,
) -> Result<Batch<T>> {
    if new.is_empty() {
        return Err(Error::usage("composed batch needs at least one new item"));
    }
    let mut items: Vec<LabeledExample<T>> = new.to_vec();
    items.extend(memory.sample(memory_n, rng));
    items.shuffle(rng);
    Batch::from_examples(&items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ex(label: usize, value: f64) -> LabeledExample<f64> {
        LabeledExample {
            input: Tensor::from_vec(&[1], vec![value]).unwrap(),
            label,
            task: label / 2,
        }
    }

    fn examples(label: usize, n: usize, tag: f64) -> Vec<LabeledExample<f64>> {
        (0..n).map(|i| ex(label, tag + i as f64)).collect()
    }

    #[test]
    fn under_capacity_batch_is_stored_whole() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mem = EpisodicMemory::new(100);
        mem.update(&examples(3, 10, 0.0), &mut rng).unwrap();
        assert_eq!(mem.len(), 10);
        assert_eq!(mem.audit()[&3], (10, 10));
    }

    #[test]
    fn two_classes_split_capacity_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mem = EpisodicMemory::new(100);
        mem.update(&examples(0, 500, 0.0), &mut rng).unwrap();
        assert_eq!(mem.len(), 100);
        mem.update(&examples(1, 500, 1000.0), &mut rng).unwrap();
        let audit = mem.audit();
        assert_eq!(audit[&0].0, 50);
        assert_eq!(audit[&1].0, 50);
    }

    #[test]
    fn odd_capacity_quotas_differ_by_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mem = EpisodicMemory::new(101);
        for c in 0..3 {
            mem.update(&examples(c, 200, c as f64 * 1000.0), &mut rng)
                .unwrap();
        }
        let counts: Vec<usize> = mem.audit().values().map(|&(n, _)| n).collect();
        assert_eq!(counts.iter().sum::<usize>(), 101);
        let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(max - min <= 1, "counts {counts:?}");
    }

    #[test]
    fn capacity_smaller_than_class_count_is_a_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mem = EpisodicMemory::new(2);
        mem.update(&examples(0, 5, 0.0), &mut rng).unwrap();
        mem.update(&examples(1, 5, 10.0), &mut rng).unwrap();
        let batch = examples(2, 5, 20.0);
        assert!(matches!(
            mem.update(&batch, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn stored_items_are_a_subset_of_the_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mem = EpisodicMemory::new(13);
        let mut offered = Vec::new();
        for c in 0..4 {
            let batch = examples(c, 57, c as f64 * 10_000.0);
            offered.extend(batch.iter().map(|e| (e.label, e.input.data()[0])));
            mem.update(&batch, &mut rng).unwrap();
        }
        assert!(mem.len() <= 13);
        for item in mem.iter() {
            assert!(offered.contains(&(item.label, item.input.data()[0])));
        }
    }

    #[test]
    fn reservoir_retention_is_uniform_within_a_class() {
        // stream 1000 one-class items through capacity 50; each item should
        // be retained with probability 50/1000 over repeated seeded trials
        let trials = 200;
        let stream_len = 1000usize;
        let cap = 50usize;
        let mut hits = vec![0u32; stream_len];
        for trial in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let mut mem = EpisodicMemory::new(cap);
            mem.update(&examples(0, stream_len, 0.0), &mut rng).unwrap();
            assert_eq!(mem.len(), cap);
            for item in mem.iter() {
                hits[item.input.data()[0] as usize] += 1;
            }
        }
        // per-item retention ~ Binomial(trials, cap/stream_len). With 1000
        // items a 3-sigma bound per item would be overrun by chance alone
        // (expected ~2.7 outliers), so: 3 sigma on 100-item position buckets
        // (catches arrival-order bias) and 4.5 sigma per item.
        let p = cap as f64 / stream_len as f64;
        let item_mean = trials as f64 * p;
        let item_sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for (i, &h) in hits.iter().enumerate() {
            assert!(
                (h as f64 - item_mean).abs() <= 4.5 * item_sigma,
                "item {i}: retained {h} times, expected {item_mean:.1} ± {:.1}",
                4.5 * item_sigma
            );
        }
        let bucket = 100usize;
        let bucket_mean = item_mean * bucket as f64;
        let bucket_sigma = (trials as f64 * bucket as f64 * p * (1.0 - p)).sqrt();
        for (b, chunk) in hits.chunks_exact(bucket).enumerate() {
            let total: f64 = chunk.iter().map(|&h| h as f64).sum();
            assert!(
                (total - bucket_mean).abs() <= 3.0 * bucket_sigma,
                "positions {}..{}: {total} retentions, expected {bucket_mean:.0} ± {:.0}",
                b * bucket,
                (b + 1) * bucket,
                3.0 * bucket_sigma
            );
        }
    }

    #[test]
    fn sampling_single_item_memory_repeats_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mem = EpisodicMemory::new(10);
        mem.update(&examples(5, 1, 42.0), &mut rng).unwrap();
        let got = mem.sample(4, &mut rng);
        assert_eq!(got.len(), 4);
        assert!(got
            .iter()
            .all(|e| e.label == 5 && e.input.data()[0] == 42.0));
    }

    #[test]
    fn sampling_zero_or_from_empty_gives_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mem = EpisodicMemory::<f64>::new(10);
        assert!(mem.sample(4, &mut rng).is_empty());
        let mut mem2 = EpisodicMemory::new(10);
        mem2.update(&examples(0, 3, 0.0), &mut rng).unwrap();
        assert!(mem2.sample(0, &mut rng).is_empty());
    }

    #[test]
    fn sampling_is_uniform_over_stored_items() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mem = EpisodicMemory::new(10);
        mem.update(&examples(0, 5, 0.0), &mut rng).unwrap();
        mem.update(&examples(1, 5, 100.0), &mut rng).unwrap();
        assert_eq!(mem.len(), 10);
        let draws = 100_000usize;
        let mut freq: BTreeMap<(usize, u64), usize> = BTreeMap::new();
        for item in mem.sample(draws, &mut rng) {
            *freq
                .entry((item.label, item.input.data()[0].to_bits()))
                .or_default() += 1;
        }
        assert_eq!(freq.len(), 10);
        for (&key, &count) in &freq {
            let expected = draws as f64 / 10.0;
            assert!(
                (count as f64 - expected).abs() < 0.05 * expected,
                "item {key:?}: {count} draws vs {expected}"
            );
        }
    }

    #[test]
    fn composed_batch_is_all_new_when_memory_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mem = EpisodicMemory::<f64>::new(100);
        let new = examples(0, 64, 0.0);
        let batch = compose_batch(&new, &mem, 64, &mut rng).unwrap();
        assert_eq!(batch.len(), 64);
        assert!(batch.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn composed_batch_mixes_new_and_memory_items() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut mem = EpisodicMemory::new(100);
        mem.update(&examples(0, 50, 0.0), &mut rng).unwrap();
        mem.update(&examples(1, 50, 1000.0), &mut rng).unwrap();
        let new = examples(2, 64, 2000.0);
        let batch = compose_batch(&new, &mem, 64, &mut rng).unwrap();
        assert_eq!(batch.len(), 128);
        let new_count = batch.labels.iter().filter(|&&l| l == 2).count();
        let old_count = batch.labels.iter().filter(|&&l| l != 2).count();
        assert_eq!(new_count, 64);
        assert_eq!(old_count, 64);
    }

    #[test]
    fn composition_is_seed_deterministic() {
        let mut mem = EpisodicMemory::new(40);
        let mut seed_rng = ChaCha8Rng::seed_from_u64(0);
        mem.update(&examples(0, 100, 0.0), &mut seed_rng).unwrap();
        let new = examples(1, 8, 500.0);
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            compose_batch(&new, &mem, 8, &mut rng).unwrap()
        };
        let (a, b) = (run(9), run(9));
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.inputs.data(), b.inputs.data());
        let c = run(10);
        assert!(
            a.labels != c.labels || a.inputs.data() != c.inputs.data(),
            "different seeds should reorder the batch"
        );
    }

    #[test]
    fn batch_from_mismatched_shapes_is_an_input_error() {
        let a = ex(0, 1.0);
        let b = LabeledExample {
            input: Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap(),
            label: 0,
            task: 0,
        };
        assert!(matches!(
            Batch::from_examples(&[a, b]),
            Err(Error::Input(_))
        ));
    }
}
