//! Property tests for the class-balanced reservoir memory: an independent
//! model predicts occupancy exactly, and stored items are always a subset of
//! what was offered.

use std::collections::{BTreeMap, BTreeSet};

use cil_core::memory::EpisodicMemory;
use cil_core::stream::LabeledExample;
use cil_core::tensor::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn example(class: usize, uid: u32) -> LabeledExample<f32> {
    LabeledExample {
        input: Tensor::from_vec(&[1], vec![uid as f32]).unwrap(),
        label: class,
        task: 0,
    }
}

/// Independent re-statement of the balancing rule: capacity split evenly
/// over known classes, remainder to the lowest class ids.
fn quota(capacity: usize, classes: &BTreeSet<usize>, class: usize) -> usize {
    let c = classes.len();
    let rank = classes.iter().take_while(|&&k| k < class).count();
    capacity / c + usize::from(rank < capacity % c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn occupancy_matches_the_quota_model_exactly(
        seed in 0u64..1_000,
        capacity in 1usize..40,
        rounds in proptest::collection::vec(
            proptest::collection::btree_map(0usize..6, 1usize..25, 1..4),
            1..5,
        ),
    ) {
        let mut all_classes = BTreeSet::new();
        for r in &rounds {
            all_classes.extend(r.keys().copied());
        }
        prop_assume!(capacity >= all_classes.len());

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mem = EpisodicMemory::new(capacity);
        let mut offered: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
        let mut known = BTreeSet::new();
        let mut uid = 0u32;

        for round in &rounds {
            let mut batch = Vec::new();
            for (&class, &count) in round {
                for _ in 0..count {
                    batch.push(example(class, uid));
                    offered.entry(class).or_default().insert(uid);
                    uid += 1;
                }
            }
            known.extend(round.keys().copied());
            mem.update(&batch, &mut rng).unwrap();

            // stored-per-class is exactly min(quota, everything offered)
            let mut stored: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
            for item in mem.iter() {
                stored
                    .entry(item.label)
                    .or_default()
                    .insert(item.input.data()[0] as u32);
            }
            let mut expect_len = 0;
            for (&class, uids) in &offered {
                let q = quota(capacity, &known, class);
                let have = stored.get(&class).map_or(0, BTreeSet::len);
                let want = q.min(uids.len());
                prop_assert_eq!(
                    have, want,
                    "class {} stored {} expected {} (quota {}, offered {})",
                    class, have, want, q, uids.len()
                );
                expect_len += want;
                // subset property: nothing invented, nothing duplicated
                if let Some(s) = stored.get(&class) {
                    prop_assert!(s.is_subset(uids));
                }
            }
            prop_assert_eq!(mem.len(), expect_len);
            prop_assert!(mem.len() <= capacity);
        }
    }

    #[test]
    fn sampling_returns_only_stored_items(
        seed in 0u64..1_000,
        capacity in 1usize..30,
        counts in proptest::collection::btree_map(0usize..5, 1usize..20, 1..5),
        draw in 1usize..50,
    ) {
        prop_assume!(capacity >= counts.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mem = EpisodicMemory::new(capacity);
        let mut uid = 0u32;
        let mut batch = Vec::new();
        for (&class, &count) in &counts {
            for _ in 0..count {
                batch.push(example(class, uid));
                uid += 1;
            }
        }
        mem.update(&batch, &mut rng).unwrap();

        let stored: BTreeSet<u32> = mem
            .iter()
            .map(|item| item.input.data()[0] as u32)
            .collect();
        let sampled = mem.sample(draw, &mut rng);
        prop_assert_eq!(sampled.len(), draw);
        for item in &sampled {
            prop_assert!(stored.contains(&(item.input.data()[0] as u32)));
        }
    }

    #[test]
    fn updates_are_deterministic_under_a_fixed_seed(
        seed in 0u64..1_000,
        capacity in 2usize..30,
        counts in proptest::collection::btree_map(0usize..4, 1usize..30, 1..4),
    ) {
        prop_assume!(capacity >= counts.len());
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mem = EpisodicMemory::new(capacity);
            let mut uid = 0u32;
            let mut batch = Vec::new();
            for (&class, &count) in &counts {
                for _ in 0..count {
                    batch.push(example(class, uid));
                    uid += 1;
                }
            }
            mem.update(&batch, &mut rng).unwrap();
            let ids: Vec<u32> = mem.iter().map(|i| i.input.data()[0] as u32).collect();
            ids
        };
        prop_assert_eq!(build(), build());
    }
}
