#![allow(dead_code)]

use fedaf_core::datastream::airlines_schema;
use fedaf_core::tree::Budget;
use fedaf_core::{BinaryLabel, FeatureKind, FeatureValue, ForestModel, Sample, TreeConfig, TreeModel};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn airline_kinds() -> Vec<FeatureKind> {
    airlines_schema().kinds()
}

/// Values drawn from small domains so trees actually branch on them.
pub fn random_values(rng: &mut impl Rng, kinds: &[FeatureKind]) -> Vec<FeatureValue> {
    kinds
        .iter()
        .map(|k| match k {
            FeatureKind::Categorical => FeatureValue::Categorical(rng.gen_range(0..6)),
            FeatureKind::Numeric => FeatureValue::Numeric(rng.gen_range(0.0..100.0)),
        })
        .collect()
}

pub fn random_probe(rng: &mut impl Rng, kinds: &[FeatureKind]) -> Sample {
    let mut values = random_values(rng, kinds);
    // Unseen categories exercise the default branch.
    for v in values.iter_mut() {
        if let FeatureValue::Categorical(c) = v {
            if rng.gen_bool(0.1) {
                *c = 7;
            }
        }
    }
    Sample::unlabeled(values)
}

/// A learnable rule with label noise.
pub fn rule_label(rng: &mut impl Rng, values: &[FeatureValue]) -> BinaryLabel {
    let mut score = 0.0;
    for v in values {
        score += match v {
            FeatureValue::Categorical(c) => (*c % 3) as f64 - 1.0,
            FeatureValue::Numeric(x) => (x - 50.0) / 50.0,
        };
    }
    let positive = (score > 0.0) ^ rng.gen_bool(0.15);
    BinaryLabel::from_index(positive as usize)
}

/// Seeds a tree on labeled data, then lets it grow further through the
/// active path with a noisy oracle.
pub fn grown_tree(rng: &mut ChaCha8Rng, kinds: &[FeatureKind], grace: usize, labeled: usize, unlabeled: usize) -> TreeModel {
    let mut tree = TreeModel::new(kinds.to_vec(), TreeConfig::with_grace(grace)).unwrap();
    for _ in 0..labeled {
        let values = random_values(rng, kinds);
        let label = rule_label(rng, &values);
        tree.train_labeled(&Sample::labeled(values, label)).unwrap();
    }
    let mut oracle_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let oracle_rng = std::cell::RefCell::new(&mut oracle_rng);
    let oracle = |s: &Sample| Ok(rule_label(*oracle_rng.borrow_mut(), &s.values));
    let mut budget = Budget::with_allowance(unlabeled as u64 / 3);
    for _ in 0..unlabeled {
        let values = random_values(rng, kinds);
        tree.observe(Sample::unlabeled(values), &oracle, &mut budget).unwrap();
    }
    tree
}

pub fn random_forest(rng: &mut ChaCha8Rng, kinds: &[FeatureKind], size: usize) -> ForestModel {
    let trees = (0..size)
        .map(|_| {
            let labeled = rng.gen_range(0..400);
            let unlabeled = rng.gen_range(0..300);
            let grace = rng.gen_range(10..60);
            grown_tree(rng, kinds, grace, labeled, unlabeled).snapshot()
        })
        .collect();
    ForestModel::aggregate(trees, size, 0).unwrap()
}
