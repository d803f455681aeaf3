//! Shared fixtures for the benchmarks.

use fedaf_core::datastream::synthetic::airlines_like;
use fedaf_core::{Dataset, FeatureKind, ForestModel, Sample, TreeConfig, TreeModel};

pub fn dataset(n: usize) -> Dataset {
    airlines_like(n, 0xbe7c)
}

/// A tree grown on labeled samples with the given grace period.
pub fn trained_tree(kinds: &[FeatureKind], samples: &[Sample], grace: usize) -> TreeModel {
    let mut tree = TreeModel::new(kinds.to_vec(), TreeConfig::with_grace(grace)).expect("valid config");
    for s in samples {
        tree.train_labeled(s).expect("labeled sample");
    }
    tree
}

/// `size` trees, each trained on its own slice of `samples`.
pub fn forest(kinds: &[FeatureKind], samples: &[Sample], size: usize) -> ForestModel {
    let per = samples.len() / size;
    let trees = samples.chunks(per).take(size).map(|c| trained_tree(kinds, c, 100)).collect();
    ForestModel::aggregate(trees, size, 0).expect("forest")
}

pub fn unlabeled(samples: &[Sample]) -> Vec<Sample> {
    samples.iter().map(Sample::without_label).collect()
}
