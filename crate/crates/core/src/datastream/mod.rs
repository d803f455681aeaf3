//! Benchmark rows, their encoding, and the fold / client / round partitioning
//! used by the experiment protocol.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod load;
pub mod synthetic;

pub use load::{airlines_schema, load_dataset, parse_dataset, write_csv, DataFormat};

/// Name of the label column in both supported file formats.
pub const LABEL_COLUMN: &str = "Delay";

/// Binary target. Positive means the flight was delayed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryLabel {
    Negative,
    Positive,
}

impl BinaryLabel {
    pub const ALL: [BinaryLabel; 2] = [BinaryLabel::Negative, BinaryLabel::Positive];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            BinaryLabel::Negative => 0,
            BinaryLabel::Positive => 1,
        }
    }

    #[inline]
    pub fn from_index(index: usize) -> Self {
        if index == 0 {
            BinaryLabel::Negative
        } else {
            BinaryLabel::Positive
        }
    }

    pub fn is_positive(self) -> bool {
        self == BinaryLabel::Positive
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinaryLabel::Negative => f.write_str("0"),
            BinaryLabel::Positive => f.write_str("1"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Categorical,
    Numeric,
}

/// One input column. Categorical columns carry their encoding dictionary:
/// index `i` decodes to `values[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub values: Vec<String>,
}

impl FeatureSpec {
    pub fn categorical(name: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical,
            values: Vec::new(),
        }
    }

    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Numeric,
            values: Vec::new(),
        }
    }

    /// Number of distinct encoded values; `None` for numeric columns.
    pub fn cardinality(&self) -> Option<usize> {
        match self.kind {
            FeatureKind::Categorical => Some(self.values.len()),
            FeatureKind::Numeric => None,
        }
    }

    pub fn decode(&self, index: u32) -> Option<&str> {
        self.values.get(index as usize).map(String::as_str)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>) -> Self {
        Schema { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.features.iter().map(|f| f.kind).collect()
    }

    /// Checks arity, kinds, and that categorical indices are in range.
    pub fn check(&self, sample: &Sample) -> Result<()> {
        if sample.values.len() != self.features.len() {
            return Err(Error::invalid(format!(
                "sample has {} values, schema has {} features",
                sample.values.len(),
                self.features.len()
            )));
        }
        for (spec, value) in self.features.iter().zip(&sample.values) {
            match (spec.kind, value) {
                (FeatureKind::Categorical, FeatureValue::Categorical(i)) => {
                    if *i as usize >= spec.values.len() {
                        return Err(Error::invalid(format!(
                            "{}: index {} out of range for cardinality {}",
                            spec.name,
                            i,
                            spec.values.len()
                        )));
                    }
                }
                (FeatureKind::Numeric, FeatureValue::Numeric(_)) => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "{}: value kind does not match schema",
                        spec.name
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Categorical(u32),
    Numeric(f64),
}

impl FeatureValue {
    /// Bytes this value occupies when a sample is shipped to the server:
    /// one tag byte plus a `u32` index or an `f64`.
    pub fn wire_size(&self) -> usize {
        match self {
            FeatureValue::Categorical(_) => 1 + 4,
            FeatureValue::Numeric(_) => 1 + 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<FeatureValue>,
    pub label: Option<BinaryLabel>,
}

impl Sample {
    pub fn labeled(values: Vec<FeatureValue>, label: BinaryLabel) -> Self {
        Sample {
            values,
            label: Some(label),
        }
    }

    pub fn unlabeled(values: Vec<FeatureValue>) -> Self {
        Sample {
            values,
            label: None,
        }
    }

    /// Copy with the ground-truth label removed.
    pub fn without_label(&self) -> Self {
        Sample {
            values: self.values.clone(),
            label: None,
        }
    }

    /// Size of the feature payload sent with a label request.
    pub fn wire_size(&self) -> usize {
        self.values.iter().map(FeatureValue::wire_size).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_samples: usize,
    pub n_negative: usize,
    pub n_positive: usize,
    /// Share of negatives among all labeled samples.
    pub class_ratio: f64,
    /// Minority count over majority count.
    pub imbalance_ratio: f64,
    /// Per feature; `None` for numeric columns.
    pub cardinalities: Vec<Option<usize>>,
}

pub fn dataset_stats(dataset: &Dataset) -> Result<DatasetStats> {
    if dataset.is_empty() {
        return Err(Error::invalid("dataset_stats on an empty dataset"));
    }
    let mut counts = [0usize; 2];
    for sample in &dataset.samples {
        let label = sample
            .label
            .ok_or_else(|| Error::invalid("dataset_stats needs labeled samples"))?;
        counts[label.index()] += 1;
    }
    let total = counts[0] + counts[1];
    let (lo, hi) = (counts[0].min(counts[1]), counts[0].max(counts[1]));
    Ok(DatasetStats {
        n_samples: dataset.len(),
        n_negative: counts[0],
        n_positive: counts[1],
        class_ratio: counts[0] as f64 / total as f64,
        imbalance_ratio: lo as f64 / hi as f64,
        cardinalities: dataset
            .schema
            .features
            .iter()
            .map(FeatureSpec::cardinality)
            .collect(),
    })
}

/// Samples one client collected between two aggregation rounds. Round 0 is
/// the fully labeled seed chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundChunk<T = Sample> {
    pub client_id: usize,
    pub round: usize,
    pub samples: Vec<T>,
}

/// SplitMix64 finalizer; derives independent stream seeds from one base seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.into_iter().map(|i| items[i].clone()).collect()
}

/// `parts` sizes summing to `n`, differing by at most one, larger ones first.
pub fn near_equal_sizes(n: usize, parts: usize) -> Vec<usize> {
    let (base, extra) = (n / parts, n % parts);
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

fn cut<T>(items: Vec<T>, sizes: &[usize]) -> Vec<Vec<T>> {
    let mut iter = items.into_iter();
    sizes
        .iter()
        .map(|&size| iter.by_ref().take(size).collect())
        .collect()
}

/// Random permutation under `seed`, split at the midpoint. The second fold
/// takes the odd element.
pub fn split_folds<T: Clone>(items: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples to split folds, got {}",
            items.len()
        )));
    }
    let mut permuted = shuffled(items, seed);
    let second = permuted.split_off(items.len() / 2);
    Ok((permuted, second))
}

/// Shuffles the fold and deals it into `clients` contiguous blocks.
pub fn partition_clients<T: Clone>(fold: &[T], clients: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if clients == 0 {
        return Err(Error::invalid("client count must be at least 1"));
    }
    if clients > fold.len() {
        return Err(Error::invalid(format!(
            "{clients} clients for a fold of {} samples",
            fold.len()
        )));
    }
    let sizes = near_equal_sizes(fold.len(), clients);
    Ok(cut(shuffled(fold, seed), &sizes))
}

/// Cuts a client stream into `rounds` contiguous chunks, in stream order.
pub fn chunk_rounds<T: Clone>(
    client_id: usize,
    stream: &[T],
    rounds: usize,
) -> Result<Vec<RoundChunk<T>>> {
    if rounds == 0 {
        return Err(Error::invalid("round count must be at least 1"));
    }
    if rounds > stream.len() {
        return Err(Error::invalid(format!(
            "{rounds} rounds for a stream of {} samples",
            stream.len()
        )));
    }
    let sizes = near_equal_sizes(stream.len(), rounds);
    Ok(cut(stream.to_vec(), &sizes)
        .into_iter()
        .enumerate()
        .map(|(round, samples)| RoundChunk {
            client_id,
            round,
            samples,
        })
        .collect())
}
