//! Server side: the majority-voting forest of client trees, which doubles as
//! the clients' label oracle.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datastream::{BinaryLabel, Sample};
use crate::error::{Error, Result};
use crate::tree::{deserialize_tree, serialize_tree, LabelOracle, TreeModel};

pub const FOREST_MAGIC: &[u8; 4] = b"FAFF";
pub const FOREST_WIRE_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// An even split of votes predicts the positive (delayed) class.
    #[default]
    FavorPositive,
}

/// Immutable ensemble built at the end of a round.
#[derive(Clone, Debug)]
pub struct ForestModel {
    trees: Vec<Arc<TreeModel>>,
    tie_policy: TiePolicy,
    round: usize,
}

impl ForestModel {
    /// Collects one snapshot per client into the forest for `round`.
    pub fn aggregate(snapshots: Vec<TreeModel>, clients: usize, round: usize) -> Result<Self> {
        if clients == 0 {
            return Err(Error::invalid("a forest needs at least one client"));
        }
        if snapshots.len() != clients {
            return Err(Error::invalid(format!(
                "round {round}: expected {clients} client trees, got {}",
                snapshots.len()
            )));
        }
        Ok(ForestModel {
            trees: snapshots.into_iter().map(Arc::new).collect(),
            tie_policy: TiePolicy::FavorPositive,
            round,
        })
    }

    pub fn trees(&self) -> &[Arc<TreeModel>] {
        &self.trees
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn tie_policy(&self) -> TiePolicy {
        self.tie_policy
    }

    /// `[negative, positive]` vote counts.
    pub fn vote_counts(&self, sample: &Sample) -> [usize; 2] {
        let mut counts = [0; 2];
        for tree in &self.trees {
            counts[tree.predict(sample).index()] += 1;
        }
        counts
    }

    pub fn vote(&self, sample: &Sample) -> BinaryLabel {
        resolve_votes(self.vote_counts(sample), self.tie_policy)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FOREST_MAGIC);
        out.extend_from_slice(&FOREST_WIRE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.round as u32).to_le_bytes());
        out.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        for tree in &self.trees {
            let bytes = serialize_tree(tree);
            out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = 4 + 2 + 4 + 4;
        if bytes.len() < header || &bytes[..4] != FOREST_MAGIC {
            return Err(Error::Decode("bad forest header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FOREST_WIRE_VERSION {
            return Err(Error::Decode(format!("unsupported forest wire version {version}")));
        }
        let round = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let mut pos = header;
        let mut trees = Vec::new();
        for _ in 0..count {
            let len_end = pos + 4;
            if len_end > bytes.len() {
                return Err(Error::Decode("truncated forest".into()));
            }
            let len = u32::from_le_bytes(bytes[pos..len_end].try_into().unwrap()) as usize;
            let end = len_end
                .checked_add(len)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::Decode("truncated forest".into()))?;
            trees.push(deserialize_tree(&bytes[len_end..end])?);
            pos = end;
        }
        if pos != bytes.len() {
            return Err(Error::Decode("trailing bytes after forest".into()));
        }
        ForestModel::aggregate(trees, count, round).map_err(|e| Error::Decode(e.to_string()))
    }
}

pub fn resolve_votes(counts: [usize; 2], policy: TiePolicy) -> BinaryLabel {
    match policy {
        TiePolicy::FavorPositive => {
            if counts[1] >= counts[0] {
                BinaryLabel::Positive
            } else {
                BinaryLabel::Negative
            }
        }
    }
}

/// Label-request counters shared by all clients within a round.
#[derive(Debug, Default)]
pub struct RequestTally {
    label_requests: AtomicU64,
    request_bytes: AtomicU64,
}

impl RequestTally {
    pub fn record(&self, bytes: usize) {
        self.label_requests.fetch_add(1, Ordering::Relaxed);
        self.request_bytes.fetch_add(bytes as u64, Ordering::Relaxed);
    }

    pub fn label_requests(&self) -> u64 {
        self.label_requests.load(Ordering::Relaxed)
    }

    pub fn request_bytes(&self) -> u64 {
        self.request_bytes.load(Ordering::Relaxed)
    }
}

/// Answers one label request with the forest vote and books it.
pub fn oracle_label(forest: &ForestModel, sample: &Sample, tally: &RequestTally) -> BinaryLabel {
    tally.record(sample.wire_size());
    forest.vote(sample)
}

/// [`LabelOracle`] view of a completed forest.
#[derive(Clone, Copy, Debug)]
pub struct ForestOracle<'a> {
    pub forest: &'a ForestModel,
    pub tally: &'a RequestTally,
}

impl LabelOracle for ForestOracle<'_> {
    fn request_label(&self, sample: &Sample) -> Result<BinaryLabel> {
        Ok(oracle_label(self.forest, sample, self.tally))
    }
}
