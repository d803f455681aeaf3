//! Client-side learner: an online binary decision tree that grows through
//! Hoeffding-bounded split decisions and, when a split is too close to call,
//! buys labels for its buffered samples from an oracle.
//!
//! Each leaf keeps class counts, per-feature sufficient statistics, and a
//! FIFO buffer of unlabeled samples (capacity = grace period). Every
//! `grace_period` arrivals at a leaf trigger a split check:
//!
//! * `G1`, `G2` are the best and second-best information gains, the
//!   no-split option counting as gain 0;
//! * `ε = sqrt(ln(1/δ) / 2n)` over the `n` labeled samples at the leaf
//!   (entropy range of one bit);
//! * split when `G1 - G2 > ε` or `ε < τ`; no split when `G1 = 0`;
//!   otherwise the decision is ambiguous by `ε - (G1 - G2)`.
//!
//! A leaf that has absorbed no labels at all is ambiguous by definition; this
//! is what lets children created after the seed phase learn from the oracle.
//! Children start with empty statistics; nothing is replayed into them.

use serde::{Deserialize, Serialize};

use crate::datastream::{BinaryLabel, FeatureKind, Sample};
use crate::error::{Error, Result};

mod budget;
mod stats;
mod wire;

pub use budget::Budget;
pub use stats::{
    entropy, hoeffding_bound, information_gain, split_gain, CandidateSplit, FeatureObserver,
    Gaussian, LeafStats, SplitTest, NUMERIC_CANDIDATES,
};
pub use wire::{deserialize_tree, serialize_tree, TREE_MAGIC, TREE_WIRE_VERSION};

/// Index into the tree's node arena.
pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Arrivals at a leaf between two split checks.
    pub grace_period: usize,
    /// δ of the Hoeffding bound.
    pub split_confidence: f64,
    /// τ: split anyway once ε falls below this.
    pub tie_threshold: f64,
    /// Unlabeled samples kept per leaf.
    pub buffer_cap: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig::with_grace(100)
    }
}

impl TreeConfig {
    pub fn with_grace(grace_period: usize) -> Self {
        TreeConfig {
            grace_period,
            split_confidence: 0.05,
            tie_threshold: 0.05,
            buffer_cap: grace_period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grace_period == 0 {
            return Err(Error::Config("grace period must be at least 1".into()));
        }
        if !(self.split_confidence > 0.0 && self.split_confidence < 1.0) {
            return Err(Error::Config(format!(
                "split confidence must be in (0, 1), got {}",
                self.split_confidence
            )));
        }
        if self.tie_threshold.is_nan() || self.tie_threshold < 0.0 {
            return Err(Error::Config(format!(
                "tie threshold must be >= 0, got {}",
                self.tie_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SplitDecision {
    Split(SplitTest),
    NoSplit,
    /// Best split not separable from the runner-up; `gap = ε - (G1 - G2)`.
    Ambiguous { gap: f64 },
}

/// Decides whether `stats` should split. Resets the leaf's check counter.
pub fn try_split(stats: &mut LeafStats, delta: f64, tau: f64) -> SplitDecision {
    stats.seen_since_check = 0;
    let n = stats.labeled_count();
    if n == 0 {
        return SplitDecision::Ambiguous { gap: f64::INFINITY };
    }
    let mut candidates: Vec<CandidateSplit> = (0..stats.observers.len())
        .filter_map(|f| stats.best_split(f))
        .collect();
    // Stable: equal gains keep the lower feature index first.
    candidates.sort_by(|a, b| b.gain.total_cmp(&a.gain));
    let Some(best) = candidates.first() else {
        return SplitDecision::NoSplit;
    };
    if best.gain <= 0.0 {
        return SplitDecision::NoSplit;
    }
    let runner_up = candidates.get(1).map_or(0.0, |c| c.gain.max(0.0));
    let margin = best.gain - runner_up;
    let epsilon = hoeffding_bound(1.0, delta, n).expect("delta validated by TreeConfig");
    if margin > epsilon || epsilon < tau {
        SplitDecision::Split(best.test.clone())
    } else {
        SplitDecision::Ambiguous {
            gap: epsilon - margin,
        }
    }
}

/// Source of labels for active requests.
pub trait LabelOracle {
    fn request_label(&self, sample: &Sample) -> Result<BinaryLabel>;
}

impl<F> LabelOracle for F
where
    F: Fn(&Sample) -> Result<BinaryLabel>,
{
    fn request_label(&self, sample: &Sample) -> Result<BinaryLabel> {
        self(sample)
    }
}

/// Outcome of feeding one unlabeled sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ObserveEvent {
    pub requests_made: u64,
    pub split_performed: bool,
    /// A split check wanted labels but the budget was empty.
    pub starved: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf(LeafStats),
    Split {
        /// Class counts the node held when it was a leaf.
        prior: [u64; 2],
        test: SplitTest,
        children: Vec<NodeId>,
    },
}

impl Node {
    pub fn counts(&self) -> [u64; 2] {
        match self {
            Node::Leaf(stats) => stats.class_counts,
            Node::Split { prior, .. } => *prior,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeModel {
    config: TreeConfig,
    kinds: Vec<FeatureKind>,
    nodes: Vec<Node>,
}

impl TreeModel {
    /// A tree limited to a root leaf.
    pub fn new(kinds: Vec<FeatureKind>, config: TreeConfig) -> Result<Self> {
        config.validate()?;
        let root = Node::Leaf(LeafStats::new(&kinds));
        Ok(TreeModel {
            config,
            kinds,
            nodes: vec![root],
        })
    }

    pub(crate) fn from_parts(kinds: Vec<FeatureKind>, nodes: Vec<Node>) -> Self {
        TreeModel {
            config: TreeConfig::default(),
            kinds,
            nodes,
        }
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: NodeId) -> usize {
            match &nodes[id] {
                Node::Leaf(_) => 0,
                Node::Split { children, .. } => {
                    1 + children.iter().map(|&c| walk(nodes, c)).max().unwrap_or(0)
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Labels absorbed over the tree's lifetime; each was absorbed by exactly
    /// one node while that node was a leaf.
    pub fn labeled_count(&self) -> u64 {
        self.nodes.iter().map(|n| n.counts()[0] + n.counts()[1]).sum()
    }

    pub fn leaf_of(&self, sample: &Sample) -> NodeId {
        let mut id = 0;
        while let Node::Split { test, children, .. } = &self.nodes[id] {
            id = children[test.branch(sample)];
        }
        id
    }

    pub fn leaf_stats(&self, id: NodeId) -> Option<&LeafStats> {
        match self.nodes.get(id)? {
            Node::Leaf(stats) => Some(stats),
            Node::Split { .. } => None,
        }
    }

    /// Majority class at the sample's leaf and its share. An empty leaf falls
    /// back to the nearest ancestor that saw labels; a tree with no labels
    /// at all answers negative at 0.5. Ties go to negative.
    pub fn classify(&self, sample: &Sample) -> (BinaryLabel, f64) {
        let mut id = 0;
        let mut informed: Option<[u64; 2]> = None;
        loop {
            let counts = self.nodes[id].counts();
            if counts[0] + counts[1] > 0 {
                informed = Some(counts);
            }
            match &self.nodes[id] {
                Node::Leaf(_) => break,
                Node::Split { test, children, .. } => id = children[test.branch(sample)],
            }
        }
        match informed {
            None => (BinaryLabel::Negative, 0.5),
            Some([neg, pos]) => {
                let total = (neg + pos) as f64;
                if pos > neg {
                    (BinaryLabel::Positive, pos as f64 / total)
                } else {
                    (BinaryLabel::Negative, neg as f64 / total)
                }
            }
        }
    }

    pub fn predict(&self, sample: &Sample) -> BinaryLabel {
        self.classify(sample).0
    }

    fn leaf_mut(&mut self, id: NodeId) -> &mut LeafStats {
        match &mut self.nodes[id] {
            Node::Leaf(stats) => stats,
            Node::Split { .. } => unreachable!("routing always ends at a leaf"),
        }
    }

    fn ensure_observers(&mut self, id: NodeId) {
        let kinds = self.kinds.clone();
        let stats = self.leaf_mut(id);
        if stats.observers.len() != kinds.len() {
            stats.observers = kinds.iter().map(|&k| FeatureObserver::new(k)).collect();
        }
    }

    fn check(&mut self, id: NodeId) -> SplitDecision {
        let (delta, tau) = (self.config.split_confidence, self.config.tie_threshold);
        try_split(self.leaf_mut(id), delta, tau)
    }

    fn apply_split(&mut self, id: NodeId, test: SplitTest) {
        let first_child = self.nodes.len();
        let arity = test.arity();
        for _ in 0..arity {
            self.nodes.push(Node::Leaf(LeafStats::new(&self.kinds)));
        }
        let prior = self.nodes[id].counts();
        self.nodes[id] = Node::Split {
            prior,
            test,
            children: (first_child..first_child + arity).collect(),
        };
    }

    /// Absorbs a labeled sample (seed phase). Returns whether a split
    /// happened. Ambiguous checks do not split: there is no oracle yet.
    pub fn train_labeled(&mut self, sample: &Sample) -> Result<bool> {
        let label = sample
            .label
            .ok_or_else(|| Error::invalid("train_labeled needs a labeled sample"))?;
        let id = self.leaf_of(sample);
        self.ensure_observers(id);
        let grace = self.config.grace_period;
        let stats = self.leaf_mut(id);
        stats.absorb(&sample.values, label);
        stats.seen_since_check += 1;
        if stats.seen_since_check >= grace {
            if let SplitDecision::Split(test) = self.check(id) {
                self.apply_split(id, test);
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Feeds one unlabeled sample. At a grace boundary an ambiguous leaf
    /// requests labels for its oldest buffered samples, as many as the
    /// budget allows, absorbs them and checks once more.
    pub fn observe(
        &mut self,
        sample: Sample,
        oracle: &dyn LabelOracle,
        budget: &mut Budget,
    ) -> Result<ObserveEvent> {
        if sample.label.is_some() {
            return Err(Error::invalid("observe takes unlabeled samples only"));
        }
        let mut event = ObserveEvent::default();
        let id = self.leaf_of(&sample);
        self.ensure_observers(id);
        let (grace, cap) = (self.config.grace_period, self.config.buffer_cap);
        let stats = self.leaf_mut(id);
        if cap > 0 {
            if stats.unlabeled_buffer.len() >= cap {
                stats.unlabeled_buffer.pop_front();
            }
            stats.unlabeled_buffer.push_back(sample);
        }
        stats.seen_since_check += 1;
        if stats.seen_since_check < grace {
            return Ok(event);
        }

        let mut decision = self.check(id);
        if let SplitDecision::Ambiguous { .. } = decision {
            let stats = self.leaf_mut(id);
            let wanted = (stats.unlabeled_buffer.len() as u64).min(budget.remaining());
            if wanted == 0 {
                event.starved = budget.remaining() == 0;
            } else {
                for _ in 0..wanted {
                    let pending = stats
                        .unlabeled_buffer
                        .pop_front()
                        .expect("wanted <= buffer length");
                    let label = oracle.request_label(&pending)?;
                    budget.spend(1)?;
                    event.requests_made += 1;
                    stats.absorb(&pending.values, label);
                }
                decision = self.check(id);
            }
        }
        if let SplitDecision::Split(test) = decision {
            self.apply_split(id, test);
            event.split_performed = true;
        }
        Ok(event)
    }

    /// Copy keeping structure and counts only, as the server sees it.
    pub fn snapshot(&self) -> TreeModel {
        TreeModel {
            config: self.config,
            kinds: self.kinds.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| match n {
                    Node::Leaf(stats) => Node::Leaf(LeafStats::frozen(stats.class_counts)),
                    split => split.clone(),
                })
                .collect(),
        }
    }
}
