//! Federated active forest.
//!
//! Clients grow online decision trees from unlabeled streams and buy labels,
//! under a per-client request budget, from a server-side majority-voting
//! ensemble of all client trees. The crate holds the learner, the ensemble,
//! the round protocol, metrics and the sweep harness; the `fedaf` binary in
//! `fedaf-cli` is a thin front end over [`sweep`].

pub mod datastream;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod federation;
pub mod sweep;
pub mod tree;

pub use datastream::{
    BinaryLabel, DataFormat, Dataset, DatasetStats, FeatureKind, FeatureSpec, FeatureValue,
    RoundChunk, Sample, Schema,
};
pub use ensemble::{ForestModel, ForestOracle, TiePolicy};
pub use error::{Error, Result};
pub use evaluation::{ConfusionMatrix, MetricSummary, MetricsReport, Scope};
pub use federation::{CommLedger, ExperimentConfig, ExperimentReport, RoundRecord};
pub use sweep::{SweepParam, SweepSpec, SweepTable};
pub use tree::{Budget, LabelOracle, SplitDecision, TreeConfig, TreeModel};
