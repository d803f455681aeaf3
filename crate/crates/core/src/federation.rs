//! The round protocol: seed every client tree on its labeled chunk, then for
//! each round let clients learn from fresh unlabeled chunks against the
//! previous round's forest, and re-aggregate.
//!
//! Budget: each client starts with nothing and gains `floor(b * |chunk|)`
//! requests per post-seed chunk, so a client never asks for more than
//! `b` times its post-seed stream. Seed labels are free.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastream::{
    chunk_rounds, load_dataset, mix_seed, partition_clients, split_folds, DataFormat, Dataset,
    RoundChunk, Sample,
};
use crate::ensemble::{ForestModel, ForestOracle, RequestTally};
use crate::error::{Error, Result};
use crate::evaluation::{
    cross_validate, evaluate_forest_and_members, metrics, per_client_mean, Metric, MetricSummary,
    MetricsReport, Scope,
};
use crate::tree::{deserialize_tree, serialize_tree, Budget, TreeConfig, TreeModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub format: DataFormat,
    pub clients: usize,
    pub rounds: usize,
    /// Request budget as a fraction of each client's post-seed stream.
    pub budget: f64,
    pub grace: usize,
    pub delta: f64,
    pub tie_threshold: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::new(),
            format: DataFormat::Arff,
            clients: 5,
            rounds: 20,
            budget: 0.10,
            grace: 100,
            delta: 0.05,
            tie_threshold: 0.05,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn with_dataset(dataset: impl Into<PathBuf>, format: DataFormat) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            format,
            ..ExperimentConfig::default()
        }
    }

    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            grace_period: self.grace,
            split_confidence: self.delta,
            tie_threshold: self.tie_threshold,
            buffer_cap: self.grace,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::Config("clients must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.budget) {
            return Err(Error::Config(format!("budget must be in [0, 1], got {}", self.budget)));
        }
        self.tree_config().validate()
    }

    /// Command-line flags that reproduce this configuration.
    pub fn to_args(&self) -> Vec<String> {
        vec![
            "--dataset".into(),
            self.dataset.display().to_string(),
            "--format".into(),
            self.format.as_str().into(),
            "--clients".into(),
            self.clients.to_string(),
            "--rounds".into(),
            self.rounds.to_string(),
            "--budget".into(),
            self.budget.to_string(),
            "--grace".into(),
            self.grace.to_string(),
            "--delta".into(),
            self.delta.to_string(),
            "--tie-threshold".into(),
            self.tie_threshold.to_string(),
            "--seed".into(),
            self.seed.to_string(),
        ]
    }
}

/// Communication in one round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub model_uploads: u64,
    pub model_bytes: u64,
    pub label_requests: u64,
    pub request_bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub rounds: Vec<RoundRecord>,
}

impl CommLedger {
    pub fn label_requests(&self) -> u64 {
        self.rounds.iter().map(|r| r.label_requests).sum()
    }

    pub fn request_bytes(&self) -> u64 {
        self.rounds.iter().map(|r| r.request_bytes).sum()
    }

    pub fn model_uploads(&self) -> u64 {
        self.rounds.iter().map(|r| r.model_uploads).sum()
    }

    pub fn model_bytes(&self) -> u64 {
        self.rounds.iter().map(|r| r.model_bytes).sum()
    }

    fn push_round(&mut self, round: usize, snapshots: &[Vec<u8>], tally: &RequestTally) {
        self.rounds.push(RoundRecord {
            round,
            model_uploads: snapshots.len() as u64,
            model_bytes: snapshots.iter().map(|s| s.len() as u64).sum(),
            label_requests: tally.label_requests(),
            request_bytes: tally.request_bytes(),
        });
    }
}

/// One simulated client and its remaining rounds of data.
#[derive(Debug)]
pub struct ClientState<'a> {
    pub id: usize,
    pub tree: TreeModel,
    pub budget: Budget,
    chunks: Vec<RoundChunk<&'a Sample>>,
    next_round: usize,
}

impl<'a> ClientState<'a> {
    pub fn new(id: usize, tree: TreeModel, chunks: Vec<RoundChunk<&'a Sample>>) -> Self {
        ClientState {
            id,
            tree,
            budget: Budget::new(),
            chunks,
            next_round: 0,
        }
    }

    pub fn chunk(&self, round: usize) -> Option<&RoundChunk<&'a Sample>> {
        self.chunks.get(round)
    }

    pub fn rounds_consumed(&self) -> usize {
        self.next_round
    }

    fn take_chunk(&mut self, round: usize) -> Result<RoundChunk<&'a Sample>> {
        if round != self.next_round {
            return Err(Error::invalid(format!(
                "client {} expected round {}, asked for {round}",
                self.id, self.next_round
            )));
        }
        let chunk = self
            .chunks
            .get_mut(round)
            .ok_or_else(|| Error::invalid(format!("client {} has no chunk {round}", self.id)))?;
        self.next_round += 1;
        Ok(RoundChunk {
            client_id: chunk.client_id,
            round: chunk.round,
            samples: std::mem::take(&mut chunk.samples),
        })
    }
}

/// `floor(b * chunk_size)` more requests; spending is untouched.
pub fn update_budget(budget: Budget, chunk_size: usize, fraction: f64) -> Budget {
    // The nudge keeps products like 0.1 * 30 = 3.0000000000000004 or
    // 0.57 * 100 = 56.99999999999999 on the intended integer.
    let grant = (fraction * chunk_size as f64 + 1e-9).floor().max(0.0) as u64;
    let mut updated = budget;
    updated.accrue(grant);
    updated
}

fn aggregate_snapshots(snapshots: &[Vec<u8>], round: usize) -> Result<ForestModel> {
    let trees = snapshots
        .iter()
        .map(|bytes| deserialize_tree(bytes))
        .collect::<Result<Vec<_>>>()?;
    ForestModel::aggregate(trees, snapshots.len(), round)
}

/// Trains each client on its labeled chunk 0 and builds the first forest.
pub fn seed_forest(clients: &mut [ClientState<'_>], ledger: &mut CommLedger) -> Result<ForestModel> {
    let snapshots = clients
        .par_iter_mut()
        .map(|client| {
            let chunk = client.take_chunk(0)?;
            if chunk.samples.is_empty() {
                return Err(Error::invalid(format!("client {} has an empty seed chunk", client.id)));
            }
            for sample in &chunk.samples {
                client.tree.train_labeled(sample)?;
            }
            Ok(serialize_tree(&client.tree))
        })
        .collect::<Result<Vec<_>>>()?;
    ledger.push_round(0, &snapshots, &RequestTally::default());
    aggregate_snapshots(&snapshots, 0)
}

/// One client's round `t >= 1`: accrue budget, learn from the label-stripped
/// chunk with `forest` as oracle, and return the serialized tree.
pub fn client_update(
    client: &mut ClientState<'_>,
    forest: &ForestModel,
    round: usize,
    fraction: f64,
    tally: &RequestTally,
) -> Result<Vec<u8>> {
    if round == 0 {
        return Err(Error::invalid("client_update starts at round 1"));
    }
    let chunk = client.take_chunk(round)?;
    client.budget = update_budget(client.budget, chunk.samples.len(), fraction);
    let oracle = ForestOracle { forest, tally };
    for sample in chunk.samples {
        client
            .tree
            .observe(sample.without_label(), &oracle, &mut client.budget)?;
    }
    Ok(serialize_tree(&client.tree))
}

/// Round `t >= 1` for every client against `forest` (= F_{t-1}), then
/// aggregation into F_t. The ledger gets one record.
pub fn run_round(
    clients: &mut [ClientState<'_>],
    forest: &ForestModel,
    round: usize,
    fraction: f64,
    ledger: &mut CommLedger,
) -> Result<ForestModel> {
    let tally = RequestTally::default();
    let snapshots = clients
        .par_iter_mut()
        .map(|client| client_update(client, forest, round, fraction, &tally))
        .collect::<Result<Vec<_>>>()?;
    ledger.push_round(round, &snapshots, &tally);
    aggregate_snapshots(&snapshots, round)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub id: usize,
    pub stream_len: usize,
    pub seed_len: usize,
    pub budget: Budget,
    pub node_count: usize,
}

/// Everything measured while training on one fold and testing on the other.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldRun {
    /// 0 when fold A trains, 1 after the roles swap.
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Forest metrics after every round, seed round included.
    pub ensemble: Vec<MetricsReport>,
    /// `clients[t][k]`: client `k`'s tree after round `t`.
    pub clients: Vec<Vec<MetricsReport>>,
    pub ledger: CommLedger,
    pub client_summaries: Vec<ClientSummary>,
    #[serde(skip)]
    pub final_forest: Option<ForestModel>,
}

impl FoldRun {
    pub fn seed_labels(&self) -> usize {
        self.client_summaries.iter().map(|c| c.seed_len).sum()
    }

    pub fn post_seed_samples(&self) -> usize {
        self.client_summaries
            .iter()
            .map(|c| c.stream_len - c.seed_len)
            .sum()
    }

    /// Per-round mean over clients of each metric.
    pub fn client_means(&self) -> Vec<MetricSummary> {
        self.clients
            .iter()
            .enumerate()
            .map(|(round, reports)| MetricSummary {
                round,
                accuracy: per_client_mean(reports, Metric::Accuracy).unwrap_or(0.0),
                precision: per_client_mean(reports, Metric::Precision).unwrap_or(0.0),
                recall: per_client_mean(reports, Metric::Recall).unwrap_or(0.0),
                f_score: per_client_mean(reports, Metric::FScore).unwrap_or(0.0),
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub dataset_size: usize,
    pub folds: Vec<FoldRun>,
    /// Forest metrics averaged over the two folds, per round.
    pub ensemble: Vec<MetricSummary>,
    /// Client-mean metrics averaged over the two folds, per round.
    pub mean_client: Vec<MetricSummary>,
}

impl ExperimentReport {
    pub fn final_ensemble(&self) -> MetricSummary {
        *self.ensemble.last().expect("at least one round")
    }

    pub fn final_mean_client(&self) -> MetricSummary {
        *self.mean_client.last().expect("at least one round")
    }

    pub fn label_requests(&self) -> u64 {
        self.folds.iter().map(|f| f.ledger.label_requests()).sum()
    }

    pub fn model_bytes(&self) -> u64 {
        self.folds.iter().map(|f| f.ledger.model_bytes()).sum()
    }
}

fn evaluate_round(forest: &ForestModel, test: &[&Sample], round: usize) -> Result<(MetricsReport, Vec<MetricsReport>)> {
    let (ensemble, members) = evaluate_forest_and_members(forest, test)?;
    Ok((
        metrics(ensemble, Scope::Ensemble, round),
        members
            .into_iter()
            .enumerate()
            .map(|(k, m)| metrics(m, Scope::Client(k), round))
            .collect(),
    ))
}

/// Runs the protocol on `train`, scoring against `test` after every round.
pub fn run_fold(
    config: &ExperimentConfig,
    train: &[&Sample],
    test: &[&Sample],
    kinds: &[crate::datastream::FeatureKind],
    fold: usize,
) -> Result<FoldRun> {
    config.validate()?;
    let streams = partition_clients(train, config.clients, mix_seed(config.seed, 2 + fold as u64))?;
    let mut clients = streams
        .iter()
        .enumerate()
        .map(|(id, stream)| {
            let chunks = chunk_rounds(id, stream, config.rounds)?;
            let tree = TreeModel::new(kinds.to_vec(), config.tree_config())?;
            Ok(ClientState::new(id, tree, chunks))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut client_summaries: Vec<ClientSummary> = clients
        .iter()
        .zip(&streams)
        .map(|(c, s)| ClientSummary {
            id: c.id,
            stream_len: s.len(),
            seed_len: c.chunk(0).map_or(0, |ch| ch.samples.len()),
            budget: Budget::new(),
            node_count: 0,
        })
        .collect();

    let mut ledger = CommLedger::default();
    let mut forest = seed_forest(&mut clients, &mut ledger)?;
    let (first, members) = evaluate_round(&forest, test, 0)?;
    let mut ensemble = vec![first];
    let mut client_reports = vec![members];

    for round in 1..config.rounds {
        forest = run_round(&mut clients, &forest, round, config.budget, &mut ledger)?;
        let (report, members) = evaluate_round(&forest, test, round)?;
        ensemble.push(report);
        client_reports.push(members);
    }

    for (summary, client) in client_summaries.iter_mut().zip(&clients) {
        summary.budget = client.budget;
        summary.node_count = client.tree.node_count();
    }
    Ok(FoldRun {
        fold,
        train_size: train.len(),
        test_size: test.len(),
        ensemble,
        clients: client_reports,
        ledger,
        client_summaries,
        final_forest: Some(forest),
    })
}

/// Both fold assignments on an already loaded dataset.
pub fn run_on_dataset(dataset: &Dataset, config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let all: Vec<&Sample> = dataset.samples.iter().collect();
    let (fold_a, fold_b) = split_folds(&all, mix_seed(config.seed, 1))?;
    let kinds = dataset.schema.kinds();
    let first = run_fold(config, &fold_a, &fold_b, &kinds, 0)?;
    let second = run_fold(config, &fold_b, &fold_a, &kinds, 1)?;

    let ensemble = cross_validate(&first.ensemble, &second.ensemble)?;
    let mean_client = first
        .client_means()
        .iter()
        .zip(second.client_means())
        .map(|(a, b)| MetricSummary {
            round: a.round,
            accuracy: (a.accuracy + b.accuracy) / 2.0,
            precision: (a.precision + b.precision) / 2.0,
            recall: (a.recall + b.recall) / 2.0,
            f_score: (a.f_score + b.f_score) / 2.0,
        })
        .collect();
    Ok(ExperimentReport {
        config: config.clone(),
        dataset_size: dataset.len(),
        folds: vec![first, second],
        ensemble,
        mean_client,
    })
}

/// Loads the configured dataset and runs both folds.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let dataset = load_dataset(&config.dataset, config.format)?;
    run_on_dataset(&dataset, config)
}
