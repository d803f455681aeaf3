//! Confusion matrices, the four headline metrics, and fold / client averaging.

use std::borrow::Borrow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastream::{BinaryLabel, Sample};
use crate::ensemble::{resolve_votes, ForestModel};
use crate::error::{Error, Result};
use crate::tree::TreeModel;

/// Anything that predicts a label for a sample.
pub trait Classifier {
    fn predict(&self, sample: &Sample) -> BinaryLabel;
}

impl Classifier for TreeModel {
    fn predict(&self, sample: &Sample) -> BinaryLabel {
        TreeModel::predict(self, sample)
    }
}

impl Classifier for ForestModel {
    fn predict(&self, sample: &Sample) -> BinaryLabel {
        self.vote(sample)
    }
}

impl<F: Fn(&Sample) -> BinaryLabel> Classifier for F {
    fn predict(&self, sample: &Sample) -> BinaryLabel {
        self(sample)
    }
}

/// Positive = delayed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn record(&mut self, predicted: BinaryLabel, truth: BinaryLabel) {
        match (predicted, truth) {
            (BinaryLabel::Positive, BinaryLabel::Positive) => self.tp += 1,
            (BinaryLabel::Positive, BinaryLabel::Negative) => self.fp += 1,
            (BinaryLabel::Negative, BinaryLabel::Negative) => self.tn += 1,
            (BinaryLabel::Negative, BinaryLabel::Positive) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Ensemble,
    Client(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    FScore,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scope: Scope,
    pub round: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub matrix: ConfusionMatrix,
}

impl MetricsReport {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::FScore => self.f_score,
        }
    }
}

/// Accuracy, precision, recall and F-score of `matrix`. A zero denominator
/// makes that metric 0.
pub fn metrics(matrix: ConfusionMatrix, scope: Scope, round: usize) -> MetricsReport {
    let ConfusionMatrix { tp, fp, tn, fn_ } = matrix;
    let accuracy = ratio(tp + tn, tp + tn + fp + fn_);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MetricsReport {
        scope,
        round,
        accuracy,
        precision,
        recall,
        f_score,
        matrix,
    }
}

pub fn evaluate<C, S>(model: &C, test_set: &[S]) -> Result<ConfusionMatrix>
where
    C: Classifier + ?Sized,
    S: Borrow<Sample>,
{
    if test_set.is_empty() {
        return Err(Error::invalid("evaluation needs a non-empty test set"));
    }
    let mut matrix = ConfusionMatrix::default();
    for sample in test_set {
        let sample = sample.borrow();
        let truth = sample
            .label
            .ok_or_else(|| Error::invalid("test samples must carry ground truth"))?;
        matrix.record(model.predict(sample), truth);
    }
    Ok(matrix)
}

/// One pass over the test set scoring the forest and every member tree.
/// Returns `(ensemble, per_tree)`; the ensemble matrix equals
/// `evaluate(forest, test_set)`.
pub fn evaluate_forest_and_members<S>(
    forest: &ForestModel,
    test_set: &[S],
) -> Result<(ConfusionMatrix, Vec<ConfusionMatrix>)>
where
    S: Borrow<Sample> + Sync,
{
    if test_set.is_empty() {
        return Err(Error::invalid("evaluation needs a non-empty test set"));
    }
    if test_set.iter().any(|s| s.borrow().label.is_none()) {
        return Err(Error::invalid("test samples must carry ground truth"));
    }
    let k = forest.len();
    let zero = || (ConfusionMatrix::default(), vec![ConfusionMatrix::default(); k]);
    let merge = |(ea, ma): (ConfusionMatrix, Vec<ConfusionMatrix>),
                 (eb, mb): (ConfusionMatrix, Vec<ConfusionMatrix>)| {
        let members = ma.iter().zip(&mb).map(|(a, b)| a.merge(b)).collect();
        (ea.merge(&eb), members)
    };
    Ok(test_set
        .par_iter()
        .with_min_len(4096)
        .fold(zero, |(mut ensemble, mut members), sample| {
            let sample = sample.borrow();
            let truth = sample.label.expect("checked above");
            let mut votes = [0usize; 2];
            for (tree, matrix) in forest.trees().iter().zip(members.iter_mut()) {
                let predicted = tree.predict(sample);
                votes[predicted.index()] += 1;
                matrix.record(predicted, truth);
            }
            ensemble.record(resolve_votes(votes, forest.tie_policy()), truth);
            (ensemble, members)
        })
        .reduce(zero, merge))
}

/// Fold-averaged metrics for one round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub round: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl MetricSummary {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::FScore => self.f_score,
        }
    }
}

/// Per-round arithmetic mean of the two fold runs.
pub fn cross_validate(first: &[MetricsReport], second: &[MetricsReport]) -> Result<Vec<MetricSummary>> {
    if first.len() != second.len() {
        return Err(Error::invalid(format!(
            "fold series lengths differ: {} vs {}",
            first.len(),
            second.len()
        )));
    }
    first
        .iter()
        .zip(second)
        .map(|(a, b)| {
            if a.round != b.round {
                return Err(Error::invalid(format!(
                    "fold series out of step: round {} vs {}",
                    a.round, b.round
                )));
            }
            Ok(MetricSummary {
                round: a.round,
                accuracy: (a.accuracy + b.accuracy) / 2.0,
                precision: (a.precision + b.precision) / 2.0,
                recall: (a.recall + b.recall) / 2.0,
                f_score: (a.f_score + b.f_score) / 2.0,
            })
        })
        .collect()
}

/// Unweighted mean of `metric` over client reports.
pub fn per_client_mean<'a>(
    reports: impl IntoIterator<Item = &'a MetricsReport>,
    metric: Metric,
) -> Result<f64> {
    let (sum, n) = reports
        .into_iter()
        .fold((0.0, 0usize), |(sum, n), r| (sum + r.get(metric), n + 1));
    if n == 0 {
        return Err(Error::invalid("per-client mean over zero reports"));
    }
    Ok(sum / n as f64)
}
