//! Per-leaf sufficient statistics and the split criterion.

use std::collections::{BTreeMap, VecDeque};

use statrs::function::erf::{erf, erf_inv};

use crate::datastream::{BinaryLabel, FeatureKind, FeatureValue, Sample};
use crate::error::{Error, Result};

/// Candidate thresholds tried per numeric feature.
pub const NUMERIC_CANDIDATES: usize = 10;

/// `ε = sqrt(R² ln(1/δ) / 2n)`.
pub fn hoeffding_bound(range: f64, delta: f64, n: u64) -> Result<f64> {
    if range.is_nan() || range <= 0.0 || !range.is_finite() {
        return Err(Error::invalid(format!("hoeffding range must be > 0, got {range}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("hoeffding delta must be in (0, 1], got {delta}")));
    }
    if n == 0 {
        return Err(Error::invalid("hoeffding bound needs n >= 1"));
    }
    Ok((range * range * (1.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Shannon entropy in bits of a (possibly fractional) class distribution.
pub fn entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// Information gain of partitioning `parent` into `branches`.
pub fn information_gain(parent: [f64; 2], branches: &[[f64; 2]]) -> f64 {
    let total = parent[0] + parent[1];
    if total <= 0.0 {
        return 0.0;
    }
    let weighted: f64 = branches
        .iter()
        .map(|b| (b[0] + b[1]) / total * entropy(b))
        .sum();
    (entropy(&parent) - weighted).max(0.0)
}

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Gaussian {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Gaussian {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn merge(&self, other: &Gaussian) -> Gaussian {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let delta = other.mean - self.mean;
        Gaussian {
            count,
            mean: self.mean + delta * nb / count as f64,
            m2: self.m2 + other.m2 + delta * delta * na * nb / count as f64,
        }
    }

    /// Expected number of observations at or below `x`.
    pub fn mass_below(&self, x: f64) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let sd = self.std_dev();
        let n = self.count as f64;
        if sd == 0.0 {
            return if self.mean <= x { n } else { 0.0 };
        }
        n * 0.5 * (1.0 + erf((x - self.mean) / (sd * std::f64::consts::SQRT_2)))
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.mean + self.std_dev() * std::f64::consts::SQRT_2 * erf_inv(2.0 * p - 1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureObserver {
    /// Class counts per categorical value.
    Categorical(BTreeMap<u32, [u64; 2]>),
    /// One Gaussian summary per class.
    Numeric([Gaussian; 2]),
}

impl FeatureObserver {
    pub fn new(kind: FeatureKind) -> Self {
        match kind {
            FeatureKind::Categorical => FeatureObserver::Categorical(BTreeMap::new()),
            FeatureKind::Numeric => FeatureObserver::Numeric([Gaussian::default(); 2]),
        }
    }

    fn observe(&mut self, value: &FeatureValue, label: BinaryLabel) {
        match (self, value) {
            (FeatureObserver::Categorical(table), FeatureValue::Categorical(v)) => {
                table.entry(*v).or_default()[label.index()] += 1;
            }
            (FeatureObserver::Numeric(per_class), FeatureValue::Numeric(x)) => {
                per_class[label.index()].push(*x);
            }
            // Kind mismatches are rejected by Schema::check upstream; a
            // stray value is ignored rather than corrupting the summary.
            _ => {}
        }
    }
}

/// A candidate test and its information gain.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSplit {
    pub gain: f64,
    pub test: SplitTest,
}

/// Routing test of an internal node.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitTest {
    /// `value <= threshold` goes to child 0, everything else to child 1.
    Threshold { feature: usize, threshold: f64 },
    /// `branches[i]` goes to child `i`; values not listed go to the last child.
    Multiway { feature: usize, branches: Vec<u32> },
}

impl SplitTest {
    pub fn feature(&self) -> usize {
        match self {
            SplitTest::Threshold { feature, .. } | SplitTest::Multiway { feature, .. } => *feature,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            SplitTest::Threshold { .. } => 2,
            SplitTest::Multiway { branches, .. } => branches.len() + 1,
        }
    }

    pub fn branch(&self, sample: &Sample) -> usize {
        match self {
            SplitTest::Threshold { feature, threshold } => match sample.values.get(*feature) {
                Some(FeatureValue::Numeric(x)) if *x <= *threshold => 0,
                _ => 1,
            },
            SplitTest::Multiway { feature, branches } => match sample.values.get(*feature) {
                Some(FeatureValue::Categorical(v)) => {
                    branches.binary_search(v).unwrap_or(branches.len())
                }
                _ => branches.len(),
            },
        }
    }
}

/// Statistics carried by a leaf while it is learning.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafStats {
    pub(crate) class_counts: [u64; 2],
    pub(crate) observers: Vec<FeatureObserver>,
    pub(crate) seen_since_check: usize,
    pub(crate) unlabeled_buffer: VecDeque<Sample>,
}

impl LeafStats {
    pub fn new(kinds: &[FeatureKind]) -> Self {
        LeafStats {
            class_counts: [0; 2],
            observers: kinds.iter().map(|&k| FeatureObserver::new(k)).collect(),
            seen_since_check: 0,
            unlabeled_buffer: VecDeque::new(),
        }
    }

    /// A classify-only leaf: counts, no observers.
    pub(crate) fn frozen(class_counts: [u64; 2]) -> Self {
        LeafStats {
            class_counts,
            observers: Vec::new(),
            seen_since_check: 0,
            unlabeled_buffer: VecDeque::new(),
        }
    }

    pub fn class_counts(&self) -> [u64; 2] {
        self.class_counts
    }

    pub fn labeled_count(&self) -> u64 {
        self.class_counts[0] + self.class_counts[1]
    }

    pub fn seen_since_check(&self) -> usize {
        self.seen_since_check
    }

    pub fn buffered(&self) -> usize {
        self.unlabeled_buffer.len()
    }

    pub fn observers(&self) -> &[FeatureObserver] {
        &self.observers
    }

    pub fn absorb(&mut self, values: &[FeatureValue], label: BinaryLabel) {
        self.class_counts[label.index()] += 1;
        for (observer, value) in self.observers.iter_mut().zip(values) {
            observer.observe(value, label);
        }
    }

    /// Best test on `feature` and its gain, or `None` when no test separates
    /// anything (single observed value, pure leaf, no data).
    pub fn best_split(&self, feature: usize) -> Option<CandidateSplit> {
        let parent = [self.class_counts[0] as f64, self.class_counts[1] as f64];
        if parent[0] == 0.0 || parent[1] == 0.0 {
            return None;
        }
        match self.observers.get(feature)? {
            FeatureObserver::Categorical(table) => {
                if table.len() < 2 {
                    return None;
                }
                let branches: Vec<[f64; 2]> = table
                    .values()
                    .map(|c| [c[0] as f64, c[1] as f64])
                    .collect();
                let gain = information_gain(parent, &branches);
                Some(CandidateSplit {
                    gain,
                    test: SplitTest::Multiway {
                        feature,
                        branches: table.keys().copied().collect(),
                    },
                })
            }
            FeatureObserver::Numeric(per_class) => {
                let pooled = per_class[0].merge(&per_class[1]);
                if pooled.std_dev() == 0.0 {
                    return None;
                }
                let mut best: Option<CandidateSplit> = None;
                for i in 1..=NUMERIC_CANDIDATES {
                    let threshold = pooled.quantile(i as f64 / (NUMERIC_CANDIDATES + 1) as f64);
                    let left = [
                        per_class[0].mass_below(threshold),
                        per_class[1].mass_below(threshold),
                    ];
                    let right = [parent[0] - left[0], parent[1] - left[1]];
                    let gain = information_gain(parent, &[left, right]);
                    if best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(CandidateSplit {
                            gain,
                            test: SplitTest::Threshold { feature, threshold },
                        });
                    }
                }
                best
            }
        }
    }
}

/// Gain of the best test on `feature`; 0 when nothing separates.
pub fn split_gain(stats: &LeafStats, feature: usize) -> f64 {
    stats.best_split(feature).map_or(0.0, |c| c.gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryLabel::{Negative as N, Positive as P};

    fn cat(v: u32) -> FeatureValue {
        FeatureValue::Categorical(v)
    }

    #[test]
    fn hoeffding_values() {
        assert_eq!(hoeffding_bound(1.0, 1.0, 10).unwrap(), 0.0);
        let e100 = hoeffding_bound(1.0, 0.05, 100).unwrap();
        assert!((e100 - 0.122_387).abs() < 1e-5, "{e100}");
        let e200 = hoeffding_bound(1.0, 0.05, 200).unwrap();
        assert!((e100 / e200 - 2f64.sqrt()).abs() < 1e-12);
        assert!(hoeffding_bound(0.0, 0.05, 1).is_err());
        assert!(hoeffding_bound(1.0, 0.0, 1).is_err());
        assert!(hoeffding_bound(1.0, 1.5, 1).is_err());
        assert!(hoeffding_bound(1.0, 0.05, 0).is_err());
    }

    #[test]
    fn perfect_categorical_split_is_one_bit() {
        let mut stats = LeafStats::new(&[FeatureKind::Categorical]);
        for _ in 0..5 {
            stats.absorb(&[cat(0)], N);
            stats.absorb(&[cat(1)], P);
        }
        assert!((split_gain(&stats, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_leaf_has_no_gain() {
        let kinds = [FeatureKind::Categorical, FeatureKind::Numeric];
        let mut stats = LeafStats::new(&kinds);
        for i in 0..10 {
            stats.absorb(&[cat(i % 3), FeatureValue::Numeric(i as f64)], N);
        }
        assert_eq!(split_gain(&stats, 0), 0.0);
        assert_eq!(split_gain(&stats, 1), 0.0);
    }

    #[test]
    fn single_value_feature_has_no_gain() {
        let mut stats = LeafStats::new(&[FeatureKind::Categorical, FeatureKind::Numeric]);
        stats.absorb(&[cat(4), FeatureValue::Numeric(2.0)], N);
        stats.absorb(&[cat(4), FeatureValue::Numeric(2.0)], P);
        assert_eq!(split_gain(&stats, 0), 0.0);
        assert_eq!(split_gain(&stats, 1), 0.0);
    }

    #[test]
    fn separated_numeric_feature_gains() {
        let mut stats = LeafStats::new(&[FeatureKind::Numeric]);
        for i in 0..50 {
            stats.absorb(&[FeatureValue::Numeric(i as f64 * 0.01)], N);
            stats.absorb(&[FeatureValue::Numeric(10.0 + i as f64 * 0.01)], P);
        }
        let best = stats.best_split(0).unwrap();
        assert!(best.gain > 0.95, "{}", best.gain);
        match best.test {
            SplitTest::Threshold { threshold, .. } => assert!(threshold > 0.5 && threshold < 10.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gaussian_merge_matches_direct() {
        let xs = [1.0, 4.0, 2.5, 8.0, -3.0, 0.5];
        let mut all = Gaussian::default();
        let (mut a, mut b) = (Gaussian::default(), Gaussian::default());
        for (i, x) in xs.iter().enumerate() {
            all.push(*x);
            if i % 2 == 0 { a.push(*x) } else { b.push(*x) }
        }
        let merged = a.merge(&b);
        assert_eq!(merged.count, all.count);
        assert!((merged.mean - all.mean).abs() < 1e-12);
        assert!((merged.variance() - all.variance()).abs() < 1e-12);
    }

    #[test]
    fn multiway_routing_defaults_unknown_values() {
        let test = SplitTest::Multiway { feature: 0, branches: vec![2, 5, 9] };
        let route = |v| test.branch(&Sample::unlabeled(vec![cat(v)]));
        assert_eq!((route(2), route(5), route(9), route(7)), (0, 1, 2, 3));
        assert_eq!(test.arity(), 4);
    }
}
