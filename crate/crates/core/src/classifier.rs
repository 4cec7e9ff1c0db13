//! KNN classification of feature vectors, with stratified splitting and
//! confusion-matrix evaluation.
//!
//! Predictions are fully deterministic: neighbor ranking breaks distance ties
//! by lower training index, and a vote tie goes first to the class whose
//! voting neighbors sit closer in total, then to the lower class id.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv_snn::FeatureVector;
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

/// Immutable KNN model: the training vectors plus the neighbor count.
#[derive(Debug, Clone)]
pub struct KnnModel {
    pub train: Vec<FeatureVector>,
    pub k: usize,
    dim: usize,
}

impl KnnModel {
    pub fn new(train: Vec<FeatureVector>, k: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Parameter("training set is empty".into()));
        }
        if k == 0 || k > train.len() {
            return Err(Error::Parameter(format!(
                "k = {k} must be in [1, {}]",
                train.len()
            )));
        }
        let dim = train[0].values.len();
        if let Some(bad) = train.iter().find(|f| f.values.len() != dim) {
            return Err(Error::Validation(format!(
                "training vector '{}' has dimension {}, expected {dim}",
                bad.sample_id,
                bad.values.len()
            )));
        }
        Ok(Self { train, k, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

fn euclidean2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Predicts the class of one query vector.
pub fn knn_predict(model: &KnnModel, query: &[f64]) -> Result<usize> {
    if query.len() != model.dim {
        return Err(Error::Validation(format!(
            "query has dimension {}, model expects {}",
            query.len(),
            model.dim
        )));
    }

    // Rank neighbors by (distance, training index).
    let mut order: Vec<(f64, usize)> = model
        .train
        .iter()
        .enumerate()
        .map(|(i, f)| (euclidean2(&f.values, query), i))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let neighbors = &order[..model.k];

    // Majority vote; ties by smaller summed distance, then lower class id.
    let mut votes: Vec<(usize, f64)> = Vec::new(); // (count, summed distance) per class
    for &(d2, i) in neighbors {
        let class = model.train[i].label;
        if votes.len() <= class {
            votes.resize(class + 1, (0, 0.0));
        }
        votes[class].0 += 1;
        votes[class].1 += d2.sqrt();
    }
    let mut winner = usize::MAX;
    for (class, &(count, dist_sum)) in votes.iter().enumerate() {
        if count == 0 {
            continue;
        }
        if winner == usize::MAX {
            winner = class;
            continue;
        }
        let (wc, wd) = votes[winner];
        if count > wc || (count == wc && dist_sum < wd) {
            winner = class;
        }
    }
    Ok(winner)
}

/// A train/test partition with any stratification warnings.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<FeatureVector>,
    pub test: Vec<FeatureVector>,
    pub warnings: Vec<String>,
}

/// Stratified split: per class, a seeded shuffle sends `train_fraction` of
/// the samples (rounded, but always leaving at least one per side when the
/// class has two or more) to the train partition. A single-sample class goes
/// to train with a warning. Output order follows the input within each
/// partition.
pub fn split_dataset(features: &[FeatureVector], train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train_fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    if features.is_empty() {
        return Err(Error::Parameter("no feature vectors to split".into()));
    }

    let n_classes = features.iter().map(|f| f.label).max().unwrap() + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, f) in features.iter().enumerate() {
        by_class[f.label].push(i);
    }

    let mut in_train = vec![false; features.len()];
    let mut warnings = Vec::new();
    for (class, indices) in by_class.iter().enumerate() {
        let n = indices.len();
        if n == 0 {
            continue;
        }
        if n == 1 {
            warnings.push(format!(
                "class {class} has a single sample; assigned to train, absent from test"
            ));
            in_train[indices[0]] = true;
            continue;
        }
        let mut shuffled = indices.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, class as u64));
        shuffled.shuffle(&mut rng);
        let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        for &i in &shuffled[..n_train] {
            in_train[i] = true;
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, f) in features.iter().enumerate() {
        if in_train[i] {
            train.push(f.clone());
        } else {
            test.push(f.clone());
        }
    }
    Ok(Split {
        train,
        test,
        warnings,
    })
}

/// Which split produced an evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDescriptor {
    pub seed: u64,
    pub repetition: usize,
}

/// Accuracy, confusion counts, and per-class rates for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `confusion[true_label][predicted_label]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub test_size: usize,
    pub split: SplitDescriptor,
}

impl EvalReport {
    pub fn n_classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn validate(&self) -> Result<()> {
        let total: usize = self.confusion.iter().flatten().sum();
        if total != self.test_size {
            return Err(Error::Validation(format!(
                "confusion totals {total} != test size {}",
                self.test_size
            )));
        }
        let trace: usize = (0..self.confusion.len())
            .map(|c| self.confusion[c][c])
            .sum();
        let accuracy = trace as f64 / self.test_size as f64;
        if (accuracy - self.accuracy).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "accuracy {} != trace/total {accuracy}",
                self.accuracy
            )));
        }
        Ok(())
    }
}

/// Trains KNN on `train`, predicts every vector of `test`, and reports
/// accuracy plus the confusion matrix (rows = true, columns = predicted).
/// Test predictions run in parallel; output is order-independent counts.
pub fn evaluate(
    train: &[FeatureVector],
    test: &[FeatureVector],
    k: usize,
    split: SplitDescriptor,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Parameter("test set is empty".into()));
    }
    let model = KnnModel::new(train.to_vec(), k)?;
    let predictions: Vec<usize> = test
        .par_iter()
        .map(|f| knn_predict(&model, &f.values))
        .collect::<Result<_>>()?;

    let n_classes = test
        .iter()
        .map(|f| f.label)
        .chain(train.iter().map(|f| f.label))
        .chain(predictions.iter().copied())
        .max()
        .unwrap()
        + 1;
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (f, &p) in test.iter().zip(&predictions) {
        confusion[f.label][p] += 1;
    }

    let trace: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let accuracy = trace as f64 / test.len() as f64;
    let mut precision = vec![0.0; n_classes];
    let mut recall = vec![0.0; n_classes];
    for c in 0..n_classes {
        let col_sum: usize = (0..n_classes).map(|r| confusion[r][c]).sum();
        let row_sum: usize = confusion[c].iter().sum();
        if col_sum > 0 {
            precision[c] = confusion[c][c] as f64 / col_sum as f64;
        }
        if row_sum > 0 {
            recall[c] = confusion[c][c] as f64 / row_sum as f64;
        }
    }

    let report = EvalReport {
        accuracy,
        confusion,
        precision,
        recall,
        test_size: test.len(),
        split,
    };
    report.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn fv(values: Vec<f64>, label: usize, id: &str) -> FeatureVector {
        FeatureVector {
            values,
            sample_id: id.into(),
            label,
        }
    }

    fn two_blob_training() -> Vec<FeatureVector> {
        vec![
            fv(vec![0.0, 0.0], 0, "a0"),
            fv(vec![0.0, 1.0], 0, "a1"),
            fv(vec![1.0, 0.0], 0, "a2"),
            fv(vec![10.0, 10.0], 1, "b0"),
            fv(vec![10.0, 11.0], 1, "b1"),
            fv(vec![11.0, 10.0], 1, "b2"),
        ]
    }

    #[test]
    fn nearest_training_vector_wins_at_k1() {
        let model = KnnModel::new(two_blob_training(), 1).unwrap();
        assert_eq!(knn_predict(&model, &[10.0, 11.0]).unwrap(), 1);
        assert_eq!(knn_predict(&model, &[0.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn three_neighbor_majority() {
        let model = KnnModel::new(two_blob_training(), 3).unwrap();
        assert_eq!(knn_predict(&model, &[0.5, 0.5]).unwrap(), 0);
    }

    #[test]
    fn vote_tie_falls_to_closer_class() {
        // k=2, one neighbor per class; class 1 is nearer.
        let train = vec![
            fv(vec![0.0], 0, "a"),
            fv(vec![1.0], 1, "b"),
            fv(vec![50.0], 2, "c"),
        ];
        let model = KnnModel::new(train, 2).unwrap();
        assert_eq!(knn_predict(&model, &[0.9]).unwrap(), 1);
    }

    #[test]
    fn full_tie_falls_to_lower_class_id() {
        // Equidistant single neighbors of classes 1 and 2.
        let train = vec![
            fv(vec![-1.0], 2, "a"),
            fv(vec![1.0], 1, "b"),
            fv(vec![90.0], 0, "c"),
        ];
        let model = KnnModel::new(train, 2).unwrap();
        assert_eq!(knn_predict(&model, &[0.0]).unwrap(), 1);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = KnnModel::new(two_blob_training(), 1).unwrap();
        assert!(knn_predict(&model, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn k_bounds_are_enforced() {
        assert!(KnnModel::new(two_blob_training(), 0).is_err());
        assert!(KnnModel::new(two_blob_training(), 7).is_err());
    }

    #[test]
    fn training_order_permutation_does_not_change_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Random vectors: pairwise distances distinct with probability 1.
        let train: Vec<FeatureVector> = (0..20)
            .map(|i| {
                fv(
                    (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    i % 3,
                    &format!("t{i}"),
                )
            })
            .collect();
        let queries: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();

        let model = KnnModel::new(train.clone(), 5).unwrap();
        let mut reversed = train;
        reversed.reverse();
        let model_rev = KnnModel::new(reversed, 5).unwrap();
        for q in &queries {
            assert_eq!(
                knn_predict(&model, q).unwrap(),
                knn_predict(&model_rev, q).unwrap()
            );
        }
    }

    #[test]
    fn uniform_scaling_preserves_predictions() {
        let train = two_blob_training();
        let scaled: Vec<FeatureVector> = train
            .iter()
            .map(|f| {
                fv(
                    f.values.iter().map(|v| v * 37.5).collect(),
                    f.label,
                    &f.sample_id,
                )
            })
            .collect();
        let model = KnnModel::new(train, 3).unwrap();
        let model_scaled = KnnModel::new(scaled, 3).unwrap();
        for q in [[0.5, 0.5], [8.0, 9.0], [5.0, 5.0]] {
            let scaled_q: Vec<f64> = q.iter().map(|v| v * 37.5).collect();
            assert_eq!(
                knn_predict(&model, &q).unwrap(),
                knn_predict(&model_scaled, &scaled_q).unwrap()
            );
        }
    }

    fn balanced_features(per_class: usize, n_classes: usize) -> Vec<FeatureVector> {
        let mut out = Vec::new();
        for c in 0..n_classes {
            for i in 0..per_class {
                out.push(fv(vec![c as f64, i as f64], c, &format!("c{c}i{i}")));
            }
        }
        out
    }

    #[test]
    fn split_preserves_class_proportions() {
        let features = balanced_features(50, 6); // 300 samples
        let split = split_dataset(&features, 0.8, 11).unwrap();
        assert_eq!(split.train.len(), 240);
        assert_eq!(split.test.len(), 60);
        assert!(split.warnings.is_empty());
        for c in 0..6 {
            let tr = split.train.iter().filter(|f| f.label == c).count();
            let te = split.test.iter().filter(|f| f.label == c).count();
            assert_eq!(tr, 40, "class {c}");
            assert_eq!(te, 10, "class {c}");
        }
    }

    #[test]
    fn split_is_deterministic() {
        let features = balanced_features(20, 3);
        let a = split_dataset(&features, 0.75, 9).unwrap();
        let b = split_dataset(&features, 0.75, 9).unwrap();
        let ids = |v: &[FeatureVector]| v.iter().map(|f| f.sample_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a.train), ids(&b.train));
        assert_eq!(ids(&a.test), ids(&b.test));
        let c = split_dataset(&features, 0.75, 10).unwrap();
        assert_ne!(
            ids(&a.train),
            ids(&c.train),
            "different seed, different split"
        );
    }

    #[test]
    fn split_rejects_degenerate_fractions() {
        let features = balanced_features(4, 2);
        assert!(split_dataset(&features, 1.0, 0).is_err());
        assert!(split_dataset(&features, 0.0, 0).is_err());
    }

    #[test]
    fn single_sample_class_goes_to_train_with_warning() {
        let mut features = balanced_features(6, 2);
        features.push(fv(vec![9.0, 9.0], 2, "lonely"));
        let split = split_dataset(&features, 0.8, 4).unwrap();
        assert_eq!(split.warnings.len(), 1);
        assert!(
            split.warnings[0].contains("class 2"),
            "{:?}",
            split.warnings
        );
        assert!(split.train.iter().any(|f| f.sample_id == "lonely"));
        assert!(split.test.iter().all(|f| f.label != 2));
    }

    #[test]
    fn every_multi_sample_class_lands_on_both_sides() {
        let features = balanced_features(2, 5);
        let split = split_dataset(&features, 0.8, 8).unwrap();
        for c in 0..5 {
            assert!(split.train.iter().any(|f| f.label == c));
            assert!(split.test.iter().any(|f| f.label == c));
        }
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let features = balanced_features(5, 3);
        let report = evaluate(
            &features,
            &features,
            1,
            SplitDescriptor {
                seed: 0,
                repetition: 0,
            },
        )
        .unwrap();
        assert_eq!(report.accuracy, 1.0);
        for c in 0..3 {
            assert_eq!(report.confusion[c][c], 5);
            assert_eq!(report.precision[c], 1.0);
            assert_eq!(report.recall[c], 1.0);
        }
    }

    #[test]
    fn single_class_test_fills_one_diagonal_cell() {
        let train = two_blob_training();
        let test = vec![fv(vec![10.5, 10.5], 1, "q0"), fv(vec![9.5, 10.0], 1, "q1")];
        let report = evaluate(
            &train,
            &test,
            3,
            SplitDescriptor {
                seed: 0,
                repetition: 0,
            },
        )
        .unwrap();
        assert_eq!(report.confusion[1][1], 2);
        let off: usize = report
            .confusion
            .iter()
            .enumerate()
            .flat_map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .filter(move |&(c, _)| c != r)
                    .map(|(_, &v)| v)
            })
            .sum();
        assert_eq!(off, 0);
    }

    proptest! {
        #[test]
        fn confusion_totals_reconcile(
            per_class in 2usize..8,
            n_classes in 2usize..5,
            k in 1usize..4,
            seed in 0u64..500,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let features: Vec<FeatureVector> = (0..per_class * n_classes)
                .map(|i| {
                    let label = i % n_classes;
                    fv(
                        (0..3)
                            .map(|_| label as f64 + rng.random_range(-0.4..0.4))
                            .collect(),
                        label,
                        &format!("s{i}"),
                    )
                })
                .collect();
            let split = split_dataset(&features, 0.7, seed)?;
            let k = k.min(split.train.len());
            let report = evaluate(
                &split.train,
                &split.test,
                k,
                SplitDescriptor { seed, repetition: 0 },
            )?;
            report.validate().unwrap();
            let total: usize = report.confusion.iter().flatten().sum();
            prop_assert_eq!(total, split.test.len());
        }
    }
}
