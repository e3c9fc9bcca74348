//! Repeated stratified k-fold cross-validation and macro-averaged F1.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_traits::Float;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{Matrix, RandomForest, TrainConfig};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvConfig {
    pub n_folds: usize,
    pub n_trials: usize,
    pub seed: u64,
    pub forest: TrainConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { n_folds: 3, n_trials: 10, seed: 0, forest: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `0..labels.len()` into `k` folds with per-class counts that differ
/// by at most one between folds.
///
/// Classes are visited in ascending label order; each class's indices are
/// shuffled with the seeded stream and dealt round-robin, continuing the
/// rotation where the previous class stopped so fold sizes also stay within
/// one of each other.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Argument(format!("need at least 2 folds, got {k}")));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut r = rng::seeded(seed);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0;
    for c in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() < k {
            return Err(Error::Argument(format!("class {c} has {} members, fewer than the {k} folds", members.len())));
        }
        members.shuffle(&mut r);
        for m in members {
            tests[next].push(m);
            next = (next + 1) % k;
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
            Fold { train, test }
        })
        .collect())
}

/// Macro-averaged F1 over the classes present in `y_true`. A class with no
/// true positives scores 0.
pub fn f1_score(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Argument(format!("{} true labels but {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.is_empty() {
        return Err(Error::Argument("F1 needs at least one sample".into()));
    }
    let mut classes = y_true.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut total = 0.0;
    for &c in &classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        if tp > 0 {
            let precision = tp as f64 / (tp + fp) as f64;
            let recall = tp as f64 / (tp + fn_) as f64;
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(total / classes.len() as f64)
}

/// Per-trial F1 scores for one featurizer and tap selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub featurizer: String,
    pub taps: String,
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `scores`.
    pub std: f64,
}

impl EvalReport {
    pub fn from_scores(featurizer: impl Into<String>, taps: impl Into<String>, scores: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&scores);
        EvalReport { featurizer: featurizer.into(), taps: taps.into(), scores, mean, std }
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, Float::sqrt(var))
}

/// Cross-validation inputs in canonical order, ready to run trials.
///
/// Samples are ordered by label, then lexicographically by feature row, so
/// results do not depend on the order in which samples were supplied.
#[derive(Debug, Clone)]
pub struct CvPlan {
    x: Matrix,
    y: Vec<usize>,
    cv: CvConfig,
}

impl CvPlan {
    pub fn new(x: &Matrix, y: &[usize], cv: &CvConfig) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Argument(format!("{} rows but {} labels", x.rows(), y.len())));
        }
        if cv.n_trials == 0 {
            return Err(Error::Argument("n_trials must be at least 1".into()));
        }
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| {
            y[a].cmp(&y[b]).then_with(|| {
                x.row(a)
                    .iter()
                    .zip(x.row(b))
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
        });
        let plan = CvPlan { x: x.select_rows(&order), y: order.iter().map(|&i| y[i]).collect(), cv: cv.clone() };
        // Surface stratification errors before any trial runs.
        stratified_kfold(&plan.y, cv.n_folds, 0)?;
        Ok(plan)
    }

    pub fn n_trials(&self) -> usize {
        self.cv.n_trials
    }

    /// F1 of the pooled out-of-fold predictions for trial `t`.
    pub fn run_trial(&self, trial: usize) -> Result<f64> {
        let folds = stratified_kfold(&self.y, self.cv.n_folds, rng::substream_seed(self.cv.seed, trial as u64))?;
        let mut pred = vec![0usize; self.y.len()];
        for (f, fold) in folds.iter().enumerate() {
            let x_train = self.x.select_rows(&fold.train);
            let y_train: Vec<usize> = fold.train.iter().map(|&i| self.y[i]).collect();
            let forest_cfg = TrainConfig {
                seed: rng::nested_seed(self.cv.forest.seed, trial as u64, f as u64),
                ..self.cv.forest.clone()
            };
            let forest = RandomForest::fit(&x_train, &y_train, &forest_cfg)?;
            for &i in &fold.test {
                pred[i] = forest.predict(self.x.row(i))?;
            }
        }
        f1_score(&self.y, &pred)
    }
}

/// Runs `cv.n_trials` trials of stratified k-fold cross-validation.
pub fn cross_validate(x: &Matrix, y: &[usize], cv: &CvConfig) -> Result<Vec<f64>> {
    let plan = CvPlan::new(x, y, cv)?;
    (0..plan.n_trials()).map(|t| plan.run_trial(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap(), 1.0);
        assert_eq!(f1_score(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 0.0);
        assert_eq!(f1_score(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert!(f1_score(&[0], &[0, 1]).is_err());
        assert!(f1_score(&[], &[]).is_err());
    }

    #[test]
    fn six_samples_three_folds() {
        let labels = [0, 0, 0, 1, 1, 1];
        let folds = stratified_kfold(&labels, 3, 9).unwrap();
        for f in &folds {
            assert_eq!(f.test.len(), 2);
            assert_eq!(f.test.iter().filter(|&&i| labels[i] == 0).count(), 1);
            assert_eq!(f.train.len(), 4);
        }
        assert!(stratified_kfold(&[0, 0, 1], 2, 0).is_err());
        assert!(stratified_kfold(&labels, 1, 0).is_err());
    }

    #[test]
    fn thirty_samples_two_to_one() {
        let labels: Vec<usize> = (0..30).map(|i| usize::from(i >= 20)).collect();
        for seed in 0..20 {
            let folds = stratified_kfold(&labels, 3, seed).unwrap();
            for f in &folds {
                assert_eq!(f.test.len(), 10);
                let a = f.test.iter().filter(|&&i| labels[i] == 0).count();
                assert!(a == 6 || a == 7, "class 0 count {a}");
            }
        }
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
