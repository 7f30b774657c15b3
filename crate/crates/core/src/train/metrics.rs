use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub count: usize,
    pub errors: usize,
    pub rate: f64,
}

/// Macro-averaged scores; classes with no predictions (or no gold examples)
/// contribute 0 to precision (or recall).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub support: usize,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Error rate per cue-authorship group, when known.
    pub cue_errors: BTreeMap<String, GroupError>,
}

pub fn evaluate_predictions(predicted: &[usize], gold: &[usize], num_classes: usize) -> Result<Metrics, TrainError> {
    if gold.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    if predicted.len() != gold.len() {
        return Err(TrainError::InvalidConfig(format!(
            "{} predictions for {} labels",
            predicted.len(),
            gold.len()
        )));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &g) in predicted.iter().zip(gold) {
        if p >= num_classes || g >= num_classes {
            return Err(TrainError::InvalidConfig(format!("class index out of range: {p}/{g}")));
        }
        confusion[g][p] += 1;
    }
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    for c in 0..num_classes {
        let tp = confusion[c][c] as f64;
        let pred_c: usize = (0..num_classes).map(|g| confusion[g][c]).sum();
        let gold_c: usize = confusion[c].iter().sum();
        let p = if pred_c == 0 { 0.0 } else { tp / pred_c as f64 };
        let r = if gold_c == 0 { 0.0 } else { tp / gold_c as f64 };
        precision += p;
        recall += r;
        f1 += if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    }
    let k = num_classes as f64;
    let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    Ok(Metrics {
        precision: precision / k,
        recall: recall / k,
        f1: f1 / k,
        accuracy: correct as f64 / gold.len() as f64,
        support: gold.len(),
        confusion,
        cue_errors: BTreeMap::new(),
    })
}

/// Error rate per group; `groups[i]` is `None` for examples outside every group.
pub fn group_errors(predicted: &[usize], gold: &[usize], groups: &[Option<&str>]) -> BTreeMap<String, GroupError> {
    let mut out: BTreeMap<String, GroupError> = BTreeMap::new();
    for ((&p, &g), grp) in predicted.iter().zip(gold).zip(groups) {
        if let Some(name) = grp {
            let e = out.entry(name.to_string()).or_insert(GroupError {
                count: 0,
                errors: 0,
                rate: 0.0,
            });
            e.count += 1;
            e.errors += usize::from(p != g);
        }
    }
    for e in out.values_mut() {
        e.rate = e.errors as f64 / e.count as f64;
    }
    out
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictor() {
        let gold = [0, 1, 1, 0, 1];
        let m = evaluate_predictions(&gold, &gold, 2).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn constant_predictor_scores_one_third() {
        let gold: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let m = evaluate_predictions(&vec![1; 100], &gold, 2).unwrap();
        assert!((m.f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.confusion, vec![vec![0, 50], vec![0, 50]]);
    }

    #[test]
    fn inverting_predictor_scores_zero() {
        let gold: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let inv: Vec<usize> = gold.iter().map(|g| 1 - g).collect();
        assert_eq!(evaluate_predictions(&inv, &gold, 2).unwrap().f1, 0.0);
    }

    #[test]
    fn random_predictor_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gold: Vec<usize> = (0..10_000).map(|i| i % 2).collect();
        let pred: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..2)).collect();
        let f1 = evaluate_predictions(&pred, &gold, 2).unwrap().f1;
        assert!((f1 - 0.5).abs() < 0.05, "{f1}");
    }

    #[test]
    fn empty_split() {
        assert!(matches!(evaluate_predictions(&[], &[], 2), Err(TrainError::EmptySplit)));
    }

    #[test]
    fn group_error_rates() {
        let g = group_errors(&[0, 1, 1, 0], &[1, 1, 1, 0], &[Some("perceived"), Some("perceived"), Some("intended"), None]);
        assert_eq!(g["perceived"].rate, 0.5);
        assert_eq!(g["intended"].rate, 0.0);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }
}
