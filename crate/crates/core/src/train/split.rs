use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Example, TrainError};

/// Author-disjoint stratified train/validation/test split settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    /// Share of the non-test examples held out for validation.
    pub val_fraction: f64,
    /// Allowed deviation of each split's class proportions from the global ones.
    pub tolerance: f64,
    pub min_per_class: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.1,
            val_fraction: 0.1,
            tolerance: 0.02,
            min_per_class: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

struct AuthorGroup<'a> {
    counts: Vec<usize>,
    examples: Vec<&'a Example>,
}

fn class_counts(examples: &[&Example], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for e in examples {
        c[e.class] += 1;
    }
    c
}

/// Move whole authors (in the given order) into the held-out part while
/// every class stays within its target.
fn carve<'a>(groups: Vec<AuthorGroup<'a>>, targets: &[usize]) -> (Vec<&'a Example>, Vec<AuthorGroup<'a>>) {
    let mut got = vec![0; targets.len()];
    let mut held = Vec::new();
    let mut rest = Vec::new();
    for g in groups {
        if g.counts.iter().zip(&got).zip(targets).all(|((c, have), t)| have + c <= *t) {
            got.iter_mut().zip(&g.counts).for_each(|(h, c)| *h += c);
            held.extend(g.examples);
        } else {
            rest.push(g);
        }
    }
    (held, rest)
}

fn check(name: &str, part: &[&Example], k: usize, global: &[f64], tol: f64) -> Result<(), TrainError> {
    if part.is_empty() {
        return Err(TrainError::InfeasibleSplit(format!("{name} split is empty")));
    }
    let counts = class_counts(part, k);
    let n = part.len() as f64;
    for (c, &got) in counts.iter().enumerate() {
        let p = got as f64 / n;
        if (p - global[c]).abs() > tol {
            return Err(TrainError::InfeasibleSplit(format!(
                "{name} split has class {c} share {p:.3}, global {:.3}",
                global[c]
            )));
        }
    }
    Ok(())
}

/// Whole-author granularity may undershoot the targets, but not by half.
fn check_size(name: &str, part: &[&Example], targets: &[usize]) -> Result<(), TrainError> {
    let want: usize = targets.iter().sum();
    if part.len() * 2 < want {
        return Err(TrainError::InfeasibleSplit(format!(
            "{name} split holds {} examples, target {want}",
            part.len()
        )));
    }
    Ok(())
}

/// Author-disjoint, stratified split; deterministic in `spec.seed`.
pub fn make_splits(examples: &[Example], num_classes: usize, spec: &SplitSpec) -> Result<Splits, TrainError> {
    let mut totals = vec![0usize; num_classes];
    for e in examples {
        if e.class >= num_classes {
            return Err(TrainError::InvalidConfig(format!("class {} out of range", e.class)));
        }
        totals[e.class] += 1;
    }
    if let Some(c) = totals.iter().position(|&n| n < spec.min_per_class) {
        return Err(TrainError::InfeasibleSplit(format!(
            "class {c} has {} labeled examples, need {}",
            totals[c], spec.min_per_class
        )));
    }
    let n = examples.len() as f64;
    let global: Vec<f64> = totals.iter().map(|&t| t as f64 / n).collect();

    let mut by_author: BTreeMap<&str, Vec<&Example>> = BTreeMap::new();
    for e in examples {
        by_author.entry(e.author_id.as_str()).or_default().push(e);
    }
    let mut groups: Vec<AuthorGroup> = by_author
        .into_values()
        .map(|ex| AuthorGroup {
            counts: class_counts(&ex, num_classes),
            examples: ex,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    groups.shuffle(&mut rng);

    let test_targets: Vec<usize> = totals
        .iter()
        .map(|&t| (t as f64 * spec.test_fraction).round() as usize)
        .collect();
    let (test, rest) = carve(groups, &test_targets);
    check("test", &test, num_classes, &global, spec.tolerance)?;
    check_size("test", &test, &test_targets)?;

    let rest_totals = totals.iter().zip(&class_counts(&test, num_classes)).map(|(t, h)| t - h).collect::<Vec<_>>();
    let val_targets: Vec<usize> = rest_totals
        .iter()
        .map(|&t| (t as f64 * spec.val_fraction).round() as usize)
        .collect();
    let (val, rest) = carve(rest, &val_targets);
    check("validation", &val, num_classes, &global, spec.tolerance)?;
    check_size("validation", &val, &val_targets)?;
    let train: Vec<&Example> = rest.into_iter().flat_map(|g| g.examples).collect();
    check("train", &train, num_classes, &global, spec.tolerance)?;

    let ids = |part: &[&Example]| {
        let mut v: Vec<String> = part.iter().map(|e| e.tweet_id.clone()).collect();
        v.sort();
        v
    };
    let splits = Splits {
        train: ids(&train),
        val: ids(&val),
        test: ids(&test),
    };
    assert_author_disjoint(examples, &splits)?;
    Ok(splits)
}

fn assert_author_disjoint(examples: &[Example], splits: &Splits) -> Result<(), TrainError> {
    let author: std::collections::HashMap<&str, &str> =
        examples.iter().map(|e| (e.tweet_id.as_str(), e.author_id.as_str())).collect();
    let set = |ids: &[String]| -> HashSet<&str> { ids.iter().map(|i| author[i.as_str()]).collect() };
    let (a, b, c) = (set(&splits.train), set(&splits.val), set(&splits.test));
    if !a.is_disjoint(&b) || !a.is_disjoint(&c) || !b.is_disjoint(&c) {
        return Err(TrainError::InfeasibleSplit("author sets overlap".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(i: usize, author: &str, class: usize) -> Example {
        Example {
            tweet_id: format!("t{i:03}"),
            author_id: author.into(),
            class,
            cue: None,
        }
    }

    #[test]
    fn divisible_case_is_exact() {
        let examples: Vec<Example> = (0..100).map(|i| ex(i, &format!("a{i}"), i % 2)).collect();
        let s = make_splits(&examples, 2, &SplitSpec::default()).unwrap();
        let count = |ids: &[String], c: usize| ids.iter().filter(|id| examples.iter().any(|e| &e.tweet_id == *id && e.class == c)).count();
        assert_eq!((count(&s.test, 0), count(&s.test, 1)), (5, 5));
        assert_eq!(s.train.len() + s.val.len(), 90);
        assert_eq!((count(&s.val, 0), count(&s.val, 1)), (5, 5));
    }

    #[test]
    fn multi_tweet_authors_stay_together() {
        let examples: Vec<Example> = (0..300).map(|i| ex(i, &format!("a{}", i / 3), (i / 3) % 2)).collect();
        let s = make_splits(&examples, 2, &SplitSpec { seed: 4, ..Default::default() }).unwrap();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 300);
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let examples: Vec<Example> = (0..200).map(|i| ex(i, &format!("a{}", i / 2), i % 2)).collect();
        let spec = SplitSpec { seed: 9, ..Default::default() };
        assert_eq!(make_splits(&examples, 2, &spec).unwrap(), make_splits(&examples, 2, &spec).unwrap());
        let other = make_splits(&examples, 2, &SplitSpec { seed: 10, ..Default::default() }).unwrap();
        assert_ne!(make_splits(&examples, 2, &spec).unwrap().test, other.test);
    }

    #[test]
    fn dominant_authors_make_split_infeasible() {
        let examples: Vec<Example> = (0..100).map(|i| ex(i, if i % 2 == 0 { "x" } else { "y" }, i % 2)).collect();
        assert!(matches!(
            make_splits(&examples, 2, &SplitSpec::default()),
            Err(TrainError::InfeasibleSplit(_))
        ));
    }

    #[test]
    fn too_few_per_class() {
        let examples: Vec<Example> = (0..12).map(|i| ex(i, &format!("a{i}"), usize::from(i == 0))).collect();
        assert!(matches!(
            make_splits(&examples, 2, &SplitSpec::default()),
            Err(TrainError::InfeasibleSplit(_))
        ));
    }
}
