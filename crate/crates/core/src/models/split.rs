use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{prng_stream, streams};

fn by_class(labels: &[usize], ids: impl Iterator<Item = usize>) -> BTreeMap<usize, Vec<usize>> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in ids {
        classes.entry(labels[i]).or_default().push(i);
    }
    classes
}

/// Stratified `folds`-way split as `(train ids, test ids)` per fold.
///
/// Each class is shuffled with the seeded generator and dealt round-robin
/// over the folds; the dealing position carries over between classes so
/// fold sizes differ by at most one.
pub fn stratified_kfold(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    let classes = by_class(labels, 0..labels.len());
    for (&class, members) in &classes {
        if members.len() < folds {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                folds,
            });
        }
    }
    let mut rng = prng_stream(seed, streams::SPLIT);
    let mut fold_of = vec![0; labels.len()];
    let mut next = 0;
    for (_, mut members) in classes {
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok((0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold_of[i] == f);
            (train, test)
        })
        .collect())
}

/// Split `ids` into `(keep, held out)` with about `fraction` of every class
/// held out (at least one item overall when `ids` has two or more).
pub fn stratified_holdout(labels: &[usize], ids: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = prng_stream(seed, streams::SPLIT ^ 0x10);
    let mut keep = Vec::new();
    let mut held = Vec::new();
    for (_, mut members) in by_class(labels, ids.iter().copied()) {
        members.shuffle(&mut rng);
        let take = ((members.len() as f64 * fraction).round() as usize).min(members.len().saturating_sub(1));
        held.extend_from_slice(&members[..take]);
        keep.extend_from_slice(&members[take..]);
    }
    if held.is_empty() && keep.len() >= 2 {
        held.push(keep.pop().expect("non-empty"));
    }
    keep.sort_unstable();
    held.sort_unstable();
    (keep, held)
}
