//! Train/test partitions: stratified k-fold, participant-grouped k-fold and
//! leave-one-site-out.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Validation(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Validation(format!("k = {k} exceeds {n} samples")));
    }
    Ok(())
}

fn deal(folds: &mut [Vec<usize>], items: &[usize], offset: &mut usize) {
    let k = folds.len();
    for &i in items {
        folds[*offset % k].push(i);
        *offset += 1;
    }
}

/// Shuffled k-fold without stratification. Fold sizes differ by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    check_k(n, k)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut SeededRng::new(seed));
    let mut folds = vec![Vec::new(); k];
    deal(&mut folds, &idx, &mut 0);
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Returns `k` disjoint test folds covering `0..labels.len()`.
///
/// Each class is shuffled and dealt round-robin, continuing from where the
/// previous class stopped, so per-class counts differ by at most one across
/// folds and fold sizes stay balanced. Falls back to [`kfold`] with a warning
/// when only one class is present or a class has fewer than `k` members.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    check_k(labels.len(), k)?;
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    if by_class.len() < 2 || by_class.values().any(|v| v.len() < k) {
        warn!(
            "stratification impossible ({} classes, smallest has {} members, k = {k}); using plain k-fold",
            by_class.len(),
            by_class.values().map(Vec::len).min().unwrap_or(0)
        );
        return kfold(labels.len(), k, seed);
    }
    let mut rng = SeededRng::new(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        deal(&mut folds, members, &mut offset);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// k-fold over groups (participants): all rows of a group share a fold.
/// Groups are stratified by the label of their first row.
pub fn group_kfold<S: AsRef<str>>(groups: &[S], labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if groups.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: groups.len(),
        });
    }
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g.as_ref()).or_default().push(i);
    }
    let keys: Vec<&str> = members.keys().copied().collect();
    let group_labels: Vec<usize> = keys.iter().map(|g| labels[members[g][0]]).collect();
    let group_folds = stratified_kfold(&group_labels, k, seed)?;
    Ok(group_folds
        .into_iter()
        .map(|gf| {
            let mut rows: Vec<usize> = gf.iter().flat_map(|&g| members[keys[g]].iter().copied()).collect();
            rows.sort_unstable();
            rows
        })
        .collect())
}

/// Indices in `0..n` not in `test`, ascending.
pub fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let t: BTreeSet<usize> = test.iter().copied().collect();
    (0..n).filter(|i| !t.contains(i)).collect()
}

/// `(train, test)` where test holds every row of `site`.
pub fn leave_one_site_out<S: AsRef<str>>(sites: &[S], site: &str) -> Result<(Vec<usize>, Vec<usize>)> {
    let distinct: BTreeSet<&str> = sites.iter().map(AsRef::as_ref).collect();
    if !distinct.contains(site) {
        return Err(Error::Validation(format!("unknown site {site:?}")));
    }
    if distinct.len() < 2 {
        return Err(Error::Validation(
            "leave-one-site-out needs at least two sites".into(),
        ));
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..sites.len()).partition(|&i| sites[i].as_ref() == site);
    Ok((train, test))
}
