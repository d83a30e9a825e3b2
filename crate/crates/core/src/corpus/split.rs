//! Class balancing and holdout splitting.

use super::types::{LabeledExample, TopCategory};
use super::CorpusError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Duplicates minority-class examples, drawn uniformly with replacement,
/// until both classes have equal counts. Originals keep their order and come
/// first.
pub fn oversample_balance(examples: &[LabeledExample], seed: u64) -> Result<Vec<LabeledExample>, CorpusError> {
    let of = |label| examples.iter().filter(|e| e.label == label).collect::<Vec<_>>();
    let info = of(TopCategory::Informational);
    let other = of(TopCategory::NonInformational);
    for (label, members) in [(TopCategory::Informational, &info), (TopCategory::NonInformational, &other)] {
        if members.is_empty() {
            return Err(CorpusError::MissingClass(label));
        }
    }
    let (minority, deficit) = if info.len() < other.len() { (&info, other.len() - info.len()) } else { (&other, info.len() - other.len()) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = examples.to_vec();
    out.extend((0..deficit).map(|_| minority[rng.random_range(0..minority.len())].clone()));
    Ok(out)
}

/// Random `n`-item holdout. Both parts keep the input order.
pub fn split_holdout<T: Clone>(items: &[T], n: usize, seed: u64) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if n > items.len() {
        return Err(CorpusError::HoldoutTooLarge { requested: n, available: items.len() });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_holdout = vec![false; items.len()];
    for &i in &order[..n] {
        in_holdout[i] = true;
    }
    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for (item, held) in items.iter().zip(in_holdout) {
        if held {
            holdout.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    Ok((train, holdout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn make(info: usize, other: usize) -> Vec<LabeledExample> {
        (0..info)
            .map(|i| LabeledExample { post_text: format!("info {i}"), label: TopCategory::Informational })
            .chain((0..other).map(|i| LabeledExample { post_text: format!("other {i}"), label: TopCategory::NonInformational }))
            .collect()
    }

    fn counts(v: &[LabeledExample]) -> (usize, usize) {
        let i = v.iter().filter(|e| e.label == TopCategory::Informational).count();
        (i, v.len() - i)
    }

    #[test]
    fn balances_to_majority() {
        assert_eq!(counts(&oversample_balance(&make(70, 30), 1).unwrap()), (70, 70));
        let even = make(50, 50);
        assert_eq!(oversample_balance(&even, 1).unwrap(), even);
        // Table counts: 1057 informational of N=2300, 631 + 612 non-informational
        assert_eq!(counts(&oversample_balance(&make(1057, 631 + 612), 9).unwrap()), (1243, 1243));
    }

    #[test]
    fn missing_class() {
        assert!(matches!(oversample_balance(&make(3, 0), 1), Err(CorpusError::MissingClass(TopCategory::NonInformational))));
    }

    #[test]
    fn holdout_sizes() {
        let items: Vec<u32> = (0..10).collect();
        let a = split_holdout(&items, 3, 1).unwrap();
        assert_eq!(a, split_holdout(&items, 3, 1).unwrap());
        assert_eq!(a.1.len(), 3);
        let (train, hold) = split_holdout(&items, 10, 1).unwrap();
        assert!(train.is_empty() && hold.len() == 10);
        assert!(split_holdout(&items, 11, 1).is_err());
        let big: Vec<u32> = (0..81_000).collect();
        let (train, hold) = split_holdout(&big, 2000, 4).unwrap();
        assert_eq!((train.len(), hold.len()), (79_000, 2000));
    }

    proptest! {
        #[test]
        fn oversampling_only_adds(info in 1usize..40, other in 1usize..40, seed: u64) {
            let input = make(info, other);
            let out = oversample_balance(&input, seed).unwrap();
            prop_assert!(out.len() >= input.len());
            prop_assert_eq!(&out[..input.len()], &input[..]);
            let (a, b) = counts(&out);
            prop_assert_eq!(a, b);
            prop_assert!(out[input.len()..].iter().all(|e| input.contains(e)));
        }

        #[test]
        fn holdout_partitions(len in 0usize..60, frac in 0.0f64..=1.0, seed: u64) {
            let items: Vec<usize> = (0..len).collect();
            let n = (len as f64 * frac) as usize;
            let (train, hold) = split_holdout(&items, n, seed).unwrap();
            prop_assert_eq!(hold.len(), n);
            let mut all: Vec<usize> = train.iter().chain(&hold).copied().collect();
            all.sort();
            prop_assert_eq!(all, items);
        }
    }
}
