mod common;

use std::collections::BTreeSet;

use authorguard::corpus::{generate_test_pairs, generate_train_pairs, split_accounts};
use authorguard::synth::{generate_corpus, SynthSpec};
use authorguard::{CompromisePoint, PairLabel};
use common::oracle::{as_set, random_corpus, test_oracle, train_oracle};
use proptest::prelude::*;

fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

proptest! {
    #[test]
    fn generated_pairs_match_predicates(seed in any::<u64>()) {
        let corpus = random_corpus(seed, 6, 6);
        prop_assert_eq!(as_set(&generate_train_pairs(&corpus)), train_oracle(&corpus));
        prop_assert_eq!(as_set(&generate_test_pairs(&corpus, usize::MAX, seed)), test_oracle(&corpus));
    }

    #[test]
    fn capped_healthy_pairs_are_a_sample_of_the_full_set(seed in any::<u64>(), cap in 0usize..20) {
        let corpus = random_corpus(seed, 6, 8);
        let full = test_oracle(&corpus);
        let capped = generate_test_pairs(&corpus, cap, seed);
        prop_assert_eq!(as_set(&capped).len(), capped.len());
        prop_assert!(as_set(&capped).is_subset(&full));
        for account in &corpus.accounts {
            let mine = capped.iter().filter(|p| p.left.account_id == account.account_id);
            let expected = match account.compromise_point {
                CompromisePoint::At(t) => t * (account.posts.len() - t),
                CompromisePoint::Never => choose2(account.posts.len()).min(cap),
            };
            prop_assert_eq!(mine.count(), expected);
        }
    }
}

#[test]
fn split_pairs_never_cross_sides() {
    for seed in 0..10 {
        let corpus = random_corpus(seed, 6, 6);
        if corpus.n() < 2 {
            continue;
        }
        let (train, test) = split_accounts(&corpus, 0.5, seed).unwrap();
        let train_ids: BTreeSet<_> = train.accounts.iter().map(|a| a.account_id.clone()).collect();
        let test_ids: BTreeSet<_> = test.accounts.iter().map(|a| a.account_id.clone()).collect();
        assert!(train_ids.is_disjoint(&test_ids));
        assert_eq!(train_ids.len() + test_ids.len(), corpus.n());
        for p in generate_train_pairs(&train) {
            assert!(train_ids.contains(&p.left.account_id) && train_ids.contains(&p.right.account_id));
        }
        for p in generate_test_pairs(&test, 50, seed) {
            assert!(test_ids.contains(&p.left.account_id) && test_ids.contains(&p.right.account_id));
        }
    }
}

#[test]
fn synthetic_pair_counts_follow_from_compromise_points() {
    let spec = SynthSpec {
        n_accounts: 20,
        posts_per_account: 30,
        fraction_compromised: 0.5,
        style_overlap: 0.5,
        ..SynthSpec::default()
    };
    let out = generate_corpus(&spec, 11).unwrap();
    let m = 30;
    let points: Vec<CompromisePoint> = out.manifest.compromise_points.values().copied().collect();
    assert_eq!(points.len(), 20);
    assert_eq!(points.iter().filter(|p| p.is_compromised()).count(), 10);

    let owner: Vec<usize> = points.iter().map(|p| p.index().unwrap_or(m)).collect();
    let total_owner: usize = owner.iter().sum();
    let train = generate_train_pairs(&out.corpus);
    let same = train.iter().filter(|p| p.label == PairLabel::SameAuthor).count();
    assert_eq!(train.len(), choose2(total_owner));
    assert_eq!(same, owner.iter().map(|&o| choose2(o)).sum::<usize>());

    let cap = 50;
    let test = generate_test_pairs(&out.corpus, cap, 11);
    let diff = test.iter().filter(|p| p.label == PairLabel::DifferentAuthor).count();
    let expected_diff: usize = points.iter().filter_map(|p| p.index()).map(|t| t * (m - t)).sum();
    assert_eq!(diff, expected_diff);
    assert_eq!(test.len() - diff, 10 * cap.min(choose2(m)));
}
