//! Brute-force pair enumeration straight from the labelling predicates, plus a
//! seeded random-corpus builder. Shared with the CLI acceptance suite.

#![allow(dead_code)]

use std::collections::BTreeSet;

use authorguard::corpus::{LoadMode, PostKey, PostRecord};
use authorguard::{CompromisePoint, Corpus, PairExample, PairLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type PairSet = BTreeSet<(PostKey, PostKey, PairLabel)>;

pub fn as_set(pairs: &[PairExample]) -> PairSet {
    pairs
        .iter()
        .map(|p| (p.left.clone(), p.right.clone(), p.label))
        .collect()
}

fn before(t: CompromisePoint, i: usize) -> bool {
    match t {
        CompromisePoint::At(t) => i < t,
        CompromisePoint::Never => true,
    }
}

/// Every pair of distinct owner posts; same account means same author.
pub fn train_oracle(corpus: &Corpus) -> PairSet {
    let mut out = PairSet::new();
    for a in &corpus.accounts {
        for b in &corpus.accounts {
            for p in &a.posts {
                for q in &b.posts {
                    let (kp, kq) = (PostKey::of(p), PostKey::of(q));
                    if kp >= kq || !before(a.compromise_point, p.post_index) || !before(b.compromise_point, q.post_index) {
                        continue;
                    }
                    let label = if a.account_id == b.account_id {
                        PairLabel::SameAuthor
                    } else {
                        PairLabel::DifferentAuthor
                    };
                    out.insert((kp, kq, label));
                }
            }
        }
    }
    out
}

/// Within-account pairs: straddling the compromise point is different-author,
/// any pair of a never-compromised account is same-author.
pub fn test_oracle(corpus: &Corpus) -> PairSet {
    let mut out = PairSet::new();
    for a in &corpus.accounts {
        for p in &a.posts {
            for q in &a.posts {
                let (k, r) = (p.post_index, q.post_index);
                if k >= r {
                    continue;
                }
                let label = match a.compromise_point {
                    CompromisePoint::At(t) if k < t && r >= t => PairLabel::DifferentAuthor,
                    CompromisePoint::At(_) => continue,
                    CompromisePoint::Never => PairLabel::SameAuthor,
                };
                out.insert((PostKey::of(p), PostKey::of(q), label));
            }
        }
    }
    out
}

/// Up to `max_accounts` accounts of 1..=`max_posts` posts; about half are
/// compromised at a random point (possibly 0 or past the last post never).
pub fn random_corpus(seed: u64, max_accounts: usize, max_posts: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_accounts);
    let mut records = Vec::new();
    for a in 0..n {
        let m = rng.random_range(1..=max_posts);
        let t = if rng.random_bool(0.5) {
            rng.random_range(0..m)
        } else {
            m
        };
        for i in 0..m {
            records.push(PostRecord {
                account_id: format!("u{a}"),
                post_id: format!("u{a}-{i}"),
                ts: 1000 + i as i64,
                text: format!("word{} word{}", rng.random_range(0..9), i),
                compromised: i >= t,
            });
        }
    }
    Corpus::from_records(records, LoadMode::Strict, None).expect("generated corpus is valid")
}
