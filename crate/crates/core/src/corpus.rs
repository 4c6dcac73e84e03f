//! Annotated account timelines and the pair sets derived from them.
//!
//! A corpus is a set of accounts, each holding an ordered list of posts and a
//! compromise point: the index of the first post written by someone other
//! than the owner, or [`CompromisePoint::Never`] for healthy accounts.
//!
//! Training pairs combine any two distinct pre-compromise posts of the whole
//! corpus (same account → same author). Test pairs stay inside one account:
//! a pre-compromise post against a post at or after the compromise point
//! (different author), or two posts of a healthy account (same author).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

/// Longest accepted post text, in Unicode scalar values.
pub const MAX_POST_CHARS: usize = 280;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("account {account_id}: duplicate post_id {post_id:?}")]
    DuplicatePostId { account_id: String, post_id: String },
    #[error(
        "account {account_id}: post {post_index} is not flagged compromised but follows the compromise point {compromise_point}"
    )]
    NonContiguous {
        account_id: String,
        post_index: usize,
        compromise_point: usize,
    },
    #[error("corpus contains no posts")]
    Empty,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("pair references unknown post {account_id}#{post_index}")]
    UnknownPost { account_id: String, post_index: usize },
}

/// How compromise annotations are validated on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadMode {
    /// Every post at or after the compromise point must be flagged.
    Strict,
    /// Mixed annotations are tolerated; the first flagged post still sets the point.
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub account_id: String,
    pub post_index: usize,
    pub post_id: String,
    pub timestamp: i64,
    pub text: String,
    pub compromised: bool,
}

/// Index of the first hijacker post, or `Never` for a healthy account.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompromisePoint {
    At(usize),
    Never,
}

impl CompromisePoint {
    /// True when post `index` was written by the legitimate owner.
    pub fn precedes(self, index: usize) -> bool {
        match self {
            CompromisePoint::At(t) => index < t,
            CompromisePoint::Never => true,
        }
    }

    pub fn index(self) -> Option<usize> {
        match self {
            CompromisePoint::At(t) => Some(t),
            CompromisePoint::Never => None,
        }
    }

    pub fn is_compromised(self) -> bool {
        matches!(self, CompromisePoint::At(_))
    }
}

impl fmt::Display for CompromisePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompromisePoint::At(t) => write!(f, "{t}"),
            CompromisePoint::Never => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub account_id: String,
    pub posts: Vec<Post>,
    pub compromise_point: CompromisePoint,
}

impl Account {
    fn owner_posts(&self) -> impl Iterator<Item = &Post> {
        self.posts
            .iter()
            .filter(|p| self.compromise_point.precedes(p.post_index))
    }
}

/// Accounts sorted by `account_id`; ids are unique.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub accounts: Vec<Account>,
}

/// One line of the corpus JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub account_id: String,
    pub post_id: String,
    pub ts: i64,
    pub text: String,
    pub compromised: bool,
}

impl Corpus {
    pub fn n(&self) -> usize {
        self.accounts.len()
    }

    pub fn total_posts(&self) -> usize {
        self.accounts.iter().map(|a| a.posts.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    pub fn account(&self, account_id: &str) -> Option<&Account> {
        self.accounts
            .binary_search_by(|a| a.account_id.as_str().cmp(account_id))
            .ok()
            .map(|i| &self.accounts[i])
    }

    pub fn post(&self, key: &PostKey) -> Option<&Post> {
        self.account(&key.account_id)?.posts.get(key.post_index)
    }

    pub fn posts(&self) -> impl Iterator<Item = &Post> {
        self.accounts.iter().flat_map(|a| a.posts.iter())
    }

    /// Builds a validated corpus from raw records. `line_numbers`, when given,
    /// maps each record to its source line for error messages.
    pub fn from_records(
        records: Vec<PostRecord>,
        mode: LoadMode,
        line_numbers: Option<&[usize]>,
    ) -> Result<Self, CorpusError> {
        if records.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut grouped: BTreeMap<String, Vec<PostRecord>> = BTreeMap::new();
        for (i, rec) in records.into_iter().enumerate() {
            let line = line_numbers.map_or(i + 1, |l| l[i]);
            validate_text(&rec.text, line)?;
            if rec.account_id.is_empty() {
                return Err(CorpusError::Parse {
                    line,
                    message: "empty account_id".into(),
                });
            }
            grouped.entry(rec.account_id.clone()).or_default().push(rec);
        }

        let mut accounts = Vec::with_capacity(grouped.len());
        for (account_id, mut recs) in grouped {
            recs.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.post_id.cmp(&b.post_id)));
            let mut seen = HashSet::new();
            for r in &recs {
                if !seen.insert(r.post_id.as_str()) {
                    return Err(CorpusError::DuplicatePostId {
                        account_id,
                        post_id: r.post_id.clone(),
                    });
                }
            }
            let posts: Vec<Post> = recs
                .into_iter()
                .enumerate()
                .map(|(post_index, r)| Post {
                    account_id: r.account_id,
                    post_index,
                    post_id: r.post_id,
                    timestamp: r.ts,
                    text: r.text,
                    compromised: r.compromised,
                })
                .collect();
            let compromise_point = posts
                .iter()
                .position(|p| p.compromised)
                .map_or(CompromisePoint::Never, CompromisePoint::At);
            if let (LoadMode::Strict, CompromisePoint::At(t)) = (mode, compromise_point) {
                if let Some(p) = posts[t..].iter().find(|p| !p.compromised) {
                    return Err(CorpusError::NonContiguous {
                        account_id,
                        post_index: p.post_index,
                        compromise_point: t,
                    });
                }
            }
            accounts.push(Account {
                account_id,
                posts,
                compromise_point,
            });
        }
        Ok(Corpus { accounts })
    }

    pub fn to_records(&self) -> Vec<PostRecord> {
        self.posts()
            .map(|p| PostRecord {
                account_id: p.account_id.clone(),
                post_id: p.post_id.clone(),
                ts: p.timestamp,
                text: p.text.clone(),
                compromised: p.compromised,
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for rec in self.to_records() {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn subset(&self, ids: &HashSet<&str>) -> Corpus {
        Corpus {
            accounts: self
                .accounts
                .iter()
                .filter(|a| ids.contains(a.account_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}

fn validate_text(text: &str, line: usize) -> Result<(), CorpusError> {
    if text.trim().is_empty() {
        return Err(CorpusError::Parse {
            line,
            message: "post text is empty".into(),
        });
    }
    let chars = text.chars().count();
    if chars > MAX_POST_CHARS {
        return Err(CorpusError::Parse {
            line,
            message: format!("post text has {chars} characters, limit is {MAX_POST_CHARS}"),
        });
    }
    Ok(())
}

/// Loads a corpus from JSONL. Blank lines and lines starting with `#` are skipped.
pub fn load_corpus(path: &Path, mode: LoadMode) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_corpus(BufReader::new(file), mode).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_corpus<R: BufRead>(reader: R, mode: LoadMode) -> Result<Corpus, CorpusError> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: PathBuf::new(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec: PostRecord = serde_json::from_str(trimmed).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
        lines.push(i + 1);
    }
    Corpus::from_records(records, mode, Some(&lines))
}

/// Account-level split. Healthy and compromised accounts are shuffled
/// separately and dealt proportionally so both sides see both kinds when
/// the counts allow it.
pub fn split_accounts(
    corpus: &Corpus,
    train_fraction: f64,
    seed: u64,
) -> Result<(Corpus, Corpus), CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::InvalidSplit(format!(
            "train_fraction {train_fraction} is outside (0, 1)"
        )));
    }
    let n = corpus.n();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(CorpusError::InvalidSplit(format!(
            "fraction {train_fraction} of {n} accounts leaves one side empty"
        )));
    }

    let mut rng = seed::rng(seed);
    let ids = |compromised: bool| -> Vec<&str> {
        corpus
            .accounts
            .iter()
            .filter(|a| a.compromise_point.is_compromised() == compromised)
            .map(|a| a.account_id.as_str())
            .collect()
    };
    let (mut compromised, mut healthy) = (ids(true), ids(false));
    compromised.shuffle(&mut rng);
    healthy.shuffle(&mut rng);

    let mut take_c = ((train_fraction * compromised.len() as f64).round() as usize)
        .min(compromised.len())
        .min(n_train);
    let mut take_h = n_train - take_c;
    if take_h > healthy.len() {
        take_h = healthy.len();
        take_c = n_train - take_h;
    }
    let train_ids: HashSet<&str> = compromised[..take_c]
        .iter()
        .chain(&healthy[..take_h])
        .copied()
        .collect();
    let test_ids: HashSet<&str> = corpus
        .accounts
        .iter()
        .map(|a| a.account_id.as_str())
        .filter(|id| !train_ids.contains(id))
        .collect();
    Ok((corpus.subset(&train_ids), corpus.subset(&test_ids)))
}

/// Account id plus post ordinal; orders lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PostKey {
    pub account_id: String,
    pub post_index: usize,
}

impl PostKey {
    pub fn of(post: &Post) -> Self {
        PostKey {
            account_id: post.account_id.clone(),
            post_index: post.post_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    SameAuthor,
    DifferentAuthor,
}

impl PairLabel {
    /// Training target: 1 for same author.
    pub fn target(self) -> f64 {
        match self {
            PairLabel::SameAuthor => 1.0,
            PairLabel::DifferentAuthor => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrigin {
    /// Any two pre-compromise posts of the corpus.
    Train,
    /// Two posts of one account, straddling the compromise point or both healthy.
    Test,
}

/// `left < right` in `PostKey` order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairExample {
    pub left: PostKey,
    pub right: PostKey,
    pub label: PairLabel,
    pub origin: PairOrigin,
}

impl PairExample {
    fn new(a: &Post, b: &Post, label: PairLabel, origin: PairOrigin) -> Self {
        let (ka, kb) = (PostKey::of(a), PostKey::of(b));
        let (left, right) = if ka <= kb { (ka, kb) } else { (kb, ka) };
        PairExample {
            left,
            right,
            label,
            origin,
        }
    }
}

/// Wire form of a pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub left_account: String,
    pub left_index: usize,
    pub right_account: String,
    pub right_index: usize,
    pub label: PairLabel,
    pub origin: PairOrigin,
}

impl From<&PairExample> for PairRecord {
    fn from(p: &PairExample) -> Self {
        PairRecord {
            left_account: p.left.account_id.clone(),
            left_index: p.left.post_index,
            right_account: p.right.account_id.clone(),
            right_index: p.right.post_index,
            label: p.label,
            origin: p.origin,
        }
    }
}

impl From<PairRecord> for PairExample {
    fn from(r: PairRecord) -> Self {
        PairExample {
            left: PostKey {
                account_id: r.left_account,
                post_index: r.left_index,
            },
            right: PostKey {
                account_id: r.right_account,
                post_index: r.right_index,
            },
            label: r.label,
            origin: r.origin,
        }
    }
}

pub fn write_pairs<W: Write>(mut w: W, pairs: &[PairExample]) -> std::io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut w, &PairRecord::from(p))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<PairExample>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec.into());
    }
    Ok(out)
}

pub fn load_pairs(path: &Path) -> Result<Vec<PairExample>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_pairs(BufReader::new(file))
}

/// Checks that every post referenced by `pairs` exists in `corpus`.
pub fn check_pairs(corpus: &Corpus, pairs: &[PairExample]) -> Result<(), CorpusError> {
    for key in pairs.iter().flat_map(|p| [&p.left, &p.right]) {
        if corpus.post(key).is_none() {
            return Err(CorpusError::UnknownPost {
                account_id: key.account_id.clone(),
                post_index: key.post_index,
            });
        }
    }
    Ok(())
}

/// Every unordered pair of distinct pre-compromise posts, in `(left, right)` order.
pub fn generate_train_pairs(corpus: &Corpus) -> Vec<PairExample> {
    let owner: Vec<&Post> = corpus
        .accounts
        .iter()
        .flat_map(|a| a.owner_posts())
        .collect();
    let mut out = Vec::new();
    for (i, a) in owner.iter().enumerate() {
        for b in &owner[i + 1..] {
            let label = if a.account_id == b.account_id {
                PairLabel::SameAuthor
            } else {
                PairLabel::DifferentAuthor
            };
            out.push(PairExample::new(a, b, label, PairOrigin::Train));
        }
    }
    out
}

/// Within-account test pairs. Compromised accounts contribute every
/// (owner post, hijacker post) pair; healthy accounts contribute at most
/// `healthy_sample_cap` of their post pairs, sampled per account.
pub fn generate_test_pairs(
    corpus: &Corpus,
    healthy_sample_cap: usize,
    seed: u64,
) -> Vec<PairExample> {
    let mut out = Vec::new();
    for account in &corpus.accounts {
        let posts = &account.posts;
        match account.compromise_point {
            CompromisePoint::At(t) => {
                let t = t.min(posts.len());
                for k in &posts[..t] {
                    for r in &posts[t..] {
                        out.push(PairExample::new(
                            k,
                            r,
                            PairLabel::DifferentAuthor,
                            PairOrigin::Test,
                        ));
                    }
                }
            }
            CompromisePoint::Never => {
                let m = posts.len();
                let total = m * m.saturating_sub(1) / 2;
                let chosen: Vec<usize> = if total <= healthy_sample_cap {
                    (0..total).collect()
                } else {
                    let mut rng = seed::rng(seed::derive_str(seed, &account.account_id));
                    let mut idx = sample(&mut rng, total, healthy_sample_cap).into_vec();
                    idx.sort_unstable();
                    idx
                };
                for flat in chosen {
                    let (k, r) = unrank_pair(flat, m);
                    out.push(PairExample::new(
                        &posts[k],
                        &posts[r],
                        PairLabel::SameAuthor,
                        PairOrigin::Test,
                    ));
                }
            }
        }
    }
    out
}

/// Maps a rank in `0..C(m,2)` to the pair `(k, r)`, `k < r`, in row-major order.
fn unrank_pair(mut flat: usize, m: usize) -> (usize, usize) {
    let mut k = 0;
    loop {
        let row = m - k - 1;
        if flat < row {
            return (k, k + 1 + flat);
        }
        flat -= row;
        k += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Balanced {
    pub pairs: Vec<PairExample>,
    /// Set when the input held a single label and was returned unchanged.
    pub single_label: bool,
}

/// Downsamples the majority label to at most `ratio ×` the minority count,
/// keeping the original order of surviving pairs.
pub fn balance_pairs(pairs: &[PairExample], ratio: f64, seed: u64) -> Balanced {
    assert!(ratio > 0.0, "balance ratio must be positive");
    let (same, diff): (Vec<usize>, Vec<usize>) =
        (0..pairs.len()).partition(|&i| pairs[i].label == PairLabel::SameAuthor);
    if same.is_empty() || diff.is_empty() {
        log::warn!("balance_pairs: only one label present, pairs left unchanged");
        return Balanced {
            pairs: pairs.to_vec(),
            single_label: true,
        };
    }
    let (minority, majority) = if same.len() <= diff.len() {
        (same, diff)
    } else {
        (diff, same)
    };
    let cap = ((ratio * minority.len() as f64).floor() as usize).max(1);
    let mut keep = vec![false; pairs.len()];
    for &i in &minority {
        keep[i] = true;
    }
    if majority.len() <= cap {
        for &i in &majority {
            keep[i] = true;
        }
    } else {
        let mut rng = seed::rng(seed);
        for j in sample(&mut rng, majority.len(), cap) {
            keep[majority[j]] = true;
        }
    }
    Balanced {
        pairs: pairs
            .iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(p, _)| p.clone())
            .collect(),
        single_label: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(account: &str, id: &str, ts: i64, compromised: bool) -> PostRecord {
        PostRecord {
            account_id: account.into(),
            post_id: id.into(),
            ts,
            text: format!("post {id}"),
            compromised,
        }
    }

    fn corpus_with_flags(flags: &[&[bool]]) -> Corpus {
        let mut recs = Vec::new();
        for (a, fl) in flags.iter().enumerate() {
            for (i, &f) in fl.iter().enumerate() {
                recs.push(rec(&format!("a{a}"), &format!("p{i}"), i as i64, f));
            }
        }
        Corpus::from_records(recs, LoadMode::Label, None).unwrap()
    }

    #[test]
    fn two_healthy_accounts_load() {
        let c = corpus_with_flags(&[&[false; 3], &[false; 3]]);
        assert_eq!(c.n(), 2);
        assert_eq!(c.total_posts(), 6);
        assert!(c
            .accounts
            .iter()
            .all(|a| a.compromise_point == CompromisePoint::Never));
    }

    #[test]
    fn compromise_point_is_first_flag() {
        let c = corpus_with_flags(&[&[false, false, true, true]]);
        assert_eq!(c.accounts[0].compromise_point, CompromisePoint::At(2));
    }

    #[test]
    fn strict_mode_rejects_non_contiguous_flags() {
        let recs = vec![
            rec("acct", "1", 1, false),
            rec("acct", "2", 2, true),
            rec("acct", "3", 3, false),
        ];
        let err = Corpus::from_records(recs.clone(), LoadMode::Strict, None).unwrap_err();
        assert!(matches!(&err, CorpusError::NonContiguous { account_id, .. } if account_id == "acct"));
        assert!(err.to_string().contains("acct"));
        let c = Corpus::from_records(recs, LoadMode::Label, None).unwrap();
        assert_eq!(c.accounts[0].compromise_point, CompromisePoint::At(1));
    }

    #[test]
    fn posts_ordered_by_timestamp_then_id() {
        let recs = vec![rec("a", "z", 5, false), rec("a", "b", 1, false), rec("a", "a", 5, false)];
        let c = Corpus::from_records(recs, LoadMode::Strict, None).unwrap();
        let ids: Vec<_> = c.accounts[0].posts.iter().map(|p| p.post_id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "z"]);
        let idx: Vec<_> = c.accounts[0].posts.iter().map(|p| p.post_index).collect();
        assert_eq!(idx, [0, 1, 2]);
    }

    #[test]
    fn read_errors_carry_line_numbers() {
        let src = "# header\n{\"account_id\":\"a\",\"post_id\":\"1\",\"ts\":1,\"text\":\"hi\",\"compromised\":false}\n{bad json}\n";
        match read_corpus(src.as_bytes(), LoadMode::Strict) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let blank = "{\"account_id\":\"a\",\"post_id\":\"1\",\"ts\":1,\"text\":\"  \",\"compromised\":false}\n";
        assert!(matches!(
            read_corpus(blank.as_bytes(), LoadMode::Strict),
            Err(CorpusError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read_corpus("# only a comment\n".as_bytes(), LoadMode::Strict),
            Err(CorpusError::Empty)
        ));
    }

    #[test]
    fn duplicate_post_id_rejected() {
        let recs = vec![rec("a", "1", 1, false), rec("a", "1", 2, false)];
        assert!(matches!(
            Corpus::from_records(recs, LoadMode::Strict, None),
            Err(CorpusError::DuplicatePostId { .. })
        ));
    }

    #[test]
    fn overlong_text_rejected() {
        let mut r = rec("a", "1", 1, false);
        r.text = "x".repeat(MAX_POST_CHARS + 1);
        assert!(Corpus::from_records(vec![r], LoadMode::Strict, None).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let flags: Vec<Vec<bool>> = (0..10)
            .map(|i| if i % 2 == 0 { vec![false, true] } else { vec![false, false] })
            .collect();
        let refs: Vec<&[bool]> = flags.iter().map(|v| v.as_slice()).collect();
        let c = corpus_with_flags(&refs);
        let (tr, te) = split_accounts(&c, 0.8, 7).unwrap();
        assert_eq!((tr.n(), te.n()), (8, 2));
        for a in &tr.accounts {
            assert!(te.account(&a.account_id).is_none());
        }
        assert_eq!(split_accounts(&c, 0.8, 7).unwrap(), (tr, te));

        let two = corpus_with_flags(&[&[false], &[false]]);
        let (a, b) = split_accounts(&two, 0.5, 1).unwrap();
        assert_eq!((a.n(), b.n()), (1, 1));
        assert!(split_accounts(&two, 0.1, 1).is_err());
        assert!(split_accounts(&two, 0.9, 1).is_err());
    }

    #[test]
    fn train_pair_counts_two_healthy() {
        let c = corpus_with_flags(&[&[false; 3], &[false; 3]]);
        let pairs = generate_train_pairs(&c);
        let same = pairs.iter().filter(|p| p.label == PairLabel::SameAuthor).count();
        assert_eq!((same, pairs.len() - same), (6, 9));
        assert!(pairs.iter().all(|p| p.left < p.right));
    }

    #[test]
    fn train_pairs_skip_hijacked_posts() {
        let c = corpus_with_flags(&[&[false, false, true, true]]);
        let pairs = generate_train_pairs(&c);
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].left.post_index, pairs[0].right.post_index), (0, 1));
        assert!(generate_train_pairs(&corpus_with_flags(&[&[false]])).is_empty());
    }

    #[test]
    fn test_pairs_examples() {
        let c = corpus_with_flags(&[&[false, false, false, true, true]]);
        let pairs = generate_test_pairs(&c, 10, 0);
        assert_eq!(pairs.len(), 6);
        assert!(pairs.iter().all(|p| p.label == PairLabel::DifferentAuthor));

        let h = corpus_with_flags(&[&[false; 3]]);
        let pairs = generate_test_pairs(&h, 10, 0);
        assert_eq!(pairs.len(), 3);
        assert!(pairs.iter().all(|p| p.label == PairLabel::SameAuthor));

        let t0 = corpus_with_flags(&[&[true, true]]);
        assert!(generate_test_pairs(&t0, 10, 0).is_empty());
    }

    #[test]
    fn healthy_cap_samples_deterministically() {
        let h = corpus_with_flags(&[&[false; 10]]);
        let a = generate_test_pairs(&h, 7, 3);
        assert_eq!(a.len(), 7);
        assert_eq!(a, generate_test_pairs(&h, 7, 3));
        let distinct: HashSet<_> = a.iter().collect();
        assert_eq!(distinct.len(), 7);
    }

    #[test]
    fn unrank_covers_all_pairs() {
        let m = 6;
        let got: Vec<_> = (0..15).map(|f| unrank_pair(f, m)).collect();
        let want: Vec<_> = (0..m).flat_map(|k| (k + 1..m).map(move |r| (k, r))).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn balance_examples() {
        let c = corpus_with_flags(&[&[false; 3], &[false; 3]]);
        let pairs = generate_train_pairs(&c);
        let b = balance_pairs(&pairs, 1.0, 5);
        let same = b.pairs.iter().filter(|p| p.label == PairLabel::SameAuthor).count();
        assert_eq!((same, b.pairs.len() - same), (6, 6));
        assert_eq!(b, balance_pairs(&pairs, 1.0, 5));
        assert_eq!(balance_pairs(&pairs, 2.0, 5).pairs, pairs);

        let only_same: Vec<_> = pairs
            .iter()
            .filter(|p| p.label == PairLabel::SameAuthor)
            .cloned()
            .collect();
        let b = balance_pairs(&only_same, 1.0, 5);
        assert!(b.single_label);
        assert_eq!(b.pairs, only_same);
    }

    #[test]
    fn pair_jsonl_round_trip() {
        let c = corpus_with_flags(&[&[false; 2], &[false, true]]);
        let pairs = generate_train_pairs(&c);
        let mut buf = Vec::new();
        write_pairs(&mut buf, &pairs).unwrap();
        let line = std::str::from_utf8(&buf).unwrap().lines().next().unwrap();
        assert_eq!(
            line,
            r#"{"left_account":"a0","left_index":0,"right_account":"a0","right_index":1,"label":"same_author","origin":"train"}"#
        );
        assert_eq!(read_pairs(buf.as_slice()).unwrap(), pairs);
        check_pairs(&c, &pairs).unwrap();
    }
}
