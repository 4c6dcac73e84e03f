//! Application phase: each incoming post is scored against the account's
//! last accepted post and either accepted (it becomes the new baseline) or
//! flagged.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Account, Corpus, Post};
use crate::verifier::Verifier;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("post {post_id} of account {account_id} has empty text")]
    EmptyPost { account_id: String, post_id: String },
    #[error("post {post_id} belongs to account {found}, not {expected}")]
    WrongAccount {
        expected: String,
        found: String,
        post_id: String,
    },
    #[error("detection log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What happens to the baseline when a post is flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselinePolicy {
    /// Flagged posts never replace the baseline.
    #[default]
    Quarantine,
    /// Every post replaces the baseline, flagged or not.
    AlwaysUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub post_id: String,
    pub indices: Vec<usize>,
    pub true_length: usize,
    /// Encoder output for the baseline as the left pair member.
    pub hidden: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountState {
    pub account_id: String,
    pub baseline: Option<Baseline>,
    pub posts_seen: usize,
    pub flags_raised: usize,
}

impl AccountState {
    pub fn new(account_id: impl Into<String>) -> Self {
        AccountState {
            account_id: account_id.into(),
            baseline: None,
            posts_seen: 0,
            flags_raised: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Accepted,
    Flagged,
    Bootstrap,
}

/// One line of the detection log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub account_id: String,
    pub post_id: String,
    /// `None` for the bootstrap post, which has nothing to be compared with.
    pub p_same: Option<f64>,
    pub verdict: Verdict,
    pub threshold: f64,
    pub ts: i64,
}

fn check_tau(tau: f64) -> Result<(), DetectionError> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(DetectionError::Threshold(tau))
    }
}

/// Scores `post` against the account's baseline and returns the next state.
/// `p_same == tau` counts as accepted.
pub fn ingest_post(
    state: &AccountState,
    verifier: &Verifier,
    tau: f64,
    post: &Post,
    policy: BaselinePolicy,
) -> Result<(AccountState, DetectionEvent), DetectionError> {
    check_tau(tau)?;
    if post.account_id != state.account_id {
        return Err(DetectionError::WrongAccount {
            expected: state.account_id.clone(),
            found: post.account_id.clone(),
            post_id: post.post_id.clone(),
        });
    }
    if post.text.trim().is_empty() {
        return Err(DetectionError::EmptyPost {
            account_id: post.account_id.clone(),
            post_id: post.post_id.clone(),
        });
    }
    let (indices, true_length) = verifier.encode_text(&post.text);
    let model = &verifier.model;
    let as_baseline = |indices: Vec<usize>| Baseline {
        post_id: post.post_id.clone(),
        hidden: model.encode_side(false, &indices, true_length),
        indices,
        true_length,
    };

    let mut next = state.clone();
    next.posts_seen += 1;
    let (p_same, verdict) = match &state.baseline {
        None => {
            next.baseline = Some(as_baseline(indices));
            (None, Verdict::Bootstrap)
        }
        Some(base) => {
            let shared = model.encoder_right.is_none();
            let h = model.encode_side(!shared, &indices, true_length);
            let p = model.score_hidden(&base.hidden, &h);
            let verdict = if p >= tau { Verdict::Accepted } else { Verdict::Flagged };
            if verdict == Verdict::Flagged {
                next.flags_raised += 1;
            }
            if verdict == Verdict::Accepted || policy == BaselinePolicy::AlwaysUpdate {
                next.baseline = Some(as_baseline(indices));
            }
            (Some(p), verdict)
        }
    };
    let event = DetectionEvent {
        account_id: post.account_id.clone(),
        post_id: post.post_id.clone(),
        p_same,
        verdict,
        threshold: tau,
        ts: post.timestamp,
    };
    Ok((next, event))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionDelay {
    /// Hijacker posts published before the first flag.
    Detected(usize),
    NotDetected,
    /// Healthy account.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub account_id: String,
    pub events: Vec<DetectionEvent>,
    pub delay: DetectionDelay,
    /// Flags raised on posts written by the legitimate owner.
    pub false_flags: usize,
    pub owner_posts: usize,
}

/// Feeds an account's posts in order through [`ingest_post`].
pub fn replay_timeline(
    verifier: &Verifier,
    tau: f64,
    account: &Account,
    policy: BaselinePolicy,
) -> Result<Replay, DetectionError> {
    let mut state = AccountState::new(account.account_id.clone());
    let mut events = Vec::with_capacity(account.posts.len());
    for post in &account.posts {
        let (next, event) = ingest_post(&state, verifier, tau, post, policy)?;
        state = next;
        events.push(event);
    }
    let cp = account.compromise_point;
    let flagged = |i: &usize| events[*i].verdict == Verdict::Flagged;
    let false_flags = (0..events.len()).filter(|i| cp.precedes(*i) && flagged(i)).count();
    let owner_posts = (0..events.len()).filter(|&i| cp.precedes(i)).count();
    let delay = match cp.index() {
        None => DetectionDelay::NotApplicable,
        Some(t) => (t..events.len())
            .find(flagged)
            .map_or(DetectionDelay::NotDetected, |i| DetectionDelay::Detected(i - t)),
    };
    Ok(Replay {
        account_id: account.account_id.clone(),
        events,
        delay,
        false_flags,
        owner_posts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub accounts: usize,
    pub compromised_accounts: usize,
    pub detected: usize,
    pub median_delay: Option<f64>,
    pub max_delay: Option<usize>,
    pub healthy_posts: usize,
    pub healthy_flags: usize,
    /// Flags on healthy accounts over posts on healthy accounts.
    pub healthy_false_flag_rate: Option<f64>,
    /// Flags on owner-written posts over all owner-written posts.
    pub owner_false_flag_rate: Option<f64>,
}

pub fn replay_corpus(
    verifier: &Verifier,
    tau: f64,
    corpus: &Corpus,
    policy: BaselinePolicy,
) -> Result<Vec<Replay>, DetectionError> {
    corpus
        .accounts
        .iter()
        .map(|a| replay_timeline(verifier, tau, a, policy))
        .collect()
}

pub fn summarize(replays: &[Replay]) -> ReplaySummary {
    let mut delays = Vec::new();
    let mut compromised = 0;
    let (mut healthy_posts, mut healthy_flags) = (0, 0);
    let (mut owner_posts, mut owner_flags) = (0, 0);
    for r in replays {
        owner_posts += r.owner_posts;
        owner_flags += r.false_flags;
        match r.delay {
            DetectionDelay::NotApplicable => {
                healthy_posts += r.owner_posts;
                healthy_flags += r.false_flags;
            }
            DetectionDelay::Detected(d) => {
                compromised += 1;
                delays.push(d);
            }
            DetectionDelay::NotDetected => compromised += 1,
        }
    }
    delays.sort_unstable();
    let median_delay = match delays.len() {
        0 => None,
        n if n % 2 == 1 => Some(delays[n / 2] as f64),
        n => Some((delays[n / 2 - 1] + delays[n / 2]) as f64 / 2.0),
    };
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    ReplaySummary {
        accounts: replays.len(),
        compromised_accounts: compromised,
        detected: delays.len(),
        median_delay,
        max_delay: delays.last().copied(),
        healthy_posts,
        healthy_flags,
        healthy_false_flag_rate: rate(healthy_flags, healthy_posts),
        owner_false_flag_rate: rate(owner_flags, owner_posts),
    }
}

pub fn write_detection_log<W: Write>(mut w: W, events: &[DetectionEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_detection_log<R: BufRead>(reader: R) -> Result<Vec<DetectionEvent>, DetectionError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DetectionError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
