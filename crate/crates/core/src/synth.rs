//! Synthetic corpora with per-author styles and known compromise points.
//!
//! Every author draws a random slice of a shared pseudo-word pool, ranks it,
//! and writes posts by sampling words Zipf-weighted over that slice, sprinkled
//! with hashtags, mentions and links at author-specific rates. Slices of
//! different authors may intersect. A hijacker reuses the owner's slice except
//! for a `1 - style_overlap` fraction of positions, which get pool words the
//! owner never uses.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CompromisePoint, Corpus, CorpusError, LoadMode, PostRecord};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error("compromise range {range:?} admits no point inside 1..{posts} posts")]
    NoCompromisePoint { range: (f64, f64), posts: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_accounts: usize,
    pub posts_per_account: usize,
    pub fraction_compromised: f64,
    /// Shared fraction of owner and hijacker word slices.
    pub style_overlap: f64,
    /// Compromise point bounds as fractions of the timeline length.
    pub compromise_point_range: (f64, f64),
    /// Words per author slice.
    pub slice_size: usize,
    /// Words in the shared pool that slices are drawn from.
    pub pool_size: usize,
    /// Range the per-author Zipf exponent is drawn from.
    pub zipf_exponent_range: (f64, f64),
    /// Range the per-author mean post length (in words) is drawn from.
    pub mean_post_length_range: (usize, usize),
    /// Hijackers copy the owner's Zipf exponent, length and rates.
    pub inherit_style_params: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_accounts: 20,
            posts_per_account: 30,
            fraction_compromised: 0.5,
            style_overlap: 0.0,
            compromise_point_range: (1.0 / 3.0, 2.0 / 3.0),
            slice_size: 40,
            pool_size: 4000,
            zipf_exponent_range: (0.8, 1.3),
            mean_post_length_range: (6, 12),
            inherit_style_params: false,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.n_accounts == 0 || self.n_accounts > 100_000 {
            return bad("n_accounts must be in 1..=100000");
        }
        if self.posts_per_account == 0 || self.posts_per_account > 10_000 {
            return bad("posts_per_account must be in 1..=10000");
        }
        if !(0.0..=1.0).contains(&self.fraction_compromised) {
            return bad("fraction_compromised must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.style_overlap) {
            return bad("style_overlap must be in [0, 1]");
        }
        let (lo, hi) = self.compromise_point_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad("compromise_point_range must satisfy 0 <= lo <= hi <= 1");
        }
        let (zlo, zhi) = self.zipf_exponent_range;
        if !(zlo > 0.0 && zlo <= zhi && zhi <= 4.0) {
            return bad("zipf_exponent_range must satisfy 0 < lo <= hi <= 4");
        }
        let (llo, lhi) = self.mean_post_length_range;
        if llo < 3 || llo > lhi || lhi > 60 {
            return bad("mean_post_length_range must satisfy 3 <= lo <= hi <= 60");
        }
        if self.slice_size == 0 {
            return bad("slice_size must be positive");
        }
        if self.pool_size < 2 * self.slice_size || self.pool_size > POOL_SIZE {
            return bad("pool_size must be at least 2 * slice_size and at most 421875");
        }
        Ok(())
    }

    pub fn n_compromised(&self) -> usize {
        (self.fraction_compromised * self.n_accounts as f64).round() as usize
    }

    /// Inclusive range of admissible compromise indices.
    fn point_bounds(&self) -> Result<(usize, usize), SynthError> {
        let m = self.posts_per_account;
        let (lo, hi) = self.compromise_point_range;
        let lo_i = ((lo * m as f64).ceil() as usize).max(1);
        let hi_i = ((hi * m as f64).floor() as usize).min(m.saturating_sub(1));
        if m < 2 || lo_i > hi_i {
            return Err(SynthError::NoCompromisePoint {
                range: self.compromise_point_range,
                posts: m,
            });
        }
        Ok((lo_i, hi_i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleProfile {
    /// Words in Zipf rank order.
    pub vocabulary: Vec<String>,
    pub zipf_exponent: f64,
    pub mean_post_length: usize,
    pub hashtag_rate: f64,
    pub mention_rate: f64,
    pub url_rate: f64,
    pub seed: u64,
}

impl StyleProfile {
    fn draw_params(vocabulary: Vec<String>, spec: &SynthSpec, rng: &mut ChaCha8Rng, seed: u64) -> Self {
        let (zlo, zhi) = spec.zipf_exponent_range;
        let (llo, lhi) = spec.mean_post_length_range;
        StyleProfile {
            vocabulary,
            zipf_exponent: rng.random_range(zlo..=zhi),
            mean_post_length: rng.random_range(llo..=lhi),
            hashtag_rate: rng.random_range(0.0..0.3),
            mention_rate: rng.random_range(0.0..0.3),
            url_rate: rng.random_range(0.0..0.3),
            seed,
        }
    }

    fn weights(&self) -> WeightedIndex<f64> {
        let w: Vec<f64> = (1..=self.vocabulary.len())
            .map(|r| (r as f64).powf(-self.zipf_exponent))
            .collect();
        WeightedIndex::new(w).expect("vocabulary is nonempty")
    }

    /// Samples one post of at most 280 characters.
    pub fn sample_post(&self, rng: &mut ChaCha8Rng) -> String {
        let zipf = self.weights();
        self.sample_with(&zipf, rng)
    }

    fn sample_with(&self, zipf: &WeightedIndex<f64>, rng: &mut ChaCha8Rng) -> String {
        let m = self.mean_post_length;
        let len = rng.random_range(m.saturating_sub(3).max(1)..=m + 3);
        let mut words: Vec<String> = (0..len)
            .map(|_| self.vocabulary[zipf.sample(rng)].clone())
            .collect();
        if rng.random_bool(self.hashtag_rate) {
            let tag = format!("#{}", self.vocabulary[zipf.sample(rng)]);
            let at = rng.random_range(0..=words.len());
            words.insert(at, tag);
        }
        if rng.random_bool(self.mention_rate) {
            let handle = format!("@{}", pool_word(rng.random_range(0..POOL_SIZE)));
            words.insert(0, handle);
        }
        if rng.random_bool(self.url_rate) {
            let code: String = (0..10).map(|_| char::from(ALNUM[rng.random_range(0..ALNUM.len())])).collect();
            words.push(format!("https://t.co/{code}"));
        }
        truncate_words(&words, 280)
    }
}

const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
const CONSONANTS: &[u8] = b"bdfghklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const SYLLABLES: usize = 75;
const POOL_SIZE: usize = SYLLABLES * SYLLABLES * SYLLABLES;
/// Coprime with the pool size, so `i -> i * STRIDE mod POOL_SIZE` is a bijection.
const STRIDE: usize = 7919;

/// The `i`-th word of the pseudo-word pool; distinct `i < POOL_SIZE` give distinct words.
pub fn pool_word(i: usize) -> String {
    let mut k = (i % POOL_SIZE) * STRIDE % POOL_SIZE;
    let mut w = String::with_capacity(6);
    for _ in 0..3 {
        let s = k % SYLLABLES;
        k /= SYLLABLES;
        w.push(char::from(CONSONANTS[s / VOWELS.len()]));
        w.push(char::from(VOWELS[s % VOWELS.len()]));
    }
    w
}

fn truncate_words(words: &[String], max_chars: usize) -> String {
    let mut out = String::new();
    let mut chars = 0;
    for w in words {
        let need = w.chars().count() + usize::from(!out.is_empty());
        if chars + need > max_chars {
            break;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
        chars += need;
    }
    out
}

/// Ground truth written next to a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub spec: SynthSpec,
    pub seed: u64,
    pub compromise_points: BTreeMap<String, CompromisePoint>,
    pub styles: BTreeMap<String, AccountStyles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountStyles {
    pub owner: StyleProfile,
    pub hijacker: Option<StyleProfile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub manifest: SynthManifest,
}

const SALT_CHOICE: u64 = 0xC0_0001;
const SALT_OWNER: u64 = 1;
const SALT_HIJACKER: u64 = 2;
const SALT_POINT: u64 = 3;
const SALT_TEXT: u64 = 4;
const BASE_TS: i64 = 1_514_764_800;

pub fn account_id(i: usize) -> String {
    format!("acct{i:03}")
}

pub fn generate_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let n = spec.n_accounts;
    let m = spec.posts_per_account;
    let k = spec.slice_size;
    let n_comp = spec.n_compromised();
    let bounds = if n_comp > 0 { Some(spec.point_bounds()?) } else { None };

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, SALT_CHOICE)));
    let mut compromised = vec![false; n];
    for &i in &order[..n_comp] {
        compromised[i] = true;
    }
    let pool_offset = (seed % POOL_SIZE as u64) as usize;
    let word = |ix: usize| pool_word(pool_offset + ix);

    let mut records = Vec::with_capacity(n * m);
    let mut compromise_points = BTreeMap::new();
    let mut styles = BTreeMap::new();
    for i in 0..n {
        let id = account_id(i);
        let acct_seed = seed::derive(seed, i as u64);
        let owner_seed = seed::derive(acct_seed, SALT_OWNER);
        let mut orng = seed::rng(owner_seed);
        let owner_ix = index::sample(&mut orng, spec.pool_size, k).into_vec();
        let owner_words = owner_ix.iter().map(|&w| word(w)).collect();
        let owner = StyleProfile::draw_params(owner_words, spec, &mut orng, owner_seed);

        let (point, hijacker) = match (compromised[i], bounds) {
            (true, Some((lo, hi))) => {
                let hseed = seed::derive(acct_seed, SALT_HIJACKER);
                let mut hrng = seed::rng(hseed);
                let replace = ((1.0 - spec.style_overlap) * k as f64).round() as usize;
                let mut unused: Vec<usize> = (0..spec.pool_size).collect();
                unused.retain(|w| !owner_ix.contains(w));
                let fresh = index::sample(&mut hrng, unused.len(), replace);
                let positions = index::sample(&mut hrng, k, replace);
                let mut words = owner.vocabulary.clone();
                for (pos, f) in positions.into_iter().zip(fresh) {
                    words[pos] = word(unused[f]);
                }
                let hijacker = if spec.inherit_style_params {
                    StyleProfile {
                        vocabulary: words,
                        seed: hseed,
                        ..owner.clone()
                    }
                } else {
                    StyleProfile::draw_params(words, spec, &mut hrng, hseed)
                };
                let t = seed::rng(seed::derive(acct_seed, SALT_POINT)).random_range(lo..=hi);
                (CompromisePoint::At(t), Some(hijacker))
            }
            _ => (CompromisePoint::Never, None),
        };

        let mut trng = seed::rng(seed::derive(acct_seed, SALT_TEXT));
        let owner_zipf = owner.weights();
        let hijacker_zipf = hijacker.as_ref().map(StyleProfile::weights);
        let mut ts = BASE_TS + i as i64 * 60;
        for p in 0..m {
            let compromised = !point.precedes(p);
            let text = match (&hijacker, &hijacker_zipf) {
                (Some(h), Some(z)) if compromised => h.sample_with(z, &mut trng),
                _ => owner.sample_with(&owner_zipf, &mut trng),
            };
            ts += 600 + trng.random_range(0..3000);
            records.push(PostRecord {
                account_id: id.clone(),
                post_id: format!("{id}-{p:04}"),
                ts,
                text,
                compromised,
            });
        }
        compromise_points.insert(id.clone(), point);
        styles.insert(id, AccountStyles { owner, hijacker });
    }

    let corpus = Corpus::from_records(records, LoadMode::Strict, None)?;
    Ok(SynthOutput {
        corpus,
        manifest: SynthManifest {
            spec: spec.clone(),
            seed,
            compromise_points,
            styles,
        },
    })
}
