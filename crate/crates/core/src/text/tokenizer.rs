use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub const URL_TOKEN: &str = "<url>";
pub const MENTION_TOKEN: &str = "<mention>";

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "www."];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrlPolicy {
    ReplaceWithSentinel,
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionPolicy {
    ReplaceWithSentinel,
    Keep,
}

/// Splits a post into word, hashtag, mention, URL and punctuation tokens.
///
/// Text is NFC-normalized and optionally lowercased. A whitespace-delimited
/// chunk that starts with `http://`, `https://` or `www.` is a URL.
/// `#word` and `@word` are kept whole (mentions may be replaced by a
/// sentinel). Everything else is split into runs of word characters
/// (alphanumerics and `_`) and runs of other non-space characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub lowercase: bool,
    pub url_policy: UrlPolicy,
    pub mention_policy: MentionPolicy,
    pub max_tokens: usize,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer {
            lowercase: true,
            url_policy: UrlPolicy::ReplaceWithSentinel,
            mention_policy: MentionPolicy::ReplaceWithSentinel,
            max_tokens: 64,
        }
    }
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_url(chunk: &str) -> bool {
    URL_PREFIXES
        .iter()
        .any(|p| chunk.len() > p.len() && chunk.starts_with(p))
}

impl Tokenizer {
    pub fn normalize(&self, text: &str) -> String {
        let nfc: String = text.nfc().collect();
        if self.lowercase {
            nfc.to_lowercase()
        } else {
            nfc
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let text = self.normalize(text);
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            if out.len() >= self.max_tokens {
                break;
            }
            if is_url(chunk) {
                out.push(match self.url_policy {
                    UrlPolicy::ReplaceWithSentinel => URL_TOKEN.to_string(),
                    UrlPolicy::Keep => chunk.to_string(),
                });
                continue;
            }
            self.split_chunk(chunk, &mut out);
        }
        out.truncate(self.max_tokens);
        out
    }

    fn split_chunk(&self, chunk: &str, out: &mut Vec<String>) {
        let chars: Vec<(usize, char)> = chunk.char_indices().collect();
        let byte_at = |i: usize| chars.get(i).map_or(chunk.len(), |&(b, _)| b);
        let starts_tag = |i: usize| {
            matches!(chars[i].1, '#' | '@') && chars.get(i + 1).is_some_and(|&(_, c)| is_word(c))
        };

        let mut i = 0;
        while i < chars.len() {
            let start = i;
            if starts_tag(i) {
                i += 1;
                while i < chars.len() && is_word(chars[i].1) {
                    i += 1;
                }
                let tag = &chunk[byte_at(start)..byte_at(i)];
                if chars[start].1 == '@' && self.mention_policy == MentionPolicy::ReplaceWithSentinel
                {
                    out.push(MENTION_TOKEN.to_string());
                } else {
                    out.push(tag.to_string());
                }
            } else if is_word(chars[i].1) {
                while i < chars.len() && is_word(chars[i].1) {
                    i += 1;
                }
                out.push(chunk[byte_at(start)..byte_at(i)].to_string());
            } else {
                i += 1;
                while i < chars.len() && !is_word(chars[i].1) && !starts_tag(i) {
                    i += 1;
                }
                out.push(chunk[byte_at(start)..byte_at(i)].to_string());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tweet_example() {
        let t = Tokenizer::default();
        assert_eq!(
            t.tokenize("Check https://t.co/x NOW @bob #sale!"),
            ["check", "<url>", "now", "<mention>", "#sale", "!"]
        );
    }

    #[test]
    fn blank_text_gives_no_tokens() {
        let t = Tokenizer::default();
        assert!(t.tokenize("").is_empty());
        assert!(t.tokenize("  \t\n ").is_empty());
    }

    #[test]
    fn keep_policies() {
        let t = Tokenizer {
            lowercase: false,
            url_policy: UrlPolicy::Keep,
            mention_policy: MentionPolicy::Keep,
            max_tokens: 64,
        };
        assert_eq!(
            t.tokenize("Hi @Bob, see www.x.org..."),
            ["Hi", "@Bob", ",", "see", "www.x.org..."]
        );
    }

    #[test]
    fn punctuation_runs_and_tags() {
        let t = Tokenizer::default();
        assert_eq!(t.tokenize("wow!!! #a#b ?#"), ["wow", "!!!", "#a", "#b", "?#"]);
        assert_eq!(t.tokenize("don't"), ["don", "'", "t"]);
        assert_eq!(t.tokenize("a@b.c"), ["a", "<mention>", ".", "c"]);
    }

    #[test]
    fn nfc_normalization() {
        let t = Tokenizer::default();
        // "e" + combining acute accent composes to a single é.
        assert_eq!(t.tokenize("Cafe\u{301}"), ["caf\u{e9}"]);
    }

    #[test]
    fn truncates_to_max_tokens() {
        let t = Tokenizer {
            max_tokens: 3,
            ..Tokenizer::default()
        };
        assert_eq!(t.tokenize("a b c d e"), ["a", "b", "c"]);
    }

    proptest! {
        #[test]
        fn retokenizing_is_stable(text in "[a-zA-Z0-9 #@!?.,'_é-]{0,60}") {
            let t = Tokenizer::default();
            let toks = t.tokenize(&text);
            prop_assert!(toks.len() <= t.max_tokens);
            if !toks.iter().any(|s| s == URL_TOKEN || s == MENTION_TOKEN) {
                prop_assert_eq!(t.tokenize(&toks.join(" ")), toks);
            }
        }
    }
}
