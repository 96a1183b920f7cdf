//! Twitter-aware tokenizer.
//!
//! Rules, in priority order at each position:
//! URLs, `@mentions` and `#hashtags` are single tokens; emoticons from the
//! lexicon are single tokens (longest match wins); runs of one repeated
//! punctuation character are single tokens (`!!!`); words keep internal
//! apostrophes (`she'll`) and numbers keep internal separators (`3-0`,
//! `1,000`). Everything except emoticons and URLs is lowercased.

use std::collections::HashSet;
use std::path::Path;

use crate::Result;

const DEFAULT_EMOTICONS: &str = include_str!("../../data/emoticons.txt");

/// Set of emoticon strings, matched longest-first.
#[derive(Debug, Clone)]
pub struct EmoticonLexicon {
    entries: HashSet<String>,
    // Lengths in chars, longest first.
    lengths: Vec<usize>,
}

impl Default for EmoticonLexicon {
    fn default() -> Self {
        Self::from_lines(DEFAULT_EMOTICONS.lines())
    }
}

impl EmoticonLexicon {
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Self {
        let entries: HashSet<String> = lines
            .into_iter()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        let mut lengths: Vec<usize> = entries.iter().map(|e| e.chars().count()).collect();
        lengths.sort_unstable_by(|a, b| b.cmp(a));
        lengths.dedup();
        EmoticonLexicon { entries, lengths }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = super::read_utf8_lines(path)?;
        Ok(Self::from_lines(text.iter().map(String::as_str)))
    }

    pub fn contains(&self, s: &str) -> bool {
        self.entries.contains(s)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tokenizer {
    emoticons: EmoticonLexicon,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_number_separator(c: char) -> bool {
    matches!(c, '-' | '.' | ',' | ':' | '/')
}

fn is_url_trailer(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | ')' | '"' | '\'')
}

fn starts_with_ignore_case(chars: &[char], prefix: &str) -> bool {
    let mut it = chars.iter();
    prefix
        .chars()
        .all(|p| it.next().is_some_and(|c| c.to_ascii_lowercase() == p))
}

impl Tokenizer {
    pub fn new(emoticons: EmoticonLexicon) -> Self {
        Tokenizer { emoticons }
    }

    pub fn emoticons(&self) -> &EmoticonLexicon {
        &self.emoticons
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let chars: Vec<char> = text.chars().collect();
        let mut tokens = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let rest = &chars[i..];
            if let Some(len) = self.url_len(rest) {
                tokens.push(rest[..len].iter().collect());
                i += len;
                continue;
            }
            if (c == '@' || c == '#') && rest.len() > 1 {
                let body = rest[1..]
                    .iter()
                    .take_while(|&&ch| {
                        if c == '@' {
                            ch.is_ascii_alphanumeric() || ch == '_'
                        } else {
                            is_word_char(ch) || ch == '_'
                        }
                    })
                    .count();
                if body > 0 {
                    tokens.push(lowercase(&rest[..=body]));
                    i += body + 1;
                    continue;
                }
            }
            if let Some(len) = self.emoticon_len(&chars, i) {
                tokens.push(rest[..len].iter().collect());
                i += len;
                continue;
            }
            if is_word_char(c) {
                let len = word_len(rest);
                let word: String = rest[..len]
                    .iter()
                    .map(|&ch| if ch == '\u{2019}' { '\'' } else { ch })
                    .collect();
                tokens.push(word.to_lowercase());
                i += len;
                continue;
            }
            let run = rest.iter().take_while(|&&ch| ch == c).count();
            tokens.push(lowercase(&rest[..run]));
            i += run;
        }
        tokens
    }

    fn url_len(&self, rest: &[char]) -> Option<usize> {
        let prefixed = ["http://", "https://", "www."]
            .iter()
            .any(|p| starts_with_ignore_case(rest, p));
        if !prefixed {
            return None;
        }
        let mut len = rest.iter().take_while(|c| !c.is_whitespace()).count();
        while len > 0 && is_url_trailer(rest[len - 1]) {
            len -= 1;
        }
        (len > 4).then_some(len)
    }

    fn emoticon_len(&self, chars: &[char], i: usize) -> Option<usize> {
        for &len in &self.emoticons.lengths {
            if i + len > chars.len() {
                continue;
            }
            let cand = &chars[i..i + len];
            let s: String = cand.iter().collect();
            if !self.emoticons.contains(&s) {
                continue;
            }
            let first_alnum = is_word_char(cand[0]);
            let last_alnum = is_word_char(cand[len - 1]);
            if first_alnum && i > 0 && is_word_char(chars[i - 1]) {
                continue;
            }
            if last_alnum && chars.get(i + len).is_some_and(|&c| is_word_char(c)) {
                continue;
            }
            return Some(len);
        }
        None
    }
}

fn lowercase(chars: &[char]) -> String {
    chars.iter().collect::<String>().to_lowercase()
}

fn word_len(rest: &[char]) -> usize {
    let mut len = rest.iter().take_while(|&&c| is_word_char(c)).count();
    let mut numeric = rest[..len].iter().all(char::is_ascii_digit);
    while let Some(&sep) = rest.get(len) {
        let next_ok = rest.get(len + 1).is_some_and(|&c| is_word_char(c));
        if !next_ok {
            break;
        }
        if is_apostrophe(sep) {
            numeric = false;
        } else if !(numeric && is_number_separator(sep) && rest[len + 1].is_ascii_digit()) {
            break;
        }
        len += 1;
        let run = rest[len..].iter().take_while(|&&c| is_word_char(c)).count();
        if numeric && !rest[len..len + run].iter().all(char::is_ascii_digit) {
            // "3-0pm": back off to before the separator
            len -= 1;
            break;
        }
        len += run;
    }
    len
}

/// Tokenizes with the default emoticon lexicon.
pub fn tokenize(text: &str) -> Vec<String> {
    thread_local! {
        static DEFAULT: Tokenizer = Tokenizer::default();
    }
    DEFAULT.with(|t| t.tokenize(text))
}
