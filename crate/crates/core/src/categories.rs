//! First-match word categories and per-group category shares.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Author;
use crate::features::Vocabulary;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    NamedEntity,
    Taboo,
    Number,
    Hashtag,
    Punctuation,
    Dictionary,
    OtherPronounceable,
    OtherSpelled,
    /// Residue listed explicitly as unresolvable; kept out of the shares.
    Unclassified,
}

impl Category {
    /// The reportable categories, in pipeline order.
    pub const ORDERED: [Category; 8] = [
        Category::NamedEntity,
        Category::Taboo,
        Category::Number,
        Category::Hashtag,
        Category::Punctuation,
        Category::Dictionary,
        Category::OtherPronounceable,
        Category::OtherSpelled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::NamedEntity => "named_entity",
            Category::Taboo => "taboo",
            Category::Number => "number",
            Category::Hashtag => "hashtag",
            Category::Punctuation => "punctuation",
            Category::Dictionary => "dictionary",
            Category::OtherPronounceable => "other_pronounceable",
            Category::OtherSpelled => "other_spelled",
            Category::Unclassified => "unclassified",
        }
    }

    fn slot(self) -> Option<usize> {
        Category::ORDERED.iter().position(|&c| c == self)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Explicit term lists backing the list-based categories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryLexicon {
    pub unclassified: HashSet<String>,
    pub named_entity: HashSet<String>,
    pub taboo: HashSet<String>,
    pub dictionary: HashSet<String>,
    pub other_pronounceable: HashSet<String>,
    pub other_spelled: HashSet<String>,
}

/// File names looked up by [`CategoryLexicon::load_dir`].
pub const LEXICON_FILES: [&str; 6] = [
    "unclassified.txt",
    "named_entities.txt",
    "taboo.txt",
    "dictionary.txt",
    "other_pronounceable.txt",
    "other_spelled.txt",
];

/// One term per line. Blank lines and lines starting with `"# "` (or a
/// lone `#`) are skipped, so hashtags can still be listed.
pub fn parse_term_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && *l != "#" && !l.starts_with("# "))
        .map(str::to_lowercase)
        .collect()
}

impl CategoryLexicon {
    /// Lists shipped with the crate.
    pub fn shipped() -> Self {
        CategoryLexicon {
            unclassified: parse_term_list(include_str!("../data/unclassified.txt")),
            named_entity: parse_term_list(include_str!("../data/named_entities.txt")),
            taboo: parse_term_list(include_str!("../data/taboo.txt")),
            dictionary: parse_term_list(include_str!("../data/dictionary.txt")),
            other_pronounceable: parse_term_list(include_str!("../data/other_pronounceable.txt")),
            other_spelled: parse_term_list(include_str!("../data/other_spelled.txt")),
        }
    }

    /// Reads the lists from `dir`. Files that are absent fall back to the
    /// shipped list.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut lex = CategoryLexicon::shipped();
        for name in LEXICON_FILES {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let text = crate::corpus::read_utf8_lines(&path)?.join("\n");
            *lex.list_mut(name) = parse_term_list(&text);
        }
        Ok(lex)
    }

    /// Replaces the dictionary wordlist.
    pub fn with_dictionary(mut self, path: &Path) -> Result<Self> {
        let text = crate::corpus::read_utf8_lines(path)?.join("\n");
        self.dictionary = parse_term_list(&text);
        Ok(self)
    }

    fn list_mut(&mut self, file: &str) -> &mut HashSet<String> {
        match file {
            "unclassified.txt" => &mut self.unclassified,
            "named_entities.txt" => &mut self.named_entity,
            "taboo.txt" => &mut self.taboo,
            "dictionary.txt" => &mut self.dictionary,
            "other_pronounceable.txt" => &mut self.other_pronounceable,
            _ => &mut self.other_spelled,
        }
    }

    fn listed(&self, term: &str) -> bool {
        self.unclassified.contains(term)
            || self.named_entity.contains(term)
            || self.taboo.contains(term)
            || self.dictionary.contains(term)
            || self.other_pronounceable.contains(term)
            || self.other_spelled.contains(term)
    }
}

/// Digit runs joined by single separators from `.,:-/`, e.g. `2010`,
/// `3-0`, `1,000`, `10:30`.
fn is_number(term: &str) -> bool {
    let mut expect_digit = true;
    let mut in_digits = false;
    for c in term.chars() {
        if c.is_ascii_digit() {
            in_digits = true;
            expect_digit = false;
        } else if matches!(c, '.' | ',' | ':' | '-' | '/') && in_digits {
            in_digits = false;
            expect_digit = true;
        } else {
            return false;
        }
    }
    in_digits && !expect_digit
}

fn is_punctuation(term: &str) -> bool {
    let mut chars = term.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if !c.is_alphanumeric() && !c.is_whitespace())
}

fn is_pronounceable(term: &str) -> bool {
    term.chars().any(|c| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u'))
        && term.chars().all(|c| c.is_alphabetic() || c == '\'')
}

/// Category of one term: the first matcher in pipeline order that accepts it.
pub fn categorize_term(term: &str, lex: &CategoryLexicon) -> Result<Category> {
    if term.is_empty() {
        return Err(Error::invalid("cannot categorize an empty term"));
    }
    let t = term.to_lowercase();
    let t = t.as_str();
    let cat = if lex.unclassified.contains(t) {
        Category::Unclassified
    } else if lex.named_entity.contains(t) {
        Category::NamedEntity
    } else if lex.taboo.contains(t) {
        Category::Taboo
    } else if is_number(t) {
        Category::Number
    } else if t.len() > 1 && t.starts_with('#') {
        Category::Hashtag
    } else if is_punctuation(t) {
        Category::Punctuation
    } else if lex.dictionary.contains(t) {
        Category::Dictionary
    } else if lex.other_pronounceable.contains(t) {
        Category::OtherPronounceable
    } else if lex.other_spelled.contains(t) {
        Category::OtherSpelled
    } else if !lex.listed(t) && is_pronounceable(t) {
        Category::OtherPronounceable
    } else {
        Category::OtherSpelled
    };
    Ok(cat)
}

/// Category of every vocabulary term, indexed like the vocabulary.
pub fn categorize_vocabulary(vocab: &Vocabulary, lex: &CategoryLexicon) -> Result<Vec<Category>> {
    vocab.terms().iter().map(|t| categorize_term(t, lex)).collect()
}

pub fn write_term_categories_csv<W: Write>(out: W, vocab: &Vocabulary, cats: &[Category]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["term", "category"])?;
    for (t, c) in vocab.terms().iter().zip(cats) {
        w.write_record([t.as_str(), c.as_str()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub group: String,
    pub authors: usize,
    /// Vocabulary tokens outside the unclassified bucket.
    pub tokens: u64,
    pub unclassified_tokens: u64,
    /// Shares in [`Category::ORDERED`] order.
    pub shares: [f64; 8],
}

impl CategoryRow {
    pub fn share(&self, c: Category) -> f64 {
        c.slot().map_or(0.0, |s| self.shares[s])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub rows: Vec<CategoryRow>,
}

/// Token-frequency share of each category per group. `group_of[n]` indexes
/// `group_names`; groups without vocabulary tokens are left out.
pub fn category_report(
    authors: &[Author],
    vocab: &Vocabulary,
    cats: &[Category],
    group_of: &[usize],
    group_names: &[String],
) -> Result<CategoryReport> {
    if cats.len() != vocab.len() {
        return Err(Error::invalid("category list does not cover the vocabulary"));
    }
    if group_of.len() != authors.len() {
        return Err(Error::invalid("group assignment length differs from author count"));
    }
    let g = group_names.len();
    let mut counts = vec![[0u64; 8]; g];
    let mut unclassified = vec![0u64; g];
    let mut members = vec![0usize; g];
    for (a, &grp) in authors.iter().zip(group_of) {
        if grp >= g {
            return Err(Error::invalid(format!("group index {grp} out of range")));
        }
        members[grp] += 1;
        for t in &a.tokens {
            if let Some(i) = vocab.get(t) {
                match cats[i].slot() {
                    Some(s) => counts[grp][s] += 1,
                    None => unclassified[grp] += 1,
                }
            }
        }
    }
    let mut rows = Vec::new();
    for j in 0..g {
        let total: u64 = counts[j].iter().sum();
        if total == 0 {
            log::warn!("group {} has no categorized tokens; omitted from the report", group_names[j]);
            continue;
        }
        let mut shares = [0.0; 8];
        for (s, &c) in shares.iter_mut().zip(&counts[j]) {
            *s = c as f64 / total as f64;
        }
        rows.push(CategoryRow {
            group: group_names[j].clone(),
            authors: members[j],
            tokens: total,
            unclassified_tokens: unclassified[j],
            shares,
        });
    }
    Ok(CategoryReport { rows })
}

impl CategoryReport {
    pub fn row(&self, group: &str) -> Option<&CategoryRow> {
        self.rows.iter().find(|r| r.group == group)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["group".to_string(), "authors".into(), "tokens".into()];
        header.extend(Category::ORDERED.iter().map(|c| c.as_str().to_string()));
        header.push("unclassified_tokens".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.group.clone(), r.authors.to_string(), r.tokens.to_string()];
            rec.extend(r.shares.iter().map(|s| format!("{s}")));
            rec.push(r.unclassified_tokens.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
