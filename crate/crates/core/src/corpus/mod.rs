//! Message ingestion, author construction and the author filters.

mod names;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

pub use names::{assign_gender, NameGenderTable};
pub use tokenize::{tokenize, EmoticonLexicon, Tokenizer};

use crate::network::SocialGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unknown => "unknown",
        }
    }

    pub fn is_known(self) -> bool {
        self != Gender::Unknown
    }

    /// Classifier label: female is +1, male is -1.
    pub fn label(self) -> Option<i8> {
        match self {
            Gender::Female => Some(1),
            Gender::Male => Some(-1),
            Gender::Unknown => None,
        }
    }

    pub fn other(self) -> Gender {
        match self {
            Gender::Female => Gender::Male,
            Gender::Male => Gender::Female,
            Gender::Unknown => Gender::Unknown,
        }
    }
}

impl std::fmt::Display for Gender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            "unknown" => Ok(Gender::Unknown),
            other => Err(Error::invalid(format!("unknown gender `{other}`"))),
        }
    }
}

/// One message. Author ids and mention targets are lowercased so that
/// `@Bob` resolves to author `bob`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMessage {
    pub author_id: String,
    pub name: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub text: String,
    pub mentions: Vec<String>,
}

impl RawMessage {
    pub fn new(author_id: &str, name: &str, timestamp: i64, text: &str, tokenizer: &Tokenizer) -> Self {
        let tokens = tokenizer.tokenize(text);
        RawMessage {
            author_id: author_id.to_lowercase(),
            name: name.to_owned(),
            timestamp,
            text: text.to_owned(),
            mentions: mentions_of(&tokens),
        }
    }
}

fn mentions_of(tokens: &[String]) -> Vec<String> {
    tokens
        .iter()
        .filter_map(|t| t.strip_prefix('@'))
        .filter(|m| !m.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Author {
    pub author_id: String,
    pub first_name: String,
    pub gender: Gender,
    /// Concatenated tokens of all messages, in timestamp order.
    pub tokens: Vec<String>,
    pub message_count: usize,
}

/// First whitespace-delimited component of a profile name, keeping
/// alphabetic characters only.
pub fn first_name(profile_name: &str) -> String {
    profile_name
        .split_whitespace()
        .next()
        .unwrap_or("")
        .chars()
        .filter(|c| c.is_alphabetic())
        .collect()
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc).timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|n| n.and_utc().timestamp())
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Reads a file as UTF-8 lines, failing with the line number of the first
/// undecodable line.
pub(crate) fn read_utf8_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, l)| {
            let l = l.strip_suffix(b"\r").unwrap_or(l);
            String::from_utf8(l.to_vec()).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("invalid UTF-8: {e}"),
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct MessageRecord {
    author_id: String,
    #[serde(default)]
    name: String,
    timestamp: String,
    text: String,
}

/// Reads a JSON-lines message file. Lines with unparseable timestamps are
/// skipped with a warning; malformed JSON or bad UTF-8 is an error.
pub fn read_messages(path: &Path, tokenizer: &Tokenizer) -> Result<Vec<RawMessage>> {
    let lines = read_utf8_lines(path)?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: MessageRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let Some(ts) = parse_timestamp(&rec.timestamp) else {
            log::warn!(
                "{}:{}: skipping message with malformed timestamp `{}`",
                path.display(),
                i + 1,
                rec.timestamp
            );
            continue;
        };
        out.push(RawMessage::new(&rec.author_id, &rec.name, ts, &rec.text, tokenizer));
    }
    Ok(out)
}

/// Writes messages in the JSON-lines format read by [`read_messages`].
pub fn write_messages<W: std::io::Write>(mut out: W, messages: &[RawMessage]) -> Result<()> {
    for m in messages {
        let rec = serde_json::json!({
            "author_id": m.author_id,
            "name": m.name,
            "timestamp": format_timestamp(m.timestamp),
            "text": m.text,
        });
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io("<messages>", e))?;
    }
    Ok(())
}

/// Groups messages by author (sorted by id) and assigns gender from the
/// name on the author's earliest message.
pub fn build_authors(
    messages: &[RawMessage],
    tokenizer: &Tokenizer,
    table: &NameGenderTable,
    name_min_total: u64,
) -> Vec<Author> {
    let mut by_author: BTreeMap<&str, Vec<&RawMessage>> = BTreeMap::new();
    for m in messages {
        by_author.entry(m.author_id.as_str()).or_default().push(m);
    }
    by_author
        .into_iter()
        .map(|(id, mut msgs)| {
            msgs.sort_by(|a, b| {
                (a.timestamp, &a.text, &a.name).cmp(&(b.timestamp, &b.text, &b.name))
            });
            let first = first_name(&msgs[0].name);
            let gender = assign_gender(&first, table, name_min_total);
            let tokens = msgs.iter().flat_map(|m| tokenizer.tokenize(&m.text)).collect();
            Author {
                author_id: id.to_owned(),
                first_name: first,
                gender,
                tokens,
                message_count: msgs.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusFilterConfig {
    pub english_top_n: usize,
    pub english_min_overlap: usize,
    pub name_min_total: u64,
    pub min_friends: usize,
    pub max_friends: usize,
}

impl Default for CorpusFilterConfig {
    fn default() -> Self {
        CorpusFilterConfig {
            english_top_n: 1000,
            english_min_overlap: 50,
            name_min_total: 1000,
            min_friends: 4,
            max_friends: 100,
        }
    }
}

impl CorpusFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.english_min_overlap == 0 || self.english_min_overlap > self.english_top_n {
            return Err(Error::Config {
                field: "corpus.english_min_overlap".into(),
                message: "must satisfy 0 < english_min_overlap <= english_top_n".into(),
            });
        }
        if self.min_friends > self.max_friends {
            return Err(Error::Config {
                field: "corpus.min_friends".into(),
                message: "must not exceed max_friends".into(),
            });
        }
        if self.name_min_total == 0 {
            return Err(Error::Config {
                field: "corpus.name_min_total".into(),
                message: "must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub unknown_gender: usize,
    pub non_english: usize,
    pub degree_first_pass: usize,
    pub degree_second_pass: usize,
    pub retained: usize,
}

/// Terms used by the most authors, ties broken lexicographically.
pub fn top_terms_by_authors(authors: &[Author], n: usize) -> Vec<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for a in authors {
        let distinct: HashSet<&str> = a.tokens.iter().map(String::as_str).collect();
        for t in distinct {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(n).map(|(t, _)| t.to_owned()).collect()
}

/// Keeps authors with a resolvable gender, enough overlap with the
/// corpus-wide common terms, and a friend count within bounds. Degree is
/// checked once on the full graph and once more on the graph restricted to
/// the survivors of the first pass. Output is sorted by author id.
pub fn filter_corpus(
    authors: &[Author],
    graph: &SocialGraph,
    cfg: &CorpusFilterConfig,
) -> Result<(Vec<Author>, FilterReport)> {
    cfg.validate()?;
    let mut report = FilterReport {
        input: authors.len(),
        ..Default::default()
    };
    let common: HashSet<String> = top_terms_by_authors(authors, cfg.english_top_n)
        .into_iter()
        .collect();
    let in_range = |d: usize| d >= cfg.min_friends && d <= cfg.max_friends;

    let mut first_pass: Vec<&Author> = Vec::new();
    for a in authors {
        if !a.gender.is_known() {
            report.unknown_gender += 1;
            continue;
        }
        let used: HashSet<&str> = a
            .tokens
            .iter()
            .map(String::as_str)
            .filter(|t| common.contains(*t))
            .collect();
        if used.len() < cfg.english_min_overlap {
            report.non_english += 1;
            continue;
        }
        if !in_range(graph.degree(&a.author_id)) {
            report.degree_first_pass += 1;
            continue;
        }
        first_pass.push(a);
    }

    let survivors: BTreeSet<&str> = first_pass.iter().map(|a| a.author_id.as_str()).collect();
    let mut kept: Vec<Author> = first_pass
        .into_iter()
        .filter(|a| {
            let d = graph
                .neighbors(&a.author_id)
                .map_or(0, |ns| ns.iter().filter(|n| survivors.contains(n.as_str())).count());
            let ok = in_range(d);
            if !ok {
                report.degree_second_pass += 1;
            }
            ok
        })
        .cloned()
        .collect();
    kept.sort_by(|a, b| a.author_id.cmp(&b.author_id));
    report.retained = kept.len();
    if kept.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn author(id: &str, gender: Gender, tokens: &[&str]) -> Author {
        Author {
            author_id: id.into(),
            first_name: id.into(),
            gender,
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            message_count: 1,
        }
    }

    fn star_graph(center: &str, leaves: &[&str]) -> SocialGraph {
        let edges: Vec<(String, String)> = leaves
            .iter()
            .map(|l| (center.to_string(), l.to_string()))
            .collect();
        SocialGraph::from_edges(edges)
    }

    #[test]
    fn first_name_extraction() {
        assert_eq!(first_name("Mary-Jane Smith"), "MaryJane");
        assert_eq!(first_name("  J0hn  Doe"), "Jhn");
        assert_eq!(first_name(""), "");
    }

    #[test]
    fn timestamps() {
        assert_eq!(parse_timestamp("1970-01-02T00:00:00Z"), Some(86400));
        assert_eq!(parse_timestamp("1970-01-02T01:00:00+01:00"), Some(86400));
        assert_eq!(parse_timestamp("1970-01-02 00:00:00"), Some(86400));
        assert_eq!(parse_timestamp("yesterday"), None);
        assert_eq!(format_timestamp(86400), "1970-01-02T00:00:00Z");
    }

    #[test]
    fn mentions_derive_from_at_tokens() {
        let t = Tokenizer::default();
        let m = RawMessage::new("Alice", "Alice", 0, "hi @Bob and @carol_1 @", &t);
        assert_eq!(m.author_id, "alice");
        assert_eq!(m.mentions, ["bob", "carol_1"]);
    }

    #[test]
    fn filter_rules() {
        let cfg = CorpusFilterConfig {
            english_top_n: 3,
            english_min_overlap: 2,
            name_min_total: 1,
            min_friends: 4,
            max_friends: 100,
        };
        let words = ["a", "b", "c"];
        let mut authors = vec![
            author("hub", Gender::Female, &words),
            author("few", Gender::Male, &words),
            author("anon", Gender::Unknown, &words),
            author("quiet", Gender::Male, &["a", "zzz"]),
        ];
        for i in 0..4 {
            authors.push(author(&format!("l{i}"), Gender::Male, &words));
        }
        // hub has 5 friends; "few" only has 3.
        let mut edges: Vec<(String, String)> = (0..4).map(|i| ("hub".into(), format!("l{i}"))).collect();
        edges.push(("hub".into(), "anon".into()));
        for i in 0..4 {
            for j in (i + 1)..4 {
                edges.push((format!("l{i}"), format!("l{j}")));
            }
        }
        edges.extend([("few".into(), "l0".into()), ("few".into(), "l1".into()), ("few".into(), "l2".into())]);
        edges.extend([("quiet".into(), "l0".into()), ("quiet".into(), "l1".into()), ("quiet".into(), "l2".into()), ("quiet".into(), "l3".into())]);
        let g = SocialGraph::from_edges(edges);
        let (kept, report) = filter_corpus(&authors, &g, &cfg).unwrap();
        let ids: Vec<&str> = kept.iter().map(|a| a.author_id.as_str()).collect();
        assert!(!ids.contains(&"few"));
        assert!(!ids.contains(&"anon"));
        assert!(!ids.contains(&"quiet"));
        assert_eq!(report.unknown_gender, 1);
        assert_eq!(report.non_english, 1);
        // hub loses "anon" in the second pass and keeps 4 friends.
        assert!(ids.contains(&"hub"));

        let mut shuffled = authors.clone();
        shuffled.reverse();
        let (kept2, _) = filter_corpus(&shuffled, &g, &cfg).unwrap();
        assert_eq!(kept, kept2);
    }

    #[test]
    fn empty_result_is_an_error() {
        let authors = vec![author("x", Gender::Female, &["a"])];
        let g = star_graph("x", &["y"]);
        let cfg = CorpusFilterConfig {
            english_top_n: 1,
            english_min_overlap: 1,
            ..Default::default()
        };
        assert!(matches!(filter_corpus(&authors, &g, &cfg), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn read_messages_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(
            &p,
            "{\"author_id\":\"a\",\"name\":\"Ann\",\"timestamp\":\"2011-01-01T00:00:00Z\",\"text\":\"hi @b\"}\n\
             {\"author_id\":\"a\",\"name\":\"Ann\",\"timestamp\":\"garbage\",\"text\":\"x\"}\n",
        )
        .unwrap();
        let msgs = read_messages(&p, &Tokenizer::default()).unwrap();
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].mentions, ["b"]);

        let mut bytes = b"{\"author_id\":\"a\",\"timestamp\":\"2011-01-01T00:00:00Z\",\"text\":\"ok\"}\n".to_vec();
        bytes.extend_from_slice(b"{\"author_id\":\"a\",\"text\":\"\xff\"}\n");
        std::fs::write(&p, bytes).unwrap();
        let err = read_messages(&p, &Tokenizer::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }
}
