//! Mutual-mention social graph and gender-composition statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{format_timestamp, Gender, RawMessage};
use crate::stats::binomial_tail;
use crate::{Error, Result};

/// Minimum separation between the two cross-direction mentions of an edge.
pub const MIN_MENTION_GAP_SECS: i64 = 14 * 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    /// Lexicographically smaller endpoint.
    pub author_a: String,
    pub author_b: String,
    /// Timestamp of the `a -> b` mention in the qualifying pair.
    pub first_mention_ts: i64,
    /// Timestamp of the `b -> a` mention in the qualifying pair.
    pub reverse_mention_ts: i64,
}

/// Undirected graph over author ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SocialGraph {
    adjacency: BTreeMap<String, BTreeSet<String>>,
    edges: Vec<Edge>,
}

#[derive(Clone, Copy)]
struct Span {
    first: i64,
    last: i64,
}

impl SocialGraph {
    /// Links two authors when each mentioned the other and some pair of
    /// opposite-direction mentions is at least two weeks apart.
    pub fn from_messages(messages: &[RawMessage]) -> Self {
        let mut spans: HashMap<(&str, &str), Span> = HashMap::new();
        let mut nodes: BTreeSet<&str> = BTreeSet::new();
        for m in messages {
            nodes.insert(&m.author_id);
            for target in &m.mentions {
                if *target == m.author_id {
                    continue;
                }
                spans
                    .entry((m.author_id.as_str(), target.as_str()))
                    .and_modify(|s| {
                        s.first = s.first.min(m.timestamp);
                        s.last = s.last.max(m.timestamp);
                    })
                    .or_insert(Span {
                        first: m.timestamp,
                        last: m.timestamp,
                    });
            }
        }

        let mut edges = Vec::new();
        for (&(src, dst), ab) in &spans {
            if src >= dst {
                continue;
            }
            let Some(ba) = spans.get(&(dst, src)) else { continue };
            // Widest separation: latest a->b against earliest b->a, or the reverse.
            let forward = ab.last - ba.first;
            let backward = ba.last - ab.first;
            let (gap, a_ts, b_ts) = if forward >= backward {
                (forward, ab.last, ba.first)
            } else {
                (backward, ab.first, ba.last)
            };
            if gap >= MIN_MENTION_GAP_SECS {
                edges.push(Edge {
                    author_a: src.to_owned(),
                    author_b: dst.to_owned(),
                    first_mention_ts: a_ts,
                    reverse_mention_ts: b_ts,
                });
            }
        }
        edges.sort_by(|x, y| (&x.author_a, &x.author_b).cmp(&(&y.author_a, &y.author_b)));

        let mut g = SocialGraph::default();
        for n in nodes {
            g.adjacency.entry(n.to_owned()).or_default();
        }
        for e in edges {
            g.link(&e.author_a, &e.author_b);
            g.edges.push(e);
        }
        g
    }

    /// Builds a graph directly from undirected pairs (timestamps zero).
    pub fn from_edges(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut set: BTreeSet<(String, String)> = BTreeSet::new();
        for (a, b) in pairs {
            if a == b {
                continue;
            }
            if a < b {
                set.insert((a, b));
            } else {
                set.insert((b, a));
            }
        }
        let mut g = SocialGraph::default();
        for (a, b) in set {
            g.link(&a, &b);
            g.edges.push(Edge {
                author_a: a,
                author_b: b,
                first_mention_ts: 0,
                reverse_mention_ts: 0,
            });
        }
        g
    }

    fn link(&mut self, a: &str, b: &str) {
        self.adjacency.entry(a.to_owned()).or_default().insert(b.to_owned());
        self.adjacency.entry(b.to_owned()).or_default().insert(a.to_owned());
    }

    /// Subgraph induced by `keep`.
    pub fn restrict<'a>(&self, keep: impl IntoIterator<Item = &'a str>) -> Self {
        let keep: BTreeSet<&str> = keep.into_iter().collect();
        let mut g = SocialGraph::default();
        for n in &keep {
            if self.adjacency.contains_key(*n) {
                g.adjacency.entry((*n).to_owned()).or_default();
            }
        }
        for e in &self.edges {
            if keep.contains(e.author_a.as_str()) && keep.contains(e.author_b.as_str()) {
                g.link(&e.author_a, &e.author_b);
                g.edges.push(e.clone());
            }
        }
        g
    }

    pub fn neighbors(&self, id: &str) -> Option<&BTreeSet<String>> {
        self.adjacency.get(id)
    }

    pub fn degree(&self, id: &str) -> usize {
        self.adjacency.get(id).map_or(0, BTreeSet::len)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.adjacency.contains_key(id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["author_a", "author_b", "first_mention_ts", "reverse_mention_ts"])?;
        for e in &self.edges {
            w.write_record([
                e.author_a.as_str(),
                e.author_b.as_str(),
                &format_timestamp(e.first_mention_ts),
                &format_timestamp(e.reverse_mention_ts),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<graph csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    /// Friends with a known gender.
    pub friends: usize,
    pub female: usize,
    pub male: usize,
}

impl Composition {
    pub fn count(&self, g: Gender) -> usize {
        match g {
            Gender::Female => self.female,
            Gender::Male => self.male,
            Gender::Unknown => 0,
        }
    }
}

/// Gender counts over an author's neighbors. Neighbors missing from
/// `genders` or of unknown gender are left out.
pub fn network_composition(
    author_id: &str,
    graph: &SocialGraph,
    genders: &HashMap<String, Gender>,
) -> Result<Composition> {
    let neighbors = graph
        .neighbors(author_id)
        .ok_or_else(|| Error::NoFriends(author_id.to_owned()))?;
    let mut c = Composition {
        friends: 0,
        female: 0,
        male: 0,
    };
    for n in neighbors {
        match genders.get(n) {
            Some(Gender::Female) => c.female += 1,
            Some(Gender::Male) => c.male += 1,
            _ => continue,
        }
        c.friends += 1;
    }
    if c.friends == 0 {
        return Err(Error::NoFriends(author_id.to_owned()));
    }
    Ok(c)
}

/// True when `P(Y >= same | Y ~ Binomial(friends, 0.5)) < significance`.
pub fn skew_test(same: u64, friends: u64, significance: f64) -> Result<bool> {
    if friends == 0 {
        return Err(Error::invalid("skew test needs at least one friend"));
    }
    if same > friends {
        return Err(Error::invalid(format!(
            "same-gender count {same} exceeds friend count {friends}"
        )));
    }
    Ok(binomial_tail(same, friends, 0.5f64)? < significance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyStats {
    pub author_id: String,
    pub gender: Gender,
    /// `M_n`: friends with a known gender.
    pub friends: usize,
    /// `l_n`: friends sharing the author's gender.
    pub same_gender: usize,
    pub female: usize,
    pub male: usize,
    pub skewed: bool,
}

impl HomophilyStats {
    pub fn same_gender_proportion(&self) -> f64 {
        self.same_gender as f64 / self.friends as f64
    }
}

/// Per-author homophily statistics for every gendered author in `genders`
/// who has at least one gendered friend, sorted by author id.
pub fn homophily_stats(
    graph: &SocialGraph,
    genders: &HashMap<String, Gender>,
    significance: f64,
) -> Result<Vec<HomophilyStats>> {
    let mut ids: Vec<&String> = genders.keys().collect();
    ids.sort();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let gender = genders[id];
        if !gender.is_known() {
            continue;
        }
        let c = match network_composition(id, graph, genders) {
            Ok(c) => c,
            Err(Error::NoFriends(_)) => continue,
            Err(e) => return Err(e),
        };
        let same = c.count(gender);
        out.push(HomophilyStats {
            author_id: id.clone(),
            gender,
            friends: c.friends,
            same_gender: same,
            female: c.female,
            male: c.male,
            skewed: skew_test(same as u64, c.friends as u64, significance)?,
        });
    }
    Ok(out)
}

pub fn write_homophily_csv<W: Write>(out: W, stats: &[HomophilyStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "author_id",
        "gender",
        "friends",
        "female_friends",
        "male_friends",
        "same_gender",
        "same_gender_proportion",
        "skewed",
    ])?;
    for s in stats {
        w.write_record([
            s.author_id.clone(),
            s.gender.to_string(),
            s.friends.to_string(),
            s.female.to_string(),
            s.male.to_string(),
            s.same_gender.to_string(),
            s.same_gender_proportion().to_string(),
            s.skewed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<homophily csv>", e))?;
    Ok(())
}

/// Share of edges joining two authors of the same gender, over edges whose
/// endpoints both have a known gender.
pub fn edge_homophily_rate(graph: &SocialGraph, genders: &HashMap<String, Gender>) -> Result<f64> {
    let mut same = 0usize;
    let mut total = 0usize;
    for e in graph.edges() {
        let (Some(&ga), Some(&gb)) = (genders.get(&e.author_a), genders.get(&e.author_b)) else {
            continue;
        };
        if !ga.is_known() || !gb.is_known() {
            continue;
        }
        total += 1;
        if ga == gb {
            same += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("no edges with both endpoints gendered"));
    }
    Ok(same as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tokenizer;
    use proptest::prelude::*;

    const DAY: i64 = 86_400;

    fn msg(from: &str, to: &str, day: i64) -> RawMessage {
        RawMessage::new(from, from, day * DAY, &format!("@{to} hey"), &Tokenizer::default())
    }

    fn genders(pairs: &[(&str, Gender)]) -> HashMap<String, Gender> {
        pairs.iter().map(|(k, g)| (k.to_string(), *g)).collect()
    }

    #[test]
    fn two_week_rule() {
        let g = SocialGraph::from_messages(&[msg("a", "b", 0), msg("b", "a", 15)]);
        assert_eq!(g.edge_count(), 1);
        assert!(g.neighbors("a").unwrap().contains("b"));
        let g = SocialGraph::from_messages(&[msg("a", "b", 0), msg("b", "a", 10)]);
        assert_eq!(g.edge_count(), 0);
        let g = SocialGraph::from_messages(&[msg("a", "b", 0), msg("a", "b", 20)]);
        assert_eq!(g.edge_count(), 0);
        // Exactly fourteen days qualifies.
        let g = SocialGraph::from_messages(&[msg("a", "b", 0), msg("b", "a", 14)]);
        assert_eq!(g.edge_count(), 1);
        // Any qualifying cross-direction pair suffices.
        let g = SocialGraph::from_messages(&[msg("b", "a", 1), msg("a", "b", 3), msg("a", "b", 16)]);
        assert_eq!(g.edges()[0].first_mention_ts, 16 * DAY);
        assert_eq!(g.edges()[0].reverse_mention_ts, DAY);
        // Self mentions never create edges.
        let g = SocialGraph::from_messages(&[msg("a", "a", 0), msg("a", "a", 30)]);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn composition_counts() {
        let g = SocialGraph::from_edges([
            ("x".into(), "a".into()),
            ("x".into(), "b".into()),
            ("x".into(), "c".into()),
            ("x".into(), "u".into()),
        ]);
        let gs = genders(&[
            ("a", Gender::Female),
            ("b", Gender::Female),
            ("c", Gender::Male),
            ("u", Gender::Unknown),
            ("x", Gender::Male),
        ]);
        let c = network_composition("x", &g, &gs).unwrap();
        assert_eq!((c.friends, c.female, c.male), (3, 2, 1));
        assert!(matches!(network_composition("nobody", &g, &gs), Err(Error::NoFriends(_))));
    }

    #[test]
    fn skew_examples() {
        assert!(skew_test(10, 10, 0.05).unwrap());
        assert!(!skew_test(4, 4, 0.05).unwrap());
        assert!(!skew_test(5, 10, 0.05).unwrap());
        assert!(skew_test(0, 0, 0.05).is_err());
    }

    #[test]
    fn homophily_rate_examples() {
        let clique = SocialGraph::from_edges([
            ("a".into(), "b".into()),
            ("b".into(), "c".into()),
            ("a".into(), "c".into()),
        ]);
        let all_f = genders(&[("a", Gender::Female), ("b", Gender::Female), ("c", Gender::Female)]);
        assert_eq!(edge_homophily_rate(&clique, &all_f).unwrap(), 1.0);
        let ffm = genders(&[("a", Gender::Female), ("b", Gender::Female), ("c", Gender::Male)]);
        assert!((edge_homophily_rate(&clique, &ffm).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(edge_homophily_rate(&SocialGraph::default(), &ffm).is_err());
    }

    #[test]
    fn restrict_drops_outside_edges() {
        let g = SocialGraph::from_edges([("a".into(), "b".into()), ("b".into(), "c".into())]);
        let r = g.restrict(["a", "b"]);
        assert_eq!(r.edge_count(), 1);
        assert_eq!(r.degree("b"), 1);
        assert!(!r.contains("c"));
    }

    fn arb_messages() -> impl Strategy<Value = Vec<(u8, u8, i64)>> {
        prop::collection::vec((0u8..6, 0u8..6, 0i64..60), 0..40)
    }

    proptest! {
        #[test]
        fn graph_symmetric_and_order_invariant(raw in arb_messages(), rot in 0usize..40) {
            let msgs: Vec<RawMessage> = raw
                .iter()
                .map(|&(a, b, d)| msg(&format!("n{a}"), &format!("n{b}"), d))
                .collect();
            let g = SocialGraph::from_messages(&msgs);
            let mut rotated = msgs.clone();
            if !rotated.is_empty() {
                let k = rot % rotated.len();
                rotated.rotate_left(k);
                rotated.reverse();
            }
            prop_assert_eq!(&g, &SocialGraph::from_messages(&rotated));
            for e in g.edges() {
                prop_assert!(g.neighbors(&e.author_a).unwrap().contains(&e.author_b));
                prop_assert!(g.neighbors(&e.author_b).unwrap().contains(&e.author_a));
            }
        }

        #[test]
        fn skew_monotone_in_same(m in 1u64..200, l in 0u64..200) {
            let l = l % m;
            if skew_test(l, m, 0.05).unwrap() {
                prop_assert!(skew_test(l + 1, m, 0.05).unwrap());
            }
        }

        #[test]
        fn edge_rate_matches_author_sums(edges in prop::collection::vec((0u8..12, 0u8..12), 1..40), gbits in any::<u16>()) {
            let g = SocialGraph::from_edges(edges.iter().map(|&(a, b)| (format!("n{a}"), format!("n{b}"))));
            prop_assume!(g.edge_count() > 0);
            let gs: HashMap<String, Gender> = (0..12)
                .map(|i| (format!("n{i}"), if gbits >> i & 1 == 1 { Gender::Female } else { Gender::Male }))
                .collect();
            let stats = homophily_stats(&g, &gs, 0.05).unwrap();
            let l: usize = stats.iter().map(|s| s.same_gender).sum();
            let m: usize = stats.iter().map(|s| s.friends).sum();
            let rate = edge_homophily_rate(&g, &gs).unwrap();
            prop_assert!((rate - l as f64 / m as f64).abs() < 1e-12);
        }
    }
}
