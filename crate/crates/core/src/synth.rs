//! Synthetic corpora with planted gender markers, topical clusters and
//! gender-homophilous friendships.
//!
//! Every author draws tokens from a mixture of blocks: a Zipf background,
//! the female and male marker lists, and the cluster lexica. An author's
//! own-gender markers are weighted `s` times the other gender's, and the
//! own cluster's lexicon `cluster_strength` times the others'. Block
//! masses are symmetric between genders, so the expected per-token rate of
//! a marker among its own gender is exactly `s` times the rate among the
//! other gender.
//!
//! Friendships come from a configuration model. Each edge stub is
//! homophilous with probability `rho`; homophilous stubs pair within the
//! author's gender, the rest pair across the whole population. With
//! `coupling_link`, a per-author persona `u ~ U(0, 1)` scales both the
//! marker intensity and the homophily of that author.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::{format_timestamp, Gender, RawMessage};
use crate::rng::{substream, StreamRng};
use crate::{Error, Result};

const DAY: i64 = 86_400;

const FEMALE_NAMES: [&str; 20] = [
    "Mary", "Emma", "Olivia", "Sophia", "Ava", "Isabella", "Mia", "Abigail", "Emily", "Charlotte",
    "Madison", "Elizabeth", "Amelia", "Evelyn", "Ella", "Chloe", "Harper", "Grace", "Lily", "Hannah",
];
const MALE_NAMES: [&str; 20] = [
    "James", "John", "Robert", "Michael", "William", "David", "Richard", "Joseph", "Thomas", "Charles",
    "Daniel", "Matthew", "Anthony", "Mark", "Steven", "Paul", "Andrew", "Joshua", "Kevin", "Brian",
];
const SURNAMES: [&str; 10] = [
    "Smith", "Johnson", "Williams", "Brown", "Jones", "Garcia", "Miller", "Davis", "Wilson", "Moore",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_authors: usize,
    pub female_share: f64,
    pub tokens_per_author: usize,
    /// Plain (non-mention) messages per author.
    pub messages_per_author: usize,
    pub background_vocab: usize,
    pub zipf_exponent: f64,
    pub markers_per_gender: usize,
    /// Usage-rate multiplier for own-gender markers.
    pub marker_strength: f64,
    /// Weight of each marker term relative to the whole background.
    pub marker_base_rate: f64,
    pub n_clusters: usize,
    pub cluster_lexicon_size: usize,
    pub cluster_strength: f64,
    pub cluster_base_rate: f64,
    /// 0 spreads clusters evenly over genders; 1 ties cluster index to
    /// gender as strongly as possible.
    pub cluster_gender_bias: f64,
    pub rho: f64,
    pub coupling_link: bool,
    pub mean_degree: f64,
    pub min_degree: usize,
    pub max_degree: usize,
    /// Unix time of the first possible message.
    pub start_timestamp: i64,
    pub window_days: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_authors: 2000,
            female_share: 0.5,
            tokens_per_author: 200,
            messages_per_author: 10,
            background_vocab: 5000,
            zipf_exponent: 1.0,
            markers_per_gender: 50,
            marker_strength: 1.0,
            marker_base_rate: 0.001,
            n_clusters: 0,
            cluster_lexicon_size: 50,
            cluster_strength: 3.0,
            cluster_base_rate: 0.002,
            cluster_gender_bias: 0.0,
            rho: 0.0,
            coupling_link: false,
            mean_degree: 10.0,
            min_degree: 4,
            max_degree: 100,
            // 2011-01-01T00:00:00Z
            start_timestamp: 1_293_840_000,
            window_days: 181,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, message: &str| Error::Config {
            field: format!("synth.{field}"),
            message: message.into(),
        };
        if self.n_authors < 2 {
            return Err(err("n_authors", "need at least two authors"));
        }
        if !(0.0..=1.0).contains(&self.female_share) {
            return Err(err("female_share", "must lie in [0, 1]"));
        }
        if self.background_vocab == 0 {
            return Err(err("background_vocab", "must be positive"));
        }
        if !(self.zipf_exponent > 0.0) {
            return Err(err("zipf_exponent", "must be positive"));
        }
        if !(self.marker_strength >= 1.0) {
            return Err(err("marker_strength", "must be at least 1"));
        }
        if !(self.marker_base_rate >= 0.0) || !(self.cluster_base_rate >= 0.0) {
            return Err(err("marker_base_rate", "base rates must be nonnegative"));
        }
        if !(self.cluster_strength >= 1.0) {
            return Err(err("cluster_strength", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.cluster_gender_bias) {
            return Err(err("cluster_gender_bias", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(err("rho", "must lie in [0, 1]"));
        }
        if self.min_degree > self.max_degree {
            return Err(err("min_degree", "must not exceed max_degree"));
        }
        if !(self.mean_degree > 0.0) {
            return Err(err("mean_degree", "must be positive"));
        }
        if self.window_days < 16 {
            return Err(err("window_days", "mention pairs need a window of at least 16 days"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthAuthor {
    pub author_id: String,
    pub name: String,
    pub gender: Gender,
    pub cluster: Option<usize>,
    /// Persona draw in [0, 1); only used with `coupling_link`.
    pub persona: f64,
    pub marker_intensity: f64,
    pub homophily: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Sorted by author id.
    pub authors: Vec<SynthAuthor>,
    pub female_markers: Vec<String>,
    pub male_markers: Vec<String>,
    pub cluster_lexica: Vec<Vec<String>>,
    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub messages: Vec<RawMessage>,
    /// `(name, sex, count)` rows.
    pub name_rows: Vec<(String, String, u64)>,
    pub truth: GroundTruth,
}

pub fn background_term(i: usize) -> String {
    format!("w{i}")
}

pub fn marker_term(g: Gender, j: usize) -> String {
    match g {
        Gender::Female => format!("fm{j}"),
        _ => format!("mm{j}"),
    }
}

pub fn cluster_term(k: usize, j: usize) -> String {
    format!("c{k}t{j}")
}

fn author_id(i: usize) -> String {
    format!("u{i:05}")
}

/// Token sampler for one author: blocks with fixed masses, uniform inside
/// the marker and lexicon blocks, Zipf inside the background.
struct TokenModel<'a> {
    cfg: &'a SynthConfig,
    zipf: Zipf<f64>,
}

impl TokenModel<'_> {
    fn sample(&self, rng: &mut StreamRng, a: &SynthAuthor, out: &mut Vec<String>, n: usize) {
        let cfg = self.cfg;
        let m = cfg.markers_per_gender as f64 * cfg.marker_base_rate;
        let (own_g, other_g) = (a.gender, a.gender.other());
        let l = cfg.cluster_lexicon_size as f64 * cfg.cluster_base_rate;
        let k = cfg.n_clusters;
        let own_c = if k > 0 { l * cfg.cluster_strength } else { 0.0 };
        let other_c = if k > 1 { l * (k - 1) as f64 } else { 0.0 };
        let masses = [1.0, m * a.marker_intensity, m, own_c, other_c];
        let total: f64 = masses.iter().sum();
        for _ in 0..n {
            let mut u = rng.random::<f64>() * total;
            let mut block = masses.len() - 1;
            for (b, &w) in masses.iter().enumerate() {
                if u < w {
                    block = b;
                    break;
                }
                u -= w;
            }
            let tok = match block {
                0 => {
                    let r = self.zipf.sample(rng) as usize;
                    background_term(r.clamp(1, cfg.background_vocab) - 1)
                }
                1 => marker_term(own_g, rng.random_range(0..cfg.markers_per_gender)),
                2 => marker_term(other_g, rng.random_range(0..cfg.markers_per_gender)),
                3 => cluster_term(a.cluster.unwrap_or(0), rng.random_range(0..cfg.cluster_lexicon_size)),
                _ => {
                    let own = a.cluster.unwrap_or(0);
                    let mut c = rng.random_range(0..k - 1);
                    if c >= own {
                        c += 1;
                    }
                    cluster_term(c, rng.random_range(0..cfg.cluster_lexicon_size))
                }
            };
            out.push(tok);
        }
    }
}

fn assign_population(cfg: &SynthConfig) -> Vec<SynthAuthor> {
    let n = cfg.n_authors;
    let mut rng = substream(cfg.seed, "synth-population", 0);
    let n_female = (cfg.female_share * n as f64).round() as usize;
    let mut genders: Vec<Gender> = (0..n)
        .map(|i| if i < n_female { Gender::Female } else { Gender::Male })
        .collect();
    genders.shuffle(&mut rng);

    let clusters: Vec<Option<usize>> = if cfg.n_clusters == 0 {
        vec![None; n]
    } else if cfg.cluster_gender_bias == 0.0 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut c = vec![None; n];
        for (pos, &i) in order.iter().enumerate() {
            c[i] = Some(pos % cfg.n_clusters);
        }
        c
    } else {
        let k = cfg.n_clusters;
        let lean: Vec<f64> = (0..k)
            .map(|c| {
                let x = if k == 1 { 0.5 } else { c as f64 / (k - 1) as f64 };
                0.5 + cfg.cluster_gender_bias * (x - 0.5)
            })
            .collect();
        genders
            .iter()
            .map(|&g| {
                let w: Vec<f64> = lean
                    .iter()
                    .map(|&q| if g == Gender::Female { q } else { 1.0 - q })
                    .collect();
                let total: f64 = w.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (c, &x) in w.iter().enumerate() {
                    if u < x {
                        return Some(c);
                    }
                    u -= x;
                }
                Some(k - 1)
            })
            .collect()
    };

    (0..n)
        .map(|i| {
            let persona: f64 = rng.random();
            let (intensity, homophily) = if cfg.coupling_link {
                (
                    1.0 + (cfg.marker_strength - 1.0) * 2.0 * persona,
                    (2.0 * cfg.rho * persona).min(1.0),
                )
            } else {
                (cfg.marker_strength, cfg.rho)
            };
            let names: &[&str] = if genders[i] == Gender::Female {
                &FEMALE_NAMES
            } else {
                &MALE_NAMES
            };
            let name = format!(
                "{} {}",
                names[rng.random_range(0..names.len())],
                SURNAMES[rng.random_range(0..SURNAMES.len())]
            );
            SynthAuthor {
                author_id: author_id(i),
                name,
                gender: genders[i],
                cluster: clusters[i],
                persona,
                marker_intensity: intensity,
                homophily,
            }
        })
        .collect()
}

/// Degree sequence, stub pairing, then repair of self-loops, duplicate
/// edges and degrees outside the configured range.
fn generate_edges(cfg: &SynthConfig, authors: &[SynthAuthor]) -> Result<Vec<(usize, usize)>> {
    let n = authors.len();
    if cfg.min_degree >= n {
        return Err(Error::InfeasibleDegrees(format!(
            "{n} authors cannot each have {} distinct friends",
            cfg.min_degree
        )));
    }
    let max_deg = cfg.max_degree.min(n - 1);
    let mut rng = substream(cfg.seed, "synth-graph", 0);
    let poisson = Poisson::new(cfg.mean_degree).map_err(|e| Error::invalid(e.to_string()))?;
    let mut degree: Vec<usize> = (0..n)
        .map(|_| (poisson.sample(&mut rng) as usize).clamp(cfg.min_degree, max_deg))
        .collect();
    if degree.iter().sum::<usize>() % 2 == 1 {
        match degree.iter().position(|&d| d < max_deg) {
            Some(i) => degree[i] += 1,
            None => degree[0] -= 1,
        }
    }

    let mut female_pool = Vec::new();
    let mut male_pool = Vec::new();
    let mut global_pool = Vec::new();
    for (i, a) in authors.iter().enumerate() {
        for _ in 0..degree[i] {
            if rng.random_bool(a.homophily) {
                if a.gender == Gender::Female {
                    female_pool.push(i);
                } else {
                    male_pool.push(i);
                }
            } else {
                global_pool.push(i);
            }
        }
    }
    for pool in [&mut female_pool, &mut male_pool] {
        if pool.len() % 2 == 1 {
            let j = rng.random_range(0..pool.len());
            global_pool.push(pool.swap_remove(j));
        }
    }
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for pool in [&mut female_pool, &mut male_pool, &mut global_pool] {
        pool.shuffle(&mut rng);
        for pair in pool.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a != b {
                edges.insert((a, b));
            }
        }
    }

    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for &(a, b) in &edges {
        adj[a].insert(b);
        adj[b].insert(a);
    }
    // Trim authors above the cap, dropping edges to well-connected friends.
    for i in 0..n {
        while adj[i].len() > max_deg {
            let mut ns: Vec<usize> = adj[i].iter().copied().collect();
            ns.sort_unstable();
            let j = *ns.iter().max_by_key(|&&j| adj[j].len()).expect("nonempty");
            adj[i].remove(&j);
            adj[j].remove(&i);
        }
    }
    // Top up authors below the floor, preferring same-gender partners with
    // the author's homophily.
    let by_gender = |g: Gender| -> Vec<usize> { (0..n).filter(|&j| authors[j].gender == g).collect() };
    let females = by_gender(Gender::Female);
    let males = by_gender(Gender::Male);
    let everyone: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let mut attempts = 0;
        while adj[i].len() < cfg.min_degree {
            attempts += 1;
            if attempts > 100 * n {
                return Err(Error::InfeasibleDegrees(format!(
                    "could not raise {} to {} friends",
                    authors[i].author_id, cfg.min_degree
                )));
            }
            let same = if authors[i].gender == Gender::Female { &females } else { &males };
            let pool = if rng.random_bool(authors[i].homophily) && same.len() > 1 {
                same
            } else {
                &everyone
            };
            let j = pool[rng.random_range(0..pool.len())];
            if j == i || adj[i].contains(&j) || adj[j].len() >= max_deg {
                continue;
            }
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, ns) in adj.iter().enumerate() {
        for &j in ns {
            if i < j {
                out.push((i, j));
            }
        }
    }
    out.sort_unstable();
    if let Some(i) = (0..n).find(|&i| adj[i].len() < cfg.min_degree || adj[i].len() > max_deg) {
        return Err(Error::InfeasibleDegrees(format!(
            "author {} ends with {} friends",
            authors[i].author_id,
            adj[i].len()
        )));
    }
    Ok(out)
}

pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let authors = assign_population(cfg);
    let edges = generate_edges(cfg, &authors)?;
    let n = authors.len();

    // Mention schedule: one message each way, at least 15 days apart.
    let window = cfg.window_days * DAY;
    let gap = 15 * DAY;
    let mut mentions: Vec<Vec<(i64, usize)>> = vec![Vec::new(); n];
    let mut trng = substream(cfg.seed, "synth-mentions", 0);
    for &(a, b) in &edges {
        let t1 = cfg.start_timestamp + trng.random_range(0..window - gap);
        let t2 = t1 + gap + trng.random_range(0..(cfg.start_timestamp + window - t1 - gap).max(1));
        let (first, second) = if trng.random_bool(0.5) { (a, b) } else { (b, a) };
        mentions[first].push((t1, second));
        mentions[second].push((t2, first));
    }

    let model = TokenModel {
        cfg,
        zipf: Zipf::new(cfg.background_vocab as f64, cfg.zipf_exponent)
            .map_err(|e| Error::invalid(e.to_string()))?,
    };
    let mut messages = Vec::new();
    for (i, a) in authors.iter().enumerate() {
        let mut rng = substream(cfg.seed, "synth-tokens", i as u64);
        let plain = cfg.messages_per_author.max(1);
        let mut slots: Vec<(i64, Option<usize>)> = (0..plain)
            .map(|_| (cfg.start_timestamp + rng.random_range(0..window), None))
            .collect();
        slots.extend(mentions[i].iter().map(|&(t, j)| (t, Some(j))));
        slots.sort_unstable();
        let mut tokens = Vec::with_capacity(cfg.tokens_per_author);
        model.sample(&mut rng, a, &mut tokens, cfg.tokens_per_author);
        let per = tokens.len().div_ceil(slots.len()).max(1);
        let mut chunks = tokens.chunks(per);
        for (t, target) in slots {
            let mut text = match target {
                Some(j) => format!("@{}", authors[j].author_id),
                None => String::new(),
            };
            if let Some(c) = chunks.next() {
                for tok in c {
                    if !text.is_empty() {
                        text.push(' ');
                    }
                    text.push_str(tok);
                }
            }
            let mentions = target.map(|j| vec![authors[j].author_id.clone()]).unwrap_or_default();
            messages.push(RawMessage {
                author_id: a.author_id.clone(),
                name: a.name.clone(),
                timestamp: t,
                text,
                mentions,
            });
        }
    }

    let mut name_rows = Vec::new();
    for (i, f) in FEMALE_NAMES.iter().enumerate() {
        name_rows.push((f.to_string(), "F".to_string(), 20_000 + 100 * i as u64));
        name_rows.push((f.to_string(), "M".to_string(), 40 + i as u64));
    }
    for (i, m) in MALE_NAMES.iter().enumerate() {
        name_rows.push((m.to_string(), "M".to_string(), 20_000 + 100 * i as u64));
        name_rows.push((m.to_string(), "F".to_string(), 40 + i as u64));
    }

    let truth = GroundTruth {
        female_markers: (0..cfg.markers_per_gender).map(|j| marker_term(Gender::Female, j)).collect(),
        male_markers: (0..cfg.markers_per_gender).map(|j| marker_term(Gender::Male, j)).collect(),
        cluster_lexica: (0..cfg.n_clusters)
            .map(|k| (0..cfg.cluster_lexicon_size).map(|j| cluster_term(k, j)).collect())
            .collect(),
        edges: edges
            .iter()
            .map(|&(a, b)| (authors[a].author_id.clone(), authors[b].author_id.clone()))
            .collect(),
        authors,
    };
    Ok(SyntheticCorpus {
        messages,
        name_rows,
        truth,
    })
}

impl SyntheticCorpus {
    /// Writes `messages.jsonl`, `names.csv` and `ground_truth.json`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("messages.jsonl");
        let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        let mut w = std::io::BufWriter::new(f);
        crate::corpus::write_messages(&mut w, &self.messages)?;
        w.flush().map_err(|e| Error::io(&p, e))?;

        let p = dir.join("names.csv");
        let mut s = String::from("name,sex,count\n");
        for (name, sex, count) in &self.name_rows {
            s.push_str(&format!("{name},{sex},{count}\n"));
        }
        std::fs::write(&p, s).map_err(|e| Error::io(&p, e))?;

        let p = dir.join("ground_truth.json");
        std::fs::write(&p, serde_json::to_string_pretty(&self.truth)?).map_err(|e| Error::io(&p, e))?;
        Ok(())
    }

    /// Time span covered by the messages, formatted for logs.
    pub fn time_range(&self) -> Option<(String, String)> {
        let lo = self.messages.iter().map(|m| m.timestamp).min()?;
        let hi = self.messages.iter().map(|m| m.timestamp).max()?;
        Some((format_timestamp(lo), format_timestamp(hi)))
    }
}
