//! Config-driven pipeline runs.
//!
//! A [`RunConfig`] names the input files and holds every module's settings.
//! Each command writes its artifacts to the output directory and records
//! their SHA-256 digests, together with the config hash, seed and input
//! digests, under its own entry in `manifest.json`. Manifests carry no
//! timestamps, so reruns with the same config produce identical files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::categories::{categorize_vocabulary, category_report, write_term_categories_csv, Category, CategoryLexicon};
use crate::classifier::{
    cross_validate, token_budget_curve, train, write_curve_csv, CvReport, Dataset, TrainConfig,
};
use crate::clustering::{
    balance_by_gender, cluster_composition_report, count_vectors, fit_clusters, CompositionInputs, EmConfig,
};
use crate::corpus::{
    build_authors, filter_corpus, read_messages, CorpusFilterConfig, EmoticonLexicon, FilterReport, Tokenizer,
};
use crate::features::{VocabConfig, Vocabulary};
use crate::markers::{find_gender_markers, marker_proportions, write_markers_csv, MarkerConfig, MarkerTable, TermCounts};
use crate::network::{edge_homophily_rate, homophily_stats, write_homophily_csv, HomophilyStats};
use crate::stats::{bin_and_aggregate, write_correlations_csv, BinMode, CorrelationResult};
use crate::synth::{generate_synthetic_corpus, SynthConfig};
use crate::{Author, Error, Gender, NameGenderTable, Result, SocialGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Command {
    Ingest,
    Classify,
    Markers,
    Categorize,
    Cluster,
    Network,
    Homophily,
    Curve,
    Synth,
    All,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Ingest,
        Command::Classify,
        Command::Markers,
        Command::Categorize,
        Command::Cluster,
        Command::Network,
        Command::Homophily,
        Command::Curve,
        Command::Synth,
        Command::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Classify => "classify",
            Command::Markers => "markers",
            Command::Categorize => "categorize",
            Command::Cluster => "cluster",
            Command::Network => "network",
            Command::Homophily => "homophily",
            Command::Curve => "curve",
            Command::Synth => "synth",
            Command::All => "all",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown command `{s}`")))
    }
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// JSON-lines message file. When absent, `all` synthesizes a corpus.
    pub messages: Option<PathBuf>,
    /// `name,sex,count` CSV.
    pub names: Option<PathBuf>,
    /// Emoticon list; the shipped list is used when absent.
    pub emoticons: Option<PathBuf>,
    /// Directory of category lexicon files overriding the shipped lists.
    pub lexicon_dir: Option<PathBuf>,
    /// Dictionary wordlist overriding the shipped one.
    pub dictionary: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            messages: None,
            names: None,
            emoticons: None,
            lexicon_dir: None,
            dictionary: None,
            output_dir: PathBuf::from("sociolex-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterReportConfig {
    /// Subsample the majority gender before clustering.
    pub balance: bool,
    pub min_size: usize,
    pub top_words: usize,
}

impl Default for ClusterReportConfig {
    fn default() -> Self {
        ClusterReportConfig {
            balance: true,
            min_size: 100,
            top_words: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Significance level of the per-author binomial skew test.
    pub significance: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { significance: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomophilyConfig {
    /// Confidence level of the Fisher intervals.
    pub level: f64,
    pub bins: usize,
    pub bin_mode: BinMode,
}

impl Default for HomophilyConfig {
    fn default() -> Self {
        HomophilyConfig {
            level: 0.99,
            bins: 10,
            bin_mode: BinMode::EqualCount,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    pub budgets: Vec<usize>,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            budgets: vec![0, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000, 2000, 5000],
        }
    }
}

/// Everything a run needs. Module-level `seed` keys are overwritten by the
/// global `seed`, which every stage derives its random streams from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub corpus: CorpusFilterConfig,
    pub vocab: VocabConfig,
    pub classifier: TrainConfig<f64>,
    pub markers: MarkerConfig,
    pub clustering: EmConfig<f64>,
    pub cluster_report: ClusterReportConfig,
    pub network: NetworkConfig,
    pub homophily: HomophilyConfig,
    pub curve: CurveConfig,
    pub synth: SynthConfig,
}

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Parses TOML. Errors name the offending key path.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(s).map_err(|e| config_error("<root>", e.to_string()))?;
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let field = if field == "." { "<root>".to_string() } else { field };
            config_error(&field, e.into_inner().to_string())
        })?;
        cfg.propagate_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.messages,
            &mut p.names,
            &mut p.emoticons,
            &mut p.lexicon_dir,
            &mut p.dictionary,
        ] {
            if let Some(v) = slot.as_mut() {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        }
        if p.output_dir.is_relative() {
            p.output_dir = base.join(&p.output_dir);
        }
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.propagate_seed();
    }

    fn propagate_seed(&mut self) {
        self.classifier.seed = self.seed;
        self.clustering.seed = self.seed;
        self.synth.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.classifier.validate()?;
        self.markers.validate()?;
        self.clustering.validate()?;
        self.synth.validate()?;
        if self.vocab.size == 0 {
            return Err(config_error("vocab.size", "must be positive"));
        }
        if !(self.network.significance > 0.0 && self.network.significance < 1.0) {
            return Err(config_error("network.significance", "must lie in (0, 1)"));
        }
        if !(self.homophily.level > 0.0 && self.homophily.level < 1.0) {
            return Err(config_error("homophily.level", "must lie in (0, 1)"));
        }
        if self.homophily.bins == 0 {
            return Err(config_error("homophily.bins", "must be positive"));
        }
        if self.curve.budgets.is_empty() || self.curve.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_error("curve.budgets", "must be nonempty and strictly increasing"));
        }
        Ok(())
    }

    /// SHA-256 of the config with file locations removed; inputs are
    /// covered by their own digests.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = PathsConfig::default();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_sha256: String,
    pub seed: u64,
    /// Input role (`messages`, `names`, ...) to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Artifact path relative to the output directory to SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Latest run of each command.
    pub runs: BTreeMap<String, RunRecord>,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(Self::FILE);
        if !p.exists() {
            return Ok(Manifest::default());
        }
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Filtered authors and the mention graph restricted to them.
struct Ingested {
    authors: Vec<Author>,
    graph: SocialGraph,
    genders: HashMap<String, Gender>,
    report: FilterReport,
}

/// Intermediate results shared by the stages of one run.
struct Run {
    cfg: RunConfig,
    out: PathBuf,
    record: RunRecord,
    ingested: Option<Ingested>,
    vocab: Option<Vocabulary>,
    cv: Option<CvReport<f64>>,
    markers: Option<[MarkerTable<f64>; 2]>,
    homophily: Option<Vec<HomophilyStats>>,
    categories: Option<Vec<Category>>,
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<S: Serialize>(value: &S) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn gender_index(g: Gender) -> usize {
    match g {
        Gender::Female => 0,
        _ => 1,
    }
}

const GENDERS: [Gender; 2] = [Gender::Female, Gender::Male];

impl Run {
    fn new(cfg: RunConfig, out: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let record = RunRecord {
            config_sha256: cfg.hash(),
            seed: cfg.seed,
            ..Default::default()
        };
        Ok(Run {
            cfg,
            out,
            record,
            ingested: None,
            vocab: None,
            cv: None,
            markers: None,
            homophily: None,
            categories: None,
        })
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        let p = self.out.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&p, &bytes).map_err(|e| Error::io(&p, e))?;
        self.record.artifacts.insert(name.to_string(), sha256_hex(&bytes));
        log::info!("wrote {}", p.display());
        Ok(())
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.record.inputs.insert(role.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    fn required(&self, path: &Option<PathBuf>, field: &str) -> Result<PathBuf> {
        let p = path
            .clone()
            .ok_or_else(|| config_error(field, "required by this command"))?;
        if !p.exists() {
            return Err(config_error(field, format!("{} does not exist", p.display())));
        }
        Ok(p)
    }

    fn ingested(&mut self) -> Result<&Ingested> {
        if self.ingested.is_none() {
            let messages_path = self.required(&self.cfg.paths.messages, "paths.messages")?;
            let names_path = self.required(&self.cfg.paths.names, "paths.names")?;
            let tokenizer = match self.cfg.paths.emoticons.clone() {
                Some(_) => {
                    let p = self.required(&self.cfg.paths.emoticons, "paths.emoticons")?;
                    self.input("emoticons", &p)?;
                    Tokenizer::new(EmoticonLexicon::load(&p)?)
                }
                None => Tokenizer::default(),
            };
            self.input("messages", &messages_path)?;
            self.input("names", &names_path)?;
            let messages = read_messages(&messages_path, &tokenizer)?;
            let table = NameGenderTable::load(&names_path)?;
            let all = build_authors(&messages, &tokenizer, &table, self.cfg.corpus.name_min_total);
            let full_graph = SocialGraph::from_messages(&messages);
            let (authors, report) = filter_corpus(&all, &full_graph, &self.cfg.corpus)?;
            if authors.is_empty() {
                return Err(Error::EmptyCorpus);
            }
            log::info!(
                "{} messages, {} authors, {} retained after filtering",
                messages.len(),
                all.len(),
                authors.len()
            );
            let graph = full_graph.restrict(authors.iter().map(|a| a.author_id.as_str()));
            let genders = authors.iter().map(|a| (a.author_id.clone(), a.gender)).collect();
            self.ingested = Some(Ingested {
                authors,
                graph,
                genders,
                report,
            });
        }
        Ok(self.ingested.as_ref().expect("ingested"))
    }

    fn vocab(&mut self) -> Result<&Vocabulary> {
        if self.vocab.is_none() {
            let cfg = self.cfg.vocab.clone();
            let v = Vocabulary::build(&self.ingested()?.authors, &cfg)?;
            self.vocab = Some(v);
        }
        Ok(self.vocab.as_ref().expect("vocab"))
    }

    fn data(&mut self) -> Result<Dataset<f64>> {
        self.vocab()?;
        let ing = self.ingested.as_ref().expect("ingested");
        Dataset::from_authors(&ing.authors, self.vocab.as_ref().expect("vocab"), None)
    }

    fn cv(&mut self) -> Result<&CvReport<f64>> {
        if self.cv.is_none() {
            let data = self.data()?;
            let r = cross_validate(&data, &self.cfg.classifier)?;
            log::info!(
                "cross-validated accuracy {:.4} (mean over folds {:.4})",
                r.pooled_accuracy,
                r.mean_accuracy
            );
            self.cv = Some(r);
        }
        Ok(self.cv.as_ref().expect("cv"))
    }

    fn markers(&mut self) -> Result<&[MarkerTable<f64>; 2]> {
        if self.markers.is_none() {
            self.vocab()?;
            let ing = self.ingested.as_ref().expect("ingested");
            let counts = TermCounts::by_gender(&ing.authors, self.vocab.as_ref().expect("vocab"))?;
            let table = |g: Gender| -> Result<MarkerTable<f64>> {
                let idx = counts
                    .group_index(g.as_str())
                    .ok_or_else(|| Error::invalid(format!("no {g} authors")))?;
                find_gender_markers(&counts, idx, &self.cfg.markers)
            };
            let tables = [table(Gender::Female)?, table(Gender::Male)?];
            log::info!("{} female and {} male markers", tables[0].len(), tables[1].len());
            self.markers = Some(tables);
        }
        Ok(self.markers.as_ref().expect("markers"))
    }

    fn homophily(&mut self) -> Result<&[HomophilyStats]> {
        if self.homophily.is_none() {
            let significance = self.cfg.network.significance;
            let ing = self.ingested()?;
            let stats = homophily_stats(&ing.graph, &ing.genders, significance)?;
            self.homophily = Some(stats);
        }
        Ok(self.homophily.as_ref().expect("homophily"))
    }

    fn categories(&mut self) -> Result<&[Category]> {
        if self.categories.is_none() {
            let mut lex = match self.cfg.paths.lexicon_dir.clone() {
                Some(_) => {
                    let dir = self.required(&self.cfg.paths.lexicon_dir, "paths.lexicon_dir")?;
                    for name in crate::categories::LEXICON_FILES {
                        let p = dir.join(name);
                        if p.exists() {
                            self.input(&format!("lexicon/{name}"), &p)?;
                        }
                    }
                    CategoryLexicon::load_dir(&dir)?
                }
                None => CategoryLexicon::shipped(),
            };
            if self.cfg.paths.dictionary.is_some() {
                let p = self.required(&self.cfg.paths.dictionary, "paths.dictionary")?;
                self.input("dictionary", &p)?;
                lex = lex.with_dictionary(&p)?;
            }
            let cats = categorize_vocabulary(self.vocab()?, &lex)?;
            self.categories = Some(cats);
        }
        Ok(self.categories.as_ref().expect("categories"))
    }

    fn stage_ingest(&mut self) -> Result<()> {
        let ing = self.ingested()?;
        let authors = csv_bytes(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["author_id", "first_name", "gender", "message_count", "token_count"])?;
            for a in &ing.authors {
                w.write_record([
                    a.author_id.clone(),
                    a.first_name.clone(),
                    a.gender.to_string(),
                    a.message_count.to_string(),
                    a.tokens.len().to_string(),
                ])?;
            }
            w.flush().map_err(|e| Error::io("<authors csv>", e))?;
            Ok(())
        })?;
        let edges = csv_bytes(|buf| ing.graph.write_csv(buf))?;
        let report = json_bytes(&ing.report)?;
        self.write("authors.csv", authors)?;
        self.write("graph_edges.csv", edges)?;
        self.write("filter_report.json", report)
    }

    fn stage_classify(&mut self) -> Result<()> {
        let vocab_csv = csv_bytes(|buf| self.vocab()?.write_csv(buf))?;
        self.write("vocabulary.csv", vocab_csv)?;
        self.cv()?;
        let data = self.data()?;
        let ing = self.ingested.as_ref().expect("ingested");
        let cv = self.cv.as_ref().expect("cv");
        let report = csv_bytes(|buf| cv.write_csv(buf, &ing.authors))?;
        let summary = csv_bytes(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["fold", "test_size", "accuracy", "lambda"])?;
            for (f, (acc, lambda)) in cv.fold_accuracies.iter().zip(&cv.chosen_lambdas).enumerate() {
                let size = cv.fold.iter().filter(|&&x| x == f).count();
                w.write_record([f.to_string(), size.to_string(), acc.to_string(), lambda.to_string()])?;
            }
            let n = cv.fold.len().to_string();
            w.write_record(["pooled", &n, &cv.pooled_accuracy.to_string(), ""])?;
            w.write_record(["mean", &n, &cv.mean_accuracy.to_string(), ""])?;
            w.flush().map_err(|e| Error::io("<cv summary csv>", e))?;
            Ok(())
        })?;
        let lambda = modal_lambda(&cv.chosen_lambdas);
        let model = train(&data, lambda, &self.cfg.classifier)?;
        self.write("cv_report.csv", report)?;
        self.write("cv_summary.csv", summary)?;
        self.write("model.json", model.to_json()?.into_bytes())
    }

    fn stage_markers(&mut self) -> Result<()> {
        let tables = self.markers()?;
        let bytes = csv_bytes(|buf| write_markers_csv(buf, &[&tables[0], &tables[1]]))?;
        self.write("markers.csv", bytes)
    }

    fn stage_categorize(&mut self) -> Result<()> {
        self.categories()?;
        let vocab = self.vocab.as_ref().expect("vocab");
        let cats = self.categories.as_ref().expect("categories");
        let ing = self.ingested.as_ref().expect("ingested");
        let terms = csv_bytes(|buf| write_term_categories_csv(buf, vocab, cats))?;
        let group_of: Vec<usize> = ing.authors.iter().map(|a| gender_index(a.gender)).collect();
        let names: Vec<String> = GENDERS.iter().map(|g| g.to_string()).collect();
        let report = category_report(&ing.authors, vocab, cats, &group_of, &names)?;
        let report = csv_bytes(|buf| report.write_csv(buf))?;
        self.write("term_categories.csv", terms)?;
        self.write("category_report.csv", report)
    }

    fn stage_cluster(&mut self) -> Result<()> {
        self.categories()?;
        let ing = self.ingested.as_ref().expect("ingested");
        let vocab = self.vocab.as_ref().expect("vocab");
        let members = if self.cfg.cluster_report.balance {
            balance_by_gender(&ing.authors, self.cfg.seed)?
        } else {
            ing.authors.clone()
        };
        let counts = count_vectors::<f64>(&members, vocab);
        let fit = fit_clusters(&counts, vocab.len(), &self.cfg.clustering)?;
        log::info!(
            "best of {} restarts: {} (objective {})",
            fit.traces.len(),
            fit.best_restart,
            fit.model.objective
        );
        let report = cluster_composition_report(
            &fit.model,
            &CompositionInputs {
                authors: &members,
                vocab,
                graph: &ing.graph,
                genders: &ing.genders,
                categories: self.categories.as_deref(),
                min_size: self.cfg.cluster_report.min_size,
                top_words: self.cfg.cluster_report.top_words,
            },
        )?;
        #[derive(Serialize)]
        struct Summary<'a> {
            authors: usize,
            best_restart: usize,
            objective: f64,
            restart_objectives: Vec<f64>,
            restart_iterations: Vec<usize>,
            cluster_sizes: Vec<usize>,
            author_ids: Vec<&'a str>,
            trend_slope: Option<f64>,
            trend_intercept: Option<f64>,
        }
        let summary = Summary {
            authors: members.len(),
            best_restart: fit.best_restart,
            objective: fit.model.objective,
            restart_objectives: fit.traces.iter().map(|t| *t.objective.last().unwrap_or(&f64::NAN)).collect(),
            restart_iterations: fit.traces.iter().map(|t| t.iterations).collect(),
            cluster_sizes: fit.model.cluster_sizes(),
            author_ids: members.iter().map(|a| a.author_id.as_str()).collect(),
            trend_slope: report.trend.map(|t| t.0),
            trend_intercept: report.trend.map(|t| t.1),
        };
        let summary = json_bytes(&summary)?;
        let report_csv = csv_bytes(|buf| report.write_csv(buf))?;
        self.write("cluster_model.json", fit.model.to_json()?.into_bytes())?;
        self.write("cluster_report.csv", report_csv)?;
        self.write("cluster_summary.json", summary)
    }

    fn stage_network(&mut self) -> Result<()> {
        self.homophily()?;
        let ing = self.ingested.as_ref().expect("ingested");
        let stats = self.homophily.as_ref().expect("homophily");
        let bytes = csv_bytes(|buf| write_homophily_csv(buf, stats))?;
        #[derive(Serialize)]
        struct GroupSummary {
            authors: usize,
            mean_same_gender_proportion: f64,
            skewed_share: f64,
        }
        let group = |g: Gender| {
            let s: Vec<&HomophilyStats> = stats.iter().filter(|s| s.gender == g).collect();
            let n = s.len().max(1) as f64;
            GroupSummary {
                authors: s.len(),
                mean_same_gender_proportion: s.iter().map(|s| s.same_gender_proportion()).sum::<f64>() / n,
                skewed_share: s.iter().filter(|s| s.skewed).count() as f64 / n,
            }
        };
        #[derive(Serialize)]
        struct Summary {
            authors: usize,
            edges: usize,
            edge_homophily_rate: f64,
            skewed_share: f64,
            female: GroupSummary,
            male: GroupSummary,
        }
        let summary = Summary {
            authors: stats.len(),
            edges: ing.graph.edge_count(),
            edge_homophily_rate: edge_homophily_rate(&ing.graph, &ing.genders)?,
            skewed_share: stats.iter().filter(|s| s.skewed).count() as f64 / stats.len().max(1) as f64,
            female: group(Gender::Female),
            male: group(Gender::Male),
        };
        let summary = json_bytes(&summary)?;
        self.write("homophily_stats.csv", bytes)?;
        self.write("network_summary.json", summary)
    }

    fn stage_homophily(&mut self) -> Result<()> {
        self.cv()?;
        self.markers()?;
        self.homophily()?;
        let ing = self.ingested.as_ref().expect("ingested");
        let cv = self.cv.as_ref().expect("cv");
        let tables = self.markers.as_ref().expect("markers");
        let female: HashSet<String> = tables[0].terms();
        let male: HashSet<String> = tables[1].terms();
        let proportions = marker_proportions(&ing.authors, &female, &male)?;
        let network: HashMap<&str, f64> = self
            .homophily
            .as_ref()
            .expect("homophily")
            .iter()
            .map(|s| (s.author_id.as_str(), s.same_gender_proportion()))
            .collect();

        let level = self.cfg.homophily.level;
        let mut rows = Vec::new();
        let mut binned = Vec::new();
        for measure in ["classifier_confidence", "marker_proportion"] {
            for g in GENDERS {
                let mut x = Vec::new();
                let mut y = Vec::new();
                for (i, a) in ing.authors.iter().enumerate() {
                    if a.gender != g {
                        continue;
                    }
                    let Some(&net) = network.get(a.author_id.as_str()) else { continue };
                    let key = if measure == "classifier_confidence" {
                        Some(cv.p_own[i])
                    } else {
                        proportions[&a.author_id]
                    };
                    if let Some(k) = key {
                        x.push(k);
                        y.push(net);
                    }
                }
                let c = match CorrelationResult::compute(&x, &y, level) {
                    Ok(c) => c,
                    Err(e @ (Error::ZeroVariance | Error::TooFewSamples { .. } | Error::InvalidArgument(_))) => {
                        log::warn!("{measure} ({g}): correlation undefined: {e}");
                        CorrelationResult {
                            r: f64::NAN,
                            n: x.len(),
                            ci_low: f64::NAN,
                            ci_high: f64::NAN,
                            level,
                        }
                    }
                    Err(e) => return Err(e),
                };
                log::info!("{measure} ({g}): r = {:.4} over {} authors", c.r, c.n);
                rows.push((measure.to_string(), g.to_string(), c));
                match bin_and_aggregate(&x, &y, self.cfg.homophily.bins, self.cfg.homophily.bin_mode) {
                    Ok(b) => binned.push((format!("binned_{measure}_{g}.csv"), csv_bytes(|buf| b.write_csv(buf))?)),
                    Err(e) => log::warn!("{measure} ({g}): no binned series: {e}"),
                }
            }
        }
        let bytes = csv_bytes(|buf| write_correlations_csv(buf, &rows))?;
        self.write("correlations.csv", bytes)?;
        for (name, bytes) in binned {
            self.write(&name, bytes)?;
        }
        Ok(())
    }

    fn stage_curve(&mut self) -> Result<()> {
        self.vocab()?;
        let ing = self.ingested.as_ref().expect("ingested");
        let points = token_budget_curve(
            &ing.authors,
            self.vocab.as_ref().expect("vocab"),
            &ing.graph,
            &ing.genders,
            &self.cfg.curve.budgets,
            &self.cfg.classifier,
        )?;
        let bytes = csv_bytes(|buf| write_curve_csv(buf, &points))?;
        self.write("token_budget_curve.csv", bytes)
    }

    /// Writes a synthetic corpus into `sub` (relative to the output
    /// directory) and returns the message and name table paths.
    fn stage_synth(&mut self, sub: &str) -> Result<(PathBuf, PathBuf)> {
        let corpus = generate_synthetic_corpus(&self.cfg.synth)?;
        let dir = self.out.join(sub);
        corpus.write_to_dir(&dir)?;
        for name in ["messages.jsonl", "names.csv", "ground_truth.json"] {
            let p = dir.join(name);
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let key = if sub.is_empty() { name.to_string() } else { format!("{sub}/{name}") };
            self.record.artifacts.insert(key, sha256_hex(&bytes));
        }
        Ok((dir.join("messages.jsonl"), dir.join("names.csv")))
    }

    fn finish(self, command: Command) -> Result<RunRecord> {
        let mut manifest = Manifest::read(&self.out).unwrap_or_else(|e| {
            log::warn!("replacing unreadable manifest: {e}");
            Manifest::default()
        });
        manifest.runs.insert(command.to_string(), self.record.clone());
        let p = self.out.join(Manifest::FILE);
        std::fs::write(&p, json_bytes(&manifest)?).map_err(|e| Error::io(&p, e))?;
        Ok(self.record)
    }
}

/// Most frequently chosen lambda, smallest on ties.
fn modal_lambda(chosen: &[f64]) -> f64 {
    let mut sorted = chosen.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (0usize, f64::NAN);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&l| l == sorted[i]).count();
        if j > best.0 {
            best = (j, sorted[i]);
        }
        i += j;
    }
    best.1
}

/// Runs `command` and writes its artifacts and manifest entry to
/// `output_dir`.
pub fn run_command(command: Command, cfg: &RunConfig, output_dir: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    let mut run = Run::new(cfg.clone(), output_dir.to_path_buf())?;
    match command {
        Command::Ingest => run.stage_ingest()?,
        Command::Classify => run.stage_classify()?,
        Command::Markers => run.stage_markers()?,
        Command::Categorize => run.stage_categorize()?,
        Command::Cluster => run.stage_cluster()?,
        Command::Network => run.stage_network()?,
        Command::Homophily => run.stage_homophily()?,
        Command::Curve => run.stage_curve()?,
        Command::Synth => {
            run.stage_synth("")?;
        }
        Command::All => {
            if run.cfg.paths.messages.is_none() {
                let (messages, names) = run.stage_synth("synth")?;
                run.cfg.paths.messages = Some(messages);
                run.cfg.paths.names = Some(names);
            }
            run.stage_ingest()?;
            run.stage_classify()?;
            run.stage_markers()?;
            run.stage_categorize()?;
            run.stage_cluster()?;
            run.stage_network()?;
            run.stage_homophily()?;
            run.stage_curve()?;
        }
    }
    run.finish(command)
}
