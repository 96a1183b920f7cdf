//! Group-marker terms via the Beta-Binomial tail test.
//!
//! For a term used by `k_i` of `N` authors, the count of group-`j` users is
//! modeled as `BetaBinomial(N_j, k_i, N - k_i)`; small upper-tail
//! probabilities flag terms that group `j` over-uses.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Author, Gender};
use crate::features::Vocabulary;
use crate::stats::beta_binomial_tail;
use crate::{Error, Real, Result};

/// Author-usage counts per term, overall and per group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCounts {
    pub terms: Vec<String>,
    /// Authors using each term.
    pub k_total: Vec<u64>,
    pub n_total: u64,
    pub groups: Vec<String>,
    pub n_group: Vec<u64>,
    /// `k_group[g][i]`: authors in group `g` using term `i`.
    pub k_group: Vec<Vec<u64>>,
}

impl TermCounts {
    /// Counts over the vocabulary terms, grouping authors by gender
    /// (`female`, `male`). Authors of unknown gender are rejected.
    pub fn by_gender(authors: &[Author], vocab: &Vocabulary) -> Result<Self> {
        let groups = [Gender::Female, Gender::Male];
        let mut assignment = Vec::with_capacity(authors.len());
        for a in authors {
            let g = groups
                .iter()
                .position(|&g| g == a.gender)
                .ok_or_else(|| Error::invalid(format!("author {} has unknown gender", a.author_id)))?;
            assignment.push(g);
        }
        let names: Vec<String> = groups.iter().map(|g| g.to_string()).collect();
        Self::from_groups(authors, &assignment, &names, vocab)
    }

    /// Counts with an arbitrary author partition; `assignment[n]` indexes
    /// into `group_names`.
    pub fn from_groups(
        authors: &[Author],
        assignment: &[usize],
        group_names: &[String],
        vocab: &Vocabulary,
    ) -> Result<Self> {
        if assignment.len() != authors.len() {
            return Err(Error::invalid("group assignment length differs from author count"));
        }
        let v = vocab.len();
        let g = group_names.len();
        let mut k_total = vec![0u64; v];
        let mut k_group = vec![vec![0u64; v]; g];
        let mut n_group = vec![0u64; g];
        for (a, &grp) in authors.iter().zip(assignment) {
            if grp >= g {
                return Err(Error::invalid(format!("group index {grp} out of range")));
            }
            n_group[grp] += 1;
            let used: HashSet<usize> = a.tokens.iter().filter_map(|t| vocab.get(t)).collect();
            for i in used {
                k_total[i] += 1;
                k_group[grp][i] += 1;
            }
        }
        Ok(TermCounts {
            terms: vocab.terms().to_vec(),
            k_total,
            n_total: authors.len() as u64,
            groups: group_names.to_vec(),
            n_group,
            k_group,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.terms.len();
        if self.k_total.len() != v
            || self.k_group.len() != self.groups.len()
            || self.n_group.len() != self.groups.len()
            || self.k_group.iter().any(|row| row.len() != v)
        {
            return Err(Error::invalid("term count tables have inconsistent shapes"));
        }
        for (j, row) in self.k_group.iter().enumerate() {
            for (i, &k) in row.iter().enumerate() {
                if k > self.k_total[i] || k > self.n_group[j] {
                    return Err(Error::invalid(format!(
                        "term `{}`: group count {k} exceeds its bounds",
                        self.terms[i]
                    )));
                }
            }
        }
        if self.k_total.iter().any(|&k| k > self.n_total) {
            return Err(Error::invalid("term used by more authors than exist"));
        }
        Ok(())
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerConfig {
    pub alpha: f64,
    pub top_k: usize,
}

impl Default for MarkerConfig {
    fn default() -> Self {
        MarkerConfig { alpha: 0.05, top_k: 500 }
    }
}

impl MarkerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config {
                field: "markers.alpha".into(),
                message: "must lie in (0, 1)".into(),
            });
        }
        Ok(())
    }
}

pub fn bonferroni_threshold(alpha: f64, vocab_size: usize, groups: usize) -> f64 {
    alpha / (vocab_size as f64 * groups as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MarkerRow<T: Real> {
    pub term: String,
    pub group: String,
    pub p_value: T,
    pub k_group: u64,
    pub n_group: u64,
    pub k_total: u64,
    pub n_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MarkerTable<T: Real> {
    pub group: String,
    pub threshold: T,
    pub top_k: usize,
    /// Sorted by p-value ascending, then term.
    pub rows: Vec<MarkerRow<T>>,
}

impl<T: Real> MarkerTable<T> {
    pub fn terms(&self) -> HashSet<String> {
        self.rows.iter().map(|r| r.term.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Upper-tail p-value for every term, `None` for terms used by no author or
/// by every author.
pub fn term_p_values<T: Real>(counts: &TermCounts, group: usize) -> Result<Vec<Option<T>>> {
    counts.validate()?;
    if group >= counts.groups.len() {
        return Err(Error::invalid(format!("group index {group} out of range")));
    }
    let n = counts.n_total;
    let nj = counts.n_group[group];
    (0..counts.terms.len())
        .into_par_iter()
        .map(|i| {
            let ki = counts.k_total[i];
            if ki == 0 || ki == n {
                return Ok(None);
            }
            let kij = counts.k_group[group][i];
            beta_binomial_tail(kij, nj, T::from_u64(ki).unwrap(), T::from_u64(n - ki).unwrap()).map(Some)
        })
        .collect()
}

/// Terms whose p-value falls below `alpha / (V * G)`, best `top_k` first.
pub fn find_gender_markers<T: Real>(counts: &TermCounts, group: usize, cfg: &MarkerConfig) -> Result<MarkerTable<T>> {
    cfg.validate()?;
    let ps = term_p_values::<T>(counts, group)?;
    let threshold = T::c(bonferroni_threshold(cfg.alpha, counts.terms.len(), counts.groups.len()));
    let mut rows: Vec<MarkerRow<T>> = ps
        .into_iter()
        .enumerate()
        .filter_map(|(i, p)| p.filter(|&p| p < threshold).map(|p| (i, p)))
        .map(|(i, p)| MarkerRow {
            term: counts.terms[i].clone(),
            group: counts.groups[group].clone(),
            p_value: p,
            k_group: counts.k_group[group][i],
            n_group: counts.n_group[group],
            k_total: counts.k_total[i],
            n_total: counts.n_total,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.p_value
            .partial_cmp(&b.p_value)
            .expect("finite p-values")
            .then_with(|| a.term.cmp(&b.term))
    });
    rows.truncate(cfg.top_k);
    Ok(MarkerTable {
        group: counts.groups[group].clone(),
        threshold,
        top_k: cfg.top_k,
        rows,
    })
}

/// CSV `term,group,p_value,k_group,n_group,k_total,n_total` for one or more
/// tables.
pub fn write_markers_csv<T: Real, W: Write>(out: W, tables: &[&MarkerTable<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["term", "group", "p_value", "k_group", "n_group", "k_total", "n_total"])?;
    for t in tables {
        for r in &t.rows {
            w.write_record([
                r.term.clone(),
                r.group.clone(),
                format!("{:e}", r.p_value),
                r.k_group.to_string(),
                r.n_group.to_string(),
                r.k_total.to_string(),
                r.n_total.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Share of an author's marker tokens (counted with multiplicity) that are
/// markers of the author's own gender.
pub fn same_gender_marker_proportion(
    author: &Author,
    female_markers: &HashSet<String>,
    male_markers: &HashSet<String>,
) -> Result<f64> {
    if let Some(t) = female_markers.intersection(male_markers).next() {
        return Err(Error::invalid(format!("term `{t}` is a marker for both groups")));
    }
    let own = match author.gender {
        Gender::Female => female_markers,
        Gender::Male => male_markers,
        Gender::Unknown => {
            return Err(Error::invalid(format!("author {} has unknown gender", author.author_id)))
        }
    };
    let mut same = 0usize;
    let mut total = 0usize;
    for t in &author.tokens {
        if own.contains(t) {
            same += 1;
            total += 1;
        } else if female_markers.contains(t) || male_markers.contains(t) {
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::NoMarkers(author.author_id.clone()));
    }
    Ok(same as f64 / total as f64)
}

/// Proportion for each author; authors without marker tokens map to `None`.
pub fn marker_proportions(
    authors: &[Author],
    female_markers: &HashSet<String>,
    male_markers: &HashSet<String>,
) -> Result<HashMap<String, Option<f64>>> {
    let mut out = HashMap::with_capacity(authors.len());
    for a in authors {
        let p = match same_gender_marker_proportion(a, female_markers, male_markers) {
            Ok(p) => Some(p),
            Err(Error::NoMarkers(_)) => None,
            Err(e) => return Err(e),
        };
        out.insert(a.author_id.clone(), p);
    }
    Ok(out)
}
