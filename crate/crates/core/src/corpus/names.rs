use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Gender;
use crate::{Error, Result};

/// Per-name birth counts by sex, keyed case-insensitively.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameGenderTable {
    counts: HashMap<String, (u64, u64)>,
}

impl NameGenderTable {
    /// Aggregates `(name, sex, count)` rows; duplicate `(name, sex)` rows are
    /// summed. Row numbers in errors are 1-based.
    pub fn from_rows<S, I>(rows: I) -> Result<Self>
    where
        S: AsRef<str>,
        I: IntoIterator<Item = (S, S, S)>,
    {
        let mut counts: HashMap<String, (u64, u64)> = HashMap::new();
        for (idx, (name, sex, count)) in rows.into_iter().enumerate() {
            let row = idx + 1;
            let name = name.as_ref().trim();
            if name.is_empty() {
                return Err(Error::MalformedRow {
                    row,
                    message: "empty name".into(),
                });
            }
            let count: u64 = count.as_ref().trim().parse().map_err(|_| Error::MalformedRow {
                row,
                message: format!("count `{}` is not a nonnegative integer", count.as_ref()),
            })?;
            let entry = counts.entry(name.to_lowercase()).or_default();
            match sex.as_ref().trim() {
                "F" | "f" => entry.0 += count,
                "M" | "m" => entry.1 += count,
                other => {
                    return Err(Error::MalformedRow {
                        row,
                        message: format!("sex must be F or M, got `{other}`"),
                    })
                }
            }
        }
        Ok(NameGenderTable { counts })
    }

    /// Reads a `name,sex,count` CSV; a header row with those column names
    /// is optional.
    pub fn load(path: &Path) -> Result<Self> {
        let lines = super::read_utf8_lines(path)?;
        let mut rows = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if i == 0 && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("name")) {
                continue;
            }
            if fields.len() != 3 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            rows.push((i + 1, fields[0], fields[1], fields[2]));
        }
        let mut table = NameGenderTable::default();
        for (line, name, sex, count) in rows {
            let single = NameGenderTable::from_rows([(name, sex, count)]).map_err(|e| match e {
                Error::MalformedRow { message, .. } => Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message,
                },
                other => other,
            })?;
            table.merge(single);
        }
        Ok(table)
    }

    fn merge(&mut self, other: NameGenderTable) {
        for (name, (f, m)) in other.counts {
            let e = self.counts.entry(name).or_default();
            e.0 += f;
            e.1 += m;
        }
    }

    /// `(female_count, male_count)` for a name, case-insensitive.
    pub fn get(&self, name: &str) -> Option<(u64, u64)> {
        self.counts.get(&name.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sorted `(name, female, male)` rows.
    pub fn entries(&self) -> Vec<(&str, u64, u64)> {
        let mut v: Vec<_> = self
            .counts
            .iter()
            .map(|(k, &(f, m))| (k.as_str(), f, m))
            .collect();
        v.sort_unstable();
        v
    }
}

/// Majority-count gender of a first name. Names whose total count does not
/// exceed `min_total`, and exact ties, are `Unknown`.
pub fn assign_gender(first_name: &str, table: &NameGenderTable, min_total: u64) -> Gender {
    let Some((f, m)) = table.get(first_name) else {
        return Gender::Unknown;
    };
    if f + m <= min_total || f == m {
        return Gender::Unknown;
    }
    if f > m {
        Gender::Female
    } else {
        Gender::Male
    }
}
