//! Scored individuals and their partition into (intersectional) groups.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Separator used when a group key is rendered as a single string.
pub const GROUP_SEPARATOR: char = '/';

/// The tuple of protected-attribute values shared by every member of a group.
///
/// Ordering is lexicographic over the tuple, which fixes the iteration order
/// of groups everywhere downstream.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey(Vec<String>);

impl GroupKey {
    pub fn new<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        GroupKey(values.into_iter().map(Into::into).collect())
    }

    /// Parses the `a/b/c` form produced by `Display`.
    pub fn parse(text: &str) -> Self {
        GroupKey(text.split(GROUP_SEPARATOR).map(str::to_owned).collect())
    }

    pub fn values(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "{GROUP_SEPARATOR}")?;
            }
            f.write_str(v)?;
        }
        Ok(())
    }
}

impl Serialize for GroupKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// One individual: identifier, protected-attribute values, raw score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub id: String,
    pub group_values: Vec<String>,
    /// Raw score; a single component for scalar scores.
    pub score: Vec<f64>,
}

impl ScoreRecord {
    pub fn new(id: impl Into<String>, group_values: Vec<String>, score: Vec<f64>) -> Self {
        ScoreRecord {
            id: id.into(),
            group_values,
            score,
        }
    }

    /// Convenience constructor for a scalar score and a single attribute.
    pub fn scalar(id: impl Into<String>, group: impl Into<String>, score: f64) -> Self {
        ScoreRecord::new(id, vec![group.into()], vec![score])
    }

    pub fn group_key(&self) -> GroupKey {
        GroupKey(self.group_values.clone())
    }
}

/// An immutable, validated collection of records with its group partition.
#[derive(Debug, Clone)]
pub struct ScoredPopulation {
    records: Vec<ScoreRecord>,
    dimension: usize,
    attribute_count: usize,
    groups: BTreeMap<GroupKey, Vec<usize>>,
}

impl ScoredPopulation {
    pub fn records(&self) -> &[ScoreRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn attribute_count(&self) -> usize {
        self.attribute_count
    }

    /// Groups in lexicographic key order, each with its record indices in
    /// input order.
    pub fn groups(&self) -> &BTreeMap<GroupKey, Vec<usize>> {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_of(&self, key: &GroupKey) -> Option<&[usize]> {
        self.groups.get(key).map(Vec::as_slice)
    }

    /// Scalar scores of one group's members, in input order. Only meaningful
    /// for one-dimensional populations.
    pub fn group_scalar_scores(&self, key: &GroupKey) -> Vec<f64> {
        self.groups
            .get(key)
            .map(|idx| idx.iter().map(|&i| self.records[i].score[0]).collect())
            .unwrap_or_default()
    }

    /// All scalar scores in record order.
    pub fn scalar_scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score[0]).collect()
    }

    pub(crate) fn require_scalar(&self, hint: &'static str) -> Result<()> {
        if self.dimension != 1 {
            return Err(Error::Dimension {
                found: self.dimension,
                hint,
            });
        }
        Ok(())
    }
}

/// Validates `records` and computes the group partition.
pub fn build_population(records: Vec<ScoreRecord>, attribute_count: usize) -> Result<ScoredPopulation> {
    if records.is_empty() {
        return Err(Error::validation("population has no records"));
    }
    if attribute_count == 0 {
        return Err(Error::validation("attribute count must be positive"));
    }
    let dimension = records[0].score.len();
    if dimension == 0 {
        return Err(Error::validation(format!(
            "record '{}' has an empty score",
            records[0].id
        )));
    }

    let mut seen = HashSet::with_capacity(records.len());
    let mut groups: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        if !seen.insert(rec.id.as_str()) {
            return Err(Error::validation(format!("duplicate id '{}'", rec.id)));
        }
        if rec.group_values.len() != attribute_count {
            return Err(Error::validation(format!(
                "record '{}' has {} group values, expected {attribute_count}",
                rec.id,
                rec.group_values.len()
            )));
        }
        if rec.score.len() != dimension {
            return Err(Error::validation(format!(
                "record '{}' has score dimension {}, expected {dimension}",
                rec.id,
                rec.score.len()
            )));
        }
        if let Some(bad) = rec.score.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "record '{}' has non-finite score component {bad}",
                rec.id
            )));
        }
        groups.entry(rec.group_key()).or_default().push(i);
    }

    Ok(ScoredPopulation {
        records,
        dimension,
        attribute_count,
        groups,
    })
}

/// A group too small for reliable distribution estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Warning {
    pub group: GroupKey,
    pub size: usize,
    pub min_group_size: usize,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "group {} has {} members, fewer than the recommended {}",
            self.group, self.size, self.min_group_size
        )
    }
}

/// One warning per group with fewer than `min_group_size` members.
pub fn validate_population(pop: &ScoredPopulation, min_group_size: usize) -> Vec<Warning> {
    pop.groups
        .iter()
        .filter(|(_, idx)| idx.len() < min_group_size)
        .map(|(key, idx)| Warning {
            group: key.clone(),
            size: idx.len(),
            min_group_size,
        })
        .collect()
}
