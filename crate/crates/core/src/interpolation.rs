//! Per-group displacement interpolation toward the barycenter.
//!
//! An individual in group `g` with raw score `s` and in-group midrank `p`
//! receives `(1 - theta_g) * s + theta_g * Q_B(p)`, where `Q_B` is the
//! barycenter's quantile function. Midranks are computed inside the group, so
//! the in-group order of raw scores is preserved exactly for every `theta`.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::empirical::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::population::{GroupKey, ScoredPopulation};
use crate::transport1d::Barycenter1D;
use crate::transportnd::DiscreteMeasure;

/// Default interpolation degree plus per-group overrides, all in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaPolicy {
    default: f64,
    #[serde(serialize_with = "serialize_overrides")]
    overrides: BTreeMap<GroupKey, f64>,
}

impl ThetaPolicy {
    pub fn new(default: f64) -> Result<Self> {
        check_theta(default)?;
        Ok(ThetaPolicy {
            default,
            overrides: BTreeMap::new(),
        })
    }

    pub fn with_override(mut self, group: GroupKey, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        self.overrides.insert(group, theta);
        Ok(self)
    }

    pub fn default_theta(&self) -> f64 {
        self.default
    }

    pub fn overrides(&self) -> &BTreeMap<GroupKey, f64> {
        &self.overrides
    }

    /// The override for `group` if there is one, the default otherwise.
    pub fn resolve(&self, group: &GroupKey) -> f64 {
        self.overrides.get(group).copied().unwrap_or(self.default)
    }

    /// Fails if an override names a group that `pop` does not have.
    pub fn check_groups(&self, pop: &ScoredPopulation) -> Result<()> {
        match self.overrides.keys().find(|k| pop.group_of(k).is_none()) {
            Some(k) => Err(Error::validation(format!("theta override for unknown group {k}"))),
            None => Ok(()),
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::validation(format!("theta {theta} outside [0, 1]")));
    }
    Ok(())
}

fn serialize_overrides<S: Serializer>(
    map: &BTreeMap<GroupKey, f64>,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    serializer.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
}

/// What the groups were transported toward.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportTarget {
    Grid(Barycenter1D),
    Measure(DiscreteMeasure),
}

/// Transformed scores, index-aligned with the population's records.
#[derive(Debug, Clone, PartialEq)]
pub struct FairScores {
    values: Vec<f64>,
    dimension: usize,
    pub theta_used: ThetaPolicy,
    pub target: TransportTarget,
}

impl FairScores {
    pub(crate) fn new(values: Vec<f64>, dimension: usize, theta_used: ThetaPolicy, target: TransportTarget) -> Self {
        debug_assert_eq!(values.len() % dimension, 0);
        FairScores {
            values,
            dimension,
            theta_used,
            target,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Score of record `i`.
    pub fn get(&self, i: usize) -> &[f64] {
        &self.values[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Row-major flat view; for scalar scores this is one value per record.
    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dimension)
    }
}

/// `(1 - theta) * raw + theta * target`, exact at both endpoints.
#[inline]
pub fn blend(raw: f64, target: f64, theta: f64) -> f64 {
    if theta == 0.0 {
        raw
    } else if theta == 1.0 {
        target
    } else {
        (1.0 - theta) * raw + theta * target
    }
}

/// Moves every group of a scalar population toward `bary` by its `theta`.
pub fn interpolate_scores(pop: &ScoredPopulation, bary: &Barycenter1D, policy: &ThetaPolicy) -> Result<FairScores> {
    pop.require_scalar("use interpolate_scores_nd for vector scores")?;
    policy.check_groups(pop)?;

    let mut out = vec![0.0; pop.len()];
    for (key, members) in pop.groups() {
        let theta = policy.resolve(key);
        let raw = pop.group_scalar_scores(key);
        if theta == 0.0 {
            for (&i, &s) in members.iter().zip(&raw) {
                out[i] = s;
            }
            continue;
        }
        let dist = EmpiricalDistribution::from_samples(&raw)?;
        for (&i, &s) in members.iter().zip(&raw) {
            let target = bary.grid.eval(dist.cdf_rank(s)?)?;
            out[i] = blend(s, target, theta);
        }
    }
    Ok(FairScores::new(out, 1, policy.clone(), TransportTarget::Grid(bary.clone())))
}
