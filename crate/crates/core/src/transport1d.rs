//! Exact one-dimensional Wasserstein-2 machinery on a shared quantile grid.
//!
//! In one dimension the optimal coupling under squared cost is the monotone
//! one, the W2 distance is the L2 distance between quantile functions, and the
//! barycenter's quantile function is the weighted mean of the inputs'
//! quantile functions. Everything here works on `m`-point quantile grids so
//! that distributions of different sizes can be combined exactly.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::empirical::{discretize_quantiles, EmpiricalDistribution, QuantileGrid};
use crate::error::{Error, Result};
use crate::population::{GroupKey, ScoredPopulation};

/// Grid-evaluated W2 distance between two empirical distributions.
pub fn w2_distance(a: &EmpiricalDistribution, b: &EmpiricalDistribution, m: usize) -> Result<f64> {
    discretize_quantiles(a, m)?.w2(&discretize_quantiles(b, m)?)
}

/// Closed-form W2 barycenter on an `m`-point grid: the weighted mean of the
/// inputs' quantile functions at every rank.
pub fn barycenter_1d(dists: &[EmpiricalDistribution], weights: &[f64], m: usize) -> Result<QuantileGrid> {
    if dists.is_empty() {
        return Err(Error::validation("barycenter needs at least one distribution"));
    }
    if dists.len() != weights.len() {
        return Err(Error::validation(format!(
            "{} distributions but {} weights",
            dists.len(),
            weights.len()
        )));
    }
    let weights = normalize_weights(weights)?;
    let grids = dists
        .iter()
        .map(|d| discretize_quantiles(d, m))
        .collect::<Result<Vec<_>>>()?;

    let quantiles = (0..m)
        .map(|k| {
            let q: f64 = grids.iter().zip(&weights).map(|(g, w)| w * g.quantiles()[k]).sum();
            // The weighted mean of bracketing values cannot leave the bracket.
            let lo = grids.iter().map(|g| g.quantiles()[k]).fold(f64::INFINITY, f64::min);
            let hi = grids.iter().map(|g| g.quantiles()[k]).fold(f64::NEG_INFINITY, f64::max);
            q.clamp(lo, hi)
        })
        .collect::<Vec<_>>();
    // Rounding in the weighted sum can break monotonicity by an ulp.
    let quantiles = running_max(quantiles);
    QuantileGrid::from_quantiles(quantiles)
}

/// Monotone transport map `s -> Q_target(F_source(s))`.
///
/// `rank_hint` is the in-sample midrank of `s`; without it `s` must be one of
/// the source samples.
pub fn ot_map_1d(
    source: &EmpiricalDistribution,
    target: &QuantileGrid,
    s: f64,
    rank_hint: Option<f64>,
) -> Result<f64> {
    let p = match rank_hint {
        Some(p) => p,
        None => source.cdf_rank(s)?,
    };
    target.eval(p)
}

/// Exact squared W2 between two weighted empirical measures, via the
/// north-west-corner coupling of their sorted samples.
pub fn monotone_coupling_cost(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let (xs, wa) = (a.values(), a.weights());
    let (ys, wb) = (b.values(), b.weights());
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (wa[0], wb[0]);
    let mut cost = 0.0;
    loop {
        let mass = ra.min(rb);
        cost += mass * (xs[i] - ys[j]).powi(2);
        ra -= mass;
        rb -= mass;
        let a_done = ra <= 1e-15;
        let b_done = rb <= 1e-15;
        if a_done {
            i += 1;
        }
        if b_done {
            j += 1;
        }
        if i == xs.len() || j == ys.len() {
            break;
        }
        if a_done {
            ra = wa[i];
        }
        if b_done {
            rb = wb[j];
        }
    }
    cost
}

/// How group distributions are weighted in the barycenter.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum BarycenterWeights {
    /// `w_g = n_g / n`.
    #[default]
    SizeProportional,
    Uniform,
    /// Must name every group; renormalised to sum to one.
    Explicit(BTreeMap<GroupKey, f64>),
}

impl BarycenterWeights {
    /// Resolved weights for `pop`'s groups, in group order.
    pub fn resolve(&self, pop: &ScoredPopulation) -> Result<Vec<(GroupKey, f64)>> {
        let raw: Vec<(GroupKey, f64)> = match self {
            BarycenterWeights::SizeProportional => pop
                .groups()
                .iter()
                .map(|(k, idx)| (k.clone(), idx.len() as f64))
                .collect(),
            BarycenterWeights::Uniform => pop.groups().keys().map(|k| (k.clone(), 1.0)).collect(),
            BarycenterWeights::Explicit(map) => {
                if let Some(k) = map.keys().find(|k| pop.group_of(k).is_none()) {
                    return Err(Error::validation(format!("barycenter weight for unknown group {k}")));
                }
                pop.groups()
                    .keys()
                    .map(|k| {
                        map.get(k)
                            .map(|w| (k.clone(), *w))
                            .ok_or_else(|| Error::validation(format!("no barycenter weight for group {k}")))
                    })
                    .collect::<Result<_>>()?
            }
        };
        if raw.iter().any(|(_, w)| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::validation("barycenter weights must be positive"));
        }
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        Ok(raw.into_iter().map(|(k, w)| (k, w / total)).collect())
    }
}

/// The barycenter of a population's group score distributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Barycenter1D {
    pub grid: QuantileGrid,
    pub weights_used: Vec<(GroupKey, f64)>,
}

impl Barycenter1D {
    /// Fits the barycenter of `pop`'s raw group distributions.
    pub fn fit(pop: &ScoredPopulation, weights: &BarycenterWeights, m: usize) -> Result<Self> {
        pop.require_scalar("use the multi-dimensional barycenter for vector scores")?;
        let weights_used = weights.resolve(pop)?;
        let dists = pop
            .groups()
            .keys()
            .map(|k| EmpiricalDistribution::from_samples(&pop.group_scalar_scores(k)))
            .collect::<Result<Vec<_>>>()?;
        let w: Vec<f64> = weights_used.iter().map(|(_, w)| *w).collect();
        Ok(Barycenter1D {
            grid: barycenter_1d(&dists, &w, m)?,
            weights_used,
        })
    }
}

/// Checks positivity and that the weights sum to one within `1e-9`, then
/// renormalises.
pub(crate) fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::validation("weights must be positive and finite"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!("weights sum to {total}, expected 1")));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

fn running_max(mut xs: Vec<f64>) -> Vec<f64> {
    for i in 1..xs.len() {
        if xs[i] < xs[i - 1] {
            xs[i] = xs[i - 1];
        }
    }
    xs
}
