//! Naive reference solvers for cross-checking the transport code.
//!
//! Every function here is deliberately simple and shares no code path with
//! the solver it checks. Size guards refuse inputs where the naive method
//! would be too slow.

use itertools::Itertools;

use crate::empirical::{discretize_quantiles, EmpiricalDistribution, QuantileGrid};
use crate::error::{Error, Result};
use crate::interpolation::FairScores;
use crate::population::ScoredPopulation;
use crate::transportnd::{squared_distance, DiscreteMeasure};

pub const MAX_PERMUTATION_SIZE: usize = 8;
pub const MAX_LP_SIZE: usize = 20;
pub const MAX_ORACLE_GRID: usize = 50;

/// Minimum over all `n!` pairings of the mean squared distance.
pub fn ot_cost_bruteforce(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::validation(format!("{n} source points but {} target points", y.len())));
    }
    if n > MAX_PERMUTATION_SIZE {
        return Err(Error::Refused(format!(
            "permutation oracle limited to {MAX_PERMUTATION_SIZE} points, got {n}"
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let best = (0..n)
        .permutations(n)
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| squared_distance(&x[i], &y[j]))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best / n as f64)
}

/// Exact unregularised transport between two small discrete measures.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTransport {
    pub cost: f64,
    /// `plan[i][j]` is the mass moved from source `i` to target `j`.
    pub plan: Vec<Vec<f64>>,
}

/// Residual amounts below this are treated as exhausted.
const FLOW_EPS: f64 = 1e-15;

/// Exact optimal transport under squared Euclidean cost, solved as a
/// min-cost flow with successive shortest paths (Bellman-Ford on the
/// residual graph).
pub fn lp_transport_exact(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ExactTransport> {
    let (n, m) = (mu.len(), nu.len());
    if n > MAX_LP_SIZE || m > MAX_LP_SIZE {
        return Err(Error::Refused(format!(
            "exact transport oracle limited to {MAX_LP_SIZE} points per side, got {n} x {m}"
        )));
    }
    if mu.dimension() != nu.dimension() {
        return Err(Error::validation("dimension mismatch"));
    }
    let cost: Vec<Vec<f64>> = mu
        .support()
        .iter()
        .map(|x| nu.support().iter().map(|y| squared_distance(x, y)).collect())
        .collect();

    let mut flow = vec![vec![0.0; m]; n];
    let mut supply = mu.masses().to_vec();
    let mut demand = nu.masses().to_vec();

    // Nodes 0..n are sources, n..n+m are targets.
    let v = n + m;
    for _ in 0..10 * v * v {
        if supply.iter().all(|s| *s <= FLOW_EPS) || demand.iter().all(|d| *d <= FLOW_EPS) {
            break;
        }
        let mut dist = vec![f64::INFINITY; v];
        let mut pred = vec![usize::MAX; v];
        for i in 0..n {
            if supply[i] > FLOW_EPS {
                dist[i] = 0.0;
            }
        }
        for _ in 0..v {
            let mut changed = false;
            for i in 0..n {
                for j in 0..m {
                    let (a, b) = (i, n + j);
                    if dist[a].is_finite() && dist[a] + cost[i][j] < dist[b] - 1e-12 {
                        dist[b] = dist[a] + cost[i][j];
                        pred[b] = a;
                        changed = true;
                    }
                    if flow[i][j] > FLOW_EPS && dist[b].is_finite() && dist[b] - cost[i][j] < dist[a] - 1e-12 {
                        dist[a] = dist[b] - cost[i][j];
                        pred[a] = b;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let Some(sink) = (0..m)
            .filter(|&j| demand[j] > FLOW_EPS && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]))
        else {
            break;
        };

        // Walk back to a source with remaining supply.
        let mut path = vec![n + sink];
        let mut node = n + sink;
        while pred[node] != usize::MAX {
            node = pred[node];
            path.push(node);
            if path.len() > v + 1 {
                return Err(Error::validation("exact transport oracle found a cycle"));
            }
        }
        path.reverse();
        let start = path[0];
        let mut amount = supply[start].min(demand[sink]);
        for w in path.windows(2) {
            if w[0] >= n {
                // Backward edge target -> source cancels existing flow.
                amount = amount.min(flow[w[1]][w[0] - n]);
            }
        }
        for w in path.windows(2) {
            if w[0] < n {
                flow[w[0]][w[1] - n] += amount;
            } else {
                flow[w[1]][w[0] - n] -= amount;
            }
        }
        supply[start] -= amount;
        demand[sink] -= amount;
    }

    let total: f64 = flow
        .iter()
        .zip(&cost)
        .flat_map(|(fr, cr)| fr.iter().zip(cr).map(|(f, c)| f * c))
        .sum();
    Ok(ExactTransport { cost: total, plan: flow })
}

/// Barycenter grid found by scalar grid search at every rank, independent of
/// the closed form.
pub fn barycenter_coordinate_oracle(
    dists: &[EmpiricalDistribution],
    weights: &[f64],
    m: usize,
    resolution: f64,
) -> Result<QuantileGrid> {
    if m > MAX_ORACLE_GRID {
        return Err(Error::Refused(format!(
            "coordinate oracle limited to grids of {MAX_ORACLE_GRID}, got {m}"
        )));
    }
    if dists.is_empty() || dists.len() != weights.len() {
        return Err(Error::validation("need one weight per distribution"));
    }
    if !(resolution > 0.0) {
        return Err(Error::validation("resolution must be positive"));
    }
    let grids = dists
        .iter()
        .map(|d| discretize_quantiles(d, m))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let values: Vec<f64> = grids.iter().map(|g| g.quantiles()[k]).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let steps = ((hi - lo) / resolution).ceil() as usize;
        let objective = |q: f64| -> f64 { values.iter().zip(weights).map(|(x, w)| w * (q - x) * (q - x)).sum() };
        let mut best = (lo, objective(lo));
        for s in 1..=steps {
            let q = (lo + s as f64 * resolution).min(hi);
            let val = objective(q);
            if val < best.1 {
                best = (q, val);
            }
        }
        out.push(best.0);
    }
    QuantileGrid::from_quantiles(out)
}

/// The cross-group strict-inversion rate by enumerating every pair.
pub fn inversion_rate_bruteforce(pop: &ScoredPopulation, fair: &FairScores) -> Result<f64> {
    let recs = pop.records();
    let group_of: Vec<usize> = {
        let mut g = vec![0; recs.len()];
        for (gi, members) in pop.groups().values().enumerate() {
            for &i in members {
                g[i] = gi;
            }
        }
        g
    };
    let (mut pairs, mut inversions) = (0u64, 0u64);
    for i in 0..recs.len() {
        for j in 0..recs.len() {
            if group_of[i] == group_of[j] {
                continue;
            }
            let (ri, rj) = (recs[i].score[0], recs[j].score[0]);
            if ri < rj {
                pairs += 1;
                if fair.get(i)[0] > fair.get(j)[0] {
                    inversions += 1;
                }
            }
        }
    }
    Ok(if pairs == 0 { 0.0 } else { inversions as f64 / pairs as f64 })
}
