//! Vector-valued scores via entropic optimal transport.
//!
//! All solvers iterate on log-domain potentials, so kernels like
//! `exp(-C / epsilon)` are never formed explicitly and `epsilon` can go down
//! to `1e-3` on unit-scaled data without underflow. Reductions run in a fixed
//! order, so results are bitwise reproducible.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::interpolation::{blend, FairScores, ThetaPolicy, TransportTarget};
use crate::population::ScoredPopulation;
use crate::transport1d::{normalize_weights, BarycenterWeights};

/// Finite support points with positive masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    support: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

impl DiscreteMeasure {
    /// Masses must be positive and sum to one within `1e-9`; they are
    /// renormalised.
    pub fn new(support: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::validation("measure support is empty"));
        }
        if support.len() != masses.len() {
            return Err(Error::validation(format!(
                "{} support points but {} masses",
                support.len(),
                masses.len()
            )));
        }
        let d = support[0].len();
        if d == 0 || support.iter().any(|p| p.len() != d) {
            return Err(Error::validation("support points must share a positive dimension"));
        }
        if support.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::validation("support points must be finite"));
        }
        let masses = normalize_weights(&masses)?;
        Ok(DiscreteMeasure { support, masses })
    }

    /// Equal mass on every point.
    pub fn uniform(support: Vec<Vec<f64>>) -> Result<Self> {
        let n = support.len();
        DiscreteMeasure::new(support, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.support[0].len()
    }
}

/// Entropic solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    pub epsilon: f64,
    /// Bound on the L1 marginal error.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        SinkhornParams {
            epsilon: 0.01,
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

impl SinkhornParams {
    fn check(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::validation(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::validation(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::validation("max_iter must be positive"));
        }
        Ok(())
    }
}

/// A coupling between a source and a target measure.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// Row-major, `rows x cols`.
    matrix: Vec<f64>,
    rows: usize,
    cols: usize,
    pub epsilon: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub tol: f64,
    /// L1 distance between the plan's row sums and the source masses.
    pub row_error: f64,
    /// L1 distance between the plan's column sums and the target masses.
    pub col_error: f64,
    /// `sum_ij P_ij * |x_i - y_j|^2`.
    pub cost: f64,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    /// Maps source point `i` to the plan-weighted mean of the target points.
    pub fn barycentric_projection(&self, i: usize, target: &[Vec<f64>]) -> Vec<f64> {
        let d = target[0].len();
        let mut acc = vec![0.0; d];
        let row = self.row(i);
        let total: f64 = row.iter().sum();
        for (w, y) in row.iter().zip(target) {
            for (a, yk) in acc.iter_mut().zip(y) {
                *a += w * yk;
            }
        }
        acc.iter_mut().for_each(|a| *a /= total);
        acc
    }

    /// Entropy `-sum P log P` of the plan.
    pub fn entropy(&self) -> f64 {
        -self
            .matrix
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn cost_matrix(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Vec<f64> {
    let mut c = Vec::with_capacity(xs.len() * ys.len());
    for x in xs {
        for y in ys {
            c.push(squared_distance(x, y));
        }
    }
    c
}

fn log_sum_exp(mut terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.by_ref().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

fn check_same_dimension(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<()> {
    if a.dimension() != b.dimension() {
        return Err(Error::validation(format!(
            "dimension mismatch: {} vs {}",
            a.dimension(),
            b.dimension()
        )));
    }
    Ok(())
}

/// Entropic-regularised transport plan between `mu` and `nu` under squared
/// Euclidean cost.
///
/// Non-convergence is not an error: the plan is returned with
/// `converged = false` and its marginal errors filled in.
pub fn sinkhorn_plan(mu: &DiscreteMeasure, nu: &DiscreteMeasure, params: &SinkhornParams) -> Result<TransportPlan> {
    params.check()?;
    check_same_dimension(mu, nu)?;
    let (n, m) = (mu.len(), nu.len());
    let eps = params.epsilon;
    let cost = cost_matrix(&mu.support, &nu.support);
    let log_a: Vec<f64> = mu.masses.iter().map(|a| a.ln()).collect();
    let log_b: Vec<f64> = nu.masses.iter().map(|b| b.ln()).collect();

    // Plan is P_ij = exp((f_i + g_j - C_ij) / eps). Small eps makes plain
    // iterations contract very slowly, so eps is annealed down from the
    // cost scale, each stage warm-started from the previous potentials.
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let max_cost = cost.iter().copied().fold(0.0, f64::max);
    let mut iterations = 0;
    for stage_eps in epsilon_schedule(eps, max_cost) {
        let last = stage_eps == eps;
        let tol = if last { params.tol } else { params.tol.max(STAGE_TOL) };
        let budget = params.max_iter - iterations;
        iterations += sinkhorn_stage(&cost, &log_a, &mu.masses, &log_b, &mut f, &mut g, stage_eps, tol, budget);
        if iterations >= params.max_iter {
            break;
        }
    }

    let mut matrix = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            matrix.push(((f[i] + g[j] - cost[i * m + j]) / eps).exp());
        }
    }
    let mut plan = TransportPlan {
        matrix,
        rows: n,
        cols: m,
        epsilon: eps,
        iterations_run: iterations,
        converged: false,
        tol: params.tol,
        row_error: 0.0,
        col_error: 0.0,
        cost: 0.0,
    };
    plan.row_error = l1(&plan.row_sums(), &mu.masses);
    plan.col_error = l1(&plan.col_sums(), &nu.masses);
    plan.converged = plan.row_error <= params.tol && plan.col_error <= params.tol;
    plan.cost = plan.matrix.iter().zip(&cost).map(|(p, c)| p * c).sum();
    Ok(plan)
}

/// Marginal tolerance for the intermediate stages of the eps schedule.
const STAGE_TOL: f64 = 1e-3;

/// Geometric schedule from the cost scale down to `eps`, halving each step.
fn epsilon_schedule(eps: f64, max_cost: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut e = max_cost;
    while e > eps {
        out.push(e);
        e *= 0.5;
    }
    out.push(eps);
    out
}

/// Sinkhorn iterations at one `eps` until the row error is within `tol`
/// (checked after at least one full update) or `budget` runs out. Returns
/// the number of iterations run.
#[allow(clippy::too_many_arguments)]
fn sinkhorn_stage(
    cost: &[f64],
    log_a: &[f64],
    a: &[f64],
    log_b: &[f64],
    f: &mut Vec<f64>,
    g: &mut [f64],
    eps: f64,
    tol: f64,
    budget: usize,
) -> usize {
    let (n, m) = (log_a.len(), log_b.len());
    let mut next_f = vec![0.0; n];
    let mut iterations = 0;
    while iterations < budget {
        // The row sums of the current plan fall out of the f-update for free.
        let mut row_error = 0.0;
        for i in 0..n {
            let c = &cost[i * m..(i + 1) * m];
            let lse = log_sum_exp(g.iter().zip(c).map(|(gj, cij)| (gj - cij) / eps));
            row_error += ((f[i] / eps + lse).exp() - a[i]).abs();
            next_f[i] = eps * (log_a[i] - lse);
        }
        if iterations > 0 && row_error <= tol {
            break;
        }
        std::mem::swap(f, &mut next_f);
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[i * m + j]) / eps));
            g[j] = eps * (log_b[j] - lse);
        }
        iterations += 1;
    }
    iterations
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Output of [`barycenter_fixed_support`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedSupportBarycenter {
    pub measure: DiscreteMeasure,
    pub iterations: usize,
    pub converged: bool,
    /// Weighted L1 gap between each coupling's target marginal and the
    /// barycenter masses at the last iteration.
    pub marginal_error: f64,
}

/// Masses below this are dropped from a barycenter's support.
const MASS_FLOOR: f64 = 1e-14;

/// Entropic W2 barycenter on a fixed support, by iterative Bregman
/// projections in the log domain.
pub fn barycenter_fixed_support(
    measures: &[DiscreteMeasure],
    weights: &[f64],
    support: &[Vec<f64>],
    params: &SinkhornParams,
) -> Result<FixedSupportBarycenter> {
    params.check()?;
    if support.is_empty() {
        return Err(Error::validation("barycenter support is empty"));
    }
    if measures.is_empty() || measures.len() != weights.len() {
        return Err(Error::validation(format!(
            "{} measures but {} weights",
            measures.len(),
            weights.len()
        )));
    }
    let weights = normalize_weights(weights)?;
    let d = support[0].len();
    if support.iter().any(|p| p.len() != d) || measures.iter().any(|mu| mu.dimension() != d) {
        return Err(Error::validation("measures and support must share one dimension"));
    }

    let eps = params.epsilon;
    let big_n = support.len();
    let costs: Vec<Vec<f64>> = measures.iter().map(|mu| cost_matrix(&mu.support, support)).collect();
    let log_a: Vec<Vec<f64>> = measures
        .iter()
        .map(|mu| mu.masses.iter().map(|a| a.ln()).collect())
        .collect();
    // Dimensionless potentials: P_k = diag(e^u_k) exp(-C_k / eps) diag(e^v_k).
    let mut u: Vec<Vec<f64>> = measures.iter().map(|mu| vec![0.0; mu.len()]).collect();
    let mut v: Vec<Vec<f64>> = vec![vec![0.0; big_n]; measures.len()];
    let mut log_cols: Vec<Vec<f64>> = vec![vec![0.0; big_n]; measures.len()];
    let mut log_q = vec![0.0; big_n];

    let mut iterations = 0;
    let mut converged = false;
    let mut marginal_error = f64::INFINITY;
    while iterations < params.max_iter {
        iterations += 1;
        for (k, mu) in measures.iter().enumerate() {
            let c = &costs[k];
            for i in 0..mu.len() {
                let row = &c[i * big_n..(i + 1) * big_n];
                u[k][i] = log_a[k][i] - log_sum_exp(row.iter().zip(&v[k]).map(|(cij, vj)| vj - cij / eps));
            }
            for j in 0..big_n {
                let lse = log_sum_exp((0..mu.len()).map(|i| u[k][i] - c[i * big_n + j] / eps));
                log_cols[k][j] = v[k][j] + lse;
            }
        }
        for j in 0..big_n {
            log_q[j] = log_cols.iter().zip(&weights).map(|(lc, w)| w * lc[j]).sum();
        }
        marginal_error = log_cols
            .iter()
            .zip(&weights)
            .map(|(lc, w)| w * lc.iter().zip(&log_q).map(|(a, b)| (a.exp() - b.exp()).abs()).sum::<f64>())
            .sum();
        if marginal_error <= params.tol {
            converged = true;
            break;
        }
        for k in 0..measures.len() {
            for j in 0..big_n {
                v[k][j] += log_q[j] - log_cols[k][j];
            }
        }
    }

    let masses: Vec<f64> = log_q.iter().map(|l| l.exp()).collect();
    let total: f64 = masses.iter().sum();
    let (kept_support, kept_masses): (Vec<Vec<f64>>, Vec<f64>) = support
        .iter()
        .zip(&masses)
        .filter(|(_, m)| **m / total >= MASS_FLOOR)
        .map(|(p, m)| (p.clone(), *m))
        .unzip();
    let kept_total: f64 = kept_masses.iter().sum();
    let measure = DiscreteMeasure::new(kept_support, kept_masses.iter().map(|m| m / kept_total).collect())?;
    Ok(FixedSupportBarycenter {
        measure,
        iterations,
        converged,
        marginal_error,
    })
}

/// Per-dimension min-max scaling to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    min: Vec<f64>,
    scale: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(pop: &ScoredPopulation) -> Self {
        let d = pop.dimension();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in pop.records() {
            for k in 0..d {
                min[k] = min[k].min(r.score[k]);
                max[k] = max[k].max(r.score[k]);
            }
        }
        let scale = min
            .iter()
            .zip(&max)
            .map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 })
            .collect();
        MinMaxScaler { min, scale }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.scale))
            .map(|(v, (lo, s))| (v - lo) / s)
            .collect()
    }

    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.min.iter().zip(&self.scale))
            .map(|(v, (lo, s))| lo + v * s)
            .collect()
    }
}

/// Settings for fitting and applying the multi-dimensional transform.
#[derive(Debug, Clone, PartialEq)]
pub struct NdConfig {
    pub sinkhorn: SinkhornParams,
    /// Cap on barycenter support points drawn from the pooled sample.
    pub support_size: usize,
    pub seed: u64,
}

impl Default for NdConfig {
    fn default() -> Self {
        NdConfig {
            sinkhorn: SinkhornParams::default(),
            support_size: 2000,
            seed: 0,
        }
    }
}

/// Indices of the pooled sample used as barycenter support: everything when
/// there are at most `max_points` records, otherwise a uniform subsample drawn
/// with `seed` and returned in ascending order.
pub fn support_indices(total: usize, max_points: usize, seed: u64) -> Vec<usize> {
    if total <= max_points {
        return (0..total).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, total, max_points).into_vec();
    idx.sort_unstable();
    idx
}

/// Fits the entropic barycenter of `pop`'s group distributions. Returned in
/// raw score units; the computation itself runs on min-max scaled scores.
pub fn fit_barycenter_nd(
    pop: &ScoredPopulation,
    weights: &BarycenterWeights,
    cfg: &NdConfig,
) -> Result<FixedSupportBarycenter> {
    if cfg.support_size == 0 {
        return Err(Error::validation("support size must be positive"));
    }
    let scaler = MinMaxScaler::fit(pop);
    let resolved = weights.resolve(pop)?;
    let measures = pop
        .groups()
        .values()
        .map(|members| {
            DiscreteMeasure::uniform(
                members
                    .iter()
                    .map(|&i| scaler.normalize(&pop.records()[i].score))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let support: Vec<Vec<f64>> = support_indices(pop.len(), cfg.support_size, cfg.seed)
        .into_iter()
        .map(|i| scaler.normalize(&pop.records()[i].score))
        .collect();
    let w: Vec<f64> = resolved.iter().map(|(_, w)| *w).collect();
    let mut bary = barycenter_fixed_support(&measures, &w, &support, &cfg.sinkhorn)?;
    let raw_support = bary
        .measure
        .support
        .iter()
        .map(|y| scaler.denormalize(y))
        .collect();
    bary.measure = DiscreteMeasure::new(raw_support, bary.measure.masses.clone())?;
    Ok(bary)
}

/// Moves every group of a vector-valued population toward `bary` (raw score
/// units) by its `theta`, using the barycentric projection of each group's
/// entropic plan as the transport map.
pub fn interpolate_scores_nd(
    pop: &ScoredPopulation,
    bary: &DiscreteMeasure,
    policy: &ThetaPolicy,
    params: &SinkhornParams,
) -> Result<FairScores> {
    if pop.dimension() < 2 {
        return Err(Error::Dimension {
            found: pop.dimension(),
            hint: "use interpolate_scores for scalar scores",
        });
    }
    transport_groups(pop, bary, policy, params)
}

fn transport_groups(
    pop: &ScoredPopulation,
    bary: &DiscreteMeasure,
    policy: &ThetaPolicy,
    params: &SinkhornParams,
) -> Result<FairScores> {
    params.check()?;
    policy.check_groups(pop)?;
    let d = pop.dimension();
    if bary.dimension() != d {
        return Err(Error::validation(format!(
            "barycenter dimension {} does not match population dimension {d}",
            bary.dimension()
        )));
    }
    let scaler = MinMaxScaler::fit(pop);
    let target_support: Vec<Vec<f64>> = bary.support.iter().map(|y| scaler.normalize(y)).collect();
    let target = DiscreteMeasure {
        support: target_support,
        masses: bary.masses.clone(),
    };

    let mut out = vec![0.0; pop.len() * d];
    for (key, members) in pop.groups() {
        let theta = policy.resolve(key);
        if theta == 0.0 {
            for &i in members {
                out[i * d..(i + 1) * d].copy_from_slice(&pop.records()[i].score);
            }
            continue;
        }
        let source = DiscreteMeasure::uniform(
            members
                .iter()
                .map(|&i| scaler.normalize(&pop.records()[i].score))
                .collect(),
        )?;
        let plan = sinkhorn_plan(&source, &target, params)?;
        if !plan.converged {
            return Err(Error::NotConverged {
                group: key.clone(),
                iterations: plan.iterations_run,
                marginal_error: plan.row_error.max(plan.col_error),
                tol: plan.tol,
            });
        }
        for (row, &i) in members.iter().enumerate() {
            let mapped = scaler.denormalize(&plan.barycentric_projection(row, &target.support));
            let raw = &pop.records()[i].score;
            for k in 0..d {
                out[i * d + k] = blend(raw[k], mapped[k], theta);
            }
        }
    }
    Ok(FairScores::new(out, d, policy.clone(), TransportTarget::Measure(bary.clone())))
}
