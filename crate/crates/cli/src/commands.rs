//! The subcommands, as functions from configuration and input bytes to output
//! bytes. File and stream handling lives in `main`.

use std::fmt::Write as _;

use otfair_core::metrics::{self, FairnessReport};
use otfair_core::oracle::{self, MAX_LP_SIZE, MAX_ORACLE_GRID, MAX_PERMUTATION_SIZE};
use otfair_core::transport1d::monotone_coupling_cost;
use otfair_core::transportnd::{
    fit_barycenter_nd, interpolate_scores_nd, sinkhorn_plan, MinMaxScaler,
};
use otfair_core::{
    barycenter_1d, build_population, interpolate_scores, Barycenter1D, DiscreteMeasure,
    EmpiricalDistribution, FairScores, GroupKey, QuantileGrid, ScoredPopulation, ThetaPolicy,
};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::json::to_json;
use crate::table::{format_number, InputTable};

/// A parsed input and the population built from it.
pub struct Loaded {
    pub table: InputTable,
    pub pop: ScoredPopulation,
}

pub fn load(input: &[u8], cfg: &RunConfig) -> Result<Loaded> {
    let table = InputTable::parse(input, cfg)?;
    let pop = build_population(table.records.clone(), cfg.group_columns.len())?;
    Ok(Loaded { table, pop })
}

/// What each group is transported toward.
pub enum Target {
    Grid(Barycenter1D),
    Measure(DiscreteMeasure),
}

pub fn fit_target(pop: &ScoredPopulation, cfg: &RunConfig) -> Result<Target> {
    let weights = cfg.barycenter_weights();
    if pop.dimension() == 1 {
        return Ok(Target::Grid(Barycenter1D::fit(pop, &weights, cfg.grid_size)?));
    }
    let bary = fit_barycenter_nd(pop, &weights, &cfg.nd_config())?;
    if !bary.converged {
        return Err(CliError::Runtime(format!(
            "barycenter iterations did not converge: marginal error {:e} after {} iterations (tol {:e})",
            bary.marginal_error, bary.iterations, cfg.sinkhorn.tol
        )));
    }
    Ok(Target::Measure(bary.measure))
}

pub fn apply(pop: &ScoredPopulation, target: &Target, policy: &ThetaPolicy, cfg: &RunConfig) -> Result<FairScores> {
    Ok(match target {
        Target::Grid(b) => interpolate_scores(pop, b, policy)?,
        Target::Measure(m) => interpolate_scores_nd(pop, m, policy, &cfg.sinkhorn)?,
    })
}

fn report(pop: &ScoredPopulation, fair: &FairScores, cfg: &RunConfig) -> Result<FairnessReport> {
    Ok(FairnessReport::compute(
        pop,
        fair,
        cfg.grid_size,
        cfg.selection,
        cfg.min_group_size,
    )?)
}

/// Outputs of `transform`.
pub struct Transformed {
    pub csv: Vec<u8>,
    pub report: FairnessReport,
    pub report_json: Vec<u8>,
}

pub fn transform(input: &[u8], cfg: &RunConfig) -> Result<Transformed> {
    let Loaded { table, pop } = load(input, cfg)?;
    let policy = cfg.theta_policy()?;
    let target = fit_target(&pop, cfg)?;
    let fair = apply(&pop, &target, &policy, cfg)?;
    let report = report(&pop, &fair, cfg)?;
    Ok(Transformed {
        csv: table.render_with(&fair)?,
        report_json: to_json(&report)?,
        report,
    })
}

/// The metrics `transform` would report, without rewriting the input.
pub fn audit(input: &[u8], cfg: &RunConfig) -> Result<(FairnessReport, Vec<u8>)> {
    let Loaded { pop, .. } = load(input, cfg)?;
    let policy = cfg.theta_policy()?;
    let target = fit_target(&pop, cfg)?;
    let fair = apply(&pop, &target, &policy, cfg)?;
    let report = report(&pop, &fair, cfg)?;
    let json = to_json(&report)?;
    Ok((report, json))
}

/// One row per theta: the trade-off table. Each theta replaces the default
/// theta; configured per-group overrides still apply.
pub fn sweep(input: &[u8], cfg: &RunConfig) -> Result<(Vec<FairnessReport>, Vec<u8>)> {
    if cfg.thetas.is_empty() {
        return Err(CliError::validation("sweep needs at least one theta"));
    }
    let Loaded { pop, .. } = load(input, cfg)?;
    let target = fit_target(&pop, cfg)?;
    let mut rows = Vec::with_capacity(cfg.thetas.len());
    for &theta in &cfg.thetas {
        let mut policy = ThetaPolicy::new(theta)?;
        for (k, t) in &cfg.theta_overrides {
            policy = policy.with_override(GroupKey::parse(k), *t)?;
        }
        let fair = apply(&pop, &target, &policy, cfg)?;
        rows.push(report(&pop, &fair, cfg)?);
    }

    let opt = |v: Option<f64>| v.map(format_number).unwrap_or_default();
    let mut out = String::from(
        "theta,individual_fairness_error,group_fairness_w2,group_fairness_ks,utility_loss_mean_abs,utility_loss_w2",
    );
    if cfg.selection.is_some() {
        out.push_str(",selection_ratio");
    }
    out.push('\n');
    for (theta, r) in cfg.thetas.iter().zip(&rows) {
        write!(
            out,
            "{},{},{},{},{},{}",
            format_number(*theta),
            opt(r.individual_fairness_error),
            opt(r.group_fairness_w2),
            opt(r.group_fairness_ks),
            format_number(r.utility_loss_mean_abs),
            format_number(r.utility_loss_w2),
        )
        .expect("writing to a String cannot fail");
        if cfg.selection.is_some() {
            out.push(',');
            out.push_str(&opt(r.selection.as_ref().map(|s| s.ratio)));
        }
        out.push('\n');
    }
    Ok((rows, out.into_bytes()))
}

/// The barycenter as CSV: `rank,quantile` for scalar scores, otherwise one
/// `mass` column followed by the support coordinates.
pub fn barycenter(input: &[u8], cfg: &RunConfig) -> Result<Vec<u8>> {
    let Loaded { pop, .. } = load(input, cfg)?;
    let mut out = String::new();
    match fit_target(&pop, cfg)? {
        Target::Grid(b) => {
            out.push_str("rank,quantile\n");
            for (p, q) in b.grid.ranks().iter().zip(b.grid.quantiles()) {
                writeln!(out, "{},{}", format_number(*p), format_number(*q)).expect("infallible");
            }
        }
        Target::Measure(m) => {
            out.push_str("mass");
            for c in &cfg.score_columns {
                out.push(',');
                out.push_str(c);
            }
            out.push('\n');
            for (x, w) in m.support().iter().zip(m.masses()) {
                out.push_str(&format_number(*w));
                for v in x {
                    out.push(',');
                    out.push_str(&format_number(*v));
                }
                out.push('\n');
            }
        }
    }
    Ok(out.into_bytes())
}

/// A generated population as CSV with columns `id`, the attributes, then
/// the score columns.
pub fn synth(cfg: &RunConfig) -> Result<Vec<u8>> {
    let (attributes, specs) = cfg.synth_specs()?;
    let seed = cfg.seed.unwrap_or(otfair_core::synth::DEFAULT_SEED);
    let records = otfair_core::synth::generate_synthetic(&specs, seed)?;
    let d = records[0].score.len();
    let score_names: Vec<String> = if cfg.score_columns.len() == d {
        cfg.score_columns.clone()
    } else {
        (1..=d).map(|k| format!("score_{k}")).collect()
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("id")
        .chain(attributes.iter().map(String::as_str))
        .chain(score_names.iter().map(String::as_str));
    w.write_record(header).map_err(|e| CliError::Runtime(e.to_string()))?;
    for r in &records {
        let fields = std::iter::once(r.id.clone())
            .chain(r.group_values.iter().cloned())
            .chain(r.score.iter().map(|v| format_number(*v)));
        w.write_record(fields).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Switches for `verify`.
#[derive(Debug, Default, Clone, Copy)]
pub struct VerifyOptions {
    /// Shifts the barycenter before it is checked, so the oracle must reject
    /// it. Exists to test the verifier itself.
    pub corrupt_barycenter: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn max_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut worst = 0.0f64;
    for x in mu.support() {
        for y in nu.support() {
            worst = worst.max(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum());
        }
    }
    worst
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Cross-checks every transport computation on the configured instance
/// against the brute-force oracles. Refuses groups larger than the exact
/// solver's guard.
pub fn verify(input: &[u8], cfg: &RunConfig, opts: VerifyOptions) -> Result<Vec<Check>> {
    let Loaded { pop, .. } = load(input, cfg)?;
    if let Some((k, members)) = pop.groups().iter().find(|(_, m)| m.len() > MAX_LP_SIZE) {
        return Err(CliError::Core(otfair_core::Error::Refused(format!(
            "verify is limited to groups of at most {MAX_LP_SIZE} rows; group {k} has {}",
            members.len()
        ))));
    }
    let d = pop.dimension();
    let keys: Vec<&GroupKey> = pop.groups().keys().collect();
    let points = |k: &GroupKey| -> Vec<Vec<f64>> {
        pop.group_of(k)
            .expect("key comes from the population")
            .iter()
            .map(|&i| pop.records()[i].score.clone())
            .collect()
    };
    let mut checks = Vec::new();

    let scaler = MinMaxScaler::fit(&pop);
    for (a, ka) in keys.iter().enumerate() {
        for kb in &keys[a + 1..] {
            let (xa, xb) = (points(ka), points(kb));
            let pair = format!("{ka}~{kb}");

            if xa.len() == xb.len() && xa.len() <= MAX_PERMUTATION_SIZE {
                let brute = oracle::ot_cost_bruteforce(&xa, &xb)?;
                let (name, value) = if d == 1 {
                    let da = EmpiricalDistribution::from_samples(&pop.group_scalar_scores(ka))?;
                    let db = EmpiricalDistribution::from_samples(&pop.group_scalar_scores(kb))?;
                    let w2 = otfair_core::w2_distance(&da, &db, xa.len().max(2))?;
                    ("grid-w2-vs-permutations", w2 * w2)
                } else {
                    let lp = oracle::lp_transport_exact(
                        &DiscreteMeasure::uniform(xa.clone())?,
                        &DiscreteMeasure::uniform(xb.clone())?,
                    )?;
                    ("lp-vs-permutations", lp.cost)
                };
                checks.push(Check::new(
                    format!("{name} {pair}"),
                    close(value, brute, 1e-9),
                    format!("{value} vs {brute}"),
                ));
            }

            if d == 1 {
                let da = EmpiricalDistribution::from_samples(&pop.group_scalar_scores(ka))?;
                let db = EmpiricalDistribution::from_samples(&pop.group_scalar_scores(kb))?;
                let mono = monotone_coupling_cost(&da, &db);
                let lp = oracle::lp_transport_exact(
                    &DiscreteMeasure::uniform(xa.clone())?,
                    &DiscreteMeasure::uniform(xb.clone())?,
                )?
                .cost;
                checks.push(Check::new(
                    format!("monotone-coupling-vs-lp {pair}"),
                    close(mono, lp, 1e-9),
                    format!("{mono} vs {lp}"),
                ));
            }

            let na: Vec<Vec<f64>> = xa.iter().map(|x| scaler.normalize(x)).collect();
            let nb: Vec<Vec<f64>> = xb.iter().map(|x| scaler.normalize(x)).collect();
            let (mu, nu) = (DiscreteMeasure::uniform(na)?, DiscreteMeasure::uniform(nb)?);
            let lp = oracle::lp_transport_exact(&mu, &nu)?.cost;
            let plan = sinkhorn_plan(&mu, &nu, &cfg.sinkhorn)?;
            let eps = cfg.sinkhorn.epsilon;
            let upper = lp + eps * ((mu.len() * nu.len()) as f64).ln();
            // Marginals are only met to tol, which can shave up to tol times
            // the largest cost entry off the transport cost.
            let slack = cfg.sinkhorn.tol * max_cost(&mu, &nu) + 1e-12;
            let ok = plan.converged && plan.cost >= lp - slack && plan.cost <= upper + slack;
            checks.push(Check::new(
                format!("sinkhorn-bracket {pair}"),
                ok,
                format!(
                    "cost {} in [{lp}, {upper}], converged {} after {} iterations",
                    plan.cost, plan.converged, plan.iterations_run
                ),
            ));
        }
    }

    if d == 1 {
        let weights = cfg.barycenter_weights().resolve(&pop)?;
        let dists = pop
            .groups()
            .keys()
            .map(|k| EmpiricalDistribution::from_samples(&pop.group_scalar_scores(k)))
            .collect::<otfair_core::Result<Vec<_>>>()?;
        let w: Vec<f64> = weights.iter().map(|(_, w)| *w).collect();
        let m = cfg.grid_size.min(MAX_ORACLE_GRID);
        let scores = pop.scalar_scores();
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = if hi > lo { hi - lo } else { 1.0 };
        let resolution = 1e-4 * range;

        let mut closed = barycenter_1d(&dists, &w, m)?;
        if opts.corrupt_barycenter {
            let shifted = closed.quantiles().iter().map(|q| q + 0.5 * range).collect();
            closed = QuantileGrid::from_quantiles(shifted)?;
        }
        let searched = oracle::barycenter_coordinate_oracle(&dists, &w, m, resolution)?;
        let worst = closed
            .quantiles()
            .iter()
            .zip(searched.quantiles())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        checks.push(Check::new(
            "barycenter-vs-coordinate-search",
            worst <= resolution,
            format!("max deviation {worst} at m = {m}, resolution {resolution}"),
        ));

        let bary = Barycenter1D::fit(&pop, &cfg.barycenter_weights(), cfg.grid_size)?;
        let fair = interpolate_scores(&pop, &bary, &cfg.theta_policy()?)?;
        let fast = metrics::individual_fairness_error(&pop, &fair)?;
        let slow = oracle::inversion_rate_bruteforce(&pop, &fair)?;
        checks.push(Check::new(
            "inversion-count-vs-enumeration",
            fast == slow,
            format!("{fast} vs {slow}"),
        ));
    }

    Ok(checks)
}
