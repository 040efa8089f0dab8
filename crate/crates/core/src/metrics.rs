//! Individual fairness, group fairness, utility loss and selection rates for
//! one set of transformed scores.

use std::cmp::Ordering;

use serde::Serialize;

use crate::empirical::{discretize_quantiles, EmpiricalDistribution};
use crate::error::{Error, Result};
use crate::interpolation::{FairScores, ThetaPolicy};
use crate::population::{validate_population, GroupKey, ScoredPopulation, Warning};

/// Metric bundle for one theta setting. Metrics that are only defined for
/// scalar scores are `None` for vector-valued populations; the group metrics
/// are also `None` when there is a single group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub individual_fairness_error: Option<f64>,
    pub group_fairness_w2: Option<f64>,
    pub group_fairness_ks: Option<f64>,
    pub utility_loss_mean_abs: f64,
    pub utility_loss_w2: f64,
    pub selection: Option<SelectionReport>,
    pub theta: ThetaPolicy,
    pub grid_size: usize,
    pub warnings: Vec<Warning>,
}

impl FairnessReport {
    pub fn compute(
        pop: &ScoredPopulation,
        fair: &FairScores,
        m: usize,
        rule: Option<SelectionRule>,
        min_group_size: usize,
    ) -> Result<Self> {
        check_aligned(pop, fair)?;
        let (mean_abs, w2) = utility_loss(pop, fair)?;
        let scalar = pop.dimension() == 1;
        let (ife, group) = if scalar {
            let ife = individual_fairness_error(pop, fair)?;
            let group = if pop.group_count() >= 2 {
                Some(group_fairness_error(pop, fair, m)?)
            } else {
                None
            };
            (Some(ife), group)
        } else {
            (None, None)
        };
        let selection = rule.map(|r| selection_rates(pop, fair, r)).transpose()?;
        Ok(FairnessReport {
            individual_fairness_error: ife,
            group_fairness_w2: group.map(|g| g.0),
            group_fairness_ks: group.map(|g| g.1),
            utility_loss_mean_abs: mean_abs,
            utility_loss_w2: w2,
            selection,
            theta: fair.theta_used.clone(),
            grid_size: m,
            warnings: validate_population(pop, min_group_size),
        })
    }
}

fn check_aligned(pop: &ScoredPopulation, fair: &FairScores) -> Result<()> {
    if fair.len() != pop.len() || fair.dimension() != pop.dimension() {
        return Err(Error::validation(format!(
            "fair scores ({} x {}) do not align with population ({} x {})",
            fair.len(),
            fair.dimension(),
            pop.len(),
            pop.dimension()
        )));
    }
    Ok(())
}

/// Share of cross-group pairs whose raw order is strictly reversed by the
/// fair scores.
///
/// The pair universe is every pair from different groups with distinct raw
/// scores; ties in the fair scores do not count as inversions. A single-group
/// population scores 0.
pub fn individual_fairness_error(pop: &ScoredPopulation, fair: &FairScores) -> Result<f64> {
    pop.require_scalar("individual fairness error is defined for scalar scores")?;
    check_aligned(pop, fair)?;
    let raw = pop.scalar_scores();
    let fair = fair.as_flat();

    let all: Vec<usize> = (0..raw.len()).collect();
    let mut inversions = strict_inversions(&all, &raw, fair);
    let mut pairs = distinct_raw_pairs(&all, &raw);
    for members in pop.groups().values() {
        inversions -= strict_inversions(members, &raw, fair);
        pairs -= distinct_raw_pairs(members, &raw);
    }
    if pairs == 0 {
        return Ok(0.0);
    }
    Ok(inversions as f64 / pairs as f64)
}

/// Number of pairs `(i, j)` among `idx` with `raw_i < raw_j` and
/// `fair_i > fair_j`, by merge-sort counting.
fn strict_inversions(idx: &[usize], raw: &[f64], fair: &[f64]) -> u64 {
    let mut order = idx.to_vec();
    // Within a raw tie block fair scores ascend, so no pair inside a block
    // is counted.
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(fair[a].total_cmp(&fair[b])));
    let mut seq: Vec<f64> = order.iter().map(|&i| fair[i]).collect();
    let mut buf = vec![0.0; seq.len()];
    count_merge(&mut seq, &mut buf)
}

fn count_merge(seq: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = seq.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (l, r) = seq.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        count_merge(l, bl) + count_merge(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if seq[i] <= seq[j] {
            buf[k] = seq[i];
            i += 1;
        } else {
            // Everything left in the left half exceeds seq[j].
            count += (mid - i) as u64;
            buf[k] = seq[j];
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&seq[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&seq[j..n]);
    seq.copy_from_slice(&buf[..n]);
    count
}

fn distinct_raw_pairs(idx: &[usize], raw: &[f64]) -> u64 {
    let mut vals: Vec<f64> = idx.iter().map(|&i| raw[i]).collect();
    vals.sort_by(f64::total_cmp);
    let n = vals.len() as u64;
    let mut tied = 0u64;
    let mut start = 0;
    for k in 1..=vals.len() {
        if k == vals.len() || vals[k] != vals[start] {
            let t = (k - start) as u64;
            tied += t * (t - 1) / 2;
            start = k;
        }
    }
    n * n.saturating_sub(1) / 2 - tied
}

/// Largest pairwise grid-W2 and largest pairwise Kolmogorov-Smirnov statistic
/// between the groups' fair-score distributions.
pub fn group_fairness_error(pop: &ScoredPopulation, fair: &FairScores, m: usize) -> Result<(f64, f64)> {
    pop.require_scalar("group fairness error is defined for scalar scores")?;
    check_aligned(pop, fair)?;
    if pop.group_count() < 2 {
        return Err(Error::validation("group fairness needs at least two groups"));
    }
    let samples: Vec<Vec<f64>> = pop
        .groups()
        .values()
        .map(|members| {
            let mut v: Vec<f64> = members.iter().map(|&i| fair.get(i)[0]).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    let grids = samples
        .iter()
        .map(|s| discretize_quantiles(&EmpiricalDistribution::from_samples(s)?, m))
        .collect::<Result<Vec<_>>>()?;

    let mut w2 = 0.0f64;
    let mut ks = 0.0f64;
    for a in 0..grids.len() {
        for b in a + 1..grids.len() {
            w2 = w2.max(grids[a].w2(&grids[b])?);
            ks = ks.max(ks_statistic(&samples[a], &samples[b]));
        }
    }
    Ok((w2, ks))
}

/// Two-sample Kolmogorov-Smirnov statistic; inputs sorted ascending.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    // Past the end of either sample the remaining gap only shrinks.
    best.max((i as f64 / na - j as f64 / nb).abs())
}

/// Mean displacement norm and root-mean-square displacement between raw and
/// fair scores.
pub fn utility_loss(pop: &ScoredPopulation, fair: &FairScores) -> Result<(f64, f64)> {
    check_aligned(pop, fair)?;
    let n = pop.len() as f64;
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for (rec, f) in pop.records().iter().zip(fair.iter()) {
        let sq: f64 = rec.score.iter().zip(f).map(|(r, f)| (f - r) * (f - r)).sum();
        abs_sum += sq.sqrt();
        sq_sum += sq;
    }
    Ok((abs_sum / n, (sq_sum / n).sqrt()))
}

/// Who counts as positively selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Fair score at or above the threshold.
    Threshold(f64),
    /// The `k` highest fair scores; ties broken by raw score, then id, both
    /// descending.
    TopK(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRate {
    pub group: GroupKey,
    pub size: usize,
    pub selected: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub rule: SelectionRule,
    pub groups: Vec<GroupRate>,
    /// Smallest rate over largest rate; 1 when all rates are equal.
    pub ratio: f64,
}

pub fn selection_rates(pop: &ScoredPopulation, fair: &FairScores, rule: SelectionRule) -> Result<SelectionReport> {
    pop.require_scalar("selection rates are defined for scalar scores")?;
    check_aligned(pop, fair)?;
    let n = pop.len();
    let selected: Vec<bool> = match rule {
        SelectionRule::Threshold(tau) => {
            if !tau.is_finite() {
                return Err(Error::validation("selection threshold must be finite"));
            }
            (0..n).map(|i| fair.get(i)[0] >= tau).collect()
        }
        SelectionRule::TopK(k) => {
            if k == 0 || k > n {
                return Err(Error::validation(format!("top-k must lie in 1..={n}, got {k}")));
            }
            let recs = pop.records();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                fair.get(b)[0]
                    .total_cmp(&fair.get(a)[0])
                    .then(recs[b].score[0].total_cmp(&recs[a].score[0]))
                    .then_with(|| recs[b].id.cmp(&recs[a].id))
            });
            let mut sel = vec![false; n];
            for &i in &order[..k] {
                sel[i] = true;
            }
            sel
        }
    };

    let groups: Vec<GroupRate> = pop
        .groups()
        .iter()
        .map(|(key, members)| {
            let count = members.iter().filter(|&&i| selected[i]).count();
            GroupRate {
                group: key.clone(),
                size: members.len(),
                selected: count,
                rate: count as f64 / members.len() as f64,
            }
        })
        .collect();
    let max = groups.iter().map(|g| g.rate).fold(0.0, f64::max);
    let min = groups.iter().map(|g| g.rate).fold(1.0, f64::min);
    let ratio = match max.partial_cmp(&0.0) {
        Some(Ordering::Greater) => min / max,
        _ => 1.0,
    };
    Ok(SelectionReport { rule, groups, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolation::{interpolate_scores, ThetaPolicy};
    use crate::oracle::inversion_rate_bruteforce;
    use crate::population::{build_population, ScoreRecord};
    use crate::transport1d::{Barycenter1D, BarycenterWeights};
    use proptest::prelude::*;

    fn ab_fixture() -> ScoredPopulation {
        build_population(
            vec![
                ScoreRecord::scalar("a0", "A", 0.0),
                ScoreRecord::scalar("a1", "A", 1.0),
                ScoreRecord::scalar("b0", "B", 10.0),
                ScoreRecord::scalar("b1", "B", 11.0),
            ],
            1,
        )
        .unwrap()
    }

    fn transform(pop: &ScoredPopulation, theta: f64, m: usize) -> FairScores {
        let bary = Barycenter1D::fit(pop, &BarycenterWeights::Uniform, m).unwrap();
        interpolate_scores(pop, &bary, &ThetaPolicy::new(theta).unwrap()).unwrap()
    }

    #[test]
    fn individual_fairness_examples() {
        let pop = ab_fixture();
        assert_eq!(individual_fairness_error(&pop, &transform(&pop, 0.0, 2)).unwrap(), 0.0);
        let fair = transform(&pop, 1.0, 2);
        assert_eq!(fair.as_flat(), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(individual_fairness_error(&pop, &fair).unwrap(), 0.25);

        let one = build_population(vec![ScoreRecord::scalar("x", "A", 1.0), ScoreRecord::scalar("y", "A", 2.0)], 1)
            .unwrap();
        assert_eq!(individual_fairness_error(&one, &transform(&one, 1.0, 4)).unwrap(), 0.0);
    }

    #[test]
    fn group_fairness_examples() {
        let pop = ab_fixture();
        let (w2, _) = group_fairness_error(&pop, &transform(&pop, 1.0, 2), 2).unwrap();
        assert!(w2 <= 1e-9);
        let (w2, ks) = group_fairness_error(&pop, &transform(&pop, 0.0, 2), 2).unwrap();
        assert_eq!(w2, 10.0);
        assert_eq!(ks, 1.0);
        let (w2, _) = group_fairness_error(&pop, &transform(&pop, 0.5, 2), 2).unwrap();
        assert_eq!(w2, 5.0);

        let one = build_population(vec![ScoreRecord::scalar("x", "A", 1.0)], 1).unwrap();
        assert!(group_fairness_error(&one, &transform(&one, 1.0, 2), 2).is_err());
    }

    #[test]
    fn utility_loss_examples() {
        let pop = ab_fixture();
        assert_eq!(utility_loss(&pop, &transform(&pop, 0.0, 2)).unwrap(), (0.0, 0.0));
        assert_eq!(utility_loss(&pop, &transform(&pop, 1.0, 2)).unwrap().0, 5.0);
        assert_eq!(utility_loss(&pop, &transform(&pop, 0.5, 2)).unwrap().0, 2.5);
    }

    #[test]
    fn selection_examples() {
        let pop = ab_fixture();
        let s = selection_rates(&pop, &transform(&pop, 0.0, 2), SelectionRule::Threshold(5.0)).unwrap();
        assert_eq!(s.groups.iter().map(|g| g.rate).collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert_eq!(s.ratio, 0.0);

        let s = selection_rates(&pop, &transform(&pop, 1.0, 2), SelectionRule::Threshold(5.5)).unwrap();
        assert_eq!(s.groups.iter().map(|g| g.rate).collect::<Vec<_>>(), vec![0.5, 0.5]);
        assert_eq!(s.ratio, 1.0);

        let s = selection_rates(&pop, &transform(&pop, 0.3, 2), SelectionRule::Threshold(-100.0)).unwrap();
        assert!(s.groups.iter().all(|g| g.rate == 1.0));
        assert_eq!(s.ratio, 1.0);

        let s = selection_rates(&pop, &transform(&pop, 0.0, 2), SelectionRule::Threshold(100.0)).unwrap();
        assert_eq!(s.ratio, 1.0);
    }

    #[test]
    fn top_k_ties_broken_by_raw_then_id() {
        let pop = ab_fixture();
        // At theta = 1 fair scores are (5, 6, 5, 6): a1 and b1 tie at 6,
        // b1 wins on raw score.
        let fair = transform(&pop, 1.0, 2);
        let s = selection_rates(&pop, &fair, SelectionRule::TopK(1)).unwrap();
        assert_eq!(s.groups[0].selected, 0);
        assert_eq!(s.groups[1].selected, 1);
        let s = selection_rates(&pop, &fair, SelectionRule::TopK(3)).unwrap();
        assert_eq!((s.groups[0].selected, s.groups[1].selected), (1, 2));
        assert!(selection_rates(&pop, &fair, SelectionRule::TopK(0)).is_err());
        assert!(selection_rates(&pop, &fair, SelectionRule::TopK(5)).is_err());
    }

    #[test]
    fn ks_with_ties() {
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[10.0, 11.0]), 1.0);
        assert_eq!(ks_statistic(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0]), 0.25);
    }

    #[test]
    fn misaligned_rejected() {
        let pop = ab_fixture();
        let small = build_population(vec![ScoreRecord::scalar("x", "A", 1.0)], 1).unwrap();
        let fair = transform(&small, 0.5, 2);
        assert!(utility_loss(&pop, &fair).is_err());
        assert!(individual_fairness_error(&pop, &fair).is_err());
    }

    proptest! {
        #[test]
        fn fast_inversion_count_matches_enumeration(
            groups in prop::collection::vec(prop::collection::vec((-8i32..8, -8i32..8), 1..25), 1..4)
        ) {
            // Small integer grids force plenty of raw and fair ties.
            let mut recs = Vec::new();
            let mut fair = Vec::new();
            for (g, members) in groups.iter().enumerate() {
                for (i, (r, f)) in members.iter().enumerate() {
                    recs.push(ScoreRecord::scalar(format!("{g}-{i}"), format!("g{g}"), *r as f64));
                    fair.push(*f as f64);
                }
            }
            let pop = build_population(recs, 1).unwrap();
            let fair = FairScores::new(
                fair,
                1,
                ThetaPolicy::new(0.0).unwrap(),
                crate::interpolation::TransportTarget::Grid(
                    Barycenter1D::fit(&pop, &BarycenterWeights::Uniform, 2).unwrap(),
                ),
            );
            let fast = individual_fairness_error(&pop, &fair).unwrap();
            let slow = inversion_rate_bruteforce(&pop, &fair).unwrap();
            prop_assert_eq!(fast, slow);
        }
    }
}
