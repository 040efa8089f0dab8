//! Empirical one-dimensional distributions and their quantile functions.
//!
//! Quantile convention: the i-th order statistic (1-based) of an n-sample sits
//! at the Hazen plotting position `p_i = (i - 0.5) / n`. Between positions the
//! quantile function is linear; outside `[p_1, p_n]` it is constant. Tied
//! samples share the average of their positions (the midrank), so equal values
//! always map to the same rank.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sorted samples with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    weights: Vec<f64>,
    /// Plotting position of each sorted sample.
    positions: Vec<f64>,
    /// Cumulative weight before each sample; one extra trailing entry.
    cumulative: Vec<f64>,
    uniform: bool,
}

impl EmpiricalDistribution {
    /// Sorted copy of `samples` with uniform weights.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::validation("empirical distribution needs at least one sample"));
        }
        check_finite(samples)?;
        let mut values = samples.to_vec();
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let denom = 2.0 * n as f64;
        let positions = (0..n).map(|i| (2 * i + 1) as f64 / denom).collect();
        let cumulative = (0..=n).map(|i| i as f64 / n as f64).collect();
        Ok(EmpiricalDistribution {
            values,
            weights: vec![1.0 / n as f64; n],
            positions,
            cumulative,
            uniform: true,
        })
    }

    /// Weighted samples. Weights must be positive; they are normalised if
    /// their sum is within `1e-9` of one and rejected otherwise.
    pub fn from_weighted(samples: &[f64], weights: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::validation("empirical distribution needs at least one sample"));
        }
        if samples.len() != weights.len() {
            return Err(Error::validation(format!(
                "{} samples but {} weights",
                samples.len(),
                weights.len()
            )));
        }
        check_finite(samples)?;
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::validation("sample weights must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("sample weights sum to {total}, expected 1")));
        }

        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]));
        let values: Vec<f64> = order.iter().map(|&i| samples[i]).collect();
        let weights: Vec<f64> = order.iter().map(|&i| weights[i] / total).collect();

        let mut cumulative = Vec::with_capacity(values.len() + 1);
        let mut acc = 0.0;
        cumulative.push(acc);
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        let positions = (0..values.len())
            .map(|i| 0.5 * (cumulative[i] + cumulative[i + 1]))
            .collect();
        Ok(EmpiricalDistribution {
            values,
            weights,
            positions,
            cumulative,
            uniform: false,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Quantile function at `p`, which must lie in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(interpolate_sorted(&self.positions, &self.values, p))
    }

    /// Midrank of an in-sample value. Errors if `x` is not one of the samples.
    pub fn cdf_rank(&self, x: f64) -> Result<f64> {
        let lo = self.values.partition_point(|v| *v < x);
        let hi = self.values.partition_point(|v| *v <= x);
        if lo == hi {
            return Err(Error::validation(format!(
                "value {x} is not in the sample; use cdf_rank_interpolated"
            )));
        }
        Ok(self.block_midrank(lo, hi))
    }

    /// Midrank of the sorted sample at `index`.
    pub fn midrank_at(&self, index: usize) -> Result<f64> {
        let x = *self
            .values
            .get(index)
            .ok_or_else(|| Error::validation(format!("sample index {index} out of range")))?;
        self.cdf_rank(x)
    }

    /// Rank of an arbitrary value: the midrank for in-sample values, linear
    /// interpolation between neighbouring positions otherwise, clamped to
    /// `[p_1, p_n]` outside the sample range.
    pub fn cdf_rank_interpolated(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::validation("rank query must be finite"));
        }
        let lo = self.values.partition_point(|v| *v < x);
        let hi = self.values.partition_point(|v| *v <= x);
        if lo < hi {
            return Ok(self.block_midrank(lo, hi));
        }
        let n = self.values.len();
        if lo == 0 {
            return Ok(self.positions[0]);
        }
        if lo == n {
            return Ok(self.positions[n - 1]);
        }
        // values[lo - 1] < x < values[lo]; both are distinct values, use the
        // midranks of their tie blocks as segment endpoints.
        let left = self.cdf_rank(self.values[lo - 1])?;
        let right = self.cdf_rank(self.values[lo])?;
        let (x0, x1) = (self.values[lo - 1], self.values[lo]);
        let t = (x - x0) / (x1 - x0);
        Ok((left + t * (right - left)).clamp(left, right))
    }

    /// Midranks of every sorted sample.
    pub fn midranks(&self) -> Vec<f64> {
        let n = self.values.len();
        let mut out = Vec::with_capacity(n);
        let mut lo = 0;
        while lo < n {
            let mut hi = lo + 1;
            while hi < n && self.values[hi] == self.values[lo] {
                hi += 1;
            }
            let r = self.block_midrank(lo, hi);
            out.extend(std::iter::repeat_n(r, hi - lo));
            lo = hi;
        }
        out
    }

    fn block_midrank(&self, lo: usize, hi: usize) -> f64 {
        if self.uniform {
            // Mean of positions (2i+1)/(2n) over i in lo..hi.
            (lo + hi) as f64 / (2 * self.values.len()) as f64
        } else {
            0.5 * (self.cumulative[lo] + self.cumulative[hi])
        }
    }
}

/// A quantile function sampled at the `m` midpoint ranks `(k - 0.5) / m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileGrid {
    ranks: Vec<f64>,
    quantiles: Vec<f64>,
}

impl QuantileGrid {
    /// Grid from precomputed quantiles at the standard ranks.
    pub fn from_quantiles(quantiles: Vec<f64>) -> Result<Self> {
        let m = quantiles.len();
        if m < 2 {
            return Err(Error::validation(format!("grid size must be at least 2, got {m}")));
        }
        check_finite(&quantiles)?;
        if quantiles.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::validation("grid quantiles must be nondecreasing"));
        }
        Ok(QuantileGrid {
            ranks: grid_ranks(m),
            quantiles,
        })
    }

    pub fn ranks(&self) -> &[f64] {
        &self.ranks
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    pub fn len(&self) -> usize {
        self.quantiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantiles.is_empty()
    }

    /// The grid's quantile function at `p`, interpolated with the same
    /// convention as [`EmpiricalDistribution::quantile`].
    pub fn eval(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(interpolate_sorted(&self.ranks, &self.quantiles, p))
    }

    /// Largest gap between neighbouring grid quantiles.
    pub fn spacing(&self) -> f64 {
        self.quantiles
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Root-mean-square difference to another grid of the same size.
    pub fn w2(&self, other: &QuantileGrid) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::validation(format!(
                "grid sizes differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        let sum_sq: f64 = self
            .quantiles
            .iter()
            .zip(&other.quantiles)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((sum_sq / self.len() as f64).sqrt())
    }
}

/// Midpoint ranks `(k - 0.5) / m` for `k = 1..=m`.
pub fn grid_ranks(m: usize) -> Vec<f64> {
    let denom = (2 * m) as f64;
    (0..m).map(|k| (2 * k + 1) as f64 / denom).collect()
}

/// Evaluates `dist`'s quantile function on the `m`-point rank grid.
pub fn discretize_quantiles(dist: &EmpiricalDistribution, m: usize) -> Result<QuantileGrid> {
    if m < 2 {
        return Err(Error::validation(format!("grid size must be at least 2, got {m}")));
    }
    let ranks = grid_ranks(m);
    let quantiles = ranks
        .iter()
        .map(|&p| interpolate_sorted(&dist.positions, &dist.values, p))
        .collect();
    Ok(QuantileGrid { ranks, quantiles })
}

/// Piecewise-linear interpolation through `(positions[i], values[i])` with
/// constant extrapolation. Both slices are nondecreasing.
///
/// Results are clamped to the bracketing values so the output stays
/// nondecreasing in `p` under floating-point rounding.
fn interpolate_sorted(positions: &[f64], values: &[f64], p: f64) -> f64 {
    let n = positions.len();
    if p <= positions[0] {
        return values[0];
    }
    if p >= positions[n - 1] {
        return values[n - 1];
    }
    let k = positions.partition_point(|q| *q <= p) - 1;
    let (p0, p1) = (positions[k], positions[k + 1]);
    let (v0, v1) = (values[k], values[k + 1]);
    if p == p0 {
        return v0;
    }
    let t = (p - p0) / (p1 - p0);
    (v0 + t * (v1 - v0)).clamp(v0, v1)
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

fn check_finite(xs: &[f64]) -> Result<()> {
    if let Some(bad) = xs.iter().find(|x| !x.is_finite()) {
        return Err(Error::validation(format!("non-finite value {bad}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(xs: &[f64]) -> EmpiricalDistribution {
        EmpiricalDistribution::from_samples(xs).unwrap()
    }

    #[test]
    fn from_samples_sorts_and_keeps_ties() {
        let d = dist(&[3.0, 1.0, 2.0]);
        assert_eq!(d.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(d.weights(), &[1.0 / 3.0; 3]);
        assert_eq!(dist(&[5.0]).weights(), &[1.0]);
        assert_eq!(dist(&[1.0, 1.0, 2.0]).values(), &[1.0, 1.0, 2.0]);
        assert!(EmpiricalDistribution::from_samples(&[]).is_err());
        assert!(EmpiricalDistribution::from_samples(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn quantile_convention() {
        let d = dist(&[0.0, 10.0]);
        assert_eq!(d.quantile(0.5).unwrap(), 5.0);
        assert_eq!(d.quantile(0.25).unwrap(), 0.0);
        assert_eq!(d.quantile(0.0).unwrap(), 0.0);
        assert_eq!(d.quantile(1.0).unwrap(), 10.0);
        assert!(d.quantile(1.5).is_err());
        assert!(d.quantile(-0.1).is_err());
    }

    #[test]
    fn midranks() {
        assert_eq!(dist(&[1.0, 2.0, 3.0]).cdf_rank(2.0).unwrap(), 0.5);
        assert_eq!(dist(&[1.0, 2.0, 2.0, 3.0]).cdf_rank(2.0).unwrap(), 0.5);
        assert_eq!(dist(&[7.0]).cdf_rank(7.0).unwrap(), 0.5);
        assert!(dist(&[1.0, 2.0]).cdf_rank(1.5).is_err());
        assert_eq!(dist(&[1.0, 2.0, 2.0, 3.0]).midranks(), vec![0.125, 0.5, 0.5, 0.875]);
    }

    #[test]
    fn interpolated_rank() {
        let d = dist(&[0.0, 10.0]);
        assert_eq!(d.cdf_rank_interpolated(5.0).unwrap(), 0.5);
        assert_eq!(d.cdf_rank_interpolated(-3.0).unwrap(), 0.25);
        assert_eq!(d.cdf_rank_interpolated(30.0).unwrap(), 0.75);
        assert_eq!(d.cdf_rank_interpolated(10.0).unwrap(), 0.75);
    }

    #[test]
    fn weighted_positions() {
        let d = EmpiricalDistribution::from_weighted(&[2.0, 0.0], &[0.75, 0.25]).unwrap();
        assert_eq!(d.values(), &[0.0, 2.0]);
        assert_eq!(d.positions(), &[0.125, 0.625]);
        assert_eq!(d.quantile(0.375).unwrap(), 1.0);
        assert!(EmpiricalDistribution::from_weighted(&[1.0], &[0.5]).is_err());
        assert!(EmpiricalDistribution::from_weighted(&[1.0, 2.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn discretize() {
        let d = dist(&[0.0, 10.0]);
        assert_eq!(discretize_quantiles(&d, 2).unwrap().quantiles(), &[0.0, 10.0]);
        assert_eq!(
            discretize_quantiles(&d, 4).unwrap().quantiles(),
            &[0.0, 2.5, 7.5, 10.0]
        );
        let c = dist(&[3.5; 9]);
        assert!(discretize_quantiles(&c, 17).unwrap().quantiles().iter().all(|&q| q == 3.5));
        assert!(discretize_quantiles(&d, 1).is_err());
    }

    #[test]
    fn grid_helpers() {
        let g = QuantileGrid::from_quantiles(vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(g.spacing(), 3.0);
        assert_eq!(g.eval(0.5).unwrap(), 1.0);
        assert!(QuantileGrid::from_quantiles(vec![1.0, 0.0]).is_err());
        assert!(QuantileGrid::from_quantiles(vec![1.0]).is_err());
    }

    fn samples() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 1..60)
    }

    proptest! {
        #[test]
        fn quantile_nondecreasing(xs in samples(), p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            let d = dist(&xs);
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(d.quantile(lo).unwrap() <= d.quantile(hi).unwrap());
        }

        #[test]
        fn rank_round_trip(xs in samples()) {
            let d = dist(&xs);
            for &x in &xs {
                if xs.iter().filter(|&&y| y == x).count() == 1 {
                    prop_assert_eq!(d.quantile(d.cdf_rank(x).unwrap()).unwrap(), x);
                }
            }
        }

        #[test]
        fn affine_equivariance(xs in samples(), a in 0.1f64..10.0, b in -50.0f64..50.0, p in 0.0f64..=1.0) {
            let d = dist(&xs);
            let moved: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let dm = dist(&moved);
            let expect = a * d.quantile(p).unwrap() + b;
            let got = dm.quantile(p).unwrap();
            prop_assert!((expect - got).abs() <= 1e-9 * (1.0 + expect.abs()));
        }
    }
}
