//! Deterministic synthetic populations.
//!
//! Each group draws from its own ChaCha8 stream whose 256-bit seed is
//! `SHA-256("otfair-synth" || seed as u64 LE || key values, each followed by
//! 0x1F)`. A group's draws therefore depend only on the run seed and its own
//! key, never on which other groups are generated or in what order.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Uniform};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::population::{GroupKey, ScoreRecord};

/// Seed of the canonical two-gaussian scenario.
pub const DEFAULT_SEED: u64 = 42;

/// Per-dimension score distribution.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DimDistribution {
    Gaussian { mean: f64, sd: f64 },
    Beta { a: f64, b: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl DimDistribution {
    fn check(&self) -> Result<()> {
        let ok = match *self {
            DimDistribution::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            DimDistribution::Beta { a, b } => a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0,
            DimDistribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid distribution parameters {self:?}")))
        }
    }
}

enum Sampler {
    Normal(Normal<f64>),
    Beta(Beta<f64>),
    Uniform(Uniform<f64>),
}

impl Sampler {
    fn new(d: &DimDistribution) -> Result<Self> {
        d.check()?;
        let bad = |e: &dyn std::fmt::Display| Error::validation(format!("{d:?}: {e}"));
        Ok(match *d {
            DimDistribution::Gaussian { mean, sd } => Sampler::Normal(Normal::new(mean, sd).map_err(|e| bad(&e))?),
            DimDistribution::Beta { a, b } => Sampler::Beta(Beta::new(a, b).map_err(|e| bad(&e))?),
            DimDistribution::Uniform { lo, hi } => Sampler::Uniform(Uniform::new(lo, hi).map_err(|e| bad(&e))?),
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Normal(d) => d.sample(rng),
            Sampler::Beta(d) => d.sample(rng),
            Sampler::Uniform(d) => d.sample(rng),
        }
    }
}

/// One synthetic group: its key, size, and one distribution per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub key: GroupKey,
    pub size: usize,
    pub dims: Vec<DimDistribution>,
}

impl GroupSpec {
    pub fn gaussian(key: GroupKey, size: usize, mean: f64, sd: f64) -> Self {
        GroupSpec {
            key,
            size,
            dims: vec![DimDistribution::Gaussian { mean, sd }],
        }
    }
}

/// The canonical fixture: groups A ~ N(0.4, 0.1) and B ~ N(0.6, 0.1), 1000
/// members each.
pub fn two_gaussian_specs() -> Vec<GroupSpec> {
    vec![
        GroupSpec::gaussian(GroupKey::new(["A"]), 1000, 0.4, 0.1),
        GroupSpec::gaussian(GroupKey::new(["B"]), 1000, 0.6, 0.1),
    ]
}

fn group_rng(seed: u64, key: &GroupKey) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"otfair-synth");
    h.update(seed.to_le_bytes());
    for v in key.values() {
        h.update(v.as_bytes());
        h.update([0x1f]);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Records for every spec, ordered by group key then draw index, with ids
/// `<group>-<index>`.
pub fn generate_synthetic(specs: &[GroupSpec], seed: u64) -> Result<Vec<ScoreRecord>> {
    if specs.is_empty() {
        return Err(Error::validation("no group specs given"));
    }
    let mut seen = BTreeSet::new();
    for spec in specs {
        if spec.size == 0 {
            return Err(Error::validation(format!("group {} has size 0", spec.key)));
        }
        if spec.dims.is_empty() {
            return Err(Error::validation(format!("group {} has no score dimensions", spec.key)));
        }
        if spec.dims.len() != specs[0].dims.len() {
            return Err(Error::validation("all groups must have the same number of score dimensions"));
        }
        if spec.key.len() != specs[0].key.len() || spec.key.is_empty() {
            return Err(Error::validation("all group keys must have the same positive length"));
        }
        if !seen.insert(&spec.key) {
            return Err(Error::validation(format!("group {} specified twice", spec.key)));
        }
    }

    let mut ordered: Vec<&GroupSpec> = specs.iter().collect();
    ordered.sort_by(|a, b| a.key.cmp(&b.key));

    let mut out = Vec::with_capacity(specs.iter().map(|s| s.size).sum());
    for spec in ordered {
        let samplers = spec.dims.iter().map(Sampler::new).collect::<Result<Vec<_>>>()?;
        let mut rng = group_rng(seed, &spec.key);
        for i in 0..spec.size {
            let score = samplers.iter().map(|s| s.draw(&mut rng)).collect();
            out.push(ScoreRecord::new(
                format!("{}-{i}", spec.key),
                spec.key.values().to_vec(),
                score,
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::build_population;

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&two_gaussian_specs(), 7).unwrap();
        let b = generate_synthetic(&two_gaussian_specs(), 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&two_gaussian_specs(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn group_order_does_not_perturb_draws() {
        let mut specs = two_gaussian_specs();
        let a = generate_synthetic(&specs, 3).unwrap();
        specs.reverse();
        assert_eq!(generate_synthetic(&specs, 3).unwrap(), a);
        // Dropping group A leaves B's draws unchanged.
        let only_b = generate_synthetic(&specs[..1], 3).unwrap();
        assert_eq!(only_b[..], a[1000..]);
    }

    #[test]
    fn gaussian_mean_within_three_standard_errors() {
        let spec = GroupSpec::gaussian(GroupKey::new(["G"]), 10_000, 0.5, 0.1);
        let recs = generate_synthetic(&[spec], DEFAULT_SEED).unwrap();
        let mean = recs.iter().map(|r| r.score[0]).sum::<f64>() / recs.len() as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }

    #[test]
    fn counts_and_ids() {
        let specs = vec![
            GroupSpec::gaussian(GroupKey::new(["x"]), 100, 0.0, 1.0),
            GroupSpec::gaussian(GroupKey::new(["y"]), 200, 0.0, 1.0),
        ];
        let recs = generate_synthetic(&specs, 1).unwrap();
        assert_eq!(recs.len(), 300);
        assert_eq!(recs[0].id, "x-0");
        assert_eq!(recs[299].id, "y-199");
        let pop = build_population(recs, 1).unwrap();
        let sizes: Vec<usize> = pop.groups().values().map(Vec::len).collect();
        assert_eq!(sizes, vec![100, 200]);
    }

    #[test]
    fn beta_and_uniform_moments() {
        let spec = GroupSpec {
            key: GroupKey::new(["m"]),
            size: 20_000,
            dims: vec![DimDistribution::Beta { a: 2.0, b: 5.0 }, DimDistribution::Uniform { lo: -1.0, hi: 3.0 }],
        };
        let recs = generate_synthetic(&[spec], 11).unwrap();
        let n = recs.len() as f64;
        let m0 = recs.iter().map(|r| r.score[0]).sum::<f64>() / n;
        let m1 = recs.iter().map(|r| r.score[1]).sum::<f64>() / n;
        // Means 2/7 and 1; standard errors ~0.0011 and ~0.0082.
        assert!((m0 - 2.0 / 7.0).abs() < 4.0 * 0.16 / n.sqrt(), "{m0}");
        assert!((m1 - 1.0).abs() < 4.0 * 1.155 / n.sqrt(), "{m1}");
        assert!(recs.iter().all(|r| (0.0..=1.0).contains(&r.score[0])));
    }

    #[test]
    fn moments_converge_at_root_n_rate() {
        for n in [400, 1600, 6400] {
            let spec = GroupSpec::gaussian(GroupKey::new(["G"]), n, 0.6, 0.1);
            let recs = generate_synthetic(&[spec], DEFAULT_SEED).unwrap();
            let mean = recs.iter().map(|r| r.score[0]).sum::<f64>() / n as f64;
            let var = recs.iter().map(|r| (r.score[0] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((mean - 0.6).abs() < 4.0 * 0.1 / (n as f64).sqrt());
            // sd of the sample variance is about sigma^2 * sqrt(2 / n).
            assert!((var - 0.01).abs() < 4.0 * 0.01 * (2.0 / n as f64).sqrt());
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = [
            DimDistribution::Gaussian { mean: 0.0, sd: 0.0 },
            DimDistribution::Beta { a: -1.0, b: 1.0 },
            DimDistribution::Uniform { lo: 1.0, hi: 1.0 },
        ];
        for d in bad {
            let spec = GroupSpec {
                key: GroupKey::new(["k"]),
                size: 3,
                dims: vec![d],
            };
            assert!(generate_synthetic(&[spec], 0).is_err());
        }
        assert!(generate_synthetic(&[], 0).is_err());
        let mut twice = two_gaussian_specs();
        twice[1].key = twice[0].key.clone();
        assert!(generate_synthetic(&twice, 0).is_err());
    }
}
