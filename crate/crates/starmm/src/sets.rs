//! Built-in constraint sets by tag, with their analytic entropy oracles and
//! truth samplers.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use starmm_core::bounds::monotone_entropy;
use starmm_core::geometry::{
    monotone_lattice_set, ConstraintSet, EntropyOracle, FnEntropy, MonotoneLattice, SegmentEntropy,
};

use crate::error::{Error, Result};

/// Constraint set constructors by tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SetKind {
    /// Monotone functions on the `q`-dimensional lattice with `n` points.
    Monotone { q: usize },
    /// The box diagonal from `−M·1` to `M·1`, sampled every `resolution`.
    Segment { resolution: f64 },
    /// `{0}`.
    Singleton,
}

impl SetKind {
    pub fn parse(tag: &str, q: usize, resolution: f64) -> Result<Self> {
        match tag {
            "monotone" => {
                if q == 0 {
                    return Err(Error::config("q must be at least 1"));
                }
                Ok(SetKind::Monotone { q })
            }
            "segment" => {
                if !(resolution > 0.0) {
                    return Err(Error::config("segment resolution must be positive"));
                }
                Ok(SetKind::Segment { resolution })
            }
            "singleton" => Ok(SetKind::Singleton),
            other => Err(Error::config(format!(
                "unknown set {other:?} (expected monotone, segment or singleton)"
            ))),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            SetKind::Monotone { .. } => "monotone",
            SetKind::Segment { .. } => "segment",
            SetKind::Singleton => "singleton",
        }
    }

    /// Builds the set in dimension `n`.
    pub fn build(&self, n: usize, m: f64, budget: usize, seed: u64) -> Result<ConstraintSet> {
        if n == 0 {
            return Err(Error::config("n must be at least 1"));
        }
        Ok(match *self {
            SetKind::Monotone { q } => monotone_lattice_set(q, n, m, budget, seed)?,
            SetKind::Segment { resolution } => {
                ConstraintSet::segment(vec![-m; n], vec![m; n], resolution)?
            }
            SetKind::Singleton => ConstraintSet::singleton(vec![0.0; n])?,
        })
    }

    /// Closed-form local entropy with unit hidden constants.
    pub fn analytic_entropy(&self, n: usize, m: f64) -> Arc<dyn EntropyOracle> {
        match *self {
            SetKind::Monotone { q } => {
                Arc::new(FnEntropy::analytic(move |e| monotone_entropy(q, n, m, e)))
            }
            SetKind::Segment { .. } => Arc::new(SegmentEntropy {
                length: 2.0 * m * (n as f64).sqrt(),
            }),
            SetKind::Singleton => Arc::new(FnEntropy::analytic(|_| 0.0)),
        }
    }

    /// A random member: sorted uniforms (`q = 1`) or cumulative maxima
    /// (`q ≥ 2`) for monotone sets, a uniform position on the segment, the
    /// point itself for the singleton.
    pub fn sample_truth(&self, n: usize, m: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(match *self {
            SetKind::Monotone { q } => MonotoneLattice::new(q, n, m)?.sample_monotone(rng),
            SetKind::Segment { .. } => {
                let t: f64 = rng.random_range(-1.0..=1.0);
                vec![t * m; n]
            }
            SetKind::Singleton => vec![0.0; n],
        })
    }

    /// Total squared risk scale predicted for the class, when one is known.
    pub fn predicted_exponent(&self) -> Option<f64> {
        match *self {
            SetKind::Monotone { q } => starmm_core::bounds::monotone_rate(q, 2.0)
                .ok()
                .map(|r| r.exponent),
            _ => None,
        }
    }
}

impl fmt::Display for SetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn built_sets_contain_their_truths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in [
            SetKind::Monotone { q: 1 },
            SetKind::Monotone { q: 2 },
            SetKind::Segment { resolution: 0.05 },
            SetKind::Singleton,
        ] {
            let k = kind.build(16, 1.0, 200, 1).unwrap();
            for _ in 0..20 {
                let t = kind.sample_truth(16, 1.0, &mut rng).unwrap();
                assert!(k.contains(&t), "{kind}");
            }
        }
    }

    #[test]
    fn parse_rejects_unknown_tags() {
        assert!(SetKind::parse("ball", 1, 0.1).is_err());
        assert!(SetKind::parse("monotone", 0, 0.1).is_err());
        assert!(SetKind::parse("segment", 1, 0.0).is_err());
        assert_eq!(
            SetKind::parse("monotone", 3, 0.0).unwrap(),
            SetKind::Monotone { q: 3 }
        );
    }

    #[test]
    fn analytic_entropies() {
        let e = SetKind::Monotone { q: 1 }.analytic_entropy(64, 1.0);
        assert!((e.log_nloc(1.0, 16.0) - 128f64.sqrt()).abs() < 1e-12);
        assert_eq!(
            SetKind::Singleton
                .analytic_entropy(4, 1.0)
                .log_nloc(0.1, 16.0),
            0.0
        );
        assert!(
            (SetKind::Monotone { q: 3 }.predicted_exponent().unwrap() - 2.0 / 3.0).abs() < 1e-12
        );
    }
}
