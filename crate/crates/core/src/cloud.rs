//! Finite candidate clouds and a pivot-filtered range query over them.

use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::vecmath::{dist, lex_cmp};

/// A finite list of points in `R^dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut cloud = Self::new(dim);
        for row in rows {
            cloud.push(row.as_ref())?;
        }
        Ok(cloud)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, p: &[f64]) -> Result<usize> {
        if p.len() != self.dim {
            return Err(crate::Error::DimensionMismatch {
                expected: self.dim,
                found: p.len(),
            });
        }
        self.coords.extend_from_slice(p);
        Ok(self.len() - 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim.max(1))
    }

    /// Index of an exactly equal point, if any.
    pub fn position(&self, p: &[f64]) -> Option<usize> {
        self.iter().position(|q| q == p)
    }

    /// Keeps at most `budget` points, chosen by a seeded draw without
    /// replacement; the original relative order is preserved.
    pub fn subsample(&self, budget: usize, seed: u64) -> (PointCloud, bool) {
        if self.len() <= budget {
            return (self.clone(), false);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = index::sample(&mut rng, self.len(), budget).into_vec();
        keep.sort_unstable();
        let mut out = PointCloud::new(self.dim);
        for i in keep {
            out.coords.extend_from_slice(self.point(i));
        }
        (out, true)
    }

    /// Indices sorted lexicographically by coordinates, ties by index.
    pub fn lex_order(&self, idx: &mut [usize]) {
        idx.sort_by(|&a, &b| match lex_cmp(self.point(a), self.point(b)) {
            Ordering::Equal => a.cmp(&b),
            o => o,
        });
    }
}

const PIVOTS: usize = 12;

/// Range-query index over a [`PointCloud`].
///
/// Distances to a handful of pivot points are precomputed; a query discards
/// any point whose pivot distances rule it out by the triangle inequality and
/// then confirms survivors with an exact [`dist`] call, so results are exactly
/// those of a linear scan.
#[derive(Debug, Clone)]
pub struct CloudIndex {
    pivots: Vec<usize>,
    table: Vec<f64>,
}

impl CloudIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        let n = cloud.len();
        let mut pivots = Vec::new();
        if n > 0 {
            // farthest-first pivots starting from point 0
            let mut mind = alloc::vec![f64::INFINITY; n];
            let mut next = 0usize;
            for _ in 0..PIVOTS.min(n) {
                pivots.push(next);
                let p = cloud.point(next);
                let mut best = (f64::NEG_INFINITY, 0usize);
                for (i, m) in mind.iter_mut().enumerate() {
                    let d = dist(cloud.point(i), p);
                    if d < *m {
                        *m = d;
                    }
                    if *m > best.0 {
                        best = (*m, i);
                    }
                }
                if best.0 <= 0.0 {
                    break;
                }
                next = best.1;
            }
        }
        let k = pivots.len();
        let mut table = alloc::vec![0.0; n * k];
        for i in 0..n {
            for (j, &p) in pivots.iter().enumerate() {
                table[i * k + j] = dist(cloud.point(i), cloud.point(p));
            }
        }
        Self { pivots, table }
    }

    /// All indices `i` with `dist(cloud[i], center) <= radius`, ascending.
    pub fn within(&self, cloud: &PointCloud, center: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(cloud, center, radius, |i, _| out.push(i));
        out
    }

    pub fn for_each_within(
        &self,
        cloud: &PointCloud,
        center: &[f64],
        radius: f64,
        mut f: impl FnMut(usize, f64),
    ) {
        let k = self.pivots.len();
        let cp: Vec<f64> = self
            .pivots
            .iter()
            .map(|&p| dist(center, cloud.point(p)))
            .collect();
        let slack = radius + 1e-9 * (1.0 + radius);
        'outer: for i in 0..cloud.len() {
            let row = &self.table[i * k..(i + 1) * k];
            for j in 0..k {
                if (row[j] - cp[j]).abs() > slack {
                    continue 'outer;
                }
            }
            let d = dist(cloud.point(i), center);
            if d <= radius {
                f(i, d);
            }
        }
    }

    /// Whether some point of `subset` lies within `radius` of `center`.
    pub fn any_within(
        &self,
        cloud: &PointCloud,
        subset: &[usize],
        center: &[f64],
        radius: f64,
    ) -> bool {
        let k = self.pivots.len();
        let cp: Vec<f64> = self
            .pivots
            .iter()
            .map(|&p| dist(center, cloud.point(p)))
            .collect();
        let slack = radius + 1e-9 * (1.0 + radius);
        'outer: for &i in subset {
            let row = &self.table[i * k..(i + 1) * k];
            for j in 0..k {
                if (row[j] - cp[j]).abs() > slack {
                    continue 'outer;
                }
            }
            if dist(cloud.point(i), center) <= radius {
                return true;
            }
        }
        false
    }
}

pub(crate) fn check_rows(dim: usize, found: usize) -> Result<()> {
    if dim != found {
        return Err(crate::Error::DimensionMismatch {
            expected: dim,
            found,
        });
    }
    Ok(())
}

pub(crate) fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(alloc::format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    #[test]
    fn index_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
            .collect();
        let cloud = PointCloud::from_rows(5, &rows).unwrap();
        let idx = CloudIndex::build(&cloud);
        for q in 0..20 {
            let c = cloud.point(q * 7).to_vec();
            for r in [0.0, 0.1, 0.4, 0.9, 3.0] {
                let fast = idx.within(&cloud, &c, r);
                let slow: Vec<usize> = (0..cloud.len())
                    .filter(|&i| dist(cloud.point(i), &c) <= r)
                    .collect();
                assert_eq!(fast, slow);
            }
        }
    }

    #[test]
    fn subsample_is_seeded_and_ordered() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let cloud = PointCloud::from_rows(1, &rows).unwrap();
        let (a, ta) = cloud.subsample(10, 9);
        let (b, _) = cloud.subsample(10, 9);
        assert!(ta);
        assert_eq!(a, b);
        let v: Vec<f64> = a.iter().map(|p| p[0]).collect();
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!(!cloud.subsample(60, 1).1);
    }
}
