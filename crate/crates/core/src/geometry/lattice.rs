use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{require_positive, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ConstraintSet, Diameter, Region};

/// Vectors `θ ∈ [-M, M]^n` indexed by the lattice `{1/m, …, 1}^q` (with
/// `m^q = n`, row-major, last axis fastest) that are nondecreasing along every
/// lattice edge.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneLattice {
    q: usize,
    side: usize,
    n: usize,
    m: f64,
}

impl MonotoneLattice {
    pub fn new(q: usize, n: usize, m: f64) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(invalid("q and n must be positive"));
        }
        require_positive("M", m)?;
        let side = integer_root(n, q).ok_or(Error::LatticeSize { q, n })?;
        Ok(Self { q, side, n, m })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn box_bound(&self) -> f64 {
        self.m
    }

    fn stride(&self, axis: usize) -> usize {
        self.side.pow((self.q - 1 - axis) as u32)
    }

    /// Lattice coordinates (0-based) of index `i`.
    pub fn coords(&self, mut i: usize) -> Vec<usize> {
        let mut c = alloc::vec![0; self.q];
        for axis in (0..self.q).rev() {
            c[axis] = i % self.side;
            i /= self.side;
        }
        c
    }

    /// All lattice edges `(i, j)` with `l_i ≤ l_j` differing by one step on
    /// a single axis. There are `q (n − n^{(q−1)/q})` of them.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            let c = self.coords(i);
            (0..self.q)
                .filter(move |&axis| c[axis] + 1 < self.side)
                .map(move |axis| (i, i + self.stride(axis)))
        })
    }

    /// Draws a monotone vector: sorted uniforms for `q = 1`; for `q ≥ 2`,
    /// uniforms on `[0, 1]` made monotone by running cumulative maxima along
    /// each axis in turn, then mapped affinely onto `[-M, M]`.
    pub fn sample_monotone(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.n).map(|_| rng.random::<f64>()).collect();
        if self.q == 1 {
            v.sort_by(|a, b| a.total_cmp(b));
        } else {
            for axis in 0..self.q {
                let stride = self.stride(axis);
                for i in 0..self.n {
                    if self.coords(i)[axis] > 0 {
                        let prev = v[i - stride];
                        if prev > v[i] {
                            v[i] = prev;
                        }
                    }
                }
            }
        }
        v.iter().map(|x| -self.m + 2.0 * self.m * x).collect()
    }

    fn level_sum(&self, i: usize) -> usize {
        self.coords(i).iter().sum()
    }
}

fn integer_root(n: usize, q: usize) -> Option<usize> {
    let guess = libm::round(libm::pow(n as f64, 1.0 / q as f64)) as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&s| s > 0 && s.checked_pow(q as u32) == Some(n))
}

impl Region for MonotoneLattice {
    fn dim(&self) -> usize {
        self.n
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.n
            && x.iter().all(|v| v.abs() <= self.m)
            && self.edges().all(|(i, j)| x[i] <= x[j])
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.sample_monotone(rng)
    }
}

/// The monotone lattice class as a [`ConstraintSet`].
///
/// Star center is `0`, the diameter `2M√n` is exact. The cloud holds up to
/// `cloud_budget` points: constant vectors at 9 levels, two-level threshold
/// functions on the lattice level sets (at most a quarter of the budget,
/// evenly thinned), then sampled monotone vectors, a quarter of which are
/// shrunk toward the center by a uniform factor.
pub fn monotone_lattice_set(
    q: usize,
    n: usize,
    m: f64,
    cloud_budget: usize,
    seed: u64,
) -> Result<ConstraintSet> {
    let lattice = MonotoneLattice::new(q, n, m)?;
    if cloud_budget == 0 {
        return Err(invalid("cloud_budget must be positive"));
    }
    let mut cloud = PointCloud::new(n);
    for k in 0..9 {
        let level = -m + 2.0 * m * k as f64 / 8.0;
        cloud.push(&alloc::vec![level; n])?;
    }
    let levels = [-m, -0.5 * m, 0.0, 0.5 * m, m];
    let max_sum = q * (lattice.side - 1);
    let mut steps = Vec::new();
    for tau in 1..=max_sum {
        for a in 0..levels.len() {
            for b in a + 1..levels.len() {
                steps.push((tau, levels[a], levels[b]));
            }
        }
    }
    let room = (cloud_budget / 4).saturating_sub(cloud.len());
    if !steps.is_empty() && room > 0 {
        let stride = steps.len().div_ceil(room);
        for &(tau, lo, hi) in steps.iter().step_by(stride.max(1)) {
            let v: Vec<f64> = (0..n)
                .map(|i| if lattice.level_sum(i) >= tau { hi } else { lo })
                .collect();
            cloud.push(&v)?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let remaining = cloud_budget.saturating_sub(cloud.len());
    for k in 0..remaining {
        let mut v = lattice.sample_monotone(&mut rng);
        if k % 4 == 3 {
            let t: f64 = rng.random();
            v.iter_mut().for_each(|x| *x *= t);
        }
        cloud.push(&v)?;
    }
    let (cloud, _) = cloud.subsample(cloud_budget, seed);
    let diameter = Diameter {
        value: 2.0 * m * libm::sqrt(n as f64),
        exact: true,
    };
    ConstraintSet::from_parts(
        Arc::new(lattice),
        alloc::vec![0.0; n],
        diameter,
        cloud,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn brute_force_member(l: &MonotoneLattice, x: &[f64]) -> bool {
        if x.iter().any(|v| v.abs() > l.box_bound()) {
            return false;
        }
        for i in 0..l.n() {
            for j in 0..l.n() {
                let (ci, cj) = (l.coords(i), l.coords(j));
                if ci.iter().zip(&cj).all(|(a, b)| a <= b) && x[i] > x[j] {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn q2_examples() {
        let l = MonotoneLattice::new(2, 4, 2.0).unwrap();
        assert_eq!(l.coords(1), vec![0, 1]);
        assert!(l.contains(&[0.0, 1.0, 1.0, 2.0]));
        assert!(!l.contains(&[0.0, -1.0, 1.0, 2.0]));
        assert!(l.contains(&[2.0; 4]));
        assert_eq!(l.edges().count(), 4);
    }

    #[test]
    fn edge_count_formula() {
        for (q, n) in [(1, 7), (2, 9), (2, 16), (3, 27), (4, 16)] {
            let l = MonotoneLattice::new(q, n, 1.0).unwrap();
            let side = l.side();
            let expected = q * (n - side.pow(q as u32 - 1));
            assert_eq!(l.edges().count(), expected);
        }
    }

    #[test]
    fn lattice_size_error() {
        assert_eq!(
            MonotoneLattice::new(2, 5, 1.0),
            Err(Error::LatticeSize { q: 2, n: 5 })
        );
        assert!(MonotoneLattice::new(3, 64, 1.0).is_ok());
    }

    #[test]
    fn membership_agrees_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (q, n) in [(1, 9), (2, 9), (2, 16), (3, 27), (4, 81), (2, 81)] {
            let l = MonotoneLattice::new(q, n, 1.0).unwrap();
            for trial in 0..40 {
                let mut x = l.sample_monotone(&mut rng);
                if trial % 2 == 1 {
                    let i = rng.random_range(0..n);
                    x[i] = rng.random_range(-1.2..1.2);
                }
                assert_eq!(l.contains(&x), brute_force_member(&l, &x));
            }
        }
    }

    #[test]
    fn set_properties() {
        let k = monotone_lattice_set(1, 16, 1.0, 400, 3).unwrap();
        assert_eq!(k.cloud().len(), 400);
        assert!(k.contains(k.star_center()));
        assert_eq!(k.diameter().value, 8.0);
        assert!(k.star_spot_check(1000, 9).is_ok());
        let k2 = monotone_lattice_set(2, 16, 1.0, 200, 3).unwrap();
        assert!(k2.cloud().iter().all(|p| k2.contains(p)));
        let top = vec![1.0; 16];
        let bottom = vec![-1.0; 16];
        assert!(k2.contains(&top) && k2.contains(&bottom));
        assert_eq!(crate::dist(&top, &bottom), k2.diameter().value);
    }
}
