use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cloud::{require_positive, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::geometry::{pack_indices, ConstraintSet};
use crate::vecmath::dist;

/// Where an entropy value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropySource {
    Analytic,
    EstimatedLowerBound,
}

impl EntropySource {
    pub fn name(self) -> &'static str {
        match self {
            EntropySource::Analytic => "analytic",
            EntropySource::EstimatedLowerBound => "estimated-lower-bound",
        }
    }
}

/// `(ε, c) ↦ log N^loc(ε, c)`.
pub trait EntropyOracle: Send + Sync {
    fn log_nloc(&self, eps: f64, c: f64) -> f64;
    fn source(&self) -> EntropySource;
}

/// Closure-backed oracle.
pub struct FnEntropy {
    f: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    source: EntropySource,
}

impl FnEntropy {
    pub fn new(source: EntropySource, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Box::new(f),
            source,
        }
    }

    /// Analytic oracle ignoring `c`.
    pub fn analytic(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(EntropySource::Analytic, move |eps, _| f(eps))
    }
}

impl EntropyOracle for FnEntropy {
    fn log_nloc(&self, eps: f64, c: f64) -> f64 {
        (self.f)(eps, c)
    }
    fn source(&self) -> EntropySource {
        self.source
    }
}

/// Exact local entropy of a segment of the given length: the largest ball
/// section has length `min(2ε, L)` and holds `max(1, ⌈min(2ε, L)·c/ε⌉)`
/// points more than `ε/c` apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentEntropy {
    pub length: f64,
}

impl SegmentEntropy {
    pub fn count(&self, eps: f64, c: f64) -> f64 {
        let span = (2.0 * eps).min(self.length);
        libm::ceil(span / (eps / c)).max(1.0)
    }
}

impl EntropyOracle for SegmentEntropy {
    fn log_nloc(&self, eps: f64, c: f64) -> f64 {
        libm::log(self.count(eps, c))
    }
    fn source(&self) -> EntropySource {
        EntropySource::Analytic
    }
}

/// A local entropy estimate: the largest greedy packing found over the
/// probed centers.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEntropy {
    pub log_n: f64,
    pub count: usize,
    /// Probe center that attained the count.
    pub center: Vec<f64>,
    /// Always true for estimates: probing finitely many centers can only
    /// under-count the supremum.
    pub lower_bound: bool,
}

fn check_args(eps: f64, c: f64) -> Result<()> {
    require_positive("epsilon", eps)?;
    if !(c > 2.0) || !c.is_finite() {
        return Err(invalid(alloc::format!("c must exceed 2, got {c}")));
    }
    Ok(())
}

fn farthest_from(cloud: &PointCloud, p: &[f64]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, q) in cloud.iter().enumerate() {
        let d = dist(p, q);
        if best.is_none_or(|b| d > b.0) {
            best = Some((d, i));
        }
    }
    best.map(|b| b.1)
}

/// Probe centers: the star center, the cloud point farthest from it, the one
/// farthest from that, then seeded random cloud points.
fn probe_centers(
    set: &ConstraintSet,
    cloud: &PointCloud,
    probes: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let push = |p: &[f64], out: &mut Vec<Vec<f64>>| {
        if out.len() < probes && !out.iter().any(|q| q.as_slice() == p) {
            out.push(p.to_vec());
        }
    };
    push(set.star_center(), &mut out);
    if let Some(a) = farthest_from(cloud, set.star_center()) {
        push(cloud.point(a), &mut out);
        if let Some(b) = farthest_from(cloud, cloud.point(a)) {
            push(cloud.point(b), &mut out);
        }
    }
    let want = probes.saturating_sub(out.len()).min(cloud.len());
    if want > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for i in sample(&mut rng, cloud.len(), want).into_vec() {
            push(cloud.point(i), &mut out);
        }
    }
    out
}

/// `log` of the largest greedy `(ε/c)`-packing of `B(θ, ε) ∩ K` over the
/// given centers, skipping centers whose ball misses the cloud.
pub fn local_entropy_at(
    set: &ConstraintSet,
    centers: &[Vec<f64>],
    eps: f64,
    c: f64,
    budget: usize,
    seed: u64,
) -> Result<LocalEntropy> {
    check_args(eps, c)?;
    let (cloud, _) = set.cloud().subsample(budget.max(1), seed);
    best_packing(&cloud, centers, eps, c)
}

fn best_packing(
    cloud: &PointCloud,
    centers: &[Vec<f64>],
    eps: f64,
    c: f64,
) -> Result<LocalEntropy> {
    let mut best: Option<(usize, &Vec<f64>)> = None;
    for center in centers {
        let candidates: Vec<usize> = (0..cloud.len())
            .filter(|&i| dist(cloud.point(i), center) <= eps)
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let k = pack_indices(cloud, &candidates, &[], center, eps / c).len();
        if best.is_none_or(|b| k > b.0) {
            best = Some((k, center));
        }
    }
    let (count, center) = best.ok_or(Error::EmptyIntersection)?;
    Ok(LocalEntropy {
        log_n: libm::log(count as f64),
        count,
        center: center.clone(),
        lower_bound: true,
    })
}

/// Probed lower bound on `log N^loc(ε, c) = log sup_θ N(ε/c, B(θ, ε) ∩ K)`.
pub fn local_entropy(
    set: &ConstraintSet,
    eps: f64,
    c: f64,
    probes: usize,
    budget: usize,
    seed: u64,
) -> Result<LocalEntropy> {
    check_args(eps, c)?;
    if probes == 0 {
        return Err(invalid("probes must be at least 1"));
    }
    let (cloud, _) = set.cloud().subsample(budget.max(1), seed);
    let centers = probe_centers(set, &cloud, probes, seed);
    best_packing(&cloud, &centers, eps, c)
}

/// Cloud-based [`EntropyOracle`] with max-so-far smoothing.
///
/// Raw estimates are taken on the geometric grid `d·2^{-j/4}`, `j = 0..=80`;
/// the value at `ε` is the largest raw estimate at grid points `≥ ε` (the
/// finest grid value below the grid). This is nonincreasing in `ε` and still
/// a lower bound, since the true local entropy is nonincreasing. Tables for
/// the `c` values passed to [`tabulate`](Self::tabulate) are precomputed;
/// other `c` values are evaluated on demand.
#[derive(Clone)]
pub struct LocalEntropyOracle {
    cloud: PointCloud,
    centers: Vec<Vec<f64>>,
    grid: Vec<f64>,
    tables: Vec<(f64, Vec<f64>)>,
    pinned: Vec<(f64, f64, f64)>,
}

const GRID_STEPS: usize = 80;

impl LocalEntropyOracle {
    pub fn new(set: &ConstraintSet, probes: usize, budget: usize, seed: u64) -> Result<Self> {
        if probes == 0 {
            return Err(invalid("probes must be at least 1"));
        }
        let (cloud, _) = set.cloud().subsample(budget.max(1), seed);
        let centers = probe_centers(set, &cloud, probes, seed);
        let d = set.diameter().value;
        let grid = if d > 0.0 {
            (0..=GRID_STEPS)
                .map(|j| d * libm::exp2(-(j as f64) / 4.0))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            cloud,
            centers,
            grid,
            tables: Vec::new(),
            pinned: Vec::new(),
        })
    }

    /// Adds probe centers (for example the nodes of a tree level). Drops any
    /// tables computed so far.
    pub fn with_centers(mut self, extra: impl IntoIterator<Item = Vec<f64>>) -> Self {
        for p in extra {
            if !self.centers.contains(&p) {
                self.centers.push(p);
            }
        }
        self.tables.clear();
        self
    }

    /// Precomputes the smoothed table for each `c`.
    pub fn tabulate(mut self, cs: &[f64]) -> Self {
        for &c in cs {
            if !self.tables.iter().any(|t| t.0 == c) {
                let t = self.table(c);
                self.tables.push((c, t));
            }
        }
        self
    }

    /// Fixes the value at exactly `(eps, c)` to the best packing over the
    /// probe centers and `extra`. Queries at other scales are unaffected.
    pub fn pin(mut self, eps: f64, c: f64, extra: &[Vec<f64>]) -> Self {
        let mut centers = self.centers.clone();
        centers.extend(extra.iter().cloned());
        let v = best_packing(&self.cloud, &centers, eps, c).map_or(0.0, |e| e.log_n);
        self.pinned.retain(|t| !(t.0 == eps && t.1 == c));
        self.pinned.push((eps, c, v));
        self
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    fn raw(&self, eps: f64, c: f64) -> f64 {
        best_packing(&self.cloud, &self.centers, eps, c).map_or(0.0, |e| e.log_n)
    }

    /// Running maxima of raw values from the coarsest grid point down.
    fn table(&self, c: f64) -> Vec<f64> {
        let mut best = 0.0f64;
        self.grid
            .iter()
            .map(|&g| {
                best = best.max(self.raw(g, c));
                best
            })
            .collect()
    }
}

impl EntropyOracle for LocalEntropyOracle {
    fn log_nloc(&self, eps: f64, c: f64) -> f64 {
        if let Some(t) = self.pinned.iter().find(|t| t.0 == eps && t.1 == c) {
            return t.2;
        }
        if self.grid.is_empty() {
            return 0.0;
        }
        // number of grid points >= eps (grid is descending)
        let k = self.grid.partition_point(|&g| g >= eps);
        if k == 0 {
            // above the diameter: every ball is the whole set
            return self.raw(self.grid[0], c).min(self.raw(eps, c));
        }
        match self.tables.iter().find(|t| t.0 == c) {
            Some((_, t)) => t[k - 1],
            None => self.grid[..k]
                .iter()
                .map(|&g| self.raw(g, c))
                .fold(0.0, f64::max),
        }
    }

    fn source(&self) -> EntropySource {
        EntropySource::EstimatedLowerBound
    }
}

/// `ε* = sup{ε ∈ (0, d] : κ ε² ≤ entropy(ε)}` by bisection to within `tol`.
///
/// Returns `d` when the inequality holds at `d`, and `0` when it fails already
/// at `ε = tol`. The result satisfies `κ ε*² ≤ entropy(ε*)` and
/// `κ (ε* + tol)² > entropy(ε* + tol)` for nonincreasing entropies. Queried
/// values that increase with `ε` by more than `tol` raise
/// [`Error::NotMonotone`].
pub fn epsilon_star(entropy: &dyn Fn(f64) -> f64, kappa: f64, d: f64, tol: f64) -> Result<f64> {
    require_positive("kappa", kappa)?;
    require_positive("tol", tol)?;
    if !(d >= 0.0) || !d.is_finite() {
        return Err(invalid("d must be a nonnegative finite number"));
    }
    let mut seen: Vec<(f64, f64)> = Vec::new();
    let mut g = |eps: f64| -> Result<f64> {
        let v = entropy(eps);
        for &(e, w) in &seen {
            let (lo, hi) = if e < eps {
                ((e, w), (eps, v))
            } else {
                ((eps, v), (e, w))
            };
            if hi.1 > lo.1 + tol {
                return Err(Error::NotMonotone {
                    eps_low: lo.0,
                    low: lo.1,
                    eps_high: hi.0,
                    high: hi.1,
                });
            }
        }
        seen.push((eps, v));
        Ok(v - kappa * eps * eps)
    };
    if d <= tol {
        return Ok(if d > 0.0 && g(d)? >= 0.0 { d } else { 0.0 });
    }
    if g(d)? >= 0.0 {
        return Ok(d);
    }
    if g(tol)? < 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (tol, d);
    while hi - lo > 0.5 * tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn epsilon_star_examples() {
        let e = epsilon_star(&|eps| 8.0 / eps, 1.0, 100.0, 1e-10).unwrap();
        assert!((e - 2.0).abs() < 1e-9);
        assert_eq!(epsilon_star(&|_| 0.0, 1.0, 10.0, 1e-6).unwrap(), 0.0);
        let e = epsilon_star(&|_| 1.0, 1.0, 10.0, 1e-10).unwrap();
        assert!((e - 1.0).abs() < 1e-9);
        assert_eq!(epsilon_star(&|_| 1.0, 1.0, 0.5, 1e-6).unwrap(), 0.5);
    }

    #[test]
    fn epsilon_star_flags_increasing_entropy() {
        let r = epsilon_star(&|eps| eps * 10.0, 1.0, 100.0, 1e-6);
        assert!(matches!(r, Err(Error::NotMonotone { .. })));
    }

    #[test]
    fn segment_entropy_example() {
        let s = SegmentEntropy { length: 3.0 };
        assert_eq!(s.count(3.0, 4.0), 4.0);
        assert!((s.log_nloc(3.0, 4.0) - libm::log(4.0)).abs() < 1e-15);
        // a ball of radius ε inside a long segment: span 2ε
        assert_eq!(s.count(0.5, 4.0), 8.0);
    }

    #[test]
    fn segment_local_entropy_matches_exact() {
        let d = 2.0;
        let k = ConstraintSet::segment(vec![0.0, 0.0, 0.0], vec![d, 0.0, 0.0], 1e-3).unwrap();
        let e = local_entropy(&k, d, 4.0, 5, 10_000, 1).unwrap();
        assert_eq!(e.count, 4);
        assert!(e.lower_bound);
    }

    #[test]
    fn singleton_entropy_is_zero() {
        let k = ConstraintSet::singleton(vec![1.0, 2.0]).unwrap();
        let e = local_entropy(&k, 5.0, 4.0, 3, 10, 0).unwrap();
        assert_eq!(e.log_n, 0.0);
    }

    #[test]
    fn bad_arguments() {
        let k = ConstraintSet::singleton(vec![1.0]).unwrap();
        assert!(local_entropy(&k, 1.0, 2.0, 3, 10, 0).is_err());
        assert!(local_entropy(&k, 0.0, 4.0, 3, 10, 0).is_err());
        assert!(local_entropy(&k, 1.0, 4.0, 0, 10, 0).is_err());
    }

    #[test]
    fn oracle_is_nonincreasing() {
        let k = crate::geometry::monotone_lattice_set(1, 16, 1.0, 300, 2).unwrap();
        let o = LocalEntropyOracle::new(&k, 6, 300, 2).unwrap();
        let t = o.clone().tabulate(&[4.0]);
        let mut prev = f64::INFINITY;
        for i in 1..=25 {
            let eps = 0.35 * i as f64;
            let v = o.log_nloc(eps, 4.0);
            assert!(v <= prev + 1e-12);
            assert_eq!(v, t.log_nloc(eps, 4.0));
            prev = v;
        }
    }
}
