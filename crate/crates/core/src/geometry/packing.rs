use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::cloud::{require_positive, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;
use crate::vecmath::{dist, lex_cmp};

/// A strict packing of `B(ball_center, ball_radius) ∩ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingResult {
    pub centers: Vec<Vec<f64>>,
    /// Separation δ: distinct centers are more than δ apart.
    pub radius: f64,
    pub ball_center: Vec<f64>,
    pub ball_radius: f64,
    /// Maximal relative to the set's full cloud. False when the candidate
    /// cloud had to be truncated to the budget.
    pub is_maximal: bool,
}

/// Farthest-point greedy over `candidates` (cloud indices).
///
/// `seeds` are taken as already chosen. Without seeds the first pick is the
/// candidate nearest `start`. Each further pick maximizes the distance to the
/// chosen set and is accepted while that distance exceeds `separation`. Ties
/// go to the lexicographically smallest point, then the smallest index.
pub fn greedy_pack_indices(
    cloud: &PointCloud,
    candidates: &[usize],
    seeds: &[usize],
    start: &[f64],
    separation: f64,
) -> Vec<usize> {
    let mut chosen: Vec<usize> = seeds.to_vec();
    if candidates.is_empty() {
        return chosen;
    }
    let better = |a: (f64, usize), b: (f64, usize)| -> bool {
        // true if a beats b
        match a.0.total_cmp(&b.0) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => match lex_cmp(cloud.point(a.1), cloud.point(b.1)) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => a.1 < b.1,
            },
        }
    };
    let mut mind = alloc::vec![f64::INFINITY; candidates.len()];
    for &s in &chosen {
        let p = cloud.point(s);
        for (m, &c) in mind.iter_mut().zip(candidates) {
            let d = dist(cloud.point(c), p);
            if d < *m {
                *m = d;
            }
        }
    }
    if chosen.is_empty() {
        let mut best: Option<(f64, usize)> = None;
        for &c in candidates {
            // nearest to start: negate so that `better` picks the max
            let key = (-dist(cloud.point(c), start), c);
            if best.is_none_or(|b| better(key, b)) {
                best = Some(key);
            }
        }
        let first = best.unwrap().1;
        chosen.push(first);
        let p = cloud.point(first);
        for (m, &c) in mind.iter_mut().zip(candidates) {
            *m = m.min(dist(cloud.point(c), p));
        }
    }
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (slot, (&m, &c)) in mind.iter().zip(candidates).enumerate() {
            if best.is_none_or(|b| better((m, c), (b.0, b.1))) {
                best = Some((m, c, slot));
            }
        }
        let Some((m, c, _)) = best else { break };
        if !(m > separation) {
            break;
        }
        chosen.push(c);
        let p = cloud.point(c);
        for (mm, &cc) in mind.iter_mut().zip(candidates) {
            let d = dist(cloud.point(cc), p);
            if d < *mm {
                *mm = d;
            }
        }
    }
    chosen
}

/// Sequential greedy in lexicographic order: a candidate is kept when it is
/// more than `separation` from everything kept so far (seeds included).
/// Optimal on a line.
pub fn scan_pack_indices(
    cloud: &PointCloud,
    candidates: &[usize],
    seeds: &[usize],
    separation: f64,
) -> Vec<usize> {
    let mut order = candidates.to_vec();
    cloud.lex_order(&mut order);
    let mut kept: Vec<usize> = seeds.to_vec();
    for c in order {
        let p = cloud.point(c);
        if kept.iter().all(|&k| dist(cloud.point(k), p) > separation) {
            kept.push(c);
        }
    }
    kept
}

/// The larger of the farthest-point and lexicographic-scan packings (the
/// farthest-point one on ties). Both are maximal relative to `candidates`.
pub fn pack_indices(
    cloud: &PointCloud,
    candidates: &[usize],
    seeds: &[usize],
    start: &[f64],
    separation: f64,
) -> Vec<usize> {
    let far = greedy_pack_indices(cloud, candidates, seeds, start, separation);
    let scan = scan_pack_indices(cloud, candidates, seeds, separation);
    if scan.len() > far.len() {
        scan
    } else {
        far
    }
}

/// Greedy maximal strict packing of `B(ball_center, ball_radius) ∩ K` over the
/// set's candidate cloud, at separation `separation` (see [`pack_indices`]).
///
/// When more than `budget` cloud points exist, a seeded subsample of the cloud
/// of that size is used and the result is not flagged maximal.
pub fn greedy_maximal_packing(
    set: &ConstraintSet,
    ball_center: &[f64],
    ball_radius: f64,
    separation: f64,
    budget: usize,
    seed: u64,
) -> Result<PackingResult> {
    if !set.contains(ball_center) {
        return Err(Error::NotInSet);
    }
    require_positive("separation", separation)?;
    if !(ball_radius >= 0.0) {
        return Err(crate::error::invalid("ball_radius must be nonnegative"));
    }
    let (cloud, truncated) = set.cloud().subsample(budget.max(1), seed);
    let candidates: Vec<usize> = (0..cloud.len())
        .filter(|&i| dist(cloud.point(i), ball_center) <= ball_radius)
        .collect();
    if candidates.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let chosen = pack_indices(&cloud, &candidates, &[], ball_center, separation);
    Ok(PackingResult {
        centers: chosen.iter().map(|&i| cloud.point(i).to_vec()).collect(),
        radius: separation,
        ball_center: ball_center.to_vec(),
        ball_radius,
        is_maximal: !truncated,
    })
}

/// Outcome of [`verify_packing`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PackingCheck {
    /// Center index pairs at distance `<= radius`.
    pub close_pairs: Vec<(usize, usize)>,
    /// Centers outside the ball or outside `K`.
    pub misplaced: Vec<usize>,
    /// Cloud points of the ball not covered within `radius` (only checked for
    /// results flagged maximal).
    pub uncovered: Vec<Vec<f64>>,
}

impl PackingCheck {
    pub fn is_valid(&self) -> bool {
        self.close_pairs.is_empty() && self.misplaced.is_empty() && self.uncovered.is_empty()
    }
}

/// Re-checks every [`PackingResult`] invariant against `set`.
pub fn verify_packing(result: &PackingResult, set: &ConstraintSet) -> PackingCheck {
    let mut check = PackingCheck::default();
    let c = &result.centers;
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            if !(dist(&c[i], &c[j]) > result.radius) {
                check.close_pairs.push((i, j));
            }
        }
        if !set.contains(&c[i]) || !(dist(&c[i], &result.ball_center) <= result.ball_radius) {
            check.misplaced.push(i);
        }
    }
    if result.is_maximal {
        for p in set.cloud().iter() {
            if dist(p, &result.ball_center) <= result.ball_radius
                && !c.iter().any(|q| dist(p, q) <= result.radius)
            {
                check.uncovered.push(p.to_vec());
            }
        }
    }
    check
}
