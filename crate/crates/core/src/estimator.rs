//! Likelihood domination, H-scores, the `J*` stopping rule and the tree
//! traversal that produces the estimate.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::cloud::check_rows;
use crate::error::{invalid, Error, Result};
use crate::expfam::{cumulant_constants, log_likelihood, ExponentialFamily, FamilyConstants};
use crate::geometry::{ConstraintSet, EntropyOracle, LocalEntropyOracle};
use crate::tree::{
    build_tree, pow2, tree_entropy_oracle, verify_tree, PathCheck, PrunedTree, TreeOptions,
    DEFAULT_NODE_CAP,
};
use crate::vecmath::dist;

/// Largest `J` scanned by [`compute_j_star`].
pub const J_SCAN_LIMIT: usize = 64;

/// Which local entropy enters the `J*` condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JStarRule {
    /// `N^loc(c ε_J, 2c)`.
    DoubleC,
    /// `N^loc(c ε_J, c)`.
    SingleC,
}

impl JStarRule {
    pub fn name(self) -> &'static str {
        match self {
            JStarRule::DoubleC => "2c",
            JStarRule::SingleC => "c",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "2c" => Some(JStarRule::DoubleC),
            "c" => Some(JStarRule::SingleC),
            _ => None,
        }
    }

    fn entropy_c(self, c: f64) -> f64 {
        match self {
            JStarRule::DoubleC => 2.0 * c,
            JStarRule::SingleC => c,
        }
    }
}

/// Estimator constants and resource knobs. Ties are always broken
/// lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Separation multiplier `C > 2`.
    pub big_c: f64,
    /// Overrides `c = 2(C+1)`.
    pub c: Option<f64>,
    /// Overrides the family's default `κ(M)`.
    pub kappa: Option<f64>,
    pub jstar_override: Option<usize>,
    /// Traversal steps; defaults to `J* + extra_steps`, must not be below `J*`.
    pub steps: Option<usize>,
    pub extra_steps: usize,
    pub rule: JStarRule,
    /// Candidate cloud budget for tree building and entropy estimates.
    pub budget: usize,
    pub node_cap: usize,
    pub seed: u64,
    /// Probe centers for estimated local entropy.
    pub probes: usize,
    /// Grid size for the curvature constants.
    pub grid_size: usize,
    /// Invariant check run on every built tree (`None` skips it).
    pub verify: Option<PathCheck>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            big_c: 7.0,
            c: None,
            kappa: None,
            jstar_override: None,
            steps: None,
            extra_steps: 0,
            rule: JStarRule::DoubleC,
            budget: 2000,
            node_cap: DEFAULT_NODE_CAP,
            seed: 0,
            probes: 8,
            grid_size: 1024,
            verify: Some(PathCheck::Sampled(100)),
        }
    }
}

impl EstimatorConfig {
    pub fn c(&self) -> f64 {
        self.c.unwrap_or(2.0 * (self.big_c + 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.big_c > 2.0) || !self.big_c.is_finite() {
            return Err(invalid(alloc::format!(
                "C must exceed 2, got {}",
                self.big_c
            )));
        }
        if !(self.c() >= 2.0) || !self.c().is_finite() {
            return Err(invalid(alloc::format!(
                "c must be at least 2, got {}",
                self.c()
            )));
        }
        if let Some(k) = self.kappa {
            crate::cloud::require_positive("kappa", k)?;
        }
        if self.budget == 0 || self.probes == 0 {
            return Err(invalid("budget and probes must be positive"));
        }
        if self.steps == Some(0) || self.jstar_override == Some(0) {
            return Err(invalid("steps and J* must be at least 1"));
        }
        Ok(())
    }
}

/// `ε_J = d/(2^{J−1}(C+1))`.
pub fn eps_j(d: f64, big_c: f64, j: usize) -> f64 {
    d / (pow2(j - 1) * (big_c + 1.0))
}

/// `Σ (θᵅᵢ − θᵝᵢ) T(yᵢ) + A(θᵝᵢ) − A(θᵅᵢ)`, i.e. `ℓ(θᵅ) − ℓ(θᵝ)`.
pub fn domination_statistic(
    family: &ExponentialFamily,
    y: &[f64],
    theta_a: &[f64],
    theta_b: &[f64],
) -> Result<f64> {
    check_rows(y.len(), theta_a.len())?;
    check_rows(y.len(), theta_b.len())?;
    family.check_box(theta_a)?;
    family.check_box(theta_b)?;
    let mut s = 0.0;
    for i in 0..y.len() {
        let t = family.sufficient_statistic(y[i]);
        s += (theta_a[i] - theta_b[i]) * t + family.cumulant(theta_b[i])
            - family.cumulant(theta_a[i]);
    }
    Ok(s)
}

/// Whether `θᵝ` dominates `θᵅ`: the statistic is `≤ 0`.
pub fn dominates(
    family: &ExponentialFamily,
    y: &[f64],
    theta_a: &[f64],
    theta_b: &[f64],
) -> Result<bool> {
    Ok(domination_statistic(family, y, theta_a, theta_b)? <= 0.0)
}

/// `H(δ, θᵅ, S)`: the largest `‖θᵅ − θᵝ‖` over `θᵝ ∈ S` that dominate `θᵅ`
/// at distance `≥ Cδ`; `0` if there is none.
pub fn h_score(
    family: &ExponentialFamily,
    y: &[f64],
    delta: f64,
    theta_a: &[f64],
    s: &[&[f64]],
    big_c: f64,
) -> Result<f64> {
    let mut h = 0.0f64;
    for b in s {
        let dd = dist(theta_a, b);
        if dd >= big_c * delta && dominates(family, y, theta_a, b)? {
            h = h.max(dd);
        }
    }
    Ok(h)
}

/// H-scores of every member of `points` against the whole list, from cached
/// log-likelihoods.
fn h_scores_cached(points: &[&[f64]], ll: &[f64], threshold: f64) -> Vec<f64> {
    (0..points.len())
        .map(|a| {
            let mut h = 0.0f64;
            for b in 0..points.len() {
                if ll[a] - ll[b] <= 0.0 {
                    let dd = dist(points[a], points[b]);
                    if dd >= threshold && dd > h {
                        h = dd;
                    }
                }
            }
            h
        })
        .collect()
}

/// Index of the minimal score; `points` is expected in lexicographic order,
/// so the first minimum is the lexicographic tie-break.
fn argmin_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

/// Picks `argmin_θ H(δ, θ, S)` over `S` with lexicographic tie-breaking.
/// Returns the index into `s` and all scores.
pub fn select(
    family: &ExponentialFamily,
    y: &[f64],
    delta: f64,
    s: &[&[f64]],
    big_c: f64,
) -> Result<(usize, Vec<f64>)> {
    if s.is_empty() {
        return Err(invalid("empty candidate set"));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| crate::lex_cmp(s[a], s[b]).then(a.cmp(&b)));
    let pts: Vec<&[f64]> = order.iter().map(|&i| s[i]).collect();
    let ll = pts
        .iter()
        .map(|p| log_likelihood(family, p, y))
        .collect::<Result<Vec<f64>>>()?;
    let scores = h_scores_cached(&pts, &ll, big_c * delta);
    let best = order[argmin_first(&scores)];
    let mut by_input = alloc::vec![0.0; s.len()];
    for (slot, &i) in order.iter().enumerate() {
        by_input[i] = scores[slot];
    }
    Ok((best, by_input))
}

/// `J*`: the largest `J ≥ 1` with `κ ε_J² > max(2 log(N²), log 2)`, where
/// `N = N^loc(c ε_J, ·)` per `rule`. Scans upward from `J = 1` and stops at
/// the first failure; `1` when `J = 1` already fails.
pub fn compute_j_star(
    d: f64,
    big_c: f64,
    kappa: f64,
    c: f64,
    entropy: &dyn Fn(f64, f64) -> f64,
    rule: JStarRule,
) -> usize {
    let ec = rule.entropy_c(c);
    let mut best = 1;
    for j in 1..=J_SCAN_LIMIT {
        let e = eps_j(d, big_c, j);
        let log_n = entropy(c * e, ec);
        let rhs = (4.0 * log_n).max(core::f64::consts::LN_2);
        if kappa * e * e > rhs {
            best = j;
        } else {
            break;
        }
    }
    best
}

/// One traversal step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    /// Level of the chosen node (`step + 1`).
    pub level: usize,
    /// `ε_J = d/(2^{J−1}(C+1))` for `J = level`, which is the step's `δ`.
    pub eps: f64,
    pub chosen: usize,
    pub h_min: f64,
    /// `(node id, H)` for the offspring of the previous node, in
    /// lexicographic order.
    pub scores: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalTrace {
    pub root: usize,
    pub path: Vec<TraceStep>,
    /// Level reached.
    pub stopped_at: usize,
    pub estimate: Vec<f64>,
}

impl TraversalTrace {
    pub fn epsilons(&self) -> Vec<f64> {
        self.path.iter().map(|s| s.eps).collect()
    }

    pub fn node_path(&self) -> Vec<usize> {
        core::iter::once(self.root)
            .chain(self.path.iter().map(|s| s.chosen))
            .collect()
    }
}

/// Walks `steps` levels down from the root, moving at step `k` to the
/// offspring of `Υ_k` with minimal `H(d/(2^k(C+1)), ·, O(Υ_k))`.
pub fn traverse(
    tree: &PrunedTree,
    family: &ExponentialFamily,
    y: &[f64],
    big_c: f64,
    steps: usize,
) -> Result<TraversalTrace> {
    check_rows(tree.dim(), y.len())?;
    if steps == 0 {
        return Err(invalid("steps must be at least 1"));
    }
    if tree.depth() < steps + 1 {
        return Err(Error::DepthExceeded {
            requested: steps + 1,
            depth: tree.depth(),
        });
    }
    let d = tree.params().d;
    let mut current = tree.root();
    let mut path = Vec::with_capacity(steps);
    for k in 1..=steps {
        let delta = d / (pow2(k) * (big_c + 1.0));
        let mut kids = tree.offspring(current).to_vec();
        tree.lex_sort(&mut kids);
        let pts: Vec<&[f64]> = kids.iter().map(|&id| tree.point(id)).collect();
        let ll = pts
            .iter()
            .map(|p| log_likelihood(family, p, y))
            .collect::<Result<Vec<f64>>>()?;
        let scores = h_scores_cached(&pts, &ll, big_c * delta);
        let best = argmin_first(&scores);
        current = kids[best];
        path.push(TraceStep {
            step: k,
            level: k + 1,
            eps: delta,
            chosen: current,
            h_min: scores[best],
            scores: kids.iter().copied().zip(scores.iter().copied()).collect(),
        });
    }
    Ok(TraversalTrace {
        root: tree.root(),
        path,
        stopped_at: steps + 1,
        estimate: tree.point(current).to_vec(),
    })
}

/// A tree built once for a (set, family, config) triple, ready to estimate
/// from any number of observation vectors.
pub struct PreparedEstimator {
    family: ExponentialFamily,
    constants: FamilyConstants,
    config: EstimatorConfig,
    j_star: usize,
    steps: usize,
    tree: PrunedTree,
    entropy: Arc<dyn EntropyOracle>,
}

impl PreparedEstimator {
    /// Constants, entropy oracle (the given analytic one, else a probed
    /// lower bound), `J*`, and a tree of depth `max(J*+2, steps+1)`.
    pub fn new(
        set: &ConstraintSet,
        family: &ExponentialFamily,
        config: &EstimatorConfig,
        analytic: Option<Arc<dyn EntropyOracle>>,
    ) -> Result<Self> {
        config.validate()?;
        let mut constants = cumulant_constants(family, config.grid_size)?;
        if let Some(k) = config.kappa {
            constants = constants.with_kappa(k);
        }
        let c = config.c();
        let d = set.diameter().value;
        let entropy: Arc<dyn EntropyOracle> = match analytic {
            Some(e) => e,
            None => Arc::new(
                LocalEntropyOracle::new(set, config.probes, config.budget, config.seed)?
                    .tabulate(&[c, 2.0 * c]),
            ),
        };
        let j_star = match config.jstar_override {
            Some(j) => j,
            None => compute_j_star(
                d,
                config.big_c,
                constants.kappa,
                c,
                &|e, cc| entropy.log_nloc(e, cc),
                config.rule,
            ),
        };
        let steps = config.steps.unwrap_or(j_star + config.extra_steps);
        if steps < j_star {
            return Err(invalid(alloc::format!(
                "steps={steps} is below J*={j_star}"
            )));
        }
        let jmax = (j_star + 2).max(steps + 1);
        let options = TreeOptions {
            budget: config.budget,
            seed: config.seed,
            node_cap: config.node_cap,
            entropy: None,
            verify: None,
        };
        let mut tree = build_tree(set, set.star_center(), c, jmax, &options)?;
        if let Some(mode) = config.verify {
            // closed forms hide their constants, so cardinality is checked against the cloud
            let check = tree_entropy_oracle(&tree, set, config.probes, config.budget, config.seed)?;
            verify_tree(&mut tree, Some(&check), mode, config.seed)?;
        }
        Ok(Self {
            family: *family,
            constants,
            config: config.clone(),
            j_star,
            steps,
            tree,
            entropy,
        })
    }

    pub fn j_star(&self) -> usize {
        self.j_star
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tree(&self) -> &PrunedTree {
        &self.tree
    }

    pub fn constants(&self) -> &FamilyConstants {
        &self.constants
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn entropy(&self) -> &Arc<dyn EntropyOracle> {
        &self.entropy
    }

    pub fn estimate(&self, y: &[f64]) -> Result<TraversalTrace> {
        traverse(&self.tree, &self.family, y, self.config.big_c, self.steps)
    }
}

/// End-to-end output of [`estimate`].
pub struct Estimate {
    pub theta_hat: Vec<f64>,
    pub trace: TraversalTrace,
    pub j_star: usize,
    pub tree: PrunedTree,
}

/// Constants, entropy oracle, `J*`, tree, traversal.
pub fn estimate(
    set: &ConstraintSet,
    family: &ExponentialFamily,
    y: &[f64],
    config: &EstimatorConfig,
    analytic: Option<Arc<dyn EntropyOracle>>,
) -> Result<Estimate> {
    check_rows(set.dim(), y.len())?;
    let prepared = PreparedEstimator::new(set, family, config, analytic)?;
    let trace = prepared.estimate(y)?;
    Ok(Estimate {
        theta_hat: trace.estimate.clone(),
        j_star: prepared.j_star,
        trace,
        tree: prepared.tree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FnEntropy, SegmentEntropy};
    use crate::tree::Clause;
    use alloc::vec;

    fn bern() -> ExponentialFamily {
        ExponentialFamily::bernoulli(2.0).unwrap()
    }

    #[test]
    fn dominates_examples() {
        let f = bern();
        assert!(dominates(&f, &[1.0], &[0.3], &[0.3]).unwrap());
        let s = domination_statistic(&f, &[1.0], &[-1.0], &[1.0]).unwrap();
        assert!((s + 1.0).abs() < 1e-12);
        assert!(dominates(&f, &[1.0], &[-1.0], &[1.0]).unwrap());
        let s = domination_statistic(&f, &[0.0], &[-1.0], &[1.0]).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(!dominates(&f, &[0.0], &[-1.0], &[1.0]).unwrap());
        assert!(matches!(
            dominates(&f, &[0.0, 1.0], &[-1.0], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn h_score_examples() {
        let f = bern();
        let a: &[f64] = &[-1.0];
        let b: &[f64] = &[1.0];
        assert_eq!(h_score(&f, &[1.0], 1.0, a, &[a, b], 1.5).unwrap(), 2.0);
        // no dominator far enough
        assert_eq!(h_score(&f, &[1.0], 1.0, a, &[a, b], 2.5).unwrap(), 0.0);
        // two dominators at distances 2 and 3
        let g = ExponentialFamily::gaussian(5.0).unwrap();
        let a: &[f64] = &[0.0];
        let s: Vec<&[f64]> = vec![a, &[2.0], &[3.0]];
        assert_eq!(h_score(&g, &[2.5], 1.0, a, &s, 1.0).unwrap(), 3.0);
    }

    #[test]
    fn j_star_examples() {
        let zero = |_: f64, _: f64| 0.0;
        assert_eq!(
            compute_j_star(1.0, 1.0, 1.0, 4.0, &zero, JStarRule::DoubleC),
            1
        );
        assert_eq!(
            compute_j_star(1.0, 1.0, 100.0, 4.0, &zero, JStarRule::DoubleC),
            3
        );
        let huge = |_: f64, _: f64| 1e9;
        assert_eq!(
            compute_j_star(1.0, 1.0, 100.0, 4.0, &huge, JStarRule::SingleC),
            1
        );
    }

    #[test]
    fn j_star_rule_selects_entropy_c() {
        // entropy depends on its c argument: only the single-c rule sees c=4
        let e = |_: f64, c: f64| if c > 5.0 { 1e9 } else { 0.0 };
        assert_eq!(
            compute_j_star(1.0, 1.0, 100.0, 4.0, &e, JStarRule::DoubleC),
            1
        );
        assert_eq!(
            compute_j_star(1.0, 1.0, 100.0, 4.0, &e, JStarRule::SingleC),
            3
        );
    }

    #[test]
    fn singleton_estimate_is_the_point() {
        let k = ConstraintSet::singleton(vec![0.5, -0.5]).unwrap();
        let cfg = EstimatorConfig::default();
        let e = estimate(&k, &bern(), &[1.0, 0.0], &cfg, None).unwrap();
        assert_eq!(e.theta_hat, vec![0.5, -0.5]);
    }

    #[test]
    fn ties_go_to_the_lexicographic_minimum() {
        // equal likelihoods: each dominates the other, both score 2
        let g = ExponentialFamily::gaussian(2.0).unwrap();
        let s: Vec<&[f64]> = vec![&[1.0], &[-1.0]];
        let (best, scores) = select(&g, &[0.0], 0.1, &s, 3.0).unwrap();
        assert_eq!(scores, vec![2.0, 2.0]);
        assert_eq!(best, 1);
    }

    #[test]
    fn selection_ignores_input_order() {
        let g = ExponentialFamily::gaussian(3.0).unwrap();
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * 0.5 - 2.0, 0.25]).collect();
        let fwd: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let rev: Vec<&[f64]> = pts.iter().rev().map(|p| p.as_slice()).collect();
        let (a, _) = select(&g, &[0.7, 0.1], 0.2, &fwd, 3.0).unwrap();
        let (b, _) = select(&g, &[0.7, 0.1], 0.2, &rev, 3.0).unwrap();
        assert_eq!(fwd[a], rev[b]);
    }

    #[test]
    fn traversal_follows_tree_edges() {
        let k = ConstraintSet::segment(vec![0.0], vec![1.0], 0.01).unwrap();
        let t = build_tree(&k, &[0.0], 16.0, 5, &TreeOptions::default()).unwrap();
        let tr = traverse(&t, &bern(), &[1.0], 7.0, 4).unwrap();
        let path = tr.node_path();
        for w in path.windows(2) {
            assert!(t.offspring(w[0]).contains(&w[1]));
        }
        for s in &tr.path {
            let min = s.scores.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
            assert_eq!(s.h_min, min);
            // first minimum in lexicographic order
            assert_eq!(s.chosen, s.scores.iter().find(|x| x.1 == min).unwrap().0);
            assert_eq!(s.eps, eps_j(1.0, 7.0, s.level));
        }
        assert_eq!(tr.estimate, t.point(*path.last().unwrap()));
    }

    #[test]
    fn depth_is_checked() {
        let k = ConstraintSet::segment(vec![0.0], vec![1.0], 0.1).unwrap();
        let t = build_tree(&k, &[0.0], 16.0, 3, &TreeOptions::default()).unwrap();
        assert_eq!(
            traverse(&t, &bern(), &[1.0], 7.0, 3),
            Err(Error::DepthExceeded {
                requested: 4,
                depth: 3
            })
        );
    }

    #[test]
    fn all_ones_pushes_the_estimate_up() {
        // the segment from -M·1 to M·1
        let m = 1.0;
        let n = 6;
        let k = ConstraintSet::segment(vec![-m; n], vec![m; n], 0.01).unwrap();
        let f = ExponentialFamily::bernoulli(m).unwrap();
        let cfg = EstimatorConfig {
            jstar_override: Some(4),
            ..EstimatorConfig::default()
        };
        let e = estimate(
            &k,
            &f,
            &vec![1.0; n],
            &cfg,
            Some(Arc::new(SegmentEntropy {
                length: 2.0 * m * libm::sqrt(n as f64),
            })),
        )
        .unwrap();
        assert!(e.theta_hat.iter().all(|&v| v >= 0.0), "{:?}", e.theta_hat);
    }

    #[test]
    fn analytic_oracle_drives_j_star() {
        let k = ConstraintSet::segment(vec![0.0], vec![1.0], 0.01).unwrap();
        let cfg = EstimatorConfig {
            kappa: Some(1e6),
            ..EstimatorConfig::default()
        };
        let seg = SegmentEntropy { length: 1.0 };
        let p = PreparedEstimator::new(&k, &bern(), &cfg, Some(Arc::new(seg))).unwrap();
        // J=5: 1e6/128² ≈ 61 > 4 log 64; J=6: 1e6/256² ≈ 15.3 < 4 log 64
        assert_eq!(p.j_star(), 5);
        assert_eq!(p.tree().depth(), 7);
        // verification counts offspring against the cloud, not the closed form
        let zero = Arc::new(FnEntropy::analytic(|_| 0.0));
        let p = PreparedEstimator::new(&k, &bern(), &cfg, Some(zero)).unwrap();
        let rep = p.tree().report().expect("verified");
        assert!(rep.violations.is_empty());
        assert!(rep
            .checked
            .iter()
            .any(|(cl, n)| *cl == Clause::OffspringCardinality && *n > 0));
    }
}
