//! The leveled packing tree with per-level pruning.
//!
//! Level 1 is the root. Level 2 is a maximal `d/c`-packing of `K`. For
//! `k ≥ 3`, every node `u` of level `k−1` packs the cloud points of
//! `B(u, d/2^{k−2})` at separation `s_k = d/(2^{k−1}c)`, with the level-(k−1)
//! points inside that ball taken as initial members. The preliminary level
//! is then pruned front to back in lexicographic order: a node absorbs every
//! later unprocessed node within `s_k` and inherits its parent edges.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{require_positive, CloudIndex, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::geometry::{pack_indices, ConstraintSet, EntropyOracle, LocalEntropyOracle};
use crate::vecmath::{dist, lex_cmp};

/// Default node cap per level.
pub const DEFAULT_NODE_CAP: usize = 1_000_000;
/// Depth used when no entropy oracle fixes `J* + 2`.
pub const DEFAULT_MAX_LEVELS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub d: f64,
    pub c: f64,
    pub jmax: usize,
}

impl TreeParams {
    /// Packing separation of level `k`: `d/c` for level 2, `d/(2^{k−1}c)`
    /// for `k ≥ 3`.
    pub fn separation(&self, k: usize) -> f64 {
        if k == 2 {
            self.d / self.c
        } else {
            self.d / (pow2(k - 1) * self.c)
        }
    }

    /// Covering radius of level `k`: `d/c` for level 2, `d/(2^{k−2}c)` for
    /// `k ≥ 3`.
    pub fn cover_radius(&self, k: usize) -> f64 {
        if k == 2 {
            self.d / self.c
        } else {
            self.d / (pow2(k - 2) * self.c)
        }
    }

    /// Ball radius searched by a level-(k−1) parent: `d/2^{k−2}`.
    pub fn ball_radius(&self, k: usize) -> f64 {
        self.d / pow2(k - 2)
    }

    /// Path bound `d(2+4c)/(c 2^{J'})`.
    pub fn path_bound(&self, level: usize) -> f64 {
        self.d * (2.0 + 4.0 * self.c) / (self.c * pow2(level))
    }
}

pub(crate) fn pow2(k: usize) -> f64 {
    libm::exp2(k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub level: usize,
    /// Index into the tree's point store.
    pub point: usize,
    pub alive: bool,
}

/// One absorption during pruning: `absorber` took over `absorbed`, whose
/// parents (listed alongside each absorbed id) now point at `absorber`.
#[derive(Debug, Clone, PartialEq)]
pub struct Absorption {
    pub level: usize,
    pub absorber: usize,
    pub absorbed: Vec<(usize, Vec<usize>)>,
}

/// Invariant clauses checked on a built tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Clause {
    Structure,
    LevelSeparation,
    LevelCovering,
    OffspringCovering,
    OffspringCardinality,
    PathContraction,
}

impl Clause {
    pub const ALL: [Clause; 6] = [
        Clause::Structure,
        Clause::LevelSeparation,
        Clause::LevelCovering,
        Clause::OffspringCovering,
        Clause::OffspringCardinality,
        Clause::PathContraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Clause::Structure => "structure",
            Clause::LevelSeparation => "level-separation",
            Clause::LevelCovering => "level-covering",
            Clause::OffspringCovering => "offspring-covering",
            Clause::OffspringCardinality => "offspring-cardinality",
            Clause::PathContraction => "path-contraction",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub clause: Clause,
    pub level: usize,
    pub detail: String,
}

/// Result of [`check_invariants`]: how many individual checks ran per clause
/// and every violation found.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub checked: Vec<(Clause, usize)>,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn clause_passed(&self, clause: Clause) -> bool {
        !self.violations.iter().any(|v| v.clause == clause)
    }

    pub fn count(&self, clause: Clause) -> usize {
        self.checked
            .iter()
            .filter(|c| c.0 == clause)
            .map(|c| c.1)
            .sum()
    }

    fn tally(&mut self, clause: Clause, n: usize) {
        match self.checked.iter_mut().find(|c| c.0 == clause) {
            Some(c) => c.1 += n,
            None => self.checked.push((clause, n)),
        }
    }

    fn fail(&mut self, clause: Clause, level: usize, detail: String) {
        self.violations.push(Violation {
            clause,
            level,
            detail,
        });
    }
}

/// How root-to-leaf paths are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathCheck {
    /// Every ancestor/descendant pair.
    Exhaustive,
    /// This many seeded random root-to-leaf paths.
    Sampled(usize),
}

#[derive(Clone)]
pub struct TreeOptions {
    /// Candidate cloud size; larger clouds are subsampled (seeded).
    pub budget: usize,
    pub seed: u64,
    pub node_cap: usize,
    pub entropy: Option<Arc<dyn EntropyOracle>>,
    /// `None` skips verification.
    pub verify: Option<PathCheck>,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self {
            budget: 100_000,
            seed: 0,
            node_cap: DEFAULT_NODE_CAP,
            entropy: None,
            verify: Some(PathCheck::Exhaustive),
        }
    }
}

/// A leveled directed graph over points of `K`.
#[derive(Debug, Clone)]
pub struct PrunedTree {
    points: PointCloud,
    /// Points `0..cloud_len` of the store are the candidate cloud.
    cloud_len: usize,
    nodes: Vec<TreeNode>,
    /// `levels[k-1]` lists the live node ids of level `k` in lexicographic
    /// order of (coordinates, id).
    levels: Vec<Vec<usize>>,
    offspring: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    params: TreeParams,
    pruning_log: Vec<Absorption>,
    report: Option<VerificationReport>,
    index: Option<Arc<CloudIndex>>,
}

impl PrunedTree {
    pub fn params(&self) -> TreeParams {
        self.params
    }

    /// Number of levels built.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn root(&self) -> usize {
        self.levels[0][0]
    }

    /// Live node ids of level `k` (1-based), lexicographically ordered.
    pub fn level(&self, k: usize) -> &[usize] {
        &self.levels[k - 1]
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn point(&self, id: usize) -> &[f64] {
        self.points.point(self.nodes[id].point)
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Offspring ids of `id`, ascending.
    pub fn offspring(&self, id: usize) -> &[usize] {
        &self.offspring[id]
    }

    /// Parent ids of `id`, ascending.
    pub fn parents(&self, id: usize) -> &[usize] {
        &self.parents[id]
    }

    pub fn pruning_log(&self) -> &[Absorption] {
        &self.pruning_log
    }

    pub fn report(&self) -> Option<&VerificationReport> {
        self.report.as_ref()
    }

    /// The candidate cloud the tree was built from (empty for trees read
    /// back from a file).
    pub fn cloud(&self) -> PointCloud {
        let mut c = PointCloud::new(self.points.dim());
        for i in 0..self.cloud_len {
            c.push(self.points.point(i)).expect("same dimension");
        }
        c
    }

    /// Live nodes in id order.
    pub fn live_nodes(&self) -> impl Iterator<Item = &TreeNode> + '_ {
        self.nodes.iter().filter(|n| n.alive)
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    fn lex_node_cmp(&self, a: usize, b: usize) -> Ordering {
        lex_cmp(self.point(a), self.point(b)).then(a.cmp(&b))
    }

    /// Sorts node ids by (coordinates, id).
    pub fn lex_sort(&self, ids: &mut [usize]) {
        ids.sort_by(|&a, &b| self.lex_node_cmp(a, b));
    }

    /// Reassembles a tree from serialized live nodes `(id, level, parents,
    /// coords)`. Ids need not be contiguous.
    pub fn from_nodes(
        params: TreeParams,
        rows: &[(usize, usize, Vec<usize>, Vec<f64>)],
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.3.len());
        let max_id = rows.iter().map(|r| r.0).max().unwrap_or(0);
        let mut points = PointCloud::new(dim);
        let mut nodes: Vec<TreeNode> = (0..=max_id)
            .map(|id| TreeNode {
                id,
                level: 0,
                point: 0,
                alive: false,
            })
            .collect();
        let mut parents = alloc::vec![Vec::new(); max_id + 1];
        let mut offspring = alloc::vec![Vec::new(); max_id + 1];
        let depth = rows.iter().map(|r| r.1).max().unwrap_or(0);
        if depth == 0 {
            return Err(invalid("tree has no nodes"));
        }
        let mut levels = alloc::vec![Vec::new(); depth];
        for (id, level, ps, coords) in rows {
            if nodes[*id].alive {
                return Err(invalid(format!("duplicate node id {id}")));
            }
            if *level == 0 {
                return Err(invalid("levels are 1-based"));
            }
            let p = points.push(coords)?;
            nodes[*id] = TreeNode {
                id: *id,
                level: *level,
                point: p,
                alive: true,
            };
            let mut ps = ps.clone();
            ps.sort_unstable();
            ps.dedup();
            parents[*id] = ps;
            levels[level - 1].push(*id);
        }
        for (id, ps) in parents.iter().enumerate() {
            for &p in ps {
                if p > max_id || !nodes[p].alive || nodes[p].level + 1 != nodes[id].level {
                    return Err(invalid(format!("node {id} has invalid parent {p}")));
                }
                offspring[p].push(id);
            }
        }
        if levels[0].len() != 1 {
            return Err(invalid("level 1 must hold exactly the root"));
        }
        let mut tree = Self {
            points,
            cloud_len: 0,
            nodes,
            levels,
            offspring,
            parents,
            params,
            pruning_log: Vec::new(),
            report: None,
            index: None,
        };
        for k in 0..tree.levels.len() {
            let mut l = core::mem::take(&mut tree.levels[k]);
            tree.lex_sort(&mut l);
            tree.levels[k] = l;
        }
        Ok(tree)
    }

    fn add_node(&mut self, level: usize, point: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            id,
            level,
            point,
            alive: true,
        });
        self.offspring.push(Vec::new());
        self.parents.push(Vec::new());
        id
    }

    fn add_edge(&mut self, parent: usize, child: usize) {
        if let Err(pos) = self.offspring[parent].binary_search(&child) {
            self.offspring[parent].insert(pos, child);
        }
        if let Err(pos) = self.parents[child].binary_search(&parent) {
            self.parents[child].insert(pos, parent);
        }
    }

    fn remove_edge(&mut self, parent: usize, child: usize) {
        if let Ok(pos) = self.offspring[parent].binary_search(&child) {
            self.offspring[parent].remove(pos);
        }
        if let Ok(pos) = self.parents[child].binary_search(&parent) {
            self.parents[child].remove(pos);
        }
    }

    fn index(&self) -> &CloudIndex {
        self.index.as_deref().expect("built trees carry an index")
    }
}

fn check_c(c: f64) -> Result<()> {
    if !(c >= 2.0) || !c.is_finite() {
        return Err(invalid(format!("c must be at least 2, got {c}")));
    }
    Ok(())
}

/// Root plus level 2: a maximal `d/c`-packing of `B(root, d) ∩ K` over the
/// (possibly subsampled) cloud, each center an offspring of the root.
pub fn build_level2(
    set: &ConstraintSet,
    root: &[f64],
    c: f64,
    options: &TreeOptions,
) -> Result<PrunedTree> {
    if !set.contains(root) {
        return Err(Error::NotInSet);
    }
    check_c(c)?;
    let d = set.diameter().value;
    let (mut points, _) = set.cloud().subsample(options.budget.max(1), options.seed);
    let cloud_len = points.len();
    let root_point = match points.position(root) {
        Some(i) => i,
        None => points.push(root)?,
    };
    let index = CloudIndex::build(&points);
    let params = TreeParams { d, c, jmax: 2 };
    let mut tree = PrunedTree {
        points,
        cloud_len,
        nodes: Vec::new(),
        levels: Vec::new(),
        offspring: Vec::new(),
        parents: Vec::new(),
        params,
        pruning_log: Vec::new(),
        report: None,
        index: Some(Arc::new(index)),
    };
    let r = tree.add_node(1, root_point);
    tree.levels.push(alloc::vec![r]);
    let candidates: Vec<usize> = tree
        .index()
        .within(&tree.points, root, d)
        .into_iter()
        .filter(|&i| i < cloud_len)
        .collect();
    let chosen = if candidates.is_empty() {
        alloc::vec![root_point]
    } else if d == 0.0 {
        alloc::vec![candidates[0]]
    } else {
        pack_indices(&tree.points, &candidates, &[], root, params.separation(2))
    };
    if chosen.len() > options.node_cap {
        return Err(Error::NodeCapExceeded {
            level: 2,
            nodes: chosen.len(),
            cap: options.node_cap,
        });
    }
    let mut level = Vec::with_capacity(chosen.len());
    for p in chosen {
        let id = tree.add_node(2, p);
        tree.add_edge(r, id);
        level.push(id);
    }
    tree.lex_sort(&mut level);
    tree.levels.push(level);
    Ok(tree)
}

/// Preliminary level `k ≥ 3`: for every node `u` of level `k−1`, a maximal
/// `s_k`-packing of the cloud points of `B(u, d/2^{k−2})`, seeded with the
/// level-(k−1) points inside that ball. Returns the new node ids in
/// lexicographic order; nodes sharing coordinates stay distinct.
pub fn build_level(tree: &mut PrunedTree, k: usize, node_cap: usize) -> Result<Vec<usize>> {
    if k < 3 || tree.depth() != k - 1 {
        return Err(invalid(format!(
            "level {k} needs levels 1..{} built",
            k - 1
        )));
    }
    let params = tree.params;
    let sep = params.separation(k);
    let radius = params.ball_radius(k);
    let prev: Vec<usize> = tree.levels[k - 2].clone();
    let prev_points: Vec<usize> = prev.iter().map(|&id| tree.nodes[id].point).collect();
    let mut prev_sorted = prev_points.clone();
    prev_sorted.sort_unstable();
    let index = tree.index.clone().expect("built trees carry an index");
    let scan = NeighborScan::new(&tree.points, &index, sep);
    let mut plan: Vec<(usize, Vec<usize>)> = Vec::with_capacity(prev.len());
    let mut total = 0usize;
    let mut stamp = alloc::vec![usize::MAX; tree.points.len()];
    for (slot, (&u, &up)) in prev.iter().zip(&prev_points).enumerate() {
        let center = tree.points.point(up).to_vec();
        let in_ball = index.within(&tree.points, &center, radius);
        let mut seeds = Vec::new();
        let mut candidates = Vec::new();
        for i in in_ball {
            if prev_sorted.binary_search(&i).is_ok() {
                seeds.push(i);
            } else if i < tree.cloud_len {
                candidates.push(i);
            }
        }
        // u first so that it is always among its own offspring
        seeds.sort_by_key(|&i| (i != up, i));
        let chosen = if candidates.len() <= SMALL_BALL {
            pack_indices(&tree.points, &candidates, &seeds, &center, sep)
        } else {
            scan.pack(&candidates, &seeds, &mut stamp, slot)
        };
        total += chosen.len();
        if total > node_cap {
            return Err(Error::NodeCapExceeded {
                level: k,
                nodes: total,
                cap: node_cap,
            });
        }
        plan.push((u, chosen));
    }
    let mut out = Vec::with_capacity(total);
    for (u, chosen) in plan {
        for p in chosen {
            let id = tree.add_node(k, p);
            tree.add_edge(u, id);
            out.push(id);
        }
    }
    tree.lex_sort(&mut out);
    Ok(out)
}

/// Balls with at most this many candidates get the best of farthest-point
/// and scan packing; larger ones only the scan.
const SMALL_BALL: usize = 512;

/// Lexicographic sequential greedy backed by precomputed `≤ sep` neighbor
/// lists, so a packing costs the sum of candidate degrees.
struct NeighborScan {
    rank: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
}

impl NeighborScan {
    fn new(points: &PointCloud, index: &CloudIndex, sep: f64) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        points.lex_order(&mut order);
        let mut rank = alloc::vec![0; points.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let neighbors = (0..points.len())
            .map(|i| {
                let mut v = Vec::new();
                index.for_each_within(points, points.point(i), sep, |j, _| {
                    if j != i {
                        v.push(j);
                    }
                });
                v
            })
            .collect();
        Self { rank, neighbors }
    }

    /// Same result as `scan_pack_indices`. `stamp` marks kept points with
    /// `round`.
    fn pack(
        &self,
        candidates: &[usize],
        seeds: &[usize],
        stamp: &mut [usize],
        round: usize,
    ) -> Vec<usize> {
        let mut kept = seeds.to_vec();
        for &s in seeds {
            stamp[s] = round;
        }
        let mut order = candidates.to_vec();
        order.sort_by_key(|&i| self.rank[i]);
        for c in order {
            if stamp[c] != round && self.neighbors[c].iter().all(|&j| stamp[j] != round) {
                stamp[c] = round;
                kept.push(c);
            }
        }
        kept
    }
}

/// Prunes a preliminary level in place and records it as level `k`.
///
/// Front to back over `preliminary` (lexicographically sorted): the first
/// unprocessed node absorbs every unprocessed node within `s_k`; edges from
/// the absorbed nodes' parents are moved to the absorber. Returns the
/// absorption log for this level.
pub fn prune_level(tree: &mut PrunedTree, preliminary: &[usize], k: usize) -> Vec<Absorption> {
    let sep = tree.params.separation(k);
    // group by point: coincident nodes are always absorbed together
    let mut distinct: Vec<usize> = preliminary.iter().map(|&id| tree.nodes[id].point).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let mut local = PointCloud::new(tree.points.dim());
    for &p in &distinct {
        local.push(tree.points.point(p)).expect("same dimension");
    }
    let local_index = CloudIndex::build(&local);
    let mut done = alloc::vec![false; preliminary.len()];
    let mut by_point: Vec<Vec<usize>> = alloc::vec![Vec::new(); distinct.len()];
    for (slot, &id) in preliminary.iter().enumerate() {
        let lp = distinct.binary_search(&tree.nodes[id].point).unwrap();
        by_point[lp].push(slot);
    }
    let mut survivors = Vec::new();
    let mut log = Vec::new();
    for slot in 0..preliminary.len() {
        if done[slot] {
            continue;
        }
        done[slot] = true;
        let a = preliminary[slot];
        survivors.push(a);
        let mut near: Vec<usize> = Vec::new();
        let center = tree.point(a).to_vec();
        local_index.for_each_within(&local, &center, sep, |lp, _| {
            for &s in &by_point[lp] {
                if !done[s] {
                    near.push(s);
                }
            }
        });
        if near.is_empty() {
            continue;
        }
        near.sort_unstable();
        let mut absorbed = Vec::with_capacity(near.len());
        for s in near {
            done[s] = true;
            let b = preliminary[s];
            let ps = tree.parents[b].clone();
            for &p in &ps {
                tree.remove_edge(p, b);
                tree.add_edge(p, a);
            }
            tree.nodes[b].alive = false;
            absorbed.push((b, ps));
        }
        log.push(Absorption {
            level: k,
            absorber: a,
            absorbed,
        });
    }
    tree.levels.push(survivors);
    tree.pruning_log.extend(log.iter().cloned());
    log
}

/// Builds levels `1..=jmax`, prunes each level `k ≥ 3`, and (unless
/// `options.verify` is `None`) checks every invariant, failing with
/// [`Error::InvariantViolation`] naming the first violated clause.
pub fn build_tree(
    set: &ConstraintSet,
    root: &[f64],
    c: f64,
    jmax: usize,
    options: &TreeOptions,
) -> Result<PrunedTree> {
    if jmax < 2 {
        return Err(invalid("jmax must be at least 2"));
    }
    let mut tree = build_level2(set, root, c, options)?;
    for k in 3..=jmax {
        let prelim = build_level(&mut tree, k, options.node_cap)?;
        prune_level(&mut tree, &prelim, k);
    }
    tree.params.jmax = jmax;
    if let Some(mode) = options.verify {
        verify_tree(&mut tree, options.entropy.as_deref(), mode, options.seed)?;
    }
    Ok(tree)
}

/// Runs [`check_invariants`] against the tree's own cloud, stores the report,
/// and fails with [`Error::InvariantViolation`] naming the first violation.
pub fn verify_tree(
    tree: &mut PrunedTree,
    entropy: Option<&dyn EntropyOracle>,
    paths: PathCheck,
    seed: u64,
) -> Result<()> {
    let cloud = tree.cloud();
    let report = check_invariants(tree, &cloud, entropy, paths, seed);
    if let Some(v) = report.violations.first() {
        return Err(Error::InvariantViolation(format!(
            "{} at level {}: {}",
            v.clause.name(),
            v.level,
            v.detail
        )));
    }
    tree.report = Some(report);
    Ok(())
}

/// Cloud-based oracle for the cardinality clause: at each level's offspring
/// radius the parents of that level join the probe centers.
pub fn tree_entropy_oracle(
    tree: &PrunedTree,
    set: &ConstraintSet,
    probes: usize,
    budget: usize,
    seed: u64,
) -> Result<LocalEntropyOracle> {
    let mut oracle = LocalEntropyOracle::new(set, probes, budget, seed)?;
    let c = 2.0 * tree.params.c;
    for k in 2..=tree.depth() {
        let parents: Vec<Vec<f64>> = tree
            .level(k - 1)
            .iter()
            .map(|&u| tree.point(u).to_vec())
            .collect();
        oracle = oracle.pin(tree.params.ball_radius(k), c, &parents);
    }
    Ok(oracle)
}

/// Checks every structural invariant of `tree` against `cloud`.
///
/// Covering clauses are relative to `cloud`; the cardinality clause runs only
/// with an oracle and compares `|O(u)|` with `N^loc(d/2^{J−2}, 2c)`.
pub fn check_invariants(
    tree: &PrunedTree,
    cloud: &PointCloud,
    entropy: Option<&dyn EntropyOracle>,
    paths: PathCheck,
    seed: u64,
) -> VerificationReport {
    let mut rep = VerificationReport::default();
    let p = tree.params;
    let depth = tree.depth();
    let cloud_index = CloudIndex::build(cloud);

    // structure
    let mut n = 0;
    if tree.levels[0].len() != 1 {
        rep.fail(
            Clause::Structure,
            1,
            format!("level 1 holds {} nodes", tree.levels[0].len()),
        );
    }
    for k in 2..=depth {
        for &id in tree.level(k) {
            n += 1;
            let node = tree.node(id);
            if !node.alive || node.level != k {
                rep.fail(
                    Clause::Structure,
                    k,
                    format!("node {id} is dead or mislabeled"),
                );
            }
            if tree.parents(id).is_empty() {
                rep.fail(Clause::Structure, k, format!("node {id} has no parent"));
            }
            for &q in tree.parents(id) {
                if !tree.node(q).alive || tree.node(q).level + 1 != k {
                    rep.fail(
                        Clause::Structure,
                        k,
                        format!("node {id} has parent {q} off level {}", k - 1),
                    );
                }
            }
        }
        for &id in tree.level(k - 1) {
            if tree.offspring(id).is_empty() {
                rep.fail(
                    Clause::Structure,
                    k - 1,
                    format!("node {id} has no offspring"),
                );
            }
        }
    }
    rep.tally(Clause::Structure, n);

    for k in 2..=depth {
        let sep = p.separation(k);
        let level = tree.level(k);
        let pts: Vec<&[f64]> = level.iter().map(|&id| tree.point(id)).collect();

        // separation within the level
        let mut lp = PointCloud::new(tree.dim());
        for q in &pts {
            lp.push(q).expect("same dimension");
        }
        let li = CloudIndex::build(&lp);
        for (i, q) in pts.iter().enumerate() {
            li.for_each_within(&lp, q, sep, |j, dd| {
                if j > i {
                    rep.fail(
                        Clause::LevelSeparation,
                        k,
                        format!(
                            "nodes {} and {} are {dd} apart, need > {sep}",
                            level[i], level[j]
                        ),
                    );
                }
            });
        }
        rep.tally(
            Clause::LevelSeparation,
            pts.len() * pts.len().saturating_sub(1) / 2,
        );

        let cover = p.cover_radius(k);
        if k >= 3 {
            let all: Vec<usize> = (0..lp.len()).collect();
            for x in cloud.iter() {
                if !li.any_within(&lp, &all, x, cover) {
                    rep.fail(
                        Clause::LevelCovering,
                        k,
                        format!("cloud point {x:?} is farther than {cover}"),
                    );
                }
            }
            rep.tally(Clause::LevelCovering, cloud.len());
        }

        // offspring of each parent cover the parent's ball
        let radius = p.ball_radius(k);
        for &u in tree.level(k - 1) {
            let kids: Vec<usize> = tree.offspring(u).to_vec();
            let up = tree.point(u);
            let mut kp = PointCloud::new(tree.dim());
            for &o in &kids {
                kp.push(tree.point(o)).expect("same dimension");
            }
            let ki = CloudIndex::build(&kp);
            let all: Vec<usize> = (0..kp.len()).collect();
            let mut checked = 0;
            cloud_index.for_each_within(cloud, up, radius, |i, _| {
                checked += 1;
                let x = cloud.point(i);
                if !ki.any_within(&kp, &all, x, cover) {
                    rep.fail(
                        Clause::OffspringCovering,
                        k,
                        format!(
                            "offspring of node {u} miss cloud point {x:?} by more than {cover}"
                        ),
                    );
                }
            });
            rep.tally(Clause::OffspringCovering, checked);

            if let Some(oracle) = entropy {
                let bound = oracle.log_nloc(radius, 2.0 * p.c);
                let have = libm::log(kids.len() as f64);
                if have > bound + 1e-12 {
                    rep.fail(
                        Clause::OffspringCardinality,
                        k,
                        format!(
                            "node {u} has {} offspring, log {have} > log N^loc {bound}",
                            kids.len()
                        ),
                    );
                }
                rep.tally(Clause::OffspringCardinality, 1);
            }
        }
    }

    match paths {
        PathCheck::Exhaustive => check_paths_exhaustive(tree, &mut rep),
        PathCheck::Sampled(count) => check_paths_sampled(tree, count, seed, &mut rep),
    }
    rep
}

fn check_paths_exhaustive(tree: &PrunedTree, rep: &mut VerificationReport) {
    let p = tree.params;
    // ancestors of every node, level by level
    let mut anc: Vec<BTreeSet<usize>> = alloc::vec![BTreeSet::new(); tree.nodes.len()];
    let mut checked = 0;
    for k in 2..=tree.depth() {
        for &id in tree.level(k) {
            let mut a = BTreeSet::new();
            for &q in tree.parents(id) {
                a.insert(q);
                a.extend(anc[q].iter().copied());
            }
            for &q in &a {
                checked += 1;
                let lvl = tree.node(q).level;
                let dd = dist(tree.point(q), tree.point(id));
                if dd > p.path_bound(lvl) {
                    rep.fail(
                        Clause::PathContraction,
                        lvl,
                        format!(
                            "node {id} is {dd} from ancestor {q}, bound {}",
                            p.path_bound(lvl)
                        ),
                    );
                }
            }
            anc[id] = a;
        }
    }
    rep.tally(Clause::PathContraction, checked);
}

fn check_paths_sampled(tree: &PrunedTree, count: usize, seed: u64, rep: &mut VerificationReport) {
    let p = tree.params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a7);
    let mut checked = 0;
    for _ in 0..count {
        let mut path = alloc::vec![tree.root()];
        loop {
            let kids = tree.offspring(*path.last().unwrap());
            if kids.is_empty() {
                break;
            }
            path.push(kids[rng.random_range(0..kids.len())]);
        }
        for i in 0..path.len() {
            for j in i + 1..path.len() {
                checked += 1;
                let dd = dist(tree.point(path[i]), tree.point(path[j]));
                if dd > p.path_bound(i + 1) {
                    rep.fail(
                        Clause::PathContraction,
                        i + 1,
                        format!("path {:?}: {dd} > {}", path, p.path_bound(i + 1)),
                    );
                }
            }
        }
    }
    rep.tally(Clause::PathContraction, checked);
}

/// `count` distinct seeded indices of `0..len` (all when `count ≥ len`).
pub fn sample_indices(len: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = sample(&mut rng, len, count.min(len)).into_vec();
    v.sort_unstable();
    v
}

/// Checks that `c` and `d` are usable for a tree over `set`.
pub fn validate_params(set: &ConstraintSet, c: f64) -> Result<()> {
    check_c(c)?;
    if set.diameter().value > 0.0 {
        require_positive("diameter", set.diameter().value)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{monotone_lattice_set, verify_packing, PackingResult, SegmentEntropy};
    use alloc::vec;

    fn unit_segment(res: f64) -> ConstraintSet {
        ConstraintSet::segment(vec![0.0], vec![1.0], res).unwrap()
    }

    fn opts() -> TreeOptions {
        TreeOptions::default()
    }

    #[test]
    fn singleton_levels_repeat_the_root() {
        let k = ConstraintSet::singleton(vec![0.2, 0.4]).unwrap();
        let t = build_tree(&k, &[0.2, 0.4], 8.0, 5, &opts()).unwrap();
        for j in 1..=5 {
            assert_eq!(t.level(j).len(), 1);
            assert_eq!(t.point(t.level(j)[0]), &[0.2, 0.4]);
        }
    }

    #[test]
    fn level2_on_101_point_segment() {
        let k = unit_segment(0.01);
        assert_eq!(k.cloud().len(), 101);
        let t = build_level2(&k, &[0.0], 4.0, &opts()).unwrap();
        assert_eq!(t.level(2).len(), 4);
        assert_eq!(t.offspring(t.root()).len(), 4);
    }

    #[test]
    fn level2_on_small_lattice_is_a_packing() {
        let k = monotone_lattice_set(1, 4, 1.0, 500, 1).unwrap();
        let t = build_level2(&k, &[0.0; 4], 8.0, &opts()).unwrap();
        let r = PackingResult {
            centers: t.level(2).iter().map(|&id| t.point(id).to_vec()).collect(),
            radius: t.params().separation(2),
            ball_center: vec![0.0; 4],
            ball_radius: t.params().d,
            is_maximal: true,
        };
        assert!(verify_packing(&r, &k).is_valid());
    }

    #[test]
    fn level3_packing_of_first_parent() {
        let k = unit_segment(0.01);
        let mut t = build_level2(&k, &[0.0], 4.0, &opts()).unwrap();
        let first = t.level(2)[0];
        assert_eq!(t.point(first), &[0.0]);
        let prelim = build_level(&mut t, 3, DEFAULT_NODE_CAP).unwrap();
        let mut kids: Vec<f64> = t.offspring(first).iter().map(|&o| t.point(o)[0]).collect();
        kids.sort_by(f64::total_cmp);
        // B(0, 0.5) holds 51 grid points. Unseeded, the best strict 1/16
        // packing has 8 points (0, 0.07, ..., 0.49); with the level-2 points
        // 0 and 0.26 forced in, the best is 7 (0, 0.07, 0.14, 0.26, 0.33,
        // 0.40, 0.47).
        assert_eq!(kids, vec![0.0, 0.07, 0.14, 0.26, 0.33, 0.4, 0.47]);
        let ball: Vec<usize> = (0..=50).collect();
        assert_eq!(
            pack_indices(&t.points, &ball, &[], &[0.0], 1.0 / 16.0).len(),
            8
        );
        for i in 0..kids.len() {
            for j in i + 1..kids.len() {
                assert!((kids[i] - kids[j]).abs() > 1.0 / 16.0);
            }
        }
        // close pairs in the preliminary level only come from different parents
        for (i, &a) in prelim.iter().enumerate() {
            for &b in &prelim[i + 1..] {
                if dist(t.point(a), t.point(b)) <= 1.0 / 16.0 {
                    assert_ne!(t.parents(a), t.parents(b));
                }
            }
        }
    }

    fn chain_tree(points: &[f64], parents_of: &[usize]) -> (PrunedTree, Vec<usize>) {
        // root 0 at level 1, two parents at level 2, given nodes at level 3
        let params = TreeParams {
            d: 1.0,
            c: 4.0,
            jmax: 3,
        };
        let mut rows = vec![
            (0, 1, vec![], vec![0.0]),
            (1, 2, vec![0], vec![0.0]),
            (2, 2, vec![0], vec![0.5]),
        ];
        for (i, (&x, &p)) in points.iter().zip(parents_of).enumerate() {
            rows.push((3 + i, 3, vec![p], vec![x]));
        }
        let mut t = PrunedTree::from_nodes(params, &rows[..3]).unwrap();
        let mut ids = Vec::new();
        for r in &rows[3..] {
            let p = t.points.push(&r.3).unwrap();
            let id = t.add_node(3, p);
            t.add_edge(r.2[0], id);
            ids.push(id);
        }
        t.lex_sort(&mut ids);
        (t, ids)
    }

    #[test]
    fn prune_keeps_separated_nodes() {
        let s = 1.0 / 16.0;
        let (mut t, ids) = chain_tree(&[0.0, 2.0 * s, 4.0 * s], &[1, 1, 2]);
        let log = prune_level(&mut t, &ids, 3);
        assert!(log.is_empty());
        assert_eq!(t.level(3), ids.as_slice());
    }

    #[test]
    fn prune_merges_coincident_nodes() {
        let (mut t, ids) = chain_tree(&[0.25, 0.25], &[1, 2]);
        let log = prune_level(&mut t, &ids, 3);
        assert_eq!(t.level(3), &[ids[0]]);
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].absorbed, vec![(ids[1], vec![2])]);
        assert_eq!(t.offspring(2), &[ids[0]]);
        assert_eq!(t.parents(ids[0]), &[1, 2]);
    }

    #[test]
    fn prune_chain_hand_trace() {
        let s = 1.0 / 16.0;
        let (mut t, ids) = chain_tree(&[0.0, 0.9 * s, 1.8 * s], &[1, 1, 2]);
        let log = prune_level(&mut t, &ids, 3);
        let kept: Vec<f64> = t.level(3).iter().map(|&i| t.point(i)[0]).collect();
        assert_eq!(kept, vec![0.0, 1.8 * s]);
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].absorbed.len(), 1);
    }

    #[test]
    fn jmax_two_is_root_plus_packing() {
        let k = unit_segment(0.01);
        let t = build_tree(&k, &[0.0], 4.0, 2, &opts()).unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(t.level(2).len(), 4);
    }

    #[test]
    fn segment_tree_passes_all_invariants() {
        let k = unit_segment(1e-3);
        let mut o = opts();
        o.entropy = Some(Arc::new(SegmentEntropy { length: 1.0 }));
        for c in [4.0, 8.0, 16.0] {
            let t = build_tree(&k, &[0.0], c, 6, &o).unwrap();
            let rep = t.report().unwrap();
            assert!(rep.passed());
            for clause in Clause::ALL {
                assert!(rep.count(clause) > 0, "{clause:?}");
            }
            // independent brute-force check of the level-4 covering radius
            let r = t.params().cover_radius(4);
            for x in k.cloud().iter() {
                assert!(t.level(4).iter().any(|&id| dist(t.point(id), x) <= r));
            }
        }
    }

    #[test]
    fn lattice_tree_sampled_paths() {
        // budget 5000 would put 1.25e7 nodes in the preliminary level 4
        let k = monotone_lattice_set(1, 8, 1.0, 1000, 3).unwrap();
        let mut o = opts();
        o.budget = 1000;
        o.verify = Some(PathCheck::Sampled(100));
        let t = build_tree(&k, &[0.0; 8], 8.0, 5, &o).unwrap();
        assert!(t.report().unwrap().clause_passed(Clause::PathContraction));
        assert_eq!(t.report().unwrap().count(Clause::PathContraction), 100 * 10);
    }

    #[test]
    fn rebuild_is_identical() {
        let k = monotone_lattice_set(1, 4, 1.0, 400, 3).unwrap();
        let a = build_tree(&k, &[0.0; 4], 8.0, 4, &opts()).unwrap();
        let b = build_tree(&k, &[0.0; 4], 8.0, 4, &opts()).unwrap();
        for j in 1..=4 {
            assert_eq!(a.level(j), b.level(j));
        }
        assert_eq!(a.pruning_log(), b.pruning_log());
    }

    #[test]
    fn node_cap_is_enforced() {
        let k = unit_segment(1e-3);
        let mut o = opts();
        o.node_cap = 10;
        assert!(matches!(
            build_tree(&k, &[0.0], 16.0, 4, &o),
            Err(Error::NodeCapExceeded { .. })
        ));
    }

    #[test]
    fn checker_catches_a_broken_tree() {
        let k = unit_segment(0.01);
        let mut o = opts();
        o.verify = None;
        let mut t = build_tree(&k, &[0.0], 4.0, 4, &o).unwrap();
        // drop a level-4 node: its cover disappears
        let victim = t.levels[3].remove(1);
        let ps = t.parents[victim].clone();
        for q in ps {
            t.remove_edge(q, victim);
        }
        let rep = check_invariants(&t, k.cloud(), None, PathCheck::Exhaustive, 0);
        assert!(!rep.clause_passed(Clause::LevelCovering));
    }

    #[test]
    fn pruning_never_grows_a_level() {
        let k = monotone_lattice_set(1, 8, 1.0, 800, 5).unwrap();
        let mut o = opts();
        o.verify = None;
        let mut t = build_level2(&k, &[0.0; 8], 8.0, &o).unwrap();
        for j in 3..=5 {
            let prelim = build_level(&mut t, j, DEFAULT_NODE_CAP).unwrap();
            let log = prune_level(&mut t, &prelim, j);
            let absorbed: usize = log.iter().map(|a| a.absorbed.len()).sum();
            assert_eq!(t.level(j).len() + absorbed, prelim.len());
        }
    }
}
