//! Invariant suites run by `starmm verify` and the acceptance target.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use starmm_core::bounds::{monotone_entropy, monotone_entropy_q1};
use starmm_core::estimator::{compute_j_star, dominates, select, JStarRule};
use starmm_core::expfam::{
    cumulant_constants, kl_divergence, lambda_grid, mgf_bound_check, ExponentialFamily,
};
use starmm_core::geometry::{
    epsilon_star, greedy_maximal_packing, monotone_lattice_set, verify_packing, ConstraintSet,
    EntropyOracle, FnRegion, SegmentEntropy,
};
use starmm_core::tree::{
    build_tree, check_invariants, tree_entropy_oracle, Clause, PathCheck, TreeOptions,
};
use starmm_core::{dist, dist2, PointCloud};

use crate::error::Result;
use crate::harness::{content_hash, fit_rate, RiskRow};
use crate::io;

/// Full sizes match the acceptance criteria; quick sizes are for smoke runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    fn pick<T>(self, full: T, quick: T) -> T {
        match self {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl SuiteOutcome {
    fn new(name: &'static str, passed: bool, detail: String, start: Instant) -> Self {
        Self {
            name,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} ({:.2}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.seconds,
            self.detail
        )
    }
}

pub const SUITE_NAMES: [&str; 8] = [
    "kl",
    "mgf",
    "packing",
    "tree",
    "domination",
    "selection",
    "jstar",
    "rates",
];

/// Runs a suite by name.
pub fn run_suite(name: &str, scale: Scale, seed: u64) -> Result<SuiteOutcome> {
    Ok(match name {
        "kl" => kl_sandwich(scale, seed)?,
        "mgf" => mgf_bound(scale, seed)?,
        "packing" => packing_oracle(scale, seed)?,
        "tree" => tree_invariants(scale, seed)?.0,
        "domination" => domination_decay(scale, seed)?,
        "selection" => selection_accuracy(scale, seed)?,
        "jstar" => jstar_examples(),
        "rates" => rate_exponents()?,
        other => {
            return Err(crate::error::Error::config(format!(
                "unknown suite {other:?} (expected one of {})",
                SUITE_NAMES.join(", ")
            )))
        }
    })
}

/// Random Bernoulli pairs against the curvature constants, and the Gaussian
/// identity `KL = ‖Δ‖²/2`.
pub fn kl_sandwich(scale: Scale, seed: u64) -> Result<SuiteOutcome> {
    let start = Instant::now();
    let pairs = scale.pick(10_000, 1_000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms = [0.5, 1.0, 2.0];
    let mut consts = Vec::new();
    for &m in &ms {
        let f = ExponentialFamily::bernoulli(m)?;
        consts.push((f, cumulant_constants(&f, 1024)?));
    }
    let mut bad = 0usize;
    let mut worst = 0.0f64;
    for i in 0..pairs {
        let (f, k) = &consts[i % ms.len()];
        let m = f.box_bound();
        let n = rng.random_range(1..=16);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-m..=m)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-m..=m)).collect();
        let kl = kl_divergence(f, &a, &b)?;
        let d2 = dist2(&a, &b);
        if k.c_lower * d2 > kl + 1e-9 || kl > k.c_upper * d2 + 1e-9 {
            bad += 1;
        }
    }
    let g = ExponentialFamily::gaussian(2.0)?;
    for _ in 0..pairs {
        let n = rng.random_range(1..=16);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..=2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..=2.0)).collect();
        let err = (kl_divergence(&g, &a, &b)? - 0.5 * dist2(&a, &b)).abs();
        worst = worst.max(err);
    }
    Ok(SuiteOutcome::new(
        "kl",
        bad == 0 && worst <= 1e-12,
        format!("{pairs} Bernoulli pairs, {bad} outside [cM, CM]; Gaussian max error {worst:e}"),
        start,
    ))
}

/// Bernoulli `M = 1`, 21 λ values at `θ ∈ {−M, 0, M}`.
pub fn mgf_bound(scale: Scale, seed: u64) -> Result<SuiteOutcome> {
    let start = Instant::now();
    let samples = scale.pick(1_000_000, 100_000);
    let f = ExponentialFamily::bernoulli(1.0)?;
    let k = cumulant_constants(&f, 1024)?;
    let grid = lambda_grid(1.0, 21);
    let mut violations = 0;
    let mut margin = f64::INFINITY;
    for (i, theta) in [-1.0, 0.0, 1.0].into_iter().enumerate() {
        let r = mgf_bound_check(&f, &k, theta, &grid, samples, seed.wrapping_add(i as u64))?;
        violations += r.violations();
        for row in &r.rows {
            margin = margin.min(row.bound + 3.0 * row.std_error - row.empirical_log_mgf);
        }
    }
    Ok(SuiteOutcome::new(
        "mgf",
        violations == 0,
        format!(
            "3 x 21 lambdas x {samples} samples, {violations} violations, min slack {margin:.3e}"
        ),
        start,
    ))
}

/// Largest subset of `pts` with pairwise distances `> sep`.
fn max_packing(pts: &[&[f64]], sep: f64) -> usize {
    let n = pts.len();
    let adj: Vec<u32> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && !(dist(pts[i], pts[j]) > sep))
                .fold(0u32, |m, j| m | (1 << j))
        })
        .collect();
    fn go(adj: &[u32], rest: u32, have: usize, best: &mut usize) {
        if have + rest.count_ones() as usize <= *best {
            return;
        }
        if rest == 0 {
            *best = have;
            return;
        }
        let v = rest.trailing_zeros() as usize;
        go(adj, rest & !(1 << v) & !adj[v], have + 1, best);
        go(adj, rest & !(1 << v), have, best);
    }
    let mut best = 0;
    go(
        &adj,
        if n == 32 { u32::MAX } else { (1u32 << n) - 1 },
        0,
        &mut best,
    );
    best
}

/// Random planar clouds of at most 20 points: validity, maximality and at
/// least half the exhaustive optimum.
pub fn packing_oracle(scale: Scale, seed: u64) -> Result<SuiteOutcome> {
    let start = Instant::now();
    let clouds = scale.pick(50, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut ratio = f64::INFINITY;
    for t in 0..clouds {
        let size = rng.random_range(1..=20);
        let rows: Vec<Vec<f64>> = (0..size)
            .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let center = vec![rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
        let radius = rng.random_range(0.3..1.2);
        let sep = rng.random_range(0.05..0.5);
        let region = FnRegion {
            dim: 2,
            contains: |x: &[f64]| x.iter().all(|v| (0.0..=1.0).contains(v)),
            sample: |_: &mut dyn rand::RngCore| vec![0.5, 0.5],
        };
        let set =
            ConstraintSet::from_oracle(region, center.clone(), PointCloud::from_rows(2, &rows)?)?;
        let in_ball: Vec<&[f64]> = rows
            .iter()
            .map(Vec::as_slice)
            .filter(|p| dist(p, &center) <= radius)
            .collect();
        let result = match greedy_maximal_packing(&set, &center, radius, sep, 100, seed) {
            Ok(r) => r,
            Err(starmm_core::Error::EmptyIntersection) if in_ball.is_empty() => continue,
            Err(e) => return Err(e.into()),
        };
        let check = verify_packing(&result, &set);
        let best = max_packing(&in_ball, sep);
        ratio = ratio.min(result.centers.len() as f64 / best as f64);
        if !check.is_valid() || !result.is_maximal || 2 * result.centers.len() < best {
            failures.push(format!(
                "cloud {t}: {} centers, optimum {best}, {check:?}",
                result.centers.len()
            ));
        }
    }
    Ok(SuiteOutcome::new(
        "packing",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{clouds} clouds valid and maximal, worst greedy/optimum ratio {ratio:.3}")
        } else {
            failures.join("; ")
        },
        start,
    ))
}

/// Tree invariants on the unit segment and the `q = 1, n = 8` monotone set
/// for `c ∈ {8, 16}`. Also returns a CSV of per-clause check counts and the
/// hash of each serialized tree.
pub fn tree_invariants(scale: Scale, seed: u64) -> Result<(SuiteOutcome, String)> {
    let start = Instant::now();
    let jmax = scale.pick(6, 5);
    let budget = scale.pick(1000, 400);
    let cases: Vec<(&str, f64)> = ["segment", "monotone"]
        .iter()
        .flat_map(|s| [8.0, 16.0].map(move |c| (*s, c)))
        .collect();
    let runs: Vec<Result<(String, String, bool)>> = cases
        .par_iter()
        .map(|&(name, c)| -> Result<(String, String, bool)> {
            let set = if name == "segment" {
                ConstraintSet::segment(vec![0.0], vec![1.0], 1e-3)?
            } else {
                monotone_lattice_set(1, 8, 1.0, budget, seed)?
            };
            let opts = TreeOptions {
                budget,
                seed,
                verify: None,
                ..TreeOptions::default()
            };
            let tree = build_tree(&set, set.star_center(), c, jmax, &opts)?;
            // probe at every node so the cardinality clause compares like with like
            let oracle: Box<dyn EntropyOracle> = if name == "segment" {
                Box::new(SegmentEntropy { length: 1.0 })
            } else {
                Box::new(tree_entropy_oracle(&tree, &set, 8, budget, seed)?)
            };
            let report = check_invariants(
                &tree,
                &tree.cloud(),
                Some(oracle.as_ref()),
                PathCheck::Exhaustive,
                seed,
            );
            let hash = content_hash(io::format_tree(&tree).as_bytes());
            let mut csv = String::new();
            for clause in Clause::ALL {
                let bad = report
                    .violations
                    .iter()
                    .filter(|v| v.clause == clause)
                    .count();
                writeln!(
                    csv,
                    "{name},{c},{},{},{bad},{hash}",
                    clause.name(),
                    report.count(clause)
                )
                .unwrap();
            }
            let all_ran = Clause::ALL.iter().all(|&cl| report.count(cl) > 0);
            let summary = match report.violations.first() {
                None => format!(
                    "{name} c={c}: {} nodes, {} checks",
                    tree.node_count(),
                    report.checked.iter().map(|x| x.1).sum::<usize>()
                ),
                Some(v) => format!(
                    "{name} c={c}: {} violations, first {} at level {}: {}",
                    report.violations.len(),
                    v.clause.name(),
                    v.level,
                    v.detail
                ),
            };
            Ok((csv, summary, report.passed() && all_ran))
        })
        .collect();
    let mut csv = String::from("set,c,clause,checked,violations,tree_sha256\n");
    let mut details = Vec::new();
    let mut passed = true;
    for r in runs {
        let (rows, summary, ok) = r?;
        csv += &rows;
        details.push(summary);
        passed &= ok;
    }
    Ok((
        SuiteOutcome::new(
            "tree",
            passed,
            format!("Jmax={jmax}; {}", details.join("; ")),
            start,
        ),
        csv,
    ))
}

/// Replicated Bernoulli design with `n = 400` coordinates: `θ'` at `−M/2`,
/// the truth `δ` further toward `θ''` at distance `Cδ`. The bad event is
/// `θ''` dominating `θ'`.
pub fn domination_decay(scale: Scale, seed: u64) -> Result<SuiteOutcome> {
    let start = Instant::now();
    let reps = scale.pick(10_000, 1_000);
    let f = ExponentialFamily::bernoulli(1.0)?;
    let k = cumulant_constants(&f, 1024)?;
    let big_c = starmm_core::estimator::EstimatorConfig::default().big_c;
    let n = 400usize;
    let unit = 1.0 / (n as f64).sqrt();
    let mut parts = Vec::new();
    let mut passed = true;
    for (i, delta) in [1.0f64, 2.0, 3.0].into_iter().enumerate() {
        let near = vec![-0.5; n];
        let truth = vec![-0.5 + delta * unit; n];
        let far = vec![-0.5 + big_c * delta * unit; n];
        let bad = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
                rng.set_stream(i as u64);
                let y = f.sample_vector(&truth, &mut rng);
                dominates(&f, &y, &near, &far).map(|b| b as usize)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?
            .into_iter()
            .sum::<usize>();
        let p = bad as f64 / reps as f64;
        let bound = (-k.kappa * delta * delta).exp();
        let se = (bound * (1.0 - bound) / reps as f64).sqrt();
        passed &= p <= bound + 3.0 * se;
        parts.push(format!("delta={delta}: rate {p:.4} vs bound {bound:.4}"));
    }
    Ok(SuiteOutcome::new(
        "domination",
        passed,
        format!(
            "kappa={}, C={big_c}, {reps} replicates; {}",
            k.kappa,
            parts.join(", ")
        ),
        start,
    ))
}

/// `δ`-coverings of the planar segment from `(−1,−1)` to `(1,1)`; the
/// minimal-`H` candidate should land within `(C+1)δ` of the truth.
pub fn selection_accuracy(scale: Scale, seed: u64) -> Result<SuiteOutcome> {
    let start = Instant::now();
    let reps = scale.pick(10_000, 1_000);
    let f = ExponentialFamily::bernoulli(1.0)?;
    let k = cumulant_constants(&f, 1024)?;
    let big_c = starmm_core::estimator::EstimatorConfig::default().big_c;
    let len = 8f64.sqrt();
    let truth = vec![0.3, 0.3];
    let mut parts = Vec::new();
    let mut passed = true;
    for (i, delta) in [0.06f64, 0.1, 0.25].into_iter().enumerate() {
        let steps = (len / delta).ceil() as usize;
        let cands: Vec<Vec<f64>> = (0..=steps)
            .map(|s| {
                let t = -1.0 + 2.0 * (s as f64 / steps as f64);
                vec![t, t]
            })
            .collect();
        let refs: Vec<&[f64]> = cands.iter().map(Vec::as_slice).collect();
        let n_cands = refs.len();
        let bad = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
                rng.set_stream(i as u64);
                let y = f.sample_vector(&truth, &mut rng);
                select(&f, &y, delta, &refs, big_c)
                    .map(|(j, _)| (dist(refs[j], &truth) >= (big_c + 1.0) * delta) as usize)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?
            .into_iter()
            .sum::<usize>();
        let p = bad as f64 / reps as f64;
        let bound = n_cands as f64 * (-k.kappa * delta * delta).exp();
        let pb = bound.min(1.0);
        let se = (pb * (1.0 - pb) / reps as f64).sqrt();
        passed &= n_cands <= 50 && p <= bound + 3.0 * se;
        parts.push(format!(
            "delta={delta} N={n_cands}: rate {p:.4} vs bound {bound:.3}"
        ));
    }
    Ok(SuiteOutcome::new(
        "selection",
        passed,
        format!("{reps} replicates; {}", parts.join(", ")),
        start,
    ))
}

/// The three worked `J*` examples.
pub fn jstar_examples() -> SuiteOutcome {
    let start = Instant::now();
    let zero = |_: f64, _: f64| 0.0;
    let huge = |_: f64, _: f64| 1e6;
    let got = [
        compute_j_star(1.0, 1.0, 1.0, 4.0, &zero, JStarRule::DoubleC),
        compute_j_star(1.0, 1.0, 100.0, 4.0, &zero, JStarRule::DoubleC),
        compute_j_star(1.0, 1.0, 100.0, 4.0, &huge, JStarRule::DoubleC),
    ];
    SuiteOutcome::new(
        "jstar",
        got == [1, 3, 1],
        format!("got {got:?}, expected [1, 3, 1]"),
        start,
    )
}

/// Log-log slopes of `ε*²` against `n ∈ {2⁶..2¹⁶}` under the analytic
/// monotone entropies with `κ = 1`.
pub fn rate_exponents() -> Result<SuiteOutcome> {
    let start = Instant::now();
    let ns: Vec<usize> = (6..=16).map(|k| 1usize << k).collect();
    let slope = |q: usize| -> Result<f64> {
        let mut rows = Vec::new();
        for &n in &ns {
            let d = 2.0 * (n as f64).sqrt();
            let h = move |e: f64| {
                if q == 1 {
                    monotone_entropy_q1(n, 1.0, e)
                } else {
                    monotone_entropy(q, n, 1.0, e)
                }
            };
            let e = epsilon_star(&h, 1.0, d, 1e-9 * d)?;
            rows.push(RiskRow {
                n,
                replicates: 1,
                mean_sq_err: e * e,
                std_err: 0.0,
                mean_runtime_s: 0.0,
            });
        }
        Ok(fit_rate(&rows)?.slope)
    };
    let mut parts = Vec::new();
    let mut passed = true;
    for (q, lo, hi) in [
        (1, 1.0 / 3.0 - 0.02, 1.0 / 3.0 + 0.02),
        (2, 0.5, 0.65),
        (3, 2.0 / 3.0 - 0.02, 2.0 / 3.0 + 0.02),
        (4, 0.75 - 0.02, 0.75 + 0.02),
    ] {
        let s = slope(q)?;
        passed &= (lo..=hi).contains(&s);
        parts.push(format!("q={q}: {s:.4} in [{lo:.3}, {hi:.3}]"));
    }
    Ok(SuiteOutcome::new("rates", passed, parts.join(", "), start))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_packing_oracle() {
        let pts: Vec<Vec<f64>> = (0..=10).map(|i| vec![i as f64 / 10.0]).collect();
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        assert_eq!(max_packing(&refs, 0.25), 4);
        assert_eq!(max_packing(&refs, 0.05), 11);
        assert_eq!(max_packing(&refs[..1], 1.0), 1);
    }

    #[test]
    fn quick_suites_pass() {
        for name in ["kl", "packing", "jstar", "rates", "domination", "selection"] {
            let o = run_suite(name, Scale::Quick, 1).unwrap();
            assert!(o.passed, "{}", o.line());
        }
        assert!(run_suite("nope", Scale::Quick, 1).is_err());
    }
}
