// NaN must fail these guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]
use proptest::prelude::*;
use starmm_core::bounds::minimax_rate;
use starmm_core::estimator::{dominates, domination_statistic, select};
use starmm_core::expfam::{cumulant_constants, kl_divergence, log_likelihood, ExponentialFamily};
use starmm_core::geometry::{
    epsilon_star, greedy_maximal_packing, monotone_lattice_set, verify_packing, ConstraintSet,
    FnEntropy, MonotoneLattice, Region, SegmentRegion,
};
use starmm_core::tree::{build_tree, Clause, PathCheck, TreeOptions};
use starmm_core::{dist, dist2, PointCloud};
use std::sync::Arc;

fn vec_in(m: f64, n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-m..=m, n)
}

fn pair(m: f64) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=16).prop_flat_map(move |n| (vec_in(m, n), vec_in(m, n)))
}

fn box_bound() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.5, 1.0, 2.0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn kl_sandwich(m in box_bound(), (a, b) in pair(2.0)) {
        let a: Vec<f64> = a.iter().map(|x| x * m / 2.0).collect();
        let b: Vec<f64> = b.iter().map(|x| x * m / 2.0).collect();
        let f = ExponentialFamily::bernoulli(m).unwrap();
        let k = cumulant_constants(&f, 1024).unwrap();
        let kl = kl_divergence(&f, &a, &b).unwrap();
        let d2 = dist2(&a, &b);
        prop_assert!(k.c_lower * d2 <= kl + 1e-9);
        prop_assert!(kl <= k.c_upper * d2 + 1e-9);
    }

    #[test]
    fn kl_self_is_zero(m in box_bound(), (a, _) in pair(2.0)) {
        let a: Vec<f64> = a.iter().map(|x| x * m / 2.0).collect();
        let f = ExponentialFamily::bernoulli(m).unwrap();
        prop_assert_eq!(kl_divergence(&f, &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_kl_is_half_squared_distance((a, b) in pair(3.0)) {
        let f = ExponentialFamily::gaussian(3.0).unwrap();
        let kl = kl_divergence(&f, &a, &b).unwrap();
        prop_assert!((kl - 0.5 * dist2(&a, &b)).abs() <= 1e-12 * (1.0 + kl));
    }

    #[test]
    fn domination_matches_likelihood(
        gauss in any::<bool>(),
        (a, b) in pair(1.0),
        seed in any::<u64>(),
    ) {
        let f = if gauss { ExponentialFamily::gaussian(1.0) } else { ExponentialFamily::bernoulli(1.0) }.unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let theta: Vec<f64> = a.iter().map(|x| x * 0.5).collect();
        let y = f.sample_vector(&theta, &mut rng);
        let la = log_likelihood(&f, &a, &y).unwrap();
        let lb = log_likelihood(&f, &b, &y).unwrap();
        let s = domination_statistic(&f, &y, &a, &b).unwrap();
        prop_assert!((s - (la - lb)).abs() <= 1e-9);
        if (la - lb).abs() > 1e-9 {
            prop_assert_eq!(dominates(&f, &y, &a, &b).unwrap(), lb >= la);
        }
        // antisymmetry: never both strict, both hold only at equality
        let t = domination_statistic(&f, &y, &b, &a).unwrap();
        prop_assert!(!(s < 0.0 && t < 0.0));
        if dominates(&f, &y, &a, &b).unwrap() && dominates(&f, &y, &b, &a).unwrap() {
            prop_assert!((la - lb).abs() <= 1e-9);
        }
    }

    #[test]
    fn epsilon_star_postconditions(a in 0.1f64..50.0, p in 0.5f64..4.0, kappa in 0.05f64..5.0, d in 0.5f64..40.0) {
        let tol = 1e-6;
        let h = move |e: f64| a / e.powf(p);
        let e = epsilon_star(&h, kappa, d, tol).unwrap();
        prop_assert!(e >= 0.0 && e <= d);
        if e > 0.0 {
            prop_assert!(e * e * kappa <= h(e) + tol);
        }
        if e < d {
            let x = e + tol;
            prop_assert!(x * x * kappa > h(x) - tol);
        }
    }

    #[test]
    fn rate_is_monotone_in_entropy(a in 0.1f64..20.0, extra in 0.0f64..20.0, d in 0.5f64..40.0) {
        let k = starmm_core::expfam::FamilyConstants { c_lower: 0.1, c_upper: 0.2, c_prime: 0.4, kappa: 0.5 };
        let lo = FnEntropy::analytic(move |e| a / e);
        let hi = FnEntropy::analytic(move |e| (a + extra) / e);
        let r1 = minimax_rate(d, &k, &lo, 16.0, 1e-9).unwrap();
        let r2 = minimax_rate(d, &k, &hi, 16.0, 1e-9).unwrap();
        prop_assert!(r1.eps_star <= r2.eps_star + 1e-9);
        prop_assert_eq!(r1.minimax_rate, (r1.eps_star * r1.eps_star).min(d * d));
    }

    #[test]
    fn packing_is_valid_maximal_and_half_optimal(
        pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..=12),
        sep in 0.05f64..0.6,
    ) {
        let region = starmm_core::geometry::FnRegion {
            dim: 2,
            contains: |x: &[f64]| x.iter().all(|v| (0.0..=1.0).contains(v)),
            sample: |_: &mut dyn rand::RngCore| vec![0.0, 0.0],
        };
        let rows: Vec<Vec<f64>> = pts.iter().map(|&(x, y)| vec![x, y]).collect();
        let cloud = PointCloud::from_rows(2, &rows).unwrap();
        let k = ConstraintSet::from_oracle(region, vec![0.0, 0.0], cloud).unwrap();
        let r = greedy_maximal_packing(&k, &[0.0, 0.0], 2.0, sep, 100, 0).unwrap();
        prop_assert!(verify_packing(&r, &k).is_valid());
        let best = (1u32..(1 << rows.len()))
            .filter(|mask| {
                let idx: Vec<usize> = (0..rows.len()).filter(|i| mask & (1 << i) != 0).collect();
                idx.iter().enumerate().all(|(s, &i)| idx[s + 1..].iter().all(|&j| dist(&rows[i], &rows[j]) > sep))
            })
            .map(|mask| mask.count_ones() as usize)
            .max()
            .unwrap();
        prop_assert!(2 * r.centers.len() >= best);
    }

    #[test]
    fn lattice_membership_matches_all_pairs(q in 1usize..=3, side in 1usize..=4, x in vec_in(1.2, 64), flip in 0usize..64) {
        let n = side.pow(q as u32);
        let l = MonotoneLattice::new(q, n, 1.0).unwrap();
        let mut v: Vec<f64> = x[..n].to_vec();
        // half the cases: sort along the lattice to get near-members
        if flip % 2 == 0 {
            v = l.sample_monotone(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(flip as u64));
        }
        let brute = v.iter().all(|t| t.abs() <= 1.0) && (0..n).all(|i| (0..n).all(|j| {
            let (a, b) = (l.coords(i), l.coords(j));
            !a.iter().zip(&b).all(|(s, t)| s <= t) || v[i] <= v[j]
        }));
        prop_assert_eq!(l.contains(&v), brute);
    }

    #[test]
    fn selection_is_order_invariant(pts in prop::collection::vec(vec_in(1.0, 3), 1..12), y in vec_in(1.0, 3), rot in 0usize..12) {
        let f = ExponentialFamily::gaussian(1.0).unwrap();
        let a: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let mut b = a.clone();
        b.rotate_left(rot % a.len());
        let (i, _) = select(&f, &y, 0.05, &a, 3.0).unwrap();
        let (j, _) = select(&f, &y, 0.05, &b, 3.0).unwrap();
        prop_assert_eq!(a[i], b[j]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_segment_trees_pass_every_invariant(
        a in vec_in(1.0, 3),
        b in vec_in(1.0, 3),
        c in prop::sample::select(vec![4.0, 8.0, 16.0]),
        jmax in 2usize..=6,
    ) {
        prop_assume!(dist(&a, &b) > 0.1);
        let k = ConstraintSet::segment(a.clone(), b.clone(), 0.01).unwrap();
        let len = dist(&a, &b);
        let o = TreeOptions {
            entropy: Some(Arc::new(starmm_core::geometry::SegmentEntropy { length: len })),
            ..TreeOptions::default()
        };
        let t = build_tree(&k, &a, c, jmax, &o).unwrap();
        let rep = t.report().unwrap();
        prop_assert!(rep.passed());
        for j in 2..=jmax {
            // pruning keeps the lexicographic order and every node is a member
            for &id in t.level(j) {
                prop_assert!(SegmentRegion::new(a.clone(), b.clone()).unwrap().contains(t.point(id)));
            }
        }
        prop_assert!(rep.count(Clause::PathContraction) > 0 || jmax == 2);
    }

    #[test]
    fn lattice_trees_pass_every_invariant(n in prop::sample::select(vec![2usize, 4, 8]), seed in 0u64..1000) {
        let k = monotone_lattice_set(1, n, 1.0, 250, seed).unwrap();
        let o = TreeOptions { budget: 250, seed, verify: Some(PathCheck::Exhaustive), ..TreeOptions::default() };
        let t = build_tree(&k, &vec![0.0; n], 8.0, 5, &o).unwrap();
        prop_assert!(t.report().unwrap().passed());
        let again = build_tree(&k, &vec![0.0; n], 8.0, 5, &o).unwrap();
        for j in 1..=5 {
            prop_assert_eq!(t.level(j), again.level(j));
        }
    }
}
