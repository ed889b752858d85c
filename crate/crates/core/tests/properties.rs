use monorare::distributions::Marginal;
use monorare::estimator::{fisher_hat, mle, score, LikelihoodData, LikelihoodRecord, MleStatus};
use monorare::geometry::{FrontierPair, Region};
use monorare::rng::stream;
use monorare::{
    hydraulic_problem, klee_volume, run, toy_problem, EngineConfig, HydraulicVersion, LimitState, MonotoneProblem,
};
use proptest::prelude::*;
use rand::distr::{Open01, StandardUniform};
use rand::Rng;

/// Union volume by inclusion-exclusion over all vertex subsets.
fn inclusion_exclusion(vertices: &[Vec<f64>]) -> f64 {
    let n = vertices.len();
    let d = vertices.first().map_or(0, Vec::len);
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let mut corner = vec![1.0f64; d];
        for (j, v) in vertices.iter().enumerate() {
            if mask & (1 << j) != 0 {
                corner.iter_mut().zip(v).for_each(|(c, vi)| *c = c.min(*vi));
            }
        }
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * corner.iter().product::<f64>();
    }
    total
}

fn vertex_sets() -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
    (1usize..=4).prop_flat_map(|d| (Just(d), prop::collection::vec(prop::collection::vec(0.0f64..=1.0, d), 0..9)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn klee_matches_inclusion_exclusion((d, verts) in vertex_sets()) {
        let exact = klee_volume(&verts, d).unwrap();
        prop_assert!((exact - inclusion_exclusion(&verts)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&exact));
    }

    #[test]
    fn klee_ignores_order_and_dominated_vertices((d, mut verts) in vertex_sets()) {
        let base = klee_volume(&verts, d).unwrap();
        if let Some(first) = verts.first().cloned() {
            verts.push(first.iter().map(|c| c * 0.5).collect());
        }
        verts.reverse();
        prop_assert!((klee_volume(&verts, d).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn frontiers_never_contradict_a_monotone_rule(seed in any::<u64>(), level in 0.3f64..1.7) {
        // g(x) = x1 + x2 - level is increasing; classification must agree with it.
        let mut rng = stream(seed, 0);
        let mut fr = FrontierPair::new(2);
        for _ in 0..40 {
            let x: Vec<f64> = (0..2).map(|_| rng.sample(Open01)).collect();
            if fr.classify(&x).unwrap() == Region::NonDominated {
                fr.insert(&x, x[0] + x[1] - level <= 0.0).unwrap();
            }
        }
        for _ in 0..200 {
            let y: Vec<f64> = (0..2).map(|_| rng.sample(Open01)).collect();
            let truth = y[0] + y[1] - level <= 0.0;
            match fr.classify(&y).unwrap() {
                Region::FailureDominated => prop_assert!(truth),
                Region::SafeDominated => prop_assert!(!truth),
                Region::NonDominated => {}
            }
        }
    }

    #[test]
    fn mle_is_the_unique_score_root(
        raw in prop::collection::vec((0.0f64..0.45, 0.55f64..1.0, any::<bool>()), 2..30)
    ) {
        let records: Vec<LikelihoodRecord> = raw.iter().map(|&(l, u, s)| LikelihoodRecord::new(l, u, s)).collect();
        let data = LikelihoodData::new(records).unwrap();
        let fit = mle(&data, 1e-12).unwrap();
        let (lo, hi) = data.bracket();
        prop_assert!(lo <= fit.p_hat && fit.p_hat <= hi);
        if fit.status == MleStatus::Interior {
            // Score changes sign across the estimate.
            let eps = 1e-7;
            if fit.p_hat - eps > lo && fit.p_hat + eps < hi {
                prop_assert!(score(fit.p_hat - eps, &data).unwrap() > 0.0);
                prop_assert!(score(fit.p_hat + eps, &data).unwrap() < 0.0);
            }
            // Each term of the information is at least 1 / (p (1 - p)).
            let p = fit.p_hat;
            prop_assert!(fisher_hat(p, &data).unwrap() >= data.len() as f64 / (p * (1.0 - p)) * (1.0 - 1e-12));
        }
    }
}

#[test]
fn bounds_are_monotone_along_runs() {
    let g = toy_problem(3, 0.05).unwrap();
    for seed in 0..5 {
        let traj = run(&g, &EngineConfig { n_steps: 300, ..EngineConfig::default() }, seed).unwrap();
        let mut prev = traj.initial_bounds();
        for r in &traj.records {
            assert_eq!((r.pre_lower, r.pre_upper), (prev.lower, prev.upper));
            assert!(r.post_lower >= r.pre_lower && r.post_upper <= r.pre_upper);
            if r.signature {
                assert_eq!(r.post_upper, r.pre_upper);
            } else {
                assert_eq!(r.post_lower, r.pre_lower);
            }
            prev = monorare::BoundsPair { lower: r.post_lower, upper: r.post_upper };
        }
    }
}

fn marginals() -> Vec<Marginal> {
    vec![
        Marginal::Uniform { low: -2.0, high: 5.0 },
        Marginal::Gamma { shape: 2, scale: 1.0 },
        Marginal::Gamma { shape: 5, scale: 2.0 },
        Marginal::GumbelTruncated { location: 1013.0, scale: 558.0, lower: 10.0, upper: 1e4 },
        Marginal::NormalTruncated { mean: 27.8, sd: 3.0, lower: 0.0, upper: f64::INFINITY },
        Marginal::Triangular { min: 53.5, mode: 55.0, max: 56.5 },
        Marginal::Triangular { min: 48.5, mode: 50.0, max: 51.5 },
    ]
}

#[test]
fn marginal_round_trips() {
    let mut rng = stream(31, 0);
    for m in marginals() {
        for _ in 0..1000 {
            let u: f64 = rng.sample(Open01);
            let y = m.quantile(u).unwrap();
            assert!((m.cdf(y) - u).abs() < 1e-8, "{m:?} u={u}");
            let back = m.quantile(m.cdf(y)).unwrap();
            assert!((back - y).abs() <= 1e-8 * y.abs().max(1.0), "{m:?} y={y} back={back}");
        }
        let (lo, hi) = m.support();
        if hi.is_finite() {
            assert!((m.cdf(hi) - 1.0).abs() < 1e-10);
        }
        if lo.is_finite() {
            assert!(m.cdf(lo).abs() < 1e-10);
        }
        assert!(m.quantile(0.0).is_err() && m.quantile(1.0).is_err());
    }
}

fn violations(g: &dyn LimitState, pairs: usize, seed: u64) -> usize {
    let d = g.dim();
    let mut rng = stream(seed, 0);
    let mut bad = 0;
    for _ in 0..pairs {
        let y: Vec<f64> = (0..d).map(|_| rng.sample(Open01)).collect();
        let x: Vec<f64> = y.iter().map(|yi| yi + (1.0 - yi) * rng.sample::<f64, _>(StandardUniform) * 0.999).collect();
        if g.evaluate(&x).unwrap() < g.evaluate(&y).unwrap() {
            bad += 1;
        }
    }
    bad
}

#[test]
fn monotonicity_audit() {
    let problems: Vec<MonotoneProblem> = vec![
        toy_problem(2, 0.05).unwrap(),
        toy_problem(3, 0.05).unwrap(),
        toy_problem(4, 0.005).unwrap(),
        hydraulic_problem(HydraulicVersion::Dim2),
        hydraulic_problem(HydraulicVersion::Dim4),
    ];
    for g in &problems {
        assert_eq!(violations(g, 10_000, 77), 0, "{}", g.name);
    }
}

#[test]
fn toy_failure_probability_matches_monte_carlo() {
    let q = 1_000_000;
    for d in [2usize, 3, 4] {
        for p in [0.05, 0.005] {
            let g = toy_problem(d, p).unwrap();
            let mut rng = stream(400 + d as u64, 0);
            let mut x = vec![0.0; d];
            let mut hits = 0usize;
            for _ in 0..q {
                x.iter_mut().for_each(|c| *c = rng.sample(Open01));
                hits += usize::from(g.evaluate(&x).unwrap() <= 0.0);
            }
            let est = hits as f64 / q as f64;
            let se = (p * (1.0 - p) / q as f64).sqrt();
            assert!((est - p).abs() <= 4.0 * se, "d={d} p={p} est={est}");
        }
    }
}

#[test]
fn hydraulic_physical_checkpoint() {
    // Direct evaluation of the dike margin at Q = 1013, Ks = 27.8, Zm = 55, Zv = 50.
    let h = (1013.0f64 / (300.0 * 27.8 * (5.0f64 / 5000.0).sqrt())).powf(0.6);
    let margin = 55.5 - 50.0 - h;
    assert!((h - 2.24).abs() < 0.01 && (margin - 3.26).abs() < 0.01);
    let g = hydraulic_problem(HydraulicVersion::Dim2);
    // Cube point mapping to the same physical inputs.
    let q = Marginal::GumbelTruncated { location: 1013.0, scale: 558.0, lower: 10.0, upper: 1e4 };
    let ks = Marginal::NormalTruncated { mean: 27.8, sd: 3.0, lower: 0.0, upper: f64::INFINITY };
    let x = [1.0 - q.cdf(1013.0), ks.cdf(27.8)];
    assert!((g.evaluate(&x).unwrap() - margin).abs() < 1e-6);
}
