use std::sync::Mutex;

use caai_core::bounds::Bounds;
use caai_core::optimizers::{
    differential_evolution, generalized_sa, random_search, run, Algorithm, DeParams, GenSaParams, OptProblem,
    OptimizerConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[test]
fn random_search_meets_analytic_miss_rate() {
    // P(best_y >= 0.01) = 0.9^100 per run, so 95 of 100 is a loose bound.
    let p = OptProblem::new(&sphere, Bounds::interval(-1.0, 1.0).unwrap(), 100).unwrap();
    let hits = (0..100).filter(|&s| random_search(&p, s).unwrap().best_y < 0.01).count();
    assert!(hits >= 95, "{hits}/100");
}

/// Plain rand/1/bin DE, written independently of the library version.
fn reference_de(seed: u64, budget: usize) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let np = 10;
    let mut pop: Vec<f64> = (0..np).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut fit: Vec<f64> = pop.iter().map(|&x| x * x).collect();
    let mut used = np;
    while used < budget {
        for i in 0..np {
            if used >= budget {
                break;
            }
            let mut idx = [0usize; 3];
            for k in 0..3 {
                loop {
                    let c = rng.random_range(0..np);
                    if c != i && !idx[..k].contains(&c) {
                        idx[k] = c;
                        break;
                    }
                }
            }
            let trial = (pop[idx[0]] + 0.5 * (pop[idx[1]] - pop[idx[2]])).clamp(-1.0, 1.0);
            let ft = trial * trial;
            used += 1;
            if ft <= fit[i] {
                pop[i] = trial;
                fit[i] = ft;
            }
        }
    }
    fit.iter().copied().fold(f64::INFINITY, f64::min)
}

#[test]
fn de_sphere_oracle() {
    // The reference run at ten times the budget fixes the attainable level.
    for seed in 0..5 {
        assert!(reference_de(seed, 600) < 1e-6);
    }
    let p = OptProblem::new(&sphere, Bounds::interval(-1.0, 1.0).unwrap(), 60).unwrap();
    let hits = (0..50).filter(|&s| differential_evolution(&p, s, DeParams::default()).unwrap().best_y < 0.05).count();
    assert!(hits >= 45, "{hits}/50");
}

fn bimodal(x: &[f64]) -> f64 {
    let w = 2.0 * 0.05f64.powi(2);
    -(-(x[0] - 0.2).powi(2) / w).exp() - 2.0 * (-(x[0] - 0.8).powi(2) / w).exp()
}

#[test]
fn gensa_finds_global_basin() {
    let (x_star, _) = (0..=100_000)
        .map(|i| i as f64 / 100_000.0)
        .map(|x| (x, bimodal(&[x])))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((x_star - 0.8).abs() < 1e-3);
    let p = OptProblem::new(&bimodal, Bounds::unit(1), 200).unwrap();
    let hits = (0..50)
        .filter(|&s| {
            let r = generalized_sa(&p, s, GenSaParams::default()).unwrap();
            (r.best_x[0] - x_star).abs() < 0.15
        })
        .count();
    assert!(hits >= 40, "{hits}/50");
}

#[test]
fn maximization_by_negation() {
    let f = |x: &[f64]| -(x[0] - 0.6).powi(2) + 0.1 * (15.0 * x[0]).cos();
    let seen = Mutex::new(Vec::new());
    let neg = |x: &[f64]| {
        seen.lock().unwrap().push(x[0]);
        -f(x)
    };
    let p = OptProblem::new(&neg, Bounds::unit(1), 40).unwrap();
    let r = random_search(&p, 7).unwrap();
    let seen = seen.into_inner().unwrap();
    let argmax = seen.iter().copied().max_by(|a, b| f(&[*a]).total_cmp(&f(&[*b]))).unwrap();
    assert_eq!(r.best_x[0], argmax);
    assert_eq!(-r.best_y, f(&[argmax]));
}

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop::sample::select(Algorithm::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn traces_are_monotone_and_within_budget(
        alg in algorithm(),
        seed in 0u64..1000,
        budget in 1usize..40,
        lo in -5.0f64..0.0,
        width in 0.1f64..10.0,
    ) {
        let hi = lo + width;
        let centre = lo + 0.37 * width;
        let f = move |x: &[f64]| ((x[0] - centre) / width).powi(2) + 0.05 * (9.0 * x[0] / width).sin();
        let p = OptProblem::new(&f, Bounds::interval(lo, hi).unwrap(), budget).unwrap();
        let r = run(&OptimizerConfig::new(alg), &p, seed).unwrap();
        prop_assert!(r.evals_used <= budget);
        prop_assert_eq!(r.trace.len(), r.evals_used);
        prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(r.best_y, *r.trace.last().unwrap());
        prop_assert!(r.best_x[0] >= lo && r.best_x[0] <= hi);
        prop_assert!(r.memory_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn runs_are_reproducible(alg in algorithm(), seed in 0u64..1000, budget in 1usize..30) {
        let f = |x: &[f64]| (x[0] - 0.2).powi(2) + (x[1] + 0.4).powi(2);
        let b = Bounds::new(vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let p = OptProblem::new(&f, b, budget).unwrap();
        let cfg = OptimizerConfig::new(alg);
        let a = run(&cfg, &p, seed).unwrap();
        let c = run(&cfg, &p, seed).unwrap();
        prop_assert!(a.same_outcome(&c));
    }

    #[test]
    fn shorter_budget_is_a_prefix(alg in algorithm(), seed in 0u64..500, short in 1usize..20, extra in 1usize..15) {
        let f = |x: &[f64]| (x[0] - 0.7).abs();
        let long = OptProblem::new(&f, Bounds::unit(1), short + extra).unwrap();
        let brief = OptProblem::new(&f, Bounds::unit(1), short).unwrap();
        let cfg = OptimizerConfig::new(alg);
        let a = run(&cfg, &long, seed).unwrap();
        let b = run(&cfg, &brief, seed).unwrap();
        prop_assert_eq!(&a.trace[..b.evals_used], &b.trace[..]);
        prop_assert_eq!(&a.memory_trace[..b.evals_used], &b.memory_trace[..]);
    }
}
