mod common;

use std::sync::Mutex;

use boxfuse_core::de::{evaluate_fitness, pick_distinct, run_de, stream_rng, WbfFitness};
use boxfuse_core::{run_deihdl, ConfidenceRescale, DeConfig, Error, FitnessMetric, WbfConfig};
use boxfuse_oracle::gen::rng;
use common::planted;
use proptest::prelude::*;
use rand::RngCore;

/// Generator that repeats every value several times, so index draws collide often.
struct Repeating {
    counter: u64,
    repeat: u64,
    calls: usize,
}

impl RngCore for Repeating {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }
    fn next_u64(&mut self) -> u64 {
        self.calls += 1;
        self.counter += 1;
        (self.counter / self.repeat).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for b in dst {
            *b = self.next_u64() as u8;
        }
    }
}

#[test]
fn donors_are_distinct_under_repeating_draws() {
    for np in 4..12usize {
        for target in 0..np {
            let mut r = Repeating {
                counter: target as u64 * 5,
                repeat: 4,
                calls: 0,
            };
            let [a, b, c] = pick_distinct(&mut r, np, target);
            let all = [target, a, b, c];
            for i in 0..4 {
                for j in i + 1..4 {
                    assert_ne!(all[i], all[j], "np {np} target {target}: {all:?}");
                }
            }
            assert!(r.calls > 3, "repeats should force redraws");
        }
    }
}

proptest! {
    #[test]
    fn donors_are_distinct(seed in any::<u64>(), np in 4usize..30, stream in any::<u64>()) {
        let mut r = stream_rng(seed, stream);
        for target in 0..np {
            let [a, b, c] = pick_distinct(&mut r, np, target);
            prop_assert!(a != b && b != c && a != c);
            prop_assert!(![a, b, c].contains(&target));
            prop_assert!(a < np && b < np && c < np);
        }
    }
}

#[test]
fn every_evaluated_vector_and_scale_factor_stays_in_bounds() {
    let cfg = DeConfig {
        seed: 77,
        generations: 25,
        local_search_budget: 8,
        tau2: 0.2,
        tau3: 0.45,
        tau1: 0.5,
        f_lo: 0.2,
        f_hi: 0.9,
        ..DeConfig::default()
    };
    let seen = Mutex::new(Vec::new());
    // steep objective so mutants push against the bounds
    let f = |w: &[f64]| {
        seen.lock().unwrap().push(w.to_vec());
        w[0] * 3.0 - w[1] * 2.0 + w[2]
    };
    let out = run_de(&cfg, 3, &f).unwrap();
    for w in seen.into_inner().unwrap() {
        assert!(w.iter().all(|v| (0.0..=1.0).contains(v)), "{w:?}");
    }
    for r in &out.history.records {
        assert!(r.scale_factor_min >= cfg.f_lo && r.scale_factor_max <= cfg.f_hi);
        assert!(
            r.evaluations <= 2 * cfg.population_size + cfg.local_search_budget || r.generation == 0
        );
    }
    for ind in &out.final_population.individuals {
        assert_eq!(ind.weights.len(), 3);
        assert!(ind.weights.iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert_eq!(out.final_population.individuals.len(), cfg.population_size);
}

#[test]
fn same_seed_same_history() {
    let cfg = DeConfig {
        seed: 5,
        generations: 15,
        local_search_budget: 3,
        ..DeConfig::default()
    };
    let f = |w: &[f64]| 1.0 - (w[0] - 0.2).abs() - (w[1] - 0.9).abs();
    let a = run_de(&cfg, 2, &f).unwrap();
    let b = run_de(&cfg, 2, &f).unwrap();
    assert_eq!(a.history.to_csv(), b.history.to_csv());
    let other = run_de(&DeConfig { seed: 6, ..cfg }, 2, &f).unwrap();
    assert_ne!(a.history.to_csv(), other.history.to_csv());
}

#[test]
fn small_population_is_rejected() {
    let cfg = DeConfig {
        population_size: 3,
        ..DeConfig::default()
    };
    assert!(matches!(
        run_de(&cfg, 2, &|_: &[f64]| 0.0),
        Err(Error::PopulationTooSmall(3))
    ));
}

#[test]
fn fitness_examples() {
    let (ds, runs) = planted(&mut rng(4), 20);
    let cfg = WbfConfig {
        confidence_rescale: ConfidenceRescale::None,
        ..WbfConfig::default()
    };
    let metric = FitnessMetric::Map50_95;
    // the clean model's boxes are ground-truth boxes; they may overlap each
    // other, so compare against fusing it alone rather than its raw output
    let alone = evaluate_fitness(&[1.0], &ds, &runs[..1], &cfg, metric).unwrap();
    let one_hot = evaluate_fitness(&[1.0, 0.0, 0.0], &ds, &runs, &cfg, metric).unwrap();
    assert_eq!(alone, one_hot);
    assert_eq!(
        evaluate_fitness(&[0.0, 0.0, 0.0], &ds, &runs, &cfg, metric).unwrap(),
        0.0
    );
    let w = [0.3, 0.5, 0.2];
    let w2 = [0.6, 1.0, 0.4];
    let a = evaluate_fitness(&w, &ds, &runs, &cfg, metric).unwrap();
    let b = evaluate_fitness(&w2, &ds, &runs, &cfg, metric).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn planted_optimum_is_found() {
    let (ds, runs) = planted(&mut rng(9), 30);
    let wbf = WbfConfig::default();
    let cfg = DeConfig {
        seed: 13,
        generations: 20,
        fitness_metric: FitnessMetric::Map50,
        ..DeConfig::default()
    };
    let (best, history) = run_deihdl(&cfg, &ds, &runs, &wbf).unwrap();
    assert_eq!(history.len(), 21);
    let fit = WbfFitness::new(&ds, &runs, wbf, FitnessMetric::Map50).unwrap();
    let uniform = fit.score(&[1.0, 1.0, 1.0]).unwrap();
    let (grid_w, grid_best) = boxfuse_oracle::grid_search(3, 10, |w| fit.score(w).unwrap());
    let top = best.fitness.unwrap();
    assert!(top >= uniform, "{top} < uniform {uniform}");
    assert!(
        grid_w[0] > grid_w[1] && grid_w[0] > grid_w[2],
        "grid {grid_w:?}"
    );
    assert!(
        best.weights[0] > best.weights[1] && best.weights[0] > best.weights[2],
        "{best:?}"
    );
    assert!(top >= grid_best - 0.02, "{top} vs grid {grid_best}");
}
