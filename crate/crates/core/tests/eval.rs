use std::sync::Arc;

use ctest_core::corpus::{CandidatePolicy, Instance};
use ctest_core::eval::{
    bench_csv, bench_objectives, compare_csv, compare_strategies, mean_sd, observed_difficulty,
    observed_difficulty_weighted, simulate_responses, variability_csv, variability_report, Aggregation, BenchOptions,
    EvalRecord, ResponseSet, BENCH_HEADER,
};
use ctest_core::features::GAP_LENGTH;
use ctest_core::mip::{BuiltModel, ExtraConstraints, ObjectiveEncoding, Problem};
use ctest_core::model::{Node, Tree, TreeEnsemble};
use ctest_core::strategies::{Strategy, StrategyConfig};
use ctest_core::synth::{random_ensemble, random_passage, surrogate_table};
use ctest_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(strategy: &str, tau: f64, difficulty: f64, responses: usize) -> EvalRecord {
    EvalRecord { strategy: strategy.into(), tau, difficulty, responses, edit_distance: 0 }
}

fn tiny_problem(seed: u64, tau: f64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text = random_passage(&mut rng, 8, 6);
    let inst = Instance::from_text(&text, &CandidatePolicy::default()).unwrap();
    let table = surrogate_table(&inst).unwrap();
    let ens = random_ensemble(&mut rng, 3, 3);
    Problem::new(Arc::new(inst), Arc::new(table), Arc::new(ens), tau, 3, ExtraConstraints::default()).unwrap()
}

#[test]
fn comparison_by_hand() {
    // Distances 0.2, 0.4, 0.3: mean 0.3, sample deviation 0.1.
    let recs = vec![
        record("mip", 0.1, 0.3, 10),
        record("mip", 0.1, 0.5, 10),
        record("stat", 0.9, 0.45, 4),
        record("mip", 0.1, 0.4, 10),
    ];
    let rows = compare_strategies(&recs, Aggregation::PerCTest);
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].strategy.as_str(), rows[0].records), ("mip", 3));
    assert!((rows[0].mu - 0.3).abs() < 1e-12);
    assert!((rows[0].sigma - 0.1).abs() < 1e-12);
    assert!((rows[1].mu - 0.45).abs() < 1e-12);
    assert_eq!(rows[1].sigma, 0.0);

    let single = compare_strategies(&[record("external", 0.1, 0.55, 1)], Aggregation::PerCTest);
    assert!((single[0].mu - 0.45).abs() < 1e-12);

    let same = compare_strategies(&vec![record("sel", 0.9, 0.7, 5); 4], Aggregation::PerCTest);
    assert!(same[0].sigma.abs() < 1e-12);

    // Weighted by responses: (0.2 * 1 + 0.4 * 3) / 4 = 0.35.
    let w = compare_strategies(&[record("mip", 0.1, 0.3, 1), record("mip", 0.1, 0.5, 3)], Aggregation::PerResponse);
    assert!((w[0].mu - 0.35).abs() < 1e-12);

    let csv = compare_csv(&rows);
    assert!(csv.starts_with("strategy,tau,mu,sigma\nmip,0.1,"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn sample_deviation() {
    let (mu, sd) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
    assert_eq!(mu, 5.0);
    // Sum of squares 32 over n - 1 = 7.
    assert!((sd - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    assert_eq!(mean_sd(&[3.0]), (3.0, 0.0));
}

#[test]
fn ragged_responses_need_the_weighted_form() {
    let rs = ResponseSet { gaps: vec![vec![1, 0], vec![1, 1, 0]] };
    assert!(observed_difficulty(&rs, 2).is_err());
    assert!((observed_difficulty_weighted(&rs, 2).unwrap() - 0.6).abs() < 1e-15);
    assert!(matches!(observed_difficulty(&rs, 3), Err(Error::LengthMismatch { .. })));
    let parsed = ResponseSet::parse(r#"{"gaps": [[1, 0], [1, 1, 0]]}"#).unwrap();
    assert_eq!(parsed, rs);
    assert!(ResponseSet::parse(r#"{"gaps": [[2]]}"#).is_err());
}

#[test]
fn simulated_responses_are_seeded() {
    let preds = [0.1, 0.5, 0.9];
    let a = simulate_responses(&preds, 50, &mut ChaCha8Rng::seed_from_u64(3));
    let b = simulate_responses(&preds, 50, &mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(a, b);
    let always = simulate_responses(&[0.0, 1.0], 20, &mut ChaCha8Rng::seed_from_u64(4));
    assert!(always.gaps[0].iter().all(|&f| f == 0));
    assert!(always.gaps[1].iter().all(|&f| f == 1));
}

#[test]
fn bench_rows_on_tiny_instances() {
    let problems: Vec<Problem> = (0..3).map(|s| tiny_problem(s, 0.4)).collect();
    let rows = bench_objectives(&problems, &BenchOptions::default()).unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r.times.len(), 3);
        assert_eq!(r.n_limit, 0);
        assert!(r.min <= r.mu && r.mu <= r.max);
    }
    let csv = bench_csv(&rows);
    assert_eq!(csv.lines().next(), Some(BENCH_HEADER));
    assert_eq!(csv.lines().count(), 5);

    let one = bench_objectives(&problems[..1], &BenchOptions::default()).unwrap();
    assert!(one.iter().all(|r| r.sigma == 0.0));
}

#[test]
fn corrupted_pwl_breakpoint_fails_the_run() {
    // Lift the kink of |tau - x| off zero; every optimum of the PWL form
    // then moves by about 0.2.
    let corrupt = |enc: ObjectiveEncoding, b: &mut BuiltModel| {
        if enc == ObjectiveEncoding::Pwl {
            for term in &mut b.model.pwl {
                let kink = term.points.iter_mut().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
                kink.1 += 0.2;
            }
        }
    };
    let problems: Vec<Problem> = (0..3).map(|s| tiny_problem(s, 0.4)).collect();
    let clean = bench_objectives(&problems, &BenchOptions::default());
    assert!(clean.is_ok());
    let opts = BenchOptions { mutate: Some(&corrupt), ..Default::default() };
    match bench_objectives(&problems, &opts) {
        Err(Error::EncodingMismatch(msg)) => assert!(msg.contains("PWL"), "{msg}"),
        other => panic!("expected a mismatch, got {other:?}"),
    }
}

#[test]
fn stat_variability_is_flat() {
    let problems: Vec<Problem> = (10..13).map(|s| tiny_problem(s, 0.5)).collect();
    let taus = [0.1, 0.3, 0.5, 0.7, 0.9];
    let rows = variability_report(&problems, &taus, &[Strategy::Static], &StrategyConfig::default()).unwrap();
    assert_eq!(rows.len(), taus.len());
    assert!(rows.iter().all(|r| r.mean_edit_distance == rows[0].mean_edit_distance));
    let csv = variability_csv(&rows);
    assert!(csv.starts_with("strategy,tau,mean_edit_distance\nstat,0.1,"));
}

#[test]
fn monotone_model_gives_growing_mip_edits() {
    // Prediction 0.05 per character of the gap: the optimum moves toward
    // longer gaps as the target rises.
    let trees = (1..9)
        .map(|t| Tree {
            nodes: vec![
                Node::Split { feature: GAP_LENGTH, threshold: t as f64 + 0.5, left: 1, right: 2 },
                Node::Leaf { value: 0.0 },
                Node::Leaf { value: 0.05 },
            ],
        })
        .collect();
    let ens = Arc::new(TreeEnsemble::new(0.05, 1.0, trees).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let problems: Vec<Problem> = (0..3)
        .map(|_| {
            let text = random_passage(&mut rng, 10, 12);
            let inst = Arc::new(Instance::from_text(&text, &CandidatePolicy::default()).unwrap());
            let table = Arc::new(surrogate_table(&inst).unwrap());
            Problem::new(inst, table, ens.clone(), 0.5, 4, ExtraConstraints::default()).unwrap()
        })
        .collect();
    // Targets off the 0.0125 grid of attainable means, so optima are unique
    // in total size.
    let taus = [0.031, 0.093, 0.162, 0.218, 0.281, 0.343, 0.406];
    let rows = variability_report(&problems, &taus, &[Strategy::Mip], &StrategyConfig::default()).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].mean_edit_distance >= w[0].mean_edit_distance, "{rows:?}");
    }
    assert!(rows.last().unwrap().mean_edit_distance > rows[0].mean_edit_distance);
}

proptest! {
    #[test]
    fn observed_difficulty_is_a_fraction_and_order_free(
        m in 1usize..8, r in 1usize..6, seed in 0u64..10_000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gaps: Vec<Vec<u8>> = (0..m).map(|_| (0..r).map(|_| rng.random_range(0..2)).collect()).collect();
        let rs = ResponseSet { gaps };
        let t = observed_difficulty(&rs, m).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
        let mut shuffled = rs.clone();
        shuffled.gaps.shuffle(&mut rng);
        for g in &mut shuffled.gaps {
            g.shuffle(&mut rng);
        }
        prop_assert_eq!(observed_difficulty(&shuffled, m).unwrap(), t);
    }
}
