use std::sync::Arc;

use ctest_core::corpus::{CandidatePolicy, Instance};
use ctest_core::mip::{build, BuildOptions, ExtraConstraints, ObjectiveEncoding, Problem};
use ctest_core::solver::{
    brute_force, count_placements, solve, verify, Branching, CompiledProblem, Decision, SolveOptions, Status,
    DEFAULT_CAP,
};
use ctest_core::synth::{random_ensemble, random_passage, surrogate_table};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_problem(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(6..=12);
    let m = rng.random_range(2..=4);
    let text = random_passage(&mut rng, n, 6);
    let inst = Instance::from_text(&text, &CandidatePolicy::default()).unwrap();
    let table = surrogate_table(&inst).unwrap();
    let trees = rng.random_range(1..=5);
    let depth = rng.random_range(1..=3);
    let ens = random_ensemble(&mut rng, trees, depth);
    let tau = rng.random_range(0.0..1.0);
    Problem::new(Arc::new(inst), Arc::new(table), Arc::new(ens), tau, m, ExtraConstraints::default()).unwrap()
}

#[test]
fn matches_brute_force_on_small_instances() {
    for seed in 0..40 {
        let p = small_problem(seed);
        let oracle = brute_force(&p, DEFAULT_CAP).unwrap();
        let built = build(&p, &BuildOptions::default()).unwrap();
        let sol = solve(&built, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - oracle.objective).abs() <= 1e-9, "seed {seed}: {} vs {}", sol.objective, oracle.objective);
        assert!(verify(&built, &sol.assignment).is_ok());
        assert!(sol.objective - sol.bound <= 1e-9);
    }
}

#[test]
fn plain_search_without_heuristics_is_exact() {
    for seed in 100..130 {
        let p = small_problem(seed);
        let oracle = brute_force(&p, DEFAULT_CAP).unwrap();
        let built = build(&p, &BuildOptions::default()).unwrap();
        for branching in [Branching::WidestInterval, Branching::Sequential] {
            let opts = SolveOptions { heuristics: false, branching, ..Default::default() };
            let sol = solve(&built, &opts).unwrap();
            assert!((sol.objective - oracle.objective).abs() <= 1e-9, "seed {seed} {branching:?}");
        }
    }
}

#[test]
fn every_encoding_reaches_the_same_optimum() {
    for seed in 200..210 {
        let p = small_problem(seed);
        let mut objs = Vec::new();
        for enc in ObjectiveEncoding::ALL {
            let built = build(&p, &BuildOptions { encoding: enc, ..Default::default() }).unwrap();
            let sol = solve(&built, &SolveOptions::default()).unwrap();
            assert!(verify(&built, &sol.assignment).is_ok());
            objs.push(sol.objective);
        }
        assert!(objs.iter().all(|o| (o - objs[0]).abs() <= 1e-6), "seed {seed}: {objs:?}");
    }
}

#[test]
fn node_bounds_are_admissible() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 300..330 {
        let p = small_problem(seed);
        let built = build(&p, &BuildOptions::default()).unwrap();
        let cp = CompiledProblem::new(&built).unwrap();
        for _ in 0..10 {
            let mut partial = vec![Decision::Open; p.n()];
            let mut extra = ExtraConstraints::default();
            for i in 0..p.n() {
                match rng.random_range(0..4) {
                    0 => {
                        partial[i] = Decision::Excluded;
                        extra.excludes.push(i);
                    }
                    1 if extra.pins.len() < p.m => {
                        let j = rng.random_range(1..p.instance.candidate(i).word_length);
                        partial[i] = Decision::Gap(j);
                        extra.pins.push((i, j));
                    }
                    _ => {}
                }
            }
            let bound = cp.lower_bound(&partial).unwrap();
            let sub = Problem::new(p.instance.clone(), p.table.clone(), p.ensemble.clone(), p.tau, p.m, extra)
                .ok()
                .and_then(|q| brute_force(&q, DEFAULT_CAP).ok());
            match (bound, sub) {
                (Some(b), Some(s)) => assert!(b <= s.objective + 1e-12, "seed {seed}: bound {b} > {}", s.objective),
                (None, Some(s)) => panic!("seed {seed}: bound says infeasible, oracle found {}", s.objective),
                _ => {}
            }
        }
    }
}

#[test]
fn threads_do_not_change_the_optimum() {
    for seed in 400..410 {
        let p = small_problem(seed);
        let built = build(&p, &BuildOptions::default()).unwrap();
        let one = solve(&built, &SolveOptions { heuristics: false, ..Default::default() }).unwrap();
        let four = solve(&built, &SolveOptions { heuristics: false, threads: 4, ..Default::default() }).unwrap();
        assert!((one.objective - four.objective).abs() <= 1e-9);
        let again = solve(&built, &SolveOptions { heuristics: false, ..Default::default() }).unwrap();
        assert_eq!(one.selection, again.selection);
        assert_eq!(one.objective.to_bits(), again.objective.to_bits());
    }
}

#[test]
fn single_feasible_assignment_needs_no_branching() {
    let text = "Intro line. Go to us by me at. End.";
    let inst = Instance::from_text(text, &CandidatePolicy::default()).unwrap();
    let n = inst.n();
    assert_eq!(n, 6);
    let table = surrogate_table(&inst).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ens = random_ensemble(&mut rng, 3, 3);
    let p = Problem::new(Arc::new(inst), Arc::new(table), Arc::new(ens), 0.5, n, ExtraConstraints::default()).unwrap();
    let built = build(&p, &BuildOptions::default()).unwrap();
    let sol = solve(&built, &SolveOptions { heuristics: false, ..Default::default() }).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!(sol.stats.nodes <= 1);
    assert_eq!(sol.selection, (0..n).map(|i| (i, 1)).collect::<Vec<_>>());
}

#[test]
fn placements_count() {
    assert_eq!(count_placements(40, 20).unwrap().to_string(), "137846528820");
    assert_eq!(count_placements(5, 0).unwrap().to_string(), "1");
    assert!(count_placements(3, 4).is_err());
}

#[test]
fn node_limit_reports_limit() {
    let p = small_problem(7);
    let built = build(&p, &BuildOptions::default()).unwrap();
    let sol = solve(&built, &SolveOptions { heuristics: false, node_limit: Some(1), ..Default::default() }).unwrap();
    assert!(matches!(sol.status, Status::Limit | Status::Optimal));
    assert!(sol.bound <= sol.objective);
}
