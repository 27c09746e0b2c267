//! The built model's constraints pin the placement features, leaf
//! indicators and gap contributions to the values a direct recount gives.

use std::sync::Arc;

use ctest_core::corpus::{CandidatePolicy, Instance};
use ctest_core::features::{FeatureSchema, PlacementFeature};
use ctest_core::mip::{build, complete_assignment, BuildOptions, BuiltModel, ExtraConstraints, Problem};
use ctest_core::synth::{fixture_instance, fixture_model, random_ensemble, random_passage, surrogate_table};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Placement counts from the candidate list alone.
fn recount(inst: &Instance, b: &[bool], i: usize) -> [u32; 4] {
    let cands = &inst.candidates.candidates;
    let me = &cands[i];
    let og = cands
        .iter()
        .enumerate()
        .any(|(h, c)| h != i && b[h] && c.surface.to_lowercase() == me.surface.to_lowercase());
    let mut gis = 0;
    let mut prec = 0;
    let mut pis = 0;
    for (h, c) in cands.iter().enumerate() {
        if !b[h] {
            continue;
        }
        let same_sentence = c.sentence_index == me.sentence_index;
        gis += same_sentence as u32;
        if h < i {
            prec += 1;
            pis += same_sentence as u32;
        }
    }
    [og as u32, gis, prec, pis]
}

fn random_selection(p: &Problem, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..p.n()).filter(|&i| !p.allowed_sizes(i).is_empty()).collect();
    idx.shuffle(rng);
    idx[..p.m]
        .iter()
        .map(|&i| {
            let sizes = p.allowed_sizes(i);
            (i, sizes[rng.random_range(0..sizes.len())])
        })
        .collect()
}

/// Checks one assignment; returns the number of selected gaps examined.
fn check(built: &BuiltModel, sel: &[(usize, usize)], rng: &mut ChaCha8Rng) -> usize {
    let p = &*built.problem;
    let v = &built.vars;
    let schema = FeatureSchema::default();
    let x = complete_assignment(built, sel).unwrap();
    let report = built.model.verify(&x);
    assert!(report.is_ok(), "{:?}", report.rows());

    let mut b = vec![false; p.n()];
    for &(i, _) in sel {
        b[i] = true;
    }
    for i in 0..p.n() {
        let direct = recount(&p.instance, &b, i);
        for pf in PlacementFeature::ALL {
            let var = v.f[i][pf.slot()];
            assert_eq!(x[var], f64::from(direct[pf.slot()]), "candidate {i} {}", pf.short());
        }
    }

    // Any other value of a placement feature breaks a row or a bound.
    let i = rng.random_range(0..p.n());
    let slot = rng.random_range(0..4);
    for delta in [-1.0, 1.0] {
        let mut y = x.clone();
        y[v.f[i][slot]] += delta;
        assert!(!built.model.verify(&y).is_ok(), "f[{i}][{slot}] {delta:+} accepted");
    }

    for &(i, j) in sel {
        let mut row = *p.table.row(i, j);
        let direct = recount(&p.instance, &b, i);
        for pf in PlacementFeature::ALL {
            row[schema.placement.index(pf)] = f64::from(direct[pf.slot()]);
        }
        let expect = p.ensemble.predict(&row);
        let e = x[v.e[i][j - 1]];
        assert!((e - expect).abs() <= 1e-9, "e[{i}][{j}] = {e}, predict = {expect}");

        let mut y = x.clone();
        y[v.e[i][j - 1]] += 1e-3;
        assert!(built.model.verify(&y).rows().contains(&format!("contrib_{i}_{j}").as_str()));

        // Moving a tree to another leaf contradicts the leaf's box.
        if let Some(leaves) = v.blocks[i][j - 1].trees.iter().find(|l| l.len() > 1) {
            let on = leaves.iter().position(|l| x[l.var] == 1.0).unwrap();
            let off = (on + 1) % leaves.len();
            let mut y = x.clone();
            y[leaves[on].var] = 0.0;
            y[leaves[off].var] = 1.0;
            let bad = built.model.verify(&y);
            assert!(bad.rows().iter().any(|r| r.starts_with("lub_") || r.starts_with("llb_")), "{:?}", bad.rows());
        }
    }
    sel.len()
}

#[test]
fn small_instances_link_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut assignments = 0;
    let mut gaps = 0;
    while assignments < 250 {
        let n = rng.random_range(6..=14);
        let text = random_passage(&mut rng, n, 7);
        let inst = Instance::from_text(&text, &CandidatePolicy::default()).unwrap();
        let table = surrogate_table(&inst).unwrap();
        let (trees, depth) = (rng.random_range(1..=6), rng.random_range(1..=4));
        let ens = random_ensemble(&mut rng, trees, depth);
        let m = rng.random_range(1..=4.min(inst.n()));
        let tau = rng.random_range(0.0..1.0);
        let p = Problem::new(Arc::new(inst), Arc::new(table), Arc::new(ens), tau, m, ExtraConstraints::default())
            .unwrap();
        let built = build(&p, &BuildOptions::default()).unwrap();
        for _ in 0..5 {
            let sel = random_selection(&p, &mut rng);
            gaps += check(&built, &sel, &mut rng);
            assignments += 1;
        }
    }
    assert!(gaps >= assignments);
}

#[test]
fn fixtures_link_exactly() {
    let ens = Arc::new(fixture_model().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..5 {
        let (inst, table) = fixture_instance(k).unwrap();
        let p = Problem::new(inst, table, ens.clone(), 0.5, 20, ExtraConstraints::default()).unwrap();
        let built = build(&p, &BuildOptions::default()).unwrap();
        for _ in 0..50 {
            let sel = random_selection(&p, &mut rng);
            check(&built, &sel, &mut rng);
        }
    }
}
