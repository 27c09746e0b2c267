//! Exhaustive enumeration, used as a correctness oracle on small inputs.

use std::time::Instant;

use num_bigint::BigUint;

use super::{Solution, SolveStats, Status};
use crate::error::{Error, Result};
use crate::mip::{mean_in_order, Problem};

/// Default evaluation cap of [`brute_force`].
pub const DEFAULT_CAP: u64 = 10_000_000;

/// `C(n, m)`.
pub fn count_placements(n: usize, m: usize) -> Result<BigUint> {
    if m > n {
        return Err(Error::Domain(format!("cannot choose {m} of {n}")));
    }
    let k = m.min(n - m);
    let mut acc = BigUint::from(1u32);
    for t in 0..k {
        acc *= BigUint::from(n - t);
        acc /= BigUint::from(t + 1);
    }
    Ok(acc)
}

/// Number of full `(placement, sizes)` assignments admitted by the problem.
pub fn count_evaluations(problem: &Problem) -> BigUint {
    let m = problem.m;
    let mut poly = vec![BigUint::from(0u32); m + 1];
    poly[0] = BigUint::from(1u32);
    for i in 0..problem.n() {
        let k = problem.allowed_sizes(i).len();
        let pinned = problem.pinned(i).is_some();
        let mut next = vec![BigUint::from(0u32); m + 1];
        for c in 0..=m {
            if !pinned {
                next[c] += &poly[c];
            }
            if c > 0 && k > 0 {
                next[c] += &poly[c - 1] * BigUint::from(k);
            }
        }
        poly = next;
    }
    poly.swap_remove(m)
}

/// Try every placement (lexicographic in candidate index) and every size
/// combination; ties keep the first minimum found.
pub fn brute_force(problem: &Problem, cap: u64) -> Result<Solution> {
    let start = Instant::now();
    let n = problem.n();
    let m = problem.m;
    let total = count_evaluations(problem);
    if total > BigUint::from(cap) {
        return Err(Error::TooLarge {
            evaluations: total.to_string(),
            placements: count_placements(n, m)?.to_string(),
            cap,
        });
    }
    let allowed: Vec<usize> = (0..n).filter(|&i| !problem.allowed_sizes(i).is_empty()).collect();
    let sizes: Vec<Vec<usize>> = (0..n).map(|i| problem.allowed_sizes(i)).collect();
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    let mut evaluations = 0u64;
    if allowed.len() >= m {
        let mut comb: Vec<usize> = (0..m).collect();
        loop {
            let placement: Vec<usize> = comb.iter().map(|&k| allowed[k]).collect();
            if problem.extra.pins.iter().all(|p| placement.contains(&p.0)) {
                let mut b = vec![false; n];
                for &i in &placement {
                    b[i] = true;
                }
                let preds: Vec<Vec<f64>> = placement
                    .iter()
                    .map(|&i| sizes[i].iter().map(|&j| problem.gap_prediction(&b, i, j)).collect())
                    .collect::<Result<_>>()?;
                let mut idx = vec![0usize; m];
                let mut vals = vec![0.0; m];
                let mut done = false;
                while !done {
                    for g in 0..m {
                        vals[g] = preds[g][idx[g]];
                    }
                    evaluations += 1;
                    let obj = problem.distance(mean_in_order(&vals, m));
                    if best.as_ref().is_none_or(|b| obj < b.0) {
                        let sel = placement.iter().zip(&idx).map(|(&i, &s)| (i, sizes[i][s])).collect();
                        best = Some((obj, sel));
                    }
                    // odometer, last gap fastest
                    let mut g = m;
                    loop {
                        if g == 0 {
                            done = true;
                            break;
                        }
                        g -= 1;
                        idx[g] += 1;
                        if idx[g] < preds[g].len() {
                            break;
                        }
                        idx[g] = 0;
                    }
                }
            }
            // next combination
            let k = allowed.len();
            let mut t = m;
            while t > 0 && comb[t - 1] == k - m + t - 1 {
                t -= 1;
            }
            if t == 0 {
                break;
            }
            comb[t - 1] += 1;
            for u in t..m {
                comb[u] = comb[u - 1] + 1;
            }
        }
    }
    let Some((objective, selection)) = best else {
        return Err(Error::Infeasible("no placement satisfies the restrictions".into()));
    };
    let (predictions, tau_hat) = problem.evaluate(&selection)?;
    Ok(Solution {
        status: Status::Optimal,
        selection,
        predictions,
        tau_hat,
        objective,
        bound: objective,
        assignment: Vec::new(),
        stats: SolveStats { nodes: 0, time_s: start.elapsed().as_secs_f64(), evaluations },
    })
}
