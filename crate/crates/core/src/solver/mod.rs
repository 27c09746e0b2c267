//! Exact optimization of a built C-test model.
//!
//! The search works on compiled lookup tables derived from the model's
//! reduced tree blocks, so every value it compares is the same float the
//! direct prediction path produces. Heuristic incumbents come first; the
//! branch and bound then either proves them optimal or improves on them.

mod compiled;
mod heuristic;
mod oracle;
mod search;

use std::time::{Duration, Instant};

use serde::Serialize;

pub use compiled::{CompiledProblem, ObjectiveFn};
pub use oracle::{brute_force, count_evaluations, count_placements, DEFAULT_CAP};

use crate::error::{Error, Result};
use crate::mip::{complete_assignment, BuiltModel};
use compiled::{EXC, UND};
use search::{eval_node, Ctx, Node, Shared};

/// Node budget of the search that runs before the restart heuristic.
const PROBE_NODES: u64 = 200_000;

pub use crate::mip::VerifyReport;

/// Which open candidate a node branches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branching {
    /// The one whose contribution interval is widest.
    #[default]
    WidestInterval,
    /// The lowest index.
    Sequential,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    pub threads: usize,
    /// Absolute optimality tolerance on the objective.
    pub tolerance: f64,
    pub branching: Branching,
    /// Candidate solutions tried as first incumbents.
    pub warm_starts: Vec<Vec<(usize, usize)>>,
    pub heuristics: bool,
    /// Log progress every this many nodes (0 = never).
    pub log_every: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit: Some(Duration::from_secs(120)),
            node_limit: None,
            threads: 1,
            tolerance: 1e-9,
            branching: Branching::default(),
            warm_starts: Vec::new(),
            heuristics: true,
            log_every: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Optimal,
    /// Stopped by a time or node limit; the incumbent may not be optimal.
    Limit,
    Infeasible,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Limit => "limit",
            Status::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SolveStats {
    pub nodes: u64,
    pub time_s: f64,
    /// Complete assignments scored (brute force only).
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    /// `(candidate, size)` in candidate order; empty without an incumbent.
    pub selection: Vec<(usize, usize)>,
    pub predictions: Vec<f64>,
    pub tau_hat: f64,
    pub objective: f64,
    pub bound: f64,
    /// Values of every model variable, in model order.
    pub assignment: Vec<f64>,
    pub stats: SolveStats,
}

impl Solution {
    pub fn gap(&self) -> f64 {
        (self.objective - self.bound).max(0.0)
    }

    pub fn stats_json(&self) -> serde_json::Value {
        let num = |v: f64| if v.is_finite() { serde_json::json!(v) } else { serde_json::Value::Null };
        serde_json::json!({
            "status": self.status,
            "objective": num(self.objective),
            "bound": num(self.bound),
            "nodes": self.stats.nodes,
            "time_s": self.stats.time_s,
        })
    }
}

/// One decision per candidate, for [`CompiledProblem::lower_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Open,
    Excluded,
    Gap(usize),
}

impl CompiledProblem {
    fn root_state(&self) -> Vec<u8> {
        (0..self.n)
            .map(|i| match self.pinned[i] {
                Some(j) => j as u8,
                None if self.tables[i].sizes.is_empty() => EXC,
                None => UND,
            })
            .collect()
    }

    /// Admissible lower bound on the objective of every completion of
    /// `partial`, or `None` if no completion is feasible.
    pub fn lower_bound(&self, partial: &[Decision]) -> Result<Option<f64>> {
        if partial.len() != self.n {
            return Err(Error::LengthMismatch { left: partial.len(), right: self.n });
        }
        let mut st = self.root_state();
        for (i, d) in partial.iter().enumerate() {
            match (*d, st[i]) {
                (Decision::Open, _) => {}
                (Decision::Excluded, s) if s == UND || s == EXC => st[i] = EXC,
                (Decision::Gap(j), s) if (s == UND && self.tables[i].sizes.contains(&j)) || s as usize == j => {
                    st[i] = j as u8
                }
                _ => return Ok(None),
            }
        }
        Ok(eval_node(self, &st, Branching::default()).map(|(b, _)| b))
    }
}

/// Check a full assignment against every row, bound and indicator.
pub fn verify(built: &BuiltModel, assignment: &[f64]) -> VerifyReport {
    built.model.verify(assignment)
}

/// Solve the model to optimality or until a limit is reached.
pub fn solve(built: &BuiltModel, opts: &SolveOptions) -> Result<Solution> {
    if !(opts.tolerance >= 0.0) {
        return Err(Error::InvalidConfig("tolerance must be non-negative".into()));
    }
    let start = Instant::now();
    let deadline = opts.time_limit.map(|d| start + d);
    let cp = CompiledProblem::new(built)?;
    let shared = Shared::new();
    let root_st = cp.root_state();

    for (k, ws) in opts.warm_starts.iter().enumerate() {
        match cp.from_selection(ws) {
            Some(sel) => {
                shared.offer(cp.objective_of(&sel), &sel);
            }
            None => log::debug!("warm start {k} is infeasible and was skipped"),
        }
    }
    if let Some(sel) = heuristic::seed(&cp) {
        shared.offer(cp.objective_of(&sel), &sel);
    }
    let improver = heuristic::Improver::new(&cp, opts.tolerance, deadline);
    if opts.heuristics {
        if let Some((_, sel)) = shared.take() {
            let (sel, obj) = improver.polish(sel);
            shared.offer(obj, &sel);
        }
    }

    let (status, bound) = match eval_node(&cp, &root_st, opts.branching) {
        None => (Status::Infeasible, f64::INFINITY),
        Some((root_bound, branch)) => {
            log::debug!("root bound {root_bound}, incumbent {}", shared.incumbent());
            let root = Node { st: root_st, bound: root_bound, branch };
            let run = |o: &SolveOptions| {
                let ctx = Ctx { cp: &cp, shared: &shared, opts: o, start, root_bound };
                if o.threads > 1 {
                    ctx.parallel(root.clone(), o.threads)
                } else {
                    ctx.dfs(root.clone())
                }
            };
            // A short search first: small instances close here, before any
            // time goes into restarts.
            let probe_limit = opts.node_limit.map_or(PROBE_NODES, |l| l.min(PROBE_NODES));
            let mut closed = run(&SolveOptions { node_limit: Some(probe_limit), ..opts.clone() });
            let user_limit_hit = opts.node_limit.is_some_and(|l| l <= PROBE_NODES);
            if closed.limit_hit && !user_limit_hit && !shared.stop_was_time(start, opts) {
                if opts.heuristics {
                    if let Some((obj, sel)) = shared.take() {
                        // Restarts may use up to half of the time limit.
                        let until = opts.time_limit.map(|d| start + d / 2);
                        let (sel, obj) = improver.kicks(sel, obj, until);
                        shared.offer(obj, &sel);
                        log::debug!("restarts reached {obj:e} after {:.3}s", start.elapsed().as_secs_f64());
                    }
                }
                shared.stop.store(false, std::sync::atomic::Ordering::Relaxed);
                closed = run(opts);
            }
            let inc = shared.incumbent();
            let bound = closed.lb.min(inc).max(root_bound.min(inc));
            match (closed.limit_hit, inc.is_finite()) {
                (false, true) => (Status::Optimal, bound),
                (false, false) => (Status::Infeasible, f64::INFINITY),
                (true, _) => (Status::Limit, bound),
            }
        }
    };
    let mut nodes = shared.nodes.load(std::sync::atomic::Ordering::Relaxed);
    if let Some(lim) = opts.node_limit {
        nodes = nodes.min(lim);
    }
    let time_s = start.elapsed().as_secs_f64();
    let stats = SolveStats { nodes, time_s, evaluations: 0 };
    log::info!("nodes={nodes} incumbent={} bound={bound} time={time_s:.3}", shared.incumbent());

    let Some((_, sel)) = shared.take() else {
        return Ok(Solution {
            status,
            selection: Vec::new(),
            predictions: Vec::new(),
            tau_hat: f64::NAN,
            objective: f64::INFINITY,
            bound,
            assignment: Vec::new(),
            stats,
        });
    };
    let selection = CompiledProblem::to_selection(&sel);
    let (predictions, tau_hat) = built.problem.evaluate(&selection)?;
    let objective = cp.objective.eval(tau_hat);
    let assignment = complete_assignment(built, &selection)?;
    Ok(Solution { status, selection, predictions, tau_hat, objective, bound: bound.min(objective), assignment, stats })
}
