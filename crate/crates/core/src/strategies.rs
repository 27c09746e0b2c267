//! Generation strategies: the static layout, two greedy baselines that
//! adjust placement or size, and the exact optimizer.

use std::sync::Arc;

use serde_json::{json, Value};

use crate::corpus::{ctest_to_json, CTest, CTestMeta, Instance};
use crate::error::{Error, Result};
use crate::mip::{build, BuildOptions, Problem};
use crate::solver::{solve, Solution, SolveOptions, Status};

/// How the default gap size follows from the word length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizeRule {
    /// `ceil(l / 2)`: the second half, rounded up.
    #[default]
    CeilHalf,
    /// `max(1, floor(l / 2))`.
    FloorHalf,
}

impl SizeRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ceil" | "ceil-half" => Ok(Self::CeilHalf),
            "floor" | "floor-half" => Ok(Self::FloorHalf),
            _ => Err(Error::InvalidConfig(format!("unknown size rule '{s}'"))),
        }
    }

    pub fn size(self, l: usize) -> usize {
        match self {
            Self::CeilHalf => l.div_ceil(2),
            Self::FloorHalf => (l / 2).max(1),
        }
    }
}

/// `ceil(l / 2)`.
pub fn default_gap_size(l: usize) -> usize {
    SizeRule::CeilHalf.size(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Static,
    Sel,
    Size,
    Mip,
    /// A C-test produced elsewhere, loaded for evaluation only.
    External,
}

impl Strategy {
    pub const BASELINES: [Strategy; 3] = [Strategy::Static, Strategy::Sel, Strategy::Size];

    pub fn name(self) -> &'static str {
        match self {
            Self::Static => "stat",
            Self::Sel => "sel",
            Self::Size => "size",
            Self::Mip => "mip",
            Self::External => "external",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stat" | "static" => Ok(Self::Static),
            "sel" => Ok(Self::Sel),
            "size" => Ok(Self::Size),
            "mip" => Ok(Self::Mip),
            "external" => Ok(Self::External),
            _ => Err(Error::InvalidConfig(format!("unknown strategy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StrategyConfig {
    pub size_rule: SizeRule,
    /// SIZE keeps the step that crosses the target; when false it keeps
    /// the last step before the crossing.
    pub keep_crossing: bool,
    pub build: BuildOptions,
    pub solve: SolveOptions,
    /// Offer the baseline outputs to the solver as starting incumbents.
    pub warm_start: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            size_rule: SizeRule::default(),
            keep_crossing: true,
            build: BuildOptions::default(),
            solve: SolveOptions::default(),
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationResult {
    pub ctest: CTest,
    /// Per-gap predictions in candidate order.
    pub predictions: Vec<f64>,
    pub tau: f64,
    pub tau_hat: f64,
    /// `|tau - tau_hat|`.
    pub objective: f64,
    pub strategy: Strategy,
    pub solver: Option<Solution>,
}

impl GenerationResult {
    /// Whether the objective is proven optimal (always false for baselines).
    pub fn proven(&self) -> bool {
        self.solver.as_ref().is_some_and(|s| s.status == Status::Optimal)
    }

    fn scored(problem: &Problem, selection: &[(usize, usize)], strategy: Strategy) -> Result<Self> {
        let (predictions, tau_hat) = problem.evaluate(selection)?;
        let meta = CTestMeta { strategy: strategy.name().into(), tau: Some(problem.tau) };
        let ctest = CTest::new(problem.instance.clone(), selection, meta)?;
        Ok(Self {
            ctest,
            predictions,
            tau: problem.tau,
            tau_hat,
            objective: problem.distance(tau_hat),
            strategy,
            solver: None,
        })
    }

    pub fn to_json(&self) -> Value {
        let mut v = ctest_to_json(&self.ctest);
        let obj = v.as_object_mut().expect("c-test json is an object");
        obj.insert("tau".into(), json!(self.tau));
        obj.insert("tau_hat".into(), json!(self.tau_hat));
        obj.insert("objective".into(), json!(self.objective));
        obj.insert("strategy".into(), json!(self.strategy.name()));
        obj.insert("per_gap_pred".into(), json!(self.predictions));
        obj.insert("solver".into(), self.solver.as_ref().map_or(Value::Null, Solution::stats_json));
        v
    }
}

fn static_selection(instance: &Instance, m: usize, rule: SizeRule) -> Result<Vec<(usize, usize)>> {
    let n = instance.n();
    if n < 2 * m {
        return Err(Error::NotEnoughCandidates { need: 2 * m, have: n });
    }
    Ok((0..m).map(|k| 2 * k + 1).map(|i| (i, rule.size(instance.candidate(i).word_length))).collect())
}

/// Every second candidate (the 2nd, 4th, ...) at its default size.
pub fn generate_static(instance: &Arc<Instance>, m: usize, rule: SizeRule) -> Result<CTest> {
    let sel = static_selection(instance, m, rule)?;
    CTest::new(instance.clone(), &sel, CTestMeta { strategy: Strategy::Static.name().into(), tau: None })
}

pub fn run_static(problem: &Problem, cfg: &StrategyConfig) -> Result<GenerationResult> {
    let sel = static_selection(&problem.instance, problem.m, cfg.size_rule)?;
    GenerationResult::scored(problem, &sel, Strategy::Static)
}

/// Alternate between the candidates just below (or at) the target and
/// those above it, each side taken closest first.
pub fn select_alternating(predictions: &[f64], tau: f64, m: usize) -> Vec<usize> {
    let mut easier: Vec<usize> = (0..predictions.len()).filter(|&i| predictions[i] <= tau).collect();
    let mut harder: Vec<usize> = (0..predictions.len()).filter(|&i| predictions[i] > tau).collect();
    let by_distance = |a: &usize, b: &usize| {
        (predictions[*a] - tau).abs().total_cmp(&(predictions[*b] - tau).abs()).then(a.cmp(b))
    };
    easier.sort_by(by_distance);
    harder.sort_by(by_distance);
    let (mut e, mut h) = (easier.into_iter(), harder.into_iter());
    let mut out = Vec::with_capacity(m);
    let mut take_easier = true;
    while out.len() < m {
        let next = if take_easier { e.next().or_else(|| h.next()) } else { h.next().or_else(|| e.next()) };
        match next {
            Some(i) => out.push(i),
            None => break,
        }
        take_easier = !take_easier;
    }
    out
}

/// Gap placement baseline. Each candidate is scored at its default size
/// with placement features taken from the static layout (plus itself).
pub fn run_sel(problem: &Problem, cfg: &StrategyConfig) -> Result<GenerationResult> {
    let inst = &problem.instance;
    let layout = static_selection(inst, problem.m, cfg.size_rule)?;
    let mut b = vec![false; inst.n()];
    for &(i, _) in &layout {
        b[i] = true;
    }
    let preds = (0..inst.n())
        .map(|i| {
            let was = std::mem::replace(&mut b[i], true);
            let p = problem.gap_prediction(&b, i, cfg.size_rule.size(inst.candidate(i).word_length));
            b[i] = was;
            p
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sel: Vec<(usize, usize)> = select_alternating(&preds, problem.tau, problem.m)
        .into_iter()
        .map(|i| (i, cfg.size_rule.size(inst.candidate(i).word_length)))
        .collect();
    sel.sort_unstable();
    GenerationResult::scored(problem, &sel, Strategy::Sel)
}

/// Walk one gap's size toward the target from `start`, one character at a
/// time, stopping once the prediction reaches the target or a size bound.
pub fn adjust_size(
    start: usize,
    max: usize,
    tau: f64,
    keep_crossing: bool,
    mut predict: impl FnMut(usize) -> Result<f64>,
) -> Result<usize> {
    let mut j = start;
    let mut p = predict(j)?;
    if p < tau {
        while p < tau && j < max {
            j += 1;
            p = predict(j)?;
        }
        if !keep_crossing && p >= tau && j > start {
            j -= 1;
        }
    } else if p > tau {
        while p > tau && j > 1 {
            j -= 1;
            p = predict(j)?;
        }
        if !keep_crossing && p <= tau && j < start {
            j += 1;
        }
    }
    Ok(j)
}

/// Gap size baseline: static placement, each size moved independently.
pub fn run_size(problem: &Problem, cfg: &StrategyConfig) -> Result<GenerationResult> {
    let inst = &problem.instance;
    let layout = static_selection(inst, problem.m, cfg.size_rule)?;
    let mut b = vec![false; inst.n()];
    for &(i, _) in &layout {
        b[i] = true;
    }
    let sel = layout
        .iter()
        .map(|&(i, j0)| {
            let max = inst.candidate(i).word_length - 1;
            let j = adjust_size(j0, max, problem.tau, cfg.keep_crossing, |j| problem.gap_prediction(&b, i, j))?;
            Ok((i, j))
        })
        .collect::<Result<Vec<_>>>()?;
    GenerationResult::scored(problem, &sel, Strategy::Size)
}

/// Build and solve the exact model. A run stopped by a limit still returns
/// its best C-test, with `proven()` false.
pub fn run_mip(problem: &Problem, cfg: &StrategyConfig) -> Result<GenerationResult> {
    let built = build(problem, &cfg.build)?;
    let mut opts = cfg.solve.clone();
    if cfg.warm_start {
        for s in Strategy::BASELINES {
            if let Ok(r) = generate(problem, s, cfg) {
                opts.warm_starts.push(r.ctest.selection());
            }
        }
    }
    let sol = solve(&built, &opts)?;
    match sol.status {
        Status::Infeasible => return Err(Error::Infeasible("no placement satisfies the restrictions".into())),
        _ if sol.selection.is_empty() => {
            return Err(Error::SolverLimit(format!("no incumbent after {} nodes", sol.stats.nodes)))
        }
        _ => {}
    }
    let meta = CTestMeta { strategy: Strategy::Mip.name().into(), tau: Some(problem.tau) };
    let ctest = CTest::new(problem.instance.clone(), &sol.selection, meta)?;
    Ok(GenerationResult {
        ctest,
        predictions: sol.predictions.clone(),
        tau: problem.tau,
        tau_hat: sol.tau_hat,
        objective: sol.objective,
        strategy: Strategy::Mip,
        solver: Some(sol),
    })
}

pub fn generate(problem: &Problem, strategy: Strategy, cfg: &StrategyConfig) -> Result<GenerationResult> {
    match strategy {
        Strategy::Static => run_static(problem, cfg),
        Strategy::Sel => run_sel(problem, cfg),
        Strategy::Size => run_size(problem, cfg),
        Strategy::Mip => run_mip(problem, cfg),
        Strategy::External => {
            Err(Error::InvalidConfig("external C-tests are loaded with evaluate_external".into()))
        }
    }
}

/// Score a C-test produced outside this crate. The problem must describe
/// the same passage.
pub fn evaluate_external(problem: &Problem, ctest: &CTest) -> Result<GenerationResult> {
    if ctest.instance.document.text != problem.instance.document.text {
        return Err(Error::InvariantViolation("external C-test is for a different passage".into()));
    }
    if ctest.m() != problem.m {
        return Err(Error::InvariantViolation(format!("external C-test has {} gaps, m = {}", ctest.m(), problem.m)));
    }
    GenerationResult::scored(problem, &ctest.selection(), Strategy::External)
}

/// Characters turned into gaps.
pub fn edit_distance(ctest: &CTest) -> usize {
    ctest.gaps.iter().map(|g| g.size).sum()
}
