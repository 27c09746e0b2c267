//! Evaluation: observed difficulty from learner responses, strategy
//! comparison tables, edit-distance curves and encoding run times.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use serde_json::Value;

use crate::corpus::{as_array, as_object, field};
use crate::error::{Error, Result};
use crate::mip::{build, BuildOptions, BuiltModel, ObjectiveEncoding, Problem};
use crate::solver::{solve, SolveOptions, Status};
use crate::strategies::{edit_distance, generate, Strategy, StrategyConfig};

/// Binary error flags (1 = incorrect) per gap.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResponseSet {
    pub gaps: Vec<Vec<u8>>,
}

impl ResponseSet {
    /// Parse `{"gaps": [[0, 1, ...], ...]}`.
    pub fn from_json(value: &Value) -> Result<Self> {
        let root = as_object(value, "")?;
        let gaps = as_array(field(root, "", "gaps")?, "/gaps")?;
        let gaps = gaps
            .iter()
            .enumerate()
            .map(|(g, row)| {
                let path = format!("/gaps/{g}");
                as_array(row, &path)?
                    .iter()
                    .enumerate()
                    .map(|(k, v)| match v.as_u64() {
                        Some(f @ (0 | 1)) => Ok(f as u8),
                        _ => Err(Error::schema(format!("{path}/{k}"), "expected 0 or 1")),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(Self { gaps })
    }

    pub fn parse(input: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(input).map_err(|e| Error::schema("", e.to_string()))?;
        Self::from_json(&v)
    }

    pub fn to_json(&self) -> Value {
        serde_json::json!({ "gaps": self.gaps })
    }

    pub fn responses(&self) -> usize {
        self.gaps.iter().map(Vec::len).sum()
    }

    fn check(&self, m: usize) -> Result<()> {
        if self.gaps.is_empty() || self.gaps.iter().any(Vec::is_empty) {
            return Err(Error::EmptyResponses("every gap needs at least one response".into()));
        }
        if self.gaps.len() != m {
            return Err(Error::LengthMismatch { left: self.gaps.len(), right: m });
        }
        Ok(())
    }
}

/// Fraction of incorrect responses over `m * r`. Every gap must have the
/// same number of responses `r`.
pub fn observed_difficulty(responses: &ResponseSet, m: usize) -> Result<f64> {
    responses.check(m)?;
    let r = responses.gaps[0].len();
    if responses.gaps.iter().any(|g| g.len() != r) {
        return Err(Error::InvariantViolation("ragged responses; use observed_difficulty_weighted".into()));
    }
    let wrong: usize = responses.gaps.iter().flatten().map(|&f| usize::from(f)).sum();
    Ok(wrong as f64 / (m * r) as f64)
}

/// Incorrect responses over all responses; gaps may differ in response count.
pub fn observed_difficulty_weighted(responses: &ResponseSet, m: usize) -> Result<f64> {
    responses.check(m)?;
    let wrong: usize = responses.gaps.iter().flatten().map(|&f| usize::from(f)).sum();
    Ok(wrong as f64 / responses.responses() as f64)
}

/// Simulated learners: each of `r` responses to gap `i` is wrong when a
/// uniform draw falls below the learner model's prediction for that gap.
pub fn simulate_responses<R: Rng>(predictions: &[f64], r: usize, rng: &mut R) -> ResponseSet {
    let gaps = predictions
        .iter()
        .map(|&p| (0..r).map(|_| u8::from(rng.random::<f64>() < p)).collect())
        .collect();
    ResponseSet { gaps }
}

/// Mean and sample standard deviation; the deviation is 0 for fewer than
/// two values.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mu = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mu, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mu).powi(2)).sum();
    (mu, (ss / (n - 1) as f64).sqrt())
}

/// One generated C-test with its measured (or simulated) difficulty.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub strategy: String,
    pub tau: f64,
    /// Observed difficulty, or the predicted one in simulation mode.
    pub difficulty: f64,
    /// Responses behind `difficulty` (1 in simulation mode).
    pub responses: usize,
    pub edit_distance: usize,
}

impl EvalRecord {
    pub fn distance(&self) -> f64 {
        (self.tau - self.difficulty).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// One distance per C-test, then the mean over C-tests.
    #[default]
    PerCTest,
    /// Distances weighted by each C-test's response count.
    PerResponse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub strategy: String,
    pub tau: f64,
    pub records: usize,
    pub mu: f64,
    pub sigma: f64,
}

/// Mean and deviation of `|tau - difficulty|` per (strategy, tau) cell, in
/// order of first appearance.
pub fn compare_strategies(records: &[EvalRecord], agg: Aggregation) -> Vec<CompareRow> {
    let mut cells: Vec<(String, f64, Vec<&EvalRecord>)> = Vec::new();
    for r in records {
        match cells.iter_mut().find(|c| c.0 == r.strategy && c.1 == r.tau) {
            Some(c) => c.2.push(r),
            None => cells.push((r.strategy.clone(), r.tau, vec![r])),
        }
    }
    cells
        .into_iter()
        .map(|(strategy, tau, rs)| {
            let d: Vec<f64> = rs.iter().map(|r| r.distance()).collect();
            let (mut mu, sigma) = mean_sd(&d);
            if agg == Aggregation::PerResponse {
                let w: f64 = rs.iter().map(|r| r.responses as f64).sum();
                if w > 0.0 {
                    mu = rs.iter().map(|r| r.distance() * r.responses as f64).sum::<f64>() / w;
                }
            }
            CompareRow { strategy, tau, records: rs.len(), mu, sigma }
        })
        .collect()
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("strategy,tau,mu,sigma\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.strategy, r.tau, r.mu, r.sigma).expect("string write");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub encoding: ObjectiveEncoding,
    /// Solve times of runs that finished, in seconds.
    pub times: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub max: f64,
    pub min: f64,
    /// Runs stopped by a limit (left out of the statistics).
    pub n_limit: usize,
}

pub type ModelHook<'a> = &'a dyn Fn(ObjectiveEncoding, &mut BuiltModel);

pub struct BenchOptions<'a> {
    pub encodings: Vec<ObjectiveEncoding>,
    pub build: BuildOptions,
    pub solve: SolveOptions,
    /// Applied to each built model before solving (fault injection).
    pub mutate: Option<ModelHook<'a>>,
}

impl Default for BenchOptions<'_> {
    fn default() -> Self {
        Self {
            encodings: ObjectiveEncoding::ALL.to_vec(),
            build: BuildOptions::default(),
            solve: SolveOptions::default(),
            mutate: None,
        }
    }
}

/// Agreement required between the optima of different encodings.
pub const ENCODING_TOLERANCE: f64 = 1e-6;

pub fn encoding_label(e: ObjectiveEncoding) -> &'static str {
    match e {
        ObjectiveEncoding::Epigraph => "Epigraph",
        ObjectiveEncoding::MinMax => "MinMax",
        ObjectiveEncoding::Indicator => "Indicator",
        ObjectiveEncoding::Pwl => "PWL",
    }
}

/// Solve every problem under every encoding, timing only the solve call.
/// Fails with `EncodingMismatch` if two encodings prove different optima
/// on the same problem.
pub fn bench_objectives(problems: &[Problem], opts: &BenchOptions) -> Result<Vec<BenchRow>> {
    let mut times = vec![Vec::new(); opts.encodings.len()];
    let mut limits = vec![0usize; opts.encodings.len()];
    for (p_idx, p) in problems.iter().enumerate() {
        let mut optima: Vec<(ObjectiveEncoding, f64)> = Vec::new();
        for (e_idx, &enc) in opts.encodings.iter().enumerate() {
            let mut built = build(p, &BuildOptions { encoding: enc, ..opts.build })?;
            if let Some(f) = opts.mutate {
                f(enc, &mut built);
            }
            let t = Instant::now();
            let sol = solve(&built, &opts.solve)?;
            let secs = t.elapsed().as_secs_f64();
            match sol.status {
                Status::Optimal => {
                    times[e_idx].push(secs);
                    optima.push((enc, sol.objective));
                }
                _ => limits[e_idx] += 1,
            }
        }
        if let (Some(lo), Some(hi)) = (
            optima.iter().min_by(|a, b| a.1.total_cmp(&b.1)),
            optima.iter().max_by(|a, b| a.1.total_cmp(&b.1)),
        ) {
            if hi.1 - lo.1 > ENCODING_TOLERANCE {
                return Err(Error::EncodingMismatch(format!(
                    "problem {p_idx}: {} reached {} but {} reached {}",
                    encoding_label(lo.0),
                    lo.1,
                    encoding_label(hi.0),
                    hi.1
                )));
            }
        }
    }
    Ok(opts
        .encodings
        .iter()
        .zip(times)
        .zip(limits)
        .map(|((&encoding, times), n_limit)| {
            let (mu, sigma) = mean_sd(&times);
            let max = times.iter().copied().fold(f64::NAN, f64::max);
            let min = times.iter().copied().fold(f64::NAN, f64::min);
            BenchRow { encoding, times, mu, sigma, max, min, n_limit }
        })
        .collect())
}

pub const BENCH_HEADER: &str = "encoding,mu,sigma,max,min,n_limit";

/// One runtime row with two decimals.
pub fn format_bench_row(label: &str, mu: f64, sigma: f64, max: f64, min: f64, n_limit: usize) -> String {
    format!("{label},{mu:.2},{sigma:.2},{max:.2},{min:.2},{n_limit}")
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{BENCH_HEADER}\n");
    for r in rows {
        out.push_str(&format_bench_row(encoding_label(r.encoding), r.mu, r.sigma, r.max, r.min, r.n_limit));
        out.push('\n');
    }
    out
}

/// Encodings ordered by mean solve time, fastest first.
pub fn rank_by_mean(rows: &[BenchRow]) -> Vec<ObjectiveEncoding> {
    let mut r: Vec<&BenchRow> = rows.iter().filter(|r| r.mu.is_finite()).collect();
    r.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    r.into_iter().map(|r| r.encoding).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariabilityRow {
    pub strategy: Strategy,
    pub tau: f64,
    pub mean_edit_distance: f64,
}

/// Mean edit distance per strategy and target over the given problems
/// (their own targets are replaced by each grid value).
pub fn variability_report(
    problems: &[Problem],
    taus: &[f64],
    strategies: &[Strategy],
    cfg: &StrategyConfig,
) -> Result<Vec<VariabilityRow>> {
    if problems.is_empty() {
        return Err(Error::InvalidConfig("variability report needs at least one text".into()));
    }
    let mut rows = Vec::new();
    for &strategy in strategies {
        for &tau in taus {
            let mut total = 0usize;
            for p in problems {
                let q = Problem::new(
                    p.instance.clone(),
                    p.table.clone(),
                    p.ensemble.clone(),
                    tau,
                    p.m,
                    p.extra.clone(),
                )?;
                total += edit_distance(&generate(&q, strategy, cfg)?.ctest);
            }
            rows.push(VariabilityRow { strategy, tau, mean_edit_distance: total as f64 / problems.len() as f64 });
        }
    }
    Ok(rows)
}

pub fn variability_csv(rows: &[VariabilityRow]) -> String {
    let mut out = String::from("strategy,tau,mean_edit_distance\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.strategy.name(), r.tau, r.mean_edit_distance).expect("string write");
    }
    out
}
