mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use ctest_core::corpus::{ctest_from_json, CandidatePolicy, Instance};
use ctest_core::eval::{
    bench_csv, bench_objectives, compare_csv, compare_strategies, encoding_label, observed_difficulty_weighted,
    rank_by_mean, simulate_responses, variability_csv, variability_report, Aggregation, BenchOptions, EvalRecord,
    ResponseSet,
};
use ctest_core::features::{
    compute_features, load_features, save_features, FeatureConfig, FeatureProvider, FeatureRow, FeatureSchema,
    FeatureTable, FeatureVector, Lexicon, PrecomputedProvider, SurrogateProvider, NUM_FEATURES,
};
use ctest_core::mip::{build, write_lp, write_mps, BuildOptions, ExtraConstraints, ObjectiveEncoding, Problem};
use ctest_core::model::{load_model, rmse, save_model, train_gbrt, TrainConfig, TreeEnsemble};
use ctest_core::solver::{brute_force, solve, Branching, SolveOptions, Status, DEFAULT_CAP};
use ctest_core::strategies::{edit_distance, generate, SizeRule, Strategy, StrategyConfig};
use ctest_core::synth;
use ctest_core::Error as CoreError;

use config::Config;

/// Exit codes: 0 success, 2 input or contract error, 3 solver limit
/// without a solution, 4 oracle cap exceeded.
const EXIT_INPUT: u8 = 2;
const EXIT_LIMIT: u8 = 3;
const EXIT_CAP: u8 = 4;
const EXIT_MISMATCH: u8 = 1;

#[derive(Parser)]
#[command(name = "ctestgen", version, about = "Generate C-tests that hit a target difficulty")]
struct Cli {
    /// TOML manifest with defaults; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print one JSON object on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for every random choice (training subsamples, simulation).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the feature table of a passage.
    Extract(ExtractArgs),
    /// Fit a tree ensemble to labelled feature rows.
    Train(TrainArgs),
    /// Generate one C-test.
    Generate(GenerateArgs),
    /// Compare the solver with exhaustive enumeration.
    Oracle(OracleArgs),
    /// Time the objective encodings.
    Bench(BenchArgs),
    /// Summarize generated C-tests against learner responses.
    Eval(EvalArgs),
    /// Write the optimization model in LP or MPS format.
    Export(ExportArgs),
    /// Mean edit distance per strategy over a grid of targets.
    Variability(VariabilityArgs),
    /// Write synthetic passages and training data.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct FeatureOpts {
    /// Precomputed feature file for the passage (skips extraction).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Providers in priority order: `surrogate` or `precomputed:PATH`.
    #[arg(long, value_delimiter = ',')]
    providers: Vec<String>,
    /// Word list for the compound feature.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Fail on features no provider covers.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Clone)]
struct ProblemOpts {
    #[arg(long)]
    text: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// `candidate:size`, repeatable.
    #[arg(long)]
    pin: Vec<String>,
    #[arg(long)]
    exclude: Vec<usize>,
    #[arg(long)]
    max_size: Option<usize>,
    #[command(flatten)]
    features: FeatureOpts,
}

#[derive(Args, Clone)]
struct SolverOpts {
    #[arg(long)]
    encoding: Option<String>,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    node_limit: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// widest | sequential
    #[arg(long)]
    branching: Option<String>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    text: PathBuf,
    #[arg(long)]
    features_out: PathBuf,
    #[command(flatten)]
    features: FeatureOpts,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature rows with every one of the 61 cells filled.
    #[arg(long)]
    features: PathBuf,
    /// One label per line (an optional `label` header is skipped).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long, default_value_t = 50)]
    rounds: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 0.1)]
    shrinkage: f64,
    #[arg(long, default_value_t = 1.0)]
    subsample: f64,
    #[arg(long, default_value_t = 1)]
    min_samples_leaf: usize,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    problem: ProblemOpts,
    #[arg(long)]
    strategy: Option<String>,
    /// ceil | floor
    #[arg(long)]
    size_rule: Option<String>,
    /// SIZE keeps the last size before the prediction crosses the target.
    #[arg(long)]
    size_pre_crossing: bool,
    /// Take BERT features at the default size for every gap size.
    #[arg(long)]
    static_bert: bool,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    problem: ProblemOpts,
    /// Largest number of full assignments to enumerate.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: u64,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of `.txt` passages.
    #[arg(long)]
    instances: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    encodings: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.9])]
    taus: Vec<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of generation result JSON files.
    #[arg(long)]
    results: PathBuf,
    /// Directory of response files named like the results.
    #[arg(long)]
    responses: Option<PathBuf>,
    /// Sample responses from this learner model instead.
    #[arg(long)]
    learner_model: Option<PathBuf>,
    /// Simulated responses per gap.
    #[arg(long, default_value_t = 5)]
    responses_per_gap: usize,
    /// per-ctest | per-response
    #[arg(long, default_value = "per-ctest")]
    aggregation: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per C-test CSV: file,strategy,tau,tau_star,edit_distance.
    #[arg(long)]
    ctests_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    problem: ProblemOpts,
    #[arg(long)]
    encoding: Option<String>,
    /// lp | mps
    #[arg(long, default_value = "lp")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VariabilityArgs {
    #[arg(long)]
    instances: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5, 0.7, 0.9])]
    taus: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = ["stat".to_string(), "sel".to_string(), "size".to_string(), "mip".to_string()])]
    strategies: Vec<String>,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Random passages behind the training rows.
    #[arg(long, default_value_t = 60)]
    passages: usize,
    /// Standard deviation of label noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

struct Ctx {
    cfg: Config,
    json: bool,
    seed: u64,
}

/// An error with a chosen exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Exit>() {
        return e.0;
    }
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::TooLarge { .. }) => EXIT_CAP,
        Some(CoreError::SolverLimit(_)) => EXIT_LIMIT,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match cli.config.as_deref().map(Config::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let ctx = Ctx { cfg, json: cli.json, seed: cli.seed };
    let res = match cli.cmd {
        Cmd::Extract(a) => cmd_extract(&ctx, a),
        Cmd::Train(a) => cmd_train(&ctx, a),
        Cmd::Generate(a) => cmd_generate(&ctx, a),
        Cmd::Oracle(a) => cmd_oracle(&ctx, a),
        Cmd::Bench(a) => cmd_bench(&ctx, a),
        Cmd::Eval(a) => cmd_eval(&ctx, a),
        Cmd::Export(a) => cmd_export(&ctx, a),
        Cmd::Variability(a) => cmd_variability(&ctx, a),
        Cmd::Synth(a) => cmd_synth(&ctx, a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

impl Ctx {
    fn emit(&self, value: Value, text: impl FnOnce() -> String) {
        if self.json {
            println!("{value}");
        } else {
            println!("{}", text());
        }
    }

    fn model_path(&self, flag: Option<&PathBuf>) -> Result<PathBuf> {
        flag.cloned()
            .or_else(|| self.cfg.paths.model.clone())
            .ok_or_else(|| anyhow!(Exit(EXIT_INPUT, "no model given (--model or paths.model)".into())))
    }

    fn corpus_dir(&self, flag: Option<&PathBuf>) -> Result<PathBuf> {
        flag.cloned()
            .or_else(|| self.cfg.paths.corpus.clone())
            .ok_or_else(|| anyhow!(Exit(EXIT_INPUT, "no instance directory given (--instances or paths.corpus)".into())))
    }

    fn m(&self, flag: Option<usize>) -> Result<usize> {
        flag.or(self.cfg.generation.m)
            .ok_or_else(|| anyhow!(Exit(EXIT_INPUT, "no gap count given (--m or generation.m)".into())))
    }

    fn tau(&self, flag: Option<f64>) -> Option<f64> {
        flag.or(self.cfg.generation.tau)
    }

    fn out_path(&self, flag: Option<&PathBuf>, default_name: &str) -> Option<PathBuf> {
        flag.cloned().or_else(|| self.cfg.paths.output_dir.as_ref().map(|d| d.join(default_name)))
    }

    fn solve_options(&self, s: &SolverOpts) -> Result<SolveOptions> {
        let c = &self.cfg.solver;
        let mut o = SolveOptions::default();
        if let Some(t) = s.time_limit.or(c.time_limit) {
            if !(t > 0.0) {
                bail!(Exit(EXIT_INPUT, format!("time limit {t} must be positive")));
            }
            o.time_limit = Some(Duration::from_secs_f64(t));
        }
        o.node_limit = s.node_limit.or(c.node_limit);
        o.threads = s.threads.or(c.threads).unwrap_or(1).max(1);
        if let Some(t) = s.tolerance.or(c.tolerance) {
            o.tolerance = t;
        }
        if let Some(b) = s.branching.as_deref().or(c.branching.as_deref()) {
            o.branching = match b {
                "widest" => Branching::WidestInterval,
                "sequential" => Branching::Sequential,
                _ => bail!(Exit(EXIT_INPUT, format!("unknown branching rule '{b}'"))),
            };
        }
        Ok(o)
    }

    fn encoding(&self, flag: Option<&str>) -> Result<ObjectiveEncoding> {
        match flag.or(self.cfg.solver.encoding.as_deref()) {
            Some(e) => Ok(ObjectiveEncoding::parse(e)?),
            None => Ok(ObjectiveEncoding::default()),
        }
    }

    fn feature_config(&self, f: &FeatureOpts) -> Result<FeatureConfig> {
        let resource = std::env::var_os("CTEST_RESOURCE_DIR").map(PathBuf::from);
        let resolve = |p: &Path| match &resource {
            Some(dir) if p.is_relative() && !p.exists() => dir.join(p),
            _ => p.to_path_buf(),
        };
        let mut providers: Vec<Arc<dyn FeatureProvider>> = Vec::new();
        let specs: Vec<String> = if f.providers.is_empty() {
            match self.cfg.providers.mode.as_deref() {
                Some("precomputed") => match &self.cfg.paths.features {
                    Some(p) => vec![format!("precomputed:{}", p.display())],
                    None => bail!(Exit(EXIT_INPUT, "providers.mode = precomputed needs paths.features".into())),
                },
                _ => vec!["surrogate".into()],
            }
        } else {
            f.providers.clone()
        };
        for spec in &specs {
            match spec.split_once(':') {
                None if spec == "surrogate" => providers.push(Arc::new(SurrogateProvider)),
                Some(("precomputed", path)) => {
                    providers.push(Arc::new(PrecomputedProvider::load(&resolve(Path::new(path)))?))
                }
                _ => bail!(Exit(EXIT_INPUT, format!("unknown provider '{spec}'"))),
            }
        }
        let lexicon_path = f
            .lexicon
            .as_deref()
            .map(resolve)
            .or_else(|| self.cfg.paths.lexicon.clone())
            .or_else(|| resource.as_ref().map(|d| d.join("lexicon.txt")).filter(|p| p.exists()));
        let lexicon = lexicon_path.map(|p| Lexicon::load(&p)).transpose()?;
        let strict = f.strict || self.cfg.providers.strict.unwrap_or(false);
        Ok(FeatureConfig { schema: FeatureSchema::default(), providers, lexicon, strict })
    }

    fn instance(&self, text: &Path) -> Result<Arc<Instance>> {
        let raw = std::fs::read_to_string(text).with_context(|| format!("reading {}", text.display()))?;
        Ok(Arc::new(Instance::from_text(&raw, &CandidatePolicy::default())?))
    }

    fn table(&self, inst: &Instance, f: &FeatureOpts) -> Result<Arc<FeatureTable>> {
        match &f.features {
            Some(p) => Ok(Arc::new(FeatureTable::from_rows(inst, FeatureSchema::default(), &load_features(p)?)?)),
            None => Ok(Arc::new(compute_features(inst, &self.feature_config(f)?)?.table)),
        }
    }

    fn problem(&self, p: &ProblemOpts, tau: f64) -> Result<Problem> {
        let inst = self.instance(&p.text)?;
        let table = self.table(&inst, &p.features)?;
        let ens = Arc::new(load_model(&self.model_path(p.model.as_ref())?)?);
        let mut extra = ExtraConstraints { excludes: p.exclude.clone(), max_size: p.max_size, ..Default::default() };
        for pin in &p.pin {
            let (i, j) = pin
                .split_once(':')
                .and_then(|(i, j)| Some((i.trim().parse().ok()?, j.trim().parse().ok()?)))
                .ok_or_else(|| Exit(EXIT_INPUT, format!("pin '{pin}' is not candidate:size")))?;
            extra.pins.push((i, j));
        }
        Ok(Problem::new(inst, table, ens, tau, self.m(p.m)?, extra)?)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_extract(ctx: &Ctx, a: ExtractArgs) -> Result<()> {
    let inst = ctx.instance(&a.text)?;
    let ext = compute_features(&inst, &ctx.feature_config(&a.features)?)?;
    save_features(&a.features_out, &ext.table.to_rows())?;
    let defaulted = ext.defaulted_cells();
    ctx.emit(
        json!({"n": inst.n(), "defaulted_features": ext.warnings.len(), "defaulted_cells": defaulted}),
        || {
            let mut s = format!("n = {}", inst.n());
            if defaulted > 0 {
                s.push_str(&format!(
                    "\nwarning: {} features defaulted to 0 over {defaulted} cells",
                    ext.warnings.len()
                ));
            }
            s
        },
    );
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<f64>> {
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (k, line) in raw.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || (k == 0 && t.eq_ignore_ascii_case("label")) {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| {
            CoreError::Format { row: k + 1, column: 1, message: format!("expected number, found '{t}'") }
        })?;
        out.push(v);
    }
    Ok(out)
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let rows = load_features(&a.features)?;
    let x = rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let mut v = [0.0; NUM_FEATURES];
            for k in 0..NUM_FEATURES {
                v[k] = row.values[k].ok_or(CoreError::Format {
                    row: r + 2,
                    column: k + 3,
                    message: "training rows need every feature".into(),
                })?;
            }
            Ok(FeatureVector(v))
        })
        .collect::<Result<Vec<_>, CoreError>>()?;
    let y = read_labels(&a.labels)?;
    if x.len() != y.len() {
        return Err(CoreError::LengthMismatch { left: x.len(), right: y.len() }.into());
    }
    let cfg = TrainConfig {
        rounds: a.rounds,
        max_depth: a.depth,
        shrinkage: a.shrinkage,
        min_samples_leaf: a.min_samples_leaf,
        subsample: a.subsample,
        seed: ctx.seed,
    };
    let ens = train_gbrt(&x, &y, &cfg)?;
    let pred: Vec<f64> = x.iter().map(|v| ens.predict(&v.0)).collect();
    let err = rmse(&pred, &y)?;
    save_model(&a.model_out, &ens)?;
    ctx.emit(json!({"rows": x.len(), "trees": ens.trees.len(), "rmse": err}), || {
        format!("trained {} trees on {} rows; training RMSE {err:.6}", ens.trees.len(), x.len())
    });
    Ok(())
}

fn strategy_config(ctx: &Ctx, a: &GenerateArgs) -> Result<StrategyConfig> {
    let mut cfg = StrategyConfig::default();
    if let Some(r) = a.size_rule.as_deref().or(ctx.cfg.generation.size_rule.as_deref()) {
        cfg.size_rule = SizeRule::parse(r)?;
    }
    cfg.keep_crossing = !a.size_pre_crossing;
    cfg.build = BuildOptions {
        encoding: ctx.encoding(a.solver.encoding.as_deref())?,
        vary_bert: !a.static_bert,
        ..Default::default()
    };
    cfg.solve = ctx.solve_options(&a.solver)?;
    Ok(cfg)
}

fn cmd_generate(ctx: &Ctx, a: GenerateArgs) -> Result<()> {
    let strategy = Strategy::parse(a.strategy.as_deref().or(ctx.cfg.generation.strategy.as_deref()).unwrap_or("mip"))?;
    if strategy == Strategy::External {
        bail!(Exit(EXIT_INPUT, "external C-tests are scored by `eval`, not generated".into()));
    }
    let tau = match (ctx.tau(a.problem.tau), strategy) {
        (Some(t), _) => t,
        (None, Strategy::Static) => 0.5,
        (None, _) => bail!(Exit(EXIT_INPUT, "no target given (--tau or generation.tau)".into())),
    };
    if strategy == Strategy::Static && a.problem.tau.is_some() {
        eprintln!("warning: the static strategy ignores --tau");
    }
    let problem = ctx.problem(&a.problem, tau)?;
    let cfg = strategy_config(ctx, &a)?;
    let res = generate(&problem, strategy, &cfg)?;
    let body = serde_json::to_string_pretty(&res.to_json())?;
    if let Some(out) = ctx.out_path(a.out.as_ref(), "generation.json") {
        write_file(&out, &(body.clone() + "\n"))?;
    }
    let mut summary = json!({
        "strategy": strategy.name(),
        "tau": res.tau,
        "tau_hat": res.tau_hat,
        "objective": res.objective,
        "edit_distance": edit_distance(&res.ctest),
    });
    if let Some(sol) = &res.solver {
        summary["solver"] = sol.stats_json();
    }
    ctx.emit(summary, || {
        let mut s = format!("tau_hat = {:.9}\n|tau - tau_hat| = {:e}", res.tau_hat, res.objective);
        if let Some(sol) = &res.solver {
            s.push_str(&format!(
                "\nstatus = {}  nodes = {}  time = {:.3}s  bound = {:e}",
                sol.status.name(),
                sol.stats.nodes,
                sol.stats.time_s,
                sol.bound
            ));
        }
        s
    });
    if res.solver.as_ref().is_some_and(|s| s.status == Status::Limit) {
        eprintln!("warning: solver stopped at a limit; the result is not proven optimal");
    }
    Ok(())
}

fn cmd_oracle(ctx: &Ctx, a: OracleArgs) -> Result<()> {
    let tau = ctx
        .tau(a.problem.tau)
        .ok_or_else(|| Exit(EXIT_INPUT, "no target given (--tau or generation.tau)".into()))?;
    let problem = ctx.problem(&a.problem, tau)?;
    let oracle = brute_force(&problem, a.cap)?;
    let built = build(&problem, &BuildOptions { encoding: ctx.encoding(a.solver.encoding.as_deref())?, ..Default::default() })?;
    let sol = solve(&built, &ctx.solve_options(&a.solver)?)?;
    let ok = (sol.objective - oracle.objective).abs() <= 1e-9;
    let verdict = if ok { "MATCH" } else { "MISMATCH" };
    ctx.emit(
        json!({
            "oracle_objective": oracle.objective,
            "solver_objective": sol.objective,
            "evaluations": oracle.stats.evaluations,
            "status": sol.status,
            "verdict": verdict,
        }),
        || {
            format!(
                "brute force: {:e} ({} evaluations)\nsolver:      {:e} ({})\n{verdict}",
                oracle.objective,
                oracle.stats.evaluations,
                sol.objective,
                sol.status.name()
            )
        },
    );
    if ok {
        Ok(())
    } else {
        Err(Exit(EXIT_MISMATCH, "solver and brute force disagree".into()).into())
    }
}

fn text_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    out.sort();
    Ok(out)
}

/// Problems for every passage in `dir` and every target; per-file errors
/// are collected rather than fatal.
fn corpus_problems(
    ctx: &Ctx,
    dir: &Path,
    model: &Arc<TreeEnsemble>,
    taus: &[f64],
    m: usize,
) -> Result<(Vec<Problem>, Vec<String>)> {
    let mut problems = Vec::new();
    let mut errors = Vec::new();
    let fopts = FeatureOpts { features: None, providers: Vec::new(), lexicon: None, strict: false };
    for file in text_files(dir)? {
        let loaded = ctx.instance(&file).and_then(|inst| {
            let table = ctx.table(&inst, &fopts)?;
            taus.iter()
                .map(|&t| {
                    Problem::new(inst.clone(), table.clone(), model.clone(), t, m, ExtraConstraints::default())
                        .map_err(anyhow::Error::from)
                })
                .collect::<Result<Vec<_>>>()
        });
        match loaded {
            Ok(ps) => problems.extend(ps),
            Err(e) => errors.push(format!("{}: {e:#}", file.display())),
        }
    }
    Ok((problems, errors))
}

fn cmd_bench(ctx: &Ctx, a: BenchArgs) -> Result<()> {
    let dir = ctx.corpus_dir(a.instances.as_ref())?;
    let model = Arc::new(load_model(&ctx.model_path(a.model.as_ref())?)?);
    let m = ctx.m(a.m)?;
    let (problems, mut errors) = corpus_problems(ctx, &dir, &model, &a.taus, m)?;
    let encodings = if a.encodings.is_empty() {
        ObjectiveEncoding::ALL.to_vec()
    } else {
        a.encodings.iter().map(|e| ObjectiveEncoding::parse(e)).collect::<Result<_, _>>()?
    };
    let mut solve = ctx.solve_options(&a.solver)?;
    // Runtime numbers are only meaningful uncontended.
    solve.threads = 1;
    let opts = BenchOptions { encodings, solve, ..Default::default() };
    let rows = bench_objectives(&problems, &opts)?;
    let csv = bench_csv(&rows);
    if let Some(out) = ctx.out_path(a.out.as_ref(), "bench.csv") {
        write_file(&out, &csv)?;
    }
    let ranking: Vec<&str> = rank_by_mean(&rows).into_iter().map(encoding_label).collect();
    let pwl_mu = rows.iter().find(|r| r.encoding == ObjectiveEncoding::Pwl).map(|r| r.mu);
    let compact_faster =
        pwl_mu.map(|p| rows.iter().any(|r| r.encoding != ObjectiveEncoding::Pwl && r.mu < p));
    ctx.emit(
        json!({
            "problems": problems.len(),
            "rows": rows.iter().map(|r| json!({
                "encoding": encoding_label(r.encoding), "mu": r.mu, "sigma": r.sigma,
                "max": r.max, "min": r.min, "n_limit": r.n_limit,
            })).collect::<Vec<_>>(),
            "ranking": ranking,
            "compact_faster_than_pwl": compact_faster,
            "errors": errors,
        }),
        || {
            let mut s = csv.trim_end().to_string();
            s.push_str(&format!("\nranking by mean: {}", ranking.join(" < ")));
            if let Some(c) = compact_faster {
                s.push_str(&format!("\ncompact encoding faster than PWL: {}", if c { "yes" } else { "no" }));
            }
            s
        },
    );
    if let Some(n) = rows.iter().map(|r| r.n_limit).max().filter(|&n| n > 0) {
        eprintln!("note: up to {n} runs per encoding hit a limit and are left out of the statistics");
    }
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("error: {e}");
        }
        let n = errors.len();
        errors.clear();
        bail!(Exit(EXIT_INPUT, format!("{n} instance files failed")));
    }
    Ok(())
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    Ok(out)
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let agg = match a.aggregation.as_str() {
        "per-ctest" => Aggregation::PerCTest,
        "per-response" => Aggregation::PerResponse,
        o => bail!(Exit(EXIT_INPUT, format!("unknown aggregation '{o}'"))),
    };
    let learner = a.learner_model.as_deref().map(load_model).transpose()?.map(Arc::new);
    if learner.is_none() && a.responses.is_none() {
        bail!(Exit(EXIT_INPUT, "give --responses or --learner-model".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut records = Vec::new();
    let mut per_ctest = Vec::new();
    let mut errors = Vec::new();
    for file in json_files(&a.results)? {
        let mut one = || -> Result<(EvalRecord, String)> {
            let raw = std::fs::read_to_string(&file)?;
            let v: Value = serde_json::from_str(&raw).map_err(|e| CoreError::Format {
                row: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            let ct = ctest_from_json(&v, &CandidatePolicy::default())?;
            let tau = v
                .get("tau")
                .and_then(Value::as_f64)
                .or(ct.meta.tau)
                .ok_or_else(|| anyhow!("no target difficulty recorded"))?;
            let strategy =
                v.get("strategy").and_then(Value::as_str).unwrap_or(ct.meta.strategy.as_str()).to_string();
            let responses = match &learner {
                Some(model) => {
                    let table = Arc::new(compute_features(&ct.instance, &FeatureConfig::surrogate())?.table);
                    let p = Problem::new(ct.instance.clone(), table, model.clone(), tau, ct.m(), Default::default())?;
                    let (preds, _) = p.evaluate(&ct.selection())?;
                    simulate_responses(&preds, a.responses_per_gap, &mut rng)
                }
                None => {
                    let dir = a.responses.as_ref().expect("checked above");
                    let path = dir.join(file.file_name().expect("file"));
                    ResponseSet::parse(&std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?
                }
            };
            let difficulty = observed_difficulty_weighted(&responses, ct.m())?;
            let rec = EvalRecord {
                strategy,
                tau,
                difficulty,
                responses: responses.responses(),
                edit_distance: edit_distance(&ct),
            };
            Ok((rec, file.file_name().unwrap_or_default().to_string_lossy().into_owned()))
        };
        match one() {
            Ok((rec, name)) => {
                per_ctest.push((name, rec.clone()));
                records.push(rec);
            }
            Err(e) => errors.push(format!("{}: {e:#}", file.display())),
        }
    }
    let rows = compare_strategies(&records, agg);
    let csv = compare_csv(&rows);
    if let Some(out) = ctx.out_path(a.out.as_ref(), "eval.csv") {
        write_file(&out, &csv)?;
    }
    if let Some(out) = &a.ctests_out {
        let mut s = String::from("file,strategy,tau,tau_star,edit_distance\n");
        for (name, r) in &per_ctest {
            s.push_str(&format!("{name},{},{},{},{}\n", r.strategy, r.tau, r.difficulty, r.edit_distance));
        }
        write_file(out, &s)?;
    }
    ctx.emit(
        json!({
            "rows": rows.iter().map(|r| json!({
                "strategy": r.strategy, "tau": r.tau, "records": r.records, "mu": r.mu, "sigma": r.sigma,
            })).collect::<Vec<_>>(),
            "ctests": per_ctest.iter().map(|(n, r)| json!({
                "file": n, "strategy": r.strategy, "tau": r.tau, "tau_star": r.difficulty,
                "edit_distance": r.edit_distance,
            })).collect::<Vec<_>>(),
            "errors": errors,
        }),
        || csv.trim_end().to_string(),
    );
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("error: {e}");
        }
        bail!(Exit(EXIT_INPUT, format!("{} result files failed", errors.len())));
    }
    Ok(())
}

fn cmd_export(ctx: &Ctx, a: ExportArgs) -> Result<()> {
    let tau = ctx
        .tau(a.problem.tau)
        .ok_or_else(|| Exit(EXIT_INPUT, "no target given (--tau or generation.tau)".into()))?;
    let problem = ctx.problem(&a.problem, tau)?;
    let built = build(&problem, &BuildOptions { encoding: ctx.encoding(a.encoding.as_deref())?, ..Default::default() })?;
    let body = match a.format.as_str() {
        "lp" => write_lp(&built.model),
        "mps" => write_mps(&built.model)?,
        f => bail!(Exit(EXIT_INPUT, format!("unknown format '{f}' (lp or mps)"))),
    };
    write_file(&a.out, &body)?;
    let st = built.model.stats();
    ctx.emit(
        json!({"rows": st.rows, "columns": st.columns, "nonzeros": st.nonzeros, "format": a.format}),
        || format!("wrote {} ({} rows, {} columns, {} nonzeros)", a.out.display(), st.rows, st.columns, st.nonzeros),
    );
    Ok(())
}

fn cmd_variability(ctx: &Ctx, a: VariabilityArgs) -> Result<()> {
    let dir = ctx.corpus_dir(a.instances.as_ref())?;
    let model = Arc::new(load_model(&ctx.model_path(a.model.as_ref())?)?);
    let m = ctx.m(a.m)?;
    let (problems, errors) = corpus_problems(ctx, &dir, &model, &[0.5], m)?;
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("error: {e}");
        }
        bail!(Exit(EXIT_INPUT, format!("{} instance files failed", errors.len())));
    }
    let strategies = a.strategies.iter().map(|s| Strategy::parse(s)).collect::<Result<Vec<_>, _>>()?;
    let cfg = StrategyConfig { solve: ctx.solve_options(&a.solver)?, ..Default::default() };
    let rows = variability_report(&problems, &a.taus, &strategies, &cfg)?;
    let csv = variability_csv(&rows);
    if let Some(out) = ctx.out_path(a.out.as_ref(), "variability.csv") {
        write_file(&out, &csv)?;
    }
    ctx.emit(
        json!(rows
            .iter()
            .map(|r| json!({"strategy": r.strategy.name(), "tau": r.tau, "mean_edit_distance": r.mean_edit_distance}))
            .collect::<Vec<_>>()),
        || csv.trim_end().to_string(),
    );
    Ok(())
}

fn cmd_synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (k, text) in synth::FIXTURE_PASSAGES.iter().enumerate() {
        write_file(&a.out.join(format!("passage_{}.txt", k + 1)), text)?;
    }
    let (x, y) = synth::training_data(ctx.seed, a.passages, a.noise)?;
    let rows: Vec<FeatureRow> = x
        .iter()
        .enumerate()
        .map(|(r, v)| FeatureRow {
            candidate: r,
            size: v.0[ctest_core::features::GAP_LENGTH] as usize,
            values: v.0.map(Some),
        })
        .collect();
    save_features(&a.out.join("train_features.csv"), &rows)?;
    let mut labels = String::from("label\n");
    for v in &y {
        labels.push_str(&format!("{v}\n"));
    }
    write_file(&a.out.join("train_labels.csv"), &labels)?;
    ctx.emit(json!({"passages": synth::FIXTURE_PASSAGES.len(), "rows": rows.len()}), || {
        format!("wrote {} passages and {} training rows to {}", synth::FIXTURE_PASSAGES.len(), rows.len(), a.out.display())
    });
    Ok(())
}
