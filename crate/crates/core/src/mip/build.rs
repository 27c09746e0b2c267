use std::sync::Arc;

use super::{MipModel, PwlTerm, Sense, VarId, VarKind};
use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::features::{
    assemble_vector, FeatureTable, PlacementContext, PlacementFeature, BERT_ENTROPY, BERT_PROBABILITY,
};
use crate::model::{FeatureBox, TreeEnsemble};

/// Learner-specific restrictions, applied as variable bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtraConstraints {
    /// `(candidate, size)` pairs that must be gaps of exactly that size.
    pub pins: Vec<(usize, usize)>,
    /// Candidates that must not be gapped.
    pub excludes: Vec<usize>,
    /// Largest admissible gap size.
    pub max_size: Option<usize>,
}

/// Everything needed to score a placement: the instance, its feature
/// table, the difficulty model, the target and the gap count.
#[derive(Debug, Clone)]
pub struct Problem {
    pub instance: Arc<Instance>,
    pub table: Arc<FeatureTable>,
    pub ensemble: Arc<TreeEnsemble>,
    pub ctx: PlacementContext,
    pub tau: f64,
    pub m: usize,
    pub extra: ExtraConstraints,
}

impl Problem {
    pub fn new(
        instance: Arc<Instance>,
        table: Arc<FeatureTable>,
        ensemble: Arc<TreeEnsemble>,
        tau: f64,
        m: usize,
        extra: ExtraConstraints,
    ) -> Result<Self> {
        let n = instance.n();
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidConfig(format!("target difficulty {tau} outside [0, 1]")));
        }
        if m == 0 {
            return Err(Error::InvalidConfig("gap count must be at least 1".into()));
        }
        if m > n {
            return Err(Error::NotEnoughCandidates { need: m, have: n });
        }
        if table.n() != n {
            return Err(Error::LengthMismatch { left: table.n(), right: n });
        }
        for i in 0..n {
            if table.sizes(i) != instance.candidate(i).word_length - 1 {
                return Err(Error::InvariantViolation(format!("feature table sizes do not match candidate {i}")));
            }
        }
        if extra.max_size == Some(0) {
            return Err(Error::InvalidConfig("size cap must be at least 1".into()));
        }
        let mut pinned = vec![false; n];
        for &(i, j) in &extra.pins {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if j < 1 || j >= instance.candidate(i).word_length {
                return Err(Error::InvalidConfig(format!("pinned size {j} invalid for candidate {i}")));
            }
            if extra.max_size.is_some_and(|c| j > c) {
                return Err(Error::InvalidConfig(format!("pin ({i}, {j}) exceeds the size cap")));
            }
            if std::mem::replace(&mut pinned[i], true) {
                return Err(Error::InvalidConfig(format!("candidate {i} pinned twice")));
            }
        }
        for &i in &extra.excludes {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if pinned[i] {
                return Err(Error::InvalidConfig(format!("candidate {i} both pinned and excluded")));
            }
        }
        let ctx = PlacementContext::new(&instance);
        let p = Self { instance, table, ensemble, ctx, tau, m, extra };
        let pins = p.extra.pins.len();
        let available = (0..n).filter(|&i| !p.allowed_sizes(i).is_empty()).count();
        if pins > m {
            return Err(Error::Infeasible(format!("{pins} pinned gaps exceed m = {m}")));
        }
        if available < m {
            return Err(Error::Infeasible(format!("only {available} candidates can be gapped, m = {m}")));
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.instance.n()
    }

    pub fn pinned(&self, i: usize) -> Option<usize> {
        self.extra.pins.iter().find(|p| p.0 == i).map(|p| p.1)
    }

    pub fn is_excluded(&self, i: usize) -> bool {
        self.extra.excludes.contains(&i)
    }

    /// Sizes candidate `i` may take; empty if it cannot be gapped.
    pub fn allowed_sizes(&self, i: usize) -> Vec<usize> {
        if self.is_excluded(i) {
            return Vec::new();
        }
        if let Some(j) = self.pinned(i) {
            return vec![j];
        }
        let cap = self.extra.max_size.unwrap_or(usize::MAX);
        self.instance.candidate(i).sizes().filter(|&j| j <= cap).collect()
    }

    /// Raw model prediction for gap `(i, j)` under placement `b`.
    pub fn gap_prediction(&self, b: &[bool], i: usize, j: usize) -> Result<f64> {
        let x = assemble_vector(&self.table, &self.ctx, i, j, b)?;
        Ok(self.ensemble.predict(&x.0))
    }

    /// Per-gap predictions (in candidate order) and their mean over `m`.
    pub fn evaluate(&self, selection: &[(usize, usize)]) -> Result<(Vec<f64>, f64)> {
        let mut sel = selection.to_vec();
        sel.sort_unstable();
        let mut b = vec![false; self.n()];
        for &(i, _) in &sel {
            if i >= b.len() {
                return Err(Error::IndexOutOfRange { index: i, len: b.len() });
            }
            b[i] = true;
        }
        let preds = sel.iter().map(|&(i, j)| self.gap_prediction(&b, i, j)).collect::<Result<Vec<_>>>()?;
        let tau_hat = mean_in_order(&preds, self.m);
        Ok((preds, tau_hat))
    }

    pub fn distance(&self, tau_hat: f64) -> f64 {
        (self.tau - tau_hat).abs()
    }

    /// Whether `selection` has `m` gaps that respect every restriction.
    pub fn is_feasible(&self, selection: &[(usize, usize)]) -> bool {
        let mut seen = vec![false; self.n()];
        selection.len() == self.m
            && selection.iter().all(|&(i, j)| {
                i < seen.len() && !std::mem::replace(&mut seen[i], true) && self.allowed_sizes(i).contains(&j)
            })
            && self.extra.pins.iter().all(|p| selection.contains(p))
    }
}

/// Sum in the given order, divided by `m`.
pub(crate) fn mean_in_order(values: &[f64], m: usize) -> f64 {
    let mut acc = 0.0;
    for v in values {
        acc += v;
    }
    acc / m as f64
}

/// Copy of `table` whose BERT features no longer vary with gap size: every
/// size of candidate `i` takes the values at `reference[i]`.
pub fn with_static_bert(table: &FeatureTable, reference: &[usize]) -> Result<FeatureTable> {
    if reference.len() != table.n() {
        return Err(Error::LengthMismatch { left: reference.len(), right: table.n() });
    }
    let rows = (0..table.n())
        .map(|i| {
            let r = reference[i];
            if r < 1 || r > table.sizes(i) {
                return Err(Error::InvariantViolation(format!("reference size {r} invalid for candidate {i}")));
            }
            let fixed = *table.row(i, r);
            Ok((1..=table.sizes(i))
                .map(|j| {
                    let mut row = *table.row(i, j);
                    row[BERT_PROBABILITY] = fixed[BERT_PROBABILITY];
                    row[BERT_ENTROPY] = fixed[BERT_ENTROPY];
                    row
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureTable::from_raw(table.schema.clone(), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveEncoding {
    #[default]
    Epigraph,
    MinMax,
    Indicator,
    Pwl,
}

impl ObjectiveEncoding {
    pub const ALL: [ObjectiveEncoding; 4] =
        [ObjectiveEncoding::Epigraph, ObjectiveEncoding::MinMax, ObjectiveEncoding::Indicator, ObjectiveEncoding::Pwl];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveEncoding::Epigraph => "epigraph",
            ObjectiveEncoding::MinMax => "minmax",
            ObjectiveEncoding::Indicator => "indicator",
            ObjectiveEncoding::Pwl => "pwl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown objective encoding '{s}'")))
    }
}

/// How big-M coefficients of the leaf linking rows are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BigMPolicy {
    /// Per row, the distance from the leaf bound to the feature's domain bound.
    #[default]
    Auto,
    /// One constant `n` for every row; valid but looser.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub encoding: ObjectiveEncoding,
    pub big_m: BigMPolicy,
    /// When false, BERT features are taken at the default size for every j.
    pub vary_bert: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { encoding: ObjectiveEncoding::Epigraph, big_m: BigMPolicy::Auto, vary_bert: true }
    }
}

/// One reachable leaf of an embedded tree with its integer placement box.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafVar {
    pub var: VarId,
    pub value: f64,
    /// Inclusive integer bounds per placement slot.
    pub bounds: [(i64, i64); 4],
}

impl LeafVar {
    pub fn contains(&self, f: &[u32; 4]) -> bool {
        self.bounds.iter().zip(f).all(|(&(lo, hi), &v)| lo <= i64::from(v) && i64::from(v) <= hi)
    }
}

/// Embedding of the ensemble for one gap `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBlock {
    /// Ensemble restricted to this gap's static values and placement domain.
    pub reduced: TreeEnsemble,
    /// Base score plus shrunk values of trees that collapsed to a leaf.
    pub constant: f64,
    /// Leaf indicators of the trees that still split.
    pub trees: Vec<Vec<LeafVar>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveVars {
    Epigraph { u: VarId },
    MinMax { hi: VarId, lo: VarId, delta: VarId },
    Indicator { delta: VarId, d: VarId },
    Pwl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarMap {
    pub b: Vec<VarId>,
    /// `s[i][j - 1]`.
    pub s: Vec<Vec<VarId>>,
    pub e: Vec<Vec<VarId>>,
    /// Placement feature variables in `PlacementFeature::ALL` order.
    pub f: Vec<[VarId; 4]>,
    pub blocks: Vec<Vec<EmbeddingBlock>>,
    pub tau_hat: VarId,
    pub objective: ObjectiveVars,
}

#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: MipModel,
    pub vars: VarMap,
    /// The problem the model encodes (with static BERT features applied).
    pub problem: Arc<Problem>,
    pub options: BuildOptions,
}

fn fmt_tau(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn pwl_points(tau: f64) -> Vec<(f64, f64)> {
    let mut pts = vec![(0.0, tau), (tau, 0.0), (1.0, 1.0 - tau)];
    pts.dedup_by(|a, b| a.0 == b.0);
    pts
}

/// The segments above, continued with the same slopes out to `[lo, hi]`
/// when the attainable estimates leave `[0, 1]`. Tree outputs are not
/// clamped, and a flat tail there would undercount the distance.
pub(crate) fn pwl_points_over(tau: f64, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut pts = pwl_points(tau);
    if lo < 0.0 {
        pts.insert(0, (lo, tau - lo));
    }
    if hi > 1.0 {
        pts.push((hi, hi - tau));
    }
    pts
}

/// Compile the problem into a mixed-integer model.
pub fn build(problem: &Problem, opts: &BuildOptions) -> Result<BuiltModel> {
    let problem = if opts.vary_bert {
        Arc::new(problem.clone())
    } else {
        let reference: Vec<usize> =
            problem.instance.candidates.candidates.iter().map(|c| c.word_length.div_ceil(2)).collect();
        let table = Arc::new(with_static_bert(&problem.table, &reference)?);
        Arc::new(Problem { table, ..problem.clone() })
    };
    let p = &*problem;
    let n = p.n();
    let m = p.m;
    let schema = &p.table.schema;
    let slot_index = PlacementFeature::ALL.map(|f| schema.placement.index(f));
    let mut model = MipModel::new(format!("ctest_tau{}_m{m}", fmt_tau(p.tau)));

    let mut b = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        let allowed = p.allowed_sizes(i);
        let forced = p.pinned(i).is_some();
        b.push(model.add_var(
            format!("b_{i}"),
            VarKind::Binary,
            if forced { 1.0 } else { 0.0 },
            if allowed.is_empty() { 0.0 } else { 1.0 },
        ));
        let row = p
            .instance
            .candidate(i)
            .sizes()
            .map(|j| {
                let ok = allowed.contains(&j);
                model.add_var(
                    format!("s_{i}_{j}"),
                    VarKind::Binary,
                    if forced && ok { 1.0 } else { 0.0 },
                    if ok { 1.0 } else { 0.0 },
                )
            })
            .collect::<Vec<_>>();
        s.push(row);
    }

    let mut f = Vec::with_capacity(n);
    let mut domains = Vec::with_capacity(n);
    for i in 0..n {
        let dom = p.ctx.domain(i, m);
        let vars = PlacementFeature::ALL.map(|pf| {
            let (lo, hi) = dom[pf.slot()];
            let kind = if pf == PlacementFeature::OccursAsGap { VarKind::Binary } else { VarKind::Integer };
            let hi = if kind == VarKind::Binary { 1.0 } else { f64::from(hi) };
            model.add_var(format!("{}_{i}", pf.short()), kind, f64::from(lo), hi)
        });
        f.push(vars);
        domains.push(dom);
    }

    // Embedding blocks.
    let mut e = Vec::with_capacity(n);
    let mut blocks = Vec::with_capacity(n);
    let mut tau_lo = f64::INFINITY;
    let mut tau_hi = f64::NEG_INFINITY;
    for i in 0..n {
        let allowed = p.allowed_sizes(i);
        let mut e_row = Vec::new();
        let mut block_row = Vec::new();
        for j in p.instance.candidate(i).sizes() {
            let mut bx = FeatureBox::point(p.table.row(i, j));
            for pf in PlacementFeature::ALL {
                let (lo, hi) = domains[i][pf.slot()];
                bx.set(slot_index[pf.slot()], f64::from(lo), f64::from(hi));
            }
            let reduced = p.ensemble.restrict(&bx);
            let (lo, hi) = reduced.predict_interval(&bx);
            if allowed.contains(&j) {
                tau_lo = tau_lo.min(lo);
                tau_hi = tau_hi.max(hi);
            }
            let ev = model.add_var(format!("e_{i}_{j}"), VarKind::Continuous, lo.min(0.0), hi.max(0.0));
            let mut constant = reduced.base_score;
            let mut trees = Vec::new();
            for (t, tree) in reduced.trees.iter().enumerate() {
                if tree.is_leaf() {
                    constant += reduced.shrinkage * tree.evaluate(&bx.lo);
                    continue;
                }
                let mut leaves = Vec::new();
                for (value, path) in tree.leaf_paths() {
                    let mut bounds = PlacementFeature::ALL.map(|pf| {
                        let (lo, hi) = domains[i][pf.slot()];
                        (i64::from(lo), i64::from(hi))
                    });
                    for (k, lo, hi) in path {
                        let slot = slot_index.iter().position(|&x| x == k).expect("restricted trees split on placement only");
                        if lo.is_finite() {
                            bounds[slot].0 = bounds[slot].0.max(lo.ceil() as i64);
                        }
                        if hi.is_finite() {
                            bounds[slot].1 = bounds[slot].1.min(hi.ceil() as i64 - 1);
                        }
                    }
                    if bounds.iter().any(|&(lo, hi)| lo > hi) {
                        continue;
                    }
                    let var = model.add_var(format!("z_{i}_{j}_{t}_{}", leaves.len()), VarKind::Binary, 0.0, 1.0);
                    leaves.push(LeafVar { var, value, bounds });
                }
                let mut sum: Vec<(VarId, f64)> = leaves.iter().map(|l| (l.var, 1.0)).collect();
                sum.push((s[i][j - 1], -1.0));
                model.add_row(format!("leafsum_{i}_{j}_{t}"), sum, Sense::Eq, 0.0);
                for (l, leaf) in leaves.iter().enumerate() {
                    for pf in PlacementFeature::ALL {
                        let slot = pf.slot();
                        let (dlo, dhi) = domains[i][slot];
                        let (dlo, dhi) = (i64::from(dlo), i64::from(dhi));
                        let (lo, hi) = leaf.bounds[slot];
                        let fv = f[i][slot];
                        if hi < dhi {
                            let (coef, rhs) = match opts.big_m {
                                BigMPolicy::Auto => ((dhi - hi) as f64, dhi as f64),
                                BigMPolicy::Global => (n as f64, (hi as f64) + n as f64),
                            };
                            model.add_row(
                                format!("lub_{i}_{j}_{t}_{l}_{}", pf.short()),
                                vec![(fv, 1.0), (leaf.var, coef)],
                                Sense::Le,
                                rhs,
                            );
                        }
                        if lo > dlo {
                            let (coef, rhs) = match opts.big_m {
                                BigMPolicy::Auto => ((lo - dlo) as f64, dlo as f64),
                                BigMPolicy::Global => (n as f64, lo as f64 - n as f64),
                            };
                            model.add_row(
                                format!("llb_{i}_{j}_{t}_{l}_{}", pf.short()),
                                vec![(fv, 1.0), (leaf.var, -coef)],
                                Sense::Ge,
                                rhs,
                            );
                        }
                    }
                }
                trees.push(leaves);
            }
            let mut terms = vec![(ev, 1.0), (s[i][j - 1], -constant)];
            for leaves in &trees {
                terms.extend(leaves.iter().map(|l| (l.var, -reduced.shrinkage * l.value)));
            }
            model.add_row(format!("contrib_{i}_{j}"), terms, Sense::Eq, 0.0);
            e_row.push(ev);
            block_row.push(EmbeddingBlock { reduced, constant, trees });
        }
        e.push(e_row);
        blocks.push(block_row);
    }

    // Placement and size rows.
    model.add_row("place", b.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, m as f64);
    for i in 0..n {
        let mut terms: Vec<(VarId, f64)> = s[i].iter().map(|&v| (v, 1.0)).collect();
        terms.push((b[i], -1.0));
        model.add_row(format!("size_{i}"), terms, Sense::Eq, 0.0);
    }
    for i in 0..n {
        let og = f[i][PlacementFeature::OccursAsGap.slot()];
        let partners = p.ctx.same_word.partners(i);
        for &h in partners {
            model.add_row(format!("og_ge_{i}_{h}"), vec![(og, 1.0), (b[h], -1.0)], Sense::Ge, 0.0);
        }
        let mut terms = vec![(og, 1.0)];
        terms.extend(partners.iter().map(|&h| (b[h], -1.0)));
        model.add_row(format!("og_le_{i}"), terms, Sense::Le, 0.0);
        let sent = p.ctx.sentence(i);
        let count_row = |fv: VarId, range: std::ops::Range<usize>| {
            let mut t = vec![(fv, 1.0)];
            t.extend(range.map(|h| (b[h], -1.0)));
            t
        };
        model.add_row(
            format!("gis_{i}"),
            count_row(f[i][PlacementFeature::GapsInSentence.slot()], sent.clone()),
            Sense::Eq,
            0.0,
        );
        model.add_row(format!("prec_{i}"), count_row(f[i][PlacementFeature::PrecedingGaps.slot()], 0..i), Sense::Eq, 0.0);
        model.add_row(
            format!("pis_{i}"),
            count_row(f[i][PlacementFeature::PrecedingGapsInSentence.slot()], sent.start..i),
            Sense::Eq,
            0.0,
        );
    }

    // Estimated difficulty and objective.
    if !tau_lo.is_finite() {
        tau_lo = 0.0;
        tau_hi = 0.0;
    }
    let tau_hat = model.add_var("tau_hat", VarKind::Continuous, tau_lo, tau_hi);
    let mut terms = vec![(tau_hat, m as f64)];
    for row in &e {
        terms.extend(row.iter().map(|&v| (v, -1.0)));
    }
    model.add_row("tauhat", terms, Sense::Eq, 0.0);

    let tau = p.tau;
    let objective = match opts.encoding {
        ObjectiveEncoding::Epigraph => {
            let u = model.add_var("u", VarKind::Continuous, 0.0, f64::INFINITY);
            model.add_row("epi_lo", vec![(u, 1.0), (tau_hat, 1.0)], Sense::Ge, tau);
            model.add_row("epi_hi", vec![(u, 1.0), (tau_hat, -1.0)], Sense::Ge, -tau);
            model.objective = vec![(u, 1.0)];
            ObjectiveVars::Epigraph { u }
        }
        ObjectiveEncoding::MinMax => {
            let (lo_b, hi_b) = (tau_lo.min(tau), tau_hi.max(tau));
            let hi = model.add_var("hi", VarKind::Continuous, lo_b, hi_b);
            let lo = model.add_var("lo", VarKind::Continuous, lo_b, hi_b);
            let delta = model.add_var("delta", VarKind::Binary, 0.0, 1.0);
            model.add_row("mm_hi_tau", vec![(hi, 1.0)], Sense::Ge, tau);
            model.add_row("mm_hi_est", vec![(hi, 1.0), (tau_hat, -1.0)], Sense::Ge, 0.0);
            model.add_row("mm_lo_tau", vec![(lo, 1.0)], Sense::Le, tau);
            model.add_row("mm_lo_est", vec![(lo, 1.0), (tau_hat, -1.0)], Sense::Le, 0.0);
            model.add_indicator("mm_hi_1", delta, true, vec![(hi, 1.0), (tau_hat, -1.0)], Sense::Eq, 0.0);
            model.add_indicator("mm_lo_1", delta, true, vec![(lo, 1.0)], Sense::Eq, tau);
            model.add_indicator("mm_hi_0", delta, false, vec![(hi, 1.0)], Sense::Eq, tau);
            model.add_indicator("mm_lo_0", delta, false, vec![(lo, 1.0), (tau_hat, -1.0)], Sense::Eq, 0.0);
            model.objective = vec![(hi, 1.0), (lo, -1.0)];
            ObjectiveVars::MinMax { hi, lo, delta }
        }
        ObjectiveEncoding::Indicator => {
            let delta = model.add_var("delta", VarKind::Binary, 0.0, 1.0);
            let d = model.add_var("d", VarKind::Continuous, 0.0, f64::INFINITY);
            model.add_indicator("ind_d_1", delta, true, vec![(d, 1.0), (tau_hat, 1.0)], Sense::Eq, tau);
            model.add_indicator("ind_le_1", delta, true, vec![(tau_hat, 1.0)], Sense::Le, tau);
            model.add_indicator("ind_d_0", delta, false, vec![(d, 1.0), (tau_hat, -1.0)], Sense::Eq, -tau);
            model.add_indicator("ind_ge_0", delta, false, vec![(tau_hat, 1.0)], Sense::Ge, tau);
            model.objective = vec![(d, 1.0)];
            ObjectiveVars::Indicator { delta, d }
        }
        ObjectiveEncoding::Pwl => {
            model.pwl.push(PwlTerm { var: tau_hat, points: pwl_points_over(tau, tau_lo, tau_hi) });
            ObjectiveVars::Pwl
        }
    };

    let vars = VarMap { b, s, e, f, blocks, tau_hat, objective };
    Ok(BuiltModel { model, vars, problem, options: *opts })
}

/// Full variable assignment implied by a selection of `(candidate, size)`.
pub fn complete_assignment(built: &BuiltModel, selection: &[(usize, usize)]) -> Result<Vec<f64>> {
    let p = &*built.problem;
    let v = &built.vars;
    let mut x = vec![0.0; built.model.vars.len()];
    let mut sel = selection.to_vec();
    sel.sort_unstable();
    let mut bsel = vec![false; p.n()];
    for &(i, j) in &sel {
        if i >= p.n() || j < 1 || j > v.s[i].len() {
            return Err(Error::InvariantViolation(format!("gap ({i}, {j}) not in the model")));
        }
        bsel[i] = true;
    }
    let (preds, tau_hat) = p.evaluate(&sel)?;
    for i in 0..p.n() {
        let feats = p.ctx.features(&bsel, i)?.as_array();
        for (slot, &fv) in v.f[i].iter().enumerate() {
            x[fv] = f64::from(feats[slot]);
        }
    }
    for (&(i, j), &pred) in sel.iter().zip(&preds) {
        x[v.b[i]] = 1.0;
        x[v.s[i][j - 1]] = 1.0;
        x[v.e[i][j - 1]] = pred;
        let feats = p.ctx.features(&bsel, i)?.as_array();
        for leaves in &v.blocks[i][j - 1].trees {
            let leaf = leaves
                .iter()
                .find(|l| l.contains(&feats))
                .ok_or_else(|| Error::InvariantViolation(format!("no leaf covers gap ({i}, {j})")))?;
            x[leaf.var] = 1.0;
        }
    }
    x[v.tau_hat] = tau_hat;
    let tau = p.tau;
    match v.objective {
        ObjectiveVars::Epigraph { u } => x[u] = (tau - tau_hat).abs(),
        ObjectiveVars::MinMax { hi, lo, delta } => {
            x[delta] = if tau_hat >= tau { 1.0 } else { 0.0 };
            x[hi] = tau.max(tau_hat);
            x[lo] = tau.min(tau_hat);
        }
        ObjectiveVars::Indicator { delta, d } => {
            x[delta] = if tau_hat <= tau { 1.0 } else { 0.0 };
            x[d] = (tau - tau_hat).abs();
        }
        ObjectiveVars::Pwl => {}
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CandidatePolicy;
    use crate::features::{FeatureSchema, NUM_FEATURES};
    use crate::model::{Node, Tree};

    fn tiny() -> Problem {
        let inst = Arc::new(Instance::from_text("First one. Cat is. Last one.", &CandidatePolicy::default()).unwrap());
        assert_eq!(inst.n(), 2);
        let table = FeatureTable::from_raw(
            FeatureSchema::default(),
            vec![vec![[0.0; NUM_FEATURES]; 2], vec![[0.0; NUM_FEATURES]; 1]],
        )
        .unwrap();
        let stump = Tree {
            nodes: vec![
                Node::Split { feature: 52, threshold: 0.5, left: 1, right: 2 },
                Node::Leaf { value: 0.2 },
                Node::Leaf { value: 0.6 },
            ],
        };
        let ens = TreeEnsemble::new(0.0, 1.0, vec![stump]).unwrap();
        Problem::new(inst, Arc::new(table), Arc::new(ens), 0.5, 1, ExtraConstraints::default()).unwrap()
    }

    #[test]
    fn hand_count() {
        let built = build(&tiny(), &BuildOptions::default()).unwrap();
        let st = built.model.stats();
        // b:2 s:3 f:8 e:3 z:2 tau_hat u
        assert_eq!(st.columns, 20);
        // place, 2 size, 2x(og_le gis prec pis), leafsum, 2 links, 3 contrib, tauhat, 2 epigraph
        assert_eq!(st.rows, 20);
        assert_eq!(st.binaries, 2 + 3 + 2 + 2);
        assert_eq!(st.integers, 6);
        assert_eq!(st.continuous, 5);
    }

    #[test]
    fn assignments_satisfy_every_encoding() {
        for enc in ObjectiveEncoding::ALL {
            let built = build(&tiny(), &BuildOptions { encoding: enc, ..Default::default() }).unwrap();
            for sel in [vec![(0, 1)], vec![(0, 2)], vec![(1, 1)]] {
                let x = complete_assignment(&built, &sel).unwrap();
                let report = built.model.verify(&x);
                assert!(report.is_ok(), "{enc:?} {sel:?}: {:?}", report.violations);
                let (_, th) = built.problem.evaluate(&sel).unwrap();
                assert!((built.model.objective_value(&x) - (0.5 - th).abs()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flipping_b_breaks_placement_row() {
        let built = build(&tiny(), &BuildOptions::default()).unwrap();
        let mut x = complete_assignment(&built, &[(1, 1)]).unwrap();
        x[built.vars.b[0]] = 1.0;
        assert!(built.model.verify(&x).rows().contains(&"place"));
    }

    #[test]
    fn pins_and_excludes_become_bounds() {
        let mut p = tiny();
        p.extra = ExtraConstraints { pins: vec![(0, 2)], excludes: vec![1], max_size: None };
        let built = build(&p, &BuildOptions::default()).unwrap();
        let vars = &built.model.vars;
        assert_eq!(vars[built.vars.b[0]].lb, 1.0);
        assert_eq!(vars[built.vars.s[0][1]].lb, 1.0);
        assert_eq!(vars[built.vars.s[0][0]].ub, 0.0);
        assert_eq!(vars[built.vars.b[1]].ub, 0.0);
    }

    #[test]
    fn pwl_breakpoints() {
        assert_eq!(pwl_points(0.1), vec![(0.0, 0.1), (0.1, 0.0), (1.0, 0.9)]);
        assert_eq!(pwl_points(0.0), vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(pwl_points(1.0), vec![(0.0, 1.0), (1.0, 0.0)]);
        assert_eq!(pwl_points_over(0.1, 0.0, 0.8), pwl_points(0.1));
        let wide = pwl_points_over(0.25, -0.5, 1.5);
        assert_eq!(wide.first(), Some(&(-0.5, 0.75)));
        assert_eq!(wide.last(), Some(&(1.5, 1.25)));
    }
}
