//! Per-candidate lookup tables of gap contributions over the integer
//! placement-feature grid.
//!
//! For a fixed gap `(i, j)` the reduced ensemble only splits on the four
//! placement features, so its prediction is piecewise constant on the cells
//! cut out by `ceil(threshold)`. Each cell value is computed by predicting at
//! one integer point of the cell, which reproduces the direct path bit for
//! bit.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::features::{PlacementFeature, NUM_FEATURES};
use crate::mip::{eval_pwl, BuiltModel, ObjectiveEncoding};
use crate::model::{Node, TreeEnsemble};

pub(crate) const UND: u8 = 0;
pub(crate) const EXC: u8 = u8::MAX;

/// The function of the estimated difficulty that is minimized.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveFn {
    Abs { tau: f64 },
    /// Piecewise linear with flat continuation beyond the end points.
    Pwl { points: Vec<(f64, f64)> },
}

impl ObjectiveFn {
    pub fn from_model(built: &BuiltModel) -> Self {
        match built.options.encoding {
            ObjectiveEncoding::Pwl => match built.model.pwl.first() {
                Some(term) => ObjectiveFn::Pwl { points: term.points.clone() },
                None => ObjectiveFn::Abs { tau: built.problem.tau },
            },
            _ => ObjectiveFn::Abs { tau: built.problem.tau },
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ObjectiveFn::Abs { tau } => (tau - x).abs(),
            ObjectiveFn::Pwl { points } => eval_pwl(points, x),
        }
    }

    /// Minimum over `[a, b]`.
    pub fn min_over(&self, a: f64, b: f64) -> f64 {
        match self {
            ObjectiveFn::Abs { tau } => {
                if b < *tau {
                    tau - b
                } else if a > *tau {
                    a - tau
                } else {
                    0.0
                }
            }
            ObjectiveFn::Pwl { points } => {
                let mut best = eval_pwl(points, a).min(eval_pwl(points, b));
                for &(x, y) in points {
                    if a < x && x < b {
                        best = best.min(y);
                    }
                }
                best
            }
        }
    }

    /// Where the function is smallest; heuristics aim for it.
    pub fn target(&self) -> f64 {
        match self {
            ObjectiveFn::Abs { tau } => *tau,
            ObjectiveFn::Pwl { points } => {
                points.iter().copied().fold((f64::NAN, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc }).0
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Axis {
    lo: i64,
    cuts: Vec<i64>,
}

impl Axis {
    fn seg(&self, v: i64) -> usize {
        self.cuts.partition_point(|&c| c <= v)
    }

    fn len(&self) -> usize {
        self.cuts.len() + 1
    }

    fn start(&self, s: usize) -> i64 {
        if s == 0 {
            self.lo
        } else {
            self.cuts[s - 1]
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CandTable {
    /// Allowed sizes, ascending; empty if the candidate cannot be gapped.
    pub sizes: Vec<usize>,
    axes: Vec<Axis>,
    dims: [usize; 4],
    strides: [usize; 4],
    ncells: usize,
    vals: Vec<f64>,
    lo_all: Vec<f64>,
    hi_all: Vec<f64>,
}

impl CandTable {
    pub fn size_index(&self, j: usize) -> Option<usize> {
        self.sizes.iter().position(|&s| s == j)
    }

    fn cell(&self, f: [i64; 4]) -> usize {
        (0..4).map(|d| self.axes[d].seg(f[d]) * self.strides[d]).sum()
    }

    pub fn value(&self, size_idx: usize, f: [i64; 4]) -> f64 {
        self.vals[size_idx * self.ncells + self.cell(f)]
    }

    /// Exact min and max of the contribution over the integer box, for one
    /// size or (with `None`) over all allowed sizes.
    pub fn range(&self, size_idx: Option<usize>, bx: [(i64, i64); 4]) -> (f64, f64) {
        let mut sr = [(0usize, 0usize); 4];
        for d in 0..4 {
            sr[d] = (self.axes[d].seg(bx[d].0), self.axes[d].seg(bx[d].1));
        }
        let (lo_src, hi_src, base) = match size_idx {
            Some(s) => (&self.vals, &self.vals, s * self.ncells),
            None => (&self.lo_all, &self.hi_all, 0),
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in sr[0].0..=sr[0].1 {
            let ca = base + a * self.strides[0];
            for b in sr[1].0..=sr[1].1 {
                let cb = ca + b * self.strides[1];
                for c in sr[2].0..=sr[2].1 {
                    let cc = cb + c * self.strides[2];
                    for d in sr[3].0..=sr[3].1 {
                        let idx = cc + d * self.strides[3];
                        lo = lo.min(lo_src[idx]);
                        hi = hi.max(hi_src[idx]);
                    }
                }
            }
        }
        (lo, hi)
    }

    #[allow(dead_code)]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
}

fn collect_thresholds(ens: &TreeEnsemble, k: usize, out: &mut Vec<f64>) {
    for t in &ens.trees {
        for node in &t.nodes {
            if let Node::Split { feature, threshold, .. } = *node {
                if feature == k {
                    out.push(threshold);
                }
            }
        }
    }
}

/// Search-ready view of a built model.
#[derive(Debug, Clone)]
pub struct CompiledProblem {
    pub n: usize,
    pub m: usize,
    pub objective: ObjectiveFn,
    pub(crate) tables: Vec<CandTable>,
    pub(crate) pinned: Vec<Option<usize>>,
    pub(crate) sentence: Vec<Range<usize>>,
    pub(crate) partners: Vec<Vec<usize>>,
}

impl CompiledProblem {
    pub fn new(built: &BuiltModel) -> Result<Self> {
        let p = &*built.problem;
        let n = p.n();
        let vars = &built.vars;
        let model = &built.model;
        let schema = &p.table.schema;
        let slot_index = PlacementFeature::ALL.map(|f| schema.placement.index(f));
        let mut tables = Vec::with_capacity(n);
        let mut pinned = vec![None; n];
        for i in 0..n {
            let l = p.instance.candidate(i).word_length;
            if l > 254 {
                return Err(Error::InvalidConfig(format!("word of {l} characters is too long")));
            }
            let b = &model.vars[vars.b[i]];
            let sizes: Vec<usize> = if b.ub < 0.5 {
                Vec::new()
            } else {
                (1..l).filter(|&j| model.vars[vars.s[i][j - 1]].ub >= 0.5).collect()
            };
            let forced: Vec<usize> = (1..l).filter(|&j| model.vars[vars.s[i][j - 1]].lb >= 0.5).collect();
            if b.lb >= 0.5 {
                match forced.as_slice() {
                    [j] => pinned[i] = Some(*j),
                    [] if sizes.len() == 1 => pinned[i] = Some(sizes[0]),
                    _ => return Err(Error::Infeasible(format!("candidate {i} forced without a unique size"))),
                }
            }
            let dom = p.ctx.domain(i, p.m);
            let mut axes = Vec::with_capacity(4);
            for pf in PlacementFeature::ALL {
                let (lo, hi) = (i64::from(dom[pf.slot()].0), i64::from(dom[pf.slot()].1));
                let mut ts = Vec::new();
                for &j in &sizes {
                    collect_thresholds(&vars.blocks[i][j - 1].reduced, slot_index[pf.slot()], &mut ts);
                }
                let mut cuts: Vec<i64> = ts.iter().map(|t| t.ceil() as i64).filter(|&c| c > lo && c <= hi).collect();
                cuts.sort_unstable();
                cuts.dedup();
                axes.push(Axis { lo, cuts });
            }
            let dims = [axes[0].len(), axes[1].len(), axes[2].len(), axes[3].len()];
            let strides = [dims[1] * dims[2] * dims[3], dims[2] * dims[3], dims[3], 1];
            let ncells = dims.iter().product::<usize>();
            let mut vals = Vec::with_capacity(ncells * sizes.len());
            for &j in &sizes {
                let reduced = &vars.blocks[i][j - 1].reduced;
                let mut x: [f64; NUM_FEATURES] = *p.table.row(i, j);
                for cell in 0..ncells {
                    for d in 0..4 {
                        let s = (cell / strides[d]) % dims[d];
                        x[slot_index[d]] = axes[d].start(s) as f64;
                    }
                    vals.push(reduced.predict(&x));
                }
            }
            let mut lo_all = vec![f64::INFINITY; ncells];
            let mut hi_all = vec![f64::NEG_INFINITY; ncells];
            for s in 0..sizes.len() {
                for c in 0..ncells {
                    let v = vals[s * ncells + c];
                    lo_all[c] = lo_all[c].min(v);
                    hi_all[c] = hi_all[c].max(v);
                }
            }
            tables.push(CandTable { sizes, axes, dims, strides, ncells, vals, lo_all, hi_all });
        }
        let sentence = (0..n).map(|i| p.ctx.sentence(i)).collect();
        let partners = (0..n).map(|i| p.ctx.same_word.partners(i).to_vec()).collect();
        Ok(Self { n, m: p.m, objective: ObjectiveFn::from_model(built), tables, pinned, sentence, partners })
    }

    pub fn allowed_sizes(&self, i: usize) -> &[usize] {
        &self.tables[i].sizes
    }

    pub fn pinned(&self, i: usize) -> Option<usize> {
        self.pinned[i]
    }

    /// Placement features of every candidate under selection `sel`
    /// (`0` = not selected).
    pub(crate) fn features(&self, sel: &[u8]) -> Vec<[i64; 4]> {
        let n = self.n;
        let mut prefix = vec![0i64; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + i64::from(sel[i] != 0);
        }
        (0..n)
            .map(|i| {
                let s = &self.sentence[i];
                let og = self.partners[i].iter().any(|&h| sel[h] != 0) as i64;
                [og, prefix[s.end] - prefix[s.start], prefix[i], prefix[i] - prefix[s.start]]
            })
            .collect()
    }

    /// Per-gap values in candidate order and the estimated difficulty.
    pub(crate) fn evaluate(&self, sel: &[u8]) -> (Vec<f64>, f64) {
        let feats = self.features(sel);
        let mut preds = Vec::with_capacity(self.m);
        for i in 0..self.n {
            if sel[i] != 0 {
                let t = &self.tables[i];
                let s = t.size_index(sel[i] as usize).expect("selected size is allowed");
                preds.push(t.value(s, feats[i]));
            }
        }
        let tau_hat = crate::mip::mean_in_order(&preds, self.m);
        (preds, tau_hat)
    }

    /// Contribution of every candidate (zero where no gap).
    pub(crate) fn values(&self, sel: &[u8]) -> Vec<f64> {
        let feats = self.features(sel);
        (0..self.n)
            .map(|i| {
                if sel[i] == 0 {
                    return 0.0;
                }
                let t = &self.tables[i];
                t.value(t.size_index(sel[i] as usize).expect("selected size is allowed"), feats[i])
            })
            .collect()
    }

    pub(crate) fn objective_of(&self, sel: &[u8]) -> f64 {
        self.objective.eval(self.evaluate(sel).1)
    }

    pub(crate) fn is_feasible(&self, sel: &[u8]) -> bool {
        sel.iter().filter(|&&s| s != 0).count() == self.m
            && (0..self.n).all(|i| match (sel[i], self.pinned[i]) {
                (0, Some(_)) => false,
                (0, None) => true,
                (s, Some(j)) => s as usize == j,
                (s, None) => self.tables[i].sizes.contains(&(s as usize)),
            })
    }

    pub(crate) fn to_selection(sel: &[u8]) -> Vec<(usize, usize)> {
        sel.iter().enumerate().filter(|(_, &s)| s != 0).map(|(i, &s)| (i, s as usize)).collect()
    }

    pub(crate) fn from_selection(&self, selection: &[(usize, usize)]) -> Option<Vec<u8>> {
        let mut sel = vec![0u8; self.n];
        for &(i, j) in selection {
            if i >= self.n || sel[i] != 0 || j == 0 || j > 254 {
                return None;
            }
            sel[i] = j as u8;
        }
        self.is_feasible(&sel).then_some(sel)
    }
}
