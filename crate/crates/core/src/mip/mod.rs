//! A small mixed-integer model representation, the C-test model builder,
//! and LP/MPS exchange formats.

mod build;
mod lp;
mod mps;

pub use build::{
    build, complete_assignment, with_static_bert, BigMPolicy, BuildOptions, BuiltModel, EmbeddingBlock,
    ExtraConstraints, LeafVar, ObjectiveEncoding, ObjectiveVars, Problem, VarMap,
};
pub(crate) use build::mean_in_order;
pub use lp::{export_lp, read_lp, write_lp};
pub use mps::{export_mps, linearize_pwl, write_mps};

use std::fmt;

use serde::Serialize;

pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }

    fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Sense::Le => lhs <= rhs + tol,
            Sense::Eq => (lhs - rhs).abs() <= tol,
            Sense::Ge => lhs >= rhs - tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `var = value ⇒ terms sense rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Indicator {
    pub name: String,
    pub var: VarId,
    pub value: bool,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Piecewise-linear objective term over one variable. Points are sorted by
/// `x`; the function is constant beyond the first and last point.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlTerm {
    pub var: VarId,
    pub points: Vec<(f64, f64)>,
}

impl PwlTerm {
    pub fn eval(&self, x: f64) -> f64 {
        eval_pwl(&self.points, x)
    }
}

pub(crate) fn eval_pwl(points: &[(f64, f64)], x: f64) -> f64 {
    let (first, last) = (points[0], points[points.len() - 1]);
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let k = points.partition_point(|p| p.0 <= x);
    let (a, b) = (points[k - 1], points[k]);
    if b.0 == a.0 {
        return b.1;
    }
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Minimization model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MipModel {
    pub name: String,
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub indicators: Vec<Indicator>,
    pub objective: Vec<(VarId, f64)>,
    pub pwl: Vec<PwlTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelStats {
    pub rows: usize,
    pub columns: usize,
    pub nonzeros: usize,
    pub binaries: usize,
    pub integers: usize,
    pub continuous: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    Bound,
    Integrality,
    Row,
    Indicator,
    Length,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Row or variable name.
    pub id: String,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({:?}): {}", self.id, self.kind, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn rows(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.id.as_str()).collect()
    }
}

fn activity(terms: &[(VarId, f64)], x: &[f64]) -> f64 {
    terms.iter().map(|&(v, c)| c * x[v]).sum()
}

impl MipModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lb: f64, ub: f64) -> VarId {
        let (lb, ub) = if kind == VarKind::Binary { (lb.max(0.0), ub.min(1.0)) } else { (lb, ub) };
        self.vars.push(Variable { name: name.into(), kind, lb, ub });
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { name: name.into(), terms, sense, rhs });
    }

    pub fn add_indicator(
        &mut self,
        name: impl Into<String>,
        var: VarId,
        value: bool,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) {
        self.indicators.push(Indicator { name: name.into(), var, value, terms, sense, rhs });
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        activity(&self.objective, x) + self.pwl.iter().map(|p| p.eval(x[p.var])).sum::<f64>()
    }

    pub fn stats(&self) -> ModelStats {
        let count = |k: VarKind| self.vars.iter().filter(|v| v.kind == k).count();
        ModelStats {
            rows: self.constraints.len() + self.indicators.len(),
            columns: self.vars.len(),
            nonzeros: self.constraints.iter().map(|c| c.terms.len()).sum::<usize>()
                + self.indicators.iter().map(|c| c.terms.len()).sum::<usize>(),
            binaries: count(VarKind::Binary),
            integers: count(VarKind::Integer),
            continuous: count(VarKind::Continuous),
        }
    }

    /// Check bounds, integrality, linear rows and indicator implications
    /// with absolute tolerance `tol`.
    pub fn verify_with(&self, x: &[f64], tol: f64) -> VerifyReport {
        let mut out = Vec::new();
        if x.len() != self.vars.len() {
            out.push(Violation {
                id: "assignment".into(),
                kind: ViolationKind::Length,
                detail: format!("{} values for {} variables", x.len(), self.vars.len()),
            });
            return VerifyReport { violations: out };
        }
        for (v, &val) in self.vars.iter().zip(x) {
            if !(val >= v.lb - tol && val <= v.ub + tol) {
                out.push(Violation {
                    id: v.name.clone(),
                    kind: ViolationKind::Bound,
                    detail: format!("{val} outside [{}, {}]", v.lb, v.ub),
                });
            }
            if v.kind != VarKind::Continuous && (val - val.round()).abs() > tol {
                out.push(Violation { id: v.name.clone(), kind: ViolationKind::Integrality, detail: format!("{val}") });
            }
        }
        for c in &self.constraints {
            let lhs = activity(&c.terms, x);
            if !c.sense.holds(lhs, c.rhs, tol) {
                out.push(Violation {
                    id: c.name.clone(),
                    kind: ViolationKind::Row,
                    detail: format!("{lhs} {} {} fails", c.sense.symbol(), c.rhs),
                });
            }
        }
        for ind in &self.indicators {
            let active = (x[ind.var] > 0.5) == ind.value;
            if !active {
                continue;
            }
            let lhs = activity(&ind.terms, x);
            if !ind.sense.holds(lhs, ind.rhs, tol) {
                out.push(Violation {
                    id: ind.name.clone(),
                    kind: ViolationKind::Indicator,
                    detail: format!("{lhs} {} {} fails while active", ind.sense.symbol(), ind.rhs),
                });
            }
        }
        VerifyReport { violations: out }
    }

    pub fn verify(&self, x: &[f64]) -> VerifyReport {
        self.verify_with(x, 1e-9)
    }
}
