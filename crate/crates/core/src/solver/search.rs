//! Depth-first branch and bound over gap decisions.
//!
//! A node fixes some candidates to "gap of size j" or "no gap". Its bound
//! boxes every placement feature of every candidate from the counts that
//! are still possible, looks up exact contribution ranges in the compiled
//! tables, and takes the cheapest and dearest completions of the remaining
//! gap budget.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::compiled::{CompiledProblem, EXC, UND};
use super::{Branching, SolveOptions};

/// Absorbs summation-order rounding in node bounds.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub st: Vec<u8>,
    pub bound: f64,
    pub branch: Option<usize>,
}

pub(crate) struct Shared {
    best_bits: AtomicU64,
    best: Mutex<Option<(f64, Vec<u8>)>>,
    pub nodes: AtomicU64,
    pub stop: AtomicBool,
}

impl Shared {
    pub fn new() -> Self {
        Self {
            best_bits: AtomicU64::new(f64::INFINITY.to_bits()),
            best: Mutex::new(None),
            nodes: AtomicU64::new(0),
            stop: AtomicBool::new(false),
        }
    }

    pub fn incumbent(&self) -> f64 {
        f64::from_bits(self.best_bits.load(Ordering::Acquire))
    }

    pub fn offer(&self, obj: f64, sel: &[u8]) -> bool {
        let mut best = self.best.lock().expect("incumbent lock");
        if best.as_ref().is_some_and(|b| b.0 <= obj) {
            return false;
        }
        *best = Some((obj, sel.to_vec()));
        self.best_bits.store(obj.to_bits(), Ordering::Release);
        true
    }

    /// Whether the time limit is used up.
    pub fn stop_was_time(&self, start: std::time::Instant, opts: &SolveOptions) -> bool {
        opts.time_limit.is_some_and(|t| start.elapsed() >= t)
    }

    pub fn take(&self) -> Option<(f64, Vec<u8>)> {
        self.best.lock().expect("incumbent lock").clone()
    }
}

/// Lower bound of a node and the candidate to branch on next, or `None`
/// when no completion is feasible.
pub(crate) fn eval_node(cp: &CompiledProblem, st: &[u8], rule: Branching) -> Option<(f64, Option<usize>)> {
    let (n, m) = (cp.n, cp.m);
    let (mut sel, mut und) = (0usize, 0usize);
    for &s in st {
        match s {
            UND => und += 1,
            EXC => {}
            _ => sel += 1,
        }
    }
    if sel > m || sel + und < m {
        return None;
    }
    let r = m - sel;
    // With as many open candidates as missing gaps, all of them are gaps.
    let forced = r == und;
    let open = r > 0 && !forced;
    let mut ps = vec![0i64; n + 1];
    let mut pu = vec![0i64; n + 1];
    for i in 0..n {
        let s = st[i];
        let is_sel = (s != UND && s != EXC) || (s == UND && forced);
        ps[i + 1] = ps[i] + is_sel as i64;
        pu[i + 1] = pu[i] + (s == UND && open) as i64;
    }
    let r_eff = if open { r as i64 } else { 0 };
    let (mut a, mut b) = (0.0, 0.0);
    let mut und_lo = Vec::new();
    let mut und_hi = Vec::new();
    let mut widest: Option<(f64, usize)> = None;
    for i in 0..n {
        let s = st[i];
        if s == EXC || (s == UND && r == 0) {
            continue;
        }
        let is_und = s == UND && open;
        let rp = if is_und { r_eff - 1 } else { r_eff };
        let t = &cp.tables[i];
        let sent = &cp.sentence[i];
        let (mut og_sel, mut og_und) = (false, false);
        for &h in &cp.partners[i] {
            og_sel |= ps[h + 1] > ps[h];
            og_und |= pu[h + 1] > pu[h];
        }
        let og = if og_sel {
            (1, 1)
        } else if og_und && rp > 0 {
            (0, 1)
        } else {
            (0, 0)
        };
        let me = is_und as i64;
        let gis_lo = ps[sent.end] - ps[sent.start] + me;
        let gis = (gis_lo, gis_lo + (pu[sent.end] - pu[sent.start] - me).min(rp));
        let prec = (ps[i], ps[i] + pu[i].min(rp));
        let pis_lo = ps[i] - ps[sent.start];
        let pis = (pis_lo, pis_lo + (pu[i] - pu[sent.start]).min(rp));
        let size_idx = if s == UND { None } else { Some(t.size_index(s as usize)?) };
        if t.sizes.is_empty() {
            return None;
        }
        let (lo, hi) = t.range(size_idx, [og, gis, prec, pis]);
        if s == UND {
            let w = hi - lo;
            let better = match (rule, widest) {
                (_, None) => true,
                (Branching::WidestInterval, Some((bw, _))) => w > bw,
                (Branching::Sequential, Some(_)) => false,
            };
            if better {
                widest = Some((w, i));
            }
        }
        if is_und {
            und_lo.push(lo);
            und_hi.push(hi);
        } else {
            a += lo;
            b += hi;
        }
    }
    let k = r_eff as usize;
    und_lo.sort_by(f64::total_cmp);
    und_hi.sort_by(|x, y| y.total_cmp(x));
    a += und_lo[..k].iter().sum::<f64>();
    b += und_hi[..k].iter().sum::<f64>();
    let raw = cp.objective.min_over(a / m as f64, b / m as f64);
    let bound = if raw > 0.0 { raw - BOUND_SLACK } else { raw };
    let branch = if und == 0 || r == 0 { None } else { widest.map(|w| w.1) };
    Some((bound, branch))
}

pub(crate) fn leaf_selection(st: &[u8]) -> Vec<u8> {
    st.iter().map(|&s| if s == UND || s == EXC { 0 } else { s }).collect()
}

pub(crate) fn children(cp: &CompiledProblem, node: &Node, rule: Branching) -> Vec<Node> {
    let Some(c) = node.branch else { return Vec::new() };
    let und = node.st.iter().filter(|&&s| s == UND).count();
    let sel = node.st.iter().filter(|&&s| s != UND && s != EXC).count();
    let r = cp.m - sel;
    let mut out = Vec::new();
    let mut push = |v: u8| {
        let mut st = node.st.clone();
        st[c] = v;
        if let Some((bound, branch)) = eval_node(cp, &st, rule) {
            out.push(Node { st, bound, branch });
        }
    };
    if und > r {
        push(EXC);
    }
    if r > 0 {
        for &j in &cp.tables[c].sizes {
            push(j as u8);
        }
    }
    out.sort_by(|x, y| x.bound.total_cmp(&y.bound));
    out
}

/// Bound bookkeeping of one worker.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Closed {
    /// Smallest bound of any node discarded or left open.
    pub lb: f64,
    pub limit_hit: bool,
}

impl Closed {
    fn new() -> Self {
        Self { lb: f64::INFINITY, limit_hit: false }
    }

    fn merge(&mut self, o: Closed) {
        self.lb = self.lb.min(o.lb);
        self.limit_hit |= o.limit_hit;
    }
}

pub(crate) struct Ctx<'a> {
    pub cp: &'a CompiledProblem,
    pub shared: &'a Shared,
    pub opts: &'a SolveOptions,
    pub start: Instant,
    pub root_bound: f64,
}

impl Ctx<'_> {
    fn tick(&self) -> bool {
        let k = self.shared.nodes.fetch_add(1, Ordering::Relaxed) + 1;
        if self.opts.node_limit.is_some_and(|lim| k > lim) {
            self.shared.stop.store(true, Ordering::Relaxed);
            return false;
        }
        if k % 64 == 0 {
            let el = self.start.elapsed();
            if self.opts.time_limit.is_some_and(|t| el >= t) {
                self.shared.stop.store(true, Ordering::Relaxed);
                return false;
            }
        }
        if self.opts.log_every > 0 && k % self.opts.log_every == 0 {
            log::info!(
                "nodes={k} incumbent={} bound={} time={:.3}",
                self.shared.incumbent(),
                self.root_bound,
                self.start.elapsed().as_secs_f64()
            );
        }
        true
    }

    /// Handle one node: prune it, evaluate it as a leaf, or return its
    /// children.
    fn expand(&self, node: Node, closed: &mut Closed) -> Option<Vec<Node>> {
        let inc = self.shared.incumbent();
        if node.bound >= inc - self.opts.tolerance {
            closed.lb = closed.lb.min(node.bound);
            return None;
        }
        if node.branch.is_none() {
            let sel = leaf_selection(&node.st);
            let obj = self.cp.objective_of(&sel);
            closed.lb = closed.lb.min(obj);
            self.shared.offer(obj, &sel);
            return None;
        }
        let inc = self.shared.incumbent();
        let kids: Vec<Node> = children(self.cp, &node, self.opts.branching)
            .into_iter()
            .filter(|k| {
                let keep = k.bound < inc - self.opts.tolerance;
                if !keep {
                    closed.lb = closed.lb.min(k.bound);
                }
                keep
            })
            .collect();
        Some(kids)
    }

    pub fn dfs(&self, root: Node) -> Closed {
        let mut closed = Closed::new();
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            if self.shared.stop.load(Ordering::Relaxed) {
                stack.push(node);
                closed.limit_hit = true;
                break;
            }
            if node.bound >= self.shared.incumbent() - self.opts.tolerance {
                closed.lb = closed.lb.min(node.bound);
                continue;
            }
            if !self.tick() {
                stack.push(node);
                closed.limit_hit = true;
                break;
            }
            if let Some(kids) = self.expand(node, &mut closed) {
                stack.extend(kids.into_iter().rev());
            }
        }
        for n in &stack {
            closed.lb = closed.lb.min(n.bound);
        }
        closed
    }

    /// Split the tree into a frontier and let `threads` workers drain it.
    pub fn parallel(&self, root: Node, threads: usize) -> Closed {
        let mut closed = Closed::new();
        let mut frontier = VecDeque::from([root]);
        while frontier.len() < 4 * threads {
            let Some(node) = frontier.pop_front() else { break };
            if !self.tick() {
                frontier.push_back(node);
                break;
            }
            if let Some(kids) = self.expand(node, &mut closed) {
                frontier.extend(kids);
            }
        }
        let mut work: Vec<Node> = frontier.into_iter().collect();
        work.sort_by(|x, y| y.bound.total_cmp(&x.bound));
        let queue = Mutex::new(work);
        let results = Mutex::new(closed);
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| loop {
                    let next = queue.lock().expect("queue lock").pop();
                    let Some(node) = next else { break };
                    let c = self.dfs(node);
                    results.lock().expect("result lock").merge(c);
                });
            }
        });
        let mut closed = results.into_inner().expect("result lock");
        for n in queue.into_inner().expect("queue lock") {
            closed.lb = closed.lb.min(n.bound);
            closed.limit_hit = true;
        }
        closed
    }
}
