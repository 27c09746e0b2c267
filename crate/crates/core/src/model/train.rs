use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Node, Tree, TreeEnsemble};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, NUM_FEATURES};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_samples_leaf: usize,
    /// Fraction of rows used to fit each tree; 1.0 disables subsampling.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { rounds: 50, max_depth: 4, shrinkage: 0.1, min_samples_leaf: 1, subsample: 1.0, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::InvalidConfig("rounds must be at least 1".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::InvalidConfig("max_depth must be at least 1".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::InvalidConfig(format!("shrinkage {} outside (0, 1]", self.shrinkage)));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::InvalidConfig("min_samples_leaf must be at least 1".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidConfig(format!("subsample {} outside (0, 1]", self.subsample)));
        }
        Ok(())
    }
}

/// Squared-loss gradient boosting.
pub fn train_gbrt(x: &[FeatureVector], y: &[f64], cfg: &TrainConfig) -> Result<TreeEnsemble> {
    train_gbrt_with_history(x, y, cfg).map(|(e, _)| e)
}

/// As [`train_gbrt`], also returning the training RMSE after each round.
pub fn train_gbrt_with_history(x: &[FeatureVector], y: &[f64], cfg: &TrainConfig) -> Result<(TreeEnsemble, Vec<f64>)> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput);
    }
    if let Some(v) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidConfig(format!("label {v} outside [0, 1]")));
    }
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    if y.iter().all(|&v| v == y[0]) {
        // Degenerate target: the base alone is exact.
        let ens = TreeEnsemble::new(y[0], cfg.shrinkage, vec![Tree::leaf(0.0)])?;
        return Ok((ens, vec![0.0]));
    }

    let presorted: Vec<Vec<u32>> = (0..NUM_FEATURES)
        .map(|k| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| x[a as usize][k].total_cmp(&x[b as usize][k]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pred = vec![base; n];
    let mut trees = Vec::with_capacity(cfg.rounds);
    let mut history = Vec::with_capacity(cfg.rounds);
    let mut residual = vec![0.0; n];
    for _ in 0..cfg.rounds {
        for r in 0..n {
            residual[r] = y[r] - pred[r];
        }
        let mut active = vec![true; n];
        if cfg.subsample < 1.0 {
            let take = ((n as f64 * cfg.subsample).round() as usize).clamp(1, n);
            active = vec![false; n];
            for r in sample(&mut rng, n, take) {
                active[r] = true;
            }
        }
        let tree = fit_tree(x, &residual, &active, &presorted, cfg);
        for r in 0..n {
            pred[r] += cfg.shrinkage * tree.evaluate(&x[r].0);
        }
        history.push(super::rmse(&pred, y)?);
        trees.push(tree);
    }
    Ok((TreeEnsemble::new(base, cfg.shrinkage, trees)?, history))
}

/// Threshold between two adjacent distinct sorted values. Integer pairs
/// snap to a half-integer so `<` and `<=` agree on integer inputs.
fn split_threshold(a: f64, b: f64) -> f64 {
    if a.fract() == 0.0 && b.fract() == 0.0 {
        return a + 0.5;
    }
    let t = a + (b - a) / 2.0;
    if t <= a || t > b {
        b
    } else {
        t
    }
}

#[derive(Clone, Copy)]
enum Proto {
    Open,
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(f64),
}

#[derive(Clone, Copy, Default)]
struct Scan {
    count: usize,
    sum: f64,
    last: f64,
    seen: bool,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Level-wise exact greedy fit on presorted columns.
fn fit_tree(x: &[FeatureVector], g: &[f64], active: &[bool], presorted: &[Vec<u32>], cfg: &TrainConfig) -> Tree {
    const NONE: u32 = u32::MAX;
    let n = g.len();
    let mut node_of: Vec<u32> = active.iter().map(|&a| if a { 0 } else { NONE }).collect();
    let mut protos = vec![Proto::Open];
    let mut totals = vec![(0usize, 0.0f64)];
    for r in 0..n {
        if active[r] {
            totals[0].0 += 1;
            totals[0].1 += g[r];
        }
    }
    let mut frontier = vec![0usize];
    for _depth in 0..cfg.max_depth {
        if frontier.is_empty() {
            break;
        }
        let slot: std::collections::HashMap<usize, usize> = frontier.iter().enumerate().map(|(s, &id)| (id, s)).collect();
        let mut best: Vec<Option<Best>> = vec![None; frontier.len()];
        for (k, order) in presorted.iter().enumerate() {
            let mut scans = vec![Scan::default(); frontier.len()];
            for &r in order {
                let r = r as usize;
                let node = node_of[r];
                if node == NONE {
                    continue;
                }
                let Some(&s) = slot.get(&(node as usize)) else { continue };
                let v = x[r][k];
                let sc = &mut scans[s];
                if sc.seen && v > sc.last {
                    let (tc, ts) = totals[frontier[s]];
                    let (lc, ls) = (sc.count, sc.sum);
                    let (rc, rs) = (tc - lc, ts - ls);
                    if lc >= cfg.min_samples_leaf && rc >= cfg.min_samples_leaf {
                        let gain = ls * ls / lc as f64 + rs * rs / rc as f64 - ts * ts / tc as f64;
                        if gain > 1e-12 && best[s].is_none_or(|b| gain > b.gain) {
                            best[s] = Some(Best { gain, feature: k, threshold: split_threshold(sc.last, v) });
                        }
                    }
                }
                sc.count += 1;
                sc.sum += g[r];
                sc.last = v;
                sc.seen = true;
            }
        }
        let mut next = Vec::new();
        for (s, &id) in frontier.iter().enumerate() {
            let Some(b) = best[s] else {
                let (c, sum) = totals[id];
                protos[id] = Proto::Leaf(sum / c as f64);
                continue;
            };
            let left = protos.len();
            protos.push(Proto::Open);
            protos.push(Proto::Open);
            totals.push((0, 0.0));
            totals.push((0, 0.0));
            protos[id] = Proto::Split { feature: b.feature, threshold: b.threshold, left, right: left + 1 };
            next.push(left);
            next.push(left + 1);
        }
        for r in 0..n {
            let node = node_of[r];
            if node == NONE {
                continue;
            }
            if let Proto::Split { feature, threshold, left, right } = protos[node as usize] {
                let child = if x[r][feature] < threshold { left } else { right };
                node_of[r] = child as u32;
                totals[child].0 += 1;
                totals[child].1 += g[r];
            }
        }
        frontier = next;
    }
    for id in frontier {
        let (c, sum) = totals[id];
        protos[id] = Proto::Leaf(sum / c as f64);
    }

    // Relayout in preorder.
    fn emit(protos: &[Proto], id: usize, out: &mut Vec<Node>) -> usize {
        match protos[id] {
            Proto::Leaf(value) => {
                out.push(Node::Leaf { value });
                out.len() - 1
            }
            Proto::Split { feature, threshold, left, right } => {
                let at = out.len();
                out.push(Node::Leaf { value: 0.0 });
                let l = emit(protos, left, out);
                let r = emit(protos, right, out);
                out[at] = Node::Split { feature, threshold, left: l, right: r };
                at
            }
            Proto::Open => unreachable!("open node after fitting"),
        }
    }
    let mut nodes = Vec::new();
    emit(&protos, 0, &mut nodes);
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize) -> (Vec<FeatureVector>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in 0..n {
            let mut x = [0.0; NUM_FEATURES];
            x[59] = (r % 8 + 1) as f64;
            x[3] = (r * 7 % 13) as f64 / 13.0;
            ys.push(if x[59] >= 4.0 { 1.0 } else { 0.0 });
            xs.push(FeatureVector(x));
        }
        (xs, ys)
    }

    #[test]
    fn constant_target() {
        let (xs, _) = data(10);
        let e = train_gbrt(&xs, &[0.3; 10], &TrainConfig::default()).unwrap();
        assert!(xs.iter().all(|x| e.predict(&x.0) == 0.3));
    }

    #[test]
    fn integer_split_is_snapped() {
        let (xs, ys) = data(40);
        let e = train_gbrt(&xs, &ys, &TrainConfig { rounds: 1, max_depth: 1, ..Default::default() }).unwrap();
        match e.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((feature, threshold), (59, 3.5)),
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_input() {
        let (xs, ys) = data(4);
        assert!(train_gbrt(&xs[..3], &ys, &TrainConfig::default()).is_err());
        assert!(train_gbrt(&xs[..1], &ys[..1], &TrainConfig::default()).is_err());
        assert!(train_gbrt(&xs, &ys, &TrainConfig { shrinkage: 0.0, ..Default::default() }).is_err());
        assert!(train_gbrt(&xs, &[0.0, 2.0, 0.0, 0.0], &TrainConfig::default()).is_err());
    }

    #[test]
    fn thresholds() {
        assert_eq!(split_threshold(1.0, 3.0), 1.5);
        assert_eq!(split_threshold(0.25, 0.75), 0.5);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(split_threshold(a, b), b);
    }

    #[test]
    fn subsampling_is_seeded() {
        let (xs, ys) = data(50);
        let cfg = TrainConfig { subsample: 0.5, rounds: 5, seed: 9, ..Default::default() };
        assert_eq!(train_gbrt(&xs, &ys, &cfg).unwrap(), train_gbrt(&xs, &ys, &cfg).unwrap());
    }
}
