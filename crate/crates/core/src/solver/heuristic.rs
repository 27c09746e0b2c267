//! Primal heuristics: a spread-out starting placement, a swap/resize local
//! search, a meet-in-the-middle window move that re-optimizes a block of
//! consecutive sentences while keeping its gap count, and a closest-sum move
//! over three sentence pieces.

use std::ops::Range;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::compiled::CompiledProblem;

/// Half-enumerations larger than this are skipped.
const ENUM_CAP: usize = 250_000;
const PAIRS_TRIED: usize = 8;
const WINDOW_TARGETS: [usize; 6] = [6, 10, 14, 18, 22, 26];
const MAX_SWEEPS: usize = 6;
/// Longest block of the three-block move, and its enumeration cap.
const BLOCK_LEN: usize = 9;
const BLOCK_CAP: usize = 20_000;
/// Block length and pair-list cap of the four-block move.
const QUAD_LEN: usize = 5;
const GROUP_CAP: usize = 600_000;
const KICK_ROUNDS: usize = 2_000;
const KICK_SEED: u64 = 0x5eed;

/// Every second candidate, then the rest, pinned gaps first; each gap
/// starts at its middle allowed size.
pub(crate) fn seed(cp: &CompiledProblem) -> Option<Vec<u8>> {
    let n = cp.n;
    let mut sel = vec![0u8; n];
    let mut count = 0;
    for i in 0..n {
        if let Some(j) = cp.pinned[i] {
            sel[i] = j as u8;
            count += 1;
        }
    }
    for i in (1..n).step_by(2).chain((0..n).step_by(2)) {
        if count == cp.m {
            break;
        }
        let sizes = &cp.tables[i].sizes;
        if sel[i] == 0 && !sizes.is_empty() {
            sel[i] = sizes[sizes.len() / 2] as u8;
            count += 1;
        }
    }
    (count == cp.m && cp.is_feasible(&sel)).then_some(sel)
}

pub(crate) struct Improver<'a> {
    cp: &'a CompiledProblem,
    stop_at: f64,
    deadline: Option<Instant>,
}

impl<'a> Improver<'a> {
    pub fn new(cp: &'a CompiledProblem, stop_at: f64, deadline: Option<Instant>) -> Self {
        Self { cp, stop_at, deadline }
    }

    fn out_of_time(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Local descent followed by the four-block sweep.
    pub fn polish(&self, sel: Vec<u8>) -> (Vec<u8>, f64) {
        let (mut sel, mut obj) = self.descend(sel);
        if obj > self.stop_at {
            self.quad_sweep(&mut sel, &mut obj);
        }
        (sel, obj)
    }

    /// Iterated local search: kick the best solution with a few random
    /// moves and polish again, until the target is met, `KICK_ROUNDS`
    /// rounds pass, or `until` passes. The RNG is fixed, so runs that stop
    /// on the round count are reproducible.
    pub fn kicks(&self, mut best: Vec<u8>, mut best_obj: f64, until: Option<Instant>) -> (Vec<u8>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(KICK_SEED);
        for round in 0..KICK_ROUNDS {
            if best_obj <= self.stop_at || self.out_of_time() || until.is_some_and(|d| Instant::now() >= d) {
                break;
            }
            let mut sel = best.clone();
            self.kick(&mut sel, 2 + round % 4, &mut rng);
            let (mut sel, mut obj) = self.descend(sel);
            if obj < best_obj {
                if obj > self.stop_at {
                    self.quad_sweep(&mut sel, &mut obj);
                }
                best = sel;
                best_obj = obj;
            }
        }
        (best, best_obj)
    }

    fn descend(&self, mut sel: Vec<u8>) -> (Vec<u8>, f64) {
        let mut obj = self.cp.objective_of(&sel);
        for _ in 0..MAX_SWEEPS {
            let before = obj;
            self.local_search(&mut sel, &mut obj);
            if obj <= self.stop_at || self.out_of_time() {
                break;
            }
            self.window_sweep(&mut sel, &mut obj);
            if obj <= self.stop_at || self.out_of_time() {
                break;
            }
            self.triple_sweep(&mut sel, &mut obj);
            if obj <= self.stop_at || self.out_of_time() || obj >= before {
                break;
            }
        }
        (sel, obj)
    }

    /// `moves` random relocations of unpinned gaps, each to a random free
    /// candidate at a random allowed size.
    fn kick(&self, sel: &mut [u8], moves: usize, rng: &mut ChaCha8Rng) {
        let cp = self.cp;
        for _ in 0..moves {
            let from: Vec<usize> = (0..cp.n).filter(|&i| sel[i] != 0 && cp.pinned[i].is_none()).collect();
            let to: Vec<usize> = (0..cp.n).filter(|&i| sel[i] == 0 && !cp.tables[i].sizes.is_empty()).collect();
            let (Some(&i), Some(&h)) = (from.choose(rng), to.choose(rng)) else {
                return;
            };
            sel[i] = 0;
            sel[h] = *cp.tables[h].sizes.choose(rng).expect("non-empty") as u8;
        }
    }

    /// Best-improvement over resizing one gap or moving one gap elsewhere.
    fn local_search(&self, sel: &mut [u8], obj: &mut f64) {
        let cp = self.cp;
        for _ in 0..200 {
            if *obj <= self.stop_at || self.out_of_time() {
                return;
            }
            let mut best: Option<(f64, usize, u8, usize, u8)> = None;
            let mut consider = |trial: &mut [u8], i: usize, vi: u8, h: usize, vh: u8| {
                let (oi, oh) = (trial[i], trial[h]);
                trial[i] = vi;
                trial[h] = vh;
                let o = cp.objective_of(trial);
                trial[i] = oi;
                trial[h] = oh;
                if o < best.map_or(*obj, |b| b.0) {
                    best = Some((o, i, vi, h, vh));
                }
            };
            let mut trial = sel.to_vec();
            for i in 0..cp.n {
                if sel[i] == 0 || cp.pinned[i].is_some() {
                    continue;
                }
                for &j in &cp.tables[i].sizes {
                    if j as u8 != sel[i] {
                        consider(&mut trial, i, j as u8, i, j as u8);
                    }
                }
                for h in 0..cp.n {
                    if sel[h] != 0 {
                        continue;
                    }
                    for &j in &cp.tables[h].sizes {
                        consider(&mut trial, i, 0, h, j as u8);
                    }
                }
            }
            match best {
                Some((o, i, vi, h, vh)) => {
                    sel[i] = vi;
                    sel[h] = vh;
                    *obj = o;
                }
                None => return,
            }
        }
    }

    fn sentences(&self) -> Vec<Range<usize>> {
        let mut out: Vec<Range<usize>> = Vec::new();
        for r in &self.cp.sentence {
            if out.last() != Some(r) {
                out.push(r.clone());
            }
        }
        out
    }

    fn window_sweep(&self, sel: &mut Vec<u8>, obj: &mut f64) {
        let sents = self.sentences();
        let mut seen = std::collections::HashSet::new();
        for &target in &WINDOW_TARGETS {
            for s0 in 0..sents.len() {
                let mut s1 = s0 + 1;
                while s1 < sents.len() && sents[s1 - 1].end - sents[s0].start < target {
                    s1 += 1;
                }
                if s1 - s0 < 2 || !seen.insert((s0, s1)) {
                    continue;
                }
                if let Some((new_sel, o)) = self.window_move(sel, &sents[s0..s1]) {
                    if o < *obj {
                        *sel = new_sel;
                        *obj = o;
                        self.local_search(sel, obj);
                    }
                }
                if *obj <= self.stop_at || self.out_of_time() {
                    return;
                }
            }
        }
    }

    /// Number of assignments of `range` with at most `cap_count` gaps.
    fn assignment_count(&self, range: Range<usize>, sel: &[u8], cap_count: usize) -> f64 {
        let mut poly = vec![0.0f64; cap_count + 1];
        poly[0] = 1.0;
        for i in range {
            let k = self.cp.tables[i].sizes.len() as f64;
            let pinned = self.cp.pinned[i].is_some() && sel[i] != 0;
            let mut next = vec![0.0; cap_count + 1];
            for c in 0..=cap_count {
                if !pinned {
                    next[c] += poly[c];
                }
                if c > 0 {
                    next[c] += poly[c - 1] * if pinned { 1.0 } else { k };
                }
            }
            poly = next;
        }
        poly.iter().sum()
    }

    /// Sentence pieces of at most `len` candidates.
    fn blocks(&self, len: usize) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        for s in self.sentences() {
            let pieces = s.len().div_ceil(len);
            let (step, extra) = (s.len() / pieces, s.len() % pieces);
            let mut at = s.start;
            for p in 0..pieces {
                let len = step + usize::from(p < extra);
                out.push(at..at + len);
                at += len;
            }
        }
        out
    }

    /// Re-optimizes three blocks at once, each keeping its gap count, by a
    /// closest-sum search over their enumerations.
    fn triple_sweep(&self, sel: &mut Vec<u8>, obj: &mut f64) {
        let blocks = self.blocks(BLOCK_LEN);
        let nb = blocks.len();
        for a in 0..nb {
            for b in a + 1..nb {
                for c in b + 1..nb {
                    if let Some((new_sel, o)) = self.triple_move(sel, [&blocks[a], &blocks[b], &blocks[c]]) {
                        if o < *obj {
                            *sel = new_sel;
                            *obj = o;
                        }
                    }
                    if *obj <= self.stop_at || self.out_of_time() {
                        return;
                    }
                }
            }
        }
    }

    fn triple_move(&self, sel: &[u8], blocks: [&Range<usize>; 3]) -> Option<(Vec<u8>, f64)> {
        let cp = self.cp;
        let count = |r: &Range<usize>| sel[r.clone()].iter().filter(|&&s| s != 0).count();
        if blocks.iter().any(|r| count(r) == 0) {
            return None;
        }
        let mut lists = Vec::with_capacity(3);
        for r in blocks {
            let c = count(r);
            if self.assignment_count(r.clone(), sel, c) > BLOCK_CAP as f64 {
                return None;
            }
            let e = HalfEnum::run(cp, sel, r.clone(), Quota::Exactly(c));
            lists.push((r.clone(), e, c));
        }
        // The smallest list drives the outer loop.
        lists.sort_by_key(|(_, e, c)| e.by_count[*c].len());

        let values = cp.values(sel);
        let outside: f64 =
            (0..cp.n).filter(|i| !blocks.iter().any(|r| r.contains(i))).map(|i| values[i]).sum();
        let want = cp.objective.target() * cp.m as f64 - outside;

        let (l1, l2, l3) = (
            &lists[0].1.by_count[lists[0].2],
            &lists[1].1.by_count[lists[1].2],
            &lists[2].1.by_count[lists[2].2],
        );
        let mut top: Vec<(f64, [usize; 3])> = Vec::new();
        for &(s1, id1) in l1 {
            let t = want - s1;
            let (mut p, mut q) = (0usize, l3.len());
            while p < l2.len() && q > 0 {
                let (s2, id2) = l2[p];
                let (s3, id3) = l3[q - 1];
                let diff = s2 + s3 - t;
                let d = diff.abs();
                if top.len() < PAIRS_TRIED || d < top[top.len() - 1].0 {
                    let at = top.partition_point(|e| e.0 <= d);
                    top.insert(at, (d, [id1 as usize, id2 as usize, id3 as usize]));
                    top.truncate(PAIRS_TRIED);
                }
                if diff < 0.0 {
                    p += 1;
                } else {
                    q -= 1;
                }
            }
        }
        let mut best: Option<(Vec<u8>, f64)> = None;
        for (_, ids) in top {
            let mut trial = sel.to_vec();
            for (k, (r, e, _)) in lists.iter().enumerate() {
                trial[r.clone()].copy_from_slice(e.entry(ids[k]));
            }
            let o = cp.objective_of(&trial);
            if best.as_ref().is_none_or(|b| o < b.1) {
                best = Some((trial, o));
            }
        }
        best
    }

    /// Four blocks split into two pairs; each pair's sums are enumerated
    /// and the two sorted lists are matched by a closest-sum scan.
    fn quad_sweep(&self, sel: &mut Vec<u8>, obj: &mut f64) {
        let blocks = self.blocks(QUAD_LEN);
        let nb = blocks.len();
        for a in 0..nb {
            for b in a + 1..nb {
                for c in b + 1..nb {
                    for d in c + 1..nb {
                        let quad = [&blocks[a], &blocks[b], &blocks[c], &blocks[d]];
                        if let Some((new_sel, o)) = self.quad_move(sel, quad) {
                            if o < *obj {
                                *sel = new_sel;
                                *obj = o;
                            }
                        }
                        if *obj <= self.stop_at || self.out_of_time() {
                            return;
                        }
                    }
                }
            }
        }
    }

    fn quad_move(&self, sel: &[u8], blocks: [&Range<usize>; 4]) -> Option<(Vec<u8>, f64)> {
        let cp = self.cp;
        let count = |r: &Range<usize>| sel[r.clone()].iter().filter(|&&s| s != 0).count();
        if blocks.iter().any(|r| count(r) == 0) {
            return None;
        }
        let mut enums = Vec::with_capacity(4);
        for r in blocks {
            let c = count(r);
            if self.assignment_count(r.clone(), sel, c) > BLOCK_CAP as f64 {
                return None;
            }
            enums.push((r.clone(), HalfEnum::run(cp, sel, r.clone(), Quota::Exactly(c)), c));
        }
        let len = |k: usize| enums[k].1.by_count[enums[k].2].len();
        // Pairing with the smallest larger side.
        let pairing = [[0, 1, 2, 3], [0, 2, 1, 3], [0, 3, 1, 2]]
            .into_iter()
            .min_by_key(|p| (len(p[0]) * len(p[1])).max(len(p[2]) * len(p[3])))
            .expect("three pairings");
        let pair_list = |x: usize, y: usize| -> Option<Vec<(f64, u32, u32)>> {
            let (lx, ly) = (&enums[x].1.by_count[enums[x].2], &enums[y].1.by_count[enums[y].2]);
            if lx.len() * ly.len() > GROUP_CAP {
                return None;
            }
            let mut out = Vec::with_capacity(lx.len() * ly.len());
            for &(sx, ix) in lx {
                for &(sy, iy) in ly {
                    out.push((sx + sy, ix, iy));
                }
            }
            out.sort_by(|a, b| a.0.total_cmp(&b.0));
            Some(out)
        };
        let l1 = pair_list(pairing[0], pairing[1])?;
        let l2 = pair_list(pairing[2], pairing[3])?;

        let values = cp.values(sel);
        let outside: f64 = (0..cp.n).filter(|i| !blocks.iter().any(|r| r.contains(i))).map(|i| values[i]).sum();
        let want = cp.objective.target() * cp.m as f64 - outside;

        let mut top: Vec<(f64, usize, usize)> = Vec::new();
        let (mut p, mut q) = (0usize, l2.len());
        while p < l1.len() && q > 0 {
            let diff = l1[p].0 + l2[q - 1].0 - want;
            let d = diff.abs();
            if top.len() < PAIRS_TRIED || d < top[top.len() - 1].0 {
                let at = top.partition_point(|e| e.0 <= d);
                top.insert(at, (d, p, q - 1));
                top.truncate(PAIRS_TRIED);
            }
            if diff < 0.0 {
                p += 1;
            } else {
                q -= 1;
            }
        }
        let mut best: Option<(Vec<u8>, f64)> = None;
        for (_, p, q) in top {
            let mut trial = sel.to_vec();
            let ids = [l1[p].1, l1[p].2, l2[q].1, l2[q].2];
            for (k, &e) in pairing.iter().enumerate() {
                let (r, en, _) = &enums[e];
                trial[r.clone()].copy_from_slice(en.entry(ids[k] as usize));
            }
            let o = cp.objective_of(&trial);
            if best.as_ref().is_none_or(|b| o < b.1) {
                best = Some((trial, o));
            }
        }
        best
    }

    fn window_move(&self, sel: &[u8], win: &[Range<usize>]) -> Option<(Vec<u8>, f64)> {
        let cp = self.cp;
        let range = win[0].start..win[win.len() - 1].end;
        let c_w = sel[range.clone()].iter().filter(|&&s| s != 0).count();
        // Split at the sentence boundary that balances both halves.
        let mut best_split = None;
        for k in 1..win.len() {
            let mid = win[k].start;
            let e1 = self.assignment_count(range.start..mid, sel, c_w);
            let e2 = self.assignment_count(mid..range.end, sel, c_w);
            let worst = e1.max(e2);
            if worst <= ENUM_CAP as f64 && best_split.is_none_or(|(w, _)| worst < w) {
                best_split = Some((worst, mid));
            }
        }
        let (_, mid) = best_split?;
        let h1 = HalfEnum::run(cp, sel, range.start..mid, Quota::Window { c_w, second: false });
        let h2 = HalfEnum::run(cp, sel, mid..range.end, Quota::Window { c_w, second: true });

        let values = cp.values(sel);
        let outside: f64 = (0..cp.n).filter(|i| !range.contains(i)).map(|i| values[i]).sum();
        let want = cp.objective.target() * cp.m as f64 - outside;

        let mut top: Vec<(f64, usize, usize)> = Vec::new();
        for c1 in 0..=c_w {
            let (l1, l2) = (&h1.by_count[c1], &h2.by_count[c_w - c1]);
            if l1.is_empty() || l2.is_empty() {
                continue;
            }
            for &(s1, id1) in l1 {
                let t = want - s1;
                let p = l2.partition_point(|e| e.0 < t);
                for q in [p.wrapping_sub(1), p] {
                    if let Some(&(s2, id2)) = l2.get(q) {
                        let d = (s1 + s2 - want).abs();
                        if top.len() < PAIRS_TRIED || d < top[top.len() - 1].0 {
                            let at = top.partition_point(|e| e.0 <= d);
                            top.insert(at, (d, id1 as usize, id2 as usize));
                            top.truncate(PAIRS_TRIED);
                        }
                    }
                }
            }
        }
        let mut best: Option<(Vec<u8>, f64)> = None;
        for (_, id1, id2) in top {
            let mut trial = sel.to_vec();
            trial[range.start..mid].copy_from_slice(h1.entry(id1));
            trial[mid..range.end].copy_from_slice(h2.entry(id2));
            let o = cp.objective_of(&trial);
            if best.as_ref().is_none_or(|b| o < b.1) {
                best = Some((trial, o));
            }
        }
        best
    }
}

#[derive(Clone, Copy)]
enum Quota {
    /// Up to `c_w` gaps; a second half sees `c_w - count` gaps before it.
    Window { c_w: usize, second: bool },
    /// Exactly this many gaps.
    Exactly(usize),
}

/// All assignments of one candidate range, bucketed by gap count and
/// sorted by their approximate summed contribution. Contributions are
/// computed as if everything outside the range stayed as in `sel`.
struct HalfEnum {
    width: usize,
    by_count: Vec<Vec<(f64, u32)>>,
    arena: Vec<u8>,
}

impl HalfEnum {
    fn entry(&self, id: usize) -> &[u8] {
        &self.arena[id * self.width..(id + 1) * self.width]
    }

    fn run(cp: &CompiledProblem, sel: &[u8], range: Range<usize>, quota: Quota) -> Self {
        let width = range.len();
        let before = sel[..range.start].iter().filter(|&&s| s != 0).count() as i64;
        let count_in = |r: Range<usize>| sel[r].iter().filter(|&&s| s != 0).count() as i64;
        let mut out_gis = Vec::with_capacity(width);
        let mut pre_pis = Vec::with_capacity(width);
        for i in range.clone() {
            let s = &cp.sentence[i];
            let (lo, hi) = (s.start.max(range.start), s.end.min(range.end));
            out_gis.push(count_in(s.clone()) - count_in(lo..hi));
            pre_pis.push(count_in(s.start..lo));
        }
        let buckets = match quota {
            Quota::Window { c_w, .. } => c_w + 1,
            Quota::Exactly(c) => c + 1,
        };
        let mut st = Walk {
            cp,
            sel,
            range: range.clone(),
            quota,
            before,
            out_gis,
            pre_pis,
            cur: vec![0; width],
            out: HalfEnum { width, by_count: vec![Vec::new(); buckets], arena: Vec::new() },
        };
        st.rec(range.start, 0);
        let mut out = st.out;
        for l in &mut out.by_count {
            l.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        out
    }
}

struct Walk<'a> {
    cp: &'a CompiledProblem,
    sel: &'a [u8],
    range: Range<usize>,
    quota: Quota,
    before: i64,
    out_gis: Vec<i64>,
    pre_pis: Vec<i64>,
    cur: Vec<u8>,
    out: HalfEnum,
}

impl Walk<'_> {
    fn rec(&mut self, i: usize, count: usize) {
        let max = match self.quota {
            Quota::Window { c_w, .. } => c_w,
            Quota::Exactly(c) => {
                if count + (self.range.end - i) < c {
                    return;
                }
                c
            }
        };
        if i == self.range.end {
            if matches!(self.quota, Quota::Window { .. }) || count == max {
                self.leaf(count);
            }
            return;
        }
        let k = i - self.range.start;
        let pinned = self.cp.pinned[i];
        if pinned.is_none() {
            self.cur[k] = 0;
            self.rec(i + 1, count);
        }
        if count < max {
            let sizes = &self.cp.tables[i].sizes;
            for idx in 0..sizes.len() {
                let j = sizes[idx];
                if pinned.is_some_and(|p| p != j) {
                    continue;
                }
                self.cur[k] = j as u8;
                self.rec(i + 1, count + 1);
            }
            self.cur[k] = 0;
        }
    }

    fn leaf(&mut self, count: usize) {
        let cp = self.cp;
        let (start, end) = (self.range.start, self.range.end);
        let base = match self.quota {
            Quota::Window { c_w, second: true } => self.before + (c_w - count) as i64,
            _ => self.before,
        };
        let mut prefix = vec![0i64; self.cur.len() + 1];
        for (k, &v) in self.cur.iter().enumerate() {
            prefix[k + 1] = prefix[k] + i64::from(v != 0);
        }
        let mut sum = 0.0;
        for (k, &v) in self.cur.iter().enumerate() {
            if v == 0 {
                continue;
            }
            let i = start + k;
            let s = &cp.sentence[i];
            let (lo, hi) = (s.start.max(start) - start, s.end.min(end) - start);
            let og = cp.partners[i].iter().any(|&h| {
                if self.range.contains(&h) {
                    self.cur[h - start] != 0
                } else {
                    self.sel[h] != 0
                }
            }) as i64;
            let t = &cp.tables[i];
            let f = [
                og,
                self.out_gis[k] + prefix[hi] - prefix[lo],
                base + prefix[k],
                self.pre_pis[k] + prefix[k] - prefix[lo],
            ];
            sum += t.value(t.size_index(v as usize).expect("allowed size"), f);
        }
        let id = (self.out.arena.len() / self.out.width) as u32;
        self.out.by_count[count].push((sum, id));
        self.out.arena.extend_from_slice(&self.cur);
    }
}
