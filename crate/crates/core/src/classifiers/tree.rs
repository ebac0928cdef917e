//! Second-order regression-tree engine shared by the boosted and bagged
//! learners.
//!
//! A tree is grown on per-instance gradients `g` and hessians `h`. A node
//! with sums `(G, H)` scores `T(G, α)² / (H + λ)` where `T` is the L1 soft
//! threshold, a split gains half the children's scores minus the parent's
//! minus `γ`, and a leaf takes weight `−T(G, α) / (H + λ)`. With `g = −y`,
//! `h = 1` and no regularization the leaf weight is the class-1 fraction and
//! the gain is the reduction in squared error, i.e. the Gini criterion.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Left when `x < threshold`.
    Below(f64),
    /// Left when `x` equals one of the listed category values.
    InSet(Vec<f64>),
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, v: f64) -> bool {
        match self {
            SplitRule::Below(t) => v < *t,
            SplitRule::InSet(s) => s.iter().any(|&c| c == v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => i = if rule.goes_left(row[*feature]) { *left } else { *right },
            }
        }
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_values().count()
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TreeConfig {
    pub max_depth: usize,
    /// `Some` grows leaf-wise (best gain first) up to this many leaves;
    /// `None` grows level-wise.
    pub max_leaves: Option<usize>,
    pub min_child_weight: f64,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Number of candidate features drawn afresh at each node.
    pub node_features: Option<usize>,
}

/// Quantile bins per column for the histogram splitter.
#[derive(Debug, Clone)]
pub(crate) struct Binned {
    bins: Vec<Vec<u16>>,
    cuts: Vec<Vec<f64>>,
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = lo + (hi - lo) / 2.0;
    if t <= lo {
        hi
    } else {
        t
    }
}

impl Binned {
    /// Cut points come from `rows`; every row of `x` is binned.
    pub fn new(x: &Matrix, rows: &[usize], max_bin: usize) -> Self {
        let max_bin = max_bin.clamp(2, u16::MAX as usize);
        let mut bins = Vec::with_capacity(x.cols());
        let mut cuts = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let mut vals: Vec<f64> = rows.iter().map(|&r| x.get(r, j)).collect();
            vals.sort_by(f64::total_cmp);
            let mut distinct = vals.clone();
            distinct.dedup();
            let mut c = Vec::new();
            if distinct.len() <= max_bin {
                for w in distinct.windows(2) {
                    c.push(midpoint(w[0], w[1]));
                }
            } else {
                let n = vals.len();
                for k in 1..max_bin {
                    let idx = k * n / max_bin;
                    let (a, b) = (vals[idx - 1], vals[idx]);
                    if a < b {
                        let t = midpoint(a, b);
                        if c.last().map_or(true, |&l| t > l) {
                            c.push(t);
                        }
                    }
                }
            }
            bins.push(
                (0..x.rows())
                    .map(|r| c.partition_point(|&t| t <= x.get(r, j)) as u16)
                    .collect(),
            );
            cuts.push(c);
        }
        Self { bins, cuts }
    }
}

pub(crate) struct GrowInput<'a> {
    pub x: &'a Matrix,
    /// Instance `i` is row `rows[i]` of `x`; rows may repeat.
    pub rows: &'a [usize],
    pub g: &'a [f64],
    pub h: &'a [f64],
    /// Columns eligible for splitting, in tie-break order.
    pub features: &'a [usize],
    /// Per column of `x`: use the category-sorting split (histogram mode only).
    pub categorical: &'a [bool],
    pub binned: Option<&'a Binned>,
}

fn soft_threshold(g: f64, a: f64) -> f64 {
    if g > a {
        g - a
    } else if g < -a {
        g + a
    } else {
        0.0
    }
}

pub(crate) fn leaf_weight(g: f64, h: f64, cfg: &TreeConfig) -> f64 {
    let w = -soft_threshold(g, cfg.alpha) / (h + cfg.lambda);
    if w == 0.0 {
        0.0
    } else {
        w
    }
}

fn score(g: f64, h: f64, cfg: &TreeConfig) -> f64 {
    let t = soft_threshold(g, cfg.alpha);
    t * t / (h + cfg.lambda)
}

const MIN_GAIN: f64 = 1e-12;

struct Candidate {
    feature: usize,
    rule: SplitRule,
    gain: f64,
}

struct Work {
    node: usize,
    depth: usize,
    members: Vec<u32>,
    /// Exact mode: members sorted by each eligible feature.
    sorted: Vec<Vec<u32>>,
    g: f64,
    h: f64,
    best: Option<Candidate>,
}

struct Grower<'a, 'r> {
    inp: &'a GrowInput<'a>,
    cfg: &'a TreeConfig,
    rng: &'r mut ChaCha8Rng,
    nodes: Vec<Node>,
    flags: Vec<bool>,
}

impl Grower<'_, '_> {
    #[inline]
    fn value(&self, i: u32, f: usize) -> f64 {
        self.inp.x.get(self.inp.rows[i as usize], f)
    }

    fn admissible(&self, gl: f64, hl: f64, nl: usize, g: f64, h: f64, n: usize) -> Option<f64> {
        let (gr, hr, nr) = (g - gl, h - hl, n - nl);
        let cfg = self.cfg;
        if nl < cfg.min_samples_leaf || nr < cfg.min_samples_leaf {
            return None;
        }
        if hl < cfg.min_child_weight || hr < cfg.min_child_weight {
            return None;
        }
        Some(0.5 * (score(gl, hl, cfg) + score(gr, hr, cfg) - score(g, h, cfg)) - cfg.gamma)
    }

    fn scan_exact(&self, w: &Work, pos: usize, best: &mut Option<Candidate>) {
        let f = self.inp.features[pos];
        let s = &w.sorted[pos];
        let n = s.len();
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 0..n - 1 {
            let i = s[k];
            gl += self.inp.g[i as usize];
            hl += self.inp.h[i as usize];
            let (lo, hi) = (self.value(i, f), self.value(s[k + 1], f));
            if lo == hi {
                continue;
            }
            if let Some(gain) = self.admissible(gl, hl, k + 1, w.g, w.h, n) {
                if gain > MIN_GAIN && best.as_ref().map_or(true, |b| gain > b.gain) {
                    *best = Some(Candidate {
                        feature: f,
                        rule: SplitRule::Below(midpoint(lo, hi)),
                        gain,
                    });
                }
            }
        }
    }

    fn scan_histogram(&self, w: &Work, f: usize, binned: &Binned, best: &mut Option<Candidate>) {
        let cuts = &binned.cuts[f];
        let nb = cuts.len() + 1;
        let mut gs = vec![0.0; nb];
        let mut hs = vec![0.0; nb];
        let mut cs = vec![0usize; nb];
        for &i in &w.members {
            let b = binned.bins[f][self.inp.rows[i as usize]] as usize;
            gs[b] += self.inp.g[i as usize];
            hs[b] += self.inp.h[i as usize];
            cs[b] += 1;
        }
        let n = w.members.len();
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0);
        for b in 0..nb - 1 {
            if cs[b] == 0 {
                continue;
            }
            gl += gs[b];
            hl += hs[b];
            nl += cs[b];
            if let Some(gain) = self.admissible(gl, hl, nl, w.g, w.h, n) {
                if gain > MIN_GAIN && best.as_ref().map_or(true, |c| gain > c.gain) {
                    *best = Some(Candidate {
                        feature: f,
                        rule: SplitRule::Below(cuts[b]),
                        gain,
                    });
                }
            }
        }
    }

    /// Categories ordered by gradient-to-hessian ratio, then split on a prefix.
    fn scan_categorical(&self, w: &Work, f: usize, best: &mut Option<Candidate>) {
        let mut items: Vec<(f64, u32)> = w.members.iter().map(|&i| (self.value(i, f), i)).collect();
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cats: Vec<(f64, f64, f64, usize)> = Vec::new();
        for (v, i) in items {
            let (g, h) = (self.inp.g[i as usize], self.inp.h[i as usize]);
            match cats.last_mut() {
                Some(c) if c.0 == v => {
                    c.1 += g;
                    c.2 += h;
                    c.3 += 1;
                }
                _ => cats.push((v, g, h, 1)),
            }
        }
        if cats.len() < 2 {
            return;
        }
        cats.sort_by(|a, b| (a.1 / a.2).total_cmp(&(b.1 / b.2)).then(a.0.total_cmp(&b.0)));
        let n = w.members.len();
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0);
        for k in 0..cats.len() - 1 {
            gl += cats[k].1;
            hl += cats[k].2;
            nl += cats[k].3;
            if let Some(gain) = self.admissible(gl, hl, nl, w.g, w.h, n) {
                if gain > MIN_GAIN && best.as_ref().map_or(true, |c| gain > c.gain) {
                    let mut set: Vec<f64> = cats[..=k].iter().map(|c| c.0).collect();
                    set.sort_by(f64::total_cmp);
                    *best = Some(Candidate {
                        feature: f,
                        rule: SplitRule::InSet(set),
                        gain,
                    });
                }
            }
        }
    }

    fn evaluate(&mut self, w: &Work) -> Option<Candidate> {
        if w.depth >= self.cfg.max_depth || w.members.len() < self.cfg.min_samples_split.max(2) {
            return None;
        }
        let q = self.inp.features.len();
        let mut positions: Vec<usize> = (0..q).collect();
        if let Some(m) = self.cfg.node_features {
            let m = m.clamp(1, q);
            for k in 0..m {
                let j = self.rng.gen_range(k..q);
                positions.swap(k, j);
            }
            positions.truncate(m);
            positions.sort_unstable();
        }
        let mut best = None;
        for pos in positions {
            let f = self.inp.features[pos];
            match self.inp.binned {
                Some(_) if self.inp.categorical.get(f).copied().unwrap_or(false) => {
                    self.scan_categorical(w, f, &mut best)
                }
                Some(b) => self.scan_histogram(w, f, b, &mut best),
                None => self.scan_exact(w, pos, &mut best),
            }
        }
        best
    }

    fn child(&mut self, members: Vec<u32>, sorted: Vec<Vec<u32>>, depth: usize) -> Work {
        let (mut g, mut h) = (0.0, 0.0);
        for &i in &members {
            g += self.inp.g[i as usize];
            h += self.inp.h[i as usize];
        }
        let node = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: leaf_weight(g, h, self.cfg),
        });
        Work {
            node,
            depth,
            members,
            sorted,
            g,
            h,
            best: None,
        }
    }

    fn split(&mut self, w: Work, c: Candidate) -> (Work, Work) {
        for &i in &w.members {
            self.flags[i as usize] = c.rule.goes_left(self.value(i, c.feature));
        }
        let flags = &self.flags;
        let part = |v: &[u32]| -> (Vec<u32>, Vec<u32>) { v.iter().partition(|&&i| flags[i as usize]) };
        let (lm, rm) = part(&w.members);
        let (mut ls, mut rs) = (Vec::new(), Vec::new());
        for s in &w.sorted {
            let (a, b) = part(s);
            ls.push(a);
            rs.push(b);
        }
        let left = self.child(lm, ls, w.depth + 1);
        let right = self.child(rm, rs, w.depth + 1);
        self.nodes[w.node] = Node::Split {
            feature: c.feature,
            rule: c.rule,
            left: left.node,
            right: right.node,
        };
        (left, right)
    }
}

/// Grows one tree. `rng` is consumed only when per-node feature sampling is on.
pub(crate) fn grow(inp: &GrowInput<'_>, cfg: &TreeConfig, rng: &mut ChaCha8Rng) -> Tree {
    let m = inp.rows.len();
    let mut gr = Grower {
        inp,
        cfg,
        rng,
        nodes: Vec::new(),
        flags: vec![false; m],
    };
    let members: Vec<u32> = (0..m as u32).collect();
    let sorted = if inp.binned.is_none() {
        inp.features
            .iter()
            .map(|&f| {
                let mut s = members.clone();
                s.sort_by(|&a, &b| inp.x.get(inp.rows[a as usize], f).total_cmp(&inp.x.get(inp.rows[b as usize], f)));
                s
            })
            .collect()
    } else {
        Vec::new()
    };
    let root = gr.child(members, sorted, 0);
    match cfg.max_leaves {
        None => {
            let mut queue = VecDeque::from([root]);
            while let Some(w) = queue.pop_front() {
                if let Some(c) = gr.evaluate(&w) {
                    let (l, r) = gr.split(w, c);
                    queue.push_back(l);
                    queue.push_back(r);
                }
            }
        }
        Some(max_leaves) => {
            let mut root = root;
            root.best = gr.evaluate(&root);
            let mut open = vec![root];
            let mut leaves = 1;
            while leaves < max_leaves {
                let mut pick: Option<usize> = None;
                for (k, w) in open.iter().enumerate() {
                    if let Some(c) = &w.best {
                        if pick.map_or(true, |p| c.gain > open[p].best.as_ref().unwrap().gain) {
                            pick = Some(k);
                        }
                    }
                }
                let Some(k) = pick else { break };
                let mut w = open.remove(k);
                let c = w.best.take().unwrap();
                let (mut l, mut r) = gr.split(w, c);
                l.best = gr.evaluate(&l);
                r.best = gr.evaluate(&r);
                open.push(l);
                open.push(r);
                leaves += 1;
            }
        }
    }
    Tree { nodes: gr.nodes }
}
