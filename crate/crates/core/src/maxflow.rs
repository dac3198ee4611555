//! s/t max-flow / min-cut on sparse directed graphs.
//!
//! Augmenting paths are found with two search trees grown from the terminals
//! and reused between augmentations (Boykov-Kolmogorov). Infinite capacities
//! use [`INF`], which absorbs finite additions and subtractions.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

/// Infinite capacity.
pub const INF: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Sink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    /// Maximum flow value; [`INF`] when every cut crosses an infinite arc.
    pub flow_value: f64,
    pub side: Vec<Side>,
}

impl CutResult {
    pub fn is_finite(&self) -> bool {
        self.flow_value.is_finite()
    }
}

#[derive(Debug, Clone)]
struct Arc {
    head: usize,
    cap: f64,
}

/// Flow network over `node_count` non-terminal nodes. Arcs are stored in
/// pairs: arc `2k` and its reverse `2k + 1`.
#[derive(Debug, Clone, Default)]
pub struct FlowGraph {
    source_caps: Vec<f64>,
    sink_caps: Vec<f64>,
    arcs: Vec<Arc>,
    adjacency: Vec<Vec<usize>>,
    pair_index: HashMap<(usize, usize), usize>,
}

fn check_cap(cap: f64) -> Result<()> {
    if cap.is_nan() || cap < 0.0 {
        return Err(Error::invalid(format!("capacity must be non-negative, got {cap}")));
    }
    Ok(())
}

impl FlowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_nodes(n: usize) -> Self {
        let mut g = Self::new();
        g.add_nodes(n);
        g
    }

    pub fn add_node(&mut self) -> usize {
        self.source_caps.push(0.0);
        self.sink_caps.push(0.0);
        self.adjacency.push(Vec::new());
        self.source_caps.len() - 1
    }

    /// Adds `n` nodes and returns the id of the first.
    pub fn add_nodes(&mut self, n: usize) -> usize {
        let first = self.node_count();
        for _ in 0..n {
            self.add_node();
        }
        first
    }

    pub fn node_count(&self) -> usize {
        self.source_caps.len()
    }

    fn check_node(&self, p: usize) -> Result<()> {
        if p >= self.node_count() {
            return Err(Error::invalid(format!("node {p} does not exist")));
        }
        Ok(())
    }

    /// Accumulates capacity of `source -> p` and `p -> sink`.
    pub fn add_terminal_caps(&mut self, p: usize, cap_source: f64, cap_sink: f64) -> Result<()> {
        self.check_node(p)?;
        check_cap(cap_source)?;
        check_cap(cap_sink)?;
        self.source_caps[p] += cap_source;
        self.sink_caps[p] += cap_sink;
        Ok(())
    }

    /// Accumulates capacity of `p -> q` and `q -> p`.
    pub fn add_arc(&mut self, p: usize, q: usize, cap_pq: f64, cap_qp: f64) -> Result<()> {
        self.check_node(p)?;
        self.check_node(q)?;
        check_cap(cap_pq)?;
        check_cap(cap_qp)?;
        if p == q {
            return Err(Error::invalid(format!("self-loop on node {p}")));
        }
        let (a, b, fwd, bwd) = if p < q {
            (p, q, cap_pq, cap_qp)
        } else {
            (q, p, cap_qp, cap_pq)
        };
        match self.pair_index.get(&(a, b)) {
            Some(&k) => {
                self.arcs[k].cap += fwd;
                self.arcs[k + 1].cap += bwd;
            }
            None => {
                let k = self.arcs.len();
                self.arcs.push(Arc { head: b, cap: fwd });
                self.arcs.push(Arc { head: a, cap: bwd });
                self.adjacency[a].push(k);
                self.adjacency[b].push(k + 1);
                self.pair_index.insert((a, b), k);
            }
        }
        Ok(())
    }

    pub fn terminal_caps(&self, p: usize) -> (f64, f64) {
        (self.source_caps[p], self.sink_caps[p])
    }

    /// Total capacity of the directed arc `p -> q` (0 if absent).
    pub fn arc_capacity(&self, p: usize, q: usize) -> f64 {
        let (a, b) = if p < q { (p, q) } else { (q, p) };
        match self.pair_index.get(&(a, b)) {
            Some(&k) if p < q => self.arcs[k].cap,
            Some(&k) => self.arcs[k + 1].cap,
            None => 0.0,
        }
    }

    /// Arcs as `(p, q, cap_pq, cap_qp)` in insertion order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        self.arcs
            .chunks_exact(2)
            .map(|pair| (pair[1].head, pair[0].head, pair[0].cap, pair[1].cap))
    }

    /// Capacity of the s/t cut induced by `side`.
    pub fn cut_capacity(&self, side: &[Side]) -> f64 {
        let mut total = 0.0;
        for p in 0..self.node_count() {
            total += match side[p] {
                Side::Source => self.sink_caps[p],
                Side::Sink => self.source_caps[p],
            };
        }
        for (p, q, cap_pq, cap_qp) in self.arcs() {
            match (side[p], side[q]) {
                (Side::Source, Side::Sink) => total += cap_pq,
                (Side::Sink, Side::Source) => total += cap_qp,
                _ => {}
            }
        }
        total
    }

    pub fn solve(&self) -> CutResult {
        Solver::new(self).run()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parent {
    None,
    Terminal,
    Orphan,
    /// Arc from the node towards its parent.
    Arc(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tree {
    Source,
    Sink,
}

struct Solver<'g> {
    graph: &'g FlowGraph,
    residual: Vec<f64>,
    source_res: Vec<f64>,
    sink_res: Vec<f64>,
    parent: Vec<Parent>,
    tree: Vec<Tree>,
    timestamp: Vec<u64>,
    dist: Vec<u64>,
    in_queue: Vec<bool>,
    active: VecDeque<usize>,
    orphans: VecDeque<usize>,
    time: u64,
    flow: f64,
}

#[inline]
fn sister(a: usize) -> usize {
    a ^ 1
}

impl<'g> Solver<'g> {
    fn new(graph: &'g FlowGraph) -> Self {
        let n = graph.node_count();
        Solver {
            graph,
            residual: graph.arcs.iter().map(|a| a.cap).collect(),
            source_res: graph.source_caps.clone(),
            sink_res: graph.sink_caps.clone(),
            parent: vec![Parent::None; n],
            tree: vec![Tree::Source; n],
            timestamp: vec![0; n],
            dist: vec![0; n],
            in_queue: vec![false; n],
            active: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
            flow: 0.0,
        }
    }

    fn head(&self, a: usize) -> usize {
        self.graph.arcs[a].head
    }

    fn in_tree(&self, p: usize) -> bool {
        self.parent[p] != Parent::None
    }

    fn activate(&mut self, p: usize) {
        if !self.in_queue[p] {
            self.in_queue[p] = true;
            self.active.push_back(p);
        }
    }

    fn run(mut self) -> CutResult {
        let n = self.graph.node_count();
        for p in 0..n {
            let (s, t) = (self.source_res[p], self.sink_res[p]);
            let m = s.min(t);
            if m.is_infinite() {
                return self.infinite();
            }
            self.flow += m;
            self.source_res[p] = s - m;
            self.sink_res[p] = t - m;
            if self.source_res[p] > 0.0 {
                self.tree[p] = Tree::Source;
                self.parent[p] = Parent::Terminal;
                self.dist[p] = 1;
                self.activate(p);
            } else if self.sink_res[p] > 0.0 {
                self.tree[p] = Tree::Sink;
                self.parent[p] = Parent::Terminal;
                self.dist[p] = 1;
                self.activate(p);
            }
        }

        while let Some(p) = self.active.pop_front() {
            self.in_queue[p] = false;
            if !self.in_tree(p) {
                continue;
            }
            let Some(bridge) = self.grow(p) else { continue };
            self.time += 1;
            if !self.augment(bridge) {
                return self.infinite();
            }
            self.adopt();
            if self.in_tree(p) && !self.in_queue[p] {
                self.in_queue[p] = true;
                self.active.push_front(p);
            }
        }
        let side = (0..n)
            .map(|p| {
                if self.in_tree(p) && self.tree[p] == Tree::Source {
                    Side::Source
                } else {
                    Side::Sink
                }
            })
            .collect();
        CutResult {
            flow_value: self.flow,
            side,
        }
    }

    /// Expands the tree of `p`; returns a source-to-sink arc when the trees meet.
    fn grow(&mut self, p: usize) -> Option<usize> {
        let graph = self.graph;
        for &a in &graph.adjacency[p] {
            let q = self.head(a);
            match self.tree[p] {
                Tree::Source => {
                    if self.residual[a] <= 0.0 {
                        continue;
                    }
                    if !self.in_tree(q) {
                        self.tree[q] = Tree::Source;
                        self.parent[q] = Parent::Arc(sister(a));
                        self.timestamp[q] = self.timestamp[p];
                        self.dist[q] = self.dist[p] + 1;
                        self.activate(q);
                    } else if self.tree[q] == Tree::Sink {
                        return Some(a);
                    }
                }
                Tree::Sink => {
                    if self.residual[sister(a)] <= 0.0 {
                        continue;
                    }
                    if !self.in_tree(q) {
                        self.tree[q] = Tree::Sink;
                        self.parent[q] = Parent::Arc(sister(a));
                        self.timestamp[q] = self.timestamp[p];
                        self.dist[q] = self.dist[p] + 1;
                        self.activate(q);
                    } else if self.tree[q] == Tree::Source {
                        return Some(sister(a));
                    }
                }
            }
        }
        None
    }

    /// Pushes the bottleneck along the path through `bridge` (tail in the
    /// source tree). Returns false if the path has infinite capacity.
    fn augment(&mut self, bridge: usize) -> bool {
        let s_end = self.head(sister(bridge));
        let t_end = self.head(bridge);

        let mut bottleneck = self.residual[bridge];
        let mut p = s_end;
        while let Parent::Arc(a) = self.parent[p] {
            bottleneck = bottleneck.min(self.residual[sister(a)]);
            p = self.head(a);
        }
        bottleneck = bottleneck.min(self.source_res[p]);
        let mut p = t_end;
        while let Parent::Arc(a) = self.parent[p] {
            bottleneck = bottleneck.min(self.residual[a]);
            p = self.head(a);
        }
        bottleneck = bottleneck.min(self.sink_res[p]);
        if bottleneck.is_infinite() {
            return false;
        }

        self.residual[bridge] -= bottleneck;
        self.residual[sister(bridge)] += bottleneck;
        let mut p = s_end;
        while let Parent::Arc(a) = self.parent[p] {
            self.residual[a] += bottleneck;
            self.residual[sister(a)] -= bottleneck;
            if self.residual[sister(a)] <= 0.0 {
                self.make_orphan(p);
            }
            p = self.head(a);
        }
        self.source_res[p] -= bottleneck;
        if self.source_res[p] <= 0.0 {
            self.make_orphan(p);
        }
        let mut p = t_end;
        while let Parent::Arc(a) = self.parent[p] {
            self.residual[sister(a)] += bottleneck;
            self.residual[a] -= bottleneck;
            if self.residual[a] <= 0.0 {
                self.make_orphan(p);
            }
            p = self.head(a);
        }
        self.sink_res[p] -= bottleneck;
        if self.sink_res[p] <= 0.0 {
            self.make_orphan(p);
        }
        self.flow += bottleneck;
        true
    }

    fn make_orphan(&mut self, p: usize) {
        self.parent[p] = Parent::Orphan;
        self.orphans.push_front(p);
    }

    /// Residual capacity into `p` from neighbor via `a` (arc out of `p`), in tree direction.
    fn tree_residual(&self, tree: Tree, a: usize) -> f64 {
        match tree {
            Tree::Source => self.residual[sister(a)],
            Tree::Sink => self.residual[a],
        }
    }

    fn adopt(&mut self) {
        while let Some(p) = self.orphans.pop_front() {
            self.process_orphan(p);
        }
    }

    fn process_orphan(&mut self, p: usize) {
        let graph = self.graph;
        let tree = self.tree[p];
        let mut best: Option<(usize, u64)> = None;
        for &a in &graph.adjacency[p] {
            if self.tree_residual(tree, a) <= 0.0 {
                continue;
            }
            let q = self.head(a);
            if !self.in_tree(q) || self.tree[q] != tree {
                continue;
            }
            // Distance from q to its terminal, or None if q hangs off an orphan.
            let mut d = 0;
            let mut j = q;
            let origin = loop {
                if self.timestamp[j] == self.time {
                    d += self.dist[j];
                    break Some(d);
                }
                d += 1;
                match self.parent[j] {
                    Parent::Terminal => {
                        self.timestamp[j] = self.time;
                        self.dist[j] = 1;
                        break Some(d);
                    }
                    Parent::Orphan | Parent::None => break None,
                    Parent::Arc(up) => j = self.head(up),
                }
            };
            let Some(d) = origin else { continue };
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((a, d));
            }
            let mut d = d;
            let mut j = q;
            while self.timestamp[j] != self.time {
                self.timestamp[j] = self.time;
                self.dist[j] = d;
                d -= 1;
                match self.parent[j] {
                    Parent::Arc(up) => j = self.head(up),
                    _ => break,
                }
            }
        }

        if let Some((a, d)) = best {
            self.parent[p] = Parent::Arc(a);
            self.timestamp[p] = self.time;
            self.dist[p] = d + 1;
            return;
        }

        for &a in &graph.adjacency[p] {
            let q = self.head(a);
            if !self.in_tree(q) || self.tree[q] != tree {
                continue;
            }
            if self.tree_residual(tree, a) > 0.0 {
                self.activate(q);
            }
            if let Parent::Arc(up) = self.parent[q] {
                if self.head(up) == p {
                    self.make_orphan(q);
                }
            }
        }
        self.parent[p] = Parent::None;
    }

    fn infinite(self) -> CutResult {
        // Diagnostic partition: nodes reachable from the source in the residual graph.
        let n = self.graph.node_count();
        let mut side = vec![Side::Sink; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&p| self.source_res[p] > 0.0).collect();
        for &p in &queue {
            side[p] = Side::Source;
        }
        while let Some(p) = queue.pop_front() {
            for &a in &self.graph.adjacency[p] {
                let q = self.head(a);
                if self.residual[a] > 0.0 && side[q] == Side::Sink {
                    side[q] = Side::Source;
                    queue.push_back(q);
                }
            }
        }
        CutResult {
            flow_value: INF,
            side,
        }
    }
}
