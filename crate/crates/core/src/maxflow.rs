//! Dinic max-flow on real capacities, used for exact binary labeling.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: f64,
}

#[derive(Debug, Clone)]
pub struct FlowGraph {
    adj: Vec<Vec<usize>>,
    arcs: Vec<Arc>,
    eps: f64,
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        FlowGraph { adj: vec![Vec::new(); nodes], arcs: Vec::new(), eps: 0.0 }
    }

    /// Adds `u -> v` with capacity `cap` and the reverse arc with `rev_cap`.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64, rev_cap: f64) {
        debug_assert!(cap >= 0.0 && rev_cap >= 0.0);
        self.adj[u].push(self.arcs.len());
        self.arcs.push(Arc { to: v, cap });
        self.adj[v].push(self.arcs.len());
        self.arcs.push(Arc { to: u, cap: rev_cap });
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let max_cap = self.arcs.iter().map(|a| a.cap).fold(0.0, f64::max);
        // residuals below this are treated as saturated
        self.eps = max_cap * 1e-12;
        let n = self.adj.len();
        let mut flow = 0.0;
        let mut level = vec![usize::MAX; n];
        let mut next = vec![0usize; n];
        while self.bfs(s, t, &mut level) {
            next.iter_mut().for_each(|x| *x = 0);
            loop {
                let pushed = self.dfs(s, t, f64::INFINITY, &level, &mut next);
                if pushed <= self.eps {
                    break;
                }
                flow += pushed;
            }
        }
        flow
    }

    fn bfs(&self, s: usize, t: usize, level: &mut [usize]) -> bool {
        level.iter_mut().for_each(|l| *l = usize::MAX);
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &ai in &self.adj[u] {
                let a = &self.arcs[ai];
                if a.cap > self.eps && level[a.to] == usize::MAX {
                    level[a.to] = level[u] + 1;
                    q.push_back(a.to);
                }
            }
        }
        level[t] != usize::MAX
    }

    fn dfs(&mut self, u: usize, t: usize, limit: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if u == t {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let ai = self.adj[u][next[u]];
            let (to, cap) = (self.arcs[ai].to, self.arcs[ai].cap);
            if cap > self.eps && level[to] == level[u] + 1 {
                let d = self.dfs(to, t, limit.min(cap), level, next);
                if d > self.eps {
                    self.arcs[ai].cap -= d;
                    self.arcs[ai ^ 1].cap += d;
                    return d;
                }
            }
            next[u] += 1;
        }
        0.0
    }

    /// Nodes reachable from `s` in the residual graph after `max_flow`: the
    /// smallest source side among all minimum cuts.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &ai in &self.adj[u] {
                let a = &self.arcs[ai];
                if a.cap > self.eps && !seen[a.to] {
                    seen[a.to] = true;
                    stack.push(a.to);
                }
            }
        }
        seen
    }
}
