//! Dinic max-flow on integer capacities.

use std::collections::VecDeque;

/// Directed graph with a paired reverse arc for every arc.
pub struct FlowGraph {
    head: Vec<usize>,
    cap: Vec<i64>,
    next: Vec<usize>,
    first: Vec<usize>,
    source: usize,
    sink: usize,
    level: Vec<i32>,
    cursor: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl FlowGraph {
    /// `nodes` regular nodes plus an implicit source and sink.
    pub fn new(nodes: usize) -> Self {
        let n = nodes + 2;
        FlowGraph {
            head: Vec::new(),
            cap: Vec::new(),
            next: Vec::new(),
            first: vec![NONE; n],
            source: nodes,
            sink: nodes + 1,
            level: vec![0; n],
            cursor: vec![0; n],
        }
    }

    fn arc(&mut self, u: usize, v: usize, c: i64) {
        self.head.push(v);
        self.cap.push(c);
        self.next.push(self.first[u]);
        self.first[u] = self.head.len() - 1;
    }

    /// Adds `u -> v` with capacity `c_uv` and `v -> u` with `c_vu`.
    pub fn add_edge(&mut self, u: usize, v: usize, c_uv: i64, c_vu: i64) {
        debug_assert!(c_uv >= 0 && c_vu >= 0);
        self.arc(u, v, c_uv);
        self.arc(v, u, c_vu);
    }

    /// Terminal capacities `source -> u` and `u -> sink`.
    pub fn add_terminal(&mut self, u: usize, c_source: i64, c_sink: i64) {
        if c_source > 0 {
            let s = self.source;
            self.add_edge(s, u, c_source, 0);
        }
        if c_sink > 0 {
            let t = self.sink;
            self.add_edge(u, t, c_sink, 0);
        }
    }

    fn bfs(&mut self) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = VecDeque::new();
        self.level[self.source] = 0;
        queue.push_back(self.source);
        while let Some(u) = queue.pop_front() {
            let mut e = self.first[u];
            while e != NONE {
                let v = self.head[e];
                if self.cap[e] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
                e = self.next[e];
            }
        }
        self.level[self.sink] >= 0
    }

    /// One blocking-flow augmentation along level-increasing arcs.
    fn augment(&mut self) -> i64 {
        let mut path: Vec<usize> = Vec::new();
        let mut u = self.source;
        loop {
            if u == self.sink {
                let push = path.iter().map(|&e| self.cap[e]).min().unwrap_or(0);
                for &e in &path {
                    self.cap[e] -= push;
                    self.cap[e ^ 1] += push;
                }
                return push;
            }
            let mut advanced = false;
            while self.cursor[u] != NONE {
                let e = self.cursor[u];
                let v = self.head[e];
                if self.cap[e] > 0 && self.level[v] == self.level[u] + 1 {
                    path.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                self.cursor[u] = self.next[e];
            }
            if !advanced {
                // dead end: retreat and skip the arc that led here
                self.level[u] = -1;
                match path.pop() {
                    Some(e) => {
                        u = self.head[e ^ 1];
                        self.cursor[u] = self.next[self.cursor[u]];
                    }
                    None => return 0,
                }
            }
        }
    }

    /// Runs to completion and returns the max-flow value.
    pub fn max_flow(&mut self) -> i64 {
        let mut total = 0;
        while self.bfs() {
            self.cursor.copy_from_slice(&self.first);
            loop {
                let f = self.augment();
                if f == 0 {
                    break;
                }
                total += f;
            }
        }
        total
    }

    /// After [`max_flow`](Self::max_flow): whether `u` is still reachable
    /// from the source in the residual graph.
    pub fn source_side(&self) -> Vec<bool> {
        let mut seen = vec![false; self.first.len()];
        let mut queue = VecDeque::new();
        seen[self.source] = true;
        queue.push_back(self.source);
        while let Some(u) = queue.pop_front() {
            let mut e = self.first[u];
            while e != NONE {
                let v = self.head[e];
                if self.cap[e] > 0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
                e = self.next[e];
            }
        }
        seen.truncate(self.source);
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn textbook_network() {
        // CLRS figure 26.1: max flow 23
        let mut g = FlowGraph::new(4);
        let (s1, s2, s3, s4) = (0, 1, 2, 3);
        g.add_terminal(s1, 16, 0);
        g.add_terminal(s2, 13, 0);
        g.add_edge(s1, s3, 12, 0);
        g.add_edge(s2, s1, 4, 0);
        g.add_edge(s3, s2, 9, 0);
        g.add_edge(s2, s4, 14, 0);
        g.add_edge(s4, s3, 7, 0);
        g.add_terminal(s3, 0, 20);
        g.add_terminal(s4, 0, 4);
        assert_eq!(g.max_flow(), 23);
    }

    #[test]
    fn cut_side_after_flow() {
        let mut g = FlowGraph::new(2);
        g.add_terminal(0, 5, 0);
        g.add_edge(0, 1, 3, 0);
        g.add_terminal(1, 0, 10);
        assert_eq!(g.max_flow(), 3);
        assert_eq!(g.source_side(), vec![true, false]);
    }

    fn brute_min_cut(n: usize, edges: &[(usize, usize, i64)], term: &[(i64, i64)]) -> i64 {
        (0..1u32 << n)
            .map(|mask| {
                let src = |u: usize| mask >> u & 1 == 1;
                let mut c = 0;
                for (u, &(cs, ct)) in term.iter().enumerate() {
                    if src(u) { c += ct } else { c += cs }
                }
                for &(u, v, w) in edges {
                    if src(u) && !src(v) {
                        c += w;
                    }
                }
                c
            })
            .min()
            .unwrap()
    }

    proptest! {
        #[test]
        fn matches_brute_force_min_cut(
            term in prop::collection::vec((0i64..20, 0i64..20), 5),
            edges in prop::collection::vec((0usize..5, 0usize..5, 0i64..15), 0..12),
        ) {
            let mut g = FlowGraph::new(5);
            for (u, &(cs, ct)) in term.iter().enumerate() {
                g.add_terminal(u, cs, ct);
            }
            let edges: Vec<_> = edges.into_iter().filter(|(u, v, _)| u != v).collect();
            for &(u, v, w) in &edges {
                g.add_edge(u, v, w, 0);
            }
            let flow = g.max_flow();
            prop_assert_eq!(flow, brute_min_cut(5, &edges, &term));
            // the reported cut has the same value
            let side = g.source_side();
            let mut cut = 0;
            for (u, &(cs, ct)) in term.iter().enumerate() {
                cut += if side[u] { ct } else { cs };
            }
            for &(u, v, w) in &edges {
                if side[u] && !side[v] {
                    cut += w;
                }
            }
            prop_assert_eq!(cut, flow);
        }
    }
}
