//! Skeleton graphs and their decomposition into non-branching chains.

use std::collections::HashMap;

/// Undirected simple graph over vertices `0..n` with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    pub adj: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph { adj: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Graph::new(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a == b || self.adj[a].contains(&b) {
            return;
        }
        for (u, w) in [(a, b), (b, a)] {
            let pos = self.adj[u].partition_point(|x| *x < w);
            self.adj[u].insert(pos, w);
        }
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        self.adj[a].retain(|x| *x != b);
        self.adj[b].retain(|x| *x != a);
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(a, b)` with `a < b` that lie on no cycle.
    fn bridges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut out = Vec::new();
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // iterative DFS: (vertex, parent, next neighbor slot)
            let mut stack = vec![(root, usize::MAX, 0usize)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (v, parent, ref mut k)) = stack.last_mut() {
                if *k < self.adj[v].len() {
                    let w = self.adj[v][*k];
                    *k += 1;
                    if w == parent {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, v, 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if parent != usize::MAX {
                        low[parent] = low[parent].min(low[v]);
                        if low[v] > disc[parent] {
                            out.push((parent.min(v), parent.max(v)));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Breaks every cycle: repeatedly takes the smallest vertex lying on a
/// cycle and drops its cycle edge to the largest such neighbor.
pub fn cut_cycles(g: &mut Graph) {
    loop {
        let bridges = g.bridges();
        if bridges.len() == g.edge_count() {
            return;
        }
        let is_bridge = |a: usize, b: usize| bridges.binary_search(&(a.min(b), a.max(b))).is_ok();
        let cut = (0..g.len()).find_map(|v| {
            g.adj[v]
                .iter()
                .rev()
                .find(|&&w| !is_bridge(v, w))
                .map(|&w| (v, w))
        });
        match cut {
            Some((v, w)) => g.remove_edge(v, w),
            None => return,
        }
    }
}

/// Distances from `s` within the current graph, plus BFS parents.
fn bfs(g: &Graph, s: usize, dist: &mut [usize], parent: &mut [usize], order: &mut Vec<usize>) {
    order.clear();
    dist[s] = 0;
    parent[s] = usize::MAX;
    order.push(s);
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &w in &g.adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                parent[w] = v;
                order.push(w);
            }
        }
    }
}

/// Longest simple path of an acyclic graph, lexicographically smallest
/// among equally long ones when read as a vertex sequence.
fn longest_path(g: &Graph) -> Option<Vec<usize>> {
    let n = g.len();
    let mut dist_a = vec![usize::MAX; n];
    let mut dist_b = vec![usize::MAX; n];
    let mut scratch = vec![usize::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::new();
    // eccentricity of each vertex via the two ends of its tree's diameter
    let mut ecc = vec![0usize; n];
    let mut best = 0usize;
    for v in 0..n {
        if g.degree(v) == 0 || dist_a[v] != usize::MAX {
            continue;
        }
        bfs(g, v, &mut scratch, &mut parent, &mut order);
        let a = *order.iter().max_by_key(|&&u| (scratch[u], std::cmp::Reverse(u))).unwrap();
        let comp = order.clone();
        bfs(g, a, &mut dist_a, &mut parent, &mut order);
        let b = *order.iter().max_by_key(|&&u| (dist_a[u], std::cmp::Reverse(u))).unwrap();
        bfs(g, b, &mut dist_b, &mut parent, &mut order);
        for &u in &comp {
            ecc[u] = dist_a[u].max(dist_b[u]);
            best = best.max(ecc[u]);
        }
    }
    if best == 0 {
        return None;
    }
    let s = (0..n).find(|&v| g.degree(v) > 0 && ecc[v] == best)?;
    // heights below each vertex of the tree rooted at s
    let mut dist = vec![usize::MAX; n];
    bfs(g, s, &mut dist, &mut parent, &mut order);
    let mut height = vec![0usize; n];
    for &v in order.iter().rev() {
        if parent[v] != usize::MAX {
            height[parent[v]] = height[parent[v]].max(height[v] + 1);
        }
    }
    let mut path = vec![s];
    let mut cur = s;
    let mut remaining = best;
    while remaining > 0 {
        let next = g.adj[cur]
            .iter()
            .copied()
            .find(|&w| w != parent[cur] && height[w] + 1 >= remaining)
            .expect("height bookkeeping");
        path.push(next);
        cur = next;
        remaining -= 1;
    }
    Some(path)
}

/// Splits a graph into chains, longest first. Cycles are cut beforehand.
/// Each extracted chain loses its edges and interior vertices; extraction
/// stops once the longest remaining chain has fewer than `min_len` vertices.
pub fn longest_chain_decomposition(g: &Graph, min_len: usize) -> Vec<Vec<usize>> {
    let mut g = g.clone();
    cut_cycles(&mut g);
    let mut out = Vec::new();
    while let Some(path) = longest_path(&g) {
        if path.len() < min_len.max(2) {
            break;
        }
        for w in path.windows(2) {
            g.remove_edge(w[0], w[1]);
        }
        for &v in &path[1..path.len() - 1] {
            for w in std::mem::take(&mut g.adj[v]) {
                g.adj[w].retain(|x| *x != v);
            }
        }
        out.push(path);
    }
    out
}

/// 26-adjacency graph over skeleton voxels, sorted by (z, y, x). An edge is
/// left out when both ends reach each other through a common neighbor over
/// two strictly shorter steps, which removes the small triangles of
/// diagonal staircases.
pub fn skeleton_graph(voxels: &[[i64; 3]]) -> (Vec<[i64; 3]>, Graph) {
    let mut nodes = voxels.to_vec();
    nodes.sort_unstable_by_key(|v| (v[2], v[1], v[0]));
    nodes.dedup();
    let index: HashMap<[i64; 3], usize> = nodes.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let d2 = |a: &[i64; 3], b: &[i64; 3]| (0..3).map(|k| (a[k] - b[k]).pow(2)).sum::<i64>();
    let mut full = Graph::new(nodes.len());
    for (i, v) in nodes.iter().enumerate() {
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(&j) = index.get(&[v[0] + dx, v[1] + dy, v[2] + dz]) {
                        if j > i {
                            full.add_edge(i, j);
                        }
                    }
                }
            }
        }
    }
    let mut g = full.clone();
    for a in 0..nodes.len() {
        for &b in &full.adj[a] {
            if b < a {
                continue;
            }
            let ab = d2(&nodes[a], &nodes[b]);
            let shortcut = full.adj[a].iter().any(|&c| {
                c != b && full.adj[b].contains(&c) && d2(&nodes[a], &nodes[c]) < ab && d2(&nodes[c], &nodes[b]) < ab
            });
            if shortcut {
                g.remove_edge(a, b);
            }
        }
    }
    (nodes, g)
}
