use std::collections::BTreeSet;

/// Directed graph over variable indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl CausalGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        CausalGraph { n, edges: edges.into_iter().collect() }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Parents of `node`, ascending by index.
    pub fn parents(&self, node: usize) -> Vec<usize> {
        self.edges.iter().filter(|(_, c)| *c == node).map(|(p, _)| *p).collect()
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        self.edges.iter().filter(|(p, _)| *p == node).map(|(_, c)| *c).collect()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.edges.iter().any(|(_, c)| *c == i)).collect()
    }

    /// Kahn's algorithm with smallest-index-first ordering; `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indegree = vec![0usize; self.n];
        for &(_, c) in &self.edges {
            indegree[c] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..self.n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.n);
        while let Some(&next) = ready.iter().next() {
            ready.remove(&next);
            order.push(next);
            for &(p, c) in &self.edges {
                if p == next {
                    indegree[c] -= 1;
                    if indegree[c] == 0 {
                        ready.insert(c);
                    }
                }
            }
        }
        (order.len() == self.n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }
}
