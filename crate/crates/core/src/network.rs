//! Plain node-indexed networks: the common currency of folds, baselines and metrics.

use serde::{Deserialize, Serialize};

/// A simple graph over nodes `0..node_count`.
///
/// Edges are normalized on construction: self-loops dropped, undirected
/// pairs stored as `(min, max)`, the list sorted and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    directed: bool,
    node_count: usize,
    edges: Vec<(u32, u32)>,
}

/// Degree sequences of a network. For undirected networks `in_degree` and
/// `out_degree` both equal `total`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Degrees {
    pub total: Vec<usize>,
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
}

/// Which degree a directed network contributes to a degree-based statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeMode {
    #[default]
    Total,
    In,
    Out,
}

impl Network {
    pub fn new(node_count: usize, directed: bool, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut edges: Vec<(u32, u32)> = edges
            .into_iter()
            .filter(|(u, v)| u != v)
            .map(|(u, v)| if directed || u < v { (u, v) } else { (v, u) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        debug_assert!(edges.iter().all(|&(u, v)| (u as usize) < node_count && (v as usize) < node_count));
        Network { directed, node_count, edges }
    }

    pub fn empty(node_count: usize, directed: bool) -> Self {
        Network { directed, node_count, edges: Vec::new() }
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn degrees(&self) -> Degrees {
        let n = self.node_count;
        let mut in_degree = vec![0; n];
        let mut out_degree = vec![0; n];
        for &(u, v) in &self.edges {
            out_degree[u as usize] += 1;
            in_degree[v as usize] += 1;
        }
        if self.directed {
            let total = in_degree.iter().zip(&out_degree).map(|(a, b)| a + b).collect();
            Degrees { total, in_degree, out_degree }
        } else {
            let total: Vec<usize> = in_degree.iter().zip(&out_degree).map(|(a, b)| a + b).collect();
            Degrees { in_degree: total.clone(), out_degree: total.clone(), total }
        }
    }

    pub fn degree_sequence(&self, mode: DegreeMode) -> Vec<usize> {
        let d = self.degrees();
        match mode {
            DegreeMode::Total => d.total,
            DegreeMode::In => d.in_degree,
            DegreeMode::Out => d.out_degree,
        }
    }

    /// Symmetrized adjacency lists, sorted, without duplicates.
    pub fn undirected_adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(u, v) in &self.edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// The undirected view of this network (reciprocal arcs collapse to one edge).
    pub fn symmetrized(&self) -> Network {
        if !self.directed {
            return self.clone();
        }
        Network::new(self.node_count, false, self.edges.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_edges() {
        let g = Network::new(3, false, [(1, 0), (0, 1), (2, 2), (1, 2)]);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        let d = Network::new(3, true, [(1, 0), (0, 1), (0, 1)]);
        assert_eq!(d.edges(), &[(0, 1), (1, 0)]);
        assert_eq!(d.symmetrized().edge_count(), 1);
    }

    #[test]
    fn directed_degrees_split() {
        let d = Network::new(3, true, [(0, 1), (0, 2), (1, 2)]);
        let deg = d.degrees();
        assert_eq!(deg.out_degree, vec![2, 1, 0]);
        assert_eq!(deg.in_degree, vec![0, 1, 2]);
        assert_eq!(deg.total, vec![2, 2, 2]);
    }
}
