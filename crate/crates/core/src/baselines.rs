//! Rule-based reference generators: Erdős–Rényi, Barabási–Albert and
//! Watts–Strogatz small-world graphs.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Network;

pub const DEFAULT_P_REWIRE: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("invalid baseline parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    ER,
    BA,
    WS,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::ER, BaselineKind::BA, BaselineKind::WS];
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::ER => "ER",
            BaselineKind::BA => "BA",
            BaselineKind::WS => "WS",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = BaselineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "ER" => Ok(BaselineKind::ER),
            "BA" => Ok(BaselineKind::BA),
            "WS" | "SW" => Ok(BaselineKind::WS),
            _ => Err(BaselineError::InvalidParams(format!("unknown baseline {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub n: usize,
    /// Target average degree.
    pub kbar: f64,
    /// Watts–Strogatz only.
    pub p_rewire: f64,
    pub seed: u64,
}

impl BaselineSpec {
    pub fn er_p(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.kbar / (self.n - 1) as f64
        }
    }

    pub fn ba_m(&self) -> usize {
        (self.kbar / 2.0).round() as usize
    }

    /// Ring degree, twice the target average degree, rounded to even.
    pub fn ws_ring_degree(&self) -> usize {
        2 * (self.kbar.round() as usize)
    }
}

pub fn generate(spec: &BaselineSpec) -> Result<Network, BaselineError> {
    if !spec.kbar.is_finite() || spec.kbar < 0.0 {
        return Err(BaselineError::InvalidParams(format!("kbar {}", spec.kbar)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        BaselineKind::ER => erdos_renyi(spec.n, spec.er_p(), &mut rng),
        BaselineKind::BA => barabasi_albert(spec.n, spec.ba_m(), &mut rng),
        BaselineKind::WS => watts_strogatz(spec.n, spec.ws_ring_degree(), spec.p_rewire, &mut rng),
    }
}

/// G(n, p) by geometric skipping over the pairs `u < v`.
pub fn erdos_renyi(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Result<Network, BaselineError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(BaselineError::InvalidParams(format!("p = {p} outside [0, 1]")));
    }
    let mut edges = Vec::new();
    if p > 0.0 && n > 1 {
        if p >= 1.0 {
            for v in 1..n as u32 {
                for u in 0..v {
                    edges.push((u, v));
                }
            }
        } else {
            let lp = (1.0 - p).ln();
            let (mut v, mut w) = (1i64, -1i64);
            while (v as usize) < n {
                let r: f64 = rng.gen();
                w += 1 + ((1.0 - r).ln() / lp).floor() as i64;
                while w >= v && (v as usize) < n {
                    w -= v;
                    v += 1;
                }
                if (v as usize) < n {
                    edges.push((w as u32, v as u32));
                }
            }
        }
    }
    Ok(Network::new(n, false, edges))
}

/// Preferential attachment from an m-clique core, each new node linking to
/// m distinct existing nodes.
pub fn barabasi_albert(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Network, BaselineError> {
    if m < 1 || n < m + 1 {
        return Err(BaselineError::InvalidParams(format!("BA needs m >= 1 and n >= m + 1 (n = {n}, m = {m})")));
    }
    let mut edges = Vec::with_capacity(n * m);
    // Each node appears once per incident edge.
    let mut ends: Vec<u32> = Vec::with_capacity(2 * n * m);
    for v in 1..m as u32 {
        for u in 0..v {
            edges.push((u, v));
            ends.extend([u, v]);
        }
    }
    let mut targets = HashSet::with_capacity(m);
    for v in m as u32..n as u32 {
        targets.clear();
        while targets.len() < m {
            let t = if ends.is_empty() { rng.gen_range(0..v) } else { ends[rng.gen_range(0..ends.len())] };
            targets.insert(t);
        }
        let mut chosen: Vec<u32> = targets.iter().copied().collect();
        chosen.sort_unstable();
        for t in chosen {
            edges.push((t, v));
            ends.extend([t, v]);
        }
    }
    Ok(Network::new(n, false, edges))
}

/// Ring lattice of even degree `k` with each clockwise edge rewired with
/// probability `p`.
pub fn watts_strogatz(n: usize, k: usize, p: f64, rng: &mut ChaCha8Rng) -> Result<Network, BaselineError> {
    if k % 2 != 0 || k >= n || !(0.0..=1.0).contains(&p) {
        return Err(BaselineError::InvalidParams(format!("WS needs even k < n and p in [0, 1] (n = {n}, k = {k}, p = {p})")));
    }
    let mut adj: Vec<HashSet<u32>> = vec![HashSet::new(); n];
    let link = |adj: &mut Vec<HashSet<u32>>, u: u32, v: u32| {
        adj[u as usize].insert(v);
        adj[v as usize].insert(u);
    };
    for u in 0..n {
        for j in 1..=k / 2 {
            link(&mut adj, u as u32, ((u + j) % n) as u32);
        }
    }
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = ((u + j) % n) as u32;
            if rng.gen::<f64>() >= p || adj[u].len() >= n - 1 {
                continue;
            }
            let w = loop {
                let w = rng.gen_range(0..n as u32);
                if w as usize != u && !adj[u].contains(&w) {
                    break w;
                }
            };
            adj[u].remove(&v);
            adj[v as usize].remove(&(u as u32));
            link(&mut adj, u as u32, w);
        }
    }
    let edges: Vec<(u32, u32)> = adj
        .iter()
        .enumerate()
        .flat_map(|(u, s)| s.iter().filter(move |&&v| v as usize > u).map(move |&v| (u as u32, v)))
        .collect();
    Ok(Network::new(n, false, edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: BaselineKind, n: usize, kbar: f64, seed: u64) -> BaselineSpec {
        BaselineSpec { kind, n, kbar, p_rewire: DEFAULT_P_REWIRE, seed }
    }

    #[test]
    fn derived_parameters() {
        assert!((spec(BaselineKind::ER, 1001, 4.0, 0).er_p() - 0.004).abs() < 1e-15);
        assert_eq!(spec(BaselineKind::BA, 100, 4.0, 0).ba_m(), 2);
        assert_eq!(spec(BaselineKind::WS, 100, 4.0, 0).ws_ring_degree(), 8);
    }

    #[test]
    fn same_seed_same_edges() {
        for kind in BaselineKind::ALL {
            let a = generate(&spec(kind, 300, 4.0, 9)).unwrap();
            let b = generate(&spec(kind, 300, 4.0, 9)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, generate(&spec(kind, 300, 4.0, 10)).unwrap());
        }
    }

    #[test]
    fn ba_edge_count_and_invalid_params() {
        let g = generate(&spec(BaselineKind::BA, 500, 4.0, 1)).unwrap();
        assert_eq!(g.edge_count(), 1 + (500 - 2) * 2);
        assert!(matches!(generate(&spec(BaselineKind::BA, 2, 4.0, 1)), Err(BaselineError::InvalidParams(_))));
        assert!(matches!(generate(&spec(BaselineKind::BA, 10, 0.4, 1)), Err(BaselineError::InvalidParams(_))));
    }

    #[test]
    fn ws_preserves_edge_count() {
        let g = generate(&spec(BaselineKind::WS, 200, 3.0, 2)).unwrap();
        assert_eq!(g.edge_count(), 200 * 3);
    }
}
