//! Structural evaluation of folded networks: power-law fitting, clustering,
//! assortativity, diameter, components, the friendship paradox, periodicity,
//! the MMD family and GEM.
//!
//! Directed networks are symmetrized for clustering, assortativity, diameter,
//! friendship paradox and every MMD statistic. Power-law fits use the degree
//! mode the caller picks (total by default).

use std::collections::{BTreeMap, VecDeque};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, BaselineKind, BaselineSpec};
use crate::graph::{fold, BipartiteGraph, FoldName, FoldSpec, GraphError};
use crate::network::{DegreeMode, Network};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("need at least 2 degrees >= k_min, found {n_tail}")]
    InsufficientTail { n_tail: usize },
    #[error("degree variance is zero")]
    DegenerateDegrees,
    #[error("no connected pairs")]
    NoConnectedPairs,
    #[error("series is constant")]
    DegenerateSeries,
    #[error("series needs at least {min} points, got {len}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("baseline graphs have zero clustering")]
    BaselineZeroClustering,
}

// ---------------------------------------------------------------------------
// Power law

pub const K_MIN: usize = 2;
/// Upper end of the exponent search. Tails with no finite MLE (for example
/// every degree equal) are reported at this bound.
pub const ALPHA_MAX: f64 = 5.0;
const ALPHA_MIN: f64 = 1.0 + 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub k_min: usize,
    pub d_k: f64,
    pub n_tail: usize,
}

impl PowerLawFit {
    pub fn is_valid(&self) -> bool {
        self.d_k < 0.1 && (2.0..=3.0).contains(&self.alpha)
    }
}

/// Hurwitz zeta ζ(s, q) for s > 1, q > 0, by Euler–Maclaurin summation.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    const DIRECT: usize = 9;
    // B_2j / (2j)!
    const B: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
    ];
    let mut sum: f64 = (0..DIRECT).map(|k| (q + k as f64).powf(-s)).sum();
    let a = q + DIRECT as f64;
    sum += a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    let mut term = s * a.powf(-s - 1.0);
    sum += B[0] * term;
    for (j, b) in B.iter().enumerate().skip(1) {
        let j = j as f64;
        term *= (s + 2.0 * j - 1.0) * (s + 2.0 * j) / (a * a);
        sum += b * term;
    }
    sum
}

/// Log-likelihood of a discrete power-law tail with `n` points whose log
/// sum is `sum_ln`.
pub fn power_law_log_likelihood(alpha: f64, k_min: usize, n: usize, sum_ln: f64) -> f64 {
    -(n as f64) * hurwitz_zeta(alpha, k_min as f64).ln() - alpha * sum_ln
}

fn tail(degrees: &[usize], k_min: usize) -> Vec<usize> {
    let mut t: Vec<usize> = degrees.iter().copied().filter(|&k| k >= k_min).collect();
    t.sort_unstable();
    t
}

/// Maximizes a unimodal function on `[lo, hi]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = (lo + hi) / 2.0;
    // The bounds themselves win when the optimum sits on them.
    [lo, mid, hi].into_iter().fold(mid, |best, x| if f(x) > f(best) { x } else { best })
}

/// Discrete power-law fit of the degrees at or above `k_min`.
///
/// The exponent is the exact discrete MLE; the closed-form continuous
/// approximation `1 + n / Σ ln(k / (k_min − ½))` only seeds the search
/// interval because it is biased at small `k_min`.
pub fn fit_power_law_with(degrees: &[usize], k_min: usize) -> Result<PowerLawFit, MetricError> {
    let t = tail(degrees, k_min);
    let n = t.len();
    if n < 2 {
        return Err(MetricError::InsufficientTail { n_tail: n });
    }
    let sum_ln: f64 = t.iter().map(|&k| (k as f64).ln()).sum();
    let shift = k_min as f64 - 0.5;
    let approx = 1.0 + n as f64 / t.iter().map(|&k| (k as f64 / shift).ln()).sum::<f64>();
    let ll = |a: f64| power_law_log_likelihood(a, k_min, n, sum_ln);
    // The likelihood is concave in α, so any bracket containing the optimum
    // works; widen around the approximation when it is finite.
    let (lo, hi) = if approx.is_finite() {
        ((approx - 1.0).max(ALPHA_MIN), (approx + 1.0).min(ALPHA_MAX))
    } else {
        (ALPHA_MIN, ALPHA_MAX)
    };
    let (lo, hi) = if lo < hi { (lo, hi) } else { (ALPHA_MIN, ALPHA_MAX) };
    let mut alpha = golden_max(ll, lo, hi, 1e-9);
    // Re-search the full range if the optimum hit an interior bracket edge.
    if (alpha - lo).abs() < 1e-6 && lo > ALPHA_MIN || (alpha - hi).abs() < 1e-6 && hi < ALPHA_MAX {
        alpha = golden_max(ll, ALPHA_MIN, ALPHA_MAX, 1e-9);
    }
    Ok(PowerLawFit { alpha, k_min, d_k: ks_against_model(&t, alpha, k_min), n_tail: n })
}

pub fn fit_power_law(degrees: &[usize]) -> Result<PowerLawFit, MetricError> {
    fit_power_law_with(degrees, K_MIN)
}

/// Sup distance between the empirical CDF of a sorted tail and the discrete
/// power-law CDF F(k) = 1 − ζ(α, k+1)/ζ(α, k_min).
fn ks_against_model(sorted_tail: &[usize], alpha: f64, k_min: usize) -> f64 {
    let n = sorted_tail.len() as f64;
    let z = hurwitz_zeta(alpha, k_min as f64);
    let max = *sorted_tail.last().expect("non-empty tail");
    let mut model_mass = 0.0;
    let mut idx = 0;
    let mut d: f64 = 0.0;
    for k in k_min..=max {
        model_mass += (k as f64).powf(-alpha);
        while idx < sorted_tail.len() && sorted_tail[idx] <= k {
            idx += 1;
        }
        let empirical = idx as f64 / n;
        d = d.max((empirical - model_mass / z).abs());
    }
    d
}

/// Two-sample KS distance between the degree tails of two graphs.
pub fn d_k_cross(a: &[usize], b: &[usize], k_min: usize) -> Result<f64, MetricError> {
    let (ta, tb) = (tail(a, k_min), tail(b, k_min));
    if ta.is_empty() || tb.is_empty() {
        return Err(MetricError::InsufficientTail { n_tail: ta.len().min(tb.len()) });
    }
    let max = *ta.last().unwrap().max(tb.last().unwrap());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    for k in k_min..=max {
        while i < ta.len() && ta[i] <= k {
            i += 1;
        }
        while j < tb.len() && tb[j] <= k {
            j += 1;
        }
        d = d.max((i as f64 / ta.len() as f64 - j as f64 / tb.len() as f64).abs());
    }
    Ok(d)
}

/// Fraction of fits with D_k < 0.1 and α ∈ [2, 3].
pub fn valid_metric(fits: &[PowerLawFit]) -> Result<f64, MetricError> {
    if fits.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(fits.iter().filter(|f| f.is_valid()).count() as f64 / fits.len() as f64)
}

// ---------------------------------------------------------------------------
// Local structure

fn undirected(net: &Network) -> Vec<Vec<u32>> {
    net.undirected_adjacency()
}

fn adjacent(adj: &[Vec<u32>], u: u32, v: u32) -> bool {
    adj[u as usize].binary_search(&v).is_ok()
}

fn count_common(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Local clustering per node; nodes of degree < 2 get 0.
pub fn local_clustering(net: &Network) -> Vec<f64> {
    let adj = undirected(net);
    (0..adj.len())
        .into_par_iter()
        .map(|u| {
            let nb = &adj[u];
            let d = nb.len();
            if d < 2 {
                return 0.0;
            }
            let links: usize = nb.iter().map(|&v| count_common(nb, &adj[v as usize])).sum::<usize>() / 2;
            2.0 * links as f64 / (d * (d - 1)) as f64
        })
        .collect()
}

pub fn avg_clustering(net: &Network) -> f64 {
    let c = local_clustering(net);
    if c.is_empty() {
        0.0
    } else {
        c.iter().sum::<f64>() / c.len() as f64
    }
}

/// Degree assortativity: Pearson correlation of endpoint degrees over both
/// orientations of every undirected edge.
pub fn assortativity(net: &Network) -> Result<f64, MetricError> {
    let adj = undirected(net);
    let deg: Vec<f64> = adj.iter().map(|a| a.len() as f64).collect();
    let (mut n, mut sx, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (u, list) in adj.iter().enumerate() {
        for &v in list {
            let (x, y) = (deg[u], deg[v as usize]);
            n += 1.0;
            sx += x;
            sxx += x * x;
            sxy += x * y;
        }
    }
    if n == 0.0 {
        return Err(MetricError::DegenerateDegrees);
    }
    // Symmetric orientation: both marginals are identical.
    let mean = sx / n;
    let var = sxx / n - mean * mean;
    if var <= 1e-12 * mean.max(1.0).powi(2) {
        return Err(MetricError::DegenerateDegrees);
    }
    Ok(((sxy / n - mean * mean) / var).clamp(-1.0, 1.0))
}

/// Share of nodes in the largest weakly connected component.
pub fn lcc_fraction(net: &Network) -> Result<f64, MetricError> {
    let n = net.node_count();
    if n == 0 {
        return Err(MetricError::EmptyInput);
    }
    let sizes = component_sizes(&undirected(net));
    Ok(*sizes.iter().max().unwrap() as f64 / n as f64)
}

fn component_sizes(adj: &[Vec<u32>]) -> Vec<usize> {
    let mut seen = vec![false; adj.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for s in 0..adj.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        queue.push_back(s as u32);
        let mut size = 0;
        while let Some(u) = queue.pop_front() {
            size += 1;
            for &v in &adj[u as usize] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

/// Share of degree ≥ 1 nodes whose neighbors have a strictly higher mean
/// degree than they do.
pub fn friendship_paradox_fraction(net: &Network) -> f64 {
    let adj = undirected(net);
    let mut eligible = 0usize;
    let mut paradox = 0usize;
    for list in &adj {
        let d = list.len();
        if d == 0 {
            continue;
        }
        eligible += 1;
        let neighbor_sum: usize = list.iter().map(|&v| adj[v as usize].len()).sum();
        if neighbor_sum > d * d {
            paradox += 1;
        }
    }
    if eligible == 0 {
        0.0
    } else {
        paradox as f64 / eligible as f64
    }
}

/// Per node: (degree, mean neighbor degree), for degree ≥ 1 nodes.
pub fn neighbor_degree_pairs(net: &Network) -> Vec<(u32, usize, f64)> {
    let adj = undirected(net);
    adj.iter()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(u, l)| {
            let s: usize = l.iter().map(|&v| adj[v as usize].len()).sum();
            (u as u32, l.len(), s as f64 / l.len() as f64)
        })
        .collect()
}

/// Empirical degree pmf `(k, P_k)` over k ≥ 1 with P_k > 0.
pub fn degree_pdf(degrees: &[usize]) -> Vec<(usize, f64)> {
    let mut counts = BTreeMap::new();
    for &k in degrees.iter().filter(|&&k| k >= 1) {
        *counts.entry(k).or_insert(0usize) += 1;
    }
    let n = degrees.len() as f64;
    counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect()
}

// ---------------------------------------------------------------------------
// Effective diameter

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiameterOptions {
    pub quantile: f64,
    /// Exact all-pairs BFS up to this many nodes; source sampling above.
    pub exact_cap: usize,
    pub sources: usize,
    pub seed: u64,
}

impl Default for DiameterOptions {
    fn default() -> Self {
        DiameterOptions { quantile: 0.9, exact_cap: 2000, sources: 256, seed: 0 }
    }
}

fn bfs_histogram(adj: &[Vec<u32>], s: usize, dist: &mut [u32], queue: &mut VecDeque<u32>, hist: &mut Vec<u64>) {
    dist.fill(u32::MAX);
    dist[s] = 0;
    queue.clear();
    queue.push_back(s as u32);
    while let Some(u) = queue.pop_front() {
        let du = dist[u as usize];
        for &v in &adj[u as usize] {
            if dist[v as usize] == u32::MAX {
                let d = du + 1;
                dist[v as usize] = d;
                if hist.len() <= d as usize {
                    hist.resize(d as usize + 1, 0);
                }
                hist[d as usize] += 1;
                queue.push_back(v);
            }
        }
    }
}

/// Counts of ordered connected pairs (source, target) by hop distance, over
/// the given sources. Index 0 is unused.
pub fn distance_histogram(net: &Network, sources: &[usize]) -> Vec<u64> {
    let adj = undirected(net);
    let n = adj.len();
    sources
        .par_iter()
        .fold(
            || (vec![0u32; n], VecDeque::new(), Vec::new()),
            |(mut dist, mut queue, mut hist), &s| {
                bfs_histogram(&adj, s, &mut dist, &mut queue, &mut hist);
                (dist, queue, hist)
            },
        )
        .map(|(_, _, h)| h)
        .reduce(Vec::new, |mut a, b| {
            if a.len() < b.len() {
                a.resize(b.len(), 0);
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        })
}

/// Linearly interpolated quantile of the distance multiset a histogram
/// describes (rank position q·(N−1) over the sorted distances).
pub fn histogram_quantile(hist: &[u64], q: f64) -> Result<f64, MetricError> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return Err(MetricError::NoConnectedPairs);
    }
    let value_at = |rank: u64| -> f64 {
        let mut cum = 0;
        for (d, &c) in hist.iter().enumerate() {
            cum += c;
            if cum > rank {
                return d as f64;
            }
        }
        (hist.len() - 1) as f64
    };
    let pos = q * (total - 1) as f64;
    let lo = pos.floor();
    let frac = pos - lo;
    let a = value_at(lo as u64);
    let b = if frac > 0.0 { value_at(lo as u64 + 1) } else { a };
    Ok(a + frac * (b - a))
}

pub fn effective_diameter_with(net: &Network, opts: &DiameterOptions) -> Result<f64, MetricError> {
    let n = net.node_count();
    let sources: Vec<usize> = if n <= opts.exact_cap || opts.sources >= n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut s = index::sample(&mut rng, n, opts.sources).into_vec();
        s.sort_unstable();
        s
    };
    histogram_quantile(&distance_histogram(net, &sources), opts.quantile)
}

pub fn effective_diameter(net: &Network) -> Result<f64, MetricError> {
    effective_diameter_with(net, &DiameterOptions::default())
}

// ---------------------------------------------------------------------------
// Periodicity

/// Power of the dominant non-zero frequency over the mean power of the
/// remaining non-zero frequencies, in dB.
pub fn snr_periodicity(series: &[f64]) -> Result<f64, MetricError> {
    let n = series.len();
    if n < 8 {
        return Err(MetricError::SeriesTooShort { len: n, min: 8 });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    if series.iter().all(|x| (x - mean).abs() < 1e-12 * mean.abs().max(1.0)) {
        return Err(MetricError::DegenerateSeries);
    }
    let power: Vec<f64> = (1..=n / 2)
        .map(|f| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, x) in series.iter().enumerate() {
                let w = -2.0 * std::f64::consts::PI * (f * t) as f64 / n as f64;
                re += x * w.cos();
                im += x * w.sin();
            }
            re * re + im * im
        })
        .collect();
    let (dom, &p) = power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least 4 frequencies");
    let rest: Vec<f64> = power.iter().enumerate().filter(|(i, _)| *i != dom).map(|(_, v)| *v).collect();
    let noise = rest.iter().sum::<f64>() / rest.len() as f64;
    if noise <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (p / noise).log10())
}

// ---------------------------------------------------------------------------
// Graphlet orbits

/// Orbits of connected graphlets on 2 to 4 nodes, in the usual numbering.
pub const ORBITS: usize = 15;

/// Orbit of each member of a connected induced subgraph on `nodes`.
fn classify(adj: &[Vec<u32>], nodes: &[u32], out: &mut [u64]) {
    let k = nodes.len();
    let mut deg = [0usize; 4];
    let mut m = 0;
    for i in 0..k {
        for j in i + 1..k {
            if adjacent(adj, nodes[i], nodes[j]) {
                deg[i] += 1;
                deg[j] += 1;
                m += 1;
            }
        }
    }
    let max = deg[..k].iter().copied().max().unwrap_or(0);
    for i in 0..k {
        let d = deg[i];
        let orbit = match (k, m) {
            (2, _) => 0,
            (3, 2) => if d == 1 { 1 } else { 2 },
            (3, _) => 3,
            (4, 3) if max == 3 => if d == 3 { 7 } else { 6 },
            (4, 3) => if d == 1 { 4 } else { 5 },
            (4, 4) if max == 3 => match d {
                1 => 9,
                2 => 10,
                _ => 11,
            },
            (4, 4) => 8,
            (4, 5) => if d == 2 { 12 } else { 13 },
            _ => 14,
        };
        out[nodes[i] as usize * ORBITS + orbit] += 1;
    }
}

/// Per-node orbit counts (row-major, `ORBITS` per node) by enumerating every
/// connected induced subgraph on 2 to 4 nodes exactly once.
pub fn orbit_counts(net: &Network) -> Vec<[u64; ORBITS]> {
    let adj = undirected(net);
    let n = adj.len();
    let mut flat = vec![0u64; n * ORBITS];
    let mut sub = Vec::with_capacity(4);
    for v in 0..n as u32 {
        sub.clear();
        sub.push(v);
        let ext: Vec<u32> = adj[v as usize].iter().copied().filter(|&u| u > v).collect();
        extend(&adj, v, &mut sub, ext, &mut flat);
    }
    flat.chunks(ORBITS).map(|c| c.try_into().expect("chunk size")).collect()
}

// Enumeration of connected subgraphs rooted at their smallest node: each
// subgraph is reached once, extending only through exclusive neighbors.
fn extend(adj: &[Vec<u32>], root: u32, sub: &mut Vec<u32>, mut ext: Vec<u32>, out: &mut [u64]) {
    while let Some(w) = ext.pop() {
        sub.push(w);
        classify(adj, sub, out);
        if sub.len() < 4 {
            let mut next = ext.clone();
            for &u in &adj[w as usize] {
                if u > root
                    && !sub.contains(&u)
                    && !next.contains(&u)
                    && !sub[..sub.len() - 1].iter().any(|&s| adjacent(adj, s, u))
                {
                    next.push(u);
                }
            }
            extend(adj, root, sub, next, out);
        }
        sub.pop();
    }
}

// ---------------------------------------------------------------------------
// MMD

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Degree,
    Clustering,
    Spectrum,
    Orbit,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Statistic::Degree, Statistic::Clustering, Statistic::Spectrum, Statistic::Orbit];

    /// Gaussian kernel bandwidth.
    pub fn sigma(self) -> f64 {
        match self {
            Statistic::Degree => 1.0,
            Statistic::Clustering => 0.1,
            Statistic::Spectrum => 1.0,
            Statistic::Orbit => 30.0,
        }
    }
}

pub const CLUSTERING_BINS: usize = 100;
pub const SPECTRUM_BINS: usize = 200;
/// Larger graphs have their spectrum taken on a seeded connected sample of
/// this many nodes.
pub const SPECTRUM_CAP: usize = 2000;

/// Per-graph inputs to the four MMD statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptors {
    /// Normalized degree histogram, bin k = degree k.
    pub degree: Vec<f64>,
    pub clustering: Vec<f64>,
    pub spectrum: Vec<f64>,
    /// Mean count per node of each orbit.
    pub orbit: Vec<f64>,
}

fn normalized(mut h: Vec<f64>) -> Vec<f64> {
    let s: f64 = h.iter().sum();
    if s > 0.0 {
        h.iter_mut().for_each(|x| *x /= s);
    }
    h
}

fn histogram(values: impl IntoIterator<Item = f64>, bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let w = (hi - lo) / bins as f64;
    for v in values {
        let b = (((v - lo) / w).floor().max(0.0) as usize).min(bins - 1);
        h[b] += 1.0;
    }
    normalized(h)
}

/// Eigenvalues of the normalized Laplacian of the undirected view.
pub fn laplacian_spectrum(net: &Network) -> Vec<f64> {
    let adj = undirected(net);
    let n = adj.len();
    if n == 0 {
        return Vec::new();
    }
    let inv_sqrt: Vec<f64> = adj.iter().map(|l| if l.is_empty() { 0.0 } else { 1.0 / (l.len() as f64).sqrt() }).collect();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (u, list) in adj.iter().enumerate() {
        if !list.is_empty() {
            m[(u, u)] = 1.0;
        }
        for &v in list {
            m[(u, v as usize)] = -inv_sqrt[u] * inv_sqrt[v as usize];
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Induced subgraph on up to `cap` nodes gathered breadth-first from seeded
/// random starts.
pub fn snowball_sample(net: &Network, cap: usize, seed: u64) -> Network {
    let adj = undirected(net);
    let n = adj.len();
    if n <= cap {
        return net.symmetrized();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut local = vec![u32::MAX; n];
    let mut order = Vec::with_capacity(cap);
    let mut queue = VecDeque::new();
    while order.len() < cap {
        let s = rng.gen_range(0..n);
        if local[s] != u32::MAX {
            continue;
        }
        local[s] = order.len() as u32;
        order.push(s);
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if order.len() >= cap {
                    break;
                }
                if local[v as usize] == u32::MAX {
                    local[v as usize] = order.len() as u32;
                    order.push(v as usize);
                    queue.push_back(v as usize);
                }
            }
        }
    }
    let edges = order.iter().flat_map(|&u| {
        let local = &local;
        adj[u].iter().filter(move |&&v| local[v as usize] != u32::MAX).map(move |&v| (local[u], local[v as usize]))
    });
    Network::new(cap, false, edges.collect::<Vec<_>>())
}

impl Descriptors {
    pub fn of(net: &Network) -> Self {
        let net = net.symmetrized();
        let n = net.node_count();
        let degrees = net.degree_sequence(DegreeMode::Total);
        let mut degree = vec![0.0; degrees.iter().copied().max().unwrap_or(0) + 1];
        for &d in &degrees {
            degree[d] += 1.0;
        }
        let clustering = histogram(local_clustering(&net), CLUSTERING_BINS, 0.0, 1.0);
        let spectral = if n > SPECTRUM_CAP { snowball_sample(&net, SPECTRUM_CAP, 0) } else { net.clone() };
        let spectrum = histogram(laplacian_spectrum(&spectral), SPECTRUM_BINS, 0.0, 2.0 + 1e-9);
        let counts = orbit_counts(&net);
        let mut orbit = vec![0.0; ORBITS];
        for c in &counts {
            for (o, x) in orbit.iter_mut().zip(c) {
                *o += *x as f64;
            }
        }
        if n > 0 {
            orbit.iter_mut().for_each(|o| *o /= n as f64);
        }
        Descriptors { degree: normalized(degree), clustering, spectrum, orbit }
    }

    fn get(&self, s: Statistic) -> &[f64] {
        match s {
            Statistic::Degree => &self.degree,
            Statistic::Clustering => &self.clustering,
            Statistic::Spectrum => &self.spectrum,
            Statistic::Orbit => &self.orbit,
        }
    }
}

/// One-dimensional earth mover's distance between two histograms on the same
/// grid, the shorter one padded with empty bins.
pub fn emd_1d(a: &[f64], b: &[f64], bin_width: f64) -> f64 {
    let len = a.len().max(b.len());
    let (mut ca, mut cb, mut total) = (0.0, 0.0, 0.0);
    for i in 0..len {
        ca += a.get(i).copied().unwrap_or(0.0);
        cb += b.get(i).copied().unwrap_or(0.0);
        total += (ca - cb).abs();
    }
    total * bin_width
}

fn distance(s: Statistic, a: &[f64], b: &[f64]) -> f64 {
    match s {
        Statistic::Degree => emd_1d(a, b, 1.0),
        Statistic::Clustering => emd_1d(a, b, 1.0 / CLUSTERING_BINS as f64),
        Statistic::Spectrum => emd_1d(a, b, 2.0 / SPECTRUM_BINS as f64),
        Statistic::Orbit => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
    }
}

pub fn kernel(s: Statistic, a: &[f64], b: &[f64]) -> f64 {
    let d = distance(s, a, b);
    (-d * d / (2.0 * s.sigma() * s.sigma())).exp()
}

/// Squared MMD between two descriptor sets (biased estimator, clamped at 0).
pub fn mmd_descriptors(a: &[Descriptors], b: &[Descriptors], s: Statistic) -> f64 {
    let mean_k = |x: &[Descriptors], y: &[Descriptors]| -> f64 {
        let mut sum = 0.0;
        for p in x {
            for q in y {
                sum += kernel(s, p.get(s), q.get(s));
            }
        }
        sum / (x.len() * y.len()) as f64
    };
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    (mean_k(a, a) + mean_k(b, b) - 2.0 * mean_k(a, b)).max(0.0)
}

pub fn descriptors(nets: &[Network]) -> Vec<Descriptors> {
    nets.par_iter().map(Descriptors::of).collect()
}

pub fn mmd(a: &[Network], b: &[Network], s: Statistic) -> f64 {
    mmd_descriptors(&descriptors(a), &descriptors(b), s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdReport {
    pub mmd_degree: f64,
    pub mmd_clustering: f64,
    pub mmd_spectrum: f64,
    pub mmd_orbit: f64,
    pub valid_fraction: f64,
    pub gem: f64,
}

pub const GEM_FORMULA: &str =
    "GEM = mean(s(MMD.D), s(MMD.C), s(MMD.S), s(MMD.O), Valid) with s(m) = 1 - 1/(1 + e^(-m))";

/// σ̄(m) = 1 − 1/(1 + e^{−m}); 0.5 at m = 0, falling as m grows.
pub fn gem_transform(m: f64) -> f64 {
    1.0 - 1.0 / (1.0 + (-m).exp())
}

pub fn gem(mmd_degree: f64, mmd_clustering: f64, mmd_spectrum: f64, mmd_orbit: f64, valid_fraction: f64) -> f64 {
    let mapped: f64 = [mmd_degree, mmd_clustering, mmd_spectrum, mmd_orbit].into_iter().map(gem_transform).sum();
    (mapped + valid_fraction) / 5.0
}

/// The MMD family of `generated` against `reference`, with `valid_fraction`
/// taken over the generated set.
pub fn mmd_report(generated: &[Network], reference: &[Network]) -> MmdReport {
    let (a, b) = (descriptors(generated), descriptors(reference));
    let fits: Vec<PowerLawFit> =
        generated.iter().filter_map(|g| fit_power_law(&g.degree_sequence(DegreeMode::Total)).ok()).collect();
    if fits.len() < generated.len() {
        log::warn!("{} graph(s) without a power-law tail excluded from Valid", generated.len() - fits.len());
    }
    let valid_fraction = valid_metric(&fits).unwrap_or(0.0);
    let [d, c, s, o] = Statistic::ALL.map(|st| mmd_descriptors(&a, &b, st));
    MmdReport {
        mmd_degree: d,
        mmd_clustering: c,
        mmd_spectrum: s,
        mmd_orbit: o,
        valid_fraction,
        gem: gem(d, c, s, o, valid_fraction),
    }
}

// ---------------------------------------------------------------------------
// Baseline comparison

/// c̄(net) over the mean c̄ of `samples` seeded baselines matched on node
/// count and average degree.
pub fn cc_ratio(net: &Network, kind: BaselineKind, samples: usize, seed: u64) -> Result<f64, MetricError> {
    let c = avg_clustering(net);
    let nets = matched_baselines(net, kind, samples, seed).map_err(|_| MetricError::BaselineZeroClustering)?;
    let mean = nets.iter().map(avg_clustering).sum::<f64>() / nets.len().max(1) as f64;
    if mean <= 0.0 {
        return Err(MetricError::BaselineZeroClustering);
    }
    Ok(c / mean)
}

/// Average undirected degree.
pub fn mean_degree(net: &Network) -> f64 {
    let sym = net.symmetrized();
    if sym.node_count() == 0 {
        0.0
    } else {
        2.0 * sym.edge_count() as f64 / sym.node_count() as f64
    }
}

pub fn matched_baselines(
    net: &Network,
    kind: BaselineKind,
    samples: usize,
    seed: u64,
) -> Result<Vec<Network>, baselines::BaselineError> {
    let kbar = mean_degree(net);
    (0..samples as u64)
        .map(|i| {
            baselines::generate(&BaselineSpec {
                kind,
                n: net.node_count(),
                kbar,
                p_rewire: baselines::DEFAULT_P_REWIRE,
                seed: seed.wrapping_add(i),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureSummary {
    pub node_count: usize,
    pub edge_count: usize,
    pub avg_clustering: f64,
    /// Absent when degree variance is zero.
    pub assortativity: Option<f64>,
    /// Absent when no pair is connected.
    pub effective_diameter: Option<f64>,
    pub lcc_fraction: f64,
}

pub fn structure_summary(net: &Network, opts: &DiameterOptions) -> StructureSummary {
    StructureSummary {
        node_count: net.node_count(),
        edge_count: net.edge_count(),
        avg_clustering: avg_clustering(net),
        assortativity: assortativity(net).ok(),
        effective_diameter: effective_diameter_with(net, opts).ok(),
        lcc_fraction: lcc_fraction(net).unwrap_or(0.0),
    }
}

/// Evaluation of one folded network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: FoldName,
    pub directed: bool,
    pub degree_mode: DegreeMode,
    pub structure: StructureSummary,
    pub power_law: Option<PowerLawFit>,
    pub valid: bool,
    pub friendship_paradox: f64,
    /// c̄ ratio to matched ER / BA graphs; absent when the baselines have no
    /// triangles.
    pub cc_ratio_er: Option<f64>,
    pub cc_ratio_ba: Option<f64>,
    /// Against the reference set, when one is given.
    pub mmd: Option<MmdReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub gem_formula: String,
    pub folds: Vec<FoldReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub degree_mode: DegreeMode,
    pub diameter: DiameterOptions,
    pub baseline_samples: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { degree_mode: DegreeMode::Total, diameter: DiameterOptions::default(), baseline_samples: 5, seed: 0 }
    }
}

pub fn evaluate_network(fold: FoldName, net: &Network, reference: Option<&[Network]>, opts: &EvalOptions) -> FoldReport {
    let power_law = fit_power_law(&net.degree_sequence(opts.degree_mode)).ok();
    FoldReport {
        fold,
        directed: net.is_directed(),
        degree_mode: opts.degree_mode,
        structure: structure_summary(net, &opts.diameter),
        valid: power_law.is_some_and(|f| f.is_valid()),
        power_law,
        friendship_paradox: friendship_paradox_fraction(net),
        cc_ratio_er: cc_ratio(net, BaselineKind::ER, opts.baseline_samples, opts.seed).ok(),
        cc_ratio_ba: cc_ratio(net, BaselineKind::BA, opts.baseline_samples, opts.seed).ok(),
        mmd: reference.map(|r| mmd_report(std::slice::from_ref(net), r)),
    }
}

/// The graph as it stood at the end of round `r`.
pub fn graph_until(graph: &BipartiteGraph, r: u32) -> Result<BipartiteGraph, GraphError> {
    let mut g = BipartiteGraph::new(graph.schema().clone());
    for a in graph.actors().iter().take_while(|a| a.created_round <= r) {
        g.add_actor(a.attrs.clone(), a.created_round, a.core);
    }
    for it in graph.items().iter().take_while(|i| i.created_round <= r) {
        g.add_item(it.attrs.clone(), it.creator, it.created_round)?;
    }
    for e in graph.edges().iter().filter(|e| e.round <= r) {
        g.add_edge(e.actor, e.item, e.kind, e.round)?;
    }
    Ok(g)
}

/// D_e of a fold after every round.
pub fn diameter_over_rounds(graph: &BipartiteGraph, name: FoldName, opts: &DiameterOptions) -> Result<Vec<(u32, Option<f64>)>, GraphError> {
    let last = graph.edges().last().map_or(0, |e| e.round).max(graph.items().last().map_or(0, |i| i.created_round));
    let spec = FoldSpec::builtin(name);
    (0..=last)
        .map(|r| {
            let folded = fold(&graph_until(graph, r)?, &spec)?;
            Ok((r, effective_diameter_with(&folded.network, opts).ok()))
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Evaluates each fold of `graph` and writes `metrics.json` plus the plot
/// CSVs into `dir`.
pub fn evaluate_graph(
    graph: &BipartiteGraph,
    folds: &[FoldName],
    reference: Option<&[Network]>,
    opts: &EvalOptions,
    dir: &Path,
) -> Result<MetricReport, ReportError> {
    let io = |path: PathBuf| move |source| ReportError::Io { path, source };
    std::fs::create_dir_all(dir).map_err(io(dir.into()))?;
    let mut report = MetricReport { gem_formula: GEM_FORMULA.to_string(), folds: Vec::new() };
    let mut pdf = String::from("fold,k,P_k\n");
    let mut scatter = String::from("fold,node,degree,mean_neighbor_degree\n");
    let mut diam = String::from("fold,round,D_e\n");
    for &name in folds {
        let folded = fold(graph, &FoldSpec::builtin(name))?;
        let net = &folded.network;
        report.folds.push(evaluate_network(name, net, reference, opts));
        for (k, p) in degree_pdf(&net.degree_sequence(opts.degree_mode)) {
            pdf.push_str(&format!("{name},{k},{p}\n"));
        }
        for (u, d, m) in neighbor_degree_pairs(net) {
            scatter.push_str(&format!("{name},{},{d},{m}\n", folded.nodes[u as usize]));
        }
        for (r, d) in diameter_over_rounds(graph, name, &opts.diameter)? {
            diam.push_str(&format!("{name},{r},{}\n", d.map_or(String::new(), |d| d.to_string())));
        }
    }
    let files = [
        ("metrics.json", serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
        ("degree_pdf_loglog.csv", pdf),
        ("neighbor_degree_scatter.csv", scatter),
        ("diameter_over_rounds.csv", diam),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).map_err(io(path.clone()))?;
        f.write_all(body.as_bytes()).map_err(io(path.clone()))?;
    }
    Ok(report)
}
