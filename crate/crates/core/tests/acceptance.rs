//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use agentgraph::agent::{ActivationPolicy, HeuristicConfig, LlmPolicyConfig};
use agentgraph::baselines::{self, BaselineKind, BaselineSpec};
use agentgraph::engine::{self, measure_speedup, run_simulation, write_run, PolicyConfig, SimConfig, SimOutcome};
use agentgraph::graph::{fold, ActionKind, ActorId, Attrs, BipartiteGraph, CoreLabel, FoldName, FoldSpec, GraphSchema, ItemId, NodeId};
use agentgraph::llm::{self, BackendConfig};
use agentgraph::metrics::{self, Statistic};
use agentgraph::network::{DegreeMode, Network};
use agentgraph::scenario::{ProfilesPerRound, ScenarioName, SeedSource};
use agentgraph::srag::{recall, HashingEncoder, VectorIndex};
use agentgraph::store;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// 1. recall exactness

fn brute_top(index: &VectorIndex, q: &[f32], n_r: usize) -> Vec<ItemId> {
    let qn = q.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    let mut all: Vec<(f64, ItemId)> = (0..index.len())
        .map(|row| {
            let v = index.vector(row);
            let dot: f64 = v.iter().zip(q).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
            let vn = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
            let denom = vn * qn;
            (if denom == 0.0 { 0.0 } else { dot / denom }, index.ids()[row])
        })
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(n_r).map(|(_, id)| id).collect()
}

fn criterion_1() -> Check {
    const WORDS: [&str; 12] =
        ["graph", "agent", "retrieval", "music", "movie", "paper", "network", "social", "film", "vision", "health", "sport"];
    let enc = HashingEncoder::new(64);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..200 {
        let n = rng.gen_range(1..=500);
        let mut index = VectorIndex::new(64);
        for i in 0..n {
            let v = if trial % 2 == 0 {
                let len = rng.gen_range(1..4);
                let text: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
                enc.encode_text(&text.join(" "))
            } else {
                // integer grid: many exact ties
                (0..64).map(|_| rng.gen_range(-1i32..=1) as f32).collect()
            };
            index.push(ItemId(i as u32), 0, &v);
        }
        let q: Vec<f32> = if trial % 2 == 0 {
            enc.encode_text(WORDS.choose(&mut rng).unwrap())
        } else {
            (0..64).map(|_| rng.gen_range(-1i32..=1) as f32).collect()
        };
        let n_r = rng.gen_range(1..=30);
        let got: Vec<ItemId> = recall(&index, &q, n_r).into_iter().map(|s| s.item).collect();
        let want = brute_top(&index, &q, n_r);
        ensure(got == want, || format!("trial {trial}: recall {got:?} != brute force {want:?}"))?;
    }
    Ok("200/200 corpora match brute-force top-N_r".into())
}

// ---------------------------------------------------------------------------
// 2. fold oracle

fn random_bipartite(rng: &mut ChaCha8Rng) -> BipartiteGraph {
    let mut g = BipartiteGraph::new(GraphSchema::permissive());
    let actors = rng.gen_range(1..=10);
    let items = rng.gen_range(1..=20 - actors);
    for _ in 0..actors {
        g.add_actor(Attrs::new(), 0, CoreLabel::Regular);
    }
    for _ in 0..items {
        g.add_item(Attrs::new(), None, 0).unwrap();
    }
    let mut edges: Vec<(u32, ActorId, ItemId, ActionKind)> = (0..rng.gen_range(0..=40))
        .map(|_| {
            (
                rng.gen_range(0..3),
                ActorId(rng.gen_range(0..actors) as u32),
                ItemId(rng.gen_range(0..items) as u32),
                ActionKind::ALL[rng.gen_range(0..ActionKind::ALL.len())],
            )
        })
        .collect();
    edges.sort_by_key(|e| e.0);
    for (r, a, i, k) in edges {
        g.add_edge(a, i, k, r).unwrap();
    }
    g
}

fn has(g: &BipartiteGraph, a: ActorId, i: ItemId, k: ActionKind) -> bool {
    g.edges().iter().any(|e| e.actor == a && e.item == i && e.kind == k)
}

fn paper_cites(g: &BipartiteGraph, p: ItemId, q: ItemId) -> bool {
    p != q
        && g.edges().iter().any(|e1| {
            e1.item == p
                && e1.kind == ActionKind::Creation
                && g.edges().iter().any(|e2| e2.actor == e1.actor && e2.round == e1.round && e2.item == q && e2.kind == ActionKind::Citation)
        })
}

fn actor_to_creator(g: &BipartiteGraph, a: ActorId, b: ActorId, via: &[ActionKind]) -> bool {
    a != b && (0..g.item_count() as u32).map(ItemId).any(|i| via.iter().any(|k| has(g, a, i, *k)) && has(g, b, i, ActionKind::Tweet))
}

/// Pairs by direct quantification over nodes and edges.
fn oracle(g: &BipartiteGraph, name: FoldName) -> BTreeSet<(NodeId, NodeId)> {
    let items: Vec<ItemId> = (0..g.item_count() as u32).map(ItemId).collect();
    let actors: Vec<ActorId> = (0..g.actor_count() as u32).map(ActorId).collect();
    let mut out = BTreeSet::new();
    let undirected = |u: NodeId, v: NodeId| if u < v { (u, v) } else { (v, u) };
    use ActionKind::*;
    match name {
        FoldName::PaperCitation | FoldName::BibCoupling | FoldName::CoCitation => {
            for &p in &items {
                for &q in &items {
                    let ok = match name {
                        FoldName::PaperCitation => paper_cites(g, p, q),
                        FoldName::BibCoupling => p != q && items.iter().any(|&r| paper_cites(g, p, r) && paper_cites(g, q, r)),
                        _ => p != q && items.iter().any(|&s| paper_cites(g, s, p) && paper_cites(g, s, q)),
                    };
                    if ok {
                        let (u, v) = (NodeId::Item(p), NodeId::Item(q));
                        out.insert(if name == FoldName::PaperCitation { (u, v) } else { undirected(u, v) });
                    }
                }
            }
        }
        FoldName::MovieRating => {
            for &a in &actors {
                for &i in &items {
                    if has(g, a, i, Rating) {
                        out.insert((NodeId::Actor(a), NodeId::Item(i)));
                    }
                }
            }
        }
        _ => {
            for &a in &actors {
                for &b in &actors {
                    let ok = match name {
                        FoldName::AuthorCitation => a != b && items.iter().any(|&i| has(g, a, i, Citation) && has(g, b, i, Creation)),
                        FoldName::CoAuthorship => a != b && items.iter().any(|&i| has(g, a, i, Creation) && has(g, b, i, Creation)),
                        FoldName::UserProjection => a != b && items.iter().any(|&i| has(g, a, i, Rating) && has(g, b, i, Rating)),
                        FoldName::Action => actor_to_creator(g, a, b, &[Retweet, Reply, Follow]),
                        FoldName::Follow => actor_to_creator(g, a, b, &[Follow]),
                        FoldName::Friend => actor_to_creator(g, a, b, &[Follow]) && actor_to_creator(g, b, a, &[Follow]),
                        _ => unreachable!(),
                    };
                    if ok {
                        let (u, v) = (NodeId::Actor(a), NodeId::Actor(b));
                        let directed = matches!(name, FoldName::AuthorCitation | FoldName::Action | FoldName::Follow);
                        out.insert(if directed { (u, v) } else { undirected(u, v) });
                    }
                }
            }
        }
    }
    out
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..100 {
        let g = random_bipartite(&mut rng);
        for name in FoldName::ALL {
            let folded = fold(&g, &FoldSpec::builtin(name)).map_err(|e| e.to_string())?;
            let got: BTreeSet<(NodeId, NodeId)> = folded
                .node_pairs()
                .map(|(u, v)| if folded.is_directed() || u < v { (u, v) } else { (v, u) })
                .collect();
            let want = oracle(&g, name);
            ensure(got == want, || format!("trial {trial} {name}: fold {got:?} != oracle {want:?}"))?;
            let nodes: BTreeSet<NodeId> = want.iter().flat_map(|&(u, v)| [u, v]).collect();
            ensure(folded.nodes.iter().copied().collect::<BTreeSet<_>>() == nodes, || {
                format!("trial {trial} {name}: node set differs")
            })?;
        }
    }
    Ok("10 folds x 100 instances equal brute-force enumeration".into())
}

// ---------------------------------------------------------------------------
// 3. power-law fitter

/// Hurwitz zeta by direct summation plus an integral tail.
fn zeta_oracle(s: f64, q: usize) -> f64 {
    let m = 2000usize;
    let direct: f64 = (q..m).map(|k| (k as f64).powf(-s)).sum();
    let m = m as f64;
    direct + m.powf(1.0 - s) / (s - 1.0) + 0.5 * m.powf(-s) + s * m.powf(-s - 1.0) / 12.0
}

fn sample_power_law(alpha: f64, k_min: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let z = zeta_oracle(alpha, k_min);
    let table_max = 200_000;
    let mut cdf = Vec::with_capacity(table_max);
    let mut acc = 0.0;
    for k in k_min..table_max {
        acc += (k as f64).powf(-alpha) / z;
        cdf.push(acc);
    }
    let last = *cdf.last().unwrap();
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            if u <= last {
                k_min + cdf.partition_point(|&c| c < u)
            } else {
                // far tail: continuous approximation
                ((k_min as f64 - 0.5) * (1.0 - u).powf(-1.0 / (alpha - 1.0)) + 0.5).floor() as usize
            }
        })
        .collect()
}

fn grid_argmax(sample: &[usize], k_min: usize) -> f64 {
    let tail: Vec<usize> = sample.iter().copied().filter(|&k| k >= k_min).collect();
    let n = tail.len() as f64;
    let s: f64 = tail.iter().map(|&k| (k as f64).ln()).sum();
    let ll = |a: f64| -n * zeta_oracle(a, k_min).ln() - a * s;
    let best = |lo: f64, hi: f64, step: f64| {
        let steps = ((hi - lo) / step).round() as usize;
        (0..=steps).map(|i| lo + i as f64 * step).max_by(|a, b| ll(*a).total_cmp(&ll(*b))).unwrap()
    };
    let coarse = best(1.5, 3.5, 0.01);
    best(coarse - 0.01, coarse + 0.01, 0.0005)
}

fn criterion_3() -> Check {
    let mut worst = Vec::new();
    for (ai, alpha) in [2.1, 2.5, 2.9].into_iter().enumerate() {
        let mut ok = 0;
        let mut max_grid_gap: f64 = 0.0;
        for trial in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * ai as u64 + trial);
            let sample = sample_power_law(alpha, 2, 100_000, &mut rng);
            let fit = metrics::fit_power_law(&sample).map_err(|e| e.to_string())?;
            if (fit.alpha - alpha).abs() <= 0.05 && fit.d_k < 0.05 {
                ok += 1;
            }
            let grid = grid_argmax(&sample, 2);
            max_grid_gap = max_grid_gap.max((grid - fit.alpha).abs());
        }
        ensure(ok >= 19, || format!("alpha {alpha}: only {ok}/20 trials within tolerance"))?;
        ensure(max_grid_gap <= 0.01, || format!("alpha {alpha}: grid oracle differs by {max_grid_gap:.4}"))?;
        worst.push(format!("a={alpha}: {ok}/20, grid gap {max_grid_gap:.4}"));
    }
    Ok(worst.join("; "))
}

// ---------------------------------------------------------------------------
// 4. BA validity

fn criterion_4() -> Check {
    let fits: Vec<metrics::PowerLawFit> = (0..20)
        .map(|seed| {
            let g = baselines::generate(&BaselineSpec { kind: BaselineKind::BA, n: 2000, kbar: 4.0, p_rewire: 0.1, seed }).unwrap();
            metrics::fit_power_law(&g.degree_sequence(DegreeMode::Total)).unwrap()
        })
        .collect();
    let valid = metrics::valid_metric(&fits).unwrap();
    let mean_alpha = fits.iter().map(|f| f.alpha).sum::<f64>() / 20.0;
    ensure(valid >= 0.9, || format!("Valid = {valid} (mean alpha {mean_alpha:.3})"))?;
    Ok(format!("Valid = {valid}, mean alpha {mean_alpha:.3}"))
}

// ---------------------------------------------------------------------------
// 5, 6, 8, 10. heuristic SoC runs

fn soc_config(n_r: usize, ports: usize) -> SimConfig {
    let mut c = SimConfig::new(ScenarioName::SoC);
    c.seed = SeedSource::Synthetic { seed: 5, items: 500, actors: 500, edges: 500 };
    c.rounds = Some(5);
    c.rng_seed = 2024;
    c.activation = Some(ActivationPolicy::CoreRegular { hub_rate: 0.2, p_core: 0.8, p_reg: 0.2 });
    c.srag.n_r = n_r;
    c.srag.n_f = Some(3);
    c.srag.hub_rate = Some(0.2);
    c.ports = ports;
    c.policy = PolicyConfig::Heuristic { params: HeuristicConfig::default() };
    c
}

fn folded_network(out: &SimOutcome, name: FoldName) -> Network {
    fold(&out.graph, &FoldSpec::builtin(name)).unwrap().network
}

fn criterion_5(out: &SimOutcome) -> Check {
    let follow = folded_network(out, FoldName::Follow);
    let c = metrics::avg_clustering(&follow);
    let ratio = metrics::cc_ratio(&follow, BaselineKind::ER, 5, 55).map_err(|e| e.to_string())?;
    ensure(ratio >= 20.0, || format!("Follow c = {c:.4}, ratio to ER {ratio:.2} < 20"))?;
    Ok(format!(
        "Follow |V|={} |E|={} c={c:.4}, ratio to ER {ratio:.1}",
        follow.node_count(),
        follow.edge_count()
    ))
}

fn criterion_6(serial: &SimOutcome) -> Check {
    let parallel = run_simulation(&soc_config(10, 8)).map_err(|e| e.to_string())?;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_run(a.path(), serial).map_err(|e| e.to_string())?;
    write_run(b.path(), &parallel).map_err(|e| e.to_string())?;
    for f in [store::NODES_FILE, store::EDGES_FILE] {
        let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        ensure(x == y, || format!("{f} differs between P=1 and P=8"))?;
    }
    Ok(format!("nodes.jsonl and edges.tsv identical at P=1 and P=8 ({} edges)", serial.graph.edge_count()))
}

fn criterion_7() -> Check {
    let mut c = SimConfig::new(ScenarioName::SoC);
    c.seed = SeedSource::Synthetic { seed: 7, items: 80, actors: 40, edges: 80 };
    c.rounds = Some(1);
    c.profiles_per_round = Some(ProfilesPerRound::Fixed(0));
    c.activation = Some(ActivationPolicy::All);
    c.injected_latency_ms = 50;
    let rows = measure_speedup(&c, &[1, 24]).map_err(|e| e.to_string())?;
    let p24 = rows.iter().find(|r| r.ports == 24).unwrap();
    let p1 = rows.iter().find(|r| r.ports == 1).unwrap();
    ensure(p24.interactions == 40, || format!("{} interactions, expected 40", p24.interactions))?;
    ensure(p24.reduction_pct >= 88.0, || format!("reduction {:.1}% < 88%", p24.reduction_pct))?;
    Ok(format!(
        "{:.2} ms -> {:.2} ms per interaction, reduction {:.1}%",
        p1.ms_per_interaction, p24.ms_per_interaction, p24.reduction_pct
    ))
}

fn criterion_8(runs: &[(usize, SimOutcome)]) -> Check {
    let sizes: Vec<(usize, usize)> = runs.iter().map(|(n_r, o)| (*n_r, folded_network(o, FoldName::Action).edge_count())).collect();
    ensure(sizes.windows(2).all(|w| w[0].1 <= w[1].1), || format!("Action |E| by n_r: {sizes:?}"))?;
    Ok(format!("Action |E| by n_r: {sizes:?}"))
}

fn conservation(out: &SimOutcome) -> Result<(), String> {
    let m = &out.manifest;
    let sum = |f: fn(&engine::RoundReport) -> usize| m.rounds.iter().map(f).sum::<usize>();
    ensure(sum(|r| r.new_edges) == m.final_counts.edges - m.seed_counts.edges, || "edge sums".into())?;
    ensure(sum(|r| r.new_items) == m.final_counts.items - m.seed_counts.items, || "item sums".into())?;
    ensure(sum(|r| r.new_actors) == m.final_counts.actors - m.seed_counts.actors, || "actor sums".into())?;
    ensure(m.final_counts.edges == out.graph.edge_count(), || "final edge count".into())?;
    let mut prev = (0, 0, 0);
    for r in 0..=m.rounds.len() as u32 {
        let g = metrics::graph_until(&out.graph, r).map_err(|e| e.to_string())?;
        let now = (g.actor_count(), g.item_count(), g.edge_count());
        ensure(now.0 >= prev.0 && now.1 >= prev.1 && now.2 >= prev.2, || format!("round {r}: {now:?} after {prev:?}"))?;
        if r > 0 {
            let rep = &m.rounds[r as usize - 1];
            ensure(now.2 - prev.2 == rep.new_edges && now.1 - prev.1 == rep.new_items, || format!("round {r} report mismatch"))?;
        }
        prev = now;
    }
    Ok(())
}

fn criterion_10(runs: &[&SimOutcome]) -> Check {
    for (i, out) in runs.iter().enumerate() {
        conservation(out).map_err(|e| format!("run {i}: {e}"))?;
    }
    Ok(format!("{} runs conserve counts and grow monotonically", runs.len()))
}

// ---------------------------------------------------------------------------
// 9. metric identities

fn random_network(rng: &mut ChaCha8Rng, max_n: usize) -> Network {
    let n = rng.gen_range(2..=max_n);
    let p: f64 = rng.gen_range(0.1..0.7);
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in u + 1..n as u32 {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Network::new(n, false, edges)
}

/// Orbit labels of the connected graphlets on 2 to 4 nodes: edge list and
/// orbit per template vertex.
fn templates() -> Vec<(usize, Vec<(usize, usize)>, Vec<usize>)> {
    vec![
        (2, vec![(0, 1)], vec![0, 0]),
        (3, vec![(0, 1), (1, 2)], vec![1, 2, 1]),
        (3, vec![(0, 1), (1, 2), (0, 2)], vec![3, 3, 3]),
        (4, vec![(0, 1), (1, 2), (2, 3)], vec![4, 5, 5, 4]),
        (4, vec![(0, 1), (0, 2), (0, 3)], vec![7, 6, 6, 6]),
        (4, vec![(0, 1), (1, 2), (2, 3), (3, 0)], vec![8, 8, 8, 8]),
        (4, vec![(0, 1), (1, 2), (2, 0), (2, 3)], vec![10, 10, 11, 9]),
        (4, vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)], vec![12, 13, 13, 12]),
        (4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], vec![14, 14, 14, 14]),
    ]
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn brute_orbits(net: &Network) -> Vec<[u64; metrics::ORBITS]> {
    let n = net.node_count();
    let edges: BTreeSet<(u32, u32)> = net.edges().iter().copied().collect();
    let adj = |u: usize, v: usize| edges.contains(&(u.min(v) as u32, u.max(v) as u32));
    let mut out = vec![[0u64; metrics::ORBITS]; n];
    let tpl = templates();
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            subsets.push(vec![a, b]);
            for c in b + 1..n {
                subsets.push(vec![a, b, c]);
                for d in c + 1..n {
                    subsets.push(vec![a, b, c, d]);
                }
            }
        }
    }
    for s in subsets {
        let k = s.len();
        'tpl: for (size, tedges, orbits) in tpl.iter().filter(|t| t.0 == k) {
            let _ = size;
            for perm in permutations(k) {
                // template vertex i sits on s[perm[i]]
                let mut same = true;
                for i in 0..k {
                    for j in i + 1..k {
                        let t = tedges.contains(&(i, j)) || tedges.contains(&(j, i));
                        if t != adj(s[perm[i]], s[perm[j]]) {
                            same = false;
                        }
                    }
                }
                if same {
                    for i in 0..k {
                        out[s[perm[i]]][orbits[i]] += 1;
                    }
                    break 'tpl;
                }
            }
        }
    }
    out
}

fn exact_percentile(net: &Network, q: f64) -> f64 {
    let n = net.node_count();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(u, v) in net.edges() {
        d[u as usize][v as usize] = 1;
        d[v as usize][u as usize] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut all: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && d[i][j] < inf {
                all.push(d[i][j] as f64);
            }
        }
    }
    all.sort_by(f64::total_cmp);
    let pos = q * (all.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    all[lo] + (pos - lo as f64) * (all[hi] - all[lo])
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for set_i in 0..10 {
        let set: Vec<Network> = (0..rng.gen_range(1..5)).map(|_| random_network(&mut rng, 40)).collect();
        for s in Statistic::ALL {
            let m = metrics::mmd(&set, &set, s);
            ensure(m.abs() <= 1e-9, || format!("set {set_i}: MMD {s:?}(S,S) = {m}"))?;
        }
    }
    for g in 0..50 {
        let net = random_network(&mut rng, 12);
        ensure(metrics::orbit_counts(&net) == brute_orbits(&net), || format!("graph {g}: orbit counts differ"))?;
    }
    let star = Network::new(51, false, (1..=50).map(|v| (0, v)));
    ensure(metrics::friendship_paradox_fraction(&star) == 50.0 / 51.0, || "star friendship paradox".into())?;
    for n in [2u32, 5, 17] {
        let k = Network::new(n as usize, false, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))));
        ensure(metrics::effective_diameter(&k).unwrap() == 1.0, || format!("D_e(K_{n}) != 1"))?;
    }
    for n in [2u32, 3, 11, 30] {
        let p = Network::new(n as usize, false, (1..n).map(|v| (v - 1, v)));
        let (got, want) = (metrics::effective_diameter(&p).unwrap(), exact_percentile(&p, 0.9));
        ensure((got - want).abs() < 1e-12, || format!("D_e(P_{n}) = {got}, exact {want}"))?;
    }
    Ok("MMD self-identity, 50 orbit oracles, star 50/51, K_n and path diameters".into())
}

// ---------------------------------------------------------------------------
// 11. replay

fn sc_llm_config(backend: BackendConfig) -> SimConfig {
    let mut c = SimConfig::new(ScenarioName::SC);
    c.seed = SeedSource::Synthetic { seed: 11, items: 12, actors: 5, edges: 20 };
    c.rounds = Some(2);
    c.profiles_per_round = Some(ProfilesPerRound::Fixed(0));
    c.activation = Some(ActivationPolicy::All);
    c.policy = PolicyConfig::Llm { params: LlmPolicyConfig::default() };
    c.backend = backend;
    c.rng_seed = 3;
    c.srag.embed_dim = 64;
    c
}

fn criterion_11() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("record"), dir.path().join("replay"));
    let recorded = run_simulation(&sc_llm_config(BackendConfig::Mock { seed: 1 })).map_err(|e| e.to_string())?;
    write_run(&first, &recorded).map_err(|e| e.to_string())?;
    let log = first.join(llm::EXCHANGES_FILE);
    ensure(log.exists(), || "no exchanges recorded".into())?;
    let replayed = run_simulation(&sc_llm_config(BackendConfig::Replay { path: log })).map_err(|e| e.to_string())?;
    write_run(&second, &replayed).map_err(|e| e.to_string())?;
    for f in [store::NODES_FILE, store::EDGES_FILE] {
        ensure(read(&first.join(f)) == read(&second.join(f)), || format!("{f} differs after replay"))?;
    }
    ensure(recorded.graph.edge_count() > 20, || "session produced no edges".into())?;
    Ok(format!("{} exchanges replayed to an identical graph ({} edges)", recorded.exchanges.len(), recorded.graph.edge_count()))
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_default()
}

// ---------------------------------------------------------------------------

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, budget_s: f64, f: &mut dyn FnMut() -> Check| {
        let t = Instant::now();
        let res = f();
        let secs = t.elapsed().as_secs_f64();
        let res = res.and_then(|m| if secs <= budget_s { Ok(m) } else { Err(format!("{m}; took {secs:.1}s > {budget_s}s")) });
        match res {
            Ok(m) => println!("criterion {id:>2}: PASS ({secs:.1}s) {m}"),
            Err(m) => {
                failed += 1;
                println!("criterion {id:>2}: FAIL ({secs:.1}s) {m}");
            }
        }
    };
    report(1, 10.0, &mut criterion_1);
    report(2, 30.0, &mut criterion_2);
    report(3, 60.0, &mut criterion_3);
    report(4, 60.0, &mut criterion_4);

    let t = Instant::now();
    let base = run_simulation(&soc_config(10, 1));
    let base_secs = t.elapsed().as_secs_f64();
    let base = match base {
        Ok(b) => Some(b),
        Err(e) => {
            println!("SoC run failed: {e}");
            None
        }
    };
    let mut sweep: Vec<(usize, SimOutcome)> = Vec::new();
    match &base {
        Some(b) => {
            report(5, 300.0 - base_secs, &mut || criterion_5(b));
            report(6, 600.0 - base_secs, &mut || criterion_6(b));
        }
        None => {
            report(5, 0.0, &mut || Err("simulation failed".into()));
            report(6, 0.0, &mut || Err("simulation failed".into()));
        }
    }
    report(7, 300.0, &mut criterion_7);
    report(8, 600.0, &mut || {
        for n_r in [3, 5, 10, 20] {
            sweep.push((n_r, run_simulation(&soc_config(n_r, 4)).map_err(|e| e.to_string())?));
        }
        criterion_8(&sweep)
    });
    report(9, 120.0, &mut criterion_9);
    report(10, f64::INFINITY, &mut || {
        let mut runs: Vec<&SimOutcome> = base.iter().collect();
        runs.extend(sweep.iter().map(|(_, o)| o));
        ensure(runs.len() == 5, || format!("only {} runs available", runs.len()))?;
        criterion_10(&runs)
    });
    report(11, 30.0, &mut criterion_11);

    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
