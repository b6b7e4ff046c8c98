use agentgraph::engine::{self, RunManifest, SimConfig};
use agentgraph::graph::{fold, FoldSpec};
use agentgraph::scenario::{ScenarioName, ScenarioSpec, SeedSource};
use agentgraph::store;

fn config(scenario: ScenarioName, rounds: u32) -> SimConfig {
    let mut c = SimConfig::new(scenario);
    c.seed = SeedSource::Synthetic { seed: 2, items: 60, actors: 30, edges: 90 };
    c.rounds = Some(rounds);
    c.rng_seed = 77;
    c
}

#[test]
fn written_run_reads_back_identically() {
    for scenario in [ScenarioName::SC, ScenarioName::TC, ScenarioName::SoC] {
        let out = engine::run_simulation(&config(scenario, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        engine::write_run(dir.path(), &out).unwrap();
        let back = store::read_graph_dir(dir.path(), ScenarioSpec::builtin(scenario).schema()).unwrap();
        assert_eq!(back.actors(), out.graph.actors(), "{scenario}");
        assert_eq!(back.items(), out.graph.items(), "{scenario}");
        assert_eq!(back.edges(), out.graph.edges(), "{scenario}");
        let text = std::fs::read_to_string(dir.path().join(engine::MANIFEST_FILE)).unwrap();
        let manifest: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(manifest.final_counts, out.manifest.final_counts);
    }
}

#[test]
fn round_reports_add_up_to_the_final_graph() {
    for scenario in [ScenarioName::SC, ScenarioName::TC, ScenarioName::SoC] {
        let out = engine::run_simulation(&config(scenario, 3)).unwrap();
        let m = &out.manifest;
        let new_actors: usize = m.rounds.iter().map(|r| r.new_actors).sum();
        let new_items: usize = m.rounds.iter().map(|r| r.new_items).sum();
        let new_edges: usize = m.rounds.iter().map(|r| r.new_edges).sum();
        assert_eq!(m.seed_counts.actors + new_actors, m.final_counts.actors, "{scenario}");
        assert_eq!(m.seed_counts.items + new_items, m.final_counts.items, "{scenario}");
        assert_eq!(m.seed_counts.edges + new_edges, m.final_counts.edges, "{scenario}");
        for r in &m.rounds {
            assert_eq!(r.new_edges_by_kind.values().sum::<usize>(), r.new_edges);
            let written = out.graph.edges().iter().filter(|e| e.round == r.round).count();
            assert_eq!(written, r.new_edges, "{scenario} round {}", r.round);
        }
    }
}

#[test]
fn same_seed_same_graph_different_seed_different_graph() {
    let a = engine::run_simulation(&config(ScenarioName::SoC, 2)).unwrap();
    let b = engine::run_simulation(&config(ScenarioName::SoC, 2)).unwrap();
    assert_eq!(a.graph.edges(), b.graph.edges());
    let mut other = config(ScenarioName::SoC, 2);
    other.rng_seed = 78;
    let c = engine::run_simulation(&other).unwrap();
    assert_ne!(a.graph.edges(), c.graph.edges());
}

#[test]
fn every_scenario_fold_is_computable_on_a_run() {
    for scenario in [ScenarioName::SC, ScenarioName::TC, ScenarioName::SoC] {
        let out = engine::run_simulation(&config(scenario, 2)).unwrap();
        for name in ScenarioSpec::builtin(scenario).fold_specs {
            let f = fold(&out.graph, &FoldSpec::builtin(name)).unwrap();
            assert!(f.network.edges().iter().all(|&(u, v)| (u as usize) < f.node_count() && (v as usize) < f.node_count()));
        }
    }
}

#[test]
fn folded_edge_list_reads_back() {
    let out = engine::run_simulation(&config(ScenarioName::SoC, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in ScenarioSpec::builtin(ScenarioName::SoC).fold_specs {
        let f = fold(&out.graph, &FoldSpec::builtin(name)).unwrap();
        let path = dir.path().join(engine::fold_file_name(name));
        store::write_folded(&path, &f).unwrap();
        let back = store::read_edge_list(&path).unwrap();
        assert_eq!(back.network.edge_count(), f.edge_count(), "{name}");
        assert_eq!(back.network.is_directed(), f.network.is_directed(), "{name}");
    }
}
