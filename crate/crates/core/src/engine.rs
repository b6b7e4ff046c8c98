//! The round loop: formulate nodes, activate, index, interact in parallel,
//! merge in actor order, report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    self, activate, item_topics, label_core, ActionSet, ActivationPolicy, ActorContext, AgentError, AgentMemory,
    AgentPolicy, HeuristicConfig, LlmPolicy, LlmPolicyConfig, MemoryRecord, ObservedItems, ProfileSource, Queries,
};
use crate::graph::{fold, ActorId, BipartiteGraph, CoreLabel, FoldName, FoldSpec, GraphError, ItemId};
use crate::llm::{self, BackendConfig, BackendError, ChatExchange, LlmClient, Transport};
use crate::scenario::{
    self, creator_names, load_seed, render_item_text, termination_met, ProfilesPerRound, ScenarioError, ScenarioName,
    ScenarioSpec, SeedSource, Termination,
};
use crate::srag::{
    actor_rng, run_actors, ActorFailure, ActorOutcome, BackendEncoder, Encoder, EncoderError, EncoderKind, HashingEncoder, ItemRef,
    RoundDeltas, RoundInputs, SocialView, SragConfig, VectorIndex,
};
use crate::store::{self, StoreError};
use crate::vocab::Vocabulary;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROFILES_FILE: &str = "profiles.jsonl";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl SimError {
    /// True when the chat or embedding backend failed at run time (not
    /// when its settings were unusable).
    pub fn is_backend(&self) -> bool {
        let b = match self {
            SimError::Backend(b)
            | SimError::Agent(AgentError::Backend(b))
            | SimError::Encoder(EncoderError::Backend(b))
            | SimError::Scenario(ScenarioError::Backend(b))
            | SimError::Scenario(ScenarioError::Agent(AgentError::Backend(b))) => b,
            _ => return false,
        };
        b.is_runtime()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicyConfig {
    Heuristic {
        #[serde(flatten)]
        params: HeuristicConfig,
    },
    Llm {
        #[serde(flatten)]
        params: LlmPolicyConfig,
    },
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig::Heuristic { params: HeuristicConfig::default() }
    }
}

fn default_ports() -> usize {
    1
}

/// A run file. Scenario-dependent fields left out take the scenario default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: ScenarioName,
    #[serde(default)]
    pub seed: SeedSource,
    /// Round cap K.
    #[serde(default)]
    pub rounds: Option<u32>,
    #[serde(default)]
    pub activation: Option<ActivationPolicy>,
    #[serde(default)]
    pub profiles_per_round: Option<ProfilesPerRound>,
    /// Cap on items created per round.
    #[serde(default)]
    pub papers_target: Option<usize>,
    #[serde(default)]
    pub termination: Option<Termination>,
    #[serde(default)]
    pub srag: SragConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "default_ports")]
    pub ports: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub injected_latency_ms: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Folded networks written next to the graph.
    #[serde(default)]
    pub folds: Vec<FoldName>,
    #[serde(default)]
    pub vocab_dir: Option<PathBuf>,
}

/// Used when neither the rounds cap nor the termination rule bounds a run.
pub const MAX_ROUNDS: u32 = 1000;

impl SimConfig {
    pub fn new(scenario: ScenarioName) -> Self {
        SimConfig {
            scenario,
            seed: SeedSource::default(),
            rounds: None,
            activation: None,
            profiles_per_round: None,
            papers_target: None,
            termination: None,
            srag: SragConfig::default(),
            policy: PolicyConfig::default(),
            backend: BackendConfig::default(),
            ports: 1,
            rng_seed: 0,
            injected_latency_ms: 0,
            out_dir: None,
            folds: Vec::new(),
            vocab_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|source| SimError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    /// Fills every scenario default so the manifest holds the full setup.
    pub fn resolved(&self) -> Result<SimConfig, SimError> {
        let spec = ScenarioSpec::builtin(self.scenario);
        let mut c = self.clone();
        c.activation.get_or_insert(match self.scenario {
            ScenarioName::SC => ActivationPolicy::RandomSample { count: 50 },
            ScenarioName::TC => ActivationPolicy::All,
            ScenarioName::SoC => {
                ActivationPolicy::CoreRegular { hub_rate: self.srag.hub_rate.unwrap_or(0.2), p_core: 0.8, p_reg: 0.2 }
            }
        });
        c.profiles_per_round.get_or_insert(spec.profiles_per_round);
        if self.scenario == ScenarioName::SC {
            c.papers_target.get_or_insert(50);
        }
        c.termination.get_or_insert(spec.termination);
        if c.ports == 0 {
            return Err(SimError::Config("ports must be at least 1".into()));
        }
        if c.srag.n_r == 0 {
            return Err(SimError::Config("n_r must be at least 1".into()));
        }
        if c.srag.embed_dim == 0 {
            return Err(SimError::Config("embed_dim must be at least 1".into()));
        }
        if let Some(h) = c.hub_rate() {
            if !(0.0..=1.0).contains(&h) {
                return Err(SimError::Config(format!("hub_rate {h} outside [0, 1]")));
            }
        }
        if let PolicyConfig::Heuristic { params } = &c.policy {
            if !(params.cite_fraction > 0.0 && params.cite_fraction <= 1.0) {
                return Err(SimError::Config(format!("cite_fraction {} outside (0, 1]", params.cite_fraction)));
            }
            if !(0.0..=1.0).contains(&params.create_probability) {
                return Err(SimError::Config(format!("create_probability {} outside [0, 1]", params.create_probability)));
            }
        }
        c.srag.active_filters(&spec).map_err(SimError::Config)?;
        Ok(c)
    }

    /// Core share: the activation mode's own, else the retrieval setting,
    /// else 0.2.
    pub fn hub_rate(&self) -> Option<f64> {
        self.activation.as_ref().and_then(ActivationPolicy::hub_rate).or(self.srag.hub_rate).or(Some(0.2))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub formulate_ms: f64,
    pub index_ms: f64,
    pub interact_ms: f64,
    pub merge_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub new_actors: usize,
    pub active_actors: usize,
    pub core_actors: usize,
    pub failed_actors: usize,
    pub new_items: usize,
    pub new_edges: usize,
    pub new_edges_by_kind: BTreeMap<String, usize>,
    pub parse_warnings: u64,
    pub llm_calls: u64,
    pub llm_latency_ms: f64,
    pub wall_ms: f64,
    pub phases: PhaseTimes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum TerminationCause {
    RoundCap { rounds: u32 },
    Rule { rule: Termination },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphCounts {
    pub actors: usize,
    pub items: usize,
    pub edges: usize,
}

impl GraphCounts {
    pub fn of(g: &BipartiteGraph) -> Self {
        GraphCounts { actors: g.actor_count(), items: g.item_count(), edges: g.edge_count() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub config: SimConfig,
    pub rng_seed: u64,
    pub seed_counts: GraphCounts,
    pub final_counts: GraphCounts,
    pub rounds: Vec<RoundReport>,
    pub termination: TerminationCause,
}

pub struct SimOutcome {
    pub graph: BipartiteGraph,
    pub manifest: RunManifest,
    pub memories: Vec<AgentMemory>,
    pub exchanges: Vec<ChatExchange>,
}

/// Adds a fixed delay to every decision, standing in for model latency.
struct Delayed<'a> {
    inner: &'a dyn AgentPolicy,
    delay: Duration,
}

impl AgentPolicy for Delayed<'_> {
    fn make_queries(&self, ctx: &ActorContext<'_>, rng: &mut ChaCha8Rng) -> Result<Queries, AgentError> {
        self.inner.make_queries(ctx, rng)
    }

    fn decide_actions(
        &self,
        ctx: &ActorContext<'_>,
        observed: &ObservedItems<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<ActionSet, AgentError> {
        std::thread::sleep(self.delay);
        self.inner.decide_actions(ctx, observed, rng)
    }
}

// Reserved stream ids for coordinator-side draws.
const STREAM_PROFILES: ActorId = ActorId(u32::MAX);
const STREAM_ACTIVATION: ActorId = ActorId(u32::MAX - 1);
const STREAM_CAP: ActorId = ActorId(u32::MAX - 2);

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Appends deltas: new items first in actor order, then edges. Returns the
/// ordinals given to the new items.
pub fn merge_deltas(graph: &mut BipartiteGraph, deltas: &RoundDeltas, k: u32) -> Result<Vec<ItemId>, GraphError> {
    let mut new_ids = Vec::with_capacity(deltas.new_items.len());
    for (creator, attrs) in &deltas.new_items {
        new_ids.push(graph.add_item(attrs.clone(), Some(*creator), k)?);
    }
    for e in &deltas.edges {
        let item = match e.item {
            ItemRef::New(i) => new_ids[i],
            ItemRef::Existing(id) => {
                let visible = graph.item(id).is_some_and(|it| it.created_round < k);
                if !visible {
                    return Err(GraphError::DanglingEndpoint(format!("item {} is not in the round-{} snapshot", id.0, k - 1)));
                }
                id
            }
        };
        graph.add_edge(e.actor, item, e.kind, k)?;
    }
    Ok(new_ids)
}

/// Keeps at most `cap` new items, chosen uniformly among the creating actors.
fn cap_creations(results: &mut [(ActorId, Result<ActorOutcome, ActorFailure>)], cap: usize, rng: &mut ChaCha8Rng) {
    let creators: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| r.as_ref().is_ok_and(|o| o.actions.new_item.is_some()))
        .map(|(i, _)| i)
        .collect();
    if creators.len() <= cap {
        return;
    }
    let keep: std::collections::HashSet<usize> =
        index::sample(rng, creators.len(), cap).into_iter().map(|i| creators[i]).collect();
    for i in creators {
        if !keep.contains(&i) {
            if let (_, Ok(o)) = &mut results[i] {
                o.actions.new_item = None;
                o.actions.co_creators.clear();
            }
        }
    }
}

fn seed_memories(graph: &BipartiteGraph) -> Vec<AgentMemory> {
    let mut memories = vec![AgentMemory::default(); graph.actor_count()];
    for e in graph.edges() {
        let item = graph.item(e.item).expect("edge endpoints exist");
        memories[e.actor.index()].record(MemoryRecord {
            round: e.round,
            kind: e.kind,
            item: e.item,
            topics: item_topics(item),
            title: item.attrs.get("title").cloned(),
            text: None,
        });
    }
    memories
}

/// Runs the configured simulation. Nothing is written to disk; see
/// [`write_run`].
pub fn run_simulation(config: &SimConfig) -> Result<SimOutcome, SimError> {
    run_simulation_with(config, None)
}

/// Like [`run_simulation`], with an injectable transport for the remote
/// backend.
pub fn run_simulation_with(config: &SimConfig, transport: Option<Arc<dyn Transport>>) -> Result<SimOutcome, SimError> {
    let config = config.resolved()?;
    let spec = ScenarioSpec::builtin(config.scenario);
    let vocab = match &config.vocab_dir {
        Some(dir) => Vocabulary::load(dir).map_err(|source| SimError::Io { path: dir.clone(), source })?,
        None => Vocabulary::builtin(),
    };
    let filters = config.srag.active_filters(&spec).map_err(SimError::Config)?;
    let llm_mode = matches!(config.policy, PolicyConfig::Llm { .. });
    let needs_client = llm_mode
        || config.srag.encoder == EncoderKind::Backend
        || matches!(config.seed, SeedSource::LlmGenerated { .. });
    let latency = Duration::from_millis(config.injected_latency_ms);
    let client = if needs_client {
        let c = LlmClient::from_config(&config.backend, &vocab, config.srag.embed_dim, transport)?;
        Some(Arc::new(if llm_mode { c.with_injected_latency(latency) } else { c }))
    } else {
        None
    };
    let encoder: Box<dyn Encoder> = match (config.srag.encoder, &client) {
        (EncoderKind::Backend, Some(c)) => Box::new(BackendEncoder::new(c.clone(), config.srag.embed_dim)),
        _ => Box::new(HashingEncoder::new(config.srag.embed_dim)),
    };
    let heuristic;
    let llm_policy;
    let base: &dyn AgentPolicy = match &config.policy {
        PolicyConfig::Heuristic { params } => {
            heuristic = agent::heuristic_policy(params.clone());
            &heuristic
        }
        PolicyConfig::Llm { params } => {
            let c = client.clone().expect("client exists in llm mode");
            llm_policy = LlmPolicy::new(c, vocab.clone(), params.clone());
            &llm_policy
        }
    };
    let delayed = Delayed { inner: base, delay: latency };
    let policy: &dyn AgentPolicy = if !llm_mode && !latency.is_zero() { &delayed } else { base };
    let pool = if config.ports > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.ports)
                .build()
                .map_err(|e| SimError::Config(format!("worker pool: {e}")))?,
        )
    } else {
        None
    };

    let mut graph = load_seed(&config.seed, &spec, &vocab, client.as_deref())?;
    let seed_counts = GraphCounts::of(&graph);
    let mut memories = seed_memories(&graph);
    let mut index = VectorIndex::new(config.srag.embed_dim);
    let mut texts: Vec<String> = Vec::new();
    let activation = config.activation.expect("resolved");
    let hub_rate = config.hub_rate().unwrap_or(0.2);
    let per_round = config.profiles_per_round.expect("resolved");
    let termination = config.termination.expect("resolved");
    let cap = config.rounds.unwrap_or(match termination {
        Termination::Rounds { count } => count,
        _ => MAX_ROUNDS,
    });
    let mut reports = Vec::new();
    let mut cause = TerminationCause::RoundCap { rounds: cap };

    for k in 1..=cap {
        let round_start = Instant::now();
        graph.begin_round(k);
        let calls_before = client.as_ref().map(|c| c.stats()).unwrap_or_default();

        // Node formulation.
        let t = Instant::now();
        let count = per_round.count(graph.actor_count());
        let source = match (&client, llm_mode) {
            (Some(c), true) => ProfileSource::Llm { client: c, retries: 2 },
            _ => ProfileSource::Vocabulary,
        };
        let profiles = agent::generate_profiles(&source, &spec, &vocab, count, &mut actor_rng(config.rng_seed, k, STREAM_PROFILES))
            .or_else(|e| match e {
                AgentError::Parse { .. } => {
                    log::warn!("round {k}: no new profiles: {e}");
                    Ok(Vec::new())
                }
                other => Err(other),
            })?;
        for p in &profiles {
            graph.add_actor(p.to_attrs(), k, CoreLabel::Regular);
        }
        memories.resize(graph.actor_count(), AgentMemory::default());
        let histories: Vec<usize> = memories.iter().map(|m| m.action_log.len()).collect();
        let labels = label_core(&histories, hub_rate);
        for (i, l) in labels.iter().enumerate() {
            graph.set_core_label(ActorId(i as u32), *l);
        }
        let active: Vec<ActorId> = match (&activation, &client, llm_mode) {
            (ActivationPolicy::CoreRegular { .. }, Some(c), true) => {
                let ask = |i: usize| {
                    let a = graph.actor(ActorId(i as u32)).expect("actor exists");
                    agent::llm_activation(c, &spec, a, labels[i], histories[i], k)
                };
                let decisions: Vec<Result<bool, AgentError>> = match &pool {
                    Some(p) => p.install(|| (0..labels.len()).into_par_iter().with_max_len(1).map(ask).collect()),
                    None => (0..labels.len()).map(ask).collect(),
                };
                let mut active = Vec::new();
                for (i, d) in decisions.into_iter().enumerate() {
                    match d {
                        Ok(true) => active.push(ActorId(i as u32)),
                        Ok(false) => {}
                        Err(AgentError::Backend(e)) => return Err(e.into()),
                        Err(e) => log::warn!("actor {i} activation skipped: {e}"),
                    }
                }
                active
            }
            _ => activate(&activation, &labels, &mut actor_rng(config.rng_seed, k, STREAM_ACTIVATION)),
        };
        let formulate = t.elapsed();

        // Index the round-(k−1) snapshot; only items new since the last
        // round need encoding.
        let t = Instant::now();
        let snapshot = graph.snapshot_items(k);
        let fresh = &snapshot.items()[texts.len()..];
        let mut fresh_texts = Vec::with_capacity(fresh.len());
        for item in fresh {
            let names = creator_names(&graph, item.id, spec.creation_kind);
            fresh_texts.push(render_item_text(item, &spec, &names)?);
        }
        index.append(fresh, &fresh_texts, encoder.as_ref())?;
        texts.extend(fresh_texts);
        let core_items: Vec<bool> = snapshot
            .items()
            .iter()
            .map(|it| it.creator.is_some_and(|c| labels[c.index()] == CoreLabel::Core))
            .collect();
        let social = SocialView::from_graph(&graph);
        let index_time = t.elapsed();

        // Interaction.
        let t = Instant::now();
        let inputs = RoundInputs {
            graph: &graph,
            spec: &spec,
            round: k,
            snapshot,
            index: &index,
            texts: &texts,
            core_items: &core_items,
            encoder: encoder.as_ref(),
            config: &config.srag,
            filters: &filters,
            social: &social,
            memories: &memories,
        };
        let mut results = run_actors(&inputs, policy, &active, config.rng_seed, pool.as_ref());
        if let Some(cap) = config.papers_target {
            cap_creations(&mut results, cap, &mut actor_rng(config.rng_seed, k, STREAM_CAP));
        }
        let deltas = RoundDeltas::collect(&spec, results);
        let interact = t.elapsed();
        if !active.is_empty() && deltas.outcomes.is_empty() && deltas.failures.iter().any(|(_, e)| e.is_backend()) {
            let (_, e) = deltas.failures.into_iter().find(|(_, e)| e.is_backend()).expect("checked");
            return Err(match e {
                ActorFailure::Agent(e) => e.into(),
                ActorFailure::Encoder(e) => e.into(),
            });
        }

        // Merge.
        let t = Instant::now();
        let before = GraphCounts::of(&graph);
        let new_ids = merge_deltas(&mut graph, &deltas, k)?;
        let mut created = new_ids.iter();
        let mut warnings = 0u64;
        for outcome in &deltas.outcomes {
            let a = outcome.actor;
            warnings += u64::from(outcome.actions.warnings);
            if outcome.actions.new_item.is_some() {
                let id = *created.next().expect("one id per new item");
                let item = graph.item(id).expect("merged");
                let record = MemoryRecord {
                    round: k,
                    kind: spec.creation_kind.expect("new items need a creation kind"),
                    item: id,
                    topics: item_topics(item),
                    title: item.attrs.get("title").cloned(),
                    text: item.attrs.get("content").cloned(),
                };
                for who in std::iter::once(a).chain(outcome.actions.co_creators.iter().copied()) {
                    memories[who.index()].record(record.clone());
                }
            }
            for target in &outcome.actions.targets {
                let item = graph.item(target.item).expect("merged");
                memories[a.index()].record(MemoryRecord {
                    round: k,
                    kind: target.kind,
                    item: target.item,
                    topics: item_topics(item),
                    title: item.attrs.get("title").cloned(),
                    text: target.text.clone(),
                });
            }
            memories[a.index()].apply(&outcome.reflection, k);
        }
        let merge = t.elapsed();

        let after = GraphCounts::of(&graph);
        let mut by_kind = BTreeMap::new();
        for e in &graph.edges()[before.edges..] {
            *by_kind.entry(e.kind.as_str().to_string()).or_insert(0) += 1;
        }
        let calls_after = client.as_ref().map(|c| c.stats()).unwrap_or_default();
        let report = RoundReport {
            round: k,
            new_actors: profiles.len(),
            active_actors: active.len(),
            core_actors: labels.iter().filter(|l| **l == CoreLabel::Core).count(),
            failed_actors: deltas.failures.len(),
            new_items: after.items - before.items,
            new_edges: after.edges - before.edges,
            new_edges_by_kind: by_kind,
            parse_warnings: warnings,
            llm_calls: calls_after.calls - calls_before.calls,
            llm_latency_ms: (calls_after.latency_us - calls_before.latency_us) as f64 / 1000.0,
            wall_ms: ms(round_start.elapsed()),
            phases: PhaseTimes {
                formulate_ms: ms(formulate),
                index_ms: ms(index_time),
                interact_ms: ms(interact),
                merge_ms: ms(merge),
            },
        };
        log::info!(
            "round {k}: {} active, +{} actors, +{} items, +{} edges ({:.0} ms)",
            report.active_actors,
            report.new_actors,
            report.new_items,
            report.new_edges,
            report.wall_ms
        );
        reports.push(report);
        if termination_met(&graph, termination) {
            cause = TerminationCause::Rule { rule: termination };
            break;
        }
    }

    let manifest = RunManifest {
        software: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        rng_seed: config.rng_seed,
        seed_counts,
        final_counts: GraphCounts::of(&graph),
        rounds: reports,
        termination: cause,
        config,
    };
    let exchanges = client.map(|c| c.exchanges()).unwrap_or_default();
    Ok(SimOutcome { graph, manifest, memories, exchanges })
}

#[derive(Serialize)]
struct ProfileLine<'a> {
    id: u32,
    round: u32,
    core: CoreLabel,
    attrs: &'a crate::graph::Attrs,
    memory_len: usize,
    summary: &'a str,
}

/// Writes `nodes.jsonl`, `edges.tsv`, `manifest.json`, `profiles.jsonl`,
/// `exchanges.jsonl` (when a backend was used) and the requested folds.
pub fn write_run(out_dir: &Path, outcome: &SimOutcome) -> Result<(), SimError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SimError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    store::write_graph(out_dir, &outcome.graph)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&outcome.manifest).map_err(|e| SimError::Config(e.to_string()))?;
    fs::write(&manifest_path, text + "\n").map_err(io(&manifest_path))?;
    let mut lines = String::new();
    for (a, m) in outcome.graph.actors().iter().zip(&outcome.memories) {
        let line = ProfileLine {
            id: a.id.0,
            round: a.created_round,
            core: a.core,
            attrs: &a.attrs,
            memory_len: m.action_log.len(),
            summary: &m.summary,
        };
        lines.push_str(&serde_json::to_string(&line).map_err(|e| SimError::Config(e.to_string()))?);
        lines.push('\n');
    }
    let profiles_path = out_dir.join(PROFILES_FILE);
    fs::write(&profiles_path, lines).map_err(io(&profiles_path))?;
    if !outcome.exchanges.is_empty() {
        llm::write_exchanges(&out_dir.join(llm::EXCHANGES_FILE), &outcome.exchanges)?;
    }
    for name in &outcome.manifest.config.folds {
        let folded = fold(&outcome.graph, &FoldSpec::builtin(*name))?;
        store::write_folded(&out_dir.join(fold_file_name(*name)), &folded)?;
    }
    Ok(())
}

pub fn fold_file_name(name: FoldName) -> String {
    format!("fold_{}.tsv", name.as_str())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub ports: usize,
    pub interactions: usize,
    pub interact_ms: f64,
    pub ms_per_interaction: f64,
    /// Reduction in per-interaction time relative to one port, in percent.
    pub reduction_pct: f64,
}

/// Runs the same workload at each port count and reports the per-interaction
/// wall time of the interaction phase.
pub fn measure_speedup(config: &SimConfig, ports: &[usize]) -> Result<Vec<SpeedupRow>, SimError> {
    let mut list: Vec<usize> = ports.to_vec();
    if !list.contains(&1) {
        list.insert(0, 1);
    }
    let mut rows = Vec::new();
    for p in list {
        let mut c = config.clone();
        c.ports = p;
        let out = run_simulation(&c)?;
        let interactions: usize = out.manifest.rounds.iter().map(|r| r.active_actors).sum();
        let interact_ms: f64 = out.manifest.rounds.iter().map(|r| r.phases.interact_ms).sum();
        let per = if interactions == 0 { 0.0 } else { interact_ms / interactions as f64 };
        rows.push(SpeedupRow { ports: p, interactions, interact_ms, ms_per_interaction: per, reduction_pct: 0.0 });
    }
    let base = rows.iter().find(|r| r.ports == 1).map(|r| r.ms_per_interaction).unwrap_or(0.0);
    for r in &mut rows {
        r.reduction_pct = if base > 0.0 { 100.0 * (1.0 - r.ms_per_interaction / base) } else { 0.0 };
    }
    Ok(rows)
}

/// The scenario spec a run uses.
pub fn scenario_spec(config: &SimConfig) -> ScenarioSpec {
    scenario::ScenarioSpec::builtin(config.scenario)
}
