//! Retrieval for one simulation round: item indexing, cosine recall,
//! coarse and fine reranking, observation assembly and the per-actor loop.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    preferred_topics, ActionSet, ActorContext, AgentError, AgentMemory, AgentPolicy, ObservedItems, Reflection,
};
use crate::graph::{ActionKind, ActorId, Attrs, BipartiteGraph, ItemId, ItemNode, ItemSnapshot};
use crate::llm::{fnv1a, BackendError, LlmClient};
use crate::scenario::{FilterItem, ScenarioSpec};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("encoder returned {got} vectors of dimension {dim}, expected {want} of dimension {expected}")]
    Shape { got: usize, want: usize, dim: usize, expected: usize },
}

pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;
    /// One unit vector per text.
    fn encode(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EncoderError>;
}

/// L2-normalizes in f64. The zero vector maps to the first basis vector.
pub fn normalize(v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        let mut e = vec![0.0; v.len()];
        if let Some(first) = e.first_mut() {
            *first = 1.0;
        }
        return e;
    }
    v.into_iter().map(|x| (f64::from(x) / norm) as f32).collect()
}

/// Signed feature hashing of lowercase alphanumeric tokens.
#[derive(Clone, Debug)]
pub struct HashingEncoder {
    dim: usize,
}

impl HashingEncoder {
    pub fn new(dim: usize) -> Self {
        HashingEncoder { dim: dim.max(1) }
    }

    pub fn encode_text(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let token = token.to_lowercase();
            let h = fnv1a(&[token.as_bytes()]);
            let bucket = (h % self.dim as u64) as usize;
            v[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
        normalize(v)
    }
}

impl Encoder for HashingEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EncoderError> {
        Ok(texts.iter().map(|t| self.encode_text(t)).collect())
    }
}

/// Embeddings from the chat backend's embedding endpoint.
pub struct BackendEncoder {
    client: Arc<LlmClient>,
    dim: usize,
}

impl BackendEncoder {
    pub fn new(client: Arc<LlmClient>, dim: usize) -> Self {
        BackendEncoder { client, dim }
    }
}

impl Encoder for BackendEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EncoderError> {
        let out: Vec<Vec<f32>> = self.client.embed(texts)?.into_iter().map(normalize).collect();
        if out.len() != texts.len() || out.iter().any(|v| v.len() != self.dim) {
            return Err(EncoderError::Shape {
                got: out.len(),
                want: texts.len(),
                dim: out.first().map_or(0, Vec::len),
                expected: self.dim,
            });
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Hashing,
    Backend,
}

/// Unit vectors for indexed items, row-major, in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<ItemId>,
    rounds: Vec<u32>,
    data: Vec<f32>,
    norms: Vec<f64>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        VectorIndex { dim, ids: Vec::new(), rounds: Vec::new(), data: Vec::new(), norms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn rounds(&self) -> &[u32] {
        &self.rounds
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn push(&mut self, id: ItemId, round: u32, vector: &[f32]) {
        assert_eq!(vector.len(), self.dim, "vector dimension");
        self.ids.push(id);
        self.rounds.push(round);
        self.data.extend_from_slice(vector);
        self.norms.push(vector.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt());
    }

    /// Encodes and appends `items` (aligned with `texts`).
    pub fn append(&mut self, items: &[ItemNode], texts: &[String], encoder: &dyn Encoder) -> Result<(), EncoderError> {
        if items.is_empty() {
            return Ok(());
        }
        let vectors = encoder.encode(texts)?;
        if vectors.len() != items.len() {
            return Err(EncoderError::Shape { got: vectors.len(), want: items.len(), dim: self.dim, expected: self.dim });
        }
        for (item, v) in items.iter().zip(&vectors) {
            if v.len() != self.dim {
                return Err(EncoderError::Shape { got: vectors.len(), want: items.len(), dim: v.len(), expected: self.dim });
            }
            self.push(item.id, item.created_round, v);
        }
        Ok(())
    }

    /// `Sim(q, x) = q·x / (‖q‖‖x‖)`; zero-norm rows score 0.
    pub fn similarity(&self, row: usize, query: &[f32], query_norm: f64) -> f64 {
        let dot: f64 = self.vector(row).iter().zip(query).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
        let denom = self.norms[row] * query_norm;
        if denom == 0.0 {
            0.0
        } else {
            dot / denom
        }
    }
}

/// One index entry per snapshot item; `texts` holds the rendered item text.
pub fn index_items(snapshot: &ItemSnapshot<'_>, texts: &[String], encoder: &dyn Encoder) -> Result<VectorIndex, EncoderError> {
    let mut index = VectorIndex::new(encoder.dim());
    index.append(snapshot.items(), &texts[..snapshot.len()], encoder)?;
    Ok(index)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scored {
    pub item: ItemId,
    pub sim: f64,
}

/// Higher similarity first, then lower ordinal.
fn rank_cmp(a: &Scored, b: &Scored) -> Ordering {
    b.sim.total_cmp(&a.sim).then(a.item.cmp(&b.item))
}

struct HeapEntry(Scored);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        rank_cmp(&self.0, &other.0) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // The heap's maximum is the worst-ranked entry kept so far.
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp(&self.0, &other.0)
    }
}

/// Top-`n_r` items by cosine similarity, ties broken by ascending ordinal.
pub fn recall(index: &VectorIndex, query: &[f32], n_r: usize) -> Vec<Scored> {
    if n_r == 0 || index.is_empty() {
        return Vec::new();
    }
    let qn = query.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(n_r + 1);
    for (row, id) in index.ids.iter().enumerate() {
        let s = Scored { item: *id, sim: index.similarity(row, query, qn) };
        if heap.len() < n_r {
            heap.push(HeapEntry(s));
        } else if let Some(worst) = heap.peek() {
            if rank_cmp(&s, &worst.0) == Ordering::Less {
                heap.pop();
                heap.push(HeapEntry(s));
            }
        }
    }
    let mut out: Vec<Scored> = heap.into_iter().map(|e| e.0).collect();
    out.sort_by(rank_cmp);
    out
}

pub fn recall_text(index: &VectorIndex, encoder: &dyn Encoder, query: &str, n_r: usize) -> Result<Vec<Scored>, EncoderError> {
    let q = encoder.encode(&[query.to_string()])?;
    Ok(recall(index, &q[0], n_r))
}

/// Stable partition: core-created items first.
pub fn rerank_coarse(results: &[ItemId], core_flags: &[bool]) -> Vec<ItemId> {
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by_key(|&i| !core_flags[i]);
    order.into_iter().map(|i| results[i]).collect()
}

/// What fine ranking knows about an actor.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Preferences {
    /// Lowercased topics or genres.
    pub topics: BTreeSet<String>,
    pub followees: BTreeSet<ActorId>,
    pub friends: BTreeSet<ActorId>,
}

impl Preferences {
    pub fn from_attrs(attrs: &Attrs) -> Self {
        Preferences {
            topics: preferred_topics(attrs).into_iter().map(|t| t.to_lowercase()).collect(),
            ..Default::default()
        }
    }
}

fn split_lower(v: Option<&String>) -> impl Iterator<Item = String> + '_ {
    v.into_iter().flat_map(|s| s.split([',', '|']).map(|t| t.trim().to_lowercase()).filter(|t| !t.is_empty()))
}

pub fn satisfies(item: &ItemNode, prefs: &Preferences, filter: FilterItem) -> bool {
    match filter {
        FilterItem::Topic => split_lower(item.attrs.get("topic")).any(|t| prefs.topics.contains(&t)),
        FilterItem::Genre => split_lower(item.attrs.get("genres")).any(|t| prefs.topics.contains(&t)),
        FilterItem::Follow => item.creator.is_some_and(|c| prefs.followees.contains(&c)),
        FilterItem::Friend => item.creator.is_some_and(|c| prefs.friends.contains(&c)),
    }
}

/// Number of the given filter predicates an item satisfies.
pub fn filter_score(item: &ItemNode, prefs: &Preferences, filters: &[FilterItem]) -> usize {
    filters.iter().filter(|f| satisfies(item, prefs, **f)).count()
}

/// Stable sort by descending score.
pub fn rerank_fine(results: &[ItemId], scores: &[usize]) -> Vec<ItemId> {
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(scores[i]));
    order.into_iter().map(|i| results[i]).collect()
}

/// Coarse partition, then fine ordering inside each part.
pub fn rerank(results: &[ItemId], core_flags: &[bool], scores: &[usize]) -> Vec<ItemId> {
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by_key(|&i| (!core_flags[i], std::cmp::Reverse(scores[i])));
    order.into_iter().map(|i| results[i]).collect()
}

fn default_n_r() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_embed_dim() -> usize {
    384
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SragConfig {
    #[serde(default = "default_n_r")]
    pub n_r: usize,
    /// Number of scenario filter items used in fine ranking; all when absent.
    #[serde(default)]
    pub n_f: Option<usize>,
    #[serde(default = "default_true")]
    pub rerank_enabled: bool,
    /// Core share when the activation mode carries none of its own.
    #[serde(default)]
    pub hub_rate: Option<f64>,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Explicit filter list, overriding `n_f`.
    #[serde(default)]
    pub filters: Option<Vec<FilterItem>>,
    #[serde(default)]
    pub encoder: EncoderKind,
}

impl Default for SragConfig {
    fn default() -> Self {
        SragConfig {
            n_r: default_n_r(),
            n_f: None,
            rerank_enabled: true,
            hub_rate: None,
            embed_dim: default_embed_dim(),
            filters: None,
            encoder: EncoderKind::Hashing,
        }
    }
}

impl SragConfig {
    /// Filters in use: the explicit list, or the first `n_f` scenario filters.
    pub fn active_filters(&self, spec: &ScenarioSpec) -> Result<Vec<FilterItem>, String> {
        if let Some(f) = &self.filters {
            if let Some(bad) = f.iter().find(|x| !spec.filter_items.contains(x)) {
                return Err(format!("filter {bad:?} is not defined for {}", spec.name));
            }
            return Ok(f.clone());
        }
        let n_f = self.n_f.unwrap_or(spec.filter_items.len());
        if n_f > spec.filter_items.len() {
            return Err(format!("n_f={n_f} exceeds the {} filter items of {}", spec.filter_items.len(), spec.name));
        }
        Ok(spec.filter_items[..n_f].to_vec())
    }
}

/// Who follows whom, read from the graph as it stood before the round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SocialView {
    pub followees: Vec<BTreeSet<ActorId>>,
    pub friends: Vec<BTreeSet<ActorId>>,
}

impl SocialView {
    pub fn from_graph(graph: &BipartiteGraph) -> Self {
        let n = graph.actor_count();
        let mut followees = vec![BTreeSet::new(); n];
        if graph.schema().action_kinds.contains(&ActionKind::Follow) {
            for e in graph.edges_of_kind(ActionKind::Follow) {
                if let Some(c) = graph.item(e.item).and_then(|i| i.creator).filter(|c| *c != e.actor) {
                    followees[e.actor.index()].insert(c);
                }
            }
        }
        let friends = (0..n)
            .map(|a| followees[a].iter().copied().filter(|b| followees[b.index()].contains(&ActorId(a as u32))).collect())
            .collect();
        SocialView { followees, friends }
    }

    pub fn preferences(&self, actor: ActorId, attrs: &Attrs) -> Preferences {
        let mut p = Preferences::from_attrs(attrs);
        if let Some(f) = self.followees.get(actor.index()) {
            p.followees = f.clone();
        }
        if let Some(f) = self.friends.get(actor.index()) {
            p.friends = f.clone();
        }
        p
    }
}

/// Per-query ranked lists and their order-preserving union.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Observation {
    /// Raw recall per query, before reranking.
    pub recalled: Vec<Vec<ItemId>>,
    /// Per-query lists after reranking.
    pub per_query: Vec<Vec<ItemId>>,
    /// First-seen union of `per_query`.
    pub items: Vec<ItemId>,
}

/// Everything an actor pipeline reads during a round. All of it is immutable.
pub struct RoundInputs<'g> {
    pub graph: &'g BipartiteGraph,
    pub spec: &'g ScenarioSpec,
    pub round: u32,
    pub snapshot: ItemSnapshot<'g>,
    pub index: &'g VectorIndex,
    /// Rendered text per item ordinal (at least the snapshot prefix).
    pub texts: &'g [String],
    /// Per snapshot item: created by a Core actor this round.
    pub core_items: &'g [bool],
    pub encoder: &'g dyn Encoder,
    pub config: &'g SragConfig,
    pub filters: &'g [FilterItem],
    pub social: &'g SocialView,
    pub memories: &'g [AgentMemory],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActorOutcome {
    pub actor: ActorId,
    pub reflection: Reflection,
    pub queries: Vec<String>,
    pub observation: Observation,
    pub actions: ActionSet,
}

/// Per-actor, per-round RNG stream derived from the master seed.
pub fn actor_rng(seed: u64, round: u32, actor: ActorId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(round) << 32) | u64::from(actor.0));
    rng
}

#[derive(Debug, Error)]
pub enum ActorFailure {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

impl ActorFailure {
    pub fn is_backend(&self) -> bool {
        matches!(self, ActorFailure::Agent(AgentError::Backend(_)) | ActorFailure::Encoder(EncoderError::Backend(_)))
    }
}

/// query → recall → rerank → decide for one actor.
pub fn run_actor(
    inputs: &RoundInputs<'_>,
    policy: &dyn AgentPolicy,
    actor: ActorId,
    rng: &mut ChaCha8Rng,
) -> Result<ActorOutcome, ActorFailure> {
    let node = inputs.graph.actor(actor).expect("active actor exists");
    let empty = AgentMemory::default();
    let memory = inputs.memories.get(actor.index()).unwrap_or(&empty);
    let ctx = ActorContext { id: actor, node, memory, round: inputs.round, spec: inputs.spec };
    let q = policy.make_queries(&ctx, rng)?;
    let prefs = inputs.social.preferences(actor, &node.attrs);
    let mut observation = Observation::default();
    let mut seen = HashSet::new();
    if !q.queries.is_empty() {
        let vectors = inputs.encoder.encode(&q.queries)?;
        for v in &vectors {
            let recalled: Vec<ItemId> = recall(inputs.index, v, inputs.config.n_r).into_iter().map(|s| s.item).collect();
            let ranked = if inputs.config.rerank_enabled {
                let core: Vec<bool> = recalled.iter().map(|i| inputs.core_items.get(i.index()).copied().unwrap_or(false)).collect();
                let scores: Vec<usize> = recalled
                    .iter()
                    .map(|i| inputs.snapshot.get(*i).map_or(0, |it| filter_score(it, &prefs, inputs.filters)))
                    .collect();
                rerank(&recalled, &core, &scores)
            } else {
                recalled.clone()
            };
            for id in &ranked {
                if seen.insert(*id) {
                    observation.items.push(*id);
                }
            }
            observation.recalled.push(recalled);
            observation.per_query.push(ranked);
        }
    }
    let observed = ObservedItems {
        items: observation.items.iter().filter_map(|i| inputs.snapshot.get(*i)).collect(),
        texts: observation.items.iter().map(|i| inputs.texts[i.index()].as_str()).collect(),
    };
    let mut actions = policy.decide_actions(&ctx, &observed, rng)?;
    // Closed world: only observed items may be targeted.
    let allowed: HashSet<ItemId> = observation.items.iter().copied().collect();
    let before = actions.targets.len();
    actions.targets.retain(|t| allowed.contains(&t.item) && inputs.spec.action_kinds.contains(&t.kind));
    actions.warnings += (before - actions.targets.len()) as u32;
    if inputs.spec.creation_kind.is_none() {
        actions.new_item = None;
    }
    if actions.new_item.is_none() {
        actions.co_creators.clear();
    }
    actions.co_creators.retain(|c| *c != actor && c.index() < inputs.graph.actor_count());
    Ok(ActorOutcome { actor, reflection: q.reflection, queries: q.queries, observation, actions })
}

/// Where a delta edge points: an existing snapshot item or the n-th new item
/// of this round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ItemRef {
    Existing(ItemId),
    New(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingEdge {
    pub actor: ActorId,
    pub item: ItemRef,
    pub kind: ActionKind,
}

/// The round's deltas (new items with attributes, new edges), plus each
/// actor's outcome and the actors that failed.
#[derive(Debug, Default)]
pub struct RoundDeltas {
    pub new_items: Vec<(ActorId, Attrs)>,
    pub edges: Vec<PendingEdge>,
    pub outcomes: Vec<ActorOutcome>,
    pub failures: Vec<(ActorId, ActorFailure)>,
}

impl RoundDeltas {
    /// Assembles deltas in actor-ordinal order from per-actor results.
    pub fn collect(spec: &ScenarioSpec, results: Vec<(ActorId, Result<ActorOutcome, ActorFailure>)>) -> Self {
        let mut deltas = RoundDeltas::default();
        let mut results = results;
        results.sort_by_key(|(a, _)| *a);
        for (actor, result) in results {
            match result {
                Ok(outcome) => {
                    if let (Some(attrs), Some(kind)) = (&outcome.actions.new_item, spec.creation_kind) {
                        let idx = deltas.new_items.len();
                        deltas.new_items.push((actor, attrs.clone()));
                        deltas.edges.push(PendingEdge { actor, item: ItemRef::New(idx), kind });
                        for c in &outcome.actions.co_creators {
                            deltas.edges.push(PendingEdge { actor: *c, item: ItemRef::New(idx), kind });
                        }
                    }
                    for t in &outcome.actions.targets {
                        deltas.edges.push(PendingEdge { actor, item: ItemRef::Existing(t.item), kind: t.kind });
                    }
                    deltas.outcomes.push(outcome);
                }
                Err(e) => {
                    log::warn!("actor {} skipped in round: {e}", actor.0);
                    deltas.failures.push((actor, e));
                }
            }
        }
        deltas
    }
}

/// Runs every active actor's pipeline, on `pool` when given. Results come
/// back in `active` order.
pub fn run_actors(
    inputs: &RoundInputs<'_>,
    policy: &dyn AgentPolicy,
    active: &[ActorId],
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> Vec<(ActorId, Result<ActorOutcome, ActorFailure>)> {
    let work = |a: &ActorId| {
        let mut rng = actor_rng(seed, inputs.round, *a);
        (*a, run_actor(inputs, policy, *a, &mut rng))
    };
    match pool {
        // One task per actor so slow actors do not serialize behind each other.
        Some(pool) => pool.install(|| active.par_iter().with_max_len(1).map(work).collect()),
        None => active.iter().map(work).collect(),
    }
}

/// [`run_actors`] followed by [`RoundDeltas::collect`]; the graph is not
/// touched.
pub fn run_round(
    inputs: &RoundInputs<'_>,
    policy: &dyn AgentPolicy,
    active: &[ActorId],
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> RoundDeltas {
    RoundDeltas::collect(inputs.spec, run_actors(inputs, policy, active, seed, pool))
}
