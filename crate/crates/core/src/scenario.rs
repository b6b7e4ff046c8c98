//! The three simulation scenarios: scientific (SC), technological (TC) and
//! sociological (SoC) contexts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{self, AgentProfile};
use crate::graph::{
    fold, ActionKind, ActorId, Attrs, BipartiteGraph, CoreLabel, FoldName, FoldSpec, GraphError, GraphSchema, ItemId,
    ItemNode,
};
use crate::llm::{BackendError, LlmClient};
use crate::store::{self, StoreError};
use crate::template::{self, TemplateError};
use crate::vocab::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioName {
    SC,
    TC,
    SoC,
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioName::SC => "SC",
            ScenarioName::TC => "TC",
            ScenarioName::SoC => "SoC",
        })
    }
}

impl FromStr for ScenarioName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sc" => Ok(ScenarioName::SC),
            "tc" => Ok(ScenarioName::TC),
            "soc" => Ok(ScenarioName::SoC),
            _ => Err(format!("unknown scenario {s:?} (expected SC, TC or SoC)")),
        }
    }
}

/// Fine-ranking predicates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterItem {
    /// Item topic is one of the actor's topics.
    Topic,
    /// Item genres overlap the actor's preferred genres.
    Genre,
    /// Item creator is someone the actor follows.
    Follow,
    /// Item creator is a mutual follow of the actor.
    Friend,
}

impl FromStr for FilterItem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "topic" => Ok(FilterItem::Topic),
            "genre" | "genres" => Ok(FilterItem::Genre),
            "follow" => Ok(FilterItem::Follow),
            "friend" => Ok(FilterItem::Friend),
            _ => Err(format!("unknown filter item {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Termination {
    NodesReached { fold: FoldName, count: usize },
    EdgesReached { fold: FoldName, count: usize },
    Rounds { count: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfilesPerRound {
    Fixed(usize),
    /// A fraction of the current actor count, rounded up.
    Proportional(f64),
}

impl ProfilesPerRound {
    pub fn count(self, current_actors: usize) -> usize {
        match self {
            ProfilesPerRound::Fixed(n) => n,
            ProfilesPerRound::Proportional(f) => (f * current_actors as f64 - 1e-9).ceil().max(0.0) as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Templates {
    pub item: String,
    pub profile: String,
    pub action: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub actor_type: String,
    pub item_type: String,
    pub action_kinds: BTreeSet<ActionKind>,
    pub creation_kind: Option<ActionKind>,
    pub required_item_attrs: Vec<String>,
    pub templates: Templates,
    pub filter_items: Vec<FilterItem>,
    pub fold_specs: Vec<FoldName>,
    pub termination: Termination,
    pub profiles_per_round: ProfilesPerRound,
    /// Append creator names to item text.
    pub include_edge_features: bool,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Agent(#[from] agent::AgentError),
    #[error("invalid seed parameters: {0}")]
    InvalidSeed(String),
}

impl ScenarioSpec {
    pub fn builtin(name: ScenarioName) -> ScenarioSpec {
        use ActionKind::*;
        let strings = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match name {
            ScenarioName::SC => ScenarioSpec {
                name,
                actor_type: "Author".into(),
                item_type: "Paper".into(),
                action_kinds: [Creation, Citation].into_iter().collect(),
                creation_kind: Some(Creation),
                required_item_attrs: strings(&["title", "topic", "abstract"]),
                templates: Templates {
                    item: template::ITEM_SC.into(),
                    profile: template::PROFILE_SC.into(),
                    action: template::ACTION_SC.into(),
                },
                filter_items: vec![FilterItem::Topic],
                fold_specs: vec![
                    FoldName::PaperCitation,
                    FoldName::BibCoupling,
                    FoldName::CoCitation,
                    FoldName::AuthorCitation,
                    FoldName::CoAuthorship,
                ],
                termination: Termination::NodesReached { fold: FoldName::PaperCitation, count: 10_000 },
                profiles_per_round: ProfilesPerRound::Fixed(30),
                include_edge_features: true,
            },
            ScenarioName::TC => ScenarioSpec {
                name,
                actor_type: "Movie Watcher".into(),
                item_type: "Movie".into(),
                action_kinds: [Rating].into_iter().collect(),
                creation_kind: None,
                required_item_attrs: strings(&["title", "genres", "content"]),
                templates: Templates {
                    item: template::ITEM_TC.into(),
                    profile: template::PROFILE_TC.into(),
                    action: template::ACTION_TC.into(),
                },
                filter_items: vec![FilterItem::Genre],
                fold_specs: vec![FoldName::MovieRating, FoldName::UserProjection],
                termination: Termination::EdgesReached { fold: FoldName::MovieRating, count: 100_000 },
                profiles_per_round: ProfilesPerRound::Fixed(25),
                include_edge_features: false,
            },
            ScenarioName::SoC => ScenarioSpec {
                name,
                actor_type: "Twitter User".into(),
                item_type: "Tweet".into(),
                action_kinds: [Tweet, Retweet, Reply, Follow].into_iter().collect(),
                creation_kind: Some(Tweet),
                required_item_attrs: strings(&["content"]),
                templates: Templates {
                    item: template::ITEM_SOC.into(),
                    profile: template::PROFILE_SOC.into(),
                    action: template::ACTION_SOC.into(),
                },
                filter_items: vec![FilterItem::Follow, FilterItem::Topic, FilterItem::Friend],
                fold_specs: vec![FoldName::Action, FoldName::Follow, FoldName::Friend],
                termination: Termination::Rounds { count: 5 },
                profiles_per_round: ProfilesPerRound::Fixed(25),
                include_edge_features: false,
            },
        }
    }

    pub fn schema(&self) -> GraphSchema {
        GraphSchema {
            action_kinds: self.action_kinds.clone(),
            creation_kind: self.creation_kind,
            required_item_attrs: self.required_item_attrs.clone(),
        }
    }

    /// Action kinds an actor applies to existing items.
    pub fn interaction_kinds(&self) -> Vec<ActionKind> {
        self.action_kinds.iter().copied().filter(|k| Some(*k) != self.creation_kind).collect()
    }

    /// Topic vocabulary this scenario draws profiles and items from.
    pub fn topic_vocabulary<'v>(&self, vocab: &'v Vocabulary) -> &'v [String] {
        match self.name {
            ScenarioName::SC => &vocab.cs_topics,
            ScenarioName::TC => &vocab.genres,
            ScenarioName::SoC => &vocab.social_topics,
        }
    }
}

/// `check_termination`: has the configured fold or round threshold been met?
pub fn check_termination(graph: &BipartiteGraph, spec: &ScenarioSpec) -> bool {
    termination_met(graph, spec.termination)
}

pub fn termination_met(graph: &BipartiteGraph, rule: Termination) -> bool {
    match rule {
        Termination::Rounds { count } => graph.current_round() >= count,
        Termination::NodesReached { fold: name, count } => {
            fold(graph, &FoldSpec::builtin(name)).is_ok_and(|f| f.node_count() >= count)
        }
        Termination::EdgesReached { fold: name, count } => {
            fold(graph, &FoldSpec::builtin(name)).is_ok_and(|f| f.edge_count() >= count)
        }
    }
}

/// Renders an item through the scenario's item template. `creator_names`
/// carries the optional 1-hop edge feature (who wrote the item).
pub fn render_item_text(item: &ItemNode, spec: &ScenarioSpec, creator_names: &[&str]) -> Result<String, ScenarioError> {
    for required in &spec.required_item_attrs {
        if item.attrs.get(required).is_none_or(|v| v.trim().is_empty()) {
            return Err(GraphError::MissingRequiredAttr(required.clone()).into());
        }
    }
    let mut slots: BTreeMap<&str, String> = item.attrs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    slots.insert("tweet_id", item.id.0.to_string());
    slots.insert("user", creator_names.first().map(|s| s.to_string()).unwrap_or_else(|| "unknown".into()));
    let mut text = template::render(&spec.templates.item, &slots)?;
    if spec.include_edge_features && !creator_names.is_empty() {
        if !text.ends_with('\n') {
            text.push('\n');
        }
        text.push_str("Edge Feature: written by ");
        text.push_str(&creator_names.join(", "));
        text.push('\n');
    }
    Ok(text)
}

/// Names of the actors holding a creation edge on `item`, in edge order,
/// falling back to the recorded creator.
pub fn creator_names<'g>(graph: &'g BipartiteGraph, item: ItemId, creation_kind: Option<ActionKind>) -> Vec<&'g str> {
    let mut ids: Vec<ActorId> = Vec::new();
    if let Some(kind) = creation_kind {
        for e in graph.edges_of_item(item).filter(|e| e.kind == kind) {
            if !ids.contains(&e.actor) {
                ids.push(e.actor);
            }
        }
    }
    if ids.is_empty() {
        if let Some(c) = graph.item(item).and_then(|it| it.creator) {
            ids.push(c);
        }
    }
    ids.into_iter().filter_map(|a| graph.actor(a)).map(|a| a.name()).collect()
}

/// Where `B_0` comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SeedSource {
    /// A directory holding `nodes.jsonl` and `edges.tsv`.
    File { path: PathBuf },
    /// A deterministic random seed graph with exact node and edge counts.
    Synthetic { seed: u64, items: usize, actors: usize, edges: usize },
    /// Profiles and items requested from the backend.
    LlmGenerated { actors: usize, items: usize },
}

impl Default for SeedSource {
    fn default() -> Self {
        SeedSource::Synthetic { seed: 7, items: 50, actors: 10, edges: 80 }
    }
}

/// Builds the round-0 graph. `client` is only consulted for `llm-generated`.
pub fn load_seed(
    source: &SeedSource,
    spec: &ScenarioSpec,
    vocab: &Vocabulary,
    client: Option<&LlmClient>,
) -> Result<BipartiteGraph, ScenarioError> {
    match source {
        SeedSource::File { path } => Ok(store::read_graph_dir(path, spec.schema())?),
        SeedSource::Synthetic { seed, items, actors, edges } => synthetic_seed(spec, vocab, *seed, *items, *actors, *edges),
        SeedSource::LlmGenerated { actors, items } => {
            let client = client.ok_or_else(|| ScenarioError::InvalidSeed("llm-generated seed needs a backend".into()))?;
            llm_seed(spec, vocab, client, *actors, *items)
        }
    }
}

fn synthetic_seed(
    spec: &ScenarioSpec,
    vocab: &Vocabulary,
    seed: u64,
    items: usize,
    actors: usize,
    edges: usize,
) -> Result<BipartiteGraph, ScenarioError> {
    if edges > 0 && (actors == 0 || items == 0) {
        return Err(ScenarioError::InvalidSeed("edges need at least one actor and one item".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = BipartiteGraph::new(spec.schema());
    for profile in agent::vocabulary_profiles(spec, vocab, actors, &mut rng) {
        graph.add_actor(profile.to_attrs(), 0, CoreLabel::Regular);
    }
    // With a creation kind, the first min(items, edges) items get a creator and
    // a creation edge; the remaining edge budget goes to interaction edges.
    let created = match spec.creation_kind {
        Some(_) => items.min(edges),
        None => 0,
    };
    for i in 0..items {
        let creator = (i < created).then(|| ActorId((i % actors) as u32));
        // Creators post about their own interests.
        let interests = creator
            .and_then(|c| graph.actor(c))
            .map(|a| agent::preferred_topics(&a.attrs))
            .unwrap_or_default();
        let attrs = synthetic_item_on(spec, vocab, i, &interests, &mut rng);
        graph.add_item(attrs, creator, 0)?;
    }
    if let Some(kind) = spec.creation_kind {
        for i in 0..created {
            graph.add_edge(ActorId((i % actors) as u32), ItemId(i as u32), kind, 0)?;
        }
    }
    let kinds = spec.interaction_kinds();
    for _ in created..edges {
        let actor = ActorId(rng.gen_range(0..actors) as u32);
        let item = ItemId(rng.gen_range(0..items) as u32);
        let kind = *kinds.choose(&mut rng).expect("scenario defines an interaction kind");
        graph.add_edge(actor, item, kind, 0)?;
    }
    Ok(graph)
}

pub(crate) fn synthetic_item(spec: &ScenarioSpec, vocab: &Vocabulary, i: usize, rng: &mut ChaCha8Rng) -> Attrs {
    synthetic_item_on(spec, vocab, i, &[], rng)
}

/// A synthetic item whose topic comes from `interests` when given.
fn synthetic_item_on(spec: &ScenarioSpec, vocab: &Vocabulary, i: usize, interests: &[String], rng: &mut ChaCha8Rng) -> Attrs {
    let pick = |rng: &mut ChaCha8Rng, xs: &[String]| match interests.choose(rng) {
        Some(t) => t.clone(),
        None => xs.choose(rng).cloned().unwrap_or_default(),
    };
    let mut attrs = Attrs::new();
    match spec.name {
        ScenarioName::SC => {
            let topic = pick(rng, &vocab.cs_topics);
            let expertise = vocab.expertises.choose(rng).cloned().unwrap_or_default();
            attrs.insert("title".into(), format!("Advances in {topic} for {expertise} ({i})"));
            attrs.insert("topic".into(), topic.clone());
            attrs.insert(
                "abstract".into(),
                format!("We study {topic} problems through the lens of {expertise} and report results."),
            );
        }
        ScenarioName::TC => {
            let n = rng.gen_range(1..=3);
            let genres: Vec<String> = vocab.genres.choose_multiple(rng, n).cloned().collect();
            attrs.insert("title".into(), format!("Movie {i}"));
            attrs.insert("genres".into(), genres.join("|"));
            attrs.insert("content".into(), format!("A {} story.", genres.join(" and ").to_lowercase()));
        }
        ScenarioName::SoC => {
            let topic = pick(rng, &vocab.social_topics);
            attrs.insert("topic".into(), topic.clone());
            attrs.insert("content".into(), format!("Thoughts on {topic} today, post {i}"));
        }
    }
    attrs
}

fn llm_seed(
    spec: &ScenarioSpec,
    vocab: &Vocabulary,
    client: &LlmClient,
    actors: usize,
    items: usize,
) -> Result<BipartiteGraph, ScenarioError> {
    let profiles: Vec<AgentProfile> = agent::llm_profiles(client, spec, vocab, actors)?;
    let mut graph = BipartiteGraph::new(spec.schema());
    for p in &profiles {
        graph.add_actor(p.to_attrs(), 0, CoreLabel::Regular);
    }
    let generated = agent::llm_seed_items(client, spec, vocab, items)?;
    for (i, attrs) in generated.into_iter().enumerate() {
        // Seed items on a creation scenario are attributed round-robin so the
        // actor folds have something to connect.
        let creator = (spec.creation_kind.is_some() && actors > 0).then(|| ActorId((i % actors) as u32));
        let id = graph.add_item(attrs, creator, 0)?;
        if let (Some(kind), Some(c)) = (spec.creation_kind, creator) {
            graph.add_edge(c, id, kind, 0)?;
        }
    }
    Ok(graph)
}
