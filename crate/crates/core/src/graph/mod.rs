//! The evolving actor–item interaction graph.
//!
//! Actors (agents) and items (papers, movies, tweets) live in two dense
//! ordinal spaces. Every interaction is a typed actor→item edge stamped with
//! the round it happened in. Nothing is ever removed: each round only appends
//! actors, items and edges, so any earlier round can be recovered as a prefix
//! view. Unipartite networks are derived on demand by [`fold`].

mod fold;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fold::{fold, FoldName, FoldRule, FoldSpec, FoldedGraph, NodeSelection};

/// Named text fields of a node. Sorted by key so serialization is stable.
pub type Attrs = BTreeMap<String, String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl ActorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Actor,
    Item,
}

/// A node of either class. Orders actors before items, then by ordinal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Actor(ActorId),
    Item(ItemId),
}

impl NodeId {
    pub fn kind(self) -> NodeKind {
        match self {
            NodeId::Actor(_) => NodeKind::Actor,
            NodeId::Item(_) => NodeKind::Item,
        }
    }

    pub fn ordinal(self) -> u32 {
        match self {
            NodeId::Actor(a) => a.0,
            NodeId::Item(i) => i.0,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Actor(a) => write!(f, "a{}", a.0),
            NodeId::Item(i) => write!(f, "i{}", i.0),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tag, rest) = s.split_at(s.len().min(1));
        let ordinal: u32 = rest.parse().map_err(|_| format!("bad node id {s:?}"))?;
        match tag {
            "a" => Ok(NodeId::Actor(ActorId(ordinal))),
            "i" => Ok(NodeId::Item(ItemId(ordinal))),
            _ => Err(format!("bad node id {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoreLabel {
    Core,
    #[default]
    Regular,
}

/// Edge labels. Which ones are legal depends on the active scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    Creation,
    Citation,
    Rating,
    Tweet,
    Retweet,
    Reply,
    Follow,
}

impl ActionKind {
    pub const ALL: [ActionKind; 7] = [
        ActionKind::Creation,
        ActionKind::Citation,
        ActionKind::Rating,
        ActionKind::Tweet,
        ActionKind::Retweet,
        ActionKind::Reply,
        ActionKind::Follow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Creation => "Creation",
            ActionKind::Citation => "Citation",
            ActionKind::Rating => "Rating",
            ActionKind::Tweet => "Tweet",
            ActionKind::Retweet => "Retweet",
            ActionKind::Reply => "Reply",
            ActionKind::Follow => "Follow",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown action kind {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorNode {
    pub id: ActorId,
    pub attrs: Attrs,
    pub core: CoreLabel,
    pub created_round: u32,
}

impl ActorNode {
    pub fn name(&self) -> &str {
        self.attrs.get("name").map(String::as_str).unwrap_or("")
    }

    /// Profile rendered as `key: value` lines, name first.
    pub fn profile_text(&self) -> String {
        let mut out = String::new();
        if let Some(name) = self.attrs.get("name") {
            out.push_str("name: ");
            out.push_str(name);
        }
        for (k, v) in self.attrs.iter().filter(|(k, _)| k.as_str() != "name") {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(k);
            out.push_str(": ");
            out.push_str(v);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemNode {
    pub id: ItemId,
    pub attrs: Attrs,
    pub creator: Option<ActorId>,
    pub created_round: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypedEdge {
    pub actor: ActorId,
    pub item: ItemId,
    pub kind: ActionKind,
    pub round: u32,
}

/// What the active scenario allows into the graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSchema {
    pub action_kinds: BTreeSet<ActionKind>,
    pub creation_kind: Option<ActionKind>,
    pub required_item_attrs: Vec<String>,
}

impl GraphSchema {
    /// Accepts every action kind and requires no item fields.
    pub fn permissive() -> Self {
        GraphSchema {
            action_kinds: ActionKind::ALL.into_iter().collect(),
            creation_kind: None,
            required_item_attrs: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("item is missing required attribute {0:?}")]
    MissingRequiredAttr(String),
    #[error("action kind {0} is not defined by the active scenario")]
    UnknownActionKind(ActionKind),
    #[error("dangling endpoint: {0}")]
    DanglingEndpoint(String),
    #[error("fold {fold:?} needs action kind {kind}, which the scenario does not define")]
    SpecScenarioMismatch { fold: FoldName, kind: ActionKind },
    #[error("item created in round {round} after an item of round {latest}")]
    RoundRegression { round: u32, latest: u32 },
}

/// `B(A, V, E)` with adjacency indexes by actor, by item and by edge kind.
#[derive(Clone, Debug)]
pub struct BipartiteGraph {
    schema: GraphSchema,
    actors: Vec<ActorNode>,
    items: Vec<ItemNode>,
    edges: Vec<TypedEdge>,
    edges_by_actor: Vec<Vec<u32>>,
    edges_by_item: Vec<Vec<u32>>,
    edges_by_kind: BTreeMap<ActionKind, Vec<u32>>,
    current_round: u32,
}

impl BipartiteGraph {
    pub fn new(schema: GraphSchema) -> Self {
        BipartiteGraph {
            schema,
            actors: Vec::new(),
            items: Vec::new(),
            edges: Vec::new(),
            edges_by_actor: Vec::new(),
            edges_by_item: Vec::new(),
            edges_by_kind: BTreeMap::new(),
            current_round: 0,
        }
    }

    pub fn schema(&self) -> &GraphSchema {
        &self.schema
    }

    pub fn current_round(&self) -> u32 {
        self.current_round
    }

    /// Marks round `k` as the one being written. Rounds never go backwards.
    pub fn begin_round(&mut self, k: u32) {
        self.current_round = self.current_round.max(k);
    }

    pub fn actors(&self) -> &[ActorNode] {
        &self.actors
    }

    pub fn items(&self) -> &[ItemNode] {
        &self.items
    }

    pub fn edges(&self) -> &[TypedEdge] {
        &self.edges
    }

    pub fn actor(&self, id: ActorId) -> Option<&ActorNode> {
        self.actors.get(id.index())
    }

    pub fn item(&self, id: ItemId) -> Option<&ItemNode> {
        self.items.get(id.index())
    }

    pub fn actor_count(&self) -> usize {
        self.actors.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges_of_actor(&self, id: ActorId) -> impl Iterator<Item = &TypedEdge> + '_ {
        self.edges_by_actor
            .get(id.index())
            .into_iter()
            .flatten()
            .map(|&e| &self.edges[e as usize])
    }

    pub fn edges_of_item(&self, id: ItemId) -> impl Iterator<Item = &TypedEdge> + '_ {
        self.edges_by_item
            .get(id.index())
            .into_iter()
            .flatten()
            .map(|&e| &self.edges[e as usize])
    }

    pub fn edges_of_kind(&self, kind: ActionKind) -> impl Iterator<Item = &TypedEdge> + '_ {
        self.edges_by_kind
            .get(&kind)
            .into_iter()
            .flatten()
            .map(|&e| &self.edges[e as usize])
    }

    pub fn add_actor(&mut self, attrs: Attrs, round: u32, core: CoreLabel) -> ActorId {
        let id = ActorId(self.actors.len() as u32);
        self.actors.push(ActorNode { id, attrs, core, created_round: round });
        self.edges_by_actor.push(Vec::new());
        self.current_round = self.current_round.max(round);
        id
    }

    pub fn set_core_label(&mut self, id: ActorId, core: CoreLabel) {
        if let Some(actor) = self.actors.get_mut(id.index()) {
            actor.core = core;
        }
    }

    pub fn add_item(&mut self, attrs: Attrs, creator: Option<ActorId>, round: u32) -> Result<ItemId, GraphError> {
        for required in &self.schema.required_item_attrs {
            if attrs.get(required).is_none_or(|v| v.trim().is_empty()) {
                return Err(GraphError::MissingRequiredAttr(required.clone()));
            }
        }
        if let Some(c) = creator {
            if c.index() >= self.actors.len() {
                return Err(GraphError::DanglingEndpoint(format!("creator actor {} does not exist", c.0)));
            }
        }
        if let Some(last) = self.items.last() {
            if round < last.created_round {
                return Err(GraphError::RoundRegression { round, latest: last.created_round });
            }
        }
        let id = ItemId(self.items.len() as u32);
        self.items.push(ItemNode { id, attrs, creator, created_round: round });
        self.edges_by_item.push(Vec::new());
        self.current_round = self.current_round.max(round);
        Ok(id)
    }

    /// Records one interaction. Duplicate edges are kept as separate records.
    pub fn add_edge(&mut self, actor: ActorId, item: ItemId, kind: ActionKind, round: u32) -> Result<(), GraphError> {
        if !self.schema.action_kinds.contains(&kind) {
            return Err(GraphError::UnknownActionKind(kind));
        }
        if actor.index() >= self.actors.len() {
            return Err(GraphError::DanglingEndpoint(format!("actor {} does not exist", actor.0)));
        }
        if item.index() >= self.items.len() {
            return Err(GraphError::DanglingEndpoint(format!("item {} does not exist", item.0)));
        }
        let e = self.edges.len() as u32;
        self.edges.push(TypedEdge { actor, item, kind, round });
        self.edges_by_actor[actor.index()].push(e);
        self.edges_by_item[item.index()].push(e);
        self.edges_by_kind.entry(kind).or_default().push(e);
        self.current_round = self.current_round.max(round);
        Ok(())
    }

    /// The item set visible during round `k`: everything created before it.
    pub fn snapshot_items(&self, k: u32) -> ItemSnapshot<'_> {
        let horizon = k.saturating_sub(1);
        let len = self.items.partition_point(|it| it.created_round <= horizon);
        ItemSnapshot { items: &self.items[..len], round: k }
    }
}

/// Read-only prefix of the item list, fixed for the duration of a round.
#[derive(Clone, Copy, Debug)]
pub struct ItemSnapshot<'g> {
    items: &'g [ItemNode],
    round: u32,
}

impl<'g> ItemSnapshot<'g> {
    pub fn items(&self) -> &'g [ItemNode] {
        self.items
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, id: ItemId) -> bool {
        id.index() < self.items.len()
    }

    pub fn get(&self, id: ItemId) -> Option<&'g ItemNode> {
        self.items.get(id.index())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc_schema() -> GraphSchema {
        GraphSchema {
            action_kinds: [ActionKind::Creation, ActionKind::Citation].into_iter().collect(),
            creation_kind: Some(ActionKind::Creation),
            required_item_attrs: vec!["title".into(), "topic".into(), "abstract".into()],
        }
    }

    fn paper(title: &str) -> Attrs {
        [("title", title), ("topic", "AI"), ("abstract", "x")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn profile(name: &str) -> Attrs {
        [("name".to_string(), name.to_string())].into_iter().collect()
    }

    #[test]
    fn first_actor_gets_ordinal_zero() {
        let mut g = BipartiteGraph::new(sc_schema());
        assert_eq!(g.add_actor(profile("p"), 0, CoreLabel::Regular), ActorId(0));
    }

    #[test]
    fn profile_batches_grow_actor_count() {
        let mut g = BipartiteGraph::new(sc_schema());
        for i in 0..29 {
            g.add_actor(profile(&format!("seed{i}")), 0, CoreLabel::Regular);
        }
        for i in 0..30 {
            g.add_actor(profile(&format!("new{i}")), 1, CoreLabel::Regular);
        }
        assert_eq!(g.actor_count(), 59);
        let before = g.actor_count();
        for i in 0..25 {
            g.add_actor(profile(&format!("soc{i}")), 2, CoreLabel::Regular);
        }
        assert_eq!(g.actor_count() - before, 25);
    }

    #[test]
    fn add_item_checks_template_and_creator() {
        let mut g = BipartiteGraph::new(sc_schema());
        assert!(g.add_item(paper("seed"), None, 0).is_ok());
        let mut missing = paper("t");
        missing.remove("abstract");
        assert_eq!(g.add_item(missing, None, 0), Err(GraphError::MissingRequiredAttr("abstract".into())));
        let mut blank = paper("t");
        blank.insert("abstract".into(), "  ".into());
        assert_eq!(g.add_item(blank, None, 0), Err(GraphError::MissingRequiredAttr("abstract".into())));
        assert!(matches!(g.add_item(paper("t"), Some(ActorId(4)), 0), Err(GraphError::DanglingEndpoint(_))));
    }

    #[test]
    fn add_edge_validates_kind_and_endpoints() {
        let mut g = BipartiteGraph::new(sc_schema());
        let a = g.add_actor(profile("author0"), 0, CoreLabel::Regular);
        for i in 0..4 {
            g.add_item(paper(&format!("p{i}")), None, 0).unwrap();
        }
        g.add_edge(a, ItemId(3), ActionKind::Citation, 1).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.add_edge(a, ItemId(3), ActionKind::Rating, 1), Err(GraphError::UnknownActionKind(ActionKind::Rating)));
        assert!(matches!(g.add_edge(a, ItemId(9), ActionKind::Citation, 1), Err(GraphError::DanglingEndpoint(_))));
        assert!(matches!(g.add_edge(ActorId(5), ItemId(0), ActionKind::Citation, 1), Err(GraphError::DanglingEndpoint(_))));
        // duplicates are kept raw
        g.add_edge(a, ItemId(3), ActionKind::Citation, 1).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.edges_of_item(ItemId(3)).count(), 2);
        assert_eq!(g.edges_of_kind(ActionKind::Citation).count(), 2);
    }

    #[test]
    fn snapshots_hide_items_of_the_current_round() {
        let mut g = BipartiteGraph::new(sc_schema());
        let a = g.add_actor(profile("a"), 0, CoreLabel::Regular);
        for i in 0..10 {
            g.add_item(paper(&format!("seed{i}")), None, 0).unwrap();
        }
        assert_eq!(g.snapshot_items(1).len(), 10);
        for round in 1..=2 {
            for i in 0..50 {
                g.add_item(paper(&format!("r{round}-{i}")), Some(a), round).unwrap();
            }
        }
        let snap2 = g.snapshot_items(2);
        assert_eq!(snap2.len(), 60);
        assert!(snap2.items().iter().all(|it| it.created_round <= 1));
        assert_eq!(g.snapshot_items(3).len(), 110);
        assert_eq!(
            g.add_item(paper("late"), None, 1),
            Err(GraphError::RoundRegression { round: 1, latest: 2 })
        );
    }

    #[test]
    fn node_id_text_round_trip() {
        for id in [NodeId::Actor(ActorId(3)), NodeId::Item(ItemId(17))] {
            assert_eq!(id.to_string().parse::<NodeId>().unwrap(), id);
        }
        assert!("x3".parse::<NodeId>().is_err());
        assert!(NodeId::Actor(ActorId(9)) < NodeId::Item(ItemId(0)));
    }
}
