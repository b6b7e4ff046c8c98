//! Projection of the bipartite graph onto actor or item networks.
//!
//! Each [`FoldSpec`] is a declarative 1-hop or 2-hop pattern over edge kinds.
//! Raw multi-edges collapse here: every folded edge set is deduplicated and
//! free of self-loops. The folded node set is the set of nodes touched by at
//! least one folded edge, in canonical order (actors, then items, by ordinal).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ActionKind, ActorId, Attrs, BipartiteGraph, GraphError, ItemId, NodeId, NodeKind};
use crate::network::{Degrees, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FoldName {
    PaperCitation,
    BibCoupling,
    CoCitation,
    AuthorCitation,
    CoAuthorship,
    MovieRating,
    UserProjection,
    Action,
    Follow,
    Friend,
}

impl FoldName {
    pub const ALL: [FoldName; 10] = [
        FoldName::PaperCitation,
        FoldName::BibCoupling,
        FoldName::CoCitation,
        FoldName::AuthorCitation,
        FoldName::CoAuthorship,
        FoldName::MovieRating,
        FoldName::UserProjection,
        FoldName::Action,
        FoldName::Follow,
        FoldName::Friend,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FoldName::PaperCitation => "PaperCitation",
            FoldName::BibCoupling => "BibCoupling",
            FoldName::CoCitation => "CoCitation",
            FoldName::AuthorCitation => "AuthorCitation",
            FoldName::CoAuthorship => "CoAuthorship",
            FoldName::MovieRating => "MovieRating",
            FoldName::UserProjection => "UserProjection",
            FoldName::Action => "Action",
            FoldName::Follow => "Follow",
            FoldName::Friend => "Friend",
        }
    }
}

impl fmt::Display for FoldName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FoldName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FoldName::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown fold {s:?}"))
    }
}

/// Which node classes a fold keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeSelection {
    Actor,
    Item,
    Both,
}

/// Edge patterns over the bipartite graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FoldRule {
    /// `p → q` when one actor has a `created` edge to `p` and a `linked`
    /// edge to `q` in the same round (the paper–author–paper 2-hop path).
    SameInteraction { created: ActionKind, linked: ActionKind },
    /// Undirected `p -- q` when the base rule has `p → r` and `q → r`.
    SharedTarget(Box<FoldRule>),
    /// Undirected `p -- q` when the base rule has `s → p` and `s → q`.
    SharedSource(Box<FoldRule>),
    /// `a → b` when `a` has any `via` edge on an item `b` holds a `created` edge to.
    ActorToCreator { via: Vec<ActionKind>, created: ActionKind },
    /// Undirected `a -- b` when both hold a `kind` edge on a common item.
    CoInteraction { kind: ActionKind },
    /// The actor–item edges of `kind`, kept as a two-class network.
    Bipartite { kind: ActionKind },
    /// Undirected `a -- b` when the base rule has both `a → b` and `b → a`.
    Mutual(Box<FoldRule>),
}

impl FoldRule {
    /// Every edge kind the pattern reads.
    pub fn kinds(&self) -> BTreeSet<ActionKind> {
        match self {
            FoldRule::SameInteraction { created, linked } => [*created, *linked].into_iter().collect(),
            FoldRule::SharedTarget(base) | FoldRule::SharedSource(base) | FoldRule::Mutual(base) => base.kinds(),
            FoldRule::ActorToCreator { via, created } => via.iter().copied().chain([*created]).collect(),
            FoldRule::CoInteraction { kind } | FoldRule::Bipartite { kind } => [*kind].into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSpec {
    pub name: FoldName,
    pub node_kind: NodeSelection,
    pub directed: bool,
    pub rule: FoldRule,
}

impl FoldSpec {
    pub fn builtin(name: FoldName) -> FoldSpec {
        use ActionKind::*;
        let citation = || FoldRule::SameInteraction { created: Creation, linked: Citation };
        let follow = || FoldRule::ActorToCreator { via: vec![Follow], created: Tweet };
        let (node_kind, directed, rule) = match name {
            FoldName::PaperCitation => (NodeSelection::Item, true, citation()),
            FoldName::BibCoupling => (NodeSelection::Item, false, FoldRule::SharedTarget(Box::new(citation()))),
            FoldName::CoCitation => (NodeSelection::Item, false, FoldRule::SharedSource(Box::new(citation()))),
            FoldName::AuthorCitation => (
                NodeSelection::Actor,
                true,
                FoldRule::ActorToCreator { via: vec![Citation], created: Creation },
            ),
            FoldName::CoAuthorship => (NodeSelection::Actor, false, FoldRule::CoInteraction { kind: Creation }),
            FoldName::MovieRating => (NodeSelection::Both, false, FoldRule::Bipartite { kind: Rating }),
            FoldName::UserProjection => (NodeSelection::Actor, false, FoldRule::CoInteraction { kind: Rating }),
            FoldName::Action => (
                NodeSelection::Actor,
                true,
                FoldRule::ActorToCreator { via: vec![Retweet, Reply, Follow], created: Tweet },
            ),
            FoldName::Follow => (NodeSelection::Actor, true, follow()),
            FoldName::Friend => (NodeSelection::Actor, false, FoldRule::Mutual(Box::new(follow()))),
        };
        FoldSpec { name, node_kind, directed, rule }
    }
}

/// `G(V^s, E^s)` plus the carried-over node text `X^{Vs}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldedGraph {
    pub fold: FoldName,
    pub nodes: Vec<NodeId>,
    pub attrs: Vec<Attrs>,
    pub network: Network,
}

impl FoldedGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.network.edge_count()
    }

    pub fn is_directed(&self) -> bool {
        self.network.is_directed()
    }

    pub fn degrees(&self) -> Degrees {
        self.network.degrees()
    }

    /// Folded edges as node-id pairs.
    pub fn node_pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.network
            .edges()
            .iter()
            .map(|&(u, v)| (self.nodes[u as usize], self.nodes[v as usize]))
    }
}

pub fn fold(graph: &BipartiteGraph, spec: &FoldSpec) -> Result<FoldedGraph, GraphError> {
    for kind in spec.rule.kinds() {
        if !graph.schema().action_kinds.contains(&kind) {
            return Err(GraphError::SpecScenarioMismatch { fold: spec.name, kind });
        }
    }
    let pairs = evaluate(graph, &spec.rule);
    debug_assert!(pairs.iter().all(|(u, v)| match spec.node_kind {
        NodeSelection::Both => true,
        NodeSelection::Actor => u.kind() == NodeKind::Actor && v.kind() == NodeKind::Actor,
        NodeSelection::Item => u.kind() == NodeKind::Item && v.kind() == NodeKind::Item,
    }));

    let nodes: Vec<NodeId> = pairs
        .iter()
        .flat_map(|&(u, v)| [u, v])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let local: HashMap<NodeId, u32> = nodes.iter().enumerate().map(|(i, &n)| (n, i as u32)).collect();
    let network = Network::new(
        nodes.len(),
        spec.directed,
        pairs.iter().map(|(u, v)| (local[u], local[v])),
    );
    let attrs = nodes
        .iter()
        .map(|n| match *n {
            NodeId::Actor(a) => graph.actors()[a.index()].attrs.clone(),
            NodeId::Item(i) => graph.items()[i.index()].attrs.clone(),
        })
        .collect();
    Ok(FoldedGraph { fold: spec.name, nodes, attrs, network })
}

/// Evaluates a rule to a deduplicated, self-loop-free pair set. Undirected
/// results are stored with the smaller node first.
fn evaluate(graph: &BipartiteGraph, rule: &FoldRule) -> BTreeSet<(NodeId, NodeId)> {
    let item = |i: ItemId| NodeId::Item(i);
    let actor = |a: ActorId| NodeId::Actor(a);
    let mut out = BTreeSet::new();
    match rule {
        FoldRule::SameInteraction { created, linked } => {
            let mut by_interaction: BTreeMap<(ActorId, u32), (Vec<ItemId>, Vec<ItemId>)> = BTreeMap::new();
            for e in graph.edges_of_kind(*created) {
                by_interaction.entry((e.actor, e.round)).or_default().0.push(e.item);
            }
            for e in graph.edges_of_kind(*linked) {
                if let Some(entry) = by_interaction.get_mut(&(e.actor, e.round)) {
                    entry.1.push(e.item);
                }
            }
            for (made, cited) in by_interaction.values() {
                for &p in made {
                    for &q in cited {
                        if p != q {
                            out.insert((item(p), item(q)));
                        }
                    }
                }
            }
        }
        FoldRule::SharedTarget(base) | FoldRule::SharedSource(base) => {
            let shared_target = matches!(rule, FoldRule::SharedTarget(_));
            let mut groups: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
            for (s, t) in evaluate(graph, base) {
                if shared_target {
                    groups.entry(t).or_default().push(s);
                } else {
                    groups.entry(s).or_default().push(t);
                }
            }
            for members in groups.values() {
                insert_clique(&mut out, members);
            }
        }
        FoldRule::ActorToCreator { via, created } => {
            let mut creators: HashMap<ItemId, Vec<ActorId>> = HashMap::new();
            for e in graph.edges_of_kind(*created) {
                creators.entry(e.item).or_default().push(e.actor);
            }
            for kind in via {
                for e in graph.edges_of_kind(*kind) {
                    for &b in creators.get(&e.item).into_iter().flatten() {
                        if b != e.actor {
                            out.insert((actor(e.actor), actor(b)));
                        }
                    }
                }
            }
        }
        FoldRule::CoInteraction { kind } => {
            let mut holders: BTreeMap<ItemId, Vec<NodeId>> = BTreeMap::new();
            for e in graph.edges_of_kind(*kind) {
                holders.entry(e.item).or_default().push(actor(e.actor));
            }
            for members in holders.values_mut() {
                members.sort_unstable();
                members.dedup();
                insert_clique(&mut out, members);
            }
        }
        FoldRule::Bipartite { kind } => {
            for e in graph.edges_of_kind(*kind) {
                out.insert((actor(e.actor), item(e.item)));
            }
        }
        FoldRule::Mutual(base) => {
            let arcs = evaluate(graph, base);
            for &(u, v) in &arcs {
                if u < v && arcs.contains(&(v, u)) {
                    out.insert((u, v));
                }
            }
        }
    }
    out
}

fn insert_clique(out: &mut BTreeSet<(NodeId, NodeId)>, members: &[NodeId]) {
    for (i, &u) in members.iter().enumerate() {
        for &v in &members[i + 1..] {
            if u != v {
                out.insert(if u < v { (u, v) } else { (v, u) });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CoreLabel, GraphSchema};

    fn graph_with(actors: usize, items: usize) -> BipartiteGraph {
        let mut g = BipartiteGraph::new(GraphSchema::permissive());
        for _ in 0..actors {
            g.add_actor(Attrs::new(), 0, CoreLabel::Regular);
        }
        for _ in 0..items {
            g.add_item(Attrs::new(), None, 0).unwrap();
        }
        g
    }

    fn fold_of(g: &BipartiteGraph, name: FoldName) -> FoldedGraph {
        fold(g, &FoldSpec::builtin(name)).unwrap()
    }

    #[test]
    fn bib_coupling_of_two_papers_sharing_a_reference() {
        use ActionKind::*;
        let mut g = graph_with(2, 3);
        // actor0 writes p0 citing r2, actor1 writes p1 citing r2
        g.add_edge(ActorId(0), ItemId(0), Creation, 1).unwrap();
        g.add_edge(ActorId(0), ItemId(2), Citation, 1).unwrap();
        g.add_edge(ActorId(1), ItemId(1), Creation, 1).unwrap();
        g.add_edge(ActorId(1), ItemId(2), Citation, 1).unwrap();
        let bib = fold_of(&g, FoldName::BibCoupling);
        assert_eq!(bib.edge_count(), 1);
        assert_eq!(bib.node_pairs().collect::<Vec<_>>(), vec![(NodeId::Item(ItemId(0)), NodeId::Item(ItemId(1)))]);
        let cites = fold_of(&g, FoldName::PaperCitation);
        assert_eq!(cites.edge_count(), 2);
        assert!(cites.is_directed());
    }

    #[test]
    fn doubled_citation_folds_to_one_edge() {
        use ActionKind::*;
        let mut g = graph_with(1, 2);
        g.add_edge(ActorId(0), ItemId(0), Creation, 1).unwrap();
        g.add_edge(ActorId(0), ItemId(1), Citation, 1).unwrap();
        g.add_edge(ActorId(0), ItemId(1), Citation, 1).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(fold_of(&g, FoldName::PaperCitation).edge_count(), 1);
    }

    #[test]
    fn friend_requires_mutual_follow() {
        use ActionKind::*;
        let mut g = graph_with(3, 3);
        for a in 0..3 {
            g.add_edge(ActorId(a), ItemId(a), Tweet, 0).unwrap();
        }
        g.add_edge(ActorId(0), ItemId(1), Follow, 1).unwrap();
        g.add_edge(ActorId(1), ItemId(0), Follow, 1).unwrap();
        g.add_edge(ActorId(0), ItemId(2), Follow, 1).unwrap();
        let friend = fold_of(&g, FoldName::Friend);
        assert_eq!(
            friend.node_pairs().collect::<Vec<_>>(),
            vec![(NodeId::Actor(ActorId(0)), NodeId::Actor(ActorId(1)))]
        );
        assert_eq!(fold_of(&g, FoldName::Follow).edge_count(), 3);
    }

    #[test]
    fn self_citation_drops_the_loop() {
        use ActionKind::*;
        let mut g = graph_with(1, 2);
        g.add_edge(ActorId(0), ItemId(0), Creation, 1).unwrap();
        g.add_edge(ActorId(0), ItemId(1), Creation, 2).unwrap();
        g.add_edge(ActorId(0), ItemId(0), Citation, 2).unwrap();
        assert_eq!(fold_of(&g, FoldName::AuthorCitation).edge_count(), 0);
        assert_eq!(fold_of(&g, FoldName::PaperCitation).edge_count(), 1);
    }

    #[test]
    fn scenario_mismatch_is_rejected() {
        let mut schema = GraphSchema::permissive();
        schema.action_kinds = [ActionKind::Rating].into_iter().collect();
        let g = BipartiteGraph::new(schema);
        assert_eq!(
            fold(&g, &FoldSpec::builtin(FoldName::PaperCitation)),
            Err(GraphError::SpecScenarioMismatch { fold: FoldName::PaperCitation, kind: ActionKind::Creation })
        );
        assert!(fold(&g, &FoldSpec::builtin(FoldName::UserProjection)).is_ok());
    }

    #[test]
    fn movie_rating_keeps_both_classes() {
        let mut g = graph_with(2, 2);
        g.add_edge(ActorId(0), ItemId(1), ActionKind::Rating, 1).unwrap();
        g.add_edge(ActorId(1), ItemId(1), ActionKind::Rating, 1).unwrap();
        let mr = fold_of(&g, FoldName::MovieRating);
        assert_eq!(mr.nodes, vec![NodeId::Actor(ActorId(0)), NodeId::Actor(ActorId(1)), NodeId::Item(ItemId(1))]);
        assert_eq!(mr.edge_count(), 2);
        let up = fold_of(&g, FoldName::UserProjection);
        assert_eq!(up.edge_count(), 1);
    }

    #[test]
    fn folded_friend_degrees_satisfy_handshake() {
        use ActionKind::*;
        let mut g = graph_with(6, 6);
        for a in 0..6 {
            g.add_edge(ActorId(a), ItemId(a), Tweet, 0).unwrap();
        }
        for (a, b) in [(0, 1), (1, 0), (1, 2), (2, 1), (2, 0), (0, 2), (3, 4), (4, 3), (5, 0)] {
            g.add_edge(ActorId(a), ItemId(b), Follow, 1).unwrap();
        }
        let friend = fold_of(&g, FoldName::Friend);
        let sum: usize = friend.degrees().total.iter().sum();
        assert_eq!(sum, 2 * friend.edge_count());
        assert_eq!(friend.edge_count(), 4);
    }

    #[test]
    fn degree_examples() {
        let tri = Network::new(3, false, [(0, 1), (1, 2), (0, 2)]);
        assert_eq!(tri.degrees().total, vec![2, 2, 2]);
        let star = Network::new(5, false, (1..5).map(|i| (0, i)));
        assert_eq!(star.degrees().total, vec![4, 1, 1, 1, 1]);
    }
}
