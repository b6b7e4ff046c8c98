//! On-disk formats: `nodes.jsonl`, `edges.tsv` and folded/baseline edge lists.
//!
//! ```text
//! nodes.jsonl   {"id":0,"kind":"actor","attrs":{..},"creator":null,"round":0,"core":"regular"}
//! edges.tsv     <actor_ordinal>\t<item_ordinal>\t<kind>\t<round>
//! folded tsv    # fold=<name> directed=<bool>        then  a3\ti7 per edge
//! baseline tsv  # baseline=<kind> directed=false nodes=<n>   then  0\t5 per edge
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    ActionKind, ActorId, Attrs, BipartiteGraph, CoreLabel, FoldedGraph, GraphError, GraphSchema, ItemId, NodeId,
    NodeKind,
};
use crate::network::Network;

pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.tsv";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: {source}")]
    Graph { path: PathBuf, line: usize, source: GraphError },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: u32,
    kind: NodeKind,
    #[serde(default)]
    attrs: Attrs,
    #[serde(default)]
    creator: Option<u32>,
    #[serde(default)]
    round: u32,
    #[serde(default)]
    core: Option<CoreLabel>,
}

/// Writes `nodes.jsonl` and `edges.tsv` into `dir`, creating it if needed.
pub fn write_graph(dir: &Path, graph: &BipartiteGraph) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let nodes_path = dir.join(NODES_FILE);
    let mut out = BufWriter::new(fs::File::create(&nodes_path).map_err(io_err(&nodes_path))?);
    for a in graph.actors() {
        let rec = NodeRecord {
            id: a.id.0,
            kind: NodeKind::Actor,
            attrs: a.attrs.clone(),
            creator: None,
            round: a.created_round,
            core: Some(a.core),
        };
        writeln!(out, "{}", serde_json::to_string(&rec).expect("node record serializes")).map_err(io_err(&nodes_path))?;
    }
    for it in graph.items() {
        let rec = NodeRecord {
            id: it.id.0,
            kind: NodeKind::Item,
            attrs: it.attrs.clone(),
            creator: it.creator.map(|c| c.0),
            round: it.created_round,
            core: None,
        };
        writeln!(out, "{}", serde_json::to_string(&rec).expect("node record serializes")).map_err(io_err(&nodes_path))?;
    }
    out.flush().map_err(io_err(&nodes_path))?;

    let edges_path = dir.join(EDGES_FILE);
    let mut out = BufWriter::new(fs::File::create(&edges_path).map_err(io_err(&edges_path))?);
    for e in graph.edges() {
        writeln!(out, "{}\t{}\t{}\t{}", e.actor.0, e.item.0, e.kind, e.round).map_err(io_err(&edges_path))?;
    }
    out.flush().map_err(io_err(&edges_path))
}

/// Reads a `nodes.jsonl` + `edges.tsv` pair. Ordinals must be dense per kind.
pub fn read_graph(nodes_path: &Path, edges_path: &Path, schema: GraphSchema) -> Result<BipartiteGraph, StoreError> {
    let parse = |line: usize, message: String| StoreError::Parse { path: nodes_path.to_path_buf(), line, message };
    let reader = BufReader::new(fs::File::open(nodes_path).map_err(io_err(nodes_path))?);
    let mut actors: Vec<(usize, NodeRecord)> = Vec::new();
    let mut items: Vec<(usize, NodeRecord)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(nodes_path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NodeRecord = serde_json::from_str(&line).map_err(|e| parse(i + 1, e.to_string()))?;
        match rec.kind {
            NodeKind::Actor => actors.push((i + 1, rec)),
            NodeKind::Item => items.push((i + 1, rec)),
        }
    }
    actors.sort_by_key(|(_, r)| r.id);
    items.sort_by_key(|(_, r)| r.id);

    let mut graph = BipartiteGraph::new(schema);
    for (expected, (line, rec)) in actors.into_iter().enumerate() {
        if rec.id as usize != expected {
            return Err(parse(line, format!("actor ids are not dense: expected {expected}, found {}", rec.id)));
        }
        graph.add_actor(rec.attrs, rec.round, rec.core.unwrap_or_default());
    }
    for (expected, (line, rec)) in items.into_iter().enumerate() {
        if rec.id as usize != expected {
            return Err(parse(line, format!("item ids are not dense: expected {expected}, found {}", rec.id)));
        }
        graph
            .add_item(rec.attrs, rec.creator.map(ActorId), rec.round)
            .map_err(|source| StoreError::Graph { path: nodes_path.to_path_buf(), line, source })?;
    }

    let reader = BufReader::new(fs::File::open(edges_path).map_err(io_err(edges_path))?);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(edges_path))?;
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = |message: String| StoreError::Parse { path: edges_path.to_path_buf(), line: line_no, message };
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let actor: u32 = fields[0].parse().map_err(|_| bad(format!("bad actor ordinal {:?}", fields[0])))?;
        let item: u32 = fields[1].parse().map_err(|_| bad(format!("bad item ordinal {:?}", fields[1])))?;
        let kind: ActionKind = fields[2].parse().map_err(bad)?;
        let round: u32 = fields[3].parse().map_err(|_| bad(format!("bad round {:?}", fields[3])))?;
        graph
            .add_edge(ActorId(actor), ItemId(item), kind, round)
            .map_err(|source| StoreError::Graph { path: edges_path.to_path_buf(), line: line_no, source })?;
    }
    Ok(graph)
}

/// Reads a run or seed directory holding `nodes.jsonl` and `edges.tsv`.
pub fn read_graph_dir(dir: &Path, schema: GraphSchema) -> Result<BipartiteGraph, StoreError> {
    read_graph(&dir.join(NODES_FILE), &dir.join(EDGES_FILE), schema)
}

pub fn write_folded(path: &Path, folded: &FoldedGraph) -> Result<(), StoreError> {
    let mut out = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    writeln!(out, "# fold={} directed={}", folded.fold, folded.is_directed()).map_err(io_err(path))?;
    for (u, v) in folded.node_pairs() {
        writeln!(out, "{u}\t{v}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn write_baseline(path: &Path, kind: &str, network: &Network) -> Result<(), StoreError> {
    let mut out = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    writeln!(
        out,
        "# baseline={kind} directed={} nodes={}",
        network.is_directed(),
        network.node_count()
    )
    .map_err(io_err(path))?;
    for &(u, v) in network.edges() {
        writeln!(out, "{u}\t{v}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// An edge list read back from a folded or baseline file.
#[derive(Clone, Debug)]
pub struct EdgeListFile {
    pub header: BTreeMap<String, String>,
    pub network: Network,
}

/// Reads either edge-list flavour. Node tokens are `a<n>`/`i<n>` ids or bare
/// integers; they are renumbered densely in sorted order. A `nodes=<n>` header
/// key (baseline files) keeps isolated nodes.
pub fn read_edge_list(path: &Path) -> Result<EdgeListFile, StoreError> {
    let reader = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    let mut header = BTreeMap::new();
    let mut raw: Vec<(NodeToken, NodeToken)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            for kv in rest.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    header.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        let bad = |message: String| StoreError::Parse { path: path.to_path_buf(), line: i + 1, message };
        let mut fields = trimmed.split('\t');
        let (Some(u), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(bad("expected 2 tab-separated fields".into()));
        };
        raw.push((NodeToken::parse(u).map_err(&bad)?, NodeToken::parse(v).map_err(&bad)?));
    }
    let directed = header.get("directed").map(|v| v == "true").unwrap_or(false);
    let declared: Option<usize> = header.get("nodes").and_then(|v| v.parse().ok());

    let mut tokens: Vec<NodeToken> = raw.iter().flat_map(|&(u, v)| [u, v]).collect();
    if let Some(n) = declared {
        tokens.extend((0..n as u64).map(NodeToken::Plain));
    }
    tokens.sort_unstable();
    tokens.dedup();
    let index = |t: &NodeToken| tokens.binary_search(t).expect("token indexed") as u32;
    let network = Network::new(tokens.len(), directed, raw.iter().map(|(u, v)| (index(u), index(v))));
    Ok(EdgeListFile { header, network })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum NodeToken {
    Plain(u64),
    Node(NodeId),
}

impl NodeToken {
    fn parse(s: &str) -> Result<Self, String> {
        if let Ok(n) = s.parse::<u64>() {
            return Ok(NodeToken::Plain(n));
        }
        s.parse::<NodeId>().map(NodeToken::Node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{fold, FoldName, FoldSpec};

    fn sample() -> BipartiteGraph {
        let mut g = BipartiteGraph::new(GraphSchema::permissive());
        let a = g.add_actor([("name".to_string(), "Ada".to_string())].into_iter().collect(), 0, CoreLabel::Core);
        let b = g.add_actor(Attrs::new(), 1, CoreLabel::Regular);
        let p = g.add_item([("title".to_string(), "T\t\"q\"".to_string())].into_iter().collect(), None, 0).unwrap();
        let q = g.add_item(Attrs::new(), Some(a), 1).unwrap();
        g.add_edge(a, q, ActionKind::Creation, 1).unwrap();
        g.add_edge(a, p, ActionKind::Citation, 1).unwrap();
        g.add_edge(b, p, ActionKind::Citation, 1).unwrap();
        g
    }

    #[test]
    fn graph_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let g = sample();
        write_graph(dir.path(), &g).unwrap();
        let back = read_graph_dir(dir.path(), GraphSchema::permissive()).unwrap();
        assert_eq!(back.actors(), g.actors());
        assert_eq!(back.items(), g.items());
        assert_eq!(back.edges(), g.edges());
        let text = fs::read_to_string(dir.path().join(NODES_FILE)).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().next().unwrap().starts_with(r#"{"id":0,"kind":"actor","attrs":{"name":"Ada"},"creator":null,"round":0,"core":"core"}"#));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        write_graph(dir.path(), &sample()).unwrap();
        let edges = dir.path().join(EDGES_FILE);
        let mut text = fs::read_to_string(&edges).unwrap();
        text.push_str("0\t1\tCitation\n");
        fs::write(&edges, text).unwrap();
        match read_graph_dir(dir.path(), GraphSchema::permissive()) {
            Err(StoreError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::write(&edges, "0\t9\tCitation\t1\n").unwrap();
        assert!(matches!(
            read_graph_dir(dir.path(), GraphSchema::permissive()),
            Err(StoreError::Graph { line: 1, source: GraphError::DanglingEndpoint(_), .. })
        ));
    }

    #[test]
    fn folded_file_reads_back_same_shape() {
        let dir = tempfile::tempdir().unwrap();
        let g = sample();
        let folded = fold(&g, &FoldSpec::builtin(FoldName::PaperCitation)).unwrap();
        let path = dir.path().join("cites.tsv");
        write_folded(&path, &folded).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# fold=PaperCitation directed=true\n"));
        let back = read_edge_list(&path).unwrap();
        assert_eq!(back.network, folded.network);

        let ring = Network::new(5, false, [(0, 1), (1, 2)]);
        let path = dir.path().join("er.tsv");
        write_baseline(&path, "ER", &ring).unwrap();
        let back = read_edge_list(&path).unwrap();
        assert_eq!(back.network, ring);
        assert_eq!(back.header["baseline"], "ER");
    }
}
