//! Agent-based generation of dynamic, text-attributed social graphs.
//!
//! Actors (authors, movie watchers, social media users) act on items
//! (papers, movies, tweets) over discrete rounds. Each round grows a
//! bipartite actor-item graph, from which citation, rating and follow
//! networks are folded out and measured.

pub mod agent;
pub mod baselines;
pub mod engine;
pub mod graph;
pub mod llm;
pub mod metrics;
pub mod network;
pub mod scenario;
pub mod srag;
pub mod store;
pub mod template;
pub mod vocab;
