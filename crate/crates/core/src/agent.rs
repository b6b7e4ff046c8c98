//! Actor profiles, memory, activation and the decision layer.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::graph::{ActionKind, ActorId, ActorNode, Attrs, CoreLabel, ItemId, ItemNode};
use crate::llm::{self, system_prompt, ActionSchema, BackendError, LlmClient, ObservedRef, ParseError, Task};
use crate::scenario::{ScenarioName, ScenarioSpec};
use crate::template;
use crate::vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable response after {attempts} attempts: {source}")]
    Parse { attempts: u32, source: ParseError },
    #[error(transparent)]
    Template(#[from] template::TemplateError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub name: String,
    pub attributes: Attrs,
}

impl AgentProfile {
    /// Node attributes: the profile fields plus `name`.
    pub fn to_attrs(&self) -> Attrs {
        let mut attrs = self.attributes.clone();
        attrs.insert("name".into(), self.name.clone());
        attrs
    }
}

/// Topic or genre preferences recorded on an actor.
pub fn preferred_topics(attrs: &Attrs) -> Vec<String> {
    ["topics", "genres"]
        .iter()
        .filter_map(|k| attrs.get(*k))
        .flat_map(|v| v.split([',', '|']).map(str::trim).filter(|t| !t.is_empty()).map(str::to_string))
        .collect()
}

/// Topic tokens of an item: its `topic`, or its `genres`.
pub fn item_topics(item: &ItemNode) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for key in ["topic", "genres"] {
        if let Some(v) = item.attrs.get(key) {
            out.extend(v.split([',', '|']).map(str::trim).filter(|t| !t.is_empty()).map(str::to_string));
        }
    }
    out
}

/// Vocabulary entries mentioned in `text`, in vocabulary order.
pub fn vocabulary_matches(text: &str, vocabulary: &[String]) -> Vec<String> {
    let tokens: Vec<String> =
        text.split(|c: char| !c.is_alphanumeric() && c != '-').filter(|t| !t.is_empty()).map(str::to_lowercase).collect();
    vocabulary.iter().filter(|v| tokens.contains(&v.to_lowercase())).cloned().collect()
}

/// Profiles drawn from the seeded vocabularies; no backend involved.
pub fn vocabulary_profiles(spec: &ScenarioSpec, vocab: &Vocabulary, count: usize, rng: &mut ChaCha8Rng) -> Vec<AgentProfile> {
    let pick = |rng: &mut ChaCha8Rng, xs: &[String]| xs.choose(rng).cloned().unwrap_or_default();
    let some = |rng: &mut ChaCha8Rng, xs: &[String], max: usize| {
        let n = rng.gen_range(1..=max.min(xs.len()).max(1));
        xs.choose_multiple(rng, n).cloned().collect::<Vec<_>>().join(", ")
    };
    (0..count)
        .map(|_| {
            let mut attributes = Attrs::new();
            let name = format!("{} {}", pick(rng, &vocab.first_names), pick(rng, &vocab.last_names));
            match spec.name {
                ScenarioName::SC => {
                    attributes.insert("expertises".into(), some(rng, &vocab.expertises, 2));
                    let inst = rng.gen_range(0..vocab.institutions.len().max(1));
                    attributes.insert("institution".into(), vocab.institutions.get(inst).cloned().unwrap_or_default());
                    let country = vocab.countries.get(inst % vocab.countries.len().max(1)).cloned().unwrap_or_default();
                    attributes.insert("country".into(), country);
                    attributes.insert("topics".into(), some(rng, &vocab.cs_topics, 3));
                }
                ScenarioName::TC => {
                    attributes.insert("gender".into(), if rng.gen_bool(0.5) { "F" } else { "M" }.into());
                    attributes.insert("age".into(), rng.gen_range(18..=70).to_string());
                    attributes.insert("job".into(), pick(rng, &vocab.jobs));
                    attributes.insert("genres".into(), some(rng, &vocab.genres, 3));
                }
                ScenarioName::SoC => {
                    let topics = some(rng, &vocab.social_topics, 2);
                    let kind = if rng.gen_bool(0.1) { "a very large account" } else { "an ordinary user" };
                    attributes.insert("description".into(), format!("{kind} who posts about {}", topics.replace(", ", " and ")));
                    attributes.insert("topics".into(), topics);
                }
            }
            AgentProfile { name, attributes }
        })
        .collect()
}

/// Where new profiles come from.
pub enum ProfileSource<'a> {
    Vocabulary,
    Llm { client: &'a LlmClient, retries: u32 },
}

pub fn generate_profiles(
    source: &ProfileSource<'_>,
    spec: &ScenarioSpec,
    vocab: &Vocabulary,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AgentProfile>, AgentError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    match source {
        ProfileSource::Vocabulary => Ok(vocabulary_profiles(spec, vocab, count, rng)),
        ProfileSource::Llm { client, retries } => llm_profiles_with(client, spec, vocab, count, *retries),
    }
}

pub fn llm_profiles(client: &LlmClient, spec: &ScenarioSpec, vocab: &Vocabulary, count: usize) -> Result<Vec<AgentProfile>, AgentError> {
    llm_profiles_with(client, spec, vocab, count, 2)
}

fn join_list(v: Option<&Value>) -> String {
    match v {
        Some(Value::Array(xs)) => xs.iter().filter_map(|x| x.as_str().map(str::trim)).collect::<Vec<_>>().join(", "),
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Number(n)) => n.to_string(),
        _ => String::new(),
    }
}

fn profile_from_json(v: &Value, spec: &ScenarioSpec, vocab: &Vocabulary, ordinal: usize) -> Option<AgentProfile> {
    let obj = v.as_object()?;
    let field = |k: &str| join_list(obj.get(k));
    let mut attributes = Attrs::new();
    let name = match spec.name {
        ScenarioName::SC => {
            let name = field("name");
            attributes.insert("expertises".into(), field("expertises"));
            attributes.insert("institution".into(), field("institution"));
            attributes.insert("country".into(), field("country"));
            // Keep only topics from the configured vocabulary.
            let mut topics = vocabulary_matches(&field("topics"), &vocab.cs_topics);
            if topics.is_empty() {
                topics.extend(vocab.cs_topics.get(ordinal % vocab.cs_topics.len().max(1)).cloned());
            }
            attributes.insert("topics".into(), topics.join(", "));
            name
        }
        ScenarioName::TC => {
            for k in ["gender", "age", "job"] {
                attributes.insert(k.into(), field(k));
            }
            format!("watcher {}", ordinal + 1)
        }
        ScenarioName::SoC => {
            let description = field("user description");
            attributes.insert("topics".into(), vocabulary_matches(&description, &vocab.social_topics).join(", "));
            attributes.insert("description".into(), description);
            field("user name")
        }
    };
    (!name.trim().is_empty()).then_some(AgentProfile { name, attributes })
}

fn llm_profiles_with(
    client: &LlmClient,
    spec: &ScenarioSpec,
    vocab: &Vocabulary,
    count: usize,
    retries: u32,
) -> Result<Vec<AgentProfile>, AgentError> {
    let mut profiles = Vec::with_capacity(count);
    let mut attempts = 0;
    let mut last = ParseError::NoStructuredBlock;
    while profiles.len() < count && attempts <= retries {
        let want = count - profiles.len();
        let mut slots = BTreeMap::new();
        slots.insert("num", want.to_string());
        slots.insert("expertises", vocab.expertises.join(", "));
        slots.insert("topics", spec.topic_vocabulary(vocab).join(", "));
        slots.insert("countries", vocab.countries.join(", "));
        let mut user = template::render(&spec.templates.profile, &slots)?;
        if attempts > 0 {
            user.push_str(llm::REPAIR_SUFFIX);
        }
        attempts += 1;
        let text = client.chat(&system_prompt(Task::Profiles, spec.name, Some(want)), &user)?;
        match llm::extract_json(&text) {
            Ok(Value::Array(list)) => {
                for v in &list {
                    if profiles.len() == count {
                        break;
                    }
                    if let Some(p) = profile_from_json(v, spec, vocab, profiles.len()) {
                        profiles.push(p);
                    }
                }
            }
            Ok(_) => last = ParseError::Shape("expected a list of profiles".into()),
            Err(e) => last = e,
        }
    }
    if profiles.len() < count {
        return Err(AgentError::Parse { attempts, source: last });
    }
    Ok(profiles)
}

/// Seed items requested from the backend.
pub fn llm_seed_items(client: &LlmClient, spec: &ScenarioSpec, vocab: &Vocabulary, count: usize) -> Result<Vec<Attrs>, AgentError> {
    let mut items = Vec::with_capacity(count);
    let mut attempts = 0;
    let mut last = ParseError::NoStructuredBlock;
    while items.len() < count && attempts <= 2 {
        let want = count - items.len();
        let mut slots = BTreeMap::new();
        slots.insert("num", want.to_string());
        slots.insert("item_type", spec.item_type.clone());
        slots.insert("topics", spec.topic_vocabulary(vocab).join(", "));
        let fields: Vec<String> = spec.required_item_attrs.iter().map(|f| format!("\"{f}\"")).collect();
        slots.insert("fields", fields.join(", "));
        let mut user = template::render(template::SEED_ITEMS, &slots)?;
        if attempts > 0 {
            user.push_str(llm::REPAIR_SUFFIX);
        }
        attempts += 1;
        let text = client.chat(&system_prompt(Task::SeedItems, spec.name, Some(want)), &user)?;
        match llm::extract_json(&text) {
            Ok(Value::Array(list)) => {
                for v in list.iter().filter_map(Value::as_object) {
                    if items.len() == count {
                        break;
                    }
                    let attrs: Attrs = v.iter().map(|(k, v)| (k.clone(), join_list(Some(v)))).collect();
                    if spec.required_item_attrs.iter().all(|r| attrs.get(r).is_some_and(|s| !s.is_empty())) {
                        items.push(attrs);
                    }
                }
            }
            Ok(_) => last = ParseError::Shape("expected a list of items".into()),
            Err(e) => last = e,
        }
    }
    if items.len() < count {
        return Err(AgentError::Parse { attempts, source: last });
    }
    Ok(items)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub round: u32,
    pub kind: ActionKind,
    pub item: ItemId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub topics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMemory {
    pub action_log: Vec<MemoryRecord>,
    pub summary: String,
    pub keywords: Vec<String>,
    pub last_reflection_round: u32,
}

impl AgentMemory {
    pub fn record(&mut self, r: MemoryRecord) {
        self.action_log.push(r);
    }

    pub fn recent(&self, window: usize) -> &[MemoryRecord] {
        &self.action_log[self.action_log.len().saturating_sub(window)..]
    }

    pub fn apply(&mut self, reflection: &Reflection, round: u32) {
        self.summary = reflection.summary.clone();
        self.keywords = reflection.keywords.clone();
        self.last_reflection_round = round;
    }

    /// Prompt rendering: the summary, then the recent actions.
    pub fn render(&self, window: usize) -> String {
        let mut out = String::new();
        if !self.summary.is_empty() {
            out.push_str("Summary: ");
            out.push_str(&self.summary);
            out.push('\n');
        }
        for r in self.recent(window) {
            out.push_str(&format!("round {}: {} item {}", r.round, r.kind, r.item.0));
            if let Some(t) = &r.title {
                out.push_str(&format!(" \"{t}\""));
            }
            if !r.topics.is_empty() {
                out.push_str(&format!(" (topic: {})", r.topics.join(", ")));
            }
            if let Some(t) = &r.text {
                out.push_str(&format!(": {t}"));
            }
            out.push('\n');
        }
        if out.is_empty() {
            out.push_str("No actions yet.\n");
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub summary: String,
    pub keywords: Vec<String>,
}

/// Frequency reflection: the `w` most frequent topic tokens over the last
/// `window` actions (ties alphabetical), padded from the profile topics.
pub fn reflect_counts(memory: &AgentMemory, profile_topics: &[String], window: usize, w: usize) -> Reflection {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in memory.recent(window) {
        for t in &r.topics {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let summary = ranked.iter().map(|(t, n)| format!("{t}:{n}")).collect::<Vec<_>>().join(" ");
    let mut keywords: Vec<String> = ranked.iter().take(w).map(|(t, _)| t.to_string()).collect();
    for t in profile_topics {
        if keywords.len() >= w {
            break;
        }
        if !keywords.contains(t) {
            keywords.push(t.clone());
        }
    }
    Reflection { summary, keywords }
}

/// `ceil(hub_rate·n)` actors with the longest histories are Core; ties go to
/// the lower ordinal.
pub fn label_core(histories: &[usize], hub_rate: f64) -> Vec<CoreLabel> {
    let n = histories.len();
    let cores = ((hub_rate.clamp(0.0, 1.0) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| histories[b].cmp(&histories[a]).then(a.cmp(&b)));
    let mut labels = vec![CoreLabel::Regular; n];
    for &i in order.iter().take(cores) {
        labels[i] = CoreLabel::Core;
    }
    labels
}

fn default_p_core() -> f64 {
    0.8
}
fn default_p_reg() -> f64 {
    0.2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ActivationPolicy {
    /// Every actor acts every round.
    All,
    RandomSample {
        count: usize,
    },
    CoreRegular {
        hub_rate: f64,
        #[serde(default = "default_p_core")]
        p_core: f64,
        #[serde(default = "default_p_reg")]
        p_reg: f64,
    },
}

impl ActivationPolicy {
    pub fn hub_rate(&self) -> Option<f64> {
        match self {
            ActivationPolicy::CoreRegular { hub_rate, .. } => Some(*hub_rate),
            _ => None,
        }
    }
}

/// Heuristic activation. Returns active actors in ascending ordinal order.
pub fn activate(policy: &ActivationPolicy, labels: &[CoreLabel], rng: &mut ChaCha8Rng) -> Vec<ActorId> {
    let n = labels.len();
    match *policy {
        ActivationPolicy::All => (0..n as u32).map(ActorId).collect(),
        ActivationPolicy::RandomSample { count } => {
            let mut picked: Vec<usize> = index::sample(rng, n, count.min(n)).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| ActorId(i as u32)).collect()
        }
        ActivationPolicy::CoreRegular { p_core, p_reg, .. } => labels
            .iter()
            .enumerate()
            .filter(|(_, l)| {
                let p = if **l == CoreLabel::Core { p_core } else { p_reg };
                rng.gen::<f64>() < p
            })
            .map(|(i, _)| ActorId(i as u32))
            .collect(),
    }
}

/// One actor's activation decision asked of the backend.
pub fn llm_activation(
    client: &LlmClient,
    spec: &ScenarioSpec,
    actor: &ActorNode,
    label: CoreLabel,
    history_len: usize,
    round: u32,
) -> Result<bool, AgentError> {
    let mut slots = BTreeMap::new();
    slots.insert("profile", actor.profile_text());
    slots.insert("label", if label == CoreLabel::Core { "core" } else { "regular" }.to_string());
    slots.insert("history", history_len.to_string());
    slots.insert("round", round.to_string());
    let user = template::render(template::ACTIVATE, &slots)?;
    let answer = client.chat(&system_prompt(Task::Activation, spec.name, None), &user)?;
    let lower = answer.to_lowercase();
    Ok(lower.contains("active") && !lower.contains("inactive"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub item: ItemId,
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// What one actor does in one round.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSet {
    /// Attributes of a newly created item, if the actor created one.
    pub new_item: Option<Attrs>,
    /// Additional creators of the new item.
    pub co_creators: Vec<ActorId>,
    pub targets: Vec<Target>,
    /// Names in the response that did not resolve to an observed item.
    pub warnings: u32,
}

/// Read-only view of one actor handed to a policy.
pub struct ActorContext<'a> {
    pub id: ActorId,
    pub node: &'a ActorNode,
    pub memory: &'a AgentMemory,
    pub round: u32,
    pub spec: &'a ScenarioSpec,
}

impl ActorContext<'_> {
    pub fn topics(&self) -> Vec<String> {
        preferred_topics(&self.node.attrs)
    }
}

/// The union observation as a policy sees it: items in order with their text.
pub struct ObservedItems<'a> {
    pub items: Vec<&'a ItemNode>,
    pub texts: Vec<&'a str>,
}

impl ObservedItems<'_> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Queries {
    pub reflection: Reflection,
    pub queries: Vec<String>,
}

/// The decision layer. Implementations must be safe to call from several
/// workers at once on different actors.
pub trait AgentPolicy: Send + Sync {
    fn make_queries(&self, ctx: &ActorContext<'_>, rng: &mut ChaCha8Rng) -> Result<Queries, AgentError>;
    fn decide_actions(
        &self,
        ctx: &ActorContext<'_>,
        observed: &ObservedItems<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<ActionSet, AgentError>;
}

fn default_cite_fraction() -> f64 {
    0.3
}
fn default_create_probability() -> f64 {
    0.5
}
fn default_max_queries() -> usize {
    3
}
fn default_max_coauthors() -> usize {
    1
}
fn default_window() -> usize {
    20
}
fn default_keywords() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    #[serde(default = "default_cite_fraction")]
    pub cite_fraction: f64,
    #[serde(default = "default_create_probability")]
    pub create_probability: f64,
    #[serde(default = "default_max_queries")]
    pub max_queries: usize,
    /// Co-creators drawn from the creators of observed items (SC only).
    #[serde(default = "default_max_coauthors")]
    pub max_coauthors: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_keywords")]
    pub keywords: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            cite_fraction: default_cite_fraction(),
            create_probability: default_create_probability(),
            max_queries: default_max_queries(),
            max_coauthors: default_max_coauthors(),
            window: default_window(),
            keywords: default_keywords(),
        }
    }
}

/// Deterministic stand-in for the LLM decision layer.
pub struct HeuristicPolicy {
    config: HeuristicConfig,
}

pub fn heuristic_policy(config: HeuristicConfig) -> HeuristicPolicy {
    HeuristicPolicy { config }
}

impl HeuristicPolicy {
    pub fn config(&self) -> &HeuristicConfig {
        &self.config
    }

    /// `ceil(cite_fraction·observed)`.
    pub fn target_count(&self, observed: usize) -> usize {
        ((self.config.cite_fraction.clamp(0.0, 1.0) * observed as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

impl AgentPolicy for HeuristicPolicy {
    fn make_queries(&self, ctx: &ActorContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Queries, AgentError> {
        let reflection = reflect_counts(ctx.memory, &ctx.topics(), self.config.window, self.config.keywords);
        let queries = reflection.keywords.iter().take(self.config.max_queries.max(1)).cloned().collect();
        Ok(Queries { reflection, queries })
    }

    fn decide_actions(
        &self,
        ctx: &ActorContext<'_>,
        observed: &ObservedItems<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<ActionSet, AgentError> {
        let spec = ctx.spec;
        let mut set = ActionSet::default();
        let kinds = spec.interaction_kinds();
        if !kinds.is_empty() {
            for item in observed.items.iter().take(self.target_count(observed.len())) {
                let kind = if kinds.len() == 1 { kinds[0] } else { kinds[rng.gen_range(0..kinds.len())] };
                set.targets.push(Target { item: item.id, kind, text: None });
            }
        }
        if spec.creation_kind.is_some() && rng.gen_bool(self.config.create_probability.clamp(0.0, 1.0)) {
            let topics = ctx.topics();
            let topic = topics.choose(rng).cloned().unwrap_or_else(|| "general".into());
            let mut attrs = Attrs::new();
            match spec.name {
                ScenarioName::SC => {
                    attrs.insert("title".into(), format!("On {topic}: round {} work by {}", ctx.round, ctx.node.name()));
                    attrs.insert("topic".into(), topic.clone());
                    attrs.insert("abstract".into(), format!("A study of {topic} building on recent {topic} results."));
                    let mut pool: Vec<ActorId> = Vec::new();
                    for item in &observed.items {
                        if let Some(c) = item.creator.filter(|c| *c != ctx.id && !pool.contains(c)) {
                            pool.push(c);
                        }
                    }
                    let n = rng.gen_range(0..=self.config.max_coauthors.min(pool.len()));
                    set.co_creators = pool.choose_multiple(rng, n).copied().collect();
                    set.co_creators.sort_unstable();
                }
                _ => {
                    attrs.insert("topic".into(), topic.clone());
                    attrs.insert("content".into(), format!("Thoughts on {topic} in round {}", ctx.round));
                }
            }
            set.new_item = Some(attrs);
        }
        Ok(set)
    }
}

fn default_parse_retries() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmPolicyConfig {
    #[serde(default = "default_max_queries")]
    pub max_queries: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_parse_retries")]
    pub parse_retries: u32,
}

impl Default for LlmPolicyConfig {
    fn default() -> Self {
        LlmPolicyConfig { max_queries: default_max_queries(), window: default_window(), parse_retries: default_parse_retries() }
    }
}

/// Decisions delegated to a chat backend through the scenario templates.
pub struct LlmPolicy {
    client: Arc<LlmClient>,
    vocab: Vocabulary,
    config: LlmPolicyConfig,
}

impl LlmPolicy {
    pub fn new(client: Arc<LlmClient>, vocab: Vocabulary, config: LlmPolicyConfig) -> Self {
        LlmPolicy { client, vocab, config }
    }

    /// Sends `user`, re-asking with a repair suffix while `parse` fails.
    fn ask<T>(
        &self,
        system: &str,
        user: &str,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, AgentError> {
        let mut prompt = user.to_string();
        let mut last = ParseError::NoStructuredBlock;
        for attempt in 0..=self.config.parse_retries {
            if attempt == 1 {
                prompt.push_str(llm::REPAIR_SUFFIX);
            }
            let text = self.client.chat(system, &prompt)?;
            match parse(&text) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::debug!("unparseable response (attempt {}): {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(AgentError::Parse { attempts: self.config.parse_retries + 1, source: last })
    }
}

impl AgentPolicy for LlmPolicy {
    fn make_queries(&self, ctx: &ActorContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Queries, AgentError> {
        let mut slots = BTreeMap::new();
        slots.insert("profile", ctx.node.profile_text());
        slots.insert("memory", ctx.memory.render(self.config.window));
        let user = template::render(template::REFLECT, &slots)?;
        let system = system_prompt(Task::Reflection, ctx.spec.name, None);
        let mut reflection = self.ask(&system, &user, |text| {
            let v = llm::extract_json(text)?;
            let summary = v.get("summary").and_then(Value::as_str).unwrap_or_default().to_string();
            let keywords = match v.get("keywords") {
                Some(Value::Array(xs)) => xs.iter().filter_map(Value::as_str).map(str::to_string).collect(),
                Some(Value::String(s)) => s.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect(),
                _ => return Err(ParseError::Shape("missing keywords".into())),
            };
            Ok(Reflection { summary, keywords })
        })?;
        if reflection.keywords.is_empty() {
            reflection.keywords = ctx.topics();
        }
        let queries = reflection.keywords.iter().take(self.config.max_queries.max(1)).cloned().collect();
        Ok(Queries { reflection, queries })
    }

    fn decide_actions(
        &self,
        ctx: &ActorContext<'_>,
        observed: &ObservedItems<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<ActionSet, AgentError> {
        let mut slots = BTreeMap::new();
        slots.insert("profile", ctx.node.profile_text());
        slots.insert("memory", ctx.memory.render(self.config.window));
        slots.insert("observation", observed.texts.join("\n"));
        let user = template::render(&ctx.spec.templates.action, &slots)?;
        let system = system_prompt(Task::Action, ctx.spec.name, None);
        let refs: Vec<ObservedRef> =
            observed.items.iter().map(|i| ObservedRef { item: i.id, title: i.attrs.get("title").cloned() }).collect();
        let schema = ActionSchema::for_scenario(ctx.spec.name);
        let mut set = self.ask(&system, &user, |text| llm::parse_action(text, schema, &refs))?;
        if ctx.spec.creation_kind.is_none() {
            set.new_item = None;
        }
        if let Some(attrs) = set.new_item.as_mut() {
            if !attrs.contains_key("topic") {
                let text = attrs.get("content").cloned().unwrap_or_default();
                let topic = vocabulary_matches(&text, ctx.spec.topic_vocabulary(&self.vocab))
                    .into_iter()
                    .next()
                    .or_else(|| ctx.topics().into_iter().next());
                if let Some(t) = topic {
                    attrs.insert("topic".into(), t);
                }
            }
        }
        Ok(set)
    }
}
