use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use agentgraph::agent::ActivationPolicy;
use agentgraph::baselines::BaselineKind;
use agentgraph::engine::{self, RunManifest, SimConfig, SimError};
use agentgraph::graph::{fold as fold_graph, BipartiteGraph, FoldName, FoldSpec, GraphSchema};
use agentgraph::llm::BackendConfig;
use agentgraph::metrics::{self, DiameterOptions, EvalOptions, MmdReport};
use agentgraph::network::{DegreeMode, Network};
use agentgraph::scenario::{FilterItem, ScenarioName, ScenarioSpec};
use agentgraph::store;
use clap::ValueEnum;
use serde_json::{json, Value};
use thiserror::Error;

use crate::{EvalArgs, GraphArgs, Recipe, RunArgs, Switch};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("{0}")]
    Io(String),
}

fn sim_error(e: SimError) -> CliError {
    if e.is_backend() {
        CliError::Backend(e.to_string())
    } else {
        CliError::Config(e.to_string())
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    fs::write(path, body).map_err(io_error(path))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    write_file(path, &(serde_json::to_string_pretty(value).expect("json value serializes") + "\n"))
}

fn parse_folds(names: &[String]) -> Result<Vec<FoldName>, CliError> {
    names.iter().map(|n| n.trim().parse::<FoldName>().map_err(|_| CliError::Config(format!("unknown fold {n}")))).collect()
}

fn parse_backend(spec: &str, current: &BackendConfig, seed: u64) -> Result<BackendConfig, CliError> {
    match spec {
        "mock" => Ok(BackendConfig::Mock { seed }),
        "remote" => match current {
            BackendConfig::Remote { .. } => Ok(current.clone()),
            _ => Err(CliError::Config("--backend remote needs the remote settings (model, ...) in the config file".into())),
        },
        other => match other.strip_prefix("replay:") {
            Some(path) if !path.is_empty() => Ok(BackendConfig::Replay { path: path.into() }),
            _ => Err(CliError::Config(format!("unknown backend {other}; expected mock, remote or replay:<path>"))),
        },
    }
}

fn set_hub_rate(cfg: &mut SimConfig, h: f64) {
    cfg.srag.hub_rate = Some(h);
    if let Some(ActivationPolicy::CoreRegular { hub_rate, .. }) = &mut cfg.activation {
        *hub_rate = h;
    }
}

/// Loads the config file and applies flag overrides.
pub fn load_config(args: &RunArgs) -> Result<SimConfig, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = SimConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(d) = &args.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    if let Some(p) = args.ports {
        cfg.ports = p;
    }
    if let Some(s) = args.seed {
        cfg.rng_seed = s;
    }
    if let Some(b) = &args.backend {
        cfg.backend = parse_backend(b, &cfg.backend, cfg.rng_seed)?;
    }
    if let Some(r) = args.rounds {
        cfg.rounds = Some(r);
    }
    if let Some(n) = args.n_r {
        cfg.srag.n_r = n;
    }
    if let Some(n) = args.n_f {
        cfg.srag.n_f = Some(n);
        cfg.srag.filters = None;
    }
    if let Some(h) = args.hub_rate {
        set_hub_rate(&mut cfg, h);
    }
    if let Some(r) = args.rerank {
        cfg.srag.rerank_enabled = r == Switch::On;
    }
    if let Some(ms) = args.injected_latency_ms {
        cfg.injected_latency_ms = ms;
    }
    if let Some(f) = &args.folds {
        cfg.folds = parse_folds(f)?;
    }
    // Surface invalid combinations before any work starts.
    cfg.resolved().map_err(sim_error)?;
    Ok(cfg)
}

fn out_dir_of(cfg: &SimConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

pub fn simulate(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let out = out_dir_of(&cfg);
    let outcome = engine::run_simulation(&cfg).map_err(sim_error)?;
    engine::write_run(&out, &outcome).map_err(|e| CliError::Io(e.to_string()))?;
    let m = &outcome.manifest;
    println!(
        "{} rounds: {} actors, {} items, {} edges -> {}",
        m.rounds.len(),
        m.final_counts.actors,
        m.final_counts.items,
        m.final_counts.edges,
        out.display()
    );
    Ok(())
}

/// A stored run and the scenario it belongs to.
fn load_run(input: &GraphArgs) -> Result<(BipartiteGraph, Option<ScenarioSpec>), CliError> {
    let scenario: Option<ScenarioName> = match &input.scenario {
        Some(s) => Some(s.parse().map_err(|_| CliError::Config(format!("unknown scenario {s}")))?),
        None => {
            let path = input.run.join(engine::MANIFEST_FILE);
            match fs::read_to_string(&path) {
                Ok(text) => {
                    let m: RunManifest = serde_json::from_str(&text)
                        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                    Some(m.config.scenario)
                }
                Err(_) => None,
            }
        }
    };
    let spec = scenario.map(ScenarioSpec::builtin);
    let schema = spec.as_ref().map_or_else(GraphSchema::permissive, ScenarioSpec::schema);
    let graph = store::read_graph_dir(&input.run, schema).map_err(|e| CliError::Config(e.to_string()))?;
    Ok((graph, spec))
}

fn folds_for(input: &GraphArgs, spec: Option<&ScenarioSpec>) -> Result<Vec<FoldName>, CliError> {
    match (&input.folds, spec) {
        (Some(f), _) => parse_folds(f),
        (None, Some(s)) => Ok(s.fold_specs.clone()),
        (None, None) => Err(CliError::Config("no manifest.json in the run; pass --folds or --scenario".into())),
    }
}

fn folded(graph: &BipartiteGraph, name: FoldName) -> Result<agentgraph::graph::FoldedGraph, CliError> {
    fold_graph(graph, &FoldSpec::builtin(name)).map_err(|e| CliError::Config(e.to_string()))
}

fn command_manifest(dir: &Path, command: &str, details: Value) -> Result<(), CliError> {
    let mut m = json!({ "command": command, "version": env!("CARGO_PKG_VERSION") });
    if let (Value::Object(m), Value::Object(d)) = (&mut m, details) {
        m.extend(d);
    }
    write_json(&dir.join(format!("{command}_manifest.json")), &m)
}

pub fn fold(input: &GraphArgs) -> Result<(), CliError> {
    let (graph, spec) = load_run(input)?;
    let folds = folds_for(input, spec.as_ref())?;
    let out = input.out_dir.clone().unwrap_or_else(|| input.run.clone());
    fs::create_dir_all(&out).map_err(io_error(&out))?;
    for &name in &folds {
        let f = folded(&graph, name)?;
        let path = out.join(engine::fold_file_name(name));
        store::write_folded(&path, &f).map_err(|e| CliError::Io(e.to_string()))?;
        println!("{name}: {} nodes, {} edges -> {}", f.node_count(), f.edge_count(), path.display());
    }
    command_manifest(&out, "fold", json!({ "run": input.run, "folds": folds }))
}

fn eval_options(eval: &EvalArgs) -> Result<EvalOptions, CliError> {
    let degree_mode = match eval.degree_mode.as_str() {
        "total" => DegreeMode::Total,
        "in" => DegreeMode::In,
        "out" => DegreeMode::Out,
        other => return Err(CliError::Config(format!("unknown degree mode {other}; expected total, in or out"))),
    };
    Ok(EvalOptions {
        degree_mode,
        diameter: DiameterOptions { seed: eval.seed, ..DiameterOptions::default() },
        baseline_samples: eval.samples.max(1),
        seed: eval.seed,
    })
}

fn references(eval: &EvalArgs) -> Result<Vec<Network>, CliError> {
    eval.reference
        .iter()
        .map(|p| store::read_edge_list(p).map(|f| f.network).map_err(|e| CliError::Config(e.to_string())))
        .collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

pub fn evaluate(input: &GraphArgs, eval: &EvalArgs) -> Result<(), CliError> {
    let (graph, spec) = load_run(input)?;
    let folds = folds_for(input, spec.as_ref())?;
    let opts = eval_options(eval)?;
    let refs = references(eval)?;
    let out = input.out_dir.clone().unwrap_or_else(|| input.run.clone());
    let reference = (!refs.is_empty()).then_some(refs.as_slice());
    let report = metrics::evaluate_graph(&graph, &folds, reference, &opts, &out).map_err(|e| match e {
        metrics::ReportError::Graph(g) => CliError::Config(g.to_string()),
        io => CliError::Io(io.to_string()),
    })?;
    println!("{}", report.gem_formula);
    for f in &report.folds {
        let s = &f.structure;
        println!(
            "{}: |V|={} |E|={} c={:.4} r={} D_e={} LCC={:.3} alpha={} D_k={} valid={}",
            f.fold,
            s.node_count,
            s.edge_count,
            s.avg_clustering,
            fmt_opt(s.assortativity),
            fmt_opt(s.effective_diameter),
            s.lcc_fraction,
            fmt_opt(f.power_law.map(|p| p.alpha)),
            fmt_opt(f.power_law.map(|p| p.d_k)),
            f.valid
        );
    }
    command_manifest(&out, "evaluate", json!({ "run": input.run, "folds": folds, "seed": eval.seed, "reference": eval.reference }))
}

fn mmd_json(m: &MmdReport) -> Value {
    serde_json::to_value(m).expect("report serializes")
}

pub fn compare(input: &GraphArgs, eval: &EvalArgs) -> Result<(), CliError> {
    let (graph, spec) = load_run(input)?;
    let folds = folds_for(input, spec.as_ref())?;
    let opts = eval_options(eval)?;
    let refs = references(eval)?;
    let out = input.out_dir.clone().unwrap_or_else(|| input.run.clone());
    fs::create_dir_all(&out).map_err(io_error(&out))?;
    let mut rows = Vec::new();
    let mut csv = String::from("fold,model,avg_clustering,cc_ratio_to_model,alpha,d_k,d_k_cross,mmd_degree,mmd_clustering,mmd_spectrum,mmd_orbit,valid_fraction,gem\n");
    println!("{}", metrics::GEM_FORMULA);
    for &name in &folds {
        let generated = folded(&graph, name)?.network;
        let reference: Vec<Network> = if refs.is_empty() { vec![generated.clone()] } else { refs.clone() };
        let ref_degrees = reference[0].degree_sequence(opts.degree_mode);
        let c_gen = metrics::avg_clustering(&generated);
        let mut models: Vec<(String, Vec<Network>)> = vec![("generated".into(), vec![generated.clone()])];
        for kind in BaselineKind::ALL {
            match metrics::matched_baselines(&generated, kind, opts.baseline_samples, opts.seed) {
                Ok(nets) => {
                    let path = out.join(format!("baseline_{name}_{kind}.tsv"));
                    store::write_baseline(&path, &kind.to_string(), &nets[0]).map_err(|e| CliError::Io(e.to_string()))?;
                    models.push((kind.to_string(), nets));
                }
                Err(e) => log::warn!("{name}: no {kind} baseline: {e}"),
            }
        }
        for (model, nets) in &models {
            let report = metrics::mmd_report(nets, &reference);
            let c = nets.iter().map(metrics::avg_clustering).sum::<f64>() / nets.len() as f64;
            let fit = metrics::fit_power_law(&nets[0].degree_sequence(opts.degree_mode)).ok();
            let cross = metrics::d_k_cross(&nets[0].degree_sequence(opts.degree_mode), &ref_degrees, metrics::K_MIN).ok();
            let ratio = (c > 0.0).then(|| c_gen / c);
            writeln!(
                csv,
                "{name},{model},{c},{},{},{},{},{},{},{},{},{},{}",
                ratio.map_or(String::new(), |r| r.to_string()),
                fit.map_or(String::new(), |f| f.alpha.to_string()),
                fit.map_or(String::new(), |f| f.d_k.to_string()),
                cross.map_or(String::new(), |d| d.to_string()),
                report.mmd_degree,
                report.mmd_clustering,
                report.mmd_spectrum,
                report.mmd_orbit,
                report.valid_fraction,
                report.gem
            )
            .expect("write to string");
            println!(
                "{name} {model:>9}: c={c:.4} ratio={} MMD.D={:.4} MMD.C={:.4} MMD.S={:.4} MMD.O={:.4} Valid={:.2} GEM={:.4}",
                fmt_opt(ratio),
                report.mmd_degree,
                report.mmd_clustering,
                report.mmd_spectrum,
                report.mmd_orbit,
                report.valid_fraction,
                report.gem
            );
            rows.push(json!({
                "fold": name,
                "model": model,
                "avg_clustering": c,
                "cc_ratio_to_model": ratio,
                "power_law": fit,
                "d_k_cross": cross,
                "mmd": mmd_json(&report),
            }));
        }
    }
    write_json(&out.join("compare.json"), &json!({ "gem_formula": metrics::GEM_FORMULA, "rows": rows }))?;
    write_file(&out.join("compare.csv"), &csv)?;
    command_manifest(
        &out,
        "compare",
        json!({ "run": input.run, "folds": folds, "seed": eval.seed, "samples": opts.baseline_samples, "reference": eval.reference }),
    )
}

fn power_set(items: &[FilterItem]) -> Vec<Vec<FilterItem>> {
    (0..1u32 << items.len())
        .map(|mask| items.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, f)| *f).collect())
        .collect()
}

fn filter_label(fs: &[FilterItem]) -> String {
    if fs.is_empty() {
        return "none".into();
    }
    fs.iter().map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()).collect::<Vec<_>>().join("+")
}

/// One config per setting of the recipe, labelled.
pub fn recipe_settings(recipe: Recipe, base: &SimConfig) -> Vec<(String, SimConfig)> {
    let spec = ScenarioSpec::builtin(base.scenario);
    let with = |label: String, f: &dyn Fn(&mut SimConfig)| {
        let mut c = base.clone();
        f(&mut c);
        (label, c)
    };
    match recipe {
        Recipe::NR => [3usize, 5, 10, 20].iter().map(|&n| with(format!("n_r={n}"), &|c| c.srag.n_r = n)).collect(),
        Recipe::HubRate => [0.0, 0.1, 0.2].iter().map(|&h| with(format!("hub_rate={h:.2}"), &|c| set_hub_rate(c, h))).collect(),
        Recipe::Filters => power_set(&spec.filter_items)
            .into_iter()
            .map(|fs| {
                with(format!("filters={}", filter_label(&fs)), &|c| {
                    c.srag.filters = Some(fs.clone());
                    c.srag.n_f = None;
                    c.srag.rerank_enabled = true;
                })
            })
            .collect(),
        Recipe::Rerank => [true, false]
            .iter()
            .map(|&on| with(format!("rerank={}", if on { "on" } else { "off" }), &|c| c.srag.rerank_enabled = on))
            .collect(),
    }
}

pub fn ablate(recipe: Recipe, args: &RunArgs) -> Result<(), CliError> {
    let base = load_config(args)?;
    let spec = ScenarioSpec::builtin(base.scenario);
    let folds = if base.folds.is_empty() { spec.fold_specs.clone() } else { base.folds.clone() };
    let root = out_dir_of(&base);
    let recipe_name = recipe.to_possible_value().expect("recipes are named").get_name().to_string();
    let mut csv = String::from("setting,fold,node_count,edge_count,avg_clustering,assortativity,effective_diameter,lcc_fraction\n");
    let mut settings = Vec::new();
    for (label, mut cfg) in recipe_settings(recipe, &base) {
        let dir = root.join(label.replace(['=', '+'], "_"));
        cfg.out_dir = Some(dir.clone());
        cfg.resolved().map_err(sim_error)?;
        let outcome = engine::run_simulation(&cfg).map_err(sim_error)?;
        engine::write_run(&dir, &outcome).map_err(|e| CliError::Io(e.to_string()))?;
        for &name in &folds {
            let net = folded(&outcome.graph, name)?.network;
            let s = metrics::structure_summary(&net, &DiameterOptions { seed: cfg.rng_seed, ..DiameterOptions::default() });
            writeln!(
                csv,
                "{label},{name},{},{},{},{},{},{}",
                s.node_count,
                s.edge_count,
                s.avg_clustering,
                s.assortativity.map_or(String::new(), |v| v.to_string()),
                s.effective_diameter.map_or(String::new(), |v| v.to_string()),
                s.lcc_fraction
            )
            .expect("write to string");
            println!("{label} {name}: |V|={} |E|={} c={:.4} LCC={:.3}", s.node_count, s.edge_count, s.avg_clustering, s.lcc_fraction);
        }
        settings.push(json!({ "setting": label, "out_dir": dir }));
    }
    write_file(&root.join(format!("ablation_{recipe_name}.csv")), &csv)?;
    command_manifest(&root, "ablate", json!({ "recipe": recipe_name, "config": args.config, "settings": settings }))
}

pub fn speedup(args: &RunArgs, ports: &[usize]) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    if ports.contains(&0) {
        return Err(CliError::Config("port counts must be at least 1".into()));
    }
    let out = out_dir_of(&cfg);
    let rows = engine::measure_speedup(&cfg, ports).map_err(sim_error)?;
    let mut csv = String::from("ports,interactions,interact_ms,ms_per_interaction,reduction_pct\n");
    for r in &rows {
        writeln!(csv, "{},{},{},{},{}", r.ports, r.interactions, r.interact_ms, r.ms_per_interaction, r.reduction_pct).expect("write to string");
        println!("P={:>3}: {:.3} ms per interaction ({:.1}% lower than P=1)", r.ports, r.ms_per_interaction, r.reduction_pct);
    }
    write_file(&out.join("speedup.csv"), &csv)?;
    command_manifest(
        &out,
        "speedup",
        json!({ "config": args.config, "injected_latency_ms": cfg.injected_latency_ms, "rows": serde_json::to_value(&rows).expect("rows serialize") }),
    )
}
