use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use folkso_core::bench::{bench_matching, BenchConfig};
use folkso_core::elastica::{
    displacement_field, energy_density, gradient_lenient, hooke_stress, stable_dt, strain, ElasticModuli,
    GradientOperator, LatticeState,
};
use folkso_core::embedding::{build_stencils, embed, Embedding, DEFAULT_STENCIL_NEIGHBORS};
use folkso_core::fsn::{
    build_fsn, degree_distribution, detect_hubs, fit_power_law, AcquaintanceWeights, Fsn, PrefixLexicon,
};
use folkso_core::ingest::{aggregate, parse_events};
use folkso_core::matching::{elasto_adaptive_match, suggest_tags, MatchConfig};
use folkso_core::metrics::{score_all, ScoredRanking};
use folkso_core::model::{FDTag, DEFAULT_TIME_SCALE};
use folkso_core::snapshot::{load_snapshot, save_snapshot, BuildConfig, Snapshot};
use log::info;
use serde_json::{json, Value};

use crate::{CliError, Command, MatchArgs, ModuliArgs, RhoMode};

/// Hub threshold reported by `build`.
const HUB_PERCENTILE: f64 = 90.0;

pub fn run(command: Command) -> Result<Value, CliError> {
    match command {
        Command::Ingest { input, output } => ingest(&input, &output),
        Command::Build { input, output, theta, seed } => build(&input, &output, theta, seed),
        Command::Embed { snapshot, output, seed } => embed_snapshot(&snapshot, &output, seed),
        Command::Deform { snapshot, snapshot_b, output, moduli, rho_mode } => {
            deform(&snapshot, &snapshot_b, output.as_deref(), moduli, rho_mode)
        }
        Command::Match { snapshot, snapshot_b, output, matching } => {
            match_snapshots(&snapshot, &snapshot_b, output.as_deref(), matching)
        }
        Command::Suggest { query, snapshot, top_k } => suggest(&query, &snapshot, top_k),
        Command::Score { pred, gold } => score(&pred, &gold),
        Command::Bench { snapshot, output, queries, seed, top_k, matching } => {
            bench(&snapshot, output.as_deref(), queries, seed, top_k, matching)
        }
        Command::FitDegree { snapshot, kmin } => fit_degree(&snapshot, kmin),
    }
}

fn ensure_distinct(output: &Path, inputs: &[&Path]) -> Result<(), CliError> {
    let canon = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
    if inputs.iter().any(|i| canon(i) == canon(output)) {
        return Err(CliError::usage(format!("--output {} would overwrite an input", output.display())));
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Data {
        code: "IoFailure".into(),
        detail: format!("{}: {e}", path.display()),
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Data {
        code: "IoFailure".into(),
        detail: format!("{}: {e}", path.display()),
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("report types serialize")
}

fn moduli(args: ModuliArgs) -> Result<ElasticModuli, CliError> {
    ElasticModuli::new(args.mu, args.lambda).map_err(|e| CliError::usage(e.to_string()))
}

fn match_config(args: MatchArgs) -> Result<MatchConfig, CliError> {
    if args.cand_m == 0 {
        return Err(CliError::usage("--cand-m must be at least 1"));
    }
    if !(args.alpha > 0.0 && args.beta > 0.0) {
        return Err(CliError::usage("--alpha and --beta must be positive"));
    }
    Ok(MatchConfig {
        alpha: args.alpha,
        beta: args.beta,
        cand_m: args.cand_m,
        moduli: moduli(args.moduli)?,
        ..MatchConfig::default()
    })
}

/// Network and coordinates of a snapshot, embedding on the fly when needed.
fn load_embedded(path: &Path) -> Result<(Snapshot, Fsn, Embedding), CliError> {
    let snap = load_snapshot(path).map_err(CliError::data)?;
    let fsn = snap.fsn().map_err(CliError::data)?;
    let emb = match &snap.embedding {
        Some(e) => e.clone(),
        None => {
            info!("{} has no embedding; computing one with seed {}", path.display(), snap.config.seed);
            embed(&fsn, snap.config.seed)
        }
    };
    Ok((snap, fsn, emb))
}

fn ingest(input: &Path, output: &Path) -> Result<Value, CliError> {
    ensure_distinct(output, &[input])?;
    let parsed = parse_events(open(input)?).map_err(CliError::data)?;
    for r in &parsed.rejected {
        log::warn!("line {}: {}", r.line, r.reason);
    }
    let tags = aggregate(&parsed.events, DEFAULT_TIME_SCALE);
    let mut text = String::new();
    for t in &tags {
        text.push_str(&serde_json::to_string(t).expect("tags serialize"));
        text.push('\n');
    }
    write(output, text.as_bytes())?;
    info!("{} events, {} rejected, {} tags", parsed.events.len(), parsed.rejected.len(), tags.len());
    Ok(json!({
        "events": parsed.events.len(),
        "rejected": to_json(&parsed.rejected),
        "tags": tags.len(),
    }))
}

fn read_tags(path: &Path) -> Result<Vec<FDTag>, CliError> {
    let mut tags = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::Data { code: "IoFailure".into(), detail: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let tag = serde_json::from_str(&line).map_err(|e| CliError::Data {
            code: "MalformedTag".into(),
            detail: format!("line {}: {e}", i + 1),
        })?;
        tags.push(tag);
    }
    Ok(tags)
}

fn build(input: &Path, output: &Path, theta: f64, seed: u64) -> Result<Value, CliError> {
    ensure_distinct(output, &[input])?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(CliError::usage(format!("--theta must lie in [0, 1], got {theta}")));
    }
    let tags = read_tags(input)?;
    let weights = AcquaintanceWeights::default();
    let fsn = build_fsn(tags, &PrefixLexicon::open(), &weights, theta).map_err(CliError::data)?;
    let config =
        BuildConfig { theta, lexicon: PrefixLexicon::NAME.into(), seed, weights, time_scale: DEFAULT_TIME_SCALE };
    save_snapshot(&Snapshot::new(&fsn, config), output).map_err(CliError::data)?;
    let hubs = detect_hubs(&fsn, HUB_PERCENTILE).map_err(CliError::data)?;
    info!("{} nodes, {} edges", fsn.len(), fsn.edges().len());
    Ok(json!({
        "nodes": fsn.len(),
        "edges": fsn.edges().len(),
        "components": fsn.components().len(),
        "hubs": hubs.iter().map(|&h| fsn.nodes()[h].label()).collect::<Vec<_>>(),
    }))
}

fn embed_snapshot(input: &Path, output: &Path, seed: u64) -> Result<Value, CliError> {
    ensure_distinct(output, &[input])?;
    let snap = load_snapshot(input).map_err(CliError::data)?;
    let fsn = snap.fsn().map_err(CliError::data)?;
    let emb = embed(&fsn, seed);
    let snap = snap.with_embedding(emb).map_err(CliError::data)?;
    save_snapshot(&snap, output).map_err(CliError::data)?;
    let emb = snap.embedding.as_ref().expect("just attached");
    Ok(json!({ "nodes": emb.len(), "cell_size": emb.cell_size(), "cells": emb.cells().len(), "seed": seed }))
}

fn deform(
    a_path: &Path,
    b_path: &Path,
    output: Option<&Path>,
    moduli_args: ModuliArgs,
    rho_mode: RhoMode,
) -> Result<Value, CliError> {
    if let Some(out) = output {
        ensure_distinct(out, &[a_path, b_path])?;
    }
    let m = moduli(moduli_args)?;
    let (_, a, ea) = load_embedded(a_path)?;
    let (_, b, eb) = load_embedded(b_path)?;

    let key = |t: &FDTag| (t.label().to_string(), t.resource().as_str().to_string());
    let index_b: BTreeMap<_, usize> = b.nodes().iter().enumerate().map(|(i, t)| (key(t), i)).collect();
    let mapping: Vec<Option<usize>> = a.nodes().iter().map(|t| index_b.get(&key(t)).copied()).collect();
    let field = displacement_field(&ea, &eb, &mapping);

    let n = a.len();
    let mut rows = Vec::with_capacity(n);
    let mut energy = 0.0;
    let mut singular = 0;
    let mut dt = None;
    if n >= 2 {
        let stencil = build_stencils(ea.coords(), DEFAULT_STENCIL_NEIGHBORS).map_err(CliError::data)?;
        let op = GradientOperator::new(&stencil);
        let grads = gradient_lenient(&field.u, &op);
        for (i, g) in grads.iter().enumerate() {
            let tensors = g.map(|g| {
                let eps = strain(&g);
                (eps, hooke_stress(&eps, &m), energy_density(&eps, &m))
            });
            match tensors {
                Some((_, _, w)) if field.matched[i] => energy += w,
                None => singular += 1,
                _ => {}
            }
            rows.push(json!({
                "label": a.nodes()[i].label(),
                "uri": a.nodes()[i].resource().as_str(),
                "matched": field.matched[i],
                "singular": tensors.is_none(),
                "u": field.u[i].as_slice(),
                "strain": tensors.map(|(e, _, _)| e.0.as_slice().to_vec()),
                "stress": tensors.map(|(_, s, _)| s.0.as_slice().to_vec()),
                "energy_density": tensors.filter(|_| field.matched[i]).map(|t| t.2),
            }));
        }
        let mut state = LatticeState::from_embedding(&ea).with_displacement(field.u.clone());
        if rho_mode == RhoMode::Impressions {
            let imps: Vec<f64> = a.nodes().iter().map(|t| t.exposition().impressions() as f64).collect();
            let mean = imps.iter().sum::<f64>() / n as f64;
            state = state.with_density(imps.iter().map(|x| x / mean).collect()).map_err(CliError::data)?;
        }
        dt = Some(stable_dt(&m, &state, &stencil));
    } else {
        singular = n;
    }
    if let Some(out) = output {
        let text: String = rows.iter().map(|r| r.to_string() + "\n").collect();
        write(out, text.as_bytes())?;
    }
    Ok(json!({
        "nodes": n,
        "matched": n - field.unmatched_count(),
        "unmatched": field.unmatched_count(),
        "singular_nodes": singular,
        "energy": energy,
        "stable_dt": dt,
        "rho_mode": format!("{rho_mode:?}").to_lowercase(),
    }))
}

fn match_snapshots(a_path: &Path, b_path: &Path, output: Option<&Path>, args: MatchArgs) -> Result<Value, CliError> {
    if let Some(out) = output {
        ensure_distinct(out, &[a_path, b_path])?;
    }
    let config = match_config(args)?;
    let (_, a, ea) = load_embedded(a_path)?;
    let (_, b, eb) = load_embedded(b_path)?;
    let c = elasto_adaptive_match((&a, &ea), (&b, &eb), &PrefixLexicon::open(), &config).map_err(CliError::data)?;
    let summary = json!({
        "sources": a.len(),
        "targets": b.len(),
        "matched": c.evaluation.matched,
        "semantic_mean": c.evaluation.semantic_mean,
        "energy": c.evaluation.energy,
        "combined": c.evaluation.combined,
        "passes": c.trace.len() - 1,
        "singular_nodes": c.singular_nodes,
    });
    if let Some(out) = output {
        let pairs: Vec<Value> = c
            .mapping
            .iter()
            .enumerate()
            .filter_map(|(s, t)| t.map(|t| (s, t)))
            .map(|(s, t)| {
                json!({
                    "source": s,
                    "source_label": a.nodes()[s].label(),
                    "target": t,
                    "target_label": b.nodes()[t].label(),
                    "score": c.pair_scores[s],
                })
            })
            .collect();
        let full = json!({ "summary": summary, "pairs": pairs, "trace": c.trace });
        write(out, (full.to_string() + "\n").as_bytes())?;
    }
    Ok(summary)
}

fn suggest(query: &str, path: &Path, top_k: usize) -> Result<Value, CliError> {
    if top_k == 0 {
        return Err(CliError::usage("--top-k must be at least 1"));
    }
    let snap = load_snapshot(path).map_err(CliError::data)?;
    let fsn = snap.fsn().map_err(CliError::data)?;
    let found = suggest_tags(&fsn, query, top_k, &PrefixLexicon::open()).map_err(CliError::data)?;
    Ok(json!({ "query": query, "suggestions": to_json(&found) }))
}

fn score(pred: &Path, gold: &Path) -> Result<Value, CliError> {
    let p = ScoredRanking::from_jsonl(open(pred)?).map_err(CliError::data)?;
    let g = ScoredRanking::from_jsonl(open(gold)?).map_err(CliError::data)?;
    Ok(to_json(&score_all(&p, &g).map_err(CliError::data)?))
}

fn bench(
    path: &Path,
    output: Option<&Path>,
    queries: usize,
    seed: u64,
    top_k: usize,
    args: MatchArgs,
) -> Result<Value, CliError> {
    if let Some(out) = output {
        ensure_distinct(out, &[path])?;
    }
    if queries == 0 || top_k == 0 {
        return Err(CliError::usage("--queries and --top-k must be at least 1"));
    }
    let config = BenchConfig { queries, seed, top_k, matching: match_config(args)? };
    let (_, fsn, emb) = load_embedded(path)?;
    info!("issuing {queries} queries against {} tags", fsn.len());
    let report = bench_matching(&fsn, &emb, &PrefixLexicon::open(), &config).map_err(CliError::data)?;
    if let Some(out) = output {
        write(out, (to_json(&report).to_string() + "\n").as_bytes())?;
    }
    Ok(json!({
        "queries": report.samples_ms.len(),
        "summary_ms": to_json(&report.summary),
        "histogram": to_json(&report.histogram),
    }))
}

fn fit_degree(path: &Path, kmin: usize) -> Result<Value, CliError> {
    let snap = load_snapshot(path).map_err(CliError::data)?;
    let fsn = snap.fsn().map_err(CliError::data)?;
    let dist = degree_distribution(&fsn);
    let alpha = fit_power_law(&fsn.degrees(), kmin).map_err(CliError::data)?;
    let tail = fsn.degrees().iter().filter(|&&k| k >= kmin).count();
    Ok(json!({
        "nodes": fsn.len(),
        "distribution": dist.iter().map(|(k, c)| (k.to_string(), *c)).collect::<BTreeMap<_, _>>(),
        "k_min": kmin,
        "tail": tail,
        "alpha": alpha,
    }))
}
