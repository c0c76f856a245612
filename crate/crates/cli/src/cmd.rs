use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use phish_core::decision::ModesConfig;
use phish_core::economics::{compute_roi, per_mode_economics, reference_points, render_cost_markdown, render_modes_markdown, CostParams};
use phish_core::eval::{
    baseline_tfidf_logreg, evaluate_dataset, exposure_baseline, linear_grid, make_splits, render_markdown,
    threshold_sweep, write_report, EvalOptions, LogRegParams, SweepAxis,
};
use phish_core::explanation::{groundedness_ab_report, render_groundedness_table, ExplanationContext};
use phish_core::message::EmailMessage;
use phish_core::redaction::Redactor;
use phish_core::retrieval::{build_index, AnnParams, HashingEmbedder, IndexItem};
use phish_core::rules::{leave_one_out, resolve_dns, rule_ablation, DnsLookup, Verdict};
use phish_core::textgen::{KeywordStub, PriceSheet};
use serde_json::json;

use crate::setup::{load_retriever, read_dataset, read_messages, write_file, PipelineArgs};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

pub fn analyze(input: &Path, args: &PipelineArgs, phase1_only: bool, explain: bool, json: bool) -> Result<(), CliError> {
    let msgs = read_messages(input)?;
    let p = args.build("analyze", phase1_only)?;
    for msg in &msgs {
        if phase1_only {
            let (dns, r) = p.analyzer.phase1(msg);
            if json {
                println!("{}", json!({ "id": msg.id, "dns": dns, "phase1": r }));
            } else {
                let fired: Vec<&str> = r.indicators.fired().map(|id| id.as_str()).collect();
                println!("{}\t{}\tscore={}\tfired={}", msg.id, r.verdict.as_str(), r.score, fired.join(","));
            }
            continue;
        }
        let a = p.analyzer.analyze(msg);
        if json {
            println!("{}", serde_json::to_string(&a)?);
            continue;
        }
        println!(
            "{}\t{}\tscore={:.1}\trationale={}\tphase1={}{}",
            msg.id,
            a.decision.verdict.as_str(),
            a.decision.display_score,
            a.decision.rationale_code,
            a.phase1.score,
            if a.degraded { "\tdegraded" } else { "" }
        );
        if explain {
            for b in &a.explanation.bullets {
                println!("  {b}");
            }
        }
    }
    Ok(())
}

pub fn redact(input: &Path, counts: bool) -> Result<(), CliError> {
    let text = if input == Path::new("-") {
        std::io::read_to_string(std::io::stdin())?
    } else {
        std::fs::read_to_string(input)?
    };
    let r = Redactor::default().redact(&text);
    print!("{}", r.redacted_text);
    if counts {
        eprintln!("{}", serde_json::to_string(&r.counts)?);
    }
    Ok(())
}

pub fn index_build(corpus: &Path, out: &Path, dimension: usize, allow_mixed: bool, seed: u64) -> Result<(), CliError> {
    let (msgs, _) = read_dataset(corpus)?;
    let redactor = Redactor::default();
    let items: Vec<IndexItem> = msgs
        .iter()
        .map(|m| IndexItem { id: m.id.clone(), text: redactor.redact(&m.content_text()).redacted_text, label: m.ground_truth })
        .collect();
    let params = AnnParams { seed, ..AnnParams::default() };
    let index = build_index(&items, &HashingEmbedder::new(dimension), params, allow_mixed)?;
    index.save(out)?;
    println!("indexed {} documents into {}", index.len(), out.display());
    Ok(())
}

pub fn index_query(index: &Path, text: Option<String>, file: Option<PathBuf>, k: usize, exact: bool) -> Result<(), CliError> {
    let text = match (text, file) {
        (Some(t), _) => t,
        (None, Some(f)) => std::fs::read_to_string(f)?,
        (None, None) => return Err(CliError::Input("give --text or --file".into())),
    };
    let r = load_retriever(index, k, exact)?;
    let hits = r.retrieve(&Redactor::default().redact(&text).redacted_text)?;
    for h in &hits.hits {
        println!("{:.4}\t{}\t{}", h.similarity, h.id, h.snippet);
    }
    Ok(())
}

fn select_split(msgs: Vec<EmailMessage>, part: SplitPart, seed: u64) -> Result<Vec<EmailMessage>, CliError> {
    let split = make_splits(&msgs, seed)?;
    let ids: BTreeSet<&String> = match part {
        SplitPart::Train => split.train.iter().collect(),
        SplitPart::Val => split.val.iter().collect(),
        SplitPart::Test => split.test.iter().collect(),
    };
    Ok(msgs.iter().filter(|m| ids.contains(&m.id)).cloned().collect())
}

pub fn evaluate(
    dataset: &Path,
    args: &PipelineArgs,
    report: Option<&Path>,
    opts: EvalOptions,
    split: Option<SplitPart>,
    baselines: bool,
) -> Result<(), CliError> {
    let (all, bytes) = read_dataset(dataset)?;
    let msgs = match split {
        Some(part) => select_split(all.clone(), part, opts.seed)?,
        None => all.clone(),
    };
    let p = args.build("evaluate", false)?;
    let manifest = p.manifest.dataset("corpus", &bytes).seed("bootstrap", opts.seed).seed("split", opts.seed);
    let (rep, preds) = evaluate_dataset(&msgs, &p.analyzer, &opts, manifest)?;
    match report {
        Some(dir) => {
            write_report(dir, &rep, &preds)?;
            println!("wrote report for {} messages to {}", rep.n, dir.display());
        }
        None => print!("{}", render_markdown(&rep)),
    }
    if baselines {
        let out = run_baselines(&all, opts.seed)?;
        match report {
            Some(dir) => write_file(dir, "baselines.json", serde_json::to_string_pretty(&out)? + "\n")?,
            None => println!("{}", serde_json::to_string_pretty(&out)?),
        }
    }
    Ok(())
}

fn run_baselines(all: &[EmailMessage], seed: u64) -> Result<serde_json::Value, CliError> {
    let train = select_split(all.to_vec(), SplitPart::Train, seed)?;
    let test = select_split(all.to_vec(), SplitPart::Test, seed)?;
    let params = LogRegParams::default();
    let raw = baseline_tfidf_logreg(&train, &test, false, &params)?;
    let redacted = baseline_tfidf_logreg(&train, &test, true, &params)?;
    let stub = KeywordStub::new(["verify", "password", "suspend", "urgent", "credit card"]);
    let exposure = exposure_baseline(&test, &stub, &PriceSheet::default())?;
    Ok(json!({ "tfidf_raw": raw, "tfidf_redacted": redacted, "exposure": exposure }))
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Input(format!("grid must be lo:hi:n, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let n: usize = n.parse().map_err(|_| bad())?;
    Ok(linear_grid(lo, hi, n))
}

pub fn sweep(dataset: &Path, args: &PipelineArgs, axis: SweepAxis, grid: Option<&str>, report: Option<&Path>) -> Result<(), CliError> {
    let (msgs, _) = read_dataset(dataset)?;
    let similarity = axis == SweepAxis::RagSimilarity;
    if similarity && args.index.is_none() {
        return Err(CliError::Input("the similarity sweep needs --index".into()));
    }
    let p = args.build("sweep", !similarity)?;
    let analyses = p.analyzer.analyze_batch(&msgs, 1)?;
    let mut scored = Vec::with_capacity(msgs.len());
    for (m, a) in msgs.iter().zip(&analyses) {
        let truth = m.ground_truth.ok_or_else(|| phish_core::Error::Unlabeled(m.id.clone()))?;
        let score = if similarity { a.stats.s_top } else { f64::from(a.phase1.score) };
        scored.push((score, truth.is_phishing()));
    }
    let grid = match grid {
        Some(g) => parse_grid(g)?,
        None if similarity => linear_grid(0.0, 0.8, 17),
        None => linear_grid(0.0, 15.0, 16),
    };
    let rep = threshold_sweep(&scored, axis, &grid)?;
    let mut md = String::from("| Threshold | Precision | Recall | F1 | FPR |\n|---:|---:|---:|---:|---:|\n");
    for r in &rep.rows {
        let m = &r.metrics;
        let _ = writeln!(md, "| {:.3} | {:.3} | {:.3} | {:.3} | {:.4} |", r.threshold, m.precision, m.recall, m.f1, m.fpr);
    }
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    let _ = writeln!(md, "\nAUROC {} AUPRC {} best F1 {:.3} at {:.3}", fmt(rep.auroc), fmt(rep.auprc), rep.best_f1, rep.best_f1_threshold);
    match report {
        Some(dir) => {
            write_file(dir, "sweep.json", serde_json::to_string_pretty(&json!({ "manifest": p.manifest, "sweep": rep }))? + "\n")?;
            write_file(dir, "sweep.md", &md)?;
        }
        None => print!("{md}"),
    }
    Ok(())
}

pub fn ablate(dataset: &Path, args: &PipelineArgs, report: Option<&Path>) -> Result<(), CliError> {
    let (msgs, _) = read_dataset(dataset)?;
    let resolver = args.resolver()?;
    let cfg = args.rule_config()?;
    let data: Vec<(EmailMessage, DnsLookup)> = msgs
        .into_iter()
        .map(|m| {
            let dns = resolve_dns(&m.from_domain, resolver.as_ref()).unwrap_or(DnsLookup::Unknown);
            (m, dns)
        })
        .collect();
    let base = rule_ablation(&data, &cfg, &BTreeSet::new())?;
    let runs = leave_one_out(&data, &cfg)?;
    let mut md = String::from("| Disabled rule | F1 | ΔF1 | Recall | FPR | Fired | Precision when fired |\n|---|---:|---:|---:|---:|---:|---:|\n");
    let _ = writeln!(md, "| (none) | {:.3} | | {:.3} | {:.4} | | |", base.metrics.strict.f1, base.metrics.strict.recall, base.metrics.strict.fpr);
    for run in &runs {
        let rule = run.disabled[0];
        let stats = base.rule_stats.iter().find(|s| s.rule == rule).expect("every enabled rule has stats");
        let m = &run.metrics.strict;
        let _ = writeln!(
            md,
            "| {} | {:.3} | {:+.3} | {:.3} | {:.4} | {} | {:.3} |",
            rule.as_str(),
            m.f1,
            m.f1 - base.metrics.strict.f1,
            m.recall,
            m.fpr,
            stats.triggered,
            stats.precision
        );
    }
    match report {
        Some(dir) => {
            write_file(dir, "ablation.json", serde_json::to_string_pretty(&json!({ "baseline": base, "leave_one_out": runs }))? + "\n")?;
            write_file(dir, "ablation.md", &md)?;
        }
        None => print!("{md}"),
    }
    Ok(())
}

pub fn roi(
    params: Option<&Path>,
    modes: Option<&Path>,
    recall: Option<f64>,
    fpr: Option<f64>,
    as_json: bool,
    report: Option<&Path>,
) -> Result<(), CliError> {
    let mut p = match params {
        Some(path) => CostParams::load(path)?,
        None => CostParams::default(),
    };
    if recall.is_some() || fpr.is_some() {
        p = p.with_operating_point(recall.unwrap_or(p.recall), fpr.unwrap_or(p.fpr));
    }
    let modes = match modes {
        Some(path) => ModesConfig::load(path)?,
        None => ModesConfig::default(),
    };
    let cost = compute_roi(&p)?;
    let per_mode = per_mode_economics(&reference_points(&modes, p.fpr), &p)?;
    let value = json!({ "params": p, "report": cost, "modes": per_mode });
    let md = format!("{}\n{}", render_cost_markdown(&p, &cost), render_modes_markdown(&per_mode));
    if let Some(dir) = report {
        write_file(dir, "roi.json", serde_json::to_string_pretty(&value)? + "\n")?;
        write_file(dir, "roi.md", &md)?;
    }
    if as_json {
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        print!("{md}");
    }
    Ok(())
}

pub fn serve(addr: &str, cfg: phish_service::ServiceConfig, args: &PipelineArgs) -> Result<(), CliError> {
    let p = args.build("serve", false)?;
    let state = phish_service::AppState::open(p.analyzer, &cfg)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(phish_service::serve(state, &cfg, addr))?;
    Ok(())
}

pub fn groundedness_ab(dataset: &Path, args: &PipelineArgs, sample: usize, report: Option<&Path>) -> Result<(), CliError> {
    let (msgs, _) = read_dataset(dataset)?;
    let p = args.build("groundedness-ab", false)?;
    let redactor = Redactor::default();
    let analyses = p.analyzer.analyze_batch(&msgs, 1)?;
    let chosen: Vec<(String, &phish_core::pipeline::Analysis)> = msgs
        .iter()
        .zip(&analyses)
        .filter(|(_, a)| a.decision.verdict != Verdict::Benign)
        .take(sample)
        .map(|(m, a)| (redactor.redact(&m.content_text()).redacted_text, a))
        .collect();
    let ctxs: Vec<ExplanationContext<'_>> = chosen
        .iter()
        .map(|(text, a)| ExplanationContext {
            phase1: &a.phase1,
            matches: &a.matches,
            chain: &a.chain,
            neighbors: &a.neighbors,
            decision: &a.decision,
            redacted_content: text,
        })
        .collect();
    let with = groundedness_ab_report(&ctxs, None, true)?;
    let without = groundedness_ab_report(&ctxs, None, false)?;
    let md = format!("{}\n{}", render_groundedness_table(&with), render_groundedness_table(&without));
    match report {
        Some(dir) => {
            let value = json!({ "manifest": p.manifest, "with_ontology": with, "without_ontology": without });
            write_file(dir, "groundedness.json", serde_json::to_string_pretty(&value)? + "\n")?;
            write_file(dir, "groundedness.md", &md)?;
        }
        None => print!("{md}"),
    }
    Ok(())
}
