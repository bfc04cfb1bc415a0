use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use log::info;
use mrscope_core::classifier::{
    classify_with_process, read_eval_records, requests_for, responses_to_verdicts, summarize_eval,
};
use mrscope_core::impact::{run_deviation_vs_regular, run_impact, ImpactReport};
use mrscope_core::ingest::gitlab::{ClientConfig, GitLabClient};
use mrscope_core::ingest::{import_archive, write_archive};
use mrscope_core::metrics::{
    extract_all, extract_deviation_features, write_completion_csv, write_deviation_csv,
};
use mrscope_core::synth::{impact_corpus, injected_corpus};
use mrscope_core::taxonomy::{
    detect_all, diff_annotations, draw_positions, draw_sample, import_annotations, prevalence_report,
    read_verdicts, sample_size, write_annotation_template, write_verdicts, Label, RuleSet,
};
use mrscope_core::{Corpus, DeviationVerdict, Error, PrevalenceReport, Result};

use crate::config::{Backend, RunConfig};
use crate::output::Staging;
use crate::svg::bar_chart;
use crate::{AnnotateCommand, Cli, Command, SynthKind};

pub const TOKEN_VAR: &str = "MRSCOPE_TOKEN";

struct Ctx {
    config: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn resolve(&self, p: &Path) -> PathBuf {
        self.out.join(p)
    }

    fn corpus(&self, p: &Path) -> Result<Corpus> {
        let path = self.resolve(p);
        info!("reading {}", path.display());
        import_archive(&path).map_err(|e| with_path(e, &path))
    }

    fn verdicts(&self, p: &Path) -> Result<Vec<DeviationVerdict>> {
        let path = self.resolve(p);
        let file = File::open(&path).map_err(|e| with_path(e.into(), &path))?;
        read_verdicts(BufReader::new(file))
    }

    fn staging(&self) -> Result<Staging> {
        Staging::new(&self.out)
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

fn name(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Ctx { config, out };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Sample(a) => sample(&ctx, a),
        Command::Detect(a) => label(&ctx, &a.corpus, Backend::Rules, &[]),
        Command::Annotate(AnnotateCommand::Import { files }) => annotate_import(&ctx, &files),
        Command::Annotate(AnnotateCommand::Diff { first, second }) => annotate_diff(&ctx, &first, &second),
        Command::Classify(a) => {
            let backend = a.backend.unwrap_or(ctx.config.classifier.backend);
            let command = if a.command.is_empty() { ctx.config.classifier.command.clone() } else { a.command };
            label(&ctx, &a.corpus, backend, &command)
        }
        Command::Features(a) => features(&ctx, &a.corpus),
        Command::Impact(a) => impact(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
    }
}

fn parse_time(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::Config(format!("--since {s:?} is not an RFC 3339 time: {e}")))
}

/// Records in `fresh` replace those with the same key in `old`.
fn merge_corpus(old: Corpus, fresh: Corpus) -> Result<Corpus> {
    if old.meta.host.trim_end_matches('/') != fresh.meta.host.trim_end_matches('/') {
        return Err(Error::Consistency(format!(
            "existing corpus comes from {}, not {}",
            old.meta.host, fresh.meta.host
        )));
    }
    let mut records: BTreeMap<(u64, u64), _> = old.records.into_iter().map(|r| ((r.project_id, r.id), r)).collect();
    for r in fresh.records {
        records.insert((r.project_id, r.id), r);
    }
    let mut meta = fresh.meta;
    let mut projects: BTreeMap<u64, _> = old.meta.projects.into_iter().map(|p| (p.id, p)).collect();
    for p in std::mem::take(&mut meta.projects) {
        projects.insert(p.id, p);
    }
    meta.projects = projects.into_values().collect();
    let mut corpus = Corpus::new(meta, records.into_values().collect())?;
    corpus.canonicalize();
    Ok(corpus)
}

fn ingest(ctx: &Ctx, a: crate::IngestArgs) -> Result<()> {
    let api = &ctx.config.api;
    let host = a
        .host
        .or_else(|| api.host.clone())
        .ok_or_else(|| Error::Config("no forge host: pass --host or set api.host".into()))?;
    let group = a.group.or_else(|| api.group.clone()).unwrap_or_default();
    let projects = if a.projects.is_empty() { api.projects.clone() } else { a.projects };
    if projects.is_empty() {
        return Err(Error::Config("no projects: pass --project or set api.projects".into()));
    }
    let since = a.since.as_deref().map(parse_time).transpose()?;
    let token = std::env::var(TOKEN_VAR)
        .ok()
        .filter(|t| !t.is_empty())
        .ok_or_else(|| Error::Config(format!("{TOKEN_VAR} is not set")))?;

    let mut client_config = ClientConfig::new(host);
    client_config.page_size = api.page_size;
    client_config.retry.max_attempts = api.max_attempts;
    client_config.fan_out = api.fan_out;
    let client = GitLabClient::connect(client_config, token);
    let mut corpus = client.fetch_corpus(&group, &projects, since, Utc::now())?;

    let target = ctx.resolve(&a.corpus);
    if since.is_some() && target.exists() {
        let fetched = corpus.len();
        corpus = merge_corpus(import_archive(&target)?, corpus)?;
        info!("merged {fetched} updated records");
    }
    let mut staging = ctx.staging()?;
    staging.write_with(&name(&a.corpus), |buf| write_archive(&corpus, buf))?;
    staging.commit()?;
    let merged = corpus.records.iter().filter(|r| r.is_merged()).count();
    println!("{} records ({merged} merged) from {} projects", corpus.len(), corpus.meta.projects.len());
    Ok(())
}

fn sample(ctx: &Ctx, a: crate::SampleArgs) -> Result<()> {
    let s = &ctx.config.sampling;
    let seed = a.seed.unwrap_or(s.seed);
    let mut staging = ctx.staging()?;
    let corpus = match a.population {
        Some(_) => None,
        None => Some(ctx.corpus(&a.corpus)?),
    };
    let population = a.population.unwrap_or_else(|| corpus.as_ref().map_or(0, |c| c.len() as u64));
    let plan = sample_size(population, s.z, s.margin, s.proportion)?;
    let size = a.size.unwrap_or(plan.size);
    match &corpus {
        Some(c) => {
            let ids = draw_sample(c, size as usize, seed, s.stratify)?;
            staging.write_with(&name(&a.template), |buf| write_annotation_template(c, &ids, buf))?;
        }
        None => {
            let positions = draw_positions(population, size, seed)?;
            staging.write_with(&name(&a.template), |buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["mr_id", "url", "label", "note"]).map_err(Error::from)?;
                for p in positions {
                    w.write_record([p.to_string(), String::new(), String::new(), String::new()])
                        .map_err(Error::from)?;
                }
                w.flush()?;
                Ok(())
            })?;
        }
    }
    staging.write_json("sample_plan.json", &serde_json::json!({ "plan": plan, "drawn": size, "seed": seed }))?;
    staging.commit()?;
    println!("{size}");
    Ok(())
}

fn prevalence_charts(staging: &mut Staging, report: &PrevalenceReport, projects: &BTreeMap<u64, String>) -> Result<()> {
    let shares = |p: &mrscope_core::taxonomy::ProjectPrevalence| -> Vec<(String, f64)> {
        p.shares.iter().map(|s| (s.code.clone(), s.pct)).collect()
    };
    staging.write(
        "report/categories_overall.svg",
        bar_chart(&format!("Deviation types, {}", report.group), &shares(&report.overall)).as_bytes(),
    )?;
    let mut rates = Vec::new();
    for p in &report.projects {
        let id = p.project_id.unwrap_or(0);
        let label = projects.get(&id).cloned().unwrap_or_else(|| format!("project {id}"));
        rates.push((label.clone(), p.deviation_pct));
        staging.write(
            &format!("report/categories_project_{id}.svg"),
            bar_chart(&format!("Deviation types, {label}"), &shares(p)).as_bytes(),
        )?;
    }
    staging.write("report/deviation_rate.svg", bar_chart("Share of MRs that deviate", &rates).as_bytes())?;
    Ok(())
}

fn label(ctx: &Ctx, corpus_path: &Path, backend: Backend, command: &[String]) -> Result<()> {
    let corpus = ctx.corpus(corpus_path)?;
    let verdicts = match backend {
        Backend::Rules => detect_all(&corpus, &RuleSet::compile(&ctx.config.rules)?),
        Backend::Service => {
            let (program, args) = command
                .split_first()
                .ok_or_else(|| Error::Config("service backend needs a command (classifier.command or -- PROGRAM ...)".into()))?;
            let responses = classify_with_process(program, args, &requests_for(&corpus))?;
            responses_to_verdicts(&responses)?
        }
    };
    let report = prevalence_report(&verdicts, &corpus)?;
    let mut staging = ctx.staging()?;
    staging.write_with("verdicts.jsonl", |buf| write_verdicts(&verdicts, buf))?;
    staging.write_json("prevalence.json", &report)?;
    staging.commit()?;
    let o = &report.overall;
    println!("{} of {} MRs deviate ({:.2}%)", o.deviations, o.total, o.deviation_pct);
    Ok(())
}

fn annotate_import(ctx: &Ctx, files: &[PathBuf]) -> Result<()> {
    let mut staging = ctx.staging()?;
    for f in files {
        let path = ctx.resolve(f);
        let set = import_annotations(&path).map_err(|e| with_path(e, &path))?;
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for e in &set.entries {
            *counts.entry(e.label.map_or("PENDING".to_string(), |l: Label| l.to_string())).or_default() += 1;
        }
        staging.write_json(&format!("annotations/{}.json", set.annotator), &set)?;
        let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{}: {} entries ({})", set.annotator, set.entries.len(), summary.join(" "));
    }
    staging.commit()?;
    Ok(())
}

fn annotate_diff(ctx: &Ctx, first: &Path, second: &Path) -> Result<()> {
    let (pa, pb) = (ctx.resolve(first), ctx.resolve(second));
    let a = import_annotations(&pa).map_err(|e| with_path(e, &pa))?;
    let b = import_annotations(&pb).map_err(|e| with_path(e, &pb))?;
    let report = diff_annotations(&a, &b)?;
    let mut staging = ctx.staging()?;
    staging.write_json(&format!("agreement_{}_{}.json", a.annotator, b.annotator), &report)?;
    staging.commit()?;
    let kappa = report.kappa.map_or("NA".to_string(), |k| format!("{k:.3}"));
    println!(
        "{} compared, {:.2}% agreement, kappa {kappa}, {} pending",
        report.compared,
        report.agreement_pct,
        report.pending.len()
    );
    Ok(())
}

fn features(ctx: &Ctx, corpus_path: &Path) -> Result<()> {
    let corpus = ctx.corpus(corpus_path)?;
    let deviation: Vec<_> = corpus.records.iter().map(|r| (r.id, extract_deviation_features(r))).collect();
    let merged: Vec<_> = corpus.records.iter().filter(|r| r.is_merged()).collect();
    let completion = extract_all(&corpus, &merged, &ctx.config.impact.history);
    let rows: Vec<_> = merged.iter().map(|r| r.id).zip(completion).collect();
    let mut staging = ctx.staging()?;
    staging.write_with("features_deviation.csv", |buf| write_deviation_csv(&deviation, buf))?;
    staging.write_with("features_completion.csv", |buf| write_completion_csv(&rows, buf))?;
    staging.commit()?;
    println!("{} deviation rows, {} completion rows", deviation.len(), rows.len());
    Ok(())
}

fn impact(ctx: &Ctx, a: crate::ImpactArgs) -> Result<()> {
    let corpus = ctx.corpus(&a.corpus)?;
    let verdicts = ctx.verdicts(&a.verdicts)?;
    let mut config = ctx.config.impact.clone();
    if a.full {
        config.n_boot = 100;
    }
    if let Some(n) = a.n_boot {
        config.n_boot = n;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate()?;
    info!("{} bootstrap iterations, {} model kinds", config.n_boot, config.models.len());
    let report = run_impact(&corpus, &verdicts, &config)?;
    let mut staging = ctx.staging()?;
    staging.write_with("impact.csv", |buf| report.write_csv(buf))?;
    staging.write("impact.md", report.to_markdown().as_bytes())?;
    staging.write("impact.json", format!("{}\n", report.to_json()?).as_bytes())?;
    if a.interpretation {
        let interp = run_deviation_vs_regular(&corpus, &verdicts, &config)?;
        staging.write_with("interpretation.csv", |buf| interp.write_csv(buf))?;
        staging.write("interpretation.md", interp.to_markdown().as_bytes())?;
        staging.write("interpretation.json", format!("{}\n", interp.to_json()?).as_bytes())?;
    }
    staging.commit()?;
    for row in &report.rows {
        let r = |m: &mrscope_core::impact::MetricComparison| m.ratio.map_or("NA".into(), |v| format!("{v:.3}"));
        println!("{} {}: mse {} mae {} sa {}", row.scope, row.model.short(), r(&row.mse), r(&row.mae), r(&row.sa));
    }
    Ok(())
}

fn report(ctx: &Ctx, a: crate::ReportArgs) -> Result<()> {
    let corpus = ctx.corpus(&a.corpus)?;
    let verdicts = ctx.verdicts(&a.verdicts)?;
    let prevalence = prevalence_report(&verdicts, &corpus)?;
    let projects: BTreeMap<u64, String> = corpus
        .meta
        .projects
        .iter()
        .filter_map(|p| p.path.clone().map(|path| (p.id, path)))
        .collect();
    let mut staging = ctx.staging()?;
    prevalence_charts(&mut staging, &prevalence, &projects)?;

    let mut md = format!("# {}\n\n## Prevalence\n\n| scope | MRs | deviations | % |\n|---|---:|---:|---:|\n", prevalence.group);
    for p in prevalence.projects.iter().chain([&prevalence.overall]) {
        let scope = match p.project_id {
            Some(id) => projects.get(&id).cloned().unwrap_or_else(|| format!("project {id}")),
            None => "all".to_string(),
        };
        md.push_str(&format!("| {scope} | {} | {} | {:.2} |\n", p.total, p.deviations, p.deviation_pct));
    }

    let impact_path = ctx.resolve(&a.impact);
    if impact_path.exists() {
        let text = std::fs::read_to_string(&impact_path)?;
        let impact: ImpactReport = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { line: e.line(), id: None, msg: format!("{}: {e}", impact_path.display()) })?;
        md.push_str("\n## Impact of removing deviations\n\n");
        md.push_str(&impact.to_markdown());
    }

    if let Some(eval) = &a.eval {
        let path = ctx.resolve(eval);
        let records = read_eval_records(File::open(&path).map_err(|e| with_path(e.into(), &path))?)?;
        let summary = summarize_eval(&records, &ctx.config.impact.scott_knott)?;
        staging.write_with("report/eval_summary.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            for row in &summary {
                w.serialize(row).map_err(Error::from)?;
            }
            w.flush()?;
            Ok(())
        })?;
        md.push_str("\n## Classifier configurations\n\n| rank | method | param | accuracy | precision | recall | f1 |\n|---:|---|---|---:|---:|---:|---:|\n");
        for s in &summary {
            md.push_str(&format!(
                "| {} | {} | {} | {:.3} | {:.3} | {:.3} | {:.3} |\n",
                s.rank, s.method, s.param, s.accuracy, s.precision, s.recall, s.f1
            ));
        }
    }
    staging.write("report/report.md", md.as_bytes())?;
    let written = staging.commit()?;
    println!("{} files under {}", written.len(), ctx.out.join("report").display());
    Ok(())
}

fn synth(ctx: &Ctx, a: crate::SynthArgs) -> Result<()> {
    let mut staging = ctx.staging()?;
    let corpus = match a.kind {
        SynthKind::Injected => {
            let (corpus, manifest) = injected_corpus(a.normal, a.deviations, a.seed)?;
            staging.write_json("manifest.json", &manifest)?;
            corpus
        }
        SynthKind::Impact => impact_corpus(a.normal, a.deviations, a.seed)?,
    };
    staging.write_with(&name(&a.corpus), |buf| write_archive(&corpus, buf))?;
    staging.commit()?;
    println!("{} records", corpus.len());
    Ok(())
}
