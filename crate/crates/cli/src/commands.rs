use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cade_core::diagnostics::{
    directional_distribution, perturbation_report, write_distribution_csv, write_perturbation_csv,
    LogitBinding, PerturbationScheme, Predictor,
};
use cade_core::engine::{
    decide_batch, AblationFlags, EngineConfig, HyperParams, QuestionRecord, Task,
};
use cade_core::io::{
    read_decisions, read_records, write_decisions, write_records, DecisionLine, RunManifest,
};
use cade_core::metrics::{build_report, RunReport, ToleranceTable};
use cade_core::synthgen::{generate as generate_records, GeneratorSpec};
use cade_core::tuner::{random_search, SearchOptions};
use cade_core::{CadeError, Result};
use serde::Serialize;

use crate::config::Config;
use crate::{
    BindingArg, DebiasArgs, DiagnoseArgs, EvaluateArgs, GenerateArgs, HyperArgs, ModeArgs,
    PerturbArgs, ReportArgs, SchemeArg, TuneArgs,
};

pub struct Context {
    pub config: Config,
    pub config_path: Option<PathBuf>,
}

impl Context {
    /// Manifest over `inputs` plus the config file, if any.
    fn manifest(&self, inputs: &[&Path]) -> Result<RunManifest> {
        let mut all: Vec<&Path> = inputs.to_vec();
        if let Some(c) = &self.config_path {
            all.push(c);
        }
        let command = std::env::args().collect::<Vec<_>>().join(" ");
        RunManifest::new(command, &all)
    }

    fn engine_config(&self, mode: &ModeArgs) -> Result<EngineConfig> {
        let e = &self.config.engine;
        let on = |disabled: bool, cfg: Option<bool>| !disabled && cfg.unwrap_or(true);
        let defaults = EngineConfig::default();
        let cfg = EngineConfig {
            divergence: mode
                .divergence
                .or(e.divergence)
                .map(Into::into)
                .unwrap_or(defaults.divergence),
            image_stream: mode
                .image_stream
                .or(e.image_stream)
                .map(Into::into)
                .unwrap_or(defaults.image_stream),
            flags: AblationFlags {
                context_penalty: on(mode.disable_context_penalty, e.context_penalty),
                adaptive_disagreement: on(mode.disable_adaptive, e.adaptive_disagreement),
                prior_penalty: on(mode.disable_prior_penalty, e.prior_penalty),
                confidence_gate: on(mode.disable_gate, e.confidence_gate),
            },
            prob_floor: e.prob_floor.unwrap_or(defaults.prob_floor),
            tie_break: defaults.tie_break,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn hyper_params(&self, hyper: &HyperArgs) -> Result<HyperParams> {
        let e = &self.config.engine;
        let need = |flag: Option<f64>, cfg: Option<f64>, name: &str| {
            flag.or(cfg).ok_or_else(|| {
                CadeError::InvalidInput(format!("--{name} is required (flag or config file)"))
            })
        };
        HyperParams::new(
            need(hyper.tau, e.tau, "tau")?,
            need(hyper.alpha, e.alpha, "alpha")?,
            need(hyper.lambda_kl, e.lambda_kl, "lambda-kl")?,
            need(hyper.beta, e.beta, "beta")?,
        )
    }

    fn tolerances(&self) -> Result<ToleranceTable> {
        if self.config.tolerances.is_empty() {
            Ok(ToleranceTable::default())
        } else {
            ToleranceTable::new(self.config.tolerances.iter().map(|(k, v)| (k.as_str(), *v)))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| CadeError::io_at(path, e))?;
    Ok(BufWriter::new(file))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CadeError::io_at(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CadeError::io_at(path, e))
}

pub fn debias(ctx: &Context, a: &DebiasArgs) -> Result<()> {
    let records = read_records(&a.input)?;
    let hp = ctx.hyper_params(&a.hyper)?;
    let cfg = ctx.engine_config(&a.mode)?;
    let decisions = decide_batch(&records, &hp, &cfg)?;
    let lines: Vec<DecisionLine> = records
        .iter()
        .zip(&decisions)
        .map(|(r, d)| DecisionLine::new(&r.id, d))
        .collect();
    let mut manifest = ctx.manifest(&[&a.input])?;
    manifest.engine_config = Some(cfg);
    manifest.hyper_params = Some(hp);
    write_decisions(&a.out, &lines, &manifest)?;
    log::info!(
        "{} decisions written to {} ({} gated)",
        lines.len(),
        a.out.display(),
        lines.iter().filter(|l| l.gated).count()
    );
    Ok(())
}

pub fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<()> {
    let records = read_records(&a.input)?;
    let lines = read_decisions(&a.decisions)?;
    if records.len() != lines.len() {
        return Err(CadeError::InvalidInput(format!(
            "{} records but {} decisions",
            records.len(),
            lines.len()
        )));
    }
    for (i, (r, l)) in records.iter().zip(&lines).enumerate() {
        if r.id != l.id {
            return Err(CadeError::Validation {
                line: Some(i + 1),
                id: l.id.clone(),
                field: "id".into(),
                message: format!("expected decision for `{}`", r.id),
            });
        }
    }
    let decisions: Vec<_> = lines.iter().map(DecisionLine::to_decision).collect();
    let report = build_report(&records, &decisions, &ctx.tolerances()?)?;
    let manifest = ctx.manifest(&[&a.input, &a.decisions])?;
    write_text(&a.report, &report.to_json())?;
    manifest.write_beside(&a.report)?;
    if let Some(csv) = &a.csv {
        report.write_csv(create(csv)?)?;
        manifest.write_beside(csv)?;
    }
    Ok(())
}

/// Records of one task only; the others are dropped with a log line.
fn read_task(path: &Path, task: Task) -> Result<Vec<QuestionRecord>> {
    let all = read_records(path)?;
    let total = all.len();
    let kept: Vec<QuestionRecord> = all.into_iter().filter(|r| r.task == task).collect();
    if kept.is_empty() {
        return Err(CadeError::InvalidInput(format!(
            "{}: no {} records",
            path.display(),
            task.as_str()
        )));
    }
    if kept.len() < total {
        log::info!(
            "using {} of {} records ({} only)",
            kept.len(),
            total,
            task.as_str()
        );
    }
    Ok(kept)
}

pub fn diagnose(ctx: &Context, a: &DiagnoseArgs) -> Result<()> {
    let records = read_task(&a.input, Task::Mcq)?;
    let dist = directional_distribution(&records, a.view, a.by_pillar)?;
    write_distribution_csv(&dist, create(&a.out)?)?;
    ctx.manifest(&[&a.input])?.write_beside(&a.out)?;
    Ok(())
}

pub fn perturb(ctx: &Context, a: &PerturbArgs) -> Result<()> {
    let records = read_task(&a.input, Task::Mcq)?;
    let schemes: Vec<PerturbationScheme> = a
        .scheme
        .iter()
        .map(|s| match s {
            SchemeArg::Reverse => PerturbationScheme::ReverseOrder,
            SchemeArg::Random => PerturbationScheme::RandomOrder { seed: a.seed },
            SchemeArg::Lowercase => PerturbationScheme::LowercaseToken,
            SchemeArg::Numeric => PerturbationScheme::NumericToken,
        })
        .collect();
    let mut manifest = ctx.manifest(&[&a.input])?;
    let predictor = if a.cade {
        let hp = ctx.hyper_params(&a.hyper)?;
        let cfg = ctx.engine_config(&a.mode)?;
        manifest.hyper_params = Some(hp);
        manifest.engine_config = Some(cfg);
        Predictor::Cade { hp, cfg }
    } else {
        Predictor::View(a.view)
    };
    let binding = match a.binding {
        BindingArg::Semantic => LogitBinding::Semantic,
        BindingArg::Positional => LogitBinding::Positional,
    };
    let rows = perturbation_report(&records, &schemes, &predictor, binding)?;
    write_perturbation_csv(&rows, create(&a.out)?)?;
    if a.scheme.contains(&SchemeArg::Random) {
        manifest.seed = Some(a.seed);
    }
    manifest.write_beside(&a.out)?;
    Ok(())
}

pub fn tune(ctx: &Context, a: &TuneArgs) -> Result<()> {
    let task = a.task.into();
    let t = &ctx.config.tune;
    let seed = a.seed.or(t.seed).ok_or_else(|| {
        CadeError::InvalidInput("--seed is required (flag or config file)".into())
    })?;
    let mut opts = SearchOptions::for_task(task, seed);
    if let Some(n) = a.samples.or(t.samples) {
        opts.samples = n;
    }
    if let Some(f) = a.subset.or(t.subset) {
        opts.subset_fraction = f;
    }
    if let Some(k) = a.top_k.or(t.top_k) {
        opts.top_k = k;
    }
    opts.cfg = ctx.engine_config(&a.mode)?;

    let validation = read_task(&a.input, task)?;
    let trace = random_search(&validation, &opts)?;

    let mut manifest = ctx.manifest(&[&a.input])?;
    manifest.seed = Some(seed);
    manifest.engine_config = Some(opts.cfg);
    manifest.hyper_params = Some(trace.best.params);
    let mut out = create(&a.out)?;
    trace.write_jsonl(&mut out)?;
    out.flush()?;
    manifest.write_beside(&a.out)?;
    let summary = trace.summary_json();
    match &a.summary {
        Some(path) => {
            write_text(path, &summary)?;
            manifest.write_beside(path)?;
        }
        None => print!("{summary}"),
    }
    Ok(())
}

pub fn generate(ctx: &Context, a: &GenerateArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => GeneratorSpec::from_json(&read_text(path)?)?,
        None => GeneratorSpec::demo(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(n) = a.n_records {
        spec.n_records = n;
    }
    let records = generate_records(&spec)?;
    write_records(&a.out, &records)?;
    let inputs: Vec<&Path> = a.spec.iter().map(PathBuf::as_path).collect();
    let mut manifest = ctx.manifest(&inputs)?;
    manifest.seed = Some(spec.seed);
    manifest.write_beside(&a.out)?;
    log::info!("{} records written to {}", records.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    run: &'a str,
    section: &'a str,
    key: &'a str,
    count: usize,
    value: f64,
}

/// Report files in `dir`, sorted by name. Manifests and other JSON are skipped.
fn collect_reports(dir: &Path) -> Result<Vec<(String, PathBuf, RunReport)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CadeError::io_at(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if !name.ends_with(".json") || name.ends_with(".manifest.json") {
            continue;
        }
        let text = read_text(&path)?;
        match serde_json::from_str::<RunReport>(&text) {
            Ok(report) => {
                let run = name.trim_end_matches(".json").to_string();
                out.push((run, path, report));
            }
            Err(e) => log::debug!("skipping {}: {e}", path.display()),
        }
    }
    Ok(out)
}

pub fn report(ctx: &Context, a: &ReportArgs) -> Result<()> {
    let reports = collect_reports(&a.runs)?;
    if reports.is_empty() {
        return Err(CadeError::InvalidInput(format!(
            "no report files found in {}",
            a.runs.display()
        )));
    }
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    for (run, _, report) in &reports {
        for row in report.rows() {
            w.serialize(SummaryRow {
                run,
                section: &row.section,
                key: &row.key,
                count: row.count,
                value: row.value,
            })
            .map_err(|e| CadeError::Io(std::io::Error::other(e)))?;
        }
    }
    w.flush()?;
    let inputs: Vec<&Path> = reports.iter().map(|(_, p, _)| p.as_path()).collect();
    ctx.manifest(&inputs)?.write_beside(&a.out)?;
    Ok(())
}

#[cfg(feature = "provider")]
pub fn fetch(ctx: &Context, a: &crate::FetchArgs) -> Result<()> {
    use cade_core::io::provider::{LogitRequest, ProviderClient, ProviderConfig};
    use std::time::Duration;

    let p = &ctx.config.provider;
    let mut cfg = match a.endpoint.clone().or_else(|| p.endpoint.clone()) {
        Some(url) => ProviderConfig::new(url),
        None => ProviderConfig::from_env()?,
    };
    if let Some(s) = p.timeout_secs {
        cfg.timeout = Duration::from_secs(s);
    }
    if let Some(n) = p.attempts {
        cfg.retry.attempts = n;
    }
    if let Some(ms) = p.backoff_ms {
        cfg.retry.base_delay = Duration::from_millis(ms);
    }
    if let Some(c) = p.max_concurrency {
        cfg.max_concurrency = c;
    }
    let client = ProviderClient::new(cfg);

    let mut records = read_records(&a.input)?;
    let mut requests = Vec::with_capacity(records.len() * a.views.len());
    for r in &records {
        for &view in &a.views {
            requests.push(LogitRequest {
                record_id: r.id.clone(),
                view,
                candidates: r.candidates.labels().to_vec(),
                payload_refs: r.provenance.iter().cloned().collect(),
            });
        }
    }
    // batches keep a dead endpoint from being retried once per request
    let batch = client.config().max_concurrency.max(1);
    let mut fetched = Vec::with_capacity(requests.len());
    for chunk in requests.chunks(batch) {
        for result in client.fetch_many(chunk) {
            fetched.push(result?);
        }
    }
    let mut results = fetched.into_iter();
    for r in &mut records {
        for &view in &a.views {
            *r.logits.get_mut(view) = results.next().expect("one result per request");
        }
        r.validate()?;
    }
    write_records(&a.out, &records)?;
    ctx.manifest(&[&a.input])?.write_beside(&a.out)?;
    Ok(())
}
