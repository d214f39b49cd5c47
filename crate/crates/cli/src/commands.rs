use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bwsq_core::annotate::{
    annotate_design, annotate_zero_shot, oracle, read_jsonl, AnnotatorId, CampaignOptions, CampaignSummary,
    JsonlStore, Judgment, LlmClient, LlmEndpointConfig, ZeroShotLabel,
};
use bwsq_core::corpus::{self, Corpus, Format, Split, SurveyRecord};
use bwsq_core::design::{generate_design, verify_design, Design, DesignParams};
use bwsq_core::labels::Presence;
use bwsq_core::models::{
    self, audit_features, crossval, evaluate, fit_or_constant, ingest_embeddings, load_artifact, save_artifact,
    train_classifier, train_embedding_regressor, train_test, train_text_regressor, training_curve, Artifact,
    EmbeddingTable, Kernel, KrrConfig, LrConfig, QuantifierLexicon, Regressor, Task,
};
use bwsq_core::report::{self, BinningPolicy, ClassBinning};
use bwsq_core::scoring::{self, ScoreRecord};
use bwsq_core::stats::{self, f1_scores, paired_permutation_test, regression_metrics, MetricsBundle};
use bwsq_core::synthetic::{self, SyntheticConfig};
use bwsq_core::RecordId;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::manifest;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Design(a) => design(a),
        Command::AnnotateLlm(a) => annotate_llm(a),
        Command::Serve(a) => serve(a),
        Command::Score(a) => score(a),
        Command::Agreement(a) => agreement(a),
        Command::TrainBinary(a) => train(a, Task::Binary, "train-binary"),
        Command::TrainMulti(a) => train(a, Task::Multiclass, "train-multi"),
        Command::TrainRegress(a) => train_regress(a),
        Command::ZeroShot(a) => zero_shot(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Curve(a) => curve(a),
        Command::Synth(a) => synth(a),
    }
}

fn format_of(path: &Path) -> Result<Format> {
    Format::from_path(path).ok_or_else(|| anyhow!("{}: cannot tell format from extension (use .csv or .jsonl)", path.display()))
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    corpus::ingest(path, format_of(path)?).with_context(|| format!("reading corpus {}", path.display()))
}

fn load_judgments(paths: &[PathBuf]) -> Result<Vec<Judgment>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_jsonl::<Judgment>(p).with_context(|| format!("reading judgments {}", p.display()))?);
    }
    Ok(all)
}

fn load_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let f = File::open(path).with_context(|| format!("opening scores {}", path.display()))?;
    scoring::read_csv(f).with_context(|| format!("reading scores {}", path.display()))
}

fn load_lexicon(path: Option<&Path>) -> Result<Option<QuantifierLexicon>> {
    path.map(|p| QuantifierLexicon::read_csv(p).with_context(|| format!("reading lexicon {}", p.display())))
        .transpose()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let format = match &a.format {
        Some(f) => f.parse::<Format>().map_err(|e| anyhow!(e))?,
        None => format_of(&a.input)?,
    };
    let (mut c, rejected) = if a.lenient {
        let r = corpus::ingest_lenient(&a.input, format)?;
        for e in &r.rejected {
            tracing::warn!(row = %e, "rejected row");
        }
        (r.corpus, r.rejected.len())
    } else {
        (corpus::ingest(&a.input, format)?, 0)
    };
    let mut conflicts = Vec::new();
    let before = c.len();
    if a.dedup {
        let d = corpus::deduplicate(&c);
        conflicts = d.conflicts;
        c = d.corpus;
    }
    let duplicates = before - c.len();
    if let Some(f) = a.test_fraction {
        c = corpus::split(&c, f, a.seed)?;
    }
    let out_format = Format::from_path(&a.out).unwrap_or(Format::Csv);
    c.write(&a.out, out_format)?;
    let summary = json!({
        "records": c.len(),
        "rejected_rows": rejected,
        "duplicates_removed": duplicates,
        "label_conflicts": conflicts,
    });
    tracing::info!(records = c.len(), rejected, duplicates, "corpus written");
    manifest::write("ingest", &a, Some(a.seed), &a.out, vec![a.out.clone()], Some(summary))?;
    Ok(())
}

fn design(a: DesignArgs) -> Result<()> {
    let mut c = load_corpus(&a.corpus)?;
    if a.present_only {
        c = c.filter(|r| r.presence() != Some(Presence::Absent));
    }
    let params = DesignParams {
        set_size: a.k,
        repetitions: a.n,
        seed: a.seed,
        truncate: a.truncate,
    };
    let d = generate_design(&c, params)?;
    let report = verify_design(&d);
    if !report.passes() {
        bail!("generated design failed verification: {report:?}");
    }
    d.save(&a.out)?;
    tracing::info!(tuples = d.tuples.len(), records = c.len() - d.dropped.len(), "design written");
    let summary = json!({
        "tuples": d.tuples.len(),
        "records": c.len() - d.dropped.len(),
        "dropped": d.dropped,
    });
    manifest::write("design", &a, Some(a.seed), &a.out, vec![a.out.clone()], Some(summary))?;
    Ok(())
}

fn endpoint_config(e: &EndpointArgs) -> LlmEndpointConfig {
    let mut cfg = LlmEndpointConfig::from_env();
    if let Some(u) = &e.base_url {
        cfg.base_url = u.clone();
    }
    if let Some(m) = &e.model {
        cfg.model_name = m.clone();
    }
    if let Some(t) = e.temperature {
        cfg.temperature = t;
    }
    if let Some(p) = e.parallelism {
        cfg.parallelism = p;
    }
    if let Some(t) = e.timeout_secs {
        cfg.timeout_secs = t;
    }
    cfg.requests_per_minute = e.requests_per_minute.or(cfg.requests_per_minute);
    cfg
}

fn llm_annotator(name: Option<&str>, cfg: &LlmEndpointConfig) -> Result<AnnotatorId> {
    match name {
        Some(n) if n.starts_with("mock:") => bail!("unknown mock annotator {n:?}"),
        Some(n) => n.parse().map_err(|e: String| anyhow!(e)),
        None => Ok(AnnotatorId::llm(cfg.model_name.clone())),
    }
}

fn log_summary(s: &CampaignSummary) {
    tracing::info!(
        attempted = s.attempted,
        skipped = s.skipped,
        valid = s.valid,
        invalid = s.invalid,
        "campaign finished"
    );
    for f in s.failures.iter().take(10) {
        tracing::warn!(id = %f.id, error = %f.error, "invalid item");
    }
}

fn annotate_llm(a: AnnotateArgs) -> Result<()> {
    let d = Design::load(&a.design)?;
    let c = load_corpus(&a.corpus)?;
    let store = JsonlStore::<Judgment>::open(&a.out)?;
    let summary = if a.annotator.as_deref() == Some("mock:intensity") {
        let annotator = oracle::oracle_annotator();
        let mut s = CampaignSummary::default();
        for t in &d.tuples {
            if store.has_valid(&(t.tuple_id.clone(), annotator.clone())) {
                s.skipped += 1;
                continue;
            }
            s.attempted += 1;
            let (best, worst) = oracle::judge_tuple(t, &c)?;
            let mut j = Judgment::new_valid(t.tuple_id.clone(), annotator.clone(), best, worst);
            j.raw_response = format!("{{\"Best\": {best}, \"Worst\": {worst}}}");
            store.append(j)?;
            s.valid += 1;
        }
        s
    } else {
        let cfg = endpoint_config(&a.endpoint);
        let annotator = llm_annotator(a.annotator.as_deref(), &cfg)?;
        let opts = CampaignOptions {
            max_retries: a.endpoint.parse_retries,
            parallelism: cfg.parallelism,
        };
        let client = LlmClient::new(cfg)?;
        runtime()?.block_on(annotate_design(&d, &c, &client, &annotator, &store, &opts))?
    };
    log_summary(&summary);
    manifest::write(
        "annotate-llm",
        &a,
        None,
        &a.out,
        vec![a.out.clone()],
        Some(serde_json::to_value(&summary)?),
    )?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let addr = format!("{}:{}", a.host, a.port)
        .parse()
        .with_context(|| format!("invalid address {}:{}", a.host, a.port))?;
    manifest::write("serve", &a, None, &a.journal, vec![a.journal.clone()], None)?;
    let opts = bwsq_service::ServeOptions {
        addr,
        journal: a.journal.clone(),
        campaign: a.campaign.clone(),
        ui_dir: a.ui_dir.clone(),
    };
    runtime()?.block_on(bwsq_service::serve(opts))?;
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let d = Design::load(&a.design)?;
    let mut js = load_judgments(&a.judgments)?;
    if let Some(name) = &a.annotator {
        let id: AnnotatorId = name.parse().map_err(|e: String| anyhow!(e))?;
        js.retain(|j| j.annotator == id);
        if js.is_empty() {
            bail!("no judgments from annotator {id}");
        }
    }
    let valid = js.iter().filter(|j| j.valid).count();
    let scores = if a.pooled {
        scoring::score_pooled(&js, &d)?
    } else {
        scoring::score(&js, &d)?
    };
    scoring::write_csv(&scores.records, create(&a.out)?)?;
    if !scores.unscored.is_empty() {
        tracing::warn!(n = scores.unscored.len(), "design records without any valid judgment");
    }
    let summary = json!({
        "judgments": js.len(),
        "valid": valid,
        "scored": scores.records.len(),
        "unscored": scores.unscored,
    });
    manifest::write("score", &a, None, &a.out, vec![a.out.clone()], Some(summary))?;
    Ok(())
}

/// Per-reference B+W kappas of two annotators, paired by reference annotator.
fn compare_annotators(js: &[Judgment], a: &AnnotatorId, b: &AnnotatorId) -> Result<(Vec<String>, Vec<f64>, Vec<f64>)> {
    let others: BTreeSet<&AnnotatorId> = js.iter().map(|j| &j.annotator).filter(|x| *x != a && *x != b).collect();
    let of = |id: &AnnotatorId| js.iter().filter(|j| &j.annotator == id).cloned().collect::<Vec<_>>();
    let (ja, jb) = (of(a), of(b));
    let mut refs = Vec::new();
    let mut ka = Vec::new();
    let mut kb = Vec::new();
    for o in others {
        let jo = of(o);
        match (stats::bws_agreement(&ja, &jo), stats::bws_agreement(&jb, &jo)) {
            (Ok(ra), Ok(rb)) => {
                refs.push(o.to_string());
                ka.push(ra.kappa_both);
                kb.push(rb.kappa_both);
            }
            _ => tracing::warn!(reference = %o, "no shared tuples; left out of the comparison"),
        }
    }
    Ok((refs, ka, kb))
}

fn agreement(a: AgreementArgs) -> Result<()> {
    let js = load_judgments(&a.judgments)?;
    let rows = stats::agreement_matrix(&js);
    if rows.is_empty() {
        bail!("no annotator pair shares a validly judged tuple");
    }
    stats::write_agreement_csv(&rows, create(&a.out)?)?;
    let mut outputs = vec![a.out.clone()];
    let mut summary = json!({ "pairs": rows.len() });
    if !a.compare.is_empty() && a.compare.len() != 2 {
        bail!("--compare takes exactly two annotators, got {}", a.compare.len());
    }
    if let [x, y] = a.compare.as_slice() {
        let ia: AnnotatorId = x.parse().map_err(|e: String| anyhow!(e))?;
        let ib: AnnotatorId = y.parse().map_err(|e: String| anyhow!(e))?;
        let (refs, ka, kb) = compare_annotators(&js, &ia, &ib)?;
        let test = paired_permutation_test(&ka, &kb, a.resamples, a.seed)?;
        let result = json!({
            "a": ia.to_string(),
            "b": ib.to_string(),
            "references": refs,
            "kappa_a": ka,
            "kappa_b": kb,
            "test": test,
        });
        let path = a.out.with_extension("permutation.json");
        write_json(&path, &result)?;
        print_json(&result)?;
        outputs.push(path);
        summary["comparison"] = result;
    }
    manifest::write("agreement", &a, Some(a.seed), &a.out, outputs, Some(summary))?;
    Ok(())
}

fn lr_config(a: &TrainArgs) -> Result<LrConfig> {
    Ok(LrConfig {
        lambda: a.lambda,
        max_iter: a.max_iter,
        seed: a.seed,
        min_doc_freq: a.min_doc_freq,
        class_weights: a.class_weights,
        exclude_tokens: a.exclude.iter().map(|t| t.to_lowercase()).collect(),
        lexicon: load_lexicon(a.lexicon.as_deref())?,
        ..LrConfig::default()
    })
}

fn classifier_cv(c: &Corpus, task: Task, folds: usize, cfg: &LrConfig) -> Result<models::CvResult> {
    let labeled: Vec<SurveyRecord> = c.iter().filter(|r| task.label(r).is_some()).cloned().collect();
    let pick = |idx: &[usize]| idx.iter().map(|&i| labeled[i].clone()).collect::<Vec<_>>();
    Ok(crossval(labeled.len(), folds, cfg.seed, |tr, te| {
        let model = fit_or_constant(&pick(tr), task, cfg)?;
        Ok(MetricsBundle {
            classification: Some(evaluate(&model, &pick(te), None)?),
            regression: None,
        })
    })?)
}

fn train(a: TrainArgs, task: Task, command: &str) -> Result<()> {
    let c = load_corpus(&a.corpus)?;
    let cfg = lr_config(&a)?;
    let (train, test) = train_test(&c, task, cfg.seed)?;
    let model = train_classifier(&train, task, &cfg)?;
    let metrics = evaluate(&model, &test, None)?;
    tracing::info!(
        n_train = train.len(),
        n_test = test.len(),
        lambda = model.lambda,
        f1_macro = metrics.f1_macro,
        f1_micro = metrics.f1_micro,
        "classifier trained"
    );
    let mut outputs = vec![a.out.clone()];
    if let Some(n) = a.audit {
        let path = a.out.with_extension("features.json");
        write_json(&path, &audit_features(&model, n))?;
        outputs.push(path);
    }
    let cv = a.folds.map(|k| classifier_cv(&c, task, k, &cfg)).transpose()?;
    let summary = json!({
        "n_train": train.len(),
        "n_test": test.len(),
        "lambda": model.lambda,
        "test": metrics,
        "crossval": cv.as_ref().map(|r| json!({"folds": r.folds, "mean": r.mean})),
    });
    save_artifact(&a.out, &Artifact::Classifier(model))?;
    print_json(&summary)?;
    manifest::write(command, &a, Some(a.seed), &a.out, outputs, Some(summary))?;
    Ok(())
}

fn krr_config(a: &RegressArgs) -> KrrConfig {
    KrrConfig {
        kernel: match a.kernel {
            KernelArg::Linear => Kernel::Linear,
            KernelArg::Rbf => Kernel::Rbf { gamma: a.gamma },
        },
        alpha: a.alpha,
        tune: a.tune,
        center: !a.no_center,
        seed: a.seed,
        ..KrrConfig::default()
    }
}

/// Records with a target score, split as in training: an existing split column
/// wins, otherwise a seeded 80/20 split.
fn regression_split(c: &Corpus, targets: &HashMap<RecordId, f64>, seed: u64) -> Result<(Vec<SurveyRecord>, Vec<SurveyRecord>)> {
    let scored = c.filter(|r| targets.contains_key(&r.record_id));
    if scored.is_empty() {
        bail!("no corpus record has a score");
    }
    let split = if scored.iter().any(|r| r.split.is_some()) {
        scored
    } else {
        corpus::split(&scored, models::CURVE_TEST_FRACTION, seed)?
    };
    let (test, train) = split.into_records().into_iter().partition(|r| r.split == Some(Split::Test));
    Ok((train, test))
}

fn targets_of(scores: &[ScoreRecord]) -> HashMap<RecordId, f64> {
    scores.iter().map(|s| (s.record_id.clone(), s.norm_score)).collect()
}

fn fit_regressor(
    train: &[SurveyRecord],
    targets: &HashMap<RecordId, f64>,
    table: Option<&EmbeddingTable>,
    a: &RegressArgs,
    lexicon: Option<QuantifierLexicon>,
) -> Result<Regressor> {
    let cfg = krr_config(a);
    Ok(match table {
        Some(t) => train_embedding_regressor(train, targets, t, &cfg)?,
        None => train_text_regressor(train, targets, a.min_doc_freq, lexicon, &cfg)?,
    })
}

fn regression_eval(
    reg: &Regressor,
    records: &[SurveyRecord],
    targets: &HashMap<RecordId, f64>,
    table: Option<&EmbeddingTable>,
) -> Result<stats::RegressionMetrics> {
    let y: Vec<f64> = records.iter().map(|r| targets[&r.record_id]).collect();
    Ok(regression_metrics(&y, &reg.predict(records, table)?)?)
}

fn train_regress(a: RegressArgs) -> Result<()> {
    let c = load_corpus(&a.corpus)?;
    let targets = targets_of(&load_scores(&a.scores)?);
    let table = a.embeddings.as_deref().map(ingest_embeddings).transpose()?;
    if let Some(t) = &table {
        t.warn_unknown(c.iter().map(|r| &r.record_id));
    }
    let lexicon = load_lexicon(a.lexicon.as_deref())?;
    let (train, test) = regression_split(&c, &targets, a.seed)?;
    let reg = fit_regressor(&train, &targets, table.as_ref(), &a, lexicon.clone())?;
    let metrics = regression_eval(&reg, &test, &targets, table.as_ref())?;
    tracing::info!(n_train = train.len(), n_test = test.len(), mae = metrics.mae, r2 = metrics.r2, "regressor trained");

    let cv = match a.folds {
        None => None,
        Some(k) => {
            let all: Vec<SurveyRecord> = train.iter().chain(&test).cloned().collect();
            let pick = |idx: &[usize]| idx.iter().map(|&i| all[i].clone()).collect::<Vec<_>>();
            Some(crossval(all.len(), k, a.seed, |tr, te| {
                let reg = fit_regressor(&pick(tr), &targets, table.as_ref(), &a, lexicon.clone())
                    .map_err(|e| models::ModelError::InvalidConfig(e.to_string()))?;
                let m = regression_eval(&reg, &pick(te), &targets, table.as_ref())
                    .map_err(|e| models::ModelError::InvalidConfig(e.to_string()))?;
                Ok(MetricsBundle {
                    classification: None,
                    regression: Some(m),
                })
            })?)
        }
    };
    let summary = json!({
        "n_train": train.len(),
        "n_test": test.len(),
        "kernel": reg.model.kernel,
        "alpha": reg.model.alpha,
        "test": metrics,
        "crossval": cv.as_ref().map(|r| json!({"folds": r.folds, "mean": r.mean})),
    });
    save_artifact(&a.out, &Artifact::Regressor(reg))?;
    print_json(&summary)?;
    manifest::write("train-regress", &a, Some(a.seed), &a.out, vec![a.out.clone()], Some(summary))?;
    Ok(())
}

fn zero_shot(a: ZeroShotArgs) -> Result<()> {
    let c = load_corpus(&a.corpus)?;
    let store = JsonlStore::<ZeroShotLabel>::open(&a.out)?;
    let summary = if a.annotator.as_deref() == Some("mock:label") {
        let annotator = AnnotatorId::llm("mock-label");
        let mut s = CampaignSummary::default();
        for r in &c {
            if store.has_valid(&(r.record_id.clone(), annotator.clone())) {
                s.skipped += 1;
                continue;
            }
            s.attempted += 1;
            let label = ZeroShotLabel {
                record_id: r.record_id.clone(),
                annotator: annotator.clone(),
                predicted_class: r.multi_label,
                raw_response: r.multi_label.map(|m| m.code().to_string()).unwrap_or_default(),
                timestamp: chrono::Utc::now(),
                error: r.multi_label.is_none().then(|| "record has no gold class".to_owned()),
            };
            if label.predicted_class.is_some() {
                s.valid += 1;
            } else {
                s.invalid += 1;
            }
            store.append(label)?;
        }
        s
    } else {
        let cfg = endpoint_config(&a.endpoint);
        let annotator = llm_annotator(a.annotator.as_deref(), &cfg)?;
        let opts = CampaignOptions {
            max_retries: a.endpoint.parse_retries,
            parallelism: cfg.parallelism,
        };
        let client = LlmClient::new(cfg)?;
        runtime()?.block_on(annotate_zero_shot(&c, &client, &annotator, &store, &opts))?
    };
    log_summary(&summary);
    manifest::write(
        "zero-shot",
        &a,
        None,
        &a.out,
        vec![a.out.clone()],
        Some(serde_json::to_value(&summary)?),
    )?;
    Ok(())
}

fn evaluate_labels(c: &Corpus, path: &Path, all: bool) -> Result<serde_json::Value> {
    let labels = read_jsonl::<ZeroShotLabel>(path)?;
    let pred: HashMap<&RecordId, _> = labels.iter().map(|l| (&l.record_id, l.predicted_class)).collect();
    let use_test = !all && c.iter().any(|r| r.split == Some(Split::Test));
    let mut truth = Vec::new();
    let mut guess = Vec::new();
    let mut missing = 0;
    for r in c.iter().filter(|r| !use_test || r.split == Some(Split::Test)) {
        let Some(gold) = r.multi_label else { continue };
        match pred.get(&r.record_id).copied().flatten() {
            Some(p) => {
                truth.push(gold);
                guess.push(p);
            }
            None => missing += 1,
        }
    }
    if truth.is_empty() {
        bail!("no record has both a gold class and a valid zero-shot label");
    }
    let codes = |v: &[bwsq_core::FrequencyClass]| v.iter().map(|c| c.code() as i64).collect::<Vec<_>>();
    let (t, g) = (codes(&truth), codes(&guess));
    let multi = f1_scores(&t, &g, &models::union_classes(&t, &g))?;
    let bin = |v: &[bwsq_core::FrequencyClass]| v.iter().map(|c| c.presence().as_i8() as i64).collect::<Vec<_>>();
    let binary = f1_scores(&bin(&truth), &bin(&guess), &[0, 1])?;
    Ok(json!({
        "n": truth.len(),
        "missing_or_invalid": missing,
        "multiclass": multi,
        "binary": binary,
    }))
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let c = load_corpus(&a.corpus)?;
    let result = if let Some(labels) = &a.labels {
        evaluate_labels(&c, labels, a.all)?
    } else {
        let path = a.model.as_deref().expect("clap requires model or labels");
        match load_artifact(path)? {
            Artifact::Classifier(m) => {
                let records = if a.all {
                    c.iter().cloned().collect()
                } else {
                    train_test(&c, m.task, m.config.seed)?.1
                };
                let metrics = evaluate(&m, &records, None)?;
                json!({"n": records.iter().filter(|r| m.task.label(r).is_some()).count(), "classification": metrics})
            }
            Artifact::Regressor(reg) => {
                let scores = a.scores.as_deref().ok_or_else(|| anyhow!("--scores is required for a regressor"))?;
                let targets = targets_of(&load_scores(scores)?);
                let table = a.embeddings.as_deref().map(ingest_embeddings).transpose()?;
                let records = if a.all {
                    c.filter(|r| targets.contains_key(&r.record_id)).into_records()
                } else {
                    regression_split(&c, &targets, reg.config.seed)?.1
                };
                let metrics = regression_eval(&reg, &records, &targets, table.as_ref())?;
                json!({"n": records.len(), "regression": metrics})
            }
        }
    };
    write_json(&a.out, &result)?;
    print_json(&result)?;
    manifest::write("evaluate", &a, None, &a.out, vec![a.out.clone()], None)?;
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let c = load_corpus(&a.corpus)?;
    let scores = load_scores(&a.scores)?;
    let norm: HashMap<RecordId, f64> = targets_of(&scores);
    let binning = match a.binning {
        BinningArg::Quantile => ClassBinning::quantile(&scores.iter().map(|s| s.norm_score).collect::<Vec<_>>())?,
        BinningArg::EqualWidth if a.edges.is_empty() => ClassBinning::default(),
        BinningArg::EqualWidth => ClassBinning::new(a.edges.clone(), BinningPolicy::EqualWidth)?,
    };
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut outputs = Vec::new();

    let flags = report::flags_from_corpus(&c);
    let scored = scoring::Scores {
        records: {
            let mut v = scores.clone();
            v.sort_by(|x, y| x.record_id.cmp(&y.record_id));
            v
        },
        unscored: Vec::new(),
    };
    let mut pairs: Vec<(RecordId, f64)> = scored.records.iter().map(|s| (s.record_id.clone(), s.norm_score)).collect();
    pairs.extend(scoring::impute_absent(&c, &scored).into_iter().map(|i| (i.record_id, i.norm_score)));
    let bins = report::bin_scores(&pairs, &flags, &binning)?;
    let path = a.out_dir.join("bins.csv");
    report::write_bins_csv(&bins, create(&path)?)?;
    outputs.push(path);

    let labels: HashMap<RecordId, _> = c.iter().filter_map(|r| r.multi_label.map(|m| (r.record_id.clone(), m))).collect();
    let table = match report::class_vs_score_table(&labels, &norm) {
        Ok(t) => {
            let path = a.out_dir.join("class_table.csv");
            report::write_class_table_csv(&t, create(&path)?)?;
            outputs.push(path);
            if !t.is_monotone() {
                tracing::warn!(violations = ?t.mean_violations, "class means are not monotone in score");
            }
            Some(t)
        }
        Err(report::ReportError::EmptyJoin) => {
            tracing::warn!("no labeled record has a score; class table skipped");
            None
        }
        Err(e) => return Err(e.into()),
    };

    let species: Vec<String> = if a.species.is_empty() {
        c.iter().map(|r| r.species_id.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    } else {
        a.species.clone()
    };
    let mut distributions = Vec::new();
    for sp in &species {
        let d = report::species_distribution(&c, &norm, sp, a.bins)?;
        let safe: String = sp.chars().map(|ch| if ch.is_alphanumeric() || ch == '-' || ch == '_' { ch } else { '_' }).collect();
        let path = a.out_dir.join(format!("histogram_{safe}.csv"));
        report::write_histogram_csv(&d.histogram, create(&path)?)?;
        outputs.push(path);
        distributions.push(d);
    }
    let path = a.out_dir.join("species.json");
    write_json(&path, &distributions)?;
    outputs.push(path);

    let summary = json!({
        "binning": binning,
        "binned": bins.len(),
        "class_table": table,
    });
    manifest::write("report", &a, None, &a.out_dir, outputs, Some(summary))?;
    Ok(())
}

fn curve(a: CurveArgs) -> Result<()> {
    let c = load_corpus(&a.corpus)?;
    let task = match a.task {
        TaskArg::Binary => Task::Binary,
        TaskArg::Multi => Task::Multiclass,
    };
    let cfg = LrConfig {
        lambda: a.lambda,
        seed: a.seed,
        ..LrConfig::default()
    };
    let points = training_curve(&c, task, a.step, &cfg)?;
    let mut w = create(&a.out)?;
    writeln!(w, "n_train,f1_macro")?;
    for p in &points {
        writeln!(w, "{},{}", p.n_train, p.f1_macro)?;
        tracing::info!(n_train = p.n_train, f1_macro = p.f1_macro, "curve point");
    }
    w.flush()?;
    manifest::write("curve", &a, Some(a.seed), &a.out, vec![a.out.clone()], Some(serde_json::to_value(&points)?))?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        n_records: a.n,
        n_species: a.species,
        absent_rate: a.absent_rate,
        seed: a.seed,
        ..SyntheticConfig::default()
    };
    let c = synthetic::generate(&cfg);
    c.write(&a.out, Format::from_path(&a.out).unwrap_or(Format::Csv))?;
    manifest::write("synth", &a, Some(a.seed), &a.out, vec![a.out.clone()], Some(json!({"records": c.len()})))?;
    Ok(())
}
