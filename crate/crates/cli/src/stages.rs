//! Subcommand bodies. Every stage reads its inputs from the output directory,
//! so running the stages one by one gives the same files as `pipeline`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use bundle_miner::assoc::{associate_models, build_topic_graph, phenotype_topic_id, AssociationMatrix};
use bundle_miner::cluster::{extract_phenotype_clusters, louvain, ClusterReport};
use bundle_miner::evalkit::{anova_csv, anova_paired_arms, generate_random_counterpart, parse_responses};
use bundle_miner::ingest::{
    build_sequences, load_code_map, map_codes, parse_diagnosis_records, parse_event_log, ActionLabel, CodeMap,
    PatientSequence,
};
use bundle_miner::numfmt::{round_sig, SIGNIFICANT_DIGITS};
use bundle_miner::report::{emit_pipeline_report, export_workflow_dot, render_topic_table, topic_table, PipelineArtifacts};
use bundle_miner::seqmine::{bag_to_matrix, collapse_repeats, count_occurrences, mine_with_support};
use bundle_miner::synth::generate_corpus;
use bundle_miner::topics::{
    fit_lda, select_topic_count, sweep_seed, sweep_topic_counts, FitParams, TopicModel, TopicSweepResult,
    DEFAULT_CUTOFF, DEFAULT_TOP_N,
};
use bundle_miner::DocTermMatrix;
use serde::Serialize;

use crate::config::{RunConfig, TopicRange};
use crate::manifest::Recorder;
use crate::CliError;

pub const SUBCOMMANDS: &[&str] = &[
    "ingest",
    "mine",
    "select-k",
    "fit-topics",
    "associate",
    "cluster",
    "report",
    "synth",
    "eval-survey",
    "pipeline",
];

/// Stages chained by `pipeline`, in order.
pub const PIPELINE: &[&str] = &["ingest", "mine", "select-k", "fit-topics", "associate", "cluster", "report"];

pub const SEQUENCES: &str = "sequences.csv";
pub const PATIENTS: &str = "patients.csv";
pub const INGEST_STATS: &str = "ingest-stats.json";
pub const SUBSEQUENCES: &str = "subsequences.csv";
pub const WORKFLOW: &str = "workflow";
pub const PHENOTYPE: &str = "phenotype";
pub const SWEEP_WORKFLOW: &str = "sweep-workflow.json";
pub const SWEEP_PHENOTYPE: &str = "sweep-phenotype.json";
pub const MODEL_WORKFLOW: &str = "workflow-model.json";
pub const MODEL_PHENOTYPE: &str = "phenotype-model.json";
pub const ASSOCIATION: &str = "association.csv";
pub const CLUSTERS: &str = "clusters.json";
pub const REPORT: &str = "report.json";
pub const SUMMARY: &str = "summary.txt";
pub const TOPIC_TABLES: &str = "topic-tables.txt";
pub const DOT_DIR: &str = "dot";
pub const SURVEY_ANOVA: &str = "survey-anova.csv";
pub const COUNTERPARTS: &str = "counterparts.json";
pub const CONFIG_RESOLVED: &str = "config.resolved";

#[derive(Debug, Default)]
pub struct StageOutput {
    pub artifacts: Vec<PathBuf>,
    /// Text for stdout ahead of the artifact list (report and pipeline only).
    pub summary: String,
}

/// Sweep models kept in memory between `select-k` and `fit-topics` inside one
/// `pipeline` run. The fits are deterministic, so reuse changes nothing on disk.
#[derive(Default)]
struct Session {
    models: BTreeMap<&'static str, Vec<TopicModel>>,
}

/// Runs one named subcommand against a resolved config.
pub fn run_subcommand(name: &str, cfg: &RunConfig) -> Result<StageOutput, CliError> {
    if !SUBCOMMANDS.contains(&name) {
        return Err(CliError::Usage(format!(
            "unknown subcommand {name:?}; expected one of {}",
            SUBCOMMANDS.join(", ")
        )));
    }
    check_required(name, cfg)?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| data_io(dir, e))?;
    let resolved = dir.join(CONFIG_RESOLVED);
    write_text(&resolved, &cfg.to_flat())?;

    let mut session = Session::default();
    if name == "pipeline" {
        let mut all = Recorder::new("pipeline");
        let mut summary = String::new();
        // Stage manifests carry timings, so they are listed but not digested.
        let mut manifests = Vec::new();
        for stage in PIPELINE {
            let out = all.stage(stage, |_| run_stage(stage, cfg, &mut session))?;
            for p in out.artifacts {
                if is_manifest(&p) {
                    manifests.push(p);
                } else {
                    all.output(p);
                }
            }
            summary = out.summary;
        }
        all.output(resolved);
        let mut artifacts = all.outputs().to_vec();
        artifacts.extend(manifests);
        artifacts.push(all.finish(dir, cfg.to_map())?);
        return Ok(StageOutput { artifacts, summary });
    }
    let mut out = run_stage(name, cfg, &mut session)?;
    out.artifacts.insert(0, resolved);
    Ok(out)
}

/// Rejects a config that lacks what the stage needs before anything is written.
fn check_required(name: &str, cfg: &RunConfig) -> Result<(), CliError> {
    let need = |v: &Option<PathBuf>, key: &str| {
        v.as_ref()
            .map(|_| ())
            .ok_or_else(|| CliError::Usage(format!("`{name}` needs config key {key} (or --{key})")))
    };
    if name == "ingest" || name == "pipeline" {
        need(&cfg.events, "events")?;
        need(&cfg.diagnoses, "diagnoses")?;
    }
    if name == "eval-survey" {
        need(&cfg.responses, "responses")?;
    }
    Ok(())
}

fn run_stage(name: &str, cfg: &RunConfig, session: &mut Session) -> Result<StageOutput, CliError> {
    let mut rec = Recorder::new(name);
    let summary = match name {
        "ingest" => ingest(cfg, &mut rec)?,
        "mine" => mine(cfg, &mut rec)?,
        "select-k" => select_k(cfg, &mut rec, session)?,
        "fit-topics" => fit_topics(cfg, &mut rec, session)?,
        "associate" => associate(cfg, &mut rec)?,
        "cluster" => cluster(cfg, &mut rec)?,
        "report" => report(cfg, &mut rec)?,
        "synth" => synth(cfg, &mut rec)?,
        "eval-survey" => eval_survey(cfg, &mut rec)?,
        other => return Err(CliError::Invariant(format!("stage {other:?} is not runnable on its own"))),
    };
    let mut artifacts = rec.outputs().to_vec();
    artifacts.push(rec.finish(&cfg.out_dir, cfg.to_map())?);
    Ok(StageOutput { artifacts, summary })
}

fn is_manifest(path: &Path) -> bool {
    path.file_name().is_some_and(|n| n.to_string_lossy().starts_with("manifest-"))
}

fn data_io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| data_io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value).map_err(|e| CliError::Invariant(e.to_string()))? + "\n")
}

/// An artifact another subcommand should have produced.
fn artifact(cfg: &RunConfig, file: &str, producer: &str) -> Result<PathBuf, CliError> {
    let path = cfg.out_dir.join(file);
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Data(format!(
            "missing {}; run `bundle-miner {producer}` first",
            path.display()
        )))
    }
}

fn matrix_input(cfg: &RunConfig, rec: &mut Recorder, prefix: &str, producer: &str) -> Result<DocTermMatrix, CliError> {
    for p in DocTermMatrix::file_paths(&cfg.out_dir, prefix) {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        rec.input(artifact(cfg, &name, producer)?);
    }
    Ok(DocTermMatrix::read(&cfg.out_dir, prefix)?)
}

fn write_matrix(cfg: &RunConfig, rec: &mut Recorder, m: &DocTermMatrix, prefix: &str) -> Result<(), CliError> {
    m.write(&cfg.out_dir, prefix)?;
    for p in DocTermMatrix::file_paths(&cfg.out_dir, prefix) {
        rec.output(p);
    }
    Ok(())
}

fn code_map(cfg: &RunConfig, rec: &mut Recorder) -> Result<Option<CodeMap>, CliError> {
    match &cfg.codemap {
        Some(p) => {
            rec.input(p.clone());
            Ok(Some(load_code_map(p)?))
        }
        None => Ok(None),
    }
}

#[derive(Serialize)]
struct IngestStats {
    events: usize,
    patients_with_events: usize,
    patients: usize,
    diagnosis_records: usize,
    unmapped_records: usize,
    unmapped_occurrences: u64,
    dropped_occurrences: u64,
}

fn ingest(cfg: &RunConfig, rec: &mut Recorder) -> Result<String, CliError> {
    let events = cfg.events.clone().ok_or_else(|| CliError::Usage("events path not set".into()))?;
    let diagnoses = cfg.diagnoses.clone().ok_or_else(|| CliError::Usage("diagnoses path not set".into()))?;
    rec.input(events.clone());
    rec.input(diagnoses.clone());
    let log = rec.stage("parse-events", |_| Ok(parse_event_log(&events)?))?;
    let sequences = build_sequences(&log, cfg.label_rule);
    let records = rec.stage("parse-diagnoses", |_| Ok(parse_diagnosis_records(&diagnoses)?))?;
    let map = code_map(cfg, rec)?.unwrap_or_default();
    let mapped = map_codes(&records, &map, cfg.unmapped_policy);

    let universe: Vec<String> = sequences
        .iter()
        .map(|s| s.patient_id.clone())
        .chain(mapped.records.iter().map(|r| r.patient_id.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let phenotype = bag_to_matrix(&mapped.records)?.align_docs(&universe)?;

    let dir = &cfg.out_dir;
    let seq_path = dir.join(SEQUENCES);
    write_sequences(&seq_path, &sequences)?;
    rec.output(seq_path);
    let patients_path = dir.join(PATIENTS);
    let mut text = String::from("patient_id\n");
    for p in &universe {
        text.push_str(&csv_field(p));
        text.push('\n');
    }
    write_text(&patients_path, &text)?;
    rec.output(patients_path);
    write_matrix(cfg, rec, &phenotype, PHENOTYPE)?;

    let stats = IngestStats {
        events: log.event_count(),
        patients_with_events: sequences.len(),
        patients: universe.len(),
        diagnosis_records: records.len(),
        unmapped_records: mapped.unmapped_records,
        unmapped_occurrences: mapped.unmapped_occurrences,
        dropped_occurrences: mapped.dropped_occurrences,
    };
    let stats_path = dir.join(INGEST_STATS);
    write_text(&stats_path, &to_json(&stats)?)?;
    rec.output(stats_path);
    Ok(String::new())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `patient_id,step,label`, one row per event in sequence order.
fn write_sequences(path: &Path, sequences: &[PatientSequence]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(["patient_id", "step", "label"]).map_err(err)?;
    for s in sequences {
        for (i, l) in s.labels.iter().enumerate() {
            w.write_record([s.patient_id.as_str(), &i.to_string(), l.as_str()]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| data_io(path, e))
}

fn read_sequences(path: &Path) -> Result<Vec<PatientSequence>, CliError> {
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let mut out: Vec<PatientSequence> = Vec::new();
    for row in r.records() {
        let row = row.map_err(err)?;
        let (pid, label) = (&row[0], &row[2]);
        match out.last_mut() {
            Some(last) if last.patient_id == pid => last.labels.push(ActionLabel(label.to_string())),
            _ => out.push(PatientSequence {
                patient_id: pid.to_string(),
                labels: vec![ActionLabel(label.to_string())],
            }),
        }
    }
    Ok(out)
}

fn read_patients(path: &Path) -> Result<Vec<String>, CliError> {
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.records().map(|row| Ok(row.map_err(err)?[0].to_string())).collect()
}

fn mine(cfg: &RunConfig, rec: &mut Recorder) -> Result<String, CliError> {
    let seq_path = artifact(cfg, SEQUENCES, "ingest")?;
    let patients_path = artifact(cfg, PATIENTS, "ingest")?;
    rec.input(seq_path.clone());
    rec.input(patients_path.clone());
    let mut sequences = read_sequences(&seq_path)?;
    if cfg.collapse_repeats {
        sequences = sequences.iter().map(collapse_repeats).collect();
    }
    let patients = read_patients(&patients_path)?;
    let min_support = cfg.min_support.resolve(sequences.len());
    let vocab = rec.stage("mine", |_| Ok(mine_with_support(&sequences, min_support, cfg.max_len)?))?;

    let sub_path = cfg.out_dir.join(SUBSEQUENCES);
    let mut text = String::from("subsequence,support\n");
    for (s, support) in &vocab {
        text.push_str(&format!("{},{support}\n", csv_field(&s.to_string())));
    }
    write_text(&sub_path, &text)?;
    rec.output(sub_path);

    let terms: Vec<_> = vocab.into_iter().map(|(s, _)| s).collect();
    let workflow = rec.stage("count", |_| Ok(count_occurrences(&sequences, &terms)?.align_docs(&patients)?))?;
    write_matrix(cfg, rec, &workflow, WORKFLOW)?;
    Ok(String::new())
}

struct Corpus {
    label: &'static str,
    prefix: &'static str,
    sweep_file: &'static str,
    model_file: &'static str,
}

const CORPORA: [Corpus; 2] = [
    Corpus { label: "workflow", prefix: WORKFLOW, sweep_file: SWEEP_WORKFLOW, model_file: MODEL_WORKFLOW },
    Corpus { label: "phenotype", prefix: PHENOTYPE, sweep_file: SWEEP_PHENOTYPE, model_file: MODEL_PHENOTYPE },
];

impl Corpus {
    fn range(&self, cfg: &RunConfig) -> TopicRange {
        if self.prefix == WORKFLOW {
            cfg.k_range
        } else {
            cfg.q_range
        }
    }

    fn producer(&self) -> &'static str {
        if self.prefix == WORKFLOW {
            "mine"
        } else {
            "ingest"
        }
    }
}

fn select_k(cfg: &RunConfig, rec: &mut Recorder, session: &mut Session) -> Result<String, CliError> {
    for corpus in &CORPORA {
        let m = matrix_input(cfg, rec, corpus.prefix, corpus.producer())?;
        let range = corpus.range(cfg);
        let params = cfg.fit_params();
        let mut sweep = rec.stage(&format!("sweep-{}", corpus.label), |_| {
            if range.min == range.max {
                Ok(select_topic_count(&m, range.min, range.max, &params)?)
            } else {
                let (sweep, models) = sweep_topic_counts(&m, range.min, range.max, &params)?;
                session.models.insert(corpus.label, models);
                Ok(sweep)
            }
        })?;
        for c in &mut sweep.candidates {
            c.similarity = c.similarity.map(|s| round_sig(s, SIGNIFICANT_DIGITS));
        }
        let path = cfg.out_dir.join(corpus.sweep_file);
        write_text(&path, &to_json(&sweep)?)?;
        rec.output(path);
    }
    Ok(String::new())
}

fn load_sweep(path: &Path) -> Result<TopicSweepResult, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| data_io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn fit_topics(cfg: &RunConfig, rec: &mut Recorder, session: &mut Session) -> Result<String, CliError> {
    for corpus in &CORPORA {
        let sweep_path = artifact(cfg, corpus.sweep_file, "select-k")?;
        rec.input(sweep_path.clone());
        let k = load_sweep(&sweep_path)?.chosen_k;
        let cached = session
            .models
            .get(corpus.label)
            .and_then(|ms| ms.iter().find(|m| m.k == k))
            .cloned();
        let model = match cached {
            Some(m) => m,
            None => {
                let m = matrix_input(cfg, rec, corpus.prefix, corpus.producer())?;
                let params = FitParams { seed: sweep_seed(cfg.seed_topics, k), ..cfg.fit_params() };
                rec.stage(&format!("fit-{}", corpus.label), |_| Ok(fit_lda(&m, k, &params)?))?
            }
        };
        let path = cfg.out_dir.join(corpus.model_file);
        model.save(&path)?;
        rec.output(path);
    }
    Ok(String::new())
}

fn load_models(cfg: &RunConfig, rec: &mut Recorder) -> Result<(TopicModel, TopicModel), CliError> {
    let wf = artifact(cfg, MODEL_WORKFLOW, "fit-topics")?;
    let ph = artifact(cfg, MODEL_PHENOTYPE, "fit-topics")?;
    rec.input(wf.clone());
    rec.input(ph.clone());
    Ok((TopicModel::load(&wf)?, TopicModel::load(&ph)?))
}

fn associate(cfg: &RunConfig, rec: &mut Recorder) -> Result<String, CliError> {
    let (wf, ph) = load_models(cfg, rec)?;
    let a = associate_models(&wf, &ph)?;
    let path = cfg.out_dir.join(ASSOCIATION);
    a.save(&path)?;
    rec.output(path);
    Ok(String::new())
}

fn cluster(cfg: &RunConfig, rec: &mut Recorder) -> Result<String, CliError> {
    let path = artifact(cfg, ASSOCIATION, "associate")?;
    rec.input(path.clone());
    let a = AssociationMatrix::load(&path)?;
    let graph = build_topic_graph(&a, cfg.weight_threshold)?;
    let report = rec.stage("louvain", |_| {
        let partition = louvain(&graph, cfg.seed_louvain)?;
        Ok(extract_phenotype_clusters(&partition, &graph)?)
    })?;
    let out = cfg.out_dir.join(CLUSTERS);
    report.save(&out)?;
    rec.output(out);
    Ok(String::new())
}

/// Config recorded in the report: everything except the output location, so
/// the same run written elsewhere produces the same bytes.
fn report_config(cfg: &RunConfig) -> BTreeMap<String, String> {
    let mut map = cfg.to_map();
    map.remove("out_dir");
    map
}

fn report(cfg: &RunConfig, rec: &mut Recorder) -> Result<String, CliError> {
    let mut sweeps = Vec::new();
    for corpus in &CORPORA {
        let p = artifact(cfg, corpus.sweep_file, "select-k")?;
        rec.input(p.clone());
        sweeps.push(load_sweep(&p)?);
    }
    let (wf, ph) = load_models(cfg, rec)?;
    let assoc = artifact(cfg, ASSOCIATION, "associate")?;
    rec.input(assoc);
    let clusters_path = artifact(cfg, CLUSTERS, "cluster")?;
    rec.input(clusters_path.clone());
    let clusters = ClusterReport::load(&clusters_path)?;
    let codes = code_map(cfg, rec)?;

    let (json, summary) = emit_pipeline_report(&PipelineArtifacts {
        config: report_config(cfg),
        workflow_sweep: Some(&sweeps[0]),
        phenotype_sweep: Some(&sweeps[1]),
        workflow_model: Some(&wf),
        phenotype_model: Some(&ph),
        code_map: codes.as_ref(),
        association_path: Some(ASSOCIATION.to_string()),
        weight_threshold: cfg.weight_threshold,
        clusters: Some(&clusters),
    })?;
    let dir = &cfg.out_dir;
    for (name, body) in [(REPORT, &json), (SUMMARY, &summary)] {
        let p = dir.join(name);
        write_text(&p, body)?;
        rec.output(p);
    }

    let mut tables = String::new();
    for (model, codes, prefix) in [(&wf, None, "w"), (&ph, codes.as_ref(), "h")] {
        for t in 0..model.k {
            let rows = topic_table(model, t, DEFAULT_TOP_N, codes)?;
            tables.push_str(&render_topic_table(&format!("{prefix}{}", t + 1), &rows));
            tables.push('\n');
        }
    }
    let p = dir.join(TOPIC_TABLES);
    write_text(&p, &tables)?;
    rec.output(p);

    let dot_dir = dir.join(DOT_DIR);
    std::fs::create_dir_all(&dot_dir).map_err(|e| data_io(&dot_dir, e))?;
    for t in 0..wf.k {
        let p = dot_dir.join(format!("w{}.dot", t + 1));
        write_text(&p, &export_workflow_dot(&wf, t, DEFAULT_TOP_N, DEFAULT_CUTOFF)?)?;
        rec.output(p);
    }
    Ok(summary)
}

fn synth(cfg: &RunConfig, rec: &mut Recorder) -> Result<String, CliError> {
    let corpus = rec.stage("generate", |_| Ok(generate_corpus(&cfg.synth)?))?;
    corpus.write(&cfg.out_dir)?;
    for name in ["events.csv", "diagnoses.csv", "codemap.csv", "truth.json"] {
        rec.output(cfg.out_dir.join(name));
    }
    Ok(String::new())
}

fn eval_survey(cfg: &RunConfig, rec: &mut Recorder) -> Result<String, CliError> {
    let responses_path = cfg.responses.clone().ok_or_else(|| CliError::Usage("responses path not set".into()))?;
    rec.input(responses_path.clone());
    let file = std::fs::File::open(&responses_path).map_err(|e| data_io(&responses_path, e))?;
    let responses = parse_responses(file, &responses_path.display().to_string())?;
    let results = anova_paired_arms(&responses)?;
    let anova_path = cfg.out_dir.join(SURVEY_ANOVA);
    write_text(&anova_path, &anova_csv(&results))?;
    rec.output(anova_path);

    let clusters_path = artifact(cfg, CLUSTERS, "cluster")?;
    let model_path = artifact(cfg, MODEL_PHENOTYPE, "fit-topics")?;
    rec.input(clusters_path.clone());
    rec.input(model_path.clone());
    let clusters = ClusterReport::load(&clusters_path)?;
    let model = TopicModel::load(&model_path)?;
    let ids: Vec<String> = (0..model.k).map(phenotype_topic_id).collect();
    let all: Vec<usize> = (0..model.k).collect();

    let mut counterparts = BTreeMap::new();
    for (i, c) in clusters.clusters.iter().enumerate() {
        let inferred = c
            .phenotype_topics
            .iter()
            .map(|id| {
                ids.iter()
                    .position(|x| x == id)
                    .ok_or_else(|| CliError::Data(format!("cluster {} names unknown topic {id}", c.id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let seed = crate::config::derive_seed(cfg.seed_counterpart, i as u64);
        let entry = match generate_random_counterpart(&inferred, &all, &model, seed) {
            Ok(cp) => serde_json::to_value(cp).map_err(|e| CliError::Invariant(e.to_string()))?,
            Err(e) => serde_json::json!({ "error": e.to_string() }),
        };
        counterparts.insert(c.id.clone(), entry);
    }
    let cp_path = cfg.out_dir.join(COUNTERPARTS);
    write_text(&cp_path, &to_json(&counterparts)?)?;
    rec.output(cp_path);
    Ok(String::new())
}
