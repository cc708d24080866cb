//! The five pipeline commands. Each one reads its inputs from files, writes
//! its outputs plus a run manifest, and keeps no state between invocations:
//! commands compose through file handoff only.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use pdgen_core::distractor::{generate_batch, GenOptions, Question};
use pdgen_core::domain::{
    load_dataset_dir, read_prototype, write_dataset_dir, write_prototype, AnswerText,
    MisconceptionPrototype, PersonalizedDistractor, StudentDataset,
};
use pdgen_core::eval::{
    accuracy, evaluation_report, recall, top_k_by_equivalence, EvaluationReport, StudentAccuracy,
};
use pdgen_core::mcts::{recover_traced, SearchOptions};
use pdgen_core::prototype::{build_prototype, BuildReport};
use pdgen_core::synthetic::generate_corpus;

use crate::config::RunConfig;

/// Snapshot written next to every command's outputs; reproducing a run needs
/// nothing beyond this file and the input data.
#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    backend_kind: String,
    wall_time_ms: u128,
    outputs: Vec<String>,
    config: &'a RunConfig,
}

fn write_manifest(
    config: &RunConfig,
    command: &str,
    outputs: &[PathBuf],
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.search.seed,
        backend_kind: config.backend.kind.to_string(),
        wall_time_ms: started.elapsed().as_millis(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        config,
    };
    let dir = &config.paths.out_dir;
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(format!("manifest-{command}.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing manifest {}", path.display()))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_datasets(config: &RunConfig) -> Result<Vec<StudentDataset>> {
    let dir = &config.paths.data_dir;
    if !dir.join("past.jsonl").exists() {
        bail!(
            "dataset directory {} has no past.jsonl (run `pdgen simulate` or point --data at a dataset)",
            dir.display()
        );
    }
    load_dataset_dir(dir).map_err(|e| anyhow::anyhow!("loading dataset: {e}"))
}

fn prototype_path(config: &RunConfig, student_id: &str) -> PathBuf {
    config
        .paths
        .out_dir
        .join("prototypes")
        .join(format!("{student_id}.json"))
}

fn load_prototype_for(config: &RunConfig, student_id: &str) -> Result<MisconceptionPrototype> {
    let path = prototype_path(config, student_id);
    if !path.exists() {
        bail!(
            "no prototype for student {student_id} at {} (run `pdgen build` first)",
            path.display()
        );
    }
    read_prototype(&path).map_err(|e| anyhow::anyhow!("loading prototype: {e}"))
}

/// Emit a synthetic corpus (datasets plus ground-truth student file).
pub fn cmd_simulate(config: &RunConfig) -> Result<()> {
    let started = Instant::now();
    config.validate()?;
    let pack = config.rule_pack()?;
    let sim_config = config.simulate.to_config(config.search.seed);
    let corpus = generate_corpus(&sim_config, &pack)?;
    let data_dir = &config.paths.data_dir;
    write_dataset_dir(data_dir, &corpus.datasets)?;
    let students_path = data_dir.join("students.json");
    write_json(&students_path, &corpus.students)?;

    #[derive(Serialize)]
    struct SimulateReport {
        n_students: usize,
        n_past_records: usize,
        n_test_records: usize,
        notes: Vec<String>,
    }
    let report = SimulateReport {
        n_students: corpus.datasets.len(),
        n_past_records: corpus.datasets.iter().map(|d| d.past_records.len()).sum(),
        n_test_records: corpus.datasets.iter().map(|d| d.test_records.len()).sum(),
        notes: corpus.notes.clone(),
    };
    let report_path = data_dir.join("simulate_report.json");
    write_json(&report_path, &report)?;
    write_manifest(
        config,
        "simulate",
        &[
            data_dir.join("past.jsonl"),
            data_dir.join("test.jsonl"),
            students_path,
            report_path,
        ],
        started,
    )?;
    println!(
        "simulated {} students ({} past / {} test records) into {}",
        report.n_students,
        report.n_past_records,
        report.n_test_records,
        data_dir.display()
    );
    Ok(())
}

/// Build misconception prototypes for every student in the dataset.
pub fn cmd_build(config: &RunConfig, trace_dir: Option<&Path>) -> Result<()> {
    let started = Instant::now();
    config.validate()?;
    let datasets = load_datasets(config)?;
    let backend = config.build_backend()?;
    let params = config.search.to_params();
    let workers = config.run.effective_workers();
    let mut outputs = Vec::new();
    let mut reports: Vec<BuildReport> = Vec::new();
    for dataset in &datasets {
        let (prototype, report) =
            build_prototype(dataset, &params, backend.as_ref(), config.flags, workers)?;
        let path = write_prototype(&config.paths.out_dir.join("prototypes"), &prototype)?;
        outputs.push(path);
        reports.push(report);
        if let Some(trace_dir) = trace_dir {
            export_traces(config, dataset, trace_dir)?;
        }
    }
    let report_path = config.paths.out_dir.join("build_report.json");
    write_json(&report_path, &reports)?;
    outputs.push(report_path);
    write_manifest(config, "build", &outputs, started)?;
    let recovered: usize = reports.iter().map(|r| r.n_recovered).sum();
    let total: usize = reports.iter().map(|r| r.n_past_records).sum();
    println!(
        "built {} prototypes; recovered {}/{} past records ({:.1}%)",
        reports.len(),
        recovered,
        total,
        100.0 * recovered as f64 / total.max(1) as f64
    );
    Ok(())
}

/// Per-record search-tree dumps for debugging and iteration analysis. Redoes
/// the (deterministic) searches, so traces match the build exactly.
fn export_traces(config: &RunConfig, dataset: &StudentDataset, trace_dir: &Path) -> Result<()> {
    let backend = config.build_backend()?;
    let params = {
        let mut params = config.search.to_params();
        if config.flags.no_eval {
            params.plausibility_weight = 0.0;
        }
        params
    };
    let options = SearchOptions {
        attach_terminal: !config.flags.no_terminal,
    };
    fs::create_dir_all(trace_dir)
        .with_context(|| format!("creating trace directory {}", trace_dir.display()))?;
    for record in &dataset.past_records {
        if let Ok((_, tree)) = recover_traced(record, &params, backend.as_ref(), options) {
            let path = trace_dir.join(format!("{}.json", record.record_id));
            write_json(&path, &tree)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GenerationReportEntry {
    student_id: String,
    n_questions: usize,
    n_generated: usize,
    failures: Vec<(String, String)>,
}

/// Generate personalized distractors for every test record.
pub fn cmd_generate(config: &RunConfig) -> Result<()> {
    let started = Instant::now();
    config.validate()?;
    let datasets = load_datasets(config)?;
    let backend = config.build_backend()?;
    let workers = config.run.effective_workers();
    let options = GenOptions {
        no_concept: config.flags.no_concept,
    };
    let mut outputs = Vec::new();
    let mut report = Vec::new();
    for dataset in &datasets {
        let prototype = load_prototype_for(config, &dataset.student_id)?;
        let questions: Vec<Question> = dataset.test_records.iter().map(Question::from).collect();
        let batch = generate_batch(
            &questions,
            &prototype,
            backend.as_ref(),
            config.search.seed,
            options,
            workers,
        );
        let path = config
            .paths
            .out_dir
            .join("generations")
            .join(format!("{}.jsonl", dataset.student_id));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut body = String::new();
        for item in &batch.generated {
            body.push_str(&serde_json::to_string(item)?);
            body.push('\n');
        }
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        report.push(GenerationReportEntry {
            student_id: dataset.student_id.clone(),
            n_questions: questions.len(),
            n_generated: batch.generated.len(),
            failures: batch
                .failures
                .iter()
                .map(|f| (f.record_id.clone(), f.reason.clone()))
                .collect(),
        });
        outputs.push(path);
    }
    let report_path = config.paths.out_dir.join("generation_report.json");
    write_json(&report_path, &report)?;
    outputs.push(report_path);
    write_manifest(config, "generate", &outputs, started)?;
    let generated: usize = report.iter().map(|r| r.n_generated).sum();
    let total: usize = report.iter().map(|r| r.n_questions).sum();
    println!("generated {generated}/{total} distractors");
    Ok(())
}

fn read_generations(path: &Path) -> Result<Vec<PersonalizedDistractor>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading generations {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: PersonalizedDistractor = serde_json::from_str(line)
            .with_context(|| format!("parsing {} line {}", path.display(), idx + 1))?;
        out.push(item);
    }
    Ok(out)
}

/// Score generated distractors against the students' actual choices.
pub fn cmd_evaluate(config: &RunConfig) -> Result<()> {
    let started = Instant::now();
    config.validate()?;
    let datasets = load_datasets(config)?;
    let mut per_student = Vec::new();
    for dataset in &datasets {
        if dataset.test_records.is_empty() {
            continue;
        }
        let path = config
            .paths
            .out_dir
            .join("generations")
            .join(format!("{}.jsonl", dataset.student_id));
        if !path.exists() {
            bail!(
                "no generations for student {} at {} (run `pdgen generate` first)",
                dataset.student_id,
                path.display()
            );
        }
        let generations = read_generations(&path)?;
        let predictions: Vec<(String, AnswerText)> = generations
            .iter()
            .map(|g| (g.question_record_id.clone(), g.distractor.clone()))
            .collect();
        let acc = accuracy(&predictions, &dataset.test_records)
            .map_err(|e| anyhow::anyhow!("evaluating student {}: {e}", dataset.student_id))?;
        let n_matched = (acc * dataset.test_records.len() as f64).round() as usize;
        per_student.push(StudentAccuracy {
            student_id: dataset.student_id.clone(),
            n_records: dataset.test_records.len(),
            n_matched,
            accuracy: acc,
        });
    }
    let report: EvaluationReport = evaluation_report(per_student);
    let report_path = config.paths.out_dir.join("evaluation.json");
    write_json(&report_path, &report)?;
    write_manifest(config, "evaluate", &[report_path], started)?;
    println!(
        "accuracy: micro {:.3} / macro {:.3} over {} students",
        report.micro_avg_accuracy,
        report.macro_avg_accuracy,
        report.per_student.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct GroupQuestionReport {
    question_id: String,
    stem: String,
    top_distractors: Vec<AnswerText>,
    n_students: usize,
    recall: f64,
}

#[derive(Serialize)]
struct GroupReport {
    k: usize,
    per_question: Vec<GroupQuestionReport>,
    mean_recall: f64,
}

/// Group-level protocol: aggregate per-student distractors per shared
/// question into a top-k set and measure how well it covers the distractors
/// students actually chose.
pub fn cmd_group(config: &RunConfig) -> Result<()> {
    let started = Instant::now();
    config.validate()?;
    let datasets = load_datasets(config)?;
    let k = config.run.top_k;

    // Group test records by stem (shared questions appear across students).
    struct QuestionGroup {
        stem: String,
        generated: Vec<AnswerText>,
        actual: Vec<AnswerText>,
    }
    let mut groups: Vec<QuestionGroup> = Vec::new();
    for dataset in &datasets {
        if dataset.test_records.is_empty() {
            continue;
        }
        let path = config
            .paths
            .out_dir
            .join("generations")
            .join(format!("{}.jsonl", dataset.student_id));
        if !path.exists() {
            bail!(
                "no generations for student {} at {} (run `pdgen generate` first)",
                dataset.student_id,
                path.display()
            );
        }
        let generations = read_generations(&path)?;
        let by_id: Vec<(&String, &AnswerText)> = generations
            .iter()
            .map(|g| (&g.question_record_id, &g.distractor))
            .collect();
        for record in &dataset.test_records {
            let group = match groups.iter_mut().find(|g| g.stem == record.stem) {
                Some(group) => group,
                None => {
                    groups.push(QuestionGroup {
                        stem: record.stem.clone(),
                        generated: Vec::new(),
                        actual: Vec::new(),
                    });
                    groups.last_mut().expect("just pushed")
                }
            };
            group.actual.push(record.chosen_answer.clone());
            if let Some((_, answer)) = by_id.iter().find(|(id, _)| *id == &record.record_id) {
                group.generated.push((*answer).clone());
            }
        }
    }
    if groups.is_empty() {
        bail!("no test records to aggregate");
    }

    let mut per_question = Vec::new();
    let mut recall_sum = 0.0;
    for (index, group) in groups.iter().enumerate() {
        let top = top_k_by_equivalence(&group.generated, k);
        let question_recall = recall(&top, &group.actual)
            .map_err(|e| anyhow::anyhow!("recall for question {}: {e}", index + 1))?;
        recall_sum += question_recall;
        per_question.push(GroupQuestionReport {
            question_id: format!("q{:03}", index + 1),
            stem: group.stem.clone(),
            top_distractors: top,
            n_students: group.actual.len(),
            recall: question_recall,
        });
    }
    let report = GroupReport {
        k,
        mean_recall: recall_sum / per_question.len() as f64,
        per_question,
    };
    let report_path = config.paths.out_dir.join("group_report.json");
    write_json(&report_path, &report)?;
    write_manifest(config, "group", &[report_path], started)?;
    println!(
        "group mode: {} questions, mean recall {:.3} at k={}",
        report.per_question.len(),
        report.mean_recall,
        k
    );
    Ok(())
}

/// Convenience wrapper used by tests: simulate, build, generate, evaluate in
/// one call against the given config.
pub fn run_full_pipeline(config: &RunConfig) -> Result<()> {
    cmd_simulate(config)?;
    cmd_build(config, None)?;
    cmd_generate(config)?;
    cmd_evaluate(config)?;
    Ok(())
}
