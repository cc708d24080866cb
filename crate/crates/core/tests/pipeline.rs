//! Library-level pipeline test: synthetic corpus to dataset files, files to
//! prototypes, prototypes to distractors, distractors to metrics — checking
//! the cross-module invariants along the way.

use std::collections::HashSet;

use pdgen_core::backend::scripted::ScriptedBackend;
use pdgen_core::distractor::{generate_batch, GenOptions, Question};
use pdgen_core::domain::{
    load_dataset_dir, read_prototype, validate_dataset, write_dataset_dir, write_prototype,
    AnswerText, SearchParams,
};
use pdgen_core::eval::{accuracy, answers_equivalent};
use pdgen_core::prototype::{build_prototype, AblationFlags};
use pdgen_core::synthetic::{generate_corpus, SimulateConfig};

#[test]
fn corpus_to_metrics_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let backend = ScriptedBackend::default();
    let config = SimulateConfig {
        n_students: 4,
        n_past: 10,
        n_test: 5,
        rules_per_student: 1,
        seed: 99,
        shared_test: false,
    };
    let corpus = generate_corpus(&config, backend.pack()).unwrap();
    write_dataset_dir(dir.path(), &corpus.datasets).unwrap();

    // The on-disk format round-trips and validates.
    let datasets = load_dataset_dir(dir.path()).unwrap();
    assert_eq!(datasets, corpus.datasets);
    for dataset in &datasets {
        assert!(validate_dataset(dataset).is_empty());
    }

    let params = SearchParams::default();
    let mut accuracies = Vec::new();
    for dataset in &datasets {
        let (prototype, report) =
            build_prototype(dataset, &params, &backend, AblationFlags::default(), 2).unwrap();

        // Record-role partition: every past record appears exactly once as
        // either supported or unrecovered.
        let mut supported: HashSet<&str> = HashSet::new();
        for entry in &prototype.entries {
            assert_eq!(entry.support_count, entry.supporting_trajectories.len());
            assert!(entry.support_count >= 1);
            for s in &entry.supporting_trajectories {
                supported.insert(&s.record_id);
                // Supporting trajectories end in the student's chosen answer.
                let record = dataset
                    .past_records
                    .iter()
                    .find(|r| r.record_id == s.record_id)
                    .expect("supporting record exists in the dataset");
                assert!(answers_equivalent(
                    s.trajectory.final_answer.as_str(),
                    record.chosen_answer.as_str()
                ));
            }
        }
        for record in &dataset.past_records {
            let is_supported = supported.contains(record.record_id.as_str());
            let is_unrecovered = prototype.unrecovered_record_ids.contains(&record.record_id);
            assert!(
                is_supported != is_unrecovered,
                "record {} must appear in exactly one role",
                record.record_id
            );
        }
        // Fan-out: per-concept support sums to at least the matched count.
        let total_support: usize = prototype.entries.iter().map(|e| e.support_count).sum();
        assert!(total_support >= report.n_recovered);

        // Concepts are unique across entries.
        let mut labels = HashSet::new();
        for entry in &prototype.entries {
            assert!(labels.insert(entry.concept.label().to_string()));
        }

        // Prototype file round-trips byte-for-byte.
        let path = write_prototype(&dir.path().join("prototypes"), &prototype).unwrap();
        let loaded = read_prototype(&path).unwrap();
        assert_eq!(loaded, prototype);

        let questions: Vec<Question> = dataset.test_records.iter().map(Question::from).collect();
        let batch = generate_batch(
            &questions,
            &prototype,
            &backend,
            params.seed,
            GenOptions::default(),
            2,
        );
        // Generated distractors never equal the correct answer.
        for item in &batch.generated {
            let record = dataset
                .test_records
                .iter()
                .find(|r| r.record_id == item.question_record_id)
                .unwrap();
            assert!(!answers_equivalent(
                item.distractor.as_str(),
                record.correct_answer.as_str()
            ));
        }
        let predictions: Vec<(String, AnswerText)> = batch
            .generated
            .iter()
            .map(|g| (g.question_record_id.clone(), g.distractor.clone()))
            .collect();
        accuracies.push(accuracy(&predictions, &dataset.test_records).unwrap());
    }

    // Single-rule synthetic students are highly predictable end to end.
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    assert!(
        mean >= 0.8,
        "end-to-end accuracy {mean:.3} unexpectedly low: {accuracies:?}"
    );
}
