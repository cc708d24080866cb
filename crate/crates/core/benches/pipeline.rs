//! Prototype-build throughput: sequential workers vs the rayon pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pdgen_core::backend::scripted::ScriptedBackend;
use pdgen_core::domain::SearchParams;
use pdgen_core::prototype::{build_prototype, AblationFlags};
use pdgen_core::synthetic::{generate_corpus, SimulateConfig};

fn bench_build(c: &mut Criterion) {
    let backend = ScriptedBackend::default();
    let corpus = generate_corpus(
        &SimulateConfig {
            n_students: 8,
            n_past: 40,
            n_test: 4,
            ..SimulateConfig::default()
        },
        backend.pack(),
    )
    .expect("corpus generates");
    let params = SearchParams::default();

    let mut group = c.benchmark_group("build_prototype");
    for (label, workers) in [
        ("sequential", 1usize),
        ("parallel", pdgen_core::par::default_workers()),
    ] {
        group.bench_with_input(
            BenchmarkId::from_parameter(label),
            &workers,
            |b, &workers| {
                b.iter(|| {
                    for dataset in &corpus.datasets {
                        let out = build_prototype(
                            dataset,
                            &params,
                            &backend,
                            AblationFlags::default(),
                            workers,
                        )
                        .expect("build succeeds");
                        std::hint::black_box(out);
                    }
                });
            },
        );
    }
    group.finish();
}

fn bench_recover(c: &mut Criterion) {
    use pdgen_core::domain::QARecord;
    use pdgen_core::mcts::recover;

    let backend = ScriptedBackend::default();
    let record = QARecord {
        record_id: "bench-r1".into(),
        student_id: "bench".into(),
        stem: "Solve for x: -2x + 4 < 10".into(),
        correct_answer: "x > -3".into(),
        chosen_answer: "x < -3".into(),
        options: None,
        timestamp: None,
    };
    let params = SearchParams::default();
    c.bench_function("recover_single_record", |b| {
        b.iter(|| std::hint::black_box(recover(&record, &params, &backend).expect("recover runs")))
    });
}

criterion_group!(benches, bench_build, bench_recover);
criterion_main!(benches);
