use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use lesionloc::label_correction::CorrectionMethod;
use lesionloc::lesion_ops::threshold_components;
use lesionloc::manifest::Settings;
use lesionloc::metrics::{froc_points, DetectionCriterion, EvalCase};
use lesionloc::nifti::{load_volume, save_volume};
use lesionloc::pipeline::correct_case;
use lesionloc::report_parser::parse_report;
use lesionloc::synthgen::{gen_case, SynthParams};
use lesionloc_bench::{large_case, small_case};

fn components(c: &mut Criterion) {
    let small = small_case(1);
    let large = large_case(1);
    c.bench_function("threshold_components 96x96x24", |b| b.iter(|| threshold_components(black_box(&small.teacher), 0.5)));
    c.bench_function("threshold_components 256x256x30", |b| b.iter(|| threshold_components(black_box(&large.teacher), 0.5)));
}

fn correction(c: &mut Criterion) {
    let case = large_case(2);
    let maps = [case.teacher.clone()];
    let settings = Settings::default();
    for (name, method) in [("location", CorrectionMethod::LocationBased), ("count", CorrectionMethod::CountBased)] {
        c.bench_function(&format!("correct_case {name} 256x256x30"), |b| {
            b.iter(|| correct_case(&case.prostate, &maps, black_box(&case.report), method, &settings))
        });
    }
}

fn reports(c: &mut Criterion) {
    let report = small_case(3).report;
    c.bench_function("parse_report", |b| b.iter(|| parse_report(black_box(&report))));
}

fn froc(c: &mut Criterion) {
    let cases: Vec<_> = (0..10).map(|i| gen_case(&SynthParams { seed: 4, ..SynthParams::default() }, i).unwrap()).collect();
    let eval: Vec<EvalCase> = cases.iter().map(|c| EvalCase { gt: &c.gt_mask, prediction: &c.teacher }).collect();
    let thresholds: Vec<f64> = (1..=19).map(|k| k as f64 / 20.0).collect();
    let opts = Settings::default().component_options();
    c.bench_function("froc_points 10 cases x 19 thresholds", |b| {
        b.iter(|| froc_points(black_box(&eval), &thresholds, DetectionCriterion::STRICT, &opts))
    });
}

fn io(c: &mut Criterion) {
    let case = large_case(5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("teacher.nii.gz");
    save_volume(&case.teacher, &path).unwrap();
    c.bench_function("save_volume gz 256x256x30", |b| {
        b.iter_batched(|| dir.path().join("out.nii.gz"), |p| save_volume(&case.teacher, p), BatchSize::SmallInput)
    });
    c.bench_function("load_volume gz 256x256x30", |b| b.iter(|| load_volume(black_box(&path), None)));
}

fn synth(c: &mut Criterion) {
    let params = SynthParams::default();
    c.bench_function("gen_case 96x96x24", |b| b.iter(|| gen_case(black_box(&params), 7)));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = components, correction, reports, froc, io, synth
}
criterion_main!(benches);
