use std::hint::black_box;
use std::sync::Arc;

use carleson_bench::ball_instance;
use carleson_core::bergman::{BergmanGeometry, NetOptions};
use carleson_core::conditions::{simple_condition, split_tree_condition, tree_condition, SplitOptions};
use carleson_core::linalg::PowerOptions;
use carleson_core::operators::{operator_norm, NormMethod, OperatorKind, TreeOperator};
use carleson_core::{Tree, TreeMeasure};
use criterion::{criterion_group, criterion_main, Criterion};

fn tree_conditions(c: &mut Criterion) {
    let tree = Tree::binary(14);
    let w: Vec<f64> = (0..tree.len()).map(|i| ((i * 2654435761) % 1000) as f64 / 1000.0).collect();
    let mu = TreeMeasure::new(&tree, w).unwrap();
    c.bench_function("simple condition, binary depth 14", |b| b.iter(|| simple_condition(&tree, black_box(&mu), 0.5)));
    c.bench_function("tree condition, binary depth 14", |b| b.iter(|| tree_condition(&tree, black_box(&mu), 0.5)));
}

fn bergman(c: &mut Criterion) {
    c.bench_function("geometry n=2 depth 10", |b| {
        b.iter(|| Arc::new(BergmanGeometry::build(2, black_box(10), NetOptions::default()).unwrap()))
    });
    let (_, bt, tm) = ball_instance(2, 8, 200, 1);
    c.bench_function("split condition n=2 depth 8, 200 atoms", |b| {
        b.iter(|| split_tree_condition(&bt, black_box(&tm), SplitOptions::default()))
    });
    let op = TreeOperator::on_bergman(OperatorKind::TFull(carleson_core::bergman::DStarMode::Analytic), &bt).unwrap();
    let mut g = c.benchmark_group("full operator norm n=2 depth 8");
    g.sample_size(10);
    g.bench_function("dense", |b| b.iter(|| operator_norm(&op, &tm, NormMethod::Dense, PowerOptions::default()).unwrap()));
    g.bench_function("power", |b| b.iter(|| operator_norm(&op, &tm, NormMethod::Power, PowerOptions::default()).unwrap()));
    g.finish();
}

criterion_group!(benches, tree_conditions, bergman);
criterion_main!(benches);
