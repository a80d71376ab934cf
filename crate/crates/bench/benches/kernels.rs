use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gcmt_core::cluster::kmeans;
use gcmt_core::evalkit::{evaluate, RetrievalSet};
use gcmt_core::graphs::{build_student_graph, fused_teacher_graph};
use gcmt_core::losses::gcc_loss;
use gcmt_core::model::Network;
use gcmt_core::numcore::{l2_normalize_rows, Matrix};
use gcmt_core::rng::{rng_for, Rng};
use gcmt_core::synthdata::{default_task, generate_domain, Split};
use gcmt_core::trainer::{train_iteration, TrainConfig, TrainState};
use rand::Rng as _;

fn unit_rows(rng: &mut Rng, n: usize, d: usize) -> Matrix {
    l2_normalize_rows(&Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0)))
}

fn linear_algebra(c: &mut Criterion) {
    let mut rng = rng_for(1, 0);
    let a = Matrix::from_fn(64, 32, |_, _| rng.random_range(-1.0..1.0));
    let b = Matrix::from_fn(32, 64, |_, _| rng.random_range(-1.0..1.0));
    c.bench_function("matmul 64x32x64", |bn| bn.iter(|| black_box(&a).matmul(black_box(&b)).unwrap()));
    c.bench_function("matmul_t 64x32x64", |bn| bn.iter(|| black_box(&a).matmul_t(black_box(&a)).unwrap()));
}

fn graphs_and_losses(c: &mut Criterion) {
    let mut rng = rng_for(2, 0);
    let teachers: Vec<Matrix> = (0..2).map(|_| unit_rows(&mut rng, 64, 16)).collect();
    let refs: Vec<&Matrix> = teachers.iter().collect();
    let student = unit_rows(&mut rng, 64, 16);
    c.bench_function("fused teacher graph B=64 K=12 m=2", |bn| {
        bn.iter(|| fused_teacher_graph(black_box(&refs), 12).unwrap())
    });
    c.bench_function("student graph B=64", |bn| {
        bn.iter(|| build_student_graph(black_box(&student), 0.05).unwrap())
    });
    let fused = fused_teacher_graph(&refs, 12).unwrap();
    let graphs = vec![build_student_graph(&student, 0.05).unwrap()];
    c.bench_function("gcc loss B=64 K=12", |bn| {
        bn.iter(|| gcc_loss(black_box(&graphs), black_box(&fused), 12).unwrap())
    });
}

fn clustering_and_eval(c: &mut Criterion) {
    let mut rng = rng_for(3, 0);
    let x = unit_rows(&mut rng, 1600, 16);
    c.bench_function("kmeans n=1600 C=100", |bn| bn.iter(|| kmeans(black_box(&x), 100, 50, 0).unwrap()));
    let q = unit_rows(&mut rng, 400, 16);
    let g = unit_rows(&mut rng, 400, 16);
    let ids: Vec<usize> = (0..400).map(|i| i % 100).collect();
    let cams: Vec<usize> = (0..400).map(|i| (i / 100) % 4).collect();
    let (qs, gs) = (
        RetrievalSet::new(&q, &ids, &cams).unwrap(),
        RetrievalSet::new(&g, &ids, &cams).unwrap(),
    );
    c.bench_function("evaluate 400x400", |bn| bn.iter(|| evaluate(black_box(&qs), black_box(&gs)).unwrap()));
}

fn training(c: &mut Criterion) {
    let [_, tgt] = default_task(0);
    let target = generate_domain(&tgt).unwrap();
    let data = target.split(Split::Train).features;
    let config = TrainConfig::desk();
    let net = Network::random(&gcmt_core::model::default_dims(data.cols()), 10, &mut rng_for(4, 0)).unwrap();
    let mut state = TrainState::new(&config, &[net]).unwrap();
    state.relabel(&config, &data).unwrap();
    c.bench_function("train iteration desk", |bn| {
        bn.iter(|| train_iteration(&mut state, &config, &data).unwrap())
    });
}

criterion_group!(benches, linear_algebra, graphs_and_losses, clustering_and_eval, training);
criterion_main!(benches);
