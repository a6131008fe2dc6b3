use std::hint::black_box;

use benchcert_core::replay::{
    calibrate, clopper_pearson_upper, run_replay, AcquisitionOracle, CalibrationMode, CalibrationRule, ReplayConfig,
};
use benchcert_core::{
    build_fibers, completion_curve, delta_q, run_audit, ActionAlphabet, CandidateTable, CompletionPolicy,
    EvidenceColumn, FiberRule, Probe, ProbePool, ResponseGeometry,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn continuous_table(n: usize, seed: u64) -> CandidateTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = x.iter().zip(&z).map(|(a, b)| usize::from(a + 0.3 * b > 0.0)).collect();
    CandidateTable::new(
        (0..n).map(|i| format!("c{i}")).collect(),
        vec![
            EvidenceColumn::Continuous { name: "e_x".into(), values: x },
            EvidenceColumn::Continuous { name: "e_z".into(), values: z },
        ],
    )
    .unwrap()
    .with_label_indices(ActionAlphabet::binary(), labels)
    .unwrap()
}

fn grouped_table(n: usize, seed: u64) -> CandidateTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<String> = (0..n).map(|i| format!("g{}", i % 40)).collect();
    let labels = (0..n)
        .map(|i| if i % 40 < 30 { i % 2 } else { usize::from(rng.random_bool(0.3)) })
        .collect();
    CandidateTable::new(
        (0..n).map(|i| format!("c{i}")).collect(),
        vec![EvidenceColumn::Discrete { name: "e_g".into(), values: groups }],
    )
    .unwrap()
    .with_label_indices(ActionAlphabet::binary(), labels)
    .unwrap()
}

fn random_vectors(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn fibers(c: &mut Criterion) {
    let mut group = c.benchmark_group("fibers");
    for n in [1_000, 10_000] {
        let table = continuous_table(n, 1);
        group.bench_with_input(BenchmarkId::new("quantile_build", n), &table, |b, t| {
            b.iter(|| build_fibers(black_box(t), FiberRule::Quantile { bins_per_dim: 10 }).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("quantile_audit", n), &table, |b, t| {
            b.iter(|| run_audit(black_box(t), FiberRule::Quantile { bins_per_dim: 10 }, None, None).unwrap())
        });
    }
    let table = continuous_table(2_000, 2);
    group.bench_function("knn_build/2000", |b| {
        b.iter(|| build_fibers(black_box(&table), FiberRule::NearestNeighbour { k: 10 }).unwrap())
    });
    group.finish();
}

fn geometry(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut group = c.benchmark_group("geometry");
    for dim in [16, 64] {
        let probes = random_vectors(&mut rng, dim / 2, dim);
        let k = random_vectors(&mut rng, 1, dim).remove(0);
        let q = random_vectors(&mut rng, 1, dim).remove(0);
        group.bench_function(BenchmarkId::new("build", dim), |b| {
            b.iter(|| ResponseGeometry::with_default_tolerance(black_box(&probes), black_box(&k)).unwrap())
        });
        let geo = ResponseGeometry::with_default_tolerance(&probes, &k).unwrap();
        group.bench_function(BenchmarkId::new("delta_q", dim), |b| b.iter(|| delta_q(&geo, black_box(&q)).unwrap()));
    }
    group.finish();
}

fn completion(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dim = 32;
    let probes = random_vectors(&mut rng, 8, dim);
    let k = random_vectors(&mut rng, 1, dim).remove(0);
    let geo = ResponseGeometry::with_default_tolerance(&probes, &k).unwrap();
    let pool = ProbePool::new(
        random_vectors(&mut rng, 40, dim)
            .into_iter()
            .enumerate()
            .map(|(i, vector)| Probe { id: format!("q{i:02}"), vector, cost: 1.0 + (i % 3) as f64 })
            .collect(),
    )
    .unwrap();
    let budgets: Vec<f64> = (1..=10).map(|b| f64::from(b) * 3.0).collect();
    let certifier = |g: &ResponseGeometry| Ok(1.0 / (1.0 + g.residual_norm()));
    c.bench_function("completion_curve/residual_greedy", |b| {
        b.iter(|| completion_curve(&geo, &pool, CompletionPolicy::ResidualGreedy, &certifier, &budgets, None).unwrap())
    });
}

fn replay(c: &mut Criterion) {
    let table = grouped_table(4_000, 5);
    let rule = CalibrationRule { min_support: 50, mode: CalibrationMode::Unanimity };
    c.bench_function("calibrate/4000", |b| {
        b.iter(|| calibrate(black_box(&table), FiberRule::ExactPattern, rule).unwrap())
    });
    let config = ReplayConfig {
        rule: FiberRule::ExactPattern,
        cal_rule: rule,
        oracle: AcquisitionOracle::Exact,
        calibration_fraction: 0.5,
        splits: 20,
        seed: 0,
        window_from_mae: false,
    };
    c.bench_function("run_replay/4000x20", |b| b.iter(|| run_replay(black_box(&table), &config).unwrap()));
    c.bench_function("clopper_pearson_upper", |b| {
        b.iter(|| clopper_pearson_upper(black_box(3), black_box(200), black_box(0.05)).unwrap())
    });
}

criterion_group!(kernels, fibers, geometry, completion, replay);
criterion_main!(kernels);
