use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pim_bench::disk;
use pim_core::bench::BoundaryKind;
use pim_core::tv::GrayImage;
use pim_core::tv::{extract_patches, WeightGraph};
use pim_core::{Assembler, NeighborIndex};

fn neighbors(c: &mut Criterion) {
    let mut group = c.benchmark_group("neighbor_index");
    for n in [684, 2610] {
        let (case, kernel) = disk(n);
        let cutoff = kernel.max_cutoff();
        group.bench_with_input(BenchmarkId::new("kdtree", n), &n, |b, _| {
            b.iter(|| NeighborIndex::build(&case.cloud, cutoff))
        });
        group.bench_with_input(BenchmarkId::new("brute_force", n), &n, |b, _| {
            b.iter(|| NeighborIndex::build_brute_force(&case.cloud, cutoff))
        });
    }
    group.finish();
}

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    group.sample_size(20);
    for n in [684, 2610] {
        let (case, kernel) = disk(n);
        let problem = case.problem(BoundaryKind::Neumann);
        let asm = Assembler::new(&case.cloud, kernel).unwrap();
        group.bench_with_input(BenchmarkId::new("neumann_bundle", n), &n, |b, _| {
            b.iter(|| asm.bundle(&problem).unwrap())
        });
    }
    group.finish();
}

fn tv_graph(c: &mut Criterion) {
    let image = GrayImage::from_fn(32, 32, |r, col| (r + col) as f64 / 62.0).unwrap();
    let patches = extract_patches(&image, 5).unwrap();
    let kernel = pim_core::KernelSpec::gaussian(1.0, patches.intrinsic_dim);
    let mut group = c.benchmark_group("tv_graph");
    group.sample_size(10);
    group.bench_function("knn20_32x32", |b| {
        b.iter(|| WeightGraph::knn(&patches.cloud, &kernel, 20).unwrap())
    });
    group.finish();
}

criterion_group!(benches, neighbors, assembly, tv_graph);
criterion_main!(benches);
