//! Parallel against sequential evaluation of the node-heavy kernels.
//!
//! Both variants run in one binary; `par::set_sequential` flips the path.
//! Set `ABELIAN_MOPS_THREADS` to cap the pool.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use abelian_mops::biortho::{bimoments, Pairing};
use abelian_mops::classical::hermite_scalar;
use abelian_mops::elliptic1::theta1;
use abelian_mops::par;
use abelian_mops::polyalg::CPoly;
use abelian_mops::quadcontour::{integrate, make_contour, ContourKind};
use abelian_mops::torsion::{pairing_matrix, DkFixture, TorsionSpec};
use abelian_mops::C64;

const MODES: [(&str, bool); 2] = [("parallel", false), ("sequential", true)];

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn bench_bimoments(cr: &mut Criterion) {
    par::init_threads_from_env();
    let mut g = cr.benchmark_group("bimoments");
    for n in [12usize, 24] {
        let polys: Vec<CPoly> = (0..n).map(hermite_scalar).collect();
        let basis = move |t: C64| polys.iter().map(|p| p.eval(t)).collect::<Vec<_>>();
        let contour = make_contour(ContourKind::segment(c(-10.0), c(10.0)), 400).unwrap();
        let gauss = |t: C64| (-t * t).exp();
        let pairing = Pairing {
            basis: &basis,
            dual: &basis,
            weight: &gauss,
            contour: &contour,
        };
        for (name, seq) in MODES {
            par::set_sequential(seq);
            g.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| bimoments(black_box(&pairing), n).unwrap())
            });
        }
    }
    par::set_sequential(false);
    g.finish();
}

fn bench_integrate(cr: &mut Criterion) {
    par::init_threads_from_env();
    let mut g = cr.benchmark_group("integrate_theta");
    let tau = C64::new(0.1, 1.2);
    for nodes in [256usize, 2048] {
        let contour = make_contour(ContourKind::circle(C64::new(0.3, 0.4), 0.2), nodes).unwrap();
        for (name, seq) in MODES {
            par::set_sequential(seq);
            g.bench_with_input(BenchmarkId::new(name, nodes), &contour, |b, contour| {
                b.iter(|| integrate(|v| theta1(v, tau).unwrap()[0].inv(), black_box(contour)).unwrap())
            });
        }
    }
    par::set_sequential(false);
    g.finish();
}

fn bench_torsion_pairing(cr: &mut Criterion) {
    par::init_threads_from_env();
    let mut g = cr.benchmark_group("torsion_pairing");
    g.sample_size(10);
    let curve = DkFixture::new(1.2).unwrap().curve().unwrap();
    for r in [2usize, 3] {
        let spec = TorsionSpec::from_label(&curve, r, 0, 1).unwrap();
        for (name, seq) in MODES {
            par::set_sequential(seq);
            g.bench_with_input(BenchmarkId::new(name, r), &spec, |b, spec| {
                b.iter(|| pairing_matrix(black_box(spec), 2 * r + 2, false).unwrap())
            });
        }
    }
    par::set_sequential(false);
    g.finish();
}

criterion_group!(benches, bench_bimoments, bench_integrate, bench_torsion_pairing);
criterion_main!(benches);
