use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use eyeball_core::instances::generate_instance;
use eyeball_core::parse::parse_response;
use eyeball_core::prompts::format_route_text;
use eyeball_core::render::{render_points, render_route};
use eyeball_core::solver::solve_exact;
use eyeball_core::RenderStyle;

fn held_karp(c: &mut Criterion) {
    let mut group = c.benchmark_group("held_karp");
    group.sample_size(10);
    for n in [10, 15, 20] {
        let inst = generate_instance(n, 7).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, inst| {
            b.iter(|| solve_exact(black_box(inst)).unwrap())
        });
    }
    group.finish();
}

fn parse(c: &mut Criterion) {
    let solved = solve_exact(&generate_instance(20, 7).unwrap()).unwrap();
    let text = format!("Sure, here it is.\n{}\n", format_route_text(&solved.optimal_route));
    c.bench_function("parse_n20", |b| b.iter(|| parse_response(black_box(&text), 20)));
}

fn render(c: &mut Criterion) {
    let solved = solve_exact(&generate_instance(20, 7).unwrap()).unwrap();
    let style = RenderStyle::default();
    c.bench_function("render_points_n20", |b| {
        b.iter(|| render_points(black_box(&solved.instance), &style).unwrap())
    });
    c.bench_function("render_route_n20", |b| {
        b.iter(|| render_route(&solved.instance, black_box(&solved.optimal_route), &style).unwrap())
    });
}

criterion_group!(benches, held_karp, parse, render);
criterion_main!(benches);
