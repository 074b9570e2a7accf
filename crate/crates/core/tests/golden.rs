//! Frozen outputs. A change here means generated data, images or mock
//! replies differ from earlier releases.

use eyeball_core::backend::{mock_oracle_respond, MockCategory, MockOracleConfig};
use eyeball_core::instances::{dataset_to_json, generate_dataset, generate_instance};
use eyeball_core::render::{render_points, render_route, RenderStyle};
use eyeball_core::solver::solve_exact;

#[test]
fn n20_seed7_coordinates() {
    let inst = generate_instance(20, 7).unwrap();
    assert_eq!(inst.instance_id, "n20-s0000000000000007");
    let coords: Vec<(f64, f64)> = inst.points.iter().map(|p| (p.x, p.y)).collect();
    let expected = [
        (15, 16), (71, 73), (60, 36), (8, 85), (36, 99), (20, 38), (52, 25), (43, 53), (30, 7), (32, 21),
        (44, 82), (2, 7), (28, 48), (89, 7), (14, 98), (71, 43), (57, 34), (50, 52), (23, 3), (61, 44),
    ];
    let expected: Vec<(f64, f64)> = expected.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    assert_eq!(coords, expected);
}

#[test]
fn n20_render_digests() {
    let inst = generate_instance(20, 7).unwrap();
    let solved = solve_exact(&inst).unwrap();
    let style = RenderStyle::default();
    let points = render_points(&inst, &style).unwrap();
    let route = render_route(&inst, &solved.optimal_route, &style).unwrap();
    assert_eq!(points.sha256, "9b87e3f2d39f7f8ff6e349104f50ce74d69dce7f7954ca96b4516901a3fdf056");
    assert_eq!(route.sha256, "493236a47e7ecc6e4d95c933dad5dcaed302e711b21722971c5dcd1847918279");
    assert!(points.digest_matches() && route.digest_matches());
}

#[test]
fn mock_draws_for_n5_seed42() {
    let solved = solve_exact(&generate_instance(5, 42).unwrap()).unwrap();
    let config = MockOracleConfig::default();
    use MockCategory::*;
    let expected = [
        (Perturbed, "<<start>> 1 -> 2 -> 5 -> 3 -> 4 -> 1 <<end>>"),
        (Perturbed, "<<start>> 1 -> 2 -> 3 -> 4 -> 5 -> 1 <<end>>"),
        (Perturbed, "<<start>> 1 -> 2 -> 3 -> 4 -> 5 -> 1 <<end>>"),
        (Perturbed, "<<start>> 1 -> 2 -> 5 -> 3 -> 4 -> 1 <<end>>"),
        (Perturbed, "<<start>> 1 -> 3 -> 2 -> 5 -> 4 -> 1 <<end>>"),
        (Perturbed, "<<start>> 1 -> 4 -> 2 -> 3 -> 5 -> 1 <<end>>"),
        (Optimal, "<<start>> 1 -> 4 -> 2 -> 3 -> 5 -> 1 <<end>>"),
        (Optimal, "<<start>> 1 -> 4 -> 2 -> 3 -> 5 -> 1 <<end>>"),
        (Perturbed, "<<start>> 1 -> 3 -> 2 -> 5 -> 4 -> 1 <<end>>"),
        (Perturbed, "<<start>> 1 -> 3 -> 2 -> 5 -> 4 -> 1 <<end>>"),
        (IncorrectId, "<<start>> 1 -> 9 -> 2 -> 3 -> 5 -> 1 <<end>>"),
        (Unparseable, "<<start>> sequence unavailable <<end>>"),
        (IncorrectId, "<<start>> 1 -> 4 -> 7 -> 3 -> 5 -> 1 <<end>>"),
    ];
    for (draw, (category, text)) in expected.iter().enumerate() {
        let got = mock_oracle_respond(&solved, &config, draw as u32);
        assert_eq!((got.0, got.1.as_str()), (*category, *text), "draw {draw}");
    }
}

#[test]
fn default_dataset_is_byte_stable() {
    let a = dataset_to_json(&generate_dataset(&[5, 10, 15, 20], 30, 1).unwrap());
    let b = dataset_to_json(&generate_dataset(&[5, 10, 15, 20], 30, 1).unwrap());
    assert_eq!(a, b);
    let c = dataset_to_json(&generate_dataset(&[5, 10, 15, 20], 30, 2).unwrap());
    assert_ne!(a, c);
}
