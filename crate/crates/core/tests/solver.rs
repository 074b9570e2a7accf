use std::time::Instant;

use eyeball_core::instances::{generate_instance, Instance};
use eyeball_core::solver::{brute_force_solve, solve_exact, tour_length, Route, LENGTH_TOLERANCE};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn held_karp_matches_brute_force_on_500_instances() {
    let started = Instant::now();
    for n in 5..=9 {
        for i in 0..100u64 {
            let instance = generate_instance(n, 1_000 * n as u64 + i).unwrap();
            let dp = solve_exact(&instance).unwrap();
            let bf = brute_force_solve(&instance).unwrap();
            assert!(
                (dp.optimal_length - bf.optimal_length).abs() <= LENGTH_TOLERANCE,
                "{}: {} vs {}",
                instance.instance_id,
                dp.optimal_length,
                bf.optimal_length
            );
            assert_eq!(dp.optimal_route, bf.optimal_route, "{}", instance.instance_id);
        }
    }
    assert!(started.elapsed().as_secs() < 60);
}

#[test]
fn n20_solves_quickly() {
    let instance = generate_instance(20, 7).unwrap();
    let started = Instant::now();
    let solved = solve_exact(&instance).unwrap();
    assert!(started.elapsed().as_secs() < 30);
    // Cross-checked against an MTZ formulation solved by a MILP solver.
    assert!((solved.optimal_length - 401.0998196720755).abs() < 1e-9);
    assert_eq!(
        solved.optimal_route.ids(),
        &[1, 6, 13, 4, 15, 5, 11, 2, 8, 18, 20, 16, 14, 3, 17, 7, 10, 9, 19, 12]
    );
}

#[test]
fn n9_seed13_brute_force_length() {
    let solved = brute_force_solve(&generate_instance(9, 13).unwrap()).unwrap();
    assert!((solved.optimal_length - 238.927752189995).abs() < 1e-9);
    assert_eq!(solved.optimal_route.ids(), &[1, 2, 7, 4, 6, 9, 3, 5, 8]);
}

#[test]
fn unit_square_has_perimeter_four() {
    let inst = Instance::from_coords("sq", &[(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]).unwrap();
    let solved = solve_exact(&inst).unwrap();
    assert!((solved.optimal_length - 4.0).abs() < 1e-12);
    assert_eq!(solved.optimal_route.ids(), &[1, 3, 2, 4]);
}

#[test]
fn size_bounds_are_enforced() {
    assert!(solve_exact(&generate_instance(26, 1).unwrap()).is_err());
    assert!(brute_force_solve(&generate_instance(11, 1).unwrap()).is_err());
}

fn shuffled(n: usize, seed: u64) -> Vec<u32> {
    let mut order: Vec<u32> = (1..=n as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn length_ignores_rotation_and_direction(n in 3usize..15, seed in any::<u64>(), shift in 0usize..15) {
        let instance = generate_instance(n, seed).unwrap();
        let order = shuffled(n, seed ^ 0xABCD);
        let base = tour_length(&Route::new(order.clone()).unwrap(), &instance).unwrap();
        let mut rotated = order.clone();
        rotated.rotate_left(shift % n);
        let mut reversed = order;
        reversed.reverse();
        let a = tour_length(&Route::new(rotated).unwrap(), &instance).unwrap();
        let b = tour_length(&Route::new(reversed).unwrap(), &instance).unwrap();
        prop_assert!((a - base).abs() < 1e-9);
        prop_assert!((b - base).abs() < 1e-9);
    }

    #[test]
    fn optimum_beats_random_tours(n in 4usize..12, seed in any::<u64>()) {
        let instance = generate_instance(n, seed).unwrap();
        let solved = solve_exact(&instance).unwrap();
        let recomputed = tour_length(&solved.optimal_route, &instance).unwrap();
        prop_assert!((recomputed - solved.optimal_length).abs() < 1e-9);
        for k in 0..20 {
            let route = Route::new(shuffled(n, seed.wrapping_add(k))).unwrap();
            let len = tour_length(&route, &instance).unwrap();
            prop_assert!(len >= solved.optimal_length - LENGTH_TOLERANCE);
        }
    }
}
