use eyeball_core::backend::{mock_oracle_respond, MockCategory, MockOracleConfig};
use eyeball_core::instances::generate_dataset;
use eyeball_core::metrics::OutcomeCounts;
use eyeball_core::parse::{parse_response, Status};
use eyeball_core::solver::solve_exact;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn config() -> MockOracleConfig {
    MockOracleConfig {
        p_optimal: 0.2,
        p_perturbed: 0.55,
        p_incorrect_id: 0.1,
        p_incomplete: 0.1,
        p_unparseable: 0.05,
        perturb_moves: 2,
        seed: 17,
    }
}

fn p_value(observed: &[u32], expected_p: &[f64]) -> f64 {
    let total: u32 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected_p)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn parsed_statuses_follow_injection_rates() {
    let dataset = generate_dataset(&[5, 10, 15, 20], 5, 3).unwrap();
    let solved: Vec<_> = dataset.instances.iter().map(|i| solve_exact(i).unwrap()).collect();
    let config = config();
    let mut counts = OutcomeCounts::default();
    let mut categories = [0u32; 6];
    // 20 instances x 500 draws
    for s in &solved {
        for draw in 0..500 {
            let (category, text) = mock_oracle_respond(s, &config, draw);
            let status = parse_response(&text, s.instance.n).status;
            let expected = match category {
                MockCategory::IncorrectId => Status::IncorrectNodeIds,
                MockCategory::Incomplete => Status::IncompleteRoute,
                MockCategory::Unparseable => Status::Unparseable,
                _ => Status::Valid,
            };
            assert_eq!(status, expected, "{category:?}: {text}");
            counts.add(status);
            categories[MockCategory::ALL.iter().position(|c| *c == category).unwrap()] += 1;
        }
    }
    assert_eq!(counts.total(), 10_000);
    let observed = [counts.valid, counts.incorrect_ids, counts.incomplete, counts.unparseable];
    let p = p_value(&observed, &[0.75, 0.1, 0.1, 0.05]);
    assert!(p > 0.01, "status frequencies {observed:?}, p = {p}");

    // Categories with zero mass never appear; drop them from the test.
    assert_eq!(categories[5], 0);
    let p = p_value(&categories[..5], &[0.2, 0.55, 0.1, 0.1, 0.05]);
    assert!(p > 0.01, "category frequencies {categories:?}, p = {p}");

    let pct = |c: u32| 100.0 * c as f64 / counts.total() as f64;
    let sum = pct(counts.valid) + pct(counts.incorrect_ids) + pct(counts.incomplete) + pct(counts.unparseable);
    assert!((sum - 100.0).abs() <= 1e-9);
}
