use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, CompletionRequest, RawResponse};
use crate::instances::splitmix64;
use crate::prompts::format_route_text;
use crate::solver::{Route, SolvedInstance};

/// Fault-injection rates of the mock oracle. Whatever probability mass is
/// left after the five listed categories yields a uniformly random tour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockOracleConfig {
    pub p_optimal: f64,
    pub p_perturbed: f64,
    pub p_incorrect_id: f64,
    pub p_incomplete: f64,
    pub p_unparseable: f64,
    pub perturb_moves: u32,
    pub seed: u64,
}

impl Default for MockOracleConfig {
    fn default() -> Self {
        Self {
            p_optimal: 0.2,
            p_perturbed: 0.6,
            p_incorrect_id: 0.1,
            p_incomplete: 0.05,
            p_unparseable: 0.05,
            perturb_moves: 2,
            seed: 0,
        }
    }
}

impl MockOracleConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        let ps = self.probabilities();
        if ps.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(BackendError::Config("mock probabilities must be >= 0".into()));
        }
        let total: f64 = ps.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(BackendError::Config(format!(
                "mock probabilities sum to {total} > 1"
            )));
        }
        Ok(())
    }

    fn probabilities(&self) -> [f64; 5] {
        [
            self.p_optimal,
            self.p_perturbed,
            self.p_incorrect_id,
            self.p_incomplete,
            self.p_unparseable,
        ]
    }

    /// Probability of each category in [`MockCategory::ALL`] order.
    pub fn category_probabilities(&self) -> [f64; 6] {
        let p = self.probabilities();
        let rest = (1.0 - p.iter().sum::<f64>()).max(0.0);
        [p[0], p[1], p[2], p[3], p[4], rest]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MockCategory {
    Optimal,
    Perturbed,
    IncorrectId,
    Incomplete,
    Unparseable,
    Random,
}

impl MockCategory {
    pub const ALL: [MockCategory; 6] = [
        MockCategory::Optimal,
        MockCategory::Perturbed,
        MockCategory::IncorrectId,
        MockCategory::Incomplete,
        MockCategory::Unparseable,
        MockCategory::Random,
    ];
}

const UNPARSEABLE_REPLIES: [&str; 3] = [
    "I am unable to determine a reliable trip sequence from this visualization.",
    "Looking at the image, the trip goes 1 -> 2 -> 3 and then back, but I am not certain of the rest.",
    "<<start>> sequence unavailable <<end>>",
];

fn draw_rng(seed: u64, instance_id: &str, draw_index: u32) -> ChaCha8Rng {
    let digest = Sha256::digest(instance_id.as_bytes());
    let id_hash = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed ^ id_hash) ^ draw_index as u64))
}

/// Applies one random non-trivial 2-opt move (segment reversal) to a tour
/// kept open with its first node fixed. No-op for n = 3, where every
/// reversal yields the same tour.
pub fn two_opt_move<R: Rng + ?Sized>(order: &mut [u32], rng: &mut R) {
    let n = order.len();
    if n < 4 {
        return;
    }
    loop {
        let i = rng.random_range(1..n - 1);
        let j = rng.random_range(i + 1..n);
        if i == 1 && j == n - 1 {
            continue;
        }
        order[i..=j].reverse();
        return;
    }
}

fn closed(ids: &[u32]) -> String {
    let mut body: Vec<String> = ids.iter().map(u32::to_string).collect();
    body.push(ids[0].to_string());
    format!("<<start>> {} <<end>>", body.join(" -> "))
}

/// Deterministic stand-in reply for `(config.seed, instance_id, draw_index)`.
pub fn mock_oracle_respond(
    solved: &SolvedInstance,
    config: &MockOracleConfig,
    draw_index: u32,
) -> (MockCategory, String) {
    let instance = &solved.instance;
    let n = instance.n;
    let mut rng = draw_rng(config.seed, &instance.instance_id, draw_index);
    let u: f64 = rng.random();
    let probs = config.category_probabilities();
    let mut acc = 0.0;
    let mut category = MockCategory::Random;
    for (cat, p) in MockCategory::ALL.iter().zip(probs) {
        acc += p;
        if u < acc {
            category = *cat;
            break;
        }
    }
    let optimal = solved.optimal_route.ids().to_vec();
    let text = match category {
        MockCategory::Optimal => format_route_text(&solved.optimal_route),
        MockCategory::Perturbed => {
            let mut order = optimal;
            for _ in 0..config.perturb_moves {
                two_opt_move(&mut order, &mut rng);
            }
            format_route_text(&Route::new(order).expect("2-opt preserves permutations"))
        }
        MockCategory::IncorrectId => {
            let mut order = optimal;
            let pos = rng.random_range(0..n);
            order[pos] = n as u32 + rng.random_range(1..=5);
            closed(&order)
        }
        MockCategory::Incomplete => {
            let mut order = optimal;
            let drop = rng.random_range(1..=(n / 4).max(1));
            for _ in 0..drop {
                let pos = rng.random_range(0..order.len());
                order.remove(pos);
            }
            closed(&order)
        }
        MockCategory::Unparseable => {
            UNPARSEABLE_REPLIES[rng.random_range(0..UNPARSEABLE_REPLIES.len())].to_string()
        }
        MockCategory::Random => {
            let mut order = optimal;
            order.shuffle(&mut rng);
            format_route_text(&Route::new(order).expect("shuffle preserves permutations"))
        }
    };
    (category, text)
}

#[derive(Debug, Clone)]
pub struct MockOracleBackend {
    config: MockOracleConfig,
    model_name: String,
}

impl MockOracleBackend {
    pub fn new(config: MockOracleConfig) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(Self {
            config,
            model_name: "mock-oracle".into(),
        })
    }

    pub fn config(&self) -> &MockOracleConfig {
        &self.config
    }
}

impl Backend for MockOracleBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse, BackendError> {
        let solved = request
            .solved
            .ok_or_else(|| BackendError::MissingContext(request.instance_id.to_string()))?;
        let (_, text) = mock_oracle_respond(solved, &self.config, request.call_index);
        Ok(RawResponse::ok(text, &self.model_name, request.call_index, 0))
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::generate_instance;
    use crate::parse::{parse_response, Status};
    use crate::solver::{solve_exact, tour_length};

    fn solved(n: usize, seed: u64) -> SolvedInstance {
        solve_exact(&generate_instance(n, seed).unwrap()).unwrap()
    }

    fn only(field: &str) -> MockOracleConfig {
        let mut c = MockOracleConfig {
            p_optimal: 0.0,
            p_perturbed: 0.0,
            p_incorrect_id: 0.0,
            p_incomplete: 0.0,
            p_unparseable: 0.0,
            perturb_moves: 1,
            seed: 3,
        };
        match field {
            "optimal" => c.p_optimal = 1.0,
            "perturbed" => c.p_perturbed = 1.0,
            "incorrect" => c.p_incorrect_id = 1.0,
            "incomplete" => c.p_incomplete = 1.0,
            "unparseable" => c.p_unparseable = 1.0,
            _ => {}
        }
        c
    }

    #[test]
    fn optimal_reply_is_formatted_optimum() {
        let s = solved(7, 1);
        for draw in 0..5 {
            let (cat, text) = mock_oracle_respond(&s, &only("optimal"), draw);
            assert_eq!(cat, MockCategory::Optimal);
            assert_eq!(text, format_route_text(&s.optimal_route));
        }
    }

    #[test]
    fn perturbed_never_beats_optimum() {
        for seed in 0..20 {
            let s = solved(8, seed);
            let (_, text) = mock_oracle_respond(&s, &only("perturbed"), seed as u32);
            let outcome = parse_response(&text, 8);
            assert_eq!(outcome.status, Status::Valid);
            let len = tour_length(&outcome.route.unwrap(), &s.instance).unwrap();
            assert!(len >= s.optimal_length - 1e-9);
        }
    }

    #[test]
    fn injected_faults_classify_as_intended() {
        for n in [3, 5, 10, 20] {
            let s = solved(n, 11);
            for draw in 0..30 {
                let (_, t) = mock_oracle_respond(&s, &only("incomplete"), draw);
                assert_eq!(parse_response(&t, n).status, Status::IncompleteRoute, "{t}");
                let (_, t) = mock_oracle_respond(&s, &only("incorrect"), draw);
                assert_eq!(parse_response(&t, n).status, Status::IncorrectNodeIds, "{t}");
                let (_, t) = mock_oracle_respond(&s, &only("unparseable"), draw);
                assert_eq!(parse_response(&t, n).status, Status::Unparseable, "{t}");
                let (_, t) = mock_oracle_respond(&s, &only("random"), draw);
                assert_eq!(parse_response(&t, n).status, Status::Valid, "{t}");
            }
        }
    }

    #[test]
    fn replies_are_deterministic_per_draw() {
        let s = solved(10, 2);
        let cfg = MockOracleConfig::default();
        let a: Vec<_> = (0..13).map(|d| mock_oracle_respond(&s, &cfg, d).1).collect();
        let b: Vec<_> = (0..13).map(|d| mock_oracle_respond(&s, &cfg, d).1).collect();
        assert_eq!(a, b);
        assert!(a.iter().collect::<std::collections::HashSet<_>>().len() > 1);
    }

    #[test]
    fn two_opt_keeps_permutation_and_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut order: Vec<u32> = (1..=9).collect();
        for _ in 0..50 {
            two_opt_move(&mut order, &mut rng);
            assert_eq!(order[0], 1);
            let mut sorted = order.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (1..=9).collect::<Vec<_>>());
        }
    }

    #[test]
    fn invalid_probabilities_rejected() {
        let mut c = MockOracleConfig {
            p_optimal: 0.9,
            ..MockOracleConfig::default()
        };
        assert!(c.validate().is_err());
        c.p_optimal = -0.1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn backend_requires_solved_context() {
        let b = MockOracleBackend::new(MockOracleConfig::default()).unwrap();
        let bundle = crate::prompts::build_refine_initial_text(&generate_instance(5, 1).unwrap())
            .unwrap();
        let req = CompletionRequest {
            bundle: &bundle,
            instance_id: "x",
            call_index: 0,
            temperature: 1.0,
            solved: None,
        };
        assert!(matches!(b.complete(&req), Err(BackendError::MissingContext(_))));
    }
}
