//! The evaluation protocols: zero-shot, few-shot (image or text answers),
//! self-ensemble and the two self-refine loops.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{
    Backend, BackendError, CompletionRequest, RawResponse, ENSEMBLE_TEMPERATURE,
    SINGLE_SHOT_TEMPERATURE,
};
use crate::metrics::{gap_percent, MetricsError};
use crate::parse::{parse_response, ParseOutcome, Status};
use crate::prompts::{
    build_few_shot_v1, build_few_shot_v2, build_refine_feedback, build_refine_initial_text,
    build_refine_initial_visual, build_zero_shot, format_route_text, BundleTag, ImageDemo,
    PromptBundle, PromptError, TextDemo,
};
use crate::render::{render_points, render_route, Image, RenderError, RenderStyle};
use crate::solver::{tour_length, Route, SolvedInstance, SolverError, LENGTH_TOLERANCE};

pub const DEFAULT_ENSEMBLE_DRAWS: usize = 13;
pub const DEFAULT_ENSEMBLE_SIZES: [usize; 6] = [3, 5, 7, 9, 11, 13];
pub const DEFAULT_REFINE_ITERS: usize = 10;
pub const DEFAULT_DEMO_COUNT: usize = 3;
pub const DEFAULT_INITIAL_RETRY_CAP: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum StrategyError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("demonstrations must not include the target instance {0}")]
    DemoIncludesTarget(String),
    #[error("demonstration {demo} has {demo_n} nodes, target has {target_n}")]
    DemoSizeMismatch {
        demo: String,
        demo_n: usize,
        target_n: usize,
    },
    #[error("invalid strategy parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    ZeroShot,
    FewShotV1,
    FewShotV2,
    Ensemble,
    #[serde(rename = "refine-1")]
    Refine1,
    #[serde(rename = "refine-2")]
    Refine2,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::ZeroShot,
        StrategyKind::FewShotV1,
        StrategyKind::FewShotV2,
        StrategyKind::Ensemble,
        StrategyKind::Refine1,
        StrategyKind::Refine2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::ZeroShot => "zero-shot",
            StrategyKind::FewShotV1 => "few-shot-v1",
            StrategyKind::FewShotV2 => "few-shot-v2",
            StrategyKind::Ensemble => "ensemble",
            StrategyKind::Refine1 => "refine-1",
            StrategyKind::Refine2 => "refine-2",
        }
    }

    pub fn is_single_shot(self) -> bool {
        matches!(
            self,
            StrategyKind::ZeroShot | StrategyKind::FewShotV1 | StrategyKind::FewShotV2
        )
    }

    pub fn is_refine(self) -> bool {
        matches!(self, StrategyKind::Refine1 | StrategyKind::Refine2)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FewShotVariant {
    V1,
    V2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineVariant {
    One,
    Two,
}

/// One prompt/response exchange and its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub bundle_tag: BundleTag,
    pub raw: RawResponse,
    pub outcome: ParseOutcome,
    pub length: Option<f64>,
    pub gap_percent: Option<f64>,
}

impl Attempt {
    pub fn is_valid(&self) -> bool {
        self.outcome.is_valid()
    }

    pub fn status(&self) -> Status {
        self.outcome.status
    }
}

/// Best tour among the first `size` ensemble draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleChoice {
    pub size: usize,
    pub best_route: Option<Route>,
    pub best_length: Option<f64>,
    pub best_gap_percent: Option<f64>,
    pub valid_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub instance_id: String,
    pub attempts: Vec<Attempt>,
    pub per_size: Vec<EnsembleChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineStep {
    pub bundle_tag: BundleTag,
    pub attempt: Attempt,
    pub current_route_after: Route,
    pub best_length_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineTrace {
    pub instance_id: String,
    pub variant: RefineVariant,
    /// Tries spent obtaining the first valid tour.
    pub initial: Vec<Attempt>,
    pub iterations: Vec<RefineStep>,
    pub best_route: Option<Route>,
    pub best_length: Option<f64>,
    pub best_gap_percent: Option<f64>,
    /// No valid initial tour within the retry cap.
    pub failed: bool,
}

impl RefineTrace {
    /// Best-so-far length after the initial step and after each iteration.
    pub fn best_so_far(&self) -> Vec<f64> {
        let Some(first) = self.initial.iter().rev().find_map(|a| a.length) else {
            return Vec::new();
        };
        std::iter::once(first)
            .chain(self.iterations.iter().map(|s| s.best_length_after))
            .collect()
    }
}

/// Receives every image rendered while running a strategy.
pub trait ImageSink: Sync {
    fn store(&self, instance_id: &str, tag: &str, image: &Image);
}

/// Shared knobs for all strategies.
pub struct Harness<'a> {
    pub style: RenderStyle,
    pub single_temperature: f64,
    pub ensemble_temperature: f64,
    pub initial_retry_cap: u32,
    pub sink: Option<&'a dyn ImageSink>,
}

impl Default for Harness<'_> {
    fn default() -> Self {
        Self {
            style: RenderStyle::default(),
            single_temperature: SINGLE_SHOT_TEMPERATURE,
            ensemble_temperature: ENSEMBLE_TEMPERATURE,
            initial_retry_cap: DEFAULT_INITIAL_RETRY_CAP,
            sink: None,
        }
    }
}

impl<'a> Harness<'a> {
    pub fn with_sink(mut self, sink: &'a dyn ImageSink) -> Self {
        self.sink = Some(sink);
        self
    }

    fn store(&self, instance_id: &str, tag: &str, image: &Image) {
        if let Some(sink) = self.sink {
            sink.store(instance_id, tag, image);
        }
    }

    /// Parses a reply and scores it against the optimum.
    pub fn evaluate(
        &self,
        tag: BundleTag,
        raw: RawResponse,
        solved: &SolvedInstance,
    ) -> Result<Attempt, StrategyError> {
        let outcome = if raw.transport_status.is_ok() {
            parse_response(&raw.text, solved.instance.n)
        } else {
            ParseOutcome::unparseable(format!("transport failure: {:?}", raw.transport_status))
        };
        let (length, gap) = match &outcome.route {
            Some(route) => {
                let length = tour_length(route, &solved.instance)?;
                (Some(length), Some(gap_percent(length, solved.optimal_length)?))
            }
            None => (None, None),
        };
        Ok(Attempt {
            bundle_tag: tag,
            raw,
            outcome,
            length,
            gap_percent: gap,
        })
    }

    fn ask(
        &self,
        backend: &dyn Backend,
        bundle: &PromptBundle,
        solved: &SolvedInstance,
        call_index: u32,
        temperature: f64,
    ) -> Result<Attempt, StrategyError> {
        let raw = backend.complete(&CompletionRequest {
            bundle,
            instance_id: &solved.instance.instance_id,
            call_index,
            temperature,
            solved: Some(solved),
        })?;
        self.evaluate(bundle.tag, raw, solved)
    }

    fn points_image(&self, solved: &SolvedInstance) -> Result<Image, StrategyError> {
        let image = render_points(&solved.instance, &self.style)?;
        self.store(&solved.instance.instance_id, "points", &image);
        Ok(image)
    }

    pub fn run_zero_shot(
        &self,
        solved: &SolvedInstance,
        backend: &dyn Backend,
    ) -> Result<Attempt, StrategyError> {
        let image = self.points_image(solved)?;
        let bundle = build_zero_shot(image, solved.instance.n)?;
        self.ask(backend, &bundle, solved, 0, self.single_temperature)
    }

    pub fn run_few_shot(
        &self,
        solved: &SolvedInstance,
        demos: &[&SolvedInstance],
        backend: &dyn Backend,
        variant: FewShotVariant,
    ) -> Result<Attempt, StrategyError> {
        let target = &solved.instance;
        for demo in demos {
            if demo.instance.instance_id == target.instance_id {
                return Err(StrategyError::DemoIncludesTarget(target.instance_id.clone()));
            }
            if demo.instance.n != target.n {
                return Err(StrategyError::DemoSizeMismatch {
                    demo: demo.instance.instance_id.clone(),
                    demo_n: demo.instance.n,
                    target_n: target.n,
                });
            }
        }
        let image = self.points_image(solved)?;
        let bundle = match variant {
            FewShotVariant::V1 => {
                let demos = demos
                    .iter()
                    .map(|d| {
                        Ok(ImageDemo {
                            input: render_points(&d.instance, &self.style)?,
                            solution: render_route(&d.instance, &d.optimal_route, &self.style)?,
                        })
                    })
                    .collect::<Result<Vec<_>, RenderError>>()?;
                build_few_shot_v1(demos, image, target.n)?
            }
            FewShotVariant::V2 => {
                let demos = demos
                    .iter()
                    .map(|d| {
                        Ok(TextDemo {
                            input: render_points(&d.instance, &self.style)?,
                            route_text: format_route_text(&d.optimal_route),
                        })
                    })
                    .collect::<Result<Vec<_>, RenderError>>()?;
                build_few_shot_v2(demos, image, target.n)?
            }
        };
        self.ask(backend, &bundle, solved, 0, self.single_temperature)
    }

    /// Draws `k` zero-shot replies (concurrently, ordered by attempt index)
    /// and keeps the shortest valid tour among the first `S` for each size.
    pub fn run_self_ensemble(
        &self,
        solved: &SolvedInstance,
        backend: &dyn Backend,
        k: usize,
        sizes: &[usize],
    ) -> Result<EnsembleResult, StrategyError> {
        let largest = sizes.iter().copied().max().unwrap_or(0);
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(StrategyError::Params("ensemble sizes must be non-empty and positive".into()));
        }
        if k < largest {
            return Err(StrategyError::Params(format!(
                "{k} draws cannot cover ensemble size {largest}"
            )));
        }
        let image = self.points_image(solved)?;
        let bundle = build_zero_shot(image, solved.instance.n)?;
        let attempts = (0..k)
            .into_par_iter()
            .map(|i| self.ask(backend, &bundle, solved, i as u32, self.ensemble_temperature))
            .collect::<Result<Vec<_>, _>>()?;
        let per_size = sizes
            .iter()
            .map(|&size| choose_best(&attempts[..size], size))
            .collect();
        Ok(EnsembleResult {
            instance_id: solved.instance.instance_id.clone(),
            attempts,
            per_size,
        })
    }

    pub fn run_self_refine_1(
        &self,
        solved: &SolvedInstance,
        text_backend: &dyn Backend,
        vision_backend: &dyn Backend,
        iters: usize,
    ) -> Result<RefineTrace, StrategyError> {
        self.run_refine(RefineVariant::One, solved, text_backend, vision_backend, iters)
    }

    pub fn run_self_refine_2(
        &self,
        solved: &SolvedInstance,
        vision_backend: &dyn Backend,
        iters: usize,
    ) -> Result<RefineTrace, StrategyError> {
        self.run_refine(RefineVariant::Two, solved, vision_backend, vision_backend, iters)
    }

    fn run_refine(
        &self,
        variant: RefineVariant,
        solved: &SolvedInstance,
        init_backend: &dyn Backend,
        vision_backend: &dyn Backend,
        iters: usize,
    ) -> Result<RefineTrace, StrategyError> {
        if iters == 0 {
            return Err(StrategyError::Params("refine needs at least one iteration".into()));
        }
        let instance = &solved.instance;
        let id = instance.instance_id.as_str();
        let init_bundle = match variant {
            RefineVariant::One => build_refine_initial_text(instance)?,
            RefineVariant::Two => build_refine_initial_visual(self.points_image(solved)?, instance.n)?,
        };
        let mut call = 0u32;
        let mut initial = Vec::new();
        for _ in 0..self.initial_retry_cap.max(1) {
            let attempt = self.ask(init_backend, &init_bundle, solved, call, self.single_temperature)?;
            call += 1;
            let done = attempt.is_valid();
            initial.push(attempt);
            if done {
                break;
            }
        }
        let Some(first) = initial.last().filter(|a| a.is_valid()) else {
            return Ok(RefineTrace {
                instance_id: id.to_string(),
                variant,
                initial,
                iterations: Vec::new(),
                best_route: None,
                best_length: None,
                best_gap_percent: None,
                failed: true,
            });
        };
        let mut current = first.outcome.route.clone().expect("valid attempt has a route");
        let mut best_route = current.clone();
        let mut best_length = first.length.expect("valid attempt has a length");

        let mut iterations = Vec::with_capacity(iters);
        for it in 0..iters {
            let image = render_route(instance, &current, &self.style)?;
            self.store(id, &format!("iter_{it:02}"), &image);
            let bundle = build_refine_feedback(image, instance.n)?;
            let attempt = self.ask(vision_backend, &bundle, solved, call, self.single_temperature)?;
            call += 1;
            if let (Some(route), Some(length)) = (&attempt.outcome.route, attempt.length) {
                current = route.clone();
                if length < best_length - LENGTH_TOLERANCE {
                    best_length = length;
                    best_route = route.clone();
                }
            }
            iterations.push(RefineStep {
                bundle_tag: bundle.tag,
                attempt,
                current_route_after: current.clone(),
                best_length_after: best_length,
            });
        }
        self.store(id, "best", &render_route(instance, &best_route, &self.style)?);
        Ok(RefineTrace {
            instance_id: id.to_string(),
            variant,
            initial,
            iterations,
            best_route: Some(best_route),
            best_length: Some(best_length),
            best_gap_percent: Some(gap_percent(best_length, solved.optimal_length)?),
            failed: false,
        })
    }
}

/// Shortest valid tour among `attempts`; the earliest wins ties.
pub fn choose_best(attempts: &[Attempt], size: usize) -> EnsembleChoice {
    let mut best: Option<&Attempt> = None;
    let mut valid_count = 0;
    for attempt in attempts.iter().filter(|a| a.is_valid()) {
        valid_count += 1;
        let better = match best {
            None => true,
            Some(b) => attempt.length < b.length,
        };
        if better {
            best = Some(attempt);
        }
    }
    EnsembleChoice {
        size,
        best_route: best.and_then(|a| a.outcome.route.clone()),
        best_length: best.and_then(|a| a.length),
        best_gap_percent: best.and_then(|a| a.gap_percent),
        valid_count,
    }
}

/// Up to `k` demonstrations for `target`: the instances following it
/// (cyclically) among same-size instances, never the target itself.
pub fn select_demos<'s>(
    pool: &'s [SolvedInstance],
    target: &SolvedInstance,
    k: usize,
) -> Vec<&'s SolvedInstance> {
    let same: Vec<&SolvedInstance> = pool
        .iter()
        .filter(|s| s.instance.n == target.instance.n)
        .collect();
    let pos = same
        .iter()
        .position(|s| s.instance.instance_id == target.instance.instance_id)
        .unwrap_or(same.len());
    (1..=same.len())
        .map(|offset| same[(pos + offset) % same.len()])
        .filter(|s| s.instance.instance_id != target.instance.instance_id)
        .take(k)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockOracleBackend, MockOracleConfig, ScriptedBackend};
    use crate::instances::{generate_dataset, generate_instance};
    use crate::solver::solve_exact;

    fn solved(n: usize, seed: u64) -> SolvedInstance {
        solve_exact(&generate_instance(n, seed).unwrap()).unwrap()
    }

    fn mock(p_optimal: f64, p_perturbed: f64, p_incomplete: f64, p_unparseable: f64) -> MockOracleBackend {
        MockOracleBackend::new(MockOracleConfig {
            p_optimal,
            p_perturbed,
            p_incorrect_id: 0.0,
            p_incomplete,
            p_unparseable,
            perturb_moves: 1,
            seed: 7,
        })
        .unwrap()
    }

    #[test]
    fn zero_shot_outcomes() {
        let s = solved(8, 1);
        let h = Harness::default();
        let a = h.run_zero_shot(&s, &mock(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(a.is_valid());
        assert_eq!(a.gap_percent, Some(0.0));
        let b = h.run_zero_shot(&s, &mock(0.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!(b.status(), Status::IncompleteRoute);
        assert!(b.gap_percent.is_none() && b.length.is_none());
        let c = h.run_zero_shot(&s, &mock(0.0, 1.0, 0.0, 0.0)).unwrap();
        assert!(c.gap_percent.unwrap() >= 0.0);
    }

    #[test]
    fn few_shot_rejects_target_among_demos() {
        let s = solved(6, 1);
        let other = solved(6, 2);
        let h = Harness::default();
        let backend = mock(1.0, 0.0, 0.0, 0.0);
        let err = h.run_few_shot(&s, &[&other, &s], &backend, FewShotVariant::V1);
        assert!(matches!(err, Err(StrategyError::DemoIncludesTarget(_))));
        let ok = h.run_few_shot(&s, &[&other], &backend, FewShotVariant::V2).unwrap();
        assert_eq!(ok.gap_percent, Some(0.0));
        assert_eq!(ok.bundle_tag, BundleTag::FewShotV2);
    }

    #[test]
    fn demo_selection_is_same_size_and_excludes_target() {
        let ds = generate_dataset(&[5, 6], 4, 3).unwrap();
        let pool: Vec<SolvedInstance> = ds.instances.iter().map(|i| solve_exact(i).unwrap()).collect();
        let target = &pool[3];
        let demos = select_demos(&pool, target, 3);
        let ids: Vec<&str> = demos.iter().map(|d| d.instance.instance_id.as_str()).collect();
        assert_eq!(ids, vec!["n05-i000", "n05-i001", "n05-i002"]);
        assert_eq!(select_demos(&pool, &pool[4], 10).len(), 3);
    }

    #[test]
    fn ensemble_prefix_minimum() {
        let s = solved(7, 5);
        let h = Harness::default();
        let r = h
            .run_self_ensemble(&s, &mock(1.0, 0.0, 0.0, 0.0), 13, &DEFAULT_ENSEMBLE_SIZES)
            .unwrap();
        assert_eq!(r.attempts.len(), 13);
        for c in &r.per_size {
            assert_eq!(c.valid_count, c.size);
            assert_eq!(c.best_gap_percent, Some(0.0));
        }
        let none = h
            .run_self_ensemble(&s, &mock(0.0, 0.0, 0.0, 1.0), 13, &DEFAULT_ENSEMBLE_SIZES)
            .unwrap();
        assert!(none.per_size.iter().all(|c| c.valid_count == 0 && c.best_length.is_none()));
        assert!(matches!(
            h.run_self_ensemble(&s, &mock(1.0, 0.0, 0.0, 0.0), 5, &[3, 7]),
            Err(StrategyError::Params(_))
        ));
    }

    #[test]
    fn refine_with_optimal_mock() {
        let s = solved(8, 9);
        let h = Harness::default();
        let backend = mock(1.0, 0.0, 0.0, 0.0);
        let t1 = h.run_self_refine_1(&s, &backend, &backend, 10).unwrap();
        let t2 = h.run_self_refine_2(&s, &backend, 10).unwrap();
        for t in [&t1, &t2] {
            assert!(!t.failed);
            assert_eq!(t.iterations.len(), 10);
            assert_eq!(t.initial.len(), 1);
            assert!((t.best_length.unwrap() - s.optimal_length).abs() < 1e-9);
        }
        assert_eq!(t1.initial[0].bundle_tag, BundleTag::RefineInitText);
        assert_eq!(t2.initial[0].bundle_tag, BundleTag::RefineInitVisual);
    }

    #[test]
    fn refine_initial_failure_after_retry_cap() {
        let s = solved(6, 9);
        let h = Harness::default();
        let t = h.run_self_refine_2(&s, &mock(0.0, 0.0, 0.0, 1.0), 10).unwrap();
        assert!(t.failed);
        assert_eq!(t.initial.len(), DEFAULT_INITIAL_RETRY_CAP as usize);
        assert!(t.iterations.is_empty() && t.best_length.is_none());
    }

    #[test]
    fn hallucinated_feedback_keeps_current() {
        let s = solved(6, 12);
        let id = s.instance.instance_id.clone();
        let mut texts = vec!["<<start>> 1 -> 3 -> 2 -> 4 -> 6 -> 5 <<end>>"];
        texts.extend(["<<start>> 1 -> 2 <<end>>"; 3]);
        let backend = ScriptedBackend::from_texts(&id, &texts);
        let t = Harness::default().run_self_refine_2(&s, &backend, 3).unwrap();
        let initial_route = t.initial[0].outcome.route.clone().unwrap();
        for step in &t.iterations {
            assert_eq!(step.current_route_after, initial_route);
        }
        assert_eq!(t.best_route.unwrap(), initial_route);
    }

    #[test]
    fn refine_needs_an_iteration() {
        let s = solved(5, 1);
        let backend = mock(1.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            Harness::default().run_self_refine_2(&s, &backend, 0),
            Err(StrategyError::Params(_))
        ));
    }

    #[test]
    fn strategy_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
    }
}
