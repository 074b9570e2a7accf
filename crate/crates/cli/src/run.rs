use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use eyeball_core::backend::{
    save_transcript, Backend, BackendConfig, BackendKind, HttpBackend, MockOracleBackend,
    MockOracleConfig, RecordingBackend, ScriptedBackend, ENSEMBLE_TEMPERATURE,
    SINGLE_SHOT_TEMPERATURE,
};
use eyeball_core::instances::load_dataset;
use eyeball_core::metrics::RunRecord;
use eyeball_core::prompts::PROMPT_TEMPLATE_VERSION;
use eyeball_core::render::{Image, RenderStyle};
use eyeball_core::solver::SolvedInstance;
use eyeball_core::strategies::{
    select_demos, FewShotVariant, Harness, ImageSink, StrategyError, StrategyKind,
    DEFAULT_DEMO_COUNT, DEFAULT_ENSEMBLE_DRAWS, DEFAULT_ENSEMBLE_SIZES, DEFAULT_INITIAL_RETRY_CAP,
    DEFAULT_REFINE_ITERS,
};
use rayon::prelude::*;

use crate::args::RunArgs;
use crate::config::RunFile;
use crate::manifest::{file_sha256, DatasetRef, Experiment, RunManifest, StrategyParams};
use crate::{optima, CliError};

pub const DEFAULT_DATASET: &str = "dataset.json";
pub const DEFAULT_OUT_DIR: &str = "runs";
pub const DEFAULT_WORKERS: usize = 4;

/// Fully resolved `run` options.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub dataset: PathBuf,
    pub strategy: StrategyKind,
    pub sizes: Option<Vec<usize>>,
    pub limit: Option<usize>,
    pub backend: BackendConfig,
    pub text_model: String,
    pub mock: MockOracleConfig,
    pub transcript: Option<PathBuf>,
    pub k: usize,
    pub ensemble_sizes: Vec<usize>,
    pub iters: usize,
    pub demos: usize,
    pub workers: usize,
    pub dump_prompts: bool,
    pub out_dir: PathBuf,
}

fn parse_named<T: std::str::FromStr<Err = String>>(value: Option<String>) -> Result<Option<T>, CliError> {
    value.map(|v| v.parse().map_err(CliError::Usage)).transpose()
}

impl RunSettings {
    /// Flags win over the config file, which wins over built-in defaults.
    pub fn resolve(args: RunArgs, file: RunFile) -> Result<Self, CliError> {
        let strategy = match args.strategy {
            Some(s) => s,
            None => parse_named(file.strategy)?
                .ok_or_else(|| CliError::Usage("--strategy is required".into()))?,
        };
        let defaults = BackendConfig::default();
        let kind = match args.backend {
            Some(k) => k,
            None => parse_named(file.backend)?.unwrap_or(defaults.kind),
        };
        let model_name = args.model.or(file.model).unwrap_or(defaults.model_name);
        let extra_body = file
            .extra_body
            .map(|t| serde_json::to_value(t).map_err(|e| CliError::Usage(format!("extra_body: {e}"))))
            .transpose()?;
        let backend = BackendConfig {
            kind,
            endpoint_url: args.endpoint.or(file.endpoint).unwrap_or(defaults.endpoint_url),
            model_name: model_name.clone(),
            api_key_env_var: args.api_key_env.or(file.api_key_env).unwrap_or(defaults.api_key_env_var),
            temperature: args.temperature.or(file.temperature),
            max_output_tokens: args
                .max_output_tokens
                .or(file.max_output_tokens)
                .unwrap_or(defaults.max_output_tokens),
            request_timeout_s: args.timeout.or(file.timeout).unwrap_or(defaults.request_timeout_s),
            max_retries: args.max_retries.or(file.max_retries).unwrap_or(defaults.max_retries),
            retry_base_ms: file.retry_base_ms.unwrap_or(defaults.retry_base_ms),
            max_concurrent_requests: args
                .max_concurrent
                .or(file.max_concurrent)
                .unwrap_or(defaults.max_concurrent_requests),
            extra_body,
        };
        backend.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        let probs = [
            args.mock_p_optimal.or(file.mock_p_optimal),
            args.mock_p_perturbed.or(file.mock_p_perturbed),
            args.mock_p_incorrect_id.or(file.mock_p_incorrect_id),
            args.mock_p_incomplete.or(file.mock_p_incomplete),
            args.mock_p_unparseable.or(file.mock_p_unparseable),
        ];
        let base = MockOracleConfig::default();
        // Setting any rate switches the unset ones to zero, so that e.g.
        // `--mock-p-optimal 1.0` alone is a valid configuration.
        let any = probs.iter().any(Option::is_some);
        let rate = |p: Option<f64>, default: f64| p.unwrap_or(if any { 0.0 } else { default });
        let mock = MockOracleConfig {
            p_optimal: rate(probs[0], base.p_optimal),
            p_perturbed: rate(probs[1], base.p_perturbed),
            p_incorrect_id: rate(probs[2], base.p_incorrect_id),
            p_incomplete: rate(probs[3], base.p_incomplete),
            p_unparseable: rate(probs[4], base.p_unparseable),
            perturb_moves: args
                .mock_perturb_moves
                .or(file.mock_perturb_moves)
                .unwrap_or(base.perturb_moves),
            seed: args.mock_seed.or(file.mock_seed).unwrap_or(base.seed),
        };
        if kind == BackendKind::MockOracle {
            mock.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        let transcript = args.transcript.or(file.transcript);
        if kind == BackendKind::MockScripted && transcript.is_none() {
            return Err(CliError::Usage("--backend mock-scripted needs --transcript".into()));
        }

        let settings = RunSettings {
            dataset: args.dataset.or(file.dataset).unwrap_or_else(|| DEFAULT_DATASET.into()),
            strategy,
            sizes: args.sizes.or(file.sizes),
            limit: args.limit.or(file.limit),
            text_model: args.text_model.or(file.text_model).unwrap_or(model_name),
            backend,
            mock,
            transcript,
            k: args.k.or(file.k).unwrap_or(DEFAULT_ENSEMBLE_DRAWS),
            ensemble_sizes: args
                .ensemble_sizes
                .or(file.ensemble_sizes)
                .unwrap_or_else(|| DEFAULT_ENSEMBLE_SIZES.to_vec()),
            iters: args.iters.or(file.iters).unwrap_or(DEFAULT_REFINE_ITERS),
            demos: args.demos.or(file.demos).unwrap_or(DEFAULT_DEMO_COUNT),
            workers: args.workers.or(file.workers).unwrap_or(DEFAULT_WORKERS),
            dump_prompts: args.dump_prompts || file.dump_prompts.unwrap_or(false),
            out_dir: args.out_dir.or(file.out_dir).unwrap_or_else(|| DEFAULT_OUT_DIR.into()),
        };
        settings.check()?;
        Ok(settings)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Usage(m.into()));
        if self.workers == 0 {
            return bad("--workers must be at least 1");
        }
        if self.strategy == StrategyKind::Ensemble {
            if self.ensemble_sizes.is_empty() || self.ensemble_sizes.contains(&0) {
                return bad("--ensemble-sizes must be positive");
            }
            if self.ensemble_sizes.iter().any(|&s| s > self.k) {
                return bad("--k must be at least the largest ensemble size");
            }
        }
        if self.strategy.is_refine() && self.iters == 0 {
            return bad("--iters must be at least 1");
        }
        if matches!(self.strategy, StrategyKind::FewShotV1 | StrategyKind::FewShotV2) && self.demos == 0 {
            return bad("--demos must be at least 1");
        }
        Ok(())
    }

    fn params(&self) -> StrategyParams {
        let (single, ensemble) = match self.backend.temperature {
            Some(t) => (t, t),
            None => (SINGLE_SHOT_TEMPERATURE, ENSEMBLE_TEMPERATURE),
        };
        StrategyParams {
            sizes: self.sizes.clone(),
            limit: self.limit,
            k: self.k,
            ensemble_sizes: self.ensemble_sizes.clone(),
            iters: self.iters,
            demos: self.demos,
            initial_retry_cap: DEFAULT_INITIAL_RETRY_CAP,
            single_temperature: single,
            ensemble_temperature: ensemble,
        }
    }
}

/// Writes rendered images to `<run>/images/<instance>/<tag>.png`.
struct FileSink {
    root: PathBuf,
    error: Mutex<Option<String>>,
}

impl ImageSink for FileSink {
    fn store(&self, instance_id: &str, tag: &str, image: &Image) {
        let dir = self.root.join(instance_id);
        let path = dir.join(format!("{tag}.png"));
        if let Err(e) = fs::create_dir_all(&dir).and_then(|_| fs::write(&path, &image.bytes)) {
            self.error
                .lock()
                .expect("sink lock")
                .get_or_insert_with(|| format!("cannot write {}: {e}", path.display()));
        }
    }
}

fn fault(e: impl std::fmt::Display) -> CliError {
    CliError::Fault(e.to_string())
}

fn make_backend(config: &BackendConfig, settings: &RunSettings) -> Result<Box<dyn Backend>, CliError> {
    Ok(match config.kind {
        BackendKind::MockOracle => Box::new(MockOracleBackend::new(settings.mock.clone()).map_err(fault)?),
        BackendKind::MockScripted => {
            let path = settings.transcript.as_ref().expect("checked in resolve");
            if !path.exists() {
                return Err(CliError::Usage(format!("transcript {} not found", path.display())));
            }
            Box::new(ScriptedBackend::load(path).map_err(fault)?)
        }
        BackendKind::Http => Box::new(HttpBackend::new(config.clone()).map_err(fault)?),
    })
}

fn new_run_dir(out_dir: &Path, base_id: &str) -> Result<(String, PathBuf), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| fault(format!("cannot create {}: {e}", out_dir.display())))?;
    for suffix in 0.. {
        let id = if suffix == 0 {
            base_id.to_string()
        } else {
            format!("{base_id}-{suffix}")
        };
        let dir = out_dir.join(&id);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok((id, dir)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(fault(format!("cannot create {}: {e}", dir.display()))),
        }
    }
    unreachable!("suffixes are unbounded")
}

struct InstanceResult {
    records: Vec<RunRecord>,
    payload: serde_json::Value,
}

fn evaluate(
    settings: &RunSettings,
    experiment_id: &str,
    harness: &Harness<'_>,
    solved: &SolvedInstance,
    pool: &[SolvedInstance],
    vision: &dyn Backend,
    text: &dyn Backend,
) -> Result<InstanceResult, StrategyError> {
    let strategy = settings.strategy;
    let payload_ref = Some(format!("payloads/{}.json", solved.instance.instance_id));
    Ok(match strategy {
        StrategyKind::ZeroShot | StrategyKind::FewShotV1 | StrategyKind::FewShotV2 => {
            let attempt = match strategy {
                StrategyKind::ZeroShot => harness.run_zero_shot(solved, vision)?,
                _ => {
                    let demos = select_demos(pool, solved, settings.demos);
                    let variant = if strategy == StrategyKind::FewShotV1 {
                        FewShotVariant::V1
                    } else {
                        FewShotVariant::V2
                    };
                    harness.run_few_shot(solved, &demos, vision, variant)?
                }
            };
            let mut record = RunRecord::from_attempt(experiment_id, strategy, solved, &attempt);
            record.payload = payload_ref;
            InstanceResult {
                records: vec![record],
                payload: json(&attempt),
            }
        }
        StrategyKind::Ensemble => {
            let result = harness.run_self_ensemble(solved, vision, settings.k, &settings.ensemble_sizes)?;
            InstanceResult {
                records: RunRecord::from_ensemble(experiment_id, solved, &result, payload_ref),
                payload: json(&result),
            }
        }
        StrategyKind::Refine1 | StrategyKind::Refine2 => {
            let trace = if strategy == StrategyKind::Refine1 {
                harness.run_self_refine_1(solved, text, vision, settings.iters)?
            } else {
                harness.run_self_refine_2(solved, vision, settings.iters)?
            };
            InstanceResult {
                records: RunRecord::from_refine(experiment_id, strategy, solved, &trace, settings.iters, payload_ref),
                payload: json(&trace),
            }
        }
    })
}

fn json<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("payload serialize")
}

fn write_json_lines<T: serde::Serialize>(items: &[T], path: &Path) -> Result<(), CliError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| fault(format!("cannot write {}: {e}", path.display())))
}

/// Executes a run and returns its directory.
pub fn execute(settings: &RunSettings) -> Result<PathBuf, CliError> {
    if !settings.dataset.exists() {
        return Err(CliError::Usage(format!("dataset {} not found", settings.dataset.display())));
    }
    let dataset = load_dataset(&settings.dataset).map_err(|e| CliError::Usage(e.to_string()))?;
    let all = optima::load_or_solve(&dataset, &optima::optima_path(&settings.dataset))?;

    let mut selected: Vec<&SolvedInstance> = Vec::new();
    for &n in &dataset.sizes {
        if settings.sizes.as_ref().is_some_and(|s| !s.contains(&n)) {
            continue;
        }
        let of_size = all.iter().filter(|s| s.instance.n == n);
        selected.extend(of_size.take(settings.limit.unwrap_or(usize::MAX)));
    }

    let style = RenderStyle::default();
    let params = settings.params();
    let experiment = Experiment {
        strategy: settings.strategy,
        dataset_sha256: file_sha256(&settings.dataset)?,
        instances: selected.iter().map(|s| s.instance.instance_id.clone()).collect(),
        params: params.clone(),
        prompt_template_version: PROMPT_TEMPLATE_VERSION,
        style_digest: style.digest(),
    };
    let experiment_id = experiment.id();
    let mut manifest = RunManifest {
        run_id: String::new(),
        created_utc: chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment_id: experiment_id.clone(),
        dataset: DatasetRef {
            path: settings.dataset.display().to_string(),
            sha256: experiment.dataset_sha256.clone(),
            master_seed: dataset.seed,
        },
        experiment,
        backend: settings.backend.clone(),
        text_model: (settings.strategy == StrategyKind::Refine1).then(|| settings.text_model.clone()),
        mock: (settings.backend.kind == BackendKind::MockOracle).then(|| settings.mock.clone()),
        transcript: settings.transcript.as_ref().map(|p| p.display().to_string()),
        workers: settings.workers,
    };

    let vision = make_backend(&settings.backend, settings)?;
    let text = if settings.strategy == StrategyKind::Refine1
        && settings.backend.kind == BackendKind::Http
        && settings.text_model != settings.backend.model_name
    {
        let config = BackendConfig {
            model_name: settings.text_model.clone(),
            ..settings.backend.clone()
        };
        Some(make_backend(&config, settings)?)
    } else {
        None
    };

    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let (run_id, run_dir) = new_run_dir(&settings.out_dir, &format!("{stamp}-{}", manifest.digest()))?;
    manifest.run_id = run_id;
    manifest.write(&run_dir.join("manifest.json"))?;

    let mut vision = RecordingBackend::new(vision);
    let mut text = text.map(RecordingBackend::new);
    if settings.dump_prompts {
        let dir = run_dir.join("prompts");
        vision = vision.with_prompt_dump(dir.clone());
        text = text.map(|t| t.with_prompt_dump(dir));
    }
    let sink = FileSink {
        root: run_dir.join("images"),
        error: Mutex::new(None),
    };
    let harness = Harness {
        style,
        single_temperature: params.single_temperature,
        ensemble_temperature: params.ensemble_temperature,
        initial_retry_cap: params.initial_retry_cap,
        sink: Some(&sink),
    };
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(fault)?;
    let text_backend: &dyn Backend = match &text {
        Some(t) => t,
        None => &vision,
    };
    let results: Vec<InstanceResult> = workers.install(|| {
        selected
            .par_iter()
            .map(|s| evaluate(settings, &experiment_id, &harness, s, &all, &vision, text_backend))
            .collect::<Result<_, _>>()
    })
    .map_err(fault)?;
    if let Some(e) = sink.error.lock().expect("sink lock").take() {
        return Err(CliError::Fault(e));
    }

    let payloads = run_dir.join("payloads");
    fs::create_dir_all(&payloads).map_err(fault)?;
    for (s, r) in selected.iter().zip(&results) {
        let path = payloads.join(format!("{}.json", s.instance.instance_id));
        let mut body = serde_json::to_string_pretty(&r.payload).expect("payload serialize");
        body.push('\n');
        fs::write(&path, body).map_err(|e| fault(format!("cannot write {}: {e}", path.display())))?;
    }
    let records: Vec<&RunRecord> = results.iter().flat_map(|r| &r.records).collect();
    write_json_lines(&records, &run_dir.join("records.jsonl"))?;

    let transcripts = run_dir.join("transcripts");
    fs::create_dir_all(&transcripts).map_err(fault)?;
    let mut entries = vision.entries();
    if let Some(t) = &text {
        entries.extend(t.entries());
        entries.sort_by(|a, b| (a.instance_id.as_str(), a.call_index).cmp(&(b.instance_id.as_str(), b.call_index)));
    }
    save_transcript(&entries, &transcripts.join(format!("{}.jsonl", settings.strategy))).map_err(fault)?;
    Ok(run_dir)
}

/// Reads `records.jsonl` from a run directory.
pub fn load_records(run_dir: &Path) -> Result<Vec<RunRecord>, CliError> {
    let path = run_dir.join("records.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| fault(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| fault(format!("{}: {e}", path.display()))))
        .collect()
}
