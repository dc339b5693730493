//! LLM-backed gap detector: prompt construction, gateway calls with retry,
//! response parsing, batch fan-out and demonstration-count ablation.

pub mod gateway;
pub mod mock;
pub mod prompt;
pub mod response;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gateway::{prompt_digest, ChatBackend, ChatRequest, HttpBackend, TransportError};
pub use mock::{oracle_echo_script, MockBackend, ScriptEntry, ScriptError, ScriptedReply};
pub use prompt::{
    build_system_prompt, build_user_prompt, count_demonstrations, PromptBundle,
    GAP_CATEGORY_SUMMARY, OUTPUT_INSTRUCTION,
};
pub use response::{parse_response, render_output, ParseStatus, ParsedResponse};

use crate::corpus::{select_demonstrations, AnnotatedExample, CorpusError, GenerationRecord};
use crate::metrics::{DetectionOutcome, ErrorDenominator, MetricsError, MetricsReport};
use crate::taxonomy::GapLabelSet;

pub const MAX_DEMONSTRATIONS: usize = 20;
pub const DEFAULT_ABLATION_KS: [usize; 4] = [4, 8, 16, 20];

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid detector configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no gold label for record {0:?}")]
    MissingGold(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_ref: String,
    pub k_demonstrations: usize,
    pub temperature: f64,
    pub max_retries: u32,
    #[serde(with = "duration_secs")]
    pub request_timeout: Duration,
    pub parallelism: usize,
    /// Pause before each retry. Zero disables it.
    #[serde(with = "duration_secs")]
    pub retry_backoff: Duration,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4o".into(),
            api_key_ref: "OPENAI_API_KEY".into(),
            k_demonstrations: MAX_DEMONSTRATIONS,
            temperature: 0.0,
            max_retries: 2,
            request_timeout: Duration::from_secs(120),
            parallelism: 4,
            retry_backoff: Duration::from_millis(500),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.parallelism == 0 {
            return Err(DetectorError::Config(
                "parallelism must be at least 1".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(DetectorError::Config(format!(
                "temperature must be a finite number >= 0, got {}",
                self.temperature
            )));
        }
        if self.k_demonstrations > MAX_DEMONSTRATIONS {
            return Err(DetectorError::Config(format!(
                "k_demonstrations must be in 0..={MAX_DEMONSTRATIONS}, got {}",
                self.k_demonstrations
            )));
        }
        if self.model_name.trim().is_empty() {
            return Err(DetectorError::Config("model_name is empty".into()));
        }
        Ok(())
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub record_id: String,
    #[serde(default)]
    pub labels: Option<GapLabelSet>,
    pub explanation: String,
    pub parse_status: ParseStatus,
    pub attempts: u32,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
}

impl DetectionResult {
    pub fn is_failed(&self) -> bool {
        self.parse_status == ParseStatus::Failed
    }
}

/// System prompt for `demos`, shared by every record in a batch.
pub fn system_prompt_for(demos: &[AnnotatedExample]) -> Result<String, DetectorError> {
    Ok(build_system_prompt(GAP_CATEGORY_SUMMARY, demos)?)
}

pub fn prompt_bundle(
    record: &GenerationRecord,
    demos: &[AnnotatedExample],
) -> Result<PromptBundle, DetectorError> {
    Ok(PromptBundle {
        system_text: system_prompt_for(demos)?,
        user_text: build_user_prompt(record),
    })
}

/// Runs one record against a prebuilt system prompt.
///
/// Transport errors and failed parses are retried up to `max_retries`
/// times. Exhaustion yields a failed result, never an error.
pub fn detect_with_system(
    record: &GenerationRecord,
    system: &str,
    config: &DetectorConfig,
    backend: &dyn ChatBackend,
) -> DetectionResult {
    let request = ChatRequest {
        model: config.model_name.clone(),
        system: system.to_owned(),
        user: build_user_prompt(record),
        temperature: config.temperature,
    };
    let max_attempts = config.max_retries + 1;
    let mut raw_response = String::new();
    let mut transport_error = None;
    for attempt in 1..=max_attempts {
        if attempt > 1 && !config.retry_backoff.is_zero() {
            std::thread::sleep(config.retry_backoff);
        }
        match backend.complete(&request) {
            Ok(raw) => {
                transport_error = None;
                let parsed = parse_response(&raw);
                raw_response = raw;
                if parsed.status != ParseStatus::Failed {
                    return DetectionResult {
                        record_id: record.record_id.clone(),
                        labels: parsed.labels,
                        explanation: parsed.explanation,
                        parse_status: parsed.status,
                        attempts: attempt,
                        raw_response,
                        transport_error: None,
                    };
                }
                tracing::debug!(record_id = %record.record_id, attempt, "unparseable response");
            }
            Err(e) => {
                tracing::warn!(record_id = %record.record_id, attempt, error = %e, "transport error");
                transport_error = Some(e.to_string());
            }
        }
    }
    DetectionResult {
        record_id: record.record_id.clone(),
        labels: None,
        explanation: String::new(),
        parse_status: ParseStatus::Failed,
        attempts: max_attempts,
        raw_response,
        transport_error,
    }
}

pub fn detect(
    record: &GenerationRecord,
    config: &DetectorConfig,
    demos: &[AnnotatedExample],
    backend: &dyn ChatBackend,
) -> Result<DetectionResult, DetectorError> {
    config.validate()?;
    check_demo_count(config, demos)?;
    let system = system_prompt_for(demos)?;
    Ok(detect_with_system(record, &system, config, backend))
}

fn check_demo_count(
    config: &DetectorConfig,
    demos: &[AnnotatedExample],
) -> Result<(), DetectorError> {
    if demos.len() != config.k_demonstrations {
        return Err(DetectorError::Config(format!(
            "expected {} demonstrations, got {}",
            config.k_demonstrations,
            demos.len()
        )));
    }
    Ok(())
}

/// Detects every record with at most `parallelism` requests in flight.
/// Results come back in input order.
pub fn detect_batch(
    dataset: &[GenerationRecord],
    config: &DetectorConfig,
    demos: &[AnnotatedExample],
    backend: &dyn ChatBackend,
) -> Result<Vec<DetectionResult>, DetectorError> {
    config.validate()?;
    check_demo_count(config, demos)?;
    let system = system_prompt_for(demos)?;
    Ok(run_batch(dataset, &system, config, backend))
}

fn run_batch(
    dataset: &[GenerationRecord],
    system: &str,
    config: &DetectorConfig,
    backend: &dyn ChatBackend,
) -> Vec<DetectionResult> {
    let workers = config.parallelism.min(dataset.len());
    if workers <= 1 {
        return dataset
            .iter()
            .map(|r| detect_with_system(r, system, config, backend))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<DetectionResult>>> = Mutex::new(vec![None; dataset.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(record) = dataset.get(i) else { break };
                let result = detect_with_system(record, system, config, backend);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every slot is filled before the scope ends"))
        .collect()
}

/// Pairs parsed results with gold labels. Failed parses are counted, not
/// paired.
pub fn join_gold(
    results: &[DetectionResult],
    gold: &[AnnotatedExample],
) -> Result<(Vec<DetectionOutcome>, usize), DetectorError> {
    let by_id: HashMap<&str, GapLabelSet> = gold
        .iter()
        .map(|g| (g.record_id.as_str(), g.gold))
        .collect();
    let mut outcomes = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        let gold = *by_id
            .get(r.record_id.as_str())
            .ok_or_else(|| DetectorError::MissingGold(r.record_id.clone()))?;
        match r.labels {
            Some(predicted) => outcomes.push(DetectionOutcome {
                record_id: r.record_id.clone(),
                gold,
                predicted,
            }),
            None => failed += 1,
        }
    }
    Ok((outcomes, failed))
}

/// Metrics for one detector run. Gold enables the accuracy means and the
/// error table. `None` when no result parsed.
pub fn evaluate_results(
    results: &[DetectionResult],
    gold: Option<&[AnnotatedExample]>,
    denominator: ErrorDenominator,
) -> Result<Option<MetricsReport>, DetectorError> {
    match gold {
        Some(gold) => {
            let (outcomes, failed) = join_gold(results, gold)?;
            if outcomes.is_empty() {
                return Ok(None);
            }
            Ok(Some(MetricsReport::from_outcomes(
                &outcomes,
                failed,
                denominator,
            )?))
        }
        None => {
            let predictions: Vec<GapLabelSet> = results.iter().filter_map(|r| r.labels).collect();
            if predictions.is_empty() {
                return Ok(None);
            }
            let failed = results.len() - predictions.len();
            Ok(Some(MetricsReport::from_predictions(&predictions, failed)?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationStatus {
    Ok,
    AllFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub k: usize,
    pub n: usize,
    pub n_failed: usize,
    pub status: AblationStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<MetricsReport>,
}

/// One detector run per `k`, each using the first `k` training examples as
/// demonstrations. `config.k_demonstrations` is ignored.
pub fn run_ablation(
    train: &[AnnotatedExample],
    test: &[GenerationRecord],
    gold: Option<&[AnnotatedExample]>,
    config: &DetectorConfig,
    ks: &[usize],
    backend: &dyn ChatBackend,
) -> Result<Vec<AblationRow>, DetectorError> {
    config.validate()?;
    for &k in ks {
        if k > train.len() || k > MAX_DEMONSTRATIONS {
            return Err(DetectorError::Config(format!(
                "k = {k} exceeds the {} available demonstrations",
                train.len().min(MAX_DEMONSTRATIONS)
            )));
        }
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let demos = match k {
            0 => &[][..],
            k => select_demonstrations(train, k)?,
        };
        let system = system_prompt_for(demos)?;
        let results = run_batch(test, &system, config, backend);
        let n_failed = results.iter().filter(|r| r.is_failed()).count();
        let report = evaluate_results(&results, gold, ErrorDenominator::Example)?;
        rows.push(AblationRow {
            k,
            n: results.len(),
            n_failed,
            status: match report {
                Some(_) => AblationStatus::Ok,
                None => AblationStatus::AllFailed,
            },
            report,
        });
    }
    Ok(rows)
}
