//! Evaluation harness: presents prompts to a model, grades the responses
//! against canonical answers, and appends outcome records to the run store.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Pow;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evaluate::{answers_match, decimal_3dp};
use crate::ir::AnswerValue;
use crate::par::par_map;
use crate::store::{InstanceRecord, RunHandle, StoreError, STREAM_RECORDS};

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionOptions {
    pub temperature: f64,
    pub max_output_tokens: u64,
}

impl Default for CompletionOptions {
    fn default() -> Self {
        CompletionOptions {
            temperature: 0.0,
            max_output_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelResponse {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed model response: {0}")]
    Malformed(String),
}

/// Stateless completion endpoint: one prompt in, one response out, no
/// conversation state retained between calls.
pub trait ModelClient: Send + Sync {
    fn complete(&self, prompt: &str, options: &CompletionOptions)
        -> Result<ModelResponse, ModelError>;
}

pub fn prompt_key(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Plain-text rendering of a canonical answer, as a cooperative model would
/// state it: integers exactly, rationals to three decimals, sets in braces.
pub fn render_answer_text(a: &AnswerValue) -> String {
    match a {
        AnswerValue::Int(n) => n.to_string(),
        AnswerValue::Rat(r) => decimal_3dp(r),
        AnswerValue::Bool(b) => b.to_string(),
        AnswerValue::Set(els) => {
            let parts: Vec<String> = els.iter().map(decimal_3dp).collect();
            format!("{{{}}}", parts.join(", "))
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ScriptEntry {
    text: String,
    tokens_in: Option<u64>,
    tokens_out: Option<u64>,
    latency_ms: Option<u64>,
}

#[derive(Debug, Clone)]
enum ScriptMode {
    /// Answer every prompt with its canonical answer (the map is built from
    /// the instances under evaluation, keyed by prompt hash).
    CanonicalOracle,
    Constant(ScriptEntry),
    Map(BTreeMap<String, ScriptEntry>),
}

/// Deterministic offline model: responses come from a fixture file or from
/// the canonical answers themselves. Token counts default to ceil(len/4)
/// and latency to 1ms unless the fixture programs explicit values.
#[derive(Debug, Clone)]
pub struct ScriptedClient {
    mode: ScriptMode,
    oracle: BTreeMap<String, String>,
}

impl ScriptedClient {
    pub fn constant(text: &str) -> ScriptedClient {
        ScriptedClient {
            mode: ScriptMode::Constant(ScriptEntry {
                text: text.to_string(),
                tokens_in: None,
                tokens_out: None,
                latency_ms: None,
            }),
            oracle: BTreeMap::new(),
        }
    }

    /// Build an oracle that answers each given prompt with `#### <answer>`.
    pub fn canonical_oracle<'a, I>(pairs: I) -> ScriptedClient
    where
        I: IntoIterator<Item = (&'a str, &'a AnswerValue)>,
    {
        let mut client = ScriptedClient {
            mode: ScriptMode::CanonicalOracle,
            oracle: BTreeMap::new(),
        };
        client.seed_oracle(pairs);
        client
    }

    /// Parse a fixture file: `{"mode":"canonical_oracle"}`,
    /// `{"mode":"constant","response":...}`, or
    /// `{"mode":"map","responses":{"<sha256(prompt)>":...}}` where each
    /// response is either a bare string or
    /// `{"text":...,"tokens_in":...,"tokens_out":...,"latency_ms":...}`.
    pub fn from_fixture(path: &Path) -> Result<ScriptedClient, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Transport(format!("cannot read fixture {path:?}: {e}")))?;
        Self::from_fixture_str(&text)
    }

    pub fn from_fixture_str(text: &str) -> Result<ScriptedClient, ModelError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| ModelError::Malformed(format!("fixture is not JSON: {e}")))?;
        let mode = value
            .get("mode")
            .and_then(|m| m.as_str())
            .ok_or_else(|| ModelError::Malformed("fixture lacks a \"mode\" field".into()))?;
        let parse_entry = |v: &serde_json::Value| -> Result<ScriptEntry, ModelError> {
            if let Some(s) = v.as_str() {
                return Ok(ScriptEntry {
                    text: s.to_string(),
                    tokens_in: None,
                    tokens_out: None,
                    latency_ms: None,
                });
            }
            serde_json::from_value(v.clone())
                .map_err(|e| ModelError::Malformed(format!("bad response entry: {e}")))
        };
        let mode = match mode {
            "canonical_oracle" => ScriptMode::CanonicalOracle,
            "constant" => {
                let entry = value
                    .get("response")
                    .ok_or_else(|| ModelError::Malformed("constant mode needs \"response\"".into()))
                    .and_then(|v| parse_entry(v))?;
                ScriptMode::Constant(entry)
            }
            "map" => {
                let responses = value
                    .get("responses")
                    .and_then(|v| v.as_object())
                    .ok_or_else(|| ModelError::Malformed("map mode needs \"responses\"".into()))?;
                let mut map = BTreeMap::new();
                for (k, v) in responses {
                    map.insert(k.clone(), parse_entry(v)?);
                }
                ScriptMode::Map(map)
            }
            other => {
                return Err(ModelError::Malformed(format!(
                    "unknown scripted mode {other:?}"
                )))
            }
        };
        Ok(ScriptedClient {
            mode,
            oracle: BTreeMap::new(),
        })
    }

    /// Attach canonical answers for `canonical_oracle` mode.
    pub fn seed_oracle<'a, I>(&mut self, pairs: I)
    where
        I: IntoIterator<Item = (&'a str, &'a AnswerValue)>,
    {
        for (prompt, answer) in pairs {
            self.oracle
                .insert(prompt_key(prompt), format!("#### {}", render_answer_text(answer)));
        }
    }
}

fn default_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

impl ModelClient for ScriptedClient {
    fn complete(
        &self,
        prompt: &str,
        _options: &CompletionOptions,
    ) -> Result<ModelResponse, ModelError> {
        let entry = match &self.mode {
            ScriptMode::CanonicalOracle => {
                let text = self.oracle.get(&prompt_key(prompt)).ok_or_else(|| {
                    ModelError::Transport("no scripted response for this prompt".into())
                })?;
                ScriptEntry {
                    text: text.clone(),
                    tokens_in: None,
                    tokens_out: None,
                    latency_ms: None,
                }
            }
            ScriptMode::Constant(entry) => entry.clone(),
            ScriptMode::Map(map) => map
                .get(&prompt_key(prompt))
                .cloned()
                .ok_or_else(|| {
                    ModelError::Transport("no scripted response for this prompt".into())
                })?,
        };
        Ok(ModelResponse {
            tokens_in: entry.tokens_in.unwrap_or_else(|| default_tokens(prompt)),
            tokens_out: entry.tokens_out.unwrap_or_else(|| default_tokens(&entry.text)),
            latency_ms: entry.latency_ms.unwrap_or(1),
            text: entry.text,
        })
    }
}

/// Chat-completion client over HTTP. Endpoint and credentials come from
/// `XRAY_MODEL_ENDPOINT` / `XRAY_MODEL_KEY`.
pub struct LiveClient {
    endpoint: String,
    key: Option<String>,
    model: String,
    http: reqwest::blocking::Client,
}

impl LiveClient {
    pub fn new(endpoint: &str, key: Option<&str>, model: &str) -> LiveClient {
        LiveClient {
            endpoint: endpoint.to_string(),
            key: key.map(|k| k.to_string()),
            model: model.to_string(),
            http: reqwest::blocking::Client::new(),
        }
    }

    pub fn from_env(model: &str) -> Result<LiveClient, ModelError> {
        let endpoint = std::env::var("XRAY_MODEL_ENDPOINT").map_err(|_| {
            ModelError::Transport("XRAY_MODEL_ENDPOINT is not set; no live model available".into())
        })?;
        let key = std::env::var("XRAY_MODEL_KEY").ok();
        Ok(LiveClient::new(&endpoint, key.as_deref(), model))
    }
}

impl ModelClient for LiveClient {
    fn complete(
        &self,
        prompt: &str,
        options: &CompletionOptions,
    ) -> Result<ModelResponse, ModelError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": options.temperature,
            "max_tokens": options.max_output_tokens,
        });
        let started = Instant::now();
        let mut req = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        let status = resp.status();
        let payload: serde_json::Value = resp
            .json()
            .map_err(|e| ModelError::Malformed(format!("non-JSON response: {e}")))?;
        if !status.is_success() {
            return Err(ModelError::Transport(format!(
                "endpoint returned {status}: {payload}"
            )));
        }
        let latency_ms = started.elapsed().as_millis() as u64;
        let text = payload["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                ModelError::Malformed("response lacks choices[0].message.content".into())
            })?
            .to_string();
        let usage = &payload["usage"];
        let tokens_in = usage["prompt_tokens"].as_u64().unwrap_or(0);
        let tokens_out = usage["completion_tokens"].as_u64().unwrap_or(0);
        Ok(ModelResponse {
            text,
            tokens_in,
            tokens_out,
            latency_ms,
        })
    }
}

// ---------------------------------------------------------------------------
// Grading

fn normalize_numeric_text(raw: &str) -> String {
    // Unicode minus and fancy commas show up in model output routinely.
    raw.replace('\u{2212}', "-").replace('\u{ff0c}', ",")
}

/// A numeric token: optional sign, digits, optional `.frac` or `/denom`.
fn scan_number(chars: &[char], start: usize) -> Option<(BigRational, usize)> {
    let mut i = start;
    let mut sign = BigInt::from(1);
    if i < chars.len() && (chars[i] == '-' || chars[i] == '+') {
        if chars[i] == '-' {
            sign = BigInt::from(-1);
        }
        i += 1;
    }
    let digits_at = |mut j: usize| {
        let from = j;
        while j < chars.len() && chars[j].is_ascii_digit() {
            j += 1;
        }
        (from, j)
    };
    let (int_from, int_to) = digits_at(i);
    if int_from == int_to {
        return None;
    }
    let int_part: String = chars[int_from..int_to].iter().collect();
    let mut value = BigRational::from(int_part.parse::<BigInt>().ok()?);
    let mut end = int_to;
    if end < chars.len() && chars[end] == '.' {
        let (f_from, f_to) = digits_at(end + 1);
        if f_from < f_to {
            let frac: String = chars[f_from..f_to].iter().collect();
            let scale = BigInt::from(10).pow((f_to - f_from) as u32);
            value += BigRational::new(frac.parse::<BigInt>().ok()?, scale);
            end = f_to;
        }
    } else if end < chars.len() && chars[end] == '/' {
        let (d_from, d_to) = digits_at(end + 1);
        if d_from < d_to {
            let denom: String = chars[d_from..d_to].iter().collect();
            let denom: BigInt = denom.parse().ok()?;
            if denom != BigInt::from(0) {
                value /= BigRational::from(denom);
                end = d_to;
            }
        }
    }
    Some((value * BigRational::from(sign), end))
}

fn all_numbers(text: &str) -> Vec<(BigRational, bool)> {
    // (value, had_fraction_or_slash) — the flag preserves Int vs Rat parses.
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        // A sign or digit can open a number; anything else is skipped. A
        // sign counts only when not glued to a preceding alphanumeric (so
        // "x-3" does not read as -3, but "= -3" does).
        let opens = chars[i].is_ascii_digit()
            || ((chars[i] == '-' || chars[i] == '+')
                && i + 1 < chars.len()
                && chars[i + 1].is_ascii_digit()
                && (i == 0 || !chars[i - 1].is_alphanumeric()));
        if opens {
            if let Some((value, end)) = scan_number(&chars, i) {
                let token: String = chars[i..end].iter().collect();
                out.push((value, token.contains('.') || token.contains('/')));
                i = end;
                continue;
            }
        }
        i += 1;
    }
    out
}

fn rat_answer(value: BigRational, fractional: bool) -> AnswerValue {
    if !fractional && value.is_integer() {
        AnswerValue::Int(value.to_integer())
    } else {
        AnswerValue::Rat(value)
    }
}

/// Parse a candidate answer segment: a brace set if one appears, otherwise
/// a single number (`first` picks the first or last number in the segment).
fn parse_segment(segment: &str, first: bool) -> Option<AnswerValue> {
    if let (Some(open), Some(close)) = (segment.find('{'), segment.rfind('}')) {
        if open < close {
            let inner = &segment[open + 1..close];
            let numbers = all_numbers(inner);
            if !numbers.is_empty() {
                return Some(AnswerValue::set(
                    numbers.into_iter().map(|(v, _)| v).collect(),
                ));
            }
        }
    }
    let trimmed = segment.trim();
    if trimmed.eq_ignore_ascii_case("true") || trimmed.eq_ignore_ascii_case("false") {
        return Some(AnswerValue::Bool(trimmed.eq_ignore_ascii_case("true")));
    }
    let numbers = all_numbers(segment);
    let (value, fractional) = if first {
        numbers.first().cloned()?
    } else {
        numbers.last().cloned()?
    };
    Some(rat_answer(value, fractional))
}

fn boxed_content(text: &str) -> Option<String> {
    // Last `\boxed{…}` with balanced braces.
    let at = text.rfind("\\boxed{")?;
    let inner_start = at + "\\boxed{".len();
    let mut depth = 1usize;
    for (offset, ch) in text[inner_start..].char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(text[inner_start..inner_start + offset].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

/// Extract the model's final answer and compare it with the canonical one.
///
/// Extraction order: text after the last `####`, then the last `\boxed{…}`,
/// then the last number or brace-set anywhere in the response. Integers
/// compare exactly; rationals within 5×10⁻⁴ absolute or 10⁻⁶ relative
/// tolerance; sets element-wise after sorting, under the same tolerance.
pub fn grade_response(raw: &str, canonical: &AnswerValue) -> (Option<AnswerValue>, bool) {
    let text = normalize_numeric_text(raw);
    let parsed = text
        .rfind("####")
        .and_then(|at| parse_segment(&text[at + 4..], true))
        .or_else(|| boxed_content(&text).and_then(|inner| parse_segment(&inner, true)))
        .or_else(|| parse_segment(&text, false));
    let correct = parsed
        .as_ref()
        .map(|p| answers_match(canonical, p))
        .unwrap_or(false);
    (parsed, correct)
}

// ---------------------------------------------------------------------------
// Evaluation loop

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub instance_hash: String,
    pub model_id: String,
    pub repetition_index: u32,
    pub raw_response: String,
    pub parsed_answer: Option<AnswerValue>,
    pub correct: bool,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub latency_ms: u64,
    pub timestamp: String,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub model_id: String,
    pub repetitions: u32,
    pub parallelism: usize,
    pub options: CompletionOptions,
}

impl EvalConfig {
    pub fn new(model_id: &str) -> EvalConfig {
        EvalConfig {
            model_id: model_id.to_string(),
            repetitions: 10,
            parallelism: 4,
            options: CompletionOptions::default(),
        }
    }
}

const TRANSPORT_RETRIES: u32 = 3;

fn complete_with_retries(
    model: &dyn ModelClient,
    prompt: &str,
    options: &CompletionOptions,
) -> Result<ModelResponse, ModelError> {
    let mut last = None;
    for attempt in 0..=TRANSPORT_RETRIES {
        match model.complete(prompt, options) {
            Ok(resp) => return Ok(resp),
            Err(err) => {
                last = Some(err);
                if attempt < TRANSPORT_RETRIES {
                    std::thread::sleep(std::time::Duration::from_millis(100 << attempt));
                }
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Query the model for every (instance, repetition) pair not already in the
/// run store, grade the responses, and append records as they complete.
/// Transport failures after retries become `correct=false` records rather
/// than aborting the batch. Returns every record for this model over the
/// given instances, previously recorded ones included.
pub fn run_evaluation(
    instances: &[InstanceRecord],
    model: Arc<dyn ModelClient>,
    cfg: &EvalConfig,
    run: &mut RunHandle,
) -> Result<Vec<EvaluationRecord>, StoreError> {
    let existing: Vec<EvaluationRecord> = run.load(STREAM_RECORDS)?;
    let done: HashSet<(String, u32)> = existing
        .iter()
        .filter(|r| r.model_id == cfg.model_id)
        .map(|r| (r.instance_hash.clone(), r.repetition_index))
        .collect();
    let mut pending: Vec<(String, String, AnswerValue, u32)> = Vec::new();
    for inst in instances {
        for rep in 0..cfg.repetitions {
            if !done.contains(&(inst.instance_hash.clone(), rep)) {
                pending.push((
                    inst.instance_hash.clone(),
                    inst.prompt.clone(),
                    inst.canonical_answer.clone(),
                    rep,
                ));
            }
        }
    }

    let chunk = cfg.parallelism.max(1);
    let mut fresh: Vec<EvaluationRecord> = Vec::with_capacity(pending.len());
    for batch in pending.chunks(chunk) {
        let model = Arc::clone(&model);
        let options = cfg.options.clone();
        let model_id = cfg.model_id.clone();
        let results = par_map(batch.to_vec(), move |(hash, prompt, canonical, rep)| {
            let record = match complete_with_retries(model.as_ref(), &prompt, &options) {
                Ok(resp) => {
                    let (parsed, correct) = grade_response(&resp.text, &canonical);
                    EvaluationRecord {
                        instance_hash: hash,
                        model_id: model_id.clone(),
                        repetition_index: rep,
                        raw_response: resp.text,
                        parsed_answer: parsed,
                        correct,
                        tokens_in: resp.tokens_in,
                        tokens_out: resp.tokens_out,
                        latency_ms: resp.latency_ms,
                        timestamp: chrono::Utc::now().to_rfc3339(),
                    }
                }
                Err(err) => EvaluationRecord {
                    instance_hash: hash,
                    model_id: model_id.clone(),
                    repetition_index: rep,
                    raw_response: format!("<no response: {err}>"),
                    parsed_answer: None,
                    correct: false,
                    tokens_in: 0,
                    tokens_out: 0,
                    latency_ms: 0,
                    timestamp: chrono::Utc::now().to_rfc3339(),
                },
            };
            record
        });
        for record in results {
            run.append(STREAM_RECORDS, &record)?;
            fresh.push(record);
        }
    }

    let wanted: HashSet<&str> = instances.iter().map(|i| i.instance_hash.as_str()).collect();
    let mut all: Vec<EvaluationRecord> = existing
        .into_iter()
        .filter(|r| r.model_id == cfg.model_id && wanted.contains(r.instance_hash.as_str()))
        .collect();
    all.extend(fresh);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::open_run;
    use num_traits::Zero;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    fn set(vals: &[(i64, i64)]) -> AnswerValue {
        AnswerValue::set(vals.iter().map(|&(p, q)| rat(p, q)).collect())
    }

    #[test]
    fn grading_extracts_after_hash_marks_first() {
        let canonical = AnswerValue::Int(BigInt::from(28));
        let (parsed, correct) = grade_response("thinking 1 2 3...\n#### 28", &canonical);
        assert_eq!(parsed, Some(AnswerValue::Int(BigInt::from(28))));
        assert!(correct);

        // Units after the number are ignored; numbers before #### are not
        // mistaken for the answer.
        let (_, correct) = grade_response("x = 99\n#### 4.1460 N·s", &AnswerValue::Rat(rat(4146, 1000)));
        assert!(correct);
    }

    #[test]
    fn grading_falls_back_to_boxed_then_last_number() {
        let canonical = AnswerValue::Int(BigInt::from(7));
        let (_, correct) = grade_response("The answer is \\boxed{7}.", &canonical);
        assert!(correct);
        let (_, correct) = grade_response("first 3 then 5 finally 7", &canonical);
        assert!(correct);
        let (parsed, correct) = grade_response("no numbers here", &canonical);
        assert_eq!(parsed, None);
        assert!(!correct);
    }

    #[test]
    fn set_grading_is_order_insensitive_and_tolerant() {
        let canonical = set(&[(-4146, 1000), (4146, 1000)]);
        let (_, correct) = grade_response("#### {4.146, -4.146} N·s", &canonical);
        assert!(correct);
        // Unicode minus from a chat model.
        let (_, correct) = grade_response("#### {\u{2212}4.146, +4.146}", &canonical);
        assert!(correct);
        // The reported failure shape: one element right, one wrong.
        let (parsed, correct) = grade_response("#### {\u{2212}4.146, 2.073} N·s", &canonical);
        assert_eq!(parsed, Some(set(&[(-4146, 1000), (2073, 1000)])));
        assert!(!correct);
    }

    #[test]
    fn tolerance_is_absolute_or_relative() {
        let canonical = AnswerValue::Rat(rat(4146, 1000));
        assert!(grade_response("#### 4.1460", &canonical).1);
        assert!(grade_response("#### 4.1464", &canonical).1); // within 5e-4
        assert!(!grade_response("#### 4.147", &canonical).1); // 1e-3 off
        let big = AnswerValue::Rat(rat(1_000_000_000, 1));
        assert!(grade_response("#### 1000000999", &big).1); // within 1e-6 relative
        assert!(!grade_response("#### 1000002000", &big).1);
    }

    #[test]
    fn fractions_and_negatives_parse() {
        let (parsed, correct) = grade_response("#### -3/2", &AnswerValue::Rat(rat(-3, 2)));
        assert_eq!(parsed, Some(AnswerValue::Rat(rat(-3, 2))));
        assert!(correct);
        let (parsed, _) = grade_response("#### -17", &AnswerValue::Int(BigInt::from(-17)));
        assert_eq!(parsed, Some(AnswerValue::Int(BigInt::from(-17))));
        // "x-3" must not read as -3.
        let (parsed, _) = grade_response("id x-3 ends, value 5", &AnswerValue::Int(BigInt::from(5)));
        assert_eq!(parsed, Some(AnswerValue::Int(BigInt::from(5))));
    }

    #[test]
    fn scripted_oracle_answers_its_prompts_and_counts_tokens() {
        let answer = AnswerValue::Int(BigInt::from(28));
        let prompt = "How many? Give only the final answer after '####'.";
        let client = ScriptedClient::canonical_oracle([(prompt, &answer)]);
        let resp = client.complete(prompt, &CompletionOptions::default()).unwrap();
        assert_eq!(resp.text, "#### 28");
        assert_eq!(resp.tokens_in, (prompt.chars().count() as u64).div_ceil(4));
        assert_eq!(resp.tokens_out, 2); // "#### 28" = 7 chars
        assert_eq!(resp.latency_ms, 1);
        let err = client
            .complete("unseen prompt", &CompletionOptions::default())
            .unwrap_err();
        assert!(matches!(err, ModelError::Transport(_)));
    }

    #[test]
    fn scripted_fixture_modes_parse() {
        let constant =
            ScriptedClient::from_fixture_str(r#####"{"mode":"constant","response":"#### 0"}"#####)
                .unwrap();
        let resp = constant.complete("anything", &CompletionOptions::default()).unwrap();
        assert_eq!(resp.text, "#### 0");

        let key = prompt_key("the prompt");
        let fixture = format!(
            r#####"{{"mode":"map","responses":{{"{key}":{{"text":"#### 42","tokens_in":11,"tokens_out":3,"latency_ms":250}}}}}}"#####
        );
        let mapped = ScriptedClient::from_fixture_str(&fixture).unwrap();
        let resp = mapped.complete("the prompt", &CompletionOptions::default()).unwrap();
        assert_eq!(
            (resp.tokens_in, resp.tokens_out, resp.latency_ms),
            (11, 3, 250)
        );

        assert!(ScriptedClient::from_fixture_str(r#"{"mode":"psychic"}"#).is_err());
    }

    fn sample_instances(n: usize) -> Vec<InstanceRecord> {
        use crate::metrics::StructuralDescriptor;
        (0..n)
            .map(|k| InstanceRecord {
                family_id: "fam".into(),
                param_values: BTreeMap::from([("n".to_string(), k as i64)]),
                prompt: format!("What is {k}? Give only the final answer after '####'."),
                canonical_answer: AnswerValue::Int(BigInt::from(k as i64)),
                descriptor: StructuralDescriptor {
                    c: 1,
                    d: 0,
                    kappa: 0,
                    ell: 1,
                    expr_size: 3,
                    state_space_log2: BigRational::zero(),
                },
                instance_hash: format!("{k:016x}"),
            })
            .collect()
    }

    #[test]
    fn evaluation_runs_every_pair_once_and_resumes() {
        let tmp = tempfile::tempdir().unwrap();
        let instances = sample_instances(3);
        let oracle: Vec<(&str, &AnswerValue)> = instances
            .iter()
            .map(|i| (i.prompt.as_str(), &i.canonical_answer))
            .collect();
        let client = Arc::new(ScriptedClient::canonical_oracle(oracle));
        let mut cfg = EvalConfig::new("scripted");
        cfg.repetitions = 4;
        cfg.parallelism = 2;

        let mut run = open_run(tmp.path(), "r1", 9, "cfg").unwrap();
        let records =
            run_evaluation(&instances[..2], Arc::clone(&client) as _, &cfg, &mut run).unwrap();
        assert_eq!(records.len(), 8);
        assert!(records.iter().all(|r| r.correct));

        // Resume with the full instance list: only the third instance's
        // pairs are new; the stored multiset has one record per pair.
        let records = run_evaluation(&instances, client as _, &cfg, &mut run).unwrap();
        assert_eq!(records.len(), 12);
        let stored: Vec<EvaluationRecord> = run.load(STREAM_RECORDS).unwrap();
        assert_eq!(stored.len(), 12);
        let mut keys: Vec<(String, u32)> = stored
            .iter()
            .map(|r| (r.instance_hash.clone(), r.repetition_index))
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 12);
    }

    #[test]
    fn constant_zero_scores_only_zero_answers() {
        let tmp = tempfile::tempdir().unwrap();
        let instances = sample_instances(4); // answers 0,1,2,3
        let client = Arc::new(ScriptedClient::constant("#### 0"));
        let mut cfg = EvalConfig::new("zeros");
        cfg.repetitions = 10;
        let mut run = open_run(tmp.path(), "r1", 9, "cfg").unwrap();
        let records = run_evaluation(&instances, client as _, &cfg, &mut run).unwrap();
        assert_eq!(records.len(), 40);
        let correct = records.iter().filter(|r| r.correct).count();
        assert_eq!(correct, 10); // exactly the instance whose answer is 0
    }

    struct FlakyClient {
        failures: std::sync::Mutex<u32>,
    }

    impl ModelClient for FlakyClient {
        fn complete(
            &self,
            _prompt: &str,
            _options: &CompletionOptions,
        ) -> Result<ModelResponse, ModelError> {
            let mut left = self.failures.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err(ModelError::Transport("connection reset".into()));
            }
            Ok(ModelResponse {
                text: "#### 0".into(),
                tokens_in: 1,
                tokens_out: 1,
                latency_ms: 1,
            })
        }
    }

    #[test]
    fn transport_errors_retry_then_record_failure_without_aborting() {
        let tmp = tempfile::tempdir().unwrap();
        let instances = sample_instances(2); // answers 0 and 1
        // 5 failures: pair one burns its 4 attempts (recorded as failed),
        // pair two fails once then succeeds on retry.
        let client = Arc::new(FlakyClient {
            failures: std::sync::Mutex::new(5),
        });
        let mut cfg = EvalConfig::new("flaky");
        cfg.repetitions = 1;
        cfg.parallelism = 1;
        let mut run = open_run(tmp.path(), "r1", 9, "cfg").unwrap();
        let records = run_evaluation(&instances, client as _, &cfg, &mut run).unwrap();
        assert_eq!(records.len(), 2);
        assert!(!records[0].correct);
        assert!(records[0].raw_response.contains("no response"));
        assert!(records[0].parsed_answer.is_none());
        // The second pair recovered on retry: transport succeeded, answer
        // graded on its merits ("#### 0" vs canonical 1 → wrong).
        assert_eq!(records[1].raw_response, "#### 0");
        assert!(!records[1].correct);
    }
}
