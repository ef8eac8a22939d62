//! Model-driven translation of word problems into probe programs.
//!
//! A formalization job asks a model to emit a candidate program for a
//! natural-language problem, pushes every candidate through the full
//! admission pipeline, and feeds rejection diagnostics back into the next
//! prompt. The loop stops at the first admitted candidate or after
//! `max_attempts`; exhaustion is a recorded outcome, not a panic. Prompts
//! grow monotonically — attempt k+1 always contains attempt k's
//! diagnostics — so a transcript of the job reads as a repair dialogue.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::parse_family;
use crate::harness::{CompletionOptions, ModelClient, ModelError};
use crate::ir::{scan_template, ProbeFamily, TemplatePiece};
use crate::store::config_hash;
use crate::verify::{admit_probe, AdmissionRecord, GateStatus, VerifyConfig};

/// Concrete-syntax reference included in every formalization prompt.
const GRAMMAR_GUIDE: &str = r#"A probe program is one s-expression:

  (probe <id>
    (params (<name> int (<lo> <hi>)) ...)   ; integer inputs, inclusive bounds
    (vars (<name> int|rat|bool (<lo> <hi>)) ...) ; search variables
    (defs (<name> <expr>) ...)              ; derived quantities, in order
    (constraints <expr> ...)                ; boolean constraints
    (objective minimize <expr>)             ; or maximize, or (objective count (<var> ...))
    (answer <expr>)                         ; required; may be (set <expr> ...)
    (template "<text with {placeholder} slots>")  ; required
    (bindings (<name> "<phrase [unit]>") ...))

Expressions are integers, rationals written p/q, true/false, declared
identifiers, operator applications (op <args>...) over
+ - * div mod abs min max = != < <= > >= and or not ite,
bounded quantifiers (forall (<i> <lo> <hi>) <body>) and
(exists ((<i> <lo> <hi>) ...) <body>). Identifiers are snake_case."#;

#[derive(Debug, Error)]
pub enum FormalizeError {
    #[error("model unavailable: {0}")]
    ModelUnavailable(String),
    #[error("failed writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum BindingsError {
    #[error("program does not parse: {}", .0.join("; "))]
    Unparseable(Vec<String>),
    #[error("template placeholders without bindings: {}", .0.join(", "))]
    Incomplete(Vec<String>),
}

/// One round of the repair loop, exactly as logged.
#[derive(Debug, Clone, Serialize)]
pub struct Attempt {
    pub prompt: String,
    /// Fenced program text, when the response contained one.
    pub dsl_text: Option<String>,
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admission: Option<AdmissionRecord>,
    pub admitted: bool,
}

#[derive(Debug)]
pub struct FormalizationJob {
    /// Content hash of the problem text; names the job's log file.
    pub job_id: String,
    pub nl_problem: String,
    pub attempts: Vec<Attempt>,
    pub max_attempts: usize,
    /// The admitted family, when some attempt passed the full pipeline.
    pub family: Option<ProbeFamily>,
    /// Why the job ended without a family.
    pub failure: Option<String>,
}

pub struct FormalizeConfig {
    pub max_attempts: usize,
    pub verify: VerifyConfig,
    pub options: CompletionOptions,
    /// When set, the job transcript is written to `<log_dir>/<job-id>.jsonl`.
    pub log_dir: Option<PathBuf>,
}

impl FormalizeConfig {
    pub fn offline(seed: u64) -> FormalizeConfig {
        FormalizeConfig {
            max_attempts: 3,
            verify: VerifyConfig::offline(seed),
            options: CompletionOptions::default(),
            log_dir: None,
        }
    }
}

/// Lifts the bindings section into a name→phrase map and requires every
/// template placeholder to be covered by it.
pub fn extract_bindings(dsl_text: &str) -> Result<BTreeMap<String, String>, BindingsError> {
    let family = parse_family(dsl_text)
        .map_err(|diags| BindingsError::Unparseable(diags.iter().map(|d| d.to_string()).collect()))?;
    let map: BTreeMap<String, String> = family.bindings.iter().cloned().collect();
    let mut missing: Vec<String> = scan_template(&family.template)
        .into_iter()
        .filter_map(|piece| match piece {
            Ok(TemplatePiece::Placeholder(name)) if !map.contains_key(&name) => Some(name),
            _ => None,
        })
        .collect();
    missing.sort();
    missing.dedup();
    if missing.is_empty() {
        Ok(map)
    } else {
        Err(BindingsError::Incomplete(missing))
    }
}

/// First fenced code block in a model response, language tag tolerated.
fn extract_fenced(response: &str) -> Option<String> {
    let open = response.find("```")?;
    let after_tag = response[open + 3..].find('\n')? + open + 4;
    let close = response[after_tag..].find("```")? + after_tag;
    let block = response[after_tag..close].trim();
    if block.is_empty() {
        None
    } else {
        Some(block.to_owned())
    }
}

fn admission_diagnostics(record: &AdmissionRecord) -> Vec<String> {
    let mut out = Vec::new();
    out.extend(record.static_check.diagnostics.iter().cloned());
    if let Some(dynamic) = &record.dynamic {
        if dynamic.status == GateStatus::Fail {
            match &dynamic.detail {
                Some(detail) => out.push(detail.clone()),
                None => out.push("dynamic verification failed".to_owned()),
            }
        }
    }
    if let Some(semantic) = &record.semantic {
        if semantic.status == GateStatus::Fail {
            match &semantic.verdict {
                Some(verdict) => out.push(format!("semantic audit: {verdict}")),
                None => out.push("semantic audit failed".to_owned()),
            }
        }
    }
    if out.is_empty() {
        out.push("candidate rejected".to_owned());
    }
    out
}

fn base_prompt(nl: &str) -> String {
    format!(
        "Translate the problem below into one probe program.\n\n\
         {GRAMMAR_GUIDE}\n\n\
         Problem:\n{nl}\n\n\
         Reply with exactly one fenced code block containing a single \
         (probe ...) program. Give every template placeholder a natural-language \
         phrase in the (bindings ...) section."
    )
}

fn repair_suffix(diagnostics: &[String]) -> String {
    let mut out = String::from("\n\nYour previous program was rejected:\n");
    for d in diagnostics {
        out.push_str("- ");
        out.push_str(d);
        out.push('\n');
    }
    out.push_str("Revise it and reply again with exactly one fenced code block.");
    out
}

fn write_log(cfg: &FormalizeConfig, job: &FormalizationJob) -> Result<(), FormalizeError> {
    let Some(dir) = &cfg.log_dir else { return Ok(()) };
    let io_err = |path: PathBuf| move |source| FormalizeError::Io { path, source };
    fs::create_dir_all(dir).map_err(io_err(dir.clone()))?;
    let path = dir.join(format!("{}.jsonl", job.job_id));
    let mut out = Vec::new();
    for attempt in &job.attempts {
        let line = serde_json::to_string(attempt).expect("attempts serialize infallibly");
        writeln!(out, "{line}").expect("writing to a Vec cannot fail");
    }
    fs::write(&path, out).map_err(io_err(path.clone()))
}

/// Runs the generate → admit → repair loop for one problem. Transport
/// failures abort the job (`ModelUnavailable`); unusable or rejected
/// candidates consume an attempt and extend the next prompt with their
/// diagnostics. A candidate whose template placeholders lack bindings is
/// rejected before any solver work.
pub fn formalize(
    nl: &str,
    model: &dyn ModelClient,
    cfg: &FormalizeConfig,
) -> Result<FormalizationJob, FormalizeError> {
    let options = CompletionOptions {
        temperature: 0.0,
        ..cfg.options.clone()
    };
    let mut job = FormalizationJob {
        job_id: config_hash(nl),
        nl_problem: nl.to_owned(),
        attempts: Vec::new(),
        max_attempts: cfg.max_attempts,
        family: None,
        failure: None,
    };
    let mut prompt = base_prompt(nl);

    for _ in 0..cfg.max_attempts {
        let response = match model.complete(&prompt, &options) {
            Ok(r) => r,
            Err(ModelError::Transport(msg)) => return Err(FormalizeError::ModelUnavailable(msg)),
            Err(ModelError::Malformed(msg)) => {
                let diagnostics = vec![format!("model response unusable: {msg}")];
                prompt.push_str(&repair_suffix(&diagnostics));
                job.attempts.push(Attempt {
                    prompt: prompt.clone(),
                    dsl_text: None,
                    diagnostics,
                    admission: None,
                    admitted: false,
                });
                continue;
            }
        };

        let attempt_prompt = prompt.clone();
        let Some(dsl_text) = extract_fenced(&response.text) else {
            let diagnostics = vec!["response contains no fenced code block".to_owned()];
            prompt.push_str(&repair_suffix(&diagnostics));
            job.attempts.push(Attempt {
                prompt: attempt_prompt,
                dsl_text: None,
                diagnostics,
                admission: None,
                admitted: false,
            });
            continue;
        };

        // Placeholder coverage is a formalization requirement over and above
        // family validity; an uncovered placeholder fails fast, before the
        // solver sees the candidate.
        if let Err(BindingsError::Incomplete(missing)) = extract_bindings(&dsl_text) {
            let diagnostics = vec![format!(
                "template placeholders without bindings: {}",
                missing.join(", ")
            )];
            prompt.push_str(&repair_suffix(&diagnostics));
            job.attempts.push(Attempt {
                prompt: attempt_prompt,
                dsl_text: Some(dsl_text),
                diagnostics,
                admission: None,
                admitted: false,
            });
            continue;
        }

        let (record, family) = admit_probe(&dsl_text, &cfg.verify, None);
        let admitted = record.admitted;
        let diagnostics = if admitted {
            Vec::new()
        } else {
            admission_diagnostics(&record)
        };
        if !admitted {
            prompt.push_str(&repair_suffix(&diagnostics));
        }
        job.attempts.push(Attempt {
            prompt: attempt_prompt,
            dsl_text: Some(dsl_text),
            diagnostics,
            admission: Some(record),
            admitted,
        });
        if admitted {
            job.family = family;
            write_log(cfg, &job)?;
            return Ok(job);
        }
    }

    job.failure = Some(format!(
        "no admissible candidate within {} attempts",
        cfg.max_attempts
    ));
    write_log(cfg, &job)?;
    Ok(job)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ModelResponse;
    use std::sync::Mutex;

    const GOOD: &str = r#"(probe mod_pick
  (params (n int (2 5)))
  (vars (x int (1 20)))
  (constraints (= (mod x n) 0))
  (objective minimize x)
  (answer x)
  (template "Smallest multiple of {n} in 1..20?")
  (bindings (n "modulus") (answer "smallest multiple")))"#;

    const UNBOUND_PLACEHOLDER: &str = r#"(probe mod_pick
  (params (n int (2 5)))
  (vars (x int (1 20)))
  (constraints (= (mod x n) 0))
  (objective minimize x)
  (answer x)
  (template "Smallest multiple of {n} in 1..20?"))"#;

    /// Replays a fixed response sequence and records the options used.
    struct SeqClient {
        responses: Mutex<Vec<Result<String, ModelError>>>,
        seen_temperature: Mutex<Vec<f64>>,
    }

    impl SeqClient {
        fn new(responses: Vec<Result<String, ModelError>>) -> SeqClient {
            SeqClient {
                responses: Mutex::new(responses),
                seen_temperature: Mutex::new(Vec::new()),
            }
        }
    }

    impl ModelClient for SeqClient {
        fn complete(
            &self,
            _prompt: &str,
            options: &CompletionOptions,
        ) -> Result<ModelResponse, ModelError> {
            self.seen_temperature.lock().unwrap().push(options.temperature);
            let mut responses = self.responses.lock().unwrap();
            assert!(!responses.is_empty(), "client called more often than scripted");
            responses.remove(0).map(|text| ModelResponse {
                text,
                tokens_in: 1,
                tokens_out: 1,
                latency_ms: 1,
            })
        }
    }

    fn fenced(body: &str) -> Result<String, ModelError> {
        Ok(format!("Here is the program:\n```\n{body}\n```\n"))
    }

    #[test]
    fn admissible_candidate_accepted_on_first_attempt() {
        let client = SeqClient::new(vec![fenced(GOOD)]);
        let job = formalize("stamps problem", &client, &FormalizeConfig::offline(7)).unwrap();
        assert_eq!(job.attempts.len(), 1);
        assert!(job.attempts[0].admitted);
        assert!(job.attempts[0].diagnostics.is_empty());
        assert_eq!(job.family.as_ref().map(|f| f.id.as_str()), Some("mod_pick"));
        assert!(job.failure.is_none());
    }

    #[test]
    fn repair_loop_recovers_and_prompts_grow_monotonically() {
        let client = SeqClient::new(vec![
            fenced("(probe broken (answer"),
            fenced(GOOD),
        ]);
        let job = formalize("stamps problem", &client, &FormalizeConfig::offline(7)).unwrap();
        assert_eq!(job.attempts.len(), 2);
        assert!(!job.attempts[0].admitted);
        assert!(!job.attempts[0].diagnostics.is_empty());
        assert!(job.attempts[1].admitted);
        for d in &job.attempts[0].diagnostics {
            assert!(job.attempts[1].prompt.contains(d));
        }
        assert!(job.attempts[1].prompt.starts_with(&job.attempts[0].prompt));
        assert!(job.family.is_some());
    }

    #[test]
    fn exhaustion_reports_failure_not_error() {
        let client = SeqClient::new(vec![
            Ok("no code at all".to_owned()),
            fenced("(nonsense"),
            fenced("(probe still_broken)"),
        ]);
        let job = formalize("stamps problem", &client, &FormalizeConfig::offline(7)).unwrap();
        assert_eq!(job.attempts.len(), 3);
        assert!(job.family.is_none());
        assert!(job.failure.as_deref().unwrap().contains("3 attempts"));
        assert_eq!(job.attempts[0].dsl_text, None);
    }

    #[test]
    fn transport_failure_aborts_the_job() {
        let client = SeqClient::new(vec![Err(ModelError::Transport("connection refused".into()))]);
        let err = formalize("stamps problem", &client, &FormalizeConfig::offline(7)).unwrap_err();
        assert!(matches!(err, FormalizeError::ModelUnavailable(msg) if msg.contains("refused")));
    }

    #[test]
    fn temperature_is_forced_to_zero() {
        let client = SeqClient::new(vec![fenced(GOOD)]);
        let mut cfg = FormalizeConfig::offline(7);
        cfg.options.temperature = 0.9;
        formalize("stamps problem", &client, &cfg).unwrap();
        assert_eq!(*client.seen_temperature.lock().unwrap(), vec![0.0]);
    }

    #[test]
    fn uncovered_placeholder_fails_before_admission() {
        let client = SeqClient::new(vec![fenced(UNBOUND_PLACEHOLDER), fenced(GOOD)]);
        let job = formalize("stamps problem", &client, &FormalizeConfig::offline(7)).unwrap();
        assert_eq!(job.attempts.len(), 2);
        assert!(job.attempts[0].admission.is_none());
        assert!(job.attempts[0].diagnostics[0].contains('n'));
        assert!(job.attempts[1].admitted);
    }

    #[test]
    fn bindings_extraction_covers_the_three_outcomes() {
        let map = extract_bindings(GOOD).unwrap();
        assert_eq!(map.get("n").map(String::as_str), Some("modulus"));

        let no_placeholders = r#"(probe fixed
  (vars (x int (1 5)))
  (constraints (> x 3))
  (objective minimize x)
  (answer x)
  (template "Smallest value above three?"))"#;
        assert!(extract_bindings(no_placeholders).unwrap().is_empty());

        match extract_bindings(UNBOUND_PLACEHOLDER) {
            Err(BindingsError::Incomplete(missing)) => assert_eq!(missing, vec!["n"]),
            other => panic!("expected Incomplete, got {other:?}"),
        }
        assert!(matches!(
            extract_bindings("(probe oops"),
            Err(BindingsError::Unparseable(_))
        ));
    }

    #[test]
    fn job_transcript_is_logged_per_attempt() {
        let dir = tempfile::tempdir().unwrap();
        let client = SeqClient::new(vec![Ok("plain text".to_owned()), fenced(GOOD)]);
        let mut cfg = FormalizeConfig::offline(7);
        cfg.log_dir = Some(dir.path().join("formalize"));
        let job = formalize("stamps problem", &client, &cfg).unwrap();
        let log = dir.path().join("formalize").join(format!("{}.jsonl", job.job_id));
        let body = std::fs::read_to_string(log).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines.len(), 2);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert!(first["prompt"].as_str().unwrap().contains("stamps problem"));
        assert_eq!(first["admitted"], false);
        let second: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(second["admitted"], true);
    }
}
