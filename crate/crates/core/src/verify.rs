//! Admission gate for candidate probe families.
//!
//! Three checks run cheapest-first and short-circuit on failure: a static
//! pass (parse, type, validate), a dynamic pass (solve a sample of random
//! instantiations and demand well-posedness plus solver agreement), and an
//! optional semantic pass (an auxiliary model audits that the formal program
//! says what the prose says). A family is admitted only when all three hold,
//! with the semantic check skippable by configuration.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dsl::{parse_family, print_family};
use crate::evaluate::answers_match;
use crate::harness::{CompletionOptions, ModelClient, ModelError};
use crate::ir::{
    ground_instance, normalize, AnswerValue, ProbeFamily, VerificationReport,
    DEFAULT_GROUNDING_CAP,
};
use crate::par::par_map;
use crate::rng::SplitMix64;
use crate::solver::{check_well_posed, solve_canonical, SolverConfig};
use crate::store::{RunHandle, STREAM_ADMISSIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticResult {
    pub status: GateStatus,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub diagnostics: Vec<String>,
}

/// One sampled instantiation inside the dynamic check: either a solver
/// verdict or the error that prevented one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub param_values: BTreeMap<String, i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<VerificationReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl SampleReport {
    fn ok(&self) -> bool {
        self.report.as_ref().map(|r| r.is_admissible()).unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicResult {
    pub status: GateStatus,
    pub sample_size: u32,
    pub reports: Vec<SampleReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticResult {
    pub status: GateStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verdict: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub family_id: String,
    #[serde(rename = "static")]
    pub static_check: StaticResult,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dynamic: Option<DynamicResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub semantic: Option<SemanticResult>,
    pub admitted: bool,
    pub timestamp: String,
}

#[derive(Clone)]
pub struct VerifyConfig {
    pub n_samples: u32,
    pub seed: u64,
    /// When no judge is configured (or it is unreachable), treat the
    /// semantic check as skipped rather than failed.
    pub allow_skip: bool,
    pub solver: SolverConfig,
    pub judge: Option<Arc<dyn ModelClient>>,
    /// Known-good (parameter assignment, answer) pair; when present the
    /// dynamic check also solves exactly these parameters and compares.
    pub ground_truth: Option<(BTreeMap<String, i64>, AnswerValue)>,
}

impl VerifyConfig {
    pub fn offline(seed: u64) -> VerifyConfig {
        VerifyConfig {
            n_samples: 10,
            seed,
            allow_skip: true,
            solver: SolverConfig::builtin(),
            judge: None,
            ground_truth: None,
        }
    }
}

/// Parse + validate + normalize. Pass yields the normalized family.
pub fn static_check(text: &str) -> (StaticResult, Option<ProbeFamily>) {
    match parse_family(text) {
        Ok(f) => (
            StaticResult {
                status: GateStatus::Pass,
                diagnostics: Vec::new(),
            },
            Some(normalize(&f)),
        ),
        Err(diags) => (
            StaticResult {
                status: GateStatus::Fail,
                diagnostics: diags.iter().map(|d| d.to_string()).collect(),
            },
            None,
        ),
    }
}

/// The parameter assignments dynamic_check will draw for a given seed —
/// uniform per-parameter over the declared sampling ranges.
pub fn sample_params(f: &ProbeFamily, n: u32, seed: u64) -> Vec<BTreeMap<String, i64>> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            f.params
                .iter()
                .map(|p| (p.name.clone(), rng.next_in_range(p.lo, p.hi)))
                .collect()
        })
        .collect()
}

/// Solve a random sample of instantiations; pass iff every sample grounds,
/// is well-posed, and survives cross-validation — and, when a ground-truth
/// pair is configured, the solver reproduces it.
pub fn dynamic_check(f: &ProbeFamily, cfg: &VerifyConfig) -> DynamicResult {
    let samples = sample_params(f, cfg.n_samples, cfg.seed);
    let family = f.clone();
    let solver = cfg.solver.clone();
    let reports: Vec<SampleReport> = par_map(samples, move |params| {
        let outcome = ground_instance(&family, &params, DEFAULT_GROUNDING_CAP)
            .map_err(|e| e.to_string())
            .and_then(|inst| check_well_posed(&inst, &solver).map_err(|e| e.to_string()));
        match outcome {
            Ok(report) => SampleReport {
                param_values: params,
                report: Some(report),
                error: None,
            },
            Err(error) => SampleReport {
                param_values: params,
                report: None,
                error: Some(error),
            },
        }
    });

    let mut detail = reports.iter().find(|r| !r.ok()).map(|r| {
        let what = r
            .error
            .clone()
            .or_else(|| r.report.as_ref().map(|rep| rep.details.clone()))
            .unwrap_or_default();
        format!("sample {:?} failed: {what}", r.param_values)
    });

    if detail.is_none() {
        if let Some((params, expected)) = &cfg.ground_truth {
            detail = match ground_instance(f, params, DEFAULT_GROUNDING_CAP) {
                Ok(inst) => match solve_canonical(&inst, &cfg.solver) {
                    Ok((got, _)) if answers_match(expected, &got) => None,
                    Ok((got, _)) => Some(format!(
                        "ground truth mismatch at {params:?}: expected {expected:?}, solver found {got:?}"
                    )),
                    Err(e) => Some(format!("ground truth solve failed at {params:?}: {e}")),
                },
                Err(e) => Some(format!("ground truth grounding failed at {params:?}: {e}")),
            };
        }
    }

    DynamicResult {
        status: if detail.is_none() {
            GateStatus::Pass
        } else {
            GateStatus::Fail
        },
        sample_size: cfg.n_samples,
        reports,
        detail,
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Verdict {
    aligned: bool,
    #[serde(default)]
    issues: Vec<String>,
}

fn audit_prompt(f: &ProbeFamily) -> String {
    let mut bindings = String::new();
    for (name, phrase) in &f.bindings {
        bindings.push_str(&format!("  {name}: {phrase}\n"));
    }
    format!(
        "You are auditing whether a formal constraint program faithfully \
         captures the natural-language problem it models.\n\n\
         Natural-language template:\n{template}\n\n\
         Binding map (formal name: phrase):\n{bindings}\n\
         Formal program:\n{program}\n\
         Judge whether every quantity, constraint, and the requested answer \
         in the template are captured by the program, and nothing extra was \
         invented. Reply with exactly one JSON object of the form \
         {{\"aligned\": true|false, \"issues\": [\"...\"]}} and no other text.",
        template = f.template,
        bindings = bindings,
        program = print_family(f),
    )
}

const JUDGE_RETRIES: u32 = 2;

/// Ask the audit judge whether program and prose align. Unreachable judge ⇒
/// skipped (when allowed); malformed verdicts are retried twice then fail.
pub fn semantic_check(f: &ProbeFamily, cfg: &VerifyConfig) -> SemanticResult {
    let judge = match &cfg.judge {
        Some(judge) => judge,
        None => {
            return if cfg.allow_skip {
                SemanticResult {
                    status: GateStatus::Skipped,
                    verdict: Some("no judge configured".into()),
                }
            } else {
                SemanticResult {
                    status: GateStatus::Fail,
                    verdict: Some("no judge configured and skipping disallowed".into()),
                }
            }
        }
    };
    let prompt = audit_prompt(f);
    let options = CompletionOptions {
        temperature: 0.0,
        max_output_tokens: 512,
    };
    let mut last_error = String::new();
    for _attempt in 0..=JUDGE_RETRIES {
        let resp = match judge.complete(&prompt, &options) {
            Ok(resp) => resp,
            Err(ModelError::Transport(e)) => {
                return if cfg.allow_skip {
                    SemanticResult {
                        status: GateStatus::Skipped,
                        verdict: Some(format!("judge unavailable: {e}")),
                    }
                } else {
                    SemanticResult {
                        status: GateStatus::Fail,
                        verdict: Some(format!("judge unavailable: {e}")),
                    }
                };
            }
            Err(ModelError::Malformed(e)) => {
                last_error = e;
                continue;
            }
        };
        match serde_json::from_str::<Verdict>(resp.text.trim()) {
            Ok(v) if v.aligned => {
                return SemanticResult {
                    status: GateStatus::Pass,
                    verdict: Some("aligned".into()),
                }
            }
            Ok(v) => {
                return SemanticResult {
                    status: GateStatus::Fail,
                    verdict: Some(format!("not aligned: {}", v.issues.join("; "))),
                }
            }
            Err(e) => {
                last_error = format!("{e}: {:?}", resp.text);
            }
        }
    }
    SemanticResult {
        status: GateStatus::Fail,
        verdict: Some(format!("malformed judge verdict after retries: {last_error}")),
    }
}

/// Best-effort family id for records about programs that fail to parse.
fn scan_family_id(text: &str) -> Option<String> {
    let nodes = crate::sexpr::read_all(text).ok()?;
    for node in nodes {
        if let crate::sexpr::SNode::List { items, .. } = node {
            if items.first().and_then(|n| n.atom()) == Some("probe") {
                return items.get(1).and_then(|n| n.atom()).map(|s| s.to_string());
            }
        }
    }
    None
}

/// Run the full admission gate over a candidate program text, short-circuit
/// on the first failing check, and append the record to the run store when
/// one is given. The family is returned only when admitted.
pub fn admit_probe(
    text: &str,
    cfg: &VerifyConfig,
    run: Option<&mut RunHandle>,
) -> (AdmissionRecord, Option<ProbeFamily>) {
    let (static_result, family) = static_check(text);
    let timestamp = chrono::Utc::now().to_rfc3339();
    let mut record = AdmissionRecord {
        family_id: family
            .as_ref()
            .map(|f| f.id.clone())
            .or_else(|| scan_family_id(text))
            .unwrap_or_else(|| "unknown".into()),
        static_check: static_result,
        dynamic: None,
        semantic: None,
        admitted: false,
        timestamp,
    };

    let admitted_family = (|| {
        let f = family?;
        let dynamic = dynamic_check(&f, cfg);
        let dynamic_ok = dynamic.status == GateStatus::Pass;
        record.dynamic = Some(dynamic);
        if !dynamic_ok {
            return None;
        }
        let semantic = semantic_check(&f, cfg);
        let semantic_ok = matches!(semantic.status, GateStatus::Pass | GateStatus::Skipped);
        record.semantic = Some(semantic);
        if !semantic_ok {
            return None;
        }
        record.admitted = true;
        Some(f)
    })();

    if let Some(run) = run {
        if let Err(e) = run.append(STREAM_ADMISSIONS, &record) {
            log::warn!("could not append admission record: {e}");
        }
    }
    (record, admitted_family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ModelResponse;
    use crate::solver::ScriptSolver;
    use num_bigint::BigInt;
    use std::sync::atomic::{AtomicU64, Ordering};

    const GOOD: &str = r#"
(probe mod_pick
  (params (n int (2 5)))
  (vars (x int (1 20)))
  (constraints (= (mod x n) 0))
  (objective minimize x)
  (answer x)
  (template "Smallest multiple of {n} in 1..20?"))
"#;

    const AMBIGUOUS: &str = r#"
(probe two_roots
  (params (p int (4 4)))
  (vars (x int (-9 9)))
  (constraints (= (* x x) p))
  (answer x)
  (template "x with x*x = {p}?"))
"#;

    #[test]
    fn static_gate_accepts_and_rejects() {
        let (res, family) = static_check(GOOD);
        assert_eq!(res.status, GateStatus::Pass);
        assert!(family.is_some());

        let (res, family) = static_check("(probe broken (answer z) (template \"?\"))");
        assert_eq!(res.status, GateStatus::Fail);
        assert!(family.is_none());
        assert!(!res.diagnostics.is_empty());

        let (res, _) = static_check("not even a form");
        assert_eq!(res.status, GateStatus::Fail);
    }

    #[test]
    fn dynamic_gate_passes_well_posed_and_fails_ambiguous() {
        let cfg = VerifyConfig::offline(7);
        let (_, f) = static_check(GOOD);
        let result = dynamic_check(&f.unwrap(), &cfg);
        assert_eq!(result.status, GateStatus::Pass);
        assert_eq!(result.reports.len(), 10);
        assert!(result.reports.iter().all(|r| r.ok()));

        let (_, f) = static_check(AMBIGUOUS);
        let result = dynamic_check(&f.unwrap(), &cfg);
        assert_eq!(result.status, GateStatus::Fail);
        assert!(result.detail.as_deref().unwrap().contains("uniqueness"));
    }

    #[test]
    fn dynamic_gate_flags_empty_domains() {
        let text = r#"
(probe shrink
  (params (p int (5 8)))
  (vars (x int (p 3)))
  (constraints (>= x p))
  (answer x)
  (template "{p}?"))
"#;
        let (res, f) = static_check(text);
        assert_eq!(res.status, GateStatus::Pass);
        let cfg = VerifyConfig::offline(7);
        let result = dynamic_check(&f.unwrap(), &cfg);
        assert_eq!(result.status, GateStatus::Fail);
        assert!(result.detail.as_deref().unwrap().contains("empty"));
    }

    #[test]
    fn dynamic_gate_checks_ground_truth_when_supplied() {
        let (_, f) = static_check(GOOD);
        let f = f.unwrap();
        let mut cfg = VerifyConfig::offline(7);
        cfg.ground_truth = Some((
            BTreeMap::from([("n".to_string(), 5i64)]),
            AnswerValue::Int(BigInt::from(5)),
        ));
        assert_eq!(dynamic_check(&f, &cfg).status, GateStatus::Pass);

        cfg.ground_truth = Some((
            BTreeMap::from([("n".to_string(), 5i64)]),
            AnswerValue::Int(BigInt::from(6)),
        ));
        let result = dynamic_check(&f, &cfg);
        assert_eq!(result.status, GateStatus::Fail);
        assert!(result.detail.as_deref().unwrap().contains("ground truth mismatch"));
    }

    #[test]
    fn equal_seeds_sample_equal_parameter_sets() {
        let (_, f) = static_check(GOOD);
        let f = f.unwrap();
        assert_eq!(sample_params(&f, 10, 42), sample_params(&f, 10, 42));
        assert_ne!(sample_params(&f, 10, 42), sample_params(&f, 10, 43));
    }

    struct StubJudge {
        replies: Vec<String>,
        calls: AtomicU64,
    }

    impl StubJudge {
        fn saying(text: &str) -> StubJudge {
            StubJudge {
                replies: vec![text.to_string()],
                calls: AtomicU64::new(0),
            }
        }
    }

    impl ModelClient for StubJudge {
        fn complete(
            &self,
            _prompt: &str,
            _options: &CompletionOptions,
        ) -> Result<ModelResponse, ModelError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst) as usize;
            let text = self.replies[n.min(self.replies.len() - 1)].clone();
            Ok(ModelResponse {
                text,
                tokens_in: 1,
                tokens_out: 1,
                latency_ms: 1,
            })
        }
    }

    #[test]
    fn semantic_gate_pass_fail_malformed_and_skip() {
        let (_, f) = static_check(GOOD);
        let f = f.unwrap();
        let mut cfg = VerifyConfig::offline(7);

        cfg.judge = Some(Arc::new(StubJudge::saying(
            r#"{"aligned": true, "issues": []}"#,
        )));
        assert_eq!(semantic_check(&f, &cfg).status, GateStatus::Pass);

        cfg.judge = Some(Arc::new(StubJudge::saying(
            r#"{"aligned": false, "issues": ["template asks for y"]}"#,
        )));
        let res = semantic_check(&f, &cfg);
        assert_eq!(res.status, GateStatus::Fail);
        assert!(res.verdict.as_deref().unwrap().contains("template asks for y"));

        let malformed = Arc::new(StubJudge::saying("I think it's fine!"));
        cfg.judge = Some(malformed.clone());
        let res = semantic_check(&f, &cfg);
        assert_eq!(res.status, GateStatus::Fail);
        assert!(res.verdict.as_deref().unwrap().contains("malformed"));
        assert_eq!(malformed.calls.load(Ordering::SeqCst), 3); // 1 + 2 retries

        cfg.judge = None;
        cfg.allow_skip = true;
        assert_eq!(semantic_check(&f, &cfg).status, GateStatus::Skipped);
        cfg.allow_skip = false;
        assert_eq!(semantic_check(&f, &cfg).status, GateStatus::Fail);
    }

    struct CountingSolver {
        inner: Arc<dyn ScriptSolver>,
        calls: Arc<AtomicU64>,
    }

    impl ScriptSolver for CountingSolver {
        fn run(&self, script: &str, timeout_ms: u64) -> Result<String, crate::solver::SolverError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.run(script, timeout_ms)
        }
        fn id(&self) -> String {
            self.inner.id()
        }
    }

    #[test]
    fn admission_short_circuits_and_records() {
        let tmp = tempfile::tempdir().unwrap();
        let mut run = crate::store::open_run(tmp.path(), "r1", 7, "cfg").unwrap();

        let solver_calls = Arc::new(AtomicU64::new(0));
        let mut cfg = VerifyConfig::offline(7);
        cfg.solver.primary = Arc::new(CountingSolver {
            inner: SolverConfig::builtin().primary,
            calls: Arc::clone(&solver_calls),
        });
        let judge = Arc::new(StubJudge::saying(r#"{"aligned": true, "issues": []}"#));
        cfg.judge = Some(judge.clone());

        // Static failure: no solver run, no judge call.
        let (record, family) = admit_probe("(probe broken (answer z))", &cfg, Some(&mut run));
        assert!(!record.admitted);
        assert_eq!(record.family_id, "broken");
        assert!(record.dynamic.is_none() && record.semantic.is_none());
        assert_eq!(solver_calls.load(Ordering::SeqCst), 0);
        assert_eq!(judge.calls.load(Ordering::SeqCst), 0);
        assert!(family.is_none());

        // Dynamic failure: solver ran, judge still not consulted.
        let (record, family) = admit_probe(AMBIGUOUS, &cfg, Some(&mut run));
        assert!(!record.admitted);
        assert!(record.dynamic.is_some() && record.semantic.is_none());
        assert!(solver_calls.load(Ordering::SeqCst) > 0);
        assert_eq!(judge.calls.load(Ordering::SeqCst), 0);
        assert!(family.is_none());

        // Full pass.
        let (record, family) = admit_probe(GOOD, &cfg, Some(&mut run));
        assert!(record.admitted);
        assert_eq!(judge.calls.load(Ordering::SeqCst), 1);
        assert!(family.is_some());
        assert_eq!(
            record.dynamic.as_ref().unwrap().status,
            GateStatus::Pass
        );

        let stored: Vec<AdmissionRecord> = run.load(STREAM_ADMISSIONS).unwrap();
        assert_eq!(stored.len(), 3);
        assert_eq!(
            stored.iter().filter(|r| r.admitted).count(),
            1
        );
    }

    #[test]
    fn admission_record_serializes_with_snake_case_statuses() {
        let record = AdmissionRecord {
            family_id: "fam".into(),
            static_check: StaticResult {
                status: GateStatus::Pass,
                diagnostics: Vec::new(),
            },
            dynamic: Some(DynamicResult {
                status: GateStatus::Fail,
                sample_size: 10,
                reports: Vec::new(),
                detail: Some("sample failed".into()),
            }),
            semantic: Some(SemanticResult {
                status: GateStatus::Skipped,
                verdict: None,
            }),
            admitted: false,
            timestamp: "2026-01-01T00:00:00Z".into(),
        };
        let json = serde_json::to_string(&record).unwrap();
        assert!(json.contains("\"static\":{\"status\":\"pass\"}"));
        assert!(json.contains("\"status\":\"fail\""));
        assert!(json.contains("\"status\":\"skipped\""));
        let back: AdmissionRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, record);
    }
}
