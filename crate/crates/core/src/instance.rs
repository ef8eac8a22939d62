//! Randomized instance sampling over admitted families.
//!
//! Parameter tuples are drawn from a single SplitMix64 stream (so instance
//! sets reproduce bit-exactly), duplicates are rejected, and each candidate
//! is grounded, solved, and checked for well-posedness. Candidates that fail
//! the check are discarded and resampled within a 10·n draw budget.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::evaluate::{decimal_3dp, eval, param_env, Value};
use crate::ir::{
    ground_instance, scan_template, ProbeFamily, ProbeInstance, TemplatePiece,
    DEFAULT_GROUNDING_CAP,
};
use crate::par::par_map;
use crate::rng::SplitMix64;
use crate::solver::{check_well_posed, solve_canonical, SolverConfig, SolverError};
use crate::store::{InstanceRecord, ProfileRecord, RunHandle, StoreError, STREAM_INSTANCES, STREAM_PROFILES};
use crate::verify::AdmissionRecord;

/// Fixed instruction appended to every rendered prompt so answer extraction
/// is well-defined.
pub const ANSWER_SUFFIX: &str =
    "Give only the final answer after '####'. For a set of values use braces.";

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("family `{0}` is not admitted; instances are only drawn from admitted families")]
    NotAdmitted(String),
    #[error(
        "instance shortfall: needed {needed}, found {got} admissible within \
         {draws} draws ({rejected} candidates rejected)"
    )]
    InstanceShortfall {
        needed: usize,
        got: usize,
        rejected: usize,
        draws: usize,
    },
    #[error("placeholder `{{{0}}}` has no renderable value")]
    MissingPlaceholderValue(String),
    #[error("template error: {0}")]
    Template(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn render_value(v: &Value) -> String {
    match v {
        Value::Int(n) => n.to_string(),
        Value::Rat(r) => decimal_3dp(r),
        Value::Bool(b) => b.to_string(),
        Value::Set(els) => {
            let parts: Vec<String> = els.iter().map(decimal_3dp).collect();
            format!("{{{}}}", parts.join(", "))
        }
    }
}

/// Substitute template placeholders with decimal renderings of the grounded
/// parameter values (and def values derived from them), then append the
/// fixed answer-format suffix.
pub fn render_prompt(
    f: &ProbeFamily,
    values: &BTreeMap<String, i64>,
) -> Result<String, InstanceError> {
    // Defs that depend only on parameters are renderable; defs that read
    // decision variables have no value at prompt time.
    let mut env = param_env(values);
    for def in &f.defs {
        if let Ok(v) = eval(&def.body, &env) {
            env.insert(def.name.clone(), v);
        }
    }
    let mut out = String::new();
    for piece in scan_template(&f.template) {
        match piece.map_err(InstanceError::Template)? {
            TemplatePiece::Literal(text) => out.push_str(&text),
            TemplatePiece::Placeholder(name) => {
                let value = env
                    .get(&name)
                    .ok_or_else(|| InstanceError::MissingPlaceholderValue(name.clone()))?;
                out.push_str(&render_value(value));
            }
        }
    }
    let trimmed = out.trim_end();
    Ok(format!("{trimmed} {ANSWER_SUFFIX}"))
}

/// Draw exactly `n` distinct, admissible instances from an admitted family.
///
/// Well-posedness failures are discarded and resampled; solver crashes and
/// timeouts propagate. The returned list is deterministic in (family, seed,
/// n) regardless of solve parallelism.
pub fn sample_instances(
    f: &ProbeFamily,
    admission: &AdmissionRecord,
    n: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Vec<ProbeInstance>, InstanceError> {
    if !admission.admitted || admission.family_id != f.id {
        return Err(InstanceError::NotAdmitted(f.id.clone()));
    }
    let budget = n.saturating_mul(10);
    let mut rng = SplitMix64::new(seed);
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut draws = 0usize;
    let mut rejected = 0usize;
    let mut accepted: Vec<ProbeInstance> = Vec::with_capacity(n);

    while accepted.len() < n && draws < budget {
        // Draw a batch of distinct candidates sequentially (the PRNG stream
        // must not depend on solve order), then solve them in parallel and
        // accept in draw order.
        let want = n - accepted.len();
        let mut batch: Vec<BTreeMap<String, i64>> = Vec::with_capacity(want);
        while batch.len() < want && draws < budget {
            draws += 1;
            let tuple: Vec<i64> = f
                .params
                .iter()
                .map(|p| rng.next_in_range(p.lo, p.hi))
                .collect();
            if !seen.insert(tuple.clone()) {
                continue;
            }
            let values: BTreeMap<String, i64> = f
                .params
                .iter()
                .map(|p| p.name.clone())
                .zip(tuple)
                .collect();
            batch.push(values);
        }
        if batch.is_empty() {
            break;
        }
        let family = f.clone();
        let solver = cfg.clone();
        let outcomes = par_map(batch, move |values| {
            let result = (|| -> Result<ProbeInstance, SolveOutcome> {
                let mut inst = ground_instance(&family, &values, DEFAULT_GROUNDING_CAP)
                    .map_err(|e| SolveOutcome::Rejected(e.to_string()))?;
                let report = check_well_posed(&inst, &solver).map_err(SolveOutcome::from)?;
                if !report.is_admissible() {
                    return Err(SolveOutcome::Rejected(report.details));
                }
                let (answer, profile) =
                    solve_canonical(&inst, &solver).map_err(SolveOutcome::from)?;
                inst.prompt = Some(render_prompt(&family, &values).map_err(|e| {
                    SolveOutcome::Fatal(e.to_string())
                })?);
                inst.canonical_answer = Some(answer);
                inst.profile = Some(profile);
                inst.verification = Some(report);
                Ok(inst)
            })();
            result
        });
        for outcome in outcomes {
            match outcome {
                Ok(inst) => {
                    if accepted.len() < n {
                        accepted.push(inst);
                    }
                }
                Err(SolveOutcome::Rejected(why)) => {
                    log::debug!("candidate rejected: {why}");
                    rejected += 1;
                }
                Err(SolveOutcome::Crash(e)) => return Err(InstanceError::Solver(e)),
                Err(SolveOutcome::Fatal(msg)) => {
                    return Err(InstanceError::Template(msg));
                }
            }
        }
    }

    if accepted.len() < n {
        return Err(InstanceError::InstanceShortfall {
            needed: n,
            got: accepted.len(),
            rejected,
            draws,
        });
    }
    Ok(accepted)
}

/// Per-candidate verdict inside the sampling loop: rejection is part of the
/// rejection-sampling contract, crashes and template errors abort the draw.
enum SolveOutcome {
    Rejected(String),
    Crash(SolverError),
    Fatal(String),
}

impl From<SolverError> for SolveOutcome {
    fn from(e: SolverError) -> SolveOutcome {
        match e {
            // An infeasible candidate is an ordinary rejection; anything
            // else is a solver malfunction the caller must see.
            SolverError::Infeasible => SolveOutcome::Rejected("infeasible".into()),
            other => SolveOutcome::Crash(other),
        }
    }
}

/// Append instances (and their solver profiles) to the run store.
pub fn persist_instances(
    run: &mut RunHandle,
    instances: &[ProbeInstance],
) -> Result<usize, InstanceError> {
    let mut appended = 0;
    for inst in instances {
        let record = InstanceRecord::from_instance(inst).ok_or_else(|| {
            InstanceError::Template(format!(
                "instance {} has no prompt/answer to persist",
                inst.instance_hash
            ))
        })?;
        if run.append(STREAM_INSTANCES, &record)? {
            appended += 1;
        }
        if let Some(profile) = &inst.profile {
            run.append(
                STREAM_PROFILES,
                &ProfileRecord {
                    instance_hash: inst.instance_hash.clone(),
                    profile: profile.clone(),
                },
            )?;
        }
    }
    Ok(appended)
}
