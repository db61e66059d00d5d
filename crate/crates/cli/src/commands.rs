use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use linvar_core::classify::{
    check_join_decomposition, classify_sufficient, classify_with, Answer, Certificate,
    ClassificationReport, ClassifyOptions, Property,
};
use linvar_core::derive::{iterate_with, Operator};
use linvar_core::flatsat::{default_budget, entails_flat, saturate, EntailmentVerdict};
use linvar_core::models::{find_model, refute_entailment, ModelSearchOutcome, SearchOptions};
use linvar_core::project::project_to_component;
use linvar_core::theory::join_components;
use linvar_core::{
    bfs_prove, join_disjoint, parse_identity, parse_theory, presets, render_theory, validate,
    verify_derivation, Derivation, Error, ProofSearchOutcome, SearchBounds, Theory,
};
use serde_json::{json, Value};

use crate::{Cli, Command, Outcome};

pub fn run(cli: &Cli) -> Result<Outcome> {
    let budget = cli.common.budget;
    match &cli.command {
        Command::Validate { theory } => validate_cmd(&load_theory(theory)?),
        Command::Derive {
            theory,
            order,
            iterate,
        } => derive_cmd(&load_theory(theory)?, *order, *iterate, budget),
        Command::Classify {
            theory,
            sufficient_only,
        } => classify_cmd(&load_theory(theory)?, *sufficient_only, budget),
        Command::Entail { theory, identity } => entail_cmd(&load_theory(theory)?, identity, budget),
        Command::Models {
            theory,
            min,
            max,
            refute,
        } => models_cmd(&load_theory(theory)?, *min, *max, refute.as_deref()),
        Command::Join {
            left,
            right,
            check_decomposition,
        } => join_cmd(
            &load_theory(left)?,
            &load_theory(right)?,
            *check_decomposition,
        ),
        Command::Project {
            left,
            right,
            derivation,
        } => project_cmd(
            &load_theory(left)?,
            &load_theory(right)?,
            &load_derivation(derivation)?,
        ),
        Command::CheckDerivation { theory, derivation } => {
            check_cmd(&load_theory(theory)?, &load_derivation(derivation)?)
        }
    }
}

fn load_theory(arg: &str) -> Result<Theory> {
    if let Some(name) = arg.strip_prefix("preset:") {
        return presets::all()
            .into_iter()
            .find(|t| t.name == name)
            .ok_or_else(|| anyhow!("unknown preset `{name}`"));
    }
    let text = std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?;
    parse_theory(&text).with_context(|| arg.to_string())
}

fn load_derivation(path: &Path) -> Result<Derivation> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Derivation::from_json(&text).with_context(|| format!("{}", path.display()))
}

fn definitive(summary: String, result: Value, bounds: Value) -> Outcome {
    Outcome {
        summary,
        result,
        bounds,
        exit: 0,
    }
}

fn validate_cmd(th: &Theory) -> Result<Outcome> {
    let report = validate(th)?;
    let mut s = format!(
        "theory {}: {} operations, {} axioms\n",
        th.name,
        th.signature().len(),
        th.len()
    );
    if report.is_linear {
        s.push_str("linear: yes\n");
    } else {
        s.push_str("linear: no\n");
        for e in &report.non_linear {
            let _ = writeln!(s, "  not linear: axiom {e}");
        }
    }
    for (f, status) in &report.idempotency {
        let _ = writeln!(
            s,
            "idempotent {f}: {}",
            serde_json::to_value(status)?.as_str().unwrap_or("?")
        );
    }
    let ok = report.is_linear_idempotent();
    Ok(Outcome {
        summary: s.trim_end().to_owned(),
        result: serde_json::to_value(&report)?,
        bounds: Value::Null,
        exit: if ok { 0 } else { 1 },
    })
}

fn derive_cmd(th: &Theory, order: bool, iterate: bool, budget: Option<usize>) -> Result<Outcome> {
    let op = if order {
        Operator::OrderDerivative
    } else {
        Operator::Derivative
    };
    let used = budget.unwrap_or_else(|| default_budget(th));
    let bounds = json!({ "budget": used });
    if !iterate {
        let next = op.apply(th, budget)?;
        return Ok(definitive(
            render_theory(&next).trim_end().to_owned(),
            json!({ "operator": op, "theory": next, "dsl": render_theory(&next) }),
            bounds,
        ));
    }
    let trace = iterate_with(th, op, budget)?;
    let mut s = String::new();
    let mut stages = Vec::new();
    for st in &trace.stages {
        let _ = writeln!(
            s,
            "# stage {}: {} identities, {} added{}",
            st.index,
            st.identities,
            st.added.len(),
            if st.inconsistent {
                ", inconsistent"
            } else {
                ""
            }
        );
        s.push_str(&render_theory(&st.theory));
        stages.push(json!({ "stage": st, "dsl": render_theory(&st.theory) }));
    }
    let _ = write!(
        s,
        "# stopped at stage {}: {:?}",
        trace.stop_stage(),
        trace.stop
    );
    Ok(definitive(
        s,
        json!({ "trace": trace, "stages": stages }),
        bounds,
    ))
}

fn certificate_note(c: &Certificate) -> String {
    match c {
        Certificate::Inconsistency { stage, derivation } => {
            format!(
                "x = y at stage {stage}, {}-step certificate",
                derivation.len()
            )
        }
        Certificate::Model { stage, algebra, .. } => {
            format!(
                "{}-element model of stage {stage} separates x and y",
                algebra.size
            )
        }
        Certificate::NoSmallModel { stage } => format!("stage {stage} is a consistent fixpoint"),
        Certificate::None => "no certificate".into(),
    }
}

fn answer_word(a: Answer) -> &'static str {
    match a {
        Answer::Yes => "yes",
        Answer::No => "no",
        Answer::Unknown => "unknown",
    }
}

fn classify_summary(r: &ClassificationReport) -> (String, bool) {
    let mut s = format!("theory {}\n", r.theory);
    let mut unknown = false;
    for p in Property::ALL {
        let v = r.verdicts.get(p);
        unknown |= v.answer == Answer::Unknown;
        let _ = writeln!(
            s,
            "{}: {} ({}{})",
            p.label(),
            answer_word(v.answer),
            certificate_note(&v.certificate),
            if v.sufficient_only {
                "; sufficient condition only"
            } else {
                ""
            }
        );
    }
    (s.trim_end().to_owned(), unknown)
}

fn classify_cmd(th: &Theory, sufficient_only: bool, budget: Option<usize>) -> Result<Outcome> {
    let (report, bounds) = if sufficient_only {
        let b = SearchBounds::default();
        (classify_sufficient(th, &b)?, json!({ "search": b }))
    } else {
        let opts = ClassifyOptions {
            budget,
            ..Default::default()
        };
        let used = budget.unwrap_or_else(|| default_budget(th));
        (
            classify_with(th, &opts)?,
            json!({ "budget": used, "models": opts.models }),
        )
    };
    let (summary, unknown) = classify_summary(&report);
    Ok(Outcome {
        summary,
        result: serde_json::to_value(&report)?,
        bounds,
        exit: if unknown { 2 } else { 0 },
    })
}

fn entail_cmd(th: &Theory, identity: &str, budget: Option<usize>) -> Result<Outcome> {
    let goal = parse_identity(identity).context("identity")?;
    th.check_identity(&goal)?;
    if th.is_linear() && goal.is_linear() {
        let used = budget.unwrap_or_else(|| default_budget(th));
        let base = saturate(th, used)?;
        let verdict = entails_flat(&base, &goal)?;
        let bounds = json!({ "budget": used, "models": SearchOptions::default() });
        let summary = match &verdict {
            EntailmentVerdict::Entailed { derivation, .. } => {
                format!(
                    "entailed; {}-step derivation\n{}",
                    derivation.len(),
                    derivation.to_json()
                )
            }
            EntailmentVerdict::NotEntailedWithModel {
                algebra,
                assignment,
            } => format!(
                "not entailed; countermodel size {}\n{}\nassignment {}",
                algebra.size,
                algebra.to_json(),
                serde_json::to_string(assignment)?
            ),
            EntailmentVerdict::NotEntailed => {
                "not entailed; no countermodel in the searched sizes".into()
            }
        };
        return Ok(definitive(summary, serde_json::to_value(&verdict)?, bounds));
    }
    let bounds = SearchBounds::default();
    match bfs_prove(th, &goal, &bounds) {
        ProofSearchOutcome::Proved(d) => Ok(definitive(
            format!("entailed; {}-step derivation\n{}", d.len(), d.to_json()),
            json!({ "verdict": "entailed", "derivation": d }),
            json!({ "search": bounds }),
        )),
        ProofSearchOutcome::Unknown(stats) => Ok(Outcome {
            summary: format!(
                "unknown: no derivation within the search bounds ({} terms explored)",
                stats.terms_seen
            ),
            result: json!({ "verdict": "unknown", "stats": stats }),
            bounds: json!({ "search": bounds }),
            exit: 2,
        }),
    }
}

fn models_cmd(th: &Theory, min: usize, max: usize, refute: Option<&str>) -> Result<Outcome> {
    let idempotent = validate(th)?.is_idempotent();
    let opts = SearchOptions {
        min_size: min,
        max_size: max,
        idempotent,
        ..SearchOptions::default()
    };
    let out = match refute {
        Some(text) => {
            let goal = parse_identity(text).context("--refute")?;
            th.check_identity(&goal)?;
            refute_entailment(th, &goal, &opts)?
        }
        None => find_model(th, &opts, None)?,
    };
    let (summary, exit) = match &out {
        ModelSearchOutcome::Found {
            algebra,
            assignment,
        } => {
            let mut s = format!("model of size {}\n{}", algebra.size, algebra.to_json());
            if !assignment.is_empty() {
                let _ = write!(s, "\nassignment {}", serde_json::to_string(assignment)?);
            }
            (s, 0)
        }
        ModelSearchOutcome::Exhausted => (format!("no model of size {min} to {max}"), 0),
        ModelSearchOutcome::LimitReached => ("unknown: node limit reached".to_owned(), 2),
    };
    Ok(Outcome {
        summary,
        result: serde_json::to_value(&out)?,
        bounds: json!({ "models": opts }),
        exit,
    })
}

fn join_cmd(a: &Theory, b: &Theory, check: bool) -> Result<Outcome> {
    let join = join_disjoint(a, b);
    let mut s = render_theory(&join);
    if !join.renames.is_empty() {
        let _ = writeln!(s, "# renamed: {:?}", join.renames);
    }
    if !check {
        return Ok(definitive(
            s.trim_end().to_owned(),
            json!({ "theory": join, "dsl": render_theory(&join) }),
            Value::Null,
        ));
    }
    let report = check_join_decomposition(a, b)?;
    for st in &report.stages {
        let _ = writeln!(
            s,
            "{:?} stage {}: {}",
            st.operator,
            st.stage,
            if st.holds {
                "decomposes"
            } else {
                "DOES NOT decompose"
            }
        );
    }
    for p in &report.properties {
        let _ = writeln!(
            s,
            "{}: join {}, left {}, right {}: {}",
            p.property.label(),
            yes_no(p.join),
            yes_no(p.left),
            yes_no(p.right),
            if p.holds { "ok" } else { "VIOLATED" }
        );
    }
    let ok = report.decomposition_holds() && report.prime_filter_holds();
    Ok(Outcome {
        summary: s.trim_end().to_owned(),
        result: json!({ "theory": join, "check": report }),
        bounds: json!({ "budget": report.budget }),
        exit: if ok { 0 } else { 1 },
    })
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn project_cmd(a: &Theory, b: &Theory, d: &Derivation) -> Result<Outcome> {
    match project_to_component(a, b, d) {
        Ok(p) => {
            let (l, r) = join_components(a, b);
            let owner = if p.owner == l.name { l } else { r };
            let verified = verify_derivation(&owner, &p.derivation).is_ok();
            if !verified {
                bail!("projected derivation failed verification");
            }
            Ok(definitive(
                format!(
                    "projected onto {} ({} steps); verified against {} with v = v\n{}",
                    p.owner,
                    p.derivation.len(),
                    p.owner,
                    p.derivation.to_json()
                ),
                json!({ "projection": p, "verified": verified }),
                Value::Null,
            ))
        }
        Err(Error::InconsistencyDetected(cert)) => Ok(definitive(
            format!(
                "join is inconsistent; {}-step certificate\n{}",
                cert.len(),
                cert.to_json()
            ),
            json!({ "inconsistent": true, "certificate": cert }),
            Value::Null,
        )),
        Err(e) => Err(e.into()),
    }
}

fn check_cmd(th: &Theory, d: &Derivation) -> Result<Outcome> {
    Ok(match verify_derivation(th, d) {
        Ok(()) => definitive(
            format!("valid: {} ≈ {} in {} steps", d.first(), d.last(), d.len()),
            json!({ "valid": true, "steps": d.len() }),
            Value::Null,
        ),
        Err(f) => Outcome {
            summary: format!("invalid: {f}"),
            result: json!({ "valid": false, "step": f.step, "reason": f.reason }),
            bounds: Value::Null,
            exit: 1,
        },
    })
}
