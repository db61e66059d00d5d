//! Congruence modularity, nontrivial congruence identities and
//! n-permutability of linear idempotent theories.

use serde::Serialize;

use crate::derive::{independence_identity, iterate_with, IterationTrace, Operator, StopReason};
use crate::error::{Error, Result};
use crate::flatsat::{canonical_tuples, default_budget};
use crate::models::{
    refute_entailment, Assignment, FiniteAlgebra, ModelSearchOutcome, SearchOptions,
};
use crate::rewrite::{bfs_prove, Derivation, ProofSearchOutcome, SearchBounds};
use crate::term::Term;
use crate::theory::{
    join_components, join_disjoint, require_linear_idempotent, theory_equal, validate, Identity,
    Theory, ValidationReport,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Property {
    #[serde(rename = "cm")]
    CongruenceModular,
    #[serde(rename = "nci")]
    NontrivialCongruenceIdentity,
    #[serde(rename = "nperm")]
    NPermutable,
}

impl Property {
    pub const ALL: [Property; 3] = [
        Property::CongruenceModular,
        Property::NontrivialCongruenceIdentity,
        Property::NPermutable,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Property::CongruenceModular => "CM",
            Property::NontrivialCongruenceIdentity => "NCI",
            Property::NPermutable => "n-permutable",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// Derivation of `x ≈ y` in the theory of stage `stage`.
    Inconsistency {
        stage: usize,
        derivation: Derivation,
    },
    /// A model of the stage theory separating `x` and `y`.
    Model {
        stage: usize,
        algebra: FiniteAlgebra,
        assignment: Assignment,
    },
    /// The stage is a consistent saturation fixpoint but no model was found in range.
    NoSmallModel {
        stage: usize,
    },
    None,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub property: Property,
    pub answer: Answer,
    pub certificate: Certificate,
    pub stages_used: usize,
    /// Only the sound direction of the criterion was applied.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub sufficient_only: bool,
}

impl Verdict {
    pub fn is_yes(&self) -> bool {
        self.answer == Answer::Yes
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdicts {
    pub cm: Verdict,
    pub nci: Verdict,
    pub nperm: Verdict,
}

impl Verdicts {
    pub fn get(&self, p: Property) -> &Verdict {
        match p {
            Property::CongruenceModular => &self.cm,
            Property::NontrivialCongruenceIdentity => &self.nci,
            Property::NPermutable => &self.nperm,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub theory: String,
    pub validation: ValidationReport,
    pub verdicts: Verdicts,
    pub traces: Vec<IterationTrace>,
}

#[derive(Clone, Copy, Debug)]
pub struct ClassifyOptions {
    /// Saturation budget; the theory's default when `None`.
    pub budget: Option<usize>,
    pub models: SearchOptions,
    /// Search for models backing "no" answers.
    pub certificates: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            budget: None,
            models: SearchOptions::default(),
            certificates: true,
        }
    }
}

pub fn classify(theory: &Theory) -> Result<ClassificationReport> {
    classify_with(theory, &ClassifyOptions::default())
}

pub fn classify_with(theory: &Theory, opts: &ClassifyOptions) -> Result<ClassificationReport> {
    let validation = require_linear_idempotent(theory)?;
    let (deriv, order) = rayon::join(
        || iterate_with(theory, Operator::Derivative, opts.budget),
        || iterate_with(theory, Operator::OrderDerivative, opts.budget),
    );
    let (deriv, order) = (deriv?, order?);
    let verdicts = verdicts_from(&deriv, &order, opts)?;
    Ok(ClassificationReport {
        theory: theory.name.clone(),
        validation,
        verdicts,
        traces: vec![deriv, order],
    })
}

fn no_certificate(
    trace: &IterationTrace,
    stage: usize,
    opts: &ClassifyOptions,
) -> Result<Certificate> {
    if !opts.certificates {
        return Ok(Certificate::None);
    }
    let goal = Identity::new(Term::var("x"), Term::var("y"));
    Ok(
        match refute_entailment(trace.theory_at(stage), &goal, &opts.models)? {
            ModelSearchOutcome::Found {
                algebra,
                assignment,
            } => Certificate::Model {
                stage,
                algebra,
                assignment,
            },
            _ => Certificate::NoSmallModel { stage },
        },
    )
}

fn yes(property: Property, trace: &IterationTrace) -> Verdict {
    let last = trace.last();
    Verdict {
        property,
        answer: Answer::Yes,
        certificate: Certificate::Inconsistency {
            stage: last.index,
            derivation: last
                .certificate
                .clone()
                .expect("inconsistent stage carries a derivation"),
        },
        stages_used: last.index,
        sufficient_only: false,
    }
}

fn verdicts_from(
    deriv: &IterationTrace,
    order: &IterationTrace,
    opts: &ClassifyOptions,
) -> Result<Verdicts> {
    let cm = if deriv.is_inconsistent() && deriv.stop_stage() <= 1 {
        yes(Property::CongruenceModular, deriv)
    } else {
        Verdict {
            property: Property::CongruenceModular,
            answer: Answer::No,
            certificate: no_certificate(deriv, 1, opts)?,
            stages_used: 1,
            sufficient_only: false,
        }
    };
    let by_trace = |property, trace: &IterationTrace| -> Result<Verdict> {
        Ok(if trace.is_inconsistent() {
            yes(property, trace)
        } else {
            Verdict {
                property,
                answer: Answer::No,
                certificate: no_certificate(trace, trace.stop_stage(), opts)?,
                stages_used: trace.stop_stage(),
                sufficient_only: false,
            }
        })
    };
    Ok(Verdicts {
        cm,
        nci: by_trace(Property::NontrivialCongruenceIdentity, deriv)?,
        nperm: by_trace(Property::NPermutable, order)?,
    })
}

/// For idempotent theories that are not linear: search for weak-independence
/// witnesses and for an inconsistency of the derivative by bounded rewriting.
/// A proof gives "yes" for CM (and hence NCI); anything else is unknown.
pub fn classify_sufficient(theory: &Theory, bounds: &SearchBounds) -> Result<ClassificationReport> {
    let validation = validate(theory)?;
    if !validation.is_idempotent() {
        return Err(Error::NotLinearIdempotent(format!(
            "idempotency not established for: {}",
            validation.not_established().join(", ")
        )));
    }
    let mut prime = theory.clone().with_name(format!("{}'", theory.name));
    for (f, arity) in theory.signature().iter() {
        let tuples = canonical_tuples(arity);
        for place in 1..=arity {
            let witnessed = tuples.iter().filter(|w| w[place - 1] != 0).any(|w| {
                let fact = crate::derive::fact_identity(f.name(), w);
                bfs_prove(theory, &fact, bounds).is_proved()
            });
            if witnessed {
                prime.add(independence_identity(f.name(), arity, place))?;
            }
        }
    }
    let goal = Identity::new(Term::var("x"), Term::var("y"));
    let unknown = |property| Verdict {
        property,
        answer: Answer::Unknown,
        certificate: Certificate::None,
        stages_used: 1,
        sufficient_only: true,
    };
    let (cm, nci) = match bfs_prove(&prime, &goal, bounds) {
        ProofSearchOutcome::Proved(d) => {
            let v = |property| Verdict {
                property,
                answer: Answer::Yes,
                certificate: Certificate::Inconsistency {
                    stage: 1,
                    derivation: d.clone(),
                },
                stages_used: 1,
                sufficient_only: true,
            };
            (
                v(Property::CongruenceModular),
                v(Property::NontrivialCongruenceIdentity),
            )
        }
        ProofSearchOutcome::Unknown(_) => (
            unknown(Property::CongruenceModular),
            unknown(Property::NontrivialCongruenceIdentity),
        ),
    };
    Ok(ClassificationReport {
        theory: theory.name.clone(),
        validation,
        verdicts: Verdicts {
            cm,
            nci,
            nperm: unknown(Property::NPermutable),
        },
        traces: Vec::new(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StageCheck {
    pub operator: Operator,
    pub stage: usize,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyCheck {
    pub property: Property,
    pub join: bool,
    pub left: bool,
    pub right: bool,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct JoinReport {
    pub left: String,
    pub right: String,
    pub budget: usize,
    pub stages: Vec<StageCheck>,
    pub properties: Vec<PropertyCheck>,
}

impl JoinReport {
    pub fn decomposition_holds(&self) -> bool {
        self.stages.iter().all(|s| s.holds)
    }

    pub fn prime_filter_holds(&self) -> bool {
        self.properties.iter().all(|p| p.holds)
    }
}

/// Compare each derivative and order-derivative stage of the join with the
/// join of the components' stages, and each property of the join with the
/// disjunction of the components' properties.
pub fn check_join_decomposition(left: &Theory, right: &Theory) -> Result<JoinReport> {
    require_linear_idempotent(left)?;
    require_linear_idempotent(right)?;
    let (l, r) = join_components(left, right);
    let join = join_disjoint(left, right);
    let budget = default_budget(&join);
    let opts = ClassifyOptions {
        budget: Some(budget),
        certificates: false,
        ..Default::default()
    };
    let mut stages = Vec::new();
    let mut traces = Vec::new();
    for op in [Operator::Derivative, Operator::OrderDerivative] {
        let tj = iterate_with(&join, op, Some(budget))?;
        let (tl, tr) = rayon::join(
            || iterate_with(&l, op, Some(budget)),
            || iterate_with(&r, op, Some(budget)),
        );
        let (tl, tr) = (tl?, tr?);
        for k in 0..=tj.stop_stage() {
            let expected = join_disjoint(tl.theory_at(k), tr.theory_at(k));
            let beyond =
                |t: &IterationTrace| k > t.stop_stage() && t.stop == StopReason::Inconsistent;
            let holds = !beyond(&tl) && !beyond(&tr) && theory_equal(tj.theory_at(k), &expected)?;
            stages.push(StageCheck {
                operator: op,
                stage: k,
                holds,
            });
        }
        traces.push((tj, tl, tr));
    }
    let (dj, dl, dr) = &traces[0];
    let (oj, ol, or) = &traces[1];
    let vj = verdicts_from(dj, oj, &opts)?;
    let vl = verdicts_from(dl, ol, &opts)?;
    let vr = verdicts_from(dr, or, &opts)?;
    let properties = Property::ALL
        .iter()
        .map(|&p| {
            let (j, a, b) = (vj.get(p).is_yes(), vl.get(p).is_yes(), vr.get(p).is_yes());
            PropertyCheck {
                property: p,
                join: j,
                left: a,
                right: b,
                holds: j == (a || b),
            }
        })
        .collect();
    Ok(JoinReport {
        left: left.name.clone(),
        right: right.name.clone(),
        budget,
        stages,
        properties,
    })
}
