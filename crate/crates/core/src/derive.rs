//! Weak independence, the derivative and order derivative of a theory, and
//! their iteration.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flatsat::{default_budget, saturate, FlatFactBase};
use crate::rewrite::Derivation;
use crate::term::{Sym, Term};
use crate::theory::{theory_equal, Identity, Theory};

/// A place `i` (1-based) of `symbol` with the first fact `x ≈ F(w)`, `w_i ≠ x`,
/// found in canonical tuple order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub symbol: String,
    pub place: usize,
    pub fact: Identity,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WeakIndependenceProfile {
    pub witnesses: Vec<Witness>,
}

impl WeakIndependenceProfile {
    pub fn places(&self) -> BTreeSet<(String, usize)> {
        self.witnesses
            .iter()
            .map(|w| (w.symbol.clone(), w.place))
            .collect()
    }

    pub fn contains(&self, symbol: &str, place: usize) -> bool {
        self.witnesses
            .iter()
            .any(|w| w.symbol == symbol && w.place == place)
    }

    pub fn len(&self) -> usize {
        self.witnesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.witnesses.is_empty()
    }
}

/// Canonical facts `x ≈ F(w)`: the symbol and `w` over `0 = x, k = y_k`.
pub type OrderFactSet = BTreeSet<(String, Vec<usize>)>;

fn tuple_term(f: &Sym, w: &[usize]) -> Term {
    Term::App(
        f.clone(),
        w.iter()
            .map(|&i| {
                if i == 0 {
                    Term::var("x")
                } else {
                    Term::var(format!("y{i}"))
                }
            })
            .collect(),
    )
}

/// `x ≈ F(w)` for a fact tuple.
pub fn fact_identity(f: &str, w: &[usize]) -> Identity {
    Identity::new(Term::var("x"), tuple_term(&Sym::new(f), w))
}

pub fn order_facts(base: &FlatFactBase) -> Result<OrderFactSet> {
    let mut out = OrderFactSet::new();
    for (f, _) in base.theory().signature().iter() {
        for w in base.facts_for(f)? {
            out.insert((f.name().to_owned(), w));
        }
    }
    Ok(out)
}

pub fn profile_of(base: &FlatFactBase) -> Result<WeakIndependenceProfile> {
    let mut witnesses = Vec::new();
    for (f, arity) in base.theory().signature().iter() {
        let facts = base.facts_for(f)?;
        for place in 1..=arity {
            if let Some(w) = facts.iter().find(|w| w[place - 1] != 0) {
                witnesses.push(Witness {
                    symbol: f.name().to_owned(),
                    place,
                    fact: Identity::new(Term::var("x"), tuple_term(f, w)),
                });
            }
        }
    }
    Ok(WeakIndependenceProfile { witnesses })
}

fn base_for(theory: &Theory, budget: Option<usize>) -> Result<FlatFactBase> {
    let budget = budget.unwrap_or_else(|| default_budget(theory));
    let needed = theory.signature().max_arity() + 1;
    if budget < needed.max(2) {
        return Err(Error::BudgetTooSmall {
            needed: needed.max(2),
            budget,
        });
    }
    saturate(theory, budget)
}

pub fn weak_independence_profile(theory: &Theory) -> Result<WeakIndependenceProfile> {
    profile_of(&base_for(theory, None)?)
}

/// `F(z1, ..., u, ..., zn) ≈ F(z1, ..., v, ..., zn)` with `u, v` at `place`.
pub fn independence_identity(f: &str, arity: usize, place: usize) -> Identity {
    let side = |x: &str| {
        Term::app(
            f,
            (1..=arity)
                .map(|j| {
                    if j == place {
                        Term::var(x)
                    } else {
                        Term::var(format!("z{j}"))
                    }
                })
                .collect(),
        )
    };
    Identity::new(side("u"), side("v"))
}

/// Σ plus the independence identities of the profile.
pub fn derivative_from(theory: &Theory, profile: &WeakIndependenceProfile) -> Theory {
    let mut out = theory.clone().with_name(format!("{}'", theory.name));
    for w in &profile.witnesses {
        let arity = theory
            .signature()
            .arity(&Sym::new(&w.symbol))
            .expect("profile symbol");
        out.add(independence_identity(&w.symbol, arity, w.place))
            .expect("symbol of the theory");
    }
    out
}

/// Every `x ≈ F(w')` with each `w'_i` either `x` or `w_i`.
pub fn mixtures(f: &str, w: &[usize]) -> Vec<Identity> {
    let movable: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0).collect();
    (0u64..1 << movable.len())
        .map(|mask| {
            let mut v = w.to_vec();
            for (bit, &i) in movable.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    v[i] = 0;
                }
            }
            fact_identity(f, &v)
        })
        .collect()
}

/// Σ plus all mixtures of its canonical facts.
pub fn order_derivative_from(theory: &Theory, facts: &OrderFactSet) -> Theory {
    let mut out = theory.clone().with_name(format!("{}+", theory.name));
    for (f, w) in facts {
        for e in mixtures(f, w) {
            out.add(e).expect("symbol of the theory");
        }
    }
    out
}

pub fn derivative(theory: &Theory) -> Result<Theory> {
    derivative_with(theory, None)
}

pub fn derivative_with(theory: &Theory, budget: Option<usize>) -> Result<Theory> {
    let base = base_for(theory, budget)?;
    Ok(derivative_from(theory, &profile_of(&base)?))
}

pub fn order_derivative(theory: &Theory) -> Result<Theory> {
    order_derivative_with(theory, None)
}

pub fn order_derivative_with(theory: &Theory, budget: Option<usize>) -> Result<Theory> {
    let base = base_for(theory, budget)?;
    Ok(order_derivative_from(theory, &order_facts(&base)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Derivative,
    OrderDerivative,
}

impl Operator {
    pub fn apply(self, theory: &Theory, budget: Option<usize>) -> Result<Theory> {
        match self {
            Operator::Derivative => derivative_with(theory, budget),
            Operator::OrderDerivative => order_derivative_with(theory, budget),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Inconsistent,
    Fixpoint,
}

/// What the operator reads off a stage.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Key {
    Places(WeakIndependenceProfile),
    Facts(OrderFactSet),
}

impl Key {
    fn delta(&self, prev: Option<&Key>) -> Vec<Identity> {
        match (self, prev) {
            (Key::Places(p), prev) => {
                let old = match prev {
                    Some(Key::Places(q)) => q.places(),
                    _ => BTreeSet::new(),
                };
                p.witnesses
                    .iter()
                    .filter(|w| !old.contains(&(w.symbol.clone(), w.place)))
                    .map(|w| w.fact.clone())
                    .collect()
            }
            (Key::Facts(s), prev) => {
                let empty = OrderFactSet::new();
                let old = match prev {
                    Some(Key::Facts(q)) => q,
                    _ => &empty,
                };
                s.difference(old)
                    .map(|(f, w)| fact_identity(f, w))
                    .collect()
            }
        }
    }

    fn same_as(&self, other: &Key) -> bool {
        match (self, other) {
            (Key::Places(a), Key::Places(b)) => a.places() == b.places(),
            (a, b) => a == b,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub index: usize,
    #[serde(skip)]
    pub theory: Theory,
    pub identities: usize,
    /// Identities not present in the previous stage.
    pub added: Vec<Identity>,
    /// New weak-independence witnesses, or new facts `x ≈ F(w)`.
    pub new_facts: Vec<Identity>,
    pub inconsistent: bool,
    /// Flat derivation of `x ≈ y` when inconsistent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Derivation>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationTrace {
    pub theory: String,
    pub operator: Operator,
    pub budget: usize,
    pub stages: Vec<Stage>,
    pub stop: StopReason,
}

impl IterationTrace {
    pub fn last(&self) -> &Stage {
        self.stages.last().expect("at least one stage")
    }

    /// Index of the stop stage.
    pub fn stop_stage(&self) -> usize {
        self.last().index
    }

    pub fn is_inconsistent(&self) -> bool {
        self.stop == StopReason::Inconsistent
    }

    /// Theory at stage `k`; stages past the stop repeat the stop theory when it is a fixpoint.
    pub fn theory_at(&self, k: usize) -> &Theory {
        &self.stages[k.min(self.stages.len() - 1)].theory
    }
}

pub fn iterate(theory: &Theory, op: Operator) -> Result<IterationTrace> {
    iterate_with(theory, op, None)
}

/// Apply `op` until a stage is inconsistent or the profile (resp. fact set)
/// stops changing.
pub fn iterate_with(
    theory: &Theory,
    op: Operator,
    budget: Option<usize>,
) -> Result<IterationTrace> {
    let budget = budget.unwrap_or_else(|| default_budget(theory));
    let mut stages: Vec<Stage> = Vec::new();
    let mut cur = theory.clone();
    let mut prev_key: Option<Key> = None;
    let mut prev_theory: Option<Theory> = None;
    loop {
        let base = base_for(&cur, Some(budget))?;
        let inconsistent = base.is_collapsed();
        let key = match op {
            Operator::Derivative => Key::Places(profile_of(&base)?),
            Operator::OrderDerivative => Key::Facts(order_facts(&base)?),
        };
        let added = match &prev_theory {
            Some(p) => cur
                .identities()
                .filter(|e| !p.contains(e))
                .cloned()
                .collect(),
            None => Vec::new(),
        };
        stages.push(Stage {
            index: stages.len(),
            identities: cur.len(),
            added,
            new_facts: key.delta(prev_key.as_ref()),
            inconsistent,
            certificate: if inconsistent {
                base.inconsistency()
            } else {
                None
            },
            theory: cur.clone(),
        });
        if inconsistent {
            return Ok(finish(theory, op, budget, stages, StopReason::Inconsistent));
        }
        if prev_key.as_ref().is_some_and(|p| p.same_as(&key)) {
            return Ok(finish(theory, op, budget, stages, StopReason::Fixpoint));
        }
        let next = match &key {
            Key::Places(p) => derivative_from(&cur, p),
            Key::Facts(s) => order_derivative_from(&cur, s),
        };
        if theory_equal(&next, &cur)? {
            // Nothing new: the next stage is this one again.
            stages.push(Stage {
                index: stages.len(),
                identities: next.len(),
                added: Vec::new(),
                new_facts: Vec::new(),
                inconsistent: false,
                certificate: None,
                theory: next,
            });
            return Ok(finish(theory, op, budget, stages, StopReason::Fixpoint));
        }
        prev_theory = Some(cur);
        cur = next;
        prev_key = Some(key);
    }
}

fn finish(
    theory: &Theory,
    op: Operator,
    budget: usize,
    stages: Vec<Stage>,
    stop: StopReason,
) -> IterationTrace {
    IterationTrace {
        theory: theory.name.clone(),
        operator: op,
        budget,
        stages,
        stop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewrite::verify_derivation;
    use crate::theory::{presets, validate};

    fn places(v: &[(&str, usize)]) -> BTreeSet<(String, usize)> {
        v.iter().map(|(f, i)| (f.to_string(), *i)).collect()
    }

    #[test]
    fn maltsev_profile_is_full() {
        let p = weak_independence_profile(&presets::maltsev()).unwrap();
        assert_eq!(p.places(), places(&[("p", 1), ("p", 2), ("p", 3)]));
    }

    #[test]
    fn semilattice_and_bare_idempotent_profiles_are_empty() {
        assert!(weak_independence_profile(&presets::semilattice())
            .unwrap()
            .is_empty());
        assert!(weak_independence_profile(&presets::idempotent_binary())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn maltsev_derivative_exact() {
        let expected = Theory::from_strs(
            "expected",
            &[("p", 3)],
            &[
                "p(x,y,y) = x",
                "p(y,y,x) = x",
                "p(u,y,z) = p(v,y,z)",
                "p(x,u,z) = p(x,v,z)",
                "p(x,y,u) = p(x,y,v)",
            ],
        );
        assert!(theory_equal(&derivative(&presets::maltsev()).unwrap(), &expected).unwrap());
    }

    #[test]
    fn semilattice_is_a_fixpoint_of_both_operators() {
        let s = presets::semilattice();
        assert!(theory_equal(&derivative(&s).unwrap(), &s).unwrap());
        assert!(theory_equal(&order_derivative(&s).unwrap(), &s).unwrap());
    }

    #[test]
    fn maltsev_order_derivative_contains_mixtures() {
        let plus = order_derivative(&presets::maltsev()).unwrap();
        for e in ["x = p(x,x,y)", "x = p(x,y,x)", "x = p(y,x,x)"] {
            assert!(plus.contains(&e.parse().unwrap()), "{e}");
        }
    }

    #[test]
    fn iterations_on_examples() {
        let m = presets::maltsev();
        for op in [Operator::Derivative, Operator::OrderDerivative] {
            let tr = iterate(&m, op).unwrap();
            assert_eq!(tr.stop, StopReason::Inconsistent);
            assert_eq!(tr.stop_stage(), 1);
            let cert = tr.last().certificate.as_ref().unwrap();
            verify_derivation(&tr.last().theory, cert).unwrap();
        }
        let tr = iterate(&presets::semilattice(), Operator::Derivative).unwrap();
        assert_eq!(tr.stop, StopReason::Fixpoint);
        assert_eq!(tr.stop_stage(), 1);
        assert!(theory_equal(&tr.stages[1].theory, &tr.stages[0].theory).unwrap());
    }

    #[test]
    fn operators_preserve_linear_idempotence() {
        for th in presets::all() {
            for op in [Operator::Derivative, Operator::OrderDerivative] {
                let next = op.apply(&th, None).unwrap();
                assert!(
                    validate(&next).unwrap().is_linear_idempotent(),
                    "{} {op:?}",
                    th.name
                );
                assert!(th.identities().all(|e| next.contains(e)));
            }
        }
    }

    #[test]
    fn mixture_count() {
        assert_eq!(mixtures("p", &[0, 1, 1]).len(), 4);
        assert_eq!(mixtures("p", &[0, 0, 0]).len(), 1);
    }

    #[test]
    fn small_budget_is_rejected() {
        assert!(matches!(
            derivative_with(&presets::maltsev(), Some(3)),
            Err(Error::BudgetTooSmall {
                needed: 4,
                budget: 3
            })
        ));
    }
}
