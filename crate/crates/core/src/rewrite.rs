//! Derivations with full positional information, their verifier, and a
//! bounded bidirectional breadth-first prover.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::term::{match_term, Position, Substitution, Term, Var};
use crate::theory::{check_symbols, Identity, Theory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "fwd")]
    Forward,
    #[serde(rename = "rev")]
    Reverse,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }

    /// `(from, to)` sides of `e` in this direction.
    pub fn orient(self, e: &Identity) -> (&Term, &Term) {
        match self {
            Direction::Forward => (&e.lhs, &e.rhs),
            Direction::Reverse => (&e.rhs, &e.lhs),
        }
    }
}

/// One rewriting step: the instance `from σ` at `position` becomes `to σ`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    #[serde(rename = "eq")]
    pub equation: Identity,
    #[serde(rename = "dir")]
    pub direction: Direction,
    #[serde(rename = "pos")]
    pub position: Position,
    pub subst: Substitution,
}

impl Step {
    pub fn oriented(&self) -> (&Term, &Term) {
        self.direction.orient(&self.equation)
    }

    /// The same step read backwards.
    pub fn reversed(&self) -> Step {
        Step {
            direction: self.direction.flip(),
            ..self.clone()
        }
    }

    /// `v ≈ v` applied at `position` to the subterm `at`.
    pub fn reflexive(position: Position, at: Term) -> Step {
        let v = Var::new("v");
        Step {
            equation: Identity::new(Term::Var(v.clone()), Term::Var(v.clone())),
            direction: Direction::Forward,
            position,
            subst: [(v, at)].into_iter().collect(),
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Terms `t0 .. tn` and the `n` steps connecting them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub theory: String,
    pub terms: Vec<Term>,
    pub steps: Vec<Step>,
    /// Steps may use the trivial equation `v ≈ v`.
    #[serde(default, skip_serializing_if = "is_false")]
    pub reflexive: bool,
}

impl Derivation {
    pub fn trivial(theory: impl Into<String>, t: Term) -> Derivation {
        Derivation {
            theory: theory.into(),
            terms: vec![t],
            steps: Vec::new(),
            reflexive: false,
        }
    }

    pub fn first(&self) -> &Term {
        &self.terms[0]
    }

    pub fn last(&self) -> &Term {
        self.terms.last().expect("nonempty derivation")
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, step: Step, next: Term) {
        self.steps.push(step);
        self.terms.push(next);
    }

    pub fn reversed(&self) -> Derivation {
        Derivation {
            theory: self.theory.clone(),
            terms: self.terms.iter().rev().cloned().collect(),
            steps: self.steps.iter().rev().map(Step::reversed).collect(),
            reflexive: self.reflexive,
        }
    }

    /// Append `other`, whose first term must equal our last.
    pub fn concat(mut self, other: &Derivation) -> Derivation {
        assert_eq!(self.last(), other.first(), "derivations do not meet");
        self.terms.extend(other.terms.iter().skip(1).cloned());
        self.steps.extend(other.steps.iter().cloned());
        self.reflexive |= other.reflexive;
        self
    }

    /// The substitution instance: every term and every step binding is mapped by `theta`.
    pub fn instantiate(&self, theta: &Substitution) -> Derivation {
        Derivation {
            theory: self.theory.clone(),
            terms: self.terms.iter().map(|t| t.apply(theta)).collect(),
            steps: self
                .steps
                .iter()
                .map(|s| Step {
                    subst: s
                        .subst
                        .iter()
                        .map(|(v, t)| (v.clone(), t.apply(theta)))
                        .collect(),
                    ..s.clone()
                })
                .collect(),
            reflexive: self.reflexive,
        }
    }

    /// Lift every step into position `at` of `context` (whose subterm there is `t0`).
    pub fn in_context(&self, context: &Term, at: &Position) -> Result<Derivation> {
        let terms = self
            .terms
            .iter()
            .map(|t| context.replace_at(at, t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let steps = self
            .steps
            .iter()
            .map(|s| Step {
                position: at.concat(&s.position),
                ..s.clone()
            })
            .collect();
        Ok(Derivation {
            theory: self.theory.clone(),
            terms,
            steps,
            reflexive: self.reflexive,
        })
    }

    /// Drop steps whose pre and post terms coincide.
    pub fn without_trivial_steps(&self) -> Derivation {
        let mut out = Derivation::trivial(self.theory.clone(), self.first().clone());
        out.reflexive = self.reflexive;
        for (i, s) in self.steps.iter().enumerate() {
            if self.terms[i + 1] != self.terms[i] {
                out.push(s.clone(), self.terms[i + 1].clone());
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("derivations serialize")
    }

    pub fn from_json(s: &str) -> Result<Derivation> {
        let d: Derivation = serde_json::from_str(s)?;
        if d.terms.is_empty() {
            return Err(Error::MalformedDerivation("no terms".into()));
        }
        Ok(d)
    }
}

impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" ≈ ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Why a derivation was rejected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyFailure {
    /// Index of the failing step (0-based, rewriting `terms[step]` into `terms[step + 1]`).
    pub step: Option<usize>,
    pub reason: String,
}

impl fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(i) => write!(f, "step {i}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

impl std::error::Error for VerifyFailure {}

/// Check every step of `d` against `theory` (plus `v ≈ v` when `d.reflexive`).
pub fn verify_derivation(
    theory: &Theory,
    d: &Derivation,
) -> std::result::Result<(), VerifyFailure> {
    let whole = |reason: String| VerifyFailure { step: None, reason };
    if d.terms.is_empty() {
        return Err(whole("derivation has no terms".into()));
    }
    if d.steps.len() + 1 != d.terms.len() {
        return Err(whole(format!(
            "{} terms but {} steps",
            d.terms.len(),
            d.steps.len()
        )));
    }
    for (i, t) in d.terms.iter().enumerate() {
        if let Err(e) = check_symbols(theory.signature(), t, None) {
            return Err(whole(format!("term {i}: {e}")));
        }
    }
    for (i, step) in d.steps.iter().enumerate() {
        let fail = |reason: String| VerifyFailure {
            step: Some(i),
            reason,
        };
        let eq = &step.equation;
        if eq.is_reflexive_axiom() {
            if !d.reflexive {
                return Err(fail(
                    "uses `v = v` in a derivation not over Σ ∪ {v = v}".into(),
                ));
            }
            if step.direction != Direction::Forward {
                return Err(fail("`v = v` steps must be forward".into()));
            }
        } else if !theory.contains(eq) {
            return Err(fail(format!(
                "equation `{eq}` is not in theory `{}`",
                theory.name
            )));
        }
        let mut vars = eq.variables();
        let mut dom: Vec<Var> = step.subst.domain().cloned().collect();
        vars.sort();
        dom.sort();
        if vars != dom {
            return Err(fail(format!(
                "substitution domain {dom:?} differs from equation variables {vars:?}"
            )));
        }
        let (from, to) = step.oriented();
        let pre = &d.terms[i];
        let post = &d.terms[i + 1];
        let Some(at) = pre.get(&step.position) else {
            return Err(fail(format!(
                "position {} not valid in {pre}",
                step.position
            )));
        };
        let redex = from.apply(&step.subst);
        if *at != redex {
            return Err(fail(format!(
                "subterm {at} at {} is not the instance {redex}",
                step.position
            )));
        }
        let expected = pre
            .replace_at(&step.position, to.apply(&step.subst))
            .map_err(|e| fail(e.to_string()))?;
        if expected != *post {
            return Err(fail(format!("rewriting yields {expected}, not {post}")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBounds {
    /// Total distinct terms held by both search directions.
    pub max_terms: usize,
    /// Breadth-first layers per direction.
    pub max_depth: usize,
    /// Node count limit for any explored term.
    pub max_term_size: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds {
            max_terms: 200_000,
            max_depth: 10,
            max_term_size: 24,
        }
    }
}

impl SearchBounds {
    pub fn small() -> Self {
        SearchBounds {
            max_terms: 20_000,
            max_depth: 6,
            max_term_size: 16,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub terms_seen: usize,
    pub forward_depth: usize,
    pub backward_depth: usize,
    /// Both frontiers emptied before any bound was hit.
    pub frontier_exhausted: bool,
}

#[derive(Clone, Debug)]
pub enum ProofSearchOutcome {
    Proved(Derivation),
    Unknown(SearchStats),
}

impl ProofSearchOutcome {
    pub fn is_proved(&self) -> bool {
        matches!(self, ProofSearchOutcome::Proved(_))
    }

    pub fn derivation(&self) -> Option<&Derivation> {
        match self {
            ProofSearchOutcome::Proved(d) => Some(d),
            ProofSearchOutcome::Unknown(_) => None,
        }
    }
}

/// Every single-step rewrite of `t`, in the fixed expansion order: positions
/// in preorder, equations in theory order, forward before reverse, and
/// variables occurring only on the target side bound to `context` in
/// lexicographic order.
pub fn one_step_rewrites(
    theory: &Theory,
    t: &Term,
    context: &[Var],
    max_size: usize,
) -> Vec<(Term, Step)> {
    let mut out = Vec::new();
    for pos in t.positions() {
        let sub = t.get(&pos).expect("own position");
        for eq in theory.identities() {
            for dir in [Direction::Forward, Direction::Reverse] {
                let (from, to) = dir.orient(eq);
                let Some(sigma) = match_term(from, sub) else {
                    continue;
                };
                let free: Vec<Var> = to
                    .variables()
                    .into_iter()
                    .filter(|v| sigma.get(v).is_none())
                    .collect();
                for_each_binding(&free, context, &mut |binding| {
                    let mut s = sigma.clone();
                    for (v, c) in free.iter().zip(binding) {
                        s.insert(v.clone(), Term::Var(c.clone()));
                    }
                    let replacement = to.apply(&s);
                    if replacement == *sub {
                        return;
                    }
                    let nt = t.replace_at(&pos, replacement).expect("own position");
                    if nt.size() <= max_size {
                        out.push((
                            nt,
                            Step {
                                equation: eq.clone(),
                                direction: dir,
                                position: pos.clone(),
                                subst: s,
                            },
                        ));
                    }
                });
            }
        }
    }
    out
}

/// Calls `f` with every tuple in `pool^vars.len()` in lexicographic order.
pub(crate) fn for_each_binding<T: Clone>(vars: &[Var], pool: &[T], f: &mut impl FnMut(&[T])) {
    if pool.is_empty() && !vars.is_empty() {
        return;
    }
    let k = vars.len();
    let mut idx = vec![0usize; k];
    let mut buf: Vec<T> = (0..k).map(|_| pool[0].clone()).collect();
    loop {
        for (b, &i) in buf.iter_mut().zip(&idx) {
            *b = pool[i].clone();
        }
        f(&buf);
        let mut j = k;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < pool.len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

struct Frontier {
    parent: HashMap<Term, Option<(Term, Step)>>,
    layer: Vec<Term>,
    depth: usize,
}

impl Frontier {
    fn new(root: Term) -> Self {
        let mut parent = HashMap::new();
        parent.insert(root.clone(), None);
        Frontier {
            parent,
            layer: vec![root],
            depth: 0,
        }
    }

    /// Derivation from the root to `t`.
    fn path_to(&self, theory: &str, t: &Term) -> Derivation {
        let mut terms = vec![t.clone()];
        let mut steps = Vec::new();
        let mut cur = t.clone();
        while let Some(Some((prev, step))) = self.parent.get(&cur) {
            terms.push(prev.clone());
            steps.push(step.clone());
            cur = prev.clone();
        }
        terms.reverse();
        steps.reverse();
        Derivation {
            theory: theory.to_owned(),
            terms,
            steps,
            reflexive: false,
        }
    }
}

/// Semi-decide `theory ⊨ goal` by breadth-first rewriting from both sides.
///
/// Goal variables are treated as constants; variables introduced by a step
/// range over the goal's variables.
pub fn bfs_prove(theory: &Theory, goal: &Identity, bounds: &SearchBounds) -> ProofSearchOutcome {
    let mut context = goal.variables();
    context.sort();
    if context.is_empty() {
        context.push(Var::new("z"));
    }
    if goal.lhs == goal.rhs {
        return ProofSearchOutcome::Proved(Derivation::trivial(
            theory.name.clone(),
            goal.lhs.clone(),
        ));
    }
    let mut fwd = Frontier::new(goal.lhs.clone());
    let mut bwd = Frontier::new(goal.rhs.clone());
    let stats = |f: &Frontier, b: &Frontier, exhausted: bool| SearchStats {
        terms_seen: f.parent.len() + b.parent.len(),
        forward_depth: f.depth,
        backward_depth: b.depth,
        frontier_exhausted: exhausted,
    };

    loop {
        let can_f = !fwd.layer.is_empty() && fwd.depth < bounds.max_depth;
        let can_b = !bwd.layer.is_empty() && bwd.depth < bounds.max_depth;
        let expand_forward = match (can_f, can_b) {
            (false, false) => {
                let exhausted = fwd.layer.is_empty() || bwd.layer.is_empty();
                return ProofSearchOutcome::Unknown(stats(&fwd, &bwd, exhausted));
            }
            (true, false) => true,
            (false, true) => false,
            (true, true) => fwd.layer.len() <= bwd.layer.len(),
        };
        let (this, other) = if expand_forward {
            (&mut fwd, &bwd)
        } else {
            (&mut bwd, &fwd)
        };
        let layer = std::mem::take(&mut this.layer);
        let mut next = Vec::new();
        let mut meet = None;
        'outer: for t in &layer {
            for (nt, step) in one_step_rewrites(theory, t, &context, bounds.max_term_size) {
                if this.parent.contains_key(&nt) {
                    continue;
                }
                this.parent.insert(nt.clone(), Some((t.clone(), step)));
                if other.parent.contains_key(&nt) {
                    meet = Some(nt);
                    break 'outer;
                }
                next.push(nt);
                if this.parent.len() + other.parent.len() >= bounds.max_terms {
                    this.layer = next;
                    this.depth += 1;
                    return ProofSearchOutcome::Unknown(stats(&fwd, &bwd, false));
                }
            }
        }
        this.layer = next;
        this.depth += 1;
        if let Some(m) = meet {
            let left = fwd.path_to(&theory.name, &m);
            let right = bwd.path_to(&theory.name, &m).reversed();
            return ProofSearchOutcome::Proved(left.concat(&right));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::presets;

    fn t(s: &str) -> Term {
        s.parse().unwrap()
    }

    fn maltsev_prime() -> Theory {
        Theory::from_strs(
            "maltsev'",
            &[("p", 3)],
            &[
                "p(x,y,y) = x",
                "p(y,y,x) = x",
                "p(u,y,z) = p(v,y,z)",
                "p(x,u,z) = p(x,v,z)",
                "p(x,y,u) = p(x,y,v)",
            ],
        )
    }

    fn step(eq: &str, dir: Direction, pos: Vec<usize>, subst: &[(&str, &str)]) -> Step {
        Step {
            equation: eq.parse().unwrap(),
            direction: dir,
            position: pos.into(),
            subst: subst.iter().map(|(v, s)| (Var::new(v), t(s))).collect(),
        }
    }

    /// x ≈ p(x,y,y) ≈ p(y,y,y) ≈ y
    fn example_chain() -> Derivation {
        Derivation {
            theory: "maltsev'".into(),
            terms: vec![t("x"), t("p(x,y,y)"), t("p(y,y,y)"), t("y")],
            steps: vec![
                step(
                    "p(x,y,y) = x",
                    Direction::Reverse,
                    vec![],
                    &[("x", "x"), ("y", "y")],
                ),
                step(
                    "p(u,y,z) = p(v,y,z)",
                    Direction::Forward,
                    vec![],
                    &[("u", "x"), ("v", "y"), ("y", "y"), ("z", "y")],
                ),
                step(
                    "p(x,y,y) = x",
                    Direction::Forward,
                    vec![],
                    &[("x", "y"), ("y", "y")],
                ),
            ],
            reflexive: false,
        }
    }

    #[test]
    fn verifies_example_chain() {
        verify_derivation(&maltsev_prime(), &example_chain()).unwrap();
    }

    #[test]
    fn single_term_verifies() {
        let d = Derivation::trivial("any", t("p(x,y,z)"));
        verify_derivation(&presets::maltsev(), &d).unwrap();
    }

    #[test]
    fn corrupted_position_is_pinpointed() {
        let mut d = example_chain();
        d.steps[1].position = vec![1].into();
        let err = verify_derivation(&maltsev_prime(), &d).unwrap_err();
        assert_eq!(err.step, Some(1));
    }

    #[test]
    fn reflexive_steps_need_flag() {
        let mut d = Derivation::trivial("m", t("p(x,y,y)"));
        d.push(Step::reflexive(vec![2].into(), t("y")), t("p(x,y,y)"));
        assert!(verify_derivation(&presets::maltsev(), &d).is_err());
        d.reflexive = true;
        verify_derivation(&presets::maltsev(), &d).unwrap();
    }

    #[test]
    fn json_round_trip() {
        let d = example_chain();
        let back = Derivation::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
        let v: serde_json::Value = serde_json::from_str(&d.to_json()).unwrap();
        assert_eq!(v["steps"][0]["dir"], "rev");
        assert_eq!(v["steps"][1]["subst"]["u"], "x");
        assert!(v.get("reflexive").is_none());
    }

    #[test]
    fn bfs_axiom_in_one_step() {
        let goal: Identity = "p(x,y,y) = x".parse().unwrap();
        let d = bfs_prove(&presets::maltsev(), &goal, &SearchBounds::default());
        let d = d.derivation().expect("proved");
        assert_eq!(d.len(), 1);
        verify_derivation(&presets::maltsev(), d).unwrap();
    }

    #[test]
    fn bfs_maltsev_prime_inconsistent_in_three() {
        let goal: Identity = "x = y".parse().unwrap();
        let th = maltsev_prime();
        let out = bfs_prove(&th, &goal, &SearchBounds::default());
        let d = out.derivation().expect("proved");
        assert_eq!(d.len(), 3);
        assert_eq!(d.first(), &t("x"));
        assert_eq!(d.last(), &t("y"));
        verify_derivation(&th, d).unwrap();
    }

    #[test]
    fn bfs_unknown_for_non_consequence() {
        let goal: Identity = "x = p(y,x,x)".parse().unwrap();
        let bounds = SearchBounds {
            max_terms: 3_000,
            max_depth: 4,
            max_term_size: 10,
        };
        assert!(!bfs_prove(&presets::maltsev(), &goal, &bounds).is_proved());
    }

    #[test]
    fn binding_enumeration_order() {
        let vars = [Var::new("a"), Var::new("b")];
        let mut seen = Vec::new();
        for_each_binding(&vars, &[0, 1, 2], &mut |b| seen.push(b.to_vec()));
        assert_eq!(seen.len(), 9);
        assert_eq!(seen[0], vec![0, 0]);
        assert_eq!(seen[1], vec![0, 1]);
        assert_eq!(seen[8], vec![2, 2]);
        let mut n = 0;
        for_each_binding(&[], &[0, 1], &mut |_| n += 1);
        assert_eq!(n, 1);
    }
}
