//! Corpora and helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use linvar_core::derive::{iterate, Operator};
use linvar_core::flatsat::{canonical_tuples, saturate};
use linvar_core::theory::join_components;
use linvar_core::{
    bfs_prove, join_disjoint, match_term, presets, verify_derivation, Derivation, Direction,
    Identity, Position, SearchBounds, Step, Substitution, Term, Theory, Var,
};

pub fn t(s: &str) -> Term {
    s.parse().unwrap()
}

pub fn eq(s: &str) -> Identity {
    s.parse().unwrap()
}

/// Presets plus every stage of both iterations.
pub fn stage_corpus() -> Vec<Theory> {
    let mut out = Vec::new();
    for th in presets::all() {
        out.push(th.clone());
        for op in [Operator::Derivative, Operator::OrderDerivative] {
            let trace = iterate(&th, op).unwrap();
            for s in trace.stages.iter().skip(1) {
                out.push(s.theory.clone());
            }
        }
    }
    out
}

/// `x ≈ F(w)` for every symbol and canonical tuple, plus `x ≈ y`.
pub fn flat_goals(theory: &Theory) -> Vec<Identity> {
    let mut goals = vec![eq("x = y")];
    for (f, n) in theory.signature().iter() {
        for w in canonical_tuples(n) {
            goals.push(linvar_core::derive::fact_identity(f.name(), &w));
        }
    }
    goals
}

/// Equal term sequences under one injective variable renaming.
pub fn same_up_to_renaming(a: &[Term], b: &[Term]) -> bool {
    fn walk(a: &Term, b: &Term, fwd: &mut HashMap<Var, Var>, back: &mut HashMap<Var, Var>) -> bool {
        match (a, b) {
            (Term::Var(x), Term::Var(y)) => {
                fwd.entry(x.clone()).or_insert_with(|| y.clone()) == y
                    && back.entry(y.clone()).or_insert_with(|| x.clone()) == x
            }
            (Term::App(f, xs), Term::App(g, ys)) => {
                f == g
                    && xs.len() == ys.len()
                    && xs.iter().zip(ys).all(|(x, y)| walk(x, y, fwd, back))
            }
            _ => false,
        }
    }
    let (mut fwd, mut back) = (HashMap::new(), HashMap::new());
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| walk(x, y, &mut fwd, &mut back))
}

/// Up to renaming, read in either direction.
pub fn matches_chain(d: &Derivation, chain: &[&str]) -> bool {
    let want: Vec<Term> = chain.iter().map(|s| t(s)).collect();
    let rev: Vec<Term> = want.iter().rev().cloned().collect();
    same_up_to_renaming(&d.terms, &want) || same_up_to_renaming(&d.terms, &rev)
}

fn step(e: &str, dir: Direction, pos: Vec<usize>, subst: &[(&str, &str)]) -> Step {
    Step {
        equation: eq(e),
        direction: dir,
        position: pos.into(),
        subst: subst.iter().map(|(v, s)| (Var::new(v), t(s))).collect(),
    }
}

/// `p(x,y,y) ≈ p(x,m(y,y),y) ≈ p(x,m(y,y),m(y,y)) ≈ x` over Maltsev and semilattice.
pub fn hand_example() -> Derivation {
    let mut d = Derivation::trivial("maltsev+semilattice", t("p(x,y,y)"));
    d.push(
        step("m(v,v) = v", Direction::Reverse, vec![2], &[("v", "y")]),
        t("p(x,m(y,y),y)"),
    );
    d.push(
        step("m(v,v) = v", Direction::Reverse, vec![3], &[("v", "y")]),
        t("p(x,m(y,y),m(y,y))"),
    );
    d.push(
        step(
            "p(v,w,w) = v",
            Direction::Forward,
            vec![],
            &[("v", "x"), ("w", "m(y,y)")],
        ),
        t("x"),
    );
    d
}

/// A chain that leaves the owner's signature before reaching `y`:
/// `p(y,x,x) ≈ p(m(y,y),x,x) ≈ m(y,y) ≈ y`.
pub fn foreign_collapse_example() -> Derivation {
    let mut d = Derivation::trivial("maltsev+semilattice", t("p(y,x,x)"));
    d.push(
        step("m(v,v) = v", Direction::Reverse, vec![1], &[("v", "y")]),
        t("p(m(y,y),x,x)"),
    );
    d.push(
        step(
            "p(v,w,w) = v",
            Direction::Forward,
            vec![],
            &[("v", "m(y,y)"), ("w", "x")],
        ),
        t("m(y,y)"),
    );
    d.push(
        step("m(v,v) = v", Direction::Forward, vec![], &[("v", "y")]),
        t("y"),
    );
    d
}

/// `v ≈ g(v,...,v)` inside `theory`.
fn expansion(theory: &Theory, g: &str, v: &Var) -> Derivation {
    let n = theory.signature().arity(&linvar_core::Sym::new(g)).unwrap();
    let goal = Identity::new(
        Term::Var(v.clone()),
        Term::app(g, vec![Term::Var(v.clone()); n]),
    );
    let base = saturate(theory, linvar_core::flatsat::default_budget(theory)).unwrap();
    base.derivation(&goal).unwrap().expect("idempotent symbol")
}

/// Wrap a derivation `F(w) ≈ x` so that the variables in `decorate` pass
/// through `g(v,...,v)` from the other component.
fn decorated(owner_deriv: &Derivation, other: &Theory, g: &str, decorate: &[Var]) -> Derivation {
    let start = owner_deriv.first().clone();
    let mut theta = Substitution::new();
    let mut out = Derivation::trivial("join", start.clone());
    for v in decorate {
        let e = expansion(other, g, v);
        theta.insert(v.clone(), e.last().clone());
    }
    for (i, c) in start.children().iter().enumerate() {
        let v = c.as_var().unwrap();
        if decorate.contains(v) {
            let e = expansion(other, g, v);
            let lifted = e.in_context(out.last(), &Position(vec![i + 1])).unwrap();
            out = out.concat(&lifted);
        }
    }
    out = out.concat(&owner_deriv.instantiate(&theta));
    let x = owner_deriv.last().as_var().unwrap();
    if decorate.contains(x) {
        out = out.concat(&expansion(other, g, x).reversed());
    }
    out
}

fn subsets(vars: &[Var]) -> Vec<Vec<Var>> {
    (0..1usize << vars.len())
        .map(|m| {
            vars.iter()
                .enumerate()
                .filter(|(i, _)| m >> i & 1 == 1)
                .map(|(_, v)| v.clone())
                .collect()
        })
        .collect()
}

/// Derivations `F(x1..xn) ≈ y` over joins: `(left, right, derivation)`.
pub fn projection_corpus() -> Vec<(Theory, Theory, Derivation)> {
    let mut out = vec![
        (presets::maltsev(), presets::semilattice(), hand_example()),
        (
            presets::maltsev(),
            presets::semilattice(),
            foreign_collapse_example(),
        ),
    ];
    let pairs = [
        (presets::maltsev(), presets::semilattice(), "m"),
        (presets::majority(), presets::idempotent_binary(), "f"),
        (presets::hagemann_mitschke(2), presets::semilattice(), "m"),
        (presets::jonsson(3), presets::maltsev(), "p"),
    ];
    for (a, b, g) in pairs {
        let base = saturate(&a, linvar_core::flatsat::default_budget(&a)).unwrap();
        for (f, _) in a.signature().iter() {
            for w in base.facts_for(f).unwrap().into_iter().take(3) {
                let fact = linvar_core::derive::fact_identity(f.name(), &w);
                let goal = fact.flipped();
                let d = base
                    .derivation(&goal)
                    .unwrap()
                    .expect("fact has a derivation");
                let vars = goal.variables();
                for s in subsets(&vars).into_iter().skip(1).take(3) {
                    let dd = decorated(&d, &b, g, &s);
                    // Owner on the left and, mirrored, on the right.
                    out.push((a.clone(), b.clone(), dd.clone()));
                    let (_, rb) = join_components(&b, &a);
                    if rb.signature().contains(f) {
                        out.push((b.clone(), a.clone(), dd));
                    }
                }
            }
        }
    }
    for (a, b, goal) in [
        (presets::maltsev(), presets::semilattice(), "p(x,y,y) = x"),
        (presets::maltsev(), presets::semilattice(), "p(y,y,x) = x"),
        (
            presets::majority(),
            presets::idempotent_binary(),
            "m(x,x,y) = x",
        ),
        (
            presets::hagemann_mitschke(2),
            presets::semilattice(),
            "q2(x,x,y) = y",
        ),
    ] {
        let join = join_disjoint(&a, &b);
        let d = bfs_prove(&join, &eq(goal), &SearchBounds::small());
        out.push((
            a,
            b,
            d.derivation()
                .expect("bfs proves an axiom instance")
                .clone(),
        ));
    }
    for (a, b, d) in &out {
        verify_derivation(&join_disjoint(a, b), d)
            .unwrap_or_else(|e| panic!("corpus derivation invalid: {e}\n{d}"));
    }
    out
}

/// Search-produced derivations with the theory they verify against.
pub fn derivation_corpus() -> Vec<(Theory, Derivation)> {
    let mut out = Vec::new();
    for th in presets::all() {
        let base = saturate(&th, linvar_core::flatsat::default_budget(&th)).unwrap();
        for goal in flat_goals(&th).into_iter().take(12) {
            if let Some(d) = base.derivation(&goal).unwrap() {
                out.push((th.clone(), d));
            }
        }
        for op in [Operator::Derivative, Operator::OrderDerivative] {
            let trace = iterate(&th, op).unwrap();
            for s in &trace.stages {
                if let Some(c) = &s.certificate {
                    out.push((s.theory.clone(), c.clone()));
                }
            }
        }
    }
    let mp = linvar_core::derive::derivative(&presets::maltsev()).unwrap();
    if let Some(d) = bfs_prove(&mp, &eq("x = y"), &SearchBounds::small()).derivation() {
        out.push((mp, d.clone()));
    }
    for (a, b, d) in projection_corpus() {
        out.push((join_disjoint(&a, &b), d));
    }
    out
}

/// Single-field mutations of `d`, each labelled; identical results are skipped.
pub fn mutations(theory: &Theory, d: &Derivation) -> Vec<(String, Derivation)> {
    let mut out = Vec::new();
    let mut add = |label: String, m: Derivation| {
        if m != *d {
            out.push((label, m));
        }
    };
    let q = Term::var("q_mut");
    for (i, s) in d.steps.iter().enumerate() {
        let (l, r) = s.oriented();
        let redex = l.apply(&s.subst);
        // Reorienting a step whose sides instantiate to the same term changes nothing.
        if redex != r.apply(&s.subst) {
            let mut m = d.clone();
            m.steps[i].direction = s.direction.flip();
            add(format!("step {i} direction"), m);
            let mut m = d.clone();
            m.steps[i].equation = s.equation.flipped();
            add(format!("step {i} equation flipped"), m);
        }
        // Other members only when neither side matches the redex.
        let others = theory.identities().enumerate().filter(|(_, e)| {
            **e != s.equation
                && match_term(&e.lhs, &redex).is_none()
                && match_term(&e.rhs, &redex).is_none()
        });
        for (k, e) in others.take(2) {
            let mut m = d.clone();
            m.steps[i].equation = e.clone();
            add(format!("step {i} equation {k}"), m);
        }
        let outsider = Identity::new(s.equation.lhs.clone(), q.clone());
        if !theory.contains(&outsider) {
            let mut m = d.clone();
            m.steps[i].equation = outsider;
            add(format!("step {i} equation outside the theory"), m);
        }

        let pre = &d.terms[i];
        for p in pre
            .positions()
            .into_iter()
            .filter(|p| *p != s.position)
            .take(3)
        {
            let mut m = d.clone();
            m.steps[i].position = p.clone();
            add(format!("step {i} position {p}"), m);
        }
        let mut m = d.clone();
        m.steps[i].position = s.position.child(9);
        add(format!("step {i} position out of range"), m);

        for (v, val) in s.subst.iter() {
            let mut m = d.clone();
            m.steps[i].subst.insert(v.clone(), q.clone());
            add(format!("step {i} subst {v} fresh"), m);
            let mut m = d.clone();
            m.steps[i].subst.remove(v);
            add(format!("step {i} subst {v} removed"), m);
            if let Term::App(f, cs) = val {
                let mut m = d.clone();
                m.steps[i].subst.insert(
                    v.clone(),
                    Term::App(f.clone(), cs.iter().rev().cloned().collect()),
                );
                add(format!("step {i} subst {v} permuted"), m);
            }
        }
        let mut m = d.clone();
        m.steps[i].subst.insert(Var::new("extra_mut"), q.clone());
        add(format!("step {i} subst extra"), m);
    }
    for (j, term) in d.terms.iter().enumerate() {
        for p in term
            .positions()
            .into_iter()
            .filter(|p| term.get(p).unwrap().is_var())
            .take(3)
        {
            let mut m = d.clone();
            m.terms[j] = term.replace_at(&p, q.clone()).unwrap();
            add(format!("term {j} leaf {p}"), m);
        }
        if let Term::App(f, cs) = term {
            if cs.len() > 1 {
                let mut m = d.clone();
                m.terms[j] = Term::App(f.clone(), cs.iter().rev().cloned().collect());
                add(format!("term {j} children reversed"), m);
            }
        }
    }
    out
}
