mod common;

use std::collections::HashMap;

use linvar_core::derive::{iterate, Operator};
use linvar_core::{
    match_term, parse_theory, presets, render_theory, theory_equal, Identity, Position,
    Substitution, Term, Var,
};
use proptest::prelude::*;

fn var() -> impl Strategy<Value = Term> {
    prop_oneof![Just("x"), Just("y"), Just("z"), Just("w")].prop_map(Term::var)
}

fn term() -> impl Strategy<Value = Term> {
    var().prop_recursive(4, 32, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Term::app("g", vec![a])),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::app("f", vec![a, b])),
            (inner.clone(), inner.clone(), inner)
                .prop_map(|(a, b, c)| Term::app("h", vec![a, b, c])),
        ]
    })
}

fn subst() -> impl Strategy<Value = Substitution> {
    proptest::collection::btree_map(prop_oneof![Just("x"), Just("y"), Just("z")], term(), 0..3)
        .prop_map(|m| m.into_iter().map(|(k, v)| (Var::new(k), v)).collect())
}

fn term_and_position() -> impl Strategy<Value = (Term, Position)> {
    term().prop_flat_map(|t| {
        let ps = t.positions();
        (Just(t), proptest::sample::select(ps))
    })
}

proptest! {
    #[test]
    fn replace_then_read_back((t, p) in term_and_position(), u in term()) {
        let r = t.replace_at(&p, u.clone()).unwrap();
        prop_assert_eq!(r.subterm_at(&p).unwrap(), &u);
        let same = t.replace_at(&p, t.subterm_at(&p).unwrap().clone()).unwrap();
        prop_assert_eq!(same, t);
    }

    #[test]
    fn substitution_composes(t in term(), s in subst(), u in subst()) {
        prop_assert_eq!(t.apply(&s).apply(&u), t.apply(&s.then(&u)));
    }

    #[test]
    fn canonical_rename_is_idempotent(t in term()) {
        let c = t.canonical_rename();
        prop_assert_eq!(c.canonical_rename(), c);
    }

    #[test]
    fn canonical_rename_ignores_injective_renaming(t in term()) {
        let map: HashMap<Var, Var> = ["x", "y", "z", "w"]
            .iter()
            .zip(["b", "d", "a", "c"])
            .map(|(a, b)| (Var::new(a), Var::new(b)))
            .collect();
        prop_assert_eq!(t.rename(&map).canonical_rename(), t.canonical_rename());
    }

    #[test]
    fn matching_recovers_the_substitution(t in term(), s in subst()) {
        let got = match_term(&t, &t.apply(&s)).expect("instance matches");
        let vars = t.variables();
        for v in &vars {
            let want = s.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone()));
            prop_assert_eq!(got.get(v), Some(&want));
        }
        prop_assert_eq!(got.len(), vars.len());
    }

    #[test]
    fn identity_canonicalization_is_idempotent(a in term(), b in term()) {
        let e = Identity::new(a, b);
        let c = e.canonicalize();
        prop_assert_eq!(c.canonicalize(), c.clone());
        prop_assert_eq!(e.flipped().canonicalize(), c);
    }

    #[test]
    fn term_display_parses_back(t in term()) {
        prop_assert_eq!(t.to_string().parse::<Term>().unwrap(), t);
    }
}

#[test]
fn render_parse_round_trip_on_presets_and_stages() {
    for th in presets::all() {
        let mut all = vec![th.clone()];
        for op in [Operator::Derivative, Operator::OrderDerivative] {
            all.extend(
                iterate(&th, op)
                    .unwrap()
                    .stages
                    .into_iter()
                    .map(|s| s.theory),
            );
        }
        for s in all {
            let back = parse_theory(&render_theory(&s)).unwrap();
            assert!(theory_equal(&s, &back).unwrap(), "{}", s.name);
        }
    }
}

#[test]
fn theory_equal_is_an_equivalence() {
    let a = presets::maltsev();
    let b = parse_theory(&render_theory(&a)).unwrap();
    let c = linvar_core::Theory::from_strs("c", &[("p", 3)], &["p(y,y,x) = x", "x = p(x,z,z)"]);
    assert!(theory_equal(&a, &a).unwrap());
    assert!(theory_equal(&a, &b).unwrap() && theory_equal(&b, &a).unwrap());
    assert!(theory_equal(&b, &c).unwrap() && theory_equal(&a, &c).unwrap());
}

#[test]
fn join_is_commutative_and_associative_up_to_renaming() {
    use linvar_core::join_disjoint;
    let (a, b, c) = (
        presets::maltsev(),
        presets::semilattice(),
        presets::majority(),
    );
    let ab = join_disjoint(&a, &b);
    let ba = join_disjoint(&b, &a);
    assert!(theory_equal(&ab, &ba).unwrap());
    // `m` clashes between the semilattice and majority; compare after renaming back.
    let left = join_disjoint(&ab, &c);
    let right = join_disjoint(&a, &join_disjoint(&b, &c));
    assert_eq!(left.len(), right.len());
    assert!(theory_equal(&left, &right).unwrap());
}

#[test]
fn presets_are_linear_and_idempotent() {
    for th in presets::all() {
        let r = linvar_core::validate(&th).unwrap();
        assert!(r.is_linear_idempotent(), "{}", th.name);
    }
}
