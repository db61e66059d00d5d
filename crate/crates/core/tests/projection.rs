mod common;

use std::collections::HashSet;

use common::*;
use linvar_core::error::Error;
use linvar_core::project::{
    build_successor_graph, mark_t, project_to_component, z_substituted_derivation,
};
use linvar_core::theory::join_components;
use linvar_core::{
    bfs_prove, join_disjoint, presets, verify_derivation, Derivation, SearchBounds, Term,
};

#[test]
fn successor_edges_relate_equal_terms() {
    let bounds = SearchBounds {
        max_terms: 4000,
        ..SearchBounds::small()
    };
    let mut checked = HashSet::new();
    for (a, b, d) in projection_corpus() {
        let join = join_disjoint(&a, &b);
        let g = build_successor_graph(&d);
        for e in &g.edges {
            let (u, v) = (&g.nodes[e.from], &g.nodes[e.to]);
            let su = d.terms[u.index].get(&u.position).unwrap().clone();
            let sv = d.terms[v.index].get(&v.position).unwrap().clone();
            if su == sv || !checked.insert((join.name.clone(), su.clone(), sv.clone())) {
                continue;
            }
            let goal = linvar_core::Identity::new(su, sv);
            assert!(
                bfs_prove(&join, &goal, &bounds).is_proved(),
                "{goal} in {}",
                join.name
            );
        }
    }
    assert!(!checked.is_empty());
}

#[test]
fn z_substitution_keeps_derivations_valid() {
    for (a, b, d) in projection_corpus() {
        let join = join_disjoint(&a, &b);
        let marks = mark_t(&d);
        let z = z_substituted_derivation(&join, &d, &marks).unwrap();
        verify_derivation(&join, &z).unwrap();
        assert!(z
            .first()
            .children()
            .iter()
            .all(|c| c == &z.first().children()[0]));
    }
}

#[test]
fn marks_reach_the_final_variable() {
    for (_, _, d) in projection_corpus() {
        let marks = mark_t(&d);
        let y = d.last().clone();
        let hit = marks
            .members
            .iter()
            .any(|(i, p)| d.terms[*i].get(p) == Some(&y));
        assert!(hit, "{d}");
    }
}

#[test]
fn projections_are_flat_owner_derivations() {
    for (a, b, d) in projection_corpus() {
        let p = project_to_component(&a, &b, &d).unwrap();
        let (l, r) = join_components(&a, &b);
        let owner = if p.owner == l.name { l } else { r };
        verify_derivation(&owner, &p.derivation).unwrap();
        assert!(p.derivation.terms.iter().all(Term::is_flat));
        assert_eq!(p.derivation.first(), d.first());
        assert_eq!(p.derivation.last(), d.last());
    }
}

#[test]
fn leaving_the_signature_still_projects() {
    let d = foreign_collapse_example();
    let p = project_to_component(&presets::maltsev(), &presets::semilattice(), &d).unwrap();
    assert_eq!(p.derivation.terms, vec![t("p(y,x,x)"), t("y")]);
}

#[test]
fn owner_must_be_unique_and_shape_exact() {
    let (m, s) = (presets::maltsev(), presets::semilattice());
    let not_flat = hand_example().reversed();
    assert!(matches!(
        project_to_component(&m, &s, &not_flat),
        Err(Error::NotAProjectionInstance(_))
    ));
    let zero = Derivation::trivial("j", t("p(x,y,y)"));
    assert!(matches!(
        project_to_component(&m, &s, &zero),
        Err(Error::NotAProjectionInstance(_))
    ));
}

#[test]
fn unmarked_target_reports_an_inconsistency() {
    // p(x,x,x) ≈ x ≈ p(x,x,x) ≈ p(y,x,x) ≈ y: the marks from the root never reach y.
    let a = linvar_core::derive::derivative(&presets::maltsev()).unwrap();
    let b = presets::semilattice();
    let join = join_disjoint(&a, &b);
    let xy = linvar_core::flatsat::is_inconsistent(&a).unwrap();
    let xy = xy.derivation().unwrap().clone();
    assert_eq!(xy.terms[1], t("p(x,x,x)"));
    let mut d = Derivation::trivial("j", t("p(x,x,x)"));
    d.push(xy.steps[0].reversed(), t("x"));
    let d = d.concat(&xy);
    verify_derivation(&join, &d).unwrap();
    match project_to_component(&a, &b, &d) {
        Err(Error::InconsistencyDetected(cert)) => {
            verify_derivation(&join, &cert).unwrap();
            assert!(cert.first().is_var() && cert.last().is_var() && cert.first() != cert.last());
        }
        other => panic!("{other:?}"),
    }
}
