//! Projection of a derivation of `F(x1, ..., xn) ≈ y` over a disjoint join
//! onto the component owning `F`.
//!
//! Occurrences of a derivation are pairs (term index, position). A successor
//! relation links each occurrence to the occurrences it is transported to by
//! a neighbouring rewrite step. Following it from the root of the first term
//! to an occurrence of `y` yields a chain of terms whose heads stay in the
//! owner's signature until the first collapsing step; flattening the chain by
//! a class assignment of its children gives a flat derivation inside the
//! owner theory.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flatsat::{default_budget, saturate};
use crate::rewrite::{verify_derivation, Derivation, Step};
use crate::term::{fresh_var, match_into, Position, Substitution, Term, Var};
use crate::theory::{join_components, join_disjoint, Identity, Theory};
use crate::unionfind::UnionFind;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DerivationOccurrence {
    pub index: usize,
    pub position: Position,
}

/// Which rule of the successor relation produced an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Case {
    /// Disjoint from the rewritten occurrence.
    Disjoint = 1,
    /// Strictly above the rewritten occurrence.
    Above = 2,
    /// Inside the part matched by a variable (including a bare variable left side).
    Transport = 3,
    /// The rewritten occurrence itself, left side an application.
    Root = 4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SuccessorEdge {
    pub from: usize,
    pub to: usize,
    pub case: Case,
    /// Step number `j` (1-based): the rewrite between terms `j-1` and `j`.
    pub step: usize,
    /// Traversed from term `j-1` to term `j`.
    pub forward: bool,
}

#[derive(Clone, Debug)]
pub struct SuccessorGraph {
    pub nodes: Vec<DerivationOccurrence>,
    index: HashMap<(usize, Position), usize>,
    pub edges: Vec<SuccessorEdge>,
    out: Vec<Vec<usize>>,
}

impl SuccessorGraph {
    pub fn node(&self, index: usize, position: &Position) -> Option<usize> {
        self.index.get(&(index, position.clone())).copied()
    }

    /// Edge indices leaving node `n`.
    pub fn successors(&self, n: usize) -> &[usize] {
        &self.out[n]
    }

    /// Targets of edges leaving the occurrence `(index, position)`, with their cases.
    pub fn targets(&self, index: usize, position: &Position) -> Vec<(DerivationOccurrence, Case)> {
        match self.node(index, position) {
            Some(n) => self.out[n]
                .iter()
                .map(|&e| (self.nodes[self.edges[e].to].clone(), self.edges[e].case))
                .collect(),
            None => Vec::new(),
        }
    }
}

fn positions_of(t: &Term, v: &Var) -> Vec<Position> {
    t.positions()
        .into_iter()
        .filter(|p| t.get(p).and_then(Term::as_var) == Some(v))
        .collect()
}

/// The generating successor relation of `d`, both step directions.
pub fn build_successor_graph(d: &Derivation) -> SuccessorGraph {
    let mut nodes = Vec::new();
    let mut index = HashMap::new();
    for (i, t) in d.terms.iter().enumerate() {
        for p in t.positions() {
            index.insert((i, p.clone()), nodes.len());
            nodes.push(DerivationOccurrence {
                index: i,
                position: p,
            });
        }
    }
    let mut edges = Vec::new();
    for (j0, step) in d.steps.iter().enumerate() {
        let j = j0 + 1;
        let (l, r) = step.oriented();
        for (a, b, from, to, forward) in [(j0, j, l, r, true), (j, j0, r, l, false)] {
            let at = &step.position;
            let mut push = |u: &Position, target: Position, case: Case, tb: usize| {
                let to = index[&(tb, target)];
                edges.push(SuccessorEdge {
                    from: index[&(a, u.clone())],
                    to,
                    case,
                    step: j,
                    forward,
                });
            };
            for u in d.terms[a].positions() {
                if u.is_prefix_of(at) && u != *at {
                    push(&u, u.clone(), Case::Above, b);
                } else if !at.is_prefix_of(&u) {
                    push(&u, u.clone(), Case::Disjoint, b);
                } else if u == *at && !from.is_var() {
                    push(&u, at.clone(), Case::Root, b);
                } else {
                    // `u` lies in the part matched by a variable `w` of `from`.
                    let below = u.strip_prefix(at).expect("below the redex");
                    let (w, rel) = match from {
                        Term::Var(w) => (w.clone(), below),
                        Term::App(_, cs) => {
                            let c = below.0[0];
                            let w = cs[c - 1].as_var().expect("linear equation").clone();
                            (w, Position(below.0[1..].to_vec()))
                        }
                    };
                    for p in positions_of(from, &w) {
                        push(&u, at.concat(&p).concat(&rel), Case::Transport, a);
                    }
                    for p in positions_of(to, &w) {
                        push(&u, at.concat(&p).concat(&rel), Case::Transport, b);
                    }
                }
            }
        }
    }
    let mut out = vec![Vec::new(); nodes.len()];
    for (k, e) in edges.iter().enumerate() {
        out[e.from].push(k);
    }
    SuccessorGraph {
        nodes,
        index,
        edges,
        out,
    }
}

/// Occurrences reachable from the root of the first term.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MarkSet {
    pub members: HashSet<(usize, Position)>,
}

impl MarkSet {
    pub fn contains(&self, index: usize, position: &Position) -> bool {
        self.members.contains(&(index, position.clone()))
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Some marked ancestor-or-self of `(index, position)`.
    pub fn covers(&self, index: usize, position: &Position) -> bool {
        (0..=position.len()).any(|k| self.contains(index, &Position(position.0[..k].to_vec())))
    }
}

pub fn mark_t(d: &Derivation) -> MarkSet {
    mark_in(&build_successor_graph(d))
}

fn mark_in(g: &SuccessorGraph) -> MarkSet {
    let start = g.node(0, &Position::root()).expect("root occurrence");
    let mut seen = vec![false; g.nodes.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for &e in g.successors(n) {
            let to = g.edges[e].to;
            if !seen[to] {
                seen[to] = true;
                queue.push_back(to);
            }
        }
    }
    MarkSet {
        members: seen
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(n, _)| (g.nodes[n].index, g.nodes[n].position.clone()))
            .collect(),
    }
}

fn derivation_vars(d: &Derivation) -> Vec<Var> {
    let mut vars = Vec::new();
    for t in &d.terms {
        for v in t.variables() {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
    }
    vars
}

fn z_term(t: &Term, index: usize, at: &mut Vec<usize>, marks: &MarkSet, z: &Var) -> Term {
    match t {
        Term::Var(_) if marks.covers(index, &Position(at.clone())) => Term::Var(z.clone()),
        Term::Var(_) => t.clone(),
        Term::App(f, cs) => Term::App(
            f.clone(),
            cs.iter()
                .enumerate()
                .map(|(i, c)| {
                    at.push(i + 1);
                    let out = z_term(c, index, at, marks, z);
                    at.pop();
                    out
                })
                .collect(),
        ),
    }
}

/// Replace every variable lying under a marked occurrence by a fresh `z`.
/// The result is checked against `theory`.
pub fn z_substituted_derivation(
    theory: &Theory,
    d: &Derivation,
    marks: &MarkSet,
) -> Result<Derivation> {
    let vars = derivation_vars(d);
    let z = fresh_var("z", &|v: &Var| vars.contains(v));
    let terms: Vec<Term> = d
        .terms
        .iter()
        .enumerate()
        .map(|(i, t)| z_term(t, i, &mut Vec::new(), marks, &z))
        .collect();
    let mut steps = Vec::with_capacity(d.steps.len());
    for (i, s) in d.steps.iter().enumerate() {
        let (from, to) = s.oriented();
        let mut subst = Substitution::new();
        let matched = terms[i]
            .get(&s.position)
            .zip(terms[i + 1].get(&s.position))
            .is_some_and(|(pre, post)| {
                match_into(from, pre, &mut subst) && match_into(to, post, &mut subst)
            });
        if !matched {
            return Err(Error::MalformedDerivation(format!(
                "z-substitution broke step {i}"
            )));
        }
        steps.push(Step { subst, ..s.clone() });
    }
    let out = Derivation {
        theory: d.theory.clone(),
        terms,
        steps,
        reflexive: d.reflexive,
    };
    verify_derivation(theory, &out)
        .map_err(|e| Error::MalformedDerivation(format!("z-substitution: {e}")))?;
    Ok(out)
}

/// A projected derivation with the chain it was read from.
#[derive(Clone, Debug, Serialize)]
pub struct Projection {
    pub owner: String,
    pub symbol: String,
    pub chain: Vec<DerivationOccurrence>,
    pub cases: Vec<Case>,
    pub derivation: Derivation,
}

/// Union-find over chain children with an explanation per union.
struct Classes {
    uf: UnionFind,
    keys: HashMap<(usize, Position), usize>,
    vars: HashMap<Var, usize>,
    terms: Vec<Term>,
    /// `(a, b, derivation from term(a) to term(b))`.
    links: Vec<(usize, usize, Derivation)>,
}

impl Classes {
    fn new() -> Self {
        Classes {
            uf: UnionFind::new(0),
            keys: HashMap::new(),
            vars: HashMap::new(),
            terms: Vec::new(),
            links: Vec::new(),
        }
    }

    fn var_node(&mut self, v: &Var) -> usize {
        if let Some(&n) = self.vars.get(v) {
            return n;
        }
        let n = self.uf.push();
        self.terms.push(Term::Var(v.clone()));
        self.vars.insert(v.clone(), n);
        n
    }

    /// Node for the subterm at `rel` of chain element `i`.
    fn node(&mut self, i: usize, rel: Position, term: &Term) -> usize {
        if let Some(&n) = self.keys.get(&(i, rel.clone())) {
            return n;
        }
        let n = self.uf.push();
        self.terms.push(term.clone());
        self.keys.insert((i, rel), n);
        if let Term::Var(v) = term {
            let vn = self.var_node(v);
            self.unite(n, vn, Derivation::trivial("", term.clone()));
        }
        n
    }

    fn unite(&mut self, a: usize, b: usize, why: Derivation) {
        debug_assert_eq!(why.first(), &self.terms[a]);
        debug_assert_eq!(why.last(), &self.terms[b]);
        self.uf.union(a, b);
        self.links.push((a, b, why));
    }

    /// Derivation between two nodes of one class through the union links.
    fn explain(&self, from: usize, to: usize, theory: &str) -> Derivation {
        let mut adj: HashMap<usize, Vec<(usize, usize, bool)>> = HashMap::new();
        for (k, (a, b, _)) in self.links.iter().enumerate() {
            adj.entry(*a).or_default().push((*b, k, true));
            adj.entry(*b).or_default().push((*a, k, false));
        }
        let mut parent: HashMap<usize, (usize, usize, bool)> = HashMap::new();
        let mut queue = VecDeque::from([from]);
        parent.insert(from, (from, usize::MAX, true));
        while let Some(n) = queue.pop_front() {
            if n == to {
                break;
            }
            for &(m, k, fwd) in adj.get(&n).into_iter().flatten() {
                if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(m) {
                    e.insert((n, k, fwd));
                    queue.push_back(m);
                }
            }
        }
        let mut hops = Vec::new();
        let mut cur = to;
        while cur != from {
            let (p, k, fwd) = parent[&cur];
            hops.push((k, fwd));
            cur = p;
        }
        hops.reverse();
        let mut d = Derivation::trivial(theory, self.terms[from].clone());
        for (k, fwd) in hops {
            let piece = if fwd {
                self.links[k].2.clone()
            } else {
                self.links[k].2.reversed()
            };
            d = d.concat(&Derivation {
                theory: theory.to_owned(),
                ..piece
            });
        }
        d
    }
}

/// One step of `d` read from `t_a` to `t_b` (`forward` when `b = a + 1`),
/// restricted to the subterm at `at` (a prefix of the step position).
fn local_step(d: &Derivation, edge: &SuccessorEdge, at: &Position) -> Derivation {
    let j0 = edge.step - 1;
    let step = &d.steps[j0];
    let (a, b) = if edge.forward {
        (j0, j0 + 1)
    } else {
        (j0 + 1, j0)
    };
    let rel = step.position.strip_prefix(at).expect("step below `at`");
    let s = Step {
        position: rel,
        direction: if edge.forward {
            step.direction
        } else {
            step.direction.flip()
        },
        ..step.clone()
    };
    let mut out = Derivation::trivial(d.theory.clone(), d.terms[a].get(at).expect("valid").clone());
    out.push(s, d.terms[b].get(at).expect("valid").clone());
    out
}

/// Project `d`, a derivation of `F(x1, ..., xn) ≈ y` over the join of
/// `left` and `right`, onto the component owning `F`. The result uses only
/// that component's identities and `v ≈ v`, and every term is flat.
pub fn project_to_component(left: &Theory, right: &Theory, d: &Derivation) -> Result<Projection> {
    let (l, r) = join_components(left, right);
    let join = join_disjoint(left, right);
    verify_derivation(&join, d).map_err(|e| Error::MalformedDerivation(e.to_string()))?;
    let (f, y) = match (d.first(), d.last()) {
        (Term::App(f, cs), Term::Var(y)) if cs.iter().all(Term::is_var) => (f.clone(), y.clone()),
        (a, b) => {
            return Err(Error::NotAProjectionInstance(format!(
                "expected F(x1,...,xn) = y, got {a} = {b}"
            )))
        }
    };
    let owner = match (l.signature().contains(&f), r.signature().contains(&f)) {
        (true, true) => return Err(Error::OwnerAmbiguous(f.name().to_owned())),
        (true, false) => &l,
        (false, true) => &r,
        (false, false) => {
            return Err(Error::UnknownSymbol {
                symbol: f.name().to_owned(),
                line: None,
            })
        }
    };

    let g = build_successor_graph(d);
    let Some((chain, cases)) = shortest_chain(&g, d, &y) else {
        return Err(inconsistency(&join, owner, d, &g));
    };

    // Chain terms and the step between consecutive ones.
    let r_terms: Vec<&Term> = chain
        .iter()
        .map(|&n| {
            d.terms[g.nodes[n].index]
                .get(&g.nodes[n].position)
                .expect("valid")
        })
        .collect();
    let k = chain.len() - 1;
    let collapse = (0..k)
        .find(|&i| cases[i].case == Case::Root && step_sides(d, &cases[i]).1.is_var())
        .expect("a chain from an application to a variable collapses somewhere");

    let mut cl = Classes::new();
    let whole: Vec<usize> = (0..=k)
        .map(|i| cl.node(i, Position::root(), r_terms[i]))
        .collect();
    for i in 0..k {
        let e = &cases[i];
        let at = &g.nodes[chain[i]].position;
        let why = match e.case {
            Case::Disjoint | Case::Transport => {
                Derivation::trivial(d.theory.clone(), r_terms[i].clone())
            }
            Case::Above | Case::Root => local_step(d, e, at),
        };
        cl.unite(whole[i], whole[i + 1], why);
    }
    cl.node(k, Position::root(), r_terms[k]);
    for i in 0..=collapse {
        let e = &cases[i];
        let (ri, rn) = (r_terms[i], r_terms[i + 1]);
        let kids: Vec<usize> = ri
            .children()
            .iter()
            .enumerate()
            .map(|(c, t)| cl.node(i, Position(vec![c + 1]), t))
            .collect();
        match e.case {
            Case::Disjoint | Case::Transport | Case::Above => {
                let at = &g.nodes[chain[i]].position;
                let inner = d.steps[e.step - 1].position.strip_prefix(at);
                for (c, t) in rn.children().iter().enumerate() {
                    let n = cl.node(i + 1, Position(vec![c + 1]), t);
                    let affected = e.case == Case::Above
                        && inner
                            .as_ref()
                            .is_some_and(|p| p.0.first() == Some(&(c + 1)));
                    let why = if affected {
                        local_step(d, e, &g.nodes[chain[i]].position.child(c + 1))
                    } else {
                        Derivation::trivial(d.theory.clone(), t.clone())
                    };
                    cl.unite(kids[c], n, why);
                }
            }
            Case::Root => {
                let (from, to) = step_sides(d, e);
                let mut by_var: HashMap<Var, usize> = HashMap::new();
                for (c, v) in from.children().iter().enumerate() {
                    let v = v.as_var().expect("linear equation").clone();
                    match by_var.get(&v) {
                        Some(&n) => cl.unite(
                            n,
                            kids[c],
                            Derivation::trivial(d.theory.clone(), ri.children()[c].clone()),
                        ),
                        None => {
                            by_var.insert(v, kids[c]);
                        }
                    }
                }
                match to {
                    Term::Var(w) => {
                        if let Some(&n) = by_var.get(w) {
                            cl.unite(
                                n,
                                whole[i + 1],
                                Derivation::trivial(d.theory.clone(), rn.clone()),
                            );
                        }
                    }
                    Term::App(_, ws) => {
                        for (c, w) in ws.iter().enumerate() {
                            let w = w.as_var().expect("linear equation");
                            let n = cl.node(i + 1, Position(vec![c + 1]), &rn.children()[c]);
                            match by_var.get(w) {
                                Some(&m) => cl.unite(
                                    m,
                                    n,
                                    Derivation::trivial(d.theory.clone(), rn.children()[c].clone()),
                                ),
                                None => {
                                    by_var.insert(w.clone(), n);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    // Resolve φ.
    let roots = cl.uf.roots();
    let mut class_var: HashMap<usize, (Var, usize)> = HashMap::new();
    let mut named: Vec<(&Var, &usize)> = cl.vars.iter().collect();
    named.sort();
    for (v, &n) in named {
        let root = roots[n];
        if let Some((other, m)) = class_var.get(&root) {
            if other != v {
                let cert = cl.explain(*m, n, &join.name);
                return Err(Error::InconsistencyDetected(Box::new(Derivation {
                    reflexive: d.reflexive,
                    ..cert
                })));
            }
        } else {
            class_var.insert(root, (v.clone(), n));
        }
    }
    let taken = derivation_vars(d);
    let mut next_fresh = taken
        .iter()
        .filter_map(|v| {
            v.name()
                .strip_prefix('v')
                .and_then(|n| n.parse::<usize>().ok())
        })
        .map(|n| n + 1)
        .max()
        .unwrap_or(0);
    let mut phi = |cl: &mut Classes, i: usize, c: usize, t: &Term| -> Var {
        let n = cl.node(i, Position(vec![c]), t);
        let root = cl.uf.find(n);
        class_var
            .entry(root)
            .or_insert_with(|| loop {
                let v = Var::canonical(next_fresh);
                next_fresh += 1;
                if !taken.contains(&v) {
                    break (v, n);
                }
            })
            .0
            .clone()
    };

    let flatten = |cl: &mut Classes,
                   phi: &mut dyn FnMut(&mut Classes, usize, usize, &Term) -> Var,
                   i: usize| {
        let t = r_terms[i];
        Term::App(
            t.head().expect("application before the collapse").clone(),
            t.children()
                .iter()
                .enumerate()
                .map(|(c, s)| Term::Var(phi(cl, i, c + 1, s)))
                .collect(),
        )
    };

    let mut out = Derivation::trivial(owner.name.clone(), flatten(&mut cl, &mut phi, 0));
    out.reflexive = true;
    for i in 0..=collapse {
        let e = &cases[i];
        let cur = out.last().clone();
        if e.case != Case::Root {
            let next = flatten(&mut cl, &mut phi, i + 1);
            if next != cur {
                return Err(Error::MalformedDerivation(format!(
                    "chain step {i} changes the flattened term"
                )));
            }
            continue;
        }
        let (from, to) = step_sides(d, e);
        let step = &d.steps[e.step - 1];
        let direction = if e.forward {
            step.direction
        } else {
            step.direction.flip()
        };
        let mut subst = Substitution::new();
        for (c, v) in from.children().iter().enumerate() {
            let v = v.as_var().expect("linear equation");
            subst.insert(v.clone(), cur.children()[c].clone());
        }
        let next = if i == collapse {
            Term::Var(y.clone())
        } else {
            flatten(&mut cl, &mut phi, i + 1)
        };
        if let Term::App(_, ws) = to {
            for (c, w) in ws.iter().enumerate() {
                let w = w.as_var().expect("linear equation");
                subst.insert(w.clone(), next.children()[c].clone());
            }
        }
        if next != cur {
            out.push(
                Step {
                    equation: step.equation.clone(),
                    direction,
                    position: Position::root(),
                    subst,
                },
                next,
            );
        }
    }

    verify_derivation(owner, &out)
        .map_err(|e| Error::MalformedDerivation(format!("projected derivation: {e}")))?;
    Ok(Projection {
        owner: owner.name.clone(),
        symbol: f.name().to_owned(),
        chain: chain.iter().map(|&n| g.nodes[n].clone()).collect(),
        cases: cases.iter().map(|e| e.case).collect(),
        derivation: out,
    })
}

/// Sides of the step an edge traverses, oriented along the edge.
fn step_sides<'a>(d: &'a Derivation, e: &SuccessorEdge) -> (&'a Term, &'a Term) {
    let (a, b) = d.steps[e.step - 1].oriented();
    if e.forward {
        (a, b)
    } else {
        (b, a)
    }
}

/// Breadth-first path from the root of `t0` to the nearest occurrence of `y`.
fn shortest_chain(
    g: &SuccessorGraph,
    d: &Derivation,
    y: &Var,
) -> Option<(Vec<usize>, Vec<SuccessorEdge>)> {
    let start = g.node(0, &Position::root())?;
    let is_y = |n: usize| {
        let o = &g.nodes[n];
        d.terms[o.index].get(&o.position).and_then(Term::as_var) == Some(y)
    };
    let mut parent: Vec<Option<usize>> = vec![None; g.nodes.len()];
    let mut seen = vec![false; g.nodes.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut goal = if is_y(start) { Some(start) } else { None };
    while goal.is_none() {
        let n = queue.pop_front()?;
        for &e in g.successors(n) {
            let to = g.edges[e].to;
            if seen[to] {
                continue;
            }
            seen[to] = true;
            parent[to] = Some(e);
            if is_y(to) {
                goal = Some(to);
                break;
            }
            queue.push_back(to);
        }
    }
    let mut nodes = vec![goal?];
    let mut edges = Vec::new();
    while let Some(e) = parent[*nodes.last().expect("nonempty")] {
        edges.push(g.edges[e]);
        nodes.push(g.edges[e].from);
    }
    nodes.reverse();
    edges.reverse();
    Some((nodes, edges))
}

/// The join is inconsistent: `F(z, ..., z) ≈ y` follows from the
/// z-substituted derivation, and idempotency closes it to `z ≈ y`.
fn inconsistency(join: &Theory, owner: &Theory, d: &Derivation, g: &SuccessorGraph) -> Error {
    let marks = mark_in(g);
    let zd = match z_substituted_derivation(join, d, &marks) {
        Ok(zd) => zd,
        Err(e) => return e,
    };
    let z = zd.first().children()[0].as_var().expect("z").clone();
    let goal = Identity::new(Term::Var(z), zd.first().clone());
    let idem = saturate(owner, default_budget(owner))
        .ok()
        .and_then(|base| base.derivation(&goal).ok().flatten());
    let cert = match idem {
        Some(i) => Derivation {
            theory: join.name.clone(),
            reflexive: d.reflexive,
            ..i
        }
        .concat(&zd),
        None => zd,
    };
    Error::InconsistencyDetected(Box::new(cert))
}
