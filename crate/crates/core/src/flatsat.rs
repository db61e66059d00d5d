//! Saturation of the equivalence generated by a linear theory on flat terms
//! over a bounded variable context.
//!
//! Atoms are numbered: `0..budget` are the context variables `v0..`, then each
//! operation symbol owns a block of `budget^arity` atoms in row-major order.

use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{
    refute_entailment, Assignment, FiniteAlgebra, ModelSearchOutcome, SearchOptions,
};
use crate::rewrite::{Derivation, Direction, Step};
use crate::term::{fresh_var, Sym, Term, Var};
use crate::theory::{check_symbols, Identity, Theory};

/// Instances enumerated per identity before saturation gives up.
const MAX_INSTANCES: u64 = 1 << 32;

pub fn default_budget(theory: &Theory) -> usize {
    2 * theory.signature().max_arity() + 2
}

/// An instance of an identity over the context that joined two distinct atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Generator {
    pub lhs: u32,
    pub rhs: u32,
    /// Index into the theory's identities.
    pub identity: u32,
    /// Values of the identity's variables, base `budget`, first variable most significant.
    pub instance: u64,
}

#[derive(Clone, Debug)]
struct Block {
    sym: Sym,
    arity: usize,
    offset: usize,
}

enum Pattern {
    Slot(usize),
    App { offset: usize, slots: Vec<usize> },
}

impl Pattern {
    fn compile(t: &Term, vars: &[Var], blocks: &[Block]) -> Pattern {
        let slot = |v: &Var| vars.iter().position(|w| w == v).expect("identity variable");
        match t {
            Term::Var(v) => Pattern::Slot(slot(v)),
            Term::App(f, cs) => {
                let b = blocks
                    .iter()
                    .find(|b| &b.sym == f)
                    .expect("declared symbol");
                Pattern::App {
                    offset: b.offset,
                    slots: cs
                        .iter()
                        .map(|c| slot(c.as_var().expect("flat term")))
                        .collect(),
                }
            }
        }
    }

    fn atom(&self, vals: &[usize], budget: usize) -> usize {
        match self {
            Pattern::Slot(j) => vals[*j],
            Pattern::App { offset, slots } => {
                offset + slots.iter().fold(0, |acc, &j| acc * budget + vals[j])
            }
        }
    }
}

/// The saturated partition of flat atoms for one theory and budget.
#[derive(Clone, Debug)]
pub struct FlatFactBase {
    theory: Theory,
    budget: usize,
    blocks: Vec<Block>,
    atoms: usize,
    class: Vec<u32>,
    generators: Vec<Generator>,
    merges: Vec<u32>,
    adj_start: Vec<u32>,
    adj: Vec<(u32, u32)>,
}

/// Build the finest partition of flat atoms closed under all instances of
/// `theory`'s identities over `budget` variables.
///
/// The instance set is closed under every endomap of the context, so the
/// partition is substitution stable without a separate closure pass.
pub fn saturate(theory: &Theory, budget: usize) -> Result<FlatFactBase> {
    if let Some(e) = theory.identities().find(|e| !e.is_linear()) {
        return Err(Error::NotLinear {
            identity: e.to_string(),
        });
    }
    if budget == 0 {
        return Err(Error::BudgetTooSmall { needed: 1, budget });
    }
    let mut blocks = Vec::new();
    let mut atoms = budget;
    for (sym, arity) in theory.signature().iter() {
        blocks.push(Block {
            sym: sym.clone(),
            arity,
            offset: atoms,
        });
        atoms = budget
            .checked_pow(arity as u32)
            .and_then(|n| n.checked_add(atoms))
            .filter(|&n| n < u32::MAX as usize)
            .ok_or_else(|| {
                Error::SaturationTooLarge(format!("`{sym}/{arity}` with budget {budget}"))
            })?;
    }

    let mut generators = Vec::new();
    for (idx, e) in theory.identities().enumerate() {
        let vars = e.variables();
        let k = vars.len();
        let total = (budget as u64)
            .checked_pow(k as u32)
            .filter(|&n| n <= MAX_INSTANCES)
            .ok_or_else(|| Error::SaturationTooLarge(format!("`{e}` with budget {budget}")))?;
        let lhs = Pattern::compile(&e.lhs, &vars, &blocks);
        let rhs = Pattern::compile(&e.rhs, &vars, &blocks);
        let found: Vec<Generator> = (0..total)
            .into_par_iter()
            .filter_map(|code| {
                let vals = decode(code, k, budget);
                let (l, r) = (lhs.atom(&vals, budget), rhs.atom(&vals, budget));
                (l != r).then_some(Generator {
                    lhs: l as u32,
                    rhs: r as u32,
                    identity: idx as u32,
                    instance: code,
                })
            })
            .collect();
        generators.extend(found);
    }

    let mut uf = crate::unionfind::UnionFind::new(atoms);
    let mut merges = Vec::new();
    let mut degree = vec![0u32; atoms + 1];
    for (i, g) in generators.iter().enumerate() {
        if uf.union(g.lhs as usize, g.rhs as usize) {
            merges.push(i as u32);
        }
        degree[g.lhs as usize] += 1;
        degree[g.rhs as usize] += 1;
    }
    let mut adj_start = vec![0u32; atoms + 1];
    for a in 0..atoms {
        adj_start[a + 1] = adj_start[a] + degree[a];
    }
    let mut fill = adj_start.clone();
    let mut adj = vec![(0u32, 0u32); generators.len() * 2];
    for (i, g) in generators.iter().enumerate() {
        for (a, b) in [(g.lhs, g.rhs), (g.rhs, g.lhs)] {
            adj[fill[a as usize] as usize] = (b, i as u32);
            fill[a as usize] += 1;
        }
    }
    let class = uf.roots().into_iter().map(|r| r as u32).collect();
    Ok(FlatFactBase {
        theory: theory.clone(),
        budget,
        blocks,
        atoms,
        class,
        generators,
        merges,
        adj_start,
        adj,
    })
}

fn decode(mut code: u64, k: usize, budget: usize) -> Vec<usize> {
    let mut vals = vec![0; k];
    for slot in vals.iter_mut().rev() {
        *slot = (code % budget as u64) as usize;
        code /= budget as u64;
    }
    vals
}

impl FlatFactBase {
    pub fn theory(&self) -> &Theory {
        &self.theory
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn atom_count(&self) -> usize {
        self.atoms
    }

    /// Every generator that merged two previously distinct classes.
    pub fn closure_trace(&self) -> impl Iterator<Item = &Generator> {
        self.merges.iter().map(|&i| &self.generators[i as usize])
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn same_class(&self, a: usize, b: usize) -> bool {
        self.class[a] == self.class[b]
    }

    pub fn class_count(&self) -> usize {
        self.class.iter().collect::<HashSet<_>>().len()
    }

    /// Atom of a flat term whose variables are context indices given by `index`.
    pub fn atom_of(&self, t: &Term, index: &impl Fn(&Var) -> Option<usize>) -> Option<usize> {
        let var = |v: &Var| index(v).filter(|&i| i < self.budget);
        match t {
            Term::Var(v) => var(v),
            Term::App(f, cs) => {
                let b = self.blocks.iter().find(|b| &b.sym == f)?;
                if b.arity != cs.len() {
                    return None;
                }
                let mut code = 0;
                for c in cs {
                    code = code * self.budget + var(c.as_var()?)?;
                }
                Some(b.offset + code)
            }
        }
    }

    /// The flat term of an atom, context variable `i` printed as `names[i]`.
    pub fn term_of(&self, atom: usize, names: &[Var]) -> Term {
        if atom < self.budget {
            return Term::Var(names[atom].clone());
        }
        let b = self
            .blocks
            .iter()
            .rev()
            .find(|b| b.offset <= atom)
            .expect("atom in range");
        let vals = decode((atom - b.offset) as u64, b.arity, self.budget);
        Term::App(
            b.sym.clone(),
            vals.into_iter()
                .map(|i| Term::Var(names[i].clone()))
                .collect(),
        )
    }

    /// Atom of a flat term over the canonical context variables `v0, v1, ...`.
    pub fn canonical_atom(&self, t: &Term) -> Option<usize> {
        self.atom_of(t, &|v: &Var| {
            v.name().strip_prefix('v').and_then(|n| n.parse().ok())
        })
    }

    /// The context variables `v0 .. v{budget-1}` fall into one class.
    pub fn is_collapsed(&self) -> bool {
        self.budget >= 2 && self.same_class(0, 1)
    }

    fn embed(&self, goal: &Identity) -> Result<(Vec<Var>, usize, usize)> {
        for side in [&goal.lhs, &goal.rhs] {
            if !side.is_flat() {
                return Err(Error::NotLinear {
                    identity: goal.to_string(),
                });
            }
            check_symbols(self.theory.signature(), side, None)?;
        }
        let vars = goal.variables();
        if vars.len() > self.budget {
            return Err(Error::BudgetTooSmall {
                needed: vars.len(),
                budget: self.budget,
            });
        }
        let index = |v: &Var| vars.iter().position(|w| w == v);
        let a = self.atom_of(&goal.lhs, &index).expect("embedded");
        let b = self.atom_of(&goal.rhs, &index).expect("embedded");
        Ok((vars, a, b))
    }

    /// Decide a linear goal against the saturated partition.
    pub fn entails(&self, goal: &Identity) -> Result<bool> {
        let (_, a, b) = self.embed(goal)?;
        Ok(self.same_class(a, b) || self.is_collapsed())
    }

    /// Context variable names: the goal's variables first, then fresh ones.
    fn names_for(&self, goal_vars: &[Var]) -> Vec<Var> {
        let mut names: Vec<Var> = goal_vars.to_vec();
        while names.len() < self.budget {
            let taken = names.clone();
            names.push(fresh_var("w", &|v: &Var| taken.contains(v)));
        }
        names
    }

    /// Shortest chain of generators from atom `from` to atom `to`.
    fn path(&self, from: usize, to: usize) -> Option<Vec<(u32, usize)>> {
        if from == to {
            return Some(Vec::new());
        }
        if !self.same_class(from, to) {
            return None;
        }
        let mut parent = vec![(u32::MAX, u32::MAX); self.atoms];
        parent[from] = (from as u32, u32::MAX);
        let mut queue = VecDeque::from([from]);
        while let Some(a) = queue.pop_front() {
            let (s, e) = (self.adj_start[a] as usize, self.adj_start[a + 1] as usize);
            for &(b, g) in &self.adj[s..e] {
                let b = b as usize;
                if parent[b].0 != u32::MAX {
                    continue;
                }
                parent[b] = (a as u32, g);
                if b == to {
                    let mut out = Vec::new();
                    let mut cur = to;
                    while cur != from {
                        let (p, g) = parent[cur];
                        out.push((g, cur));
                        cur = p as usize;
                    }
                    out.reverse();
                    return Some(out);
                }
                queue.push_back(b);
            }
        }
        None
    }

    fn derivation_between(&self, from: usize, to: usize, names: &[Var]) -> Option<Derivation> {
        let path = self.path(from, to)?;
        let mut d = Derivation::trivial(self.theory.name.clone(), self.term_of(from, names));
        let mut cur = from;
        for (g, next) in path {
            let gen = self.generators[g as usize];
            let eq = self.theory.identity(gen.identity as usize).clone();
            let vars = eq.variables();
            let vals = decode(gen.instance, vars.len(), self.budget);
            let direction = if gen.lhs as usize == cur {
                Direction::Forward
            } else {
                Direction::Reverse
            };
            let subst = vars
                .into_iter()
                .zip(vals)
                .map(|(v, i)| (v, Term::Var(names[i].clone())))
                .collect();
            d.push(
                Step {
                    equation: eq,
                    direction,
                    position: Default::default(),
                    subst,
                },
                self.term_of(next, names),
            );
            cur = next;
        }
        Some(d)
    }

    /// A derivation of the goal if it is entailed, flat whenever both sides
    /// are connected by generators directly.
    pub fn derivation(&self, goal: &Identity) -> Result<Option<Derivation>> {
        let (vars, a, b) = self.embed(goal)?;
        let names = self.names_for(&vars);
        if let Some(d) = self.derivation_between(a, b, &names) {
            return Ok(Some(d));
        }
        if !self.is_collapsed() {
            return Ok(None);
        }
        // Everything follows from x ≈ y: instantiate its derivation.
        let avoid: Vec<Var> = vars.clone();
        let x = fresh_var("x", &|v: &Var| avoid.contains(v));
        let y = fresh_var("y", &|v: &Var| avoid.contains(v) || *v == x);
        let mut names = vec![x.clone(), y.clone()];
        while names.len() < self.budget {
            let taken: Vec<Var> = names.iter().chain(&avoid).cloned().collect();
            names.push(fresh_var("w", &|v: &Var| taken.contains(v)));
        }
        let base = self.derivation_between(0, 1, &names).expect("collapsed");
        let theta = [(x, goal.lhs.clone()), (y, goal.rhs.clone())]
            .into_iter()
            .collect();
        Ok(Some(base.instantiate(&theta)))
    }

    /// A derivation of `x ≈ y` when the theory is inconsistent.
    pub fn inconsistency(&self) -> Option<Derivation> {
        if !self.is_collapsed() {
            return None;
        }
        let names = self.names_for(&[Var::new("x"), Var::new("y")]);
        self.derivation_between(0, 1, &names)
    }

    /// Canonical flat facts `x ≈ F(w)` for symbol `f`, as tuples over
    /// `0 = x, 1.. = y1..` in restricted-growth form for the `y`s.
    pub fn facts_for(&self, f: &Sym) -> Result<Vec<Vec<usize>>> {
        let b = self
            .blocks
            .iter()
            .find(|b| &b.sym == f)
            .ok_or_else(|| Error::UnknownSymbol {
                symbol: f.name().to_owned(),
                line: None,
            })?;
        if b.arity + 1 > self.budget {
            return Err(Error::BudgetTooSmall {
                needed: b.arity + 1,
                budget: self.budget,
            });
        }
        let mut out = Vec::new();
        for w in canonical_tuples(b.arity) {
            let atom = b.offset + w.iter().fold(0, |acc, &i| acc * self.budget + i);
            if self.same_class(0, atom) || self.is_collapsed() {
                out.push(w);
            }
        }
        Ok(out)
    }
}

/// Tuples of length `n` over `{0} ∪ {1..}` where the nonzero entries appear in
/// restricted-growth order (first new value is 1, then 2, ...).
pub fn canonical_tuples(n: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for v in 0..=max + 1 {
            cur.push(v);
            go(n, cur, max.max(v), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(n, &mut Vec::with_capacity(n), 0, &mut out);
    out
}

/// Outcome of a flat entailment query.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum EntailmentVerdict {
    Entailed {
        derivation: Derivation,
        /// Every term of the derivation is flat.
        flat: bool,
    },
    NotEntailed,
    NotEntailedWithModel {
        algebra: FiniteAlgebra,
        assignment: Assignment,
    },
}

impl EntailmentVerdict {
    pub fn is_entailed(&self) -> bool {
        matches!(self, EntailmentVerdict::Entailed { .. })
    }

    pub fn derivation(&self) -> Option<&Derivation> {
        match self {
            EntailmentVerdict::Entailed { derivation, .. } => Some(derivation),
            _ => None,
        }
    }
}

fn entailed(d: Derivation) -> EntailmentVerdict {
    let flat = d.terms.iter().all(Term::is_flat);
    EntailmentVerdict::Entailed {
        derivation: d,
        flat,
    }
}

/// Decide `goal` and attach a certificate; non-entailment is upgraded with a
/// countermodel found under the default model search.
pub fn entails_flat(base: &FlatFactBase, goal: &Identity) -> Result<EntailmentVerdict> {
    entails_flat_with(base, goal, Some(&SearchOptions::default()))
}

/// As [`entails_flat`], searching for a countermodel only when `models` is given.
pub fn entails_flat_with(
    base: &FlatFactBase,
    goal: &Identity,
    models: Option<&SearchOptions>,
) -> Result<EntailmentVerdict> {
    if let Some(d) = base.derivation(goal)? {
        return Ok(entailed(d));
    }
    if let Some(opts) = models {
        if let ModelSearchOutcome::Found {
            algebra,
            assignment,
        } = refute_entailment(base.theory(), goal, opts)?
        {
            return Ok(EntailmentVerdict::NotEntailedWithModel {
                algebra,
                assignment,
            });
        }
    }
    Ok(EntailmentVerdict::NotEntailed)
}

/// Decide `Σ ⊨ x ≈ y` with the default budget and model search.
pub fn is_inconsistent(theory: &Theory) -> Result<EntailmentVerdict> {
    let base = saturate(theory, default_budget(theory))?;
    inconsistency_verdict(&base, Some(&SearchOptions::default()))
}

pub fn inconsistency_verdict(
    base: &FlatFactBase,
    models: Option<&SearchOptions>,
) -> Result<EntailmentVerdict> {
    let goal = Identity::new(Term::var("x"), Term::var("y"));
    if base.budget() < 2 {
        return Err(Error::BudgetTooSmall {
            needed: 2,
            budget: base.budget(),
        });
    }
    entails_flat_with(base, &goal, models)
}
