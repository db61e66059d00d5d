//! Finite algebras and a backtracking model finder.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::term::{Sym, Term, Var};
use crate::theory::{check_symbols, Identity, Theory};

/// Values of variables as element indices.
pub type Assignment = BTreeMap<Var, usize>;

/// A finite universe `0..size` with one table per symbol. Tables are stored
/// row-major: the entry for `(a1, ..., an)` sits at `a1·size^(n-1) + ... + an`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteAlgebra {
    pub size: usize,
    pub tables: IndexMap<String, Vec<usize>>,
}

/// An identity and an assignment under which its sides differ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub identity: Identity,
    pub assignment: Assignment,
}

impl FiniteAlgebra {
    pub fn eval(&self, t: &Term, rho: &Assignment) -> Result<usize> {
        match t {
            Term::Var(v) => rho
                .get(v)
                .copied()
                .ok_or_else(|| Error::MissingAssignment(v.name().to_owned())),
            Term::App(f, cs) => {
                let table = self
                    .tables
                    .get(f.name())
                    .ok_or_else(|| Error::MissingTable(f.name().to_owned()))?;
                let mut idx = 0;
                for c in cs {
                    idx = idx * self.size + self.eval(c, rho)?;
                }
                if table.len() != self.size.pow(cs.len() as u32) {
                    return Err(Error::MissingTable(format!("{f}/{}", cs.len())));
                }
                Ok(table[idx])
            }
        }
    }

    /// The first violated identity, scanning assignments in lexicographic order.
    pub fn satisfies(&self, theory: &Theory) -> Result<Option<Violation>> {
        for e in theory.identities() {
            let vars = e.variables();
            let mut found = None;
            let mut failure = None;
            for_each_tuple(vars.len(), self.size, &mut |vals| {
                if found.is_some() || failure.is_some() {
                    return;
                }
                let rho: Assignment = vars.iter().cloned().zip(vals.iter().copied()).collect();
                match (self.eval(&e.lhs, &rho), self.eval(&e.rhs, &rho)) {
                    (Ok(a), Ok(b)) if a != b => {
                        found = Some(Violation {
                            identity: e.clone(),
                            assignment: rho,
                        })
                    }
                    (Err(err), _) | (_, Err(err)) => failure = Some(err),
                    _ => {}
                }
            });
            if let Some(err) = failure {
                return Err(err);
            }
            if found.is_some() {
                return Ok(found);
            }
        }
        Ok(None)
    }

    /// Every diagonal entry `F(a, ..., a)` equals `a`.
    pub fn is_idempotent(&self) -> bool {
        self.tables.values().all(|table| {
            let arity = arity_of(table.len(), self.size);
            (0..self.size).all(|a| {
                let idx = (0..arity).fold(0, |acc, _| acc * self.size + a);
                table[idx] == a
            })
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("algebras serialize")
    }

    pub fn from_json(s: &str) -> Result<FiniteAlgebra> {
        Ok(serde_json::from_str(s)?)
    }
}

fn arity_of(len: usize, size: usize) -> usize {
    if size <= 1 {
        return 0;
    }
    let mut n = 0;
    let mut k = 1;
    while k < len {
        k *= size;
        n += 1;
    }
    n
}

pub fn eval_term(a: &FiniteAlgebra, t: &Term, rho: &Assignment) -> Result<usize> {
    a.eval(t, rho)
}

pub fn satisfies(a: &FiniteAlgebra, theory: &Theory) -> Result<Option<Violation>> {
    a.satisfies(theory)
}

/// Calls `f` with every tuple in `0..size` of length `k`, lexicographically.
fn for_each_tuple(k: usize, size: usize, f: &mut impl FnMut(&[usize])) {
    let pool: Vec<usize> = (0..size).collect();
    let slots: Vec<Var> = (0..k).map(Var::canonical).collect();
    crate::rewrite::for_each_binding(&slots, &pool, f);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub min_size: usize,
    pub max_size: usize,
    /// Fix every diagonal entry `F(a, ..., a) = a` up front. Only sound for
    /// theories known to be idempotent.
    pub idempotent: bool,
    /// Table decisions allowed over the whole search.
    pub node_limit: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            min_size: 2,
            max_size: 3,
            idempotent: true,
            node_limit: 500_000,
        }
    }
}

impl SearchOptions {
    pub fn sizes(min_size: usize, max_size: usize) -> Self {
        SearchOptions {
            min_size,
            max_size,
            ..Default::default()
        }
    }
}

/// Require `lhs ≠ rhs` under some extension of `partial`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Disequality {
    pub lhs: Term,
    pub rhs: Term,
    pub partial: Assignment,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ModelSearchOutcome {
    Found {
        algebra: FiniteAlgebra,
        assignment: Assignment,
    },
    /// Every table in the size range was ruled out.
    Exhausted,
    LimitReached,
}

impl ModelSearchOutcome {
    pub fn found(&self) -> Option<(&FiniteAlgebra, &Assignment)> {
        match self {
            ModelSearchOutcome::Found {
                algebra,
                assignment,
            } => Some((algebra, assignment)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
enum CTerm {
    Slot(usize),
    App { block: usize, args: Vec<CTerm> },
}

impl CTerm {
    fn compile(t: &Term, vars: &[Var], syms: &[(Sym, usize)]) -> CTerm {
        match t {
            Term::Var(v) => CTerm::Slot(vars.iter().position(|w| w == v).expect("listed variable")),
            Term::App(f, cs) => CTerm::App {
                block: syms
                    .iter()
                    .position(|(s, _)| s == f)
                    .expect("checked symbol"),
                args: cs.iter().map(|c| CTerm::compile(c, vars, syms)).collect(),
            },
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Side {
    Const(u8),
    Cell(usize),
}

const UNSET: u8 = u8::MAX;

enum Res {
    Found,
    Fail,
    Limit,
}

struct Search<'a> {
    size: usize,
    offsets: Vec<usize>,
    cells: Vec<u8>,
    flat: Vec<(Side, Side)>,
    watches: Vec<Vec<usize>>,
    deep: Vec<(&'a CTerm, &'a CTerm, Vec<usize>)>,
    goal: Option<(&'a CTerm, &'a CTerm, Vec<usize>)>,
    trail: Vec<usize>,
    nodes: &'a mut u64,
    limit: u64,
}

impl<'a> Search<'a> {
    fn cell(&self, block: usize, vals: impl Iterator<Item = usize>) -> usize {
        self.offsets[block] + vals.fold(0, |acc, v| acc * self.size + v)
    }

    /// Partial evaluation: `None` while some needed cell is undecided.
    fn eval(&self, t: &CTerm, vals: &[usize]) -> Option<usize> {
        match t {
            CTerm::Slot(i) => Some(vals[*i]),
            CTerm::App { block, args } => {
                let mut idx = 0;
                for a in args {
                    idx = idx * self.size + self.eval(a, vals)?;
                }
                let v = self.cells[self.offsets[*block] + idx];
                (v != UNSET).then_some(v as usize)
            }
        }
    }

    fn side(&self, t: &CTerm, vals: &[usize]) -> Option<Side> {
        match t {
            CTerm::Slot(i) => Some(Side::Const(vals[*i] as u8)),
            CTerm::App { block, args } => {
                let mut out = Vec::with_capacity(args.len());
                for a in args {
                    match a {
                        CTerm::Slot(i) => out.push(vals[*i]),
                        CTerm::App { .. } => return None,
                    }
                }
                Some(Side::Cell(self.cell(*block, out.into_iter())))
            }
        }
    }

    fn value(&self, s: Side) -> Option<u8> {
        match s {
            Side::Const(v) => Some(v),
            Side::Cell(c) => (self.cells[c] != UNSET).then_some(self.cells[c]),
        }
    }

    fn set(&mut self, c: usize, v: u8, queue: &mut Vec<usize>) {
        self.cells[c] = v;
        self.trail.push(c);
        queue.push(c);
    }

    /// Assign and unit-propagate through flat instances.
    fn propagate(&mut self, mut queue: Vec<usize>) -> bool {
        while let Some(c) = queue.pop() {
            for k in 0..self.watches[c].len() {
                let (l, r) = self.flat[self.watches[c][k]];
                match (self.value(l), self.value(r)) {
                    (Some(a), Some(b)) if a != b => return false,
                    (Some(a), None) => {
                        let Side::Cell(rc) = r else { unreachable!() };
                        self.set(rc, a, &mut queue);
                    }
                    (None, Some(b)) => {
                        let Side::Cell(lc) = l else { unreachable!() };
                        self.set(lc, b, &mut queue);
                    }
                    _ => {}
                }
            }
        }
        true
    }

    fn consistent(&self) -> bool {
        let deep_ok =
            self.deep.iter().all(
                |(l, r, vals)| match (self.eval(l, vals), self.eval(r, vals)) {
                    (Some(a), Some(b)) => a == b,
                    _ => true,
                },
            );
        let goal_ok = match &self.goal {
            Some((l, r, vals)) => match (self.eval(l, vals), self.eval(r, vals)) {
                (Some(a), Some(b)) => a != b,
                _ => true,
            },
            None => true,
        };
        deep_ok && goal_ok
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let c = self.trail.pop().expect("nonempty trail");
            self.cells[c] = UNSET;
        }
    }

    fn dfs(&mut self, from: usize) -> Res {
        let Some(c) = (from..self.cells.len()).find(|&c| self.cells[c] == UNSET) else {
            return Res::Found;
        };
        for v in 0..self.size as u8 {
            *self.nodes += 1;
            if *self.nodes > self.limit {
                return Res::Limit;
            }
            let mark = self.trail.len();
            let mut queue = Vec::new();
            self.set(c, v, &mut queue);
            if self.propagate(queue) && self.consistent() {
                match self.dfs(c + 1) {
                    Res::Fail => {}
                    done => return done,
                }
            }
            self.undo(mark);
        }
        Res::Fail
    }
}

/// First model in the deterministic search order: sizes ascending, then
/// (when constrained) assignments of the constraint's free variables in
/// lexicographic order, then tables with cells in lexicographic order
/// (symbols in signature order) and values ascending.
pub fn find_model(
    theory: &Theory,
    opts: &SearchOptions,
    constraint: Option<&Disequality>,
) -> Result<ModelSearchOutcome> {
    if let Some(d) = constraint {
        check_symbols(theory.signature(), &d.lhs, None)?;
        check_symbols(theory.signature(), &d.rhs, None)?;
    }
    let syms: Vec<(Sym, usize)> = theory
        .signature()
        .iter()
        .map(|(s, a)| (s.clone(), a))
        .collect();
    let compiled: Vec<(CTerm, CTerm, usize)> = theory
        .identities()
        .map(|e| {
            let vars = e.variables();
            (
                CTerm::compile(&e.lhs, &vars, &syms),
                CTerm::compile(&e.rhs, &vars, &syms),
                vars.len(),
            )
        })
        .collect();
    let (goal_terms, free, partial) = match constraint {
        Some(d) => {
            let vars: Vec<Var> = Identity::new(d.lhs.clone(), d.rhs.clone()).variables();
            let free: Vec<Var> = vars
                .into_iter()
                .filter(|v| !d.partial.contains_key(v))
                .collect();
            let all: Vec<Var> = d
                .partial
                .keys()
                .cloned()
                .chain(free.iter().cloned())
                .collect();
            (
                Some((
                    CTerm::compile(&d.lhs, &all, &syms),
                    CTerm::compile(&d.rhs, &all, &syms),
                )),
                free,
                d.partial.clone(),
            )
        }
        None => (None, Vec::new(), Assignment::new()),
    };

    let mut nodes = 0u64;
    let mut limited = false;
    for size in opts.min_size.max(1)..=opts.max_size {
        if size > UNSET as usize {
            break;
        }
        if partial.values().any(|&v| v >= size) {
            continue;
        }
        let mut offsets = Vec::new();
        let mut total = 0usize;
        for (_, a) in &syms {
            offsets.push(total);
            total += size.pow(*a as u32);
        }
        let mut base = Search {
            size,
            offsets,
            cells: vec![UNSET; total],
            flat: Vec::new(),
            watches: vec![Vec::new(); total],
            deep: Vec::new(),
            goal: None,
            trail: Vec::new(),
            nodes: &mut nodes,
            limit: opts.node_limit,
        };
        let mut seed = Vec::new();
        let mut ok = true;
        if opts.idempotent {
            for (b, (_, a)) in syms.iter().enumerate() {
                for v in 0..size {
                    let c = base.cell(b, std::iter::repeat_n(v, *a));
                    if *a == 0 {
                        continue;
                    }
                    base.cells[c] = v as u8;
                    seed.push(c);
                }
            }
        }
        for (l, r, k) in &compiled {
            for_each_tuple(
                *k,
                size,
                &mut |vals| match (base.side(l, vals), base.side(r, vals)) {
                    (Some(ls), Some(rs)) => {
                        let i = base.flat.len();
                        for s in [ls, rs] {
                            if let Side::Cell(c) = s {
                                base.watches[c].push(i);
                            }
                        }
                        if let (Side::Const(a), Side::Const(b)) = (ls, rs) {
                            ok &= a == b;
                        }
                        base.flat.push((ls, rs));
                    }
                    _ => base.deep.push((l, r, vals.to_vec())),
                },
            );
        }
        if !ok {
            continue;
        }
        // Settle forced cells from diagonals and from instances with a constant side.
        seed.extend((0..base.flat.len()).filter_map(|i| match base.flat[i] {
            (Side::Const(_), Side::Cell(c)) | (Side::Cell(c), Side::Const(_)) => Some(c),
            _ => None,
        }));
        for i in 0..base.flat.len() {
            if let (Side::Const(v), Side::Cell(c)) | (Side::Cell(c), Side::Const(v)) = base.flat[i]
            {
                if base.cells[c] == UNSET {
                    base.cells[c] = v;
                    base.trail.push(c);
                } else if base.cells[c] != v {
                    ok = false;
                }
            }
        }
        if !ok || !base.propagate(seed) || !base.consistent() {
            continue;
        }
        let root_trail = base.trail.len();

        let goal_ref = goal_terms.as_ref();
        let mut outcome = None;
        let pool: Vec<usize> = (0..size).collect();
        crate::rewrite::for_each_binding(&free, &pool, &mut |vals| {
            if outcome.is_some() {
                return;
            }
            let mut all: Vec<usize> = partial.values().copied().collect();
            all.extend_from_slice(vals);
            base.goal = goal_ref.map(|(l, r)| (l, r, all));
            base.undo(root_trail);
            if !base.consistent() {
                return;
            }
            match base.dfs(0) {
                Res::Found => {
                    let mut assignment = partial.clone();
                    assignment.extend(free.iter().cloned().zip(vals.iter().copied()));
                    outcome = Some(Ok((base.cells.clone(), assignment)));
                }
                Res::Limit => outcome = Some(Err(())),
                Res::Fail => {}
            }
        });
        match outcome {
            Some(Ok((cells, assignment))) => {
                let mut tables = IndexMap::new();
                for (b, (s, a)) in syms.iter().enumerate() {
                    let start = base.offsets[b];
                    let len = size.pow(*a as u32);
                    tables.insert(
                        s.name().to_owned(),
                        cells[start..start + len]
                            .iter()
                            .map(|&v| v as usize)
                            .collect(),
                    );
                }
                return Ok(ModelSearchOutcome::Found {
                    algebra: FiniteAlgebra { size, tables },
                    assignment,
                });
            }
            Some(Err(())) => {
                limited = true;
                break;
            }
            None => {}
        }
    }
    Ok(if limited {
        ModelSearchOutcome::LimitReached
    } else {
        ModelSearchOutcome::Exhausted
    })
}

/// A model of `theory` in which the two sides of `goal` differ.
pub fn refute_entailment(
    theory: &Theory,
    goal: &Identity,
    opts: &SearchOptions,
) -> Result<ModelSearchOutcome> {
    let d = Disequality {
        lhs: goal.lhs.clone(),
        rhs: goal.rhs.clone(),
        partial: Assignment::new(),
    };
    find_model(theory, opts, Some(&d))
}
