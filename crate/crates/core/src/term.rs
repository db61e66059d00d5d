//! Terms, positions, occurrences and substitutions.
//!
//! Terms are immutable first-order trees. Positions are lists of 1-based
//! child indices, the empty list being the root.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A variable name. Ordered "naturally" so that `v2 < v10`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: impl AsRef<str>) -> Self {
        Var(Arc::from(name.as_ref()))
    }

    /// The `i`-th variable of the canonical enumeration `v0, v1, ...`.
    pub fn canonical(i: usize) -> Self {
        Var::new(format!("v{i}"))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

fn split_digits(s: &str) -> (&str, &str) {
    let cut = s
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_digit())
        .last()
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    s.split_at(cut)
}

impl Ord for Var {
    fn cmp(&self, other: &Self) -> Ordering {
        let (pa, da) = split_digits(&self.0);
        let (pb, db) = split_digits(&other.0);
        let ta = da.trim_start_matches('0');
        let tb = db.trim_start_matches('0');
        pa.cmp(pb)
            .then(ta.len().cmp(&tb.len()))
            .then(ta.cmp(tb))
            .then(self.0.cmp(&other.0))
    }
}

impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Var {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Var {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Var::new(String::deserialize(d)?))
    }
}

/// An operation symbol name. Arity lives in the [`Signature`](crate::theory::Signature).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sym(Arc<str>);

impl Sym {
    pub fn new(name: impl AsRef<str>) -> Self {
        Sym(Arc::from(name.as_ref()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An operation symbol together with its arity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OperationSymbol {
    pub name: String,
    pub arity: usize,
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(Var),
    App(Sym, Vec<Term>),
}

impl Term {
    pub fn var(name: impl AsRef<str>) -> Self {
        Term::Var(Var::new(name))
    }

    pub fn app(symbol: impl AsRef<str>, children: Vec<Term>) -> Self {
        Term::App(Sym::new(symbol), children)
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            Term::App(..) => None,
        }
    }

    pub fn head(&self) -> Option<&Sym> {
        match self {
            Term::Var(_) => None,
            Term::App(f, _) => Some(f),
        }
    }

    pub fn children(&self) -> &[Term] {
        match self {
            Term::Var(_) => &[],
            Term::App(_, cs) => cs,
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(Term::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) => 0,
            Term::App(_, cs) => 1 + cs.iter().map(Term::depth).max().unwrap_or(0),
        }
    }

    /// Number of function-symbol occurrences.
    pub fn symbol_count(&self) -> usize {
        match self {
            Term::Var(_) => 0,
            Term::App(_, cs) => 1 + cs.iter().map(Term::symbol_count).sum::<usize>(),
        }
    }

    /// At most one function symbol.
    pub fn is_linear(&self) -> bool {
        self.symbol_count() <= 1
    }

    /// A variable, or a symbol applied to variables.
    pub fn is_flat(&self) -> bool {
        self.children().iter().all(Term::is_var)
    }

    /// Distinct variables in preorder first-occurrence order.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::App(_, cs) => cs.iter().for_each(|c| c.collect_vars(out)),
        }
    }

    pub fn contains_var(&self, v: &Var) -> bool {
        match self {
            Term::Var(w) => w == v,
            Term::App(_, cs) => cs.iter().any(|c| c.contains_var(v)),
        }
    }

    /// Symbols with the arity they are applied at, in preorder.
    pub fn symbols(&self) -> Vec<(Sym, usize)> {
        let mut out = Vec::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut Vec<(Sym, usize)>) {
        if let Term::App(f, cs) = self {
            out.push((f.clone(), cs.len()));
            cs.iter().for_each(|c| c.collect_symbols(out));
        }
    }

    /// All valid positions in preorder.
    pub fn positions(&self) -> Vec<Position> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.collect_positions(&mut path, &mut out);
        out
    }

    fn collect_positions(&self, path: &mut Vec<usize>, out: &mut Vec<Position>) {
        out.push(Position(path.clone()));
        for (i, c) in self.children().iter().enumerate() {
            path.push(i + 1);
            c.collect_positions(path, out);
            path.pop();
        }
    }

    pub fn occurrences(&self) -> Vec<Occurrence> {
        self.positions()
            .into_iter()
            .map(|p| {
                let subterm = self.get(&p).expect("own position").clone();
                Occurrence {
                    position: p,
                    subterm,
                }
            })
            .collect()
    }

    /// Subterm at `p`, or `None` when `p` walks off the tree.
    pub fn get(&self, p: &Position) -> Option<&Term> {
        let mut cur = self;
        for &i in &p.0 {
            cur = cur.children().get(i.checked_sub(1)?)?;
        }
        Some(cur)
    }

    pub fn subterm_at(&self, p: &Position) -> Result<&Term> {
        self.get(p).ok_or_else(|| Error::InvalidPosition {
            position: p.clone(),
            term: self.to_string(),
        })
    }

    pub fn replace_at(&self, p: &Position, u: Term) -> Result<Term> {
        fn go(t: &Term, path: &[usize], u: Term) -> Option<Term> {
            match path.split_first() {
                None => Some(u),
                Some((&i, rest)) => match t {
                    Term::Var(_) => None,
                    Term::App(f, cs) => {
                        let k = i.checked_sub(1)?;
                        let child = cs.get(k)?;
                        let new_child = go(child, rest, u)?;
                        let mut cs = cs.clone();
                        cs[k] = new_child;
                        Some(Term::App(f.clone(), cs))
                    }
                },
            }
        }
        go(self, &p.0, u).ok_or_else(|| Error::InvalidPosition {
            position: p.clone(),
            term: self.to_string(),
        })
    }

    pub fn apply(&self, sigma: &Substitution) -> Term {
        match self {
            Term::Var(v) => sigma.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::App(f, cs) => Term::App(f.clone(), cs.iter().map(|c| c.apply(sigma)).collect()),
        }
    }

    /// Variable renaming by a map; unmapped variables are kept.
    pub fn rename(&self, map: &HashMap<Var, Var>) -> Term {
        match self {
            Term::Var(v) => Term::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
            Term::App(f, cs) => Term::App(f.clone(), cs.iter().map(|c| c.rename(map)).collect()),
        }
    }

    /// Rename variables to `v0, v1, ...` in preorder first-occurrence order.
    pub fn canonical_rename(&self) -> Term {
        let map = canonical_map(std::iter::once(self));
        self.rename(&map)
    }
}

/// Map each distinct variable of `terms` (scanned in order) to `v0, v1, ...`.
pub(crate) fn canonical_map<'a>(terms: impl IntoIterator<Item = &'a Term>) -> HashMap<Var, Var> {
    let mut map = HashMap::new();
    for t in terms {
        for v in t.variables() {
            let n = map.len();
            map.entry(v).or_insert_with(|| Var::canonical(n));
        }
    }
    map
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Term::Var(a), Term::Var(b)) => a.cmp(b),
            (Term::Var(_), Term::App(..)) => Ordering::Less,
            (Term::App(..), Term::Var(_)) => Ordering::Greater,
            (Term::App(f, xs), Term::App(g, ys)) => f.cmp(g).then_with(|| xs.cmp(ys)),
        }
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::App(s, cs) => {
                write!(f, "{s}(")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl std::str::FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Term> {
        crate::syntax::parse_term(s)
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A path of 1-based child indices; empty is the root.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Position(pub Vec<usize>);

impl Position {
    pub fn root() -> Self {
        Position(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, i: usize) -> Position {
        let mut p = self.0.clone();
        p.push(i);
        Position(p)
    }

    pub fn concat(&self, other: &Position) -> Position {
        let mut p = self.0.clone();
        p.extend_from_slice(&other.0);
        Position(p)
    }

    /// `self` is an ancestor-or-self of `other`.
    pub fn is_prefix_of(&self, other: &Position) -> bool {
        other.0.starts_with(&self.0)
    }

    /// The remainder of `self` below `prefix`.
    pub fn strip_prefix(&self, prefix: &Position) -> Option<Position> {
        self.0
            .strip_prefix(prefix.0.as_slice())
            .map(|r| Position(r.to_vec()))
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Debug for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<Vec<usize>> for Position {
    fn from(v: Vec<usize>) -> Self {
        Position(v)
    }
}

/// A position in a host term together with the subterm it reaches.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Occurrence {
    pub position: Position,
    pub subterm: Term,
}

#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution(BTreeMap<Var, Term>);

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.0.get(v)
    }

    pub fn insert(&mut self, v: Var, t: Term) -> Option<Term> {
        self.0.insert(v, t)
    }

    pub fn remove(&mut self, v: &Var) -> Option<Term> {
        self.0.remove(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.0.iter()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Var> {
        self.0.keys()
    }

    /// `self` then `tau`: `x ↦ apply(self(x), tau)`, plus `tau` on variables outside `self`.
    pub fn then(&self, tau: &Substitution) -> Substitution {
        let mut out: BTreeMap<Var, Term> = self
            .0
            .iter()
            .map(|(v, t)| (v.clone(), t.apply(tau)))
            .collect();
        for (v, t) in &tau.0 {
            out.entry(v.clone()).or_insert_with(|| t.clone());
        }
        Substitution(out)
    }

    pub fn restrict(&self, vars: &[Var]) -> Substitution {
        Substitution(
            self.0
                .iter()
                .filter(|(v, _)| vars.contains(v))
                .map(|(v, t)| (v.clone(), t.clone()))
                .collect(),
        )
    }
}

impl FromIterator<(Var, Term)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (Var, Term)>>(iter: I) -> Self {
        Substitution(iter.into_iter().collect())
    }
}

impl fmt::Debug for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, t)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}↦{t}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for Substitution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (v, t) in &self.0 {
            m.serialize_entry(v.name(), &t.to_string())?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for Substitution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, Term>::deserialize(d)?;
        Ok(raw.into_iter().map(|(k, t)| (Var::new(k), t)).collect())
    }
}

/// One-sided syntactic matching: `σ` with `pattern σ = target`.
pub fn match_term(pattern: &Term, target: &Term) -> Option<Substitution> {
    let mut sigma = Substitution::new();
    match_into(pattern, target, &mut sigma).then_some(sigma)
}

/// Extend `sigma` so that `pattern sigma = target`; false on clash.
pub fn match_into(pattern: &Term, target: &Term, sigma: &mut Substitution) -> bool {
    match pattern {
        Term::Var(v) => match sigma.get(v) {
            Some(bound) => bound == target,
            None => {
                sigma.insert(v.clone(), target.clone());
                true
            }
        },
        Term::App(f, ps) => match target {
            Term::App(g, ts) if f == g && ps.len() == ts.len() => {
                ps.iter().zip(ts).all(|(p, t)| match_into(p, t, sigma))
            }
            _ => false,
        },
    }
}

/// A variable name not present in `avoid`, derived from `base`.
pub fn fresh_var(base: &str, avoid: &impl Fn(&Var) -> bool) -> Var {
    let v = Var::new(base);
    if !avoid(&v) {
        return v;
    }
    (1..)
        .map(|i| Var::new(format!("{base}{i}")))
        .find(|v| !avoid(v))
        .expect("infinite supply")
}
