//! Signatures, identities and theories.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::term::{canonical_map, OperationSymbol, Sym, Term};

/// An unordered pair of terms.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Identity {
    pub lhs: Term,
    pub rhs: Term,
}

impl Identity {
    pub fn new(lhs: Term, rhs: Term) -> Self {
        Identity { lhs, rhs }
    }

    pub fn flipped(&self) -> Identity {
        Identity::new(self.rhs.clone(), self.lhs.clone())
    }

    pub fn is_linear(&self) -> bool {
        self.lhs.is_linear() && self.rhs.is_linear()
    }

    /// `v ≈ v` for a single variable.
    pub fn is_reflexive_axiom(&self) -> bool {
        self.lhs.is_var() && self.lhs == self.rhs
    }

    pub fn variables(&self) -> Vec<crate::term::Var> {
        let mut vs = self.lhs.variables();
        for v in self.rhs.variables() {
            if !vs.contains(&v) {
                vs.push(v);
            }
        }
        vs
    }

    /// Canonical representative up to symmetry and injective renaming.
    ///
    /// Both orientations are jointly renamed to `v0, v1, ...` and the smaller
    /// pair under the term order wins. This coincides with putting the side
    /// whose own canonical form is smaller first.
    pub fn canonicalize(&self) -> Identity {
        let orient = |l: &Term, r: &Term| {
            let map = canonical_map([l, r]);
            Identity::new(l.rename(&map), r.rename(&map))
        };
        let a = orient(&self.lhs, &self.rhs);
        let b = orient(&self.rhs, &self.lhs);
        if b < a {
            b
        } else {
            a
        }
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.lhs, self.rhs)
    }
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ≈ {}", self.lhs, self.rhs)
    }
}

impl std::str::FromStr for Identity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Identity> {
        crate::syntax::parse_identity(s)
    }
}

impl Serialize for Identity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Identity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn canonicalize_identity(e: &Identity) -> Identity {
    e.canonicalize()
}

/// Operation symbols with arities, in declaration order.
#[derive(Clone, Default, PartialEq, Eq, Debug)]
pub struct Signature(IndexMap<Sym, usize>);

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ops<'a>(ops: impl IntoIterator<Item = (&'a str, usize)>) -> Self {
        Signature(ops.into_iter().map(|(n, a)| (Sym::new(n), a)).collect())
    }

    pub fn arity(&self, f: &Sym) -> Option<usize> {
        self.0.get(f).copied()
    }

    pub fn contains(&self, f: &Sym) -> bool {
        self.0.contains_key(f)
    }

    /// Adds a symbol; returns false if the name is already taken.
    pub fn insert(&mut self, f: Sym, arity: usize) -> bool {
        if self.0.contains_key(&f) {
            return false;
        }
        self.0.insert(f, arity);
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sym, usize)> {
        self.0.iter().map(|(s, a)| (s, *a))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_arity(&self) -> usize {
        self.0.values().copied().max().unwrap_or(0)
    }

    pub fn symbols(&self) -> Vec<OperationSymbol> {
        self.iter()
            .map(|(s, a)| OperationSymbol {
                name: s.name().to_owned(),
                arity: a,
            })
            .collect()
    }
}

/// Mirrors the DSL: name, operation declarations, axioms.
impl Serialize for Theory {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            theory: &'a str,
            ops: Vec<OperationSymbol>,
            axioms: Vec<&'a Identity>,
            #[serde(skip_serializing_if = "BTreeMap::is_empty")]
            renames: &'a BTreeMap<String, String>,
        }
        View {
            theory: &self.name,
            ops: self.signature.symbols(),
            axioms: self.identities.iter().collect(),
            renames: &self.renames,
        }
        .serialize(s)
    }
}

/// A named signature plus a finite set of canonical identities.
///
/// Identities keep insertion order (search engines expand them in that
/// order) but compare as a set.
#[derive(Clone, Debug)]
pub struct Theory {
    pub name: String,
    signature: Signature,
    identities: IndexSet<Identity>,
    /// Symbols of a right-hand join component renamed to keep signatures disjoint.
    pub renames: BTreeMap<String, String>,
}

impl Theory {
    pub fn new(
        name: impl Into<String>,
        signature: Signature,
        identities: impl IntoIterator<Item = Identity>,
    ) -> Result<Theory> {
        let mut th = Theory {
            name: name.into(),
            signature,
            identities: IndexSet::new(),
            renames: BTreeMap::new(),
        };
        for e in identities {
            th.add(e)?;
        }
        Ok(th)
    }

    /// Convenience constructor from DSL-style strings; panics on bad input.
    pub fn from_strs(name: &str, ops: &[(&str, usize)], axioms: &[&str]) -> Theory {
        let ids = axioms
            .iter()
            .map(|a| a.parse::<Identity>().expect("axiom syntax"));
        Theory::new(name, Signature::from_ops(ops.iter().copied()), ids)
            .expect("well-formed theory")
    }

    /// Every symbol of `e` is declared with the arity it is used at.
    pub fn check_identity(&self, e: &Identity) -> Result<()> {
        check_symbols(&self.signature, &e.lhs, None)?;
        check_symbols(&self.signature, &e.rhs, None)
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn identities(&self) -> impl ExactSizeIterator<Item = &Identity> {
        self.identities.iter()
    }

    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    pub fn identity(&self, i: usize) -> &Identity {
        &self.identities[i]
    }

    pub fn contains(&self, e: &Identity) -> bool {
        self.identities.contains(&e.canonicalize())
    }

    pub fn index_of(&self, e: &Identity) -> Option<usize> {
        self.identities.get_index_of(&e.canonicalize())
    }

    /// Adds an identity (canonicalized). Returns whether it was new.
    pub fn add(&mut self, e: Identity) -> Result<bool> {
        check_symbols(&self.signature, &e.lhs, None)?;
        check_symbols(&self.signature, &e.rhs, None)?;
        Ok(self.identities.insert(e.canonicalize()))
    }

    pub fn is_linear(&self) -> bool {
        self.identities.iter().all(Identity::is_linear)
    }

    /// Same name and signature, no identities.
    pub fn empty_like(&self) -> Theory {
        Theory {
            name: self.name.clone(),
            signature: self.signature.clone(),
            identities: IndexSet::new(),
            renames: self.renames.clone(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Theory {
        self.name = name.into();
        self
    }

    /// Rename operation symbols according to `map` (unmapped symbols kept).
    pub fn rename_symbols(&self, map: &BTreeMap<String, String>) -> Theory {
        let sig = Signature(
            self.signature
                .iter()
                .map(|(s, a)| {
                    let n = map.get(s.name()).map(String::as_str).unwrap_or(s.name());
                    (Sym::new(n), a)
                })
                .collect(),
        );
        let ids = self
            .identities
            .iter()
            .map(|e| Identity::new(rename_syms(&e.lhs, map), rename_syms(&e.rhs, map)));
        let mut th = Theory::new(self.name.clone(), sig, ids).expect("renaming preserves arities");
        th.renames = self.renames.clone();
        th
    }
}

impl PartialEq for Theory {
    /// Signature and identity set equality; the name is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.signature == other.signature && self.identities == other.identities
    }
}

pub(crate) fn rename_syms(t: &Term, map: &BTreeMap<String, String>) -> Term {
    match t {
        Term::Var(_) => t.clone(),
        Term::App(f, cs) => {
            let f = map.get(f.name()).map(Sym::new).unwrap_or_else(|| f.clone());
            Term::App(f, cs.iter().map(|c| rename_syms(c, map)).collect())
        }
    }
}

pub(crate) fn check_symbols(sig: &Signature, t: &Term, line: Option<usize>) -> Result<()> {
    for (f, n) in t.symbols() {
        match sig.arity(&f) {
            None => {
                return Err(Error::UnknownSymbol {
                    symbol: f.name().to_owned(),
                    line,
                })
            }
            Some(a) if a != n => {
                return Err(Error::ArityMismatch {
                    symbol: f.name().to_owned(),
                    expected: a,
                    found: n,
                    line: line.unwrap_or(0),
                })
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Idempotency status of one operation symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Idempotency {
    Explicit,
    Derivable,
    NotEstablished,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub theory: String,
    pub is_linear: bool,
    pub idempotency: IndexMap<String, Idempotency>,
    /// Identities that are not linear.
    pub non_linear: Vec<Identity>,
}

impl ValidationReport {
    pub fn is_idempotent(&self) -> bool {
        self.idempotency
            .values()
            .all(|s| *s != Idempotency::NotEstablished)
    }

    pub fn is_linear_idempotent(&self) -> bool {
        self.is_linear && self.is_idempotent()
    }

    pub fn not_established(&self) -> Vec<&str> {
        self.idempotency
            .iter()
            .filter(|(_, s)| **s == Idempotency::NotEstablished)
            .map(|(f, _)| f.as_str())
            .collect()
    }
}

/// `F(x, ..., x) ≈ x` for a symbol of the given arity.
pub fn idempotency_identity(f: &Sym, arity: usize) -> Identity {
    let x = Term::var("x");
    Identity::new(Term::App(f.clone(), vec![x.clone(); arity]), x)
}

/// Linearity and per-symbol idempotency.
///
/// Idempotency that is not stated explicitly is decided by flat saturation
/// for linear theories, and searched for with bounded rewriting otherwise.
pub fn validate(theory: &Theory) -> Result<ValidationReport> {
    for e in theory.identities() {
        check_symbols(theory.signature(), &e.lhs, None)?;
        check_symbols(theory.signature(), &e.rhs, None)?;
    }
    let non_linear: Vec<Identity> = theory
        .identities()
        .filter(|e| !e.is_linear())
        .cloned()
        .collect();
    let is_linear = non_linear.is_empty();

    let base = if is_linear {
        Some(crate::flatsat::saturate(
            theory,
            crate::flatsat::default_budget(theory),
        )?)
    } else {
        None
    };

    let mut idempotency = IndexMap::new();
    for (f, arity) in theory.signature().iter() {
        let goal = idempotency_identity(f, arity);
        let status = if theory.contains(&goal) {
            Idempotency::Explicit
        } else {
            let proved = match &base {
                Some(base) => base.entails(&goal)?,
                None => matches!(
                    crate::rewrite::bfs_prove(
                        theory,
                        &goal,
                        &crate::rewrite::SearchBounds::small()
                    ),
                    crate::rewrite::ProofSearchOutcome::Proved(_)
                ),
            };
            if proved {
                Idempotency::Derivable
            } else {
                Idempotency::NotEstablished
            }
        };
        idempotency.insert(f.name().to_owned(), status);
    }
    Ok(ValidationReport {
        theory: theory.name.clone(),
        is_linear,
        idempotency,
        non_linear,
    })
}

/// Validate and reject anything that is not linear idempotent.
pub fn require_linear_idempotent(theory: &Theory) -> Result<ValidationReport> {
    let report = validate(theory)?;
    if !report.is_linear {
        return Err(Error::NotLinearIdempotent(format!(
            "non-linear identities: {}",
            report
                .non_linear
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    if !report.is_idempotent() {
        return Err(Error::NotLinearIdempotent(format!(
            "idempotency not established for: {}",
            report.not_established().join(", ")
        )));
    }
    Ok(report)
}

fn fresh_symbol_name(base: &str, taken: &Signature) -> String {
    (2..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| !taken.contains(&Sym::new(n)))
        .expect("infinite supply")
}

/// The two join components with the right one renamed apart from the left.
pub fn join_components(left: &Theory, right: &Theory) -> (Theory, Theory) {
    let mut taken = left.signature().clone();
    let mut map = BTreeMap::new();
    for (f, a) in right.signature().iter() {
        let name = if taken.contains(f) {
            let fresh = fresh_symbol_name(f.name(), &taken);
            map.insert(f.name().to_owned(), fresh.clone());
            fresh
        } else {
            f.name().to_owned()
        };
        taken.insert(Sym::new(&name), a);
    }
    let mut renamed = right.rename_symbols(&map);
    renamed.renames.extend(map);
    (left.clone(), renamed)
}

/// Union of two theories over disjoint signatures. Clashing symbols of
/// `right` get a numeric suffix; the rename map is kept in `renames`.
pub fn join_disjoint(left: &Theory, right: &Theory) -> Theory {
    let (l, r) = join_components(left, right);
    let mut sig = l.signature().clone();
    for (f, a) in r.signature().iter() {
        sig.insert(f.clone(), a);
    }
    let ids = l.identities().chain(r.identities()).cloned();
    let mut th = Theory::new(format!("{}+{}", left.name, right.name), sig, ids)
        .expect("components are well formed");
    th.renames = l.renames.clone();
    th.renames.extend(r.renames.clone());
    th
}

/// Set equality of canonical identities over the same signature.
pub fn theory_equal(a: &Theory, b: &Theory) -> Result<bool> {
    if a.signature() != b.signature() {
        return Err(Error::SignatureMismatch(format!(
            "`{}` and `{}` have different signatures",
            a.name, b.name
        )));
    }
    Ok(a.identities == b.identities)
}

pub mod presets {
    //! A small corpus of linear idempotent presentations.

    use super::*;

    /// `p(x,y,y) ≈ x`, `p(y,y,x) ≈ x`.
    pub fn maltsev() -> Theory {
        Theory::from_strs("maltsev", &[("p", 3)], &["p(x,y,y) = x", "p(y,y,x) = x"])
    }

    pub fn majority() -> Theory {
        Theory::from_strs(
            "majority",
            &[("m", 3)],
            &["m(x,x,y) = x", "m(x,y,x) = x", "m(y,x,x) = x"],
        )
    }

    /// Idempotent commutative binary operation (no associativity: it is not linear).
    pub fn semilattice() -> Theory {
        Theory::from_strs(
            "semilattice",
            &[("m", 2)],
            &["m(x,x) = x", "m(x,y) = m(y,x)"],
        )
    }

    /// A single idempotent binary operation and nothing else.
    pub fn idempotent_binary() -> Theory {
        Theory::from_strs("idempotent-binary", &[("f", 2)], &["f(x,x) = x"])
    }

    /// Jónsson terms `j_0, ..., j_k` with `j_0`, `j_k` the outer projections;
    /// symbols `j1 .. j{k-1}`. Requires `k >= 2`.
    pub fn jonsson(k: usize) -> Theory {
        assert!(k >= 2, "jonsson chain needs k >= 2");
        let name = |i: usize| -> Term3 {
            if i == 0 {
                Term3::Proj(0)
            } else if i == k {
                Term3::Proj(2)
            } else {
                Term3::Sym(format!("j{i}"))
            }
        };
        let ops: Vec<(String, usize)> = (1..k).map(|i| (format!("j{i}"), 3)).collect();
        let mut axioms = Vec::new();
        for i in 1..k {
            axioms.push(format!("j{i}(x,y,x) = x"));
        }
        for i in 0..k {
            let (a, b) = (name(i), name(i + 1));
            let args = if i % 2 == 0 {
                ["x", "x", "y"]
            } else {
                ["x", "y", "y"]
            };
            axioms.push(format!("{} = {}", a.apply(&args), b.apply(&args)));
        }
        build(&format!("jonsson{k}"), &ops, &axioms)
    }

    /// Day terms `m_0, ..., m_k` (quaternary) with `m_0`, `m_k` the outer
    /// projections; symbols `d1 .. d{k-1}`. Requires `k >= 2`.
    pub fn day(k: usize) -> Theory {
        assert!(k >= 2, "day chain needs k >= 2");
        let name = |i: usize| -> Term3 {
            if i == 0 {
                Term3::Proj(0)
            } else if i == k {
                Term3::Proj(3)
            } else {
                Term3::Sym(format!("d{i}"))
            }
        };
        let ops: Vec<(String, usize)> = (1..k).map(|i| (format!("d{i}"), 4)).collect();
        let mut axioms = Vec::new();
        for i in 1..k {
            axioms.push(format!("d{i}(x,y,y,x) = x"));
        }
        for i in 0..k {
            let (a, b) = (name(i), name(i + 1));
            let args = if i % 2 == 0 {
                ["x", "x", "w", "w"]
            } else {
                ["x", "y", "y", "w"]
            };
            axioms.push(format!("{} = {}", a.apply(&args), b.apply(&args)));
        }
        build(&format!("day{k}"), &ops, &axioms)
    }

    /// Hagemann–Mitschke chain: `x ≈ q1(x,y,y)`, `q_i(x,x,y) ≈ q_{i+1}(x,y,y)`,
    /// `q_k(x,x,y) ≈ y`. Requires `k >= 1`.
    pub fn hagemann_mitschke(k: usize) -> Theory {
        assert!(k >= 1, "chain needs k >= 1");
        let ops: Vec<(String, usize)> = (1..=k).map(|i| (format!("q{i}"), 3)).collect();
        let mut axioms = vec!["x = q1(x,y,y)".to_owned()];
        for i in 1..k {
            axioms.push(format!("q{i}(x,x,y) = q{}(x,y,y)", i + 1));
        }
        axioms.push(format!("q{k}(x,x,y) = y"));
        build(&format!("hm{k}"), &ops, &axioms)
    }

    enum Term3 {
        Proj(usize),
        Sym(String),
    }

    impl Term3 {
        fn apply(&self, args: &[&str]) -> String {
            match self {
                Term3::Proj(i) => args[*i].to_owned(),
                Term3::Sym(f) => format!("{f}({})", args.join(",")),
            }
        }
    }

    fn build(name: &str, ops: &[(String, usize)], axioms: &[String]) -> Theory {
        let ops: Vec<(&str, usize)> = ops.iter().map(|(n, a)| (n.as_str(), *a)).collect();
        let axioms: Vec<&str> = axioms.iter().map(String::as_str).collect();
        Theory::from_strs(name, &ops, &axioms)
    }

    /// The default corpus.
    pub fn all() -> Vec<Theory> {
        vec![
            maltsev(),
            majority(),
            semilattice(),
            idempotent_binary(),
            jonsson(3),
            day(3),
            hagemann_mitschke(2),
            hagemann_mitschke(3),
        ]
    }
}

pub fn presets() -> Vec<Theory> {
    presets::all()
}
