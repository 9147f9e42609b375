//! Multilinear polynomials over the hypercube `{-1, +1}^n`.
//!
//! Vertices are 1-based ids in `1..=n`. Assignments are slices of `±1`
//! (`i8`) or, on the hot paths, a packed `u64` where bit `i - 1` set means
//! `z_i = +1`. Packed forms limit `n` to 64.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest vertex count supported by the packed representations.
pub const MAX_VERTICES: usize = 64;

/// A monomial `Z_I`, stored as its strictly increasing index set `I`.
///
/// The empty set is the constant monomial. The derived ordering is
/// lexicographic on the index sequence, which coincides with the order of
/// zero-padded canonical strings read as base-`(n + 1)` integers.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Monomial(Vec<usize>);

impl Monomial {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.iter().any(|&i| i == 0) {
            return Err(invalid!("vertex ids are 1-based, got 0 in {indices:?}"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid!("monomial indices must be strictly increasing: {indices:?}"));
        }
        Ok(Self(indices))
    }

    /// Builds a monomial from any collection of ids, sorting and dropping repeats.
    pub fn from_unsorted<I: IntoIterator<Item = usize>>(ids: I) -> Self {
        let set: BTreeSet<usize> = ids.into_iter().collect();
        Self(set.into_iter().collect())
    }

    pub fn constant() -> Self {
        Self(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn is_subset_of(&self, other: &Monomial) -> bool {
        // both sorted: merge walk
        let mut it = other.0.iter();
        'outer: for &a in &self.0 {
            for &b in it.by_ref() {
                if b == a {
                    continue 'outer;
                }
                if b > a {
                    return false;
                }
            }
            return false;
        }
        true
    }

    pub fn is_strict_subset_of(&self, other: &Monomial) -> bool {
        self.len() < other.len() && self.is_subset_of(other)
    }

    pub fn max_index(&self) -> usize {
        self.0.last().copied().unwrap_or(0)
    }

    /// Bit mask with bit `i - 1` set for every `i` in the monomial.
    pub fn mask(&self) -> u64 {
        self.0.iter().fold(0u64, |m, &i| m | (1u64 << (i - 1)))
    }

    pub fn with(&self, v: usize) -> Monomial {
        Monomial::from_unsorted(self.0.iter().copied().chain(std::iter::once(v)))
    }

    pub fn without(&self, v: usize) -> Monomial {
        Monomial(self.0.iter().copied().filter(|&i| i != v).collect())
    }

    /// All subsets of this monomial (including the empty set and itself).
    pub fn subsets(&self) -> Vec<Monomial> {
        let k = self.0.len();
        (0u32..(1u32 << k))
            .map(|bits| {
                Monomial(
                    (0..k)
                        .filter(|b| bits & (1 << b) != 0)
                        .map(|b| self.0[b])
                        .collect(),
                )
            })
            .collect()
    }

    /// `Z_I(z)` on an unpacked assignment.
    pub fn eval(&self, z: &[i8]) -> i8 {
        self.0.iter().fold(1i8, |acc, &i| acc * z[i - 1])
    }

    /// `Z_I(z)` for a packed assignment and a precomputed mask.
    #[inline]
    pub fn eval_mask(mask: u64, z: u64) -> i8 {
        // product of ±1 is -1 iff an odd number of the factors are -1
        if (mask & !z).count_ones() & 1 == 1 {
            -1
        } else {
            1
        }
    }
}

impl TryFrom<Vec<usize>> for Monomial {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Monomial::new(v)
    }
}

impl From<Monomial> for Vec<usize> {
    fn from(m: Monomial) -> Self {
        m.0
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Shorthand for building a monomial from a literal list of ids.
///
/// Panics on ids that are not strictly increasing; meant for fixtures.
pub fn mono(ids: &[usize]) -> Monomial {
    Monomial::new(ids.to_vec()).expect("fixture monomial")
}

/// A sparse multilinear polynomial `p(Z) = Σ_I p̂(I) Z_I` on `n` variables.
///
/// Zero coefficients are never stored, so an absent monomial means
/// `p̂(I) = 0` exactly.
#[derive(Clone, PartialEq, Default)]
pub struct MultilinearPolynomial {
    n: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl MultilinearPolynomial {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    /// Builds a polynomial, summing repeated monomials and dropping zeros.
    pub fn from_terms<I>(n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Self::zero(n);
        for (m, c) in terms {
            p.add_term(m, c)?;
        }
        Ok(p)
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) -> Result<()> {
        if m.max_index() > self.n {
            return Err(invalid!("monomial {m:?} out of range for n = {}", self.n));
        }
        if !c.is_finite() {
            return Err(invalid!("non-finite coefficient {c} on {m:?}"));
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                if c != 0.0 {
                    v.insert(c);
                }
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, f64> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient `p̂(I)`, zero when absent.
    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::len).max().unwrap_or(0)
    }

    pub fn evaluate(&self, z: &[i8]) -> Result<f64> {
        check_assignment(self.n, z)?;
        Ok(self
            .terms
            .iter()
            .map(|(m, &c)| c * f64::from(m.eval(z)))
            .sum())
    }

    /// Evaluates on a packed assignment (`n ≤ 64`).
    pub fn evaluate_packed(&self, z: u64) -> f64 {
        self.terms
            .iter()
            .map(|(m, &c)| c * f64::from(Monomial::eval_mask(m.mask(), z)))
            .sum()
    }

    /// `∂_u p = Σ_{J : u ∉ J} p̂(J ∪ {u}) Z_J`.
    pub fn partial_derivative(&self, u: usize) -> Result<Self> {
        self.check_vertex(u)?;
        let terms = self
            .terms
            .iter()
            .filter(|(m, _)| m.contains(u))
            .map(|(m, &c)| (m.without(u), c))
            .collect();
        Ok(Self { n: self.n, terms })
    }

    /// `p_u = -2 ∂_u p`, the polynomial whose sigmoid gives `E[(1 - Z_u)/2 | Z_{-u}]`.
    pub fn derive_pu(&self, u: usize) -> Result<Self> {
        let mut d = self.partial_derivative(u)?;
        for c in d.terms.values_mut() {
            *c *= -2.0;
        }
        Ok(d)
    }

    /// `‖p‖₁ = Σ_I |p̂(I)|`.
    pub fn one_norm(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).sum()
    }

    /// Monomials with nonzero coefficient that no other nonzero monomial strictly contains.
    pub fn maximal_monomials(&self) -> BTreeSet<Monomial> {
        // Larger monomials first: a monomial is dominated iff it sits inside an
        // already accepted maximal one, since every nonzero superset is itself
        // inside some maximal monomial.
        let mut by_size: Vec<&Monomial> = self.terms.keys().collect();
        by_size.sort_by_key(|m| std::cmp::Reverse(m.len()));
        let mut maximal: Vec<&Monomial> = Vec::new();
        for m in by_size {
            if !maximal.iter().any(|big| m.is_strict_subset_of(big)) {
                maximal.push(m);
            }
        }
        maximal.into_iter().cloned().collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(m, &c)| (m.clone(), c * factor))
            .filter(|(_, c)| *c != 0.0)
            .collect();
        Self { n: self.n, terms }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(invalid!("dimension mismatch: {} vs {}", self.n, other.n));
        }
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), -c)?;
        }
        Ok(out)
    }

    /// Copy with the constant monomial removed.
    pub fn without_constant(&self) -> Self {
        let mut out = self.clone();
        out.terms.remove(&Monomial::constant());
        out
    }

    fn check_vertex(&self, u: usize) -> Result<()> {
        if u == 0 || u > self.n {
            return Err(invalid!("vertex {u} out of range 1..={}", self.n));
        }
        Ok(())
    }
}

impl fmt::Debug for MultilinearPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}·Z{m:?}")?;
        }
        Ok(())
    }
}

pub(crate) fn check_assignment(n: usize, z: &[i8]) -> Result<()> {
    if z.len() != n {
        return Err(invalid!("assignment has length {}, expected {n}", z.len()));
    }
    if let Some(bad) = z.iter().find(|&&v| v != 1 && v != -1) {
        return Err(invalid!("assignment entries must be ±1, found {bad}"));
    }
    Ok(())
}

/// Packs a `±1` assignment into a `u64` (bit `i - 1` set iff `z_i = +1`).
pub fn pack(z: &[i8]) -> u64 {
    z.iter()
        .enumerate()
        .fold(0u64, |acc, (i, &v)| if v > 0 { acc | (1 << i) } else { acc })
}

pub fn unpack(z: u64, n: usize) -> Vec<i8> {
    (0..n).map(|i| if z >> i & 1 == 1 { 1 } else { -1 }).collect()
}

/// An r-wise binary MRF: `P[Z = z] ∝ exp(p(z))`.
#[derive(Clone, Debug, PartialEq)]
pub struct MrfModel {
    pub n: usize,
    pub r: usize,
    pub poly: MultilinearPolynomial,
    /// Identifiability floor on maximal coefficients.
    pub eta: f64,
    /// Bound on every `‖∂_u p‖₁`.
    pub lambda: f64,
}

/// One reason a model fails the identifiability/derivative-norm conditions.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    WeakMaximalCoefficient { monomial: Monomial, coeff: f64 },
    DerivativeNorm { vertex: usize, norm: f64 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdentifiabilityReport {
    pub violations: Vec<Violation>,
}

impl IdentifiabilityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl MrfModel {
    pub fn new(poly: MultilinearPolynomial, r: usize, eta: f64, lambda: f64) -> Result<Self> {
        let n = poly.n();
        if n == 0 || n > MAX_VERTICES {
            return Err(Error::UnsupportedSize(format!(
                "n = {n}, supported range is 1..={MAX_VERTICES}"
            )));
        }
        if r == 0 {
            return Err(invalid!("clique size bound r must be positive"));
        }
        if poly.degree() > r {
            return Err(invalid!(
                "polynomial degree {} exceeds r = {r}",
                poly.degree()
            ));
        }
        if !(eta > 0.0) || !(lambda >= 0.0) {
            return Err(invalid!("need eta > 0 and lambda >= 0, got {eta}, {lambda}"));
        }
        Ok(Self {
            n,
            r,
            poly,
            eta,
            lambda,
        })
    }

    /// `max_u ‖∂_u p‖₁`.
    pub fn max_derivative_norm(&self) -> f64 {
        (1..=self.n)
            .map(|u| {
                self.poly
                    .partial_derivative(u)
                    .map(|d| d.one_norm())
                    .unwrap_or(0.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn check_identifiable(&self) -> IdentifiabilityReport {
        let mut violations = Vec::new();
        for m in self.poly.maximal_monomials() {
            let c = self.poly.coeff(&m);
            if c.abs() < self.eta {
                violations.push(Violation::WeakMaximalCoefficient {
                    monomial: m,
                    coeff: c,
                });
            }
        }
        for u in 1..=self.n {
            let norm = self
                .poly
                .partial_derivative(u)
                .map(|d| d.one_norm())
                .unwrap_or(0.0);
            if norm > self.lambda {
                violations.push(Violation::DerivativeNorm { vertex: u, norm });
            }
        }
        IdentifiabilityReport { violations }
    }

    /// Vertices sharing a nonzero monomial with `u`.
    pub fn neighbors(&self, u: usize) -> BTreeSet<usize> {
        self.poly
            .terms()
            .keys()
            .filter(|m| m.contains(u))
            .flat_map(|m| m.indices().iter().copied())
            .filter(|&v| v != u)
            .collect()
    }

    /// Edges of the dependency graph as ordered pairs `(a, b)` with `a < b`.
    pub fn edges(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for m in self.poly.terms().keys() {
            let ids = m.indices();
            for a in 0..ids.len() {
                for b in a + 1..ids.len() {
                    out.insert((ids[a], ids[b]));
                }
            }
        }
        out
    }

    pub fn max_degree(&self) -> usize {
        (1..=self.n).map(|u| self.neighbors(u).len()).max().unwrap_or(0)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            n: self.n,
            r: self.r,
            eta: self.eta,
            lambda: self.lambda,
            terms: self
                .poly
                .terms()
                .iter()
                .map(|(m, &c)| TermRecord {
                    indices: m.indices().to_vec(),
                    coeff: c,
                })
                .collect(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        let mut poly = MultilinearPolynomial::zero(file.n);
        for t in file.terms {
            poly.add_term(Monomial::new(t.indices)?, t.coeff)?;
        }
        Self::new(poly, file.r, file.eta, file.lambda)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk model representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub r: usize,
    pub eta: f64,
    pub lambda: f64,
    pub terms: Vec<TermRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub indices: Vec<usize>,
    pub coeff: f64,
}
