//! Fixed-length index strings over `{0} ∪ [n]` and the candidate families
//! built from them.
//!
//! A string of length `r - 1` names the monomial of its nonzero entries.
//! Canonical strings list those entries in ascending order followed by zero
//! padding, which makes each subset correspond to exactly one string. As
//! integers (base `n + 1`, first entry most significant) canonical strings
//! sort in the same order as their monomials.

use std::collections::BTreeSet;

use serde_json::json;

use crate::error::{invalid, Error, Result};
use crate::poly::{Monomial, MultilinearPolynomial};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct IndexString(Vec<usize>);

impl IndexString {
    pub fn new(entries: Vec<usize>) -> Self {
        Self(entries)
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The monomial `I(S)`: nonzero entries, sorted and deduplicated.
    pub fn to_subset(&self) -> Monomial {
        Monomial::from_unsorted(self.0.iter().copied().filter(|&j| j != 0))
    }

    /// Ascending subset entries followed by zeros, of length `r - 1`.
    pub fn canonical(subset: &Monomial, r: usize) -> Result<Self> {
        let len = r.saturating_sub(1);
        if subset.len() > len {
            return Err(invalid!(
                "subset {subset:?} has {} elements, strings hold r - 1 = {len}",
                subset.len()
            ));
        }
        let mut entries = subset.indices().to_vec();
        entries.resize(len, 0);
        Ok(Self(entries))
    }

    /// Strictly ascending nonzero entries followed only by zeros.
    pub fn is_canonical(&self) -> bool {
        let nz = self.0.iter().take_while(|&&j| j != 0).count();
        self.0[nz..].iter().all(|&j| j == 0) && self.0[..nz].windows(2).all(|w| w[0] < w[1])
    }

    /// Base-`(n + 1)` integer with the first entry most significant.
    pub fn key(&self, n: usize) -> u64 {
        self.0
            .iter()
            .fold(0u64, |acc, &j| acc * (n as u64 + 1) + j as u64)
    }

    pub fn from_key(mut key: u64, n: usize, len: usize) -> Self {
        let base = n as u64 + 1;
        let mut entries = vec![0; len];
        for slot in entries.iter_mut().rev() {
            *slot = (key % base) as usize;
            key /= base;
        }
        Self(entries)
    }
}

/// Number of strings of length `len` over `{0, ..., n}`, or an error if it
/// does not fit in a `u64`.
pub fn string_space(n: usize, len: usize) -> Result<u64> {
    (n as u64 + 1)
        .checked_pow(len as u32)
        .ok_or_else(|| Error::UnsupportedSize(format!("(n + 1)^{len} overflows for n = {n}")))
}

/// Every string of length `len` over `{0, ..., n}` in key order.
pub fn all_strings(n: usize, len: usize) -> impl Iterator<Item = IndexString> {
    let total = string_space(n, len).expect("string space fits in u64");
    (0..total).map(move |k| IndexString::from_key(k, n, len))
}

/// `S ∈ H_l`: canonical, nonempty, at most `l` variables, and avoiding `u`.
pub fn member_h(s: &IndexString, u: usize, l: usize) -> bool {
    if !s.is_canonical() {
        return false;
    }
    let size = s.entries().iter().filter(|&&j| j != 0).count();
    size > 0 && size <= l && !s.entries().contains(&u)
}

/// `μ = min(2^d - 1, d^{r-1})`, the bound on `|W_l|`.
pub fn mu_bound(d: usize, r: usize) -> u64 {
    let pow2 = 1u64.checked_shl(d as u32).map_or(u64::MAX, |v| v - 1);
    let poly = (d as u64).saturating_pow(r.saturating_sub(1) as u32);
    pow2.min(poly)
}

/// `κ = min(2^d / √d, d^{r-2})`, the bound on `|F̄_l|`.
pub fn kappa_bound(d: usize, r: usize) -> f64 {
    if d == 0 {
        return 0.0;
    }
    let a = 2f64.powi(d as i32) / (d as f64).sqrt();
    let b = (d as f64).powi(r as i32 - 2);
    a.min(b)
}

/// The families at level `l` for vertex `u`, given the maximal monomials of
/// size above `l` found so far. `F_l` is represented by its predicate.
#[derive(Clone, Debug, PartialEq)]
pub struct SetFamily {
    pub n: usize,
    pub r: usize,
    pub u: usize,
    pub l: usize,
    pub j: BTreeSet<IndexString>,
    pub w: BTreeSet<IndexString>,
    pub f_bar: BTreeSet<IndexString>,
}

pub fn build_jwf(
    maximal: &BTreeSet<Monomial>,
    n: usize,
    u: usize,
    l: usize,
    r: usize,
) -> Result<SetFamily> {
    if r < 2 {
        return Err(invalid!("need r >= 2, got {r}"));
    }
    if l == 0 || l > r - 1 {
        return Err(invalid!("level {l} outside 1..={}", r - 1));
    }
    if u == 0 || u > n {
        return Err(invalid!("vertex {u} outside 1..={n}"));
    }
    string_space(n, r - 1)?;
    let mut j = BTreeSet::new();
    let mut w = BTreeSet::new();
    let mut f_bar = BTreeSet::new();
    for m in maximal {
        if m.len() <= l || m.len() > r - 1 {
            return Err(invalid!("{m:?} has size outside ({l}, {}]", r - 1));
        }
        if m.contains(u) || m.max_index() > n {
            return Err(invalid!("{m:?} contains u = {u} or exceeds n = {n}"));
        }
        j.insert(IndexString::canonical(m, r)?);
        for sub in m.subsets() {
            if sub.len() > l {
                w.insert(IndexString::canonical(&sub, r)?);
            } else if sub.len() == l {
                f_bar.insert(IndexString::canonical(&sub, r)?);
            }
        }
    }
    Ok(SetFamily {
        n,
        r,
        u,
        l,
        j,
        w,
        f_bar,
    })
}

impl SetFamily {
    /// `S ∈ H_l ∖ H_{l-1}`: canonical with exactly `l` variables, avoiding `u`.
    pub fn member_level(&self, s: &IndexString) -> bool {
        member_h(s, self.u, self.l) && !(self.l > 1 && member_h(s, self.u, self.l - 1))
    }

    pub fn member_f(&self, s: &IndexString) -> bool {
        self.member_level(s) && !self.f_bar.contains(s)
    }

    pub fn member_w(&self, s: &IndexString) -> bool {
        self.w.contains(s)
    }

    /// Explicit `F_l`; enumerates `(n + 1)^{r-1}` strings, so for small instances only.
    pub fn f_explicit(&self) -> BTreeSet<IndexString> {
        all_strings(self.n, self.r - 1)
            .filter(|s| self.member_f(s))
            .collect()
    }

    pub fn keys(&self, set: &BTreeSet<IndexString>) -> Vec<u64> {
        set.iter().map(|s| s.key(self.n)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let dump = |set: &BTreeSet<IndexString>| -> Vec<Vec<usize>> {
            set.iter().map(|s| s.entries().to_vec()).collect()
        };
        json!({
            "u": self.u,
            "l": self.l,
            "J": dump(&self.j),
            "W": dump(&self.w),
            "F_bar": dump(&self.f_bar),
        })
    }
}

/// `p_{u,l}`: the part of `p_u` on monomials of size at most `l` or in `W_l`.
pub fn level_polynomial(p_u: &MultilinearPolynomial, family: &SetFamily) -> MultilinearPolynomial {
    let terms = p_u
        .terms()
        .iter()
        .filter(|(m, _)| {
            m.len() <= family.l
                || IndexString::canonical(m, family.r).map_or(false, |s| family.w.contains(&s))
        })
        .map(|(m, &c)| (m.clone(), c));
    MultilinearPolynomial::from_terms(p_u.n(), terms).expect("terms taken from a valid polynomial")
}
