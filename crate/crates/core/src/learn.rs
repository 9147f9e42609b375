//! Neighborhood recovery by peeling maximal monomials of `p_u` level by level,
//! and whole-graph recovery from the per-vertex neighborhoods.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::poly::Monomial;
use crate::sampler::SampleSet;
use crate::sparsitron::{self, fold, Exact, Layout, SparsitronParams};
use crate::strings::{build_jwf, IndexString, SetFamily};

/// All `I ⊆ [n] ∖ {u}` with `1 ≤ |I| ≤ l`, in canonical-string order.
pub fn level_monomials(n: usize, u: usize, l: usize) -> Vec<Monomial> {
    fn extend(out: &mut Vec<Monomial>, prefix: &mut Vec<usize>, next: usize, n: usize, u: usize, l: usize) {
        for v in next..=n {
            if v == u {
                continue;
            }
            prefix.push(v);
            out.push(Monomial::new(prefix.clone()).expect("ascending by construction"));
            if prefix.len() < l {
                extend(out, prefix, v + 1, n, u, l);
            }
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if l > 0 {
        extend(&mut out, &mut Vec::new(), 1, n, u, l);
    }
    out.sort();
    out
}

/// Feature monomials at level `l`: the level monomials followed by `W_l`.
pub fn feature_monomials(family: &SetFamily) -> Vec<Monomial> {
    let mut out = level_monomials(family.n, family.u, family.l);
    out.extend(family.w.iter().map(IndexString::to_subset));
    out
}

/// `(z_I)` over the level-`l` feature monomials for one assignment.
pub fn build_features(z: &[i8], u: usize, l: usize, w: &BTreeSet<Monomial>) -> Result<Vec<f64>> {
    let n = z.len();
    if u == 0 || u > n {
        return Err(invalid!("vertex {u} outside 1..={n}"));
    }
    if w.iter().any(|m| m.contains(u)) {
        return Err(invalid!("W_l must avoid u = {u}"));
    }
    let mut monos = level_monomials(n, u, l);
    monos.extend(w.iter().cloned());
    Ok(monos.iter().map(|m| f64::from(m.eval(z))).collect())
}

/// Feature matrix over the first `rows` samples, one column per monomial.
pub fn feature_matrix(samples: &SampleSet, rows: usize, monos: &[Monomial]) -> Array2<f64> {
    let masks: Vec<u64> = monos.iter().map(Monomial::mask).collect();
    let mut x = Array2::zeros((rows, masks.len()));
    for (i, mut row) in x.outer_iter_mut().enumerate() {
        let z = samples.row(i);
        for (cell, &mask) in row.iter_mut().zip(&masks) {
            *cell = f64::from(Monomial::eval_mask(mask, z));
        }
    }
    x
}

/// Labels `Y = (1 - Z_u) / 2` over the first `rows` samples.
pub fn labels(samples: &SampleSet, rows: usize, u: usize) -> Vec<f64> {
    (0..rows).map(|m| samples.label(m, u)).collect()
}

/// `c · e^{-6 - 4λ - 2λ(r-1)} · η² / 2^{r+1}`.
pub fn choose_epsilon(eta: f64, lambda: f64, r: usize, c: f64) -> f64 {
    c * (-6.0 - 4.0 * lambda - 2.0 * lambda * (r as f64 - 1.0)).exp() * eta * eta
        / 2f64.powi(r as i32 + 1)
}

/// Supplies the coefficient estimate `q_l` on the feature monomials of a level.
pub trait LevelEstimator {
    fn estimate(&mut self, family: &SetFamily, features: &[Monomial]) -> Result<Vec<f64>>;
}

/// The Sparsitron with norm bound `2λ` on enlarged features.
pub struct SparsitronEstimator<'a> {
    pub samples: &'a SampleSet,
    pub t: usize,
    pub m: usize,
    pub lambda: f64,
}

impl LevelEstimator for SparsitronEstimator<'_> {
    fn estimate(&mut self, family: &SetFamily, features: &[Monomial]) -> Result<Vec<f64>> {
        let rows = self.t + self.m;
        let x = feature_matrix(self.samples, rows, features);
        let y = labels(self.samples, rows, family.u);
        let params = SparsitronParams::new(2.0 * self.lambda);
        let res = sparsitron::run(x.view(), &y, self.t, Layout::Enlarged, &params, &mut Exact)?;
        fold(&res.v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LearnParams {
    pub r: usize,
    pub eta: f64,
    pub lambda: f64,
    pub t: usize,
    pub m: usize,
}

impl LearnParams {
    fn validate(&self, samples: &SampleSet) -> Result<()> {
        if self.r < 2 {
            return Err(invalid!("need r >= 2, got {}", self.r));
        }
        if !(self.eta > 0.0) || !(self.lambda > 0.0) {
            return Err(invalid!("eta and lambda must be positive"));
        }
        if self.t < 2 || self.m < 1 {
            return Err(invalid!("need T >= 2 and M >= 1, got T = {}, M = {}", self.t, self.m));
        }
        if samples.len() < self.t + self.m {
            return Err(invalid!(
                "{} samples available, T + M = {} required",
                samples.len(),
                self.t + self.m
            ));
        }
        Ok(())
    }
}

/// Learned coefficients at one level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRecord {
    pub l: usize,
    pub feature_count: usize,
    pub coefficients: Vec<(Monomial, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeighborResult {
    pub u: usize,
    pub neighbors: BTreeSet<usize>,
    pub maximal_found: BTreeSet<Monomial>,
    pub per_level_q: Vec<LevelRecord>,
}

/// Comparison of `|q̂_l(I)|` against `η`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Threshold {
    Strict,
    Inclusive,
}

impl Threshold {
    pub fn passes(self, value: f64, eta: f64) -> bool {
        match self {
            Threshold::Strict => value.abs() > eta,
            Threshold::Inclusive => value.abs() >= eta,
        }
    }
}

/// The level loop, stopping once `|S| ≥ stop_at` or all levels are done.
pub fn peel_levels(
    n: usize,
    u: usize,
    r: usize,
    eta: f64,
    stop_at: usize,
    threshold: Threshold,
    estimator: &mut dyn LevelEstimator,
) -> Result<NeighborResult> {
    let mut neighbors = BTreeSet::new();
    let mut found: BTreeSet<Monomial> = BTreeSet::new();
    let mut per_level_q = Vec::new();
    let mut l = r - 1;
    while neighbors.len() < stop_at && l >= 1 {
        let family = build_jwf(&found, n, u, l, r)?;
        let features = feature_monomials(&family);
        let q = estimator.estimate(&family, &features)?;
        if q.len() != features.len() {
            return Err(invalid!("estimator returned {} coefficients for {} features", q.len(), features.len()));
        }
        let mut added = Vec::new();
        for (m, &c) in features.iter().zip(&q) {
            if m.len() != l || !threshold.passes(c, eta) {
                continue;
            }
            let s = IndexString::canonical(m, r)?;
            if family.f_bar.contains(&s) {
                continue;
            }
            added.push(m.clone());
        }
        for m in added {
            neighbors.extend(m.indices().iter().copied());
            found.insert(m);
        }
        per_level_q.push(LevelRecord {
            l,
            feature_count: features.len(),
            coefficients: features.into_iter().zip(q).collect(),
        });
        l -= 1;
    }
    Ok(NeighborResult {
        u,
        neighbors,
        maximal_found: found,
        per_level_q,
    })
}

/// Recovers the neighborhood of `u` from the first `T + M` samples.
pub fn learn_neighbors(samples: &SampleSet, u: usize, params: &LearnParams) -> Result<NeighborResult> {
    params.validate(samples)?;
    let n = samples.n();
    if u == 0 || u > n {
        return Err(invalid!("vertex {u} outside 1..={n}"));
    }
    let mut est = SparsitronEstimator {
        samples,
        t: params.t,
        m: params.m,
        lambda: params.lambda,
    };
    peel_levels(n, u, params.r, params.eta, n - 1, Threshold::Strict, &mut est)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphEstimate {
    pub n: usize,
    pub edges: BTreeSet<(usize, usize)>,
    /// Pairs found from only one endpoint.
    pub asymmetry: BTreeSet<(usize, usize)>,
    pub per_vertex: Vec<NeighborResult>,
}

impl GraphEstimate {
    pub fn from_neighborhoods(n: usize, per_vertex: Vec<NeighborResult>) -> Self {
        let mut edges = BTreeSet::new();
        let mut asymmetry = BTreeSet::new();
        let sets: BTreeMap<usize, &BTreeSet<usize>> =
            per_vertex.iter().map(|r| (r.u, &r.neighbors)).collect();
        for r in &per_vertex {
            for &v in &r.neighbors {
                let pair = (r.u.min(v), r.u.max(v));
                edges.insert(pair);
                if !sets.get(&v).map_or(false, |s| s.contains(&r.u)) {
                    asymmetry.insert(pair);
                }
            }
        }
        Self {
            n,
            edges,
            asymmetry,
            per_vertex,
        }
    }
}

/// Runs [`learn_neighbors`] for every vertex; `{u, v}` is an edge if either run finds it.
pub fn recover_graph(samples: &SampleSet, params: &LearnParams) -> Result<GraphEstimate> {
    params.validate(samples)?;
    let n = samples.n();
    let per_vertex = (1..=n)
        .into_par_iter()
        .map(|u| learn_neighbors(samples, u, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphEstimate::from_neighborhoods(n, per_vertex))
}
