//! Random identifiable models with bounded degree.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::poly::{Monomial, MrfModel, MultilinearPolynomial};

/// Largest coefficient magnitude drawn before rescaling.
pub const COEFFICIENT_CAP: f64 = 1.0;

/// Placement attempts per vertex; placement stops after this many misses.
const ATTEMPTS_PER_VERTEX: usize = 8;

/// A random model on `n` vertices whose terms are cliques of size `2..=r`
/// (none contained in another), with maximum degree at most `d`,
/// `|coefficients| ∈ [η, max(η, 1)]` and `max_u ‖∂_u p‖₁ ≤ λ`.
///
/// Clique size is capped at `d + 1`, so `d = 0` yields the empty model.
/// Fails with an invalid-config error when even a single clique at
/// magnitude `η` would break the `λ` bound.
pub fn generate_model(n: usize, r: usize, d: usize, eta: f64, lambda: f64, seed: u64) -> Result<MrfModel> {
    if n == 0 || n > 64 {
        return Err(Error::InvalidConfig(format!("n = {n} outside 1..=64")));
    }
    if r < 2 {
        return Err(Error::InvalidConfig(format!("need r >= 2, got {r}")));
    }
    if !(eta > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidConfig("eta and lambda must be positive".into()));
    }
    let max_size = r.min(d + 1).min(n);
    if max_size >= 2 && eta > lambda * (1.0 - 1e-9) {
        return Err(Error::InvalidConfig(format!(
            "eta = {eta} exceeds lambda = {lambda}; no term fits the derivative bound"
        )));
    }
    // the small margin absorbs rounding in the derivative sums
    let target = lambda * (1.0 - 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = vec![BTreeSet::new(); n + 1];
    // terms containing each vertex
    let mut touching = vec![0usize; n + 1];
    let mut cliques: Vec<Monomial> = Vec::new();
    let mut misses = 0;
    while max_size >= 2 && misses < ATTEMPTS_PER_VERTEX * n {
        let size = rng.gen_range(2..=max_size);
        let c = Monomial::from_unsorted(sample(&mut rng, n, size).into_iter().map(|i| i + 1));
        if fits(&c, &cliques, &adj, &touching, d, eta, target) {
            for &a in c.indices() {
                touching[a] += 1;
                for &b in c.indices() {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
            cliques.push(c);
            misses = 0;
        } else {
            misses += 1;
        }
    }

    let mut coeffs: Vec<f64> = cliques
        .iter()
        .map(|_| eta + (COEFFICIENT_CAP.max(eta) - eta) * rng.gen::<f64>())
        .collect();
    // shrink the excess above η at each overloaded vertex; shrinking only
    // lowers other vertices' norms, so one pass suffices
    for u in 1..=n {
        let members: Vec<usize> = (0..cliques.len()).filter(|&i| cliques[i].contains(u)).collect();
        let total: f64 = members.iter().map(|&i| coeffs[i]).sum();
        if total <= target {
            continue;
        }
        let floor = eta * members.len() as f64;
        let f = ((target - floor) / (total - floor)).max(0.0);
        for &i in &members {
            coeffs[i] = eta + (coeffs[i] - eta) * f;
        }
    }
    let terms = cliques.into_iter().zip(coeffs).map(|(m, c)| {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        (m, sign * c)
    });
    let poly = MultilinearPolynomial::from_terms(n, terms)?;
    let model = MrfModel::new(poly, r, eta, lambda)?;
    let report = model.check_identifiable();
    if !report.is_valid() {
        return Err(Error::InvalidConfig(format!("generated model fails validation: {report:?}")));
    }
    Ok(model)
}

fn fits(
    c: &Monomial,
    cliques: &[Monomial],
    adj: &[BTreeSet<usize>],
    touching: &[usize],
    d: usize,
    eta: f64,
    target: f64,
) -> bool {
    if cliques.iter().any(|o| c.is_subset_of(o) || o.is_subset_of(c)) {
        return false;
    }
    c.indices().iter().all(|&a| {
        let new = c.indices().iter().filter(|&&b| b != a && !adj[a].contains(&b)).count();
        adj[a].len() + new <= d && (touching[a] + 1) as f64 * eta <= target
    })
}
