//! The quantum neighbourhood learner: per level, a noisy quantum Sparsitron
//! followed by Grover search for every candidate string whose reconstructed
//! coefficient clears the threshold.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::learn::{choose_epsilon, feature_matrix, feature_monomials, labels, LevelRecord, NeighborResult, Threshold};
use crate::poly::Monomial;
use crate::sampler::SampleSet;
use crate::strings::{build_jwf, string_space, IndexString, SetFamily};

use super::grover::{collect_all, CollectSchedule, Indicator};
use super::ledger::QueryLedger;
use super::membership::member_or_empty;
use super::qram::SortedQram;
use super::qsparsitron::{quantum_sparsitron, reconstruct_coefficient, NoiseMode, NoiseModel};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FindOutcome {
    pub found: BTreeSet<Monomial>,
    pub k_estimate: u64,
    pub searches: u64,
    /// True number of marked strings, known to the simulator only.
    pub k_true: u64,
}

/// Queries made by one application of the search indicator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct IndicatorCost {
    /// QRAM queries of the `F̄_l` membership circuit.
    pub qram_queries: u64,
    pub qram_unit_cost: f64,
    /// Sample-oracle queries of the coefficient reconstruction.
    pub sample_queries: u64,
}

impl IndicatorCost {
    fn charge(&self, calls: u64, ledger: &mut QueryLedger) {
        ledger.qram(calls * self.qram_queries, self.qram_unit_cost);
        ledger.sample_oracle(calls * self.sample_queries);
    }
}

/// Finds every `s ∈ F_l` with `|q(s)| ≥ η` by counting and repeated search over
/// the whole string space. `F̄_l` membership runs through the circuit on
/// `f_bar_qram`; `q_access` supplies the reconstructed coefficient. Every
/// indicator application (Grover iteration or verification) is charged `cost`.
#[allow(clippy::too_many_arguments)]
pub fn find_all_maximal(
    family: &SetFamily,
    f_bar_qram: Option<&SortedQram>,
    q_access: &mut dyn FnMut(&IndexString) -> f64,
    eta: f64,
    schedule: CollectSchedule,
    cost: IndicatorCost,
    rng: &mut ChaCha8Rng,
    ledger: &mut QueryLedger,
) -> Result<FindOutcome> {
    let n = family.n;
    let len = family.r - 1;
    let n_prime = string_space(n, len)?;
    // oracle evaluations made while tabulating the indicator are covered by
    // the per-iteration charge
    let mut scratch = QueryLedger::new();
    let mut err = None;
    let ind = Indicator::from_fn(n_prime, |key| {
        let s = IndexString::from_key(key, n, len);
        if !family.member_level(&s) {
            return false;
        }
        match member_or_empty(f_bar_qram, key, &mut scratch) {
            Ok(true) => return false,
            Ok(false) => {}
            Err(e) => {
                err.get_or_insert(e);
                return false;
            }
        }
        debug_assert!(!family.f_bar.contains(&s));
        Threshold::Inclusive.passes(q_access(&s), eta)
    });
    if let Some(e) = err {
        return Err(e);
    }
    let before = ledger.totals().grover_iterations;
    let out = collect_all(&ind, schedule, rng, ledger, 0.0);
    cost.charge(ledger.totals().grover_iterations - before, ledger);
    Ok(FindOutcome {
        found: out
            .found
            .iter()
            .map(|&key| IndexString::from_key(key, n, len).to_subset())
            .collect(),
        k_estimate: out.k_estimate,
        searches: out.searches,
        k_true: ind.k(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuantumLearnParams {
    pub r: usize,
    pub eta: f64,
    pub lambda: f64,
    /// Degree bound; the level loop stops once `|S| ≥ d`.
    pub d: usize,
    pub rho: f64,
    pub t: usize,
    pub m: usize,
    pub noise: NoiseMode,
    /// Fraction of the coefficient-accuracy bound used as the Sparsitron target risk.
    pub epsilon_factor: f64,
    pub seed: u64,
}

impl QuantumLearnParams {
    fn validate(&self, samples: &SampleSet) -> Result<()> {
        if self.r < 2 {
            return Err(invalid!("need r >= 2, got {}", self.r));
        }
        if !(self.eta > 0.0) || !(self.lambda > 0.0) {
            return Err(invalid!("eta and lambda must be positive"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.epsilon_factor > 0.0 && self.epsilon_factor <= 1.0) {
            return Err(invalid!("epsilon factor must lie in (0, 1], got {}", self.epsilon_factor));
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

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumLevelRecord {
    pub l: usize,
    pub t_prime: usize,
    pub epsilon: f64,
    pub w_size: usize,
    pub f_bar_size: usize,
    pub k_true: u64,
    pub k_estimate: u64,
    pub searches: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumNeighborResult {
    pub result: NeighborResult,
    pub levels: Vec<QuantumLevelRecord>,
    pub ledger: QueryLedger,
}

/// Recovers the neighbourhood of `u` with the simulated quantum pipeline.
pub fn quantum_learn_neighbors(
    samples: &SampleSet,
    u: usize,
    params: &QuantumLearnParams,
) -> Result<QuantumNeighborResult> {
    params.validate(samples)?;
    let n = samples.n();
    if u == 0 || u > n {
        return Err(invalid!("vertex {u} outside 1..={n}"));
    }
    let r = params.r;
    let n_prime = string_space(n, r - 1)?;
    let rows = params.t + params.m;
    let y = labels(samples, rows, u);
    let eps = choose_epsilon(params.eta, params.lambda, r, params.epsilon_factor);
    let norm_bound = 2.0 * params.lambda;
    let split = (n * (r - 1)) as f64;
    let rho_level = params.rho / (2.0 * split);
    let rho_find = params.rho / (4.0 * split);
    let noise = NoiseModel::for_run(params.noise, eps, norm_bound);
    let schedule = CollectSchedule {
        rho_count: rho_find,
        rho_collect: rho_find,
        rho_search: 0.25,
        count_failure: if params.noise == NoiseMode::Zero { 0.0 } else { rho_find / 2.0 },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (u as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut ledger = QueryLedger::new();

    let mut neighbors = BTreeSet::new();
    let mut found: BTreeSet<Monomial> = BTreeSet::new();
    let mut per_level_q = Vec::new();
    let mut levels = Vec::new();
    let mut l = r - 1;
    while neighbors.len() < params.d && l >= 1 {
        let family = build_jwf(&found, n, u, l, r)?;

        ledger.set_phase(&format!("level{l}/qram"));
        let w_keys = family.keys(&family.w);
        let f_keys = family.keys(&family.f_bar);
        let w_qram = (!w_keys.is_empty())
            .then(|| SortedQram::build_charged(&w_keys, n_prime, &mut ledger))
            .transpose()?;
        let f_qram = (!f_keys.is_empty())
            .then(|| SortedQram::build_charged(&f_keys, n_prime, &mut ledger))
            .transpose()?;
        // the W QRAM backs the input map inside the Sparsitron's cost
        drop(w_qram);

        ledger.set_phase(&format!("level{l}/sparsitron"));
        let features = feature_monomials(&family);
        let x = feature_matrix(samples, rows, &features);
        let out = quantum_sparsitron(
            x.view(),
            &y,
            params.t,
            eps,
            rho_level,
            norm_bound,
            n_prime,
            noise,
            &mut rng,
            &mut ledger,
        )?;

        ledger.set_phase(&format!("level{l}/search"));
        let preds = out.predictions();
        let y_train = &y[..out.t_prime - 1];
        let mut scratch = QueryLedger::new();
        let mut coefficients = Vec::new();
        let mut q_access = |s: &IndexString| {
            let q = reconstruct_coefficient(s, &out, &preds, y_train, samples, &mut scratch);
            coefficients.push((s.to_subset(), q));
            q
        };
        let cost = IndicatorCost {
            qram_queries: f_qram.as_ref().map_or(0, |q| 4 * u64::from(q.address_bits()) + 2),
            qram_unit_cost: f_qram.as_ref().map_or(0.0, SortedQram::query_cost),
            sample_queries: ((out.t_prime - 1) * (r - 1)) as u64,
        };
        let hit = find_all_maximal(
            &family,
            f_qram.as_ref(),
            &mut q_access,
            params.eta,
            schedule,
            cost,
            &mut rng,
            &mut ledger,
        )?;

        levels.push(QuantumLevelRecord {
            l,
            t_prime: out.t_prime,
            epsilon: eps,
            w_size: family.w.len(),
            f_bar_size: family.f_bar.len(),
            k_true: hit.k_true,
            k_estimate: hit.k_estimate,
            searches: hit.searches,
        });
        per_level_q.push(LevelRecord {
            l,
            feature_count: features.len(),
            coefficients,
        });
        for m in hit.found {
            neighbors.extend(m.indices().iter().copied());
            found.insert(m);
        }
        l -= 1;
    }
    Ok(QuantumNeighborResult {
        result: NeighborResult {
            u,
            neighbors,
            maximal_found: found,
            per_level_q,
        },
        levels,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{learn_neighbors, LearnParams};
    use crate::poly::{mono, MrfModel, MultilinearPolynomial};
    use crate::sampler::exact_sample;

    fn triangle() -> SampleSet {
        let p = MultilinearPolynomial::from_terms(6, [(mono(&[1, 2, 3]), 1.0), (mono(&[4, 5]), 0.8)]).unwrap();
        exact_sample(&MrfModel::new(p, 3, 0.4, 2.0).unwrap(), 6000, 11).unwrap()
    }

    fn params(d: usize, noise: NoiseMode) -> QuantumLearnParams {
        QuantumLearnParams {
            r: 3,
            eta: 0.4,
            lambda: 2.0,
            d,
            rho: 0.1,
            t: 4000,
            m: 2000,
            noise,
            epsilon_factor: 0.5,
            seed: 3,
        }
    }

    #[test]
    fn zero_noise_matches_classical() {
        let samples = triangle();
        let classical = LearnParams {
            r: 3,
            eta: 0.4,
            lambda: 2.0,
            t: 4000,
            m: 2000,
        };
        for u in 1..=6 {
            let c = learn_neighbors(&samples, u, &classical).unwrap();
            let q = quantum_learn_neighbors(&samples, u, &params(5, NoiseMode::Zero)).unwrap();
            assert_eq!(q.result.neighbors, c.neighbors, "u = {u}");
            assert_eq!(q.result.maximal_found, c.maximal_found, "u = {u}");
            // reconstructed coefficients equal the classical ones on F_l
            for (ql, cl) in q.result.per_level_q.iter().zip(&c.per_level_q) {
                for (m, v) in &ql.coefficients {
                    let (_, cv) = cl.coefficients.iter().find(|(cm, _)| cm == m).unwrap();
                    assert_eq!(v.to_bits(), cv.to_bits());
                }
            }
        }
    }

    #[test]
    fn planted_triangle_under_noise_and_ledger() {
        let samples = triangle();
        for noise in [NoiseMode::Uniform, NoiseMode::Adversarial] {
            let q = quantum_learn_neighbors(&samples, 1, &params(2, noise)).unwrap();
            assert_eq!(q.result.neighbors, [2, 3].into_iter().collect());
            assert_eq!(q.levels.len(), 1, "stops at |S| = d after the top level");
            let t = q.ledger.totals();
            assert!(t.grover_iterations > 0 && t.sparsitron_cost_units > 0.0);
            assert!(q.ledger.phase("level2/search").grover_iterations > 0);
        }
        let q = quantum_learn_neighbors(&samples, 4, &params(2, NoiseMode::Uniform)).unwrap();
        assert_eq!(q.result.neighbors, [5].into_iter().collect());
        assert_eq!(q.levels.iter().map(|r| r.l).collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn empty_model_and_bad_input() {
        let p = MultilinearPolynomial::zero(4);
        let samples = exact_sample(&MrfModel::new(p, 3, 0.4, 2.0).unwrap(), 300, 1).unwrap();
        let mut pr = params(3, NoiseMode::Uniform);
        pr.t = 200;
        pr.m = 100;
        let q = quantum_learn_neighbors(&samples, 2, &pr).unwrap();
        assert!(q.result.neighbors.is_empty());
        assert!(q.levels.iter().all(|l| l.k_true == 0));
        pr.t = 400;
        assert!(quantum_learn_neighbors(&samples, 2, &pr).is_err());
    }

    #[test]
    fn find_all_with_planted_coefficients() {
        let n = 7;
        let planted: BTreeSet<Monomial> = [mono(&[2, 3]), mono(&[4, 6]), mono(&[5, 7])].into_iter().collect();
        let family = build_jwf(&[mono(&[2, 3, 4])].into_iter().collect(), n, 1, 2, 4).unwrap();
        let f_keys = family.keys(&family.f_bar);
        let qram = SortedQram::build(&f_keys, string_space(n, 3).unwrap()).unwrap();
        let mut q = |s: &IndexString| if planted.contains(&s.to_subset()) { 0.8 } else { 0.1 };
        let schedule = CollectSchedule {
            rho_count: 0.01,
            rho_collect: 0.01,
            rho_search: 0.25,
            count_failure: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ledger = QueryLedger::new();
        let cost = IndicatorCost {
            qram_queries: 14,
            qram_unit_cost: 1.0,
            sample_queries: 3,
        };
        let out = find_all_maximal(&family, Some(&qram), &mut q, 0.4, schedule, cost, &mut rng, &mut ledger).unwrap();
        // {2, 3} sits in F̄ under the found {2, 3, 4}
        let expected: BTreeSet<Monomial> = [mono(&[4, 6]), mono(&[5, 7])].into_iter().collect();
        assert_eq!(out.found, expected);
        assert_eq!(out.k_true, 2);
        let t = ledger.totals();
        assert_eq!(t.qram_queries, 14 * t.grover_iterations);
        assert_eq!(t.sample_oracle_queries, 3 * t.grover_iterations);
    }
}
