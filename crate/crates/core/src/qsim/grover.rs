//! Grover search, counting, and repeated search for all marked items.
//!
//! The state stays in the plane spanned by the uniform superpositions over
//! marked and unmarked items, so two real amplitudes simulate it exactly.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::Rng;

use super::ledger::QueryLedger;

/// Marked subset of `[0, N')`, evaluated up front by the simulator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Indicator {
    n_prime: u64,
    solutions: Vec<u64>,
}

impl Indicator {
    pub fn from_fn(n_prime: u64, mut f: impl FnMut(u64) -> bool) -> Self {
        let solutions = (0..n_prime).filter(|&x| f(x)).collect();
        Self { n_prime, solutions }
    }

    pub fn from_solutions(n_prime: u64, mut solutions: Vec<u64>) -> Self {
        solutions.sort_unstable();
        solutions.dedup();
        assert!(solutions.last().map_or(true, |&s| s < n_prime), "solution outside domain");
        Self { n_prime, solutions }
    }

    pub fn n_prime(&self) -> u64 {
        self.n_prime
    }

    pub fn k(&self) -> u64 {
        self.solutions.len() as u64
    }

    pub fn solutions(&self) -> &[u64] {
        &self.solutions
    }

    pub fn contains(&self, x: u64) -> bool {
        self.solutions.binary_search(&x).is_ok()
    }

    /// Draws a measurement outcome given the probability mass on marked items.
    fn measure<R: Rng>(&self, p_marked: f64, rng: &mut R) -> u64 {
        let k = self.k();
        if k == self.n_prime || (k > 0 && rng.gen::<f64>() < p_marked) {
            return self.solutions[rng.gen_range(0..k as usize)];
        }
        // the r-th unmarked item, skipping over the sorted solutions
        let mut x = rng.gen_range(0..self.n_prime - k);
        for &s in &self.solutions {
            if s <= x {
                x += 1;
            } else {
                break;
            }
        }
        x
    }
}

/// `θ` with `sin θ = sqrt(k / N')`.
pub fn theta(k: u64, n_prime: u64) -> f64 {
    (k as f64 / n_prime as f64).sqrt().asin()
}

/// Closed form `sin²((2t + 1) θ)`.
pub fn success_probability(k: u64, n_prime: u64, t: u64) -> f64 {
    ((2 * t + 1) as f64 * theta(k, n_prime)).sin().powi(2)
}

/// Total amplitudes on the marked and unmarked subspaces after `t` iterations,
/// by applying the oracle and the reflection about the uniform state in turn.
pub fn amplitudes(k: u64, n_prime: u64, t: u64) -> (f64, f64) {
    let s_good = (k as f64 / n_prime as f64).sqrt();
    let s_bad = ((n_prime - k) as f64 / n_prime as f64).sqrt();
    let (mut good, mut bad) = (s_good, s_bad);
    for _ in 0..t {
        good = -good;
        let overlap = s_good * good + s_bad * bad;
        good = 2.0 * overlap * s_good - good;
        bad = 2.0 * overlap * s_bad - bad;
    }
    (good, bad)
}

/// Runs `t` iterations and measures once.
pub fn grover_measure<R: Rng>(ind: &Indicator, t: u64, rng: &mut R) -> u64 {
    let (good, _) = amplitudes(ind.k(), ind.n_prime(), t);
    ind.measure(good * good, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchOutcome {
    pub found: Option<u64>,
    pub iterations: u64,
    pub measurements: u64,
}

/// Finds one marked item with probability at least `1 - ρ`.
///
/// With a known count the iteration number is `⌊π / 4θ⌋`, repeated until the
/// failure probability drops below `ρ`. Without one, iteration counts are
/// drawn uniformly below a bound that grows by 6/5 per attempt, under an
/// iteration budget of `9 sqrt(N') ⌈log2(1/ρ)⌉`. Every measured candidate is
/// checked with one more oracle call.
pub fn grover_search<R: Rng>(
    ind: &Indicator,
    k_hint: Option<u64>,
    rho: f64,
    rng: &mut R,
    ledger: &mut QueryLedger,
    iteration_cost: f64,
) -> SearchOutcome {
    let n = ind.n_prime();
    let mut out = SearchOutcome {
        found: None,
        iterations: 0,
        measurements: 0,
    };
    let attempt = |t: u64, out: &mut SearchOutcome, ledger: &mut QueryLedger, rng: &mut R| {
        ledger.grover(t + 1, iteration_cost);
        out.iterations += t;
        out.measurements += 1;
        let x = grover_measure(ind, t, rng);
        if ind.contains(x) {
            out.found = Some(x);
        }
    };
    match k_hint {
        Some(0) => {}
        Some(k) => {
            let th = theta(k.min(n), n);
            let t = (PI / (4.0 * th)).floor() as u64;
            let p = ((2 * t + 1) as f64 * th).sin().powi(2);
            let reps = if p >= 1.0 - 1e-12 {
                1
            } else {
                (rho.ln() / (1.0 - p).ln()).ceil().max(1.0) as u64
            };
            for _ in 0..reps {
                attempt(t, &mut out, ledger, rng);
                if out.found.is_some() {
                    break;
                }
            }
        }
        None => {
            let budget = (9.0 * (n as f64).sqrt()).ceil() as u64 * log2_inv(rho);
            let cap = (n as f64).sqrt();
            let mut m = 1.0f64;
            let mut spent = 0;
            while spent < budget && out.found.is_none() {
                let t = rng.gen_range(0..m.ceil() as u64);
                attempt(t, &mut out, ledger, rng);
                spent += t + 1;
                m = (m * 6.0 / 5.0).min(cap.max(1.0));
            }
        }
    }
    out
}

/// `⌈log2(1/ρ)⌉`, at least 1.
pub fn log2_inv(rho: f64) -> u64 {
    (1.0 / rho).log2().ceil().max(1.0) as u64
}

/// Number of marked items: exact with probability at least `1 - ρ`.
///
/// The simulator knows the true count and replaces it by a neighbouring wrong
/// value with probability `min(failure_prob, ρ)`. The ledger is charged
/// `⌈sqrt(k N')⌉ ⌈log2(1/ρ)⌉` iterations, or `⌈sqrt N'⌉` when `k = 0`, which
/// is always reported exactly.
pub fn quantum_count<R: Rng>(
    ind: &Indicator,
    rho: f64,
    failure_prob: f64,
    rng: &mut R,
    ledger: &mut QueryLedger,
    iteration_cost: f64,
) -> u64 {
    let (k, n) = (ind.k(), ind.n_prime());
    if k == 0 {
        ledger.grover((n as f64).sqrt().ceil() as u64, iteration_cost);
        return 0;
    }
    let iterations = ((k * n) as f64).sqrt().ceil() as u64 * log2_inv(rho);
    ledger.grover(iterations, iteration_cost);
    if rng.gen::<f64>() < failure_prob.min(rho) {
        if k == n || (k > 0 && rng.gen::<bool>()) {
            k - 1
        } else {
            k + 1
        }
    } else {
        k
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollectOutcome {
    pub found: BTreeSet<u64>,
    pub k_estimate: u64,
    pub searches: u64,
}

/// Probability split and per-search failure rate for [`collect_all`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollectSchedule {
    pub rho_count: f64,
    pub rho_collect: f64,
    pub rho_search: f64,
    /// Injected counting failure rate (capped at `rho_count`).
    pub count_failure: f64,
}

/// `H_k = 1 + 1/2 + ... + 1/k`.
pub fn harmonic(k: u64) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}

/// Counts the marked items, then repeats searches until that many distinct
/// ones are seen. Each round allows `⌈2 k H_k / (1 - ρ_qs)⌉` searches (twice
/// the coupon-collector expectation, so a round fails with probability at
/// most 1/2); there are `⌈log2(1/ρ_cp)⌉` rounds.
pub fn collect_all<R: Rng>(
    ind: &Indicator,
    schedule: CollectSchedule,
    rng: &mut R,
    ledger: &mut QueryLedger,
    iteration_cost: f64,
) -> CollectOutcome {
    let k_hat = quantum_count(ind, schedule.rho_count, schedule.count_failure, rng, ledger, iteration_cost);
    let mut out = CollectOutcome {
        found: BTreeSet::new(),
        k_estimate: k_hat,
        searches: 0,
    };
    if k_hat == 0 {
        return out;
    }
    let per_round = (2.0 * k_hat as f64 * harmonic(k_hat) / (1.0 - schedule.rho_search)).ceil() as u64;
    let rounds = log2_inv(schedule.rho_collect);
    'rounds: for _ in 0..rounds {
        for _ in 0..per_round {
            let res = grover_search(ind, None, schedule.rho_search, rng, ledger, iteration_cost);
            out.searches += 1;
            if let Some(x) = res.found {
                out.found.insert(x);
            }
            if out.found.len() as u64 >= k_hat {
                break 'rounds;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn amplitudes_match_closed_form() {
        for n in [4u64, 16, 100, 1024] {
            for k in [1, 2, n / 4, n / 2, n] {
                for t in 0..12 {
                    let (g, b) = amplitudes(k, n, t);
                    assert!((g * g - success_probability(k, n, t)).abs() < 1e-9, "k {k} n {n} t {t}");
                    assert!((g * g + b * b - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn small_cases() {
        assert!((success_probability(1, 4, 1) - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut l = QueryLedger::new();
        let all = Indicator::from_fn(8, |_| true);
        let out = grover_search(&all, Some(8), 0.1, &mut rng, &mut l, 1.0);
        assert_eq!(out.iterations, 0);
        assert!(out.found.is_some());
        let one = Indicator::from_solutions(4, vec![2]);
        let out = grover_search(&one, Some(1), 0.1, &mut rng, &mut l, 1.0);
        assert_eq!((out.found, out.iterations), (Some(2), 1));
        let none = Indicator::from_fn(8, |_| false);
        assert_eq!(grover_search(&none, Some(0), 0.1, &mut rng, &mut l, 1.0).found, None);
        assert_eq!(grover_search(&none, None, 0.1, &mut rng, &mut l, 1.0).found, None);
    }

    #[test]
    fn measurement_lands_outside_solutions_when_unmarked() {
        let ind = Indicator::from_solutions(10, vec![0, 3, 9]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let x = ind.measure(0.0, &mut rng);
            assert!(x < 10 && !ind.contains(x));
        }
    }

    #[test]
    fn search_success_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = 0.1;
        for _ in 0..10 {
            let n = rng.gen_range(4..600u64);
            let k = rng.gen_range(1..=n / 2);
            let sols: Vec<u64> = (0..k).map(|i| i * (n / k)).collect();
            let ind = Indicator::from_solutions(n, sols);
            for hint in [Some(ind.k()), None] {
                let mut l = QueryLedger::new();
                let hits = (0..1000)
                    .filter(|_| grover_search(&ind, hint, rho, &mut rng, &mut l, 1.0).found.is_some())
                    .count();
                assert!(hits as f64 >= 1000.0 * (1.0 - rho), "n {n} k {} hint {hint:?}: {hits}", ind.k());
            }
        }
    }

    #[test]
    fn counting_exact_or_neighbour() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ind = Indicator::from_solutions(64, vec![1, 5, 9]);
        let mut l = QueryLedger::new();
        assert_eq!(quantum_count(&ind, 0.1, 0.0, &mut rng, &mut l, 1.0), 3);
        assert_eq!(l.totals().grover_iterations, 14 * 4);
        let mut wrong = 0;
        for _ in 0..2000 {
            let k = quantum_count(&ind, 0.1, 1.0, &mut rng, &mut l, 1.0);
            if k != 3 {
                assert!(k == 2 || k == 4);
                wrong += 1;
            }
        }
        assert!(wrong > 100 && wrong < 300);
        let zero = Indicator::from_fn(64, |_| false);
        let mut l = QueryLedger::new();
        assert_eq!(quantum_count(&zero, 0.1, 1.0, &mut rng, &mut l, 1.0), 0);
        assert_eq!(l.totals().grover_iterations, 8);
        let full = Indicator::from_fn(64, |_| true);
        assert_eq!(quantum_count(&full, 0.1, 0.0, &mut rng, &mut l, 1.0), 64);
    }

    #[test]
    fn collect_finds_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ind = Indicator::from_solutions(400, vec![3, 77, 150, 151, 399]);
        let schedule = CollectSchedule {
            rho_count: 0.01,
            rho_collect: 0.01,
            rho_search: 0.25,
            count_failure: 0.0,
        };
        for _ in 0..100 {
            let mut l = QueryLedger::new();
            let out = collect_all(&ind, schedule, &mut rng, &mut l, 1.0);
            assert_eq!(out.found.iter().copied().collect::<Vec<_>>(), ind.solutions());
        }
        let empty = Indicator::from_fn(400, |_| false);
        let out = collect_all(&empty, schedule, &mut rng, &mut QueryLedger::new(), 1.0);
        assert!(out.found.is_empty() && out.searches == 0);
    }
}
