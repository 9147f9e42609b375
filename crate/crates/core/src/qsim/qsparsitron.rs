//! The quantum Sparsitron at the oracle level.
//!
//! The classical engine runs unchanged; the inner products it consumes are
//! perturbed within the error bounds the quantum estimators guarantee, and the
//! ledger is charged the quantum run time. Coefficients are rebuilt afterwards
//! one string at a time from the recorded `h` sequence.

use ndarray::ArrayView2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sampler::{sigmoid, SampleSet};
use crate::sparsitron::{self, expert_loss, scaled_weight, InnerProductNoise, Layout, SparsitronParams, WeightNorm};
use crate::strings::IndexString;

use super::grover::log2_inv;
use super::ledger::QueryLedger;
use super::oracles::monomial_oracle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Zero,
    Uniform,
    /// Every estimate is off by the full bound, pulling predictions toward
    /// 1/2 and inflating the norm so coefficients shrink toward the threshold.
    Adversarial,
}

impl std::str::FromStr for NoiseMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(NoiseMode::Zero),
            "uniform" => Ok(NoiseMode::Uniform),
            "adversarial" => Ok(NoiseMode::Adversarial),
            other => Err(invalid!("unknown noise mode {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseModel {
    pub mode: NoiseMode,
    /// `ε / 32λ²` on each training inner product.
    pub h_error_bound: f64,
    /// `ε / 32λ²` relative error on the norm estimate.
    pub gamma_rel_error_bound: f64,
    /// `ε / 16λ` on each validation inner product.
    pub z_error_bound: f64,
    /// Chance that a single estimate misses its bound; such an estimate is
    /// off by four times the bound instead.
    pub failure_prob: f64,
}

impl NoiseModel {
    /// Bounds for a run with target risk `eps` and norm bound `lambda`.
    pub fn for_run(mode: NoiseMode, eps: f64, lambda: f64) -> Self {
        let zero = mode == NoiseMode::Zero;
        let b = if zero { 0.0 } else { eps / (32.0 * lambda * lambda) };
        Self {
            mode,
            h_error_bound: b,
            gamma_rel_error_bound: b,
            z_error_bound: if zero { 0.0 } else { eps / (16.0 * lambda) },
            failure_prob: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self::for_run(NoiseMode::Zero, 0.0, 1.0)
    }
}

/// [`InnerProductNoise`] drawing perturbations from a [`NoiseModel`].
pub struct OracleNoise<'a> {
    pub model: NoiseModel,
    pub rng: &'a mut ChaCha8Rng,
    /// Largest injected `|Δh|`, `|Δz|` and `|ΔΓ| / Γ`.
    pub max_injected: (f64, f64, f64),
}

impl<'a> OracleNoise<'a> {
    pub fn new(model: NoiseModel, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            model,
            rng,
            max_injected: (0.0, 0.0, 0.0),
        }
    }

    fn delta(&mut self, bound: f64, toward: f64) -> f64 {
        let d = match self.model.mode {
            NoiseMode::Zero => return 0.0,
            NoiseMode::Uniform => self.rng.gen_range(-bound..=bound),
            NoiseMode::Adversarial => -bound * if toward < 0.0 { -1.0 } else { 1.0 },
        };
        if self.model.failure_prob > 0.0 && self.rng.gen::<f64>() < self.model.failure_prob {
            4.0 * d
        } else {
            d
        }
    }
}

impl InnerProductNoise for OracleNoise<'_> {
    fn training(&mut self, _t: usize, exact: f64) -> f64 {
        let d = self.delta(self.model.h_error_bound, exact);
        self.max_injected.0 = self.max_injected.0.max(d.abs());
        exact + d
    }

    fn validation(&mut self, _t: usize, values: &mut [f64]) {
        if self.model.mode == NoiseMode::Zero {
            return;
        }
        for v in values.iter_mut() {
            let d = self.delta(self.model.z_error_bound, *v);
            self.max_injected.1 = self.max_injected.1.max(d.abs());
            *v += d;
        }
    }

    fn norm(&mut self, exact: WeightNorm) -> WeightNorm {
        // adversarial: inflate, so every reconstructed coefficient shrinks
        let d = match self.model.mode {
            NoiseMode::Adversarial => -self.delta(self.model.gamma_rel_error_bound, 1.0),
            _ => self.delta(self.model.gamma_rel_error_bound, 1.0),
        };
        self.max_injected.2 = self.max_injected.2.max(d.abs());
        WeightNorm {
            log_scale: exact.log_scale,
            rel_norm: exact.rel_norm * (1.0 + d),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumSparsitronOutput {
    /// Selected iteration, 1-based.
    pub t_prime: usize,
    /// Training inner products as estimated, for every step.
    pub h: Vec<f64>,
    /// Norm estimate at `t'`.
    pub gamma: WeightNorm,
    pub beta: f64,
    /// Norm bound the run was made with.
    pub lambda: f64,
    pub risks: Vec<f64>,
    /// The classical coefficient vector at `t'` over the `2K + 1` experts,
    /// computed with the estimated norm; kept for cross-checks.
    pub v: Vec<f64>,
    pub max_injected: (f64, f64, f64),
}

impl QuantumSparsitronOutput {
    /// Predictions `σ(λ h^{(τ)})` for `τ < t'`.
    pub fn predictions(&self) -> Vec<f64> {
        self.h[..self.t_prime - 1]
            .iter()
            .map(|&h| sigmoid(self.lambda * h))
            .collect()
    }

    /// `λ' ² T² M sqrt(N') / ε · log2(1/ρ)`.
    pub fn cost_units(lambda: f64, t: usize, m: usize, n_prime: u64, eps: f64, rho: f64) -> f64 {
        lambda * lambda * (t as f64).powi(2) * m as f64 * (n_prime as f64).sqrt() / eps * log2_inv(rho) as f64
    }
}

/// Runs the Sparsitron on enlarged features `x` (first `t` rows train, the
/// rest validate) with inner products perturbed by `noise`, charging the
/// quantum run time for a string space of size `n_prime`.
#[allow(clippy::too_many_arguments)]
pub fn quantum_sparsitron(
    x: ArrayView2<f64>,
    y: &[f64],
    t: usize,
    eps: f64,
    rho: f64,
    lambda: f64,
    n_prime: u64,
    noise: NoiseModel,
    rng: &mut ChaCha8Rng,
    ledger: &mut QueryLedger,
) -> Result<QuantumSparsitronOutput> {
    if !(eps > 0.0) || !(rho > 0.0 && rho < 1.0) {
        return Err(invalid!("need eps > 0 and rho in (0, 1), got eps = {eps}, rho = {rho}"));
    }
    let mut hook = OracleNoise::new(noise, rng);
    let res = sparsitron::run(x, y, t, Layout::Enlarged, &SparsitronParams::new(lambda), &mut hook)?;
    ledger.sparsitron(QuantumSparsitronOutput::cost_units(lambda, t, x.nrows() - t, n_prime, eps, rho));
    let ln_beta = res.beta.ln();
    let v = res
        .cum_loss
        .iter()
        .map(|&l| scaled_weight(l, ln_beta, res.norm, lambda))
        .collect();
    Ok(QuantumSparsitronOutput {
        t_prime: res.t_star,
        h: res.h,
        gamma: res.norm,
        beta: res.beta,
        lambda,
        risks: res.risks,
        v,
        max_injected: hook.max_injected,
    })
}

/// `q_s = λ (φ(X_s) - φ(-X_s)) / Γ` with `φ(±X_s) = β^{Σ_{τ<t'} loss_τ(±X_s)}`,
/// where `X_s` is read through the monomial oracle on each training sample.
/// `predictions` and `labels` cover `τ < t'`.
pub fn reconstruct_coefficient(
    s: &IndexString,
    out: &QuantumSparsitronOutput,
    predictions: &[f64],
    labels: &[f64],
    samples: &SampleSet,
    ledger: &mut QueryLedger,
) -> f64 {
    let (mut plus, mut minus) = (0.0, 0.0);
    for (tau, (&pred, &y)) in predictions.iter().zip(labels).enumerate() {
        let x = f64::from(monomial_oracle(samples, tau, s, ledger));
        plus += expert_loss(pred, y, x);
        minus += expert_loss(pred, y, -x);
    }
    let ln_beta = out.beta.ln();
    scaled_weight(plus, ln_beta, out.gamma, out.lambda) - scaled_weight(minus, ln_beta, out.gamma, out.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{feature_matrix, labels as label_vec, level_monomials};
    use crate::poly::{mono, MrfModel, MultilinearPolynomial};
    use crate::sampler::exact_sample;
    use crate::sparsitron::{fold, Exact};
    use rand::SeedableRng;

    fn fixture() -> (SampleSet, Vec<crate::poly::Monomial>) {
        let p = MultilinearPolynomial::from_terms(
            5,
            [(mono(&[1, 2, 3]), 0.8), (mono(&[3, 4]), -0.6), (mono(&[2, 5]), 0.5)],
        )
        .unwrap();
        let model = MrfModel::new(p, 3, 0.4, 2.0).unwrap();
        let samples = exact_sample(&model, 900, 7).unwrap();
        (samples, level_monomials(5, 1, 2))
    }

    #[test]
    fn zero_noise_matches_classical_bitwise() {
        let (samples, monos) = fixture();
        let (t, m) = (600, 300);
        let x = feature_matrix(&samples, t + m, &monos);
        let y = label_vec(&samples, t + m, 1);
        let lambda = 4.0;
        let classical = sparsitron::run(x.view(), &y, t, Layout::Enlarged, &SparsitronParams::new(lambda), &mut Exact)
            .unwrap();
        let folded = fold(&classical.v).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ledger = QueryLedger::new();
        let q = quantum_sparsitron(x.view(), &y, t, 0.1, 0.1, lambda, 36, NoiseModel::zero(), &mut rng, &mut ledger)
            .unwrap();
        assert_eq!(q.t_prime, classical.t_star);
        assert_eq!(q.h, classical.h);
        assert_eq!(q.gamma, classical.norm);
        let preds = q.predictions();
        for (j, mon) in monos.iter().enumerate() {
            let s = IndexString::canonical(mon, 3).unwrap();
            let got = reconstruct_coefficient(&s, &q, &preds, &y[..q.t_prime - 1], &samples, &mut ledger);
            assert_eq!(got.to_bits(), folded[j].to_bits(), "{mon:?}");
        }
        assert!(ledger.totals().sparsitron_cost_units > 0.0);
    }

    #[test]
    fn first_iterate_gives_zero() {
        let (samples, _) = fixture();
        let out = QuantumSparsitronOutput {
            t_prime: 1,
            h: vec![0.3],
            gamma: WeightNorm {
                log_scale: 0.0,
                rel_norm: 9.0,
            },
            beta: 0.9,
            lambda: 4.0,
            risks: vec![0.25],
            v: vec![],
            max_injected: (0.0, 0.0, 0.0),
        };
        let s = IndexString::new(vec![2, 3]);
        let q = reconstruct_coefficient(&s, &out, &out.predictions(), &[], &samples, &mut QueryLedger::new());
        assert_eq!(q, 0.0);
    }

    #[test]
    fn noise_stays_within_bounds_and_coefficients_bounded() {
        let (samples, monos) = fixture();
        let (t, m) = (500, 200);
        let x = feature_matrix(&samples, t + m, &monos);
        let y = label_vec(&samples, t + m, 1);
        let lambda = 4.0;
        for (seed, mode) in [(1, NoiseMode::Uniform), (2, NoiseMode::Adversarial)] {
            let model = NoiseModel::for_run(mode, 0.05, lambda);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ledger = QueryLedger::new();
            let q = quantum_sparsitron(x.view(), &y, t, 0.05, 0.1, lambda, 36, model, &mut rng, &mut ledger).unwrap();
            assert!(q.max_injected.0 <= model.h_error_bound);
            assert!(q.max_injected.1 <= model.z_error_bound);
            assert!(q.max_injected.2 <= model.gamma_rel_error_bound);
            if mode == NoiseMode::Adversarial {
                assert_eq!(q.max_injected.0, model.h_error_bound);
            }
            let preds = q.predictions();
            for mon in &monos {
                let s = IndexString::canonical(mon, 3).unwrap();
                let got = reconstruct_coefficient(&s, &q, &preds, &y[..q.t_prime - 1], &samples, &mut ledger);
                // each φ is at most the largest expert weight
                assert!(got.abs() <= lambda / q.gamma.rel_norm + 1e-12);
            }
        }
    }

    #[test]
    fn parses_modes() {
        assert_eq!("adversarial".parse::<NoiseMode>().unwrap(), NoiseMode::Adversarial);
        assert!("loud".parse::<NoiseMode>().is_err());
    }
}
