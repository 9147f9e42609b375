//! Classical operation counts against quantum ledger totals as `n` grows.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::level_monomials;
use crate::qsim::qlearn::{quantum_learn_neighbors, QuantumLearnParams};
use crate::qsim::qsparsitron::NoiseMode;

use super::experiment::sample_model;
use super::generate::generate_model;
use super::metrics::loglog_fit;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub r: usize,
    pub ns: Vec<usize>,
    pub d: usize,
    pub eta: f64,
    pub lambda: f64,
    pub rho: f64,
    pub trials: usize,
    pub seed: u64,
    pub t: usize,
    pub m: usize,
    pub noise: NoiseMode,
}

impl ScalingConfig {
    pub fn new(r: usize, ns: Vec<usize>) -> Self {
        Self {
            r,
            ns,
            d: 3,
            eta: 0.4,
            lambda: 2.0,
            rho: 0.1,
            trials: 3,
            seed: 0,
            t: 2000,
            m: 1000,
            noise: NoiseMode::Uniform,
        }
    }
}

/// Means over trials at one `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    /// Features in the top-level Sparsitron call.
    pub feature_count: usize,
    /// `T (M + 1) K`: weight updates plus validation products of that call.
    pub classical_ops: f64,
    pub grover_iterations: f64,
    pub qram_queries: f64,
    pub sample_oracle_queries: f64,
    pub sparsitron_cost_units: f64,
    pub quantum_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Slopes {
    pub feature_count: f64,
    pub classical_ops: f64,
    pub grover_iterations: f64,
    pub quantum_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub config: ScalingConfig,
    pub rows: Vec<ScalingRow>,
    pub slopes: Slopes,
    /// First tabulated `n` where the quantum total drops below the classical count.
    pub crossover_observed: Option<usize>,
    /// Where the two fitted power laws meet.
    pub crossover_extrapolated: Option<f64>,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,feature_count,classical_ops,grover_iterations,qram_queries,sample_oracle_queries,sparsitron_cost_units,quantum_total\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.n,
                r.feature_count,
                r.classical_ops,
                r.grover_iterations,
                r.qram_queries,
                r.sample_oracle_queries,
                r.sparsitron_cost_units,
                r.quantum_total
            );
        }
        out
    }
}

fn one_trial(cfg: &ScalingConfig, n: usize, trial: usize) -> Result<ScalingRow> {
    let seed = cfg.seed ^ ((n as u64) << 32) ^ trial as u64;
    let model = generate_model(n, cfg.r, cfg.d, cfg.eta, cfg.lambda, seed)?;
    // the busiest vertex, smallest index on ties
    let u = (1..=n)
        .max_by_key(|&v| (model.neighbors(v).len(), std::cmp::Reverse(v)))
        .expect("n >= 1");
    let samples = sample_model(&model, cfg.t + cfg.m, seed.wrapping_add(1))?;
    let params = QuantumLearnParams {
        r: cfg.r,
        eta: cfg.eta,
        lambda: cfg.lambda,
        d: cfg.d,
        rho: cfg.rho,
        t: cfg.t,
        m: cfg.m,
        noise: cfg.noise,
        epsilon_factor: 0.5,
        seed: seed.wrapping_add(2),
    };
    let run = quantum_learn_neighbors(&samples, u, &params)?;
    let tally = run.ledger.totals();
    let k = level_monomials(n, u, cfg.r - 1).len();
    Ok(ScalingRow {
        n,
        feature_count: k,
        classical_ops: (cfg.t * (cfg.m + 1) * k) as f64,
        grover_iterations: tally.grover_iterations as f64,
        qram_queries: tally.qram_queries as f64,
        sample_oracle_queries: tally.sample_oracle_queries as f64,
        sparsitron_cost_units: tally.sparsitron_cost_units,
        quantum_total: tally.total_cost(),
    })
}

fn mean_row(rows: &[ScalingRow]) -> ScalingRow {
    let k = rows.len() as f64;
    let avg = |f: fn(&ScalingRow) -> f64| rows.iter().map(f).sum::<f64>() / k;
    ScalingRow {
        n: rows[0].n,
        feature_count: rows[0].feature_count,
        classical_ops: avg(|r| r.classical_ops),
        grover_iterations: avg(|r| r.grover_iterations),
        qram_queries: avg(|r| r.qram_queries),
        sample_oracle_queries: avg(|r| r.sample_oracle_queries),
        sparsitron_cost_units: avg(|r| r.sparsitron_cost_units),
        quantum_total: avg(|r| r.quantum_total),
    }
}

/// Runs the quantum learner on the busiest vertex of `trials` random models
/// per `n` and fits log-log slopes.
pub fn scaling_report(cfg: &ScalingConfig) -> Result<ScalingReport> {
    if cfg.ns.len() < 2 || cfg.trials == 0 {
        return Err(Error::InvalidConfig("need at least two sizes and one trial".into()));
    }
    let jobs: Vec<(usize, usize)> = cfg
        .ns
        .iter()
        .flat_map(|&n| (0..cfg.trials).map(move |i| (n, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(n, i)| one_trial(cfg, n, i))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<ScalingRow> = results.chunks(cfg.trials).map(mean_row).collect();

    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let col = |f: fn(&ScalingRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let fit = |ys: Vec<f64>| loglog_fit(&ns, &ys).unwrap_or((f64::NAN, f64::NAN));
    let (s_feat, _) = fit(col(|r| r.feature_count as f64));
    let (s_cl, b_cl) = fit(col(|r| r.classical_ops));
    let (s_gr, _) = fit(col(|r| r.grover_iterations));
    let (s_q, b_q) = fit(col(|r| r.quantum_total));
    let crossover_observed = rows.iter().find(|r| r.quantum_total < r.classical_ops).map(|r| r.n);
    let crossover_extrapolated = (s_cl > s_q).then(|| ((b_q - b_cl) / (s_cl - s_q)).exp());
    Ok(ScalingReport {
        config: cfg.clone(),
        rows,
        slopes: Slopes {
            feature_count: s_feat,
            classical_ops: s_cl,
            grover_iterations: s_gr,
            quantum_total: s_q,
        },
        crossover_observed,
        crossover_extrapolated,
    })
}
