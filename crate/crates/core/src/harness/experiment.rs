//! Recovery experiments: generate, sample, learn, score.

use std::path::PathBuf;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{learn_neighbors, recover_graph, GraphEstimate, LearnParams};
use crate::poly::MrfModel;
use crate::qsim::ledger::{QueryLedger, Tally};
use crate::qsim::qlearn::{quantum_learn_neighbors, QuantumLearnParams};
use crate::qsim::qsparsitron::NoiseMode;
use crate::sampler::{exact_sample, gibbs_sample, GibbsSchedule, SampleSet};

use super::generate::generate_model;
use super::metrics::Confusion;

/// Largest `n` sampled from the exact table; Gibbs beyond.
pub const EXACT_SAMPLING_MAX_N: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

/// Training and validation sizes, or `"auto"` for doubling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleCount {
    Fixed { t: usize, m: usize },
    Auto(AutoTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoSchedule {
    /// Validation size of the first attempt; training uses twice as many.
    pub start_m: usize,
    pub max_m: usize,
    pub target_rate: f64,
}

impl Default for AutoSchedule {
    fn default() -> Self {
        Self {
            start_m: 250,
            max_m: 16_000,
            target_rate: 0.9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Classical,
    Quantum,
    Both,
}

impl Pipeline {
    fn classical(self) -> bool {
        self != Pipeline::Quantum
    }
    fn quantum(self) -> bool {
        self != Pipeline::Classical
    }
}

fn default_rho() -> f64 {
    0.1
}
fn default_trials() -> usize {
    20
}
fn default_noise() -> NoiseMode {
    NoiseMode::Uniform
}
fn default_pipeline() -> Pipeline {
    Pipeline::Classical
}
fn default_samples() -> SampleCount {
    SampleCount::Auto(AutoTag::Auto)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub eta: f64,
    pub lambda: f64,
    #[serde(default = "default_samples")]
    pub samples: SampleCount,
    #[serde(default)]
    pub auto: AutoSchedule,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub noise: NoiseMode,
    #[serde(default = "default_pipeline")]
    pub pipeline: Pipeline,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(n: usize, r: usize, d: usize, eta: f64, lambda: f64) -> Self {
        Self {
            n,
            r,
            d,
            eta,
            lambda,
            samples: default_samples(),
            auto: AutoSchedule::default(),
            rho: default_rho(),
            trials: default_trials(),
            seed: 0,
            noise: default_noise(),
            pipeline: default_pipeline(),
            output: None,
        }
    }

    /// Hard errors as invalid-config; soft issues come back as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 2 || self.n > 64 {
            return bad(format!("n = {} outside 2..=64", self.n));
        }
        if self.r < 2 {
            return bad(format!("need r >= 2, got {}", self.r));
        }
        if !(self.eta > 0.0) || !(self.lambda > 0.0) {
            return bad("eta and lambda must be positive".into());
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if self.trials == 0 {
            return bad("need at least one trial".into());
        }
        match self.samples {
            SampleCount::Fixed { t, m } if t < 2 || m < 1 => {
                return bad(format!("need T >= 2 and M >= 1, got T = {t}, M = {m}"))
            }
            SampleCount::Auto(_) if self.auto.start_m < 1 || self.auto.max_m < self.auto.start_m => {
                return bad("auto schedule needs 1 <= start_m <= max_m".into())
            }
            _ => {}
        }
        let mut warnings = Vec::new();
        if self.r > self.d + 1 {
            warnings.push(format!(
                "r = {} exceeds d + 1 = {}; cliques are capped at d + 1 vertices",
                self.r,
                self.d + 1
            ));
        }
        Ok(warnings)
    }

    /// The `stream`-th seed derived from the base seed.
    pub fn derived_seed(&self, stream: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.next_u64()
    }
}

/// Exact draws for small `n`, a Gibbs chain with the default schedule beyond.
pub fn sample_model(model: &MrfModel, count: usize, seed: u64) -> Result<SampleSet> {
    if model.n <= EXACT_SAMPLING_MAX_N {
        exact_sample(model, count, seed)
    } else {
        gibbs_sample(model, count, GibbsSchedule::default_for(model.n), seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryMetrics {
    pub t: usize,
    pub m: usize,
    pub trials: usize,
    pub exact_recovery_rate: f64,
    pub precision: f64,
    pub recall: f64,
    pub confusion: Confusion,
    /// Quantum pipeline only: ledger totals summed over trials.
    pub ledger: Option<Tally>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RecoveryMetrics {
    fn from_trials(t: usize, m: usize, trials: &[(Confusion, Option<Tally>)], secs: f64) -> Self {
        let mut total = Confusion::default();
        let mut exact = 0;
        let mut ledger: Option<Tally> = None;
        for (c, tally) in trials {
            total.add(c);
            exact += usize::from(c.exact());
            if let Some(tally) = tally {
                ledger.get_or_insert_with(Tally::default).add(tally);
            }
        }
        Self {
            t,
            m,
            trials: trials.len(),
            exact_recovery_rate: exact as f64 / trials.len() as f64,
            precision: total.precision(),
            recall: total.recall(),
            confusion: total,
            ledger,
            wall_clock_secs: secs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: usize,
    pub m: usize,
    pub classical: Option<RecoveryMetrics>,
    pub quantum: Option<RecoveryMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
    /// Sample sizes tried, in order; the last one is the reported size.
    pub curve: Vec<CurvePoint>,
    /// `e^r e^{λ r} ln(n r / ρ η) / η⁴`: the sample bound with every hidden constant set to 1.
    pub theory_m_unit_constants: f64,
}

impl ExperimentReport {
    pub fn last(&self) -> &CurvePoint {
        self.curve.last().expect("at least one point")
    }
}

pub fn theory_m_unit_constants(n: usize, r: usize, eta: f64, lambda: f64, rho: f64) -> f64 {
    let r = r as f64;
    r.exp() * (lambda * r).exp() * (n as f64 * r / (rho * eta)).ln() / eta.powi(4)
}

/// Learns the whole graph with the quantum pipeline, one vertex at a time.
pub fn quantum_recover_graph(samples: &SampleSet, params: &QuantumLearnParams) -> Result<(GraphEstimate, QueryLedger)> {
    let n = samples.n();
    let runs = (1..=n)
        .into_par_iter()
        .map(|u| quantum_learn_neighbors(samples, u, params))
        .collect::<Result<Vec<_>>>()?;
    let mut ledger = QueryLedger::new();
    let mut per_vertex = Vec::with_capacity(n);
    for run in runs {
        ledger.merge(&run.ledger);
        per_vertex.push(run.result);
    }
    Ok((GraphEstimate::from_neighborhoods(n, per_vertex), ledger))
}

fn run_point(cfg: &ExperimentConfig, t: usize, m: usize) -> Result<CurvePoint> {
    let start = Instant::now();
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let model = generate_model(cfg.n, cfg.r, cfg.d, cfg.eta, cfg.lambda, cfg.derived_seed(2 * i as u64))?;
            let samples = sample_model(&model, t + m, cfg.derived_seed(2 * i as u64 + 1))?;
            let truth = model.edges();
            let classical = if cfg.pipeline.classical() {
                let params = LearnParams {
                    r: cfg.r,
                    eta: cfg.eta,
                    lambda: cfg.lambda,
                    t,
                    m,
                };
                let est = recover_graph(&samples, &params)?;
                Some((Confusion::from_edges(cfg.n, &truth, &est.edges), None))
            } else {
                None
            };
            let quantum = if cfg.pipeline.quantum() {
                let params = QuantumLearnParams {
                    r: cfg.r,
                    eta: cfg.eta,
                    lambda: cfg.lambda,
                    d: cfg.d,
                    rho: cfg.rho,
                    t,
                    m,
                    noise: cfg.noise,
                    epsilon_factor: 0.5,
                    seed: cfg.derived_seed(1 << 32 | i as u64),
                };
                let (est, ledger) = quantum_recover_graph(&samples, &params)?;
                Some((
                    Confusion::from_edges(cfg.n, &truth, &est.edges),
                    Some(ledger.totals().clone()),
                ))
            } else {
                None
            };
            Ok((classical, quantum))
        })
        .collect::<Result<Vec<_>>>()?;
    let secs = start.elapsed().as_secs_f64();
    let classical: Vec<_> = trials.iter().filter_map(|t| t.0.clone()).collect();
    let quantum: Vec<_> = trials.iter().filter_map(|t| t.1.clone()).collect();
    Ok(CurvePoint {
        t,
        m,
        classical: (!classical.is_empty()).then(|| RecoveryMetrics::from_trials(t, m, &classical, secs)),
        quantum: (!quantum.is_empty()).then(|| RecoveryMetrics::from_trials(t, m, &quantum, secs)),
    })
}

/// Runs the configured trials; with `"auto"` samples, doubles `M` (and
/// `T = 2M`) until every pipeline reaches the target exact-recovery rate or
/// the cap is hit.
pub fn run_recovery_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let warnings = cfg.validate()?;
    let mut curve = Vec::new();
    match cfg.samples {
        SampleCount::Fixed { t, m } => curve.push(run_point(cfg, t, m)?),
        SampleCount::Auto(_) => {
            let mut m = cfg.auto.start_m;
            loop {
                let point = run_point(cfg, 2 * m, m)?;
                let ok = [&point.classical, &point.quantum]
                    .iter()
                    .all(|p| p.as_ref().map_or(true, |p| p.exact_recovery_rate >= cfg.auto.target_rate));
                curve.push(point);
                if ok || 2 * m > cfg.auto.max_m {
                    break;
                }
                m *= 2;
            }
        }
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        warnings,
        curve,
        theory_m_unit_constants: theory_m_unit_constants(cfg.n, cfg.r, cfg.eta, cfg.lambda, cfg.rho),
    })
}

/// One point of a per-neighbourhood sample-size search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalPoint {
    pub t: usize,
    pub m: usize,
    pub exact_rate: f64,
}

/// Sample sizes needed to recover the neighbourhood of the busiest vertex
/// exactly in a `target_rate` fraction of trials, doubling `M` (with
/// `T = 2M`) from `schedule.start_m`. Returns every point tried; the last
/// one met the target unless the cap was reached first.
pub fn local_sample_curve(cfg: &ExperimentConfig) -> Result<Vec<LocalPoint>> {
    cfg.validate()?;
    let setups = (0..cfg.trials)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let model = generate_model(cfg.n, cfg.r, cfg.d, cfg.eta, cfg.lambda, cfg.derived_seed(2 * i as u64))?;
            let u = (1..=cfg.n)
                .max_by_key(|&v| (model.neighbors(v).len(), std::cmp::Reverse(v)))
                .expect("n >= 2");
            let samples = sample_model(&model, 3 * cfg.auto.max_m, cfg.derived_seed(2 * i as u64 + 1))?;
            Ok((model.neighbors(u), u, samples))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut curve = Vec::new();
    let mut m = cfg.auto.start_m;
    loop {
        let params = LearnParams {
            r: cfg.r,
            eta: cfg.eta,
            lambda: cfg.lambda,
            t: 2 * m,
            m,
        };
        let hits = setups
            .par_iter()
            .map(|(truth, u, samples)| {
                learn_neighbors(samples, *u, &params).map(|res| usize::from(&res.neighbors == truth))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum::<usize>();
        let rate = hits as f64 / cfg.trials as f64;
        curve.push(LocalPoint {
            t: 2 * m,
            m,
            exact_rate: rate,
        });
        if rate >= cfg.auto.target_rate || 2 * m > cfg.auto.max_m {
            return Ok(curve);
        }
        m *= 2;
    }
}
