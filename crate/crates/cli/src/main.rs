use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use qmrf_core::harness::experiment::sample_model;
use qmrf_core::harness::{
    generate_model, run_recovery_experiment, scaling_report, ExperimentConfig, ScalingConfig,
};
use qmrf_core::learn::{learn_neighbors, recover_graph, GraphEstimate, LearnParams};
use qmrf_core::sampler::{exact_sample, gibbs_sample, GibbsSchedule, SampleSet};
use qmrf_core::{Error, MrfModel};
use serde_json::json;

#[derive(Parser)]
#[command(name = "qmrf", version, about = "Structure learning for r-wise Markov random fields")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Auto,
    Exact,
    Gibbs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Zero,
    Uniform,
    Adversarial,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a random identifiable model.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        r: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 0.4)]
        eta: f64,
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample from a model file; `.csv` outputs are text, anything else binary.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        thinning: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classical recovery of one neighbourhood or the whole graph.
    LearnClassical {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 3)]
        r: usize,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        lambda: f64,
        /// Training examples; defaults to two thirds of the file.
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        vertex: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated quantum recovery with a query ledger.
    LearnQsim {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 3)]
        r: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        #[arg(long, value_enum, default_value_t = Noise::Uniform)]
        noise: Noise,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        vertex: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recovery trials from a JSON experiment config.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Exit with status 3 when the exact-recovery target is missed.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ledger totals and classical counts against n, as CSV.
    Scaling {
        #[arg(long, default_value_t = 3)]
        r: usize,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 2000)]
        t: usize,
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Noise::Uniform)]
        noise: Noise,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full report with fitted slopes.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Summarize a report written by `compare`.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

enum Failure {
    Error(Error),
    CheckMiss(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::CheckMiss(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn noise_mode(n: Noise) -> qmrf_core::qsim::qsparsitron::NoiseMode {
    use qmrf_core::qsim::qsparsitron::NoiseMode;
    match n {
        Noise::Zero => NoiseMode::Zero,
        Noise::Uniform => NoiseMode::Uniform,
        Noise::Adversarial => NoiseMode::Adversarial,
    }
}

fn load_samples(path: &Path) -> Result<SampleSet, Error> {
    if path.extension().map_or(false, |e| e == "csv") {
        SampleSet::read_csv(fs::File::open(path)?)
    } else {
        SampleSet::load(path)
    }
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn split(samples: &SampleSet, t: Option<usize>, m: Option<usize>) -> (usize, usize) {
    let total = samples.len();
    let t = t.unwrap_or(2 * total / 3);
    (t, m.unwrap_or(total.saturating_sub(t)))
}

fn graph_json(g: &GraphEstimate) -> serde_json::Value {
    json!({
        "n": g.n,
        "edges": g.edges,
        "asymmetric": g.asymmetry,
        "neighbors": g.per_vertex.iter().map(|r| json!({"u": r.u, "neighbors": r.neighbors})).collect::<Vec<_>>(),
    })
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Generate { n, r, d, eta, lambda, seed, out } => {
            let model = generate_model(n, r, d, eta, lambda, seed)?;
            model.save(&out)?;
            eprintln!("{} terms, {} edges, max degree {}", model.poly.len(), model.edges().len(), model.max_degree());
        }
        Cmd::Sample { model, count, seed, method, burn_in, thinning, out } => {
            let model = MrfModel::load(&model)?;
            let mut schedule = GibbsSchedule::default_for(model.n);
            if let Some(b) = burn_in {
                schedule.burn_in = b;
            }
            if let Some(t) = thinning {
                schedule.thinning = t;
            }
            let samples = match method {
                Method::Auto => sample_model(&model, count, seed)?,
                Method::Exact => exact_sample(&model, count, seed)?,
                Method::Gibbs => gibbs_sample(&model, count, schedule, seed)?,
            };
            if out.extension().map_or(false, |e| e == "csv") {
                samples.write_csv(fs::File::create(&out).map_err(Error::from)?)?;
            } else {
                samples.save(&out)?;
            }
        }
        Cmd::LearnClassical { samples, r, eta, lambda, t, m, vertex, out } => {
            let samples = load_samples(&samples)?;
            let (t, m) = split(&samples, t, m);
            let params = LearnParams { r, eta, lambda, t, m };
            let value = match vertex {
                Some(u) => serde_json::to_value(learn_neighbors(&samples, u, &params)?).map_err(Error::from)?,
                None => graph_json(&recover_graph(&samples, &params)?),
            };
            emit(&value, out.as_deref())?;
        }
        Cmd::LearnQsim { samples, r, d, eta, lambda, rho, noise, seed, t, m, vertex, out } => {
            use qmrf_core::harness::experiment::quantum_recover_graph;
            use qmrf_core::qsim::qlearn::{quantum_learn_neighbors, QuantumLearnParams};
            let samples = load_samples(&samples)?;
            let (t, m) = split(&samples, t, m);
            let params = QuantumLearnParams {
                r,
                eta,
                lambda,
                d,
                rho,
                t,
                m,
                noise: noise_mode(noise),
                epsilon_factor: 0.5,
                seed,
            };
            let value = match vertex {
                Some(u) => serde_json::to_value(quantum_learn_neighbors(&samples, u, &params)?).map_err(Error::from)?,
                None => {
                    let (g, ledger) = quantum_recover_graph(&samples, &params)?;
                    let mut v = graph_json(&g);
                    v["ledger"] = serde_json::to_value(&ledger).map_err(Error::from)?;
                    v
                }
            };
            emit(&value, out.as_deref())?;
        }
        Cmd::Compare { config, check, out } => {
            let cfg: ExperimentConfig =
                serde_json::from_str(&fs::read_to_string(&config).map_err(Error::from)?).map_err(|e| {
                    Error::InvalidConfig(format!("{}: {e}", config.display()))
                })?;
            let start = Instant::now();
            let report = run_recovery_experiment(&cfg)?;
            eprintln!("{} point(s) in {:.1} s", report.curve.len(), start.elapsed().as_secs_f64());
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let target = out.as_deref().or(cfg.output.as_deref());
            emit(&serde_json::to_value(&report).map_err(Error::from)?, target)?;
            if check {
                let last = report.last();
                for (name, p) in [("classical", &last.classical), ("quantum", &last.quantum)] {
                    if let Some(p) = p {
                        if p.exact_recovery_rate < cfg.auto.target_rate {
                            return Err(Failure::CheckMiss(format!(
                                "{name} exact recovery {:.2} < {:.2} at M = {}",
                                p.exact_recovery_rate, cfg.auto.target_rate, p.m
                            )));
                        }
                    }
                }
            }
        }
        Cmd::Scaling { r, n, trials, d, t, m, seed, noise, out, json } => {
            let mut cfg = ScalingConfig::new(r, n);
            cfg.trials = trials;
            cfg.d = d;
            cfg.t = t;
            cfg.m = m;
            cfg.seed = seed;
            cfg.noise = noise_mode(noise);
            let report = scaling_report(&cfg)?;
            let csv = report.to_csv();
            match out {
                Some(p) => fs::write(p, &csv).map_err(Error::from)?,
                None => print!("{csv}"),
            }
            eprintln!(
                "slopes: features {:.2}, classical {:.2}, grover {:.2}, quantum total {:.2}",
                report.slopes.feature_count,
                report.slopes.classical_ops,
                report.slopes.grover_iterations,
                report.slopes.quantum_total
            );
            if let Some(p) = json {
                emit(&serde_json::to_value(&report).map_err(Error::from)?, Some(&p))?;
            }
        }
        Cmd::Report { input } => {
            let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&input).map_err(Error::from)?)
                .map_err(Error::from)?;
            print_report(&value);
        }
    }
    Ok(())
}

fn print_report(v: &serde_json::Value) {
    let Some(curve) = v.get("curve").and_then(|c| c.as_array()) else {
        println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
        return;
    };
    println!("{:>8} {:>8} {:>10} {:>8} {:>8} {:>8}", "T", "M", "pipeline", "exact", "prec", "recall");
    for p in curve {
        for name in ["classical", "quantum"] {
            if let Some(m) = p.get(name).filter(|m| !m.is_null()) {
                println!(
                    "{:>8} {:>8} {:>10} {:>8.3} {:>8.3} {:>8.3}",
                    p["t"].as_u64().unwrap_or(0),
                    p["m"].as_u64().unwrap_or(0),
                    name,
                    m["exact_recovery_rate"].as_f64().unwrap_or(f64::NAN),
                    m["precision"].as_f64().unwrap_or(f64::NAN),
                    m["recall"].as_f64().unwrap_or(f64::NAN)
                );
            }
        }
    }
    if let Some(t) = v.get("theory_m_unit_constants") {
        println!("sample bound with unit constants: {t}");
    }
}
