//! The Sparsitron: multiplicative weights over features with a sigmoid link,
//! selecting the best iterate on a held-out validation split.
//!
//! Weights are tracked through their cumulative losses `L_j`, so that
//! `w_j = β^{L_j}` never underflows; normalized weights are recovered with a
//! max shift. The same engine serves the quantum simulation, which perturbs
//! the inner products through [`InnerProductNoise`].

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::sampler::sigmoid;

/// Iterates whose validation risk is evaluated together in one matrix product.
const RISK_BLOCK: usize = 256;

/// One example `(x, y)` with `x ∈ [-1, 1]^N` and `y ∈ {0, 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: f64,
}

/// How raw feature vectors map onto the Hedge experts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// One expert per feature.
    Plain,
    /// Experts for `(x, -x, 0)`, so signed weights fit a probability simplex.
    Enlarged,
}

impl Layout {
    pub fn experts(self, features: usize) -> usize {
        match self {
            Layout::Plain => features,
            Layout::Enlarged => 2 * features + 1,
        }
    }
}

/// `Σ_j β^{L_j}` stored as `exp(log_scale) · rel_norm` with `log_scale = max_j L_j ln β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightNorm {
    pub log_scale: f64,
    pub rel_norm: f64,
}

impl WeightNorm {
    pub fn from_cum_loss(cum_loss: &[f64], ln_beta: f64) -> Self {
        let log_scale = cum_loss
            .iter()
            .map(|&l| l * ln_beta)
            .fold(f64::NEG_INFINITY, f64::max);
        let rel_norm = cum_loss
            .iter()
            .map(|&l| (l * ln_beta - log_scale).exp())
            .sum();
        Self {
            log_scale,
            rel_norm,
        }
    }

    /// Natural log of the norm itself.
    pub fn ln(&self) -> f64 {
        self.log_scale + self.rel_norm.ln()
    }
}

/// `scale · β^{cum_loss} / Γ`, the single expression both the classical and
/// the reconstructed quantum coefficients go through.
#[inline]
pub fn scaled_weight(cum_loss: f64, ln_beta: f64, norm: WeightNorm, scale: f64) -> f64 {
    scale * ((cum_loss * ln_beta - norm.log_scale).exp() / norm.rel_norm)
}

/// Loss of an expert whose value on the current example is `x`, after the
/// prediction `pred` for label `y`.
#[inline]
pub fn expert_loss(pred: f64, y: f64, x: f64) -> f64 {
    0.5 * (1.0 + (pred - y) * x)
}

/// Learning rate `β = 1 - sqrt(log2 N / T)`, clamped to 1/2 when that is not positive.
pub fn learning_rate(experts: usize, steps: usize) -> (f64, bool) {
    let beta = 1.0 - ((experts as f64).log2() / steps as f64).sqrt();
    if beta <= 0.0 {
        (0.5, true)
    } else {
        (beta, false)
    }
}

/// Hook for perturbing the inner products the algorithm consumes.
pub trait InnerProductNoise {
    /// Training inner product `α^{(t)} · x̃^{(t)}` used in the update at step `t` (1-based).
    fn training(&mut self, t: usize, exact: f64) -> f64;
    /// Validation inner products `α^{(t)} · x̃^{(i)}` for every held-out `i`, in place.
    fn validation(&mut self, t: usize, values: &mut [f64]);
    /// The weight norm at the selected iterate.
    fn norm(&mut self, exact: WeightNorm) -> WeightNorm {
        exact
    }
}

/// Exact arithmetic; the classical algorithm.
#[derive(Clone, Copy, Debug, Default)]
pub struct Exact;

impl InnerProductNoise for Exact {
    fn training(&mut self, _t: usize, exact: f64) -> f64 {
        exact
    }
    fn validation(&mut self, _t: usize, _values: &mut [f64]) {}
}

#[derive(Clone, Copy)]
pub struct SparsitronParams {
    /// ℓ₁ bound on the output vector.
    pub lambda: f64,
    pub link: fn(f64) -> f64,
    /// Keep every normalized weight vector (memory `T · N`).
    pub record_trace: bool,
}

impl SparsitronParams {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            link: sigmoid,
            record_trace: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsitronResult {
    /// `λ α^{(t*)}` over the experts.
    pub v: Vec<f64>,
    /// Selected iteration, 1-based.
    pub t_star: usize,
    /// Validation risk of `λ α^{(t)}` for `t = 1..=T`.
    pub risks: Vec<f64>,
    pub beta: f64,
    pub beta_clamped: bool,
    /// Training inner products `h^{(t)}` as consumed by the updates.
    pub h: Vec<f64>,
    /// Cumulative expert losses before step `t*`.
    pub cum_loss: Vec<f64>,
    /// Weight norm at `t*` as reported by the noise hook.
    pub norm: WeightNorm,
    pub trace: Option<Vec<Vec<f64>>>,
}

/// Validates examples and runs the plain Sparsitron on the first `t` for
/// training and the next `m` for validation.
pub fn sparsitron(t: usize, m: usize, lambda: f64, data: &[LabeledExample]) -> Result<SparsitronResult> {
    let (x, y) = to_arrays(t, m, data)?;
    run(
        x.view(),
        &y,
        t,
        Layout::Plain,
        &SparsitronParams::new(lambda),
        &mut Exact,
    )
}

/// The same run on `(x, -x, 0)` experts; fold the result with [`fold`].
pub fn sparsitron_enlarged(
    t: usize,
    m: usize,
    lambda: f64,
    data: &[LabeledExample],
) -> Result<SparsitronResult> {
    let (x, y) = to_arrays(t, m, data)?;
    run(
        x.view(),
        &y,
        t,
        Layout::Enlarged,
        &SparsitronParams::new(lambda),
        &mut Exact,
    )
}

fn to_arrays(t: usize, m: usize, data: &[LabeledExample]) -> Result<(Array2<f64>, Vec<f64>)> {
    if data.len() != t + m {
        return Err(invalid!("expected T + M = {} examples, got {}", t + m, data.len()));
    }
    let dim = data.first().map_or(0, |e| e.x.len());
    let mut x = Array2::zeros((data.len(), dim));
    let mut y = Vec::with_capacity(data.len());
    for (i, e) in data.iter().enumerate() {
        if e.x.len() != dim {
            return Err(invalid!("example {i} has dimension {}, expected {dim}", e.x.len()));
        }
        if e.x.iter().any(|v| !(v.abs() <= 1.0)) {
            return Err(invalid!("example {i} has a feature outside [-1, 1]"));
        }
        if e.y != 0.0 && e.y != 1.0 {
            return Err(invalid!("example {i} has label {}, expected 0 or 1", e.y));
        }
        x.row_mut(i).assign(&ArrayView1::from(&e.x[..]));
        y.push(e.y);
    }
    Ok((x, y))
}

/// `(x, -x, 0)`.
pub fn enlarge(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.len() + 1);
    out.extend_from_slice(x);
    out.extend(x.iter().map(|v| -v));
    out.push(0.0);
    out
}

/// Maps a nonnegative vector of length `2N + 1` to `v₁ - v₂` of length `N`.
pub fn fold(v_tilde: &[f64]) -> Result<Vec<f64>> {
    if v_tilde.len() % 2 != 1 {
        return Err(invalid!("enlarged vector must have odd length, got {}", v_tilde.len()));
    }
    if v_tilde.iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid!("enlarged vector has a negative entry"));
    }
    let k = v_tilde.len() / 2;
    Ok((0..k).map(|j| v_tilde[j] - v_tilde[k + j]).collect())
}

/// Normalized weights from cumulative losses.
fn normalized(cum_loss: &[f64], ln_beta: f64, norm: WeightNorm, out: &mut [f64]) {
    for (a, &l) in out.iter_mut().zip(cum_loss) {
        *a = scaled_weight(l, ln_beta, norm, 1.0);
    }
}

/// Collapses expert weights to the raw-feature vector whose dot product with
/// `x` equals the expert-weighted sum over `x̃`.
fn effective(alpha: &[f64], layout: Layout, k: usize, out: &mut [f64]) {
    match layout {
        Layout::Plain => out.copy_from_slice(alpha),
        Layout::Enlarged => {
            for j in 0..k {
                out[j] = alpha[j] - alpha[k + j];
            }
        }
    }
}

/// Core loop over the rows of `x`: the first `t` rows train, the rest validate.
pub fn run(
    x: ArrayView2<f64>,
    y: &[f64],
    t: usize,
    layout: Layout,
    params: &SparsitronParams,
    noise: &mut dyn InnerProductNoise,
) -> Result<SparsitronResult> {
    let rows = x.nrows();
    if y.len() != rows {
        return Err(invalid!("{} labels for {rows} examples", y.len()));
    }
    if t < 2 {
        return Err(invalid!("need at least 2 training examples, got {t}"));
    }
    if t >= rows {
        return Err(invalid!("need at least one validation example ({t} of {rows} rows used for training)"));
    }
    if !(params.lambda > 0.0) {
        return Err(invalid!("lambda must be positive, got {}", params.lambda));
    }
    let k = x.ncols();
    let n_exp = layout.experts(k);
    if n_exp == 0 {
        return Err(invalid!("no features"));
    }
    let (beta, beta_clamped) = learning_rate(n_exp, t);
    let ln_beta = beta.ln();
    let link = params.link;
    let lambda = params.lambda;
    let val = x.slice(s![t.., ..]);
    let y_val = &y[t..];
    let m = val.nrows();

    let mut cum = vec![0.0; n_exp];
    let mut alpha = vec![0.0; n_exp];
    let mut h_seq = Vec::with_capacity(t);
    let mut risks = Vec::with_capacity(t);
    let mut trace = params.record_trace.then(Vec::new);

    // pending block of iterates awaiting risk evaluation
    let mut block_eff = Array2::<f64>::zeros((RISK_BLOCK.min(t), k));
    let mut block_cum: Vec<Vec<f64>> = Vec::with_capacity(RISK_BLOCK);
    let mut block_start = 1;
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    let flush = |block_eff: &Array2<f64>,
                     block_cum: &mut Vec<Vec<f64>>,
                     start: usize,
                     risks: &mut Vec<f64>,
                     best: &mut Option<(f64, usize, Vec<f64>)>,
                     noise: &mut dyn InnerProductNoise| {
        let used = block_cum.len();
        let z = block_eff.slice(s![..used, ..]).dot(&val.t());
        let mut row = vec![0.0; m];
        for (b, zrow) in z.axis_iter(Axis(0)).enumerate() {
            let step = start + b;
            row.iter_mut().zip(zrow.iter()).for_each(|(r, &v)| *r = v);
            noise.validation(step, &mut row);
            let risk = row
                .iter()
                .zip(y_val)
                .map(|(&zi, &yi)| {
                    let d = link(lambda * zi) - yi;
                    d * d
                })
                .sum::<f64>()
                / m as f64;
            risks.push(risk);
            if best.as_ref().map_or(true, |(r, _, _)| risk < *r) {
                *best = Some((risk, step, std::mem::take(&mut block_cum[b])));
            }
        }
        block_cum.clear();
    };

    let mut eff = vec![0.0; k];
    for step in 1..=t {
        let norm = WeightNorm::from_cum_loss(&cum, ln_beta);
        normalized(&cum, ln_beta, norm, &mut alpha);
        effective(&alpha, layout, k, &mut eff);
        if let Some(tr) = trace.as_mut() {
            tr.push(alpha.clone());
        }
        let xt = x.row(step - 1);
        let exact_h: f64 = eff.iter().zip(xt.iter()).map(|(a, b)| a * b).sum();
        let h = noise.training(step, exact_h);
        h_seq.push(h);

        let b = block_cum.len();
        block_eff.row_mut(b).assign(&ArrayView1::from(&eff[..]));
        block_cum.push(cum.clone());
        if block_cum.len() == block_eff.nrows() || step == t {
            flush(&block_eff, &mut block_cum, block_start, &mut risks, &mut best, noise);
            block_start = step + 1;
        }

        let pred = link(lambda * h);
        let yt = y[step - 1];
        match layout {
            Layout::Plain => {
                for (c, &xj) in cum.iter_mut().zip(xt.iter()) {
                    *c += expert_loss(pred, yt, xj);
                }
            }
            Layout::Enlarged => {
                for (j, &xj) in xt.iter().enumerate() {
                    cum[j] += expert_loss(pred, yt, xj);
                    cum[k + j] += expert_loss(pred, yt, -xj);
                }
                cum[2 * k] += expert_loss(pred, yt, 0.0);
            }
        }
    }

    let (_, t_star, cum_star) = best.expect("at least one iterate");
    let exact_norm = WeightNorm::from_cum_loss(&cum_star, ln_beta);
    let v = cum_star
        .iter()
        .map(|&l| scaled_weight(l, ln_beta, exact_norm, lambda))
        .collect();
    let norm = noise.norm(exact_norm);
    Ok(SparsitronResult {
        v,
        t_star,
        risks,
        beta,
        beta_clamped,
        h: h_seq,
        cum_loss: cum_star,
        norm,
        trace,
    })
}
