//! Sampling from `P[Z = z] ∝ exp(p(z))`.
//!
//! Exact sampling enumerates the full `2^n` table; Gibbs sampling resamples
//! one site at a time from its conditional `σ(±2 ∂_i p(z))`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::poly::{check_assignment, pack, unpack, Monomial, MrfModel, MultilinearPolynomial};

/// Largest `n` the enumeration-based routines accept.
pub const MAX_EXACT_VERTICES: usize = 20;

const MAGIC: &[u8; 8] = b"QMRFSMP1";

/// `1 / (1 + e^{-x})`, computed without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `M` assignments, each packed into a `u64` (bit `i - 1` set iff `z_i = +1`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleSet {
    n: usize,
    seed: u64,
    rows: Vec<u64>,
}

impl SampleSet {
    pub fn new(n: usize, seed: u64, rows: Vec<u64>) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(Error::UnsupportedSize(format!("n = {n} outside 1..=64")));
        }
        let spare = if n == 64 { 0 } else { !0u64 << n };
        if rows.iter().any(|r| r & spare != 0) {
            return Err(invalid!("sample rows have bits set beyond n = {n}"));
        }
        Ok(Self { n, seed, rows })
    }

    pub fn from_assignments(n: usize, seed: u64, rows: &[Vec<i8>]) -> Result<Self> {
        let mut packed = Vec::with_capacity(rows.len());
        for z in rows {
            check_assignment(n, z)?;
            packed.push(pack(z));
        }
        Self::new(n, seed, packed)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[u64] {
        &self.rows
    }

    pub fn row(&self, m: usize) -> u64 {
        self.rows[m]
    }

    /// `Z_i^{(m)}` for a 1-based vertex `i`.
    pub fn value(&self, m: usize, i: usize) -> i8 {
        if self.rows[m] >> (i - 1) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn assignment(&self, m: usize) -> Vec<i8> {
        unpack(self.rows[m], self.n)
    }

    /// Label `Y = (1 - Z_u) / 2` of sample `m`.
    pub fn label(&self, m: usize, u: usize) -> f64 {
        if self.value(m, u) > 0 {
            0.0
        } else {
            1.0
        }
    }

    /// Copy holding only the first `count` samples.
    pub fn prefix(&self, count: usize) -> Self {
        Self {
            n: self.n,
            seed: self.seed,
            rows: self.rows[..count.min(self.rows.len())].to_vec(),
        }
    }

    fn row_bytes(&self) -> usize {
        self.n.div_ceil(8)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.rows.len() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        let nb = self.row_bytes();
        for r in &self.rows {
            w.write_all(&r.to_le_bytes()[..nb])?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad sample file magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        if n == 0 || n > 64 {
            return Err(Error::Format(format!("sample file declares n = {n}")));
        }
        let nb = n.div_ceil(8);
        let mut rows = Vec::with_capacity(count);
        let mut buf = vec![0u8; nb];
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            let mut full = [0u8; 8];
            full[..nb].copy_from_slice(&buf);
            rows.push(u64::from_le_bytes(full));
        }
        Self::new(n, seed, rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = BufWriter::new(f);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_binary(BufReader::new(std::fs::File::open(path)?))
    }

    /// CSV with header `z1,...,zn` and one row of `±1` values per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.n).map(|i| format!("z{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for m in 0..self.len() {
            let row: Vec<&str> = (1..=self.n)
                .map(|i| if self.value(m, i) > 0 { "1" } else { "-1" })
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads the CSV export; the seed is not part of the CSV and is set to 0.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty csv".into()))??;
        let n = header.split(',').count();
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let z: Vec<i8> = line
                .split(',')
                .map(|t| t.trim().parse::<i8>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("csv row {}: {e}", k + 1)))?;
            check_assignment(n, &z).map_err(|e| Error::Format(format!("csv row {}: {e}", k + 1)))?;
            rows.push(pack(&z));
        }
        Self::new(n, 0, rows)
    }
}

/// `Pr[Z_i = -1 | Z_{-i} = z_{-i}] = σ(-2 ∂_i p(z))`.
pub fn conditional_minus_prob(p: &MultilinearPolynomial, z: &[i8], i: usize) -> Result<f64> {
    let d = p.partial_derivative(i)?;
    Ok(sigmoid(-2.0 * d.evaluate(z)?))
}

/// Per-vertex `∂_i p` as `(mask, coeff)` pairs for packed evaluation.
struct PackedDerivatives {
    per_vertex: Vec<Vec<(u64, f64)>>,
}

impl PackedDerivatives {
    fn new(p: &MultilinearPolynomial) -> Self {
        let mut per_vertex = vec![Vec::new(); p.n()];
        for (m, &c) in p.terms() {
            for &i in m.indices() {
                per_vertex[i - 1].push((m.without(i).mask(), c));
            }
        }
        Self { per_vertex }
    }

    fn derivative(&self, i: usize, z: u64) -> f64 {
        self.per_vertex[i - 1]
            .iter()
            .map(|&(mask, c)| c * f64::from(Monomial::eval_mask(mask, z)))
            .sum()
    }
}

/// Normalized probabilities of all `2^n` assignments, indexed by packed value.
pub fn exact_table(model: &MrfModel) -> Result<Vec<f64>> {
    if model.n > MAX_EXACT_VERTICES {
        return Err(Error::UnsupportedSize(format!(
            "exact enumeration needs n <= {MAX_EXACT_VERTICES}, got {}",
            model.n
        )));
    }
    let size = 1usize << model.n;
    let masks: Vec<(u64, f64)> = model
        .poly
        .terms()
        .iter()
        .map(|(m, &c)| (m.mask(), c))
        .collect();
    let log_weights: Vec<f64> = (0..size as u64)
        .map(|z| {
            masks
                .iter()
                .map(|&(mask, c)| c * f64::from(Monomial::eval_mask(mask, z)))
                .sum()
        })
        .collect();
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// `count` i.i.d. draws by inverse-CDF over the exact table.
pub fn exact_sample(model: &MrfModel, count: usize, seed: u64) -> Result<SampleSet> {
    let probs = exact_table(model)?;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let last = cdf.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..count)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(last) as u64
        })
        .collect();
    SampleSet::new(model.n, seed, rows)
}

/// Gibbs sweep counts; defaults are `50 n` burn-in sweeps and `n` sweeps between samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GibbsSchedule {
    pub burn_in: usize,
    pub thinning: usize,
}

impl GibbsSchedule {
    pub fn default_for(n: usize) -> Self {
        Self {
            burn_in: 50 * n,
            thinning: n,
        }
    }
}

/// One sequential sweep over sites `1..=n`.
fn gibbs_sweep(d: &PackedDerivatives, n: usize, z: &mut u64, rng: &mut ChaCha8Rng) {
    for i in 1..=n {
        let minus = sigmoid(-2.0 * d.derivative(i, *z));
        let bit = 1u64 << (i - 1);
        if rng.gen::<f64>() < minus {
            *z &= !bit;
        } else {
            *z |= bit;
        }
    }
}

/// A single Gibbs chain started from a uniformly random state.
pub fn gibbs_sample(
    model: &MrfModel,
    count: usize,
    schedule: GibbsSchedule,
    seed: u64,
) -> Result<SampleSet> {
    if schedule.burn_in == 0 || schedule.thinning == 0 {
        return Err(invalid!("burn_in and thinning must be at least 1 sweep"));
    }
    let n = model.n;
    let d = PackedDerivatives::new(&model.poly);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full = if n == 64 { !0 } else { (1u64 << n) - 1 };
    let mut z = rng.gen::<u64>() & full;
    for _ in 0..schedule.burn_in {
        gibbs_sweep(&d, n, &mut z, &mut rng);
    }
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..schedule.thinning {
            gibbs_sweep(&d, n, &mut z, &mut rng);
        }
        rows.push(z);
    }
    SampleSet::new(n, seed, rows)
}

/// Applies `sweeps` extra Gibbs sweeps to each sample independently.
pub fn gibbs_refresh(model: &MrfModel, samples: &SampleSet, sweeps: usize, seed: u64) -> Result<SampleSet> {
    let d = PackedDerivatives::new(&model.poly);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = samples
        .rows()
        .iter()
        .map(|&start| {
            let mut z = start;
            for _ in 0..sweeps {
                gibbs_sweep(&d, model.n, &mut z, &mut rng);
            }
            z
        })
        .collect();
    SampleSet::new(model.n, seed, rows)
}

/// `δ = e^{-2λ} / 2`, the lower bound on every single-site conditional.
pub fn unbiasedness_floor(lambda: f64) -> f64 {
    (-2.0 * lambda).exp() / 2.0
}

/// Smallest single-site conditional probability over all sites and conditionings,
/// computed from the normalized joint table.
pub fn min_conditional_exact(model: &MrfModel) -> Result<f64> {
    let probs = exact_table(model)?;
    let mut min = f64::INFINITY;
    for i in 0..model.n {
        let bit = 1usize << i;
        for z in 0..probs.len() {
            if z & bit != 0 {
                continue;
            }
            let (minus, plus) = (probs[z], probs[z | bit]);
            let lo = minus.min(plus) / (minus + plus);
            min = min.min(lo);
        }
    }
    Ok(min)
}

/// Empirical distribution of packed samples over the `2^n` table.
pub fn empirical_table(samples: &SampleSet) -> Result<Vec<f64>> {
    if samples.n() > MAX_EXACT_VERTICES {
        return Err(Error::UnsupportedSize(format!("n = {}", samples.n())));
    }
    let mut counts = vec![0.0; 1 << samples.n()];
    for &r in samples.rows() {
        counts[r as usize] += 1.0;
    }
    let total = samples.len().max(1) as f64;
    for c in &mut counts {
        *c /= total;
    }
    Ok(counts)
}

/// Total-variation distance between two distributions on the same support.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::mono;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn model(n: usize, r: usize, terms: &[(&[usize], f64)]) -> MrfModel {
        let p = MultilinearPolynomial::from_terms(n, terms.iter().map(|(i, c)| (mono(i), *c))).unwrap();
        let lambda = (1..=n)
            .map(|u| p.partial_derivative(u).unwrap().one_norm())
            .fold(0.0, f64::max);
        MrfModel::new(p, r, 0.1, lambda).unwrap()
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize, r: usize, terms: usize) -> MrfModel {
        let t = (0..terms).map(|_| {
            let size = rng.gen_range(1..=r);
            let ids = (0..size).map(|_| rng.gen_range(1..=n));
            (Monomial::from_unsorted(ids), rng.gen_range(-1.0..1.0))
        });
        let p = MultilinearPolynomial::from_terms(n, t).unwrap();
        let lambda = (1..=n)
            .map(|u| p.partial_derivative(u).unwrap().one_norm())
            .fold(0.0, f64::max);
        MrfModel::new(p, r, 0.1, lambda).unwrap()
    }

    // conditional from unnormalized joint weights exp(p(z))
    fn brute_conditional(p: &MultilinearPolynomial, z: &[i8], i: usize) -> f64 {
        let mut minus = z.to_vec();
        minus[i - 1] = -1;
        let mut plus = z.to_vec();
        plus[i - 1] = 1;
        let wm = p.evaluate(&minus).unwrap();
        let wp = p.evaluate(&plus).unwrap();
        let m = wm.max(wp);
        let (em, ep) = ((wm - m).exp(), (wp - m).exp());
        em / (em + ep)
    }

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
        for x in [-5.0, -0.3, 0.0, 1.7, 30.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn conditional_examples() {
        let zero = MultilinearPolynomial::zero(3);
        assert_eq!(conditional_minus_prob(&zero, &[1, -1, 1], 2).unwrap(), 0.5);
        let p = MultilinearPolynomial::from_terms(1, [(mono(&[1]), 1.0)]).unwrap();
        assert!((conditional_minus_prob(&p, &[1], 1).unwrap() - 0.119202922022118).abs() < 1e-12);
        assert!(conditional_minus_prob(&p, &[1], 2).is_err());
    }

    #[test]
    fn conditional_matches_brute_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let n = rng.gen_range(2..=7);
            let m = random_model(&mut rng, n, 3, 6);
            for b in 0..(1u64 << n) {
                let z = unpack(b, n);
                for i in 1..=n {
                    let got = conditional_minus_prob(&m.poly, &z, i).unwrap();
                    assert!((got - brute_conditional(&m.poly, &z, i)).abs() < 1e-12);
                    let mut flipped = z.clone();
                    flipped[i - 1] = -flipped[i - 1];
                    assert_eq!(got, conditional_minus_prob(&m.poly, &flipped, i).unwrap());
                }
            }
        }
    }

    #[test]
    fn exact_sample_uniform_marginals() {
        let m = model(4, 2, &[]);
        let s = exact_sample(&m, 100_000, 1).unwrap();
        let sd = (1.0 / 100_000f64).sqrt();
        for i in 1..=4 {
            let mean: f64 = (0..s.len()).map(|k| s.value(k, i) as f64).sum::<f64>() / s.len() as f64;
            assert!(mean.abs() < 3.0 * sd, "site {i} mean {mean}");
        }
    }

    #[test]
    fn exact_sample_single_field_marginal() {
        let m = model(1, 1, &[(&[1], 2.0)]);
        let s = exact_sample(&m, 100_000, 2).unwrap();
        let p = sigmoid(4.0);
        let freq = (0..s.len()).filter(|&k| s.value(k, 1) > 0).count() as f64 / s.len() as f64;
        let sd = (p * (1.0 - p) / s.len() as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * sd);
    }

    #[test]
    fn exact_sample_chi_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..3 {
            let m = random_model(&mut rng, 6, 3, 5);
            let table = exact_table(&m).unwrap();
            let count = 200_000;
            let s = exact_sample(&m, count, 100 + trial).unwrap();
            let emp = empirical_table(&s).unwrap();
            let stat: f64 = table
                .iter()
                .zip(&emp)
                .map(|(p, q)| {
                    let e = p * count as f64;
                    let o = q * count as f64;
                    (o - e).powi(2) / e
                })
                .sum();
            let df = (table.len() - 1) as f64;
            let crit = ChiSquared::new(df).unwrap().inverse_cdf(0.99);
            assert!(stat < crit, "chi2 {stat} >= {crit}");
        }
    }

    #[test]
    fn exact_sample_tv_r3_n8() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_model(&mut rng, 8, 3, 8);
        let s = exact_sample(&m, 1_000_000, 9).unwrap();
        let tv = tv_distance(&exact_table(&m).unwrap(), &empirical_table(&s).unwrap());
        assert!(tv < 0.02, "tv {tv}");
    }

    #[test]
    fn exact_sample_rejects_large_n() {
        let m = model(21, 2, &[]);
        assert!(matches!(exact_sample(&m, 1, 0), Err(Error::UnsupportedSize(_))));
    }

    #[test]
    fn exact_sample_is_deterministic() {
        let m = model(5, 2, &[(&[1, 2], 0.7)]);
        assert_eq!(exact_sample(&m, 500, 3).unwrap(), exact_sample(&m, 500, 3).unwrap());
    }

    #[test]
    fn gibbs_uniform_and_rejects_zero_sweeps() {
        let m = model(5, 2, &[]);
        let s = gibbs_sample(&m, 20_000, GibbsSchedule { burn_in: 1, thinning: 1 }, 5).unwrap();
        let sd = (1.0 / 20_000f64).sqrt();
        for i in 1..=5 {
            let mean: f64 = (0..s.len()).map(|k| s.value(k, i) as f64).sum::<f64>() / s.len() as f64;
            assert!(mean.abs() < 4.0 * sd);
        }
        assert!(gibbs_sample(&m, 1, GibbsSchedule { burn_in: 0, thinning: 1 }, 0).is_err());
    }

    #[test]
    fn gibbs_tv_to_exact_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = random_model(&mut rng, 8, 3, 8);
        let s = gibbs_sample(&m, 100_000, GibbsSchedule { burn_in: 1000, thinning: 100 }, 11).unwrap();
        let tv = tv_distance(&exact_table(&m).unwrap(), &empirical_table(&s).unwrap());
        assert!(tv < 0.03, "tv {tv}");
    }

    #[test]
    fn gibbs_seeds_differ_but_agree_statistically() {
        let m = model(6, 2, &[(&[1, 2], 0.8), (&[2, 3], -0.5), (&[4], 0.3)]);
        let sched = GibbsSchedule::default_for(6);
        let a = gibbs_sample(&m, 20_000, sched, 1).unwrap();
        let b = gibbs_sample(&m, 20_000, sched, 2).unwrap();
        assert_ne!(a.rows(), b.rows());
        let tv = tv_distance(&empirical_table(&a).unwrap(), &empirical_table(&b).unwrap());
        assert!(tv < 0.05, "tv {tv}");
    }

    #[test]
    fn gibbs_default_schedule_matches_exact_for_small_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in [4, 8, 12] {
            let m = random_model(&mut rng, n, 3, n);
            let s = gibbs_sample(&m, 50_000, GibbsSchedule::default_for(n), 13).unwrap();
            let table = exact_table(&m).unwrap();
            for i in 0..n {
                let exact: f64 = table
                    .iter()
                    .enumerate()
                    .filter(|(z, _)| z >> i & 1 == 1)
                    .map(|(_, p)| p)
                    .sum();
                let freq = s.rows().iter().filter(|&&z| z >> i & 1 == 1).count() as f64 / s.len() as f64;
                assert!((freq - exact).abs() < 0.02, "n={n} site {i}: {freq} vs {exact}");
            }
        }
    }

    #[test]
    fn gibbs_preserves_exact_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let m = random_model(&mut rng, 5, 3, 6);
        let start = exact_sample(&m, 200_000, 15).unwrap();
        let moved = gibbs_refresh(&m, &start, 1, 16).unwrap();
        let table = exact_table(&m).unwrap();
        let before = tv_distance(&table, &empirical_table(&start).unwrap());
        let after = tv_distance(&table, &empirical_table(&moved).unwrap());
        assert!(after < before + 0.01, "{before} -> {after}");
    }

    #[test]
    fn unbiasedness_examples() {
        assert_eq!(unbiasedness_floor(0.0), 0.5);
        assert!((unbiasedness_floor(1.0) - 0.067667641618306).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..10 {
            let m = random_model(&mut rng, 8, 3, 8);
            assert!(min_conditional_exact(&m).unwrap() >= unbiasedness_floor(m.lambda));
        }
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let m = model(11, 2, &[(&[1, 11], 0.5)]);
        let s = exact_sample(&m, 300, 77).unwrap();
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 8 + 8 + 300 * 2);
        assert_eq!(SampleSet::read_binary(&buf[..]).unwrap(), s);

        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        let back = SampleSet::read_csv(&csv[..]).unwrap();
        assert_eq!(back.rows(), s.rows());
        assert!(SampleSet::read_binary(&b"NOTMAGIC"[..]).is_err());
    }
}
