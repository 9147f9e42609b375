//! Sample-access oracles: the per-string monomial oracle and the input map
//! that lays out `(0̄, 0̄, X, -X)` for the quantum Sparsitron.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Result;
use crate::learn::build_features;
use crate::poly::Monomial;
use crate::sampler::SampleSet;
use crate::strings::{all_strings, member_h, IndexString, SetFamily};

use super::ledger::QueryLedger;
use super::membership::member_or_empty;
use super::qram::SortedQram;

/// `Z^{(m)}_S`: product of `Z_{j_k}^{(m)}` over the nonzero positions of `S`,
/// position by position (so repeated entries square out). Charges one
/// sample-access query per position.
pub fn monomial_oracle(samples: &SampleSet, m: usize, s: &IndexString, ledger: &mut QueryLedger) -> i8 {
    ledger.sample_oracle(s.len() as u64);
    s.entries()
        .iter()
        .filter(|&&j| j != 0)
        .fold(1i8, |acc, &j| acc * samples.value(m, j))
}

/// Basis-state outcome of the input map on `|0⟩|+⟩|S⟩|0̄⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputBranches {
    /// `S ∉ H_l ∪ W_l`: the state is untouched, value register stays `0̄`.
    Unchanged,
    /// `(|1⟩|0⟩|S⟩|Z⟩ + |1⟩|1⟩|S⟩|-Z⟩)/√2`, stored as `(Z, -Z)`.
    Pair(i8, i8),
}

/// Applies the flag (`H_l ∪ W_l` membership), the controlled monomial oracle,
/// and the controlled sign to one string.
pub fn input_map(
    family: &SetFamily,
    w_qram: Option<&SortedQram>,
    samples: &SampleSet,
    m: usize,
    s: &IndexString,
    ledger: &mut QueryLedger,
) -> Result<InputBranches> {
    let key = s.key(family.n);
    let flag = member_h(s, family.u, family.l) || (key != 0 && member_or_empty(w_qram, key, ledger)?);
    if !flag {
        return Ok(InputBranches::Unchanged);
    }
    let z = monomial_oracle(samples, m, s, ledger);
    Ok(InputBranches::Pair(z, -z))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InputReport {
    pub strings: usize,
    pub flagged: usize,
    pub zero_entries: usize,
    /// Flagged strings whose `+` branch differs from the classical feature value.
    pub mismatches: usize,
    /// Flagged branches reproduce `(X, -X)` as a multiset and every other
    /// string contributes two zeros.
    pub assembled_matches: bool,
}

/// Runs the input map over every string and compares the assembled vector
/// with the classical level-`l` feature vector of sample `m`.
pub fn input_unitary_check(family: &SetFamily, samples: &SampleSet, m: usize) -> Result<InputReport> {
    let mut ledger = QueryLedger::new();
    let keys = family.keys(&family.w);
    let w_qram = if keys.is_empty() {
        None
    } else {
        Some(SortedQram::build(&keys, crate::strings::string_space(family.n, family.r - 1)?)?)
    };
    let w_monos: BTreeSet<Monomial> = family.w.iter().map(IndexString::to_subset).collect();
    let z = samples.assignment(m);
    let features = build_features(&z, family.u, family.l, &w_monos)?;
    let mut monos = crate::learn::level_monomials(family.n, family.u, family.l);
    monos.extend(w_monos.iter().cloned());
    let classical: BTreeMap<Monomial, f64> = monos.into_iter().zip(features.iter().copied()).collect();

    let mut report = InputReport::default();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for s in all_strings(family.n, family.r - 1) {
        report.strings += 1;
        match input_map(family, w_qram.as_ref(), samples, m, &s, &mut ledger)? {
            InputBranches::Unchanged => report.zero_entries += 2,
            InputBranches::Pair(a, b) => {
                report.flagged += 1;
                if classical.get(&s.to_subset()) != Some(&f64::from(a)) {
                    report.mismatches += 1;
                }
                plus.push(f64::from(a));
                minus.push(f64::from(b));
            }
        }
    }
    // every classical feature must be hit exactly once
    let mut assembled: Vec<f64> = plus.iter().chain(&minus).copied().collect();
    let mut expected: Vec<f64> = features.iter().copied().chain(features.iter().map(|v| -v)).collect();
    assembled.sort_by(f64::total_cmp);
    expected.sort_by(f64::total_cmp);
    report.assembled_matches = report.flagged == features.len()
        && assembled == expected
        && report.zero_entries == 2 * (report.strings - report.flagged);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::mono;
    use crate::strings::build_jwf;

    fn samples() -> SampleSet {
        SampleSet::from_assignments(
            4,
            0,
            &[vec![1, -1, 1, -1], vec![-1, -1, -1, 1], vec![1, 1, -1, 1]],
        )
        .unwrap()
    }

    #[test]
    fn monomial_oracle_examples() {
        let s = samples();
        let mut l = QueryLedger::new();
        assert_eq!(monomial_oracle(&s, 0, &IndexString::new(vec![0, 0]), &mut l), 1);
        assert_eq!(monomial_oracle(&s, 0, &IndexString::new(vec![2, 0]), &mut l), -1);
        assert_eq!(monomial_oracle(&s, 0, &IndexString::new(vec![3, 3]), &mut l), 1);
        assert_eq!(monomial_oracle(&s, 1, &IndexString::new(vec![2, 3]), &mut l), 1);
        assert_eq!(l.totals().sample_oracle_queries, 8);
    }

    #[test]
    fn input_map_cases() {
        let s = samples();
        let fam = build_jwf(&[mono(&[2, 3])].into_iter().collect(), 4, 1, 1, 3).unwrap();
        let q = SortedQram::build(&fam.keys(&fam.w), 25).unwrap();
        let mut l = QueryLedger::new();
        let out = input_map(&fam, Some(&q), &s, 0, &IndexString::new(vec![1, 0]), &mut l).unwrap();
        assert_eq!(out, InputBranches::Unchanged);
        let out = input_map(&fam, Some(&q), &s, 0, &IndexString::new(vec![3, 2]), &mut l).unwrap();
        assert_eq!(out, InputBranches::Unchanged);
        let out = input_map(&fam, Some(&q), &s, 0, &IndexString::new(vec![2, 0]), &mut l).unwrap();
        assert_eq!(out, InputBranches::Pair(-1, 1));
        let out = input_map(&fam, Some(&q), &s, 0, &IndexString::new(vec![2, 3]), &mut l).unwrap();
        assert_eq!(out, InputBranches::Pair(-1, 1));
    }

    #[test]
    fn assembled_input_matches_classical_features() {
        let s = samples();
        for (found, l) in [
            (BTreeSet::new(), 2),
            (BTreeSet::new(), 1),
            ([mono(&[2, 3])].into_iter().collect(), 1),
            ([mono(&[2, 4]), mono(&[3, 4])].into_iter().collect(), 1),
        ] {
            let fam = build_jwf(&found, 4, 1, l, 3).unwrap();
            for m in 0..s.len() {
                let r = input_unitary_check(&fam, &s, m).unwrap();
                assert_eq!(r.mismatches, 0);
                assert!(r.assembled_matches, "{r:?}");
                assert_eq!(r.strings, 25);
            }
        }
    }
}
