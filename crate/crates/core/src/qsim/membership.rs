//! Reversible binary-search set membership over a sorted QRAM, simulated on
//! computational basis states.
//!
//! Registers: input `j`, address `A` (`m` bits, `A_1` most significant),
//! value `B`, comparator `C`, and the result qubit. Every gate is a
//! permutation of basis states (X, XOR-query `B ^= S[A]`, XOR-comparator
//! `C ^= T(j, B)`, swap), so the whole circuit is too.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

use super::ledger::QueryLedger;
use super::qram::SortedQram;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SimRegister {
    pub j: u64,
    pub a: u64,
    pub b: u64,
    pub c: bool,
    pub result: bool,
}

impl SimRegister {
    /// Input `j` with ancillas in their start state (`A` all ones, the rest zero).
    pub fn prepared(j: u64, qram: &SortedQram) -> Self {
        Self {
            j,
            a: (1u64 << qram.address_bits()) - 1,
            b: 0,
            c: false,
            result: false,
        }
    }
}

/// Comparator: go right iff the probed value is a real entry below `j`.
/// Zero padding always sends the search left.
#[inline]
fn compare(j: u64, b: u64) -> bool {
    b != 0 && j > b
}

struct Circuit<'a> {
    qram: &'a SortedQram,
    queries: u64,
}

impl Circuit<'_> {
    #[inline]
    fn query(&mut self, reg: &mut SimRegister) {
        reg.b ^= self.qram.query(reg.a);
        self.queries += 1;
    }

    #[inline]
    fn swap_bit(reg: &mut SimRegister, bit: u64) {
        let a_bit = reg.a & bit != 0;
        if a_bit != reg.c {
            reg.a ^= bit;
            reg.c = a_bit;
        }
    }

    fn run(&mut self, reg: &mut SimRegister, mut trace: Option<&mut Vec<u64>>) {
        let m = self.qram.address_bits();
        // (1)-(2): decide address bits from the most significant down
        for t in 1..=m {
            let bit = 1u64 << (m - t);
            reg.a ^= bit;
            self.query(reg);
            reg.c ^= compare(reg.j, reg.b);
            self.query(reg);
            Self::swap_bit(reg, bit);
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(reg.a);
            }
        }
        // (3): look up the final address and test equality
        self.query(reg);
        reg.result ^= reg.b == reg.j;
        self.query(reg);
        // (4): uncompute the address
        for t in (1..=m).rev() {
            let bit = 1u64 << (m - t);
            Self::swap_bit(reg, bit);
            self.query(reg);
            reg.c ^= compare(reg.j, reg.b);
            self.query(reg);
            reg.a ^= bit;
        }
    }
}

/// Applies the circuit to an arbitrary basis state and returns the QRAM query count.
pub fn apply(qram: &SortedQram, reg: &mut SimRegister) -> u64 {
    let mut c = Circuit { qram, queries: 0 };
    c.run(reg, None);
    c.queries
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MembershipTrace {
    pub member: bool,
    /// Address register after each binary-search step.
    pub addresses: Vec<u64>,
    pub queries: u64,
}

/// Membership of `j ≥ 1`, checking that every ancilla returns to its start value.
pub fn set_membership_traced(qram: &SortedQram, j: u64) -> Result<MembershipTrace> {
    if j == 0 {
        return Err(invalid!("0 is the padding sentinel and not a valid key"));
    }
    let start = SimRegister::prepared(j, qram);
    let mut reg = start;
    let mut addresses = Vec::with_capacity(qram.address_bits() as usize);
    let mut c = Circuit { qram, queries: 0 };
    c.run(&mut reg, Some(&mut addresses));
    assert_eq!(
        (reg.j, reg.a, reg.b, reg.c),
        (start.j, start.a, start.b, start.c),
        "ancillas not restored"
    );
    assert_eq!(c.queries, 4 * u64::from(qram.address_bits()) + 2);
    Ok(MembershipTrace {
        member: reg.result,
        addresses,
        queries: c.queries,
    })
}

/// Membership bit, charging the QRAM queries to `ledger`.
pub fn set_membership(qram: &SortedQram, j: u64, ledger: &mut QueryLedger) -> Result<bool> {
    if j == 0 {
        return Err(invalid!("0 is the padding sentinel and not a valid key"));
    }
    let start = SimRegister::prepared(j, qram);
    let mut reg = start;
    let queries = apply(qram, &mut reg);
    debug_assert_eq!((reg.a, reg.b, reg.c), (start.a, start.b, start.c));
    ledger.qram(queries, qram.query_cost());
    Ok(reg.result)
}

/// Membership against an optional QRAM; an empty set contains nothing.
pub fn member_or_empty(qram: Option<&SortedQram>, j: u64, ledger: &mut QueryLedger) -> Result<bool> {
    match qram {
        Some(q) => set_membership(q, j, ledger),
        None => Ok(false),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SuperpositionReport {
    pub states: usize,
    pub bijective: bool,
    pub involution: bool,
    /// Prepared inputs whose result bit disagreed with the stored set.
    pub wrong_bits: usize,
}

impl SuperpositionReport {
    pub fn ok(&self) -> bool {
        self.bijective && self.involution && self.wrong_bits == 0
    }
}

/// Runs the circuit on every basis state of the register space (inputs and
/// values below `2^key_bits`) and checks that it acts as a permutation that is
/// its own inverse, flipping the result bit exactly for members.
pub fn superposition_check(qram: &SortedQram) -> SuperpositionReport {
    let vals = 1u64 << qram.key_bits();
    let addrs = 1u64 << qram.address_bits();
    let members: HashSet<u64> = qram.entries().iter().copied().filter(|&v| v != 0).collect();
    let mut seen = HashSet::new();
    let mut report = SuperpositionReport {
        bijective: true,
        involution: true,
        ..Default::default()
    };
    for j in 0..vals {
        for a in 0..addrs {
            for b in 0..vals {
                for bits in 0..4u8 {
                    let input = SimRegister {
                        j,
                        a,
                        b,
                        c: bits & 1 != 0,
                        result: bits & 2 != 0,
                    };
                    let mut out = input;
                    apply(qram, &mut out);
                    report.states += 1;
                    if !seen.insert(out) {
                        report.bijective = false;
                    }
                    let mut back = out;
                    apply(qram, &mut back);
                    if back != input {
                        report.involution = false;
                    }
                    let prepared = SimRegister::prepared(j, qram);
                    if input == prepared && j != 0 && out.result != members.contains(&j) {
                        report.wrong_bits += 1;
                    }
                }
            }
        }
    }
    report
}

/// Involution check on `samples` random basis states; for register spaces too
/// large to enumerate.
pub fn sampled_involution_check(qram: &SortedQram, samples: usize, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = 1u64 << qram.key_bits();
    let addrs = 1u64 << qram.address_bits();
    (0..samples).all(|_| {
        let input = SimRegister {
            j: rng.gen_range(0..vals),
            a: rng.gen_range(0..addrs),
            b: rng.gen_range(0..vals),
            c: rng.gen(),
            result: rng.gen(),
        };
        let mut out = input;
        apply(qram, &mut out);
        apply(qram, &mut out);
        out == input
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> SortedQram {
        SortedQram::build(&[1, 3, 5], 8).unwrap()
    }

    #[test]
    fn worked_example_trace() {
        let q = example();
        let t = set_membership_traced(&q, 3).unwrap();
        assert!(t.member);
        assert_eq!(t.addresses, vec![0b01, 0b01]);
        assert_eq!(t.queries, 10);
        assert!(!set_membership_traced(&q, 2).unwrap().member);
        // after the first step: j <= 3 sits at 01, j > 3 at 11
        for j in 1..8 {
            let t = set_membership_traced(&q, j).unwrap();
            assert_eq!(t.addresses[0], if j <= 3 { 0b01 } else { 0b11 }, "j = {j}");
            let last = match j {
                1 => 0b00,
                2 | 3 => 0b01,
                4 | 5 => 0b10,
                _ => 0b11,
            };
            assert_eq!(t.addresses[1], last, "j = {j}");
            assert_eq!(t.member, [1, 3, 5].contains(&j));
        }
    }

    #[test]
    fn zero_is_rejected() {
        assert!(set_membership_traced(&example(), 0).is_err());
        assert!(set_membership(&example(), 0, &mut QueryLedger::new()).is_err());
    }

    #[test]
    fn non_power_of_two_sets_with_padding() {
        // the largest stored value must be reachable across trailing zeros
        let q = SortedQram::build(&[1, 2, 3, 4, 5], 8).unwrap();
        assert_eq!(q.entries(), &[1, 2, 3, 4, 5, 0, 0, 0]);
        for j in 1..8 {
            assert_eq!(set_membership_traced(&q, j).unwrap().member, j <= 5, "j = {j}");
        }
    }

    #[test]
    fn ledger_counts_queries() {
        let mut l = QueryLedger::new();
        let q = SortedQram::build(&[2, 9, 11, 14, 15], 16).unwrap();
        assert!(set_membership(&q, 11, &mut l).unwrap());
        assert_eq!(l.totals().qram_queries, 4 * 3 + 2);
        assert_eq!(l.totals().cost_units, 14.0 * (4.0 + 9.0));
        assert!(!member_or_empty(None, 3, &mut l).unwrap());
        assert_eq!(l.totals().qram_queries, 14);
    }

    #[test]
    fn full_space_permutation() {
        let r = superposition_check(&example());
        assert!(r.ok(), "{r:?}");
        assert_eq!(r.states, 8 * 4 * 8 * 4);
        let r = superposition_check(&SortedQram::build(&[7, 12, 13, 40, 63], 64).unwrap());
        assert!(r.ok(), "{r:?}");
        assert!(sampled_involution_check(&SortedQram::build(&[17, 500, 900], 1024).unwrap(), 1000, 1));
    }
}
