//! Sorted QRAM: a zero-padded ascending array addressed by `m` bits.

use crate::error::{invalid, Result};

use super::ledger::QueryLedger;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortedQram {
    entries: Vec<u64>,
    stored: usize,
    address_bits: u32,
    key_bits: u32,
}

fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

impl SortedQram {
    /// Stores the distinct nonzero `values` (all `< key_space`) in ascending
    /// order, then pads with zeros to `2^m` slots, `m = max(1, ⌈log2 |values|⌉)`.
    pub fn build(values: &[u64], key_space: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid!("a sorted QRAM needs at least one value"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted[0] == 0 {
            return Err(invalid!("0 is reserved as the padding value"));
        }
        if *sorted.last().unwrap() >= key_space {
            return Err(invalid!("value {} outside the key space {key_space}", sorted.last().unwrap()));
        }
        let address_bits = ceil_log2(sorted.len() as u64).max(1);
        let stored = sorted.len();
        sorted.resize(1usize << address_bits, 0);
        Ok(Self {
            entries: sorted,
            stored,
            address_bits,
            key_bits: ceil_log2(key_space).max(1),
        })
    }

    /// Builds and charges the `|values| · log N` construction proxy.
    pub fn build_charged(values: &[u64], key_space: u64, ledger: &mut QueryLedger) -> Result<Self> {
        let q = Self::build(values, key_space)?;
        ledger.units(q.stored as f64 * f64::from(q.key_bits));
        Ok(q)
    }

    /// Value at address `k` (0-based).
    #[inline]
    pub fn query(&self, k: u64) -> u64 {
        self.entries[k as usize]
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn capacity(&self) -> usize {
        self.entries.len()
    }

    pub fn stored(&self) -> usize {
        self.stored
    }

    pub fn address_bits(&self) -> u32 {
        self.address_bits
    }

    pub fn key_bits(&self) -> u32 {
        self.key_bits
    }

    /// Cost of one query: `log N + log² K`.
    pub fn query_cost(&self) -> f64 {
        f64::from(self.key_bits) + f64::from(self.address_bits).powi(2)
    }
}
