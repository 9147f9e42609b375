//! Query and cost tallies for the simulated quantum routines.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Tally {
    pub qram_queries: u64,
    pub sample_oracle_queries: u64,
    pub grover_iterations: u64,
    /// Charged run time of the quantum Sparsitron calls.
    pub sparsitron_cost_units: f64,
    /// Everything else, in the unit model of QRAM/oracle/Grover costs.
    pub cost_units: f64,
}

impl Tally {
    pub fn add(&mut self, other: &Tally) {
        self.qram_queries += other.qram_queries;
        self.sample_oracle_queries += other.sample_oracle_queries;
        self.grover_iterations += other.grover_iterations;
        self.sparsitron_cost_units += other.sparsitron_cost_units;
        self.cost_units += other.cost_units;
    }

    pub fn total_cost(&self) -> f64 {
        self.sparsitron_cost_units + self.cost_units
    }
}

/// Counters only ever increase; every charge lands both in the totals and in
/// the currently active phase.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryLedger {
    totals: Tally,
    phases: BTreeMap<String, Tally>,
    #[serde(skip)]
    phase: String,
}

impl Default for QueryLedger {
    fn default() -> Self {
        Self::new()
    }
}

impl QueryLedger {
    pub fn new() -> Self {
        Self {
            totals: Tally::default(),
            phases: BTreeMap::new(),
            phase: "default".to_string(),
        }
    }

    pub fn set_phase(&mut self, name: &str) {
        self.phase = name.to_string();
    }

    pub fn phase_name(&self) -> &str {
        &self.phase
    }

    fn charge(&mut self, delta: Tally) {
        self.totals.add(&delta);
        self.phases.entry(self.phase.clone()).or_default().add(&delta);
    }

    pub fn qram(&mut self, queries: u64, unit_cost: f64) {
        self.charge(Tally {
            qram_queries: queries,
            cost_units: queries as f64 * unit_cost,
            ..Tally::default()
        });
    }

    pub fn sample_oracle(&mut self, queries: u64) {
        self.charge(Tally {
            sample_oracle_queries: queries,
            cost_units: queries as f64,
            ..Tally::default()
        });
    }

    pub fn grover(&mut self, iterations: u64, iteration_cost: f64) {
        self.charge(Tally {
            grover_iterations: iterations,
            cost_units: iterations as f64 * iteration_cost,
            ..Tally::default()
        });
    }

    pub fn sparsitron(&mut self, units: f64) {
        self.charge(Tally {
            sparsitron_cost_units: units,
            ..Tally::default()
        });
    }

    /// Cost without a query count, e.g. building a QRAM.
    pub fn units(&mut self, units: f64) {
        self.charge(Tally {
            cost_units: units,
            ..Tally::default()
        });
    }

    pub fn merge(&mut self, other: &QueryLedger) {
        self.totals.add(&other.totals);
        for (name, t) in &other.phases {
            self.phases.entry(name.clone()).or_default().add(t);
        }
    }

    pub fn totals(&self) -> &Tally {
        &self.totals
    }

    pub fn phase(&self, name: &str) -> Tally {
        self.phases.get(name).cloned().unwrap_or_default()
    }

    pub fn phases(&self) -> &BTreeMap<String, Tally> {
        &self.phases
    }
}
