use std::sync::Mutex;

use serde::{Deserialize, Serialize};

/// Per-million-token prices. Defaults are the Qwen-long list prices in RMB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

impl Default for Pricing {
    fn default() -> Self {
        Self {
            input_per_million: 0.5,
            output_per_million: 2.0,
        }
    }
}

impl Pricing {
    pub fn cost(&self, input_tokens: u64, output_tokens: u64) -> f64 {
        (input_tokens as f64 * self.input_per_million
            + output_tokens as f64 * self.output_per_million)
            / 1_000_000.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub step: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Counts were estimated from text length because the backend did not
    /// report usage.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub estimated: bool,
}

/// Append-only record of billed calls. Appends are safe from several
/// threads; totals should be read once the writers are done.
#[derive(Debug, Default)]
pub struct UsageLedger {
    pricing: Pricing,
    entries: Mutex<Vec<LedgerEntry>>,
}

impl UsageLedger {
    pub fn new(pricing: Pricing) -> Self {
        Self {
            pricing,
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn pricing(&self) -> Pricing {
        self.pricing
    }

    pub fn record(&self, entry: LedgerEntry) {
        self.entries.lock().expect("ledger poisoned").push(entry);
    }

    pub fn charge(&self, step: impl Into<String>, input_tokens: u64, output_tokens: u64) {
        self.record(LedgerEntry {
            step: step.into(),
            input_tokens,
            output_tokens,
            estimated: false,
        });
    }

    pub fn entries(&self) -> Vec<LedgerEntry> {
        self.entries.lock().expect("ledger poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("ledger poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends every entry of `other`, in order.
    pub fn absorb(&self, other: &UsageLedger) {
        let theirs = other.entries();
        self.entries
            .lock()
            .expect("ledger poisoned")
            .extend(theirs);
    }

    pub fn input_tokens(&self) -> u64 {
        self.entries().iter().map(|e| e.input_tokens).sum()
    }

    pub fn output_tokens(&self) -> u64 {
        self.entries().iter().map(|e| e.output_tokens).sum()
    }

    pub fn total_cost(&self) -> f64 {
        let entries = self.entries.lock().expect("ledger poisoned");
        let input: u64 = entries.iter().map(|e| e.input_tokens).sum();
        let output: u64 = entries.iter().map(|e| e.output_tokens).sum();
        self.pricing.cost(input, output)
    }
}
